//! Constructions for linear and polynomial targets on dictionary-sparse data.

use moe_lab::dictionary::{generate_sparse_dataset, Dictionary};
use moe_lab::linalg::{DenseMatrix, DenseTensor, RankDecomposition};
use moe_lab::rng::{item_rng, Stream};
use moe_lab::theory::{
    build_linear_moe, build_polynomial_moe, power_mlp_from_rank, projection_agreement,
    verify_linear_construction, verify_polynomial_construction, width_cap, LinearTarget,
    PolynomialTarget,
};
use rand::Rng;
use rand_distr::StandardNormal;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = item_rng(seed, Stream::Planted, 99);
    let s = 1.0 / (cols as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| s * rng.sample::<f64, _>(StandardNormal))
}

fn random_vec(d: usize, seed: u64, idx: u64) -> Vec<f64> {
    let mut rng = item_rng(seed, Stream::Planted, idx);
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

#[test]
fn linear_basis_dictionary_is_exact() {
    let dict = Dictionary::standard_basis(5).unwrap();
    let target = LinearTarget::new(random_matrix(3, 5, 1)).unwrap();
    let moe = build_linear_moe(&target, &dict, 1).unwrap();
    let mut e3 = vec![0.0; 5];
    e3[3] = 1.0;
    assert_eq!(moe.forward(&e3, Some(&[3])).unwrap(), target.a.col(3));
    assert!(moe.experts.iter().all(|e| e.d_hidden() == 1));
}

#[test]
fn identity_target_on_two_axes() {
    let dict = Dictionary::standard_basis(4).unwrap();
    let moe = build_linear_moe(
        &LinearTarget::new(DenseMatrix::identity(4)).unwrap(),
        &dict,
        2,
    )
    .unwrap();
    let h = 1.0 / 2f64.sqrt();
    let y = moe.forward(&[h, h, 0.0, 0.0], Some(&[0, 1])).unwrap();
    assert!((y[0] - h).abs() < 1e-15 && (y[1] - h).abs() < 1e-15);
    assert_eq!(&y[2..], &[0.0, 0.0]);
}

#[test]
fn linear_output_matches_projector_sum() {
    let dict = Dictionary::random(64, 32, 3).unwrap();
    let target = LinearTarget::new(random_matrix(32, 32, 4)).unwrap();
    let moe = build_linear_moe(&target, &dict, 4).unwrap();
    for s in generate_sparse_dataset(&dict, 4, 1000, 5).unwrap() {
        let y = moe.forward(&s.x, Some(&s.active)).unwrap();
        let want = target.apply(&dict.projector_sum(&s.active, &s.x));
        for (a, b) in y.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn linear_orthonormal_dictionary_has_no_residual() {
    let dict = Dictionary::random_orthonormal(32, 32, 6).unwrap();
    let target = LinearTarget::new(random_matrix(16, 32, 7)).unwrap();
    let moe = build_linear_moe(&target, &dict, 4).unwrap();
    let samples = generate_sparse_dataset(&dict, 4, 500, 8).unwrap();
    let r = verify_linear_construction(&moe, &target, &dict, &samples).unwrap();
    assert!(r.max_residual < 1e-10, "{r}");
    assert!(r.fvu < 1e-18, "{r}");
    assert_eq!(r.bound_violations, 0);
    assert_eq!(r.active_neurons, 4);
}

#[test]
fn linear_random_dictionary_identity_and_bound() {
    let dict = Dictionary::random(128, 64, 9).unwrap();
    let target = LinearTarget::new(random_matrix(64, 64, 10)).unwrap();
    let moe = build_linear_moe(&target, &dict, 3).unwrap();
    let samples = generate_sparse_dataset(&dict, 3, 2000, 11).unwrap();
    let r = verify_linear_construction(&moe, &target, &dict, &samples).unwrap();
    assert!(r.residual_identity_violation < 1e-9, "{r}");
    assert_eq!(r.bound_violations, 0, "{r}");
    assert!(r.fvu > 0.0 && r.fvu < 0.1, "{r}");
    let text = r.to_string();
    assert!(text.lines().any(|l| l.starts_with("fvu=")));
}

#[test]
fn planted_target_decompositions_are_exact() {
    let dict = Dictionary::random(16, 8, 12).unwrap();
    for p in 1..=3 {
        let t = PolynomialTarget::planted(&dict, p, 2, 13).unwrap();
        assert_eq!(t.a.order(), p + 1);
        assert!(t.per_atom.iter().all(|b| b.rank() <= 2));
    }
}

#[test]
fn mismatched_decomposition_is_rejected() {
    let dict = Dictionary::random(4, 3, 14).unwrap();
    let mut t = PolynomialTarget::planted(&dict, 2, 1, 15).unwrap();
    let mut terms = t.per_atom[1].terms().to_vec();
    terms[0][0][0] += 1e-3;
    t.per_atom[1] = RankDecomposition::new(2, 3, terms).unwrap();
    assert!(build_polynomial_moe(&t, &dict, 2).is_err());
}

#[test]
fn polynomial_p1_matches_linear_construction() {
    let dict = Dictionary::random(24, 10, 16).unwrap();
    let t = PolynomialTarget::planted(&dict, 1, 3, 17).unwrap();
    let a = DenseMatrix::from_vec(10, 10, t.a.data().to_vec()).unwrap();
    let lin = build_linear_moe(&LinearTarget::new(a).unwrap(), &dict, 3).unwrap();
    let poly = build_polynomial_moe(&t, &dict, 3).unwrap();
    for s in generate_sparse_dataset(&dict, 3, 300, 18).unwrap() {
        let a = lin.forward(&s.x, Some(&s.active)).unwrap();
        let b = poly.forward(&s.x, Some(&s.active)).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-10);
        }
    }
}

#[test]
fn single_atom_quadratic_matches_direct_formula() {
    // A = w ⊗ u ⊗ u, dictionary {u}: the expert computes k w (u.x)(u.u)(u.x) / k
    let d = 5;
    let mut u = random_vec(d, 19, 0);
    let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    u.iter_mut().for_each(|x| *x /= n);
    let w = random_vec(d, 19, 1);
    let dict = Dictionary::new(DenseMatrix::row_vector(&u)).unwrap();
    let a = DenseTensor::outer(&[&w, &u, &u]).unwrap();
    let uu: f64 = u.iter().map(|x| x * x).sum();
    let b = RankDecomposition::new(
        2,
        d,
        vec![vec![w.iter().map(|x| x * uu).collect(), u.clone()]],
    )
    .unwrap();
    let t = PolynomialTarget::new(a, vec![b], 1, &dict).unwrap();
    let moe = build_polynomial_moe(&t, &dict, 1).unwrap();
    for i in 0..20 {
        let x = random_vec(d, 20, i);
        let ux: f64 = u.iter().zip(&x).map(|(a, b)| a * b).sum();
        let y = moe.forward(&x, Some(&[0])).unwrap();
        for (yj, wj) in y.iter().zip(&w) {
            let want = wj * ux * uu * ux;
            assert!((yj - want).abs() < 1e-10 * (1.0 + want.abs()));
        }
    }
}

/// The proof's expert formula by nested loops:
/// `f_i(x)_{j1} = k sum A[j1, j2, .., jp, l] v_l x_{j2} .. x_{jp} (v . x)`.
fn brute_force_expert(a: &DenseTensor, v: &[f64], x: &[f64], k: f64) -> Vec<f64> {
    let d = a.dim();
    let order = a.order();
    let vx: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum();
    let mut out = vec![0.0; d];
    let mut idx = vec![0usize; order];
    for &entry in a.data() {
        let mut prod = entry * v[idx[order - 1]];
        for &j in &idx[1..order - 1] {
            prod *= x[j];
        }
        out[idx[0]] += k * prod * vx;
        for s in (0..order).rev() {
            idx[s] += 1;
            if idx[s] < d {
                break;
            }
            idx[s] = 0;
        }
    }
    out
}

#[test]
fn planted_experts_match_brute_force() {
    let (d, p, m, k, r) = (8, 2, 16, 2, 2);
    let dict = Dictionary::random(m, d, 21).unwrap();
    let t = PolynomialTarget::planted(&dict, p, r, 22).unwrap();
    let moe = build_polynomial_moe(&t, &dict, k).unwrap();
    assert!(moe.d_expert() <= width_cap(p, r));
    for s in generate_sparse_dataset(&dict, k, 200, 23).unwrap() {
        for &i in &s.active {
            let got = moe.experts[i].forward(&s.x).unwrap();
            let want = brute_force_expert(&t.a, dict.atom(i), &s.x, k as f64);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-10, "{g} vs {w}");
            }
        }
    }
}

#[test]
fn polynomial_orthonormal_dictionary_has_no_residual() {
    let dict = Dictionary::random_orthonormal(8, 8, 24).unwrap();
    for p in 2..=3 {
        let t = PolynomialTarget::planted(&dict, p, 3, 25).unwrap();
        let moe = build_polynomial_moe(&t, &dict, 2).unwrap();
        let samples = generate_sparse_dataset(&dict, 2, 300, 26).unwrap();
        let r = verify_polynomial_construction(&moe, &t, &dict, &samples).unwrap();
        assert!(r.max_residual < 1e-9, "p={p}: {r}");
    }
}

#[test]
fn polynomial_residual_identity_on_random_dictionary() {
    let dict = Dictionary::random(128, 64, 27).unwrap();
    let t = PolynomialTarget::planted(&dict, 2, 2, 28).unwrap();
    let moe = build_polynomial_moe(&t, &dict, 2).unwrap();
    let samples = generate_sparse_dataset(&dict, 2, 1000, 29).unwrap();
    let r = verify_polynomial_construction(&moe, &t, &dict, &samples).unwrap();
    assert!(r.residual_identity_violation < 1e-8, "{r}");
    assert!(moe.d_expert() <= width_cap(2, 2));
    // |ξ|^2 / |x|^2 concentrates near (k - 1) / d for random atoms
    assert!(r.fvu <= 2.0 * 1.0 / 64.0, "{r}");
}

#[test]
fn power_mlp_reproduces_symmetric_contraction() {
    // nodes 1..p make the interpolation increasingly ill-conditioned; p = 4
    // still holds to 1e-6
    for (d, p, r, tol) in [
        (3, 2, 1, 1e-9),
        (5, 3, 2, 1e-9),
        (8, 3, 4, 1e-9),
        (4, 4, 2, 1e-6),
    ] {
        let terms: Vec<Vec<Vec<f64>>> = (0..r)
            .map(|t| {
                (0..=p)
                    .map(|s| random_vec(d, 30, (t * 10 + s) as u64))
                    .collect()
            })
            .collect();
        let b = RankDecomposition::new(p + 1, d, terms).unwrap();
        let dense = b.materialize();
        let mlp = power_mlp_from_rank(&b).unwrap();
        assert!(mlp.d_hidden() <= p.pow(p as u32) * r);
        for i in 0..10 {
            let x = random_vec(d, 31, i);
            let want = dense.apply(&x).unwrap();
            let got = mlp.forward(&x).unwrap();
            let scale = want.iter().map(|v| v * v).sum::<f64>().sqrt();
            let err = got
                .iter()
                .zip(&want)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(err <= tol * scale.max(1.0), "d={d} p={p}: {err:e}");
        }
    }
}

#[test]
fn projection_gate_agrees_on_orthonormal_dictionary() {
    let dict = Dictionary::random_orthonormal(16, 16, 32).unwrap();
    let samples = generate_sparse_dataset(&dict, 3, 200, 33).unwrap();
    assert_eq!(projection_agreement(&dict, &samples, 3), 1.0);
    let rand = Dictionary::random(64, 32, 34).unwrap();
    let samples = generate_sparse_dataset(&rand, 3, 200, 35).unwrap();
    let rate = projection_agreement(&rand, &samples, 3);
    assert!((0.0..=1.0).contains(&rate));
}
