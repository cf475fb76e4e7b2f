//! Round trips and corruption handling for the binary formats.

use std::fs;

use moe_lab::dictionary::Dictionary;
use moe_lab::io::{
    compute_moments, read_acti, read_acts, read_dict, read_mlpw, read_model, read_moew, read_moms,
    sample_gaussian_control, write_acti, write_acts, write_dict, write_mlpw, write_moew,
    write_moms, ActivationDataset, ActsReader, StoredModel, TeacherWeights,
};
use moe_lab::layers::{Activation, GatedMlp, MlpParams, MoeParams, Router};
use moe_lab::linalg::DenseMatrix;
use moe_lab::rng::{item_rng, Stream};
use moe_lab::Error;
use rand::Rng;
use rand_distr::StandardNormal;

fn dataset(rows: &[&[f64]]) -> ActivationDataset {
    let m = DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
    ActivationDataset::new(m, "unit test").unwrap()
}

fn format_offset(e: Error) -> u64 {
    match e {
        Error::Format { offset, .. } => offset,
        other => panic!("expected a format error, got {other}"),
    }
}

#[test]
fn acts_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.acts");
    let ds = dataset(&[&[1.0, -2.5], &[0.125, 3.0], &[7.0, 0.0]]);
    write_acts(&path, &ds).unwrap();
    assert_eq!(fs::metadata(&path).unwrap().len(), 64 + 3 * 2 * 4);
    let back = read_acts(&path).unwrap();
    assert_eq!(back, ds);
}

#[test]
fn acts_round_trip_is_bit_exact_on_f32_payload() {
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("1.acts"), dir.path().join("2.acts"));
    let mut rng = item_rng(1, Stream::SparseData, 0);
    let m = DenseMatrix::from_fn(50, 7, |_, _| rng.sample::<f64, _>(StandardNormal));
    write_acts(&p1, &ActivationDataset::new(m, "").unwrap()).unwrap();
    let once = read_acts(&p1).unwrap();
    write_acts(&p2, &once).unwrap();
    assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
}

#[test]
fn acts_streams_in_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.acts");
    let m = DenseMatrix::from_fn(10, 3, |i, j| (i * 3 + j) as f64);
    write_acts(&path, &ActivationDataset::new(m.clone(), "").unwrap()).unwrap();
    let mut r = ActsReader::open(&path).unwrap();
    let mut sizes = Vec::new();
    let mut all = Vec::new();
    while let Some(b) = r.next_block(4).unwrap() {
        sizes.push(b.rows());
        all.extend_from_slice(b.data());
    }
    assert_eq!(sizes, vec![4, 4, 2]);
    assert_eq!(all, m.data());
}

#[test]
fn acts_rejects_empty_and_truncated_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.acts");
    let mut header = b"ACTS".to_vec();
    header.extend_from_slice(&1u32.to_le_bytes());
    header.extend_from_slice(&2u32.to_le_bytes());
    header.extend_from_slice(&0u64.to_le_bytes());
    header.extend_from_slice(&0u32.to_le_bytes());
    header.resize(64, 0);
    fs::write(&path, &header).unwrap();
    let err = read_acts(&path).unwrap_err();
    assert!(err.to_string().contains("n must be >= 1"), "{err}");
    assert_eq!(format_offset(err), 12);

    write_acts(&path, &dataset(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap();
    let full = fs::read(&path).unwrap();
    fs::write(&path, &full[..full.len() - 4]).unwrap();
    let err = read_acts(&path).unwrap_err();
    assert!(err.to_string().contains("truncated"), "{err}");
    assert_eq!(format_offset(err), (full.len() - 4) as u64);

    let mut wrong = full.clone();
    wrong[0] = b'X';
    fs::write(&path, &wrong).unwrap();
    assert_eq!(format_offset(read_acts(&path).unwrap_err()), 0);

    let mut wrong = full.clone();
    wrong[4] = 2;
    fs::write(&path, &wrong).unwrap();
    assert_eq!(format_offset(read_acts(&path).unwrap_err()), 4);

    let mut wrong = full;
    wrong[64..68].copy_from_slice(&f32::NAN.to_le_bytes());
    fs::write(&path, &wrong).unwrap();
    assert_eq!(format_offset(read_acts(&path).unwrap_err()), 64);
}

#[test]
fn acti_round_trip_with_padding() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.acti");
    let sets = vec![vec![0, 5, 9], vec![2], vec![]];
    write_acti(&path, 3, &sets).unwrap();
    assert_eq!(fs::metadata(&path).unwrap().len(), 20 + 3 * 3 * 4);
    assert_eq!(read_acti(&path).unwrap(), (3, sets));
    assert!(write_acti(&path, 1, &[vec![1, 2]]).is_err());
}

#[test]
fn moments_by_hand() {
    let m = compute_moments(&dataset(&[&[0.0, 0.0], &[2.0, 0.0]])).unwrap();
    assert_eq!(m.mean, vec![1.0, 0.0]);
    assert_eq!(m.covariance.data(), &[2.0, 0.0, 0.0, 0.0]);
    assert!(m.jitter > 0.0);
}

#[test]
fn constant_dataset_gets_jitter_only() {
    let m = compute_moments(&dataset(&[&[1.5, -1.0], &[1.5, -1.0], &[1.5, -1.0]])).unwrap();
    assert!(m.covariance.data().iter().all(|&v| v == 0.0));
    let s = m.jitter.sqrt();
    assert_eq!(m.cholesky.data(), &[s, 0.0, 0.0, s]);
    let g = sample_gaussian_control(&m, 20, 3).unwrap();
    for i in 0..20 {
        assert!((g.data[(i, 0)] - 1.5).abs() < 1e-3);
        assert!((g.data[(i, 1)] + 1.0).abs() < 1e-3);
    }
}

#[test]
fn moments_of_known_gaussian() {
    let n = 100_000;
    let mean = [0.5, -2.0, 1.0];
    let sd = [1.0, 0.5, 2.0];
    let m = DenseMatrix::from_fn(n, 3, |i, j| {
        let mut rng = item_rng(5, Stream::GaussianControl, (i * 3 + j) as u64);
        mean[j] + sd[j] * rng.sample::<f64, _>(StandardNormal)
    });
    let moms = compute_moments(&ActivationDataset::new(m, "").unwrap()).unwrap();
    for j in 0..3 {
        assert!((moms.mean[j] - mean[j]).abs() < 4.0 * sd[j] / (n as f64).sqrt());
    }
}

#[test]
fn gaussian_control_closure_and_determinism() {
    let mut rng = item_rng(7, Stream::Teacher, 0);
    let mix = DenseMatrix::from_fn(4, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
    let base = DenseMatrix::from_fn(500, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
    let data = base.matmul(&mix.transpose()).unwrap();
    let source = compute_moments(&ActivationDataset::new(data, "").unwrap()).unwrap();

    let a = sample_gaussian_control(&source, 1_000_000, 9).unwrap();
    let closure = compute_moments(&a).unwrap();
    let rel = closure
        .covariance
        .sub(&source.covariance)
        .unwrap()
        .frobenius_norm()
        / source.covariance.frobenius_norm();
    assert!(rel < 0.01, "covariance closure {rel}");
    let mean_err: f64 = closure
        .mean
        .iter()
        .zip(&source.mean)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    assert!(mean_err.sqrt() < 0.01);

    let b = sample_gaussian_control(&source, 1000, 9).unwrap();
    assert_eq!(a.data.row(999), b.data.row(999));
}

#[test]
fn moms_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.moms");
    let m = compute_moments(&dataset(&[&[0.0, 1.0], &[2.0, 0.5], &[1.0, -3.0]])).unwrap();
    write_moms(&path, &m).unwrap();
    assert_eq!(fs::metadata(&path).unwrap().len(), 12 + 8 * (2 + 4));
    assert_eq!(read_moms(&path).unwrap(), m);
}

fn random_moe(seed: u64, low_rank: bool, shared: bool) -> MoeParams {
    let mut rng = item_rng(seed, Stream::Init, 0);
    let experts = (0..5)
        .map(|_| MlpParams::init(&mut rng, 4, 2, 3, Activation::Relu, true))
        .collect();
    let mut router = if low_rank {
        Router::init_low_rank(&mut rng, 5, 4, 2, 2, 1.0)
    } else {
        Router::init_full(&mut rng, 5, 4, 2, 0.5)
    };
    router.train_beta = low_rank;
    let shared = shared.then(|| MlpParams::init(&mut rng, 4, 3, 3, Activation::Power(2), false));
    MoeParams::new(experts, router, shared).unwrap()
}

#[test]
fn weight_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = item_rng(11, Stream::Init, 0);
    let mut mlp = MlpParams::init(&mut rng, 6, 5, 4, Activation::Power(3), true);
    mlp.bias_in.as_mut().unwrap()[2] = 0.25;
    let path = dir.path().join("t.mlpw");
    write_mlpw(&path, &TeacherWeights::Mlp(mlp.clone())).unwrap();
    assert_eq!(read_mlpw(&path).unwrap(), TeacherWeights::Mlp(mlp));

    for (low_rank, shared) in [(false, false), (true, true), (false, true)] {
        let p = random_moe(12, low_rank, shared);
        let path = dir.path().join("s.moew");
        write_moew(&path, &p).unwrap();
        assert_eq!(read_moew(&path).unwrap(), p);
        assert!(matches!(read_model(&path).unwrap(), StoredModel::Moe(_)));
    }
    let oracle = MoeParams::new(
        (0..3)
            .map(|_| MlpParams::init(&mut rng, 2, 1, 2, Activation::Identity, false))
            .collect(),
        Router::oracle(3, 2),
        None,
    )
    .unwrap();
    let path = dir.path().join("o.moew");
    write_moew(&path, &oracle).unwrap();
    assert_eq!(read_moew(&path).unwrap(), oracle);
}

#[test]
fn gated_teacher_round_trip_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = item_rng(13, Stream::Teacher, 0);
    let mut g = |r, c| DenseMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let gated = GatedMlp {
        w_out: g(3, 4),
        w_in: g(4, 3),
        gate: g(4, 3),
        bias_in: None,
        gate_bias: None,
        bias_out: None,
        activation: Activation::GeluTanh,
    };
    let path = dir.path().join("g.mlpw");
    let t = TeacherWeights::Gated(gated.clone());
    write_mlpw(&path, &t).unwrap();
    let back = read_mlpw(&path).unwrap();
    assert_eq!(back, t);
    let x = [0.3, -0.7, 1.1];
    let up = gated.w_in.matvec(&x);
    let gate = gated.gate.matvec(&x);
    let hidden: Vec<f64> = up
        .iter()
        .zip(&gate)
        .map(|(u, z)| Activation::GeluTanh.apply(*z) * u)
        .collect();
    assert_eq!(back.forward(&x).unwrap(), gated.w_out.matvec(&hidden));
}

#[test]
fn weight_file_corruption_is_located() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.mlpw");
    let mut rng = item_rng(14, Stream::Init, 0);
    write_mlpw(
        &path,
        &TeacherWeights::Mlp(MlpParams::init(&mut rng, 2, 2, 2, Activation::Relu, false)),
    )
    .unwrap();
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
    let err = read_mlpw(&path).unwrap_err();
    assert_eq!(format_offset(err), (bytes.len() - 1) as u64);
    let mut bad = bytes.clone();
    bad[8] = 9;
    fs::write(&path, &bad).unwrap();
    assert!(read_mlpw(&path)
        .unwrap_err()
        .to_string()
        .contains("activation"));
}

#[test]
fn dictionary_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.dict");
    let d = Dictionary::random(12, 5, 15).unwrap();
    write_dict(&path, &d).unwrap();
    assert_eq!(read_dict(&path).unwrap(), d);
}
