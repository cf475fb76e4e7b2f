//! `verify-theory`: numerical checks of the constructive approximation
//! results, each compared against an explicit tolerance.

use std::fmt;
use std::fs;
use std::path::PathBuf;

use moe_lab::dictionary::{generate_sparse_dataset, Dictionary};
use moe_lab::distillation::{distill, DistillData, StudentSpec, TrainConfig};
use moe_lab::layers::Activation;
use moe_lab::linalg::{symmetrized_decomposition, DenseMatrix, RankDecomposition};
use moe_lab::rng::{derive_seed, item_rng, Stream};
use moe_lab::theory::{
    build_linear_moe, build_polynomial_moe, gaussian_identity_floor, isotropic_gaussian, power_mlp,
    projection_witness_fvu, verify_linear_construction, verify_polynomial_construction, width_cap,
    LinearTarget, PolynomialTarget,
};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::cli::{Suite, VerifyArgs};
use crate::error::{CliError, CliResult, PathContext};
use crate::manifest::{check_outputs, RunManifest};
use crate::Context;

#[derive(Debug, Clone, Copy)]
enum Bound {
    AtMost(f64),
    Within(f64, f64),
}

impl Bound {
    fn holds(self, v: f64) -> bool {
        match self {
            Bound::AtMost(t) => v <= t,
            Bound::Within(lo, hi) => lo <= v && v <= hi,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::AtMost(t) => write!(f, "<={t:e}"),
            Bound::Within(lo, hi) => write!(f, "{lo:.4}..{hi:.4}"),
        }
    }
}

struct Check {
    suite: &'static str,
    name: String,
    value: f64,
    bound: Bound,
}

impl Check {
    fn new(suite: &'static str, name: impl Into<String>, value: f64, bound: Bound) -> Self {
        Self {
            suite,
            name: name.into(),
            value,
            bound,
        }
    }

    fn pass(&self) -> bool {
        self.bound.holds(self.value)
    }
}

/// Flags that override the per-suite defaults.
struct Overrides {
    d: Option<usize>,
    m: Option<usize>,
    k: Option<usize>,
    p: Option<usize>,
    r: Option<usize>,
    n: Option<usize>,
    width: Option<usize>,
    epochs: Option<usize>,
    orthonormal: bool,
    seed: u64,
}

type SuiteFn = fn(&Overrides) -> CliResult<Vec<Check>>;

fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = item_rng(seed, Stream::Planted, 0);
    let s = 1.0 / (cols as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| s * rng.sample::<f64, _>(StandardNormal))
}

fn gaussian_vec(d: usize, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = item_rng(seed, Stream::Planted, index);
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let err = got
        .iter()
        .zip(want)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale = want.iter().map(|v| v * v).sum::<f64>().sqrt();
    err / scale.max(1e-300)
}

fn dictionary(o: &Overrides, m: usize, d: usize) -> CliResult<Dictionary> {
    let seed = derive_seed(o.seed, 1);
    Ok(if o.orthonormal {
        Dictionary::random_orthonormal(m, d, seed)?
    } else {
        Dictionary::random(m, d, seed)?
    })
}

fn linear(o: &Overrides) -> CliResult<Vec<Check>> {
    const S: &str = "linear";
    let d = o.d.unwrap_or(64);
    let m = o.m.unwrap_or(if o.orthonormal { d } else { 2 * d });
    let k = o.k.unwrap_or(4);
    let n = o.n.unwrap_or(2000);
    let dict = dictionary(o, m, d)?;
    let target = LinearTarget::new(gaussian_matrix(d, d, derive_seed(o.seed, 2)))?;
    let moe = build_linear_moe(&target, &dict, k)?;
    let samples = generate_sparse_dataset(&dict, k, n, derive_seed(o.seed, 3))?;
    let rep = verify_linear_construction(&moe, &target, &dict, &samples)?;
    // for random atoms E|ξ|²/E|x|² ≈ (k-1)/d; allow 20% over it
    let fvu_bound = if o.orthonormal {
        1e-18
    } else {
        1.2 * (k - 1) as f64 / d as f64
    };
    Ok(vec![
        Check::new(
            S,
            "residual-identity",
            rep.residual_identity_violation,
            Bound::AtMost(1e-9),
        ),
        Check::new(
            S,
            "bound-violations",
            rep.bound_violations as f64,
            Bound::AtMost(0.0),
        ),
        Check::new(S, "fvu", rep.fvu, Bound::AtMost(fvu_bound)),
    ])
}

fn polynomial(o: &Overrides) -> CliResult<Vec<Check>> {
    const S: &str = "polynomial";
    let d = o.d.unwrap_or(16);
    let m = o.m.unwrap_or(if o.orthonormal { d } else { 2 * d });
    let (k, p, r, n) = (
        o.k.unwrap_or(2),
        o.p.unwrap_or(2),
        o.r.unwrap_or(2),
        o.n.unwrap_or(500),
    );
    let dict = dictionary(o, m, d)?;
    let target = PolynomialTarget::planted(&dict, p, r, derive_seed(o.seed, 2))?;
    let moe = build_polynomial_moe(&target, &dict, k)?;
    let samples = generate_sparse_dataset(&dict, k, n, derive_seed(o.seed, 3))?;
    let rep = verify_polynomial_construction(&moe, &target, &dict, &samples)?;
    let mut checks = vec![
        Check::new(
            S,
            "residual-identity",
            rep.residual_identity_violation,
            Bound::AtMost(1e-8),
        ),
        Check::new(
            S,
            "expert-width",
            moe.d_expert() as f64,
            Bound::AtMost(width_cap(p, r) as f64),
        ),
    ];
    if o.orthonormal {
        checks.push(Check::new(
            S,
            "max-residual",
            rep.max_residual,
            Bound::AtMost(1e-9),
        ));
    }
    Ok(checks)
}

fn tensor(o: &Overrides) -> CliResult<Vec<Check>> {
    const S: &str = "tensor";
    let (d, p, r, n) = (
        o.d.unwrap_or(6),
        o.p.unwrap_or(3),
        o.r.unwrap_or(2),
        o.n.unwrap_or(20),
    );
    let seed = derive_seed(o.seed, 4);
    let terms: Vec<Vec<Vec<f64>>> = (0..r)
        .map(|t| {
            (0..=p)
                .map(|s| gaussian_vec(d, seed, (t * (p + 1) + s) as u64))
                .collect()
        })
        .collect();
    let b = RankDecomposition::new(p + 1, d, terms)?;
    let dense = b.materialize();
    let sym = symmetrized_decomposition(&b)?;
    let decomposition = sym.materialize().relative_error(&dense.symmetrize_last());
    let mlp = power_mlp(&sym, 1.0)?;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let x = gaussian_vec(d, derive_seed(o.seed, 5), i as u64);
        worst = worst.max(rel_err(&mlp.forward(&x)?, &dense.apply(&x)?));
    }
    Ok(vec![
        Check::new(
            S,
            "symmetrized-decomposition",
            decomposition,
            Bound::AtMost(1e-9),
        ),
        Check::new(S, "power-mlp", worst, Bound::AtMost(1e-9)),
        Check::new(
            S,
            "mlp-width",
            mlp.d_hidden() as f64,
            Bound::AtMost(width_cap(p, r) as f64),
        ),
    ])
}

fn gaussian_floor(o: &Overrides) -> CliResult<Vec<Check>> {
    const S: &str = "gaussian-floor";
    let (d, width) = (o.d.unwrap_or(64), o.width.unwrap_or(16));
    let n = o.n.unwrap_or(16_384);
    let floor = gaussian_identity_floor(d, width);
    let witness = projection_witness_fvu(d, width, n, derive_seed(o.seed, 6))?;
    let train = isotropic_gaussian(n, d, derive_seed(o.seed, 7))?;
    let test = isotropic_gaussian((n / 4).max(2), d, derive_seed(o.seed, 8))?;
    let data = DistillData::new(train.clone(), train, test.clone(), test)?;
    let spec = StudentSpec::mlp(width).with_activation(Activation::Identity);
    let config = TrainConfig {
        epochs: o.epochs.unwrap_or(100),
        seed: o.seed,
        ..TrainConfig::default()
    };
    let report = distill(&data, &spec, &config)?;
    Ok(vec![
        Check::new(
            S,
            "projection-witness",
            witness,
            Bound::Within(floor - 0.01, floor + 0.01),
        ),
        Check::new(
            S,
            "trained-mlp",
            report.final_test_fvu,
            Bound::Within(floor - 0.01, floor + 0.03),
        ),
    ])
}

pub fn verify_theory(a: VerifyArgs, ctx: Context) -> CliResult<()> {
    let mut r = ctx.resolver;
    let suite: Suite = r.value("suite", a.suite, Suite::All)?;
    let o = Overrides {
        d: r.optional("d", a.d)?,
        m: r.optional("m", a.m)?,
        k: r.optional("k", a.k)?,
        p: r.optional("p", a.p)?,
        r: r.optional("r", a.r)?,
        n: r.optional("n", a.n)?,
        width: r.optional("width", a.width)?,
        epochs: r.optional("epochs", a.epochs)?,
        orthonormal: r.value("orthonormal", a.orthonormal.then_some(true), false)?,
        seed: r.seed(a.seed)?,
    };
    let out_dir: Option<PathBuf> = r.optional("out-dir", a.out_dir)?;
    let config = r.finish()?;

    let report_path = out_dir.as_ref().map(|dir| dir.join("theory_report.csv"));
    if let (Some(dir), Some(path)) = (&out_dir, &report_path) {
        check_outputs(&[path], ctx.force)?;
        let mut manifest = RunManifest::new("verify-theory", config, o.seed);
        manifest.output(path);
        manifest.write(dir)?;
    }

    let suites: &[SuiteFn] = match suite {
        Suite::Linear => &[linear],
        Suite::Polynomial => &[polynomial],
        Suite::Tensor => &[tensor],
        Suite::GaussianFloor => &[gaussian_floor],
        Suite::All => &[linear, polynomial, tensor, gaussian_floor],
    };
    let mut checks = Vec::new();
    for run in suites {
        for c in run(&o)? {
            println!(
                "{} {} {}: {:.3e} ({})",
                if c.pass() { "PASS" } else { "FAIL" },
                c.suite,
                c.name,
                c.value,
                c.bound
            );
            checks.push(c);
        }
    }
    if let Some(path) = &report_path {
        let mut csv = String::from("suite,check,value,tolerance,pass\n");
        for c in &checks {
            csv.push_str(&format!(
                "{},{},{:e},{},{}\n",
                c.suite,
                c.name,
                c.value,
                c.bound,
                c.pass()
            ));
        }
        fs::write(path, csv).at(path)?;
    }
    let failed = checks.iter().filter(|c| !c.pass()).count();
    if failed > 0 {
        return Err(CliError::tolerance(format!(
            "{failed} of {} checks exceeded their tolerance",
            checks.len()
        )));
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}
