//! `gen-data`, `gen-dict`, `gaussian-control` and `fvu`.

use std::path::{Path, PathBuf};

use moe_lab::dictionary::{generate_sparse_dataset, samples_to_matrix, Dictionary};
use moe_lab::io::{
    compute_moments, provenance_path, read_acts, read_dict, read_moms, sample_gaussian_control,
    write_acti, write_acts, write_dict, write_moms, ActivationDataset,
};
use moe_lab::metrics;
use moe_lab::rng::derive_seed;
use moe_lab::theory::isotropic_gaussian;

use crate::cli::{DataMode, FvuArgs, GaussianControlArgs, GenDataArgs, GenDictArgs};
use crate::error::{CliError, CliResult, PathContext};
use crate::manifest::{check_outputs, parent_dir, RunManifest};
use crate::teacher::acti_path;
use crate::Context;

/// Salt separating the dictionary drawn by `gen-data` from its samples.
const DICT_SALT: u64 = 1;

fn forbid(mode: &str, pairs: &[(&str, bool)]) -> CliResult<()> {
    match pairs.iter().find(|(_, present)| *present) {
        Some((name, _)) => Err(CliError::usage(format!(
            "--{name} does not apply to --mode {mode}"
        ))),
        None => Ok(()),
    }
}

pub fn gen_data(a: GenDataArgs, ctx: Context) -> CliResult<()> {
    let mut r = ctx.resolver;
    let mode: DataMode = r.required("mode", a.mode)?;
    let n: usize = r.required("n", a.n)?;
    let seed = r.seed(a.seed)?;
    let out: PathBuf = r.required("out", a.out)?;
    let d: Option<usize> = r.optional("d", a.d)?;
    let m: Option<usize> = r.optional("m", a.m)?;
    let k: Option<usize> = r.optional("k", a.k)?;
    let dict_in: Option<PathBuf> = r.optional("dict", a.dict)?;
    let moms_in: Option<PathBuf> = r.optional("moms", a.moms)?;
    if n == 0 {
        return Err(CliError::usage("--n must be >= 1"));
    }

    let mut outputs = vec![out.clone(), provenance_path(&out)];
    let mut dict_out = None;
    match mode {
        DataMode::Dict => {
            forbid("dict", &[("moms", moms_in.is_some())])?;
            if k.is_none() {
                return Err(CliError::usage("--mode dict needs --k"));
            }
            match &dict_in {
                Some(_) => forbid(
                    "dict with --dict",
                    &[("d", d.is_some()), ("m", m.is_some())],
                )?,
                None if d.is_none() || m.is_none() => {
                    return Err(CliError::usage("--mode dict needs --d and --m, or --dict"))
                }
                None => {
                    let p = out.with_extension("dict");
                    outputs.push(p.clone());
                    dict_out = Some(p);
                }
            }
            outputs.push(acti_path(&out));
        }
        DataMode::GaussIso => {
            forbid(
                "gauss-iso",
                &[
                    ("m", m.is_some()),
                    ("k", k.is_some()),
                    ("dict", dict_in.is_some()),
                    ("moms", moms_in.is_some()),
                ],
            )?;
            if d.is_none() {
                return Err(CliError::usage("--mode gauss-iso needs --d"));
            }
        }
        DataMode::GaussFromMoms => {
            forbid(
                "gauss-from-moms",
                &[
                    ("d", d.is_some()),
                    ("m", m.is_some()),
                    ("k", k.is_some()),
                    ("dict", dict_in.is_some()),
                ],
            )?;
            if moms_in.is_none() {
                return Err(CliError::usage("--mode gauss-from-moms needs --moms"));
            }
        }
    }
    let config = r.finish()?;
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    check_outputs(&refs, ctx.force)?;

    let mut manifest = RunManifest::new("gen-data", config, seed);
    for input in dict_in.iter().chain(&moms_in) {
        manifest.input(input)?;
    }
    outputs.iter().for_each(|o| manifest.output(o));
    manifest.write(&parent_dir(&out))?;

    let data = match mode {
        DataMode::Dict => {
            let k = k.expect("checked above");
            let dict = match &dict_in {
                Some(p) => read_dict(p).at(p)?,
                None => {
                    let dict = Dictionary::random(
                        m.expect("checked"),
                        d.expect("checked"),
                        derive_seed(seed, DICT_SALT),
                    )?;
                    let p = dict_out.as_deref().expect("set with the dictionary");
                    write_dict(p, &dict).at(p)?;
                    dict
                }
            };
            let samples = generate_sparse_dataset(&dict, k, n, seed)?;
            let (x, active) = samples_to_matrix(&samples);
            let acti = acti_path(&out);
            write_acti(&acti, k, &active).at(&acti)?;
            let source = match &dict_in {
                Some(p) => p.display().to_string(),
                None => format!("random m={} d={}", dict.m(), dict.d()),
            };
            ActivationDataset::new(
                x,
                format!("gen-data mode=dict dict={source} k={k} n={n} seed={seed}"),
            )?
        }
        DataMode::GaussIso => {
            let d = d.expect("checked above");
            let x = isotropic_gaussian(n, d, seed)?;
            ActivationDataset::new(
                x,
                format!("gen-data mode=gauss-iso d={d} n={n} seed={seed}"),
            )?
        }
        DataMode::GaussFromMoms => {
            let p = moms_in.as_deref().expect("checked above");
            let moments = read_moms(p).at(p)?;
            let mut ds = sample_gaussian_control(&moments, n, seed)?;
            ds.provenance = format!(
                "gen-data mode=gauss-from-moms moms={} n={n} seed={seed}",
                p.display()
            );
            ds
        }
    };
    write_acts(&out, &data).at(&out)?;
    println!("wrote {} ({} x {})", out.display(), data.n(), data.d());
    Ok(())
}

pub fn gen_dict(a: GenDictArgs, ctx: Context) -> CliResult<()> {
    let mut r = ctx.resolver;
    let m: usize = r.required("m", a.m)?;
    let d: usize = r.required("d", a.d)?;
    let seed = r.seed(a.seed)?;
    let orthonormal = r.value("orthonormal", a.orthonormal.then_some(true), false)?;
    let out: PathBuf = r.required("out", a.out)?;
    let config = r.finish()?;
    check_outputs(&[&out], ctx.force)?;

    let mut manifest = RunManifest::new("gen-dict", config, seed);
    manifest.output(&out);
    manifest.write(&parent_dir(&out))?;

    let dict = if orthonormal {
        Dictionary::random_orthonormal(m, d, seed)?
    } else {
        Dictionary::random(m, d, seed)?
    };
    write_dict(&out, &dict).at(&out)?;
    println!("wrote {} ({m} atoms in d = {d})", out.display());
    Ok(())
}

pub fn gaussian_control(a: GaussianControlArgs, ctx: Context) -> CliResult<()> {
    let mut r = ctx.resolver;
    let acts: PathBuf = r.required("acts", a.acts)?;
    let n: Option<usize> = r.optional("n", a.n)?;
    let seed = r.seed(a.seed)?;
    let out: PathBuf = r.required("out", a.out)?;
    let moms_out: PathBuf = r.value("moms-out", a.moms_out, out.with_extension("moms"))?;
    let config = r.finish()?;
    if n == Some(0) {
        return Err(CliError::usage("--n must be >= 1"));
    }
    check_outputs(&[&out, &provenance_path(&out), &moms_out], ctx.force)?;

    let mut manifest = RunManifest::new("gaussian-control", config, seed);
    manifest.input(&acts)?;
    for o in [&out, &provenance_path(&out), &moms_out] {
        manifest.output(o);
    }
    manifest.write(&parent_dir(&out))?;
    if parent_dir(&moms_out) != parent_dir(&out) {
        manifest.write(&parent_dir(&moms_out))?;
    }

    let source = read_acts(&acts).at(&acts)?;
    let moments = compute_moments(&source)?;
    write_moms(&moms_out, &moments).at(&moms_out)?;
    if moments.jitter > 0.0 {
        eprintln!(
            "note: covariance is singular; factored with diagonal jitter {:e}",
            moments.jitter
        );
    }
    let n = n.unwrap_or(source.n());
    let mut control = sample_gaussian_control(&moments, n, seed)?;
    control.provenance = format!("gaussian control of {} n={n} seed={seed}", acts.display());
    write_acts(&out, &control).at(&out)?;
    println!(
        "wrote {} ({n} x {}) and {}",
        out.display(),
        control.d(),
        moms_out.display()
    );
    Ok(())
}

pub fn fvu(a: FvuArgs) -> CliResult<()> {
    let pred = read_acts(&a.pred).at(&a.pred)?;
    let reference = read_acts(&a.reference).at(&a.reference)?;
    if (pred.n(), pred.d()) != (reference.n(), reference.d()) {
        return Err(CliError::usage(format!(
            "shape mismatch: predictions are {} x {}, reference is {} x {}",
            pred.n(),
            pred.d(),
            reference.n(),
            reference.d()
        )));
    }
    println!("{:e}", metrics::fvu(&pred.data, &reference.data)?);
    Ok(())
}
