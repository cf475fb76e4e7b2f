//! Teachers for distillation and the on-disk cache of their outputs.
//!
//! Teacher outputs are rounded to 32-bit floats, the precision ACTS files
//! store, whether or not they come from the cache, so a cache hit and a
//! cache miss train on bit-identical targets.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use moe_lab::io::{
    read_acti, read_acts, read_dict, read_model, write_acts, ActivationDataset, StoredModel,
};
use moe_lab::layers::RouterForm;
use moe_lab::linalg::DenseMatrix;
use moe_lab::rng::{item_rng, Stream};
use moe_lab::theory::{build_linear_moe, LinearTarget};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{CliError, CliResult, PathContext};
use crate::manifest::{sha256_file, sha256_parts};

/// Where a teacher comes from: `identity`, `linear:dict=<DICT>,k=<k>,seed=<s>`
/// (the linear construction for a random `A`, routed by stored active
/// sets), or a path to an MLPW/MOEW file.
#[derive(Debug, Clone, PartialEq)]
pub enum TeacherSource {
    Identity,
    Linear { dict: PathBuf, k: usize, seed: u64 },
    File(PathBuf),
}

impl FromStr for TeacherSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "identity" {
            return Ok(TeacherSource::Identity);
        }
        let Some(rest) = s.strip_prefix("linear:") else {
            return Ok(TeacherSource::File(PathBuf::from(s)));
        };
        let (mut dict, mut k, mut seed) = (None, None, 0u64);
        for part in rest.split(',') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value in teacher spec, found `{part}`"))?;
            match key {
                "dict" => dict = Some(PathBuf::from(value)),
                "k" => k = Some(value.parse().map_err(|_| format!("bad k `{value}`"))?),
                "seed" => seed = value.parse().map_err(|_| format!("bad seed `{value}`"))?,
                other => return Err(format!("unknown teacher key `{other}`")),
            }
        }
        Ok(TeacherSource::Linear {
            dict: dict.ok_or("linear teacher needs dict=<path>")?,
            k: k.ok_or("linear teacher needs k=<k>")?,
            seed,
        })
    }
}

impl std::fmt::Display for TeacherSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TeacherSource::Identity => f.write_str("identity"),
            TeacherSource::Linear { dict, k, seed } => {
                write!(f, "linear:dict={},k={k},seed={seed}", dict.display())
            }
            TeacherSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

pub struct Teacher {
    model: Option<StoredModel>,
    /// Content hash identifying the teacher function for the cache.
    key: String,
    /// Files the teacher was built from.
    pub inputs: Vec<PathBuf>,
}

impl Teacher {
    pub fn load(source: &TeacherSource) -> CliResult<Self> {
        match source {
            TeacherSource::Identity => Ok(Self {
                model: None,
                key: sha256_parts(&[b"identity"]),
                inputs: Vec::new(),
            }),
            TeacherSource::File(path) => Ok(Self {
                model: Some(read_model(path).at(path)?),
                key: sha256_parts(&[b"file", sha256_file(path)?.as_bytes()]),
                inputs: vec![path.clone()],
            }),
            TeacherSource::Linear {
                dict: path,
                k,
                seed,
            } => {
                let dict = read_dict(path).at(path)?;
                let d = dict.d();
                let mut rng = item_rng(*seed, Stream::Teacher, 0);
                let s = 1.0 / (d as f64).sqrt();
                let a = DenseMatrix::from_fn(d, d, |_, _| s * rng.sample::<f64, _>(StandardNormal));
                let moe = build_linear_moe(&LinearTarget::new(a)?, &dict, *k)?;
                let key = sha256_parts(&[
                    b"linear",
                    sha256_file(path)?.as_bytes(),
                    &(*k as u64).to_le_bytes(),
                    &seed.to_le_bytes(),
                ]);
                Ok(Self {
                    model: Some(StoredModel::Moe(moe)),
                    key,
                    inputs: vec![path.clone()],
                })
            }
        }
    }

    /// Whether evaluation needs the stored active set of every input.
    pub fn needs_active_sets(&self) -> bool {
        matches!(&self.model, Some(StoredModel::Moe(p)) if p.router.form == RouterForm::Oracle)
    }

    pub fn d_in(&self) -> Option<usize> {
        self.model.as_ref().map(StoredModel::d_in)
    }

    /// Rejects a dataset of the wrong width before any training starts.
    pub fn check_input(&self, path: &Path, d: usize) -> CliResult<()> {
        match self.d_in() {
            Some(want) if want != d => Err(CliError::usage(format!(
                "{}: dataset has d = {d} but the teacher expects d = {want}",
                path.display()
            ))),
            _ => Ok(()),
        }
    }

    /// Teacher outputs for the inputs stored at `acts`, rounded to f32 and
    /// cached under `cache_dir` when given.
    pub fn outputs(
        &self,
        acts: &Path,
        x: &DenseMatrix,
        cache_dir: Option<&Path>,
    ) -> CliResult<DenseMatrix> {
        let Some(model) = &self.model else {
            return Ok(x.clone());
        };
        let active = if self.needs_active_sets() {
            Some(load_active_sets(acts, x.rows())?)
        } else {
            None
        };
        let cache_file = match cache_dir {
            Some(dir) => {
                let mut parts = vec![self.key.clone(), sha256_file(acts)?];
                if active.is_some() {
                    parts.push(sha256_file(&acti_path(acts))?);
                }
                let refs: Vec<&[u8]> = parts.iter().map(|p| p.as_bytes()).collect();
                Some(dir.join(format!("{}.acts", sha256_parts(&refs))))
            }
            None => None,
        };
        if let Some(file) = cache_file.as_deref().filter(|f| f.exists()) {
            let cached = read_acts(file).at(file)?;
            if cached.n() == x.rows() {
                return Ok(cached.data);
            }
        }
        let rows = (0..x.rows())
            .into_par_iter()
            .map(|i| model.forward(x.row(i), active.as_ref().map(|a| a[i].as_slice())))
            .collect::<moe_lab::Result<Vec<_>>>()?;
        let y = DenseMatrix::from_rows(&rows)?;
        let y = DenseMatrix::from_fn(y.rows(), y.cols(), |i, j| y[(i, j)] as f32 as f64);
        if let Some(file) = &cache_file {
            if let Some(dir) = file.parent() {
                std::fs::create_dir_all(dir).at(dir)?;
            }
            let provenance = format!("teacher outputs for {}", acts.display());
            write_acts(file, &ActivationDataset::new(y.clone(), provenance)?).at(file)?;
        }
        Ok(y)
    }
}

/// ACTI file paired with an ACTS file: same path, `.acti` extension.
pub fn acti_path(acts: &Path) -> PathBuf {
    acts.with_extension("acti")
}

fn load_active_sets(acts: &Path, n: usize) -> CliResult<Vec<Vec<usize>>> {
    let path = acti_path(acts);
    if !path.exists() {
        return Err(CliError::usage(format!(
            "the teacher routes by stored active sets, but {} is missing",
            path.display()
        )));
    }
    let (_, sets) = read_acti(&path).at(&path)?;
    if sets.len() != n {
        return Err(CliError::usage(format!(
            "{} has {} records but {} has {n} samples",
            path.display(),
            sets.len(),
            acts.display()
        )));
    }
    Ok(sets)
}
