//! Cross-product sweeps with one resumable record file per cell.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::distillation::{distill, DistillData, StudentSpec, TrainConfig};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "family,active_neurons,dataset,seed,best_lr,final_fvu";

/// Result of one (spec, dataset, seed) cell, as persisted.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub spec: StudentSpec,
    pub dataset: String,
    pub seed: u64,
    pub active_neurons: usize,
    pub best_lr: f64,
    pub final_fvu: f64,
    pub lr_results: Vec<(f64, f64)>,
    pub curve: Vec<(usize, f64)>,
}

impl CellRecord {
    /// `key=value` lines followed by a `curve:` CSV block.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "spec={}", self.spec);
        let _ = writeln!(s, "family={}", self.spec.label());
        let _ = writeln!(s, "dataset={}", self.dataset);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "active_neurons={}", self.active_neurons);
        let _ = writeln!(s, "best_lr={:e}", self.best_lr);
        let _ = writeln!(s, "final_fvu={:e}", self.final_fvu);
        let lrs: Vec<String> = self
            .lr_results
            .iter()
            .map(|(lr, f)| format!("{lr:e}:{f:e}"))
            .collect();
        let _ = writeln!(s, "lr_results={}", lrs.join(";"));
        let _ = writeln!(s, "curve:");
        let _ = writeln!(s, "step,test_fvu");
        for (step, f) in &self.curve {
            let _ = writeln!(s, "{step},{f:e}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidInput(format!("cell record: {msg}"));
        let mut fields = std::collections::HashMap::new();
        let mut lines = text.lines();
        for line in lines.by_ref() {
            if line == "curve:" {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad("expected key=value"))?;
            fields.insert(k, v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| bad(&format!("missing {k}")))
        };
        let num =
            |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| bad(&format!("bad {k}"))) };
        if lines.next() != Some("step,test_fvu") {
            return Err(bad("missing curve header"));
        }
        let curve = lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                let (a, b) = l.split_once(',').ok_or_else(|| bad("bad curve row"))?;
                Ok((
                    a.parse().map_err(|_| bad("bad step"))?,
                    b.parse().map_err(|_| bad("bad fvu"))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let lr_results = get("lr_results")?
            .split(';')
            .filter(|t| !t.is_empty())
            .map(|t| {
                let (a, b) = t.split_once(':').ok_or_else(|| bad("bad lr_results"))?;
                Ok((
                    a.parse().map_err(|_| bad("bad lr"))?,
                    b.parse().map_err(|_| bad("bad fvu"))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: get("spec")?.parse()?,
            dataset: get("dataset")?.to_string(),
            seed: get("seed")?.parse().map_err(|_| bad("bad seed"))?,
            active_neurons: get("active_neurons")?
                .parse()
                .map_err(|_| bad("bad active_neurons"))?,
            best_lr: num("best_lr")?,
            final_fvu: num("final_fvu")?,
            lr_results,
            curve,
        })
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:e},{:e}",
            self.spec.label(),
            self.active_neurons,
            self.dataset,
            self.seed,
            self.best_lr,
            self.final_fvu
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<CellRecord>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }
}

/// Record file for a cell: `<dir>/<dataset>__<spec>__seed<seed>.rec` with
/// the spec's punctuation flattened to `_`.
pub fn cell_path(dir: &Path, spec: &StudentSpec, dataset: &str, seed: u64) -> PathBuf {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                    c
                } else {
                    '_'
                }
            })
            .collect()
    };
    dir.join(format!(
        "{}__{}__seed{seed}.rec",
        clean(dataset),
        clean(&spec.to_string())
    ))
}

/// Runs every (spec, dataset, seed) cell. With `out_dir`, each finished cell
/// is written to its own record file and existing valid records are reused,
/// so an interrupted sweep resumes where it stopped. Cells run on the
/// current rayon pool; rows come back in (spec, dataset, seed) order.
pub fn run_sweep(
    datasets: &[(String, DistillData)],
    specs: &[StudentSpec],
    seeds: &[u64],
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<SweepTable> {
    if specs.is_empty() || datasets.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidInput(
            "sweep needs specs, datasets and seeds".into(),
        ));
    }
    config.validate()?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let cells: Vec<(&StudentSpec, &(String, DistillData), u64)> = specs
        .iter()
        .flat_map(|s| {
            datasets
                .iter()
                .flat_map(move |d| seeds.iter().map(move |&seed| (s, d, seed)))
        })
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(spec, (tag, data), seed)| {
            let path = out_dir.map(|dir| cell_path(dir, spec, tag, seed));
            if let Some(existing) = path.as_deref().and_then(|p| fs::read_to_string(p).ok()) {
                if let Ok(rec) = CellRecord::parse(&existing) {
                    if rec.spec == *spec && rec.dataset == *tag && rec.seed == seed {
                        return Ok(rec);
                    }
                }
            }
            let cell_config = TrainConfig {
                seed,
                ..config.clone()
            };
            let report = distill(data, spec, &cell_config)?;
            let rec = CellRecord {
                spec: spec.clone(),
                dataset: tag.clone(),
                seed,
                active_neurons: report.active_neurons,
                best_lr: report.best_lr,
                final_fvu: report.final_test_fvu,
                lr_results: report.lr_results,
                curve: report.train_curve,
            };
            if let Some(p) = &path {
                let tmp = p.with_extension("rec.partial");
                fs::write(&tmp, rec.to_text())?;
                fs::rename(&tmp, p)?;
            }
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { rows })
}
