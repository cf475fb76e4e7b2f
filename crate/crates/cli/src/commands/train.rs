//! `train` and `sweep`.

use std::fs;
use std::path::{Path, PathBuf};

use moe_lab::distillation::{
    distill, run_sweep, CellRecord, DistillData, StudentSpec, TrainConfig,
};
use moe_lab::io::{read_acts, write_model};
use serde_json::{Map, Value};

use crate::cli::{SweepArgs, TrainArgs, TrainingArgs};
use crate::config::Resolver;
use crate::error::{CliError, CliResult, PathContext};
use crate::manifest::{check_outputs, RunManifest};
use crate::plot;
use crate::teacher::{acti_path, Teacher, TeacherSource};
use crate::Context;

/// Settings shared by both subcommands, resolved.
struct Training {
    teacher: TeacherSource,
    config: TrainConfig,
    cache_dir: PathBuf,
    out_dir: PathBuf,
}

fn resolve_training(r: &mut Resolver, a: TrainingArgs, seed: u64) -> CliResult<Training> {
    let defaults = TrainConfig::default();
    let teacher: String = r.value("teacher", a.teacher, "identity".to_string())?;
    let teacher = teacher.parse::<TeacherSource>().map_err(CliError::usage)?;
    let config = TrainConfig {
        epochs: r.value("epochs", a.epochs, defaults.epochs)?,
        batch_size: r.value("batch-size", a.batch_size, defaults.batch_size)?,
        lr_grid: r.list("lr-grid", a.lr_grid, defaults.lr_grid)?,
        seed,
        eval_every: r.optional("eval-every", a.eval_every)?,
    };
    config.validate()?;
    let out_dir: PathBuf = r.required("out-dir", a.out_dir)?;
    let cache_dir = r.value("cache-dir", a.cache_dir, out_dir.join("teacher-cache"))?;
    Ok(Training {
        teacher,
        config,
        cache_dir,
        out_dir,
    })
}

fn parse_student(s: &str) -> CliResult<StudentSpec> {
    s.parse::<StudentSpec>()
        .map_err(|e| CliError::usage(e.to_string()))
}

/// Hashes every file the teacher and datasets contribute into the manifest.
fn record_inputs(manifest: &mut RunManifest, teacher: &Teacher, acts: &[&Path]) -> CliResult<()> {
    for p in &teacher.inputs {
        manifest.input(p)?;
    }
    for &p in acts {
        manifest.input(p)?;
        if teacher.needs_active_sets() {
            let acti = acti_path(p);
            if !acti.exists() {
                return Err(CliError::usage(format!(
                    "the teacher routes by stored active sets, but {} is missing",
                    acti.display()
                )));
            }
            manifest.input(&acti)?;
        }
    }
    Ok(())
}

/// Reads both splits, checks their widths and pairs them with teacher outputs.
fn load_pair(
    teacher: &Teacher,
    train: &Path,
    test: &Path,
    cache_dir: &Path,
) -> CliResult<DistillData> {
    let train_x = read_acts(train).at(train)?.data;
    let test_x = read_acts(test).at(test)?.data;
    teacher.check_input(train, train_x.cols())?;
    teacher.check_input(test, test_x.cols())?;
    if train_x.cols() != test_x.cols() {
        return Err(CliError::usage(format!(
            "{} has d = {} but {} has d = {}",
            train.display(),
            train_x.cols(),
            test.display(),
            test_x.cols()
        )));
    }
    let train_y = teacher.outputs(train, &train_x, Some(cache_dir))?;
    let test_y = teacher.outputs(test, &test_x, Some(cache_dir))?;
    Ok(DistillData::new(train_x, train_y, test_x, test_y)?)
}

fn dataset_tag(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "data".to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn train(a: TrainArgs, ctx: Context) -> CliResult<()> {
    let mut r = ctx.resolver;
    let seed = r.seed(a.seed)?;
    let train_path: PathBuf = r.required("train", a.train)?;
    let test_path: PathBuf = r.required("test", a.test)?;
    let student: String = r.required("student", a.student)?;
    let spec = parse_student(&student)?;
    let t = resolve_training(&mut r, a.training, seed)?;
    let config = r.finish()?;

    let record_path = t.out_dir.join("record.rec");
    let curve_path = t.out_dir.join("curve.csv");
    let model_path = t.out_dir.join(if spec.has_router() {
        "student.moew"
    } else {
        "student.mlpw"
    });
    check_outputs(&[&record_path, &curve_path, &model_path], ctx.force)?;

    let teacher = Teacher::load(&t.teacher)?;
    let mut manifest = RunManifest::new("train", config, seed);
    record_inputs(&mut manifest, &teacher, &[&train_path, &test_path])?;
    for o in [&record_path, &curve_path, &model_path] {
        manifest.output(o);
    }
    manifest.write(&t.out_dir)?;

    let data = load_pair(&teacher, &train_path, &test_path, &t.cache_dir)?;
    let report = distill(&data, &spec, &t.config)?;
    let record = CellRecord {
        spec: spec.clone(),
        dataset: dataset_tag(&train_path),
        seed,
        active_neurons: report.active_neurons,
        best_lr: report.best_lr,
        final_fvu: report.final_test_fvu,
        lr_results: report.lr_results.clone(),
        curve: report.train_curve.clone(),
    };
    fs::write(&record_path, record.to_text()).at(&record_path)?;
    let mut curve = String::from("step,test_fvu\n");
    for (step, f) in &report.train_curve {
        curve.push_str(&format!("{step},{f:e}\n"));
    }
    fs::write(&curve_path, curve).at(&curve_path)?;
    match &report.student {
        Some(model) => write_model(&model_path, model).at(&model_path)?,
        None => eprintln!("warning: every learning rate diverged; no student weights written"),
    }
    for (lr, f) in &report.lr_results {
        println!("lr {lr:e}: test fvu {f:.6}");
    }
    println!(
        "{spec}: best lr {:e}, test fvu {:.6} ({} active neurons)",
        report.best_lr, report.final_test_fvu, report.active_neurons
    );
    Ok(())
}

/// `<tag>=<train.acts>,<test.acts>`
fn parse_dataset(s: &str) -> CliResult<(String, PathBuf, PathBuf)> {
    let bad = || {
        CliError::usage(format!(
            "--dataset expects <tag>=<train.acts>,<test.acts>, found `{s}`"
        ))
    };
    let (tag, files) = s.split_once('=').ok_or_else(bad)?;
    let (train, test) = files.split_once(',').ok_or_else(bad)?;
    if tag.is_empty() || tag.contains(',') || train.is_empty() || test.is_empty() {
        return Err(bad());
    }
    Ok((tag.to_string(), PathBuf::from(train), PathBuf::from(test)))
}

/// Settings that change results; `jobs` only changes scheduling.
fn comparable(config: &Map<String, Value>) -> Map<String, Value> {
    let mut c = config.clone();
    c.remove("jobs");
    c
}

pub fn sweep(a: SweepArgs, ctx: Context) -> CliResult<()> {
    let mut r = ctx.resolver;
    let seed = r.seed(a.seed)?;
    let datasets: Vec<String> = r.list("dataset", a.datasets, Vec::new())?;
    let students: Vec<String> = r.list("student", a.students, Vec::new())?;
    let seeds: Vec<u64> = r.list("seeds", a.seeds, vec![seed])?;
    let default_jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let jobs: usize = r.value("jobs", a.jobs, default_jobs)?;
    let t = resolve_training(&mut r, a.training, seed)?;
    let config = r.finish()?;
    if datasets.is_empty() || students.is_empty() || seeds.is_empty() {
        return Err(CliError::usage(
            "sweep needs at least one --dataset, --student and seed",
        ));
    }
    if jobs == 0 {
        return Err(CliError::usage("--jobs must be >= 1"));
    }
    let datasets = datasets
        .iter()
        .map(|s| parse_dataset(s))
        .collect::<CliResult<Vec<_>>>()?;
    let specs = students
        .iter()
        .map(|s| parse_student(s))
        .collect::<CliResult<Vec<_>>>()?;

    let csv_path = t.out_dir.join("results.csv");
    let svg_path = t.out_dir.join("fvu.svg");
    let cells_dir = t.out_dir.join("cells");
    // an existing sweep directory is resumed only under the same settings
    if let Some(previous) = RunManifest::find(&t.out_dir, "sweep", &csv_path)? {
        if comparable(&previous.config) != comparable(&config) {
            if !ctx.force {
                return Err(CliError::usage(format!(
                    "{} holds a sweep with different settings (pass --force to discard it)",
                    t.out_dir.display()
                )));
            }
            if cells_dir.exists() {
                fs::remove_dir_all(&cells_dir).at(&cells_dir)?;
            }
        }
    }

    let teacher = Teacher::load(&t.teacher)?;
    let mut manifest = RunManifest::new("sweep", config, seed);
    let acts: Vec<&Path> = datasets
        .iter()
        .flat_map(|(_, tr, te)| [tr.as_path(), te.as_path()])
        .collect();
    record_inputs(&mut manifest, &teacher, &acts)?;
    for o in [&csv_path, &svg_path, &cells_dir] {
        manifest.output(o);
    }
    manifest.write(&t.out_dir)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    let table = pool.install(|| -> CliResult<_> {
        let loaded = datasets
            .iter()
            .map(|(tag, tr, te)| Ok((tag.clone(), load_pair(&teacher, tr, te, &t.cache_dir)?)))
            .collect::<CliResult<Vec<_>>>()?;
        Ok(run_sweep(
            &loaded,
            &specs,
            &seeds,
            &t.config,
            Some(&cells_dir),
        )?)
    })?;

    let csv = table.to_csv();
    fs::write(&csv_path, &csv).at(&csv_path)?;
    let svg = plot::render_csv(&csv, "FVU vs active neurons")?;
    fs::write(&svg_path, svg).at(&svg_path)?;
    for row in &table.rows {
        println!(
            "{} {} seed {}: fvu {:.6} (lr {:e})",
            row.dataset, row.spec, row.seed, row.final_fvu, row.best_lr
        );
    }
    println!("wrote {} and {}", csv_path.display(), svg_path.display());
    Ok(())
}
