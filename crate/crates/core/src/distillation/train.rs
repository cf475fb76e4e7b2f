use rand::seq::SliceRandom;

use crate::distillation::StudentSpec;
use crate::error::{check_dim, Error, Result};
use crate::layers::{
    adam_step, backward_rows, cosine_lr, AdamHyper, AdamState, Batch, Model, Parameters,
};
use crate::linalg::DenseMatrix;
use crate::metrics::fvu;
use crate::rng::{derive_seed, item_rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_grid: Vec<f64>,
    pub seed: u64,
    /// Steps between test evaluations; `None` spreads 20 evaluations over
    /// the run. Step 0 and the final step are always evaluated.
    pub eval_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 1024,
            lr_grid: vec![1e-3, 3e-4, 1e-4],
            seed: 0,
            eval_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidInput(
                "epochs and batch size must be >= 1".into(),
            ));
        }
        if self.lr_grid.is_empty() || self.lr_grid.iter().any(|&lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(Error::InvalidInput(
                "learning-rate grid must be nonempty and positive".into(),
            ));
        }
        if self.eval_every == Some(0) {
            return Err(Error::InvalidInput("eval_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Inputs paired with frozen teacher outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillData {
    pub train_x: DenseMatrix,
    pub train_y: DenseMatrix,
    pub test_x: DenseMatrix,
    pub test_y: DenseMatrix,
}

impl DistillData {
    pub fn new(
        train_x: DenseMatrix,
        train_y: DenseMatrix,
        test_x: DenseMatrix,
        test_y: DenseMatrix,
    ) -> Result<Self> {
        check_dim("train targets", train_x.rows(), train_y.rows())?;
        check_dim("test targets", test_x.rows(), test_y.rows())?;
        check_dim("test input dimension", train_x.cols(), test_x.cols())?;
        check_dim("test output dimension", train_y.cols(), test_y.cols())?;
        if train_x.rows() == 0 || test_x.rows() == 0 {
            return Err(Error::InvalidInput(
                "train and test sets must be nonempty".into(),
            ));
        }
        Ok(Self {
            train_x,
            train_y,
            test_x,
            test_y,
        })
    }

    /// Computes teacher outputs once for both splits.
    pub fn from_teacher(
        teacher: impl Fn(&[f64]) -> Result<Vec<f64>> + Sync,
        train_x: DenseMatrix,
        test_x: DenseMatrix,
    ) -> Result<Self> {
        let train_y = map_rows(&train_x, &teacher)?;
        let test_y = map_rows(&test_x, &teacher)?;
        Self::new(train_x, train_y, test_x, test_y)
    }

    pub fn d_in(&self) -> usize {
        self.train_x.cols()
    }

    pub fn d_out(&self) -> usize {
        self.train_y.cols()
    }
}

/// Applies `f` to every row in parallel (rows are independent).
pub fn map_rows(
    x: &DenseMatrix,
    f: &(impl Fn(&[f64]) -> Result<Vec<f64>> + Sync),
) -> Result<DenseMatrix> {
    use rayon::prelude::*;
    let rows: Vec<Vec<f64>> = (0..x.rows())
        .into_par_iter()
        .map(|i| f(x.row(i)))
        .collect::<Result<_>>()?;
    DenseMatrix::from_rows(&rows)
}

/// Outcome of one learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LrRun {
    pub lr: f64,
    /// `(step, test FVU)`, starting at step 0.
    pub curve: Vec<(usize, f64)>,
    /// `+inf` when training diverged.
    pub final_fvu: f64,
    pub student: Option<Model>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FvuReport {
    pub spec: StudentSpec,
    pub train_curve: Vec<(usize, f64)>,
    pub final_test_fvu: f64,
    pub best_lr: f64,
    pub active_neurons: usize,
    /// Final test FVU of every grid point, in grid order.
    pub lr_results: Vec<(f64, f64)>,
    /// The student trained with `best_lr`, unless it diverged.
    pub student: Option<Model>,
}

pub fn test_fvu(student: &Model, data: &DistillData) -> Result<f64> {
    Ok(evaluate(student, data)?.unwrap_or(f64::INFINITY))
}

/// Test FVU, or `None` when the student's predictions are not finite. A
/// finite student can still score `+inf` against a constant teacher.
fn evaluate(student: &Model, data: &DistillData) -> Result<Option<f64>> {
    let pred = student.forward_batch(&data.test_x, None)?;
    if !pred.is_finite() {
        return Ok(None);
    }
    fvu(&pred, &data.test_y).map(Some)
}

/// Trains one student at one learning rate: shuffled minibatch Adam on the
/// MSE against the teacher outputs with cosine decay to zero.
pub fn train_one(
    data: &DistillData,
    spec: &StudentSpec,
    config: &TrainConfig,
    lr: f64,
) -> Result<LrRun> {
    config.validate()?;
    let mut student = spec.build(data.d_in(), data.d_out(), config.seed)?;
    let n = data.train_x.rows();
    let steps_per_epoch = n.div_ceil(config.batch_size);
    let total = steps_per_epoch * config.epochs;
    let eval_every = config
        .eval_every
        .unwrap_or_else(|| total.div_ceil(20))
        .max(1);
    let batch = Batch::new(&data.train_x, &data.train_y);
    let mut state = AdamState::new(student.param_count());
    let mut curve = vec![(0, test_fvu(&student, data)?)];
    let mut step = 0;
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        let mut rng = item_rng(derive_seed(config.seed, epoch as u64), Stream::Shuffle, 0);
        order.sort_unstable();
        order.shuffle(&mut rng);
        for rows in order.chunks(config.batch_size) {
            let (loss, grad) = backward_rows(&student, batch, rows)?;
            if !loss.is_finite()
                || grad
                    .param_slices()
                    .iter()
                    .any(|s| s.iter().any(|g| !g.is_finite()))
            {
                return Ok(diverged(lr, curve, step));
            }
            let hyper = AdamHyper::with_lr(cosine_lr(lr, step, total));
            adam_step(&mut student, &grad, &mut state, &hyper);
            step += 1;
            if step % eval_every == 0 || step == total {
                match evaluate(&student, data)? {
                    Some(f) => curve.push((step, f)),
                    None => return Ok(diverged(lr, curve, step)),
                }
            }
        }
    }
    let final_fvu = curve.last().map_or(f64::INFINITY, |c| c.1);
    Ok(LrRun {
        lr,
        curve,
        final_fvu,
        student: Some(student),
    })
}

fn diverged(lr: f64, mut curve: Vec<(usize, f64)>, step: usize) -> LrRun {
    curve.push((step, f64::INFINITY));
    LrRun {
        lr,
        curve,
        final_fvu: f64::INFINITY,
        student: None,
    }
}

/// Trains at every grid learning rate and keeps the run with the lowest
/// final test FVU (the earliest grid point on ties).
pub fn distill(data: &DistillData, spec: &StudentSpec, config: &TrainConfig) -> Result<FvuReport> {
    config.validate()?;
    let runs = config
        .lr_grid
        .iter()
        .map(|&lr| train_one(data, spec, config, lr))
        .collect::<Result<Vec<_>>>()?;
    let lr_results: Vec<(f64, f64)> = runs.iter().map(|r| (r.lr, r.final_fvu)).collect();
    let best = runs
        .into_iter()
        .reduce(|best, r| {
            if r.final_fvu < best.final_fvu {
                r
            } else {
                best
            }
        })
        .expect("nonempty grid");
    Ok(FvuReport {
        spec: spec.clone(),
        active_neurons: spec.active_neurons(),
        train_curve: best.curve,
        final_test_fvu: best.final_fvu,
        best_lr: best.lr,
        lr_results,
        student: best.student,
    })
}
