//! Student–teacher distillation: training loop, learning-rate sweep and
//! budget sweeps.

mod spec;
mod sweep;
mod train;

pub use crate::metrics::{fvu, fvu_ratio};
pub use spec::{Family, RouterKind, StudentSpec};
pub use sweep::{cell_path, run_sweep, CellRecord, SweepTable, CSV_HEADER};
pub use train::{
    distill, map_rows, test_fvu, train_one, DistillData, FvuReport, LrRun, TrainConfig,
};
