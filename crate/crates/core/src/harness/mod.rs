//! Convergence studies: reference solutions, solver sweeps, order fits and result files.

mod emit;
mod fit;
mod reference;
mod selftest;
mod study;

pub use emit::{
    emit, fit_csv, read_csv, write_csv, write_json, CsvFit, CsvRow, Format, CSV_COLUMNS,
};
pub use fit::{fit_order, fit_order_window, OrderFit, WINDOW_MAX, WINDOW_MIN};
pub use reference::{
    reference_solution, rk4_checked, rk4_lambda, ReferenceMode, RK4_STEPS, RK4_TOLERANCE,
};
pub use selftest::{selftest, simpson, Check};
pub use study::{
    run_study, ConfigFit, ConvergenceStudy, ErrorNorm, ErrorScale, RngKind, RunOptions, StartMode,
    StudyResults, StudyRow,
};
