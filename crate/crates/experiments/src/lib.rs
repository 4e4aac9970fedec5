//! Drivers for the two surrogate tasks (end-to-end setpoint prediction and
//! active-constraint prediction), the warm-start benchmark, their metrics and
//! report files.

mod common;
mod constraints;
mod e2e;
pub mod metrics;
pub mod report;
mod search;
mod warmstart;

pub use common::{ExperimentError, RunOptions, SeedSplit};
pub use constraints::{run_constraint_prediction, ConstraintBreakdown, ConstraintOutcome, ConstraintReport, ConstraintRow, ConstraintSeed};
pub use e2e::{run_end_to_end, EndToEndOutcome, EndToEndReport, EndToEndRow, EndToEndSeed};
pub use metrics::{metric_cost_deviation, metric_elementwise_accuracy, metric_legality_rate, MetricError};
pub use search::{GridSearchSpace, SearchConfig};
pub use warmstart::{run_warm_start_benchmark, ActivePredictor, WarmFailure, WarmPair, WarmStartReport, OBJECTIVE_REL_TOL};
