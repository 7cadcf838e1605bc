//! Correlation metrics, logistic mapping, and the k-fold evaluation protocol.

pub mod analysis;
pub mod logistic;
pub mod metrics;
pub mod protocol;
pub mod splits;

pub use analysis::{
    analyze, fit_quartic, write_scatter_csv, write_table_csv, Analysis, AnalysisError, GroupRow, QuarticFit, ScatterPoint,
};
pub use logistic::{logistic_fit, FitError, LogisticFit, LogisticParams};
pub use metrics::{average_ranks, krcc, plcc, rmse, srocc, MetricError};
pub use protocol::{
    evaluate, summarize, EvalError, EvalReport, FnScorer, FoldReport, MetricSummary, ModelScorer, Scorer, TableScorer,
};
pub use splits::{make_splits, SplitBy, SplitError};
