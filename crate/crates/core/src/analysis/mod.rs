//! Classification metrics, ROC curves, sparsity reports and filter export.

mod metrics;
mod report;
mod roc;

pub use metrics::{compute_metrics, compute_metrics_from_logits, Metrics};
pub use report::{
    export_filters, filters_csv, metrics_csv, roc_csv, sparsity_csv, sparsity_histogram_csv, sparsity_report,
    FilterTrace, SparsityReport, TINY_NORM,
};
pub use roc::{roc_curve, Roc};
