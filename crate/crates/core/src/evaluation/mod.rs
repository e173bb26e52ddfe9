//! Ranking metrics, the Wilcoxon signed-rank test, comparison reports and a
//! linear domain probe.

mod metrics;
mod probe;
mod report;
mod wilcoxon;

pub use metrics::{evaluate_pools, mrr, precision_at_1, score_pool, MetricsReport, PerQuery, QueryResult};
pub use probe::{domain_probe, ProbeResult};
pub use report::{emit_report, format_delta, render_table, ComparisonRow, RowLabels, ALPHA};
pub use wilcoxon::{wilcoxon_signed_rank, EXACT_MAX_N};
