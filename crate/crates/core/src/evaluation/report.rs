//! Baseline-versus-treatment comparison rows and their text rendering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::wilcoxon::wilcoxon_signed_rank;
use super::MetricsReport;

/// Significance level for the dagger.
pub const ALPHA: f64 = 0.05;

/// What a row describes; copied verbatim into the report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowLabels {
    pub source: String,
    pub target: String,
    pub model: String,
    pub variant: String,
}

/// One Table-1-style row. Deltas are relative changes in percent against
/// the baseline (`None` when the baseline is 0); p-values are `None` when
/// the test has too few nonzero differences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub source: String,
    pub target: String,
    pub model: String,
    pub variant: String,
    pub p1: f64,
    pub mrr: f64,
    pub p1_delta_pct: Option<f64>,
    pub mrr_delta_pct: Option<f64>,
    pub p_value_p1: Option<f64>,
    pub p_value_mrr: Option<f64>,
    pub significant: bool,
}

impl ComparisonRow {
    pub fn p1_significant(&self) -> bool {
        self.p_value_p1.is_some_and(|p| p < ALPHA)
    }

    pub fn mrr_significant(&self) -> bool {
        self.p_value_mrr.is_some_and(|p| p < ALPHA)
    }
}

fn relative_change(base: f64, new: f64) -> Option<f64> {
    (base != 0.0).then(|| (new - base) / base * 100.0)
}

/// Compares `treatment` against `baseline` over the same queries.
pub fn emit_report(baseline: &MetricsReport, treatment: &MetricsReport, labels: RowLabels) -> Result<ComparisonRow> {
    let same = baseline.per_query.len() == treatment.per_query.len()
        && baseline.per_query.iter().zip(&treatment.per_query).all(|(a, b)| a.qid == b.qid);
    if !same {
        return Err(Error::Input("baseline and treatment were evaluated on different queries".into()));
    }
    let pairs = baseline.per_query.iter().zip(&treatment.per_query);
    let d_p1: Vec<f64> = pairs.clone().map(|(a, b)| b.p1 - a.p1).collect();
    let d_rr: Vec<f64> = pairs.map(|(a, b)| b.rr - a.rr).collect();
    let p_value_p1 = wilcoxon_signed_rank(&d_p1).ok();
    let p_value_mrr = wilcoxon_signed_rank(&d_rr).ok();
    let significant = p_value_p1.is_some_and(|p| p < ALPHA) || p_value_mrr.is_some_and(|p| p < ALPHA);
    Ok(ComparisonRow {
        source: labels.source,
        target: labels.target,
        model: labels.model,
        variant: labels.variant,
        p1: treatment.p_at_1,
        mrr: treatment.mrr,
        p1_delta_pct: relative_change(baseline.p_at_1, treatment.p_at_1),
        mrr_delta_pct: relative_change(baseline.mrr, treatment.mrr),
        p_value_p1,
        p_value_mrr,
        significant,
    })
}

/// Whole percent, rounded to nearest; below one percent in magnitude one
/// decimal truncated toward zero (`+.4%`, `-.3%`).
pub fn format_delta(delta: Option<f64>) -> String {
    let Some(d) = delta else {
        return "—".to_string();
    };
    if d.abs() < 1.0 {
        let tenths = (d * 10.0).trunc();
        if tenths == 0.0 {
            return "0%".to_string();
        }
        let sign = if tenths > 0.0 { "+" } else { "-" };
        return format!("{sign}.{}%", tenths.abs() as i64);
    }
    let r = d.round() as i64;
    format!("{}{r}%", if r > 0 { "+" } else { "" })
}

fn cell(value: f64, delta: Option<f64>, dagger: bool, show_delta: bool) -> String {
    let mut s = format!("{value:.4}");
    if show_delta {
        s.push_str(&format!(" ({})", format_delta(delta)));
    }
    if dagger {
        s.push('†');
    }
    s
}

/// Aligned text table, one line per row. Rows whose variant equals
/// `baseline_variant` are printed without deltas.
pub fn render_table(rows: &[ComparisonRow], baseline_variant: &str) -> String {
    let header = ["source → target", "model", "variant", "P@1", "MRR"].map(String::from);
    let mut lines = vec![header.to_vec()];
    for r in rows {
        let base = r.variant == baseline_variant;
        lines.push(vec![
            format!("{} → {}", r.source, r.target),
            r.model.clone(),
            r.variant.clone(),
            cell(r.p1, r.p1_delta_pct, !base && r.p1_significant(), !base),
            cell(r.mrr, r.mrr_delta_pct, !base && r.mrr_significant(), !base),
        ]);
    }
    let widths: Vec<usize> = (0..header.len()).map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for l in &lines {
        let padded: Vec<String> = l.iter().zip(&widths).map(|(s, w)| format!("{s}{}", " ".repeat(w - s.chars().count()))).collect();
        out.push_str(padded.join("  ").trim_end());
        out.push('\n');
    }
    out
}
