//! CSV emission with pinned schemas.
//!
//! Every emitter returns the complete file contents as a string: a header
//! row followed by data rows, `\n` line endings, floats rendered with Rust's
//! shortest round-trip formatting. Given equal inputs the bytes are equal,
//! which is what makes CLI output diffable across runs and thread counts.

use crate::overlap::OverlapResult;
use crate::pipeline::{LineFit, RankEntry, SweepRow};
use crate::specificity::{SpecificityResult, VoronoiHistogram};

fn fmt(x: f64) -> String {
    format!("{x}")
}

/// `run_id,lambda,metric,samples,training,value,std_error`
pub fn specificity_csv(run_id: &str, training_count: usize, r: &SpecificityResult) -> String {
    let mut out = String::from("run_id,lambda,metric,samples,training,value,std_error\n");
    out.push_str(&format!(
        "{},{},{},{},{},{},{}\n",
        run_id,
        fmt(r.lambda),
        r.metric,
        r.sample_count,
        training_count,
        fmt(r.value),
        fmt(r.std_error),
    ));
    out
}

/// `index,count`
pub fn histogram_csv(h: &VoronoiHistogram) -> String {
    let mut out = String::from("index,count\n");
    for (i, c) in h.counts().iter().enumerate() {
        out.push_str(&format!("{i},{c}\n"));
    }
    out
}

/// `scheme,label,weight,per_label_overlap,generalized`
pub fn overlap_csv(labels: &[String], r: &OverlapResult) -> String {
    let mut out = String::from("scheme,label,weight,per_label_overlap,generalized\n");
    for (i, label) in labels.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.scheme.kind,
            label,
            fmt(r.scheme.weights[i]),
            fmt(r.per_label[i]),
            fmt(r.value),
        ));
    }
    out
}

/// `d,repeat,specificity,std_error,overlap`
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("d,repeat,specificity,std_error,overlap\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt(r.d),
            r.repeat,
            fmt(r.specificity),
            fmt(r.std_error),
            fmt(r.overlap),
        ));
    }
    out
}

/// `name,specificity,specificity_rank,specificity_relrank,overlap,overlap_rank,overlap_relrank`
///
/// Overlap columns are left empty for sets without labels.
pub fn rank_csv(entries: &[RankEntry]) -> String {
    let mut out = String::from(
        "name,specificity,specificity_rank,specificity_relrank,overlap,overlap_rank,overlap_relrank\n",
    );
    for e in entries {
        let overlap = e.overlap.map(fmt).unwrap_or_default();
        let overlap_rank = e.overlap_rank.map(|r| r.to_string()).unwrap_or_default();
        let overlap_rel = e.overlap_relrank.map(fmt).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.name,
            fmt(e.specificity),
            e.specificity_rank,
            fmt(e.specificity_relrank),
            overlap,
            overlap_rank,
            overlap_rel,
        ));
    }
    out
}

/// `d_floor,slope,intercept,correlation,points`
pub fn fit_csv(fit: &LineFit, d_floor: f64) -> String {
    let mut out = String::from("d_floor,slope,intercept,correlation,points\n");
    out.push_str(&format!(
        "{},{},{},{},{}\n",
        fmt(d_floor),
        fmt(fit.slope),
        fmt(fit.intercept),
        fmt(fit.correlation),
        fit.points,
    ));
    out
}
