//! Averages per-sequence evaluation summaries into one table.

use std::fmt::Write as _;

use accd_core::io::dataset::SequenceLayout;
use accd_core::metrics::{format_relative_change, relative_change, MetricsRow};

use crate::error::{CliError, CliResult};
use crate::pipeline::{read_summary, EvalSummary, SUMMARY_FILE};

/// Unweighted mean over sequences of the before and after rows, with the
/// relative change recomputed from the averaged values.
pub fn aggregate(summaries: &[EvalSummary]) -> Option<EvalSummary> {
    let before: Vec<MetricsRow> = summaries.iter().map(|s| s.before).collect();
    let after: Vec<MetricsRow> = summaries.iter().map(|s| s.after).collect();
    Some(EvalSummary {
        before: MetricsRow::average(&before)?,
        after: MetricsRow::average(&after)?,
    })
}

/// Plain-text table with one column per metric.
pub fn render(method: &str, sequences: usize, s: &EvalSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "method: {method}   sequences: {sequences}");
    let mut header = format!("{:<12}", "");
    for name in MetricsRow::NAMES {
        let _ = write!(header, "{name:>10}");
    }
    let _ = writeln!(out, "{header}");
    for (label, row) in [("before", &s.before), ("after", &s.after)] {
        let mut line = format!("{label:<12}");
        for v in row.values() {
            let _ = write!(line, "{v:>10.4}");
        }
        if row.evaluated_pixels == 0 {
            line.push_str("   (no evaluated pixels)");
        }
        let _ = writeln!(out, "{line}");
    }
    let mut line = format!("{:<12}", "change %");
    for (b, a) in s.before.values().iter().zip(s.after.values()) {
        let _ = write!(line, "{:>10}", format_relative_change(relative_change(*b, a)));
    }
    let _ = writeln!(out, "{line}");
    let _ = writeln!(
        out,
        "object metrics (_ob): a prediction touching any positive pixel is a TP, including repeat hits on one region"
    );
    out
}

/// Reads `eval/<method>/summary.csv` of every sequence and renders the
/// averaged table.
pub fn run_report(sequences: &[SequenceLayout], method: &str) -> CliResult<String> {
    if sequences.is_empty() {
        return Err(CliError::Usage("report needs at least one --seq".into()));
    }
    let summaries = sequences
        .iter()
        .map(|l| read_summary(&l.eval_dir(method).join(SUMMARY_FILE)))
        .collect::<CliResult<Vec<_>>>()?;
    let avg = aggregate(&summaries).expect("non-empty");
    Ok(render(method, summaries.len(), &avg))
}
