//! CSV reports: one summary row per evaluated cell and a per-sample scatter.

use anyhow::Result;
use semeq_core::eval::{EvaluationReport, SweepCell, SweepRow};

pub const REPORT_HEADER: [&str; 12] = [
    "tx_id",
    "rx_id",
    "similarity",
    "inverse_method",
    "anchor_method",
    "anchor_count",
    "seed",
    "matched_acc",
    "cross_acc_uneq",
    "cross_acc_eq",
    "agreement",
    "mean_gse",
];

pub const SCATTER_HEADER: [&str; 12] = [
    "tx_id",
    "rx_id",
    "similarity",
    "inverse_method",
    "anchor_method",
    "anchor_count",
    "seed",
    "sample",
    "label",
    "predicted",
    "g_se",
    "correct",
];

/// Formats like C's `%.9g`: nine significant digits, trailing zeros removed,
/// scientific notation for exponents below -4 or above 8.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        trim_fraction(&format!("{x:.*}", (8 - exp) as usize)).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn cell_fields(tx_id: &str, rx_id: &str, cell: &SweepCell) -> Vec<String> {
    vec![
        tx_id.to_string(),
        rx_id.to_string(),
        cell.similarity.to_string(),
        cell.inverse_method.to_string(),
        cell.anchor_method.to_string(),
        cell.anchor_count.to_string(),
        cell.seed.to_string(),
    ]
}

/// Summary CSV, one row per cell in the given order.
pub fn report_csv(tx_id: &str, rx_id: &str, rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(REPORT_HEADER)?;
    for row in rows {
        let r: &EvaluationReport = &row.report;
        let mut fields = cell_fields(tx_id, rx_id, &row.cell);
        fields.extend([
            format_sig9(r.matched_accuracy),
            r.cross_accuracy_unequalized
                .map_or_else(|| "NA".to_string(), format_sig9),
            format_sig9(r.cross_accuracy_equalized),
            format_sig9(r.decoder_agreement),
            format_sig9(r.mean_reconstruction_error),
        ]);
        w.write_record(&fields)?;
    }
    Ok(w.into_inner()?)
}

/// Per-sample `(g_se, correct)` pairs for every cell.
pub fn scatter_csv(tx_id: &str, rx_id: &str, rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(SCATTER_HEADER)?;
    for row in rows {
        let prefix = cell_fields(tx_id, rx_id, &row.cell);
        for (i, s) in row.report.per_sample_records.iter().enumerate() {
            let mut fields = prefix.clone();
            fields.extend([
                i.to_string(),
                s.label.to_string(),
                s.predicted.to_string(),
                format_sig9(s.g_se),
                u8::from(s.correct()).to_string(),
            ]);
            w.write_record(&fields)?;
        }
    }
    Ok(w.into_inner()?)
}
