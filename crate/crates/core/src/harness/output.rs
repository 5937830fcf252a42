use std::io::Write;

use super::experiment::TrialRecord;
use super::suites::BoundRow;
use crate::error::Result;

pub const TRIAL_COLUMNS: [&str; 10] = [
    "trial",
    "seed",
    "n",
    "alpha",
    "error_l2_normalized",
    "bound_total",
    "bound_bias",
    "bound_noise",
    "gates_met",
    "wall_ms",
];

pub const BOUND_COLUMNS: [&str; 11] = [
    "suite",
    "manifold",
    "parameters",
    "measured",
    "bound",
    "margin",
    "tolerance",
    "conditions_met",
    "applicable",
    "caveat",
    "verified",
];

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_trials_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIAL_COLUMNS)?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.seed.to_string(),
            r.n.to_string(),
            format_float(r.alpha),
            format_float(r.error_l2_normalized),
            format_float(r.bound_total),
            format_float(r.bound_bias),
            format_float(r.bound_noise),
            r.gates_met.to_string(),
            r.wall_ms.map(format_float).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn trials_csv_string(records: &[TrialRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_trials_csv(records, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn write_bounds_csv<W: Write>(rows: &[BoundRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BOUND_COLUMNS)?;
    for row in rows {
        let r = &row.report;
        let conditions: Vec<String> = r.conditions_met.iter().map(|c| format!("{}={}", c.name, c.met)).collect();
        w.write_record([
            row.suite.to_string(),
            row.manifold.clone(),
            row.parameters.clone(),
            format_float(r.measured),
            format_float(r.bound),
            format_float(r.margin),
            format_float(r.tolerance),
            conditions.join("; "),
            r.applicable().to_string(),
            r.caveat.clone().unwrap_or_default(),
            r.verified().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
