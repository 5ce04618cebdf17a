//! Attack report tables.

use std::io::Write;

use anyhow::Result;
use fedsvd::attacks::{mean_score, AttackReport, Method};

/// One row per attack run.
pub fn write_attack_csv(reports: &[AttackReport], w: impl Write) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record([
        "method",
        "b",
        "b_assumed",
        "side",
        "seed",
        "max_abs_pearson",
        "assignment_mean",
        "components",
        "converged",
    ])?;
    let opt = |v: Option<usize>| v.map(|b| b.to_string()).unwrap_or_default();
    for r in reports {
        csv.write_record([
            r.method.to_string(),
            opt(r.block_size),
            opt(r.b_assumed),
            r.side.to_string(),
            r.seed.to_string(),
            format!("{:.6}", r.max_abs_pearson),
            format!("{:.6}", r.assignment_mean),
            r.components.to_string(),
            r.converged.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Mean score per method and block size, the stronger side taken per seed.
pub fn write_attack_summary(reports: &[AttackReport], b_values: &[usize], w: impl Write) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["method", "b", "mean_score"])?;
    if let Some(s) = mean_score(reports, Method::Random, None) {
        csv.write_record(["random".to_string(), String::new(), format!("{s:.6}")])?;
    }
    for method in [Method::Ica, Method::IcaBlock] {
        for &b in b_values {
            if let Some(s) = mean_score(reports, method, Some(b)) {
                csv.write_record([method.to_string(), b.to_string(), format!("{s:.6}")])?;
            }
        }
    }
    csv.flush()?;
    Ok(())
}
