use std::io::Write;

use serde::{Deserialize, Serialize};

use super::experiment::ResultRow;
use crate::error::Result;
use crate::linalg::mean_and_se;

pub const SUMMARY_HEADER: [&str; 9] =
    ["scheme", "sweep_name", "sweep_value", "trials", "feasible", "gap_mean", "gap_se", "eps_bs_mean", "eps_bs_se"];

/// Statistics of one (scheme, sweep point) group over its feasible trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: String,
    pub sweep_name: String,
    pub sweep_value: f64,
    pub trials: usize,
    pub feasible: usize,
    pub gap_mean: f64,
    pub gap_se: f64,
    pub eps_bs_mean: f64,
    pub eps_bs_se: f64,
}

/// Groups rows by (scheme, sweep name, sweep value) in order of first
/// appearance. Infeasible rows count towards `trials` only.
pub fn aggregate_trials(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(&str, &str, f64)> = Vec::new();
    let mut groups: Vec<Vec<&ResultRow>> = Vec::new();
    for r in rows {
        let key = (r.scheme.as_str(), r.sweep_name.as_str(), r.sweep_value);
        match keys.iter().position(|k| k.0 == key.0 && k.1 == key.1 && k.2.to_bits() == key.2.to_bits()) {
            Some(i) => groups[i].push(r),
            None => {
                keys.push(key);
                groups.push(vec![r]);
            }
        }
    }
    keys.into_iter()
        .zip(groups)
        .map(|((scheme, name, value), group)| {
            let ok: Vec<&ResultRow> = group.iter().copied().filter(|r| r.feasible).collect();
            let gaps: Vec<f64> = ok.iter().map(|r| r.gap).collect();
            let eps: Vec<f64> = ok.iter().map(|r| r.eps_bs_mean).collect();
            let (gap_mean, gap_se) = mean_and_se(&gaps);
            let (eps_bs_mean, eps_bs_se) = mean_and_se(&eps);
            SummaryRow {
                scheme: scheme.to_string(),
                sweep_name: name.to_string(),
                sweep_value: value,
                trials: group.len(),
                feasible: ok.len(),
                gap_mean,
                gap_se,
                eps_bs_mean,
                eps_bs_se,
            }
        })
        .collect()
}

fn real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:?}")
    }
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.scheme.clone(),
            r.sweep_name.clone(),
            real(r.sweep_value),
            r.trials.to_string(),
            r.feasible.to_string(),
            real(r.gap_mean),
            real(r.gap_se),
            real(r.eps_bs_mean),
            real(r.eps_bs_se),
        ])?;
    }
    w.flush()?;
    Ok(())
}
