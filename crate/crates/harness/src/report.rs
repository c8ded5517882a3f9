//! CSV rows and summary tables.
//!
//! Columns, in order:
//!
//! | column | unit |
//! |---|---|
//! | experiment | label |
//! | trial | index from 0 |
//! | seed | per-trial seed |
//! | object | id |
//! | completed | true/false |
//! | err_x_m, err_y_m | meters, final minus goal |
//! | err_theta_deg | degrees, wrapped signed |
//! | completion_time_s | seconds, empty if not completed |
//! | interactions | counted operator commands |
//! | reassignment_time_s | seconds, empty if none |
//! | ticks | ticks simulated |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use crate::experiments::TrialRecord;
use crate::stats::summarize;
use crate::HarnessError;

pub const COLUMNS: [&str; 12] = [
    "experiment",
    "trial",
    "seed",
    "object",
    "completed",
    "err_x_m",
    "err_y_m",
    "err_theta_deg",
    "completion_time_s",
    "interactions",
    "reassignment_time_s",
    "ticks",
];

fn fixed(v: f64, places: usize) -> String {
    // avoid printing "-0.0000"
    let s = format!("{v:.places$}");
    if s.trim_start_matches('-')
        .chars()
        .all(|c| c == '0' || c == '.')
    {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

fn optional(v: Option<f64>) -> String {
    v.map(|v| fixed(v, 1)).unwrap_or_default()
}

pub fn write_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record([
            r.experiment.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.object.0.to_string(),
            r.completed.to_string(),
            fixed(r.err_x, 4),
            fixed(r.err_y, 4),
            fixed(r.err_theta_deg, 4),
            optional(r.completion_time),
            r.interactions.to_string(),
            optional(r.reassignment_time),
            r.ticks.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(records: &[TrialRecord]) -> Result<String, HarnessError> {
    let mut buf = Vec::new();
    write_csv(records, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Min / Max / Median / Mean per metric, one block per experiment and
/// object. Metrics without a value in any row are left out.
pub fn summary_table(records: &[TrialRecord]) -> String {
    let mut groups: BTreeMap<(&str, u32), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.experiment, r.object.0))
            .or_default()
            .push(r);
    }
    let mut out = String::new();
    for ((experiment, object), rows) in groups {
        let done = rows.iter().filter(|r| r.completed).count();
        let _ = writeln!(
            out,
            "{experiment} object {object}: {done}/{} completed",
            rows.len()
        );
        let _ = writeln!(
            out,
            "{:<22}{:>10}{:>10}{:>10}{:>10}",
            "", "Min", "Max", "Median", "Mean"
        );
        let metrics: [(&str, Vec<f64>); 6] = [
            ("x error (m)", rows.iter().map(|r| r.err_x).collect()),
            ("y error (m)", rows.iter().map(|r| r.err_y).collect()),
            (
                "theta error (deg)",
                rows.iter().map(|r| r.err_theta_deg).collect(),
            ),
            (
                "completion time (s)",
                rows.iter().filter_map(|r| r.completion_time).collect(),
            ),
            (
                "interactions",
                rows.iter().map(|r| r.interactions as f64).collect(),
            ),
            (
                "reassignment (s)",
                rows.iter().filter_map(|r| r.reassignment_time).collect(),
            ),
        ];
        for (name, values) in metrics {
            if let Ok(s) = summarize(&values) {
                let _ = writeln!(
                    out,
                    "{name:<22}{:>10.4}{:>10.4}{:>10.4}{:>10.4}",
                    s.min, s.max, s.median, s.mean
                );
            }
        }
        out.push('\n');
    }
    out
}
