//! File emitters. CSV files are comma-separated with a header row, LF line
//! endings and 17-significant-digit reals, so every value round-trips
//! losslessly. Non-finite values are refused; divergence is reported in the
//! summary, never as NaN/Inf inside data files.

use gamedyn::analysis::format_float;
use thiserror::Error;

use crate::pipeline::{RunStatus, RunSummary, SweepRow};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("refusing to write non-finite value for column {column}")]
    NonFinite { column: &'static str },
}

/// One recorded training step.
///
/// `wall_ms` is elapsed wall-clock time and therefore not reproducible; it
/// stays in memory for callers and is never written to output files, which
/// must be byte-identical across reruns.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub step: u64,
    pub field_norm: f64,
    pub player1_utility: f64,
    pub player2_utility: f64,
    pub mode_coverage: Option<usize>,
    pub wall_ms: u64,
}

pub fn trajectory_csv(records: &[TrajectoryRecord]) -> Result<String, OutputError> {
    let mut out = String::from("step,field_norm,player1_utility,player2_utility,mode_coverage\n");
    for r in records {
        for (v, column) in [
            (r.field_norm, "field_norm"),
            (r.player1_utility, "player1_utility"),
            (r.player2_utility, "player2_utility"),
        ] {
            if !v.is_finite() {
                return Err(OutputError::NonFinite { column });
            }
        }
        out.push_str(&r.step.to_string());
        out.push(',');
        out.push_str(&format_float(r.field_norm));
        out.push(',');
        out.push_str(&format_float(r.player1_utility));
        out.push(',');
        out.push_str(&format_float(r.player2_utility));
        out.push(',');
        if let Some(c) = r.mode_coverage {
            out.push_str(&c.to_string());
        }
        out.push('\n');
    }
    Ok(out)
}

/// Parses `trajectory.csv` back; used by tests and downstream tooling.
pub fn parse_trajectory_csv(text: &str) -> Result<Vec<TrajectoryRecord>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    if header != "step,field_norm,player1_utility,player2_utility,mode_coverage" {
        return Err(format!("unexpected header {header:?}"));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(format!("row {i}: expected 5 fields, got {}", fields.len()));
        }
        let parse_f = |s: &str| s.parse::<f64>().map_err(|e| format!("row {i}: {e}"));
        records.push(TrajectoryRecord {
            step: fields[0].parse().map_err(|e| format!("row {i}: {e}"))?,
            field_norm: parse_f(fields[1])?,
            player1_utility: parse_f(fields[2])?,
            player2_utility: parse_f(fields[3])?,
            mode_coverage: if fields[4].is_empty() {
                None
            } else {
                Some(fields[4].parse().map_err(|e| format!("row {i}: {e}"))?)
            },
            wall_ms: 0,
        });
    }
    Ok(records)
}

pub fn status_name(status: RunStatus) -> &'static str {
    match status {
        RunStatus::Converged => "converged",
        RunStatus::Marginal => "marginal",
        RunStatus::Diverged => "diverged",
    }
}

pub fn aggregate_csv(rows: &[SweepRow]) -> Result<String, OutputError> {
    let mut out = String::from("value,final_field_norm,status,fitted_rate\n");
    for r in rows {
        if !r.value.is_finite() {
            return Err(OutputError::NonFinite { column: "value" });
        }
        if !r.final_field_norm.is_finite() {
            return Err(OutputError::NonFinite {
                column: "final_field_norm",
            });
        }
        out.push_str(&format_float(r.value));
        out.push(',');
        out.push_str(&format_float(r.final_field_norm));
        out.push(',');
        out.push_str(status_name(r.status));
        out.push(',');
        if let Some(rate) = r.fitted_rate {
            if !rate.is_finite() {
                return Err(OutputError::NonFinite {
                    column: "fitted_rate",
                });
            }
            out.push_str(&format_float(rate));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn summary_json(summary: &RunSummary) -> String {
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_round_trip() {
        let records = vec![
            TrajectoryRecord {
                step: 0,
                field_norm: 1.0 / 3.0,
                player1_utility: -0.125,
                player2_utility: 0.125,
                mode_coverage: None,
                wall_ms: 5,
            },
            TrajectoryRecord {
                step: 10,
                field_norm: 1e-17,
                player1_utility: 2.5,
                player2_utility: -2.5,
                mode_coverage: Some(7),
                wall_ms: 9,
            },
        ];
        let csv = trajectory_csv(&records).unwrap();
        assert!(csv.ends_with('\n'));
        assert!(!csv.contains('\r'));
        let back = parse_trajectory_csv(&csv).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].field_norm.to_bits(), records[0].field_norm.to_bits());
        assert_eq!(back[1].mode_coverage, Some(7));
    }

    #[test]
    fn non_finite_rejected() {
        let records = vec![TrajectoryRecord {
            step: 0,
            field_norm: f64::INFINITY,
            player1_utility: 0.0,
            player2_utility: 0.0,
            mode_coverage: None,
            wall_ms: 0,
        }];
        assert!(trajectory_csv(&records).is_err());
    }
}
