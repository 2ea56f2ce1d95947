//! Rendering of experiment results as a text table, CSV or JSON.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::forest_experiment::ViewOutcome;
use crate::sweep::SweepRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Table,
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(Self::Table),
            "csv" => Ok(Self::Csv),
            "json" | "json-like" => Ok(Self::Json),
            other => Err(format!("unknown format `{other}` (expected table, csv or json)")),
        }
    }
}

/// CSV with a header row; floats keep their shortest round-trip form.
pub fn to_csv<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize");
    }
    if rows.is_empty() {
        return String::new();
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("values serialize")
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut s = format!(
        "{:>8} {:>14} {:>14} {:>14} {:>14} {:>10} {:>6}\n",
        "sigma", "rot_err_deg", "rot_std_deg", "focal_err_px", "focal_std_px", "mean_iou", "fails"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>8.3} {:>14.6} {:>14.6} {:>14.4} {:>14.4} {:>10.6} {:>6}",
            r.sigma, r.mean_rot_err_deg, r.std_rot_err_deg, r.mean_focal_err_px, r.std_focal_err_px, r.mean_iou, r.fail_count
        );
    }
    s
}

pub fn format_sweep(rows: &[SweepRow], format: OutputFormat) -> String {
    match format {
        OutputFormat::Table => sweep_table(rows),
        OutputFormat::Csv => to_csv(rows),
        OutputFormat::Json => to_json(rows),
    }
}

#[derive(Serialize)]
struct FovRow {
    fov_deg: f64,
    focal_px: f64,
    pan_deg: f64,
    tilt_deg: f64,
    iou: f64,
    failed: bool,
}

fn fov_rows(outcomes: &[ViewOutcome]) -> Vec<FovRow> {
    outcomes
        .iter()
        .map(|o| FovRow {
            fov_deg: o.fov_deg,
            focal_px: o.ground_truth.focal_length,
            pan_deg: o.ground_truth.pan,
            tilt_deg: o.ground_truth.tilt,
            iou: o.iou,
            failed: o.failed(),
        })
        .collect()
}

pub fn format_fov(outcomes: &[ViewOutcome], format: OutputFormat) -> String {
    let rows = fov_rows(outcomes);
    match format {
        OutputFormat::Csv => to_csv(&rows),
        OutputFormat::Json => to_json(&rows),
        OutputFormat::Table => {
            let mut s = format!("{:>8} {:>10} {:>8} {:>8} {:>8} {:>6}\n", "fov_deg", "focal_px", "pan", "tilt", "iou", "fail");
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{:>8.2} {:>10.1} {:>8.2} {:>8.2} {:>8.4} {:>6}",
                    r.fov_deg, r.focal_px, r.pan_deg, r.tilt_deg, r.iou, r.failed
                );
            }
            s
        }
    }
}
