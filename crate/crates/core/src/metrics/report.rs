use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{e_measure_max, mae, region_metrics, s_measure, weighted_fmeasure, MetricError, MetricsConfig};
use crate::grid::{read_map_png, Map, Mask};
use crate::io::{self, IoError};

pub const CSV_HEADER: &str = "id,dice,iou,wfm,s_alpha,e_phi_max,mae,recall,precision";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub id: String,
    pub dice: f64,
    pub iou: f64,
    pub wfm: f64,
    pub s_alpha: f64,
    pub e_phi_max: f64,
    pub mae: f64,
    pub recall: f64,
    pub precision: f64,
}

impl MetricsRow {
    fn values(&self) -> [f64; 8] {
        [
            self.dice,
            self.iou,
            self.wfm,
            self.s_alpha,
            self.e_phi_max,
            self.mae,
            self.recall,
            self.precision,
        ]
    }

    fn csv_line(id: &str, v: &[f64; 8]) -> String {
        let mut line = id.to_string();
        for x in v {
            let _ = write!(line, ",{x:.6}");
        }
        line
    }

    /// Scores one prediction. `pred` is a soft map in `[0, 1]`, `gt` the ground truth.
    pub fn compute(id: &str, pred: &Map, gt: &Mask, cfg: &MetricsConfig) -> Result<Self, MetricError> {
        let binary = pred.threshold(cfg.threshold);
        let region = region_metrics(&binary, gt)?;
        let wfm = match weighted_fmeasure(pred, gt, cfg.beta2) {
            Ok(v) => v,
            Err(MetricError::EmptyGroundTruth) => 0.0,
            Err(e) => return Err(e),
        };
        Ok(Self {
            id: id.to_string(),
            dice: region.dice,
            iou: region.iou,
            wfm,
            s_alpha: s_measure(pred, gt, cfg.alpha)?,
            e_phi_max: e_measure_max(pred, gt)?,
            mae: mae(pred, gt)?,
            recall: region.recall,
            precision: region.precision,
        })
    }
}

/// An id that could not be scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairIssue {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: MetricsConfig,
    pub rows: Vec<MetricsRow>,
    pub means: Option<MetricsRow>,
    pub missing: Vec<PairIssue>,
    pub failed: Vec<PairIssue>,
}

impl MetricsReport {
    pub fn from_rows(config: MetricsConfig, mut rows: Vec<MetricsRow>, missing: Vec<PairIssue>, failed: Vec<PairIssue>) -> Self {
        rows.sort_by(|a, b| a.id.cmp(&b.id));
        let means = (!rows.is_empty()).then(|| {
            let mut acc = [0.0; 8];
            for r in &rows {
                for (a, v) in acc.iter_mut().zip(r.values()) {
                    *a += v;
                }
            }
            let n = rows.len() as f64;
            let m = acc.map(|a| a / n);
            MetricsRow {
                id: "MEAN".into(),
                dice: m[0],
                iou: m[1],
                wfm: m[2],
                s_alpha: m[3],
                e_phi_max: m[4],
                mae: m[5],
                recall: m[6],
                precision: m[7],
            }
        });
        Self {
            config,
            rows,
            means,
            missing,
            failed,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.missing.is_empty() && self.failed.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in self.rows.iter().chain(&self.means) {
            out.push_str(&MetricsRow::csv_line(&r.id, &r.values()));
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "images scored: {}", self.rows.len());
        if let Some(m) = &self.means {
            let _ = writeln!(s, "mDice      {:.4}", m.dice);
            let _ = writeln!(s, "mIoU       {:.4}", m.iou);
            let _ = writeln!(s, "F_beta^w   {:.4}", m.wfm);
            let _ = writeln!(s, "S_alpha    {:.4}", m.s_alpha);
            let _ = writeln!(s, "E_phi^max  {:.4}", m.e_phi_max);
            let _ = writeln!(s, "MAE        {:.4}", m.mae);
            let _ = writeln!(s, "recall     {:.4}", m.recall);
            let _ = writeln!(s, "precision  {:.4}", m.precision);
        }
        let _ = writeln!(
            s,
            "config: alpha={} beta2={} threshold={} e_levels={}",
            self.config.alpha, self.config.beta2, self.config.threshold, self.config.e_levels
        );
        if !self.is_complete() {
            let _ = writeln!(s, "INCOMPLETE: {} missing, {} failed", self.missing.len(), self.failed.len());
            for p in self.missing.iter().chain(&self.failed) {
                let _ = writeln!(s, "  {}: {}", p.id, p.reason);
            }
        }
        s
    }

    /// Writes `metrics.csv`, `summary.txt` and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, IoError> {
        io::create_dir_all(dir)?;
        let csv = dir.join("metrics.csv");
        io::write_atomic(&csv, self.to_csv().as_bytes())?;
        io::write_atomic(&dir.join("summary.txt"), self.summary().as_bytes())?;
        let json = serde_json::to_vec_pretty(self).expect("report serializes");
        io::write_atomic(&dir.join("report.json"), &json)?;
        Ok(csv)
    }
}

fn png_ids(dir: &Path) -> Result<BTreeMap<String, PathBuf>, IoError> {
    let entries = std::fs::read_dir(dir).map_err(|source| IoError {
        op: "list",
        path: dir.to_path_buf(),
        source,
    })?;
    let mut out = BTreeMap::new();
    for entry in entries.flatten() {
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

/// Scores every `<id>.png` in `pred_dir` against `gt_dir/<id>.png`. Predictions are
/// read as `value / 255`, ground truth as `value >= 128`. Unpaired or unreadable ids
/// are reported and skipped.
pub fn evaluate_run(pred_dir: &Path, gt_dir: &Path, cfg: &MetricsConfig) -> Result<MetricsReport, IoError> {
    let preds = png_ids(pred_dir)?;
    let gts = png_ids(gt_dir)?;
    let mut missing = Vec::new();
    for id in gts.keys().filter(|id| !preds.contains_key(*id)) {
        missing.push(PairIssue {
            id: id.clone(),
            reason: "no prediction".into(),
        });
    }
    for id in preds.keys().filter(|id| !gts.contains_key(*id)) {
        missing.push(PairIssue {
            id: id.clone(),
            reason: "no ground truth".into(),
        });
    }
    let pairs: Vec<(&String, &PathBuf, &PathBuf)> = gts
        .iter()
        .filter_map(|(id, g)| preds.get(id).map(|p| (id, p, g)))
        .collect();
    let results: Vec<Result<MetricsRow, PairIssue>> = pairs
        .par_iter()
        .map(|(id, p, g)| {
            let issue = |reason: String| PairIssue {
                id: (*id).clone(),
                reason,
            };
            let pred = read_map_png(p).map_err(|e| issue(format!("{}: {e}", p.display())))?;
            let gt = read_map_png(g).map_err(|e| issue(format!("{}: {e}", g.display())))?.map(|&v| v >= 128.0 / 255.0);
            MetricsRow::compute(id, &pred, &gt, cfg).map_err(|e| issue(e.to_string()))
        })
        .collect();
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(issue) => failed.push(issue),
        }
    }
    Ok(MetricsReport::from_rows(cfg.clone(), rows, missing, failed))
}
