//! Macro-averaged multi-label metrics and stage comparison tables.
//!
//! Every class gets a one-vs-rest confusion count from set membership. The
//! reported mAP, mAR, mAA and mAF1 are unweighted means over all `T` classes
//! of precision, recall, accuracy and F1. Undefined ratios count as 0.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelSet;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassConfusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassConfusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub confusion: ClassConfusion,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub stage: String,
    pub dataset_hash: String,
    pub num_samples: usize,
    pub mean_loss: Option<f64>,
    pub map: f64,
    pub mar: f64,
    pub maa: f64,
    pub maf1: f64,
    pub per_class: Vec<ClassMetrics>,
}

impl EvaluationReport {
    pub fn with_stage(mut self, stage: impl Into<String>) -> Self {
        self.stage = stage.into();
        self
    }

    pub fn with_dataset_hash(mut self, hash: impl Into<String>) -> Self {
        self.dataset_hash = hash.into();
        self
    }

    pub fn with_loss(mut self, loss: f64) -> Self {
        self.mean_loss = Some(loss);
        self
    }
}

pub fn confusions(preds: &[LabelSet], truths: &[LabelSet], num_classes: usize) -> Result<Vec<ClassConfusion>> {
    if preds.len() != truths.len() {
        return Err(Error::invalid(format!(
            "{} predictions but {} ground-truth sets",
            preds.len(),
            truths.len()
        )));
    }
    let mut out = vec![ClassConfusion::default(); num_classes];
    for (p, t) in preds.iter().zip(truths) {
        for (c, cc) in out.iter_mut().enumerate() {
            match (p.contains(c), t.contains(c)) {
                (true, true) => cc.tp += 1,
                (true, false) => cc.fp += 1,
                (false, true) => cc.fn_ += 1,
                (false, false) => cc.tn += 1,
            }
        }
    }
    Ok(out)
}

pub fn evaluate(preds: &[LabelSet], truths: &[LabelSet], num_classes: usize) -> Result<EvaluationReport> {
    if num_classes == 0 {
        return Err(Error::invalid("cannot evaluate with zero classes"));
    }
    let per_class: Vec<ClassMetrics> = confusions(preds, truths, num_classes)?
        .into_iter()
        .enumerate()
        .map(|(class, confusion)| ClassMetrics {
            class,
            precision: confusion.precision(),
            recall: confusion.recall(),
            accuracy: confusion.accuracy(),
            f1: confusion.f1(),
            confusion,
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / num_classes as f64;
    Ok(EvaluationReport {
        stage: String::new(),
        dataset_hash: String::new(),
        num_samples: preds.len(),
        mean_loss: None,
        map: mean(|m| m.precision),
        mar: mean(|m| m.recall),
        maa: mean(|m| m.accuracy),
        maf1: mean(|m| m.f1),
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: String,
    pub loss: Option<f64>,
    pub map: f64,
    pub mar: f64,
    pub maa: f64,
    pub maf1: f64,
    pub delta_map: f64,
    pub delta_mar: f64,
    pub delta_maa: f64,
    pub delta_maf1: f64,
}

/// Rows aligned against the first report, which acts as the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageComparison {
    pub rows: Vec<StageRow>,
}

pub fn compare_stages(reports: &[EvaluationReport]) -> StageComparison {
    let Some(base) = reports.first() else {
        return StageComparison { rows: Vec::new() };
    };
    let rows = reports
        .iter()
        .map(|r| StageRow {
            stage: r.stage.clone(),
            loss: r.mean_loss,
            map: r.map,
            mar: r.mar,
            maa: r.maa,
            maf1: r.maf1,
            delta_map: r.map - base.map,
            delta_mar: r.mar - base.mar,
            delta_maa: r.maa - base.maa,
            delta_maf1: r.maf1 - base.maf1,
        })
        .collect();
    StageComparison { rows }
}

impl StageComparison {
    pub fn row(&self, stage: &str) -> Option<&StageRow> {
        self.rows.iter().find(|r| r.stage == stage)
    }

    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<28} {:>9} {:>9} {:>9} {:>9} {:>9} {:>10}",
            "stage", "loss", "mAP", "mAR", "mAA", "mAF1", "dmAF1"
        );
        for r in &self.rows {
            let loss = r.loss.map_or_else(|| "-".to_string(), |l| format!("{l:.5}"));
            let _ = writeln!(
                out,
                "{:<28} {:>9} {:>9.5} {:>9.5} {:>9.5} {:>9.5} {:>+10.5}",
                r.stage, loss, r.map, r.mar, r.maa, r.maf1, r.delta_maf1
            );
        }
        out
    }
}

/// Per-class table for one report.
pub fn report_table(report: &EvaluationReport, class_names: Option<&[String]>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "stage: {}  samples: {}", report.stage, report.num_samples);
    let _ = writeln!(out, "{:<28} {:>6} {:>6} {:>6} {:>6} {:>8} {:>8} {:>8} {:>8}", "class", "tp", "fp", "fn", "tn", "prec", "recall", "acc", "f1");
    for m in &report.per_class {
        let name = class_names.and_then(|n| n.get(m.class)).cloned().unwrap_or_else(|| m.class.to_string());
        let c = m.confusion;
        let _ = writeln!(
            out,
            "{:<28} {:>6} {:>6} {:>6} {:>6} {:>8.5} {:>8.5} {:>8.5} {:>8.5}",
            name, c.tp, c.fp, c.fn_, c.tn, m.precision, m.recall, m.accuracy, m.f1
        );
    }
    let _ = writeln!(
        out,
        "macro: mAP {:.5}  mAR {:.5}  mAA {:.5}  mAF1 {:.5}",
        report.map, report.mar, report.maa, report.maf1
    );
    out
}
