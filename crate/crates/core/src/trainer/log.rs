use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Per-epoch means over training steps.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// `episodeLoss` without the L2 term.
    pub loss: f64,
    /// `episodeLoss + lambda * ||w||^2`.
    pub objective: f64,
    pub phi_aff: f64,
    pub phi_neg: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
}

pub const LOG_HEADER: &str = "epoch,loss,objective,phi_aff,phi_neg,val_accuracy";

impl TrainingLog {
    /// Floats use shortest round-trip formatting; missing values are empty cells.
    pub fn to_csv(&self) -> String {
        let cell = |x: Option<f64>| x.map(|v| format!("{v:?}")).unwrap_or_default();
        let mut out = format!("{LOG_HEADER}\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:?},{:?},{:?},{},{}\n",
                r.epoch,
                r.loss,
                r.objective,
                r.phi_aff,
                cell(r.phi_neg),
                cell(r.val_accuracy)
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn first(&self) -> Option<&EpochRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Running sums for one epoch.
#[derive(Default)]
pub(super) struct EpochAccumulator {
    steps: usize,
    loss: f64,
    objective: f64,
    phi_aff: f64,
    phi_neg: f64,
    neg_steps: usize,
}

impl EpochAccumulator {
    pub(super) fn add(&mut self, loss: f64, objective: f64, phi_aff: f64, phi_neg: Option<f64>) {
        self.steps += 1;
        self.loss += loss;
        self.objective += objective;
        self.phi_aff += phi_aff;
        if let Some(v) = phi_neg {
            self.phi_neg += v;
            self.neg_steps += 1;
        }
    }

    pub(super) fn finish(self, epoch: usize, val_accuracy: Option<f64>) -> EpochRecord {
        let n = self.steps.max(1) as f64;
        EpochRecord {
            epoch,
            loss: self.loss / n,
            objective: self.objective / n,
            phi_aff: self.phi_aff / n,
            phi_neg: (self.neg_steps > 0).then(|| self.phi_neg / self.neg_steps as f64),
            val_accuracy,
        }
    }
}
