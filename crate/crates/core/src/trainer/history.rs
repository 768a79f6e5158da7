use std::fmt::Write as _;

use super::LossTerms;

/// Epoch-mean loss terms of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub terms: LossTerms,
    /// Wall time since training started, at the end of this epoch.
    pub seconds: f64,
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub wall_seconds: f64,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// Epoch-mean totals in order.
    pub fn totals(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.terms.total).collect()
    }

    /// Loss terms only, dropping timings (which vary run to run).
    pub fn losses(&self) -> Vec<LossTerms> {
        self.epochs.iter().map(|e| e.terms).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,total,data,rw,rm,lq,seconds\n");
        for e in &self.epochs {
            let t = &e.terms;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                e.epoch, t.total, t.data, t.rw, t.rm, t.lq, e.seconds
            );
        }
        s
    }
}
