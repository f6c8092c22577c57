use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub iteration: usize,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Learning rate in effect over the preceding iterations.
    pub lr: f64,
    pub nonzero_groups: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Patience,
    MinLearningRate,
    MaxIterations,
    Diverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<ValidationRecord>,
    /// Iteration of the returned snapshot (0 if no validation ran).
    pub best_iteration: usize,
    pub best_val_loss: Option<f64>,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub lr_decays: u32,
}

impl TrainHistory {
    pub(crate) fn empty() -> Self {
        TrainHistory {
            records: Vec::new(),
            best_iteration: 0,
            best_val_loss: None,
            stop_reason: StopReason::MaxIterations,
            iterations: 0,
            lr_decays: 0,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,val_loss,val_acc,lr,nonzero_groups\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.iteration, r.val_loss, r.val_acc, r.lr, r.nonzero_groups
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("history serialises")
    }

    pub fn best_record(&self) -> Option<&ValidationRecord> {
        self.records.iter().find(|r| r.iteration == self.best_iteration)
    }
}
