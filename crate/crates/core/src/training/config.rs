use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Validate every `validate_every` iterations; decay after `patience_decay`
    /// and stop after `patience_stop` validations without improvement.
    Standard,
    /// Validate once per epoch of `ceil(N / batch_size)` iterations; decay on
    /// every validation without improvement and stop once `lr < min_lr`.
    FlatComparison,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub init_lr: f64,
    pub lr_decay_factor: f64,
    pub patience_decay: usize,
    pub patience_stop: usize,
    pub validate_every: usize,
    pub min_lr: Option<f64>,
    /// L2 strength, applied as coupled weight decay.
    pub lambda: f64,
    /// Group L1 strength, applied by the cumulative update.
    pub alpha: f64,
    pub seed: u64,
    pub protocol: Protocol,
    /// Hard cap on optimiser steps.
    pub max_iterations: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            init_lr: 1e-3,
            lr_decay_factor: 4.0,
            patience_decay: 4,
            patience_stop: 10,
            validate_every: 50,
            min_lr: None,
            lambda: 0.0,
            alpha: 0.0,
            seed: 0,
            protocol: Protocol::Standard,
            max_iterations: 200_000,
        }
    }
}

impl TrainConfig {
    pub fn flat_comparison(init_lr: f64, min_lr: f64) -> Self {
        TrainConfig {
            init_lr,
            lr_decay_factor: 5.0,
            min_lr: Some(min_lr),
            protocol: Protocol::FlatComparison,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 || self.patience_decay == 0 || self.patience_stop == 0 || self.validate_every == 0 {
            return bad("batch_size, patience_decay, patience_stop and validate_every must be positive".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        if !(self.lr_decay_factor > 1.0) {
            return bad(format!("lr_decay_factor must exceed 1, got {}", self.lr_decay_factor));
        }
        if !(self.init_lr >= 0.0 && self.init_lr.is_finite()) {
            return bad(format!("init_lr must be finite and non-negative, got {}", self.init_lr));
        }
        if !(self.lambda >= 0.0) || !(self.alpha >= 0.0) {
            return bad(format!("lambda and alpha must be non-negative ({}, {})", self.lambda, self.alpha));
        }
        if self.protocol == Protocol::FlatComparison && !self.min_lr.is_some_and(|m| m > 0.0) {
            return bad("the flat comparison protocol needs a positive min_lr".into());
        }
        Ok(())
    }

    /// Learning rate after `decays` reductions.
    pub fn lr_after(&self, decays: u32) -> f64 {
        self.init_lr / self.lr_decay_factor.powi(decays as i32)
    }
}
