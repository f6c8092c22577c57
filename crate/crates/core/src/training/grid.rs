use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::history::TrainHistory;
use super::train::{count_nonzero_groups, evaluate, train, TrainOutcome};
use crate::analysis::Metrics;
use crate::data::DatasetSplits;
use crate::error::{Error, Result};
use crate::models::{ArchitectureSpec, ModelParams};
use crate::scalar::Scalar;
use crate::sparsity::GroupView;

/// Values to try for each hyperparameter; the grid is their product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub init_lr: Vec<f64>,
    pub lambda: Vec<f64>,
    pub alpha: Vec<f64>,
    pub input_len: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub index: usize,
    pub init_lr: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub input_len: usize,
}

impl GridSpec {
    /// Settings in canonical order: input length, then lr, lambda, alpha.
    pub fn settings(&self) -> Vec<Setting> {
        let mut out = Vec::new();
        for &input_len in &self.input_len {
            for &init_lr in &self.init_lr {
                for &lambda in &self.lambda {
                    for &alpha in &self.alpha {
                        out.push(Setting {
                            index: out.len(),
                            init_lr,
                            lambda,
                            alpha,
                            input_len,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.init_lr.is_empty() || self.lambda.is_empty() || self.alpha.is_empty() || self.input_len.is_empty() {
            return Err(Error::Config("every grid axis needs at least one value".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary<S> {
    pub outcome: TrainOutcome<S>,
    /// Metrics on the ranking validation batch.
    pub ranking: Metrics,
    pub nonzero_groups: usize,
    pub n_groups: usize,
    pub spec: ArchitectureSpec,
}

impl<S> RunSummary<S> {
    pub fn params(&self) -> &ModelParams<S> {
        &self.outcome.params
    }

    pub fn history(&self) -> &TrainHistory {
        &self.outcome.history
    }
}

#[derive(Clone, Debug)]
pub struct GridResult<S> {
    pub setting: Setting,
    pub run: std::result::Result<RunSummary<S>, String>,
}

#[derive(Clone, Debug)]
pub struct GridOutcome<S> {
    /// One entry per setting, in canonical order.
    pub results: Vec<GridResult<S>>,
    /// Indices into `results` of the successful runs, best first.
    pub ranking: Vec<usize>,
}

impl<S> GridOutcome<S> {
    pub fn best(&self) -> Option<&GridResult<S>> {
        self.ranking.first().map(|&i| &self.results[i])
    }
}

fn run_setting<S: Scalar>(
    spec: &ArchitectureSpec,
    data: &DatasetSplits<S>,
    setting: &Setting,
    base: &TrainConfig,
) -> Result<RunSummary<S>> {
    let mut spec = spec.clone();
    spec.input_len = setting.input_len;
    let config = TrainConfig {
        init_lr: setting.init_lr,
        lambda: setting.lambda,
        alpha: setting.alpha,
        ..base.clone()
    };
    let outcome = train(&spec, &data.train, &data.val_in_training, &config)?;
    let ranking = evaluate(&spec, &outcome.params, &data.val_ranking)?;
    let groups = GroupView::for_spec(&spec)?;
    Ok(RunSummary {
        nonzero_groups: count_nonzero_groups(&outcome.params, &groups),
        n_groups: groups.len(),
        outcome,
        ranking,
        spec,
    })
}

/// Orders successful runs by ranking loss, then higher accuracy, then lower
/// alpha, then setting index.
pub fn rank_results<S>(results: &[GridResult<S>]) -> Vec<usize> {
    let mut ok: Vec<usize> = (0..results.len()).filter(|&i| results[i].run.is_ok()).collect();
    ok.sort_by(|&a, &b| {
        let (ra, rb) = (results[a].run.as_ref().unwrap(), results[b].run.as_ref().unwrap());
        ra.ranking
            .loss
            .total_cmp(&rb.ranking.loss)
            .then(rb.ranking.accuracy.total_cmp(&ra.ranking.accuracy))
            .then(results[a].setting.alpha.total_cmp(&results[b].setting.alpha))
            .then(a.cmp(&b))
    });
    ok
}

/// Trains one model per grid setting, all from `base.seed`, and ranks them.
///
/// `datasets` is called once per distinct input length. Settings run on a
/// pool of `threads` workers; results do not depend on the thread count.
pub fn grid_search<S, F>(
    spec: &ArchitectureSpec,
    datasets: F,
    grid: &GridSpec,
    base: &TrainConfig,
    threads: usize,
) -> Result<GridOutcome<S>>
where
    S: Scalar,
    F: Fn(usize) -> Result<DatasetSplits<S>>,
{
    grid.validate()?;
    base.validate()?;
    let settings = grid.settings();
    let mut by_len = BTreeMap::new();
    for s in &settings {
        if !by_len.contains_key(&s.input_len) {
            by_len.insert(s.input_len, datasets(s.input_len)?);
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let results: Vec<GridResult<S>> = pool.install(|| {
        settings
            .par_iter()
            .map(|s| GridResult {
                setting: *s,
                run: run_setting(spec, &by_len[&s.input_len], s, base).map_err(|e| e.to_string()),
            })
            .collect()
    });
    let ranking = rank_results(&results);
    Ok(GridOutcome { results, ranking })
}
