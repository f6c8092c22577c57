use rand::seq::index::sample;

use super::adam::{adam_step, AdamState};
use super::config::{Protocol, TrainConfig};
use super::history::{StopReason, TrainHistory, ValidationRecord};
use crate::analysis::{compute_metrics_from_logits, Metrics};
use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::layers::{bce_mean, Mode};
use crate::models::{apply_bn_updates, backward, build, forward, predict_logits, ArchitectureSpec, ModelParams};
use crate::rng::{stream, Stream};
use crate::scalar::Scalar;
use crate::sparsity::{channel_norms, cumulative_l1_update, CumulativePenaltyState, GroupView};

/// Best snapshot and the record of the run that produced it.
#[derive(Clone, Debug)]
pub struct TrainOutcome<S> {
    pub params: ModelParams<S>,
    pub history: TrainHistory,
    /// Penalty state at the snapshot.
    pub penalty: CumulativePenaltyState,
}

/// Eval-mode metrics over a whole dataset.
pub fn evaluate<S: Scalar>(spec: &ArchitectureSpec, params: &ModelParams<S>, data: &WindowedDataset<S>) -> Result<Metrics> {
    let logits: Vec<f64> = predict_logits(spec, params, &data.windows)?.into_iter().map(|z| z.f64()).collect();
    compute_metrics_from_logits(&logits, &data.labels)
}

pub fn count_nonzero_groups<S: Scalar>(params: &ModelParams<S>, groups: &GroupView) -> usize {
    channel_norms(params, groups).into_iter().filter(|e| *e != S::zero()).count()
}

fn check_data<S: Scalar>(spec: &ArchitectureSpec, d: &WindowedDataset<S>, what: &str) -> Result<()> {
    if d.is_empty() {
        return Err(Error::invalid(format!("{what} dataset is empty")));
    }
    if d.n_channels() != spec.n_channels || d.window_len() != spec.input_len {
        return Err(Error::invalid(format!(
            "{what} windows are {}x{}, model expects {}x{}",
            d.n_channels(),
            d.window_len(),
            spec.n_channels,
            spec.input_len
        )));
    }
    Ok(())
}

/// Trains from the initialisation for `config.seed` and returns the snapshot with
/// the lowest validation loss.
///
/// Each step draws a batch without replacement from `train`, takes an Adam
/// step with coupled weight decay `lambda`, then applies the cumulative group
/// L1 update with strength `alpha`.
pub fn train<S: Scalar>(
    spec: &ArchitectureSpec,
    train: &WindowedDataset<S>,
    val: &WindowedDataset<S>,
    config: &TrainConfig,
) -> Result<TrainOutcome<S>> {
    config.validate()?;
    spec.validate()?;
    check_data(spec, train, "training")?;
    check_data(spec, val, "validation")?;

    let mut params = build::<S>(spec, config.seed)?;
    let groups = GroupView::for_spec(spec)?;
    let mut adam = AdamState::new(&params);
    let mut penalty = CumulativePenaltyState::new(groups.len());
    let mut rng = stream(config.seed, Stream::Batch);

    let n = train.len();
    let bsz = config.batch_size.min(n);
    let every = match config.protocol {
        Protocol::Standard => config.validate_every,
        Protocol::FlatComparison => n.div_ceil(config.batch_size),
    };

    let mut history = TrainHistory::empty();
    let mut best = (f64::INFINITY, params.clone(), penalty.clone());
    let mut since_best = 0usize;
    let mut decays = 0u32;
    let mut lr = config.init_lr;

    for it in 1..=config.max_iterations {
        history.iterations = it;
        let idx = sample(&mut rng, n, bsz).into_vec();
        let (x, y) = train.batch(&idx);
        let pass = forward(spec, &params, &x, Mode::Train)?;
        let (loss, dz) = bce_mean(&pass.logits, &y)?;
        if !loss.is_finite() {
            history.stop_reason = StopReason::Diverged;
            return Err(Error::Diverged {
                iteration: it,
                reason: format!("training loss is {loss}"),
                history: Box::new(history),
            });
        }
        let grads = backward(spec, &params, &pass.caches, &dz)?;
        apply_bn_updates(&mut params, pass.bn_updates);
        if let Err(e) = adam_step(&mut params, &grads, &mut adam, lr, config.lambda) {
            history.stop_reason = StopReason::Diverged;
            return Err(Error::Diverged {
                iteration: it,
                reason: e.to_string(),
                history: Box::new(history),
            });
        }
        cumulative_l1_update(&mut params, &groups, &mut penalty, config.alpha, lr)?;

        if it % every != 0 {
            continue;
        }
        let m = evaluate(spec, &params, val)?;
        if !m.loss.is_finite() || !params.all_finite() {
            history.stop_reason = StopReason::Diverged;
            return Err(Error::Diverged {
                iteration: it,
                reason: format!("validation loss is {}", m.loss),
                history: Box::new(history),
            });
        }
        history.records.push(ValidationRecord {
            iteration: it,
            val_loss: m.loss,
            val_acc: m.accuracy,
            lr,
            nonzero_groups: count_nonzero_groups(&params, &groups),
        });
        if m.loss < best.0 {
            best = (m.loss, params.clone(), penalty.clone());
            history.best_iteration = it;
            history.best_val_loss = Some(m.loss);
            since_best = 0;
            continue;
        }
        since_best += 1;
        match config.protocol {
            Protocol::Standard => {
                if since_best >= config.patience_stop {
                    history.stop_reason = StopReason::Patience;
                    break;
                }
                if since_best % config.patience_decay == 0 {
                    decays += 1;
                    lr = config.lr_after(decays);
                }
            }
            Protocol::FlatComparison => {
                decays += 1;
                lr = config.lr_after(decays);
                if lr < config.min_lr.unwrap_or(0.0) {
                    history.stop_reason = StopReason::MinLearningRate;
                    break;
                }
            }
        }
    }
    if history.records.is_empty() {
        // the cap cut the run short of its first validation; keep the final iterate
        let m = evaluate(spec, &params, val)?;
        history.records.push(ValidationRecord {
            iteration: history.iterations,
            val_loss: m.loss,
            val_acc: m.accuracy,
            lr,
            nonzero_groups: count_nonzero_groups(&params, &groups),
        });
        history.best_iteration = history.iterations;
        history.best_val_loss = Some(m.loss);
        best = (m.loss, params, penalty);
    }
    history.lr_decays = decays;
    let (_, params, penalty) = best;
    Ok(TrainOutcome {
        params,
        history,
        penalty,
    })
}
