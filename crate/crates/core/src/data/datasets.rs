use rand::Rng as _;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::norm::{compute_norm_stats, NormStats};
use super::store::{ChannelStore, EventList};
use crate::error::{Error, Result};
use crate::layers::Label;
use crate::rng::{stream, Rng, Stream};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Negatives must be more than this many seconds from every event.
pub const NEGATIVE_EXCLUSION_S: f64 = 2.0;

/// Half-open interval `[start, end)` in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: f64,
    pub end: f64,
}

impl TimeRange {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && start < end) {
            return Err(Error::invalid(format!("bad time range [{start}, {end})")));
        }
        Ok(TimeRange { start, end })
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }

    pub fn overlaps(&self, other: &TimeRange) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }
}

/// Admissible sub-intervals of `range` for negatives: at least `margin` from
/// the range edges and more than the exclusion radius from every event.
pub fn admissible_intervals(events: &EventList, range: TimeRange, margin: f64) -> Vec<(f64, f64)> {
    let (lo, hi) = (range.start + margin, range.end - margin);
    let mut out = Vec::new();
    let mut cur = lo;
    for &e in events.times() {
        let (a, b) = (e - NEGATIVE_EXCLUSION_S, e + NEGATIVE_EXCLUSION_S);
        if b <= cur {
            continue;
        }
        if a >= hi {
            break;
        }
        if a > cur {
            out.push((cur, a));
        }
        cur = cur.max(b);
    }
    if hi > cur {
        out.push((cur, hi));
    }
    out
}

/// Draws `count` negative times uniformly over the admissible set of `range`.
///
/// Capacity is the admissible measure in whole sample periods; asking for
/// more is an error.
pub fn sample_negatives(
    events: &EventList,
    range: TimeRange,
    count: usize,
    window_s: f64,
    sample_rate: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let margin = window_s / 2.0;
    let intervals = admissible_intervals(events, range, margin);
    let mut cum = Vec::with_capacity(intervals.len());
    let mut total = 0.0;
    for &(a, b) in &intervals {
        total += b - a;
        cum.push(total);
    }
    let capacity = (total * sample_rate).floor() as usize;
    if count > capacity {
        return Err(Error::Capacity(format!(
            "requested {count} negatives in [{}, {}) but only {total:.3} s ({capacity} sample positions) are admissible",
            range.start, range.end
        )));
    }
    let lo = range.start + margin;
    let hi = range.end - margin;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.random::<f64>() * total;
        let k = cum.partition_point(|&c| c <= u).min(intervals.len() - 1);
        let (a, b) = intervals[k];
        let t = a + (u - (cum[k] - (b - a)));
        if t < lo || t >= hi || events.distance_to_nearest(t) <= NEGATIVE_EXCLUSION_S {
            continue;
        }
        out.push(t);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RangeId {
    Train,
    Validation,
    Test,
}

/// Labelled windows `[N x P x T]` drawn from one time range.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset<S> {
    pub range: RangeId,
    pub times: Vec<f64>,
    pub labels: Vec<Label>,
    pub windows: Tensor<S>,
}

impl<S: Scalar> WindowedDataset<S> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|l| **l == Label::Positive).count()
    }

    pub fn n_channels(&self) -> usize {
        self.windows.shape().get(1).copied().unwrap_or(0)
    }

    pub fn window_len(&self) -> usize {
        self.windows.shape().get(2).copied().unwrap_or(0)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        WindowedDataset {
            range: self.range,
            times: indices.iter().map(|&i| self.times[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            windows: self.windows.gather(indices),
        }
    }

    pub fn cast<T: Scalar>(&self) -> WindowedDataset<T> {
        WindowedDataset {
            range: self.range,
            times: self.times.clone(),
            labels: self.labels.clone(),
            windows: self.windows.cast(),
        }
    }

    /// Copies the rows listed in `indices` into a batch tensor and label vector.
    pub fn batch(&self, indices: &[usize]) -> (Tensor<S>, Vec<Label>) {
        (self.windows.gather(indices), indices.iter().map(|&i| self.labels[i]).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranges {
    pub train: TimeRange,
    pub val: TimeRange,
    pub test: TimeRange,
}

impl Ranges {
    pub fn validate(&self) -> Result<()> {
        let all = [("train", self.train), ("val", self.val), ("test", self.test)];
        for i in 0..3 {
            for j in i + 1..3 {
                if all[i].1.overlaps(&all[j].1) {
                    return Err(Error::invalid(format!("{} and {} ranges overlap", all[i].0, all[j].0)));
                }
            }
        }
        Ok(())
    }
}

/// Per-class sample counts; `None` takes every event in the range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub train_per_class: Option<usize>,
    pub val_in_training_per_class: usize,
    pub val_ranking_per_class: usize,
    pub test_per_class: Option<usize>,
}

impl Default for DatasetCounts {
    fn default() -> Self {
        DatasetCounts {
            train_per_class: None,
            val_in_training_per_class: 250,
            val_ranking_per_class: 500,
            test_per_class: None,
        }
    }
}

/// Training set, the two validation batches, and the test set.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplits<S> {
    pub train: WindowedDataset<S>,
    /// Small batch used for early stopping and learning-rate decay.
    pub val_in_training: WindowedDataset<S>,
    /// Larger batch used to compare hyperparameter settings.
    pub val_ranking: WindowedDataset<S>,
    pub test: WindowedDataset<S>,
    pub norm_stats: NormStats,
    pub window_len: usize,
}

impl<S: Scalar> DatasetSplits<S> {
    pub fn cast<T: Scalar>(&self) -> DatasetSplits<T> {
        DatasetSplits {
            train: self.train.cast(),
            val_in_training: self.val_in_training.cast(),
            val_ranking: self.val_ranking.cast(),
            test: self.test.cast(),
            norm_stats: self.norm_stats.clone(),
            window_len: self.window_len,
        }
    }
}

/// Shrinks `range` so every window centred inside it, with the half-window
/// margin applied, fits in the store.
fn clip_to_store<S: Scalar>(store: &ChannelStore<S>, range: TimeRange) -> Result<TimeRange> {
    let dt = 1.0 / store.sample_rate();
    TimeRange::new(range.start.max(store.start() + dt), range.end.min(store.end() - dt))
}

fn positives<S: Scalar>(store: &ChannelStore<S>, events: &EventList, range: TimeRange, len: usize) -> Vec<f64> {
    events
        .in_range(range.start, range.end)
        .iter()
        .copied()
        .filter(|&t| store.window_start(t, len).is_ok())
        .collect()
}

fn take_positives(mut pos: Vec<f64>, want: Option<usize>, what: &str, rng: &mut Rng) -> Result<Vec<f64>> {
    match want {
        None => Ok(pos),
        Some(n) if n > pos.len() => Err(Error::Capacity(format!(
            "{what}: asked for {n} positives but the range holds {} usable events",
            pos.len()
        ))),
        Some(n) => {
            pos.shuffle(rng);
            pos.truncate(n);
            Ok(pos)
        }
    }
}

fn assemble<S: Scalar>(
    store: &ChannelStore<S>,
    stats: &NormStats,
    range: RangeId,
    pos: &[f64],
    neg: &[f64],
    len: usize,
) -> Result<WindowedDataset<S>> {
    let p = store.n_channels();
    let n = pos.len() + neg.len();
    let mut data = vec![S::zero(); n * p * len];
    let times: Vec<f64> = pos.iter().chain(neg).copied().collect();
    for (t, chunk) in times.iter().zip(data.chunks_exact_mut(p * len)) {
        store.window_into(*t, len, chunk)?;
        stats.normalise_window(chunk, len);
    }
    let mut labels = vec![Label::Positive; pos.len()];
    labels.extend(std::iter::repeat_n(Label::Negative, neg.len()));
    Ok(WindowedDataset {
        range,
        times,
        labels,
        windows: Tensor::new(vec![n, p, len], data)?,
    })
}

/// Builds class-balanced, normalised windowed datasets from three disjoint ranges.
///
/// Statistics come from the training range only. Draws use the sampling
/// stream of `seed` in a fixed order (train, validation, test).
pub fn build_datasets<S: Scalar>(
    store: &ChannelStore<S>,
    events: &EventList,
    ranges: &Ranges,
    window_len: usize,
    counts: &DatasetCounts,
    seed: u64,
) -> Result<DatasetSplits<S>> {
    ranges.validate()?;
    let stats = compute_norm_stats(store, ranges.train)?;
    build_datasets_with_stats(store, events, ranges, window_len, counts, seed, stats)
}

/// As [`build_datasets`], but normalising with given statistics, e.g. those
/// saved alongside a trained model.
pub fn build_datasets_with_stats<S: Scalar>(
    store: &ChannelStore<S>,
    events: &EventList,
    ranges: &Ranges,
    window_len: usize,
    counts: &DatasetCounts,
    seed: u64,
    stats: NormStats,
) -> Result<DatasetSplits<S>> {
    ranges.validate()?;
    if window_len == 0 {
        return Err(Error::invalid("window length must be positive"));
    }
    if stats.mean.len() != store.n_channels() {
        return Err(Error::shape("build_datasets", "channels", store.n_channels(), stats.mean.len()));
    }
    let mut rng = stream(seed, Stream::Sampling);
    let fs = store.sample_rate();
    let window_s = window_len as f64 / fs;

    let mut split = |range: TimeRange, want: Option<usize>, what: &str| -> Result<(Vec<f64>, Vec<f64>)> {
        let clipped = clip_to_store(store, range)?;
        let pos = take_positives(positives(store, events, range, window_len), want, what, &mut rng)?;
        let neg = sample_negatives(events, clipped, pos.len(), window_s, fs, &mut rng)?;
        Ok((pos, neg))
    };

    let (tp, tn) = split(ranges.train, counts.train_per_class, "train")?;
    let nv_a = counts.val_in_training_per_class;
    let nv_b = counts.val_ranking_per_class;
    let (vp, vn) = split(ranges.val, Some(nv_a + nv_b), "validation")?;
    let (sp, sn) = split(ranges.test, counts.test_per_class, "test")?;

    let train = assemble(store, &stats, RangeId::Train, &tp, &tn, window_len)?;
    let val_in_training = assemble(store, &stats, RangeId::Validation, &vp[..nv_a], &vn[..nv_a], window_len)?;
    let val_ranking = assemble(store, &stats, RangeId::Validation, &vp[nv_a..], &vn[nv_a..], window_len)?;
    let test = assemble(store, &stats, RangeId::Test, &sp, &sn, window_len)?;
    for (name, d) in [("train", &train), ("test", &test)] {
        if d.is_empty() {
            return Err(Error::invalid(format!("{name} range yields no usable events")));
        }
    }
    Ok(DatasetSplits {
        train,
        val_in_training,
        val_ranking,
        test,
        norm_stats: stats,
        window_len,
    })
}
