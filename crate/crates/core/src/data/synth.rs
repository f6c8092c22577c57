//! Synthetic auxiliary channels: unit-variance background noise on every
//! channel plus event-locked patterns on a planted subset.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::store::{ChannelStore, EventList};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    /// One sample of height `snr * gain` at the onset.
    Spike,
    /// `snr * gain` held for `pattern_len_s`.
    Step,
    /// `snr * gain * exp(-k / (L/3)) * sin(2 pi 2Hz k / fs)` over `L` samples.
    DampedSine,
    /// Paired channels: exactly one of the pair carries a level shift around each event.
    XorPair,
}

impl Pattern {
    pub fn name(self) -> &'static str {
        match self {
            Pattern::Spike => "spike",
            Pattern::Step => "step",
            Pattern::DampedSine => "damped-sine",
            Pattern::XorPair => "xor-pair",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Pattern::Spike, Pattern::Step, Pattern::DampedSine, Pattern::XorPair]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown pattern {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Noise {
    White,
    /// Stationary AR(1) with unit variance.
    Ar1 { phi: f64 },
}

/// A channel carrying an event-locked pattern.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Planted {
    pub channel: usize,
    pub pattern: Pattern,
    /// Pattern onset relative to the event, seconds.
    pub lag_s: f64,
    /// Amplitude multiplier on top of the global SNR.
    #[serde(default = "unit_gain")]
    pub gain: f64,
}

fn unit_gain() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XorOptions {
    /// Length of the level shift centred on the event.
    pub episode_s: f64,
    /// Probability that a gap between events has both channels raised.
    pub decoy_fraction: f64,
    /// Spacing between an episode and a neighbouring decoy.
    pub guard_s: f64,
}

impl Default for XorOptions {
    fn default() -> Self {
        XorOptions {
            episode_s: 2.0,
            decoy_fraction: 0.5,
            guard_s: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_channels: usize,
    pub duration_s: f64,
    pub sample_rate: f64,
    pub epoch: i64,
    pub n_events: usize,
    pub planted: Vec<Planted>,
    /// Pattern amplitude in units of the noise standard deviation.
    pub snr: f64,
    pub noise: Noise,
    pub pattern_len_s: f64,
    pub xor: XorOptions,
    /// Events stay this far from both ends of the store.
    pub edge_margin_s: f64,
}

impl GenConfig {
    pub fn new(n_channels: usize, duration_s: f64, n_events: usize) -> Self {
        GenConfig {
            n_channels,
            duration_s,
            sample_rate: 16.0,
            epoch: 0,
            n_events,
            planted: Vec::new(),
            snr: 3.0,
            noise: Noise::White,
            pattern_len_s: 0.5,
            xor: XorOptions::default(),
            edge_margin_s: 5.0,
        }
    }

    pub fn plant(self, channel: usize, pattern: Pattern) -> Self {
        self.plant_with(channel, pattern, 1.0)
    }

    pub fn plant_with(mut self, channel: usize, pattern: Pattern, gain: f64) -> Self {
        self.planted.push(Planted {
            channel,
            pattern,
            lag_s: 0.0,
            gain,
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 {
            return Err(Error::Config("n_channels must be positive".into()));
        }
        if self.planted.len() > self.n_channels {
            return Err(Error::Config(format!(
                "{} planted channels exceed P={}",
                self.planted.len(),
                self.n_channels
            )));
        }
        let mut seen = vec![false; self.n_channels];
        for pl in &self.planted {
            match seen.get_mut(pl.channel) {
                None => return Err(Error::Config(format!("planted channel {} >= P", pl.channel))),
                Some(true) => return Err(Error::Config(format!("channel {} planted twice", pl.channel))),
                Some(s) => *s = true,
            }
            if !pl.lag_s.is_finite() || !(pl.gain >= 0.0 && pl.gain.is_finite()) {
                return Err(Error::Config("lag must be finite and gain finite and non-negative".into()));
            }
        }
        if self.planted.iter().filter(|p| p.pattern == Pattern::XorPair).count() % 2 != 0 {
            return Err(Error::Config("xor-pair channels must come in pairs".into()));
        }
        if !(self.sample_rate > 0.0) || !(self.duration_s > 0.0) {
            return Err(Error::Config("sample rate and duration must be positive".into()));
        }
        if !(self.snr >= 0.0) || !(self.pattern_len_s > 0.0) {
            return Err(Error::Config("snr must be >= 0 and pattern length > 0".into()));
        }
        if let Noise::Ar1 { phi } = self.noise {
            if !(phi.abs() < 1.0) {
                return Err(Error::Config(format!("AR(1) coefficient must satisfy |phi| < 1, got {phi}")));
            }
        }
        if !(0.0..=1.0).contains(&self.xor.decoy_fraction) {
            return Err(Error::Config("decoy fraction must lie in [0, 1]".into()));
        }
        let usable = self.duration_s - 2.0 * self.edge_margin_s;
        if self.n_events > 0 && usable <= 0.0 {
            return Err(Error::Config("duration too short for the edge margin".into()));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate).round() as usize
    }
}

/// Ground truth returned alongside the generated store.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthMeta {
    pub informative: Vec<usize>,
    pub planted: Vec<Planted>,
    /// For each xor pair, the channel that carried the episode at each event.
    pub xor_active: Vec<Vec<usize>>,
    /// Intervals where both channels of every pair are raised.
    pub decoys: Vec<(f64, f64)>,
    pub seed: u64,
}

fn add_span<S: Scalar>(x: &mut [S], from: f64, to: f64, fs: f64, epoch: f64, amp: f64) {
    let n = x.len() as i64;
    let a = (((from - epoch) * fs).ceil() as i64).clamp(0, n);
    let b = (((to - epoch) * fs).ceil() as i64).clamp(0, n);
    for v in &mut x[a as usize..b as usize] {
        *v += S::of(amp);
    }
}

/// Generates a store and its event list from `cfg`, using the synthetic-data stream of `seed`.
pub fn synth_generate<S: Scalar>(cfg: &GenConfig, seed: u64) -> Result<(ChannelStore<S>, EventList, SynthMeta)> {
    cfg.validate()?;
    let mut rng = stream(seed, Stream::Synth);
    let fs = cfg.sample_rate;
    let n = cfg.n_samples();
    let epoch = cfg.epoch as f64;

    // events: one per equal slot, placed in the middle half of the slot
    let mut times = Vec::with_capacity(cfg.n_events);
    if cfg.n_events > 0 {
        let w = (cfg.duration_s - 2.0 * cfg.edge_margin_s) / cfg.n_events as f64;
        for k in 0..cfg.n_events {
            let u: f64 = rng.random();
            times.push(epoch + cfg.edge_margin_s + w * (k as f64 + 0.25 + 0.5 * u));
        }
    }
    let events = EventList::new(times)?;

    let pairs: Vec<(usize, usize)> = cfg
        .planted
        .iter()
        .filter(|p| p.pattern == Pattern::XorPair)
        .map(|p| p.channel)
        .collect::<Vec<_>>()
        .chunks_exact(2)
        .map(|c| (c[0], c[1]))
        .collect();
    let xor_active: Vec<Vec<usize>> = pairs
        .iter()
        .map(|&(a, b)| {
            events
                .times()
                .iter()
                .map(|_| if rng.random::<bool>() { a } else { b })
                .collect()
        })
        .collect();
    let mut decoys = Vec::new();
    if !pairs.is_empty() {
        let half = cfg.xor.episode_s / 2.0 + cfg.xor.guard_s;
        let mut bounds = vec![epoch];
        bounds.extend_from_slice(events.times());
        bounds.push(epoch + cfg.duration_s);
        for (gi, w) in bounds.windows(2).enumerate() {
            let lo = if gi == 0 { w[0] } else { w[0] + half };
            let hi = if gi + 1 == bounds.len() - 1 { w[1] } else { w[1] - half };
            let take = rng.random::<f64>() < cfg.xor.decoy_fraction;
            if take && hi > lo {
                decoys.push((lo, hi));
            }
        }
    }

    let mut data = vec![S::zero(); cfg.n_channels * n];
    for row in data.chunks_exact_mut(n.max(1)) {
        match cfg.noise {
            Noise::White => row.iter_mut().for_each(|v| *v = S::of(rng.sample(StandardNormal))),
            Noise::Ar1 { phi } => {
                let k = (1.0 - phi * phi).sqrt();
                let mut prev: f64 = rng.sample(StandardNormal);
                for v in row.iter_mut() {
                    *v = S::of(prev);
                    let e: f64 = rng.sample(StandardNormal);
                    prev = phi * prev + k * e;
                }
            }
        }
    }

    let len = ((cfg.pattern_len_s * fs).round() as usize).max(1);
    for pl in &cfg.planted {
        let amp = cfg.snr * pl.gain;
        let x = &mut data[pl.channel * n..(pl.channel + 1) * n];
        match pl.pattern {
            Pattern::XorPair => {
                let pair = pairs.iter().position(|&(a, b)| a == pl.channel || b == pl.channel).unwrap();
                for (e, &who) in events.times().iter().zip(&xor_active[pair]) {
                    if who == pl.channel {
                        let c = e + pl.lag_s;
                        add_span(x, c - cfg.xor.episode_s / 2.0, c + cfg.xor.episode_s / 2.0, fs, epoch, amp);
                    }
                }
                for &(a, b) in &decoys {
                    add_span(x, a, b, fs, epoch, amp);
                }
            }
            pattern => {
                for e in events.times() {
                    let onset = ((e + pl.lag_s - epoch) * fs).round() as i64;
                    let taps = match pattern {
                        Pattern::Spike => 1,
                        _ => len,
                    };
                    for k in 0..taps {
                        let i = onset + k as i64;
                        if i < 0 || i >= n as i64 {
                            continue;
                        }
                        let kf = k as f64;
                        let v = match pattern {
                            Pattern::DampedSine => {
                                amp * (-kf / (len as f64 / 3.0)).exp()
                                    * (2.0 * std::f64::consts::PI * 2.0 * kf / fs).sin()
                            }
                            _ => amp,
                        };
                        x[i as usize] += S::of(v);
                    }
                }
            }
        }
    }

    let store = ChannelStore::new(fs, cfg.epoch, cfg.n_channels, data)?;
    let meta = SynthMeta {
        informative: cfg.planted.iter().map(|p| p.channel).collect(),
        planted: cfg.planted.clone(),
        xor_active,
        decoys,
        seed,
    };
    Ok((store, events, meta))
}
