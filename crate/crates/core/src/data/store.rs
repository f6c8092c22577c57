//! Multichannel sample store and its binary file format.
//!
//! ```text
//! "AUXC" | u32 version=1 | u32 P | u32 N | f64 sample_rate | i64 epoch_seconds
//! P x N f32, channel-major, little-endian
//! ```

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const STORE_MAGIC: &[u8; 4] = b"AUXC";
pub const STORE_VERSION: u32 = 1;
pub const STORE_HEADER_LEN: usize = 32;

/// `P` equally sampled channels starting at `epoch` seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStore<S> {
    sample_rate: f64,
    epoch: i64,
    n_channels: usize,
    n_samples: usize,
    data: Vec<S>,
}

impl<S: Scalar> ChannelStore<S> {
    /// `data` is channel-major, `n_channels * n_samples` long.
    pub fn new(sample_rate: f64, epoch: i64, n_channels: usize, data: Vec<S>) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::invalid(format!("sample rate must be positive, got {sample_rate}")));
        }
        if n_channels == 0 || data.is_empty() || data.len() % n_channels != 0 {
            return Err(Error::invalid(format!(
                "{} values do not divide into {n_channels} equal non-empty channels",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "channel {} sample {}",
                i / (data.len() / n_channels),
                i % (data.len() / n_channels)
            )));
        }
        Ok(ChannelStore {
            sample_rate,
            epoch,
            n_channels,
            n_samples: data.len() / n_channels,
            data,
        })
    }

    pub fn from_channels(sample_rate: f64, epoch: i64, channels: Vec<Vec<S>>) -> Result<Self> {
        let p = channels.len();
        let n = channels.first().map_or(0, Vec::len);
        if let Some(c) = channels.iter().find(|c| c.len() != n) {
            return Err(Error::shape("ChannelStore", "channel length", n, c.len()));
        }
        Self::new(sample_rate, epoch, p, channels.concat())
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn epoch(&self) -> i64 {
        self.epoch
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn channel(&self, p: usize) -> &[S] {
        &self.data[p * self.n_samples..(p + 1) * self.n_samples]
    }

    pub fn channel_mut(&mut self, p: usize) -> &mut [S] {
        let n = self.n_samples;
        &mut self.data[p * n..(p + 1) * n]
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    /// Time of the first sample.
    pub fn start(&self) -> f64 {
        self.epoch as f64
    }

    /// One sample period past the last sample.
    pub fn end(&self) -> f64 {
        self.epoch as f64 + self.n_samples as f64 / self.sample_rate
    }

    pub fn time_of(&self, index: usize) -> f64 {
        self.epoch as f64 + index as f64 / self.sample_rate
    }

    /// Nearest sample index to `t` (may be out of range).
    pub fn index_of(&self, t: f64) -> i64 {
        ((t - self.epoch as f64) * self.sample_rate).round() as i64
    }

    /// Sample indices whose times fall in `[start, end)`.
    pub fn index_range(&self, start: f64, end: f64) -> std::ops::Range<usize> {
        let lo = ((start - self.epoch as f64) * self.sample_rate).ceil().max(0.0) as usize;
        let hi = ((end - self.epoch as f64) * self.sample_rate).ceil().max(0.0) as usize;
        lo.min(self.n_samples)..hi.min(self.n_samples)
    }

    pub fn cast<T: Scalar>(&self) -> ChannelStore<T> {
        ChannelStore {
            sample_rate: self.sample_rate,
            epoch: self.epoch,
            n_channels: self.n_channels,
            n_samples: self.n_samples,
            data: self.data.iter().map(|v| T::of(v.f64())).collect(),
        }
    }

    /// First sample index of the length-`len` window around `t`:
    /// `t_idx - ceil(len/2) + 1 .. t_idx + floor(len/2)`.
    pub fn window_start(&self, t: f64, len: usize) -> Result<usize> {
        if len == 0 {
            return Err(Error::invalid("window length must be positive"));
        }
        if !t.is_finite() {
            return Err(Error::NonFinite("window time".into()));
        }
        let centre = self.index_of(t);
        let first = centre - len.div_ceil(2) as i64 + 1;
        let last = centre + (len / 2) as i64;
        if first < 0 || last >= self.n_samples as i64 {
            return Err(Error::invalid(format!(
                "window of {len} samples at t={t} spans indices {first}..={last}, store has {}",
                self.n_samples
            )));
        }
        Ok(first as usize)
    }

    /// Copies the `[P x len]` window around `t` into `out`.
    pub fn window_into(&self, t: f64, len: usize, out: &mut [S]) -> Result<()> {
        let first = self.window_start(t, len)?;
        if out.len() != self.n_channels * len {
            return Err(Error::shape("window_into", "output length", self.n_channels * len, out.len()));
        }
        for (p, dst) in out.chunks_exact_mut(len).enumerate() {
            dst.copy_from_slice(&self.channel(p)[first..first + len]);
        }
        Ok(())
    }
}

/// The `[P x len]` window centred on `t`, left-biased by one sample for even `len`.
pub fn extract_window<S: Scalar>(store: &ChannelStore<S>, t: f64, len: usize) -> Result<Tensor<S>> {
    let mut out = vec![S::zero(); store.n_channels() * len];
    store.window_into(t, len, &mut out)?;
    Ok(Tensor::from_parts(vec![store.n_channels(), len], out))
}

fn fmt_err(detail: impl Into<String>) -> Error {
    Error::Format {
        what: "channel store",
        detail: detail.into(),
    }
}

pub fn store_to_bytes<S: Scalar>(store: &ChannelStore<S>) -> Result<Vec<u8>> {
    let p = u32::try_from(store.n_channels).map_err(|_| fmt_err("too many channels"))?;
    let n = u32::try_from(store.n_samples).map_err(|_| fmt_err("too many samples"))?;
    let mut out = Vec::with_capacity(STORE_HEADER_LEN + 4 * store.data.len());
    out.extend_from_slice(STORE_MAGIC);
    out.extend_from_slice(&STORE_VERSION.to_le_bytes());
    out.extend_from_slice(&p.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&store.sample_rate.to_le_bytes());
    out.extend_from_slice(&store.epoch.to_le_bytes());
    for v in &store.data {
        out.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
    }
    Ok(out)
}

pub fn store_from_bytes<S: Scalar>(bytes: &[u8]) -> Result<ChannelStore<S>> {
    if bytes.len() < STORE_HEADER_LEN {
        return Err(fmt_err(format!("truncated header: {} bytes", bytes.len())));
    }
    if &bytes[..4] != STORE_MAGIC {
        return Err(fmt_err("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != STORE_VERSION {
        return Err(fmt_err(format!("unsupported version {version}")));
    }
    let p = u32_at(8) as usize;
    let n = u32_at(12) as usize;
    let fs = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let epoch = i64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let expected = p
        .checked_mul(n)
        .and_then(|x| x.checked_mul(4))
        .and_then(|x| x.checked_add(STORE_HEADER_LEN))
        .ok_or_else(|| fmt_err("size overflow"))?;
    if bytes.len() != expected {
        return Err(fmt_err(format!(
            "expected {expected} bytes for {p} x {n} samples, found {}",
            bytes.len()
        )));
    }
    let data = bytes[STORE_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| S::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    ChannelStore::new(fs, epoch, p, data).map_err(|e| fmt_err(e.to_string()))
}

pub fn write_store<S: Scalar>(path: &Path, store: &ChannelStore<S>) -> Result<()> {
    let bytes = store_to_bytes(store)?;
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(&bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_store<S: Scalar>(path: &Path) -> Result<ChannelStore<S>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    store_from_bytes(&bytes)
}

/// Strictly increasing event times in seconds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventList {
    times: Vec<f64>,
}

impl EventList {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if let Some(t) = times.iter().find(|t| !t.is_finite()) {
            return Err(Error::NonFinite(format!("event time {t}")));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "event times must be strictly increasing: {} then {}",
                w[0], w[1]
            )));
        }
        Ok(EventList { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Events with `start <= t < end`.
    pub fn in_range(&self, start: f64, end: f64) -> &[f64] {
        let lo = self.times.partition_point(|&t| t < start);
        let hi = self.times.partition_point(|&t| t < end);
        &self.times[lo..hi]
    }

    /// Distance from `t` to the nearest event, or infinity when there are none.
    pub fn distance_to_nearest(&self, t: f64) -> f64 {
        let i = self.times.partition_point(|&e| e < t);
        let mut d = f64::INFINITY;
        if i < self.times.len() {
            d = d.min(self.times[i] - t);
        }
        if i > 0 {
            d = d.min(t - self.times[i - 1]);
        }
        d
    }

    pub fn check_within<S: Scalar>(&self, store: &ChannelStore<S>) -> Result<()> {
        match (self.times.first(), self.times.last()) {
            (Some(&a), Some(&b)) if a < store.start() || b >= store.end() => Err(Error::invalid(format!(
                "events span [{a}, {b}] outside store extent [{}, {})",
                store.start(),
                store.end()
            ))),
            _ => Ok(()),
        }
    }
}

pub fn parse_events(text: &str) -> Result<EventList> {
    let mut times = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let t: f64 = line.parse().map_err(|_| Error::Format {
            what: "event list",
            detail: format!("line {}: cannot parse {line:?} as seconds", no + 1),
        })?;
        times.push(t);
    }
    EventList::new(times)
}

pub fn read_events(path: &Path) -> Result<EventList> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_events(&text)
}

pub fn write_events(path: &Path, events: &EventList) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "# event times in seconds")?;
        for t in &events.times {
            writeln!(w, "{t}")?;
        }
        w.flush()
    };
    body().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(p: usize, n: usize) -> ChannelStore<f64> {
        let data = (0..p * n).map(|i| i as f64).collect();
        ChannelStore::new(16.0, 0, p, data).unwrap()
    }

    #[test]
    fn window_indices() {
        let s = ramp(1, 400);
        let w = extract_window(&s, 10.0, 8).unwrap();
        assert_eq!(w.data(), (157..=164).map(|i| i as f64).collect::<Vec<_>>().as_slice());
        let a = extract_window(&s, 10.0, 8).unwrap();
        let b = extract_window(&s, 10.0 + 1.0 / 16.0, 8).unwrap();
        assert_eq!(&a.data()[1..], &b.data()[..7]);
    }

    #[test]
    fn full_length_window() {
        let s = ramp(2, 9);
        let w = extract_window(&s, 4.0 / 16.0, 9).unwrap();
        assert_eq!(w.data(), s.data());
        assert!(extract_window(&s, 5.0 / 16.0, 9).is_err());
    }

    #[test]
    fn file_size_and_round_trip() {
        let s = ChannelStore::<f32>::new(16.0, 7, 1, vec![1.0, -2.0, 3.5, 0.25]).unwrap();
        let bytes = store_to_bytes(&s).unwrap();
        assert_eq!(bytes.len(), STORE_HEADER_LEN + 16);
        assert_eq!(store_from_bytes::<f32>(&bytes).unwrap(), s);
        assert!(store_from_bytes::<f32>(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(store_from_bytes::<f32>(&bad).is_err());
    }

    #[test]
    fn events_parse() {
        let ev = parse_events("# header\n1.5\n\n2.25 # trailing\n").unwrap();
        assert_eq!(ev.times(), &[1.5, 2.25]);
        assert!(parse_events("2\n1\n").is_err());
        assert!(parse_events("x\n").is_err());
        assert_eq!(ev.distance_to_nearest(2.0), 0.25);
        assert_eq!(ev.in_range(1.5, 2.25), &[1.5]);
    }
}
