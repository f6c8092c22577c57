//! Resolution of the flat key-value configuration into typed settings.
//!
//! Every getter records the value it used, so the resolved config written to a
//! run directory lists defaults as well as explicit keys.

use std::path::PathBuf;
use std::str::FromStr;

use auxnet::data::{DatasetCounts, GenConfig, Noise, Pattern, Planted, Ranges, TimeRange, XorOptions};
use auxnet::kvconfig::KvConfig;
use auxnet::models::{ArchitectureSpec, ModelKind, DEFAULT_HIDDEN_MAPS, VGG_FC_HIDDEN};
use auxnet::training::{GridSpec, Protocol, TrainConfig};
use auxnet::{Error, Result};

pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "store",
    "events",
    "checkpoint",
    "gen.channels",
    "gen.duration",
    "gen.sample_rate",
    "gen.epoch",
    "gen.events",
    "gen.snr",
    "gen.noise",
    "gen.planted",
    "gen.pattern_len",
    "gen.edge_margin",
    "gen.xor_episode",
    "gen.xor_decoy_fraction",
    "gen.xor_guard",
    "model",
    "hidden_maps",
    "input_len",
    "ff_filter_len",
    "width_factor",
    "fc_hidden",
    "batch_size",
    "init_lr",
    "lr_decay_factor",
    "patience_decay",
    "patience_stop",
    "validate_every",
    "min_lr",
    "lambda",
    "alpha",
    "protocol",
    "max_iterations",
    "range.train",
    "range.val",
    "range.test",
    "count.train",
    "count.val_in_training",
    "count.val_ranking",
    "count.test",
    "grid.init_lr",
    "grid.lambda",
    "grid.alpha",
    "grid.input_len",
    "eval.split",
    "report.top_k",
    "report.probe",
];

/// Source config plus the resolved view built up as values are read.
pub struct Resolver {
    src: KvConfig,
    out: KvConfig,
}

impl Resolver {
    pub fn new(src: KvConfig) -> Result<Self> {
        let unknown = src.unknown_keys(KNOWN_KEYS);
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        Ok(Resolver {
            src,
            out: KvConfig::default(),
        })
    }

    pub fn get<T: FromStr + ToString>(&mut self, key: &str, default: T) -> Result<T> {
        let v = self.src.get_or(key, default)?;
        self.out.set(key, v.to_string());
        Ok(v)
    }

    pub fn opt<T: FromStr + ToString>(&mut self, key: &str) -> Result<Option<T>> {
        let v = self.src.get::<T>(key)?;
        self.out.set(key, v.as_ref().map_or_else(|| "none".to_string(), T::to_string));
        Ok(v)
    }

    /// Like [`opt`](Self::opt) but `none` / `all` spell absence explicitly.
    fn opt_count(&mut self, key: &str, default: Option<usize>) -> Result<Option<usize>> {
        let v = match self.src.raw(key) {
            None => default,
            Some("none") | Some("all") => None,
            Some(_) => Some(self.src.require::<usize>(key)?),
        };
        self.out.set(key, v.map_or_else(|| "all".to_string(), |n| n.to_string()));
        Ok(v)
    }

    pub fn path(&mut self, key: &str) -> Result<PathBuf> {
        let v: String = self.src.require(key)?;
        self.out.set(key, &v);
        Ok(PathBuf::from(v))
    }

    fn list<T: FromStr + ToString>(&mut self, key: &str, default: T) -> Result<Vec<T>> {
        let v = match self.src.list::<T>(key)? {
            Some(v) => v,
            None => vec![default],
        };
        let text: Vec<String> = v.iter().map(T::to_string).collect();
        self.out.set(key, text.join(","));
        Ok(v)
    }

    pub fn has(&self, key: &str) -> bool {
        self.src.contains(key)
    }

    pub fn resolved(&self) -> &KvConfig {
        &self.out
    }

    pub fn seed(&mut self) -> Result<u64> {
        self.get("seed", 0u64)
    }

    pub fn gen_config(&mut self) -> Result<GenConfig> {
        let mut g = GenConfig::new(
            self.get("gen.channels", 32usize)?,
            self.get("gen.duration", 3600.0)?,
            self.get("gen.events", 400usize)?,
        );
        g.sample_rate = self.get("gen.sample_rate", 16.0)?;
        g.epoch = self.get("gen.epoch", 0i64)?;
        g.snr = self.get("gen.snr", 3.0)?;
        g.noise = parse_noise(&self.get("gen.noise", "white".to_string())?)?;
        g.planted = parse_planted(&self.get("gen.planted", "0:spike,1:step,2:damped-sine".to_string())?)?;
        g.pattern_len_s = self.get("gen.pattern_len", 0.5)?;
        g.edge_margin_s = self.get("gen.edge_margin", 5.0)?;
        let x = XorOptions::default();
        g.xor = XorOptions {
            episode_s: self.get("gen.xor_episode", x.episode_s)?,
            decoy_fraction: self.get("gen.xor_decoy_fraction", x.decoy_fraction)?,
            guard_s: self.get("gen.xor_guard", x.guard_s)?,
        };
        g.validate()?;
        Ok(g)
    }

    /// Architecture for `n_channels` inputs; VGG kinds default to their fixed length.
    pub fn spec(&mut self, n_channels: usize) -> Result<ArchitectureSpec> {
        let kind: ModelKind = self.get("model", ModelKind::LF)?;
        let t_default = kind.required_input_len().unwrap_or(16);
        let mut spec = ArchitectureSpec::new(kind, n_channels, self.get("input_len", t_default)?);
        spec.hidden_maps = self.get("hidden_maps", DEFAULT_HIDDEN_MAPS)?;
        spec.width_factor = self.get("width_factor", 1.0)?;
        spec.fc_hidden = self.get("fc_hidden", VGG_FC_HIDDEN)?;
        if kind == ModelKind::FF {
            spec.ff_filter_len = self.opt("ff_filter_len")?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn train_config(&mut self, seed: u64) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let protocol = match self.get("protocol", "standard".to_string())?.as_str() {
            "standard" => Protocol::Standard,
            "flat-comparison" => Protocol::FlatComparison,
            other => return Err(Error::Config(format!("unknown protocol {other:?}"))),
        };
        let c = TrainConfig {
            batch_size: self.get("batch_size", d.batch_size)?,
            init_lr: self.get("init_lr", d.init_lr)?,
            lr_decay_factor: self.get("lr_decay_factor", d.lr_decay_factor)?,
            patience_decay: self.get("patience_decay", d.patience_decay)?,
            patience_stop: self.get("patience_stop", d.patience_stop)?,
            validate_every: self.get("validate_every", d.validate_every)?,
            min_lr: self.opt("min_lr")?,
            lambda: self.get("lambda", d.lambda)?,
            alpha: self.get("alpha", d.alpha)?,
            seed,
            protocol,
            max_iterations: self.get("max_iterations", d.max_iterations)?,
        };
        c.validate()?;
        Ok(c)
    }

    /// Train/validation/test ranges; defaults split `[start, end)` 60/20/20.
    pub fn ranges(&mut self, start: f64, end: f64) -> Result<Ranges> {
        let span = end - start;
        let a = start + 0.6 * span;
        let b = start + 0.8 * span;
        let r = Ranges {
            train: self.range("range.train", start, a)?,
            val: self.range("range.val", a, b)?,
            test: self.range("range.test", b, end)?,
        };
        r.validate()?;
        Ok(r)
    }

    fn range(&mut self, key: &str, start: f64, end: f64) -> Result<TimeRange> {
        let v = match self.src.list::<f64>(key)? {
            None => vec![start, end],
            Some(v) if v.len() == 2 => v,
            Some(_) => return Err(Error::Config(format!("{key}: expected start,end"))),
        };
        self.out.set(key, format!("{},{}", v[0], v[1]));
        TimeRange::new(v[0], v[1])
    }

    pub fn counts(&mut self) -> Result<DatasetCounts> {
        let d = DatasetCounts::default();
        Ok(DatasetCounts {
            train_per_class: self.opt_count("count.train", d.train_per_class)?,
            val_in_training_per_class: self.get("count.val_in_training", d.val_in_training_per_class)?,
            val_ranking_per_class: self.get("count.val_ranking", d.val_ranking_per_class)?,
            test_per_class: self.opt_count("count.test", d.test_per_class)?,
        })
    }

    pub fn grid(&mut self, base: &TrainConfig, input_len: usize) -> Result<GridSpec> {
        let g = GridSpec {
            init_lr: self.list("grid.init_lr", base.init_lr)?,
            lambda: self.list("grid.lambda", base.lambda)?,
            alpha: self.list("grid.alpha", base.alpha)?,
            input_len: self.list("grid.input_len", input_len)?,
        };
        g.validate()?;
        Ok(g)
    }
}

fn parse_noise(s: &str) -> Result<Noise> {
    match s.split_once(':') {
        None if s == "white" => Ok(Noise::White),
        Some(("ar1", phi)) => phi
            .parse()
            .map(|phi| Noise::Ar1 { phi })
            .map_err(|_| Error::Config(format!("gen.noise: bad AR(1) coefficient {phi:?}"))),
        _ => Err(Error::Config(format!("gen.noise: expected white or ar1:<phi>, got {s:?}"))),
    }
}

/// `channel:pattern[:gain[:lag]]` items separated by commas.
pub fn parse_planted(s: &str) -> Result<Vec<Planted>> {
    let bad = |item: &str| Error::Config(format!("gen.planted: cannot parse {item:?}"));
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|item| {
            let parts: Vec<&str> = item.split(':').collect();
            if !(2..=4).contains(&parts.len()) {
                return Err(bad(item));
            }
            let num = |i: usize, d: f64| parts.get(i).map_or(Ok(d), |x| x.parse::<f64>().map_err(|_| bad(item)));
            Ok(Planted {
                channel: parts[0].parse().map_err(|_| bad(item))?,
                pattern: Pattern::from_str(parts[1])?,
                gain: num(2, 1.0)?,
                lag_s: num(3, 0.0)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_syntax() {
        let p = parse_planted("3:spike, 7:damped-sine:2.5,9:step:1:0.25").unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p[1].gain, 2.5);
        assert_eq!(p[2].lag_s, 0.25);
        assert!(parse_planted("3").is_err());
        assert!(parse_planted("3:wobble").is_err());
    }

    #[test]
    fn resolved_lists_defaults() {
        let mut r = Resolver::new(KvConfig::parse("init_lr = 0.01\n").unwrap()).unwrap();
        let c = r.train_config(4).unwrap();
        assert_eq!(c.init_lr, 0.01);
        assert_eq!(r.resolved().raw("batch_size"), Some("64"));
        assert_eq!(r.resolved().raw("min_lr"), Some("none"));
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(Resolver::new(KvConfig::parse("lamda = 1\n").unwrap()).is_err());
    }
}
