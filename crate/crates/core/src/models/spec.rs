//! Declarative architecture descriptions and their layer tables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::bank::FixedFilter;
use crate::error::{Error, Result};
use crate::layers::correlate_len;

/// Model families, from fixed features to deep pooled networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// Logistic regression on a fixed filter bank.
    FF,
    /// One learned full-length filter per channel.
    LF,
    /// Full-length filters into `hidden_maps` scalar maps, then a linear readout.
    OneHid,
    /// As `OneHid` with a ReLU on the hidden maps.
    OneHidReLU,
    VGG6,
    VGG13,
    VGG13BN,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::FF,
        ModelKind::LF,
        ModelKind::OneHid,
        ModelKind::OneHidReLU,
        ModelKind::VGG6,
        ModelKind::VGG13,
        ModelKind::VGG13BN,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::FF => "FF",
            ModelKind::LF => "LF",
            ModelKind::OneHid => "1Hid",
            ModelKind::OneHidReLU => "1HidReLU",
            ModelKind::VGG6 => "VGG6",
            ModelKind::VGG13 => "VGG13",
            ModelKind::VGG13BN => "VGG13-BN",
        }
    }

    /// Input length the architecture is defined for, if it is fixed.
    pub fn required_input_len(self) -> Option<usize> {
        match self {
            ModelKind::VGG6 => Some(80),
            ModelKind::VGG13 | ModelKind::VGG13BN => Some(200),
            _ => None,
        }
    }

    pub fn is_vgg(self) -> bool {
        matches!(self, ModelKind::VGG6 | ModelKind::VGG13 | ModelKind::VGG13BN)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Ok(match key.as_str() {
            "ff" => ModelKind::FF,
            "lf" => ModelKind::LF,
            "1hid" | "onehid" => ModelKind::OneHid,
            "1hidrelu" | "onehidrelu" => ModelKind::OneHidReLU,
            "vgg6" => ModelKind::VGG6,
            "vgg13" => ModelKind::VGG13,
            "vgg13bn" => ModelKind::VGG13BN,
            _ => return Err(Error::Config(format!("unknown model kind '{s}'"))),
        })
    }
}

pub const DEFAULT_HIDDEN_MAPS: usize = 100;
pub const VGG_FC_HIDDEN: usize = 4096;
const VGG_KERNEL: usize = 3;
const VGG6_WIDTHS: [usize; 5] = [128, 128, 256, 256, 256];
const VGG13_TAIL_WIDTHS: [usize; 6] = [512; 6];

/// Network description: kind plus the sizes that parameterise it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub kind: ModelKind,
    /// Number of input channels `P`.
    pub n_channels: usize,
    /// Window length `T` in samples.
    pub input_len: usize,
    /// First-layer output maps for the one-hidden-layer models.
    pub hidden_maps: usize,
    /// Fixed filters used by `FF`.
    pub fixed_bank: Vec<FixedFilter>,
    /// Length of the `FF` filters; defaults to the input length.
    pub ff_filter_len: Option<usize>,
    /// Multiplier applied to the VGG convolution widths.
    pub width_factor: f64,
    /// Width of the hidden fully-connected layer of VGG13 variants.
    pub fc_hidden: usize,
}

impl ArchitectureSpec {
    pub fn new(kind: ModelKind, n_channels: usize, input_len: usize) -> Self {
        ArchitectureSpec {
            kind,
            n_channels,
            input_len,
            hidden_maps: DEFAULT_HIDDEN_MAPS,
            fixed_bank: FixedFilter::ALL.to_vec(),
            ff_filter_len: None,
            width_factor: 1.0,
            fc_hidden: VGG_FC_HIDDEN,
        }
    }

    /// VGG spec at its required input length.
    pub fn vgg(kind: ModelKind, n_channels: usize) -> Self {
        let t = kind.required_input_len().expect("not a VGG kind");
        Self::new(kind, n_channels, t)
    }

    pub fn with_hidden_maps(mut self, maps: usize) -> Self {
        self.hidden_maps = maps;
        self
    }

    pub fn with_width(mut self, factor: f64, fc_hidden: usize) -> Self {
        self.width_factor = factor;
        self.fc_hidden = fc_hidden;
        self
    }

    pub fn ff_len(&self) -> usize {
        self.ff_filter_len.unwrap_or(self.input_len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 {
            return Err(Error::invalid("n_channels must be positive"));
        }
        if self.input_len == 0 {
            return Err(Error::invalid("input_len must be positive"));
        }
        if let Some(t) = self.kind.required_input_len() {
            if self.input_len != t {
                return Err(Error::invalid(format!(
                    "{} requires input_len {t}, got {}",
                    self.kind, self.input_len
                )));
            }
        }
        match self.kind {
            ModelKind::FF => {
                if self.fixed_bank.is_empty() {
                    return Err(Error::invalid("FF needs at least one fixed filter"));
                }
                let d = self.ff_len();
                if d < 4 || d > self.input_len {
                    return Err(Error::invalid(format!(
                        "FF filter length must be in 4..={}, got {d}",
                        self.input_len
                    )));
                }
            }
            ModelKind::OneHid | ModelKind::OneHidReLU if self.hidden_maps == 0 => {
                return Err(Error::invalid("hidden_maps must be positive"));
            }
            k if k.is_vgg() => {
                if !(self.width_factor.is_finite() && self.width_factor > 0.0) {
                    return Err(Error::invalid("width_factor must be positive"));
                }
                if self.fc_hidden == 0 {
                    return Err(Error::invalid("fc_hidden must be positive"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn width(&self, base: usize) -> usize {
        ((base as f64 * self.width_factor).round() as usize).max(1)
    }

    /// Ordered layer table.
    pub fn layers(&self) -> Vec<LayerDef> {
        let p = self.n_channels;
        let t = self.input_len;
        match self.kind {
            ModelKind::FF => vec![LayerDef::FixedCombination {
                filters: self.fixed_bank.len(),
                len: self.ff_len(),
            }],
            ModelKind::LF => vec![
                LayerDef::Conv {
                    in_maps: p,
                    out_maps: 1,
                    kernel: t,
                },
                LayerDef::Flatten,
            ],
            ModelKind::OneHid | ModelKind::OneHidReLU => {
                let mut v = vec![LayerDef::Conv {
                    in_maps: p,
                    out_maps: self.hidden_maps,
                    kernel: t,
                }];
                if self.kind == ModelKind::OneHidReLU {
                    v.push(LayerDef::Relu);
                }
                v.push(LayerDef::Flatten);
                v.push(LayerDef::Linear {
                    inputs: self.hidden_maps,
                    outputs: 1,
                });
                v
            }
            ModelKind::VGG6 | ModelKind::VGG13 | ModelKind::VGG13BN => self.vgg_layers(),
        }
    }

    fn vgg_layers(&self) -> Vec<LayerDef> {
        let bn = self.kind == ModelKind::VGG13BN;
        let mut v = Vec::new();
        let mut maps = self.n_channels;
        let mut len = self.input_len;
        let conv = |v: &mut Vec<LayerDef>, maps: &mut usize, len: &mut usize, out: usize| {
            v.push(LayerDef::Conv {
                in_maps: *maps,
                out_maps: out,
                kernel: VGG_KERNEL,
            });
            if bn {
                v.push(LayerDef::BatchNorm { maps: out });
            }
            v.push(LayerDef::Relu);
            *maps = out;
            *len -= VGG_KERNEL - 1;
        };
        let pool = |v: &mut Vec<LayerDef>, len: &mut usize| {
            v.push(LayerDef::MaxPool { kernel: 2, stride: 2 });
            *len = (*len - 2) / 2 + 1;
        };
        let w: Vec<usize> = VGG6_WIDTHS.iter().map(|&b| self.width(b)).collect();
        conv(&mut v, &mut maps, &mut len, w[0]);
        conv(&mut v, &mut maps, &mut len, w[1]);
        pool(&mut v, &mut len);
        for &out in &w[2..5] {
            conv(&mut v, &mut maps, &mut len, out);
        }
        pool(&mut v, &mut len);
        if self.kind == ModelKind::VGG6 {
            v.push(LayerDef::Flatten);
            v.push(LayerDef::Linear {
                inputs: maps * len,
                outputs: 1,
            });
            return v;
        }
        for group in VGG13_TAIL_WIDTHS.chunks(3) {
            for &b in group {
                conv(&mut v, &mut maps, &mut len, self.width(b));
            }
            pool(&mut v, &mut len);
        }
        v.push(LayerDef::Flatten);
        v.push(LayerDef::Linear {
            inputs: maps * len,
            outputs: self.fc_hidden,
        });
        if bn {
            v.push(LayerDef::BatchNorm { maps: self.fc_hidden });
        }
        v.push(LayerDef::Relu);
        v.push(LayerDef::Linear {
            inputs: self.fc_hidden,
            outputs: 1,
        });
        v
    }

    /// Per-layer `(maps, length)` trace, starting with the input.
    pub fn output_shape(&self) -> Result<Vec<LayerShape>> {
        self.validate()?;
        let mut maps = self.n_channels;
        let mut len = self.input_len;
        let mut flat = false;
        let mut out = vec![LayerShape {
            layer: "input".into(),
            maps,
            length: len,
        }];
        for def in self.layers() {
            match def {
                LayerDef::FixedCombination { len: d, .. } => {
                    // single centre index of the valid correlation, combined to one logit
                    correlate_len(len, d, 1).ok_or_else(|| Error::shape("output_shape", "FF length", d, len))?;
                    maps = 1;
                    len = 1;
                }
                LayerDef::Conv { out_maps, kernel, .. } => {
                    len = correlate_len(len, kernel, 1)
                        .ok_or_else(|| Error::shape("output_shape", "conv length", kernel, len))?;
                    maps = out_maps;
                }
                LayerDef::MaxPool { kernel, stride } => {
                    if len < kernel {
                        return Err(Error::shape("output_shape", "pool length", kernel, len));
                    }
                    len = (len - kernel) / stride + 1;
                }
                LayerDef::Flatten => {
                    maps *= len;
                    len = 1;
                    flat = true;
                }
                LayerDef::Linear { outputs, .. } => {
                    maps = outputs;
                    len = 1;
                }
                LayerDef::Relu | LayerDef::BatchNorm { .. } => {}
            }
            out.push(LayerShape {
                layer: def.name().into(),
                maps,
                length: len,
            });
        }
        debug_assert!(flat || self.kind == ModelKind::FF);
        Ok(out)
    }

    /// Shape of the input to the final readout before flattening (last conv stack output).
    pub fn final_conv_shape(&self) -> Result<Option<(usize, usize)>> {
        let shapes = self.output_shape()?;
        let idx = shapes.iter().position(|s| s.layer == "flatten");
        Ok(idx.map(|i| (shapes[i - 1].maps, shapes[i - 1].length)))
    }
}

/// One entry of a layer table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerDef {
    /// Fixed filter bank evaluated at the window centre, combined by learned weights.
    FixedCombination { filters: usize, len: usize },
    Conv { in_maps: usize, out_maps: usize, kernel: usize },
    BatchNorm { maps: usize },
    Relu,
    MaxPool { kernel: usize, stride: usize },
    Flatten,
    Linear { inputs: usize, outputs: usize },
}

impl LayerDef {
    pub fn name(&self) -> &'static str {
        match self {
            LayerDef::FixedCombination { .. } => "fixed_combination",
            LayerDef::Conv { .. } => "conv",
            LayerDef::BatchNorm { .. } => "batchnorm",
            LayerDef::Relu => "relu",
            LayerDef::MaxPool { .. } => "maxpool",
            LayerDef::Flatten => "flatten",
            LayerDef::Linear { .. } => "linear",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(
            self,
            LayerDef::FixedCombination { .. } | LayerDef::Conv { .. } | LayerDef::BatchNorm { .. } | LayerDef::Linear { .. }
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerShape {
    pub layer: String,
    pub maps: usize,
    pub length: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vgg6_trace() {
        let spec = ArchitectureSpec::vgg(ModelKind::VGG6, 10);
        assert_eq!(spec.final_conv_shape().unwrap(), Some((256, 16)));
        let shapes = spec.output_shape().unwrap();
        let lin = shapes.iter().rev().find(|s| s.layer == "flatten").unwrap();
        assert_eq!(lin.maps, 4096);
        assert_eq!(shapes.last().unwrap().maps, 1);
    }

    #[test]
    fn vgg13_trace() {
        for kind in [ModelKind::VGG13, ModelKind::VGG13BN] {
            let spec = ArchitectureSpec::vgg(kind, 10);
            assert_eq!(spec.final_conv_shape().unwrap(), Some((512, 7)));
            let layers = spec.layers();
            let convs = layers.iter().filter(|l| matches!(l, LayerDef::Conv { .. })).count();
            let pools = layers.iter().filter(|l| matches!(l, LayerDef::MaxPool { .. })).count();
            let fcs = layers.iter().filter(|l| matches!(l, LayerDef::Linear { .. })).count();
            assert_eq!((convs, pools, fcs), (11, 4, 2));
            assert!(layers.contains(&LayerDef::Linear {
                inputs: 3584,
                outputs: 4096
            }));
        }
    }

    #[test]
    fn lf_reduces_to_scalar() {
        for t in [8, 33, 80] {
            let spec = ArchitectureSpec::new(ModelKind::LF, 7, t);
            let shapes = spec.output_shape().unwrap();
            assert_eq!(shapes[1].length, 1);
            assert_eq!(shapes[1].maps, 1);
        }
    }

    #[test]
    fn vgg_rejects_wrong_length() {
        assert!(ArchitectureSpec::new(ModelKind::VGG6, 3, 81).validate().is_err());
        assert!(ArchitectureSpec::new(ModelKind::VGG13BN, 3, 80).validate().is_err());
    }

    #[test]
    fn spec_serialises_losslessly() {
        let spec = ArchitectureSpec::vgg(ModelKind::VGG13BN, 12).with_width(0.1, 17);
        let json = serde_json::to_string(&spec).unwrap();
        let back: ArchitectureSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn kind_names_parse() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
    }
}
