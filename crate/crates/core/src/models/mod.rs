//! Architecture specifications, initialisation, and hand-wired passes for
//! the seven models: `FF`, `LF`, `1Hid`, `1HidReLU`, `VGG6`, `VGG13`, `VGG13-BN`.

mod bank;
mod checkpoint;
mod network;
mod params;
mod spec;

pub use bank::{bank_of, fixed_filter_bank, FixedFilter};
pub use checkpoint::{Checkpoint, Constants, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use network::{
    apply_bn_updates, backward, centre_offset, forward, hidden_map_activity, predict, predict_logits, Caches,
    ForwardPass, EVAL_CHUNK,
};
pub use params::{build, LayerParams, ModelParams};
pub use spec::{ArchitectureSpec, LayerDef, LayerShape, ModelKind, DEFAULT_HIDDEN_MAPS, VGG_FC_HIDDEN};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Rewrites an `FF` model as the `LF` model with filters
/// `w_p = sum_k omega_kp f_k`, embedded at the centre of a full-length window.
pub fn ff_as_lf<S: Scalar>(spec: &ArchitectureSpec, params: &ModelParams<S>) -> Result<(ArchitectureSpec, ModelParams<S>)> {
    if spec.kind != ModelKind::FF {
        return Err(Error::invalid(format!("expected an FF spec, got {}", spec.kind)));
    }
    params.check_against(spec)?;
    let LayerParams::Combination { omega, b } = &params.layers[0] else {
        unreachable!()
    };
    let d = spec.ff_len();
    let t = spec.input_len;
    let p = spec.n_channels;
    let bank: Vec<Vec<S>> = bank_of(&spec.fixed_bank, d)?;
    let off = centre_offset(t, d);
    let mut w = vec![S::zero(); p * t];
    for ch in 0..p {
        for (k, f) in bank.iter().enumerate() {
            let om = omega.get(&[k, ch]);
            for (i, &fv) in f.iter().enumerate() {
                w[ch * t + off + i] += om * fv;
            }
        }
    }
    let lf = ArchitectureSpec::new(ModelKind::LF, p, t);
    let params = ModelParams {
        layers: vec![LayerParams::Conv {
            w: Tensor::new(vec![1, p, t], w)?,
            b: b.clone(),
        }],
    };
    Ok((lf, params))
}
