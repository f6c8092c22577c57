use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ArchitectureSpec, ModelKind, ModelParams};
use crate::scalar::Scalar;

/// One regularisation group: a strided slice of the layer-0 weight tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    /// Input channel `p`.
    pub channel: usize,
    /// First-layer feature map `i` (always 0 for `FF` and `LF`).
    pub map: usize,
    pub offset: usize,
    pub stride: usize,
    pub len: usize,
}

impl Group {
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).map(move |k| self.offset + k * self.stride)
    }

    pub fn gather<S: Scalar>(&self, data: &[S]) -> Vec<S> {
        self.indices().map(|i| data[i]).collect()
    }

    pub fn norm<S: Scalar>(&self, data: &[S]) -> S {
        self.indices().map(|i| data[i] * data[i]).sum::<S>().sqrt()
    }
}

/// Partition of the layer-0 weights into per-(channel, map) filters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupView {
    pub groups: Vec<Group>,
    /// Element count of the tensor the groups partition.
    pub total: usize,
}

impl GroupView {
    pub fn for_spec(spec: &ArchitectureSpec) -> Result<Self> {
        spec.validate()?;
        let p = spec.n_channels;
        let mut groups = Vec::new();
        let total;
        if spec.kind == ModelKind::FF {
            // omega is [K x P]; a channel's group is its column
            let k = spec.fixed_bank.len();
            total = k * p;
            for ch in 0..p {
                groups.push(Group {
                    channel: ch,
                    map: 0,
                    offset: ch,
                    stride: p,
                    len: k,
                });
            }
        } else {
            let Some(crate::models::LayerDef::Conv {
                in_maps,
                out_maps,
                kernel,
            }) = spec.layers().first().copied()
            else {
                return Err(Error::invalid("first layer is not a convolution"));
            };
            total = out_maps * in_maps * kernel;
            for i in 0..out_maps {
                for ch in 0..in_maps {
                    groups.push(Group {
                        channel: ch,
                        map: i,
                        offset: (i * in_maps + ch) * kernel,
                        stride: 1,
                        len: kernel,
                    });
                }
            }
        }
        let view = GroupView { groups, total };
        view.validate()?;
        Ok(view)
    }

    /// Checks that the groups cover every element exactly once.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.total];
        for g in &self.groups {
            for i in g.indices() {
                match seen.get_mut(i) {
                    Some(s) if !*s => *s = true,
                    Some(_) => return Err(Error::invalid(format!("element {i} belongs to two groups"))),
                    None => return Err(Error::invalid(format!("group index {i} out of range {}", self.total))),
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("element {i} is in no group")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// `eta_g = ||w_g||_2` for every group.
pub fn channel_norms<S: Scalar>(params: &ModelParams<S>, groups: &GroupView) -> Vec<S> {
    let data = params.layer0_weight().data();
    groups.groups.iter().map(|g| g.norm(data)).collect()
}
