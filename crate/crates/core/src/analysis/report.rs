use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use super::roc::Roc;
use crate::error::Result;
use crate::models::{hidden_map_activity, ArchitectureSpec, ModelParams};
use crate::scalar::Scalar;
use crate::sparsity::{channel_norms, GroupView};
use crate::tensor::Tensor;

/// Groups with norm below this count as numerically zero.
pub const TINY_NORM: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub eta: Vec<f64>,
    pub n_groups: usize,
    /// Groups whose weights are exactly zero.
    pub zero_groups: usize,
    pub nonzero_groups: usize,
    /// Groups with norm below `TINY_NORM`, exact zeros included.
    pub tiny_groups: usize,
    pub fraction_nonzero: f64,
    /// Input channels with at least one nonzero group.
    pub nonzero_channels: Vec<usize>,
    /// Per hidden map: produced a positive output on the probe set.
    pub map_active: Option<Vec<bool>>,
    pub dead_maps: Option<usize>,
}

/// Norm statistics of the layer-0 groups and, given a probe set, first-ReLU map activity.
pub fn sparsity_report<S: Scalar>(
    spec: &ArchitectureSpec,
    params: &ModelParams<S>,
    groups: &GroupView,
    probe: Option<&Tensor<S>>,
) -> Result<SparsityReport> {
    let eta: Vec<f64> = channel_norms(params, groups).into_iter().map(|e| e.f64()).collect();
    let zero = eta.iter().filter(|&&e| e == 0.0).count();
    let tiny = eta.iter().filter(|&&e| e < TINY_NORM).count();
    let mut nonzero_channels: Vec<usize> = groups
        .groups
        .iter()
        .zip(&eta)
        .filter(|(_, &e)| e != 0.0)
        .map(|(g, _)| g.channel)
        .collect();
    nonzero_channels.sort_unstable();
    nonzero_channels.dedup();
    let map_active = match probe {
        Some(x) => hidden_map_activity(spec, params, x)?,
        None => None,
    };
    Ok(SparsityReport {
        n_groups: eta.len(),
        zero_groups: zero,
        nonzero_groups: eta.len() - zero,
        tiny_groups: tiny,
        fraction_nonzero: if eta.is_empty() {
            0.0
        } else {
            (eta.len() - zero) as f64 / eta.len() as f64
        },
        nonzero_channels,
        dead_maps: map_active.as_ref().map(|m| m.iter().filter(|a| !**a).count()),
        map_active,
        eta,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterTrace {
    pub rank: usize,
    pub group: usize,
    pub channel: usize,
    pub map: usize,
    pub eta: f64,
    pub weights: Vec<f64>,
}

/// The `top_k` groups by descending norm (ties by group index).
pub fn export_filters<S: Scalar>(params: &ModelParams<S>, groups: &GroupView, top_k: usize) -> Vec<FilterTrace> {
    let eta = channel_norms(params, groups);
    let mut order: Vec<usize> = (0..eta.len()).collect();
    order.sort_by(|&a, &b| eta[b].partial_cmp(&eta[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let data = params.layer0_weight().data();
    order
        .into_iter()
        .take(top_k)
        .enumerate()
        .map(|(rank, gi)| {
            let g = &groups.groups[gi];
            FilterTrace {
                rank,
                group: gi,
                channel: g.channel,
                map: g.map,
                eta: eta[gi].f64(),
                weights: g.gather(data).into_iter().map(|v| v.f64()).collect(),
            }
        })
        .collect()
}

/// One CSV for all traces: `rank,channel,map,eta,sample_index,seconds,weight`.
pub fn filters_csv(traces: &[FilterTrace], sample_rate: f64) -> String {
    let mut s = String::from("rank,channel,map,eta,sample_index,seconds,weight\n");
    for t in traces {
        for (i, w) in t.weights.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                t.rank,
                t.channel,
                t.map,
                t.eta,
                i,
                i as f64 / sample_rate,
                w
            );
        }
    }
    s
}

pub fn metrics_csv(rows: &[(&str, &Metrics)]) -> String {
    let mut s = String::from("dataset,loss,accuracy,tpr,tnr,tp,tn,fp,fn\n");
    for (name, m) in rows {
        let _ = writeln!(
            s,
            "{name},{},{},{},{},{},{},{},{}",
            m.loss, m.accuracy, m.tpr, m.tnr, m.tp, m.tn, m.fp, m.fn_
        );
    }
    s
}

pub fn roc_csv(roc: &Roc) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for (th, (f, t)) in roc.thresholds.iter().zip(&roc.points) {
        let _ = writeln!(s, "{th},{f},{t}");
    }
    s
}

/// Per-group norms plus a log10 histogram of the nonzero ones.
pub fn sparsity_csv(report: &SparsityReport, groups: &GroupView) -> String {
    let mut s = String::from("group,channel,map,eta\n");
    for (i, (g, e)) in groups.groups.iter().zip(&report.eta).enumerate() {
        let _ = writeln!(s, "{i},{},{},{e}", g.channel, g.map);
    }
    s
}

pub fn sparsity_histogram_csv(report: &SparsityReport) -> String {
    let mut bins = std::collections::BTreeMap::<i32, usize>::new();
    for &e in &report.eta {
        let key = if e == 0.0 { i32::MIN } else { e.log10().floor() as i32 };
        *bins.entry(key).or_default() += 1;
    }
    let mut s = String::from("log10_lower,count\n");
    for (k, c) in bins {
        if k == i32::MIN {
            let _ = writeln!(s, "zero,{c}");
        } else {
            let _ = writeln!(s, "{k},{c}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Mode;
    use crate::models::{build, forward, LayerParams, ModelKind};
    use crate::sparsity::group_soft_threshold;

    #[test]
    fn huge_threshold_zeroes_everything() {
        let spec = ArchitectureSpec::new(ModelKind::LF, 6, 8);
        let mut params = build::<f64>(&spec, 1).unwrap();
        let groups = GroupView::for_spec(&spec).unwrap();
        let r = sparsity_report(&spec, &params, &groups, None).unwrap();
        assert_eq!(r.nonzero_groups, 6);
        let w = params.layer0_weight_mut();
        let z = group_soft_threshold(w.data(), 1e6);
        w.data_mut().copy_from_slice(&z);
        let r = sparsity_report(&spec, &params, &groups, None).unwrap();
        assert_eq!((r.zero_groups, r.fraction_nonzero), (6, 0.0));
        assert_eq!(r.zero_groups + r.nonzero_groups, r.n_groups);
    }

    #[test]
    fn negative_bias_kills_a_map() {
        let spec = ArchitectureSpec::new(ModelKind::OneHidReLU, 2, 6).with_hidden_maps(3);
        let mut params = build::<f64>(&spec, 4).unwrap();
        if let LayerParams::Conv { b, .. } = &mut params.layers[0] {
            b.data_mut()[1] = -1e6;
        }
        let x = Tensor::new(vec![5, 2, 6], (0..60).map(|i| ((i * 7) % 11) as f64 / 11.0 - 0.5).collect()).unwrap();
        let groups = GroupView::for_spec(&spec).unwrap();
        let r = sparsity_report(&spec, &params, &groups, Some(&x)).unwrap();
        assert!(!r.map_active.as_ref().unwrap()[1]);
        assert!(r.dead_maps.unwrap() >= 1);
        let _ = forward(&spec, &params, &x, Mode::Eval).unwrap();
    }

    #[test]
    fn export_order_matches_norms() {
        let spec = ArchitectureSpec::new(ModelKind::LF, 5, 4);
        let mut params = build::<f64>(&spec, 2).unwrap();
        params.layer0_weight_mut().data_mut()[8..12].fill(0.0);
        let groups = GroupView::for_spec(&spec).unwrap();
        let eta = channel_norms(&params, &groups);
        let out = export_filters(&params, &groups, 4);
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|t| t.channel != 2 && t.weights.len() == 4));
        for w in out.windows(2) {
            assert!(w[0].eta >= w[1].eta);
        }
        assert_eq!(out[0].eta, eta[out[0].group]);
        assert_eq!(export_filters(&params, &groups, 99).len(), 5);
    }
}
