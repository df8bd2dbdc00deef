//! Parameter and FLOP counts for a model before and after pruning.
//!
//! Removing a conv layer's output filter also removes the matching input
//! channel of the next conv layer (or the matching slice of the first fully
//! connected layer). FLOPs count multiplies and adds separately; biases are
//! parameters, pooling and activations are free.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelManifest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    /// `conv<id>` or `fc<n>`.
    pub name: String,
    pub params_baseline: u64,
    pub params_pruned: u64,
    pub flops_baseline: u64,
    pub flops_pruned: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub params_baseline: u64,
    pub params_pruned: u64,
    pub flops_baseline: u64,
    pub flops_pruned: u64,
    pub params_reduction: f64,
    pub flops_reduction: f64,
    pub layers: Vec<LayerCost>,
}

struct Counts {
    params: Vec<u64>,
    flops: Vec<u64>,
}

fn tally(manifest: &ModelManifest, retained: &[usize]) -> Counts {
    let mut params = Vec::new();
    let mut flops = Vec::new();
    let mut c_in = manifest.layers.first().map_or(0, |l| l.in_channels) as u64;
    for (layer, &n) in manifest.layers.iter().zip(retained) {
        let k2 = (layer.k * layer.k) as u64;
        let n = n as u64;
        let spatial = (layer.out_h * layer.out_w) as u64;
        params.push(k2 * c_in * n + n);
        flops.push(2 * k2 * c_in * n * spatial);
        c_in = n;
    }
    if let (Some(last), Some(&kept)) = (manifest.layers.last(), retained.last()) {
        for (i, fc) in manifest.fc.iter().enumerate() {
            let in_eff = if i == 0 {
                (fc.in_dim / last.num_filters * kept) as u64
            } else {
                fc.in_dim as u64
            };
            let out = fc.out_dim as u64;
            params.push(in_eff * out + out);
            flops.push(2 * in_eff * out);
        }
    }
    Counts { params, flops }
}

fn reduction(baseline: u64, pruned: u64) -> f64 {
    if baseline == 0 {
        0.0
    } else {
        1.0 - pruned as f64 / baseline as f64
    }
}

/// Counts costs with `retained[i]` filters kept in conv layer `i + 1`.
pub fn count(manifest: &ModelManifest, retained: &[usize]) -> Result<CostReport> {
    if retained.len() != manifest.layers.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} retained counts for {} conv layers",
            retained.len(),
            manifest.layers.len()
        )));
    }
    for (layer, &n) in manifest.layers.iter().zip(retained) {
        if n > layer.num_filters {
            return Err(Error::RetentionExceedsWidth {
                layer: layer.id,
                retained: n,
                width: layer.num_filters,
            });
        }
    }
    let full: Vec<usize> = manifest.layers.iter().map(|l| l.num_filters).collect();
    let base = tally(manifest, &full);
    let pruned = tally(manifest, retained);
    let names = manifest
        .layers
        .iter()
        .map(|l| format!("conv{}", l.id))
        .chain((1..=manifest.fc.len()).map(|i| format!("fc{i}")));
    let layers: Vec<LayerCost> = names
        .enumerate()
        .map(|(i, name)| LayerCost {
            name,
            params_baseline: base.params[i],
            params_pruned: pruned.params[i],
            flops_baseline: base.flops[i],
            flops_pruned: pruned.flops[i],
        })
        .collect();
    let params_baseline = base.params.iter().sum();
    let params_pruned = pruned.params.iter().sum();
    let flops_baseline = base.flops.iter().sum();
    let flops_pruned = pruned.flops.iter().sum();
    Ok(CostReport {
        params_baseline,
        params_pruned,
        flops_baseline,
        flops_pruned,
        params_reduction: reduction(params_baseline, params_pruned),
        flops_reduction: reduction(flops_baseline, flops_pruned),
        layers,
    })
}

/// Converts per-layer pruning rates (layer order 1..L) to retained counts,
/// `round(n·(1 − rate))`.
pub fn retained_from_pruning_rates(manifest: &ModelManifest, rates: &[f64]) -> Result<Vec<usize>> {
    if rates.len() != manifest.layers.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} pruning rates for {} conv layers",
            rates.len(),
            manifest.layers.len()
        )));
    }
    manifest
        .layers
        .iter()
        .zip(rates)
        .map(|(l, &rate)| {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!(
                    "pruning rate {rate} for layer {} outside [0, 1]",
                    l.id
                )));
            }
            Ok((l.num_filters as f64 * (1.0 - rate)).round() as usize)
        })
        .collect()
}

fn millions(x: u64) -> String {
    format!("{:.2}M", x as f64 / 1e6)
}

/// Percentage with two decimals; an exact zero prints as `0%`.
pub fn percent(rate: f64) -> String {
    if rate == 0.0 {
        "0%".to_string()
    } else {
        format!("{:.2}%", rate * 100.0)
    }
}

/// Renders a fixed-width summary table followed by the per-layer breakdown.
pub fn report_text(report: &CostReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>10} {:>10} {:>10} {:>10}",
        "Model", "Params", "Params RR", "FLOPs", "FLOPs RR"
    );
    let _ = writeln!(
        out,
        "{:<10} {:>10} {:>10} {:>10} {:>10}",
        "Baseline",
        millions(report.params_baseline),
        percent(0.0),
        millions(report.flops_baseline),
        percent(0.0)
    );
    let _ = writeln!(
        out,
        "{:<10} {:>10} {:>10} {:>10} {:>10}",
        "Pruned",
        millions(report.params_pruned),
        percent(report.params_reduction),
        millions(report.flops_pruned),
        percent(report.flops_reduction)
    );
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<8} {:>12} {:>12} {:>14} {:>14}",
        "Layer", "Params", "Pruned", "FLOPs", "Pruned"
    );
    for l in &report.layers {
        let _ = writeln!(
            out,
            "{:<8} {:>12} {:>12} {:>14} {:>14}",
            l.name, l.params_baseline, l.params_pruned, l.flops_baseline, l.flops_pruned
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use proptest::prelude::*;

    #[test]
    fn identity_has_zero_reduction() {
        let m = presets::vgg16_cifar();
        let full: Vec<usize> = m.layers.iter().map(|l| l.num_filters).collect();
        let r = count(&m, &full).unwrap();
        assert_eq!(r.params_baseline, r.params_pruned);
        assert_eq!(r.flops_baseline, r.flops_pruned);
        assert_eq!(r.params_reduction, 0.0);
        assert!(report_text(&r).lines().nth(1).unwrap().contains("0%"));
    }

    #[test]
    fn hand_counted_two_layer_model() {
        let m: ModelManifest = serde_json::from_str(
            r#"{"name":"t","layers":[
                {"id":1,"k":3,"in_channels":3,"num_filters":4,"out_h":2,"out_w":2},
                {"id":2,"k":1,"in_channels":4,"num_filters":2,"out_h":1,"out_w":1}],
               "fc":[{"in_dim":2,"out_dim":3}]}"#,
        )
        .unwrap();
        let r = count(&m, &[2, 1]).unwrap();
        // conv1: 9·3·4+4 = 112 / 9·3·2+2 = 56; conv2: 4·2+2 = 10 / 2·1+1 = 3; fc: 2·3+3 = 9 / 1·3+3 = 6
        assert_eq!(r.params_baseline, 112 + 10 + 9);
        assert_eq!(r.params_pruned, 56 + 3 + 6);
        // conv1: 2·9·3·4·4 = 864 / 432; conv2: 2·4·2 = 16 / 4; fc: 12 / 6
        assert_eq!(r.flops_baseline, 864 + 16 + 12);
        assert_eq!(r.flops_pruned, 432 + 4 + 6);
    }

    #[test]
    fn rejects_oversized_retention() {
        let m = presets::alexnet_cifar();
        assert!(matches!(
            count(&m, &[97, 256, 384, 384, 256]),
            Err(Error::RetentionExceedsWidth { layer: 1, .. })
        ));
        assert!(matches!(count(&m, &[1]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn percent_format() {
        assert_eq!(percent(0.0), "0%");
        assert_eq!(percent(0.883512), "88.35%");
    }

    proptest! {
        #[test]
        fn monotone_and_additive(seed in any::<u64>(), layer in 0usize..13) {
            let m = presets::vgg16_cifar();
            let mut kept: Vec<usize> = m.layers.iter().enumerate()
                .map(|(i, l)| 1 + (seed.rotate_left(i as u32 * 5) as usize) % l.num_filters).collect();
            let a = count(&m, &kept).unwrap();
            prop_assert_eq!(a.params_pruned, a.layers.iter().map(|l| l.params_pruned).sum::<u64>());
            prop_assert_eq!(a.flops_pruned, a.layers.iter().map(|l| l.flops_pruned).sum::<u64>());
            if kept[layer] > 1 {
                kept[layer] -= 1;
                let b = count(&m, &kept).unwrap();
                prop_assert!(b.params_pruned <= a.params_pruned);
                prop_assert!(b.flops_pruned <= a.flops_pruned);
            }
            let back: CostReport = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
            prop_assert_eq!(back, a);
        }
    }
}
