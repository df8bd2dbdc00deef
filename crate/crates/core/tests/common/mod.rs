#![allow(dead_code)]

use hp_prune::model::{LayerSpec, ModelManifest};
use rand::Rng;

pub fn random_weights<R: Rng>(rng: &mut R, len: usize, scale: f32) -> Vec<f32> {
    (0..len)
        .map(|_| scale * rng.gen_range(-1.0f32..1.0))
        .collect()
}

/// Channel decomposition by repeated division, C = s·4^m with 4 ∤ s.
pub fn split_channels(c: usize) -> (usize, u32) {
    let (mut s, mut m) = (c, 0);
    while s % 4 == 0 {
        s /= 4;
        m += 1;
    }
    (s, m)
}

/// Every level of a filter's pyramid, shallowest first, as
/// (element count per cell, cell means), computed straight from the raw
/// weights. Kernel `t` of group `g` sits at row `t / 2^m`, column `t % 2^m`
/// of that group's grid.
pub fn level_cells(weights: &[f32], s: usize, m: u32, k: usize) -> Vec<(u64, Vec<f64>)> {
    let k2 = k * k;
    let side = 1usize << m;
    let abs: Vec<f64> = weights.iter().map(|w| f64::from(w.abs())).collect();
    assert_eq!(abs.len(), s * side * side * k2);
    let mut levels = Vec::new();
    if s > 1 {
        let mean = abs.iter().sum::<f64>() / abs.len() as f64;
        levels.push(((s * side * side * k2) as u64, vec![mean]));
    }
    for j in 0..=m {
        let block = 1usize << (m - j);
        let cells_per_side = 1usize << j;
        let mut cells = Vec::new();
        for g in 0..s {
            for br in 0..cells_per_side {
                for bc in 0..cells_per_side {
                    let mut sum = 0.0;
                    for r in br * block..(br + 1) * block {
                        for c in bc * block..(bc + 1) * block {
                            let t = g * side * side + r * side + c;
                            sum += abs[t * k2..(t + 1) * k2].iter().sum::<f64>();
                        }
                    }
                    cells.push(sum / (block * block * k2) as f64);
                }
            }
        }
        levels.push(((block * block * k2) as u64, cells));
    }
    levels.push((1, abs));
    levels
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A chain of 3×3 conv layers with the given widths on 3 input channels.
pub fn chain_manifest(name: &str, widths: &[usize]) -> ModelManifest {
    let mut layers = Vec::new();
    let mut c = 3;
    for (i, &n) in widths.iter().enumerate() {
        layers.push(LayerSpec {
            id: i as u32 + 1,
            k: 3,
            in_channels: c,
            num_filters: n,
            out_h: 4,
            out_w: 4,
        });
        c = n;
    }
    ModelManifest {
        name: name.into(),
        layers,
        fc: vec![],
    }
}

/// Accuracy as a function of retained counts:
/// baseline − Σ_k w_k·max(0, θ_k − n_k/N_k), clamped to [0, 1].
#[derive(Debug, Clone)]
pub struct CountAccuracy {
    pub baseline: f64,
    /// (layer position, weight, threshold), ascending layer.
    pub terms: Vec<(usize, f64, f64)>,
}

impl CountAccuracy {
    pub fn eval(&self, counts: &[usize], widths: &[usize]) -> f64 {
        let mut loss = 0.0;
        for &(pos, w, theta) in &self.terms {
            let r = counts[pos] as f64 / widths[pos] as f64;
            let short = theta - r;
            if short > 0.0 {
                loss += w * short;
            }
        }
        (self.baseline - loss).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleLayer {
    /// (clusters, accuracy, within budget)
    pub probe: Option<(usize, f64, bool)>,
    /// (R, clusters, accuracy, within budget)
    pub rounds: Vec<(f64, usize, f64, bool)>,
    pub retained: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Last layer first.
    pub layers: Vec<OracleLayer>,
    pub accuracy: f64,
}

fn ceil_count(r: f64, n: usize) -> usize {
    let c = (r * n as f64 - 1e-9).ceil();
    if c < 1.0 {
        1
    } else {
        (c as usize).min(n)
    }
}

/// Straight-line replay of the backward layer loop on filter counts alone.
///
/// Step 1: the last layer starts at R = 0 inside [0, 1].
/// Step 3: earlier layers first try the retention the next layer ended with
/// and keep it if the loss stays within budget; otherwise the bounds become
/// [inherited, 1] and F shrinks to the tried set.
/// Step 4: halve the bracket while the midpoint moves by at least 0.0125,
/// at most six times, clustering F to ⌈R·|F|⌉ each round.
/// Step 5: keep the last configuration that stayed within budget.
pub fn interpret(
    widths: &[usize],
    acc: &CountAccuracy,
    budget: f64,
    recluster_from_original: bool,
) -> Trajectory {
    let l = widths.len();
    let mut counts = widths.to_vec();
    let mut accuracy = acc.baseline;
    let mut out = Vec::new();

    for k in (0..l).rev() {
        let n = widths[k];
        let mut layer = OracleLayer {
            probe: None,
            rounds: Vec::new(),
            retained: n,
        };
        let (mut lower, mut upper, mut r, mut f);
        if k == l - 1 {
            lower = 0.0;
            upper = 1.0;
            r = 0.0;
            f = n;
        } else {
            let inherited = counts[k + 1] as f64 / widths[k + 1] as f64;
            let c = ceil_count(inherited, n);
            let mut trial = counts.clone();
            trial[k] = c;
            let a = acc.eval(&trial, widths);
            let ok = acc.baseline - a <= budget;
            layer.probe = Some((c, a, ok));
            if ok {
                counts[k] = c;
                accuracy = a;
                layer.retained = c;
                out.push(layer);
                continue;
            }
            lower = inherited;
            upper = 1.0;
            r = inherited;
            f = c;
        }

        let mut accepted = None;
        for _ in 0..6 {
            let previous = r;
            r = (lower + upper) / 2.0;
            if (previous - r).abs() < 0.0125 {
                break;
            }
            let c = ceil_count(r, if recluster_from_original { n } else { f });
            let mut trial = counts.clone();
            trial[k] = c;
            let a = acc.eval(&trial, widths);
            let ok = acc.baseline - a <= budget;
            layer.rounds.push((r, c, a, ok));
            if ok {
                upper = r;
                accepted = Some((c, a));
            } else {
                lower = r;
            }
            if !recluster_from_original {
                f = c;
            }
        }
        if let Some((c, a)) = accepted {
            counts[k] = c;
            accuracy = a;
            layer.retained = c;
        }
        out.push(layer);
    }
    Trajectory {
        layers: out,
        accuracy,
    }
}

/// One randomized driver run compared against [`interpret`]. Returns the
/// number of evaluator calls made, or a description of the first mismatch.
pub fn trajectory_trial(seed: u64) -> Result<usize, String> {
    use hp_prune::driver::{run, DriverConfig, MAX_ROUNDS};
    use hp_prune::evaluator::Penalty;
    use hp_prune::{Model, SyntheticEvaluator, SyntheticSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(2..=5);
    let widths: Vec<usize> = (0..depth).map(|_| rng.gen_range(4..=40)).collect();
    let manifest = chain_manifest("trial", &widths);
    let model = Model::random(manifest.clone(), seed).map_err(|e| e.to_string())?;

    let baseline = rng.gen_range(0.5..0.99);
    let budget = [0.005, 0.01, 0.05][rng.gen_range(0..3)];
    let recluster = rng.gen_bool(0.5);
    let mut spec = SyntheticSpec::zero_penalty(baseline);
    let mut terms = Vec::new();
    for (pos, layer) in manifest.layers.iter().enumerate() {
        if rng.gen_bool(0.8) {
            let weight = rng.gen_range(0.01..2.0);
            let threshold = rng.gen_range(0.0..1.0);
            spec.penalties
                .insert(layer.id, Penalty { weight, threshold });
            terms.push((pos, weight, threshold));
        }
    }
    let oracle = interpret(
        &widths,
        &CountAccuracy { baseline, terms },
        budget,
        recluster,
    );

    let mut evaluator = SyntheticEvaluator::new(spec, &manifest);
    let config = DriverConfig {
        loss_budget: budget,
        recluster_from_original: recluster,
        seed: if rng.gen_bool(0.5) { Some(seed) } else { None },
        ..DriverConfig::default()
    };
    let outcome = run(&model, &mut evaluator, &config).map_err(|e| e.to_string())?;

    let fail = |what: String| Err(format!("seed {seed}: {what}"));
    if outcome.layers.len() != oracle.layers.len() {
        return fail("layer count differs".into());
    }
    for (t, o) in outcome.layers.iter().zip(&oracle.layers) {
        if t.evaluator_calls() > 1 + MAX_ROUNDS {
            return fail(format!(
                "layer {} made {} calls",
                t.layer,
                t.evaluator_calls()
            ));
        }
        let probe = t.probe.map(|p| (p.clusters, p.accuracy, p.within_budget));
        if probe != o.probe {
            return fail(format!(
                "layer {} probe {probe:?} vs {:?}",
                t.layer, o.probe
            ));
        }
        let rounds: Vec<_> = t
            .rounds
            .iter()
            .map(|r| (r.midpoint, r.clusters, r.accuracy, r.within_budget))
            .collect();
        if rounds != o.rounds {
            return fail(format!(
                "layer {} rounds {rounds:?} vs {:?}",
                t.layer, o.rounds
            ));
        }
        for r in &t.rounds {
            if !(0.0 <= r.r_lower
                && r.r_lower <= r.midpoint
                && r.midpoint <= r.r_upper
                && r.r_upper <= 1.0)
            {
                return fail(format!("layer {} bracket broken: {r:?}", t.layer));
            }
        }
        if t.retained != o.retained {
            return fail(format!(
                "layer {} kept {} vs {}",
                t.layer, t.retained, o.retained
            ));
        }
        let reported = outcome.report.layers[&t.layer].retained.len();
        if reported != t.retained {
            return fail(format!("layer {} report disagrees with trace", t.layer));
        }
    }
    if outcome.report.accuracy != oracle.accuracy {
        return fail(format!(
            "accuracy {} vs {}",
            outcome.report.accuracy, oracle.accuracy
        ));
    }
    Ok(evaluator.calls())
}

/// Weights with a random overall magnitude between 1/4 and 4.
pub fn varied_weights<R: Rng>(rng: &mut R, len: usize) -> Vec<f32> {
    let scale = 4f32.powf(rng.gen_range(-1.0..1.0));
    random_weights(rng, len, scale)
}
