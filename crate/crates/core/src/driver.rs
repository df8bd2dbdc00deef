//! Backward, layer-by-layer pruning with an adaptive binary search over each
//! layer's retention ratio.
//!
//! Layers are visited from last to first. The last layer searches from
//! R = 0 with bounds [0, 1]. Every earlier layer first probes the retention
//! its successor ended with; if that keeps the accuracy loss within budget
//! the layer is done, otherwise the search runs over [inherited, 1]. Each
//! round clusters to ⌈R·|F|⌉ representatives and asks the evaluator for the
//! accuracy of the resulting model. A layer's search ends once the midpoint
//! moves by less than [`ROUND_THRESHOLD`] or after [`MAX_ROUNDS`] rounds.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::cluster::{cluster, InitStrategy, DEFAULT_MAX_ITER};
use crate::error::{Error, Result};
use crate::evaluator::{EvaluationRequest, Evaluator};
use crate::model::Model;
use crate::pyramid::{build_layer, HybridPyramid};
use crate::report::{LayerRetention, PruneReport};

pub const ROUND_THRESHOLD: f64 = 0.0125;
pub const MAX_ROUNDS: usize = 6;
pub const DEFAULT_LOSS_BUDGET: f64 = 0.005;

#[derive(Debug, Clone, PartialEq)]
pub struct DriverConfig {
    /// Largest tolerated `baseline − accuracy`.
    pub loss_budget: f64,
    /// Cluster from the layer's full filter set every round instead of from
    /// the previous round's representatives.
    pub recluster_from_original: bool,
    /// Seeded-random cluster initialisation; even-spaced when `None`.
    pub seed: Option<u64>,
    pub max_iter: usize,
    /// Retraining hint forwarded to the evaluator.
    pub epochs: u32,
}

impl Default for DriverConfig {
    fn default() -> Self {
        DriverConfig {
            loss_budget: DEFAULT_LOSS_BUDGET,
            recluster_from_original: false,
            seed: None,
            max_iter: DEFAULT_MAX_ITER,
            epochs: 1,
        }
    }
}

/// `⌈r·n⌉` clamped to `[1, n]`.
///
/// A 1e-9 guard keeps products such as 0.1·30 from rounding up past an
/// exact integer.
pub fn cluster_count(r: f64, n: usize) -> usize {
    let c = (r * n as f64 - 1e-9).ceil();
    if c < 1.0 {
        1
    } else {
        (c as usize).min(n)
    }
}

/// Per-layer search bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub layer: u32,
    /// Original filter count N.
    pub original: usize,
    pub r_lower: f64,
    pub r_upper: f64,
    pub r: f64,
    /// Current survivor set F, ascending.
    pub survivors: Vec<u32>,
    pub rounds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Probe {
    pub retention: f64,
    pub clusters: usize,
    pub accuracy: f64,
    pub within_budget: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Round {
    /// Bounds before this round's update.
    pub r_lower: f64,
    pub r_upper: f64,
    pub midpoint: f64,
    pub clusters: usize,
    pub accuracy: f64,
    pub within_budget: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Accepted {
    /// The inherited retention passed on the first try.
    Probe,
    /// Last within-budget round (1-based).
    Round(usize),
    /// Nothing passed; the layer keeps all its filters.
    KeepAll,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerTrace {
    pub layer: u32,
    pub original: usize,
    pub probe: Option<Probe>,
    pub rounds: Vec<Round>,
    pub accepted: Accepted,
    pub retained: usize,
}

impl LayerTrace {
    pub fn evaluator_calls(&self) -> usize {
        usize::from(self.probe.is_some()) + self.rounds.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    pub report: PruneReport,
    /// Traces in processing order, last layer first.
    pub layers: Vec<LayerTrace>,
}

struct Context<'a> {
    model: &'a Model,
    config: &'a DriverConfig,
    baseline: f64,
    /// Final survivors of every processed layer; absent layers keep all.
    fixed: BTreeMap<u32, Vec<u32>>,
}

impl Context<'_> {
    fn request(&self, layer: u32, candidate: &[u32]) -> EvaluationRequest {
        let retained = self
            .model
            .manifest
            .layers
            .iter()
            .map(|l| {
                let set = if l.id == layer {
                    candidate.to_vec()
                } else {
                    self.fixed
                        .get(&l.id)
                        .cloned()
                        .unwrap_or_else(|| (1..=l.num_filters as u32).collect())
                };
                (l.id, set)
            })
            .collect();
        EvaluationRequest {
            retained,
            epochs: self.config.epochs,
        }
    }

    fn strategy(&self, layer: u32, call: usize) -> InitStrategy {
        match self.config.seed {
            None => InitStrategy::EvenSpaced,
            Some(seed) => InitStrategy::SeededRandom(mix_seed(seed, layer, call)),
        }
    }

    /// Clusters `survivors` into `c` groups and returns the representatives.
    fn prune_to(
        &self,
        pyramids: &[HybridPyramid],
        survivors: &[u32],
        c: usize,
        layer: u32,
        call: usize,
    ) -> Result<Vec<u32>> {
        let set: Vec<&HybridPyramid> = survivors
            .iter()
            .map(|&id| &pyramids[id as usize - 1])
            .collect();
        Ok(cluster(&set, c, self.strategy(layer, call), self.config.max_iter)?.retained())
    }

    fn evaluate(
        &self,
        evaluator: &mut dyn Evaluator,
        layer: u32,
        candidate: &[u32],
    ) -> Result<(f64, bool)> {
        let result = evaluator
            .evaluate(&self.request(layer, candidate))
            .map_err(|source| Error::EvaluatorAtLayer { layer, source })?;
        let loss = self.baseline - result.accuracy;
        Ok((result.accuracy, loss <= self.config.loss_budget))
    }
}

/// SplitMix64 finaliser over (seed, layer, call).
fn mix_seed(seed: u64, layer: u32, call: usize) -> u64 {
    let mut z = seed ^ (u64::from(layer) << 32) ^ call as u64;
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Outcome of one layer's binary search.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSearch {
    /// Survivors, accuracy and 1-based round number of the last round that
    /// stayed within budget.
    pub best: Option<(Vec<u32>, f64, usize)>,
    pub rounds: Vec<Round>,
}

/// Runs the binary search for one layer from the given state.
pub fn binary_search_layer(
    state: &mut LayerState,
    pyramids: &[HybridPyramid],
    evaluator: &mut dyn Evaluator,
    model: &Model,
    fixed: &BTreeMap<u32, Vec<u32>>,
    baseline: f64,
    config: &DriverConfig,
) -> Result<LayerSearch> {
    let ctx = Context {
        model,
        config,
        baseline,
        fixed: fixed.clone(),
    };
    search_rounds(&ctx, state, pyramids, evaluator)
}

fn search_rounds(
    ctx: &Context<'_>,
    state: &mut LayerState,
    pyramids: &[HybridPyramid],
    evaluator: &mut dyn Evaluator,
) -> Result<LayerSearch> {
    let full: Vec<u32> = (1..=state.original as u32).collect();
    let mut best = None;
    let mut rounds = Vec::new();
    while rounds.len() < MAX_ROUNDS {
        let r_old = state.r;
        let midpoint = (state.r_upper + state.r_lower) / 2.0;
        state.r = midpoint;
        if (r_old - midpoint).abs() < ROUND_THRESHOLD {
            break;
        }
        debug_assert!(state.r_lower <= midpoint && midpoint <= state.r_upper);
        let base = if ctx.config.recluster_from_original {
            &full
        } else {
            &state.survivors
        };
        let c = cluster_count(midpoint, base.len());
        let reps = ctx.prune_to(pyramids, base, c, state.layer, rounds.len() + 1)?;
        let (accuracy, ok) = ctx.evaluate(evaluator, state.layer, &reps)?;
        rounds.push(Round {
            r_lower: state.r_lower,
            r_upper: state.r_upper,
            midpoint,
            clusters: c,
            accuracy,
            within_budget: ok,
        });
        if ok {
            state.r_upper = midpoint;
        } else {
            state.r_lower = midpoint;
        }
        state.rounds += 1;
        if ok {
            best = Some((reps.clone(), accuracy, rounds.len()));
        }
        if !ctx.config.recluster_from_original {
            state.survivors = reps;
        }
    }
    Ok(LayerSearch { best, rounds })
}

/// Prunes every conv layer of `model`, last to first.
pub fn run(
    model: &Model,
    evaluator: &mut dyn Evaluator,
    config: &DriverConfig,
) -> Result<PruneOutcome> {
    if !(config.loss_budget > 0.0 && config.loss_budget < 1.0) {
        return Err(Error::Config(format!(
            "loss budget {} outside (0, 1)",
            config.loss_budget
        )));
    }
    let baseline = evaluator.init()?;
    let mut ctx = Context {
        model,
        config,
        baseline,
        fixed: BTreeMap::new(),
    };
    let mut accuracy = baseline;
    let mut traces = Vec::with_capacity(model.manifest.layers.len());
    let layers = &model.manifest.layers;

    for pos in (0..layers.len()).rev() {
        let layer = &layers[pos];
        let pyramids = build_layer(&model.filters[pos], layer)?;
        let n = layer.num_filters;
        let full: Vec<u32> = (1..=n as u32).collect();
        let mut trace = LayerTrace {
            layer: layer.id,
            original: n,
            probe: None,
            rounds: Vec::new(),
            accepted: Accepted::KeepAll,
            retained: n,
        };

        let mut state = LayerState {
            layer: layer.id,
            original: n,
            r_lower: 0.0,
            r_upper: 1.0,
            r: 0.0,
            survivors: full.clone(),
            rounds: 0,
        };

        if pos + 1 < layers.len() {
            let next = &layers[pos + 1];
            let inherited = ctx.fixed[&next.id].len() as f64 / next.num_filters as f64;
            let c = cluster_count(inherited, n);
            let reps = ctx.prune_to(&pyramids, &full, c, layer.id, 0)?;
            let (acc, ok) = ctx.evaluate(evaluator, layer.id, &reps)?;
            trace.probe = Some(Probe {
                retention: inherited,
                clusters: c,
                accuracy: acc,
                within_budget: ok,
            });
            if ok {
                trace.accepted = Accepted::Probe;
                trace.retained = reps.len();
                accuracy = acc;
                ctx.fixed.insert(layer.id, reps);
                traces.push(trace);
                continue;
            }
            state.r_lower = inherited;
            state.r_upper = 1.0;
            state.r = inherited;
            state.survivors = reps;
        }

        let LayerSearch { best, rounds } = search_rounds(&ctx, &mut state, &pyramids, evaluator)?;
        trace.rounds = rounds;
        let survivors = match best {
            Some((reps, acc, round)) => {
                trace.accepted = Accepted::Round(round);
                accuracy = acc;
                reps
            }
            // The model as accepted for the previous layer; `accuracy`
            // already describes it.
            None => full,
        };
        trace.retained = survivors.len();
        ctx.fixed.insert(layer.id, survivors);
        traces.push(trace);
    }

    let report = PruneReport {
        baseline_accuracy: baseline,
        accuracy,
        layers: layers
            .iter()
            .map(|l| {
                let retained = ctx.fixed.remove(&l.id).expect("every layer processed");
                (
                    l.id,
                    LayerRetention {
                        retention: retained.len() as f64 / l.num_filters as f64,
                        retained,
                    },
                )
            })
            .collect(),
    };
    Ok(PruneOutcome {
        report,
        layers: traces,
    })
}
