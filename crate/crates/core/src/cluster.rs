//! Median-root clustering of a layer's filters.
//!
//! Every filter joins the cluster of its closest representative; each
//! cluster then elects the member with the median root mean as its new
//! representative. The loop stops when the representative set repeats.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pyramid::{build_index, HybridPyramid};
use crate::search::CandidateSet;

pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// Sorted-root positions ⌈(2t−1)·n/(2c)⌉ for t = 1..=c.
    EvenSpaced,
    SeededRandom(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Cluster {
    pub representative: u32,
    /// Original filter indices, ascending.
    pub members: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
    pub iteration_count: usize,
    pub converged: bool,
}

impl ClusterSet {
    /// Representatives, in cluster order.
    pub fn representatives(&self) -> Vec<u32> {
        self.clusters.iter().map(|c| c.representative).collect()
    }

    /// Representatives sorted ascending; the survivors of a pruning step.
    pub fn retained(&self) -> Vec<u32> {
        let mut r = self.representatives();
        r.sort_unstable();
        r
    }
}

fn check_count(c: usize, n: usize) -> Result<()> {
    if c == 0 || c > n {
        return Err(Error::ClusterCount { c, n });
    }
    Ok(())
}

/// Picks `c` distinct initial representatives, returned in root-mean order.
pub fn init_representatives(
    filters: &[&HybridPyramid],
    c: usize,
    strategy: InitStrategy,
) -> Result<Vec<u32>> {
    let n = filters.len();
    check_count(c, n)?;
    let index = build_index(filters);
    let positions: Vec<usize> = match strategy {
        InitStrategy::EvenSpaced => (1..=c)
            .map(|t| ((2 * t - 1) * n).div_ceil(2 * c) - 1)
            .collect(),
        InitStrategy::SeededRandom(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut slots = sample(&mut rng, n, c).into_vec();
            for s in &mut slots {
                *s = index.rank_of_slot(*s);
            }
            slots.sort_unstable();
            slots
        }
    };
    let ids = index.sorted_ids();
    Ok(positions.into_iter().map(|p| ids[p]).collect())
}

fn slot_map(filters: &[&HybridPyramid]) -> HashMap<u32, usize> {
    filters
        .iter()
        .enumerate()
        .map(|(slot, p)| (p.filter_index, slot))
        .collect()
}

/// One assignment pass: representatives keep themselves, every other filter
/// joins its closest representative.
pub fn assign(filters: &[&HybridPyramid], representatives: &[u32]) -> Result<ClusterSet> {
    let slots = slot_map(filters);
    let rep_refs: Vec<&HybridPyramid> = representatives
        .iter()
        .map(|id| {
            slots.get(id).map(|&s| filters[s]).ok_or_else(|| {
                Error::Config(format!("representative {id} is not in the filter set"))
            })
        })
        .collect::<Result<_>>()?;
    if rep_refs.is_empty() {
        return Err(Error::ClusterCount {
            c: 0,
            n: filters.len(),
        });
    }
    let rep_set: BTreeSet<u32> = representatives.iter().copied().collect();
    if rep_set.len() != representatives.len() {
        return Err(Error::Config("duplicate representatives".into()));
    }
    let candidates = CandidateSet::from_refs(rep_refs);

    let assignments: Vec<(u32, u32)> = filters
        .par_iter()
        .filter(|p| !rep_set.contains(&p.filter_index))
        .map(|p| Ok((p.filter_index, candidates.find_closest(p)?.best_index)))
        .collect::<Result<_>>()?;

    let mut members: HashMap<u32, Vec<u32>> =
        representatives.iter().map(|&r| (r, vec![r])).collect();
    for (filter, rep) in assignments {
        members.get_mut(&rep).expect("representative").push(filter);
    }
    let clusters = representatives
        .iter()
        .map(|&r| {
            let mut m = members.remove(&r).expect("representative");
            m.sort_unstable();
            Cluster {
                representative: r,
                members: m,
            }
        })
        .collect();
    Ok(ClusterSet {
        clusters,
        iteration_count: 1,
        converged: false,
    })
}

/// Member with the median root mean; lower-middle on even counts, root ties
/// broken by smaller index.
pub fn median_root_member(filters: &[&HybridPyramid], members: &[u32]) -> u32 {
    let slots = slot_map(filters);
    let mut by_root: Vec<&HybridPyramid> = members.iter().map(|id| filters[slots[id]]).collect();
    by_root.sort_by(|a, b| {
        a.root()
            .total_cmp(&b.root())
            .then(a.filter_index.cmp(&b.filter_index))
    });
    by_root[(by_root.len() - 1) / 2].filter_index
}

/// Orders clusters by their representative's root mean.
fn sort_clusters(filters: &[&HybridPyramid], clusters: &mut [Cluster]) {
    let slots = slot_map(filters);
    clusters.sort_by(|a, b| {
        let (pa, pb) = (
            filters[slots[&a.representative]],
            filters[slots[&b.representative]],
        );
        pa.root()
            .total_cmp(&pb.root())
            .then(pa.filter_index.cmp(&pb.filter_index))
    });
}

/// Partitions `filters` into exactly `c` clusters.
///
/// Iterates assignment and median-root updates until the representative set
/// stops changing. Stops early, unconverged, when a set repeats or after
/// `max_iter` passes.
pub fn cluster(
    filters: &[&HybridPyramid],
    c: usize,
    strategy: InitStrategy,
    max_iter: usize,
) -> Result<ClusterSet> {
    check_count(c, filters.len())?;
    let max_iter = max_iter.max(1);
    let mut reps = init_representatives(filters, c, strategy)?;
    let mut seen: HashSet<BTreeSet<u32>> = HashSet::new();
    seen.insert(reps.iter().copied().collect());
    let mut iteration = 0;
    loop {
        let mut set = assign(filters, &reps)?;
        iteration += 1;
        for cl in &mut set.clusters {
            cl.representative = median_root_member(filters, &cl.members);
        }
        sort_clusters(filters, &mut set.clusters);
        let new_reps = set.representatives();

        let old: BTreeSet<u32> = reps.iter().copied().collect();
        let new: BTreeSet<u32> = new_reps.iter().copied().collect();
        let converged = old == new;
        // A set seen before means the updates cycle and cannot settle.
        let cycling = !converged && !seen.insert(new);
        if converged || cycling || iteration >= max_iter {
            set.iteration_count = iteration;
            set.converged = converged;
            return Ok(set);
        }
        reps = new_reps;
    }
}
