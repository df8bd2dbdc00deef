//! Exact closest-filter search over hybrid pyramids.
//!
//! Candidates are visited outward from the one whose root mean is nearest the
//! key's. The root-level bound acts as a window on sorted root means: once a
//! candidate on one side falls outside it, every later candidate on that side
//! does too. Candidates inside the window descend the pyramid levels and are
//! dropped as soon as a level bound exceeds the best squared distance so far.

use std::borrow::Borrow;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pyramid::{
    build_index, level_factor, squared_distance, HybridPyramid, Level, PyramidIndex,
};

/// Slack on level bounds. Bounds are mathematically ≤ the base distance; the
/// slack keeps floating-point rounding from discarding an exact tie.
const BOUND_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    /// Candidates whose root mean was compared against the window.
    pub candidates_examined: usize,
    /// Candidates dropped by the root window.
    pub window_rejections: usize,
    /// Candidates dropped by a bound below the root.
    pub level_rejections: usize,
    pub base_evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchResult {
    /// Original index of the closest candidate.
    pub best_index: u32,
    pub distance_sq: f64,
    pub stats: SearchStats,
}

/// A rejected candidate, recorded when tracing is requested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rejection {
    pub filter_index: u32,
    pub level: Level,
    pub bound: f64,
    /// Best squared distance at the moment of rejection.
    pub d_min_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    /// Descend intermediate levels before computing the base distance. When
    /// off, only the root window prunes candidates.
    pub level_bounds: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { level_bounds: true }
    }
}

/// Candidate pyramids with their root-mean index.
#[derive(Debug, Clone)]
pub struct CandidateSet<'a> {
    members: Vec<&'a HybridPyramid>,
    index: PyramidIndex,
}

impl<'a> CandidateSet<'a> {
    pub fn new<P: Borrow<HybridPyramid>>(pyramids: &'a [P]) -> Self {
        Self::from_refs(pyramids.iter().map(Borrow::borrow).collect())
    }

    pub fn from_refs(members: Vec<&'a HybridPyramid>) -> Self {
        let index = build_index(&members);
        CandidateSet { members, index }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn index(&self) -> &PyramidIndex {
        &self.index
    }

    pub fn members(&self) -> &[&'a HybridPyramid] {
        &self.members
    }

    /// Closest candidate to `key` with default options.
    pub fn find_closest(&self, key: &HybridPyramid) -> Result<SearchResult> {
        find_closest(key, self)
    }
}

/// Squared L2 distance between the bases (absolute weights) of two pyramids.
pub fn base_distance_sq(a: &HybridPyramid, b: &HybridPyramid) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "pyramid shapes {} and {} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(squared_distance(a.base(), b.base()))
}

/// Root-mean interval outside which no candidate can beat `d_min`:
/// `root_key ± d_min / √root_factor`.
pub fn search_window(root_key: f64, d_min: f64, root_factor: u64) -> (f64, f64) {
    let half = d_min / (root_factor as f64).sqrt();
    (root_key - half, root_key + half)
}

pub fn find_closest(key: &HybridPyramid, candidates: &CandidateSet<'_>) -> Result<SearchResult> {
    find_closest_with(key, candidates, SearchOptions::default(), None)
}

/// Exact argmin of [`base_distance_sq`] over `candidates`, ties to the smaller
/// original index. Rejections are appended to `trace` when given.
pub fn find_closest_with(
    key: &HybridPyramid,
    candidates: &CandidateSet<'_>,
    options: SearchOptions,
    mut trace: Option<&mut Vec<Rejection>>,
) -> Result<SearchResult> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let shape = key.shape();
    if let Some(bad) = candidates.members.iter().find(|c| c.shape() != shape) {
        return Err(Error::ShapeMismatch(format!(
            "candidate {} has shape {}, key has {shape}",
            bad.filter_index,
            bad.shape()
        )));
    }
    let root_factor = level_factor(shape, Level::Root)? as f64;
    let inner: Vec<(Level, f64)> = if options.level_bounds {
        shape
            .levels()
            .into_iter()
            .filter(|l| !matches!(l, Level::Root | Level::Base))
            .map(|l| (l, level_factor(shape, l).expect("listed level") as f64))
            .collect()
    } else {
        Vec::new()
    };

    let index = &candidates.index;
    let roots = index.roots_sorted();
    let mut stats = SearchStats::default();

    let seed = index.nearest_root(key.root());
    let seed_member = candidates.members[index.slot_at(seed)];
    let mut best_index = seed_member.filter_index;
    let mut d_min = squared_distance(key.base(), seed_member.base());
    stats.candidates_examined += 1;
    stats.base_evaluations += 1;

    let exceeds = |bound: f64, d_min: f64| bound > d_min * (1.0 + BOUND_RTOL);

    // Outward scan: always take the side whose next root is nearer the key.
    let (mut left, mut right) = (
        seed.checked_sub(1),
        Some(seed + 1).filter(|&r| r < roots.len()),
    );
    while left.is_some() || right.is_some() {
        let take_left = match (left, right) {
            (Some(l), Some(r)) => key.root() - roots[l] <= roots[r] - key.root(),
            (Some(_), None) => true,
            _ => false,
        };
        let pos = if take_left {
            left.unwrap()
        } else {
            right.unwrap()
        };
        stats.candidates_examined += 1;

        let diff = roots[pos] - key.root();
        let root_bound = root_factor * diff * diff;
        if exceeds(root_bound, d_min) {
            stats.window_rejections += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(Rejection {
                    filter_index: candidates.members[index.slot_at(pos)].filter_index,
                    level: Level::Root,
                    bound: root_bound,
                    d_min_sq: d_min,
                });
            }
            // Roots only move further away on this side.
            if take_left {
                left = None;
            } else {
                right = None;
            }
            continue;
        }
        if take_left {
            left = pos.checked_sub(1);
        } else {
            right = Some(pos + 1).filter(|&r| r < roots.len());
        }

        let cand = candidates.members[index.slot_at(pos)];
        let mut rejected = false;
        for &(level, factor) in &inner {
            let bound = factor
                * squared_distance(
                    key.level_values(level).expect("listed level"),
                    cand.level_values(level).expect("listed level"),
                );
            if exceeds(bound, d_min) {
                stats.level_rejections += 1;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(Rejection {
                        filter_index: cand.filter_index,
                        level,
                        bound,
                        d_min_sq: d_min,
                    });
                }
                rejected = true;
                break;
            }
        }
        if rejected {
            continue;
        }

        stats.base_evaluations += 1;
        let d = squared_distance(key.base(), cand.base());
        if d < d_min || (d == d_min && cand.filter_index < best_index) {
            d_min = d;
            best_index = cand.filter_index;
        }
    }

    Ok(SearchResult {
        best_index,
        distance_sq: d_min,
        stats,
    })
}
