//! Hybrid pyramids over absolute filter weights.
//!
//! A filter with C channels of k×k kernels is split as C = s·4^m (s not a
//! multiple of 4). Each of the s groups of 4^m kernels is laid out row-major
//! on a 2^m×2^m grid of kernels, giving a square base of side 2^m·k. One k×k
//! mean step reduces the base to a 2^m×2^m grid, then m 2×2 mean steps reduce
//! it to a single sub-root. The s sub-roots are joined by a common root, the
//! mean of every absolute weight in the filter.
//!
//! Level `Sub(j)` is the 2^j×2^j grid of every sub-pyramid (`Sub(0)` holds the
//! sub-roots). Multiplying a level's squared distance by its factor, the
//! number of base cells folded into one of its cells, gives a lower bound on
//! the squared distance between bases:
//!
//! factor(Root)·d²(Root) ≤ factor(Sub(0))·d²(Sub(0)) ≤ … ≤ d²(Base)

use std::borrow::Borrow;
use std::fmt;

use rayon::prelude::*;
use serde_json::json;

use crate::error::{Error, Result};
use crate::model::{FilterTensor, LayerSpec};

/// Splits a channel count into `(s, m)` with `C = s·4^m` and `s % 4 != 0`.
///
/// Panics if `c == 0`.
pub fn decompose_channels(c: usize) -> (usize, u32) {
    assert!(c >= 1, "channel count must be positive");
    let (mut s, mut m) = (c, 0);
    while s % 4 == 0 {
        s /= 4;
        m += 1;
    }
    (s, m)
}

/// Sub-pyramid count, reduction depth and kernel side of a pyramid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PyramidShape {
    pub s: usize,
    pub m: u32,
    pub k: usize,
}

impl PyramidShape {
    pub fn new(s: usize, m: u32, k: usize) -> Self {
        PyramidShape { s, m, k }
    }

    pub fn for_layer(layer: &LayerSpec) -> Self {
        let (s, m) = decompose_channels(layer.in_channels);
        PyramidShape { s, m, k: layer.k }
    }

    pub fn channels(&self) -> usize {
        self.s << (2 * self.m)
    }

    pub fn kernels_per_group(&self) -> usize {
        1 << (2 * self.m)
    }

    /// Side of one sub-pyramid's base matrix, 2^m·k.
    pub fn base_side(&self) -> usize {
        (1 << self.m) * self.k
    }

    pub fn filter_len(&self) -> usize {
        self.channels() * self.k * self.k
    }

    /// Named levels from the top down. The common root is listed only when
    /// there is more than one sub-pyramid; with s = 1 it coincides with the
    /// sub-root.
    pub fn levels(&self) -> Vec<Level> {
        let mut levels = Vec::with_capacity(self.m as usize + 3);
        if self.s > 1 {
            levels.push(Level::Root);
        }
        levels.extend((0..=self.m).map(Level::Sub));
        levels.push(Level::Base);
        levels
    }

    pub fn level_count(&self) -> usize {
        self.m as usize + 2 + usize::from(self.s > 1)
    }

    /// Shorthand for [`level_factor`].
    pub fn factor(&self, level: Level) -> Result<u64> {
        level_factor(*self, level)
    }
}

impl fmt::Display for PyramidShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(s={}, m={}, k={})", self.s, self.m, self.k)
    }
}

/// A pyramid level, ordered top (coarsest) to bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    /// Common root: mean of all absolute weights.
    Root,
    /// The 2^j×2^j grid of every sub-pyramid; `Sub(0)` holds the sub-roots.
    Sub(u32),
    /// Absolute weights.
    Base,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Root => f.write_str("root"),
            Level::Sub(j) => write!(f, "sub{j}"),
            Level::Base => f.write_str("base"),
        }
    }
}

/// Number of base cells aggregated into one cell at `level`.
///
/// s·4^m·k² at the common root, 4^(m−j)·k² at `Sub(j)`, 1 at the base.
pub fn level_factor(shape: PyramidShape, level: Level) -> Result<u64> {
    let k2 = (shape.k * shape.k) as u64;
    match level {
        Level::Root => Ok(shape.s as u64 * (1u64 << (2 * shape.m)) * k2),
        Level::Sub(j) if j <= shape.m => Ok((1u64 << (2 * (shape.m - j))) * k2),
        Level::Base => Ok(1),
        Level::Sub(_) => Err(Error::InvalidLevel {
            level: level.to_string(),
            s: shape.s,
            m: shape.m,
            k: shape.k,
        }),
    }
}

/// Counters gathered while building a pyramid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    /// Cell values read while averaging, summed over every reduction.
    pub cell_reads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridPyramid {
    /// 1-based index of the filter within its layer.
    pub filter_index: u32,
    shape: PyramidShape,
    /// Absolute weights in channel order, each kernel contiguous.
    base: Vec<f64>,
    /// `grids[j]` holds `s·4^j` cells, sub-pyramid-major then row-major.
    grids: Vec<Vec<f64>>,
    root: f64,
}

impl HybridPyramid {
    pub fn build(filter: &FilterTensor, layer: &LayerSpec) -> Result<Self> {
        if filter.weights.len() != layer.filter_len() {
            return Err(Error::ShapeMismatch(format!(
                "filter {} has {} weights, layer {} expects {}",
                filter.filter_index,
                filter.weights.len(),
                layer.id,
                layer.filter_len()
            )));
        }
        Ok(Self::from_weights(
            filter.filter_index,
            &filter.weights,
            PyramidShape::for_layer(layer),
        )?
        .0)
    }

    /// Builds from raw weights laid out channel-major, row-major per kernel.
    pub fn from_weights(
        filter_index: u32,
        weights: &[f32],
        shape: PyramidShape,
    ) -> Result<(Self, BuildStats)> {
        if weights.len() != shape.filter_len() || shape.s.is_multiple_of(4) || shape.k == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} weights do not fit pyramid shape {shape}",
                weights.len()
            )));
        }
        let mut stats = BuildStats::default();
        let k2 = shape.k * shape.k;
        let base: Vec<f64> = weights.iter().map(|w| f64::from(w.abs())).collect();

        // Kernel means land on the 2^m×2^m grid in channel order because
        // kernels are placed row-major within their group.
        let kernel_means: Vec<f64> = base
            .chunks_exact(k2)
            .map(|kernel| kernel.iter().sum::<f64>() / k2 as f64)
            .collect();
        stats.cell_reads += base.len();

        let m = shape.m as usize;
        let mut grids = vec![Vec::new(); m + 1];
        grids[m] = kernel_means;
        for j in (0..m).rev() {
            let child_side = 1usize << (j + 1);
            let side = 1usize << j;
            let child = &grids[j + 1];
            let mut level = Vec::with_capacity(shape.s * side * side);
            for g in 0..shape.s {
                let block = &child[g * child_side * child_side..(g + 1) * child_side * child_side];
                for r in 0..side {
                    for c in 0..side {
                        let top = 2 * r * child_side + 2 * c;
                        let bottom = top + child_side;
                        let sum = block[top] + block[top + 1] + block[bottom] + block[bottom + 1];
                        level.push(sum / 4.0);
                    }
                }
            }
            stats.cell_reads += child.len();
            grids[j] = level;
        }
        let root = grids[0].iter().sum::<f64>() / shape.s as f64;
        stats.cell_reads += shape.s;

        Ok((
            HybridPyramid {
                filter_index,
                shape,
                base,
                grids,
                root,
            },
            stats,
        ))
    }

    pub fn shape(&self) -> PyramidShape {
        self.shape
    }

    pub fn root(&self) -> f64 {
        self.root
    }

    pub fn sub_roots(&self) -> &[f64] {
        &self.grids[0]
    }

    /// Absolute weights in channel order.
    pub fn base(&self) -> &[f64] {
        &self.base
    }

    /// Cell values of a level, concatenated over sub-pyramids.
    pub fn level_values(&self, level: Level) -> Result<&[f64]> {
        match level {
            Level::Root => Ok(std::slice::from_ref(&self.root)),
            Level::Sub(j) if j <= self.shape.m => Ok(&self.grids[j as usize]),
            Level::Base => Ok(&self.base),
            Level::Sub(_) => Err(Error::InvalidLevel {
                level: level.to_string(),
                s: self.shape.s,
                m: self.shape.m,
                k: self.shape.k,
            }),
        }
    }

    /// Base matrix of sub-pyramid `group` (0-based), row-major, side 2^m·k.
    pub fn base_matrix(&self, group: usize) -> Vec<f64> {
        let PyramidShape { m, k, .. } = self.shape;
        let grid = 1usize << m;
        let side = grid * k;
        let first = group * self.shape.kernels_per_group();
        let mut out = Vec::with_capacity(side * side);
        for row in 0..side {
            for col in 0..side {
                let channel = first + (row / k) * grid + col / k;
                out.push(self.base[channel * k * k + (row % k) * k + col % k]);
            }
        }
        out
    }

    /// JSON dump of every level, each as a list of row-major matrices (one
    /// per sub-pyramid).
    pub fn to_debug_json(&self) -> serde_json::Value {
        let shape = self.shape;
        let levels: Vec<_> = shape
            .levels()
            .into_iter()
            .map(|level| {
                let matrices: Vec<Vec<f64>> = match level {
                    Level::Root => vec![vec![self.root]],
                    Level::Sub(j) => {
                        let cells = 1usize << (2 * j);
                        self.grids[j as usize]
                            .chunks(cells)
                            .map(<[f64]>::to_vec)
                            .collect()
                    }
                    Level::Base => (0..shape.s).map(|g| self.base_matrix(g)).collect(),
                };
                let side = match level {
                    Level::Root => 1,
                    Level::Sub(j) => 1usize << j,
                    Level::Base => shape.base_side(),
                };
                json!({
                    "level": level.to_string(),
                    "side": side,
                    "factor": level_factor(shape, level).expect("listed level"),
                    "matrices": matrices,
                })
            })
            .collect();
        json!({
            "filter_index": self.filter_index,
            "s": shape.s,
            "m": shape.m,
            "k": shape.k,
            "root": self.root,
            "sub_roots": self.sub_roots(),
            "levels": levels,
        })
    }
}

/// Squared L2 distance between two pyramids at one level.
pub fn level_distance_sq(a: &HybridPyramid, b: &HybridPyramid, level: Level) -> Result<f64> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch(format!(
            "pyramid shapes {} and {} differ",
            a.shape, b.shape
        )));
    }
    let (x, y) = (a.level_values(level)?, b.level_values(level)?);
    Ok(squared_distance(x, y))
}

pub(crate) fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(p, q)| {
            let d = p - q;
            d * d
        })
        .sum()
}

/// Builds pyramids for every filter of a layer, in parallel.
pub fn build_layer(filters: &[FilterTensor], layer: &LayerSpec) -> Result<Vec<HybridPyramid>> {
    filters
        .par_iter()
        .map(|f| HybridPyramid::build(f, layer))
        .collect()
}

/// Root-mean order over a set of pyramids.
///
/// Positions and slots are 0-based here; `S` and `O` in the usual 1-based
/// notation are `sorted_ids()` and `position_of(id) + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidIndex {
    /// Input slot at each sorted position.
    order: Vec<usize>,
    /// Sorted position of each input slot.
    rank: Vec<usize>,
    /// Original filter index of each input slot.
    ids: Vec<u32>,
    roots_sorted: Vec<f64>,
}

impl PyramidIndex {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Input slot stored at sorted position `pos`.
    pub fn slot_at(&self, pos: usize) -> usize {
        self.order[pos]
    }

    pub fn rank_of_slot(&self, slot: usize) -> usize {
        self.rank[slot]
    }

    /// Original filter indices in ascending root-mean order.
    pub fn sorted_ids(&self) -> Vec<u32> {
        self.order.iter().map(|&slot| self.ids[slot]).collect()
    }

    /// Sorted position (0-based) of the filter with original index `id`.
    pub fn position_of(&self, id: u32) -> Option<usize> {
        self.ids
            .iter()
            .position(|&x| x == id)
            .map(|slot| self.rank[slot])
    }

    pub fn roots_sorted(&self) -> &[f64] {
        &self.roots_sorted
    }

    /// Sorted position whose root is closest to `root`; ties go to the lower
    /// position. Panics on an empty index.
    pub fn nearest_root(&self, root: f64) -> usize {
        assert!(!self.is_empty(), "nearest_root on empty index");
        let roots = &self.roots_sorted;
        let upper = roots.partition_point(|&r| r < root);
        if upper == 0 {
            return 0;
        }
        if upper == roots.len() {
            return roots.len() - 1;
        }
        if root - roots[upper - 1] <= roots[upper] - root {
            upper - 1
        } else {
            upper
        }
    }
}

/// Sorts pyramids by root mean, ties by original filter index.
pub fn build_index<P: Borrow<HybridPyramid>>(pyramids: &[P]) -> PyramidIndex {
    let mut order: Vec<usize> = (0..pyramids.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (pyramids[a].borrow(), pyramids[b].borrow());
        pa.root
            .total_cmp(&pb.root)
            .then(pa.filter_index.cmp(&pb.filter_index))
    });
    let mut rank = vec![0; order.len()];
    for (pos, &slot) in order.iter().enumerate() {
        rank[slot] = pos;
    }
    PyramidIndex {
        roots_sorted: order.iter().map(|&i| pyramids[i].borrow().root).collect(),
        ids: pyramids.iter().map(|p| p.borrow().filter_index).collect(),
        order,
        rank,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_weights(rng: &mut impl Rng, n: usize) -> Vec<f32> {
        (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
    }

    fn pyramid(index: u32, weights: &[f32], shape: PyramidShape) -> HybridPyramid {
        HybridPyramid::from_weights(index, weights, shape)
            .unwrap()
            .0
    }

    fn close(a: f64, b: f64, rtol: f64) -> bool {
        (a - b).abs() <= rtol * a.abs().max(b.abs()) + 1e-300
    }

    #[test]
    fn decompose_examples() {
        assert_eq!(decompose_channels(512), (2, 4));
        assert_eq!(decompose_channels(1), (1, 0));
        assert_eq!(decompose_channels(96), (6, 2));
        assert_eq!(decompose_channels(3), (3, 0));
        assert_eq!(decompose_channels(256), (1, 4));
        assert_eq!(decompose_channels(384), (6, 3));
    }

    #[test]
    fn decompose_round_trip_exhaustive() {
        for c in 1..=4096usize {
            let (s, m) = decompose_channels(c);
            assert_eq!(s << (2 * m), c);
            assert_ne!(s % 4, 0);
        }
    }

    #[test]
    fn level_factor_examples() {
        let vgg13 = PyramidShape::new(2, 4, 3);
        assert_eq!(level_factor(vgg13, Level::Root).unwrap(), 2 * 256 * 9);
        assert_eq!(level_factor(vgg13, Level::Sub(0)).unwrap(), 256 * 9);
        assert_eq!(level_factor(vgg13, Level::Sub(1)).unwrap(), 64 * 9);
        assert_eq!(level_factor(vgg13, Level::Sub(4)).unwrap(), 9);
        assert_eq!(level_factor(vgg13, Level::Base).unwrap(), 1);
        assert_eq!(
            level_factor(PyramidShape::new(3, 0, 11), Level::Root).unwrap(),
            363
        );
        // first VGG layer: 3x3x3
        assert_eq!(
            level_factor(PyramidShape::new(3, 0, 3), Level::Root).unwrap(),
            27
        );
        assert!(level_factor(vgg13, Level::Sub(5)).is_err());
    }

    #[test]
    fn vgg_level_counts() {
        let counts: Vec<usize> = crate::model::presets::vgg16_cifar()
            .layers
            .iter()
            .map(|l| PyramidShape::for_layer(l).level_count())
            .collect();
        // Layer 1 (s=3, m=0) carries base, sub-roots and a common root.
        assert_eq!(counts, vec![3, 5, 5, 6, 6, 6, 6, 6, 7, 7, 7, 7, 7]);
        let alex: Vec<usize> = crate::model::presets::alexnet_cifar()
            .layers
            .iter()
            .map(|l| PyramidShape::for_layer(l).level_count())
            .collect();
        assert_eq!(alex, vec![3, 5, 6, 6, 6]);
    }

    #[test]
    fn layer13_layout() {
        let shape = PyramidShape::new(2, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_weights(&mut rng, shape.filter_len());
        let p = pyramid(1, &w, shape);
        assert_eq!(shape.base_side(), 48);
        assert_eq!(shape.levels().len(), 7);
        assert_eq!(p.sub_roots().len(), 2);
        assert_eq!(p.level_values(Level::Sub(4)).unwrap().len(), 2 * 256);

        // K_1 at the top-left of the left base, K_256 at its bottom-right,
        // K_257 at the top-left of the right base.
        let left = p.base_matrix(0);
        let right = p.base_matrix(1);
        assert_eq!(left[0], f64::from(w[0].abs()));
        assert_eq!(left[48 + 1], f64::from(w[4].abs()));
        assert_eq!(left[47 * 48 + 47], f64::from(w[255 * 9 + 8].abs()));
        assert_eq!(right[0], f64::from(w[256 * 9].abs()));
        // Second kernel sits to the right of the first.
        assert_eq!(left[3], f64::from(w[9].abs()));
        // Kernel 17 starts the second kernel row.
        assert_eq!(left[3 * 48], f64::from(w[16 * 9].abs()));
    }

    #[test]
    fn constant_filter() {
        let shape = PyramidShape::new(2, 4, 3);
        let p = pyramid(1, &vec![-0.75; shape.filter_len()], shape);
        for level in shape.levels() {
            assert!(p.level_values(level).unwrap().iter().all(|&v| v == 0.75));
        }
        assert_eq!(p.root(), 0.75);
    }

    #[test]
    fn root_is_mean_of_absolute_weights() {
        let shape = PyramidShape::new(1, 3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let w = random_weights(&mut rng, 576);
            let direct = w.iter().map(|x| f64::from(x.abs())).sum::<f64>() / 576.0;
            assert!(close(pyramid(1, &w, shape).root(), direct, 1e-6));
        }
    }

    #[test]
    fn shape_mismatch() {
        let layer = LayerSpec {
            id: 1,
            k: 3,
            in_channels: 4,
            num_filters: 1,
            out_h: 1,
            out_w: 1,
        };
        let filter = FilterTensor {
            layer_id: 1,
            filter_index: 1,
            weights: vec![0.0; 35],
        };
        assert!(matches!(
            HybridPyramid::build(&filter, &layer),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn construction_cost_is_linear() {
        // one pass over the base, then a geometric series over the grids:
        // at most (1 + 4/(3k²))·s·N² + s reads for base side N
        for &(c, k) in &[
            (1usize, 3usize),
            (4, 3),
            (16, 3),
            (64, 3),
            (256, 3),
            (1024, 3),
            (4096, 1),
        ] {
            let (s, m) = decompose_channels(c);
            let shape = PyramidShape::new(s, m, k);
            let w = vec![1.0f32; shape.filter_len()];
            let (_, stats) = HybridPyramid::from_weights(1, &w, shape).unwrap();
            let n2 = shape.base_side() * shape.base_side() * s;
            assert!(
                stats.cell_reads as f64
                    <= (1.0 + 4.0 / (3.0 * (k * k) as f64)) * n2 as f64 + s as f64,
                "C={c}: {} reads for {n2} base cells",
                stats.cell_reads
            );
        }
    }

    #[test]
    fn index_examples() {
        let shape = PyramidShape::new(1, 0, 1);
        let ps: Vec<_> = [0.3f32, 0.9, 0.1]
            .iter()
            .enumerate()
            .map(|(i, &r)| pyramid(i as u32 + 1, &[r], shape))
            .collect();
        let idx = build_index(&ps);
        assert_eq!(idx.sorted_ids(), vec![3, 1, 2]);
        let o: Vec<usize> = (1..=3).map(|id| idx.position_of(id).unwrap() + 1).collect();
        assert_eq!(o, vec![2, 3, 1]);

        let sorted: Vec<_> = [0.1f32, 0.2, 0.3]
            .iter()
            .enumerate()
            .map(|(i, &r)| pyramid(i as u32 + 1, &[r], shape))
            .collect();
        assert_eq!(build_index(&sorted).sorted_ids(), vec![1, 2, 3]);

        // smallest root belongs to filter 5
        let roots = [0.6f32, 0.9, 0.5, 0.7, 0.05, 0.8, 0.1];
        let ps: Vec<_> = roots
            .iter()
            .enumerate()
            .map(|(i, &r)| pyramid(i as u32 + 1, &[r], shape))
            .collect();
        let idx = build_index(&ps);
        assert_eq!(idx.sorted_ids()[0], 5);
        assert_eq!(idx.position_of(5), Some(0));
        assert_eq!(idx.sorted_ids()[1], 7);
        assert_eq!(idx.position_of(2), Some(6));
    }

    #[test]
    fn index_ties_by_filter_index() {
        let shape = PyramidShape::new(1, 0, 1);
        let ps = vec![
            pyramid(4, &[0.5], shape),
            pyramid(2, &[0.5], shape),
            pyramid(9, &[0.1], shape),
        ];
        assert_eq!(build_index(&ps).sorted_ids(), vec![9, 2, 4]);
    }

    #[test]
    fn nearest_root_prefers_lower_position() {
        let shape = PyramidShape::new(1, 0, 1);
        let ps: Vec<_> = [0.25f32, 0.75, 1.0]
            .iter()
            .enumerate()
            .map(|(i, &r)| pyramid(i as u32 + 1, &[r], shape))
            .collect();
        let idx = build_index(&ps);
        assert_eq!(idx.nearest_root(0.5), 0);
        assert_eq!(idx.nearest_root(0.6), 1);
        assert_eq!(idx.nearest_root(-3.0), 0);
        assert_eq!(idx.nearest_root(7.0), 2);
    }

    fn shapes() -> impl Strategy<Value = PyramidShape> {
        prop_oneof![
            Just(PyramidShape::new(1, 0, 3)),
            Just(PyramidShape::new(3, 0, 5)),
            Just(PyramidShape::new(2, 1, 3)),
            Just(PyramidShape::new(1, 2, 2)),
            Just(PyramidShape::new(6, 2, 1)),
            Just(PyramidShape::new(5, 1, 3)),
        ]
    }

    fn shape_and_pair() -> impl Strategy<Value = (PyramidShape, Vec<f32>, Vec<f32>)> {
        shapes().prop_flat_map(|shape| {
            let n = shape.filter_len();
            (
                Just(shape),
                proptest::collection::vec(-10.0f32..10.0, n),
                proptest::collection::vec(-10.0f32..10.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn parent_is_mean_of_children((shape, w, _) in shape_and_pair()) {
            let p = pyramid(1, &w, shape);
            let k2 = shape.k * shape.k;
            let m = shape.m;
            for (i, kernel) in p.base().chunks(k2).enumerate() {
                let mean = kernel.iter().sum::<f64>() / k2 as f64;
                prop_assert!(close(p.level_values(Level::Sub(m)).unwrap()[i], mean, 1e-6));
            }
            for j in 0..m {
                let parent = p.level_values(Level::Sub(j)).unwrap();
                let child = p.level_values(Level::Sub(j + 1)).unwrap();
                let (side, cside) = (1usize << j, 1usize << (j + 1));
                for g in 0..shape.s {
                    for r in 0..side {
                        for c in 0..side {
                            let at = |rr: usize, cc: usize| child[g * cside * cside + rr * cside + cc];
                            let mean = (at(2 * r, 2 * c) + at(2 * r, 2 * c + 1)
                                + at(2 * r + 1, 2 * c) + at(2 * r + 1, 2 * c + 1)) / 4.0;
                            prop_assert!(close(parent[g * side * side + r * side + c], mean, 1e-6));
                        }
                    }
                }
            }
            let sub_mean = p.sub_roots().iter().sum::<f64>() / shape.s as f64;
            prop_assert!(close(p.root(), sub_mean, 1e-6));
            prop_assert!(p.base().iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn bound_chain_holds((shape, a, b) in shape_and_pair()) {
            let (pa, pb) = (pyramid(1, &a, shape), pyramid(2, &b, shape));
            let levels = shape.levels();
            let bounds: Vec<f64> = levels
                .iter()
                .map(|&l| level_factor(shape, l).unwrap() as f64 * level_distance_sq(&pa, &pb, l).unwrap())
                .collect();
            for i in 0..bounds.len() {
                for j in i + 1..bounds.len() {
                    prop_assert!(bounds[i] <= bounds[j] * (1.0 + 1e-6) + 1e-12,
                        "{} > {} at {:?} vs {:?}", bounds[i], bounds[j], levels[i], levels[j]);
                }
            }
        }

        #[test]
        fn two_way_root_bound(a in proptest::collection::vec(-5.0f32..5.0, 18), b in proptest::collection::vec(-5.0f32..5.0, 18)) {
            let shape = PyramidShape::new(2, 0, 3);
            let (pa, pb) = (pyramid(1, &a, shape), pyramid(2, &b, shape));
            let root = level_distance_sq(&pa, &pb, Level::Root).unwrap();
            let subs = level_distance_sq(&pa, &pb, Level::Sub(0)).unwrap();
            prop_assert!(2.0 * root <= subs * (1.0 + 1e-12) + 1e-15);
        }
    }
}
