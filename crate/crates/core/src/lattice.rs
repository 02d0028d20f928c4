//! Dyadic cubes and the finite truncated lattice.
//!
//! A cube at level `j` with integer coordinates `k` is `Π [k_i 2^j, (k_i + 1) 2^j)`.
//! All geometry is integer arithmetic on `(level, coords)`; nothing is ever
//! measured in floating point.
//!
//! Active cubes of a [`Lattice`] are numbered depth by depth in tree order: the
//! roots first (in the order given), then their children, and so on. With this
//! numbering the `c`-th child of the cube at position `p` of depth `d` sits at
//! position `p * 2^N + c` of depth `d + 1`, and every active cube owns a
//! contiguous range of leaves.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 8;

const MAX_LEAVES: u128 = 1 << 24;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cube {
    pub level: i32,
    pub coords: Vec<i64>,
}

impl Cube {
    pub fn new(level: i32, coords: Vec<i64>) -> Self {
        Cube { level, coords }
    }

    /// The cube `[0, 2^level)^dim`.
    pub fn unit(dim: usize, level: i32) -> Self {
        Cube::new(level, vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn parent(&self) -> Cube {
        Cube {
            level: self.level + 1,
            coords: self.coords.iter().map(|k| k.div_euclid(2)).collect(),
        }
    }

    /// The `k`-th grandparent `Q^(k)`.
    pub fn ancestor(&self, k: u32) -> Cube {
        // Arithmetic shift is floor division; beyond 63 bits only the sign survives.
        let shift = k.min(63);
        Cube {
            level: self.level + k as i32,
            coords: self.coords.iter().map(|c| c >> shift).collect(),
        }
    }

    /// Child with index `i`; bit `N - 1 - d` of `i` selects the upper half along axis `d`,
    /// so increasing `i` runs through the children in lexicographic coordinate order.
    pub fn child(&self, i: usize) -> Cube {
        let n = self.dim();
        debug_assert!(i < 1 << n);
        Cube {
            level: self.level - 1,
            coords: self
                .coords
                .iter()
                .enumerate()
                .map(|(d, k)| 2 * k + ((i >> (n - 1 - d)) & 1) as i64)
                .collect(),
        }
    }

    pub fn children(&self) -> Vec<Cube> {
        (0..1usize << self.dim()).map(|i| self.child(i)).collect()
    }

    /// Index of `self` among the children of its parent.
    pub fn child_index(&self) -> usize {
        let n = self.dim();
        self.coords
            .iter()
            .enumerate()
            .fold(0, |acc, (d, k)| acc | ((k.rem_euclid(2) as usize) << (n - 1 - d)))
    }

    /// `self ⊇ other`.
    pub fn contains(&self, other: &Cube) -> bool {
        other.dim() == self.dim()
            && other.level <= self.level
            && other.ancestor((self.level - other.level) as u32) == *self
    }

    pub fn is_disjoint(&self, other: &Cube) -> bool {
        !self.contains(other) && !other.contains(self)
    }

    /// Least common dyadic ancestor, or `None` when the two cubes sit in
    /// different quadrants of the standard grid and never merge.
    pub fn common_ancestor(&self, other: &Cube) -> Option<Cube> {
        let level = self.meeting_level(other)?;
        Some(self.ancestor((level - self.level) as u32))
    }

    // Smallest level at which the ancestors of both cubes coincide.
    fn meeting_level(&self, other: &Cube) -> Option<i32> {
        if self.dim() != other.dim() {
            return None;
        }
        let base = self.level.max(other.level);
        for up in 0..=64u32 {
            let level = base + up as i32;
            let sa = ((level - self.level) as u32).min(63);
            let sb = ((level - other.level) as u32).min(63);
            if self
                .coords
                .iter()
                .zip(&other.coords)
                .all(|(a, b)| (a >> sa) == (b >> sb))
            {
                return Some(level);
            }
        }
        None
    }

    /// Graph distance in the `2^N`-ary tree; `None` stands for infinite distance.
    pub fn tree_distance(&self, other: &Cube) -> Option<u32> {
        let level = self.meeting_level(other)?;
        Some(((level - self.level) + (level - other.level)) as u32)
    }
}

/// Serializable description of a lattice, as it appears in configs and artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub dim: usize,
    pub top_level: i32,
    pub leaf_level: i32,
    pub roots: Vec<Cube>,
}

impl LatticeSpec {
    pub fn single_root(dim: usize, top_level: i32, leaf_level: i32) -> Self {
        LatticeSpec {
            dim,
            top_level,
            leaf_level,
            roots: vec![Cube::unit(dim, top_level)],
        }
    }

    pub fn build(&self) -> Result<Lattice> {
        Lattice::new(self.dim, self.top_level, self.leaf_level, self.roots.clone())
    }
}

#[derive(Debug, Clone)]
pub struct Lattice {
    dim: usize,
    top_level: i32,
    leaf_level: i32,
    roots: Vec<Cube>,
    cubes: Vec<Cube>,
    offsets: Vec<usize>,
    index: HashMap<Cube, usize>,
}

impl PartialEq for Lattice {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.top_level == other.top_level
            && self.leaf_level == other.leaf_level
            && self.roots == other.roots
    }
}

impl Lattice {
    pub fn new(dim: usize, top_level: i32, leaf_level: i32, roots: Vec<Cube>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::BadDimension { got: dim, max: MAX_DIM });
        }
        if top_level <= leaf_level {
            return Err(Error::LevelInversion {
                top: top_level,
                leaf: leaf_level,
            });
        }
        if roots.is_empty() {
            return Err(Error::NoRoots);
        }
        for root in &roots {
            if root.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: root.dim(),
                });
            }
            if root.level != top_level {
                return Err(Error::RootLevel(root.clone()));
            }
        }
        for (i, a) in roots.iter().enumerate() {
            if let Some(b) = roots[i + 1..].iter().find(|b| *b == a) {
                return Err(Error::OverlappingRoots(a.clone(), b.clone()));
            }
        }
        let depth = (top_level - leaf_level) as u32;
        let leaves = (roots.len() as u128) << (dim as u128 * depth as u128).min(100);
        if dim as u64 * depth as u64 > 100 || leaves > MAX_LEAVES {
            return Err(Error::TooLarge(leaves));
        }

        let branching = 1usize << dim;
        let mut offsets = vec![0];
        let mut cubes = roots.clone();
        let mut start = 0;
        for _ in 0..depth {
            let end = cubes.len();
            offsets.push(end);
            for id in start..end {
                let parent = cubes[id].clone();
                cubes.extend((0..branching).map(|c| parent.child(c)));
            }
            start = end;
        }
        offsets.push(cubes.len());
        let index = cubes.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
        Ok(Lattice {
            dim,
            top_level,
            leaf_level,
            roots,
            cubes,
            offsets,
            index,
        })
    }

    pub fn spec(&self) -> LatticeSpec {
        LatticeSpec {
            dim: self.dim,
            top_level: self.top_level,
            leaf_level: self.leaf_level,
            roots: self.roots.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn top_level(&self) -> i32 {
        self.top_level
    }

    pub fn leaf_level(&self) -> i32 {
        self.leaf_level
    }

    /// Number of generations below the roots.
    pub fn depth(&self) -> u32 {
        (self.top_level - self.leaf_level) as u32
    }

    pub fn branching(&self) -> usize {
        1 << self.dim
    }

    pub fn roots(&self) -> &[Cube] {
        &self.roots
    }

    pub fn n_cubes(&self) -> usize {
        self.cubes.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.ids_at_depth(self.depth()).len()
    }

    /// Number of active cubes that have children.
    pub fn n_interior(&self) -> usize {
        self.offsets[self.depth() as usize]
    }

    pub fn cubes(&self) -> &[Cube] {
        &self.cubes
    }

    pub fn cube(&self, id: usize) -> &Cube {
        &self.cubes[id]
    }

    pub fn id_of(&self, cube: &Cube) -> Option<usize> {
        self.index.get(cube).copied()
    }

    pub fn require(&self, cube: &Cube) -> Result<usize> {
        self.id_of(cube).ok_or_else(|| Error::Inactive(cube.clone()))
    }

    pub fn ids_at_depth(&self, depth: u32) -> Range<usize> {
        self.offsets[depth as usize]..self.offsets[depth as usize + 1]
    }

    pub fn ids_at_level(&self, level: i32) -> Range<usize> {
        if level > self.top_level || level < self.leaf_level {
            return 0..0;
        }
        self.ids_at_depth((self.top_level - level) as u32)
    }

    pub fn depth_of(&self, id: usize) -> u32 {
        (self.offsets.partition_point(|&o| o <= id) - 1) as u32
    }

    pub fn level_of(&self, id: usize) -> i32 {
        self.cubes[id].level
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        id >= self.n_interior()
    }

    pub fn leaves(&self) -> &[Cube] {
        &self.cubes[self.n_interior()..]
    }

    pub fn children_ids(&self, id: usize) -> Option<Range<usize>> {
        if self.is_leaf(id) {
            return None;
        }
        let d = self.depth_of(id) as usize;
        let pos = id - self.offsets[d];
        let first = self.offsets[d + 1] + pos * self.branching();
        Some(first..first + self.branching())
    }

    pub fn parent_id(&self, id: usize) -> Option<usize> {
        let d = self.depth_of(id) as usize;
        if d == 0 {
            return None;
        }
        let pos = id - self.offsets[d];
        Some(self.offsets[d - 1] + pos / self.branching())
    }

    /// Leaf indices covered by an active cube.
    pub fn leaf_range(&self, id: usize) -> Range<usize> {
        let d = self.depth_of(id);
        let pos = id - self.offsets[d as usize];
        let width = 1usize << (self.dim as u32 * (self.depth() - d));
        pos * width..(pos + 1) * width
    }

    /// Ids of the descendants of `id` that sit `k` generations below it.
    pub fn descendants(&self, id: usize, k: u32) -> Range<usize> {
        let d = self.depth_of(id);
        if d + k > self.depth() {
            return 0..0;
        }
        let pos = id - self.offsets[d as usize];
        let width = 1usize << (self.dim as u32 * k);
        let start = self.offsets[(d + k) as usize] + pos * width;
        start..start + width
    }

    /// Leaf ranges covered by an arbitrary cube: one range for an active cube, one per
    /// contained root for cubes above the top level, none outside the support.
    pub fn leaf_ranges(&self, cube: &Cube) -> Result<Vec<Range<usize>>> {
        if cube.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: cube.dim(),
            });
        }
        if cube.level < self.leaf_level {
            let leaf = cube.ancestor((self.leaf_level - cube.level) as u32);
            if self.id_of(&leaf).is_some() {
                return Err(Error::Unresolved(cube.clone()));
            }
            return Ok(Vec::new());
        }
        if cube.level <= self.top_level {
            return Ok(self.id_of(cube).map(|id| self.leaf_range(id)).into_iter().collect());
        }
        Ok(self
            .ids_at_depth(0)
            .filter(|&id| cube.contains(&self.cubes[id]))
            .map(|id| self.leaf_range(id))
            .collect())
    }

    /// Volume of one leaf cell in grid units, `2^(N * leaf_level)`.
    pub fn leaf_volume(&self) -> f64 {
        2f64.powi(self.dim as i32 * self.leaf_level)
    }

    pub fn volume(&self, cube: &Cube) -> f64 {
        2f64.powi(self.dim as i32 * cube.level)
    }

    /// Sums of a leaf vector over every active cube, indexed by cube id.
    pub fn cube_sums(&self, leaf_values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(leaf_values.len(), self.n_leaves());
        let mut sums = vec![0.0; self.n_cubes()];
        let first_leaf = self.n_interior();
        sums[first_leaf..].copy_from_slice(leaf_values);
        let b = self.branching();
        for d in (0..self.depth()).rev() {
            let children_start = self.offsets[d as usize + 1];
            for (pos, id) in self.ids_at_depth(d).enumerate() {
                let first = children_start + pos * b;
                sums[id] = sums[first..first + b].iter().sum();
            }
        }
        sums
    }

    /// Permutation taking positions in row-major lexicographic leaf order to
    /// internal leaf indices.
    pub fn lex_leaf_order(&self) -> Vec<usize> {
        let leaves = self.leaves();
        let mut order: Vec<usize> = (0..leaves.len()).collect();
        order.sort_by(|&a, &b| leaves[a].coords.cmp(&leaves[b].coords));
        order
    }

    /// Reorder leaf values given in lexicographic order into internal order.
    pub fn from_lex_order(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        for (lex, &internal) in self.lex_leaf_order().iter().enumerate() {
            out[internal] = values[lex];
        }
        out
    }

    pub fn to_lex_order(&self, values: &[f64]) -> Vec<f64> {
        self.lex_leaf_order().iter().map(|&i| values[i]).collect()
    }
}
