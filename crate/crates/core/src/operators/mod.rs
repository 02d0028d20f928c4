//! Band operators in the unweighted Haar basis and the two-weight operators
//! they induce.
//!
//! A [`BandOperator`] is a sparse matrix indexed by [`BasisIndex`]: unweighted
//! Haar functions `h_{Q,k}` and, optionally, normalized root indicators
//! `|R|^{-1/2} χ_R`. [`InducedOperator`] turns it into a dense leaf kernel.

mod induced;
mod localization;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::haar::HaarSystem;
use crate::lattice::{Cube, Lattice};

pub use induced::InducedOperator;
pub use localization::{check_well_localized, LocalizationReport, LocalizationWitness, TriangularCheck};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HaarIndex {
    pub cube: Cube,
    pub component: usize,
}

/// A coordinate of the unweighted basis.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisIndex {
    Haar(HaarIndex),
    /// The normalized indicator of a root.
    Root(Cube),
}

impl BasisIndex {
    pub fn haar(cube: Cube, component: usize) -> Self {
        BasisIndex::Haar(HaarIndex { cube, component })
    }

    pub fn cube(&self) -> &Cube {
        match self {
            BasisIndex::Haar(h) => &h.cube,
            BasisIndex::Root(c) => c,
        }
    }
}

/// One stored matrix entry `(T e_in, e_out)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub out: BasisIndex,
    #[serde(rename = "in")]
    pub input: BasisIndex,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandOperator {
    lattice: Arc<Lattice>,
    radius: u32,
    entries: BTreeMap<(BasisIndex, BasisIndex), f64>,
    truncated: usize,
}

impl BandOperator {
    pub fn zero(lattice: Arc<Lattice>, radius: u32) -> Self {
        BandOperator {
            lattice,
            radius,
            entries: BTreeMap::new(),
            truncated: 0,
        }
    }

    pub fn from_entries(lattice: Arc<Lattice>, radius: u32, entries: &[Entry]) -> Result<Self> {
        let mut op = Self::zero(lattice, radius);
        for e in entries {
            op.insert(e.out.clone(), e.input.clone(), e.value)?;
        }
        Ok(op)
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    /// Terms dropped because they would live below the leaf level.
    pub fn truncated(&self) -> usize {
        self.truncated
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, out: &BasisIndex, input: &BasisIndex) -> f64 {
        self.entries
            .get(&(out.clone(), input.clone()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = Entry> + '_ {
        self.entries.iter().map(|((out, input), &value)| Entry {
            out: out.clone(),
            input: input.clone(),
            value,
        })
    }

    pub fn has_root_blocks(&self) -> bool {
        self.entries
            .keys()
            .any(|(o, i)| matches!(o, BasisIndex::Root(_)) || matches!(i, BasisIndex::Root(_)))
    }

    /// Stores an entry; a zero value removes it. Entries farther apart than
    /// the radius are rejected.
    pub fn insert(&mut self, out: BasisIndex, input: BasisIndex, value: f64) -> Result<()> {
        self.validate(&out)?;
        self.validate(&input)?;
        match out.cube().tree_distance(input.cube()) {
            Some(d) if d <= self.radius => {}
            _ => {
                return Err(Error::OutOfBand {
                    out: format!("{out:?}"),
                    input: format!("{input:?}"),
                    radius: self.radius,
                })
            }
        }
        if !value.is_finite() {
            return Err(Error::Config(format!("non-finite operator entry {value}")));
        }
        if value == 0.0 {
            self.entries.remove(&(out, input));
        } else {
            self.entries.insert((out, input), value);
        }
        Ok(())
    }

    /// Like [`insert`](Self::insert) but without the band restriction, for
    /// building deliberately bad test instances.
    pub fn insert_unchecked(&mut self, out: BasisIndex, input: BasisIndex, value: f64) -> Result<()> {
        self.validate(&out)?;
        self.validate(&input)?;
        self.entries.insert((out, input), value);
        Ok(())
    }

    fn validate(&self, index: &BasisIndex) -> Result<()> {
        match index {
            BasisIndex::Haar(h) => {
                let id = self.lattice.require(&h.cube)?;
                if self.lattice.is_leaf(id) {
                    return Err(Error::LeafCube(h.cube.clone()));
                }
                let count = self.lattice.branching() - 1;
                if h.component >= count {
                    return Err(Error::BadComponent {
                        component: h.component,
                        dim: self.lattice.dim(),
                    });
                }
            }
            BasisIndex::Root(c) => {
                if !self.lattice.roots().contains(c) {
                    return Err(Error::RootLevel(c.clone()));
                }
            }
        }
        Ok(())
    }

    /// Position of a basis index in the coefficient vector: unweighted Haar
    /// elements first, roots after them.
    fn position(&self, system: &HaarSystem, index: &BasisIndex) -> usize {
        match index {
            BasisIndex::Haar(h) => {
                let id = self.lattice.id_of(&h.cube).expect("validated");
                system.range_of(id).start + h.component
            }
            BasisIndex::Root(c) => {
                let id = self.lattice.id_of(c).expect("validated");
                system.len() + id
            }
        }
    }

    /// Leaf kernel `K = Σ t φ_out φ_inᵀ`, so that `T g = K (vol ∘ g)`.
    pub fn kernel(&self) -> DMatrix<f64> {
        let lattice = &self.lattice;
        let n = lattice.n_leaves();
        let system = HaarSystem::unweighted(lattice.clone());
        let m = system.len() + lattice.roots().len();
        // Rows of `P = T_c Φᵀ`.
        let mut p = DMatrix::zeros(m, n);
        for ((out, input), &t) in &self.entries {
            let row = self.position(&system, out);
            self.for_each_support(&system, input, |range, value| {
                for leaf in range {
                    p[(row, leaf)] += t * value;
                }
            });
        }
        // `K = Φ P`, one leaf column at a time.
        let mut kernel = DMatrix::zeros(n, n);
        let h = system.len();
        for j in 0..n {
            let column = p.column(j);
            let mut values = system.synthesize(&column.as_slice()[..h]);
            for (r, root) in lattice.ids_at_depth(0).enumerate() {
                let c = column[h + r];
                if c != 0.0 {
                    let scale = c / lattice.volume(lattice.cube(root)).sqrt();
                    for leaf in lattice.leaf_range(root) {
                        values[leaf] += scale;
                    }
                }
            }
            kernel.set_column(j, &nalgebra::DVector::from_vec(values));
        }
        kernel
    }

    fn for_each_support<F>(&self, system: &HaarSystem, index: &BasisIndex, mut visit: F)
    where
        F: FnMut(std::ops::Range<usize>, f64),
    {
        let lattice = &self.lattice;
        match index {
            BasisIndex::Haar(h) => {
                let id = lattice.id_of(&h.cube).expect("validated");
                let e = system.element(system.range_of(id).start + h.component);
                for (c, kid) in lattice.children_ids(id).expect("interior").enumerate() {
                    visit(lattice.leaf_range(kid), e.child_values[c]);
                }
            }
            BasisIndex::Root(c) => {
                let id = lattice.id_of(c).expect("validated");
                visit(lattice.leaf_range(id), lattice.volume(c).sqrt().recip());
            }
        }
    }

    /// Largest number of distinct output cubes paired with a single input cube.
    pub fn max_blocks_per_input(&self) -> usize {
        let mut blocks: BTreeMap<&Cube, BTreeSet<&Cube>> = BTreeMap::new();
        for (out, input) in self.entries.keys() {
            blocks.entry(input.cube()).or_default().insert(out.cube());
        }
        blocks.values().map(BTreeSet::len).max().unwrap_or(0)
    }
}

/// Number of cubes within tree distance `r` of a fixed cube: `a` steps up
/// then `b ≤ r - a` steps down, `Σ_a Σ_b 2^{N b}`.
pub fn block_bound(dim: usize, r: u32) -> usize {
    (0..=r)
        .map(|a| (0..=r - a).map(|b| 1usize << (dim as u32 * b)).sum::<usize>())
        .sum()
}

/// Haar multiplier coefficients `α_Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierSpec {
    pub default: f64,
    pub overrides: BTreeMap<Cube, f64>,
}

impl MultiplierSpec {
    pub fn constant(alpha: f64) -> Self {
        MultiplierSpec {
            default: alpha,
            overrides: BTreeMap::new(),
        }
    }

    /// Explicit coefficients; cubes not listed get 0.
    pub fn from_map(overrides: BTreeMap<Cube, f64>) -> Self {
        MultiplierSpec {
            default: 0.0,
            overrides,
        }
    }

    /// I.i.d. uniform coefficients in `[-amplitude, amplitude]` in cube id order.
    pub fn random(lattice: &Lattice, seed: u64, amplitude: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let overrides = (0..lattice.n_interior())
            .map(|id| (lattice.cube(id).clone(), uniform(&mut rng, amplitude)))
            .collect();
        Self::from_map(overrides)
    }

    pub fn alpha(&self, cube: &Cube) -> f64 {
        self.overrides.get(cube).copied().unwrap_or(self.default)
    }
}

fn uniform<R: Rng>(rng: &mut R, amplitude: f64) -> f64 {
    if amplitude == 0.0 {
        0.0
    } else {
        rng.random_range(-amplitude..=amplitude)
    }
}

/// `T^α f = Σ α_Q Σ_k (f, h_{Q,k}) h_{Q,k}`.
pub fn haar_multiplier(lattice: Arc<Lattice>, spec: &MultiplierSpec) -> BandOperator {
    let mut op = BandOperator::zero(lattice.clone(), 0);
    for id in 0..lattice.n_interior() {
        let cube = lattice.cube(id);
        let alpha = spec.alpha(cube);
        if alpha == 0.0 {
            continue;
        }
        for k in 0..lattice.branching() - 1 {
            let index = BasisIndex::haar(cube.clone(), k);
            op.insert(index.clone(), index, alpha).expect("diagonal entry");
        }
    }
    op
}

/// Identity on the Haar system plus the root indicators; induces `M_u`.
pub fn identity(lattice: Arc<Lattice>) -> BandOperator {
    let mut op = haar_multiplier(lattice.clone(), &MultiplierSpec::constant(1.0));
    for root in lattice.roots() {
        let index = BasisIndex::Root(root.clone());
        op.insert(index.clone(), index, 1.0).expect("diagonal entry");
    }
    op
}

/// The one-dimensional Haar shift `S f = Σ (f, h_I)(h_{I+} - h_{I-})`,
/// restricted to intervals whose halves are interior.
pub fn haar_shift(lattice: Arc<Lattice>) -> Result<BandOperator> {
    if lattice.dim() != 1 {
        return Err(Error::ShiftDimension(lattice.dim()));
    }
    let mut op = BandOperator::zero(lattice.clone(), 1);
    for id in 0..lattice.n_interior() {
        let kids = lattice.children_ids(id).expect("interior");
        if lattice.is_leaf(kids.start) {
            op.truncated += 1;
            continue;
        }
        let input = BasisIndex::haar(lattice.cube(id).clone(), 0);
        let minus = BasisIndex::haar(lattice.cube(kids.start).clone(), 0);
        let plus = BasisIndex::haar(lattice.cube(kids.start + 1).clone(), 0);
        op.insert(plus, input.clone(), 1.0)?;
        op.insert(minus, input, -1.0)?;
    }
    Ok(op)
}

/// I.i.d. uniform entries on every pair of Haar indices within tree distance
/// `r`; with `root_blocks`, also on pairs involving root indicators.
pub fn random_band(lattice: Arc<Lattice>, r: u32, seed: u64, amplitude: f64, root_blocks: bool) -> BandOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut op = BandOperator::zero(lattice.clone(), r);
    let components = lattice.branching() - 1;
    let mut indices: Vec<BasisIndex> = Vec::new();
    if root_blocks {
        indices.extend(lattice.roots().iter().cloned().map(BasisIndex::Root));
    }
    for id in 0..lattice.n_interior() {
        for k in 0..components {
            indices.push(BasisIndex::haar(lattice.cube(id).clone(), k));
        }
    }
    for input in &indices {
        for out in &indices {
            match out.cube().tree_distance(input.cube()) {
                Some(d) if d <= r => {
                    let value = uniform(&mut rng, amplitude);
                    op.insert(out.clone(), input.clone(), value)
                        .expect("in band");
                }
                _ => {}
            }
        }
    }
    op
}

/// Result of [`check_band`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandCheck {
    pub radius: u32,
    pub passed: bool,
    /// Largest out-of-band entry after scaling to unit max entry.
    pub max_violation: f64,
    pub witness: Option<Entry>,
}

/// Every stored entry farther apart than `r` must vanish (after scaling the
/// matrix to unit max entry).
pub fn check_band(op: &BandOperator, r: u32, tol: f64) -> BandCheck {
    let scale = op.entries.values().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut max_violation = 0.0;
    let mut witness = None;
    if scale > 0.0 {
        for e in op.entries() {
            let far = match e.out.cube().tree_distance(e.input.cube()) {
                Some(d) => d > r,
                None => false,
            };
            let v = e.value.abs() / scale;
            if far && v > max_violation {
                max_violation = v;
                witness = Some(e);
            }
        }
    }
    BandCheck {
        radius: r,
        passed: max_violation <= tol,
        max_violation,
        witness,
    }
}
