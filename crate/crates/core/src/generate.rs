//! Named measure generators used by configs and randomized suites.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::measure::MeasureGrid;

/// A measure as written in a config: explicit leaf masses in row-major
/// lexicographic leaf order, or a generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasureSpec {
    Explicit(Vec<f64>),
    Generator(MeasureGenerator),
}

/// Every generator scales by the leaf volume, so densities are O(1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum MeasureGenerator {
    /// Lebesgue measure.
    Uniform,
    /// Density `exp(σ Z)` with i.i.d. standard normal `Z`.
    Lognormal { sigma: f64, seed: u64 },
    /// `count` leaves with density uniform in `(0, 1]`, all others empty.
    SparseAtoms { count: usize, seed: u64 },
    /// Unit-σ lognormal density with random small blocks zeroed until at least
    /// `fraction` of the leaves are null.
    ZeroBlocks { fraction: f64, seed: u64 },
}

impl MeasureSpec {
    pub fn validate(&self, lattice: &Lattice) -> Result<()> {
        match self {
            MeasureSpec::Explicit(masses) => {
                if masses.len() != lattice.n_leaves() {
                    return Err(Error::LeafCount {
                        expected: lattice.n_leaves(),
                        got: masses.len(),
                    });
                }
                if let Some((index, &value)) = masses
                    .iter()
                    .enumerate()
                    .find(|(_, m)| !(m.is_finite() && **m >= 0.0))
                {
                    return Err(Error::BadMass { index, value });
                }
                Ok(())
            }
            MeasureSpec::Generator(g) => g.validate(lattice),
        }
    }

    pub fn build(&self, lattice: Arc<Lattice>) -> Result<MeasureGrid> {
        self.validate(&lattice)?;
        match self {
            MeasureSpec::Explicit(masses) => {
                let internal = lattice.from_lex_order(masses);
                MeasureGrid::new(lattice, internal)
            }
            MeasureSpec::Generator(g) => g.build(lattice),
        }
    }
}

impl MeasureGenerator {
    pub fn validate(&self, lattice: &Lattice) -> Result<()> {
        match *self {
            MeasureGenerator::Uniform => Ok(()),
            MeasureGenerator::Lognormal { sigma, .. } => {
                if sigma.is_finite() && sigma >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!("lognormal sigma must be finite and >= 0, got {sigma}")))
                }
            }
            MeasureGenerator::SparseAtoms { count, .. } => {
                if count >= 1 && count <= lattice.n_leaves() {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "sparse_atoms count must be in 1..={}, got {count}",
                        lattice.n_leaves()
                    )))
                }
            }
            MeasureGenerator::ZeroBlocks { fraction, .. } => {
                if (0.0..1.0).contains(&fraction) {
                    Ok(())
                } else {
                    Err(Error::Config(format!("zero_blocks fraction must be in [0, 1), got {fraction}")))
                }
            }
        }
    }

    pub fn build(&self, lattice: Arc<Lattice>) -> Result<MeasureGrid> {
        self.validate(&lattice)?;
        let n = lattice.n_leaves();
        let vol = lattice.leaf_volume();
        let masses = match *self {
            MeasureGenerator::Uniform => vec![vol; n],
            MeasureGenerator::Lognormal { sigma, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                lognormal_masses(&mut rng, n, sigma, vol)
            }
            MeasureGenerator::SparseAtoms { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut masses = vec![0.0; n];
                for leaf in rand::seq::index::sample(&mut rng, n, count) {
                    masses[leaf] = vol * (1.0 - rng.random::<f64>());
                }
                masses
            }
            MeasureGenerator::ZeroBlocks { fraction, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut masses = lognormal_masses(&mut rng, n, 1.0, vol);
                zero_random_blocks(&mut rng, &lattice, &mut masses, fraction);
                masses
            }
        };
        MeasureGrid::new(lattice, masses)
    }
}

pub(crate) fn lognormal_masses<R: Rng>(rng: &mut R, n: usize, sigma: f64, vol: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![vol; n];
    }
    let dist = LogNormal::new(0.0, sigma).expect("sigma validated");
    (0..n).map(|_| vol * dist.sample(rng)).collect()
}

/// Zero whole cubes from the two finest generations above the leaves (or the
/// leaves themselves) until at least `fraction` of the leaves are null.
pub(crate) fn zero_random_blocks<R: Rng>(
    rng: &mut R,
    lattice: &Lattice,
    masses: &mut [f64],
    fraction: f64,
) {
    let n = masses.len();
    let target = (fraction * n as f64).ceil() as usize;
    let depth = lattice.depth();
    let shallowest = depth.saturating_sub(2).max(1);
    let mut zeroed = masses.iter().filter(|m| **m == 0.0).count();
    while zeroed < target {
        let d = rng.random_range(shallowest..=depth);
        let ids = lattice.ids_at_depth(d);
        let id = rng.random_range(ids);
        for leaf in lattice.leaf_range(id) {
            if masses[leaf] != 0.0 {
                masses[leaf] = 0.0;
                zeroed += 1;
            }
        }
    }
}
