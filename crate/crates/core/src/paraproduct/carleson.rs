use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Cube, Lattice};
use crate::linalg::top_eigenpair;
use crate::measure::MeasureGrid;
use crate::operators::InducedOperator;

/// Which indicator feeds `Δ_R^ν T_μ` in the sequence `a_Q`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorChoice {
    /// `‖Δ_R T_μ χ_Q‖²`, the same term that enters the paraproduct.
    #[default]
    Outer,
    /// `‖Δ_R T_μ χ_R‖²`.
    Inner,
}

/// Nonnegative numbers `a_Q`, indexed by cube id.
#[derive(Clone, Debug, PartialEq)]
pub struct CarlesonSequence {
    lattice: Arc<Lattice>,
    values: Vec<f64>,
}

impl CarlesonSequence {
    pub fn new(lattice: Arc<Lattice>, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.n_cubes() {
            return Err(Error::DimensionMismatch {
                expected: lattice.n_cubes(),
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, a)| !(a.is_finite() && **a >= 0.0))
        {
            return Err(Error::BadMass { index, value });
        }
        Ok(CarlesonSequence { lattice, values })
    }

    pub fn zeros(lattice: Arc<Lattice>) -> Self {
        let values = vec![0.0; lattice.n_cubes()];
        CarlesonSequence { lattice, values }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, factor: f64) -> Self {
        CarlesonSequence {
            lattice: self.lattice.clone(),
            values: self.values.iter().map(|a| a * factor).collect(),
        }
    }

    /// `Σ_{Q ⊂ R} a_Q` for every active `R`.
    pub fn subtree_sums(&self) -> Vec<f64> {
        let mut sums = self.values.clone();
        for id in (1..self.lattice.n_cubes()).rev() {
            if let Some(p) = self.lattice.parent_id(id) {
                sums[p] += sums[id];
            }
        }
        sums
    }

    /// CSV rows `level,coords...,a_Q`.
    pub fn to_csv(&self) -> String {
        let dim = self.lattice.dim();
        let mut out = String::from("level");
        for d in 0..dim {
            out.push_str(&format!(",x{d}"));
        }
        out.push_str(",a\n");
        for (cube, a) in self.lattice.cubes().iter().zip(&self.values) {
            out.push_str(&cube.level.to_string());
            for k in &cube.coords {
                out.push_str(&format!(",{k}"));
            }
            out.push_str(&format!(",{a:e}\n"));
        }
        out
    }
}

// `‖Δ_R y‖²_ν` from the leaf values of `y` on `R`.
fn difference_norm_sq(lattice: &Lattice, nu: &MeasureGrid, y: &[f64], r_id: usize) -> f64 {
    let mass = nu.leaf_masses();
    let total = nu.mass_of(r_id);
    if total == 0.0 {
        return 0.0;
    }
    let kids = lattice.children_ids(r_id).expect("interior");
    let sums: Vec<f64> = kids
        .clone()
        .map(|kid| lattice.leaf_range(kid).map(|l| y[l] * mass[l]).sum())
        .collect();
    let avg = sums.iter().sum::<f64>() / total;
    kids.zip(sums)
        .map(|(kid, s)| {
            let m = nu.mass_of(kid);
            if m > 0.0 {
                m * (s / m - avg).powi(2)
            } else {
                0.0
            }
        })
        .sum()
}

/// `a_Q = Σ_{R ⊂ Q, ℓ(R) = 2^{-r} ℓ(Q)} ‖Δ_R^ν T_μ χ‖²_ν` with `χ` chosen by
/// `choice`.
pub fn carleson_sequence(t: &InducedOperator, r: u32, choice: IndicatorChoice) -> Result<CarlesonSequence> {
    let lattice = t.lattice().clone();
    if lattice.depth() <= r {
        return Err(Error::DepthTooShallow {
            depth: lattice.depth(),
            radius: r,
        });
    }
    let images = t.indicator_images();
    let mut values = vec![0.0; lattice.n_cubes()];
    for (q_id, value) in values.iter_mut().enumerate().take(lattice.n_interior()) {
        let fine = lattice.descendants(q_id, r);
        if fine.is_empty() || lattice.is_leaf(fine.start) {
            continue;
        }
        *value = fine
            .map(|r_id| {
                let source = match choice {
                    IndicatorChoice::Outer => q_id,
                    IndicatorChoice::Inner => r_id,
                };
                difference_norm_sq(&lattice, t.nu(), images.column(source).as_slice(), r_id)
            })
            .sum();
    }
    CarlesonSequence::new(lattice, values)
}

/// Smallest `C` with `Σ_{Q ⊂ R} a_Q ≤ C μ(R)` for every active `R`; infinite
/// when a null cube carries a positive sum.
pub fn carleson_constant(a: &CarlesonSequence, mu: &MeasureGrid) -> f64 {
    a.subtree_sums()
        .iter()
        .zip(mu.cube_masses())
        .fold(0.0f64, |c, (&s, &m)| {
            if m > 0.0 {
                c.max(s / m)
            } else if s > 0.0 {
                f64::INFINITY
            } else {
                c
            }
        })
}

/// Optimal constant in `Σ_R a_R |E_R^μ f|² ≤ C ‖f‖²_μ`.
pub fn embedding_constant(a: &CarlesonSequence, mu: &MeasureGrid) -> f64 {
    Embedding::new(a, mu).value
}

// The form is `Σ a_R (w_R · g)²` in `g = μ^{1/2} f`, with
// `w_R = μ^{1/2} χ_R / μ(R)`, so it equals `W A Wᵀ`. Its nonzero spectrum is
// that of `A^{1/2} WᵀW A^{1/2}`, where `w_R · w_S = 1/μ(R ∪ S)` for nested
// cubes and 0 otherwise; the smaller of the two matrices is diagonalized.
struct Embedding {
    value: f64,
    /// Cube ids carrying weight, and `sqrt(a_R) u_R / sqrt(λ)` for each, so
    /// that the leaf eigenvector is `Σ_R coef_R w_R`.
    support: Vec<usize>,
    coef: Vec<f64>,
}

impl Embedding {
    fn new(a: &CarlesonSequence, mu: &MeasureGrid) -> Self {
        let lattice = a.lattice();
        let masses = mu.cube_masses();
        let support: Vec<usize> = (0..lattice.n_cubes())
            .filter(|&id| a.values[id] > 0.0 && masses[id] > 0.0)
            .collect();
        let positive: Vec<usize> = (0..lattice.n_leaves()).filter(|&l| !mu.is_null_leaf(l)).collect();
        if support.is_empty() {
            return Embedding {
                value: 0.0,
                support,
                coef: Vec::new(),
            };
        }
        if support.len() <= positive.len() {
            let k = support.len();
            let root: Vec<f64> = support.iter().map(|&id| a.values[id].sqrt()).collect();
            let g = DMatrix::from_fn(k, k, |i, j| {
                let (p, q) = (support[i], support[j]);
                let overlap = nested_inverse(lattice, masses, p, q);
                root[i] * overlap * root[j]
            });
            let (value, u) = top_eigenpair(&g);
            let coef = if value > 0.0 {
                (0..k).map(|i| root[i] * u[i] / value.sqrt()).collect()
            } else {
                vec![0.0; k]
            };
            Embedding { value, support, coef }
        } else {
            let p = positive.len();
            let mut index = vec![usize::MAX; lattice.n_leaves()];
            for (i, &l) in positive.iter().enumerate() {
                index[l] = i;
            }
            let leaf_mass = mu.leaf_masses();
            let mut m = DMatrix::zeros(p, p);
            for &id in &support {
                let weight = a.values[id] / masses[id].powi(2);
                let leaves: Vec<usize> = lattice
                    .leaf_range(id)
                    .filter(|&l| leaf_mass[l] > 0.0)
                    .collect();
                for &x in &leaves {
                    for &y in &leaves {
                        m[(index[x], index[y])] += weight * (leaf_mass[x] * leaf_mass[y]).sqrt();
                    }
                }
            }
            let (value, _) = top_eigenpair(&m);
            Embedding {
                value,
                support: Vec::new(),
                coef: Vec::new(),
            }
        }
    }

    // `w_Q · v` for the top eigenvector `v`.
    fn alignment(&self, lattice: &Lattice, masses: &[f64], q: usize) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(&s, c)| c * nested_inverse(lattice, masses, q, s))
            .sum()
    }
}

// `w_P · w_Q`: `1/μ` of the larger cube when nested, else 0.
fn nested_inverse(lattice: &Lattice, masses: &[f64], p: usize, q: usize) -> f64 {
    let (cp, cq) = (lattice.cube(p), lattice.cube(q));
    if cp.contains(cq) {
        1.0 / masses[p]
    } else if cq.contains(cp) {
        1.0 / masses[q]
    } else {
        0.0
    }
}

/// A random sequence scaled to Carleson constant 1: each cube is kept with
/// probability `1/2`, with `a_Q` uniform in `[0, μ(Q)]`.
pub fn random_sequence(mu: &MeasureGrid, seed: u64) -> CarlesonSequence {
    let lattice = mu.lattice().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = mu
        .cube_masses()
        .iter()
        .map(|&m| {
            let keep: bool = rng.random();
            let x: f64 = rng.random();
            if keep {
                x * m
            } else {
                0.0
            }
        })
        .collect();
    let a = CarlesonSequence::new(lattice, values).expect("nonnegative");
    let c = carleson_constant(&a, mu);
    if c > 0.0 && c.is_finite() {
        a.scaled(1.0 / c)
    } else {
        a
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyRow {
    pub depth: u32,
    pub embedding: f64,
    pub carleson: f64,
    pub terms: usize,
}

/// Greedy search for Carleson sequences with a large embedding constant on
/// one-dimensional Lebesgue trees of growing depth.
///
/// The tree of depth `D` is `[0, 2^D)` cut down to unit leaves, so each tree
/// contains the previous one as its left half and starts from the previous
/// sequence. A step raises `a_Q` to its Carleson slack for the cube with the
/// largest first-order gain `slack_Q (w_Q · v)²`, `v` the top eigenvector.
pub fn greedy_table(max_depth: u32) -> Result<Vec<GreedyRow>> {
    let mut rows = Vec::new();
    let mut previous: Option<CarlesonSequence> = None;
    for depth in 1..=max_depth {
        let lattice = Arc::new(Lattice::new(1, depth as i32, 0, vec![Cube::new(depth as i32, vec![0])])?);
        let mu = MeasureGrid::lebesgue(lattice.clone());
        let mut values = vec![0.0; lattice.n_cubes()];
        if let Some(prev) = &previous {
            for (cube, &a) in prev.lattice().cubes().iter().zip(prev.values()) {
                values[lattice.require(cube)?] = a;
            }
        }
        let a = greedy_fill(CarlesonSequence::new(lattice.clone(), values)?, &mu);
        rows.push(GreedyRow {
            depth,
            embedding: embedding_constant(&a, &mu),
            carleson: carleson_constant(&a, &mu),
            terms: a.values().iter().filter(|v| **v > 0.0).count(),
        });
        previous = Some(a);
    }
    Ok(rows)
}

fn greedy_fill(mut a: CarlesonSequence, mu: &MeasureGrid) -> CarlesonSequence {
    let lattice = a.lattice().clone();
    let masses = mu.cube_masses().to_vec();
    loop {
        let sums = a.subtree_sums();
        let mut slack = vec![0.0; lattice.n_cubes()];
        for id in 0..lattice.n_cubes() {
            let own = masses[id] - sums[id];
            slack[id] = match lattice.parent_id(id) {
                Some(p) => own.min(slack[p]),
                None => own,
            };
        }
        let embedding = Embedding::new(&a, mu);
        let mut best: Option<(f64, usize)> = None;
        // Deepest cubes first so that ties favour them.
        for id in (0..lattice.n_cubes()).rev() {
            if slack[id] <= 1e-9 * masses[id] {
                continue;
            }
            let gain = if embedding.value > 0.0 {
                embedding.alignment(&lattice, &masses, id).powi(2)
            } else {
                1.0 / masses[id]
            };
            let score = slack[id] * gain;
            if score > 1e-15 && best.is_none_or(|(s, _)| score > s * (1.0 + 1e-12)) {
                best = Some((score, id));
            }
        }
        match best {
            Some((_, id)) => a.values[id] += slack[id],
            None => return a,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::MeasureGenerator;

    fn line(depth: i32) -> Arc<Lattice> {
        Arc::new(Lattice::new(1, 0, -depth, vec![Cube::unit(1, 0)]).unwrap())
    }

    #[test]
    fn single_root_term() {
        let l = line(3);
        let mu = MeasureGrid::lebesgue(l.clone());
        let mut values = vec![0.0; l.n_cubes()];
        values[0] = 1.0;
        let a = CarlesonSequence::new(l, values).unwrap();
        assert!((carleson_constant(&a, &mu) - 1.0).abs() < 1e-15);
        assert!((embedding_constant(&a, &mu) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_sequence() {
        let l = line(2);
        let mu = MeasureGrid::lebesgue(l.clone());
        let a = CarlesonSequence::zeros(l);
        assert_eq!(carleson_constant(&a, &mu), 0.0);
        assert_eq!(embedding_constant(&a, &mu), 0.0);
    }

    #[test]
    fn null_cube_with_weight_is_infinite() {
        let l = line(2);
        let mu = MeasureGrid::new(l.clone(), vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let mut values = vec![0.0; l.n_cubes()];
        values[l.id_of(&Cube::new(-1, vec![0])).unwrap()] = 0.5;
        let a = CarlesonSequence::new(l, values).unwrap();
        assert_eq!(carleson_constant(&a, &mu), f64::INFINITY);
    }

    #[test]
    fn gram_and_leaf_forms_agree() {
        // Few terms use the Gram form; many terms the leaf form.
        let l = line(3);
        let mu = MeasureGenerator::ZeroBlocks { fraction: 0.2, seed: 4 }.build(l.clone()).unwrap();
        let dense = random_sequence(&mu, 1);
        let mut sparse_values = vec![0.0; l.n_cubes()];
        for id in [0, 1, 4, 9] {
            sparse_values[id] = dense.values()[id] + 0.1;
        }
        for a in [dense, CarlesonSequence::new(l.clone(), sparse_values).unwrap()] {
            // Oracle: Rayleigh quotient maximized by a dense eigensolve of the leaf form.
            let n = l.n_leaves();
            let m = mu.leaf_masses();
            let mut q = DMatrix::<f64>::zeros(n, n);
            for id in 0..l.n_cubes() {
                let mass = mu.mass_of(id);
                if a.values()[id] == 0.0 || mass == 0.0 {
                    continue;
                }
                for x in l.leaf_range(id) {
                    for y in l.leaf_range(id) {
                        q[(x, y)] += a.values()[id] * (m[x] * m[y]).sqrt() / mass.powi(2);
                    }
                }
            }
            let oracle = q.symmetric_eigenvalues().max();
            assert!((embedding_constant(&a, &mu) - oracle).abs() < 1e-10 * oracle.max(1.0));
        }
    }

    #[test]
    fn random_sequences_embed_with_constant_four() {
        let l = line(4);
        for seed in 0..20 {
            let mu = MeasureGenerator::Lognormal { sigma: 1.5, seed }.build(l.clone()).unwrap();
            let a = random_sequence(&mu, seed);
            assert!((carleson_constant(&a, &mu) - 1.0).abs() < 1e-12);
            assert!(embedding_constant(&a, &mu) <= 4.0 + 1e-9);
        }
    }

    #[test]
    fn greedy_is_monotone_and_bounded() {
        let rows = greedy_table(6).unwrap();
        for pair in rows.windows(2) {
            assert!(pair[1].embedding >= pair[0].embedding - 1e-12);
        }
        for row in &rows {
            assert!(row.carleson <= 1.0 + 1e-12);
            assert!(row.embedding <= 4.0);
        }
        assert!(rows.last().unwrap().embedding > 1.8);
    }

    #[test]
    fn csv_has_one_row_per_cube() {
        let l = line(2);
        let a = CarlesonSequence::zeros(l.clone());
        let csv = a.to_csv();
        assert_eq!(csv.lines().count(), 1 + l.n_cubes());
        assert!(csv.starts_with("level,x0,a\n"));
    }
}
