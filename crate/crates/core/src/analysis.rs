//! Operator norms, testing constants and the bilinear-form decomposition.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lattice::Cube;
use crate::linalg::spectral_norm;
use crate::measure::GridFunction;
use crate::operators::InducedOperator;
use crate::paraproduct::{build_paraproduct, HaarCoefficients, Paraproduct, Side};
use crate::report::extended_float;

/// `‖T_μ‖_{L^2(μ) → L^2(ν)}`.
pub fn operator_norm(t: &InducedOperator) -> f64 {
    spectral_norm(&t.weighted_matrix())
}

/// Testing constants of an induced operator together with its norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestingReport {
    pub radius: u32,
    pub norm: f64,
    /// `sup_Q ‖T_μ χ_Q‖²_ν / μ(Q)`.
    #[serde(with = "extended_float")]
    pub c_direct_global: f64,
    /// `sup_Q ‖T*_ν χ_Q‖²_μ / ν(Q)`.
    #[serde(with = "extended_float")]
    pub c_adjoint_global: f64,
    /// `sup_Q ∫_Q |T_μ χ_Q|² dν / μ(Q)`.
    #[serde(with = "extended_float")]
    pub c_direct_local: f64,
    /// `sup_Q ∫_Q |T*_ν χ_Q|² dμ / ν(Q)`.
    #[serde(with = "extended_float")]
    pub c_adjoint_local: f64,
    /// The adjoint local constant with the integral taken against `dν`.
    #[serde(with = "extended_float")]
    pub c_adjoint_local_nu: f64,
    /// `sup |⟨T_μ χ_Q, χ_R⟩_ν| / (μ(Q) ν(R))^{1/2}` over `2^{-r} ≤ ℓ(Q)/ℓ(R) ≤ 2^r`.
    #[serde(with = "extended_float")]
    pub c_diag: f64,
    /// The same pairings divided by `(μ(Q) ν(Q))^{1/2}`.
    #[serde(with = "extended_float")]
    pub c_diag_same_cube: f64,
    /// Null cubes whose image is nonzero.
    pub unbounded: Vec<Cube>,
}

impl TestingReport {
    /// `norm / (sqrt(C_direct_local) + sqrt(C_adjoint_local) + C_diag)`; zero
    /// for the zero operator.
    pub fn sufficiency_ratio(&self) -> f64 {
        let denom = self.c_direct_local.sqrt() + self.c_adjoint_local.sqrt() + self.c_diag;
        if self.norm == 0.0 {
            0.0
        } else if denom == 0.0 {
            f64::INFINITY
        } else {
            self.norm / denom
        }
    }

    /// Largest amount by which a necessary condition exceeds the norm.
    pub fn necessity_excess(&self) -> f64 {
        [
            self.c_direct_global.sqrt(),
            self.c_adjoint_global.sqrt(),
            self.c_direct_local.sqrt(),
            self.c_adjoint_local.sqrt(),
            self.c_diag,
        ]
        .into_iter()
        .map(|c| c - self.norm)
        .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn sufficiency_ratio(t: &InducedOperator, r: u32) -> f64 {
    testing_constants(t, r).sufficiency_ratio()
}

struct Testing {
    global: f64,
    local: f64,
    local_source: f64,
    unbounded: Vec<usize>,
}

// Suprema of `‖T χ_Q‖² / source(Q)` over the whole target and over `Q`.
fn indicator_testing(t: &InducedOperator) -> (Testing, nalgebra::DMatrix<f64>) {
    let lattice = t.lattice();
    let images = t.indicator_images();
    let source = t.mu();
    let target = t.nu();
    let tm = target.leaf_masses();
    let sm = source.leaf_masses();
    let mut out = Testing {
        global: 0.0,
        local: 0.0,
        local_source: 0.0,
        unbounded: Vec::new(),
    };
    for id in 0..lattice.n_cubes() {
        let y = images.column(id);
        let range = lattice.leaf_range(id);
        let global: f64 = y.iter().zip(tm).map(|(v, m)| v * v * m).sum();
        let local: f64 = range.clone().map(|l| y[l] * y[l] * tm[l]).sum();
        let local_source: f64 = range.map(|l| y[l] * y[l] * sm[l]).sum();
        let mass = source.mass_of(id);
        if mass > 0.0 {
            out.global = out.global.max(global / mass);
            out.local = out.local.max(local / mass);
            out.local_source = out.local_source.max(local_source / mass);
        } else if global > 0.0 {
            out.global = f64::INFINITY;
            out.local = if local > 0.0 { f64::INFINITY } else { out.local };
            out.local_source = if local_source > 0.0 {
                f64::INFINITY
            } else {
                out.local_source
            };
            out.unbounded.push(id);
        }
    }
    (out, images)
}

fn ratio(value: f64, mass: f64) -> f64 {
    if mass > 0.0 {
        value.abs() / mass.sqrt()
    } else if value != 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

pub fn testing_constants(t: &InducedOperator, r: u32) -> TestingReport {
    let lattice = t.lattice();
    let (direct, images) = indicator_testing(t);
    let (adjoint, _) = indicator_testing(&t.adjoint());
    let mu = t.mu().cube_masses();
    let nu = t.nu().cube_masses();
    let mut c_diag = 0.0f64;
    let mut c_same = 0.0f64;
    for q in 0..lattice.n_cubes() {
        let weighted = t.nu().weighted(images.column(q).as_slice());
        let pairings = lattice.cube_sums(&weighted);
        let level = lattice.level_of(q);
        for (rid, &p) in pairings.iter().enumerate() {
            if (lattice.level_of(rid) - level).unsigned_abs() > r || p == 0.0 {
                continue;
            }
            c_diag = c_diag.max(ratio(p, mu[q] * nu[rid]));
            c_same = c_same.max(ratio(p, mu[q] * nu[q]));
        }
    }
    let mut unbounded: Vec<Cube> = direct
        .unbounded
        .iter()
        .chain(&adjoint.unbounded)
        .map(|&id| lattice.cube(id).clone())
        .collect();
    unbounded.sort();
    unbounded.dedup();
    TestingReport {
        radius: r,
        norm: operator_norm(t),
        c_direct_global: direct.global,
        c_adjoint_global: adjoint.global,
        c_direct_local: direct.local,
        c_adjoint_local: adjoint.local,
        c_adjoint_local_nu: adjoint.local_source,
        c_diag,
        c_diag_same_cube: c_same,
        unbounded,
    }
}

/// Largest number of cubes `R` at comparable scale (`|level difference| ≤ r`)
/// paired nontrivially with the Haar functions of a single cube `Q`.
pub fn comparable_blocks(t: &InducedOperator, r: u32, tol: f64) -> usize {
    let c = HaarCoefficients::new(&t.matrix(), t.mu(), t.nu());
    let scale = c.max_abs();
    if scale == 0.0 {
        return 0;
    }
    let lattice = t.lattice();
    let mut best = 0;
    for q in 0..lattice.n_interior() {
        let cols = c.domain.range_of(q);
        if cols.is_empty() {
            continue;
        }
        let count = (0..lattice.n_interior())
            .filter(|&rid| (lattice.level_of(rid) - lattice.level_of(q)).unsigned_abs() <= r)
            .filter(|&rid| {
                c.target
                    .range_of(rid)
                    .any(|i| cols.clone().any(|j| c.matrix[(i, j)].abs() > tol * scale))
            })
            .count();
        best = best.max(count);
    }
    best
}

/// The pieces of `⟨T_μ f, g⟩_ν`: both paraproducts on the martingale parts,
/// the comparable-scale block sum, and the terms carrying root averages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub bilinear: f64,
    pub paraproduct_mu: f64,
    pub paraproduct_nu: f64,
    pub comparable: f64,
    pub averages: f64,
    /// `|bilinear - Σ parts| / (‖f‖_μ ‖g‖_ν)`.
    pub residual: f64,
}

/// Precomputed paraproducts and Haar coefficients for repeated evaluation.
#[derive(Clone, Debug)]
pub struct Decomposition {
    t: InducedOperator,
    radius: u32,
    pi_mu: Paraproduct,
    pi_nu: Paraproduct,
    coefficients: HaarCoefficients,
}

impl Decomposition {
    pub fn new(t: &InducedOperator, r: u32) -> Result<Self> {
        Ok(Decomposition {
            t: t.clone(),
            radius: r,
            pi_mu: build_paraproduct(t, r, Side::Mu)?,
            pi_nu: build_paraproduct(t, r, Side::Nu)?,
            coefficients: HaarCoefficients::new(&t.matrix(), t.mu(), t.nu()),
        })
    }

    pub fn paraproducts(&self) -> (&Paraproduct, &Paraproduct) {
        (&self.pi_mu, &self.pi_nu)
    }

    pub fn evaluate(&self, f: &[f64], g: &[f64]) -> DecompositionReport {
        let t = &self.t;
        let (mu, nu) = (t.mu(), t.nu());
        let lattice = t.lattice();
        let bilinear = nu.inner_values(&t.apply_values(f), g);

        let f_mean = mu.root_average_part(f);
        let g_mean = nu.root_average_part(g);
        let f_diff: Vec<f64> = f.iter().zip(&f_mean).map(|(a, b)| a - b).collect();
        let g_diff: Vec<f64> = g.iter().zip(&g_mean).map(|(a, b)| a - b).collect();

        let paraproduct_mu = nu.inner_values(&self.pi_mu.apply_values(&f_diff), &g_diff);
        let paraproduct_nu = mu.inner_values(&f_diff, &self.pi_nu.apply_values(&g_diff));

        let c = &self.coefficients;
        let fc = c.domain.analyze(&mu.weighted(f));
        let gc = c.target.analyze(&nu.weighted(g));
        let mut comparable = 0.0;
        for (j, fj) in fc.iter().enumerate() {
            let q = lattice.level_of(c.domain_index(j).0);
            for (i, gi) in gc.iter().enumerate() {
                let r = lattice.level_of(c.target_index(i).0);
                if (r - q).unsigned_abs() <= self.radius {
                    comparable += c.matrix[(i, j)] * fj * gi;
                }
            }
        }

        let averages = nu.inner_values(&t.apply_values(&f_mean), g)
            + nu.inner_values(&t.apply_values(&f_diff), &g_mean);

        let scale = (mu.inner_values(f, f) * nu.inner_values(g, g)).sqrt();
        let gap = (bilinear - paraproduct_mu - paraproduct_nu - comparable - averages).abs();
        let residual = if scale > 0.0 { gap / scale } else { gap };
        DecompositionReport {
            bilinear,
            paraproduct_mu,
            paraproduct_nu,
            comparable,
            averages,
            residual,
        }
    }
}

pub fn decomposition_identity(
    t: &InducedOperator,
    r: u32,
    f: &GridFunction,
    g: &GridFunction,
) -> Result<DecompositionReport> {
    Ok(Decomposition::new(t, r)?.evaluate(f.values(), g.values()))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use nalgebra::DMatrix;

    use super::*;
    use crate::generate::MeasureGenerator;
    use crate::lattice::Lattice;
    use crate::measure::MeasureGrid;
    use crate::operators::{block_bound, haar_multiplier, identity, random_band, BandOperator, MultiplierSpec};

    fn line(depth: i32) -> Arc<Lattice> {
        Arc::new(Lattice::new(1, 0, -depth, vec![Cube::unit(1, 0)]).unwrap())
    }

    #[test]
    fn zero_operator() {
        let l = line(3);
        let mu = MeasureGrid::lebesgue(l.clone());
        let t = InducedOperator::induce(&BandOperator::zero(l, 1), &mu, &mu).unwrap();
        let rep = testing_constants(&t, 1);
        assert_eq!(rep.norm, 0.0);
        assert_eq!(rep.c_direct_global, 0.0);
        assert_eq!(rep.c_diag, 0.0);
        assert_eq!(rep.sufficiency_ratio(), 0.0);
    }

    #[test]
    fn projection_has_norm_one() {
        let l = line(4);
        let leb = MeasureGrid::lebesgue(l.clone());
        let op = haar_multiplier(l, &MultiplierSpec::constant(1.0));
        let t = InducedOperator::induce(&op, &leb, &leb).unwrap();
        assert!((operator_norm(&t) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn norm_matches_eigen_oracle() {
        let l = Arc::new(Lattice::new(2, 0, -2, vec![Cube::unit(2, 0)]).unwrap());
        let mu = MeasureGenerator::ZeroBlocks { fraction: 0.2, seed: 8 }.build(l.clone()).unwrap();
        let nu = MeasureGenerator::Lognormal { sigma: 1.0, seed: 9 }.build(l.clone()).unwrap();
        let t = InducedOperator::induce(&random_band(l.clone(), 1, 4, 1.0, true), &mu, &nu).unwrap();
        // ‖T‖² is the top generalized eigenvalue of Aᵀ D_ν A against D_μ.
        let a = t.matrix();
        let keep: Vec<usize> = (0..16).filter(|&i| !mu.is_null_leaf(i)).collect();
        let dnu = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(nu.leaf_masses()));
        let gram = a.transpose() * dnu * &a;
        let s = DMatrix::from_fn(keep.len(), keep.len(), |i, j| {
            gram[(keep[i], keep[j])] / (mu.leaf_masses()[keep[i]] * mu.leaf_masses()[keep[j]]).sqrt()
        });
        let oracle = s.symmetric_eigenvalues().max().sqrt();
        assert!((operator_norm(&t) - oracle).abs() < 1e-9 * oracle);
        assert!((operator_norm(&t.adjoint()) - oracle).abs() < 1e-9 * oracle);
    }

    #[test]
    fn necessity_and_domain_monotonicity() {
        let l = line(4);
        for seed in 0..10 {
            let mu = MeasureGenerator::ZeroBlocks { fraction: 0.25, seed }.build(l.clone()).unwrap();
            let nu = MeasureGenerator::Lognormal { sigma: 1.0, seed: seed + 50 }.build(l.clone()).unwrap();
            let t = InducedOperator::induce(&random_band(l.clone(), 2, seed, 1.0, true), &mu, &nu).unwrap();
            let rep = testing_constants(&t, 2);
            assert!(rep.necessity_excess() <= 1e-9, "{rep:?}");
            assert!(rep.c_direct_local <= rep.c_direct_global);
            assert!(rep.c_adjoint_local <= rep.c_adjoint_global);
            assert!(rep.sufficiency_ratio() > 0.0);
        }
    }

    #[test]
    fn multiplication_operator_testing_scan() {
        // T_μ = M_u with u = v: ‖M_u χ_Q‖²_ν / μ(Q) = ∫_Q u² v / ∫_Q u.
        let l = line(3);
        let mu = MeasureGenerator::Lognormal { sigma: 1.0, seed: 3 }.build(l.clone()).unwrap();
        let t = InducedOperator::induce(&identity(l.clone()), &mu, &mu).unwrap();
        let u = mu.density();
        let vol = l.leaf_volume();
        let mut oracle = 0.0f64;
        for id in 0..l.n_cubes() {
            let range = l.leaf_range(id);
            let num: f64 = range.clone().map(|i| u[i].powi(3) * vol).sum();
            let den: f64 = range.map(|i| u[i] * vol).sum();
            oracle = oracle.max(num / den);
        }
        let rep = testing_constants(&t, 0);
        assert!((rep.c_direct_global - oracle).abs() < 1e-10 * oracle);
    }

    #[test]
    fn decreasing_the_target_weight_never_increases_the_norm() {
        let l = line(4);
        let mu = MeasureGenerator::Lognormal { sigma: 1.0, seed: 1 }.build(l.clone()).unwrap();
        let nu = MeasureGenerator::Lognormal { sigma: 1.0, seed: 2 }.build(l.clone()).unwrap();
        let op = random_band(l.clone(), 1, 3, 1.0, false);
        let full = operator_norm(&InducedOperator::induce(&op, &mu, &nu).unwrap());
        let factors: Vec<f64> = (0..16).map(|i| ((i * 7) % 5) as f64 / 4.0).collect();
        let smaller = nu.scaled(&factors).unwrap();
        let reduced = operator_norm(&InducedOperator::induce(&op, &mu, &smaller).unwrap());
        assert!(reduced <= full * (1.0 + 1e-12));
    }

    #[test]
    fn block_count_is_bounded() {
        for (dim, depth) in [(1, 5), (2, 3)] {
            let l = Arc::new(Lattice::new(dim, 0, -depth, vec![Cube::unit(dim, 0)]).unwrap());
            let mu = MeasureGenerator::Lognormal { sigma: 1.0, seed: 5 }.build(l.clone()).unwrap();
            for r in 0..=2 {
                let t = InducedOperator::induce(&random_band(l.clone(), r, 6, 1.0, false), &mu, &mu).unwrap();
                let m = comparable_blocks(&t, r, 1e-12);
                assert!(m >= 1 && m <= block_bound(dim, r), "N={dim} r={r}: {m}");
            }
        }
    }

    fn decomposition_oracle(t: &InducedOperator, r: u32, f: &[f64], g: &[f64]) -> f64 {
        // Σ over comparable pairs of ⟨T Δ_Q f, Δ_R g⟩ from explicit differences.
        let l = t.lattice().clone();
        let df = t.mu().decompose(&GridFunction::new(l.clone(), f.to_vec()).unwrap()).unwrap();
        let dg = t.nu().decompose(&GridFunction::new(l.clone(), g.to_vec()).unwrap()).unwrap();
        let mut total = 0.0;
        for (q, a) in &df.differences {
            let ta = t.apply_values(a.values());
            for (rid, b) in &dg.differences {
                if (l.level_of(*q) - l.level_of(*rid)).unsigned_abs() <= r {
                    total += t.nu().inner_values(&ta, b.values());
                }
            }
        }
        total
    }

    #[test]
    fn decomposition_is_exact() {
        let l = Arc::new(Lattice::new(2, 0, -3, vec![Cube::unit(2, 0)]).unwrap());
        for r in 0..=2 {
            let mu = MeasureGenerator::ZeroBlocks { fraction: 0.2, seed: r as u64 }.build(l.clone()).unwrap();
            let nu = MeasureGenerator::Lognormal { sigma: 1.0, seed: 7 }.build(l.clone()).unwrap();
            let t = InducedOperator::induce(&random_band(l.clone(), r, 2, 1.0, true), &mu, &nu).unwrap();
            let d = Decomposition::new(&t, r).unwrap();
            let f: Vec<f64> = (0..64).map(|i| (i as f64 * 0.7).sin()).collect();
            let g: Vec<f64> = (0..64).map(|i| (i as f64 * 1.3).cos()).collect();
            let rep = d.evaluate(&f, &g);
            assert!(rep.residual < 1e-10, "{rep:?}");
            let oracle = decomposition_oracle(&t, r, &f, &g);
            assert!((rep.comparable - oracle).abs() < 1e-10 * (1.0 + oracle.abs()));
        }
    }

    #[test]
    fn multiplier_collapses_to_the_diagonal() {
        let l = line(4);
        let mu = MeasureGenerator::Lognormal { sigma: 1.0, seed: 1 }.build(l.clone()).unwrap();
        let nu = MeasureGenerator::Lognormal { sigma: 1.0, seed: 2 }.build(l.clone()).unwrap();
        let op = haar_multiplier(l.clone(), &MultiplierSpec::random(&l, 4, 1.0));
        let t = InducedOperator::induce(&op, &mu, &nu).unwrap();
        let f: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let g: Vec<f64> = (0..16).map(|i| (i as f64).sqrt()).collect();
        let rep = Decomposition::new(&t, 0).unwrap().evaluate(&f, &g);
        assert!(rep.residual < 1e-10);
        let df = mu.decompose(&GridFunction::new(l.clone(), f.clone()).unwrap()).unwrap();
        let dg = nu.decompose(&GridFunction::new(l.clone(), g.clone()).unwrap()).unwrap();
        let diagonal: f64 = df
            .differences
            .iter()
            .zip(&dg.differences)
            .map(|((_, a), (_, b))| nu.inner_values(&t.apply_values(a.values()), b.values()))
            .sum();
        assert!((rep.comparable - diagonal).abs() < 1e-10 * (1.0 + diagonal.abs()));
    }
}
