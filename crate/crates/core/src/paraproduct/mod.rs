//! Paraproducts of a well-localized operator, their Haar-coefficient
//! structure, and Carleson sequences.

mod carleson;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::haar::HaarSystem;
use crate::lattice::Cube;
use crate::measure::{GridFunction, MeasureGrid};
use crate::operators::InducedOperator;

pub use carleson::{
    carleson_constant, carleson_sequence, embedding_constant, greedy_table, random_sequence,
    CarlesonSequence, GreedyRow, IndicatorChoice,
};

/// Which paraproduct: `Π^μ_T` built from `T_μ`, or `Π^ν_{T*}` built from `T*_ν`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Mu,
    Nu,
}

/// `Π f = Σ_Q E_Q f · Σ_{R ⊂ Q, ℓ(R) = 2^{-r} ℓ(Q)} Δ_R T χ_Q` as a leaf
/// matrix. Rows of target-null leaves are zero.
#[derive(Clone, Debug)]
pub struct Paraproduct {
    pub side: Side,
    pub radius: u32,
    /// Generations by which the inner indicator was enlarged.
    pub lift: u32,
    pub domain: MeasureGrid,
    pub target: MeasureGrid,
    pub matrix: DMatrix<f64>,
}

impl Paraproduct {
    pub fn apply_values(&self, f: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(f)).data.into()
    }
}

pub fn build_paraproduct(t: &InducedOperator, r: u32, side: Side) -> Result<Paraproduct> {
    build_lifted(t, r, side, 0)
}

/// Same as [`build_paraproduct`] with `χ_{Q^{(lift)}}` in place of `χ_Q` in
/// the inner term; the result does not depend on `lift`.
pub fn build_lifted(t: &InducedOperator, r: u32, side: Side, lift: u32) -> Result<Paraproduct> {
    let lattice = t.lattice().clone();
    if lattice.depth() <= r {
        return Err(Error::DepthTooShallow {
            depth: lattice.depth(),
            radius: r,
        });
    }
    let op = match side {
        Side::Mu => t.clone(),
        Side::Nu => t.adjoint(),
    };
    let domain = op.mu().clone();
    let target = op.nu().clone();
    let n = lattice.n_leaves();
    let images = op.indicator_images();
    let mut matrix = DMatrix::zeros(n, n);
    let mut b = vec![0.0; n];
    for q_id in 0..lattice.n_interior() {
        let fine = lattice.descendants(q_id, r);
        if fine.is_empty() || lattice.is_leaf(fine.start) {
            continue;
        }
        let mass = domain.mass_of(q_id);
        if mass == 0.0 {
            continue;
        }
        let image: Vec<f64> = if lift == 0 {
            images.column(q_id).iter().copied().collect()
        } else {
            let outer = lattice.cube(q_id).ancestor(lift);
            match lattice.id_of(&outer) {
                Some(id) => images.column(id).iter().copied().collect(),
                None => op.apply_values(GridFunction::indicator(lattice.clone(), &outer)?.values()),
            }
        };
        let sums = lattice.cube_sums(&target.weighted(&image));
        let avg = target.averages_from_sums(&sums);
        let block = lattice.leaf_range(q_id);
        b[block.clone()].fill(0.0);
        for r_id in fine {
            target.fill_difference(r_id, &avg, &mut b);
        }
        // Values on target-null cells are arbitrary; keep them at zero.
        for i in block.clone() {
            if target.is_null_leaf(i) {
                b[i] = 0.0;
            }
        }
        let mu = domain.leaf_masses();
        for j in block.clone() {
            if mu[j] == 0.0 {
                continue;
            }
            let w = mu[j] / mass;
            for i in block.clone() {
                matrix[(i, j)] += w * b[i];
            }
        }
    }
    Ok(Paraproduct {
        side,
        radius: r,
        lift,
        domain,
        target,
        matrix,
    })
}

/// Weighted Haar functions as leaf-vector columns.
pub fn haar_columns(system: &HaarSystem) -> DMatrix<f64> {
    let n = system.lattice().n_leaves();
    let mut phi = DMatrix::zeros(n, system.len());
    for i in 0..system.len() {
        phi.set_column(i, &DVector::from_vec(system.element_vector(i)));
    }
    phi
}

/// Matrix of a leaf operator between weighted Haar systems:
/// entry `(i, j) = ⟨A h_j^{domain}, h_i^{target}⟩_{target}`.
#[derive(Clone, Debug)]
pub struct HaarCoefficients {
    pub domain: HaarSystem,
    pub target: HaarSystem,
    pub matrix: DMatrix<f64>,
}

impl HaarCoefficients {
    pub fn new(a: &DMatrix<f64>, domain: &MeasureGrid, target: &MeasureGrid) -> Self {
        let dom = domain.haar_system();
        let tgt = target.haar_system();
        let phi_d = haar_columns(&dom);
        let mut phi_t = haar_columns(&tgt);
        for (i, &m) in target.leaf_masses().iter().enumerate() {
            phi_t.row_mut(i).scale_mut(m);
        }
        let matrix = phi_t.tr_mul(&(a * phi_d));
        HaarCoefficients {
            domain: dom,
            target: tgt,
            matrix,
        }
    }

    /// Cube and in-cube component of a domain element.
    pub fn domain_index(&self, j: usize) -> (usize, usize) {
        locate(&self.domain, j)
    }

    pub fn target_index(&self, i: usize) -> (usize, usize) {
        locate(&self.target, i)
    }

    pub fn max_abs(&self) -> f64 {
        if self.matrix.is_empty() {
            0.0
        } else {
            self.matrix.amax()
        }
    }
}

fn locate(system: &HaarSystem, i: usize) -> (usize, usize) {
    let cube = system.element(i).cube;
    (cube, i - system.range_of(cube).start)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientWitness {
    pub domain_cube: Cube,
    pub domain_component: usize,
    pub target_cube: Cube,
    pub target_component: usize,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CaseCheck {
    pub pairs: usize,
    pub max_deviation: f64,
    pub witness: Option<CoefficientWitness>,
}

impl CaseCheck {
    fn record(&mut self, value: f64, witness: impl FnOnce() -> CoefficientWitness) {
        self.pairs += 1;
        if value > self.max_deviation {
            self.max_deviation = value;
            self.witness = Some(witness());
        }
    }
}

/// Entrywise comparison of `⟨Π h_Q^μ, h_R^ν⟩` with `⟨T h_Q^μ, h_R^ν⟩`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub radius: u32,
    pub tolerance: f64,
    pub scale: f64,
    /// `ℓ(R) ≥ 2^{-r} ℓ(Q)`: the paraproduct entry vanishes.
    pub coarse: CaseCheck,
    /// `R ⊄ Q`: the paraproduct entry vanishes.
    pub outside: CaseCheck,
    /// `ℓ(R) < 2^{-r} ℓ(Q)`: the paraproduct entry equals the operator entry.
    pub fine: CaseCheck,
}

impl CoefficientReport {
    pub fn passed(&self) -> bool {
        self.max_deviation() <= self.tolerance
    }

    pub fn max_deviation(&self) -> f64 {
        self.coarse
            .max_deviation
            .max(self.outside.max_deviation)
            .max(self.fine.max_deviation)
    }
}

fn witness(c: &HaarCoefficients, i: usize, j: usize, value: f64) -> CoefficientWitness {
    let lattice = c.domain.lattice();
    let (q, qk) = c.domain_index(j);
    let (r, rk) = c.target_index(i);
    CoefficientWitness {
        domain_cube: lattice.cube(q).clone(),
        domain_component: qk,
        target_cube: lattice.cube(r).clone(),
        target_component: rk,
        value,
    }
}

/// Checks the three vanishing/agreement cases for a paraproduct built on the
/// `μ` side. Deviations are relative to the largest coefficient of either
/// operator.
pub fn verify_coefficients(pi: &Paraproduct, t: &InducedOperator, r: u32, tol: f64) -> CoefficientReport {
    let c_pi = HaarCoefficients::new(&pi.matrix, t.mu(), t.nu());
    let c_t = HaarCoefficients::new(&t.matrix(), t.mu(), t.nu());
    let lattice = t.lattice();
    let scale = c_pi.max_abs().max(c_t.max_abs());
    let mut report = CoefficientReport {
        radius: r,
        tolerance: tol,
        scale,
        coarse: CaseCheck::default(),
        outside: CaseCheck::default(),
        fine: CaseCheck::default(),
    };
    let norm = if scale > 0.0 { scale } else { 1.0 };
    for j in 0..c_pi.matrix.ncols() {
        let q = lattice.cube(c_pi.domain_index(j).0);
        for i in 0..c_pi.matrix.nrows() {
            let rc = lattice.cube(c_pi.target_index(i).0);
            let p = c_pi.matrix[(i, j)];
            if rc.level >= q.level - r as i32 {
                let v = p.abs() / norm;
                report.coarse.record(v, || witness(&c_pi, i, j, v));
            } else {
                let v = (p - c_t.matrix[(i, j)]).abs() / norm;
                report.fine.record(v, || witness(&c_pi, i, j, v));
            }
            if !q.contains(rc) {
                let v = p.abs() / norm;
                report.outside.record(v, || witness(&c_pi, i, j, v));
            }
        }
    }
    report
}

/// Haar-coefficient structure of `T_μ - Π^μ - (Π^ν)*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainderReport {
    pub radius: u32,
    pub tolerance: f64,
    pub scale: f64,
    /// Off-band (`|level difference| > r`) entries, relative to `scale`.
    pub off_band: CaseCheck,
    /// Largest in-band entry, unnormalized.
    pub max_in_band: f64,
}

impl RemainderReport {
    pub fn passed(&self) -> bool {
        self.off_band.max_deviation <= self.tolerance
    }
}

pub fn remainder_diagonals(
    t: &InducedOperator,
    pi_mu: &Paraproduct,
    pi_nu: &Paraproduct,
    tol: f64,
) -> RemainderReport {
    let c_t = HaarCoefficients::new(&t.matrix(), t.mu(), t.nu());
    let c_mu = HaarCoefficients::new(&pi_mu.matrix, t.mu(), t.nu());
    let c_nu = HaarCoefficients::new(&pi_nu.matrix, t.nu(), t.mu());
    let scale = c_t.max_abs().max(c_mu.max_abs()).max(c_nu.max_abs());
    let norm = if scale > 0.0 { scale } else { 1.0 };
    let diff = &c_t.matrix - &c_mu.matrix - c_nu.matrix.transpose();
    let lattice = t.lattice();
    let r = pi_mu.radius;
    let mut off_band = CaseCheck::default();
    let mut max_in_band = 0.0f64;
    for j in 0..diff.ncols() {
        let q = lattice.cube(c_t.domain_index(j).0);
        for i in 0..diff.nrows() {
            let rc = lattice.cube(c_t.target_index(i).0);
            let d = diff[(i, j)];
            if (rc.level - q.level).unsigned_abs() > r {
                let v = d.abs() / norm;
                off_band.record(v, || witness(&c_t, i, j, v));
            } else {
                max_in_band = max_in_band.max(d.abs());
            }
        }
    }
    RemainderReport {
        radius: r,
        tolerance: tol,
        scale,
        off_band,
        max_in_band,
    }
}
