use serde::{Deserialize, Serialize};

use super::InducedOperator;
use crate::lattice::Cube;

/// A pairing `⟨T χ_Q, h_R⟩` that should vanish but does not.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationWitness {
    pub indicator: Cube,
    pub haar: Cube,
    /// Index of the weighted Haar function within `H_R`.
    pub component: usize,
    /// Value after scaling to unit max pairing.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangularCheck {
    /// Largest `|⟨T χ_Q, h_R⟩|` over scanned pairs; the normalization scale.
    pub scale: f64,
    pub max_violation: f64,
    pub flagged_pairs: usize,
    pub witness: Option<LocalizationWitness>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub radius: u32,
    pub tolerance: f64,
    pub direct: TriangularCheck,
    pub adjoint: TriangularCheck,
}

impl LocalizationReport {
    pub fn passed(&self) -> bool {
        self.direct.max_violation <= self.tolerance && self.adjoint.max_violation <= self.tolerance
    }

    pub fn max_violation(&self) -> f64 {
        self.direct.max_violation.max(self.adjoint.max_violation)
    }
}

/// Whether `⟨T χ_Q, h_R⟩` must vanish for a lower triangularly localized
/// operator with radius `r`; assumes `ℓ(R) ≤ ℓ(Q)`.
pub fn must_vanish(q: &Cube, haar: &Cube, r: u32) -> bool {
    !q.ancestor(r).contains(haar) || (haar.level <= q.level - r as i32 && !q.contains(haar))
}

/// Scans `⟨T_μ χ_Q, h_R^ν⟩_ν` over all active `Q` and all weighted Haar
/// functions on interior `R` with `ℓ(R) ≤ ℓ(Q)`, and the same for `T*_ν` with
/// `μ`-Haar functions.
pub fn check_well_localized(t: &InducedOperator, r: u32, tol: f64) -> LocalizationReport {
    LocalizationReport {
        radius: r,
        tolerance: tol,
        direct: lower_triangular(t, r),
        adjoint: lower_triangular(&t.adjoint(), r),
    }
}

fn lower_triangular(t: &InducedOperator, r: u32) -> TriangularCheck {
    let lattice = t.lattice();
    let nu = t.nu();
    let system = nu.haar_system();
    let images = t.indicator_images();
    let mut scale = 0.0f64;
    let mut flagged = Vec::new();
    for q_id in 0..lattice.n_cubes() {
        let q = lattice.cube(q_id);
        let weighted = nu.weighted(images.column(q_id).as_slice());
        let coeffs = system.coefficients_from_sums(&lattice.cube_sums(&weighted));
        for r_id in 0..lattice.n_interior() {
            let haar = lattice.cube(r_id);
            if haar.level > q.level {
                continue;
            }
            let bad = must_vanish(q, haar, r);
            let range = system.range_of(r_id);
            let start = range.start;
            for i in range {
                let v = coeffs[i].abs();
                scale = scale.max(v);
                if bad {
                    flagged.push((v, q_id, r_id, i - start));
                }
            }
        }
    }
    let flagged_pairs = flagged.len();
    let mut max_violation = 0.0;
    let mut witness = None;
    if scale > 0.0 {
        for (v, q_id, r_id, component) in flagged {
            let v = v / scale;
            if v > max_violation {
                max_violation = v;
                witness = Some(LocalizationWitness {
                    indicator: lattice.cube(q_id).clone(),
                    haar: lattice.cube(r_id).clone(),
                    component,
                    value: v,
                });
            }
        }
    }
    TriangularCheck {
        scale,
        max_violation,
        flagged_pairs,
        witness,
    }
}
