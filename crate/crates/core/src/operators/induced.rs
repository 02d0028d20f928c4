use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::BandOperator;
use crate::error::{Error, Result};
use crate::lattice::{Cube, Lattice};
use crate::measure::{GridFunction, MeasureGrid};

/// `T_μ = T M_u` acting `L^2(μ) → L^2(ν)`, stored as a leaf kernel `K` with
/// `T_μ f = K (μ ∘ f)` and `T*_ν g = Kᵀ (ν ∘ g)`.
#[derive(Clone, Debug)]
pub struct InducedOperator {
    lattice: Arc<Lattice>,
    mu: MeasureGrid,
    nu: MeasureGrid,
    kernel: DMatrix<f64>,
    radius: Option<u32>,
    truncated: usize,
}

impl InducedOperator {
    pub fn induce(op: &BandOperator, mu: &MeasureGrid, nu: &MeasureGrid) -> Result<Self> {
        let lattice = op.lattice().clone();
        if **mu.lattice() != *lattice || **nu.lattice() != *lattice {
            return Err(Error::LatticeMismatch);
        }
        Ok(InducedOperator {
            kernel: op.kernel(),
            lattice,
            mu: mu.clone(),
            nu: nu.clone(),
            radius: Some(op.radius()),
            truncated: op.truncated(),
        })
    }

    /// An arbitrary leaf kernel, e.g. a planted non-band operator.
    pub fn from_kernel(kernel: DMatrix<f64>, mu: &MeasureGrid, nu: &MeasureGrid) -> Result<Self> {
        let lattice = mu.lattice().clone();
        if **nu.lattice() != *lattice {
            return Err(Error::LatticeMismatch);
        }
        let n = lattice.n_leaves();
        if kernel.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: kernel.nrows(),
            });
        }
        Ok(InducedOperator {
            lattice,
            mu: mu.clone(),
            nu: nu.clone(),
            kernel,
            radius: None,
            truncated: 0,
        })
    }

    /// The formal adjoint `T*_ν`, itself an induced operator `L^2(ν) → L^2(μ)`.
    pub fn adjoint(&self) -> Self {
        InducedOperator {
            lattice: self.lattice.clone(),
            mu: self.nu.clone(),
            nu: self.mu.clone(),
            kernel: self.kernel.transpose(),
            radius: self.radius,
            truncated: self.truncated,
        }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    /// Domain measure.
    pub fn mu(&self) -> &MeasureGrid {
        &self.mu
    }

    /// Target measure.
    pub fn nu(&self) -> &MeasureGrid {
        &self.nu
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    /// Band radius of the source operator, if any.
    pub fn radius(&self) -> Option<u32> {
        self.radius
    }

    pub fn truncated(&self) -> usize {
        self.truncated
    }

    pub fn apply_values(&self, f: &[f64]) -> Vec<f64> {
        let weighted = DVector::from_vec(self.mu.weighted(f));
        (&self.kernel * weighted).data.into()
    }

    pub fn apply_adjoint_values(&self, g: &[f64]) -> Vec<f64> {
        let weighted = DVector::from_vec(self.nu.weighted(g));
        self.kernel.tr_mul(&weighted).data.into()
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        self.check(f)?;
        GridFunction::new(self.lattice.clone(), self.apply_values(f.values()))
    }

    pub fn apply_adjoint(&self, g: &GridFunction) -> Result<GridFunction> {
        self.check(g)?;
        GridFunction::new(self.lattice.clone(), self.apply_adjoint_values(g.values()))
    }

    fn check(&self, f: &GridFunction) -> Result<()> {
        if **f.lattice() == *self.lattice {
            Ok(())
        } else {
            Err(Error::LatticeMismatch)
        }
    }

    /// `⟨T_μ f, g⟩_ν`.
    pub fn bilinear_form(&self, f: &GridFunction, g: &GridFunction) -> Result<f64> {
        self.check(g)?;
        Ok(self.nu.inner_values(self.apply(f)?.values(), g.values()))
    }

    /// `⟨T_μ χ_Q, χ_R⟩_ν`.
    pub fn bilinear(&self, q: &Cube, r: &Cube) -> Result<f64> {
        let f = GridFunction::indicator(self.lattice.clone(), q)?;
        let g = GridFunction::indicator(self.lattice.clone(), r)?;
        self.bilinear_form(&f, &g)
    }

    /// Leaf matrix of `T_μ`: `K D_μ`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut m = self.kernel.clone();
        for (j, &mass) in self.mu.leaf_masses().iter().enumerate() {
            m.column_mut(j).scale_mut(mass);
        }
        m
    }

    /// `D_ν^{1/2} K D_μ^{1/2}` on positive-mass leaves: an isometric picture
    /// of `T_μ : L^2(μ) → L^2(ν)` whose spectral norm is the operator norm.
    pub fn weighted_matrix(&self) -> DMatrix<f64> {
        let rows: Vec<usize> = positive(&self.nu);
        let cols: Vec<usize> = positive(&self.mu);
        let nu = self.nu.leaf_masses();
        let mu = self.mu.leaf_masses();
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            let (a, b) = (rows[i], cols[j]);
            nu[a].sqrt() * self.kernel[(a, b)] * mu[b].sqrt()
        })
    }

    /// Column `id` holds `T_μ χ_Q` for the active cube with that id.
    pub fn indicator_images(&self) -> DMatrix<f64> {
        let lattice = &self.lattice;
        let n = lattice.n_leaves();
        let first_leaf = lattice.n_interior();
        let mut images = DMatrix::zeros(n, lattice.n_cubes());
        for (leaf, &mass) in self.mu.leaf_masses().iter().enumerate() {
            if mass != 0.0 {
                images
                    .column_mut(first_leaf + leaf)
                    .axpy(mass, &self.kernel.column(leaf), 0.0);
            }
        }
        for id in (0..first_leaf).rev() {
            let kids = lattice.children_ids(id).expect("interior");
            let mut sum = DVector::zeros(n);
            for kid in kids {
                sum += images.column(kid);
            }
            images.set_column(id, &sum);
        }
        images
    }
}

fn positive(m: &MeasureGrid) -> Vec<usize> {
    (0..m.leaf_masses().len())
        .filter(|&i| !m.is_null_leaf(i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::MeasureGenerator;
    use crate::operators::{haar_multiplier, identity, random_band, MultiplierSpec};

    fn line(depth: i32) -> Arc<Lattice> {
        Arc::new(Lattice::new(1, 0, -depth, vec![Cube::unit(1, 0)]).unwrap())
    }

    #[test]
    fn multiplier_on_a_half() {
        let l = line(1);
        let mut alpha = std::collections::BTreeMap::new();
        alpha.insert(Cube::new(0, vec![0]), 1.0);
        let op = haar_multiplier(l.clone(), &MultiplierSpec::from_map(alpha));
        let leb = MeasureGrid::lebesgue(l.clone());
        let t = InducedOperator::induce(&op, &leb, &leb).unwrap();
        let out = t.apply_values(&[1.0, 0.0]);
        assert!((out[0] - 0.5).abs() < 1e-15 && (out[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn full_multiplier_removes_root_average() {
        let l = line(3);
        let op = haar_multiplier(l.clone(), &MultiplierSpec::constant(1.0));
        let leb = MeasureGrid::lebesgue(l.clone());
        let t = InducedOperator::induce(&op, &leb, &leb).unwrap();
        let f: Vec<f64> = (0..8).map(|i| (i * i) as f64).collect();
        let mean = f.iter().sum::<f64>() / 8.0;
        for (a, b) in t.apply_values(&f).iter().zip(&f) {
            assert!((a - (b - mean)).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_induces_density_multiplication() {
        let l = line(3);
        let mu = MeasureGenerator::Lognormal { sigma: 1.0, seed: 1 }.build(l.clone()).unwrap();
        let t = InducedOperator::induce(&identity(l.clone()), &mu, &mu).unwrap();
        let f: Vec<f64> = (0..8).map(|i| i as f64 - 3.0).collect();
        let u = mu.density();
        for ((a, b), ui) in t.apply_values(&f).iter().zip(&f).zip(&u) {
            assert!((a - b * ui).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn adjoint_duality() {
        let l = Arc::new(Lattice::new(2, 0, -2, vec![Cube::unit(2, 0)]).unwrap());
        let mu = MeasureGenerator::ZeroBlocks { fraction: 0.2, seed: 3 }.build(l.clone()).unwrap();
        let nu = MeasureGenerator::Lognormal { sigma: 1.0, seed: 4 }.build(l.clone()).unwrap();
        let t = InducedOperator::induce(&random_band(l.clone(), 1, 3, 1.0, true), &mu, &nu).unwrap();
        let f: Vec<f64> = (0..16).map(|i| (i as f64).sin()).collect();
        let g: Vec<f64> = (0..16).map(|i| (i as f64).cos()).collect();
        let lhs = nu.inner_values(&t.apply_values(&f), &g);
        let rhs = mu.inner_values(&f, &t.apply_adjoint_values(&g));
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn indicator_images_match_direct_application() {
        let l = line(3);
        let mu = MeasureGenerator::Lognormal { sigma: 0.5, seed: 2 }.build(l.clone()).unwrap();
        let t = InducedOperator::induce(&random_band(l.clone(), 2, 8, 1.0, false), &mu, &mu).unwrap();
        let images = t.indicator_images();
        for id in 0..l.n_cubes() {
            let chi = GridFunction::indicator(l.clone(), l.cube(id)).unwrap();
            let direct = t.apply_values(chi.values());
            for (a, b) in images.column(id).iter().zip(&direct) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
