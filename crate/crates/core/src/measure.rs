//! Leaf-resolution measures and functions: the finite model of `L^2(μ)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::haar::HaarSystem;
use crate::lattice::{Cube, Lattice};

/// A real value per leaf cell.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    lattice: Arc<Lattice>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(lattice: Arc<Lattice>, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.n_leaves() {
            return Err(Error::LeafCount {
                expected: lattice.n_leaves(),
                got: values.len(),
            });
        }
        Ok(GridFunction { lattice, values })
    }

    pub fn zeros(lattice: Arc<Lattice>) -> Self {
        let n = lattice.n_leaves();
        GridFunction {
            lattice,
            values: vec![0.0; n],
        }
    }

    pub fn constant(lattice: Arc<Lattice>, value: f64) -> Self {
        let n = lattice.n_leaves();
        GridFunction {
            lattice,
            values: vec![value; n],
        }
    }

    /// `χ_Q` restricted to the lattice; cubes above the top level cover their roots.
    pub fn indicator(lattice: Arc<Lattice>, cube: &Cube) -> Result<Self> {
        let mut values = vec![0.0; lattice.n_leaves()];
        for range in lattice.leaf_ranges(cube)? {
            values[range].fill(1.0);
        }
        Ok(GridFunction { lattice, values })
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    fn check_same(&self, other: &Arc<Lattice>) -> Result<()> {
        if Arc::ptr_eq(&self.lattice, other) || *self.lattice == **other {
            Ok(())
        } else {
            Err(Error::LatticeMismatch)
        }
    }
}

/// Nonnegative mass per leaf with cached subtree sums `μ(Q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureGrid {
    lattice: Arc<Lattice>,
    leaf_mass: Vec<f64>,
    cube_mass: Vec<f64>,
}

/// A single weighted Haar space `H_Q^μ` written out as leaf functions.
#[derive(Clone, Debug)]
pub struct WeightedHaarBasis {
    pub cube: Cube,
    pub functions: Vec<GridFunction>,
}

/// Output of [`MeasureGrid::decompose`]: `f = Σ Δ_Q f + Σ_roots E_R f`.
#[derive(Clone, Debug)]
pub struct MartingaleDecomposition {
    /// `(cube id, Δ_Q^μ f)` for every interior cube.
    pub differences: Vec<(usize, GridFunction)>,
    /// `(root id, E_R^μ f)` for every root.
    pub averages: Vec<(usize, GridFunction)>,
}

impl MartingaleDecomposition {
    pub fn components(&self) -> impl Iterator<Item = &GridFunction> {
        self.differences
            .iter()
            .map(|(_, g)| g)
            .chain(self.averages.iter().map(|(_, g)| g))
    }

    /// Leafwise sum of all components.
    pub fn reassemble(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for g in self.components() {
            if out.is_empty() {
                out = vec![0.0; g.values.len()];
            }
            for (o, v) in out.iter_mut().zip(&g.values) {
                *o += v;
            }
        }
        out
    }
}

impl MeasureGrid {
    pub fn new(lattice: Arc<Lattice>, leaf_mass: Vec<f64>) -> Result<Self> {
        if leaf_mass.len() != lattice.n_leaves() {
            return Err(Error::LeafCount {
                expected: lattice.n_leaves(),
                got: leaf_mass.len(),
            });
        }
        if let Some((index, &value)) = leaf_mass
            .iter()
            .enumerate()
            .find(|(_, m)| !(m.is_finite() && **m >= 0.0))
        {
            return Err(Error::BadMass { index, value });
        }
        let cube_mass = lattice.cube_sums(&leaf_mass);
        Ok(MeasureGrid {
            lattice,
            leaf_mass,
            cube_mass,
        })
    }

    /// Lebesgue measure: every leaf carries its volume, so the density is 1.
    pub fn lebesgue(lattice: Arc<Lattice>) -> Self {
        let masses = vec![lattice.leaf_volume(); lattice.n_leaves()];
        MeasureGrid::new(lattice, masses).expect("volumes are positive")
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn leaf_masses(&self) -> &[f64] {
        &self.leaf_mass
    }

    /// `μ(Q)` for an active cube id.
    pub fn mass_of(&self, id: usize) -> f64 {
        self.cube_mass[id]
    }

    pub fn cube_masses(&self) -> &[f64] {
        &self.cube_mass
    }

    /// `μ(Q)` for any cube at or above leaf resolution; zero outside the support.
    pub fn mass(&self, cube: &Cube) -> Result<f64> {
        if let Some(id) = self.lattice.id_of(cube) {
            return Ok(self.cube_mass[id]);
        }
        Ok(self
            .lattice
            .leaf_ranges(cube)?
            .into_iter()
            .map(|r| self.leaf_mass[r].iter().sum::<f64>())
            .sum())
    }

    /// Leaf density `mass / volume`.
    pub fn density(&self) -> Vec<f64> {
        let vol = self.lattice.leaf_volume();
        self.leaf_mass.iter().map(|m| m / vol).collect()
    }

    /// `mass ∘ f`, the vector whose plain sums are `μ`-integrals.
    pub fn weighted(&self, f: &[f64]) -> Vec<f64> {
        f.iter().zip(&self.leaf_mass).map(|(x, m)| x * m).collect()
    }

    pub fn is_null_leaf(&self, leaf: usize) -> bool {
        self.leaf_mass[leaf] == 0.0
    }

    pub fn inner(&self, f: &GridFunction, g: &GridFunction) -> Result<f64> {
        f.check_same(&self.lattice)?;
        g.check_same(&self.lattice)?;
        Ok(self.inner_values(&f.values, &g.values))
    }

    pub fn inner_values(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter()
            .zip(g)
            .zip(&self.leaf_mass)
            .map(|((a, b), m)| a * b * m)
            .sum()
    }

    pub fn norm_sq(&self, f: &GridFunction) -> Result<f64> {
        self.inner(f, f)
    }

    /// `E_Q^μ f` as a number: `μ(Q)^{-1} ∫_Q f dμ`, or 0 on a null cube.
    pub fn average(&self, f: &GridFunction, cube: &Cube) -> Result<f64> {
        f.check_same(&self.lattice)?;
        let mut integral = 0.0;
        let mut mass = 0.0;
        for range in self.lattice.leaf_ranges(cube)? {
            for leaf in range {
                integral += f.values[leaf] * self.leaf_mass[leaf];
                mass += self.leaf_mass[leaf];
            }
        }
        Ok(if mass > 0.0 { integral / mass } else { 0.0 })
    }

    /// Averages over every active cube, from precomputed sums of `mass ∘ f`.
    pub fn averages_from_sums(&self, weighted_sums: &[f64]) -> Vec<f64> {
        weighted_sums
            .iter()
            .zip(&self.cube_mass)
            .map(|(s, m)| if *m > 0.0 { s / m } else { 0.0 })
            .collect()
    }

    /// `Δ_Q^μ f`: on each child `c`, `E_c f - E_Q f`; zero off `Q`.
    pub fn martingale_difference(&self, f: &GridFunction, cube: &Cube) -> Result<GridFunction> {
        f.check_same(&self.lattice)?;
        let id = self.lattice.require(cube)?;
        if self.lattice.is_leaf(id) {
            return Err(Error::LeafCube(cube.clone()));
        }
        let sums = self.lattice.cube_sums(&self.weighted(&f.values));
        let avg = self.averages_from_sums(&sums);
        let mut values = vec![0.0; self.lattice.n_leaves()];
        self.fill_difference(id, &avg, &mut values);
        GridFunction::new(self.lattice.clone(), values)
    }

    pub(crate) fn fill_difference(&self, id: usize, averages: &[f64], out: &mut [f64]) {
        for kid in self.lattice.children_ids(id).expect("interior cube") {
            let d = averages[kid] - averages[id];
            for leaf in self.lattice.leaf_range(kid) {
                out[leaf] = d;
            }
        }
    }

    /// Orthonormal basis of `H_Q^μ`; empty when at most one child has mass.
    pub fn haar_basis(&self, cube: &Cube) -> Result<WeightedHaarBasis> {
        let id = self.lattice.require(cube)?;
        if self.lattice.is_leaf(id) {
            return Err(Error::LeafCube(cube.clone()));
        }
        let system = self.haar_system();
        let functions = system
            .range_of(id)
            .map(|i| GridFunction::new(self.lattice.clone(), system.element_vector(i)))
            .collect::<Result<_>>()?;
        Ok(WeightedHaarBasis {
            cube: cube.clone(),
            functions,
        })
    }

    /// The full weighted Haar system over all interior cubes.
    pub fn haar_system(&self) -> HaarSystem {
        HaarSystem::weighted(self.lattice.clone(), &self.leaf_mass)
    }

    pub fn decompose(&self, f: &GridFunction) -> Result<MartingaleDecomposition> {
        f.check_same(&self.lattice)?;
        let lattice = &self.lattice;
        let sums = lattice.cube_sums(&self.weighted(&f.values));
        let avg = self.averages_from_sums(&sums);
        let mut differences = Vec::with_capacity(lattice.n_interior());
        for id in 0..lattice.n_interior() {
            let mut values = vec![0.0; lattice.n_leaves()];
            self.fill_difference(id, &avg, &mut values);
            differences.push((id, GridFunction::new(lattice.clone(), values)?));
        }
        let mut averages = Vec::new();
        for id in lattice.ids_at_depth(0) {
            let mut values = vec![0.0; lattice.n_leaves()];
            values[lattice.leaf_range(id)].fill(avg[id]);
            averages.push((id, GridFunction::new(lattice.clone(), values)?));
        }
        Ok(MartingaleDecomposition {
            differences,
            averages,
        })
    }

    /// `Σ_roots E_R^μ f` as a leaf vector.
    pub fn root_average_part(&self, f: &[f64]) -> Vec<f64> {
        let lattice = &self.lattice;
        let mut out = vec![0.0; f.len()];
        for id in lattice.ids_at_depth(0) {
            let range = lattice.leaf_range(id);
            let mass = self.cube_mass[id];
            let avg = if mass > 0.0 {
                range.clone().map(|i| f[i] * self.leaf_mass[i]).sum::<f64>() / mass
            } else {
                0.0
            };
            out[range].fill(avg);
        }
        out
    }

    pub fn scaled(&self, factors: &[f64]) -> Result<MeasureGrid> {
        let masses = self
            .leaf_mass
            .iter()
            .zip(factors)
            .map(|(m, s)| m * s)
            .collect();
        MeasureGrid::new(self.lattice.clone(), masses)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(depth: i32) -> Arc<Lattice> {
        Arc::new(Lattice::new(1, 0, -depth, vec![Cube::unit(1, 0)]).unwrap())
    }

    fn func(l: &Arc<Lattice>, v: &[f64]) -> GridFunction {
        GridFunction::new(l.clone(), v.to_vec()).unwrap()
    }

    #[test]
    fn masses() {
        let l = line(3);
        let mu = MeasureGrid::new(l.clone(), vec![1.0; 8]).unwrap();
        assert_eq!(mu.mass(&Cube::unit(1, 0)).unwrap(), 8.0);
        let zero = MeasureGrid::new(l.clone(), vec![0.0; 8]).unwrap();
        assert!(zero.cube_masses().iter().all(|&m| m == 0.0));
        let l2 = line(2);
        let mu = MeasureGrid::new(l2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(mu.mass(&Cube::new(-1, vec![0])).unwrap(), 3.0);
        assert_eq!(mu.mass(&Cube::new(0, vec![5])).unwrap(), 0.0);
        assert_eq!(mu.mass(&Cube::new(3, vec![0])).unwrap(), 10.0);
    }

    #[test]
    fn rejects_negative_mass() {
        assert!(matches!(
            MeasureGrid::new(line(1), vec![1.0, -1.0]),
            Err(Error::BadMass { index: 1, .. })
        ));
        assert!(MeasureGrid::new(line(1), vec![1.0]).is_err());
    }

    #[test]
    fn averages() {
        let l = line(1);
        let root = Cube::unit(1, 0);
        let f = func(&l, &[1.0, 3.0]);
        let mu = MeasureGrid::new(l.clone(), vec![0.5, 0.5]).unwrap();
        assert_eq!(mu.average(&f, &root).unwrap(), 2.0);
        let mu = MeasureGrid::new(l.clone(), vec![1.0, 3.0]).unwrap();
        assert_eq!(mu.average(&f, &root).unwrap(), 2.5);
        let null = MeasureGrid::new(l, vec![0.0, 0.0]).unwrap();
        assert_eq!(null.average(&f, &root).unwrap(), 0.0);
    }

    #[test]
    fn martingale_differences() {
        let l = line(1);
        let root = Cube::unit(1, 0);
        let mu = MeasureGrid::new(l.clone(), vec![0.5, 0.5]).unwrap();
        let d = mu.martingale_difference(&func(&l, &[1.0, 3.0]), &root).unwrap();
        assert_eq!(d.values(), &[-1.0, 1.0]);
        let d = mu.martingale_difference(&func(&l, &[4.0, 4.0]), &root).unwrap();
        assert_eq!(d.values(), &[0.0, 0.0]);

        let mu = MeasureGrid::new(l.clone(), vec![1.0, 3.0]).unwrap();
        let d = mu.martingale_difference(&func(&l, &[1.0, 3.0]), &root).unwrap();
        assert_eq!(d.values(), &[-1.5, 0.5]);
        assert_eq!(mu.inner(&d, &GridFunction::constant(l.clone(), 1.0)).unwrap(), 0.0);

        let leaf = Cube::new(-1, vec![0]);
        assert!(matches!(
            mu.martingale_difference(&func(&l, &[1.0, 3.0]), &leaf),
            Err(Error::LeafCube(_))
        ));
    }

    #[test]
    fn haar_basis_examples() {
        let l = line(1);
        let root = Cube::unit(1, 0);
        let mu = MeasureGrid::new(l.clone(), vec![0.5, 0.5]).unwrap();
        let basis = mu.haar_basis(&root).unwrap();
        assert_eq!(basis.functions.len(), 1);
        assert_eq!(basis.functions[0].values(), &[-1.0, 1.0]);

        let mu = MeasureGrid::new(l, vec![0.0, 2.0]).unwrap();
        assert!(mu.haar_basis(&root).unwrap().functions.is_empty());

        let sq = Arc::new(Lattice::new(2, 0, -1, vec![Cube::unit(2, 0)]).unwrap());
        let mu = MeasureGrid::new(sq, vec![1.0, 2.0, 0.5, 0.25]).unwrap();
        assert_eq!(mu.haar_basis(&Cube::unit(2, 0)).unwrap().functions.len(), 3);
    }

    #[test]
    fn lebesgue_basis_is_classical_haar() {
        let l = line(3);
        let mu = MeasureGrid::lebesgue(l.clone());
        let classical = HaarSystem::unweighted(l.clone());
        let weighted = mu.haar_system();
        assert_eq!(classical.len(), weighted.len());
        for i in 0..classical.len() {
            let a = classical.element_vector(i);
            let b = weighted.element_vector(i);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inner_products() {
        let l = line(1);
        let mu = MeasureGrid::new(l.clone(), vec![1.0, 3.0]).unwrap();
        assert_eq!(mu.inner(&func(&l, &[1.0, 0.0]), &func(&l, &[1.0, 1.0])).unwrap(), 1.0);
        let l4 = line(2);
        let unit = MeasureGrid::new(l4.clone(), vec![1.0; 4]).unwrap();
        let chi = GridFunction::indicator(l4.clone(), &Cube::new(-1, vec![1])).unwrap();
        assert_eq!(unit.inner(&chi, &chi).unwrap(), 2.0);
        let other = line(3);
        assert!(matches!(
            unit.inner(&chi, &GridFunction::zeros(other)),
            Err(Error::LatticeMismatch)
        ));
    }

    #[test]
    fn constant_function_has_only_root_average() {
        let l = line(3);
        let mu = MeasureGrid::new(l.clone(), vec![0.3, 1.0, 0.0, 2.0, 0.5, 0.5, 1.0, 4.0]).unwrap();
        let f = GridFunction::constant(l, 2.5);
        let dec = mu.decompose(&f).unwrap();
        // Null cells average to 0, so only the norm of each difference vanishes.
        for (_, d) in &dec.differences {
            assert!(mu.norm_sq(d).unwrap() < 1e-28);
        }
        assert!(dec.averages[0].1.values().iter().all(|v| (v - 2.5).abs() < 1e-15));
    }
}
