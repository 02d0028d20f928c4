//! Haar systems on a lattice: the classical (Lebesgue) tensor-product system and
//! the weighted systems `H_Q^μ` of a measure.
//!
//! Every element lives on one interior cube and is constant on its children,
//! so it is stored as `2^N` child values. Analysis and synthesis run in
//! `O(n · depth)` through [`Lattice::cube_sums`].

use std::ops::Range;
use std::sync::Arc;

use crate::lattice::Lattice;

#[derive(Clone, Debug, PartialEq)]
pub struct HaarElement {
    /// Id of the supporting cube.
    pub cube: usize,
    /// Value on each child, in child order.
    pub child_values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct HaarSystem {
    lattice: Arc<Lattice>,
    elements: Vec<HaarElement>,
    by_cube: Vec<Range<usize>>,
}

impl HaarSystem {
    /// Tensor-product Haar functions normalized in unweighted `L^2`.
    ///
    /// Component `k` uses the sign pattern `ε = k + 1`: on the child with
    /// half-selectors `b`, the value is `|Q|^{-1/2} Π_{ε_d = 1} (2 b_d - 1)`.
    /// In one dimension this is `|I|^{-1/2}(χ_{I+} - χ_{I-})`.
    pub fn unweighted(lattice: Arc<Lattice>) -> Self {
        let n = lattice.dim();
        let b = lattice.branching();
        let mut groups = Vec::with_capacity(lattice.n_interior());
        for id in 0..lattice.n_interior() {
            let scale = lattice.volume(lattice.cube(id)).sqrt().recip();
            let elements = (1..b)
                .map(|eps| {
                    let child_values = (0..b)
                        .map(|c| {
                            let odd = (0..n)
                                .filter(|&d| (eps >> (n - 1 - d)) & 1 == 1)
                                .filter(|&d| (c >> (n - 1 - d)) & 1 == 0)
                                .count();
                            if odd % 2 == 0 {
                                scale
                            } else {
                                -scale
                            }
                        })
                        .collect();
                    HaarElement {
                        cube: id,
                        child_values,
                    }
                })
                .collect();
            groups.push(elements);
        }
        Self::from_groups(lattice, groups)
    }

    /// Orthonormal `μ`-Haar functions for the given leaf masses.
    ///
    /// Children of positive mass `c_0, c_1, …` are taken in order; element `k`
    /// splits `c_k` from `c_0 ∪ … ∪ c_{k-1}`, negative on the earlier block and
    /// positive on `c_k`. This is Gram–Schmidt in `L^2(μ)` applied to
    /// `χ_{c_k}/μ(c_k) - χ_{c_0}/μ(c_0)`, `k = 1, 2, …`.
    pub fn weighted(lattice: Arc<Lattice>, leaf_mass: &[f64]) -> Self {
        let mass = lattice.cube_sums(leaf_mass);
        let b = lattice.branching();
        let mut groups = Vec::with_capacity(lattice.n_interior());
        for id in 0..lattice.n_interior() {
            let kids = lattice.children_ids(id).expect("interior cube");
            let first = kids.start;
            let positive: Vec<usize> = (0..b).filter(|&c| mass[first + c] > 0.0).collect();
            let mut elements = Vec::new();
            let mut earlier = 0.0;
            for (k, &c) in positive.iter().enumerate() {
                let mk = mass[first + c];
                if k > 0 {
                    let norm = (mk * earlier * (earlier + mk)).sqrt();
                    let mut child_values = vec![0.0; b];
                    for &e in &positive[..k] {
                        child_values[e] = -mk / norm;
                    }
                    child_values[c] = earlier / norm;
                    elements.push(HaarElement {
                        cube: id,
                        child_values,
                    });
                }
                earlier += mk;
            }
            groups.push(elements);
        }
        Self::from_groups(lattice, groups)
    }

    fn from_groups(lattice: Arc<Lattice>, groups: Vec<Vec<HaarElement>>) -> Self {
        let mut elements = Vec::new();
        let mut by_cube = Vec::with_capacity(groups.len());
        for group in groups {
            let start = elements.len();
            elements.extend(group);
            by_cube.push(start..elements.len());
        }
        HaarSystem {
            lattice,
            elements,
            by_cube,
        }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[HaarElement] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &HaarElement {
        &self.elements[i]
    }

    /// Element indices supported on an interior cube (empty for leaves).
    pub fn range_of(&self, cube_id: usize) -> Range<usize> {
        self.by_cube.get(cube_id).cloned().unwrap_or(0..0)
    }

    /// Plain sums `Σ_leaves h_i · v` for every element. Pass `mass ∘ f` to get
    /// weighted inner products.
    pub fn analyze(&self, v: &[f64]) -> Vec<f64> {
        let sums = self.lattice.cube_sums(v);
        self.coefficients_from_sums(&sums)
    }

    /// Same as [`analyze`](Self::analyze) given precomputed cube sums.
    pub fn coefficients_from_sums(&self, sums: &[f64]) -> Vec<f64> {
        self.elements
            .iter()
            .map(|e| {
                let first = self.lattice.children_ids(e.cube).expect("interior").start;
                e.child_values
                    .iter()
                    .enumerate()
                    .map(|(c, w)| w * sums[first + c])
                    .sum()
            })
            .collect()
    }

    /// `Σ_i c_i h_i` as a leaf vector.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let lattice = &self.lattice;
        // Push each element's contribution down as a per-cube constant.
        let mut level_values = vec![0.0; lattice.n_cubes()];
        for (e, &c) in self.elements.iter().zip(coeffs) {
            if c == 0.0 {
                continue;
            }
            let first = lattice.children_ids(e.cube).expect("interior").start;
            for (k, w) in e.child_values.iter().enumerate() {
                level_values[first + k] += c * w;
            }
        }
        for id in 0..lattice.n_interior() {
            let v = level_values[id];
            if v != 0.0 {
                let kids = lattice.children_ids(id).expect("interior");
                for kid in kids {
                    level_values[kid] += v;
                }
            }
        }
        level_values[lattice.n_interior()..].to_vec()
    }

    /// Leaf vector of a single element.
    pub fn element_vector(&self, i: usize) -> Vec<f64> {
        let lattice = &self.lattice;
        let e = &self.elements[i];
        let mut out = vec![0.0; lattice.n_leaves()];
        for (c, kid) in lattice.children_ids(e.cube).expect("interior").enumerate() {
            for leaf in lattice.leaf_range(kid) {
                out[leaf] = e.child_values[c];
            }
        }
        out
    }
}
