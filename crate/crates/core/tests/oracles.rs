//! Library results against direct computations written out here.

use std::sync::Arc;

use twoweight::analysis::{operator_norm, testing_constants};
use twoweight::generate::MeasureGenerator;
use twoweight::lattice::{Cube, Lattice};
use twoweight::measure::MeasureGrid;
use twoweight::operators::{haar_multiplier, identity, random_band, InducedOperator, MultiplierSpec};
use twoweight::paraproduct::{carleson_constant, embedding_constant, random_sequence};

fn lattice(dim: usize, depth: i32) -> Arc<Lattice> {
    Arc::new(Lattice::new(dim, 0, -depth, vec![Cube::unit(dim, 0)]).unwrap())
}

fn weights(l: &Arc<Lattice>, seed: u64) -> (MeasureGrid, MeasureGrid) {
    let mu = MeasureGenerator::Lognormal { sigma: 1.0, seed }.build(l.clone()).unwrap();
    let nu = MeasureGenerator::ZeroBlocks { fraction: 0.2, seed: seed + 1 }.build(l.clone()).unwrap();
    (mu, nu)
}

/// Largest singular value of a row-major matrix by power iteration on `AᵀA`.
fn power_norm(a: &[Vec<f64>]) -> f64 {
    let cols = a.first().map_or(0, Vec::len);
    let mut x = vec![1.0; cols];
    let mut lambda = 0.0;
    for _ in 0..20_000 {
        let ax: Vec<f64> = a.iter().map(|row| row.iter().zip(&x).map(|(p, q)| p * q).sum()).collect();
        let mut y = vec![0.0; cols];
        for (row, v) in a.iter().zip(&ax) {
            for (yj, aij) in y.iter_mut().zip(row) {
                *yj += aij * v;
            }
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = x.iter().zip(&y).map(|(p, q)| p * q).sum::<f64>() / x.iter().map(|v| v * v).sum::<f64>();
        x = y.into_iter().map(|v| v / norm).collect();
        if (next - lambda).abs() < 1e-15 * next {
            return next.sqrt();
        }
        lambda = next;
    }
    lambda.sqrt()
}

/// Matrix of `T_μ` between orthonormal leaf bases of `L²(μ)` and `L²(ν)`.
fn orthonormal_matrix(t: &InducedOperator) -> Vec<Vec<f64>> {
    let mu = t.mu().leaf_masses();
    let nu = t.nu().leaf_masses();
    let n = mu.len();
    let mut cols = Vec::new();
    for l in (0..n).filter(|&l| mu[l] > 0.0) {
        let mut e = vec![0.0; n];
        e[l] = mu[l].sqrt().recip();
        let image = t.apply_values(&e);
        cols.push((0..n).filter(|&k| nu[k] > 0.0).map(|k| nu[k].sqrt() * image[k]).collect::<Vec<_>>());
    }
    let rows = cols.first().map_or(0, Vec::len);
    (0..rows).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
}

#[test]
fn operator_norm_matches_power_iteration() {
    for (dim, depth, r, seed) in [(1, 5, 1, 3), (2, 3, 2, 4), (1, 4, 0, 5)] {
        let l = lattice(dim, depth);
        let (mu, nu) = weights(&l, seed);
        let op = random_band(l.clone(), r, seed, 1.0, true);
        let t = InducedOperator::induce(&op, &mu, &nu).unwrap();
        let expect = power_norm(&orthonormal_matrix(&t));
        let got = operator_norm(&t);
        assert!((got - expect).abs() <= 1e-9 * expect, "{got} vs {expect}");
    }
}

#[test]
fn identity_induces_multiplication_by_density() {
    let l = lattice(2, 3);
    let (mu, nu) = weights(&l, 8);
    let t = InducedOperator::induce(&identity(l.clone()), &mu, &nu).unwrap();
    let f: Vec<f64> = (0..l.n_leaves()).map(|i| (i as f64 * 0.7).cos()).collect();
    let vol = l.leaf_volume();
    for ((got, m), x) in t.apply_values(&f).iter().zip(mu.leaf_masses()).zip(&f) {
        assert!((got - m / vol * x).abs() < 1e-12);
    }
}

#[test]
fn constant_multiplier_removes_the_lebesgue_mean() {
    let l = lattice(1, 4);
    let (mu, nu) = weights(&l, 2);
    let op = haar_multiplier(l.clone(), &MultiplierSpec::constant(2.5));
    let t = InducedOperator::induce(&op, &mu, &nu).unwrap();
    let f: Vec<f64> = (0..l.n_leaves()).map(|i| 1.0 + (i % 3) as f64).collect();
    let uf: Vec<f64> = f.iter().zip(mu.leaf_masses()).map(|(x, m)| x * m / l.leaf_volume()).collect();
    let mean = uf.iter().sum::<f64>() / uf.len() as f64;
    for (got, v) in t.apply_values(&f).iter().zip(&uf) {
        assert!((got - 2.5 * (v - mean)).abs() < 1e-12);
    }
}

#[test]
fn global_testing_constants_by_indicators() {
    let l = lattice(1, 4);
    let (mu, nu) = weights(&l, 11);
    let t = InducedOperator::induce(&random_band(l.clone(), 1, 6, 1.0, false), &mu, &nu).unwrap();
    let mut direct = 0.0f64;
    let mut adjoint = 0.0f64;
    for cube in l.cubes() {
        let chi: Vec<f64> = l.leaves().iter().map(|leaf| cube.contains(leaf) as u8 as f64).collect();
        let tf = t.apply_values(&chi);
        let m = mu.inner_values(&chi, &chi);
        if m > 0.0 {
            direct = direct.max(nu.inner_values(&tf, &tf) / m);
        }
        let ts = t.apply_adjoint_values(&chi);
        let n = nu.inner_values(&chi, &chi);
        if n > 0.0 {
            adjoint = adjoint.max(mu.inner_values(&ts, &ts) / n);
        }
    }
    let rep = testing_constants(&t, 1);
    assert!((rep.c_direct_global - direct).abs() <= 1e-12 * direct);
    assert!((rep.c_adjoint_global - adjoint).abs() <= 1e-12 * adjoint);
}

#[test]
fn carleson_and_embedding_constants_by_definition() {
    for (dim, depth, seed) in [(1, 5, 1), (2, 2, 2), (1, 3, 3)] {
        let l = lattice(dim, depth);
        let mu = MeasureGenerator::Lognormal { sigma: 1.0, seed }.build(l.clone()).unwrap();
        let a = random_sequence(&mu, seed).scaled(3.0);
        let cubes = l.cubes();
        let masses = mu.leaf_masses();
        let cube_mass = |q: &Cube| -> f64 {
            l.leaves().iter().zip(masses).filter(|(x, _)| q.contains(x)).map(|(_, m)| m).sum()
        };

        let mut packing = 0.0f64;
        for r in cubes {
            let sum: f64 = cubes.iter().zip(a.values()).filter(|(q, _)| r.contains(q)).map(|(_, v)| v).sum();
            packing = packing.max(sum / cube_mass(r));
        }
        let c = carleson_constant(&a, &mu);
        assert!((c - packing).abs() <= 1e-12 * packing, "{c} vs {packing}");

        // Σ_Q a_Q ⟨f⟩_Q² ≤ E ‖f‖² as the square of an operator norm.
        let rows: Vec<Vec<f64>> = cubes
            .iter()
            .zip(a.values())
            .map(|(q, v)| {
                let mq = cube_mass(q);
                l.leaves()
                    .iter()
                    .zip(masses)
                    .map(|(x, m)| if q.contains(x) && mq > 0.0 { v.sqrt() * m.sqrt() / mq } else { 0.0 })
                    .collect()
            })
            .collect();
        let expect = power_norm(&rows).powi(2);
        let got = embedding_constant(&a, &mu);
        assert!((got - expect).abs() <= 1e-9 * expect, "{got} vs {expect}");
        assert!(got <= 4.0 * c * (1.0 + 1e-12));
    }
}
