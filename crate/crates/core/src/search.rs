//! Seeded hill climbing for instances with a large norm-to-testing ratio, and
//! replayable artifacts for the instances it finds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{testing_constants, TestingReport};
use crate::config::{Instance, SearchParams};
use crate::error::Result;
use crate::lattice::LatticeSpec;
use crate::measure::MeasureGrid;
use crate::operators::{BandOperator, Entry, InducedOperator};
use crate::report::{extended_float, SCHEMA_VERSION};
use std::sync::Arc;

/// Self-contained description of an instance; masses in lexicographic leaf order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceRecord {
    pub lattice: LatticeSpec,
    pub r: u32,
    pub band_radius: u32,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub entries: Vec<Entry>,
}

impl InstanceRecord {
    pub fn from_instance(inst: &Instance) -> Self {
        InstanceRecord {
            lattice: inst.lattice.spec(),
            r: inst.r,
            band_radius: inst.operator.radius(),
            mu: inst.lattice.to_lex_order(inst.mu.leaf_masses()),
            nu: inst.lattice.to_lex_order(inst.nu.leaf_masses()),
            entries: inst.operator.entries().collect(),
        }
    }

    pub fn to_instance(&self) -> Result<Instance> {
        let lattice = Arc::new(self.lattice.build()?);
        let mu = MeasureGrid::new(lattice.clone(), lattice.from_lex_order(&self.mu))?;
        let nu = MeasureGrid::new(lattice.clone(), lattice.from_lex_order(&self.nu))?;
        let operator = BandOperator::from_entries(lattice.clone(), self.band_radius, &self.entries)?;
        Ok(Instance {
            lattice,
            mu,
            nu,
            operator,
            r: self.r,
        })
    }
}

pub fn evaluate(inst: &Instance) -> Result<TestingReport> {
    let t = InducedOperator::induce(&inst.operator, &inst.mu, &inst.nu)?;
    Ok(testing_constants(&t, inst.r))
}

/// The best instance of a search, with everything needed to check it later.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub schema_version: u32,
    pub seed: u64,
    pub instance: InstanceRecord,
    pub testing: TestingReport,
    #[serde(with = "extended_float")]
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chain: usize,
    pub accepted: usize,
    #[serde(with = "extended_float")]
    pub rho: f64,
    /// Incumbent ratio after each iteration.
    pub history: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub initial_rho: f64,
    pub chains: Vec<ChainSummary>,
    pub artifact: Artifact,
}

struct Chain {
    summary: ChainSummary,
    best: Instance,
    testing: TestingReport,
}

/// Runs `params.chains` independent hill-climbing chains from `start`. A
/// proposal rescales one leaf mass of `μ` or `ν` by `exp(step Z)` or adds
/// `step Z` to one operator entry; it is kept only if it raises the ratio.
pub fn extremal_search(start: &Instance, params: &SearchParams, seed: u64) -> Result<SearchOutcome> {
    let initial = evaluate(start)?;
    let initial_rho = initial.sufficiency_ratio();
    let chains: Vec<Chain> = (0..params.chains.max(1))
        .into_par_iter()
        .map(|c| run_chain(start, &initial, params, seed, c))
        .collect::<Result<_>>()?;
    // Highest ratio wins; ties go to the lowest chain index.
    let winner = chains
        .iter()
        .enumerate()
        .fold(0, |best, (i, c)| if c.summary.rho > chains[best].summary.rho { i } else { best });
    let artifact = Artifact {
        schema_version: SCHEMA_VERSION,
        seed,
        instance: InstanceRecord::from_instance(&chains[winner].best),
        testing: chains[winner].testing.clone(),
        rho: chains[winner].summary.rho,
    };
    Ok(SearchOutcome {
        initial_rho,
        chains: chains.into_iter().map(|c| c.summary).collect(),
        artifact,
    })
}

fn run_chain(start: &Instance, initial: &TestingReport, params: &SearchParams, seed: u64, chain: usize) -> Result<Chain> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    let mut best = start.clone();
    let mut testing = initial.clone();
    let mut rho = testing.sufficiency_ratio();
    let mut history = Vec::with_capacity(params.iterations);
    let mut accepted = 0;
    for _ in 0..params.iterations {
        let proposal = propose(&best, params.step, &mut rng)?;
        let report = evaluate(&proposal)?;
        let candidate = report.sufficiency_ratio();
        if candidate.is_finite() && candidate > rho {
            best = proposal;
            testing = report;
            rho = candidate;
            accepted += 1;
        }
        history.push(rho);
    }
    Ok(Chain {
        summary: ChainSummary {
            chain,
            accepted,
            rho,
            history,
        },
        best,
        testing,
    })
}

fn propose(inst: &Instance, step: f64, rng: &mut ChaCha8Rng) -> Result<Instance> {
    let mut next = inst.clone();
    let z: f64 = rng.sample(StandardNormal);
    let kind = rng.random_range(0..3);
    match kind {
        0 | 1 => {
            let target = if kind == 0 { &inst.mu } else { &inst.nu };
            let mut masses = target.leaf_masses().to_vec();
            let leaf = rng.random_range(0..masses.len());
            masses[leaf] *= (step * z).exp();
            let grid = MeasureGrid::new(inst.lattice.clone(), masses)?;
            if kind == 0 {
                next.mu = grid;
            } else {
                next.nu = grid;
            }
        }
        _ => {
            if let Some(k) = (!inst.operator.is_empty()).then(|| rng.random_range(0..inst.operator.len())) {
                let e = inst.operator.entries().nth(k).expect("index in range");
                next.operator.insert(e.out, e.input, e.value + step * z)?;
            }
        }
    }
    Ok(next)
}

/// One recomputed quantity that disagrees with the stored value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub name: String,
    #[serde(with = "extended_float")]
    pub stored: f64,
    #[serde(with = "extended_float")]
    pub recomputed: f64,
}

/// Recomputes every constant of a stored instance.
pub fn replay(artifact: &Artifact, tol: f64) -> Result<(TestingReport, Vec<Mismatch>)> {
    let inst = artifact.instance.to_instance()?;
    let fresh = evaluate(&inst)?;
    let s = &artifact.testing;
    let pairs = [
        ("norm", s.norm, fresh.norm),
        ("c_direct_global", s.c_direct_global, fresh.c_direct_global),
        ("c_adjoint_global", s.c_adjoint_global, fresh.c_adjoint_global),
        ("c_direct_local", s.c_direct_local, fresh.c_direct_local),
        ("c_adjoint_local", s.c_adjoint_local, fresh.c_adjoint_local),
        ("c_adjoint_local_nu", s.c_adjoint_local_nu, fresh.c_adjoint_local_nu),
        ("c_diag", s.c_diag, fresh.c_diag),
        ("c_diag_same_cube", s.c_diag_same_cube, fresh.c_diag_same_cube),
        ("rho", artifact.rho, fresh.sufficiency_ratio()),
    ];
    let mismatches = pairs
        .into_iter()
        .filter(|(_, a, b)| !(a == b || (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)))
        .map(|(name, stored, recomputed)| Mismatch {
            name: name.to_string(),
            stored,
            recomputed,
        })
        .collect();
    Ok((fresh, mismatches))
}
