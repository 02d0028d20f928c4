//! Suite runners shared by the command line and the integration tests.

use std::ops::Range;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::analysis::{operator_norm, testing_constants, Decomposition, TestingReport};
use crate::config::{Cell, Instance, RunConfig, SuiteName, Tolerances};
use crate::error::Result;
use crate::generate::MeasureGenerator;
use crate::lattice::{Cube, Lattice};
use crate::measure::{GridFunction, MeasureGrid};
use crate::operators::{check_band, check_well_localized, random_band, InducedOperator};
use crate::paraproduct::{
    build_lifted, build_paraproduct, carleson_constant, carleson_sequence, embedding_constant, greedy_table,
    verify_coefficients, random_sequence, remainder_diagonals, IndicatorChoice, Side,
};
use crate::report::{Check, Report, Table};
use crate::search::{extremal_search, replay};

/// Parameters of the randomized instance family.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Family {
    /// Log-normal shape of both weights.
    pub sigma: f64,
    /// When positive, each weight has null blocks covering this fraction
    /// with probability one half.
    pub zero_fraction: f64,
    pub amplitude: f64,
    pub root_blocks: bool,
}

impl Family {
    /// Log-normal weights with unit shape and a unit-amplitude band operator.
    pub fn lognormal() -> Self {
        Family {
            sigma: 1.0,
            zero_fraction: 0.0,
            amplitude: 1.0,
            root_blocks: false,
        }
    }

    /// Adds null blocks and root blocks to [`lognormal`](Self::lognormal).
    pub fn degenerate() -> Self {
        Family {
            zero_fraction: 0.25,
            root_blocks: true,
            ..Self::lognormal()
        }
    }
}

pub fn unit_lattice(dim: usize, depth: u32) -> Result<Arc<Lattice>> {
    Ok(Arc::new(Lattice::new(dim, 0, -(depth as i32), vec![Cube::unit(dim, 0)])?))
}

/// Deterministic random instance on a given lattice.
pub fn random_instance_on(lattice: Arc<Lattice>, r: u32, seed: u64, family: &Family) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weight = |rng: &mut ChaCha8Rng| -> Result<MeasureGrid> {
        let seed = rng.random();
        let blocks = family.zero_fraction > 0.0 && rng.random_bool(0.5);
        let generator = if blocks {
            MeasureGenerator::ZeroBlocks {
                fraction: family.zero_fraction,
                seed,
            }
        } else {
            MeasureGenerator::Lognormal {
                sigma: family.sigma,
                seed,
            }
        };
        generator.build(lattice.clone())
    };
    let mu = weight(&mut rng)?;
    let nu = weight(&mut rng)?;
    let operator = random_band(lattice.clone(), r, rng.random(), family.amplitude, family.root_blocks);
    Ok(Instance {
        lattice,
        mu,
        nu,
        operator,
        r,
    })
}

pub fn random_instance(cell: Cell, seed: u64, family: &Family) -> Result<Instance> {
    random_instance_on(unit_lattice(cell.dim, cell.depth)?, cell.r, seed, family)
}

pub fn gaussian_vector(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// `|‖f‖² - Σ ‖components‖²| / ‖f‖²` for the martingale decomposition.
pub fn parseval_residual(mu: &MeasureGrid, f: &[f64]) -> Result<f64> {
    let g = GridFunction::new(mu.lattice().clone(), f.to_vec())?;
    let dec = mu.decompose(&g)?;
    let total = mu.inner_values(f, f);
    let parts: f64 = dec.components().map(|c| mu.inner_values(c.values(), c.values())).sum();
    Ok(if total > 0.0 {
        (total - parts).abs() / total
    } else {
        parts
    })
}

/// Every structural check on one instance.
#[derive(Clone, Debug, Serialize)]
pub struct InstanceChecks {
    pub parseval: f64,
    pub band: f64,
    pub duality: f64,
    pub well_localized: f64,
    pub coefficient: f64,
    pub replacement: f64,
    pub remainder_off_band: f64,
    /// Largest in-band remainder entry over `2^N C_diag`.
    pub remainder_in_band: f64,
    /// Relative excess of `Σ_{Q ⊂ R} a_Q` over `‖χ_R T_μ χ_R‖²_ν`.
    pub carleson_packing: f64,
    /// `embedding / (4 · carleson)`.
    pub embedding_ratio: f64,
    pub necessity: f64,
    pub norm_duality: f64,
    pub decomposition: f64,
    pub testing: TestingReport,
}

pub fn check_instance(inst: &Instance, seed: u64, tol: &Tolerances) -> Result<InstanceChecks> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = inst.lattice.n_leaves();
    let r = inst.r;
    let t = InducedOperator::induce(&inst.operator, &inst.mu, &inst.nu)?;
    let f = gaussian_vector(&mut rng, n);
    let g = gaussian_vector(&mut rng, n);

    let parseval = parseval_residual(&inst.mu, &f)?.max(parseval_residual(&inst.nu, &g)?);
    let band = check_band(&inst.operator, inst.operator.radius(), tol.zero).max_violation;

    let lhs = inst.nu.inner_values(&t.apply_values(&f), &g);
    let rhs = inst.mu.inner_values(&f, &t.apply_adjoint_values(&g));
    let scale = (inst.mu.inner_values(&f, &f) * inst.nu.inner_values(&g, &g)).sqrt();
    let duality = if scale > 0.0 { (lhs - rhs).abs() / scale } else { 0.0 };

    let well_localized = check_well_localized(&t, r, tol.zero).max_violation();

    let pi_mu = build_paraproduct(&t, r, Side::Mu)?;
    let pi_nu = build_paraproduct(&t, r, Side::Nu)?;
    let coefficient = verify_coefficients(&pi_mu, &t, r, tol.coefficient).max_deviation();
    let lifted = build_lifted(&t, r, Side::Mu, 1)?;
    let pi_scale = pi_mu.matrix.amax();
    let replacement = if pi_scale > 0.0 {
        (&lifted.matrix - &pi_mu.matrix).amax() / pi_scale
    } else {
        lifted.matrix.amax()
    };
    let remainder = remainder_diagonals(&t, &pi_mu, &pi_nu, tol.zero);

    let testing = testing_constants(&t, r);
    let bound = (1u64 << inst.lattice.dim()) as f64 * testing.c_diag;
    let remainder_in_band = if remainder.max_in_band == 0.0 {
        0.0
    } else {
        remainder.max_in_band / bound
    };

    let a = carleson_sequence(&t, r, IndicatorChoice::Outer)?;
    let sums = a.subtree_sums();
    let images = t.indicator_images();
    let nu_mass = inst.nu.leaf_masses();
    let mut carleson_packing = f64::NEG_INFINITY;
    for id in 0..inst.lattice.n_cubes() {
        let local: f64 = inst
            .lattice
            .leaf_range(id)
            .map(|l| images[(l, id)].powi(2) * nu_mass[l])
            .sum();
        let excess = (sums[id] - local) / local.max(f64::MIN_POSITIVE);
        carleson_packing = carleson_packing.max(if sums[id] == 0.0 { 0.0 } else { excess });
    }
    let carleson = carleson_constant(&a, &inst.mu);
    let embedding = embedding_constant(&a, &inst.mu);
    let embedding_ratio = if embedding == 0.0 { 0.0 } else { embedding / (4.0 * carleson) };

    let necessity = testing.necessity_excess() / testing.norm.max(1.0);
    let adjoint_norm = operator_norm(&t.adjoint());
    let norm_duality = if testing.norm > 0.0 {
        (testing.norm - adjoint_norm).abs() / testing.norm
    } else {
        adjoint_norm
    };
    let decomposition = Decomposition::new(&t, r)?.evaluate(&f, &g).residual;

    Ok(InstanceChecks {
        parseval,
        band,
        duality,
        well_localized,
        coefficient,
        replacement,
        remainder_off_band: remainder.off_band.max_deviation,
        remainder_in_band,
        carleson_packing,
        embedding_ratio,
        necessity,
        norm_duality,
        decomposition,
        testing,
    })
}

/// Testing reports for one cell over a seed range, in seed order.
pub fn ratio_rows(cell: Cell, seeds: Range<u64>, family: &Family) -> Result<Vec<(u64, TestingReport)>> {
    seeds
        .into_par_iter()
        .map(|seed| {
            let inst = random_instance(cell, seed, family)?;
            Ok((seed, crate::search::evaluate(&inst)?))
        })
        .collect()
}

pub const RATIO_COLUMNS: [&str; 9] = [
    "N",
    "r",
    "depth",
    "seed",
    "norm",
    "C_direct_local",
    "C_adjoint_local",
    "C_diag",
    "rho",
];

pub fn ratio_row(cell: Cell, seed: u64, t: &TestingReport) -> Vec<f64> {
    vec![
        cell.dim as f64,
        cell.r as f64,
        cell.depth as f64,
        seed as f64,
        t.norm,
        t.c_direct_local,
        t.c_adjoint_local,
        t.c_diag,
        t.sufficiency_ratio(),
    ]
}

/// Runs one suite on a validated config.
pub fn run(config: &RunConfig, suite: SuiteName, seed: u64) -> Result<Report> {
    let inst = config.instance()?;
    let mut report = Report::new(suite.as_str(), seed);
    report.result("config", config);
    match suite {
        SuiteName::Verify => verify(config, &inst, seed, &mut report)?,
        SuiteName::Testing => testing(config, &inst, seed, &mut report)?,
        SuiteName::Carleson => carleson(config, &inst, seed, &mut report)?,
        SuiteName::Search => search(config, &inst, seed, &mut report)?,
        SuiteName::Decompose => decompose(config, &inst, seed, &mut report)?,
    }
    Ok(report)
}

fn companions(config: &RunConfig, inst: &Instance, seed: u64) -> Result<Vec<Instance>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![inst.clone()];
    for _ in 0..config.sweep.instances {
        out.push(random_instance_on(inst.lattice.clone(), inst.r, rng.random(), &Family::degenerate())?);
    }
    Ok(out)
}

fn verify(config: &RunConfig, inst: &Instance, seed: u64, report: &mut Report) -> Result<()> {
    let tol = &config.tolerances;
    let instances = companions(config, inst, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let all: Vec<InstanceChecks> = instances
        .iter()
        .map(|i| check_instance(i, rng.random(), tol))
        .collect::<Result<_>>()?;
    let worst = |f: fn(&InstanceChecks) -> f64| all.iter().map(f).fold(0.0f64, f64::max);
    report.check(Check::at_most("parseval", worst(|c| c.parseval), tol.identity));
    report.check(Check::at_most("band_structure", worst(|c| c.band), tol.zero));
    report.check(Check::at_most("adjoint_duality", worst(|c| c.duality), tol.identity));
    report.check(Check::at_most("well_localized", worst(|c| c.well_localized), tol.zero));
    report.check(Check::at_most("paraproduct_coefficients", worst(|c| c.coefficient), tol.coefficient));
    report.check(Check::at_most("indicator_replacement", worst(|c| c.replacement), tol.zero));
    report.check(Check::at_most("remainder_off_band", worst(|c| c.remainder_off_band), tol.zero));
    report.check(Check::at_most(
        "remainder_in_band_bound",
        worst(|c| c.remainder_in_band),
        1.0 + tol.necessity,
    ));
    report.check(Check::at_most("carleson_packing", worst(|c| c.carleson_packing), tol.identity));
    report.check(Check::at_most("carleson_embedding", worst(|c| c.embedding_ratio), 1.0 + tol.necessity));
    report.check(Check::at_most("necessity", worst(|c| c.necessity), tol.necessity));
    report.check(Check::at_most("norm_duality", worst(|c| c.norm_duality), tol.identity));
    report.check(Check::at_most("decomposition_identity", worst(|c| c.decomposition), tol.identity));
    report.result("instances", &all);
    let truncated = inst.operator.truncated();
    report.result("truncated_terms", &truncated);
    Ok(())
}

fn testing(config: &RunConfig, inst: &Instance, _seed: u64, report: &mut Report) -> Result<()> {
    let tol = &config.tolerances;
    let configured = crate::search::evaluate(inst)?;
    let mut worst = configured.necessity_excess() / configured.norm.max(1.0);
    let mut table = Table::new(&RATIO_COLUMNS);
    let mut suprema = Table::new(&["N", "r", "depth", "seeds", "sup_rho"]);
    for &cell in &config.sweep.cells {
        let rows = ratio_rows(cell, 0..config.sweep.seeds, &Family::lognormal())?;
        let mut sup = 0.0f64;
        for (seed, t) in &rows {
            worst = worst.max(t.necessity_excess() / t.norm.max(1.0));
            sup = sup.max(t.sufficiency_ratio());
            table.push(ratio_row(cell, *seed, t));
        }
        suprema.push(vec![
            cell.dim as f64,
            cell.r as f64,
            cell.depth as f64,
            config.sweep.seeds as f64,
            sup,
        ]);
    }
    report.check(Check::at_most("necessity", worst, tol.necessity));
    report.check(Check::at_most(
        "local_below_global",
        (configured.c_direct_local - configured.c_direct_global)
            .max(configured.c_adjoint_local - configured.c_adjoint_global),
        0.0,
    ));
    report.result("instance", &configured);
    report.result("rho", &configured.sufficiency_ratio());
    report.tables.insert("ratios".into(), table);
    report.tables.insert("ratio_suprema".into(), suprema);
    Ok(())
}

fn carleson(config: &RunConfig, inst: &Instance, seed: u64, report: &mut Report) -> Result<()> {
    let tol = &config.tolerances;
    let checks = check_instance(inst, seed, tol)?;
    let t = InducedOperator::induce(&inst.operator, &inst.mu, &inst.nu)?;
    let a = carleson_sequence(&t, inst.r, IndicatorChoice::Outer)?;
    let c = carleson_constant(&a, &inst.mu);
    let e = embedding_constant(&a, &inst.mu);
    report.check(Check::at_most("carleson_packing", checks.carleson_packing, tol.identity));
    report.check(Check::at_most("carleson_embedding", checks.embedding_ratio, 1.0 + tol.necessity));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = Table::new(&["seed", "carleson", "embedding"]);
    let mut worst = 0.0f64;
    for _ in 0..config.sweep.instances {
        let s: u64 = rng.random();
        let mu = MeasureGenerator::Lognormal { sigma: 1.0, seed: s }.build(inst.lattice.clone())?;
        let seq = random_sequence(&mu, s ^ 1);
        let (cs, es) = (carleson_constant(&seq, &mu), embedding_constant(&seq, &mu));
        worst = worst.max(es - 4.0 * cs);
        random.push(vec![s as f64, cs, es]);
    }
    report.check(Check::at_most("random_sequences_embed", worst, tol.necessity));

    let rows = greedy_table(config.sweep.greedy_depth)?;
    let mut greedy = Table::new(&["depth", "embedding", "carleson", "terms"]);
    let mut drop = 0.0f64;
    let mut excess = f64::NEG_INFINITY;
    for (i, row) in rows.iter().enumerate() {
        if i > 0 {
            drop = drop.max(rows[i - 1].embedding - row.embedding);
        }
        excess = excess.max(row.embedding - 4.0 * row.carleson.max(1.0));
        greedy.push(vec![row.depth as f64, row.embedding, row.carleson, row.terms as f64]);
    }
    report.check(Check::at_most("greedy_nondecreasing", drop, 0.0));
    report.check(Check::at_most("greedy_below_four", excess, 0.0));

    report.result("carleson_constant", &c);
    report.result("embedding_constant", &e);
    report.result("c_direct_local", &checks.testing.c_direct_local);
    report.tables.insert("random_sequences".into(), random);
    report.tables.insert("greedy".into(), greedy);
    report.attachments.insert("carleson_sequence.csv".into(), a.to_csv());
    Ok(())
}

fn search(config: &RunConfig, inst: &Instance, seed: u64, report: &mut Report) -> Result<()> {
    let tol = &config.tolerances;
    let outcome = extremal_search(inst, &config.search, seed)?;
    let drops = outcome
        .chains
        .iter()
        .flat_map(|c| c.history.windows(2).map(|w| w[0] - w[1]))
        .fold(0.0f64, f64::max);
    report.check(Check::at_most("monotone_incumbent", drops, 0.0));
    let (_, mismatches) = replay(&outcome.artifact, tol.replay)?;
    report.check(Check::at_most("replay", mismatches.len() as f64, 0.0).with_witness(mismatches.first()));
    let t = &outcome.artifact.testing;
    report.check(Check::at_most("necessity", t.necessity_excess() / t.norm.max(1.0), tol.necessity));
    report.result("initial_rho", &outcome.initial_rho);
    report.result("best_rho", &outcome.artifact.rho);
    report.result("chains", &outcome.chains);
    report.attachments.insert(
        "artifact.json".into(),
        serde_json::to_string_pretty(&outcome.artifact)? + "\n",
    );
    Ok(())
}

fn decompose(config: &RunConfig, inst: &Instance, seed: u64, report: &mut Report) -> Result<()> {
    let tol = &config.tolerances;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = InducedOperator::induce(&inst.operator, &inst.mu, &inst.nu)?;
    let d = Decomposition::new(&t, inst.r)?;
    let n = inst.lattice.n_leaves();
    let mut table = Table::new(&[
        "sample",
        "bilinear",
        "paraproduct_mu",
        "paraproduct_nu",
        "comparable",
        "averages",
        "residual",
    ]);
    let mut worst = 0.0f64;
    for k in 0..config.sweep.instances.max(1) {
        let f = gaussian_vector(&mut rng, n);
        let g = gaussian_vector(&mut rng, n);
        let rep = d.evaluate(&f, &g);
        worst = worst.max(rep.residual);
        table.push(vec![
            k as f64,
            rep.bilinear,
            rep.paraproduct_mu,
            rep.paraproduct_nu,
            rep.comparable,
            rep.averages,
            rep.residual,
        ]);
    }
    report.check(Check::at_most("decomposition_identity", worst, tol.identity));
    report.result("root_blocks", &json!(inst.operator.has_root_blocks()));
    report.tables.insert("decomposition".into(), table);
    Ok(())
}
