//! Run configuration: the instance to study, the suite to run and its knobs.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generate::MeasureSpec;
use crate::lattice::{Cube, Lattice, LatticeSpec};
use crate::measure::MeasureGrid;
use crate::operators::{haar_multiplier, haar_shift, random_band, BandOperator, Entry, MultiplierSpec};

/// Operator description as written in a config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OperatorSpec {
    Multiplier {
        alpha: AlphaSpec,
    },
    Shift,
    RandomBand {
        r: u32,
        seed: u64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        root_blocks: bool,
    },
    Explicit {
        r: u32,
        entries: Vec<Entry>,
    },
}

fn one() -> f64 {
    1.0
}

/// Multiplier coefficients: one constant, a list per cube (others 0), or
/// seeded uniform values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Constant(f64),
    PerCube(Vec<AlphaEntry>),
    Random { seed: u64, amplitude: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaEntry {
    pub cube: Cube,
    pub value: f64,
}

impl OperatorSpec {
    pub fn build(&self, lattice: Arc<Lattice>) -> Result<BandOperator> {
        match self {
            OperatorSpec::Multiplier { alpha } => {
                let spec = match alpha {
                    AlphaSpec::Constant(a) => MultiplierSpec::constant(*a),
                    AlphaSpec::PerCube(list) => {
                        let mut map = BTreeMap::new();
                        for e in list {
                            let id = lattice.require(&e.cube)?;
                            if lattice.is_leaf(id) {
                                return Err(Error::LeafCube(e.cube.clone()));
                            }
                            map.insert(e.cube.clone(), e.value);
                        }
                        MultiplierSpec::from_map(map)
                    }
                    AlphaSpec::Random { seed, amplitude } => MultiplierSpec::random(&lattice, *seed, *amplitude),
                };
                Ok(haar_multiplier(lattice, &spec))
            }
            OperatorSpec::Shift => haar_shift(lattice),
            OperatorSpec::RandomBand {
                r,
                seed,
                amplitude,
                root_blocks,
            } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(Error::Config(format!("amplitude must be finite and >= 0, got {amplitude}")));
                }
                Ok(random_band(lattice, *r, *seed, *amplitude, *root_blocks))
            }
            OperatorSpec::Explicit { r, entries } => BandOperator::from_entries(lattice, *r, entries),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteName {
    #[default]
    Verify,
    Testing,
    Carleson,
    Search,
    Decompose,
}

impl SuiteName {
    pub const ALL: [SuiteName; 5] = [
        SuiteName::Verify,
        SuiteName::Testing,
        SuiteName::Carleson,
        SuiteName::Search,
        SuiteName::Decompose,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteName::Verify => "verify",
            SuiteName::Testing => "testing",
            SuiteName::Carleson => "carleson",
            SuiteName::Search => "search",
            SuiteName::Decompose => "decompose",
        }
    }
}

impl std::str::FromStr for SuiteName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SuiteName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Entries that must vanish, after scaling to unit max entry.
    pub zero: f64,
    /// Relative residual of exact identities.
    pub identity: f64,
    /// Convergence of iterative eigensolvers.
    pub eigensolve: f64,
    /// Relative deviation of paraproduct coefficients.
    pub coefficient: f64,
    /// Slack allowed in the necessity inequalities.
    pub necessity: f64,
    /// Agreement of replayed numbers.
    pub replay: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            zero: 1e-12,
            identity: 1e-10,
            eigensolve: 1e-10,
            coefficient: 1e-9,
            necessity: 1e-9,
            replay: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::Config(format!("tolerance {name} must be finite and >= 0")));
        }
        let slot = match name {
            "zero" => &mut self.zero,
            "identity" => &mut self.identity,
            "eigensolve" => &mut self.eigensolve,
            "coefficient" => &mut self.coefficient,
            "necessity" => &mut self.necessity,
            "replay" => &mut self.replay,
            _ => return Err(Error::Config(format!("unknown tolerance {name:?}"))),
        };
        *slot = value;
        Ok(())
    }
}

/// Randomized instances drawn around the configured one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    /// Random companions of the configured instance in `verify` and `decompose`.
    pub instances: usize,
    /// Cells of the ratio table emitted by `testing`.
    pub cells: Vec<Cell>,
    /// Seeds per cell.
    pub seeds: u64,
    /// Largest tree depth for the greedy Carleson table.
    pub greedy_depth: u32,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            instances: 4,
            cells: Vec::new(),
            seeds: 20,
            greedy_depth: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub dim: usize,
    pub depth: u32,
    pub r: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchParams {
    pub iterations: usize,
    pub chains: usize,
    /// Scale of the log-normal mass and additive entry perturbations.
    pub step: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            iterations: 200,
            chains: 2,
            step: 0.5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory for `report.json` and CSV tables; `--out` takes precedence.
    pub dir: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: LatticeSpec,
    pub mu: MeasureSpec,
    pub nu: MeasureSpec,
    pub operator: OperatorSpec,
    /// Radius used by the analysis; defaults to the operator's band radius.
    #[serde(default)]
    pub r: Option<u32>,
    #[serde(default)]
    pub suite: SuiteName,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub sweep: SweepParams,
    #[serde(default)]
    pub search: SearchParams,
    #[serde(default)]
    pub output: OutputSpec,
}

/// A validated configuration with its objects built.
#[derive(Clone, Debug)]
pub struct Instance {
    pub lattice: Arc<Lattice>,
    pub mu: MeasureGrid,
    pub nu: MeasureGrid,
    pub operator: BandOperator,
    pub r: u32,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.instance().map(|_| ())
    }

    pub fn instance(&self) -> Result<Instance> {
        let lattice = Arc::new(self.lattice.build()?);
        let mu = self.mu.build(lattice.clone())?;
        let nu = self.nu.build(lattice.clone())?;
        let operator = self.operator.build(lattice.clone())?;
        let r = self.r.unwrap_or(operator.radius());
        if lattice.depth() <= r {
            return Err(Error::DepthTooShallow {
                depth: lattice.depth(),
                radius: r,
            });
        }
        for cell in &self.sweep.cells {
            if cell.depth <= cell.r || cell.dim == 0 || cell.dim > 3 {
                return Err(Error::Config(format!("invalid sweep cell {cell:?}")));
            }
        }
        if !(self.search.step.is_finite() && self.search.step > 0.0) {
            return Err(Error::Config("search step must be positive".into()));
        }
        Ok(Instance {
            lattice,
            mu,
            nu,
            operator,
            r,
        })
    }
}
