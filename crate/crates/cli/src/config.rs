//! Experiment configuration: a versioned TOML document listing checks with
//! inline element, sequence, process and ensemble definitions. Unknown keys
//! are rejected everywhere.

use std::path::Path;
use std::sync::Arc;

use lqlab::integrator::{Coefficient, SimpleAdaptedProcess, Term};
use lqlab::linalg::real_matrix;
use lqlab::lq::{FiniteMeasureSpace, LqElement, Shape};
use lqlab::poisson::{CellRef, GridPartition};
use lqlab::prob::RandomLqVariable;
use lqlab::randmat::{EntryLaw, MatrixEnsemble, Structure};
use lqlab::seq_norms::{LqSequence, Mode};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub run: RunSettings,
    #[serde(default)]
    pub output: OutputSettings,
    #[serde(default)]
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Enumerate, failing when the atom budget is exceeded.
    Exact,
    /// Monte Carlo throughout.
    Sampled,
    /// Enumerate when feasible, else sample.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub seed: u64,
    pub mode: SamplingMode,
    pub samples: usize,
    /// Record per-check wall time in `runtime_ms`; off keeps output
    /// byte-identical across runs.
    pub timing: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self { seed: 0x5eed, mode: SamplingMode::Auto, samples: 10_000, timing: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSettings {
    pub path: Option<String>,
    pub format: Format,
}

/// A named check; `name` becomes the rows' case id.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: Option<String>,
    pub kind: CheckKind,
}

impl<'de> Deserialize<'de> for Check {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let mut table = toml::Table::deserialize(d)?;
        let name = match table.remove("name") {
            None => None,
            Some(toml::Value::String(s)) => Some(s),
            Some(other) => return Err(D::Error::custom(format!("check name must be a string, got {other}"))),
        };
        let kind = CheckKind::deserialize(toml::Value::Table(table)).map_err(D::Error::custom)?;
        Ok(Self { name, kind })
    }
}

fn default_band() -> f64 {
    16.0
}

fn default_scale() -> f64 {
    10.0
}

fn default_doob_samples() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckKind {
    PoissonMoments {
        p: Vec<f64>,
        lambdas: Vec<f64>,
    },
    Khintchine {
        elements: Vec<ElementDef>,
        exponents: Vec<[f64; 2]>,
        mode: Option<Mode>,
    },
    /// Exponent pairs are `(p, s)`; the norm exponent is `q`.
    Kahane {
        elements: Vec<ElementDef>,
        exponents: Vec<[f64; 2]>,
        q: f64,
    },
    TypeCotype {
        elements: Vec<ElementDef>,
        q: Vec<f64>,
    },
    Symmetrization {
        sequence: SequenceDef,
        exponents: Vec<[f64; 2]>,
    },
    RosenthalScalar {
        sequence: SequenceDef,
        p: Vec<f64>,
        constant: Option<f64>,
    },
    RosenthalPositive {
        sequence: SequenceDef,
        p: Vec<f64>,
    },
    HoffmannJorgensen {
        sequence: SequenceDef,
        exponents: Vec<[f64; 2]>,
    },
    #[serde(rename = "2pqqp")]
    TwoPqqp {
        sequence: SequenceDef,
        exponents: Vec<[f64; 2]>,
        mode: Option<Mode>,
    },
    RosenthalSpq {
        sequence: SequenceDef,
        exponents: Vec<[f64; 2]>,
        mode: Option<Mode>,
    },
    Decoupling {
        process: ProcessDef,
        exponents: Vec<[f64; 2]>,
        umd_constant: Option<f64>,
    },
    DecouplingIdentities {
        process: ProcessDef,
    },
    Ito {
        family: Vec<ProcessDef>,
        exponents: Vec<[f64; 2]>,
        #[serde(default = "default_band")]
        band: f64,
        #[serde(default = "default_scale")]
        scale: f64,
        mode: Option<Mode>,
    },
    Doob {
        process: ProcessDef,
        exponents: Vec<[f64; 2]>,
        #[serde(default = "default_doob_samples")]
        samples: usize,
    },
    Theorem62 {
        ensemble: EnsembleDef,
        p: Vec<f64>,
    },
    Corollary63 {
        entries: EntryTable,
        p: Vec<f64>,
    },
    Latala {
        entries: EntryTable,
        p: Vec<f64>,
        constant: Option<f64>,
    },
    Seginer {
        entries: Vec<Vec<f64>>,
        p: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Category {
    Moments,
    Khintchine,
    Rosenthal,
    Integral,
    Matrix,
}

impl CheckKind {
    pub fn category(&self) -> Category {
        use CheckKind::*;
        match self {
            PoissonMoments { .. } => Category::Moments,
            Khintchine { .. } | Kahane { .. } | TypeCotype { .. } => Category::Khintchine,
            Symmetrization { .. }
            | RosenthalScalar { .. }
            | RosenthalPositive { .. }
            | HoffmannJorgensen { .. }
            | TwoPqqp { .. }
            | RosenthalSpq { .. } => Category::Rosenthal,
            Decoupling { .. } | DecouplingIdentities { .. } | Ito { .. } | Doob { .. } => Category::Integral,
            Theorem62 { .. } | Corollary63 { .. } | Latala { .. } | Seginer { .. } => Category::Matrix,
        }
    }
}

/// Exactly one of `scalar`, `matrix` (rows) or `vector` (with optional
/// measure `weights`).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementDef {
    pub scalar: Option<f64>,
    pub matrix: Option<Vec<Vec<f64>>>,
    pub vector: Option<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
}

impl ElementDef {
    pub fn build(&self) -> Result<LqElement, String> {
        match (self.scalar, &self.matrix, &self.vector) {
            (Some(x), None, None) if self.weights.is_none() => Ok(LqElement::scalar(x)),
            (None, Some(rows), None) if self.weights.is_none() => matrix(rows),
            (None, None, Some(v)) => {
                let weights = self.weights.clone().unwrap_or_else(|| vec![1.0; v.len()]);
                let space = FiniteMeasureSpace::weighted(weights).map_err(|e| e.to_string())?;
                LqElement::commutative_real(Arc::new(space), v).map_err(|e| e.to_string())
            }
            _ => Err("an element needs exactly one of scalar, matrix or vector (weights only with vector)".into()),
        }
    }
}

fn matrix(rows: &[Vec<f64>]) -> Result<LqElement, String> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err("matrix rows must be non-empty and of equal length".into());
    }
    let flat: Vec<f64> = rows.concat();
    Ok(LqElement::matrix(real_matrix(rows.len(), cols, &flat)))
}

pub fn build_elements(defs: &[ElementDef]) -> Result<Vec<LqElement>, String> {
    defs.iter().map(ElementDef::build).collect()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomDef {
    pub prob: f64,
    pub value: ElementDef,
}

/// Exactly one of `atoms`, `symmetric` (`+-x` with probability 1/2 each)
/// or `constant`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemDef {
    pub atoms: Option<Vec<AtomDef>>,
    pub symmetric: Option<ElementDef>,
    pub constant: Option<ElementDef>,
}

impl ItemDef {
    fn build(&self) -> Result<RandomLqVariable, String> {
        let built = match (&self.atoms, &self.symmetric, &self.constant) {
            (Some(atoms), None, None) => {
                let atoms = atoms.iter().map(|a| Ok((a.prob, a.value.build()?))).collect::<Result<Vec<_>, String>>()?;
                RandomLqVariable::from_atoms(atoms)
            }
            (None, Some(x), None) => {
                let x = x.build()?;
                RandomLqVariable::from_atoms(vec![(0.5, x.clone()), (0.5, x.scale(-1.0))])
            }
            (None, None, Some(x)) => Ok(RandomLqVariable::constant(x.build()?)),
            _ => return Err("an item needs exactly one of atoms, symmetric or constant".into()),
        };
        built.map_err(|e| e.to_string())
    }
}

/// Random independent items drawn from the run seed.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSequenceDef {
    pub n: usize,
    /// Matrix size; 0 draws scalars.
    #[serde(default)]
    pub dim: usize,
    #[serde(default = "default_atoms")]
    pub atoms: usize,
    /// Draw non-negative `a * Bernoulli(prob)` scalars instead of mean-zero items.
    pub bernoulli: Option<f64>,
}

fn default_atoms() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceDef {
    pub items: Option<Vec<ItemDef>>,
    pub random: Option<RandomSequenceDef>,
}

impl SequenceDef {
    pub fn build(&self, rng: &mut ChaCha8Rng) -> Result<LqSequence, String> {
        let items = match (&self.items, &self.random) {
            (Some(items), None) => items.iter().map(ItemDef::build).collect::<Result<Vec<_>, _>>()?,
            (None, Some(r)) => random_items(r, rng)?,
            _ => return Err("a sequence needs exactly one of items or random".into()),
        };
        LqSequence::independent(items).map_err(|e| e.to_string())
    }
}

fn random_element(rng: &mut ChaCha8Rng, dim: usize) -> LqElement {
    if dim == 0 {
        return LqElement::scalar(rng.gen_range(-2.0..2.0));
    }
    let v: Vec<f64> = (0..dim * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    LqElement::matrix(real_matrix(dim, dim, &v))
}

fn random_items(r: &RandomSequenceDef, rng: &mut ChaCha8Rng) -> Result<Vec<RandomLqVariable>, String> {
    if r.atoms < 2 {
        return Err("random items need at least two atoms".into());
    }
    (0..r.n)
        .map(|_| {
            if let Some(prob) = r.bernoulli {
                let a = rng.gen_range(0.1..2.0);
                let x = LqElement::scalar(a);
                return RandomLqVariable::from_atoms(vec![(prob, x.clone()), (1.0 - prob, x.scale(0.0))]).map_err(|e| e.to_string());
            }
            let mut probs: Vec<f64> = (0..r.atoms).map(|_| rng.gen_range(0.2..1.0)).collect();
            let total: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= total);
            let mut vals: Vec<LqElement> = (0..r.atoms - 1).map(|_| random_element(rng, r.dim)).collect();
            // The last atom restores mean zero.
            let mut last = vals[0].zero_like();
            for (v, p) in vals.iter().zip(&probs) {
                last.axpy((-p / probs[r.atoms - 1]).into(), v);
            }
            vals.push(last);
            RandomLqVariable::from_atoms(probs.into_iter().zip(vals).collect()).map_err(|e| e.to_string())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermDef {
    pub time: usize,
    pub set: usize,
    pub value: ElementDef,
    pub coefficient: Option<Coefficient>,
}

/// Uniform grid of `intervals` on `[0, horizon]` over sets of the given
/// measures; the integral runs to `t` (default `horizon`) over `sets`
/// (default all).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessDef {
    pub horizon: f64,
    pub intervals: usize,
    pub measures: Vec<f64>,
    #[serde(default)]
    pub terms: Vec<TermDef>,
    pub t: Option<f64>,
    pub sets: Option<Vec<usize>>,
}

pub struct BuiltProcess {
    pub process: SimpleAdaptedProcess,
    pub t: f64,
    pub sets: Vec<usize>,
}

impl ProcessDef {
    pub fn build(&self) -> Result<BuiltProcess, String> {
        let grid = GridPartition::uniform(self.horizon, self.intervals, &self.measures).map_err(|e| e.to_string())?;
        let terms = self
            .terms
            .iter()
            .map(|t| {
                Ok(Term {
                    cell: CellRef { time: t.time, set: t.set },
                    coefficient: t.coefficient.clone().unwrap_or(Coefficient::constant(1.0)),
                    value: t.value.build()?,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        let shape = terms.first().map_or(Shape::Matrix(1, 1), |t| t.value.shape());
        let sets = self.sets.clone().unwrap_or_else(|| (0..self.measures.len()).collect());
        let process = SimpleAdaptedProcess::new(grid, shape, terms).map_err(|e| e.to_string())?;
        Ok(BuiltProcess { process, t: self.t.unwrap_or(self.horizon), sets })
    }
}

/// `amplitudes` (one row-major-by-rows matrix per summand) or, without
/// them, `n` unit-amplitude summands, diagonal when `diagonal` is set.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleDef {
    pub rows: usize,
    pub cols: usize,
    pub law: EntryLaw,
    pub n: Option<usize>,
    pub structure: Option<Structure>,
    pub amplitudes: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    pub diagonal: bool,
}

impl EnsembleDef {
    pub fn build(&self) -> Result<MatrixEnsemble, String> {
        let built = match (&self.amplitudes, self.n) {
            (Some(amps), None) => {
                let flat = amps
                    .iter()
                    .map(|m| {
                        if m.len() != self.rows || m.iter().any(|r| r.len() != self.cols) {
                            return Err(format!("amplitude matrices must be {} x {}", self.rows, self.cols));
                        }
                        Ok(m.concat())
                    })
                    .collect::<Result<Vec<_>, String>>()?;
                MatrixEnsemble::new(self.rows, self.cols, self.law.clone(), self.structure.unwrap_or(Structure::PerEntry), flat)
            }
            (None, Some(n)) if self.diagonal => {
                if self.rows != self.cols {
                    return Err("diagonal ensembles must be square".into());
                }
                MatrixEnsemble::diagonal(self.rows, n, self.law.clone())
            }
            (None, Some(n)) => match self.structure.unwrap_or(Structure::PerEntry) {
                Structure::PerEntry => MatrixEnsemble::full(self.rows, self.cols, n, self.law.clone()),
                Structure::PerSummand => {
                    MatrixEnsemble::new(self.rows, self.cols, self.law.clone(), Structure::PerSummand, vec![vec![1.0; self.rows * self.cols]; n])
                }
            },
            _ => return Err("an ensemble needs exactly one of amplitudes or n".into()),
        };
        built.map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryTable {
    pub amplitudes: Vec<Vec<f64>>,
    pub law: EntryLaw,
}

/// `(rows, cols, row-major entries)` of a rectangular table.
pub fn flatten_table(rows: &[Vec<f64>]) -> Result<(usize, usize, Vec<f64>), String> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err("entry table rows must be non-empty and of equal length".into());
    }
    Ok((rows.len(), cols, rows.concat()))
}

pub fn parse(text: &str) -> Result<ExperimentConfig, String> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| e.to_string())?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", config.schema_version));
    }
    Ok(config)
}

pub fn load(path: &Path) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse(&text)
}
