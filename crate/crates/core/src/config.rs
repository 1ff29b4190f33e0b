//! Declarative search configuration read from JSON, and its validation into
//! the typed pieces the search needs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::basis::{BasisFamily, BasisSpec, TimeBounds};
use crate::criteria::{CriterionKind, CriterionSpec, GlmFamily};
use crate::error::{Error, Result};
use crate::formula::{expand_terms, parse_formula, FactorSpec, ParamSpec, TermList};
use crate::model::Design;
use crate::optimizer::SearchConfig;
use crate::priors::{BuiltinSampler, Covariance, PriorSpec, DEFAULT_LEVEL, DEFAULT_MC_SIZE};

pub const DEFAULT_GRID_SIZE: usize = 201;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub criterion: CriterionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glm: Option<GlmConfig>,
    pub search: SearchSection,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory that relative paths in the configuration are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub formula: String,
    pub npf: usize,
    pub tbounds: [f64; 2],
    /// Degree of each factor's B-spline basis.
    pub dx: Vec<usize>,
    /// Interior knots of each factor's basis.
    pub knotsx: Vec<Vec<f64>>,
    /// Parameter basis family per non-intercept formula term.
    pub pars: Vec<BasisFamily>,
    pub db: Vec<usize>,
    /// Interior knots per parameter basis; all empty when omitted.
    #[serde(default)]
    pub knotsb: Option<Vec<Vec<f64>>>,
    /// Factor names; `x1`, `x2`, ... when omitted.
    #[serde(default)]
    pub names: Option<Vec<String>>,
    /// Factors declared scalar must have degree 0 and no interior knots.
    #[serde(default)]
    pub scalar: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionConfig {
    pub kind: CriterionKind,
    #[serde(default)]
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "quadrature")]
    Quadrature,
    #[serde(rename = "MC")]
    MonteCarlo,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Quadrature => "quadrature",
            Method::MonteCarlo => "MC",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlmConfig {
    pub family: String,
    /// Canonical link of the family when omitted.
    #[serde(default)]
    pub link: Option<String>,
    pub method: Method,
    #[serde(default = "default_level")]
    pub level: usize,
    #[serde(rename = "B", default = "default_mc_size")]
    pub b: usize,
    /// `{"mu", "sigma2"}`, `{"unifbound"}` or `{"sampler": "rnorm" | "runif", ...}`.
    pub prior: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub nruns: usize,
    #[serde(default = "default_nsd")]
    pub nsd: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_dlbound")]
    pub dlbound: f64,
    #[serde(default = "default_dubound")]
    pub dubound: f64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub progress: bool,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    /// One entry per start, mapping each factor name to a matrix or a CSV path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub startd: Option<Vec<BTreeMap<String, StartMatrix>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartMatrix {
    Csv(PathBuf),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            grid_size: DEFAULT_GRID_SIZE,
        }
    }
}

fn default_level() -> usize {
    DEFAULT_LEVEL
}
fn default_mc_size() -> usize {
    DEFAULT_MC_SIZE
}
fn default_nsd() -> usize {
    1
}
fn default_tol() -> f64 {
    SearchConfig::default().tol
}
fn default_dlbound() -> f64 {
    SearchConfig::default().dlbound
}
fn default_dubound() -> f64 {
    SearchConfig::default().dubound
}
fn default_workers() -> usize {
    1
}
fn default_max_sweeps() -> usize {
    SearchConfig::default().max_sweeps
}
fn default_directory() -> PathBuf {
    PathBuf::from("design_output")
}
fn default_grid_size() -> usize {
    DEFAULT_GRID_SIZE
}

/// How the expectation over the prior is approximated.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmPlan {
    pub family: GlmFamily,
    pub method: Method,
    pub level: usize,
    pub b: usize,
    pub prior: PriorSpec,
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub factors: Vec<FactorSpec>,
    pub terms: TermList,
    pub criterion: CriterionSpec,
    pub glm: Option<GlmPlan>,
    pub search: SearchConfig,
    pub n_runs: usize,
    pub starts: Option<Vec<Design>>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Read a configuration file; relative paths inside it resolve against its directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let mut config = Self::from_json(&fs::read_to_string(path)?)?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.directory)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn factor_names(&self) -> Vec<String> {
        match &self.model.names {
            Some(n) => n.clone(),
            None => (1..=self.model.npf).map(|j| format!("x{j}")).collect(),
        }
    }

    pub fn search_config(&self) -> SearchConfig {
        let s = &self.search;
        SearchConfig {
            nsd: s.nsd,
            tol: s.tol,
            dlbound: s.dlbound,
            dubound: s.dubound,
            max_sweeps: s.max_sweeps,
            seed: s.seed,
            workers: s.workers,
        }
    }

    /// Check every argument constraint and build the typed search inputs.
    pub fn prepare(&self) -> Result<Prepared> {
        let m = &self.model;
        let tb = TimeBounds::new(m.tbounds[0], m.tbounds[1])?;
        if m.npf == 0 {
            return Err(Error::Config("npf must be at least 1".into()));
        }
        let names = self.factor_names();
        per_factor(names.len(), m.npf, "names")?;
        per_factor(m.dx.len(), m.npf, "dx")?;
        per_factor(m.knotsx.len(), m.npf, "knotsx")?;
        for (j, a) in names.iter().enumerate() {
            if names[..j].contains(a) {
                return Err(Error::Config(format!("duplicate factor name '{a}'")));
            }
        }
        if let Some(scalar) = &m.scalar {
            per_factor(scalar.len(), m.npf, "scalar")?;
            for (j, _) in scalar.iter().enumerate().filter(|(_, s)| **s) {
                if m.dx[j] != 0 {
                    return Err(Error::Config(format!(
                        "factor '{}': scalar factor must have a zero degree entry",
                        names[j]
                    )));
                }
                if !m.knotsx[j].is_empty() {
                    return Err(Error::Config(format!(
                        "factor '{}': scalar factor must have no interior knots",
                        names[j]
                    )));
                }
            }
        }
        let factors = names
            .iter()
            .zip(m.dx.iter().zip(&m.knotsx))
            .map(|(name, (&deg, knots))| {
                let basis = BasisSpec::bspline(deg, knots.clone(), tb)
                    .map_err(|e| Error::Config(format!("factor '{name}': {e}")))?;
                Ok(FactorSpec {
                    name: name.clone(),
                    basis,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let ast = parse_formula(&m.formula)?;
        let nterms = ast.terms.len();
        if m.pars.len() != nterms || m.db.len() != nterms {
            return Err(Error::Config(format!(
                "pars and db need one entry per formula term ({nterms}), got {} and {}",
                m.pars.len(),
                m.db.len()
            )));
        }
        let knotsb = match &m.knotsb {
            Some(k) if k.len() != nterms => {
                return Err(Error::Config(format!(
                    "knotsb needs one entry per formula term ({nterms}), got {}",
                    k.len()
                )))
            }
            Some(k) => k.clone(),
            None => vec![Vec::new(); nterms],
        };
        let params: Vec<ParamSpec> = (0..nterms)
            .map(|q| ParamSpec {
                family: m.pars[q],
                degree: m.db[q],
                knots: knotsb[q].clone(),
            })
            .collect();
        let terms = expand_terms(&ast, &factors, &params, tb)?;

        let criterion = CriterionSpec::new(self.criterion.kind, self.criterion.lambda)?;
        let glm = self.glm.as_ref().map(|g| g.plan(terms.num_params())).transpose()?;
        let search = self.search_config();
        search.validate()?;
        if self.search.nruns == 0 {
            return Err(Error::Config("nruns must be at least 1".into()));
        }
        if self.output.grid_size < 2 {
            return Err(Error::Config("output grid_size must be at least 2".into()));
        }
        let starts = match &self.search.startd {
            None => None,
            Some(list) => {
                if list.len() != search.nsd {
                    return Err(Error::Shape(format!(
                        "startd has {} designs, nsd is {}",
                        list.len(),
                        search.nsd
                    )));
                }
                let designs = list
                    .iter()
                    .map(|entry| self.load_start(entry, &factors))
                    .collect::<Result<Vec<_>>>()?;
                for d in &designs {
                    d.check_shape(&factors, self.search.nruns)?;
                }
                Some(designs)
            }
        };
        Ok(Prepared {
            factors,
            terms,
            criterion,
            glm,
            search,
            n_runs: self.search.nruns,
            starts,
        })
    }

    fn load_start(&self, entry: &BTreeMap<String, StartMatrix>, factors: &[FactorSpec]) -> Result<Design> {
        if let Some(extra) = entry.keys().find(|k| !factors.iter().any(|f| &f.name == *k)) {
            return Err(Error::Config(format!("startd names unknown factor '{extra}'")));
        }
        let mats = factors
            .iter()
            .map(|f| match entry.get(&f.name) {
                None => Err(Error::Config(format!("startd is missing factor '{}'", f.name))),
                Some(StartMatrix::Rows(rows)) => rows_to_matrix(rows, &f.name),
                Some(StartMatrix::Csv(path)) => read_coefficient_csv(&self.resolve(path)),
            })
            .collect::<Result<Vec<_>>>()?;
        Design::new(factors.iter().map(|f| f.name.clone()).collect(), mats)
    }
}

impl GlmConfig {
    pub fn link_name(&self) -> String {
        match &self.link {
            Some(l) => l.clone(),
            None => match self.family.to_ascii_lowercase().as_str() {
                "poisson" => "log".into(),
                _ => "logit".into(),
            },
        }
    }

    pub fn plan(&self, p: usize) -> Result<GlmPlan> {
        let family = GlmFamily::from_names(&self.family, &self.link_name())?;
        let prior = parse_prior(&self.prior)?;
        prior.validate(p)?;
        match self.method {
            Method::Quadrature => {
                if self.level == 0 {
                    return Err(Error::Config("quadrature level must be at least 1".into()));
                }
                if matches!(prior, PriorSpec::Sampler(_)) {
                    return Err(Error::Config(
                        "quadrature needs a normal (mu, sigma2) or uniform (unifbound) prior".into(),
                    ));
                }
            }
            Method::MonteCarlo => {
                if self.b == 0 {
                    return Err(Error::Config("Monte Carlo sample size B must be at least 1".into()));
                }
            }
        }
        Ok(GlmPlan {
            family,
            method: self.method,
            level: self.level,
            b: self.b,
            prior,
        })
    }
}

fn per_factor(got: usize, npf: usize, what: &str) -> Result<()> {
    if got != npf {
        return Err(Error::Config(format!("{what} has {got} entries, npf is {npf}")));
    }
    Ok(())
}

fn rows_to_matrix(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Shape(format!("start matrix for '{name}' has ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, l| rows[i][l]))
}

/// Read a coefficient matrix written with a header row of basis indices.
pub fn read_coefficient_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| {
                    Error::Config(format!("{}: bad number '{s}': {e}", path.display()))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    rows_to_matrix(&rows, &path.display().to_string())
}

fn numbers(v: &Value, what: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("{what} must be a number or an array of numbers"));
    match v {
        Value::Number(n) => Ok(vec![n.as_f64().ok_or_else(bad)?]),
        Value::Array(items) => items.iter().map(|x| x.as_f64().ok_or_else(bad)).collect(),
        _ => Err(bad()),
    }
}

fn field(obj: &serde_json::Map<String, Value>, key: &str, ctx: &str) -> Result<f64> {
    obj.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::Config(format!("{ctx} prior needs a numeric '{key}'")))
}

/// Interpret the `prior` entry of a GLM configuration.
pub fn parse_prior(v: &Value) -> Result<PriorSpec> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Config("prior must be an object".into()))?;
    let keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    let only = |allowed: &[&str]| -> Result<()> {
        match keys.iter().find(|k| !allowed.contains(k)) {
            Some(k) => Err(Error::Config(format!("unexpected prior field '{k}'"))),
            None => Ok(()),
        }
    };
    if let Some(sampler) = obj.get("sampler") {
        match sampler.as_str() {
            Some("rnorm") => {
                only(&["sampler", "mean", "sd"])?;
                Ok(PriorSpec::Sampler(BuiltinSampler::Rnorm {
                    mean: field(obj, "mean", "rnorm")?,
                    sd: field(obj, "sd", "rnorm")?,
                }))
            }
            Some("runif") => {
                only(&["sampler", "min", "max"])?;
                Ok(PriorSpec::Sampler(BuiltinSampler::Runif {
                    min: field(obj, "min", "runif")?,
                    max: field(obj, "max", "runif")?,
                }))
            }
            _ => Err(Error::Config(
                "prior sampler must be \"rnorm\" or \"runif\"".into(),
            )),
        }
    } else if let Some(ub) = obj.get("unifbound") {
        only(&["unifbound"])?;
        let bad = || {
            Error::Config("unifbound must be [lo, hi] or [[lo, ...], [hi, ...]]".into())
        };
        let outer = ub.as_array().ok_or_else(bad)?;
        let bounds = if outer.len() == 2 && outer.iter().all(Value::is_number) {
            vec![(outer[0].as_f64().ok_or_else(bad)?, outer[1].as_f64().ok_or_else(bad)?)]
        } else if outer.len() == 2 {
            let lo = numbers(&outer[0], "unifbound")?;
            let hi = numbers(&outer[1], "unifbound")?;
            if lo.len() != hi.len() {
                return Err(bad());
            }
            lo.into_iter().zip(hi).collect()
        } else {
            return Err(bad());
        };
        Ok(PriorSpec::Uniform { bounds })
    } else if obj.contains_key("mu") || obj.contains_key("sigma2") {
        only(&["mu", "sigma2"])?;
        let mu = numbers(
            obj.get("mu")
                .ok_or_else(|| Error::Config("normal prior needs 'mu'".into()))?,
            "mu",
        )?;
        let s = obj
            .get("sigma2")
            .ok_or_else(|| Error::Config("normal prior needs 'sigma2'".into()))?;
        let sigma2 = match s {
            Value::Number(n) => Covariance::Scalar(n.as_f64().unwrap_or(f64::NAN)),
            Value::Array(items) if items.iter().all(Value::is_array) => {
                let rows = items
                    .iter()
                    .map(|r| numbers(r, "sigma2"))
                    .collect::<Result<Vec<_>>>()?;
                Covariance::Full(rows_to_matrix(&rows, "sigma2")?)
            }
            _ => Covariance::Diagonal(numbers(s, "sigma2")?),
        };
        Ok(PriorSpec::Normal { mu, sigma2 })
    } else {
        Err(Error::Config(
            "prior must give mu/sigma2, unifbound, or a sampler".into(),
        ))
    }
}
