//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! n = 5
//!
//! [graph]
//! kind = "line"          # line | star | complete | cycle
//! self_loops = false
//! # adjacency = [[0, 1], [1, 0]]   (instead of kind)
//!
//! [virus1]
//! delta = 0.5            # scalar or one value per node
//! beta = 1.0             # scalar times the adjacency, or a full matrix
//!
//! [virus2]
//! delta = [0.4, 0.4, 0.6, 0.6, 0.5]
//! beta = 0.8
//!
//! [initial]
//! pattern = "ic1"        # ic1 | ic2 | ic3, or give x1 = [...], x2 = [...]
//!
//! [integrator]           # all optional
//! dt = 0.01
//! t_max = 2000.0
//! convergence_tol = 1e-10
//! clamp_tol = 1e-9
//! sample_interval = 1.0
//!
//! [output]
//! dir = "out"
//!
//! [control]              # proportional healing gains, for `control`
//! k1 = 1.0
//! k2 = [1.0, 2.0, 1.0, 2.0, 1.0]
//!
//! [markov]               # for `markov-compare`
//! t = 50.0
//! dt = 0.1
//! ```
//!
//! Row `i` of an infection matrix holds the rates at which node `i` is
//! infected by each other node.

use std::path::{Path, PathBuf};

use bivirus::dynamics::{BiVirusSystem, ControlGains, EpidemicState, IntegratorConfig};
use bivirus::netstruct::{
    build_infection_matrix, generate_graph, matrix_from_rows, AdjacencyMatrix, GraphKind, HealingRates,
    InfectionMatrix, InfectionRates,
};
use bivirus::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default)]
    pub self_loops: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirusSpec {
    pub delta: VectorSpec,
    pub beta: MatrixSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x2: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSpec {
    pub dt: f64,
    pub t_max: f64,
    pub convergence_tol: f64,
    pub clamp_tol: f64,
    pub sample_interval: f64,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        Self {
            dt: d.dt,
            t_max: d.t_max,
            convergence_tol: d.convergence_tol,
            clamp_tol: d.clamp_tol,
            sample_interval: d.sample_interval,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    pub k1: VectorSpec,
    pub k2: VectorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovSpec {
    pub t: f64,
    #[serde(default = "default_chain_dt")]
    pub dt: f64,
}

fn default_chain_dt() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
    pub virus1: VirusSpec,
    pub virus2: VirusSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub markov: Option<MarkovSpec>,
}

/// Named initial conditions of the approximation experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitialPattern {
    /// Node 1 has virus 1, node 2 has virus 2.
    Ic1,
    /// Nodes 1-2 have virus 1, nodes 3-4 have virus 2.
    Ic2,
    /// Node 1 has virus 1, all others virus 2.
    Ic3,
}

impl InitialPattern {
    pub const ALL: [InitialPattern; 3] = [InitialPattern::Ic1, InitialPattern::Ic2, InitialPattern::Ic3];

    pub fn name(self) -> &'static str {
        match self {
            InitialPattern::Ic1 => "ic1",
            InitialPattern::Ic2 => "ic2",
            InitialPattern::Ic3 => "ic3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name().eq_ignore_ascii_case(s.trim()))
    }

    pub fn min_nodes(self) -> usize {
        match self {
            InitialPattern::Ic2 => 4,
            _ => 2,
        }
    }

    /// 0/1 indicator vectors for the two viruses.
    pub fn state(self, n: usize) -> Option<EpidemicState> {
        if n < self.min_nodes() {
            return None;
        }
        let (v1, v2): (Vec<usize>, Vec<usize>) = match self {
            InitialPattern::Ic1 => (vec![0], vec![1]),
            InitialPattern::Ic2 => (vec![0, 1], vec![2, 3]),
            InitialPattern::Ic3 => (vec![0], (1..n).collect()),
        };
        let ind = |on: &[usize]| DVector::from_fn(n, |i, _| if on.contains(&i) { 1.0 } else { 0.0 });
        EpidemicState::new(ind(&v1), ind(&v2)).ok()
    }
}

/// Everything a scenario resolves to.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub system: BiVirusSystem,
    pub graph: Option<AdjacencyMatrix>,
    pub initial: EpidemicState,
    pub integrator: IntegratorConfig,
    pub gains: Option<(ControlGains, ControlGains)>,
    pub markov: Option<MarkovSpec>,
    pub output_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Syntax(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// The config in canonical form; parses back to an identical value.
    pub fn to_toml_string(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Syntax(e.to_string()))
    }

    /// Node count, taken from `n` or from the first sized field.
    pub fn size(&self) -> CliResult<usize> {
        let mut sizes: Vec<(String, usize)> = Vec::new();
        if let Some(n) = self.n {
            sizes.push(("n".into(), n));
        }
        if let Some(rows) = self.graph.as_ref().and_then(|g| g.adjacency.as_ref()) {
            sizes.push(("graph.adjacency".into(), rows.len()));
        }
        for (name, v) in [("virus1", &self.virus1), ("virus2", &self.virus2)] {
            if let VectorSpec::Vector(d) = &v.delta {
                sizes.push((format!("{name}.delta"), d.len()));
            }
            if let MatrixSpec::Matrix(m) = &v.beta {
                sizes.push((format!("{name}.beta"), m.len()));
            }
        }
        let Some(&(_, n)) = sizes.first() else {
            return Err(CliError::field("n", "node count missing and not implied by any vector or matrix"));
        };
        if n == 0 {
            return Err(CliError::field(&sizes[0].0, "node count must be positive"));
        }
        if let Some((field, m)) = sizes.iter().find(|(_, m)| *m != n) {
            return Err(CliError::field(field.as_str(), format!("has size {m}, expected {n}")));
        }
        Ok(n)
    }

    pub fn graph(&self) -> CliResult<Option<AdjacencyMatrix>> {
        let n = self.size()?;
        let Some(spec) = &self.graph else {
            return Ok(None);
        };
        let a = match (&spec.kind, &spec.adjacency) {
            (Some(_), Some(_)) => {
                return Err(CliError::field("graph", "give either `kind` or `adjacency`, not both"))
            }
            (None, None) => return Err(CliError::field("graph", "needs `kind` or `adjacency`")),
            (Some(kind), None) => {
                let kind: GraphKind = kind
                    .parse()
                    .map_err(|e: bivirus::Error| CliError::field("graph.kind", e.to_string()))?;
                generate_graph(kind, n, spec.self_loops)
                    .map_err(|e| CliError::field("graph.kind", e.to_string()))?
            }
            (None, Some(rows)) => {
                let m = matrix_from_rows(rows).map_err(|e| CliError::field("graph.adjacency", e.to_string()))?;
                AdjacencyMatrix::new(m)
                    .map_err(|e| CliError::field("graph.adjacency", e.to_string()))?
                    .with_self_loops(spec.self_loops)
            }
        };
        Ok(Some(a))
    }

    pub fn system(&self) -> CliResult<BiVirusSystem> {
        let n = self.size()?;
        let graph = self.graph()?;
        let (d1, b1) = resolve_virus("virus1", &self.virus1, n, graph.as_ref())?;
        let (d2, b2) = resolve_virus("virus2", &self.virus2, n, graph.as_ref())?;
        BiVirusSystem::new(d1, b1, d2, b2).map_err(|e| CliError::field("virus1/virus2", e.to_string()))
    }

    pub fn initial_state(&self) -> CliResult<EpidemicState> {
        let n = self.size()?;
        let spec = &self.initial;
        match (&spec.pattern, &spec.x1, &spec.x2) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => Err(CliError::field(
                "initial",
                "give either `pattern` or explicit `x1`/`x2`, not both",
            )),
            (None, None, None) => named_initial("initial", "ic1", n),
            (Some(p), None, None) => named_initial("initial.pattern", p, n),
            (None, x1, x2) => {
                let zeros = vec![0.0; n];
                let x1 = x1.as_deref().unwrap_or(&zeros);
                let x2 = x2.as_deref().unwrap_or(&zeros);
                for (field, v) in [("initial.x1", x1), ("initial.x2", x2)] {
                    if v.len() != n {
                        return Err(CliError::field(field, format!("has size {}, expected {n}", v.len())));
                    }
                }
                EpidemicState::from_slices(x1, x2).map_err(|e| CliError::field("initial", e.to_string()))
            }
        }
    }

    pub fn integrator(&self) -> CliResult<IntegratorConfig> {
        let s = &self.integrator;
        let cfg = IntegratorConfig {
            dt: s.dt,
            t_max: s.t_max,
            convergence_tol: s.convergence_tol,
            clamp_tol: s.clamp_tol,
            sample_interval: s.sample_interval,
        };
        cfg.validate().map_err(|e| CliError::field("integrator", e.to_string()))?;
        Ok(cfg)
    }

    pub fn gains(&self) -> CliResult<Option<(ControlGains, ControlGains)>> {
        let Some(c) = &self.control else {
            return Ok(None);
        };
        let n = self.size()?;
        let k = |field: &str, spec: &VectorSpec| -> CliResult<ControlGains> {
            let v = expand_vector(field, spec, n)?;
            ControlGains::new(v).map_err(|e| CliError::field(field, e.to_string()))
        };
        Ok(Some((k("control.k1", &c.k1)?, k("control.k2", &c.k2)?)))
    }

    pub fn resolve(&self) -> CliResult<Scenario> {
        if let Some(m) = &self.markov {
            if !(m.t >= 0.0 && m.t.is_finite()) {
                return Err(CliError::field("markov.t", "must be finite and nonnegative"));
            }
            if !(m.dt > 0.0 && m.dt.is_finite()) {
                return Err(CliError::field("markov.dt", "must be positive"));
            }
        }
        Ok(Scenario {
            system: self.system()?,
            graph: self.graph()?,
            initial: self.initial_state()?,
            integrator: self.integrator()?,
            gains: self.gains()?,
            markov: self.markov.clone(),
            output_dir: self.output.dir.clone(),
        })
    }
}

fn named_initial(field: &str, name: &str, n: usize) -> CliResult<EpidemicState> {
    let p = InitialPattern::parse(name)
        .ok_or_else(|| CliError::field(field, format!("unknown pattern `{name}` (expected ic1, ic2 or ic3)")))?;
    p.state(n)
        .ok_or_else(|| CliError::field(field, format!("pattern {} needs at least {} nodes", p.name(), p.min_nodes())))
}

fn expand_vector(field: &str, spec: &VectorSpec, n: usize) -> CliResult<DVector<f64>> {
    match spec {
        VectorSpec::Scalar(v) => Ok(DVector::from_element(n, *v)),
        VectorSpec::Vector(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
        VectorSpec::Vector(v) => Err(CliError::field(field, format!("has size {}, expected {n}", v.len()))),
    }
}

fn resolve_virus(
    name: &str,
    spec: &VirusSpec,
    n: usize,
    graph: Option<&AdjacencyMatrix>,
) -> CliResult<(HealingRates, InfectionMatrix)> {
    let delta_field = format!("{name}.delta");
    let beta_field = format!("{name}.beta");
    let d = HealingRates::new(expand_vector(&delta_field, &spec.delta, n)?)
        .map_err(|e| CliError::field(&delta_field, e.to_string()))?;
    let b = match (&spec.beta, graph) {
        (MatrixSpec::Scalar(beta), Some(a)) => build_infection_matrix(a, &InfectionRates::Homogeneous(*beta)),
        (MatrixSpec::Scalar(_), None) => {
            return Err(CliError::field(&beta_field, "a scalar rate needs a [graph] section"));
        }
        (MatrixSpec::Matrix(rows), graph) => {
            let m = matrix_from_rows(rows).map_err(|e| CliError::field(&beta_field, e.to_string()))?;
            match graph {
                Some(a) => build_infection_matrix(a, &InfectionRates::PerEdge(m)),
                None => InfectionMatrix::new(m),
            }
        }
    }
    .map_err(|e| CliError::field(&beta_field, e.to_string()))?;
    if !b.is_irreducible() {
        return Err(CliError::field(&beta_field, "infection matrix is reducible (graph not strongly connected)"));
    }
    Ok((d, b))
}
