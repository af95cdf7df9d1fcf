//! Mean-field versus exact-chain error over a grid of graphs, sizes, rates
//! and initial conditions.

use std::path::{Path, PathBuf};

use bivirus::dynamics::{BiVirusSystem, IntegratorConfig};
use bivirus::markov::{build_generator, meanfield_comparison};
use bivirus::netstruct::{build_infection_matrix, generate_graph, GraphKind, HealingRates, InfectionRates};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::InitialPattern;
use crate::error::{CliError, CliResult, Context};
use crate::format::{fmt_float, CsvOut};

/// `(beta, delta)` pairs of the reference grid.
pub const REFERENCE_PAIRS: [[f64; 2]; 7] = [
    [0.1, 1.0],
    [0.215, 1.0],
    [0.464, 1.0],
    [0.5, 0.5],
    [1.0, 0.464],
    [1.0, 0.215],
    [1.0, 0.1],
];

/// Healthy-state probability may dip by this much per step from round-off.
pub const HEALTHY_MONOTONE_TOL: f64 = 1e-14;

pub const CSV_HEADER: [&str; 7] = ["graph", "n", "beta", "delta", "init_id", "T", "error"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub graphs: Vec<String>,
    pub sizes: Vec<usize>,
    /// `[beta, delta]`.
    pub pairs: Vec<[f64; 2]>,
    pub initial: Vec<String>,
    /// Comparison time `T`.
    pub t: f64,
    /// Requested chain step (capped by the chain integrator).
    pub chain_dt: f64,
    pub ode_dt: f64,
    /// Largest node count accepted.
    pub max_n: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            graphs: ["line", "star", "complete"].map(String::from).to_vec(),
            sizes: vec![4, 6, 8],
            pairs: REFERENCE_PAIRS.to_vec(),
            initial: InitialPattern::ALL.map(|p| p.name().to_string()).to_vec(),
            t: 10_000.0,
            chain_dt: 0.1,
            ode_dt: 0.01,
            max_n: 8,
        }
    }
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Syntax(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Cells in output order: graph, then n, then rate pair, then initial condition.
    pub fn cells(&self) -> CliResult<Vec<Cell>> {
        let graphs = self
            .graphs
            .iter()
            .map(|g| g.parse::<GraphKind>().map_err(|e| CliError::field("graphs", e.to_string())))
            .collect::<CliResult<Vec<_>>>()?;
        let patterns = self
            .initial
            .iter()
            .map(|p| InitialPattern::parse(p).ok_or_else(|| CliError::field("initial", format!("unknown pattern `{p}`"))))
            .collect::<CliResult<Vec<_>>>()?;
        if let Some(&n) = self.sizes.iter().find(|&&n| n > self.max_n) {
            return Err(CliError::Guard(format!(
                "n = {n} exceeds max_n = {} (chain has 3^n states)",
                self.max_n
            )));
        }
        for &[beta, delta] in &self.pairs {
            if !(beta > 0.0 && delta > 0.0 && beta.is_finite() && delta.is_finite()) {
                return Err(CliError::field("pairs", format!("rates must be positive, got [{beta}, {delta}]")));
            }
        }
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(CliError::field("t", "must be finite and nonnegative"));
        }
        if !(self.chain_dt > 0.0 && self.ode_dt > 0.0) {
            return Err(CliError::field("chain_dt/ode_dt", "steps must be positive"));
        }
        let mut cells = Vec::new();
        for &graph in &graphs {
            for &n in &self.sizes {
                for &[beta, delta] in &self.pairs {
                    for &pattern in &patterns {
                        if n < pattern.min_nodes() {
                            return Err(CliError::field(
                                "initial",
                                format!("{} needs n >= {}", pattern.name(), pattern.min_nodes()),
                            ));
                        }
                        cells.push(Cell {
                            index: cells.len(),
                            graph,
                            n,
                            beta,
                            delta,
                            pattern,
                        });
                    }
                }
            }
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub graph: GraphKind,
    pub n: usize,
    pub beta: f64,
    pub delta: f64,
    pub pattern: InitialPattern,
}

impl Cell {
    /// Two identical viruses with rate `beta` on every edge and healing `delta`.
    pub fn system(&self) -> CliResult<BiVirusSystem> {
        let a = generate_graph(self.graph, self.n, false).context("graph")?;
        let b = build_infection_matrix(&a, &InfectionRates::Homogeneous(self.beta)).context("infection matrix")?;
        let d = HealingRates::uniform(self.n, self.delta).context("healing rates")?;
        BiVirusSystem::new(d.clone(), b.clone(), d, b).context("system")
    }

    pub fn ratio(&self) -> f64 {
        self.beta / self.delta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub t: f64,
    pub error: f64,
    /// `max_k |sum_l Q_kl|` over all states.
    pub generator_row_sum: f64,
    pub max_mass_drift: f64,
    pub final_mass: f64,
    pub min_healthy_increment: f64,
    pub chain_t_reached: f64,
    pub fast_forward_bound: Option<f64>,
}

impl CellResult {
    pub fn healthy_monotone(&self) -> bool {
        self.min_healthy_increment >= -HEALTHY_MONOTONE_TOL
    }

    fn csv_row(&self) -> Vec<String> {
        let c = &self.cell;
        vec![
            c.graph.name().to_string(),
            c.n.to_string(),
            fmt_float(c.beta),
            fmt_float(c.delta),
            c.pattern.name().to_string(),
            fmt_float(self.t),
            fmt_float(self.error),
        ]
    }
}

pub fn run_cell(cell: &Cell, cfg: &SweepConfig) -> CliResult<CellResult> {
    let sys = cell.system()?;
    let x0 = cell
        .pattern
        .state(cell.n)
        .ok_or_else(|| CliError::field("initial", "pattern does not fit n"))?;
    let q = build_generator(sys.d1(), sys.d2(), sys.b1(), sys.b2()).context("generator")?;
    let generator_row_sum = (0..q.dim()).map(|k| q.row_sum(k).abs()).fold(0.0, f64::max);
    let ode = IntegratorConfig {
        dt: cfg.ode_dt,
        ..IntegratorConfig::default()
    };
    let cmp = meanfield_comparison(&sys, &x0, cfg.t, cfg.chain_dt, &ode).context(format!(
        "{} n={} beta={} delta={} {}",
        cell.graph, cell.n, cell.beta, cell.delta, cell.pattern.name()
    ))?;
    Ok(CellResult {
        cell: *cell,
        t: cfg.t,
        error: cmp.error,
        generator_row_sum,
        max_mass_drift: cmp.chain.max_mass_drift,
        final_mass: cmp.chain.distribution.total_mass(),
        min_healthy_increment: cmp.chain.min_healthy_increment,
        chain_t_reached: cmp.chain.t_reached,
        fast_forward_bound: cmp.chain.fast_forward.map(|f| f.error_bound),
    })
}

/// Runs every cell (in parallel on `jobs` threads, all cores when `None`)
/// and writes `approx_experiment.csv` into `out` in cell order.
pub fn run_approx_experiment(
    cfg: &SweepConfig,
    out: &Path,
    jobs: Option<usize>,
) -> CliResult<(PathBuf, Vec<CellResult>)> {
    let cells = cfg.cells()?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder.build()?;
    let results: Vec<CellResult> =
        pool.install(|| cells.par_iter().map(|c| run_cell(c, cfg)).collect::<CliResult<_>>())?;

    let path = out.join("approx_experiment.csv");
    let mut csv = CsvOut::create(&path, &CSV_HEADER.map(String::from))?;
    for r in &results {
        csv.row(&r.csv_row())?;
    }
    csv.finish()?;
    Ok((path, results))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_grid_has_189_cells() {
        let cells = SweepConfig::default().cells().unwrap();
        assert_eq!(cells.len(), 189);
        assert_eq!(cells[0].graph, GraphKind::Line);
        assert_eq!(cells[188].graph, GraphKind::Complete);
        assert!(cells.iter().enumerate().all(|(i, c)| c.index == i));
    }

    #[test]
    fn guard_rejects_large_n() {
        let cfg = SweepConfig {
            sizes: vec![9],
            ..SweepConfig::default()
        };
        assert!(matches!(cfg.cells(), Err(CliError::Guard(_))));
    }

    #[test]
    fn small_sweep_is_deterministic() {
        let cfg = SweepConfig {
            graphs: vec!["line".into(), "star".into()],
            sizes: vec![4],
            pairs: vec![[0.1, 1.0], [1.0, 0.464]],
            t: 50.0,
            ..SweepConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let (p1, r1) = run_approx_experiment(&cfg, &dir.path().join("a"), Some(1)).unwrap();
        let (p2, _) = run_approx_experiment(&cfg, &dir.path().join("b"), Some(2)).unwrap();
        let (a, b) = (std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
        assert_eq!(a, b);
        assert_eq!(r1.len(), 12);
        assert!(r1.iter().all(|r| r.error.is_finite() && r.error >= 0.0 && r.healthy_monotone()));
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("graph,n,beta,delta,init_id,T,error\nline,4,0.1,1,ic1,50,"));
    }
}
