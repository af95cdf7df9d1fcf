use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bivirus::control::{constant_rate_stabilizer, controlled_single_demo, impossibility_demo};
use bivirus::dynamics::{simulate_bivirus, BiVirusSystem, EpidemicState, Trajectory};
use bivirus::equilibria::{
    boundary_equilibria, classify_stability, coexistence_pair, homogeneous_ratios, proportionality_factor,
    search_interior_equilibria, EquilibriumKind, RegimeLabel,
};
use bivirus::markov::meanfield_comparison;
use bivirus::sensitivity::dominant_virus_jacobians;
use bivirus::spectral::threshold_indicators;
use serde::Serialize;
use serde_json::json;

use crate::config::{Scenario, ScenarioConfig};
use crate::error::{CliError, CliResult, Context};
use crate::format::CsvOut;
use crate::instances;
use crate::report::{
    CoexistenceEntry, EquilibriumEntry, InteriorEntry, PointEntry, RunReport, SimulationEntry, ThresholdEntry,
};

/// Split factors at which the coexistence family is sampled.
pub const COEXISTENCE_SAMPLES: [f64; 3] = [0.5, 1.0, 2.0];
/// Random interior starts used to look for interior equilibria.
pub const INTERIOR_STARTS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: u64,
}

impl RunOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self { out: out.into(), seed: 0 }
    }

    fn ensure_out(&self) -> CliResult<()> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Thresholds, regime, boundary equilibria and, for proportional viruses,
/// samples of the coexistence family.
struct Analysis {
    regime: RegimeLabel,
    thresholds: Vec<ThresholdEntry>,
    equilibria: Vec<EquilibriumEntry>,
    points: Vec<(EquilibriumKind, EpidemicState)>,
    coexistence: Option<CoexistenceEntry>,
}

fn analysis(sys: &BiVirusSystem) -> CliResult<Analysis> {
    let t1 = threshold_indicators(sys.d1(), sys.b1()).context("virus 1 threshold")?;
    let t2 = threshold_indicators(sys.d2(), sys.b2()).context("virus 2 threshold")?;
    let regime = RegimeLabel::from_abscissae(t1.abscissa, t2.abscissa);
    let reports = boundary_equilibria(sys).context("boundary equilibria")?;
    let coexistence = if regime == RegimeLabel::BothSupercritical {
        Some(coexistence_entry(sys)?)
    } else {
        None
    };
    Ok(Analysis {
        regime,
        thresholds: vec![ThresholdEntry::new(1, &t1), ThresholdEntry::new(2, &t2)],
        equilibria: reports.iter().map(EquilibriumEntry::from_report).collect(),
        points: reports.into_iter().map(|r| (r.kind, r.point)).collect(),
        coexistence,
    })
}

fn coexistence_entry(sys: &BiVirusSystem) -> CliResult<CoexistenceEntry> {
    let Some(kappa) = proportionality_factor(sys) else {
        return Ok(CoexistenceEntry {
            applicable: false,
            factor: None,
            ratios: homogeneous_ratios(sys).map(|(a, b)| [a, b]),
            samples: Vec::new(),
        });
    };
    let mut samples = Vec::new();
    for alpha in COEXISTENCE_SAMPLES {
        let point = coexistence_pair(sys, alpha).context("coexistence pair")?;
        let report = classify_stability(sys, &point).context("coexistence stability")?;
        samples.push(EquilibriumEntry {
            alpha: Some(alpha),
            ..EquilibriumEntry::from_report(&report)
        });
    }
    Ok(CoexistenceEntry {
        applicable: true,
        factor: Some(kappa),
        ratios: None,
        samples,
    })
}

fn base_report(command: &str, n: usize, a: Analysis) -> (RunReport, Vec<(EquilibriumKind, EpidemicState)>) {
    (
        RunReport {
            command: command.into(),
            n,
            regime: a.regime.name().into(),
            thresholds: a.thresholds,
            equilibria: a.equilibria,
            coexistence: a.coexistence,
            interior_search: None,
            simulation: None,
            details: None,
            files: Vec::new(),
            wall_time_secs: 0.0,
        },
        a.points,
    )
}

fn point_entry(s: &EpidemicState) -> PointEntry {
    PointEntry {
        x1: s.x1.iter().copied().collect(),
        x2: s.x2.iter().copied().collect(),
    }
}

fn finish(mut report: RunReport, started: Instant, opts: &RunOptions) -> CliResult<RunReport> {
    report.wall_time_secs = started.elapsed().as_secs_f64();
    write_json(&opts.path("report.json"), &report)?;
    Ok(report)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// Header `t, <prefix>_1, ..`: one column per state component.
pub fn write_trajectory(path: &Path, traj: &Trajectory, prefixes: &[&str]) -> CliResult<()> {
    let dim = traj.states.first().map_or(0, Vec::len);
    let per = dim / prefixes.len().max(1);
    let mut header = vec!["t".to_string()];
    for p in prefixes {
        header.extend((1..=per).map(|i| format!("{p}_{i}")));
    }
    let mut out = CsvOut::create(path, &header)?;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        out.float_row(std::iter::once(*t).chain(s.iter().copied()))?;
    }
    out.finish()
}

/// Thresholds, regime and equilibria without any time integration.
pub fn analyze(cfg: &ScenarioConfig, opts: &RunOptions) -> CliResult<RunReport> {
    let started = Instant::now();
    let sc = cfg.resolve()?;
    opts.ensure_out()?;
    let (report, _) = base_report("analyze", sc.system.n(), analysis(&sc.system)?);
    finish(report, started, opts)
}

fn predicted(regime: RegimeLabel, points: &[(EquilibriumKind, EpidemicState)], n: usize) -> Option<EpidemicState> {
    let want = match regime {
        RegimeLabel::HealthyGlobal => return Some(EpidemicState::healthy(n)),
        RegimeLabel::Virus1Dominant => EquilibriumKind::Virus1Only,
        RegimeLabel::Virus2Dominant => EquilibriumKind::Virus2Only,
        _ => return None,
    };
    points.iter().find(|(k, _)| *k == want).map(|(_, p)| p.clone())
}

/// Full run: analysis, trajectory from the configured start, and a search
/// for interior equilibria when both viruses are supercritical without
/// being proportional.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> CliResult<RunReport> {
    let started = Instant::now();
    let sc = cfg.resolve()?;
    opts.ensure_out()?;
    let n = sc.system.n();
    let (mut report, points) = base_report("simulate", n, analysis(&sc.system)?);
    let regime = RegimeLabel::from_abscissae(report.thresholds[0].abscissa, report.thresholds[1].abscissa);

    let traj = simulate_bivirus(&sc.system, &sc.initial, &sc.integrator).context("simulation")?;
    let path = opts.path("trajectory.csv");
    write_trajectory(&path, &traj, &["x1", "x2"])?;
    report.files.push(path);

    let last = traj.final_bivirus_state();
    let predicted = predicted(regime, &points, n);
    let distance = predicted.as_ref().map(|p| {
        p.to_flat()
            .iter()
            .zip(last.to_flat())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    });
    report.simulation = Some(SimulationEntry {
        termination: traj.termination.name().into(),
        steps: traj.steps,
        samples: traj.len(),
        final_time: traj.final_time(),
        final_state: point_entry(&last),
        max_correction: traj.max_correction,
        predicted: predicted.as_ref().map(point_entry),
        distance_to_predicted: distance,
    });

    let needs_search = regime == RegimeLabel::BothSupercritical
        && report.coexistence.as_ref().is_some_and(|c| !c.applicable);
    if needs_search {
        let mut rng = instances::rng(opts.seed);
        let starts: Vec<EpidemicState> = (0..INTERIOR_STARTS).map(|_| instances::interior_state(&mut rng, n)).collect();
        let search = search_interior_equilibria(&sc.system, &starts, &sc.integrator).context("interior search")?;
        report.interior_search = Some(InteriorEntry {
            starts: search.starts,
            converged_runs: search.converged_runs,
            exhaustive: search.exhaustive,
            found: search.found.iter().map(EquilibriumEntry::from_report).collect(),
        });
    }
    finish(report, started, opts)
}

/// Exact chain against the mean-field model at the configured horizon.
pub fn markov_compare(cfg: &ScenarioConfig, opts: &RunOptions) -> CliResult<RunReport> {
    let started = Instant::now();
    let sc = cfg.resolve()?;
    let spec = sc
        .markov
        .clone()
        .ok_or_else(|| CliError::field("markov", "section required by markov-compare"))?;
    opts.ensure_out()?;
    let (mut report, _) = base_report("markov-compare", sc.system.n(), analysis(&sc.system)?);
    let cmp = meanfield_comparison(&sc.system, &sc.initial, spec.t, spec.dt, &sc.integrator)
        .context("mean-field comparison")?;

    let path = opts.path("markov_compare.csv");
    let header: Vec<String> = ["node", "chain_v1", "chain_v2", "meanfield_x1", "meanfield_x2"]
        .map(String::from)
        .to_vec();
    let mut out = CsvOut::create(&path, &header)?;
    for i in 0..sc.system.n() {
        let mut row = vec![(i + 1).to_string()];
        row.extend(
            [cmp.chain_v1[i], cmp.chain_v2[i], cmp.meanfield.x1[i], cmp.meanfield.x2[i]].map(crate::format::fmt_float),
        );
        out.row(&row)?;
    }
    out.finish()?;
    report.files.push(path);
    report.details = Some(json!({
        "t": spec.t,
        "error": cmp.error,
        "chain_dt": cmp.chain.dt,
        "chain_steps": cmp.chain.steps,
        "chain_t_reached": cmp.chain.t_reached,
        "max_mass_drift": cmp.chain.max_mass_drift,
        "healthy_probability": cmp.chain.distribution.healthy_probability(),
        "fast_forward_error_bound": cmp.chain.fast_forward.map(|f| f.error_bound),
    }));
    finish(report, started, opts)
}

/// Sensitivity of the surviving virus' epidemic state to its rates.
pub fn sensitivity(cfg: &ScenarioConfig, opts: &RunOptions) -> CliResult<RunReport> {
    let started = Instant::now();
    let sc = cfg.resolve()?;
    opts.ensure_out()?;
    let n = sc.system.n();
    let (mut report, points) = base_report("sensitivity", n, analysis(&sc.system)?);
    let (virus, jac) = dominant_virus_jacobians(&sc.system).context("sensitivity")?;

    let path = opts.path("sensitivity_delta.csv");
    let mut header = vec!["node".to_string()];
    header.extend((1..=n).map(|j| format!("delta_{j}")));
    write_matrix(&path, &header, &jac.wrt_delta)?;
    report.files.push(path);

    let path = opts.path("sensitivity_beta.csv");
    let mut header = vec!["node".to_string()];
    header.extend((1..=n).flat_map(|i| (1..=n).map(move |j| format!("beta_{i}_{j}"))));
    write_matrix(&path, &header, &jac.wrt_beta)?;
    report.files.push(path);

    let (_, b) = sc.system.virus(virus);
    let kind = if virus == 1 { EquilibriumKind::Virus1Only } else { EquilibriumKind::Virus2Only };
    report.details = Some(json!({
        "virus": virus,
        "equilibrium": points.iter().find(|(k, _)| *k == kind).map(|(_, p)| point_entry(p)),
        "sign_law": jac.satisfies_sign_law(b),
    }));
    finish(report, started, opts)
}

fn write_matrix(path: &Path, header: &[String], m: &bivirus::DMatrix<f64>) -> CliResult<()> {
    let mut out = CsvOut::create(path, header)?;
    for (i, row) in m.row_iter().enumerate() {
        let mut cells = vec![(i + 1).to_string()];
        cells.extend(row.iter().map(|&v| crate::format::fmt_float(v)));
        out.row(&cells)?;
    }
    out.finish()
}

/// Closed-loop runs under proportional healing, plus the constant-rate
/// stabilizer of each virus.
pub fn control(cfg: &ScenarioConfig, opts: &RunOptions) -> CliResult<RunReport> {
    let started = Instant::now();
    let sc: Scenario = cfg.resolve()?;
    let (k1, k2) = sc
        .gains
        .clone()
        .ok_or_else(|| CliError::field("control", "section required by control"))?;
    opts.ensure_out()?;
    let sys = &sc.system;
    let (mut report, _) = base_report("control", sys.n(), analysis(sys)?);

    let both = impossibility_demo(&k1, &k2, sys.b1(), sys.b2(), &sc.initial, &sc.integrator)
        .context("controlled bi-virus run")?;
    let path = opts.path("control_bivirus.csv");
    write_trajectory(&path, &both.trajectory, &["x1", "x2"])?;
    report.files.push(path);

    let single = if sc.initial.x1.amax() > 0.0 {
        let r = controlled_single_demo(&k1, sys.b1(), &sc.initial.x1, &sc.integrator)
            .context("controlled single-virus run")?;
        let path = opts.path("control_single.csv");
        write_trajectory(&path, &r.trajectory, &["x"])?;
        report.files.push(path);
        Some(json!({
            "equilibrium": r.equilibrium.iter().copied().collect::<Vec<f64>>(),
            "final_distance": r.final_distance,
            "monotone_growth": r.monotone_growth,
            "min_relative_norm": r.min_relative_norm,
            "converged": r.converged,
        }))
    } else {
        None
    };

    let mut stabilizers = Vec::new();
    for k in [1, 2] {
        let (_, b) = sys.virus(k);
        let d = constant_rate_stabilizer(b).context("constant-rate stabilizer")?;
        stabilizers.push(json!({
            "virus": k,
            "delta": d.as_slice(),
            "abscissa": instances::abscissa(&d, b),
        }));
    }
    report.details = Some(json!({
        "bivirus": {
            "termination": both.trajectory.termination.name(),
            "late_window": [both.late_window.0, both.late_window.1],
            "late_min_infection": both.late_min_infection,
            "floor": both.floor,
            "persists": both.persists,
        },
        "single": single,
        "stabilizers": stabilizers,
    }));
    finish(report, started, opts)
}
