//! Healing-rate feedback: the constant-rate stabilizer and the proportional
//! controller `delta_i = k_i x_i`, which cannot drive an epidemic to zero.

use nalgebra::DVector;

use crate::dynamics::{
    integrate, ControlGains, ControlledBiVirusField, ControlledSingleField, EpidemicState,
    IntegratorConfig, Termination, Trajectory,
};
use crate::equilibria::single_virus_equilibrium;
use crate::error::{Error, Result};
use crate::netstruct::{HealingRates, InfectionMatrix};
use crate::spectral::{spectral_abscissa_metzler, stability_matrix, CRITICAL_BAND};

/// Healing rates equal to the infection row sums, `delta_i = sum_j beta_ij`,
/// which puts `s(-D+B)` exactly at zero.
pub fn constant_rate_stabilizer(b: &InfectionMatrix) -> Result<HealingRates> {
    b.require_irreducible("infection matrix")?;
    let m = b.matrix();
    let sums: Vec<f64> = (0..b.n()).map(|i| m.row(i).sum()).collect();
    if let Some(i) = sums.iter().position(|&s| s <= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "row {i} of the infection matrix is zero; its healing rate would vanish"
        )));
    }
    let d = HealingRates::from_slice(&sums)?;
    let s = spectral_abscissa_metzler(&stability_matrix(&d, b)?)?.value;
    if s.abs() > CRITICAL_BAND {
        return Err(Error::Invariant(format!(
            "row-sum healing rates should give s(-D+B) = 0, got {s:e}"
        )));
    }
    Ok(d)
}

/// Nonzero equilibrium of `dx = -K X x + (I - X) B x`, which is the epidemic
/// state of the plain model with healing `K` and infection `K + B`.
pub fn controlled_equilibrium_single(k: &ControlGains, b: &InfectionMatrix) -> Result<DVector<f64>> {
    if k.n() != b.n() {
        return Err(Error::DimensionMismatch {
            context: "feedback gains",
            expected: b.n(),
            found: k.n(),
        });
    }
    let d = HealingRates::new(k.as_vector().clone())?;
    single_virus_equilibrium(&d, &b.with_added_diagonal(k.as_vector())?)
}

/// Outcome of a closed-loop simulation under proportional healing.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpossibilityReport {
    pub trajectory: Trajectory,
    /// Samples with `t >= t_end / 2`, where `t_end` is the final sample time.
    pub late_window: (f64, f64),
    /// Smallest `max_i (x1_i + x2_i)` over the late window.
    pub late_min_infection: f64,
    /// `max(1e-3, ||x1(0) + x2(0)||_inf / 10)`.
    pub floor: f64,
    pub persists: bool,
}

/// Both viruses under proportional healing. Certifies numerically that the
/// infection does not die out: the late-window minimum of
/// `||x1 + x2||_inf` must stay above the floor.
pub fn impossibility_demo(
    k1: &ControlGains,
    k2: &ControlGains,
    b1: &InfectionMatrix,
    b2: &InfectionMatrix,
    x0: &EpidemicState,
    cfg: &IntegratorConfig,
) -> Result<ImpossibilityReport> {
    let n = b1.n();
    for (context, found) in [
        ("virus 2 infection matrix", b2.n()),
        ("virus 1 gains", k1.n()),
        ("virus 2 gains", k2.n()),
        ("initial state", x0.n()),
    ] {
        if found != n {
            return Err(Error::DimensionMismatch {
                context,
                expected: n,
                found,
            });
        }
    }
    b1.require_irreducible("virus 1 infection matrix")?;
    b2.require_irreducible("virus 2 infection matrix")?;
    if x0.total_infection_inf_norm() <= 0.0 {
        return Err(Error::InvalidState(
            "at least one virus must be present initially".into(),
        ));
    }
    let field = ControlledBiVirusField { k1, k2, b1, b2 };
    let trajectory = integrate(&field, &x0.to_flat(), cfg)?;
    let floor = (x0.total_infection_inf_norm() / 10.0).max(1e-3);
    let (late_window, late_min_infection) = late_minimum(&trajectory, |s| {
        EpidemicState::from_flat(s).total_infection_inf_norm()
    });
    Ok(ImpossibilityReport {
        persists: trajectory.termination != Termination::Diverged && late_min_infection >= floor,
        trajectory,
        late_window,
        late_min_infection,
        floor,
    })
}

fn late_minimum(traj: &Trajectory, measure: impl Fn(&[f64]) -> f64) -> ((f64, f64), f64) {
    let t_end = traj.final_time();
    let start = t_end / 2.0;
    let min = traj
        .times
        .iter()
        .zip(&traj.states)
        .filter(|(t, _)| **t >= start)
        .map(|(_, s)| measure(s))
        .fold(f64::INFINITY, f64::min);
    ((start, t_end), min)
}

/// Single virus under proportional healing.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledSingleReport {
    pub trajectory: Trajectory,
    pub equilibrium: DVector<f64>,
    /// `||x(t_end) - x*||_inf`.
    pub final_distance: f64,
    /// `||x(t)||_inf` never decreased between samples before the trajectory
    /// came within `1e-6` of `x*`.
    pub monotone_growth: bool,
    /// Smallest `||x(t)||_inf` over the run, relative to `||x(0)||_inf`.
    pub min_relative_norm: f64,
    pub converged: bool,
}

/// Integrates the controlled single virus and compares the end point with
/// [`controlled_equilibrium_single`].
pub fn controlled_single_demo(
    k: &ControlGains,
    b: &InfectionMatrix,
    x0: &DVector<f64>,
    cfg: &IntegratorConfig,
) -> Result<ControlledSingleReport> {
    let equilibrium = controlled_equilibrium_single(k, b)?;
    if x0.len() != b.n() {
        return Err(Error::DimensionMismatch {
            context: "initial state",
            expected: b.n(),
            found: x0.len(),
        });
    }
    let x0_norm = x0.amax();
    if x0_norm <= 0.0 {
        return Err(Error::InvalidState("initial infection must be nonzero".into()));
    }
    let trajectory = integrate(&ControlledSingleField { k, b }, x0.as_slice(), cfg)?;
    let distance = |s: &[f64]| {
        s.iter()
            .zip(equilibrium.iter())
            .map(|(a, e)| (a - e).abs())
            .fold(0.0, f64::max)
    };
    let norm = |s: &[f64]| s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut monotone_growth = true;
    let mut min_norm = f64::INFINITY;
    for pair in trajectory.states.windows(2) {
        min_norm = min_norm.min(norm(&pair[0]));
        if distance(&pair[0]) <= 1e-6 {
            continue;
        }
        if norm(&pair[1]) < norm(&pair[0]) {
            monotone_growth = false;
        }
    }
    let last = trajectory.final_state();
    min_norm = min_norm.min(norm(last));
    let final_distance = distance(last);
    Ok(ControlledSingleReport {
        converged: final_distance <= 1e-6,
        equilibrium,
        final_distance,
        monotone_growth,
        min_relative_norm: min_norm / x0_norm,
        trajectory,
    })
}
