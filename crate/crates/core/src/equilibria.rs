//! Equilibria of the single- and bi-virus systems, their Jacobians and
//! stability, and the parameter-regime classification.

use std::fmt;

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;

use crate::dynamics::{
    integrate, rhs_bivirus, rhs_single, BiVirusField, BiVirusSystem, EpidemicState,
    IntegratorConfig, Termination,
};
use crate::error::{Error, Result};
use crate::netstruct::{HealingRates, InfectionMatrix};
use crate::spectral::{
    eigen_all, spectral_abscissa_metzler, spectral_radius_nonneg, stability_matrix, CRITICAL_BAND,
};

/// Residual every returned equilibrium must meet.
pub const EQUILIBRIUM_TOL: f64 = 1e-10;
/// Largest residual accepted by [`classify_stability`].
pub const STABILITY_INPUT_TOL: f64 = 1e-8;
/// Band around zero in which the largest Jacobian real part counts as marginal.
pub const MARGINAL_BAND: f64 = 1e-7;

/// Parameters of the monotone fixed-point map
/// `f_i(x) = y_i / (1 - c/(c + delta_i) + y_i)` with `y = (D + cI)^-1 B x`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointConfig {
    /// Diagonal shift, `0 < c < s(-D+B)`.
    pub shift: f64,
    /// Scale of the starting point `epsilon * v`.
    pub epsilon: f64,
    /// Perron vector of `(D + cI)^-1 B`, max entry 1.
    pub perron_vector: DVector<f64>,
    /// Perron root of `(D + cI)^-1 B`; exceeds 1 by construction.
    pub perron_root: f64,
    pub max_iters: usize,
    /// Stop once the max-norm step falls below this.
    pub tol: f64,
}

impl FixedPointConfig {
    /// Shift `c = s/2` and the largest admissible start scale, halved.
    pub fn for_system(d: &HealingRates, b: &InfectionMatrix) -> Result<Self> {
        b.require_irreducible("infection matrix")?;
        let s = spectral_abscissa_metzler(&stability_matrix(d, b)?)?.value;
        if s <= 0.0 {
            return Err(Error::NoEpidemicState { abscissa: s });
        }
        let shift = 0.5 * s;
        let pair = spectral_radius_nonneg(&shifted_ratio_matrix(d, b, shift))?;
        if pair.value <= 1.0 {
            return Err(Error::Invariant(format!(
                "rho((D + cI)^-1 B) = {} should exceed 1 when s(-D+B) = {s:e} > 0",
                pair.value
            )));
        }
        let epsilon = 0.5 * (pair.value - 1.0) / pair.value;
        Ok(Self {
            shift,
            epsilon,
            perron_vector: pair.vector,
            perron_root: pair.value,
            max_iters: 100_000,
            tol: 1e-12,
        })
    }

    /// `epsilon * v`, the lower corner of the invariant set.
    pub fn start(&self) -> DVector<f64> {
        &self.perron_vector * self.epsilon
    }
}

fn shifted_ratio_matrix(d: &HealingRates, b: &InfectionMatrix, c: f64) -> DMatrix<f64> {
    let mut p = b.matrix().clone();
    for (i, &delta) in d.as_slice().iter().enumerate() {
        p.row_mut(i).scale_mut(1.0 / (delta + c));
    }
    p
}

/// Result of [`single_virus_equilibrium_from`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// `||rhs_single(x)||_inf`.
    pub residual: f64,
    /// Newton steps applied after the fixed-point phase.
    pub newton_steps: usize,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Jacobian of `x -> -Dx + (I - X)Bx`: `-D + (I - X)B - diag(Bx)`.
pub fn single_virus_jacobian(d: &HealingRates, b: &InfectionMatrix, x: &DVector<f64>) -> DMatrix<f64> {
    let bm = b.matrix();
    let bx = bm * x;
    let n = x.len();
    let mut j = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in 0..n {
            j[(i, k)] = (1.0 - x[i]) * bm[(i, k)];
        }
        j[(i, i)] -= d.as_slice()[i] + bx[i];
    }
    j
}

/// Newton refinement; a step is kept only if it stays in `[0, 1]^n` and
/// lowers the residual.
fn newton_polish_single(
    d: &HealingRates,
    b: &InfectionMatrix,
    x: &mut DVector<f64>,
    residual: &mut f64,
) -> usize {
    let mut steps = 0;
    for _ in 0..8 {
        if *residual <= 1e-15 {
            break;
        }
        let f = match rhs_single(d, b, x) {
            Ok(f) => f,
            Err(_) => break,
        };
        let Some(delta) = single_virus_jacobian(d, b, x).lu().solve(&(-f)) else {
            break;
        };
        let candidate = &*x + delta;
        if candidate.iter().any(|v| !(0.0..=1.0).contains(v)) {
            break;
        }
        let r = match rhs_single(d, b, &candidate) {
            Ok(f) => inf_norm(&f),
            Err(_) => break,
        };
        if r >= *residual {
            break;
        }
        *x = candidate;
        *residual = r;
        steps += 1;
    }
    steps
}

/// Unique epidemic state of a supercritical single virus, from `epsilon v`.
pub fn single_virus_equilibrium(d: &HealingRates, b: &InfectionMatrix) -> Result<DVector<f64>> {
    let cfg = FixedPointConfig::for_system(d, b)?;
    Ok(single_virus_equilibrium_from(d, b, &cfg.start(), &cfg)?.x)
}

/// Fixed-point iteration from an explicit start in `(0, 1]^n`, followed by
/// Newton polishing.
pub fn single_virus_equilibrium_from(
    d: &HealingRates,
    b: &InfectionMatrix,
    start: &DVector<f64>,
    cfg: &FixedPointConfig,
) -> Result<FixedPointOutcome> {
    let n = b.n();
    if d.n() != n || start.len() != n || cfg.perron_vector.len() != n {
        return Err(Error::DimensionMismatch {
            context: "fixed-point iteration",
            expected: n,
            found: if d.n() != n { d.n() } else { start.len() },
        });
    }
    if start.iter().any(|v| !(v.is_finite() && *v > 0.0 && *v <= 1.0)) {
        return Err(Error::InvalidState(
            "fixed-point start must lie in (0, 1]^n".into(),
        ));
    }
    let p = shifted_ratio_matrix(d, b, cfg.shift);
    let keep: Vec<f64> = d
        .as_slice()
        .iter()
        .map(|&delta| delta / (delta + cfg.shift))
        .collect();
    let map = |x: &DVector<f64>| -> DVector<f64> {
        let y = &p * x;
        DVector::from_iterator(n, (0..n).map(|i| y[i] / (keep[i] + y[i])))
    };

    let mut x = start.clone();
    let mut prev_step: Option<DVector<f64>> = None;
    let mut damping = 1.0;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let step = map(&x) - &x;
        if let Some(prev) = &prev_step {
            // successive steps of opposite sign mean the iterate overshoots
            if damping == 1.0 && step.dot(prev) < 0.0 {
                damping = 0.5;
            }
        }
        x += &step * damping;
        let size = inf_norm(&step);
        prev_step = Some(step);
        if size <= cfg.tol {
            break;
        }
    }

    let mut residual = inf_norm(&rhs_single(d, b, &x)?);
    let newton_steps = newton_polish_single(d, b, &mut x, &mut residual);
    if residual > EQUILIBRIUM_TOL {
        return Err(Error::NonConvergence {
            what: "single-virus fixed-point iteration",
            iterations,
            residual,
        });
    }
    if d.all_positive() && x.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::Invariant(
            "epidemic state must satisfy 0 < x* < 1 when all healing rates are positive".into(),
        ));
    }
    Ok(FixedPointOutcome {
        x,
        iterations,
        residual,
        newton_steps,
    })
}

/// Parameter regime of a bi-virus system, from the two threshold signs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegimeLabel {
    HealthyGlobal,
    Virus1Dominant,
    Virus2Dominant,
    BothSupercritical,
    Critical,
}

impl RegimeLabel {
    /// Critical takes priority whenever either `|s_k| < 1e-9`.
    pub fn from_abscissae(s1: f64, s2: f64) -> Self {
        if s1.abs() < CRITICAL_BAND || s2.abs() < CRITICAL_BAND {
            return RegimeLabel::Critical;
        }
        match (s1 > 0.0, s2 > 0.0) {
            (false, false) => RegimeLabel::HealthyGlobal,
            (true, false) => RegimeLabel::Virus1Dominant,
            (false, true) => RegimeLabel::Virus2Dominant,
            (true, true) => RegimeLabel::BothSupercritical,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RegimeLabel::HealthyGlobal => "HealthyGlobal",
            RegimeLabel::Virus1Dominant => "Virus1Dominant",
            RegimeLabel::Virus2Dominant => "Virus2Dominant",
            RegimeLabel::BothSupercritical => "BothSupercritical",
            RegimeLabel::Critical => "Critical",
        }
    }
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `(s(-D1+B1), s(-D2+B2))`.
pub fn abscissae(sys: &BiVirusSystem) -> Result<(f64, f64)> {
    let s1 = spectral_abscissa_metzler(&stability_matrix(sys.d1(), sys.b1())?)?.value;
    let s2 = spectral_abscissa_metzler(&stability_matrix(sys.d2(), sys.b2())?)?.value;
    Ok((s1, s2))
}

pub fn classify_regime(sys: &BiVirusSystem) -> Result<RegimeLabel> {
    let (s1, s2) = abscissae(sys)?;
    Ok(RegimeLabel::from_abscissae(s1, s2))
}

/// Jacobian of the bi-virus vector field at `point`:
/// `[(I-X1-X2)B1 - D1 - diag(B1 x1), -diag(B1 x1); -diag(B2 x2), (I-X1-X2)B2 - D2 - diag(B2 x2)]`.
pub fn jacobian(sys: &BiVirusSystem, point: &EpidemicState) -> Result<DMatrix<f64>> {
    let n = sys.n();
    if point.n() != n {
        return Err(Error::DimensionMismatch {
            context: "Jacobian evaluation point",
            expected: n,
            found: point.n(),
        });
    }
    let (b1, b2) = (sys.b1().matrix(), sys.b2().matrix());
    let b1x = b1 * &point.x1;
    let b2x = b2 * &point.x2;
    let (d1, d2) = (sys.d1().as_slice(), sys.d2().as_slice());
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        let susceptible = 1.0 - point.x1[i] - point.x2[i];
        for k in 0..n {
            j[(i, k)] = susceptible * b1[(i, k)];
            j[(n + i, n + k)] = susceptible * b2[(i, k)];
        }
        j[(i, i)] -= d1[i] + b1x[i];
        j[(i, n + i)] = -b1x[i];
        j[(n + i, i)] = -b2x[i];
        j[(n + i, n + i)] -= d2[i] + b2x[i];
    }
    Ok(j)
}

/// Local stability from the largest real part of the Jacobian spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl Stability {
    pub fn from_max_real_part(re: f64) -> Self {
        if re < -MARGINAL_BAND {
            Stability::Stable
        } else if re > MARGINAL_BAND {
            Stability::Unstable
        } else {
            Stability::Marginal
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Marginal => "marginal",
        }
    }
}

impl fmt::Display for Stability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which family an equilibrium belongs to, read off its support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EquilibriumKind {
    Healthy,
    Virus1Only,
    Virus2Only,
    Coexisting,
}

impl EquilibriumKind {
    pub fn of(point: &EpidemicState) -> Self {
        let on1 = point.x1.iter().any(|&v| v > 0.0);
        let on2 = point.x2.iter().any(|&v| v > 0.0);
        match (on1, on2) {
            (false, false) => EquilibriumKind::Healthy,
            (true, false) => EquilibriumKind::Virus1Only,
            (false, true) => EquilibriumKind::Virus2Only,
            (true, true) => EquilibriumKind::Coexisting,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EquilibriumKind::Healthy => "healthy",
            EquilibriumKind::Virus1Only => "virus1",
            EquilibriumKind::Virus2Only => "virus2",
            EquilibriumKind::Coexisting => "coexisting",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport {
    pub kind: EquilibriumKind,
    pub point: EpidemicState,
    /// `||rhs_bivirus(point)||_inf`.
    pub residual: f64,
    /// Jacobian eigenvalues, real part descending.
    pub spectrum: Vec<Complex<f64>>,
    pub max_real_part: f64,
    pub stability: Stability,
    pub regime: RegimeLabel,
}

pub fn bivirus_residual(sys: &BiVirusSystem, point: &EpidemicState) -> Result<f64> {
    let (a, b) = rhs_bivirus(sys, point)?;
    Ok(inf_norm(&a).max(inf_norm(&b)))
}

/// Jacobian spectrum and stability label at an equilibrium.
pub fn classify_stability(sys: &BiVirusSystem, point: &EpidemicState) -> Result<EquilibriumReport> {
    let residual = bivirus_residual(sys, point)?;
    if residual > STABILITY_INPUT_TOL {
        return Err(Error::NotEquilibrium {
            residual,
            tolerance: STABILITY_INPUT_TOL,
        });
    }
    let spectrum = eigen_all(&jacobian(sys, point)?)?;
    Ok(EquilibriumReport {
        kind: EquilibriumKind::of(point),
        point: point.clone(),
        residual,
        stability: Stability::from_max_real_part(spectrum.max_real_part),
        max_real_part: spectrum.max_real_part,
        spectrum: spectrum.eigenvalues,
        regime: classify_regime(sys)?,
    })
}

/// Healthy state, plus `(x1*, 0)` when `s1 > 0` and `(0, x2*)` when `s2 > 0`.
pub fn boundary_equilibria(sys: &BiVirusSystem) -> Result<Vec<EquilibriumReport>> {
    let n = sys.n();
    let (s1, s2) = abscissae(sys)?;
    let mut reports = vec![classify_stability(sys, &EpidemicState::healthy(n))?];
    if s1 > 0.0 {
        let x1 = single_virus_equilibrium(sys.d1(), sys.b1())?;
        reports.push(classify_stability(sys, &EpidemicState::new(x1, DVector::zeros(n))?)?);
    }
    if s2 > 0.0 {
        let x2 = single_virus_equilibrium(sys.d2(), sys.b2())?;
        reports.push(classify_stability(sys, &EpidemicState::new(DVector::zeros(n), x2)?)?);
    }
    Ok(reports)
}

const PROPORTIONAL_TOL: f64 = 1e-12;

/// `kappa` with `(D2, B2) = kappa (D1, B1)`, if it exists.
pub fn proportionality_factor(sys: &BiVirusSystem) -> Option<f64> {
    let (b1, b2) = (sys.b1().matrix(), sys.b2().matrix());
    let (i, j) = b1.iamax_full();
    if b1[(i, j)] <= 0.0 {
        return None;
    }
    let kappa = b2[(i, j)] / b1[(i, j)];
    if !(kappa > 0.0) {
        return None;
    }
    let close = |x: f64, y: f64, scale: f64| (x - kappa * y).abs() <= PROPORTIONAL_TOL * scale;
    let scale_b = b2.amax().max(1.0);
    let b_ok = b1.iter().zip(b2.iter()).all(|(&x, &y)| close(y, x, scale_b));
    let (d1, d2) = (sys.d1().as_slice(), sys.d2().as_slice());
    let scale_d = d2.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let d_ok = d1.iter().zip(d2).all(|(&x, &y)| close(y, x, scale_d));
    (b_ok && d_ok).then_some(kappa)
}

/// `(delta1/beta1, delta2/beta2)` when both viruses heal uniformly on a
/// shared graph (`B_k = beta_k A`, `A = B1 / max B1`).
pub fn homogeneous_ratios(sys: &BiVirusSystem) -> Option<(f64, f64)> {
    let uniform = |d: &HealingRates| {
        let s = d.as_slice();
        s.iter().all(|&v| (v - s[0]).abs() <= PROPORTIONAL_TOL * s[0].abs().max(1.0))
    };
    if !(uniform(sys.d1()) && uniform(sys.d2())) {
        return None;
    }
    let (b1, b2) = (sys.b1().matrix(), sys.b2().matrix());
    let beta1 = b1.max();
    let beta2 = b2.max();
    if !(beta1 > 0.0 && beta2 > 0.0) {
        return None;
    }
    let mu = beta2 / beta1;
    let same_graph = b1
        .iter()
        .zip(b2.iter())
        .all(|(&x, &y)| (y - mu * x).abs() <= PROPORTIONAL_TOL * beta2.max(1.0));
    same_graph.then(|| (sys.d1().as_slice()[0] / beta1, sys.d2().as_slice()[0] / beta2))
}

/// Coexisting equilibrium `x1 = alpha x2` when `(D2, B2)` is a positive
/// multiple of `(D1, B1)`; identical viruses and equal-ratio homogeneous
/// viruses on one graph are both of this form.
///
/// With `z` the epidemic state of `(D1, B1)`, returns
/// `x1 = alpha/(1+alpha) z`, `x2 = 1/(1+alpha) z`.
pub fn coexistence_pair(sys: &BiVirusSystem, alpha: f64) -> Result<EpidemicState> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "coexistence split alpha must be positive, got {alpha}"
        )));
    }
    if proportionality_factor(sys).is_none() {
        return Err(match homogeneous_ratios(sys) {
            Some((ratio1, ratio2)) => Error::NoCoexistence { ratio1, ratio2 },
            None => Error::CoexistenceNotApplicable,
        });
    }
    let z = single_virus_equilibrium(sys.d1(), sys.b1())?;
    let w = alpha / (1.0 + alpha);
    let point = EpidemicState::new(&z * w, &z * (1.0 - w))?;
    let residual = bivirus_residual(sys, &point)?;
    if residual > EQUILIBRIUM_TOL {
        return Err(Error::NotEquilibrium {
            residual,
            tolerance: EQUILIBRIUM_TOL,
        });
    }
    Ok(point)
}

/// Newton refinement of a bi-virus equilibrium estimate.
pub fn polish_bivirus_equilibrium(sys: &BiVirusSystem, guess: &EpidemicState) -> Result<EpidemicState> {
    let mut point = guess.clone();
    let mut residual = bivirus_residual(sys, &point)?;
    for _ in 0..20 {
        if residual <= 1e-15 {
            break;
        }
        let (f1, f2) = rhs_bivirus(sys, &point)?;
        let f = DVector::from_iterator(2 * sys.n(), f1.iter().chain(f2.iter()).map(|v| -v));
        let Some(step) = jacobian(sys, &point)?.lu().solve(&f) else {
            break;
        };
        let flat: Vec<f64> = point.to_flat().iter().zip(step.iter()).map(|(x, s)| x + s).collect();
        let Ok(candidate) = EpidemicState::new(
            DVector::from_column_slice(&flat[..sys.n()]),
            DVector::from_column_slice(&flat[sys.n()..]),
        ) else {
            break;
        };
        let r = bivirus_residual(sys, &candidate)?;
        if r >= residual {
            break;
        }
        point = candidate;
        residual = r;
    }
    if residual > EQUILIBRIUM_TOL {
        return Err(Error::NotEquilibrium {
            residual,
            tolerance: EQUILIBRIUM_TOL,
        });
    }
    Ok(point)
}

/// Interior equilibria found by integrating from several starts. The search
/// is heuristic: an empty result does not rule out interior equilibria.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorSearch {
    pub found: Vec<EquilibriumReport>,
    pub starts: usize,
    pub converged_runs: usize,
    pub exhaustive: bool,
}

/// Integrates from every start in parallel; runs that converge to a point
/// with both viruses present are polished, deduplicated (1e-6) and classified.
pub fn search_interior_equilibria(
    sys: &BiVirusSystem,
    starts: &[EpidemicState],
    cfg: &IntegratorConfig,
) -> Result<InteriorSearch> {
    let finals: Vec<Option<EpidemicState>> = starts
        .par_iter()
        .map(|x0| -> Result<Option<EpidemicState>> {
            let traj = integrate(&BiVirusField { sys }, &x0.to_flat(), cfg)?;
            Ok((traj.termination == Termination::Converged).then(|| traj.final_bivirus_state()))
        })
        .collect::<Result<_>>()?;
    let converged_runs = finals.iter().flatten().count();
    let mut found: Vec<EquilibriumReport> = Vec::new();
    for point in finals.into_iter().flatten() {
        let interior = point.x1.min() > 1e-6 && point.x2.min() > 1e-6;
        if !interior {
            continue;
        }
        let Ok(point) = polish_bivirus_equilibrium(sys, &point) else {
            continue;
        };
        let flat = point.to_flat();
        let duplicate = found.iter().any(|r| {
            r.point
                .to_flat()
                .iter()
                .zip(&flat)
                .all(|(a, b)| (a - b).abs() <= 1e-6)
        });
        if !duplicate {
            found.push(classify_stability(sys, &point)?);
        }
    }
    Ok(InteriorSearch {
        found,
        starts: starts.len(),
        converged_runs,
        exhaustive: false,
    })
}
