//! Mean-field vector fields and a fixed-step RK4 integrator that keeps
//! trajectories inside the invariant domain.
//!
//! The bi-virus state lives in `{x1 >= 0, x2 >= 0, x1 + x2 <= 1}` (per node);
//! single-virus states live in the unit box. After every step, violations up
//! to `clamp_tol` are projected away; anything larger stops the run with
//! [`Termination::Diverged`] because the exact flow cannot leave the domain.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::netstruct::{HealingRates, InfectionMatrix};

/// Healing rates and infection matrices of both viruses.
#[derive(Debug, Clone, PartialEq)]
pub struct BiVirusSystem {
    d1: HealingRates,
    b1: InfectionMatrix,
    d2: HealingRates,
    b2: InfectionMatrix,
}

impl BiVirusSystem {
    /// Both infection matrices must be irreducible and all sizes must agree.
    pub fn new(
        d1: HealingRates,
        b1: InfectionMatrix,
        d2: HealingRates,
        b2: InfectionMatrix,
    ) -> Result<Self> {
        let n = b1.n();
        for (context, found) in [
            ("virus 1 healing rates", d1.n()),
            ("virus 2 healing rates", d2.n()),
            ("virus 2 infection matrix", b2.n()),
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
        Ok(Self { d1, b1, d2, b2 })
    }

    pub fn n(&self) -> usize {
        self.b1.n()
    }

    pub fn d1(&self) -> &HealingRates {
        &self.d1
    }

    pub fn b1(&self) -> &InfectionMatrix {
        &self.b1
    }

    pub fn d2(&self) -> &HealingRates {
        &self.d2
    }

    pub fn b2(&self) -> &InfectionMatrix {
        &self.b2
    }

    /// `(D, B)` of virus `k` (1 or 2).
    pub fn virus(&self, k: usize) -> (&HealingRates, &InfectionMatrix) {
        match k {
            1 => (&self.d1, &self.b1),
            2 => (&self.d2, &self.b2),
            _ => panic!("virus index must be 1 or 2, got {k}"),
        }
    }
}

/// Per-node infected fractions of both viruses.
#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicState {
    pub x1: DVector<f64>,
    pub x2: DVector<f64>,
}

impl EpidemicState {
    /// Rejects states outside the domain.
    pub fn new(x1: DVector<f64>, x2: DVector<f64>) -> Result<Self> {
        if x1.len() != x2.len() {
            return Err(Error::DimensionMismatch {
                context: "epidemic state",
                expected: x1.len(),
                found: x2.len(),
            });
        }
        let state = Self { x1, x2 };
        let violation = state.domain_violation();
        if violation > 0.0 || state.x1.iter().chain(state.x2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidState(format!(
                "fractions must satisfy x1, x2 >= 0 and x1 + x2 <= 1 (violation {violation:e})"
            )));
        }
        Ok(state)
    }

    pub fn from_slices(x1: &[f64], x2: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(x1), DVector::from_column_slice(x2))
    }

    pub fn healthy(n: usize) -> Self {
        Self {
            x1: DVector::zeros(n),
            x2: DVector::zeros(n),
        }
    }

    pub fn n(&self) -> usize {
        self.x1.len()
    }

    /// Largest amount by which the state leaves the domain (0 inside).
    pub fn domain_violation(&self) -> f64 {
        self.x1
            .iter()
            .zip(self.x2.iter())
            .map(|(&a, &b)| node_violation(a, b))
            .fold(0.0, f64::max)
    }

    /// `[x1; x2]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.x1.iter().chain(self.x2.iter()).copied().collect()
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        let n = flat.len() / 2;
        Self {
            x1: DVector::from_column_slice(&flat[..n]),
            x2: DVector::from_column_slice(&flat[n..]),
        }
    }

    /// `max_i (x1_i + x2_i)`.
    pub fn total_infection_inf_norm(&self) -> f64 {
        self.x1
            .iter()
            .zip(self.x2.iter())
            .map(|(a, b)| a + b)
            .fold(0.0, f64::max)
    }
}

fn node_violation(a: f64, b: f64) -> f64 {
    (-a).max(-b).max(a + b - 1.0).max(0.0)
}

/// Positive feedback gains `k_i` of a proportional healing controller.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGains(DVector<f64>);

impl ControlGains {
    pub fn new(k: DVector<f64>) -> Result<Self> {
        if k.is_empty() {
            return Err(Error::EmptyGraph);
        }
        if let Some((i, &v)) = k.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "feedback gain k_{i} must be positive, got {v}"
            )));
        }
        Ok(Self(k))
    }

    pub fn from_slice(k: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(k))
    }

    pub fn uniform(n: usize, k: f64) -> Result<Self> {
        Self::new(DVector::from_element(n, k))
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

#[inline]
fn row_dot(b: &DMatrix<f64>, i: usize, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (j, &xj) in x.iter().enumerate() {
        acc += b[(i, j)] * xj;
    }
    acc
}

fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

/// Where a vector field's trajectories live.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Each coordinate in `[0, 1]`.
    UnitBox,
    /// Flat state `[x1; x2]` with the bi-virus node constraints.
    PairedSimplex,
}

impl Domain {
    pub fn violation(self, x: &[f64]) -> f64 {
        match self {
            Domain::UnitBox => x
                .iter()
                .map(|&v| (-v).max(v - 1.0).max(0.0))
                .fold(0.0, f64::max),
            Domain::PairedSimplex => {
                let n = x.len() / 2;
                (0..n)
                    .map(|i| node_violation(x[i], x[n + i]))
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Moves `x` onto the domain (nearest point per node).
    pub fn project(self, x: &mut [f64]) {
        match self {
            Domain::UnitBox => x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0)),
            Domain::PairedSimplex => {
                let n = x.len() / 2;
                for i in 0..n {
                    let (mut a, mut b) = (x[i].max(0.0), x[n + i].max(0.0));
                    let excess = a + b - 1.0;
                    if excess > 0.0 {
                        // Euclidean projection onto the edge a + b = 1
                        a -= excess / 2.0;
                        b -= excess / 2.0;
                        if a < 0.0 {
                            b += a;
                            a = 0.0;
                        } else if b < 0.0 {
                            a += b;
                            b = 0.0;
                        }
                        a = a.min(1.0 - b);
                    }
                    x[i] = a;
                    x[n + i] = b;
                }
            }
        }
    }
}

/// Autonomous vector field `dx/dt = f(x)` on a flat state vector.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn domain(&self) -> Domain;
    fn eval(&self, x: &[f64], dx: &mut [f64]);
}

/// Competing viruses: `dx^k_i = -delta^k_i x^k_i + (1 - x^1_i - x^2_i) (B^k x^k)_i`.
#[derive(Debug, Clone, Copy)]
pub struct BiVirusField<'a> {
    pub sys: &'a BiVirusSystem,
}

impl VectorField for BiVirusField<'_> {
    fn dim(&self) -> usize {
        2 * self.sys.n()
    }

    fn domain(&self) -> Domain {
        Domain::PairedSimplex
    }

    fn eval(&self, x: &[f64], dx: &mut [f64]) {
        let n = self.sys.n();
        let (x1, x2) = x.split_at(n);
        let (d1, d2) = (self.sys.d1.as_slice(), self.sys.d2.as_slice());
        let (b1, b2) = (self.sys.b1.matrix(), self.sys.b2.matrix());
        for i in 0..n {
            let susceptible = 1.0 - x1[i] - x2[i];
            dx[i] = -d1[i] * x1[i] + susceptible * row_dot(b1, i, x1);
            dx[n + i] = -d2[i] * x2[i] + susceptible * row_dot(b2, i, x2);
        }
    }
}

/// Single virus: `dx_i = -delta_i x_i + (1 - x_i) (B x)_i`.
#[derive(Debug, Clone, Copy)]
pub struct SingleVirusField<'a> {
    pub d: &'a HealingRates,
    pub b: &'a InfectionMatrix,
}

impl VectorField for SingleVirusField<'_> {
    fn dim(&self) -> usize {
        self.b.n()
    }

    fn domain(&self) -> Domain {
        Domain::UnitBox
    }

    fn eval(&self, x: &[f64], dx: &mut [f64]) {
        let d = self.d.as_slice();
        let b = self.b.matrix();
        for i in 0..x.len() {
            dx[i] = -d[i] * x[i] + (1.0 - x[i]) * row_dot(b, i, x);
        }
    }
}

/// Single virus under healing rates `delta_i = k_i x_i`:
/// `dx_i = -k_i x_i^2 + (1 - x_i) (B x)_i`.
#[derive(Debug, Clone, Copy)]
pub struct ControlledSingleField<'a> {
    pub k: &'a ControlGains,
    pub b: &'a InfectionMatrix,
}

impl VectorField for ControlledSingleField<'_> {
    fn dim(&self) -> usize {
        self.b.n()
    }

    fn domain(&self) -> Domain {
        Domain::UnitBox
    }

    fn eval(&self, x: &[f64], dx: &mut [f64]) {
        let k = self.k.as_slice();
        let b = self.b.matrix();
        for i in 0..x.len() {
            dx[i] = -k[i] * x[i] * x[i] + (1.0 - x[i]) * row_dot(b, i, x);
        }
    }
}

/// Both viruses under proportional healing:
/// `dx^k_i = -k^k_i (x^k_i)^2 + (1 - x^1_i - x^2_i) (B^k x^k)_i`.
#[derive(Debug, Clone, Copy)]
pub struct ControlledBiVirusField<'a> {
    pub k1: &'a ControlGains,
    pub k2: &'a ControlGains,
    pub b1: &'a InfectionMatrix,
    pub b2: &'a InfectionMatrix,
}

impl VectorField for ControlledBiVirusField<'_> {
    fn dim(&self) -> usize {
        2 * self.b1.n()
    }

    fn domain(&self) -> Domain {
        Domain::PairedSimplex
    }

    fn eval(&self, x: &[f64], dx: &mut [f64]) {
        let n = self.b1.n();
        let (x1, x2) = x.split_at(n);
        let (k1, k2) = (self.k1.as_slice(), self.k2.as_slice());
        let (b1, b2) = (self.b1.matrix(), self.b2.matrix());
        for i in 0..n {
            let susceptible = 1.0 - x1[i] - x2[i];
            dx[i] = -k1[i] * x1[i] * x1[i] + susceptible * row_dot(b1, i, x1);
            dx[n + i] = -k2[i] * x2[i] * x2[i] + susceptible * row_dot(b2, i, x2);
        }
    }
}

fn eval_field<F: VectorField>(field: &F, x: &[f64]) -> Vec<f64> {
    let mut dx = vec![0.0; field.dim()];
    field.eval(x, &mut dx);
    dx
}

/// Right-hand side of the bi-virus system at `state`.
pub fn rhs_bivirus(
    sys: &BiVirusSystem,
    state: &EpidemicState,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_len("bi-virus state", sys.n(), state.n())?;
    let dx = eval_field(&BiVirusField { sys }, &state.to_flat());
    let n = sys.n();
    Ok((
        DVector::from_column_slice(&dx[..n]),
        DVector::from_column_slice(&dx[n..]),
    ))
}

/// Right-hand side of the single-virus system.
pub fn rhs_single(d: &HealingRates, b: &InfectionMatrix, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("healing rates", b.n(), d.n())?;
    check_len("single-virus state", b.n(), x.len())?;
    Ok(DVector::from_vec(eval_field(
        &SingleVirusField { d, b },
        x.as_slice(),
    )))
}

/// Right-hand side of the single virus under proportional healing.
pub fn rhs_controlled_single(
    k: &ControlGains,
    b: &InfectionMatrix,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len("feedback gains", b.n(), k.n())?;
    check_len("single-virus state", b.n(), x.len())?;
    Ok(DVector::from_vec(eval_field(
        &ControlledSingleField { k, b },
        x.as_slice(),
    )))
}

/// Right-hand side of both viruses under proportional healing.
pub fn rhs_controlled_bivirus(
    k1: &ControlGains,
    k2: &ControlGains,
    b1: &InfectionMatrix,
    b2: &InfectionMatrix,
    state: &EpidemicState,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = b1.n();
    check_len("virus 2 infection matrix", n, b2.n())?;
    check_len("virus 1 gains", n, k1.n())?;
    check_len("virus 2 gains", n, k2.n())?;
    check_len("bi-virus state", n, state.n())?;
    let dx = eval_field(&ControlledBiVirusField { k1, k2, b1, b2 }, &state.to_flat());
    Ok((
        DVector::from_column_slice(&dx[..n]),
        DVector::from_column_slice(&dx[n..]),
    ))
}

/// Step size, horizon and tolerances of [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_max: f64,
    /// Stop once `||f(x)||_inf` drops below this.
    pub convergence_tol: f64,
    /// Largest domain violation that is silently projected away.
    pub clamp_tol: f64,
    /// Time between stored samples (rounded to a whole number of steps).
    pub sample_interval: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_max: 10_000.0,
            convergence_tol: 1e-10,
            clamp_tol: 1e-9,
            sample_interval: 1.0,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("t_max", self.t_max),
            ("convergence_tol", self.convergence_tol),
            ("clamp_tol", self.clamp_tol),
            ("sample_interval", self.sample_interval),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "integrator {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Why an integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    /// `||f(x)||_inf < convergence_tol`.
    Converged,
    /// Reached `t_max`.
    Horizon,
    /// A step left the domain by more than `clamp_tol`.
    Diverged,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::Horizon => "horizon",
            Termination::Diverged => "diverged",
        }
    }
}

/// Sampled solution of an integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Flat states; every one lies in the field's domain.
    pub states: Vec<Vec<f64>>,
    pub termination: Termination,
    /// Largest violation that was projected away.
    pub max_correction: f64,
    /// Size of the rejected violation when the run diverged.
    pub divergence: Option<f64>,
    pub steps: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory always holds the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory always holds the initial time")
    }

    pub fn final_bivirus_state(&self) -> EpidemicState {
        EpidemicState::from_flat(self.final_state())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Classic fixed-step RK4 from `x0`, projecting small domain violations after
/// each step.
pub fn integrate<F: VectorField>(field: &F, x0: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let dim = field.dim();
    check_len("initial state", dim, x0.len())?;
    let domain = field.domain();
    if x0.iter().any(|v| !v.is_finite()) || domain.violation(x0) > 0.0 {
        return Err(Error::InvalidState(
            "initial state lies outside the invariant domain".into(),
        ));
    }

    let total_steps = (cfg.t_max / cfg.dt - 1e-9).ceil().max(1.0) as usize;
    let stride = ((cfg.sample_interval / cfg.dt).round() as usize).max(1);

    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut stage = vec![0.0; dim];

    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x.clone()],
        termination: Termination::Horizon,
        max_correction: 0.0,
        divergence: None,
        steps: 0,
    };

    for step in 0..total_steps {
        field.eval(&x, &mut k1);
        if inf_norm(&k1) < cfg.convergence_tol {
            traj.termination = Termination::Converged;
            break;
        }
        let h = if step + 1 == total_steps {
            cfg.t_max - t
        } else {
            cfg.dt
        };

        for i in 0..dim {
            stage[i] = x[i] + 0.5 * h * k1[i];
        }
        field.eval(&stage, &mut k2);
        for i in 0..dim {
            stage[i] = x[i] + 0.5 * h * k2[i];
        }
        field.eval(&stage, &mut k3);
        for i in 0..dim {
            stage[i] = x[i] + h * k3[i];
        }
        field.eval(&stage, &mut k4);
        for i in 0..dim {
            stage[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }

        let violation = if stage.iter().all(|v| v.is_finite()) {
            domain.violation(&stage)
        } else {
            f64::INFINITY
        };
        if violation > cfg.clamp_tol {
            traj.termination = Termination::Diverged;
            traj.divergence = Some(violation);
            break;
        }
        if violation > 0.0 {
            domain.project(&mut stage);
            traj.max_correction = traj.max_correction.max(violation);
        }
        std::mem::swap(&mut x, &mut stage);
        t = if step + 1 == total_steps {
            cfg.t_max
        } else {
            t + h
        };
        traj.steps = step + 1;
        if (step + 1) % stride == 0 {
            traj.times.push(t);
            traj.states.push(x.clone());
        }
    }

    if traj.final_time() != t {
        traj.times.push(t);
        traj.states.push(x);
    }
    Ok(traj)
}

/// Integrates the bi-virus system from `x0`.
pub fn simulate_bivirus(
    sys: &BiVirusSystem,
    x0: &EpidemicState,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    check_len("initial state", sys.n(), x0.n())?;
    integrate(&BiVirusField { sys }, &x0.to_flat(), cfg)
}

/// Weighted max-norm distance `max_k |x_k - x*_k| / x*_k` to a strictly
/// positive equilibrium; non-increasing along single-virus trajectories.
pub fn lyapunov_distance(x: &[f64], x_star: &[f64]) -> Result<f64> {
    check_len("Lyapunov reference", x_star.len(), x.len())?;
    if let Some((k, &v)) = x_star.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "reference point must be strictly positive, entry {k} is {v}"
        )));
    }
    Ok(x.iter()
        .zip(x_star)
        .map(|(xi, si)| (xi - si).abs() / si)
        .fold(0.0, f64::max))
}
