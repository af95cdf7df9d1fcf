//! Exact continuous-time Markov chain of the competing SIS process.
//!
//! A state is a ternary string `s` with `s_i = 0` (susceptible), `1`
//! (infected by virus 1) or `2` (infected by virus 2), stored at index
//! `sum_i s_i 3^i`. The generator is kept by source state: row `l` lists the
//! transitions out of `l`, and the distribution evolves as `dy/dt = Q^T y`.

use crate::dynamics::{integrate, BiVirusField, BiVirusSystem, EpidemicState, IntegratorConfig, Termination};
use crate::error::{Error, Result};
use crate::netstruct::{HealingRates, InfectionMatrix};

/// Largest supported number of nodes (`3^12` states).
pub const MAX_CHAIN_NODES: usize = 12;
/// Probabilities below `-NEGATIVE_TOL` abort an integration.
pub const NEGATIVE_TOL: f64 = 1e-12;
/// Largest per-step change of total mass before renormalization.
pub const MASS_DRIFT_TOL: f64 = 1e-12;

/// Index of a ternary state string.
pub fn encode(digits: &[u8]) -> usize {
    digits.iter().rev().fold(0, |acc, &d| acc * 3 + d as usize)
}

/// Ternary digits of `index` for `n` nodes, node 0 first.
pub fn decode(mut index: usize, n: usize) -> Vec<u8> {
    let mut digits = vec![0u8; n];
    for d in digits.iter_mut() {
        *d = (index % 3) as u8;
        index /= 3;
    }
    digits
}

/// A state of the chain.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChainState {
    n: usize,
    index: usize,
}

impl ChainState {
    pub fn from_digits(digits: &[u8]) -> Result<Self> {
        if let Some((i, &d)) = digits.iter().enumerate().find(|(_, d)| **d > 2) {
            return Err(Error::InvalidState(format!(
                "node {i} has status {d}; statuses are 0, 1 or 2"
            )));
        }
        check_nodes(digits.len())?;
        Ok(Self {
            n: digits.len(),
            index: encode(digits),
        })
    }

    pub fn from_index(index: usize, n: usize) -> Result<Self> {
        check_nodes(n)?;
        if index >= 3usize.pow(n as u32) {
            return Err(Error::InvalidState(format!(
                "state index {index} out of range for {n} nodes"
            )));
        }
        Ok(Self { n, index })
    }

    /// Zero-based position in the distribution vector.
    pub fn index(&self) -> usize {
        self.index
    }

    /// One-based state number, `1 + sum_i s_i 3^(i-1)` with nodes counted from 1.
    pub fn number(&self) -> usize {
        self.index + 1
    }

    pub fn digits(&self) -> Vec<u8> {
        decode(self.index, self.n)
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

fn check_nodes(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    if n > MAX_CHAIN_NODES {
        return Err(Error::ChainTooLarge {
            n,
            max: MAX_CHAIN_NODES,
        });
    }
    Ok(())
}

/// Sparse generator, stored twice: by source (the transition lists) and by
/// destination (used for `Q^T y`).
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    n: usize,
    out_ptr: Vec<usize>,
    out_dest: Vec<u32>,
    out_rate: Vec<f64>,
    in_ptr: Vec<usize>,
    in_src: Vec<u32>,
    in_rate: Vec<f64>,
    /// Total exit rate per state; the diagonal is its negative.
    exit: Vec<f64>,
    /// Which viruses are present: bit 0 virus 1, bit 1 virus 2.
    class: Vec<u8>,
}

/// Healthy, virus-1-only, virus-2-only and mixed states.
const CLASS_MIXED: u8 = 3;

/// Decay of the transient states of one class, ignoring inflow from other
/// classes: `lambda = -1^T A z / 1^T z` and `residual = ||A z + lambda z||_1`
/// with `A` the generator restricted to the class.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ClassDecay {
    mass: f64,
    lambda: f64,
    residual: f64,
}

impl GeneratorMatrix {
    /// Number of nodes.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of states, `3^n`.
    pub fn dim(&self) -> usize {
        self.exit.len()
    }

    /// `(destination, rate)` of every transition out of `state`.
    pub fn transitions(&self, state: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.out_ptr[state]..self.out_ptr[state + 1];
        self.out_dest[range.clone()]
            .iter()
            .zip(&self.out_rate[range])
            .map(|(&d, &r)| (d as usize, r))
    }

    pub fn diagonal(&self, state: usize) -> f64 {
        -self.exit[state]
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.exit.iter().cloned().fold(0.0, f64::max)
    }

    /// Off-diagonal rates out of `state` plus the diagonal entry.
    pub fn row_sum(&self, state: usize) -> f64 {
        self.transitions(state).map(|(_, r)| r).sum::<f64>() + self.diagonal(state)
    }

    pub fn nnz_offdiag(&self) -> usize {
        self.out_rate.len()
    }

    fn class_decay(&self, y: &[f64], scratch: &mut [f64]) -> [ClassDecay; 4] {
        let mut stats = [ClassDecay {
            mass: 0.0,
            lambda: 0.0,
            residual: 0.0,
        }; 4];
        let mut flow = [0.0; 4];
        for k in 0..y.len() {
            let c = self.class[k];
            let mut acc = -self.exit[k] * y[k];
            for e in self.in_ptr[k]..self.in_ptr[k + 1] {
                let src = self.in_src[e] as usize;
                if self.class[src] == c {
                    acc += self.in_rate[e] * y[src];
                }
            }
            scratch[k] = acc;
            stats[c as usize].mass += y[k];
            flow[c as usize] += acc;
        }
        for (s, f) in stats.iter_mut().zip(flow) {
            if s.mass > 0.0 {
                s.lambda = (-f / s.mass).max(0.0);
            }
        }
        for k in 0..y.len() {
            let s = &mut stats[self.class[k] as usize];
            s.residual += (scratch[k] + s.lambda * y[k]).abs();
        }
        stats
    }

    /// `out = Q^T y`; returns `||out||_1`.
    pub fn apply_transpose(&self, y: &[f64], out: &mut [f64]) -> f64 {
        let mut norm = 0.0;
        for k in 0..out.len() {
            let mut acc = -self.exit[k] * y[k];
            for e in self.in_ptr[k]..self.in_ptr[k + 1] {
                acc += self.in_rate[e] * y[self.in_src[e] as usize];
            }
            out[k] = acc;
            norm += acc.abs();
        }
        norm
    }
}

fn check_chain_inputs(
    delta1: &HealingRates,
    delta2: &HealingRates,
    b1: &InfectionMatrix,
    b2: &InfectionMatrix,
) -> Result<usize> {
    let n = b1.n();
    for (context, found) in [
        ("virus 2 infection matrix", b2.n()),
        ("virus 1 healing rates", delta1.n()),
        ("virus 2 healing rates", delta2.n()),
    ] {
        if found != n {
            return Err(Error::DimensionMismatch {
                context,
                expected: n,
                found,
            });
        }
    }
    check_nodes(n)?;
    for (what, b) in [("virus 1 infection matrix", b1), ("virus 2 infection matrix", b2)] {
        if let Some(i) = (0..n).find(|&i| b.matrix()[(i, i)] != 0.0) {
            return Err(Error::NonzeroDiagonal {
                what,
                index: i,
                value: b.matrix()[(i, i)],
            });
        }
    }
    Ok(n)
}

/// Generator of the chain: node `i` with status `k` heals at rate
/// `delta^k_i`; a susceptible node `i` catches virus `k` at rate
/// `sum_j beta^k_ij 1{s_j = k}`.
pub fn build_generator(
    delta1: &HealingRates,
    delta2: &HealingRates,
    b1: &InfectionMatrix,
    b2: &InfectionMatrix,
) -> Result<GeneratorMatrix> {
    let n = check_chain_inputs(delta1, delta2, b1, b2)?;
    let dim = 3usize.pow(n as u32);
    let pow3: Vec<usize> = (0..n).map(|i| 3usize.pow(i as u32)).collect();
    let heal = [delta1.as_slice(), delta2.as_slice()];
    let beta = [b1.matrix(), b2.matrix()];

    let mut out_ptr = Vec::with_capacity(dim + 1);
    let mut out_dest = Vec::new();
    let mut out_rate = Vec::new();
    let mut exit = vec![0.0; dim];
    let mut digits = vec![0u8; n];
    out_ptr.push(0);
    for (state, exit_rate) in exit.iter_mut().enumerate() {
        for i in 0..n {
            let s = digits[i] as usize;
            if s != 0 {
                let rate = heal[s - 1][i];
                if rate > 0.0 {
                    out_dest.push((state - s * pow3[i]) as u32);
                    out_rate.push(rate);
                    *exit_rate += rate;
                }
            } else {
                for k in 1..=2usize {
                    let rate: f64 = (0..n)
                        .filter(|&j| digits[j] as usize == k)
                        .map(|j| beta[k - 1][(i, j)])
                        .sum();
                    if rate > 0.0 {
                        out_dest.push((state + k * pow3[i]) as u32);
                        out_rate.push(rate);
                        *exit_rate += rate;
                    }
                }
            }
        }
        out_ptr.push(out_dest.len());
        // next ternary string
        for d in digits.iter_mut() {
            *d += 1;
            if *d < 3 {
                break;
            }
            *d = 0;
        }
    }

    let class = (0..dim)
        .map(|k| {
            decode(k, n)
                .iter()
                .fold(0u8, |acc, &d| if d == 0 { acc } else { acc | d })
        })
        .collect();

    let mut in_count = vec![0usize; dim + 1];
    for &d in &out_dest {
        in_count[d as usize + 1] += 1;
    }
    for k in 0..dim {
        in_count[k + 1] += in_count[k];
    }
    let in_ptr = in_count;
    let mut fill = in_ptr.clone();
    let mut in_src = vec![0u32; out_dest.len()];
    let mut in_rate = vec![0.0; out_dest.len()];
    for src in 0..dim {
        for e in out_ptr[src]..out_ptr[src + 1] {
            let d = out_dest[e] as usize;
            in_src[fill[d]] = src as u32;
            in_rate[fill[d]] = out_rate[e];
            fill[d] += 1;
        }
    }

    Ok(GeneratorMatrix {
        n,
        out_ptr,
        out_dest,
        out_rate,
        in_ptr,
        in_src,
        in_rate,
        exit,
        class,
    })
}

/// Probability distribution over the `3^n` states.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionVector {
    n: usize,
    y: Vec<f64>,
}

impl DistributionVector {
    /// Entries must be nonnegative and sum to 1 within `1e-10`.
    pub fn new(n: usize, y: Vec<f64>) -> Result<Self> {
        check_nodes(n)?;
        let dim = 3usize.pow(n as u32);
        if y.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "distribution vector",
                expected: dim,
                found: y.len(),
            });
        }
        if let Some((k, &v)) = y.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::NegativeProbability { index: k, value: v });
        }
        let drift = (y.iter().sum::<f64>() - 1.0).abs();
        if drift > 1e-10 {
            return Err(Error::MassDrift { drift });
        }
        Ok(Self { n, y })
    }

    pub fn point_mass(state: &ChainState) -> Self {
        let mut y = vec![0.0; 3usize.pow(state.n() as u32)];
        y[state.index()] = 1.0;
        Self { n: state.n(), y }
    }

    pub fn healthy(n: usize) -> Result<Self> {
        Ok(Self::point_mass(&ChainState::from_index(0, n)?))
    }

    /// Independent nodes with `P(s_i = k) = x^k_i`; a point mass when every
    /// entry of `x0` is 0 or 1.
    pub fn product(x0: &EpidemicState) -> Result<Self> {
        let n = x0.n();
        check_nodes(n)?;
        let mut y = vec![1.0];
        for i in (0..n).rev() {
            let p = [1.0 - x0.x1[i] - x0.x2[i], x0.x1[i], x0.x2[i]];
            y = y
                .iter()
                .flat_map(|&w| p.iter().map(move |&q| w * q))
                .collect();
        }
        Self::new(n, y)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.y
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.y
    }

    pub fn healthy_probability(&self) -> f64 {
        self.y[0]
    }

    pub fn total_mass(&self) -> f64 {
        self.y.iter().sum()
    }
}

/// Settings of [`integrate_chain_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub t_max: f64,
    /// Requested step; capped at `0.1 / max_k |Q_kk|`.
    pub dt: f64,
    /// Stop early once `||dy/dt||_1 (t_max - t)` falls below this; the
    /// remaining change of `y` is then bounded by the same amount because
    /// the semigroup contracts the L1 norm. Zero disables the shortcut.
    pub stationarity_tol: f64,
    /// Jump to `t_max` once the mixed-virus states are nearly empty and each
    /// single-virus class decays as one exponential, provided the resulting
    /// L1 error bound is below this. Zero disables the jump.
    pub fast_forward_tol: f64,
}

impl ChainConfig {
    pub fn new(t_max: f64, dt: f64) -> Self {
        Self {
            t_max,
            dt,
            stationarity_tol: 1e-12,
            fast_forward_tol: 1e-8,
        }
    }
}

/// Final distribution and integration diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainIntegration {
    pub distribution: DistributionVector,
    /// Step size actually used.
    pub dt: f64,
    pub steps: usize,
    /// Time at which the run stopped (before `t_max` if stationary).
    pub t_reached: f64,
    /// Largest `|sum y - 1|` seen before renormalizing.
    pub max_mass_drift: f64,
    /// Smallest per-step change of the healthy-state probability.
    pub min_healthy_increment: f64,
    /// Most negative entry clamped to zero.
    pub min_clamped: f64,
    /// Set when the run jumped ahead to `t_max`.
    pub fast_forward: Option<FastForward>,
}

/// A jump from `from` to `t_max`: the single-virus classes were scaled by
/// `exp(-lambda (t_max - from))` and the mixed states emptied into the
/// healthy state. The L1 distance to the exact continuation is at most
/// `error_bound`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastForward {
    pub from: f64,
    pub error_bound: f64,
    pub decay_rates: [f64; 2],
}

impl ChainIntegration {
    /// Healthy probability never decreased beyond round-off.
    pub fn healthy_monotone(&self, tol: f64) -> bool {
        self.min_healthy_increment >= -tol
    }
}

/// `y(t_max)` by fixed-step RK4 with the default stationarity shortcut.
pub fn integrate_chain(
    q: &GeneratorMatrix,
    y0: &DistributionVector,
    t_max: f64,
    dt: f64,
) -> Result<ChainIntegration> {
    integrate_chain_with(q, y0, &ChainConfig::new(t_max, dt))
}

pub fn integrate_chain_with(
    q: &GeneratorMatrix,
    y0: &DistributionVector,
    cfg: &ChainConfig,
) -> Result<ChainIntegration> {
    if y0.n() != q.n() {
        return Err(Error::DimensionMismatch {
            context: "initial distribution",
            expected: q.n(),
            found: y0.n(),
        });
    }
    if !(cfg.t_max.is_finite() && cfg.t_max >= 0.0) || !(cfg.dt.is_finite() && cfg.dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "chain integration needs t_max >= 0 and dt > 0, got {} and {}",
            cfg.t_max, cfg.dt
        )));
    }
    let max_exit = q.max_exit_rate();
    let dt_cap = if max_exit > 0.0 { 0.1 / max_exit } else { f64::INFINITY };
    let requested = cfg.dt.min(dt_cap);
    let steps_total = if cfg.t_max == 0.0 {
        0
    } else {
        (cfg.t_max / requested - 1e-9).ceil().max(1.0) as usize
    };
    let h = if steps_total == 0 { requested } else { cfg.t_max / steps_total as f64 };

    let dim = q.dim();
    let mut y = y0.as_slice().to_vec();
    let mut a = vec![0.0; dim];
    let mut b = vec![0.0; dim];
    let mut report = ChainIntegration {
        distribution: y0.clone(),
        dt: h,
        steps: 0,
        t_reached: 0.0,
        max_mass_drift: 0.0,
        min_healthy_increment: f64::INFINITY,
        min_clamped: 0.0,
        fast_forward: None,
    };
    let check_every = ((1.0 / h).round() as usize).max(1);
    let mut scratch = if cfg.fast_forward_tol > 0.0 { vec![0.0; dim] } else { Vec::new() };

    let mut t = 0.0;
    for step in 0..steps_total {
        // For a linear autonomous system classic RK4 equals the degree-4
        // Taylor polynomial of exp(hA); evaluated in Horner form:
        // y + hA(y + hA/2(y + hA/3(y + hA/4 y))).
        let rate_norm = q.apply_transpose(&y, &mut a);
        if cfg.stationarity_tol > 0.0 && rate_norm * (cfg.t_max - t) <= cfg.stationarity_tol {
            break;
        }
        if cfg.fast_forward_tol > 0.0 && step > 0 && step % check_every == 0 {
            if let Some(jump) = try_fast_forward(q, &mut y, &mut scratch, cfg.t_max - t, cfg.fast_forward_tol) {
                report.fast_forward = Some(FastForward { from: t, ..jump });
                report.min_healthy_increment = report.min_healthy_increment.min(0.0);
                t = cfg.t_max;
                break;
            }
        }
        for (bk, (&yk, &ak)) in b.iter_mut().zip(y.iter().zip(&a)) {
            *bk = yk + h / 4.0 * ak;
        }
        for c in [3.0, 2.0, 1.0] {
            q.apply_transpose(&b, &mut a);
            for (bk, (&yk, &ak)) in b.iter_mut().zip(y.iter().zip(&a)) {
                *bk = yk + h / c * ak;
            }
        }

        let healthy_before = y[0];
        let mut sum = 0.0;
        for (k, v) in b.iter_mut().enumerate() {
            if *v < 0.0 {
                if *v < -NEGATIVE_TOL {
                    return Err(Error::NegativeProbability { index: k, value: *v });
                }
                report.min_clamped = report.min_clamped.min(*v);
                *v = 0.0;
            }
            sum += *v;
        }
        let drift = (sum - 1.0).abs();
        if drift > MASS_DRIFT_TOL {
            return Err(Error::MassDrift { drift });
        }
        report.max_mass_drift = report.max_mass_drift.max(drift);
        let scale = 1.0 / sum;
        for v in b.iter_mut() {
            *v *= scale;
        }
        std::mem::swap(&mut y, &mut b);
        report.min_healthy_increment = report.min_healthy_increment.min(y[0] - healthy_before);
        report.steps = step + 1;
        t = if step + 1 == steps_total { cfg.t_max } else { t + h };
    }
    if report.steps == 0 {
        report.min_healthy_increment = 0.0;
    }
    report.t_reached = t;
    report.distribution = DistributionVector { n: q.n(), y };
    Ok(report)
}

/// Applies the jump described on [`FastForward`] when its bound is below
/// `tol`. Inflow from the mixed states is charged at twice their mass, and a
/// class with decay residual `r` at rate `lambda` contributes
/// `r min(1/lambda, remaining)`.
fn try_fast_forward(
    q: &GeneratorMatrix,
    y: &mut [f64],
    scratch: &mut [f64],
    remaining: f64,
    tol: f64,
) -> Option<FastForward> {
    let stats = q.class_decay(y, scratch);
    let mut bound = 2.0 * stats[CLASS_MIXED as usize].mass;
    for s in &stats[1..3] {
        if s.mass > 0.0 {
            let horizon = if s.lambda > 0.0 { remaining.min(1.0 / s.lambda) } else { remaining };
            bound += s.residual * horizon;
        }
    }
    if bound > tol {
        return None;
    }
    let factor = [
        1.0,
        (-stats[1].lambda * remaining).exp(),
        (-stats[2].lambda * remaining).exp(),
        0.0,
    ];
    let mut transient = 0.0;
    for (k, v) in y.iter_mut().enumerate().skip(1) {
        *v *= factor[q.class[k] as usize];
        transient += *v;
    }
    y[0] = (1.0 - transient).max(y[0]);
    let total: f64 = y.iter().sum();
    y.iter_mut().for_each(|v| *v /= total);
    Some(FastForward {
        from: 0.0,
        error_bound: bound,
        decay_rates: [stats[1].lambda, stats[2].lambda],
    })
}

/// Per-node probabilities of carrying virus 1 and virus 2.
pub fn marginals(y: &DistributionVector) -> (Vec<f64>, Vec<f64>) {
    let n = y.n();
    let mut v1 = vec![0.0; n];
    let mut v2 = vec![0.0; n];
    let mut digits = vec![0u8; n];
    for &p in &y.y {
        for (i, &d) in digits.iter().enumerate() {
            match d {
                1 => v1[i] += p,
                2 => v2[i] += p,
                _ => {}
            }
        }
        for d in digits.iter_mut() {
            *d += 1;
            if *d < 3 {
                break;
            }
            *d = 0;
        }
    }
    (v1, v2)
}

/// Both models at time `T`, and the Euclidean distance between them.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldComparison {
    pub chain_v1: Vec<f64>,
    pub chain_v2: Vec<f64>,
    pub meanfield: EpidemicState,
    pub error: f64,
    pub chain: ChainIntegration,
}

/// `||[v1(T); v2(T)] - [x1(T); x2(T)]||_2`, with the chain started from the
/// product distribution of `x0`.
pub fn meanfield_error(sys: &BiVirusSystem, x0: &EpidemicState, t: f64, dt: f64) -> Result<f64> {
    Ok(meanfield_comparison(sys, x0, t, dt, &IntegratorConfig::default())?.error)
}

/// Full comparison. `ode` supplies the mean-field integrator settings; its
/// horizon is replaced by `t`.
pub fn meanfield_comparison(
    sys: &BiVirusSystem,
    x0: &EpidemicState,
    t: f64,
    dt: f64,
    ode: &IntegratorConfig,
) -> Result<MeanFieldComparison> {
    let q = build_generator(sys.d1(), sys.d2(), sys.b1(), sys.b2())?;
    let y0 = DistributionVector::product(x0)?;
    let chain = integrate_chain(&q, &y0, t, dt)?;
    let (v1, v2) = marginals(&chain.distribution);

    let meanfield = if t == 0.0 {
        x0.clone()
    } else {
        let cfg = IntegratorConfig {
            t_max: t,
            sample_interval: t,
            ..*ode
        };
        let traj = integrate(&BiVirusField { sys }, &x0.to_flat(), &cfg)?;
        if traj.termination == Termination::Diverged {
            return Err(Error::NonConvergence {
                what: "mean-field integration left the domain",
                iterations: traj.steps,
                residual: traj.divergence.unwrap_or(f64::NAN),
            });
        }
        traj.final_bivirus_state()
    };
    let error = v1
        .iter()
        .chain(v2.iter())
        .zip(meanfield.x1.iter().chain(meanfield.x2.iter()))
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(MeanFieldComparison {
        chain_v1: v1,
        chain_v2: v2,
        meanfield,
        error,
        chain,
    })
}
