//! Seeded random systems for checks and equilibrium searches.

use bivirus::dynamics::{BiVirusSystem, EpidemicState};
use bivirus::netstruct::{HealingRates, InfectionMatrix};
use bivirus::spectral::{spectral_abscissa_metzler, spectral_radius_nonneg, stability_matrix};
use bivirus::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type InstanceRng = ChaCha8Rng;

pub fn rng(seed: u64) -> InstanceRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Strongly connected 0/1 pattern: a random Hamiltonian cycle plus each
/// other arc with probability `extra`.
pub fn random_pattern(rng: &mut InstanceRng, n: usize, extra: f64, self_loops: bool) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    if n == 1 {
        m[(0, 0)] = 1.0;
        return m;
    }
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    for w in 0..n {
        m[(order[(w + 1) % n], order[w])] = 1.0;
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(extra) {
                m[(i, j)] = 1.0;
            }
        }
        if self_loops && rng.random_bool(0.5) {
            m[(i, i)] = 1.0;
        }
    }
    m
}

/// Irreducible infection matrix with rates in `[0.1, 2)`.
pub fn random_infection(rng: &mut InstanceRng, n: usize) -> InfectionMatrix {
    let pattern = random_pattern(rng, n, 0.3, true);
    InfectionMatrix::new(pattern.map(|a| if a > 0.0 { rng.random_range(0.1..2.0) } else { 0.0 }))
        .expect("nonnegative finite rates")
}

pub fn abscissa(d: &HealingRates, b: &InfectionMatrix) -> f64 {
    spectral_abscissa_metzler(&stability_matrix(d, b).expect("matching sizes"))
        .expect("irreducible Metzler matrix")
        .value
}

/// Healing rates with `s(-D+B) = target`: a random base shifted uniformly.
/// `B` is doubled until the shift keeps every rate at least 0.05.
pub fn rates_with_abscissa(
    rng: &mut InstanceRng,
    b: &InfectionMatrix,
    target: f64,
) -> (HealingRates, InfectionMatrix) {
    let n = b.n();
    let base: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
    let mut b = b.clone();
    loop {
        let s0 = abscissa(&HealingRates::from_slice(&base).expect("positive"), &b);
        let shift = s0 - target;
        if base.iter().all(|&d| d + shift >= 0.05) {
            let d: Vec<f64> = base.iter().map(|&d| d + shift).collect();
            return (HealingRates::from_slice(&d).expect("positive"), b);
        }
        b = b.scaled(2.0).expect("positive factor");
    }
}

/// `s(-D+B)` uniform in `[0.05, 1)`.
pub fn supercritical(rng: &mut InstanceRng, n: usize) -> (HealingRates, InfectionMatrix) {
    let b = random_infection(rng, n);
    let target = rng.random_range(0.05..1.0);
    rates_with_abscissa(rng, &b, target)
}

/// `s(-D+B)` uniform in `(-0.5, -0.05]`.
pub fn subcritical(rng: &mut InstanceRng, n: usize) -> (HealingRates, InfectionMatrix) {
    let b = random_infection(rng, n);
    let target = -rng.random_range(0.05..0.5);
    rates_with_abscissa(rng, &b, target)
}

/// Healing rates drawn independently; either regime can come out.
pub fn random_bivirus(rng: &mut InstanceRng, n: usize) -> BiVirusSystem {
    let b1 = random_infection(rng, n);
    let b2 = random_infection(rng, n);
    let d1 = HealingRates::new(random_fractions(rng, n, 0.2, 3.0)).expect("positive");
    let d2 = HealingRates::new(random_fractions(rng, n, 0.2, 3.0)).expect("positive");
    BiVirusSystem::new(d1, b1, d2, b2).expect("valid random system")
}

pub fn random_fractions(rng: &mut InstanceRng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

/// Uniform on the per-node simplex `{x1 + x2 <= 1}`.
pub fn random_state(rng: &mut InstanceRng, n: usize) -> EpidemicState {
    let mut x1 = DVector::zeros(n);
    let mut x2 = DVector::zeros(n);
    for i in 0..n {
        let (a, b): (f64, f64) = (rng.random(), rng.random());
        let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
        x1[i] = a;
        x2[i] = b;
    }
    EpidemicState::new(x1, x2).expect("inside the domain")
}

/// Both viruses present at every node: `x1_i, x2_i >= 0.01`, `x1_i + x2_i <= 0.98`.
pub fn interior_state(rng: &mut InstanceRng, n: usize) -> EpidemicState {
    let mut x1 = DVector::zeros(n);
    let mut x2 = DVector::zeros(n);
    for i in 0..n {
        let total = rng.random_range(0.03..0.98);
        let share = rng.random_range(0.01 / total..1.0 - 0.01 / total);
        x1[i] = total * share;
        x2[i] = total * (1.0 - share);
    }
    EpidemicState::new(x1, x2).expect("inside the domain")
}

/// Homogeneous viruses on one random graph `A` with
/// `rho(A) > delta1/beta1 > delta2/beta2`, so virus 2 wins.
pub fn ordered_homogeneous_pair(rng: &mut InstanceRng, n: usize) -> BiVirusSystem {
    let pattern = random_pattern(rng, n, 0.3, true);
    let a = InfectionMatrix::new(pattern).expect("0/1 pattern");
    let rho = spectral_radius_nonneg(a.matrix()).expect("nonnegative").value;
    let r1 = rho * rng.random_range(0.3..0.8);
    let r2 = r1 * rng.random_range(0.3..0.8);
    let beta1 = rng.random_range(0.5..2.0);
    let beta2 = rng.random_range(0.5..2.0);
    BiVirusSystem::new(
        HealingRates::uniform(n, r1 * beta1).expect("positive"),
        a.scaled(beta1).expect("positive"),
        HealingRates::uniform(n, r2 * beta2).expect("positive"),
        a.scaled(beta2).expect("positive"),
    )
    .expect("valid pair")
}

/// Supercritical virus 1 and `(D2, B2) = kappa (D1, B1)`.
pub fn proportional_pair(rng: &mut InstanceRng, n: usize) -> BiVirusSystem {
    let (d, b) = supercritical(rng, n);
    let kappa = rng.random_range(0.25..4.0);
    BiVirusSystem::new(
        d.clone(),
        b.clone(),
        d.scaled(kappa).expect("positive"),
        b.scaled(kappa).expect("positive"),
    )
    .expect("valid pair")
}
