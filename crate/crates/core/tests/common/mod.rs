#![allow(dead_code)]

use bivirus::dynamics::{BiVirusSystem, EpidemicState};
use bivirus::netstruct::{HealingRates, InfectionMatrix};
use bivirus::spectral::{spectral_abscissa_metzler, stability_matrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Strongly connected digraph: a random Hamiltonian cycle plus extra arcs.
pub fn random_pattern(rng: &mut ChaCha8Rng, n: usize, extra: f64, self_loops: bool) -> DMatrix<f64> {
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

pub fn random_infection(rng: &mut ChaCha8Rng, n: usize) -> InfectionMatrix {
    let pattern = random_pattern(rng, n, 0.3, true);
    InfectionMatrix::new(pattern.map(|a| if a > 0.0 { rng.random_range(0.1..2.0) } else { 0.0 })).unwrap()
}

pub fn abscissa(d: &HealingRates, b: &InfectionMatrix) -> f64 {
    spectral_abscissa_metzler(&stability_matrix(d, b).unwrap()).unwrap().value
}

/// Healing rates that put `s(-D+B)` at `target` by a uniform shift of a
/// random base; infection is doubled until the shift keeps every rate
/// above 0.05.
pub fn rates_with_abscissa(rng: &mut ChaCha8Rng, b: &InfectionMatrix, target: f64) -> (HealingRates, InfectionMatrix) {
    let n = b.n();
    let base: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
    let mut b = b.clone();
    loop {
        let s0 = abscissa(&HealingRates::from_slice(&base).unwrap(), &b);
        let shift = s0 - target;
        if base.iter().all(|&d| d + shift >= 0.05) {
            let d: Vec<f64> = base.iter().map(|&d| d + shift).collect();
            return (HealingRates::from_slice(&d).unwrap(), b);
        }
        b = b.scaled(2.0).unwrap();
    }
}

pub fn supercritical(rng: &mut ChaCha8Rng, n: usize) -> (HealingRates, InfectionMatrix) {
    let b = random_infection(rng, n);
    let target = rng.random_range(0.05..1.0);
    rates_with_abscissa(rng, &b, target)
}

pub fn subcritical(rng: &mut ChaCha8Rng, n: usize) -> (HealingRates, InfectionMatrix) {
    let b = random_infection(rng, n);
    let target = -rng.random_range(0.05..0.5);
    rates_with_abscissa(rng, &b, target)
}

pub fn random_bivirus(rng: &mut ChaCha8Rng, n: usize) -> BiVirusSystem {
    let (d1, b1) = if rng.random_bool(0.5) { supercritical(rng, n) } else { subcritical(rng, n) };
    let (d2, b2) = if rng.random_bool(0.5) { supercritical(rng, n) } else { subcritical(rng, n) };
    BiVirusSystem::new(d1, b1, d2, b2).unwrap()
}

/// Uniform point of the per-node simplex `{a, b >= 0, a + b <= 1}`.
pub fn random_state(rng: &mut ChaCha8Rng, n: usize) -> EpidemicState {
    let mut x1 = DVector::zeros(n);
    let mut x2 = DVector::zeros(n);
    for i in 0..n {
        let (mut a, mut b): (f64, f64) = (rng.random(), rng.random());
        if a + b > 1.0 {
            a = 1.0 - a;
            b = 1.0 - b;
        }
        x1[i] = a;
        x2[i] = b;
    }
    EpidemicState::new(x1, x2).unwrap()
}

pub fn random_fractions(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
