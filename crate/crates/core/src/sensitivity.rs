//! First-order response of the single-virus epidemic state to changes in
//! healing and infection rates.
//!
//! Linearizing `(-D + B - X B) x = 0` around `x*` gives
//! `M Δx = X* Δδ + (X* - I) ΔB x*` with `M = -D + B - X* B - diag(B x*)`.

use nalgebra::{DMatrix, DVector, LU};

use crate::dynamics::{rhs_single, BiVirusSystem};
use crate::equilibria::{abscissae, single_virus_equilibrium, single_virus_jacobian, EQUILIBRIUM_TOL};
use crate::error::{Error, Result};
use crate::netstruct::{HealingRates, InfectionMatrix};
use crate::spectral::spectral_abscissa_metzler;

/// Linearization of the epidemic state of `(D, B)`.
#[derive(Debug, Clone)]
pub struct SensitivitySystem {
    d: HealingRates,
    b: InfectionMatrix,
    x_star: DVector<f64>,
    core: DMatrix<f64>,
    /// `s(M) < 0`, checked at construction.
    core_abscissa: f64,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl SensitivitySystem {
    /// `x_star` must be the epidemic state of `(d, b)` (residual at most
    /// 1e-10) and every healing rate must be positive.
    pub fn new(d: &HealingRates, b: &InfectionMatrix, x_star: &DVector<f64>) -> Result<Self> {
        let n = b.n();
        if d.n() != n || x_star.len() != n {
            return Err(Error::DimensionMismatch {
                context: "sensitivity system",
                expected: n,
                found: if d.n() != n { d.n() } else { x_star.len() },
            });
        }
        if !d.all_positive() {
            return Err(Error::InvalidParameter(
                "sensitivity analysis needs every healing rate positive".into(),
            ));
        }
        b.require_irreducible("infection matrix")?;
        if x_star.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::InvalidState(
                "epidemic state must satisfy 0 < x* < 1".into(),
            ));
        }
        let residual = rhs_single(d, b, x_star)?.amax();
        if residual > EQUILIBRIUM_TOL {
            return Err(Error::NotEquilibrium {
                residual,
                tolerance: EQUILIBRIUM_TOL,
            });
        }
        let core = single_virus_jacobian(d, b, x_star);
        let core_abscissa = spectral_abscissa_metzler(&core)?.value;
        if core_abscissa >= 0.0 {
            return Err(Error::Invariant(format!(
                "linearization at the epidemic state has s(M) = {core_abscissa:e}, expected < 0"
            )));
        }
        let lu = core.clone().lu();
        if !lu.is_invertible() {
            return Err(Error::Singular {
                what: "sensitivity matrix",
            });
        }
        Ok(Self {
            d: d.clone(),
            b: b.clone(),
            x_star: x_star.clone(),
            core,
            core_abscissa,
            lu,
        })
    }

    /// Solves for the epidemic state first.
    pub fn from_rates(d: &HealingRates, b: &InfectionMatrix) -> Result<Self> {
        let x_star = single_virus_equilibrium(d, b)?;
        Self::new(d, b, &x_star)
    }

    pub fn n(&self) -> usize {
        self.x_star.len()
    }

    pub fn x_star(&self) -> &DVector<f64> {
        &self.x_star
    }

    pub fn healing_rates(&self) -> &HealingRates {
        &self.d
    }

    pub fn infection_matrix(&self) -> &InfectionMatrix {
        &self.b
    }

    /// `M = -D + B - X* B - diag(B x*)`.
    pub fn core(&self) -> &DMatrix<f64> {
        &self.core
    }

    pub fn core_abscissa(&self) -> f64 {
        self.core_abscissa
    }

    /// `M^-1`; entrywise negative.
    pub fn core_inverse(&self) -> Result<DMatrix<f64>> {
        self.lu.try_inverse().ok_or(Error::Singular {
            what: "sensitivity matrix",
        })
    }

    /// `Δx*` for perturbations `Δδ` and `ΔB`.
    pub fn solve(&self, delta_perturbation: &DVector<f64>, beta_perturbation: &DMatrix<f64>) -> Result<DVector<f64>> {
        let n = self.n();
        if delta_perturbation.len() != n {
            return Err(Error::DimensionMismatch {
                context: "healing-rate perturbation",
                expected: n,
                found: delta_perturbation.len(),
            });
        }
        if beta_perturbation.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                context: "infection-rate perturbation",
                expected: n,
                found: beta_perturbation.nrows(),
            });
        }
        let db_x = beta_perturbation * &self.x_star;
        let rhs = DVector::from_iterator(
            n,
            (0..n).map(|i| self.x_star[i] * delta_perturbation[i] + (self.x_star[i] - 1.0) * db_x[i]),
        );
        self.lu.solve(&rhs).ok_or(Error::Singular {
            what: "sensitivity matrix",
        })
    }

    /// Partial derivatives of `x*`: column `i` of the first matrix is
    /// `d x*/d delta_i = M^-1 X* e_i`; column `i n + j` of the second is
    /// `d x*/d beta_ij = M^-1 (X* - I) e_i x*_j`.
    pub fn jacobians(&self) -> Result<SensitivityJacobians> {
        let n = self.n();
        let inv = self.core_inverse()?;
        let x = &self.x_star;
        let wrt_delta = DMatrix::from_fn(n, n, |r, i| inv[(r, i)] * x[i]);
        let wrt_beta = DMatrix::from_fn(n, n * n, |r, col| {
            let (i, j) = (col / n, col % n);
            inv[(r, i)] * (x[i] - 1.0) * x[j]
        });
        Ok(SensitivityJacobians { wrt_delta, wrt_beta })
    }
}

/// `d x*/d delta` (n x n) and `d x*/d beta` (n x n^2, column `i n + j`).
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityJacobians {
    pub wrt_delta: DMatrix<f64>,
    pub wrt_beta: DMatrix<f64>,
}

impl SensitivityJacobians {
    /// Every healing-rate sensitivity is negative and every infection-rate
    /// sensitivity on an arc of `b` is positive.
    pub fn satisfies_sign_law(&self, b: &InfectionMatrix) -> bool {
        let n = b.n();
        let delta_ok = self.wrt_delta.iter().all(|&v| v < 0.0);
        let beta_ok = (0..n).all(|i| {
            (0..n).all(|j| b.matrix()[(i, j)] == 0.0 || self.wrt_beta.column(i * n + j).iter().all(|&v| v > 0.0))
        });
        delta_ok && beta_ok
    }
}

/// `Δx*` from the linearization at a verified epidemic state.
pub fn sensitivity_solve(
    d: &HealingRates,
    b: &InfectionMatrix,
    x_star: &DVector<f64>,
    delta_perturbation: &DVector<f64>,
    beta_perturbation: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    SensitivitySystem::new(d, b, x_star)?.solve(delta_perturbation, beta_perturbation)
}

pub fn sensitivity_jacobians(d: &HealingRates, b: &InfectionMatrix) -> Result<SensitivityJacobians> {
    SensitivitySystem::from_rates(d, b)?.jacobians()
}

/// Sensitivities of the surviving virus when exactly one virus is
/// supercritical; its epidemic state does not depend on the other virus.
/// Returns the surviving virus (1 or 2) with its Jacobians.
pub fn dominant_virus_jacobians(sys: &BiVirusSystem) -> Result<(usize, SensitivityJacobians)> {
    let (s1, s2) = abscissae(sys)?;
    let k = match (s1 > 0.0, s2 > 0.0) {
        (true, false) => 1,
        (false, true) => 2,
        _ => {
            return Err(Error::InvalidParameter(format!(
                "sensitivity needs exactly one supercritical virus (s1 = {s1:e}, s2 = {s2:e})"
            )))
        }
    };
    let (d, b) = sys.virus(k);
    Ok((k, sensitivity_jacobians(d, b)?))
}
