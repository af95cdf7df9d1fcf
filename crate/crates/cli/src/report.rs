use std::path::PathBuf;

use bivirus::equilibria::EquilibriumReport;
use bivirus::spectral::{ThresholdIndicators, ThresholdSign};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointEntry {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumEntry {
    pub kind: String,
    pub point: PointEntry,
    pub residual: f64,
    /// `[re, im]` pairs, real part descending.
    pub spectrum: Vec<[f64; 2]>,
    pub max_real_part: f64,
    pub stability: String,
    pub regime: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl EquilibriumEntry {
    pub fn from_report(r: &EquilibriumReport) -> Self {
        Self {
            kind: r.kind.name().into(),
            point: PointEntry {
                x1: r.point.x1.iter().copied().collect(),
                x2: r.point.x2.iter().copied().collect(),
            },
            residual: r.residual,
            spectrum: r.spectrum.iter().map(|z| [z.re, z.im]).collect(),
            max_real_part: r.max_real_part,
            stability: r.stability.name().into(),
            regime: r.regime.name().into(),
            alpha: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdEntry {
    pub virus: usize,
    /// `s(-D+B)`.
    pub abscissa: f64,
    /// `rho(D^-1 B)`.
    pub radius: Option<f64>,
    pub sign: String,
}

impl ThresholdEntry {
    pub fn new(virus: usize, t: &ThresholdIndicators) -> Self {
        Self {
            virus,
            abscissa: t.abscissa,
            radius: t.radius,
            sign: match t.sign {
                ThresholdSign::Subcritical => "subcritical",
                ThresholdSign::Critical => "critical",
                ThresholdSign::Supercritical => "supercritical",
            }
            .into(),
        }
    }
}

/// Equal `delta/beta` ratios up to a common factor: a continuum of
/// coexisting equilibria, sampled at a few scalings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoexistenceEntry {
    pub applicable: bool,
    /// `kappa` with `(D2, B2) = kappa (D1, B1)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factor: Option<f64>,
    /// Homogeneous `delta/beta` ratios when they differ.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratios: Option<[f64; 2]>,
    pub samples: Vec<EquilibriumEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteriorEntry {
    pub starts: usize,
    pub converged_runs: usize,
    /// Always false: an empty result does not rule out interior equilibria.
    pub exhaustive: bool,
    pub found: Vec<EquilibriumEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationEntry {
    pub termination: String,
    pub steps: usize,
    pub samples: usize,
    pub final_time: f64,
    pub final_state: PointEntry,
    pub max_correction: f64,
    /// Equilibrium the regime predicts, when there is a unique one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted: Option<PointEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance_to_predicted: Option<f64>,
}

/// Summary written next to every run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    pub n: usize,
    pub regime: String,
    pub thresholds: Vec<ThresholdEntry>,
    pub equilibria: Vec<EquilibriumEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coexistence: Option<CoexistenceEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interior_search: Option<InteriorEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
    pub files: Vec<PathBuf>,
    pub wall_time_secs: f64,
}
