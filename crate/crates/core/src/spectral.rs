//! Spectral quantities of Metzler and nonnegative matrices.
//!
//! `s(M)` (largest real part) and `rho(M)` (largest modulus) for irreducible
//! Metzler/nonnegative matrices come from power iteration on a shifted,
//! primitive matrix. General spectra (needed for Jacobians, which are not
//! Metzler) come from [`eigen_all`], a balanced Hessenberg reduction followed
//! by Francis double-shift QR.

use std::cmp::Ordering;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::netstruct::{offdiag_strongly_connected, HealingRates, InfectionMatrix};

/// Width of the band around zero in which `s(-D+B)` is labelled critical.
pub const CRITICAL_BAND: f64 = 1e-9;

const POWER_REL_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 100_000;

/// Perron root and its strictly positive eigenvector (max entry 1).
#[derive(Debug, Clone, PartialEq)]
pub struct PerronPair {
    pub value: f64,
    pub vector: DVector<f64>,
    pub iterations: usize,
}

fn check_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::EmptyGraph);
    }
    Ok(m.nrows())
}

/// Power iteration for a nonnegative, irreducible matrix with a positive
/// diagonal (hence primitive). Stops when the Collatz-Wielandt bracket
/// `min_i (Pv)_i / v_i <= rho <= max_i (Pv)_i / v_i` is relatively narrower
/// than the tolerance.
fn perron_root_primitive(p: &DMatrix<f64>) -> Result<PerronPair> {
    let n = p.nrows();
    let mut v = DVector::from_element(n, 1.0);
    let mut w = DVector::zeros(n);
    let mut width = f64::INFINITY;
    for it in 1..=POWER_MAX_ITERS {
        p.mul_to(&v, &mut w);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let ratio = w[i] / v[i];
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        let scale = w.max();
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Invariant(format!(
                "power iteration produced a degenerate iterate (max entry {scale})"
            )));
        }
        v.copy_from(&w);
        v /= scale;
        width = (hi - lo) / hi;
        if width <= POWER_REL_TOL {
            return Ok(PerronPair {
                value: 0.5 * (hi + lo),
                vector: v,
                iterations: it,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "power iteration",
        iterations: POWER_MAX_ITERS,
        residual: width,
    })
}

/// `s(M)` and its Perron vector for an irreducible Metzler matrix.
///
/// Computed as `rho(M + phi I) - phi` with `phi = max(0, -min_i M_ii) + 1`,
/// which makes the shifted matrix nonnegative with a positive diagonal.
pub fn spectral_abscissa_metzler(m: &DMatrix<f64>) -> Result<PerronPair> {
    let n = check_square(m)?;
    for j in 0..n {
        for i in 0..n {
            let v = m[(i, j)];
            if !v.is_finite() {
                return Err(Error::InvalidEntry {
                    what: "Metzler matrix",
                    row: i,
                    col: j,
                    value: v,
                });
            }
            if i != j && v < 0.0 {
                return Err(Error::NotMetzler {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    if !offdiag_strongly_connected(m) {
        return Err(Error::Reducible {
            what: "Metzler matrix",
        });
    }
    let min_diag = (0..n).map(|i| m[(i, i)]).fold(f64::INFINITY, f64::min);
    let phi = (-min_diag).max(0.0) + 1.0;
    let mut shifted = m.clone();
    for i in 0..n {
        shifted[(i, i)] += phi;
    }
    let mut pair = perron_root_primitive(&shifted)?;
    pair.value -= phi;
    Ok(pair)
}

/// `rho(M)` and its Perron vector for an irreducible nonnegative matrix,
/// iterating on `M + I` so periodic matrices still converge.
pub fn spectral_radius_nonneg(m: &DMatrix<f64>) -> Result<PerronPair> {
    let n = check_square(m)?;
    for j in 0..n {
        for i in 0..n {
            let v = m[(i, j)];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidEntry {
                    what: "nonnegative matrix",
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    let irreducible = if n == 1 {
        m[(0, 0)] > 0.0
    } else {
        offdiag_strongly_connected(m)
    };
    if !irreducible {
        return Err(Error::Reducible {
            what: "nonnegative matrix",
        });
    }
    let shifted = m + DMatrix::identity(n, n);
    let mut pair = perron_root_primitive(&shifted)?;
    pair.value -= 1.0;
    Ok(pair)
}

/// Full spectrum of a real square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    /// Sorted by real part, then imaginary part, both descending.
    pub eigenvalues: Vec<Complex<f64>>,
    /// `s(M)`.
    pub max_real_part: f64,
    /// `rho(M)`.
    pub radius: f64,
}

/// All eigenvalues of a dense real matrix.
pub fn eigen_all(m: &DMatrix<f64>) -> Result<SpectrumResult> {
    let n = check_square(m)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "matrix has non-finite entries".into(),
        ));
    }
    // row-major working copy
    let mut h: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| m[(i, j)]).collect()).collect();
    balance(&mut h);
    hessenberg(&mut h);
    let mut eigenvalues = hessenberg_qr(&mut h)?;
    eigenvalues.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap_or(Ordering::Equal)
            .then(b.im.partial_cmp(&a.im).unwrap_or(Ordering::Equal))
    });
    let max_real_part = eigenvalues
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let radius = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(SpectrumResult {
        eigenvalues,
        max_real_part,
        radius,
    })
}

/// Diagonal similarity scaling by powers of two so that row and column
/// norms are comparable.
fn balance(a: &mut [Vec<f64>]) {
    const RADIX: f64 = 2.0;
    let n = a.len();
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let (mut c, mut r) = (0.0, 0.0);
            for j in 0..n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= sqrdx;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let g = 1.0 / f;
                for j in 0..n {
                    a[i][j] *= g;
                }
                for row in a.iter_mut() {
                    row[i] *= f;
                }
            }
        }
    }
}

/// Householder reduction to upper Hessenberg form.
fn hessenberg(h: &mut [Vec<f64>]) {
    let n = h.len();
    if n < 3 {
        return;
    }
    let high = n - 1;
    let mut ort = vec![0.0; n];
    for m in 1..high {
        let scale: f64 = (m..=high).map(|i| h[i][m - 1].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[i][m - 1] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;
        for j in m..n {
            let f = (m..=high).rev().map(|i| ort[i] * h[i][j]).sum::<f64>() / hh;
            for i in m..=high {
                h[i][j] -= f * ort[i];
            }
        }
        for row in h.iter_mut() {
            let f = (m..=high).rev().map(|j| ort[j] * row[j]).sum::<f64>() / hh;
            for j in m..=high {
                row[j] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[m][m - 1] = scale * g;
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix (eigenvalues only).
fn hessenberg_qr(h: &mut [Vec<f64>]) -> Result<Vec<Complex<f64>>> {
    let n = h.len();
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let eps = f64::EPSILON;
    let max_iters = 60 * n.max(1);

    let mut norm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            norm += h[i][j].abs();
        }
    }

    let low: isize = 0;
    let mut nn = n as isize - 1;
    let mut exshift = 0.0;
    let mut iter = 0usize;
    let mut total_iters = 0usize;
    let (mut p, mut q, mut r) = (0.0f64, 0.0f64, 0.0f64);
    let (mut s, mut z): (f64, f64);
    let (mut w, mut x, mut y);

    while nn >= low {
        // find a negligible subdiagonal entry
        let mut l = nn;
        while l > low {
            let lu = l as usize;
            s = h[lu - 1][lu - 1].abs() + h[lu][lu].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[lu][lu - 1].abs() < eps * s {
                break;
            }
            l -= 1;
        }
        let nu = nn as usize;

        if l == nn {
            // one root
            h[nu][nu] += exshift;
            wr[nu] = h[nu][nu];
            wi[nu] = 0.0;
            nn -= 1;
            iter = 0;
        } else if l == nn - 1 {
            // two roots
            w = h[nu][nu - 1] * h[nu - 1][nu];
            p = (h[nu - 1][nu - 1] - h[nu][nu]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[nu][nu] += exshift;
            h[nu - 1][nu - 1] += exshift;
            x = h[nu][nu];
            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                wr[nu - 1] = x + z;
                wr[nu] = if z != 0.0 { x - w / z } else { wr[nu - 1] };
                wi[nu - 1] = 0.0;
                wi[nu] = 0.0;
            } else {
                wr[nu - 1] = x + p;
                wr[nu] = x + p;
                wi[nu - 1] = z;
                wi[nu] = -z;
            }
            nn -= 2;
            iter = 0;
        } else {
            x = h[nu][nu];
            y = h[nu - 1][nu - 1];
            w = h[nu][nu - 1] * h[nu - 1][nu];

            // exceptional shifts
            if iter == 10 {
                exshift += x;
                for i in (low as usize)..=nu {
                    h[i][i] -= x;
                }
                s = h[nu][nu - 1].abs() + h[nu - 1][nu - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in (low as usize)..=nu {
                        h[i][i] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }

            iter += 1;
            total_iters += 1;
            if total_iters > max_iters {
                return Err(Error::NonConvergence {
                    what: "Hessenberg QR",
                    iterations: total_iters,
                    residual: h[nu][nu - 1].abs(),
                });
            }

            // look for two consecutive small subdiagonal entries
            let mut m = nn - 2;
            while m >= l {
                let mu = m as usize;
                z = h[mu][mu];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[mu + 1][mu] + h[mu][mu + 1];
                q = h[mu + 1][mu + 1] - z - r - s;
                r = h[mu + 2][mu + 1];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[mu][mu - 1].abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (h[mu - 1][mu - 1].abs() + z.abs() + h[mu + 1][mu + 1].abs()))
                {
                    break;
                }
                m -= 1;
            }
            let mu = m as usize;
            let lu = l as usize;
            for i in (mu + 2)..=nu {
                h[i][i - 2] = 0.0;
                if i > mu + 2 {
                    h[i][i - 3] = 0.0;
                }
            }

            // double QR step on rows l..nn, columns m..nn
            for k in mu..nu {
                let notlast = k != nu - 1;
                if k != mu {
                    p = h[k][k - 1];
                    q = h[k + 1][k - 1];
                    r = if notlast { h[k + 2][k - 1] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s == 0.0 {
                    continue;
                }
                if k != mu {
                    h[k][k - 1] = -s * x;
                } else if lu != mu {
                    h[k][k - 1] = -h[k][k - 1];
                }
                p += s;
                x = p / s;
                y = q / s;
                z = r / s;
                q /= p;
                r /= p;

                for j in k..=nu {
                    let mut pp = h[k][j] + q * h[k + 1][j];
                    if notlast {
                        pp += r * h[k + 2][j];
                        h[k + 2][j] -= pp * z;
                    }
                    h[k][j] -= pp * x;
                    h[k + 1][j] -= pp * y;
                }
                for i in lu..=nu.min(k + 3) {
                    let mut pp = x * h[i][k] + y * h[i][k + 1];
                    if notlast {
                        pp += z * h[i][k + 2];
                        h[i][k + 2] -= pp * r;
                    }
                    h[i][k] -= pp;
                    h[i][k + 1] -= pp * q;
                }
            }
        }
    }

    Ok(wr
        .into_iter()
        .zip(wi)
        .map(|(re, im)| Complex::new(re, im))
        .collect())
}

/// Sign of a threshold quantity with the critical band applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThresholdSign {
    Subcritical,
    Critical,
    Supercritical,
}

impl ThresholdSign {
    pub fn of(value: f64) -> Self {
        if value.abs() <= CRITICAL_BAND {
            ThresholdSign::Critical
        } else if value > 0.0 {
            ThresholdSign::Supercritical
        } else {
            ThresholdSign::Subcritical
        }
    }
}

/// `s(-D+B)`, and `rho(D^-1 B)` when every healing rate is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdIndicators {
    pub abscissa: f64,
    pub radius: Option<f64>,
    pub sign: ThresholdSign,
}

impl ThresholdIndicators {
    pub fn is_critical(&self) -> bool {
        self.sign == ThresholdSign::Critical
    }
}

/// The matrix `-D + B`.
pub fn stability_matrix(d: &HealingRates, b: &InfectionMatrix) -> Result<DMatrix<f64>> {
    if d.n() != b.n() {
        return Err(Error::DimensionMismatch {
            context: "healing rates vs infection matrix",
            expected: b.n(),
            found: d.n(),
        });
    }
    Ok(b.matrix() - d.diagonal_matrix())
}

/// Threshold test for one virus. When `rho(D^-1 B)` is available its sign
/// relative to 1 must agree with the sign of `s(-D+B)`.
pub fn threshold_indicators(d: &HealingRates, b: &InfectionMatrix) -> Result<ThresholdIndicators> {
    b.require_irreducible("infection matrix")?;
    let abscissa = spectral_abscissa_metzler(&stability_matrix(d, b)?)?.value;
    let sign = ThresholdSign::of(abscissa);
    let radius = if d.all_positive() {
        let mut scaled = b.matrix().clone();
        for (i, &delta) in d.as_slice().iter().enumerate() {
            scaled.row_mut(i).scale_mut(1.0 / delta);
        }
        let rho = spectral_radius_nonneg(&scaled)?.value;
        let gap = rho - 1.0;
        let agree = match sign {
            ThresholdSign::Critical => {
                // near the threshold s(-D+B) ~ delta * (rho - 1)
                let min_delta = d.as_slice().iter().cloned().fold(f64::INFINITY, f64::min);
                gap.abs() <= CRITICAL_BAND / min_delta + CRITICAL_BAND
            }
            ThresholdSign::Supercritical => gap > 0.0,
            ThresholdSign::Subcritical => gap < 0.0,
        };
        if !agree {
            return Err(Error::ThresholdMismatch {
                abscissa,
                radius_gap: gap,
            });
        }
        Some(rho)
    } else {
        None
    };
    Ok(ThresholdIndicators {
        abscissa,
        radius,
        sign,
    })
}
