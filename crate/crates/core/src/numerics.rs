//! Scalar numerical kernels: standard normal CDF and quantile, Gauss-Hermite
//! quadrature, bracketed root finding, a unimodal minimizer, a small dense
//! linear solver and the seeded random-stream contract.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use libm::erfc;
use thiserror::Error;

/// Quadrature order used for every averaged-density integral.
pub const DEFAULT_QUADRATURE_ORDER: usize = 64;

/// Residual tolerance used by threshold calibration.
pub const ROOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no sign change on [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("root finder stalled with residual {residual:e} at x = {x}")]
    NoConvergence { x: f64, residual: f64 },
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF, evaluated through the complementary error function so
/// that both tails keep full relative accuracy.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    if x < 0.0 {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    } else {
        1.0 - 0.5 * erfc(x * FRAC_1_SQRT_2)
    }
}

/// Upper tail `1 - Φ(x)` without cancellation.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    norm_cdf(-x)
}

/// Inverse of [`norm_cdf`].
///
/// Starts from Acklam's rational approximation and polishes with Halley steps
/// on the erfc-based CDF, which brings `|Φ(q) - p|` down to rounding level.
pub fn norm_quantile(p: f64) -> Result<f64, NumericsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(NumericsError::Domain(format!(
            "quantile probability must lie in (0, 1), got {p}"
        )));
    }
    // Acklam is built for the lower tail; reflect for p > 1/2.
    let start = if p > 0.5 { -acklam(1.0 - p) } else { acklam(p) };
    Ok(halley_refine(start, p))
}

fn halley_refine(mut x: f64, p: f64) -> f64 {
    for _ in 0..4 {
        let err = if x < 0.0 { norm_cdf(x) - p } else { -(norm_sf(x) - (1.0 - p)) };
        let pdf = norm_pdf(x);
        if pdf == 0.0 {
            break;
        }
        let u = err / pdf;
        let step = u / (1.0 + 0.5 * x * u);
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// A univariate normal law `N(mean, var)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normal {
    pub mean: f64,
    pub var: f64,
}

impl Normal {
    pub fn new(mean: f64, var: f64) -> Result<Self, NumericsError> {
        if !(var > 0.0) || !var.is_finite() || !mean.is_finite() {
            return Err(NumericsError::Domain(format!(
                "normal law needs finite mean and positive variance, got N({mean}, {var})"
            )));
        }
        Ok(Self { mean, var })
    }

    pub fn sd(&self) -> f64 {
        self.var.sqrt()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        norm_pdf((x - self.mean) / self.sd()) / self.sd()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd();
        -0.5 * z * z - 0.5 * (2.0 * PI * self.var).ln()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        norm_cdf((x - self.mean) / self.sd())
    }

    /// `P(|X - center| >= radius)`.
    pub fn prob_outside(&self, center: f64, radius: f64) -> f64 {
        let shift = self.mean - center;
        let sd = self.sd();
        norm_cdf((shift - radius) / sd) + norm_cdf((-shift - radius) / sd)
    }
}

/// Physicists' Gauss-Hermite rule: `∫ f(x) e^{-x²} dx ≈ Σ wᵢ f(xᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub order: usize,
}

impl QuadratureRule {
    /// Builds the rule by Newton iteration on the orthonormal Hermite
    /// recurrence, with the usual asymptotic initial guesses.
    pub fn gauss_hermite(order: usize) -> Result<Self, NumericsError> {
        if order < 2 {
            return Err(NumericsError::Domain(format!(
                "Gauss-Hermite order must be at least 2, got {order}"
            )));
        }
        let n = order;
        let nf = n as f64;
        let pim4 = PI.powf(-0.25);
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut z = 0.0_f64;
        for i in 0..n.div_ceil(2) {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        x.reverse();
        w.reverse();
        Ok(Self {
            nodes: x,
            weights: w,
            order: n,
        })
    }

    /// `E[f(Z)]` for `Z ~ N(mean, var)`.
    pub fn expect(&self, f: impl Fn(f64) -> f64, mean: f64, var: f64) -> f64 {
        let scale = (2.0 * var).sqrt();
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mean + scale * x))
            .sum();
        sum / PI.sqrt()
    }
}

/// Shared order-64 rule.
pub fn default_rule() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| {
        QuadratureRule::gauss_hermite(DEFAULT_QUADRATURE_ORDER).expect("order 64 is valid")
    })
}

/// Gauss-Hermite approximation of `E[f(Z)]`, `Z ~ N(mean, var)`.
pub fn gauss_hermite_expect(
    f: impl Fn(f64) -> f64,
    mean: f64,
    var: f64,
    order: usize,
) -> Result<f64, NumericsError> {
    if !(var > 0.0) {
        return Err(NumericsError::Domain(format!(
            "variance must be positive, got {var}"
        )));
    }
    if order == DEFAULT_QUADRATURE_ORDER {
        return Ok(default_rule().expect(f, mean, var));
    }
    Ok(QuadratureRule::gauss_hermite(order)?.expect(f, mean, var))
}

/// An interval whose endpoint values straddle zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootBracket {
    pub lo: f64,
    pub hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl RootBracket {
    pub fn new(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<Self, NumericsError> {
        let (f_lo, f_hi) = (f(lo), f(hi));
        if f_lo.is_nan() || f_hi.is_nan() || f_lo * f_hi > 0.0 {
            return Err(NumericsError::NoSignChange { lo, hi, f_lo, f_hi });
        }
        Ok(Self { lo, hi, f_lo, f_hi })
    }
}

/// Bisection on a monotone function. Returns once `|f(x)| <= tol` or the
/// bracket has collapsed to adjacent floats.
pub fn solve_monotone_root(
    f: impl Fn(f64) -> f64,
    bracket: RootBracket,
    tol: f64,
) -> Result<f64, NumericsError> {
    let RootBracket {
        mut lo,
        mut hi,
        f_lo,
        f_hi,
    } = bracket;
    if f_lo.is_nan() || f_hi.is_nan() || f_lo * f_hi > 0.0 {
        return Err(NumericsError::NoSignChange { lo, hi, f_lo, f_hi });
    }
    if f_lo.abs() <= tol {
        return Ok(lo);
    }
    if f_hi.abs() <= tol {
        return Ok(hi);
    }
    let increasing = f_hi > f_lo;
    let mut best = (lo, f_lo.abs());
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() < best.1 {
            best = (mid, fm.abs());
        }
        if fm.abs() <= tol {
            return Ok(mid);
        }
        if mid <= lo || mid >= hi {
            break;
        }
        if (fm < 0.0) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(NumericsError::NoConvergence {
        x: best.0,
        residual: best.1,
    })
}

/// Golden-section search for the minimizer of a unimodal function on `[lo, hi]`.
pub fn minimize_unimodal(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while (hi - lo).abs() > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Solves `a·x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` for (numerically) singular systems.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for k in col..n {
                    a[row][k] -= factor * a[col][k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Deterministic generator for `(master_seed, stream_id)`.
///
/// ChaCha8 with the stream id in the nonce: identical pairs reproduce the
/// same sequence on every platform, distinct ids give disjoint streams.
pub fn rng_stream(master_seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id);
    rng
}
