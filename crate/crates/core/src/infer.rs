//! Post-selection inference for a detected peak without randomization: the
//! truncated-Gaussian height pivot, the Wald location pivot and the regions
//! obtained by inverting them.

use crate::linalg::{self, Mat};
use crate::peaks::Peak;
use crate::special::{brent, ln_norm_sf_diff};
use crate::{Error, Result};

pub use crate::special::chi2_quantile;

/// Bisection tolerance on the mean when inverting height pivots.
pub const INVERSION_TOL: f64 = 1e-11;
const MAX_DOUBLINGS: u32 = 60;
const MONOTONE_GRID: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub alpha: f64,
}

impl ConfidenceInterval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// `{t : (t − c)ᵀ P (t − c) ≤ r²}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub center: Vec<f64>,
    pub precision: Mat,
    pub radius_sq: f64,
}

impl Ellipsoid {
    /// Quadratic form of `t` about the center.
    pub fn statistic(&self, t: &[f64]) -> f64 {
        let diff: Vec<f64> = self.center.iter().zip(t).map(|(c, x)| c - x).collect();
        linalg::quad_form(&self.precision, &diff)
    }

    pub fn contains(&self, t: &[f64]) -> bool {
        self.statistic(t) <= self.radius_sq
    }

    /// Semi-axis lengths `√(r²/λ_i)`, longest first.
    pub fn semi_axes(&self) -> Vec<f64> {
        let mut ax: Vec<f64> = linalg::sym_eigenvalues(&self.precision)
            .iter()
            .map(|l| (self.radius_sq / l).sqrt())
            .collect();
        ax.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        ax
    }

    /// Length of the largest semi-axis.
    pub fn width(&self) -> f64 {
        self.semi_axes()[0]
    }
}

/// `tr(Ĥ⁻¹Λ)`, failing on a non-positive-definite `Ĥ`.
pub fn trace_term(h: &Mat, lambda: &Mat) -> Result<f64> {
    linalg::trace_inv_prod(h, lambda)
}

/// `Ψ(Ŷ − μ − c/2)/Ψ(u − μ − c/2)` for a given trace term `c = tr(Ĥ⁻¹Λ)`.
pub fn tg_pivot_with_trace(y_hat: f64, mu: f64, u: f64, trace: f64) -> Result<f64> {
    if !(y_hat > u) {
        return Err(Error::SelectionViolated { y: y_hat, u });
    }
    let shift = mu + 0.5 * trace;
    Ok(ln_norm_sf_diff(y_hat - shift, u - shift).exp())
}

/// Truncated-Gaussian height pivot with the plug-in trace `tr(Ĥ⁻¹Λ)`.
pub fn tg_pivot(y_hat: f64, mu: f64, u: f64, h_hat: &Mat, lambda: &Mat) -> Result<f64> {
    if !(y_hat > u) {
        return Err(Error::SelectionViolated { y: y_hat, u });
    }
    tg_pivot_with_trace(y_hat, mu, u, trace_term(h_hat, lambda)?)
}

/// Inverts a pivot that is monotone in `μ` on the targets `α/2` and
/// `1 − α/2`. Brackets are found by doubling outwards from `start`; the
/// pivot's monotonicity is checked on a grid spanning the bracket first.
pub fn invert_pivot<F: Fn(f64) -> Result<f64>>(
    pivot: F,
    start: f64,
    alpha: f64,
    increasing: bool,
) -> Result<ConfidenceInterval> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha {alpha} outside (0,1)")));
    }
    // In the increasing case the lower endpoint solves pivot = α/2.
    let (target_lo, target_hi) = if increasing {
        (0.5 * alpha, 1.0 - 0.5 * alpha)
    } else {
        (1.0 - 0.5 * alpha, 0.5 * alpha)
    };
    let below = |p: f64, t: f64| if increasing { p < t } else { p > t };
    let above = |p: f64, t: f64| if increasing { p > t } else { p < t };

    let mut step = 1.0;
    let mut lo_b = start - step;
    let mut n = 0;
    while !below(pivot(lo_b)?, target_lo) {
        step *= 2.0;
        lo_b = start - step;
        n += 1;
        if n > MAX_DOUBLINGS {
            return Err(Error::Numerical("lower bracket not found".into()));
        }
    }
    step = 1.0;
    let mut hi_b = start + step;
    n = 0;
    while !above(pivot(hi_b)?, target_hi) {
        step *= 2.0;
        hi_b = start + step;
        n += 1;
        if n > MAX_DOUBLINGS {
            return Err(Error::Numerical("upper bracket not found".into()));
        }
    }
    check_monotone(&pivot, lo_b, hi_b, increasing)?;

    let solve = |target: f64| -> Result<f64> {
        let mut err = None;
        let root = brent(
            |m| match pivot(m) {
                Ok(p) => p - target,
                Err(e) => {
                    err = Some(e);
                    f64::NAN
                }
            },
            lo_b,
            hi_b,
            INVERSION_TOL,
        );
        if let Some(e) = err {
            return Err(e);
        }
        root
    };
    let a = solve(target_lo)?;
    let b = solve(target_hi)?;
    Ok(ConfidenceInterval {
        lo: a.min(b),
        hi: a.max(b),
        alpha,
    })
}

fn check_monotone<F: Fn(f64) -> Result<f64>>(
    pivot: &F,
    lo: f64,
    hi: f64,
    increasing: bool,
) -> Result<()> {
    let mut prev = pivot(lo)?;
    for i in 1..=MONOTONE_GRID {
        let m = lo + (hi - lo) * i as f64 / MONOTONE_GRID as f64;
        let p = pivot(m)?;
        let slack = 1e-9;
        let ok = if increasing {
            p >= prev - slack
        } else {
            p <= prev + slack
        };
        if !ok {
            return Err(Error::Numerical(format!(
                "pivot not monotone near mu = {m}"
            )));
        }
        prev = p;
    }
    Ok(())
}

/// Height interval `{μ : α/2 ≤ Ŝ_μ(Ŷ) ≤ 1 − α/2}`.
pub fn height_interval(
    peak: &Peak,
    u: f64,
    alpha: f64,
    lambda: &Mat,
) -> Result<ConfidenceInterval> {
    if peak.degenerate {
        return Err(Error::DegenerateHessian);
    }
    if !(peak.height > u) {
        return Err(Error::SelectionViolated { y: peak.height, u });
    }
    let trace = trace_term(&peak.neg_hessian, lambda)?;
    invert_pivot(
        |mu| tg_pivot_with_trace(peak.height, mu, u, trace),
        peak.height,
        alpha,
        true,
    )
}

/// `(t̂ − t)ᵀ ĤΛ⁻¹Ĥ (t̂ − t)`.
pub fn wald_pivot(t_hat: &[f64], t: &[f64], h_hat: &Mat, lambda: &Mat) -> Result<f64> {
    let p = wald_precision(h_hat, lambda)?;
    let e = Ellipsoid {
        center: t_hat.to_vec(),
        precision: p,
        radius_sq: 0.0,
    };
    Ok(e.statistic(t))
}

/// `ĤΛ⁻¹Ĥ`.
pub fn wald_precision(h_hat: &Mat, lambda: &Mat) -> Result<Mat> {
    if !linalg::is_positive_definite(h_hat) {
        return Err(Error::DegenerateHessian);
    }
    let li = linalg::spd_inverse(lambda)?;
    Ok(linalg::symmetrize(&(h_hat * li * h_hat)))
}

/// Location region `{t : Ŵ_t(t̂) ≤ q_{χ²_d}(1 − α)}`.
pub fn location_ellipsoid(peak: &Peak, alpha: f64, lambda: &Mat) -> Result<Ellipsoid> {
    if peak.degenerate {
        return Err(Error::DegenerateHessian);
    }
    let precision = wald_precision(&peak.neg_hessian, lambda)?;
    let radius_sq = chi2_quantile(peak.dim(), 1.0 - alpha)?;
    Ok(Ellipsoid {
        center: peak.location.clone(),
        precision,
        radius_sq,
    })
}
