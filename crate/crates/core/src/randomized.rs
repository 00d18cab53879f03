//! Randomized post-selection inference. Peaks are detected on
//! `Y^sel = Y + √γ ω`; data carving then infers from the full field `Y`
//! conditionally on that selection, while data splitting infers from the
//! independent `Y^inf = Y − ω/√γ` alone.

use std::sync::OnceLock;

use crate::infer::{
    chi2_quantile, invert_pivot, trace_term, wald_precision, ConfidenceInterval, Ellipsoid,
};
use crate::linalg::{self, Mat};
use crate::model::dist;
use crate::peaks::Peak;
use crate::special::{bisect, ln_norm_sf, norm_hazard, norm_isf, norm_sf};
use crate::theory::gauss_legendre;
use crate::{Error, Result};

/// Half-width of the quadrature window around the mode, in standard units.
/// The log-density has curvature at least one, so the mass outside is below
/// `exp(−72)` of the peak.
const WINDOW: f64 = 12.0;
/// Gauss-Legendre order per panel.
const GL_ORDER: usize = 20;
/// Panel width away from the soft step.
const WIDE_PANEL: f64 = 2.0;
/// Half-width of the refined band around the soft step, in units of `√γ`.
const BAND: f64 = 8.0;

/// Everything the carve pivots need about one selected peak.
#[derive(Debug, Clone, PartialEq)]
pub struct CarveContext {
    pub gamma: f64,
    /// Selection threshold on the raw `Y^sel` scale.
    pub u: f64,
    pub sel_peak: Peak,
    pub full_peak: Peak,
    /// `Ĥ^inf = −∇²Y^inf` at the full-field peak.
    pub h_inf: Mat,
}

impl CarveContext {
    pub fn new(gamma: f64, u: f64, sel_peak: Peak, full_peak: Peak, h_inf: Mat) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Parameter(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        if full_peak.degenerate {
            return Err(Error::DegenerateHessian);
        }
        Ok(Self {
            gamma,
            u,
            sel_peak,
            full_peak,
            h_inf: linalg::symmetrize(&h_inf),
        })
    }

    /// Distance between the selected and the matched peak.
    pub fn match_distance(&self) -> f64 {
        dist(&self.sel_peak.location, &self.full_peak.location)
    }
}

/// Candidate closest to `target`, ties to the smaller grid index.
pub fn match_nearest_peak<'a>(candidates: &'a [Peak], target: &[f64]) -> Result<&'a Peak> {
    candidates
        .iter()
        .min_by(|a, b| {
            dist(&a.location, target)
                .partial_cmp(&dist(&b.location, target))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.grid_index.cmp(&b.grid_index))
        })
        .ok_or(Error::NoMatch)
}

/// Soft-truncated Gaussian with density proportional to
/// `Ψ((u − z − γc/2)/√γ) φ(z − μ − c/2)`, where `c` is the trace term.
struct SoftTg {
    m: f64,
    a: f64,
    sg: f64,
    mode: f64,
    log_peak: f64,
}

impl SoftTg {
    fn new(mu: f64, u: f64, gamma: f64, trace: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Parameter(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        let m = mu + 0.5 * trace;
        let a = u - 0.5 * gamma * trace;
        let sg = gamma.sqrt();
        let mut s = Self {
            m,
            a,
            sg,
            mode: m,
            log_peak: 0.0,
        };
        // The log-density is strictly concave; its derivative
        // h((a − z)/√γ)/√γ − (z − m) changes sign once in [m, m + h(x_m)/√γ].
        let slope = |z: f64| norm_hazard((a - z) / sg) / sg - (z - m);
        let upper = m + norm_hazard((a - m) / sg) / sg;
        if upper.is_finite() && upper > m {
            let tol = 1e-12 * (1.0 + upper.abs());
            s.mode = bisect(slope, m, upper, tol).unwrap_or(m);
        } else if !upper.is_finite() {
            return Err(Error::Numerical(
                "soft truncation mode bracket is not finite".into(),
            ));
        }
        s.log_peak = s.log_density(s.mode);
        Ok(s)
    }

    fn log_density(&self, z: f64) -> f64 {
        ln_norm_sf((self.a - z) / self.sg) - 0.5 * (z - self.m) * (z - self.m)
    }

    fn weight(&self, z: f64) -> f64 {
        (self.log_density(z) - self.log_peak).exp()
    }

    /// Composite Gauss-Legendre integral of the normalized weight. Panels
    /// are narrow across the soft step at `a` and wide elsewhere; the weight
    /// is log-concave with curvature at least one, so wide panels suffice.
    fn integrate(&self, x0: f64, x1: f64) -> f64 {
        let (nodes, weights) = gl_rule();
        let band = (self.a - BAND * self.sg, self.a + BAND * self.sg);
        let mut cuts = vec![x0, x1];
        cuts.extend([band.0, band.1].into_iter().filter(|&c| c > x0 && c < x1));
        cuts.sort_by(f64::total_cmp);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let mid = 0.5 * (lo + hi);
            let width = if mid > band.0 && mid < band.1 {
                self.sg.min(WIDE_PANEL)
            } else {
                WIDE_PANEL
            };
            let panels = ((hi - lo) / width).ceil().max(1.0) as usize;
            let h = (hi - lo) / panels as f64;
            for k in 0..panels {
                let c = lo + h * (k as f64 + 0.5);
                let sum: f64 = nodes
                    .iter()
                    .zip(weights)
                    .map(|(x, wt)| wt * self.weight(c + 0.5 * h * x))
                    .sum();
                total += 0.5 * h * sum;
            }
        }
        total
    }

    fn cdf(&self, y: f64) -> Result<f64> {
        let lo = self.mode - WINDOW;
        let hi = self.mode + WINDOW;
        if y <= lo {
            return Ok(0.0);
        }
        if y >= hi {
            return Ok(1.0);
        }
        let left = self.integrate(lo, y);
        let right = self.integrate(y, hi);
        let total = left + right;
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Numerical(
                "soft truncated Gaussian has no mass in its window".into(),
            ));
        }
        // Use the smaller side so that both tails keep relative accuracy.
        Ok(if left <= right {
            left / total
        } else {
            1.0 - right / total
        }
        .clamp(0.0, 1.0))
    }

    fn density(&self, y: f64) -> Result<f64> {
        let total = self.integrate(self.mode - WINDOW, self.mode + WINDOW);
        Ok(self.weight(y) / total)
    }
}

fn gl_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(GL_ORDER))
}

/// Distribution function of the soft-truncated Gaussian at `y`.
pub fn soft_tg_cdf(y: f64, mu: f64, u: f64, gamma: f64, trace_term: f64) -> Result<f64> {
    SoftTg::new(mu, u, gamma, trace_term)?.cdf(y)
}

/// Normalized soft-truncated Gaussian density at `y`.
pub fn soft_tg_density(y: f64, mu: f64, u: f64, gamma: f64, trace_term: f64) -> Result<f64> {
    SoftTg::new(mu, u, gamma, trace_term)?.density(y)
}

/// Carve height pivot: the soft-TG distribution function at `Ŷ`, which is
/// decreasing in `μ`.
pub fn carve_height_pivot(ctx: &CarveContext, mu: f64, lambda: &Mat) -> Result<f64> {
    let trace = trace_term(&ctx.full_peak.neg_hessian, lambda)?;
    soft_tg_cdf(ctx.full_peak.height, mu, ctx.u, ctx.gamma, trace)
}

/// `{μ : α/2 ≤ F_μ(Ŷ) ≤ 1 − α/2}` for the soft-TG distribution function.
pub fn carve_height_interval(
    ctx: &CarveContext,
    alpha: f64,
    lambda: &Mat,
) -> Result<ConfidenceInterval> {
    let trace = trace_term(&ctx.full_peak.neg_hessian, lambda)?;
    let y = ctx.full_peak.height;
    invert_pivot(
        |mu| soft_tg_cdf(y, mu, ctx.u, ctx.gamma, trace),
        y,
        alpha,
        false,
    )
}

/// Symmetric part of `ĤΛ⁻¹Ĥ^inf`.
pub fn carve_precision(ctx: &CarveContext, lambda: &Mat) -> Result<Mat> {
    let h = &ctx.full_peak.neg_hessian;
    if !linalg::is_positive_definite(h) {
        return Err(Error::DegenerateHessian);
    }
    let li = linalg::spd_inverse(lambda)?;
    let m = linalg::symmetrize(&(h * li * &ctx.h_inf));
    if !linalg::is_positive_definite(&m) {
        return Err(Error::DegenerateCarvePrecision);
    }
    Ok(m)
}

/// `(t̂ − t)ᵀ sym(ĤΛ⁻¹Ĥ^inf) (t̂ − t)`.
pub fn carve_wald_pivot(ctx: &CarveContext, t: &[f64], lambda: &Mat) -> Result<f64> {
    let precision = carve_precision(ctx, lambda)?;
    Ok(Ellipsoid {
        center: ctx.full_peak.location.clone(),
        precision,
        radius_sq: 0.0,
    }
    .statistic(t))
}

pub fn carve_location_ellipsoid(ctx: &CarveContext, alpha: f64, lambda: &Mat) -> Result<Ellipsoid> {
    let precision = carve_precision(ctx, lambda)?;
    let radius_sq = chi2_quantile(ctx.full_peak.dim(), 1.0 - alpha)?;
    Ok(Ellipsoid {
        center: ctx.full_peak.location.clone(),
        precision,
        radius_sq,
    })
}

/// `τ_γ = √(1 + 1/γ)`.
pub fn split_scale(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Parameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    Ok((1.0 + 1.0 / gamma).sqrt())
}

/// `Ψ((Ỹ − μ − τ²tr(H̃⁻¹Λ)/2)/τ)`, increasing in `μ`.
pub fn split_height_pivot(inf_peak: &Peak, mu: f64, gamma: f64, lambda: &Mat) -> Result<f64> {
    if inf_peak.degenerate {
        return Err(Error::DegenerateHessian);
    }
    let tau = split_scale(gamma)?;
    let trace = trace_term(&inf_peak.neg_hessian, lambda)?;
    Ok(norm_sf(
        (inf_peak.height - mu - 0.5 * tau * tau * trace) / tau,
    ))
}

/// Closed-form inversion of [`split_height_pivot`].
pub fn split_height_interval(
    inf_peak: &Peak,
    alpha: f64,
    gamma: f64,
    lambda: &Mat,
) -> Result<ConfidenceInterval> {
    if inf_peak.degenerate {
        return Err(Error::DegenerateHessian);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha {alpha} outside (0,1)")));
    }
    let tau = split_scale(gamma)?;
    let trace = trace_term(&inf_peak.neg_hessian, lambda)?;
    let center = inf_peak.height - 0.5 * tau * tau * trace;
    let z = norm_isf(0.5 * alpha);
    Ok(ConfidenceInterval {
        lo: center - tau * z,
        hi: center + tau * z,
        alpha,
    })
}

/// Location region from `Y^inf`. `Y^inf` has covariance `τ_γ² K`, so its
/// gradient covariance is `τ_γ² Λ` and the Wald precision is
/// `H̃ (τ_γ² Λ)⁻¹ H̃`.
pub fn split_location_ellipsoid(
    inf_peak: &Peak,
    alpha: f64,
    gamma: f64,
    lambda: &Mat,
) -> Result<Ellipsoid> {
    if inf_peak.degenerate {
        return Err(Error::DegenerateHessian);
    }
    let tau = split_scale(gamma)?;
    let precision = wald_precision(&inf_peak.neg_hessian, &(lambda * (tau * tau)))?;
    let radius_sq = chi2_quantile(inf_peak.dim(), 1.0 - alpha)?;
    Ok(Ellipsoid {
        center: inf_peak.location.clone(),
        precision,
        radius_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer::{height_interval, location_ellipsoid, tg_pivot_with_trace, wald_pivot};
    use crate::special::{adaptive_simpson, norm_cdf, norm_sf};

    fn peak(loc: Vec<f64>, height: f64, h: Mat, idx: usize) -> Peak {
        let d = loc.len();
        Peak {
            location: loc,
            height,
            grid_index: idx,
            neg_hessian: h,
            gradient: vec![0.0; d],
            degenerate: false,
        }
    }

    #[test]
    fn nearest_match_and_ties() {
        let h = Mat::identity(2, 2);
        let c = vec![
            peak(vec![1.0, 0.0], 1.0, h.clone(), 7),
            peak(vec![-1.0, 0.0], 1.0, h.clone(), 3),
        ];
        assert_eq!(match_nearest_peak(&c, &[0.0, 0.0]).unwrap().grid_index, 3);
        assert_eq!(match_nearest_peak(&c, &[0.9, 0.0]).unwrap().grid_index, 7);
        assert_eq!(
            match_nearest_peak(&c[..1], &[5.0, 5.0]).unwrap().grid_index,
            7
        );
        assert_eq!(match_nearest_peak(&[], &[0.0, 0.0]), Err(Error::NoMatch));
    }

    #[test]
    fn soft_cdf_limits() {
        let m = 2.0;
        assert!(soft_tg_cdf(m - 10.0, m, 1.0, 1.0, 0.0).unwrap() <= 1e-9);
        assert!(soft_tg_cdf(m + 10.0, m, 1.0, 1.0, 0.0).unwrap() >= 1.0 - 1e-9);
        for y in [-1.0, 0.3, 2.0, 4.5] {
            let f = soft_tg_cdf(y, 0.0, f64::NEG_INFINITY, 1.0, 0.0).unwrap();
            assert!((f - norm_cdf(y)).abs() < 1e-9, "y = {y}");
        }
    }

    #[test]
    fn soft_cdf_normalizer_matches_closed_form() {
        // ∫ Ψ((a − z)/s) φ(z − m) dz = Ψ((a − m)/√(1 + s²)).
        let (mu, u, gamma, tr) = (1.0, 2.5, 0.7, 0.2);
        let s = SoftTg::new(mu, u, gamma, tr).unwrap();
        let total =
            adaptive_simpson(|z| s.weight(z), s.mode - WINDOW, s.mode + WINDOW, 1e-12).unwrap();
        let want = norm_sf((s.a - s.m) / (1.0 + gamma).sqrt());
        let got = total * s.log_peak.exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((got / want - 1.0).abs() < 1e-9);
    }

    #[test]
    fn soft_cdf_tends_to_hard_truncation() {
        let (mu, u, tr) = (1.0, 2.0, 0.05);
        let m = mu + 0.5 * tr;
        for y in [2.1, 2.5, 3.0, 4.0] {
            let soft = soft_tg_cdf(y, mu, u, 1e-6, tr).unwrap();
            let hard = 1.0 - norm_sf(y - m) / norm_sf(u - m);
            assert!((soft - hard).abs() < 1e-3, "y = {y}: {soft} vs {hard}");
            let pivot = tg_pivot_with_trace(y, mu, u, tr).unwrap();
            assert!((soft - (1.0 - pivot)).abs() < 1e-3);
        }
    }

    #[test]
    fn soft_cdf_monotone_in_y() {
        let mut prev = 0.0;
        for i in 0..200 {
            let y = -4.0 + 0.06 * i as f64;
            let f = soft_tg_cdf(y, 0.5, 1.5, 1.0, 0.1).unwrap();
            assert!(f >= prev - 1e-12);
            prev = f;
        }
    }

    #[test]
    fn carve_reduces_to_standard_with_equal_hessians() {
        let lambda = Mat::identity(2, 2) * 44.444;
        let h = Mat::from_row_slice(2, 2, &[480.0, 20.0, 20.0, 510.0]);
        let full = peak(vec![0.01, -0.02], 11.4, h.clone(), 5);
        let ctx = CarveContext::new(1.0, 12.0, full.clone(), full.clone(), h.clone()).unwrap();
        let t = [0.0, 0.0];
        assert_eq!(
            carve_wald_pivot(&ctx, &t, &lambda).unwrap(),
            wald_pivot(&full.location, &t, &h, &lambda).unwrap()
        );
        let a = carve_location_ellipsoid(&ctx, 0.1, &lambda).unwrap();
        let b = location_ellipsoid(&full, 0.1, &lambda).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            carve_wald_pivot(&ctx, &full.location, &lambda).unwrap(),
            0.0
        );
        assert!(a.contains(&full.location));
    }

    #[test]
    fn carve_interval_round_trip_and_small_gamma() {
        let lambda = Mat::identity(2, 2) * 44.444;
        let h = Mat::identity(2, 2) * 500.0;
        let full = peak(vec![0.0, 0.0], 7.8, h.clone(), 0);
        let ctx = CarveContext::new(1.0, 7.0, full.clone(), full.clone(), h.clone()).unwrap();
        let ci = carve_height_interval(&ctx, 0.1, &lambda).unwrap();
        assert!((carve_height_pivot(&ctx, ci.lo, &lambda).unwrap() - 0.95).abs() < 1e-8);
        assert!((carve_height_pivot(&ctx, ci.hi, &lambda).unwrap() - 0.05).abs() < 1e-8);
        // Tiny γ reproduces the hard TG interval.
        let ctx0 = CarveContext {
            gamma: 1e-6,
            ..ctx.clone()
        };
        let soft = carve_height_interval(&ctx0, 0.1, &lambda).unwrap();
        let hard = height_interval(&full, 7.0, 0.1, &lambda).unwrap();
        assert!((soft.lo - hard.lo).abs() < 1e-2 && (soft.hi - hard.hi).abs() < 1e-2);
        // No selection: the unselective normal interval.
        let ctx_free = CarveContext {
            u: f64::NEG_INFINITY,
            ..ctx
        };
        let ci = carve_height_interval(&ctx_free, 0.1, &lambda).unwrap();
        let c = 7.8 - 0.5 * trace_term(&h, &lambda).unwrap();
        let z = norm_isf(0.05);
        assert!((ci.lo - (c - z)).abs() < 1e-6 && (ci.hi - (c + z)).abs() < 1e-6);
    }

    #[test]
    fn carve_precision_must_be_pd() {
        let lambda = Mat::identity(2, 2);
        let h = Mat::identity(2, 2);
        let full = peak(vec![0.0, 0.0], 3.0, h.clone(), 0);
        let bad_inf = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let ctx = CarveContext::new(1.0, 2.0, full.clone(), full, bad_inf).unwrap();
        assert_eq!(
            carve_wald_pivot(&ctx, &[0.0, 0.0], &lambda),
            Err(Error::DegenerateCarvePrecision)
        );
    }

    #[test]
    fn split_pivot_values() {
        assert!((split_scale(1.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let lambda = Mat::identity(2, 2);
        // A huge Hessian makes the trace term vanish.
        let h = Mat::identity(2, 2) * 1e15;
        let tau = split_scale(1.0).unwrap();
        let p = peak(vec![0.0, 0.0], 2.0 + tau, h, 0);
        let v = split_height_pivot(&p, 2.0, 1.0, &lambda).unwrap();
        assert!((v - 0.158_655_253_931_457_05).abs() < 1e-12);
        let ci = split_height_interval(&p, 0.1, 1.0, &lambda).unwrap();
        assert!((split_height_pivot(&p, ci.lo, 1.0, &lambda).unwrap() - 0.05).abs() < 1e-12);
        assert!((split_height_pivot(&p, ci.hi, 1.0, &lambda).unwrap() - 0.95).abs() < 1e-12);
        let e = split_location_ellipsoid(&p, 0.1, 1.0, &lambda).unwrap();
        assert!(e.contains(&p.location));
    }
}
