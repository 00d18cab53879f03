//! Closed-form Kac-Rice approximations near a true peak: deterministic and
//! Goldilocks curvatures, the local intensity expansion, and the post-selection
//! densities and discovery probabilities derived from it. Used as analytic
//! oracles by the tests and the `theory` CLI command.

use crate::linalg::{self, Mat, Tensor3};
use crate::model::{
    norm, signal_eval, signal_grad, signal_hess, CurvatureScales, DerivativeBundle, SignalSpec,
    TruePeak,
};
use crate::randomized::soft_tg_density;
use crate::special::{ln_norm_sf, norm_pdf, norm_sf};
use crate::{Error, Result};

use std::f64::consts::PI;

/// Slack for points sitting exactly on the validity window boundary.
const WINDOW_SLACK: f64 = 1e-12;

/// `H_{t|y} = −∇²μ_t + K₂₁(t,t)(Λ⁻¹∇μ_t) + (y − μ_t)Λ`.
pub fn deterministic_hessian(
    signal: &SignalSpec,
    bundle: &DerivativeBundle,
    t: &[f64],
    y: f64,
) -> Result<Mat> {
    let neg = -signal_hess(signal, t)?;
    let grad = signal_grad(signal, t)?;
    let mu = signal_eval(signal, t)?;
    let li = linalg::spd_inverse(&bundle.lambda)?;
    let w = &li * nalgebra::DVector::from_column_slice(&grad);
    let middle = bundle.k21.contract1(w.as_slice());
    Ok(neg + middle + &bundle.lambda * (y - mu))
}

/// `G_{t|y} = (−∇²μ)Λ⁻¹(−∇²μ) + (y − μ_t)(−∇²μ)`.
pub fn goldilocks(
    signal: &SignalSpec,
    bundle: &DerivativeBundle,
    t: &[f64],
    y: f64,
) -> Result<Mat> {
    let neg = -signal_hess(signal, t)?;
    let mu = signal_eval(signal, t)?;
    let li = linalg::spd_inverse(&bundle.lambda)?;
    Ok(linalg::symmetrize(&(&neg * li * &neg)) + &neg * (y - mu))
}

/// Analytic context of one true peak under threshold `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryContext {
    pub true_peak: TruePeak,
    pub u: f64,
    /// `ū = max(u, μ_{t*})`.
    pub u_bar: f64,
    pub h_bar: Mat,
    pub g_bar: Mat,
    pub bundle: DerivativeBundle,
    pub scales: CurvatureScales,
    pub third_deriv: Tensor3,
}

/// Value of the approximate intensity, with a flag raised when the
/// first-order bracket went negative and was clamped to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityValue {
    pub value: f64,
    pub clamped: bool,
}

impl TheoryContext {
    pub fn new(
        signal: &SignalSpec,
        true_peak: TruePeak,
        bundle: DerivativeBundle,
        scales: CurvatureScales,
        u: f64,
    ) -> Result<Self> {
        let t = &true_peak.location;
        let mu = true_peak.height;
        let u_bar = u.max(mu);
        let h_bar = linalg::symmetrize(&deterministic_hessian(signal, &bundle, t, u_bar)?);
        let g_bar = goldilocks(signal, &bundle, t, u_bar)?;
        if !linalg::is_positive_definite(&h_bar) || !linalg::is_positive_definite(&g_bar) {
            return Err(Error::Model(
                "deterministic curvature at the true peak is not positive definite".into(),
            ));
        }
        let third_deriv = crate::model::signal_third(signal, t)?;
        Ok(Self {
            true_peak,
            u,
            u_bar,
            h_bar,
            g_bar,
            bundle,
            scales,
            third_deriv,
        })
    }

    pub fn dim(&self) -> usize {
        self.true_peak.location.len()
    }

    pub fn mu(&self) -> f64 {
        self.true_peak.height
    }

    /// `−∇²μ_{t*}`.
    pub fn neg_hessian(&self) -> &Mat {
        &self.true_peak.neg_hessian
    }

    /// `tr(H̄⁻¹Λ)`.
    pub fn trace_term(&self) -> f64 {
        linalg::trace_inv_prod(&self.h_bar, &self.bundle.lambda)
            .expect("H̄ is positive definite by construction")
    }

    /// `G_{t*|y} = Ḡ + (y − ū)(−∇²μ)`.
    pub fn goldilocks_at(&self, y: f64) -> Mat {
        &self.g_bar + self.neg_hessian() * (y - self.u_bar)
    }

    /// Marginal sandwich `(−∇²μ)Λ⁻¹(−∇²μ)`.
    pub fn marginal_sandwich(&self) -> Mat {
        let li = linalg::spd_inverse(&self.bundle.lambda).expect("Λ is positive definite");
        linalg::symmetrize(&(self.neg_hessian() * li * self.neg_hessian()))
    }

    /// Conditional sandwich `H̄Λ⁻¹H̄`.
    pub fn conditional_sandwich(&self) -> Mat {
        let li = linalg::spd_inverse(&self.bundle.lambda).expect("Λ is positive definite");
        linalg::symmetrize(&(&self.h_bar * li * &self.h_bar))
    }

    /// `H̄Λ⁻¹(−∇²μ)`, which equals `Ḡ` exactly.
    pub fn goldilocks_product(&self) -> Mat {
        let li = linalg::spd_inverse(&self.bundle.lambda).expect("Λ is positive definite");
        &self.h_bar * li * self.neg_hessian()
    }

    /// Errors unless `‖h‖ ≤ ε_n` and `|y − ū| ≤ Δ_n`.
    pub fn check_window(&self, h: &[f64], y: f64) -> Result<()> {
        if h.len() != self.dim() {
            return Err(Error::Parameter(format!(
                "offset has dimension {}, expected {}",
                h.len(),
                self.dim()
            )));
        }
        let eps = self.scales.eps_n * (1.0 + WINDOW_SLACK);
        let big = self.scales.big_delta_n * (1.0 + WINDOW_SLACK);
        if norm(h) > eps {
            return Err(Error::Window(format!(
                "|h| = {} exceeds eps_n = {}",
                norm(h),
                self.scales.eps_n
            )));
        }
        if (y - self.u_bar).abs() > big {
            return Err(Error::Window(format!(
                "|y - u_bar| = {} exceeds Delta_n = {}",
                (y - self.u_bar).abs(),
                self.scales.big_delta_n
            )));
        }
        Ok(())
    }

    /// The four first-order terms `(T₀₁, T₁₀, T₃₀, T₂₁)` at `(t* + h, y)`.
    pub fn first_order_terms(&self, h: &[f64], y: f64) -> (f64, f64, f64, f64) {
        let lambda = &self.bundle.lambda;
        let hess = -self.neg_hessian();
        let t01 = (y - self.u_bar) * self.trace_term();
        // Ḣ(h) = −∇³μ(h) for a stationary kernel.
        let h_dot = -self.third_deriv.contract1(h);
        let t10 = linalg::trace_inv_prod(&self.h_bar, &h_dot).unwrap_or(0.0);
        let li = linalg::spd_inverse(lambda).expect("Λ is positive definite");
        let hv = nalgebra::DVector::from_column_slice(h);
        let third_hh = self.third_deriv.contract2(h);
        let t30 = (hv.transpose() * &hess * li * third_hh)[(0, 0)];
        let t21 = 0.5 * (y - self.u_bar) * (hv.transpose() * &hess * &hv)[(0, 0)];
        (t01, t10, t30, t21)
    }
}

/// Approximate joint intensity `ρ̄(t* + h, y)` of peaks in location and height.
pub fn approx_intensity(ctx: &TheoryContext, h: &[f64], y: f64) -> Result<IntensityValue> {
    ctx.check_window(h, y)?;
    if y < ctx.u {
        return Ok(IntensityValue {
            value: 0.0,
            clamped: false,
        });
    }
    let d = ctx.dim() as f64;
    let (t01, t10, t30, t21) = ctx.first_order_terms(h, y);
    let bracket = 1.0 + t01 + t10 - 0.5 * t30 + t21;
    let clamped = bracket < 0.0;
    let det_h = ctx.h_bar.determinant();
    let det_l = ctx.bundle.lambda.determinant();
    let norm_const = ((2.0 * PI).powf(d + 1.0) * det_l).sqrt();
    let mu = ctx.mu();
    let quad = linalg::quad_form(&ctx.g_bar, h);
    let value =
        det_h * bracket.max(0.0) / norm_const * (-0.5 * (y - mu) * (y - mu) - 0.5 * quad).exp();
    Ok(IntensityValue { value, clamped })
}

/// Leading-order intensity with every first-order term dropped.
pub fn leading_intensity(ctx: &TheoryContext, h: &[f64], y: f64) -> Result<f64> {
    ctx.check_window(h, y)?;
    if y < ctx.u {
        return Ok(0.0);
    }
    let d = ctx.dim() as f64;
    let norm_const = ((2.0 * PI).powf(d + 1.0) * ctx.bundle.lambda.determinant()).sqrt();
    let mu = ctx.mu();
    Ok(ctx.h_bar.determinant() / norm_const
        * (-0.5 * (y - mu) * (y - mu)).exp()
        * (-0.5 * linalg::quad_form(&ctx.g_bar, h)).exp())
}

/// `Ē[N(S_{t*})] = √(det H̄/det(−∇²μ)) exp(−½(ū − μ)tr(H̄⁻¹Λ)) Ψ(u − μ − ½tr(H̄⁻¹Λ))`.
pub fn expected_true_discoveries(ctx: &TheoryContext) -> f64 {
    let tr = ctx.trace_term();
    let mu = ctx.mu();
    let ratio = (ctx.h_bar.determinant() / ctx.neg_hessian().determinant()).sqrt();
    ratio * (-0.5 * (ctx.u_bar - mu) * tr).exp() * norm_sf(ctx.u - mu - 0.5 * tr)
}

/// `Ψ(u − μ − ½tr(H̄⁻¹Λ))`.
pub fn power_approx(ctx: &TheoryContext) -> f64 {
    norm_sf(ctx.u - ctx.mu() - 0.5 * ctx.trace_term())
}

/// Mean-shifted truncated-normal density of the peak height on `(u, ∞)`.
pub fn approx_height_density(ctx: &TheoryContext, y: f64) -> Result<f64> {
    ctx.check_window(&vec![0.0; ctx.dim()], y)?;
    if y < ctx.u {
        return Ok(0.0);
    }
    let m = ctx.mu() + 0.5 * ctx.trace_term();
    Ok((norm_pdf(y - m).ln() - ln_norm_sf(ctx.u - m)).exp())
}

/// Distribution function of [`approx_height_density`].
pub fn approx_height_cdf(ctx: &TheoryContext, y: f64) -> f64 {
    if !(y > ctx.u) {
        return 0.0;
    }
    let m = ctx.mu() + 0.5 * ctx.trace_term();
    1.0 - (ln_norm_sf(y - m) - ln_norm_sf(ctx.u - m)).exp()
}

/// Conditional location density of `t̂ − t*` given `Ŷ = y`.
pub fn approx_location_density(ctx: &TheoryContext, h: &[f64], y: f64) -> Result<f64> {
    ctx.check_window(h, y)?;
    let (_, t10, t30, _) = ctx.first_order_terms(h, y);
    let g = ctx.goldilocks_at(y);
    let det = g.determinant();
    if !(det > 0.0) {
        return Err(Error::Numerical(
            "conditional Goldilocks precision is not positive definite".into(),
        ));
    }
    let d = ctx.dim() as i32;
    Ok(
        (1.0 + t10 - 0.5 * t30) * det.sqrt() / (2.0 * PI).powi(d).sqrt()
            * (-0.5 * linalg::quad_form(&g, h)).exp(),
    )
}

/// Palm density of a null peak height above `v`: a normal density with mean
/// `d/v` truncated to `(v, ∞)`.
pub fn null_palm_density(v: f64, d: usize, y: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::Parameter(format!(
            "pre-threshold v = {v} must be positive"
        )));
    }
    if !(y > v) {
        return Err(Error::Parameter(format!("height {y} must exceed v = {v}")));
    }
    let shift = d as f64 / v;
    Ok((norm_pdf(y - shift).ln() - ln_norm_sf(v - shift)).exp())
}

/// Expected number per unit volume of null peaks above `v`.
pub fn null_marginal_intensity(bundle: &DerivativeBundle, v: f64, d: usize) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::Parameter(format!(
            "pre-threshold v = {v} must be positive"
        )));
    }
    let df = d as f64;
    Ok(
        v.powi(d as i32) * bundle.lambda.determinant().sqrt() * (-df).exp()
            / (2.0 * PI).powf(0.5 * df)
            * norm_sf(v - df / v),
    )
}

/// Soft-truncated carve height density with the trace term of `ctx`, for a
/// selection threshold `u` on the raw `Y^sel` scale.
pub fn carve_height_density(ctx: &TheoryContext, gamma: f64, y: f64) -> Result<f64> {
    soft_tg_density(y, ctx.mu(), ctx.u, gamma, ctx.trace_term())
}

/// Gauss-Legendre nodes and weights on `[−1, 1]` (Golub-Welsch).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = Mat::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            (
                eig.eigenvalues[i],
                2.0 * eig.eigenvectors[(0, i)] * eig.eigenvectors[(0, i)],
            )
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Orders tried by the cubature routines before giving up.
const CUBATURE_ORDERS: [usize; 6] = [8, 16, 32, 64, 128, 256];

/// Fixed-order product rule over the ball: nested Gauss-Legendre on each
/// axis after the substitution `x = r sin θ`, which removes the square-root
/// behaviour of the inner limits at the rim.
fn ball_rule<F: Fn(&[f64]) -> f64>(
    f: &F,
    d: usize,
    radius: f64,
    rule: &(Vec<f64>, Vec<f64>),
) -> f64 {
    fn level<F: Fn(&[f64]) -> f64>(
        f: &F,
        p: &mut Vec<f64>,
        d: usize,
        r2: f64,
        rule: &(Vec<f64>, Vec<f64>),
    ) -> f64 {
        let half = r2.max(0.0).sqrt();
        if half == 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for (&x, &w) in rule.0.iter().zip(&rule.1) {
            let theta = 0.5 * PI * x;
            let c = half * theta.sin();
            let jac = 0.5 * PI * w * half * theta.cos();
            p.push(c);
            acc += jac
                * if p.len() == d {
                    f(p)
                } else {
                    level(f, p, d, r2 - c * c, rule)
                };
            p.pop();
        }
        acc
    }
    level(f, &mut Vec::with_capacity(d), d, radius * radius, rule)
}

/// Integral of `f` over the Euclidean ball `B(0, radius)` in `d` dimensions.
/// The product rule's order is doubled until two successive values agree to
/// `rel_tol`.
pub fn ball_cubature<F: Fn(&[f64]) -> f64>(
    f: F,
    d: usize,
    radius: f64,
    rel_tol: f64,
) -> Result<f64> {
    if d == 0 {
        return Err(Error::Parameter(
            "cubature dimension must be positive".into(),
        ));
    }
    converge(rel_tol, |n| ball_rule(&f, d, radius, &gauss_legendre(n)))
}

fn converge<G: FnMut(usize) -> f64>(rel_tol: f64, mut estimate: G) -> Result<f64> {
    let mut prev: Option<f64> = None;
    for &n in CUBATURE_ORDERS.iter() {
        let v = estimate(n);
        if !v.is_finite() {
            return Err(Error::Numerical("non-finite integrand in cubature".into()));
        }
        if let Some(p) = prev {
            if (v - p).abs() <= rel_tol * v.abs().max(f64::MIN_POSITIVE) {
                return Ok(v);
            }
        }
        prev = Some(v);
    }
    Err(Error::Numerical("cubature did not converge".into()))
}

/// `∫∫ ρ̄` over the validity window `B(0, ε_n) × (ū ± Δ_n)`, restricted to
/// `y ≥ u`.
pub fn integrate_intensity(ctx: &TheoryContext, rel_tol: f64) -> Result<f64> {
    let d = ctx.dim();
    let eps = ctx.scales.eps_n;
    let lo = (ctx.u_bar - ctx.scales.big_delta_n).max(ctx.u);
    let hi = ctx.u_bar + ctx.scales.big_delta_n;
    if !(hi > lo) {
        return Ok(0.0);
    }
    let f = |h: &[f64], y: f64| {
        approx_intensity(ctx, h, y)
            .map(|v| v.value)
            .unwrap_or(f64::NAN)
    };
    converge(rel_tol, |n| {
        let rule = gauss_legendre(n);
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        rule.0
            .iter()
            .zip(&rule.1)
            .map(|(&x, &w)| {
                let y = mid + half * x;
                half * w * ball_rule(&|h: &[f64]| f(h, y), d, eps, &rule)
            })
            .sum()
    })
}
