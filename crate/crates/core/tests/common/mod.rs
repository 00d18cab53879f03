//! Deterministic invariant checks shared by the property suite and the
//! acceptance run. Each check returns the worst error it observed.
#![allow(dead_code)]

use peakinf::detect::{tg_survival, tg_threshold};
use peakinf::field::{randomize, Grid, Simulator};
use peakinf::infer::{
    height_interval, location_ellipsoid, tg_pivot, tg_pivot_with_trace, wald_precision,
};
use peakinf::linalg::{self, Mat};
use peakinf::model::{
    curvature_scales, derivative_bundle, kernel_eval, true_peaks, BoxDomain, Bump, KernelSpec,
    SignalSpec, DEFAULT_EPS_CONSTANT,
};
use peakinf::peaks::Peak;
use peakinf::randomized::{
    carve_height_interval, carve_height_pivot, carve_location_ellipsoid, carve_precision,
    soft_tg_cdf, CarveContext,
};
use peakinf::theory::TheoryContext;

pub const ELL: f64 = 0.15;

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |s, x| s.max(x.abs()))
}

pub fn peak(location: Vec<f64>, height: f64, neg_hessian: Mat) -> Peak {
    let d = location.len();
    Peak {
        location,
        height,
        grid_index: 0,
        neg_hessian,
        gradient: vec![0.0; d],
        degenerate: false,
    }
}

pub fn lambda2() -> Mat {
    Mat::identity(2, 2) / (ELL * ELL)
}

pub fn single_bump(mu0: f64, width: f64, center: [f64; 2]) -> SignalSpec {
    let domain = BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
    SignalSpec::new(vec![Bump::gaussian(center.to_vec(), mu0, width)], domain).unwrap()
}

/// Theory context of the (single) true peak of a Gaussian bump.
pub fn theory_context(mu0: f64, width: f64, u: f64) -> TheoryContext {
    let signal = single_bump(mu0, width, [0.0, 0.0]);
    let kernel = KernelSpec::squared_exponential(ELL, 2).unwrap();
    let bundle = derivative_bundle(&kernel).unwrap();
    let tp = true_peaks(&signal).unwrap();
    let scales = curvature_scales(&tp, &bundle, DEFAULT_EPS_CONSTANT).unwrap();
    TheoryContext::new(&signal, tp[0].clone(), bundle, scales, u).unwrap()
}

/// Worst relative error of `Ḡ = H̄Λ⁻¹(−∇²μ)`, of the sandwich ordering
/// `(−∇²μ)Λ⁻¹(−∇²μ) ⪯ Ḡ ⪯ H̄Λ⁻¹H̄` (as a negative-eigenvalue excess), and of
/// the shift `G_{y} − Ḡ = (y − ū)(−∇²μ)`.
pub fn theory_identity_error(mu0: f64, width: f64, u: f64) -> f64 {
    let ctx = theory_context(mu0, width, u);
    let scale = max_abs(&ctx.g_bar);
    let product = max_abs(&(&ctx.g_bar - ctx.goldilocks_product())) / scale;
    let lower = linalg::min_eigenvalue(&(&ctx.g_bar - ctx.marginal_sandwich()));
    let upper = linalg::min_eigenvalue(&(ctx.conditional_sandwich() - &ctx.g_bar));
    let order = (-lower.min(upper) / scale).max(0.0);
    let mut shift = 0.0_f64;
    for dy in [-1.0, 0.3, 2.0] {
        let y = ctx.u_bar + dy;
        let d = ctx.goldilocks_at(y) - &ctx.g_bar - ctx.neg_hessian() * (y - ctx.u_bar);
        shift = shift.max(max_abs(&d) / scale);
    }
    product.max(order).max(shift)
}

/// `max |Y − (Y^sel + γY^inf)/(1 + γ)|` on a small lattice.
pub fn reconstruction_error(gamma: f64, seed: u64) -> f64 {
    let kernel = KernelSpec::squared_exponential(ELL, 2).unwrap();
    let grid = Grid::cube(2, -0.5, 0.5, 21).unwrap();
    let factor = peakinf::field::covariance_factor(&kernel, &grid).unwrap();
    let domain = BoxDomain::new(vec![-0.5, -0.5], vec![0.5, 0.5]).unwrap();
    let signal = SignalSpec::new(vec![Bump::gaussian(vec![0.0, 0.0], 4.0, ELL)], domain).unwrap();
    let sim = Simulator::new(factor.clone(), signal).unwrap();
    let sample = sim.sample(seed).unwrap();
    let split = randomize(&sample, &factor, gamma, seed ^ 0x5eed).unwrap();
    sample
        .values
        .iter()
        .zip(split.sel_values.iter().zip(&split.inf_values))
        .map(|(y, (s, i))| (y - (s + gamma * i) / (1.0 + gamma)).abs() / (1.0 + y.abs()))
        .fold(0.0, f64::max)
}

/// `|P_{H0}(max > u_TG(α, v)) − α|`.
pub fn tg_threshold_error(alpha: f64, v: f64, d: usize) -> f64 {
    let u = tg_threshold(alpha, v, d).unwrap();
    (tg_survival(u, v, d).unwrap() - alpha).abs()
}

/// Pivot values at the endpoints of the standard and carve height intervals,
/// against their targets.
pub fn inversion_error(y: f64, u: f64, curvature: f64, alpha: f64) -> f64 {
    let lambda = lambda2();
    let h = Mat::from_row_slice(
        2,
        2,
        &[curvature, 0.1 * curvature, 0.1 * curvature, 1.2 * curvature],
    );
    let p = peak(vec![0.0, 0.0], y, h.clone());
    let ci = height_interval(&p, u, alpha, &lambda).unwrap();
    let std_err = (tg_pivot(y, ci.lo, u, &h, &lambda).unwrap() - 0.5 * alpha)
        .abs()
        .max((tg_pivot(y, ci.hi, u, &h, &lambda).unwrap() - (1.0 - 0.5 * alpha)).abs());
    let ctx = CarveContext::new(1.0, u, p.clone(), p, h).unwrap();
    let ci = carve_height_interval(&ctx, alpha, &lambda).unwrap();
    let carve_err = (carve_height_pivot(&ctx, ci.lo, &lambda).unwrap() - (1.0 - 0.5 * alpha))
        .abs()
        .max((carve_height_pivot(&ctx, ci.hi, &lambda).unwrap() - 0.5 * alpha).abs());
    std_err.max(carve_err)
}

/// Largest violation of monotonicity (nondecreasing in `y`, nonincreasing
/// in `μ`) and of the limits `F(−∞) = 0`, `F(∞) = 1`.
pub fn soft_tg_shape_error(mu: f64, u: f64, gamma: f64, trace: f64) -> f64 {
    let mut worst = 0.0_f64;
    let mut prev = 0.0;
    for i in 0..=80 {
        let y = mu - 8.0 + 0.25 * i as f64;
        let f = soft_tg_cdf(y, mu, u, gamma, trace).unwrap();
        worst = worst.max(prev - f);
        prev = f;
    }
    let y = mu + 0.5;
    let mut prev = 1.0;
    for i in 0..=40 {
        let m = mu - 4.0 + 0.2 * i as f64;
        let f = soft_tg_cdf(y, m, u, gamma, trace).unwrap();
        worst = worst.max(f - prev);
        prev = f;
    }
    let far = 40.0 + (u - mu).abs();
    worst
        .max(soft_tg_cdf(mu - far, mu, u, gamma, trace).unwrap())
        .max(1.0 - soft_tg_cdf(mu + far, mu, u, gamma, trace).unwrap())
}

/// Relative error of analytic signal derivatives (orders 1 to 3) and of the
/// kernel's `Λ` against central finite differences.
pub fn derivative_fd_error(mu0: f64, width: f64, t: [f64; 2]) -> f64 {
    let signal = single_bump(mu0, width, [0.1, -0.05]);
    let h = 1e-4 * width;
    let e = |k: usize| {
        let mut v = [0.0; 2];
        v[k] = h;
        v
    };
    let shifted = |t: [f64; 2], dv: [f64; 2], s: f64| [t[0] + s * dv[0], t[1] + s * dv[1]];
    let (g, hess, third) = signal.derivatives_at(&t);
    let mut worst = 0.0_f64;
    let rel = |a: f64, b: f64, scale: f64| (a - b).abs() / scale.max(1e-300);
    let gscale = mu0 / width;
    let hscale = mu0 / (width * width);
    let tscale = mu0 / (width * width * width);
    for i in 0..2 {
        let fd = (signal.value_at(&shifted(t, e(i), 1.0))
            - signal.value_at(&shifted(t, e(i), -1.0)))
            / (2.0 * h);
        worst = worst.max(rel(g[i], fd, gscale));
        let (gp, hp, _) = signal.derivatives_at(&shifted(t, e(i), 1.0));
        let (gm, hm, _) = signal.derivatives_at(&shifted(t, e(i), -1.0));
        for j in 0..2 {
            worst = worst.max(rel(hess[(j, i)], (gp[j] - gm[j]) / (2.0 * h), hscale));
            for k in 0..2 {
                worst = worst.max(rel(
                    third.get(j, k, i),
                    (hp[(j, k)] - hm[(j, k)]) / (2.0 * h),
                    tscale,
                ));
            }
        }
    }
    // Λ_ij = ∂_{s_i}∂_{t_j} K(s, t) at s = t.
    let kernel = KernelSpec::squared_exponential(ELL, 2).unwrap();
    let lambda = derivative_bundle(&kernel).unwrap().lambda;
    let hk = 1e-4 * ELL;
    for i in 0..2 {
        for j in 0..2 {
            let k = |si: f64, tj: f64| {
                let mut s = t;
                let mut u = t;
                s[i] += si;
                u[j] += tj;
                kernel_eval(&kernel, &s, &u).unwrap()
            };
            let fd = (k(hk, hk) - k(hk, -hk) - k(-hk, hk) + k(-hk, -hk)) / (4.0 * hk * hk);
            worst = worst.max(rel(lambda[(i, j)], fd, 1.0 / (ELL * ELL)));
        }
    }
    worst
}

/// Distance between the carve distribution function at a tiny `γ` and one
/// minus the hard truncated-Gaussian pivot.
pub fn small_gamma_error(mu: f64, u: f64, trace: f64) -> f64 {
    let mut worst = 0.0_f64;
    for dy in [0.1, 0.5, 1.0, 2.0] {
        let y = u + dy;
        let soft = soft_tg_cdf(y, mu, u, 1e-6, trace).unwrap();
        let hard = 1.0 - tg_pivot_with_trace(y, mu, u, trace).unwrap();
        worst = worst.max((soft - hard).abs());
    }
    worst
}

/// With `Ĥ^inf = Ĥ` the carve precision and ellipsoid must equal the
/// standard ones exactly.
pub fn equal_hessian_reduction_holds(h11: f64, h12: f64, h22: f64) -> bool {
    let lambda = lambda2();
    let h = Mat::from_row_slice(2, 2, &[h11, h12, h12, h22]);
    let p = peak(vec![0.01, -0.02], 9.0, h.clone());
    let ctx = CarveContext::new(1.0, 8.0, p.clone(), p.clone(), h.clone()).unwrap();
    carve_precision(&ctx, &lambda).unwrap() == wald_precision(&h, &lambda).unwrap()
        && carve_location_ellipsoid(&ctx, 0.1, &lambda).unwrap()
            == location_ellipsoid(&p, 0.1, &lambda).unwrap()
}
