//! Normal and chi-squared special functions, scalar root finding and adaptive
//! quadrature.
//!
//! The normal survival function `Ψ` is evaluated through the complementary
//! error function, switching to a Mills-ratio continued fraction in the far
//! upper tail so that log-survivals stay accurate long after `Ψ` underflows.

use statrs::function::{erf, gamma};

use crate::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Above this argument the continued fraction takes over from `erfc`.
const TAIL_SWITCH: f64 = 8.0;

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Upper-tail probability `Ψ(x) = P(Z > x)`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    norm_sf(-x)
}

/// Mills ratio `Ψ(x)/φ(x)` for large positive `x` via backward evaluation of
/// the Laplace continued fraction.
fn mills_ratio_tail(x: f64) -> f64 {
    let mut t = x;
    for k in (1..=120).rev() {
        t = x + k as f64 / t;
    }
    1.0 / t
}

/// Natural log of `Ψ(x)`, accurate in both tails.
pub fn ln_norm_sf(x: f64) -> f64 {
    if x > TAIL_SWITCH {
        -0.5 * x * x - LN_SQRT_2PI + mills_ratio_tail(x).ln()
    } else if x < -1.0 {
        (-norm_sf(-x)).ln_1p()
    } else {
        norm_sf(x).ln()
    }
}

/// `ln Ψ(a) − ln Ψ(b)`, stable when both arguments are far in the upper tail.
pub fn ln_norm_sf_diff(a: f64, b: f64) -> f64 {
    if a > TAIL_SWITCH && b > TAIL_SWITCH {
        -0.5 * (a - b) * (a + b) + (mills_ratio_tail(a) / mills_ratio_tail(b)).ln()
    } else {
        ln_norm_sf(a) - ln_norm_sf(b)
    }
}

/// Survival ratio `Ψ(a)/Ψ(b)` computed in log space.
pub fn norm_sf_ratio(a: f64, b: f64) -> f64 {
    ln_norm_sf_diff(a, b).exp()
}

/// Normal hazard `φ(x)/Ψ(x)`.
pub fn norm_hazard(x: f64) -> f64 {
    if x > TAIL_SWITCH {
        1.0 / mills_ratio_tail(x)
    } else {
        norm_pdf(x) / norm_sf(x)
    }
}

/// Upper-tail quantile `Q(p)`, the solution of `Ψ(x) = p`.
///
/// Seeded by the inverse complementary error function and polished by Newton
/// steps on `ln Ψ`, which keeps full relative accuracy for tiny `p`.
pub fn norm_isf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::INFINITY;
    }
    if p >= 1.0 {
        return f64::NEG_INFINITY;
    }
    let mut x = std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * p);
    if !x.is_finite() {
        // erfc_inv underflows for p below ~1e-300; start from the asymptote.
        let l = -2.0 * p.ln();
        x = (l - (l * std::f64::consts::PI).ln()).sqrt();
    }
    let lp = p.ln();
    for _ in 0..4 {
        let step = (ln_norm_sf(x) - lp) / norm_hazard(x);
        x += step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Lower-tail normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    -norm_isf(p)
}

/// Chi-squared distribution function with `d` degrees of freedom.
pub fn chi2_cdf(d: usize, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma::gamma_lr(0.5 * d as f64, 0.5 * x)
    }
}

/// Chi-squared density with `d` degrees of freedom.
pub fn chi2_pdf(d: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = 0.5 * d as f64;
    ((k - 1.0) * x.ln() - 0.5 * x - k * std::f64::consts::LN_2 - gamma::ln_gamma(k)).exp()
}

/// Chi-squared quantile: inverse of the regularized lower incomplete gamma
/// function, with `|chi2_cdf(d, q) − p| ≤ 1e-10`.
pub fn chi2_quantile(d: usize, p: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::Parameter(
            "chi-squared degrees of freedom must be positive".into(),
        ));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Parameter(format!("probability {p} outside (0,1)")));
    }
    if d == 2 {
        return Ok(-2.0 * (-p).ln_1p());
    }
    let k = d as f64;
    // Wilson-Hilferty starting point.
    let z = norm_quantile(p);
    let c = 2.0 / (9.0 * k);
    let mut x = (k * (1.0 - c + z * c.sqrt()).powi(3)).max(1e-8);
    let (mut lo, mut hi) = (0.0_f64, k.max(1.0));
    while chi2_cdf(d, hi) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let f = chi2_cdf(d, x) - p;
        if f.abs() <= 1e-14 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let dens = chi2_pdf(d, x);
        let mut next = if dens > 0.0 { x - f / dens } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.max(1e-300) {
            return Ok(next);
        }
        x = next;
    }
    let f = chi2_cdf(d, x) - p;
    if f.abs() <= 1e-10 {
        Ok(x)
    } else {
        Err(Error::Numerical(format!(
            "chi-squared quantile did not converge (d={d}, p={p})"
        )))
    }
}

/// Bisection on a bracket `[lo, hi]` with a sign change, to width `tol`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return Err(Error::Numerical(format!("no sign change on [{lo}, {hi}]")));
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= tol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm.is_nan() {
            return Err(Error::Numerical(format!("objective is NaN at {mid}")));
        }
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Brent's method on a bracket `[lo, hi]` with a sign change: inverse
/// quadratic interpolation guarded by bisection, to width `tol`.
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() && fa != 0.0 && fb != 0.0 {
        return Err(Error::Numerical(format!("no sign change on [{lo}, {hi}]")));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    let (mut c, mut fc) = (a, fa);
    let (mut d, mut e) = (b - a, b - a);
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * m * s, 1.0 - s)
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                (
                    s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0)),
                    (qa - 1.0) * (r - 1.0) * (s - 1.0),
                )
            };
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(m) };
        fb = f(b);
        if fb.is_nan() {
            return Err(Error::Numerical(format!("objective is NaN at {b}")));
        }
    }
    Err(Error::Numerical("root finder did not converge".into()))
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `tol`.
///
/// The interval is first cut into a few panels so that narrow features near
/// the middle of the range cannot be missed by the initial five-point rule.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    const PANELS: usize = 8;
    const MAX_DEPTH: u32 = 48;
    if a == b {
        return Ok(0.0);
    }
    let width = (b - a) / PANELS as f64;
    let mut total = 0.0;
    for i in 0..PANELS {
        let x0 = a + width * i as f64;
        let x1 = if i + 1 == PANELS { b } else { x0 + width };
        let xm = 0.5 * (x0 + x1);
        let (f0, fm, f1) = (f(x0), f(xm), f(x1));
        let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        total += simpson_step(
            &f,
            x0,
            x1,
            f0,
            fm,
            f1,
            whole,
            tol / PANELS as f64,
            MAX_DEPTH,
        )?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(Error::Numerical(
            "non-finite integrand in quadrature".into(),
        ));
    }
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Numerical(
            "adaptive quadrature did not converge".into(),
        ));
    }
    Ok(
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    // High-precision reference values (40 significant digits, rounded).
    const SF_TABLE: [(f64, f64, f64); 11] = [
        (
            -8.0,
            0.999_999_999_999_999_377_903_942_6,
            -6.220_960_574_271_786e-16,
        ),
        (
            -3.0,
            0.998_650_101_968_369_905_473_348_2,
            -0.001_350_809_964_748_193_798_841_11,
        ),
        (
            -0.5,
            0.691_462_461_274_013_103_637_704_6,
            -0.368_946_415_288_656_393_065_615_6,
        ),
        (0.0, 0.5, -std::f64::consts::LN_2),
        (
            0.5,
            0.308_537_538_725_986_896_362_295_4,
            -1.175_911_761_593_618_608_879_729,
        ),
        (
            1.0,
            0.158_655_253_931_457_051_4,
            -1.841_021_645_009_263_505_770_783,
        ),
        (
            2.5,
            0.006_209_665_325_776_135_166_978_105,
            -5.081_648_277_278_690_498_380_462,
        ),
        (
            5.0,
            2.866_515_718_791_939_116_737_523e-7,
            -15.064_998_393_988_725_736_083_7,
        ),
        (
            8.0,
            6.220_960_574_271_784_123_515_995e-16,
            -35.013_437_159_914_549_895_504_13,
        ),
        (
            12.0,
            1.776_482_112_077_678_997_696_171e-33,
            -75.410_673_001_568_795_938_839_68,
        ),
        (
            20.0,
            2.753_624_118_606_233_695_075_623e-89,
            -203.917_155_371_097_263_936_804_5,
        ),
    ];

    #[test]
    fn survival_matches_reference_table() {
        for &(x, sf, lsf) in SF_TABLE.iter() {
            assert!(rel(norm_sf(x), sf) < 1e-13, "sf({x})");
            assert!(
                rel(ln_norm_sf(x), lsf) < 1e-12,
                "ln sf({x}) = {} vs {lsf}",
                ln_norm_sf(x)
            );
        }
    }

    #[test]
    fn log_survival_beyond_underflow() {
        assert!(rel(ln_norm_sf(37.0), -689.030_585_576_890_593_600_872_2) < 1e-14);
        assert!(rel(ln_norm_sf(40.0), -804.608_442_013_753_788_166_606_8) < 1e-14);
        assert!(ln_norm_sf(1e6).is_finite());
    }

    #[test]
    fn tail_switch_is_continuous() {
        let below = ln_norm_sf(TAIL_SWITCH - 1e-12);
        let above = ln_norm_sf(TAIL_SWITCH + 1e-12);
        assert!((below - above).abs() < 1e-10);
    }

    #[test]
    fn sf_ratio_in_deep_tail() {
        // Ψ(a)/Ψ(b) with both arguments near 1e6 stays finite and sensible.
        assert!((ln_norm_sf_diff(1e6 + 1.0, 1e6) / -1.000_000_5e6 - 1.0).abs() < 1e-9);
        assert_eq!(norm_sf_ratio(1e6 + 1.0, 1e6), 0.0);
        let r = norm_sf_ratio(1e6 + 1e-7, 1e6);
        assert!((r - (-0.1_f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn quantile_round_trip() {
        for &p in &[
            1e-300, 1e-30, 1e-10, 0.001, 0.05, 0.3, 0.5, 0.7, 0.95, 0.999_999,
        ] {
            let x = norm_isf(p);
            assert!(rel(norm_sf(x), p) < 1e-12, "p = {p}");
        }
        assert!((norm_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-13);
    }

    #[test]
    fn chi2_quantiles_match_reference() {
        let cases = [
            (2, 0.95, 5.991_464_547_107_982),
            (1, 0.95, 3.841_458_820_694_126),
            (2, 0.8, 3.218_875_824_868_201),
            (2, 0.9, 4.605_170_185_988_091),
            (2, 0.2, 0.446_287_102_628_419_5),
            (3, 0.9, 6.251_388_631_170_323),
            (2, 0.5, 2.0 * std::f64::consts::LN_2),
        ];
        for &(d, p, q) in cases.iter() {
            let got = chi2_quantile(d, p).unwrap();
            assert!(rel(got, q) < 1e-10, "d={d} p={p}: {got} vs {q}");
            assert!((chi2_cdf(d, got) - p).abs() < 1e-10);
        }
    }

    #[test]
    fn chi2_quantile_rejects_bad_probability() {
        assert!(chi2_quantile(2, 0.0).is_err());
        assert!(chi2_quantile(2, 1.0).is_err());
        assert!(chi2_quantile(0, 0.5).is_err());
    }

    #[test]
    fn chi2_round_trip_many_dims() {
        for d in 1..=6 {
            for &p in &[1e-6, 0.01, 0.2, 0.5, 0.9, 0.999] {
                let q = chi2_quantile(d, p).unwrap();
                assert!((chi2_cdf(d, q) - p).abs() <= 1e-10, "d={d} p={p}");
            }
        }
    }

    #[test]
    fn simpson_integrates_gaussian() {
        let v = adaptive_simpson(norm_pdf, -12.0, 12.0, 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-11);
        let v = adaptive_simpson(|x| x * x, 0.0, 3.0, 1e-12).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
    }

    #[test]
    fn bisect_finds_root() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-13);
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-9).is_err());
    }

    #[test]
    fn brent_matches_bisection() {
        let f = |x: f64| x.powi(3) - 2.0 * x - 5.0;
        let a = brent(f, 2.0, 3.0, 1e-14).unwrap();
        let b = bisect(f, 2.0, 3.0, 1e-14).unwrap();
        assert!((a - 2.094_551_481_542_327).abs() < 1e-13);
        assert!((a - b).abs() < 1e-13);
        assert!(brent(f, 3.0, 4.0, 1e-12).is_err());
    }
}
