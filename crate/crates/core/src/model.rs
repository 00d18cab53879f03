//! Covariance kernels with their derivative tensors, and the deterministic
//! bump-superposition signal with its true peaks and curvature scales.

use serde::{Deserialize, Serialize};

use crate::linalg::{self, Mat, Tensor3};
use crate::{Error, Result};

/// Smallest admissible constant in the curvature-scale definitions.
pub const MIN_EPS_CONSTANT: f64 = 4.0 + 1e-6;
pub const DEFAULT_EPS_CONSTANT: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    #[default]
    SquaredExponential,
}

/// Stationary, isotropic, unit-variance correlation kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(default)]
    pub family: KernelFamily,
    pub length_scale: f64,
    pub dimension: usize,
}

impl KernelSpec {
    pub fn squared_exponential(length_scale: f64, dimension: usize) -> Result<Self> {
        let spec = Self {
            family: KernelFamily::SquaredExponential,
            length_scale,
            dimension,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(Error::Config(format!(
                "length_scale must be positive, got {}",
                self.length_scale
            )));
        }
        if self.dimension == 0 {
            return Err(Error::Config("kernel dimension must be at least 1".into()));
        }
        Ok(())
    }

    /// Correlation as a function of squared distance.
    pub fn correlation_sq(&self, r2: f64) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => {
                (-0.5 * r2 / (self.length_scale * self.length_scale)).exp()
            }
        }
    }

    /// Whether the kernel factorizes over coordinate axes, so that lattice
    /// covariance matrices are Kronecker products.
    pub fn is_separable(&self) -> bool {
        matches!(self.family, KernelFamily::SquaredExponential)
    }
}

/// `K(s, t)`.
pub fn kernel_eval(spec: &KernelSpec, s: &[f64], t: &[f64]) -> Result<f64> {
    spec.validate()?;
    if s.len() != spec.dimension || t.len() != spec.dimension {
        return Err(Error::Domain(
            "point dimension does not match the kernel".into(),
        ));
    }
    if s.iter().chain(t).any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite coordinate".into()));
    }
    let r2: f64 = s.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(spec.correlation_sq(r2))
}

/// Derivative tensors of the kernel at zero lag.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle {
    /// `Λ = Cov[∇ε_t]`.
    pub lambda: Mat,
    /// `K₂₁(t,t)`.
    pub k21: Tensor3,
    /// `Γ_t = K₂₁(t,t) Λ⁻¹`.
    pub gamma: Tensor3,
    /// Smallest eigenvalue of `Λ`.
    pub sigma1_sq: f64,
}

impl DerivativeBundle {
    pub fn dim(&self) -> usize {
        self.lambda.nrows()
    }
}

pub fn derivative_bundle(spec: &KernelSpec) -> Result<DerivativeBundle> {
    spec.validate()?;
    let d = spec.dimension;
    match spec.family {
        KernelFamily::SquaredExponential => {
            let s = 1.0 / (spec.length_scale * spec.length_scale);
            Ok(DerivativeBundle {
                lambda: Mat::identity(d, d) * s,
                k21: Tensor3::zeros(d),
                gamma: Tensor3::zeros(d),
                sigma1_sq: s,
            })
        }
    }
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::Config(
                "domain bounds must be nonempty and of equal length".into(),
            ));
        }
        if self
            .lower
            .iter()
            .zip(&self.upper)
            .any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite())
        {
            return Err(Error::Config(
                "domain needs finite lower < upper on every axis".into(),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, t: &[f64]) -> bool {
        t.len() == self.dim()
            && t.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (a, b))| *x >= *a && *x <= *b)
    }

    /// Distance from an interior point to the boundary.
    pub fn boundary_distance(&self, t: &[f64]) -> f64 {
        t.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (a, b))| (x - a).min(b - x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| b - a)
            .product()
    }
}

/// Compact-support taper applied to a bump, in units of its width. The bump
/// is untouched inside radius `inner·width` and vanishes beyond `outer·width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Taper {
    pub inner: f64,
    pub outer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub amplitude: f64,
    pub width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taper: Option<Taper>,
}

impl Bump {
    pub fn gaussian(center: Vec<f64>, amplitude: f64, width: f64) -> Self {
        Self {
            center,
            amplitude,
            width,
            taper: None,
        }
    }

    /// Radius outside which the bump is identically zero.
    pub fn support_radius(&self) -> f64 {
        self.taper.map_or(f64::INFINITY, |t| t.outer * self.width)
    }

    /// Radial profile `F(s)` of squared distance `s` and its first three
    /// derivatives in `s`.
    fn radial(&self, s: f64) -> [f64; 4] {
        let w2 = self.width * self.width;
        let g = self.amplitude * (-0.5 * s / w2).exp();
        let c = -0.5 / w2;
        let gd = [g, c * g, c * c * g, c * c * c * g];
        let Some(taper) = self.taper else {
            return gd;
        };
        let s1 = (taper.inner * self.width).powi(2);
        let s2 = (taper.outer * self.width).powi(2);
        if s >= s2 {
            return [0.0; 4];
        }
        if s <= s1 {
            return gd;
        }
        // b(s) = 1 − S(x), x = (s − s1)/(s2 − s1), S the quintic smoothstep.
        let l = s2 - s1;
        let x = (s - s1) / l;
        let sm = x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
        let s_1 = 30.0 * x * x * (1.0 - x) * (1.0 - x);
        let s_2 = 60.0 * x * (1.0 - 3.0 * x + 2.0 * x * x);
        let s_3 = 60.0 * (1.0 - 6.0 * x + 6.0 * x * x);
        let b = [1.0 - sm, -s_1 / l, -s_2 / (l * l), -s_3 / (l * l * l)];
        [
            gd[0] * b[0],
            gd[1] * b[0] + gd[0] * b[1],
            gd[2] * b[0] + 2.0 * gd[1] * b[1] + gd[0] * b[2],
            gd[3] * b[0] + 3.0 * gd[2] * b[1] + 3.0 * gd[1] * b[2] + gd[0] * b[3],
        ]
    }
}

/// Signal `μ(t) = Σ_j a_j φ_j(t)` on an axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub bumps: Vec<Bump>,
    pub domain: BoxDomain,
}

impl SignalSpec {
    /// Builds and validates a signal.
    pub fn new(bumps: Vec<Bump>, domain: BoxDomain) -> Result<Self> {
        let s = Self { bumps, domain };
        s.validate()?;
        Ok(s)
    }

    pub fn null(domain: BoxDomain) -> Result<Self> {
        Self::new(Vec::new(), domain)
    }

    /// Enforces the construction invariants: positive amplitudes and widths,
    /// centers at least `3·width` from the boundary and pairwise at least
    /// `6·max width` apart.
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        let d = self.domain.dim();
        let mut max_w: f64 = 0.0;
        for (i, b) in self.bumps.iter().enumerate() {
            if b.center.len() != d {
                return Err(Error::Config(format!(
                    "bump {i}: center has wrong dimension"
                )));
            }
            if !(b.amplitude > 0.0 && b.amplitude.is_finite()) {
                return Err(Error::Config(format!(
                    "bump {i}: amplitude must be positive"
                )));
            }
            if !(b.width > 0.0 && b.width.is_finite()) {
                return Err(Error::Config(format!("bump {i}: width must be positive")));
            }
            if let Some(t) = b.taper {
                if !(t.inner > 0.0 && t.outer > t.inner) {
                    return Err(Error::Config(format!(
                        "bump {i}: taper needs 0 < inner < outer"
                    )));
                }
            }
            if !self.domain.contains(&b.center)
                || self.domain.boundary_distance(&b.center) < 3.0 * b.width
            {
                return Err(Error::Config(format!(
                    "bump {i}: center closer than 3 widths to the boundary"
                )));
            }
            max_w = max_w.max(b.width);
        }
        let tol = 1e-12;
        for i in 0..self.bumps.len() {
            for j in 0..i {
                let dist = dist(&self.bumps[i].center, &self.bumps[j].center);
                if dist < 6.0 * max_w * (1.0 - tol) {
                    return Err(Error::Config(format!(
                        "bumps {j} and {i} closer than 6 widths"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn max_width(&self) -> f64 {
        self.bumps.iter().map(|b| b.width).fold(0.0, f64::max)
    }

    fn check(&self, t: &[f64]) -> Result<()> {
        if !self.domain.contains(t) {
            return Err(Error::Domain(format!(
                "point {t:?} outside the signal domain"
            )));
        }
        Ok(())
    }

    /// Value without the domain check.
    pub fn value_at(&self, t: &[f64]) -> f64 {
        self.bumps
            .iter()
            .map(|b| {
                let s = sq_dist(t, &b.center);
                if s >= b.support_radius().powi(2) {
                    0.0
                } else {
                    b.radial(s)[0]
                }
            })
            .sum()
    }

    /// Gradient, Hessian and third-derivative tensor without the domain check.
    pub fn derivatives_at(&self, t: &[f64]) -> (Vec<f64>, Mat, Tensor3) {
        let d = t.len();
        let mut g = vec![0.0; d];
        let mut h = Mat::zeros(d, d);
        let mut t3 = Tensor3::zeros(d);
        for b in &self.bumps {
            let diff: Vec<f64> = t.iter().zip(&b.center).map(|(x, c)| x - c).collect();
            let s: f64 = diff.iter().map(|x| x * x).sum();
            if s >= b.support_radius().powi(2) {
                continue;
            }
            let f = b.radial(s);
            for i in 0..d {
                g[i] += 2.0 * f[1] * diff[i];
                for j in 0..d {
                    let dij = if i == j { 1.0 } else { 0.0 };
                    h[(i, j)] += 4.0 * f[2] * diff[i] * diff[j] + 2.0 * f[1] * dij;
                    for k in 0..d {
                        let dik = if i == k { 1.0 } else { 0.0 };
                        let djk = if j == k { 1.0 } else { 0.0 };
                        let v = 8.0 * f[3] * diff[i] * diff[j] * diff[k]
                            + 4.0 * f[2] * (dij * diff[k] + dik * diff[j] + djk * diff[i]);
                        t3.set(i, j, k, t3.get(i, j, k) + v);
                    }
                }
            }
        }
        (g, h, t3)
    }

    /// Whether `μ ≡ 0` on the closed ball `B(t, r)`.
    pub fn vanishes_on_ball(&self, t: &[f64], r: f64) -> bool {
        self.bumps
            .iter()
            .all(|b| dist(t, &b.center) >= b.support_radius() + r)
    }
}

pub fn signal_eval(spec: &SignalSpec, t: &[f64]) -> Result<f64> {
    spec.check(t)?;
    Ok(spec.value_at(t))
}

pub fn signal_grad(spec: &SignalSpec, t: &[f64]) -> Result<Vec<f64>> {
    spec.check(t)?;
    Ok(spec.derivatives_at(t).0)
}

pub fn signal_hess(spec: &SignalSpec, t: &[f64]) -> Result<Mat> {
    spec.check(t)?;
    Ok(spec.derivatives_at(t).1)
}

pub fn signal_third(spec: &SignalSpec, t: &[f64]) -> Result<Tensor3> {
    spec.check(t)?;
    Ok(spec.derivatives_at(t).2)
}

/// A strict interior local maximum of the signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TruePeak {
    pub location: Vec<f64>,
    pub height: f64,
    /// `−∇²μ` at the peak.
    pub neg_hessian: Mat,
    /// `1/λ_min(−∇²μ)`.
    pub delta: f64,
}

/// One true peak per bump, located by Newton iteration on the analytic
/// gradient started from the bump center.
pub fn true_peaks(spec: &SignalSpec) -> Result<Vec<TruePeak>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.bumps.len());
    for (i, b) in spec.bumps.iter().enumerate() {
        let mut t = b.center.clone();
        for _ in 0..100 {
            let (g, h, _) = spec.derivatives_at(&t);
            let gnorm = norm(&g);
            if gnorm <= 1e-13 * (b.amplitude / (b.width * b.width)) * b.width {
                break;
            }
            let neg = -h;
            let chol = linalg::cholesky(&neg).ok_or_else(|| {
                Error::Model(format!(
                    "bump {i}: Hessian not negative definite during polish"
                ))
            })?;
            let step = chol.solve(&nalgebra::DVector::from_column_slice(&g));
            for (x, s) in t.iter_mut().zip(step.iter()) {
                *x += s;
            }
        }
        spec.check(&t)?;
        let (g, h, _) = spec.derivatives_at(&t);
        let neg = -h;
        if norm(&g) > 1e-8 || !linalg::is_positive_definite(&neg) {
            return Err(Error::Model(format!(
                "bump {i}: no strict local maximum near its center"
            )));
        }
        let delta = 1.0 / linalg::min_eigenvalue(&neg);
        out.push(TruePeak {
            height: spec.value_at(&t),
            location: t,
            neg_hessian: neg,
            delta,
        });
    }
    Ok(out)
}

/// Localization radius `ε_n` and height window `Δ_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureScales {
    pub delta_n: f64,
    pub lambda_n: f64,
    pub eps_n: f64,
    pub big_delta_n: f64,
    pub eps_constant: f64,
}

impl CurvatureScales {
    /// Scales for a given reciprocal curvature `δ_n`.
    pub fn from_delta(delta_n: f64, sigma1_sq: f64, eps_constant: f64) -> Result<Self> {
        if !(eps_constant >= MIN_EPS_CONSTANT) {
            return Err(Error::Parameter(format!(
                "eps_constant {eps_constant} must exceed 4"
            )));
        }
        if !(delta_n > 0.0) {
            return Err(Error::Parameter("delta_n must be positive".into()));
        }
        let lambda_n = 1.0 / delta_n;
        if !(lambda_n > 1.0) {
            return Err(Error::CurvatureTooLow(lambda_n));
        }
        let ln = lambda_n.ln();
        Ok(Self {
            delta_n,
            lambda_n,
            eps_n: delta_n * (eps_constant * sigma1_sq * ln).sqrt(),
            big_delta_n: (eps_constant * ln).sqrt(),
            eps_constant,
        })
    }
}

pub fn curvature_scales(
    peaks: &[TruePeak],
    bundle: &DerivativeBundle,
    eps_constant: f64,
) -> Result<CurvatureScales> {
    if peaks.is_empty() {
        return Err(Error::Parameter(
            "curvature scales need at least one true peak".into(),
        ));
    }
    let delta_n = peaks.iter().map(|p| p.delta).fold(0.0, f64::max);
    CurvatureScales::from_delta(delta_n, bundle.sigma1_sq, eps_constant)
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> BoxDomain {
        BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn kernel_values() {
        let k = KernelSpec::squared_exponential(0.15, 2).unwrap();
        assert_eq!(kernel_eval(&k, &[0.3, 0.1], &[0.3, 0.1]).unwrap(), 1.0);
        let v = kernel_eval(&k, &[0.0, 0.0], &[0.15, 0.0]).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        let v = kernel_eval(&k, &[0.0, 0.0], &[0.0, 0.30]).unwrap();
        assert!((v - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn kernel_rejects_bad_length_scale() {
        assert!(matches!(
            KernelSpec::squared_exponential(0.0, 2),
            Err(Error::Config(_))
        ));
        let k = KernelSpec {
            family: KernelFamily::SquaredExponential,
            length_scale: -1.0,
            dimension: 1,
        };
        assert!(matches!(
            kernel_eval(&k, &[0.0], &[1.0]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn bundle_matches_kernel_curvature() {
        let k = KernelSpec::squared_exponential(0.15, 2).unwrap();
        let b = derivative_bundle(&k).unwrap();
        // Λ_ij = −∂²K(s,t)/∂s_i∂s_j at zero lag, i.e. ∂_s∂_t K.
        let step = 1e-4;
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for (si, sj, w) in [
                    (1.0, 1.0, 1.0),
                    (1.0, -1.0, -1.0),
                    (-1.0, 1.0, -1.0),
                    (-1.0, -1.0, 1.0),
                ] {
                    let mut s = [0.0, 0.0];
                    let mut t = [0.0, 0.0];
                    s[i] += si * step;
                    t[j] += sj * step;
                    acc += w * kernel_eval(&k, &s, &t).unwrap();
                }
                let fd = acc / (4.0 * step * step);
                let exact = b.lambda[(i, j)];
                assert!(
                    (fd - exact).abs() <= 1e-6 * 44.444,
                    "({i},{j}) fd {fd} exact {exact}"
                );
            }
        }
        assert!((b.sigma1_sq - 1.0 / 0.0225).abs() < 1e-12);
        assert!(b.k21.is_zero() && b.gamma.is_zero());
        let one = derivative_bundle(&KernelSpec::squared_exponential(1.0, 1).unwrap()).unwrap();
        assert_eq!(one.lambda[(0, 0)], 1.0);
    }

    #[test]
    fn single_bump_derivatives() {
        let s = SignalSpec::new(
            vec![Bump::gaussian(vec![0.0, 0.0], 5.0, 0.15)],
            unit_square(),
        )
        .unwrap();
        assert!((signal_eval(&s, &[0.0, 0.0]).unwrap() - 5.0).abs() < 1e-15);
        let g = signal_grad(&s, &[0.0, 0.0]).unwrap();
        assert!(norm(&g) < 1e-15);
        let h = signal_hess(&s, &[0.0, 0.0]).unwrap();
        assert!((h[(0, 0)] + 5.0 / 0.0225).abs() < 1e-9);
        assert!(h[(0, 1)].abs() < 1e-12);
        let v = signal_eval(&s, &[0.45, 0.0]).unwrap();
        assert!((v - 5.0 * (-4.5f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn empty_signal_is_zero() {
        let s = SignalSpec::null(unit_square()).unwrap();
        assert_eq!(signal_eval(&s, &[0.2, -0.3]).unwrap(), 0.0);
        assert!(true_peaks(&s).unwrap().is_empty());
        assert!(s.vanishes_on_ball(&[0.0, 0.0], 10.0));
    }

    #[test]
    fn outside_domain_is_an_error() {
        let s = SignalSpec::null(unit_square()).unwrap();
        assert!(matches!(
            signal_eval(&s, &[2.0, 0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn construction_invariants_enforced() {
        let near_edge = SignalSpec::new(
            vec![Bump::gaussian(vec![0.7, 0.0], 1.0, 0.15)],
            unit_square(),
        );
        assert!(near_edge.is_err());
        let crowded = SignalSpec::new(
            vec![
                Bump::gaussian(vec![0.0, 0.0], 1.0, 0.1),
                Bump::gaussian(vec![0.5, 0.0], 1.0, 0.1),
            ],
            unit_square(),
        );
        assert!(crowded.is_err());
        let negative = SignalSpec::new(
            vec![Bump::gaussian(vec![0.0, 0.0], -1.0, 0.1)],
            unit_square(),
        );
        assert!(negative.is_err());
    }

    #[test]
    fn single_bump_true_peak() {
        let s = SignalSpec::new(
            vec![Bump::gaussian(vec![0.0, 0.0], 5.0, 0.15)],
            unit_square(),
        )
        .unwrap();
        let p = true_peaks(&s).unwrap();
        assert_eq!(p.len(), 1);
        assert!(norm(&p[0].location) < 1e-10);
        assert!((p[0].height - 5.0).abs() < 1e-12);
        assert!((p[0].delta - 0.0045).abs() < 1e-12);
    }

    #[test]
    fn tapered_bump_is_compact_and_smooth() {
        let b = Bump {
            center: vec![0.0, 0.0],
            amplitude: 2.0,
            width: 0.1,
            taper: Some(Taper {
                inner: 2.5,
                outer: 3.5,
            }),
        };
        let s = SignalSpec::new(vec![b], unit_square()).unwrap();
        assert_eq!(signal_eval(&s, &[0.36, 0.0]).unwrap(), 0.0);
        assert!(s.vanishes_on_ball(&[0.8, 0.0], 0.45));
        assert!(!s.vanishes_on_ball(&[0.8, 0.0], 0.46));
        // Continuity of value and slope across both taper radii.
        for r in [0.25, 0.35] {
            let a = signal_eval(&s, &[r - 1e-9, 0.0]).unwrap();
            let c = signal_eval(&s, &[r + 1e-9, 0.0]).unwrap();
            assert!((a - c).abs() < 1e-8);
            let ga = signal_grad(&s, &[r - 1e-9, 0.0]).unwrap()[0];
            let gc = signal_grad(&s, &[r + 1e-9, 0.0]).unwrap()[0];
            assert!((ga - gc).abs() < 1e-6);
        }
    }

    #[test]
    fn curvature_scale_values() {
        let c = CurvatureScales::from_delta(0.0045, 1.0 / 0.0225, 6.0).unwrap();
        assert!((c.eps_n - 0.170_821_136_174_396_3).abs() < 1e-14);
        assert!((c.big_delta_n - 5.694_037_872_479_878).abs() < 1e-13);
        let e = std::f64::consts::E;
        let c = CurvatureScales::from_delta(1.0 / e, 1.0, 6.0).unwrap();
        assert!((c.eps_n - 6f64.sqrt() / e).abs() < 1e-14);
        assert!((c.big_delta_n - 6f64.sqrt()).abs() < 1e-14);
        assert!(CurvatureScales::from_delta(0.01, 1.0, 4.5).is_ok());
        assert!(CurvatureScales::from_delta(0.01, 1.0, 4.0).is_err());
        assert!(matches!(
            CurvatureScales::from_delta(2.0, 1.0, 6.0),
            Err(Error::CurvatureTooLow(_))
        ));
    }
}
