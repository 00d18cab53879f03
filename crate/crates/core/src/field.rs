//! Lattice simulation of `Y = μ + ε` and the randomized split into
//! `(Y^sel, Y^inf)`.
//!
//! Covariance factors are computed once per kernel and grid and shared by all
//! replicates. For separable kernels the lattice covariance is a Kronecker
//! product of one-dimensional correlation matrices, so the default factor
//! stores one small Cholesky factor per axis; a dense factor of the full
//! matrix is available for small grids and cross-checks.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use nalgebra::Cholesky;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::Mat;
use crate::model::{KernelSpec, SignalSpec};
use crate::{Error, Result};

pub const DEFAULT_POINT_CAP: usize = 4096;
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;

/// Stream identifiers for seed derivation.
pub const STREAM_NOISE: u64 = 1;
pub const STREAM_OMEGA: u64 = 2;

/// Regular lattice on an axis-aligned box, row-major with the last axis
/// varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    counts: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        let d = lower.len();
        if d == 0 || upper.len() != d || counts.len() != d {
            return Err(Error::Config(
                "grid bounds and counts must share a nonzero dimension".into(),
            ));
        }
        for k in 0..d {
            if !(lower[k] < upper[k]) || !lower[k].is_finite() || !upper[k].is_finite() {
                return Err(Error::Config(format!(
                    "grid axis {k}: need finite lower < upper"
                )));
            }
            if counts[k] == 0 {
                return Err(Error::Config(format!(
                    "grid axis {k}: need at least one point"
                )));
            }
        }
        let spacing = (0..d)
            .map(|k| {
                if counts[k] == 1 {
                    0.0
                } else {
                    (upper[k] - lower[k]) / (counts[k] - 1) as f64
                }
            })
            .collect();
        let mut strides = vec![1; d];
        for k in (0..d.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * counts[k + 1];
        }
        Ok(Self {
            lower,
            upper,
            counts,
            spacing,
            strides,
        })
    }

    /// Square lattice with `n` points per axis on `[lo, hi]^d`.
    pub fn cube(d: usize, lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(vec![lo; d], vec![hi; d], vec![n; d])
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.counts[axis] && i > 0 {
            self.upper[axis]
        } else {
            self.lower[axis] + self.spacing[axis] * i as f64
        }
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for k in 0..self.dim() {
            out[k] = flat / self.strides[k];
            flat %= self.strides[k];
        }
        out
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.coord(k, i))
            .collect()
    }

    /// Accuracy guard: every spacing must be at most `length_scale / ratio`.
    pub fn check_spacing(&self, length_scale: f64, ratio: f64) -> Result<()> {
        let limit = length_scale / ratio;
        for (k, h) in self.spacing.iter().enumerate() {
            if *h > limit * (1.0 + 1e-12) {
                return Err(Error::Config(format!(
                    "grid spacing {h:.5} on axis {k} exceeds length_scale/{ratio} = {limit:.5}"
                )));
            }
        }
        Ok(())
    }

    fn identity_hash(&self, kernel: &KernelSpec) -> u64 {
        let mut h = DefaultHasher::new();
        for x in self.lower.iter().chain(&self.upper) {
            x.to_bits().hash(&mut h);
        }
        self.counts.hash(&mut h);
        kernel.length_scale.to_bits().hash(&mut h);
        kernel.dimension.hash(&mut h);
        h.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FactorMethod {
    /// Per-axis factors of a separable kernel.
    #[default]
    Kronecker,
    /// Cholesky factor of the full lattice covariance matrix.
    Dense,
}

#[derive(Debug, Clone)]
enum FactorData {
    Dense(Mat),
    Kronecker(Vec<Mat>),
}

/// Lower-triangular factor `L` with `L Lᵀ ≈ C + jitter·I`.
#[derive(Debug, Clone)]
pub struct CovarianceFactor {
    grid: Arc<Grid>,
    grid_hash: u64,
    jitter: f64,
    data: FactorData,
}

fn jittered_cholesky(mut c: Mat) -> Result<(Mat, f64)> {
    let n = c.nrows();
    let mut jitter = JITTER_START;
    for i in 0..n {
        c[(i, i)] += jitter;
    }
    loop {
        if let Some(ch) = Cholesky::new(c.clone()) {
            return Ok((ch.l(), jitter));
        }
        if jitter >= JITTER_MAX {
            return Err(Error::IllConditionedKernel(jitter));
        }
        let next = jitter * 10.0;
        for i in 0..n {
            c[(i, i)] += next - jitter;
        }
        jitter = next;
    }
}

/// Dense factor of the full lattice covariance, subject to the default point
/// cap.
pub fn covariance_factor(kernel: &KernelSpec, grid: &Grid) -> Result<CovarianceFactor> {
    covariance_factor_with(kernel, grid, FactorMethod::Dense, DEFAULT_POINT_CAP)
}

pub fn covariance_factor_with(
    kernel: &KernelSpec,
    grid: &Grid,
    method: FactorMethod,
    point_cap: usize,
) -> Result<CovarianceFactor> {
    kernel.validate()?;
    if kernel.dimension != grid.dim() {
        return Err(Error::Config("kernel and grid dimensions differ".into()));
    }
    let grid_hash = grid.identity_hash(kernel);
    let (data, jitter) = match method {
        FactorMethod::Dense => {
            let n = grid.len();
            if n > point_cap {
                return Err(Error::Config(format!(
                    "grid has {n} points, above the dense cap {point_cap}"
                )));
            }
            let pts: Vec<Vec<f64>> = (0..n).map(|i| grid.point(i)).collect();
            let c = Mat::from_fn(n, n, |i, j| {
                kernel.correlation_sq(crate::model::sq_dist(&pts[i], &pts[j]))
            });
            let (l, jit) = jittered_cholesky(c)?;
            (FactorData::Dense(l), jit)
        }
        FactorMethod::Kronecker => {
            if !kernel.is_separable() {
                return Err(Error::Config(
                    "Kronecker factor requires a separable kernel".into(),
                ));
            }
            let mut factors = Vec::with_capacity(grid.dim());
            let mut jitter: f64 = 0.0;
            for k in 0..grid.dim() {
                let n = grid.counts()[k];
                let c = Mat::from_fn(n, n, |i, j| {
                    let r = grid.coord(k, i) - grid.coord(k, j);
                    kernel.correlation_sq(r * r)
                });
                let (l, jit) = jittered_cholesky(c)?;
                jitter = jitter.max(jit);
                factors.push(l);
            }
            (FactorData::Kronecker(factors), jitter)
        }
    };
    Ok(CovarianceFactor {
        grid: Arc::new(grid.clone()),
        grid_hash,
        jitter,
        data,
    })
}

impl CovarianceFactor {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn shared_grid(&self) -> Arc<Grid> {
        Arc::clone(&self.grid)
    }

    /// Jitter added to the diagonal (per axis for Kronecker factors).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn method(&self) -> FactorMethod {
        match self.data {
            FactorData::Dense(_) => FactorMethod::Dense,
            FactorData::Kronecker(_) => FactorMethod::Kronecker,
        }
    }

    pub fn matches(&self, kernel: &KernelSpec, grid: &Grid) -> bool {
        self.grid_hash == grid.identity_hash(kernel) && *self.grid == *grid
    }

    /// Full lower-triangular factor (Kronecker factors are expanded).
    pub fn lower_factor(&self) -> Mat {
        match &self.data {
            FactorData::Dense(l) => l.clone(),
            FactorData::Kronecker(fs) => {
                let mut acc = Mat::from_element(1, 1, 1.0);
                for f in fs {
                    acc = acc.kronecker(f);
                }
                acc
            }
        }
    }

    /// Replaces `z` by `L z`.
    pub fn correlate(&self, z: &mut [f64]) {
        match &self.data {
            FactorData::Dense(l) => {
                let n = z.len();
                for i in (0..n).rev() {
                    let mut s = 0.0;
                    for j in 0..=i {
                        s += l[(i, j)] * z[j];
                    }
                    z[i] = s;
                }
            }
            FactorData::Kronecker(fs) => {
                let counts = self.grid.counts();
                let strides = self.grid.strides();
                let total = z.len();
                let mut fiber = Vec::new();
                for (k, l) in fs.iter().enumerate() {
                    let n = counts[k];
                    let stride = strides[k];
                    let block = stride * n;
                    fiber.resize(n, 0.0);
                    for outer in (0..total).step_by(block) {
                        for inner in 0..stride {
                            let base = outer + inner;
                            for i in 0..n {
                                fiber[i] = z[base + i * stride];
                            }
                            for i in (0..n).rev() {
                                let mut s = 0.0;
                                for j in 0..=i {
                                    s += l[(i, j)] * fiber[j];
                                }
                                z[base + i * stride] = s;
                            }
                        }
                    }
                }
            }
        }
    }

    /// A correlated Gaussian draw `L z` with `z` from the given generator.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut z: Vec<f64> = (0..self.grid.len())
            .map(|_| StandardNormal.sample(rng))
            .collect();
        self.correlate(&mut z);
        z
    }
}

/// SplitMix64 finalizer.
fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for replicate `index` on stream `stream` under `base`. Replicates
/// are keyed by index alone, so parallel and serial runs draw the same
/// numbers.
pub fn stream_seed(base: u64, index: u64, stream: u64) -> u64 {
    mix64(mix64(mix64(base) ^ index) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Signal values on every lattice point.
pub fn signal_on_grid(signal: &SignalSpec, grid: &Grid) -> Result<Vec<f64>> {
    if signal.dim() != grid.dim() {
        return Err(Error::Config("signal and grid dimensions differ".into()));
    }
    (0..grid.len())
        .map(|i| {
            let p = grid.point(i);
            if !signal.domain.contains(&p) {
                return Err(Error::Domain(format!(
                    "grid point {p:?} outside the signal domain"
                )));
            }
            Ok(signal.value_at(&p))
        })
        .collect()
}

/// One lattice realization of `Y`.
#[derive(Debug, Clone)]
pub struct FieldSample {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
    pub mean: Arc<Vec<f64>>,
    pub noise_seed: u64,
    pub signal: Arc<SignalSpec>,
}

/// `Y = μ + L z` with `z` drawn from a generator keyed by `seed`.
pub fn sample_field(
    factor: &CovarianceFactor,
    signal: &SignalSpec,
    seed: u64,
) -> Result<FieldSample> {
    Simulator::new(factor.clone(), signal.clone())?.sample(seed)
}

/// Factor and signal bundled for repeated sampling.
#[derive(Debug, Clone)]
pub struct Simulator {
    factor: Arc<CovarianceFactor>,
    signal: Arc<SignalSpec>,
    mean: Arc<Vec<f64>>,
}

impl Simulator {
    pub fn new(factor: CovarianceFactor, signal: SignalSpec) -> Result<Self> {
        signal.validate()?;
        let mean = signal_on_grid(&signal, factor.grid())?;
        Ok(Self {
            factor: Arc::new(factor),
            signal: Arc::new(signal),
            mean: Arc::new(mean),
        })
    }

    pub fn factor(&self) -> &CovarianceFactor {
        &self.factor
    }

    pub fn signal(&self) -> &SignalSpec {
        &self.signal
    }

    pub fn grid(&self) -> &Grid {
        self.factor.grid()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sample(&self, seed: u64) -> Result<FieldSample> {
        let mut rng = rng_from_seed(seed);
        let noise = self.factor.draw(&mut rng);
        self.from_noise(&noise, seed)
    }

    /// Field with a caller-supplied noise vector (already correlated).
    pub fn from_noise(&self, noise: &[f64], seed: u64) -> Result<FieldSample> {
        if noise.len() != self.mean.len() {
            return Err(Error::Parameter(
                "noise length does not match the grid".into(),
            ));
        }
        let values = self.mean.iter().zip(noise).map(|(m, e)| m + e).collect();
        Ok(FieldSample {
            grid: self.factor.shared_grid(),
            values,
            mean: Arc::clone(&self.mean),
            noise_seed: seed,
            signal: Arc::clone(&self.signal),
        })
    }
}

impl FieldSample {
    /// CSV dump with columns `x0,...,x{d-1},y,mu`.
    pub fn to_csv(&self) -> String {
        let d = self.grid.dim();
        let mut out = String::new();
        let cols: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
        out.push_str(&cols.join(","));
        out.push_str(",y,mu\n");
        for i in 0..self.values.len() {
            for c in self.grid.point(i) {
                out.push_str(&format!("{c:.10},"));
            }
            out.push_str(&format!("{:.12},{:.12}\n", self.values[i], self.mean[i]));
        }
        out
    }
}

/// `Y^sel = Y + √γ ω` and `Y^inf = Y − ω/√γ` from a single draw `ω`.
#[derive(Debug, Clone)]
pub struct RandomizationSplit {
    pub grid: Arc<Grid>,
    pub gamma: f64,
    pub sel_values: Vec<f64>,
    pub inf_values: Vec<f64>,
    pub omega_seed: u64,
}

impl RandomizationSplit {
    /// `σ_γ = √(1+γ)`, the standard deviation of `Y^sel`.
    pub fn sigma_sel(&self) -> f64 {
        (1.0 + self.gamma).sqrt()
    }

    /// `τ_γ = √(1+1/γ)`, the standard deviation of `Y^inf`.
    pub fn tau_inf(&self) -> f64 {
        (1.0 + 1.0 / self.gamma).sqrt()
    }

    /// Information fraction `π = γ/(1+γ)`.
    pub fn info_fraction(&self) -> f64 {
        self.gamma / (1.0 + self.gamma)
    }
}

pub fn randomize(
    sample: &FieldSample,
    factor: &CovarianceFactor,
    gamma: f64,
    omega_seed: u64,
) -> Result<RandomizationSplit> {
    if *factor.grid() != *sample.grid {
        return Err(Error::Parameter(
            "factor grid does not match the sample".into(),
        ));
    }
    let mut rng = rng_from_seed(omega_seed);
    let omega = factor.draw(&mut rng);
    randomize_with_omega(sample, gamma, &omega, omega_seed)
}

/// Split with a caller-supplied `ω`.
pub fn randomize_with_omega(
    sample: &FieldSample,
    gamma: f64,
    omega: &[f64],
    omega_seed: u64,
) -> Result<RandomizationSplit> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Parameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if omega.len() != sample.values.len() {
        return Err(Error::Parameter(
            "omega length does not match the grid".into(),
        ));
    }
    let sg = gamma.sqrt();
    let sel_values = sample
        .values
        .iter()
        .zip(omega)
        .map(|(y, w)| y + sg * w)
        .collect();
    let inf_values = sample
        .values
        .iter()
        .zip(omega)
        .map(|(y, w)| y - w / sg)
        .collect();
    Ok(RandomizationSplit {
        grid: Arc::clone(&sample.grid),
        gamma,
        sel_values,
        inf_values,
        omega_seed,
    })
}
