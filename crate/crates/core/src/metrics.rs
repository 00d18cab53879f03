//! Labeling of detected peaks against the ground truth, and Monte Carlo
//! estimators of per-comparison error rates and conditional coverage.

use crate::model::{dist, CurvatureScales, SignalSpec, TruePeak};
use crate::peaks::Peak;

/// Region a detected peak falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    /// Within `ε_n` of the true peak with this index.
    EpsilonConsistent(usize),
    /// The signal vanishes on a ball around the peak.
    NullRegion,
    HighGradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakLabel {
    pub kind: LabelKind,
    /// Distance to the nearest true peak, infinite when there is none.
    pub distance: f64,
    /// Index of the nearest true peak, ties to the lowest index.
    pub nearest: Option<usize>,
}

impl PeakLabel {
    pub fn is_consistent(&self) -> bool {
        matches!(self.kind, LabelKind::EpsilonConsistent(_))
    }

    pub fn is_null(&self) -> bool {
        self.kind == LabelKind::NullRegion
    }
}

/// Nearest true peak to `t`, ties to the lowest index.
pub fn nearest_true_peak(t: &[f64], true_peaks: &[TruePeak]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in true_peaks.iter().enumerate() {
        let r = dist(t, &p.location);
        if best.is_none_or(|(_, b)| r < b) {
            best = Some((i, r));
        }
    }
    best
}

/// Labels every peak. Without scales (a null signal) no peak can be
/// consistent.
pub fn label_peaks(
    peaks: &[Peak],
    true_peaks: &[TruePeak],
    signal: &SignalSpec,
    scales: Option<&CurvatureScales>,
    null_radius: f64,
) -> Vec<PeakLabel> {
    peaks
        .iter()
        .map(|p| label_location(&p.location, true_peaks, signal, scales, null_radius))
        .collect()
}

pub fn label_location(
    t: &[f64],
    true_peaks: &[TruePeak],
    signal: &SignalSpec,
    scales: Option<&CurvatureScales>,
    null_radius: f64,
) -> PeakLabel {
    let nearest = nearest_true_peak(t, true_peaks);
    let distance = nearest.map_or(f64::INFINITY, |(_, r)| r);
    let kind = match (nearest, scales) {
        (Some((i, r)), Some(s)) if r <= s.eps_n => LabelKind::EpsilonConsistent(i),
        _ if signal.vanishes_on_ball(t, null_radius) => LabelKind::NullRegion,
        _ => LabelKind::HighGradient,
    };
    PeakLabel {
        kind,
        distance,
        nearest: nearest.map(|(i, _)| i),
    }
}

/// Ratio of pooled counts with a replicate-level jackknife standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEstimate {
    pub value: f64,
    pub se: f64,
    pub numerator: u64,
    pub denominator: u64,
}

impl RatioEstimate {
    pub fn is_defined(&self) -> bool {
        self.denominator > 0
    }
}

/// `Σ nᵢ / Σ dᵢ` over replicates. Undefined (NaN) when every denominator is
/// zero.
pub fn pooled_ratio(pairs: &[(u64, u64)]) -> RatioEstimate {
    let num: u64 = pairs.iter().map(|p| p.0).sum();
    let den: u64 = pairs.iter().map(|p| p.1).sum();
    if den == 0 {
        return RatioEstimate {
            value: f64::NAN,
            se: f64::NAN,
            numerator: num,
            denominator: den,
        };
    }
    let value = num as f64 / den as f64;
    let n = pairs.len();
    let se = if n < 2 {
        f64::NAN
    } else {
        let loo: Vec<f64> = pairs
            .iter()
            .map(|&(a, b)| {
                let d = den - b;
                if d == 0 {
                    f64::NAN
                } else {
                    (num - a) as f64 / d as f64
                }
            })
            .collect();
        let mean = loo.iter().sum::<f64>() / n as f64;
        let ss: f64 = loo.iter().map(|r| (r - mean) * (r - mean)).sum();
        ((n as f64 - 1.0) / n as f64 * ss).sqrt()
    };
    RatioEstimate {
        value,
        se,
        numerator: num,
        denominator: den,
    }
}

/// Per-replicate counts feeding the pooled error rates of one method.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReplicateTally {
    /// Peaks tested, i.e. pre-thresholded (on `Y^sel` for randomized methods).
    pub tested: u64,
    pub discoveries: u64,
    pub null_discoveries: u64,
    /// Discoveries farther than `ε_n` from every true peak.
    pub inconsistent: u64,
    /// Discoveries whose height interval misses the nearest true height.
    pub height_misses: u64,
    /// Discoveries whose location region misses the nearest true peak.
    pub location_misses: u64,
}

impl ReplicateTally {
    pub fn merge(&mut self, other: &ReplicateTally) {
        self.tested += other.tested;
        self.discoveries += other.discoveries;
        self.null_discoveries += other.null_discoveries;
        self.inconsistent += other.inconsistent;
        self.height_misses += other.height_misses;
        self.location_misses += other.location_misses;
    }
}

pub fn estimate_null_pcer(tallies: &[ReplicateTally]) -> RatioEstimate {
    pooled_ratio(
        &tallies
            .iter()
            .map(|t| (t.null_discoveries, t.tested))
            .collect::<Vec<_>>(),
    )
}

pub fn estimate_eps_pcer(tallies: &[ReplicateTally]) -> RatioEstimate {
    pooled_ratio(
        &tallies
            .iter()
            .map(|t| (t.inconsistent, t.tested))
            .collect::<Vec<_>>(),
    )
}

/// Height and location per-comparison miscoverage rates.
pub fn estimate_pcmr(tallies: &[ReplicateTally]) -> (RatioEstimate, RatioEstimate) {
    let h: Vec<_> = tallies
        .iter()
        .map(|t| (t.height_misses, t.tested))
        .collect();
    let l: Vec<_> = tallies
        .iter()
        .map(|t| (t.location_misses, t.tested))
        .collect();
    (pooled_ratio(&h), pooled_ratio(&l))
}

/// Running coverage and width of one kind of confidence region.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CoverageAccumulator {
    pub n: u64,
    pub covered: u64,
    pub width_sum: f64,
}

impl CoverageAccumulator {
    pub fn push(&mut self, covered: bool, width: f64) {
        self.n += 1;
        self.covered += covered as u64;
        self.width_sum += width;
    }

    pub fn merge(&mut self, other: &CoverageAccumulator) {
        self.n += other.n;
        self.covered += other.covered;
        self.width_sum += other.width_sum;
    }

    pub fn summary(&self) -> CoverageSummary {
        if self.n == 0 {
            return CoverageSummary {
                coverage: f64::NAN,
                width: f64::NAN,
                se: f64::NAN,
                n: 0,
            };
        }
        let n = self.n as f64;
        let p = self.covered as f64 / n;
        CoverageSummary {
            coverage: p,
            width: self.width_sum / n,
            se: (p * (1.0 - p) / n).sqrt(),
            n: self.n,
        }
    }
}

/// Coverage with its binomial standard error and the mean width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageSummary {
    pub coverage: f64,
    pub width: f64,
    pub se: f64,
    pub n: u64,
}

impl CoverageSummary {
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Conditional coverage of one true peak under one method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakCoverage {
    pub peak: usize,
    pub height: CoverageSummary,
    pub location: CoverageSummary,
    /// Mean number of discoveries in the peak's consistency window.
    pub discovery_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub pcer0: RatioEstimate,
    pub eps_pcer: RatioEstimate,
    pub pcmr_height: RatioEstimate,
    pub pcmr_location: RatioEstimate,
    pub per_peak_coverage: Vec<PeakCoverage>,
    pub degenerate_count: u64,
    pub failed_match_count: u64,
    pub numerical_failure_count: u64,
    pub replicates: u64,
}

impl MetricsReport {
    pub fn from_tallies(tallies: &[ReplicateTally], per_peak_coverage: Vec<PeakCoverage>) -> Self {
        let (pcmr_height, pcmr_location) = estimate_pcmr(tallies);
        Self {
            pcer0: estimate_null_pcer(tallies),
            eps_pcer: estimate_eps_pcer(tallies),
            pcmr_height,
            pcmr_location,
            per_peak_coverage,
            degenerate_count: 0,
            failed_match_count: 0,
            numerical_failure_count: 0,
            replicates: tallies.len() as u64,
        }
    }
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `samples` and `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs: Vec<f64> = samples.iter().copied().filter(|x| !x.is_nan()).collect();
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |acc: f64, (i, &x)| {
        let f = cdf(x);
        acc.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// KS distance to Uniform(0, 1).
pub fn ks_uniform(samples: &[f64]) -> f64 {
    ks_distance(samples, |x| x.clamp(0.0, 1.0))
}

/// Number of strict decreases in a sequence.
pub fn count_inversions(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] < w[0]).count()
}
