//! Monte Carlo experiments: replicate simulation, detection and inference for
//! every enabled method, deterministic aggregation and CSV output.

mod config;
mod output;

pub use config::*;
pub use output::{write_coverage_csv, write_outputs, write_pivots_csv, write_rates_csv};

use std::sync::Arc;

use rayon::prelude::*;

use crate::detect::{prethreshold, selection_thresholds, tg_threshold};
use crate::field::{
    covariance_factor_with, randomize, stream_seed, CovarianceFactor, Simulator, STREAM_NOISE,
    STREAM_OMEGA,
};
use crate::infer::{
    height_interval, location_ellipsoid, tg_pivot, tg_pivot_with_trace, ConfidenceInterval,
    Ellipsoid,
};
use crate::linalg::{self, Mat};
use crate::metrics::{
    label_location, CoverageAccumulator, MetricsReport, PeakCoverage, PeakLabel, ReplicateTally,
};
use crate::model::{
    curvature_scales, derivative_bundle, dist, CurvatureScales, SignalSpec, TruePeak,
};
use crate::peaks::{find_local_maxima_in, peak_hessian_inf, Peak};
use crate::randomized::{
    carve_height_interval, carve_height_pivot, carve_location_ellipsoid, match_nearest_peak,
    split_height_interval, split_height_pivot, split_location_ellipsoid, CarveContext,
};
use crate::special::{chi2_cdf, norm_sf};
use crate::theory::{expected_true_discoveries, TheoryContext};
use crate::{Error, Result};

/// Largest tolerated fraction of replicates with numerical failures.
pub const MAX_NUMERICAL_FRACTION: f64 = 0.01;

/// Candidate pivot statistics of one conditioned replicate. Location entries
/// are `χ²_d` distribution functions of Wald statistics, so every column is
/// Uniform(0, 1) when its statistic is calibrated. Entries a method does not
/// define are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PivotRow {
    /// Truncated-Gaussian pivot with the true trace term.
    pub height_oracle: f64,
    /// Truncated-Gaussian pivot without the mean shift.
    pub height_unshifted: f64,
    /// `Ψ(Ŷ − μ)`, ignoring selection.
    pub height_naive: f64,
    /// The method's own height pivot.
    pub height_plugin: f64,
    pub loc_goldilocks: f64,
    pub loc_marginal: f64,
    pub loc_conditional: f64,
    /// The method's own location pivot.
    pub loc_plugin: f64,
}

impl PivotRow {
    fn empty() -> Self {
        Self {
            height_oracle: f64::NAN,
            height_unshifted: f64::NAN,
            height_naive: f64::NAN,
            height_plugin: f64::NAN,
            loc_goldilocks: f64::NAN,
            loc_marginal: f64::NAN,
            loc_conditional: f64::NAN,
            loc_plugin: f64::NAN,
        }
    }
}

/// Inference outcome for a replicate on which the conditioning event of one
/// true peak held.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditioned {
    pub height_covered: bool,
    pub height_width: f64,
    pub location_covered: bool,
    pub location_width: f64,
    pub pivots: PivotRow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakRecord {
    /// Discoveries in the true peak's consistency window.
    pub in_window: u64,
    pub conditioned: Option<Conditioned>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub tally: ReplicateTally,
    pub peaks: Vec<PeakRecord>,
    pub degenerate: u64,
    pub failed_match: u64,
    pub numerical: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub index: u64,
    pub methods: Vec<MethodOutcome>,
}

impl ReplicateOutcome {
    pub fn method(&self, m: Method) -> Option<&MethodOutcome> {
        self.methods.iter().find(|o| o.method == m)
    }

    pub fn has_numerical_failure(&self) -> bool {
        self.methods.iter().any(|m| m.numerical > 0)
    }
}

/// Everything fixed within one sweep cell.
#[derive(Debug, Clone)]
pub struct CellContext {
    pub cell: Cell,
    pub simulator: Simulator,
    pub true_peaks: Vec<TruePeak>,
    pub scales: Option<CurvatureScales>,
    /// Scales of the selection field `Y^sel`, whose noise is `σ_γ` larger.
    pub scales_sel: Option<CurvatureScales>,
    pub theory: Vec<TheoryContext>,
    pub lambda: Mat,
    pub alpha: f64,
    pub gamma: f64,
    pub methods: Vec<Method>,
    pub base_seed: u64,
    pub null_radius: f64,
    /// `(v, u)` applied to `Y^sel`.
    pub sel_thresholds: (f64, f64),
}

impl CellContext {
    pub fn new(config: &ExperimentConfig, factor: &CovarianceFactor, cell: Cell) -> Result<Self> {
        let kernel = config.kernel_spec()?;
        let bundle = derivative_bundle(&kernel)?;
        let signal = cell.signal.clone();
        let true_peaks = if signal.bumps.is_empty() {
            vec![]
        } else {
            crate::model::true_peaks(&signal)?
        };
        let eps_c = config.run.eps_constant;
        let gamma = config.run.gamma;
        let (scales, scales_sel) = if true_peaks.is_empty() {
            (None, None)
        } else {
            let s = curvature_scales(&true_peaks, &bundle, eps_c)?;
            let sigma = (1.0 + gamma).sqrt();
            let sel = CurvatureScales::from_delta(s.delta_n * sigma, bundle.sigma1_sq, eps_c)?;
            (Some(s), Some(sel))
        };
        let theory = match scales {
            Some(s) => true_peaks
                .iter()
                .map(|p| TheoryContext::new(&signal, p.clone(), bundle.clone(), s, cell.u))
                .collect::<Result<Vec<_>>>()?,
            None => vec![],
        };
        let sel_thresholds = match config.detection.u_mode {
            UModeKind::Tg => selection_thresholds(cell.v, cell.u, gamma),
            _ => (cell.v, cell.u),
        };
        let null_radius = config.null_radius(&signal);
        Ok(Self {
            simulator: Simulator::new(factor.clone(), signal)?,
            cell,
            true_peaks,
            scales,
            scales_sel,
            theory,
            lambda: bundle.lambda,
            alpha: config.detection.alpha,
            gamma,
            methods: config.run.methods.clone(),
            base_seed: config.run.base_seed,
            null_radius,
            sel_thresholds,
        })
    }

    fn signal(&self) -> &SignalSpec {
        self.simulator.signal()
    }

    fn label(&self, t: &[f64], scales: Option<&CurvatureScales>) -> PeakLabel {
        label_location(t, &self.true_peaks, self.signal(), scales, self.null_radius)
    }
}

/// Failure bookkeeping shared by the methods.
#[derive(Default)]
struct Failures {
    degenerate: u64,
    failed_match: u64,
    numerical: u64,
}

impl Failures {
    fn record(&mut self, e: &Error) {
        match e {
            Error::DegenerateHessian | Error::DegenerateCarvePrecision => self.degenerate += 1,
            Error::NoMatch => self.failed_match += 1,
            _ => self.numerical += 1,
        }
    }
}

/// Confidence regions for one discovery.
struct Regions {
    interval: ConfidenceInterval,
    ellipsoid: Ellipsoid,
}

impl Regions {
    fn covers(&self, tp: &TruePeak) -> (bool, bool) {
        (
            self.interval.contains(tp.height),
            self.ellipsoid.contains(&tp.location),
        )
    }
}

fn chi2_stat(center: &[f64], precision: &Mat, t: &[f64]) -> f64 {
    let diff: Vec<f64> = center.iter().zip(t).map(|(a, b)| a - b).collect();
    linalg::quad_form(precision, &diff)
}

/// Adds one discovery's error-rate contributions to `tally`.
fn tally_discovery(
    tally: &mut ReplicateTally,
    label: &PeakLabel,
    regions: Option<&Regions>,
    true_peaks: &[TruePeak],
) {
    tally.discoveries += 1;
    tally.null_discoveries += label.is_null() as u64;
    tally.inconsistent += !label.is_consistent() as u64;
    let (h_ok, l_ok) = match (regions, label.nearest) {
        (Some(r), Some(j)) => r.covers(&true_peaks[j]),
        _ => (false, false),
    };
    tally.height_misses += !h_ok as u64;
    tally.location_misses += !l_ok as u64;
}

fn standard_regions(ctx: &CellContext, p: &Peak) -> Result<Regions> {
    Ok(Regions {
        interval: height_interval(p, ctx.cell.u, ctx.alpha, &ctx.lambda)?,
        ellipsoid: location_ellipsoid(p, ctx.alpha, &ctx.lambda)?,
    })
}

fn run_standard(ctx: &CellContext, peaks: &[Peak]) -> MethodOutcome {
    let (v, u) = (ctx.cell.v, ctx.cell.u);
    let mut fail = Failures {
        degenerate: peaks
            .iter()
            .filter(|p| p.degenerate && p.height > v)
            .count() as u64,
        ..Default::default()
    };
    let pre = prethreshold(peaks, v);
    let discoveries: Vec<&Peak> = pre.iter().filter(|p| p.height > u).collect();
    let mut tally = ReplicateTally {
        tested: pre.len() as u64,
        ..Default::default()
    };
    let mut regions = Vec::with_capacity(discoveries.len());
    for p in &discoveries {
        let label = ctx.label(&p.location, ctx.scales.as_ref());
        let r = standard_regions(ctx, p).map_err(|e| fail.record(&e)).ok();
        tally_discovery(&mut tally, &label, r.as_ref(), &ctx.true_peaks);
        regions.push(r);
    }
    let mut records = Vec::with_capacity(ctx.true_peaks.len());
    for (j, tp) in ctx.true_peaks.iter().enumerate() {
        let th = &ctx.theory[j];
        let s = ctx.scales.expect("scales exist with true peaks");
        let window: Vec<usize> = (0..discoveries.len())
            .filter(|&k| {
                let p = discoveries[k];
                dist(&p.location, &tp.location) <= s.eps_n
                    && (p.height - th.u_bar).abs() <= s.big_delta_n
            })
            .collect();
        let conditioned = match (window.len(), window.first()) {
            (1, Some(&k)) => regions[k].as_ref().map(|r| {
                let p = discoveries[k];
                let (hc, lc) = r.covers(tp);
                let d = p.dim();
                let mu = tp.height;
                let pivots = PivotRow {
                    height_oracle: tg_pivot_with_trace(p.height, mu, u, th.trace_term())
                        .unwrap_or(f64::NAN),
                    height_unshifted: tg_pivot_with_trace(p.height, mu, u, 0.0).unwrap_or(f64::NAN),
                    height_naive: norm_sf(p.height - mu),
                    height_plugin: tg_pivot(p.height, mu, u, &p.neg_hessian, &ctx.lambda)
                        .unwrap_or(f64::NAN),
                    loc_goldilocks: chi2_cdf(d, chi2_stat(&p.location, &th.g_bar, &tp.location)),
                    loc_marginal: chi2_cdf(
                        d,
                        chi2_stat(&p.location, &th.marginal_sandwich(), &tp.location),
                    ),
                    loc_conditional: chi2_cdf(
                        d,
                        chi2_stat(&p.location, &th.conditional_sandwich(), &tp.location),
                    ),
                    loc_plugin: chi2_cdf(d, r.ellipsoid.statistic(&tp.location)),
                };
                Conditioned {
                    height_covered: hc,
                    height_width: r.interval.width(),
                    location_covered: lc,
                    location_width: r.ellipsoid.width(),
                    pivots,
                }
            }),
            _ => None,
        };
        records.push(PeakRecord {
            in_window: window.len() as u64,
            conditioned,
        });
    }
    MethodOutcome {
        method: Method::Standard,
        tally,
        peaks: records,
        degenerate: fail.degenerate,
        failed_match: fail.failed_match,
        numerical: fail.numerical,
    }
}

/// Regions and own pivots of a randomized method for one selected peak.
struct RandomizedInference {
    regions: Regions,
    height_pivot: Box<dyn Fn(f64) -> f64>,
    /// Location of the peak used for inference.
    inference_location: Vec<f64>,
    /// Grid index of the matched peak of the inference field.
    matched_index: usize,
}

fn carve_inference(
    ctx: &CellContext,
    sel: &Peak,
    full_peaks: &[Peak],
    split: &crate::field::RandomizationSplit,
) -> Result<RandomizedInference> {
    let full = match_nearest_peak(full_peaks, &sel.location)?.clone();
    let h_inf = peak_hessian_inf(split, &full.location)?;
    let cc = CarveContext::new(ctx.gamma, ctx.sel_thresholds.1, sel.clone(), full, h_inf)?;
    let regions = Regions {
        interval: carve_height_interval(&cc, ctx.alpha, &ctx.lambda)?,
        ellipsoid: carve_location_ellipsoid(&cc, ctx.alpha, &ctx.lambda)?,
    };
    let lambda = ctx.lambda.clone();
    let inference_location = cc.full_peak.location.clone();
    let matched_index = cc.full_peak.grid_index;
    Ok(RandomizedInference {
        regions,
        height_pivot: Box::new(move |mu| carve_height_pivot(&cc, mu, &lambda).unwrap_or(f64::NAN)),
        inference_location,
        matched_index,
    })
}

fn split_inference(
    ctx: &CellContext,
    sel: &Peak,
    inf_peaks: &[Peak],
) -> Result<RandomizedInference> {
    let inf = match_nearest_peak(inf_peaks, &sel.location)?.clone();
    let regions = Regions {
        interval: split_height_interval(&inf, ctx.alpha, ctx.gamma, &ctx.lambda)?,
        ellipsoid: split_location_ellipsoid(&inf, ctx.alpha, ctx.gamma, &ctx.lambda)?,
    };
    let (gamma, lambda) = (ctx.gamma, ctx.lambda.clone());
    let inference_location = inf.location.clone();
    let matched_index = inf.grid_index;
    Ok(RandomizedInference {
        regions,
        height_pivot: Box::new(move |mu| {
            split_height_pivot(&inf, mu, gamma, &lambda).unwrap_or(f64::NAN)
        }),
        inference_location,
        matched_index,
    })
}

fn run_randomized(
    ctx: &CellContext,
    method: Method,
    sel_peaks: &[Peak],
    full_peaks: &[Peak],
    inf_peaks: &[Peak],
    split: &crate::field::RandomizationSplit,
) -> MethodOutcome {
    let (v, u) = ctx.sel_thresholds;
    let mut fail = Failures {
        degenerate: sel_peaks
            .iter()
            .filter(|p| p.degenerate && p.height > v)
            .count() as u64,
        ..Default::default()
    };
    let pre = prethreshold(sel_peaks, v);
    let discoveries: Vec<&Peak> = pre.iter().filter(|p| p.height > u).collect();
    let mut tally = ReplicateTally {
        tested: pre.len() as u64,
        ..Default::default()
    };
    let mut inferences = Vec::with_capacity(discoveries.len());
    for p in &discoveries {
        let label = ctx.label(&p.location, ctx.scales_sel.as_ref());
        let inf = match method {
            Method::Carve => carve_inference(ctx, p, full_peaks, split),
            _ => split_inference(ctx, p, inf_peaks),
        }
        .map_err(|e| fail.record(&e))
        .ok();
        tally_discovery(
            &mut tally,
            &label,
            inf.as_ref().map(|i| &i.regions),
            &ctx.true_peaks,
        );
        inferences.push(inf);
    }
    let mut records = Vec::with_capacity(ctx.true_peaks.len());
    for tp in &ctx.true_peaks {
        let s_sel = ctx.scales_sel.expect("scales exist with true peaks");
        let s = ctx.scales.expect("scales exist with true peaks");
        let window: Vec<usize> = (0..discoveries.len())
            .filter(|&k| dist(&discoveries[k].location, &tp.location) <= s_sel.eps_n)
            .collect();
        let mut conditioned = None;
        if let (1, Some(&k)) = (window.len(), window.first()) {
            if let Some(inf) = &inferences[k] {
                let event = match method {
                    Method::Carve => {
                        let near: Vec<&Peak> = full_peaks
                            .iter()
                            .filter(|p| dist(&p.location, &tp.location) <= s.eps_n)
                            .collect();
                        near.len() == 1 && near[0].grid_index == inf.matched_index
                    }
                    _ => true,
                };
                if event {
                    let (hc, lc) = inf.regions.covers(tp);
                    let d = tp.location.len();
                    let e = &inf.regions.ellipsoid;
                    let pivots = PivotRow {
                        height_plugin: (inf.height_pivot)(tp.height),
                        loc_plugin: chi2_cdf(
                            d,
                            chi2_stat(&inf.inference_location, &e.precision, &tp.location),
                        ),
                        ..PivotRow::empty()
                    };
                    conditioned = Some(Conditioned {
                        height_covered: hc,
                        height_width: inf.regions.interval.width(),
                        location_covered: lc,
                        location_width: e.width(),
                        pivots,
                    });
                }
            }
        }
        records.push(PeakRecord {
            in_window: window.len() as u64,
            conditioned,
        });
    }
    MethodOutcome {
        method,
        tally,
        peaks: records,
        degenerate: fail.degenerate,
        failed_match: fail.failed_match,
        numerical: fail.numerical,
    }
}

/// Simulates replicate `index` of a cell and runs every enabled method on the
/// same underlying field. Seeds depend only on `(base_seed, index, stream)`.
pub fn run_replicate(ctx: &CellContext, index: u64) -> Result<ReplicateOutcome> {
    let sample = ctx
        .simulator
        .sample(stream_seed(ctx.base_seed, index, STREAM_NOISE))?;
    let grid = &sample.grid;
    let peaks = find_local_maxima_in(grid, &sample.values)?;
    let mut methods = Vec::with_capacity(ctx.methods.len());
    if ctx.methods.contains(&Method::Standard) {
        methods.push(run_standard(ctx, &peaks));
    }
    if ctx.methods.iter().any(|m| m.is_randomized()) {
        let split = randomize(
            &sample,
            ctx.simulator.factor(),
            ctx.gamma,
            stream_seed(ctx.base_seed, index, STREAM_OMEGA),
        )?;
        let sel_peaks = find_local_maxima_in(grid, &split.sel_values)?;
        let full: Vec<Peak> = peaks.iter().filter(|p| !p.degenerate).cloned().collect();
        let inf_peaks: Vec<Peak> = if ctx.methods.contains(&Method::Split) {
            find_local_maxima_in(grid, &split.inf_values)?
                .into_iter()
                .filter(|p| !p.degenerate)
                .collect()
        } else {
            vec![]
        };
        for &m in ctx.methods.iter().filter(|m| m.is_randomized()) {
            methods.push(run_randomized(
                ctx, m, &sel_peaks, &full, &inf_peaks, &split,
            ));
        }
    }
    Ok(ReplicateOutcome { index, methods })
}

/// A pivot row with its identifying keys.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PivotRecord {
    pub replicate: u64,
    pub method: Method,
    pub target: usize,
    pub row: PivotRow,
}

/// Aggregates of one method in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub report: MetricsReport,
    pub prethresholded: u64,
    pub discoveries: u64,
    /// Theory value of the expected number of discoveries per true peak
    /// (standard method only).
    pub expected_discoveries: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub replicates: u64,
    pub numerical_replicates: u64,
    pub methods: Vec<MethodSummary>,
    pub pivots: Vec<PivotRecord>,
}

impl CellResult {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }

    pub fn numerical_fraction(&self) -> f64 {
        self.numerical_replicates as f64 / self.replicates.max(1) as f64
    }

    pub fn failed(&self) -> bool {
        self.numerical_fraction() > MAX_NUMERICAL_FRACTION
    }

    /// Pivot column values of one method and target.
    pub fn pivot_column(
        &self,
        method: Method,
        target: usize,
        column: impl Fn(&PivotRow) -> f64,
    ) -> Vec<f64> {
        self.pivots
            .iter()
            .filter(|p| p.method == method && p.target == target)
            .map(|p| column(&p.row))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub name: String,
    pub cells: Vec<CellResult>,
}

impl ExperimentResult {
    pub fn failed_cells(&self) -> Vec<usize> {
        self.cells
            .iter()
            .filter(|c| c.failed())
            .map(|c| c.cell.index)
            .collect()
    }
}

/// Folds replicate outcomes, in index order, into per-method summaries.
pub fn aggregate(ctx: &CellContext, outcomes: &[ReplicateOutcome]) -> CellResult {
    let n_true = ctx.true_peaks.len();
    let mut methods = Vec::with_capacity(ctx.methods.len());
    let mut pivots = Vec::new();
    for &m in &ctx.methods {
        let mut tallies = Vec::with_capacity(outcomes.len());
        let mut height = vec![CoverageAccumulator::default(); n_true];
        let mut location = vec![CoverageAccumulator::default(); n_true];
        let mut in_window = vec![0u64; n_true];
        let (mut degenerate, mut failed_match, mut numerical) = (0, 0, 0);
        for o in outcomes {
            let mo = o.method(m).expect("every replicate runs every method");
            tallies.push(mo.tally);
            degenerate += mo.degenerate;
            failed_match += mo.failed_match;
            numerical += mo.numerical;
            for (j, rec) in mo.peaks.iter().enumerate() {
                in_window[j] += rec.in_window;
                if let Some(c) = rec.conditioned {
                    height[j].push(c.height_covered, c.height_width);
                    location[j].push(c.location_covered, c.location_width);
                    pivots.push(PivotRecord {
                        replicate: o.index,
                        method: m,
                        target: j,
                        row: c.pivots,
                    });
                }
            }
        }
        let n = outcomes.len().max(1) as f64;
        let per_peak = (0..n_true)
            .map(|j| PeakCoverage {
                peak: j,
                height: height[j].summary(),
                location: location[j].summary(),
                discovery_rate: in_window[j] as f64 / n,
            })
            .collect();
        let mut report = MetricsReport::from_tallies(&tallies, per_peak);
        report.degenerate_count = degenerate;
        report.failed_match_count = failed_match;
        report.numerical_failure_count = numerical;
        let expected_discoveries = if m == Method::Standard {
            ctx.theory.iter().map(expected_true_discoveries).collect()
        } else {
            vec![f64::NAN; n_true]
        };
        methods.push(MethodSummary {
            method: m,
            prethresholded: tallies.iter().map(|t| t.tested).sum(),
            discoveries: tallies.iter().map(|t| t.discoveries).sum(),
            report,
            expected_discoveries,
        });
    }
    CellResult {
        cell: ctx.cell.clone(),
        replicates: outcomes.len() as u64,
        numerical_replicates: outcomes
            .iter()
            .filter(|o| o.has_numerical_failure())
            .count() as u64,
        methods,
        pivots,
    }
}

/// Minimum conditioned count of the first true peak across methods.
fn min_conditioned(outcomes: &[ReplicateOutcome], methods: &[Method]) -> u64 {
    methods
        .iter()
        .map(|&m| {
            outcomes
                .iter()
                .filter(|o| {
                    o.method(m)
                        .and_then(|mo| mo.peaks.first())
                        .is_some_and(|r| r.conditioned.is_some())
                })
                .count() as u64
        })
        .min()
        .unwrap_or(0)
}

/// Runs one cell in deterministic chunks of replicate indices.
pub fn run_cell(config: &ExperimentConfig, ctx: &CellContext) -> Result<CellResult> {
    let run = &config.run;
    let target = if ctx.true_peaks.is_empty() {
        None
    } else {
        run.target_conditioned
    };
    let max = match target {
        Some(_) => run
            .max_replicates
            .unwrap_or(DEFAULT_MAX_REPLICATES)
            .max(run.replicates),
        None => run.replicates,
    };
    let mut outcomes: Vec<ReplicateOutcome> = Vec::new();
    let mut next = 0u64;
    while next < max {
        let end = (next + run.chunk).min(max);
        let chunk: Vec<ReplicateOutcome> = (next..end)
            .into_par_iter()
            .map(|i| run_replicate(ctx, i))
            .collect::<Result<Vec<_>>>()?;
        outcomes.extend(chunk);
        next = end;
        let enough = match target {
            Some(t) => next >= run.replicates && min_conditioned(&outcomes, &ctx.methods) >= t,
            None => false,
        };
        if enough {
            break;
        }
    }
    Ok(aggregate(ctx, &outcomes))
}

/// Shared covariance factor of an experiment.
pub fn experiment_factor(config: &ExperimentConfig) -> Result<Arc<CovarianceFactor>> {
    let kernel = config.kernel_spec()?;
    let grid = config.grid()?;
    Ok(Arc::new(covariance_factor_with(
        &kernel,
        &grid,
        config.grid.factor,
        config.grid.point_cap,
    )?))
}

/// Runs every cell of the sweep.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let factor = experiment_factor(config)?;
    let mut cells = Vec::new();
    for cell in config.cells()? {
        let ctx = CellContext::new(config, &factor, cell)?;
        cells.push(run_cell(config, &ctx)?);
    }
    Ok(ExperimentResult {
        name: config.name.clone(),
        cells,
    })
}

/// Closed-form quantities of every cell, as `(name, value)` pairs.
pub fn theory_summary(config: &ExperimentConfig) -> Result<Vec<(usize, Vec<(&'static str, f64)>)>> {
    config.validate()?;
    let kernel = config.kernel_spec()?;
    let bundle = derivative_bundle(&kernel)?;
    let mut out = Vec::new();
    for cell in config.cells()? {
        let mut rows: Vec<(&'static str, f64)> = vec![("v", cell.v), ("u", cell.u)];
        if let Some(mu0) = cell.mu0 {
            rows.push(("mu0", mu0));
        }
        // Without an explicit pre-threshold the cell's v equals its u.
        rows.push((
            "u_tg",
            tg_threshold(config.detection.alpha, cell.v, kernel.dimension)?,
        ));
        rows.push((
            "null_intensity",
            crate::theory::null_marginal_intensity(&bundle, cell.v, kernel.dimension)?,
        ));
        if !cell.signal.bumps.is_empty() {
            let peaks = crate::model::true_peaks(&cell.signal)?;
            let scales = curvature_scales(&peaks, &bundle, config.run.eps_constant)?;
            rows.push(("eps_n", scales.eps_n));
            rows.push(("big_delta_n", scales.big_delta_n));
            for p in peaks {
                let ctx = TheoryContext::new(&cell.signal, p, bundle.clone(), scales, cell.u)?;
                rows.push(("mu_peak", ctx.mu()));
                rows.push(("trace_term", ctx.trace_term()));
                rows.push(("expected_discoveries", expected_true_discoveries(&ctx)));
                rows.push(("power", crate::theory::power_approx(&ctx)));
            }
        }
        out.push((cell.index, rows));
    }
    Ok(out)
}
