//! Experiment configuration: a TOML document with one table per concern.
//!
//! ```toml
//! name = "custom"
//! [kernel]
//! length_scale = 0.15
//! dimension = 2
//! [grid]
//! lower = [-0.5, -0.5]
//! upper = [0.5, 0.5]
//! counts = [41, 41]
//! [signal]
//! kind = "single"        # single | bumps | null
//! [detection]
//! alpha = 0.1
//! u_mode = "offset"      # tg | offset | explicit
//! [sweep]
//! mu0 = [7.0, 11.0]
//! u_offsets = [-2.0, 0.0, 2.0]
//! [run]
//! methods = ["standard"]
//! replicates = 2000
//! ```

use serde::{Deserialize, Serialize};

use crate::detect::tg_threshold;
use crate::field::{FactorMethod, Grid, DEFAULT_POINT_CAP};
use crate::model::{
    BoxDomain, Bump, KernelFamily, KernelSpec, SignalSpec, Taper, DEFAULT_EPS_CONSTANT,
};
use crate::{Error, Result};

/// Inference procedure run on each replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Standard,
    Carve,
    Split,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Standard => "standard",
            Method::Carve => "carve",
            Method::Split => "split",
        }
    }

    pub fn is_randomized(&self) -> bool {
        *self != Method::Standard
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(default)]
    pub family: KernelFamily,
    pub length_scale: f64,
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
    #[serde(default)]
    pub factor: FactorMethod,
    #[serde(default = "default_point_cap")]
    pub point_cap: usize,
    /// When set, the spacing must not exceed `length_scale / max_spacing_ratio`.
    #[serde(default)]
    pub max_spacing_ratio: Option<f64>,
}

fn default_point_cap() -> usize {
    DEFAULT_POINT_CAP
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    /// `μ₀ K(c, t)` with `μ₀` taken from the sweep.
    Single,
    /// A fixed list of bumps.
    Bumps,
    Null,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSection {
    pub center: Vec<f64>,
    pub amplitude: f64,
    pub width: f64,
    /// `[inner, outer]` taper radii in widths.
    #[serde(default)]
    pub taper: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSection {
    pub kind: SignalKind,
    /// Center of the single bump, the origin by default.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    /// Width of the single bump, the kernel length scale by default.
    #[serde(default)]
    pub width: Option<f64>,
    #[serde(default)]
    pub bumps: Vec<BumpSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UModeKind {
    /// `u = u_TG(α, v)`.
    Tg,
    /// `u = μ₀ + offset` for each sweep offset.
    Offset,
    /// `u` from the sweep's explicit list.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSection {
    /// Pre-threshold; when absent, pre-thresholding is bypassed (`v = u`).
    #[serde(default)]
    pub v: Option<f64>,
    pub alpha: f64,
    pub u_mode: UModeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub mu0: Vec<f64>,
    #[serde(default)]
    pub u_offsets: Vec<f64>,
    #[serde(default)]
    pub u_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub methods: Vec<Method>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Replicates per cell, or the minimum when a conditioned target is set.
    pub replicates: u64,
    /// Keep adding chunks until every method has this many conditioned
    /// replicates for the first true peak.
    #[serde(default)]
    pub target_conditioned: Option<u64>,
    #[serde(default)]
    pub max_replicates: Option<u64>,
    #[serde(default = "default_chunk")]
    pub chunk: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_eps_constant")]
    pub eps_constant: f64,
    /// Null-region radius, three times the largest bump width by default.
    #[serde(default)]
    pub null_radius: Option<f64>,
    #[serde(default)]
    pub output: Option<String>,
}

fn default_gamma() -> f64 {
    1.0
}

fn default_chunk() -> u64 {
    500
}

fn default_eps_constant() -> f64 {
    DEFAULT_EPS_CONSTANT
}

/// Upper bound on replicates per cell when chasing a conditioned target.
pub const DEFAULT_MAX_REPLICATES: u64 = 400_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub kernel: KernelSection,
    pub grid: GridSection,
    pub signal: SignalSection,
    pub detection: DetectionSection,
    #[serde(default)]
    pub sweep: SweepSection,
    pub run: RunSection,
}

fn default_name() -> String {
    "custom".into()
}

/// One `(signal, threshold)` combination of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub mu0: Option<f64>,
    pub v: f64,
    pub u: f64,
    pub signal: SignalSpec,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(e.message().replace('\n', " ")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        let k = KernelSpec {
            family: self.kernel.family,
            length_scale: self.kernel.length_scale,
            dimension: self.kernel.dimension,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = Grid::new(
            self.grid.lower.clone(),
            self.grid.upper.clone(),
            self.grid.counts.clone(),
        )?;
        if let Some(r) = self.grid.max_spacing_ratio {
            g.check_spacing(self.kernel.length_scale, r)?;
        }
        Ok(g)
    }

    pub fn domain(&self) -> Result<BoxDomain> {
        BoxDomain::new(self.grid.lower.clone(), self.grid.upper.clone())
    }

    /// Signal for a given sweep amplitude (ignored unless the kind is
    /// `single`).
    pub fn signal(&self, mu0: Option<f64>) -> Result<SignalSpec> {
        let domain = self.domain()?;
        let d = self.kernel.dimension;
        match self.signal.kind {
            SignalKind::Null => SignalSpec::null(domain),
            SignalKind::Single => {
                let mu0 = mu0
                    .ok_or_else(|| Error::Config("single-bump signal needs a mu0 sweep".into()))?;
                let center = self.signal.center.clone().unwrap_or_else(|| vec![0.0; d]);
                let width = self.signal.width.unwrap_or(self.kernel.length_scale);
                SignalSpec::new(vec![Bump::gaussian(center, mu0, width)], domain)
            }
            SignalKind::Bumps => {
                let bumps = self
                    .signal
                    .bumps
                    .iter()
                    .map(|b| Bump {
                        taper: b.taper.map(|[inner, outer]| Taper { inner, outer }),
                        ..Bump::gaussian(b.center.clone(), b.amplitude, b.width)
                    })
                    .collect();
                SignalSpec::new(bumps, domain)
            }
        }
    }

    /// Pre-threshold and threshold for an amplitude and sweep entry.
    fn thresholds(&self, mu0: Option<f64>, entry: Option<f64>) -> Result<(f64, f64)> {
        let det = &self.detection;
        let u = match det.u_mode {
            UModeKind::Tg => {
                let v = det.v.ok_or_else(|| {
                    Error::Config("u_mode = \"tg\" needs a pre-threshold v".into())
                })?;
                tg_threshold(det.alpha, v, self.kernel.dimension)?
            }
            UModeKind::Offset => {
                let mu0 = mu0.ok_or_else(|| {
                    Error::Config("u_mode = \"offset\" needs a single-bump signal".into())
                })?;
                mu0 + entry.expect("offset entry")
            }
            UModeKind::Explicit => entry.expect("explicit entry"),
        };
        let v = det.v.unwrap_or(u);
        if !(u >= v) {
            return Err(Error::Config(format!(
                "threshold u = {u} is below the pre-threshold v = {v}"
            )));
        }
        Ok((v, u))
    }

    /// All sweep cells, amplitudes outermost.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let amplitudes: Vec<Option<f64>> = match self.signal.kind {
            SignalKind::Single => self.sweep.mu0.iter().map(|&m| Some(m)).collect(),
            _ => vec![None],
        };
        let entries: Vec<Option<f64>> = match self.detection.u_mode {
            UModeKind::Tg => vec![None],
            UModeKind::Offset => self.sweep.u_offsets.iter().map(|&o| Some(o)).collect(),
            UModeKind::Explicit => self.sweep.u_values.iter().map(|&u| Some(u)).collect(),
        };
        let mut cells = Vec::new();
        for &mu0 in &amplitudes {
            let signal = self.signal(mu0)?;
            for &entry in &entries {
                let (v, u) = self.thresholds(mu0, entry)?;
                cells.push(Cell {
                    index: cells.len(),
                    mu0,
                    v,
                    u,
                    signal: signal.clone(),
                });
            }
        }
        if cells.is_empty() {
            return Err(Error::Config("the sweep is empty".into()));
        }
        Ok(cells)
    }

    /// Null-region radius in effect.
    pub fn null_radius(&self, signal: &SignalSpec) -> f64 {
        self.run
            .null_radius
            .unwrap_or_else(|| 3.0 * signal.max_width())
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel_spec()?;
        let g = self.grid()?;
        if g.dim() != self.kernel.dimension {
            return Err(Error::Config("grid and kernel dimensions differ".into()));
        }
        if !(self.detection.alpha > 0.0 && self.detection.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "alpha = {} outside (0, 1]",
                self.detection.alpha
            )));
        }
        if let Some(v) = self.detection.v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "pre-threshold v = {v} must be positive"
                )));
            }
        }
        match self.signal.kind {
            SignalKind::Single if self.sweep.mu0.is_empty() => {
                return Err(Error::Config(
                    "sweep.mu0 must be nonempty for a single-bump signal".into(),
                ))
            }
            SignalKind::Bumps if self.signal.bumps.is_empty() => {
                return Err(Error::Config("signal.bumps must be nonempty".into()))
            }
            _ => {}
        }
        match self.detection.u_mode {
            UModeKind::Offset if self.sweep.u_offsets.is_empty() => {
                return Err(Error::Config("sweep.u_offsets must be nonempty".into()))
            }
            UModeKind::Explicit if self.sweep.u_values.is_empty() => {
                return Err(Error::Config("sweep.u_values must be nonempty".into()))
            }
            _ => {}
        }
        let run = &self.run;
        if run.replicates == 0 {
            return Err(Error::Config("run.replicates must be at least 1".into()));
        }
        if run.chunk == 0 {
            return Err(Error::Config("run.chunk must be at least 1".into()));
        }
        if run.methods.is_empty() {
            return Err(Error::Config("run.methods must be nonempty".into()));
        }
        if run.methods.iter().any(|m| m.is_randomized())
            && !(run.gamma > 0.0 && run.gamma.is_finite())
        {
            return Err(Error::Config(format!(
                "gamma = {} must be positive",
                run.gamma
            )));
        }
        if let (Some(max), true) = (run.max_replicates, run.target_conditioned.is_some()) {
            if max < run.replicates {
                return Err(Error::Config(
                    "run.max_replicates is below run.replicates".into(),
                ));
            }
        }
        if let Some(r) = run.null_radius {
            if !(r >= 0.0) {
                return Err(Error::Config("run.null_radius must be nonnegative".into()));
            }
        }
        if !(run.eps_constant >= crate::model::MIN_EPS_CONSTANT) {
            return Err(Error::Config(format!(
                "eps_constant = {} must exceed 4",
                run.eps_constant
            )));
        }
        self.cells()?;
        Ok(())
    }
}

fn base(
    name: &str,
    half: f64,
    n: usize,
    signal: SignalSection,
    detection: DetectionSection,
    sweep: SweepSection,
    run: RunSection,
) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        kernel: KernelSection {
            family: KernelFamily::SquaredExponential,
            length_scale: 0.15,
            dimension: 2,
        },
        grid: GridSection {
            lower: vec![-half; 2],
            upper: vec![half; 2],
            counts: vec![n; 2],
            factor: FactorMethod::Kronecker,
            point_cap: DEFAULT_POINT_CAP,
            max_spacing_ratio: Some(6.0),
        },
        signal,
        detection,
        sweep,
        run,
    }
}

fn run_section(methods: Vec<Method>, replicates: u64) -> RunSection {
    RunSection {
        methods,
        gamma: 1.0,
        replicates,
        target_conditioned: None,
        max_replicates: None,
        chunk: default_chunk(),
        base_seed: 0,
        eps_constant: DEFAULT_EPS_CONSTANT,
        null_radius: None,
        output: None,
    }
}

fn single_bump() -> SignalSection {
    SignalSection {
        kind: SignalKind::Single,
        center: None,
        width: None,
        bumps: vec![],
    }
}

/// Single bump `μ₀K(0, t)`, `μ₀ ∈ {3, …, 11}`, `u = μ₀ + {−2, 0, 2}`, no
/// pre-thresholding, standard inference.
pub fn preset_exp1() -> ExperimentConfig {
    base(
        "exp1",
        0.5,
        41,
        single_bump(),
        DetectionSection {
            v: None,
            alpha: 0.1,
            u_mode: UModeKind::Offset,
        },
        SweepSection {
            mu0: (3..=11).map(f64::from).collect(),
            u_offsets: vec![-2.0, 0.0, 2.0],
            u_values: vec![],
        },
        run_section(vec![Method::Standard], 2000),
    )
}

/// As [`preset_exp1`], comparing standard, carve and split inference at
/// `γ = 1`.
pub fn preset_exp2() -> ExperimentConfig {
    let mut cfg = preset_exp1();
    cfg.name = "exp2".into();
    cfg.run.methods = vec![Method::Standard, Method::Carve, Method::Split];
    cfg
}

/// Nine bumps on a 3×3 layout with heights 3 to 6, `v = 3` and
/// `u = u_TG(0.1, v)`.
pub fn preset_exp3() -> ExperimentConfig {
    let coords = [-0.9, 0.0, 0.9];
    let mut bumps = Vec::with_capacity(9);
    for (k, (y, x)) in coords
        .iter()
        .flat_map(|y| coords.iter().map(move |x| (*y, *x)))
        .enumerate()
    {
        bumps.push(BumpSection {
            center: vec![x, y],
            amplitude: 3.0 + 3.0 * k as f64 / 8.0,
            width: 0.15,
            taper: None,
        });
    }
    base(
        "exp3",
        1.4,
        113,
        SignalSection {
            kind: SignalKind::Bumps,
            center: None,
            width: None,
            bumps,
        },
        DetectionSection {
            v: Some(3.0),
            alpha: 0.1,
            u_mode: UModeKind::Tg,
        },
        SweepSection::default(),
        run_section(vec![Method::Standard, Method::Carve, Method::Split], 500),
    )
}

/// Pure-noise field on `[−1, 1]²` with `v = 3`, `u = u_TG(0.1, v)`.
pub fn preset_null() -> ExperimentConfig {
    base(
        "null",
        1.0,
        81,
        SignalSection {
            kind: SignalKind::Null,
            center: None,
            width: None,
            bumps: vec![],
        },
        DetectionSection {
            v: Some(3.0),
            alpha: 0.1,
            u_mode: UModeKind::Tg,
        },
        SweepSection::default(),
        run_section(vec![Method::Standard], 2000),
    )
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    match name {
        "exp1" => Ok(preset_exp1()),
        "exp2" => Ok(preset_exp2()),
        "exp3" => Ok(preset_exp3()),
        "null" => Ok(preset_null()),
        other => Err(Error::Config(format!("unknown preset {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in ["exp1", "exp2", "exp3", "null"] {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            let text = cfg.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg, "{name}");
        }
        assert_eq!(preset_exp1().cells().unwrap().len(), 27);
        let exp3 = preset_exp3().cells().unwrap();
        assert_eq!(exp3.len(), 1);
        assert!((exp3[0].u - 3.762_430_609_944_597).abs() < 1e-11);
        assert_eq!(exp3[0].signal.bumps.len(), 9);
        assert!(preset("nope").is_err());
    }

    #[test]
    fn offset_cells_bypass_prethreshold() {
        let cells = preset_exp1().cells().unwrap();
        let c = &cells[2];
        assert_eq!((c.mu0, c.u, c.v), (Some(3.0), 5.0, 5.0));
    }

    #[test]
    fn schema_errors() {
        let good = preset_exp1().to_toml().unwrap();
        let unknown = good.replace("alpha = 0.1", "alpha = 0.1\nbogus = 1");
        assert!(matches!(
            ExperimentConfig::from_toml(&unknown),
            Err(Error::Config(_))
        ));
        let zero = good.replace("replicates = 2000", "replicates = 0");
        assert!(matches!(
            ExperimentConfig::from_toml(&zero),
            Err(Error::Config(_))
        ));
        let mut cfg = preset_exp1();
        cfg.sweep.mu0.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = preset_exp3();
        cfg.detection.v = None;
        assert!(cfg.validate().is_err());
        let mut cfg = preset_exp1();
        cfg.grid.counts = vec![21, 21];
        assert!(cfg.validate().is_err());
    }
}
