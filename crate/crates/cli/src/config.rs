//! Pipeline configuration: a single JSON document with dotted-path overrides.

use std::path::{Path, PathBuf};

use cws_core::estimator::EstimatorParams;
use cws_core::forward::{MeasurementAxis, OpticalConfig};
use cws_core::reconstructor::ReconParams;
use cws_core::states::{presets, GrayImage, PatternExtent, PhasePattern, PlaneAxes};
use cws_core::lattice::SliceAxis;
use cws_core::LatticeSpec;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ConfigError;

fn default_samples() -> usize {
    257
}

fn two_pi() -> f64 {
    std::f64::consts::TAU
}

/// A 2D phase pattern over the plane of two lattice axes, radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatternKind {
    Zero,
    Constant { value: f64 },
    /// `alpha · u · v`, rad/m².
    Bilinear { alpha: f64 },
    /// `q[0] · u + q[1] · v`, rad/m.
    Tilt { q: [f64; 2] },
    GaussianBump { amplitude: f64, center: [f64; 2], sigma: f64 },
    TiltBump { q: [f64; 2], amplitude: f64, center: [f64; 2], sigma: f64 },
    Checkerboard { amplitude: f64, period: f64 },
    /// Grayscale PGM mapped linearly onto `[0, span]`.
    Image {
        path: PathBuf,
        #[serde(default = "two_pi")]
        span: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternConfig {
    #[serde(flatten)]
    pub kind: PatternKind,
    /// Side of the square the pattern covers, m; defaults to the lattice side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl PatternConfig {
    pub fn new(kind: PatternKind) -> Self {
        PatternConfig { kind, extent: None, samples: default_samples() }
    }

    pub fn build(&self, spec: &LatticeSpec) -> Result<PhasePattern, ConfigError> {
        let side = self.extent.unwrap_or(spec.axis_len as f64 * spec.pitch);
        if !(side > 0.0) || !side.is_finite() {
            return Err(ConfigError::invalid("pattern extent must be positive"));
        }
        let ext = PatternExtent::centered(side);
        let s = self.samples;
        let built = match &self.kind {
            PatternKind::Zero => Ok(PhasePattern::zero()),
            PatternKind::Constant { value } => Ok(PhasePattern::constant(*value)),
            PatternKind::Bilinear { alpha } => presets::bilinear(*alpha, ext, s),
            PatternKind::Tilt { q } => presets::tilt(q[0], q[1], ext, s),
            PatternKind::GaussianBump { amplitude, center, sigma } => {
                presets::gaussian_bump(*amplitude, (center[0], center[1]), *sigma, ext, s)
            }
            PatternKind::TiltBump { q, amplitude, center, sigma } => {
                presets::tilt_bump((q[0], q[1]), *amplitude, (center[0], center[1]), *sigma, ext, s)
            }
            PatternKind::Checkerboard { amplitude, period } => presets::checkerboard(*amplitude, *period, ext, s),
            PatternKind::Image { path, span } => {
                let img = read_image(path)?;
                cws_core::states::load_phase_pattern(&img, *span, side)
            }
        };
        built.map_err(|e| ConfigError::invalid(format!("pattern: {e}")))
    }

    fn check_files(&self) -> Result<(), ConfigError> {
        if let PatternKind::Image { path, .. } = &self.kind {
            if !path.is_file() {
                return Err(ConfigError::MissingFile(path.clone()));
            }
        }
        Ok(())
    }
}

fn read_image(path: &Path) -> Result<GrayImage, ConfigError> {
    let bytes = std::fs::read(path).map_err(|_| ConfigError::MissingFile(path.to_path_buf()))?;
    cws_core::states::read_pgm(&bytes).map_err(|e| ConfigError::invalid(format!("{}: {e}", path.display())))
}

fn default_added_photon() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    #[default]
    Xy,
    Yx,
}

impl From<Plane> for PlaneAxes {
    fn from(p: Plane) -> Self {
        match p {
            Plane::Xy => PlaneAxes::Xy,
            Plane::Yx => PlaneAxes::Yx,
        }
    }
}

/// Input state presets. Widths are in m⁻², tilts in rad/m.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateConfig {
    GaussianSchell {
        a: f64,
        b: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        added_phase: Option<PatternConfig>,
        #[serde(default = "default_added_photon")]
        added_photon: usize,
        #[serde(default)]
        plane: Plane,
    },
    PhasePatterned {
        a: f64,
        phi_x: PatternConfig,
        phi_y: PatternConfig,
    },
    /// `exp(-a Σ|r_j|²)` times a plane wave per photon; `tilts[j]` holds
    /// `(q_x, q_y)` of photon `j`.
    Tilted {
        a: f64,
        tilts: Vec<[f64; 2]>,
    },
    Zero,
}

impl StateConfig {
    /// `(a, b)` of the Gaussian envelope, when the preset has one.
    pub fn widths(&self) -> Option<(f64, f64)> {
        match *self {
            StateConfig::GaussianSchell { a, b, .. } => Some((a, b)),
            StateConfig::PhasePatterned { a, .. } | StateConfig::Tilted { a, .. } => Some((a, 0.0)),
            StateConfig::Zero => None,
        }
    }

    fn patterns(&self) -> Vec<&PatternConfig> {
        match self {
            StateConfig::GaussianSchell { added_phase, .. } => added_phase.iter().collect(),
            StateConfig::PhasePatterned { phi_x, phi_y, .. } => vec![phi_x, phi_y],
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub n: usize,
    pub dims_per_photon: usize,
    pub axis_len: usize,
    pub pitch: f64,
}

impl LatticeConfig {
    pub fn spec(&self) -> Result<LatticeSpec, ConfigError> {
        LatticeSpec::new(self.n, self.dims_per_photon, self.axis_len, self.pitch)
            .map_err(|e| ConfigError::invalid(format!("lattice: {e}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FtMode {
    #[default]
    Auto,
    Fourier,
    FourF,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticsConfig {
    pub wavelength: f64,
    pub focal_length: f64,
    pub displacement: f64,
    pub ft: FtMode,
    /// Photons that receive the Fourier lens when one is used.
    pub ft_photons: Vec<usize>,
}

impl OpticsConfig {
    pub fn optical(&self, ft_paths: Vec<bool>) -> Result<OpticalConfig, ConfigError> {
        OpticalConfig::new(self.wavelength, self.focal_length, self.displacement, MeasurementAxis::Kx, ft_paths)
            .map_err(|e| ConfigError::invalid(format!("optics: {e}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub sampling: u64,
    pub recon: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticMask {
    #[default]
    Full,
    Disconnected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    /// Mask used by the integrator check.
    pub synthetic_mask: SyntheticMask,
    /// Largest axis length used by the direct-DFT comparison.
    pub oracle_axis_len: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig { synthetic_mask: SyntheticMask::Full, oracle_axis_len: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub hue_offset: f64,
    /// Nearest-neighbour upscaling factor.
    pub scale: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { hue_offset: 0.0, scale: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub state: StateConfig,
    pub lattice: LatticeConfig,
    pub optics: OpticsConfig,
    /// Coincidences sampled per measurement.
    pub totals: u64,
    /// Estimate from the exact probabilities instead of sampled counts.
    #[serde(default)]
    pub noiseless: bool,
    #[serde(default)]
    pub estimator: EstimatorParams,
    #[serde(default)]
    pub recon: ReconParams,
    pub seeds: Seeds,
    pub output_dir: PathBuf,
    /// Slice specs such as `"x,y,x,y"`; `None` picks a default set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slices: Option<Vec<String>>,
    /// Also reconstruct each photon from its marginal counts.
    #[serde(default)]
    pub marginals: bool,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            state: StateConfig::GaussianSchell { a: 1e6, b: 1e9, added_phase: None, added_photon: 1, plane: Plane::Xy },
            lattice: LatticeConfig { n: 2, dims_per_photon: 2, axis_len: 32, pitch: 25e-6 },
            optics: OpticsConfig {
                wavelength: 800e-9,
                focal_length: 0.2,
                displacement: 25e-6,
                ft: FtMode::Auto,
                ft_photons: vec![0],
            },
            totals: 10_000_000,
            noiseless: false,
            estimator: EstimatorParams::default(),
            recon: ReconParams::default(),
            seeds: Seeds { sampling: 1, recon: 2 },
            output_dir: PathBuf::from("cws_out"),
            slices: None,
            marginals: false,
            render: RenderConfig::default(),
            validate: ValidateConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Checks everything that can be checked without running a stage.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.totals < 1 {
            return Err(ConfigError::invalid("totals must be at least 1"));
        }
        let spec = self.lattice.spec()?;
        self.optics.optical(vec![false; spec.n])?;
        self.estimator.validate().map_err(|e| ConfigError::invalid(format!("estimator: {e}")))?;
        self.recon_params().validate().map_err(|e| ConfigError::invalid(format!("recon: {e}")))?;
        if let Some(&j) = self.optics.ft_photons.iter().find(|&&j| j >= spec.n) {
            return Err(ConfigError::invalid(format!("ft_photons entry {j} out of range")));
        }
        match &self.state {
            StateConfig::GaussianSchell { a, b, added_photon, .. } => {
                if !(*a > 0.0 && *b >= 0.0) {
                    return Err(ConfigError::invalid("gaussian_schell needs a > 0 and b >= 0"));
                }
                if *added_photon >= spec.n {
                    return Err(ConfigError::invalid("added_photon out of range"));
                }
            }
            StateConfig::PhasePatterned { a, .. } => {
                if !(*a > 0.0) {
                    return Err(ConfigError::invalid("phase_patterned needs a > 0"));
                }
            }
            StateConfig::Tilted { a, tilts } => {
                if !(*a > 0.0) || tilts.len() != spec.n {
                    return Err(ConfigError::invalid("tilted needs a > 0 and one tilt per photon"));
                }
            }
            StateConfig::Zero => {}
        }
        for p in self.state.patterns() {
            p.check_files()?;
        }
        if self.render.scale == 0 {
            return Err(ConfigError::invalid("render.scale must be at least 1"));
        }
        for s in self.slice_specs() {
            parse_slice(&s, &spec)?;
        }
        Ok(())
    }

    pub fn recon_params(&self) -> ReconParams {
        ReconParams { seed: self.seeds.recon, ..self.recon }
    }

    pub fn slice_specs(&self) -> Vec<String> {
        if let Some(s) = &self.slices {
            return s.clone();
        }
        match (self.lattice.n, self.lattice.dims_per_photon) {
            (2, 2) => vec!["x,y,x,y".into(), "x,0,y,0".into(), "0,x,0,y".into()],
            (2, 1) => vec!["x,y".into()],
            (n, 1) if n > 2 => {
                let mut v = vec!["x".to_string(), "y".to_string()];
                v.extend(std::iter::repeat_n("0".to_string(), n - 2));
                vec![v.join(",")]
            }
            _ => Vec::new(),
        }
    }
}

/// Parses a slice spec: one comma-separated token per lattice axis. `x` and
/// `y` follow the image axes, a number fixes the axis at that coordinate in
/// metres, and `#k` fixes it at index `k`.
pub fn parse_slice(text: &str, spec: &LatticeSpec) -> Result<Vec<SliceAxis>, ConfigError> {
    let tokens: Vec<&str> = text.split(',').map(str::trim).collect();
    if tokens.len() != spec.axes() {
        return Err(ConfigError::invalid(format!("slice {text:?} needs {} entries", spec.axes())));
    }
    let mut out = Vec::with_capacity(tokens.len());
    for (a, t) in tokens.iter().enumerate() {
        let axis = match *t {
            "x" => SliceAxis::Free(0),
            "y" => SliceAxis::Free(1),
            t if t.starts_with('#') => {
                let k: usize = t[1..].parse().map_err(|_| ConfigError::invalid(format!("bad index {t:?}")))?;
                if k >= spec.axis_len {
                    return Err(ConfigError::invalid(format!("index {k} outside the lattice")));
                }
                SliceAxis::Fixed(k)
            }
            t => {
                let x: f64 = t.parse().map_err(|_| ConfigError::invalid(format!("bad slice token {t:?}")))?;
                let k = spec
                    .nearest_index(a, x)
                    .ok_or_else(|| ConfigError::invalid(format!("coordinate {x} outside the lattice")))?;
                SliceAxis::Fixed(k)
            }
        };
        out.push(axis);
    }
    if !out.contains(&SliceAxis::Free(0)) || !out.contains(&SliceAxis::Free(1)) {
        return Err(ConfigError::invalid(format!("slice {text:?} must use both x and y")));
    }
    Ok(out)
}

/// Recursively merges `patch` into `base`. Tagged objects whose tag changes
/// are replaced rather than merged.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            let retag = ["preset", "kind"].iter().any(|k| p.get(*k).is_some_and(|v| b.get(*k) != Some(v)));
            if retag {
                *b = p;
                return;
            }
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// Applies `path=value`; the value is parsed as JSON and falls back to a
/// plain string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::invalid(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut patch = value;
    for key in path.split('.').rev() {
        if key.is_empty() {
            return Err(ConfigError::invalid(format!("empty key in {path:?}")));
        }
        let mut obj = serde_json::Map::new();
        obj.insert(key.to_string(), patch);
        patch = Value::Object(obj);
    }
    merge(doc, patch);
    Ok(())
}

/// Defaults, then the JSON file, then each override in order, then the
/// worker override.
pub fn load_config(
    file: Option<&Path>,
    overrides: &[String],
    workers: Option<usize>,
) -> Result<PipelineConfig, ConfigError> {
    let mut doc = serde_json::to_value(PipelineConfig::default()).expect("default config serializes");
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|_| ConfigError::MissingFile(path.to_path_buf()))?;
        let patch: Value = serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        merge(&mut doc, patch);
    }
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let mut cfg: PipelineConfig = serde_json::from_value(doc).map_err(|e| ConfigError::Parse(e.to_string()))?;
    if let Some(w) = workers {
        cfg.recon.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads `CWS_WORKERS`, if set.
pub fn workers_from_env() -> Result<Option<usize>, ConfigError> {
    match std::env::var("CWS_WORKERS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&w| w >= 1)
            .map(Some)
            .ok_or_else(|| ConfigError::invalid(format!("CWS_WORKERS={v:?} is not a positive integer"))),
        Err(_) => Ok(None),
    }
}
