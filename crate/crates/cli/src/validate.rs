//! Oracle cross-checks sized to a configuration.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use cws_core::estimator::{estimate_gradients, recommend_ft, GradientField};
use cws_core::forward::{fourier_path, joint_intensities, sample_coincidences, MeasurementAxis, OpticalConfig};
use cws_core::oracle::{dft_direct, weak_value_momentum};
use cws_core::reconstructor::integrate_phase;
use cws_core::{linear_index, unravel_index, ComplexField, CwsError, LatticeSpec, PhysicalConstants};

use crate::config::{PipelineConfig, StateConfig, SyntheticMask};
use crate::pipeline::{build_state, resolve_ft};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub measured: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

impl Check {
    fn new(name: &str, status: CheckStatus, measured: Option<f64>, threshold: Option<f64>, detail: String) -> Self {
        Check { name: name.into(), status, measured, threshold, detail }
    }

    /// Passes when `measured < threshold`.
    fn below(name: &str, measured: f64, threshold: f64, detail: impl Into<String>) -> Self {
        let status = if measured < threshold { CheckStatus::Pass } else { CheckStatus::Fail };
        Check::new(name, status, Some(measured), Some(threshold), detail.into())
    }

    fn error(name: &str, e: &CwsError) -> Self {
        Check::new(name, CheckStatus::Fail, None, None, describe(e))
    }
}

fn describe(e: &CwsError) -> String {
    let kind = match e {
        CwsError::Index { .. } => "IndexError",
        CwsError::Argument(_) => "ArgumentError",
        CwsError::DegenerateField => "DegenerateFieldError",
        CwsError::Coverage(_) => "CoverageError",
        CwsError::Format(_) => "FormatError",
        CwsError::GridMismatch { .. } => "GridMismatchError",
        CwsError::DegenerateDistribution => "DegenerateDistributionError",
        CwsError::EmptyRoi => "EmptyRoiError",
        CwsError::DisconnectedRoi { .. } => "DisconnectedRoiError",
        CwsError::Convergence { .. } => "ConvergenceError",
        CwsError::ZeroAmplitude { .. } => "ZeroAmplitudeError",
        CwsError::Degenerate(_) => "DegenerateError",
        CwsError::Io(_) => "IoError",
        CwsError::Json(_) => "JsonError",
    };
    format!("{kind}: {e}")
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    /// True when no check failed; warnings do not count.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                let status = match c.status {
                    CheckStatus::Pass => "PASS",
                    CheckStatus::Warn => "WARN",
                    CheckStatus::Fail => "FAIL",
                };
                let m = c.measured.map_or(String::new(), |v| format!(" measured={v:.4e}"));
                let t = c.threshold.map_or(String::new(), |v| format!(" threshold={v:.4e}"));
                format!("{status} {}{m}{t} {}", c.name, c.detail)
            })
            .collect()
    }
}

fn small_spec(config: &PipelineConfig, cap: usize) -> Result<LatticeSpec, CwsError> {
    let l = &config.lattice;
    LatticeSpec::new(l.n, l.dims_per_photon, l.axis_len.min(cap).max(2), l.pitch)
}

fn pseudo_random_field(spec: &LatticeSpec) -> Result<ComplexField, CwsError> {
    let values = (0..spec.bins())
        .map(|b| {
            let t = b as f64;
            Complex64::new((t * 0.7548776662).fract() - 0.5, (t * 0.5698402910).fract() - 0.5)
        })
        .collect();
    ComplexField::new(spec.clone(), values)
}

fn check_indexing(config: &PipelineConfig) -> Check {
    let name = "index_roundtrip";
    let spec = match config.lattice.spec() {
        Ok(s) => s,
        Err(e) => return Check::new(name, CheckStatus::Fail, None, None, e.to_string()),
    };
    let step = (spec.bins() / 4096).max(1);
    let mut bad = 0usize;
    let mut tested = 0usize;
    for b in (0..spec.bins()).step_by(step) {
        tested += 1;
        let ok = unravel_index(b, &spec).and_then(|c| linear_index(&c, &spec)).is_ok_and(|back| back == b);
        bad += usize::from(!ok);
    }
    Check::below(name, bad as f64, 0.5, format!("{tested} bins"))
}

fn check_normalization(config: &PipelineConfig) -> Check {
    let name = "state_normalization";
    match build_state(config) {
        Ok(f) => {
            let norm = f.norm_sqr();
            Check::below(name, (norm - 1.0).abs(), 1e-12, "sum |psi|^2 dV")
        }
        Err(crate::PipelineError::Stage { source, .. }) => Check::error(name, &source),
        Err(e) => Check::new(name, CheckStatus::Fail, None, None, e.to_string()),
    }
}

fn check_fourier(config: &PipelineConfig) -> Check {
    let name = "fourier_vs_direct_sum";
    let run = || -> Result<f64, CwsError> {
        let spec = small_spec(config, config.validate.oracle_axis_len)?;
        let field = pseudo_random_field(&spec)?;
        let cfg = OpticalConfig::new(
            config.optics.wavelength,
            config.optics.focal_length,
            config.optics.displacement,
            MeasurementAxis::Kx,
            vec![false; spec.n],
        )?;
        let mut worst: f64 = 0.0;
        for j in 0..spec.n {
            let fast = fourier_path(&field, j, &cfg)?;
            let slow = dft_direct(&field, j, &cfg)?;
            let num: f64 = fast.values().iter().zip(slow.values()).map(|(a, b)| (a - b).norm_sqr()).sum();
            let den: f64 = slow.values().iter().map(|v| v.norm_sqr()).sum();
            worst = worst.max((num / den).sqrt());
        }
        Ok(worst)
    };
    match run() {
        Ok(v) => Check::below(name, v, 1e-10, "relative L2, every photon"),
        Err(e) => Check::error(name, &e),
    }
}

/// Photon 0 carries a plane wave `exp(i k0 x)` with flat amplitude; every
/// other photon a broad Gaussian.
fn tilt_state(spec: &LatticeSpec, k0: f64) -> Result<ComplexField, CwsError> {
    let side = spec.axis_len as f64 * spec.pitch;
    let a = 1.0 / (side * side);
    let d = spec.dims_per_photon;
    ComplexField::from_fn(spec.clone(), move |r| {
        let others: f64 = r[d..].iter().map(|v| v * v).sum();
        Complex64::from_polar((-a * others).exp(), k0 * r[0])
    })
}

fn check_tilt(config: &PipelineConfig, out: &mut Vec<Check>) {
    let l = config.optics.displacement;
    let k0 = 0.25 / l;
    let run = || -> Result<(f64, f64, bool, f64), CwsError> {
        let spec = small_spec(config, 16)?;
        let psi = tilt_state(&spec, k0)?;
        let cfg = OpticalConfig::new(
            config.optics.wavelength,
            config.optics.focal_length,
            l,
            MeasurementAxis::Kx,
            vec![false; spec.n],
        )?;
        let axes: &[MeasurementAxis] =
            if spec.dims_per_photon == 1 { &[MeasurementAxis::Kx] } else { &[MeasurementAxis::Kx, MeasurementAxis::Ky] };
        let sets = axes.iter().map(|&ax| joint_intensities(&psi, &cfg.with_axis(ax))).collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&dyn cws_core::forward::CoincidenceData> = sets.iter().map(|s| s as _).collect();
        let est = estimate_gradients(&refs, &Default::default())?;
        let g = &est.gradient;
        let ax = spec.axis_of(0, 0);
        let worst = (0..spec.bins())
            .filter(|&b| g.mask[b])
            .map(|b| (g.components[ax][b] - k0).abs() / k0)
            .fold(0.0, f64::max);

        let total = config.totals.min(1_000_000);
        let seed = config.seeds.sampling;
        let h1 = sample_coincidences(&sets[0], total, seed)?;
        let h2 = sample_coincidences(&sets[0], total, seed)?;
        let same = h1.counts == h2.counts && h1.counts.iter().sum::<u64>() == total;

        let center = spec.center_coords();
        let wv = weak_value_momentum(&psi, &center, 0, 0)?;
        let hbar = PhysicalConstants::default().hbar;
        let wv_err = (wv.re / hbar - k0).abs() / k0;
        Ok((worst, g.masked_count() as f64, same, wv_err))
    };
    match run() {
        Ok((worst, masked, same, wv_err)) => {
            out.push(Check::below("tilt_gradient_recovery", worst, 5e-3, format!("k0={k0:.4e} rad/m over {masked} masked bins")));
            let status = if same { CheckStatus::Pass } else { CheckStatus::Fail };
            out.push(Check::new("sampling_determinism", status, None, None, "same seed gives identical counts summing to the total".into()));
            out.push(Check::below("weak_value_tilt", wv_err, 1e-3, "Re weak value / hbar vs k0"));
        }
        Err(e) => out.push(Check::error("tilt_gradient_recovery", &e)),
    }
}

fn synthetic_mask(spec: &LatticeSpec, kind: SyntheticMask) -> Vec<bool> {
    let half = spec.axis_len / 2;
    (0..spec.bins())
        .map(|b| match kind {
            SyntheticMask::Full => true,
            SyntheticMask::Disconnected => (b / spec.stride(0)) % spec.axis_len != half,
        })
        .collect()
}

fn check_integrator(config: &PipelineConfig) -> Check {
    let name = "integrator_exactness";
    let run = || -> Result<f64, CwsError> {
        let spec = small_spec(config, 8)?;
        let axes = spec.axes();
        let phase: Vec<f64> = (0..spec.bins())
            .map(|b| {
                let c = unravel_index(b, &spec).expect("bin in range");
                (0..axes)
                    .map(|a| 0.05 * (a + 1) as f64 * c[a] as f64 + 0.01 * (c[a] * c[(a + 1) % axes]) as f64)
                    .sum()
            })
            .collect();
        let mask = synthetic_mask(&spec, config.validate.synthetic_mask);
        let grad = GradientField::from_phase(&spec, &phase, mask)?;
        let intensity = vec![1.0; spec.bins()];
        let mut params = config.recon_params();
        params.repeats = params.repeats.min(3);
        let p = integrate_phase(&grad, &intensity, &params)?;
        let r = p.reference_bin;
        let (mut sum, mut count) = (0.0, 0usize);
        for b in 0..spec.bins() {
            if p.mask[b] {
                sum += (p.values[b] - (phase[b] - phase[r])).powi(2);
                count += 1;
            }
        }
        Ok((sum / count as f64).sqrt())
    };
    match run() {
        Ok(v) => Check::below(name, v, 1e-9, "RMS against the known phase"),
        Err(e) => Check::error(name, &e),
    }
}

fn check_ft_widths(config: &PipelineConfig) -> Check {
    let name = "ft_width_equality";
    let (lambda, f) = (config.optics.wavelength, config.optics.focal_length);
    let threshold = std::f64::consts::PI / (lambda * f);
    match recommend_ft(0.5 * threshold, 0.5 * threshold, lambda, f) {
        Ok(r) => {
            let rel = (r.position_fwhm - r.fourier_fwhm).abs() / r.position_fwhm;
            Check::below(name, rel, 1e-12, format!("FWHM {:.4e} m at a+b={:.4e} m^-2", r.position_fwhm, r.threshold_sum))
        }
        Err(e) => Check::error(name, &e),
    }
}

fn check_weak_condition(config: &PipelineConfig, out: &mut Vec<Check>) {
    let StateConfig::GaussianSchell { b, .. } = config.state else { return };
    if !(b > 0.0) {
        return;
    }
    let Ok((ft, _)) = resolve_ft(config) else { return };
    let limit = (2.0 / b).sqrt();
    let l = config.optics.displacement;
    for (j, &lens) in ft.iter().enumerate() {
        if lens {
            continue;
        }
        let status = if l > limit { CheckStatus::Warn } else { CheckStatus::Pass };
        let detail = if l > limit {
            format!("photon {j} without Fourier lens: displacement exceeds sqrt(2/b), weak-measurement condition violated")
        } else {
            format!("photon {j} without Fourier lens")
        };
        out.push(Check::new(&format!("weak_measurement_p{j}"), status, Some(l), Some(limit), detail));
    }
}

/// Runs every check; failures become report entries rather than errors.
pub fn validate(config: &PipelineConfig) -> Report {
    let mut checks = vec![check_indexing(config), check_normalization(config), check_fourier(config)];
    check_tilt(config, &mut checks);
    checks.push(check_integrator(config));
    checks.push(check_ft_widths(config));
    check_weak_condition(config, &mut checks);
    Report { checks }
}
