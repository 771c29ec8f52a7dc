//! End-to-end runs and the individually rerunnable stages behind the
//! `simulate`, `estimate` and `reconstruct` subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cws_core::estimator::{estimate_gradients, marginalize, recommend_ft, Estimate, FtDecision, FtRecommendation};
use cws_core::forward::{
    fourier_path, joint_intensities, sample_coincidences, CoincidenceData, CoincidenceHistogram, IntensitySet,
    MeasurementAxis, OpticalConfig,
};
use cws_core::io;
use cws_core::lattice::slice_2d;
use cws_core::reconstructor::{assemble_wavefunction, integrate_phase, inverse_fourier_path, PhaseMap};
use cws_core::states::{apply_added_phase, make_gaussian_schell, make_phase_patterned, GaussianSchellParams};
use cws_core::{normalize, ComplexField, LatticeSpec};

use crate::config::{parse_slice, PatternConfig, PipelineConfig, Plane, Seeds, StateConfig};
use crate::error::{ConfigError, PipelineError, Stage, StageExt};
use crate::metrics::{phase_agreement, slice_agreement, PhaseAgreement};
use crate::render::render_complex;

pub const STATE_FILE: &str = "state.cwsf";
pub const CAMERA_STATE_FILE: &str = "camera_state.cwsf";
pub const GRADIENT_FILE: &str = "gradient.cwsg";
pub const AMPLITUDE_FILE: &str = "amplitude.cwsf";
pub const PHASE_FILE: &str = "phase.cwsp";
pub const RECONSTRUCTED_FILE: &str = "reconstructed.cwsf";
pub const RECONSTRUCTED_CAMERA_FILE: &str = "reconstructed_camera.cwsf";

pub fn histogram_file(axis: MeasurementAxis) -> &'static str {
    match axis {
        MeasurementAxis::Kx => "hist_kx.cwsh",
        MeasurementAxis::Ky => "hist_ky.cwsh",
    }
}

fn measurement_axes(spec: &LatticeSpec) -> Vec<MeasurementAxis> {
    if spec.dims_per_photon == 1 {
        vec![MeasurementAxis::Kx]
    } else {
        vec![MeasurementAxis::Kx, MeasurementAxis::Ky]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    /// Relative to the output directory.
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub masked_bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clamp_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_bin: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_fill_count: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_dispersion: Option<f64>,
    /// Reconstructed phase against the known input phase, on bins above 10%
    /// of the peak intensity. Only for runs without a Fourier lens.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_truth: Option<PhaseAgreement>,
    /// Phase of the `ψ(x, y, x, y)` slice against the added pattern.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slice_truth: Option<PhaseAgreement>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: PipelineConfig,
    pub seeds: Seeds,
    pub ft_paths: Vec<bool>,
    pub ft_recommendation: Option<FtRecommendation>,
    pub artifacts: Vec<Artifact>,
    pub summary: Summary,
}

impl Manifest {
    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }
}

/// Which photons pass a Fourier lens, and the recommendation used for `AUTO`.
pub fn resolve_ft(config: &PipelineConfig) -> Result<(Vec<bool>, Option<FtRecommendation>), ConfigError> {
    use crate::config::FtMode;
    let n = config.lattice.n;
    let lens = |on: bool| (0..n).map(|j| on && config.optics.ft_photons.contains(&j)).collect::<Vec<_>>();
    match config.optics.ft {
        FtMode::Fourier => Ok((lens(true), None)),
        FtMode::FourF => Ok((lens(false), None)),
        FtMode::Auto => match config.state.widths() {
            Some((a, b)) => {
                let rec = recommend_ft(a, b, config.optics.wavelength, config.optics.focal_length)
                    .map_err(|e| ConfigError::invalid(format!("ft recommendation: {e}")))?;
                Ok((lens(rec.decision == FtDecision::FourierLens), Some(rec)))
            }
            None => Ok((lens(false), None)),
        },
    }
}

fn pattern(p: &PatternConfig, spec: &LatticeSpec) -> Result<cws_core::states::PhasePattern, PipelineError> {
    Ok(p.build(spec)?)
}

/// Builds and normalizes the input state.
pub fn build_state(config: &PipelineConfig) -> Result<ComplexField, PipelineError> {
    let spec = config.lattice.spec()?;
    let raw = match &config.state {
        StateConfig::GaussianSchell { a, b, added_phase, added_photon, plane } => {
            let params = GaussianSchellParams::new(*a, *b).at(Stage::States)?;
            let gs = make_gaussian_schell(params, &spec).at(Stage::States)?;
            match added_phase {
                Some(p) => apply_added_phase(&gs, &pattern(p, &spec)?, *added_photon, (*plane).into()).at(Stage::States)?,
                None => gs,
            }
        }
        StateConfig::PhasePatterned { a, phi_x, phi_y } => {
            make_phase_patterned(*a, &pattern(phi_x, &spec)?, &pattern(phi_y, &spec)?, &spec).at(Stage::States)?
        }
        StateConfig::Tilted { a, tilts } => {
            let (a, d) = (*a, spec.dims_per_photon);
            let tilts = tilts.clone();
            ComplexField::from_fn(spec.clone(), move |r| {
                let r2: f64 = r.iter().map(|v| v * v).sum();
                let phase: f64 = r.iter().enumerate().map(|(ax, v)| tilts[ax / d][ax % d] * v).sum();
                Complex64::from_polar((-a * r2).exp(), phase)
            })
            .at(Stage::States)?
        }
        StateConfig::Zero => ComplexField::zeros(spec.clone()),
    };
    normalize(&raw).at(Stage::States)
}

/// Input phase on the whole lattice, when the preset defines one in closed
/// form.
pub fn truth_phase(config: &PipelineConfig) -> Result<Option<Vec<f64>>, PipelineError> {
    let spec = config.lattice.spec()?;
    let coords = |b: usize| -> Vec<f64> {
        let c = cws_core::unravel_index(b, &spec).expect("bin in range");
        c.iter().enumerate().map(|(a, &i)| spec.coord(a, i)).collect()
    };
    Ok(match &config.state {
        StateConfig::PhasePatterned { phi_x, phi_y, .. } => {
            let (px, py) = (pattern(phi_x, &spec)?, pattern(phi_y, &spec)?);
            Some(
                (0..spec.bins())
                    .map(|b| {
                        let r = coords(b);
                        px.sample(r[0], r[2]) + py.sample(r[1], r[3])
                    })
                    .collect(),
            )
        }
        StateConfig::Tilted { tilts, .. } => {
            let d = spec.dims_per_photon;
            Some(
                (0..spec.bins())
                    .map(|b| coords(b).iter().enumerate().map(|(ax, v)| tilts[ax / d][ax % d] * v).sum())
                    .collect(),
            )
        }
        _ => None,
    })
}

/// Everything a pipeline run produces, kept in memory.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub optics: OpticalConfig,
    pub recommendation: Option<FtRecommendation>,
    pub state: ComplexField,
    /// The state after the per-path lenses; equal to `state` without FT.
    pub camera_state: ComplexField,
    pub intensities: Vec<IntensitySet>,
    /// Empty for noiseless runs.
    pub histograms: Vec<CoincidenceHistogram>,
    pub estimate: Estimate,
    pub phase: PhaseMap,
    pub camera_reconstruction: ComplexField,
    pub reconstruction: ComplexField,
    /// Per-photon reconstructions from marginal counts alone.
    pub marginals: Vec<ComplexField>,
    pub summary: Summary,
}

fn apply_lenses(state: &ComplexField, optics: &OpticalConfig) -> Result<ComplexField, PipelineError> {
    let mut f = state.clone();
    for (j, &on) in optics.ft_paths.iter().enumerate() {
        if on {
            f = fourier_path(&f, j, optics).at(Stage::Ft)?;
        }
    }
    Ok(f)
}

fn undo_lenses(field: &ComplexField, optics: &OpticalConfig) -> Result<ComplexField, PipelineError> {
    let mut f = field.clone();
    for (j, &on) in optics.ft_paths.iter().enumerate() {
        if on {
            f = inverse_fourier_path(&f, j, optics).at(Stage::InverseFt)?;
        }
    }
    Ok(f)
}

fn simulate_in_memory(
    config: &PipelineConfig,
    sample: bool,
) -> Result<(OpticalConfig, Option<FtRecommendation>, ComplexField, ComplexField, Vec<IntensitySet>, Vec<CoincidenceHistogram>), PipelineError>
{
    config.validate()?;
    let (ft_paths, rec) = resolve_ft(config)?;
    let optics = config.optics.optical(ft_paths)?;
    let state = build_state(config)?;
    let camera = apply_lenses(&state, &optics)?;
    let mut intensities = Vec::new();
    let mut histograms = Vec::new();
    for (k, axis) in measurement_axes(state.spec()).into_iter().enumerate() {
        let set = joint_intensities(&camera, &optics.with_axis(axis)).at(Stage::Forward)?;
        if sample {
            let seed = config.seeds.sampling.wrapping_add(k as u64);
            histograms.push(sample_coincidences(&set, config.totals, seed).at(Stage::Sampling)?);
        }
        intensities.push(set);
    }
    Ok((optics, rec, state, camera, intensities, histograms))
}

fn reconstruct_in_memory(
    config: &PipelineConfig,
    estimate: &Estimate,
    optics: &OpticalConfig,
) -> Result<(PhaseMap, ComplexField, ComplexField), PipelineError> {
    let intensity: Vec<f64> = estimate.amplitude.iter().map(|a| a * a).collect();
    let phase = integrate_phase(&estimate.gradient, &intensity, &config.recon_params()).at(Stage::Reconstruction)?;
    let rec = assemble_wavefunction(&phase, &estimate.amplitude).at(Stage::Reconstruction)?;
    let camera = rec.wavefunction;
    let restored = undo_lenses(&camera, optics)?;
    Ok((phase, camera, restored))
}

fn marginal_reconstructions(
    config: &PipelineConfig,
    data: &[&dyn CoincidenceData],
    optics: &OpticalConfig,
) -> Result<Vec<ComplexField>, PipelineError> {
    let spec = data[0].spec().clone();
    let mut out = Vec::new();
    for j in 0..spec.n {
        let m: Vec<_> = data.iter().map(|d| marginalize(*d, j)).collect::<Result<_, _>>().at(Stage::Estimation)?;
        let refs: Vec<&dyn CoincidenceData> = m.iter().map(|d| d as &dyn CoincidenceData).collect();
        let est = estimate_gradients(&refs, &config.estimator).at(Stage::Estimation)?;
        let single = OpticalConfig { ft_paths: vec![optics.ft_paths[j]], ..optics.clone() };
        let (_, _, restored) = reconstruct_in_memory(config, &est, &single)?;
        out.push(restored);
    }
    Ok(out)
}

fn summarize(config: &PipelineConfig, run: &PipelineRun) -> Result<Summary, PipelineError> {
    let p = &run.phase;
    let mut s = Summary {
        masked_bins: Some(run.estimate.gradient.masked_count()),
        clamp_count: Some(p.clamp_count),
        reference_bin: Some(p.reference_bin),
        min_fill_count: p.fill_counts.iter().zip(&p.mask).filter(|(_, m)| **m).map(|(c, _)| *c).min(),
        max_dispersion: Some(p.dispersion.iter().zip(&p.mask).filter(|(_, m)| **m).map(|(d, _)| *d).fold(0.0, f64::max)),
        phase_truth: None,
        slice_truth: None,
    };
    if !run.optics.ft_paths.iter().any(|&f| f) {
        if let Some(truth) = truth_phase(config)? {
            s.phase_truth = phase_agreement(&p.values, &truth, &p.mask, &run.estimate.intensity, 0.1);
        }
    }
    let spec = run.state.spec();
    if let StateConfig::GaussianSchell { added_phase: Some(pc), plane, .. } = &config.state {
        if spec.n == 2 && spec.dims_per_photon == 2 {
            let axes = parse_slice("x,y,x,y", spec)?;
            let slice = slice_2d(&run.reconstruction, &axes).at(Stage::Render)?;
            let pat = pattern(pc, spec)?;
            let ss = slice.spec();
            let n = ss.axis_len;
            let truth: Vec<f64> = (0..ss.bins())
                .map(|b| {
                    let (u, v) = (ss.coord(0, b / n), ss.coord(1, b % n));
                    match plane {
                        Plane::Xy => pat.sample(u, v),
                        Plane::Yx => pat.sample(v, u),
                    }
                })
                .collect();
            s.slice_truth = slice_agreement(&slice, &truth, 0.1);
        }
    }
    Ok(s)
}

/// Runs every stage without touching the filesystem.
pub fn execute(config: &PipelineConfig) -> Result<PipelineRun, PipelineError> {
    let (optics, recommendation, state, camera_state, intensities, histograms) =
        simulate_in_memory(config, !config.noiseless)?;
    let data: Vec<&dyn CoincidenceData> = if config.noiseless {
        intensities.iter().map(|d| d as &dyn CoincidenceData).collect()
    } else {
        histograms.iter().map(|d| d as &dyn CoincidenceData).collect()
    };
    let estimate = estimate_gradients(&data, &config.estimator).at(Stage::Estimation)?;
    let (phase, camera_reconstruction, reconstruction) = reconstruct_in_memory(config, &estimate, &optics)?;
    let marginals = if config.marginals { marginal_reconstructions(config, &data, &optics)? } else { Vec::new() };
    let mut run = PipelineRun {
        optics,
        recommendation,
        state,
        camera_state,
        intensities,
        histograms,
        estimate,
        phase,
        camera_reconstruction,
        reconstruction,
        marginals,
        summary: Summary::default(),
    };
    run.summary = summarize(config, &run)?;
    Ok(run)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes files into the output directory, remembering each one so a
/// failed run can remove what it already wrote.
struct ArtifactWriter {
    dir: PathBuf,
    written: Vec<PathBuf>,
    artifacts: Vec<Artifact>,
}

impl ArtifactWriter {
    fn new(dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir).map_err(cws_core::CwsError::from).at(Stage::Serialization)?;
        Ok(ArtifactWriter { dir: dir.to_path_buf(), written: Vec::new(), artifacts: Vec::new() })
    }

    fn record(&mut self, name: &str) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        let bytes = fs::read(&path).map_err(cws_core::CwsError::from).at(Stage::Serialization)?;
        self.artifacts.push(Artifact {
            name: name.to_string(),
            path: PathBuf::from(name),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Runs `write` for a binary with a JSON sidecar and records both.
    fn binary(
        &mut self,
        name: &str,
        write: impl FnOnce(&Path) -> cws_core::Result<()>,
    ) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        let side = io::sidecar_path(&path);
        self.written.push(path.clone());
        self.written.push(side.clone());
        write(&path).at(Stage::Serialization)?;
        self.record(name)?;
        self.record(&side.file_name().expect("sidecar has a name").to_string_lossy())
    }

    fn raw(&mut self, name: &str, bytes: &[u8], stage: Stage) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        fs::write(&path, bytes).map_err(cws_core::CwsError::from).at(stage)?;
        self.record(name)
    }

    fn cleanup(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

fn slice_file_name(spec: &str) -> String {
    let body: String = spec
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            ',' => '_',
            '#' => 'i',
            '.' => 'p',
            '-' => 'm',
            '+' => 'P',
            c => c,
        })
        .collect();
    format!("slice_{body}")
}

/// Renders `field` along a slice spec into PPM bytes.
pub fn render_slice(field: &ComplexField, slice: &str, hue_offset: f64, scale: usize) -> Result<Vec<u8>, PipelineError> {
    let axes = parse_slice(slice, field.spec())?;
    let s = slice_2d(field, &axes).at(Stage::Render)?;
    Ok(render_complex(&s, hue_offset).upscale(scale).to_ppm())
}

fn write_renders(
    w: &mut ArtifactWriter,
    config: &PipelineConfig,
    field: &ComplexField,
    prefix: &str,
) -> Result<(), PipelineError> {
    for s in config.slice_specs() {
        let bytes = render_slice(field, &s, config.render.hue_offset, config.render.scale)?;
        w.raw(&format!("{prefix}{}.ppm", slice_file_name(&s)), &bytes, Stage::Render)?;
    }
    Ok(())
}

fn guarded<T>(w: &ArtifactWriter, r: Result<T, PipelineError>) -> Result<T, PipelineError> {
    if r.is_err() {
        w.cleanup();
    }
    r
}

fn finish(
    mut w: ArtifactWriter,
    command: &str,
    manifest_name: &str,
    config: &PipelineConfig,
    ft: (Vec<bool>, Option<FtRecommendation>),
    summary: Summary,
) -> Result<Manifest, PipelineError> {
    let manifest = Manifest {
        command: command.to_string(),
        config: config.clone(),
        seeds: config.seeds,
        ft_paths: ft.0,
        ft_recommendation: ft.1,
        artifacts: std::mem::take(&mut w.artifacts),
        summary,
    };
    let text = serde_json::to_vec_pretty(&manifest).map_err(cws_core::CwsError::from);
    let r = text.at(Stage::Serialization).and_then(|t| {
        let path = w.dir.join(manifest_name);
        w.written.push(path.clone());
        fs::write(path, t).map_err(cws_core::CwsError::from).at(Stage::Serialization)
    });
    guarded(&w, r)?;
    Ok(manifest)
}

fn write_simulation(
    w: &mut ArtifactWriter,
    state: &ComplexField,
    camera: &ComplexField,
    optics: &OpticalConfig,
    histograms: &[CoincidenceHistogram],
) -> Result<(), PipelineError> {
    w.binary(STATE_FILE, |p| io::write_field(p, state, "input state"))?;
    if optics.ft_paths.iter().any(|&f| f) {
        w.binary(CAMERA_STATE_FILE, |p| io::write_field(p, camera, "state after the per-path lenses"))?;
    }
    for h in histograms {
        let opt = optics.with_axis(h.measurement.axis);
        w.binary(histogram_file(h.measurement.axis), |p| io::write_histogram(p, h, Some(&opt)))?;
    }
    Ok(())
}

fn write_estimate(w: &mut ArtifactWriter, est: &Estimate) -> Result<(), PipelineError> {
    w.binary(GRADIENT_FILE, |p| io::write_gradient(p, &est.gradient))?;
    let spec = est.gradient.spec.clone();
    let amp = ComplexField::new(spec, est.amplitude.iter().map(|&a| Complex64::new(a, 0.0)).collect())
        .at(Stage::Serialization)?;
    w.binary(AMPLITUDE_FILE, |p| io::write_field(p, &amp, "amplitude estimate sqrt(I_L + I_R)"))
}

fn write_reconstruction(
    w: &mut ArtifactWriter,
    config: &PipelineConfig,
    phase: &PhaseMap,
    camera: &ComplexField,
    restored: &ComplexField,
    optics: &OpticalConfig,
) -> Result<(), PipelineError> {
    w.binary(PHASE_FILE, |p| io::write_phase(p, phase))?;
    if optics.ft_paths.iter().any(|&f| f) {
        w.binary(RECONSTRUCTED_CAMERA_FILE, |p| io::write_field(p, camera, "reconstruction in the camera plane"))?;
    }
    w.binary(RECONSTRUCTED_FILE, |p| io::write_field(p, restored, "reconstructed wave function"))?;
    write_renders(w, config, restored, "")
}

/// Full pipeline: runs every stage, then writes all artifacts and
/// `manifest.json` into the output directory.
pub fn run_pipeline(config: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let run = execute(config)?;
    let mut w = ArtifactWriter::new(&config.output_dir)?;
    let r = (|| {
        write_simulation(&mut w, &run.state, &run.camera_state, &run.optics, &run.histograms)?;
        write_estimate(&mut w, &run.estimate)?;
        write_reconstruction(&mut w, config, &run.phase, &run.camera_reconstruction, &run.reconstruction, &run.optics)?;
        for (j, m) in run.marginals.iter().enumerate() {
            let name = format!("marginal_p{j}.cwsf");
            w.binary(&name, |p| io::write_field(p, m, "reconstruction from marginal counts"))?;
            let slice = if m.spec().axes() == 2 { Some(render_slice(m, "x,y", config.render.hue_offset, config.render.scale)?) } else { None };
            if let Some(bytes) = slice {
                w.raw(&format!("marginal_p{j}.ppm"), &bytes, Stage::Render)?;
            }
        }
        Ok(())
    })();
    guarded(&w, r)?;
    finish(w, "pipeline", "manifest.json", config, (run.optics.ft_paths.clone(), run.recommendation), run.summary)
}

/// States, lenses, forward model and sampling; writes the input state and
/// the coincidence histograms.
pub fn simulate(config: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let (optics, rec, state, camera, _, histograms) = simulate_in_memory(config, true)?;
    let mut w = ArtifactWriter::new(&config.output_dir)?;
    let r = write_simulation(&mut w, &state, &camera, &optics, &histograms);
    guarded(&w, r)?;
    finish(w, "simulate", "manifest.simulate.json", config, (optics.ft_paths, rec), Summary::default())
}

/// Gradient and amplitude estimation from histogram files.
pub fn estimate(config: &PipelineConfig, histograms: &[PathBuf]) -> Result<Manifest, PipelineError> {
    config.validate()?;
    let hs: Vec<CoincidenceHistogram> =
        histograms.iter().map(|p| io::read_histogram(p)).collect::<Result<_, _>>().at(Stage::Serialization)?;
    let refs: Vec<&dyn CoincidenceData> = hs.iter().map(|h| h as &dyn CoincidenceData).collect();
    let est = estimate_gradients(&refs, &config.estimator).at(Stage::Estimation)?;
    let mut w = ArtifactWriter::new(&config.output_dir)?;
    let r = write_estimate(&mut w, &est);
    guarded(&w, r)?;
    let summary = Summary {
        masked_bins: Some(est.gradient.masked_count()),
        clamp_count: Some(est.gradient.clamp_count()),
        ..Summary::default()
    };
    finish(w, "estimate", "manifest.estimate.json", config, resolve_ft(config)?, summary)
}

/// Phase integration, assembly and inverse lens transform from a gradient
/// file and an amplitude file.
pub fn reconstruct(config: &PipelineConfig, gradient: &Path, amplitude: &Path) -> Result<Manifest, PipelineError> {
    config.validate()?;
    let grad = io::read_gradient(gradient).at(Stage::Serialization)?;
    let amp = io::read_field(amplitude).at(Stage::Serialization)?;
    if !amp.spec().same_grid(&grad.spec) {
        return Err(PipelineError::Stage {
            stage: Stage::Reconstruction,
            source: cws_core::CwsError::Format("amplitude and gradient lattices differ".into()),
        });
    }
    let (ft_paths, rec) = resolve_ft(config)?;
    if ft_paths.len() != grad.spec.n {
        return Err(ConfigError::invalid("config photon count differs from the gradient file").into());
    }
    let optics = config.optics.optical(ft_paths)?;
    let estimate = Estimate {
        amplitude: amp.values().iter().map(|v| v.re).collect(),
        intensity: amp.values().iter().map(|v| v.re * v.re).collect(),
        gradient: grad,
        raw: Vec::new(),
    };
    let (phase, camera, restored) = reconstruct_in_memory(config, &estimate, &optics)?;
    let mut w = ArtifactWriter::new(&config.output_dir)?;
    let r = write_reconstruction(&mut w, config, &phase, &camera, &restored, &optics);
    guarded(&w, r)?;
    let summary = Summary {
        masked_bins: Some(estimate.gradient.masked_count()),
        clamp_count: Some(phase.clamp_count),
        reference_bin: Some(phase.reference_bin),
        ..Summary::default()
    };
    finish(w, "reconstruct", "manifest.reconstruct.json", config, (optics.ft_paths, rec), summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{load_config, FtMode};

    #[test]
    fn auto_ft_follows_the_recommendation() {
        let cfg = PipelineConfig::default();
        let (paths, rec) = resolve_ft(&cfg).unwrap();
        assert_eq!(paths, vec![true, false]);
        assert_eq!(rec.unwrap().decision, FtDecision::FourierLens);
        let cfg = load_config(None, &["state.b=0".into()], None).unwrap();
        assert_eq!(resolve_ft(&cfg).unwrap().0, vec![false, false]);
    }

    #[test]
    fn explicit_ft_modes() {
        let mut cfg = PipelineConfig::default();
        cfg.optics.ft = FtMode::FourF;
        assert_eq!(resolve_ft(&cfg).unwrap().0, vec![false, false]);
        cfg.optics.ft = FtMode::Fourier;
        cfg.optics.ft_photons = vec![0, 1];
        assert_eq!(resolve_ft(&cfg).unwrap().0, vec![true, true]);
    }

    #[test]
    fn zero_preset_fails_in_states() {
        let cfg = load_config(None, &[r#"state={"preset":"zero"}"#.into(), "lattice.axis_len=4".into()], None).unwrap();
        let err = execute(&cfg).unwrap_err();
        assert_eq!(err.stage(), Some(Stage::States));
        assert!(matches!(err, PipelineError::Stage { source: cws_core::CwsError::DegenerateField, .. }));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn slice_names_are_filesystem_safe() {
        assert_eq!(slice_file_name("x, 0, y, #3"), "slice_x_0_y_i3");
        assert_eq!(slice_file_name("x,-1e-4,y,0"), "slice_x_m1em4_y_0");
    }

    #[test]
    fn tilted_truth_is_linear_in_coordinates() {
        let o = r#"state={"preset":"tilted","a":1e6,"tilts":[[1000,0],[0,-2000]]}"#;
        let cfg = load_config(None, &[o.into(), "lattice.axis_len=4".into()], None).unwrap();
        let spec = cfg.lattice.spec().unwrap();
        let t = truth_phase(&cfg).unwrap().unwrap();
        let b = cws_core::linear_index(&[3, 0, 0, 1], &spec).unwrap();
        assert!((t[b] - (1000.0 * spec.coord(0, 3) - 2000.0 * spec.coord(3, 1))).abs() < 1e-12);
    }
}
