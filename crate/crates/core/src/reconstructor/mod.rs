//! Phase reconstruction by randomized concurrent line integration, wave
//! function assembly, and the inverse lens transform.

mod fill;
mod inverse;

pub use fill::{single_fill, worker_rng, ITERATION_CAP_PER_BIN};
pub use inverse::{inverse_fourier_path, PINV_CUTOFF};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CwsError, Result};
use crate::estimator::{argmax_where, connected_component, GradientField};
use crate::exec;
use crate::lattice::{ComplexField, LatticeSpec, PhysicalConstants};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconParams {
    pub repeats: usize,
    pub fill_gamma: f64,
    pub fill_pmin: f64,
    pub workers: usize,
    pub seed: u64,
}

impl Default for ReconParams {
    fn default() -> Self {
        ReconParams { repeats: 25, fill_gamma: 0.5, fill_pmin: 0.05, workers: 1, seed: 0 }
    }
}

impl ReconParams {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(CwsError::arg("repeats must be at least 1"));
        }
        if !(self.fill_pmin > 0.0 && self.fill_pmin <= 1.0) {
            return Err(CwsError::arg("fill_pmin must lie in (0, 1]"));
        }
        if !(self.fill_gamma >= 0.0) || !self.fill_gamma.is_finite() {
            return Err(CwsError::arg("fill_gamma must be non-negative"));
        }
        Ok(())
    }
}

/// Reconstructed phase with fill statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMap {
    pub spec: LatticeSpec,
    /// Mean phase over repeats, radians; zero outside the mask.
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    pub reference_bin: usize,
    /// Repeats in which each bin was filled.
    pub fill_counts: Vec<u32>,
    /// Standard deviation of the phase across repeats.
    pub dispersion: Vec<f64>,
    pub repeats: usize,
    pub clamp_count: usize,
    pub params: ReconParams,
}

/// Fill probability per bin: `max(pmin, (I / I_max)^gamma)`, or `pmin` on
/// clamped bins.
pub fn fill_probabilities(grad: &GradientField, intensity: &[f64], params: &ReconParams) -> Vec<f64> {
    let max = intensity.iter().zip(&grad.mask).filter(|(_, m)| **m).map(|(v, _)| *v).fold(0.0, f64::max);
    intensity
        .iter()
        .zip(&grad.clamped)
        .map(|(&i, &c)| {
            if c || max <= 0.0 {
                params.fill_pmin
            } else {
                (i.max(0.0) / max).powf(params.fill_gamma).clamp(params.fill_pmin, 1.0)
            }
        })
        .collect()
}

/// Repeats evaluated together when repeats run on the thread pool.
const REPEAT_BATCH: usize = 8;

/// Integrates a gradient field into a phase map, starting from the brightest
/// masked bin and averaging `params.repeats` randomized fills.
pub fn integrate_phase(grad: &GradientField, intensity: &[f64], params: &ReconParams) -> Result<PhaseMap> {
    params.validate()?;
    grad.validate()?;
    let spec = &grad.spec;
    let bins = spec.bins();
    if intensity.len() != bins {
        return Err(CwsError::arg("intensity does not match the lattice"));
    }
    let reference = argmax_where(intensity, &grad.mask).ok_or(CwsError::EmptyRoi)?;
    let reach = connected_component(spec, &grad.mask, reference);
    let unreachable = grad.mask.iter().zip(&reach).filter(|(m, r)| **m && !**r).count();
    if unreachable > 0 {
        return Err(CwsError::DisconnectedRoi { unreachable });
    }
    let probs = fill_probabilities(grad, intensity, params);

    let mut mean = vec![0.0f64; bins];
    let mut m2 = vec![0.0f64; bins];
    let mut fill_counts = vec![0u32; bins];
    let mut done = 0usize;
    let mut absorb = |phase: Vec<f64>| {
        done += 1;
        let n = done as f64;
        for b in 0..bins {
            let v = phase[b];
            if v.is_nan() {
                continue;
            }
            fill_counts[b] += 1;
            let d = v - mean[b];
            mean[b] += d / n;
            m2[b] += d * (v - mean[b]);
        }
    };
    if params.workers > 1 {
        for r in 0..params.repeats {
            absorb(single_fill(grad, &probs, reference, params, r)?);
        }
    } else {
        let mut r = 0;
        while r < params.repeats {
            let batch = REPEAT_BATCH.min(params.repeats - r);
            let fills = exec::map_collect(batch, |i| single_fill(grad, &probs, reference, params, r + i));
            for f in fills {
                absorb(f?);
            }
            r += batch;
        }
    }
    let repeats = params.repeats as f64;
    let values = mean.iter().zip(&grad.mask).map(|(&v, &m)| if m { v } else { 0.0 }).collect();
    let dispersion = m2.iter().zip(&grad.mask).map(|(&v, &m)| if m { (v / repeats).max(0.0).sqrt() } else { 0.0 }).collect();
    Ok(PhaseMap {
        spec: spec.clone(),
        values,
        mask: grad.mask.clone(),
        reference_bin: reference,
        fill_counts,
        dispersion,
        repeats: params.repeats,
        clamp_count: grad.clamp_count(),
        params: *params,
    })
}

/// Reconstructed wave function and the inputs it was built from.
#[derive(Clone, Debug)]
pub struct ReconResult {
    pub wavefunction: ComplexField,
    pub phase: PhaseMap,
    pub amplitude_source: String,
    pub params: ReconParams,
}

/// `A e^{iφ}` on the mask, zero outside.
pub fn assemble_wavefunction(phase: &PhaseMap, amplitude: &[f64]) -> Result<ReconResult> {
    let bins = phase.spec.bins();
    if amplitude.len() != bins {
        return Err(CwsError::arg("amplitude does not match the phase map lattice"));
    }
    if amplitude.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
        return Err(CwsError::arg("amplitude must be finite and non-negative"));
    }
    let values = (0..bins)
        .map(|b| if phase.mask[b] { Complex64::from_polar(amplitude[b], phase.values[b]) } else { Complex64::new(0.0, 0.0) })
        .collect();
    Ok(ReconResult {
        wavefunction: ComplexField::new(phase.spec.clone(), values)?,
        phase: phase.clone(),
        amplitude_source: "sqrt(I_L + I_R)".into(),
        params: phase.params,
    })
}

/// Effective photon mass `h / (c λ)`, kg.
pub fn photon_mass(wavelength: f64, consts: &PhysicalConstants) -> f64 {
    consts.h / (consts.c * wavelength)
}

/// Bohmian velocity `ħ k / m` per gradient component, m/s; zero off the mask.
pub fn bohmian_velocity(grad: &GradientField, wavelength: f64, consts: &PhysicalConstants) -> Result<Vec<Vec<f64>>> {
    if !(wavelength > 0.0) {
        return Err(CwsError::arg("wavelength must be positive"));
    }
    let scale = consts.hbar / photon_mass(wavelength, consts);
    Ok(grad
        .components
        .iter()
        .map(|c| c.iter().zip(&grad.mask).map(|(&k, &m)| if m { scale * k } else { 0.0 }).collect())
        .collect())
}
