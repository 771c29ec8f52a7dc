//! Optical forward model of the coincidence wavefront sensor: Fourier lens,
//! Savart-plate displacements, polarization-resolved joint intensities, and
//! Monte Carlo coincidence counting.

mod displace;
mod fourier;
mod marginal;
mod sampling;

pub use displace::{displaced_fields, displacement_offsets, joint_intensities};
pub use fourier::{apply_axis_transform, fourier_path, lens_kernel_matrix, LensTransform};
pub use marginal::marginal_intensity_exact;
pub use sampling::sample_coincidences;

use serde::{Deserialize, Serialize};

use crate::error::{CwsError, Result};
use crate::lattice::LatticeSpec;

/// Which phase-gradient component the Savart plates are oriented to measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementAxis {
    Kx,
    Ky,
}

impl MeasurementAxis {
    /// Transverse component (0 = x, 1 = y) the measurement resolves.
    pub fn component(self) -> usize {
        match self {
            MeasurementAxis::Kx => 0,
            MeasurementAxis::Ky => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpticalConfig {
    /// Wavelength, m.
    pub wavelength: f64,
    /// Lens focal length, m.
    pub focal_length: f64,
    /// Savart-plate displacement `l`, m.
    pub displacement: f64,
    pub axis: MeasurementAxis,
    /// Per photon: `true` for a single Fourier lens, `false` for 4f imaging.
    pub ft_paths: Vec<bool>,
}

impl OpticalConfig {
    pub fn new(wavelength: f64, focal_length: f64, displacement: f64, axis: MeasurementAxis, ft_paths: Vec<bool>) -> Result<Self> {
        let cfg = OpticalConfig { wavelength, focal_length, displacement, axis, ft_paths };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.wavelength) || !pos(self.focal_length) || !pos(self.displacement) {
            return Err(CwsError::arg("wavelength, focal length and displacement must be positive"));
        }
        Ok(())
    }

    pub fn with_axis(&self, axis: MeasurementAxis) -> Self {
        OpticalConfig { axis, ..self.clone() }
    }

    /// `2π / (λf)`, rad/m².
    pub fn lens_scale(&self) -> f64 {
        2.0 * std::f64::consts::PI / (self.wavelength * self.focal_length)
    }

    /// Displacement in whole pixels.
    pub fn shift_px(&self, spec: &LatticeSpec) -> Result<usize> {
        let s = self.displacement / spec.pitch;
        let r = s.round();
        if r < 1.0 || (s - r).abs() > 1e-9 * s.max(1.0) {
            return Err(CwsError::GridMismatch { displacement: self.displacement, pitch: spec.pitch });
        }
        Ok(r as usize)
    }

    pub fn measurement(&self, spec: &LatticeSpec) -> Result<Measurement> {
        self.validate()?;
        if self.axis == MeasurementAxis::Ky && spec.dims_per_photon < 2 {
            return Err(CwsError::arg("k_y measurement needs two transverse dimensions"));
        }
        Ok(Measurement { axis: self.axis, displacement: self.displacement, shift_px: self.shift_px(spec)? })
    }
}

/// The sensor orientation and displacement a dataset was recorded with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub axis: MeasurementAxis,
    /// `l`, m.
    pub displacement: f64,
    /// `l / Δ`.
    pub shift_px: usize,
}

/// Combo index of a polarization outcome: photon 0 is the most significant
/// bit, `0 = L`, `1 = R`. For two photons the order is LL, LR, RL, RR.
pub fn combo_index(outcomes_right: &[bool]) -> usize {
    outcomes_right.iter().fold(0, |acc, &r| (acc << 1) | r as usize)
}

/// True if `photon` is right-circular in `combo`.
pub fn combo_is_right(combo: usize, photon: usize, n: usize) -> bool {
    (combo >> (n - 1 - photon)) & 1 == 1
}

/// Polarization-resolved coincidence data over the lattice, exact or sampled.
pub trait CoincidenceData: Sync {
    fn spec(&self) -> &LatticeSpec;
    fn measurement(&self) -> &Measurement;
    fn combo_count(&self) -> usize;
    fn value(&self, combo: usize, bin: usize) -> f64;

    /// Sum over all combos at one bin.
    fn bin_total(&self, bin: usize) -> f64 {
        (0..self.combo_count()).map(|c| self.value(c, bin)).sum()
    }
}

/// Exact joint probabilities, `pmf[combo * bins + bin]`, summing to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensitySet {
    pub spec: LatticeSpec,
    pub measurement: Measurement,
    pub combo_count: usize,
    pub pmf: Vec<f64>,
}

impl IntensitySet {
    pub fn combo(&self, c: usize) -> &[f64] {
        let b = self.spec.bins();
        &self.pmf[c * b..(c + 1) * b]
    }

    pub fn validate(&self) -> Result<()> {
        if self.combo_count != 1 << self.spec.n || self.pmf.len() != self.combo_count * self.spec.bins() {
            return Err(CwsError::arg("intensity set shape does not match its lattice"));
        }
        if self.pmf.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(CwsError::arg("probabilities must be finite and non-negative"));
        }
        Ok(())
    }
}

impl CoincidenceData for IntensitySet {
    fn spec(&self) -> &LatticeSpec {
        &self.spec
    }
    fn measurement(&self) -> &Measurement {
        &self.measurement
    }
    fn combo_count(&self) -> usize {
        self.combo_count
    }
    #[inline]
    fn value(&self, combo: usize, bin: usize) -> f64 {
        self.pmf[combo * self.spec.bins() + bin]
    }
}

/// Sampled coincidence counts, `counts[combo * bins + bin]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoincidenceHistogram {
    pub spec: LatticeSpec,
    pub measurement: Measurement,
    pub combo_count: usize,
    pub counts: Vec<u64>,
    pub total: u64,
    pub seed: u64,
}

impl CoincidenceHistogram {
    pub fn combo(&self, c: usize) -> &[u64] {
        let b = self.spec.bins();
        &self.counts[c * b..(c + 1) * b]
    }
}

impl CoincidenceData for CoincidenceHistogram {
    fn spec(&self) -> &LatticeSpec {
        &self.spec
    }
    fn measurement(&self) -> &Measurement {
        &self.measurement
    }
    fn combo_count(&self) -> usize {
        self.combo_count
    }
    #[inline]
    fn value(&self, combo: usize, bin: usize) -> f64 {
        self.counts[combo * self.spec.bins() + bin] as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combo_order() {
        assert_eq!(combo_index(&[false, false]), 0);
        assert_eq!(combo_index(&[false, true]), 1);
        assert_eq!(combo_index(&[true, false]), 2);
        assert!(combo_is_right(2, 0, 2));
        assert!(!combo_is_right(2, 1, 2));
    }

    #[test]
    fn shift_must_be_whole_pixels() {
        let spec = LatticeSpec::new(2, 2, 8, 25e-6).unwrap();
        let cfg = OpticalConfig::new(800e-9, 0.2, 25e-6, MeasurementAxis::Kx, vec![true, false]).unwrap();
        assert_eq!(cfg.shift_px(&spec).unwrap(), 1);
        let cfg = OpticalConfig { displacement: 50e-6, ..cfg };
        assert_eq!(cfg.shift_px(&spec).unwrap(), 2);
        let cfg = OpticalConfig { displacement: 30e-6, ..cfg };
        assert!(matches!(cfg.shift_px(&spec), Err(CwsError::GridMismatch { .. })));
    }
}
