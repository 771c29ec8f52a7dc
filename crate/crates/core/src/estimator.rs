//! Phase-gradient and amplitude estimation from polarization-resolved
//! coincidence data.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{CwsError, Result};
use crate::exec;
use crate::forward::{combo_is_right, CoincidenceData, Measurement, MeasurementAxis};
use crate::lattice::{LatticeSpec, MAX_AXES};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClampPolicy {
    /// Clamp the arcsin argument to `[-1, 1]` and flag the bin.
    #[default]
    Clamp,
    /// Drop bins whose ratio reaches the arcsin domain boundary.
    Discard,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorParams {
    pub roi_epsilon: f64,
    pub clamp_policy: ClampPolicy,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        EstimatorParams { roi_epsilon: 0.005, clamp_policy: ClampPolicy::Clamp }
    }
}

impl EstimatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.roi_epsilon) {
            return Err(CwsError::arg("roi_epsilon must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Conditional intensities `(I_L, I_R)` of one photon: sums over all combos
/// in which that photon is L (resp. R), on the full lattice.
pub fn conditional_split<D: CoincidenceData + ?Sized>(data: &D, photon: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let spec = data.spec();
    if photon >= spec.n {
        return Err(CwsError::arg(format!("photon {photon} out of range for n = {}", spec.n)));
    }
    let n = spec.n;
    let (left, right): (Vec<usize>, Vec<usize>) =
        (0..data.combo_count()).partition(|&c| !combo_is_right(c, photon, n));
    let sum = |combos: &[usize]| {
        let mut out = vec![0.0; spec.bins()];
        exec::fill_indexed(&mut out, |b| combos.iter().map(|&c| data.value(c, b)).sum());
        out
    };
    Ok((sum(&left), sum(&right)))
}

/// Pixel shift from a bin to the point its gradient estimate refers to:
/// `-l e_y` for k_x and `+l e_x` for k_y, applied to every photon.
pub fn evaluation_shift(spec: &LatticeSpec, m: &Measurement) -> Vec<isize> {
    let mut shift = vec![0isize; spec.axes()];
    if spec.dims_per_photon < 2 {
        return shift;
    }
    let s = m.shift_px as isize;
    for j in 0..spec.n {
        match m.axis {
            MeasurementAxis::Kx => shift[spec.axis_of(j, 1)] = -s,
            MeasurementAxis::Ky => shift[spec.axis_of(j, 0)] = s,
        }
    }
    shift
}

/// One phase-gradient component as measured, before alignment.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientComponent {
    pub spec: LatticeSpec,
    pub photon: usize,
    pub measurement: Measurement,
    /// rad/m; zero where `valid` is false.
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub clamped: Vec<bool>,
    /// See [`evaluation_shift`].
    pub shift: Vec<isize>,
}

impl GradientComponent {
    /// Lattice axis this component differentiates along.
    pub fn lattice_axis(&self) -> usize {
        self.spec.axis_of(self.photon, self.measurement.axis.component())
    }
}

/// Arcsin estimate of the phase gradient from conditional L/R intensities.
pub fn gradient_component(
    i_l: &[f64],
    i_r: &[f64],
    spec: &LatticeSpec,
    measurement: &Measurement,
    photon: usize,
    params: &EstimatorParams,
) -> Result<GradientComponent> {
    params.validate()?;
    let bins = spec.bins();
    if i_l.len() != bins || i_r.len() != bins {
        return Err(CwsError::arg("intensity arrays do not match the lattice"));
    }
    if photon >= spec.n {
        return Err(CwsError::arg(format!("photon {photon} out of range for n = {}", spec.n)));
    }
    let l = measurement.displacement;
    if !(l > 0.0) {
        return Err(CwsError::arg("displacement must be positive"));
    }
    let sign = match measurement.axis {
        MeasurementAxis::Kx => 1.0,
        MeasurementAxis::Ky => -1.0,
    };
    let per_bin = exec::map_collect(bins, |b| {
        let (lv, rv) = (i_l[b], i_r[b]);
        let sum = lv + rv;
        if !(sum > 0.0) || !sum.is_finite() {
            return (0.0, false, false);
        }
        let ratio = sign * (rv - lv) / sum;
        let clamped = ratio.abs() >= 1.0;
        if clamped && params.clamp_policy == ClampPolicy::Discard {
            return (0.0, false, true);
        }
        (ratio.clamp(-1.0, 1.0).asin() / (2.0 * l), true, clamped)
    });
    let mut values = Vec::with_capacity(bins);
    let mut valid = Vec::with_capacity(bins);
    let mut clamped = Vec::with_capacity(bins);
    for (v, ok, c) in per_bin {
        values.push(v);
        valid.push(ok);
        clamped.push(c);
    }
    Ok(GradientComponent {
        spec: spec.clone(),
        photon,
        measurement: *measurement,
        values,
        valid,
        clamped,
        shift: evaluation_shift(spec, measurement),
    })
}

/// `sqrt(I_L + I_R)` per bin.
pub fn amplitude_estimate(i_l: &[f64], i_r: &[f64]) -> Vec<f64> {
    i_l.iter().zip(i_r).map(|(l, r)| (l + r).max(0.0).sqrt()).collect()
}

/// Bins further than `rim` pixels from every lattice face.
fn interior(spec: &LatticeSpec, rim: usize) -> Vec<bool> {
    let axes = spec.axes();
    let mut out = vec![false; spec.bins()];
    exec::fill_indexed(&mut out, |b| {
        let mut c = [0usize; MAX_AXES];
        spec.unravel_into(b, &mut c[..axes]);
        c[..axes].iter().all(|&v| v >= rim && v + rim < spec.axis_len)
    });
    out
}

/// Face-adjacent connected component of `mask` containing `start`.
pub fn connected_component(spec: &LatticeSpec, mask: &[bool], start: usize) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    if !mask[start] {
        return out;
    }
    out[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(b) = queue.pop_front() {
        for a in 0..spec.axes() {
            for step in [-1, 1] {
                if let Some(nb) = spec.offset(b, a, step) {
                    if mask[nb] && !out[nb] {
                        out[nb] = true;
                        queue.push_back(nb);
                    }
                }
            }
        }
    }
    out
}

fn check_same_spec<'a>(data: &[&'a dyn CoincidenceData]) -> Result<&'a LatticeSpec> {
    let first = data.first().ok_or_else(|| CwsError::arg("no measurements given"))?;
    let spec = first.spec();
    if data.iter().any(|d| !d.spec().same_grid(spec)) {
        return Err(CwsError::arg("measurements do not share a lattice"));
    }
    Ok(spec)
}

/// Region of interest: bins whose total intensity exceeds `roi_epsilon` of
/// the maximum in every measurement, away from the displacement rim, and
/// connected to the brightest bin.
pub fn roi_mask(data: &[&dyn CoincidenceData], params: &EstimatorParams) -> Result<Vec<bool>> {
    params.validate()?;
    let spec = check_same_spec(data)?;
    let rim = data.iter().map(|d| d.measurement().shift_px).max().unwrap_or(0);
    let mut keep = interior(spec, rim);
    let mut combined = vec![0.0f64; spec.bins()];
    for d in data {
        let totals = exec::map_collect(spec.bins(), |b| d.bin_total(b));
        let max = totals.iter().cloned().fold(0.0, f64::max);
        let thr = params.roi_epsilon * max;
        for ((k, &t), c) in keep.iter_mut().zip(&totals).zip(combined.iter_mut()) {
            *k &= t > thr;
            *c += t;
        }
    }
    let start = argmax_where(&combined, &keep).ok_or(CwsError::EmptyRoi)?;
    Ok(connected_component(spec, &keep, start))
}

/// Index of the largest value among bins with `mask` set; ties go to the
/// lowest index.
pub fn argmax_where(values: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&v, &m)) in values.iter().zip(mask).enumerate() {
        if m && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Evaluation offset of one measurement, kept with a merged gradient field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementOffset {
    pub measurement: Measurement,
    pub shift_px: Vec<isize>,
}

/// Phase-gradient field on a lattice. Component `a` at bin `m` is the phase
/// slope from `m` to `m + e_a`, in rad/m.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    pub spec: LatticeSpec,
    pub components: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
    pub clamped: Vec<bool>,
    pub offsets: Vec<MeasurementOffset>,
}

impl GradientField {
    /// Forward differences of a phase map on a mask.
    pub fn from_phase(spec: &LatticeSpec, phase: &[f64], mask: Vec<bool>) -> Result<Self> {
        if phase.len() != spec.bins() || mask.len() != spec.bins() {
            return Err(CwsError::arg("phase or mask does not match the lattice"));
        }
        let components = (0..spec.axes())
            .map(|a| {
                let mut out = vec![0.0; spec.bins()];
                exec::fill_indexed(&mut out, |b| {
                    spec.offset(b, a, 1).map_or(0.0, |nb| (phase[nb] - phase[b]) / spec.pitch)
                });
                out
            })
            .collect();
        Ok(GradientField {
            spec: spec.clone(),
            components,
            clamped: vec![false; spec.bins()],
            mask,
            offsets: Vec::new(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bins = self.spec.bins();
        if self.components.len() != self.spec.axes()
            || self.components.iter().any(|c| c.len() != bins)
            || self.mask.len() != bins
            || self.clamped.len() != bins
        {
            return Err(CwsError::arg("gradient field shape does not match its lattice"));
        }
        for (b, _) in self.mask.iter().enumerate().filter(|(_, &m)| m) {
            if self.components.iter().any(|c| !c[b].is_finite()) {
                return Err(CwsError::arg(format!("non-finite gradient at masked bin {b}")));
            }
        }
        Ok(())
    }

    pub fn clamp_count(&self) -> usize {
        self.mask.iter().zip(&self.clamped).filter(|(m, c)| **m && **c).count()
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

/// Result of merging the k_x and k_y measurements.
#[derive(Clone, Debug)]
pub struct Estimate {
    pub gradient: GradientField,
    /// Total intensity of the k_x measurement, aligned with the gradient.
    pub intensity: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub raw: Vec<GradientComponent>,
}

fn shifted(spec: &LatticeSpec, bin: usize, shift: &[isize]) -> Option<usize> {
    let mut b = bin;
    for (a, &s) in shift.iter().enumerate() {
        if s != 0 {
            b = spec.offset(b, a, s)?;
        }
    }
    Some(b)
}

/// Estimates the full gradient field and amplitude from one measurement per
/// axis (`k_x` alone for one transverse dimension, `k_x` and `k_y` for two).
///
/// Each component is moved from its evaluation point back onto the lattice
/// and then averaged with its neighbor along its own axis, so it becomes the
/// forward step used by the integrator.
pub fn estimate_gradients(data: &[&dyn CoincidenceData], params: &EstimatorParams) -> Result<Estimate> {
    let spec = check_same_spec(data)?.clone();
    let axes_needed: Vec<MeasurementAxis> = match spec.dims_per_photon {
        1 => vec![MeasurementAxis::Kx],
        _ => vec![MeasurementAxis::Kx, MeasurementAxis::Ky],
    };
    let mut ordered = Vec::new();
    for ax in &axes_needed {
        let found: Vec<_> = data.iter().filter(|d| d.measurement().axis == *ax).collect();
        if found.len() != 1 {
            return Err(CwsError::arg(format!("need exactly one {ax:?} measurement")));
        }
        ordered.push(*found[0]);
    }
    let roi = roi_mask(&ordered, params)?;
    let bins = spec.bins();

    let mut raw = Vec::new();
    for d in &ordered {
        for j in 0..spec.n {
            let (il, ir) = conditional_split(*d, j)?;
            raw.push(gradient_component(&il, &ir, &spec, d.measurement(), j, params)?);
        }
    }

    let mut aligned = vec![vec![0.0; bins]; spec.axes()];
    let mut mask = roi.clone();
    let mut clamped_al = vec![false; bins];
    for comp in &raw {
        let a = comp.lattice_axis();
        let back: Vec<isize> = comp.shift.iter().map(|s| -s).collect();
        for q in 0..bins {
            match shifted(&spec, q, &back) {
                Some(src) if roi[src] && comp.valid[src] => {
                    aligned[a][q] = comp.values[src];
                    clamped_al[q] |= comp.clamped[src];
                }
                _ => mask[q] = false,
            }
        }
    }

    let kx = ordered[0];
    let kx_back: Vec<isize> = evaluation_shift(&spec, kx.measurement()).iter().map(|s| -s).collect();
    let intensity: Vec<f64> =
        (0..bins).map(|q| shifted(&spec, q, &kx_back).map_or(0.0, |src| kx.bin_total(src))).collect();
    let start = argmax_where(&intensity, &mask).ok_or(CwsError::EmptyRoi)?;
    let mask = connected_component(&spec, &mask, start);

    let mut components = vec![vec![0.0; bins]; spec.axes()];
    let mut clamped = vec![false; bins];
    for (a, comp) in components.iter_mut().enumerate() {
        let al = &aligned[a];
        let mask = &mask;
        let sp = &spec;
        exec::fill_indexed(comp, |q| {
            if !mask[q] {
                return 0.0;
            }
            match sp.offset(q, a, 1) {
                Some(nb) if mask[nb] => 0.5 * (al[q] + al[nb]),
                _ => al[q],
            }
        });
    }
    for q in 0..bins {
        if mask[q] {
            clamped[q] = clamped_al[q] || (0..spec.axes()).any(|a| spec.offset(q, a, 1).is_some_and(|nb| mask[nb] && clamped_al[nb]));
        }
    }
    let amplitude = intensity.iter().zip(&mask).map(|(&i, &m)| if m { i.max(0.0).sqrt() } else { 0.0 }).collect();
    let offsets = ordered
        .iter()
        .map(|d| MeasurementOffset { measurement: *d.measurement(), shift_px: evaluation_shift(&spec, d.measurement()) })
        .collect();
    Ok(Estimate {
        gradient: GradientField { spec, components, mask, clamped, offsets },
        intensity,
        amplitude,
        raw,
    })
}

/// Coincidence data summed over every photon except one, as two-combo
/// (L, R) data on that photon's lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalCounts {
    pub spec: LatticeSpec,
    pub measurement: Measurement,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl CoincidenceData for MarginalCounts {
    fn spec(&self) -> &LatticeSpec {
        &self.spec
    }
    fn measurement(&self) -> &Measurement {
        &self.measurement
    }
    fn combo_count(&self) -> usize {
        2
    }
    fn value(&self, combo: usize, bin: usize) -> f64 {
        if combo == 0 {
            self.left[bin]
        } else {
            self.right[bin]
        }
    }
}

/// Marginal L/R intensities of one photon.
pub fn marginalize<D: CoincidenceData + ?Sized>(data: &D, photon: usize) -> Result<MarginalCounts> {
    let (il, ir) = conditional_split(data, photon)?;
    let spec = data.spec();
    let pspec = spec.photon_spec(photon);
    let d = spec.dims_per_photon;
    let axes = spec.axes();
    let mut left = vec![0.0; pspec.bins()];
    let mut right = vec![0.0; pspec.bins()];
    let mut c = [0usize; MAX_AXES];
    for b in 0..spec.bins() {
        spec.unravel_into(b, &mut c[..axes]);
        let p = c[photon * d..(photon + 1) * d].iter().fold(0, |acc, &v| acc * spec.axis_len + v);
        left[p] += il[b];
        right[p] += ir[b];
    }
    Ok(MarginalCounts { spec: pspec, measurement: *data.measurement(), left, right })
}

/// Gradient estimated from one photon's marginal intensities alone.
pub fn marginal_gradient<D: CoincidenceData + ?Sized>(
    data: &D,
    photon: usize,
    params: &EstimatorParams,
) -> Result<GradientComponent> {
    let m = marginalize(data, photon)?;
    gradient_component(&m.left, &m.right, &m.spec, &m.measurement, 0, params)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FtDecision {
    FourierLens,
    FourF,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FtRecommendation {
    pub decision: FtDecision,
    /// FWHM of `|ψ(r1 | r2 = 0)|²` without a lens, m.
    pub position_fwhm: f64,
    /// FWHM of the same conditional behind a Fourier lens, m.
    pub fourier_fwhm: f64,
    /// `a + b` at which both widths agree, m⁻².
    pub threshold_sum: f64,
}

/// Chooses a Fourier lens when it gives the narrower conditional
/// distribution for photon 1, i.e. when `a + b > π / (λ f)`.
pub fn recommend_ft(a: f64, b: f64, wavelength: f64, focal_length: f64) -> Result<FtRecommendation> {
    if !(a > 0.0 && b >= 0.0 && wavelength > 0.0 && focal_length > 0.0) {
        return Err(CwsError::arg("need a > 0, b >= 0, wavelength > 0, focal length > 0"));
    }
    let s = a + b;
    let ln2 = std::f64::consts::LN_2;
    let lf = wavelength * focal_length;
    let position_fwhm = 2.0 * (ln2 / (2.0 * s)).sqrt();
    let fourier_fwhm = 2.0 * (ln2 * lf * lf * s / 2.0).sqrt() / std::f64::consts::PI;
    let threshold_sum = std::f64::consts::PI / lf;
    let decision = if s > threshold_sum { FtDecision::FourierLens } else { FtDecision::FourF };
    Ok(FtRecommendation { decision, position_fwhm, fourier_fwhm, threshold_sum })
}
