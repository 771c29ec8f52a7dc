//! Comparison of reconstructed phases against a known ground truth.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use cws_core::ComplexField;

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson correlation; `NaN` when either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Least-squares slope of `b` against `a`.
pub fn slope(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let den: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    num / den
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseAgreement {
    /// Bins entering the comparison.
    pub bins: usize,
    /// RMS difference after removing each side's mean, rad.
    pub rms: f64,
    pub pearson: f64,
    /// Slope of the reconstruction against the truth.
    pub slope: f64,
}

impl PhaseAgreement {
    pub fn of(reconstructed: &[f64], truth: &[f64]) -> Self {
        let (mr, mt) = (mean(reconstructed), mean(truth));
        let rms = (reconstructed.iter().zip(truth).map(|(r, t)| (r - mr - (t - mt)).powi(2)).sum::<f64>()
            / reconstructed.len() as f64)
            .sqrt();
        PhaseAgreement {
            bins: reconstructed.len(),
            rms,
            pearson: pearson(truth, reconstructed),
            slope: slope(truth, reconstructed),
        }
    }
}

/// Compares unwrapped phase maps on masked bins whose intensity exceeds
/// `fraction` of the masked maximum.
pub fn phase_agreement(
    phase: &[f64],
    truth: &[f64],
    mask: &[bool],
    intensity: &[f64],
    fraction: f64,
) -> Option<PhaseAgreement> {
    let max = intensity.iter().zip(mask).filter(|(_, m)| **m).map(|(v, _)| *v).fold(0.0, f64::max);
    let sel: Vec<usize> = (0..phase.len()).filter(|&b| mask[b] && intensity[b] > fraction * max).collect();
    if sel.len() < 2 {
        return None;
    }
    let r: Vec<f64> = sel.iter().map(|&b| phase[b]).collect();
    let t: Vec<f64> = sel.iter().map(|&b| truth[b]).collect();
    Some(PhaseAgreement::of(&r, &t))
}

/// Compares the phase of a complex 2D slice with a known pattern, on pixels
/// whose magnitude exceeds `fraction` of the slice maximum. The slice phase
/// is unwrapped against the pattern after removing their mean offset.
pub fn slice_agreement(slice: &ComplexField, truth: &[f64], fraction: f64) -> Option<PhaseAgreement> {
    let max = slice.max_abs();
    let vals = slice.values();
    let sel: Vec<usize> = (0..vals.len()).filter(|&b| vals[b].norm() > fraction * max && max > 0.0).collect();
    if sel.len() < 2 {
        return None;
    }
    let offset: Complex64 =
        sel.iter().map(|&b| vals[b] / vals[b].norm() * Complex64::from_polar(1.0, -truth[b])).sum();
    let c0 = offset.arg();
    let r: Vec<f64> = sel
        .iter()
        .map(|&b| truth[b] + (vals[b] * Complex64::from_polar(1.0, -truth[b] - c0)).arg())
        .collect();
    let t: Vec<f64> = sel.iter().map(|&b| truth[b]).collect();
    Some(PhaseAgreement::of(&r, &t))
}
