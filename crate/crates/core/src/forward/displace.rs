use num_complex::Complex64;

use super::{IntensitySet, Measurement, MeasurementAxis, OpticalConfig};
use crate::error::{CwsError, Result};
use crate::exec;
use crate::lattice::{ComplexField, LatticeSpec, MAX_AXES};

/// Largest photon number for which joint intensities are computed.
pub const MAX_JOINT_PHOTONS: usize = 8;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Pixel displacements `(l_+, l_-)` of one photon, as `[dx, dy]`.
pub fn displacement_offsets(spec: &LatticeSpec, m: &Measurement) -> [[isize; 2]; 2] {
    let s = m.shift_px as isize;
    if spec.dims_per_photon == 1 {
        return [[s, 0], [-s, 0]];
    }
    match m.axis {
        MeasurementAxis::Kx => [[s, s], [-s, s]],
        MeasurementAxis::Ky => [[-s, -s], [-s, s]],
    }
}

/// Per photon and sign bit: flat index delta of the source bin and a
/// per-axis coordinate shift.
struct Shifts {
    d: usize,
    n: usize,
    len: isize,
    px: [[isize; 2]; 2],
    strides: Vec<isize>,
}

impl Shifts {
    fn new(spec: &LatticeSpec, m: &Measurement) -> Self {
        Shifts {
            d: spec.dims_per_photon,
            n: spec.n,
            len: spec.axis_len as isize,
            px: displacement_offsets(spec, m),
            strides: (0..spec.axes()).map(|a| spec.stride(a) as isize).collect(),
        }
    }

    /// Source bin of `ψ_σ` at `coords`, where bit `n-1-j` of `sigma` set
    /// means photon `j` takes `l_-`.
    fn source(&self, bin: usize, coords: &[usize], sigma: usize) -> Option<usize> {
        let mut idx = bin as isize;
        for j in 0..self.n {
            let b = (sigma >> (self.n - 1 - j)) & 1;
            for c in 0..self.d {
                let a = j * self.d + c;
                let t = coords[a] as isize - self.px[b][c];
                if t < 0 || t >= self.len {
                    return None;
                }
                idx -= self.px[b][c] * self.strides[a];
            }
        }
        Some(idx as usize)
    }
}

/// The `2^n` displaced copies `ψ(r - l_σ)`, zero where the source leaves the lattice.
pub fn displaced_fields(field: &ComplexField, cfg: &OpticalConfig) -> Result<Vec<ComplexField>> {
    let spec = field.spec();
    if spec.n > MAX_JOINT_PHOTONS {
        return Err(CwsError::arg(format!("at most {MAX_JOINT_PHOTONS} photons supported")));
    }
    let m = cfg.measurement(spec)?;
    let sh = Shifts::new(spec, &m);
    let axes = spec.axes();
    let src = field.values();
    (0..1usize << spec.n)
        .map(|sigma| {
            let mut out = vec![Complex64::new(0.0, 0.0); spec.bins()];
            exec::fill_indexed(&mut out, |i| {
                let mut c = [0usize; MAX_AXES];
                spec.unravel_into(i, &mut c[..axes]);
                sh.source(i, &c[..axes], sigma).map_or(Complex64::new(0.0, 0.0), |s| src[s])
            });
            ComplexField::new(spec.clone(), out)
        })
        .collect()
}

/// Joint probabilities of every L/R outcome after the polarization-resolving
/// sensor, normalized over all outcomes and bins.
pub fn joint_intensities(field: &ComplexField, cfg: &OpticalConfig) -> Result<IntensitySet> {
    let spec = field.spec();
    let n = spec.n;
    if n > MAX_JOINT_PHOTONS {
        return Err(CwsError::arg(format!("at most {MAX_JOINT_PHOTONS} photons supported")));
    }
    let m = cfg.measurement(spec)?;
    let sh = Shifts::new(spec, &m);
    let axes = spec.axes();
    let combos = 1usize << n;
    let bins = spec.bins();
    let src = field.values();
    // c[outcome][sign]: L = ψ_- - iψ_+, R = ψ_+ - iψ_-
    let coef = [[-I, ONE], [ONE, -I]];

    const CH: usize = 1024;
    let mut bin_major = vec![0.0f64; bins * combos];
    exec::for_each_chunk_mut(&mut bin_major, CH * combos, |ci, chunk| {
        let mut amp = vec![Complex64::new(0.0, 0.0); combos];
        let mut next = vec![Complex64::new(0.0, 0.0); combos];
        let mut c = [0usize; MAX_AXES];
        for (k, out) in chunk.chunks_mut(combos).enumerate() {
            let bin = ci * CH + k;
            spec.unravel_into(bin, &mut c[..axes]);
            for (sigma, a) in amp.iter_mut().enumerate() {
                *a = sh.source(bin, &c[..axes], sigma).map_or(Complex64::new(0.0, 0.0), |s| src[s]);
            }
            for j in 0..n {
                let bit = 1 << (n - 1 - j);
                for idx in 0..combos {
                    if idx & bit != 0 {
                        continue;
                    }
                    let (p, q) = (amp[idx], amp[idx | bit]);
                    next[idx] = coef[0][0] * p + coef[0][1] * q;
                    next[idx | bit] = coef[1][0] * p + coef[1][1] * q;
                }
                std::mem::swap(&mut amp, &mut next);
            }
            for (o, a) in out.iter_mut().zip(&amp) {
                *o = a.norm_sqr();
            }
        }
    });

    let total = exec::sum_indexed(bin_major.len(), |i| bin_major[i]);
    if total == 0.0 {
        return Err(CwsError::DegenerateDistribution);
    }
    let mut pmf = vec![0.0f64; bins * combos];
    exec::fill_indexed(&mut pmf, |k| bin_major[(k % bins) * combos + k / bins] / total);
    Ok(IntensitySet { spec: spec.clone(), measurement: m, combo_count: combos, pmf })
}
