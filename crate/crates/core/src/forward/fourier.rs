use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::OpticalConfig;
use crate::error::{CwsError, Result};
use crate::exec;
use crate::lattice::{ComplexField, LatticeSpec};

/// The lens transform `F(u) = Δ Σ f(x) exp(-i α u x)` along one axis,
/// evaluated as a chirp-z convolution.
pub struct LensTransform {
    len: usize,
    pre: Vec<Complex64>,
    post: Vec<Complex64>,
    kernel: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl LensTransform {
    pub fn new(len: usize, origin: f64, pitch: f64, alpha: f64) -> Self {
        let pad = (2 * len - 1).next_power_of_two();
        let beta = alpha * pitch * pitch;
        let pre = (0..len)
            .map(|n| {
                let n = n as f64;
                Complex64::from_polar(1.0, -alpha * (origin * pitch * n + 0.5 * pitch * pitch * n * n))
            })
            .collect();
        let post = (0..len)
            .map(|m| {
                let m = m as f64;
                let ph = -alpha * (origin * origin + origin * pitch * m + 0.5 * pitch * pitch * m * m);
                Complex64::from_polar(pitch, ph)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(pad);
        let ifft = planner.plan_fft_inverse(pad);
        let mut kernel = vec![Complex64::new(0.0, 0.0); pad];
        for k in 0..len {
            let h = Complex64::from_polar(1.0, 0.5 * beta * (k * k) as f64);
            kernel[k] = h;
            if k > 0 {
                kernel[pad - k] = h;
            }
        }
        fft.process(&mut kernel);
        LensTransform { len, pre, post, kernel, fft, ifft }
    }

    pub fn apply(&self, input: &[Complex64], output: &mut [Complex64]) {
        let pad = self.kernel.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); pad];
        for n in 0..self.len {
            buf[n] = input[n] * self.pre[n];
        }
        self.fft.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel) {
            *b *= k;
        }
        self.ifft.process(&mut buf);
        let scale = 1.0 / pad as f64;
        for m in 0..self.len {
            output[m] = buf[m] * self.post[m] * scale;
        }
    }
}

/// Applies `f(line_in, line_out)` to every line of `values` along `axis`.
pub fn apply_axis_transform<F>(values: &[Complex64], spec: &LatticeSpec, axis: usize, f: F) -> Vec<Complex64>
where
    F: Fn(&[Complex64], &mut [Complex64]) + Sync + Send,
{
    let len = spec.axis_len;
    let stride = spec.stride(axis);
    let lines = spec.bins() / len;
    let base = |line: usize| (line / stride) * stride * len + line % stride;
    let results = exec::map_collect(lines, |line| {
        let b = base(line);
        let input: Vec<Complex64> = (0..len).map(|k| values[b + k * stride]).collect();
        let mut out = vec![Complex64::new(0.0, 0.0); len];
        f(&input, &mut out);
        out
    });
    let mut out = vec![Complex64::new(0.0, 0.0); values.len()];
    for (line, r) in results.into_iter().enumerate() {
        let b = base(line);
        for (k, v) in r.into_iter().enumerate() {
            out[b + k * stride] = v;
        }
    }
    out
}

/// Dense matrix of the lens transform on one lattice axis.
pub fn lens_kernel_matrix(spec: &LatticeSpec, axis: usize, cfg: &OpticalConfig) -> DMatrix<Complex64> {
    let alpha = cfg.lens_scale();
    let n = spec.axis_len;
    DMatrix::from_fn(n, n, |m, k| Complex64::from_polar(spec.pitch, -alpha * spec.coord(axis, m) * spec.coord(axis, k)))
}

/// Fourier-lens propagation of one photon's transverse coordinates onto the
/// focal plane, sampled on the same lattice.
pub fn fourier_path(field: &ComplexField, photon: usize, cfg: &OpticalConfig) -> Result<ComplexField> {
    cfg.validate()?;
    let spec = field.spec();
    if photon >= spec.n {
        return Err(CwsError::arg(format!("photon {photon} out of range for n = {}", spec.n)));
    }
    let alpha = cfg.lens_scale();
    let mut values = field.values().to_vec();
    for c in 0..spec.dims_per_photon {
        let axis = spec.axis_of(photon, c);
        let t = LensTransform::new(spec.axis_len, spec.origin[axis], spec.pitch, alpha);
        values = apply_axis_transform(&values, spec, axis, |i, o| t.apply(i, o));
    }
    ComplexField::new(spec.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::MeasurementAxis;

    fn cfg() -> OpticalConfig {
        OpticalConfig::new(800e-9, 0.2, 25e-6, MeasurementAxis::Kx, vec![true]).unwrap()
    }

    #[test]
    fn chirp_matches_dense_kernel() {
        let spec = LatticeSpec::new(1, 1, 19, 25e-6).unwrap();
        let k = lens_kernel_matrix(&spec, 0, &cfg());
        let f: Vec<Complex64> = (0..19).map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 0.3).cos())).collect();
        let t = LensTransform::new(19, spec.origin[0], spec.pitch, cfg().lens_scale());
        let mut out = vec![Complex64::new(0.0, 0.0); 19];
        t.apply(&f, &mut out);
        for m in 0..19 {
            let d: Complex64 = (0..19).map(|n| k[(m, n)] * f[n]).sum();
            assert!((d - out[m]).norm() < 1e-12 * d.norm().max(1e-5), "{m}: {d} vs {}", out[m]);
        }
    }

    #[test]
    fn delta_transforms_to_constant_modulus() {
        let spec = LatticeSpec::new(2, 2, 9, 25e-6).unwrap();
        let centre = crate::lattice::linear_index(&[4, 4, 4, 4], &spec).unwrap();
        let mut v = vec![Complex64::new(0.0, 0.0); spec.bins()];
        v[centre] = Complex64::new(1.0, 0.0);
        let f = ComplexField::new(spec.clone(), v).unwrap();
        let g = fourier_path(&f, 0, &cfg()).unwrap();
        let ref_mod = g.values()[centre].norm();
        for x1 in 0..9 {
            for y1 in 0..9 {
                let i = crate::lattice::linear_index(&[x1, y1, 4, 4], &spec).unwrap();
                assert!((g.values()[i].norm() - ref_mod).abs() < 1e-12 * ref_mod);
            }
        }
    }
}
