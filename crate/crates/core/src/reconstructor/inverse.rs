use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{CwsError, Result};
use crate::forward::{apply_axis_transform, lens_kernel_matrix, OpticalConfig};
use crate::lattice::ComplexField;

/// Singular values below this fraction of the largest are treated as zero.
pub const PINV_CUTOFF: f64 = 0.5;

/// Undoes [`crate::forward::fourier_path`] on one photon within the part of
/// the field the lattice can represent: a truncated-SVD pseudo-inverse of
/// the lens transform, applied axis by axis.
pub fn inverse_fourier_path(field: &ComplexField, photon: usize, cfg: &OpticalConfig) -> Result<ComplexField> {
    cfg.validate()?;
    let spec = field.spec();
    if photon >= spec.n {
        return Err(CwsError::arg(format!("photon {photon} out of range for n = {}", spec.n)));
    }
    let mut values = field.values().to_vec();
    for c in 0..spec.dims_per_photon {
        let axis = spec.axis_of(photon, c);
        let k = lens_kernel_matrix(spec, axis, cfg);
        let svd = k.svd(true, true);
        let smax = svd.singular_values.max();
        let pinv: DMatrix<Complex64> = svd
            .pseudo_inverse(PINV_CUTOFF * smax)
            .map_err(|e| CwsError::Degenerate(e.to_string()))?;
        values = apply_axis_transform(&values, spec, axis, |input, out| {
            for (m, o) in out.iter_mut().enumerate() {
                *o = input.iter().enumerate().map(|(n, v)| pinv[(m, n)] * v).sum();
            }
        });
    }
    ComplexField::new(spec.clone(), values)
}
