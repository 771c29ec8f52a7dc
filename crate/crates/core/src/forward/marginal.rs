use num_complex::Complex64;

use super::{displace::displacement_offsets, OpticalConfig};
use crate::error::{CwsError, Result};
use crate::exec;
use crate::lattice::MAX_AXES;
use crate::oracle::ReducedDensity;

/// Single-photon L/R intensities predicted by a reduced density matrix,
/// normalized so that `Σ (I_L + I_R) = 1`.
pub fn marginal_intensity_exact(rho: &ReducedDensity, cfg: &OpticalConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let spec = rho.spec();
    rho.check_hermitian(1e-10)?;
    let m = cfg.measurement(spec)?;
    let px = displacement_offsets(spec, &m);
    let d = spec.dims_per_photon;
    let len = spec.axis_len as isize;

    let source = |bin: usize, b: usize| -> Option<usize> {
        let mut c = [0usize; MAX_AXES];
        spec.unravel_into(bin, &mut c[..d]);
        let mut idx = 0usize;
        for a in 0..d {
            let t = c[a] as isize - px[b][a];
            if t < 0 || t >= len {
                return None;
            }
            idx = idx * spec.axis_len + t as usize;
        }
        Some(idx)
    };
    let el = |p: Option<usize>, q: Option<usize>| match (p, q) {
        (Some(p), Some(q)) => rho.get(p, q),
        _ => Complex64::new(0.0, 0.0),
    };
    let i = Complex64::new(0.0, 1.0);
    let pairs = exec::map_collect(spec.bins(), |bin| {
        let (p, q) = (source(bin, 0), source(bin, 1));
        let diag = el(p, p) + el(q, q);
        let cross = i * el(q, p) - i * el(p, q);
        ((diag + cross).re.max(0.0), (diag - cross).re.max(0.0))
    });
    let total: f64 = pairs.iter().map(|(l, r)| l + r).sum();
    if total <= 0.0 {
        return Err(CwsError::DegenerateDistribution);
    }
    Ok(pairs.into_iter().map(|(l, r)| (l / total, r / total)).unzip())
}
