//! Brute-force and closed-form references used to check the production
//! paths. Everything here is deliberately slow and restricted to small
//! lattices.

use num_complex::Complex64;

use crate::error::{CwsError, Result};
use crate::estimator::GradientField;
use crate::exec;
use crate::forward::{MeasurementAxis, OpticalConfig};
use crate::lattice::{linear_index, ComplexField, LatticeSpec, PhysicalConstants, MAX_AXES};
use crate::states::{GaussianSchellParams, PhasePattern};

/// Largest lattice (in bins) any oracle accepts.
pub const MAX_ORACLE_BINS: usize = 32usize.pow(4);
/// Largest axis length for the two-dimensional oracles.
pub const MAX_ORACLE_AXIS_2D: usize = 64;

fn check_size(spec: &LatticeSpec) -> Result<()> {
    if spec.bins() > MAX_ORACLE_BINS {
        return Err(CwsError::arg(format!("oracle limited to {MAX_ORACLE_BINS} bins, got {}", spec.bins())));
    }
    Ok(())
}

/// Fourier-lens transform of one photon by explicit summation over every
/// source point.
pub fn dft_direct(field: &ComplexField, photon: usize, cfg: &OpticalConfig) -> Result<ComplexField> {
    let spec = field.spec();
    check_size(spec)?;
    if photon >= spec.n {
        return Err(CwsError::arg("photon out of range"));
    }
    let alpha = 2.0 * std::f64::consts::PI / (cfg.wavelength * cfg.focal_length);
    let d = spec.dims_per_photon;
    let axes = spec.axes();
    let n = spec.axis_len;
    let sources = n.pow(d as u32);
    let vol = spec.pitch.powi(d as i32);
    let src = field.values();
    let mut out = vec![Complex64::new(0.0, 0.0); spec.bins()];
    exec::fill_indexed(&mut out, |b| {
        let mut c = [0usize; MAX_AXES];
        spec.unravel_into(b, &mut c[..axes]);
        let u: Vec<f64> = (0..d).map(|k| spec.coord(photon * d + k, c[photon * d + k])).collect();
        let mut acc = Complex64::new(0.0, 0.0);
        let mut s = c;
        for t in 0..sources {
            let mut rest = t;
            let mut dot = 0.0;
            for k in (0..d).rev() {
                let a = photon * d + k;
                s[a] = rest % n;
                rest /= n;
                dot += u[k] * spec.coord(a, s[a]);
            }
            let idx = s[..axes].iter().fold(0usize, |acc, &v| acc * n + v);
            acc += src[idx] * Complex64::new(0.0, -alpha * dot).exp();
        }
        acc * vol
    });
    ComplexField::new(spec.clone(), out)
}

/// Weak value of transverse momentum `(-iħ ∂ψ/∂x) / ψ` at a lattice point,
/// in kg·m/s, using a fourth-order central difference (second order next to
/// the lattice edge).
pub fn weak_value_momentum(field: &ComplexField, point: &[usize], photon: usize, component: usize) -> Result<Complex64> {
    let spec = field.spec();
    if photon >= spec.n || component >= spec.dims_per_photon {
        return Err(CwsError::arg("photon or component out of range"));
    }
    let b = linear_index(point, spec)?;
    let psi = field.values()[b];
    if psi.norm() <= 1e-12 * field.max_abs() {
        return Err(CwsError::ZeroAmplitude { bin: b });
    }
    let a = spec.axis_of(photon, component);
    let v = |step: isize| spec.offset(b, a, step).map(|i| field.values()[i]);
    let h = spec.pitch;
    let deriv = match (v(-2), v(-1), v(1), v(2)) {
        (Some(m2), Some(m1), Some(p1), Some(p2)) => (m2 - p2 + (p1 - m1) * 8.0) / (12.0 * h),
        (_, Some(m1), Some(p1), _) => (p1 - m1) / (2.0 * h),
        _ => return Err(CwsError::arg("point has no neighbors on both sides")),
    };
    let hbar = PhysicalConstants::default().hbar;
    Ok(Complex64::new(0.0, -hbar) * deriv / psi)
}

/// Closed-form Fourier-lens transform of the Gaussian–Schell state on
/// photon 1, at camera point `r1` and source point `r2`, optionally with an
/// added phase on photon 2.
pub fn gaussian_schell_ft_analytic(
    params: GaussianSchellParams,
    cfg: &OpticalConfig,
    r1: &[f64],
    r2: &[f64],
    added: Option<&PhasePattern>,
) -> Complex64 {
    let (a, b) = (params.a, params.b);
    let alpha = 2.0 * std::f64::consts::PI / (cfg.wavelength * cfg.focal_length);
    let k: Vec<f64> = r1.iter().map(|x| alpha * x).collect();
    let kk: f64 = k.iter().map(|v| v * v).sum();
    let kr: f64 = k.iter().zip(r2).map(|(p, q)| p * q).sum();
    let rr: f64 = r2.iter().map(|v| v * v).sum();
    let num = Complex64::new(kk + 4.0 * a * (a + 2.0 * b) * rr, 4.0 * b * kr);
    let phase = added.map_or(0.0, |p| p.sample(r2[0], r2.get(1).copied().unwrap_or(0.0)));
    (-num / (4.0 * (a + b))).exp() * Complex64::from_polar(1.0, phase)
}

/// Matrix elements `⟨r|ρ|r'⟩` of a single-photon density operator.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedDensity {
    spec: LatticeSpec,
    values: Vec<Complex64>,
}

impl ReducedDensity {
    pub fn new(spec: LatticeSpec, values: Vec<Complex64>) -> Result<Self> {
        if spec.n != 1 {
            return Err(CwsError::arg("reduced density lives on a single-photon lattice"));
        }
        check_size(&spec)?;
        if values.len() != spec.bins() * spec.bins() {
            return Err(CwsError::arg("density matrix size does not match the lattice"));
        }
        Ok(ReducedDensity { spec, values })
    }

    /// Tabulates `f(r, r')` at physical coordinates.
    pub fn from_fn<F>(spec: LatticeSpec, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> Complex64 + Sync + Send,
    {
        let bins = spec.bins();
        if bins * bins > 1 << 26 {
            return Err(CwsError::arg("density matrix too large"));
        }
        let coords: Vec<Vec<f64>> = (0..bins)
            .map(|b| {
                let mut c = [0usize; MAX_AXES];
                spec.unravel_into(b, &mut c[..spec.axes()]);
                (0..spec.axes()).map(|a| spec.coord(a, c[a])).collect()
            })
            .collect();
        let mut values = vec![Complex64::new(0.0, 0.0); bins * bins];
        exec::fill_indexed(&mut values, |k| f(&coords[k / bins], &coords[k % bins]));
        Self::new(spec, values)
    }

    /// `Tr_others |ψ⟩⟨ψ|` by direct summation.
    pub fn partial_trace(field: &ComplexField, keep: usize) -> Result<Self> {
        let spec = field.spec();
        check_size(spec)?;
        if keep >= spec.n {
            return Err(CwsError::arg("photon out of range"));
        }
        let pspec = spec.photon_spec(keep);
        let pb = pspec.bins();
        let ob = spec.bins() / pb;
        let d = spec.dims_per_photon;
        let axes = spec.axes();
        let n = spec.axis_len;
        // table[p][o] = flat index of (photon keep at p, others at o)
        let mut table = vec![0usize; pb * ob];
        let mut c = [0usize; MAX_AXES];
        for b in 0..spec.bins() {
            spec.unravel_into(b, &mut c[..axes]);
            let p = c[keep * d..(keep + 1) * d].iter().fold(0, |acc, &v| acc * n + v);
            let o = (0..axes).filter(|a| a / d != keep).fold(0, |acc, a| acc * n + c[a]);
            table[p * ob + o] = b;
        }
        let psi = field.values();
        let vol = spec.pitch.powi((axes - d) as i32);
        let mut values = vec![Complex64::new(0.0, 0.0); pb * pb];
        exec::fill_indexed(&mut values, |k| {
            let (p, q) = (k / pb, k % pb);
            let mut acc = Complex64::new(0.0, 0.0);
            for o in 0..ob {
                acc += psi[table[p * ob + o]] * psi[table[q * ob + o]].conj();
            }
            acc * vol
        });
        Self::new(pspec, values)
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize) -> Complex64 {
        self.values[p * self.spec.bins() + q]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn trace(&self) -> f64 {
        (0..self.spec.bins()).map(|p| self.get(p, p).re).sum()
    }

    /// Fails unless `|ρ - ρ†| <= tol · max|ρ|` elementwise.
    pub fn check_hermitian(&self, tol: f64) -> Result<()> {
        let bins = self.spec.bins();
        let scale = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for p in 0..bins {
            for q in p..bins {
                if (self.get(p, q) - self.get(q, p).conj()).norm() > tol * scale {
                    return Err(CwsError::arg(format!("density matrix is not Hermitian at ({p}, {q})")));
                }
            }
        }
        Ok(())
    }

    /// Multiplies by `e^{i(φ(r) - φ(r'))}`: the effect of a phase mask.
    pub fn with_added_phase(&self, phase: impl Fn(&[f64]) -> f64) -> ReducedDensity {
        let bins = self.spec.bins();
        let axes = self.spec.axes();
        let ph: Vec<f64> = (0..bins)
            .map(|b| {
                let mut c = [0usize; MAX_AXES];
                self.spec.unravel_into(b, &mut c[..axes]);
                let r: Vec<f64> = (0..axes).map(|a| self.spec.coord(a, c[a])).collect();
                phase(&r)
            })
            .collect();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| v * Complex64::from_polar(1.0, ph[k / bins] - ph[k % bins]))
            .collect();
        ReducedDensity { spec: self.spec.clone(), values }
    }
}

/// Closed-form reduced density of one photon of the Gaussian–Schell pair
/// (unnormalized).
pub fn reduced_density_gs(params: GaussianSchellParams, r: &[f64], rp: &[f64]) -> Complex64 {
    let (a, b) = (params.a, params.b);
    let s: f64 = r.iter().chain(rp).map(|v| v * v).sum();
    let d: f64 = r.iter().zip(rp).map(|(p, q)| (p - q) * (p - q)).sum();
    Complex64::new((-(2.0 * a * (a + 2.0 * b) * s + b * b * d) / (2.0 * (a + b))).exp(), 0.0)
}

/// First-order conditional intensities `A²(1 ∓ sin 2lk)` evaluated at the
/// shifted measurement point, with `A` and `k` read off the field itself.
#[derive(Clone, Debug, PartialEq)]
pub struct FirstOrderConditional {
    pub i_l: Vec<f64>,
    pub i_r: Vec<f64>,
    /// False where the evaluation point or its neighbors leave the lattice.
    pub valid: Vec<bool>,
}

pub fn first_order_conditional(field: &ComplexField, cfg: &OpticalConfig, photon: usize) -> Result<FirstOrderConditional> {
    let spec = field.spec();
    check_size(spec)?;
    if photon >= spec.n {
        return Err(CwsError::arg("photon out of range"));
    }
    let s = (cfg.displacement / spec.pitch).round() as isize;
    let l = cfg.displacement;
    let d = spec.dims_per_photon;
    let (comp, shift_comp, shift) = match (cfg.axis, d) {
        (MeasurementAxis::Kx, 1) => (0, 0, 0),
        (MeasurementAxis::Kx, _) => (0, 1, -s),
        (MeasurementAxis::Ky, 1) => return Err(CwsError::arg("k_y needs two transverse dimensions")),
        (MeasurementAxis::Ky, _) => (1, 0, s),
    };
    let psi = field.values();
    let diff_axis = spec.axis_of(photon, comp);
    let per_bin = exec::map_collect(spec.bins(), |b| {
        let mut p = Some(b);
        for j in 0..spec.n {
            p = p.and_then(|p| spec.offset(p, spec.axis_of(j, shift_comp), shift));
        }
        let Some(p) = p else { return (0.0, 0.0, false) };
        let (Some(fw), Some(bw)) = (spec.offset(p, diff_axis, 1), spec.offset(p, diff_axis, -1)) else {
            return (0.0, 0.0, false);
        };
        let a2 = psi[p].norm_sqr();
        let k = (psi[fw] * psi[bw].conj()).arg() / (2.0 * spec.pitch);
        let sn = (2.0 * l * k).sin();
        match cfg.axis {
            MeasurementAxis::Kx => (a2 * (1.0 - sn), a2 * (1.0 + sn), true),
            MeasurementAxis::Ky => (a2 * (1.0 + sn), a2 * (1.0 - sn), true),
        }
    });
    let mut out = FirstOrderConditional { i_l: Vec::new(), i_r: Vec::new(), valid: Vec::new() };
    for (l, r, v) in per_bin {
        out.i_l.push(l);
        out.i_r.push(r);
        out.valid.push(v);
    }
    Ok(out)
}

/// Least-squares phase from a two-axis forward-difference gradient field,
/// fixed to zero mean over the mask. Solved by conjugate gradients on the
/// graph Laplacian of the mask.
pub fn zonal_reference_2d(grad: &GradientField) -> Result<Vec<f64>> {
    let spec = &grad.spec;
    if spec.axes() != 2 || spec.axis_len > MAX_ORACLE_AXIS_2D {
        return Err(CwsError::arg(format!("zonal reference needs a 2D lattice of at most {MAX_ORACLE_AXIS_2D} per axis")));
    }
    grad.validate()?;
    let bins = spec.bins();
    let mask = &grad.mask;
    let nodes: Vec<usize> = (0..bins).filter(|&b| mask[b]).collect();
    if nodes.is_empty() {
        return Err(CwsError::Degenerate("empty mask".into()));
    }
    let reach = crate::estimator::connected_component(spec, mask, nodes[0]);
    if reach.iter().filter(|&&r| r).count() != nodes.len() {
        return Err(CwsError::Degenerate("mask is not connected".into()));
    }
    let h = spec.pitch;
    // edges (b, b + e_a) with measured difference g·h
    let mut edges = Vec::new();
    for &b in &nodes {
        for a in 0..2 {
            if let Some(nb) = spec.offset(b, a, 1) {
                if mask[nb] {
                    edges.push((b, nb, grad.components[a][b] * h));
                }
            }
        }
    }
    let apply = |x: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(p, q, _) in &edges {
            let d = x[q] - x[p];
            out[q] += d;
            out[p] -= d;
        }
    };
    let mut rhs = vec![0.0; bins];
    for &(p, q, g) in &edges {
        rhs[q] += g;
        rhs[p] -= g;
    }
    let mean = |v: &mut [f64]| {
        let m = nodes.iter().map(|&b| v[b]).sum::<f64>() / nodes.len() as f64;
        for &b in &nodes {
            v[b] -= m;
        }
    };
    mean(&mut rhs);
    let dot = |a: &[f64], b: &[f64]| nodes.iter().map(|&i| a[i] * b[i]).sum::<f64>();
    let mut x = vec![0.0; bins];
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; bins];
    let mut rr = dot(&r, &r);
    let tol = 1e-26 * dot(&rhs, &rhs).max(1e-300);
    for _ in 0..20 * nodes.len() {
        if rr <= tol {
            break;
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for &i in &nodes {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        for &i in &nodes {
            p[i] = r[i] + rr_new / rr * p[i];
        }
        rr = rr_new;
    }
    mean(&mut x);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::make_gaussian_schell;

    #[test]
    fn impulse_gives_constant_modulus() {
        let spec = LatticeSpec::new(1, 2, 6, 25e-6).unwrap();
        let mut v = vec![Complex64::new(0.0, 0.0); 36];
        v[14] = Complex64::new(1.0, 0.0);
        let f = ComplexField::new(spec, v).unwrap();
        let cfg = OpticalConfig::new(800e-9, 0.2, 25e-6, MeasurementAxis::Kx, vec![true]).unwrap();
        let g = dft_direct(&f, 0, &cfg).unwrap();
        let m0 = g.values()[0].norm();
        assert!(g.values().iter().all(|v| (v.norm() - m0).abs() < 1e-12 * m0));
    }

    #[test]
    fn weak_value_of_tilt() {
        let k0 = 10e3;
        let spec = LatticeSpec::new(1, 1, 40, 25e-6).unwrap();
        let f = ComplexField::from_fn(spec, move |r| {
            Complex64::from_polar((-r[0] * r[0] / (0.3e-3f64).powi(2)).exp(), k0 * r[0])
        })
        .unwrap();
        let hbar = PhysicalConstants::default().hbar;
        for i in 5..35 {
            let p = weak_value_momentum(&f, &[i], 0, 0).unwrap();
            assert!((p.re / hbar - k0).abs() < 1e-3 * k0, "{i}: {}", p.re / hbar);
        }
    }

    #[test]
    fn weak_value_zero_amplitude() {
        let spec = LatticeSpec::new(1, 1, 8, 25e-6).unwrap();
        let mut v = vec![Complex64::new(1.0, 0.0); 8];
        v[4] = Complex64::new(0.0, 0.0);
        let f = ComplexField::new(spec, v).unwrap();
        assert!(matches!(weak_value_momentum(&f, &[4], 0, 0), Err(CwsError::ZeroAmplitude { bin: 4 })));
    }

    #[test]
    fn analytic_ft_examples() {
        let p = GaussianSchellParams::new(1e6, 1e9).unwrap();
        let cfg = OpticalConfig::new(800e-9, 0.2, 25e-6, MeasurementAxis::Kx, vec![true, false]).unwrap();
        let v = gaussian_schell_ft_analytic(p, &cfg, &[1e-4, 0.0], &[0.0, 0.0], None);
        assert!(v.im.abs() < 1e-15 && v.re > 0.0);
        let alpha = cfg.lens_scale();
        let v = gaussian_schell_ft_analytic(p, &cfg, &[1e-4, 0.0], &[2e-5, 0.0], None);
        let want = -4.0 * p.b * alpha * 1e-4 * 2e-5 / (4.0 * (p.a + p.b));
        assert!((v.arg() - want).abs() < 1e-12);
    }

    #[test]
    fn reduced_density_examples() {
        let p = GaussianSchellParams::new(1e6, 1e9).unwrap();
        let diag = reduced_density_gs(p, &[0.0, 0.0], &[0.0, 0.0]).re;
        let off = reduced_density_gs(p, &[25e-6, 0.0], &[-25e-6, 0.0]).re;
        let decay = (-(2.0 * p.a * (p.a + 2.0 * p.b) * 2.0 * 625e-12) / (2.0 * (p.a + p.b))).exp() * (-1.2488f64).exp();
        assert!((off / diag / decay - 1.0).abs() < 1e-3);
    }

    #[test]
    fn partial_trace_of_separable_state_is_pure() {
        let spec = LatticeSpec::new(2, 1, 8, 0.1e-3).unwrap();
        let p = GaussianSchellParams::new(2e6, 0.0).unwrap();
        let f = make_gaussian_schell(p, &spec).unwrap();
        let rho = ReducedDensity::partial_trace(&f, 1).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let want = (rho.get(i, i).re * rho.get(j, j).re).sqrt();
                assert!((rho.get(i, j).re - want).abs() < 1e-10 * rho.trace());
            }
        }
        rho.check_hermitian(1e-12).unwrap();
    }

    #[test]
    fn first_order_tilt_ratio() {
        let k0 = 10e3;
        let spec = LatticeSpec::new(1, 1, 16, 25e-6).unwrap();
        let f = ComplexField::from_fn(spec, move |r| Complex64::from_polar(1.0, k0 * r[0])).unwrap();
        let cfg = OpticalConfig::new(800e-9, 0.2, 25e-6, MeasurementAxis::Kx, vec![false]).unwrap();
        let fo = first_order_conditional(&f, &cfg, 0).unwrap();
        assert!((fo.i_r[8] / fo.i_l[8] - 2.842).abs() < 1e-3);
        assert!(!fo.valid[0]);
    }

    #[test]
    fn zonal_recovers_consistent_phase() {
        let spec = LatticeSpec::new(1, 2, 20, 1e-5).unwrap();
        let phi: Vec<f64> = (0..400).map(|b| ((b / 20) as f64 * 0.3).sin() + ((b % 20) as f64 * 0.2).powi(2) * 0.1).collect();
        let g = GradientField::from_phase(&spec, &phi, vec![true; 400]).unwrap();
        let x = zonal_reference_2d(&g).unwrap();
        let m = phi.iter().sum::<f64>() / 400.0;
        for b in 0..400 {
            assert!((x[b] - (phi[b] - m)).abs() < 1e-9);
        }
    }

    #[test]
    fn zonal_rejects_disconnected() {
        let spec = LatticeSpec::new(1, 2, 4, 1e-5).unwrap();
        let mut mask = vec![false; 16];
        mask[0] = true;
        mask[15] = true;
        let g = GradientField::from_phase(&spec, &[0.0; 16], mask).unwrap();
        assert!(matches!(zonal_reference_2d(&g), Err(CwsError::Degenerate(_))));
    }
}
