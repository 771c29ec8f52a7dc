//! Lattice geometry and complex field containers.
//!
//! Axes are ordered `(x1, y1, x2, y2, ...)` (or `(x1, x2, ...)` with one
//! transverse dimension per photon) and values are stored row-major, so the
//! last axis varies fastest.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CwsError, Result};
use crate::exec;

/// Upper bound on `n * dims_per_photon`.
pub const MAX_AXES: usize = 16;

/// A regular transverse-coordinate lattice shared by all photons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    /// Photon count.
    pub n: usize,
    /// Transverse dimensions per photon, 1 or 2.
    pub dims_per_photon: usize,
    /// Samples per axis.
    pub axis_len: usize,
    /// Pixel pitch in meters.
    pub pitch: f64,
    /// Physical coordinate of index 0, one entry per axis.
    pub origin: Vec<f64>,
}

impl LatticeSpec {
    /// Lattice centered on zero: `origin = -(axis_len - 1) * pitch / 2` on every axis.
    pub fn new(n: usize, dims_per_photon: usize, axis_len: usize, pitch: f64) -> Result<Self> {
        let start = -((axis_len as f64) - 1.0) * pitch / 2.0;
        Self::with_origin(n, dims_per_photon, axis_len, pitch, vec![start; n * dims_per_photon])
    }

    pub fn with_origin(
        n: usize,
        dims_per_photon: usize,
        axis_len: usize,
        pitch: f64,
        origin: Vec<f64>,
    ) -> Result<Self> {
        let spec = LatticeSpec { n, dims_per_photon, axis_len, pitch, origin };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(CwsError::arg("photon count must be at least 1"));
        }
        if !(1..=2).contains(&self.dims_per_photon) {
            return Err(CwsError::arg("dims_per_photon must be 1 or 2"));
        }
        if self.axis_len < 2 {
            return Err(CwsError::arg("axis_len must be at least 2"));
        }
        if !(self.pitch > 0.0 && self.pitch.is_finite()) {
            return Err(CwsError::arg("pitch must be positive and finite"));
        }
        let axes = self.n * self.dims_per_photon;
        if axes > MAX_AXES {
            return Err(CwsError::arg(format!("at most {MAX_AXES} axes supported")));
        }
        if self.origin.len() != axes {
            return Err(CwsError::arg(format!(
                "origin has {} entries, expected {axes}",
                self.origin.len()
            )));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(CwsError::arg("origin must be finite"));
        }
        (self.axis_len as u128)
            .checked_pow(axes as u32)
            .filter(|&b| b <= usize::MAX as u128)
            .ok_or_else(|| CwsError::arg("lattice too large"))?;
        Ok(())
    }

    pub fn axes(&self) -> usize {
        self.n * self.dims_per_photon
    }

    pub fn bins(&self) -> usize {
        self.axis_len.pow(self.axes() as u32)
    }

    /// Distance in the flat index between neighbors along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.axis_len.pow((self.axes() - 1 - axis) as u32)
    }

    /// Lattice axis of the given photon's transverse component (0 = x, 1 = y).
    pub fn axis_of(&self, photon: usize, component: usize) -> usize {
        photon * self.dims_per_photon + component
    }

    pub fn photon_of_axis(&self, axis: usize) -> usize {
        axis / self.dims_per_photon
    }

    pub fn component_of_axis(&self, axis: usize) -> usize {
        axis % self.dims_per_photon
    }

    pub fn coord(&self, axis: usize, index: usize) -> f64 {
        self.origin[axis] + index as f64 * self.pitch
    }

    /// Nearest lattice index to a physical coordinate, if it lies on the lattice.
    pub fn nearest_index(&self, axis: usize, x: f64) -> Option<usize> {
        let t = ((x - self.origin[axis]) / self.pitch).round();
        (t >= 0.0 && t < self.axis_len as f64).then_some(t as usize)
    }

    /// Index nearest the physical origin, per axis.
    pub fn center_coords(&self) -> Vec<usize> {
        (0..self.axes())
            .map(|a| {
                let t = (-self.origin[a] / self.pitch).round();
                t.clamp(0.0, (self.axis_len - 1) as f64) as usize
            })
            .collect()
    }

    /// Volume element `pitch^axes`.
    pub fn bin_volume(&self) -> f64 {
        self.pitch.powi(self.axes() as i32)
    }

    /// Single-photon lattice with this photon's axes.
    pub fn photon_spec(&self, photon: usize) -> LatticeSpec {
        let d = self.dims_per_photon;
        LatticeSpec {
            n: 1,
            dims_per_photon: d,
            axis_len: self.axis_len,
            pitch: self.pitch,
            origin: self.origin[photon * d..(photon + 1) * d].to_vec(),
        }
    }

    pub fn same_grid(&self, other: &LatticeSpec) -> bool {
        self == other
    }

    pub(crate) fn unravel_into(&self, mut index: usize, out: &mut [usize]) {
        for a in (0..self.axes()).rev() {
            out[a] = index % self.axis_len;
            index /= self.axis_len;
        }
    }

    /// Flat index of the neighbor `index + step * e_axis`, if on the lattice.
    pub fn offset(&self, index: usize, axis: usize, step: isize) -> Option<usize> {
        let stride = self.stride(axis);
        let c = (index / stride) % self.axis_len;
        let t = c as isize + step;
        if t < 0 || t >= self.axis_len as isize {
            return None;
        }
        Some((index as isize + step * stride as isize) as usize)
    }
}

/// Row-major flat index of per-axis coordinates.
pub fn linear_index(coords: &[usize], spec: &LatticeSpec) -> Result<usize> {
    if coords.len() != spec.axes() {
        return Err(CwsError::arg(format!(
            "expected {} coordinates, got {}",
            spec.axes(),
            coords.len()
        )));
    }
    let mut idx = 0usize;
    for (axis, &c) in coords.iter().enumerate() {
        if c >= spec.axis_len {
            return Err(CwsError::Index { axis, value: c, len: spec.axis_len });
        }
        idx = idx * spec.axis_len + c;
    }
    Ok(idx)
}

/// Inverse of [`linear_index`].
pub fn unravel_index(index: usize, spec: &LatticeSpec) -> Result<Vec<usize>> {
    if index >= spec.bins() {
        return Err(CwsError::Index { axis: 0, value: index, len: spec.bins() });
    }
    let mut out = vec![0; spec.axes()];
    spec.unravel_into(index, &mut out);
    Ok(out)
}

/// Complex amplitude sampled on a lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    spec: LatticeSpec,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(spec: LatticeSpec, values: Vec<Complex64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.bins() {
            return Err(CwsError::arg(format!(
                "field has {} values, lattice has {} bins",
                values.len(),
                spec.bins()
            )));
        }
        if let Some(bin) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(CwsError::arg(format!("non-finite value at bin {bin}")));
        }
        Ok(ComplexField { spec, values })
    }

    pub fn zeros(spec: LatticeSpec) -> Self {
        let bins = spec.bins();
        ComplexField { spec, values: vec![Complex64::new(0.0, 0.0); bins] }
    }

    /// Samples `f` at the physical coordinates of every bin.
    pub fn from_fn<F>(spec: LatticeSpec, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Complex64 + Sync + Send,
    {
        spec.validate()?;
        let mut values = vec![Complex64::new(0.0, 0.0); spec.bins()];
        let axes = spec.axes();
        exec::fill_indexed(&mut values, |i| {
            let mut idx = [0usize; MAX_AXES];
            let mut r = [0.0f64; MAX_AXES];
            spec.unravel_into(i, &mut idx[..axes]);
            for a in 0..axes {
                r[a] = spec.coord(a, idx[a]);
            }
            f(&r[..axes])
        });
        ComplexField::new(spec, values)
    }

    pub(crate) fn from_parts_unchecked(spec: LatticeSpec, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), spec.bins());
        ComplexField { spec, values }
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn get(&self, coords: &[usize]) -> Result<Complex64> {
        Ok(self.values[linear_index(coords, &self.spec)?])
    }

    /// `Σ|ψ|²` times the bin volume.
    pub fn norm_sqr(&self) -> f64 {
        let v = &self.values;
        exec::sum_indexed(v.len(), |i| v[i].norm_sqr()) * self.spec.bin_volume()
    }

    pub fn scale(&self, s: Complex64) -> ComplexField {
        self.map(|z| z * s)
    }

    pub fn map<F>(&self, f: F) -> ComplexField
    where
        F: Fn(Complex64) -> Complex64 + Sync + Send,
    {
        let mut values = vec![Complex64::new(0.0, 0.0); self.values.len()];
        let src = &self.values;
        exec::fill_indexed(&mut values, |i| f(src[i]));
        ComplexField { spec: self.spec.clone(), values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Scales the field so that `Σ|ψ|²·Δ^axes = 1`; phases are untouched.
pub fn normalize(field: &ComplexField) -> Result<ComplexField> {
    let norm = field.norm_sqr();
    if norm == 0.0 {
        return Err(CwsError::DegenerateField);
    }
    if !norm.is_finite() {
        return Err(CwsError::arg("field norm overflows"));
    }
    let s = 1.0 / norm.sqrt();
    Ok(field.map(|z| z * s))
}

/// How one axis of a parent field maps onto a 2D slice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SliceAxis {
    /// Follows output axis 0 or 1.
    Free(usize),
    /// Held at this index.
    Fixed(usize),
}

/// General 2D slice: every parent axis either follows one of the two output
/// axes or is held fixed. Mapping several parent axes to the same output
/// axis gives diagonal slices such as `ψ(x, y, x, y)`.
pub fn slice_2d(field: &ComplexField, axes: &[SliceAxis]) -> Result<ComplexField> {
    let spec = field.spec();
    if axes.len() != spec.axes() {
        return Err(CwsError::arg(format!(
            "slice needs {} axis entries, got {}",
            spec.axes(),
            axes.len()
        )));
    }
    let mut origin = [None, None];
    for (a, s) in axes.iter().enumerate() {
        match *s {
            SliceAxis::Free(k) if k < 2 => {
                origin[k].get_or_insert(spec.origin[a]);
            }
            SliceAxis::Free(k) => return Err(CwsError::arg(format!("output axis {k} out of range"))),
            SliceAxis::Fixed(i) if i >= spec.axis_len => {
                return Err(CwsError::Index { axis: a, value: i, len: spec.axis_len })
            }
            SliceAxis::Fixed(_) => {}
        }
    }
    let (Some(o0), Some(o1)) = (origin[0], origin[1]) else {
        return Err(CwsError::arg("slice must leave both output axes free"));
    };
    let out_spec = LatticeSpec::with_origin(1, 2, spec.axis_len, spec.pitch, vec![o0, o1])?;
    let n = spec.axis_len;
    let mut values = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut flat = 0usize;
            for s in axes {
                let c = match *s {
                    SliceAxis::Free(0) => i,
                    SliceAxis::Free(_) => j,
                    SliceAxis::Fixed(c) => c,
                };
                flat = flat * n + c;
            }
            values.push(field.values[flat]);
        }
    }
    Ok(ComplexField::from_parts_unchecked(out_spec, values))
}

/// Fixes all but two axes; the remaining two become the slice axes in order.
pub fn window_slice(field: &ComplexField, fixed: &BTreeMap<usize, usize>) -> Result<ComplexField> {
    let axes = field.spec().axes();
    if let Some(&a) = fixed.keys().find(|&&a| a >= axes) {
        return Err(CwsError::arg(format!("axis {a} out of range")));
    }
    let free = axes - fixed.len();
    if free != 2 {
        return Err(CwsError::arg(format!("window slice needs exactly two free axes, got {free}")));
    }
    let mut next = 0;
    let plan: Vec<SliceAxis> = (0..axes)
        .map(|a| match fixed.get(&a) {
            Some(&i) => SliceAxis::Fixed(i),
            None => {
                next += 1;
                SliceAxis::Free(next - 1)
            }
        })
        .collect();
    slice_2d(field, &plan)
}

/// Physical constants in SI units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Reduced Planck constant, J·s.
    pub hbar: f64,
    /// Planck constant, J·s; always `2π·hbar`.
    pub h: f64,
    /// Speed of light, m/s.
    pub c: f64,
}

impl PhysicalConstants {
    pub fn new(hbar: f64, c: f64) -> Self {
        PhysicalConstants { hbar, h: 2.0 * std::f64::consts::PI * hbar, c }
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants::new(1.054_571_817e-34, 299_792_458.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn origin_index_is_zero() {
        let spec = LatticeSpec::new(2, 2, 5, 1.0).unwrap();
        assert_eq!(linear_index(&[0, 0, 0, 0], &spec).unwrap(), 0);
    }

    #[test]
    fn row_major_example() {
        let spec = LatticeSpec::new(2, 2, 4, 1.0).unwrap();
        assert_eq!(linear_index(&[1, 2, 3, 0], &spec).unwrap(), 108);
    }

    #[test]
    fn out_of_range_coordinate() {
        let spec = LatticeSpec::new(2, 2, 4, 1.0).unwrap();
        assert!(matches!(
            linear_index(&[0, 0, 0, 4], &spec),
            Err(CwsError::Index { axis: 3, value: 4, len: 4 })
        ));
    }

    #[test]
    fn centered_origin() {
        let spec = LatticeSpec::new(1, 2, 5, 0.5).unwrap();
        assert_eq!(spec.origin, vec![-1.0, -1.0]);
        assert_eq!(spec.center_coords(), vec![2, 2]);
        assert_eq!(spec.coord(0, 4), 1.0);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(LatticeSpec::new(2, 2, 1, 1.0).is_err());
        assert!(LatticeSpec::new(2, 3, 4, 1.0).is_err());
        assert!(LatticeSpec::new(2, 2, 4, 0.0).is_err());
        assert!(LatticeSpec::new(0, 2, 4, 1.0).is_err());
    }

    #[test]
    fn offset_respects_edges() {
        let spec = LatticeSpec::new(2, 1, 4, 1.0).unwrap();
        let i = linear_index(&[3, 0], &spec).unwrap();
        assert_eq!(spec.offset(i, 0, 1), None);
        assert_eq!(spec.offset(i, 0, -1), Some(linear_index(&[2, 0], &spec).unwrap()));
        assert_eq!(spec.offset(i, 1, -1), None);
    }

    #[test]
    fn constant_field_slices_to_constant() {
        let spec = LatticeSpec::new(2, 2, 4, 1.0).unwrap();
        let f = ComplexField::new(spec, vec![Complex64::new(0.5, -1.0); 256]).unwrap();
        let fixed = BTreeMap::from([(1, 2), (3, 0)]);
        let s = window_slice(&f, &fixed).unwrap();
        assert_eq!(s.values().len(), 16);
        assert!(s.values().iter().all(|&v| v == Complex64::new(0.5, -1.0)));
    }

    #[test]
    fn slice_picks_parent_values() {
        let spec = LatticeSpec::new(2, 2, 4, 1.0).unwrap();
        let mut vals = Vec::new();
        for x1 in 0..4 {
            for _y1 in 0..4 {
                for x2 in 0..4 {
                    for _y2 in 0..4 {
                        vals.push(c((x1 + 10 * x2) as f64));
                    }
                }
            }
        }
        let f = ComplexField::new(spec, vals).unwrap();
        let s = window_slice(&f, &BTreeMap::from([(1, 0), (3, 0)])).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(s.values()[i * 4 + j], c((i + 10 * j) as f64));
            }
        }
    }

    #[test]
    fn window_slice_needs_two_free_axes() {
        let spec = LatticeSpec::new(2, 2, 4, 1.0).unwrap();
        let f = ComplexField::zeros(spec);
        let r = window_slice(&f, &BTreeMap::from([(0, 0), (1, 0), (2, 0)]));
        assert!(matches!(r, Err(CwsError::Argument(_))));
    }

    #[test]
    fn diagonal_slice() {
        let spec = LatticeSpec::new(2, 2, 3, 1.0).unwrap();
        let f = ComplexField::from_fn(spec, |r| c(r[0] - r[2] + 10.0 * (r[1] - r[3]))).unwrap();
        use SliceAxis::*;
        let s = slice_2d(&f, &[Free(0), Free(1), Free(0), Free(1)]).unwrap();
        assert!(s.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn normalize_single_bin() {
        let spec = LatticeSpec::new(1, 1, 4, 1.0).unwrap();
        let f = ComplexField::new(spec, vec![c(0.0), c(2.0), c(0.0), c(0.0)]).unwrap();
        let g = normalize(&f).unwrap();
        assert_eq!(g.values()[1], c(1.0));
    }

    #[test]
    fn normalize_uniform() {
        let spec = LatticeSpec::new(2, 2, 4, 1.0).unwrap();
        let f = ComplexField::new(spec, vec![c(3.0); 256]).unwrap();
        let g = normalize(&f).unwrap();
        for v in g.values() {
            assert!((v.norm() - 1.0 / 16.0).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_zero_field() {
        let spec = LatticeSpec::new(1, 2, 4, 1.0).unwrap();
        assert!(matches!(normalize(&ComplexField::zeros(spec)), Err(CwsError::DegenerateField)));
    }

    #[test]
    fn rejects_non_finite_values() {
        let spec = LatticeSpec::new(1, 1, 2, 1.0).unwrap();
        assert!(ComplexField::new(spec, vec![c(f64::NAN), c(0.0)]).is_err());
    }

    #[test]
    fn planck_relation_exact() {
        let k = PhysicalConstants::default();
        assert_eq!(k.h, 2.0 * std::f64::consts::PI * k.hbar);
    }

    fn arb_spec() -> impl Strategy<Value = LatticeSpec> {
        (1usize..=3, 1usize..=2, 2usize..=7)
            .prop_map(|(n, d, len)| LatticeSpec::new(n, d, len, 1e-5).unwrap())
    }

    fn arb_field() -> impl Strategy<Value = ComplexField> {
        (1usize..=2, 2usize..=5).prop_flat_map(|(d, len)| {
            let spec = LatticeSpec::new(2, d, len, 0.3).unwrap();
            let bins = spec.bins();
            prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), bins).prop_map(move |v| {
                let vals = v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect();
                ComplexField::new(spec.clone(), vals).unwrap()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn index_round_trip(spec in arb_spec(), seeds in prop::collection::vec(any::<u64>(), 50)) {
            for s in seeds {
                let coords: Vec<usize> = (0..spec.axes())
                    .map(|a| ((s >> (a * 4)) as usize) % spec.axis_len)
                    .collect();
                let i = linear_index(&coords, &spec).unwrap();
                prop_assert!(i < spec.bins());
                prop_assert_eq!(unravel_index(i, &spec).unwrap(), coords);
            }
        }

        #[test]
        fn normalize_idempotent(f in arb_field()) {
            prop_assume!(f.norm_sqr() > 1e-6);
            let g = normalize(&f).unwrap();
            let h = normalize(&g).unwrap();
            prop_assert!((g.norm_sqr() - 1.0).abs() < 1e-12);
            for (a, b) in g.values().iter().zip(h.values()) {
                prop_assert!((a - b).norm() <= 1e-15 * a.norm().max(1.0));
            }
        }

        #[test]
        fn slice_commutes_with_scaling(f in arb_field(), re in -3.0f64..3.0, im in -3.0f64..3.0) {
            let s = Complex64::new(re, im);
            let axes = f.spec().axes();
            let fixed: BTreeMap<usize, usize> = (2..axes).map(|a| (a, 1)).collect();
            let a = window_slice(&f.scale(s), &fixed).unwrap();
            let b = window_slice(&f, &fixed).unwrap().scale(s);
            prop_assert_eq!(a, b);
        }
    }
}
