//! Analytic two-photon states and phase patterns.
//!
//! All presets are defined directly in camera coordinates; [`invert_photon`]
//! flips one photon's axes for users who model the raw source plane.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CwsError, Result};
use crate::lattice::{normalize, ComplexField, LatticeSpec};

/// `exp[-a(|r1|²+|r2|²) - b|r1-r2|²]`, parameters in m⁻².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSchellParams {
    pub a: f64,
    pub b: f64,
}

impl GaussianSchellParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let p = GaussianSchellParams { a, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(CwsError::arg("Gaussian-Schell a must be positive"));
        }
        if !(self.b >= 0.0 && self.b.is_finite()) {
            return Err(CwsError::arg("Gaussian-Schell b must be non-negative"));
        }
        Ok(())
    }
}

pub fn make_gaussian_schell(params: GaussianSchellParams, spec: &LatticeSpec) -> Result<ComplexField> {
    params.validate()?;
    if spec.n != 2 {
        return Err(CwsError::arg("Gaussian-Schell state needs exactly two photons"));
    }
    let d = spec.dims_per_photon;
    let GaussianSchellParams { a, b } = params;
    let field = ComplexField::from_fn(spec.clone(), |r| {
        let (r1, r2) = r.split_at(d);
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut diff = 0.0;
        for k in 0..d {
            s1 += r1[k] * r1[k];
            s2 += r2[k] * r2[k];
            diff += (r1[k] - r2[k]).powi(2);
        }
        Complex64::new((-a * (s1 + s2) - b * diff).exp(), 0.0)
    })?;
    normalize(&field)
}

/// Physical rectangle covered by a pattern's pixel centers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternExtent {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl PatternExtent {
    /// Square of side `side` centered on zero.
    pub fn centered(side: f64) -> Self {
        PatternExtent { u_min: -side / 2.0, u_max: side / 2.0, v_min: -side / 2.0, v_max: side / 2.0 }
    }

    /// Exactly the span of two lattice axes.
    pub fn of_axes(spec: &LatticeSpec, u_axis: usize, v_axis: usize) -> Self {
        let hi = |a: usize| spec.coord(a, spec.axis_len - 1);
        PatternExtent {
            u_min: spec.origin[u_axis],
            u_max: hi(u_axis),
            v_min: spec.origin[v_axis],
            v_max: hi(v_axis),
        }
    }
}

/// Real phase samples (radians) on a regular grid; `values[row * width + col]`
/// sits at `u = u_min + col·du`, `v = v_min + row·dv`. Sampling between
/// pixel centers is bilinear. A single row or column is constant along
/// that coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePattern {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub extent: PatternExtent,
}

impl PhasePattern {
    pub fn new(width: usize, height: usize, values: Vec<f64>, extent: PatternExtent) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(CwsError::Format(format!(
                "pattern {width}x{height} with {} samples",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CwsError::arg("pattern values must be finite"));
        }
        let e = extent;
        let ok = |lo: f64, hi: f64, n: usize| lo.is_finite() && hi.is_finite() && (n == 1 || hi > lo);
        if !ok(e.u_min, e.u_max, width) || !ok(e.v_min, e.v_max, height) {
            return Err(CwsError::arg("pattern extent must be positive"));
        }
        Ok(PhasePattern { width, height, values, extent })
    }

    /// Samples `f(u, v)` on a `width × height` grid spanning `extent`.
    pub fn from_fn(extent: PatternExtent, width: usize, height: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let du = if width > 1 { (extent.u_max - extent.u_min) / (width - 1) as f64 } else { 0.0 };
        let dv = if height > 1 { (extent.v_max - extent.v_min) / (height - 1) as f64 } else { 0.0 };
        let mut values = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                values.push(f(extent.u_min + col as f64 * du, extent.v_min + row as f64 * dv));
            }
        }
        PhasePattern::new(width, height, values, extent)
    }

    pub fn zero() -> Self {
        PhasePattern::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        PhasePattern {
            width: 1,
            height: 1,
            values: vec![c],
            extent: PatternExtent { u_min: 0.0, u_max: 0.0, v_min: 0.0, v_max: 0.0 },
        }
    }

    fn covers_axis(lo: f64, hi: f64, n: usize, a: f64, b: f64) -> bool {
        if n == 1 {
            return true;
        }
        let tol = 1e-9 * (hi - lo);
        a >= lo - tol && b <= hi + tol
    }

    /// True if `[u0, u1] × [v0, v1]` lies inside the sampled region.
    pub fn covers(&self, u0: f64, u1: f64, v0: f64, v1: f64) -> bool {
        let e = &self.extent;
        Self::covers_axis(e.u_min, e.u_max, self.width, u0, u1)
            && Self::covers_axis(e.v_min, e.v_max, self.height, v0, v1)
    }

    fn locate(lo: f64, hi: f64, n: usize, x: f64) -> (usize, f64) {
        if n == 1 {
            return (0, 0.0);
        }
        let t = ((x - lo) / (hi - lo) * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
        let i = (t.floor() as usize).min(n - 2);
        (i, t - i as f64)
    }

    /// Bilinear sample; positions outside the extent clamp to the border.
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        let e = &self.extent;
        let (c, fu) = Self::locate(e.u_min, e.u_max, self.width, u);
        let (r, fv) = Self::locate(e.v_min, e.v_max, self.height, v);
        let at = |row: usize, col: usize| {
            self.values[row.min(self.height - 1) * self.width + col.min(self.width - 1)]
        };
        let top = at(r, c) * (1.0 - fu) + at(r, c + 1) * fu;
        if fv == 0.0 {
            return top;
        }
        let bottom = at(r + 1, c) * (1.0 - fu) + at(r + 1, c + 1) * fu;
        top * (1.0 - fv) + bottom * fv
    }
}

/// Built-in synthetic patterns, sampled at `samples × samples` over `extent`.
pub mod presets {
    use super::*;

    /// `alpha · u · v`.
    pub fn bilinear(alpha: f64, extent: PatternExtent, samples: usize) -> Result<PhasePattern> {
        PhasePattern::from_fn(extent, samples, samples, |u, v| alpha * u * v)
    }

    /// `qu · u + qv · v`.
    pub fn tilt(qu: f64, qv: f64, extent: PatternExtent, samples: usize) -> Result<PhasePattern> {
        PhasePattern::from_fn(extent, samples, samples, |u, v| qu * u + qv * v)
    }

    /// `amplitude · exp(-|(u,v) - center|² / (2 sigma²))`.
    pub fn gaussian_bump(
        amplitude: f64,
        center: (f64, f64),
        sigma: f64,
        extent: PatternExtent,
        samples: usize,
    ) -> Result<PhasePattern> {
        if !(sigma > 0.0) {
            return Err(CwsError::arg("bump width must be positive"));
        }
        PhasePattern::from_fn(extent, samples, samples, |u, v| {
            let d2 = (u - center.0).powi(2) + (v - center.1).powi(2);
            amplitude * (-d2 / (2.0 * sigma * sigma)).exp()
        })
    }

    /// Tilt plus a Gaussian bump.
    pub fn tilt_bump(
        q: (f64, f64),
        amplitude: f64,
        center: (f64, f64),
        sigma: f64,
        extent: PatternExtent,
        samples: usize,
    ) -> Result<PhasePattern> {
        if !(sigma > 0.0) {
            return Err(CwsError::arg("bump width must be positive"));
        }
        PhasePattern::from_fn(extent, samples, samples, |u, v| {
            let d2 = (u - center.0).powi(2) + (v - center.1).powi(2);
            q.0 * u + q.1 * v + amplitude * (-d2 / (2.0 * sigma * sigma)).exp()
        })
    }

    /// Alternating squares of phase 0 and `amplitude`.
    pub fn checkerboard(amplitude: f64, period: f64, extent: PatternExtent, samples: usize) -> Result<PhasePattern> {
        if !(period > 0.0) {
            return Err(CwsError::arg("checker period must be positive"));
        }
        PhasePattern::from_fn(extent, samples, samples, |u, v| {
            let k = (u / period).floor() as i64 + (v / period).floor() as i64;
            if k.rem_euclid(2) == 0 { 0.0 } else { amplitude }
        })
    }
}

/// Grayscale raster; `pixels[row * width + col]`, values in `0..=maxval`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

/// Parses a binary PGM (`P5`) with 8-bit samples.
pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(CwsError::Format("truncated PGM header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| CwsError::Format("bad PGM header".into()))?);
    }
    if fields[0] != "P5" {
        return Err(CwsError::Format(format!("expected P5, found {}", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| CwsError::Format(format!("bad PGM number {s:?}")));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(CwsError::Format(format!("unsupported PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let len = width * height;
    if width == 0 || height == 0 {
        return Err(CwsError::Format("empty PGM image".into()));
    }
    let data = bytes
        .get(pos..pos + len)
        .ok_or_else(|| CwsError::Format("truncated PGM raster".into()))?;
    Ok(GrayImage { width, height, maxval: maxval as u16, pixels: data.iter().map(|&b| b as u16).collect() })
}

pub fn write_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    out.extend(img.pixels.iter().map(|&p| p.min(255) as u8));
    out
}

/// Linear map `0..=maxval → 0..=phase_span` over a centered square of side
/// `extent` meters.
pub fn load_phase_pattern(image: &GrayImage, phase_span: f64, extent: f64) -> Result<PhasePattern> {
    if image.width == 0 || image.height == 0 || image.pixels.len() != image.width * image.height {
        return Err(CwsError::Format("empty or inconsistent image".into()));
    }
    if !phase_span.is_finite() {
        return Err(CwsError::arg("phase span must be finite"));
    }
    if !(extent > 0.0 && extent.is_finite()) {
        return Err(CwsError::arg("pattern extent must be positive"));
    }
    let scale = phase_span / image.maxval.max(1) as f64;
    let values = image.pixels.iter().map(|&p| p as f64 * scale).collect();
    PhasePattern::new(image.width, image.height, values, PatternExtent::centered(extent))
}

/// Which photon coordinates a pattern's `(u, v)` map onto.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaneAxes {
    /// `u → x_j`, `v → y_j` (with one transverse dimension `v` is held at 0).
    Xy,
    /// `u → y_j`, `v → x_j`.
    Yx,
}

/// Multiplies the field by `exp(i·pattern(u, v))` where `u`, `v` are taken
/// from the lattice axes `u_axis` and `v_axis` (`None` evaluates at `v = 0`).
pub fn apply_pattern_on_axes(
    field: &ComplexField,
    pattern: &PhasePattern,
    u_axis: usize,
    v_axis: Option<usize>,
) -> Result<ComplexField> {
    let spec = field.spec();
    let axes = spec.axes();
    if u_axis >= axes || v_axis.is_some_and(|v| v >= axes) {
        return Err(CwsError::arg("pattern axis out of range"));
    }
    let span = |a: usize| (spec.origin[a], spec.coord(a, spec.axis_len - 1));
    let (u0, u1) = span(u_axis);
    let (v0, v1) = v_axis.map(span).unwrap_or((0.0, 0.0));
    if !pattern.covers(u0, u1, v0, v1) {
        return Err(CwsError::Coverage(format!(
            "lattice spans u∈[{u0:e}, {u1:e}], v∈[{v0:e}, {v1:e}] m; pattern covers u∈[{:e}, {:e}], v∈[{:e}, {:e}] m",
            pattern.extent.u_min, pattern.extent.u_max, pattern.extent.v_min, pattern.extent.v_max
        )));
    }
    let n = spec.axis_len;
    let (su, sv) = (spec.stride(u_axis), v_axis.map(|v| spec.stride(v)));
    // Tabulate once per (u, v) index pair.
    let mut table = vec![Complex64::new(0.0, 0.0); n * n];
    for iu in 0..n {
        for iv in 0..n {
            let v = v_axis.map(|a| spec.coord(a, iv)).unwrap_or(0.0);
            let phase = pattern.sample(spec.coord(u_axis, iu), v);
            table[iu * n + iv] = Complex64::from_polar(1.0, phase);
        }
    }
    let src = field.values();
    let mut values = vec![Complex64::new(0.0, 0.0); src.len()];
    crate::exec::fill_indexed(&mut values, |i| {
        let iu = (i / su) % n;
        let iv = sv.map(|s| (i / s) % n).unwrap_or(0);
        src[i] * table[iu * n + iv]
    });
    ComplexField::new(spec.clone(), values)
}

/// `|ψ'⟩ = exp[iφ_add(r̂_photon)]|ψ⟩`.
pub fn apply_added_phase(
    field: &ComplexField,
    pattern: &PhasePattern,
    photon: usize,
    plane: PlaneAxes,
) -> Result<ComplexField> {
    let spec = field.spec();
    if photon >= spec.n {
        return Err(CwsError::arg(format!("photon {photon} out of range for n={}", spec.n)));
    }
    let x = spec.axis_of(photon, 0);
    let y = (spec.dims_per_photon == 2).then(|| spec.axis_of(photon, 1));
    match (plane, y) {
        (PlaneAxes::Xy, y) => apply_pattern_on_axes(field, pattern, x, y),
        (PlaneAxes::Yx, Some(y)) => apply_pattern_on_axes(field, pattern, y, Some(x)),
        (PlaneAxes::Yx, None) => Err(CwsError::arg("photon has no y axis")),
    }
}

/// `exp{-a(|r1|²+|r2|²) + i[φ_x(x1,x2) + φ_y(y1,y2)]}`, normalized.
pub fn make_phase_patterned(
    a: f64,
    phi_x: &PhasePattern,
    phi_y: &PhasePattern,
    spec: &LatticeSpec,
) -> Result<ComplexField> {
    if spec.n != 2 || spec.dims_per_photon != 2 {
        return Err(CwsError::arg("phase-patterned state needs two photons with two transverse axes"));
    }
    let base = make_gaussian_schell(GaussianSchellParams::new(a, 0.0)?, spec)?;
    let f = apply_pattern_on_axes(&base, phi_x, 0, Some(2))?;
    apply_pattern_on_axes(&f, phi_y, 1, Some(3))
}

/// Maps `r_photon → -r_photon` (index `i → axis_len - 1 - i`); exact on
/// centered lattices.
pub fn invert_photon(field: &ComplexField, photon: usize) -> Result<ComplexField> {
    let spec = field.spec();
    if photon >= spec.n {
        return Err(CwsError::arg(format!("photon {photon} out of range")));
    }
    let n = spec.axis_len;
    let axes: Vec<usize> = (0..spec.dims_per_photon).map(|c| spec.axis_of(photon, c)).collect();
    let strides: Vec<usize> = axes.iter().map(|&a| spec.stride(a)).collect();
    let src = field.values();
    let mut values = vec![Complex64::new(0.0, 0.0); src.len()];
    crate::exec::fill_indexed(&mut values, |i| {
        let mut j = i;
        for &s in &strides {
            let c = (i / s) % n;
            j = j - c * s + (n - 1 - c) * s;
        }
        src[j]
    });
    ComplexField::new(spec.clone(), values)
}
