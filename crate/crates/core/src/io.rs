//! Binary artifact formats with JSON sidecars.
//!
//! Every file starts with a four-byte magic, a little-endian `u16` version
//! and the lattice header (`n`, `dims_per_photon`, `axis_len` as `u32`,
//! `pitch` and one origin per axis as `f64`). The sidecar `<file>.json`
//! carries the metadata needed to interpret the payload.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CwsError, Result};
use crate::estimator::{GradientField, MeasurementOffset};
use crate::forward::{CoincidenceHistogram, Measurement, OpticalConfig};
use crate::lattice::{ComplexField, LatticeSpec};
use crate::reconstructor::{PhaseMap, ReconParams};

pub const FORMAT_VERSION: u16 = 1;

const FIELD_MAGIC: &[u8; 4] = b"CWSF";
const HIST_MAGIC: &[u8; 4] = b"CWSH";
const GRAD_MAGIC: &[u8; 4] = b"CWSG";
const PHASE_MAGIC: &[u8; 4] = b"CWSP";

const MASK_BIT: u8 = 1;
const CLAMP_BIT: u8 = 2;

/// Path of the JSON sidecar next to `path`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

struct Writer(Vec<u8>);

impl Writer {
    fn new(magic: &[u8; 4], spec: &LatticeSpec) -> Self {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(magic);
        w.0.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        w.u32(spec.n as u32);
        w.u32(spec.dims_per_photon as u32);
        w.u32(spec.axis_len as u32);
        w.f64(spec.pitch);
        for &o in &spec.origin {
            w.f64(o);
        }
        w
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(buf: &'a [u8], magic: &[u8; 4]) -> Result<(Self, LatticeSpec)> {
        if buf.len() < 6 || &buf[..4] != magic {
            return Err(CwsError::Format(format!("expected {} header", String::from_utf8_lossy(magic))));
        }
        let mut r = Reader { buf, pos: 4 };
        let version = u16::from_le_bytes(r.take::<2>()?);
        if version != FORMAT_VERSION {
            return Err(CwsError::Format(format!("unsupported version {version}")));
        }
        let n = r.u32()? as usize;
        let dims = r.u32()? as usize;
        let axis_len = r.u32()? as usize;
        let pitch = r.f64()?;
        if n == 0 || n * dims > crate::lattice::MAX_AXES {
            return Err(CwsError::Format("lattice header out of range".into()));
        }
        let origin = (0..n * dims).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let spec = LatticeSpec::with_origin(n, dims, axis_len, pitch, origin)
            .map_err(|e| CwsError::Format(e.to_string()))?;
        Ok((r, spec))
    }
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let bytes = self.buf.get(self.pos..end).ok_or_else(|| CwsError::Format("truncated file".into()))?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice length"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(CwsError::Format("trailing bytes".into()));
        }
        Ok(())
    }
}

fn write_with_sidecar<T: Serialize>(path: &Path, bytes: &[u8], meta: &T) -> Result<()> {
    fs::write(path, bytes)?;
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(meta)?)?;
    Ok(())
}

fn read_sidecar<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(sidecar_path(path))?)?)
}

pub fn encode_field(field: &ComplexField) -> Vec<u8> {
    let mut w = Writer::new(FIELD_MAGIC, field.spec());
    for v in field.values() {
        w.f64(v.re);
        w.f64(v.im);
    }
    w.0
}

pub fn decode_field(buf: &[u8]) -> Result<ComplexField> {
    let (mut r, spec) = Reader::open(buf, FIELD_MAGIC)?;
    let values = (0..spec.bins()).map(|_| Ok(Complex64::new(r.f64()?, r.f64()?))).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    ComplexField::new(spec, values).map_err(|e| CwsError::Format(e.to_string()))
}

#[derive(Serialize, Deserialize)]
struct FieldMeta {
    spec: LatticeSpec,
    #[serde(default)]
    description: String,
}

pub fn write_field(path: &Path, field: &ComplexField, description: &str) -> Result<()> {
    let meta = FieldMeta { spec: field.spec().clone(), description: description.into() };
    write_with_sidecar(path, &encode_field(field), &meta)
}

pub fn read_field(path: &Path) -> Result<ComplexField> {
    decode_field(&fs::read(path)?)
}

pub fn encode_histogram(h: &CoincidenceHistogram) -> Vec<u8> {
    let mut w = Writer::new(HIST_MAGIC, &h.spec);
    w.u32(h.combo_count as u32);
    for &c in &h.counts {
        w.u64(c);
    }
    w.0
}

/// Histogram metadata kept in the sidecar.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HistogramMeta {
    pub spec: LatticeSpec,
    pub seed: u64,
    pub total: u64,
    pub measurement: Measurement,
    pub optics: Option<OpticalConfig>,
}

pub fn decode_histogram(buf: &[u8], meta: &HistogramMeta) -> Result<CoincidenceHistogram> {
    let (mut r, spec) = Reader::open(buf, HIST_MAGIC)?;
    let combo_count = r.u32()? as usize;
    if combo_count != 1 << spec.n {
        return Err(CwsError::Format("combo count does not match photon number".into()));
    }
    let counts = (0..combo_count * spec.bins()).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    if !meta.spec.same_grid(&spec) {
        return Err(CwsError::Format("sidecar lattice differs from file header".into()));
    }
    if counts.iter().sum::<u64>() != meta.total {
        return Err(CwsError::Format("counts do not sum to the recorded total".into()));
    }
    Ok(CoincidenceHistogram { spec, measurement: meta.measurement, combo_count, counts, total: meta.total, seed: meta.seed })
}

pub fn write_histogram(path: &Path, h: &CoincidenceHistogram, optics: Option<&OpticalConfig>) -> Result<()> {
    let meta = HistogramMeta {
        spec: h.spec.clone(),
        seed: h.seed,
        total: h.total,
        measurement: h.measurement,
        optics: optics.cloned(),
    };
    write_with_sidecar(path, &encode_histogram(h), &meta)
}

pub fn read_histogram(path: &Path) -> Result<CoincidenceHistogram> {
    let meta: HistogramMeta = read_sidecar(path)?;
    decode_histogram(&fs::read(path)?, &meta)
}

pub fn encode_gradient(g: &GradientField) -> Vec<u8> {
    let mut w = Writer::new(GRAD_MAGIC, &g.spec);
    w.u32(g.components.len() as u32);
    for c in &g.components {
        for &v in c {
            w.f64(v);
        }
    }
    for (&m, &c) in g.mask.iter().zip(&g.clamped) {
        w.0.push(if m { MASK_BIT } else { 0 } | if c { CLAMP_BIT } else { 0 });
    }
    w.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradientMeta {
    pub spec: LatticeSpec,
    pub offsets: Vec<MeasurementOffset>,
    pub masked_bins: usize,
    pub clamped_bins: usize,
}

pub fn decode_gradient(buf: &[u8], offsets: Vec<MeasurementOffset>) -> Result<GradientField> {
    let (mut r, spec) = Reader::open(buf, GRAD_MAGIC)?;
    let count = r.u32()? as usize;
    if count != spec.axes() {
        return Err(CwsError::Format("component count does not match the lattice".into()));
    }
    let bins = spec.bins();
    let components = (0..count)
        .map(|_| (0..bins).map(|_| r.f64()).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let flags = (0..bins).map(|_| r.u8()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(GradientField {
        spec,
        components,
        mask: flags.iter().map(|f| f & MASK_BIT != 0).collect(),
        clamped: flags.iter().map(|f| f & CLAMP_BIT != 0).collect(),
        offsets,
    })
}

pub fn write_gradient(path: &Path, g: &GradientField) -> Result<()> {
    let meta = GradientMeta {
        spec: g.spec.clone(),
        offsets: g.offsets.clone(),
        masked_bins: g.masked_count(),
        clamped_bins: g.clamp_count(),
    };
    write_with_sidecar(path, &encode_gradient(g), &meta)
}

pub fn read_gradient(path: &Path) -> Result<GradientField> {
    let meta: GradientMeta = read_sidecar(path)?;
    decode_gradient(&fs::read(path)?, meta.offsets)
}

pub fn encode_phase(p: &PhaseMap) -> Vec<u8> {
    let mut w = Writer::new(PHASE_MAGIC, &p.spec);
    w.u64(p.reference_bin as u64);
    w.u32(p.repeats as u32);
    for &v in &p.values {
        w.f64(v);
    }
    for &m in &p.mask {
        w.0.push(m as u8);
    }
    for &c in &p.fill_counts {
        w.u32(c);
    }
    for &d in &p.dispersion {
        w.f64(d);
    }
    w.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhaseMeta {
    pub spec: LatticeSpec,
    pub reference_bin: usize,
    pub repeats: usize,
    pub masked_bins: usize,
    pub min_fill_count: u32,
    pub max_dispersion: f64,
    pub clamp_count: usize,
    pub params: ReconParams,
}

pub fn decode_phase(buf: &[u8], meta: &PhaseMeta) -> Result<PhaseMap> {
    let (mut r, spec) = Reader::open(buf, PHASE_MAGIC)?;
    let bins = spec.bins();
    let reference_bin = r.u64()? as usize;
    let repeats = r.u32()? as usize;
    let values = (0..bins).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let mask = (0..bins).map(|_| r.u8().map(|v| v != 0)).collect::<Result<Vec<_>>>()?;
    let fill_counts = (0..bins).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let dispersion = (0..bins).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    if reference_bin >= bins {
        return Err(CwsError::Format("reference bin outside the lattice".into()));
    }
    Ok(PhaseMap {
        spec,
        values,
        mask,
        reference_bin,
        fill_counts,
        dispersion,
        repeats,
        clamp_count: meta.clamp_count,
        params: meta.params,
    })
}

pub fn write_phase(path: &Path, p: &PhaseMap) -> Result<()> {
    let masked: Vec<usize> = (0..p.mask.len()).filter(|&b| p.mask[b]).collect();
    let meta = PhaseMeta {
        spec: p.spec.clone(),
        reference_bin: p.reference_bin,
        repeats: p.repeats,
        masked_bins: masked.len(),
        min_fill_count: masked.iter().map(|&b| p.fill_counts[b]).min().unwrap_or(0),
        max_dispersion: masked.iter().map(|&b| p.dispersion[b]).fold(0.0, f64::max),
        clamp_count: p.clamp_count,
        params: p.params,
    };
    write_with_sidecar(path, &encode_phase(p), &meta)
}

pub fn read_phase(path: &Path) -> Result<PhaseMap> {
    let meta: PhaseMeta = read_sidecar(path)?;
    decode_phase(&fs::read(path)?, &meta)
}
