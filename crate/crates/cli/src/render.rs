//! Domain-colouring renders of 2D complex slices.

use std::f64::consts::TAU;

use cws_core::ComplexField;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn pixel(&self, col: usize, row: usize) -> [u8; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    /// Nearest-neighbour enlargement by an integer factor.
    pub fn upscale(&self, factor: usize) -> RgbImage {
        if factor <= 1 {
            return self.clone();
        }
        let (w, h) = (self.width * factor, self.height * factor);
        let mut data = Vec::with_capacity(3 * w * h);
        for row in 0..h {
            for col in 0..w {
                data.extend_from_slice(&self.pixel(col / factor, row / factor));
            }
        }
        RgbImage { width: w, height: h, data }
    }
}

/// HSV to RGB with `hue` in radians and `s`, `v` in `[0, 1]`.
pub fn hsv_to_rgb(hue: f64, s: f64, v: f64) -> [u8; 3] {
    let h = hue.rem_euclid(TAU) / TAU * 6.0;
    let sector = (h.floor() as usize) % 6;
    let f = h - h.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    let byte = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    [byte(r), byte(g), byte(b)]
}

/// Hue follows `(arg + hue_offset) mod 2π`, brightness follows the magnitude
/// relative to the slice maximum. Image column is slice axis 0; image rows run
/// along slice axis 1 with the largest coordinate at the top.
pub fn render_complex(slice: &ComplexField, hue_offset: f64) -> RgbImage {
    let spec = slice.spec();
    let n = spec.axis_len;
    let (width, height) = if spec.axes() == 1 { (n, 1) } else { (n, n) };
    let max = slice.max_abs();
    let mut data = vec![0u8; 3 * width * height];
    for (b, v) in slice.values().iter().enumerate() {
        let (i, j) = if spec.axes() == 1 { (b, 0) } else { (b / n, b % n) };
        let row = height - 1 - j;
        let px = if max > 0.0 { hsv_to_rgb(v.arg() + hue_offset, 1.0, v.norm() / max) } else { [0, 0, 0] };
        let o = 3 * (row * width + i);
        data[o..o + 3].copy_from_slice(&px);
    }
    RgbImage { width, height, data }
}
