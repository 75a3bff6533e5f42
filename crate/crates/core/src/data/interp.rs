//! Cubic convolution interpolation (Keys kernel, a = −0.5) with clamped
//! borders and pixel-center alignment.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const A: f64 = -0.5;

pub fn cubic_kernel(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

fn taps(u: f64, n: usize) -> [(usize, f64); 4] {
    let base = u.floor();
    let mut out = [(0, 0.0); 4];
    for (m, slot) in out.iter_mut().enumerate() {
        let pos = base + m as f64 - 1.0;
        let idx = pos.clamp(0.0, (n - 1) as f64) as usize;
        *slot = (idx, cubic_kernel(u - pos));
    }
    out
}

/// Interpolated value of channel `c` at fractional pixel `(row, col)`.
pub fn sample(img: &Tensor, row: f64, col: f64, c: usize) -> f64 {
    let s = img.shape();
    let (w, ch) = (s[1], s[2]);
    let data = img.data();
    let mut acc = 0.0;
    for (y, wy) in taps(row, s[0]) {
        if wy == 0.0 {
            continue;
        }
        for (x, wx) in taps(col, w) {
            if wx != 0.0 {
                acc += wy * wx * data[(y * w + x) * ch + c] as f64;
            }
        }
    }
    acc
}

/// Resizes an `H × W × C` image to `out_h × out_w`.
pub fn resize(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if img.rank() != 3 {
        return Err(Error::geometry(format!("resize expects an HWC image, got {:?}", img.shape())));
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::geometry("resize target must be nonzero"));
    }
    let s = img.shape();
    let (h, w, ch) = (s[0], s[1], s[2]);
    if (h, w) == (out_h, out_w) {
        return Ok(img.clone());
    }
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let mut out = Vec::with_capacity(out_h * out_w * ch);
    for oy in 0..out_h {
        let row = (oy as f64 + 0.5) * sy - 0.5;
        for ox in 0..out_w {
            let col = (ox as f64 + 0.5) * sx - 0.5;
            for c in 0..ch {
                out.push(sample(img, row, col, c) as f32);
            }
        }
    }
    Tensor::new(vec![out_h, out_w, ch], out)
}
