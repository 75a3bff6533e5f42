use super::interp::sample;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Scale about the image center followed by a shift in pixels
/// (`dx` to the right, `dy` downward).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distortion {
    pub scale: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Distortion {
    pub const IDENTITY: Self = Self { scale: 1.0, dx: 0.0, dy: 0.0 };

    pub fn apply(&self, image: &Tensor) -> Result<Tensor> {
        if image.rank() != 3 {
            return Err(Error::geometry(format!("expected an HWC image, got {:?}", image.shape())));
        }
        let s = image.shape();
        let (h, w, ch) = (s[0], s[1], s[2]);
        let side = h.min(w) as f64;
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::argument(format!("scale {} must be positive", self.scale)));
        }
        if self.scale * side < 1.0 || side / self.scale < 1.0 {
            return Err(Error::argument(format!(
                "scale {} leaves an empty crop of a {h}x{w} image",
                self.scale
            )));
        }
        if *self == Self::IDENTITY {
            return Ok(image.clone());
        }
        let mut mean = vec![0.0f64; ch];
        for px in image.data().chunks(ch) {
            for (m, &v) in mean.iter_mut().zip(px) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= (h * w) as f64);
        let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
        let mut out = Vec::with_capacity(image.len());
        for y in 0..h {
            let row = (y as f64 + 0.5 - cy - self.dy) / self.scale + cy - 0.5;
            for x in 0..w {
                let col = (x as f64 + 0.5 - cx - self.dx) / self.scale + cx - 0.5;
                let inside = row >= -0.5 && row <= h as f64 - 0.5 && col >= -0.5 && col <= w as f64 - 0.5;
                for (c, &m) in mean.iter().enumerate() {
                    out.push(if inside { sample(image, row, col, c) } else { m } as f32);
                }
            }
        }
        Tensor::new(s.to_vec(), out)
    }
}

/// One output per (scale, translation) pair, scales outermost.
pub fn make_distortions(image: &Tensor, scales: &[f64], translations: &[(f64, f64)]) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(scales.len() * translations.len());
    for &scale in scales {
        for &(dx, dy) in translations {
            out.push(Distortion { scale, dx, dy }.apply(image)?);
        }
    }
    Ok(out)
}
