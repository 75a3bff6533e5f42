//! Procedural image sets used by the desk-scale experiments: face-like
//! crops, cluttered distractors and a small multi-class shape set.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::tensor::Tensor;

/// Grayscale canvas in `[0,1]` coordinates, rendered into an HWC tensor.
struct Canvas {
    h: usize,
    w: usize,
    px: Vec<f64>,
}

impl Canvas {
    fn new(h: usize, w: usize, fill: f64) -> Self {
        Self { h, w, px: vec![fill; h * w] }
    }

    fn coords(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        (0..self.h * self.w).map(move |i| {
            let y = ((i / self.w) as f64 + 0.5) / self.h as f64;
            let x = ((i % self.w) as f64 + 0.5) / self.w as f64;
            (i, y, x)
        })
    }

    /// Blends `value` into an axis-aligned ellipse with a soft edge.
    fn ellipse(&mut self, cy: f64, cx: f64, ry: f64, rx: f64, value: f64) {
        let soft = 1.5 / self.h.min(self.w) as f64;
        let idx: Vec<(usize, f64)> = self
            .coords()
            .map(|(i, y, x)| {
                let d = (((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2)).sqrt();
                let edge = (1.0 - d) * ry.min(rx) / soft;
                (i, (edge + 0.5).clamp(0.0, 1.0))
            })
            .collect();
        for (i, a) in idx {
            self.px[i] = (1.0 - a) * self.px[i] + a * value;
        }
    }

    fn rect(&mut self, cy: f64, cx: f64, hy: f64, hx: f64, value: f64) {
        let idx: Vec<usize> = self
            .coords()
            .filter(|&(_, y, x)| (y - cy).abs() <= hy && (x - cx).abs() <= hx)
            .map(|(i, _, _)| i)
            .collect();
        for i in idx {
            self.px[i] = value;
        }
    }

    /// Smooth random background: a tilted gradient plus a few broad blobs.
    fn clutter(&mut self, rng: &mut ChaCha8Rng) {
        let base = rng.gen_range(0.3..0.7);
        let (gy, gx) = (rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2));
        let blobs: Vec<(f64, f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.15..0.4),
                    rng.gen_range(-0.2..0.2),
                )
            })
            .collect();
        let vals: Vec<(usize, f64)> = self
            .coords()
            .map(|(i, y, x)| {
                let mut v = base + gy * (y - 0.5) + gx * (x - 0.5);
                for &(by, bx, s, a) in &blobs {
                    v += a * (-((y - by).powi(2) + (x - bx).powi(2)) / (2.0 * s * s)).exp();
                }
                (i, v)
            })
            .collect();
        for (i, v) in vals {
            self.px[i] = v;
        }
    }

    fn noise(&mut self, rng: &mut ChaCha8Rng, sigma: f64) {
        for p in &mut self.px {
            *p += sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }

    /// Photographic negative with probability one half.
    fn maybe_invert(&mut self, rng: &mut ChaCha8Rng) {
        if rng.gen_bool(0.5) {
            for p in &mut self.px {
                *p = 1.0 - *p;
            }
        }
    }

    fn finish(self, channels: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let tint: Vec<f64> = (0..channels).map(|_| rng.gen_range(0.9..1.1)).collect();
        let data = self
            .px
            .iter()
            .flat_map(|&v| tint.iter().map(move |t| (v * t).clamp(0.0, 1.0) as f32))
            .collect();
        Tensor::new(vec![self.h, self.w, channels], data)
    }
}

fn check_shape(shape: [usize; 3]) -> Result<()> {
    if shape[0] < 4 || shape[1] < 4 || !(shape[2] == 1 || shape[2] == 3) {
        return Err(Error::config(format!("synthetic images need ≥ 4x4 and 1 or 3 channels, got {shape:?}")));
    }
    Ok(())
}

/// A face-like pattern (oval, two eyes, mouth) with jittered position,
/// size, tone and background; half of the crops are contrast-inverted.
pub fn face(rng: &mut ChaCha8Rng, shape: [usize; 3]) -> Result<Tensor> {
    check_shape(shape)?;
    let mut c = Canvas::new(shape[0], shape[1], 0.5);
    c.clutter(rng);
    let r = 0.36 * rng.gen_range(0.85..1.1);
    let cy = 0.5 + rng.gen_range(-0.12..0.12);
    let cx = 0.5 + rng.gen_range(-0.12..0.12);
    let (ry, rx) = (r, 0.78 * r);
    let skin = rng.gen_range(0.45..0.9);
    c.ellipse(cy, cx, ry, rx, skin);
    let dark = skin * rng.gen_range(0.15..0.4);
    let eye_y = cy - 0.22 * ry;
    let eye_dx = 0.4 * rx;
    let eye_r = 0.16 * r;
    c.ellipse(eye_y, cx - eye_dx, eye_r, 1.2 * eye_r, dark);
    c.ellipse(eye_y, cx + eye_dx, eye_r, 1.2 * eye_r, dark);
    c.ellipse(cy + 0.48 * ry, cx, 0.09 * r, 0.4 * rx, dark);
    c.noise(rng, 0.03);
    c.maybe_invert(rng);
    c.finish(shape[2], rng)
}

/// Background clutter with a few random ellipses, bars and spots, inverted
/// at the same rate as faces.
pub fn distractor(rng: &mut ChaCha8Rng, shape: [usize; 3]) -> Result<Tensor> {
    check_shape(shape)?;
    let mut c = Canvas::new(shape[0], shape[1], 0.5);
    c.clutter(rng);
    for _ in 0..rng.gen_range(1..4) {
        let (cy, cx) = (rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9));
        let value = rng.gen_range(0.05..0.95);
        match rng.gen_range(0..3) {
            0 => c.ellipse(cy, cx, rng.gen_range(0.08..0.45), rng.gen_range(0.08..0.45), value),
            1 => c.rect(cy, cx, rng.gen_range(0.03..0.4), rng.gen_range(0.03..0.4), value),
            _ => {
                let s = rng.gen_range(0.05..0.12);
                c.ellipse(cy, cx, s, s, value);
            }
        }
    }
    c.noise(rng, 0.03);
    c.maybe_invert(rng);
    c.finish(shape[2], rng)
}

/// `n` face crops from the `synth.face` substream.
pub fn faces(n: usize, seed: u64, shape: [usize; 3]) -> Result<Vec<Tensor>> {
    let mut rng = substream(seed, "synth.face");
    (0..n).map(|_| face(&mut rng, shape)).collect()
}

/// `n` distractors from the `synth.distractor` substream.
pub fn distractors(n: usize, seed: u64, shape: [usize; 3]) -> Result<Vec<Tensor>> {
    let mut rng = substream(seed, "synth.distractor");
    (0..n).map(|_| distractor(&mut rng, shape)).collect()
}

/// Four labelled shape classes: horizontal bar, vertical bar, disk, ring.
pub fn shape_classes(per_class: usize, seed: u64, shape: [usize; 3]) -> Result<Dataset> {
    check_shape(shape)?;
    let mut rng = substream(seed, "synth.shapes");
    let mut items = Vec::with_capacity(4 * per_class);
    for i in 0..per_class {
        for label in 0..4u32 {
            let mut c = Canvas::new(shape[0], shape[1], 0.5);
            c.clutter(&mut rng);
            let (cy, cx) = (0.5 + rng.gen_range(-0.1..0.1), 0.5 + rng.gen_range(-0.1..0.1));
            let v = if rng.gen_bool(0.5) { rng.gen_range(0.0..0.2) } else { rng.gen_range(0.8..1.0) };
            let s = rng.gen_range(0.25..0.35);
            match label {
                0 => c.rect(cy, cx, 0.08, s, v),
                1 => c.rect(cy, cx, s, 0.08, v),
                2 => c.ellipse(cy, cx, s, s, v),
                _ => {
                    let inner = c.px.clone();
                    c.ellipse(cy, cx, s, s, v);
                    let ring: Vec<(usize, f64, f64)> = c.coords().collect();
                    for (j, y, x) in ring {
                        if ((y - cy).powi(2) + (x - cx).powi(2)).sqrt() < 0.55 * s {
                            c.px[j] = inner[j];
                        }
                    }
                }
            }
            c.noise(&mut rng, 0.03);
            items.push(super::Item {
                image: c.finish(shape[2], &mut rng)?,
                label: Some(label),
                source_path: format!("shape{label}#{i}"),
            });
        }
    }
    Ok(Dataset { items })
}
