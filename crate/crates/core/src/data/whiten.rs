use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::tensor::Tensor;

/// Eigenvalues below this fraction of the largest are raised to it.
pub const EIGEN_FLOOR_RATIO: f64 = 1e-2;
pub const MAX_FIT_IMAGES: usize = 10_000;
const ABSOLUTE_FLOOR: f64 = 1e-12;

/// Zero-phase whitening `y = M (x − mean)` on flattened images.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitening {
    /// Flattened mean, shape `[d]`.
    pub mean: Tensor,
    /// Symmetric map, shape `[d, d]`.
    pub map: Tensor,
}

impl Whitening {
    pub fn new(mean: Tensor, map: Tensor) -> Result<Self> {
        let d = mean.len();
        if mean.rank() != 1 || map.shape() != [d, d] {
            return Err(Error::geometry(format!(
                "whitening mean {:?} and map {:?} are inconsistent",
                mean.shape(),
                map.shape()
            )));
        }
        Ok(Self { mean, map })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, image: &Tensor) -> Result<Tensor> {
        let d = self.dim();
        if image.len() != d {
            return Err(Error::geometry(format!(
                "image has {} values, whitening expects {d}",
                image.len()
            )));
        }
        let centered: Vec<f64> = image
            .data()
            .iter()
            .zip(self.mean.data())
            .map(|(&x, &m)| x as f64 - m as f64)
            .collect();
        let map = self.map.data();
        let out: Vec<f64> = (0..d)
            .map(|i| {
                map[i * d..(i + 1) * d]
                    .iter()
                    .zip(&centered)
                    .map(|(&a, &b)| a as f64 * b)
                    .sum()
            })
            .collect();
        Tensor::from_f64(image.shape(), &out)
    }
}

/// Fits zero-phase whitening on at most [`MAX_FIT_IMAGES`] images drawn
/// with the `whiten.fit` substream.
pub fn fit_whitening(ds: &Dataset, seed: u64) -> Result<Whitening> {
    ds.validate()?;
    let n_all = ds.len();
    if n_all < 2 {
        return Err(Error::data(format!("whitening needs at least 2 images, got {n_all}")));
    }
    let idx: Vec<usize> = if n_all > MAX_FIT_IMAGES {
        let mut v = sample(&mut substream(seed, "whiten.fit"), n_all, MAX_FIT_IMAGES).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..n_all).collect()
    };
    let d = ds.items[0].image.len();
    let n = idx.len();
    let mut x = DMatrix::<f64>::zeros(n, d);
    for (r, &i) in idx.iter().enumerate() {
        for (c, &v) in ds.items[i].image.data().iter().enumerate() {
            x[(r, c)] = v as f64;
        }
    }
    let mean: DVector<f64> = x.row_mean().transpose();
    for mut row in x.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = (x.transpose() * &x) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let floor = (EIGEN_FLOOR_RATIO * lmax).max(ABSOLUTE_FLOOR);
    let scale = eig.eigenvalues.map(|l| 1.0 / l.max(floor).sqrt());
    let u = &eig.eigenvectors;
    let map = u * DMatrix::from_diagonal(&scale) * u.transpose();
    let mut flat = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            flat.push(0.5 * (map[(i, j)] + map[(j, i)]));
        }
    }
    Whitening::new(
        Tensor::from_f64(&[d], mean.as_slice())?,
        Tensor::from_f64(&[d, d], &flat)?,
    )
}

pub fn apply_whitening(ds: &Dataset, t: &Whitening) -> Result<Dataset> {
    let mut out = ds.clone();
    for item in &mut out.items {
        item.image = t.apply(&item.image)?;
    }
    Ok(out)
}
