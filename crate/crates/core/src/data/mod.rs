//! Image ingestion, whitening, evaluation-set assembly and stimulus
//! generation.

mod assemble;
mod distort;
mod ingest;
pub mod interp;
mod pnm;
mod rotation;
pub mod synth;
mod whiten;

pub use assemble::{assemble_eval_set, max_eval_total, FACE_FRACTION};
pub use distort::{make_distortions, Distortion};
pub use ingest::{decode_image, ingest, ingest_entries, list_images, parse_index, IndexEntry};
pub use pnm::{to_display_bytes, write_pnm, write_ppm};
pub use rotation::load_rotation_sequences;
pub use whiten::{apply_whitening, fit_whitening, Whitening, EIGEN_FLOOR_RATIO, MAX_FIT_IMAGES};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    /// `height × width × channels`, channel fastest.
    pub image: Tensor,
    pub label: Option<u32>,
    pub source_path: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub items: Vec<Item>,
}

impl Dataset {
    /// Builds a dataset from images sharing one shape.
    pub fn from_images(images: Vec<Tensor>, label: Option<u32>) -> Result<Self> {
        let items = images
            .into_iter()
            .enumerate()
            .map(|(i, image)| Item {
                image,
                label,
                source_path: format!("#{i}"),
            })
            .collect();
        let ds = Self { items };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn image_shape(&self) -> Option<&[usize]> {
        self.items.first().map(|it| it.image.shape())
    }

    pub fn images(&self) -> Vec<Tensor> {
        self.items.iter().map(|it| it.image.clone()).collect()
    }

    pub fn labels(&self) -> Vec<Option<u32>> {
        self.items.iter().map(|it| it.label).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(shape) = self.image_shape() {
            if let Some(bad) = self.items.iter().find(|it| it.image.shape() != shape) {
                return Err(Error::data(format!(
                    "{}: shape {:?} differs from {:?}",
                    bad.source_path,
                    bad.image.shape(),
                    shape
                )));
            }
        }
        Ok(())
    }
}
