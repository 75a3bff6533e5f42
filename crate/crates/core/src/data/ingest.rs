use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};
use rayon::prelude::*;

use super::{interp, Dataset, Item};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub path: String,
    pub label: Option<u32>,
}

/// Parses `path<TAB>label` lines; `#` lines and blank lines are skipped and
/// the label may be empty.
pub fn parse_index(text: &str) -> Result<Vec<IndexEntry>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (path, label) = match line.split_once('\t') {
            Some((p, l)) => (p, l.trim()),
            None => (line, ""),
        };
        let label = if label.is_empty() {
            None
        } else {
            Some(label.parse::<u32>().map_err(|_| {
                Error::data(format!("index line {}: bad label {label:?}", lineno + 1))
            })?)
        };
        out.push(IndexEntry {
            path: path.to_string(),
            label,
        });
    }
    Ok(out)
}

fn to_tensor(img: DynamicImage, channels: usize) -> Result<Tensor> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match channels {
        1 => img.to_luma32f().into_raw(),
        3 => img.to_rgb32f().into_raw(),
        c => return Err(Error::config(format!("unsupported channel count {c}"))),
    };
    Tensor::new(vec![h, w, channels], data)
}

/// Decodes a PNG/PPM/PGM file into `[0,1]` channels without resizing.
pub fn decode_image(path: &Path, channels: usize) -> Result<Tensor> {
    let reader = ImageReader::open(path)?
        .with_guessed_format()
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        other => {
            return Err(Error::data(format!(
                "{}: unsupported format {other:?}",
                path.display()
            )))
        }
    }
    let img = reader
        .decode()
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    to_tensor(img, channels)
}

pub(crate) fn load_resized(path: &Path, shape: [usize; 3]) -> Result<Tensor> {
    let raw = decode_image(path, shape[2])?;
    Ok(interp::resize(&raw, shape[0], shape[1])?.map(|v| v.clamp(0.0, 1.0)))
}

/// Reads the images listed in `index_file` (paths relative to `dir`) and
/// resizes them to `target` = `[height, width, channels]`. Unreadable files
/// are skipped with a warning.
pub fn ingest(dir: &Path, index_file: &Path, target: [usize; 3]) -> Result<Dataset> {
    let text = fs::read_to_string(index_file)
        .map_err(|e| Error::data(format!("{}: {e}", index_file.display())))?;
    ingest_entries(dir, &parse_index(&text)?, target)
}

/// Unlabelled entries for every PNG/PNM file directly inside `dir`, in
/// lexicographic order.
pub fn list_images(dir: &Path) -> Result<Vec<IndexEntry>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::data(format!("{}: {e}", dir.display())))? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "pgm" | "ppm" | "pnm")) {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                names.push(name.to_string());
            }
        }
    }
    names.sort();
    Ok(names.into_iter().map(|path| IndexEntry { path, label: None }).collect())
}

/// [`ingest`] over already-parsed entries.
pub fn ingest_entries(dir: &Path, entries: &[IndexEntry], target: [usize; 3]) -> Result<Dataset> {
    let loaded: Vec<Option<Item>> = entries
        .par_iter()
        .map(|e| match load_resized(&dir.join(&e.path), target) {
            Ok(image) => Some(Item {
                image,
                label: e.label,
                source_path: e.path.clone(),
            }),
            Err(err) => {
                log::warn!("skipping {}: {err}", e.path);
                None
            }
        })
        .collect();
    let skipped = loaded.iter().filter(|i| i.is_none()).count();
    let items: Vec<Item> = loaded.into_iter().flatten().collect();
    if skipped > 0 {
        log::warn!("ingest: {} loaded, {skipped} skipped", items.len());
    }
    if items.is_empty() {
        return Err(Error::data("empty dataset"));
    }
    Ok(Dataset { items })
}
