use std::fs;
use std::path::{Path, PathBuf};

use super::ingest::load_resized;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn sorted_entries(dir: &Path, want_dirs: bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() == want_dirs {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// One sequence per subdirectory of `dir`, frames in lexicographic filename
/// order, each decoded at `target` = `[height, width, channels]`. Grayscale
/// frames are replicated across channels.
pub fn load_rotation_sequences(dir: &Path, target: [usize; 3]) -> Result<Vec<Vec<Tensor>>> {
    let mut sequences = Vec::new();
    for sub in sorted_entries(dir, true)? {
        let frames = sorted_entries(&sub, false)?
            .iter()
            .map(|f| load_resized(f, target))
            .collect::<Result<Vec<_>>>()?;
        if frames.is_empty() {
            log::warn!("skipping empty sequence directory {}", sub.display());
            continue;
        }
        sequences.push(frames);
    }
    if sequences.is_empty() {
        return Err(Error::data(format!("no rotation sequences under {}", dir.display())));
    }
    Ok(sequences)
}
