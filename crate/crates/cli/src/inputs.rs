//! Dataset and checkpoint loading shared by the commands.

use std::path::{Path, PathBuf};

use cortexforge::checkpoint::Checkpoint;
use cortexforge::data::{
    apply_whitening, assemble_eval_set, fit_whitening, ingest, ingest_entries, list_images,
    max_eval_total, Dataset, Whitening,
};
use cortexforge::Tensor;

use crate::config::RunConfig;
use crate::fail::{CliError, CliResult};

/// Images under `dir`, listed by `index` when given, else by `dir/index.txt`
/// when present, else every PNG/PNM file in name order.
pub fn load_dir(dir: &Path, index: Option<&Path>, shape: [usize; 3]) -> CliResult<Dataset> {
    if !dir.is_dir() {
        return Err(CliError::data(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    let default_index = dir.join("index.txt");
    let ds = match index {
        Some(i) => ingest(dir, i, shape)?,
        None if default_index.is_file() => ingest(dir, &default_index, shape)?,
        None => ingest_entries(dir, &list_images(dir)?, shape)?,
    };
    log::info!("loaded {} images from {}", ds.len(), dir.display());
    Ok(ds)
}

pub struct TrainSet {
    /// Network inputs, whitened when the config asks for it.
    pub inputs: Vec<Tensor>,
    /// The same images before whitening.
    pub raw: Vec<Tensor>,
    pub whitening: Option<Whitening>,
}

pub fn train_set(cfg: &RunConfig) -> CliResult<TrainSet> {
    let dir = cfg
        .path("data.train_dir")
        .ok_or_else(|| CliError::usage("data.train_dir is not set"))?;
    let index = cfg.path("data.train_index");
    let ds = load_dir(&dir, index.as_deref(), cfg.input_shape())?;
    let raw = ds.images();
    if cfg.flag("data.whiten") {
        let w = fit_whitening(&ds, cfg.seed())?;
        let inputs = apply_whitening(&ds, &w)?.images();
        Ok(TrainSet {
            inputs,
            raw,
            whitening: Some(w),
        })
    } else {
        Ok(TrainSet {
            inputs: raw.clone(),
            raw,
            whitening: None,
        })
    }
}

pub struct EvalSet {
    pub images: Vec<Tensor>,
    pub labels: Vec<bool>,
    pub sources: Vec<String>,
}

/// Assembles the labelled evaluation set from the positive and negative
/// directories at `eval.ratio`.
pub fn eval_set(cfg: &RunConfig, shape: [usize; 3]) -> CliResult<EvalSet> {
    let need = |key: &str| {
        cfg.path(key)
            .ok_or_else(|| CliError::usage(format!("{key} is not set")))
    };
    let (pos_dir, neg_dir): (PathBuf, PathBuf) = (need("eval.pos_dir")?, need("eval.neg_dir")?);
    let pos = load_dir(&pos_dir, None, shape)?;
    let neg = load_dir(&neg_dir, None, shape)?;
    let ratio = cfg.real("eval.ratio");
    let total = match cfg.int("eval.total") {
        0 => max_eval_total(pos.len(), neg.len(), ratio),
        t => t,
    };
    let ds = assemble_eval_set(&pos, &neg, ratio, total, cfg.seed())?;
    log::info!(
        "evaluation set: {} images at positive share {ratio:.4}",
        ds.len()
    );
    Ok(EvalSet {
        images: ds.images(),
        labels: ds.items.iter().map(|i| i.label == Some(1)).collect(),
        sources: ds.items.iter().map(|i| i.source_path.clone()).collect(),
    })
}

pub fn checkpoint(path: &Path) -> CliResult<Checkpoint> {
    Ok(Checkpoint::load(path)?)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}
