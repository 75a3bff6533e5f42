use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use super::finetune::{fine_tune, FineTuneConfig};
use super::head::{train_head, HeadConfig, LogisticHead};
use crate::error::{Error, Result};
use crate::netcore::{top_features, NetworkConfig, NetworkParams};
use crate::optim::{train_local, SgdConfig};
use crate::rng::substream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareBudgets {
    /// Unsupervised pretraining; only the pretrained arm runs it.
    pub pretrain: SgdConfig,
    pub head: HeadConfig,
    pub finetune: FineTuneConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmResult {
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareResult {
    pub pretrained: ArmResult,
    pub random: ArmResult,
    /// SHA-256 over the train and validation index lists.
    pub split_checksum: String,
}

/// Seeded random halves `(train, validation)` and their checksum.
pub fn split_halves(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>, String) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut substream(seed, "suphead.split"));
    let val = idx.split_off(n / 2);
    let mut hasher = Sha256::new();
    for (tag, part) in [(b't', &idx), (b'v', &val)] {
        hasher.update([tag]);
        for &i in part.iter() {
            hasher.update((i as u64).to_le_bytes());
        }
    }
    let sum = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    (idx, val, sum)
}

fn feats(net: &NetworkParams, images: &[Tensor]) -> Result<Vec<Vec<f64>>> {
    images
        .iter()
        .map(|x| Ok(top_features(x, net)?.into_iter().map(f64::from).collect()))
        .collect()
}

fn run_arm(
    net: NetworkParams,
    n_classes: usize,
    train: (&[Tensor], &[usize]),
    val: (&[Tensor], &[usize]),
    b: &CompareBudgets,
) -> Result<ArmResult> {
    let head = train_head(&feats(&net, train.0)?, train.1, n_classes, &b.head)?;
    let (net, head, _) = fine_tune(&net, &head, train.0, train.1, &b.finetune)?;
    let acc = |h: &LogisticHead, (x, y): (&[Tensor], &[usize])| -> Result<f64> { Ok(h.accuracy(&feats(&net, x)?, y)) };
    Ok(ArmResult {
        train_acc: acc(&head, train)?,
        val_acc: acc(&head, val)?,
    })
}

/// Runs the pretrained and random-initialization arms from the same seeded
/// initialization with identical supervised budgets and the same split.
pub fn compare_init(
    images: &[Tensor],
    labels: &[usize],
    n_classes: usize,
    net_cfg: &NetworkConfig,
    budgets: &CompareBudgets,
    seed: u64,
) -> Result<CompareResult> {
    if images.len() != labels.len() || images.len() < 4 {
        return Err(Error::argument("need at least 4 aligned labelled images"));
    }
    let (tr, va, checksum) = split_halves(images.len(), seed);
    log::info!("supervised split checksum {checksum}");
    let pick = |idx: &[usize]| -> (Vec<Tensor>, Vec<usize>) {
        (idx.iter().map(|&i| images[i].clone()).collect(), idx.iter().map(|&i| labels[i]).collect())
    };
    let (tx, ty) = pick(&tr);
    let (vx, vy) = pick(&va);
    let init = NetworkParams::init(net_cfg.clone(), seed)?;
    let pretrained = if budgets.pretrain.max_steps == 0 {
        init.clone()
    } else {
        train_local(&tx, init.clone(), &budgets.pretrain)?.0
    };
    let (_, _, check_again) = split_halves(images.len(), seed);
    assert_eq!(checksum, check_again, "both arms must share one split");
    Ok(CompareResult {
        pretrained: run_arm(pretrained, n_classes, (&tx, &ty), (&vx, &vy), budgets)?,
        random: run_arm(init, n_classes, (&tx, &ty), (&vx, &vy), budgets)?,
        split_checksum: checksum,
    })
}

/// Appends both arms to `supervised_report.csv` (header written once).
pub fn append_supervised_report(path: &Path, r: &CompareResult, steps: usize, seed: u64) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "arm,train_acc,val_acc,steps,seed")?;
    }
    for (arm, a) in [("pretrained", r.pretrained), ("random", r.random)] {
        writeln!(f, "{arm},{},{},{steps},{seed}", a.train_acc, a.val_acc)?;
    }
    Ok(())
}
