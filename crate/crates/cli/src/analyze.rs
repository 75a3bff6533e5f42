//! `eval`, `visualize`, `baseline`, `sweep`, `suphead` and `synth`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cortexforge::data::{
    apply_whitening, load_rotation_sequences, synth, write_pnm, write_ppm, Dataset,
};
use cortexforge::eval::{
    evaluate_network, invariance_curve, linear_filter_baseline, optimal_stimulus, rotation_curve,
    sensitivity_sweep, top_stimuli, write_eval_report, write_invariance, write_sweep, Axis, Probe,
    SweepSetup,
};
use cortexforge::suphead::{append_supervised_report, compare_init, CompareBudgets};
use cortexforge::Tensor;

use crate::config::RunConfig;
use crate::fail::{CliError, CliResult};
use crate::inputs::{checkpoint, eval_set, load_dir, train_set, write_text};

fn out_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    let out = PathBuf::from(cfg.text("run.out"));
    cfg.write_resolved(&out)?;
    Ok(out)
}

pub fn eval(cfg: &RunConfig, ck_path: &Path) -> CliResult<()> {
    let ck = checkpoint(ck_path)?;
    let es = eval_set(cfg, ck.params.config.input_shape())?;
    let out = out_dir(cfg)?;
    let probe = Probe::new(&ck.params).with_whitening(ck.whitening.as_ref());
    let report = evaluate_network(
        &probe,
        &es.images,
        &es.labels,
        cfg.int("eval.n_bins"),
        cfg.int("eval.n_hist"),
    )?;
    write_eval_report(&out, &report)?;
    let best = report.best();
    log::info!(
        "best neuron {} accuracy {:.4} (all-negative {:.4}, threshold {:.6}, polarity {})",
        best.neuron_index,
        best.accuracy,
        report.all_negative,
        best.best_threshold,
        best.polarity
    );
    println!(
        "best_neuron={} accuracy={:.6} all_negative={:.6}",
        best.neuron_index, best.accuracy, report.all_negative
    );

    let stimuli: Vec<Tensor> = es
        .images
        .iter()
        .zip(&es.labels)
        .filter(|(_, &l)| l)
        .map(|(x, _)| x.clone())
        .take(cfg.int("eval.invariance_stimuli"))
        .collect();
    let curves = [
        (Axis::Scale, cfg.reals("eval.scales")),
        (Axis::TranslateX, cfg.reals("eval.shifts")),
        (Axis::TranslateY, cfg.reals("eval.shifts")),
    ];
    for (axis, values) in curves {
        if !values.is_empty() && !stimuli.is_empty() {
            write_invariance(
                &out,
                &invariance_curve(&probe, best.neuron_index, &stimuli, axis, &values)?,
            )?;
        }
    }
    if let Some(dir) = cfg.path("eval.rotation_dir") {
        let seqs = load_rotation_sequences(&dir, ck.params.config.input_shape())?;
        write_invariance(&out, &rotation_curve(&probe, best.neuron_index, &seqs)?)?;
    }
    Ok(())
}

pub fn visualize(cfg: &RunConfig, ck_path: &Path) -> CliResult<()> {
    let ck = checkpoint(ck_path)?;
    let neuron = cfg.int("visualize.neuron");
    let out = out_dir(cfg)?;
    if cfg.text("visualize.mode") == "optimal" {
        let r = optimal_stimulus(&ck.params, neuron, &cfg.line_search(), cfg.seed())?;
        write_ppm(&out.join("optimal.ppm"), &r.x)?;
        let mut csv = String::from("iteration,response\n");
        for (i, v) in r.trace.iter().enumerate() {
            let _ = writeln!(csv, "{i},{v}");
        }
        write_text(&out.join("optimal_trace.csv"), &csv)?;
        log::info!(
            "neuron {neuron}: optimal response {:.6} after {} iterations",
            r.value,
            r.iterations
        );
        return Ok(());
    }
    let es = eval_set(cfg, ck.params.config.input_shape())?;
    let probe = Probe::new(&ck.params).with_whitening(ck.whitening.as_ref());
    if neuron >= probe.num_neurons() {
        return Err(CliError::usage(format!(
            "neuron {neuron} out of range ({} neurons)",
            probe.num_neurons()
        )));
    }
    let top = top_stimuli(&probe, neuron, &es.images, cfg.int("visualize.k"))?;
    let mut csv = String::from("rank,index,response,label,source\n");
    for (rank, &(i, v)) in top.iter().enumerate() {
        write_ppm(&out.join(format!("top_{rank:03}.ppm")), &es.images[i])?;
        let _ = writeln!(
            csv,
            "{rank},{i},{v},{},{}",
            u8::from(es.labels[i]),
            es.sources[i]
        );
    }
    write_text(&out.join("top_stimuli.csv"), &csv)
}

pub fn baseline(cfg: &RunConfig) -> CliResult<()> {
    let pool = train_set(cfg)?.raw;
    let es = eval_set(cfg, cfg.input_shape())?;
    let out = out_dir(cfg)?;
    let n = cfg.int("eval.baseline_filters");
    let r = linear_filter_baseline(&pool, &es.images, &es.labels, n, cfg.seed())?;
    write_text(
        &out.join("baseline.csv"),
        &format!(
            "n_filters,accuracy,filter_index,threshold,polarity\n{n},{},{},{},{}\n",
            r.accuracy, r.filter_index, r.eval.best_threshold, r.eval.polarity
        ),
    )?;
    write_ppm(&out.join("baseline_filter.ppm"), &r.filter)?;
    println!("baseline_accuracy={:.6}", r.accuracy);
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> CliResult<()> {
    let values = cfg.ints("sweep.values");
    if values.is_empty() {
        return Err(CliError::usage("sweep.values is empty"));
    }
    let ts = train_set(cfg)?;
    let es = eval_set(cfg, cfg.input_shape())?;
    let out = out_dir(cfg)?;
    let eval_images = match &ts.whitening {
        Some(w) => apply_whitening(&Dataset::from_images(es.images, None)?, w)?.images(),
        None => es.images,
    };
    let setup = SweepSetup {
        input: cfg.input_shape(),
        specs: vec![cfg.stage_spec(); cfg.int("net.stages")],
        sgd: cfg.sgd(),
        seed: cfg.seed(),
        train: ts.inputs,
        eval: eval_images,
        labels: es.labels,
    };
    let axis = cfg.sweep_axis();
    let rows = sensitivity_sweep(&setup, axis, &values)?;
    write_sweep(&out.join(format!("sweep_{}.csv", axis.name())), axis, &rows)?;
    Ok(())
}

pub fn suphead(cfg: &RunConfig) -> CliResult<()> {
    let dir = cfg
        .path("suphead.data_dir")
        .ok_or_else(|| CliError::usage("suphead.data_dir is not set"))?;
    let ds = load_dir(&dir, None, cfg.input_shape())?;
    let labels = ds
        .items
        .iter()
        .map(|i| i.label.map(|l| l as usize))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| {
            CliError::data(format!(
                "{}: every image needs a class label",
                dir.display()
            ))
        })?;
    let n_classes = match cfg.int("suphead.n_classes") {
        0 => labels.iter().max().map_or(0, |m| m + 1),
        n => n,
    };
    if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(CliError::data(format!(
            "label {bad} outside {n_classes} classes"
        )));
    }
    let out = out_dir(cfg)?;
    let mut pretrain = cfg.sgd();
    pretrain.max_steps = cfg.int("suphead.pretrain_steps");
    pretrain.minibatch_size = pretrain.minibatch_size.min(ds.len() / 2).max(1);
    let budgets = CompareBudgets {
        pretrain,
        head: cfg.head(),
        finetune: cfg.finetune(),
    };
    let r = compare_init(
        &ds.images(),
        &labels,
        n_classes,
        &cfg.network()?,
        &budgets,
        cfg.seed(),
    )?;
    let steps = budgets.head.steps + budgets.finetune.steps;
    append_supervised_report(&out.join("supervised_report.csv"), &r, steps, cfg.seed())?;
    println!(
        "pretrained val_acc={:.6} random val_acc={:.6}",
        r.pretrained.val_acc, r.random.val_acc
    );
    Ok(())
}

/// Writes a synthetic image directory with an `index.txt`.
pub fn synth(cfg: &RunConfig, kind: &str, count: usize, dir: &Path) -> CliResult<()> {
    let shape = cfg.input_shape();
    let seed = cfg.seed();
    let (images, labels): (Vec<Tensor>, Vec<Option<u32>>) = match kind {
        "faces" => (synth::faces(count, seed, shape)?, vec![Some(1); count]),
        "distractors" => (
            synth::distractors(count, seed, shape)?,
            vec![Some(0); count],
        ),
        "shapes" => {
            let ds = synth::shape_classes(count, seed, shape)?;
            (ds.images(), ds.items.iter().map(|i| i.label).collect())
        }
        other => return Err(CliError::usage(format!("unknown synthetic kind {other:?}"))),
    };
    let ext = if shape[2] == 1 { "pgm" } else { "ppm" };
    let mut index = String::new();
    for (i, (img, label)) in images.iter().zip(&labels).enumerate() {
        let name = format!("{kind}_{i:05}.{ext}");
        write_pnm(&dir.join(&name), img)?;
        let _ = writeln!(
            index,
            "{name}\t{}",
            label.map(|l| l.to_string()).unwrap_or_default()
        );
    }
    write_text(&dir.join("index.txt"), &index)?;
    log::info!("wrote {} {kind} images to {}", images.len(), dir.display());
    Ok(())
}
