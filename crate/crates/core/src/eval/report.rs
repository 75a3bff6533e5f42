use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::classify::{EvalReport, Histogram};
use super::probe::InvarianceCurve;
use super::sweep::{SweepAxis, SweepRow};
use crate::error::Result;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_histogram(path: &Path, h: &Histogram) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "bin_lo,bin_hi,pos_count,neg_count")?;
    for i in 0..h.pos.len() {
        writeln!(w, "{},{},{},{}", h.edges[i], h.edges[i + 1], h.pos[i], h.neg[i])?;
    }
    w.flush()?;
    Ok(())
}

/// `eval_report.csv` plus one `hist_<neuron>.csv` per attached histogram.
pub fn write_eval_report(dir: &Path, report: &EvalReport) -> Result<()> {
    let mut w = create(&dir.join("eval_report.csv"))?;
    writeln!(w, "neuron_index,accuracy,threshold,polarity,act_min,act_max")?;
    for n in &report.neurons {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            n.neuron_index, n.accuracy, n.best_threshold, n.polarity, n.activation_min, n.activation_max
        )?;
    }
    w.flush()?;
    for (neuron, h) in &report.histograms {
        write_histogram(&dir.join(format!("hist_{neuron}.csv")), h)?;
    }
    Ok(())
}

/// `invariance_<axis>.csv`.
pub fn write_invariance(dir: &Path, curve: &InvarianceCurve) -> Result<()> {
    let mut w = create(&dir.join(format!("invariance_{}.csv", curve.axis.name())))?;
    writeln!(w, "param_value,mean_response")?;
    for (v, m) in curve.values.iter().zip(&curve.means) {
        writeln!(w, "{v},{m}")?;
    }
    w.flush()?;
    Ok(())
}

/// Absent accuracies are written as empty fields.
pub fn write_sweep(path: &Path, axis: SweepAxis, rows: &[SweepRow]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{},accuracy", axis.name())?;
    for r in rows {
        match r.accuracy {
            Some(a) => writeln!(w, "{},{a}", r.value)?,
            None => writeln!(w, "{},", r.value)?,
        }
    }
    w.flush()?;
    Ok(())
}
