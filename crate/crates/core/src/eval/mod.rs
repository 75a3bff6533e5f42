//! Selectivity measurements on top-layer neurons.

mod baseline;
mod classify;
mod probe;
mod report;
mod stimulus;
mod sweep;

pub use baseline::{cosine_similarity, filters_baseline, linear_filter_baseline, sample_patch, BaselineResult, DEFAULT_BASELINE_FILTERS};
pub use classify::{
    activation_histogram, best_neuron_accuracy, class_prior, neuron_thresholds, scan_all_neurons, EvalReport,
    Histogram, NeuronEval, DEFAULT_HISTOGRAM_BINS, N_THRESHOLDS,
};
pub use probe::{
    evaluate_network, invariance_curve, mean_response, rotation_curve, top_activations, top_stimuli, Axis, Probe,
    InvarianceCurve,
};
pub use report::{write_eval_report, write_histogram, write_invariance, write_sweep};
pub use stimulus::optimal_stimulus;
pub use sweep::{sensitivity_sweep, SweepAxis, SweepRow, SweepSetup};
