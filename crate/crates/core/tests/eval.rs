use cortexforge::data::make_distortions;
use cortexforge::eval::{
    activation_histogram, best_neuron_accuracy, cosine_similarity, filters_baseline, invariance_curve,
    linear_filter_baseline, neuron_thresholds, optimal_stimulus, rotation_curve, scan_all_neurons, sensitivity_sweep, top_stimuli,
    write_eval_report, write_sweep, Axis, Probe, SweepAxis, SweepSetup,
};
use cortexforge::netcore::{top_features, NetworkConfig, NetworkParams, StageSpec};
use cortexforge::optim::{LineSearchConfig, SgdConfig};
use cortexforge::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Best accuracy over every midpoint threshold, both polarities and both
/// constant classifiers.
fn brute_force_best(acts: &[f64], labels: &[bool]) -> f64 {
    let n = acts.len() as f64;
    let mut sorted = acts.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cuts: Vec<f64> = sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    cuts.push(f64::INFINITY);
    let mut best = 0.0f64;
    for t in cuts {
        let hits = acts.iter().zip(labels).filter(|(&a, &l)| (a > t) == l).count() as f64;
        best = best.max(hits / n).max((n - hits) / n);
    }
    best
}

fn small_net(seed: u64) -> NetworkParams {
    let spec = StageSpec { rf_size: 4, stride: 2, num_maps: 2, pool_size: 2, lcn_window: 3, ..StageSpec::default() };
    NetworkParams::init(NetworkConfig::chain([8, 8, 1], &[spec]).unwrap(), seed).unwrap()
}

fn random_images(n: usize, shape: [usize; 3], seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Tensor::new(shape.to_vec(), (0..shape.iter().product()).map(|_| rng.gen()).collect()).unwrap())
        .collect()
}

#[test]
fn thresholds_follow_the_spacing_formula() {
    let t = neuron_thresholds(0.0, 21.0);
    assert_eq!(t.to_vec(), (1..=20).map(|i| i as f64).collect::<Vec<_>>());
    assert!(neuron_thresholds(5.0, 5.0).iter().all(|&v| v == 5.0));
    let t = neuron_thresholds(-1.0, 1.0);
    assert!((t[0] - (-1.0 + 2.0 / 21.0)).abs() < 1e-12);
    assert!((t[0] + 0.9048).abs() < 1e-4 && (t[19] - 0.9048).abs() < 1e-4);
}

#[test]
fn constant_neuron_scores_the_negative_share() {
    let labels: Vec<bool> = (0..1000).map(|i| i < 352).collect();
    let e = best_neuron_accuracy(&vec![0.3; 1000], &labels).unwrap();
    assert!((e.accuracy - 0.648).abs() < 1e-12);
}

#[test]
fn separated_neuron_is_perfect() {
    let acts = [0.0, 0.1, 0.2, 0.9, 1.0, 0.95];
    let labels = [false, false, false, true, true, true];
    let e = best_neuron_accuracy(&acts, &labels).unwrap();
    assert_eq!(e.accuracy, 1.0);
    assert_eq!(e.polarity, 1);
    assert!(e.activation_min <= e.best_threshold && e.best_threshold <= e.activation_max);
    let flipped: Vec<f64> = acts.iter().map(|a| -a).collect();
    let e = best_neuron_accuracy(&flipped, &labels).unwrap();
    assert_eq!((e.accuracy, e.polarity), (1.0, -1));
}

#[test]
fn six_example_fixture_matches_midpoint_oracle() {
    let acts = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
    let labels = [false, false, true, false, true, true];
    let e = best_neuron_accuracy(&acts, &labels).unwrap();
    assert_eq!(e.accuracy, brute_force_best(&acts, &labels));
    assert!((e.accuracy - 5.0 / 6.0).abs() < 1e-12);
}

#[test]
fn single_class_labels_rejected() {
    assert!(best_neuron_accuracy(&[1.0, 2.0], &[true, true]).is_err());
}

proptest! {
    #[test]
    fn never_beats_oracle_and_never_below_prior(
        data in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..20)
    ) {
        let acts: Vec<f64> = data.iter().map(|d| d.0).collect();
        let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let e = best_neuron_accuracy(&acts, &labels).unwrap();
        let prior = labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64;
        prop_assert!(e.accuracy >= prior.max(1.0 - prior) - 1e-12);
        prop_assert!(e.accuracy <= brute_force_best(&acts, &labels) + 1e-12);
    }

    #[test]
    fn affine_increasing_transform_preserves_accuracy(
        data in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..20),
        scale in prop::sample::select(vec![0.5f64, 2.0, 4.0, 0.25]),
        shift in prop::sample::select(vec![-3.0f64, 0.0, 1.5, 8.0]),
    ) {
        let acts: Vec<f64> = data.iter().map(|d| d.0).collect();
        let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let moved: Vec<f64> = acts.iter().map(|a| scale * a + shift).collect();
        let a = best_neuron_accuracy(&acts, &labels).unwrap().accuracy;
        let b = best_neuron_accuracy(&moved, &labels).unwrap().accuracy;
        prop_assert_eq!(a, b);
    }
}

#[test]
fn scan_ranks_like_per_neuron_oracle() {
    let labels = [true, false, true, false, false, true, false, false];
    let cols = [
        vec![0.9, 0.1, 0.8, 0.2, 0.3, 0.7, 0.1, 0.2],
        vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
        vec![0.9, 0.8, 0.2, 0.1, 0.3, 0.7, 0.1, 0.2],
    ];
    let acts: Vec<Vec<f64>> = (0..8).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    let report = scan_all_neurons(&acts, &labels).unwrap();
    let mut oracle: Vec<(usize, f64)> = cols.iter().map(|c| brute_force_best(c, &labels)).enumerate().collect();
    oracle.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let got: Vec<(usize, f64)> = report.neurons.iter().map(|n| (n.neuron_index, n.accuracy)).collect();
    assert_eq!(got, oracle);
    assert_eq!((report.n_pos, report.n_neg), (3, 5));
    assert_eq!(report.all_negative, 5.0 / 8.0);
}

#[test]
fn duplicated_and_noise_neurons() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let labels: Vec<bool> = (0..60).map(|i| i % 3 == 0).collect();
    let base: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 } + rng.gen_range(-0.8..0.8)).collect();
    let dup: Vec<Vec<f64>> = base.iter().map(|&v| vec![v; 4]).collect();
    let report = scan_all_neurons(&dup, &labels).unwrap();
    assert!(report.neurons.windows(2).all(|w| w[0].accuracy == w[1].accuracy && w[0].best_threshold == w[1].best_threshold));
    let noisy: Vec<Vec<f64>> = base.iter().map(|&v| vec![v, rng.gen()]).collect();
    let with_noise = scan_all_neurons(&noisy, &labels).unwrap();
    assert!(with_noise.best().accuracy >= report.best().accuracy);
    assert_eq!(with_noise, scan_all_neurons(&noisy, &labels).unwrap());
}

#[test]
fn histogram_counts_and_binomial_spread() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 5000;
    let acts: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let h = activation_histogram(&acts, &labels, 10).unwrap();
    assert_eq!(h.pos.iter().sum::<usize>(), n / 2);
    assert_eq!(h.neg.iter().sum::<usize>(), n / 2);
    let bound = 5.0 * (n as f64).sqrt() / 10.0;
    for i in 0..10 {
        assert!(((h.pos[i] + h.neg[i]) as f64 - n as f64 / 10.0).abs() <= bound);
    }
    assert!(acts.iter().all(|&a| h.edges[0] <= a && a <= h.edges[10]));
    let flat = activation_histogram(&[2.0; 7], &[true, false, true, false, false, true, false], 5).unwrap();
    assert_eq!(flat.pos.iter().filter(|&&c| c > 0).count(), 1);
    assert_eq!(flat.neg.iter().filter(|&&c| c > 0).count(), 1);
}

#[test]
fn invariance_identity_and_direct_recomputation() {
    let net = small_net(3);
    let probe = Probe::new(&net);
    let stimuli = random_images(4, [8, 8, 1], 9);
    let neuron = 5;
    let direct = |imgs: &[Tensor]| {
        imgs.iter().map(|i| top_features(i, &net).unwrap()[neuron] as f64).sum::<f64>() / imgs.len() as f64
    };
    let c = invariance_curve(&probe, neuron, &stimuli, Axis::Scale, &[1.0]).unwrap();
    assert_eq!(c.means[0], direct(&stimuli));
    let c = invariance_curve(&probe, neuron, &stimuli, Axis::TranslateX, &[0.0, 2.0]).unwrap();
    assert_eq!(c.means[0], direct(&stimuli));
    assert_eq!(c.n_stimuli, 4);

    let one = &stimuli[..1];
    let scales = [0.8, 1.0, 1.25];
    let c = invariance_curve(&probe, neuron, one, Axis::Scale, &scales).unwrap();
    for (i, &s) in scales.iter().enumerate() {
        let img = make_distortions(&one[0], &[s], &[(0.0, 0.0)]).unwrap().remove(0);
        assert_eq!(c.means[i], top_features(&img, &net).unwrap()[neuron] as f64);
    }
}

#[test]
fn zero_weights_give_a_flat_zero_curve() {
    let net = NetworkParams::zeros(small_net(0).config).unwrap();
    let probe = Probe::new(&net);
    let c = invariance_curve(&probe, 0, &random_images(3, [8, 8, 1], 1), Axis::TranslateY, &[-2.0, 0.0, 3.0]).unwrap();
    assert!(c.means.iter().all(|&m| m == 0.0));
}

#[test]
fn rotation_curve_averages_each_frame() {
    let net = small_net(4);
    let probe = Probe::new(&net);
    let seqs = vec![random_images(3, [8, 8, 1], 1), random_images(3, [8, 8, 1], 2)];
    let c = rotation_curve(&probe, 2, &seqs).unwrap();
    assert_eq!(c.values, vec![0.0, 1.0, 2.0]);
    for f in 0..3 {
        let want = seqs.iter().map(|s| top_features(&s[f], &net).unwrap()[2] as f64).sum::<f64>() / 2.0;
        assert_eq!(c.means[f], want);
    }
}

#[test]
fn top_stimuli_match_sort_oracle() {
    let net = small_net(6);
    let probe = Probe::new(&net);
    let mut images = random_images(10, [8, 8, 1], 21);
    images.push(images[3].clone());
    let neuron = 1;
    let mut oracle: Vec<(usize, f64)> =
        images.iter().enumerate().map(|(i, img)| (i, top_features(img, &net).unwrap()[neuron] as f64)).collect();
    oracle.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let all = top_stimuli(&probe, neuron, &images, images.len()).unwrap();
    assert_eq!(all, oracle);
    let pos3 = all.iter().position(|e| e.0 == 3).unwrap();
    assert_eq!(all[pos3 + 1].0, 10);
    assert_eq!(top_stimuli(&probe, neuron, &images, 1).unwrap()[0], oracle[0]);
    for k in 0..images.len() {
        let a = top_stimuli(&probe, neuron, &images, k).unwrap();
        let b = top_stimuli(&probe, neuron, &images, k + 1).unwrap();
        assert_eq!(a[..], b[..k]);
    }
    assert!(top_stimuli(&probe, neuron, &images, 12).is_err());
}

#[test]
fn cosine_edge_cases() {
    let a = Tensor::new(vec![1, 2, 1], vec![1.0, 0.0]).unwrap();
    let b = Tensor::new(vec![1, 2, 1], vec![0.0, 3.0]).unwrap();
    assert_eq!(cosine_similarity(&a, &b), 0.0);
    assert!((cosine_similarity(&b, &b) - 1.0).abs() < 1e-12);
    assert_eq!(cosine_similarity(&a, &Tensor::zeros(&[1, 2, 1])), 0.0);
}

#[test]
fn baseline_matches_pair_oracle() {
    let filters = random_images(5, [3, 3, 1], 40);
    let mut eval = random_images(8, [3, 3, 1], 41);
    eval[2] = filters[4].clone();
    let labels = [true, false, true, false, false, true, false, true];
    let mut best = 0.0f64;
    for f in &filters {
        let sims: Vec<f64> = eval
            .iter()
            .map(|x| {
                let (fd, xd) = (f.to_f64(), x.to_f64());
                let dot: f64 = fd.iter().zip(&xd).map(|(a, b)| a * b).sum();
                let nf = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
                let nx = xd.iter().map(|v| v * v).sum::<f64>().sqrt();
                dot / (nf * nx)
            })
            .collect();
        best = best.max(best_neuron_accuracy(&sims, &labels).unwrap().accuracy);
    }
    let got = filters_baseline(&filters, &eval, &labels).unwrap();
    assert_eq!(got.accuracy, best);
    assert!((cosine_similarity(&filters[4], &eval[2]) - 1.0).abs() < 1e-9);
}

#[test]
fn sampled_baseline_is_seeded() {
    let pool = random_images(6, [10, 12, 1], 50);
    let eval = random_images(10, [6, 6, 1], 51);
    let labels: Vec<bool> = (0..10).map(|i| i < 4).collect();
    let a = linear_filter_baseline(&pool, &eval, &labels, 20, 3).unwrap();
    let b = linear_filter_baseline(&pool, &eval, &labels, 20, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.filter.shape(), &[6, 6, 1]);
    assert!(a.accuracy >= 0.6);
}

fn sweep_setup() -> SweepSetup {
    let mut train = random_images(12, [8, 8, 1], 60);
    train.iter_mut().for_each(|t| *t = t.map(|v| 0.5 * v));
    let eval = random_images(10, [8, 8, 1], 61);
    SweepSetup {
        input: [8, 8, 1],
        specs: vec![StageSpec { rf_size: 4, stride: 2, num_maps: 2, pool_size: 2, lcn_window: 3, ..StageSpec::default() }],
        sgd: SgdConfig { learning_rate: 1e-3, minibatch_size: 4, max_steps: 5, seed: 2 },
        seed: 2,
        train,
        eval,
        labels: (0..10).map(|i| i % 2 == 0).collect(),
    }
}

#[test]
fn sweep_rows_are_reproducible_and_skip_invalid_values() {
    let setup = sweep_setup();
    assert!(sensitivity_sweep(&setup, SweepAxis::RfSize, &[]).unwrap().is_empty());
    let single = sensitivity_sweep(&setup, SweepAxis::NumMaps, &[3]).unwrap();
    let spec = StageSpec { num_maps: 3, ..setup.specs[0] };
    assert_eq!(single[0].accuracy, Some(setup.train_and_score(&[spec]).unwrap()));
    let rows = sensitivity_sweep(&setup, SweepAxis::RfSize, &[3, 20, 4]).unwrap();
    assert_eq!(rows[1].accuracy, None);
    assert_eq!(rows, sensitivity_sweep(&setup, SweepAxis::RfSize, &[3, 20, 4]).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    write_sweep(&path, SweepAxis::RfSize, &rows).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("rf_size,accuracy\n3,"));
    assert!(text.contains("\n20,\n"));
}

#[test]
fn report_files_have_documented_columns() {
    let labels = [true, false, true, false];
    let acts = vec![vec![1.0, 0.0], vec![0.0, 0.5], vec![0.9, 0.2], vec![0.1, 0.1]];
    let mut report = scan_all_neurons(&acts, &labels).unwrap();
    report.histograms.push((0, activation_histogram(&[1.0, 0.0, 0.9, 0.1], &labels, 4).unwrap()));
    let dir = tempfile::tempdir().unwrap();
    write_eval_report(dir.path(), &report).unwrap();
    let main = std::fs::read_to_string(dir.path().join("eval_report.csv")).unwrap();
    assert_eq!(main.lines().next().unwrap(), "neuron_index,accuracy,threshold,polarity,act_min,act_max");
    assert_eq!(main.lines().count(), 3);
    let hist = std::fs::read_to_string(dir.path().join("hist_0.csv")).unwrap();
    assert_eq!(hist.lines().next().unwrap(), "bin_lo,bin_hi,pos_count,neg_count");
    assert_eq!(hist.lines().count(), 5);
}

#[test]
fn optimal_stimulus_is_unit_norm_and_beats_random_unit_inputs() {
    let net = small_net(3);
    let cfg = LineSearchConfig::default();
    let r = optimal_stimulus(&net, 1, &cfg, 9).unwrap();
    assert!((r.x.norm() - 1.0).abs() < 1e-6);
    assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
    let probe = Probe::new(&net);
    let got = probe.response(&r.x, 1).unwrap();
    assert!((got - r.value).abs() < 1e-4, "{got} vs {}", r.value);
    for x in random_images(20, [8, 8, 1], 12) {
        let centered = x.map(|v| v - 0.5);
        let unit = centered.map(|v| v / centered.norm() as f32);
        assert!(probe.response(&unit, 1).unwrap() <= r.value + 1e-6);
    }
    assert_eq!(optimal_stimulus(&net, 1, &cfg, 9).unwrap().x, r.x);
    assert!(optimal_stimulus(&net, net.config.num_top_neurons(), &cfg, 9).is_err());
}
