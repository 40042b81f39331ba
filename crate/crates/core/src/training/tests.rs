use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::datapipe::extract_window;
use crate::datapipe::WindowOrigin;
use crate::model::{AttentionMode, FreezeMask, Model, ModelConfig, ModelParameters};
use crate::numerics::{grad_check, sample_coordinates};
use crate::rollout::{iterative_predict, ObservationWindow};
use crate::simulator::{builtin, generate_dataset, DatasetConfig, SimConfig, Trajectory};

fn cfg() -> ModelConfig {
    ModelConfig {
        layers: 2,
        heads: 2,
        d_model: 16,
        d_ff: 32,
        patch_len: 8,
        stride: 4,
        l_seq: 20,
        l_pred: 3,
        attention: AttentionMode::Causal,
        ln_eps: 1e-5,
    }
}

fn dataset(n: usize, seed: u64) -> Vec<Trajectory> {
    let dc = DatasetConfig {
        sim: SimConfig { horizon: 1.6, ..SimConfig::default() },
        t_fault: 0.2,
        ..DatasetConfig::default()
    };
    generate_dataset(&builtin::three_machine(), n, seed, 1, &dc).unwrap()
}

fn model(seed: u64) -> Model<f64> {
    let mut m = Model::init(cfg(), seed).unwrap();
    m.freeze_blocks();
    m
}

fn teaf_cfg() -> TeaFConfig {
    TeaFConfig {
        epochs: 2,
        batch_size: 16,
        hard_cases: 3,
        samples_per_epoch: Some(96),
        val_samples: Some(64),
        ..TeaFConfig::default()
    }
}

#[test]
fn teaf_is_deterministic() {
    let data = dataset(6, 1);
    let run = || {
        let mut m = model(3);
        let out = teaf_train(&mut m, &data[..4], &data[4..], &teaf_cfg(), &mut TrainLog::in_memory()).unwrap();
        (m, out)
    };
    let (a, oa) = run();
    let (b, ob) = run();
    assert_eq!(a, b);
    assert_eq!(oa, ob);
    assert_eq!(oa.hard_cases.len(), 3);
}

#[test]
fn hard_cases_clamp_to_dataset_and_sort() {
    let data = dataset(5, 2);
    let m = model(1);
    let set = mine_hard_cases(&m.params, &m.config, &data, 50).unwrap();
    assert_eq!(set.len(), 5);
    let mut ids = set.ids();
    ids.sort();
    assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    assert!(set.cases.windows(2).all(|w| w[0].mse >= w[1].mse));
    assert_eq!(set, mine_hard_cases(&m.params, &m.config, &data, 50).unwrap());
    for c in &set.cases {
        assert_eq!(c.mse, rollout_mse(&m.params, &m.config, &data[c.trajectory]).unwrap());
    }
}

#[test]
fn frozen_arrays_survive_both_stages() {
    let data = dataset(6, 3);
    let mut m = model(4);
    let before = m.params.clone();
    let mut log = TrainLog::in_memory();
    let out = teaf_train(&mut m, &data[..4], &data[4..], &teaf_cfg(), &mut log).unwrap();
    let hard = out.hard_cases.select(&data[..4]);
    let sc = SchSConfig { e_max: 2, e_start: 0, ..SchSConfig::default() };
    schs_train(&mut m, &hard, &[], &sc, &mut log).unwrap();
    let mut changed = 0;
    for (k, (a, b)) in before.arrays.iter().zip(&m.params.arrays).enumerate() {
        if m.freeze.is_trainable(k) {
            changed += (a != b) as usize;
        } else {
            assert_eq!(a, b, "{}", a.name);
        }
    }
    assert!(changed > 0);
}

#[test]
fn schs_with_truth_visits_teacher_forced_windows() {
    let data = dataset(1, 4);
    let m = model(5);
    let c = &m.config;
    let tr = schs_trace(&m.params, c, &data[0], 1.0, 9).unwrap();
    assert_eq!(tr.inputs.len(), schs_steps(data[0].len(), c.l_seq, c.l_pred));
    for (j, step) in tr.inputs.iter().enumerate() {
        for (ch, input) in step.iter().enumerate() {
            let w = extract_window::<f64>(
                &data,
                WindowOrigin { trajectory: 0, channel: ch, start: j * c.l_pred },
                c.l_seq,
                c.l_pred,
            );
            assert_eq!(input, &w.input);
        }
    }
    assert!(tr.from_truth.iter().flatten().all(|&t| t));
}

#[test]
fn schs_without_truth_is_the_rollout() {
    let data = dataset(2, 5);
    let m = model(6);
    let c = &m.config;
    for traj in &data {
        let tr = schs_trace(&m.params, c, traj, 0.0, 1).unwrap();
        let full = c.l_seq + schs_steps(traj.len(), c.l_seq, c.l_pred) * c.l_pred;
        let obs = ObservationWindow::from_trajectory(traj, c.l_seq).unwrap();
        let r = iterative_predict(&m.params, c, &obs, full).unwrap();
        assert_eq!(tr.predictions, r.predictions);
    }
}

#[test]
fn batch_gradient_passes_finite_differences() {
    let data = dataset(1, 6);
    let c = cfg();
    let mut params = ModelParameters::<f64>::init(&c, 7).unwrap();
    let freeze = FreezeMask::all_trainable(&params);
    let set = SeriesWindows::from_trajectories(&data, c.l_seq, c.l_pred);
    let picks: Vec<usize> = (0..set.len()).step_by(7).take(6).collect();
    let loss = |p: &ModelParameters<f64>| window_loss(p, &c, &set, &picks).unwrap();
    let mut grads = ModelParameters::zeros(&c);
    let n = picks.len() * c.l_pred;
    let (x, y): (Vec<Vec<f64>>, Vec<Vec<f64>>) = picks
        .iter()
        .map(|&i| {
            let (k, s) = set.origins[i];
            let v = set.series[k];
            (v[s..s + c.l_seq].to_vec(), v[s + c.l_seq..s + c.l_seq + c.l_pred].to_vec())
        })
        .unzip();
    let xr: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    let yr: Vec<&[f64]> = y.iter().map(Vec::as_slice).collect();
    super::loss::fit_batch(&params, &c, &xr, &yr, None, 1.0 / n as f64, Some((&mut grads, &freeze))).unwrap();
    let coords = sample_coordinates(&params, 300, 11);
    let report = grad_check(loss, &mut params, &grads, &coords, 1e-5).unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn truth_fed_replay_gradient_passes_finite_differences() {
    let data = dataset(1, 7);
    let c = cfg();
    let mut params = ModelParameters::<f64>::init(&c, 8).unwrap();
    let freeze = FreezeMask::finetune(&params);
    let mut grads = ModelParameters::zeros(&c);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    super::schs::replay_for_test(&params, &c, &data[0], &mut rng, &mut grads, &freeze).unwrap();
    let loss = |p: &ModelParameters<f64>| schs_trace(p, &c, &data[0], 1.0, 0).unwrap().loss;
    let coords: Vec<(usize, usize)> =
        sample_coordinates(&params, 300, 3).into_iter().filter(|&(a, _)| freeze.is_trainable(a)).collect();
    assert!(!coords.is_empty());
    let report = grad_check(loss, &mut params, &grads, &coords, 1e-5).unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");
    for (k, g) in grads.arrays.iter().enumerate() {
        if !freeze.is_trainable(k) {
            assert!(g.value.data().iter().all(|&v| v == 0.0), "{}", g.name);
        }
    }
}

#[test]
fn non_finite_loss_is_divergence() {
    let data = dataset(3, 8);
    let mut m = model(2);
    let hb = m.params.index_of("head.b").unwrap();
    m.params.get_mut(hb).data_mut()[0] = f64::NAN;
    let err = teaf_train(&mut m, &data[..2], &data[2..], &teaf_cfg(), &mut TrainLog::in_memory()).unwrap_err();
    assert!(matches!(err, crate::Error::Divergence { epoch: 1, step: 0, .. }), "{err}");
}

#[test]
fn log_file_records_schedule() {
    let data = dataset(3, 9);
    let mut m = model(3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.jsonl");
    let mut log = TrainLog::to_file(&path).unwrap();
    let sc = SchSConfig { e_max: 4, e_start: 2, ..SchSConfig::default() };
    schs_train(&mut m, &data, &[], &sc, &mut log).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let recs: Vec<EpochRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs, log.records);
    let eps: Vec<f64> = recs.iter().map(|r| r.epsilon.unwrap()).collect();
    let want: Vec<f64> = (1..=4).map(|k| sampling_rate(k, 2, 4).unwrap()).collect();
    assert_eq!(eps, want);
    assert_eq!(eps, vec![1.0, 1.0, 0.5, 0.0]);
}

#[test]
fn synthetic_families_are_finite_and_seeded() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for fam in SeriesFamily::ALL {
        for _ in 0..50 {
            let s = synth_series(fam, 300, &mut rng);
            assert_eq!(s.len(), 300);
            assert!(s.iter().all(|v| v.is_finite() && v.abs() < 100.0), "{fam:?}");
        }
    }
    assert_eq!(synth_corpus(8, 50, 3, 0), synth_corpus(8, 50, 3, 0));
    assert_ne!(synth_corpus(8, 50, 3, 0), synth_corpus(8, 50, 4, 0));
}

#[test]
fn pretraining_is_seeded_and_lowers_held_out_loss() {
    let corpus = SurrogateConfig {
        series: 64,
        held_out_series: 16,
        length: 60,
        epochs: 4,
        samples_per_epoch: Some(512),
        val_samples: Some(256),
        ..SurrogateConfig::default()
    };
    let run = || surrogate_pretrain::<f64>(&cfg(), &corpus, 5, &mut TrainLog::in_memory()).unwrap();
    let (a, ra) = run();
    let (b, _) = run();
    assert_eq!(a, b);
    assert!(ra.final_loss < ra.initial_loss, "{ra:?}");
    assert_eq!(a.freeze, FreezeMask::finetune(&a.params));
}

#[test]
fn config_validation() {
    assert!(SchSConfig { e_start: 3, e_max: 3, ..SchSConfig::default() }.validate().is_err());
    assert!(TeaFConfig { hard_cases: 0, ..TeaFConfig::default() }.validate().is_err());
    let mut m = model(1);
    let data = dataset(2, 1);
    assert!(schs_train(&mut m, &[], &data, &SchSConfig::default(), &mut TrainLog::in_memory()).is_err());
}
