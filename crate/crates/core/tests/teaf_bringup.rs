//! TeaF on a 50-trajectory desk dataset: loss falls, frozen blocks stay put
//! and the mined hard cases are the worst rollouts.

use gridseq::experiment::{split, ExperimentConfig};
use gridseq::model::Model;
use gridseq::simulator::{builtin, generate_dataset};
use gridseq::training::{rollout_mse, teaf_train, TeaFConfig, TrainLog};

#[test]
fn teaf_lowers_validation_loss_on_fifty_trajectories() {
    let exp = ExperimentConfig::default();
    let data = generate_dataset(&builtin::three_machine(), 50, 21, 1, &exp.dataset).unwrap();
    let splits = split(data, [0.8, 0.1, 0.1]);
    let mut model = Model::<f64>::init(exp.model_config().unwrap(), 22).unwrap();
    model.freeze_blocks();
    let before = model.params.clone();
    let cfg = TeaFConfig { epochs: 3, hard_cases: 5, seed: 23, ..TeaFConfig::default() };
    let mut log = TrainLog::in_memory();
    let out = teaf_train(&mut model, &splits.train, &splits.val, &cfg, &mut log).unwrap();

    let initial = out.summary.initial_val.unwrap();
    let best = out.summary.best_val.unwrap();
    assert!(best < 0.5 * initial, "validation loss {initial} -> {best}");

    for (k, (a, b)) in before.arrays.iter().zip(&model.params.arrays).enumerate() {
        if !model.freeze.is_trainable(k) {
            assert_eq!(a, b, "{}", a.name);
        }
    }

    assert_eq!(out.hard_cases.len(), 5);
    let scores: Vec<f64> = splits.train.iter().map(|t| rollout_mse(&model.params, &model.config, t).unwrap()).collect();
    let mut sorted = scores.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    for (case, want) in out.hard_cases.cases.iter().zip(&sorted) {
        assert_eq!(case.mse, *want);
        assert_eq!(scores[case.trajectory], case.mse);
    }
}
