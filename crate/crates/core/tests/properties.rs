use lru_core::checkpoint;
use lru_core::init::{lru_init, uniform, LruDims, LruInitConfig, LruParams, RingConfig};
use lru_core::model::{ModelConfig, ModelParams};
use lru_core::params::Parameters;
use lru_core::recurrence::{lru_forward, max_relative_deviation, ExecMode, SequenceBatch};
use lru_core::rng;
use lru_core::training::{train_loop, ModelTask, OptimConfig, Targets};
use proptest::prelude::*;

fn layer(h: usize, n: usize, r_min: f64, width: f64, seed: u64) -> LruParams {
    let cfg = LruInitConfig {
        ring: RingConfig::new(r_min, (r_min + width).min(0.999)),
        ..Default::default()
    };
    lru_init(&cfg, LruDims::square(h, n), &mut rng::root(seed)).unwrap()
}

fn batch(b: usize, len: usize, h: usize, seed: u64) -> SequenceBatch {
    let mut r = rng::root(seed);
    SequenceBatch::from_fn(b, len, h, |_, _, _| uniform(&mut r, -1.0, 1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn all_modes_match_sequential(
        len in 1usize..700,
        n in 1usize..12,
        h in 1usize..4,
        b in 1usize..3,
        r_min in 0.0f64..0.99,
        width in 0.0f64..0.5,
        seed in any::<u64>(),
    ) {
        let p = layer(h, n, r_min, width, seed);
        let u = batch(b, len, h, seed ^ 1);
        let (seq, _) = lru_forward(&p, &u, ExecMode::Sequential).unwrap();
        for mode in [ExecMode::Parallel, ExecMode::Tree] {
            let (y, _) = lru_forward(&p, &u, mode).unwrap();
            prop_assert!(max_relative_deviation(&y.data, &seq.data) < 1e-10, "{mode:?}");
        }
    }

    #[test]
    fn output_is_linear_in_the_input(
        len in 1usize..200,
        n in 1usize..10,
        a in -3.0f64..3.0,
        c in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let p = layer(2, n, 0.5, 0.45, seed);
        let u = batch(1, len, 2, seed ^ 2);
        let v = batch(1, len, 2, seed ^ 3);
        let mix = SequenceBatch::new(
            1,
            len,
            2,
            u.data.iter().zip(&v.data).map(|(x, y)| a * x + c * y).collect(),
        )
        .unwrap();
        let f = |s: &SequenceBatch| lru_forward(&p, s, ExecMode::Parallel).unwrap().0.data;
        let (fu, fv, fm) = (f(&u), f(&v), f(&mix));
        let expected: Vec<f64> = fu.iter().zip(&fv).map(|(x, y)| a * x + c * y).collect();
        let scale = expected.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for (got, want) in fm.iter().zip(&expected) {
            prop_assert!((got - want).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn any_finite_nu_log_is_stable(nu_log in proptest::collection::vec(-30.0f64..5.0, 1..16), seed in any::<u64>()) {
        let mut p = layer(1, nu_log.len(), 0.0, 1.0, seed);
        p.nu_log = nu_log;
        prop_assert!(p.max_lambda_abs() < 1.0);
    }

    #[test]
    fn checkpoint_round_trips(depth in 1usize..3, h in 1usize..5, n in 1usize..5, seed in any::<u64>()) {
        let cfg = ModelConfig { depth, h, n, input_dim: 2, output_dim: 3, ..Default::default() };
        let params = ModelParams::init(&cfg, &mut rng::root(seed)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("model");
        checkpoint::save(&params, &stem).unwrap();
        let mut loaded = ModelParams::init(&cfg, &mut rng::root(seed.wrapping_add(1))).unwrap();
        checkpoint::load(&mut loaded, &stem).unwrap();
        prop_assert_eq!(loaded.to_flat(), params.to_flat());
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let model = ModelConfig {
        depth: 1,
        h: 4,
        n: 4,
        dropout: 0.1,
        ..Default::default()
    };
    let inputs = batch(6, 16, 1, 0);
    let targets = SequenceBatch::from_fn(6, 1, 1, |b, _, _| inputs.sequence(b).iter().sum::<f64>() / 4.0);
    let task = ModelTask {
        name: "sum".into(),
        model,
        inputs,
        targets: Targets::Regression(targets),
        batch_size: Some(3),
    };
    let optim = OptimConfig {
        total_steps: 40,
        ..Default::default()
    };
    let (a, pa) = train_loop(&task, &optim, 5).unwrap();
    let (b, pb) = train_loop(&task, &optim, 5).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(pa.to_flat(), pb.to_flat());
    let (c, _) = train_loop(&task, &optim, 6).unwrap();
    assert_ne!(a.rows, c.rows);
    assert!(a.metrics["final_loss"] < a.metrics["initial_loss"]);
}
