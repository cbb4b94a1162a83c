use proptest::prelude::*;

use niert::baseline::{idw_eval, rbf_fit};
use niert::model::{forward, init_params, ModelConfig};
use niert::numerics::{adam_step, linear_solve, AdamConfig, AdamState, Matrix, RngStream};
use niert::taskgen::dataset::{dataset_to_string, parse_dataset};
use niert::taskgen::{generate_task, InterpolationTask, ScatteredPoint, TaskGenConfig};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -10.0..10.0f64,
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
        Just(f64::MAX),
    ]
}

/// Distinct 1D positions: a jittered grid keeps every gap above 0.5 / count.
fn spaced_positions(count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = RngStream::new(seed, 3);
    let step = 2.0 / count as f64;
    let mut xs: Vec<Vec<f64>> =
        (0..count).map(|i| vec![-1.0 + step * (i as f64 + 0.25 + 0.5 * rng.uniform(0.0, 1.0))]).collect();
    rng.shuffle(&mut xs);
    xs
}

fn random_task(seed: u64, n: usize, m: usize) -> InterpolationTask {
    let xs = spaced_positions(n + m, seed);
    let mut rng = RngStream::new(seed, 4);
    let mut ys = (0..n + m).map(|_| vec![rng.uniform(0.0, 1.0)]);
    let observed = xs[..n].iter().map(|x| ScatteredPoint::observed(x.clone(), ys.next().unwrap())).collect();
    InterpolationTask {
        observed,
        targets: xs[n..].iter().map(|x| ScatteredPoint::target(x.clone())).collect(),
        target_truth: ys.collect(),
        d_x: 1,
        d_y: 1,
        source_id: format!("prop-{seed}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dataset_round_trip_is_bitwise(
        xs in prop::collection::vec(prop::collection::vec(-1.0..=1.0f64, 1..4), 2..12),
        ys in prop::collection::vec(finite(), 12),
    ) {
        let d_x = xs[0].len();
        let xs: Vec<Vec<f64>> = xs.into_iter().filter(|x| x.len() == d_x).collect();
        prop_assume!(xs.len() >= 2);
        let n = xs.len() - 1;
        let task = InterpolationTask {
            observed: (0..n).map(|i| ScatteredPoint::observed(xs[i].clone(), vec![ys[i]])).collect(),
            targets: vec![ScatteredPoint::target(xs[n].clone())],
            target_truth: vec![vec![ys[11]]],
            d_x,
            d_y: 1,
            source_id: "round-trip".into(),
        };
        prop_assume!(task.validate().is_ok());
        let back = parse_dataset(&dataset_to_string(std::slice::from_ref(&task)).unwrap()).unwrap();
        prop_assert_eq!(back.len(), 1);
        let bits = |t: &InterpolationTask| -> Vec<u64> {
            t.observed.iter().chain(&t.targets)
                .flat_map(|p| p.x.iter().chain(p.y.iter().flatten()).map(|v| v.to_bits()).collect::<Vec<_>>())
                .chain(t.target_truth.iter().flatten().map(|v| v.to_bits()))
                .collect()
        };
        prop_assert_eq!(bits(&back[0]), bits(&task));
        prop_assert_eq!(&back[0], &task);
    }

    #[test]
    fn rbf_reproduces_nodes(seed in any::<u64>(), n in 1usize..48, shape in 0.01..1.0f64) {
        let task = random_task(seed, n, 0);
        let centers: Vec<Vec<f64>> = task.observed.iter().map(|p| p.x.clone()).collect();
        let values: Vec<Vec<f64>> = (0..n).map(|i| task.observed_y(i).to_vec()).collect();
        // Large shapes with many centers are flat-limit singular; skip those.
        let model = match rbf_fit(&centers, &values, shape, 0.0) {
            Ok(m) => m,
            Err(e) => {
                prop_assert!(shape * n as f64 > 2.0, "unexpected failure: {e}");
                return Ok(());
            }
        };
        for (c, v) in centers.iter().zip(&values) {
            prop_assert!((model.eval(c).unwrap()[0] - v[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn idw_stays_within_data_range(seed in any::<u64>(), n in 1usize..30, x in -1.5..1.5f64, power in 0.5..4.0f64) {
        let task = random_task(seed, n, 0);
        let pos: Vec<Vec<f64>> = task.observed.iter().map(|p| p.x.clone()).collect();
        let vals: Vec<Vec<f64>> = (0..n).map(|i| task.observed_y(i).to_vec()).collect();
        let y = idw_eval(&pos, &vals, &[x], power)[0];
        let lo = vals.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
        let hi = vals.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo - 1e-12 <= y && y <= hi + 1e-12);
    }

    #[test]
    fn linear_solve_recovers_x(seed in any::<u64>(), dim in 1usize..=64) {
        let mut rng = RngStream::new(seed, 5);
        let mut a = Matrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                a[(i, j)] = rng.uniform(-1.0, 1.0);
            }
            a[(i, i)] += dim as f64;
        }
        let x: Vec<f64> = (0..dim).map(|_| rng.uniform(-5.0, 5.0)).collect();
        let b: Vec<f64> = (0..dim).map(|i| (0..dim).map(|j| a[(i, j)] * x[j]).sum()).collect();
        let got = linear_solve(&a, &b, 0.0).unwrap();
        let err = got.iter().zip(&x).map(|(g, e)| (g - e).powi(2)).sum::<f64>().sqrt();
        let norm = x.iter().map(|e| e * e).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-8 * norm.max(1e-300));
    }

    #[test]
    fn adam_first_step_moves_by_lr(grads in prop::collection::vec(-1e3..1e3f64, 1..20), lr in 1e-5..1e-1f64) {
        prop_assume!(grads.iter().all(|g| g.abs() > 1e-3));
        let config = AdamConfig { lr, ..AdamConfig::default() };
        let mut p = vec![0.0; grads.len()];
        let mut state = AdamState::new(grads.len(), config).unwrap();
        adam_step(&mut p, &grads, &mut state).unwrap();
        for (step, g) in p.iter().zip(&grads) {
            // Bias correction makes the first update -lr·g/(|g| + eps).
            let expected = -lr * g / (g.abs() + config.eps);
            prop_assert!((step - expected).abs() <= 1e-12 * lr);
        }
        let mut again = vec![0.0; grads.len()];
        let mut state2 = AdamState::new(grads.len(), config).unwrap();
        adam_step(&mut again, &grads, &mut state2).unwrap();
        prop_assert_eq!(p, again);
    }

    #[test]
    fn rng_streams_reproduce(seed in any::<u64>(), stream in any::<u64>(), label in any::<u64>()) {
        let draw = |r: &mut RngStream| (0..8).map(|_| r.uniform(0.0, 1.0).to_bits()).collect::<Vec<_>>();
        let base = RngStream::new(seed, stream);
        prop_assert_eq!(draw(&mut base.derive(label)), draw(&mut base.derive(label)));
        prop_assert_ne!(draw(&mut base.derive(label)), draw(&mut base.derive(label.wrapping_add(1))));
        prop_assert_ne!(draw(&mut RngStream::new(seed, stream)), draw(&mut RngStream::new(seed, stream.wrapping_add(1))));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_tasks_respect_config(seed in any::<u64>(), index in 0u64..1000, d_x in 1usize..4, lo in 2usize..20, span in 0usize..20) {
        let mut config = TaskGenConfig::gaussian(d_x, Some(0.5), seed);
        config.total_points = 48;
        config.n_range = (lo, lo + span);
        let a = generate_task(&config, index).unwrap().task;
        prop_assert!(a.validate().is_ok());
        prop_assert_eq!(a.n() + a.m(), 48);
        prop_assert!((lo..=lo + span).contains(&a.n()));
        prop_assert!(a.observed.iter().chain(&a.targets).all(|p| p.x.iter().all(|v| (-1.0..=1.0).contains(v))));
        prop_assert_eq!(generate_task(&config, index).unwrap().task, a);
    }

    #[test]
    fn targets_do_not_see_each_other(seed in any::<u64>(), n in 1usize..10, m in 2usize..10, keep in 0usize..10) {
        let config = ModelConfig::sized(1, 1, 2, 8, 2);
        let params = init_params(&config, &mut RngStream::new(seed, 6)).unwrap();
        let task = random_task(seed, n, m);
        let k = keep % m;
        let single = task.with_targets(vec![task.targets[k].x.clone()], vec![task.target_truth[k].clone()]);
        let full = forward(&task, &params, &config, false).unwrap().predictions;
        let alone = forward(&single, &params, &config, false).unwrap().predictions;
        let (a, b) = (full[(n + k, 0)], alone[(n, 0)]);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        for i in 0..n {
            prop_assert!((full[(i, 0)] - alone[(i, 0)]).abs() <= 1e-12 * full[(i, 0)].abs().max(1.0));
        }
    }
}
