use std::collections::BTreeSet;

use dcs3gd::models::{make_synthetic_dataset, DatasetSpec, Model, ModelKind, QuadraticSpec};
use dcs3gd::optim::{CompensationConfig, PlateauConfig, Schedule};
use dcs3gd::sim::{
    run, run_observed, Algorithm, AsyncUpdateView, ClusterConfig, CompensationMode, CostModel,
    Observer, OptimizerSetup, Problem, RoundView, RunSpec, Sharding, SimError,
};
use dcs3gd::vecmath::{ParamVector, BIAS_GROUP};

fn logistic_problem(n_samples: usize, seed: u64) -> Problem {
    let data = make_synthetic_dataset(&DatasetSpec::new(
        ModelKind::LogisticRegression,
        n_samples,
        8,
        3,
        seed,
    ))
    .unwrap();
    let (train, validation) = data.split(0.2).unwrap();
    let model = Model::logistic_regression(8, 3).unwrap();
    let initial_weights = model.initial_weights(seed);
    Problem {
        model,
        train,
        validation,
        initial_weights,
    }
}

fn mlp_problem(seed: u64) -> Problem {
    let data = make_synthetic_dataset(&DatasetSpec::new(ModelKind::Mlp, 640, 6, 3, seed)).unwrap();
    let (train, validation) = data.split(0.2).unwrap();
    let model = Model::mlp(&[6, 10, 3]).unwrap();
    let initial_weights = model.initial_weights(seed);
    Problem {
        model,
        train,
        validation,
        initial_weights,
    }
}

fn cluster(algorithm: Algorithm, n_workers: usize, cost: CostModel) -> ClusterConfig {
    ClusterConfig {
        n_workers,
        algorithm,
        local_batch_size: 8,
        cost,
        seed: 17,
        sharding: Sharding::Disjoint,
        wraparound: true,
    }
}

/// Warm-up, decay and weight decay on weights only: exercises every schedule path.
fn full_optimizer(total: u64, peak: f64) -> OptimizerSetup {
    let lr = Schedule::new(total, total / 3, peak / 4.0, peak, 0.0).unwrap();
    OptimizerSetup {
        momentum: 0.9,
        learning_rate: lr,
        weight_decay: lr.scaled_to_peak(1e-3).unwrap(),
        decay_excluded_groups: BTreeSet::from([BIAS_GROUP]),
        plateau: None,
    }
}

fn spec(cluster: ClusterConfig, iterations: u64, compensation: CompensationMode) -> RunSpec {
    RunSpec {
        cluster,
        optimizer: full_optimizer(iterations, 0.2),
        compensation,
        max_iterations: iterations,
        eval_interval: 10,
    }
}

fn pseudo() -> CompensationMode {
    CompensationMode::PseudoHessian(CompensationConfig::default())
}

fn max_abs_diff(a: &ParamVector, b: &ParamVector) -> f64 {
    a.sub(b).unwrap().max_abs()
}

#[test]
fn synchronous_timing_matches_cost_model() {
    let problem = logistic_problem(800, 1);
    let cost = CostModel::new(10.0, 4.0, 0.0);
    let k = 20;
    let dc = run(
        &spec(cluster(Algorithm::DcS3gd, 4, cost), k, pseudo()),
        &problem,
    )
    .unwrap();
    let ss = run(
        &spec(cluster(Algorithm::Ssgd, 4, cost), k, pseudo()),
        &problem,
    )
    .unwrap();
    for (i, row) in dc.rows.iter().enumerate() {
        assert_eq!(row.simulated_time, 10.0 * (i + 1) as f64);
    }
    for (i, row) in ss.rows.iter().enumerate() {
        assert_eq!(row.simulated_time, 14.0 * (i + 1) as f64);
    }
    assert_eq!(dc.summary.total_simulated_time, 200.0);
    assert_eq!(ss.summary.total_simulated_time, 280.0);

    // Communication-bound: the allreduce sets the pace after priming.
    let slow_net = CostModel::new(3.0, 5.0, 0.0);
    let dc = run(
        &spec(cluster(Algorithm::DcS3gd, 4, slow_net), k, pseudo()),
        &problem,
    )
    .unwrap();
    for (i, row) in dc.rows.iter().enumerate() {
        assert_eq!(row.simulated_time, 3.0 + 5.0 * i as f64);
    }
}

#[test]
fn async_timing_is_compute_plus_round_trip() {
    let problem = logistic_problem(800, 2);
    let cost = CostModel::new(10.0, 0.0, 6.0);
    let record = run(
        &spec(cluster(Algorithm::DcAsgd, 1, cost), 10, pseudo()),
        &problem,
    )
    .unwrap();
    // Gradient k reaches the server half a round trip after its computation.
    for (k, row) in record.rows.iter().enumerate() {
        assert_eq!(row.simulated_time, 16.0 * k as f64 + 13.0);
    }
    assert_eq!(record.summary.mean_staleness, Some(0.0));
}

#[test]
fn single_worker_collapses_to_momentum_sgd() {
    for problem in [logistic_problem(400, 3), mlp_problem(3)] {
        let cost = CostModel::new(1.0, 1.0, 1.0);
        let runs: Vec<_> = [Algorithm::DcS3gd, Algorithm::Ssgd, Algorithm::DcAsgd]
            .into_iter()
            .map(|a| run(&spec(cluster(a, 1, cost), 60, pseudo()), &problem).unwrap())
            .collect();
        for other in &runs[1..] {
            assert_eq!(runs[0].final_weights, other.final_weights);
            for (a, b) in runs[0].rows.iter().zip(&other.rows) {
                assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
                assert_eq!(a.grad_norm.to_bits(), b.grad_norm.to_bits());
                assert_eq!(a.max_abs_d, 0.0);
                assert_eq!(a.mean_lambda, 0.0);
            }
        }
    }
}

#[derive(Default)]
struct RoundChecks {
    rounds: u64,
    worst_sum: f64,
    worst_shadow: f64,
    reconstructions_identical: bool,
    shadow: Option<ParamVector>,
    previous_weights: Vec<ParamVector>,
    n: f64,
}

impl Observer for RoundChecks {
    fn on_round(&mut self, view: &RoundView<'_>) {
        self.rounds += 1;
        let mut sum = view.distances[0].zeros_like();
        for d in view.distances {
            sum = sum.add(d).unwrap();
        }
        // D_i = w̄ − w_i is formed at the scale of the weights, so that is
        // the scale its rounding error lives at.
        let scale = view.weights.iter().map(|w| w.max_abs()).fold(1.0, f64::max);
        self.worst_sum = self.worst_sum.max(sum.max_abs() / scale);
        self.reconstructions_identical &= view
            .reconstructions
            .iter()
            .all(|r| r == &view.reconstructions[0]);
        if let Some(reduced) = view.reduced_update {
            // w̄ after the previous iteration, tracked independently: average of
            // the previous local weights, which also equals w̄ + Δ̄w / N.
            let mut avg = self.previous_weights[0].zeros_like();
            for w in &self.previous_weights {
                avg = avg.add(w).unwrap();
            }
            let avg = avg.scale(1.0 / self.n).unwrap();
            let shadow = reduced
                .axpy(1.0 / self.n, &self.shadow.take().unwrap())
                .unwrap();
            let tol = 1e-12 * (1.0 + avg.max_abs());
            self.worst_shadow = self
                .worst_shadow
                .max(max_abs_diff(&avg, &view.reconstructions[0]) / tol)
                .max(max_abs_diff(&shadow, &view.reconstructions[0]) / tol);
            self.shadow = Some(view.reconstructions[0].clone());
        } else {
            self.shadow = Some(view.reconstructions[0].clone());
        }
        self.previous_weights = view.weights.to_vec();
    }
}

#[test]
fn distances_cancel_and_every_worker_recovers_the_average() {
    for (problem, n) in [(logistic_problem(1000, 4), 5), (mlp_problem(4), 8)] {
        let mut checks = RoundChecks {
            reconstructions_identical: true,
            n: n as f64,
            ..Default::default()
        };
        let cost = CostModel {
            jitter: 0.7,
            ..CostModel::new(2.0, 1.5, 0.0)
        };
        let s = spec(cluster(Algorithm::DcS3gd, n, cost), 40, pseudo());
        let record = run_observed(&s, &problem, &mut checks).unwrap();
        assert_eq!(checks.rounds, 40);
        assert!(checks.reconstructions_identical);
        assert!(
            checks.worst_sum < 1e-13,
            "sum of distances {}",
            checks.worst_sum
        );
        assert!(
            checks.worst_shadow <= 1.0,
            "shadow mismatch {}",
            checks.worst_shadow
        );
        assert!(record.rows.iter().skip(1).all(|r| r.max_abs_d > 0.0));
    }
}

#[test]
fn replicated_data_has_zero_distance_and_matches_ssgd() {
    let problem = mlp_problem(5);
    let cost = CostModel::new(1.0, 1.0, 0.0);
    let mut c = cluster(Algorithm::DcS3gd, 8, cost);
    c.sharding = Sharding::Replicated;
    let dc = run(&spec(c.clone(), 50, pseudo()), &problem).unwrap();
    c.algorithm = Algorithm::Ssgd;
    let ss = run(&spec(c, 50, pseudo()), &problem).unwrap();
    assert!(dc
        .rows
        .iter()
        .all(|r| r.max_abs_d == 0.0 && r.mean_lambda == 0.0));
    assert_eq!(dc.final_weights, ss.final_weights);
    for (a, b) in dc.rows.iter().zip(&ss.rows) {
        assert_eq!(a.train_loss, b.train_loss);
    }
}

#[test]
fn runs_are_deterministic() {
    let problem = logistic_problem(600, 6);
    let cost = CostModel {
        jitter: 0.5,
        ..CostModel::new(1.0, 0.8, 0.5)
    };
    for algorithm in [Algorithm::DcS3gd, Algorithm::Ssgd, Algorithm::DcAsgd] {
        let s = spec(cluster(algorithm, 4, cost), 45, pseudo());
        let a = run(&s, &problem).unwrap();
        let b = run(&s, &problem).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.summary, b.summary);
        assert_eq!(a.final_weights, b.final_weights);
    }
}

#[test]
fn overlap_never_loses_to_blocking_under_jitter() {
    let problem = logistic_problem(800, 7);
    for jitter in [0.0, 0.3, 1.0] {
        let cost = CostModel {
            jitter,
            ..CostModel::new(1.0, 0.6, 0.0)
        };
        let dc = run(
            &spec(cluster(Algorithm::DcS3gd, 4, cost), 30, pseudo()),
            &problem,
        )
        .unwrap();
        let ss = run(
            &spec(cluster(Algorithm::Ssgd, 4, cost), 30, pseudo()),
            &problem,
        )
        .unwrap();
        assert!(dc.summary.total_simulated_time <= ss.summary.total_simulated_time);
    }
}

#[derive(Default)]
struct Staleness(Vec<u64>);

impl Observer for Staleness {
    fn on_async_update(&mut self, view: &AsyncUpdateView<'_>) {
        self.0.push(view.staleness);
    }
}

#[test]
fn async_staleness_grows_with_workers() {
    let problem = logistic_problem(800, 8);
    let cost = CostModel::new(1.0, 0.0, 0.2);
    let mut seen = Staleness::default();
    let s = spec(cluster(Algorithm::DcAsgd, 4, cost), 40, pseudo());
    let record = run_observed(&s, &problem, &mut seen).unwrap();
    // Equal compute times: each wave of four arrivals sees 0, 1, 2, 3 earlier updates.
    assert_eq!(&seen.0[..8], &[0, 1, 2, 3, 3, 3, 3, 3]);
    let mean = seen.0.iter().sum::<u64>() as f64 / seen.0.len() as f64;
    assert_eq!(record.summary.mean_staleness, Some(mean));
    assert!(record.summary.mean_server_distance.unwrap() > 0.0);
}

#[test]
fn evaluation_rows_and_summary() {
    let problem = logistic_problem(600, 9);
    let cost = CostModel::new(1.0, 0.5, 0.5);
    for algorithm in [Algorithm::DcS3gd, Algorithm::Ssgd, Algorithm::DcAsgd] {
        let r = run(&spec(cluster(algorithm, 2, cost), 35, pseudo()), &problem).unwrap();
        assert_eq!(r.rows.len(), 35);
        let evaluated: Vec<u64> = r
            .rows
            .iter()
            .filter(|row| row.val_error.is_some())
            .map(|row| row.iteration)
            .collect();
        assert_eq!(evaluated, vec![9, 19, 29, 34]);
        let tail = &r.rows[35usize.saturating_sub(r.meta.rows_per_epoch as usize)..];
        let mean = tail.iter().map(|row| row.train_loss).sum::<f64>() / tail.len() as f64;
        assert_eq!(r.summary.final_train_loss, mean);
        assert_eq!(r.summary.final_val_error, r.rows[34].val_error);
        assert_eq!(r.summary.completed_iterations, 35);
        let (_, err) = problem
            .model
            .evaluate(&r.final_weights, &problem.validation.samples)
            .unwrap();
        assert_eq!(Some(err), r.summary.final_val_error);
    }
}

fn quadratic_problem(dim: usize, start: f64) -> Problem {
    let q = QuadraticSpec::generate(dim, 2, 0.5, 2.0, 3).unwrap();
    let data =
        make_synthetic_dataset(&DatasetSpec::new(ModelKind::Quadratic, 400, dim, 0, 3)).unwrap();
    let (train, validation) = data.split(0.2).unwrap();
    let model = Model::quadratic(q);
    Problem {
        initial_weights: model
            .initial_weights(0)
            .with_values(vec![start; dim])
            .unwrap(),
        model,
        train,
        validation,
    }
}

#[test]
fn divergence_stops_the_run() {
    let problem = quadratic_problem(12, 1.0);
    let cost = CostModel::new(1.0, 1.0, 1.0);
    for algorithm in [Algorithm::DcS3gd, Algorithm::Ssgd, Algorithm::DcAsgd] {
        let mut s = spec(cluster(algorithm, 2, cost), 2000, pseudo());
        s.optimizer = OptimizerSetup::constant(2000, 10.0, 0.9).unwrap();
        let r = run(&s, &problem).unwrap();
        assert!(r.diverged(), "{algorithm} did not diverge");
        assert!(r.rows.len() < 2000);
        assert_eq!(r.summary.diverged_at, Some(r.rows.len() as u64));
    }
}

#[test]
fn exhausted_shard_is_an_error_without_wraparound() {
    let problem = logistic_problem(400, 11);
    let mut c = cluster(Algorithm::DcS3gd, 4, CostModel::new(1.0, 1.0, 0.0));
    c.wraparound = false;
    // 320 training samples: 80 per worker, 10 batches each.
    let ok = run(&spec(c.clone(), 10, pseudo()), &problem).unwrap();
    assert_eq!(ok.meta.rows_per_epoch, 10);
    let err = run(&spec(c, 11, pseudo()), &problem).unwrap_err();
    assert!(matches!(err, SimError::ShardExhausted { .. }));
}

#[test]
fn exact_hessian_hook_on_a_quadratic() {
    let problem = quadratic_problem(12, 3.0);
    let cost = CostModel::new(1.0, 1.0, 0.0);
    let mut s = spec(
        cluster(Algorithm::DcS3gd, 4, cost),
        80,
        CompensationMode::ExactHessian,
    );
    s.optimizer = OptimizerSetup::constant(80, 0.05, 0.5).unwrap();
    let r = run(&s, &problem).unwrap();
    assert!(r.rows.iter().skip(1).all(|row| row.mean_lambda == 1.0));
    assert!(r.summary.final_train_loss < r.rows[0].train_loss / 10.0);
}

#[test]
fn plateau_ends_warmup_early() {
    // A quadratic converges quickly, so a long warm-up stalls and is cut short.
    let q = QuadraticSpec::identity(vec![0.0; 4]).unwrap();
    let data =
        make_synthetic_dataset(&DatasetSpec::new(ModelKind::Quadratic, 100, 4, 0, 1)).unwrap();
    let (train, validation) = data.split(0.2).unwrap();
    let model = Model::quadratic(q);
    let problem = Problem {
        initial_weights: model.initial_weights(0),
        model,
        train,
        validation,
    };
    let mut c = cluster(Algorithm::Ssgd, 1, CostModel::new(1.0, 1.0, 0.0));
    c.local_batch_size = 10;
    let total = 400;
    let lr = Schedule::new(total, 360, 0.05, 0.5, 0.0).unwrap();
    let s = RunSpec {
        cluster: c,
        optimizer: OptimizerSetup {
            momentum: 0.0,
            learning_rate: lr,
            weight_decay: Schedule::constant(total, 0.0).unwrap(),
            decay_excluded_groups: BTreeSet::new(),
            plateau: Some(PlateauConfig::default()),
        },
        compensation: CompensationMode::Disabled,
        max_iterations: total,
        eval_interval: 0,
    };
    let r = run(&s, &problem).unwrap();
    let stop = r
        .summary
        .warmup_stopped_at
        .expect("warm-up should stop early");
    assert_eq!(stop % 40, 0);
    let at_stop = r.rows[stop as usize].learning_rate;
    assert!(at_stop < 0.5);
    assert!(r.rows[stop as usize + 1].learning_rate < at_stop);
}

#[test]
fn schedule_too_short_is_rejected() {
    let problem = logistic_problem(400, 12);
    let mut s = spec(
        cluster(Algorithm::Ssgd, 2, CostModel::new(1.0, 1.0, 0.0)),
        50,
        pseudo(),
    );
    s.optimizer = OptimizerSetup::constant(10, 0.1, 0.9).unwrap();
    assert!(matches!(run(&s, &problem), Err(SimError::Config(_))));
}
