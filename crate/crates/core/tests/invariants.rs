use dcs3gd::optim::{
    compensate, detect_plateau, dynamic_lambda, CompensationConfig, MomentumState, Schedule,
};
use dcs3gd::sim::{shard_ranges, ShardCursor, Sharding};
use dcs3gd::vecmath::{sum_pairwise, ParamVector};
use proptest::prelude::*;

fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3..1e3f64, len)
}

fn pv(v: Vec<f64>) -> ParamVector {
    ParamVector::from_values(v).unwrap()
}

proptest! {
    #[test]
    fn replicated_sum_divides_back_exactly(v in values(12), k in 0u32..6) {
        let x = pv(v);
        let copies = vec![&x; 1 << k];
        let mean = sum_pairwise(&copies).unwrap().scale(1.0 / (1u32 << k) as f64).unwrap();
        prop_assert_eq!(mean, x);
    }

    #[test]
    fn zero_distance_leaves_gradient_alone(g in values(9), lambda in 0.0..10.0f64) {
        let g = pv(g);
        prop_assert_eq!(compensate(&g, &g.zeros_like(), lambda).unwrap(), g);
    }

    #[test]
    fn correction_norm_is_lambda0_times_gradient_norm(
        (g, d) in (1usize..40).prop_flat_map(|n| (values(n), values(n))),
        lambda0 in 0.01..2.0f64,
    ) {
        let cfg = CompensationConfig::new(lambda0).unwrap();
        let (g, d) = (pv(g), pv(d));
        let lambda = dynamic_lambda(&cfg, &g, &d).unwrap();
        let term = compensate(&g, &d, lambda).unwrap().sub(&g).unwrap();
        let term_norm = term.l2_norm().unwrap();
        if lambda == 0.0 {
            prop_assert_eq!(term_norm, 0.0);
        } else {
            let expected = lambda0 * g.l2_norm().unwrap();
            prop_assert!((term_norm - expected).abs() <= 1e-9 * expected);
        }
    }

    #[test]
    fn schedule_stays_between_its_knots(
        total in 1u64..500,
        warm_frac in 0.0..=1.0f64,
        start in 0.0..1.0f64,
        peak in 0.0..5.0f64,
        end in 0.0..1.0f64,
    ) {
        let warm = (warm_frac * total as f64) as u64;
        let s = Schedule::new(total, warm, start, peak, end).unwrap();
        let lo = start.min(peak).min(end);
        let hi = start.max(peak).max(end);
        for t in 0..=total {
            let v = s.value(t).unwrap();
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
        prop_assert_eq!(s.value(warm).unwrap(), peak);
        prop_assert!(s.value(total + 1).is_err());
    }

    #[test]
    fn flat_loss_history_is_a_plateau(loss in 0.01..10.0f64, window in 1usize..6, extra in 0usize..6) {
        let epochs = 2 * window + extra;
        let history = vec![loss; epochs];
        prop_assert!(detect_plateau(&history, window, epochs, 0.0).unwrap());
    }

    #[test]
    fn disjoint_shards_do_not_overlap(n in 1usize..2000, workers in 1usize..17) {
        let ranges = shard_ranges(n, workers, Sharding::Disjoint);
        prop_assert_eq!(ranges.len(), workers);
        for pair in ranges.windows(2) {
            prop_assert_eq!(pair[0].end, pair[1].start);
            prop_assert_eq!(pair[0].len(), pair[1].len());
        }
        prop_assert!(ranges.last().unwrap().end <= n);
        prop_assert!(n - ranges.last().unwrap().end < workers);
    }

    #[test]
    fn each_epoch_visits_every_full_batch_once(len in 4usize..300, batch in 1usize..8, seed in any::<u64>()) {
        prop_assume!(len >= batch);
        let mut cursor = ShardCursor::new(10..10 + len, batch, seed, "0".into(), true).unwrap();
        let per_epoch = cursor.batches_per_epoch();
        let mut seen = Vec::new();
        for _ in 0..per_epoch {
            seen.extend_from_slice(cursor.next_batch().unwrap());
        }
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), per_epoch * batch);
        prop_assert!(seen.iter().all(|i| (10..10 + len).contains(i)));
        prop_assert_eq!(cursor.epoch(), 0);
        cursor.next_batch().unwrap();
        prop_assert_eq!(cursor.epoch(), 1);
    }

    #[test]
    fn zero_momentum_is_plain_sgd(g in values(7), eta in 0.0..1.0f64) {
        let g = pv(g);
        let mut state = MomentumState::new(&g, eta, 0.0).unwrap();
        for _ in 0..3 {
            prop_assert_eq!(state.update(&g).unwrap(), g.scale(-eta).unwrap());
        }
    }
}
