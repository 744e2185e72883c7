use ndarray::Array2;
use proptest::prelude::*;

use cellfree_ba::channel::{dft_matrix, from_beamspace, to_beamspace, BeamspaceDict, C64};
use cellfree_ba::config::SubcarrierLayout;
use cellfree_ba::estimators::{mco_estimate, mco_slot_matrices, mco_track, nnls_dense, top_paths, NNLS_MAX_ITER, NNLS_TOL};
use cellfree_ba::harness::metrics::wilson;
use cellfree_ba::harness::mobility::reflect;
use cellfree_ba::resources::{assign_lb, enumerate_patterns, pilot_matrix, ue_codebook};
use cellfree_ba::rng::substream;
use cellfree_ba::scenario::Point;

fn complex_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v.into_iter().map(|(re, im)| C64::new(re, im)).collect()).unwrap())
}

fn inner(a: &Array2<C64>, b: &Array2<C64>) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dft_is_unitary(n in 1usize..80) {
        let w = dft_matrix(n);
        let g = w.t().mapv(|z| z.conj()).dot(&w);
        for ((i, j), z) in g.indexed_iter() {
            let target = if i == j { 1.0 } else { 0.0 };
            prop_assert!((z - C64::new(target, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn beamspace_preserves_inner_products(a in complex_matrix(8, 16), b in complex_matrix(8, 16)) {
        let dict = BeamspaceDict::new(16, 8);
        let ba = to_beamspace(&a, &dict.w_ue, &dict.w_ap).unwrap();
        let bb = to_beamspace(&b, &dict.w_ue, &dict.w_ap).unwrap();
        prop_assert!((inner(&a, &b) - inner(&ba, &bb)).norm() < 1e-9);
        let back = from_beamspace(&ba, &dict.w_ue, &dict.w_ap).unwrap();
        prop_assert!(a.iter().zip(&back).all(|(x, y)| (x - y).norm() < 1e-10));
    }

    #[test]
    fn pilots_are_orthogonal(log_len in 0u32..7, beta in 0.1f64..10.0) {
        let s = 1usize << log_len;
        let p = pilot_matrix(s, beta).unwrap();
        let gram = p.integer_gram();
        for (a, row) in gram.iter().enumerate() {
            for (b, &v) in row.iter().enumerate() {
                prop_assert_eq!(v, if a == b { s as i64 } else { 0 });
            }
        }
    }

    #[test]
    fn patterns_never_share_a_subcarrier(n_c in 8usize..96, q in 1usize..4, chains in 1usize..5, slots in 1usize..6, seed in any::<u64>(), contiguous in any::<bool>()) {
        let layout = if contiguous { SubcarrierLayout::Contiguous } else { SubcarrierLayout::Random };
        let Ok(plan) = enumerate_patterns(n_c, q, chains, slots, 16, 4, layout, &mut substream(seed, &[])) else {
            prop_assume!(false);
            unreachable!()
        };
        for s in 0..slots {
            let mut seen = vec![false; n_c];
            for p in &plan.patterns {
                for &sc in p.subcarriers[s].iter().flatten() {
                    prop_assert!(!seen[sc], "subcarrier {} reused in slot {}", sc, s);
                    seen[sc] = true;
                }
            }
        }
    }

    #[test]
    fn location_assignment_respects_capacity(
        pts in prop::collection::vec((0.0f64..300.0, 0.0f64..300.0), 1..60),
        d in 1usize..9,
        pilots in prop::sample::select(vec![1usize, 2, 4]),
    ) {
        let aps: Vec<Point> = pts.iter().map(|&(x, y)| Point::new(x, y)).collect();
        let a = assign_lb(&aps, 300.0, d, pilots, 50).unwrap();
        let cap = d * pilots;
        let clusters = aps.len().div_ceil(cap);
        for c in 0..clusters {
            let members: Vec<usize> = (0..aps.len()).filter(|&m| a.cluster[m] == c).collect();
            prop_assert!(members.len() <= cap);
            let mut tuples: Vec<_> = members.iter().map(|&m| a.tuple(m)).collect();
            tuples.sort_unstable();
            tuples.dedup();
            prop_assert_eq!(tuples.len(), members.len());
        }
        prop_assert!(a.cluster.iter().all(|&c| c < clusters));
    }

    #[test]
    fn nnls_iterates_stay_feasible_and_descend(
        data in prop::collection::vec(0.0f64..1.0, 60),
        y in prop::collection::vec(-1.0f64..2.0, 10),
        offset in -0.5f64..0.5,
    ) {
        let b = Array2::from_shape_vec((10, 6), data).unwrap();
        let sol = nnls_dense(&b, &y, offset, NNLS_TOL, NNLS_MAX_ITER).unwrap();
        prop_assert!(sol.x.iter().all(|&v| v >= 0.0));
        prop_assert!(sol.objective_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15));
    }

    #[test]
    fn mco_is_scale_equivariant(seed in any::<u64>(), exp in -20i32..20) {
        // powers of two scale exactly, so ties survive and the ranking must match
        let scale = 2f64.powi(exp);
        let mut rng = substream(seed, &[]);
        let plan = enumerate_patterns(32, 2, 4, 5, 16, 4, SubcarrierLayout::Random, &mut rng).unwrap();
        let cb = ue_codebook(8, 2, 5, 2, &mut rng).unwrap();
        let c: Vec<f64> = (0..40).map(|i| ((i * 7919 + seed as usize % 97) % 13) as f64).collect();
        let scaled: Vec<f64> = c.iter().map(|v| v * scale).collect();
        let a = mco_estimate(&c, &plan.patterns[0], &cb, 16).unwrap();
        let b = mco_estimate(&scaled, &plan.patterns[0], &cb, 16).unwrap();
        for (x, y) in a.scores.iter().zip(&b.scores) {
            prop_assert_eq!(x * scale, *y);
        }
        let ta: Vec<_> = top_paths(&a, 5).unwrap().iter().map(|t| (t.0, t.1)).collect();
        let tb: Vec<_> = top_paths(&b, 5).unwrap().iter().map(|t| (t.0, t.1)).collect();
        prop_assert_eq!(ta, tb);
    }

    #[test]
    fn unit_forgetting_tracks_the_plain_sum(seed in any::<u64>(), frames in 1usize..4) {
        let mut rng = substream(seed, &[]);
        let plan = enumerate_patterns(32, 2, 4, 5, 16, 4, SubcarrierLayout::Random, &mut rng).unwrap();
        let cb = ue_codebook(8, 2, 5, 2, &mut rng).unwrap();
        let c: Vec<f64> = (0..40).map(|i| ((i as u64 * 31 + seed) % 11) as f64).collect();
        let slots = mco_slot_matrices(&c, &plan.patterns[0], &cb, 16).unwrap();
        let tracked = mco_track(&vec![slots; frames], 1.0).unwrap();
        let batch = mco_estimate(&c, &plan.patterns[0], &cb, 16).unwrap();
        for (x, y) in tracked.scores.iter().zip(&batch.scores) {
            prop_assert!((x - frames as f64 * y).abs() < 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn wilson_interval_brackets_and_shrinks(n in 1u64..5000, frac in 0.0f64..=1.0) {
        let s = (frac * n as f64).round() as u64;
        let (lo, hi) = wilson(s, n, 1.96);
        let p = s as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
        let (lo4, hi4) = wilson(4 * s, 4 * n, 1.96);
        prop_assert!(hi4 - lo4 <= hi - lo + 1e-12);
    }

    #[test]
    fn reflection_lands_inside(x in -1e4f64..1e4, side in 1.0f64..500.0) {
        let r = reflect(x, side);
        prop_assert!((0.0..=side).contains(&r));
    }
}
