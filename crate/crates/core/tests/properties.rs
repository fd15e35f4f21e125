use ndarray::{Array1, Array2};
use proptest::prelude::*;

use commute_reg::graph::{EmotionGraph, GraphPreset, LaplacianKernel};
use commute_reg::losses::{self, TrajectoryPrediction};
use commute_reg::metrics::{self, LabelSequence, ALL_METRICS};
use commute_reg::rank::{self, MetricTable};
use commute_reg::synth::{self, TrialConfig};

/// Connected weighted graph: spanning path in vertex order plus optional extra edges.
fn connected_graph(max_k: usize) -> impl Strategy<Value = EmotionGraph> {
    (2..=max_k).prop_flat_map(|k| {
        let pairs = k * (k - 1) / 2;
        (
            prop::collection::vec(0.05f64..3.0, k - 1),
            prop::collection::vec(prop::option::weighted(0.3, 0.05f64..3.0), pairs),
        )
            .prop_map(move |(path, extra)| {
                let mut w = Array2::zeros((k, k));
                let mut e = extra.into_iter();
                for i in 0..k {
                    for j in i + 1..k {
                        let extra = e.next().flatten();
                        if let Some(v) = if j == i + 1 { Some(path[i]) } else { extra } {
                            w[[i, j]] = v;
                            w[[j, i]] = v;
                        }
                    }
                }
                EmotionGraph::from_weight_matrix(w).unwrap()
            })
    })
}

fn stochastic_rows(n: usize, k: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(0.0f64..1.0, n * k).prop_map(move |v| {
        let mut p = Array2::from_shape_vec((n, k), v).unwrap();
        for mut row in p.rows_mut() {
            let s = row.sum();
            if s <= 1e-12 {
                row.fill(1.0 / k as f64);
            } else {
                row /= s;
            }
        }
        p
    })
}

fn label_seq(max_k: usize, max_n: usize) -> impl Strategy<Value = (usize, Vec<usize>)> {
    (2..=max_k, 2..=max_n).prop_flat_map(|(k, n)| (Just(k), prop::collection::vec(0..k, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn commute_distance_is_a_metric(g in connected_graph(6)) {
        let kernel = LaplacianKernel::new(&g).unwrap();
        let c = kernel.commute_matrix();
        let k = g.num_levels();
        for i in 0..k {
            prop_assert!(c[[i, i]].abs() <= 1e-9);
            for j in 0..k {
                prop_assert!((c[[i, j]] - c[[j, i]]).abs() <= 1e-9);
                for m in 0..k {
                    prop_assert!(c[[i, m]] <= c[[i, j]] + c[[j, m]] + 1e-9);
                }
            }
        }
    }

    #[test]
    fn kernel_quadratic_form_is_psd_and_shift_invariant(
        g in connected_graph(8),
        seed_vals in prop::collection::vec(-5.0f64..5.0, 8),
        shift in -10.0f64..10.0,
    ) {
        let kernel = LaplacianKernel::new(&g).unwrap();
        let k = g.num_levels();
        let v = Array1::from_vec(seed_vals[..k].to_vec());
        let q = kernel.quadratic_form(v.view()).unwrap();
        prop_assert!(q >= -1e-12);
        let shifted = &v + shift;
        prop_assert!((q - kernel.quadratic_form(shifted.view()).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn regularizers_nonnegative_and_symmetric(
        (p, rot) in (2usize..20, 2usize..7).prop_flat_map(|(n, k)| (stochastic_rows(n, k), 0..n)),
        preset in prop::sample::select(GraphPreset::ALL.to_vec()),
    ) {
        let k = p.ncols();
        let kernel = LaplacianKernel::new(&preset.build(k).unwrap()).unwrap().loss_kernel();
        let l1 = losses::lvl_matrix(&kernel, p.view()).unwrap();
        let l2 = losses::lgcl_matrix(&kernel, p.view()).unwrap();
        prop_assert!(l1 >= -1e-12 && l2 >= -1e-12);

        let n = p.nrows();
        let reversed = Array2::from_shape_fn(p.raw_dim(), |(i, j)| p[[n - 1 - i, j]]);
        prop_assert!((losses::lvl_matrix(&kernel, reversed.view()).unwrap() - l1).abs() <= 1e-12 * (1.0 + l1));
        let rotated = Array2::from_shape_fn(p.raw_dim(), |(i, j)| p[[(i + rot) % n, j]]);
        prop_assert!((losses::lgcl_matrix(&kernel, rotated.view()).unwrap() - l2).abs() <= 1e-12 * (1.0 + l2));

        let traj = TrajectoryPrediction::new(p.clone()).unwrap();
        prop_assert!(losses::equivalence_check(&kernel, &traj).unwrap().holds(1e-9));
    }

    #[test]
    fn nc_curve_is_monotone_and_ends_at_one((k, labels) in label_seq(8, 60)) {
        let seq = LabelSequence::new(labels, k).unwrap();
        let curve = metrics::nc_curve(&seq);
        let dd = metrics::critical_threshold(&seq);
        let mut prev = usize::MAX;
        for s in 1..=(4 * k) {
            let t = s as f64 / 4.0;
            let v = curve.value_at(t);
            prop_assert!(v <= prev);
            if t >= dd {
                prop_assert_eq!(v, 1);
            }
            prev = v;
        }
    }

    #[test]
    fn dropping_a_jump_never_raises_area((k, labels) in label_seq(8, 40), pick in any::<prop::sample::Index>()) {
        let jumps: Vec<f64> = labels.windows(2).map(|w| (w[0] as f64 - w[1] as f64).abs()).collect();
        let nonzero: Vec<usize> = (0..jumps.len()).filter(|&i| jumps[i] > 0.0).collect();
        prop_assume!(!nonzero.is_empty());
        let dm = (k - 1) as f64;
        let full = metrics::area_from_jumps(&jumps, dm).unwrap();
        let mut fewer = jumps.clone();
        fewer.remove(nonzero[pick.index(nonzero.len())]);
        prop_assert!(metrics::area_from_jumps(&fewer, dm).unwrap() <= full);
    }

    #[test]
    fn constant_iff_zero_fluctuation((k, labels) in label_seq(6, 30), force_constant in any::<bool>()) {
        let labels = if force_constant { vec![labels[0]; labels.len()] } else { labels };
        let constant = labels.iter().all(|&l| l == labels[0]);
        let seq = LabelSequence::new(labels, k).unwrap();
        let dm = metrics::default_delta_max(k);
        prop_assert_eq!(metrics::local_fluctuation(&seq).unwrap() == 0.0, constant);
        prop_assert_eq!(metrics::critical_threshold(&seq) == 0.0, constant);
        prop_assert_eq!(metrics::area_under_nc(&seq, dm).unwrap() == dm, constant);
    }

    #[test]
    fn metrics_invariant_under_reflection((k, pred) in label_seq(7, 40), truth_seed in any::<u64>()) {
        let n = pred.len();
        let truth: Vec<usize> = (0..n).map(|i| ((truth_seed >> (i % 60)) as usize + i) % k).collect();
        let reflect = |v: &[usize]| v.iter().map(|&y| k - 1 - y).collect::<Vec<_>>();
        let (p, t) = (LabelSequence::new(pred.clone(), k).unwrap(), LabelSequence::new(truth.clone(), k).unwrap());
        let (pr, tr) = (LabelSequence::new(reflect(&pred), k).unwrap(), LabelSequence::new(reflect(&truth), k).unwrap());
        let dm = metrics::default_delta_max(k);
        prop_assert_eq!(metrics::local_fluctuation(&p).unwrap(), metrics::local_fluctuation(&pr).unwrap());
        prop_assert_eq!(metrics::critical_threshold(&p), metrics::critical_threshold(&pr));
        prop_assert_eq!(metrics::area_under_nc(&p, dm).unwrap(), metrics::area_under_nc(&pr, dm).unwrap());
        prop_assert_eq!(metrics::nc_curve(&p), metrics::nc_curve(&pr));
        prop_assert!((metrics::macro_f1(&p, &t).unwrap() - metrics::macro_f1(&pr, &tr).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn label_noise_stays_in_range((k, labels) in label_seq(9, 80), rate in 0.0f64..0.99, seed in any::<u64>()) {
        let seq = LabelSequence::new(labels.clone(), k).unwrap();
        let noisy = synth::inject_label_noise(&seq, rate, seed).unwrap();
        prop_assert_eq!(noisy.len(), labels.len());
        prop_assert!(noisy.labels().iter().all(|&l| l < k));
    }

    #[test]
    fn generated_tracks_move_at_most_one_level(k in 2usize..9, n in 1usize..200, stay in 0.0f64..1.0, seed in any::<u64>()) {
        let mut c = TrialConfig::with_random_means(k, n, 2, 1.0, 1);
        c.stay_prob = stay;
        c.seed = seed;
        let track = synth::generate_track(&c).unwrap();
        prop_assert_eq!(track.len(), n);
        prop_assert!(track.jumps().iter().all(|&j| j <= 1.0));
    }

    #[test]
    fn monotone_transform_keeps_ranks(
        values in prop::collection::vec(0.0f64..1.0, 3 * 2 * 5),
        metric_idx in 0usize..5,
    ) {
        let methods = ["a", "b", "c"];
        let conditions = ["c1", "c2"];
        let build = |f: &dyn Fn(f64) -> f64| {
            let mut t = MetricTable::new();
            let mut it = values.iter();
            for m in methods {
                for c in conditions {
                    for (mi, metric) in ALL_METRICS.iter().enumerate() {
                        let v = *it.next().unwrap();
                        t.insert(m, "s", c, metric, if mi == metric_idx { f(v) } else { v }).unwrap();
                    }
                }
            }
            rank::rank_table(&t).unwrap()
        };
        let plain = build(&|v| v);
        let warped = build(&|v| (3.0 * v).exp() - 7.0);
        prop_assert_eq!(&plain.metric_ranks, &warped.metric_ranks);
        prop_assert_eq!(&plain.aggregate, &warped.aggregate);

        let reduced = rank::mean_over_subjects(&{
            let mut t = MetricTable::new();
            for (i, m) in methods.iter().enumerate() {
                for c in conditions {
                    for metric in ALL_METRICS {
                        t.insert(m, "s", c, metric, values[i].round()).unwrap();
                    }
                }
            }
            t
        }).unwrap();
        for per_method in rank::condition_ranks(&reduced, ALL_METRICS[metric_idx]).unwrap().values() {
            prop_assert_eq!(per_method.values().sum::<f64>(), 6.0);
        }
    }

    #[test]
    fn uniform_rank_vector_aggregates_to_itself(r in 1u32..50) {
        let ranks = ALL_METRICS.iter().map(|m| (m.to_string(), r as f64)).collect();
        prop_assert!((rank::weighted_aggregate(&ranks).unwrap() - r as f64).abs() < 1e-12);
    }
}

#[test]
fn unbiased_walk_visits_levels_by_degree() {
    let mut c = TrialConfig::with_random_means(5, 1_000_000, 1, 1.0, 1);
    c.stay_prob = 0.0;
    c.seed = 42;
    let track = synth::generate_track(&c).unwrap();
    let mut counts = [0usize; 5];
    for &l in track.labels() {
        counts[l] += 1;
    }
    let expected = [1.0, 2.0, 2.0, 2.0, 1.0].map(|w| w / 8.0);
    for (c, e) in counts.iter().zip(expected) {
        let observed = *c as f64 / 1e6;
        assert!((observed - e).abs() < 0.01, "{counts:?}");
    }
}

#[test]
fn trial_generation_is_bit_identical() {
    let mut c = TrialConfig::with_random_means(5, 60, 8, 1.0, 3);
    c.seed = 77;
    assert_eq!(synth::generate_trial(&c).unwrap(), synth::generate_trial(&c).unwrap());
}
