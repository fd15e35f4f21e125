use commute_reg::graph::{GraphPreset, KernelPreset};
use commute_reg::pipeline::{run_experiment, Arm, ExperimentSpec};
use commute_reg::Exec;

const LAMBDAS: [f64; 4] = [0.0, 0.1, 1.0, 10.0];

/// Mean test v_d should not increase along λ_lvl ∈ {0, 0.1, 1, 10}.
#[test]
fn stronger_lvl_means_smoother_test_predictions() {
    let g0 = KernelPreset::Graph(GraphPreset::G0);
    let mut monotone = 0;
    let mut curves = Vec::new();
    for seed in 0..10u64 {
        let mut spec = ExperimentSpec::benchmark();
        spec.seed = seed;
        spec.runs = 1;
        spec.subjects = 1;
        spec.axes.truncate(1);
        spec.flip_rates = vec![0.2];
        spec.arms = LAMBDAS
            .iter()
            .map(|&l| Arm::new(&format!("lvl{l}"), g0, l, 0.0))
            .collect();
        let res = run_experiment(&spec, Exec::default()).unwrap();
        let vd: Vec<f64> = LAMBDAS
            .iter()
            .map(|l| res.per_run(&format!("lvl{l}"), None).unwrap()[0].v_d)
            .collect();
        if vd.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
        curves.push(vd);
    }
    assert!(monotone >= 8, "monotone in {monotone}/10 seeds: {curves:?}");
}
