//! Self-checks behind the `check` subcommand: each compares a library routine
//! against an independent route (random walks, closed forms, finite
//! differences, brute-force merging).

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::Result;
use crate::exec::Exec;
use crate::graph::{self, EmotionGraph, GraphPreset, LaplacianKernel, LossKernel};
use crate::linalg;
use crate::losses;
use crate::metrics::{self, LabelSequence};
use crate::rank;
use crate::seed;
use crate::synth::Trial;
use crate::trainer::{self, SoftmaxClassifier, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    pub walks: usize,
    pub random_cases: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            walks: 100_000,
            random_cases: 100,
            seed: 7,
            exec: Exec::default(),
        }
    }
}

pub fn run_all(opts: &CheckOptions) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        commute_walks(opts)?,
        pinv_contract(opts)?,
        equivalence_bounds(opts)?,
        loss_gradients(opts)?,
        training_gradient(opts)?,
        metric_brute_force(opts)?,
        borda_example()?,
    ])
}

/// Random connected graph: a shuffled spanning path plus random extra edges.
pub fn random_connected_graph(k: usize, rng: &mut ChaCha8Rng) -> Result<EmotionGraph> {
    let mut w = Array2::zeros((k, k));
    let mut order: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    for p in order.windows(2) {
        let v = rng.random_range(0.1..2.0);
        w[[p[0], p[1]]] = v;
        w[[p[1], p[0]]] = v;
    }
    for i in 0..k {
        for j in i + 1..k {
            if w[[i, j]] == 0.0 && rng.random_bool(0.3) {
                let v = rng.random_range(0.1..2.0);
                w[[i, j]] = v;
                w[[j, i]] = v;
            }
        }
    }
    EmotionGraph::from_weight_matrix(w)
}

/// Row-stochastic `n × k` matrix from softmaxed Gaussian logits.
pub fn random_trajectory(n: usize, k: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut p = Array2::from_shape_fn((n, k), |_| (scale * rng.sample::<f64, _>(StandardNormal)).exp());
    for mut row in p.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    p
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

fn commute_walks(opts: &CheckOptions) -> Result<CheckOutcome> {
    let mut worst_mc: f64 = 0.0;
    let mut worst_closed: f64 = 0.0;
    for k in 3..=6 {
        let g = GraphPreset::G0.build(k)?;
        let kernel = LaplacianKernel::new(&g)?;
        for i in 0..k {
            for j in i + 1..k {
                let exact = kernel.commute_distance(i, j)?;
                let series = 2.0 * (k - 1) as f64 * (j - i) as f64;
                worst_closed = worst_closed.max((exact - series).abs());
                let mc = graph::monte_carlo_commute_with(
                    &g,
                    i,
                    j,
                    opts.walks,
                    seed::derive(opts.seed, &[k as u64, i as u64, j as u64]),
                    opts.exec,
                )?;
                worst_mc = worst_mc.max((mc - exact).abs() / exact);
            }
        }
    }
    Ok(outcome(
        "commute distance vs random walks",
        worst_mc < 0.05 && worst_closed < 1e-9,
        format!("max MC relative error {worst_mc:.4}, max series-resistance error {worst_closed:.2e}"),
    ))
}

fn pinv_contract(opts: &CheckOptions) -> Result<CheckOutcome> {
    let mut rng = seed::rng(opts.seed, &[2]);
    let mut graphs = Vec::new();
    for p in GraphPreset::ALL {
        graphs.push(p.build(5)?);
    }
    for _ in 0..opts.random_cases {
        let k = rng.random_range(2..=8);
        graphs.push(random_connected_graph(k, &mut rng)?);
    }
    let (mut mp, mut closed, mut min_eig, mut asym): (f64, f64, f64, f64) = (0.0, 0.0, f64::INFINITY, 0.0);
    for g in &graphs {
        let kernel = LaplacianKernel::new(g)?;
        mp = mp.max(kernel.moore_penrose_residual());
        let cf = graph::pinv_closed_form(kernel.laplacian())?;
        closed = closed.max(linalg::max_abs_diff(kernel.pinv(), cf.view()));
        asym = asym.max(linalg::max_abs_diff(kernel.pinv(), kernel.pinv().t()));
        let eig = linalg::symmetric_eigen(kernel.pinv())?;
        min_eig = min_eig.min(eig.values[0]);
    }
    Ok(outcome(
        "pseudoinverse contract",
        mp <= 1e-9 && closed <= 1e-9 && asym <= 1e-9 && min_eig >= -1e-9,
        format!(
            "{} graphs: Moore-Penrose {mp:.2e}, closed form {closed:.2e}, asymmetry {asym:.2e}, min eigenvalue {min_eig:.2e}",
            graphs.len()
        ),
    ))
}

fn equivalence_bounds(opts: &CheckOptions) -> Result<CheckOutcome> {
    let mut rng = seed::rng(opts.seed, &[3]);
    let kernels: Vec<LossKernel> = GraphPreset::ALL
        .iter()
        .map(|p| Ok(LaplacianKernel::new(&p.build(5)?)?.loss_kernel()))
        .collect::<Result<_>>()?;
    let mut worst: f64 = f64::INFINITY;
    let cases = opts.random_cases * 10;
    for c in 0..cases {
        let n = rng.random_range(2..=64);
        let (k, kernel) = if c % 2 == 0 {
            (5, kernels[c / 2 % kernels.len()].clone())
        } else {
            let k = rng.random_range(2..=8);
            (k, LaplacianKernel::new(&random_connected_graph(k, &mut rng)?)?.loss_kernel())
        };
        let p = random_trajectory(n, k, 2.0, &mut rng);
        let e = losses::equivalence_check_matrix(&kernel, p.view())?;
        worst = worst.min(e.bound1_slack.min(e.bound2_slack));
    }
    let k2 = LaplacianKernel::new(&GraphPreset::G0.build(2)?)?.loss_kernel();
    let tight = losses::equivalence_check_matrix(&k2, ndarray::array![[1.0, 0.0], [0.0, 1.0]].view())?;
    let tight_ok = tight.l1 == 0.5 && tight.l2 == 0.25;
    Ok(outcome(
        "LVL/LGCL equivalence bounds",
        worst >= -1e-9 && tight_ok,
        format!("{cases} trajectories, min slack {worst:.3e}; two-step example l1={} l2={}", tight.l1, tight.l2),
    ))
}

/// `max |a − b| / max(max |b|, 1e-12)`.
pub fn relative_error(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    linalg::max_abs_diff(analytic.view(), numeric.view()) / scale
}

fn finite_difference(x: &Array2<f64>, h: f64, f: impl Fn(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut g = Array2::zeros(x.raw_dim());
    let mut y = x.clone();
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let orig = y[[r, c]];
        y[[r, c]] = orig + h;
        let up = f(&y);
        y[[r, c]] = orig - h;
        let down = f(&y);
        y[[r, c]] = orig;
        g[[r, c]] = (up - down) / (2.0 * h);
    }
    g
}

fn loss_gradients(opts: &CheckOptions) -> Result<CheckOutcome> {
    let mut rng = seed::rng(opts.seed, &[4]);
    let mut worst: f64 = 0.0;
    for _ in 0..opts.random_cases {
        let k = rng.random_range(2..=6);
        let n = rng.random_range(2..=12);
        let kernel = LaplacianKernel::new(&random_connected_graph(k, &mut rng)?)?.loss_kernel();
        let p = random_trajectory(n, k, 1.5, &mut rng);
        let g1 = losses::lvl_gradient_matrix(&kernel, p.view())?;
        let n1 = finite_difference(&p, 1e-6, |y| losses::lvl_matrix(&kernel, y.view()).expect("dims"));
        let g2 = losses::lgcl_gradient_matrix(&kernel, p.view())?;
        let n2 = finite_difference(&p, 1e-6, |y| losses::lgcl_matrix(&kernel, y.view()).expect("dims"));
        worst = worst.max(relative_error(&g1, &n1)).max(relative_error(&g2, &n2));
    }
    Ok(outcome(
        "LVL/LGCL gradients vs finite differences",
        worst < 1e-5,
        format!("{} instances, max relative error {worst:.2e}", opts.random_cases),
    ))
}

fn random_trial(n: usize, k: usize, d: usize, rng: &mut ChaCha8Rng) -> Result<Trial> {
    let features = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    let track = LabelSequence::new((0..n).map(|_| rng.random_range(0..k)).collect(), k)?;
    Ok(Trial {
        features,
        global_label: track.labels()[0],
        noisy_labels: track.clone(),
        true_track: track,
    })
}

fn training_gradient(opts: &CheckOptions) -> Result<CheckOutcome> {
    let mut rng = seed::rng(opts.seed, &[5]);
    let mut worst: f64 = 0.0;
    for _ in 0..opts.random_cases {
        let k = rng.random_range(2..=6);
        let d = rng.random_range(1..=5);
        let n = rng.random_range(2..=15);
        let kernel = LaplacianKernel::new(&random_connected_graph(k, &mut rng)?)?.loss_kernel();
        let trial = random_trial(n, k, d, &mut rng)?;
        let cfg = TrainConfig {
            lambda_lvl: rng.random_range(0.0..3.0),
            lambda_lgcl: rng.random_range(0.0..3.0),
            ..TrainConfig::default()
        };
        let model = SoftmaxClassifier {
            weights: Array2::from_shape_fn((k, d), |_| rng.random_range(-1.0..1.0)),
            bias: Array1::from_shape_fn(k, |_| rng.random_range(-1.0..1.0)),
        };
        let g = trainer::total_gradient(&model, &trial, &kernel, &cfg)?;
        // weights and bias stacked as one K × (d + 1) block
        let mut theta = Array2::zeros((k, d + 1));
        theta.slice_mut(ndarray::s![.., ..d]).assign(&model.weights);
        theta.column_mut(d).assign(&model.bias);
        let mut analytic = theta.clone();
        analytic.slice_mut(ndarray::s![.., ..d]).assign(&g.weights);
        analytic.column_mut(d).assign(&g.bias);
        let numeric = finite_difference(&theta, 1e-5, |t| {
            let m = SoftmaxClassifier {
                weights: t.slice(ndarray::s![.., ..d]).to_owned(),
                bias: t.column(d).to_owned(),
            };
            trainer::total_loss(&m, &trial, &kernel, &cfg).expect("dims")
        });
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok(outcome(
        "training loss gradient vs finite differences",
        worst < 1e-4,
        format!("{} instances, max relative error {worst:.2e}", opts.random_cases),
    ))
}

/// Components left after merging neighbours whose jump is at most `delta`.
pub fn naive_components(labels: &[usize], delta: f64) -> usize {
    let mut count = usize::from(!labels.is_empty());
    for w in labels.windows(2) {
        if (w[1] as f64 - w[0] as f64).abs() > delta {
            count += 1;
        }
    }
    count
}

fn metric_brute_force(opts: &CheckOptions) -> Result<CheckOutcome> {
    let mut rng = seed::rng(opts.seed, &[6]);
    let mut mismatches = 0usize;
    let mut worst_area: f64 = 0.0;
    let cases = opts.random_cases * 10;
    for _ in 0..cases {
        let k = rng.random_range(2..=7);
        let n = rng.random_range(2..=40);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let seq = LabelSequence::new(labels.clone(), k)?;
        let curve = metrics::nc_curve(&seq);
        let delta_max = metrics::default_delta_max(k);
        // every integer and half-integer threshold in (0, delta_max]
        let mut area = 0.0;
        for step in 1..=(2 * (k - 1)) {
            let t = step as f64 / 2.0;
            if curve.value_at(t) != naive_components(&labels, t) {
                mismatches += 1;
            }
            // n_c is constant on (t − 1, t) for integer t; sample the midpoint
            if step % 2 == 1 {
                area += naive_components(&labels, t) as f64;
            }
        }
        let closed = metrics::area_under_nc(&seq, delta_max)?;
        worst_area = worst_area.max((closed - area).abs());
        let jumps: Vec<f64> = labels.windows(2).map(|w| (w[1] as f64 - w[0] as f64).abs()).collect();
        let v_d = jumps.iter().sum::<f64>() / jumps.len() as f64;
        let delta_d = jumps.iter().copied().fold(0.0, f64::max);
        if metrics::local_fluctuation(&seq)? != v_d || metrics::critical_threshold(&seq) != delta_d {
            mismatches += 1;
        }
    }
    Ok(outcome(
        "consistency metrics vs brute force",
        mismatches == 0 && worst_area <= 1e-12,
        format!("{cases} sequences, {mismatches} mismatches, max area error {worst_area:.2e}"),
    ))
}

fn borda_example() -> Result<CheckOutcome> {
    use crate::metrics::{A_C, DELTA_D, F1, TOP2, V_D};
    let ranks = [(F1, 2.0), (TOP2, 1.0), (A_C, 5.0), (V_D, 3.0), (DELTA_D, 6.0)]
        .iter()
        .map(|(m, r)| (m.to_string(), *r))
        .collect();
    let agg = rank::weighted_aggregate(&ranks)?;
    Ok(outcome(
        "weighted Borda aggregate",
        (agg - 37.0 / 12.0).abs() <= 1e-12,
        format!("aggregate {agg} (expected 37/12)"),
    ))
}
