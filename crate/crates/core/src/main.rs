use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use commute_reg::checks::{self, CheckOptions};
use commute_reg::graph::{self, EmotionGraph, GraphPreset, KernelPreset, LaplacianKernel, LossKernel};
use commute_reg::io;
use commute_reg::losses;
use commute_reg::metrics;
use commute_reg::pipeline::{self, ExperimentSpec};
use commute_reg::rank::{self, MetricTable};
use commute_reg::synth::{self, LabelSource};
use commute_reg::trainer::{self, TrainConfig};
use commute_reg::{Error, Exec, Result};

#[derive(Parser)]
#[command(name = "commute-reg", version, about = "Commute-distance regularizers and consistency metrics")]
struct Cli {
    /// Run data-parallel stages on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a preset graph and print it, its kernel, or commute distances.
    Graph {
        #[arg(long, default_value = "g0")]
        preset: GraphPreset,
        #[arg(long, default_value_t = 5)]
        levels: usize,
        /// Include Laplacian, pseudoinverse, volume and spectrum.
        #[arg(long)]
        dump_kernel: bool,
        /// Commute distance between two levels.
        #[arg(long, num_args = 2, value_names = ["I", "J"])]
        commute: Option<Vec<usize>>,
        /// Also estimate the commute distance from this many random walks.
        #[arg(long)]
        mc_walks: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the graph JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// LVL / LGCL of a trajectory CSV.
    Loss {
        /// Graph JSON file, or a kernel preset name (g0, g1, g2, ga, identity).
        #[arg(long)]
        kernel: String,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long)]
        check_equivalence: bool,
        #[arg(long)]
        grad_check: bool,
    },
    /// Consistency metrics of a trajectory against true labels.
    Eval {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        delta_max: Option<f64>,
        #[arg(long)]
        emit_curve: bool,
    },
    /// Write synthetic trial bundles.
    Simulate {
        #[arg(long, default_value_t = 5)]
        levels: usize,
        #[arg(long, default_value_t = 60)]
        segments: usize,
        #[arg(long, default_value_t = 18)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        subjects: usize,
        #[arg(long, default_value_t = 0.2)]
        flip: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        feature_dim: usize,
        #[arg(long, default_value_t = 1.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long, default_value_t = 0.8)]
        stay_prob: f64,
        /// global | local
        #[arg(long, default_value = "global")]
        label_source: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a softmax classifier on trial bundles.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Graph JSON file, or a kernel preset name (g0, g1, g2, ga, identity).
        #[arg(long)]
        kernel: String,
        #[arg(long, default_value_t = 1.0)]
        lambda_lvl: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda_lgcl: f64,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 0.5)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Train only on this leading fraction of every trial.
        #[arg(long)]
        train_frac: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a checkpoint to a features CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Borda ranks and radar data from a long-format metric table.
    Bench {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full simulate → train → eval → bench pipeline.
    Run {
        /// YAML or JSON experiment spec.
        #[arg(long, conflicts_with = "preset")]
        spec: Option<PathBuf>,
        /// benchmark | ablation | alpha-beta
        #[arg(long)]
        preset: Option<String>,
        /// Output directory (default: results/<spec name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the resolved spec as YAML and exit.
        #[arg(long)]
        print_spec: bool,
    },
    /// Oracle self-checks; exits 2 if any fails.
    Check {
        #[arg(long, default_value_t = 100_000)]
        walks: usize,
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn matrix_json(m: ndarray::ArrayView2<f64>) -> Value {
    json!(m.outer_iter().map(|r| r.to_vec()).collect::<Vec<_>>())
}

fn load_kernel_for(arg: &str, num_levels: usize) -> Result<LossKernel> {
    let path = Path::new(arg);
    let kernel = if path.is_file() {
        LaplacianKernel::new(&io::read_graph(path)?)?.loss_kernel()
    } else {
        arg.parse::<KernelPreset>()
            .map_err(|_| Error::InvalidConfig(format!("{arg:?} is neither a graph file nor a kernel preset")))?
            .build(num_levels)?
    };
    if kernel.num_levels() != num_levels {
        return Err(Error::InvalidDimension(format!(
            "kernel has {} levels, data has {num_levels}",
            kernel.num_levels()
        )));
    }
    Ok(kernel)
}

fn cmd_graph(
    preset: GraphPreset,
    levels: usize,
    dump_kernel: bool,
    commute: Option<Vec<usize>>,
    mc_walks: Option<usize>,
    seed: u64,
    out: Option<PathBuf>,
    exec: Exec,
) -> Result<()> {
    let g: EmotionGraph = preset.build(levels)?;
    if let Some(out) = &out {
        io::write_atomic(out, format!("{}\n", g.to_json()).as_bytes())?;
    }
    if !dump_kernel && commute.is_none() {
        println!("{}", g.to_json());
        return Ok(());
    }
    let kernel = LaplacianKernel::new(&g)?;
    let mut report = serde_json::to_value(&g).expect("graph serializes");
    if dump_kernel {
        report["laplacian"] = matrix_json(kernel.laplacian());
        report["pinv"] = matrix_json(kernel.pinv());
        report["volume"] = json!(kernel.volume());
        report["eigenvalues"] = json!(kernel.eigenvalues().to_vec());
        report["commute_matrix"] = matrix_json(kernel.commute_matrix().view());
    }
    if let Some(ij) = commute {
        let (i, j) = (ij[0], ij[1]);
        let mut c = json!({"i": i, "j": j, "commute": kernel.commute_distance(i, j)?});
        if let Some(walks) = mc_walks {
            c["monte_carlo"] = json!(graph::monte_carlo_commute_with(&g, i, j, walks, seed, exec)?);
            c["walks"] = json!(walks);
        }
        report["commute"] = c;
    }
    print_json(&report);
    Ok(())
}

fn cmd_loss(kernel: &str, traj: &Path, alpha: f64, beta: f64, check_eq: bool, grad_check: bool) -> Result<()> {
    let traj = io::read_trajectory(traj)?;
    let kernel = load_kernel_for(kernel, traj.num_levels())?;
    let b = losses::combined_loss(&kernel, &traj, alpha, beta)?;
    let mut report = serde_json::to_value(b).expect("serializable");
    let mut violations = Vec::new();
    if check_eq {
        let e = losses::equivalence_check(&kernel, &traj)?;
        if !e.holds(1e-9) {
            violations.push(format!("equivalence bounds violated: {e:?}"));
        }
        report["equivalence"] = serde_json::to_value(e).expect("serializable");
    }
    if grad_check {
        let (g1, g2) = (losses::lvl_gradient(&kernel, &traj)?, losses::lgcl_gradient(&kernel, &traj)?);
        let p = traj.probs().to_owned();
        let fd = |f: &dyn Fn(ndarray::ArrayView2<f64>) -> f64| {
            let h = 1e-6;
            let mut g = ndarray::Array2::zeros(p.raw_dim());
            let mut y = p.clone();
            for r in 0..p.nrows() {
                for c in 0..p.ncols() {
                    let o = y[[r, c]];
                    y[[r, c]] = o + h;
                    let up = f(y.view());
                    y[[r, c]] = o - h;
                    let down = f(y.view());
                    y[[r, c]] = o;
                    g[[r, c]] = (up - down) / (2.0 * h);
                }
            }
            g
        };
        let n1 = fd(&|y| losses::lvl_matrix(&kernel, y).expect("dims"));
        let n2 = fd(&|y| losses::lgcl_matrix(&kernel, y).expect("dims"));
        let (e1, e2) = (checks::relative_error(&g1, &n1), checks::relative_error(&g2, &n2));
        if e1 >= 1e-5 || e2 >= 1e-5 {
            violations.push(format!("gradient check failed: lvl {e1:.2e}, lgcl {e2:.2e}"));
        }
        report["grad_check"] = json!({"lvl_relative_error": e1, "lgcl_relative_error": e2});
    }
    print_json(&report);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::InvariantViolation(violations.join("; ")))
    }
}

fn cmd_eval(traj: &Path, truth: &Path, delta_max: Option<f64>, emit_curve: bool) -> Result<()> {
    let traj = io::read_trajectory(traj)?;
    let truth = io::read_truth(truth, traj.num_levels())?;
    let delta_max = delta_max.unwrap_or_else(|| metrics::default_delta_max(traj.num_levels()));
    let report = metrics::evaluate(&traj, &truth, delta_max)?;
    print_json(&if emit_curve { report } else { report.without_curve() });
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    levels: usize,
    segments: usize,
    trials: usize,
    subjects: usize,
    flip: f64,
    seed: u64,
    feature_dim: usize,
    separation: f64,
    noise: f64,
    stay_prob: f64,
    label_source: &str,
    out: &Path,
) -> Result<()> {
    let mut spec = ExperimentSpec::benchmark();
    spec.num_levels = levels;
    spec.segments = segments;
    spec.trials = trials;
    spec.subjects = subjects;
    spec.seed = seed;
    spec.axes = vec!["valence".into()];
    spec.flip_rates = vec![flip];
    spec.data.feature_dim = feature_dim;
    spec.data.separation = separation;
    spec.data.feature_noise = noise;
    spec.data.stay_prob = stay_prob;
    spec.data.label_source = match label_source {
        "global" => LabelSource::Global,
        "local" => LabelSource::Local,
        other => return Err(Error::InvalidConfig(format!("unknown label source {other:?}"))),
    };
    spec.validate()?;
    let mut written = 0;
    for s in 0..subjects {
        for t in 0..trials {
            let mut cfg = spec.trial_config(0, s, t);
            cfg.flip_rate = flip;
            let trial = synth::generate_trial(&cfg)?;
            let dir = out.join(ExperimentSpec::subject_name(s)).join(format!("trial_{t:02}"));
            io::write_trial_bundle(&dir, &trial, &cfg)?;
            written += 1;
        }
    }
    print_json(&json!({"out": out, "trials": written}));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    data: &Path,
    kernel: &str,
    lambda_lvl: f64,
    lambda_lgcl: f64,
    epochs: usize,
    lr: f64,
    seed: u64,
    train_frac: Option<f64>,
    out: &Path,
) -> Result<()> {
    let bundles = io::find_trial_bundles(data)?;
    if bundles.is_empty() {
        return Err(Error::InvalidConfig(format!("no trial bundles under {}", data.display())));
    }
    let mut trials = Vec::with_capacity(bundles.len());
    for b in &bundles {
        let (trial, _) = io::read_trial_bundle(b)?;
        trials.push(match train_frac {
            Some(f) => synth::split_trial(&trial, f)?.0,
            None => trial,
        });
    }
    let kernel = load_kernel_for(kernel, trials[0].num_levels())?;
    let cfg = TrainConfig {
        learning_rate: lr,
        epochs,
        lambda_lvl,
        lambda_lgcl,
        seed,
        ..TrainConfig::default()
    };
    let (model, history) = trainer::train(&trials, &kernel, &cfg)?;
    io::write_json(out, &model.checkpoint(&cfg))?;
    print_json(&json!({"model": out, "trials": trials.len(), "final_epoch": history.last()}));
    Ok(())
}

fn cmd_predict(model: &Path, features: &Path, out: &Path) -> Result<()> {
    let model = io::read_checkpoint(model)?.to_model()?;
    let x = io::read_features(features)?;
    let traj = model.forward(x.view())?;
    io::write_atomic(out, io::trajectory_csv(&traj).as_bytes())
}

fn cmd_bench(table: &Path, out: &Path) -> Result<()> {
    let file = fs::File::open(table).map_err(|e| Error::io(table, e))?;
    let table = MetricTable::read_csv(file)?;
    let ranks = rank::rank_table(&table)?;
    let mut csv = Vec::new();
    ranks.write_csv(&mut csv)?;
    io::write_atomic(&out.join("ranks.csv"), &csv)?;
    io::write_json(&out.join("radar.json"), &rank::export_radar(&ranks))?;
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(())
}

fn cmd_run(spec: Option<PathBuf>, preset: Option<String>, out: Option<PathBuf>, print_spec: bool, exec: Exec) -> Result<()> {
    let spec = match (spec, preset) {
        (Some(p), _) => ExperimentSpec::load(&p)?,
        (None, Some(name)) => ExperimentSpec::preset(&name)?,
        (None, None) => ExperimentSpec::benchmark(),
    };
    if print_spec {
        print!("{}", serde_yaml::to_string(&spec).expect("spec serializes"));
        return Ok(());
    }
    let out = out.unwrap_or_else(|| PathBuf::from("results").join(&spec.name));
    let result = pipeline::run_pipeline(&spec, &out, exec)?;
    eprintln!("wrote {}", out.display());
    let mut csv = Vec::new();
    result.ranks.write_csv(&mut csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(())
}

fn cmd_check(walks: usize, cases: usize, seed: u64, exec: Exec) -> Result<()> {
    let opts = CheckOptions {
        walks,
        random_cases: cases,
        seed,
        exec,
    };
    let outcomes = checks::run_all(&opts)?;
    let mut failed = Vec::new();
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        if !o.passed {
            failed.push(o.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::InvariantViolation(format!("failed checks: {}", failed.join(", "))))
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Graph {
            preset,
            levels,
            dump_kernel,
            commute,
            mc_walks,
            seed,
            out,
        } => cmd_graph(preset, levels, dump_kernel, commute, mc_walks, seed, out, exec),
        Command::Loss {
            kernel,
            traj,
            alpha,
            beta,
            check_equivalence,
            grad_check,
        } => cmd_loss(&kernel, &traj, alpha, beta, check_equivalence, grad_check),
        Command::Eval {
            traj,
            truth,
            delta_max,
            emit_curve,
        } => cmd_eval(&traj, &truth, delta_max, emit_curve),
        Command::Simulate {
            levels,
            segments,
            trials,
            subjects,
            flip,
            seed,
            feature_dim,
            separation,
            noise,
            stay_prob,
            label_source,
            out,
        } => cmd_simulate(
            levels,
            segments,
            trials,
            subjects,
            flip,
            seed,
            feature_dim,
            separation,
            noise,
            stay_prob,
            &label_source,
            &out,
        ),
        Command::Train {
            data,
            kernel,
            lambda_lvl,
            lambda_lgcl,
            epochs,
            lr,
            seed,
            train_frac,
            out,
        } => cmd_train(&data, &kernel, lambda_lvl, lambda_lgcl, epochs, lr, seed, train_frac, &out),
        Command::Predict { model, features, out } => cmd_predict(&model, &features, &out),
        Command::Bench { table, out } => cmd_bench(&table, &out),
        Command::Run {
            spec,
            preset,
            out,
            print_spec,
        } => cmd_run(spec, preset, out, print_spec, exec),
        Command::Check { walks, cases, seed } => cmd_check(walks, cases, seed, exec),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
