//! End-to-end synthetic experiment: simulate subjects, train one model per
//! (axis, subject, flip rate, run, arm) cell, evaluate on the held-out suffix
//! of every trial, and rank the arms.
//!
//! Data (class means, tracks, features) depends only on (axis, subject,
//! trial). Label noise and model initialization depend on the run as well, and
//! are shared by every arm of a cell so arms are compared on identical inputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graph::{GraphPreset, KernelPreset, LossKernel};
use crate::io;
use crate::metrics::{self, ConsistencyReport, ALL_METRICS};
use crate::rank::{self, MetricTable, RankTable};
use crate::seed;
use crate::synth::{self, LabelSource, Trial, TrialConfig};
use crate::trainer::{self, EpochRecord, ModelCheckpoint, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSettings {
    pub feature_dim: usize,
    /// Standard deviation of the random class-mean coordinates.
    pub separation: f64,
    pub stay_prob: f64,
    pub feature_noise: f64,
    #[serde(default)]
    pub label_source: LabelSource,
    #[serde(default = "default_baseline")]
    pub baseline_segments: usize,
}

fn default_baseline() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub epochs: usize,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

fn default_init_scale() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arm {
    pub name: String,
    pub kernel: KernelPreset,
    pub lambda_lvl: f64,
    pub lambda_lgcl: f64,
}

impl Arm {
    pub fn new(name: &str, kernel: KernelPreset, lambda_lvl: f64, lambda_lgcl: f64) -> Self {
        Arm {
            name: name.into(),
            kernel,
            lambda_lvl,
            lambda_lgcl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub num_levels: usize,
    pub seed: u64,
    pub runs: usize,
    pub subjects: usize,
    pub trials: usize,
    pub segments: usize,
    pub train_frac: f64,
    /// Independent synthetic "emotion axes"; each gets its own class means.
    pub axes: Vec<String>,
    pub flip_rates: Vec<f64>,
    /// Upper threshold for the n_c area; `num_levels − 1` when absent.
    #[serde(default)]
    pub delta_max: Option<f64>,
    pub data: DataSettings,
    pub train: TrainSettings,
    pub arms: Vec<Arm>,
}

pub const PRESETS: [&str; 3] = ["benchmark", "ablation", "alpha-beta"];

impl ExperimentSpec {
    /// Baseline vs LVL vs LGCL vs both vs both without the graph prior.
    pub fn benchmark() -> Self {
        let g0 = KernelPreset::Graph(GraphPreset::G0);
        ExperimentSpec {
            name: "benchmark".into(),
            num_levels: 5,
            seed: 2024,
            runs: 10,
            subjects: 4,
            trials: 18,
            segments: 60,
            train_frac: 2.0 / 3.0,
            axes: vec!["valence".into(), "arousal".into()],
            flip_rates: vec![0.2, 0.4],
            delta_max: None,
            data: DataSettings {
                feature_dim: 8,
                separation: 1.0,
                stay_prob: 0.8,
                feature_noise: 1.0,
                label_source: LabelSource::Global,
                baseline_segments: default_baseline(),
            },
            train: TrainSettings {
                learning_rate: 0.5,
                epochs: 60,
                init_scale: default_init_scale(),
            },
            arms: vec![
                Arm::new("ce", g0, 0.0, 0.0),
                Arm::new("lvl", g0, 1.0, 0.0),
                Arm::new("lgcl", g0, 0.0, 1.0),
                Arm::new("lvl_lgcl", g0, 1.0, 1.0),
                Arm::new("wo_g", KernelPreset::Identity, 1.0, 1.0),
            ],
        }
    }

    /// Prior-graph ablation at fixed weights: G0, G1, G2, G_A and no graph.
    pub fn ablation() -> Self {
        let mut spec = Self::benchmark();
        spec.name = "ablation".into();
        spec.arms = GraphPreset::ALL
            .iter()
            .map(|&g| Arm::new(g.name(), KernelPreset::Graph(g), 1.0, 1.0))
            .chain(std::iter::once(Arm::new("wo_g", KernelPreset::Identity, 1.0, 1.0)))
            .collect();
        spec
    }

    /// LVL/LGCL weight split (α, β) ∈ {(0, 1), (0.5, 0.5), (1, 0)} on G0.
    pub fn alpha_beta() -> Self {
        let mut spec = Self::benchmark();
        spec.name = "alpha-beta".into();
        let g0 = KernelPreset::Graph(GraphPreset::G0);
        spec.arms = [(0.0, 1.0), (0.5, 0.5), (1.0, 0.0)]
            .iter()
            .map(|&(a, b)| Arm::new(&format!("a{a}_b{b}"), g0, a, b))
            .collect();
        spec
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "benchmark" | "default" => Ok(Self::benchmark()),
            "ablation" => Ok(Self::ablation()),
            "alpha-beta" | "alpha_beta" => Ok(Self::alpha_beta()),
            other => Err(Error::InvalidConfig(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESETS.join(", ")
            ))),
        }
    }

    /// Parses YAML (which also accepts JSON).
    pub fn from_yaml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec =
            serde_yaml::from_str(text).map_err(|e| Error::InvalidConfig(format!("experiment spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_yaml(&text)
    }

    /// Canonical JSON used for hashing and the manifest.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_levels < 2 {
            return bad(format!("num_levels must be ≥ 2, got {}", self.num_levels));
        }
        if self.runs == 0 || self.subjects == 0 || self.trials == 0 {
            return bad("runs, subjects and trials must be ≥ 1".into());
        }
        if self.segments < 2 {
            return bad("segments must be ≥ 2 to split a trial".into());
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return bad(format!("train_frac {} outside (0, 1)", self.train_frac));
        }
        if self.axes.is_empty() || self.flip_rates.is_empty() || self.arms.is_empty() {
            return bad("axes, flip_rates and arms must be nonempty".into());
        }
        for f in &self.flip_rates {
            if !(0.0..1.0).contains(f) {
                return bad(format!("flip rate {f} outside [0, 1)"));
            }
        }
        let mut names = std::collections::BTreeSet::new();
        for arm in &self.arms {
            if !names.insert(arm.name.as_str()) {
                return bad(format!("duplicate arm name {:?}", arm.name));
            }
            if !(arm.lambda_lvl >= 0.0 && arm.lambda_lgcl >= 0.0) {
                return bad(format!("arm {:?}: lambdas must be ≥ 0", arm.name));
            }
        }
        let axes: std::collections::BTreeSet<_> = self.axes.iter().collect();
        if axes.len() != self.axes.len() {
            return bad("duplicate axis name".into());
        }
        if let Some(d) = self.delta_max {
            if !(d > 0.0) {
                return bad(format!("delta_max {d} must be > 0"));
            }
        }
        self.train_config(0, &self.arms[0]).validate()?;
        self.trial_config(0, 0, 0).validate()
    }

    fn delta_max(&self) -> f64 {
        self.delta_max
            .unwrap_or_else(|| metrics::default_delta_max(self.num_levels))
    }

    pub fn means_seed(&self, axis: usize, subject: usize) -> u64 {
        seed::derive(self.seed, &[seed::TAG_MEANS, axis as u64, subject as u64])
    }

    pub fn trial_seed(&self, axis: usize, subject: usize, trial: usize) -> u64 {
        seed::derive(self.seed, &[seed::TAG_TRACK, axis as u64, subject as u64, trial as u64])
    }

    pub fn noise_seed(&self, axis: usize, subject: usize, flip: usize, run: usize, trial: usize) -> u64 {
        seed::derive(
            self.seed,
            &[seed::TAG_NOISE, axis as u64, subject as u64, flip as u64, run as u64, trial as u64],
        )
    }

    pub fn init_seed(&self, axis: usize, subject: usize, flip: usize, run: usize) -> u64 {
        seed::derive(
            self.seed,
            &[seed::TAG_INIT, axis as u64, subject as u64, flip as u64, run as u64],
        )
    }

    /// Noise-free trial config for one trial of one subject.
    pub fn trial_config(&self, axis: usize, subject: usize, trial: usize) -> TrialConfig {
        let d = &self.data;
        let mut c = TrialConfig::with_random_means(
            self.num_levels,
            self.segments,
            d.feature_dim,
            d.separation,
            self.means_seed(axis, subject),
        );
        c.stay_prob = d.stay_prob;
        c.feature_noise = d.feature_noise;
        c.flip_rate = 0.0;
        c.label_source = d.label_source;
        c.baseline_segments = d.baseline_segments;
        c.seed = self.trial_seed(axis, subject, trial);
        c
    }

    pub fn train_config(&self, init_seed: u64, arm: &Arm) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            epochs: self.train.epochs,
            lambda_lvl: arm.lambda_lvl,
            lambda_lgcl: arm.lambda_lgcl,
            seed: init_seed,
            init_scale: self.train.init_scale,
        }
    }

    pub fn condition_name(&self, axis: usize, flip: usize) -> String {
        format!("{}_flip{}", self.axes[axis], self.flip_rates[flip])
    }

    pub fn subject_name(subject: usize) -> String {
        format!("s{subject:02}")
    }
}

/// One trained arm within a cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmOutcome {
    pub arm: String,
    pub checkpoint: ModelCheckpoint,
    pub final_epoch: Option<EpochRecord>,
    /// Metrics averaged over the test segments of every trial.
    pub mean: ConsistencyReport,
    pub per_trial: Vec<ConsistencyReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellOutcome {
    pub axis: usize,
    pub subject: usize,
    pub flip: usize,
    pub run: usize,
    pub init_seed: u64,
    pub arms: Vec<ArmOutcome>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub cells: Vec<CellOutcome>,
    /// Run-averaged long table used for ranking.
    pub table: MetricTable,
    pub ranks: RankTable,
}

impl ExperimentResult {
    /// Per run, the mean report of `arm` over all axes and subjects at the
    /// given flip-rate index (or all flip rates when `None`).
    pub fn per_run(&self, arm: &str, flip: Option<usize>) -> Result<Vec<ConsistencyReport>> {
        let idx = self
            .spec
            .arms
            .iter()
            .position(|a| a.name == arm)
            .ok_or_else(|| Error::InvalidConfig(format!("no arm named {arm:?}")))?;
        (0..self.spec.runs)
            .map(|r| {
                let reports: Vec<ConsistencyReport> = self
                    .cells
                    .iter()
                    .filter(|c| c.run == r && flip.is_none_or(|f| c.flip == f))
                    .map(|c| c.arms[idx].mean.clone())
                    .collect();
                ConsistencyReport::mean(&reports)
            })
            .collect()
    }
}

fn kernels(spec: &ExperimentSpec) -> Result<Vec<LossKernel>> {
    spec.arms
        .iter()
        .map(|a| {
            a.kernel
                .build(spec.num_levels)
                .map_err(|e| e.in_stage("graph", format!("arm {} kernel {}", a.name, a.kernel)))
        })
        .collect()
}

/// Noise-free trials for every (axis, subject), indexed `axis * subjects + subject`.
fn simulate(spec: &ExperimentSpec, exec: Exec) -> Result<Vec<Vec<Trial>>> {
    let n = spec.axes.len() * spec.subjects;
    exec.try_map_indexed(n, |i| {
        let (axis, subject) = (i / spec.subjects, i % spec.subjects);
        (0..spec.trials)
            .map(|t| {
                let cfg = spec.trial_config(axis, subject, t);
                synth::generate_trial(&cfg).map_err(|e| {
                    e.in_stage(
                        "simulate",
                        format!("axis {} subject {subject} trial {t}", spec.axes[axis]),
                    )
                })
            })
            .collect()
    })
}

fn run_cell(
    spec: &ExperimentSpec,
    kernels: &[LossKernel],
    clean: &[Trial],
    (axis, subject, flip, run): (usize, usize, usize, usize),
) -> Result<CellOutcome> {
    let context = || {
        format!(
            "axis {} subject {subject} flip {} run {run}",
            spec.axes[axis], spec.flip_rates[flip]
        )
    };
    let mut train_set = Vec::with_capacity(clean.len());
    let mut test_set = Vec::with_capacity(clean.len());
    for (t, trial) in clean.iter().enumerate() {
        let mut noisy = trial.clone();
        noisy.noisy_labels = synth::inject_label_noise(
            &trial.clean_training_labels(spec.data.label_source),
            spec.flip_rates[flip],
            spec.noise_seed(axis, subject, flip, run, t),
        )
        .map_err(|e| e.in_stage("simulate", context()))?;
        let (tr, te) = synth::split_trial(&noisy, spec.train_frac).map_err(|e| e.in_stage("simulate", context()))?;
        train_set.push(tr);
        test_set.push(te);
    }
    let init_seed = spec.init_seed(axis, subject, flip, run);
    let delta_max = spec.delta_max();
    let mut arms = Vec::with_capacity(spec.arms.len());
    for (arm, kernel) in spec.arms.iter().zip(kernels) {
        let cfg = spec.train_config(init_seed, arm);
        let (model, history) = trainer::train(&train_set, kernel, &cfg)
            .map_err(|e| e.in_stage("train", format!("{} arm {}", context(), arm.name)))?;
        let mut per_trial = Vec::with_capacity(test_set.len());
        for te in &test_set {
            let traj = model
                .forward(te.features.view())
                .map_err(|e| e.in_stage("predict", format!("{} arm {}", context(), arm.name)))?;
            let report = metrics::evaluate(&traj, &te.true_track, delta_max)
                .map_err(|e| e.in_stage("eval", format!("{} arm {}", context(), arm.name)))?;
            per_trial.push(report.without_curve());
        }
        arms.push(ArmOutcome {
            arm: arm.name.clone(),
            checkpoint: model.checkpoint(&cfg),
            final_epoch: history.last().cloned(),
            mean: ConsistencyReport::mean(&per_trial)?,
            per_trial,
        });
    }
    Ok(CellOutcome {
        axis,
        subject,
        flip,
        run,
        init_seed,
        arms,
    })
}

/// Everything but file output.
pub fn run_experiment(spec: &ExperimentSpec, exec: Exec) -> Result<ExperimentResult> {
    spec.validate()?;
    let kernels = kernels(spec)?;
    let data = simulate(spec, exec)?;
    let (na, ns, nf, nr) = (spec.axes.len(), spec.subjects, spec.flip_rates.len(), spec.runs);
    let cells = exec.try_map_indexed(na * ns * nf * nr, |i| {
        let run = i % nr;
        let flip = (i / nr) % nf;
        let subject = (i / (nr * nf)) % ns;
        let axis = i / (nr * nf * ns);
        run_cell(spec, &kernels, &data[axis * ns + subject], (axis, subject, flip, run))
    })?;
    let table = run_averaged_table(spec, &cells)?;
    let ranks = rank::rank_table(&table).map_err(|e| e.in_stage("bench", spec.name.clone()))?;
    Ok(ExperimentResult {
        spec: spec.clone(),
        cells,
        table,
        ranks,
    })
}

fn run_averaged_table(spec: &ExperimentSpec, cells: &[CellOutcome]) -> Result<MetricTable> {
    // cells are ordered with run fastest, so each group of `runs` is one condition
    let mut table = MetricTable::new();
    for group in cells.chunks(spec.runs) {
        let c0 = &group[0];
        for (ai, arm) in spec.arms.iter().enumerate() {
            let reports: Vec<ConsistencyReport> = group.iter().map(|c| c.arms[ai].mean.clone()).collect();
            let mean = ConsistencyReport::mean(&reports)?;
            for metric in ALL_METRICS {
                table.insert(
                    &arm.name,
                    &ExperimentSpec::subject_name(c0.subject),
                    &spec.condition_name(c0.axis, c0.flip),
                    metric,
                    mean.get(metric).expect("known metric"),
                )?;
            }
        }
    }
    Ok(table)
}

fn runs_csv(result: &ExperimentResult) -> String {
    let spec = &result.spec;
    let mut out = String::from("method,subject,condition,run,metric,value\n");
    for c in &result.cells {
        for a in &c.arms {
            for metric in ALL_METRICS {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    a.arm,
                    ExperimentSpec::subject_name(c.subject),
                    spec.condition_name(c.axis, c.flip),
                    c.run,
                    metric,
                    a.mean.get(metric).expect("known metric"),
                );
            }
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct CellReport<'a> {
    arm: &'a str,
    axis: &'a str,
    subject: String,
    flip_rate: f64,
    run: usize,
    init_seed: u64,
    final_epoch: &'a Option<EpochRecord>,
    mean: &'a ConsistencyReport,
    per_trial: &'a [ConsistencyReport],
}

#[derive(Debug, Serialize)]
struct SeedRecord {
    axis: String,
    subject: String,
    means_seed: u64,
    trial_seeds: Vec<u64>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    name: &'a str,
    master_seed: u64,
    spec_sha256: String,
    spec: &'a ExperimentSpec,
    seeds: Vec<SeedRecord>,
    init_seeds: BTreeMap<String, u64>,
    files: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn cell_dir(spec: &ExperimentSpec, c: &CellOutcome) -> PathBuf {
    PathBuf::from(spec.condition_name(c.axis, c.flip))
        .join(ExperimentSpec::subject_name(c.subject))
        .join(format!("run{:02}", c.run))
}

/// Writes models, reports, tables and the manifest under `out`. Returns the
/// relative paths written, manifest last.
pub fn write_experiment(result: &ExperimentResult, out: &Path) -> Result<Vec<PathBuf>> {
    let spec = &result.spec;
    let mut files: BTreeMap<String, String> = BTreeMap::new();
    let mut put = |rel: PathBuf, bytes: Vec<u8>| -> Result<()> {
        io::write_atomic(&out.join(&rel), &bytes)?;
        files.insert(rel.to_string_lossy().replace('\\', "/"), sha256_hex(&bytes));
        Ok(())
    };
    let mut init_seeds = BTreeMap::new();
    for c in &result.cells {
        let dir = cell_dir(spec, c);
        init_seeds.insert(dir.to_string_lossy().replace('\\', "/"), c.init_seed);
        for a in &c.arms {
            put(Path::new("models").join(&dir).join(format!("{}.json", a.arm)), json(&a.checkpoint))?;
            let report = CellReport {
                arm: &a.arm,
                axis: &spec.axes[c.axis],
                subject: ExperimentSpec::subject_name(c.subject),
                flip_rate: spec.flip_rates[c.flip],
                run: c.run,
                init_seed: c.init_seed,
                final_epoch: &a.final_epoch,
                mean: &a.mean,
                per_trial: &a.per_trial,
            };
            put(Path::new("reports").join(&dir).join(format!("{}.json", a.arm)), json(&report))?;
        }
    }
    put("metrics_runs.csv".into(), runs_csv(result).into_bytes())?;
    let mut table = Vec::new();
    result.table.write_csv(&mut table)?;
    put("metrics.csv".into(), table)?;
    let mut ranks = Vec::new();
    result.ranks.write_csv(&mut ranks)?;
    put("ranks.csv".into(), ranks)?;
    put("radar.json".into(), json(&rank::export_radar(&result.ranks)))?;

    let seeds = (0..spec.axes.len())
        .flat_map(|a| (0..spec.subjects).map(move |s| (a, s)))
        .map(|(a, s)| SeedRecord {
            axis: spec.axes[a].clone(),
            subject: ExperimentSpec::subject_name(s),
            means_seed: spec.means_seed(a, s),
            trial_seeds: (0..spec.trials).map(|t| spec.trial_seed(a, s, t)).collect(),
        })
        .collect();
    let canonical = spec.canonical_json();
    let manifest = Manifest {
        name: &spec.name,
        master_seed: spec.seed,
        spec_sha256: sha256_hex(canonical.as_bytes()),
        spec,
        seeds,
        init_seeds,
        files,
    };
    io::write_json(&out.join("manifest.json"), &manifest)?;
    let mut written: Vec<PathBuf> = manifest.files.keys().map(PathBuf::from).collect();
    written.push("manifest.json".into());
    Ok(written)
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

pub fn run_pipeline(spec: &ExperimentSpec, out: &Path, exec: Exec) -> Result<ExperimentResult> {
    let result = run_experiment(spec, exec)?;
    write_experiment(&result, out)?;
    Ok(result)
}
