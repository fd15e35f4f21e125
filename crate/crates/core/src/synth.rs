//! Synthetic trials: a lazy ±1 random walk over emotion levels, Gaussian
//! per-level feature emission, baseline normalization, symmetric label flips
//! and a temporal train/test split.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::LabelSequence;
use crate::seed;

/// What the (noisy) training labels are derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    /// Every segment inherits the trial's global label.
    #[default]
    Global,
    /// Segments carry their own true level.
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub num_levels: usize,
    pub num_segments: usize,
    pub stay_prob: f64,
    pub feature_dim: usize,
    /// `K × d`, one row per level.
    pub class_means: Vec<Vec<f64>>,
    pub feature_noise: f64,
    pub flip_rate: f64,
    #[serde(default)]
    pub label_source: LabelSource,
    #[serde(default = "default_baseline_segments")]
    pub baseline_segments: usize,
    pub seed: u64,
}

fn default_baseline_segments() -> usize {
    20
}

impl TrialConfig {
    /// Config with class means drawn from `N(0, separation²)` under `means_seed`.
    pub fn with_random_means(
        num_levels: usize,
        num_segments: usize,
        feature_dim: usize,
        separation: f64,
        means_seed: u64,
    ) -> Self {
        let mut rng = seed::rng(means_seed, &[seed::TAG_MEANS]);
        let class_means = (0..num_levels)
            .map(|_| {
                (0..feature_dim)
                    .map(|_| separation * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        TrialConfig {
            num_levels,
            num_segments,
            stay_prob: 0.8,
            feature_dim,
            class_means,
            feature_noise: 1.0,
            flip_rate: 0.2,
            label_source: LabelSource::Global,
            baseline_segments: default_baseline_segments(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_levels < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 levels, got {}", self.num_levels)));
        }
        if self.num_segments < 1 {
            return Err(Error::InvalidConfig("need at least 1 segment".into()));
        }
        if !(0.0..=1.0).contains(&self.stay_prob) {
            return Err(Error::InvalidConfig(format!("stay_prob {} outside [0, 1]", self.stay_prob)));
        }
        if !(0.0..1.0).contains(&self.flip_rate) {
            return Err(Error::InvalidConfig(format!("flip_rate {} outside [0, 1)", self.flip_rate)));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return Err(Error::InvalidConfig(format!("feature_noise {} must be ≥ 0", self.feature_noise)));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidConfig("feature_dim must be positive".into()));
        }
        if self.class_means.len() != self.num_levels
            || self.class_means.iter().any(|m| m.len() != self.feature_dim)
        {
            return Err(Error::InvalidConfig(format!(
                "class_means must be {}x{}",
                self.num_levels, self.feature_dim
            )));
        }
        for a in 0..self.num_levels {
            for b in a + 1..self.num_levels {
                if self.class_means[a] == self.class_means[b] {
                    return Err(Error::InvalidConfig(format!("class means {a} and {b} coincide")));
                }
            }
        }
        Ok(())
    }

    fn means(&self) -> Array2<f64> {
        let flat: Vec<f64> = self.class_means.iter().flatten().copied().collect();
        Array2::from_shape_vec((self.num_levels, self.feature_dim), flat).expect("validated shape")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub features: Array2<f64>,
    pub true_track: LabelSequence,
    pub global_label: usize,
    pub noisy_labels: LabelSequence,
}

impl Trial {
    pub fn len(&self) -> usize {
        self.true_track.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_track.is_empty()
    }

    pub fn num_levels(&self) -> usize {
        self.true_track.num_levels()
    }

    /// Labels the noise is applied to under `source`.
    pub fn clean_training_labels(&self, source: LabelSource) -> LabelSequence {
        match source {
            LabelSource::Local => self.true_track.clone(),
            LabelSource::Global => LabelSequence::new(vec![self.global_label; self.len()], self.num_levels())
                .expect("global label in range"),
        }
    }
}

/// Lazy walk on the line graph: hold with `stay_prob`, otherwise step to a
/// uniformly chosen in-range neighbour. The start level is uniform.
pub fn generate_track(config: &TrialConfig) -> Result<LabelSequence> {
    config.validate()?;
    let mut rng = seed::rng(config.seed, &[seed::TAG_TRACK]);
    Ok(walk(config.num_levels, config.num_segments, config.stay_prob, &mut rng))
}

fn walk(k: usize, n: usize, stay_prob: f64, rng: &mut impl Rng) -> LabelSequence {
    let mut level = rng.random_range(0..k);
    let mut labels = Vec::with_capacity(n);
    labels.push(level);
    for _ in 1..n {
        if rng.random::<f64>() >= stay_prob {
            level = match level {
                0 => 1,
                l if l == k - 1 => k - 2,
                l => {
                    if rng.random::<bool>() {
                        l + 1
                    } else {
                        l - 1
                    }
                }
            };
        }
        labels.push(level);
    }
    LabelSequence::new(labels, k).expect("walk stays in range")
}

/// Mean level rounded half away from zero, clamped to `[0, K − 1]`.
pub fn global_label(track: &LabelSequence) -> Result<usize> {
    if track.is_empty() {
        return Err(Error::InvalidLength("empty track".into()));
    }
    let mean = track.labels().iter().sum::<usize>() as f64 / track.len() as f64;
    Ok((mean.round() as usize).min(track.num_levels() - 1))
}

/// Row `i` = `class_means[track_i] + σ · z`, `z ~ N(0, I)`.
pub fn emit_features(track: &LabelSequence, config: &TrialConfig) -> Result<Array2<f64>> {
    config.validate()?;
    if track.num_levels() != config.num_levels {
        return Err(Error::InvalidDimension(format!(
            "track has {} levels, config {}",
            track.num_levels(),
            config.num_levels
        )));
    }
    let mut rng = seed::rng(config.seed, &[seed::TAG_FEATURES]);
    Ok(emit(track.labels(), &config.means(), config.feature_noise, &mut rng))
}

fn emit(levels: &[usize], means: &Array2<f64>, sigma: f64, rng: &mut impl Rng) -> Array2<f64> {
    let d = means.ncols();
    let mut x = Array2::zeros((levels.len(), d));
    for (i, &l) in levels.iter().enumerate() {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            x[[i, j]] = means[[l, j]] + sigma * z;
        }
    }
    x
}

/// Each position flips with probability `flip_rate` to a uniform draw over
/// the `K − 1` other levels.
pub fn inject_label_noise(labels: &LabelSequence, flip_rate: f64, seed: u64) -> Result<LabelSequence> {
    if !(0.0..1.0).contains(&flip_rate) {
        return Err(Error::InvalidConfig(format!("flip_rate {flip_rate} outside [0, 1)")));
    }
    let k = labels.num_levels();
    let mut rng = seed::rng(seed, &[seed::TAG_NOISE]);
    let flipped = labels
        .labels()
        .iter()
        .map(|&l| {
            if k > 1 && rng.random::<f64>() < flip_rate {
                let other = rng.random_range(0..k - 1);
                if other >= l {
                    other + 1
                } else {
                    other
                }
            } else {
                l
            }
        })
        .collect();
    LabelSequence::new(flipped, k)
}

/// Z-score against the baseline (per coordinate), then divide by the global
/// max-abs so the result lies in `[−1, 1]`.
pub fn preprocess(features: &Array2<f64>, baseline: &Array2<f64>) -> Result<Array2<f64>> {
    if baseline.nrows() == 0 {
        return Err(Error::InvalidLength("baseline has no rows".into()));
    }
    if baseline.ncols() != features.ncols() {
        return Err(Error::InvalidDimension(format!(
            "features have {} coordinates, baseline {}",
            features.ncols(),
            baseline.ncols()
        )));
    }
    let mu = baseline.mean_axis(Axis(0)).expect("nonempty");
    let sd = baseline.std_axis(Axis(0), 0.0);
    if let Some((j, _)) = sd.iter().enumerate().find(|(_, s)| !(**s > 0.0)) {
        return Err(Error::DegenerateBaseline(j));
    }
    let z = (features - &mu) / &sd;
    let max_abs = z.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max_abs == 0.0 {
        return Ok(z);
    }
    Ok(z / max_abs)
}

/// Baseline recording: emissions from a uniformly random level per row.
fn baseline_features(config: &TrialConfig, rng: &mut impl Rng) -> Array2<f64> {
    let levels: Vec<usize> = (0..config.baseline_segments.max(2))
        .map(|_| rng.random_range(0..config.num_levels))
        .collect();
    emit(&levels, &config.means(), config.feature_noise, rng)
}

/// Track, normalized features, global label and noisy training labels, all
/// derived from `config.seed`.
pub fn generate_trial(config: &TrialConfig) -> Result<Trial> {
    let track = generate_track(config)?;
    let raw = emit_features(&track, config)?;
    let mut rng = seed::rng(config.seed, &[seed::TAG_BASELINE]);
    let baseline = baseline_features(config, &mut rng);
    let features = preprocess(&raw, &baseline)?;
    let global = global_label(&track)?;
    let mut trial = Trial {
        features,
        true_track: track,
        global_label: global,
        noisy_labels: LabelSequence::new(vec![0], config.num_levels)?,
    };
    let clean = trial.clean_training_labels(config.label_source);
    trial.noisy_labels = inject_label_noise(&clean, config.flip_rate, config.seed)?;
    Ok(trial)
}

/// Temporal prefix/suffix split. The training part keeps the noisy labels;
/// the test part carries its true track in both label fields.
pub fn split_trial(trial: &Trial, train_frac: f64) -> Result<(Trial, Trial)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidFraction(train_frac));
    }
    let n = trial.len();
    if n < 2 {
        return Err(Error::InvalidLength(format!("cannot split a trial of {n} segments")));
    }
    let at = ((n as f64 * train_frac).round() as usize).clamp(1, n - 1);
    let (true_train, true_test) = trial.true_track.split_at(at);
    let (noisy_train, _) = trial.noisy_labels.split_at(at);
    let train = Trial {
        features: trial.features.slice(ndarray::s![..at, ..]).to_owned(),
        true_track: true_train,
        global_label: trial.global_label,
        noisy_labels: noisy_train,
    };
    let test = Trial {
        features: trial.features.slice(ndarray::s![at.., ..]).to_owned(),
        noisy_labels: true_test.clone(),
        true_track: true_test,
        global_label: trial.global_label,
    };
    Ok((train, test))
}

/// Per-coordinate means of rows sharing a level; used by sanity checks.
pub fn level_centroid(features: &Array2<f64>, track: &LabelSequence, level: usize) -> Option<Array1<f64>> {
    let rows: Vec<usize> = (0..track.len()).filter(|&i| track.labels()[i] == level).collect();
    if rows.is_empty() {
        return None;
    }
    Some(features.select(Axis(0), &rows).mean_axis(Axis(0)).expect("nonempty"))
}
