//! Consistency metrics over decoded label sequences.
//!
//! Consecutive predictions are merged when their distance is at most a
//! threshold `Δd`; `n_c(Δd)` counts the surviving segments. `δ_d` is the
//! threshold at which everything has merged and `A_c` is the area under
//! `n_c` on `[0, delta_max]`. `v_d` is the mean absolute consecutive jump.
//! F1 (macro) and Top-2 accuracy cover the quantitative side.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LaplacianKernel;
use crate::losses::TrajectoryPrediction;

/// Metric keys shared by reports, metric tables and rank tables.
pub const F1: &str = "f1";
pub const TOP2: &str = "top2";
pub const A_C: &str = "a_c";
pub const V_D: &str = "v_d";
pub const DELTA_D: &str = "delta_d";
pub const ALL_METRICS: [&str; 5] = [F1, TOP2, A_C, V_D, DELTA_D];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelSequence {
    labels: Vec<usize>,
    num_levels: usize,
}

impl LabelSequence {
    pub fn new(labels: Vec<usize>, num_levels: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidLength("label sequence is empty".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_levels) {
            return Err(Error::InvalidIndex { index: bad, num_levels });
        }
        Ok(LabelSequence { labels, num_levels })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `|y_{i+1} − y_i|` for each adjacent pair.
    pub fn jumps(&self) -> Vec<f64> {
        self.labels
            .windows(2)
            .map(|w| (w[1] as f64 - w[0] as f64).abs())
            .collect()
    }

    /// Commute distances between adjacent decoded levels, for merging under the
    /// graph metric instead of level difference.
    pub fn commute_jumps(&self, kernel: &LaplacianKernel) -> Result<Vec<f64>> {
        self.labels
            .windows(2)
            .map(|w| kernel.commute_distance(w[0], w[1]))
            .collect()
    }

    /// Splits into `[0, at)` and `[at, N)`.
    pub fn split_at(&self, at: usize) -> (LabelSequence, LabelSequence) {
        let (a, b) = self.labels.split_at(at);
        (
            LabelSequence { labels: a.to_vec(), num_levels: self.num_levels },
            LabelSequence { labels: b.to_vec(), num_levels: self.num_levels },
        )
    }
}

/// Argmax per row, ties to the lowest index.
pub fn decode_labels(traj: &TrajectoryPrediction) -> LabelSequence {
    let labels = traj.probs().outer_iter().map(|row| argmax(row)).collect();
    LabelSequence {
        labels,
        num_levels: traj.num_levels(),
    }
}

fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = i;
        }
    }
    best
}

/// Step function `n_c(Δd)`.
///
/// `values[0]` holds on `(0, breakpoints[0])`, `values[j + 1]` on
/// `[breakpoints[j], breakpoints[j + 1])`; the last value is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcCurve {
    pub breakpoints: Vec<f64>,
    pub values: Vec<usize>,
}

impl NcCurve {
    /// Builds the curve from consecutive jump magnitudes. A pair merges once
    /// `jump ≤ Δd`.
    pub fn from_jumps(jumps: &[f64]) -> Self {
        let mut breakpoints: Vec<f64> = jumps.iter().copied().filter(|&d| d > 0.0).collect();
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        let count_above = |t: f64| jumps.iter().filter(|&&d| d > t).count();
        let mut values = Vec::with_capacity(breakpoints.len() + 1);
        values.push(1 + count_above(0.0));
        values.extend(breakpoints.iter().map(|&b| 1 + count_above(b)));
        NcCurve { breakpoints, values }
    }

    /// `n_c(Δd)` for `Δd > 0`.
    pub fn value_at(&self, delta: f64) -> usize {
        let idx = self.breakpoints.partition_point(|&b| b <= delta);
        self.values[idx]
    }

    /// Exact integral of the step function over `[0, upper]`.
    pub fn integrate(&self, upper: f64) -> f64 {
        let mut area = 0.0;
        let mut left = 0.0;
        for (j, &b) in self.breakpoints.iter().enumerate() {
            if b >= upper {
                return area + self.values[j] as f64 * (upper - left);
            }
            area += self.values[j] as f64 * (b - left);
            left = b;
        }
        area + *self.values.last().expect("curve has a value") as f64 * (upper - left).max(0.0)
    }
}

pub fn nc_curve(seq: &LabelSequence) -> NcCurve {
    NcCurve::from_jumps(&seq.jumps())
}

/// `δ_d = max |y_{i+1} − y_i|`, 0 for constant or single-segment sequences.
pub fn critical_threshold(seq: &LabelSequence) -> f64 {
    seq.jumps().into_iter().fold(0.0, f64::max)
}

/// Default integration bound: the largest possible level distance.
pub fn default_delta_max(num_levels: usize) -> f64 {
    num_levels.saturating_sub(1) as f64
}

/// `A_c = delta_max + Σ min(|y_{i+1} − y_i|, delta_max)`.
pub fn area_under_nc(seq: &LabelSequence, delta_max: f64) -> Result<f64> {
    area_from_jumps(&seq.jumps(), delta_max)
}

pub fn area_from_jumps(jumps: &[f64], delta_max: f64) -> Result<f64> {
    let critical = jumps.iter().copied().fold(0.0, f64::max);
    if !(delta_max >= critical) {
        return Err(Error::InvalidRange(format!(
            "delta_max {delta_max} is below the critical threshold {critical}"
        )));
    }
    Ok(delta_max + jumps.iter().map(|&d| d.min(delta_max)).sum::<f64>())
}

/// `v_d`: mean absolute jump over the `N − 1` adjacent pairs.
pub fn local_fluctuation(seq: &LabelSequence) -> Result<f64> {
    let n = seq.len();
    if n < 2 {
        return Err(Error::InvalidLength(format!(
            "local fluctuation needs at least 2 segments, got {n}"
        )));
    }
    Ok(seq.jumps().iter().sum::<f64>() / (n - 1) as f64)
}

fn check_same_length(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InvalidLength(format!(
            "prediction length {a} differs from truth length {b}"
        )));
    }
    Ok(())
}

/// Unweighted mean of per-class F1 over the classes present in `truth`.
pub fn macro_f1(pred: &LabelSequence, truth: &LabelSequence) -> Result<f64> {
    check_same_length(pred.len(), truth.len())?;
    let k = truth.num_levels.max(pred.num_levels);
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fneg = vec![0usize; k];
    for (&p, &t) in pred.labels.iter().zip(&truth.labels) {
        if p == t {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let mut present = vec![false; k];
    for &t in &truth.labels {
        present[t] = true;
    }
    let scores: Vec<f64> = (0..k)
        .filter(|&c| present[c])
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fneg[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Fraction of segments whose true label is among the two most confident
/// classes (ties ordered by lowest index).
pub fn top2_accuracy(traj: &TrajectoryPrediction, truth: &LabelSequence) -> Result<f64> {
    check_same_length(traj.len(), truth.len())?;
    if traj.num_levels() < 2 {
        return Err(Error::InvalidSize(format!(
            "top-2 accuracy needs at least 2 classes, got {}",
            traj.num_levels()
        )));
    }
    let hits = traj
        .probs()
        .outer_iter()
        .zip(&truth.labels)
        .filter(|(row, &t)| {
            let first = argmax(row.view());
            let mut second = if first == 0 { 1 } else { 0 };
            for (i, &p) in row.iter().enumerate() {
                if i != first && p > row[second] {
                    second = i;
                }
            }
            t == first || t == second
        })
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    #[serde(rename = "f1")]
    pub f1_macro: f64,
    pub top2: f64,
    pub v_d: f64,
    pub delta_d: f64,
    pub a_c: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nc_breakpoints: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nc_values: Option<Vec<usize>>,
}

impl ConsistencyReport {
    pub fn get(&self, metric: &str) -> Option<f64> {
        match metric {
            F1 => Some(self.f1_macro),
            TOP2 => Some(self.top2),
            A_C => Some(self.a_c),
            V_D => Some(self.v_d),
            DELTA_D => Some(self.delta_d),
            _ => None,
        }
    }

    pub fn without_curve(mut self) -> Self {
        self.nc_breakpoints = None;
        self.nc_values = None;
        self
    }

    /// Equal-weight average of the scalar fields; curves are dropped.
    pub fn mean(reports: &[ConsistencyReport]) -> Result<ConsistencyReport> {
        if reports.is_empty() {
            return Err(Error::InvalidLength("no reports to average".into()));
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&ConsistencyReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Ok(ConsistencyReport {
            f1_macro: avg(|r| r.f1_macro),
            top2: avg(|r| r.top2),
            v_d: avg(|r| r.v_d),
            delta_d: avg(|r| r.delta_d),
            a_c: avg(|r| r.a_c),
            nc_breakpoints: None,
            nc_values: None,
        })
    }
}

/// All five metrics for one predicted trajectory against its true labels.
pub fn evaluate(
    traj: &TrajectoryPrediction,
    truth: &LabelSequence,
    delta_max: f64,
) -> Result<ConsistencyReport> {
    check_same_length(traj.len(), truth.len())?;
    let pred = decode_labels(traj);
    let curve = nc_curve(&pred);
    Ok(ConsistencyReport {
        f1_macro: macro_f1(&pred, truth)?,
        top2: top2_accuracy(traj, truth)?,
        v_d: local_fluctuation(&pred)?,
        delta_d: critical_threshold(&pred),
        a_c: area_under_nc(&pred, delta_max)?,
        nc_breakpoints: Some(curve.breakpoints),
        nc_values: Some(curve.values),
    })
}
