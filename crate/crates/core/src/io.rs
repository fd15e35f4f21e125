//! On-disk formats: trajectory / truth / feature CSVs, trial bundles, graph
//! and checkpoint JSON. Files are written to a sibling temp file and renamed.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::EmotionGraph;
use crate::losses::TrajectoryPrediction;
use crate::metrics::LabelSequence;
use crate::synth::{Trial, TrialConfig};
use crate::trainer::ModelCheckpoint;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

pub fn read_graph(path: &Path) -> Result<EmotionGraph> {
    read_json(path)
}

pub fn read_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    read_json(path)
}

fn csv_table(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

fn matrix_csv(prefix: &str, m: &Array2<f64>) -> String {
    let mut header = vec!["t".to_string()];
    header.extend((0..m.ncols()).map(|j| format!("{prefix}{j}")));
    let rows = m.rows().into_iter().enumerate().map(|(t, row)| {
        let mut r = vec![t.to_string()];
        r.extend(row.iter().map(|v| v.to_string()));
        r
    });
    csv_table(&header, rows)
}

pub fn trajectory_csv(traj: &TrajectoryPrediction) -> String {
    matrix_csv("p", &traj.probs().to_owned())
}

pub fn features_csv(features: &Array2<f64>) -> String {
    matrix_csv("x", features)
}

/// Reads a `t,<prefix>0..` table; the `t` column is optional and ignored.
fn read_matrix_csv(path: &Path, prefix: &str) -> Result<Array2<f64>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let headers = rdr.headers().map_err(|e| Error::parse(path, e))?.clone();
    let mut cols = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim();
        if h == "t" {
            continue;
        }
        let idx: usize = h
            .strip_prefix(prefix)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(path, format!("unexpected column {h:?}")))?;
        if idx != cols.len() {
            return Err(Error::parse(path, format!("column {h:?} out of order")));
        }
        cols.push(i);
    }
    if cols.is_empty() {
        return Err(Error::parse(path, format!("no {prefix}* columns")));
    }
    let mut flat = Vec::new();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        for &c in &cols {
            let field = rec.get(c).unwrap_or("").trim();
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(path, format!("row {n}: bad number {field:?}")))?;
            flat.push(v);
        }
        n += 1;
    }
    Array2::from_shape_vec((n, cols.len()), flat).map_err(|e| Error::parse(path, e))
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryPrediction> {
    TrajectoryPrediction::new(read_matrix_csv(path, "p")?)
}

pub fn read_features(path: &Path) -> Result<Array2<f64>> {
    read_matrix_csv(path, "x")
}

/// Reads integer labels from the column named `column`.
fn read_label_column(path: &Path, column: &[&str]) -> Result<Vec<usize>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let headers = rdr.headers().map_err(|e| Error::parse(path, e))?.clone();
    let idx = headers
        .iter()
        .position(|h| column.contains(&h.trim()))
        .ok_or_else(|| Error::parse(path, format!("missing column {}", column.join(" or "))))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        let field = rec.get(idx).unwrap_or("").trim();
        out.push(
            field
                .parse()
                .map_err(|_| Error::parse(path, format!("bad label {field:?}")))?,
        );
    }
    Ok(out)
}

/// Truth CSV: a `true` or `label` column of integer levels.
pub fn read_truth(path: &Path, num_levels: usize) -> Result<LabelSequence> {
    LabelSequence::new(read_label_column(path, &["true", "label"])?, num_levels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub config: TrialConfig,
    pub global_label: usize,
}

pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const META_FILE: &str = "meta.json";

pub fn write_trial_bundle(dir: &Path, trial: &Trial, config: &TrialConfig) -> Result<()> {
    write_atomic(&dir.join(FEATURES_FILE), features_csv(&trial.features).as_bytes())?;
    let rows = trial
        .true_track
        .labels()
        .iter()
        .zip(trial.noisy_labels.labels())
        .enumerate()
        .map(|(t, (a, b))| vec![t.to_string(), a.to_string(), b.to_string()]);
    let labels = csv_table(&["t".into(), "true".into(), "noisy".into()], rows);
    write_atomic(&dir.join(LABELS_FILE), labels.as_bytes())?;
    write_json(
        &dir.join(META_FILE),
        &TrialMeta {
            config: config.clone(),
            global_label: trial.global_label,
        },
    )
}

pub fn read_trial_bundle(dir: &Path) -> Result<(Trial, TrialMeta)> {
    let meta: TrialMeta = read_json(&dir.join(META_FILE))?;
    let k = meta.config.num_levels;
    let features = read_features(&dir.join(FEATURES_FILE))?;
    let labels = dir.join(LABELS_FILE);
    let true_track = LabelSequence::new(read_label_column(&labels, &["true"])?, k)?;
    let noisy_labels = LabelSequence::new(read_label_column(&labels, &["noisy"])?, k)?;
    if features.nrows() != true_track.len() {
        return Err(Error::parse(
            dir,
            format!("{} feature rows but {} labels", features.nrows(), true_track.len()),
        ));
    }
    let trial = Trial {
        features,
        true_track,
        global_label: meta.global_label,
        noisy_labels,
    };
    Ok((trial, meta))
}

/// Every trial bundle at or below `dir`, in lexicographic path order.
pub fn find_trial_bundles(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    collect_bundles(dir, &mut out)?;
    Ok(out)
}

fn collect_bundles(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if dir.join(META_FILE).is_file() {
        out.push(dir.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    for e in entries {
        collect_bundles(&e, out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_trial;

    #[test]
    fn trajectory_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let t = TrajectoryPrediction::from_rows(&[vec![0.1, 0.9], vec![1.0 / 3.0, 2.0 / 3.0]]).unwrap();
        let p = dir.path().join("traj.csv");
        write_atomic(&p, trajectory_csv(&t).as_bytes()).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t,p0,p1\n0,0.1,0.9\n"));
        assert_eq!(read_trajectory(&p).unwrap(), t);
    }

    #[test]
    fn truth_accepts_either_column() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        fs::write(&a, "t,label\n0,1\n1,2\n").unwrap();
        assert_eq!(read_truth(&a, 3).unwrap().labels(), &[1, 2]);
        let b = dir.path().join("b.csv");
        fs::write(&b, "t,true,noisy\n0,0,2\n").unwrap();
        assert_eq!(read_truth(&b, 3).unwrap().labels(), &[0]);
        assert!(read_truth(&b, 0).is_err() || read_truth(&a, 2).is_err());
    }

    #[test]
    fn bundle_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = TrialConfig::with_random_means(4, 12, 3, 1.0, 5);
        c.seed = 9;
        let trial = generate_trial(&c).unwrap();
        let d = dir.path().join("s0").join("trial_00");
        write_trial_bundle(&d, &trial, &c).unwrap();
        let found = find_trial_bundles(dir.path()).unwrap();
        assert_eq!(found, vec![d.clone()]);
        let (back, meta) = read_trial_bundle(&d).unwrap();
        assert_eq!(back, trial);
        assert_eq!(meta.config, c);
    }
}
