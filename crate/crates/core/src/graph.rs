//! Emotion-transition graphs, their Laplacian pseudoinverse, and commute
//! distances.
//!
//! A graph lives over `K` ordered levels. The regularizers only ever see the
//! pseudoinverse `L†` through [`LossKernel`]; commute distances come from
//! `vol(V) · (e_i − e_j)ᵀ L† (e_i − e_j)` and can be checked against a
//! weighted random-walk simulation with [`monte_carlo_commute`].

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg;

pub const DEFAULT_EIGEN_CUTOFF: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;

/// Weighted undirected graph over `K` emotion levels. Always connected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphJson", into = "GraphJson")]
pub struct EmotionGraph {
    weights: Array2<f64>,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    num_levels: usize,
    weights: Vec<Vec<f64>>,
}

impl TryFrom<GraphJson> for EmotionGraph {
    type Error = Error;

    fn try_from(raw: GraphJson) -> Result<Self> {
        if raw.weights.len() != raw.num_levels || raw.weights.iter().any(|r| r.len() != raw.num_levels) {
            return Err(Error::InvalidMatrix(format!(
                "weights must be {0}x{0}",
                raw.num_levels
            )));
        }
        let k = raw.num_levels;
        let flat: Vec<f64> = raw.weights.into_iter().flatten().collect();
        let w = Array2::from_shape_vec((k, k), flat)
            .map_err(|e| Error::InvalidMatrix(e.to_string()))?;
        EmotionGraph::from_weight_matrix(w)
    }
}

impl From<EmotionGraph> for GraphJson {
    fn from(g: EmotionGraph) -> Self {
        GraphJson {
            num_levels: g.num_levels(),
            weights: g.weights.outer_iter().map(|r| r.to_vec()).collect(),
        }
    }
}

fn check_size(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidSize(format!("need at least 2 levels, got {k}")));
    }
    Ok(())
}

fn check_weight(w: f64) -> Result<()> {
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::InvalidWeight(format!("edge weight must be positive, got {w}")));
    }
    Ok(())
}

impl EmotionGraph {
    /// Path graph `0 — 1 — … — K−1`; `edge_weights[i]` joins levels `i` and `i+1`.
    pub fn line_graph(num_levels: usize, edge_weights: &[f64]) -> Result<Self> {
        check_size(num_levels)?;
        if edge_weights.len() != num_levels - 1 {
            return Err(Error::InvalidSize(format!(
                "line graph on {num_levels} levels needs {} edge weights, got {}",
                num_levels - 1,
                edge_weights.len()
            )));
        }
        let mut w = Array2::zeros((num_levels, num_levels));
        for (i, &wi) in edge_weights.iter().enumerate() {
            check_weight(wi)?;
            w[[i, i + 1]] = wi;
            w[[i + 1, i]] = wi;
        }
        Ok(EmotionGraph { weights: w })
    }

    pub fn complete_graph(num_levels: usize, weight: f64) -> Result<Self> {
        check_size(num_levels)?;
        check_weight(weight)?;
        let mut w = Array2::from_elem((num_levels, num_levels), weight);
        w.diag_mut().fill(0.0);
        Ok(EmotionGraph { weights: w })
    }

    pub fn from_weight_matrix(weights: Array2<f64>) -> Result<Self> {
        let (n, m) = weights.dim();
        if n != m {
            return Err(Error::InvalidMatrix(format!("weights must be square, got {n}x{m}")));
        }
        check_size(n)?;
        for i in 0..n {
            for j in 0..n {
                let w = weights[[i, j]];
                if !w.is_finite() {
                    return Err(Error::InvalidWeight(format!("non-finite weight at ({i}, {j})")));
                }
                if w < 0.0 {
                    return Err(Error::InvalidWeight(format!("negative weight {w} at ({i}, {j})")));
                }
                if (w - weights[[j, i]]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidMatrix(format!(
                        "asymmetric: w[{i}][{j}] = {w} but w[{j}][{i}] = {}",
                        weights[[j, i]]
                    )));
                }
            }
            if weights[[i, i]] != 0.0 {
                return Err(Error::InvalidMatrix(format!("nonzero diagonal at level {i}")));
            }
        }
        // average away sub-tolerance asymmetry so downstream matrices are exactly symmetric
        let sym = (&weights + &weights.t()) * 0.5;
        let g = EmotionGraph { weights: sym };
        let unreached = g.unreachable_from_first();
        if !unreached.is_empty() {
            return Err(Error::DisconnectedGraph(format!(
                "levels {unreached:?} unreachable from level 0"
            )));
        }
        Ok(g)
    }

    fn unreachable_from_first(&self) -> Vec<usize> {
        let n = self.num_levels();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if !seen[v] && self.weights[[u, v]] > 0.0 {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        (0..n).filter(|&v| !seen[v]).collect()
    }

    pub fn num_levels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn degrees(&self) -> Array1<f64> {
        self.weights.sum_axis(ndarray::Axis(1))
    }

    /// `L = D − A`.
    pub fn laplacian(&self) -> Array2<f64> {
        let mut l = -&self.weights;
        for (i, d) in self.degrees().iter().enumerate() {
            l[[i, i]] = *d;
        }
        l
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialization is infallible")
    }
}

/// The graph configurations of the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphPreset {
    /// Unit-weight path graph.
    G0,
    /// Path graph with the two end edges at half weight.
    G1,
    /// Path graph with every interior edge (not touching an end level) at half weight.
    G2,
    /// Complete graph, unit weights.
    Ga,
}

impl GraphPreset {
    pub const ALL: [GraphPreset; 4] = [GraphPreset::G0, GraphPreset::G1, GraphPreset::G2, GraphPreset::Ga];

    pub fn build(self, num_levels: usize) -> Result<EmotionGraph> {
        check_size(num_levels)?;
        let edges = num_levels - 1;
        match self {
            GraphPreset::G0 => EmotionGraph::line_graph(num_levels, &vec![1.0; edges]),
            GraphPreset::G1 => {
                let w: Vec<f64> = (0..edges)
                    .map(|e| if e == 0 || e == edges - 1 { 0.5 } else { 1.0 })
                    .collect();
                EmotionGraph::line_graph(num_levels, &w)
            }
            GraphPreset::G2 => {
                let w: Vec<f64> = (0..edges)
                    .map(|e| if e == 0 || e == edges - 1 { 1.0 } else { 0.5 })
                    .collect();
                EmotionGraph::line_graph(num_levels, &w)
            }
            GraphPreset::Ga => EmotionGraph::complete_graph(num_levels, 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GraphPreset::G0 => "g0",
            GraphPreset::G1 => "g1",
            GraphPreset::G2 => "g2",
            GraphPreset::Ga => "ga",
        }
    }
}

impl fmt::Display for GraphPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GraphPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "g0" => Ok(GraphPreset::G0),
            "g1" => Ok(GraphPreset::G1),
            "g2" => Ok(GraphPreset::G2),
            "ga" => Ok(GraphPreset::Ga),
            other => Err(Error::InvalidConfig(format!("unknown graph preset '{other}'"))),
        }
    }
}

/// Laplacian, its Moore-Penrose pseudoinverse and the graph volume.
#[derive(Debug, Clone)]
pub struct LaplacianKernel {
    laplacian: Array2<f64>,
    pinv: Array2<f64>,
    volume: f64,
    eigen_cutoff: f64,
    eigenvalues: Array1<f64>,
    zeroed: usize,
}

impl LaplacianKernel {
    /// Pseudoinverse through the symmetric eigendecomposition of `L`, inverting
    /// eigenvalues above `eigen_cutoff · λ_max` and zeroing the rest.
    pub fn build(graph: &EmotionGraph, eigen_cutoff: f64) -> Result<Self> {
        if !(eigen_cutoff > 0.0 && eigen_cutoff < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "eigen cutoff must lie in (0, 1), got {eigen_cutoff}"
            )));
        }
        let laplacian = graph.laplacian();
        let eig = linalg::symmetric_eigen(laplacian.view())?;
        let lambda_max = eig.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let threshold = eigen_cutoff * lambda_max;
        let zeroed = eig.values.iter().filter(|&&l| l <= threshold).count();
        let pinv = eig.reconstruct(|l| if l > threshold { 1.0 / l } else { 0.0 });
        // symmetrize away rounding in the outer-product sum
        let pinv = (&pinv + &pinv.t()) * 0.5;
        let volume = laplacian.diag().sum();
        Ok(LaplacianKernel {
            laplacian,
            pinv,
            volume,
            eigen_cutoff,
            eigenvalues: eig.values,
            zeroed,
        })
    }

    pub fn new(graph: &EmotionGraph) -> Result<Self> {
        Self::build(graph, DEFAULT_EIGEN_CUTOFF)
    }

    pub fn num_levels(&self) -> usize {
        self.laplacian.nrows()
    }

    pub fn laplacian(&self) -> ArrayView2<'_, f64> {
        self.laplacian.view()
    }

    pub fn pinv(&self) -> ArrayView2<'_, f64> {
        self.pinv.view()
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn eigen_cutoff(&self) -> f64 {
        self.eigen_cutoff
    }

    /// Laplacian spectrum, ascending.
    pub fn eigenvalues(&self) -> ArrayView1<'_, f64> {
        self.eigenvalues.view()
    }

    /// Number of eigenvalues treated as zero; 1 for a connected graph.
    pub fn nullity(&self) -> usize {
        self.zeroed
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.num_levels() {
            return Err(Error::InvalidIndex {
                index,
                num_levels: self.num_levels(),
            });
        }
        Ok(())
    }

    /// `vol(V) · (e_i − e_j)ᵀ L† (e_i − e_j)`, 0-indexed levels.
    pub fn commute_distance(&self, i: usize, j: usize) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        if i == j {
            return Ok(0.0);
        }
        let p = &self.pinv;
        Ok(self.volume * (p[[i, i]] + p[[j, j]] - p[[i, j]] - p[[j, i]]))
    }

    /// All pairwise commute distances.
    pub fn commute_matrix(&self) -> Array2<f64> {
        let k = self.num_levels();
        Array2::from_shape_fn((k, k), |(i, j)| {
            self.commute_distance(i, j).expect("indices in range")
        })
    }

    /// `vᵀ L† v`.
    pub fn quadratic_form(&self, v: ArrayView1<f64>) -> Result<f64> {
        if v.len() != self.num_levels() {
            return Err(Error::InvalidDimension(format!(
                "vector of length {} against {} levels",
                v.len(),
                self.num_levels()
            )));
        }
        Ok(linalg::quadratic(self.pinv.view(), v))
    }

    /// Largest absolute entry over the four Moore-Penrose residuals.
    pub fn moore_penrose_residual(&self) -> f64 {
        let l = &self.laplacian;
        let p = &self.pinv;
        let lp = l.dot(p);
        let pl = p.dot(l);
        let r1 = linalg::max_abs_diff(lp.dot(l).view(), l.view());
        let r2 = linalg::max_abs_diff(pl.dot(p).view(), p.view());
        let r3 = linalg::max_abs_diff(lp.t(), lp.view());
        let r4 = linalg::max_abs_diff(pl.t(), pl.view());
        r1.max(r2).max(r3).max(r4)
    }

    pub fn loss_kernel(&self) -> LossKernel {
        LossKernel {
            matrix: self.pinv.clone(),
        }
    }
}

/// Independent route to `L†` for a connected graph: `(L + J/K)⁻¹ − J/K`.
pub fn pinv_closed_form(laplacian: ArrayView2<f64>) -> Result<Array2<f64>> {
    let k = laplacian.nrows();
    let j = Array2::from_elem((k, k), 1.0 / k as f64);
    let inv = linalg::invert((&laplacian + &j).view())?;
    Ok(inv - j)
}

/// The symmetric PSD matrix the regularizers use as their quadratic kernel:
/// `L†` of some graph, or the identity for the no-graph ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct LossKernel {
    matrix: Array2<f64>,
}

impl LossKernel {
    pub fn identity(num_levels: usize) -> Self {
        LossKernel {
            matrix: Array2::eye(num_levels),
        }
    }

    pub fn num_levels(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn quadratic_form(&self, v: ArrayView1<f64>) -> f64 {
        linalg::quadratic(self.matrix.view(), v)
    }

    pub fn apply(&self, v: ArrayView1<f64>) -> Array1<f64> {
        self.matrix.dot(&v)
    }
}

impl From<&LaplacianKernel> for LossKernel {
    fn from(k: &LaplacianKernel) -> Self {
        k.loss_kernel()
    }
}

/// Which loss kernel an experiment arm uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelPreset {
    Graph(GraphPreset),
    /// "w/o G": identity in place of `L†`.
    Identity,
}

impl KernelPreset {
    pub fn build(self, num_levels: usize) -> Result<LossKernel> {
        match self {
            KernelPreset::Graph(p) => Ok(LaplacianKernel::new(&p.build(num_levels)?)?.loss_kernel()),
            KernelPreset::Identity => {
                check_size(num_levels)?;
                Ok(LossKernel::identity(num_levels))
            }
        }
    }
}

impl fmt::Display for KernelPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelPreset::Graph(p) => p.fmt(f),
            KernelPreset::Identity => f.write_str("identity"),
        }
    }
}

impl FromStr for KernelPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "none" | "wo_g" => Ok(KernelPreset::Identity),
            other => other.parse().map(KernelPreset::Graph),
        }
    }
}

impl Serialize for KernelPreset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for KernelPreset {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-vertex cumulative transition weights of the weighted random walk.
struct WalkTable {
    neighbors: Vec<Vec<usize>>,
    cumulative: Vec<Vec<f64>>,
}

impl WalkTable {
    fn new(graph: &EmotionGraph) -> Self {
        let k = graph.num_levels();
        let mut neighbors = Vec::with_capacity(k);
        let mut cumulative = Vec::with_capacity(k);
        for u in 0..k {
            let mut nb = Vec::new();
            let mut cum = Vec::new();
            let mut acc = 0.0;
            for v in 0..k {
                let w = graph.weights[[u, v]];
                if w > 0.0 {
                    acc += w;
                    nb.push(v);
                    cum.push(acc);
                }
            }
            neighbors.push(nb);
            cumulative.push(cum);
        }
        WalkTable { neighbors, cumulative }
    }

    fn step<R: Rng>(&self, from: usize, rng: &mut R) -> usize {
        let cum = &self.cumulative[from];
        let total = *cum.last().expect("connected graph has no isolated vertex");
        let u = rng.random::<f64>() * total;
        let pos = cum.partition_point(|&c| c <= u);
        self.neighbors[from][pos.min(cum.len() - 1)]
    }

    fn steps_until<R: Rng>(&self, mut at: usize, target: usize, rng: &mut R) -> u64 {
        let mut n = 0;
        while at != target {
            at = self.step(at, rng);
            n += 1;
        }
        n
    }
}

const WALK_CHUNK: usize = 1024;

/// Mean round-trip step count `i → j → i` over `num_walks` weighted random
/// walks. Walk `w` draws from ChaCha stream `w` of `seed`, so the estimate is
/// identical for any thread count.
pub fn monte_carlo_commute(
    graph: &EmotionGraph,
    i: usize,
    j: usize,
    num_walks: usize,
    seed: u64,
) -> Result<f64> {
    monte_carlo_commute_with(graph, i, j, num_walks, seed, Exec::default())
}

pub fn monte_carlo_commute_with(
    graph: &EmotionGraph,
    i: usize,
    j: usize,
    num_walks: usize,
    seed: u64,
    exec: Exec,
) -> Result<f64> {
    let k = graph.num_levels();
    for idx in [i, j] {
        if idx >= k {
            return Err(Error::InvalidIndex { index: idx, num_levels: k });
        }
    }
    if num_walks == 0 {
        return Err(Error::InvalidSize("need at least one walk".into()));
    }
    if i == j {
        return Ok(0.0);
    }
    let table = WalkTable::new(graph);
    let base = ChaCha8Rng::seed_from_u64(seed);
    let chunks = num_walks.div_ceil(WALK_CHUNK);
    let totals = exec.map_indexed(chunks, |c| {
        let start = c * WALK_CHUNK;
        let end = (start + WALK_CHUNK).min(num_walks);
        let mut sum = 0u64;
        for w in start..end {
            let mut rng = base.clone();
            rng.set_stream(w as u64);
            sum += table.steps_until(i, j, &mut rng);
            sum += table.steps_until(j, i, &mut rng);
        }
        sum
    });
    let total: u64 = totals.iter().sum();
    Ok(total as f64 / num_walks as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn unit_path(k: usize) -> EmotionGraph {
        GraphPreset::G0.build(k).unwrap()
    }

    #[test]
    fn line_graph_two_levels_laplacian() {
        let g = EmotionGraph::line_graph(2, &[1.0]).unwrap();
        assert_eq!(g.laplacian(), array![[1.0, -1.0], [-1.0, 1.0]]);
        assert_eq!(g, EmotionGraph::complete_graph(2, 1.0).unwrap());
    }

    #[test]
    fn line_graph_errors() {
        assert!(matches!(EmotionGraph::line_graph(1, &[]), Err(Error::InvalidSize(_))));
        assert!(matches!(
            EmotionGraph::line_graph(3, &[1.0, 0.0]),
            Err(Error::InvalidWeight(_))
        ));
        assert!(matches!(
            EmotionGraph::line_graph(3, &[1.0, -2.0]),
            Err(Error::InvalidWeight(_))
        ));
        assert!(matches!(
            EmotionGraph::complete_graph(3, 0.0),
            Err(Error::InvalidWeight(_))
        ));
    }

    #[test]
    fn presets_match_ablation_weights() {
        let g1 = GraphPreset::G1.build(5).unwrap();
        let g2 = GraphPreset::G2.build(5).unwrap();
        let w1: Vec<f64> = (0..4).map(|i| g1.weights()[[i, i + 1]]).collect();
        let w2: Vec<f64> = (0..4).map(|i| g2.weights()[[i, i + 1]]).collect();
        assert_eq!(w1, vec![0.5, 1.0, 1.0, 0.5]);
        assert_eq!(w2, vec![1.0, 0.5, 0.5, 1.0]);
        let ga = GraphPreset::Ga.build(3).unwrap();
        assert_eq!(ga.weights(), array![[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]);
    }

    #[test]
    fn from_weight_matrix_validation() {
        let disconnected = Array2::<f64>::zeros((3, 3));
        assert!(matches!(
            EmotionGraph::from_weight_matrix(disconnected),
            Err(Error::DisconnectedGraph(_))
        ));
        let asym = array![[0.0, 1.0], [2.0, 0.0]];
        assert!(matches!(
            EmotionGraph::from_weight_matrix(asym),
            Err(Error::InvalidMatrix(_))
        ));
        let neg = array![[0.0, -1.0], [-1.0, 0.0]];
        assert!(matches!(
            EmotionGraph::from_weight_matrix(neg),
            Err(Error::InvalidWeight(_))
        ));
        let g = EmotionGraph::line_graph(3, &[1.0, 1.0]).unwrap();
        let back = EmotionGraph::from_weight_matrix(g.weights().to_owned()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn json_roundtrip_and_schema() {
        let g = GraphPreset::G2.build(4).unwrap();
        let json = g.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["num_levels"], 4);
        assert_eq!(v["weights"][1][2], 0.5);
        let back: EmotionGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
        let bad = r#"{"num_levels": 2, "weights": [[0, 1], [2, 0]]}"#;
        assert!(serde_json::from_str::<EmotionGraph>(bad).is_err());
    }

    #[test]
    fn kernel_of_three_level_path() {
        let k = LaplacianKernel::new(&unit_path(3)).unwrap();
        assert_eq!(k.laplacian(), array![[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]]);
        assert_eq!(k.volume(), 4.0);
        assert_eq!(k.nullity(), 1);
        assert!((k.commute_distance(0, 2).unwrap() - 8.0).abs() < 1e-9);
    }

    #[test]
    fn kernel_matches_closed_form_on_unit_path() {
        let k = LaplacianKernel::new(&unit_path(5)).unwrap();
        let closed = pinv_closed_form(k.laplacian()).unwrap();
        assert!(linalg::max_abs_diff(k.pinv(), closed.view()) < 1e-9);
        assert!(k.moore_penrose_residual() < 1e-9);
        let ones = Array1::<f64>::ones(5);
        assert!(k.pinv().dot(&ones).iter().all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn commute_distances_on_unit_path() {
        let k = LaplacianKernel::new(&unit_path(5)).unwrap();
        assert_eq!(k.volume(), 8.0);
        assert!((k.commute_distance(0, 1).unwrap() - 8.0).abs() < 1e-9);
        assert!((k.commute_distance(0, 4).unwrap() - 32.0).abs() < 1e-9);
        assert_eq!(k.commute_distance(3, 3).unwrap(), 0.0);
        assert!(matches!(
            k.commute_distance(0, 5),
            Err(Error::InvalidIndex { index: 5, num_levels: 5 })
        ));
    }

    #[test]
    fn quadratic_form_examples() {
        let k = LaplacianKernel::new(&unit_path(5)).unwrap();
        assert_eq!(k.quadratic_form(Array1::zeros(5).view()).unwrap(), 0.0);
        for i in 0..5 {
            for j in 0..5 {
                let mut v = Array1::<f64>::zeros(5);
                v[i] += 1.0;
                v[j] -= 1.0;
                let q = k.quadratic_form(v.view()).unwrap();
                assert!((q - (i as f64 - j as f64).abs()).abs() < 1e-9);
            }
        }
        let v = array![0.3, -1.0, 2.0, 0.0, 0.7];
        let shifted = &v + 3.0;
        let a = k.quadratic_form(v.view()).unwrap();
        let b = k.quadratic_form(shifted.view()).unwrap();
        assert!((a - b).abs() < 1e-9);
        assert!(matches!(
            k.quadratic_form(Array1::zeros(4).view()),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn cutoff_must_be_in_unit_interval() {
        let g = unit_path(3);
        assert!(LaplacianKernel::build(&g, 0.0).is_err());
        assert!(LaplacianKernel::build(&g, 1.0).is_err());
    }

    #[test]
    fn kernel_preset_parsing() {
        assert_eq!("identity".parse::<KernelPreset>().unwrap(), KernelPreset::Identity);
        assert_eq!("G2".parse::<KernelPreset>().unwrap(), KernelPreset::Graph(GraphPreset::G2));
        assert!("g9".parse::<KernelPreset>().is_err());
        assert_eq!(KernelPreset::Identity.build(4).unwrap(), LossKernel::identity(4));
    }

    #[test]
    fn monte_carlo_trivial_and_deterministic() {
        let g = unit_path(5);
        assert_eq!(monte_carlo_commute(&g, 2, 2, 10, 1).unwrap(), 0.0);
        let a = monte_carlo_commute_with(&g, 0, 3, 3000, 9, Exec::Sequential).unwrap();
        let b = monte_carlo_commute_with(&g, 0, 3, 3000, 9, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        // adjacent levels on a two-level graph: always exactly 2 steps
        let two = unit_path(2);
        assert_eq!(monte_carlo_commute(&two, 0, 1, 100, 3).unwrap(), 2.0);
    }

    #[test]
    fn monte_carlo_agrees_with_formula() {
        let g = unit_path(5);
        let k = LaplacianKernel::new(&g).unwrap();
        for (i, j) in [(0, 1), (0, 4)] {
            let mc = monte_carlo_commute(&g, i, j, 100_000, 42).unwrap();
            let exact = k.commute_distance(i, j).unwrap();
            assert!((mc - exact).abs() / exact < 0.05, "{i}-{j}: {mc} vs {exact}");
        }
    }
}
