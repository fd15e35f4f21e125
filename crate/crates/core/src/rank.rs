//! Borda-count rank aggregation over a long-format metric table.
//!
//! Values are averaged over subjects, methods are ranked within each
//! condition (ties get the average rank), rank points are summed across
//! conditions with equal weight and re-ranked. The five per-metric ranks are
//! then combined as `0.25·(R_F1 + R_Top2) + (1/6)·(R_Ac + R_vd + R_δd)`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{ALL_METRICS, A_C, DELTA_D, F1, TOP2, V_D};

pub const QUANTITATIVE_WEIGHT: f64 = 0.25;
pub const QUALITATIVE_WEIGHT: f64 = 1.0 / 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MetricKey {
    pub method: String,
    pub subject: String,
    pub condition: String,
    pub metric: String,
}

/// `(method, subject, condition, metric) → value`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    entries: BTreeMap<MetricKey, f64>,
    directions: BTreeMap<String, Direction>,
}

impl Default for MetricTable {
    fn default() -> Self {
        Self::new()
    }
}

impl MetricTable {
    /// Empty table with the five consistency metrics registered.
    pub fn new() -> Self {
        let directions = [
            (F1, Direction::HigherBetter),
            (TOP2, Direction::HigherBetter),
            (A_C, Direction::LowerBetter),
            (V_D, Direction::LowerBetter),
            (DELTA_D, Direction::LowerBetter),
        ]
        .into_iter()
        .map(|(m, d)| (m.to_string(), d))
        .collect();
        MetricTable {
            entries: BTreeMap::new(),
            directions,
        }
    }

    pub fn set_direction(&mut self, metric: &str, direction: Direction) {
        self.directions.insert(metric.to_string(), direction);
    }

    pub fn direction(&self, metric: &str) -> Option<Direction> {
        self.directions.get(metric).copied()
    }

    pub fn insert(&mut self, method: &str, subject: &str, condition: &str, metric: &str, value: f64) -> Result<()> {
        let key = MetricKey {
            method: method.into(),
            subject: subject.into(),
            condition: condition.into(),
            metric: metric.into(),
        };
        if self.entries.contains_key(&key) {
            return Err(Error::DuplicateEntry(format!(
                "{method}/{subject}/{condition}/{metric}"
            )));
        }
        self.entries.insert(key, value);
        Ok(())
    }

    pub fn get(&self, method: &str, subject: &str, condition: &str, metric: &str) -> Option<f64> {
        self.entries
            .get(&MetricKey {
                method: method.into(),
                subject: subject.into(),
                condition: condition.into(),
                metric: metric.into(),
            })
            .copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&MetricKey, f64)> {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    /// Reads `method,subject,condition,metric,value`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut table = MetricTable::new();
        for rec in rdr.deserialize::<CsvRow>() {
            let row = rec.map_err(|e| Error::parse("metric table", e))?;
            table.insert(&row.method, &row.subject, &row.condition, &row.metric, row.value)?;
        }
        Ok(table)
    }

    /// Writes rows sorted by key; values use shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (k, v) in &self.entries {
            w.serialize(CsvRow {
                method: k.method.clone(),
                subject: k.subject.clone(),
                condition: k.condition.clone(),
                metric: k.metric.clone(),
                value: *v,
            })
            .map_err(|e| Error::parse("metric table", e))?;
        }
        w.flush().map_err(|e| Error::io("metric table", e))?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    method: String,
    subject: String,
    condition: String,
    metric: String,
    value: f64,
}

/// Subject-averaged table: `(method, condition, metric) → mean`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTable {
    pub values: BTreeMap<(String, String, String), f64>,
    pub methods: Vec<String>,
    pub conditions: Vec<String>,
    pub metrics: Vec<String>,
    directions: BTreeMap<String, Direction>,
}

impl ReducedTable {
    pub fn get(&self, method: &str, condition: &str, metric: &str) -> Option<f64> {
        self.values
            .get(&(method.to_string(), condition.to_string(), metric.to_string()))
            .copied()
    }
}

/// Averages over subjects; every (method, subject, condition, metric) cell of
/// the full grid must be present.
pub fn mean_over_subjects(table: &MetricTable) -> Result<ReducedTable> {
    let mut methods = BTreeSet::new();
    let mut subjects = BTreeSet::new();
    let mut conditions = BTreeSet::new();
    let mut metrics = BTreeSet::new();
    for k in table.entries.keys() {
        methods.insert(k.method.clone());
        subjects.insert(k.subject.clone());
        conditions.insert(k.condition.clone());
        metrics.insert(k.metric.clone());
    }
    let mut missing = Vec::new();
    let mut values = BTreeMap::new();
    for m in &methods {
        for c in &conditions {
            for mt in &metrics {
                let mut sum = 0.0;
                for s in &subjects {
                    match table.get(m, s, c, mt) {
                        Some(v) => sum += v,
                        None => missing.push(format!("method={m} subject={s} condition={c} metric={mt}")),
                    }
                }
                values.insert((m.clone(), c.clone(), mt.clone()), sum / subjects.len() as f64);
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteTable(missing));
    }
    Ok(ReducedTable {
        values,
        methods: methods.into_iter().collect(),
        conditions: conditions.into_iter().collect(),
        metrics: metrics.into_iter().collect(),
        directions: table.directions.clone(),
    })
}

/// Ranks `scores` (1 = best), ties sharing the mean of the ranks they span.
pub fn average_ranks(scores: &[f64], direction: Direction) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let c = scores[a].total_cmp(&scores[b]);
        match direction {
            Direction::LowerBetter => c,
            Direction::HigherBetter => c.reverse(),
        }
    });
    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Within-condition ranks for one metric: `condition → method → rank`.
pub fn condition_ranks(reduced: &ReducedTable, metric: &str) -> Result<BTreeMap<String, BTreeMap<String, f64>>> {
    let direction = reduced
        .directions
        .get(metric)
        .copied()
        .ok_or_else(|| Error::UnknownMetric(metric.to_string()))?;
    let mut out = BTreeMap::new();
    for c in &reduced.conditions {
        let mut scores = Vec::with_capacity(reduced.methods.len());
        for m in &reduced.methods {
            scores.push(reduced.get(m, c, metric).ok_or_else(|| {
                Error::IncompleteTable(vec![format!("method={m} condition={c} metric={metric}")])
            })?);
        }
        let ranks = average_ranks(&scores, direction);
        out.insert(
            c.clone(),
            reduced.methods.iter().cloned().zip(ranks).collect::<BTreeMap<_, _>>(),
        );
    }
    Ok(out)
}

/// Equal-weight Borda count across conditions, re-ranked to `1..M`.
pub fn borda_ranks(reduced: &ReducedTable, metric: &str) -> Result<BTreeMap<String, f64>> {
    let per_condition = condition_ranks(reduced, metric)?;
    let totals: Vec<f64> = reduced
        .methods
        .iter()
        .map(|m| per_condition.values().map(|r| r[m]).sum())
        .collect();
    let ranks = average_ranks(&totals, Direction::LowerBetter);
    Ok(reduced.methods.iter().cloned().zip(ranks).collect())
}

/// `0.25·(R_F1 + R_Top2) + (1/6)·(R_Ac + R_vd + R_δd)`.
pub fn weighted_aggregate(ranks: &BTreeMap<String, f64>) -> Result<f64> {
    let missing: Vec<String> = ALL_METRICS
        .iter()
        .filter(|m| !ranks.contains_key(**m))
        .map(|m| m.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteRanks(missing));
    }
    if let Some(extra) = ranks.keys().find(|k| !ALL_METRICS.contains(&k.as_str())) {
        return Err(Error::UnknownMetric(extra.clone()));
    }
    Ok(QUANTITATIVE_WEIGHT * (ranks[F1] + ranks[TOP2])
        + QUALITATIVE_WEIGHT * (ranks[A_C] + ranks[V_D] + ranks[DELTA_D]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankTable {
    pub methods: Vec<String>,
    /// `metric → method → Borda rank`.
    pub metric_ranks: BTreeMap<String, BTreeMap<String, f64>>,
    /// `method → weighted aggregate rank`.
    pub aggregate: BTreeMap<String, f64>,
    /// `method → final rank` from ordering the aggregates.
    pub overall: BTreeMap<String, f64>,
}

pub fn rank_table(table: &MetricTable) -> Result<RankTable> {
    let reduced = mean_over_subjects(table)?;
    let mut metric_ranks = BTreeMap::new();
    for m in ALL_METRICS {
        metric_ranks.insert(m.to_string(), borda_ranks(&reduced, m)?);
    }
    let mut aggregate = BTreeMap::new();
    for method in &reduced.methods {
        let v: BTreeMap<String, f64> = metric_ranks
            .iter()
            .map(|(metric, r)| (metric.clone(), r[method]))
            .collect();
        aggregate.insert(method.clone(), weighted_aggregate(&v)?);
    }
    let agg: Vec<f64> = reduced.methods.iter().map(|m| aggregate[m]).collect();
    let overall = reduced
        .methods
        .iter()
        .cloned()
        .zip(average_ranks(&agg, Direction::LowerBetter))
        .collect();
    Ok(RankTable {
        methods: reduced.methods.clone(),
        metric_ranks,
        aggregate,
        overall,
    })
}

impl RankTable {
    /// `method,f1,top2,a_c,v_d,delta_d,aggregate,overall_rank`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["method".to_string()];
        header.extend(ALL_METRICS.iter().map(|m| m.to_string()));
        header.push("aggregate".into());
        header.push("overall_rank".into());
        w.write_record(&header).map_err(|e| Error::parse("ranks", e))?;
        for m in &self.methods {
            let mut rec = vec![m.clone()];
            for metric in ALL_METRICS {
                rec.push(self.metric_ranks[metric][m].to_string());
            }
            rec.push(self.aggregate[m].to_string());
            rec.push(self.overall[m].to_string());
            w.write_record(&rec).map_err(|e| Error::parse("ranks", e))?;
        }
        w.flush().map_err(|e| Error::io("ranks", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadarPolygon {
    pub method: String,
    /// `metric → M + 1 − rank`; larger is better.
    pub radii: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadarChart {
    pub num_methods: usize,
    pub metrics: Vec<String>,
    pub polygons: Vec<RadarPolygon>,
}

pub fn export_radar(ranks: &RankTable) -> RadarChart {
    let m = ranks.methods.len() as f64;
    let polygons = ranks
        .methods
        .iter()
        .map(|method| RadarPolygon {
            method: method.clone(),
            radii: ALL_METRICS
                .iter()
                .map(|metric| (metric.to_string(), m + 1.0 - ranks.metric_ranks[*metric][method]))
                .collect(),
        })
        .collect();
    RadarChart {
        num_methods: ranks.methods.len(),
        metrics: ALL_METRICS.iter().map(|s| s.to_string()).collect(),
        polygons,
    }
}
