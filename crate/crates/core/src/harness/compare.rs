use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::run::MetricsRecord;

/// Mean and sample standard deviation across seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

impl fmt::Display for Stat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6e} ± {:.3e}", self.mean, self.std)
    }
}

/// Final-window averages of one run, aggregated over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub seeds: usize,
    pub episodes: usize,
    pub final_window: usize,
    pub reward: Stat,
    pub sum_rate_bps: Stat,
    pub loss: Option<Stat>,
    pub clustering_time_s: Stat,
    /// Cumulative served users at the last episode.
    pub served_users: Stat,
}

fn window_mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Groups records by seed, averages each seed's last `final_window` episodes
/// and aggregates across seeds.
pub fn summarize(records: &[MetricsRecord], final_window: usize) -> Result<Summary> {
    let first = records.first().ok_or_else(|| Error::Config("no records to summarize".into()))?;
    let mut by_seed: BTreeMap<u64, Vec<&MetricsRecord>> = BTreeMap::new();
    for r in records {
        by_seed.entry(r.seed).or_default().push(r);
    }
    let episodes = by_seed.values().next().unwrap().len();
    if by_seed.values().any(|v| v.len() != episodes) {
        return Err(Error::Config("seeds have different episode counts".into()));
    }
    let window = final_window.min(episodes).max(1);
    let (mut reward, mut rate, mut loss, mut time, mut served) = (vec![], vec![], vec![], vec![], vec![]);
    for rows in by_seed.values_mut() {
        rows.sort_by_key(|r| r.episode);
        let tail = &rows[episodes - window..];
        reward.push(window_mean(tail.iter().map(|r| r.reward)).unwrap());
        rate.push(window_mean(tail.iter().map(|r| r.sum_rate_bps)).unwrap());
        time.push(window_mean(tail.iter().map(|r| r.clustering_time_s)).unwrap());
        served.push(rows.last().unwrap().served_users as f64);
        if let Some(l) = window_mean(tail.iter().filter_map(|r| r.loss)) {
            loss.push(l);
        }
    }
    Ok(Summary {
        scenario: first.scenario.clone(),
        seeds: by_seed.len(),
        episodes,
        final_window: window,
        reward: Stat::of(&reward),
        sum_rate_bps: Stat::of(&rate),
        loss: (!loss.is_empty()).then(|| Stat::of(&loss)),
        clustering_time_s: Stat::of(&time),
        served_users: Stat::of(&served),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub metric: &'static str,
    /// Final-window mean per run; `None` where the run has no such metric.
    pub values: Vec<Option<f64>>,
    /// Each value divided by the first run's value.
    pub ratios: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub runs: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn row(&self, metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }
}

fn ratio(v: f64, base: f64) -> f64 {
    if v == base {
        1.0
    } else {
        v / base
    }
}

/// Side-by-side final-window means with ratios against the first run.
pub fn compare_report(runs: &[Summary]) -> Result<Comparison> {
    if runs.len() < 2 {
        return Err(Error::Config("comparison needs at least two runs".into()));
    }
    if runs.iter().any(|r| r.episodes != runs[0].episodes) {
        return Err(Error::Config("runs have different episode counts".into()));
    }
    let metrics: [(&'static str, fn(&Summary) -> Option<f64>); 5] = [
        ("reward", |s| Some(s.reward.mean)),
        ("sum_rate_bps", |s| Some(s.sum_rate_bps.mean)),
        ("loss", |s| s.loss.map(|l| l.mean)),
        ("clustering_time_s", |s| Some(s.clustering_time_s.mean)),
        ("served_users", |s| Some(s.served_users.mean)),
    ];
    let rows = metrics
        .iter()
        .map(|(name, get)| {
            let values: Vec<Option<f64>> = runs.iter().map(get).collect();
            let ratios = values
                .iter()
                .map(|v| Some(ratio((*v)?, values[0]?)))
                .collect();
            ComparisonRow {
                metric: name,
                values,
                ratios,
            }
        })
        .collect();
    Ok(Comparison {
        runs: runs.iter().map(|r| r.scenario.clone()).collect(),
        rows,
    })
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |v: Option<f64>, r: Option<f64>| match (v, r) {
            (Some(v), Some(r)) => format!("{v:.6e} ({r:.3}x)"),
            (Some(v), None) => format!("{v:.6e}"),
            _ => "-".to_string(),
        };
        let mut table: Vec<Vec<String>> = vec![std::iter::once("metric".to_string())
            .chain(self.runs.iter().cloned())
            .collect()];
        for row in &self.rows {
            table.push(
                std::iter::once(row.metric.to_string())
                    .chain(row.values.iter().zip(&row.ratios).map(|(&v, &r)| cell(v, r)))
                    .collect(),
            );
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        for row in table {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s:<w$}"))
                .collect();
            writeln!(f, "{}", line.join("  ").trim_end())?;
        }
        Ok(())
    }
}
