//! Result records, aggregation across seeds, and the comparison table.
//!
//! Records are JSON lines, one per (task, regime, seed). The text table has one row per regime
//! and, for every task, an accuracy and a macro-F1 column, followed by the two cross-task
//! averages. Cells show the mean over seeds (with the standard deviation when there are several
//! seeds) and the best value of each column is marked with `*`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::config::Regime;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub task: String,
    pub regime: Regime,
    pub seed: u64,
    /// Every task of the experiment that produced this record.
    pub tasks: Vec<String>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub test_size: usize,
    /// Size of the final labeled set (grows under self-learning).
    pub labeled_size: usize,
    /// Fraction of pseudo-labels matching the withheld gold labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo_label_accuracy: Option<f64>,
    pub config_hash: String,
}

impl ResultRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialises")
    }
}

pub fn parse_records<R: BufRead>(reader: R) -> CliResult<Vec<ResultRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| CliError::format(format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn records_to_jsonl(records: &[ResultRecord]) -> String {
    records.iter().map(|r| r.to_json_line() + "\n").collect()
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub regime: Regime,
    pub task: String,
    pub seeds: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub macro_f1_mean: f64,
    pub macro_f1_std: f64,
}

/// Records from one or more result files, merged and in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultSet {
    pub tasks: Vec<String>,
    pub records: Vec<ResultRecord>,
}

impl ResultSet {
    /// Merges records that share one task set.
    ///
    /// Identical duplicates collapse; two different records for the same task, regime and seed
    /// are a merge error, as is a mix of task sets.
    pub fn merge(records: Vec<ResultRecord>) -> CliResult<ResultSet> {
        let Some(first) = records.first() else {
            return Err(CliError::runtime("no result records to report"));
        };
        let tasks = first.tasks.clone();
        let mut keyed: BTreeMap<(Regime, u64, usize), ResultRecord> = BTreeMap::new();
        for r in records {
            if r.tasks != tasks {
                return Err(CliError::runtime(format!(
                    "cannot merge results for task sets [{}] and [{}]",
                    tasks.join(", "),
                    r.tasks.join(", ")
                )));
            }
            let pos = tasks
                .iter()
                .position(|t| *t == r.task)
                .ok_or_else(|| CliError::format(format!("record task {} is not in its task set", r.task)))?;
            let key = (r.regime, r.seed, pos);
            match keyed.get(&key) {
                Some(existing) if *existing != r => {
                    return Err(CliError::runtime(format!(
                        "conflicting records for {} / {} / seed {}",
                        r.regime, r.task, r.seed
                    )))
                }
                _ => {
                    keyed.insert(key, r);
                }
            }
        }
        Ok(ResultSet {
            tasks,
            records: keyed.into_values().collect(),
        })
    }

    pub fn regimes(&self) -> Vec<Regime> {
        self.records.iter().map(|r| r.regime).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut out = Vec::new();
        for regime in self.regimes() {
            for task in &self.tasks {
                let rs: Vec<&ResultRecord> = self.records.iter().filter(|r| r.regime == regime && r.task == *task).collect();
                if rs.is_empty() {
                    continue;
                }
                let (am, asd) = mean_std(&rs.iter().map(|r| r.accuracy).collect::<Vec<_>>());
                let (fm, fsd) = mean_std(&rs.iter().map(|r| r.macro_f1).collect::<Vec<_>>());
                out.push(Aggregate {
                    regime,
                    task: task.clone(),
                    seeds: rs.len(),
                    accuracy_mean: am,
                    accuracy_std: asd,
                    macro_f1_mean: fm,
                    macro_f1_std: fsd,
                });
            }
        }
        out
    }

    /// Plain-text comparison table.
    pub fn render_table(&self) -> String {
        let aggregates = self.aggregates();
        let regimes = self.regimes();
        let multi_seed = aggregates.iter().any(|a| a.seeds > 1);
        // columns: per task (acc, maf1), then average (acc, maf1)
        let ncols = 2 * self.tasks.len() + 2;
        let mut cells: Vec<Vec<Option<(f64, f64)>>> = Vec::new();
        for &regime in &regimes {
            let mut row = Vec::with_capacity(ncols);
            let mut accs = Vec::new();
            let mut f1s = Vec::new();
            for task in &self.tasks {
                match aggregates.iter().find(|a| a.regime == regime && a.task == *task) {
                    Some(a) => {
                        row.push(Some((a.accuracy_mean, a.accuracy_std)));
                        row.push(Some((a.macro_f1_mean, a.macro_f1_std)));
                        accs.push(a.accuracy_mean);
                        f1s.push(a.macro_f1_mean);
                    }
                    None => row.extend([None, None]),
                }
            }
            let complete = accs.len() == self.tasks.len();
            let avg = |v: &[f64]| complete.then(|| (v.iter().sum::<f64>() / v.len() as f64, f64::NAN));
            row.push(avg(&accs));
            row.push(avg(&f1s));
            cells.push(row);
        }
        let best: Vec<Option<f64>> = (0..ncols)
            .map(|c| cells.iter().filter_map(|row| row[c].map(|v| v.0)).reduce(f64::max))
            .collect();

        let fmt_cell = |v: Option<(f64, f64)>, best: Option<f64>| match v {
            None => "-".to_string(),
            Some((m, sd)) => {
                let mark = if Some(m) == best { "*" } else { "" };
                if multi_seed && !sd.is_nan() {
                    format!("{m:.3}±{sd:.3}{mark}")
                } else {
                    format!("{m:.3}{mark}")
                }
            }
        };
        let mut headers = vec!["regime".to_string()];
        let mut groups = vec![String::new()];
        for task in &self.tasks {
            groups.extend([task.clone(), String::new()]);
            headers.extend(["Acc".to_string(), "MaF1".to_string()]);
        }
        groups.extend(["average".to_string(), String::new()]);
        headers.extend(["Acc".to_string(), "MaF1".to_string()]);
        let mut rows: Vec<Vec<String>> = vec![groups, headers];
        for (regime, row) in regimes.iter().zip(&cells) {
            let mut line = vec![regime.as_str().to_string()];
            line.extend(row.iter().zip(&best).map(|(v, b)| fmt_cell(*v, *b)));
            rows.push(line);
        }
        let mut widths: Vec<usize> = (0..=ncols)
            .map(|c| rows[1..].iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        // a group label spans its two columns and the two-space gap between them
        for g in 0..=self.tasks.len() {
            let (a, b) = (1 + 2 * g, 2 + 2 * g);
            let label = rows[0][a].chars().count();
            if widths[a] + 2 + widths[b] < label {
                widths[b] = label - widths[a] - 2;
            }
        }
        let mut out = String::new();
        for (i, row) in rows.iter().enumerate() {
            let mut line = format!("{:<w$}", row[0], w = widths[0]);
            let mut c = 1;
            while c <= ncols {
                line.push_str(" | ");
                if i == 0 {
                    let _ = write!(line, "{:<w$}", row[c], w = widths[c] + 2 + widths[c + 1]);
                } else {
                    let _ = write!(line, "{:<w1$}  {:<w2$}", row[c], row[c + 1], w1 = widths[c], w2 = widths[c + 1]);
                }
                c += 2;
            }
            let _ = writeln!(out, "{}", line.trim_end());
            if i == 1 {
                let _ = writeln!(out, "{}", "-".repeat(line.trim_end().chars().count()));
            }
        }
        out
    }
}
