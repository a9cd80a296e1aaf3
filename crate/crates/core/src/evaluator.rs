//! Top-k accuracy and report rendering.
//!
//! Top-k is the share of evaluated sign images whose ground-truth class is
//! among the first k ranked candidates. Records with an empty ranking (parse
//! failures) stay in the denominator and count as wrong at every k.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::recognizer::Variant;

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("no records to evaluate")]
    NoRecords,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("no reports to render")]
    NoReports,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: String,
    pub ground_truth_class: String,
    pub ranked: Vec<String>,
}

impl EvalRecord {
    pub fn hit_at(&self, k: usize) -> bool {
        self.ranked.iter().take(k).any(|c| *c == self.ground_truth_class)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTally {
    pub n: usize,
    pub top1_correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_name: String,
    pub strategy: String,
    pub n_samples: usize,
    pub topk: BTreeMap<usize, f64>,
    pub per_class: BTreeMap<String, ClassTally>,
    pub parse_failures: usize,
}

pub fn top_k_accuracy(records: &[EvalRecord], k: usize) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    let hits = records.iter().filter(|r| r.hit_at(k)).count();
    Ok(hits as f64 / records.len() as f64)
}

/// Report over `ks` (the default 1/5/10 are always included).
pub fn build_report(
    records: &[EvalRecord],
    dataset_name: &str,
    strategy: &str,
    ks: &[usize],
) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let mut all_ks: Vec<usize> = DEFAULT_KS.iter().chain(ks).copied().collect();
    all_ks.sort_unstable();
    all_ks.dedup();
    let topk = all_ks
        .into_iter()
        .map(|k| top_k_accuracy(records, k).map(|a| (k, a)))
        .collect::<Result<_, _>>()?;

    let mut per_class: BTreeMap<String, ClassTally> = BTreeMap::new();
    for r in records {
        let t = per_class.entry(r.ground_truth_class.clone()).or_default();
        t.n += 1;
        t.top1_correct += usize::from(r.hit_at(1));
    }
    Ok(EvalReport {
        dataset_name: dataset_name.to_string(),
        strategy: strategy.to_string(),
        n_samples: records.len(),
        topk,
        per_class,
        parse_failures: records.iter().filter(|r| r.ranked.is_empty()).count(),
    })
}

fn strategy_order(s: &str) -> (usize, String) {
    let rank = s
        .parse::<Variant>()
        .map(|v| v as usize)
        .unwrap_or(Variant::ALL.len());
    (rank, s.to_string())
}

/// One row per strategy (baseline_o, baseline, full, then others by name),
/// one column group per dataset in first-seen order, values to two decimals.
pub fn render_table(reports: &[EvalReport]) -> Result<String, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::NoReports);
    }
    let mut datasets: Vec<&str> = Vec::new();
    let mut ks: Vec<usize> = Vec::new();
    for r in reports {
        if !datasets.contains(&r.dataset_name.as_str()) {
            datasets.push(&r.dataset_name);
        }
        ks.extend(r.topk.keys().copied());
    }
    ks.sort_unstable();
    ks.dedup();
    let mut strategies: Vec<&str> = reports.iter().map(|r| r.strategy.as_str()).collect();
    strategies.sort_by_key(|s| strategy_order(s));
    strategies.dedup();

    let labels: Vec<String> = ks.iter().map(|k| format!("Top{k}")).collect();
    let cells_width = labels.iter().map(String::len).sum::<usize>() + labels.len() - 1;
    let group_width: Vec<usize> = datasets.iter().map(|d| d.len().max(cells_width)).collect();
    let method_width = strategies.iter().map(|s| s.len()).max().unwrap_or(0).max("Method".len());

    let mut lines = Vec::new();
    let mut head = format!("{:<method_width$}", "Method");
    let mut sub = " ".repeat(method_width);
    for (d, &w) in datasets.iter().zip(&group_width) {
        write!(head, " | {d:<w$}").unwrap();
        write!(sub, " | {:<w$}", labels.join(" ")).unwrap();
    }
    lines.push(head);
    lines.push(sub);
    lines.push("-".repeat(lines[0].len()));

    for s in &strategies {
        let mut row = format!("{s:<method_width$}");
        for (d, &w) in datasets.iter().zip(&group_width) {
            let report = reports
                .iter()
                .find(|r| r.strategy == *s && r.dataset_name == *d);
            let cells: Vec<String> = ks
                .iter()
                .zip(&labels)
                .map(|(k, label)| {
                    let v = report
                        .and_then(|r| r.topk.get(k))
                        .map(|a| format!("{a:.2}"))
                        .unwrap_or_else(|| "-".to_string());
                    format!("{v:<width$}", width = label.len())
                })
                .collect();
            write!(row, " | {:<w$}", cells.join(" ")).unwrap();
        }
        lines.push(row);
    }
    let mut out = String::new();
    for l in lines {
        out.push_str(l.trim_end());
        out.push('\n');
    }
    Ok(out)
}
