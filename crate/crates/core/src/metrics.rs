//! Statistical rule quality over a dataset.
//!
//! All support terms are fractions of `|D|`. Confidence divides by the
//! antecedent's support. Undefined values (zero denominators) are `None` and
//! are left out of averages.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bitset::RowSet;
use crate::data::{Dataset, Item};
use crate::exec::Exec;
use crate::rules::{Rule, RuleSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleStats {
    pub support: f64,
    pub confidence: Option<f64>,
    pub zhang: Option<f64>,
    pub interestingness: Option<f64>,
}

/// Precomputed per-item row sets for one dataset.
pub struct RuleEvaluator<'a> {
    dataset: &'a Dataset,
    item_rows: Vec<RowSet>,
}

impl<'a> RuleEvaluator<'a> {
    pub fn new(dataset: &'a Dataset) -> Self {
        RuleEvaluator {
            dataset,
            item_rows: dataset.item_rows(),
        }
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    fn n(&self) -> f64 {
        self.dataset.n() as f64
    }

    /// Rows containing every item.
    pub fn rows_with(&self, items: &[Item]) -> RowSet {
        let mut rows = RowSet::full(self.dataset.n());
        for i in items {
            rows.intersect_with(&self.item_rows[i.0]);
        }
        rows
    }

    pub fn count(&self, items: &[Item]) -> usize {
        match items {
            [] => self.dataset.n(),
            [i] => self.item_rows[i.0].count(),
            _ => self.rows_with(items).count(),
        }
    }

    pub fn itemset_support(&self, items: &[Item]) -> f64 {
        if self.dataset.is_empty() {
            return 0.0;
        }
        self.count(items) as f64 / self.n()
    }

    pub fn support(&self, rule: &Rule) -> f64 {
        self.itemset_support(&rule.items())
    }

    pub fn confidence(&self, rule: &Rule) -> Option<f64> {
        let x = self.count(&rule.antecedent);
        (x > 0).then(|| self.count(&rule.items()) as f64 / x as f64)
    }

    /// `(conf(X→Y) − conf(¬X→Y)) / max(conf(X→Y), conf(¬X→Y))`.
    pub fn zhang(&self, rule: &Rule) -> Option<f64> {
        let x_rows = self.rows_with(&rule.antecedent);
        let x = x_rows.count();
        let n = self.dataset.n();
        if x == 0 || x == n {
            return None;
        }
        let y = &self.item_rows[rule.consequent.0];
        let xy = x_rows.intersection_count(y);
        let not_x_y = y.count() - xy;
        let conf = xy as f64 / x as f64;
        let conf_not = not_x_y as f64 / (n - x) as f64;
        let denom = conf.max(conf_not);
        (denom > 0.0).then(|| (conf - conf_not) / denom)
    }

    /// `conf(X→Y) · sup(X∪Y)/sup(Y) · (1 − sup(X∪Y))`.
    pub fn interestingness(&self, rule: &Rule) -> Option<f64> {
        let x = self.count(&rule.antecedent);
        let y = self.count(&[rule.consequent]);
        if x == 0 || y == 0 {
            return None;
        }
        let xy = self.count(&rule.items());
        let n = self.n();
        Some((xy as f64 / x as f64) * (xy as f64 / y as f64) * (1.0 - xy as f64 / n))
    }

    pub fn stats(&self, rule: &Rule) -> RuleStats {
        RuleStats {
            support: self.support(rule),
            confidence: self.confidence(rule),
            zhang: self.zhang(rule),
            interestingness: self.interestingness(rule),
        }
    }

    /// Fraction of rows matched by at least one antecedent.
    pub fn coverage<'r>(&self, rules: impl IntoIterator<Item = &'r Rule>) -> f64 {
        if self.dataset.is_empty() {
            return 0.0;
        }
        let mut covered = RowSet::empty(self.dataset.n());
        for rule in rules {
            covered.union_with(&self.rows_with(&rule.antecedent));
        }
        covered.count() as f64 / self.n()
    }

    pub fn summarize(&self, rules: &RuleSet, exec: Exec) -> RuleSetSummary {
        let stats = exec.map(rules.rules(), |r| self.stats(r));
        RuleSetSummary::from_stats(&stats, self.coverage(rules.rules()))
    }
}

/// Mean of the defined entries and how many were undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanValue {
    pub mean: Option<f64>,
    pub undefined: usize,
}

impl MeanValue {
    fn of(values: impl Iterator<Item = Option<f64>>) -> Self {
        let (mut sum, mut count, mut undefined) = (0.0, 0usize, 0usize);
        for v in values {
            match v {
                Some(v) => {
                    sum += v;
                    count += 1;
                }
                None => undefined += 1,
            }
        }
        MeanValue {
            mean: (count > 0).then(|| sum / count as f64),
            undefined,
        }
    }
}

/// Rule-weighted means plus set-level coverage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleSetSummary {
    pub rule_count: usize,
    pub support: MeanValue,
    pub confidence: MeanValue,
    pub zhang: MeanValue,
    pub interestingness: MeanValue,
    pub coverage: f64,
}

impl RuleSetSummary {
    pub fn from_stats(stats: &[RuleStats], coverage: f64) -> Self {
        RuleSetSummary {
            rule_count: stats.len(),
            support: MeanValue::of(stats.iter().map(|s| Some(s.support))),
            confidence: MeanValue::of(stats.iter().map(|s| s.confidence)),
            zhang: MeanValue::of(stats.iter().map(|s| s.zhang)),
            interestingness: MeanValue::of(stats.iter().map(|s| s.interestingness)),
            coverage,
        }
    }

    pub const TABLE_HEADER: [&'static str; 6] = [
        "# Rules",
        "Support",
        "Confidence",
        "Zhang's metric",
        "Interestingness",
        "Coverage",
    ];

    pub fn table_cells(&self) -> [String; 6] {
        let cell = |m: MeanValue| m.mean.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        [
            self.rule_count.to_string(),
            cell(self.support),
            cell(self.confidence),
            cell(self.zhang),
            cell(self.interestingness),
            format!("{:.4}", self.coverage),
        ]
    }
}

/// Renders rows under a header as aligned text columns.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        out.push_str(padded.join("  ").trim_end());
        out.push('\n');
    };
    line(header.to_vec(), &mut out);
    for row in rows {
        line(row.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

impl fmt::Display for RuleSetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = vec![self.table_cells().to_vec()];
        f.write_str(&render_table(&Self::TABLE_HEADER, &rows))
    }
}

pub fn support(rule: &Rule, dataset: &Dataset) -> f64 {
    RuleEvaluator::new(dataset).support(rule)
}

pub fn confidence(rule: &Rule, dataset: &Dataset) -> Option<f64> {
    RuleEvaluator::new(dataset).confidence(rule)
}

pub fn zhang(rule: &Rule, dataset: &Dataset) -> Option<f64> {
    RuleEvaluator::new(dataset).zhang(rule)
}

pub fn interestingness(rule: &Rule, dataset: &Dataset) -> Option<f64> {
    RuleEvaluator::new(dataset).interestingness(rule)
}

pub fn coverage(rules: &RuleSet, dataset: &Dataset) -> f64 {
    RuleEvaluator::new(dataset).coverage(rules.rules())
}

pub fn summarize(rules: &RuleSet, dataset: &Dataset) -> RuleSetSummary {
    RuleEvaluator::new(dataset).summarize(rules, Exec::Sequential)
}
