//! Exhaustive support/confidence mining with levelwise (apriori) candidate generation.

use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

use crate::bitset::RowSet;
use crate::data::{Dataset, Item, ItemUniverse};
use crate::exec::Exec;
use crate::rules::{sort_itemsets, FrequentItemset, Provenance, Rule, RuleSet};

pub const MINER_ID: &str = "apriori";

#[derive(Debug, Error, PartialEq)]
#[error("{0}")]
pub struct ParamError(pub String);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinerParams {
    pub min_support: f64,
    pub min_confidence: f64,
    pub max_antecedents: usize,
}

impl MinerParams {
    pub fn new(min_support: f64, min_confidence: f64, max_antecedents: usize) -> Result<Self, ParamError> {
        let p = MinerParams {
            min_support,
            min_confidence,
            max_antecedents,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        check_unit("min_support", self.min_support)?;
        check_unit("min_confidence", self.min_confidence)?;
        if self.max_antecedents == 0 {
            return Err(ParamError("max_antecedents must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_unit(name: &str, v: f64) -> Result<(), ParamError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ParamError(format!("{name} must be in [0, 1], got {v}")))
    }
}

struct Frequent {
    items: Vec<Item>,
    rows: RowSet,
}

fn is_frequent(count: usize, n: usize, min_support: f64) -> bool {
    count > 0 && count as f64 / n as f64 >= min_support
}

/// Itemsets present in at least one row with support `≥ min_support`, of
/// size `1..=max_size`, grouped by size.
fn levels(dataset: &Dataset, min_support: f64, max_size: usize, exec: Exec) -> Vec<Vec<Frequent>> {
    let universe = dataset.universe();
    let n = dataset.n();
    let item_rows = dataset.item_rows();
    let mut current: Vec<Frequent> = item_rows
        .iter()
        .enumerate()
        .filter(|(_, rows)| is_frequent(rows.count(), n, min_support))
        .map(|(i, rows)| Frequent {
            items: vec![Item(i)],
            rows: rows.clone(),
        })
        .collect();
    let mut out = Vec::new();
    while !current.is_empty() {
        let size = current[0].items.len();
        if size >= max_size {
            out.push(current);
            break;
        }
        let next = next_level(universe, &current, &item_rows, n, min_support, exec);
        out.push(current);
        current = next;
    }
    out
}

fn next_level(
    universe: &ItemUniverse,
    level: &[Frequent],
    item_rows: &[RowSet],
    n: usize,
    min_support: f64,
    exec: Exec,
) -> Vec<Frequent> {
    let known: HashSet<&[Item]> = level.iter().map(|f| f.items.as_slice()).collect();
    let size = level[0].items.len();
    let mut candidates: Vec<(usize, Item)> = Vec::new();
    for (a, fa) in level.iter().enumerate() {
        for fb in &level[a + 1..] {
            if fa.items[..size - 1] != fb.items[..size - 1] {
                break;
            }
            let last_a = fa.items[size - 1];
            let last_b = fb.items[size - 1];
            if universe.feature_of(last_a) == universe.feature_of(last_b) {
                continue;
            }
            let mut joined = fa.items.clone();
            joined.push(last_b);
            let all_subsets_known = (0..size - 1).all(|drop| {
                let sub: Vec<Item> = joined
                    .iter()
                    .enumerate()
                    .filter(|&(p, _)| p != drop)
                    .map(|(_, &i)| i)
                    .collect();
                known.contains(sub.as_slice())
            });
            if all_subsets_known {
                candidates.push((a, last_b));
            }
        }
    }
    exec.map(&candidates, |&(a, extra)| {
        let mut rows = level[a].rows.clone();
        rows.intersect_with(&item_rows[extra.0]);
        let mut items = level[a].items.clone();
        items.push(extra);
        Frequent { items, rows }
    })
    .into_iter()
    .filter(|f| is_frequent(f.rows.count(), n, min_support))
    .collect()
}

/// All rules `X → y` with `1 ≤ |X| ≤ a`, a nonzero antecedent count,
/// support `≥ min_support` and confidence `≥ min_confidence`.
/// Each rule's validity is its confidence.
pub fn mine(dataset: &Dataset, params: &MinerParams, exec: Exec) -> Result<RuleSet, ParamError> {
    params.validate()?;
    let universe = dataset.universe();
    let provenance = Provenance {
        backend: MINER_ID.to_string(),
        thresholds: BTreeMap::from([
            ("min_support".to_string(), params.min_support),
            ("min_confidence".to_string(), params.min_confidence),
            ("max_antecedents".to_string(), params.max_antecedents as f64),
        ]),
        dataset_digest: dataset.digest(),
        ..Provenance::default()
    };
    if dataset.is_empty() {
        return Ok(RuleSet::new(universe, Vec::new(), provenance));
    }
    let n = dataset.n();
    let item_rows = dataset.item_rows();
    let antecedents: Vec<Frequent> = levels(dataset, params.min_support, params.max_antecedents, exec)
        .into_iter()
        .flatten()
        .collect();
    let per_antecedent = exec.map(&antecedents, |x| {
        let x_count = x.rows.count();
        let features: Vec<usize> = x.items.iter().map(|&i| universe.feature_of(i)).collect();
        let mut rules = Vec::new();
        for f in (0..universe.k()).filter(|f| !features.contains(f)) {
            for y in universe.block(f) {
                let xy = x.rows.intersection_count(&item_rows[y]);
                let support = xy as f64 / n as f64;
                let confidence = xy as f64 / x_count as f64;
                if support >= params.min_support && confidence >= params.min_confidence {
                    rules.push(Rule::new(x.items.clone(), Item(y), confidence));
                }
            }
        }
        rules
    });
    Ok(RuleSet::new(
        universe,
        per_antecedent.into_iter().flatten().collect(),
        provenance,
    ))
}

/// Itemsets of size `1..=max_size` present in at least one row with support
/// `≥ min_support`, scored by support, in canonical order.
pub fn mine_itemsets(
    dataset: &Dataset,
    min_support: f64,
    max_size: usize,
    exec: Exec,
) -> Result<Vec<FrequentItemset>, ParamError> {
    check_unit("min_support", min_support)?;
    if max_size == 0 {
        return Err(ParamError("max itemset size must be at least 1".into()));
    }
    if dataset.is_empty() {
        return Ok(Vec::new());
    }
    let n = dataset.n() as f64;
    let mut sets: Vec<FrequentItemset> = levels(dataset, min_support, max_size, exec)
        .into_iter()
        .flatten()
        .map(|f| FrequentItemset {
            score: f.rows.count() as f64 / n,
            items: f.items,
        })
        .collect();
    sort_itemsets(dataset.universe(), &mut sets);
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::{item, t1};

    #[test]
    fn toy_rules() {
        let d = t1();
        let p = MinerParams::new(0.4, 0.8, 1).unwrap();
        let rs = mine(&d, &p, Exec::Sequential).unwrap();
        let i = |f, v| item(&d, f, v);
        let mut expected = vec![
            (vec![i("A", "a1")], i("C", "c1")),
            (vec![i("A", "a2")], i("C", "c2")),
            (vec![i("C", "c1")], i("A", "a1")),
            (vec![i("C", "c2")], i("A", "a2")),
        ];
        expected.sort_by_key(|(x, y)| (x[0], *y));
        assert_eq!(rs.keys(), expected);
    }

    #[test]
    fn full_support_threshold_is_empty() {
        let d = t1();
        let rs = mine(&d, &MinerParams::new(1.0, 0.0, 2).unwrap(), Exec::Sequential).unwrap();
        assert!(rs.is_empty());
    }

    #[test]
    fn toy_itemsets() {
        let d = t1();
        let sets = mine_itemsets(&d, 0.5, 2, Exec::Sequential).unwrap();
        let has = |items: Vec<Item>| sets.iter().any(|s| s.items == items);
        let i = |f, v| item(&d, f, v);
        assert!(has(vec![i("A", "a1"), i("C", "c1")]));
        assert!(has(vec![i("A", "a2"), i("C", "c2")]));
        assert!(!has(vec![i("A", "a1"), i("B", "b2")]));
        let singles = mine_itemsets(&d, 0.0, 1, Exec::Sequential).unwrap();
        assert_eq!(singles.len(), 6);
    }

    #[test]
    fn bad_params() {
        assert!(MinerParams::new(1.1, 0.8, 2).is_err());
        assert!(MinerParams::new(0.1, 0.8, 0).is_err());
    }
}
