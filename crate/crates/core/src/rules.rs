//! Rules, rule sets and itemsets, their canonical order and JSON formats.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{DataError, Item, ItemUniverse};
use crate::metrics::RuleEvaluator;

/// `X → y` with a single consequent item.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    /// Antecedent items, ascending (hence one per feature, in feature order).
    pub antecedent: Vec<Item>,
    pub consequent: Item,
    /// Association validity: the model's `P(y | X)` for a valid antecedent.
    pub validity: f64,
}

impl Rule {
    pub fn new(antecedent: Vec<Item>, consequent: Item, validity: f64) -> Self {
        let mut antecedent = antecedent;
        antecedent.sort_unstable();
        Rule {
            antecedent,
            consequent,
            validity,
        }
    }

    /// Non-empty antecedent, distinct antecedent features, consequent feature
    /// outside the antecedent.
    pub fn is_well_formed(&self, universe: &ItemUniverse) -> bool {
        if self.antecedent.is_empty() {
            return false;
        }
        let mut features: Vec<usize> = self.antecedent.iter().map(|&i| universe.feature_of(i)).collect();
        features.sort_unstable();
        let distinct = features.windows(2).all(|w| w[0] != w[1]);
        distinct && !features.contains(&universe.feature_of(self.consequent))
    }

    pub fn items(&self) -> Vec<Item> {
        let mut all = self.antecedent.clone();
        all.push(self.consequent);
        all
    }
}

/// Canonical key: `(|X|, feature indices, category indices, consequent index)`.
pub fn canonical_cmp(universe: &ItemUniverse, a: &[Item], ay: Item, b: &[Item], by: Item) -> Ordering {
    a.len()
        .cmp(&b.len())
        .then_with(|| {
            a.iter()
                .map(|&i| universe.feature_of(i))
                .cmp(b.iter().map(|&i| universe.feature_of(i)))
        })
        .then_with(|| {
            a.iter()
                .map(|&i| universe.category_of(i))
                .cmp(b.iter().map(|&i| universe.category_of(i)))
        })
        .then_with(|| ay.cmp(&by))
}

fn itemset_cmp(universe: &ItemUniverse, a: &[Item], b: &[Item]) -> Ordering {
    canonical_cmp(universe, a, Item(0), b, Item(0))
}

/// Where a rule set came from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub backend: String,
    pub thresholds: BTreeMap<String, f64>,
    pub dataset_digest: String,
    pub probe_count: u64,
    pub fit_count: u64,
}

/// A duplicate-free, canonically ordered list of rules.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    rules: Vec<Rule>,
    pub provenance: Provenance,
}

impl RuleSet {
    /// Sorts canonically and merges duplicate `(X, y)` pairs, keeping the
    /// highest validity.
    pub fn new(universe: &ItemUniverse, mut rules: Vec<Rule>, provenance: Provenance) -> Self {
        for r in &mut rules {
            r.antecedent.sort_unstable();
        }
        rules.sort_by(|a, b| {
            canonical_cmp(universe, &a.antecedent, a.consequent, &b.antecedent, b.consequent)
                .then_with(|| b.validity.total_cmp(&a.validity))
        });
        rules.dedup_by(|later, kept| later.antecedent == kept.antecedent && later.consequent == kept.consequent);
        RuleSet { rules, provenance }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// `(X, y)` pairs, for set comparisons.
    pub fn keys(&self) -> Vec<(Vec<Item>, Item)> {
        self.rules
            .iter()
            .map(|r| (r.antecedent.clone(), r.consequent))
            .collect()
    }

    /// Rules restricted to a predicate, preserving order and provenance.
    pub fn filtered(&self, keep: impl Fn(&Rule) -> bool) -> RuleSet {
        RuleSet {
            rules: self.rules.iter().filter(|r| keep(r)).cloned().collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// JSON document with per-rule quality metrics computed on `evaluator`'s dataset.
    pub fn to_document(&self, evaluator: &RuleEvaluator<'_>) -> RuleSetDocument {
        let universe = evaluator.dataset().universe();
        RuleSetDocument {
            meta: self.provenance.clone(),
            rules: self
                .rules
                .iter()
                .map(|r| {
                    let stats = evaluator.stats(r);
                    RuleRecord {
                        antecedent: r.antecedent.iter().map(|&i| ItemRecord::of(universe, i)).collect(),
                        consequent: ItemRecord::of(universe, r.consequent),
                        validity: r.validity,
                        support: stats.support,
                        confidence: stats.confidence,
                        zhang: stats.zhang,
                        interestingness: stats.interestingness,
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub feature: String,
    pub value: String,
}

impl ItemRecord {
    pub fn of(universe: &ItemUniverse, item: Item) -> Self {
        let (f, v) = universe.item_name(item);
        ItemRecord {
            feature: f.to_string(),
            value: v.to_string(),
        }
    }

    pub fn resolve(&self, universe: &ItemUniverse) -> Result<Item, DataError> {
        universe.find_item(&self.feature, &self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub antecedent: Vec<ItemRecord>,
    pub consequent: ItemRecord,
    pub validity: f64,
    pub support: f64,
    pub confidence: Option<f64>,
    pub zhang: Option<f64>,
    pub interestingness: Option<f64>,
}

/// `{meta:{..}, rules:[{antecedent,consequent,validity,support,confidence,zhang,interestingness}]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSetDocument {
    pub meta: Provenance,
    pub rules: Vec<RuleRecord>,
}

impl RuleSetDocument {
    /// Resolves items against `universe`; unknown items are errors.
    pub fn to_rule_set(&self, universe: &ItemUniverse) -> Result<RuleSet, DataError> {
        let rules = self
            .rules
            .iter()
            .map(|r| {
                let antecedent = r
                    .antecedent
                    .iter()
                    .map(|i| i.resolve(universe))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Rule::new(antecedent, r.consequent.resolve(universe)?, r.validity))
            })
            .collect::<Result<Vec<_>, DataError>>()?;
        Ok(RuleSet::new(universe, rules, self.meta.clone()))
    }
}

/// An item set with at most one item per feature and its score
/// (minimum predicted probability, or support for the count-based miner).
#[derive(Debug, Clone, PartialEq)]
pub struct FrequentItemset {
    pub items: Vec<Item>,
    pub score: f64,
}

/// Canonical order for itemsets, same key as rule antecedents.
pub fn sort_itemsets(universe: &ItemUniverse, sets: &mut Vec<FrequentItemset>) {
    for s in sets.iter_mut() {
        s.items.sort_unstable();
    }
    sets.sort_by(|a, b| itemset_cmp(universe, &a.items, &b.items));
    sets.dedup_by(|later, kept| {
        if later.items == kept.items {
            kept.score = kept.score.max(later.score);
            true
        } else {
            false
        }
    });
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemsetRecord {
    pub items: Vec<ItemRecord>,
    pub score: f64,
}

/// `{itemsets:[{items:[..],score}]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemsetDocument {
    pub itemsets: Vec<ItemsetRecord>,
}

impl ItemsetDocument {
    pub fn new(universe: &ItemUniverse, sets: &[FrequentItemset]) -> Self {
        ItemsetDocument {
            itemsets: sets
                .iter()
                .map(|s| ItemsetRecord {
                    items: s.items.iter().map(|&i| ItemRecord::of(universe, i)).collect(),
                    score: s.score,
                })
                .collect(),
        }
    }

    /// One itemset per line, one `feature=value` token per item.
    pub fn to_flat(&self) -> String {
        let mut out = String::new();
        for set in &self.itemsets {
            let tokens: Vec<String> = set.items.iter().map(|i| format!("{}={}", i.feature, i.value)).collect();
            out.push_str(&tokens.join(" "));
            out.push('\n');
        }
        out
    }
}
