//! Ordered rule-list classifier built by sequential covering, and a
//! stratified cross-validation harness around it.

use std::cmp::Ordering;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitset::RowSet;
use crate::data::{DataError, Dataset, Item, ItemUniverse};
use crate::exec::Exec;
use crate::learner::{extract_rules_single_target, LearnError, Thresholds};
use crate::metrics::{render_table, RuleEvaluator};
use crate::miner::{mine, MinerParams};
use crate::model::ModelBackend;
use crate::rules::{canonical_cmp, Rule, RuleSet};

/// Seeds used when none are given.
pub const DEFAULT_SEEDS: [u64; 10] = [
    42, 1608637542, 1273642419, 1935803228, 787846414, 996406378, 1201263687, 423734972, 415968276, 670094950,
];

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("cannot stratify: class {class:?} has {count} rows but {folds} folds were requested")]
    RareClass { class: String, count: usize, folds: usize },
    #[error("cannot stratify: every row has class {0:?}")]
    SingleClass(String),
}

/// A classification rule with its training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListEntry {
    pub antecedent: Vec<String>,
    pub class: String,
    pub confidence: f64,
    pub support: f64,
}

/// Rules tried in order; the first whose antecedent matches a row decides
/// its class, otherwise the default class applies.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleList {
    universe: ItemUniverse,
    class_feature: usize,
    rules: Vec<(Rule, f64, f64)>,
    default_class: u32,
    candidate_count: usize,
}

fn sort_key_cmp(universe: &ItemUniverse, a: &(Rule, f64, f64), b: &(Rule, f64, f64)) -> Ordering {
    b.1.total_cmp(&a.1)
        .then_with(|| b.2.total_cmp(&a.2))
        .then_with(|| a.0.antecedent.len().cmp(&b.0.antecedent.len()))
        .then_with(|| {
            canonical_cmp(
                universe,
                &a.0.antecedent,
                a.0.consequent,
                &b.0.antecedent,
                b.0.consequent,
            )
        })
}

/// Filters `ruleset` to rules concluding `class_feature`, orders them by
/// confidence, support, antecedent length and canonical order (all on
/// `train`), and keeps each rule that correctly classifies at least one row
/// not covered by an earlier kept rule.
pub fn build_rule_list(ruleset: &RuleSet, train: &Dataset, class_feature: usize) -> RuleList {
    let universe = train.universe();
    let eval = RuleEvaluator::new(train);
    let item_rows = train.item_rows();
    let mut candidates: Vec<(Rule, f64, f64)> = ruleset
        .rules()
        .iter()
        .filter(|r| universe.feature_of(r.consequent) == class_feature)
        .map(|r| {
            let conf = eval.confidence(r).unwrap_or(f64::NEG_INFINITY);
            (r.clone(), conf, eval.support(r))
        })
        .collect();
    let candidate_count = candidates.len();
    candidates.sort_by(|a, b| sort_key_cmp(universe, a, b));

    let mut uncovered = RowSet::full(train.n());
    let mut kept = Vec::new();
    for cand in candidates {
        let matched = eval.rows_with(&cand.0.antecedent);
        let mut correct = matched.clone();
        correct.intersect_with(&item_rows[cand.0.consequent.0]);
        if correct.intersection_count(&uncovered) > 0 {
            uncovered.difference_with(&matched);
            kept.push(cand);
        }
    }

    let classes = universe.cardinality(class_feature);
    let mut global = vec![0usize; classes];
    let mut remaining = vec![0usize; classes];
    for r in 0..train.n() {
        let c = train.row(r)[class_feature] as usize;
        global[c] += 1;
        if uncovered.contains(r) {
            remaining[c] += 1;
        }
    }
    // Highest remaining count, then highest global count, then lowest index.
    let default_class = (0..classes)
        .max_by(|&a, &b| {
            remaining[a]
                .cmp(&remaining[b])
                .then(global[a].cmp(&global[b]))
                .then(b.cmp(&a))
        })
        .unwrap_or(0) as u32;

    RuleList {
        universe: universe.clone(),
        class_feature,
        rules: kept,
        default_class,
        candidate_count,
    }
}

impl RuleList {
    pub fn class_feature(&self) -> usize {
        self.class_feature
    }

    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.rules.iter().map(|(r, _, _)| r)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn default_class(&self) -> u32 {
        self.default_class
    }

    /// True when the input rule set had no rule concluding the class feature.
    pub fn default_only(&self) -> bool {
        self.candidate_count == 0
    }

    /// Class category of a row given as category indices over the list's universe.
    pub fn predict(&self, row: &[u32]) -> u32 {
        let u = &self.universe;
        let matches = |x: &[Item]| x.iter().all(|&i| row[u.feature_of(i)] as usize == u.category_of(i));
        self.rules
            .iter()
            .find(|(r, _, _)| matches(&r.antecedent))
            .map_or(self.default_class, |(r, _, _)| u.category_of(r.consequent) as u32)
    }

    pub fn entries(&self) -> Vec<ListEntry> {
        let u = &self.universe;
        self.rules
            .iter()
            .map(|(r, conf, sup)| ListEntry {
                antecedent: r.antecedent.iter().map(|&i| u.item_label(i)).collect(),
                class: u.item_name(r.consequent).1.to_string(),
                confidence: *conf,
                support: *sup,
            })
            .collect()
    }
}

/// Macro-averaged scores over the union of true and predicted classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

pub fn score(truth: &[u32], predicted: &[u32]) -> Scores {
    assert_eq!(truth.len(), predicted.len());
    if truth.is_empty() {
        return Scores {
            accuracy: 0.0,
            f1: 0.0,
            precision: 0.0,
            recall: 0.0,
        };
    }
    let mut labels: Vec<u32> = truth.iter().chain(predicted).copied().collect();
    labels.sort_unstable();
    labels.dedup();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for &l in &labels {
        let tp = truth.iter().zip(predicted).filter(|&(&t, &p)| t == l && p == l).count();
        let pred_l = predicted.iter().filter(|&&p| p == l).count();
        let true_l = truth.iter().filter(|&&t| t == l).count();
        let p = ratio(tp, pred_l);
        let r = ratio(tp, true_l);
        p_sum += p;
        r_sum += r;
        f_sum += if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    }
    let correct = truth.iter().zip(predicted).filter(|(t, p)| t == p).count();
    let l = labels.len() as f64;
    Scores {
        accuracy: correct as f64 / truth.len() as f64,
        f1: f_sum / l,
        precision: p_sum / l,
        recall: r_sum / l,
    }
}

/// Anything that turns a training table into a rule set.
pub trait RuleLearner: Send + Sync {
    fn name(&self) -> String;

    fn learn(&self, train: &Dataset, exec: Exec) -> Result<RuleSet, ClassifyError>;
}

/// Rules from probing a model backend (single-target extraction).
pub struct ProbeLearner {
    pub backend: Arc<dyn ModelBackend>,
    pub thresholds: Thresholds,
}

impl RuleLearner for ProbeLearner {
    fn name(&self) -> String {
        format!("probe:{}", self.backend.id())
    }

    fn learn(&self, train: &Dataset, exec: Exec) -> Result<RuleSet, ClassifyError> {
        Ok(extract_rules_single_target(train, self.backend.as_ref(), &self.thresholds, exec)?.rules)
    }
}

/// Rules from the exhaustive support/confidence miner.
pub struct MinerLearner {
    pub params: MinerParams,
}

impl RuleLearner for MinerLearner {
    fn name(&self) -> String {
        "apriori".into()
    }

    fn learn(&self, train: &Dataset, exec: Exec) -> Result<RuleSet, ClassifyError> {
        mine(train, &self.params, exec).map_err(|e| ClassifyError::Config(e.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub seed: u64,
    pub fold: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub rule_count: usize,
    pub default_only: bool,
    #[serde(flatten)]
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub learner: String,
    pub class_feature: String,
    pub folds: usize,
    pub seeds: Vec<u64>,
    pub stratified: bool,
    pub mean: Scores,
    pub per_fold: Vec<FoldResult>,
}

impl EvalReport {
    /// Aligned text table: one line per fold, then the means.
    pub fn to_table(&self) -> String {
        let cells = |s: &Scores| {
            [s.accuracy, s.f1, s.precision, s.recall]
                .iter()
                .map(|v| format!("{v:.4}"))
                .collect::<Vec<_>>()
        };
        let mut rows: Vec<Vec<String>> = self
            .per_fold
            .iter()
            .map(|f| {
                let mut row = vec![f.seed.to_string(), f.fold.to_string(), f.rule_count.to_string()];
                row.extend(cells(&f.scores));
                row
            })
            .collect();
        let mut mean = vec!["mean".to_string(), String::new(), String::new()];
        mean.extend(cells(&self.mean));
        rows.push(mean);
        render_table(
            &["Seed", "Fold", "# Rules", "Accuracy", "F1", "Precision", "Recall"],
            &rows,
        )
    }
}

/// Stratified fold index per row: shuffle with the seed, then deal each
/// class's rows round-robin, continuing the deal across classes.
pub fn stratified_folds(labels: &[u32], folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let classes = labels.iter().copied().max().map_or(0, |c| c as usize + 1);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0usize;
    for class in 0..classes as u32 {
        for &r in order.iter().filter(|&&r| labels[r] == class) {
            assignment[r] = next % folds;
            next += 1;
        }
    }
    assignment
}

fn check_stratifiable(dataset: &Dataset, class_feature: usize, folds: usize) -> Result<Vec<u32>, ClassifyError> {
    let labels = dataset.get_labels(class_feature);
    let def = dataset.universe().feature(class_feature);
    let mut counts = vec![0usize; def.cardinality()];
    for &l in &labels {
        counts[l as usize] += 1;
    }
    let present: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] > 0).collect();
    if let [only] = present[..] {
        return Err(ClassifyError::SingleClass(def.categories[only].clone()));
    }
    for c in present {
        if counts[c] < folds {
            return Err(ClassifyError::RareClass {
                class: def.categories[c].clone(),
                count: counts[c],
                folds,
            });
        }
    }
    Ok(labels)
}

/// Repeated stratified k-fold evaluation: for each seed and fold, learn on
/// the training folds only, build a rule list and score the held-out fold.
pub fn cross_validate(
    dataset: &Dataset,
    class_feature: usize,
    learner: &dyn RuleLearner,
    folds: usize,
    seeds: &[u64],
    exec: Exec,
) -> Result<EvalReport, ClassifyError> {
    if folds < 2 {
        return Err(ClassifyError::Config(format!("folds must be at least 2, got {folds}")));
    }
    if seeds.is_empty() {
        return Err(ClassifyError::Config("seed list is empty".into()));
    }
    if class_feature >= dataset.universe().k() {
        return Err(ClassifyError::Config(format!("no feature with index {class_feature}")));
    }
    if dataset.is_empty() {
        return Err(ClassifyError::Data(DataError::EmptyTable));
    }
    let labels = check_stratifiable(dataset, class_feature, folds)?;
    let jobs: Vec<(u64, usize, Vec<usize>)> = seeds
        .iter()
        .flat_map(|&seed| {
            let assignment = stratified_folds(&labels, folds, seed);
            (0..folds).map(move |f| (seed, f, assignment.clone()))
        })
        .collect();

    let per_fold = exec.try_map(&jobs, |(seed, fold, assignment)| {
        let (test_idx, train_idx): (Vec<usize>, Vec<usize>) = (0..dataset.n()).partition(|&r| assignment[r] == *fold);
        let train = dataset.subset(&train_idx);
        let test = dataset.subset(&test_idx);
        let rules = learner.learn(&train, exec)?;
        let list = build_rule_list(&rules, &train, class_feature);
        let predicted: Vec<u32> = test.rows().map(|row| list.predict(row)).collect();
        let truth = test.get_labels(class_feature);
        Ok::<_, ClassifyError>(FoldResult {
            seed: *seed,
            fold: *fold,
            train_rows: train.n(),
            test_rows: test.n(),
            rule_count: list.len(),
            default_only: list.default_only(),
            scores: score(&truth, &predicted),
        })
    })?;

    let count = per_fold.len() as f64;
    let mean_of = |f: fn(&Scores) -> f64| per_fold.iter().map(|r| f(&r.scores)).sum::<f64>() / count;
    let mean = Scores {
        accuracy: mean_of(|s| s.accuracy),
        f1: mean_of(|s| s.f1),
        precision: mean_of(|s| s.precision),
        recall: mean_of(|s| s.recall),
    };
    Ok(EvalReport {
        learner: learner.name(),
        class_feature: dataset.universe().feature(class_feature).name.clone(),
        folds,
        seeds: seeds.to_vec(),
        stratified: true,
        mean,
        per_fold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::{item, t1};
    use crate::rules::Provenance;

    fn text(rows: &[[&str; 2]]) -> Vec<Vec<String>> {
        rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect()
    }

    fn b_decides_class() -> Dataset {
        let rows: Vec<[&str; 2]> = (0..20)
            .map(|i| if i % 2 == 0 { ["b1", "+"] } else { ["b2", "-"] })
            .collect();
        Dataset::from_text_rows(vec!["B".into(), "Class".into()], &text(&rows)).unwrap()
    }

    #[test]
    fn two_rule_list_fits_training_data() {
        let d = b_decides_class();
        let u = d.universe();
        let rules = vec![
            Rule::new(vec![item(&d, "B", "b1")], item(&d, "Class", "+"), 1.0),
            Rule::new(vec![item(&d, "B", "b2")], item(&d, "Class", "-"), 1.0),
        ];
        let rs = RuleSet::new(u, rules, Provenance::default());
        let list = build_rule_list(&rs, &d, 1);
        assert_eq!(list.len(), 2);
        let predicted: Vec<u32> = d.rows().map(|r| list.predict(r)).collect();
        assert_eq!(score(&d.get_labels(1), &predicted).accuracy, 1.0);
    }

    #[test]
    fn empty_rule_set_gives_majority_default() {
        let d = t1().subset(&[0, 1, 2, 3]);
        let list = build_rule_list(&RuleSet::new(d.universe(), vec![], Provenance::default()), &d, 2);
        assert!(list.is_empty() && list.default_only());
        assert_eq!(list.default_class(), 0);
        assert_eq!(list.predict(&[1, 1, 1]), 0);
    }

    #[test]
    fn first_matching_rule_wins() {
        let d = t1();
        let u = d.universe();
        let (a1, b1, c1, c2) = (
            item(&d, "A", "a1"),
            item(&d, "B", "b1"),
            item(&d, "C", "c1"),
            item(&d, "C", "c2"),
        );
        let rs = RuleSet::new(
            u,
            vec![Rule::new(vec![a1], c1, 1.0), Rule::new(vec![b1], c2, 1.0)],
            Provenance::default(),
        );
        let list = build_rule_list(&rs, &d, 2);
        // a1 → c1 has confidence 1 and sorts first; b1 → c2 (1/3) still covers row 5.
        assert_eq!(list.rules().next().unwrap().antecedent, vec![a1]);
        assert_eq!(list.predict(&[0, 0, 0]), 0);
        assert_eq!(list.predict(&[1, 0, 1]), 1);
    }

    #[test]
    fn ties_break_canonically() {
        let d = b_decides_class();
        let u = d.universe();
        let plus = item(&d, "Class", "+");
        let minus = item(&d, "Class", "-");
        // Both rules have confidence 0.5 and support 0.25 over half-and-half rows.
        let rows: Vec<[&str; 2]> = vec![["b1", "+"], ["b1", "-"], ["b2", "+"], ["b2", "-"]];
        let e = Dataset::from_text_rows_in(u.clone(), &text(&rows)).unwrap();
        let rs = RuleSet::new(
            u,
            vec![
                Rule::new(vec![item(&d, "B", "b2")], minus, 0.5),
                Rule::new(vec![item(&d, "B", "b1")], plus, 0.5),
            ],
            Provenance::default(),
        );
        let list = build_rule_list(&rs, &e, 1);
        let order: Vec<Item> = list.rules().map(|r| r.antecedent[0]).collect();
        assert_eq!(order, vec![item(&d, "B", "b1"), item(&d, "B", "b2")]);
    }

    #[test]
    fn macro_scores_follow_union_of_labels() {
        let s = score(&[0, 0, 1, 1], &[0, 1, 1, 1]);
        assert_eq!(s.accuracy, 0.75);
        assert!((s.precision - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert!((s.recall - 0.75).abs() < 1e-15);
        let never_predicted = score(&[0, 1], &[0, 0]);
        assert!((never_predicted.precision - 0.25).abs() < 1e-15);
    }

    #[test]
    fn stratification_errors() {
        let rows: Vec<[&str; 2]> = vec![["x", "c"]; 3];
        let d = Dataset::from_text_rows(vec!["A".into(), "Class".into()], &text(&rows)).unwrap();
        let learner = MinerLearner {
            params: MinerParams::new(0.0, 0.0, 1).unwrap(),
        };
        let err = cross_validate(&d, 1, &learner, 2, &[1], Exec::Sequential).unwrap_err();
        assert!(matches!(err, ClassifyError::SingleClass(_)));
        let t = t1();
        let err = cross_validate(&t, 2, &learner, 4, &[1], Exec::Sequential).unwrap_err();
        assert!(matches!(err, ClassifyError::RareClass { ref class, .. } if class == "c1"));
    }

    #[test]
    fn folds_are_balanced_per_class() {
        let labels: Vec<u32> = (0..23).map(|i| (i % 3 == 0) as u32).collect();
        let a = stratified_folds(&labels, 5, 42);
        assert_eq!(a, stratified_folds(&labels, 5, 42));
        for class in 0..2 {
            let mut per_fold = [0usize; 5];
            for (r, &f) in a.iter().enumerate() {
                if labels[r] == class {
                    per_fold[f] += 1;
                }
            }
            let (lo, hi) = (per_fold.iter().min().unwrap(), per_fold.iter().max().unwrap());
            assert!(hi - lo <= 1);
        }
    }
}
