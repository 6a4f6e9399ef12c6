//! Rule and itemset extraction by probing a conditional model.
//!
//! For every feature set `S` of size `1..=a`, one probe per instantiation of
//! `S` is pushed through the model. A probe's antecedent is valid when the
//! model reconstructs each marked item with probability at least `τ_a`; every
//! item of an unmarked feature predicted with probability at least `τ_c` then
//! becomes a consequent.
//!
//! Each feature's context is fitted once per run and reused for every `S`,
//! since the context table does not depend on `S`.

mod multi;

pub use multi::{
    antecedent_candidates, extract_rules_multi_target, Reconstruction, ReconstructionModel, StitchedModel,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{enumerate_feature_sets, generate_probe_vectors, DataError, Dataset, ItemUniverse};
use crate::exec::Exec;
use crate::model::{FittedFeatures, ModelBackend, ModelError, PredictionMatrix};
use crate::rules::{sort_itemsets, FrequentItemset, Provenance, Rule, RuleSet};

pub const FIT_ONCE_PER_FEATURE: &str = "once-per-feature";

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    /// A model failure, with how many feature sets (in canonical order)
    /// had been fully processed before the failing one.
    #[error("{source} (after {completed} of {total} feature sets)")]
    Model {
        source: ModelError,
        completed: usize,
        total: usize,
    },
}

impl LearnError {
    fn at(source: ModelError, completed: usize, total: usize) -> Self {
        LearnError::Model {
            source,
            completed,
            total,
        }
    }

    pub fn is_transport(&self) -> bool {
        matches!(self, LearnError::Model { source, .. } if source.is_transport())
    }
}

fn check_unit(name: &str, v: f64) -> Result<(), LearnError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(LearnError::Config(format!("{name} must be in [0, 1], got {v}")))
    }
}

/// Extraction thresholds. Comparisons against them are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub tau_a: f64,
    pub tau_c: f64,
    pub tau_s: f64,
    pub max_antecedents: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            tau_a: 0.5,
            tau_c: 0.8,
            tau_s: 0.5,
            max_antecedents: 2,
        }
    }
}

impl Thresholds {
    pub fn new(tau_a: f64, tau_c: f64, max_antecedents: usize) -> Result<Self, LearnError> {
        let t = Thresholds {
            tau_a,
            tau_c,
            max_antecedents,
            ..Thresholds::default()
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_tau_s(mut self, tau_s: f64) -> Result<Self, LearnError> {
        self.tau_s = tau_s;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        check_unit("tau_a", self.tau_a)?;
        check_unit("tau_c", self.tau_c)?;
        check_unit("tau_s", self.tau_s)?;
        if self.max_antecedents == 0 {
            return Err(LearnError::Config("max_antecedents must be at least 1".into()));
        }
        Ok(())
    }

    fn rule_map(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("tau_a".to_string(), self.tau_a),
            ("tau_c".to_string(), self.tau_c),
            ("max_antecedents".to_string(), self.max_antecedents as f64),
        ])
    }
}

/// Counters for one extraction run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub paradigm: String,
    pub fit_strategy: String,
    pub feature_sets: u64,
    pub probe_count: u64,
    /// Backend fits actually performed.
    pub fit_count: u64,
    /// Fits the unbatched algorithm would perform (one per feature set and target).
    pub unbatched_fit_count: u64,
    /// Σ over feature sets of probes × predicted targets.
    pub predicted_rows: u64,
    /// Probes whose antecedent had an undefined conditional (zero evidence count).
    pub skipped_antecedents: u64,
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub rules: RuleSet,
    pub report: ExtractionReport,
}

#[derive(Debug, Clone)]
pub struct ItemsetExtraction {
    pub itemsets: Vec<FrequentItemset>,
    pub report: ExtractionReport,
}

/// Feature subsets of size `1..=a` in size-then-lexicographic order.
pub fn enumerate_antecedent_feature_sets(universe: &ItemUniverse, a: usize) -> Vec<Vec<usize>> {
    enumerate_feature_sets(universe.k(), a)
}

/// `min` of row `r` at its marked items, or `None` if any marked block is undefined.
pub fn marked_min(pm: &PredictionMatrix, universe: &ItemUniverse, r: usize) -> Option<f64> {
    let mut score = f64::INFINITY;
    for (&j, item) in pm.marked_features().iter().zip(pm.marked_items(universe, r)) {
        if !pm.is_populated(j) || !pm.is_defined(r, j) {
            return None;
        }
        score = score.min(pm.value(r, item));
    }
    Some(score)
}

/// `s_θ(X)`: the minimum predicted probability over the marked items of row
/// `r`; 0 when any of them is undefined.
pub fn antecedent_score(pm: &PredictionMatrix, universe: &ItemUniverse, r: usize) -> f64 {
    marked_min(pm, universe, r).unwrap_or(0.0)
}

/// Rules from one prediction matrix, plus the number of skipped antecedents.
pub fn rules_from_matrix(pm: &PredictionMatrix, universe: &ItemUniverse, tau_a: f64, tau_c: f64) -> (Vec<Rule>, u64) {
    let mut rules = Vec::new();
    let mut skipped = 0;
    let marked = pm.marked_features();
    for r in 0..pm.rows() {
        let Some(score) = marked_min(pm, universe, r) else {
            skipped += 1;
            continue;
        };
        if score < tau_a {
            continue;
        }
        let antecedent = pm.marked_items(universe, r);
        for f in 0..universe.k() {
            if marked.contains(&f) || !pm.is_populated(f) || !pm.is_defined(r, f) {
                continue;
            }
            for i in universe.block(f) {
                let v = pm.row(r)[i];
                if v >= tau_c {
                    rules.push(Rule::new(antecedent.clone(), crate::data::Item(i), v));
                }
            }
        }
    }
    (rules, skipped)
}

/// Accepted itemsets from one prediction matrix, plus the number of skipped rows.
pub fn itemsets_from_matrix(pm: &PredictionMatrix, universe: &ItemUniverse, tau_s: f64) -> (Vec<FrequentItemset>, u64) {
    let mut sets = Vec::new();
    let mut skipped = 0;
    for r in 0..pm.rows() {
        match marked_min(pm, universe, r) {
            None => skipped += 1,
            Some(score) if score >= tau_s => sets.push(FrequentItemset {
                items: pm.marked_items(universe, r),
                score,
            }),
            Some(_) => {}
        }
    }
    (sets, skipped)
}

fn provenance(dataset: &Dataset, backend_id: String, thresholds: &Thresholds, report: &ExtractionReport) -> Provenance {
    Provenance {
        backend: backend_id,
        thresholds: thresholds.rule_map(),
        dataset_digest: dataset.digest(),
        probe_count: report.probe_count,
        fit_count: report.fit_count,
    }
}

fn fit_all(
    dataset: &Dataset,
    backend: &dyn ModelBackend,
    sets: usize,
    exec: Exec,
) -> Result<FittedFeatures, LearnError> {
    let all: Vec<usize> = (0..dataset.universe().k()).collect();
    FittedFeatures::fit(dataset, backend, &all, exec).map_err(|e| LearnError::at(e, 0, sets))
}

/// Runs `per_set` over every feature set and reports the lowest failing set.
fn over_feature_sets<R, F>(sets: &[Vec<usize>], exec: Exec, per_set: F) -> Result<Vec<R>, LearnError>
where
    R: Send,
    F: Fn(&[usize]) -> Result<R, ModelError> + Sync + Send,
{
    let indexed: Vec<(usize, &Vec<usize>)> = sets.iter().enumerate().collect();
    exec.try_map(&indexed, |(idx, s)| per_set(s).map_err(|e| (*idx, e)))
        .map_err(|(idx, e)| LearnError::at(e, idx, sets.len()))
}

fn predict_set(
    fitted: &FittedFeatures,
    universe: &ItemUniverse,
    s: &[usize],
    targets: &[usize],
) -> Result<PredictionMatrix, ModelError> {
    let probes = generate_probe_vectors(s, universe).map_err(|e| ModelError::InvalidProbe(e.to_string()))?;
    fitted.assemble(universe, &probes, targets)
}

fn base_report(paradigm: &str, universe: &ItemUniverse, sets: &[Vec<usize>], fit_count: u64) -> ExtractionReport {
    let probe_count = sets
        .iter()
        .map(|s| s.iter().map(|&j| universe.cardinality(j) as u64).product::<u64>())
        .sum();
    ExtractionReport {
        paradigm: paradigm.to_string(),
        fit_strategy: FIT_ONCE_PER_FEATURE.to_string(),
        feature_sets: sets.len() as u64,
        probe_count,
        fit_count,
        ..ExtractionReport::default()
    }
}

fn check_dataset(dataset: &Dataset) -> Result<(), LearnError> {
    if dataset.is_empty() {
        return Err(LearnError::Data(DataError::EmptyTable));
    }
    Ok(())
}

/// Single-target extraction: each feature is predicted from the others.
pub fn extract_rules_single_target(
    dataset: &Dataset,
    backend: &dyn ModelBackend,
    thresholds: &Thresholds,
    exec: Exec,
) -> Result<Extraction, LearnError> {
    thresholds.validate()?;
    check_dataset(dataset)?;
    let universe = dataset.universe();
    let k = universe.k();
    let sets = enumerate_antecedent_feature_sets(universe, thresholds.max_antecedents);
    let fitted = fit_all(dataset, backend, sets.len(), exec)?;
    let all: Vec<usize> = (0..k).collect();
    let per_set = over_feature_sets(&sets, exec, |s| {
        let pm = predict_set(&fitted, universe, s, &all)?;
        Ok(rules_from_matrix(&pm, universe, thresholds.tau_a, thresholds.tau_c))
    })?;

    let mut report = base_report("single-target", universe, &sets, fitted.fit_count() as u64);
    report.unbatched_fit_count = sets.len() as u64 * k as u64;
    report.predicted_rows = report.probe_count * k as u64;
    let mut rules = Vec::new();
    for (r, skipped) in per_set {
        rules.extend(r);
        report.skipped_antecedents += skipped;
    }
    let prov = provenance(dataset, backend.id(), thresholds, &report);
    Ok(Extraction {
        rules: RuleSet::new(universe, rules, prov),
        report,
    })
}

/// Frequent itemsets: for each instantiation of `S`, only the features in
/// `S` are predicted, and the itemset is kept when every one of its items is
/// predicted with probability at least `τ_s`.
pub fn extract_frequent_itemsets(
    dataset: &Dataset,
    backend: &dyn ModelBackend,
    max_size: usize,
    tau_s: f64,
    exec: Exec,
) -> Result<ItemsetExtraction, LearnError> {
    check_unit("tau_s", tau_s)?;
    if max_size == 0 {
        return Err(LearnError::Config("max itemset size must be at least 1".into()));
    }
    check_dataset(dataset)?;
    let universe = dataset.universe();
    let sets = enumerate_antecedent_feature_sets(universe, max_size);
    let fitted = fit_all(dataset, backend, sets.len(), exec)?;
    let per_set = over_feature_sets(&sets, exec, |s| {
        let pm = predict_set(&fitted, universe, s, s)?;
        Ok(itemsets_from_matrix(&pm, universe, tau_s))
    })?;

    let mut report = base_report("itemsets", universe, &sets, fitted.fit_count() as u64);
    report.unbatched_fit_count = sets.iter().map(|s| s.len() as u64).sum();
    report.predicted_rows = sets
        .iter()
        .map(|s| s.len() as u64 * s.iter().map(|&j| universe.cardinality(j) as u64).product::<u64>())
        .sum();
    let mut itemsets = Vec::new();
    for (found, skipped) in per_set {
        itemsets.extend(found);
        report.skipped_antecedents += skipped;
    }
    sort_itemsets(universe, &mut itemsets);
    Ok(ItemsetExtraction { itemsets, report })
}

/// Every prediction matrix of a single-target run, kept so that many
/// threshold settings can be applied to the same model output.
pub struct ProbeBank {
    universe: ItemUniverse,
    backend_id: String,
    digest: String,
    max_antecedents: usize,
    matrices: Vec<PredictionMatrix>,
    report: ExtractionReport,
}

impl ProbeBank {
    pub fn build(
        dataset: &Dataset,
        backend: &dyn ModelBackend,
        max_antecedents: usize,
        exec: Exec,
    ) -> Result<Self, LearnError> {
        if max_antecedents == 0 {
            return Err(LearnError::Config("max_antecedents must be at least 1".into()));
        }
        check_dataset(dataset)?;
        let universe = dataset.universe();
        let k = universe.k();
        let sets = enumerate_antecedent_feature_sets(universe, max_antecedents);
        let fitted = fit_all(dataset, backend, sets.len(), exec)?;
        let all: Vec<usize> = (0..k).collect();
        let matrices = over_feature_sets(&sets, exec, |s| predict_set(&fitted, universe, s, &all))?;
        let mut report = base_report("single-target", universe, &sets, fitted.fit_count() as u64);
        report.unbatched_fit_count = sets.len() as u64 * k as u64;
        report.predicted_rows = report.probe_count * k as u64;
        Ok(ProbeBank {
            universe: universe.clone(),
            backend_id: backend.id(),
            digest: dataset.digest(),
            max_antecedents,
            matrices,
            report,
        })
    }

    pub fn matrices(&self) -> &[PredictionMatrix] {
        &self.matrices
    }

    /// Report of the run that filled the bank (fits happen only here).
    pub fn report(&self) -> &ExtractionReport {
        &self.report
    }

    /// Rules at `(τ_a, τ_c)`; identical to a fresh single-target run.
    pub fn rules(&self, tau_a: f64, tau_c: f64, exec: Exec) -> Result<Extraction, LearnError> {
        let thresholds = Thresholds::new(tau_a, tau_c, self.max_antecedents)?;
        let per_set = exec.map(&self.matrices, |pm| rules_from_matrix(pm, &self.universe, tau_a, tau_c));
        let mut report = self.report.clone();
        let mut rules = Vec::new();
        for (r, skipped) in per_set {
            rules.extend(r);
            report.skipped_antecedents += skipped;
        }
        let prov = Provenance {
            backend: self.backend_id.clone(),
            thresholds: thresholds.rule_map(),
            dataset_digest: self.digest.clone(),
            probe_count: report.probe_count,
            fit_count: report.fit_count,
        };
        Ok(Extraction {
            rules: RuleSet::new(&self.universe, rules, prov),
            report,
        })
    }

    /// Itemsets at `τ_s` read from the stored matrices.
    pub fn itemsets(&self, tau_s: f64) -> Result<Vec<FrequentItemset>, LearnError> {
        check_unit("tau_s", tau_s)?;
        let mut sets: Vec<FrequentItemset> = self
            .matrices
            .iter()
            .flat_map(|pm| itemsets_from_matrix(pm, &self.universe, tau_s).0)
            .collect();
        sort_itemsets(&self.universe, &mut sets);
        Ok(sets)
    }
}
