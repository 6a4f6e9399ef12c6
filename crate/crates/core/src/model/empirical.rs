use crate::bitset::RowSet;
use crate::data::{Dataset, Item, ItemUniverse, Matrix};

use super::{ContextTable, Evidence, FittedModel, ModelBackend, ModelError, ProbaRows};

/// Exact frequency estimator over hard evidence, with optional additive smoothing.
///
/// `P(class | E) = (count(E ∧ class) + α) / (count(E) + α·C)` where `C` is
/// the number of classes seen in the context labels. With `α = 0` and no
/// matching rows the conditional is undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalBackend {
    alpha: f64,
}

impl EmpiricalBackend {
    pub fn new(alpha: f64) -> Result<Self, ModelError> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(ModelError::BadSmoothing(alpha));
        }
        Ok(EmpiricalBackend { alpha })
    }

    /// The unsmoothed estimator (`α = 0`).
    pub fn exact() -> Self {
        EmpiricalBackend { alpha: 0.0 }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn fit(&self, context: &ContextTable) -> EmpiricalContext {
        let features = context.features();
        let n = features.n();
        let classes = context.seen_classes();
        let mut class_rows = vec![RowSet::empty(n); classes.len()];
        for (r, &label) in context.labels().iter().enumerate() {
            let ci = classes.binary_search(&label).expect("label is a seen class");
            class_rows[ci].insert(r);
        }
        EmpiricalContext {
            universe: features.universe().clone(),
            item_rows: features.item_rows(),
            class_rows,
            classes,
            n,
            alpha: self.alpha,
        }
    }
}

impl Default for EmpiricalBackend {
    fn default() -> Self {
        EmpiricalBackend::exact()
    }
}

impl ModelBackend for EmpiricalBackend {
    fn id(&self) -> String {
        if self.alpha == 0.0 {
            "empirical".to_string()
        } else {
            format!("empirical(alpha={})", self.alpha)
        }
    }

    fn fit_context(&self, context: &ContextTable) -> Result<Box<dyn FittedModel>, ModelError> {
        Ok(Box::new(self.fit(context)))
    }
}

/// Row-set index of one context table.
#[derive(Debug, Clone)]
pub struct EmpiricalContext {
    universe: ItemUniverse,
    item_rows: Vec<RowSet>,
    class_rows: Vec<RowSet>,
    classes: Vec<u32>,
    n: usize,
    alpha: f64,
}

impl EmpiricalContext {
    /// Class distribution under hard evidence, or `None` when undefined.
    pub fn distribution(&self, evidence: &Evidence) -> Option<Vec<f64>> {
        let mut rows = RowSet::full(self.n);
        for item in evidence.items() {
            rows.intersect_with(&self.item_rows[item.0]);
        }
        let matched = rows.count();
        if matched == 0 && self.alpha == 0.0 {
            return None;
        }
        let denom = matched as f64 + self.alpha * self.classes.len() as f64;
        Some(
            self.class_rows
                .iter()
                .map(|cr| (rows.intersection_count(cr) as f64 + self.alpha) / denom)
                .collect(),
        )
    }
}

impl FittedModel for EmpiricalContext {
    fn classes(&self) -> &[u32] {
        &self.classes
    }

    fn width(&self) -> usize {
        self.universe.m()
    }

    fn predict_proba(&self, probes: &Matrix) -> Result<ProbaRows, ModelError> {
        if probes.cols() != self.width() {
            return Err(ModelError::WidthMismatch {
                expected: self.width(),
                found: probes.cols(),
            });
        }
        probes
            .iter_rows()
            .map(|row| Evidence::from_probe_row(&self.universe, row).map(|e| self.distribution(&e)))
            .collect()
    }
}

/// `P(target | evidence)` by a direct scan of `dataset`, smoothing over the
/// target feature's full category count.
pub fn empirical_conditional(
    dataset: &Dataset,
    target: Item,
    evidence: &[Item],
    alpha: f64,
) -> Result<f64, ModelError> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(ModelError::BadSmoothing(alpha));
    }
    let universe = dataset.universe();
    let tf = universe.feature_of(target);
    if evidence.iter().any(|&e| universe.feature_of(e) == tf) {
        return Err(ModelError::InvalidProbe(
            "evidence includes the target's feature".into(),
        ));
    }
    let mut matched = 0usize;
    let mut joint = 0usize;
    for r in 0..dataset.n() {
        if evidence.iter().all(|&e| dataset.contains(r, e)) {
            matched += 1;
            if dataset.contains(r, target) {
                joint += 1;
            }
        }
    }
    if matched == 0 && alpha == 0.0 {
        return Err(ModelError::UndefinedConditional);
    }
    let c = universe.cardinality(tf) as f64;
    Ok((joint as f64 + alpha) / (matched as f64 + alpha * c))
}
