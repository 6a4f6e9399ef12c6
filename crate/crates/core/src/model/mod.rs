//! The conditional probabilistic model contract and its backends.
//!
//! A backend is fitted once per target feature on the table with that
//! feature removed (the context), then asked for class distributions of the
//! target on probe rows that also lack the target's block. Stitching those
//! per-feature answers together gives a [`PredictionMatrix`] whose feature
//! blocks are each a probability distribution.

pub mod bridge;
mod empirical;

pub use bridge::BridgeBackend;
pub use empirical::{empirical_conditional, EmpiricalBackend};

use thiserror::Error;

use crate::data::{remove_block, Dataset, FeatureDef, Item, ItemUniverse, Matrix, ProbeMatrix};
use crate::exec::Exec;

/// Row sums of returned distributions must be within this of 1.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("context table has no rows")]
    EmptyContext,
    #[error("context has {rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("probe width {found} does not match fitted context width {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("invalid probe: {0}")]
    InvalidProbe(String),
    #[error("invalid distribution from backend: {0}")]
    InvalidDistribution(String),
    #[error("conditional probability is undefined: the evidence matches no rows")]
    UndefinedConditional,
    #[error("invalid smoothing parameter {0}")]
    BadSmoothing(f64),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("model server error: {0}")]
    Remote(String),
    #[error("feature {feature:?}: {source}")]
    Feature {
        feature: String,
        #[source]
        source: Box<ModelError>,
    },
}

impl ModelError {
    /// True when the failure came from the bridge connection or the remote server.
    pub fn is_transport(&self) -> bool {
        match self {
            ModelError::Transport(_) | ModelError::Remote(_) => true,
            ModelError::Feature { source, .. } => source.is_transport(),
            _ => false,
        }
    }

    fn for_feature(self, feature: &str) -> ModelError {
        match self {
            e @ ModelError::Feature { .. } => e,
            e => ModelError::Feature {
                feature: feature.to_string(),
                source: Box::new(e),
            },
        }
    }
}

/// In-context training data for one target feature.
#[derive(Debug, Clone)]
pub struct ContextTable {
    features: Dataset,
    target: FeatureDef,
    labels: Vec<u32>,
}

impl ContextTable {
    pub fn new(features: Dataset, target: FeatureDef, labels: Vec<u32>) -> Result<Self, ModelError> {
        if features.n() != labels.len() {
            return Err(ModelError::LengthMismatch {
                rows: features.n(),
                labels: labels.len(),
            });
        }
        if labels.is_empty() {
            return Err(ModelError::EmptyContext);
        }
        if labels.iter().any(|&c| c as usize >= target.cardinality()) {
            return Err(ModelError::InvalidProbe("label outside target categories".into()));
        }
        Ok(ContextTable {
            features,
            target,
            labels,
        })
    }

    /// `RemoveFeature(D, f_j)` paired with `GetLabels(D, f_j)`.
    pub fn for_target(dataset: &Dataset, j: usize) -> Result<Self, ModelError> {
        ContextTable::new(
            dataset.remove_feature(j),
            dataset.universe().feature(j).clone(),
            dataset.get_labels(j),
        )
    }

    pub fn features(&self) -> &Dataset {
        &self.features
    }

    pub fn target(&self) -> &FeatureDef {
        &self.target
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Target categories that occur in the labels, in category order.
    pub fn seen_classes(&self) -> Vec<u32> {
        let mut seen = vec![false; self.target.cardinality()];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (0..seen.len() as u32).filter(|&c| seen[c as usize]).collect()
    }
}

/// One class distribution per probe row; `None` marks an undefined conditional
/// (the hard evidence matches no context rows).
pub type ProbaRows = Vec<Option<Vec<f64>>>;

/// A model that can be conditioned on a context table.
pub trait ModelBackend: Send + Sync {
    /// Identity reported in rule-set provenance.
    fn id(&self) -> String;

    fn fit_context(&self, context: &ContextTable) -> Result<Box<dyn FittedModel>, ModelError>;
}

/// A backend conditioned on one context; answers `predict_proba` for the held-out feature.
pub trait FittedModel: Send + Sync {
    /// Target categories the returned distributions range over, in order.
    fn classes(&self) -> &[u32];

    /// Expected probe width (the context universe's item count).
    fn width(&self) -> usize;

    fn predict_proba(&self, probes: &Matrix) -> Result<ProbaRows, ModelError>;
}

impl<T: ModelBackend + ?Sized> ModelBackend for std::sync::Arc<T> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn fit_context(&self, context: &ContextTable) -> Result<Box<dyn FittedModel>, ModelError> {
        (**self).fit_context(context)
    }
}

/// Hard evidence read from a probe row: every entry equal to 1.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Evidence {
    items: Vec<Item>,
}

impl Evidence {
    pub fn new(universe: &ItemUniverse, mut items: Vec<Item>) -> Result<Self, ModelError> {
        items.sort_unstable();
        for w in items.windows(2) {
            if universe.feature_of(w[0]) == universe.feature_of(w[1]) {
                return Err(ModelError::InvalidProbe(format!(
                    "two hard items for feature {:?}",
                    universe.feature(universe.feature_of(w[0])).name
                )));
            }
        }
        Ok(Evidence { items })
    }

    /// Fractional entries (priors) carry no hard evidence and are ignored.
    pub fn from_probe_row(universe: &ItemUniverse, row: &[f64]) -> Result<Self, ModelError> {
        if row.len() != universe.m() {
            return Err(ModelError::WidthMismatch {
                expected: universe.m(),
                found: row.len(),
            });
        }
        let mut items = Vec::new();
        for j in 0..universe.k() {
            let block = universe.block(j);
            let mut hard = None;
            for (offset, &v) in row[block.clone()].iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(ModelError::InvalidProbe(format!("entry {v} outside [0,1]")));
                }
                if v == 1.0 {
                    if hard.is_some() {
                        return Err(ModelError::InvalidProbe(format!(
                            "two hard items for feature {:?}",
                            universe.feature(j).name
                        )));
                    }
                    hard = Some(Item(block.start + offset));
                }
            }
            items.extend(hard);
        }
        Ok(Evidence { items })
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Per-probe, per-item predicted probabilities for one marked feature set.
///
/// Only the blocks of predicted features are populated; a populated block can
/// still be undefined on a row when the backend returned no distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    marked: Vec<usize>,
    provenance: Vec<Vec<u32>>,
    values: Matrix,
    defined: Vec<bool>,
    populated: Vec<bool>,
}

impl PredictionMatrix {
    fn empty(universe: &ItemUniverse, probes: &ProbeMatrix) -> Self {
        PredictionMatrix {
            marked: probes.marked_features().to_vec(),
            provenance: (0..probes.len()).map(|r| probes.provenance(r).to_vec()).collect(),
            values: Matrix::zeros(probes.len(), universe.m()),
            defined: vec![false; probes.len() * universe.k()],
            populated: vec![false; universe.k()],
        }
    }

    /// Builds a fully populated matrix from a `rows × m` value matrix and a
    /// row-major `rows × k` definedness mask.
    pub fn from_parts(
        universe: &ItemUniverse,
        probes: &ProbeMatrix,
        values: Matrix,
        defined: Vec<bool>,
    ) -> Result<Self, ModelError> {
        if values.rows() != probes.len() || values.cols() != universe.m() {
            return Err(ModelError::InvalidDistribution(format!(
                "reconstruction is {}x{}, expected {}x{}",
                values.rows(),
                values.cols(),
                probes.len(),
                universe.m()
            )));
        }
        if defined.len() != probes.len() * universe.k() {
            return Err(ModelError::InvalidDistribution(
                "definedness mask has the wrong size".into(),
            ));
        }
        let mut pm = PredictionMatrix::empty(universe, probes);
        pm.values = values;
        pm.defined = defined;
        pm.populated.fill(true);
        Ok(pm)
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn marked_features(&self) -> &[usize] {
        &self.marked
    }

    pub fn provenance(&self, r: usize) -> &[u32] {
        &self.provenance[r]
    }

    pub fn marked_items(&self, universe: &ItemUniverse, r: usize) -> Vec<Item> {
        self.marked
            .iter()
            .zip(&self.provenance[r])
            .map(|(&j, &c)| universe.item(j, c as usize))
            .collect()
    }

    pub fn value(&self, r: usize, item: Item) -> f64 {
        self.values.row(r)[item.0]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        self.values.row(r)
    }

    pub fn is_populated(&self, j: usize) -> bool {
        self.populated[j]
    }

    /// Whether feature `j`'s block on row `r` holds a distribution.
    pub fn is_defined(&self, r: usize, j: usize) -> bool {
        self.defined[r * self.populated.len() + j]
    }
}

/// One fitted context per target feature (`None` for features never predicted).
pub struct FittedFeatures {
    models: Vec<Option<Box<dyn FittedModel>>>,
}

impl FittedFeatures {
    /// Fits the backend once per listed feature on `dataset` minus that feature.
    pub fn fit(
        dataset: &Dataset,
        backend: &dyn ModelBackend,
        targets: &[usize],
        exec: Exec,
    ) -> Result<Self, ModelError> {
        let universe = dataset.universe();
        let fitted = exec.try_map(targets, |&j| {
            ContextTable::for_target(dataset, j)
                .and_then(|ctx| backend.fit_context(&ctx))
                .map(|m| (j, m))
                .map_err(|e| e.for_feature(&universe.feature(j).name))
        })?;
        let mut models: Vec<Option<Box<dyn FittedModel>>> = (0..universe.k()).map(|_| None).collect();
        for (j, m) in fitted {
            models[j] = Some(m);
        }
        Ok(FittedFeatures { models })
    }

    /// Number of fitted contexts.
    pub fn fit_count(&self) -> usize {
        self.models.iter().filter(|m| m.is_some()).count()
    }

    pub fn get(&self, j: usize) -> Option<&dyn FittedModel> {
        self.models[j].as_deref()
    }

    /// Predicts every listed target feature on `probes` and writes each
    /// distribution into that feature's block.
    pub fn assemble(
        &self,
        universe: &ItemUniverse,
        probes: &ProbeMatrix,
        targets: &[usize],
    ) -> Result<PredictionMatrix, ModelError> {
        let mut pm = PredictionMatrix::empty(universe, probes);
        let (values, defined) = self.predict_blocks(universe, probes.values(), targets)?;
        pm.values = values;
        pm.defined = defined;
        for &j in targets {
            pm.populated[j] = true;
        }
        Ok(pm)
    }

    /// Raw form of [`FittedFeatures::assemble`] over any `rows × m` matrix.
    /// Returns the values and a row-major `rows × k` definedness mask.
    pub fn predict_blocks(
        &self,
        universe: &ItemUniverse,
        probes: &Matrix,
        targets: &[usize],
    ) -> Result<(Matrix, Vec<bool>), ModelError> {
        let k = universe.k();
        let mut values = Matrix::zeros(probes.rows(), universe.m());
        let mut defined = vec![false; probes.rows() * k];
        for &j in targets {
            let name = &universe.feature(j).name;
            let model = self.models[j]
                .as_deref()
                .ok_or_else(|| ModelError::InvalidProbe(format!("feature {name:?} has no fitted context")))?;
            let reduced = remove_block(probes, universe, j);
            let out = model.predict_proba(&reduced).map_err(|e| e.for_feature(name))?;
            if out.len() != probes.rows() {
                return Err(ModelError::InvalidDistribution(format!(
                    "{} rows returned for {} probes",
                    out.len(),
                    probes.rows()
                ))
                .for_feature(name));
            }
            let block = universe.block(j);
            for (r, dist) in out.into_iter().enumerate() {
                let Some(dist) = dist else { continue };
                check_distribution(&dist, model.classes().len()).map_err(|e| e.for_feature(name))?;
                let row = values.row_mut(r);
                for (&class, p) in model.classes().iter().zip(dist) {
                    row[block.start + class as usize] = p;
                }
                defined[r * k + j] = true;
            }
        }
        Ok((values, defined))
    }
}

fn check_distribution(dist: &[f64], classes: usize) -> Result<(), ModelError> {
    if dist.len() != classes {
        return Err(ModelError::InvalidDistribution(format!(
            "{} probabilities for {classes} classes",
            dist.len()
        )));
    }
    if dist.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(ModelError::InvalidDistribution(
            "negative or non-finite probability".into(),
        ));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(ModelError::InvalidDistribution(format!("row sums to {sum}")));
    }
    Ok(())
}

/// Fits every feature and assembles the full prediction matrix for `probes`.
pub fn assemble_prediction_matrix(
    dataset: &Dataset,
    backend: &dyn ModelBackend,
    probes: &ProbeMatrix,
) -> Result<PredictionMatrix, ModelError> {
    let all: Vec<usize> = (0..dataset.universe().k()).collect();
    let fitted = FittedFeatures::fit(dataset, backend, &all, Exec::Sequential)?;
    fitted.assemble(dataset.universe(), probes, &all)
}
