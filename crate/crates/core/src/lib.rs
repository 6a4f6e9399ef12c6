//! Association rule learning from conditional probabilistic models.
//!
//! The crate extracts association rules and frequent itemsets from any model
//! that can answer conditional queries `P(item | observed items)` over a
//! categorical table. Rules are found by probing the model with vectors that
//! mark a candidate antecedent and leave every other feature at a uniform
//! prior, then thresholding the predicted probabilities.
//!
//! Module map:
//!
//! * [`data`]: tables, item universes, discretization and probe vectors.
//! * [`model`]: the model contract, the exact empirical backend and the
//!   stdio bridge client for external model servers.
//! * [`learner`]: single-target, multi-target and frequent-itemset extraction.
//! * [`metrics`]: support, confidence, coverage, Zhang's metric, interestingness.
//! * [`miner`]: exhaustive levelwise support/confidence miner used as a baseline.
//! * [`classifier`]: ordered rule-list classifier and cross-validation harness.
//! * [`exec`]: sequential / rayon execution policy shared by all of the above.

pub mod bitset;
pub mod classifier;
pub mod data;
pub mod exec;
pub mod learner;
pub mod metrics;
pub mod miner;
pub mod model;
pub mod rules;

pub use data::{Dataset, FeatureDef, Item, ItemUniverse, ProbeMatrix};
pub use exec::Exec;
pub use learner::Thresholds;
pub use model::{EmpiricalBackend, ModelBackend, PredictionMatrix};
pub use rules::{FrequentItemset, Rule, RuleSet};
