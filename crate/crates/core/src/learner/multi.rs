use crate::data::{generate_probe_vectors, Dataset, ItemUniverse, Matrix};
use crate::exec::Exec;
use crate::model::{FittedFeatures, ModelBackend, ModelError, PredictionMatrix};
use crate::rules::{Provenance, RuleSet};

use super::{
    base_report, enumerate_antecedent_feature_sets, over_feature_sets, rules_from_matrix, Extraction, LearnError,
    Thresholds,
};

/// An `m`-wide reconstruction of one probe with a per-feature definedness flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub values: Vec<f64>,
    pub defined: Vec<bool>,
}

/// A model that reconstructs every feature of a probe in one pass.
pub trait ReconstructionModel: Send + Sync {
    fn id(&self) -> String;

    fn universe(&self) -> &ItemUniverse;

    fn reconstruct(&self, probe: &[f64]) -> Result<Reconstruction, ModelError>;

    /// Batch form; returns `rows × m` values and a row-major `rows × k` mask.
    fn reconstruct_batch(&self, probes: &Matrix) -> Result<(Matrix, Vec<bool>), ModelError> {
        let u = self.universe();
        let mut values = Matrix::zeros(probes.rows(), u.m());
        let mut defined = Vec::with_capacity(probes.rows() * u.k());
        for (r, row) in probes.iter_rows().enumerate() {
            let rec = self.reconstruct(row)?;
            if rec.values.len() != u.m() || rec.defined.len() != u.k() {
                return Err(ModelError::InvalidDistribution(
                    "reconstruction has the wrong width".into(),
                ));
            }
            values.row_mut(r).copy_from_slice(&rec.values);
            defined.extend(rec.defined);
        }
        Ok((values, defined))
    }

    /// Fits performed to build the model, for run reports.
    fn fit_count(&self) -> u64 {
        0
    }

    /// Digest of the training data, when known.
    fn dataset_digest(&self) -> String {
        String::new()
    }
}

/// A multi-target model made of one single-target context per feature:
/// feature `j` of the reconstruction is the backend's prediction for `j`
/// given the probe with `j`'s block removed.
pub struct StitchedModel {
    universe: ItemUniverse,
    id: String,
    digest: String,
    fitted: FittedFeatures,
}

impl StitchedModel {
    pub fn fit(dataset: &Dataset, backend: &dyn ModelBackend, exec: Exec) -> Result<Self, ModelError> {
        let all: Vec<usize> = (0..dataset.universe().k()).collect();
        Ok(StitchedModel {
            universe: dataset.universe().clone(),
            id: backend.id(),
            digest: dataset.digest(),
            fitted: FittedFeatures::fit(dataset, backend, &all, exec)?,
        })
    }
}

impl ReconstructionModel for StitchedModel {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn universe(&self) -> &ItemUniverse {
        &self.universe
    }

    fn reconstruct(&self, probe: &[f64]) -> Result<Reconstruction, ModelError> {
        let m = Matrix::from_rows(&[probe.to_vec()], self.universe.m()).ok_or(ModelError::WidthMismatch {
            expected: self.universe.m(),
            found: probe.len(),
        })?;
        let (values, defined) = self.reconstruct_batch(&m)?;
        Ok(Reconstruction {
            values: values.row(0).to_vec(),
            defined,
        })
    }

    fn reconstruct_batch(&self, probes: &Matrix) -> Result<(Matrix, Vec<bool>), ModelError> {
        if probes.cols() != self.universe.m() {
            return Err(ModelError::WidthMismatch {
                expected: self.universe.m(),
                found: probes.cols(),
            });
        }
        let all: Vec<usize> = (0..self.universe.k()).collect();
        self.fitted.predict_blocks(&self.universe, probes, &all)
    }

    fn fit_count(&self) -> u64 {
        self.fitted.fit_count() as u64
    }

    fn dataset_digest(&self) -> String {
        self.digest.clone()
    }
}

/// Antecedent feature sets of size `1..=a` considered by the multi-target paradigm.
pub fn antecedent_candidates(universe: &ItemUniverse, a: usize) -> Vec<Vec<usize>> {
    enumerate_antecedent_feature_sets(universe, a)
}

/// Multi-target extraction: one reconstruction per probe, then the same
/// antecedent and consequent tests as the single-target paradigm.
pub fn extract_rules_multi_target(
    model: &dyn ReconstructionModel,
    candidates: &[Vec<usize>],
    thresholds: &Thresholds,
    exec: Exec,
) -> Result<Extraction, LearnError> {
    thresholds.validate()?;
    let universe = model.universe();
    let per_set = over_feature_sets(candidates, exec, |s| {
        let probes = generate_probe_vectors(s, universe).map_err(|e| ModelError::InvalidProbe(e.to_string()))?;
        let (values, defined) = model.reconstruct_batch(probes.values())?;
        let pm = PredictionMatrix::from_parts(universe, &probes, values, defined)?;
        Ok(rules_from_matrix(&pm, universe, thresholds.tau_a, thresholds.tau_c))
    })?;

    let mut report = base_report("multi-target", universe, candidates, model.fit_count());
    report.unbatched_fit_count = model.fit_count();
    report.predicted_rows = report.probe_count;
    let mut rules = Vec::new();
    for (r, skipped) in per_set {
        rules.extend(r);
        report.skipped_antecedents += skipped;
    }
    let prov = Provenance {
        backend: model.id(),
        thresholds: thresholds.rule_map(),
        dataset_digest: model.dataset_digest(),
        probe_count: report.probe_count,
        fit_count: report.fit_count,
    };
    Ok(Extraction {
        rules: RuleSet::new(universe, rules, prov),
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::t1;
    use crate::data::{FeatureDef, Item};
    use crate::learner::extract_rules_single_target;
    use crate::model::EmpiricalBackend;

    #[test]
    fn stitched_matches_single_target_on_toy_table() {
        let d = t1();
        let b = EmpiricalBackend::exact();
        let t = Thresholds::new(0.5, 0.8, 2).unwrap();
        let single = extract_rules_single_target(&d, &b, &t, Exec::Sequential).unwrap();
        let model = StitchedModel::fit(&d, &b, Exec::Sequential).unwrap();
        let multi =
            extract_rules_multi_target(&model, &antecedent_candidates(d.universe(), 2), &t, Exec::Sequential).unwrap();
        assert_eq!(single.rules, multi.rules);
    }

    /// Fixed reconstruction over two binary features.
    struct Fixed {
        universe: ItemUniverse,
        values: Vec<f64>,
    }

    impl ReconstructionModel for Fixed {
        fn id(&self) -> String {
            "fixed".into()
        }
        fn universe(&self) -> &ItemUniverse {
            &self.universe
        }
        fn reconstruct(&self, _: &[f64]) -> Result<Reconstruction, ModelError> {
            Ok(Reconstruction {
                values: self.values.clone(),
                defined: vec![true; 2],
            })
        }
    }

    fn fixed(values: Vec<f64>) -> Fixed {
        let f = |n: &str| FeatureDef::new(n, ["x", "y"]).unwrap();
        Fixed {
            universe: ItemUniverse::new(vec![f("P"), f("Q")]).unwrap(),
            values,
        }
    }

    #[test]
    fn antecedent_threshold_is_inclusive() {
        let m = fixed(vec![0.6, 0.4, 0.9, 0.1]);
        let t = Thresholds::new(0.6, 0.8, 1).unwrap();
        let out = extract_rules_multi_target(&m, &[vec![0]], &t, Exec::Sequential).unwrap();
        // Probe P=x is reconstructed at exactly τ_a; P=y at 0.4 is rejected.
        assert_eq!(out.rules.keys(), vec![(vec![Item(0)], Item(2))]);
        assert_eq!(out.rules.rules()[0].validity, 0.9);
    }

    #[test]
    fn unmarked_mass_above_tau_c_becomes_consequent() {
        let m = fixed(vec![1.0, 0.0, 0.1, 0.9]);
        let t = Thresholds::new(0.5, 0.8, 1).unwrap();
        let out = extract_rules_multi_target(&m, &[vec![0]], &t, Exec::Sequential).unwrap();
        assert_eq!(out.rules.keys(), vec![(vec![Item(0)], Item(3))]);
    }
}
