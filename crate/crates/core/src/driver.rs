//! The driver affective-state network: mental load (ML) and active fatigue
//! (AF) as Bernoulli roots driving heart-rate variability and respiration
//! measures, with sex, age and BMI as base covariates of every node.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    log_prior, Covariate, CovariateSchema, Dataset, ModelSpec, NodeSpec, NormalPrior, ParameterVector, UniformPrior,
};
use crate::predictive::ancestral_sample;

pub const BASE_COVARIATES: [&str; 3] = ["Sex", "Age", "BMI"];

/// Share of men in the reference cohort (9 of 17).
pub const P_MAN: f64 = 9.0 / 17.0;
pub const AGE_RANGE: (f64, f64) = (24.0, 61.0);
pub const BMI_RANGE: (f64, f64) = (17.65, 35.16);

/// Observed range and mean of each physiological node in the reference
/// cohort: (name, unit, lo, hi, mean).
pub const NODE_REFERENCE: [(&str, &str, f64, f64, f64); 5] = [
    ("SRT", "ms", 19.45, 191.76, 63.07),
    ("SDD", "ms", 14.38, 104.16, 53.17),
    ("MHR", "bpm", 46.08, 152.09, 73.94),
    ("RLH", "ratio", 0.17, 29.91, 3.51),
    ("MNB", "breaths/min", 9.42, 23.38, 15.26),
];

fn coefficient_prior() -> NormalPrior {
    NormalPrior::new(0.0, 25.0)
}

fn sigma_prior() -> UniformPrior {
    UniformPrior::new(0.0, 30.0)
}

pub fn bertha_preset() -> ModelSpec {
    let covariates = CovariateSchema::new(vec![
        Covariate::binary("Sex").with_unit("1 = man, 0 = woman"),
        Covariate::continuous("Age")
            .with_unit("years")
            .with_range(AGE_RANGE.0, AGE_RANGE.1),
        Covariate::continuous("BMI")
            .with_unit("kg/m^2")
            .with_range(BMI_RANGE.0, BMI_RANGE.1),
    ]);
    let g = |name: &str, parents: &[&str]| {
        NodeSpec::gaussian(name, &BASE_COVARIATES, parents, coefficient_prior(), sigma_prior())
    };
    let nodes = vec![
        NodeSpec::bernoulli("ML", &BASE_COVARIATES, &[], coefficient_prior()),
        NodeSpec::bernoulli("AF", &BASE_COVARIATES, &[], coefficient_prior()),
        g("SDD", &["AF", "ML"]),
        g("MHR", &["SDD", "AF", "ML"]),
        g("RLH", &["MHR", "SDD", "AF", "ML"]),
        g("SRT", &["RLH", "MHR", "SDD"]),
        g("MNB", &["SRT"]),
    ];
    ModelSpec::new(covariates, nodes).expect("preset is a valid network")
}

/// Reference parameters for simulation studies. Intercepts stay within a
/// few prior standard deviations of zero; node means land near the cohort
/// means in [`NODE_REFERENCE`] under [`synth_covariates`].
pub const REFERENCE_THETA: [(&str, f64); 46] = [
    ("ML.b0", 2.5),
    ("ML.b.Sex", 0.2),
    ("ML.b.Age", -0.06),
    ("ML.b.BMI", 0.0),
    ("AF.b0", 1.5),
    ("AF.b.Sex", -0.1),
    ("AF.b.Age", -0.05),
    ("AF.b.BMI", 0.02),
    ("SDD.b0", 6.0),
    ("SDD.b.Sex", -2.0),
    ("SDD.b.Age", 0.3),
    ("SDD.b.BMI", 1.5),
    ("SDD.b.AF", -5.0),
    ("SDD.b.ML", -4.0),
    ("MHR.b0", 8.0),
    ("MHR.b.Sex", -3.0),
    ("MHR.b.Age", 0.2),
    ("MHR.b.BMI", 1.8),
    ("MHR.b.SDD", 0.15),
    ("MHR.b.AF", 4.0),
    ("MHR.b.ML", 5.0),
    ("RLH.b0", -1.6),
    ("RLH.b.Sex", 0.2),
    ("RLH.b.Age", -0.01),
    ("RLH.b.BMI", 0.05),
    ("RLH.b.MHR", 0.06),
    ("RLH.b.SDD", -0.02),
    ("RLH.b.AF", 0.5),
    ("RLH.b.ML", 0.8),
    ("SRT.b0", 3.0),
    ("SRT.b.Sex", 2.0),
    ("SRT.b.Age", -0.3),
    ("SRT.b.BMI", 0.5),
    ("SRT.b.RLH", 1.5),
    ("SRT.b.MHR", 0.2),
    ("SRT.b.SDD", 0.75),
    ("MNB.b0", 4.0),
    ("MNB.b.Sex", -0.5),
    ("MNB.b.Age", 0.05),
    ("MNB.b.BMI", 0.25),
    ("MNB.b.SRT", 0.04),
    ("SDD.sigma", 12.0),
    ("MHR.sigma", 8.0),
    ("RLH.sigma", 1.5),
    ("SRT.sigma", 15.0),
    ("MNB.sigma", 2.5),
];

pub fn reference_theta(model: &ModelSpec) -> Result<ParameterVector> {
    let named: BTreeMap<String, f64> = REFERENCE_THETA.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    ParameterVector::from_named(model, &named)
}

/// Rows of (Sex, Age, BMI): Sex ~ Bernoulli(9/17), Age and BMI uniform over
/// the cohort ranges.
pub fn synth_covariates(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let sex = if rng.random::<f64>() < P_MAN { 1.0 } else { 0.0 };
            let age = rng.random_range(AGE_RANGE.0..AGE_RANGE.1);
            let bmi = rng.random_range(BMI_RANGE.0..BMI_RANGE.1);
            vec![sex, age, bmi]
        })
        .collect()
}

/// Simulates a complete dataset from `params` for any model whose covariate
/// schema is (Sex, Age, BMI).
pub fn synth_dataset(model: &ModelSpec, params: &ParameterVector, n: usize, seed: u64) -> Result<Dataset> {
    let names: Vec<&str> = model.covariates().entries.iter().map(|c| c.name.as_str()).collect();
    if names != BASE_COVARIATES {
        return Err(Error::SchemaMismatch(format!(
            "synthetic data needs covariates {BASE_COVARIATES:?}, model has {names:?}"
        )));
    }
    if params.len() != model.n_params() {
        return Err(Error::SchemaMismatch("parameter vector length".into()));
    }
    if !log_prior(model, params).is_finite() {
        return Err(Error::Domain("parameters outside the prior support".into()));
    }
    let covariates = synth_covariates(n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let nodes: Vec<Vec<f64>> = covariates
        .iter()
        .map(|row| ancestral_sample(model, params, row, &mut rng))
        .collect();
    Dataset::from_rows(model, &covariates, &nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Family;

    #[test]
    fn preset_structure() {
        let m = bertha_preset();
        let parents = |n: &str| m.node(m.node_index(n).unwrap()).parents.clone();
        assert_eq!(parents("SRT"), vec!["RLH", "MHR", "SDD"]);
        assert_eq!(parents("MNB"), vec!["SRT"]);
        assert_eq!(parents("SDD"), vec!["AF", "ML"]);
        assert_eq!(parents("MHR"), vec!["SDD", "AF", "ML"]);
        assert_eq!(parents("RLH"), vec!["MHR", "SDD", "AF", "ML"]);
        assert_eq!(m.n_nodes(), 7);
        assert_eq!(
            m.topo_order_names(),
            vec!["AF", "ML", "SDD", "MHR", "RLH", "SRT", "MNB"]
        );
        for n in m.nodes() {
            assert_eq!(n.covariates, BASE_COVARIATES);
            assert!(n.coefficient_priors.iter().all(|p| p.mean == 0.0 && p.variance == 25.0));
            match n.family {
                Family::GaussianLinear => assert_eq!(n.sigma_prior, Some(UniformPrior::new(0.0, 30.0))),
                Family::BernoulliLogistic => assert!(n.parents.is_empty()),
            }
        }
        assert_eq!(m.n_params(), 46);
        assert!(reference_theta(&m).is_ok());
    }

    #[test]
    fn covariates_stay_in_range() {
        let rows = synth_covariates(100_000, 3);
        let men = rows.iter().filter(|r| r[0] == 1.0).count() as f64 / rows.len() as f64;
        assert!((men - P_MAN).abs() < 0.01, "{men}");
        for r in &rows {
            assert!(r[0] == 0.0 || r[0] == 1.0);
            assert!(r[1] >= 24.0 && r[1] <= 61.0);
            assert!(r[2] >= 17.65 && r[2] <= 35.16);
        }
        assert_eq!(synth_covariates(10, 4), synth_covariates(10, 4));
    }

    #[test]
    fn fair_root_coins() {
        let m = bertha_preset();
        let mut p = reference_theta(&m).unwrap();
        for root in ["AF", "ML"] {
            let v = m.node_index(root).unwrap();
            p.coefficients_mut(&m, v).fill(0.0);
        }
        let data = synth_dataset(&m, &p, 100_000, 8).unwrap();
        let af = data.node_column(m.node_index("AF").unwrap());
        let rate = af.iter().sum::<f64>() / af.len() as f64;
        assert!((rate - 0.5).abs() < 0.01, "{rate}");
    }

    #[test]
    fn reference_theta_matches_cohort_means() {
        let m = bertha_preset();
        let p = reference_theta(&m).unwrap();
        let data = synth_dataset(&m, &p, 200_000, 1).unwrap();
        for (name, _, _, _, mean) in NODE_REFERENCE {
            let col = data.node_column(m.node_index(name).unwrap());
            let sim = col.iter().sum::<f64>() / col.len() as f64;
            assert!(
                (sim - mean).abs() < 0.05 * mean,
                "{name}: simulated {sim}, cohort {mean}"
            );
        }
    }

    #[test]
    fn inadmissible_parameters_are_rejected() {
        let m = bertha_preset();
        let mut p = reference_theta(&m).unwrap();
        p.set_sigma(&m, m.node_index("MNB").unwrap(), 45.0);
        assert!(synth_dataset(&m, &p, 10, 1).is_err());
    }
}
