//! Posterior predictive simulation and evidence-conditioned queries over the
//! discrete nodes.
//!
//! A query enumerates every joint state of the target nodes. Per posterior
//! draw and state, unobserved discrete nodes that matter are enumerated as
//! well, and unobserved continuous nodes that matter are integrated out by
//! likelihood weighting: they are drawn forward from their conditionals with
//! fixed parents plugged in, and each sample is weighted by the densities of
//! every fixed node (observed, target or enumerated). Nodes that are not
//! ancestors of any observed or target node integrate to one and are skipped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{logistic, CovariateKind, Family, ModelSpec, ParameterVector};
use crate::sampler::PosteriorSample;

/// Covariate row (all covariates) plus point observations of any subset of
/// nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    covariates: Vec<f64>,
    observed: Vec<Option<f64>>,
}

impl Evidence {
    /// Resolves `name = value` pairs against the model. Every covariate must
    /// be given; binary covariates and Bernoulli nodes take only 0 or 1.
    pub fn new(model: &ModelSpec, pairs: &[(String, f64)]) -> Result<Self> {
        let mut covariates = vec![None; model.covariates().len()];
        let mut observed = vec![None; model.n_nodes()];
        for (name, value) in pairs {
            if !value.is_finite() {
                return Err(Error::Evidence(format!("value of `{name}` is not finite")));
            }
            if let Some(c) = model.covariate_index(name) {
                if covariates[c].is_some() {
                    return Err(Error::Evidence(format!("`{name}` given twice")));
                }
                if model.covariates().entries[c].kind == CovariateKind::Binary && *value != 0.0 && *value != 1.0 {
                    return Err(Error::Evidence(format!(
                        "binary covariate `{name}` must be 0 or 1, got {value}"
                    )));
                }
                covariates[c] = Some(*value);
            } else if let Some(v) = model.node_index(name) {
                if observed[v].is_some() {
                    return Err(Error::Evidence(format!("`{name}` given twice")));
                }
                if model.node(v).is_discrete() && *value != 0.0 && *value != 1.0 {
                    return Err(Error::Evidence(format!(
                        "discrete node `{name}` must be 0 or 1, got {value}"
                    )));
                }
                observed[v] = Some(*value);
            } else {
                return Err(Error::Evidence(format!("unknown variable `{name}`")));
            }
        }
        let covariates = covariates
            .into_iter()
            .enumerate()
            .map(|(c, x)| {
                x.ok_or_else(|| {
                    Error::Evidence(format!(
                        "covariate `{}` is required",
                        model.covariates().entries[c].name
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Evidence { covariates, observed })
    }

    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    pub fn observed(&self) -> &[Option<f64>] {
        &self.observed
    }
}

fn draw_node<R: Rng + ?Sized>(model: &ModelSpec, params: &ParameterVector, node: usize, eta: f64, rng: &mut R) -> f64 {
    match model.node(node).family {
        Family::GaussianLinear => {
            let sigma = params.sigma(model, node).expect("gaussian node has sigma");
            let z: f64 = rng.sample(StandardNormal);
            eta + sigma * z
        }
        Family::BernoulliLogistic => {
            let u: f64 = rng.random();
            if u < logistic(eta) {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// One forward draw of every node (declaration order) given the covariates.
pub fn ancestral_sample<R: Rng + ?Sized>(
    model: &ModelSpec,
    params: &ParameterVector,
    covariates: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let mut values = vec![0.0; model.n_nodes()];
    for &v in model.topo_order() {
        let eta = model.linear_predictor_at(v, params, covariates, &values);
        values[v] = draw_node(model, params, v, eta, rng);
    }
    values
}

/// `n_per_draw` forward draws for every kept posterior draw, draw-major.
pub fn posterior_predictive<R: Rng + ?Sized>(
    model: &ModelSpec,
    posterior: &PosteriorSample,
    covariates: &[f64],
    n_per_draw: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    posterior.check_model(model)?;
    if covariates.len() != model.covariates().len() {
        return Err(Error::SchemaMismatch("covariate row length".into()));
    }
    let mut out = Vec::with_capacity(posterior.total_draws() * n_per_draw);
    if n_per_draw == 0 {
        return Ok(out);
    }
    for draw in posterior.iter_draws() {
        let params = ParameterVector::new(model, draw.to_vec())?;
        for _ in 0..n_per_draw {
            out.push(ancestral_sample(model, &params, covariates, rng));
        }
    }
    Ok(out)
}

/// How per-draw results are combined into the reported table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    /// Normalize the state weights within each posterior draw, then average
    /// the conditional probabilities over draws.
    #[default]
    DrawAverage,
    /// Sum the unnormalized state weights over draws, then normalize once.
    Pooled,
}

impl Averaging {
    pub fn label(&self) -> &'static str {
        match self {
            Averaging::DrawAverage => "draw-average",
            Averaging::Pooled => "pooled",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOptions {
    /// Likelihood-weighting samples per (draw, state).
    pub latent_draws: usize,
    pub averaging: Averaging,
    /// Use at most this many posterior draws, evenly spaced.
    pub max_draws: Option<usize>,
    pub seed: u64,
}

impl Default for QueryOptions {
    fn default() -> Self {
        QueryOptions {
            latent_draws: 8,
            averaging: Averaging::DrawAverage,
            max_draws: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub targets: Vec<String>,
    /// Joint target states; the first target varies slowest.
    pub states: Vec<Vec<u8>>,
    pub probabilities: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub draws_used: usize,
    /// Forward samples per (draw, state); 1 when no continuous node needs
    /// integrating and the weights are exact.
    pub latent_draws_per_state: usize,
    pub averaging: Averaging,
}

impl QueryResult {
    pub fn state_label(&self, state: usize) -> String {
        self.targets
            .iter()
            .zip(&self.states[state])
            .map(|(t, s)| format!("{t}={s}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Role {
    Observed,
    Target(usize),
    Enumerated(usize),
    Sampled,
}

struct QueryPlan {
    targets: Vec<usize>,
    enumerated: Vec<usize>,
    /// Relevant nodes in topological order with their role.
    active: Vec<(usize, Role)>,
    sampling: bool,
}

impl QueryPlan {
    fn new(model: &ModelSpec, evidence: &Evidence, targets: &[String]) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Evidence("at least one target is required".into()));
        }
        let mut target_idx = Vec::with_capacity(targets.len());
        for t in targets {
            let v = model
                .node_index(t)
                .ok_or_else(|| Error::Evidence(format!("unknown target `{t}`")))?;
            if !model.node(v).is_discrete() {
                return Err(Error::Evidence(format!("target `{t}` is not a discrete node")));
            }
            if evidence.observed()[v].is_some() {
                return Err(Error::TargetObserved(t.clone()));
            }
            if target_idx.contains(&v) {
                return Err(Error::Evidence(format!("target `{t}` listed twice")));
            }
            target_idx.push(v);
        }

        // Ancestral closure of observed and target nodes.
        let n = model.n_nodes();
        let mut relevant = vec![false; n];
        let mut stack: Vec<usize> = (0..n)
            .filter(|&v| evidence.observed()[v].is_some() || target_idx.contains(&v))
            .collect();
        while let Some(v) = stack.pop() {
            if relevant[v] {
                continue;
            }
            relevant[v] = true;
            stack.extend(model.parent_indices(v).iter().copied().filter(|&p| !relevant[p]));
        }

        let mut enumerated = Vec::new();
        let mut active = Vec::new();
        let mut sampling = false;
        for &v in model.topo_order() {
            if !relevant[v] {
                continue;
            }
            let role = if evidence.observed()[v].is_some() {
                Role::Observed
            } else if let Some(k) = target_idx.iter().position(|&t| t == v) {
                Role::Target(k)
            } else if model.node(v).is_discrete() {
                enumerated.push(v);
                Role::Enumerated(enumerated.len() - 1)
            } else {
                sampling = true;
                Role::Sampled
            };
            active.push((v, role));
        }
        if enumerated.len() > 20 {
            return Err(Error::Evidence(
                "too many unobserved discrete nodes to enumerate".into(),
            ));
        }
        Ok(QueryPlan {
            targets: target_idx,
            enumerated,
            active,
            sampling,
        })
    }
}

/// Per-draw state weights scaled by `exp(-log_scale)` with their sampling
/// variances.
struct DrawWeights {
    log_scale: f64,
    weights: Vec<f64>,
    variances: Vec<f64>,
}

fn draw_weights<R: Rng + ?Sized>(
    model: &ModelSpec,
    params: &ParameterVector,
    evidence: &Evidence,
    plan: &QueryPlan,
    latent_draws: usize,
    log_offset: f64,
    rng: &mut R,
) -> Result<DrawWeights> {
    let n_states = 1usize << plan.targets.len();
    let n_enum = 1usize << plan.enumerated.len();
    let n_lat = if plan.sampling { latent_draws } else { 1 };
    let cov = evidence.covariates();
    let mut values = vec![0.0; model.n_nodes()];
    for (v, obs) in evidence.observed().iter().enumerate() {
        if let Some(x) = obs {
            values[v] = *x;
        }
    }
    let k_t = plan.targets.len();
    let k_e = plan.enumerated.len();
    // log weights indexed [state][enum * n_lat + l]
    let mut logw = vec![vec![0.0; n_enum * n_lat]; n_states];
    for (s, row) in logw.iter_mut().enumerate() {
        for d in 0..n_enum {
            for l in 0..n_lat {
                let mut lw = log_offset;
                for &(v, role) in &plan.active {
                    let eta = model.linear_predictor_at(v, params, cov, &values);
                    match role {
                        Role::Sampled => {
                            values[v] = draw_node(model, params, v, eta, rng);
                            continue;
                        }
                        Role::Target(k) => values[v] = ((s >> (k_t - 1 - k)) & 1) as f64,
                        Role::Enumerated(k) => values[v] = ((d >> (k_e - 1 - k)) & 1) as f64,
                        Role::Observed => {}
                    }
                    let sigma = params.sigma(model, v);
                    lw += model.node(v).log_density(eta, sigma, values[v])?;
                }
                row[d * n_lat + l] = lw;
            }
        }
    }

    let log_scale = logw.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights = vec![0.0; n_states];
    let mut variances = vec![0.0; n_states];
    if log_scale == f64::NEG_INFINITY {
        return Ok(DrawWeights {
            log_scale,
            weights,
            variances,
        });
    }
    let l = n_lat as f64;
    for s in 0..n_states {
        for d in 0..n_enum {
            let ws: Vec<f64> = logw[s][d * n_lat..(d + 1) * n_lat]
                .iter()
                .map(|x| (x - log_scale).exp())
                .collect();
            let mean = ws.iter().sum::<f64>() / l;
            weights[s] += mean;
            if n_lat > 1 {
                let var = ws.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / (l - 1.0);
                variances[s] += var / l;
            }
        }
    }
    Ok(DrawWeights {
        log_scale,
        weights,
        variances,
    })
}

/// Normalized probabilities and delta-method variances of `w_s / sum_t w_t`.
fn normalize(weights: &[f64], variances: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let var_total: f64 = variances.iter().sum();
    let vars = probs
        .iter()
        .zip(variances)
        .map(|(&p, &v)| ((1.0 - p) * (1.0 - p) * v + p * p * (var_total - v)) / (total * total))
        .collect();
    (probs, vars)
}

fn selected_draws(posterior: &PosteriorSample, max_draws: Option<usize>) -> Vec<&[f64]> {
    let all: Vec<&[f64]> = posterior.iter_draws().collect();
    match max_draws {
        Some(k) if k < all.len() => (0..k).map(|i| all[i * all.len() / k]).collect(),
        _ => all,
    }
}

fn query_impl(
    model: &ModelSpec,
    posterior: &PosteriorSample,
    evidence: &Evidence,
    targets: &[String],
    options: &QueryOptions,
    log_offset: f64,
) -> Result<QueryResult> {
    posterior.check_model(model)?;
    if options.latent_draws == 0 {
        return Err(Error::Evidence("latent_draws must be at least 1".into()));
    }
    let plan = QueryPlan::new(model, evidence, targets)?;
    let n_states = 1usize << plan.targets.len();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);

    let mut per_draw = Vec::new();
    for draw in selected_draws(posterior, options.max_draws) {
        let params = ParameterVector::new(model, draw.to_vec())?;
        per_draw.push(draw_weights(
            model,
            &params,
            evidence,
            &plan,
            options.latent_draws,
            log_offset,
            &mut rng,
        )?);
    }
    let valid: Vec<&DrawWeights> = per_draw.iter().filter(|d| d.log_scale > f64::NEG_INFINITY).collect();
    if valid.is_empty() {
        return Err(Error::AllWeightsZero);
    }

    let (mut probabilities, variances) = match options.averaging {
        Averaging::DrawAverage => {
            let m = valid.len() as f64;
            let mut probs = vec![0.0; n_states];
            let mut vars = vec![0.0; n_states];
            for d in &valid {
                let (p, v) = normalize(&d.weights, &d.variances);
                for s in 0..n_states {
                    probs[s] += p[s];
                    vars[s] += v[s];
                }
            }
            (
                probs.iter().map(|p| p / m).collect::<Vec<_>>(),
                vars.iter().map(|v| v / (m * m)).collect::<Vec<_>>(),
            )
        }
        Averaging::Pooled => {
            let scales: Vec<f64> = valid.iter().map(|d| d.log_scale).collect();
            let top = scales.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut weights = vec![0.0; n_states];
            let mut vars = vec![0.0; n_states];
            for d in &valid {
                let f = (d.log_scale - top).exp();
                for s in 0..n_states {
                    weights[s] += d.weights[s] * f;
                    vars[s] += d.variances[s] * f * f;
                }
            }
            normalize(&weights, &vars)
        }
    };
    let total: f64 = probabilities.iter().sum();
    for p in probabilities.iter_mut() {
        *p /= total;
    }
    let k = plan.targets.len();
    let states = (0..n_states)
        .map(|s| (0..k).map(|j| ((s >> (k - 1 - j)) & 1) as u8).collect())
        .collect();
    Ok(QueryResult {
        targets: targets.to_vec(),
        states,
        probabilities,
        std_errors: variances.iter().map(|v| v.max(0.0).sqrt()).collect(),
        draws_used: valid.len(),
        latent_draws_per_state: if plan.sampling { options.latent_draws } else { 1 },
        averaging: options.averaging,
    })
}

/// P(targets | evidence, data) over all joint target states.
pub fn query(
    model: &ModelSpec,
    posterior: &PosteriorSample,
    evidence: &Evidence,
    targets: &[String],
    options: &QueryOptions,
) -> Result<QueryResult> {
    query_impl(model, posterior, evidence, targets, options, 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub coordinates: Vec<(String, f64)>,
    pub result: QueryResult,
}

/// Query seed for one grid point, derived from the master seed and the
/// point's sorted coordinates so that reordering axes does not change it.
fn point_seed(seed: u64, coords: &[(String, f64)]) -> u64 {
    let mut sorted: Vec<&(String, f64)> = coords.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for (name, value) in sorted {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update(value.to_bits().to_le_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Runs `query` at every point of the Cartesian product of `grid` (first axis
/// slowest), each combined with `fixed` evidence.
pub fn sweep(
    model: &ModelSpec,
    posterior: &PosteriorSample,
    fixed: &[(String, f64)],
    grid: &[GridAxis],
    targets: &[String],
    options: &QueryOptions,
) -> Result<Vec<SweepPoint>> {
    for (i, axis) in grid.iter().enumerate() {
        if fixed.iter().any(|(n, _)| *n == axis.name) {
            return Err(Error::Evidence(format!(
                "grid variable `{}` is also fixed evidence",
                axis.name
            )));
        }
        if grid[..i].iter().any(|a| a.name == axis.name) {
            return Err(Error::Evidence(format!("grid variable `{}` listed twice", axis.name)));
        }
        if axis.values.is_empty() {
            return Err(Error::Evidence(format!("grid axis `{}` has no values", axis.name)));
        }
    }
    let mut points: Vec<Vec<(String, f64)>> = vec![Vec::new()];
    for axis in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |&x| {
                    let mut q = p.clone();
                    q.push((axis.name.clone(), x));
                    q
                })
            })
            .collect();
    }
    points
        .into_par_iter()
        .map(|coords| {
            let mut pairs = fixed.to_vec();
            pairs.extend(coords.iter().cloned());
            let evidence = Evidence::new(model, &pairs)?;
            let opts = QueryOptions {
                seed: point_seed(options.seed, &coords),
                ..options.clone()
            };
            let result = query(model, posterior, &evidence, targets, &opts)?;
            Ok(SweepPoint {
                coordinates: coords,
                result,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Covariate, CovariateSchema, NodeSpec, NormalPrior, UniformPrior};

    fn prior() -> NormalPrior {
        NormalPrior::new(0.0, 25.0)
    }

    fn two_coins() -> ModelSpec {
        let covs = CovariateSchema::new(vec![Covariate::binary("Sex"), Covariate::continuous("Age")]);
        let nodes = vec![
            NodeSpec::bernoulli("AF", &["Sex", "Age"], &[], prior()),
            NodeSpec::bernoulli("ML", &["Sex", "Age"], &[], prior()),
            NodeSpec::gaussian("MNB", &[], &["AF", "ML"], prior(), UniformPrior::new(0.0, 30.0)),
        ];
        ModelSpec::new(covs, nodes).unwrap()
    }

    fn pairs(xs: &[(&str, f64)]) -> Vec<(String, f64)> {
        xs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn strings(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn evidence_validation() {
        let m = two_coins();
        assert!(Evidence::new(&m, &pairs(&[("Sex", 0.0)])).is_err());
        assert!(Evidence::new(&m, &pairs(&[("Sex", 2.0), ("Age", 3.0)])).is_err());
        assert!(Evidence::new(&m, &pairs(&[("Sex", 0.0), ("Age", 3.0), ("AF", 0.5)])).is_err());
        assert!(Evidence::new(&m, &pairs(&[("Sex", 0.0), ("Age", 3.0), ("Age", 4.0)])).is_err());
        assert!(Evidence::new(&m, &pairs(&[("Sex", 0.0), ("Age", 3.0), ("XYZ", 4.0)])).is_err());
        let e = Evidence::new(&m, &pairs(&[("Age", 3.0), ("Sex", 1.0), ("MNB", 2.5)])).unwrap();
        assert_eq!(e.covariates(), &[1.0, 3.0]);
        assert_eq!(e.observed(), &[None, None, Some(2.5)]);
    }

    #[test]
    fn fair_coins_without_node_evidence() {
        let m = two_coins();
        let post = PosteriorSample::from_draws(&m, &[ParameterVector::filled(&m, 0.0, 1.0)]).unwrap();
        let e = Evidence::new(&m, &pairs(&[("Sex", 0.0), ("Age", 20.0)])).unwrap();
        let r = query(&m, &post, &e, &strings(&["AF", "ML"]), &QueryOptions::default()).unwrap();
        assert_eq!(r.probabilities.len(), 4);
        for p in &r.probabilities {
            assert!((p - 0.25).abs() < 1e-15);
        }
        assert_eq!(r.latent_draws_per_state, 1);
        assert_eq!(r.state_label(2), "AF=1,ML=0");
    }

    #[test]
    fn observed_target_is_rejected() {
        let m = two_coins();
        let post = PosteriorSample::from_draws(&m, &[ParameterVector::filled(&m, 0.0, 1.0)]).unwrap();
        let e = Evidence::new(&m, &pairs(&[("Sex", 0.0), ("Age", 20.0), ("AF", 1.0)])).unwrap();
        assert!(matches!(
            query(&m, &post, &e, &strings(&["AF"]), &QueryOptions::default()),
            Err(Error::TargetObserved(t)) if t == "AF"
        ));
        let r = query(&m, &post, &e, &strings(&["ML"]), &QueryOptions::default()).unwrap();
        assert_eq!(r.targets, vec!["ML"]);
        assert!((r.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(query(&m, &post, &e, &strings(&["MNB"]), &QueryOptions::default()).is_err());
    }

    #[test]
    fn impossible_evidence_is_reported() {
        let m = two_coins();
        let mut p = ParameterVector::filled(&m, 0.0, 1.0);
        // The ML predictor overflows to -inf, so P(ML = 1) is exactly zero.
        p.coefficients_mut(&m, 1)[2] = -1e308;
        let post = PosteriorSample::from_draws(&m, &[p]).unwrap();
        let e = Evidence::new(&m, &pairs(&[("Sex", 0.0), ("Age", 20.0), ("ML", 1.0)])).unwrap();
        assert!(matches!(
            query(&m, &post, &e, &strings(&["AF"]), &QueryOptions::default()),
            Err(Error::AllWeightsZero)
        ));
    }

    #[test]
    fn log_offset_does_not_change_the_answer() {
        let m = two_coins();
        let mut p = ParameterVector::filled(&m, 0.3, 1.3);
        p.coefficients_mut(&m, 2)[1] = 1.5;
        let post = PosteriorSample::from_draws(&m, &[p.clone(), ParameterVector::filled(&m, -0.2, 0.8)]).unwrap();
        let e = Evidence::new(&m, &pairs(&[("Sex", 1.0), ("Age", 0.5), ("MNB", 1.1)])).unwrap();
        for averaging in [Averaging::DrawAverage, Averaging::Pooled] {
            let opts = QueryOptions {
                averaging,
                ..Default::default()
            };
            let base = query_impl(&m, &post, &e, &strings(&["AF", "ML"]), &opts, 0.0).unwrap();
            for offset in [-700.0, -3.5, 250.0] {
                let shifted = query_impl(&m, &post, &e, &strings(&["AF", "ML"]), &opts, offset).unwrap();
                for (a, b) in base.probabilities.iter().zip(&shifted.probabilities) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn posterior_predictive_shapes() {
        let m = two_coins();
        let draws = [
            ParameterVector::filled(&m, 0.0, 1.0),
            ParameterVector::filled(&m, 0.1, 2.0),
        ];
        let post = PosteriorSample::from_draws(&m, &draws).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(posterior_predictive(&m, &post, &[0.0, 1.0], 0, &mut rng)
            .unwrap()
            .is_empty());
        let out = posterior_predictive(&m, &post, &[0.0, 1.0], 3, &mut rng).unwrap();
        assert_eq!(out.len(), 6);

        // A single-draw posterior reduces to ancestral sampling under that draw.
        let single = PosteriorSample::from_draws(&m, &draws[..1]).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let a = posterior_predictive(&m, &single, &[0.0, 1.0], 4, &mut r1).unwrap();
        let b: Vec<Vec<f64>> = (0..4)
            .map(|_| ancestral_sample(&m, &draws[0], &[0.0, 1.0], &mut r2))
            .collect();
        assert_eq!(a, b);

        let other = ModelSpec::new(
            CovariateSchema::new(vec![Covariate::binary("Sex"), Covariate::continuous("Age")]),
            vec![NodeSpec::bernoulli("AF", &["Sex", "Age"], &[], prior())],
        )
        .unwrap();
        assert!(matches!(
            posterior_predictive(&other, &post, &[0.0, 1.0], 1, &mut rng),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn ancestral_sampling_is_standard_normal_at_zero() {
        let m = two_coins();
        let p = ParameterVector::filled(&m, 0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let v = ancestral_sample(&m, &p, &[1.0, 30.0], &mut rng);
            assert!(v[0] == 0.0 || v[0] == 1.0);
            assert!(v[1] == 0.0 || v[1] == 1.0);
            sum += v[2];
        }
        assert!((sum / n as f64).abs() < 0.02);
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(
            ancestral_sample(&m, &p, &[1.0, 2.0], &mut a),
            ancestral_sample(&m, &p, &[1.0, 2.0], &mut b)
        );
    }

    #[test]
    fn sweep_points_do_not_depend_on_axis_order() {
        let m = two_coins();
        let post = PosteriorSample::from_draws(&m, &[ParameterVector::filled(&m, 0.1, 1.0)]).unwrap();
        let fixed = pairs(&[("Sex", 0.0)]);
        let a1 = GridAxis {
            name: "Age".into(),
            values: vec![20.0, 40.0],
        };
        let a2 = GridAxis {
            name: "MNB".into(),
            values: vec![-1.0, 0.0, 2.0],
        };
        let t = strings(&["AF", "ML"]);
        let opts = QueryOptions::default();
        let s1 = sweep(&m, &post, &fixed, &[a1.clone(), a2.clone()], &t, &opts).unwrap();
        let s2 = sweep(&m, &post, &fixed, &[a2, a1.clone()], &t, &opts).unwrap();
        assert_eq!(s1.len(), 6);
        for p in &s1 {
            let mut key = p.coordinates.clone();
            key.reverse();
            let q = s2.iter().find(|q| q.coordinates == key).unwrap();
            assert_eq!(p.result, q.result);
        }
        assert!(sweep(&m, &post, &pairs(&[("Sex", 0.0), ("Age", 1.0)]), &[a1], &t, &opts).is_err());
    }
}
