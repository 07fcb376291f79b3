//! Network data model and the log-densities of the factorized joint.
//!
//! A [`ModelSpec`] is a DAG of Bernoulli-logistic and Gaussian-linear nodes.
//! Each node regresses on an ordered list of base covariates and on its
//! parents; the joint density of one row is the product of the node
//! conditionals, evaluated in topological order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ln(2π)
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Covariate {
    pub name: String,
    pub kind: CovariateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<(f64, f64)>,
}

impl Covariate {
    pub fn binary(name: &str) -> Self {
        Covariate {
            name: name.to_string(),
            kind: CovariateKind::Binary,
            unit: None,
            range: None,
        }
    }

    pub fn continuous(name: &str) -> Self {
        Covariate {
            name: name.to_string(),
            kind: CovariateKind::Continuous,
            unit: None,
            range: None,
        }
    }

    pub fn with_unit(mut self, unit: &str) -> Self {
        self.unit = Some(unit.to_string());
        self
    }

    pub fn with_range(mut self, lo: f64, hi: f64) -> Self {
        self.range = Some((lo, hi));
        self
    }
}

/// Ordered list of base covariates shared by every node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CovariateSchema {
    pub entries: Vec<Covariate>,
}

impl CovariateSchema {
    pub fn new(entries: Vec<Covariate>) -> Self {
        CovariateSchema { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    BernoulliLogistic,
    GaussianLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalPrior {
    pub mean: f64,
    pub variance: f64,
}

impl NormalPrior {
    pub fn new(mean: f64, variance: f64) -> Self {
        NormalPrior { mean, variance }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        let d = x - self.mean;
        -0.5 * (LN_2PI + self.variance.ln()) - 0.5 * d * d / self.variance
    }
}

/// Uniform prior on the open interval `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformPrior {
    pub lo: f64,
    pub hi: f64,
}

impl UniformPrior {
    pub fn new(lo: f64, hi: f64) -> Self {
        UniformPrior { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    pub fn log_density(&self, x: f64) -> f64 {
        if self.contains(x) {
            -(self.hi - self.lo).ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// One node conditional. Coefficients are ordered intercept, covariates,
/// parents, and `coefficient_priors` follows the same order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub family: Family,
    pub parents: Vec<String>,
    pub covariates: Vec<String>,
    pub coefficient_priors: Vec<NormalPrior>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_prior: Option<UniformPrior>,
}

impl NodeSpec {
    /// Bernoulli-logistic node with the same normal prior on every coefficient.
    pub fn bernoulli(name: &str, covariates: &[&str], parents: &[&str], prior: NormalPrior) -> Self {
        let n = 1 + covariates.len() + parents.len();
        NodeSpec {
            name: name.to_string(),
            family: Family::BernoulliLogistic,
            parents: parents.iter().map(|s| s.to_string()).collect(),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            coefficient_priors: vec![prior; n],
            sigma_prior: None,
        }
    }

    /// Gaussian-linear node with the same normal prior on every coefficient.
    pub fn gaussian(
        name: &str,
        covariates: &[&str],
        parents: &[&str],
        prior: NormalPrior,
        sigma_prior: UniformPrior,
    ) -> Self {
        let n = 1 + covariates.len() + parents.len();
        NodeSpec {
            name: name.to_string(),
            family: Family::GaussianLinear,
            parents: parents.iter().map(|s| s.to_string()).collect(),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            coefficient_priors: vec![prior; n],
            sigma_prior: Some(sigma_prior),
        }
    }

    pub fn n_coefficients(&self) -> usize {
        1 + self.covariates.len() + self.parents.len()
    }

    pub fn is_discrete(&self) -> bool {
        self.family == Family::BernoulliLogistic
    }

    /// Log-density of `value` given the linear predictor `eta`.
    pub fn log_density(&self, eta: f64, sigma: Option<f64>, value: f64) -> Result<f64> {
        match self.family {
            Family::BernoulliLogistic => {
                if value == 1.0 {
                    Ok(log_logistic(eta))
                } else if value == 0.0 {
                    Ok(log_logistic(-eta))
                } else {
                    Err(Error::Domain(format!(
                        "value {value} at Bernoulli node `{}` is not 0 or 1",
                        self.name
                    )))
                }
            }
            Family::GaussianLinear => {
                let sigma =
                    sigma.ok_or_else(|| Error::Domain(format!("gaussian node `{}` has no sigma", self.name)))?;
                if sigma.is_nan() || sigma <= 0.0 {
                    return Err(Error::Domain(format!(
                        "sigma {sigma} at node `{}` must be positive",
                        self.name
                    )));
                }
                Ok(normal_log_density(value, eta, sigma))
            }
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// ln(logistic(x)).
pub fn log_logistic(x: f64) -> f64 {
    -softplus(-x)
}

pub fn normal_log_density(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * LN_2PI - sd.ln() - 0.5 * z * z
}

/// Resolved indices of a node's inputs.
#[derive(Debug, Clone, PartialEq)]
struct NodeLinks {
    covariates: Vec<usize>,
    parents: Vec<usize>,
}

/// A validated network.
///
/// Parameters are laid out flat: the coefficients of every node in
/// topological order, followed by the sigmas of the Gaussian nodes in
/// topological order. Permuting the node declaration order therefore does
/// not change the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    covariates: CovariateSchema,
    nodes: Vec<NodeSpec>,
    topo_order: Vec<usize>,
    links: Vec<NodeLinks>,
    coef_offsets: Vec<usize>,
    sigma_slots: Vec<Option<usize>>,
    n_params: usize,
}

fn check_identifier(name: &str, what: &str) -> Result<()> {
    let mut chars = name.chars();
    let ok = match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => chars.all(|c| c.is_ascii_alphanumeric() || c == '_'),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Validation(format!("{what} name `{name}` is not an identifier")))
    }
}

fn check_node(node: &NodeSpec) -> Result<()> {
    let expected = node.n_coefficients();
    if node.coefficient_priors.len() != expected {
        return Err(Error::Validation(format!(
            "node `{}` has {} coefficient priors, expected {expected}",
            node.name,
            node.coefficient_priors.len()
        )));
    }
    for p in &node.coefficient_priors {
        if !p.mean.is_finite() || !p.variance.is_finite() || p.variance <= 0.0 {
            return Err(Error::Validation(format!(
                "node `{}` has an invalid normal prior (mean {}, variance {})",
                node.name, p.mean, p.variance
            )));
        }
    }
    match (node.family, node.sigma_prior) {
        (Family::BernoulliLogistic, Some(_)) => Err(Error::Validation(format!(
            "bernoulli-logistic node `{}` must not carry a sigma_prior",
            node.name
        ))),
        (Family::GaussianLinear, None) => Err(Error::Validation(format!(
            "gaussian-linear node `{}` requires a sigma_prior",
            node.name
        ))),
        (Family::GaussianLinear, Some(u)) => {
            if !u.lo.is_finite() || !u.hi.is_finite() || u.lo < 0.0 || u.hi <= u.lo {
                Err(Error::Validation(format!(
                    "node `{}` has an invalid sigma_prior (lo {}, hi {})",
                    node.name, u.lo, u.hi
                )))
            } else {
                Ok(())
            }
        }
        (Family::BernoulliLogistic, None) => Ok(()),
    }
}

fn resolve(covariates: &CovariateSchema, nodes: &[NodeSpec]) -> Result<Vec<NodeLinks>> {
    if nodes.is_empty() {
        return Err(Error::Validation("model has no nodes".into()));
    }
    let mut seen = BTreeSet::new();
    for c in &covariates.entries {
        check_identifier(&c.name, "covariate")?;
        if !seen.insert(c.name.as_str()) {
            return Err(Error::Validation(format!("duplicate name `{}`", c.name)));
        }
        if let Some((lo, hi)) = c.range {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(Error::Validation(format!(
                    "covariate `{}` has range lo {lo} >= hi {hi}",
                    c.name
                )));
            }
        }
    }
    let mut node_index = HashMap::new();
    for (i, n) in nodes.iter().enumerate() {
        check_identifier(&n.name, "node")?;
        if !seen.insert(n.name.as_str()) {
            return Err(Error::Validation(format!("duplicate name `{}`", n.name)));
        }
        node_index.insert(n.name.as_str(), i);
    }

    let mut links = Vec::with_capacity(nodes.len());
    for n in nodes {
        let mut cov_idx = Vec::with_capacity(n.covariates.len());
        for c in &n.covariates {
            let idx = covariates.index_of(c).ok_or_else(|| Error::DanglingReference {
                name: c.clone(),
                referenced_by: n.name.clone(),
            })?;
            if cov_idx.contains(&idx) {
                return Err(Error::Validation(format!(
                    "node `{}` lists covariate `{c}` twice",
                    n.name
                )));
            }
            cov_idx.push(idx);
        }
        let mut par_idx = Vec::with_capacity(n.parents.len());
        for p in &n.parents {
            if *p == n.name {
                return Err(Error::Cycle { node: n.name.clone() });
            }
            let idx = *node_index.get(p.as_str()).ok_or_else(|| Error::DanglingReference {
                name: p.clone(),
                referenced_by: n.name.clone(),
            })?;
            if par_idx.contains(&idx) {
                return Err(Error::Validation(format!("node `{}` lists parent `{p}` twice", n.name)));
            }
            par_idx.push(idx);
        }
        check_node(n)?;
        links.push(NodeLinks {
            covariates: cov_idx,
            parents: par_idx,
        });
    }
    Ok(links)
}

/// Kahn's algorithm, smallest ready name first.
fn topological_order(nodes: &[NodeSpec], links: &[NodeLinks]) -> Result<Vec<usize>> {
    let n = nodes.len();
    let mut indegree: Vec<usize> = links.iter().map(|l| l.parents.len()).collect();
    let mut children = vec![Vec::new(); n];
    for (i, l) in links.iter().enumerate() {
        for &p in &l.parents {
            children[p].push(i);
        }
    }
    let mut ready: BTreeSet<(&str, usize)> = (0..n)
        .filter(|&i| indegree[i] == 0)
        .map(|i| (nodes[i].name.as_str(), i))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(first) = ready.pop_first() {
        let i = first.1;
        order.push(i);
        for &c in &children[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert((nodes[c].name.as_str(), c));
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // Every remaining node has a remaining parent; walking parents from any of
    // them must revisit a node, and that node lies on a cycle.
    let start = (0..n).find(|&i| indegree[i] > 0).expect("unplaced node");
    let mut visited = vec![false; n];
    let mut cur = start;
    while !visited[cur] {
        visited[cur] = true;
        cur = *links[cur]
            .parents
            .iter()
            .find(|&&p| indegree[p] > 0)
            .expect("remaining node has a remaining parent");
    }
    Err(Error::Cycle {
        node: nodes[cur].name.clone(),
    })
}

/// Checks a network definition and returns its topological order by name.
/// Ties are broken lexicographically.
pub fn validate(covariates: &CovariateSchema, nodes: &[NodeSpec]) -> Result<Vec<String>> {
    let links = resolve(covariates, nodes)?;
    let order = topological_order(nodes, &links)?;
    Ok(order.into_iter().map(|i| nodes[i].name.clone()).collect())
}

impl ModelSpec {
    pub fn new(covariates: CovariateSchema, nodes: Vec<NodeSpec>) -> Result<Self> {
        let links = resolve(&covariates, &nodes)?;
        let topo_order = topological_order(&nodes, &links)?;
        let mut coef_offsets = vec![0; nodes.len()];
        let mut offset = 0;
        for &v in &topo_order {
            coef_offsets[v] = offset;
            offset += nodes[v].n_coefficients();
        }
        let mut sigma_slots = vec![None; nodes.len()];
        for &v in &topo_order {
            if nodes[v].family == Family::GaussianLinear {
                sigma_slots[v] = Some(offset);
                offset += 1;
            }
        }
        Ok(ModelSpec {
            covariates,
            nodes,
            topo_order,
            links,
            coef_offsets,
            sigma_slots,
            n_params: offset,
        })
    }

    pub fn covariates(&self) -> &CovariateSchema {
        &self.covariates
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &NodeSpec {
        &self.nodes[index]
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Node indices (declaration order) in topological order.
    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    pub fn topo_order_names(&self) -> Vec<String> {
        self.topo_order.iter().map(|&i| self.nodes[i].name.clone()).collect()
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariates.index_of(name)
    }

    pub fn parent_indices(&self, node: usize) -> &[usize] {
        &self.links[node].parents
    }

    pub fn covariate_indices(&self, node: usize) -> &[usize] {
        &self.links[node].covariates
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn coefficient_range(&self, node: usize) -> Range<usize> {
        let start = self.coef_offsets[node];
        start..start + self.nodes[node].n_coefficients()
    }

    pub fn sigma_slot(&self, node: usize) -> Option<usize> {
        self.sigma_slots[node]
    }

    /// Names in parameter-vector order: `<node>.b0`, `<node>.b.<input>`,
    /// `<node>.sigma`.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.n_params];
        for (v, node) in self.nodes.iter().enumerate() {
            let r = self.coefficient_range(v);
            names[r.start] = format!("{}.b0", node.name);
            for (k, input) in node.covariates.iter().chain(node.parents.iter()).enumerate() {
                names[r.start + 1 + k] = format!("{}.b.{}", node.name, input);
            }
            if let Some(s) = self.sigma_slots[v] {
                names[s] = format!("{}.sigma", node.name);
            }
        }
        names
    }

    /// Normal priors of all coefficients and uniform priors of all sigmas,
    /// indexed like the parameter vector.
    pub(crate) fn parameter_priors(&self) -> Vec<ParamPrior> {
        let mut out = vec![ParamPrior::Normal(NormalPrior::new(0.0, 1.0)); self.n_params];
        for (v, node) in self.nodes.iter().enumerate() {
            let r = self.coefficient_range(v);
            for (k, p) in node.coefficient_priors.iter().enumerate() {
                out[r.start + k] = ParamPrior::Normal(*p);
            }
            if let (Some(s), Some(u)) = (self.sigma_slots[v], node.sigma_prior) {
                out[s] = ParamPrior::Uniform(u);
            }
        }
        out
    }

    /// Linear predictor of `node` from covariate row and node values indexed
    /// by declaration order.
    pub fn linear_predictor_at(
        &self,
        node: usize,
        params: &ParameterVector,
        covariates: &[f64],
        node_values: &[f64],
    ) -> f64 {
        let coefs = &params.as_slice()[self.coefficient_range(node)];
        let links = &self.links[node];
        let mut eta = coefs[0];
        let mut k = 1;
        for &c in &links.covariates {
            eta += coefs[k] * covariates[c];
            k += 1;
        }
        for &p in &links.parents {
            eta += coefs[k] * node_values[p];
            k += 1;
        }
        eta
    }

    pub fn node_log_density_at(
        &self,
        node: usize,
        params: &ParameterVector,
        value: f64,
        covariates: &[f64],
        node_values: &[f64],
    ) -> Result<f64> {
        let eta = self.linear_predictor_at(node, params, covariates, node_values);
        let sigma = self.sigma_slots[node].map(|s| params.as_slice()[s]);
        self.nodes[node].log_density(eta, sigma, value)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum ParamPrior {
    Normal(NormalPrior),
    Uniform(UniformPrior),
}

impl ParamPrior {
    pub(crate) fn log_density(&self, x: f64) -> f64 {
        match self {
            ParamPrior::Normal(p) => p.log_density(x),
            ParamPrior::Uniform(u) => u.log_density(x),
        }
    }
}

/// Flat parameter vector laid out as described on [`ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(model: &ModelSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != model.n_params() {
            return Err(Error::SchemaMismatch(format!(
                "parameter vector has {} entries, model has {}",
                values.len(),
                model.n_params()
            )));
        }
        Ok(ParameterVector(values))
    }

    /// All coefficients set to `coefficient` and all sigmas to `sigma`.
    pub fn filled(model: &ModelSpec, coefficient: f64, sigma: f64) -> Self {
        let mut values = vec![coefficient; model.n_params()];
        for v in 0..model.n_nodes() {
            if let Some(s) = model.sigma_slot(v) {
                values[s] = sigma;
            }
        }
        ParameterVector(values)
    }

    /// Builds a vector from `name -> value`; every parameter must be present.
    pub fn from_named(model: &ModelSpec, named: &BTreeMap<String, f64>) -> Result<Self> {
        let names = model.parameter_names();
        let mut values = Vec::with_capacity(names.len());
        for name in &names {
            let v = named.get(name).ok_or_else(|| Error::MissingInput(name.clone()))?;
            values.push(*v);
        }
        if let Some(extra) = named.keys().find(|k| !names.contains(k)) {
            return Err(Error::Validation(format!("unknown parameter `{extra}`")));
        }
        Ok(ParameterVector(values))
    }

    pub fn to_named(&self, model: &ModelSpec) -> BTreeMap<String, f64> {
        model
            .parameter_names()
            .into_iter()
            .zip(self.0.iter().copied())
            .collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn coefficients(&self, model: &ModelSpec, node: usize) -> &[f64] {
        &self.0[model.coefficient_range(node)]
    }

    pub fn coefficients_mut(&mut self, model: &ModelSpec, node: usize) -> &mut [f64] {
        &mut self.0[model.coefficient_range(node)]
    }

    pub fn sigma(&self, model: &ModelSpec, node: usize) -> Option<f64> {
        model.sigma_slot(node).map(|s| self.0[s])
    }

    pub fn set_sigma(&mut self, model: &ModelSpec, node: usize, sigma: f64) {
        if let Some(s) = model.sigma_slot(node) {
            self.0[s] = sigma;
        }
    }
}

/// Complete-case data. Covariates and node values are stored row-major,
/// node columns in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariate_names: Vec<String>,
    node_names: Vec<String>,
    covariates: Vec<f64>,
    nodes: Vec<f64>,
    n_rows: usize,
}

impl Dataset {
    pub fn empty(model: &ModelSpec) -> Self {
        Dataset {
            covariate_names: model.covariates().entries.iter().map(|c| c.name.clone()).collect(),
            node_names: model.nodes().iter().map(|n| n.name.clone()).collect(),
            covariates: Vec::new(),
            nodes: Vec::new(),
            n_rows: 0,
        }
    }

    /// Builds a dataset from per-row covariate and node values (declaration
    /// order). Rejects non-finite values and non-binary entries in binary
    /// columns; row indices in errors are 0-based.
    pub fn from_rows(model: &ModelSpec, covariate_rows: &[Vec<f64>], node_rows: &[Vec<f64>]) -> Result<Self> {
        if covariate_rows.len() != node_rows.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} covariate rows but {} node rows",
                covariate_rows.len(),
                node_rows.len()
            )));
        }
        let mut data = Dataset::empty(model);
        let nc = data.covariate_names.len();
        let nn = data.node_names.len();
        for (r, (cov, obs)) in covariate_rows.iter().zip(node_rows).enumerate() {
            if cov.len() != nc || obs.len() != nn {
                return Err(Error::SchemaMismatch(format!("row {r} has the wrong number of values")));
            }
            for (c, &x) in cov.iter().enumerate() {
                let binary = model.covariates().entries[c].kind == CovariateKind::Binary;
                check_cell(r, &data.covariate_names[c], x, binary)?;
            }
            for (v, &x) in obs.iter().enumerate() {
                check_cell(r, &data.node_names[v], x, model.node(v).is_discrete())?;
            }
            data.covariates.extend_from_slice(cov);
            data.nodes.extend_from_slice(obs);
        }
        data.n_rows = covariate_rows.len();
        Ok(data)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn node_names(&self) -> &[String] {
        &self.node_names
    }

    pub fn covariate_row(&self, row: usize) -> &[f64] {
        let n = self.covariate_names.len();
        &self.covariates[row * n..(row + 1) * n]
    }

    pub fn node_row(&self, row: usize) -> &[f64] {
        let n = self.node_names.len();
        &self.nodes[row * n..(row + 1) * n]
    }

    pub fn covariate_column(&self, index: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.covariate_row(r)[index]).collect()
    }

    pub fn node_column(&self, index: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.node_row(r)[index]).collect()
    }

    /// Rows `[start, end)` as a new dataset.
    pub fn slice_rows(&self, start: usize, end: usize) -> Dataset {
        let nc = self.covariate_names.len();
        let nn = self.node_names.len();
        Dataset {
            covariate_names: self.covariate_names.clone(),
            node_names: self.node_names.clone(),
            covariates: self.covariates[start * nc..end * nc].to_vec(),
            nodes: self.nodes[start * nn..end * nn].to_vec(),
            n_rows: end - start,
        }
    }

    pub fn check_conforms(&self, model: &ModelSpec) -> Result<()> {
        let same_cov = self.covariate_names.len() == model.covariates().len()
            && self
                .covariate_names
                .iter()
                .zip(&model.covariates().entries)
                .all(|(a, b)| *a == b.name);
        let same_nodes = self.node_names.len() == model.n_nodes()
            && self.node_names.iter().zip(model.nodes()).all(|(a, b)| *a == b.name);
        if same_cov && same_nodes {
            Ok(())
        } else {
            Err(Error::SchemaMismatch("column names differ from the model".into()))
        }
    }
}

fn check_cell(row: usize, column: &str, x: f64, binary: bool) -> Result<()> {
    if x.is_nan() {
        return Err(Error::MissingValue {
            row,
            column: column.to_string(),
        });
    }
    if !x.is_finite() {
        return Err(Error::Domain(format!(
            "non-finite value in column `{column}` at row {row}"
        )));
    }
    if binary && x != 0.0 && x != 1.0 {
        return Err(Error::NonBinaryValue {
            row,
            column: column.to_string(),
            value: x.to_string(),
        });
    }
    Ok(())
}

/// Name-based linear predictor: intercept plus the dot product of the
/// remaining coefficients with the covariates then the parents, in the
/// node's declared order.
pub fn linear_predictor(
    node: &NodeSpec,
    coefficients: &[f64],
    covariates: &BTreeMap<String, f64>,
    parents: &BTreeMap<String, f64>,
) -> Result<f64> {
    if coefficients.len() != node.n_coefficients() {
        return Err(Error::SchemaMismatch(format!(
            "node `{}` expects {} coefficients, got {}",
            node.name,
            node.n_coefficients(),
            coefficients.len()
        )));
    }
    let mut eta = coefficients[0];
    let mut k = 1;
    for c in &node.covariates {
        let x = covariates.get(c).ok_or_else(|| Error::MissingInput(c.clone()))?;
        eta += coefficients[k] * x;
        k += 1;
    }
    for p in &node.parents {
        let x = parents.get(p).ok_or_else(|| Error::MissingInput(p.clone()))?;
        eta += coefficients[k] * x;
        k += 1;
    }
    Ok(eta)
}

/// Name-based node conditional log-density.
pub fn node_log_density(
    node: &NodeSpec,
    coefficients: &[f64],
    sigma: Option<f64>,
    value: f64,
    covariates: &BTreeMap<String, f64>,
    parents: &BTreeMap<String, f64>,
) -> Result<f64> {
    let eta = linear_predictor(node, coefficients, covariates, parents)?;
    node.log_density(eta, sigma, value)
}

/// Sum over rows (outer) and nodes in topological order (inner) of the node
/// conditional log-densities.
pub fn log_likelihood(model: &ModelSpec, params: &ParameterVector, data: &Dataset) -> Result<f64> {
    data.check_conforms(model)?;
    if params.len() != model.n_params() {
        return Err(Error::SchemaMismatch("parameter vector length".into()));
    }
    let mut total = 0.0;
    for r in 0..data.n_rows() {
        let cov = data.covariate_row(r);
        let values = data.node_row(r);
        for &v in model.topo_order() {
            total += model.node_log_density_at(v, params, values[v], cov, values)?;
        }
    }
    Ok(total)
}

/// Sum of the coefficient and sigma prior log-densities; `-inf` when a sigma
/// is outside its support.
pub fn log_prior(model: &ModelSpec, params: &ParameterVector) -> f64 {
    model
        .parameter_priors()
        .iter()
        .zip(params.as_slice())
        .map(|(p, &x)| p.log_density(x))
        .sum()
}

pub fn log_unnormalized_posterior(model: &ModelSpec, params: &ParameterVector, data: &Dataset) -> Result<f64> {
    let lp = log_prior(model, params);
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    Ok(lp + log_likelihood(model, params, data)?)
}
