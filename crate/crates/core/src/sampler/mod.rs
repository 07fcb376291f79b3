//! Adaptive random-walk Metropolis-within-Gibbs over all network parameters.
//!
//! Every sweep visits the parameters one at a time in parameter-vector order
//! (all coefficients, then all sigmas) and proposes a Gaussian step. Only the
//! factor of the touched node and the touched priors change, so the
//! acceptance ratio is computed from that node's contribution to the log
//! posterior. During warmup each proposal scale follows a Robbins-Monro
//! recursion toward the target acceptance rate; scales are frozen afterwards.
//!
//! With `standardize` set the chain moves in a reparameterized coefficient
//! space where each regression input is scaled, and usually centered, by its
//! sample moments. The map to raw coefficients is linear, so the target density is
//! unchanged up to a constant; draws are always reported on the raw scale.

mod diagnostics;

pub use diagnostics::{ess, ess_chains, rhat, rhat_chains, summarize, ParameterSummary};

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fingerprint;
use crate::model::{self, Dataset, Family, ModelSpec, NormalPrior, ParameterVector, UniformPrior, LN_2PI};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub thin: usize,
    pub seed: u64,
    pub target_acceptance: f64,
    pub adapt: bool,
    pub standardize: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            iterations: 4000,
            warmup: 2000,
            thin: 1,
            seed: 0,
            target_acceptance: 0.44,
            adapt: true,
            standardize: true,
        }
    }
}

impl SamplerConfig {
    /// Default configuration with `iterations` total and half of them warmup.
    pub fn with_iterations(iterations: usize) -> Self {
        SamplerConfig {
            iterations,
            warmup: iterations / 2,
            ..Default::default()
        }
    }

    pub fn kept_per_chain(&self) -> usize {
        (self.iterations - self.warmup) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.warmup >= self.iterations {
            return Err(Error::Config(format!(
                "warmup ({}) must be smaller than iterations ({})",
                self.warmup, self.iterations
            )));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Config("target_acceptance must lie in (0, 1)".into()));
        }
        if self.kept_per_chain() == 0 {
            return Err(Error::Config("no draws kept after warmup and thinning".into()));
        }
        Ok(())
    }
}

/// Kept draws of one chain, stored row-major (draw × parameter).
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    /// Absolute iteration index (0-based, warmup included) of each kept draw.
    pub iterations: Vec<usize>,
    pub values: Vec<f64>,
    /// Post-warmup acceptance rate per parameter.
    pub acceptance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSample {
    pub parameter_names: Vec<String>,
    pub chains: Vec<ChainDraws>,
    pub config: SamplerConfig,
    pub fingerprint: String,
}

impl PosteriorSample {
    /// A single-chain sample holding exactly the given parameter vectors.
    pub fn from_draws(model: &ModelSpec, draws: &[ParameterVector]) -> Result<Self> {
        let mut values = Vec::with_capacity(draws.len() * model.n_params());
        for d in draws {
            if d.len() != model.n_params() {
                return Err(Error::SchemaMismatch("parameter vector length".into()));
            }
            values.extend_from_slice(d.as_slice());
        }
        let config = SamplerConfig {
            chains: 1,
            iterations: draws.len().max(1),
            warmup: 0,
            adapt: false,
            ..Default::default()
        };
        Ok(PosteriorSample {
            parameter_names: model.parameter_names(),
            chains: vec![ChainDraws {
                iterations: (0..draws.len()).collect(),
                values,
                acceptance: vec![f64::NAN; model.n_params()],
            }],
            config,
            fingerprint: fingerprint(model),
        })
    }

    pub fn n_params(&self) -> usize {
        self.parameter_names.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn draws_in_chain(&self, chain: usize) -> usize {
        self.chains[chain].iterations.len()
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(|c| c.iterations.len()).sum()
    }

    pub fn draw(&self, chain: usize, index: usize) -> &[f64] {
        let p = self.n_params();
        &self.chains[chain].values[index * p..(index + 1) * p]
    }

    /// All draws, chain-major.
    pub fn iter_draws(&self) -> impl Iterator<Item = &[f64]> + '_ {
        let p = self.n_params();
        self.chains.iter().flat_map(move |c| c.values.chunks_exact(p))
    }

    pub fn parameter_index(&self, name: &str) -> Result<usize> {
        self.parameter_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::MissingInput(name.to_string()))
    }

    pub fn chain_column(&self, chain: usize, param: usize) -> Vec<f64> {
        let p = self.n_params();
        self.chains[chain]
            .values
            .iter()
            .skip(param)
            .step_by(p)
            .copied()
            .collect()
    }

    /// Per-chain traces of one parameter.
    pub fn parameter_chains(&self, name: &str) -> Result<Vec<Vec<f64>>> {
        let j = self.parameter_index(name)?;
        Ok((0..self.n_chains()).map(|c| self.chain_column(c, j)).collect())
    }

    pub fn check_model(&self, model: &ModelSpec) -> Result<()> {
        let expected = fingerprint(model);
        if expected != self.fingerprint {
            return Err(Error::FingerprintMismatch {
                expected,
                found: self.fingerprint.clone(),
            });
        }
        Ok(())
    }
}

/// Regression design of one node in the (possibly standardized) sampler space.
struct Block {
    family: Family,
    coefs: Range<usize>,
    sigma_slot: Option<usize>,
    n_coef: usize,
    /// Per input column (index 0 unused): center and scale.
    center: Vec<f64>,
    scale: Vec<f64>,
    priors: Vec<NormalPrior>,
    sigma_prior: Option<UniformPrior>,
    n_rows: usize,
    /// n × n_coef, row-major, first column all ones.
    design: Vec<f64>,
    y: Vec<f64>,
    y_mean: f64,
    /// Cross products against the centered response.
    ztz: Vec<f64>,
    ztyc: Vec<f64>,
    ycyc: f64,
}

impl Block {
    fn new(model: &ModelSpec, data: &Dataset, node: usize, standardize: bool) -> Self {
        let spec = model.node(node);
        let n = data.n_rows();
        let p = spec.n_coefficients();
        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(p - 1);
        for &c in model.covariate_indices(node) {
            columns.push(data.covariate_column(c));
        }
        for &q in model.parent_indices(node) {
            columns.push(data.node_column(q));
        }
        let mut center = vec![0.0; p];
        let mut scale = vec![1.0; p];
        if standardize && n >= 2 {
            // Inputs are centered only when the data outweigh the intercept prior.
            let center_inputs = spec.coefficient_priors[0].variance * n as f64 >= 1.0;
            for (j, col) in columns.iter().enumerate() {
                let m = col.iter().sum::<f64>() / n as f64;
                let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
                if v > 0.0 {
                    if center_inputs {
                        center[j + 1] = m;
                    }
                    scale[j + 1] = v.sqrt();
                }
            }
        }
        let mut design = Vec::with_capacity(n * p);
        for r in 0..n {
            design.push(1.0);
            for (j, col) in columns.iter().enumerate() {
                design.push((col[r] - center[j + 1]) / scale[j + 1]);
            }
        }
        let y = data.node_column(node);
        let y_mean = if n > 0 { y.iter().sum::<f64>() / n as f64 } else { 0.0 };
        let mut ztz = vec![0.0; p * p];
        let mut ztyc = vec![0.0; p];
        let mut ycyc = 0.0;
        if spec.family == Family::GaussianLinear {
            for r in 0..n {
                let z = &design[r * p..(r + 1) * p];
                let yc = y[r] - y_mean;
                ycyc += yc * yc;
                for a in 0..p {
                    ztyc[a] += z[a] * yc;
                    for b in 0..p {
                        ztz[a * p + b] += z[a] * z[b];
                    }
                }
            }
        }
        Block {
            family: spec.family,
            coefs: model.coefficient_range(node),
            sigma_slot: model.sigma_slot(node),
            n_coef: p,
            center,
            scale,
            priors: spec.coefficient_priors.clone(),
            sigma_prior: spec.sigma_prior,
            n_rows: n,
            design,
            y,
            y_mean,
            ztz,
            ztyc,
            ycyc,
        }
    }

    /// Raw coefficients from sampler-space coefficients.
    fn to_raw(&self, a: &[f64], out: &mut [f64]) {
        let mut b0 = a[0];
        for j in 1..self.n_coef {
            let bj = a[j] / self.scale[j];
            out[j] = bj;
            b0 -= bj * self.center[j];
        }
        out[0] = b0;
    }

    #[cfg(test)]
    fn to_standard(&self, b: &[f64], out: &mut [f64]) {
        let mut a0 = b[0];
        for j in 1..self.n_coef {
            out[j] = b[j] * self.scale[j];
            a0 += b[j] * self.center[j];
        }
        out[0] = a0;
    }

    fn log_prior(&self, a: &[f64], scratch: &mut [f64]) -> f64 {
        self.to_raw(a, scratch);
        self.priors
            .iter()
            .zip(scratch.iter())
            .map(|(p, &b)| p.log_density(b))
            .sum()
    }

    /// Residual sum of squares for sampler-space coefficients.
    fn rss(&self, a: &[f64]) -> f64 {
        let p = self.n_coef;
        let mut shifted = [0.0; 64];
        let shifted = if p <= 64 {
            &mut shifted[..p]
        } else {
            unreachable!("too many inputs")
        };
        shifted.copy_from_slice(a);
        shifted[0] -= self.y_mean;
        let mut quad = 0.0;
        let mut lin = 0.0;
        for (i, &si) in shifted[..p].iter().enumerate() {
            lin += si * self.ztyc[i];
            let mut row = 0.0;
            for (zij, &sj) in self.ztz[i * p..(i + 1) * p].iter().zip(&shifted[..p]) {
                row += zij * sj;
            }
            quad += si * row;
        }
        (self.ycyc - 2.0 * lin + quad).max(0.0)
    }

    fn gaussian_loglik(&self, rss: f64, sigma: f64) -> f64 {
        let n = self.n_rows as f64;
        -n * sigma.ln() - 0.5 * n * LN_2PI - 0.5 * rss / (sigma * sigma)
    }

    fn eta(&self, a: &[f64], out: &mut Vec<f64>) {
        let p = self.n_coef;
        out.clear();
        out.extend(
            self.design
                .chunks_exact(p)
                .map(|z| z.iter().zip(a).map(|(x, c)| x * c).sum::<f64>()),
        );
    }

    fn bernoulli_loglik(&self, eta: &[f64]) -> f64 {
        eta.iter().zip(&self.y).map(|(&e, &y)| y * e - model::softplus(e)).sum()
    }

    fn initial_sigma(&self) -> Option<f64> {
        let u = self.sigma_prior?;
        let n = self.n_rows;
        let sd = if n >= 2 {
            (self.y.iter().map(|y| (y - self.y_mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            f64::NAN
        };
        let width = u.hi - u.lo;
        let (lo, hi) = (u.lo + 0.01 * width, u.lo + 0.99 * width);
        Some(if sd.is_finite() {
            sd.clamp(lo, hi)
        } else {
            0.5 * (u.lo + u.hi)
        })
    }
}

enum Slot {
    Coef { block: usize, j: usize },
    Sigma { block: usize },
}

struct BlockState {
    a: Vec<f64>,
    sigma: f64,
    rss: f64,
    eta: Vec<f64>,
    loglik: f64,
    logprior: f64,
}

struct Chain<'a> {
    blocks: &'a [Block],
    states: Vec<BlockState>,
    scratch: Vec<f64>,
    eta_buf: Vec<f64>,
}

impl<'a> Chain<'a> {
    fn new(blocks: &'a [Block], model: &ModelSpec) -> Result<Self> {
        let mut states = Vec::with_capacity(blocks.len());
        let mut scratch = vec![0.0; 64];
        for (v, b) in blocks.iter().enumerate() {
            let a = vec![0.0; b.n_coef];
            let sigma = b.initial_sigma().unwrap_or(f64::NAN);
            let mut eta = Vec::new();
            let (rss, loglik) = match b.family {
                Family::GaussianLinear => {
                    let rss = b.rss(&a);
                    (rss, b.gaussian_loglik(rss, sigma))
                }
                Family::BernoulliLogistic => {
                    b.eta(&a, &mut eta);
                    (0.0, b.bernoulli_loglik(&eta))
                }
            };
            let mut logprior = b.log_prior(&a, &mut scratch);
            if let Some(u) = b.sigma_prior {
                logprior += u.log_density(sigma);
            }
            if !(loglik + logprior).is_finite() {
                return Err(Error::NonFiniteStart {
                    node: model.node(v).name.clone(),
                });
            }
            states.push(BlockState {
                a,
                sigma,
                rss,
                eta,
                loglik,
                logprior,
            });
        }
        Ok(Chain {
            blocks,
            states,
            scratch,
            eta_buf: Vec::new(),
        })
    }

    /// One scalar Metropolis update; returns whether the proposal was accepted.
    fn update(&mut self, slot: &Slot, step: f64, log_u: f64) -> bool {
        match *slot {
            Slot::Coef { block, j } => {
                let b = &self.blocks[block];
                let st = &mut self.states[block];
                let old = st.a[j];
                st.a[j] = old + step;
                let mut lp = b.log_prior(&st.a, &mut self.scratch);
                if let Some(u) = b.sigma_prior {
                    lp += u.log_density(st.sigma);
                }
                let (ll, rss) = match b.family {
                    Family::GaussianLinear => {
                        let rss = b.rss(&st.a);
                        (b.gaussian_loglik(rss, st.sigma), rss)
                    }
                    Family::BernoulliLogistic => {
                        let p = b.n_coef;
                        self.eta_buf.clear();
                        self.eta_buf.extend(
                            st.eta
                                .iter()
                                .zip(b.design.iter().skip(j).step_by(p))
                                .map(|(e, z)| e + step * z),
                        );
                        (b.bernoulli_loglik(&self.eta_buf), 0.0)
                    }
                };
                let log_alpha = (ll + lp) - (st.loglik + st.logprior);
                if log_u < log_alpha {
                    st.loglik = ll;
                    st.logprior = lp;
                    st.rss = rss;
                    if b.family == Family::BernoulliLogistic {
                        std::mem::swap(&mut st.eta, &mut self.eta_buf);
                    }
                    true
                } else {
                    st.a[j] = old;
                    false
                }
            }
            Slot::Sigma { block } => {
                let b = &self.blocks[block];
                let st = &mut self.states[block];
                let u = b.sigma_prior.expect("sigma slot without prior");
                let proposal = st.sigma + step;
                if !u.contains(proposal) {
                    return false;
                }
                let ll = b.gaussian_loglik(st.rss, proposal);
                // The uniform prior is flat inside its support.
                if log_u < ll - st.loglik {
                    st.sigma = proposal;
                    st.loglik = ll;
                    true
                } else {
                    false
                }
            }
        }
    }

    fn write_raw(&self, out: &mut [f64]) {
        for (b, st) in self.blocks.iter().zip(&self.states) {
            b.to_raw(&st.a, &mut out[b.coefs.clone()]);
            if let Some(s) = b.sigma_slot {
                out[s] = st.sigma;
            }
        }
    }
}

fn build_slots(model: &ModelSpec, blocks: &[Block]) -> Vec<Slot> {
    let mut slots: Vec<Option<Slot>> = (0..model.n_params()).map(|_| None).collect();
    for (v, b) in blocks.iter().enumerate() {
        for j in 0..b.n_coef {
            slots[b.coefs.start + j] = Some(Slot::Coef { block: v, j });
        }
        if let Some(s) = b.sigma_slot {
            slots[s] = Some(Slot::Sigma { block: v });
        }
    }
    slots
        .into_iter()
        .map(|s| s.expect("every parameter belongs to a node"))
        .collect()
}

fn initial_log_scale(slot: &Slot, blocks: &[Block]) -> f64 {
    match *slot {
        Slot::Coef { .. } => 0.5f64.ln(),
        Slot::Sigma { block } => {
            let u = blocks[block].sigma_prior.expect("sigma prior");
            (0.05 * (u.hi - u.lo)).ln()
        }
    }
}

fn run_chain(
    model: &ModelSpec,
    blocks: &[Block],
    slots: &[Slot],
    config: &SamplerConfig,
    chain_id: usize,
) -> Result<ChainDraws> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain_id as u64);

    let mut chain = Chain::new(blocks, model)?;
    let n_params = model.n_params();
    let mut log_scale: Vec<f64> = slots.iter().map(|s| initial_log_scale(s, blocks)).collect();
    let mut accepted = vec![0usize; n_params];
    let kept = config.kept_per_chain();
    let mut values = vec![0.0; kept * n_params];
    let mut iterations = Vec::with_capacity(kept);

    for it in 0..config.iterations {
        let warm = it < config.warmup;
        let gain = ((it + 1) as f64).powf(-0.6);
        for (k, slot) in slots.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            let u: f64 = rng.random();
            let ok = chain.update(slot, z * log_scale[k].exp(), u.ln());
            if warm {
                if config.adapt {
                    let acc = if ok { 1.0 } else { 0.0 };
                    log_scale[k] = (log_scale[k] + gain * (acc - config.target_acceptance)).clamp(-30.0, 10.0);
                }
            } else if ok {
                accepted[k] += 1;
            }
        }
        if !warm {
            let post = it - config.warmup;
            if (post + 1).is_multiple_of(config.thin) && iterations.len() < kept {
                let row = iterations.len();
                chain.write_raw(&mut values[row * n_params..(row + 1) * n_params]);
                iterations.push(it);
            }
        }
    }
    let post_iters = (config.iterations - config.warmup) as f64;
    let acceptance = accepted.iter().map(|&a| a as f64 / post_iters).collect();
    Ok(ChainDraws {
        iterations,
        values,
        acceptance,
    })
}

/// Approximates the posterior of `model` given `data`.
///
/// Coefficients start at zero; each sigma starts at the sample standard
/// deviation of its node column, clamped to the inner 98% of its prior
/// support. Chains use independent streams derived from `(seed, chain)` and
/// are assembled by index, so the result does not depend on scheduling.
pub fn fit(model: &ModelSpec, data: &Dataset, config: &SamplerConfig) -> Result<PosteriorSample> {
    config.validate()?;
    data.check_conforms(model)?;
    let blocks: Vec<Block> = (0..model.n_nodes())
        .map(|v| Block::new(model, data, v, config.standardize))
        .collect();
    if blocks.iter().any(|b| b.n_coef > 64) {
        return Err(Error::Config("nodes with more than 63 inputs are not supported".into()));
    }
    let slots = build_slots(model, &blocks);
    let chains = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(model, &blocks, &slots, config, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorSample {
        parameter_names: model.parameter_names(),
        chains,
        config: config.clone(),
        fingerprint: fingerprint(model),
    })
}
