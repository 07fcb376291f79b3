//! Convergence diagnostics: classic potential scale reduction and
//! autocorrelation-based effective sample size.

use crate::error::{Error, Result};

use super::PosteriorSample;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Non-split Gelman-Rubin R-hat: sqrt(((n-1)/n W + B/n) / W).
pub fn rhat_chains(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::Diagnostic("R-hat needs at least 2 chains".into()));
    }
    let n = chains[0].len();
    if n < 2 {
        return Err(Error::Diagnostic("R-hat needs at least 2 draws per chain".into()));
    }
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::Diagnostic("chains have different lengths".into()));
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = chains.iter().zip(&means).map(|(c, &m)| sample_variance(c, m)).collect();
    if vars.contains(&0.0) {
        return Err(Error::Diagnostic("a chain is constant".into()));
    }
    let m = chains.len() as f64;
    let nf = n as f64;
    let w = vars.iter().sum::<f64>() / m;
    let grand = means.iter().sum::<f64>() / m;
    let b = nf * means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>() / (m - 1.0);
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    Ok((var_plus / w).sqrt())
}

/// Effective sample size of one chain, Geyer's initial positive sequence.
fn chain_ess(xs: &[f64]) -> Result<f64> {
    let n = xs.len();
    if n < 4 {
        return Err(Error::Diagnostic("chain too short for ESS".into()));
    }
    let m = mean(xs);
    let centered: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let autocov = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let c0 = autocov(0);
    if c0 == 0.0 {
        return Err(Error::Diagnostic("a chain is constant".into()));
    }
    // tau = -1 + 2 * sum_k (rho_2k + rho_2k+1) over the initial positive pairs.
    let mut sum_pairs = 0.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = (autocov(2 * k) + autocov(2 * k + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        sum_pairs += pair;
        k += 1;
    }
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / n as f64);
    Ok(n as f64 / tau)
}

/// ESS summed over chains.
pub fn ess_chains(chains: &[Vec<f64>]) -> Result<f64> {
    let total: usize = chains.iter().map(|c| c.len()).sum();
    if total < 100 {
        return Err(Error::Diagnostic(format!("ESS needs at least 100 draws, got {total}")));
    }
    chains.iter().map(|c| chain_ess(c)).sum()
}

pub fn rhat(sample: &PosteriorSample, parameter: &str) -> Result<f64> {
    rhat_chains(&sample.parameter_chains(parameter)?)
}

pub fn ess(sample: &PosteriorSample, parameter: &str) -> Result<f64> {
    ess_chains(&sample.parameter_chains(parameter)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q95: f64,
    /// `None` when the diagnostic is undefined (single chain, constant chain).
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Posterior mean, SD, 5%/95% quantiles and diagnostics for every parameter.
pub fn summarize(sample: &PosteriorSample) -> Vec<ParameterSummary> {
    sample
        .parameter_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let chains: Vec<Vec<f64>> = (0..sample.n_chains()).map(|c| sample.chain_column(c, j)).collect();
            let mut all: Vec<f64> = chains.iter().flatten().copied().collect();
            let m = mean(&all);
            let sd = if all.len() > 1 {
                sample_variance(&all, m).sqrt()
            } else {
                0.0
            };
            all.sort_by(f64::total_cmp);
            ParameterSummary {
                name: name.clone(),
                mean: m,
                sd,
                q05: quantile(&all, 0.05),
                q95: quantile(&all, 0.95),
                rhat: rhat_chains(&chains).ok(),
                ess: ess_chains(&chains).ok(),
            }
        })
        .collect()
}
