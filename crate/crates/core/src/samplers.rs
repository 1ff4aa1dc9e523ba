//! Markov kernels: Metropolis independence sampling, random-walk Metropolis
//! for random fields, and exact categorical draws.

use serde::{Deserialize, Serialize};

use crate::dists::{binary_index, binary_state, TableDist};
use crate::error::{Error, Result};
use crate::models::{Domain, NeuralRf};
use crate::num::{ParamVector, RngStream};
use crate::oracle::TransitionMatrix;

/// `min{1, exp(log_w_new - log_w_cur)}`.
pub fn acceptance(log_w_new: f64, log_w_cur: f64) -> Result<f64> {
    let d = log_w_new - log_w_cur;
    if d.is_nan() || log_w_new.is_nan() || log_w_cur.is_nan() || log_w_cur == f64::INFINITY {
        return Err(Error::NonFinite {
            primitive: "importance weight ratio",
        });
    }
    Ok(if d >= 0.0 { 1.0 } else { d.exp() })
}

/// Metropolis independence sampler.
///
/// The weight of a state is `log target_joint - log proposal`, so an
/// intractable normalizer of the target (such as `p(x)` when targeting
/// `p(h | x)` through `p(x, h)`) cancels in every acceptance ratio.
pub struct MisKernel<'a, S> {
    pub target_log_joint: &'a dyn Fn(&S) -> Result<f64>,
    pub proposal_log_prob: &'a dyn Fn(&S) -> Result<f64>,
    pub proposal_sample: &'a dyn Fn(&mut RngStream) -> Result<S>,
}

impl<S> MisKernel<'_, S> {
    pub fn log_weight(&self, s: &S) -> Result<f64> {
        let lw = (self.target_log_joint)(s)? - (self.proposal_log_prob)(s)?;
        if lw.is_nan() || lw == f64::INFINITY {
            return Err(Error::NonFinite {
                primitive: "importance weight",
            });
        }
        Ok(lw)
    }
}

/// One MIS move. Returns the next state and whether the proposal was taken.
pub fn mis_step<S: Clone>(k: &MisKernel<'_, S>, current: &S, rng: &mut RngStream) -> Result<(S, bool)> {
    let proposal = (k.proposal_sample)(rng)?;
    let a = acceptance(k.log_weight(&proposal)?, k.log_weight(current)?)?;
    let u = rng.uniform();
    if u < a {
        Ok((proposal, true))
    } else {
        Ok((current.clone(), false))
    }
}

/// Full MIS transition matrix over an enumerated domain, assembled from the
/// acceptance probabilities.
pub fn mis_matrix(target_log_joint: &[f64], proposal: &TableDist) -> Result<TransitionMatrix> {
    let n = target_log_joint.len();
    crate::dists::check_dim("mis_matrix", n, proposal.len())?;
    let lw: Vec<f64> = (0..n)
        .map(|i| target_log_joint[i] - proposal.prob(i).ln())
        .collect();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let mut stay = 1.0;
        for j in 0..n {
            if i == j || proposal.prob(j) == 0.0 {
                continue;
            }
            let p = proposal.prob(j) * acceptance(lw[j], lw[i])?;
            data[i * n + j] = p;
            stay -= p;
        }
        data[i * n + i] = stay.max(0.0);
    }
    TransitionMatrix::new(n, data)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RwKernel {
    /// Flip `count` distinct coordinates of a binary state.
    Flip { count: usize },
    /// Isotropic Gaussian step.
    Gaussian { scale: f64 },
}

impl RwKernel {
    pub fn default_for(domain: Domain) -> Self {
        match domain {
            Domain::Binary(_) => RwKernel::Flip { count: 1 },
            Domain::Real(_) => RwKernel::Gaussian { scale: 0.5 },
        }
    }
}

/// One random-walk Metropolis move targeting `exp(u) / Z`.
pub fn rw_step(
    k: RwKernel,
    nrf: &NeuralRf,
    params: &ParamVector,
    current: &[f64],
    rng: &mut RngStream,
) -> Result<(Vec<f64>, bool)> {
    nrf.domain.check("rw_step", current)?;
    let mut prop = current.to_vec();
    match (k, nrf.domain) {
        (RwKernel::Flip { count }, Domain::Binary(d)) => {
            if count == 0 || count > d {
                return Err(Error::invalid(format!("flip count {count} not in 1..={d}")));
            }
            let mut idx: Vec<usize> = (0..d).collect();
            for i in 0..count {
                let j = i + rng.below(d - i);
                idx.swap(i, j);
                prop[idx[i]] = 1.0 - prop[idx[i]];
            }
        }
        (RwKernel::Gaussian { scale }, Domain::Real(_)) => {
            for v in prop.iter_mut() {
                *v += scale * rng.normal();
            }
        }
        _ => return Err(Error::invalid("kernel does not match the field's domain")),
    }
    let a = acceptance(
        nrf.eval_unchecked(params, &prop),
        nrf.eval_unchecked(params, current),
    )?;
    if rng.uniform() < a {
        Ok((prop, true))
    } else {
        Ok((current.to_vec(), false))
    }
}

/// Transition matrix of the single-flip kernel on a binary field.
pub fn rw_flip_matrix(nrf: &NeuralRf, params: &ParamVector) -> Result<TransitionMatrix> {
    let d = match nrf.domain {
        Domain::Binary(d) => d,
        Domain::Real(_) => return Err(Error::invalid("rw_flip_matrix needs a binary domain")),
    };
    let n = 1usize << d;
    let u: Vec<f64> = (0..n)
        .map(|i| nrf.eval_unchecked(params, &binary_state(i, d)))
        .collect();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let mut stay = 1.0;
        for b in 0..d {
            let j = i ^ (1 << b);
            let p = acceptance(u[j], u[i])? / d as f64;
            data[i * n + j] = p;
            stay -= p;
        }
        data[i * n + i] = stay.max(0.0);
    }
    TransitionMatrix::new(n, data)
}

/// Exact categorical draw by inverse CDF.
pub fn table_sample(t: &TableDist, rng: &mut RngStream) -> usize {
    t.sample(rng)
}

/// Index of a binary state, for tallying chain visits.
pub fn state_index(x: &[f64]) -> usize {
    binary_index(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acceptance_examples() {
        assert_eq!(acceptance(2f64.ln(), 0.0).unwrap(), 1.0);
        assert!((acceptance(0.5f64.ln(), 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(acceptance(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn proposal_equal_to_target_always_accepts() {
        let probs = vec![0.1, 0.2, 0.3, 0.4];
        let t = TableDist::new(probs.clone()).unwrap();
        let logp: Vec<f64> = probs.iter().map(|p: &f64| p.ln() + 3.0).collect();
        let target = |s: &usize| Ok(logp[*s]);
        let qlog = |s: &usize| t.log_prob(*s);
        let draw = |r: &mut RngStream| Ok(t.sample(r));
        let k = MisKernel {
            target_log_joint: &target,
            proposal_log_prob: &qlog,
            proposal_sample: &draw,
        };
        let mut rng = RngStream::new(1);
        let mut s = 0;
        for _ in 0..200 {
            let (n, acc) = mis_step(&k, &s, &mut rng).unwrap();
            assert!(acc);
            s = n;
        }
    }

    #[test]
    fn mis_matrix_is_stationary() {
        let target = TableDist::new(vec![0.05, 0.1, 0.15, 0.2, 0.1, 0.1, 0.2, 0.1]).unwrap();
        let logj: Vec<f64> = target.probs().iter().map(|p| p.ln() - 1.7).collect();
        let q = TableDist::new(vec![0.125; 8]).unwrap();
        let k = mis_matrix(&logj, &q).unwrap();
        let r = crate::oracle::stationarity_residual(&k, &target).unwrap();
        assert!(r <= 1e-10, "{r}");
    }
}
