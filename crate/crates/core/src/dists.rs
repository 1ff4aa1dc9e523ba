//! Elementary distributions: factorial Bernoulli, diagonal Gaussian, the
//! standard normal, and finite tables. Each has a plain `f64` API and a
//! tape API whose log-densities are differentiable in the distribution
//! parameters (and, for Gaussians, in the point itself).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{log_sum_exp, sigmoid, softplus, RngStream, Tape, Var};
use crate::oracle::GridSpec;

pub const PROB_CLAMP: f64 = 1e-7;
pub const LOG_STD_CLAMP: f64 = 7.0;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Logit bound equivalent to clamping probabilities to `[1e-7, 1 - 1e-7]`.
pub fn logit_clamp() -> f64 {
    ((1.0 - PROB_CLAMP) / PROB_CLAMP).ln()
}

/// Bit `i` of `index` becomes coordinate `i` of the returned 0/1 vector.
pub fn binary_state(index: usize, dim: usize) -> Vec<f64> {
    (0..dim).map(|i| ((index >> i) & 1) as f64).collect()
}

pub fn binary_index(x: &[f64]) -> usize {
    x.iter()
        .enumerate()
        .fold(0, |acc, (i, &b)| acc | (((b > 0.5) as usize) << i))
}

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Shape {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorialBernoulli {
    probs: Vec<f64>,
}

impl FactorialBernoulli {
    pub fn new(probs: Vec<f64>) -> Self {
        let probs = probs
            .into_iter()
            .map(|c| c.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
            .collect();
        FactorialBernoulli { probs }
    }

    pub fn from_logits(logits: &[f64]) -> Self {
        Self::new(logits.iter().map(|&a| sigmoid(a)).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        check_dim("FactorialBernoulli::log_prob", self.dim(), x.len())?;
        Ok(self
            .probs
            .iter()
            .zip(x)
            .map(|(&c, &xi)| if xi > 0.5 { c.ln() } else { (1.0 - c).ln() })
            .sum())
    }

    /// Threshold on a uniform draw; `u == c` resolves to 1.
    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        self.probs
            .iter()
            .map(|&c| if rng.uniform() <= c { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .map(|&c| -(c * c.ln() + (1.0 - c) * (1.0 - c).ln()))
            .sum()
    }
}

/// Bernoulli log-mass of binary `x` under logits, with probability clamping.
pub fn bernoulli_log_prob(t: &mut Tape, logits: Var, x: &[f64]) -> Var {
    let m = logit_clamp();
    let a = t.clamp(logits, -m, m);
    let pos = t.log_sigmoid(a);
    let na = t.neg(a);
    let neg = t.log_sigmoid(na);
    let xs = t.constant(x.to_vec());
    let ys = t.constant(x.iter().map(|v| 1.0 - v).collect());
    let l1 = t.mul(xs, pos);
    let l0 = t.mul(ys, neg);
    let s = t.add(l1, l0);
    t.sum(s)
}

pub fn bernoulli_entropy(t: &mut Tape, logits: Var) -> Var {
    // H = softplus(a) - a * sigmoid(a), summed
    let m = logit_clamp();
    let a = t.clamp(logits, -m, m);
    let sp = t.softplus(a);
    let s = t.sigmoid(a);
    let as_ = t.mul(a, s);
    let h = t.sub(sp, as_);
    t.sum(h)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    log_std: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        check_dim("DiagGaussian::new", mean.len(), log_std.len())?;
        let log_std = log_std
            .into_iter()
            .map(|s| s.clamp(-LOG_STD_CLAMP, LOG_STD_CLAMP))
            .collect();
        Ok(DiagGaussian { mean, log_std })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        check_dim("DiagGaussian::log_prob", self.dim(), x.len())?;
        Ok(self
            .mean
            .iter()
            .zip(&self.log_std)
            .zip(x)
            .map(|((&m, &s), &xi)| {
                let z = (xi - m) / s.exp();
                -0.5 * LN_2PI - s - 0.5 * z * z
            })
            .sum())
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        self.reparam_sample(rng).0
    }

    /// `x = mean + std * eps`, returning the noise alongside the draw.
    pub fn reparam_sample(&self, rng: &mut RngStream) -> (Vec<f64>, Vec<f64>) {
        let eps = rng.normals(self.dim());
        (self.transform(&eps), eps)
    }

    pub fn transform(&self, eps: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_std)
            .zip(eps)
            .map(|((m, s), e)| m + s.exp() * e)
            .collect()
    }

    pub fn entropy(&self) -> f64 {
        self.log_std
            .iter()
            .map(|s| 0.5 * (LN_2PI + 1.0) + s)
            .sum()
    }

    pub fn kl_to_std_normal(&self, p: &StdNormal) -> Result<f64> {
        check_dim("kl_closed_form", p.dim, self.dim())?;
        Ok(self
            .mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, s)| 0.5 * ((2.0 * s).exp() + m * m - 1.0) - s)
            .sum())
    }
}

/// Clamps a tape log-std vector into the supported range.
pub fn clamp_log_std(t: &mut Tape, log_std: Var) -> Var {
    t.clamp(log_std, -LOG_STD_CLAMP, LOG_STD_CLAMP)
}

/// Diagonal-Gaussian log-density; `log_std` is expected already clamped.
pub fn gaussian_log_prob(t: &mut Tape, mean: Var, log_std: Var, x: Var) -> Var {
    let d = t.sub(x, mean);
    let ns = t.neg(log_std);
    let inv = t.exp(ns);
    let z = t.mul(d, inv);
    let z2 = t.square(z);
    let hz = t.scale(z2, -0.5);
    let a = t.sub(hz, log_std);
    let s = t.sum(a);
    let n = t.width(x) as f64;
    t.shift(s, -0.5 * LN_2PI * n)
}

pub fn gaussian_reparam(t: &mut Tape, mean: Var, log_std: Var, eps: &[f64]) -> Var {
    let e = t.constant(eps.to_vec());
    let sd = t.exp(log_std);
    let se = t.mul(sd, e);
    t.add(mean, se)
}

pub fn gaussian_entropy(t: &mut Tape, log_std: Var) -> Var {
    let s = t.sum(log_std);
    let n = t.width(log_std) as f64;
    t.shift(s, 0.5 * (LN_2PI + 1.0) * n)
}

/// `KL(N(mean, diag(e^{2 log_std})) || N(0, I))`.
pub fn gaussian_kl_std(t: &mut Tape, mean: Var, log_std: Var) -> Var {
    let two = t.scale(log_std, 2.0);
    let var = t.exp(two);
    let m2 = t.square(mean);
    let a = t.add(var, m2);
    let a = t.shift(a, -1.0);
    let a = t.scale(a, 0.5);
    let b = t.sub(a, log_std);
    t.sum(b)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StdNormal {
    pub dim: usize,
}

impl StdNormal {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("StdNormal dimension must be >= 1"));
        }
        Ok(StdNormal { dim })
    }

    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        check_dim("StdNormal::log_prob", self.dim, x.len())?;
        Ok(x.iter().map(|v| -0.5 * LN_2PI - 0.5 * v * v).sum())
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        rng.normals(self.dim)
    }

    pub fn entropy(&self) -> f64 {
        0.5 * (LN_2PI + 1.0) * self.dim as f64
    }

    pub fn log_prob_tape(&self, t: &mut Tape, x: Var) -> Var {
        let x2 = t.square(x);
        let s = t.sum(x2);
        t.scale_shift(s, -0.5, -0.5 * LN_2PI * self.dim as f64)
    }
}

/// Distribution over an enumerated finite domain, states `0..n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableDist {
    probs: Vec<f64>,
}

impl TableDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("TableDist needs at least one state"));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("TableDist probabilities must be nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "TableDist probabilities sum to {total}, not 1"
            )));
        }
        Ok(TableDist { probs })
    }

    /// Normalizes log-weights with log-sum-exp.
    pub fn from_log_weights(logw: &[f64]) -> Result<Self> {
        let z = log_sum_exp(logw);
        if !z.is_finite() {
            return Err(Error::invalid("TableDist log-weights have no finite mass"));
        }
        let mut probs: Vec<f64> = logw.iter().map(|w| (w - z).exp()).collect();
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Self::new(probs)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, at: usize) -> Result<Self> {
        let mut p = vec![0.0; n];
        p[at] = 1.0;
        Self::new(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, state: usize) -> f64 {
        self.probs[state]
    }

    pub fn log_prob(&self, state: usize) -> Result<f64> {
        if state >= self.len() {
            return Err(Error::Shape {
                context: "TableDist::log_prob state",
                expected: self.len(),
                actual: state,
            });
        }
        Ok(self.probs[state].ln())
    }

    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    }

    /// Inverse-CDF draw.
    pub fn sample(&self, rng: &mut RngStream) -> usize {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                last = i;
            }
            acc += p;
            if u < acc {
                return i;
            }
        }
        last
    }

    pub fn mean_of(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.probs.iter().enumerate().map(|(i, p)| p * f(i)).sum()
    }
}

/// Softmax log-mass of `state` under `logits`.
pub fn softmax_log_prob(t: &mut Tape, logits: Var, state: usize) -> Var {
    let z = t.logsumexp(logits);
    let l = t.slice(logits, state, 1);
    t.sub(l, z)
}

/// A parameterized family for score-expectation checks.
#[derive(Clone, Debug)]
pub enum ScoreFamily {
    Bernoulli { logits: Vec<f64> },
    Softmax { logits: Vec<f64> },
    Gaussian { mean: Vec<f64>, log_std: Vec<f64> },
}

const ENUMERATION_LIMIT: u128 = 1 << 20;

/// `|E_p[grad_params log p]|_inf` by exact enumeration or grid quadrature.
pub fn fisher_residual(family: &ScoreFamily) -> Result<f64> {
    use crate::num::ParamVector;
    let mut params = ParamVector::new();
    let mut acc: Vec<f64>;
    match family {
        ScoreFamily::Bernoulli { logits } => {
            let h = logits.len();
            let states = 1u128 << h.min(127);
            if h >= 127 || states > ENUMERATION_LIMIT {
                return Err(Error::DomainTooLarge {
                    states,
                    limit: ENUMERATION_LIMIT,
                });
            }
            params.add("a", vec![h], logits.clone())?;
            acc = vec![0.0; h];
            let dist = FactorialBernoulli::from_logits(logits);
            for i in 0..(1usize << h) {
                let x = binary_state(i, h);
                let p = dist.log_prob(&x)?.exp();
                let mut t = Tape::new();
                let a = t.param(&params, "a");
                let lp = bernoulli_log_prob(&mut t, a, &x);
                let g = t.backward(lp);
                for (k, v) in g.wrt(a).iter().enumerate() {
                    acc[k] += p * v;
                }
            }
        }
        ScoreFamily::Softmax { logits } => {
            let n = logits.len();
            if n as u128 > ENUMERATION_LIMIT {
                return Err(Error::DomainTooLarge {
                    states: n as u128,
                    limit: ENUMERATION_LIMIT,
                });
            }
            params.add("a", vec![n], logits.clone())?;
            let table = TableDist::from_log_weights(logits)?;
            acc = vec![0.0; n];
            for s in 0..n {
                let mut t = Tape::new();
                let a = t.param(&params, "a");
                let lp = softmax_log_prob(&mut t, a, s);
                let g = t.backward(lp);
                for (k, v) in g.wrt(a).iter().enumerate() {
                    acc[k] += table.prob(s) * v;
                }
            }
        }
        ScoreFamily::Gaussian { mean, log_std } => {
            let d = mean.len();
            if d == 0 || d > 2 {
                return Err(Error::invalid("Gaussian score check supports 1 or 2 dimensions"));
            }
            let dist = DiagGaussian::new(mean.clone(), log_std.clone())?;
            params.add("m", vec![d], mean.clone())?;
            params.add("s", vec![d], dist.log_std().to_vec())?;
            acc = vec![0.0; 2 * d];
            let grids: Vec<GridSpec> = (0..d)
                .map(|i| {
                    let sd = dist.log_std()[i].exp();
                    GridSpec::new(vec![(mean[i] - 10.0 * sd, mean[i] + 10.0 * sd)], 512)
                })
                .collect::<Result<_>>()?;
            let axes: Vec<(Vec<f64>, Vec<f64>)> = grids.iter().map(|g| g.axis(0)).collect();
            let mut visit = |x: &[f64], w: f64| {
                let p = dist.log_prob(x).unwrap().exp();
                let mut t = Tape::new();
                let m = t.param(&params, "m");
                let s = t.param(&params, "s");
                let xv = t.constant(x.to_vec());
                let lp = gaussian_log_prob(&mut t, m, s, xv);
                let g = t.backward(lp);
                for k in 0..d {
                    acc[k] += w * p * g.wrt(m)[k];
                    acc[d + k] += w * p * g.wrt(s)[k];
                }
            };
            if d == 1 {
                for (x, w) in axes[0].0.iter().zip(&axes[0].1) {
                    visit(&[*x], *w);
                }
            } else {
                for (x0, w0) in axes[0].0.iter().zip(&axes[0].1) {
                    for (x1, w1) in axes[1].0.iter().zip(&axes[1].1) {
                        visit(&[*x0, *x1], w0 * w1);
                    }
                }
            }
        }
    }
    Ok(acc.iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// Closed-form helper used by tests and the demo: `softplus` re-export.
pub fn log1pexp(x: f64) -> f64 {
    softplus(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_bernoulli_mass_and_entropy() {
        let d = FactorialBernoulli::new(vec![0.5; 5]);
        let x = [1.0, 0.0, 1.0, 1.0, 0.0];
        assert!((d.log_prob(&x).unwrap() + 5.0 * 2f64.ln()).abs() < 1e-14);
        assert!((d.entropy() - 5.0 * 2f64.ln()).abs() < 1e-14);
        assert!(d.log_prob(&[1.0]).is_err());
    }

    #[test]
    fn clamps_hold() {
        let d = FactorialBernoulli::new(vec![0.0, 1.0]);
        assert_eq!(d.probs(), &[1e-7, 1.0 - 1e-7]);
        let g = DiagGaussian::new(vec![0.0], vec![-100.0]).unwrap();
        assert_eq!(g.log_std(), &[-7.0]);
    }

    #[test]
    fn std_gaussian_at_origin() {
        let g = DiagGaussian::new(vec![0.0; 3], vec![0.0; 3]).unwrap();
        assert!((g.log_prob(&[0.0; 3]).unwrap() + 1.5 * LN_2PI).abs() < 1e-14);
    }

    #[test]
    fn gaussian_kl_values() {
        let p = StdNormal::new(1).unwrap();
        let q0 = DiagGaussian::new(vec![0.0], vec![0.0]).unwrap();
        let q1 = DiagGaussian::new(vec![1.0], vec![0.0]).unwrap();
        assert_eq!(q0.kl_to_std_normal(&p).unwrap(), 0.0);
        assert!((q1.kl_to_std_normal(&p).unwrap() - 0.5).abs() < 1e-15);
        assert!(q1.kl_to_std_normal(&StdNormal::new(2).unwrap()).is_err());
    }

    #[test]
    fn tiny_std_sample_hits_mean() {
        let g = DiagGaussian::new(vec![1.5, -2.0], vec![-7.0, -7.0]).unwrap();
        let x = g.sample(&mut RngStream::new(1));
        assert!((x[0] - 1.5).abs() < 1e-2 && (x[1] + 2.0).abs() < 1e-2);
    }

    #[test]
    fn table_normalization() {
        let t = TableDist::from_log_weights(&[0.0, 1.0, 2.0, -3.0]).unwrap();
        let s: f64 = t.probs().iter().sum();
        assert!((s - 1.0).abs() <= 1e-12);
        assert!(TableDist::new(vec![0.5, 0.4]).is_err());
        let pm = TableDist::point_mass(4, 2).unwrap();
        let mut rng = RngStream::new(0);
        assert!((0..100).all(|_| pm.sample(&mut rng) == 2));
    }

    #[test]
    fn tape_and_plain_agree() {
        let logits = [0.3, -1.2, 2.0];
        let x = [1.0, 0.0, 1.0];
        let mut t = Tape::new();
        let a = t.constant(logits.to_vec());
        let lp = bernoulli_log_prob(&mut t, a, &x);
        let plain = FactorialBernoulli::from_logits(&logits).log_prob(&x).unwrap();
        assert!((t.scalar_value(lp) - plain).abs() < 1e-12);
        let h = bernoulli_entropy(&mut t, a);
        assert!((t.scalar_value(h) - FactorialBernoulli::from_logits(&logits).entropy()).abs() < 1e-12);
    }

    #[test]
    fn score_residuals_vanish() {
        let r = fisher_residual(&ScoreFamily::Bernoulli {
            logits: vec![0.3, -0.7, 1.1, 2.0],
        })
        .unwrap();
        assert!(r <= 1e-10, "{r}");
        let r = fisher_residual(&ScoreFamily::Softmax {
            logits: (0..8).map(|i| (i as f64 * 0.37).sin()).collect(),
        })
        .unwrap();
        assert!(r <= 1e-12, "{r}");
        let r = fisher_residual(&ScoreFamily::Gaussian {
            mean: vec![0.4, -1.0],
            log_std: vec![0.2, -0.5],
        })
        .unwrap();
        assert!(r <= 1e-6, "{r}");
        assert!(fisher_residual(&ScoreFamily::Bernoulli { logits: vec![0.0; 21] }).is_err());
    }
}
