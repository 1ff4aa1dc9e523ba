use serde::{Deserialize, Serialize};

use crate::dists::{bernoulli_log_prob, FactorialBernoulli};
use crate::error::{Error, Result};
use crate::models::{check_caps, Domain, EncDistValue, LatentModel, MAX_HIDDEN};
use crate::num::{sigmoid, ParamVector, RngStream, Tape, Var};

/// Stacked sigmoid belief network.
///
/// `hidden[0]` is the layer adjacent to `x`, the last entry is the top layer
/// with factorial prior logits. The latent vector is the concatenation
/// `h_1 .. h_L`. Layer `l` weights (`{prefix}.w{l}`, shape `[lower, upper]`)
/// produce the logits of the layer below from the layer above.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sbn {
    pub obs: usize,
    pub hidden: Vec<usize>,
    pub prefix: String,
}

impl Sbn {
    pub fn new(obs: usize, hidden: Vec<usize>, prefix: impl Into<String>) -> Result<Self> {
        if hidden.is_empty() || hidden.len() > 2 {
            return Err(Error::invalid("Sbn supports 1 or 2 stochastic layers"));
        }
        if hidden.iter().any(|&h| h == 0 || h > MAX_HIDDEN) {
            return Err(Error::invalid(format!("Sbn layer sizes must be in 1..={MAX_HIDDEN}")));
        }
        let sbn = Sbn {
            obs,
            hidden,
            prefix: prefix.into(),
        };
        check_caps(Domain::Binary(obs), Some(sbn.latent()))?;
        Ok(sbn)
    }

    pub fn latent_dim(&self) -> usize {
        self.hidden.iter().sum()
    }

    fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.obs];
        s.extend(&self.hidden);
        s
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = vec![0];
        for h in &self.hidden {
            off.push(off.last().unwrap() + h);
        }
        off
    }

    pub fn prior_name(&self) -> String {
        format!("{}.prior", self.prefix)
    }

    pub fn weight_name(&self, l: usize) -> String {
        format!("{}.w{l}", self.prefix)
    }

    pub fn bias_name(&self, l: usize) -> String {
        format!("{}.b{l}", self.prefix)
    }

    fn layer_logits(&self, params: &ParamVector, l: usize, upper: &[f64]) -> Vec<f64> {
        let w = params.get(&self.weight_name(l)).expect("sbn weight");
        let b = params.get(&self.bias_name(l)).expect("sbn bias");
        let cols = upper.len();
        b.iter()
            .enumerate()
            .map(|(r, bias)| bias + (0..cols).map(|c| w[r * cols + c] * upper[c]).sum::<f64>())
            .collect()
    }

    /// Conditional probabilities of `x` given the full latent vector.
    pub fn obs_probs(&self, params: &ParamVector, h: &[f64]) -> Vec<f64> {
        let h1 = &h[..self.hidden[0]];
        self.layer_logits(params, 0, h1).into_iter().map(sigmoid).collect()
    }

    /// `log p(h)` for the latent part alone.
    pub fn latent_log_prob(&self, params: &ParamVector, h: &[f64]) -> f64 {
        let off = self.offsets();
        let top = self.hidden.len() - 1;
        let mut lp = FactorialBernoulli::from_logits(params.get(&self.prior_name()).expect("prior"))
            .log_prob(&h[off[top]..off[top + 1]])
            .expect("prior width");
        for l in 1..self.hidden.len() {
            let logits = self.layer_logits(params, l, &h[off[l]..off[l + 1]]);
            lp += FactorialBernoulli::from_logits(&logits)
                .log_prob(&h[off[l - 1]..off[l]])
                .expect("layer width");
        }
        lp
    }

    /// `log p(x | h)`.
    pub fn obs_log_prob(&self, params: &ParamVector, x: &[f64], h: &[f64]) -> f64 {
        let logits = self.layer_logits(params, 0, &h[..self.hidden[0]]);
        FactorialBernoulli::from_logits(&logits)
            .log_prob(x)
            .expect("obs width")
    }
}

impl LatentModel for Sbn {
    fn obs(&self) -> Domain {
        Domain::Binary(self.obs)
    }

    fn latent(&self) -> Domain {
        Domain::Binary(self.latent_dim())
    }

    fn prefix(&self) -> &str {
        &self.prefix
    }

    fn joint_log_prob_tape(&self, t: &mut Tape, params: &ParamVector, x: &[f64], h: Var) -> Var {
        let hv = t.value(h).to_vec();
        let off = self.offsets();
        let top = self.hidden.len() - 1;
        let prior = t.param(params, &self.prior_name());
        let mut acc = bernoulli_log_prob(t, prior, &hv[off[top]..off[top + 1]]);
        for l in 0..self.hidden.len() {
            let w = t.param(params, &self.weight_name(l));
            let b = t.param(params, &self.bias_name(l));
            let upper = t.slice(h, off[l], self.hidden[l]);
            let logits = t.affine(w, b, upper);
            let lower: &[f64] = if l == 0 { x } else { &hv[off[l - 1]..off[l]] };
            let lp = bernoulli_log_prob(t, logits, lower);
            acc = t.add(acc, lp);
        }
        acc
    }

    fn joint_log_prob(&self, params: &ParamVector, x: &[f64], h: &[f64]) -> Result<f64> {
        self.obs().check("Sbn x", x)?;
        self.latent().check("Sbn h", h)?;
        Ok(self.latent_log_prob(params, h) + self.obs_log_prob(params, x, h))
    }

    fn log_prior(&self, params: &ParamVector, h: &[f64]) -> Result<f64> {
        self.latent().check("Sbn h", h)?;
        Ok(self.latent_log_prob(params, h))
    }

    fn kl_to_prior(&self, params: &ParamVector, q: &EncDistValue) -> Option<f64> {
        match q {
            EncDistValue::Bernoulli(q) if self.hidden.len() == 1 => {
                let prior = FactorialBernoulli::from_logits(params.get(&self.prior_name()).ok()?);
                Some(
                    q.probs()
                        .iter()
                        .zip(prior.probs())
                        .map(|(a, c)| a * (a / c).ln() + (1.0 - a) * ((1.0 - a) / (1.0 - c)).ln())
                        .sum(),
                )
            }
            _ => None,
        }
    }

    fn generate_joint(&self, params: &ParamVector, rng: &mut RngStream) -> (Vec<f64>, Vec<f64>) {
        let off = self.offsets();
        let top = self.hidden.len() - 1;
        let mut h = vec![0.0; self.latent_dim()];
        let top_draw =
            FactorialBernoulli::from_logits(params.get(&self.prior_name()).expect("prior")).sample(rng);
        h[off[top]..off[top + 1]].copy_from_slice(&top_draw);
        for l in (1..self.hidden.len()).rev() {
            let logits = self.layer_logits(params, l, &h[off[l]..off[l + 1]].to_vec());
            let draw = FactorialBernoulli::from_logits(&logits).sample(rng);
            h[off[l - 1]..off[l]].copy_from_slice(&draw);
        }
        let x = FactorialBernoulli::new(self.obs_probs(params, &h)).sample(rng);
        (x, h)
    }

    fn init(&self, rng: &mut RngStream, params: &mut ParamVector) -> Result<()> {
        let sizes = self.sizes();
        params.add(self.prior_name(), vec![sizes[sizes.len() - 1]], vec![0.0; sizes[sizes.len() - 1]])?;
        for l in 0..self.hidden.len() {
            let (rows, cols) = (sizes[l], sizes[l + 1]);
            let s = (6.0 / (rows + cols) as f64).sqrt();
            let w = (0..rows * cols).map(|_| (2.0 * rng.uniform() - 1.0) * s).collect();
            params.add(self.weight_name(l), vec![rows, cols], w)?;
            params.add(self.bias_name(l), vec![rows], vec![0.0; rows])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::binary_state;

    #[test]
    fn zero_weights_all_zero_point() {
        let m = Sbn::new(3, vec![2], "theta").unwrap();
        let mut p = ParamVector::new();
        m.init(&mut RngStream::new(0), &mut p).unwrap();
        p.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        let lp = m.joint_log_prob(&p, &[0.0; 3], &[0.0; 2]).unwrap();
        assert!((lp - 5.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn tape_matches_plain_and_normalizes() {
        let m = Sbn::new(3, vec![2, 2], "theta").unwrap();
        let mut p = ParamVector::new();
        m.init(&mut RngStream::new(4), &mut p).unwrap();
        p.get_mut("theta.prior").unwrap().copy_from_slice(&[0.7, -1.3]);
        let mut total = 0.0;
        for xi in 0..8 {
            for hi in 0..16 {
                let (x, h) = (binary_state(xi, 3), binary_state(hi, 4));
                let plain = m.joint_log_prob(&p, &x, &h).unwrap();
                let mut t = Tape::new();
                let hv = t.constant(h.clone());
                let lp = m.joint_log_prob_tape(&mut t, &p, &x, hv);
                assert!((t.scalar_value(lp) - plain).abs() < 1e-12);
                total += plain.exp();
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn saturated_probs_generate_ones() {
        let m = Sbn::new(4, vec![3], "theta").unwrap();
        let mut p = ParamVector::new();
        m.init(&mut RngStream::new(0), &mut p).unwrap();
        p.get_mut("theta.b0").unwrap().iter_mut().for_each(|v| *v = 50.0);
        p.get_mut("theta.w0").unwrap().iter_mut().for_each(|v| *v = 0.0);
        let mut rng = RngStream::new(9);
        for _ in 0..100 {
            assert_eq!(m.generate(&p, &mut rng), vec![1.0; 4]);
        }
    }

    #[test]
    fn rejects_oversized() {
        assert!(Sbn::new(11, vec![2], "t").is_err());
        assert!(Sbn::new(3, vec![9], "t").is_err());
        assert!(Sbn::new(3, vec![1, 1, 1], "t").is_err());
    }
}
