use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dists::{
    bernoulli_log_prob, binary_index, clamp_log_std, gaussian_log_prob, gaussian_reparam,
    DiagGaussian, FactorialBernoulli, TableDist,
};
use crate::error::{Error, Result};
use crate::models::{Domain, LatentModel};
use crate::num::{Activation, MlpSpec, ParamVector, RngStream, Tape, Var};

/// Encoder distribution with parameters living on a tape.
#[derive(Clone, Debug)]
pub enum EncDist {
    Bernoulli { logits: Var },
    Gaussian { mean: Var, log_std: Var },
    Table { log_probs: Vec<f64> },
}

impl EncDist {
    /// `log q(h | x)`; differentiable in the parameters and, for Gaussians, in `h`.
    pub fn log_prob(&self, t: &mut Tape, h: Var) -> Var {
        match self {
            EncDist::Bernoulli { logits } => {
                let hv = t.value(h).to_vec();
                bernoulli_log_prob(t, *logits, &hv)
            }
            EncDist::Gaussian { mean, log_std } => gaussian_log_prob(t, *mean, *log_std, h),
            EncDist::Table { log_probs } => {
                let i = binary_index(t.value(h));
                t.scalar(log_probs[i])
            }
        }
    }

    /// Same density with its parameters cut from the graph.
    pub fn detached(&self, t: &mut Tape) -> EncDist {
        match self {
            EncDist::Bernoulli { logits } => EncDist::Bernoulli {
                logits: t.detach(*logits),
            },
            EncDist::Gaussian { mean, log_std } => EncDist::Gaussian {
                mean: t.detach(*mean),
                log_std: t.detach(*log_std),
            },
            EncDist::Table { log_probs } => EncDist::Table {
                log_probs: log_probs.clone(),
            },
        }
    }

    /// `h = mean + std * eps` on the tape.
    pub fn reparam(&self, t: &mut Tape, eps: &[f64]) -> Result<Var> {
        match self {
            EncDist::Gaussian { mean, log_std } => Ok(gaussian_reparam(t, *mean, *log_std, eps)),
            _ => Err(Error::invalid(
                "reparameterized draws need a continuous (Gaussian) encoder",
            )),
        }
    }

    pub fn value(&self, t: &Tape) -> EncDistValue {
        match self {
            EncDist::Bernoulli { logits } => {
                EncDistValue::Bernoulli(FactorialBernoulli::from_logits(t.value(*logits)))
            }
            EncDist::Gaussian { mean, log_std } => EncDistValue::Gaussian(
                DiagGaussian::new(t.value(*mean).to_vec(), t.value(*log_std).to_vec())
                    .expect("matching widths"),
            ),
            EncDist::Table { log_probs } => {
                EncDistValue::Table(TableDist::from_log_weights(log_probs).expect("normalizable"))
            }
        }
    }
}

/// A draw from an encoder; `eps` is recorded for Gaussian draws.
#[derive(Clone, Debug, PartialEq)]
pub struct Draw {
    pub h: Vec<f64>,
    pub eps: Option<Vec<f64>>,
}

/// Plain-valued encoder distribution for one `x`.
#[derive(Clone, Debug)]
pub enum EncDistValue {
    Bernoulli(FactorialBernoulli),
    Gaussian(DiagGaussian),
    Table(TableDist),
}

impl EncDistValue {
    pub fn sample(&self, width: usize, rng: &mut RngStream) -> Draw {
        match self {
            EncDistValue::Bernoulli(d) => Draw {
                h: d.sample(rng),
                eps: None,
            },
            EncDistValue::Gaussian(d) => {
                let (h, eps) = d.reparam_sample(rng);
                Draw { h, eps: Some(eps) }
            }
            EncDistValue::Table(d) => Draw {
                h: crate::dists::binary_state(d.sample(rng), width),
                eps: None,
            },
        }
    }

    pub fn log_prob(&self, h: &[f64]) -> Result<f64> {
        match self {
            EncDistValue::Bernoulli(d) => d.log_prob(h),
            EncDistValue::Gaussian(d) => d.log_prob(h),
            EncDistValue::Table(d) => d.log_prob(binary_index(h)),
        }
    }
}

/// Amortized inference model `q_phi(h | x)`.
pub trait Encoder: Send + Sync {
    fn latent(&self) -> Domain;
    fn prefix(&self) -> &str;
    fn dist_tape(&self, t: &mut Tape, params: &ParamVector, x: &[f64]) -> EncDist;
    fn init(&self, rng: &mut RngStream, params: &mut ParamVector) -> Result<()>;

    fn dist(&self, params: &ParamVector, x: &[f64]) -> Result<EncDistValue> {
        let mut t = Tape::new();
        let d = self.dist_tape(&mut t, params, x);
        t.check()?;
        Ok(d.value(&t))
    }

    fn sample(&self, params: &ParamVector, x: &[f64], rng: &mut RngStream) -> Result<Draw> {
        Ok(self.dist(params, x)?.sample(self.latent().dim(), rng))
    }

    fn log_prob(&self, params: &ParamVector, x: &[f64], h: &[f64]) -> Result<f64> {
        self.dist(params, x)?.log_prob(h)
    }

    /// Whether the encoder has trainable parameters.
    fn trainable(&self) -> bool {
        true
    }
}

/// Factorial Bernoulli encoder over binary latents; an MLP maps `x` to logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernoulliEncoder {
    pub spec: MlpSpec,
    pub prefix: String,
}

impl BernoulliEncoder {
    pub fn new(spec: MlpSpec, prefix: impl Into<String>) -> Result<Self> {
        spec.validate()?;
        Ok(BernoulliEncoder {
            spec,
            prefix: prefix.into(),
        })
    }

    /// Single affine layer `x -> logits`.
    pub fn linear(obs: usize, latent: usize, prefix: impl Into<String>) -> Result<Self> {
        Self::new(MlpSpec::new(vec![obs, latent], vec![Activation::Identity])?, prefix)
    }
}

impl Encoder for BernoulliEncoder {
    fn latent(&self) -> Domain {
        Domain::Binary(self.spec.output_width())
    }

    fn prefix(&self) -> &str {
        &self.prefix
    }

    fn dist_tape(&self, t: &mut Tape, params: &ParamVector, x: &[f64]) -> EncDist {
        let xv = t.constant(x.to_vec());
        let logits = self.spec.forward(t, params, &self.prefix, xv);
        EncDist::Bernoulli { logits }
    }

    fn dist(&self, params: &ParamVector, x: &[f64]) -> Result<EncDistValue> {
        let logits = self.spec.eval(params, &self.prefix, x);
        Ok(EncDistValue::Bernoulli(FactorialBernoulli::from_logits(&logits)))
    }

    fn init(&self, rng: &mut RngStream, params: &mut ParamVector) -> Result<()> {
        self.spec.init(&self.prefix, rng, params)
    }
}

/// Diagonal Gaussian encoder; the MLP emits `[mean, log_std]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianEncoder {
    pub spec: MlpSpec,
    pub prefix: String,
}

impl GaussianEncoder {
    pub fn new(spec: MlpSpec, prefix: impl Into<String>) -> Result<Self> {
        spec.validate()?;
        if spec.output_width() % 2 != 0 {
            return Err(Error::invalid("Gaussian encoder output must be [mean, log_std]"));
        }
        Ok(GaussianEncoder {
            spec,
            prefix: prefix.into(),
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.spec.output_width() / 2
    }
}

impl Encoder for GaussianEncoder {
    fn latent(&self) -> Domain {
        Domain::Real(self.latent_dim())
    }

    fn prefix(&self) -> &str {
        &self.prefix
    }

    fn dist_tape(&self, t: &mut Tape, params: &ParamVector, x: &[f64]) -> EncDist {
        let d = self.latent_dim();
        let xv = t.constant(x.to_vec());
        let out = self.spec.forward(t, params, &self.prefix, xv);
        let mean = t.slice(out, 0, d);
        let ls = t.slice(out, d, d);
        let log_std = clamp_log_std(t, ls);
        EncDist::Gaussian { mean, log_std }
    }

    fn dist(&self, params: &ParamVector, x: &[f64]) -> Result<EncDistValue> {
        let d = self.latent_dim();
        let out = self.spec.eval(params, &self.prefix, x);
        Ok(EncDistValue::Gaussian(DiagGaussian::new(
            out[..d].to_vec(),
            out[d..].to_vec(),
        )?))
    }

    fn init(&self, rng: &mut RngStream, params: &mut ParamVector) -> Result<()> {
        self.spec.init(&self.prefix, rng, params)
    }
}

/// Exact posterior `p_theta(h | x)` of a binary-latent model, frozen at the
/// parameters it was built with. Has no trainable parameters.
#[derive(Clone)]
pub struct TableEncoder {
    model: Arc<dyn LatentModel>,
    params: ParamVector,
}

impl TableEncoder {
    pub fn new(model: Arc<dyn LatentModel>, params: ParamVector) -> Result<Self> {
        if !model.latent().is_binary() {
            return Err(Error::invalid("TableEncoder needs a binary latent space"));
        }
        Ok(TableEncoder { model, params })
    }

    pub fn posterior(&self, x: &[f64]) -> Result<TableDist> {
        crate::oracle::exact_posterior(self.model.as_ref(), &self.params, x)
    }
}

impl Encoder for TableEncoder {
    fn latent(&self) -> Domain {
        self.model.latent()
    }

    fn prefix(&self) -> &str {
        "posterior"
    }

    fn dist_tape(&self, _t: &mut Tape, _params: &ParamVector, x: &[f64]) -> EncDist {
        let post = self.posterior(x).expect("enumerable posterior");
        EncDist::Table {
            log_probs: post.probs().iter().map(|p| p.ln()).collect(),
        }
    }

    fn dist(&self, _params: &ParamVector, x: &[f64]) -> Result<EncDistValue> {
        Ok(EncDistValue::Table(self.posterior(x)?))
    }

    fn init(&self, _rng: &mut RngStream, _params: &mut ParamVector) -> Result<()> {
        Ok(())
    }

    fn trainable(&self) -> bool {
        false
    }
}
