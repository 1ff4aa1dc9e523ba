use serde::{Deserialize, Serialize};

use crate::dists::{
    bernoulli_log_prob, clamp_log_std, gaussian_log_prob, DiagGaussian, FactorialBernoulli,
    StdNormal,
};
use crate::error::{Error, Result};
use crate::models::{check_caps, Domain, EncDistValue, GaussianEncoder, LatentModel};
use crate::num::{MlpSpec, ParamVector, RngStream, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsModel {
    /// Decoder emits `[mean, log_std]` of a diagonal Gaussian.
    Gaussian,
    /// Decoder emits factorial Bernoulli logits.
    Bernoulli,
}

/// Decoder `p_theta(x | h)` with a standard-normal prior on `h`, paired with
/// a Gaussian encoder `q_phi(h | x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaePair {
    pub obs_dim: usize,
    pub latent_dim: usize,
    pub obs_model: ObsModel,
    pub decoder: MlpSpec,
    pub encoder: MlpSpec,
    pub theta: String,
    pub phi: String,
}

impl VaePair {
    pub fn new(
        obs_model: ObsModel,
        decoder: MlpSpec,
        encoder: MlpSpec,
        theta: impl Into<String>,
        phi: impl Into<String>,
    ) -> Result<Self> {
        decoder.validate()?;
        encoder.validate()?;
        let latent_dim = decoder.input_width();
        let obs_dim = encoder.input_width();
        let want = match obs_model {
            ObsModel::Gaussian => 2 * obs_dim,
            ObsModel::Bernoulli => obs_dim,
        };
        if decoder.output_width() != want {
            return Err(Error::invalid(format!(
                "decoder output width {} does not fit {obs_model:?} observations of width {obs_dim}",
                decoder.output_width()
            )));
        }
        if encoder.output_width() != 2 * latent_dim {
            return Err(Error::invalid("encoder must emit [mean, log_std] for each latent"));
        }
        let pair = VaePair {
            obs_dim,
            latent_dim,
            obs_model,
            decoder,
            encoder,
            theta: theta.into(),
            phi: phi.into(),
        };
        check_caps(pair.obs(), Some(pair.latent()))?;
        Ok(pair)
    }

    pub fn encoder(&self) -> GaussianEncoder {
        GaussianEncoder {
            spec: self.encoder.clone(),
            prefix: self.phi.clone(),
        }
    }

    pub fn prior(&self) -> StdNormal {
        StdNormal {
            dim: self.latent_dim,
        }
    }

    /// Plain `log p(x | h)`.
    pub fn obs_log_prob(&self, params: &ParamVector, x: &[f64], h: &[f64]) -> f64 {
        let out = self.decoder.eval(params, &self.theta, h);
        match self.obs_model {
            ObsModel::Bernoulli => FactorialBernoulli::from_logits(&out)
                .log_prob(x)
                .expect("obs width"),
            ObsModel::Gaussian => {
                let d = self.obs_dim;
                DiagGaussian::new(out[..d].to_vec(), out[d..].to_vec())
                    .and_then(|g| g.log_prob(x))
                    .expect("obs width")
            }
        }
    }

    /// Decoder output for a latent, reusable across many `x`.
    pub fn decode(&self, params: &ParamVector, h: &[f64]) -> Vec<f64> {
        self.decoder.eval(params, &self.theta, h)
    }

    /// `log p(x | h)` from a cached decoder output.
    pub fn obs_log_prob_decoded(&self, decoded: &[f64], x: &[f64]) -> f64 {
        match self.obs_model {
            ObsModel::Bernoulli => FactorialBernoulli::from_logits(decoded)
                .log_prob(x)
                .expect("obs width"),
            ObsModel::Gaussian => {
                let d = self.obs_dim;
                DiagGaussian::new(decoded[..d].to_vec(), decoded[d..].to_vec())
                    .and_then(|g| g.log_prob(x))
                    .expect("obs width")
            }
        }
    }

    /// `log p(x | h)` on the tape.
    pub fn obs_log_prob_tape(&self, t: &mut Tape, params: &ParamVector, x: &[f64], h: Var) -> Var {
        let out = self.decoder.forward(t, params, &self.theta, h);
        match self.obs_model {
            ObsModel::Bernoulli => bernoulli_log_prob(t, out, x),
            ObsModel::Gaussian => {
                let d = self.obs_dim;
                let mean = t.slice(out, 0, d);
                let ls = t.slice(out, d, d);
                let log_std = clamp_log_std(t, ls);
                let xv = t.constant(x.to_vec());
                gaussian_log_prob(t, mean, log_std, xv)
            }
        }
    }
}

impl LatentModel for VaePair {
    fn obs(&self) -> Domain {
        match self.obs_model {
            ObsModel::Gaussian => Domain::Real(self.obs_dim),
            ObsModel::Bernoulli => Domain::Binary(self.obs_dim),
        }
    }

    fn latent(&self) -> Domain {
        Domain::Real(self.latent_dim)
    }

    fn prefix(&self) -> &str {
        &self.theta
    }

    fn joint_log_prob_tape(&self, t: &mut Tape, params: &ParamVector, x: &[f64], h: Var) -> Var {
        let prior = self.prior().log_prob_tape(t, h);
        let cond = self.obs_log_prob_tape(t, params, x, h);
        t.add(prior, cond)
    }

    fn joint_log_prob(&self, params: &ParamVector, x: &[f64], h: &[f64]) -> Result<f64> {
        self.obs().check("VaePair x", x)?;
        self.latent().check("VaePair h", h)?;
        Ok(self.prior().log_prob(h)? + self.obs_log_prob(params, x, h))
    }

    fn log_prior(&self, _params: &ParamVector, h: &[f64]) -> Result<f64> {
        self.prior().log_prob(h)
    }

    fn kl_to_prior(&self, _params: &ParamVector, q: &EncDistValue) -> Option<f64> {
        match q {
            EncDistValue::Gaussian(g) => g.kl_to_std_normal(&self.prior()).ok(),
            _ => None,
        }
    }

    fn generate_joint(&self, params: &ParamVector, rng: &mut RngStream) -> (Vec<f64>, Vec<f64>) {
        let h = self.prior().sample(rng);
        let out = self.decoder.eval(params, &self.theta, &h);
        let x = match self.obs_model {
            ObsModel::Bernoulli => FactorialBernoulli::from_logits(&out).sample(rng),
            ObsModel::Gaussian => {
                let d = self.obs_dim;
                DiagGaussian::new(out[..d].to_vec(), out[d..].to_vec())
                    .expect("decoder width")
                    .sample(rng)
            }
        };
        (x, h)
    }

    fn init(&self, rng: &mut RngStream, params: &mut ParamVector) -> Result<()> {
        self.decoder.init(&self.theta, rng, params)
    }
}
