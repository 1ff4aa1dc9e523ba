use serde::{Deserialize, Serialize};

use crate::dists::DiagGaussian;
use crate::error::{Error, Result};
use crate::num::{Activation, MlpSpec, ParamVector, RngStream, Tape, Var};

/// Sampler `x = G_theta(eps)`, `eps ~ N(0, I)`. No density by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImplicitGen {
    pub spec: MlpSpec,
    pub prefix: String,
}

impl ImplicitGen {
    pub fn new(spec: MlpSpec, prefix: impl Into<String>) -> Result<Self> {
        spec.validate()?;
        Ok(ImplicitGen {
            spec,
            prefix: prefix.into(),
        })
    }

    /// One identity layer of matching width: `x = W eps + b`.
    pub fn affine(dim: usize, prefix: impl Into<String>) -> Result<Self> {
        Self::new(MlpSpec::new(vec![dim, dim], vec![Activation::Identity])?, prefix)
    }

    pub fn noise_dim(&self) -> usize {
        self.spec.input_width()
    }

    pub fn out_dim(&self) -> usize {
        self.spec.output_width()
    }

    pub fn init(&self, rng: &mut RngStream, params: &mut ParamVector) -> Result<()> {
        self.spec.init(&self.prefix, rng, params)
    }

    pub fn transform(&self, params: &ParamVector, eps: &[f64]) -> Vec<f64> {
        self.spec.eval(params, &self.prefix, eps)
    }

    pub fn generate(&self, params: &ParamVector, rng: &mut RngStream) -> Vec<f64> {
        let eps = rng.normals(self.noise_dim());
        self.transform(params, &eps)
    }

    pub fn generate_tape(&self, t: &mut Tape, params: &ParamVector, eps: &[f64]) -> Var {
        let e = t.constant(eps.to_vec());
        self.spec.forward(t, params, &self.prefix, e)
    }

    /// Closed-form density for a diagonal affine generator, used only by
    /// tests and oracles.
    pub fn affine_density(&self, params: &ParamVector) -> Result<DiagGaussian> {
        let n = self.out_dim();
        if self.spec.layers() != 1
            || self.spec.activations[0] != Activation::Identity
            || self.noise_dim() != n
        {
            return Err(Error::invalid("generator is not a square affine map"));
        }
        let w = params.get(&MlpSpec::weight_name(&self.prefix, 0))?;
        let b = params.get(&MlpSpec::bias_name(&self.prefix, 0))?;
        if (0..n * n).any(|i| i % (n + 1) != 0 && w[i] != 0.0) {
            return Err(Error::invalid("affine generator weight is not diagonal"));
        }
        DiagGaussian::new(
            b.to_vec(),
            (0..n).map(|i| w[i * (n + 1)].abs().ln()).collect(),
        )
    }
}
