//! Model zoo: sigmoid belief networks, deep latent Gaussian models,
//! VAE decoder/encoder pairs, implicit generators and neural random fields.

mod dlgm;
mod encoder;
mod implicit;
pub mod io;
mod nrf;
mod sbn;
mod vae;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{ParamVector, RngStream, Tape, Var};

pub use dlgm::{Dlgm, DlgmLayer};
pub use encoder::{
    BernoulliEncoder, Draw, EncDist, EncDistValue, Encoder, GaussianEncoder, TableEncoder,
};
pub use implicit::ImplicitGen;
pub use nrf::{NeuralRf, Potential};
pub use sbn::Sbn;
pub use vae::{ObsModel, VaePair};

pub const MAX_BINARY_OBS: usize = 10;
pub const MAX_HIDDEN: usize = 8;
pub const MAX_REAL_DIM: usize = 2;

/// Support of an observation or latent vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "dim")]
pub enum Domain {
    Binary(usize),
    Real(usize),
}

impl Domain {
    pub fn dim(self) -> usize {
        match self {
            Domain::Binary(d) | Domain::Real(d) => d,
        }
    }

    pub fn is_binary(self) -> bool {
        matches!(self, Domain::Binary(_))
    }

    pub fn contains(self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && match self {
                Domain::Binary(_) => x.iter().all(|&v| v == 0.0 || v == 1.0),
                Domain::Real(_) => x.iter().all(|v| v.is_finite()),
            }
    }

    pub fn check(self, context: &'static str, x: &[f64]) -> Result<()> {
        crate::dists::check_dim(context, self.dim(), x.len())?;
        if !self.contains(x) {
            return Err(Error::invalid(format!("{context}: point outside {self:?}")));
        }
        Ok(())
    }
}

/// A directed joint density `p_theta(x, h)` with an ancestral sampler.
pub trait LatentModel: Send + Sync {
    fn obs(&self) -> Domain;
    fn latent(&self) -> Domain;
    /// Name prefix of this model's parameter segments.
    fn prefix(&self) -> &str;

    /// `log p(h) + log p(x | h)`, differentiable in the parameters and in `h`.
    fn joint_log_prob_tape(&self, t: &mut Tape, params: &ParamVector, x: &[f64], h: Var) -> Var;

    fn joint_log_prob(&self, params: &ParamVector, x: &[f64], h: &[f64]) -> Result<f64> {
        self.obs().check("joint_log_prob x", x)?;
        self.latent().check("joint_log_prob h", h)?;
        let mut t = Tape::new();
        let hv = t.constant(h.to_vec());
        let out = self.joint_log_prob_tape(&mut t, params, x, hv);
        t.check()?;
        Ok(t.scalar_value(out))
    }

    /// `log p(h)`.
    fn log_prior(&self, params: &ParamVector, h: &[f64]) -> Result<f64>;

    /// Closed-form `KL(q || p(h))` when the pair admits one.
    fn kl_to_prior(&self, _params: &ParamVector, _q: &EncDistValue) -> Option<f64> {
        None
    }

    /// Ancestral draw of `(x, h)`.
    fn generate_joint(&self, params: &ParamVector, rng: &mut RngStream) -> (Vec<f64>, Vec<f64>);

    fn generate(&self, params: &ParamVector, rng: &mut RngStream) -> Vec<f64> {
        self.generate_joint(params, rng).0
    }

    /// Registers freshly initialized parameters.
    fn init(&self, rng: &mut RngStream, params: &mut ParamVector) -> Result<()>;
}

pub(crate) fn check_caps(obs: Domain, latent: Option<Domain>) -> Result<()> {
    let ok = |d: Domain| match d {
        Domain::Binary(n) => (1..=MAX_BINARY_OBS).contains(&n),
        Domain::Real(n) => (1..=MAX_REAL_DIM).contains(&n),
    };
    if !ok(obs) {
        return Err(Error::invalid(format!("observation domain {obs:?} exceeds desk-scale caps")));
    }
    if let Some(l) = latent {
        let fits = match l {
            Domain::Binary(n) => (1..=2 * MAX_HIDDEN).contains(&n),
            Domain::Real(n) => (1..=MAX_REAL_DIM).contains(&n),
        };
        if !fits {
            return Err(Error::invalid(format!("latent domain {l:?} exceeds desk-scale caps")));
        }
    }
    Ok(())
}
