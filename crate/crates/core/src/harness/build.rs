//! Component construction and oracle evaluation for configured experiments.

use std::collections::BTreeMap;

use crate::dists::{binary_state, DiagGaussian, FactorialBernoulli, TableDist};
use crate::error::{Error, Result};
use crate::estimators::{elbo_exact, elbo_mc, iw_lb, ElboForm};
use crate::harness::config::{table_dim_ok, ExperimentConfig, LearnerSection, ModelConfig, NoiseChoice};
use crate::harness::datasets::Truth;
use crate::learn::adversarial::{Critic, VdmGenerator};
use crate::learn::directed::{AvbEncoder, LearnerKind};
use crate::learn::undirected::{AuxGenerator, GaussianGenerator, Noise};
use crate::learn::Dataset;
use crate::models::io::Component;
use crate::models::{
    BernoulliEncoder, Domain, Encoder, GaussianEncoder, ImplicitGen, LatentModel, NeuralRf, ObsModel, Potential, Sbn,
    VaePair,
};
use crate::num::{Activation, MlpSpec, ParamVector, RngStream};
use crate::oracle::{
    enumerate_log_z, exact_divergence, log_z_grid, marginal_table, nrf_grid_density, nrf_table, vae_log_marginals,
    Density, DivKind, GridSpec,
};

pub const THETA: &str = "theta";
pub const PHI: &str = "phi";
pub const PSI: &str = "psi";

fn mlp(widths: Vec<usize>) -> Result<MlpSpec> {
    MlpSpec::uniform(widths, Activation::Tanh, Activation::Identity)
}

fn vae_pair(domain: Domain, latent: usize, hidden: usize, encoder_hidden: usize) -> Result<VaePair> {
    let d = domain.dim();
    let (obs_model, out) = match domain {
        Domain::Binary(_) => (ObsModel::Bernoulli, d),
        Domain::Real(_) => (ObsModel::Gaussian, 2 * d),
    };
    VaePair::new(
        obs_model,
        mlp(vec![latent, hidden, out])?,
        mlp(vec![d, encoder_hidden, 2 * latent])?,
        THETA,
        PHI,
    )
}

fn potential(domain: Domain, hidden: usize) -> Result<Potential> {
    Ok(if hidden == 0 {
        Potential::Quadratic
    } else {
        Potential::Mlp(mlp(vec![domain.dim(), hidden, 1])?)
    })
}

/// Checks that the model section can be built over `domain`.
pub fn check_model(model: &ModelConfig, domain: Domain) -> Result<()> {
    match model {
        ModelConfig::Sbn { hidden, encoder_hidden } => {
            if !domain.is_binary() {
                return Err(Error::invalid("sbn models need binary data"));
            }
            if *encoder_hidden > 0 {
                mlp(vec![domain.dim(), *encoder_hidden, hidden.iter().sum()])?;
            }
            Sbn::new(domain.dim(), hidden.clone(), THETA).map(|_| ())
        }
        ModelConfig::Vae {
            latent,
            hidden,
            encoder_hidden,
        } => vae_pair(domain, *latent, *hidden, *encoder_hidden).map(|_| ()),
        ModelConfig::Nrf { hidden } => {
            if *hidden == 0 && domain.is_binary() {
                return Err(Error::invalid("the quadratic potential needs continuous data"));
            }
            NeuralRf::new(potential(domain, *hidden)?, domain, false, THETA).map(|_| ())
        }
        ModelConfig::TableGenerator {} => {
            if !table_dim_ok(domain) {
                return Err(Error::invalid("table generators need a small binary domain"));
            }
            Ok(())
        }
        ModelConfig::ImplicitGenerator { hidden } => {
            if domain.is_binary() {
                return Err(Error::invalid("implicit generators need continuous data"));
            }
            implicit(domain.dim(), *hidden).map(|_| ())
        }
    }
}

fn implicit(dim: usize, hidden: usize) -> Result<ImplicitGen> {
    if hidden == 0 {
        ImplicitGen::affine(dim, THETA)
    } else {
        ImplicitGen::new(mlp(vec![dim, hidden, dim])?, THETA)
    }
}

#[derive(Clone, Debug)]
pub enum DirectedModel {
    Sbn(Sbn),
    Vae(VaePair),
}

impl DirectedModel {
    pub fn as_latent(&self) -> &dyn LatentModel {
        match self {
            DirectedModel::Sbn(m) => m,
            DirectedModel::Vae(m) => m,
        }
    }
}

#[derive(Clone, Debug)]
pub enum DirectedEncoder {
    Bernoulli(BernoulliEncoder),
    Gaussian(GaussianEncoder),
}

impl DirectedEncoder {
    pub fn as_encoder(&self) -> &dyn Encoder {
        match self {
            DirectedEncoder::Bernoulli(e) => e,
            DirectedEncoder::Gaussian(e) => e,
        }
    }
}

#[derive(Clone, Debug)]
pub enum FieldAux {
    None,
    Inclusive(AuxGenerator),
    Exclusive(GaussianGenerator),
}

/// Everything a configured learner trains.
#[derive(Clone, Debug)]
pub enum Built {
    Directed { model: DirectedModel, enc: DirectedEncoder },
    Avb { vae: VaePair, enc: AvbEncoder, critic: Critic },
    Vdm { gen: VdmGenerator, critic: Critic },
    Field { nrf: NeuralRf, aux: FieldAux },
}

impl Built {
    pub fn new(cfg: &ExperimentConfig) -> Result<Built> {
        let domain = cfg.dataset.family.domain();
        let d = domain.dim();
        Ok(match (&cfg.learner, &cfg.model) {
            (LearnerSection::Directed(c), ModelConfig::Vae { latent, hidden, encoder_hidden }) if c.kind == LearnerKind::Avb => {
                let vae = vae_pair(domain, *latent, *hidden, *encoder_hidden)?;
                let gen = ImplicitGen::new(mlp(vec![d + latent, *encoder_hidden, *latent])?, PHI)?;
                let enc = AvbEncoder::new(gen, d)?;
                let critic = Critic::mlp(d + latent, *hidden, PSI)?;
                Built::Avb { vae, enc, critic }
            }
            (LearnerSection::Directed(_), ModelConfig::Sbn { hidden, encoder_hidden }) => {
                let model = Sbn::new(d, hidden.clone(), THETA)?;
                let h: usize = hidden.iter().sum();
                let enc = if *encoder_hidden == 0 {
                    BernoulliEncoder::linear(d, h, PHI)?
                } else {
                    BernoulliEncoder::new(mlp(vec![d, *encoder_hidden, h])?, PHI)?
                };
                Built::Directed {
                    model: DirectedModel::Sbn(model),
                    enc: DirectedEncoder::Bernoulli(enc),
                }
            }
            (LearnerSection::Directed(_), ModelConfig::Vae { latent, hidden, encoder_hidden }) => {
                let vae = vae_pair(domain, *latent, *hidden, *encoder_hidden)?;
                let enc = vae.encoder();
                Built::Directed {
                    model: DirectedModel::Vae(vae),
                    enc: DirectedEncoder::Gaussian(enc),
                }
            }
            (LearnerSection::Vdm(s), ModelConfig::TableGenerator {}) => Built::Vdm {
                gen: VdmGenerator::Table {
                    dim: d,
                    prefix: THETA.into(),
                },
                critic: Critic::mlp(d, s.critic_hidden, PSI)?,
            },
            (LearnerSection::Vdm(s), ModelConfig::ImplicitGenerator { hidden }) => Built::Vdm {
                gen: VdmGenerator::Implicit(implicit(d, *hidden)?),
                critic: Critic::mlp(d, s.critic_hidden, PSI)?,
            },
            (l, ModelConfig::Nrf { hidden }) if l.is_undirected() => {
                let with_c = matches!(l, LearnerSection::Nce(_));
                let nrf = NeuralRf::new(potential(domain, *hidden)?, domain, with_c, THETA)?;
                let aux = match l {
                    LearnerSection::InclusiveNrf(s) => {
                        FieldAux::Inclusive(AuxGenerator::new(s.generator_latent, domain, s.generator_hidden, PHI)?)
                    }
                    LearnerSection::ExclusiveNrf(_) => FieldAux::Exclusive(GaussianGenerator::new(d, PHI)?),
                    _ => FieldAux::None,
                };
                Built::Field { nrf, aux }
            }
            (l, m) => {
                return Err(Error::Config(format!(
                    "model.family: learner `{}` cannot train a `{}` model",
                    l.kind(),
                    m.family()
                )))
            }
        })
    }

    pub fn init(&self, rng: &mut RngStream, params: &mut ParamVector) -> Result<()> {
        match self {
            Built::Directed { model, enc } => {
                model.as_latent().init(rng, params)?;
                enc.as_encoder().init(rng, params)
            }
            Built::Avb { vae, enc, critic } => {
                vae.init(rng, params)?;
                enc.gen.init(rng, params)?;
                critic.init(rng, params)
            }
            Built::Vdm { gen, critic } => {
                gen.init(rng, params)?;
                critic.init(rng, params)
            }
            Built::Field { nrf, aux } => {
                nrf.init(rng, params)?;
                match aux {
                    FieldAux::None => Ok(()),
                    FieldAux::Inclusive(g) => g.init(rng, params),
                    FieldAux::Exclusive(g) => g.init(rng, params),
                }
            }
        }
    }

    /// Component specs recorded in checkpoints.
    pub fn components(&self) -> BTreeMap<String, Component> {
        let mut out = BTreeMap::new();
        let critic = |c: &Critic| Component::Mlp {
            spec: c.spec.clone(),
            prefix: c.prefix.clone(),
        };
        match self {
            Built::Directed { model, enc } => {
                out.insert(
                    "model".into(),
                    match model {
                        DirectedModel::Sbn(m) => Component::Sbn(m.clone()),
                        DirectedModel::Vae(m) => Component::VaePair(m.clone()),
                    },
                );
                out.insert(
                    "encoder".into(),
                    match enc {
                        DirectedEncoder::Bernoulli(e) => Component::BernoulliEncoder(e.clone()),
                        DirectedEncoder::Gaussian(e) => Component::GaussianEncoder(e.clone()),
                    },
                );
            }
            Built::Avb { vae, enc, critic: c } => {
                out.insert("model".into(), Component::VaePair(vae.clone()));
                out.insert("encoder".into(), Component::ImplicitGen(enc.gen.clone()));
                out.insert("critic".into(), critic(c));
            }
            Built::Vdm { gen, critic: c } => {
                if let VdmGenerator::Implicit(g) = gen {
                    out.insert("generator".into(), Component::ImplicitGen(g.clone()));
                }
                out.insert("critic".into(), critic(c));
            }
            Built::Field { nrf, aux } => {
                out.insert("model".into(), Component::NeuralRf(nrf.clone()));
                if let FieldAux::Inclusive(g) = aux {
                    out.insert(
                        "generator".into(),
                        Component::Mlp {
                            spec: g.spec.clone(),
                            prefix: g.prefix.clone(),
                        },
                    );
                }
            }
        }
        out
    }

    /// Model distribution on the support of `truth`, when it can be computed exactly.
    pub fn model_density(&self, truth: &Truth, params: &ParamVector) -> Result<Option<Density>> {
        let binary = truth.domain().is_binary();
        Ok(match self {
            Built::Directed {
                model: DirectedModel::Sbn(m),
                ..
            } => Some(Density::Table(marginal_table(m, params)?)),
            Built::Directed {
                model: DirectedModel::Vae(vae),
                ..
            }
            | Built::Avb { vae, .. } => {
                if binary {
                    Some(Density::Table(vae_table(vae, params)?))
                } else {
                    None
                }
            }
            Built::Vdm { gen, .. } => match gen {
                VdmGenerator::Table { .. } => Some(Density::Table(gen.table(params)?)),
                VdmGenerator::Implicit(g) if g.spec.widths.len() == 2 => {
                    let dist = g.affine_density(params)?;
                    Some(Density::grid_from_fn(truth.grid()?, |x| {
                        dist.log_prob(x).unwrap_or(f64::NEG_INFINITY)
                    })?)
                }
                VdmGenerator::Implicit(_) => None,
            },
            Built::Field { nrf, .. } => Some(if binary {
                Density::Table(nrf_table(nrf, params)?)
            } else {
                nrf_grid_density(nrf, params, &truth.grid()?)?
            }),
        })
    }

    /// `c - log Z` for random fields that carry a normalizer estimate.
    pub fn log_z_gap(&self, truth: &Truth, params: &ParamVector) -> Result<Option<f64>> {
        match self {
            Built::Field { nrf, .. } if nrf.with_c => Ok(Some(if truth.domain().is_binary() {
                -enumerate_log_z(nrf, params)?
            } else {
                -log_z_grid(nrf, params, &truth.grid()?)?
            })),
            _ => Ok(None),
        }
    }

    /// Mean ELBO and IW bounds over `xs`: exact ELBO for discrete latents,
    /// Monte Carlo with `mc` draws otherwise.
    pub fn bounds(
        &self,
        params: &ParamVector,
        xs: &[Vec<f64>],
        iw_k: &[usize],
        mc: usize,
        rng: &mut RngStream,
    ) -> Result<(Option<f64>, Vec<Option<f64>>)> {
        let Built::Directed { model, enc } = self else {
            return Ok((None, vec![None; iw_k.len()]));
        };
        let (m, e) = (model.as_latent(), enc.as_encoder());
        let n = xs.len() as f64;
        let mut elbo = 0.0;
        for x in xs {
            elbo += match model {
                DirectedModel::Sbn(_) => elbo_exact(m, e, params, x)?,
                DirectedModel::Vae(_) => elbo_mc(m, e, params, x, rng, ElboForm::ReconMinusKl, mc)?,
            };
        }
        let mut iws = Vec::with_capacity(iw_k.len());
        for &k in iw_k {
            let mut acc = 0.0;
            for x in xs {
                acc += iw_lb(m, e, params, x, k, mc, rng)?;
            }
            iws.push(Some(acc / n));
        }
        Ok((Some(elbo / n), iws))
    }
}

/// Grid over the latent prior used for VAE marginals.
pub fn vae_latent_grid(latent: usize) -> Result<GridSpec> {
    GridSpec::new(vec![(-5.0, 5.0); latent], if latent == 1 { 400 } else { 80 })
}

/// Marginal pmf of a binary-observation VAE by prior quadrature.
pub fn vae_table(vae: &VaePair, params: &ParamVector) -> Result<TableDist> {
    let d = vae.obs_dim;
    let xs: Vec<Vec<f64>> = (0..1usize << d).map(|i| binary_state(i, d)).collect();
    let lm = vae_log_marginals(vae, params, &xs, &vae_latent_grid(vae.latent_dim)?)?;
    TableDist::from_log_weights(&lm)
}

/// `KL(p || q)`; infinite where `q` misses mass of `p`.
pub fn kl_or_inf(p: &Density, q: &Density) -> Result<f64> {
    match exact_divergence(p, q, &DivKind::Kl) {
        Err(Error::AbsoluteContinuity(_)) => Ok(f64::INFINITY),
        r => r,
    }
}

/// NCE noise fitted to the training set as requested.
pub fn nce_noise(choice: NoiseChoice, data: &Dataset) -> Result<Noise> {
    let d = data.domain.dim();
    match (choice, data.domain) {
        (NoiseChoice::Uniform, Domain::Binary(_)) => Ok(Noise::Table {
            dim: d,
            dist: TableDist::uniform(1 << d)?,
        }),
        (NoiseChoice::Uniform, Domain::Real(_)) => Err(Error::Config("learner.noise: uniform noise needs a binary domain".into())),
        (NoiseChoice::DataMarginals, Domain::Binary(_)) => {
            // Clamp away from 0 and 1 so every state has noise mass.
            let m: Vec<f64> = data.mean().into_iter().map(|p| p.clamp(0.02, 0.98)).collect();
            let fb = FactorialBernoulli::new(m);
            let lw: Vec<f64> = (0..1usize << d)
                .map(|i| fb.log_prob(&binary_state(i, d)))
                .collect::<Result<_>>()?;
            Ok(Noise::Table {
                dim: d,
                dist: TableDist::from_log_weights(&lw)?,
            })
        }
        (NoiseChoice::DataMarginals, Domain::Real(_)) => {
            let mean = data.mean();
            let n = data.len().max(2) as f64;
            let log_std = (0..d)
                .map(|j| {
                    let v = data.xs.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0);
                    0.5 * v.max(1e-6).ln()
                })
                .collect();
            Ok(Noise::Gaussian(DiagGaussian::new(mean, log_std)?))
        }
    }
}
