//! Training runs and checkpoint evaluation.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::build::{kl_or_inf, nce_noise, Built, FieldAux};
use crate::harness::config::{ExperimentConfig, LearnerSection};
use crate::harness::datasets::{make_dataset, Truth};
use crate::harness::metrics::{MetricRecord, MetricsWriter, METRICS_FILE};
use crate::learn::adversarial::{FDivSpec, Vdm, VdmConfig};
use crate::learn::directed::{Avb, Iwae, Jsa, LearnerKind, Rws, Variational, WakeSleep};
use crate::learn::undirected::{ExclusiveNrf, InclusiveNrf, Nce, NceConfig, Sml};
use crate::learn::{drive, Learner, Progress, RunSpec};
use crate::models::io::Checkpoint;
use crate::num::{ParamVector, RngStream};
use crate::oracle::{exact_divergence, total_variation, Density, DivKind};
use crate::samplers::RwKernel;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

const INIT_STREAM: u64 = 1;
const LEARN_STREAM: u64 = 2;
const METRIC_STREAM: u64 = 3;

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub name: String,
    pub dir: PathBuf,
    pub steps: u64,
    pub last: Option<MetricRecord>,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub seconds: f64,
}

impl RunSummary {
    pub fn final_kl(&self) -> Option<f64> {
        self.last.as_ref().and_then(|r| r.kl_to_truth)
    }
}

/// Directory a config writes into under `out_root`.
pub fn run_dir(cfg: &ExperimentConfig, out_root: &Path) -> PathBuf {
    out_root.join(cfg.output.as_deref().unwrap_or(&cfg.name))
}

type Observer<'a> = dyn FnMut(&Progress) -> Result<()> + 'a;

fn go<L: Learner>(
    mut learner: L,
    params: ParamVector,
    spec: &RunSpec,
    rng: &mut RngStream,
    observe: &mut Observer,
) -> Result<(ParamVector, u64)> {
    let run = drive(&mut learner, params, spec, rng, observe)?;
    Ok((run.params, run.t))
}

/// Runs `cfg` to its step budget, streaming metrics into the run directory
/// and writing the final checkpoint. A divergence abort leaves the metrics
/// written so far and no checkpoint.
pub fn train(cfg: &ExperimentConfig, out_root: &Path) -> Result<RunSummary> {
    let started = Instant::now();
    let dir = run_dir(cfg, out_root);
    fs::create_dir_all(&dir)?;
    let checkpoint = dir.join(CHECKPOINT_FILE);
    if checkpoint.exists() {
        fs::remove_file(&checkpoint)?;
    }
    let (data, truth) = make_dataset(&cfg.dataset)?;
    let built = Built::new(cfg)?;
    let root = RngStream::new(cfg.seed);
    let mut params = ParamVector::new();
    built.init(&mut root.split(INIT_STREAM), &mut params)?;
    let mut rng = root.split(LEARN_STREAM);
    let metric_root = root.split(METRIC_STREAM);
    let truth_density = truth.density()?;
    let eval_xs = data.xs[..data.len().min(cfg.metrics.eval_points)].to_vec();
    let mut writer = MetricsWriter::create(&dir, &cfg.metrics.iw_k)?;
    let spec = cfg.run_spec();

    let result = {
        let mut observe = |p: &Progress| -> Result<()> {
            let mut mrng = metric_root.split(p.step);
            let (elbo, iw_lb) = built.bounds(
                p.params,
                &eval_xs,
                &cfg.metrics.iw_k,
                cfg.metrics.mc_samples,
                &mut mrng,
            )?;
            let kl_to_truth = match built.model_density(&truth, p.params)? {
                Some(q) => Some(kl_or_inf(&truth_density, &q)?),
                None => None,
            };
            writer.write(MetricRecord {
                step: p.step,
                gamma: p.gamma,
                elbo,
                iw_lb,
                kl_to_truth,
                log_z_gap: built.log_z_gap(&truth, p.params)?,
                acceptance: p.acceptance,
                grad_norm: p.field_norm,
            })
        };
        let obs: &mut Observer = &mut observe;
        let domain = data.domain;
        match (&cfg.learner, &built) {
            (LearnerSection::Directed(c), Built::Directed { model, enc }) => {
                let (m, e) = (model.as_latent(), enc.as_encoder());
                match c.kind {
                    LearnerKind::Variational => {
                        let l = Variational::new(c, m, e, &data, &mut rng)?;
                        go(l, params, &spec, &mut rng, obs)
                    }
                    LearnerKind::Iwae => go(Iwae::new(c, m, e, &data)?, params, &spec, &mut rng, obs),
                    LearnerKind::Ws => go(WakeSleep::new(c, m, e, &data)?, params, &spec, &mut rng, obs),
                    LearnerKind::Rws => go(Rws::new(c, m, e, &data)?, params, &spec, &mut rng, obs),
                    LearnerKind::Jsa => go(Jsa::new(c, m, e, &data)?, params, &spec, &mut rng, obs),
                    other => Err(Error::Config(format!("learner.kind: `{other}` cannot train this model"))),
                }
            }
            (LearnerSection::Directed(c), Built::Avb { vae, enc, critic }) => {
                go(Avb::new(c, vae, enc, critic, &data)?, params, &spec, &mut rng, obs)
            }
            (LearnerSection::Vdm(s), Built::Vdm { gen, critic }) => {
                let vc = VdmConfig {
                    fspec: FDivSpec::by_name(&s.f)?,
                    theta_loss: s.theta_loss,
                    critic_steps: s.critic_steps,
                };
                go(Vdm::new(vc, gen, critic, &data)?, params, &spec, &mut rng, obs)
            }
            (LearnerSection::Sml(s), Built::Field { nrf, .. }) => {
                let kernel = s.kernel.unwrap_or(RwKernel::default_for(domain));
                go(Sml::new(nrf, kernel, &data, s.chains)?, params, &spec, &mut rng, obs)
            }
            (LearnerSection::InclusiveNrf(s), Built::Field { nrf, aux: FieldAux::Inclusive(g) }) => {
                go(InclusiveNrf::new(nrf, g, s.kernel, &data, s.chains)?, params, &spec, &mut rng, obs)
            }
            (LearnerSection::ExclusiveNrf(_), Built::Field { nrf, aux: FieldAux::Exclusive(g) }) => {
                go(ExclusiveNrf::new(nrf, g, &data)?, params, &spec, &mut rng, obs)
            }
            (LearnerSection::Nce(s), Built::Field { nrf, .. }) => {
                let nc = NceConfig {
                    nu: s.nu,
                    noise: nce_noise(s.noise, &data)?,
                };
                go(Nce::new(nrf, nc, &data, &rng)?, params, &spec, &mut rng, obs)
            }
            _ => Err(Error::Config(format!(
                "learner.kind: `{}` does not match model family `{}`",
                cfg.learner.kind(),
                cfg.model.family()
            ))),
        }
    };
    let (params, steps) = result?;
    let mut ck = Checkpoint::new(steps, built.components(), &params);
    ck.config = Some(cfg.source.clone());
    ck.save(&checkpoint)?;
    Ok(RunSummary {
        name: cfg.name.clone(),
        dir: dir.clone(),
        steps,
        last: writer.last.take(),
        checkpoint,
        metrics: dir.join(METRICS_FILE),
        seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Against {
    /// The generator behind the dataset.
    Truth,
    /// The empirical distribution of the regenerated training set.
    Data,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub name: String,
    pub step: u64,
    pub against: String,
    pub kl: Option<f64>,
    pub reverse_kl: Option<f64>,
    pub total_variation: Option<f64>,
    pub log_z_gap: Option<f64>,
}

/// Rebuilds the experiment stored in a checkpoint and compares the trained
/// model with the reference distribution.
pub fn evaluate(ck: &Checkpoint, against: Against) -> Result<EvalReport> {
    let source = ck
        .config
        .clone()
        .ok_or_else(|| Error::invalid("checkpoint carries no experiment config"))?;
    let cfg = ExperimentConfig::from_value(source)?;
    let built = Built::new(&cfg)?;
    let params = ck.params()?;
    let mut fresh = ParamVector::new();
    built.init(&mut RngStream::new(0), &mut fresh)?;
    if fresh.segments() != params.segments() {
        return Err(Error::invalid("checkpoint parameters do not match the stored config"));
    }
    let truth = Truth::for_family(cfg.dataset.family)?;
    let reference = match against {
        Against::Truth => truth.density()?,
        Against::Data => {
            let (data, _) = make_dataset(&cfg.dataset)?;
            Density::Table(data.empirical_table()?)
        }
    };
    let model = built.model_density(&truth, &params)?;
    let (kl, reverse_kl, tv) = match &model {
        Some(q) => {
            let rev = match exact_divergence(q, &reference, &DivKind::Kl) {
                Err(Error::AbsoluteContinuity(_)) => f64::INFINITY,
                r => r?,
            };
            let tv = match (&reference, q) {
                (Density::Table(a), Density::Table(b)) => Some(total_variation(a, b)?),
                _ => None,
            };
            (Some(kl_or_inf(&reference, q)?), Some(rev), tv)
        }
        None => (None, None, None),
    };
    Ok(EvalReport {
        name: cfg.name,
        step: ck.step,
        against: match against {
            Against::Truth => "truth".into(),
            Against::Data => "data".into(),
        },
        kl,
        reverse_kl,
        total_variation: tv,
        log_z_gap: built.log_z_gap(&truth, &params)?,
    })
}
