//! Directed-model learners: variational (score function, NVIL or
//! reparameterized), IWAE, wake-sleep, reweighted wake-sleep, JSA and AVB.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    grads_rws_from, iw_batch, iwae_objective_tape, reparam_elbo_tape, InputBaseline, NvilState, PhiMethod,
};
use crate::learn::adversarial::Critic;
use crate::learn::{AcceptTally, Dataset, Learner};
use crate::models::{Domain, Encoder, ImplicitGen, LatentModel, VaePair};
use crate::num::{ParamVector, RngStream, Tape};
use crate::samplers::acceptance;
use crate::sa::SaProblem;

/// Column of the learner matrix: how `theta` is trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaObjective {
    Ml,
    VLb,
    IwLb,
    FDiv,
}

/// Row of the learner matrix: how the auxiliary model is trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiObjective {
    VLb,
    IwLb,
    /// Inclusive KL to the posterior, importance sampled.
    InclusiveIs,
    /// Inclusive KL to the posterior, sampled by MIS.
    InclusiveMis,
    /// Inclusive KL on model dreams.
    Sleep,
    FDiv,
}

impl ThetaObjective {
    pub const ALL: [ThetaObjective; 4] = [
        ThetaObjective::Ml,
        ThetaObjective::VLb,
        ThetaObjective::IwLb,
        ThetaObjective::FDiv,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ThetaObjective::Ml => "ML",
            ThetaObjective::VLb => "V-LB",
            ThetaObjective::IwLb => "IW-LB",
            ThetaObjective::FDiv => "f-div-LB",
        }
    }
}

impl PhiObjective {
    pub const ALL: [PhiObjective; 6] = [
        PhiObjective::VLb,
        PhiObjective::IwLb,
        PhiObjective::InclusiveIs,
        PhiObjective::InclusiveMis,
        PhiObjective::Sleep,
        PhiObjective::FDiv,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PhiObjective::VLb => "V-LB",
            PhiObjective::IwLb => "IW-LB",
            PhiObjective::InclusiveIs => "inclusive KL (IS)",
            PhiObjective::InclusiveMis => "inclusive KL (MIS)",
            PhiObjective::Sleep => "sleep phase",
            PhiObjective::FDiv => "f-div-LB",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Variational,
    Iwae,
    Ws,
    Rws,
    Jsa,
    Avb,
    Vdm,
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LearnerKind::Variational => "variational",
            LearnerKind::Iwae => "iwae",
            LearnerKind::Ws => "ws",
            LearnerKind::Rws => "rws",
            LearnerKind::Jsa => "jsa",
            LearnerKind::Avb => "avb",
            LearnerKind::Vdm => "vdm",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CellStatus {
    Supported { learner: LearnerKind, note: &'static str },
    Unsupported { reason: &'static str },
}

const CROSSING: &str = "IW-LB is tighter than V-LB, so crossing use of the two bounds for theta and phi does not make sense";
const MIS_ROW: &str = "with posterior samples from MIS accept/reject, updating theta by a lower bound is unnecessary";
const INCLUSIVE_ROW: &str = "inclusive-KL phi updates pair with IW-LB (RWS) or ML (JSA) theta updates only";
const NOT_APPLICABLE: &str = "objective pair not applicable: f-divergence bounds pair only with each other";

/// Status of one (phi row, theta column) cell of the learner matrix.
pub fn matrix_cell(phi: PhiObjective, theta: ThetaObjective) -> CellStatus {
    use CellStatus::*;
    use PhiObjective as P;
    use ThetaObjective as T;
    match (phi, theta) {
        (P::VLb, T::VLb) => Supported {
            learner: LearnerKind::Variational,
            note: "VAE (reparameterized), NVIL (score function with variance reduction)",
        },
        (P::IwLb, T::IwLb) => Supported {
            learner: LearnerKind::Iwae,
            note: "IWAE (reparameterized; continuous latents)",
        },
        (P::InclusiveIs, T::IwLb) => Supported {
            learner: LearnerKind::Rws,
            note: "RWS wake-phase phi update",
        },
        (P::InclusiveMis, T::Ml) => Supported {
            learner: LearnerKind::Jsa,
            note: "JSA",
        },
        (P::Sleep, T::VLb) => Supported {
            learner: LearnerKind::Ws,
            note: "wake-sleep",
        },
        (P::Sleep, T::IwLb) => Supported {
            learner: LearnerKind::Rws,
            note: "RWS sleep-phase phi update",
        },
        (P::Sleep, T::Ml) => Supported {
            learner: LearnerKind::Jsa,
            note: "JSA with added sleep-phase phi update",
        },
        (P::FDiv, T::FDiv) => Supported {
            learner: LearnerKind::Vdm,
            note: "adversarial learning (VDM; AVB for the inner ratio)",
        },
        (P::VLb, T::IwLb) | (P::IwLb, T::VLb) => Unsupported { reason: CROSSING },
        (P::InclusiveMis, T::VLb) | (P::InclusiveMis, T::IwLb) => Unsupported { reason: MIS_ROW },
        (P::FDiv, _) | (_, T::FDiv) => Unsupported { reason: NOT_APPLICABLE },
        (P::VLb, T::Ml) | (P::IwLb, T::Ml) => Unsupported {
            reason: "ML theta updates need posterior samples, which the lower bounds do not provide",
        },
        (P::InclusiveIs, _) => Unsupported { reason: INCLUSIVE_ROW },
    }
}

/// Every cell, row by row.
pub fn learner_matrix() -> Vec<(PhiObjective, ThetaObjective, CellStatus)> {
    let mut out = Vec::new();
    for p in PhiObjective::ALL {
        for t in ThetaObjective::ALL {
            out.push((p, t, matrix_cell(p, t)));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RwsPhiMode {
    Wake,
    Sleep,
    #[default]
    WakePlusSleep,
}

fn default_k() -> usize {
    8
}

fn default_sweeps() -> usize {
    2
}

fn default_critic_steps() -> u32 {
    5
}

/// Per-learner settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    /// Importance samples for IWAE and RWS.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub phi_method: Option<PhiMethod>,
    #[serde(default)]
    pub rws_phi_mode: RwsPhiMode,
    /// Adds a sleep-phase phi update to JSA.
    #[serde(default)]
    pub jsa_sleep: bool,
    /// MIS sweeps per cached latent per move.
    #[serde(default = "default_sweeps")]
    pub mis_sweeps: usize,
    #[serde(default)]
    pub nvil_normalize: bool,
    /// Hidden width of the input-dependent NVIL baseline.
    #[serde(default)]
    pub nvil_baseline_hidden: Option<usize>,
    /// Critic steps per generator step for AVB.
    #[serde(default = "default_critic_steps")]
    pub critic_steps: u32,
}

impl LearnerConfig {
    pub fn new(kind: LearnerKind) -> Self {
        LearnerConfig {
            kind,
            k: default_k(),
            phi_method: None,
            rws_phi_mode: RwsPhiMode::default(),
            jsa_sleep: false,
            mis_sweeps: default_sweeps(),
            nvil_normalize: false,
            nvil_baseline_hidden: None,
            critic_steps: default_critic_steps(),
        }
    }

    /// Config for a supported matrix cell.
    pub fn from_cell(phi: PhiObjective, theta: ThetaObjective) -> Result<Self> {
        match matrix_cell(phi, theta) {
            CellStatus::Unsupported { reason } => Err(Error::Cell(format!(
                "({} theta, {} phi) is not a valid combination: {reason}",
                theta.label(),
                phi.label()
            ))),
            CellStatus::Supported { learner, .. } => {
                let mut c = LearnerConfig::new(learner);
                match (phi, theta) {
                    (PhiObjective::InclusiveIs, _) => c.rws_phi_mode = RwsPhiMode::Wake,
                    (PhiObjective::Sleep, ThetaObjective::IwLb) => c.rws_phi_mode = RwsPhiMode::Sleep,
                    (PhiObjective::Sleep, ThetaObjective::Ml) => c.jsa_sleep = true,
                    _ => {}
                }
                Ok(c)
            }
        }
    }

    /// Matrix cells this configuration occupies.
    pub fn cells(&self) -> Vec<(PhiObjective, ThetaObjective)> {
        use PhiObjective as P;
        use ThetaObjective as T;
        match self.kind {
            LearnerKind::Variational => vec![(P::VLb, T::VLb)],
            LearnerKind::Iwae => vec![(P::IwLb, T::IwLb)],
            LearnerKind::Ws => vec![(P::Sleep, T::VLb)],
            LearnerKind::Rws => match self.rws_phi_mode {
                RwsPhiMode::Wake => vec![(P::InclusiveIs, T::IwLb)],
                RwsPhiMode::Sleep => vec![(P::Sleep, T::IwLb)],
                RwsPhiMode::WakePlusSleep => vec![(P::InclusiveIs, T::IwLb), (P::Sleep, T::IwLb)],
            },
            LearnerKind::Jsa if self.jsa_sleep => vec![(P::InclusiveMis, T::Ml), (P::Sleep, T::Ml)],
            LearnerKind::Jsa => vec![(P::InclusiveMis, T::Ml)],
            LearnerKind::Avb => vec![(P::VLb, T::VLb)],
            LearnerKind::Vdm => vec![(P::FDiv, T::FDiv)],
        }
    }

    pub fn phi_method(&self) -> PhiMethod {
        self.phi_method.unwrap_or(match self.kind {
            LearnerKind::Iwae => PhiMethod::ReparamTd,
            _ => PhiMethod::ReinforceNvil,
        })
    }

    /// Kind-specific constraints against the latent space of the model.
    /// Errors name the field and the violated matrix constraint.
    pub fn validate(&self, latent: Domain) -> Result<()> {
        let cell = |msg: String| Err(Error::Cell(msg));
        match self.kind {
            LearnerKind::Variational => {
                if self.phi_method().needs_continuous() && latent.is_binary() {
                    return cell(format!(
                        "learner.phi_method: {:?} needs the reparameterization trick, which is not feasible for discrete latents (V-LB cell: VAE* for continuous h, NVIL for discrete h)",
                        self.phi_method()
                    ));
                }
            }
            LearnerKind::Iwae => {
                if latent.is_binary() {
                    return cell(
                        "learner.kind: iwae is the IW-LB x IW-LB cell (IWAE*), which uses the reparameterization trick and is not feasible for discrete latents".into(),
                    );
                }
                if !self.phi_method().needs_continuous() {
                    return cell("learner.phi_method: iwae requires reparam_td or reparam_pd".into());
                }
                if self.k == 0 {
                    return cell("learner.k: iwae needs K >= 1".into());
                }
            }
            LearnerKind::Rws => {
                if self.k == 0 {
                    return cell("learner.k: rws needs K >= 1".into());
                }
            }
            LearnerKind::Jsa => {
                if self.mis_sweeps == 0 {
                    return cell("learner.mis_sweeps: jsa needs at least one MIS sweep".into());
                }
            }
            LearnerKind::Avb => {
                if latent.is_binary() {
                    return cell("learner.kind: avb needs a continuous latent prior".into());
                }
                if self.critic_steps == 0 {
                    return cell("learner.critic_steps: avb needs at least one critic step".into());
                }
            }
            LearnerKind::Ws | LearnerKind::Vdm => {}
        }
        for (p, t) in self.cells() {
            if let CellStatus::Unsupported { reason } = matrix_cell(p, t) {
                return cell(format!("({}, {}): {reason}", t.label(), p.label()));
            }
        }
        Ok(())
    }
}

fn mask(mut g: ParamVector, prefix: &str) -> ParamVector {
    g.mask_prefix(&format!("{prefix}."));
    g
}

/// `grad_theta log p(x, h)` at a fixed latent.
pub fn theta_field_at(model: &dyn LatentModel, params: &ParamVector, x: &[f64], h: &[f64]) -> Result<ParamVector> {
    let mut t = Tape::new();
    let hv = t.constant(h.to_vec());
    let lj = model.joint_log_prob_tape(&mut t, params, x, hv);
    t.check()?;
    Ok(mask(t.backward(lj).params(params), model.prefix()))
}

/// `grad_phi log q(h | x)` at a fixed latent.
pub fn phi_score_at(enc: &dyn Encoder, params: &ParamVector, x: &[f64], h: &[f64]) -> Result<ParamVector> {
    let mut t = Tape::new();
    let d = enc.dist_tape(&mut t, params, x);
    let hv = t.constant(h.to_vec());
    let lq = d.log_prob(&mut t, hv);
    t.check()?;
    Ok(mask(t.backward(lq).params(params), enc.prefix()))
}

/// Sleep-phase direction from one model dream.
pub fn sleep_field(
    model: &dyn LatentModel,
    enc: &dyn Encoder,
    params: &ParamVector,
    rng: &mut RngStream,
) -> Result<ParamVector> {
    let (x, h) = model.generate_joint(params, rng);
    phi_score_at(enc, params, &x, &h)
}

/// Variational learning: minibatch from `p~(x) q(h|x)`, theta by
/// `grad log p(x, h)`, phi by the selected ELBO gradient estimator.
pub struct Variational<'a> {
    pub model: &'a dyn LatentModel,
    pub enc: &'a dyn Encoder,
    pub data: &'a Dataset,
    pub method: PhiMethod,
    pub nvil: NvilState,
}

impl<'a> Variational<'a> {
    pub fn new(
        cfg: &LearnerConfig,
        model: &'a dyn LatentModel,
        enc: &'a dyn Encoder,
        data: &'a Dataset,
        rng: &mut RngStream,
    ) -> Result<Self> {
        cfg.validate(model.latent())?;
        data.require_nonempty()?;
        let mut nvil = NvilState::default().with_normalization(cfg.nvil_normalize);
        if let Some(hidden) = cfg.nvil_baseline_hidden {
            nvil.baseline = Some(InputBaseline::new(model.obs().dim(), hidden, 0.01, rng)?);
        }
        Ok(Variational {
            model,
            enc,
            data,
            method: cfg.phi_method(),
            nvil,
        })
    }

    /// Field for one data point.
    pub fn field_at(&mut self, params: &ParamVector, x: &[f64], rng: &mut RngStream) -> Result<ParamVector> {
        match self.method {
            PhiMethod::ReparamTd | PhiMethod::ReparamPd => {
                let eps = rng.normals(self.enc.latent().dim());
                let mut t = Tape::new();
                let obj = reparam_elbo_tape(
                    &mut t,
                    self.model,
                    self.enc,
                    params,
                    x,
                    &eps,
                    self.method == PhiMethod::ReparamPd,
                )?;
                t.check()?;
                let g = t.backward(obj).params(params);
                let mut out = mask(g.clone(), self.model.prefix());
                out.axpy(1.0, &mask(g, self.enc.prefix()));
                Ok(out)
            }
            PhiMethod::Reinforce | PhiMethod::ReinforceNvil => {
                let h = self.enc.sample(params, x, rng)?.h;
                let mut t = Tape::new();
                let hv = t.constant(h);
                let lj = self.model.joint_log_prob_tape(&mut t, params, x, hv);
                let d = self.enc.dist_tape(&mut t, params, x);
                let lq = d.log_prob(&mut t, hv);
                t.check()?;
                let mut signal = t.scalar_value(lj) - t.scalar_value(lq);
                if !signal.is_finite() {
                    return Err(Error::NonFinite { primitive: "learning signal" });
                }
                if self.method == PhiMethod::ReinforceNvil {
                    signal = self.nvil.process(x, signal)?;
                }
                let mut out = mask(t.backward(lj).params(params), self.model.prefix());
                let gq = mask(t.backward(lq).params(params), self.enc.prefix());
                out.axpy(signal, &gq);
                Ok(out)
            }
        }
    }
}

impl SaProblem for Variational<'_> {
    type State = ();

    fn transition(&mut self, _: &ParamVector, _: &mut (), _: &mut RngStream) -> Result<()> {
        Ok(())
    }

    fn field(&mut self, params: &ParamVector, _: &(), rng: &mut RngStream) -> Result<ParamVector> {
        let x = self.data.sample(rng).to_vec();
        self.field_at(params, &x, rng)
    }
}

impl Learner for Variational<'_> {
    fn init_state(&mut self, _: &ParamVector, _: &mut RngStream) -> Result<()> {
        Ok(())
    }
}

/// Reparameterized ascent on `I_K` in both parameter groups.
pub struct Iwae<'a> {
    pub model: &'a dyn LatentModel,
    pub enc: &'a dyn Encoder,
    pub data: &'a Dataset,
    pub k: usize,
}

impl<'a> Iwae<'a> {
    pub fn new(cfg: &LearnerConfig, model: &'a dyn LatentModel, enc: &'a dyn Encoder, data: &'a Dataset) -> Result<Self> {
        cfg.validate(model.latent())?;
        data.require_nonempty()?;
        Ok(Iwae {
            model,
            enc,
            data,
            k: cfg.k,
        })
    }
}

impl SaProblem for Iwae<'_> {
    type State = ();

    fn transition(&mut self, _: &ParamVector, _: &mut (), _: &mut RngStream) -> Result<()> {
        Ok(())
    }

    fn field(&mut self, params: &ParamVector, _: &(), rng: &mut RngStream) -> Result<ParamVector> {
        let x = self.data.sample(rng).to_vec();
        let dim = self.enc.latent().dim();
        let eps: Vec<Vec<f64>> = (0..self.k).map(|_| rng.normals(dim)).collect();
        let mut t = Tape::new();
        let obj = iwae_objective_tape(&mut t, self.model, self.enc, params, &x, &eps)?;
        t.check()?;
        let g = t.backward(obj).params(params);
        let mut out = mask(g.clone(), self.model.prefix());
        out.axpy(1.0, &mask(g, self.enc.prefix()));
        Ok(out)
    }
}

impl Learner for Iwae<'_> {
    fn init_state(&mut self, _: &ParamVector, _: &mut RngStream) -> Result<()> {
        Ok(())
    }
}

/// Wake theta step on `p~(x) q(h|x)`, sleep phi step on model dreams.
pub struct WakeSleep<'a> {
    pub model: &'a dyn LatentModel,
    pub enc: &'a dyn Encoder,
    pub data: &'a Dataset,
}

impl<'a> WakeSleep<'a> {
    pub fn new(cfg: &LearnerConfig, model: &'a dyn LatentModel, enc: &'a dyn Encoder, data: &'a Dataset) -> Result<Self> {
        cfg.validate(model.latent())?;
        data.require_nonempty()?;
        Ok(WakeSleep { model, enc, data })
    }
}

impl SaProblem for WakeSleep<'_> {
    type State = ();

    fn transition(&mut self, _: &ParamVector, _: &mut (), _: &mut RngStream) -> Result<()> {
        Ok(())
    }

    fn field(&mut self, params: &ParamVector, _: &(), rng: &mut RngStream) -> Result<ParamVector> {
        let x = self.data.sample(rng).to_vec();
        let h = self.enc.sample(params, &x, rng)?.h;
        let mut out = theta_field_at(self.model, params, &x, &h)?;
        out.axpy(1.0, &sleep_field(self.model, self.enc, params, rng)?);
        Ok(out)
    }
}

impl Learner for WakeSleep<'_> {
    fn init_state(&mut self, _: &ParamVector, _: &mut RngStream) -> Result<()> {
        Ok(())
    }
}

/// Self-normalized importance weighting for theta and (wake) phi, with an
/// optional sleep-phase phi update.
pub struct Rws<'a> {
    pub model: &'a dyn LatentModel,
    pub enc: &'a dyn Encoder,
    pub data: &'a Dataset,
    pub k: usize,
    pub mode: RwsPhiMode,
    /// Largest deviation of the normalized weights' sum from 1 seen so far.
    pub weight_sum_error: f64,
}

impl<'a> Rws<'a> {
    pub fn new(cfg: &LearnerConfig, model: &'a dyn LatentModel, enc: &'a dyn Encoder, data: &'a Dataset) -> Result<Self> {
        cfg.validate(model.latent())?;
        data.require_nonempty()?;
        Ok(Rws {
            model,
            enc,
            data,
            k: cfg.k,
            mode: cfg.rws_phi_mode,
            weight_sum_error: 0.0,
        })
    }
}

impl SaProblem for Rws<'_> {
    type State = ();

    fn transition(&mut self, _: &ParamVector, _: &mut (), _: &mut RngStream) -> Result<()> {
        Ok(())
    }

    fn field(&mut self, params: &ParamVector, _: &(), rng: &mut RngStream) -> Result<ParamVector> {
        let x = self.data.sample(rng).to_vec();
        let batch = iw_batch(self.model, self.enc, params, &x, self.k, rng)?;
        self.weight_sum_error = self
            .weight_sum_error
            .max((batch.norm.iter().sum::<f64>() - 1.0).abs());
        let (mut out, gp) = grads_rws_from(self.model, self.enc, params, &x, &batch)?;
        if matches!(self.mode, RwsPhiMode::Wake | RwsPhiMode::WakePlusSleep) {
            out.axpy(1.0, &gp);
        }
        if matches!(self.mode, RwsPhiMode::Sleep | RwsPhiMode::WakePlusSleep) {
            out.axpy(1.0, &sleep_field(self.model, self.enc, params, rng)?);
        }
        Ok(out)
    }
}

impl Learner for Rws<'_> {
    fn init_state(&mut self, _: &ParamVector, _: &mut RngStream) -> Result<()> {
        Ok(())
    }
}

/// One cached latent per training example.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCache {
    pub hs: Vec<Vec<f64>>,
    /// Example refreshed by the latest transition.
    pub current: usize,
}

impl LatentCache {
    pub fn from_encoder(enc: &dyn Encoder, params: &ParamVector, data: &Dataset, rng: &mut RngStream) -> Result<Self> {
        let hs = data
            .xs
            .iter()
            .map(|x| Ok(enc.sample(params, x, rng)?.h))
            .collect::<Result<_>>()?;
        Ok(LatentCache { hs, current: 0 })
    }
}

/// Joint stochastic approximation: MIS refresh of cached posterior samples
/// with `q_phi` as proposal, then ML theta and inclusive phi updates.
pub struct Jsa<'a> {
    pub model: &'a dyn LatentModel,
    pub enc: &'a dyn Encoder,
    pub data: &'a Dataset,
    pub sweeps: usize,
    pub sleep: bool,
    pub tally: AcceptTally,
}

impl<'a> Jsa<'a> {
    pub fn new(cfg: &LearnerConfig, model: &'a dyn LatentModel, enc: &'a dyn Encoder, data: &'a Dataset) -> Result<Self> {
        cfg.validate(model.latent())?;
        data.require_nonempty()?;
        Ok(Jsa {
            model,
            enc,
            data,
            sweeps: cfg.mis_sweeps,
            sleep: cfg.jsa_sleep,
            tally: AcceptTally::default(),
        })
    }

    /// MIS moves on one cached latent.
    pub fn refresh(&mut self, params: &ParamVector, x: &[f64], h: &mut Vec<f64>, rng: &mut RngStream) -> Result<()> {
        let q = self.enc.dist(params, x)?;
        let width = self.enc.latent().dim();
        let lw = |h: &[f64]| -> Result<f64> {
            let v = self.model.joint_log_prob(params, x, h)? - q.log_prob(h)?;
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::NonFinite { primitive: "importance weight" });
            }
            Ok(v)
        };
        let mut cur = lw(h)?;
        for _ in 0..self.sweeps {
            let prop = q.sample(width, rng).h;
            let new = lw(&prop)?;
            let a = acceptance(new, cur)?;
            let take = rng.uniform() < a;
            self.tally.record(take);
            if take {
                *h = prop;
                cur = new;
            }
        }
        Ok(())
    }
}

impl SaProblem for Jsa<'_> {
    type State = LatentCache;

    fn transition(&mut self, params: &ParamVector, state: &mut LatentCache, rng: &mut RngStream) -> Result<()> {
        let k = self.data.sample_index(rng);
        let mut h = std::mem::take(&mut state.hs[k]);
        let r = self.refresh(params, &self.data.xs[k], &mut h, rng);
        state.hs[k] = h;
        state.current = k;
        r
    }

    fn field(&mut self, params: &ParamVector, state: &LatentCache, rng: &mut RngStream) -> Result<ParamVector> {
        let k = state.current;
        let (x, h) = (&self.data.xs[k], &state.hs[k]);
        let mut out = theta_field_at(self.model, params, x, h)?;
        out.axpy(1.0, &phi_score_at(self.enc, params, x, h)?);
        if self.sleep {
            out.axpy(1.0, &sleep_field(self.model, self.enc, params, rng)?);
        }
        Ok(out)
    }
}

impl Learner for Jsa<'_> {
    fn init_state(&mut self, params: &ParamVector, rng: &mut RngStream) -> Result<LatentCache> {
        LatentCache::from_encoder(self.enc, params, self.data, rng)
    }

    fn take_acceptance(&mut self) -> Option<f64> {
        self.tally.take()
    }
}

/// Implicit encoder `h = G_phi(x, eps)` for AVB.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvbEncoder {
    pub gen: ImplicitGen,
    pub obs: usize,
}

impl AvbEncoder {
    pub fn new(gen: ImplicitGen, obs: usize) -> Result<Self> {
        if gen.noise_dim() <= obs {
            return Err(Error::invalid("AVB encoder input must be [x, eps] with non-empty eps"));
        }
        Ok(AvbEncoder { gen, obs })
    }

    pub fn noise_dim(&self) -> usize {
        self.gen.noise_dim() - self.obs
    }

    fn input(&self, x: &[f64], eps: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        v.extend_from_slice(eps);
        v
    }

    pub fn sample(&self, params: &ParamVector, x: &[f64], rng: &mut RngStream) -> Vec<f64> {
        let eps = rng.normals(self.noise_dim());
        self.gen.transform(params, &self.input(x, &eps))
    }
}

/// Adversarial variational Bayes: a critic `V_psi(x, h)` estimates
/// `log q(h|x) - log p(h)`; (theta, phi) ascend `E_q[-V + log p(x|h)]`.
pub struct Avb<'a> {
    pub model: &'a VaePair,
    pub enc: &'a AvbEncoder,
    pub critic: &'a Critic,
    pub data: &'a Dataset,
    pub critic_steps: u32,
    critic_phase: bool,
}

impl<'a> Avb<'a> {
    pub fn new(
        cfg: &LearnerConfig,
        model: &'a VaePair,
        enc: &'a AvbEncoder,
        critic: &'a Critic,
        data: &'a Dataset,
    ) -> Result<Self> {
        cfg.validate(model.latent())?;
        data.require_nonempty()?;
        if critic.spec.input_width() != model.obs_dim + model.latent_dim {
            return Err(Error::invalid("AVB critic input must be [x, h]"));
        }
        Ok(Avb {
            model,
            enc,
            critic,
            data,
            critic_steps: cfg.critic_steps,
            critic_phase: true,
        })
    }

    /// Critic ascent on `log sigmoid V(x, h_q) + log sigmoid(-V(x, h_prior))`.
    pub fn critic_objective_tape(&self, t: &mut Tape, params: &ParamVector, x: &[f64], hq: &[f64], hp: &[f64]) -> crate::num::Var {
        let a = t.constant([x, hq].concat());
        let va = self.critic.value_tape(t, params, a);
        let la = t.log_sigmoid(va);
        let b = t.constant([x, hp].concat());
        let vb = self.critic.value_tape(t, params, b);
        let nb = t.neg(vb);
        let lb = t.log_sigmoid(nb);
        t.add(la, lb)
    }

    /// `-V(x, h(eps)) + log p(x | h(eps))`, differentiable in theta and phi.
    pub fn model_objective_tape(&self, t: &mut Tape, params: &ParamVector, x: &[f64], eps: &[f64]) -> crate::num::Var {
        let input = t.constant(self.enc.input(x, eps));
        let h = self.enc.gen.spec.forward(t, params, &self.enc.gen.prefix, input);
        let xv = t.constant(x.to_vec());
        let xh = t.concat(&[xv, h]);
        let v = self.critic.value_tape(t, params, xh);
        let rec = self.model.obs_log_prob_tape(t, params, x, h);
        t.sub(rec, v)
    }
}

impl SaProblem for Avb<'_> {
    type State = ();

    fn begin_step(&mut self, t: u64, _: &ParamVector, _: &mut RngStream) -> Result<()> {
        self.critic_phase = t % (self.critic_steps as u64 + 1) != 0;
        Ok(())
    }

    fn transition(&mut self, _: &ParamVector, _: &mut (), _: &mut RngStream) -> Result<()> {
        Ok(())
    }

    fn field(&mut self, params: &ParamVector, _: &(), rng: &mut RngStream) -> Result<ParamVector> {
        let x = self.data.sample(rng).to_vec();
        let mut t = Tape::new();
        if self.critic_phase {
            let hq = self.enc.sample(params, &x, rng);
            let hp = rng.normals(self.model.latent_dim);
            let obj = self.critic_objective_tape(&mut t, params, &x, &hq, &hp);
            t.check()?;
            Ok(mask(t.backward(obj).params(params), &self.critic.prefix))
        } else {
            let eps = rng.normals(self.enc.noise_dim());
            let obj = self.model_objective_tape(&mut t, params, &x, &eps);
            t.check()?;
            let g = t.backward(obj).params(params);
            let mut out = mask(g.clone(), &self.model.theta);
            out.axpy(1.0, &mask(g, &self.enc.gen.prefix));
            Ok(out)
        }
    }
}

impl Learner for Avb<'_> {
    fn init_state(&mut self, _: &ParamVector, _: &mut RngStream) -> Result<()> {
        Ok(())
    }
}
