//! Experiment configuration: parsing, defaults and field-level validation.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::harness::datasets::DatasetSpec;
use crate::learn::adversarial::{FDivSpec, ThetaLoss, VdmConfig};
use crate::learn::directed::{matrix_cell, CellStatus, LearnerConfig, LearnerKind, PhiObjective, ThetaObjective};
use crate::learn::undirected::InclusiveKernel;
use crate::learn::RunSpec;
use crate::models::{Domain, MAX_BINARY_OBS};
use crate::sa::SaSchedule;
use crate::samplers::RwKernel;

pub const DIRECTED_STEPS: u64 = 50_000;
pub const UNDIRECTED_STEPS: u64 = 100_000;

fn w16() -> usize {
    16
}

fn w8() -> usize {
    8
}

fn two() -> usize {
    2
}

fn h4() -> Vec<usize> {
    vec![4]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Sigmoid belief net with a Bernoulli MLP encoder; `encoder_hidden = 0`
    /// gives a linear encoder.
    Sbn {
        #[serde(default = "h4")]
        hidden: Vec<usize>,
        #[serde(default = "w16")]
        encoder_hidden: usize,
    },
    /// Gaussian-latent decoder with a Gaussian encoder.
    Vae {
        #[serde(default = "two")]
        latent: usize,
        #[serde(default = "w16")]
        hidden: usize,
        #[serde(default = "w16")]
        encoder_hidden: usize,
    },
    /// Random field with an MLP potential; `hidden = 0` gives the quadratic potential.
    Nrf {
        #[serde(default = "w8")]
        hidden: usize,
    },
    /// Softmax table over a small binary domain.
    TableGenerator {},
    /// `x = G(eps)`; `hidden = 0` gives an affine map.
    ImplicitGenerator {
        #[serde(default)]
        hidden: usize,
    },
}

impl ModelConfig {
    pub fn family(&self) -> &'static str {
        match self {
            ModelConfig::Sbn { .. } => "sbn",
            ModelConfig::Vae { .. } => "vae",
            ModelConfig::Nrf { .. } => "nrf",
            ModelConfig::TableGenerator {} => "table_generator",
            ModelConfig::ImplicitGenerator { .. } => "implicit_generator",
        }
    }

    /// Latent space of a directed model.
    pub fn latent(&self) -> Option<Domain> {
        match self {
            ModelConfig::Sbn { hidden, .. } => Some(Domain::Binary(hidden.iter().sum())),
            ModelConfig::Vae { latent, .. } => Some(Domain::Real(*latent)),
            _ => None,
        }
    }
}

fn default_chains() -> usize {
    32
}

fn default_f() -> String {
    "gan".into()
}

fn default_theta_loss() -> ThetaLoss {
    ThetaLoss::Saturating
}

fn default_critic_steps() -> u32 {
    5
}

fn default_nu() -> f64 {
    10.0
}

fn default_inclusive_kernel() -> InclusiveKernel {
    InclusiveKernel::GeneratorMis
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VdmSection {
    /// Registered f-divergence name.
    #[serde(default = "default_f")]
    pub f: String,
    #[serde(default = "default_theta_loss")]
    pub theta_loss: ThetaLoss,
    #[serde(default = "default_critic_steps")]
    pub critic_steps: u32,
    #[serde(default = "w16")]
    pub critic_hidden: usize,
}

impl Default for VdmSection {
    fn default() -> Self {
        VdmSection {
            f: default_f(),
            theta_loss: default_theta_loss(),
            critic_steps: default_critic_steps(),
            critic_hidden: w16(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmlSection {
    /// Defaults to a single flip on binary data and a Gaussian step otherwise.
    #[serde(default)]
    pub kernel: Option<RwKernel>,
    #[serde(default = "default_chains")]
    pub chains: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusiveSection {
    #[serde(default = "default_inclusive_kernel")]
    pub kernel: InclusiveKernel,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "two")]
    pub generator_latent: usize,
    #[serde(default = "w16")]
    pub generator_hidden: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExclusiveSection {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseChoice {
    /// Factorial Bernoulli (binary) or diagonal Gaussian fitted to the data moments.
    #[default]
    DataMarginals,
    /// Uniform over a binary domain.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NceSection {
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default)]
    pub noise: NoiseChoice,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LearnerSection {
    Directed(LearnerConfig),
    Vdm(VdmSection),
    Sml(SmlSection),
    InclusiveNrf(InclusiveSection),
    ExclusiveNrf(ExclusiveSection),
    Nce(NceSection),
}

pub const LEARNER_KINDS: [&str; 11] = [
    "variational",
    "iwae",
    "ws",
    "rws",
    "jsa",
    "avb",
    "vdm",
    "sml",
    "inclusive_nrf",
    "exclusive_nrf",
    "nce",
];

impl LearnerSection {
    pub fn kind(&self) -> String {
        match self {
            LearnerSection::Directed(c) => c.kind.to_string(),
            LearnerSection::Vdm(_) => "vdm".into(),
            LearnerSection::Sml(_) => "sml".into(),
            LearnerSection::InclusiveNrf(_) => "inclusive_nrf".into(),
            LearnerSection::ExclusiveNrf(_) => "exclusive_nrf".into(),
            LearnerSection::Nce(_) => "nce".into(),
        }
    }

    pub fn is_undirected(&self) -> bool {
        matches!(
            self,
            LearnerSection::Sml(_) | LearnerSection::InclusiveNrf(_) | LearnerSection::ExclusiveNrf(_) | LearnerSection::Nce(_)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Objectives {
    pub theta: ThetaObjective,
    pub phi: PhiObjective,
}

fn default_moves() -> usize {
    32
}

fn default_log_every() -> u64 {
    1000
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Defaults to 5e4 for directed and adversarial learners, 1e5 for random fields.
    #[serde(default)]
    pub steps: Option<u64>,
    #[serde(default)]
    pub schedule: SaSchedule,
    #[serde(default = "default_moves")]
    pub moves: usize,
    #[serde(default)]
    pub clip: Option<f64>,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            steps: None,
            schedule: SaSchedule::default(),
            moves: default_moves(),
            clip: None,
            log_every: default_log_every(),
        }
    }
}

fn default_iw_k() -> Vec<usize> {
    vec![1, 8]
}

fn default_eval_points() -> usize {
    256
}

fn default_mc_samples() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// One `iw_lb_k{K}` column per entry.
    #[serde(default = "default_iw_k")]
    pub iw_k: Vec<usize>,
    /// Training points (from the front of the set) used for bound estimates.
    #[serde(default = "default_eval_points")]
    pub eval_points: usize,
    /// Monte Carlo draws per point when a bound has no closed form.
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            iw_k: default_iw_k(),
            eval_points: default_eval_points(),
            mc_samples: default_mc_samples(),
        }
    }
}

/// A validated experiment. `source` is the JSON it was parsed from, after
/// command-line overrides; it is stored in checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub model: ModelConfig,
    pub learner: LearnerSection,
    pub objectives: Option<Objectives>,
    pub run: RunConfig,
    pub metrics: MetricsConfig,
    pub output: Option<String>,
    pub source: Value,
}

const TOP_LEVEL: [&str; 9] = [
    "name", "seed", "dataset", "model", "learner", "objectives", "run", "metrics", "output",
];

#[derive(Default)]
struct Diagnostics(Vec<String>);

impl Diagnostics {
    fn push(&mut self, field: &str, msg: impl std::fmt::Display) {
        self.0.push(format!("{field}: {msg}"));
    }

    fn push_err(&mut self, field: &str, e: Error) {
        match e {
            // Learner-matrix messages usually carry their field name already.
            Error::Cell(m) if m.starts_with(&format!("{field}.")) => self.0.push(m),
            Error::Cell(m) => self.push(field, m),
            other => self.push(field, other),
        }
    }

    fn section<T: DeserializeOwned>(&mut self, obj: &Map<String, Value>, key: &str) -> Option<T> {
        let v = obj.get(key)?;
        match serde_json::from_value(v.clone()) {
            Ok(t) => Some(t),
            Err(e) => {
                self.push(key, e);
                None
            }
        }
    }

    fn finish(self) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(self.0.join("\n")))
        }
    }
}

fn parse_learner(v: &Value, d: &mut Diagnostics) -> Option<LearnerSection> {
    let Some(obj) = v.as_object() else {
        d.push("learner", "expected an object");
        return None;
    };
    let kind = match obj.get("kind").and_then(Value::as_str) {
        Some(k) => k.to_string(),
        None => {
            d.push("learner.kind", "missing or not a string");
            return None;
        }
    };
    let mut rest = obj.clone();
    rest.remove("kind");
    let rest = Value::Object(rest);
    fn sub<T: DeserializeOwned>(v: Value, d: &mut Diagnostics) -> Option<T> {
        serde_json::from_value(v).map_err(|e| d.push("learner", e)).ok()
    }
    match kind.as_str() {
        "variational" | "iwae" | "ws" | "rws" | "jsa" | "avb" => sub(v.clone(), d).map(LearnerSection::Directed),
        "vdm" => sub(rest, d).map(LearnerSection::Vdm),
        "sml" => sub(rest, d).map(LearnerSection::Sml),
        "inclusive_nrf" => sub(rest, d).map(LearnerSection::InclusiveNrf),
        "exclusive_nrf" => sub(rest, d).map(LearnerSection::ExclusiveNrf),
        "nce" => sub(rest, d).map(LearnerSection::Nce),
        other => {
            d.push(
                "learner.kind",
                format!("unknown learner `{other}`, expected one of {}", LEARNER_KINDS.join(", ")),
            );
            None
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("<json>: {e}")))?;
        Self::from_value(v)
    }

    /// Parses and validates; every problem found is reported, one
    /// `field: message` line each.
    pub fn from_value(v: Value) -> Result<Self> {
        let mut d = Diagnostics::default();
        let Some(obj) = v.as_object() else {
            return Err(Error::Config("<root>: expected a JSON object".into()));
        };
        for k in obj.keys() {
            if !TOP_LEVEL.contains(&k.as_str()) {
                d.push(k, format!("unknown field, expected one of {}", TOP_LEVEL.join(", ")));
            }
        }
        for k in ["name", "seed", "dataset", "model"] {
            if !obj.contains_key(k) {
                d.push(k, "missing required field");
            }
        }
        let name: Option<String> = d.section(obj, "name");
        if let Some(n) = &name {
            if n.is_empty() || n.contains(['/', '\\']) || n.starts_with('.') {
                d.push("name", "must be a non-empty file-name-safe string");
            }
        }
        let seed: Option<u64> = d.section(obj, "seed");
        let dataset: Option<DatasetSpec> = d.section(obj, "dataset");
        let model: Option<ModelConfig> = d.section(obj, "model");
        let objectives: Option<Objectives> = d.section(obj, "objectives");
        let run: Option<RunConfig> = d.section(obj, "run");
        let metrics: Option<MetricsConfig> = d.section(obj, "metrics");
        let output: Option<String> = d.section(obj, "output");
        let learner = match (obj.get("learner"), objectives) {
            (Some(l), _) => parse_learner(l, &mut d),
            (None, Some(o)) => match LearnerConfig::from_cell(o.phi, o.theta) {
                Ok(c) if c.kind == LearnerKind::Vdm => Some(LearnerSection::Vdm(VdmSection::default())),
                Ok(c) => Some(LearnerSection::Directed(c)),
                Err(e) => {
                    d.push_err("objectives", e);
                    None
                }
            },
            (None, None) => {
                d.push("learner", "missing required field (or give `objectives`)");
                None
            }
        };
        let (Some(name), Some(seed), Some(dataset), Some(model), Some(learner)) = (name, seed, dataset, model, learner) else {
            d.finish()?;
            unreachable!("a missing section always leaves a diagnostic");
        };
        let cfg = ExperimentConfig {
            name,
            seed,
            dataset,
            model,
            learner,
            objectives,
            run: run.unwrap_or_default(),
            metrics: metrics.unwrap_or_default(),
            output,
            source: v,
        };
        cfg.validate_into(&mut d);
        d.finish()?;
        Ok(cfg)
    }

    pub fn steps(&self) -> u64 {
        self.run.steps.unwrap_or(if self.learner.is_undirected() {
            UNDIRECTED_STEPS
        } else {
            DIRECTED_STEPS
        })
    }

    pub fn run_spec(&self) -> RunSpec {
        RunSpec {
            steps: self.steps(),
            schedule: self.run.schedule,
            moves: self.run.moves,
            clip: self.run.clip,
            log_every: self.run.log_every,
        }
    }

    fn validate_into(&self, d: &mut Diagnostics) {
        let domain = self.dataset.family.domain();
        if self.dataset.n == 0 {
            d.push("dataset.n", "learners need a non-empty training set");
        }
        if let Err(e) = self.run.schedule.validate() {
            d.push("run.schedule", e);
        }
        if self.run.steps == Some(0) {
            d.push("run.steps", "must be at least 1");
        }
        if self.run.moves == 0 {
            d.push("run.moves", "must be at least 1");
        }
        if self.run.log_every == 0 {
            d.push("run.log_every", "must be at least 1");
        }
        if let Some(c) = self.run.clip {
            if !(c > 0.0) || !c.is_finite() {
                d.push("run.clip", "must be a positive number");
            }
        }
        if self.metrics.iw_k.iter().any(|&k| k == 0) {
            d.push("metrics.iw_k", "every K must be at least 1");
        }
        if self.metrics.eval_points == 0 {
            d.push("metrics.eval_points", "must be at least 1");
        }
        if self.metrics.mc_samples == 0 {
            d.push("metrics.mc_samples", "must be at least 1");
        }
        if let Err(e) = crate::harness::build::check_model(&self.model, domain) {
            d.push_err("model", e);
        }
        self.validate_learner(domain, d);
        self.validate_objectives(d);
    }

    fn validate_learner(&self, domain: Domain, d: &mut Diagnostics) {
        let family = self.model.family();
        let needs = |d: &mut Diagnostics, ok: bool, what: &str| {
            if !ok {
                d.push("model.family", format!("learner `{}` needs {what}, got `{family}`", self.learner.kind()));
            }
            ok
        };
        match &self.learner {
            LearnerSection::Directed(c) => {
                let ok = if c.kind == LearnerKind::Avb {
                    needs(d, matches!(self.model, ModelConfig::Vae { .. }), "a `vae` model")
                } else {
                    needs(d, self.model.latent().is_some(), "a latent-variable model (`sbn` or `vae`)")
                };
                if ok {
                    if let Err(e) = c.validate(self.model.latent().unwrap()) {
                        d.push_err("learner", e);
                    }
                }
            }
            LearnerSection::Vdm(s) => {
                needs(
                    d,
                    matches!(self.model, ModelConfig::TableGenerator {} | ModelConfig::ImplicitGenerator { .. }),
                    "a `table_generator` or `implicit_generator` model",
                );
                match FDivSpec::by_name(&s.f) {
                    Ok(fspec) => {
                        let cfg = VdmConfig {
                            fspec,
                            theta_loss: s.theta_loss,
                            critic_steps: s.critic_steps,
                        };
                        if let Err(e) = cfg.validate() {
                            d.push("learner", e);
                        }
                    }
                    Err(e) => d.push("learner.f", e),
                }
                if s.critic_hidden == 0 {
                    d.push("learner.critic_hidden", "must be at least 1");
                }
            }
            LearnerSection::Sml(s) => {
                needs(d, matches!(self.model, ModelConfig::Nrf { .. }), "an `nrf` model");
                if s.chains == 0 {
                    d.push("learner.chains", "must be at least 1");
                }
                if let Some(k) = s.kernel {
                    check_rw(k, domain, d);
                }
            }
            LearnerSection::InclusiveNrf(s) => {
                needs(d, matches!(self.model, ModelConfig::Nrf { .. }), "an `nrf` model");
                if s.chains == 0 {
                    d.push("learner.chains", "must be at least 1");
                }
                if let InclusiveKernel::RandomWalk { rw } = s.kernel {
                    check_rw(rw, domain, d);
                }
                if !(1..=4).contains(&s.generator_latent) {
                    d.push("learner.generator_latent", "must lie in 1..=4 so the generator marginal stays enumerable");
                }
                if s.generator_hidden == 0 {
                    d.push("learner.generator_hidden", "must be at least 1");
                }
            }
            LearnerSection::ExclusiveNrf(_) => {
                needs(d, matches!(self.model, ModelConfig::Nrf { .. }), "an `nrf` model");
                if domain.is_binary() {
                    d.push("learner.kind", "exclusive_nrf uses a reparameterized Gaussian generator and needs continuous data");
                }
            }
            LearnerSection::Nce(s) => {
                needs(d, matches!(self.model, ModelConfig::Nrf { .. }), "an `nrf` model");
                if !(s.nu > 0.0) || !s.nu.is_finite() {
                    d.push("learner.nu", "noise ratio must be positive");
                }
                if s.noise == NoiseChoice::Uniform && !domain.is_binary() {
                    d.push("learner.noise", "uniform noise needs a binary domain");
                }
            }
        }
    }

    fn validate_objectives(&self, d: &mut Diagnostics) {
        let Some(o) = self.objectives else { return };
        if let CellStatus::Unsupported { reason } = matrix_cell(o.phi, o.theta) {
            d.push(
                "objectives",
                format!("({} theta, {} phi) is not a valid combination: {reason}", o.theta.label(), o.phi.label()),
            );
            return;
        }
        let cells = match &self.learner {
            LearnerSection::Directed(c) => c.cells(),
            LearnerSection::Vdm(_) => vec![(PhiObjective::FDiv, ThetaObjective::FDiv)],
            _ => {
                d.push("objectives", "the learner matrix covers directed and adversarial learners only");
                return;
            }
        };
        if !cells.contains(&(o.phi, o.theta)) {
            d.push(
                "objectives",
                format!(
                    "({} theta, {} phi) does not match learner `{}`",
                    o.theta.label(),
                    o.phi.label(),
                    self.learner.kind()
                ),
            );
        }
    }
}

fn check_rw(k: RwKernel, domain: Domain, d: &mut Diagnostics) {
    match (k, domain) {
        (RwKernel::Flip { count }, Domain::Binary(n)) if count == 0 || count > n => {
            d.push("learner.kernel", format!("flip count must lie in 1..={n}"))
        }
        (RwKernel::Gaussian { scale }, Domain::Real(_)) if !(scale > 0.0) => {
            d.push("learner.kernel", "gaussian scale must be positive")
        }
        (RwKernel::Flip { .. }, Domain::Real(_)) => d.push("learner.kernel", "flip moves need a binary domain"),
        (RwKernel::Gaussian { .. }, Domain::Binary(_)) => d.push("learner.kernel", "gaussian moves need a continuous domain"),
        _ => {}
    }
}

/// Table-generator and inclusive-generator domains are enumerated in full.
pub(crate) fn table_dim_ok(domain: Domain) -> bool {
    matches!(domain, Domain::Binary(n) if (1..=MAX_BINARY_OBS).contains(&n))
}
