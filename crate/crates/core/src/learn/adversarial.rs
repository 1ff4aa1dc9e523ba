//! f-divergences through Fenchel conjugates, critics and variational
//! divergence minimization.

use serde::{Deserialize, Serialize};

use crate::dists::{binary_state, softmax_log_prob, TableDist};
use crate::error::{Error, Result};
use crate::learn::{Dataset, Learner};
use crate::models::{Domain, ImplicitGen};
use crate::num::{log1mexp, sigmoid, softplus, Activation, MlpSpec, ParamVector, RngStream, Tape, Var};
use crate::oracle::Density;
use crate::sa::SaProblem;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FKind {
    /// `u log u - (u+1) log(u+1)`
    Gan,
    /// `u log u`
    Kl,
    /// `-log u`
    ReverseKl,
    /// `u log u - (u+nu) log(u+nu)`
    Nce { nu: f64 },
}

/// Output activation mapping a real critic value into the conjugate domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputAct {
    Standard,
    /// `g(v) = f'(e^v)`
    Principled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FDivSpec {
    pub name: String,
    pub kind: FKind,
    pub act: OutputAct,
}

impl FDivSpec {
    pub fn gan() -> Self {
        FDivSpec {
            name: "gan".into(),
            kind: FKind::Gan,
            act: OutputAct::Standard,
        }
    }

    pub fn kl() -> Self {
        FDivSpec {
            name: "kl".into(),
            kind: FKind::Kl,
            act: OutputAct::Standard,
        }
    }

    pub fn reverse_kl() -> Self {
        FDivSpec {
            name: "reverse_kl".into(),
            kind: FKind::ReverseKl,
            act: OutputAct::Standard,
        }
    }

    pub fn nce(nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::invalid(format!("nce ratio must be positive, got {nu}")));
        }
        Ok(FDivSpec {
            name: format!("nce(nu={nu})"),
            kind: FKind::Nce { nu },
            act: OutputAct::Standard,
        })
    }

    /// Same `f` with `g(v) = f'(e^v)`.
    pub fn principled(&self) -> Self {
        FDivSpec {
            name: format!("principled({})", self.name),
            kind: self.kind,
            act: OutputAct::Principled,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "gan" => Ok(Self::gan()),
            "kl" => Ok(Self::kl()),
            "reverse_kl" => Ok(Self::reverse_kl()),
            "principled_kl" => Ok(Self::kl().principled()),
            _ => Err(Error::invalid(format!(
                "unknown f-divergence `{name}` (expected gan, kl, reverse_kl or principled_kl)"
            ))),
        }
    }

    pub fn f(&self, u: f64) -> f64 {
        match self.kind {
            FKind::Gan => xlogx(u) - (u + 1.0) * (u + 1.0).ln(),
            FKind::Kl => xlogx(u),
            FKind::ReverseKl => -u.ln(),
            FKind::Nce { nu } => xlogx(u) - (u + nu) * (u + nu).ln(),
        }
    }

    pub fn f_prime(&self, u: f64) -> f64 {
        match self.kind {
            FKind::Gan => (u / (u + 1.0)).ln(),
            FKind::Kl => u.ln() + 1.0,
            FKind::ReverseKl => -1.0 / u,
            FKind::Nce { nu } => (u / (u + nu)).ln(),
        }
    }

    pub fn domain(&self) -> &'static str {
        match self.kind {
            FKind::Kl => "all reals",
            _ => "negative reals",
        }
    }

    pub fn in_domain(&self, t: f64) -> bool {
        match self.kind {
            FKind::Kl => t.is_finite(),
            _ => t < 0.0,
        }
    }

    /// `f*(t)`; outside the conjugate domain this is an error.
    pub fn conj(&self, t: f64) -> Result<f64> {
        if !self.in_domain(t) {
            return Err(Error::ConjugateDomain {
                spec: self.name.clone(),
                detail: format!("t = {t} (domain: {})", self.domain()),
            });
        }
        Ok(self.conj_unchecked(t))
    }

    fn conj_unchecked(&self, t: f64) -> f64 {
        match self.kind {
            FKind::Gan => -log1mexp(t),
            FKind::Kl => (t - 1.0).exp(),
            FKind::ReverseKl => -1.0 - (-t).ln(),
            FKind::Nce { nu } => nu * nu.ln() - nu * log1mexp(t),
        }
    }

    /// Output activation `g(v)`.
    pub fn g(&self, v: f64) -> f64 {
        match (self.kind, self.act) {
            (FKind::Gan, _) => -softplus(-v),
            (FKind::Kl, OutputAct::Standard) => v,
            (FKind::Kl, OutputAct::Principled) => v + 1.0,
            (FKind::ReverseKl, _) => -(-v).exp(),
            (FKind::Nce { nu }, _) => -softplus(nu.ln() - v),
        }
    }

    /// `f*(g(v))` in a form that stays finite wherever `g(v)` is representable.
    pub fn conj_g(&self, v: f64) -> f64 {
        match (self.kind, self.act) {
            (FKind::Gan, _) => softplus(v),
            (FKind::Kl, OutputAct::Standard) => (v - 1.0).exp(),
            (FKind::Kl, OutputAct::Principled) => v.exp(),
            (FKind::ReverseKl, _) => v - 1.0,
            (FKind::Nce { nu }, _) => nu * (nu.ln() + softplus(v - nu.ln())),
        }
    }

    /// Inverse of `g`, for `t` inside the conjugate domain.
    pub fn g_inv(&self, t: f64) -> Result<f64> {
        if !self.in_domain(t) {
            return Err(Error::ConjugateDomain {
                spec: self.name.clone(),
                detail: format!("g^-1 at t = {t}"),
            });
        }
        Ok(match (self.kind, self.act) {
            (FKind::Gan, _) => t - log1mexp(t),
            (FKind::Kl, OutputAct::Standard) => t,
            (FKind::Kl, OutputAct::Principled) => t - 1.0,
            (FKind::ReverseKl, _) => -(-t).ln(),
            (FKind::Nce { nu }, _) => nu.ln() - (-t).exp_m1().ln(),
        })
    }

    pub fn g_tape(&self, t: &mut Tape, v: Var) -> Var {
        match (self.kind, self.act) {
            (FKind::Gan, _) => t.log_sigmoid(v),
            (FKind::Kl, OutputAct::Standard) => v,
            (FKind::Kl, OutputAct::Principled) => t.shift(v, 1.0),
            (FKind::ReverseKl, _) => {
                let n = t.neg(v);
                let e = t.exp(n);
                t.neg(e)
            }
            (FKind::Nce { nu }, _) => {
                let a = t.scale_shift(v, -1.0, nu.ln());
                let s = t.softplus(a);
                t.neg(s)
            }
        }
    }

    pub fn conj_g_tape(&self, t: &mut Tape, v: Var) -> Var {
        match (self.kind, self.act) {
            (FKind::Gan, _) => t.softplus(v),
            (FKind::Kl, OutputAct::Standard) => {
                let s = t.shift(v, -1.0);
                t.exp(s)
            }
            (FKind::Kl, OutputAct::Principled) => t.exp(v),
            (FKind::ReverseKl, _) => t.shift(v, -1.0),
            (FKind::Nce { nu }, _) => {
                let a = t.shift(v, -nu.ln());
                let s = t.softplus(a);
                t.scale_shift(s, nu, nu * nu.ln())
            }
        }
    }

    /// `f(1)`, zero for proper divergences; the GAN and NCE generators are
    /// offset by a constant.
    pub fn f_at_one(&self) -> f64 {
        self.f(1.0)
    }
}

fn xlogx(u: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u * u.ln()
    }
}

/// Grid `{0.1, 0.2, ..., 10}` used by the conjugate checks.
pub fn u_grid() -> Vec<f64> {
    (1..=100).map(|i| i as f64 / 10.0).collect()
}

/// Largest `|f*(f'(u)) - (u f'(u) - f(u))|` over [`u_grid`].
pub fn conjugate_identity_residual(spec: &FDivSpec) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for u in u_grid() {
        let lhs = spec.conj(spec.f_prime(u))?;
        let rhs = u * spec.f_prime(u) - spec.f(u);
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Convexity on the u-grid, range of `g` on `[-30, 30]` and the conjugate
/// identity.
pub fn validate(spec: &FDivSpec) -> Result<()> {
    let grid = u_grid();
    for w in grid.windows(3) {
        if spec.f(w[1]) > 0.5 * (spec.f(w[0]) + spec.f(w[2])) + 1e-12 {
            return Err(Error::invalid(format!("{}: f fails the midpoint test at u = {}", spec.name, w[1])));
        }
    }
    for i in 0..=600 {
        let v = -30.0 + i as f64 * 0.1;
        let t = spec.g(v);
        if !spec.in_domain(t) {
            return Err(Error::ConjugateDomain {
                spec: spec.name.clone(),
                detail: format!("g({v}) = {t}"),
            });
        }
    }
    let r = conjugate_identity_residual(spec)?;
    if r > 1e-10 {
        return Err(Error::invalid(format!("{}: conjugate identity residual {r:e}", spec.name)));
    }
    Ok(())
}

/// The registered, validated specs.
pub fn registry() -> Result<Vec<FDivSpec>> {
    let specs = vec![
        FDivSpec::gan(),
        FDivSpec::kl(),
        FDivSpec::reverse_kl(),
        FDivSpec::kl().principled(),
    ];
    for s in &specs {
        validate(s)?;
    }
    Ok(specs)
}

/// Real-valued critic `V_psi` over observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    pub spec: MlpSpec,
    pub prefix: String,
}

impl Critic {
    pub fn new(spec: MlpSpec, prefix: impl Into<String>) -> Result<Self> {
        spec.validate()?;
        if spec.output_width() != 1 {
            return Err(Error::invalid("critic must output a scalar"));
        }
        Ok(Critic {
            spec,
            prefix: prefix.into(),
        })
    }

    /// One tanh hidden layer.
    pub fn mlp(input: usize, hidden: usize, prefix: impl Into<String>) -> Result<Self> {
        Self::new(
            MlpSpec::uniform(vec![input, hidden, 1], Activation::Tanh, Activation::Identity)?,
            prefix,
        )
    }

    pub fn init(&self, rng: &mut RngStream, params: &mut ParamVector) -> Result<()> {
        self.spec.init(&self.prefix, rng, params)
    }

    pub fn value(&self, params: &ParamVector, x: &[f64]) -> Result<f64> {
        let v = self.spec.eval(params, &self.prefix, x)[0];
        if !v.is_finite() {
            return Err(Error::NonFinite { primitive: "critic" });
        }
        Ok(v)
    }

    pub fn value_tape(&self, t: &mut Tape, params: &ParamVector, x: Var) -> Var {
        self.spec.forward(t, params, &self.prefix, x)
    }
}

/// `mean_data T - mean_model f*(T)` for raw variational-function values.
pub fn vdm_objective_t(spec: &FDivSpec, t_data: &[f64], t_model: &[f64]) -> Result<f64> {
    if t_data.is_empty() || t_model.is_empty() {
        return Err(Error::invalid("vdm objective needs non-empty batches"));
    }
    let a = t_data.iter().sum::<f64>() / t_data.len() as f64;
    let mut b = 0.0;
    for (i, &t) in t_model.iter().enumerate() {
        b += spec.conj(t).map_err(|_| Error::ConjugateDomain {
            spec: spec.name.clone(),
            detail: format!("model sample {i} with T = {t} (domain: {})", spec.domain()),
        })?;
    }
    Ok(a - b / t_model.len() as f64)
}

/// `mean_data g(V) - mean_model f*(g(V))` for critic outputs.
pub fn vdm_objective_v(spec: &FDivSpec, v_data: &[f64], v_model: &[f64]) -> Result<f64> {
    if v_data.is_empty() || v_model.is_empty() {
        return Err(Error::invalid("vdm objective needs non-empty batches"));
    }
    for (i, &v) in v_model.iter().enumerate() {
        let t = spec.g(v);
        if !spec.in_domain(t) {
            return Err(Error::ConjugateDomain {
                spec: spec.name.clone(),
                detail: format!("model sample {i}: g({v}) = {t}"),
            });
        }
    }
    let a = v_data.iter().map(|&v| spec.g(v)).sum::<f64>() / v_data.len() as f64;
    let b = v_model.iter().map(|&v| spec.conj_g(v)).sum::<f64>() / v_model.len() as f64;
    Ok(a - b)
}

/// Batch objective with a critic network.
pub fn vdm_objective(
    spec: &FDivSpec,
    critic: &Critic,
    params: &ParamVector,
    p0_batch: &[Vec<f64>],
    model_batch: &[Vec<f64>],
) -> Result<f64> {
    let vd: Vec<f64> = p0_batch.iter().map(|x| critic.value(params, x)).collect::<Result<_>>()?;
    let vm: Vec<f64> = model_batch.iter().map(|x| critic.value(params, x)).collect::<Result<_>>()?;
    vdm_objective_v(spec, &vd, &vm)
}

/// `E_p0[T] - E_ptheta[f*(T)]` by exact summation or quadrature, with `T`
/// given per support point.
pub fn vdm_objective_exact(spec: &FDivSpec, p0: &Density, ptheta: &Density, t: &[f64]) -> Result<f64> {
    let (a, b) = (p0.points(), ptheta.points());
    crate::dists::check_dim("vdm_objective_exact support", a.len(), b.len())?;
    crate::dists::check_dim("vdm_objective_exact T", a.len(), t.len())?;
    let mut acc = 0.0;
    for (i, ((pa, w), (pb, _))) in a.iter().zip(&b).enumerate() {
        if *pa > 0.0 {
            acc += w * pa * t[i];
        }
        if *pb > 0.0 {
            let c = spec.conj(t[i]).map_err(|_| Error::ConjugateDomain {
                spec: spec.name.clone(),
                detail: format!("support point {i} with T = {}", t[i]),
            })?;
            acc -= w * pb * c;
        }
    }
    Ok(acc)
}

/// Optimal discriminator, variational function and critic output per
/// support point.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimalRefs {
    pub d: Vec<f64>,
    pub t: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn optimal_references(p0: &Density, ptheta: &Density, spec: &FDivSpec) -> Result<OptimalRefs> {
    let (a, b) = (p0.points(), ptheta.points());
    crate::dists::check_dim("optimal_references support", a.len(), b.len())?;
    let mut out = OptimalRefs {
        d: Vec::with_capacity(a.len()),
        t: Vec::with_capacity(a.len()),
        v: Vec::with_capacity(a.len()),
    };
    for (i, ((pa, _), (pb, _))) in a.iter().zip(&b).enumerate() {
        if !(*pa > 0.0 && *pb > 0.0) {
            return Err(Error::AbsoluteContinuity(format!(
                "optimal references need both densities positive; support point {i} has ({pa:e}, {pb:e})"
            )));
        }
        let r = pa / pb;
        let t = spec.f_prime(r);
        out.d.push(pa / (pa + pb));
        out.t.push(t);
        out.v.push(match spec.act {
            OutputAct::Principled => r.ln(),
            OutputAct::Standard => spec.g_inv(t)?,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaLoss {
    Saturating,
    /// Ascend `E[log D(G(eps))]`; GAN spec only.
    LogDTrick,
}

/// Generator with exact sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum VdmGenerator {
    /// Softmax over all states of a small binary domain; logits in `{prefix}.logits`.
    Table { dim: usize, prefix: String },
    /// `x = G(eps)`, reparameterized.
    Implicit(ImplicitGen),
}

impl VdmGenerator {
    pub fn domain(&self) -> Domain {
        match self {
            VdmGenerator::Table { dim, .. } => Domain::Binary(*dim),
            VdmGenerator::Implicit(g) => Domain::Real(g.out_dim()),
        }
    }

    pub fn prefix(&self) -> &str {
        match self {
            VdmGenerator::Table { prefix, .. } => prefix,
            VdmGenerator::Implicit(g) => &g.prefix,
        }
    }

    fn logits_name(&self) -> String {
        format!("{}.logits", self.prefix())
    }

    pub fn init(&self, rng: &mut RngStream, params: &mut ParamVector) -> Result<()> {
        match self {
            VdmGenerator::Table { dim, .. } => {
                if *dim == 0 || *dim > crate::models::MAX_BINARY_OBS {
                    return Err(Error::invalid("table generator dimension out of range"));
                }
                params.add(self.logits_name(), vec![1 << dim], vec![0.0; 1 << dim])
            }
            VdmGenerator::Implicit(g) => g.init(rng, params),
        }
    }

    /// Exact pmf of a table generator.
    pub fn table(&self, params: &ParamVector) -> Result<TableDist> {
        match self {
            VdmGenerator::Table { .. } => TableDist::from_log_weights(params.get(&self.logits_name())?),
            VdmGenerator::Implicit(_) => Err(Error::invalid("implicit generators have no table")),
        }
    }

    pub fn sample(&self, params: &ParamVector, rng: &mut RngStream) -> Result<Vec<f64>> {
        match self {
            VdmGenerator::Table { dim, .. } => Ok(binary_state(self.table(params)?.sample(rng), *dim)),
            VdmGenerator::Implicit(g) => Ok(g.generate(params, rng)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VdmConfig {
    pub fspec: FDivSpec,
    pub theta_loss: ThetaLoss,
    /// Critic-only steps before each joint step; 0 updates both every step.
    pub critic_steps: u32,
}

impl VdmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.theta_loss == ThetaLoss::LogDTrick && self.fspec.kind != FKind::Gan {
            return Err(Error::Config(format!(
                "theta_loss: log_d_trick requires the gan f-divergence, got {}",
                self.fspec.name
            )));
        }
        validate(&self.fspec)
    }
}

/// Alternating SA for `min_theta max_psi F(theta, psi)`.
pub struct Vdm<'a> {
    pub cfg: VdmConfig,
    pub gen: &'a VdmGenerator,
    pub critic: &'a Critic,
    pub data: &'a Dataset,
    update_theta: bool,
    baseline: f64,
    baseline_seen: bool,
}

impl<'a> Vdm<'a> {
    pub fn new(cfg: VdmConfig, gen: &'a VdmGenerator, critic: &'a Critic, data: &'a Dataset) -> Result<Self> {
        cfg.validate()?;
        data.require_nonempty()?;
        if data.domain != gen.domain() {
            return Err(Error::invalid("generator and data domains differ"));
        }
        Ok(Vdm {
            cfg,
            gen,
            critic,
            data,
            update_theta: true,
            baseline: 0.0,
            baseline_seen: false,
        })
    }

    /// Critic ascent direction for one data point and one model point.
    pub fn critic_field(&self, params: &ParamVector, x: &[f64], xm: &[f64]) -> Result<ParamVector> {
        let spec = &self.cfg.fspec;
        let (_, mut g) = crate::num::grad(
            |t, p| {
                let xd = t.constant(x.to_vec());
                let vd = self.critic.value_tape(t, p, xd);
                let gd = spec.g_tape(t, vd);
                let xg = t.constant(xm.to_vec());
                let vm = self.critic.value_tape(t, p, xg);
                let cm = spec.conj_g_tape(t, vm);
                t.sub(gd, cm)
            },
            params,
        )?;
        g.mask_prefix(&format!("{}.", self.critic.prefix));
        Ok(g)
    }

    /// Per-sample generator signal whose expectation the generator ascends.
    fn theta_signal_tape(&self, t: &mut Tape, v: Var) -> Var {
        match self.cfg.theta_loss {
            ThetaLoss::Saturating => self.cfg.fspec.conj_g_tape(t, v),
            ThetaLoss::LogDTrick => t.log_sigmoid(v),
        }
    }

    fn theta_signal(&self, v: f64) -> f64 {
        match self.cfg.theta_loss {
            ThetaLoss::Saturating => self.cfg.fspec.conj_g(v),
            ThetaLoss::LogDTrick => -softplus(-v),
        }
    }

    /// Generator ascent direction from one model draw.
    pub fn theta_field(&mut self, params: &ParamVector, rng: &mut RngStream) -> Result<ParamVector> {
        let mut out = match self.gen {
            VdmGenerator::Table { dim, .. } => {
                let table = self.gen.table(params)?;
                let s = table.sample(rng);
                let x = binary_state(s, *dim);
                let signal = self.theta_signal(self.critic.value(params, &x)?);
                let b = if self.baseline_seen { self.baseline } else { signal };
                self.baseline = 0.9 * b + 0.1 * signal;
                self.baseline_seen = true;
                let name = self.gen.logits_name();
                let (_, g) = crate::num::grad(
                    |t, p| {
                        let l = t.param(p, &name);
                        softmax_log_prob(t, l, s)
                    },
                    params,
                )?;
                let mut g = g;
                g.scale(signal - b);
                g
            }
            VdmGenerator::Implicit(gen) => {
                let eps = rng.normals(gen.noise_dim());
                let (_, g) = crate::num::grad(
                    |t, p| {
                        let x = gen.generate_tape(t, p, &eps);
                        let v = self.critic.value_tape(t, p, x);
                        self.theta_signal_tape(t, v)
                    },
                    params,
                )?;
                g
            }
        };
        out.mask_prefix(&format!("{}.", self.gen.prefix()));
        Ok(out)
    }

    /// Saturating generator loss descends `F`; the signal `f*(g(V))` is
    /// therefore ascended. The log-D trick ascends `log sigmoid(V)`.
    pub fn uses_saturating(&self) -> bool {
        self.cfg.theta_loss == ThetaLoss::Saturating
    }
}

impl SaProblem for Vdm<'_> {
    type State = ();

    fn begin_step(&mut self, t: u64, _params: &ParamVector, _rng: &mut RngStream) -> Result<()> {
        let k = self.cfg.critic_steps as u64;
        self.update_theta = k == 0 || t % (k + 1) == 0;
        Ok(())
    }

    fn transition(&mut self, _params: &ParamVector, _state: &mut (), _rng: &mut RngStream) -> Result<()> {
        Ok(())
    }

    fn field(&mut self, params: &ParamVector, _state: &(), rng: &mut RngStream) -> Result<ParamVector> {
        let x = self.data.sample(rng).to_vec();
        let xm = self.gen.sample(params, rng)?;
        let mut f = self.critic_field(params, &x, &xm)?;
        if self.update_theta {
            let g = self.theta_field(params, rng)?;
            f.axpy(1.0, &g);
        }
        Ok(f)
    }
}

impl Learner for Vdm<'_> {
    fn init_state(&mut self, _params: &ParamVector, _rng: &mut RngStream) -> Result<()> {
        Ok(())
    }
}

/// Exact `E_p[signal(V) * score]` at a table generator, for fixed-point checks.
pub fn table_theta_gradient(
    vdm: &Vdm,
    params: &ParamVector,
) -> Result<Vec<f64>> {
    let table = vdm.gen.table(params)?;
    let dim = vdm.gen.domain().dim();
    let n = table.len();
    let signals: Vec<f64> = (0..n)
        .map(|s| Ok(vdm.theta_signal(vdm.critic.value(params, &binary_state(s, dim))?)))
        .collect::<Result<_>>()?;
    let mean: f64 = (0..n).map(|s| table.prob(s) * signals[s]).sum();
    Ok((0..n).map(|s| table.prob(s) * (signals[s] - mean)).collect())
}

/// Closed-form probability that a point is real under a discriminator.
pub fn discriminator(v: f64) -> f64 {
    sigmoid(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gan_activation_and_fixed_point() {
        let s = FDivSpec::gan();
        assert!((s.g(0.0) + 2f64.ln()).abs() < 1e-15);
        assert!((s.f_at_one() + 4f64.ln()).abs() < 1e-15);
        assert!((vdm_objective_v(&s, &[0.0], &[0.0]).unwrap() + 2.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn registry_validates() {
        for s in registry().unwrap() {
            assert!(conjugate_identity_residual(&s).unwrap() <= 1e-10, "{}", s.name);
        }
        validate(&FDivSpec::nce(10.0).unwrap()).unwrap();
    }

    #[test]
    fn conj_g_matches_composition() {
        for s in registry().unwrap().into_iter().chain([FDivSpec::nce(3.0).unwrap()]) {
            for v in [-3.0, -0.5, 0.0, 0.7, 2.5] {
                let direct = s.conj(s.g(v)).unwrap();
                assert!((direct - s.conj_g(v)).abs() < 1e-10, "{} at {v}", s.name);
                assert!((s.g_inv(s.g(v)).unwrap() - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn domain_violation_names_sample() {
        let e = vdm_objective_t(&FDivSpec::gan(), &[0.0], &[-1.0, 0.5]).unwrap_err();
        assert!(e.to_string().contains("model sample 1"));
    }

    #[test]
    fn optimal_discriminator_ratio() {
        let p0 = Density::Table(TableDist::new(vec![0.75, 0.25]).unwrap());
        let pt = Density::Table(TableDist::new(vec![0.25, 0.75]).unwrap());
        let r = optimal_references(&p0, &pt, &FDivSpec::gan()).unwrap();
        assert!((r.d[0] - 0.75).abs() < 1e-15);
        assert!((r.v[0] - 3f64.ln()).abs() < 1e-12);
    }
}
