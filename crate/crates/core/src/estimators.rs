//! Bound and gradient estimators for latent-variable models: ELBO forms,
//! importance-weighted bounds, encoder gradients (score function, NVIL,
//! reparameterized, path derivative), RWS gradients and the inference-gap
//! decomposition.

use serde::{Deserialize, Serialize};

use crate::dists::{binary_state, logit_clamp, DiagGaussian, FactorialBernoulli, TableDist};
use crate::error::{Error, Result};
use crate::models::{Domain, EncDistValue, Encoder, LatentModel};
use crate::num::{log_sum_exp, sigmoid, MlpSpec, ParamVector, RngStream, Tape, Var};
use crate::oracle::{exact_marginal, exact_posterior, GridSpec, ENUMERATION_LIMIT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElboForm {
    /// `E_q[log p(x, h) - log q(h | x)]`
    Ratio,
    /// `E_q[log p(x | h)] - KL(q || p(h))`
    ReconMinusKl,
    /// `E_q[log p(x, h)] + H[q]`
    JointPlusEntropy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMethod {
    Reinforce,
    ReinforceNvil,
    ReparamTd,
    ReparamPd,
}

impl PhiMethod {
    pub fn needs_continuous(self) -> bool {
        matches!(self, PhiMethod::ReparamTd | PhiMethod::ReparamPd)
    }
}

fn entropy(q: &EncDistValue) -> f64 {
    match q {
        EncDistValue::Bernoulli(d) => d.entropy(),
        EncDistValue::Gaussian(d) => d.entropy(),
        EncDistValue::Table(d) => d.entropy(),
    }
}

fn check_abs_cont(log_joint: f64, log_q: f64) -> Result<f64> {
    if log_q == f64::NEG_INFINITY && log_joint.is_finite() {
        return Err(Error::AbsoluteContinuity(
            "encoder assigns zero density where the joint is positive".into(),
        ));
    }
    let lw = log_joint - log_q;
    if lw.is_nan() || lw == f64::INFINITY {
        return Err(Error::NonFinite {
            primitive: "importance weight",
        });
    }
    Ok(lw)
}

/// Monte Carlo ELBO in one of its three algebraic forms.
pub fn elbo_mc(
    model: &dyn LatentModel,
    enc: &dyn Encoder,
    params: &ParamVector,
    x: &[f64],
    rng: &mut RngStream,
    form: ElboForm,
    n_samples: usize,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::invalid("elbo_mc needs at least one sample"));
    }
    let q = enc.dist(params, x)?;
    let width = enc.latent().dim();
    let analytic = match form {
        ElboForm::ReconMinusKl => model.kl_to_prior(params, &q),
        _ => None,
    };
    let mut acc = 0.0;
    for _ in 0..n_samples {
        let h = q.sample(width, rng).h;
        let lj = model.joint_log_prob(params, x, &h)?;
        acc += match form {
            ElboForm::Ratio => check_abs_cont(lj, q.log_prob(&h)?)?,
            ElboForm::JointPlusEntropy => lj,
            ElboForm::ReconMinusKl => {
                let lprior = model.log_prior(params, &h)?;
                let recon = lj - lprior;
                match analytic {
                    Some(_) => recon,
                    None => recon - (q.log_prob(&h)? - lprior),
                }
            }
        };
    }
    let mean = acc / n_samples as f64;
    Ok(match form {
        ElboForm::Ratio => mean,
        ElboForm::JointPlusEntropy => mean + entropy(&q),
        ElboForm::ReconMinusKl => mean - analytic.unwrap_or(0.0),
    })
}

fn enumerable_latent(enc: &dyn Encoder) -> Result<usize> {
    match enc.latent() {
        Domain::Binary(h) if (1u128 << h) <= ENUMERATION_LIMIT => Ok(h),
        Domain::Binary(h) => Err(Error::DomainTooLarge {
            states: 1u128 << h.min(127),
            limit: ENUMERATION_LIMIT,
        }),
        Domain::Real(_) => Err(Error::invalid("exact evaluation needs enumerable latents")),
    }
}

/// Per-state `(log q(h|x), log w(h))` over the binary latent space.
fn latent_table(
    model: &dyn LatentModel,
    enc: &dyn Encoder,
    params: &ParamVector,
    x: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let h = enumerable_latent(enc)?;
    let q = enc.dist(params, x)?;
    (0..1usize << h)
        .map(|i| {
            let hs = binary_state(i, h);
            let lq = q.log_prob(&hs)?;
            let lj = model.joint_log_prob(params, x, &hs)?;
            Ok((lq, if lq == f64::NEG_INFINITY { f64::NEG_INFINITY } else { lj - lq }))
        })
        .collect()
}

/// Quadrature grid adapted to a Gaussian encoder distribution.
fn encoder_grid(q: &DiagGaussian) -> Result<GridSpec> {
    let bounds = q
        .mean()
        .iter()
        .zip(q.log_std())
        .map(|(m, s)| (m - 10.0 * s.exp(), m + 10.0 * s.exp()))
        .collect();
    GridSpec::new(bounds, if q.dim() == 1 { 2048 } else { 256 })
}

/// ELBO by enumeration (binary latents) or quadrature (Gaussian encoders).
pub fn elbo_exact(model: &dyn LatentModel, enc: &dyn Encoder, params: &ParamVector, x: &[f64]) -> Result<f64> {
    match enc.latent() {
        Domain::Binary(_) => Ok(latent_table(model, enc, params, x)?
            .iter()
            .filter(|(lq, _)| *lq > f64::NEG_INFINITY)
            .map(|(lq, lw)| lq.exp() * lw)
            .sum()),
        Domain::Real(_) => {
            let q = match enc.dist(params, x)? {
                EncDistValue::Gaussian(g) => g,
                _ => return Err(Error::invalid("continuous encoder must be Gaussian")),
            };
            let mut acc = 0.0;
            for (h, w) in encoder_grid(&q)?.nodes() {
                let lq = q.log_prob(&h)?;
                acc += w * lq.exp() * (model.joint_log_prob(params, x, &h)? - lq);
            }
            Ok(acc)
        }
    }
}

/// `K` draws from the encoder with log importance weights.
#[derive(Clone, Debug)]
pub struct IwBatch {
    pub hs: Vec<Vec<f64>>,
    pub eps: Vec<Option<Vec<f64>>>,
    pub log_w: Vec<f64>,
    pub norm: Vec<f64>,
}

impl IwBatch {
    pub fn weights(&self) -> Vec<f64> {
        self.log_w.iter().map(|v| v.exp()).collect()
    }

    /// `log (1/K sum_k w_k)`.
    pub fn log_mean_weight(&self) -> f64 {
        log_sum_exp(&self.log_w) - (self.log_w.len() as f64).ln()
    }
}

pub fn iw_batch(
    model: &dyn LatentModel,
    enc: &dyn Encoder,
    params: &ParamVector,
    x: &[f64],
    k: usize,
    rng: &mut RngStream,
) -> Result<IwBatch> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let q = enc.dist(params, x)?;
    let width = enc.latent().dim();
    let (mut hs, mut eps, mut log_w) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..k {
        let d = q.sample(width, rng);
        let lw = check_abs_cont(model.joint_log_prob(params, x, &d.h)?, q.log_prob(&d.h)?)?;
        hs.push(d.h);
        eps.push(d.eps);
        log_w.push(lw);
    }
    let z = log_sum_exp(&log_w);
    let norm = log_w.iter().map(|v| (v - z).exp()).collect();
    Ok(IwBatch { hs, eps, log_w, norm })
}

/// `log p_hat^K(x)`, the log of the K-sample importance average.
pub fn marginal_iw(
    model: &dyn LatentModel,
    enc: &dyn Encoder,
    params: &ParamVector,
    x: &[f64],
    k: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    Ok(iw_batch(model, enc, params, x, k, rng)?.log_mean_weight())
}

/// Monte Carlo `I_K` averaged over `reps` independent batches.
pub fn iw_lb(
    model: &dyn LatentModel,
    enc: &dyn Encoder,
    params: &ParamVector,
    x: &[f64],
    k: usize,
    reps: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    if reps == 0 {
        return Err(Error::invalid("iw_lb needs at least one repetition"));
    }
    let mut acc = 0.0;
    for _ in 0..reps {
        acc += marginal_iw(model, enc, params, x, k, rng)?;
    }
    Ok(acc / reps as f64)
}

/// Visits every K-tuple of latent states with its probability under
/// `prod_k q(h_k|x)` and the tuple's log weights.
fn for_each_tuple(table: &[(f64, f64)], k: usize, mut f: impl FnMut(f64, &[f64])) -> Result<()> {
    let n = table.len();
    let total = (n as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if total > ENUMERATION_LIMIT {
        return Err(Error::DomainTooLarge {
            states: total,
            limit: ENUMERATION_LIMIT,
        });
    }
    let support: Vec<usize> = (0..n).filter(|&i| table[i].0 > f64::NEG_INFINITY).collect();
    let mut idx = vec![0usize; k];
    let mut lw = vec![0.0; k];
    loop {
        let mut lq = 0.0;
        for (j, &i) in idx.iter().enumerate() {
            let s = support[i];
            lq += table[s].0;
            lw[j] = table[s].1;
        }
        f(lq.exp(), &lw);
        let mut j = 0;
        loop {
            if j == k {
                return Ok(());
            }
            idx[j] += 1;
            if idx[j] < support.len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Exact `I_K` by enumerating all K-tuples of binary latents.
pub fn iw_lb_exact(
    model: &dyn LatentModel,
    enc: &dyn Encoder,
    params: &ParamVector,
    x: &[f64],
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let table = latent_table(model, enc, params, x)?;
    let ln_k = (k as f64).ln();
    let mut acc = 0.0;
    for_each_tuple(&table, k, |p, lw| acc += p * (log_sum_exp(lw) - ln_k))?;
    Ok(acc)
}

/// Exact `log E[p_hat^K]` by tuple enumeration; equals `log p(x)`.
pub fn marginal_iw_expectation_exact(
    model: &dyn LatentModel,
    enc: &dyn Encoder,
    params: &ParamVector,
    x: &[f64],
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let table = latent_table(model, enc, params, x)?;
    let mut terms = Vec::new();
    for_each_tuple(&table, k, |p, lw| terms.push(p.ln() + log_sum_exp(lw) - (k as f64).ln()))?;
    Ok(log_sum_exp(&terms))
}

/// Running statistics of the REINFORCE learning signal, with an optional
/// input-dependent baseline network trained on the residual.
#[derive(Clone, Debug)]
pub struct NvilState {
    pub decay: f64,
    pub mean: f64,
    pub var: f64,
    pub normalize: bool,
    pub seen: u64,
    pub baseline: Option<InputBaseline>,
}

#[derive(Clone, Debug)]
pub struct InputBaseline {
    pub spec: MlpSpec,
    pub params: ParamVector,
    pub rate: f64,
}

impl InputBaseline {
    /// One hidden tanh layer mapping `x` to a scalar.
    pub fn new(obs: usize, hidden: usize, rate: f64, rng: &mut RngStream) -> Result<Self> {
        use crate::num::Activation;
        let spec = MlpSpec::uniform(vec![obs, hidden, 1], Activation::Tanh, Activation::Identity)?;
        let mut params = ParamVector::new();
        spec.init("b", rng, &mut params)?;
        Ok(InputBaseline { spec, params, rate })
    }
}

impl Default for NvilState {
    fn default() -> Self {
        NvilState {
            decay: 0.8,
            mean: 0.0,
            var: 1.0,
            normalize: false,
            seen: 0,
            baseline: None,
        }
    }
}

impl NvilState {
    pub fn with_normalization(mut self, on: bool) -> Self {
        self.normalize = on;
        self
    }

    fn input_baseline(&self, x: &[f64]) -> f64 {
        self.baseline
            .as_ref()
            .map_or(0.0, |b| b.spec.eval(&b.params, "b", x)[0])
    }

    /// Centered (and optionally scaled) signal, computed from statistics of
    /// previous signals only; then folds the new signal in.
    pub fn process(&mut self, x: &[f64], signal: f64) -> Result<f64> {
        let b = self.mean + self.input_baseline(x);
        let mut out = signal - b;
        if self.normalize {
            out /= self.var.sqrt().max(1.0);
        }
        let resid = signal - self.mean;
        if self.seen == 0 {
            self.mean = signal;
        } else {
            self.mean = self.decay * self.mean + (1.0 - self.decay) * signal;
            self.var = self.decay * self.var + (1.0 - self.decay) * resid * resid;
        }
        self.seen += 1;
        if let Some(bl) = self.baseline.as_mut() {
            let target = signal - self.mean;
            let (_, g) = crate::num::grad(
                |t, p| {
                    let xv = t.constant(x.to_vec());
                    let y = bl.spec.forward(t, p, "b", xv);
                    let d = t.shift(y, -target);
                    t.square(d)
                },
                &bl.params,
            )?;
            bl.params.axpy(-bl.rate, &g);
        }
        Ok(out)
    }
}

fn prefix_of(s: &str) -> String {
    format!("{s}.")
}

/// Reparameterized `log p(x, h) - log q(h | x)` on the tape. With
/// `path_derivative` the score term of `q` is cut from the graph.
pub fn reparam_elbo_tape(
    t: &mut Tape,
    model: &dyn LatentModel,
    enc: &dyn Encoder,
    params: &ParamVector,
    x: &[f64],
    eps: &[f64],
    path_derivative: bool,
) -> Result<Var> {
    let d = enc.dist_tape(t, params, x);
    let h = d.reparam(t, eps)?;
    let lj = model.joint_log_prob_tape(t, params, x, h);
    let lq = if path_derivative {
        let dd = d.detached(t);
        dd.log_prob(t, h)
    } else {
        d.log_prob(t, h)
    };
    Ok(t.sub(lj, lq))
}

/// Single-draw estimate of `grad_phi L(x)`, laid out like `params` and zero
/// outside the encoder's segments.
pub fn grad_phi(
    model: &dyn LatentModel,
    enc: &dyn Encoder,
    params: &ParamVector,
    x: &[f64],
    rng: &mut RngStream,
    method: PhiMethod,
    nvil: Option<&mut NvilState>,
) -> Result<ParamVector> {
    let mut out = match method {
        PhiMethod::Reinforce | PhiMethod::ReinforceNvil => {
            let draw = enc.sample(params, x, rng)?;
            let lj = model.joint_log_prob(params, x, &draw.h)?;
            let mut t = Tape::new();
            let d = enc.dist_tape(&mut t, params, x);
            let hv = t.constant(draw.h.clone());
            let lq = d.log_prob(&mut t, hv);
            t.check()?;
            let mut signal = check_abs_cont(lj, t.scalar_value(lq))?;
            if method == PhiMethod::ReinforceNvil {
                let state = nvil.ok_or_else(|| Error::invalid("reinforce_nvil needs an NvilState"))?;
                signal = state.process(x, signal)?;
            }
            let g = t.backward(lq);
            let mut out = params.zeros_like();
            g.accumulate(&mut out, signal);
            out
        }
        PhiMethod::ReparamTd | PhiMethod::ReparamPd => {
            if !enc.latent().is_binary() {
                let eps = rng.normals(enc.latent().dim());
                let mut t = Tape::new();
                let obj = reparam_elbo_tape(&mut t, model, enc, params, x, &eps, method == PhiMethod::ReparamPd)?;
                t.check()?;
                t.backward(obj).params(params)
            } else {
                return Err(Error::invalid(format!(
                    "{method:?} needs continuous latents; use reinforce for discrete ones"
                )));
            }
        }
    };
    out.mask_prefix(&prefix_of(enc.prefix()));
    Ok(out)
}

/// Mean of `grad_theta log p(x, h)` over `n` encoder draws.
pub fn grad_theta_vlb(
    model: &dyn LatentModel,
    enc: &dyn Encoder,
    params: &ParamVector,
    x: &[f64],
    rng: &mut RngStream,
    n: usize,
) -> Result<ParamVector> {
    if n == 0 {
        return Err(Error::invalid("grad_theta_vlb needs at least one draw"));
    }
    let mut out = params.zeros_like();
    for _ in 0..n {
        let draw = enc.sample(params, x, rng)?;
        let mut t = Tape::new();
        let hv = t.constant(draw.h);
        let lj = model.joint_log_prob_tape(&mut t, params, x, hv);
        t.check()?;
        t.backward(lj).accumulate(&mut out, 1.0 / n as f64);
    }
    out.mask_prefix(&prefix_of(model.prefix()));
    Ok(out)
}

/// `log (1/K sum_k p(x, h_k) / q(h_k | x))` at fixed latents, differentiable in
/// both parameter groups.
pub fn iw_objective_fixed(
    t: &mut Tape,
    model: &dyn LatentModel,
    enc: &dyn Encoder,
    params: &ParamVector,
    x: &[f64],
    hs: &[Vec<f64>],
) -> Var {
    let d = enc.dist_tape(t, params, x);
    let terms: Vec<Var> = hs
        .iter()
        .map(|h| {
            let hv = t.constant(h.clone());
            let lj = model.joint_log_prob_tape(t, params, x, hv);
            let lq = d.log_prob(t, hv);
            t.sub(lj, lq)
        })
        .collect();
    let all = t.concat(&terms);
    let l = t.logsumexp(all);
    t.shift(l, -(hs.len() as f64).ln())
}

/// Reparameterized `log p_hat^K` on the tape (the IWAE objective).
pub fn iwae_objective_tape(
    t: &mut Tape,
    model: &dyn LatentModel,
    enc: &dyn Encoder,
    params: &ParamVector,
    x: &[f64],
    eps: &[Vec<f64>],
) -> Result<Var> {
    let d = enc.dist_tape(t, params, x);
    let mut terms = Vec::with_capacity(eps.len());
    for e in eps {
        let h = d.reparam(t, e)?;
        let lj = model.joint_log_prob_tape(t, params, x, h);
        let lq = d.log_prob(t, h);
        terms.push(t.sub(lj, lq));
    }
    let all = t.concat(&terms);
    let l = t.logsumexp(all);
    Ok(t.shift(l, -(eps.len() as f64).ln()))
}

/// RWS wake gradients from one shared batch:
/// `sum_k wbar_k grad_theta log p(x, h_k)` and `sum_k wbar_k grad_phi log q(h_k | x)`.
pub fn grads_rws_from(
    model: &dyn LatentModel,
    enc: &dyn Encoder,
    params: &ParamVector,
    x: &[f64],
    batch: &IwBatch,
) -> Result<(ParamVector, ParamVector)> {
    let mut t = Tape::new();
    let d = enc.dist_tape(&mut t, params, x);
    let mut gt = params.zeros_like();
    let mut gp = params.zeros_like();
    let mut lj_terms = Vec::new();
    let mut lq_terms = Vec::new();
    for (h, wbar) in batch.hs.iter().zip(&batch.norm) {
        let hv = t.constant(h.clone());
        let lj = model.joint_log_prob_tape(&mut t, params, x, hv);
        let lq = d.log_prob(&mut t, hv);
        let w = t.scalar(*wbar);
        lj_terms.push(t.mul(w, lj));
        lq_terms.push(t.mul(w, lq));
    }
    let sj = t.concat(&lj_terms);
    let sj = t.sum(sj);
    let sq = t.concat(&lq_terms);
    let sq = t.sum(sq);
    t.check()?;
    t.backward(sj).accumulate(&mut gt, 1.0);
    t.backward(sq).accumulate(&mut gp, 1.0);
    gt.mask_prefix(&prefix_of(model.prefix()));
    gp.mask_prefix(&prefix_of(enc.prefix()));
    Ok((gt, gp))
}

pub fn grads_rws(
    model: &dyn LatentModel,
    enc: &dyn Encoder,
    params: &ParamVector,
    x: &[f64],
    k: usize,
    rng: &mut RngStream,
) -> Result<(ParamVector, ParamVector)> {
    let batch = iw_batch(model, enc, params, x, k, rng)?;
    grads_rws_from(model, enc, params, x, &batch)
}

/// Inference gap split into approximation and amortization parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapDecomposition {
    pub log_marginal: f64,
    pub inference: f64,
    pub approximation: f64,
    pub amortization: f64,
    /// Per-`x` optimal encoder distribution parameters.
    pub optimum: Vec<f64>,
}

fn table_kl(q: &[f64], post: &TableDist) -> f64 {
    q.iter()
        .zip(post.probs())
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum()
}

fn factorial_table(probs: &[f64]) -> Vec<f64> {
    let h = probs.len();
    let fb = FactorialBernoulli::new(probs.to_vec());
    (0..1usize << h)
        .map(|i| fb.log_prob(&binary_state(i, h)).unwrap().exp())
        .collect()
}

fn elbo_of_table(q: &[f64], log_joint: &[f64]) -> f64 {
    q.iter()
        .zip(log_joint)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, lj)| a * (lj - a.ln()))
        .sum()
}

/// Coordinate ascent on the ELBO over free factorial Bernoulli logits.
fn cavi(log_joint: &[f64], h: usize, start: Vec<f64>) -> Result<Vec<f64>> {
    let m = logit_clamp();
    let mut logits = start;
    for _ in 0..10_000 {
        let mut delta: f64 = 0.0;
        for i in 0..h {
            let probs: Vec<f64> = logits.iter().map(|&a| sigmoid(a)).collect();
            let mut acc = 0.0;
            for s in 0..1usize << h {
                if (s >> i) & 1 == 1 {
                    continue;
                }
                let mut w = 1.0;
                for (j, p) in probs.iter().enumerate() {
                    if j != i {
                        w *= if (s >> j) & 1 == 1 { *p } else { 1.0 - p };
                    }
                }
                acc += w * (log_joint[s | (1 << i)] - log_joint[s]);
            }
            let new = acc.clamp(-m, m);
            delta = delta.max((new - logits[i]).abs());
            logits[i] = new;
        }
        if delta < 1e-8 {
            return Ok(logits);
        }
    }
    Err(Error::NoConvergence(
        "coordinate ascent for the per-x encoder did not reach tolerance 1e-8".into(),
    ))
}

/// Exact inference, approximation and amortization gaps at `x`.
///
/// The per-`x` optimum is searched within the encoder's output family by
/// coordinate ascent from 8 starts, one of which is the amortized encoder
/// output itself.
pub fn gap_decompose(
    model: &dyn LatentModel,
    enc: &dyn Encoder,
    params: &ParamVector,
    x: &[f64],
) -> Result<GapDecomposition> {
    let h = enumerable_latent(enc)?;
    let post = exact_posterior(model, params, x)?;
    let log_marginal = exact_marginal(model, params, x)?;
    let log_joint: Vec<f64> = (0..1usize << h)
        .map(|i| model.joint_log_prob(params, x, &binary_state(i, h)))
        .collect::<Result<_>>()?;
    let q_amort = enc.dist(params, x)?;
    let (q_table, optimum, q_star) = match &q_amort {
        EncDistValue::Table(t) => (t.probs().to_vec(), post.probs().to_vec(), post.probs().to_vec()),
        EncDistValue::Bernoulli(fb) => {
            let own: Vec<f64> = fb.probs().iter().map(|p| (p / (1.0 - p)).ln()).collect();
            let mut rng = RngStream::new(0x9a9);
            let mut starts = vec![own];
            for _ in 0..7 {
                starts.push((0..h).map(|_| 4.0 * rng.uniform() - 2.0).collect());
            }
            let mut best: Option<(f64, Vec<f64>)> = None;
            for s in starts {
                let l = cavi(&log_joint, h, s)?;
                let probs: Vec<f64> = FactorialBernoulli::from_logits(&l).probs().to_vec();
                let e = elbo_of_table(&factorial_table(&probs), &log_joint);
                if best.as_ref().is_none_or(|(b, _)| e > *b) {
                    best = Some((e, probs));
                }
            }
            let (_, probs) = best.unwrap();
            (factorial_table(fb.probs()), probs.clone(), factorial_table(&probs))
        }
        EncDistValue::Gaussian(_) => {
            return Err(Error::invalid("gap decomposition needs enumerable latents"))
        }
    };
    let inference = table_kl(&q_table, &post);
    let approximation = table_kl(&q_star, &post);
    let amortization = elbo_of_table(&q_star, &log_joint) - elbo_of_table(&q_table, &log_joint);
    Ok(GapDecomposition {
        log_marginal,
        inference,
        approximation,
        amortization,
        optimum,
    })
}
