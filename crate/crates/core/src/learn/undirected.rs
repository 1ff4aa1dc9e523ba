//! Random-field learners: SML with persistent chains, exclusive and
//! inclusive auxiliary-generator NRFs, and NCE.

use serde::{Deserialize, Serialize};

use crate::dists::{
    bernoulli_log_prob, binary_index, binary_state, clamp_log_std, gaussian_entropy, gaussian_log_prob,
    gaussian_reparam, DiagGaussian, FactorialBernoulli, TableDist,
};
use crate::error::{Error, Result};
use crate::learn::adversarial::FDivSpec;
use crate::learn::{AcceptTally, Dataset, Learner};
use crate::models::{Domain, NeuralRf};
use crate::num::{log_sum_exp, softplus, Activation, MlpSpec, ParamVector, RngStream, Tape, Var};
use crate::samplers::{acceptance, rw_step, RwKernel};
use crate::sa::SaProblem;

fn mask(mut g: ParamVector, prefix: &str) -> ParamVector {
    g.mask_prefix(&format!("{prefix}."));
    g
}

/// `grad u(x_data) - grad u(x_model)`, restricted to the field's parameters.
pub fn moment_field(nrf: &NeuralRf, params: &ParamVector, x_data: &[f64], x_model: &[f64]) -> Result<ParamVector> {
    let mut g = nrf.potential_grad(params, x_data)?;
    g.axpy(-1.0, &nrf.potential_grad(params, x_model)?);
    Ok(mask(g, &nrf.prefix))
}

/// Persistent chains advanced round-robin, one chain per move.
#[derive(Clone, Debug, PartialEq)]
pub struct Chains {
    pub xs: Vec<Vec<f64>>,
    pub cursor: usize,
}

impl Chains {
    /// Chains started at training points.
    pub fn from_data(data: &Dataset, n: usize, rng: &mut RngStream) -> Result<Self> {
        data.require_nonempty()?;
        if n == 0 {
            return Err(Error::invalid("need at least one persistent chain"));
        }
        Ok(Chains {
            xs: (0..n).map(|_| data.sample(rng).to_vec()).collect(),
            cursor: n - 1,
        })
    }

    fn advance(&mut self) -> usize {
        self.cursor = (self.cursor + 1) % self.xs.len();
        self.cursor
    }

    pub fn current(&self) -> &[f64] {
        &self.xs[self.cursor]
    }
}

/// Stochastic maximum likelihood with persistent random-walk chains.
pub struct Sml<'a> {
    pub nrf: &'a NeuralRf,
    pub kernel: RwKernel,
    pub data: &'a Dataset,
    pub chains: usize,
    pub tally: AcceptTally,
}

impl<'a> Sml<'a> {
    pub fn new(nrf: &'a NeuralRf, kernel: RwKernel, data: &'a Dataset, chains: usize) -> Result<Self> {
        data.require_nonempty()?;
        if data.domain != nrf.domain {
            return Err(Error::invalid("field and data domains differ"));
        }
        Ok(Sml {
            nrf,
            kernel,
            data,
            chains,
            tally: AcceptTally::default(),
        })
    }
}

impl SaProblem for Sml<'_> {
    type State = Chains;

    fn transition(&mut self, params: &ParamVector, state: &mut Chains, rng: &mut RngStream) -> Result<()> {
        let i = state.advance();
        let (next, took) = rw_step(self.kernel, self.nrf, params, &state.xs[i], rng)?;
        self.tally.record(took);
        state.xs[i] = next;
        Ok(())
    }

    fn field(&mut self, params: &ParamVector, state: &Chains, rng: &mut RngStream) -> Result<ParamVector> {
        let x = self.data.sample(rng);
        moment_field(self.nrf, params, x, state.current())
    }
}

impl Learner for Sml<'_> {
    fn init_state(&mut self, _: &ParamVector, rng: &mut RngStream) -> Result<Chains> {
        Chains::from_data(self.data, self.chains, rng)
    }

    fn take_acceptance(&mut self) -> Option<f64> {
        self.tally.take()
    }
}

/// Prescribed generator `q(h) q_phi(x | h)` with a uniform binary latent and
/// Bernoulli (binary `x`) or diagonal Gaussian (real `x`) conditionals.
/// The marginal `q_phi(x)` is an exact sum over the latent states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxGenerator {
    pub latent: usize,
    pub obs: Domain,
    pub spec: MlpSpec,
    pub prefix: String,
}

impl AuxGenerator {
    pub fn new(latent: usize, obs: Domain, hidden: usize, prefix: impl Into<String>) -> Result<Self> {
        if latent == 0 || latent > 4 {
            return Err(Error::invalid("auxiliary generator latent width must be in 1..=4"));
        }
        let out = match obs {
            Domain::Binary(d) => d,
            Domain::Real(d) => 2 * d,
        };
        let spec = MlpSpec::uniform(vec![latent, hidden, out], Activation::Tanh, Activation::Identity)?;
        Ok(AuxGenerator {
            latent,
            obs,
            spec,
            prefix: prefix.into(),
        })
    }

    pub fn init(&self, rng: &mut RngStream, params: &mut ParamVector) -> Result<()> {
        self.spec.init(&self.prefix, rng, params)
    }

    fn states(&self) -> usize {
        1 << self.latent
    }

    /// `log q(x | h)` on the tape.
    pub fn log_cond_tape(&self, t: &mut Tape, params: &ParamVector, x: &[f64], h: &[f64]) -> Var {
        let hv = t.constant(h.to_vec());
        let out = self.spec.forward(t, params, &self.prefix, hv);
        match self.obs {
            Domain::Binary(_) => bernoulli_log_prob(t, out, x),
            Domain::Real(d) => {
                let mean = t.slice(out, 0, d);
                let ls = t.slice(out, d, d);
                let log_std = clamp_log_std(t, ls);
                let xv = t.constant(x.to_vec());
                gaussian_log_prob(t, mean, log_std, xv)
            }
        }
    }

    /// `log q_phi(x)` on the tape.
    pub fn log_marginal_tape(&self, t: &mut Tape, params: &ParamVector, x: &[f64]) -> Var {
        let terms: Vec<Var> = (0..self.states())
            .map(|s| self.log_cond_tape(t, params, x, &binary_state(s, self.latent)))
            .collect();
        let all = t.concat(&terms);
        let l = t.logsumexp(all);
        t.shift(l, -(self.states() as f64).ln())
    }

    fn cond_value(&self, params: &ParamVector, h: &[f64]) -> Result<CondValue> {
        let out = self.spec.eval(params, &self.prefix, h);
        Ok(match self.obs {
            Domain::Binary(_) => CondValue::Bernoulli(FactorialBernoulli::from_logits(&out)),
            Domain::Real(d) => CondValue::Gaussian(DiagGaussian::new(out[..d].to_vec(), out[d..].to_vec())?),
        })
    }

    pub fn log_marginal(&self, params: &ParamVector, x: &[f64]) -> Result<f64> {
        let terms: Vec<f64> = (0..self.states())
            .map(|s| self.cond_value(params, &binary_state(s, self.latent))?.log_prob(x))
            .collect::<Result<_>>()?;
        Ok(log_sum_exp(&terms) - (self.states() as f64).ln())
    }

    pub fn sample(&self, params: &ParamVector, rng: &mut RngStream) -> Result<Vec<f64>> {
        let h = binary_state(rng.below(self.states()), self.latent);
        Ok(match self.cond_value(params, &h)? {
            CondValue::Bernoulli(b) => b.sample(rng),
            CondValue::Gaussian(g) => g.sample(rng),
        })
    }

    /// Exact pmf over a binary observation space.
    pub fn table(&self, params: &ParamVector) -> Result<TableDist> {
        let d = match self.obs {
            Domain::Binary(d) => d,
            Domain::Real(_) => return Err(Error::invalid("table needs binary observations")),
        };
        let lw: Vec<f64> = (0..1usize << d)
            .map(|i| self.log_marginal(params, &binary_state(i, d)))
            .collect::<Result<_>>()?;
        TableDist::from_log_weights(&lw)
    }
}

enum CondValue {
    Bernoulli(FactorialBernoulli),
    Gaussian(DiagGaussian),
}

impl CondValue {
    fn log_prob(&self, x: &[f64]) -> Result<f64> {
        match self {
            CondValue::Bernoulli(b) => b.log_prob(x),
            CondValue::Gaussian(g) => g.log_prob(x),
        }
    }
}

/// Kernel used by the inclusive learner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InclusiveKernel {
    RandomWalk { rw: RwKernel },
    /// Metropolis independence sampler proposing from the generator.
    GeneratorMis,
}

/// Inclusive-NRF learning: theta follows data-minus-model moments with model
/// samples from the kernel; phi ascends `log q_phi(x)` on those samples.
pub struct InclusiveNrf<'a> {
    pub nrf: &'a NeuralRf,
    pub gen: &'a AuxGenerator,
    pub kernel: InclusiveKernel,
    pub data: &'a Dataset,
    pub chains: usize,
    pub tally: AcceptTally,
}

impl<'a> InclusiveNrf<'a> {
    pub fn new(
        nrf: &'a NeuralRf,
        gen: &'a AuxGenerator,
        kernel: InclusiveKernel,
        data: &'a Dataset,
        chains: usize,
    ) -> Result<Self> {
        data.require_nonempty()?;
        if data.domain != nrf.domain || gen.obs != nrf.domain {
            return Err(Error::invalid("field, generator and data domains differ"));
        }
        Ok(InclusiveNrf {
            nrf,
            gen,
            kernel,
            data,
            chains,
            tally: AcceptTally::default(),
        })
    }

    /// One MIS move with the generator marginal as proposal.
    pub fn mis_move(&self, params: &ParamVector, x: &[f64], rng: &mut RngStream) -> Result<(Vec<f64>, bool)> {
        let prop = self.gen.sample(params, rng)?;
        let lw = |y: &[f64]| -> Result<f64> { Ok(self.nrf.potential(params, y)? - self.gen.log_marginal(params, y)?) };
        let a = acceptance(lw(&prop)?, lw(x)?)?;
        if rng.uniform() < a {
            Ok((prop, true))
        } else {
            Ok((x.to_vec(), false))
        }
    }

    /// `grad_phi log q_phi(x)`.
    pub fn phi_field(&self, params: &ParamVector, x: &[f64]) -> Result<ParamVector> {
        let mut t = Tape::new();
        let l = self.gen.log_marginal_tape(&mut t, params, x);
        t.check()?;
        Ok(mask(t.backward(l).params(params), &self.gen.prefix))
    }
}

impl SaProblem for InclusiveNrf<'_> {
    type State = Chains;

    fn transition(&mut self, params: &ParamVector, state: &mut Chains, rng: &mut RngStream) -> Result<()> {
        let i = state.advance();
        let (next, took) = match self.kernel {
            InclusiveKernel::RandomWalk { rw } => rw_step(rw, self.nrf, params, &state.xs[i], rng)?,
            InclusiveKernel::GeneratorMis => self.mis_move(params, &state.xs[i], rng)?,
        };
        self.tally.record(took);
        state.xs[i] = next;
        Ok(())
    }

    fn field(&mut self, params: &ParamVector, state: &Chains, rng: &mut RngStream) -> Result<ParamVector> {
        let x = self.data.sample(rng);
        let mut f = moment_field(self.nrf, params, x, state.current())?;
        f.axpy(1.0, &self.phi_field(params, state.current())?);
        Ok(f)
    }
}

impl Learner for InclusiveNrf<'_> {
    fn init_state(&mut self, _: &ParamVector, rng: &mut RngStream) -> Result<Chains> {
        Chains::from_data(self.data, self.chains, rng)
    }

    fn take_acceptance(&mut self) -> Option<f64> {
        self.tally.take()
    }
}

/// Reparameterized diagonal Gaussian over `x` with analytic entropy;
/// parameters `{prefix}.mean`, `{prefix}.log_std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianGenerator {
    pub dim: usize,
    pub prefix: String,
}

impl GaussianGenerator {
    pub fn new(dim: usize, prefix: impl Into<String>) -> Result<Self> {
        if dim == 0 || dim > crate::models::MAX_REAL_DIM {
            return Err(Error::invalid("Gaussian generator dimension out of range"));
        }
        Ok(GaussianGenerator {
            dim,
            prefix: prefix.into(),
        })
    }

    pub fn mean_name(&self) -> String {
        format!("{}.mean", self.prefix)
    }

    pub fn log_std_name(&self) -> String {
        format!("{}.log_std", self.prefix)
    }

    pub fn init(&self, _rng: &mut RngStream, params: &mut ParamVector) -> Result<()> {
        params.add(self.mean_name(), vec![self.dim], vec![0.0; self.dim])?;
        params.add(self.log_std_name(), vec![self.dim], vec![0.0; self.dim])
    }

    pub fn dist(&self, params: &ParamVector) -> Result<DiagGaussian> {
        DiagGaussian::new(params.get(&self.mean_name())?.to_vec(), params.get(&self.log_std_name())?.to_vec())
    }

    /// `u(x(eps)) + H[q]`, the exclusive objective for one draw.
    pub fn objective_tape(&self, t: &mut Tape, params: &ParamVector, nrf: &NeuralRf, eps: &[f64]) -> Var {
        let m = t.param(params, &self.mean_name());
        let ls = t.param(params, &self.log_std_name());
        let ls = clamp_log_std(t, ls);
        let x = gaussian_reparam(t, m, ls, eps);
        let u = nrf.potential_tape(t, params, x);
        let h = gaussian_entropy(t, ls);
        t.add(u, h)
    }
}

/// Exclusive-NRF learning with a reparameterized generator: theta uses
/// generator samples in place of model samples; phi ascends
/// `E_q[u(x)] + H[q]`.
pub struct ExclusiveNrf<'a> {
    pub nrf: &'a NeuralRf,
    pub gen: &'a GaussianGenerator,
    pub data: &'a Dataset,
    /// Skip theta updates (frozen-field generator fitting).
    pub freeze_theta: bool,
}

impl<'a> ExclusiveNrf<'a> {
    pub fn new(nrf: &'a NeuralRf, gen: &'a GaussianGenerator, data: &'a Dataset) -> Result<Self> {
        data.require_nonempty()?;
        match nrf.domain {
            Domain::Real(d) if d == gen.dim => {}
            _ => return Err(Error::invalid("exclusive NRF needs a continuous field matching the generator")),
        }
        Ok(ExclusiveNrf {
            nrf,
            gen,
            data,
            freeze_theta: false,
        })
    }
}

impl SaProblem for ExclusiveNrf<'_> {
    type State = ();

    fn transition(&mut self, _: &ParamVector, _: &mut (), _: &mut RngStream) -> Result<()> {
        Ok(())
    }

    fn field(&mut self, params: &ParamVector, _: &(), rng: &mut RngStream) -> Result<ParamVector> {
        let eps = rng.normals(self.gen.dim);
        let mut t = Tape::new();
        let obj = self.gen.objective_tape(&mut t, params, self.nrf, &eps);
        t.check()?;
        let mut f = mask(t.backward(obj).params(params), &self.gen.prefix);
        let xd = self.data.sample(rng).to_vec();
        if !self.freeze_theta {
            let xg = self.gen.dist(params)?.transform(&eps);
            f.axpy(1.0, &moment_field(self.nrf, params, &xd, &xg)?);
        }
        Ok(f)
    }
}

impl Learner for ExclusiveNrf<'_> {
    fn init_state(&mut self, _: &ParamVector, _: &mut RngStream) -> Result<()> {
        Ok(())
    }
}

/// Known noise distribution for NCE.
#[derive(Clone, Debug)]
pub enum Noise {
    Table { dim: usize, dist: TableDist },
    Gaussian(DiagGaussian),
}

impl Noise {
    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        match self {
            Noise::Table { dist, .. } => dist.log_prob(binary_index(x)),
            Noise::Gaussian(g) => g.log_prob(x),
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        match self {
            Noise::Table { dim, dist } => binary_state(dist.sample(rng), *dim),
            Noise::Gaussian(g) => g.sample(rng),
        }
    }
}

#[derive(Clone, Debug)]
pub struct NceConfig {
    pub nu: f64,
    pub noise: Noise,
}

impl NceConfig {
    /// Noise draws per data point and the weight of each.
    pub fn noise_draws(&self) -> (usize, f64) {
        let n = self.nu.ceil().max(1.0) as usize;
        (n, self.nu / n as f64)
    }
}

/// Log-odds `G(x) = log p_m(x) - log(nu p_n(x))` with `log p_m = u - c`.
pub fn nce_logit_tape(t: &mut Tape, nrf: &NeuralRf, params: &ParamVector, x: &[f64], nu: f64, log_pn: f64) -> Var {
    let xv = t.constant(x.to_vec());
    let u = nrf.potential_tape(t, params, xv);
    t.shift(u, -(nu.ln() + log_pn))
}

/// Batch objective `mean_data log P(data|x) + nu mean_noise log P(noise|y)`.
pub fn nce_objective(
    nrf: &NeuralRf,
    params: &ParamVector,
    cfg: &NceConfig,
    data: &[Vec<f64>],
    noise: &[Vec<f64>],
) -> Result<f64> {
    if data.is_empty() || noise.is_empty() {
        return Err(Error::invalid("nce objective needs non-empty batches"));
    }
    let g = |x: &[f64]| -> Result<f64> { Ok(nrf.potential(params, x)? - cfg.nu.ln() - cfg.noise.log_prob(x)?) };
    let mut a = 0.0;
    for x in data {
        a -= softplus(-g(x)?);
    }
    let mut b = 0.0;
    for y in noise {
        b -= softplus(g(y)?);
    }
    Ok(a / data.len() as f64 + cfg.nu * b / noise.len() as f64)
}

/// Variational f-divergence objective with the NCE generator and
/// `T(x) = log(p_m / (p_m + nu p_n))`, on the same batches.
pub fn nce_fdiv_objective(
    nrf: &NeuralRf,
    params: &ParamVector,
    cfg: &NceConfig,
    data: &[Vec<f64>],
    noise: &[Vec<f64>],
) -> Result<f64> {
    let spec = FDivSpec::nce(cfg.nu)?;
    let t_of = |x: &[f64]| -> Result<f64> {
        let lm = nrf.potential(params, x)?;
        let ln = cfg.nu.ln() + cfg.noise.log_prob(x)?;
        Ok(lm - log_sum_exp(&[lm, ln]))
    };
    let td: Vec<f64> = data.iter().map(|x| t_of(x)).collect::<Result<_>>()?;
    let tn: Vec<f64> = noise.iter().map(|x| t_of(x)).collect::<Result<_>>()?;
    crate::learn::adversarial::vdm_objective_t(&spec, &td, &tn)
}

/// `|J - (F + nu log nu)|` on shared batches.
pub fn nce_fdiv_equivalence(
    nrf: &NeuralRf,
    params: &ParamVector,
    cfg: &NceConfig,
    data: &[Vec<f64>],
    noise: &[Vec<f64>],
) -> Result<f64> {
    let j = nce_objective(nrf, params, cfg, data, noise)?;
    let f = nce_fdiv_objective(nrf, params, cfg, data, noise)?;
    Ok((j - (f + cfg.nu * cfg.nu.ln())).abs())
}

/// Exact `J` by enumeration for a binary field.
pub fn nce_objective_exact(nrf: &NeuralRf, params: &ParamVector, nu: f64, p0: &TableDist, pn: &TableDist) -> Result<f64> {
    let d = nrf.domain.dim();
    if !nrf.domain.is_binary() {
        return Err(Error::invalid("exact NCE objective needs a binary domain"));
    }
    let mut acc = 0.0;
    for i in 0..1usize << d {
        let x = binary_state(i, d);
        let g = nrf.potential(params, &x)? - nu.ln() - pn.prob(i).ln();
        if p0.prob(i) > 0.0 {
            acc -= p0.prob(i) * softplus(-g);
        }
        if pn.prob(i) > 0.0 {
            acc -= nu * pn.prob(i) * softplus(g);
        }
    }
    Ok(acc)
}

/// SA ascent of the NCE objective over `(theta, c)`.
pub struct Nce<'a> {
    pub nrf: &'a NeuralRf,
    pub cfg: NceConfig,
    pub data: &'a Dataset,
    noise_rng: RngStream,
}

impl<'a> Nce<'a> {
    pub fn new(nrf: &'a NeuralRf, cfg: NceConfig, data: &'a Dataset, rng: &RngStream) -> Result<Self> {
        if !(cfg.nu > 0.0 && cfg.nu.is_finite()) {
            return Err(Error::Config(format!("nce.nu: must be positive, got {}", cfg.nu)));
        }
        if !nrf.with_c {
            return Err(Error::invalid("NCE needs a field carrying the log-normalizer c"));
        }
        data.require_nonempty()?;
        for (i, x) in data.xs.iter().enumerate() {
            let lp = cfg.noise.log_prob(x)?;
            if lp == f64::NEG_INFINITY {
                return Err(Error::AbsoluteContinuity(format!(
                    "noise distribution vanishes at training point {i}"
                )));
            }
        }
        Ok(Nce {
            nrf,
            cfg,
            data,
            noise_rng: rng.split(0x6e6f697365),
        })
    }

    /// Gradient of the per-point objective for one data point and its noise draws.
    pub fn field_at(&self, params: &ParamVector, x: &[f64], noise: &[Vec<f64>], weight: f64) -> Result<ParamVector> {
        let nu = self.cfg.nu;
        let lpx = self.cfg.noise.log_prob(x)?;
        let lpn: Vec<f64> = noise.iter().map(|y| self.cfg.noise.log_prob(y)).collect::<Result<_>>()?;
        let (_, g) = crate::num::grad(
            |t, p| {
                let gx = nce_logit_tape(t, self.nrf, p, x, nu, lpx);
                let mut acc = t.log_sigmoid(gx);
                for (y, l) in noise.iter().zip(&lpn) {
                    let gy = nce_logit_tape(t, self.nrf, p, y, nu, *l);
                    let ny = t.neg(gy);
                    let ls = t.log_sigmoid(ny);
                    let ls = t.scale(ls, weight);
                    acc = t.add(acc, ls);
                }
                acc
            },
            params,
        )?;
        Ok(mask(g, &self.nrf.prefix))
    }
}

impl SaProblem for Nce<'_> {
    type State = ();

    fn transition(&mut self, _: &ParamVector, _: &mut (), _: &mut RngStream) -> Result<()> {
        Ok(())
    }

    fn field(&mut self, params: &ParamVector, _: &(), rng: &mut RngStream) -> Result<ParamVector> {
        let x = self.data.sample(rng).to_vec();
        let (n, w) = self.cfg.noise_draws();
        let noise: Vec<Vec<f64>> = (0..n).map(|_| self.cfg.noise.sample(&mut self.noise_rng)).collect();
        self.field_at(params, &x, &noise, w)
    }
}

impl Learner for Nce<'_> {
    fn init_state(&mut self, _: &ParamVector, _: &mut RngStream) -> Result<()> {
        Ok(())
    }
}
