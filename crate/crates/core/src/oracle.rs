//! Ground truth by brute force: enumeration over small binary domains and
//! trapezoid quadrature over 1-2 dimensional grids.

use serde::{Deserialize, Serialize};

use crate::dists::{binary_state, TableDist};
use crate::error::{Error, Result};
use crate::learn::adversarial::FDivSpec;
use crate::models::{Domain, LatentModel, NeuralRf, VaePair};
use crate::num::{log_sum_exp, ParamVector};

pub const ENUMERATION_LIMIT: u128 = 1 << 20;
pub const MIN_GRID_POINTS: usize = 64;

/// Per-dimension bounds and a shared point count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bounds: Vec<(f64, f64)>,
    pub points: usize,
}

impl GridSpec {
    pub fn new(bounds: Vec<(f64, f64)>, points: usize) -> Result<Self> {
        if bounds.is_empty() || bounds.len() > 2 {
            return Err(Error::invalid("grids cover 1 or 2 dimensions"));
        }
        if points < MIN_GRID_POINTS {
            return Err(Error::invalid(format!(
                "grid needs at least {MIN_GRID_POINTS} points per dimension, got {points}"
            )));
        }
        if bounds.iter().any(|(lo, hi)| !lo.is_finite() || !hi.is_finite() || lo >= hi) {
            return Err(Error::invalid("grid bounds must be finite with lo < hi"));
        }
        Ok(GridSpec { bounds, points })
    }

    /// `[-8, 8]` with 512 points in each dimension.
    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(vec![(-8.0, 8.0); dim], 512)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// Nodes and trapezoid weights along one axis.
    pub fn axis(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        let (lo, hi) = self.bounds[i];
        let n = self.points;
        let h = (hi - lo) / (n - 1) as f64;
        let xs = (0..n).map(|k| lo + k as f64 * h).collect();
        let ws = (0..n)
            .map(|k| if k == 0 || k == n - 1 { 0.5 * h } else { h })
            .collect();
        (xs, ws)
    }

    /// Every node of the tensor grid with its product weight.
    pub fn nodes(&self) -> Vec<(Vec<f64>, f64)> {
        let axes: Vec<_> = (0..self.dim()).map(|i| self.axis(i)).collect();
        match axes.len() {
            1 => axes[0].0.iter().zip(&axes[0].1).map(|(x, w)| (vec![*x], *w)).collect(),
            _ => {
                let mut out = Vec::with_capacity(self.points * self.points);
                for (x0, w0) in axes[0].0.iter().zip(&axes[0].1) {
                    for (x1, w1) in axes[1].0.iter().zip(&axes[1].1) {
                        out.push((vec![*x0, *x1], w0 * w1));
                    }
                }
                out
            }
        }
    }
}

fn check_enumerable(bits: usize) -> Result<()> {
    let states = if bits >= 127 { u128::MAX } else { 1u128 << bits };
    if states > ENUMERATION_LIMIT {
        return Err(Error::DomainTooLarge {
            states,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

/// Streaming log-sum-exp.
#[derive(Clone, Copy, Debug)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl LogSumExp {
    pub fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v <= self.max {
            self.sum += (v - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    pub fn value(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// `log sum_x exp(u(x))` over the field's domain; grid quadrature with the
/// standard grid for real domains.
pub fn enumerate_log_z(nrf: &NeuralRf, params: &ParamVector) -> Result<f64> {
    match nrf.domain {
        Domain::Binary(d) => {
            check_enumerable(d)?;
            let mut acc = LogSumExp::default();
            for i in 0..(1usize << d) {
                acc.push(nrf.eval_unchecked(params, &binary_state(i, d)));
            }
            finite("enumerate_log_z", acc.value())
        }
        Domain::Real(d) => log_z_grid(nrf, params, &GridSpec::standard(d)?),
    }
}

pub fn log_z_grid(nrf: &NeuralRf, params: &ParamVector, grid: &GridSpec) -> Result<f64> {
    crate::dists::check_dim("log_z_grid", nrf.domain.dim(), grid.dim())?;
    let mut acc = LogSumExp::default();
    for (x, w) in grid.nodes() {
        acc.push(nrf.eval_unchecked(params, &x) + w.ln());
    }
    finite("log_z_grid", acc.value())
}

fn finite(primitive: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { primitive })
    }
}

/// Normalized table of a binary-domain field.
pub fn nrf_table(nrf: &NeuralRf, params: &ParamVector) -> Result<TableDist> {
    let d = match nrf.domain {
        Domain::Binary(d) => d,
        Domain::Real(_) => return Err(Error::invalid("nrf_table needs a binary domain")),
    };
    check_enumerable(d)?;
    let logw: Vec<f64> = (0..1usize << d)
        .map(|i| nrf.eval_unchecked(params, &binary_state(i, d)))
        .collect();
    TableDist::from_log_weights(&logw)
}

/// Normalized log-density of a real-domain field on a grid.
pub fn nrf_grid_density(nrf: &NeuralRf, params: &ParamVector, grid: &GridSpec) -> Result<Density> {
    let log_z = log_z_grid(nrf, params, grid)?;
    Density::grid_from_fn(grid.clone(), |x| nrf.eval_unchecked(params, x) - log_z)
}

/// Joint log-probabilities `log p(x, h)` for every binary `h`.
fn joint_row(model: &dyn LatentModel, params: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    let h = match model.latent() {
        Domain::Binary(h) => h,
        Domain::Real(_) => return Err(Error::invalid("latent space is continuous")),
    };
    check_enumerable(h)?;
    (0..1usize << h)
        .map(|i| model.joint_log_prob(params, x, &binary_state(i, h)))
        .collect()
}

/// `log p(x)`: enumeration over binary latents, standard-grid quadrature
/// over real latents.
pub fn exact_marginal(model: &dyn LatentModel, params: &ParamVector, x: &[f64]) -> Result<f64> {
    match model.latent() {
        Domain::Binary(_) => finite("exact_marginal", log_sum_exp(&joint_row(model, params, x)?)),
        Domain::Real(d) => exact_marginal_grid(model, params, x, &GridSpec::standard(d)?),
    }
}

pub fn exact_marginal_grid(
    model: &dyn LatentModel,
    params: &ParamVector,
    x: &[f64],
    grid: &GridSpec,
) -> Result<f64> {
    let mut acc = LogSumExp::default();
    for (h, w) in grid.nodes() {
        acc.push(model.joint_log_prob(params, x, &h)? + w.ln());
    }
    finite("exact_marginal_grid", acc.value())
}

/// Grid marginals for many observations, decoding each node once.
pub fn vae_log_marginals(vae: &VaePair, params: &ParamVector, xs: &[Vec<f64>], grid: &GridSpec) -> Result<Vec<f64>> {
    crate::dists::check_dim("vae_log_marginals", vae.latent_dim, grid.dim())?;
    let prior = vae.prior();
    let mut accs = vec![LogSumExp::default(); xs.len()];
    for (h, w) in grid.nodes() {
        let base = prior.log_prob(&h)? + w.ln();
        let dec = vae.decode(params, &h);
        for (acc, x) in accs.iter_mut().zip(xs) {
            acc.push(base + vae.obs_log_prob_decoded(&dec, x));
        }
    }
    accs.iter().map(|a| finite("vae_log_marginals", a.value())).collect()
}

/// `p(h | x)` over the enumerated binary latent space.
pub fn exact_posterior(model: &dyn LatentModel, params: &ParamVector, x: &[f64]) -> Result<TableDist> {
    TableDist::from_log_weights(&joint_row(model, params, x)?)
}

/// Marginal distribution of a binary-observation model, as a table over `x`.
pub fn marginal_table(model: &dyn LatentModel, params: &ParamVector) -> Result<TableDist> {
    let d = match model.obs() {
        Domain::Binary(d) => d,
        Domain::Real(_) => return Err(Error::invalid("marginal_table needs binary observations")),
    };
    check_enumerable(d)?;
    let logp: Vec<f64> = (0..1usize << d)
        .map(|i| exact_marginal(model, params, &binary_state(i, d)))
        .collect::<Result<_>>()?;
    TableDist::from_log_weights(&logp)
}

/// A distribution the oracle can integrate exactly.
#[derive(Clone, Debug)]
pub enum Density {
    Table(TableDist),
    /// Log-density values at the nodes of `grid`, in [`GridSpec::nodes`] order.
    Grid { grid: GridSpec, log_density: Vec<f64> },
}

impl Density {
    pub fn grid_from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Density> {
        let log_density = grid.nodes().iter().map(|(x, _)| f(x)).collect();
        Ok(Density::Grid { grid, log_density })
    }

    /// `(mass or density, quadrature weight)` per support point.
    pub(crate) fn points(&self) -> Vec<(f64, f64)> {
        match self {
            Density::Table(t) => t.probs().iter().map(|&p| (p, 1.0)).collect(),
            Density::Grid { grid, log_density } => grid
                .nodes()
                .iter()
                .zip(log_density)
                .map(|((_, w), lp)| (lp.exp(), *w))
                .collect(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.points().iter().map(|(p, w)| p * w).sum()
    }
}

#[derive(Clone, Debug)]
pub enum DivKind {
    Kl,
    ReverseKl,
    Js,
    SymKl,
    F(FDivSpec),
}

fn aligned(p: &Density, q: &Density) -> Result<Vec<(f64, f64, f64)>> {
    let (a, b) = (p.points(), q.points());
    match (p, q) {
        (Density::Table(_), Density::Table(_)) => {}
        (Density::Grid { grid: g1, .. }, Density::Grid { grid: g2, .. }) if g1 == g2 => {}
        _ => return Err(Error::invalid("divergence arguments live on different supports")),
    }
    crate::dists::check_dim("exact_divergence support", a.len(), b.len())?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x.0, y.0, x.1)).collect())
}

fn kl(points: &[(f64, f64, f64)], flip: bool) -> Result<f64> {
    let mut acc = 0.0;
    for (i, &(a, b, w)) in points.iter().enumerate() {
        let (p, q) = if flip { (b, a) } else { (a, b) };
        if p == 0.0 {
            continue;
        }
        if q == 0.0 {
            return Err(Error::AbsoluteContinuity(format!(
                "second argument vanishes at support point {i} where the first has mass {p:e}"
            )));
        }
        acc += w * p * (p / q).ln();
    }
    Ok(acc)
}

/// Exact divergence `D(p || q)` by summation or quadrature.
pub fn exact_divergence(p: &Density, q: &Density, kind: &DivKind) -> Result<f64> {
    let pts = aligned(p, q)?;
    match kind {
        DivKind::Kl => kl(&pts, false),
        DivKind::ReverseKl => kl(&pts, true),
        DivKind::SymKl => Ok(kl(&pts, false)? + kl(&pts, true)?),
        DivKind::Js => {
            let mid: Vec<(f64, f64, f64)> = pts
                .iter()
                .map(|&(a, b, w)| (a, 0.5 * (a + b), w))
                .collect();
            let mid2: Vec<(f64, f64, f64)> = pts
                .iter()
                .map(|&(a, b, w)| (b, 0.5 * (a + b), w))
                .collect();
            Ok(0.5 * kl(&mid, false)? + 0.5 * kl(&mid2, false)?)
        }
        DivKind::F(spec) => {
            let mut acc = 0.0;
            for (i, &(a, b, w)) in pts.iter().enumerate() {
                if b == 0.0 {
                    if a == 0.0 {
                        continue;
                    }
                    return Err(Error::AbsoluteContinuity(format!(
                        "{}: second argument vanishes at support point {i}",
                        spec.name
                    )));
                }
                let term = b * spec.f(a / b);
                if !term.is_finite() {
                    return Err(Error::AbsoluteContinuity(format!(
                        "{}: integrand is infinite at support point {i}",
                        spec.name
                    )));
                }
                acc += w * term;
            }
            Ok(acc)
        }
    }
}

/// Square row-stochastic matrix over an enumerated domain.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        crate::dists::check_dim("TransitionMatrix", n * n, data.len())?;
        if data.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::invalid("transition probabilities must be nonnegative"));
        }
        for r in 0..n {
            let s: f64 = data[r * n..(r + 1) * n].iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("row {r} sums to {s}, not 1")));
            }
        }
        Ok(TransitionMatrix { n, data })
    }

    pub fn identity(n: usize) -> Self {
        let data = (0..n * n).map(|i| if i % (n + 1) == 0 { 1.0 } else { 0.0 }).collect();
        TransitionMatrix { n, data }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.n + to]
    }

    /// Matrix product `self * other` (apply `self`, then `other`).
    pub fn then(&self, other: &TransitionMatrix) -> Result<TransitionMatrix> {
        crate::dists::check_dim("TransitionMatrix::then", self.n, other.n)?;
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        Ok(TransitionMatrix { n, data })
    }
}

/// `|target^T K - target^T|_1`.
pub fn stationarity_residual(k: &TransitionMatrix, target: &TableDist) -> Result<f64> {
    crate::dists::check_dim("stationarity_residual", k.size(), target.len())?;
    let n = k.size();
    let mut res = 0.0;
    for j in 0..n {
        let flow: f64 = (0..n).map(|i| target.prob(i) * k.get(i, j)).sum();
        res += (flow - target.prob(j)).abs();
    }
    Ok(res)
}

/// Total-variation distance between two tables.
pub fn total_variation(p: &TableDist, q: &TableDist) -> Result<f64> {
    crate::dists::check_dim("total_variation", p.len(), q.len())?;
    Ok(0.5 * p.probs().iter().zip(q.probs()).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Empirical table of binary observations.
pub fn empirical_table(xs: &[Vec<f64>], dim: usize) -> Result<TableDist> {
    check_enumerable(dim)?;
    if xs.is_empty() {
        return Err(Error::invalid("empirical table of an empty sample"));
    }
    let mut counts = vec![0.0; 1 << dim];
    for x in xs {
        counts[crate::dists::binary_index(x)] += 1.0;
    }
    let n = xs.len() as f64;
    let mut probs: Vec<f64> = counts.iter().map(|c| c / n).collect();
    let s: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= s);
    TableDist::new(probs)
}
