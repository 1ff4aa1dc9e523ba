//! Learners expressed as stochastic-approximation problems.

pub mod adversarial;
pub mod directed;
pub mod undirected;

use serde::{Deserialize, Serialize};

use crate::dists::{binary_index, TableDist};
use crate::error::{Error, Result};
use crate::models::Domain;
use crate::num::{ParamVector, RngStream};
use crate::sa::{sa_step_multimove, SaProblem, SaRun, SaSchedule};

/// Finite training sample; the empirical distribution is uniform over it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub domain: Domain,
    pub xs: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(domain: Domain, xs: Vec<Vec<f64>>) -> Result<Self> {
        for (i, x) in xs.iter().enumerate() {
            if !domain.contains(x) {
                return Err(Error::invalid(format!("sample {i} lies outside {domain:?}")));
            }
        }
        Ok(Dataset { domain, xs })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn require_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        Ok(())
    }

    pub fn sample_index(&self, rng: &mut RngStream) -> usize {
        rng.below(self.xs.len())
    }

    pub fn sample<'a>(&'a self, rng: &mut RngStream) -> &'a [f64] {
        &self.xs[self.sample_index(rng)]
    }

    /// Empirical distribution over an enumerable binary domain.
    pub fn empirical_table(&self) -> Result<TableDist> {
        let d = match self.domain {
            Domain::Binary(d) => d,
            Domain::Real(_) => return Err(Error::invalid("empirical table needs a binary domain")),
        };
        self.require_nonempty()?;
        let mut counts = vec![0.0; 1 << d];
        for x in &self.xs {
            counts[binary_index(x)] += 1.0;
        }
        let n = self.xs.len() as f64;
        TableDist::new(counts.into_iter().map(|c| c / n).collect())
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.domain.dim();
        let mut m = vec![0.0; d];
        for x in &self.xs {
            for (a, b) in m.iter_mut().zip(x) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.xs.len().max(1) as f64);
        m
    }
}

/// Step budget and SA settings shared by every learner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub steps: u64,
    pub schedule: SaSchedule,
    /// Moves per SA step; also the minibatch size.
    pub moves: usize,
    pub clip: Option<f64>,
    pub log_every: u64,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            steps: 50_000,
            schedule: SaSchedule::default(),
            moves: 32,
            clip: None,
            log_every: 1000,
        }
    }
}

/// Snapshot handed to observers at logging points.
pub struct Progress<'a> {
    pub step: u64,
    pub params: &'a ParamVector,
    pub gamma: f64,
    pub field_norm: f64,
    pub acceptance: Option<f64>,
}

/// An SA problem with a chain-state initializer and optional acceptance
/// statistics.
pub trait Learner: SaProblem {
    fn init_state(&mut self, params: &ParamVector, rng: &mut RngStream) -> Result<Self::State>;

    /// Acceptance rate since the previous call, for kernels that have one.
    fn take_acceptance(&mut self) -> Option<f64> {
        None
    }
}

/// Runs `spec.steps` multimove SA steps, calling `observe` at step 0, every
/// `log_every` steps and at the end.
pub fn drive<L: Learner>(
    learner: &mut L,
    params: ParamVector,
    spec: &RunSpec,
    rng: &mut RngStream,
    observe: &mut dyn FnMut(&Progress) -> Result<()>,
) -> Result<SaRun<L::State>> {
    let state = learner.init_state(&params, rng)?;
    let mut run = SaRun::new(params, spec.schedule, state, spec.moves)?.with_clip(spec.clip);
    let every = spec.log_every.max(1);
    observe(&Progress {
        step: 0,
        params: &run.params,
        gamma: spec.schedule.gamma(1),
        field_norm: 0.0,
        acceptance: None,
    })?;
    for _ in 0..spec.steps {
        sa_step_multimove(&mut run, learner, rng)?;
        if run.t % every == 0 || run.t == spec.steps {
            let acceptance = learner.take_acceptance();
            observe(&Progress {
                step: run.t,
                params: &run.params,
                gamma: spec.schedule.gamma(run.t),
                field_norm: run.last_field_norm,
                acceptance,
            })?;
        }
    }
    Ok(run)
}

/// Running acceptance tally.
#[derive(Clone, Copy, Debug, Default)]
pub struct AcceptTally {
    pub accepted: u64,
    pub proposed: u64,
}

impl AcceptTally {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    pub fn take(&mut self) -> Option<f64> {
        if self.proposed == 0 {
            return None;
        }
        let r = self.accepted as f64 / self.proposed as f64;
        *self = AcceptTally::default();
        Some(r)
    }
}
