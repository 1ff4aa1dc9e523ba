//! Stochastic approximation: `lambda_t = lambda_{t-1} + gamma_t F(z_t; lambda_{t-1})`
//! with `z_t` drawn by a Markov transition that leaves `p(.; lambda)` invariant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{ParamVector, RngStream};

pub const DIVERGENCE_LIMIT: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `gamma_0` up to `warmup`, then `gamma_0 (warmup / t)^a`.
    ConstantThenDecay,
    /// `gamma_0` up to `warmup`, then `gamma_0 (t - warmup)^-a`.
    Polynomial,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaSchedule {
    pub kind: ScheduleKind,
    pub gamma0: f64,
    pub warmup: u64,
    pub exponent: f64,
}

impl Default for SaSchedule {
    fn default() -> Self {
        SaSchedule {
            kind: ScheduleKind::ConstantThenDecay,
            gamma0: 0.1,
            warmup: 2000,
            exponent: 1.0,
        }
    }
}

/// Validated schedule. The decay exponent must lie in `(0.5, 1]` so that
/// `sum gamma_t` diverges while `sum gamma_t^2` converges.
pub fn make_schedule(kind: ScheduleKind, gamma0: f64, warmup: u64, exponent: f64) -> Result<SaSchedule> {
    let s = SaSchedule {
        kind,
        gamma0,
        warmup,
        exponent,
    };
    s.validate()?;
    Ok(s)
}

impl SaSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0 > 0.0) || !self.gamma0.is_finite() {
            return Err(Error::Schedule(format!("gamma0 must be positive, got {}", self.gamma0)));
        }
        if !(self.exponent > 0.5 && self.exponent <= 1.0) {
            return Err(Error::Schedule(format!(
                "decay exponent {} outside (0.5, 1]: sum of squared steps would diverge or steps would not decay",
                self.exponent
            )));
        }
        Ok(())
    }

    /// Step size at `t >= 1`.
    pub fn gamma(&self, t: u64) -> f64 {
        let t = t.max(1);
        if t <= self.warmup {
            return self.gamma0;
        }
        match self.kind {
            ScheduleKind::Polynomial => self.gamma0 * ((t - self.warmup) as f64).powf(-self.exponent),
            ScheduleKind::ConstantThenDecay => {
                let w = self.warmup.max(1) as f64;
                self.gamma0 * (w / t as f64).powf(self.exponent)
            }
        }
    }
}

/// A root-finding problem `E_{z ~ p(.; lambda)} F(z; lambda) = 0`.
pub trait SaProblem {
    type State;

    /// Per-step hook before the moves, given the upcoming step index.
    fn begin_step(&mut self, _t: u64, _params: &ParamVector, _rng: &mut RngStream) -> Result<()> {
        Ok(())
    }

    /// Advances the chain state with a kernel invariant for `p(.; lambda)`.
    fn transition(&mut self, params: &ParamVector, state: &mut Self::State, rng: &mut RngStream) -> Result<()>;

    /// Field estimate `F(z; lambda)` at the current state, laid out like `params`.
    fn field(&mut self, params: &ParamVector, state: &Self::State, rng: &mut RngStream) -> Result<ParamVector>;
}

/// SA iteration state. The chain state persists across steps.
#[derive(Clone, Debug)]
pub struct SaRun<S> {
    pub params: ParamVector,
    pub t: u64,
    pub schedule: SaSchedule,
    pub state: S,
    pub moves: usize,
    pub clip: Option<f64>,
    pub last_field_norm: f64,
    pub last_update_norm: f64,
}

impl<S> SaRun<S> {
    pub fn new(params: ParamVector, schedule: SaSchedule, state: S, moves: usize) -> Result<Self> {
        schedule.validate()?;
        if moves == 0 {
            return Err(Error::invalid("moves per SA step must be at least 1"));
        }
        Ok(SaRun {
            params,
            t: 0,
            schedule,
            state,
            moves,
            clip: None,
            last_field_norm: 0.0,
            last_update_norm: 0.0,
        })
    }

    pub fn with_clip(mut self, clip: Option<f64>) -> Self {
        self.clip = clip;
        self
    }

    fn apply(&mut self, mut field: ParamVector) -> Result<()> {
        let t = self.t + 1;
        let gamma = self.schedule.gamma(t);
        if let Some(c) = self.clip {
            let n = field.norm2();
            if n > c {
                field.scale(c / n);
            }
        }
        self.last_field_norm = field.norm2();
        let finite = field.as_slice().iter().all(|v| v.is_finite());
        let norm = gamma * field.norm_inf();
        if !finite || !norm.is_finite() || norm > DIVERGENCE_LIMIT {
            return Err(Error::Diverged {
                step: t,
                norm: if finite { norm } else { f64::INFINITY },
            });
        }
        self.params.axpy(gamma, &field);
        self.last_update_norm = norm;
        self.t = t;
        Ok(())
    }
}

/// One transition followed by one update.
pub fn sa_step<P: SaProblem>(run: &mut SaRun<P::State>, problem: &mut P, rng: &mut RngStream) -> Result<()> {
    problem.begin_step(run.t + 1, &run.params, rng)?;
    problem.transition(&run.params, &mut run.state, rng)?;
    let f = problem.field(&run.params, &run.state, rng)?;
    run.apply(f)
}

/// `run.moves` chained transitions; the update uses the mean field over the
/// visited states.
pub fn sa_step_multimove<P: SaProblem>(
    run: &mut SaRun<P::State>,
    problem: &mut P,
    rng: &mut RngStream,
) -> Result<()> {
    problem.begin_step(run.t + 1, &run.params, rng)?;
    let mut acc = run.params.zeros_like();
    for _ in 0..run.moves {
        problem.transition(&run.params, &mut run.state, rng)?;
        let f = problem.field(&run.params, &run.state, rng)?;
        acc.axpy(1.0, &f);
    }
    acc.scale(1.0 / run.moves as f64);
    run.apply(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Mean {
        mu: f64,
    }

    impl SaProblem for Mean {
        type State = ();
        fn transition(&mut self, _: &ParamVector, _: &mut (), _: &mut RngStream) -> Result<()> {
            Ok(())
        }
        fn field(&mut self, p: &ParamVector, _: &(), _: &mut RngStream) -> Result<ParamVector> {
            let mut f = p.zeros_like();
            f.as_mut_slice()[0] = self.mu - p.as_slice()[0];
            Ok(f)
        }
    }

    fn scalar(v: f64) -> ParamVector {
        let mut p = ParamVector::new();
        p.add("lambda", vec![1], vec![v]).unwrap();
        p
    }

    #[test]
    fn schedule_examples() {
        let s = make_schedule(ScheduleKind::Polynomial, 1.0, 0, 1.0).unwrap();
        for t in 1..50 {
            assert!((s.gamma(t) - 1.0 / t as f64).abs() < 1e-15);
        }
        let s = make_schedule(ScheduleKind::Polynomial, 0.3, 100, 0.7).unwrap();
        assert_eq!(s.gamma(100), 0.3);
        assert!(s.gamma(101) <= 0.3);
        assert!(make_schedule(ScheduleKind::Polynomial, 1.0, 0, 0.4).is_err());
        assert!(make_schedule(ScheduleKind::ConstantThenDecay, 1.0, 0, 1.2).is_err());
        let c = make_schedule(ScheduleKind::ConstantThenDecay, 1.0, 0, 1.0).unwrap();
        assert!((c.gamma(4) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn robbins_monro_mean() {
        let s = make_schedule(ScheduleKind::Polynomial, 1.0, 0, 1.0).unwrap();
        let mut run = SaRun::new(scalar(5.0), s, (), 1).unwrap();
        let mut rng = RngStream::new(0);
        let mut p = Mean { mu: -1.5 };
        for _ in 0..100_000 {
            sa_step(&mut run, &mut p, &mut rng).unwrap();
        }
        assert!((run.params.as_slice()[0] + 1.5).abs() <= 1e-3);
    }

    #[test]
    fn guard_trips() {
        let s = make_schedule(ScheduleKind::Polynomial, 1.0, 10, 1.0).unwrap();
        let mut run = SaRun::new(scalar(0.0), s, (), 1).unwrap();
        let mut p = Mean { mu: 5e3 };
        let err = sa_step(&mut run, &mut p, &mut RngStream::new(0)).unwrap_err();
        assert!(matches!(err, Error::Diverged { step: 1, .. }));
        assert_eq!(run.params.as_slice()[0], 0.0);
    }
}
