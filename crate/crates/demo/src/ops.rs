use sagl::dists::{binary_state, FactorialBernoulli, TableDist};
use sagl::estimators::{elbo_exact, iw_lb_exact};
use sagl::harness::datasets::{make_dataset, DatasetSpec, Family, Truth};
use sagl::learn::adversarial::{Critic, FDivSpec, ThetaLoss, Vdm, VdmConfig, VdmGenerator};
use sagl::learn::{drive, RunSpec};
use sagl::models::{BernoulliEncoder, Encoder, LatentModel, Sbn};
use sagl::num::{ParamVector, RngStream};
use sagl::oracle::{exact_divergence, exact_marginal, Density, DivKind};
use sagl::{Error, Result};

pub const MAX_K: usize = 4;
pub const MAX_STEPS: u64 = 50_000;

fn two_mode() -> Result<TableDist> {
    Truth::for_family(Family::TwoModeD4)?.table()
}

fn div_kind(kind: &str) -> Result<DivKind> {
    match kind {
        "js" => Ok(DivKind::Js),
        other => Ok(DivKind::F(FDivSpec::by_name(other)?)),
    }
}

pub fn lambda_at(i: usize, points: usize) -> f64 {
    (i + 1) as f64 / (points + 1) as f64
}

pub fn divergence_curve(kind: &str, points: usize) -> Result<Vec<f64>> {
    if points == 0 || points > 1000 {
        return Err(Error::invalid("points must be in 1..=1000"));
    }
    let p0 = Density::Table(two_mode()?);
    let div = div_kind(kind)?;
    (0..points)
        .map(|i| {
            let q = FactorialBernoulli::new(vec![lambda_at(i, points); 4]);
            let probs = (0..16).map(|s| q.log_prob(&binary_state(s, 4)).map(f64::exp)).collect::<Result<_>>()?;
            exact_divergence(&p0, &Density::Table(TableDist::new(probs)?), &div)
        })
        .collect()
}

pub fn bound_chain(seed: u64, k_max: usize) -> Result<Vec<f64>> {
    if k_max == 0 || k_max > MAX_K {
        return Err(Error::invalid(format!("k_max must be in 1..={MAX_K}")));
    }
    let mut rng = RngStream::new(seed);
    let model = Sbn::new(5, vec![3], "theta")?;
    let enc = BernoulliEncoder::linear(5, 3, "phi")?;
    let mut params = ParamVector::new();
    model.init(&mut rng, &mut params)?;
    enc.init(&mut rng, &mut params)?;
    for v in params.as_mut_slice() {
        *v += rng.normal();
    }
    let x: Vec<f64> = (0..5).map(|_| if rng.uniform() < 0.5 { 1.0 } else { 0.0 }).collect();
    let mut out = vec![elbo_exact(&model, &enc, &params, &x)?];
    for k in 1..=k_max {
        out.push(iw_lb_exact(&model, &enc, &params, &x, k)?);
    }
    out.push(exact_marginal(&model, &params, &x)?);
    Ok(out)
}

pub fn vdm_run(kind: &str, steps: u64, seed: u64) -> Result<Vec<f64>> {
    if steps == 0 || steps > MAX_STEPS {
        return Err(Error::invalid(format!("steps must be in 1..={MAX_STEPS}")));
    }
    let (data, truth) = make_dataset(&DatasetSpec {
        family: Family::TwoModeD4,
        n: 2000,
        seed,
    })?;
    let p0 = truth.density()?;
    let gen = VdmGenerator::Table {
        dim: 4,
        prefix: "theta".into(),
    };
    let critic = Critic::mlp(4, 16, "psi")?;
    let cfg = VdmConfig {
        fspec: FDivSpec::by_name(kind)?,
        theta_loss: ThetaLoss::Saturating,
        critic_steps: 5,
    };
    let mut vdm = Vdm::new(cfg, &gen, &critic, &data)?;
    let root = RngStream::new(seed);
    let mut params = ParamVector::new();
    let mut init = root.split(1);
    gen.init(&mut init, &mut params)?;
    critic.init(&mut init, &mut params)?;
    let spec = RunSpec {
        steps,
        log_every: (steps / 25).max(1),
        ..RunSpec::default()
    };
    let mut rows = Vec::new();
    let mut observe = |p: &sagl::learn::Progress| -> Result<()> {
        let q = Density::Table(gen.table(p.params)?);
        rows.extend([
            p.step as f64,
            exact_divergence(&p0, &q, &DivKind::Kl)?,
            exact_divergence(&q, &p0, &DivKind::Kl)?,
        ]);
        Ok(())
    };
    drive(&mut vdm, params, &spec, &mut root.split(2), &mut observe)?;
    Ok(rows)
}
