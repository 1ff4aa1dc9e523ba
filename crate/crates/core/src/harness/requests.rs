//! One-shot oracle queries for the command line.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{json, Value};

use crate::dists::TableDist;
use crate::error::{Error, Result};
use crate::estimators::{elbo_exact, gap_decompose, iw_lb_exact};
use crate::harness::build::Built;
use crate::harness::config::ExperimentConfig;
use crate::harness::datasets::{Family, Truth};
use crate::learn::adversarial::{conjugate_identity_residual, FDivSpec};
use crate::models::io::Checkpoint;
use crate::num::ParamVector;
use crate::oracle::{enumerate_log_z, exact_divergence, exact_marginal, exact_posterior, Density, DivKind};

fn default_k() -> Vec<usize> {
    vec![1, 2, 3]
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleRequest {
    /// Probabilities of a binary ground-truth family.
    TruthTable { family: Family },
    /// `D(p || q)` for two pmfs; `kind` is kl, reverse_kl, js, sym_kl or a
    /// registered f-divergence name.
    Divergence { p: Vec<f64>, q: Vec<f64>, kind: String },
    /// Worst `|f**(u) - f(u)|` on the standard u-grid.
    ConjugateCheck { f: String },
    /// `log p(x)` under a directed checkpoint.
    Marginal { checkpoint: PathBuf, x: Vec<f64> },
    /// Exact posterior over binary latents.
    Posterior { checkpoint: PathBuf, x: Vec<f64> },
    /// Exact ELBO, IW bounds and `log p(x)`.
    Bounds {
        checkpoint: PathBuf,
        x: Vec<f64>,
        #[serde(default = "default_k")]
        k: Vec<usize>,
    },
    /// Inference, approximation and amortization gaps at `x`.
    Gaps { checkpoint: PathBuf, x: Vec<f64> },
    /// Exact `log Z` of a random-field checkpoint over a binary domain.
    LogZ { checkpoint: PathBuf },
}

impl OracleRequest {
    /// Accepts inline JSON or a path to a JSON file.
    pub fn parse(arg: &str) -> Result<Self> {
        let text = if arg.trim_start().starts_with('{') {
            arg.to_string()
        } else {
            std::fs::read_to_string(arg)?
        };
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("request: {e}")))
    }
}

fn load(path: &Path) -> Result<(Built, ParamVector)> {
    let ck = Checkpoint::load(path)?;
    let source = ck
        .config
        .clone()
        .ok_or_else(|| Error::invalid("checkpoint carries no experiment config"))?;
    let cfg = ExperimentConfig::from_value(source)?;
    Ok((Built::new(&cfg)?, ck.params()?))
}

fn div_kind(name: &str) -> Result<DivKind> {
    Ok(match name {
        "kl" => DivKind::Kl,
        "reverse_kl" => DivKind::ReverseKl,
        "js" => DivKind::Js,
        "sym_kl" => DivKind::SymKl,
        other => DivKind::F(FDivSpec::by_name(other)?),
    })
}

pub fn answer(req: &OracleRequest) -> Result<Value> {
    Ok(match req {
        OracleRequest::TruthTable { family } => {
            let t = Truth::for_family(*family)?.table()?;
            json!({ "family": family, "probs": t.probs() })
        }
        OracleRequest::Divergence { p, q, kind } => {
            let (p, q) = (TableDist::new(p.clone())?, TableDist::new(q.clone())?);
            let v = exact_divergence(&Density::Table(p), &Density::Table(q), &div_kind(kind)?)?;
            json!({ "kind": kind, "value": v })
        }
        OracleRequest::ConjugateCheck { f } => {
            let r = conjugate_identity_residual(&FDivSpec::by_name(f)?)?;
            json!({ "f": f, "residual": r })
        }
        OracleRequest::Marginal { checkpoint, x } => {
            let (b, p) = load(checkpoint)?;
            let (m, _) = directed(&b)?;
            json!({ "log_marginal": exact_marginal(m, &p, x)? })
        }
        OracleRequest::Posterior { checkpoint, x } => {
            let (b, p) = load(checkpoint)?;
            let (m, _) = directed(&b)?;
            json!({ "probs": exact_posterior(m, &p, x)?.probs() })
        }
        OracleRequest::Bounds { checkpoint, x, k } => {
            let (b, p) = load(checkpoint)?;
            let (m, e) = directed(&b)?;
            let iw: Vec<Value> = k
                .iter()
                .map(|&k| Ok(json!({ "k": k, "value": iw_lb_exact(m, e, &p, x, k)? })))
                .collect::<Result<_>>()?;
            json!({
                "elbo": elbo_exact(m, e, &p, x)?,
                "iw_lb": iw,
                "log_marginal": exact_marginal(m, &p, x)?,
            })
        }
        OracleRequest::Gaps { checkpoint, x } => {
            let (b, p) = load(checkpoint)?;
            let (m, e) = directed(&b)?;
            let g = gap_decompose(m, e, &p, x)?;
            json!({
                "log_marginal": g.log_marginal,
                "inference": g.inference,
                "approximation": g.approximation,
                "amortization": g.amortization,
            })
        }
        OracleRequest::LogZ { checkpoint } => {
            let (b, p) = load(checkpoint)?;
            match &b {
                Built::Field { nrf, .. } => {
                    json!({ "log_z": enumerate_log_z(nrf, &p)? })
                }
                _ => return Err(Error::invalid("log_z needs a random-field checkpoint")),
            }
        }
    })
}

fn directed(b: &Built) -> Result<(&dyn crate::models::LatentModel, &dyn crate::models::Encoder)> {
    match b {
        Built::Directed { model, enc } => Ok((model.as_latent(), enc.as_encoder())),
        _ => Err(Error::invalid("this request needs a directed-model checkpoint with an explicit encoder")),
    }
}
