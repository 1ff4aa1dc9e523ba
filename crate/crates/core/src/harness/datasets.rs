//! Synthetic datasets drawn from known generators.

use serde::{Deserialize, Serialize};

use crate::dists::{binary_state, DiagGaussian, FactorialBernoulli, TableDist};
use crate::error::{Error, Result};
use crate::learn::Dataset;
use crate::models::{Domain, LatentModel, NeuralRf, Potential, Sbn};
use crate::num::{log_sum_exp, Activation, MlpSpec, ParamVector, RngStream};
use crate::oracle::{marginal_table, nrf_table, Density, GridSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Sigmoid belief network with 6 visible and 4 hidden units.
    SbnD6H4,
    /// Equal mixture of two isotropic Gaussians in the plane.
    Mixture2d,
    /// Binary random field over 6 units with an MLP potential.
    BinaryFieldD6,
    /// Two-mode distribution over 4 binary units.
    TwoModeD4,
    /// Standard normal in one dimension.
    Normal1d,
    /// Standard normal in two dimensions.
    Normal2d,
}

impl Family {
    pub fn domain(self) -> Domain {
        match self {
            Family::SbnD6H4 | Family::BinaryFieldD6 => Domain::Binary(6),
            Family::TwoModeD4 => Domain::Binary(4),
            Family::Mixture2d | Family::Normal2d => Domain::Real(2),
            Family::Normal1d => Domain::Real(1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub family: Family,
    pub n: usize,
    pub seed: u64,
}

const TRUTH_SEED: u64 = 0x5eed_7275_7468;

/// Oracle-evaluable ground truth of a dataset.
#[derive(Clone, Debug)]
pub enum Truth {
    Sbn { model: Sbn, params: ParamVector },
    Field { nrf: NeuralRf, params: ParamVector },
    Table { dim: usize, dist: TableDist },
    Mixture { weights: Vec<f64>, comps: Vec<DiagGaussian> },
}

impl Truth {
    pub fn for_family(family: Family) -> Result<Truth> {
        let mut rng = RngStream::new(TRUTH_SEED);
        Ok(match family {
            Family::SbnD6H4 => {
                let model = Sbn::new(6, vec![4], "truth")?;
                let mut params = ParamVector::new();
                model.init(&mut rng, &mut params)?;
                for v in params.get_mut("truth.w0")?.iter_mut() {
                    *v = 4.0 * rng.uniform() - 2.0;
                }
                for v in params.get_mut("truth.b0")?.iter_mut() {
                    *v = 2.0 * rng.uniform() - 1.0;
                }
                for v in params.get_mut("truth.prior")?.iter_mut() {
                    *v = 2.0 * rng.uniform() - 1.0;
                }
                Truth::Sbn { model, params }
            }
            Family::BinaryFieldD6 => {
                let spec = MlpSpec::uniform(vec![6, 8, 1], Activation::Tanh, Activation::Identity)?;
                let nrf = NeuralRf::new(Potential::Mlp(spec), Domain::Binary(6), false, "truth")?;
                let mut params = ParamVector::new();
                nrf.init(&mut rng, &mut params)?;
                for v in params.as_mut_slice().iter_mut() {
                    *v = 1.5 * rng.normal();
                }
                Truth::Field { nrf, params }
            }
            Family::TwoModeD4 => {
                let a = FactorialBernoulli::new(vec![0.9; 4]);
                let b = FactorialBernoulli::new(vec![0.1; 4]);
                let lw: Vec<f64> = (0..16)
                    .map(|i| {
                        let x = binary_state(i, 4);
                        log_sum_exp(&[a.log_prob(&x).unwrap(), b.log_prob(&x).unwrap()]) - 2f64.ln()
                    })
                    .collect();
                Truth::Table {
                    dim: 4,
                    dist: TableDist::from_log_weights(&lw)?,
                }
            }
            Family::Mixture2d => Truth::Mixture {
                weights: vec![0.5, 0.5],
                comps: vec![
                    DiagGaussian::new(vec![-2.0, 0.0], vec![0.5f64.ln(); 2])?,
                    DiagGaussian::new(vec![2.0, 0.0], vec![0.5f64.ln(); 2])?,
                ],
            },
            Family::Normal1d => Truth::Mixture {
                weights: vec![1.0],
                comps: vec![DiagGaussian::new(vec![0.0], vec![0.0])?],
            },
            Family::Normal2d => Truth::Mixture {
                weights: vec![1.0],
                comps: vec![DiagGaussian::new(vec![0.0; 2], vec![0.0; 2])?],
            },
        })
    }

    pub fn domain(&self) -> Domain {
        match self {
            Truth::Sbn { model, .. } => model.obs(),
            Truth::Field { nrf, .. } => nrf.domain,
            Truth::Table { dim, .. } => Domain::Binary(*dim),
            Truth::Mixture { comps, .. } => Domain::Real(comps[0].dim()),
        }
    }

    pub fn sample(&self, rng: &mut RngStream, table: Option<&TableDist>) -> Result<Vec<f64>> {
        Ok(match self {
            Truth::Sbn { model, params } => model.generate(params, rng),
            Truth::Field { .. } | Truth::Table { .. } => {
                let owned;
                let t = match table {
                    Some(t) => t,
                    None => {
                        owned = self.table()?;
                        &owned
                    }
                };
                binary_state(t.sample(rng), self.domain().dim())
            }
            Truth::Mixture { weights, comps } => {
                let k = TableDist::new(weights.clone())?.sample(rng);
                comps[k].sample(rng)
            }
        })
    }

    /// Exact pmf for binary truths.
    pub fn table(&self) -> Result<TableDist> {
        match self {
            Truth::Sbn { model, params } => marginal_table(model, params),
            Truth::Field { nrf, params } => nrf_table(nrf, params),
            Truth::Table { dist, .. } => Ok(dist.clone()),
            Truth::Mixture { .. } => Err(Error::invalid("continuous truth has no table")),
        }
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        match self {
            Truth::Mixture { weights, comps } => {
                let terms: Vec<f64> = weights
                    .iter()
                    .zip(comps)
                    .map(|(w, c)| Ok(w.ln() + c.log_prob(x)?))
                    .collect::<Result<_>>()?;
                Ok(log_sum_exp(&terms))
            }
            _ => Ok(self.table()?.log_prob(crate::dists::binary_index(x))?),
        }
    }

    /// Grid used to integrate continuous truths.
    pub fn grid(&self) -> Result<GridSpec> {
        match self.domain() {
            Domain::Real(1) => GridSpec::new(vec![(-8.0, 8.0)], 1024),
            Domain::Real(2) => GridSpec::new(vec![(-6.0, 6.0), (-6.0, 6.0)], 160),
            _ => Err(Error::invalid("grid needs a continuous truth")),
        }
    }

    /// Density for the oracle: a table or log-density on [`Truth::grid`].
    pub fn density(&self) -> Result<Density> {
        match self.domain() {
            Domain::Binary(_) => Ok(Density::Table(self.table()?)),
            Domain::Real(_) => {
                let grid = self.grid()?;
                Density::grid_from_fn(grid, |x| self.log_density(x).unwrap_or(f64::NEG_INFINITY))
            }
        }
    }

    pub fn mean(&self) -> Result<Vec<f64>> {
        match self {
            Truth::Mixture { weights, comps } => {
                let d = comps[0].dim();
                let mut m = vec![0.0; d];
                for (w, c) in weights.iter().zip(comps) {
                    for (a, b) in m.iter_mut().zip(c.mean()) {
                        *a += w * b;
                    }
                }
                Ok(m)
            }
            _ => {
                let t = self.table()?;
                let d = self.domain().dim();
                Ok((0..d)
                    .map(|j| t.mean_of(|i| binary_state(i, d)[j]))
                    .collect())
            }
        }
    }
}

/// Samples `spec.n` points from the family's ground truth.
pub fn make_dataset(spec: &DatasetSpec) -> Result<(Dataset, Truth)> {
    let truth = Truth::for_family(spec.family)?;
    let mut rng = RngStream::new(spec.seed).split(0xda7a);
    let table = match truth {
        Truth::Field { .. } | Truth::Table { .. } => Some(truth.table()?),
        _ => None,
    };
    let xs = (0..spec.n)
        .map(|_| truth.sample(&mut rng, table.as_ref()))
        .collect::<Result<_>>()?;
    Ok((Dataset::new(truth.domain(), xs)?, truth))
}
