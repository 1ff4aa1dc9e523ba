use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{check_caps, Domain};
use crate::num::{ParamVector, RngStream, Tape, Var, MlpSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    /// Scalar-output perceptron.
    Mlp(MlpSpec),
    /// `sum_i (-exp(s_i) x_i^2 / 2 + m_i x_i)`.
    Quadratic,
}

/// Random field `p(x) = exp(u(x)) / Z`. With `with_c` the potential carries a
/// trainable log-normalizer estimate `c` and `u_hat(x) = u(x) - c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralRf {
    pub potential: Potential,
    pub domain: Domain,
    pub with_c: bool,
    pub prefix: String,
}

impl NeuralRf {
    pub fn new(potential: Potential, domain: Domain, with_c: bool, prefix: impl Into<String>) -> Result<Self> {
        check_caps(domain, None)?;
        if let Potential::Mlp(spec) = &potential {
            spec.validate()?;
            if spec.input_width() != domain.dim() || spec.output_width() != 1 {
                return Err(Error::invalid(format!(
                    "potential network must map width {} to a scalar",
                    domain.dim()
                )));
            }
        }
        Ok(NeuralRf {
            potential,
            domain,
            with_c,
            prefix: prefix.into(),
        })
    }

    pub fn c_name(&self) -> String {
        format!("{}.c", self.prefix)
    }

    pub fn init(&self, rng: &mut RngStream, params: &mut ParamVector) -> Result<()> {
        match &self.potential {
            Potential::Mlp(spec) => spec.init(&self.prefix, rng, params)?,
            Potential::Quadratic => {
                let d = self.domain.dim();
                params.add(format!("{}.s", self.prefix), vec![d], vec![0.0; d])?;
                params.add(format!("{}.m", self.prefix), vec![d], vec![0.0; d])?;
            }
        }
        if self.with_c {
            params.add(self.c_name(), vec![1], vec![0.0])?;
        }
        Ok(())
    }

    /// `u(x)`, or `u(x) - c` when the field carries `c`.
    pub fn potential_tape(&self, t: &mut Tape, params: &ParamVector, x: Var) -> Var {
        let u = match &self.potential {
            Potential::Mlp(spec) => spec.forward(t, params, &self.prefix, x),
            Potential::Quadratic => {
                let s = t.param(params, &format!("{}.s", self.prefix));
                let m = t.param(params, &format!("{}.m", self.prefix));
                let prec = t.exp(s);
                let x2 = t.square(x);
                let q = t.mul(prec, x2);
                let q = t.scale(q, -0.5);
                let l = t.mul(m, x);
                let a = t.add(q, l);
                t.sum(a)
            }
        };
        if self.with_c {
            let c = t.param(params, &self.c_name());
            t.sub(u, c)
        } else {
            u
        }
    }

    /// Plain potential value without domain checks.
    pub fn eval_unchecked(&self, params: &ParamVector, x: &[f64]) -> f64 {
        let u = match &self.potential {
            Potential::Mlp(spec) => spec.eval(params, &self.prefix, x)[0],
            Potential::Quadratic => {
                let s = params.get(&format!("{}.s", self.prefix)).expect("quadratic s");
                let m = params.get(&format!("{}.m", self.prefix)).expect("quadratic m");
                x.iter()
                    .enumerate()
                    .map(|(i, v)| -0.5 * s[i].exp() * v * v + m[i] * v)
                    .sum()
            }
        };
        if self.with_c {
            u - params.get(&self.c_name()).expect("c")[0]
        } else {
            u
        }
    }

    pub fn potential(&self, params: &ParamVector, x: &[f64]) -> Result<f64> {
        self.domain.check("NeuralRf::potential", x)?;
        let u = self.eval_unchecked(params, x);
        if !u.is_finite() {
            return Err(Error::NonFinite {
                primitive: "potential",
            });
        }
        Ok(u)
    }

    /// Gradient of the potential at `x`, laid out like `params`.
    pub fn potential_grad(&self, params: &ParamVector, x: &[f64]) -> Result<ParamVector> {
        self.domain.check("NeuralRf::potential_grad", x)?;
        let (_, g) = crate::num::grad(
            |t, p| {
                let xv = t.constant(x.to_vec());
                self.potential_tape(t, p, xv)
            },
            params,
        )?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::Activation;

    fn field(with_c: bool) -> (NeuralRf, ParamVector) {
        let spec = MlpSpec::uniform(vec![3, 4, 1], Activation::Tanh, Activation::Identity).unwrap();
        let rf = NeuralRf::new(Potential::Mlp(spec), Domain::Binary(3), with_c, "theta").unwrap();
        let mut p = ParamVector::new();
        rf.init(&mut RngStream::new(2), &mut p).unwrap();
        (rf, p)
    }

    #[test]
    fn zero_weights_flat() {
        let (rf, mut p) = field(false);
        p.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(rf.potential(&p, &[1.0, 0.0, 1.0]).unwrap(), 0.0);
        assert!(rf.potential(&p, &[0.5, 0.0, 1.0]).is_err());
        assert!(rf.potential(&p, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn c_shifts_potential() {
        let (rf, p) = field(false);
        let (rfc, mut pc) = field(true);
        pc.get_mut("theta.c").unwrap()[0] = 1.0;
        let x = [0.0, 1.0, 1.0];
        let a = rf.potential(&p, &x).unwrap();
        let b = rfc.potential(&pc, &x).unwrap();
        assert!((a - 1.0 - b).abs() < 1e-15);
    }
}
