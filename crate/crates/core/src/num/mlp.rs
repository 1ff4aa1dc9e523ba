use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::params::ParamVector;
use crate::num::rng::RngStream;
use crate::num::tape::{Tape, Var};
use crate::num::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
    Softplus,
}

/// Layer widths `[input, hidden.., output]` and one activation per layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        let spec = MlpSpec { widths, activations };
        spec.validate()?;
        Ok(spec)
    }

    /// `hidden` activation on every layer but the last, `output` on the last.
    pub fn uniform(widths: Vec<usize>, hidden: Activation, output: Activation) -> Result<Self> {
        let n = widths.len().saturating_sub(1);
        let mut acts = vec![hidden; n];
        if let Some(last) = acts.last_mut() {
            *last = output;
        }
        Self::new(widths, acts)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::invalid("MlpSpec needs at least one layer"));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("MlpSpec widths must be positive"));
        }
        if self.activations.len() != self.widths.len() - 1 {
            return Err(Error::invalid(format!(
                "MlpSpec has {} layers but {} activations",
                self.widths.len() - 1,
                self.activations.len()
            )));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn weight_name(prefix: &str, layer: usize) -> String {
        format!("{prefix}.w{layer}")
    }

    pub fn bias_name(prefix: &str, layer: usize) -> String {
        format!("{prefix}.b{layer}")
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(&self, prefix: &str, rng: &mut RngStream, params: &mut ParamVector) -> Result<()> {
        for l in 0..self.layers() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = (0..fan_in * fan_out)
                .map(|_| (2.0 * rng.uniform() - 1.0) * s)
                .collect();
            params.add(Self::weight_name(prefix, l), vec![fan_out, fan_in], w)?;
            params.add(Self::bias_name(prefix, l), vec![fan_out], vec![0.0; fan_out])?;
        }
        Ok(())
    }

    /// Differentiable forward pass on a tape.
    pub fn forward(&self, t: &mut Tape, params: &ParamVector, prefix: &str, input: Var) -> Var {
        let mut h = input;
        for l in 0..self.layers() {
            let w = t.param(params, &Self::weight_name(prefix, l));
            let b = t.param(params, &Self::bias_name(prefix, l));
            let a = t.affine(w, b, h);
            h = match self.activations[l] {
                Activation::Identity => a,
                Activation::Sigmoid => t.sigmoid(a),
                Activation::Tanh => t.tanh(a),
                Activation::Softplus => t.softplus(a),
            };
        }
        h
    }

    /// Forward pass without a tape. Panics on missing parameters.
    pub fn eval(&self, params: &ParamVector, prefix: &str, input: &[f64]) -> Vec<f64> {
        let mut h = input.to_vec();
        for l in 0..self.layers() {
            let w = params
                .get(&Self::weight_name(prefix, l))
                .expect("mlp weight registered");
            let b = params
                .get(&Self::bias_name(prefix, l))
                .expect("mlp bias registered");
            let cols = h.len();
            h = b
                .iter()
                .enumerate()
                .map(|(r, &bias)| {
                    let row = &w[r * cols..(r + 1) * cols];
                    let a = bias + row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
                    match self.activations[l] {
                        Activation::Identity => a,
                        Activation::Sigmoid => crate::num::sigmoid(a),
                        Activation::Tanh => a.tanh(),
                        Activation::Softplus => crate::num::softplus(a),
                    }
                })
                .collect();
        }
        h
    }
}

/// Plain forward pass on a rank-1 input.
pub fn mlp_forward(spec: &MlpSpec, params: &ParamVector, prefix: &str, input: &Tensor) -> Result<Tensor> {
    if input.len() != spec.input_width() {
        return Err(Error::Shape {
            context: "mlp_forward input",
            expected: spec.input_width(),
            actual: input.len(),
        });
    }
    let mut t = Tape::new();
    let x = t.constant(input.data().to_vec());
    let y = spec.forward(&mut t, params, prefix, x);
    t.check()?;
    Ok(Tensor::vector(t.value(y).to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_sigmoid_gives_half() {
        let spec = MlpSpec::uniform(vec![3, 4, 2], Activation::Tanh, Activation::Sigmoid).unwrap();
        let mut p = ParamVector::new();
        spec.init("m", &mut RngStream::new(0), &mut p).unwrap();
        p.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        let y = mlp_forward(&spec, &p, "m", &Tensor::vector(vec![1.0, -2.0, 0.5])).unwrap();
        assert_eq!(y.data(), &[0.5, 0.5]);
    }

    #[test]
    fn identity_network_is_identity() {
        let spec = MlpSpec::uniform(vec![3, 3], Activation::Identity, Activation::Identity).unwrap();
        let mut p = ParamVector::new();
        spec.init("m", &mut RngStream::new(0), &mut p).unwrap();
        let w = p.get_mut("m.w0").unwrap();
        w.iter_mut().enumerate().for_each(|(i, v)| *v = if i % 4 == 0 { 1.0 } else { 0.0 });
        let x = Tensor::vector(vec![0.3, -1.0, 2.0]);
        assert_eq!(mlp_forward(&spec, &p, "m", &x).unwrap().data(), x.data());
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(MlpSpec::new(vec![3], vec![]).is_err());
        assert!(MlpSpec::new(vec![3, 0], vec![Activation::Identity]).is_err());
        assert!(MlpSpec::new(vec![3, 2], vec![]).is_err());
        let spec = MlpSpec::uniform(vec![3, 2], Activation::Tanh, Activation::Identity).unwrap();
        let mut p = ParamVector::new();
        spec.init("m", &mut RngStream::new(0), &mut p).unwrap();
        assert!(mlp_forward(&spec, &p, "m", &Tensor::vector(vec![1.0])).is_err());
    }
}
