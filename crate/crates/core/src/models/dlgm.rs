use serde::{Deserialize, Serialize};

use crate::dists::StdNormal;
use crate::error::{Error, Result};
use crate::models::{check_caps, Domain, LatentModel};
use crate::num::{MlpSpec, ParamVector, RngStream, Tape, Var};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// One Gaussian layer `h_l = T_l(h_{l+1}) + G_l xi_l`.
///
/// With `full_g` the matrix `G_l` is read as a lower-triangular factor
/// (entries above the diagonal are ignored); otherwise only its diagonal is
/// stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DlgmLayer {
    pub t: MlpSpec,
    #[serde(default)]
    pub full_g: bool,
}

impl DlgmLayer {
    pub fn out_dim(&self) -> usize {
        self.t.output_width()
    }
}

/// Deep latent Gaussian model: standard-normal top layer, Gaussian layers
/// below, the last layer emitting `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dlgm {
    pub layers: Vec<DlgmLayer>,
    pub prefix: String,
}

impl Dlgm {
    pub fn new(layers: Vec<DlgmLayer>, prefix: impl Into<String>) -> Result<Self> {
        if layers.is_empty() || layers.len() > 2 {
            return Err(Error::invalid("Dlgm supports 1 or 2 layers"));
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].t.input_width() {
                return Err(Error::invalid("Dlgm layer widths do not chain"));
            }
        }
        let m = Dlgm {
            layers,
            prefix: prefix.into(),
        };
        check_caps(m.obs(), Some(m.latent()))?;
        Ok(m)
    }

    pub fn top_dim(&self) -> usize {
        self.layers[0].t.input_width()
    }

    fn t_prefix(&self, l: usize) -> String {
        format!("{}.t{l}", self.prefix)
    }

    pub fn g_name(&self, l: usize) -> String {
        format!("{}.g{l}", self.prefix)
    }

    /// Latent blocks `[top, intermediate..]` as (offset, width).
    fn blocks(&self) -> Vec<(usize, usize)> {
        let mut out = vec![(0, self.top_dim())];
        for l in &self.layers[..self.layers.len() - 1] {
            let (o, w) = *out.last().unwrap();
            out.push((o + w, l.out_dim()));
        }
        out
    }

    fn noise(&self, params: &ParamVector, l: usize, xi: &[f64]) -> Vec<f64> {
        let g = params.get(&self.g_name(l)).expect("dlgm G");
        let n = xi.len();
        if self.layers[l].full_g {
            (0..n)
                .map(|r| (0..=r).map(|c| g[r * n + c] * xi[c]).sum())
                .collect()
        } else {
            g.iter().zip(xi).map(|(a, b)| a * b).collect()
        }
    }

    /// `log N(v; mean, G G^T)` on the tape.
    fn layer_log_prob(&self, t: &mut Tape, params: &ParamVector, l: usize, mean: Var, v: Var) -> Var {
        let n = self.layers[l].out_dim();
        let g = t.param(params, &self.g_name(l));
        let d = t.sub(v, mean);
        let mut z: Vec<Var> = Vec::with_capacity(n);
        let mut acc = t.scalar(-0.5 * LN_2PI * n as f64);
        for r in 0..n {
            let gii_idx = if self.layers[l].full_g { r * n + r } else { r };
            let mut num = t.slice(d, r, 1);
            if self.layers[l].full_g {
                for (c, zc) in z.iter().enumerate() {
                    let grc = t.slice(g, r * n + c, 1);
                    let prod = t.mul(grc, *zc);
                    num = t.sub(num, prod);
                }
            }
            let gii = t.slice(g, gii_idx, 1);
            let zr = t.div(num, gii);
            let z2 = t.square(zr);
            let g2 = t.square(gii);
            let lg = t.log(g2);
            let term = t.scale_shift(z2, -0.5, 0.0);
            let half_lg = t.scale(lg, -0.5);
            let s = t.add(term, half_lg);
            acc = t.add(acc, s);
            z.push(zr);
        }
        acc
    }
}

impl LatentModel for Dlgm {
    fn obs(&self) -> Domain {
        Domain::Real(self.layers.last().unwrap().out_dim())
    }

    fn latent(&self) -> Domain {
        Domain::Real(self.blocks().iter().map(|b| b.1).sum())
    }

    fn prefix(&self) -> &str {
        &self.prefix
    }

    fn joint_log_prob_tape(&self, t: &mut Tape, params: &ParamVector, x: &[f64], h: Var) -> Var {
        let blocks = self.blocks();
        let top = t.slice(h, 0, blocks[0].1);
        let mut acc = StdNormal { dim: blocks[0].1 }.log_prob_tape(t, top);
        let mut upper = top;
        for l in 0..self.layers.len() {
            let mean = self.layers[l].t.forward(t, params, &self.t_prefix(l), upper);
            let v = if l + 1 < self.layers.len() {
                let (o, w) = blocks[l + 1];
                t.slice(h, o, w)
            } else {
                t.constant(x.to_vec())
            };
            let lp = self.layer_log_prob(t, params, l, mean, v);
            acc = t.add(acc, lp);
            upper = v;
        }
        acc
    }

    fn log_prior(&self, params: &ParamVector, h: &[f64]) -> Result<f64> {
        self.latent().check("Dlgm h", h)?;
        let blocks = self.blocks();
        let mut t = Tape::new();
        let hv = t.constant(h.to_vec());
        let top = t.slice(hv, 0, blocks[0].1);
        let mut acc = StdNormal { dim: blocks[0].1 }.log_prob_tape(&mut t, top);
        let mut upper = top;
        for l in 0..self.layers.len() - 1 {
            let mean = self.layers[l].t.forward(&mut t, params, &self.t_prefix(l), upper);
            let (o, w) = blocks[l + 1];
            let v = t.slice(hv, o, w);
            let lp = self.layer_log_prob(&mut t, params, l, mean, v);
            acc = t.add(acc, lp);
            upper = v;
        }
        t.check()?;
        Ok(t.scalar_value(acc))
    }

    fn generate_joint(&self, params: &ParamVector, rng: &mut RngStream) -> (Vec<f64>, Vec<f64>) {
        let mut h = rng.normals(self.top_dim());
        let mut cur = h.clone();
        for l in 0..self.layers.len() {
            let mean = self.layers[l].t.eval(params, &self.t_prefix(l), &cur);
            let xi = rng.normals(mean.len());
            let noise = self.noise(params, l, &xi);
            cur = mean.iter().zip(&noise).map(|(a, b)| a + b).collect();
            if l + 1 < self.layers.len() {
                h.extend(&cur);
            }
        }
        (cur, h)
    }

    fn init(&self, rng: &mut RngStream, params: &mut ParamVector) -> Result<()> {
        for (l, layer) in self.layers.iter().enumerate() {
            layer.t.init(&self.t_prefix(l), rng, params)?;
            let n = layer.out_dim();
            if layer.full_g {
                let eye = (0..n * n).map(|i| if i % (n + 1) == 0 { 1.0 } else { 0.0 }).collect();
                params.add(self.g_name(l), vec![n, n], eye)?;
            } else {
                params.add(self.g_name(l), vec![n], vec![1.0; n])?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::DiagGaussian;
    use crate::num::Activation;

    fn layer(full_g: bool) -> DlgmLayer {
        DlgmLayer {
            t: MlpSpec::new(vec![1, 2], vec![Activation::Identity]).unwrap(),
            full_g,
        }
    }

    #[test]
    fn diagonal_matches_gaussian_product() {
        let m = Dlgm::new(vec![layer(false)], "theta").unwrap();
        let mut p = ParamVector::new();
        m.init(&mut RngStream::new(3), &mut p).unwrap();
        p.get_mut("theta.g0").unwrap().copy_from_slice(&[0.5, 2.0]);
        let h = [0.3];
        let x = [1.0, -0.4];
        let mean = m.layers[0].t.eval(&p, "theta.t0", &h);
        let want = StdNormal { dim: 1 }.log_prob(&h).unwrap()
            + DiagGaussian::new(mean, vec![0.5f64.ln(), 2f64.ln()])
                .unwrap()
                .log_prob(&x)
                .unwrap();
        assert!((m.joint_log_prob(&p, &x, &h).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn full_identity_equals_diagonal_identity() {
        let a = Dlgm::new(vec![layer(false)], "theta").unwrap();
        let b = Dlgm::new(vec![layer(true)], "theta").unwrap();
        let (mut pa, mut pb) = (ParamVector::new(), ParamVector::new());
        a.init(&mut RngStream::new(1), &mut pa).unwrap();
        b.init(&mut RngStream::new(1), &mut pb).unwrap();
        let (x, h) = ([0.2, 0.9], [-1.0]);
        let la = a.joint_log_prob(&pa, &x, &h).unwrap();
        let lb = b.joint_log_prob(&pb, &x, &h).unwrap();
        assert!((la - lb).abs() < 1e-12);
        let mut rng = RngStream::new(5);
        let (x, h) = b.generate_joint(&pb, &mut rng);
        assert_eq!((x.len(), h.len()), (2, 1));
    }
}
