//! Reverse-mode gradient tape over vector-valued nodes.
//!
//! Every objective evaluation records its own [`Tape`]: leaves are constants
//! or copies of [`ParamVector`] segments, interior nodes are primitives
//! (affine maps, elementwise nonlinearities, reductions). [`Tape::backward`]
//! returns adjoints for every node; parameter adjoints are scattered back
//! into a vector with the layout of the source parameters.

use crate::error::{Error, Result};
use crate::num::params::ParamVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Unary {
    Neg,
    Exp,
    Log,
    Sigmoid,
    LogSigmoid,
    Tanh,
    Softplus,
    Square,
    Log1mExp,
}

impl Unary {
    fn name(self) -> &'static str {
        match self {
            Unary::Neg => "neg",
            Unary::Exp => "exp",
            Unary::Log => "log",
            Unary::Sigmoid => "sigmoid",
            Unary::LogSigmoid => "log_sigmoid",
            Unary::Tanh => "tanh",
            Unary::Softplus => "softplus",
            Unary::Square => "square",
            Unary::Log1mExp => "log1mexp",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Neg => -x,
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Sigmoid => sigmoid(x),
            Unary::LogSigmoid => -softplus(-x),
            Unary::Tanh => x.tanh(),
            Unary::Softplus => softplus(x),
            Unary::Square => x * x,
            Unary::Log1mExp => log1mexp(x),
        }
    }

    /// dy/dx given input `x` and output `y`.
    fn deriv(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Neg => -1.0,
            Unary::Exp => y,
            Unary::Log => 1.0 / x,
            Unary::Sigmoid => y * (1.0 - y),
            Unary::LogSigmoid => sigmoid(-x),
            Unary::Tanh => 1.0 - y * y,
            Unary::Softplus => sigmoid(x),
            Unary::Square => 2.0 * x,
            Unary::Log1mExp => x.exp() / x.exp_m1(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

impl Binary {
    fn name(self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
            Binary::Div => "div",
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param,
    Unary { arg: usize, f: Unary },
    Binary { a: usize, b: usize, f: Binary },
    MatVec { w: usize, x: usize, cols: usize },
    Sum { arg: usize },
    Slice { arg: usize, start: usize },
    Concat { args: Vec<usize> },
    LogSumExp { arg: usize },
    Clamp { arg: usize, lo: f64, hi: f64 },
    ScaleShift { arg: usize, scale: f64 },
}

#[derive(Clone, Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

#[derive(Clone, Debug)]
enum TapeFault {
    NonFinite(&'static str),
    Shape {
        primitive: &'static str,
        expected: usize,
        actual: usize,
    },
}

#[derive(Default, Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(usize, Var)>,
    fault: Option<TapeFault>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(1 - e^x)` for `x < 0`.
pub fn log1mexp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, op: Op, primitive: &'static str) -> Var {
        if self.fault.is_none() && value.iter().any(|v| !v.is_finite()) {
            self.fault = Some(TapeFault::NonFinite(primitive));
        }
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn shape_fault(&mut self, primitive: &'static str, expected: usize, actual: usize) {
        if self.fault.is_none() {
            self.fault = Some(TapeFault::Shape {
                primitive,
                expected,
                actual,
            });
        }
    }

    /// First fault recorded while building the tape, if any.
    pub fn check(&self) -> Result<()> {
        match &self.fault {
            None => Ok(()),
            Some(TapeFault::NonFinite(p)) => Err(Error::NonFinite { primitive: p }),
            Some(TapeFault::Shape {
                primitive,
                expected,
                actual,
            }) => Err(Error::Shape {
                context: primitive,
                expected: *expected,
                actual: *actual,
            }),
        }
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn width(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Leaf, "constant")
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(vec![value])
    }

    /// Leaf holding a copy of the named segment; repeated requests share one node.
    pub fn param(&mut self, params: &ParamVector, name: &str) -> Var {
        let seg = match params.segment(name) {
            Ok(s) => s,
            Err(_) => panic!("tape: unknown parameter segment `{name}`"),
        };
        let offset = seg.offset;
        if let Some(&(_, v)) = self.params.iter().find(|(o, _)| *o == offset) {
            return v;
        }
        let value = params.as_slice()[seg.range()].to_vec();
        let v = self.push(value, Op::Param, "param");
        self.params.push((offset, v));
        v
    }

    /// Same value, no gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.push(value, Op::Leaf, "detach")
    }

    fn unary(&mut self, arg: Var, f: Unary) -> Var {
        let value = self.nodes[arg.0].value.iter().map(|&x| f.apply(x)).collect();
        self.push(value, Op::Unary { arg: arg.0, f }, f.name())
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Neg)
    }
    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Exp)
    }
    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Log)
    }
    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sigmoid)
    }
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Unary::LogSigmoid)
    }
    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Tanh)
    }
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Softplus)
    }
    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Square)
    }
    /// `log(1 - e^a)`, defined for `a < 0`.
    pub fn log1mexp(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Log1mExp)
    }

    fn binary(&mut self, a: Var, b: Var, f: Binary) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (na, nb) = (va.len(), vb.len());
        let n = na.max(nb);
        if na != nb && na != 1 && nb != 1 {
            self.shape_fault(f.name(), na, nb);
            return self.push(vec![0.0; n], Op::Leaf, f.name());
        }
        let value = (0..n)
            .map(|i| {
                let x = va[if na == 1 { 0 } else { i }];
                let y = vb[if nb == 1 { 0 } else { i }];
                match f {
                    Binary::Add => x + y,
                    Binary::Sub => x - y,
                    Binary::Mul => x * y,
                    Binary::Div => x / y,
                }
            })
            .collect();
        self.push(value, Op::Binary { a: a.0, b: b.0, f }, f.name())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Binary::Add)
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Binary::Sub)
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Binary::Mul)
    }
    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Binary::Div)
    }

    /// `scale * a + shift`.
    pub fn scale_shift(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let value = self.nodes[a.0].value.iter().map(|x| scale * x + shift).collect();
        self.push(value, Op::ScaleShift { arg: a.0, scale }, "scale_shift")
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.scale_shift(a, k, 0.0)
    }

    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        self.scale_shift(a, 1.0, c)
    }

    /// Row-major `w` (rows x len(x)) times `x`.
    pub fn matvec(&mut self, w: Var, x: Var, rows: usize) -> Var {
        let cols = self.nodes[x.0].value.len();
        if self.nodes[w.0].value.len() != rows * cols {
            let actual = self.nodes[w.0].value.len();
            self.shape_fault("matvec", rows * cols, actual);
            return self.push(vec![0.0; rows], Op::Leaf, "matvec");
        }
        let (wv, xv) = (&self.nodes[w.0].value, &self.nodes[x.0].value);
        let value = (0..rows)
            .map(|i| {
                wv[i * cols..(i + 1) * cols]
                    .iter()
                    .zip(xv)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        self.push(value, Op::MatVec { w: w.0, x: x.0, cols }, "matvec")
    }

    pub fn affine(&mut self, w: Var, b: Var, x: Var) -> Var {
        let rows = self.nodes[b.0].value.len();
        let y = self.matvec(w, x, rows);
        self.add(y, b)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.iter().sum();
        self.push(vec![s], Op::Sum { arg: a.0 }, "sum")
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.width(a) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let m = self.mul(a, b);
        self.sum(m)
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let n = self.width(a);
        if start + len > n {
            self.shape_fault("slice", start + len, n);
            return self.push(vec![0.0; len], Op::Leaf, "slice");
        }
        let value = self.nodes[a.0].value[start..start + len].to_vec();
        self.push(value, Op::Slice { arg: a.0, start }, "slice")
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let value = parts
            .iter()
            .flat_map(|p| self.nodes[p.0].value.iter().cloned())
            .collect();
        let args = parts.iter().map(|p| p.0).collect();
        self.push(value, Op::Concat { args }, "concat")
    }

    pub fn logsumexp(&mut self, a: Var) -> Var {
        let v = log_sum_exp(&self.nodes[a.0].value);
        self.push(vec![v], Op::LogSumExp { arg: a.0 }, "logsumexp")
    }

    /// Clamp into `[lo, hi]`; gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.nodes[a.0].value.iter().map(|x| x.clamp(lo, hi)).collect();
        self.push(value, Op::Clamp { arg: a.0, lo, hi }, "clamp")
    }

    /// Adjoints of every node with respect to the scalar `output`.
    pub fn backward(&self, output: Var) -> Gradients {
        let mut adj: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        adj[output.0].iter_mut().for_each(|g| *g = 1.0);
        for i in (0..=output.0).rev() {
            let g = std::mem::take(&mut adj[i]);
            if g.iter().all(|&v| v == 0.0) {
                adj[i] = g;
                continue;
            }
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf | Op::Param => {}
                Op::Unary { arg, f } => {
                    let x = &self.nodes[*arg].value;
                    for k in 0..g.len() {
                        adj[*arg][k] += g[k] * f.deriv(x[k], node.value[k]);
                    }
                }
                Op::Binary { a, b, f } => {
                    let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let (na, nb) = (va.len(), vb.len());
                    for k in 0..g.len() {
                        let ia = if na == 1 { 0 } else { k };
                        let ib = if nb == 1 { 0 } else { k };
                        let (x, y) = (va[ia], vb[ib]);
                        let (da, db) = match f {
                            Binary::Add => (1.0, 1.0),
                            Binary::Sub => (1.0, -1.0),
                            Binary::Mul => (y, x),
                            Binary::Div => (1.0 / y, -x / (y * y)),
                        };
                        adj[*a][ia] += g[k] * da;
                        adj[*b][ib] += g[k] * db;
                    }
                }
                Op::MatVec { w, x, cols } => {
                    let (wv, xv) = (&self.nodes[*w].value, &self.nodes[*x].value);
                    for (r, gr) in g.iter().enumerate() {
                        if *gr == 0.0 {
                            continue;
                        }
                        for c in 0..*cols {
                            adj[*w][r * cols + c] += gr * xv[c];
                            adj[*x][c] += gr * wv[r * cols + c];
                        }
                    }
                }
                Op::Sum { arg } => {
                    adj[*arg].iter_mut().for_each(|a| *a += g[0]);
                }
                Op::Slice { arg, start } => {
                    for (k, gk) in g.iter().enumerate() {
                        adj[*arg][start + k] += gk;
                    }
                }
                Op::Concat { args } => {
                    let mut at = 0;
                    for a in args {
                        let n = self.nodes[*a].value.len();
                        for k in 0..n {
                            adj[*a][k] += g[at + k];
                        }
                        at += n;
                    }
                }
                Op::LogSumExp { arg } => {
                    let x = &self.nodes[*arg].value;
                    let y = node.value[0];
                    for k in 0..x.len() {
                        adj[*arg][k] += g[0] * (x[k] - y).exp();
                    }
                }
                Op::Clamp { arg, lo, hi } => {
                    let x = &self.nodes[*arg].value;
                    for k in 0..g.len() {
                        if x[k] >= *lo && x[k] <= *hi {
                            adj[*arg][k] += g[k];
                        }
                    }
                }
                Op::ScaleShift { arg, scale } => {
                    for k in 0..g.len() {
                        adj[*arg][k] += g[k] * scale;
                    }
                }
            }
            adj[i] = g;
        }
        Gradients {
            adj,
            params: self.params.clone(),
        }
    }
}

/// Node adjoints from one backward pass.
#[derive(Debug)]
pub struct Gradients {
    adj: Vec<Vec<f64>>,
    params: Vec<(usize, Var)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> &[f64] {
        &self.adj[v.0]
    }

    /// Parameter adjoints laid out like `like`.
    pub fn params(&self, like: &ParamVector) -> ParamVector {
        let mut out = like.zeros_like();
        self.accumulate(&mut out, 1.0);
        out
    }

    /// `acc += weight * dOutput/dParams`.
    pub fn accumulate(&self, acc: &mut ParamVector, weight: f64) {
        let buf = acc.as_mut_slice();
        for &(offset, v) in &self.params {
            for (k, g) in self.adj[v.0].iter().enumerate() {
                buf[offset + k] += weight * g;
            }
        }
    }
}

/// Value and exact reverse-mode gradient of a scalar objective.
pub fn grad<F>(objective: F, params: &ParamVector) -> Result<(f64, ParamVector)>
where
    F: Fn(&mut Tape, &ParamVector) -> Var,
{
    let mut tape = Tape::new();
    let out = objective(&mut tape, params);
    tape.check()?;
    if tape.width(out) != 1 {
        return Err(Error::Shape {
            context: "grad: objective must be scalar",
            expected: 1,
            actual: tape.width(out),
        });
    }
    let g = tape.backward(out);
    Ok((tape.scalar_value(out), g.params(params)))
}

/// Forward-only evaluation of a scalar objective.
pub fn eval<F>(objective: F, params: &ParamVector) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamVector) -> Var,
{
    let mut tape = Tape::new();
    let out = objective(&mut tape, params);
    tape.check()?;
    Ok(tape.scalar_value(out))
}
