//! Acceptance run: one pass/fail line per criterion.
//!
//! `cargo test --test acceptance` runs everything; trailing numbers select
//! criteria, e.g. `cargo test --test acceptance -- 3 4`.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use serde_json::Value;

use sagl::dists::{
    bernoulli_entropy, bernoulli_log_prob, binary_state, fisher_residual, gaussian_entropy, gaussian_kl_std,
    gaussian_log_prob, gaussian_reparam, softmax_log_prob, ScoreFamily, StdNormal, TableDist,
};
use sagl::estimators::{
    elbo_exact, gap_decompose, grad_phi, grad_theta_vlb, iw_lb_exact, iw_objective_fixed, iwae_objective_tape,
    marginal_iw_expectation_exact, reparam_elbo_tape, NvilState, PhiMethod,
};
use sagl::harness::config::LearnerSection;
use sagl::harness::datasets::{make_dataset, DatasetSpec, Family, Truth};
use sagl::harness::{evaluate, train, Against, ExperimentConfig};
use sagl::learn::adversarial::{
    conjugate_identity_residual, optimal_references, registry, u_grid, vdm_objective_exact, Critic, FDivSpec, FKind,
    ThetaLoss, Vdm, VdmConfig, VdmGenerator,
};
use sagl::learn::directed::{phi_score_at, theta_field_at, Avb, AvbEncoder, LearnerConfig, LearnerKind};
use sagl::learn::undirected::{
    moment_field, nce_fdiv_equivalence, nce_objective, nce_objective_exact, AuxGenerator, GaussianGenerator,
    InclusiveKernel, InclusiveNrf, Nce, NceConfig, Noise,
};
use sagl::learn::Dataset;
use sagl::models::io::Checkpoint;
use sagl::models::{
    BernoulliEncoder, Dlgm, DlgmLayer, Domain, EncDistValue, Encoder, GaussianEncoder, ImplicitGen, LatentModel,
    NeuralRf, ObsModel, Potential, Sbn, VaePair,
};
use sagl::num::{
    finite_diff, finite_diff_fn, grad, log_sum_exp, relative_error, softplus, Activation, MlpSpec, ParamVector,
    RngStream, Tape, Var,
};
use sagl::oracle::{exact_divergence, nrf_table, stationarity_residual, Density, DivKind, TransitionMatrix};
use sagl::samplers::{mis_matrix, mis_step, rw_flip_matrix, rw_step, MisKernel, RwKernel};
use sagl::Result;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

type Check = fn() -> Result<Verdict>;

const CRITERIA: [(usize, &str, f64, Check); 12] = [
    (1, "gradient integrity", 120.0, gradient_integrity),
    (2, "fisher equality", 60.0, fisher_equality),
    (3, "bound ordering", 60.0, bound_ordering),
    (4, "unbiased marginal estimate", 60.0, unbiased_marginal),
    (5, "estimator agreement", 300.0, estimator_agreement),
    (6, "kernel stationarity", 60.0, kernel_stationarity),
    (7, "learner convergence", 1500.0, learner_convergence),
    (8, "adversarial fixed points", 120.0, adversarial_fixed_points),
    (9, "divergence direction", 300.0, divergence_direction),
    (10, "nce f-divergence equivalence", 120.0, nce_equivalence),
    (11, "gap decomposition", 120.0, gap_decomposition),
    (12, "determinism", 120.0, determinism),
];

fn main() -> ExitCode {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, budget, check) in CRITERIA {
        if !picked.is_empty() && !picked.contains(&id) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let outcome = check();
        let secs = started.elapsed().as_secs_f64();
        let (pass, detail) = match outcome {
            Ok(v) => (v.pass && secs <= budget, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {name:<30} {}  {detail}  [{secs:.1}s of {budget:.0}s]",
            if pass { "PASS" } else { "FAIL" }
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn load_config(name: &str) -> Result<ExperimentConfig> {
    let path = repo_root().join("configs").join(format!("{name}.json"));
    ExperimentConfig::from_json(&std::fs::read_to_string(path)?)
}

fn jitter(p: &mut ParamVector, rng: &mut RngStream, scale: f64) {
    for v in p.as_mut_slice() {
        *v += scale * rng.normal();
    }
}

fn uniform_vec(rng: &mut RngStream, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| lo + (hi - lo) * rng.uniform()).collect()
}

fn random_bits(rng: &mut RngStream, n: usize) -> Vec<f64> {
    (0..n).map(|_| if rng.uniform() < 0.5 { 1.0 } else { 0.0 }).collect()
}

fn random_table(rng: &mut RngStream, n: usize, scale: f64) -> Result<TableDist> {
    let lw: Vec<f64> = (0..n).map(|_| scale * rng.normal()).collect();
    TableDist::from_log_weights(&lw)
}

fn mlp(widths: Vec<usize>, hidden: Activation) -> MlpSpec {
    MlpSpec::uniform(widths, hidden, Activation::Identity).expect("valid widths")
}

fn log_sigmoid(z: f64) -> f64 {
    -softplus(-z)
}

// ---------------------------------------------------------------------------
// 1

const FD_STEP: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-5;
const GRAD_SEEDS: u64 = 100;

/// Worst relative error and largest gradient norm per named case.
#[derive(Default)]
struct Worst(Vec<(String, f64, f64)>);

impl Worst {
    fn record(&mut self, name: &str, err: f64, norm: f64) {
        let err = if err.is_nan() { f64::INFINITY } else { err };
        match self.0.iter_mut().find(|(n, _, _)| n == name) {
            Some((_, e, m)) => {
                *e = e.max(err);
                *m = m.max(norm);
            }
            None => self.0.push((name.to_string(), err, norm)),
        }
    }

    fn tape(&mut self, name: &str, p: &ParamVector, f: impl Fn(&mut Tape, &ParamVector) -> Var) -> Result<()> {
        let (_, g) = grad(&f, p)?;
        let n = finite_diff(&f, p, FD_STEP)?;
        self.record(name, relative_error(g.as_slice(), n.as_slice()), g.norm2());
        Ok(())
    }

    /// Compares a library gradient with central differences of a value
    /// function, restricted to one parameter group.
    fn field(
        &mut self,
        name: &str,
        p: &ParamVector,
        analytic: &ParamVector,
        prefix: &str,
        f: impl Fn(&ParamVector) -> Result<f64>,
    ) -> Result<()> {
        let mut n = finite_diff_fn(f, p, FD_STEP)?;
        n.mask_prefix(prefix);
        let mut a = analytic.clone();
        a.mask_prefix(prefix);
        self.record(name, relative_error(a.as_slice(), n.as_slice()), a.norm2());
        Ok(())
    }
}

fn reduce(t: &mut Tape, v: Var) -> Var {
    let w: Vec<f64> = (0..t.width(v))
        .map(|i| (0.6 + 0.37 * i as f64) * if i % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    let c = t.constant(w);
    t.dot(v, c)
}

const OPS: [&str; 27] = [
    "neg", "exp", "log", "sigmoid", "log_sigmoid", "tanh", "softplus", "square", "log1mexp", "add", "sub", "mul",
    "div", "scale_shift", "scale", "shift", "matvec", "affine", "sum", "mean", "dot", "slice", "concat", "logsumexp",
    "clamp", "param", "scalar",
];

fn apply_op(t: &mut Tape, op: &str, p: &ParamVector) -> Var {
    let a = t.param(p, "a");
    let b = t.param(p, "b");
    let q = t.param(p, "p");
    let w = t.param(p, "w");
    let c = t.param(p, "c");
    let y = match op {
        "neg" => t.neg(a),
        "exp" => t.exp(a),
        "log" => t.log(q),
        "sigmoid" => t.sigmoid(a),
        "log_sigmoid" => t.log_sigmoid(a),
        "tanh" => t.tanh(a),
        "softplus" => t.softplus(a),
        "square" => t.square(a),
        "log1mexp" => {
            let nq = t.neg(q);
            t.log1mexp(nq)
        }
        "add" => t.add(a, b),
        "sub" => t.sub(a, b),
        "mul" => t.mul(a, b),
        "div" => t.div(a, q),
        "scale_shift" => t.scale_shift(a, 1.7, -0.3),
        "scale" => t.scale(a, -2.1),
        "shift" => t.shift(a, 0.4),
        "matvec" => t.matvec(w, a, 3),
        "affine" => t.affine(w, c, a),
        "sum" => t.sum(a),
        "mean" => t.mean(a),
        "dot" => t.dot(a, b),
        "slice" => t.slice(a, 1, 2),
        "concat" => t.concat(&[a, b, q]),
        "logsumexp" => t.logsumexp(a),
        "clamp" => t.clamp(a, -1.0, 1.0),
        "param" => a,
        "scalar" => {
            let s = t.scalar(0.8);
            let m = t.mul(a, b);
            let m = t.sum(m);
            t.mul(m, s)
        }
        other => unreachable!("unknown op {other}"),
    };
    reduce(t, y)
}

fn op_params(rng: &mut RngStream) -> Result<ParamVector> {
    let mut p = ParamVector::new();
    p.add("a", vec![4], uniform_vec(rng, 4, -1.5, 1.5))?;
    p.add("b", vec![4], uniform_vec(rng, 4, -1.5, 1.5))?;
    p.add("p", vec![4], uniform_vec(rng, 4, 0.5, 2.0))?;
    p.add("w", vec![3, 4], rng.normals(12))?;
    p.add("c", vec![3], rng.normals(3))?;
    Ok(p)
}

/// Keeps clamp arguments away from the kinks.
fn nudge_clamp(p: &mut ParamVector) -> Result<()> {
    for v in p.get_mut("a")?.iter_mut() {
        if (v.abs() - 1.0).abs() < 1e-3 {
            *v *= 0.9;
        }
    }
    Ok(())
}

struct Fixture {
    sbn: Sbn,
    sbn1: Sbn,
    benc: BernoulliEncoder,
    lin_enc: BernoulliEncoder,
    genc: GaussianEncoder,
    vae_b: VaePair,
    vae_g: VaePair,
    dlgm: Vec<Dlgm>,
    nrf_bin: NeuralRf,
    nrf_quad: NeuralRf,
    nrf_real: NeuralRf,
    gen_mlp: ImplicitGen,
    gen_affine: ImplicitGen,
    aux_bin: AuxGenerator,
    aux_real: AuxGenerator,
    gauss_gen: GaussianGenerator,
    critic_bin: Critic,
    critic_real: Critic,
    table_gen: VdmGenerator,
    implicit_gen: VdmGenerator,
    avb_vae: VaePair,
    avb_enc: AvbEncoder,
    avb_critic: Critic,
    data_bin: Dataset,
    data_real: Dataset,
    specs: Vec<FDivSpec>,
}

impl Fixture {
    fn new() -> Result<Self> {
        let mut rng = RngStream::new(404);
        let data_bin = Dataset::new(Domain::Binary(4), (0..32).map(|_| random_bits(&mut rng, 4)).collect())?;
        let data_real = Dataset::new(Domain::Real(2), (0..32).map(|_| rng.normals(2)).collect())?;
        let mut specs = registry()?;
        specs.push(FDivSpec::nce(10.0)?);
        specs.push(FDivSpec::gan().principled());
        Ok(Fixture {
            sbn: Sbn::new(4, vec![3, 2], "theta")?,
            sbn1: Sbn::new(4, vec![3], "theta")?,
            benc: BernoulliEncoder::new(mlp(vec![4, 5, 3], Activation::Tanh), "phi")?,
            lin_enc: BernoulliEncoder::linear(4, 3, "phi")?,
            genc: GaussianEncoder::new(mlp(vec![2, 5, 4], Activation::Tanh), "phi")?,
            vae_b: VaePair::new(
                ObsModel::Bernoulli,
                mlp(vec![2, 5, 4], Activation::Tanh),
                mlp(vec![4, 5, 4], Activation::Softplus),
                "theta",
                "phi",
            )?,
            vae_g: VaePair::new(
                ObsModel::Gaussian,
                mlp(vec![2, 5, 4], Activation::Sigmoid),
                mlp(vec![2, 5, 4], Activation::Tanh),
                "theta",
                "phi",
            )?,
            dlgm: vec![
                Dlgm::new(
                    vec![DlgmLayer {
                        t: mlp(vec![2, 4, 2], Activation::Tanh),
                        full_g: false,
                    }],
                    "theta",
                )?,
                Dlgm::new(
                    vec![DlgmLayer {
                        t: mlp(vec![2, 4, 2], Activation::Tanh),
                        full_g: true,
                    }],
                    "theta",
                )?,
                Dlgm::new(
                    vec![
                        DlgmLayer {
                            t: mlp(vec![1, 3, 1], Activation::Tanh),
                            full_g: false,
                        },
                        DlgmLayer {
                            t: mlp(vec![1, 3, 2], Activation::Softplus),
                            full_g: true,
                        },
                    ],
                    "theta",
                )?,
            ],
            nrf_bin: NeuralRf::new(
                Potential::Mlp(mlp(vec![4, 5, 1], Activation::Tanh)),
                Domain::Binary(4),
                true,
                "theta",
            )?,
            nrf_quad: NeuralRf::new(Potential::Quadratic, Domain::Real(2), false, "theta")?,
            nrf_real: NeuralRf::new(
                Potential::Mlp(mlp(vec![2, 5, 1], Activation::Softplus)),
                Domain::Real(2),
                false,
                "theta",
            )?,
            gen_mlp: ImplicitGen::new(mlp(vec![3, 5, 2], Activation::Tanh), "gen")?,
            gen_affine: ImplicitGen::affine(2, "gen")?,
            aux_bin: AuxGenerator::new(2, Domain::Binary(4), 5, "phi")?,
            aux_real: AuxGenerator::new(2, Domain::Real(2), 5, "phi")?,
            gauss_gen: GaussianGenerator::new(2, "phi")?,
            critic_bin: Critic::mlp(4, 5, "psi")?,
            critic_real: Critic::mlp(2, 5, "psi")?,
            table_gen: VdmGenerator::Table {
                dim: 4,
                prefix: "theta".into(),
            },
            implicit_gen: VdmGenerator::Implicit(ImplicitGen::new(mlp(vec![2, 4, 2], Activation::Tanh), "theta")?),
            avb_vae: VaePair::new(
                ObsModel::Bernoulli,
                mlp(vec![2, 5, 4], Activation::Tanh),
                mlp(vec![4, 5, 4], Activation::Tanh),
                "theta",
                "phi",
            )?,
            avb_enc: AvbEncoder::new(ImplicitGen::new(mlp(vec![6, 5, 2], Activation::Tanh), "phi")?, 4)?,
            avb_critic: Critic::mlp(6, 5, "psi")?,
            data_bin,
            data_real,
            specs,
        })
    }
}

fn init_with(rng: &mut RngStream, inits: &[&dyn Fn(&mut RngStream, &mut ParamVector) -> Result<()>]) -> Result<ParamVector> {
    let mut p = ParamVector::new();
    for f in inits {
        f(rng, &mut p)?;
    }
    jitter(&mut p, rng, 0.5);
    Ok(p)
}

fn gradient_seed(fx: &Fixture, seed: u64, w: &mut Worst) -> Result<()> {
    let mut rng = RngStream::new(0xacc1 + seed);

    // Tape primitives.
    let mut p = op_params(&mut rng)?;
    nudge_clamp(&mut p)?;
    for op in OPS {
        w.tape(&format!("op {op}"), &p, |t, p| apply_op(t, op, p))?;
    }
    {
        let frozen = p.clone();
        let f = |t: &mut Tape, p: &ParamVector| {
            let a = t.param(p, "a");
            let b = t.param(p, "b");
            let d = t.detach(b);
            let m = t.mul(a, d);
            reduce(t, m)
        };
        let (_, g) = grad(f, &p)?;
        let n = finite_diff_fn(
            |q| {
                let mut t = Tape::new();
                let a = t.constant(q.get("a")?.to_vec());
                let b = t.constant(frozen.get("b")?.to_vec());
                let m = t.mul(a, b);
                let r = reduce(&mut t, m);
                Ok(t.scalar_value(r))
            },
            &p,
            FD_STEP,
        )?;
        w.record("op detach", relative_error(g.as_slice(), n.as_slice()), g.norm2());
    }
    for (name, act) in [
        ("identity", Activation::Identity),
        ("sigmoid", Activation::Sigmoid),
        ("tanh", Activation::Tanh),
        ("softplus", Activation::Softplus),
    ] {
        let spec = MlpSpec::uniform(vec![4, 5, 3], act, act)?;
        let mut p = ParamVector::new();
        spec.init("m", &mut rng, &mut p)?;
        p.add("x", vec![4], rng.normals(4))?;
        jitter(&mut p, &mut rng, 0.3);
        w.tape(&format!("mlp {name}"), &p, |t, p| {
            let x = t.param(p, "x");
            let y = spec.forward(t, p, "m", x);
            reduce(t, y)
        })?;
    }

    // Distribution helpers.
    let mut p = ParamVector::new();
    p.add("a", vec![4], rng.normals(4))?;
    p.add("ls", vec![4], uniform_vec(&mut rng, 4, -1.0, 1.0))?;
    p.add("x", vec![4], rng.normals(4))?;
    let xb = random_bits(&mut rng, 4);
    let eps = rng.normals(4);
    let std4 = StdNormal::new(4)?;
    w.tape("bernoulli log prob", &p, |t, p| {
        let a = t.param(p, "a");
        bernoulli_log_prob(t, a, &xb)
    })?;
    w.tape("bernoulli entropy", &p, |t, p| {
        let a = t.param(p, "a");
        bernoulli_entropy(t, a)
    })?;
    w.tape("gaussian log prob", &p, |t, p| {
        let (a, ls, x) = (t.param(p, "a"), t.param(p, "ls"), t.param(p, "x"));
        gaussian_log_prob(t, a, ls, x)
    })?;
    w.tape("gaussian reparam", &p, |t, p| {
        let (a, ls) = (t.param(p, "a"), t.param(p, "ls"));
        let y = gaussian_reparam(t, a, ls, &eps);
        reduce(t, y)
    })?;
    w.tape("gaussian entropy", &p, |t, p| {
        let ls = t.param(p, "ls");
        gaussian_entropy(t, ls)
    })?;
    w.tape("gaussian kl to standard", &p, |t, p| {
        let (a, ls) = (t.param(p, "a"), t.param(p, "ls"));
        gaussian_kl_std(t, a, ls)
    })?;
    w.tape("softmax log prob", &p, |t, p| {
        let a = t.param(p, "a");
        softmax_log_prob(t, a, 2)
    })?;
    w.tape("standard normal log prob", &p, |t, p| {
        let x = t.param(p, "x");
        std4.log_prob_tape(t, x)
    })?;

    // Models and encoders.
    let x4 = random_bits(&mut rng, 4);
    let h5 = random_bits(&mut rng, 5);
    let p = init_with(&mut rng, &[&|r, p| fx.sbn.init(r, p)])?;
    w.tape("sbn joint", &p, |t, p| {
        let h = t.constant(h5.clone());
        fx.sbn.joint_log_prob_tape(t, p, &x4, h)
    })?;
    let h3 = random_bits(&mut rng, 3);
    let p = init_with(&mut rng, &[&|r, p| fx.benc.init(r, p)])?;
    w.tape("bernoulli encoder", &p, |t, p| {
        let d = fx.benc.dist_tape(t, p, &x4);
        let h = t.constant(h3.clone());
        d.log_prob(t, h)
    })?;
    let x2 = rng.normals(2);
    let mut p = init_with(&mut rng, &[&|r, p| fx.genc.init(r, p)])?;
    p.add("h", vec![2], rng.normals(2))?;
    w.tape("gaussian encoder", &p, |t, p| {
        let d = fx.genc.dist_tape(t, p, &x2);
        let h = t.param(p, "h");
        d.log_prob(t, h)
    })?;
    for (name, vae, x) in [("vae bernoulli joint", &fx.vae_b, &x4), ("vae gaussian joint", &fx.vae_g, &x2)] {
        let mut p = init_with(&mut rng, &[&|r, p| vae.init(r, p)])?;
        p.add("h", vec![2], rng.normals(2))?;
        w.tape(name, &p, |t, p| {
            let h = t.param(p, "h");
            vae.joint_log_prob_tape(t, p, x, h)
        })?;
    }
    for (i, m) in fx.dlgm.iter().enumerate() {
        let mut p = init_with(&mut rng, &[&|r, p| m.init(r, p)])?;
        let ld = m.latent().dim();
        p.add("h", vec![ld], rng.normals(ld))?;
        w.tape(&format!("dlgm joint {i}"), &p, |t, p| {
            let h = t.param(p, "h");
            m.joint_log_prob_tape(t, p, &x2, h)
        })?;
    }
    let p = init_with(&mut rng, &[&|r, p| fx.nrf_bin.init(r, p)])?;
    w.tape("nrf mlp potential with c", &p, |t, p| {
        let x = t.constant(x4.clone());
        fx.nrf_bin.potential_tape(t, p, x)
    })?;
    for (name, nrf) in [("nrf quadratic potential", &fx.nrf_quad), ("nrf real mlp potential", &fx.nrf_real)] {
        let mut p = init_with(&mut rng, &[&|r, p| nrf.init(r, p)])?;
        p.add("x", vec![2], rng.normals(2))?;
        w.tape(name, &p, |t, p| {
            let x = t.param(p, "x");
            nrf.potential_tape(t, p, x)
        })?;
    }
    for (name, g) in [("implicit mlp generator", &fx.gen_mlp), ("implicit affine generator", &fx.gen_affine)] {
        let p = init_with(&mut rng, &[&|r, p| g.init(r, p)])?;
        let e = rng.normals(g.noise_dim());
        w.tape(name, &p, |t, p| {
            let y = g.generate_tape(t, p, &e);
            reduce(t, y)
        })?;
    }
    let p = init_with(&mut rng, &[&|r, p| fx.aux_bin.init(r, p)])?;
    w.tape("aux generator binary marginal", &p, |t, p| fx.aux_bin.log_marginal_tape(t, p, &x4))?;
    let p = init_with(&mut rng, &[&|r, p| fx.aux_real.init(r, p)])?;
    w.tape("aux generator real marginal", &p, |t, p| fx.aux_real.log_marginal_tape(t, p, &x2))?;
    let mut p = init_with(&mut rng, &[&|r, p| fx.critic_real.init(r, p)])?;
    p.add("x", vec![2], rng.normals(2))?;
    w.tape("critic value", &p, |t, p| {
        let x = t.param(p, "x");
        fx.critic_real.value_tape(t, p, x)
    })?;
    for spec in &fx.specs {
        let mut p = ParamVector::new();
        p.add("v", vec![1], vec![2.0 * rng.uniform() - 1.0])?;
        w.tape(&format!("g {}", spec.name), &p, |t, p| {
            let v = t.param(p, "v");
            spec.g_tape(t, v)
        })?;
        w.tape(&format!("conjugate of g {}", spec.name), &p, |t, p| {
            let v = t.param(p, "v");
            spec.conj_g_tape(t, v)
        })?;
    }

    // Learner objectives on the tape.
    let p = init_with(&mut rng, &[&|r, p| fx.vae_g.init(r, p), &|r, p| fx.vae_g.encoder().init(r, p)])?;
    let enc = fx.vae_g.encoder();
    let e1 = rng.normals(2);
    w.tape("reparameterized elbo", &p, |t, p| {
        reparam_elbo_tape(t, &fx.vae_g, &enc, p, &x2, &e1, false).expect("gaussian encoder")
    })?;
    let ek: Vec<Vec<f64>> = (0..4).map(|_| rng.normals(2)).collect();
    w.tape("iwae objective", &p, |t, p| {
        iwae_objective_tape(t, &fx.vae_g, &enc, p, &x2, &ek).expect("gaussian encoder")
    })?;
    {
        let mut r = rng.clone();
        let e = r.normals(2);
        let g = grad_phi(&fx.vae_g, &enc, &p, &x2, &mut rng, PhiMethod::ReparamTd, None)?;
        w.field("reparam phi gradient", &p, &g, "phi.", |q| {
            let d = match enc.dist(q, &x2)? {
                EncDistValue::Gaussian(d) => d,
                _ => unreachable!(),
            };
            let h = d.transform(&e);
            Ok(fx.vae_g.joint_log_prob(q, &x2, &h)? - d.log_prob(&h)?)
        })?;
    }
    let p = init_with(&mut rng, &[&|r, p| fx.sbn1.init(r, p), &|r, p| fx.lin_enc.init(r, p)])?;
    let hs: Vec<Vec<f64>> = (0..3).map(|_| random_bits(&mut rng, 3)).collect();
    w.tape("importance-weighted objective", &p, |t, p| {
        iw_objective_fixed(t, &fx.sbn1, &fx.lin_enc, p, &x4, &hs)
    })?;
    let g = theta_field_at(&fx.sbn1, &p, &x4, &hs[0])?;
    w.field("theta field", &p, &g, "theta.", |q| fx.sbn1.joint_log_prob(q, &x4, &hs[0]))?;
    let g = phi_score_at(&fx.lin_enc, &p, &x4, &hs[1])?;
    w.field("phi score", &p, &g, "phi.", |q| fx.lin_enc.log_prob(q, &x4, &hs[1]))?;
    {
        let r0 = rng.clone();
        let g = grad_theta_vlb(&fx.sbn1, &fx.lin_enc, &p, &x4, &mut rng, 3)?;
        w.field("theta elbo gradient", &p, &g, "theta.", |q| {
            let mut r = r0.clone();
            let mut acc = 0.0;
            for _ in 0..3 {
                let d = fx.lin_enc.sample(&p, &x4, &mut r)?;
                acc += fx.sbn1.joint_log_prob(q, &x4, &d.h)? / 3.0;
            }
            Ok(acc)
        })?;
    }

    let cfg = LearnerConfig::new(LearnerKind::Avb);
    let avb = Avb::new(&cfg, &fx.avb_vae, &fx.avb_enc, &fx.avb_critic, &fx.data_bin)?;
    let p = init_with(&mut rng, &[
        &|r, p| fx.avb_vae.init(r, p),
        &|r, p| fx.avb_enc.gen.init(r, p),
        &|r, p| fx.avb_critic.init(r, p),
    ])?;
    let (hq, hp, ea) = (rng.normals(2), rng.normals(2), rng.normals(2));
    w.tape("avb critic objective", &p, |t, p| avb.critic_objective_tape(t, p, &x4, &hq, &hp))?;
    w.tape("avb model objective", &p, |t, p| avb.model_objective_tape(t, p, &x4, &ea))?;

        let xm = random_bits(&mut rng, 4);
    for spec in &fx.specs[..4] {
        let vc = VdmConfig {
            fspec: spec.clone(),
            theta_loss: ThetaLoss::Saturating,
            critic_steps: 0,
        };
        let vdm = Vdm::new(vc, &fx.table_gen, &fx.critic_bin, &fx.data_bin)?;
        let p = init_with(&mut rng, &[&|r, p| fx.table_gen.init(r, p), &|r, p| fx.critic_bin.init(r, p)])?;
        let g = vdm.critic_field(&p, &x4, &xm)?;
        w.field(&format!("vdm critic field {}", spec.name), &p, &g, "psi.", |q| {
            Ok(spec.g(fx.critic_bin.value(q, &x4)?) - spec.conj_g(fx.critic_bin.value(q, &xm)?))
        })?;
    }
    let mut losses: Vec<(FDivSpec, ThetaLoss)> =
        fx.specs[..4].iter().map(|s| (s.clone(), ThetaLoss::Saturating)).collect();
    losses.push((FDivSpec::gan(), ThetaLoss::LogDTrick));
    for (spec, loss) in losses {
        let imp = match &fx.implicit_gen {
            VdmGenerator::Implicit(g) => g,
            _ => unreachable!(),
        };
        let vc = VdmConfig {
            fspec: spec.clone(),
            theta_loss: loss,
            critic_steps: 0,
        };
        let mut vdm = Vdm::new(vc, &fx.implicit_gen, &fx.critic_real, &fx.data_real)?;
        let p = init_with(&mut rng, &[&|r, p| fx.implicit_gen.init(r, p), &|r, p| fx.critic_real.init(r, p)])?;
        let e = rng.clone().normals(imp.noise_dim());
        let g = vdm.theta_field(&p, &mut rng)?;
        w.field(&format!("vdm generator field {} {loss:?}", spec.name), &p, &g, "theta.", |q| {
            let v = fx.critic_real.value(q, &imp.transform(q, &e))?;
            Ok(match loss {
                ThetaLoss::Saturating => spec.conj_g(v),
                ThetaLoss::LogDTrick => log_sigmoid(v),
            })
        })?;
    }

    let p = init_with(&mut rng, &[&|r, p| fx.nrf_bin.init(r, p), &|r, p| fx.aux_bin.init(r, p)])?;
    let inc = InclusiveNrf::new(&fx.nrf_bin, &fx.aux_bin, InclusiveKernel::GeneratorMis, &fx.data_bin, 4)?;
    let g = inc.phi_field(&p, &x4)?;
    w.field("inclusive generator field", &p, &g, "phi.", |q| fx.aux_bin.log_marginal(q, &x4))?;
    let g = moment_field(&fx.nrf_bin, &p, &x4, &xm)?;
    w.field("random field moment field", &p, &g, "theta.", |q| {
        Ok(fx.nrf_bin.potential(q, &x4)? - fx.nrf_bin.potential(q, &xm)?)
    })?;

    let mut p = init_with(&mut rng, &[&|r, p| fx.nrf_real.init(r, p), &|r, p| fx.gauss_gen.init(r, p)])?;
    for v in p.get_mut(&fx.gauss_gen.log_std_name())?.iter_mut() {
        *v = v.clamp(-1.0, 1.0);
    }
    let e = rng.normals(2);
    w.tape("exclusive generator objective", &p, |t, p| {
        fx.gauss_gen.objective_tape(t, p, &fx.nrf_real, &e)
    })?;

    let noise = Noise::Table {
        dim: 4,
        dist: random_table(&mut rng, 16, 0.5)?,
    };
    let nce = Nce::new(
        &fx.nrf_bin,
        NceConfig {
            nu: 3.0,
            noise: noise.clone(),
        },
        &fx.data_bin,
        &rng,
    )?;
    let p = init_with(&mut rng, &[&|r, p| fx.nrf_bin.init(r, p)])?;
    let ys: Vec<Vec<f64>> = (0..3).map(|_| random_bits(&mut rng, 4)).collect();
    let g = nce.field_at(&p, &x4, &ys, 1.0)?;
    w.field("nce field", &p, &g, "theta.", |q| {
        let logit = |z: &[f64]| -> Result<f64> { Ok(fx.nrf_bin.potential(q, z)? - 3f64.ln() - noise.log_prob(z)?) };
        let mut acc = log_sigmoid(logit(&x4)?);
        for y in &ys {
            acc += log_sigmoid(-logit(y)?);
        }
        Ok(acc)
    })?;
    Ok(())
}

fn gradient_integrity() -> Result<Verdict> {
    let fx = Fixture::new()?;
    let mut w = Worst::default();
    for seed in 0..GRAD_SEEDS {
        gradient_seed(&fx, seed, &mut w)?;
    }
    let (name, worst) = w
        .0
        .iter()
        .fold(("".to_string(), 0.0), |acc, (n, e, _)| if *e > acc.1 { (n.clone(), *e) } else { acc });
    // A case whose gradient is always zero checks nothing.
    let bad: Vec<&str> = w
        .0
        .iter()
        .filter(|(_, e, m)| *e > GRAD_TOL || *m == 0.0)
        .map(|(n, _, _)| n.as_str())
        .collect();
    Ok(Verdict::new(
        bad.is_empty(),
        format!(
            "{} cases x {GRAD_SEEDS} seeds, worst rel err {worst:.2e} ({name}), tol {GRAD_TOL:e}{}",
            w.0.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!(", failing: {}", bad.join(", "))
            }
        ),
    ))
}

// ---------------------------------------------------------------------------
// 2

fn fisher_equality() -> Result<Verdict> {
    let mut rng = RngStream::new(0xf15);
    let (mut enum_worst, mut quad_worst): (f64, f64) = (0.0, 0.0);
    for i in 0..100 {
        let d = 1 + i % 6;
        let r = fisher_residual(&ScoreFamily::Bernoulli {
            logits: (0..d).map(|_| 2.0 * rng.normal()).collect(),
        })?;
        enum_worst = enum_worst.max(r);
        let n = 2 + i % 15;
        let r = fisher_residual(&ScoreFamily::Softmax {
            logits: (0..n).map(|_| 2.0 * rng.normal()).collect(),
        })?;
        enum_worst = enum_worst.max(r);
        let g = 1 + i % 2;
        let r = fisher_residual(&ScoreFamily::Gaussian {
            mean: rng.normals(g),
            log_std: uniform_vec(&mut rng, g, -0.7, 0.7),
        })?;
        quad_worst = quad_worst.max(r);
    }

    // Scores of the model families, by enumeration.
    let sbn = Sbn::new(3, vec![2], "theta")?;
    let enc = BernoulliEncoder::new(mlp(vec![3, 4, 2], Activation::Tanh), "phi")?;
    let aux = AuxGenerator::new(2, Domain::Binary(3), 4, "phi")?;
    for _ in 0..20 {
        let mut p = ParamVector::new();
        sbn.init(&mut rng, &mut p)?;
        enc.init(&mut rng, &mut p)?;
        jitter(&mut p, &mut rng, 1.0);
        let mut acc = p.zeros_like();
        for s in 0..32 {
            let z = binary_state(s, 5);
            let (x, h) = z.split_at(3);
            let w = sbn.joint_log_prob(&p, x, h)?.exp();
            acc.axpy(w, &theta_field_at(&sbn, &p, x, h)?);
        }
        enum_worst = enum_worst.max(acc.norm_inf());
        let x = random_bits(&mut rng, 3);
        let mut acc = p.zeros_like();
        for s in 0..4 {
            let h = binary_state(s, 2);
            acc.axpy(enc.log_prob(&p, &x, &h)?.exp(), &phi_score_at(&enc, &p, &x, &h)?);
        }
        enum_worst = enum_worst.max(acc.norm_inf());

        let mut q = ParamVector::new();
        aux.init(&mut rng, &mut q)?;
        jitter(&mut q, &mut rng, 1.0);
        let mut acc = q.zeros_like();
        for s in 0..8 {
            let x = binary_state(s, 3);
            let (lq, g) = grad(|t, q| aux.log_marginal_tape(t, q, &x), &q)?;
            acc.axpy(lq.exp(), &g);
        }
        enum_worst = enum_worst.max(acc.norm_inf());
    }
    Ok(Verdict::new(
        enum_worst <= 1e-10 && quad_worst <= 1e-6,
        format!("enumerable {enum_worst:.2e} (tol 1e-10), quadrature {quad_worst:.2e} (tol 1e-6)"),
    ))
}

// ---------------------------------------------------------------------------
// 3 and 4

/// Enumerated latent table `(q(h|x), log p(x,h) - log q(h|x))`.
fn latent_rows(m: &dyn LatentModel, e: &dyn Encoder, p: &ParamVector, x: &[f64]) -> Result<Vec<(f64, f64)>> {
    let h = m.latent().dim();
    (0..1usize << h)
        .map(|s| {
            let hs = binary_state(s, h);
            let lq = e.log_prob(p, x, &hs)?;
            Ok((lq.exp(), m.joint_log_prob(p, x, &hs)? - lq))
        })
        .collect()
}

/// `E[f(w_1..w_K)]` over all K-tuples of independent draws from `rows`.
fn tuple_expectation(rows: &[(f64, f64)], k: usize, f: &dyn Fn(&[f64]) -> f64) -> f64 {
    let n = rows.len();
    let mut idx = vec![0usize; k];
    let mut acc = 0.0;
    let mut lw = vec![0.0; k];
    loop {
        let mut prob = 1.0;
        for (j, &i) in idx.iter().enumerate() {
            prob *= rows[i].0;
            lw[j] = rows[i].1;
        }
        if prob > 0.0 {
            acc += prob * f(&lw);
        }
        let mut j = 0;
        loop {
            if j == k {
                return acc;
            }
            idx[j] += 1;
            if idx[j] < n {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

fn brute_log_marginal(m: &dyn LatentModel, p: &ParamVector, x: &[f64]) -> Result<f64> {
    let h = m.latent().dim();
    let terms: Vec<f64> = (0..1usize << h)
        .map(|s| m.joint_log_prob(p, x, &binary_state(s, h)))
        .collect::<Result<_>>()?;
    Ok(log_sum_exp(&terms))
}

fn h3_instance(rng: &mut RngStream) -> Result<(Sbn, BernoulliEncoder, ParamVector)> {
    let m = Sbn::new(5, vec![3], "theta")?;
    let e = BernoulliEncoder::new(mlp(vec![5, 4, 3], Activation::Tanh), "phi")?;
    let mut p = ParamVector::new();
    m.init(rng, &mut p)?;
    e.init(rng, &mut p)?;
    jitter(&mut p, rng, 1.0);
    Ok((m, e, p))
}

fn bound_ordering() -> Result<Verdict> {
    const SLACK: f64 = 1e-10;
    let mut rng = RngStream::new(0xb0);
    let mut violation: f64 = 0.0;
    let mut i1_vs_l: f64 = 0.0;
    let mut mismatch: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..12 {
        let (m, e, p) = h3_instance(&mut rng)?;
        for s in 0..32 {
            let x = binary_state(s, 5);
            let rows = latent_rows(&m, &e, &p, &x)?;
            let l_mine: f64 = rows.iter().map(|(q, lw)| q * lw).sum();
            let lp_mine = brute_log_marginal(&m, &p, &x)?;
            let l = elbo_exact(&m, &e, &p, &x)?;
            let lp = sagl::oracle::exact_marginal(&m, &p, &x)?;
            let mut chain = vec![l];
            for k in 1..=3 {
                let ik = iw_lb_exact(&m, &e, &p, &x, k)?;
                let mine = tuple_expectation(&rows, k, &|lw| log_sum_exp(lw) - (k as f64).ln());
                mismatch = mismatch.max((ik - mine).abs());
                chain.push(ik);
            }
            chain.push(lp);
            mismatch = mismatch.max((l - l_mine).abs()).max((lp - lp_mine).abs());
            i1_vs_l = i1_vs_l.max((chain[1] - l).abs());
            for w in chain.windows(2) {
                violation = violation.max(w[0] - w[1]);
            }
            checked += 1;
        }
    }
    Ok(Verdict::new(
        violation <= SLACK && i1_vs_l <= SLACK && mismatch <= 1e-10,
        format!(
            "{checked} points: worst ordering violation {violation:.2e}, |I_1 - L| {i1_vs_l:.2e}, \
             independent enumeration mismatch {mismatch:.2e} (tol {SLACK:e})"
        ),
    ))
}

fn unbiased_marginal() -> Result<Verdict> {
    let mut rng = RngStream::new(0xb1);
    let mut worst: f64 = 0.0;
    let mut worst_mine: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..8 {
        let (m, e, p) = h3_instance(&mut rng)?;
        for s in 0..32 {
            let x = binary_state(s, 5);
            let px = brute_log_marginal(&m, &p, &x)?.exp();
            let rows = latent_rows(&m, &e, &p, &x)?;
            for k in 1..=3 {
                let lib = marginal_iw_expectation_exact(&m, &e, &p, &x, k)?.exp();
                let mine = tuple_expectation(&rows, k, &|lw| lw.iter().map(|v| v.exp()).sum::<f64>() / k as f64);
                worst = worst.max((lib - px).abs());
                worst_mine = worst_mine.max((mine - px).abs());
                checked += 1;
            }
        }
    }
    Ok(Verdict::new(
        worst <= 1e-10 && worst_mine <= 1e-10,
        format!("{checked} (x, K) pairs: |E[p_hat] - p(x)| {worst:.2e}, independent tuple sum {worst_mine:.2e} (tol 1e-10)"),
    ))
}

// ---------------------------------------------------------------------------
// 5

struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(d: usize) -> Self {
        Moments {
            n: 0.0,
            mean: vec![0.0; d],
            m2: vec![0.0; d],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for i in 0..x.len() {
            let d = x[i] - self.mean[i];
            self.mean[i] += d / self.n;
            self.m2[i] += d * (x[i] - self.mean[i]);
        }
    }

    fn var(&self, i: usize) -> f64 {
        self.m2[i] / (self.n - 1.0)
    }
}

/// Linear-Gaussian VAE: `h ~ N(0,1)`, `x | h ~ N(w h + b, sigma^2)`,
/// `q(h|x) = N(a x + c, exp(e x + f)^2)`.
struct LinearGaussian {
    w: f64,
    b: f64,
    log_sigma: f64,
    x: f64,
}

impl LinearGaussian {
    fn params(&self, pair: &VaePair, phi: [f64; 4]) -> Result<ParamVector> {
        let mut p = ParamVector::new();
        pair.init(&mut RngStream::new(0), &mut p)?;
        pair.encoder().init(&mut RngStream::new(0), &mut p)?;
        p.get_mut("theta.w0")?.copy_from_slice(&[self.w, 0.0]);
        p.get_mut("theta.b0")?.copy_from_slice(&[self.b, self.log_sigma]);
        let [a, c, e, f] = phi;
        p.get_mut("phi.w0")?.copy_from_slice(&[a, e]);
        p.get_mut("phi.b0")?.copy_from_slice(&[c, f]);
        Ok(p)
    }

    fn elbo(&self, phi: [f64; 4]) -> f64 {
        let [a, c, e, f] = phi;
        let (m, l) = (a * self.x + c, e * self.x + f);
        let (s2, sig2) = ((2.0 * l).exp(), (2.0 * self.log_sigma).exp());
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        -ln2pi - self.log_sigma - ((self.x - self.w * m - self.b).powi(2) + self.w * self.w * s2) / (2.0 * sig2)
            - (m * m + s2) / 2.0
            + 0.5 * (ln2pi + 1.0)
            + l
    }

    /// Closed-form gradient in `[a, c, e, f]`.
    fn elbo_grad(&self, phi: [f64; 4]) -> [f64; 4] {
        let [a, c, e, f] = phi;
        let (m, l) = (a * self.x + c, e * self.x + f);
        let (s2, sig2) = ((2.0 * l).exp(), (2.0 * self.log_sigma).exp());
        let gm = self.w * (self.x - self.w * m - self.b) / sig2 - m;
        let gl = -self.w * self.w * s2 / sig2 - s2 + 1.0;
        [gm * self.x, gm, gl * self.x, gl]
    }

    fn posterior_phi(&self) -> [f64; 4] {
        let sig2 = (2.0 * self.log_sigma).exp();
        let prec = 1.0 + self.w * self.w / sig2;
        let mean = self.w / sig2 * (self.x - self.b) / prec;
        [0.0, mean, 0.0, -0.5 * prec.ln()]
    }
}

fn phi_coords(g: &ParamVector) -> Result<[f64; 4]> {
    let (w, b) = (g.get("phi.w0")?, g.get("phi.b0")?);
    Ok([w[0], b[0], w[1], b[1]])
}

fn estimator_agreement() -> Result<Verdict> {
    const N: usize = 100_000;
    let lg = LinearGaussian {
        w: 1.2,
        b: 0.3,
        log_sigma: 0.8f64.ln(),
        x: 1.1,
    };
    let ident = |w: Vec<usize>| MlpSpec::new(w, vec![Activation::Identity]);
    let pair = VaePair::new(ObsModel::Gaussian, ident(vec![1, 2])?, ident(vec![1, 2])?, "theta", "phi")?;
    let enc = pair.encoder();
    let phi = [0.2, 0.1, 0.1, -0.4];
    let p = lg.params(&pair, phi)?;
    let oracle = lg.elbo_grad(phi);
    let quad = elbo_exact(&pair, &enc, &p, &[lg.x])?;
    let closed = lg.elbo(phi);
    let mut notes = vec![format!("closed-form vs quadrature elbo {:.1e}", (quad - closed).abs())];
    let mut pass = (quad - closed).abs() <= 1e-6;

    let mut worst_z: f64 = 0.0;
    for (label, method) in [
        ("reinforce", PhiMethod::Reinforce),
        ("nvil", PhiMethod::ReinforceNvil),
        ("reparam-td", PhiMethod::ReparamTd),
        ("reparam-pd", PhiMethod::ReparamPd),
    ] {
        let mut rng = RngStream::new(0xe5);
        let mut nvil = NvilState::default();
        let mut mom = Moments::new(4);
        for _ in 0..N {
            let st = (method == PhiMethod::ReinforceNvil).then_some(&mut nvil);
            let g = grad_phi(&pair, &enc, &p, &[lg.x], &mut rng, method, st)?;
            mom.push(&phi_coords(&g)?);
        }
        let z = (0..4)
            .map(|i| (mom.mean[i] - oracle[i]).abs() / (mom.var(i) / N as f64).sqrt())
            .fold(0.0, f64::max);
        worst_z = worst_z.max(z);
        pass &= z <= 3.0;
        notes.push(format!("{label} max|z| {z:.2}"));
    }

    let post = lg.params(&pair, lg.posterior_phi())?;
    let mut rng = RngStream::new(0xe6);
    let mut pd = Moments::new(4);
    let mut td = Moments::new(4);
    for _ in 0..10_000 {
        pd.push(&phi_coords(&grad_phi(&pair, &enc, &post, &[lg.x], &mut rng, PhiMethod::ReparamPd, None)?)?);
        td.push(&phi_coords(&grad_phi(&pair, &enc, &post, &[lg.x], &mut rng, PhiMethod::ReparamTd, None)?)?);
    }
    let pd_var = (0..4).map(|i| pd.var(i)).fold(0.0, f64::max);
    let td_var = (0..4).map(|i| td.var(i)).fold(0.0, f64::max);
    pass &= pd_var <= 1e-20;
    notes.push(format!("at posterior: pd variance {pd_var:.1e} (tol 1e-20), td variance {td_var:.2e}"));
    Ok(Verdict::new(pass, format!("{N} samples, 3-sigma; {}", notes.join(", "))))
}

// ---------------------------------------------------------------------------
// 6

fn independent_residual(k: &TransitionMatrix, pi: &[f64]) -> f64 {
    let n = pi.len();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let flow: f64 = (0..n).map(|i| pi[i] * k.get(i, j)).sum();
        worst = worst.max((flow - pi[j]).abs());
    }
    for i in 0..n {
        let row: f64 = (0..n).map(|j| k.get(i, j)).sum();
        worst = worst.max((row - 1.0).abs());
    }
    worst
}

/// Largest gap between a transition row and simulated move frequencies.
fn empirical_gap(k: &TransitionMatrix, step: &mut dyn FnMut(usize) -> Result<usize>, draws: usize) -> Result<f64> {
    let n = k.size();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut counts = vec![0usize; n];
        for _ in 0..draws {
            counts[step(i)?] += 1;
        }
        for j in 0..n {
            worst = worst.max((counts[j] as f64 / draws as f64 - k.get(i, j)).abs());
        }
    }
    Ok(worst)
}

fn kernel_stationarity() -> Result<Verdict> {
    let mut rng = RngStream::new(0x6);
    let (mut mis_r, mut rw_r): (f64, f64) = (0.0, 0.0);
    let sbn = Sbn::new(6, vec![4], "theta")?;
    for _ in 0..20 {
        let mut p = ParamVector::new();
        sbn.init(&mut rng, &mut p)?;
        jitter(&mut p, &mut rng, 1.5);
        let x = random_bits(&mut rng, 6);
        let lj: Vec<f64> = (0..16)
            .map(|s| sbn.joint_log_prob(&p, &x, &binary_state(s, 4)))
            .collect::<Result<_>>()?;
        let target = TableDist::from_log_weights(&lj)?;
        let proposal = random_table(&mut rng, 16, 1.0)?;
        let k = mis_matrix(&lj, &proposal)?;
        mis_r = mis_r
            .max(stationarity_residual(&k, &target)?)
            .max(independent_residual(&k, target.probs()));

        let nrf = NeuralRf::new(
            Potential::Mlp(mlp(vec![6, 8, 1], Activation::Tanh)),
            Domain::Binary(6),
            false,
            "theta",
        )?;
        let mut q = ParamVector::new();
        nrf.init(&mut rng, &mut q)?;
        jitter(&mut q, &mut rng, 1.5);
        let k = rw_flip_matrix(&nrf, &q)?;
        let target = nrf_table(&nrf, &q)?;
        rw_r = rw_r
            .max(stationarity_residual(&k, &target)?)
            .max(independent_residual(&k, target.probs()));
    }
    let truth = Truth::for_family(Family::BinaryFieldD6)?;
    let (nrf, q) = match &truth {
        Truth::Field { nrf, params } => (nrf.clone(), params.clone()),
        _ => unreachable!(),
    };
    let k_rw = rw_flip_matrix(&nrf, &q)?;
    rw_r = rw_r.max(independent_residual(&k_rw, truth.table()?.probs()));

    // The matrices describe the samplers that are actually run.
    let mut p = ParamVector::new();
    sbn.init(&mut rng, &mut p)?;
    jitter(&mut p, &mut rng, 1.0);
    let x = random_bits(&mut rng, 6);
    let lj: Vec<f64> = (0..16)
        .map(|s| sbn.joint_log_prob(&p, &x, &binary_state(s, 4)))
        .collect::<Result<_>>()?;
    let proposal = random_table(&mut rng, 16, 0.7)?;
    let k_mis = mis_matrix(&lj, &proposal)?;
    let target_fn = |s: &usize| -> Result<f64> { Ok(lj[*s]) };
    let prop_fn = |s: &usize| proposal.log_prob(*s);
    let sample_fn = |r: &mut RngStream| -> Result<usize> { Ok(proposal.sample(r)) };
    let kernel = MisKernel {
        target_log_joint: &target_fn,
        proposal_log_prob: &prop_fn,
        proposal_sample: &sample_fn,
    };
    let mut sim = RngStream::new(0x66);
    let gap_mis = empirical_gap(&k_mis, &mut |i| Ok(mis_step(&kernel, &i, &mut sim)?.0), 4000)?;
    let gap_rw = empirical_gap(
        &k_rw,
        &mut |i| {
            let (y, _) = rw_step(RwKernel::Flip { count: 1 }, &nrf, &q, &binary_state(i, 6), &mut sim)?;
            Ok(sagl::dists::binary_index(&y))
        },
        2000,
    )?;
    Ok(Verdict::new(
        mis_r <= 1e-10 && rw_r <= 1e-10 && gap_mis <= 0.05 && gap_rw <= 0.05,
        format!(
            "residual mis {mis_r:.2e}, random walk {rw_r:.2e} (tol 1e-10); \
             simulated vs matrix rows mis {gap_mis:.3}, random walk {gap_rw:.3}"
        ),
    ))
}

// ---------------------------------------------------------------------------
// 7 and 9

fn learner_convergence() -> Result<Verdict> {
    const THRESHOLD: f64 = 0.05;
    let out = tempfile::tempdir()?;
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, want_k) in [
        ("variational_sbn", None),
        ("iwae_sbn_data", Some(8)),
        ("ws_sbn", None),
        ("rws_sbn", Some(8)),
        ("jsa_sbn", None),
        ("sml_field", None),
        ("inclusive_field", None),
        ("nce_field", None),
    ] {
        let cfg = load_config(name)?;
        let family = cfg.dataset.family;
        let mut ok = cfg.dataset.n == 10_000
            && matches!(family, Family::SbnD6H4 | Family::BinaryFieldD6)
            && cfg.run.schedule == sagl::sa::SaSchedule::default();
        match (&cfg.learner, want_k) {
            (LearnerSection::Directed(c), Some(k)) => ok &= c.k == k,
            (LearnerSection::Nce(s), _) => ok &= s.nu == 10.0,
            _ => {}
        }
        let started = Instant::now();
        let summary = train(&cfg, out.path())?;
        let kl = summary.final_kl().unwrap_or(f64::INFINITY);
        ok &= kl <= THRESHOLD;
        let mut note = format!("{name} {kl:.4} ({:.0}s)", started.elapsed().as_secs_f64());
        if let LearnerSection::Nce(_) = cfg.learner {
            let gap = summary.last.as_ref().and_then(|r| r.log_z_gap).unwrap_or(f64::INFINITY);
            ok &= gap.abs() <= 0.1;
            note.push_str(&format!(" |c - log Z| {:.4}", gap.abs()));
        }
        if !ok {
            note.push_str(" FAIL");
        }
        pass &= ok;
        notes.push(note);
    }
    Ok(Verdict::new(pass, format!("final KL (tol {THRESHOLD}): {}", notes.join(", "))))
}

fn divergence_direction() -> Result<Verdict> {
    let out = tempfile::tempdir()?;
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, reverse) in [("vdm_kl_two_mode", false), ("vdm_reverse_kl_two_mode", true)] {
        let cfg = load_config(name)?;
        let summary = train(&cfg, out.path())?;
        let r = evaluate(&Checkpoint::load(&summary.checkpoint)?, Against::Truth)?;
        let (fwd, rev) = (r.kl.unwrap_or(f64::INFINITY), r.reverse_kl.unwrap_or(f64::INFINITY));
        let judged = if reverse { rev } else { fwd };
        pass &= judged <= 0.05;
        notes.push(format!("{name}: KL(p0||p) {fwd:.4}, KL(p||p0) {rev:.4}"));
    }
    Ok(Verdict::new(pass, format!("{} (tol 0.05 on the matching direction)", notes.join("; "))))
}

// ---------------------------------------------------------------------------
// 8

/// Closed-form `f` and `f'` for the oracle.
fn f_pair(kind: FKind, u: f64) -> (f64, f64) {
    match kind {
        FKind::Gan => (u * u.ln() - (u + 1.0) * (u + 1.0).ln(), (u / (u + 1.0)).ln()),
        FKind::Kl => (u * u.ln(), u.ln() + 1.0),
        FKind::ReverseKl => (-u.ln(), -1.0 / u),
        FKind::Nce { nu } => (u * u.ln() - (u + nu) * (u + nu).ln(), (u / (u + nu)).ln()),
    }
}

fn adversarial_fixed_points() -> Result<Verdict> {
    let p0 = Truth::for_family(Family::TwoModeD4)?.table()?;
    let mut rng = RngStream::new(0x8);
    let (mut obj_gap, mut div_gap, mut v_gap): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for spec in [FDivSpec::gan(), FDivSpec::kl(), FDivSpec::reverse_kl()] {
        for _ in 0..20 {
            let pt = random_table(&mut rng, 16, 1.0)?;
            let (d0, dt) = (Density::Table(p0.clone()), Density::Table(pt.clone()));
            let refs = optimal_references(&d0, &dt, &spec)?;
            let obj = vdm_objective_exact(&spec, &d0, &dt, &refs.t)?;
            let lib = exact_divergence(&d0, &dt, &DivKind::F(spec.clone()))?;
            let mine: f64 = (0..16)
                .map(|i| pt.prob(i) * f_pair(spec.kind, p0.prob(i) / pt.prob(i)).0)
                .sum();
            let via_v: Vec<f64> = refs.v.iter().map(|&v| spec.g(v)).collect();
            obj_gap = obj_gap.max((obj - mine).abs());
            div_gap = div_gap.max((lib - mine).abs());
            v_gap = v_gap.max((vdm_objective_exact(&spec, &d0, &dt, &via_v)? - mine).abs());
        }
    }
    let d0 = Density::Table(p0.clone());
    let gan = FDivSpec::gan();
    let refs = optimal_references(&d0, &d0, &gan)?;
    let at_truth = vdm_objective_exact(&gan, &d0, &d0, &refs.t)?;
    let gan_gap = (at_truth + 4f64.ln()).abs();

    let mut conj: f64 = 0.0;
    let mut specs = registry()?;
    specs.push(FDivSpec::nce(10.0)?);
    for spec in &specs {
        conj = conj.max(conjugate_identity_residual(spec)?);
        for u in u_grid() {
            let (f, fp) = f_pair(spec.kind, u);
            conj = conj.max((spec.conj(fp)? - (u * fp - f)).abs());
        }
    }
    Ok(Verdict::new(
        obj_gap <= 1e-6 && div_gap <= 1e-6 && v_gap <= 1e-6 && gan_gap <= 1e-6 && conj <= 1e-10,
        format!(
            "|F(T*) - D_f| {obj_gap:.2e}, via critic outputs {v_gap:.2e}, oracle D_f vs closed form {div_gap:.2e} \
             (tol 1e-6); gan at p0 {at_truth:.9} (gap {gan_gap:.1e}); conjugate residual {conj:.2e} (tol 1e-10)"
        ),
    ))
}

// ---------------------------------------------------------------------------
// 10

fn nce_equivalence() -> Result<Verdict> {
    let truth = Truth::for_family(Family::BinaryFieldD6)?;
    let p0 = truth.table()?;
    let (nrf, base) = match &truth {
        Truth::Field { nrf, params } => (nrf.clone(), params.clone()),
        _ => unreachable!(),
    };
    let field = NeuralRf::new(nrf.potential.clone(), nrf.domain, true, nrf.prefix.clone())?;
    let mut star = base.clone();
    star.add(field.c_name(), vec![1], vec![sagl::oracle::enumerate_log_z(&nrf, &base)?])?;

    let (data, _) = make_dataset(&DatasetSpec {
        family: Family::BinaryFieldD6,
        n: 2000,
        seed: 3,
    })?;
    let mut rng = RngStream::new(0x10);
    let marg: Vec<f64> = data.mean().iter().map(|m| m.clamp(0.02, 0.98)).collect();
    let marg_table = TableDist::new(
        (0..64)
            .map(|s| {
                binary_state(s, 6)
                    .iter()
                    .zip(&marg)
                    .map(|(x, m)| if *x > 0.5 { *m } else { 1.0 - m })
                    .product()
            })
            .collect(),
    )?;
    let noises = [
        TableDist::uniform(64)?,
        marg_table,
    ];

    let mut resid: f64 = 0.0;
    let mut j_gap: f64 = 0.0;
    for pn in &noises {
        for nu in [0.5, 1.0, 5.0, 10.0] {
            let cfg = NceConfig {
                nu,
                noise: Noise::Table {
                    dim: 6,
                    dist: pn.clone(),
                },
            };
            let noise: Vec<Vec<f64>> = (0..4000).map(|_| cfg.noise.sample(&mut rng)).collect();
            for p in [star.clone(), {
                let mut q = star.clone();
                jitter(&mut q, &mut rng, 0.5);
                q
            }] {
                resid = resid.max(nce_fdiv_equivalence(&field, &p, &cfg, &data.xs, &noise)?);
                let logit = |x: &[f64]| -> Result<f64> {
                    Ok(field.potential(&p, x)? - nu.ln() - cfg.noise.log_prob(x)?)
                };
                let mut a = 0.0;
                for x in &data.xs {
                    a += log_sigmoid(logit(x)?);
                }
                let mut b = 0.0;
                for y in &noise {
                    b += log_sigmoid(-logit(y)?);
                }
                let mine = a / data.len() as f64 + nu * b / noise.len() as f64;
                j_gap = j_gap.max((mine - nce_objective(&field, &p, &cfg, &data.xs, &noise)?).abs());
            }
        }
    }

    let mut beaten = 0;
    let mut margin = f64::INFINITY;
    for pn in &noises {
        let best = nce_objective_exact(&field, &star, 10.0, &p0, pn)?;
        for _ in 0..100 {
            let mut q = star.clone();
            jitter(&mut q, &mut rng, 0.1);
            let j = nce_objective_exact(&field, &q, 10.0, &p0, pn)?;
            margin = margin.min(best - j);
            if j > best {
                beaten += 1;
            }
        }
    }
    Ok(Verdict::new(
        resid <= 1e-10 && j_gap <= 1e-10 && beaten == 0,
        format!(
            "|J - (F + nu ln nu)| {resid:.2e} (tol 1e-10), independent J {j_gap:.1e}; \
             probe: {beaten} of 200 perturbations beat the truth, smallest margin {margin:.2e}"
        ),
    ))
}

// ---------------------------------------------------------------------------
// 11

fn gap_decomposition() -> Result<Verdict> {
    let mut rng = RngStream::new(0x11);
    let mut sum_gap: f64 = 0.0;
    let mut min_amort = f64::INFINITY;
    let mut inference_gap: f64 = 0.0;
    let mut checked = 0;
    for i in 0..20 {
        let m = Sbn::new(5, vec![3], "theta")?;
        let e = BernoulliEncoder::linear(5, 3, "phi")?;
        let mut p = ParamVector::new();
        m.init(&mut rng, &mut p)?;
        e.init(&mut rng, &mut p)?;
        jitter(&mut p, &mut rng, if i % 2 == 0 { 0.5 } else { 1.5 });
        for s in 0..32 {
            let x = binary_state(s, 5);
            let g = gap_decompose(&m, &e, &p, &x)?;
            sum_gap = sum_gap.max((g.inference - (g.approximation + g.amortization)).abs());
            min_amort = min_amort.min(g.amortization);
            let rows = latent_rows(&m, &e, &p, &x)?;
            let elbo: f64 = rows.iter().map(|(q, lw)| q * lw).sum();
            inference_gap = inference_gap.max((brute_log_marginal(&m, &p, &x)? - elbo - g.inference).abs());
            checked += 1;
        }
    }
    Ok(Verdict::new(
        sum_gap <= 1e-9 && min_amort >= 0.0 && inference_gap <= 1e-9,
        format!(
            "{checked} points: |inference - (approximation + amortization)| {sum_gap:.2e} (tol 1e-9), \
             min amortization {min_amort:.2e}, inference vs log p - elbo {inference_gap:.2e}"
        ),
    ))
}

// ---------------------------------------------------------------------------
// 12

const REPLAY_STEPS: u64 = 1000;

/// Every shipped config, shortened.
fn replay_configs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(repo_root().join("configs"))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    entries.sort();
    for path in entries {
        let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&path)?)
            .map_err(|e| sagl::Error::invalid(e.to_string()))?;
        let run = v
            .as_object_mut()
            .expect("config object")
            .entry("run")
            .or_insert_with(|| Value::Object(Default::default()));
        run["steps"] = REPLAY_STEPS.into();
        run["log_every"] = 200.into();
        let dest = dir.join(path.file_name().unwrap());
        std::fs::write(&dest, serde_json::to_string_pretty(&v).unwrap())?;
        out.push(dest);
    }
    Ok(out)
}

fn run_cli(out: &Path, jobs: usize, configs: &[PathBuf]) -> Result<i32> {
    let status = Command::new(env!("CARGO_BIN_EXE_sagl"))
        .arg("--out-dir")
        .arg(out)
        .arg("--jobs")
        .arg(jobs.to_string())
        .arg("train")
        .args(configs)
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .status()?;
    Ok(status.code().unwrap_or(-1))
}

fn determinism() -> Result<Verdict> {
    let tmp = tempfile::tempdir()?;
    let configs = replay_configs(tmp.path())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let code_a = run_cli(&a, 1, &configs)?;
    let code_b = run_cli(&b, 2, &configs)?;
    let mut compared = 0;
    let mut differ = Vec::new();
    for entry in std::fs::read_dir(&a)? {
        let run = entry?.file_name();
        for file in ["metrics.csv", "checkpoint.json"] {
            let (fa, fb) = (a.join(&run).join(file), b.join(&run).join(file));
            if !fa.exists() && !fb.exists() {
                continue;
            }
            let same = std::fs::read(&fa).ok() == std::fs::read(&fb).ok();
            if !same {
                differ.push(format!("{}/{file}", run.to_string_lossy()));
            }
            compared += 1;
        }
    }
    Ok(Verdict::new(
        differ.is_empty() && code_a == code_b && compared >= 2 * configs.len() - 2,
        format!(
            "{} configs x {REPLAY_STEPS} steps, jobs 1 vs 2: {compared} files compared, {} differ (exit {code_a}/{code_b})",
            configs.len(),
            differ.len()
        ),
    ))
}
