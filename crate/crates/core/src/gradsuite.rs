//! Finite-difference verification of every tape op and of full episode losses.
//!
//! Each check scalarizes its output with fixed random weights so that every
//! output coordinate contributes a distinct upstream gradient. Episode checks
//! draw small random GZSL and FSL episodes (at most 8 classes, 32 queries and
//! 16 embedding dimensions) and differentiate the loss with respect to every
//! network parameter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{grad_check_many, OpKind, Tape, Tensor, Var};
use crate::error::Result;
use crate::grounding::{
    get_embedding, get_prototypes_fsl, get_prototypes_zsl, is_of_class, Activation, BoundEmbedding, Domain, Mlp,
    VariableGrounding,
};
use crate::kb::{best_sat_objective, episode_loss, KbParams, KnowledgeBase, Predicate};
use crate::realogic::{aggregate_generalized_mean, aggregate_product_pmean, Truths};

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub eps: f64,
    pub tolerance: f64,
    pub episodes: usize,
    pub seed: u64,
    /// Corrupts the backward rule of one op kind (negative control).
    pub fault: Option<OpKind>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            eps: 1e-5,
            tolerance: 1e-4,
            episodes: 20,
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub max_rel_error: f64,
    /// (input index, flat coordinate) of the largest error.
    pub worst: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub eps: f64,
    pub tolerance: f64,
    pub checks: Vec<CheckOutcome>,
}

impl SuiteReport {
    pub fn worst(&self) -> Option<&CheckOutcome> {
        self.checks.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    /// Checks at or above tolerance (non-finite errors count as failures).
    pub fn failures(&self) -> Vec<&CheckOutcome> {
        self.checks.iter().filter(|c| !(c.max_rel_error < self.tolerance)).collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("non-empty shape")
}

/// Values with magnitude in `[0.1, 1]` and random sign, away from ReLU/clamp kinks.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::new(shape, data).expect("non-empty shape")
}

type OpFn = for<'t> fn(&[Var<'t>]) -> Result<Var<'t>>;

struct Runner {
    cfg: SuiteConfig,
    checks: Vec<CheckOutcome>,
}

impl Runner {
    fn check<F>(&mut self, name: impl Into<String>, inputs: &[Tensor], f: F) -> Result<()>
    where
        F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
    {
        let fault = self.cfg.fault;
        let report = grad_check_many(
            |t, xs| {
                t.inject_fault(fault);
                f(t, xs)
            },
            inputs,
            self.cfg.eps,
        )?;
        self.checks.push(CheckOutcome {
            name: name.into(),
            max_rel_error: report.max_rel_error,
            worst: report.worst,
        });
        Ok(())
    }

    /// `sum(op(xs) * w)` with a fixed random `w` shaped like the output.
    fn check_op(&mut self, name: &str, rng: &mut ChaCha8Rng, inputs: Vec<Tensor>, op: OpFn) -> Result<()> {
        let out_shape = {
            let tape = Tape::new();
            let vars: Vec<_> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
            op(&vars)?.shape()
        };
        let w = uniform(rng, out_shape, -1.0, 1.0);
        self.check(format!("op:{name}"), &inputs, move |t, xs| {
            op(xs)?.mul(t.constant(w.clone()))?.sum(None)
        })
    }
}

fn op_checks(r: &mut Runner, rng: &mut ChaCha8Rng) -> Result<()> {
    let m = |rng: &mut ChaCha8Rng, rows, cols| uniform(rng, vec![rows, cols], -1.0, 1.0);
    let pos = |rng: &mut ChaCha8Rng, rows, cols| uniform(rng, vec![rows, cols], 0.5, 2.0);

    let (a, b) = (m(rng, 3, 4), m(rng, 3, 4));
    r.check_op("add", rng, vec![a.clone(), b.clone()], |x| x[0].add(x[1]))?;
    r.check_op("sub", rng, vec![a.clone(), b.clone()], |x| x[0].sub(x[1]))?;
    r.check_op("mul", rng, vec![a.clone(), b], |x| x[0].mul(x[1]))?;
    let bias = uniform(rng, vec![4], -1.0, 1.0);
    r.check_op("add_bias", rng, vec![a.clone(), bias.clone()], |x| x[0].add(x[1]))?;
    r.check_op("sub_bias", rng, vec![a.clone(), bias], |x| x[0].sub(x[1]))?;
    r.check_op("scale", rng, vec![a.clone()], |x| Ok(x[0].scale(-2.5)))?;
    r.check_op("add_scalar", rng, vec![a.clone()], |x| Ok(x[0].add_scalar(0.75)))?;
    r.check_op("one_minus", rng, vec![a.clone()], |x| Ok(x[0].one_minus()))?;
    r.check_op("neg", rng, vec![a.clone()], |x| Ok(x[0].neg()))?;
    r.check_op("exp", rng, vec![a.clone()], |x| Ok(x[0].exp()))?;
    r.check_op("sigmoid", rng, vec![a.map(|v| 3.0 * v)], |x| Ok(x[0].sigmoid()))?;
    let p = pos(rng, 3, 4);
    r.check_op("log", rng, vec![p.clone()], |x| x[0].log())?;
    r.check_op("pow_frac", rng, vec![p.clone()], |x| x[0].pow_scalar(2.7))?;
    r.check_op("pow_root", rng, vec![p], |x| x[0].pow_scalar(0.5))?;
    r.check_op("pow_int_signed", rng, vec![a.clone()], |x| x[0].pow_scalar(3.0))?;
    let kinked = away_from_zero(rng, vec![3, 4]);
    r.check_op("relu", rng, vec![kinked.clone()], |x| Ok(x[0].relu()))?;
    r.check_op("clamp_min", rng, vec![kinked], |x| Ok(x[0].clamp_min(0.0)))?;
    let (l, rt) = (m(rng, 3, 4), m(rng, 4, 2));
    r.check_op("matmul", rng, vec![l, rt], |x| x[0].matmul(x[1]))?;
    let (q, pr) = (m(rng, 3, 4), m(rng, 5, 4));
    r.check_op("pairwise_sq_dist", rng, vec![q, pr], |x| x[0].pairwise_sq_dist(x[1]))?;
    r.check_op("sum_rows", rng, vec![a.clone()], |x| x[0].sum(Some(0)))?;
    r.check_op("sum_cols", rng, vec![a.clone()], |x| x[0].sum(Some(1)))?;
    r.check_op("sum_all", rng, vec![a.clone()], |x| Ok(x[0].sum_all()))?;
    r.check_op("mean_rows", rng, vec![a.clone()], |x| x[0].mean(Some(0)))?;
    r.check_op("mean_cols", rng, vec![a.clone()], |x| x[0].mean(Some(1)))?;
    r.check_op("mean_all", rng, vec![a.clone()], |x| x[0].mean(None))?;
    r.check_op("gather", rng, vec![a.clone()], |x| x[0].gather(&[0, 5, 5, 11, 3]))?;
    r.check_op("reshape", rng, vec![a.clone()], |x| x[0].reshape(vec![2, 6]))?;
    let (q, pr) = (m(rng, 3, 2), m(rng, 4, 2));
    r.check_op("pair_concat", rng, vec![q, pr], |x| x[0].pair_concat(x[1]))?;
    Ok(())
}

fn logic_checks(r: &mut Runner, rng: &mut ChaCha8Rng) -> Result<()> {
    let (q, p) = (uniform(rng, vec![4, 3], -1.0, 1.0), uniform(rng, vec![3, 3], -1.0, 1.0));
    for alpha in [0.1, 1.0] {
        r.check(format!("isOfClass(alpha={alpha})"), &[q.clone(), p.clone()], move |t, x| {
            let protos = crate::grounding::PrototypeSet::new(x[1], vec![0, 1, 2])?;
            let w = t.constant(Tensor::from_rows(&[[1.0, -0.5, 0.25], [0.3, 0.7, -1.0], [0.9, 0.1, 0.2], [-0.4, 0.6, 0.8]])?);
            is_of_class(x[0], &protos, alpha)?.values.mul(w)?.sum(None)
        })?;
    }
    let truths = uniform(rng, vec![7], 0.05, 1.0);
    for pf in [1.0, 2.0, 4.0] {
        r.check(format!("A_pPR(p={pf})"), std::slice::from_ref(&truths), move |_, x| {
            Ok(aggregate_product_pmean(&Truths::new(x[0]), pf)?.var())
        })?;
        let logs = uniform(rng, vec![7], -3.0, -0.01);
        r.check(format!("A_pPR_logs(p={pf})"), &[logs], move |_, x| {
            Ok(aggregate_product_pmean(&Truths::with_logs(x[0].exp(), x[0]), pf)?.var())
        })?;
        r.check(format!("A_pM(p={pf})"), std::slice::from_ref(&truths), move |_, x| {
            Ok(aggregate_generalized_mean(&Truths::new(x[0]), pf)?.var())
        })?;
    }
    Ok(())
}

/// Zero biases put dead-layer pre-activations exactly on the ReLU kink.
fn randomize_biases(mlp: &mut Mlp, rng: &mut ChaCha8Rng) {
    for p in mlp.parameters_mut().into_iter().filter(|p| !p.regularized) {
        p.value.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-0.5..0.5));
    }
}

fn param_values(mlp: &Mlp) -> Vec<Tensor> {
    mlp.parameters().into_iter().map(|p| p.value.clone()).collect()
}

/// Random labels over `0..k` in which every class appears at least once.
fn covering_labels(rng: &mut ChaCha8Rng, k: usize, n: usize) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..k).collect();
    labels.extend((k..n).map(|_| rng.random_range(0..k)));
    labels
}

type LossFn = Box<dyn for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>>;

/// Minimum distance of any ReLU/clamp input from its kink for an episode to be used.
const KINK_MARGIN: f64 = 1e-3;
const MAX_REDRAWS: usize = 100;

struct EpisodeCase {
    name: String,
    inputs: Vec<Tensor>,
    loss: LossFn,
}

impl EpisodeCase {
    fn kink_margin(&self) -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<_> = self.inputs.iter().map(|x| tape.variable(x.clone())).collect();
        (self.loss)(&tape, &vars)?;
        Ok(tape.kink_margin().unwrap_or(f64::INFINITY))
    }
}

fn draw_episode(rng: &mut ChaCha8Rng, i: usize) -> Result<EpisodeCase> {
    let k = rng.random_range(2..=8usize);
    let n = rng.random_range(k..=32usize);
    let m = rng.random_range(2..=16usize);
    let hidden = rng.random_range(2..=8usize);
    let alpha = rng.random_range(0.05..0.5);
    let p_forall = [1.0, 2.0, 4.0][i % 3];
    let (p_agg, w_neg) = match i % 4 {
        0 => (1.0, 0.0),
        1 => (1.0, rng.random_range(0.1..2.0)),
        2 => (2.0, rng.random_range(0.1..2.0)),
        _ => (3.0, rng.random_range(0.1..2.0)),
    };
    let params = KbParams { p_agg, p_forall, w_neg };
    let lambda = if i.is_multiple_of(2) { 0.0 } else { 1e-2 };
    let relation = i % 5 == 4;
    let query_labels = covering_labels(rng, k, n);
    let mut rel_head = Mlp::init("r", &[2 * m, hidden, 1], &[Activation::Relu, Activation::Identity], 0.3, rng)?;
    randomize_biases(&mut rel_head, rng);
    let tag = format!(
        "k={k},n={n},m={m},p_agg={p_agg},p_forall={p_forall},w_neg={w_neg:.2}{}",
        if relation { ",relation" } else { "" }
    );
    let rel_inputs: Vec<Tensor> = if relation { param_values(&rel_head) } else { Vec::new() };
    let rel = relation.then_some(rel_head);

    if i.is_multiple_of(2) {
        // GZSL: prototypes from attributes through g.
        let a = rng.random_range(2..=8usize);
        let mut g = Mlp::init("g", &[a, hidden, m], &[Activation::Relu, Activation::Relu], 0.5, rng)?;
        randomize_biases(&mut g, rng);
        let attrs = uniform(rng, vec![k, a], 0.0, 1.0);
        let feats = uniform(rng, vec![n, m], 0.0, 1.0);
        let n_g = g.parameters().len();
        let mut inputs = param_values(&g);
        inputs.extend(rel_inputs);
        let loss: LossFn = Box::new(move |t, x| {
            let bg = g.bind_with(&x[..n_g])?;
            let br = rel.as_ref().map(|h| h.bind_with(&x[n_g..])).transpose()?;
            let q = VariableGrounding::new("q", Domain::Features, t.constant(feats.clone()), Some(query_labels.clone()))?;
            let qe = get_embedding(&q, &BoundEmbedding::Identity)?;
            let protos = get_prototypes_zsl(t.constant(attrs.clone()), &(0..k).collect::<Vec<_>>(), &bg)?;
            let pred = br.as_ref().map_or(Predicate::Distance { alpha }, Predicate::Relation);
            let kb = KnowledgeBase::ground(&qe, &protos, pred, params)?;
            let mut reg = bg.regularized_vars();
            reg.extend(br.iter().flat_map(|h| h.regularized_vars()));
            best_sat_objective(episode_loss(&kb)?, &reg, lambda)
        });
        Ok(EpisodeCase { name: format!("episode:gzsl[{i}]({tag})"), inputs, loss })
    } else {
        // FSL: unbalanced support, prototypes from f over the support.
        let d = rng.random_range(2..=8usize);
        let mut f = Mlp::init("f", &[d, hidden, m], &[Activation::Relu, Activation::Identity], 0.5, rng)?;
        randomize_biases(&mut f, rng);
        let n_support = rng.random_range(k..=2 * k + 3);
        let support_labels = covering_labels(rng, k, n_support);
        let support = uniform(rng, vec![n_support, d], -1.0, 1.0);
        let queries = uniform(rng, vec![n, d], -1.0, 1.0);
        let n_f = f.parameters().len();
        let mut inputs = param_values(&f);
        inputs.extend(rel_inputs);
        let loss: LossFn = Box::new(move |t, x| {
            let bf = BoundEmbedding::Network(f.bind_with(&x[..n_f])?);
            let br = rel.as_ref().map(|h| h.bind_with(&x[n_f..])).transpose()?;
            let s = VariableGrounding::new("s", Domain::Features, t.constant(support.clone()), Some(support_labels.clone()))?;
            let protos = get_prototypes_fsl(&s, &bf)?;
            let q = VariableGrounding::new("q", Domain::Features, t.constant(queries.clone()), Some(query_labels.clone()))?;
            let qe = get_embedding(&q, &bf)?;
            let pred = br.as_ref().map_or(Predicate::Distance { alpha }, Predicate::Relation);
            let kb = KnowledgeBase::ground(&qe, &protos, pred, params)?;
            let mut reg = match &bf {
                BoundEmbedding::Network(m) => m.regularized_vars(),
                BoundEmbedding::Identity => Vec::new(),
            };
            reg.extend(br.iter().flat_map(|h| h.regularized_vars()));
            best_sat_objective(episode_loss(&kb)?, &reg, lambda)
        });
        Ok(EpisodeCase { name: format!("episode:fsl[{i}]({tag})"), inputs, loss })
    }
}

fn episode_checks(r: &mut Runner, rng: &mut ChaCha8Rng) -> Result<()> {
    for i in 0..r.cfg.episodes {
        let mut case = draw_episode(rng, i)?;
        let mut redraws = 0;
        while case.kink_margin()? < KINK_MARGIN {
            redraws += 1;
            if redraws > MAX_REDRAWS {
                return Err(crate::Error::contract(format!("no kink-free draw for episode {i}")));
            }
            case = draw_episode(rng, i)?;
        }
        let EpisodeCase { name, inputs, loss } = case;
        r.check(name, &inputs, loss)?;
    }
    Ok(())
}

/// Runs every op check, the logic checks, and `cfg.episodes` episode checks.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut runner = Runner {
        cfg: cfg.clone(),
        checks: Vec::new(),
    };
    op_checks(&mut runner, &mut rng)?;
    logic_checks(&mut runner, &mut rng)?;
    episode_checks(&mut runner, &mut rng)?;
    Ok(SuiteReport {
        eps: cfg.eps,
        tolerance: cfg.tolerance,
        checks: runner.checks,
    })
}
