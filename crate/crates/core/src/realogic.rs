//! Real Logic connectives and quantifiers.
//!
//! Truth values are tape variables in `[0, 1]`. A truth may also carry its exact
//! logarithm when the predicate that produced it has one in closed form
//! (`isOfClass` gives `log tau = -alpha d^2`); the product p-mean then works on
//! those logs directly and never clamps.

use crate::diffcore::Var;
use crate::error::{Error, Result};
use crate::grounding::{PrototypeSet, VariableGrounding};

/// Lower clamp applied to truths before taking logs.
pub const TRUTH_EPS: f64 = 1e-12;

/// A tensor of truth values, optionally with their exact logs.
#[derive(Clone, Copy, Debug)]
pub struct Truths<'t> {
    pub values: Var<'t>,
    pub log_values: Option<Var<'t>>,
}

impl<'t> Truths<'t> {
    pub fn new(values: Var<'t>) -> Self {
        Truths {
            values,
            log_values: None,
        }
    }

    pub fn with_logs(values: Var<'t>, log_values: Var<'t>) -> Self {
        Truths {
            values,
            log_values: Some(log_values),
        }
    }

    /// Elementwise `1 - t`. The log form is dropped.
    pub fn not(&self) -> Truths<'t> {
        Truths::new(self.values.one_minus())
    }

    /// Logs of the truths, clamping at [`TRUTH_EPS`] when no exact log exists.
    pub fn logs(&self) -> Result<Var<'t>> {
        match self.log_values {
            Some(l) => Ok(l),
            None => self.values.clamp_min(TRUTH_EPS).log(),
        }
    }

    fn gather(&self, idx: &[usize]) -> Result<Truths<'t>> {
        Ok(Truths {
            values: self.values.gather(idx)?,
            log_values: self.log_values.map(|l| l.gather(idx)).transpose()?,
        })
    }
}

/// A scalar truth value.
#[derive(Clone, Copy, Debug)]
pub struct Truth<'t> {
    value: Var<'t>,
    log_value: Option<Var<'t>>,
}

impl<'t> Truth<'t> {
    pub fn new(value: Var<'t>) -> Result<Self> {
        if value.value().len() != 1 {
            return Err(Error::contract("a truth value must be a scalar"));
        }
        Ok(Truth {
            value,
            log_value: None,
        })
    }

    pub fn var(&self) -> Var<'t> {
        self.value
    }

    pub fn item(&self) -> f64 {
        self.value.value().data()[0]
    }

    /// `log(t)`, exact when the truth was built in log space.
    pub fn log(&self) -> Result<Var<'t>> {
        match self.log_value {
            Some(l) => Ok(l),
            None => self.value.clamp_min(TRUTH_EPS).log(),
        }
    }
}

/// Standard negation `1 - t`.
pub fn fuzzy_not(t: Truth<'_>) -> Truth<'_> {
    Truth {
        value: t.value.one_minus(),
        log_value: None,
    }
}

fn check_p(p_forall: f64) -> Result<()> {
    if p_forall >= 1.0 && p_forall.is_finite() {
        Ok(())
    } else {
        Err(Error::contract(format!("p_forall must be >= 1, got {p_forall}")))
    }
}

/// `A_pPR(t_1..t_n) = (prod t_i)^(1/p)`, evaluated as `exp((1/p) sum log t_i)`.
pub fn aggregate_product_pmean<'t>(values: &Truths<'t>, p_forall: f64) -> Result<Truth<'t>> {
    check_p(p_forall)?;
    let log_value = values.logs()?.sum_all().scale(1.0 / p_forall);
    Ok(Truth {
        value: log_value.exp(),
        log_value: Some(log_value),
    })
}

/// `A_pM(t_1..t_n) = ((1/n) sum t_i^p)^(1/p)` with a single exponent `p = p_forall`.
pub fn aggregate_generalized_mean<'t>(values: &Truths<'t>, p_forall: f64) -> Result<Truth<'t>> {
    check_p(p_forall)?;
    // A_pM is 1-homogeneous, so scaling by the largest truth m and treating m as
    // a constant leaves gradients exact. Equal inputs then give t/m = 1 exactly,
    // which makes A_pM(tau, ..., tau) = tau hold bit for bit.
    let m = values.values.value().max_abs();
    let scaled = if m > 0.0 { values.values.div_scalar(m) } else { values.values };
    let powered = if p_forall == 1.0 {
        scaled
    } else {
        scaled.pow_scalar(p_forall)?
    };
    let mean = powered.mean(None)?;
    let root = if p_forall == 1.0 {
        mean
    } else {
        mean.pow_scalar(1.0 / p_forall)?
    };
    let value = if m > 0.0 { root.scale(m) } else { root };
    Ok(Truth {
        value,
        log_value: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Aggregator {
    /// Generalized product p-mean, `A_pPR`.
    ProductPMean,
    /// Generalized mean, `A_pM`.
    GeneralizedMean,
}

impl Aggregator {
    pub fn apply<'t>(self, values: &Truths<'t>, p_forall: f64) -> Result<Truth<'t>> {
        match self {
            Aggregator::ProductPMean => aggregate_product_pmean(values, p_forall),
            Aggregator::GeneralizedMean => aggregate_generalized_mean(values, p_forall),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Guard {
    /// `q_l = p_l`
    Equal,
    /// `q_l != p_l`
    NotEqual,
}

/// The (query, prototype) pairs that survive a label guard.
///
/// Queries and their labels are zipped (diagonal quantification); each query is
/// then paired with every prototype row whose label passes the guard. Pairs are
/// ordered query-major, prototypes in `PrototypeSet` order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GuardedPairs {
    pub guard: Guard,
    pub pairs: Vec<(usize, usize)>,
    num_protos: usize,
}

impl GuardedPairs {
    pub fn select(query_labels: &[usize], proto_labels: &[usize], guard: Guard) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, &ql) in query_labels.iter().enumerate() {
            let before = pairs.len();
            for (j, &pl) in proto_labels.iter().enumerate() {
                let keep = match guard {
                    Guard::Equal => ql == pl,
                    Guard::NotEqual => ql != pl,
                };
                if keep {
                    pairs.push((i, j));
                }
            }
            if guard == Guard::Equal && pairs.len() == before {
                return Err(Error::MissingPrototype { label: ql });
            }
        }
        Ok(GuardedPairs {
            guard,
            pairs,
            num_protos: proto_labels.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Row-major indices into an `n x K` truth matrix.
    pub fn flat_indices(&self) -> Vec<usize> {
        self.pairs
            .iter()
            .map(|&(i, j)| i * self.num_protos + j)
            .collect()
    }
}

/// `forall Diag(q, q_l) (forall Diag(p, p_l) : guard (predicate(q, p)))`.
///
/// `predicate` maps query values `[n x M]` and prototype values `[K x M]` to an
/// `n x K` truth matrix; only the guard-selected entries are aggregated.
pub fn forall_diag_guarded<'t, P>(
    queries: &VariableGrounding<'t>,
    protos: &PrototypeSet<'t>,
    guard: Guard,
    predicate: P,
    aggregator: Aggregator,
    p_forall: f64,
) -> Result<Truth<'t>>
where
    P: FnOnce(Var<'t>, Var<'t>) -> Result<Truths<'t>>,
{
    let labels = queries
        .labels
        .as_deref()
        .ok_or_else(|| Error::contract(format!("variable '{}' has no labels", queries.name)))?;
    let pairs = GuardedPairs::select(labels, protos.labels(), guard)?;
    if pairs.is_empty() {
        return Err(Error::contract(format!(
            "no (query, prototype) pair satisfies the {guard:?} guard"
        )));
    }
    let matrix = predicate(queries.values, protos.prototypes())?;
    let expected = vec![labels.len(), protos.len()];
    if matrix.values.shape() != expected {
        return Err(Error::dim(format!(
            "predicate returned {:?}, expected {expected:?}",
            matrix.values.shape()
        )));
    }
    let selected = matrix.gather(&pairs.flat_indices())?;
    aggregator.apply(&selected, p_forall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Tape, Tensor};
    use crate::grounding::Domain;

    fn truths<'t>(tape: &'t Tape, v: &[f64]) -> Truths<'t> {
        Truths::new(tape.constant(Tensor::vector(v.to_vec()).unwrap()))
    }

    #[test]
    fn negation_examples() {
        let tape = Tape::new();
        for (x, y) in [(0.0, 1.0), (1.0, 0.0), (0.3, 0.7)] {
            let t = Truth::new(tape.scalar(x)).unwrap();
            assert!((fuzzy_not(t).item() - y).abs() < 1e-15);
        }
    }

    #[test]
    fn product_pmean_examples() {
        let tape = Tape::new();
        let t = aggregate_product_pmean(&truths(&tape, &[0.5, 0.5]), 2.0).unwrap();
        assert!((t.item() - 0.5).abs() < 1e-15);
        let t = aggregate_product_pmean(&truths(&tape, &[1.0, 1.0, 1.0]), 3.7).unwrap();
        assert_eq!(t.item(), 1.0);
        let t = aggregate_product_pmean(&truths(&tape, &[0.9, 0.8, 0.6]), 2.0).unwrap();
        assert!((t.item() - 0.432f64.sqrt()).abs() < 1e-14);
        assert!((t.item() - 0.657267).abs() < 1e-6);
    }

    #[test]
    fn generalized_mean_examples() {
        let tape = Tape::new();
        let t = aggregate_generalized_mean(&truths(&tape, &[0.37; 3]), 2.0).unwrap();
        assert!((t.item() - 0.37).abs() < 1e-15);
        let t = aggregate_generalized_mean(&truths(&tape, &[0.2, 0.8]), 2.0).unwrap();
        assert!((t.item() - 0.34f64.sqrt()).abs() < 1e-15);
        assert!((t.item() - 0.583095).abs() < 1e-6);
        let t = aggregate_generalized_mean(&truths(&tape, &[0.0, 0.0]), 3.0).unwrap();
        assert_eq!(t.item(), 0.0);
    }

    #[test]
    fn generalized_mean_is_exactly_idempotent() {
        let tape = Tape::new();
        for tau in [1e-9, 0.1, 0.3, 0.37, 2.0 / 3.0, 0.999_999] {
            for n in [1, 3, 7, 50] {
                for p in [1.0, 2.0, 3.0, 4.5] {
                    let t = aggregate_generalized_mean(&truths(&tape, &vec![tau; n]), p).unwrap();
                    assert_eq!(t.item(), tau, "tau {tau} n {n} p {p}");
                }
            }
        }
    }

    #[test]
    fn zero_truth_is_clamped_for_products() {
        let tape = Tape::new();
        let t = aggregate_product_pmean(&truths(&tape, &[0.0]), 1.0).unwrap();
        assert!((t.item() - TRUTH_EPS).abs() < 1e-20);
        assert!(t.log().unwrap().item().unwrap().is_finite());
    }

    #[test]
    fn p_below_one_is_rejected() {
        let tape = Tape::new();
        assert!(aggregate_generalized_mean(&truths(&tape, &[0.5]), 0.5).is_err());
        assert!(aggregate_product_pmean(&truths(&tape, &[0.5]), 0.0).is_err());
    }

    #[test]
    fn guard_selection() {
        let eq = GuardedPairs::select(&[0, 1], &[0, 1], Guard::Equal).unwrap();
        assert_eq!(eq.pairs, vec![(0, 0), (1, 1)]);
        let ne = GuardedPairs::select(&[0, 1], &[0, 1], Guard::NotEqual).unwrap();
        assert_eq!(ne.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(ne.flat_indices(), vec![1, 2]);
        assert!(matches!(
            GuardedPairs::select(&[2], &[0, 1], Guard::Equal),
            Err(Error::MissingPrototype { label: 2 })
        ));
    }

    fn grounding<'t>(tape: &'t Tape, labels: Vec<usize>) -> VariableGrounding<'t> {
        let n = labels.len();
        VariableGrounding::new(
            "q",
            Domain::Embeddings,
            tape.constant(Tensor::zeros(vec![n, 2]).unwrap()),
            Some(labels),
        )
        .unwrap()
    }

    #[test]
    fn single_pair_constant_predicate() {
        let tape = Tape::new();
        let q = grounding(&tape, vec![4]);
        let p = PrototypeSet::new(tape.constant(Tensor::zeros(vec![1, 2]).unwrap()), vec![4]).unwrap();
        let pred = |_: Var<'_>, _: Var<'_>| Ok(Truths::new(tape.constant(Tensor::full(vec![1, 1], 0.7).unwrap())));
        let t = forall_diag_guarded(&q, &p, Guard::Equal, pred, Aggregator::ProductPMean, 1.0).unwrap();
        assert!((t.item() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn not_equal_aggregates_cross_pairs_only() {
        let tape = Tape::new();
        let q = grounding(&tape, vec![0, 1]);
        let p = PrototypeSet::new(tape.constant(Tensor::zeros(vec![2, 2]).unwrap()), vec![0, 1]).unwrap();
        let m = Tensor::from_rows(&[[0.9, 0.2], [0.4, 0.8]]).unwrap();
        let t = forall_diag_guarded(
            &q,
            &p,
            Guard::NotEqual,
            |_, _| Ok(Truths::new(tape.constant(m.clone()))),
            Aggregator::GeneralizedMean,
            1.0,
        )
        .unwrap();
        // Enumerate the four pairs and keep the mismatched ones: 0.2 and 0.4.
        assert!((t.item() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn all_true_aggregates_to_one() {
        let tape = Tape::new();
        let q = grounding(&tape, vec![0, 1, 1]);
        let p = PrototypeSet::new(tape.constant(Tensor::zeros(vec![2, 2]).unwrap()), vec![0, 1]).unwrap();
        for agg in [Aggregator::ProductPMean, Aggregator::GeneralizedMean] {
            for guard in [Guard::Equal, Guard::NotEqual] {
                let ones = tape.constant(Tensor::full(vec![3, 2], 1.0).unwrap());
                let t = forall_diag_guarded(&q, &p, guard, |_, _| Ok(Truths::new(ones)), agg, 2.0).unwrap();
                assert_eq!(t.item(), 1.0);
            }
        }
    }

    #[test]
    fn not_equal_with_single_class_is_a_contract_error() {
        let tape = Tape::new();
        let q = grounding(&tape, vec![3, 3]);
        let p = PrototypeSet::new(tape.constant(Tensor::zeros(vec![1, 2]).unwrap()), vec![3]).unwrap();
        let ones = tape.constant(Tensor::full(vec![2, 1], 1.0).unwrap());
        let r = forall_diag_guarded(&q, &p, Guard::NotEqual, |_, _| Ok(Truths::new(ones)), Aggregator::GeneralizedMean, 2.0);
        assert!(matches!(r, Err(Error::Contract(_))));
    }
}
