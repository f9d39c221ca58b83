//! The knowledge base `{phi_aff, phi_neg}` and the losses built from it.
//!
//! ```text
//! phi_aff = forall Diag(q_e, q_l) (forall Diag(p, p_l) : q_l = p_l  ( isOfClass(q_e, p)))
//! phi_neg = forall Diag(q_e, q_l) (forall Diag(p, p_l) : q_l != p_l (!isOfClass(q_e, p)))
//! ```
//!
//! `phi_aff` aggregates with `A_pPR`, `phi_neg` with `A_pM`.

use serde::{Deserialize, Serialize};

use crate::diffcore::Var;
use crate::error::{Error, Result};
use crate::grounding::{is_of_class_parametric_values, is_of_class_values, BoundMlp, PrototypeSet, VariableGrounding};
use crate::realogic::{forall_diag_guarded, Aggregator, Guard, Truth, Truths};

/// Which grounding of `isOfClass` to use.
#[derive(Clone, Copy)]
pub enum Predicate<'a, 't> {
    /// `exp(-alpha d^2)`
    Distance { alpha: f64 },
    /// `sigmoid(mlp([q, p]))`
    Relation(&'a BoundMlp<'t>),
}

impl<'a, 't> Predicate<'a, 't> {
    pub fn evaluate(&self, qe: Var<'t>, protos: Var<'t>) -> Result<Truths<'t>> {
        match *self {
            Predicate::Distance { alpha } => is_of_class_values(qe, protos, alpha),
            Predicate::Relation(mlp) => is_of_class_parametric_values(qe, protos, mlp),
        }
    }
}

/// Aggregation and weighting parameters of the knowledge base.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct KbParams {
    pub p_agg: f64,
    pub p_forall: f64,
    pub w_neg: f64,
}

impl Default for KbParams {
    fn default() -> Self {
        KbParams {
            p_agg: 1.0,
            p_forall: 2.0,
            w_neg: 0.0,
        }
    }
}

impl KbParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_agg >= 1.0) || !(self.p_forall >= 1.0) || !(self.w_neg >= 0.0) {
            return Err(Error::contract(format!(
                "need p_agg >= 1, p_forall >= 1, w_neg >= 0; got {self:?}"
            )));
        }
        Ok(())
    }
}

fn labelled<'a>(qe: &'a VariableGrounding<'_>) -> Result<&'a [usize]> {
    qe.labels
        .as_deref()
        .ok_or_else(|| Error::contract(format!("queries '{}' carry no labels", qe.name)))
}

/// Each query is a positive example of its own class.
pub fn phi_aff<'t>(
    qe: &VariableGrounding<'t>,
    protos: &PrototypeSet<'t>,
    predicate: Predicate<'_, 't>,
    p_forall: f64,
) -> Result<Truth<'t>> {
    labelled(qe)?;
    forall_diag_guarded(
        qe,
        protos,
        Guard::Equal,
        |q, p| predicate.evaluate(q, p),
        Aggregator::ProductPMean,
        p_forall,
    )
}

/// Each query is a negative example of every other class.
pub fn phi_neg<'t>(
    qe: &VariableGrounding<'t>,
    protos: &PrototypeSet<'t>,
    predicate: Predicate<'_, 't>,
    p_forall: f64,
) -> Result<Truth<'t>> {
    labelled(qe)?;
    forall_diag_guarded(
        qe,
        protos,
        Guard::NotEqual,
        |q, p| Ok(predicate.evaluate(q, p)?.not()),
        Aggregator::GeneralizedMean,
        p_forall,
    )
}

/// Grounded knowledge base for one episode or batch.
#[derive(Clone, Copy, Debug)]
pub struct KnowledgeBase<'t> {
    pub aff: Truth<'t>,
    /// `None` when no query has a mismatched prototype (and `w_neg = 0`).
    pub neg: Option<Truth<'t>>,
    pub params: KbParams,
}

impl<'t> KnowledgeBase<'t> {
    pub fn ground(
        qe: &VariableGrounding<'t>,
        protos: &PrototypeSet<'t>,
        predicate: Predicate<'_, 't>,
        params: KbParams,
    ) -> Result<Self> {
        params.validate()?;
        let labels = labelled(qe)?;
        let aff = phi_aff(qe, protos, predicate, params.p_forall)?;
        let has_mismatch = labels.iter().any(|l| protos.labels().iter().any(|p| p != l));
        let neg = if has_mismatch {
            Some(phi_neg(qe, protos, predicate, params.p_forall)?)
        } else if params.w_neg > 0.0 {
            return Err(Error::contract("phi_neg needs at least one mismatched pair"));
        } else {
            None
        };
        Ok(KnowledgeBase { aff, neg, params })
    }
}

/// `L = ((-log phi_aff)^(1/p_agg) + (w_n (1 - phi_neg))^(1/p_agg))^p_agg`.
///
/// With `w_n = 0` this is exactly `-log phi_aff`.
pub fn episode_loss<'t>(kb: &KnowledgeBase<'t>) -> Result<Var<'t>> {
    kb.params.validate()?;
    let affirm = kb.aff.log()?.neg();
    if kb.params.w_neg == 0.0 {
        return Ok(affirm);
    }
    let neg = kb
        .neg
        .ok_or_else(|| Error::contract("w_neg > 0 but phi_neg is undefined"))?;
    let negate = neg.var().one_minus().scale(kb.params.w_neg);
    let p = kb.params.p_agg;
    if p == 1.0 {
        return affirm.add(negate);
    }
    // -log(phi_aff) can round to a tiny negative value when phi_aff == 1.
    let root = |v: Var<'t>| v.clamp_min(0.0).pow_scalar(1.0 / p);
    root(affirm)?.add(root(negate)?)?.pow_scalar(p)
}

/// `loss + lambda * sum ||theta||^2` over the given parameters.
pub fn best_sat_objective<'t>(loss: Var<'t>, params: &[Var<'t>], lambda: f64) -> Result<Var<'t>> {
    if !(lambda >= 0.0) {
        return Err(Error::contract(format!("lambda must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 || params.is_empty() {
        return Ok(loss);
    }
    let mut penalty = None::<Var<'t>>;
    for p in params {
        let sq = p.mul(*p)?.sum_all();
        penalty = Some(match penalty {
            Some(acc) => acc.add(sq)?,
            None => sq,
        });
    }
    loss.add(penalty.expect("non-empty").scale(lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Tape, Tensor};
    use crate::grounding::Domain;

    fn episode<'t>(tape: &'t Tape, q: &[[f64; 1]], labels: Vec<usize>, p: &[[f64; 1]], plabels: Vec<usize>) -> (VariableGrounding<'t>, PrototypeSet<'t>) {
        let qe = VariableGrounding::new("q_e", Domain::Embeddings, tape.constant(Tensor::from_rows(q).unwrap()), Some(labels)).unwrap();
        let protos = PrototypeSet::new(tape.constant(Tensor::from_rows(p).unwrap()), plabels).unwrap();
        (qe, protos)
    }

    const DIST1: Predicate<'static, 'static> = Predicate::Distance { alpha: 1.0 };

    #[test]
    fn query_at_prototype_is_fully_affirmed() {
        let tape = Tape::new();
        let (qe, p) = episode(&tape, &[[2.0]], vec![0], &[[2.0], [5.0]], vec![0, 1]);
        let t = phi_aff(&qe, &p, Predicate::Distance { alpha: 1.0 }, 2.0).unwrap();
        assert_eq!(t.item(), 1.0);
        let kb = KnowledgeBase::ground(&qe, &p, Predicate::Distance { alpha: 1.0 }, KbParams::default()).unwrap();
        assert_eq!(episode_loss(&kb).unwrap().item().unwrap(), 0.0);
    }

    #[test]
    fn two_matched_pairs_closed_form() {
        // d^2 = 1 and 4 with alpha = 1 -> truths e^-1, e^-4; p_forall = 2 -> e^-2.5
        let tape = Tape::new();
        let (qe, p) = episode(&tape, &[[1.0], [12.0]], vec![0, 1], &[[0.0], [10.0]], vec![0, 1]);
        let t = phi_aff(&qe, &p, DIST1, 2.0).unwrap();
        assert!((t.item() - (-2.5f64).exp()).abs() < 1e-15);
        assert!((t.item() - 0.082085).abs() < 1e-6);

        let kb = KnowledgeBase::ground(&qe, &p, DIST1, KbParams { p_agg: 1.0, p_forall: 2.0, w_neg: 0.0 }).unwrap();
        let loss = episode_loss(&kb).unwrap().item().unwrap();
        assert!((loss - 2.5).abs() < 1e-12);
        // DEM form: (alpha / p_forall) * sum of matched d^2
        assert!((loss - (1.0 / 2.0) * (1.0 + 4.0)).abs() < 1e-12);
    }

    #[test]
    fn far_queries_do_not_underflow_the_loss() {
        let tape = Tape::new();
        let (qe, p) = episode(&tape, &[[1e4]], vec![0], &[[0.0], [1.0]], vec![0, 1]);
        let kb = KnowledgeBase::ground(&qe, &p, DIST1, KbParams::default()).unwrap();
        assert_eq!(kb.aff.item(), 0.0);
        let loss = episode_loss(&kb).unwrap().item().unwrap();
        assert!((loss - 1e8 / 2.0).abs() < 1e-3);
    }

    #[test]
    fn phi_neg_cases() {
        let tape = Tape::new();
        let (qe, p) = episode(&tape, &[[0.0]], vec![0], &[[0.0], [1e3]], vec![0, 1]);
        let t = phi_neg(&qe, &p, DIST1, 2.0).unwrap();
        assert_eq!(t.item(), 1.0);

        // single mismatched pair with truth 0.3
        let d = (-(0.3f64).ln()).sqrt();
        let (qe, p) = episode(&tape, &[[d]], vec![0], &[[0.0], [0.0]], vec![0, 1]);
        let t = phi_neg(&qe, &p, DIST1, 2.0).unwrap();
        assert!((t.item() - 0.7).abs() < 1e-12);

        let (qe, p) = episode(&tape, &[[0.0], [1.0]], vec![3, 3], &[[0.0]], vec![3]);
        assert!(matches!(phi_neg(&qe, &p, DIST1, 2.0), Err(Error::Contract(_))));
    }

    #[test]
    fn phi_neg_matches_enumeration() {
        let tape = Tape::new();
        let q = [[0.3], [1.7]];
        let pr = [[0.0], [2.0]];
        let (qe, p) = episode(&tape, &q, vec![0, 1], &pr, vec![0, 1]);
        let pf = 2.0;
        let t = phi_neg(&qe, &p, Predicate::Distance { alpha: 0.8 }, pf).unwrap();
        let mut acc = 0.0;
        let mut n = 0;
        for (i, qi) in q.iter().enumerate() {
            for (j, pj) in pr.iter().enumerate() {
                if i != j {
                    let tau = 1.0 - (-0.8 * (qi[0] - pj[0]).powi(2)).exp();
                    acc += tau.powf(pf);
                    n += 1;
                }
            }
        }
        let expected = (acc / n as f64).powf(1.0 / pf);
        assert!((t.item() - expected).abs() < 1e-14);
    }

    #[test]
    fn loss_with_negation_term() {
        let tape = Tape::new();
        let (qe, p) = episode(&tape, &[[0.5], [1.5]], vec![0, 1], &[[0.0], [2.0]], vec![0, 1]);
        for p_agg in [1.0, 2.0, 3.0] {
            let params = KbParams { p_agg, p_forall: 2.0, w_neg: 0.5 };
            let kb = KnowledgeBase::ground(&qe, &p, DIST1, params).unwrap();
            let a = -kb.aff.item().ln();
            let b = 0.5 * (1.0 - kb.neg.unwrap().item());
            let expected = (a.powf(1.0 / p_agg) + b.powf(1.0 / p_agg)).powf(p_agg);
            let loss = episode_loss(&kb).unwrap().item().unwrap();
            assert!((loss - expected).abs() < 1e-12, "p_agg={p_agg}");
        }
    }

    #[test]
    fn single_class_episode_requires_zero_negation_weight() {
        let tape = Tape::new();
        let (qe, p) = episode(&tape, &[[0.0]], vec![0], &[[0.0]], vec![0]);
        assert!(KnowledgeBase::ground(&qe, &p, DIST1, KbParams::default()).unwrap().neg.is_none());
        let params = KbParams { w_neg: 1.0, ..KbParams::default() };
        assert!(KnowledgeBase::ground(&qe, &p, DIST1, params).is_err());
    }

    #[test]
    fn objective_examples() {
        let tape = Tape::new();
        let loss = tape.scalar(1.25);
        let w = tape.variable(Tensor::vector(vec![3.0, 4.0]).unwrap());
        assert_eq!(best_sat_objective(loss, &[w], 0.0).unwrap().item().unwrap(), 1.25);
        assert_eq!(best_sat_objective(loss, &[], 1.0).unwrap().item().unwrap(), 1.25);
        let o = best_sat_objective(loss, &[w], 1e-3).unwrap().item().unwrap();
        assert!((o - 1.275).abs() < 1e-15);
        assert!(best_sat_objective(loss, &[w], -1.0).is_err());
    }
}
