//! Prediction and GZSL evaluation.
//!
//! `T1` scores unseen test instances against unseen prototypes only; `U` and
//! `S` score unseen and seen test instances against every prototype. All
//! three are per-class top-1 accuracies averaged over the classes present.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::datasets::SplitDataset;
use crate::diffcore::{pairwise_sq_dist, Tape, Tensor};
use crate::error::{Error, Result};
use crate::grounding::{is_of_class_parametric_values, EmbeddingFunction, Mlp, Prototypes, SemanticEncoder};

/// How a query is matched to prototypes at prediction time.
#[derive(Clone, Copy, Debug)]
pub enum Scorer<'a> {
    /// Nearest prototype in squared Euclidean distance.
    Distance,
    /// Highest relation-head score.
    Relation(&'a Mlp),
}

/// `[n x K]` scores, larger means a better match.
pub fn score_matrix(qe: &Tensor, protos: &Prototypes, scorer: Scorer<'_>) -> Result<Tensor> {
    match scorer {
        Scorer::Distance => Ok(pairwise_sq_dist(qe, &protos.values)?.map(|d| -d)),
        Scorer::Relation(mlp) => {
            let tape = Tape::new();
            let head = mlp.bind(&tape);
            let truths = is_of_class_parametric_values(tape.constant(qe.clone()), tape.constant(protos.values.clone()), &head)?;
            Ok((*truths.values.value()).clone())
        }
    }
}

/// Label of the best-scoring prototype per row; ties go to the earliest prototype.
pub fn argmax_labels(scores: &Tensor, labels: &[usize]) -> Vec<usize> {
    (0..scores.rows())
        .map(|i| {
            let row = scores.row(i);
            let mut best = 0;
            for (k, &s) in row.iter().enumerate() {
                if s > row[best] {
                    best = k;
                }
            }
            labels[best]
        })
        .collect()
}

/// `argmax_k isOfClass(q_i, p_k)`, i.e. the nearest prototype for any `alpha > 0`.
pub fn predict(qe: &Tensor, protos: &Prototypes, alpha: f64) -> Result<Vec<usize>> {
    if !(alpha > 0.0) {
        return Err(Error::contract(format!("alpha must be > 0, got {alpha}")));
    }
    predict_with(qe, protos, Scorer::Distance)
}

pub fn predict_with(qe: &Tensor, protos: &Prototypes, scorer: Scorer<'_>) -> Result<Vec<usize>> {
    Ok(argmax_labels(&score_matrix(qe, protos, scorer)?, &protos.labels))
}

/// Accuracy of every class in `classes` that has at least one instance.
pub fn per_class_accuracies(pred: &[usize], truth: &[usize], classes: &[usize]) -> Result<BTreeMap<usize, f64>> {
    if pred.len() != truth.len() {
        return Err(Error::dim(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    let mut counts: BTreeMap<usize, (usize, usize)> = classes.iter().map(|&c| (c, (0, 0))).collect();
    for (&p, &t) in pred.iter().zip(truth) {
        if let Some((hit, total)) = counts.get_mut(&t) {
            *total += 1;
            *hit += usize::from(p == t);
        }
    }
    Ok(counts
        .into_iter()
        .filter(|(_, (_, total))| *total > 0)
        .map(|(c, (hit, total))| (c, hit as f64 / total as f64))
        .collect())
}

/// Mean of per-class accuracies; classes without instances are skipped.
pub fn per_class_top1(pred: &[usize], truth: &[usize], classes: &[usize]) -> Result<f64> {
    let acc = per_class_accuracies(pred, truth, classes)?;
    if acc.is_empty() {
        return Err(Error::contract("no class in the set has test instances"));
    }
    Ok(acc.values().sum::<f64>() / acc.len() as f64)
}

/// `2us / (u + s)`, zero when both are zero.
pub fn harmonic_mean(u: f64, s: f64) -> f64 {
    if u + s == 0.0 {
        0.0
    } else {
        2.0 * u * s / (u + s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassAccuracy {
    pub label: usize,
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
}

/// Accuracies are fractions in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GzslReport {
    pub t1: f64,
    pub u: f64,
    pub s: f64,
    pub h: f64,
    pub per_class: Vec<ClassAccuracy>,
}

impl GzslReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `label,name,t1,u,s`, empty cells where a class is not scored.
    pub fn per_class_csv(&self) -> String {
        let cell = |x: Option<f64>| x.map(|v| format!("{v:?}")).unwrap_or_default();
        let mut out = String::from("label,name,t1,u,s\n");
        for c in &self.per_class {
            out.push_str(&format!("{},{},{},{},{}\n", c.label, c.name, cell(c.t1), cell(c.u), cell(c.s)));
        }
        out
    }
}

/// Full GZSL protocol with an explicit embedding and scorer.
pub fn gzsl_evaluate_with(
    ds: &SplitDataset,
    embedding: &EmbeddingFunction,
    encoder: &SemanticEncoder,
    scorer: Scorer<'_>,
) -> Result<GzslReport> {
    if ds.test_unseen_idx.is_empty() || ds.test_seen_idx.is_empty() {
        return Err(Error::contract("GZSL evaluation needs both seen and unseen test instances"));
    }
    let all = encoder.prototypes(&ds.class_attributes, &ds.all_classes())?;
    let unseen_only = all.restrict(&ds.unseen)?;

    let (xu, yu) = ds.subset(&ds.test_unseen_idx)?;
    let (xs, ys) = ds.subset(&ds.test_seen_idx)?;
    let (eu, es) = (embedding.embed_tensor(&xu)?, embedding.embed_tensor(&xs)?);

    let t1_acc = per_class_accuracies(&predict_with(&eu, &unseen_only, scorer)?, &yu, &ds.unseen)?;
    let u_acc = per_class_accuracies(&predict_with(&eu, &all, scorer)?, &yu, &ds.unseen)?;
    let s_acc = per_class_accuracies(&predict_with(&es, &all, scorer)?, &ys, &ds.seen)?;
    let mean = |m: &BTreeMap<usize, f64>| -> Result<f64> {
        if m.is_empty() {
            return Err(Error::contract("split has no scored classes"));
        }
        Ok(m.values().sum::<f64>() / m.len() as f64)
    };
    let (t1, u, s) = (mean(&t1_acc)?, mean(&u_acc)?, mean(&s_acc)?);
    // Adding competitor prototypes can only remove correct unseen predictions.
    assert!(t1 + 1e-12 >= u, "T1 {t1} < U {u}");

    let per_class = ds
        .all_classes()
        .into_iter()
        .filter_map(|c| {
            let row = ClassAccuracy {
                label: c,
                name: ds.class_names[c].clone(),
                t1: t1_acc.get(&c).copied(),
                u: u_acc.get(&c).copied(),
                s: s_acc.get(&c).copied(),
            };
            (row.t1.is_some() || row.s.is_some()).then_some(row)
        })
        .collect();
    Ok(GzslReport {
        t1,
        u,
        s,
        h: harmonic_mean(u, s),
        per_class,
    })
}

/// GZSL protocol for the distance predicate with precomputed features.
pub fn gzsl_evaluate(ds: &SplitDataset, encoder: &SemanticEncoder, alpha: f64) -> Result<GzslReport> {
    if !(alpha > 0.0) {
        return Err(Error::contract(format!("alpha must be > 0, got {alpha}")));
    }
    gzsl_evaluate_with(ds, &EmbeddingFunction::Identity, encoder, Scorer::Distance)
}

/// Instance-level query accuracy of one few-shot episode.
pub fn episode_accuracy(
    embedding: &EmbeddingFunction,
    support: (&Tensor, &[usize]),
    query: (&Tensor, &[usize]),
    scorer: Scorer<'_>,
) -> Result<f64> {
    let tape = Tape::new();
    let f = embedding.bind(&tape);
    let s = crate::grounding::VariableGrounding::new(
        "s",
        crate::grounding::Domain::Features,
        tape.constant(support.0.clone()),
        Some(support.1.to_vec()),
    )?;
    let protos = crate::grounding::get_prototypes_fsl(&s, &f)?.detach();
    let qe = embedding.embed_tensor(query.0)?;
    let pred = predict_with(&qe, &protos, scorer)?;
    if pred.is_empty() {
        return Err(Error::contract("episode has no queries"));
    }
    let hits = pred.iter().zip(query.1).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}
