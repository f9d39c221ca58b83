//! Grounds the two-axiom knowledge base on a toy episode and prints every truth value.
//!
//! cargo run --example real_logic

use anyhow::Result;
use proto_ltn::diffcore::{Tape, Tensor};
use proto_ltn::grounding::{is_of_class, Domain, PrototypeSet, VariableGrounding};
use proto_ltn::kb::{episode_loss, KbParams, KnowledgeBase, Predicate};
use proto_ltn::realogic::{aggregate_generalized_mean, aggregate_product_pmean, Truths};

fn main() -> Result<()> {
    let tape = Tape::new();
    let protos = PrototypeSet::new(
        tape.constant(Tensor::from_rows(&[[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]])?),
        vec![0, 1, 2],
    )?;
    let queries = tape.constant(Tensor::from_rows(&[[0.2, 0.1], [2.5, 0.4], [0.3, 2.9], [1.4, 1.4]])?);
    let labels = vec![0, 1, 2, 0];
    let alpha = 0.5;

    let truths = is_of_class(queries, &protos, alpha)?;
    let t = truths.values.value();
    println!("isOfClass(query, prototype), alpha = {alpha}");
    for (i, label) in labels.iter().enumerate() {
        println!("  query {i} (class {label}): {:.4?}", t.row(i));
    }

    let row = Truths::new(tape.constant(Tensor::vector(t.row(3).to_vec())?));
    for p in [1.0, 2.0, 4.0] {
        println!(
            "  last row aggregated, p = {p}: A_pPR {:.4}  A_pM {:.4}",
            aggregate_product_pmean(&row, p)?.item(),
            aggregate_generalized_mean(&row, p)?.item()
        );
    }

    let q = VariableGrounding::new("q", Domain::Embeddings, queries, Some(labels))?;
    for w_neg in [0.0, 1.0] {
        let params = KbParams { w_neg, ..KbParams::default() };
        let kb = KnowledgeBase::ground(&q, &protos, Predicate::Distance { alpha }, params)?;
        let neg = kb.neg.map(|t| t.item()).unwrap_or(f64::NAN);
        println!(
            "w_neg {w_neg}: phi_aff {:.4}  phi_neg {:.4}  loss {:.4}",
            kb.aff.item(),
            neg,
            episode_loss(&kb)?.item()?
        );
    }
    Ok(())
}
