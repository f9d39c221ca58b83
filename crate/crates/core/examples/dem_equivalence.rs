//! With no negation term, p_agg = 1 and the distance predicate, the episode
//! loss reduces to a scaled sum of matched squared distances. Prints both sides.
//!
//! cargo run --example dem_equivalence

use anyhow::Result;
use proto_ltn::diffcore::{pairwise_sq_dist, Tape, Tensor};
use proto_ltn::grounding::{Domain, PrototypeSet, VariableGrounding};
use proto_ltn::kb::{episode_loss, KbParams, KnowledgeBase, Predicate};
use rand::{Rng, SeedableRng};

fn main() -> Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
    let mut random = |r: usize, c: usize| Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect());
    let protos = random(4, 6)?;
    let queries = random(12, 6)?;
    let labels: Vec<usize> = (0..12).map(|i| i % 4).collect();
    let d2 = pairwise_sq_dist(&queries, &protos)?;
    let matched: f64 = labels.iter().enumerate().map(|(i, &l)| d2.get(i, l)).sum();

    println!("{:>8} {:>8} {:>16} {:>16} {:>10}", "alpha", "p", "loss", "alpha/p sum d2", "diff");
    for alpha in [1e-5, 1e-4, 1.0] {
        for p_forall in [1.0, 2.0, 4.0] {
            let tape = Tape::new();
            let q = VariableGrounding::new("q", Domain::Embeddings, tape.constant(queries.clone()), Some(labels.clone()))?;
            let set = PrototypeSet::new(tape.constant(protos.clone()), vec![0, 1, 2, 3])?;
            let params = KbParams { p_agg: 1.0, p_forall, w_neg: 0.0 };
            let kb = KnowledgeBase::ground(&q, &set, Predicate::Distance { alpha }, params)?;
            let loss = episode_loss(&kb)?.item()?;
            let dem = alpha / p_forall * matched;
            println!("{alpha:>8.0e} {p_forall:>8} {loss:>16.10e} {dem:>16.10e} {:>10.1e}", (loss - dem).abs());
        }
    }
    Ok(())
}
