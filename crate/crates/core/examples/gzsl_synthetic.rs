//! Trains the semantic encoder on the synthetic benchmark and reports GZSL metrics.
//!
//! cargo run --release --example gzsl_synthetic -- [noise] [seed]

use anyhow::Result;
use proto_ltn::datasets::{generate_synthetic, SynthConfig};
use proto_ltn::trainer::{train_gzsl, TrainConfig};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let noise: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.01);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);

    let data = generate_synthetic(&SynthConfig { noise, seed, ..SynthConfig::default() })?;
    let cfg = TrainConfig { seed, ..TrainConfig::preset("synthetic")? };
    let started = std::time::Instant::now();
    let (model, log) = train_gzsl(&data, &cfg)?;

    for r in &log.records {
        println!("epoch {:>2}  loss {:>12.6}  phi_aff {:.4}", r.epoch, r.loss, r.phi_aff);
    }
    let report = model.evaluate_gzsl(&data)?;
    println!(
        "T1 {:.3}  U {:.3}  S {:.3}  H {:.3}  ({:.1?})",
        report.t1,
        report.u,
        report.s,
        report.h,
        started.elapsed()
    );
    Ok(())
}
