//! Trains on noise-free synthetic data, exports class prototypes as CSV, and
//! prints each prototype's distance to its own and to the nearest other class point.
//!
//! cargo run --release --example export_prototypes -- [out.csv]

use anyhow::Result;
use proto_ltn::datasets::{generate_synthetic, SynthConfig};
use proto_ltn::diffcore::pairwise_sq_dist;
use proto_ltn::trainer::{train, TrainConfig};

fn main() -> Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "prototypes.csv".into());
    let ds = generate_synthetic(&SynthConfig { noise: 0.0, ..SynthConfig::default() })?;
    let (model, _) = train(&ds, &TrainConfig::preset("synthetic")?)?;
    let protos = model.class_prototypes(&ds)?;

    let mut w = csv::Writer::from_path(&out)?;
    let mut header = vec!["label".to_string()];
    header.extend((0..protos.values.cols()).map(|k| format!("p{k}")));
    w.write_record(&header)?;
    for (i, &c) in protos.labels.iter().enumerate() {
        let mut rec = vec![ds.class_names[c].clone()];
        rec.extend(protos.values.row(i).iter().map(|x| format!("{x:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let d2 = pairwise_sq_dist(&protos.values, &ds.features)?;
    println!("{:>5} {:>7} {:>10} {:>10}", "class", "split", "own d2", "other d2");
    for (i, &c) in protos.labels.iter().enumerate() {
        let min_where = |keep: &dyn Fn(usize) -> bool| {
            (0..ds.labels.len()).filter(|&j| keep(ds.labels[j])).map(|j| d2.get(i, j)).fold(f64::INFINITY, f64::min)
        };
        let split = if ds.seen.contains(&c) { "seen" } else { "unseen" };
        println!("{c:>5} {split:>7} {:>10.4} {:>10.4}", min_where(&|l| l == c), min_where(&|l| l != c));
    }
    println!("wrote {} prototypes to {out}", protos.labels.len());
    Ok(())
}
