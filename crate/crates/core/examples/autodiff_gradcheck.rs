//! Builds a small composite on the tape, backpropagates, and compares against
//! central differences; then runs the full suite with and without a corrupted rule.
//!
//! cargo run --example autodiff_gradcheck

use anyhow::Result;
use proto_ltn::diffcore::{grad_check, OpKind, Tape, Tensor};
use proto_ltn::gradsuite::{run_suite, SuiteConfig};

fn main() -> Result<()> {
    let tape = Tape::new();
    let x = tape.variable(Tensor::from_rows(&[[0.3, -1.2], [0.8, 0.5]])?);
    let y = x.pairwise_sq_dist(x)?.scale(-0.7).exp().sum_all().log()?;
    let grads = tape.backward(y)?;
    println!("f(x) = log sum exp(-0.7 d2(x, x)) = {:.6}", y.item()?);
    println!("df/dx = {:?}", grads.wrt(x).data());

    let err = grad_check(
        |_tape, v| v.pairwise_sq_dist(v)?.scale(-0.7).exp().sum_all().log(),
        &Tensor::from_rows(&[[0.3, -1.2], [0.8, 0.5]])?,
        1e-5,
    )?;
    println!("max relative error vs central differences: {err:.2e}");

    for fault in [None, Some(OpKind::Sigmoid)] {
        let report = run_suite(&SuiteConfig { fault, ..SuiteConfig::default() })?;
        let worst = report.worst().expect("suite ran checks");
        println!(
            "suite (fault {:?}): {} checks, passed {}, worst {:.2e} in {}",
            fault.map(OpKind::name),
            report.checks.len(),
            report.passed(),
            worst.max_rel_error,
            worst.name
        );
    }
    Ok(())
}
