use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Outcome of comparing tape gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(1, |analytic|)` over every coordinate.
    pub max_rel_error: f64,
    /// (input index, flat coordinate) where the maximum occurred.
    pub worst: Option<(usize, usize)>,
}

/// Gradient check for a scalar function of one tensor.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    let report = grad_check_many(|t, xs| f(t, xs[0]), std::slice::from_ref(x), eps)?;
    Ok(report.max_rel_error)
}

/// Gradient check for a scalar function of several tensors.
///
/// `f` is re-run on a fresh tape for every perturbed coordinate, so it must be
/// a pure function of its inputs.
pub fn grad_check_many<F>(f: F, xs: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(Error::contract(format!("eps {eps} outside [1e-7, 1e-4]")));
    }
    let analytic = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = xs.iter().map(|x| tape.variable(x.clone())).collect();
        let out = f(&tape, &vars)?;
        let grads = tape.backward(out)?;
        vars.iter().map(|&v| grads.wrt(v)).collect::<Vec<_>>()
    };
    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = f(&tape, &vars)?;
        out.item()
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
    };
    let mut inputs = xs.to_vec();
    for (k, grad) in analytic.iter().enumerate() {
        for c in 0..inputs[k].len() {
            let orig = inputs[k].data()[c];
            inputs[k].data_mut()[c] = orig + eps;
            let plus = eval(&inputs)?;
            inputs[k].data_mut()[c] = orig - eps;
            let minus = eval(&inputs)?;
            inputs[k].data_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.data()[c];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((k, c));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Vec<usize>, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn sum_of_squares() {
        let x = random(vec![5, 3], 4);
        let err = grad_check(|_, x| Ok(x.mul(x)?.sum_all()), &x, 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let x = random(vec![4], 5);
        let err = grad_check(|t, _| Ok(t.scalar(3.0)), &x, 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn non_scalar_function_is_rejected() {
        let x = random(vec![4], 6);
        assert!(matches!(
            grad_check(|_, x| Ok(x.exp()), &x, 1e-5),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn eps_range_is_enforced() {
        let x = random(vec![2], 7);
        assert!(grad_check(|_, x| Ok(x.sum_all()), &x, 1e-2).is_err());
        assert!(grad_check(|_, x| Ok(x.sum_all()), &x, 1e-9).is_err());
    }
}
