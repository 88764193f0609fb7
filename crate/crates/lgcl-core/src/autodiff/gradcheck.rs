//! Central finite-difference verification of analytic gradients.

use ndarray::Array2;

use super::tensor::{Tape, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checks: usize,
    pub tol: f64,
    pub passed: bool,
    /// (input index, row, col, analytic, numeric) for the worst offenders.
    pub failures: Vec<(usize, usize, usize, f64, f64)>,
}

/// Compare analytic gradients of a scalar-valued computation against central
/// finite differences, elementwise over every input. `f` must be
/// deterministic; it is re-run with perturbed inputs, so keep inputs small.
pub fn check_gradients<F>(
    f: F,
    inputs: &[Array2<f64>],
    step: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&Tape, &[Tensor]) -> Result<Tensor>,
{
    if step <= 0.0 {
        return Err(Error::InvalidArgument("step must be > 0".into()));
    }

    let eval = |xs: &[Array2<f64>]| -> Result<(f64, Option<Vec<Option<Array2<f64>>>>)> {
        let tape = Tape::new();
        let leaves: Vec<Tensor> = xs
            .iter()
            .map(|x| tape.leaf(x.clone()))
            .collect::<Result<_>>()?;
        let out = f(&tape, &leaves)?;
        if out.shape2() != (1, 1) {
            return Err(Error::InvalidArgument(format!(
                "gradcheck target must be scalar, got {:?}",
                out.shape2()
            )));
        }
        let val = out.scalar();
        if !val.is_finite() {
            return Err(Error::NonFinite("gradcheck forward value".into()));
        }
        let grads = tape.backward_scalar(&out)?;
        let per_input = leaves
            .iter()
            .map(|l| grads.wrt(l).cloned())
            .collect::<Vec<_>>();
        Ok((val, Some(per_input)))
    };

    let (_, analytic) = eval(inputs)?;
    let analytic = analytic.expect("grads requested");

    let mut max_rel_err = 0.0f64;
    let mut checks = 0usize;
    let mut failures = Vec::new();

    for (i, input) in inputs.iter().enumerate() {
        let zero;
        let ga = match &analytic[i] {
            Some(g) => g,
            None => {
                // input does not reach the output; its gradient is zero
                zero = Array2::zeros(input.dim());
                &zero
            }
        };
        for r in 0..input.nrows() {
            for c in 0..input.ncols() {
                let mut plus = inputs.to_vec();
                plus[i][(r, c)] += step;
                let (fp, _) = eval_value_only(&f, &plus)?;
                let mut minus = inputs.to_vec();
                minus[i][(r, c)] -= step;
                let (fm, _) = eval_value_only(&f, &minus)?;
                let numeric = (fp - fm) / (2.0 * step);
                if !numeric.is_finite() {
                    return Err(Error::NonFinite("finite difference".into()));
                }
                let a = ga[(r, c)];
                let rel = (a - numeric).abs() / f64::max(1.0, f64::max(a.abs(), numeric.abs()));
                if rel > max_rel_err {
                    max_rel_err = rel;
                }
                if rel > tol && failures.len() < 10 {
                    failures.push((i, r, c, a, numeric));
                }
                checks += 1;
            }
        }
    }

    Ok(GradCheckReport {
        max_rel_err,
        checks,
        tol,
        passed: max_rel_err <= tol,
        failures,
    })
}

fn eval_value_only<F>(f: &F, xs: &[Array2<f64>]) -> Result<(f64, ())>
where
    F: Fn(&Tape, &[Tensor]) -> Result<Tensor>,
{
    let tape = Tape::new();
    let leaves: Vec<Tensor> = xs
        .iter()
        .map(|x| tape.leaf(x.clone()))
        .collect::<Result<_>>()?;
    let out = f(&tape, &leaves)?;
    let val = out.scalar();
    if !val.is_finite() {
        return Err(Error::NonFinite("gradcheck forward value".into()));
    }
    Ok((val, ()))
}
