//! Finite-difference gradient verification.
//!
//! Central differences `(f(x+eps) - f(x-eps)) / (2 eps)` against the
//! analytic gradient from the tape, coordinate by coordinate. This is the
//! independent oracle every differentiable operation in the crate is
//! checked against.

use crate::error::{Error, Result};

use super::{tape, Tensor};

#[derive(Debug, Clone)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub worst_coord: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub coords_checked: usize,
}

impl GradReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err.is_finite() && self.max_rel_err <= tol
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1.0)
}

/// Checks the gradient of `forward` with respect to one parameter tensor.
/// `forward` must return a scalar loss and be a deterministic function of
/// the parameter's current value (freeze dropout with a fixed seed).
pub fn gradcheck_param(
    forward: impl Fn() -> Result<Tensor>,
    param: &Tensor,
    eps: f64,
    tol: f64,
) -> Result<GradReport> {
    assert!(eps > 0.0 && eps <= 1e-2, "eps must be in (0, 1e-2]");
    let _ = tol;

    // Determinism probe: two evaluations at the same point must agree bitwise.
    let y1 = tape::no_grad(&forward)?;
    let y2 = tape::no_grad(&forward)?;
    if y1.len() != 1 {
        return Err(Error::NotScalar { elements: y1.len() });
    }
    if y1.item().to_bits() != y2.item().to_bits() {
        return Err(Error::NonDeterministicFunction);
    }

    // Analytic gradient.
    param.clear_grad();
    let loss = forward()?;
    if loss.len() != 1 {
        return Err(Error::NotScalar {
            elements: loss.len(),
        });
    }
    loss.backward()?;
    let analytic = param.grad().unwrap_or_else(|| vec![0.0; param.len()]);

    // Central differences, one coordinate at a time.
    let saved = param.to_vec();
    let mut report = GradReport {
        max_rel_err: 0.0,
        worst_coord: 0,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        coords_checked: saved.len(),
    };
    for i in 0..saved.len() {
        let mut probe = saved.clone();
        probe[i] = saved[i] + eps;
        param.set_data(&probe);
        let plus = tape::no_grad(&forward)?.item();
        probe[i] = saved[i] - eps;
        param.set_data(&probe);
        let minus = tape::no_grad(&forward)?.item();
        param.set_data(&saved);

        let numeric = (plus - minus) / (2.0 * eps);
        let err = rel_err(analytic[i], numeric);
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_coord = i;
            report.analytic_at_worst = analytic[i];
            report.numeric_at_worst = numeric;
        }
    }
    param.clear_grad();
    Ok(report)
}

/// Checks the gradient of a scalar-valued tensor function at `input`.
pub fn gradcheck(
    f: impl Fn(&Tensor) -> Result<Tensor>,
    input: &Tensor,
    eps: f64,
    tol: f64,
) -> Result<GradReport> {
    let x = Tensor::from_vec(input.to_vec(), &input.shape())
        .expect("input invariant")
        .with_grad();
    gradcheck_param(|| f(&x), &x, eps, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::cell::Cell;

    #[test]
    fn sum_is_exact_under_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::randn(&[5], 1.0, &mut rng);
        let report = gradcheck(|t| t.sum(), &x, 1e-5, 1e-9).unwrap();
        assert!(
            report.max_rel_err < 1e-9,
            "linear function should be FD-exact, got {}",
            report.max_rel_err
        );
    }

    #[test]
    fn sum_of_squares_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::randn(&[8], 1.0, &mut rng);
        let report = gradcheck(|t| t.mul(t)?.sum(), &x, 1e-5, 1e-6).unwrap();
        assert!(report.passes(1e-6), "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn nondeterministic_function_is_rejected() {
        let x = Tensor::scalar(1.0);
        let counter = Cell::new(0.0);
        let err = gradcheck(
            |t| {
                counter.set(counter.get() + 1.0);
                t.scale(counter.get())
            },
            &x,
            1e-5,
            1e-4,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonDeterministicFunction));
    }

    #[test]
    fn every_primitive_passes_at_ten_random_points() {
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x = Tensor::randn(&[3, 4], 1.0, &mut rng);
            let w = Tensor::randn(&[4, 2], 0.5, &mut rng);
            let b = Tensor::randn(&[4], 0.5, &mut rng);
            let map = std::rc::Rc::new(vec![5usize, 0, 7, 7, 2, 11]);

            let checks: Vec<(&str, GradReport)> = vec![
                ("add", gradcheck(|t| t.add(&x)?.sum(), &x, 1e-5, 1e-4).unwrap()),
                ("sub", gradcheck(|t| x.sub(t)?.mul(t)?.sum(), &x, 1e-5, 1e-4).unwrap()),
                ("mul", gradcheck(|t| t.mul(&x)?.sum(), &x, 1e-5, 1e-4).unwrap()),
                ("scale", gradcheck(|t| t.scale(-1.7)?.sum(), &x, 1e-5, 1e-4).unwrap()),
                (
                    "matmul",
                    gradcheck(|t| t.matmul(&w)?.mul(&t.matmul(&w)?)?.sum(), &x, 1e-5, 1e-4)
                        .unwrap(),
                ),
                (
                    "add_row_bias",
                    gradcheck(|t| t.add_row_bias(&b)?.mul(&x)?.sum(), &x, 1e-5, 1e-4).unwrap(),
                ),
                (
                    "reshape",
                    gradcheck(|t| t.reshape(&[12])?.mul(&t.reshape(&[12])?)?.sum(), &x, 1e-5, 1e-4)
                        .unwrap(),
                ),
                (
                    "index_select",
                    gradcheck(
                        |t| {
                            let g = t.index_select_flat(map.clone(), &[6])?;
                            g.mul(&g)?.sum()
                        },
                        &x,
                        1e-5,
                        1e-4,
                    )
                    .unwrap(),
                ),
            ];
            for (name, report) in checks {
                assert!(
                    report.passes(1e-4),
                    "{name} failed at seed {seed}: rel err {}",
                    report.max_rel_err
                );
            }

            // relu needs inputs away from the kink for finite differences.
            let mut safe = x.to_vec();
            for v in &mut safe {
                if v.abs() < 1e-3 {
                    *v += 0.5;
                }
            }
            let xr = Tensor::from_vec(safe, &[3, 4]).unwrap();
            let report = gradcheck(|t| t.relu()?.sum(), &xr, 1e-5, 1e-4).unwrap();
            assert!(report.passes(1e-4), "relu failed at seed {seed}");
        }
    }
}
