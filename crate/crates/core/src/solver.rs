//! Damped Newton iteration shared by the static and electrostatic solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Converged once the residual norm falls below this (absolute).
    pub tol: f64,
    /// Residual norm accepted when the iteration stagnates at round-off.
    pub floor: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl NewtonOptions {
    pub fn scaled(force_scale: f64, rel_tol: f64) -> Self {
        Self {
            tol: rel_tol * force_scale,
            floor: 1e-10 * force_scale,
            max_iter: 200,
            max_halvings: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonSolution {
    pub x: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Solve `R(x) = 0`. `eval` returns the residual and its Jacobian, or `None`
/// when `x` is inadmissible (the step is then halved).
pub fn damped_newton<F>(x0: DVector<f64>, opts: NewtonOptions, mut eval: F) -> Result<NewtonSolution>
where
    F: FnMut(&DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)>,
{
    let (mut r, mut jac) = eval(&x0).ok_or(Error::NotConverged {
        residual: f64::INFINITY,
    })?;
    let mut x = x0;
    let mut norm = r.norm();
    for it in 0..opts.max_iter {
        if norm <= opts.tol {
            return Ok(NewtonSolution {
                x,
                residual: norm,
                iterations: it,
            });
        }
        let dx = solve_linear(&jac, &(-&r));
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial = &x + &dx * t;
            if let Some((rt, jt)) = eval(&trial) {
                let nt = rt.norm();
                if nt.is_finite() && nt < norm {
                    accepted = Some((trial, rt, jt, nt));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((xt, rt, jt, nt)) => {
                let stalled = (&xt - &x).norm() <= 1e-15 * xt.norm().max(f64::MIN_POSITIVE);
                x = xt;
                r = rt;
                jac = jt;
                norm = nt;
                if stalled && norm <= opts.floor {
                    return Ok(NewtonSolution {
                        x,
                        residual: norm,
                        iterations: it + 1,
                    });
                }
            }
            None if norm <= opts.floor => {
                return Ok(NewtonSolution {
                    x,
                    residual: norm,
                    iterations: it,
                })
            }
            None => return Err(Error::NotConverged { residual: norm }),
        }
    }
    if norm <= opts.floor {
        Ok(NewtonSolution {
            x,
            residual: norm,
            iterations: opts.max_iter,
        })
    } else {
        Err(Error::NotConverged { residual: norm })
    }
}

/// Solve `J dx = b`, regularizing a singular `J` with a small ridge.
fn solve_linear(jac: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if let Some(dx) = jac.clone().lu().solve(b) {
        if dx.iter().all(|v| v.is_finite()) {
            return dx;
        }
    }
    let trace: f64 = jac.diagonal().iter().map(|v| v.abs()).sum();
    let ridge = 1e-12 * trace.max(f64::MIN_POSITIVE);
    let mut reg = jac.clone();
    for i in 0..reg.nrows() {
        reg[(i, i)] += ridge;
    }
    reg.lu().solve(b).unwrap_or_else(|| DVector::zeros(b.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        // x² = 2, x y = 1
        let sol = damped_newton(
            DVector::from_vec(vec![1.0, 1.0]),
            NewtonOptions::scaled(1.0, 1e-14),
            |v| {
                let (x, y) = (v[0], v[1]);
                Some((
                    DVector::from_vec(vec![x * x - 2.0, x * y - 1.0]),
                    DMatrix::from_row_slice(2, 2, &[2.0 * x, 0.0, y, x]),
                ))
            },
        )
        .unwrap();
        assert!((sol.x[0] - 2f64.sqrt()).abs() < 1e-13);
        assert!((sol.x[1] - 0.5f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn reports_failure() {
        // x² + 1 = 0 has no real root.
        let r = damped_newton(DVector::from_vec(vec![0.3]), NewtonOptions::scaled(1.0, 1e-12), |v| {
            Some((
                DVector::from_vec(vec![v[0] * v[0] + 1.0]),
                DMatrix::from_element(1, 1, 2.0 * v[0]),
            ))
        });
        assert!(r.is_err());
    }
}
