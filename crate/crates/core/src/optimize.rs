//! Damped Newton maximization of expected utility over linear wealth
//! designs: leaf wealth is `offset[k] + Σ_j a[k][j]·θ[j]`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::market::ScenarioTree;
use crate::utility::ScalarUtility;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("no convergence after {iterations} iterations (gradient norm {gradient:e})")]
    NonConvergence { iterations: usize, gradient: f64 },
    #[error("starting point lies outside the utility domain")]
    InfeasibleStart,
}

/// Sparse rows mapping strategy variables to terminal wealth.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    rows: Vec<Vec<(usize, f64)>>,
    dim: usize,
}

impl Design {
    /// Share variables `θ[n·d + i]` for non-terminal node `n` and asset `i`;
    /// each leaf row collects the price increments along its path.
    pub(crate) fn shares(tree: &ScenarioTree) -> Self {
        let d = tree.assets();
        let rows = tree
            .leaves()
            .map(|leaf| {
                let path = tree.path(leaf);
                let mut row = Vec::with_capacity((path.len() - 1) * d);
                for w in path.windows(2) {
                    let inc = tree.increment(w[1]);
                    for (i, v) in inc.into_iter().enumerate() {
                        if v != 0.0 {
                            row.push((w[0] * d + i, v));
                        }
                    }
                }
                row
            })
            .collect();
        Self {
            rows,
            dim: tree.internal_count() * d,
        }
    }

    pub(crate) fn dim(&self) -> usize {
        self.dim
    }

    pub(crate) fn apply(&self, offsets: &[f64], theta: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(offsets)
            .map(|(row, c)| c + row.iter().map(|&(j, a)| a * theta[j]).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct NewtonOptions {
    pub gradient_tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome {
    pub theta: Vec<f64>,
    pub gradient_norm: f64,
    pub iterations: usize,
}

/// Objective Σ_k weight[k]·U(wealth[k]).
pub(crate) struct Problem<'a, U> {
    pub utility: &'a U,
    pub weights: &'a [f64],
    pub offsets: &'a [f64],
    pub design: &'a Design,
}

impl<U: ScalarUtility> Problem<'_, U> {
    fn value(&self, wealth: &[f64]) -> f64 {
        if wealth.iter().any(|&x| !self.utility.in_domain(x)) {
            return f64::NEG_INFINITY;
        }
        self.weights
            .iter()
            .zip(wealth)
            .map(|(w, &x)| w * self.utility.value(x))
            .sum()
    }

    /// Gradient, Hessian and the scale used for the stopping rule.
    fn derivatives(&self, wealth: &[f64]) -> (DVector<f64>, DMatrix<f64>, f64) {
        let n = self.design.dim;
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        let mut scale = 0.0_f64;
        for ((row, &w), &x) in self.design.rows.iter().zip(self.weights).zip(wealth) {
            let u1 = self.utility.marginal(x);
            let u2 = self.utility.curvature(x);
            for &(j, a) in row {
                g[j] += w * u1 * a;
                scale = scale.max(w * u1 * a.abs());
                for &(k, b) in row {
                    h[(j, k)] += w * u2 * a * b;
                }
            }
        }
        (g, h, scale)
    }
}

/// Maximizes a smooth strictly concave objective from `start`.
pub(crate) fn maximize<U: ScalarUtility>(
    problem: &Problem<'_, U>,
    start: &[f64],
    opts: NewtonOptions,
) -> Result<NewtonOutcome, OptimizeError> {
    let mut theta = DVector::from_column_slice(start);
    let mut wealth = problem.design.apply(problem.offsets, theta.as_slice());
    let mut value = problem.value(&wealth);
    if !value.is_finite() {
        return Err(OptimizeError::InfeasibleStart);
    }
    let mut gnorm = f64::INFINITY;
    for iter in 0..=opts.max_iter {
        let (g, h, scale) = problem.derivatives(&wealth);
        gnorm = g.amax();
        let threshold = opts.gradient_tol * scale.max(f64::MIN_POSITIVE);
        if gnorm <= threshold || g.is_empty() {
            return Ok(NewtonOutcome {
                theta: theta.as_slice().to_vec(),
                gradient_norm: gnorm,
                iterations: iter,
            });
        }
        if iter == opts.max_iter {
            break;
        }
        let neg_h = -h;
        let dir = match neg_h.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => g.clone(),
        };
        let slope = g.dot(&dir);
        let mut step = 1.0;
        let mut accepted = false;
        // Predicted gains below the resolution of the objective: trust the
        // Newton model and only enforce feasibility.
        let trust_model = slope <= 1e-11 * (1.0 + value.abs());
        for _ in 0..60 {
            let cand = &theta + step * &dir;
            let w = problem.design.apply(problem.offsets, cand.as_slice());
            let v = problem.value(&w);
            if v.is_finite() && (trust_model || v >= value + 1e-4 * step * slope) {
                theta = cand;
                wealth = w;
                value = v;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Stalled at the floating-point floor of the objective.
            if gnorm <= 1e3 * threshold {
                return Ok(NewtonOutcome {
                    theta: theta.as_slice().to_vec(),
                    gradient_norm: gnorm,
                    iterations: iter,
                });
            }
            return Err(OptimizeError::NonConvergence {
                iterations: iter,
                gradient: gnorm,
            });
        }
    }
    Err(OptimizeError::NonConvergence {
        iterations: opts.max_iter,
        gradient: gnorm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::binomial;
    use crate::utility::{UtilityOnR, UtilityOnRPlus};
    use approx::assert_abs_diff_eq;

    #[test]
    fn share_design_matches_path_sums() {
        let tree = binomial(1.0, 2.0, 0.5, 0.5, 2).unwrap();
        let design = Design::shares(&tree);
        assert_eq!(design.dim(), 3);
        let w = design.apply(&[0.0; 4], &[1.0, 0.0, 0.0]);
        assert_eq!(w, vec![1.0, 1.0, -0.5, -0.5]);
        let w = design.apply(&[0.0; 4], &[0.0, 1.0, 1.0]);
        // up-up, up-down, down-up, down-down increments from level 1
        assert_eq!(w, vec![2.0, -1.0, 0.5, -0.25]);
    }

    #[test]
    fn binomial_exponential_closed_form() {
        let tree = binomial(1.0, 2.0, 0.5, 0.5, 1).unwrap();
        let design = Design::shares(&tree);
        let u = UtilityOnR::exponential(1.0).unwrap();
        let problem = Problem {
            utility: &u,
            weights: &[0.5, 0.5],
            offsets: &[0.0, 0.0],
            design: &design,
        };
        let opts = NewtonOptions {
            gradient_tol: 1e-12,
            max_iter: 100,
        };
        let out = maximize(&problem, &[0.0], opts).unwrap();
        assert_abs_diff_eq!(out.theta[0], 2f64.ln() / 1.5, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_start_is_reported() {
        let tree = binomial(1.0, 2.0, 0.5, 0.5, 1).unwrap();
        let design = Design::shares(&tree);
        let u = UtilityOnRPlus::power(-1.0).unwrap();
        let problem = Problem {
            utility: &u,
            weights: &[0.5, 0.5],
            offsets: &[1.0, 1.0],
            design: &design,
        };
        let opts = NewtonOptions {
            gradient_tol: 1e-12,
            max_iter: 100,
        };
        assert_eq!(
            maximize(&problem, &[5.0], opts).unwrap_err(),
            OptimizeError::InfeasibleStart
        );
        let out = maximize(&problem, &[0.0], opts).unwrap();
        let k = 2f64.sqrt();
        assert_abs_diff_eq!(out.theta[0], (k - 1.0) / (1.0 + 0.5 * k), epsilon = 1e-12);
    }
}
