//! Davis prices under the dual measure and indifference buyer's prices.

use serde::Serialize;

use crate::entropic::{solve_primal_with, DualMeasure, SolverError, SolverOptions};
use crate::market::{Measure, ScenarioTree, Strategy};
use crate::utility::UtilityOnR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceMethod {
    Davis,
    Indifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceResult {
    pub price: f64,
    pub method: PriceMethod,
    /// |u(x0 + B − price) − u(x0)| for indifference prices, 0 otherwise.
    pub residual: f64,
    pub bracket: (f64, f64),
}

fn check_claim(claim: &[f64]) -> Result<(), SolverError> {
    match claim.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
        Some(&b) => Err(SolverError::NegativeClaim(b)),
        None => Ok(()),
    }
}

/// E_Q[B] under the dual measure.
pub fn davis_price(dual: &DualMeasure, claim: &[f64]) -> Result<PriceResult, SolverError> {
    davis_price_under(&dual.measure, claim)
}

pub fn davis_price_under(m: &Measure, claim: &[f64]) -> Result<PriceResult, SolverError> {
    check_claim(claim)?;
    if claim.len() != m.weights().len() {
        return Err(crate::market::MarketError::Shape(
            "claim length differs from leaf count".into(),
        )
        .into());
    }
    let price = m.expectation(claim);
    Ok(PriceResult {
        price,
        method: PriceMethod::Davis,
        residual: 0.0,
        bracket: (price, price),
    })
}

/// Default bisection steps for indifference prices.
pub const INDIFFERENCE_ITERATIONS: usize = 60;

/// Solves u(x0 + B − p) = u(x0) by bisection on [min B, max B].
pub fn indifference_price(
    tree: &ScenarioTree,
    u: &UtilityOnR,
    x0: f64,
    claim: &[f64],
    tol: f64,
) -> Result<PriceResult, SolverError> {
    indifference_price_with(tree, u, x0, claim, tol, &SolverOptions::default())
}

pub fn indifference_price_with(
    tree: &ScenarioTree,
    u: &UtilityOnR,
    x0: f64,
    claim: &[f64],
    tol: f64,
    opts: &SolverOptions,
) -> Result<PriceResult, SolverError> {
    check_claim(claim)?;
    tree.check_leaf_values(claim, "claim")?;
    let n = tree.leaf_count();
    let base = solve_primal_with(tree, u, &vec![x0; n], opts, None)?.value;
    let lo0 = claim.iter().copied().fold(f64::INFINITY, f64::min);
    let hi0 = claim.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut warm: Option<Strategy> = None;
    let mut gap = |price: f64| -> Result<f64, SolverError> {
        let xi: Vec<f64> = claim.iter().map(|b| x0 + b - price).collect();
        let sol = solve_primal_with(tree, u, &xi, opts, warm.as_ref())?;
        warm = Some(sol.strategy);
        Ok(sol.value - base)
    };
    if hi0 - lo0 <= 0.0 {
        let residual = gap(lo0)?.abs();
        return Ok(PriceResult {
            price: lo0,
            method: PriceMethod::Indifference,
            residual,
            bracket: (lo0, hi0),
        });
    }
    let (mut lo, mut hi) = (lo0, hi0);
    let (g_lo, g_hi) = (gap(lo)?, gap(hi)?);
    if g_lo < -tol || g_hi > tol {
        return Err(SolverError::BracketFailure { lo, hi });
    }
    let mut best = if g_lo.abs() <= g_hi.abs() {
        (lo, g_lo)
    } else {
        (hi, g_hi)
    };
    for _ in 0..INDIFFERENCE_ITERATIONS {
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let g = gap(mid)?;
        if g.abs() < best.1.abs() {
            best = (mid, g);
        }
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let price = if best.1.abs() <= tol {
        best.0
    } else {
        0.5 * (lo + hi)
    };
    let residual = gap(price)?.abs();
    if residual > tol {
        return Err(SolverError::BracketFailure { lo, hi });
    }
    Ok(PriceResult {
        price,
        method: PriceMethod::Indifference,
        residual,
        bracket: (lo0, hi0),
    })
}
