//! Utility maximization on (0, ∞) with a terminal utility field, the
//! opportunity process, auxiliary measures and the exponential hedge.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::entropic::{ensure_martingale_measure, solve_primal_with, SolverError, SolverOptions};
use crate::market::{
    bracket_distance, dot, wealth_additive, wealth_multiplicative, AdaptedProcess, MarketError,
    Measure, ScenarioTree, Strategy, StrategyMode,
};
use crate::optimize::{maximize, Design, Problem};
use crate::utility::{RatioCertified, ScalarUtility, UtilityField, UtilityOnR};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositiveSolution {
    pub p: f64,
    pub x0: f64,
    /// Optimal fractions of wealth π_p.
    pub fractions: Strategy,
    /// The same strategy in shares.
    pub shares: Strategy,
    pub wealth: AdaptedProcess,
    pub value: f64,
    /// y_p = E_P[D_T U′(X_T) X_T] / x0.
    pub y: f64,
    /// Y_T = D_T U′(X_T) / y_p per leaf.
    pub deflator: Vec<f64>,
    /// D_T per leaf.
    pub field_weights: Vec<f64>,
    pub gradient_norm: f64,
    pub iterations: usize,
}

pub fn solve_power_field(
    tree: &ScenarioTree,
    field: &UtilityField,
    x0: f64,
) -> Result<PositiveSolution, SolverError> {
    solve_power_field_with(tree, field, x0, &SolverOptions::default(), None)
}

/// Maximizes E_P[D_T U_p(X_T)] over admissible strategies. The search runs
/// in share variables, where the objective is concave in the strategy and
/// positivity of terminal wealth forces positivity at every node.
pub fn solve_power_field_with(
    tree: &ScenarioTree,
    field: &UtilityField,
    x0: f64,
    opts: &SolverOptions,
    warm: Option<&Strategy>,
) -> Result<PositiveSolution, SolverError> {
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(MarketError::AdmissibilityViolation {
            node: 0,
            wealth: x0,
        }
        .into());
    }
    tree.check_leaf_values(field.weights(), "utility field weights")?;
    ensure_martingale_measure(tree)?;
    let u = field.utility();
    let design = Design::shares(tree);
    let weights: Vec<f64> = tree
        .physical_measure()
        .weights()
        .iter()
        .zip(field.weights())
        .map(|(p, d)| p * d)
        .collect();
    let offsets = vec![x0; tree.leaf_count()];
    let problem = Problem {
        utility: u,
        weights: &weights,
        offsets: &offsets,
        design: &design,
    };
    let zero = vec![0.0; design.dim()];
    let start = match warm {
        Some(h)
            if h.mode() == StrategyMode::Shares && h.positions().len() == tree.internal_count() =>
        {
            h.to_flat()
        }
        _ => zero.clone(),
    };
    let out = match maximize(&problem, &start, opts.newton()) {
        Err(crate::optimize::OptimizeError::InfeasibleStart) => {
            maximize(&problem, &zero, opts.newton())?
        }
        other => other?,
    };
    let shares = Strategy::from_flat(tree, StrategyMode::Shares, &out.theta);
    let wealth = wealth_additive(tree, &shares, x0)?;
    let min_wealth = wealth
        .values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !(min_wealth > 1e-12 * x0) {
        return Err(SolverError::AdmissibilityBoundaryHit { min_wealth });
    }
    let positions = tree
        .internal_nodes()
        .map(|n| {
            let x = wealth.at(n);
            shares
                .at(n)
                .iter()
                .zip(&tree.node(n).price)
                .map(|(h, s)| h * s / x)
                .collect()
        })
        .collect();
    let fractions = Strategy::from_positions(tree, StrategyMode::Fractions, positions)?;
    let terminal = wealth.terminal(tree);
    let value = weights
        .iter()
        .zip(terminal)
        .map(|(w, &x)| w * u.value(x))
        .sum();
    let marg: Vec<f64> = field
        .weights()
        .iter()
        .zip(terminal)
        .map(|(d, &x)| d * u.marginal(x))
        .collect();
    let p_weights = tree.physical_measure();
    let y = p_weights
        .weights()
        .iter()
        .zip(&marg)
        .zip(terminal)
        .map(|((p, m), x)| p * m * x)
        .sum::<f64>()
        / x0;
    Ok(PositiveSolution {
        p: u.p(),
        x0,
        fractions,
        shares,
        deflator: marg.iter().map(|m| m / y).collect(),
        wealth,
        value,
        y,
        field_weights: field.weights().to_vec(),
        gradient_norm: out.gradient_norm,
        iterations: out.iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpportunityProcess {
    /// L_t per node.
    pub values: AdaptedProcess,
    /// One-step optimal fractions from the recursion.
    pub fractions: Strategy,
}

/// Backward recursion L_T = D_T, L_t = min_π E[L_{t+1}(1 + π·ΔR)^p | node]
/// for the pure power utility x^p/p.
pub fn opportunity_process(
    tree: &ScenarioTree,
    p: f64,
    d: &[f64],
) -> Result<OpportunityProcess, SolverError> {
    if !(p < 0.0) {
        return Err(crate::utility::UtilityError::Exponent(p).into());
    }
    tree.check_leaf_values(d, "utility field weights")?;
    ensure_martingale_measure(tree)?;
    let mut values = vec![0.0; tree.num_nodes()];
    for (k, leaf) in tree.leaves().enumerate() {
        values[leaf] = d[k];
    }
    let mut positions = vec![Vec::new(); tree.internal_count()];
    for n in tree.internal_nodes().rev() {
        let children = tree.node(n).children();
        let q: Vec<f64> = children
            .iter()
            .map(|&c| tree.node(c).prob * values[c])
            .collect();
        let r: Vec<Vec<f64>> = children.iter().map(|&c| tree.return_increment(c)).collect();
        let (pi, l) = one_step_power(&q, &r, p)?;
        values[n] = l;
        positions[n] = pi;
    }
    Ok(OpportunityProcess {
        values: AdaptedProcess::new(tree, values)?,
        fractions: Strategy::from_positions(tree, StrategyMode::Fractions, positions)?,
    })
}

/// Minimizes Σ q_c (1 + π·r_c)^p over π with 1 + π·r_c > 0.
fn one_step_power(q: &[f64], r: &[Vec<f64>], p: f64) -> Result<(Vec<f64>, f64), SolverError> {
    let d = r[0].len();
    let eval = |pi: &DVector<f64>| -> f64 {
        let mut total = 0.0;
        for (qc, rc) in q.iter().zip(r) {
            let g = 1.0 + dot(pi.as_slice(), rc);
            if !(g > 0.0) {
                return f64::INFINITY;
            }
            total += qc * g.powf(p);
        }
        total
    };
    let mut pi: DVector<f64> = DVector::zeros(d);
    let mut f = eval(&pi);
    for iter in 0..200 {
        let mut g: DVector<f64> = DVector::zeros(d);
        let mut h: DMatrix<f64> = DMatrix::zeros(d, d);
        let mut scale = 0.0_f64;
        for (qc, rc) in q.iter().zip(r) {
            let base = 1.0 + dot(pi.as_slice(), rc);
            let g1 = p * qc * base.powf(p - 1.0);
            let g2 = p * (p - 1.0) * qc * base.powf(p - 2.0);
            for i in 0..d {
                g[i] += g1 * rc[i];
                scale = scale.max((g1 * rc[i]).abs());
                for j in 0..d {
                    h[(i, j)] += g2 * rc[i] * rc[j];
                }
            }
        }
        if g.amax() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return Ok((pi.as_slice().to_vec(), f));
        }
        let dir: DVector<f64> = match h.cholesky() {
            Some(ch) => -ch.solve(&g),
            None => -g.clone(),
        };
        let slope = g.dot(&dir);
        let trust_model = -slope <= 1e-12 * f.abs();
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..80 {
            let cand = &pi + t * &dir;
            let fc = eval(&cand);
            if fc.is_finite() && (trust_model || fc <= f + 1e-4 * t * slope) {
                pi = cand;
                f = fc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            if g.amax() <= 1e-10 * scale {
                return Ok((pi.as_slice().to_vec(), f));
            }
            return Err(SolverError::NonConvergence {
                iterations: iter,
                residual: g.amax(),
            });
        }
    }
    Err(SolverError::NonConvergence {
        iterations: 200,
        residual: f64::NAN,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentialHedge {
    /// Monetary positions ϑ̂ = H·S_prev.
    pub amounts: Strategy,
    pub shares: Strategy,
    /// sup E_P[−exp(B − x0 − (ϑ·R)_T)].
    pub value: f64,
    /// x0 − B + (ϑ·R)_T per leaf.
    pub total: Vec<f64>,
}

pub fn exponential_hedge(
    tree: &ScenarioTree,
    claim: &[f64],
    x0: f64,
) -> Result<ExponentialHedge, SolverError> {
    exponential_hedge_with(tree, claim, x0, &SolverOptions::default())
}

pub fn exponential_hedge_with(
    tree: &ScenarioTree,
    claim: &[f64],
    x0: f64,
    opts: &SolverOptions,
) -> Result<ExponentialHedge, SolverError> {
    tree.check_leaf_values(claim, "claim")?;
    let u0 = UtilityOnR::exponential(1.0)?;
    let xi: Vec<f64> = claim.iter().map(|b| x0 - b).collect();
    let sol = solve_primal_with(tree, &u0, &xi, opts, None)?;
    let positions = tree
        .internal_nodes()
        .map(|n| {
            sol.strategy
                .at(n)
                .iter()
                .zip(&tree.node(n).price)
                .map(|(h, s)| h * s)
                .collect()
        })
        .collect();
    Ok(ExponentialHedge {
        amounts: Strategy::from_positions(tree, StrategyMode::Amounts, positions)?,
        shares: sol.strategy,
        value: sol.value,
        total: sol.total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuxMeasure {
    pub measure: Measure,
    /// max over audited wealths of E_{P_p}[X_T / X̃_T]·x̃0/X_0 − 1.
    pub numeraire_excess: f64,
}

/// Wealth processes audited against the numéraire property.
pub const NUMERAIRE_SAMPLES: usize = 10;
pub const NUMERAIRE_TOLERANCE: f64 = 1e-9;

/// dP_p/dP ∝ D_T·(X̃_T)^p for the pure power optimum X̃. With D ≡ 1 this is
/// the usual (X̃_T)^p weighting.
pub fn auxiliary_measure(
    tree: &ScenarioTree,
    pure: &PositiveSolution,
) -> Result<AuxMeasure, SolverError> {
    let terminal = pure.wealth.terminal(tree);
    let raw: Vec<f64> = tree
        .physical_measure()
        .weights()
        .iter()
        .zip(&pure.field_weights)
        .zip(terminal)
        .map(|((p, d), x)| p * d * x.powf(pure.p))
        .collect();
    let measure = Measure::from_unnormalized(raw)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut candidates = vec![
        AdaptedProcess::new(tree, vec![pure.x0; tree.num_nodes()])?,
        pure.wealth.clone(),
    ];
    candidates.extend(random_admissible_wealths(
        tree,
        pure.x0,
        NUMERAIRE_SAMPLES,
        &mut rng,
    )?);
    let mut aux = AuxMeasure {
        measure,
        numeraire_excess: 0.0,
    };
    aux.numeraire_excess = numeraire_audit(tree, &aux, pure, &candidates);
    if aux.numeraire_excess > NUMERAIRE_TOLERANCE {
        return Err(SolverError::NumeraireViolation {
            excess: aux.numeraire_excess,
        });
    }
    Ok(aux)
}

/// max over `wealths` of E_{P_p}[X_T/X̃_T]·x̃0/X_0 − 1.
pub fn numeraire_audit(
    tree: &ScenarioTree,
    aux: &AuxMeasure,
    pure: &PositiveSolution,
    wealths: &[AdaptedProcess],
) -> f64 {
    let xt = pure.wealth.terminal(tree);
    wealths
        .iter()
        .map(|w| {
            let ratio: Vec<f64> = w
                .terminal(tree)
                .iter()
                .zip(xt)
                .map(|(a, b)| a / b)
                .collect();
            aux.measure.expectation(&ratio) * pure.x0 / w.at(0) - 1.0
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Random fraction strategies kept inside the admissible region
/// (1 + π·ΔR ≥ 0.1 at every step).
pub fn random_admissible_wealths<R: Rng>(
    tree: &ScenarioTree,
    x0: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<AdaptedProcess>, MarketError> {
    (0..count)
        .map(|_| {
            let positions = tree
                .internal_nodes()
                .map(|n| {
                    let mut pi: Vec<f64> = (0..tree.assets())
                        .map(|_| rng.gen_range(-2.0..2.0))
                        .collect();
                    let worst = tree
                        .node(n)
                        .children()
                        .iter()
                        .map(|&c| dot(&pi, &tree.return_increment(c)))
                        .fold(0.0_f64, f64::min);
                    if worst < -0.9 {
                        let s = 0.9 / -worst;
                        pi.iter_mut().for_each(|x| *x *= s);
                    }
                    pi
                })
                .collect();
            let pi = Strategy::from_positions(tree, StrategyMode::Fractions, positions)?;
            wealth_multiplicative(tree, &pi, x0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioDiagnostics {
    /// r = X/X̃ per node.
    pub ratio: AdaptedProcess,
    /// E_{P_p}[|p|·|𝔉(X_T) r_T^{p−1} − 1|·|1 − r_T|].
    pub ratio_gap: f64,
    /// |p|·2·max{(u_p−1)(u_p^{1/(1−p)}−1), (1−ℓ_p)(1−ℓ_p^{1/(1−p)})}.
    pub ratio_gap_bound: f64,
    /// E_{P_p}[|r_T^p − 1|].
    pub rp_l1: f64,
    /// E_{P_p} of the discrete bracket of the stochastic logarithm of r^p.
    pub log_bracket: f64,
    /// max over nodes of E_{P_p}[r_{t+1} | node] − r_t.
    pub supermartingale_defect: f64,
    /// min over nodes of E_{P_p}[r^p_{t+1} | node] − r^p_t.
    pub submartingale_defect: f64,
}

pub fn ratio_gap_bound(p: f64, lower: f64, upper: f64) -> f64 {
    let e = 1.0 / (1.0 - p);
    let a = (upper - 1.0) * (upper.powf(e) - 1.0);
    let b = (1.0 - lower) * (1.0 - lower.powf(e));
    p.abs() * 2.0 * a.max(b)
}

/// Compares the optimum for a general field with the pure power optimum.
pub fn ratio_diagnostics(
    tree: &ScenarioTree,
    field: &UtilityField,
    general: &PositiveSolution,
    pure: &PositiveSolution,
    aux: &AuxMeasure,
) -> Result<RatioDiagnostics, SolverError> {
    if general.wealth.values().len() != tree.num_nodes()
        || pure.wealth.values().len() != tree.num_nodes()
    {
        return Err(MarketError::Shape("solutions belong to a different tree".into()).into());
    }
    tree.check_measure(&aux.measure)?;
    let p = general.p;
    let r: Vec<f64> = general
        .wealth
        .values()
        .iter()
        .zip(pure.wealth.values())
        .map(|(a, b)| a / b)
        .collect();
    let u = field.utility();
    let xt = general.wealth.terminal(tree);
    let leaves = tree.leaves();
    let rt = &r[leaves.clone()];
    let gap_terms: Vec<f64> = xt
        .iter()
        .zip(rt)
        .map(|(&x, &rv)| p.abs() * (u.ratio(x) * rv.powf(p - 1.0) - 1.0).abs() * (1.0 - rv).abs())
        .collect();
    let (lower, upper) = u.certificate();
    let rp_terms: Vec<f64> = rt.iter().map(|rv| (rv.powf(p) - 1.0).abs()).collect();
    let masses = tree.node_masses(&aux.measure);
    let mut log_bracket = 0.0;
    let mut sup_defect = f64::NEG_INFINITY;
    let mut sub_defect = f64::INFINITY;
    for n in tree.internal_nodes() {
        let probs = tree.transition_probs(&masses, n);
        let children = tree.node(n).children();
        let rn = r[n];
        let rpn = rn.powf(p);
        let mut er = 0.0;
        let mut erp = 0.0;
        let mut jumps = 0.0;
        for (&c, q) in children.iter().zip(&probs) {
            er += q * r[c];
            let rpc = r[c].powf(p);
            erp += q * rpc;
            jumps += q * ((rpc - rpn) / rpn).powi(2);
        }
        sup_defect = sup_defect.max(er - rn);
        sub_defect = sub_defect.min(erp - rpn);
        log_bracket += masses[n] * jumps;
    }
    Ok(RatioDiagnostics {
        ratio: AdaptedProcess::new(tree, r.clone())?,
        ratio_gap: aux.measure.expectation(&gap_terms),
        ratio_gap_bound: ratio_gap_bound(p, lower, upper),
        rp_l1: aux.measure.expectation(&rp_terms),
        log_bracket,
        supermartingale_defect: sup_defect,
        submartingale_defect: sub_defect,
    })
}

/// Bracket of ((1−p)π_p − ϑ̂)·R under `m`, using compensated returns.
pub fn scaled_strategy_distance(
    tree: &ScenarioTree,
    pi: &Strategy,
    hedge: &ExponentialHedge,
    p: f64,
    m: &Measure,
) -> Result<f64, SolverError> {
    let scaled = scaled_fractions(pi, p)?;
    Ok(bracket_distance(tree, m, &scaled, &hedge.amounts)?)
}

/// sup over nodes and assets of |(1−p)π_p − ϑ̂|.
pub fn scaled_strategy_gap(
    pi: &Strategy,
    hedge: &ExponentialHedge,
    p: f64,
) -> Result<f64, SolverError> {
    Ok(scaled_fractions(pi, p)?
        .difference(&hedge.amounts)?
        .sup_norm())
}

fn scaled_fractions(pi: &Strategy, p: f64) -> Result<Strategy, SolverError> {
    if pi.mode() != StrategyMode::Fractions {
        return Err(MarketError::ModeMismatch {
            left: StrategyMode::Fractions,
            right: pi.mode(),
        }
        .into());
    }
    Ok(pi.scaled(1.0 - p).with_mode(StrategyMode::Amounts))
}

/// ỹ_p / y_p together with the two-sided bound 1/u_p ≤ ỹ_p/y_p ≤ 1/ℓ_p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultiplierAudit {
    pub ratio: f64,
    /// max(1 − 1/u_p, 1/ℓ_p − 1).
    pub bound: f64,
    /// max(u_p − 1, 1 − ℓ_p), reported for comparison.
    pub certificate_width: f64,
}

pub fn multiplier_audit(
    field: &UtilityField,
    general: &PositiveSolution,
    pure: &PositiveSolution,
) -> MultiplierAudit {
    let (lower, upper) = field.utility().certificate();
    MultiplierAudit {
        ratio: pure.y / general.y,
        bound: (1.0 - 1.0 / upper).max(1.0 / lower - 1.0),
        certificate_width: (upper - 1.0).max(1.0 - lower),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::binomial;
    use crate::utility::{MixingFunction, UtilityOnRPlus};
    use approx::assert_abs_diff_eq;

    fn closed_form_pi(p: f64) -> f64 {
        let k = 2f64.powf(1.0 / (1.0 - p));
        (k - 1.0) / (1.0 + 0.5 * k)
    }

    fn pure(tree: &ScenarioTree, p: f64) -> PositiveSolution {
        let field = UtilityField::unit(UtilityOnRPlus::power(p).unwrap(), tree.leaf_count());
        solve_power_field(tree, &field, 1.0).unwrap()
    }

    #[test]
    fn binomial_power_closed_form() {
        let tree = binomial(1.0, 2.0, 0.5, 0.5, 1).unwrap();
        let sol = pure(&tree, -1.0);
        assert_abs_diff_eq!(sol.fractions.at(0)[0], 0.242641, epsilon = 1e-6);
        assert_abs_diff_eq!(
            sol.fractions.at(0)[0],
            closed_form_pi(-1.0),
            epsilon = 1e-12
        );
        assert!(sol.gradient_norm <= 1e-10);
        // first-order identities
        let lhs: f64 = tree.physical_measure().expectation(
            &sol.wealth
                .terminal(&tree)
                .iter()
                .map(|x| x.powf(-1.0))
                .collect::<Vec<_>>(),
        );
        assert_abs_diff_eq!(lhs, sol.y * sol.x0, epsilon = 1e-12);
        for p in [-7.0, -31.0, -63.0] {
            let s = pure(&tree, p);
            assert_abs_diff_eq!(s.fractions.at(0)[0], closed_form_pi(p), epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_field_leaves_strategy_unchanged() {
        let tree = binomial(1.0, 2.0, 0.5, 0.5, 2).unwrap();
        let u = UtilityOnRPlus::power(-2.0).unwrap();
        let a = solve_power_field(&tree, &UtilityField::unit(u.clone(), 4), 1.0).unwrap();
        let b = solve_power_field(&tree, &UtilityField::from_claim(u, &[0.3; 4]).unwrap(), 1.0)
            .unwrap();
        for (x, y) in a
            .fractions
            .positions()
            .iter()
            .flatten()
            .zip(b.fractions.positions().iter().flatten())
        {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn opportunity_process_binomial() {
        let tree = binomial(1.0, 2.0, 0.5, 0.5, 1).unwrap();
        let opp = opportunity_process(&tree, -1.0, &[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(opp.values.at(0), 0.971405, epsilon = 1e-6);
        let sol = pure(&tree, -1.0);
        assert_abs_diff_eq!(opp.values.at(0) / -1.0, sol.value, epsilon = 1e-12);
        assert_abs_diff_eq!(opp.values.at(0), sol.y, epsilon = 1e-12);
        assert_abs_diff_eq!(
            opp.fractions.at(0)[0],
            sol.fractions.at(0)[0],
            epsilon = 1e-10
        );
    }

    #[test]
    fn opportunity_process_matches_solver_on_field() {
        let tree = binomial(1.0, 1.3, 0.8, 0.6, 3).unwrap();
        let claim: Vec<f64> = tree
            .leaves()
            .map(|l| (tree.node(l).price[0] - 1.0).max(0.0))
            .collect();
        let p = -4.0;
        let field = UtilityField::from_claim(UtilityOnRPlus::power(p).unwrap(), &claim).unwrap();
        let x0 = 2.0;
        let sol = solve_power_field(&tree, &field, x0).unwrap();
        let opp = opportunity_process(&tree, p, field.weights()).unwrap();
        assert_abs_diff_eq!(
            opp.values.at(0) * x0.powf(p) / p,
            sol.value,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(opp.values.at(0) * x0.powf(p - 1.0), sol.y, epsilon = 1e-11);
        for (a, b) in opp
            .fractions
            .positions()
            .iter()
            .zip(sol.fractions.positions())
        {
            assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-9);
        }
    }

    #[test]
    fn exponential_hedge_binomial() {
        let tree = binomial(1.0, 2.0, 0.5, 0.5, 1).unwrap();
        let hedge = exponential_hedge(&tree, &[0.0, 0.0], 0.0).unwrap();
        assert_abs_diff_eq!(hedge.amounts.at(0)[0], 2f64.ln() / 1.5, epsilon = 1e-12);
        let shifted = exponential_hedge(&tree, &[0.0, 0.0], 0.8).unwrap();
        assert_abs_diff_eq!(
            shifted.amounts.at(0)[0],
            hedge.amounts.at(0)[0],
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            shifted.value,
            hedge.value * (-0.8f64).exp(),
            epsilon = 1e-14
        );

        // the claim is replicated on top of the claim-free optimum
        let call = [1.0, 0.0];
        let h = exponential_hedge(&tree, &call, 1.0).unwrap();
        let free = exponential_hedge(&tree, &[0.0, 0.0], 1.0).unwrap();
        for (a, b) in h.total.iter().zip(&free.total) {
            assert_abs_diff_eq!(a - b, -1.0 / 3.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn auxiliary_measure_binomial() {
        let tree = binomial(1.0, 2.0, 0.5, 0.5, 1).unwrap();
        let sol = pure(&tree, -1.0);
        let aux = auxiliary_measure(&tree, &sol).unwrap();
        assert_abs_diff_eq!(aux.measure.weights()[0], 0.414214, epsilon = 1e-6);
        assert!(aux.numeraire_excess <= 1e-9);
        let itself = numeraire_audit(&tree, &aux, &sol, std::slice::from_ref(&sol.wealth));
        assert_abs_diff_eq!(itself, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn diagnostics_vanish_for_identical_solutions() {
        let tree = binomial(1.0, 2.0, 0.5, 0.5, 2).unwrap();
        let field = UtilityField::unit(UtilityOnRPlus::power(-3.0).unwrap(), 4);
        let sol = solve_power_field(&tree, &field, 1.0).unwrap();
        let aux = auxiliary_measure(&tree, &sol).unwrap();
        let diag = ratio_diagnostics(&tree, &field, &sol, &sol, &aux).unwrap();
        assert!(diag.ratio.values().iter().all(|&r| r == 1.0));
        assert_eq!(
            (diag.ratio_gap, diag.rp_l1, diag.log_bracket),
            (0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn family_member_diagnostics_within_bound() {
        let tree = binomial(1.0, 2.0, 0.5, 0.5, 1).unwrap();
        let base = UtilityOnRPlus::log_sine(-1.0, 0.1, 1.0).unwrap();
        let p = -10.0;
        let member =
            UtilityOnRPlus::family_member(&base, p, &MixingFunction::InverseLinear).unwrap();
        let (l, u) = member.certificate();
        assert_abs_diff_eq!(l, 0.99, epsilon = 1e-15);
        assert_abs_diff_eq!(u, 1.01, epsilon = 1e-15);
        let field = UtilityField::unit(member, 2);
        let general = solve_power_field(&tree, &field, 1.0).unwrap();
        let pure_sol = pure(&tree, p);
        let aux = auxiliary_measure(&tree, &pure_sol).unwrap();
        let diag = ratio_diagnostics(&tree, &field, &general, &pure_sol, &aux).unwrap();
        assert!(diag.ratio_gap <= diag.ratio_gap_bound);
        assert!(diag.supermartingale_defect <= 1e-9);
        assert!(diag.submartingale_defect >= -1e-9);
        let audit = multiplier_audit(&field, &general, &pure_sol);
        assert!((audit.ratio - 1.0).abs() <= audit.bound + 1e-9);
    }

    #[test]
    fn scaled_distance_properties() {
        let tree = binomial(1.0, 2.0, 0.5, 0.5, 1).unwrap();
        let hedge = exponential_hedge(&tree, &[0.0, 0.0], 1.0).unwrap();
        let p = -7.0;
        let matched = hedge
            .amounts
            .scaled(1.0 / (1.0 - p))
            .with_mode(StrategyMode::Fractions);
        let m = tree.physical_measure();
        assert_abs_diff_eq!(
            scaled_strategy_distance(&tree, &matched, &hedge, p, &m).unwrap(),
            0.0,
            epsilon = 1e-30
        );
        let d7 = scaled_strategy_distance(&tree, &pure(&tree, -7.0).fractions, &hedge, -7.0, &m)
            .unwrap();
        let d31 = scaled_strategy_distance(&tree, &pure(&tree, -31.0).fractions, &hedge, -31.0, &m)
            .unwrap();
        assert!(d31 < d7);
        let g31 = scaled_strategy_gap(&pure(&tree, -31.0).fractions, &hedge, -31.0).unwrap();
        assert_abs_diff_eq!(
            g31,
            (32.0 * closed_form_pi(-31.0) - 2f64.ln() / 1.5).abs(),
            epsilon = 1e-10
        );
    }
}
