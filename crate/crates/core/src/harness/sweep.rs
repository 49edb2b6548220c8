//! δ-sweeps of utilities on ℝ and p-sweeps of power utility fields.

use rayon::prelude::*;

use super::config::{ConfigError, EndowmentScaling, ExperimentConfig};
use super::fit::RateModel;
use super::report::{Metadata, SweepKind, SweepReport};
use super::{thread_pool, HarnessError, SCHEMA_VERSION};
use crate::entropic::{
    extract_dual, solve_primal_with, DualMeasure, PrimalSolution, SolverError, SolverOptions,
};
use crate::market::{bracket_distance, Measure, ScenarioTree};
use crate::positive::{
    auxiliary_measure, exponential_hedge_with, multiplier_audit, ratio_diagnostics,
    scaled_strategy_distance, scaled_strategy_gap, solve_power_field_with, ExponentialHedge,
};
use crate::pricing::indifference_price_with;
use crate::utility::{MixingFunction, RatioCertified, UtilityField, UtilityOnR, UtilityOnRPlus};

/// Error functionals of a δ-sweep, in column order.
pub const DELTA_FUNCTIONALS: &[&str] = &[
    "l1_wealth_err",
    "value_err",
    "bracket_dist",
    "davis_err",
    "indiff_err",
    "dq_l1",
];

/// Functionals of a p-sweep, in column order.
pub const P_FUNCTIONALS: &[&str] = &[
    "scaled_dist",
    "sup_gap",
    "pure_scaled_dist",
    "pure_sup_gap",
    "ratio_gap",
    "ratio_gap_bound",
    "rp_l1",
    "log_bracket",
    "supermart_defect",
    "submart_defect",
    "numeraire_excess",
    "ytilde_over_y",
    "ytilde_bound",
];

/// p-sweep columns that shrink as p → −∞.
const P_ERRORS: &[&str] = &[
    "scaled_dist",
    "sup_gap",
    "pure_scaled_dist",
    "pure_sup_gap",
    "ratio_gap",
    "ratio_gap_bound",
    "rp_l1",
    "log_bracket",
];

fn selected(requested: &Option<Vec<String>>, all: &[&'static str]) -> Vec<&'static str> {
    match requested {
        Some(list) => all
            .iter()
            .copied()
            .filter(|c| list.iter().any(|r| r == c))
            .collect(),
        None => all.to_vec(),
    }
}

fn solver_options(cfg: &ExperimentConfig) -> SolverOptions {
    SolverOptions {
        gradient_tol: cfg.tolerances.solver,
        ..SolverOptions::default()
    }
}

fn empty_report(
    cfg: &ExperimentConfig,
    kind: SweepKind,
    columns: Vec<String>,
    grid: Vec<f64>,
) -> SweepReport {
    SweepReport {
        schema_version: SCHEMA_VERSION,
        kind,
        name: cfg.name.clone(),
        columns,
        rows: Vec::new(),
        complete: true,
        error: None,
        fits: Vec::new(),
        trend: Vec::new(),
        metadata: Metadata {
            seed: cfg.seed,
            tolerances: cfg.tolerances,
            grid,
            x0: cfg.x0,
        },
    }
}

/// Keeps the rows before the first failed grid point.
fn collect_rows(report: &mut SweepReport, results: Vec<Result<Vec<f64>, SolverError>>) {
    for r in results {
        match r {
            Ok(row) => report.rows.push(row),
            Err(e) => {
                report.complete = false;
                report.error = Some(e.to_string());
                break;
            }
        }
    }
}

struct DeltaBaseline {
    sol: PrimalSolution,
    dual: DualMeasure,
    davis: f64,
    indifference: Option<f64>,
}

struct DeltaContext<'a> {
    tree: &'a ScenarioTree,
    cfg: &'a ExperimentConfig,
    claim: Vec<f64>,
    endowment: Vec<f64>,
    opts: SolverOptions,
    want_indifference: bool,
}

impl DeltaContext<'_> {
    fn endowment_at(&self, alpha: f64) -> Vec<f64> {
        let scaling = self.cfg.delta_sweep.as_ref().map(|s| s.endowment_scaling);
        let scale = match scaling {
            Some(EndowmentScaling::InverseAlpha) => 1.0 / alpha,
            _ => 1.0,
        };
        self.endowment
            .iter()
            .map(|e| scale * (self.cfg.x0 + e))
            .collect()
    }

    fn solve(
        &self,
        u: &UtilityOnR,
    ) -> Result<(PrimalSolution, DualMeasure, f64, Option<f64>), SolverError> {
        let xi = self.endowment_at(u.alpha());
        let sol = solve_primal_with(self.tree, u, &xi, &self.opts, None)?;
        let dual = extract_dual(self.tree, u, &sol)?;
        let davis = dual.measure.expectation(&self.claim);
        let indifference = if self.want_indifference {
            Some(
                indifference_price_with(
                    self.tree,
                    u,
                    self.cfg.x0,
                    &self.claim,
                    self.cfg.tolerances.price,
                    &self.opts,
                )?
                .price,
            )
        } else {
            None
        };
        Ok((sol, dual, davis, indifference))
    }

    fn row(
        &self,
        base: &DeltaBaseline,
        delta: f64,
        columns: &[&str],
    ) -> Result<Vec<f64>, SolverError> {
        let family = self
            .cfg
            .delta_sweep
            .as_ref()
            .expect("checked by caller")
            .family;
        let u = family.member(delta)?;
        let (sol, dual, davis, indifference) = self.solve(&u)?;
        let q = &base.dual.measure;
        let x_delta = sol.wealth.terminal(self.tree);
        let x_zero = base.sol.wealth.terminal(self.tree);
        let mut row = vec![delta, u.f_delta(), u.g_delta()];
        for &c in columns {
            let v = match c {
                "l1_wealth_err" => {
                    let diff: Vec<f64> = x_delta
                        .iter()
                        .zip(x_zero)
                        .map(|(a, b)| (a - b).abs())
                        .collect();
                    q.expectation(&diff)
                }
                "value_err" => (sol.value - base.sol.value).abs(),
                "bracket_dist" => {
                    bracket_distance(self.tree, q, &sol.strategy, &base.sol.strategy)?
                }
                "davis_err" => (davis - base.davis).abs(),
                "indiff_err" => match (indifference, base.indifference) {
                    (Some(a), Some(b)) => (a - b).abs(),
                    _ => f64::NAN,
                },
                "dq_l1" => l1_density_gap(&dual.measure, q),
                _ => unreachable!("functional names are validated"),
            };
            row.push(v);
        }
        Ok(row)
    }
}

/// E_Q[|dQ_δ/dQ − 1|].
fn l1_density_gap(q_delta: &Measure, q: &Measure) -> f64 {
    q_delta
        .weights()
        .iter()
        .zip(q.weights())
        .map(|(a, b)| (a - b).abs())
        .sum()
}

/// Solves the δ = 0 problem and every grid point, recording the requested
/// error functionals against the δ = 0 solution.
pub fn sweep_delta(cfg: &ExperimentConfig) -> Result<SweepReport, HarnessError> {
    let spec = cfg
        .delta_sweep
        .as_ref()
        .ok_or(ConfigError::MissingSection("delta_sweep"))?;
    let tree = cfg.tree()?;
    let columns = selected(&spec.functionals, DELTA_FUNCTIONALS);
    let mut names: Vec<String> = ["delta", "f", "g"].iter().map(|s| s.to_string()).collect();
    names.extend(columns.iter().map(|s| s.to_string()));
    let mut report = empty_report(cfg, SweepKind::Delta, names, spec.grid.clone());
    let ctx = DeltaContext {
        tree: &tree,
        cfg,
        claim: cfg.claim.evaluate(&tree)?,
        endowment: spec.endowment.evaluate(&tree)?,
        opts: solver_options(cfg),
        want_indifference: columns.contains(&"indiff_err"),
    };
    let u0 = spec.family.member(0.0).map_err(ConfigError::from)?;
    let base = match ctx.solve(&u0) {
        Ok((sol, dual, davis, indifference)) => DeltaBaseline {
            sol,
            dual,
            davis,
            indifference,
        },
        Err(e) => {
            report.complete = false;
            report.error = Some(e.to_string());
            return Ok(report);
        }
    };
    let pool = thread_pool()?;
    let results: Vec<Result<Vec<f64>, SolverError>> = pool.install(|| {
        spec.grid
            .par_iter()
            .map(|&d| ctx.row(&base, d, &columns))
            .collect()
    });
    collect_rows(&mut report, results);
    report.summarize(&columns, &[RateModel::F2PlusG, RateModel::LoglogSlope]);
    Ok(report)
}

struct PContext<'a> {
    tree: &'a ScenarioTree,
    cfg: &'a ExperimentConfig,
    base: UtilityOnRPlus,
    mix: MixingFunction,
    weights: Vec<f64>,
    hedge: ExponentialHedge,
    opts: SolverOptions,
}

impl PContext<'_> {
    fn row(&self, p: f64, columns: &[&str]) -> Result<Vec<f64>, SolverError> {
        let x0 = self.cfg.x0;
        let p0 = self.base.p();
        let fmix = self.mix.eval(p, p0);
        let general_u = UtilityOnRPlus::family_member(&self.base, p, &self.mix)?;
        let (ell, upper) = general_u.certificate();
        let general_field = UtilityField::new(general_u, self.weights.clone())?;
        let pure_field = UtilityField::new(UtilityOnRPlus::power(p)?, self.weights.clone())?;
        let pure = solve_power_field_with(self.tree, &pure_field, x0, &self.opts, None)?;
        let general = solve_power_field_with(
            self.tree,
            &general_field,
            x0,
            &self.opts,
            Some(&pure.shares),
        )?;
        let aux = auxiliary_measure(self.tree, &pure)?;
        let diag = ratio_diagnostics(self.tree, &general_field, &general, &pure, &aux)?;
        let mult = multiplier_audit(&general_field, &general, &pure);
        let phys = self.tree.physical_measure();
        let mut row = vec![p, 1.0 - p, fmix, ell, upper];
        for &c in columns {
            let v = match c {
                "scaled_dist" => {
                    scaled_strategy_distance(self.tree, &general.fractions, &self.hedge, p, &phys)?
                }
                "sup_gap" => scaled_strategy_gap(&general.fractions, &self.hedge, p)?,
                "pure_scaled_dist" => {
                    scaled_strategy_distance(self.tree, &pure.fractions, &self.hedge, p, &phys)?
                }
                "pure_sup_gap" => scaled_strategy_gap(&pure.fractions, &self.hedge, p)?,
                "ratio_gap" => diag.ratio_gap,
                "ratio_gap_bound" => diag.ratio_gap_bound,
                "rp_l1" => diag.rp_l1,
                "log_bracket" => diag.log_bracket,
                "supermart_defect" => diag.supermartingale_defect,
                "submart_defect" => diag.submartingale_defect,
                "numeraire_excess" => aux.numeraire_excess,
                "ytilde_over_y" => mult.ratio,
                "ytilde_bound" => mult.bound,
                _ => unreachable!("functional names are validated"),
            };
            row.push(v);
        }
        Ok(row)
    }
}

/// Solves the pure power and family problems with D_T = exp(B) at every
/// grid p and compares both with the exponential hedge.
pub fn sweep_p(cfg: &ExperimentConfig) -> Result<SweepReport, HarnessError> {
    let spec = cfg
        .p_sweep
        .as_ref()
        .ok_or(ConfigError::MissingSection("p_sweep"))?;
    let tree = cfg.tree()?;
    let columns = selected(&spec.functionals, P_FUNCTIONALS);
    let mut names: Vec<String> = ["p", "one_minus_p", "fmix", "ell_p", "u_p"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend(columns.iter().map(|s| s.to_string()));
    let mut report = empty_report(cfg, SweepKind::P, names, spec.grid.clone());
    let claim = cfg.claim.evaluate(&tree)?;
    let opts = solver_options(cfg);
    let hedge = match exponential_hedge_with(&tree, &claim, cfg.x0, &opts) {
        Ok(h) => h,
        Err(e) => {
            report.complete = false;
            report.error = Some(e.to_string());
            return Ok(report);
        }
    };
    let ctx = PContext {
        tree: &tree,
        cfg,
        base: spec.base.build().map_err(ConfigError::from)?,
        mix: spec.mixing.into(),
        weights: claim.iter().map(|b| b.exp()).collect(),
        hedge,
        opts,
    };
    let pool = thread_pool()?;
    let results: Vec<Result<Vec<f64>, SolverError>> = pool.install(|| {
        spec.grid
            .par_iter()
            .map(|&p| ctx.row(p, &columns))
            .collect()
    });
    collect_rows(&mut report, results);
    let errors: Vec<&str> = P_ERRORS
        .iter()
        .copied()
        .filter(|c| columns.contains(c))
        .collect();
    report.summarize(
        &errors,
        &[RateModel::InverseOneMinusP, RateModel::LoglogSlope],
    );
    Ok(report)
}
