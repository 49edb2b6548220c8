//! Single-instance solve and price reports.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{ExperimentConfig, RFamilySpec, UtilitySpec};
use super::{ConfigError, HarnessError, SCHEMA_VERSION};
use crate::entropic::{
    extract_dual, minimal_entropy_measure, solve_primal_with, verify_optimality, DualMeasure,
    OptimalityReport, PrimalSolution, SolverOptions,
};
use crate::pricing::{davis_price, indifference_price_with, PriceResult};
use crate::probes::martingale_vertices;
use crate::utility::UtilityOnR;

/// Probe vertices used by the optimality certificate.
pub const PROBE_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub schema_version: u32,
    pub name: String,
    pub utility: UtilitySpec,
    pub primal: PrimalSolution,
    pub dual: DualMeasure,
    pub minimal_entropy: DualMeasure,
    pub certificate: OptimalityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceReport {
    pub schema_version: u32,
    pub name: String,
    pub utility: UtilitySpec,
    pub x0: f64,
    pub claim: Vec<f64>,
    pub davis: PriceResult,
    pub indifference: PriceResult,
}

fn utility_of(cfg: &ExperimentConfig) -> Result<(UtilitySpec, UtilityOnR), HarnessError> {
    let spec = cfg.utility.clone().unwrap_or(UtilitySpec {
        family: RFamilySpec::Exponential { alpha_slope: 0.0 },
        delta: 0.0,
    });
    let u = spec.family.member(spec.delta).map_err(ConfigError::from)?;
    Ok((spec, u))
}

fn options(cfg: &ExperimentConfig) -> SolverOptions {
    SolverOptions {
        gradient_tol: cfg.tolerances.solver,
        ..SolverOptions::default()
    }
}

/// Solves the problem with constant endowment x0 and certifies it against
/// the vertices of the martingale polytope.
pub fn solve_report(cfg: &ExperimentConfig) -> Result<SolveReport, HarnessError> {
    let tree = cfg.tree()?;
    let (spec, u) = utility_of(cfg)?;
    let primal = solve_primal_with(
        &tree,
        &u,
        &vec![cfg.x0; tree.leaf_count()],
        &options(cfg),
        None,
    )?;
    let dual = extract_dual(&tree, &u, &primal)?;
    let minimal_entropy = minimal_entropy_measure(&tree, &u)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let probes = martingale_vertices(&tree, PROBE_CAP, &mut rng);
    let certificate = verify_optimality(&tree, &u, &primal, &dual, &probes)?;
    Ok(SolveReport {
        schema_version: SCHEMA_VERSION,
        name: cfg.name.clone(),
        utility: spec,
        primal,
        dual,
        minimal_entropy,
        certificate,
    })
}

pub fn price_report(cfg: &ExperimentConfig) -> Result<PriceReport, HarnessError> {
    let tree = cfg.tree()?;
    let (spec, u) = utility_of(cfg)?;
    let claim = cfg.claim.evaluate(&tree)?;
    let opts = options(cfg);
    let primal = solve_primal_with(&tree, &u, &vec![cfg.x0; tree.leaf_count()], &opts, None)?;
    let dual = extract_dual(&tree, &u, &primal)?;
    let davis = davis_price(&dual, &claim)?;
    let indifference =
        indifference_price_with(&tree, &u, cfg.x0, &claim, cfg.tolerances.price, &opts)?;
    Ok(PriceReport {
        schema_version: SCHEMA_VERSION,
        name: cfg.name.clone(),
        utility: spec,
        x0: cfg.x0,
        claim,
        davis,
        indifference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const BINOMIAL: &str = r#"{
        "schema_version": 1,
        "name": "b",
        "market": {"lattice": {"s0": 1.0, "u": 2.0, "d": 0.5, "q": 0.5, "steps": 1}},
        "claim": {"kind": "call", "strike": 1.0}
    }"#;

    #[test]
    fn complete_binomial_reports() {
        let cfg = ExperimentConfig::from_json(BINOMIAL).unwrap();
        let s = solve_report(&cfg).unwrap();
        assert_abs_diff_eq!(s.primal.strategy.at(0)[0], 2f64.ln() / 1.5, epsilon = 1e-10);
        assert!(s.certificate.first_order_residual <= 1e-8);
        let p = price_report(&cfg).unwrap();
        assert_abs_diff_eq!(p.davis.price, 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.indifference.price, 1.0 / 3.0, epsilon = 1e-8);
    }
}
