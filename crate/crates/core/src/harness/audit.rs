//! Audits of the supermartingale moment bound and of the utility sandwiches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::{shipped_configs, HarnessError, SCHEMA_VERSION};
use crate::entropic::minimal_entropy_measure;
use crate::market::{AdaptedProcess, Measure, ScenarioTree};
use crate::utility::{
    conjugate_sandwich_audit, log_grid, power_sandwich_audit, MixingFunction, UtilityOnR,
    UtilityOnRPlus,
};

/// Exponents q at which the sup-moment bound is checked.
pub const MOMENT_EXPONENTS: [f64; 3] = [0.25, 0.5, 0.75];
pub const MIN_TRIALS: usize = 100;
/// Largest tolerated sandwich violation.
pub const SANDWICH_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCheck {
    pub q: f64,
    pub trials: usize,
    pub violations: usize,
    /// max over trials of E_Q[sup_t |Z_t|^q] / (2^q/(1−q)·E_Q[|Z_T|]^q).
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichCheck {
    pub config: String,
    /// "delta" or "p".
    pub parameter: &'static str,
    pub value: f64,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub seed: u64,
    pub trials: usize,
    pub moments: Vec<MomentCheck>,
    pub sandwiches: Vec<SandwichCheck>,
    pub max_sandwich_violation: f64,
    pub passed: bool,
}

/// (E_Q[sup_t |Z_t|^q], 2^q/(1−q)·E_Q[|Z_T|]^q) for a process on `tree`.
pub fn sup_moment_sides(
    tree: &ScenarioTree,
    q_measure: &Measure,
    z: &AdaptedProcess,
    q: f64,
) -> (f64, f64) {
    let mut running = vec![0.0_f64; tree.num_nodes()];
    running[0] = z.at(0).abs();
    for n in 1..tree.num_nodes() {
        let parent = tree.node(n).parent.expect("non-root nodes have parents");
        running[n] = running[parent].max(z.at(n).abs());
    }
    let leaves = tree.leaves();
    let sup: Vec<f64> = running[leaves.clone()].iter().map(|m| m.powf(q)).collect();
    let terminal: Vec<f64> = z.terminal(tree).iter().map(|v| v.abs()).collect();
    let lhs = q_measure.expectation(&sup);
    let rhs = 2f64.powf(q) / (1.0 - q) * q_measure.expectation(&terminal).powf(q);
    (lhs, rhs)
}

/// Z_0 = 0, Z_{t+1} = Z_t + s·(V − E_Q[V | node]) − A_node with A ≥ 0
/// predictable. The draw mixes pure martingales, pure drifts and sparse
/// perturbations touching a single node.
fn random_supermartingale<R: Rng>(
    tree: &ScenarioTree,
    masses: &[f64],
    rng: &mut R,
) -> AdaptedProcess {
    let style = rng.gen_range(0..4);
    let scale = rng.gen_range(-3.0_f64..3.0).exp();
    let active = rng.gen_range(0..tree.internal_count());
    let mut z = vec![0.0; tree.num_nodes()];
    for n in tree.internal_nodes() {
        let children = tree.node(n).children();
        let probs = tree.transition_probs(masses, n);
        let raw: Vec<f64> = children
            .iter()
            .map(|_| rng.gen_range(-1.0_f64..1.0).powi(3))
            .collect();
        let mean: f64 = raw.iter().zip(&probs).map(|(v, q)| v * q).sum();
        let (noise, drift) = match style {
            0 => (scale, 0.0),
            1 => (scale, scale * rng.gen_range(0.0..1.0)),
            2 => (0.0, scale * rng.gen_range(0.0..1.0)),
            _ if n == active => (scale, scale * rng.gen_range(0.0..0.1)),
            _ => (0.0, 0.0),
        };
        for (&c, v) in children.iter().zip(&raw) {
            z[c] = z[n] + noise * (v - mean) - drift;
        }
    }
    AdaptedProcess::new(tree, z).expect("values sized to the tree")
}

/// Checks the sup-moment bound on `trials` random Q-supermartingales, with
/// Q the minimal entropy measure, and audits the sandwich inequalities of
/// every family in the shipped configurations.
pub fn audit_probabilistic_lemmas(
    tree: &ScenarioTree,
    seed: u64,
    trials: usize,
) -> Result<AuditReport, HarnessError> {
    if trials < MIN_TRIALS {
        return Err(HarnessError::Trials(trials));
    }
    let u0 = UtilityOnR::exponential(1.0).expect("unit risk aversion");
    let q_measure = minimal_entropy_measure(tree, &u0)?.measure;
    let masses = tree.node_masses(&q_measure);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut moments: Vec<MomentCheck> = MOMENT_EXPONENTS
        .iter()
        .map(|&q| MomentCheck {
            q,
            trials,
            violations: 0,
            max_ratio: 0.0,
        })
        .collect();
    for _ in 0..trials {
        let z = random_supermartingale(tree, &masses, &mut rng);
        for check in &mut moments {
            let (lhs, rhs) = sup_moment_sides(tree, &q_measure, &z, check.q);
            if lhs > rhs * (1.0 + 1e-12) {
                check.violations += 1;
            }
            if rhs > 0.0 {
                check.max_ratio = check.max_ratio.max(lhs / rhs);
            }
        }
    }
    let sandwiches = audit_shipped_families(&shipped_configs()?)?;
    let max_sandwich_violation = sandwiches.iter().map(|s| s.violation).fold(0.0, f64::max);
    let passed =
        moments.iter().all(|m| m.violations == 0) && max_sandwich_violation <= SANDWICH_TOLERANCE;
    Ok(AuditReport {
        schema_version: SCHEMA_VERSION,
        seed,
        trials,
        moments,
        sandwiches,
        max_sandwich_violation,
        passed,
    })
}

/// Sandwich violations for every δ- and p-family member in `configs`.
pub fn audit_shipped_families(
    configs: &[ExperimentConfig],
) -> Result<Vec<SandwichCheck>, HarnessError> {
    let ygrid = log_grid(1e-3, 1e3, 121);
    let xgrid = log_grid(0.2, 5.0, 121);
    let mut out = Vec::new();
    for cfg in configs {
        if let Some(spec) = &cfg.delta_sweep {
            for &delta in &spec.grid {
                let u = spec
                    .family
                    .member(delta)
                    .map_err(super::ConfigError::from)?;
                out.push(SandwichCheck {
                    config: cfg.name.clone(),
                    parameter: "delta",
                    value: delta,
                    violation: conjugate_sandwich_audit(&u, &ygrid),
                });
            }
        }
        if let Some(spec) = &cfg.p_sweep {
            let base = spec.base.build().map_err(super::ConfigError::from)?;
            let mix = MixingFunction::from(spec.mixing);
            for &p in &spec.grid {
                let u = UtilityOnRPlus::family_member(&base, p, &mix)
                    .map_err(super::ConfigError::from)?;
                out.push(SandwichCheck {
                    config: cfg.name.clone(),
                    parameter: "p",
                    value: p,
                    violation: power_sandwich_audit(&u, &xgrid),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::binomial;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_process_has_equal_sides() {
        let tree = binomial(1.0, 2.0, 0.5, 0.5, 2).unwrap();
        let q = Measure::new(vec![1.0 / 9.0, 2.0 / 9.0, 2.0 / 9.0, 4.0 / 9.0]).unwrap();
        let z = AdaptedProcess::new(&tree, vec![0.0; tree.num_nodes()]).unwrap();
        assert_eq!(sup_moment_sides(&tree, &q, &z, 0.5), (0.0, 0.0));
    }

    #[test]
    fn unit_terminal_martingale() {
        // fair ±1 coin on the second step only, so |Z_T| = 1 on every path
        let tree = binomial(1.0, 2.0, 0.5, 0.5, 2).unwrap();
        let q = Measure::new(vec![0.25; 4]).unwrap();
        let z = AdaptedProcess::new(&tree, vec![0.0, 0.0, 0.0, 1.0, -1.0, 1.0, -1.0]).unwrap();
        for q_exp in MOMENT_EXPONENTS {
            let (lhs, rhs) = sup_moment_sides(&tree, &q, &z, q_exp);
            assert_abs_diff_eq!(lhs, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(rhs, 2f64.powf(q_exp) / (1.0 - q_exp), epsilon = 1e-15);
        }
    }

    #[test]
    fn short_audit_passes() {
        let tree = binomial(1.0, 1.3, 0.8, 0.6, 3).unwrap();
        let report = audit_probabilistic_lemmas(&tree, 3, 200).unwrap();
        assert!(report.moments.iter().all(|m| m.violations == 0));
        assert!(report.max_sandwich_violation <= SANDWICH_TOLERANCE);
        assert!(matches!(
            audit_probabilistic_lemmas(&tree, 3, 10),
            Err(HarnessError::Trials(10))
        ));
    }
}
