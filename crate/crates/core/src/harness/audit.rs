//! Per-round check of the loss-change bound
//! `F(w_{t+1}) - F(w_t) <= phi * sum ||grad F(w_{t - tau_k})||^2 + nu`.

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::experiment::{estimate_scenario_constants, run_scenario, AuditStep, RunOutput, Scenario};
use crate::error::{HpflError, Result};
use crate::pfl::{bound_constants, SmoothnessConstants};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub round: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Right-hand side of the bound for one round; `A` is the number of servers
/// aggregated in that round.
pub fn bound_rhs(step: &AuditStep, constants: &SmoothnessConstants, s: usize, k: usize, beta: f64) -> Result<f64> {
    let (phi, nu) = bound_constants(beta, s, step.a_effective, k, constants.gamma_f_sq)?;
    Ok(phi * step.stale_grad_norms_sq.iter().sum::<f64>() + nu)
}

pub fn audit_bound(
    trajectory: &[AuditStep],
    constants: &SmoothnessConstants,
    s: usize,
    k: usize,
    beta: f64,
) -> Result<Vec<AuditRow>> {
    trajectory
        .iter()
        .enumerate()
        .map(|(t, step)| {
            let lhs = step.loss_after - step.loss_before;
            let rhs = bound_rhs(step, constants, s, k, beta)?;
            Ok(AuditRow {
                round: t + 1,
                lhs,
                rhs,
                holds: lhs <= rhs,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct AuditOutput {
    pub run: RunOutput,
    pub rows: Vec<AuditRow>,
}

impl AuditOutput {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| !r.holds).count()
    }
}

/// Estimate the constants at the initial model, run with `beta = 1 / L_F`
/// and audit every round.
pub fn run_audit(cfg: &ScenarioConfig) -> Result<AuditOutput> {
    let scenario = Scenario::build(cfg)?;
    let constants = estimate_scenario_constants(&scenario)?;
    if !(constants.l_f > 0.0) {
        return Err(HpflError::DegenerateSampling("estimated L_F is zero".into()));
    }
    let mut audited = scenario;
    audited.cfg.beta = 1.0 / constants.l_f;
    let run = run_scenario(&audited, constants)?;
    let rows = audit_bound(&run.trajectory, &constants, cfg.s, cfg.k, run.beta)?;
    Ok(AuditOutput { run, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constants(gamma_f_sq: f64) -> SmoothnessConstants {
        SmoothnessConstants {
            gamma_f_sq,
            ..SmoothnessConstants::from_estimates(1.0, 1.0, 0.0, 0.0, 0.0, 0.0)
        }
    }

    #[test]
    fn stationary_trajectory_sits_below_nu() {
        let step = AuditStep {
            loss_before: 0.7,
            loss_after: 0.7,
            stale_grad_norms_sq: vec![0.0, 0.0],
            a_effective: 2,
        };
        let rows = audit_bound(&[step], &constants(0.5), 2, 4, 0.1).unwrap();
        let (_, nu) = bound_constants(0.1, 2, 2, 4, 0.5).unwrap();
        assert_eq!(rows[0].lhs, 0.0);
        assert_eq!(rows[0].rhs, nu);
        assert!(rows[0].holds);
    }

    #[test]
    fn zero_staleness_drops_the_gradient_term() {
        let step = AuditStep {
            loss_before: 1.0,
            loss_after: 0.5,
            stale_grad_norms_sq: vec![3.0, 4.0, 5.0],
            a_effective: 3,
        };
        let rhs = bound_rhs(&step, &constants(2.0), 0, 3, 0.2).unwrap();
        assert_eq!(rhs, 10.0 * 0.2 * 3.0 * 2.0 / 3.0);
    }
}
