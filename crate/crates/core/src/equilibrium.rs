//! Coupled payload/map equilibrium: a damped fixed-point iteration.
//!
//! The payload's conduction loads depend on the stage temperatures; the
//! temperatures depend on the loads through the capacity map. The solve
//! iterates `Q = aggregate(payload, T)` and `T <- (1-a) T + a query(Q)`
//! until both the temperature and load updates fall below their relative
//! tolerances. The map is piecewise multilinear, so a derivative-free
//! damped iteration is the appropriate scheme. Once the load vector is
//! stationary within tolerance the temperature update is applied undamped:
//! with frozen loads the map query already is the equilibrium.

use crate::error::{Error, Result};
use crate::map::CapacityMap;
use crate::payload::{aggregate_loads, PayloadSpec};
use crate::shipped::Library;
use crate::state::{LoadVector, PlatformState};
use std::fmt;

/// Iteration controls.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumOptions {
    /// Damping factor in (0, 1]; 1 is undamped.
    pub damping: f64,
    /// Relative temperature tolerance.
    pub tol_temp_rel: f64,
    /// Relative load tolerance.
    pub tol_load_rel: f64,
    pub max_iterations: usize,
    /// Ambient (room) temperature for payload spans starting at AMBIENT (K).
    pub ambient_t_k: f64,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        EquilibriumOptions {
            damping: 0.5,
            tol_temp_rel: 1e-4,
            tol_load_rel: 1e-4,
            max_iterations: 100,
            ambient_t_k: 295.0,
        }
    }
}

impl EquilibriumOptions {
    fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::BadPayload(format!(
                "damping must be in (0, 1], got {}",
                self.damping
            )));
        }
        if !(self.tol_temp_rel > 0.0 && self.tol_load_rel > 0.0) {
            return Err(Error::BadPayload("tolerances must be positive".to_string()));
        }
        if self.max_iterations < 1 {
            return Err(Error::BadPayload("max_iterations must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// Converged (or not) equilibrium with its iteration history.
#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    /// Distributed heat load at the fixed point (W per stage).
    pub loads: LoadVector,
    /// Full interpolated platform state at those loads.
    pub state: PlatformState,
    pub iterations: usize,
    pub converged: bool,
    /// Per-iteration (max relative dT, max relative dQ).
    pub residual_history: Vec<(f64, f64)>,
}

impl fmt::Display for EquilibriumResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "equilibrium {} after {} iterations",
            if self.converged {
                "converged"
            } else {
                "NOT converged"
            },
            self.iterations
        )?;
        for (s, q) in self.loads.0.iter() {
            writeln!(
                f,
                "  {s}: load {:>12.6e} W   T = {:.6} K",
                q,
                self.state.temps[s]
            )?;
        }
        if let Some(p) = self.state.p_condenser {
            writeln!(f, "  p_condenser = {p:.3} Pa")?;
        }
        if let Some(p) = self.state.p_still {
            writeln!(f, "  p_still = {p:.4} Pa")?;
        }
        if let Some(fl) = self.state.flow {
            writeln!(f, "  flow = {fl:.6e} mol/s")?;
        }
        if let Some((dt, dq)) = self.residual_history.last() {
            writeln!(f, "  final residuals: dT {dt:.3e}, dQ {dq:.3e} (relative)")?;
        }
        Ok(())
    }
}

const TEMP_REL_FLOOR: f64 = 1e-12;
const LOAD_REL_FLOOR: f64 = 1e-9;

/// Solve for the equilibrium platform state under a payload.
///
/// Iterates from the map's unloaded base state. Errors if the loads leave
/// the mapped domain (the payload is incompatible with the measured range,
/// reported with the offending stage and iteration); exceeding the
/// iteration budget returns `converged = false` with the full history.
pub fn solve_equilibrium(
    m: &CapacityMap,
    p: &PayloadSpec,
    lib: &Library,
    opts: &EquilibriumOptions,
) -> Result<EquilibriumResult> {
    opts.validate()?;
    let base = m.query(&m.min_corner())?;
    let mut temps = base.state.temps;
    let mut q_prev: Option<LoadVector> = None;
    let mut history = Vec::new();

    for iteration in 1..=opts.max_iterations {
        let q = aggregate_loads(p, lib, &temps, opts.ambient_t_k)?;
        let result = m.query(&q).map_err(|e| match e {
            Error::OutOfDomain {
                stage,
                value,
                min,
                max,
            } => Error::EquilibriumDomainEscape {
                iteration,
                stage,
                value,
                min,
                max,
            },
            other => other,
        })?;

        let dq_rel = match &q_prev {
            Some(prev) => q.0.max_rel_diff(&prev.0, LOAD_REL_FLOOR),
            None => 0.0,
        };
        let target = result.state.temps;
        let next = if dq_rel < opts.tol_load_rel {
            target
        } else {
            temps * (1.0 - opts.damping) + target * opts.damping
        };
        let dt_rel = next.max_rel_diff(&temps, TEMP_REL_FLOOR);
        history.push((dt_rel, dq_rel));
        temps = next;
        q_prev = Some(q);

        if dt_rel < opts.tol_temp_rel && dq_rel < opts.tol_load_rel {
            let final_state = m.query(&q)?.state;
            return Ok(EquilibriumResult {
                loads: q,
                state: final_state,
                iterations: iteration,
                converged: true,
                residual_history: history,
            });
        }
    }

    let q = q_prev.expect("max_iterations >= 1");
    let state = m.query(&q)?.state;
    Ok(EquilibriumResult {
        loads: q,
        state,
        iterations: opts.max_iterations,
        converged: false,
        residual_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::build_map;
    use crate::shipped;
    use crate::stage::StageId;
    use crate::synthetic::{run_campaign, CampaignSpec, SyntheticParams};

    fn dense_map() -> CapacityMap {
        let ds = run_campaign(&SyntheticParams::default(), &CampaignSpec::dense_default()).unwrap();
        build_map(&ds).unwrap()
    }

    #[test]
    fn empty_payload_converges_to_base_in_one_iteration() {
        let m = dense_map();
        let lib = shipped::Library::shipped();
        let r = solve_equilibrium(
            &m,
            &PayloadSpec::empty("none"),
            lib,
            &EquilibriumOptions::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.loads, LoadVector::ZERO);
        let base = m.query(&LoadVector::ZERO).unwrap().state;
        assert_eq!(r.state, base);
    }

    #[test]
    fn constant_active_loads_converge_in_two_iterations() {
        let m = dense_map();
        let lib = shipped::Library::shipped();
        let mut p = PayloadSpec::empty("heaters");
        p.active_loads_w.insert(StageId::Stl, 0.02);
        p.active_loads_w.insert(StageId::Pt2, 1.0);
        let r = solve_equilibrium(&m, &p, lib, &EquilibriumOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 2, "took {} iterations", r.iterations);
        let direct = m.query(&r.loads).unwrap().state;
        assert_eq!(r.state, direct);
    }

    #[test]
    fn validation_payload_reaches_a_self_consistent_fixed_point() {
        let m = dense_map();
        let lib = shipped::Library::shipped();
        let p = shipped::validation_payload();
        let opts = EquilibriumOptions::default();
        let r = solve_equilibrium(&m, &p, lib, &opts).unwrap();
        assert!(r.converged, "history: {:?}", r.residual_history);
        assert!(r.iterations <= 50);

        // One explicit extra round trip moves loads and temperatures by
        // less than the tolerances.
        let q2 = aggregate_loads(&p, lib, &r.state.temps, opts.ambient_t_k).unwrap();
        assert!(q2.0.max_rel_diff(&r.loads.0, 1e-9) < opts.tol_load_rel);
        let t2 = m.query(&q2).unwrap().state.temps;
        assert!(t2.max_rel_diff(&r.state.temps, 1e-12) < 10.0 * opts.tol_temp_rel);
    }

    #[test]
    fn damping_choices_agree_at_the_fixed_point() {
        let m = dense_map();
        let lib = shipped::Library::shipped();
        let p = shipped::validation_payload();
        let half = solve_equilibrium(&m, &p, lib, &EquilibriumOptions::default()).unwrap();
        let full = solve_equilibrium(
            &m,
            &p,
            lib,
            &EquilibriumOptions {
                damping: 1.0,
                ..EquilibriumOptions::default()
            },
        )
        .unwrap();
        assert!(half.converged && full.converged);
        let tol = 10.0 * EquilibriumOptions::default().tol_temp_rel;
        assert!(half.state.temps.max_rel_diff(&full.state.temps, 1e-12) < tol);
    }

    #[test]
    fn identical_inputs_produce_identical_histories() {
        let m = dense_map();
        let lib = shipped::Library::shipped();
        let p = shipped::validation_payload();
        let a = solve_equilibrium(&m, &p, lib, &EquilibriumOptions::default()).unwrap();
        let b = solve_equilibrium(&m, &p, lib, &EquilibriumOptions::default()).unwrap();
        assert_eq!(a.residual_history, b.residual_history);
        assert_eq!(a.loads, b.loads);
    }

    #[test]
    fn oversized_payload_reports_domain_escape_with_stage() {
        let m = dense_map();
        let lib = shipped::Library::shipped();
        let mut p = PayloadSpec::empty("too-hot");
        p.active_loads_w.insert(StageId::Stl, 0.5); // axis tops out at 0.1 W
        match solve_equilibrium(&m, &p, lib, &EquilibriumOptions::default()) {
            Err(Error::EquilibriumDomainEscape {
                stage, iteration, ..
            }) => {
                assert_eq!(stage, StageId::Stl);
                assert_eq!(iteration, 1);
            }
            other => panic!("expected domain escape, got {other:?}"),
        }
    }
}
