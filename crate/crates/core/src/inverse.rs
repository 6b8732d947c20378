//! Inference of an applied load vector from observed stage temperatures.
//!
//! The capacity map is piecewise multilinear, so gradients are useless at
//! cell faces. The solver minimizes the weighted squared temperature
//! mismatch with a bounded multi-start compass (pattern) search: starts sit
//! at the centers of valid cells picked by a Halton sequence, each start
//! polishes down to a tiny step, and distinct near-optimal minimizers are
//! reported as alternatives so non-uniqueness is visible to the caller.

use crate::error::{Error, Result};
use crate::map::CapacityMap;
use crate::stage::StageId;
use crate::state::{LoadVector, StageVec};
use std::collections::BTreeMap;

/// Options for [`infer_load`].
#[derive(Debug, Clone)]
pub struct InferOptions {
    /// Residual weights per stage. `None` uses 1/T_observed on observed
    /// stages and 0 elsewhere, so milli-kelvin stages are not drowned out
    /// by the kelvin-scale pulse-tube residuals.
    pub weights: Option<StageVec>,
    /// Additional observed state fields as (field name, value, weight),
    /// e.g. `("flow", 6.1e-4, 1e6)`. Circulation observables carry weight
    /// zero by default, i.e. they do not participate unless listed here.
    pub extra_observed: Vec<(String, f64, f64)>,
    /// Number of multi-start searches (default 8).
    pub starts: usize,
    /// Evaluation budget per start.
    pub max_evals_per_start: usize,
    /// Stop when every step falls below this fraction of its axis span.
    pub step_tolerance_rel: f64,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions {
            weights: None,
            extra_observed: Vec::new(),
            starts: 8,
            max_evals_per_start: 40_000,
            step_tolerance_rel: 1e-9,
        }
    }
}

/// Result of an inverse solve.
#[derive(Debug, Clone)]
pub struct Inference {
    pub q: LoadVector,
    /// Weighted RMS temperature residual at `q` (K).
    pub residual_k: f64,
    /// Distinct local minimizers whose residual is within 2x of the best.
    pub alternatives: Vec<(LoadVector, f64)>,
    /// True when alternatives exist: the observation does not pin down a
    /// unique loading scenario.
    pub non_unique: bool,
    pub evaluations: usize,
}

struct Objective<'a> {
    map: &'a CapacityMap,
    observed: Vec<(StageId, f64)>,
    extra: Vec<(String, f64, f64)>,
    weights: StageVec,
    weight_sum: f64,
    free_axes: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    collapsed: LoadVector,
    evals: usize,
}

impl<'a> Objective<'a> {
    fn load_from(&self, x: &[f64]) -> LoadVector {
        let mut q = self.collapsed;
        for (j, &axis) in self.free_axes.iter().enumerate() {
            q = q.with(StageId::from_index(axis).unwrap(), x[j]);
        }
        q
    }

    /// Weighted sum of squared residuals; +inf through invalid cells.
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let q = self.load_from(x);
        match self.map.query(&q) {
            Ok(r) => {
                let mut sum = 0.0;
                for &(s, t_obs) in &self.observed {
                    let dt = r.state.temps[s] - t_obs;
                    sum += self.weights[s] * dt * dt;
                }
                for (field, obs, w) in &self.extra {
                    if let Some(v) = r.state.field(field) {
                        sum += w * (v - obs) * (v - obs);
                    }
                }
                sum
            }
            Err(_) => f64::INFINITY,
        }
    }

    fn rms(&self, sse: f64) -> f64 {
        if self.weight_sum > 0.0 {
            (sse / self.weight_sum).sqrt()
        } else {
            f64::NAN
        }
    }
}

/// Halton low-discrepancy sequence value, base `b`, index `i` (1-based).
fn halton(mut i: usize, b: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

const HALTON_BASES: [usize; 5] = [2, 3, 5, 7, 11];

/// Compass search with greedy polling and step halving, clamped to bounds.
fn compass_search(
    obj: &mut Objective<'_>,
    start: &[f64],
    initial_step_rel: f64,
    tol_rel: f64,
    budget: usize,
) -> (Vec<f64>, f64) {
    let k = start.len();
    let span: Vec<f64> = (0..k).map(|j| obj.hi[j] - obj.lo[j]).collect();
    let mut steps: Vec<f64> = span.iter().map(|s| s * initial_step_rel).collect();
    let mut x = start.to_vec();
    let mut fx = obj.eval(&x);
    let budget_start = obj.evals;

    loop {
        let mut improved = false;
        for j in 0..k {
            for dir in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[j] = (cand[j] + dir * steps[j]).clamp(obj.lo[j], obj.hi[j]);
                if cand[j] == x[j] {
                    continue;
                }
                let fc = obj.eval(&cand);
                if fc < fx {
                    x = cand;
                    fx = fc;
                    improved = true;
                }
            }
        }
        if !improved {
            for s in steps.iter_mut() {
                *s *= 0.5;
            }
        }
        let done = steps
            .iter()
            .zip(&span)
            .all(|(s, sp)| *s < tol_rel * sp.max(f64::MIN_POSITIVE));
        if done || obj.evals - budget_start > budget {
            return (x, fx);
        }
    }
}

/// Infer the loading scenario that best explains the observed temperatures.
///
/// `observed` maps stages to measured temperatures (K); at least one stage
/// is required and each value must lie within the map's value range for
/// that stage. Returns the best minimizer, its weighted RMS residual, and
/// any distinct alternatives within 2x of the best residual.
pub fn infer_load(
    m: &CapacityMap,
    observed: &BTreeMap<StageId, f64>,
    opts: &InferOptions,
) -> Result<Inference> {
    if observed.is_empty() {
        return Err(Error::Inverse("no observed temperatures given".to_string()));
    }
    for (&s, &t) in observed {
        let field = format!("t_{}", s.key());
        let (lo, hi) = m
            .field_range(&field)
            .ok_or_else(|| Error::Inverse(format!("map has no {s} temperatures")))?;
        if t < lo || t > hi {
            return Err(Error::Inverse(format!(
                "observed {s} temperature {t} K outside the map's value range [{lo}, {hi}] K"
            )));
        }
    }

    let weights = match &opts.weights {
        Some(w) => *w,
        None => StageVec::from_fn(|s| observed.get(&s).map(|t| 1.0 / t).unwrap_or(0.0)),
    };
    let weight_sum: f64 = observed.iter().map(|(&s, _)| weights[s]).sum();

    let grid = m.grid();
    let free_axes = grid.free_axes().to_vec();
    if free_axes.is_empty() {
        // Fully collapsed map: the only candidate is the single node.
        let q = m.min_corner();
        let r = m.query(&q)?;
        let mut sse = 0.0;
        for (&s, &t) in observed {
            let dt = r.state.temps[s] - t;
            sse += weights[s] * dt * dt;
        }
        return Ok(Inference {
            q,
            residual_k: (sse / weight_sum.max(f64::MIN_POSITIVE)).sqrt(),
            alternatives: vec![],
            non_unique: false,
            evaluations: 1,
        });
    }

    let lo: Vec<f64> = free_axes
        .iter()
        .map(|&a| grid.axis(StageId::from_index(a).unwrap())[0])
        .collect();
    let hi: Vec<f64> = free_axes
        .iter()
        .map(|&a| *grid.axis(StageId::from_index(a).unwrap()).last().unwrap())
        .collect();

    let mut obj = Objective {
        map: m,
        observed: observed.iter().map(|(&s, &t)| (s, t)).collect(),
        extra: opts.extra_observed.clone(),
        weights,
        weight_sum,
        free_axes: free_axes.clone(),
        lo: lo.clone(),
        hi: hi.clone(),
        collapsed: m.min_corner(),
        evals: 0,
    };

    // Start points: centers of valid cells picked by a Halton sequence.
    let k = free_axes.len();
    let mut starts: Vec<Vec<f64>> = Vec::new();
    let mut used_cells: Vec<usize> = Vec::new();
    let mut halton_idx = 1usize;
    let max_attempts = opts.starts * 256;
    let mut attempts = 0;
    while starts.len() < opts.starts && attempts < max_attempts {
        attempts += 1;
        let point: Vec<f64> = (0..k)
            .map(|j| lo[j] + (hi[j] - lo[j]) * halton(halton_idx, HALTON_BASES[j % 5]))
            .collect();
        halton_idx += 1;
        // Locate the containing cell and take its center.
        let mut coords = Vec::with_capacity(k);
        let mut center = Vec::with_capacity(k);
        for (j, &axis_no) in free_axes.iter().enumerate() {
            let axis = grid.axis(StageId::from_index(axis_no).unwrap());
            let mut c = axis.partition_point(|x| *x <= point[j]);
            c = c.saturating_sub(1).min(axis.len() - 2);
            coords.push(c);
            center.push(0.5 * (axis[c] + axis[c + 1]));
        }
        let cell = grid.cell_index(&coords);
        if grid.cell_is_valid(cell) && !used_cells.contains(&cell) {
            used_cells.push(cell);
            starts.push(center);
        }
    }
    if starts.is_empty() {
        return Err(Error::Inverse(
            "no valid starting cell found on the map".to_string(),
        ));
    }

    // Run every start, then polish the best with a fresh local search.
    let mut minimizers: Vec<(Vec<f64>, f64)> = Vec::new();
    for start in &starts {
        let (x, fx) = compass_search(
            &mut obj,
            start,
            0.25,
            opts.step_tolerance_rel,
            opts.max_evals_per_start,
        );
        if fx.is_finite() {
            minimizers.push((x, fx));
        }
    }
    if minimizers.is_empty() {
        return Err(Error::Inverse(
            "all starts failed to reach a finite residual".to_string(),
        ));
    }

    // Deterministic best: lowest residual, then lexicographically smallest q.
    minimizers.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
    });
    let (best_x, _) = minimizers[0].clone();
    let (best_x, best_f) = compass_search(
        &mut obj,
        &best_x,
        0.02,
        opts.step_tolerance_rel,
        opts.max_evals_per_start,
    );

    // Cluster alternatives: distinct location, residual within 2x of best.
    let span: Vec<f64> = (0..k).map(|j| hi[j] - lo[j]).collect();
    let distinct = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .zip(&span)
            .any(|((x, y), sp)| (x - y).abs() > 1e-3 * sp)
    };
    let best_rms = obj.rms(best_f);
    let mut alternatives: Vec<(LoadVector, f64)> = Vec::new();
    for (x, fx) in minimizers.iter().skip(1) {
        let rms = obj.rms(*fx);
        if rms <= 2.0 * best_rms.max(1e-15)
            && distinct(x, &best_x)
            && !alternatives
                .iter()
                .any(|(q, _)| !distinct(&free_values(q, &free_axes), x))
        {
            alternatives.push((obj.load_from(x), rms));
        }
    }

    let q = obj.load_from(&best_x);
    Ok(Inference {
        q,
        residual_k: best_rms,
        non_unique: !alternatives.is_empty(),
        alternatives,
        evaluations: obj.evals,
    })
}

fn free_values(q: &LoadVector, free_axes: &[usize]) -> Vec<f64> {
    free_axes
        .iter()
        .map(|&a| q.get(StageId::from_index(a).unwrap()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::build_map;
    use crate::synthetic::{run_campaign, CampaignSpec, SyntheticParams};

    fn dense_map() -> CapacityMap {
        let ds = run_campaign(&SyntheticParams::default(), &CampaignSpec::dense_default()).unwrap();
        build_map(&ds).unwrap()
    }

    fn observe(m: &CapacityMap, q: &LoadVector) -> BTreeMap<StageId, f64> {
        let r = m.query(q).unwrap();
        StageId::ALL
            .iter()
            .map(|&s| (s, r.state.temps[s]))
            .collect()
    }

    #[test]
    fn zero_load_observation_infers_zero_load() {
        let m = dense_map();
        let obs = observe(&m, &LoadVector::ZERO);
        let inf = infer_load(&m, &obs, &InferOptions::default()).unwrap();
        for s in StageId::ALL {
            assert!(
                inf.q.get(s).abs() <= 1e-6,
                "{s} inferred {} W, expected 0",
                inf.q.get(s)
            );
        }
        assert!(inf.residual_k < 1e-7, "residual {}", inf.residual_k);
    }

    #[test]
    fn interior_round_trip_recovers_loads_within_one_percent() {
        let m = dense_map();
        let q_true = LoadVector(StageVec([3.1, 1.9, 0.031, 0.0051, 2.6e-5]));
        let obs = observe(&m, &q_true);
        let inf = infer_load(&m, &obs, &InferOptions::default()).unwrap();
        for s in StageId::ALL {
            let err = (inf.q.get(s) - q_true.get(s)).abs();
            assert!(
                err <= 0.01 * q_true.get(s),
                "{s}: inferred {} vs true {}",
                inf.q.get(s),
                q_true.get(s)
            );
        }
    }

    #[test]
    fn circulation_observables_can_join_the_residual() {
        let m = dense_map();
        let q_true = LoadVector(StageVec([3.1, 1.9, 0.031, 0.0051, 2.6e-5]));
        let r = m.query(&q_true).unwrap();
        let obs = observe(&m, &q_true);
        let opts = InferOptions {
            extra_observed: vec![("flow".to_string(), r.state.flow.unwrap(), 1e4)],
            ..InferOptions::default()
        };
        let inf = infer_load(&m, &obs, &opts).unwrap();
        for s in StageId::ALL {
            assert!((inf.q.get(s) - q_true.get(s)).abs() <= 0.01 * q_true.get(s));
        }
    }

    #[test]
    fn observed_temperature_outside_map_range_is_rejected() {
        let m = dense_map();
        let mut obs = observe(&m, &LoadVector::ZERO);
        obs.insert(StageId::Pt1, 500.0);
        assert!(matches!(
            infer_load(&m, &obs, &InferOptions::default()),
            Err(Error::Inverse(_))
        ));
    }

    #[test]
    fn no_observations_is_an_error() {
        let m = dense_map();
        assert!(infer_load(&m, &BTreeMap::new(), &InferOptions::default()).is_err());
    }
}
