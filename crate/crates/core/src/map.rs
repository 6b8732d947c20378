//! The platform capacity map: multilinear interpolation of platform
//! observables over the measured load grid, cooling-power solves and
//! map-to-map comparison.
//!
//! Queries never extrapolate. Out-of-domain loads, incomplete cells and
//! collapsed-axis mismatches are hard errors naming the offending stage.

use crate::dataset::{Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::grid::{to_grid, GridIndex};
use crate::stage::StageId;
use crate::state::{LoadVector, PlatformState, StageVec};
use serde::{Deserialize, Serialize};

/// Where a query landed relative to the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Containment {
    /// Exactly on a populated node; the stored record is returned bit-exact.
    NodeExact,
    /// Strictly inside a valid cell on every non-collapsed axis.
    Interior,
    /// On a face or edge of a valid cell.
    OnFace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub state: PlatformState,
    pub containment: Containment,
    /// Flat index of the cell used for interpolation; `None` for node-exact
    /// hits on grids without cells.
    pub cell: Option<usize>,
}

/// An immutable, queryable capacity map.
#[derive(Debug, Clone)]
pub struct CapacityMap {
    grid: GridIndex,
    /// Platform state per grid node, same flat indexing as the grid.
    node_states: Vec<Option<PlatformState>>,
    meta: DatasetMeta,
    has_pressures: bool,
    has_flow: bool,
}

/// Build a capacity map from a dataset. Sparse campaigns produce partially
/// valid grids; the map reports valid/invalid cell counts and refuses
/// queries through incomplete cells.
pub fn build_map(d: &Dataset) -> Result<CapacityMap> {
    if d.records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let grid = to_grid(d)?;
    let node_states: Vec<Option<PlatformState>> = (0..grid.node_count())
        .map(|node| grid.record_at(node).map(|rec| d.records[rec].state))
        .collect();
    let has_pressures = d.records[0].state.p_condenser.is_some()
        && d.records[0].state.p_still.is_some();
    let has_flow = d.records[0].state.flow.is_some();
    Ok(CapacityMap {
        grid,
        node_states,
        meta: d.meta.clone(),
        has_pressures,
        has_flow,
    })
}

impl CapacityMap {
    pub fn grid(&self) -> &GridIndex {
        &self.grid
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn has_pressures(&self) -> bool {
        self.has_pressures
    }

    pub fn has_flow(&self) -> bool {
        self.has_flow
    }

    pub fn node_state(&self, node: usize) -> Option<&PlatformState> {
        self.node_states.get(node).and_then(|s| s.as_ref())
    }

    /// The load vector at every populated node, with its stored state.
    pub fn populated_nodes(&self) -> Vec<(LoadVector, &PlatformState)> {
        let mut out = Vec::new();
        self.visit_nodes(|_, load, state| out.push((load, state)));
        out
    }

    fn visit_nodes<'a>(&'a self, mut f: impl FnMut(usize, LoadVector, &'a PlatformState)) {
        let lens: Vec<usize> = StageId::ALL.iter().map(|&s| self.grid.axis(s).len()).collect();
        let mut idx = [0usize; StageId::COUNT];
        loop {
            let flat = self.grid.node_index(&idx);
            if let Some(state) = self.node_states[flat].as_ref() {
                f(flat, self.grid.node_load(&idx), state);
            }
            let mut j = StageId::COUNT;
            loop {
                if j == 0 {
                    return;
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] < lens[j] {
                    break;
                }
                idx[j] = 0;
                if j == 0 {
                    return;
                }
            }
        }
    }

    /// Range of a state field over populated nodes, `None` if absent.
    pub fn field_range(&self, field: &str) -> Option<(f64, f64)> {
        let mut range: Option<(f64, f64)> = None;
        self.visit_nodes(|_, _, state| {
            if let Some(v) = state.field(field) {
                range = Some(match range {
                    None => (v, v),
                    Some((lo, hi)) => (lo.min(v), hi.max(v)),
                });
            }
        });
        range
    }

    /// The load vector at the minimum corner of every axis (the campaign's
    /// unloaded scenario).
    pub fn min_corner(&self) -> LoadVector {
        LoadVector::from_fn(|s| self.grid.axis(s)[0])
    }

    /// Interpolate the platform state at a loading scenario.
    pub fn query(&self, q: &LoadVector) -> Result<QueryResult> {
        let snap = LoadVector::SNAP_TOLERANCE_W;

        // Bounds and collapsed-axis checks, naming the offending stage.
        for s in StageId::ALL {
            let axis = self.grid.axis(s);
            let v = q.get(s);
            if axis.len() == 1 {
                if (v - axis[0]).abs() > snap {
                    return Err(Error::CollapsedAxisMismatch {
                        stage: s,
                        axis_value: axis[0],
                        value: v,
                    });
                }
            } else {
                let (min, max) = (axis[0], *axis.last().unwrap());
                if v < min - snap || v > max + snap {
                    return Err(Error::OutOfDomain {
                        stage: s,
                        value: v,
                        min,
                        max,
                    });
                }
            }
        }

        // Node-exact fast path: every coordinate on an axis value.
        let mut node_idx = [0usize; StageId::COUNT];
        let mut all_on_nodes = true;
        for s in StageId::ALL {
            match self.grid.snap_axis_value(s, q.get(s)) {
                Some(i) => node_idx[s.index()] = i,
                None => {
                    all_on_nodes = false;
                    break;
                }
            }
        }
        if all_on_nodes {
            let flat = self.grid.node_index(&node_idx);
            if let Some(state) = self.node_states[flat] {
                return Ok(QueryResult {
                    state,
                    containment: Containment::NodeExact,
                    cell: None,
                });
            }
        }

        if self.grid.dimensionality() == 0 {
            // Single-node grid and the node was not hit exactly.
            return Err(Error::InvalidCell { cell: 0 });
        }

        // Per-free-axis location: base (cell, fraction) plus face-sharing
        // alternatives when the coordinate sits on an interior axis value.
        let free = self.grid.free_axes().to_vec();
        let mut base_coords = Vec::with_capacity(free.len());
        let mut fracs = Vec::with_capacity(free.len());
        let mut alternatives: Vec<Vec<(usize, f64)>> = Vec::with_capacity(free.len());
        for &axis_no in &free {
            let stage = StageId::from_index(axis_no).unwrap();
            let axis = self.grid.axis(stage);
            let v = q.get(stage).clamp(axis[0], *axis.last().unwrap());
            let mut cell = axis.partition_point(|x| *x <= v);
            cell = cell.saturating_sub(1).min(axis.len() - 2);
            let width = axis[cell + 1] - axis[cell];
            let frac = ((v - axis[cell]) / width).clamp(0.0, 1.0);
            let mut cands = vec![(cell, frac)];
            if (v - axis[cell]).abs() <= snap && cell > 0 {
                cands.push((cell - 1, 1.0));
            }
            if (v - axis[cell + 1]).abs() <= snap && cell + 1 < axis.len() - 1 {
                cands.push((cell + 1, 0.0));
            }
            base_coords.push(cell);
            fracs.push(frac);
            alternatives.push(cands);
        }

        // First valid candidate cell in deterministic order wins; faces
        // shared by several valid cells interpolate identically on the face.
        let chosen = self.first_valid_cell(&alternatives);
        let (cell_coords, cell_fracs, cell_id) = match chosen {
            Some(c) => c,
            None => {
                let base_cell = self.grid.cell_index(&base_coords);
                return Err(Error::InvalidCell { cell: base_cell });
            }
        };

        let state = self.interpolate_cell(&cell_coords, &cell_fracs);
        let on_face = cell_fracs.iter().any(|f| *f <= 0.0 || *f >= 1.0);
        Ok(QueryResult {
            state,
            containment: if on_face {
                Containment::OnFace
            } else {
                Containment::Interior
            },
            cell: Some(cell_id),
        })
    }

    fn first_valid_cell(
        &self,
        alternatives: &[Vec<(usize, f64)>],
    ) -> Option<(Vec<usize>, Vec<f64>, usize)> {
        let k = alternatives.len();
        let mut pick = vec![0usize; k];
        loop {
            let mut coords = Vec::with_capacity(k);
            let mut fracs = Vec::with_capacity(k);
            for (j, &p) in pick.iter().enumerate() {
                let (c, f) = alternatives[j][p];
                coords.push(c);
                fracs.push(f);
            }
            let cell_id = self.grid.cell_index(&coords);
            if self.grid.cell_is_valid(cell_id) {
                return Some((coords, fracs, cell_id));
            }
            let mut j = 0;
            loop {
                if j == k {
                    return None;
                }
                pick[j] += 1;
                if pick[j] < alternatives[j].len() {
                    break;
                }
                pick[j] = 0;
                j += 1;
            }
        }
    }

    /// Multilinear interpolation over a valid cell's corners.
    fn interpolate_cell(&self, cell_coords: &[usize], fracs: &[f64]) -> PlatformState {
        let k = cell_coords.len();
        let corners = self.grid.cell_corner_nodes(cell_coords);
        let mut temps = StageVec::default();
        let mut p_cond = 0.0;
        let mut p_still = 0.0;
        let mut flow = 0.0;
        for (mask, &node) in corners.iter().enumerate() {
            let mut weight = 1.0;
            for (j, frac) in fracs.iter().enumerate().take(k) {
                weight *= if (mask >> j) & 1 == 1 { *frac } else { 1.0 - *frac };
            }
            if weight == 0.0 {
                continue;
            }
            let state = self.node_states[node].expect("valid cell corners are populated");
            for s in StageId::ALL {
                temps[s] += weight * state.temps[s];
            }
            if self.has_pressures {
                p_cond += weight * state.p_condenser.unwrap_or(0.0);
                p_still += weight * state.p_still.unwrap_or(0.0);
            }
            if self.has_flow {
                flow += weight * state.flow.unwrap_or(0.0);
            }
        }
        PlatformState {
            temps,
            p_condenser: self.has_pressures.then_some(p_cond),
            p_still: self.has_pressures.then_some(p_still),
            flow: self.has_flow.then_some(flow),
        }
    }

    /// Solve for the stage power at which the interpolated stage temperature
    /// equals `target_t` with the remaining loads fixed.
    ///
    /// The 1-D profile along the axis must be monotone and bracket the
    /// target. Bisection runs to 1 mW absolute on the pulse-tube stages and
    /// 1 uW on the sub-kelvin stages.
    pub fn cooling_power_at(
        &self,
        stage: StageId,
        target_t: f64,
        fixed: &LoadVector,
    ) -> Result<f64> {
        let axis = self.grid.axis(stage).to_vec();
        if axis.len() < 2 {
            return Err(Error::NotBracketed {
                stage,
                target: target_t,
            });
        }
        let eval = |p: f64| -> Result<f64> {
            Ok(self.query(&fixed.with(stage, p))?.state.temps[stage])
        };
        let node_temps: Vec<f64> = axis.iter().map(|&p| eval(p)).collect::<Result<_>>()?;

        let ascending = node_temps.last().unwrap() >= node_temps.first().unwrap();
        let monotone = node_temps.windows(2).all(|w| {
            if ascending {
                w[1] >= w[0]
            } else {
                w[1] <= w[0]
            }
        });
        if !monotone {
            return Err(Error::NonMonotoneProfile { stage });
        }

        // Exact node hits first.
        if let Some(i) = node_temps.iter().position(|t| *t == target_t) {
            return Ok(axis[i]);
        }

        let (t_lo, t_hi) = if ascending {
            (node_temps[0], *node_temps.last().unwrap())
        } else {
            (*node_temps.last().unwrap(), node_temps[0])
        };
        if target_t < t_lo || target_t > t_hi {
            return Err(Error::NotBracketed {
                stage,
                target: target_t,
            });
        }

        // Locate the bracketing segment on node values, then bisect inside.
        let mut seg = 0;
        for i in 0..axis.len() - 1 {
            let (a, b) = (node_temps[i], node_temps[i + 1]);
            if (a.min(b)..=a.max(b)).contains(&target_t) {
                seg = i;
                break;
            }
        }
        let tol = match stage {
            StageId::Pt1 | StageId::Pt2 => 1e-3,
            _ => 1e-6,
        };
        let (mut lo, mut hi) = (axis[seg], axis[seg + 1]);
        let rising = node_temps[seg + 1] >= node_temps[seg];
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            let t = eval(mid)?;
            if (t < target_t) == rising {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Difference of two maps at one shared node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDiff {
    pub load: LoadVector,
    /// Temperature differences b - a (K).
    pub dt_k: StageVec,
    pub dp_condenser_pa: Option<f64>,
    pub dp_still_pa: Option<f64>,
    pub dflow_mol_s: Option<f64>,
}

/// Offset report between two maps sharing grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MapDiff {
    pub nodes: Vec<NodeDiff>,
    /// Mean percent temperature change per stage, relative to map `a`.
    pub mean_pct: StageVec,
    pub max_abs_pct: StageVec,
}

/// Per-node differences `b - a` over all shared nodes, with per-stage
/// aggregate percent changes. Used both for cooldown-to-cooldown consistency
/// checks and for attributing stage offsets to an installed payload.
pub fn diff_maps(a: &CapacityMap, b: &CapacityMap) -> Result<MapDiff> {
    let mut nodes = Vec::new();
    let mut pct_sum = StageVec::default();
    let mut pct_max = StageVec::default();

    for (load, state_a) in a.populated_nodes() {
        // Find the same node in b by snapping each coordinate.
        let mut idx = [0usize; StageId::COUNT];
        let mut found = true;
        for s in StageId::ALL {
            match b.grid.snap_axis_value(s, load.get(s)) {
                Some(i) => idx[s.index()] = i,
                None => {
                    found = false;
                    break;
                }
            }
        }
        if !found {
            continue;
        }
        let Some(state_b) = b.node_states[b.grid.node_index(&idx)] else {
            continue;
        };
        let dt = state_b.temps - state_a.temps;
        for s in StageId::ALL {
            let pct = 100.0 * dt[s] / state_a.temps[s];
            pct_sum[s] += pct;
            if pct.abs() > pct_max[s].abs() {
                pct_max[s] = pct;
            }
        }
        let opt_diff = |x: Option<f64>, y: Option<f64>| match (x, y) {
            (Some(x), Some(y)) => Some(y - x),
            _ => None,
        };
        nodes.push(NodeDiff {
            load,
            dt_k: dt,
            dp_condenser_pa: opt_diff(state_a.p_condenser, state_b.p_condenser),
            dp_still_pa: opt_diff(state_a.p_still, state_b.p_still),
            dflow_mol_s: opt_diff(state_a.flow, state_b.flow),
        });
    }

    if nodes.is_empty() {
        return Err(Error::NoSharedNodes);
    }
    let n = nodes.len() as f64;
    Ok(MapDiff {
        mean_pct: pct_sum.map(|_, v| v / n),
        max_abs_pct: pct_max,
        nodes,
    })
}

impl MapDiff {
    /// CSV export: load coordinates plus per-stage temperature offsets.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "q_pt1_W,q_pt2_W,q_stl_W,q_cld_W,q_mxc_W,\
             dt_pt1_K,dt_pt2_K,dt_stl_K,dt_cld_K,dt_mxc_K,dp_cond_Pa,dp_still_Pa,dflow_mol_s\n",
        );
        for nd in &self.nodes {
            for s in StageId::ALL {
                out.push_str(&format!("{:e},", nd.load.get(s)));
            }
            for s in StageId::ALL {
                out.push_str(&format!("{:e},", nd.dt_k[s]));
            }
            let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{}\n",
                opt(nd.dp_condenser_pa),
                opt(nd.dp_still_pa),
                opt(nd.dflow_mol_s)
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::MeasurementRecord;
    use crate::synthetic::{run_campaign, CampaignSpec, SyntheticParams};

    fn dense_map() -> CapacityMap {
        let ds = run_campaign(&SyntheticParams::default(), &CampaignSpec::dense_default()).unwrap();
        build_map(&ds).unwrap()
    }

    fn small_2d_map() -> CapacityMap {
        // 2x2 PT1 x PT2 grid with simple, hand-checkable values.
        let mut records = Vec::new();
        for &(p1, p2, t1) in &[
            (0.0, 0.0, 30.0),
            (0.0, 1.0, 32.0),
            (2.0, 0.0, 40.0),
            (2.0, 1.0, 46.0),
        ] {
            records.push(MeasurementRecord {
                applied: LoadVector::from_fn(|s| match s {
                    StageId::Pt1 => p1,
                    StageId::Pt2 => p2,
                    _ => 0.0,
                }),
                state: PlatformState::from_temps(StageVec([t1, 3.3, 0.73, 0.085, 0.0073])),
                timestamp: None,
                averaging_window: None,
                flags: vec![],
            });
        }
        build_map(&Dataset {
            records,
            meta: DatasetMeta::default(),
        })
        .unwrap()
    }

    #[test]
    fn node_query_returns_stored_state_exactly() {
        let m = small_2d_map();
        let q = LoadVector::from_fn(|s| if s == StageId::Pt1 { 2.0 } else { 0.0 });
        let r = m.query(&q).unwrap();
        assert_eq!(r.containment, Containment::NodeExact);
        assert_eq!(r.state.temps[StageId::Pt1], 40.0);
    }

    #[test]
    fn cell_midpoint_is_mean_of_corners() {
        let m = small_2d_map();
        let q = LoadVector::from_fn(|s| match s {
            StageId::Pt1 => 1.0,
            StageId::Pt2 => 0.5,
            _ => 0.0,
        });
        let r = m.query(&q).unwrap();
        assert_eq!(r.containment, Containment::Interior);
        let expected = (30.0 + 32.0 + 40.0 + 46.0) / 4.0;
        assert!((r.state.temps[StageId::Pt1] - expected).abs() < 1e-12);
    }

    #[test]
    fn out_of_domain_names_the_stage() {
        let m = small_2d_map();
        let q = LoadVector::from_fn(|s| if s == StageId::Pt1 { 3.0 } else { 0.0 });
        match m.query(&q) {
            Err(Error::OutOfDomain { stage, .. }) => assert_eq!(stage, StageId::Pt1),
            other => panic!("expected out-of-domain, got {other:?}"),
        }
    }

    #[test]
    fn collapsed_axis_mismatch_is_rejected() {
        let m = small_2d_map();
        let q = LoadVector::from_fn(|s| if s == StageId::Stl { 0.01 } else { 0.0 });
        match m.query(&q) {
            Err(Error::CollapsedAxisMismatch { stage, .. }) => assert_eq!(stage, StageId::Stl),
            other => panic!("expected collapsed-axis mismatch, got {other:?}"),
        }
    }

    #[test]
    fn missing_node_makes_cell_queries_fail() {
        // Sparse union: interior interpolation through unmeasured corners
        // must refuse rather than invent values.
        let ds = run_campaign(&SyntheticParams::default(), &CampaignSpec::sparse_survey()).unwrap();
        let m = build_map(&ds).unwrap();
        assert!(m.grid().valid_cell_count() == 0);
        let q = LoadVector::from_fn(|s| match s {
            StageId::Pt1 => 5.0,
            StageId::Pt2 => 0.7,
            _ => 0.0,
        });
        assert!(matches!(m.query(&q), Err(Error::InvalidCell { .. })));
        // Node-exact lookups still work.
        let node = LoadVector::from_fn(|s| if s == StageId::Pt1 { 10.0 } else { 0.0 });
        assert_eq!(
            m.query(&node).unwrap().containment,
            Containment::NodeExact
        );
    }

    #[test]
    fn cooling_power_matches_calibration_points() {
        let m = dense_map();
        let zero = LoadVector::ZERO;
        let p_pt2 = m.cooling_power_at(StageId::Pt2, 4.4, &zero).unwrap();
        assert!((p_pt2 - 2.78).abs() < 1e-3, "PT2 power {p_pt2}");
        let p_pt1 = m.cooling_power_at(StageId::Pt1, 36.0, &zero).unwrap();
        assert!((p_pt1 - 4.9).abs() < 1e-3, "PT1 power {p_pt1}");
        let p_cld = m.cooling_power_at(StageId::Cld, 0.2, &zero).unwrap();
        assert!((p_cld - 3.7e-3).abs() < 1e-6, "CLD power {p_cld}");
    }

    #[test]
    fn cooling_power_consistent_with_query() {
        let m = dense_map();
        let target = 4.0;
        let p = m.cooling_power_at(StageId::Pt2, target, &LoadVector::ZERO).unwrap();
        let t = m.query(&LoadVector::ZERO.with(StageId::Pt2, p)).unwrap();
        assert!((t.state.temps[StageId::Pt2] - target).abs() < 5e-3);
    }

    #[test]
    fn cooling_power_at_node_temperature_returns_node_power() {
        let m = small_2d_map();
        let p = m
            .cooling_power_at(StageId::Pt1, 40.0, &LoadVector::ZERO)
            .unwrap();
        assert_eq!(p, 2.0);
    }

    #[test]
    fn cooling_power_requires_bracketing_and_monotonicity() {
        let m = small_2d_map();
        // Target above every profile value.
        assert!(matches!(
            m.cooling_power_at(StageId::Pt1, 100.0, &LoadVector::ZERO),
            Err(Error::NotBracketed { .. })
        ));
        // A dip in the profile is refused rather than solved through.
        let mut records = Vec::new();
        for &(p1, t1) in &[(0.0, 30.0), (1.0, 29.0), (2.0, 31.0)] {
            records.push(MeasurementRecord {
                applied: LoadVector::from_fn(|s| if s == StageId::Pt1 { p1 } else { 0.0 }),
                state: PlatformState::from_temps(StageVec([t1, 3.3, 0.73, 0.085, 0.0073])),
                timestamp: None,
                averaging_window: None,
                flags: vec![],
            });
        }
        let dipped = build_map(&Dataset {
            records,
            meta: DatasetMeta::default(),
        })
        .unwrap();
        assert!(matches!(
            dipped.cooling_power_at(StageId::Pt1, 30.5, &LoadVector::ZERO),
            Err(Error::NonMonotoneProfile { stage: StageId::Pt1 })
        ));
    }

    #[test]
    fn diff_of_map_with_itself_is_zero() {
        let m = small_2d_map();
        let d = diff_maps(&m, &m).unwrap();
        assert_eq!(d.nodes.len(), 4);
        for nd in &d.nodes {
            assert_eq!(nd.dt_k, StageVec::default());
        }
        assert_eq!(d.mean_pct, StageVec::default());
    }

    #[test]
    fn diff_detects_injected_mxc_offset() {
        let params = SyntheticParams::default();
        let spec = CampaignSpec::sparse_survey();
        let base = run_campaign(&params, &spec).unwrap();
        let mut warmed = base.clone();
        for r in &mut warmed.records {
            r.state.temps[StageId::Mxc] *= 1.02;
        }
        let d = diff_maps(&build_map(&base).unwrap(), &build_map(&warmed).unwrap()).unwrap();
        assert!((d.mean_pct[StageId::Mxc] - 2.0).abs() < 1e-9);
        assert!(d.mean_pct[StageId::Pt1].abs() < 1e-12);
    }
}
