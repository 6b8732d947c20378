//! Operational limits and per-stage thermal headroom.
//!
//! Limits are thresholds on map observables: stage temperatures and
//! circulation line pressures. Pump capacity shows up in the dataset as
//! line pressure, so pressure limits stand in for pump headroom; no default
//! pressure thresholds are set because they are platform-specific.

use crate::error::{Error, Result};
use crate::map::CapacityMap;
use crate::stage::StageId;
use crate::state::{LoadVector, PlatformState};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Operational limits. Absent entries are unconstrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationalLimits {
    /// Maximum temperature per stage (K).
    #[serde(default)]
    pub max_temp_k: BTreeMap<StageId, f64>,
    /// Maximum still line pressure (Pa).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_p_still_pa: Option<f64>,
    /// Maximum condenser line pressure (Pa).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_p_condenser_pa: Option<f64>,
}

impl Default for OperationalLimits {
    /// Mixing chamber below 30 mK (thermal-photon requirement) and still
    /// below 1.1 K (circulation pressure proxy). Pressure limits unset.
    fn default() -> Self {
        let mut max_temp_k = BTreeMap::new();
        max_temp_k.insert(StageId::Mxc, 0.030);
        max_temp_k.insert(StageId::Stl, 1.1);
        OperationalLimits {
            max_temp_k,
            max_p_still_pa: None,
            max_p_condenser_pa: None,
        }
    }
}

impl OperationalLimits {
    /// No limits at all.
    pub fn unset() -> Self {
        OperationalLimits {
            max_temp_k: BTreeMap::new(),
            max_p_still_pa: None,
            max_p_condenser_pa: None,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.max_temp_k.values().all(|v| *v > 0.0)
            && self.max_p_still_pa.is_none_or(|v| v > 0.0)
            && self.max_p_condenser_pa.is_none_or(|v| v > 0.0)
    }

    /// Names of the limited quantities, in check order.
    fn quantities(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .max_temp_k
            .keys()
            .map(|s| format!("T_{}", s.name()))
            .collect();
        if self.max_p_still_pa.is_some() {
            out.push("p_still".to_string());
        }
        if self.max_p_condenser_pa.is_some() {
            out.push("p_condenser".to_string());
        }
        out
    }
}

/// One exceeded limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub quantity: String,
    pub value: f64,
    pub threshold: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} = {:.6e} exceeds limit {:.6e}",
            self.quantity, self.value, self.threshold
        )
    }
}

/// Check a platform state against limits. Pure; one entry per exceeded
/// limit, in deterministic order; empty means compliant.
pub fn check_limits(s: &PlatformState, lim: &OperationalLimits) -> Vec<Violation> {
    let mut out = Vec::new();
    for (&stage, &threshold) in &lim.max_temp_k {
        let value = s.temps[stage];
        if value > threshold {
            out.push(Violation {
                quantity: format!("T_{}", stage.name()),
                value,
                threshold,
            });
        }
    }
    if let (Some(threshold), Some(value)) = (lim.max_p_still_pa, s.p_still) {
        if value > threshold {
            out.push(Violation {
                quantity: "p_still".to_string(),
                value,
                threshold,
            });
        }
    }
    if let (Some(threshold), Some(value)) = (lim.max_p_condenser_pa, s.p_condenser) {
        if value > threshold {
            out.push(Violation {
                quantity: "p_condenser".to_string(),
                value,
                threshold,
            });
        }
    }
    out
}

/// What stopped the headroom search.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BindingConstraint {
    /// The whole axis is admissible; headroom ends at the measured domain.
    DomainEdge,
    /// A named limit (e.g. `T_STL`) was exceeded at the next grid step.
    Limit(String),
    /// The next grid step runs through an incomplete cell.
    InvalidCell,
}

impl fmt::Display for BindingConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BindingConstraint::DomainEdge => f.write_str("DOMAIN_EDGE"),
            BindingConstraint::Limit(q) => write!(f, "limit {q}"),
            BindingConstraint::InvalidCell => f.write_str("INVALID_CELL"),
        }
    }
}

/// Headroom result for one stage at fixed loads on the others.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadroomReport {
    pub stage: StageId,
    pub fixed: LoadVector,
    /// Largest admissible power on the stage axis (W), at grid-step
    /// resolution. Equal to the axis minimum with `zero_headroom` set when
    /// even the minimum violates a limit.
    pub admissible_max_w: f64,
    pub binding: BindingConstraint,
    /// True when even the axis minimum is inadmissible.
    pub zero_headroom: bool,
    /// True when a limited quantity was non-monotone along the axis and the
    /// search fell back to an exhaustive scan.
    pub used_scan_fallback: bool,
}

impl fmt::Display for HeadroomReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} headroom: {:.6e} W (binding: {}{}{})",
            self.stage,
            self.admissible_max_w,
            self.binding,
            if self.zero_headroom {
                "; zero headroom"
            } else {
                ""
            },
            if self.used_scan_fallback {
                "; exhaustive scan used"
            } else {
                ""
            }
        )
    }
}

/// Admissibility of one node on the stage axis.
enum NodeStatus {
    Ok(PlatformState),
    Violated(Violation, PlatformState),
    Broken,
}

fn node_status(
    m: &CapacityMap,
    stage: StageId,
    fixed: &LoadVector,
    power: f64,
    lim: &OperationalLimits,
) -> Result<NodeStatus> {
    match m.query(&fixed.with(stage, power)) {
        Ok(r) => {
            let violations = check_limits(&r.state, lim);
            Ok(match violations.into_iter().next() {
                None => NodeStatus::Ok(r.state),
                Some(v) => NodeStatus::Violated(v, r.state),
            })
        }
        Err(Error::InvalidCell { .. }) => Ok(NodeStatus::Broken),
        Err(e) => Err(e),
    }
}

/// Largest admissible power on a stage's axis with the other loads fixed.
///
/// Admissible means: the query exists (valid cell) and no limit is
/// exceeded. The result is reported at grid-step resolution; the map
/// carries no information finer than its measurement grid near a
/// constraint boundary. Monotonicity of every limited quantity along the
/// axis is verified first; if it holds the boundary is found by index
/// bisection, otherwise by exhaustive scan (noted in the report).
pub fn max_stage_power(
    m: &CapacityMap,
    stage: StageId,
    fixed: &LoadVector,
    lim: &OperationalLimits,
) -> Result<HeadroomReport> {
    let axis = m.grid().axis(stage).to_vec();
    if axis.len() < 2 {
        return Err(Error::NonMonotoneProfile { stage });
    }

    let statuses: Vec<NodeStatus> = axis
        .iter()
        .map(|&p| node_status(m, stage, fixed, p, lim))
        .collect::<Result<_>>()?;

    // Admissibility at the axis minimum.
    match &statuses[0] {
        NodeStatus::Violated(v, _) => {
            return Ok(HeadroomReport {
                stage,
                fixed: *fixed,
                admissible_max_w: axis[0],
                binding: BindingConstraint::Limit(v.quantity.clone()),
                zero_headroom: true,
                used_scan_fallback: false,
            })
        }
        NodeStatus::Broken => {
            return Ok(HeadroomReport {
                stage,
                fixed: *fixed,
                admissible_max_w: axis[0],
                binding: BindingConstraint::InvalidCell,
                zero_headroom: true,
                used_scan_fallback: false,
            })
        }
        NodeStatus::Ok(_) => {}
    }

    // Verify each limited quantity is monotone (in either direction) over
    // the queryable prefix of the line. With the axis minimum admissible,
    // per-quantity monotonicity makes admissibility prefix-shaped: rising
    // quantities flip at most once and falling ones never re-violate.
    let quantities = lim.quantities();
    let mut monotone = true;
    'outer: for q in &quantities {
        let mut values = Vec::new();
        for st in &statuses {
            let state = match st {
                NodeStatus::Ok(s) | NodeStatus::Violated(_, s) => s,
                NodeStatus::Broken => break,
            };
            if let Some(v) = quantity_value(state, q) {
                values.push(v);
            }
        }
        let rising = values.windows(2).all(|w| w[1] >= w[0]);
        let falling = values.windows(2).all(|w| w[1] <= w[0]);
        if !(rising || falling) {
            monotone = false;
            break 'outer;
        }
    }

    let admissible = |i: usize| matches!(statuses[i], NodeStatus::Ok(_));

    let boundary = if monotone {
        // Prefix-admissible structure holds; bisect on node index.
        let mut lo = 0usize; // known admissible
        let mut hi = axis.len(); // first known inadmissible (or end)
        // Find first inadmissible via bisection over the predicate
        // "all nodes up to i admissible" which equals "node i admissible"
        // under monotonicity.
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if admissible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    } else {
        // Exhaustive scan: stop at the first inadmissible node.
        let mut last = 0usize;
        for i in 1..axis.len() {
            if admissible(i) {
                last = i;
            } else {
                break;
            }
        }
        last
    };

    let binding = if boundary + 1 >= axis.len() {
        BindingConstraint::DomainEdge
    } else {
        match &statuses[boundary + 1] {
            NodeStatus::Violated(v, _) => BindingConstraint::Limit(v.quantity.clone()),
            NodeStatus::Broken => BindingConstraint::InvalidCell,
            NodeStatus::Ok(_) => {
                // Non-monotone admissibility beyond the first break; the
                // scan stopped at the first gap.
                BindingConstraint::InvalidCell
            }
        }
    };

    Ok(HeadroomReport {
        stage,
        fixed: *fixed,
        admissible_max_w: axis[boundary],
        binding,
        zero_headroom: false,
        used_scan_fallback: !monotone,
    })
}

fn quantity_value(state: &PlatformState, quantity: &str) -> Option<f64> {
    if let Some(stage_name) = quantity.strip_prefix("T_") {
        let stage: StageId = stage_name.parse().ok()?;
        Some(state.temps[stage])
    } else if quantity == "p_still" {
        state.p_still
    } else if quantity == "p_condenser" {
        state.p_condenser
    } else {
        None
    }
}

/// Exhaustive-scan oracle for [`max_stage_power`]: walks every axis node in
/// order with no bisection or monotonicity assumptions.
pub fn max_stage_power_by_scan(
    m: &CapacityMap,
    stage: StageId,
    fixed: &LoadVector,
    lim: &OperationalLimits,
) -> Result<f64> {
    let axis = m.grid().axis(stage).to_vec();
    let mut last = None;
    for &p in &axis {
        match node_status(m, stage, fixed, p, lim)? {
            NodeStatus::Ok(_) => last = Some(p),
            _ => break,
        }
    }
    last.ok_or(Error::NotBracketed {
        stage,
        target: f64::NAN,
    })
}

/// One point of a 2-D admissibility surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePoint {
    pub x_w: f64,
    pub y_w: f64,
    pub admissible: bool,
    /// First violated limit, or `INVALID_CELL`, when inadmissible.
    pub binding: Option<String>,
}

/// Boolean admissibility with binding-constraint labels over the grid of a
/// two-stage loading plane.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadroomSurface {
    pub x_stage: StageId,
    pub y_stage: StageId,
    pub x_axis: Vec<f64>,
    pub y_axis: Vec<f64>,
    /// Row-major: `points[iy * x_axis.len() + ix]`.
    pub points: Vec<SurfacePoint>,
}

impl HeadroomSurface {
    pub fn admissible_count(&self) -> usize {
        self.points.iter().filter(|p| p.admissible).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "q_{}_W,q_{}_W,admissible,binding\n",
            self.x_stage.key(),
            self.y_stage.key()
        );
        for p in &self.points {
            out.push_str(&format!(
                "{:e},{:e},{},{}\n",
                p.x_w,
                p.y_w,
                p.admissible,
                p.binding.as_deref().unwrap_or("")
            ));
        }
        out
    }
}

/// Compute the admissibility surface over two varying stages.
pub fn headroom_surface(
    m: &CapacityMap,
    x_stage: StageId,
    y_stage: StageId,
    fixed: &LoadVector,
    lim: &OperationalLimits,
) -> Result<HeadroomSurface> {
    if x_stage == y_stage {
        return Err(Error::BadPayload(
            "surface stages must be distinct".to_string(),
        ));
    }
    let x_axis = m.grid().axis(x_stage).to_vec();
    let y_axis = m.grid().axis(y_stage).to_vec();
    if x_axis.len() < 2 || y_axis.len() < 2 {
        return Err(Error::NonMonotoneProfile {
            stage: if x_axis.len() < 2 { x_stage } else { y_stage },
        });
    }
    let mut points = Vec::with_capacity(x_axis.len() * y_axis.len());
    for &y in &y_axis {
        for &x in &x_axis {
            let q = fixed.with(x_stage, x).with(y_stage, y);
            let (admissible, binding) = match m.query(&q) {
                Ok(r) => match check_limits(&r.state, lim).into_iter().next() {
                    None => (true, None),
                    Some(v) => (false, Some(v.quantity)),
                },
                Err(Error::InvalidCell { .. }) => (false, Some("INVALID_CELL".to_string())),
                Err(e) => return Err(e),
            };
            points.push(SurfacePoint {
                x_w: x,
                y_w: y,
                admissible,
                binding,
            });
        }
    }
    Ok(HeadroomSurface {
        x_stage,
        y_stage,
        x_axis,
        y_axis,
        points,
    })
}
