//! Per-stage value vectors, loading scenarios and platform observables.

use crate::stage::StageId;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

/// One `f64` per refrigerator stage, indexed by [`StageId`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageVec(pub [f64; StageId::COUNT]);

impl StageVec {
    pub fn splat(v: f64) -> Self {
        StageVec([v; StageId::COUNT])
    }

    pub fn from_fn(mut f: impl FnMut(StageId) -> f64) -> Self {
        let mut out = [0.0; StageId::COUNT];
        for s in StageId::ALL {
            out[s.index()] = f(s);
        }
        StageVec(out)
    }

    pub fn iter(&self) -> impl Iterator<Item = (StageId, f64)> + '_ {
        StageId::ALL.iter().map(move |&s| (s, self.0[s.index()]))
    }

    pub fn map(&self, mut f: impl FnMut(StageId, f64) -> f64) -> Self {
        StageVec::from_fn(|s| f(s, self[s]))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest relative difference `|a-b| / max(|a|, |b|, floor)` over stages.
    pub fn max_rel_diff(&self, other: &StageVec, floor: f64) -> f64 {
        let mut worst = 0.0_f64;
        for s in StageId::ALL {
            let (a, b) = (self[s], other[s]);
            let denom = a.abs().max(b.abs()).max(floor);
            worst = worst.max((a - b).abs() / denom);
        }
        worst
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Index<StageId> for StageVec {
    type Output = f64;
    fn index(&self, s: StageId) -> &f64 {
        &self.0[s.index()]
    }
}

impl IndexMut<StageId> for StageVec {
    fn index_mut(&mut self, s: StageId) -> &mut f64 {
        &mut self.0[s.index()]
    }
}

impl Add for StageVec {
    type Output = StageVec;
    fn add(self, rhs: StageVec) -> StageVec {
        StageVec::from_fn(|s| self[s] + rhs[s])
    }
}

impl Sub for StageVec {
    type Output = StageVec;
    fn sub(self, rhs: StageVec) -> StageVec {
        StageVec::from_fn(|s| self[s] - rhs[s])
    }
}

impl Mul<f64> for StageVec {
    type Output = StageVec;
    fn mul(self, rhs: f64) -> StageVec {
        StageVec::from_fn(|s| self[s] * rhs)
    }
}

/// A loading scenario: heater / dissipated power applied per stage, in W.
/// Entries are finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LoadVector(pub StageVec);

impl LoadVector {
    pub const ZERO: LoadVector = LoadVector(StageVec([0.0; StageId::COUNT]));

    /// Absolute tolerance used when comparing load coordinates (1 uW).
    pub const SNAP_TOLERANCE_W: f64 = 1e-6;

    pub fn new(per_stage: StageVec) -> Option<LoadVector> {
        if per_stage.0.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Some(LoadVector(per_stage))
        } else {
            None
        }
    }

    pub fn from_fn(f: impl FnMut(StageId) -> f64) -> LoadVector {
        LoadVector(StageVec::from_fn(f))
    }

    pub fn get(&self, s: StageId) -> f64 {
        self.0[s]
    }

    pub fn with(&self, s: StageId, value: f64) -> LoadVector {
        let mut v = self.0;
        v[s] = value;
        LoadVector(v)
    }

    pub fn total(&self) -> f64 {
        self.0 .0.iter().sum()
    }

    /// Componentwise equality within [`Self::SNAP_TOLERANCE_W`].
    pub fn same_node(&self, other: &LoadVector) -> bool {
        StageId::ALL
            .iter()
            .all(|&s| (self.get(s) - other.get(s)).abs() <= Self::SNAP_TOLERANCE_W)
    }
}

impl Add for LoadVector {
    type Output = LoadVector;
    fn add(self, rhs: LoadVector) -> LoadVector {
        LoadVector(self.0 + rhs.0)
    }
}

impl Index<StageId> for LoadVector {
    type Output = f64;
    fn index(&self, s: StageId) -> &f64 {
        &self.0 .0[s.index()]
    }
}

impl fmt::Display for LoadVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (s, v) in self.0.iter() {
            if !first {
                write!(f, ", ")?;
            }
            write!(f, "{}={:.6e} W", s, v)?;
            first = false;
        }
        Ok(())
    }
}

/// The platform observables recorded at one loading scenario: stage
/// temperatures (K), circulation line pressures (Pa) and molar flow (mol/s).
/// Pressures and flow are optional because not every campaign records them,
/// but a dataset must carry them uniformly (all records or none).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatformState {
    pub temps: StageVec,
    pub p_condenser: Option<f64>,
    pub p_still: Option<f64>,
    pub flow: Option<f64>,
}

impl PlatformState {
    pub fn from_temps(temps: StageVec) -> PlatformState {
        PlatformState {
            temps,
            p_condenser: None,
            p_still: None,
            flow: None,
        }
    }

    pub fn temp(&self, s: StageId) -> f64 {
        self.temps[s]
    }

    pub fn temps_valid(&self) -> bool {
        self.temps.0.iter().all(|t| t.is_finite() && *t > 0.0)
    }

    /// Stage-ordering sanity predicate: T(PT1) >= T(PT2) >= ... >= T(MXC).
    /// Real data may transiently violate this, so callers report it as a
    /// warning rather than a hard failure.
    pub fn stage_ordering_ok(&self) -> bool {
        self.temps
            .0
            .windows(2)
            .all(|pair| pair[0] >= pair[1])
    }

    /// Iterate over all scalar fields with stable field names, temperatures
    /// first. Used by interpolation, diffs and exports.
    pub fn fields(&self) -> Vec<(&'static str, Option<f64>)> {
        let mut out: Vec<(&'static str, Option<f64>)> = vec![
            ("t_pt1", Some(self.temps[StageId::Pt1])),
            ("t_pt2", Some(self.temps[StageId::Pt2])),
            ("t_stl", Some(self.temps[StageId::Stl])),
            ("t_cld", Some(self.temps[StageId::Cld])),
            ("t_mxc", Some(self.temps[StageId::Mxc])),
        ];
        out.push(("p_cond", self.p_condenser));
        out.push(("p_still", self.p_still));
        out.push(("flow", self.flow));
        out
    }

    /// Look up a field by the names returned by [`Self::fields`].
    pub fn field(&self, name: &str) -> Option<f64> {
        match name {
            "t_pt1" => Some(self.temps[StageId::Pt1]),
            "t_pt2" => Some(self.temps[StageId::Pt2]),
            "t_stl" => Some(self.temps[StageId::Stl]),
            "t_cld" => Some(self.temps[StageId::Cld]),
            "t_mxc" => Some(self.temps[StageId::Mxc]),
            "p_cond" => self.p_condenser,
            "p_still" => self.p_still,
            "flow" => self.flow,
            _ => None,
        }
    }
}
