//! 2-D slices of the capacity map for plotting and export.
//!
//! A slice fixes every stage but two and tabulates one state field over the
//! varying plane. The two standard views are the pulse-tube map (PT1 x PT2)
//! and the dilution-unit map (STL x MXC); any field can be overlaid on any
//! plane, e.g. the still temperature over the pulse-tube plane.

use crate::error::{Error, Result};
use crate::map::CapacityMap;
use crate::stage::StageId;
use crate::state::LoadVector;

/// Specification of a slice: two varying stages, fixed loads for the rest,
/// and the output field (`t_pt1`..`t_mxc`, `p_cond`, `p_still`, `flow`).
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSpec {
    pub x_stage: StageId,
    pub y_stage: StageId,
    /// Fixed loads for the non-varying stages (entries on the varying
    /// stages are ignored).
    pub fixed: LoadVector,
    pub field: String,
}

/// Tabulated slice. Cells requiring interpolation through incomplete grid
/// cells carry `None`: gaps are explicit, never invented.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceTable {
    pub x_stage: StageId,
    pub y_stage: StageId,
    pub field: String,
    pub x_axis_w: Vec<f64>,
    pub y_axis_w: Vec<f64>,
    /// Row-major: `values[iy * x_axis_w.len() + ix]`.
    pub values: Vec<Option<f64>>,
}

impl SliceTable {
    pub fn value_at(&self, ix: usize, iy: usize) -> Option<f64> {
        self.values[iy * self.x_axis_w.len() + ix]
    }

    /// Finite-value range, `None` if the slice is all gaps.
    pub fn value_range(&self) -> Option<(f64, f64)> {
        let mut range: Option<(f64, f64)> = None;
        for v in self.values.iter().flatten() {
            range = Some(match range {
                None => (*v, *v),
                Some((lo, hi)) => (lo.min(*v), hi.max(*v)),
            });
        }
        range
    }

    /// Delimited export: `x_W, y_W, value` with empty value cells for gaps.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x_W,y_W,value\n");
        for (iy, &y) in self.y_axis_w.iter().enumerate() {
            for (ix, &x) in self.x_axis_w.iter().enumerate() {
                match self.value_at(ix, iy) {
                    Some(v) => out.push_str(&format!("{x:e},{y:e},{v:e}\n")),
                    None => out.push_str(&format!("{x:e},{y:e},\n")),
                }
            }
        }
        out
    }
}

/// Evaluate a 2-D slice of the map.
pub fn slice(m: &CapacityMap, spec: &SliceSpec) -> Result<SliceTable> {
    if spec.x_stage == spec.y_stage {
        return Err(Error::BadPayload(
            "slice stages must be distinct".to_string(),
        ));
    }
    let grid = m.grid();
    for s in [spec.x_stage, spec.y_stage] {
        if grid.is_collapsed(s) {
            return Err(Error::CollapsedAxisMismatch {
                stage: s,
                axis_value: grid.axis(s)[0],
                value: f64::NAN,
            });
        }
    }
    let x_axis = grid.axis(spec.x_stage).to_vec();
    let y_axis = grid.axis(spec.y_stage).to_vec();

    let mut values = Vec::with_capacity(x_axis.len() * y_axis.len());
    for &y in &y_axis {
        for &x in &x_axis {
            let q = spec.fixed.with(spec.x_stage, x).with(spec.y_stage, y);
            match m.query(&q) {
                Ok(r) => values.push(r.state.field(&spec.field)),
                Err(Error::InvalidCell { .. }) => values.push(None),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(SliceTable {
        x_stage: spec.x_stage,
        y_stage: spec.y_stage,
        field: spec.field.clone(),
        x_axis_w: x_axis,
        y_axis_w: y_axis,
        values,
    })
}
