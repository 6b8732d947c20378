//! Dataset validation reporting.

use crate::dataset::Dataset;
use crate::grid::to_grid;
use crate::stage::StageId;
use std::fmt;

/// Axis coverage summary for one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisCoverage {
    pub stage: StageId,
    pub distinct_values: usize,
    pub min_w: f64,
    pub max_w: f64,
}

/// A monotonicity warning: the stage temperature decreased while its own
/// heater power increased along an axis line.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityWarning {
    pub stage: StageId,
    pub at_power_w: f64,
    pub next_power_w: f64,
    pub t_before_k: f64,
    pub t_after_k: f64,
}

/// Findings produced by [`validate_dataset`]. All findings are report
/// entries; validation never fails.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub no_data: bool,
    pub record_count: usize,
    pub axes: Vec<AxisCoverage>,
    pub cell_count: usize,
    pub invalid_cells: usize,
    pub monotonicity_warnings: Vec<MonotonicityWarning>,
    /// Row numbers (1-based, header = row 1) violating stage ordering.
    pub stage_ordering_warnings: Vec<usize>,
    /// Row numbers containing non-finite or out-of-range values.
    pub value_findings: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        !self.no_data
            && self.invalid_cells == 0
            && self.monotonicity_warnings.is_empty()
            && self.stage_ordering_warnings.is_empty()
            && self.value_findings.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.no_data {
            return writeln!(f, "no data: dataset holds zero records, zero axes");
        }
        writeln!(f, "records: {}", self.record_count)?;
        for a in &self.axes {
            writeln!(
                f,
                "axis {}: {} values in [{:.6e}, {:.6e}] W",
                a.stage, a.distinct_values, a.min_w, a.max_w
            )?;
        }
        writeln!(
            f,
            "cells: {} total, {} invalid",
            self.cell_count, self.invalid_cells
        )?;
        writeln!(
            f,
            "monotonicity warnings: {}",
            self.monotonicity_warnings.len()
        )?;
        for w in self.monotonicity_warnings.iter().take(10) {
            writeln!(
                f,
                "  {}: T fell {:.6} K -> {:.6} K as power rose {:.6e} -> {:.6e} W",
                w.stage, w.t_before_k, w.t_after_k, w.at_power_w, w.next_power_w
            )?;
        }
        writeln!(
            f,
            "stage-ordering warnings: {} rows",
            self.stage_ordering_warnings.len()
        )?;
        for finding in &self.value_findings {
            writeln!(f, "value finding: {finding}")?;
        }
        Ok(())
    }
}

/// Pure validation pass over a dataset. The dataset is not modified and the
/// report is deterministic: calling this twice yields identical reports.
pub fn validate_dataset(d: &Dataset) -> ValidationReport {
    let mut report = ValidationReport {
        record_count: d.records.len(),
        ..Default::default()
    };
    if d.records.is_empty() {
        report.no_data = true;
        return report;
    }

    for (i, r) in d.records.iter().enumerate() {
        let row = i + 2;
        if !r.state.temps_valid() {
            report
                .value_findings
                .push(format!("row {row}: non-finite or non-positive temperature"));
        }
        for (name, v) in [
            ("p_cond", r.state.p_condenser),
            ("p_still", r.state.p_still),
            ("flow", r.state.flow),
        ] {
            if let Some(v) = v {
                if !v.is_finite() || v < 0.0 {
                    report
                        .value_findings
                        .push(format!("row {row}: {name} = {v} out of range"));
                }
            }
        }
        if !r.state.stage_ordering_ok() {
            report.stage_ordering_warnings.push(row);
        }
    }

    let grid = match to_grid(d) {
        Ok(g) => g,
        Err(e) => {
            report
                .value_findings
                .push(format!("grid construction failed: {e}"));
            return report;
        }
    };

    for s in StageId::ALL {
        let axis = grid.axis(s);
        report.axes.push(AxisCoverage {
            stage: s,
            distinct_values: axis.len(),
            min_w: *axis.first().unwrap(),
            max_w: *axis.last().unwrap(),
        });
    }
    report.cell_count = grid.cell_count();
    report.invalid_cells = grid.invalid_cell_count();

    // Own-stage monotonicity along every populated axis line: walk node
    // pairs adjacent on the stage's own axis with all other indices equal.
    for s in StageId::ALL {
        if grid.is_collapsed(s) {
            continue;
        }
        let axis = grid.axis(s).to_vec();
        let mut others: Vec<usize> = (0..StageId::COUNT).collect();
        others.retain(|&a| a != s.index());
        let lens: Vec<usize> = others
            .iter()
            .map(|&a| grid.axis(StageId::from_index(a).unwrap()).len())
            .collect();
        let mut combo = vec![0usize; others.len()];
        loop {
            for w in 0..axis.len() - 1 {
                let mut idx = [0usize; StageId::COUNT];
                for (j, &a) in others.iter().enumerate() {
                    idx[a] = combo[j];
                }
                idx[s.index()] = w;
                let lo = grid.record_at(grid.node_index(&idx));
                idx[s.index()] = w + 1;
                let hi = grid.record_at(grid.node_index(&idx));
                if let (Some(lo), Some(hi)) = (lo, hi) {
                    let t_lo = d.records[lo].state.temps[s];
                    let t_hi = d.records[hi].state.temps[s];
                    if t_hi < t_lo {
                        report.monotonicity_warnings.push(MonotonicityWarning {
                            stage: s,
                            at_power_w: axis[w],
                            next_power_w: axis[w + 1],
                            t_before_k: t_lo,
                            t_after_k: t_hi,
                        });
                    }
                }
            }
            // advance the odometer over the other axes
            let mut j = 0;
            loop {
                if j == combo.len() {
                    break;
                }
                combo[j] += 1;
                if combo[j] < lens[j] {
                    break;
                }
                combo[j] = 0;
                j += 1;
            }
            if j == combo.len() {
                break;
            }
        }
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetMeta, MeasurementRecord};
    use crate::state::{LoadVector, PlatformState, StageVec};

    fn record(q: LoadVector, t_pt1: f64) -> MeasurementRecord {
        MeasurementRecord {
            applied: q,
            state: PlatformState::from_temps(StageVec([t_pt1, 3.3, 0.73, 0.085, 0.0073])),
            timestamp: None,
            averaging_window: None,
            flags: vec![],
        }
    }

    #[test]
    fn empty_dataset_reports_no_data() {
        let d = Dataset {
            records: vec![],
            meta: DatasetMeta::default(),
        };
        let r = validate_dataset(&d);
        assert!(r.no_data);
        assert!(r.axes.is_empty());
    }

    #[test]
    fn validation_is_pure_and_repeatable() {
        let d = Dataset {
            records: vec![
                record(LoadVector::ZERO, 32.5),
                record(LoadVector::ZERO.with(StageId::Pt1, 1.0), 33.0),
            ],
            meta: DatasetMeta::default(),
        };
        let before = d.clone();
        let a = validate_dataset(&d);
        let b = validate_dataset(&d);
        assert_eq!(a, b);
        assert_eq!(d, before);
        assert!(a.is_clean());
    }

    #[test]
    fn detects_own_stage_monotonicity_violation() {
        let d = Dataset {
            records: vec![
                record(LoadVector::ZERO, 32.5),
                record(LoadVector::ZERO.with(StageId::Pt1, 1.0), 32.0),
            ],
            meta: DatasetMeta::default(),
        };
        let r = validate_dataset(&d);
        assert_eq!(r.monotonicity_warnings.len(), 1);
        assert_eq!(r.monotonicity_warnings[0].stage, StageId::Pt1);
    }
}
