//! The small-signal linear interstage model: temperature changes as a
//! linear map of applied loads, `dT = A * Q`.
//!
//! The coupling matrix is fitted column by column from single-stage loading
//! sweeps, which decouples the columns, with the baseline taken from the
//! unloaded record rather than a fitted intercept. The model is only
//! trustworthy well below each stage's available cooling power; the
//! residual table quantifies how quickly it diverges beyond that.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::stage::StageId;
use crate::state::{LoadVector, PlatformState, StageVec};

/// The fitted linear model: `a[i][j]` is the response of stage `i` (K/W) to
/// power applied on stage `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    pub a: [[f64; StageId::COUNT]; StageId::COUNT],
    /// Baseline platform state at zero applied load.
    pub t0: PlatformState,
    /// Per-stage maximum power admitted into the fit (W).
    pub fit_domain: StageVec,
}

impl CouplingMatrix {
    pub fn coefficient(&self, responding: StageId, loaded: StageId) -> f64 {
        self.a[responding.index()][loaded.index()]
    }

    /// Predicted temperature change per stage for a loading scenario.
    pub fn predict_delta(&self, q: &LoadVector) -> StageVec {
        StageVec::from_fn(|i| {
            StageId::ALL
                .iter()
                .map(|&j| self.a[i.index()][j.index()] * q.get(j))
                .sum()
        })
    }

    /// Absolute temperature prediction `T0 + A*Q`.
    pub fn predict_absolute(&self, q: &LoadVector) -> StageVec {
        self.t0.temps + self.predict_delta(q)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("responding_stage");
        for j in StageId::ALL {
            out.push_str(&format!(",a_{}_K_W", j.key()));
        }
        out.push_str(",t0_K\n");
        for i in StageId::ALL {
            out.push_str(i.name());
            for j in StageId::ALL {
                out.push_str(&format!(",{:e}", self.coefficient(i, j)));
            }
            out.push_str(&format!(",{:e}\n", self.t0.temps[i]));
        }
        out
    }
}

/// Fit the coupling matrix from single-stage loading records.
///
/// For each stage `j` the fit selects records where only stage `j` is
/// loaded (all other stages at their axis minimum) with powers at most
/// `small_load_fraction` of the stage's maximum axis value, plus the
/// unloaded record that provides the baseline. Column `j` is the
/// no-intercept least-squares slope of each stage temperature against the
/// applied power.
pub fn fit_coupling(d: &Dataset, small_load_fraction: f64) -> Result<CouplingMatrix> {
    if !(small_load_fraction > 0.0 && small_load_fraction <= 1.0) {
        return Err(Error::LinearFit(format!(
            "small_load_fraction must be in (0, 1], got {small_load_fraction}"
        )));
    }
    if d.records.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let tol = LoadVector::SNAP_TOLERANCE_W;
    let min_load = StageVec::from_fn(|s| {
        d.records
            .iter()
            .map(|r| r.applied.get(s))
            .fold(f64::INFINITY, f64::min)
    });
    let max_load = StageVec::from_fn(|s| {
        d.records
            .iter()
            .map(|r| r.applied.get(s))
            .fold(0.0_f64, f64::max)
    });

    let at_min = |q: &LoadVector, s: StageId| (q.get(s) - min_load[s]).abs() <= tol;
    let baseline = d
        .records
        .iter()
        .find(|r| StageId::ALL.iter().all(|&s| at_min(&r.applied, s)))
        .ok_or_else(|| {
            Error::LinearFit("dataset has no unloaded (all-minimum) record for T0".to_string())
        })?;
    let t0 = baseline.state;

    let mut a = [[0.0; StageId::COUNT]; StageId::COUNT];
    let mut fit_domain = StageVec::default();

    for j in StageId::ALL {
        let threshold = small_load_fraction * max_load[j];
        fit_domain[j] = threshold;
        // Only-j-loaded records in the small-load regime, baseline included.
        let selected: Vec<&crate::dataset::MeasurementRecord> = d
            .records
            .iter()
            .filter(|r| {
                StageId::ALL
                    .iter()
                    .all(|&s| s == j || at_min(&r.applied, s))
                    && r.applied.get(j) - min_load[j] <= threshold + tol
            })
            .collect();
        if selected.len() < 2 {
            return Err(Error::LinearFit(format!(
                "insufficient single-stage records for {j}: need at least 2 with loads \
                 <= {threshold:.3e} W, found {}",
                selected.len()
            )));
        }
        let powers: Vec<f64> = selected
            .iter()
            .map(|r| r.applied.get(j) - min_load[j])
            .collect();
        let sum_qq: f64 = powers.iter().map(|q| q * q).sum();
        if sum_qq <= 0.0 {
            return Err(Error::LinearFit(format!(
                "rank-deficient regression for {j}: all selected powers equal"
            )));
        }
        for i in StageId::ALL {
            let sum_qt: f64 = selected
                .iter()
                .zip(&powers)
                .map(|(r, q)| q * (r.state.temps[i] - t0.temps[i]))
                .sum();
            a[i.index()][j.index()] = sum_qt / sum_qq;
        }
    }

    let m = CouplingMatrix { a, t0, fit_domain };
    for j in StageId::ALL {
        let diag = m.coefficient(j, j);
        if !diag.is_finite() || diag <= 0.0 {
            return Err(Error::LinearFit(format!(
                "fitted diagonal coefficient for {j} is {diag}; a stage must warm when heated"
            )));
        }
    }
    Ok(m)
}

/// One row of the residual table: prediction error per stage for a record.
#[derive(Debug, Clone)]
pub struct ResidualRow {
    pub applied: LoadVector,
    /// `(T0 + A*Q) - T_measured` (K).
    pub error_k: StageVec,
    /// Percent error relative to the measured temperature.
    pub error_pct: StageVec,
}

/// Residuals of the linear model over a dataset, with per-stage summaries.
#[derive(Debug, Clone)]
pub struct ResidualTable {
    pub rows: Vec<ResidualRow>,
    pub max_abs_k: StageVec,
    pub mean_abs_k: StageVec,
    pub max_abs_pct: StageVec,
}

impl ResidualTable {
    /// Export in the dataset table format with error columns appended.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("q_pt1_W,q_pt2_W,q_stl_W,q_cld_W,q_mxc_W");
        for s in StageId::ALL {
            out.push_str(&format!(",err_{}_K", s.key()));
        }
        for s in StageId::ALL {
            out.push_str(&format!(",err_{}_pct", s.key()));
        }
        out.push('\n');
        for row in &self.rows {
            let mut cells: Vec<String> = StageId::ALL
                .iter()
                .map(|&s| format!("{:e}", row.applied.get(s)))
                .collect();
            for s in StageId::ALL {
                cells.push(format!("{:e}", row.error_k[s]));
            }
            for s in StageId::ALL {
                cells.push(format!("{:e}", row.error_pct[s]));
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Prediction error of the linear model for every record of a dataset.
pub fn residuals(m: &CouplingMatrix, d: &Dataset) -> ResidualTable {
    let mut rows = Vec::with_capacity(d.records.len());
    let mut max_abs_k = StageVec::default();
    let mut sum_abs_k = StageVec::default();
    let mut max_abs_pct = StageVec::default();
    for r in &d.records {
        let predicted = m.predict_absolute(&r.applied);
        let error_k = predicted - r.state.temps;
        let error_pct = StageVec::from_fn(|s| 100.0 * error_k[s] / r.state.temps[s]);
        for s in StageId::ALL {
            max_abs_k[s] = max_abs_k[s].max(error_k[s].abs());
            sum_abs_k[s] += error_k[s].abs();
            max_abs_pct[s] = max_abs_pct[s].max(error_pct[s].abs());
        }
        rows.push(ResidualRow {
            applied: r.applied,
            error_k,
            error_pct,
        });
    }
    let n = rows.len().max(1) as f64;
    ResidualTable {
        rows,
        max_abs_k,
        mean_abs_k: sum_abs_k.map(|_, v| v / n),
        max_abs_pct,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetMeta, MeasurementRecord};

    /// Dataset generated from an exactly linear state function
    /// `T = T0 + A*Q` over single-stage sweeps.
    pub(crate) fn linear_dataset(
        a: &[[f64; StageId::COUNT]; StageId::COUNT],
        t0: &StageVec,
        sweep_powers: &[f64],
    ) -> Dataset {
        let mut loads = vec![LoadVector::ZERO];
        for s in StageId::ALL {
            for &p in sweep_powers {
                loads.push(LoadVector::ZERO.with(s, p));
            }
        }
        let records = loads
            .into_iter()
            .map(|q| {
                let temps = StageVec::from_fn(|i| {
                    t0[i]
                        + StageId::ALL
                            .iter()
                            .map(|&j| a[i.index()][j.index()] * q.get(j))
                            .sum::<f64>()
                });
                MeasurementRecord {
                    applied: q,
                    state: PlatformState::from_temps(temps),
                    timestamp: None,
                    averaging_window: None,
                    flags: vec![],
                }
            })
            .collect();
        Dataset {
            records,
            meta: DatasetMeta::default(),
        }
    }

    pub(crate) fn test_matrix() -> [[f64; 5]; 5] {
        // Diagonally dominant with mild couplings, loosely shaped like a
        // real platform response.
        [
            [0.75, 0.22, 0.0, 0.0, 0.0],
            [0.04, 0.40, 0.01, 0.0, 0.0],
            [0.001, 0.09, 3.6, 1.1, 3.5],
            [0.0005, 0.01, 0.4, 9.0, 2.0],
            [0.0001, 0.004, 0.05, 0.8, 470.0],
        ]
    }

    #[test]
    fn recovers_generating_matrix_from_linear_data() {
        let a = test_matrix();
        let t0 = StageVec([32.5, 3.3, 0.73, 0.085, 0.0073]);
        let d = linear_dataset(&a, &t0, &[0.01, 0.02, 0.05]);
        let m = fit_coupling(&d, 1.0).unwrap();
        for i in StageId::ALL {
            for j in StageId::ALL {
                let got = m.coefficient(i, j);
                let want = a[i.index()][j.index()];
                let denom = want.abs().max(1e-12);
                assert!(
                    (got - want).abs() / denom <= 1e-9,
                    "a[{i}][{j}] = {got}, want {want}"
                );
            }
        }
    }

    #[test]
    fn two_point_fit_gives_exact_slope() {
        let mut a = [[0.0; 5]; 5];
        for (s, row) in a.iter_mut().enumerate() {
            row[s] = if s == 0 { 2.5 } else { 1.0 };
        }
        let t0 = StageVec([30.0, 3.0, 0.7, 0.08, 0.007]);
        let d = linear_dataset(&a, &t0, &[0.5]);
        let m = fit_coupling(&d, 1.0).unwrap();
        assert_eq!(m.coefficient(StageId::Pt1, StageId::Pt1), 2.5);
    }

    #[test]
    fn zero_load_prediction_is_baseline() {
        let a = test_matrix();
        let t0 = StageVec([32.5, 3.3, 0.73, 0.085, 0.0073]);
        let d = linear_dataset(&a, &t0, &[0.01, 0.02]);
        let m = fit_coupling(&d, 1.0).unwrap();
        assert_eq!(m.predict_delta(&LoadVector::ZERO), StageVec::default());
        assert_eq!(m.predict_absolute(&LoadVector::ZERO), t0);
    }

    #[test]
    fn prediction_is_linear_in_the_load() {
        let a = test_matrix();
        let t0 = StageVec([32.5, 3.3, 0.73, 0.085, 0.0073]);
        let d = linear_dataset(&a, &t0, &[0.01, 0.02]);
        let m = fit_coupling(&d, 1.0).unwrap();
        let q1 = LoadVector(StageVec([1.0, 0.5, 0.01, 0.002, 1e-5]));
        let q2 = LoadVector(StageVec([0.2, 0.1, 0.002, 0.001, 2e-5]));
        let (alpha, beta) = (2.0, 3.0);
        let combined = LoadVector(q1.0 * alpha + q2.0 * beta);
        let lhs = m.predict_delta(&combined);
        let rhs = m.predict_delta(&q1) * alpha + m.predict_delta(&q2) * beta;
        for s in StageId::ALL {
            assert!((lhs[s] - rhs[s]).abs() <= 1e-12 * rhs[s].abs().max(1e-12));
        }
    }

    #[test]
    fn diagonal_identity_matrix_example() {
        // Unit diagonal: 1 mW on each stage produces 1 mK on that stage.
        let mut a = [[0.0; 5]; 5];
        for (s, row) in a.iter_mut().enumerate() {
            row[s] = 1.0;
        }
        let t0 = StageVec([30.0, 3.0, 0.7, 0.08, 0.007]);
        let d = linear_dataset(&a, &t0, &[0.001, 0.002]);
        let m = fit_coupling(&d, 1.0).unwrap();
        let q = LoadVector(StageVec([1e-3, 2e-3, 3e-3, 4e-3, 5e-3]));
        let dt = m.predict_delta(&q);
        for (i, s) in StageId::ALL.iter().enumerate() {
            assert!((dt[*s] - 1e-3 * (i as f64 + 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn residuals_vanish_on_linear_data_and_zero_record() {
        let a = test_matrix();
        let t0 = StageVec([32.5, 3.3, 0.73, 0.085, 0.0073]);
        let d = linear_dataset(&a, &t0, &[0.01, 0.03, 0.06]);
        let m = fit_coupling(&d, 1.0).unwrap();
        let table = residuals(&m, &d);
        assert!(table.max_abs_k.max_abs() < 1e-9);
        // Zero-load record: exactly zero because T0 is read from it.
        assert_eq!(table.rows[0].error_k, StageVec::default());
    }

    #[test]
    fn fit_residuals_orthogonal_to_regressor() {
        let a = test_matrix();
        let t0 = StageVec([32.5, 3.3, 0.73, 0.085, 0.0073]);
        // Add curvature so residuals are nonzero.
        let mut d = linear_dataset(&a, &t0, &[0.01, 0.02, 0.04]);
        for r in &mut d.records {
            let q = r.applied.total();
            r.state.temps[StageId::Pt1] += 0.5 * q * q;
        }
        let m = fit_coupling(&d, 1.0).unwrap();
        let table = residuals(&m, &d);
        // For each loaded column, sum(q * err) ~ 0 over its fitting records.
        for j in StageId::ALL {
            let mut dot = 0.0;
            let mut norm = 0.0;
            for row in &table.rows {
                let only_j = StageId::ALL
                    .iter()
                    .all(|&s| s == j || row.applied.get(s) == 0.0);
                if only_j {
                    dot += row.applied.get(j) * row.error_k[StageId::Pt1];
                    norm += row.applied.get(j) * row.error_k[StageId::Pt1].abs();
                }
            }
            assert!(
                dot.abs() <= 1e-9 * norm.max(1e-12),
                "column {j}: dot = {dot}"
            );
        }
    }

    #[test]
    fn insufficient_records_is_an_error() {
        let a = test_matrix();
        let t0 = StageVec([32.5, 3.3, 0.73, 0.085, 0.0073]);
        let d = linear_dataset(&a, &t0, &[0.5]);
        // Fraction so small that no nonzero sweep record qualifies.
        assert!(matches!(
            fit_coupling(&d, 0.01),
            Err(Error::LinearFit(_))
        ));
    }
}
