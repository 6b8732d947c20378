//! Measurement datasets: records, metadata, file ingestion and drift
//! correction.
//!
//! A campaign ships as two files: a comma-delimited data table whose header
//! names carry unit tokens (`q_pt1_W`, `t_mxc_mK`, ...) and a TOML metadata
//! document (platform id, cooldown id, declared axes). Everything is
//! converted to SI on ingestion and serialized back at 17 significant
//! digits, which round-trips `f64` exactly.

use crate::error::{Error, Result};
use crate::stage::StageId;
use crate::state::{LoadVector, PlatformState, StageVec};
use crate::units::{self, Dimension};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;

/// Provenance flags a record can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RecordFlag {
    /// A post-hoc drift correction has been applied to this record.
    DriftCorrected,
    /// The campaign truncated or limited this grid point because a
    /// configured operational limit was reached; the state is still complete.
    LimitTruncated,
}

impl RecordFlag {
    pub fn token(self) -> &'static str {
        match self {
            RecordFlag::DriftCorrected => "DRIFT_CORRECTED",
            RecordFlag::LimitTruncated => "LIMIT_TRUNCATED",
        }
    }

    pub fn parse(s: &str) -> Option<RecordFlag> {
        match s.trim() {
            "DRIFT_CORRECTED" => Some(RecordFlag::DriftCorrected),
            "LIMIT_TRUNCATED" => Some(RecordFlag::LimitTruncated),
            _ => None,
        }
    }
}

/// One stabilized, pre-averaged measurement at a single loading scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub applied: LoadVector,
    pub state: PlatformState,
    /// Acquisition time (s); only required for drift correction.
    pub timestamp: Option<f64>,
    /// Averaging window used when the point was recorded (s, > 0).
    pub averaging_window: Option<f64>,
    pub flags: Vec<RecordFlag>,
}

impl MeasurementRecord {
    pub fn has_flag(&self, flag: RecordFlag) -> bool {
        self.flags.contains(&flag)
    }

    fn push_flag(&mut self, flag: RecordFlag) {
        if !self.has_flag(flag) {
            self.flags.push(flag);
            self.flags.sort();
        }
    }
}

/// Campaign metadata carried alongside the data table.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub platform_id: String,
    pub cooldown_id: String,
    /// Declared axis values per stage, ascending, in W.
    #[serde(default)]
    pub axes_w: BTreeMap<String, Vec<f64>>,
    /// Unit system of the source files before conversion.
    #[serde(default = "default_unit_system")]
    pub unit_system: String,
    #[serde(default)]
    pub notes: Vec<String>,
    /// Campaign generator seed, when the dataset is synthetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Drift rate injected by the generator (K/s), when applicable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_rate_k_per_s: Option<f64>,
}

fn default_unit_system() -> String {
    "SI".to_string()
}

impl DatasetMeta {
    pub fn declared_axis(&self, stage: StageId) -> Option<&[f64]> {
        self.axes_w.get(stage.key()).map(|v| v.as_slice())
    }

    pub fn set_axis(&mut self, stage: StageId, values: Vec<f64>) {
        self.axes_w.insert(stage.key().to_string(), values);
    }
}

/// A parsed, validated measurement campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<MeasurementRecord>,
    pub meta: DatasetMeta,
}

const MANDATORY_BASES: [&str; 10] = [
    "q_pt1", "q_pt2", "q_stl", "q_cld", "q_mxc", "t_pt1", "t_pt2", "t_stl", "t_cld", "t_mxc",
];

struct ColumnPlan {
    /// (column index, SI factor) per mandatory base, in MANDATORY_BASES order.
    mandatory: Vec<(usize, f64)>,
    p_cond: Option<(usize, f64)>,
    p_still: Option<(usize, f64)>,
    flow: Option<(usize, f64)>,
    timestamp: Option<usize>,
    avg_window: Option<usize>,
    flags: Option<usize>,
    unknown: Vec<(usize, String)>,
}

fn plan_columns(headers: &[String]) -> Result<ColumnPlan> {
    let mut by_base: BTreeMap<String, (usize, Dimension, f64)> = BTreeMap::new();
    let mut timestamp = None;
    let mut avg_window = None;
    let mut flags = None;
    let mut unknown = Vec::new();

    for (idx, h) in headers.iter().enumerate() {
        let h = h.trim();
        match h {
            "timestamp_s" => timestamp = Some(idx),
            "avg_window_s" => avg_window = Some(idx),
            "flags" => flags = Some(idx),
            _ => match units::split_header(h) {
                Some((base, dim, factor)) => {
                    by_base.insert(base.to_string(), (idx, dim, factor));
                }
                None => unknown.push((idx, h.to_string())),
            },
        }
    }

    let mut mandatory = Vec::with_capacity(MANDATORY_BASES.len());
    for base in MANDATORY_BASES {
        let expected = if base.starts_with('q') {
            Dimension::Power
        } else {
            Dimension::Temperature
        };
        match by_base.get(base) {
            Some(&(idx, dim, factor)) if dim == expected => mandatory.push((idx, factor)),
            Some(_) => {
                return Err(Error::UnitDimension {
                    token: base.to_string(),
                })
            }
            None => return Err(Error::MissingColumn(base.to_string())),
        }
    }

    let optional = |base: &str, expected: Dimension| -> Result<Option<(usize, f64)>> {
        match by_base.get(base) {
            Some(&(idx, dim, factor)) if dim == expected => Ok(Some((idx, factor))),
            Some(_) => Err(Error::UnitDimension {
                token: base.to_string(),
            }),
            None => Ok(None),
        }
    };

    Ok(ColumnPlan {
        mandatory,
        p_cond: optional("p_cond", Dimension::Pressure)?,
        p_still: optional("p_still", Dimension::Pressure)?,
        flow: optional("flow", Dimension::MolarFlow)?,
        timestamp,
        avg_window,
        flags,
        unknown,
    })
}

fn parse_cell(row: usize, column: &str, text: &str) -> Result<f64> {
    let t = text.trim();
    t.parse::<f64>().map_err(|_| Error::BadNumber {
        row,
        column: column.to_string(),
        text: t.to_string(),
    })
}

/// Parse a campaign from its data table and metadata document.
///
/// The table is UTF-8 comma-delimited text with a header row; the metadata
/// document is TOML. All quantities come back in SI. Unknown table columns
/// are preserved in the metadata notes, row order is preserved.
pub fn parse_dataset(table: impl Read, metadata: &str) -> Result<Dataset> {
    let meta: DatasetMeta =
        toml::from_str(metadata).map_err(|e| Error::BadMetadata(e.to_string()))?;
    parse_table_with_meta(table, meta)
}

fn parse_table_with_meta(table: impl Read, mut meta: DatasetMeta) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(table);

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::BadMetadata(format!("table header: {e}")))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let plan = plan_columns(&headers)?;

    for (_, name) in &plan.unknown {
        meta.notes.push(format!("unparsed column preserved: {name}"));
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 2; // 1-based, after header
        let row = row.map_err(|e| Error::BadRecord {
            row: row_no,
            reason: e.to_string(),
        })?;
        let cell = |idx: usize| row.get(idx).unwrap_or("");

        let mut si = [0.0_f64; 10];
        for (k, (idx, factor)) in plan.mandatory.iter().enumerate() {
            si[k] = parse_cell(row_no, MANDATORY_BASES[k], cell(*idx))? * factor;
        }
        let applied = LoadVector::new(StageVec([si[0], si[1], si[2], si[3], si[4]])).ok_or(
            Error::BadRecord {
                row: row_no,
                reason: "load values must be finite and non-negative".to_string(),
            },
        )?;
        let temps = StageVec([si[5], si[6], si[7], si[8], si[9]]);

        let opt_si = |spec: &Option<(usize, f64)>, name: &str| -> Result<Option<f64>> {
            match spec {
                Some((idx, factor)) => {
                    let t = cell(*idx);
                    if t.trim().is_empty() {
                        Ok(None)
                    } else {
                        Ok(Some(parse_cell(row_no, name, t)? * factor))
                    }
                }
                None => Ok(None),
            }
        };

        let state = PlatformState {
            temps,
            p_condenser: opt_si(&plan.p_cond, "p_cond")?,
            p_still: opt_si(&plan.p_still, "p_still")?,
            flow: opt_si(&plan.flow, "flow")?,
        };
        if !state.temps_valid() {
            return Err(Error::BadRecord {
                row: row_no,
                reason: "temperatures must be finite and strictly positive".to_string(),
            });
        }

        let scalar = |idx: Option<usize>, name: &str| -> Result<Option<f64>> {
            match idx {
                Some(idx) if !cell(idx).trim().is_empty() => {
                    Ok(Some(parse_cell(row_no, name, cell(idx))?))
                }
                _ => Ok(None),
            }
        };
        let timestamp = scalar(plan.timestamp, "timestamp_s")?;
        let averaging_window = scalar(plan.avg_window, "avg_window_s")?;
        if let Some(w) = averaging_window {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::BadRecord {
                    row: row_no,
                    reason: format!("avg_window_s must be > 0, got {w}"),
                });
            }
        }

        let mut flags = Vec::new();
        if let Some(idx) = plan.flags {
            for token in cell(idx).split(';').filter(|t| !t.trim().is_empty()) {
                match RecordFlag::parse(token) {
                    Some(f) => {
                        if !flags.contains(&f) {
                            flags.push(f)
                        }
                    }
                    None => {
                        return Err(Error::BadRecord {
                            row: row_no,
                            reason: format!("unknown flag token `{token}`"),
                        })
                    }
                }
            }
            flags.sort();
        }

        records.push(MeasurementRecord {
            applied,
            state,
            timestamp,
            averaging_window,
            flags,
        });
    }

    let ds = Dataset { records, meta };
    ds.check_invariants()?;
    Ok(ds)
}

impl Dataset {
    /// Enforce the structural invariants: unique load vectors, uniform
    /// presence of optional fields, declared-axis membership.
    pub fn check_invariants(&self) -> Result<()> {
        // Duplicate detection by per-axis snap clustering, the same rule
        // the grid index applies, so a dataset that parses is guaranteed
        // to grid without node collisions. Plain sorted-adjacency would
        // miss near-duplicate pairs separated by an unrelated record.
        let mut snapped: Vec<[usize; StageId::COUNT]> =
            vec![[0; StageId::COUNT]; self.records.len()];
        for s in StageId::ALL {
            let mut values: Vec<(f64, usize)> = self
                .records
                .iter()
                .enumerate()
                .map(|(i, r)| (r.applied.get(s), i))
                .collect();
            values.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite loads"));
            let mut cluster = 0usize;
            let mut prev: Option<f64> = None;
            for (v, rec) in values {
                if let Some(p) = prev {
                    if (v - p).abs() > LoadVector::SNAP_TOLERANCE_W {
                        cluster += 1;
                    }
                }
                snapped[rec][s.index()] = cluster;
                prev = Some(v);
            }
        }
        let mut seen: std::collections::HashMap<[usize; StageId::COUNT], usize> =
            std::collections::HashMap::with_capacity(self.records.len());
        for (i, key) in snapped.iter().enumerate() {
            if let Some(&first) = seen.get(key) {
                return Err(Error::DuplicateLoadVector {
                    a: first + 2,
                    b: i + 2,
                });
            }
            seen.insert(*key, i);
        }

        if let Some(first) = self.records.first() {
            let shape = (
                first.state.p_condenser.is_some(),
                first.state.p_still.is_some(),
                first.state.flow.is_some(),
            );
            for (i, r) in self.records.iter().enumerate() {
                let rs = (
                    r.state.p_condenser.is_some(),
                    r.state.p_still.is_some(),
                    r.state.flow.is_some(),
                );
                if rs != shape {
                    return Err(Error::NonUniformOptionalFields { row: i + 2 });
                }
            }
        }

        for r in &self.records {
            for s in StageId::ALL {
                if let Some(axis) = self.meta.declared_axis(s) {
                    if !axis.is_empty()
                        && !axis
                            .iter()
                            .any(|v| (v - r.applied.get(s)).abs() <= LoadVector::SNAP_TOLERANCE_W)
                    {
                        return Err(Error::UndeclaredAxisValue {
                            stage: s,
                            value: r.applied.get(s),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Serialize the data table to canonical CSV (SI units, 17 significant
    /// digits so numeric fields round-trip bit-exactly).
    pub fn to_table_string(&self) -> String {
        let has_p_cond = self.records.iter().any(|r| r.state.p_condenser.is_some());
        let has_p_still = self.records.iter().any(|r| r.state.p_still.is_some());
        let has_flow = self.records.iter().any(|r| r.state.flow.is_some());
        let has_ts = self.records.iter().any(|r| r.timestamp.is_some());
        let has_avg = self.records.iter().any(|r| r.averaging_window.is_some());
        let has_flags = self.records.iter().any(|r| !r.flags.is_empty());

        let mut header: Vec<String> = MANDATORY_BASES
            .iter()
            .map(|b| {
                if b.starts_with('q') {
                    format!("{b}_W")
                } else {
                    format!("{b}_K")
                }
            })
            .collect();
        if has_p_cond {
            header.push("p_cond_Pa".into());
        }
        if has_p_still {
            header.push("p_still_Pa".into());
        }
        if has_flow {
            header.push("flow_mol_s".into());
        }
        if has_ts {
            header.push("timestamp_s".into());
        }
        if has_avg {
            header.push("avg_window_s".into());
        }
        if has_flags {
            header.push("flags".into());
        }

        let mut out = header.join(",");
        out.push('\n');
        for r in &self.records {
            let mut cells: Vec<String> = Vec::with_capacity(header.len());
            for s in StageId::ALL {
                cells.push(fmt_f64(r.applied.get(s)));
            }
            for s in StageId::ALL {
                cells.push(fmt_f64(r.state.temps[s]));
            }
            let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
            if has_p_cond {
                cells.push(opt(r.state.p_condenser));
            }
            if has_p_still {
                cells.push(opt(r.state.p_still));
            }
            if has_flow {
                cells.push(opt(r.state.flow));
            }
            if has_ts {
                cells.push(opt(r.timestamp));
            }
            if has_avg {
                cells.push(opt(r.averaging_window));
            }
            if has_flags {
                cells.push(
                    r.flags
                        .iter()
                        .map(|f| f.token())
                        .collect::<Vec<_>>()
                        .join(";"),
                );
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_metadata_string(&self) -> String {
        toml::to_string_pretty(&self.meta).expect("metadata serializes")
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// 17 significant digits: enough to reproduce any `f64` exactly.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Outcome of a drift correction pass.
#[derive(Debug, Clone)]
pub struct DriftCorrection {
    pub dataset: Dataset,
    /// Records that already carried a DRIFT_CORRECTED flag before this pass.
    /// Applying a correction twice doubles it, so callers should look here.
    pub previously_corrected: usize,
}

impl fmt::Display for DriftCorrection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "drift correction applied to {} records ({} were already flagged as corrected)",
            self.dataset.records.len(),
            self.previously_corrected
        )
    }
}

/// Remove a linear temperature drift from one stage.
///
/// Every record's temperature on `stage` becomes `T - rate * (t - reference_time)`.
/// The correction is not idempotent; records that were already flagged are
/// counted in the returned report.
pub fn correct_drift(
    d: &Dataset,
    stage: StageId,
    rate_k_per_s: f64,
    reference_time_s: f64,
) -> Result<DriftCorrection> {
    if !rate_k_per_s.is_finite() {
        return Err(Error::BadRecord {
            row: 0,
            reason: format!("drift rate must be finite, got {rate_k_per_s}"),
        });
    }
    for (i, r) in d.records.iter().enumerate() {
        if r.timestamp.is_none() {
            return Err(Error::MissingTimestamp { row: i + 2 });
        }
    }
    let previously_corrected = d
        .records
        .iter()
        .filter(|r| r.has_flag(RecordFlag::DriftCorrected))
        .count();

    let mut out = d.clone();
    for r in &mut out.records {
        let t = r.timestamp.expect("checked above");
        r.state.temps[stage] -= rate_k_per_s * (t - reference_time_s);
        r.push_flag(RecordFlag::DriftCorrected);
    }
    Ok(DriftCorrection {
        dataset: out,
        previously_corrected,
    })
}
