//! Payload specifications and per-stage heat-load aggregation.
//!
//! A payload is a set of cable runs (cable type, span of stages, lengths,
//! count, coupling configuration, data source) plus active dissipated
//! loads. Aggregation computes every segment's conduction load at the given
//! endpoint temperatures and deposits it entirely on the segment's cold
//! stage; there is no hot-side relief accounting, matching how stage
//! budgets are drawn up.

use crate::cable::{
    decompose_cable, links_load, ConductivitySource, CouplingConfig, ElementRole, NodeTemps,
};
use crate::error::{Error, Result};
use crate::shipped::Library;
use crate::stage::{Node, StageId};
use crate::state::{LoadVector, StageVec};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One cable run: `count` identical cables over a span of stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CableRun {
    /// Cable type name in the library.
    pub cable: String,
    /// Ordered warm-to-cold node list; only the first may be AMBIENT.
    pub span: Vec<Node>,
    /// Physical length of each span segment (m); one entry per segment.
    pub lengths_m: Vec<f64>,
    pub count: usize,
    pub coupling: CouplingConfig,
    #[serde(default = "default_source")]
    pub source: ConductivitySource,
}

fn default_source() -> ConductivitySource {
    ConductivitySource::Material
}

impl CableRun {
    fn validate(&self) -> Result<()> {
        if self.count < 1 {
            return Err(Error::BadPayload(format!(
                "run of `{}`: count must be >= 1",
                self.cable
            )));
        }
        if self.span.len() < 2 {
            return Err(Error::BadPayload(format!(
                "run of `{}`: span needs at least two nodes",
                self.cable
            )));
        }
        for pair in self.span.windows(2) {
            if !pair[0].warmer_than(pair[1]) {
                return Err(Error::BadPayload(format!(
                    "run of `{}`: span must be strictly warm to cold ({} before {})",
                    self.cable, pair[0], pair[1]
                )));
            }
        }
        if self.lengths_m.len() != self.span.len() - 1 {
            return Err(Error::BadPayload(format!(
                "run of `{}`: {} lengths for {} segments",
                self.cable,
                self.lengths_m.len(),
                self.span.len() - 1
            )));
        }
        if self.lengths_m.iter().any(|l| !l.is_finite() || *l <= 0.0) {
            return Err(Error::BadPayload(format!(
                "run of `{}`: segment lengths must be positive",
                self.cable
            )));
        }
        if self.coupling == CouplingConfig::OuterOnlyThermalized
            && self.source != ConductivitySource::Material
        {
            return Err(Error::BadPayload(format!(
                "run of `{}`: outer_only_thermalized needs element-level material data, \
                 not a manufacturer composite",
                self.cable
            )));
        }
        Ok(())
    }

    fn segments(&self) -> Vec<(Node, StageId, f64)> {
        self.span
            .windows(2)
            .zip(&self.lengths_m)
            .map(|(pair, &len)| {
                let cold = pair[1]
                    .as_stage()
                    .expect("validated: only the first node may be ambient");
                (pair[0], cold, len)
            })
            .collect()
    }
}

/// A full payload: cable runs and active per-stage dissipation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadSpec {
    pub name: String,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default)]
    pub runs: Vec<CableRun>,
    /// Active dissipated power per stage (W), e.g. powered amplifiers.
    #[serde(default)]
    pub active_loads_w: BTreeMap<StageId, f64>,
}

impl PayloadSpec {
    pub fn empty(name: impl Into<String>) -> PayloadSpec {
        PayloadSpec {
            name: name.into(),
            notes: vec![],
            runs: vec![],
            active_loads_w: BTreeMap::new(),
        }
    }

    pub fn active_load_vector(&self) -> Result<LoadVector> {
        let mut v = StageVec::default();
        for (&s, &w) in &self.active_loads_w {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::BadPayload(format!(
                    "active load on {s} must be finite and non-negative, got {w}"
                )));
            }
            v[s] = w;
        }
        Ok(LoadVector(v))
    }

    pub fn validate(&self) -> Result<()> {
        for run in &self.runs {
            run.validate()?;
        }
        self.active_load_vector()?;
        Ok(())
    }

    pub fn parse_toml(text: &str) -> Result<PayloadSpec> {
        let spec: PayloadSpec =
            toml::from_str(text).map_err(|e| Error::BadPayload(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("payload specs serialize")
    }
}

/// Aggregate the payload's total heat load per stage at the given stage
/// temperatures.
///
/// Each segment's full conduction load lands on its cold endpoint.
/// CONTINUOUS_SPAN collapses the span to a single link from the first to
/// the last node; OUTER_ONLY_THERMALIZED splits the treatment by element
/// role. Sums run in fixed order so results are bit-reproducible.
pub fn aggregate_loads(
    p: &PayloadSpec,
    lib: &Library,
    stage_temps: &StageVec,
    ambient_t_k: f64,
) -> Result<LoadVector> {
    p.validate()?;
    if !ambient_t_k.is_finite() || ambient_t_k <= stage_temps[StageId::Pt1] {
        return Err(Error::BadPayload(format!(
            "ambient temperature {ambient_t_k} K must exceed the PT1 temperature {} K",
            stage_temps[StageId::Pt1]
        )));
    }
    let temps = NodeTemps {
        ambient_k: ambient_t_k,
        stages: *stage_temps,
    };

    let mut totals = StageVec::default();
    for run in &p.runs {
        let cable = lib.cable(&run.cable)?;
        let count = run.count as f64;
        let segments = run.segments();
        let whole_span = || -> (Node, StageId, f64) {
            let first = run.span[0];
            let last = run.span.last().unwrap().as_stage().unwrap();
            (first, last, run.lengths_m.iter().sum())
        };

        match run.coupling {
            CouplingConfig::ThermalizedPerStage => {
                for (hot, cold, len) in segments {
                    let links =
                        decompose_cable(cable, &lib.materials, hot, cold, len, run.source)?;
                    let q = links_load(&links, temps.get(hot), temps.get(Node::Stage(cold)))?;
                    totals[cold] += count * q;
                }
            }
            CouplingConfig::ContinuousSpan => {
                let (first, last, total_len) = whole_span();
                let links =
                    decompose_cable(cable, &lib.materials, first, last, total_len, run.source)?;
                let q = links_load(&links, temps.get(first), temps.get(Node::Stage(last)))?;
                totals[last] += count * q;
            }
            CouplingConfig::OuterOnlyThermalized => {
                // Outer conductor: broken at every stage.
                let outer: Vec<_> = cable
                    .elements
                    .iter()
                    .filter(|e| e.role == ElementRole::Outer)
                    .cloned()
                    .collect();
                let through: Vec<_> = cable
                    .elements
                    .iter()
                    .filter(|e| e.role != ElementRole::Outer)
                    .cloned()
                    .collect();
                if outer.is_empty() || through.is_empty() {
                    return Err(Error::BadPayload(format!(
                        "run of `{}`: outer_only_thermalized needs both an outer conductor \
                         and inner/dielectric elements",
                        cable.name
                    )));
                }
                for (hot, cold, len) in &segments {
                    for e in &outer {
                        let curve = lib.material(&e.material)?;
                        let link = crate::conduction::ConductorLink::new(
                            curve.clone(),
                            e.area_m2,
                            *len,
                            *hot,
                            *cold,
                        )?;
                        let q = crate::conduction::conduction_load(
                            &link,
                            temps.get(*hot),
                            temps.get(Node::Stage(*cold)),
                        )?;
                        totals[*cold] += count * q;
                    }
                }
                let (first, last, total_len) = whole_span();
                for e in &through {
                    let curve = lib.material(&e.material)?;
                    let link = crate::conduction::ConductorLink::new(
                        curve.clone(),
                        e.area_m2,
                        total_len,
                        first,
                        last,
                    )?;
                    let q = crate::conduction::conduction_load(
                        &link,
                        temps.get(first),
                        temps.get(Node::Stage(last)),
                    )?;
                    totals[last] += count * q;
                }
            }
        }
    }

    let active = p.active_load_vector()?;
    Ok(LoadVector(totals) + active)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shipped;

    fn base_temps() -> StageVec {
        StageVec([33.0, 3.3, 0.75, 0.09, 0.0075])
    }

    #[test]
    fn empty_payload_aggregates_to_zero() {
        let lib = shipped::Library::shipped();
        let q = aggregate_loads(
            &PayloadSpec::empty("nothing"),
            lib,
            &base_temps(),
            295.0,
        )
        .unwrap();
        assert_eq!(q, LoadVector::ZERO);
    }

    #[test]
    fn thermalized_run_deposits_per_segment_independently() {
        let lib = shipped::Library::shipped();
        let run = CableRun {
            cable: "SC219-SS".to_string(),
            span: vec![Node::Ambient, Node::Stage(StageId::Pt1), Node::Stage(StageId::Pt2)],
            lengths_m: vec![0.134, 0.134],
            count: 1,
            coupling: CouplingConfig::ThermalizedPerStage,
            source: ConductivitySource::Material,
        };
        let mut p = PayloadSpec::empty("two-segment");
        p.runs.push(run);
        let q = aggregate_loads(&p, lib, &base_temps(), 295.0).unwrap();

        // Each segment is an independent computation: PT1 receives the
        // ambient->PT1 load, PT2 the PT1->PT2 load, nothing else.
        let cable = lib.cable("SC219-SS").unwrap();
        let temps = NodeTemps {
            ambient_k: 295.0,
            stages: base_temps(),
        };
        let seg1 = links_load(
            &decompose_cable(cable, &lib.materials, Node::Ambient, StageId::Pt1, 0.134, ConductivitySource::Material).unwrap(),
            temps.ambient_k,
            temps.stages[StageId::Pt1],
        )
        .unwrap();
        let seg2 = links_load(
            &decompose_cable(cable, &lib.materials, Node::Stage(StageId::Pt1), StageId::Pt2, 0.134, ConductivitySource::Material).unwrap(),
            temps.stages[StageId::Pt1],
            temps.stages[StageId::Pt2],
        )
        .unwrap();
        assert_eq!(q.get(StageId::Pt1), seg1);
        assert_eq!(q.get(StageId::Pt2), seg2);
        assert_eq!(q.get(StageId::Stl), 0.0);
    }

    #[test]
    fn continuous_span_deposits_only_on_the_last_stage() {
        let lib = shipped::Library::shipped();
        let mut p = PayloadSpec::empty("continuous");
        p.runs.push(CableRun {
            cable: "SC219-NbTi".to_string(),
            span: vec![
                Node::Stage(StageId::Pt2),
                Node::Stage(StageId::Stl),
                Node::Stage(StageId::Cld),
                Node::Stage(StageId::Mxc),
            ],
            lengths_m: vec![0.173, 0.171, 0.246],
            count: 1,
            coupling: CouplingConfig::ContinuousSpan,
            source: ConductivitySource::Material,
        });
        let q = aggregate_loads(&p, lib, &base_temps(), 295.0).unwrap();
        assert_eq!(q.get(StageId::Stl), 0.0);
        assert_eq!(q.get(StageId::Cld), 0.0);
        assert!(q.get(StageId::Mxc) > 0.0);
    }

    #[test]
    fn outer_only_splits_by_role() {
        let lib = shipped::Library::shipped();
        let mut p = PayloadSpec::empty("outer-only");
        p.runs.push(CableRun {
            cable: "SC219-NbTi".to_string(),
            span: vec![
                Node::Stage(StageId::Pt2),
                Node::Stage(StageId::Stl),
                Node::Stage(StageId::Mxc),
            ],
            lengths_m: vec![0.173, 0.417],
            count: 1,
            coupling: CouplingConfig::OuterOnlyThermalized,
            source: ConductivitySource::Material,
        });
        let q = aggregate_loads(&p, lib, &base_temps(), 295.0).unwrap();
        // Outer deposits at STL and MXC; inner+dielectric only at MXC.
        assert!(q.get(StageId::Stl) > 0.0);
        assert!(q.get(StageId::Mxc) > 0.0);
        // Manufacturer source cannot express this split.
        let mut bad = p.clone();
        bad.runs[0].source = ConductivitySource::Manufacturer;
        assert!(aggregate_loads(&bad, lib, &base_temps(), 295.0).is_err());
    }

    #[test]
    fn active_loads_add_to_passive() {
        let lib = shipped::Library::shipped();
        let mut p = PayloadSpec::empty("lnas");
        p.active_loads_w.insert(StageId::Pt2, 0.024);
        let q = aggregate_loads(&p, lib, &base_temps(), 295.0).unwrap();
        assert_eq!(q.get(StageId::Pt2), 0.024);
    }

    #[test]
    fn ambient_must_exceed_pt1() {
        let lib = shipped::Library::shipped();
        let err = aggregate_loads(&PayloadSpec::empty("x"), lib, &base_temps(), 20.0).unwrap_err();
        assert!(matches!(err, Error::BadPayload(_)));
    }

    #[test]
    fn spec_toml_roundtrip() {
        let p = shipped::validation_payload();
        let text = p.to_toml();
        let back = PayloadSpec::parse_toml(&text).unwrap();
        assert_eq!(back, p);
    }
}
