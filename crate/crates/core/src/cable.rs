//! Cable models: decomposition of mixed-material coaxial interconnects into
//! parallel single-material links, and comparison of reference-data versus
//! manufacturer-data load estimates.

use crate::conduction::{conduction_load, ConductorLink};
use crate::error::{Error, Result};
use crate::material::MaterialCurve;
use crate::stage::{Node, StageId};
use crate::state::StageVec;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Constituent of a coaxial cable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementRole {
    Inner,
    Dielectric,
    Outer,
}

/// One cable element: a material reference and its effective cross-section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CableElement {
    pub role: ElementRole,
    /// Material curve name in the library.
    pub material: String,
    pub area_m2: f64,
}

/// Manufacturer whole-cable data: an effective conductivity curve paired
/// with the composite cross-section it applies to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManufacturerData {
    /// Effective-curve name in the library (a MANUFACTURER-source curve).
    pub curve: String,
    pub area_m2: f64,
}

/// A cable type: element decomposition plus optional manufacturer curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CableModel {
    pub name: String,
    #[serde(default)]
    pub note: String,
    pub elements: Vec<CableElement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manufacturer: Option<ManufacturerData>,
}

impl CableModel {
    pub fn validate(&self) -> Result<()> {
        if self.elements.is_empty() {
            return Err(Error::BadPayload(format!(
                "cable `{}` has no elements",
                self.name
            )));
        }
        if self.elements.iter().any(|e| !e.area_m2.is_finite() || e.area_m2 <= 0.0) {
            return Err(Error::BadPayload(format!(
                "cable `{}` has a non-positive element area",
                self.name
            )));
        }
        Ok(())
    }

    pub fn parse_toml(text: &str) -> Result<CableModel> {
        let cable: CableModel =
            toml::from_str(text).map_err(|e| Error::BadPayload(e.to_string()))?;
        cable.validate()?;
        Ok(cable)
    }
}

/// Which conductivity data to use when computing cable loads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConductivitySource {
    Material,
    Manufacturer,
}

/// Where a cable run exchanges heat with the stages it passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingConfig {
    /// Broken at every intermediate stage: each span segment is an
    /// independent link set depositing on its cold end.
    ThermalizedPerStage,
    /// A single link from the first to the last stage of the span; nothing
    /// deposits at intermediate stages.
    ContinuousSpan,
    /// The outer conductor thermalizes per stage; inner conductor and
    /// dielectric run continuous. Requires element-level material data.
    OuterOnlyThermalized,
}

/// Temperatures of every thermal node, ambient included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeTemps {
    pub ambient_k: f64,
    pub stages: StageVec,
}

impl NodeTemps {
    pub fn get(&self, n: Node) -> f64 {
        match n {
            Node::Ambient => self.ambient_k,
            Node::Stage(s) => self.stages[s],
        }
    }
}

fn lookup<'a>(
    materials: &'a BTreeMap<String, MaterialCurve>,
    name: &str,
    cable: &str,
) -> Result<&'a MaterialCurve> {
    materials.get(name).ok_or_else(|| Error::MissingCableData {
        cable: cable.to_string(),
        side: format!("material curve `{name}`"),
    })
}

/// Decompose a cable over one span segment into parallel links.
///
/// Material mode yields one link per element; manufacturer mode yields a
/// single composite link. Requesting a mode with no data is an error.
pub fn decompose_cable(
    cable: &CableModel,
    materials: &BTreeMap<String, MaterialCurve>,
    hot: Node,
    cold: StageId,
    length_m: f64,
    source: ConductivitySource,
) -> Result<Vec<ConductorLink>> {
    cable.validate()?;
    match source {
        ConductivitySource::Material => cable
            .elements
            .iter()
            .map(|e| {
                let curve = lookup(materials, &e.material, &cable.name)?;
                ConductorLink::new(curve.clone(), e.area_m2, length_m, hot, cold)
            })
            .collect(),
        ConductivitySource::Manufacturer => {
            let data = cable
                .manufacturer
                .as_ref()
                .ok_or_else(|| Error::MissingCableData {
                    cable: cable.name.clone(),
                    side: "manufacturer".to_string(),
                })?;
            let curve = lookup(materials, &data.curve, &cable.name)?;
            Ok(vec![ConductorLink::new(
                curve.clone(),
                data.area_m2,
                length_m,
                hot,
                cold,
            )?])
        }
    }
}

/// Total load of a link set at the given endpoint temperatures.
pub fn links_load(links: &[ConductorLink], t_hot: f64, t_cold: f64) -> Result<f64> {
    links
        .iter()
        .map(|l| conduction_load(l, t_hot, t_cold))
        .sum()
}

/// One row of a source-comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub hot: Node,
    pub cold: StageId,
    pub length_m: f64,
    pub manufacturer_w: f64,
    pub material_w: f64,
}

/// Per-span, per-source load-per-wire comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub cable: String,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("hot,cold,length_m,manufacturer_W,material_W\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:e},{:e}\n",
                r.hot, r.cold, r.length_m, r.manufacturer_w, r.material_w
            ));
        }
        out
    }
}

/// Compute per-wire loads from both data sources over a list of spans.
/// Requires the cable to carry both manufacturer and material data.
pub fn compare_sources(
    cable: &CableModel,
    materials: &BTreeMap<String, MaterialCurve>,
    spans: &[(Node, StageId, f64)],
    temps: &NodeTemps,
) -> Result<ComparisonTable> {
    let mut rows = Vec::with_capacity(spans.len());
    for &(hot, cold, length_m) in spans {
        let material_links =
            decompose_cable(cable, materials, hot, cold, length_m, ConductivitySource::Material)?;
        let manufacturer_links = decompose_cable(
            cable,
            materials,
            hot,
            cold,
            length_m,
            ConductivitySource::Manufacturer,
        )?;
        let t_hot = temps.get(hot);
        let t_cold = temps.get(Node::Stage(cold));
        rows.push(ComparisonRow {
            hot,
            cold,
            length_m,
            manufacturer_w: links_load(&manufacturer_links, t_hot, t_cold)?,
            material_w: links_load(&material_links, t_hot, t_cold)?,
        });
    }
    Ok(ComparisonTable {
        cable: cable.name.clone(),
        rows,
    })
}
