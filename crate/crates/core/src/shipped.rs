//! Data shipped with the crate: material conductivity tables, SC219-class
//! cable geometries, the validation payload and default limits.
//!
//! Everything here is embedded from the `data/` directory so the library
//! works without any filesystem layout; the same files are readable (and
//! overridable) on disk for users bringing their own materials or cables.

use crate::cable::{CableModel, NodeTemps};
use crate::error::{Error, Result};
use crate::limits::OperationalLimits;
use crate::material::MaterialCurve;
use crate::payload::PayloadSpec;
use crate::state::StageVec;
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

const MATERIAL_FILES: &[&str] = &[
    include_str!("../data/materials/stainless_steel_304.csv"),
    include_str!("../data/materials/ptfe.csv"),
    include_str!("../data/materials/cupronickel.csv"),
    include_str!("../data/materials/niobium_titanium.csv"),
    include_str!("../data/materials/sc219_ss_manufacturer.csv"),
    include_str!("../data/materials/sc219_cn_manufacturer.csv"),
    include_str!("../data/materials/sc219_nbti_manufacturer.csv"),
];

const CABLE_FILES: &[&str] = &[
    include_str!("../data/cables/sc219_ss.toml"),
    include_str!("../data/cables/sc219_cn.toml"),
    include_str!("../data/cables/sc219_nbti.toml"),
];

pub const VALIDATION_PAYLOAD_TOML: &str = include_str!("../data/payloads/validation_io.toml");
pub const DEFAULT_LIMITS_TOML: &str = include_str!("../data/limits/default_limits.toml");
pub const OBSERVED_TEMPS_EXAMPLE: &str = include_str!("../data/examples/observed_temps.csv");

/// Material curves and cable models available for payload computations.
#[derive(Debug, Clone, Default)]
pub struct Library {
    pub materials: BTreeMap<String, MaterialCurve>,
    pub cables: BTreeMap<String, CableModel>,
}

impl Library {
    /// The built-in library.
    pub fn shipped() -> &'static Library {
        static LIB: OnceLock<Library> = OnceLock::new();
        LIB.get_or_init(|| {
            let mut lib = Library::default();
            for text in MATERIAL_FILES {
                let curve = MaterialCurve::parse_csv(text).expect("shipped curve parses");
                lib.materials.insert(curve.name.clone(), curve);
            }
            for text in CABLE_FILES {
                let cable = CableModel::parse_toml(text).expect("shipped cable parses");
                lib.cables.insert(cable.name.clone(), cable);
            }
            lib
        })
    }

    /// Merge curves (`*.csv`) and cables (`*.toml`) from a directory tree
    /// on top of this library. Later entries override earlier ones by name.
    pub fn load_dir(&mut self, dir: &Path) -> Result<()> {
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d)? {
                let path = entry?.path();
                if path.is_dir() {
                    stack.push(path);
                } else if path.extension().is_some_and(|e| e == "csv") {
                    let text = std::fs::read_to_string(&path)?;
                    if text.lines().any(|l| l.trim() == "T_K,k_W_mK") {
                        let curve = MaterialCurve::parse_csv(&text)?;
                        self.materials.insert(curve.name.clone(), curve);
                    }
                } else if path.extension().is_some_and(|e| e == "toml") {
                    let text = std::fs::read_to_string(&path)?;
                    if text.contains("[[elements]]") {
                        let cable = CableModel::parse_toml(&text)?;
                        self.cables.insert(cable.name.clone(), cable);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn material(&self, name: &str) -> Result<&MaterialCurve> {
        self.materials
            .get(name)
            .ok_or_else(|| Error::BadMaterialCurve {
                name: name.to_string(),
                reason: "not in the material library".to_string(),
            })
    }

    pub fn cable(&self, name: &str) -> Result<&CableModel> {
        self.cables.get(name).ok_or_else(|| Error::BadPayload(format!(
            "cable `{name}` not in the library (available: {})",
            self.cables.keys().cloned().collect::<Vec<_>>().join(", ")
        )))
    }
}

/// The shipped 64-input / 24-output validation payload.
pub fn validation_payload() -> PayloadSpec {
    PayloadSpec::parse_toml(VALIDATION_PAYLOAD_TOML).expect("shipped payload parses")
}

/// Default operational limits (still 1.1 K, mixing chamber 30 mK).
pub fn default_limits() -> OperationalLimits {
    toml::from_str(DEFAULT_LIMITS_TOML).expect("shipped limits parse")
}

/// Representative design-point stage temperatures used for standalone cable
/// comparisons (ambient 295 K; stages at typical unloaded values).
pub fn design_temps() -> NodeTemps {
    NodeTemps {
        ambient_k: 295.0,
        stages: StageVec([33.0, 3.3, 0.75, 0.09, 0.0075]),
    }
}
