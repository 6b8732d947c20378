//! Refrigerator stage identifiers and conduction endpoints.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// The five temperature stages of the platform, ordered warm to cold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageId {
    /// First pulse-tube stage (~35-45 K).
    Pt1,
    /// Second pulse-tube stage (~3-4 K).
    Pt2,
    /// Still (~0.7-1.1 K).
    Stl,
    /// Cold plate (~80-200 mK).
    Cld,
    /// Mixing chamber (~7-40 mK).
    Mxc,
}

impl StageId {
    pub const ALL: [StageId; 5] = [
        StageId::Pt1,
        StageId::Pt2,
        StageId::Stl,
        StageId::Cld,
        StageId::Mxc,
    ];

    pub const COUNT: usize = 5;

    /// Position in warm-to-cold order (PT1 = 0 ... MXC = 4).
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<StageId> {
        StageId::ALL.get(i).copied()
    }

    /// Lower-case short name used in file column headers (`pt1`, `stl`, ...).
    pub fn key(self) -> &'static str {
        match self {
            StageId::Pt1 => "pt1",
            StageId::Pt2 => "pt2",
            StageId::Stl => "stl",
            StageId::Cld => "cld",
            StageId::Mxc => "mxc",
        }
    }

    /// Display name (`PT1`, `STL`, ...).
    pub fn name(self) -> &'static str {
        match self {
            StageId::Pt1 => "PT1",
            StageId::Pt2 => "PT2",
            StageId::Stl => "STL",
            StageId::Cld => "CLD",
            StageId::Mxc => "MXC",
        }
    }

    /// True if `self` is strictly warmer than `other` in the stage order.
    pub fn warmer_than(self, other: StageId) -> bool {
        self.index() < other.index()
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StageId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pt1" => Ok(StageId::Pt1),
            "pt2" => Ok(StageId::Pt2),
            "stl" | "still" => Ok(StageId::Stl),
            "cld" | "cp" | "coldplate" | "cold_plate" => Ok(StageId::Cld),
            "mxc" | "mc" => Ok(StageId::Mxc),
            other => Err(format!("unknown stage `{other}`")),
        }
    }
}

/// A thermal node a conduction link can attach to: a stage, or the fixed
/// room-temperature ambient. Ambient is never a map axis; it only serves as
/// the hot endpoint of payload spans.
///
/// Serializes as a plain lowercase string (`"ambient"`, `"pt1"`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    Ambient,
    Stage(StageId),
}

impl Serialize for Node {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Node::Ambient => serializer.serialize_str("ambient"),
            Node::Stage(s) => serializer.serialize_str(s.key()),
        }
    }
}

impl<'de> Deserialize<'de> for Node {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Node {
    /// Order index with ambient warmer than every stage.
    fn order(self) -> usize {
        match self {
            Node::Ambient => 0,
            Node::Stage(s) => 1 + s.index(),
        }
    }

    pub fn warmer_than(self, other: Node) -> bool {
        self.order() < other.order()
    }

    pub fn as_stage(self) -> Option<StageId> {
        match self {
            Node::Ambient => None,
            Node::Stage(s) => Some(s),
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Ambient => f.write_str("AMBIENT"),
            Node::Stage(s) => write!(f, "{s}"),
        }
    }
}

impl FromStr for Node {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ambient" | "amb" | "rt" | "room" => Ok(Node::Ambient),
            other => other.parse::<StageId>().map(Node::Stage),
        }
    }
}
