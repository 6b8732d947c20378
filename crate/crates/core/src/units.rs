//! Unit tokens for file column headers.
//!
//! Internal quantities are strict SI (W, K, Pa, mol/s, m, s). File columns
//! declare their unit in the header name (`q_stl_mW`, `t_mxc_mK`, ...) and
//! are converted on ingestion; anything else is rejected rather than guessed.

use crate::error::{Error, Result};

/// Physical dimension a unit token belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Power,
    Temperature,
    Pressure,
    MolarFlow,
}

/// Accepted unit tokens, with their SI scale factor.
pub const ACCEPTED: &[(&str, Dimension, f64)] = &[
    ("W", Dimension::Power, 1.0),
    ("mW", Dimension::Power, 1e-3),
    ("uW", Dimension::Power, 1e-6),
    ("nW", Dimension::Power, 1e-9),
    ("K", Dimension::Temperature, 1.0),
    ("mK", Dimension::Temperature, 1e-3),
    ("Pa", Dimension::Pressure, 1.0),
    ("mbar", Dimension::Pressure, 100.0),
    ("mol_s", Dimension::MolarFlow, 1.0),
    ("mmol_s", Dimension::MolarFlow, 1e-3),
];

/// Look up a unit token (case-sensitive, as written in headers).
pub fn lookup(token: &str) -> Option<(Dimension, f64)> {
    ACCEPTED
        .iter()
        .find(|(t, _, _)| *t == token)
        .map(|(_, d, f)| (*d, *f))
}

/// Split a column header of the form `<base>_<unit>` where `<unit>` is an
/// accepted token. Tokens containing underscores (`mol_s`) are matched
/// longest-first so `flow_mol_s` splits as (`flow`, `mol_s`).
pub fn split_header(header: &str) -> Option<(&str, Dimension, f64)> {
    let mut tokens: Vec<&(&str, Dimension, f64)> = ACCEPTED.iter().collect();
    tokens.sort_by_key(|(t, _, _)| std::cmp::Reverse(t.len()));
    for (token, dim, factor) in tokens {
        if let Some(base) = header.strip_suffix(token) {
            if let Some(base) = base.strip_suffix('_') {
                if !base.is_empty() {
                    return Some((base, *dim, *factor));
                }
            }
        }
    }
    None
}

/// Convert a value in the given unit to SI, checking the expected dimension.
pub fn to_si(value: f64, token: &str, expected: Dimension) -> Result<f64> {
    match lookup(token) {
        Some((dim, factor)) if dim == expected => Ok(value * factor),
        Some(_) => Err(Error::UnitDimension {
            token: token.to_string(),
        }),
        None => Err(Error::UnknownUnit {
            token: token.to_string(),
        }),
    }
}
