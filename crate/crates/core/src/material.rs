//! Temperature-dependent thermal conductivity curves.
//!
//! Curves are tabulated (T, k) pairs. Inside the table the lookup is
//! piecewise log-log linear, the standard representation for conductivity
//! data spanning decades. Below the lowest tabulated point the curve
//! extrapolates linearly through the two lowest points, floored at zero,
//! because sub-kelvin reference data is generally unavailable. Above the
//! table maximum there is no extrapolation: that is an error.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Where a curve's numbers come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveSource {
    /// Reference data for the constituent material itself.
    MaterialReference,
    /// Manufacturer-supplied effective data for a composite part.
    Manufacturer,
}

impl CurveSource {
    pub fn token(self) -> &'static str {
        match self {
            CurveSource::MaterialReference => "MATERIAL_REFERENCE",
            CurveSource::Manufacturer => "MANUFACTURER",
        }
    }

    pub fn parse(s: &str) -> Option<CurveSource> {
        match s.trim() {
            "MATERIAL_REFERENCE" => Some(CurveSource::MaterialReference),
            "MANUFACTURER" => Some(CurveSource::Manufacturer),
            _ => None,
        }
    }
}

/// Low-side extrapolation descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationPolicy {
    /// Temperature below which the linear rule applies (the table minimum).
    pub below_k: f64,
    /// The extrapolation line crosses zero here; k = 0 for 0 < T <= this.
    pub zero_at_k: f64,
}

/// A named conductivity curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialCurve {
    pub name: String,
    /// (T in K, k in W/(m K)); T strictly increasing, k finite and >= 0.
    pub points: Vec<(f64, f64)>,
    pub source: CurveSource,
    pub note: String,
}

impl MaterialCurve {
    pub fn new(
        name: impl Into<String>,
        points: Vec<(f64, f64)>,
        source: CurveSource,
        note: impl Into<String>,
    ) -> Result<MaterialCurve> {
        let name = name.into();
        if points.len() < 2 {
            return Err(Error::BadMaterialCurve {
                name,
                reason: "need at least 2 points".to_string(),
            });
        }
        for w in points.windows(2) {
            if !(w[0].0 > 0.0 && w[1].0 > w[0].0) {
                return Err(Error::BadMaterialCurve {
                    name,
                    reason: "temperatures must be positive and strictly increasing".to_string(),
                });
            }
        }
        if points.iter().any(|(_, k)| !k.is_finite() || *k < 0.0) {
            return Err(Error::BadMaterialCurve {
                name,
                reason: "conductivities must be finite and non-negative".to_string(),
            });
        }
        Ok(MaterialCurve {
            name,
            points,
            source,
            note: note.into(),
        })
    }

    pub fn t_min(&self) -> f64 {
        self.points[0].0
    }

    pub fn t_max(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }

    /// The low-side linear rule through the two lowest tabulated points.
    fn low_side_line(&self) -> (f64, f64) {
        let (t0, k0) = self.points[0];
        let (t1, k1) = self.points[1];
        let slope = (k1 - k0) / (t1 - t0);
        (slope, k0 - slope * t0) // k = slope*T + intercept
    }

    pub fn extrapolation_policy(&self) -> ExtrapolationPolicy {
        let (slope, intercept) = self.low_side_line();
        let zero_at = if slope > 0.0 && intercept < 0.0 {
            -intercept / slope
        } else {
            0.0
        };
        ExtrapolationPolicy {
            below_k: self.t_min(),
            zero_at_k: zero_at.min(self.t_min()),
        }
    }

    /// Conductivity at temperature `t` (K). Errors above the table maximum
    /// and at non-positive temperatures.
    pub fn conductivity(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::NonPositiveTemperature { t });
        }
        if t > self.t_max() {
            return Err(Error::AboveTableRange {
                name: self.name.clone(),
                t,
                t_max: self.t_max(),
            });
        }
        Ok(self.eval_in_range(t))
    }

    /// Lookup assuming `0 < t <= t_max` (checked by callers).
    pub(crate) fn eval_in_range(&self, t: f64) -> f64 {
        if t < self.t_min() {
            let (slope, intercept) = self.low_side_line();
            return (slope * t + intercept).max(0.0);
        }
        // Bracketing segment by binary search on T.
        let i = self
            .points
            .partition_point(|(pt, _)| *pt <= t)
            .clamp(1, self.points.len() - 1)
            - 1;
        let (t0, k0) = self.points[i];
        let (t1, k1) = self.points[i + 1];
        if t == t0 {
            return k0;
        }
        if t == t1 {
            return k1;
        }
        if k0 > 0.0 && k1 > 0.0 {
            // log-log linear
            let m = (k1.ln() - k0.ln()) / (t1.ln() - t0.ln());
            (k0.ln() + m * (t.ln() - t0.ln())).exp()
        } else {
            // linear fallback for segments touching zero
            k0 + (k1 - k0) * (t - t0) / (t1 - t0)
        }
    }

    /// Parse the delimited curve file format: `#` comment lines carrying
    /// `material:`, `source:` and `note:` keys, a `T_K,k_W_mK` header and
    /// data rows.
    pub fn parse_csv(text: &str) -> Result<MaterialCurve> {
        let mut name = String::new();
        let mut source = CurveSource::MaterialReference;
        let mut note = String::new();
        let mut points = Vec::new();
        let mut saw_header = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(v) = comment.strip_prefix("material:") {
                    name = v.trim().to_string();
                } else if let Some(v) = comment.strip_prefix("source:") {
                    source = CurveSource::parse(v).ok_or_else(|| Error::BadMaterialCurve {
                        name: name.clone(),
                        reason: format!("unknown source label `{}`", v.trim()),
                    })?;
                } else if let Some(v) = comment.strip_prefix("note:") {
                    note = v.trim().to_string();
                }
                continue;
            }
            if !saw_header {
                if line != "T_K,k_W_mK" {
                    return Err(Error::BadMaterialCurve {
                        name,
                        reason: format!("expected header `T_K,k_W_mK`, found `{line}`"),
                    });
                }
                saw_header = true;
                continue;
            }
            let mut cells = line.split(',');
            let parse = |cell: Option<&str>| -> Result<f64> {
                cell.unwrap_or("")
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::BadNumber {
                        row: lineno + 1,
                        column: "T_K/k_W_mK".to_string(),
                        text: line.to_string(),
                    })
            };
            let t = parse(cells.next())?;
            let k = parse(cells.next())?;
            points.push((t, k));
        }
        MaterialCurve::new(name, points, source, note)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# material: {}\n# source: {}\n# note: {}\nT_K,k_W_mK\n",
            self.name,
            self.source.token(),
            self.note
        );
        for (t, k) in &self.points {
            out.push_str(&format!("{t},{k:e}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> MaterialCurve {
        MaterialCurve::new(
            "linear",
            vec![(1.0, 1.0), (10.0, 10.0)],
            CurveSource::MaterialReference,
            "",
        )
        .unwrap()
    }

    #[test]
    fn tabulated_points_return_exactly() {
        let c = two_point();
        assert_eq!(c.conductivity(1.0).unwrap(), 1.0);
        assert_eq!(c.conductivity(10.0).unwrap(), 10.0);
    }

    #[test]
    fn low_side_linear_rule() {
        // Collinear points through the origin: k(0.5) = 0.5.
        let c = two_point();
        assert!((c.conductivity(0.5).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn low_side_floors_at_zero() {
        let c = MaterialCurve::new(
            "steep",
            vec![(1.0, 1.0), (2.0, 3.0)],
            CurveSource::MaterialReference,
            "",
        )
        .unwrap();
        // Line k = 2T - 1 crosses zero at T = 0.5.
        assert_eq!(c.conductivity(0.25).unwrap(), 0.0);
        assert!((c.conductivity(0.75).unwrap() - 0.5).abs() < 1e-15);
        let policy = c.extrapolation_policy();
        assert!((policy.zero_at_k - 0.5).abs() < 1e-15);
    }

    #[test]
    fn log_log_interpolation_inside_table() {
        // Power law k = T^2 sampled at 1 and 100 interpolates exactly in
        // log-log space.
        let c = MaterialCurve::new(
            "square",
            vec![(1.0, 1.0), (100.0, 10000.0)],
            CurveSource::MaterialReference,
            "",
        )
        .unwrap();
        let k = c.conductivity(10.0).unwrap();
        assert!((k - 100.0).abs() / 100.0 < 1e-12);
    }

    #[test]
    fn above_table_maximum_is_an_error() {
        let c = two_point();
        assert!(matches!(
            c.conductivity(11.0),
            Err(Error::AboveTableRange { .. })
        ));
        assert!(matches!(
            c.conductivity(-1.0),
            Err(Error::NonPositiveTemperature { .. })
        ));
    }

    #[test]
    fn csv_roundtrip() {
        let c = two_point();
        let text = c.to_csv();
        let back = MaterialCurve::parse_csv(&text).unwrap();
        assert_eq!(back.points, c.points);
        assert_eq!(back.source, c.source);
    }
}
