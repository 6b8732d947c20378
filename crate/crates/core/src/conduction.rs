//! Static conduction load of a thermal link: `Q = (A/L) * integral of k(T)
//! from the cold to the hot endpoint`.
//!
//! The integrand is piecewise smooth (log-log segments plus a linear
//! low-side tail), so the integral is split at the curve's breakpoints and
//! each piece is evaluated by composite Simpson on log-spaced nodes,
//! doubling the node count until the relative change falls below 1e-9.
//! Log spacing keeps resolution in the low-temperature decades where the
//! conductivity varies fastest.

use crate::error::{Error, Result};
use crate::material::MaterialCurve;
use crate::stage::{Node, StageId};

/// Relative convergence target for the integral refinement.
const INTEGRAL_REL_TOL: f64 = 1e-9;
/// Give up after this many node-count doublings per piece.
const MAX_REFINEMENTS: usize = 24;

/// A single-material conduction path between two thermal nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductorLink {
    pub material: MaterialCurve,
    /// Effective cross-section (m^2).
    pub area_m2: f64,
    /// Path length (m).
    pub length_m: f64,
    pub hot: Node,
    pub cold: StageId,
}

impl ConductorLink {
    pub fn new(
        material: MaterialCurve,
        area_m2: f64,
        length_m: f64,
        hot: Node,
        cold: StageId,
    ) -> Result<ConductorLink> {
        if !(area_m2 > 0.0 && length_m > 0.0) {
            return Err(Error::BadPayload(format!(
                "link geometry must be positive (area {area_m2} m^2, length {length_m} m)"
            )));
        }
        if !hot.warmer_than(Node::Stage(cold)) {
            return Err(Error::BadPayload(format!(
                "link endpoints out of order: {hot} must be warmer than {cold}"
            )));
        }
        Ok(ConductorLink {
            material,
            area_m2,
            length_m,
            hot,
            cold,
        })
    }
}

/// Composite Simpson of `g` over `[a, b]` with `n` intervals (n even).
fn simpson(g: &impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut sum = g(a) + g(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * g(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Simpson with successive node doubling until the relative change is
/// below tolerance. The converged estimate is Richardson-extrapolated,
/// cancelling the leading h^4 error term.
fn adaptive_simpson(g: &impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let mut n = 4;
    let mut prev = simpson(g, a, b, n);
    for _ in 0..MAX_REFINEMENTS {
        n *= 2;
        let next = simpson(g, a, b, n);
        let scale = next.abs().max(prev.abs());
        if (next - prev).abs() <= INTEGRAL_REL_TOL * scale || scale == 0.0 {
            return Ok((16.0 * next - prev) / 15.0);
        }
        prev = next;
    }
    Err(Error::IntegralNotConverged {
        refinements: MAX_REFINEMENTS,
    })
}

/// Integral of k(T) dT over [t_lo, t_hi], split at curve breakpoints, each
/// piece integrated in u = ln T so nodes are log-spaced.
pub(crate) fn conductivity_integral(
    curve: &MaterialCurve,
    t_lo: f64,
    t_hi: f64,
) -> Result<f64> {
    // Breakpoints: the extrapolation zero-crossing, the table minimum and
    // every interior table point.
    let policy = curve.extrapolation_policy();
    let mut cuts = vec![t_lo];
    if policy.zero_at_k > t_lo && policy.zero_at_k < t_hi {
        cuts.push(policy.zero_at_k);
    }
    for &(t, _) in &curve.points {
        if t > t_lo && t < t_hi {
            cuts.push(t);
        }
    }
    cuts.push(t_hi);
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite temperatures"));

    // k = 0 below the zero crossing: those pieces contribute nothing.
    let g = |u: f64| {
        let t = u.exp();
        curve.eval_in_range(t) * t
    };
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b <= policy.zero_at_k {
            continue;
        }
        total += adaptive_simpson(&g, a.ln(), b.ln())?;
    }
    Ok(total)
}

/// Conduction load through a link with the given endpoint temperatures (W).
///
/// Requires `t_hot > t_cold > 0` and `t_hot` within the material table
/// range (the low side is covered by the extrapolation policy, the high
/// side is not extrapolated).
pub fn conduction_load(link: &ConductorLink, t_hot: f64, t_cold: f64) -> Result<f64> {
    if !(t_hot > t_cold && t_cold > 0.0) {
        return Err(Error::BadEndpoints {
            hot: t_hot,
            cold: t_cold,
        });
    }
    if t_hot > link.material.t_max() {
        return Err(Error::AboveTableRange {
            name: link.material.name.clone(),
            t: t_hot,
            t_max: link.material.t_max(),
        });
    }
    let integral = conductivity_integral(&link.material, t_cold, t_hot)?;
    Ok(link.area_m2 / link.length_m * integral)
}
