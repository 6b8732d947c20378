//! Phenomenological forward model of a dilution-refrigerator platform.
//!
//! This is not a physics model. It is a smooth, strictly monotone stand-in
//! whose default parameters are calibrated to realistic operating points
//! (pulse-tube capacity at the usual rating temperatures, still headroom
//! collapse under PT2 loading, base mixing-chamber temperature, cold-plate
//! cooling power). Its job is to generate capacity-map datasets with known
//! structure for tests, demos and acceptance suites.

use crate::dataset::{Dataset, DatasetMeta, MeasurementRecord, RecordFlag};
use crate::error::{Error, Result};
use crate::limits::{check_limits, OperationalLimits};
use crate::stage::StageId;
use crate::state::{LoadVector, PlatformState, StageVec};
use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Coefficients of the synthetic platform model. All powers in W,
/// temperatures in K, flow in mol/s, pressures in Pa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    // First pulse-tube stage: T1 = (t^g + c*(P^h - bg^h))^(1/g) with
    // P = q_pt1 + background + pt2_to_pt1 * q_pt2.
    pub pt1_base_k: f64,
    pub pt1_background_w: f64,
    pub pt1_slope: f64,
    pub pt1_shape: f64,
    pub pt1_power_exp: f64,
    pub pt2_to_pt1: f64,

    // Second pulse-tube stage, coupled to PT1 through a power of the
    // PT1 temperature ratio.
    pub pt2_base_k: f64,
    pub pt2_background_w: f64,
    pub pt2_slope: f64,
    pub pt2_shape: f64,
    pub pt2_power_exp: f64,
    pub pt2_pt1_coupling: f64,

    // Still: evaporation cooling `capacity * T^flow_exp` balances the
    // applied load plus conductive and saturating couplings from PT2.
    pub still_background_w: f64,
    pub still_link_w_per_k: f64,
    pub still_sat_w: f64,
    pub still_sat_scale_k: f64,
    pub cld_to_still: f64,
    pub mxc_to_still: f64,
    pub still_capacity: f64,
    pub still_flow_exponent: f64,
    pub still_latent_heat_j_mol: f64,

    // Mixing chamber: flow-scaled quadratic dilution cooling.
    pub mxc_background_w: f64,
    pub dilution_coeff: f64,
    pub cld_to_mxc: f64,

    // Cold plate: geometric blend between still and mixing chamber plus
    // its own flow-scaled load sensitivity.
    pub cld_background_w: f64,
    pub cld_coeff: f64,
    pub cld_blend: f64,

    // Circulation pressures.
    pub flow_ref_mol_s: f64,
    pub still_pressure_base_pa: f64,
    pub still_pressure_exp: f64,
    pub cond_pressure_base_pa: f64,
    pub cond_pressure_flow_exp: f64,
    pub cond_pressure_t_coeff: f64,

    // Gaussian noise amplitudes (1 sigma, absolute), applied only when a
    // campaign asks for noise.
    pub noise_temp_k: [f64; 5],
    pub noise_pressure_pa: [f64; 2],
    pub noise_flow_mol_s: f64,

    // Optional slow PT1 drift injected by campaigns that enable it.
    pub pt1_drift_k_per_s: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        // Calibration targets of the default set (exact by construction):
        //   T_PT1 = 36 K at 4.9 W;  T_PT2 = 4.4 K at 2.78 W;
        //   T_STL = 1.093 K at 100 mW;  T_CLD = 200 mK at 3.7 mW;
        //   base T_MXC = 7.3 mK;  still headroom 100/22/10 mW at
        //   PT2 loads 0/1.84/3.675 W against the 1.1 K still limit.
        SyntheticParams {
            pt1_base_k: 32.5,
            pt1_background_w: 10.0,
            pt1_slope: 34.58661043948579,
            pt1_shape: 2.0,
            pt1_power_exp: 1.1,
            pt2_to_pt1: 0.30,

            pt2_base_k: 3.3,
            pt2_background_w: 1.5,
            pt2_slope: 2.373824139199272,
            pt2_shape: 2.0,
            pt2_power_exp: 1.1,
            pt2_pt1_coupling: 0.60,

            still_background_w: 0.002,
            still_link_w_per_k: 0.007,
            still_sat_w: 0.082,
            still_sat_scale_k: 0.40,
            cld_to_still: 0.30,
            mxc_to_still: 1.0,
            still_capacity: 0.07950987525873415,
            still_flow_exponent: 4.387041450484669,
            still_latent_heat_j_mol: 33.0,

            mxc_background_w: 2.711588981818182e-6,
            dilution_coeff: 84.0,
            cld_to_mxc: 0.002,

            cld_background_w: 2e-6,
            cld_coeff: 216.48557734750008,
            cld_blend: 0.5327924150617483,

            flow_ref_mol_s: 6.057575757575758e-4,
            still_pressure_base_pa: 8.0,
            still_pressure_exp: 1.0,
            cond_pressure_base_pa: 1.9e5,
            cond_pressure_flow_exp: 0.4,
            cond_pressure_t_coeff: 0.35,

            noise_temp_k: [5e-3, 5e-4, 1e-4, 2e-5, 2e-6],
            noise_pressure_pa: [50.0, 0.05],
            noise_flow_mol_s: 1e-6,

            pt1_drift_k_per_s: 5e-7,
        }
    }
}

impl SyntheticParams {
    fn pt1_temp(&self, q: &LoadVector) -> f64 {
        let p_total = q.get(StageId::Pt1) + self.pt1_background_w + self.pt2_to_pt1 * q.get(StageId::Pt2);
        let g = self.pt1_shape;
        let h = self.pt1_power_exp;
        (self.pt1_base_k.powf(g)
            + self.pt1_slope * (p_total.powf(h) - self.pt1_background_w.powf(h)))
        .powf(1.0 / g)
    }

    fn pt2_temp(&self, q: &LoadVector, t_pt1: f64) -> f64 {
        let p_total = q.get(StageId::Pt2) + self.pt2_background_w;
        let g = self.pt2_shape;
        let h = self.pt2_power_exp;
        let bare = (self.pt2_base_k.powf(g)
            + self.pt2_slope * (p_total.powf(h) - self.pt2_background_w.powf(h)))
        .powf(1.0 / g);
        bare * (t_pt1 / self.pt1_base_k).powf(self.pt2_pt1_coupling)
    }

    /// Still heat input at still temperature `t`, given the PT2 temperature.
    fn still_input(&self, q: &LoadVector, t: f64, t_pt2: f64) -> f64 {
        q.get(StageId::Stl)
            + self.still_background_w
            + self.still_link_w_per_k * (t_pt2 - t)
            + self.still_sat_w * (1.0 - (-(t_pt2 - self.pt2_base_k) / self.still_sat_scale_k).exp())
            + self.cld_to_still * q.get(StageId::Cld)
            + self.mxc_to_still * q.get(StageId::Mxc)
    }

    fn still_cooling(&self, t: f64) -> f64 {
        self.still_capacity * t.powf(self.still_flow_exponent)
    }

    fn flow(&self, t_stl: f64) -> f64 {
        self.still_cooling(t_stl) / self.still_latent_heat_j_mol
    }
}

/// Evaluate the synthetic platform at a loading scenario.
///
/// The still temperature is solved by bisection so evaporation cooling
/// balances the still heat input; every other stage follows in closed form.
pub fn synth_state(params: &SyntheticParams, q: &LoadVector) -> Result<PlatformState> {
    let t_pt1 = params.pt1_temp(q);
    let t_pt2 = params.pt2_temp(q, t_pt1);
    if !(t_pt1.is_finite() && t_pt2.is_finite() && t_pt1 > 0.0 && t_pt2 > 0.0) {
        return Err(Error::Synthetic(format!(
            "pulse-tube temperatures not physical (T1={t_pt1}, T2={t_pt2})"
        )));
    }

    // Bisection for the still balance; residual is strictly increasing in T.
    let residual = |t: f64| params.still_cooling(t) - params.still_input(q, t, t_pt2);
    let mut lo = 1e-6;
    let mut hi = t_pt2.max(5.0);
    if !(residual(lo) < 0.0 && residual(hi) > 0.0) {
        return Err(Error::Synthetic(
            "still balance not bracketed; parameters unphysical".to_string(),
        ));
    }
    // Converge to 1e-10 relative.
    while (hi - lo) > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let t_stl = 0.5 * (lo + hi);
    let flow = params.flow(t_stl);

    let q_mxc_total =
        q.get(StageId::Mxc) + params.mxc_background_w + params.cld_to_mxc * q.get(StageId::Cld);
    let t_mxc = (q_mxc_total / (params.dilution_coeff * flow)).sqrt();

    let w = params.cld_blend;
    let t_cb = t_mxc.powf(1.0 - w) * t_stl.powf(w);
    let q_cld_total = q.get(StageId::Cld) + params.cld_background_w;
    let t_cld = (t_cb * t_cb + q_cld_total / (params.cld_coeff * flow)).sqrt();

    let flow_ratio = flow / params.flow_ref_mol_s;
    let p_still = params.still_pressure_base_pa * flow_ratio.powf(params.still_pressure_exp);
    let p_cond = params.cond_pressure_base_pa
        * flow_ratio.powf(params.cond_pressure_flow_exp)
        * (params.cond_pressure_t_coeff * (t_pt2 - params.pt2_base_k)).exp();

    Ok(PlatformState {
        temps: StageVec([t_pt1, t_pt2, t_stl, t_cld, t_mxc]),
        p_condenser: Some(p_cond),
        p_still: Some(p_still),
        flow: Some(flow),
    })
}

/// What to do with grid points whose synthetic state violates the
/// campaign's pseudo-limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationMode {
    /// Record the point but flag it LIMIT_TRUNCATED.
    Flag,
    /// Drop the point, leaving a hole in the grid.
    Skip,
}

/// Limit-truncation rule applied while running a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationRule {
    pub limits: OperationalLimits,
    pub mode: TruncationMode,
}

/// One factorial sub-grid of loading scenarios (axis value lists per stage;
/// a single-value list pins that stage).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubGrid {
    pub pt1_w: Vec<f64>,
    pub pt2_w: Vec<f64>,
    pub stl_w: Vec<f64>,
    pub cld_w: Vec<f64>,
    pub mxc_w: Vec<f64>,
}

impl SubGrid {
    fn axis(&self, s: StageId) -> &[f64] {
        match s {
            StageId::Pt1 => &self.pt1_w,
            StageId::Pt2 => &self.pt2_w,
            StageId::Stl => &self.stl_w,
            StageId::Cld => &self.cld_w,
            StageId::Mxc => &self.mxc_w,
        }
    }

    fn is_sorted_non_negative(&self) -> bool {
        StageId::ALL.iter().all(|&s| {
            let a = self.axis(s);
            !a.is_empty()
                && a.iter().all(|v| v.is_finite() && *v >= 0.0)
                && a.windows(2).all(|w| w[0] < w[1])
        })
    }
}

/// A measurement campaign: a union of factorial sub-grids with optional
/// noise, drift and limit truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub subgrids: Vec<SubGrid>,
    pub seed: u64,
    #[serde(default)]
    pub noise: bool,
    #[serde(default)]
    pub drift: bool,
    /// Spacing of synthetic timestamps (stabilization plus averaging time).
    pub time_step_s: f64,
    /// Averaging window recorded on every point.
    pub averaging_window_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<TruncationRule>,
    pub platform_id: String,
    pub cooldown_id: String,
}

/// Default dense campaign axes. The axes deliberately include the
/// calibration operating points as grid nodes.
pub const DENSE_PT1_AXIS: [f64; 7] = [0.0, 0.5, 2.4, 4.9, 9.7, 14.5, 19.4];
pub const DENSE_PT2_AXIS: [f64; 8] = [0.0, 0.2, 0.7, 1.4, 2.1, 2.78, 3.5, 4.26];
pub const DENSE_STL_AXIS: [f64; 8] = [0.0, 0.002, 0.006, 0.01, 0.022, 0.05, 0.075, 0.1];
pub const DENSE_CLD_AXIS: [f64; 7] = [0.0, 0.0005, 0.0012, 0.0037, 0.008, 0.0145, 0.0325];
pub const DENSE_MXC_AXIS: [f64; 7] = [0.0, 2e-6, 4e-6, 1e-5, 2e-5, 4e-5, 6e-5];

impl CampaignSpec {
    /// Full factorial over the default dense axes (zero noise, no drift).
    pub fn dense_default() -> CampaignSpec {
        CampaignSpec {
            subgrids: vec![SubGrid {
                pt1_w: DENSE_PT1_AXIS.to_vec(),
                pt2_w: DENSE_PT2_AXIS.to_vec(),
                stl_w: DENSE_STL_AXIS.to_vec(),
                cld_w: DENSE_CLD_AXIS.to_vec(),
                mxc_w: DENSE_MXC_AXIS.to_vec(),
            }],
            seed: 0,
            noise: false,
            drift: false,
            time_step_s: 7800.0,
            averaging_window_s: 600.0,
            truncation: None,
            platform_id: "synthetic-platform".to_string(),
            cooldown_id: "dense-default".to_string(),
        }
    }

    /// Sparse union campaign: a pulse-tube plane plus a dilution-unit plane,
    /// the style used for survey measurements.
    pub fn sparse_survey() -> CampaignSpec {
        let zeros = || vec![0.0];
        CampaignSpec {
            subgrids: vec![
                SubGrid {
                    pt1_w: vec![0.0, 10.0, 19.4],
                    pt2_w: vec![0.0, 1.5, 3.0, 4.26],
                    stl_w: zeros(),
                    cld_w: zeros(),
                    mxc_w: zeros(),
                },
                SubGrid {
                    pt1_w: zeros(),
                    pt2_w: zeros(),
                    stl_w: vec![0.0, 0.006, 0.02, 0.1],
                    cld_w: zeros(),
                    mxc_w: vec![0.0, 4e-6, 1.4e-5, 3e-5, 6e-5],
                },
            ],
            seed: 0,
            noise: false,
            drift: false,
            time_step_s: 7800.0,
            averaging_window_s: 600.0,
            truncation: None,
            platform_id: "synthetic-platform".to_string(),
            cooldown_id: "sparse-survey".to_string(),
        }
    }

    /// Distinct loading scenarios this campaign will visit, sorted by grid
    /// coordinates, duplicates across sub-grids removed.
    pub fn scenarios(&self) -> Vec<LoadVector> {
        let mut all: Vec<LoadVector> = Vec::new();
        for sg in &self.subgrids {
            let axes: Vec<&[f64]> = StageId::ALL.iter().map(|&s| sg.axis(s)).collect();
            let mut idx = [0usize; StageId::COUNT];
            loop {
                let q = LoadVector::from_fn(|s| axes[s.index()][idx[s.index()]]);
                all.push(q);
                let mut j = StageId::COUNT;
                loop {
                    if j == 0 {
                        break;
                    }
                    j -= 1;
                    idx[j] += 1;
                    if idx[j] < axes[j].len() {
                        break;
                    }
                    idx[j] = 0;
                    if j == 0 {
                        j = usize::MAX;
                        break;
                    }
                }
                if j == usize::MAX {
                    break;
                }
            }
        }
        all.sort_by(|a, b| a.0 .0.partial_cmp(&b.0 .0).expect("finite loads"));
        all.dedup_by(|a, b| a.same_node(b));
        all
    }
}

/// Run a campaign over the synthetic platform, emitting a standard dataset.
/// Deterministic for a fixed seed.
pub fn run_campaign(params: &SyntheticParams, spec: &CampaignSpec) -> Result<Dataset> {
    for sg in &spec.subgrids {
        if !sg.is_sorted_non_negative() {
            return Err(Error::Synthetic(
                "campaign axes must be non-empty, sorted ascending and non-negative".to_string(),
            ));
        }
    }
    let scenarios = spec.scenarios();
    if scenarios.is_empty() {
        return Err(Error::Synthetic("campaign has no grid points".to_string()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(scenarios.len());
    for (i, q) in scenarios.iter().enumerate() {
        let clean = synth_state(params, q)?;
        let mut state = clean;
        if spec.noise {
            let mut uniform =
                || (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            let mut draw = |amp: f64| {
                // Box-Muller transform; two uniforms per normal draw.
                let u1 = uniform().max(1e-12_f64);
                let u2 = uniform();
                amp * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            };
            for s in StageId::ALL {
                let noisy = state.temps[s] + draw(params.noise_temp_k[s.index()]);
                state.temps[s] = noisy.max(state.temps[s] * 0.5);
            }
            state.p_condenser = state
                .p_condenser
                .map(|p| (p + draw(params.noise_pressure_pa[0])).max(0.0));
            state.p_still = state
                .p_still
                .map(|p| (p + draw(params.noise_pressure_pa[1])).max(0.0));
            state.flow = state.flow.map(|f| (f + draw(params.noise_flow_mol_s)).max(0.0));
        }
        let timestamp = i as f64 * spec.time_step_s;
        if spec.drift {
            state.temps[StageId::Pt1] += params.pt1_drift_k_per_s * timestamp;
        }

        let mut flags = Vec::new();
        if let Some(rule) = &spec.truncation {
            if !check_limits(&state, &rule.limits).is_empty() {
                match rule.mode {
                    TruncationMode::Flag => flags.push(RecordFlag::LimitTruncated),
                    TruncationMode::Skip => continue,
                }
            }
        }

        records.push(MeasurementRecord {
            applied: *q,
            state,
            timestamp: Some(timestamp),
            averaging_window: Some(spec.averaging_window_s),
            flags,
        });
    }

    let mut meta = DatasetMeta {
        platform_id: spec.platform_id.clone(),
        cooldown_id: spec.cooldown_id.clone(),
        unit_system: "SI".to_string(),
        seed: Some(spec.seed),
        drift_rate_k_per_s: spec.drift.then_some(params.pt1_drift_k_per_s),
        ..Default::default()
    };
    for s in StageId::ALL {
        let mut axis: Vec<f64> = records.iter().map(|r| r.applied.get(s)).collect();
        axis.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        axis.dedup_by(|a, b| (*a - *b).abs() <= LoadVector::SNAP_TOLERANCE_W);
        meta.set_axis(s, axis);
    }
    meta.notes.push(format!(
        "synthetic campaign over {} scenarios; noise={}, drift={}",
        records.len(),
        spec.noise,
        spec.drift
    ));

    let ds = Dataset { records, meta };
    ds.check_invariants()?;
    Ok(ds)
}
