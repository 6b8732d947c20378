//! Integration tests over the data shipped with the crate: the SC219 cable
//! family against its per-wire load reference matrix, the validation
//! payload's per-stage totals, and the demo campaign's provenance.

use capmap::cable::{compare_sources, ConductivitySource, CouplingConfig};
use capmap::dataset::parse_dataset;
use capmap::map::{build_map, Containment};
use capmap::payload::aggregate_loads;
use capmap::shipped::{self, Library};
use capmap::stage::{Node, StageId};
use capmap::state::LoadVector;
use capmap::synthetic::{run_campaign, CampaignSpec, SyntheticParams};

/// Reference per-wire loads (W) for the SC219 family over the standard
/// spans at the design temperature set: (hot, cold, length, material,
/// manufacturer). Tolerance below reflects the residual uncertainty of
/// datasheet-derived cross-sections and conductivity tables.
const REFERENCE_ROWS: &[(&str, Node, StageId, f64, f64, f64)] = &[
    ("SC219-SS", Node::Ambient, StageId::Pt1, 0.134, 40.49e-3, 25.13e-3),
    ("SC219-SS", Node::Stage(StageId::Pt1), StageId::Pt2, 0.201, 566.06e-6, 343.03e-6),
    ("SC219-SS", Node::Stage(StageId::Pt2), StageId::Stl, 0.163, 3.09e-6, 1.3e-6),
    ("SC219-SS", Node::Stage(StageId::Stl), StageId::Cld, 0.163, 241.11e-9, 88.96e-9),
    ("SC219-SS", Node::Stage(StageId::Cld), StageId::Mxc, 0.236, 2.26e-9, 0.83e-9),
    ("SC219-CN", Node::Ambient, StageId::Pt1, 0.134, 77.3e-3, 15.8e-3),
    ("SC219-CN", Node::Stage(StageId::Pt1), StageId::Pt2, 0.201, 2.74e-3, 552.08e-6),
    ("SC219-NbTi", Node::Stage(StageId::Pt2), StageId::Stl, 0.173, 1.44e-6, 697.08e-9),
    ("SC219-NbTi", Node::Stage(StageId::Stl), StageId::Cld, 0.171, 101.97e-9, 24.6e-9),
    ("SC219-NbTi", Node::Stage(StageId::Cld), StageId::Mxc, 0.246, 0.96e-9, 0.21e-9),
];

const ROW_TOLERANCE: f64 = 0.40;

#[test]
fn per_wire_reference_matrix_reproduced_within_tolerance() {
    let lib = Library::shipped();
    let temps = shipped::design_temps();
    for &(cable_name, hot, cold, length, want_material, want_manu) in REFERENCE_ROWS {
        let cable = lib.cable(cable_name).unwrap();
        let table =
            compare_sources(cable, &lib.materials, &[(hot, cold, length)], &temps).unwrap();
        let row = &table.rows[0];
        let dev_mat = (row.material_w - want_material) / want_material;
        let dev_manu = (row.manufacturer_w - want_manu) / want_manu;
        assert!(
            dev_mat.abs() <= ROW_TOLERANCE,
            "{cable_name} {hot}->{cold} material: {:.4e} W vs {want_material:.4e} W ({:+.1}%)",
            row.material_w,
            100.0 * dev_mat
        );
        assert!(
            dev_manu.abs() <= ROW_TOLERANCE,
            "{cable_name} {hot}->{cold} manufacturer: {:.4e} W vs {want_manu:.4e} W ({:+.1}%)",
            row.manufacturer_w,
            100.0 * dev_manu
        );
        assert!(row.material_w > row.manufacturer_w);
    }
}

#[test]
fn headline_stainless_pair_within_documented_tolerance() {
    // The canonical example pair: 0.134 m stainless coax from room
    // temperature to PT1, manufacturer about 25.13 mW vs material about
    // 40.49 mW per wire.
    let lib = Library::shipped();
    let cable = lib.cable("SC219-SS").unwrap();
    let table = compare_sources(
        cable,
        &lib.materials,
        &[(Node::Ambient, StageId::Pt1, 0.134)],
        &shipped::design_temps(),
    )
    .unwrap();
    let row = &table.rows[0];
    assert!((row.material_w - 40.49e-3).abs() / 40.49e-3 <= 0.35);
    assert!((row.manufacturer_w - 25.13e-3).abs() / 25.13e-3 <= 0.35);
}

#[test]
fn nbti_still_to_coldplate_pair_within_documented_tolerance() {
    // 0.171 m NbTi coax still -> cold plate: manufacturer about 24.6 nW vs
    // material about 101.97 nW per wire.
    let lib = Library::shipped();
    let cable = lib.cable("SC219-NbTi").unwrap();
    let table = compare_sources(
        cable,
        &lib.materials,
        &[(Node::Stage(StageId::Stl), StageId::Cld, 0.171)],
        &shipped::design_temps(),
    )
    .unwrap();
    let row = &table.rows[0];
    assert!((row.material_w - 101.97e-9).abs() / 101.97e-9 <= 0.35);
    assert!((row.manufacturer_w - 24.6e-9).abs() / 24.6e-9 <= 0.35);
}

/// Per-stage totals of the full validation payload bracketed by the
/// reference estimate ranges (expanded 20% for data-source tolerance):
/// the high end comes from material data with full thermalization, the low
/// end from manufacturer data.
#[test]
fn validation_payload_totals_fall_inside_estimate_ranges() {
    let lib = Library::shipped();
    let temps = shipped::design_temps();

    let ranges: [(StageId, f64, f64); 5] = [
        (StageId::Pt1, 1.99, 4.45),
        (StageId::Pt2, 35.2e-3, 102.07e-3),
        (StageId::Stl, 100.14e-6, 218.66e-6),
        (StageId::Cld, 6.28e-6, 16.82e-6),
        (StageId::Mxc, 0.06e-6, 4.51e-6),
    ];
    let expand = 0.20;

    // Shipped configuration (material data, NbTi outer-only).
    let high = aggregate_loads(
        &shipped::validation_payload(),
        lib,
        &temps.stages,
        temps.ambient_k,
    )
    .unwrap();

    // Manufacturer-data variant with everything thermalized per stage.
    let mut low_spec = shipped::validation_payload();
    for run in &mut low_spec.runs {
        run.source = ConductivitySource::Manufacturer;
        run.coupling = CouplingConfig::ThermalizedPerStage;
    }
    let low = aggregate_loads(&low_spec, lib, &temps.stages, temps.ambient_k).unwrap();

    for (stage, lo, hi) in ranges {
        let (lo_x, hi_x) = (lo * (1.0 - expand), hi * (1.0 + expand));
        assert!(
            high.get(stage) >= lo_x && high.get(stage) <= hi_x,
            "{stage} material total {:.4e} W outside [{lo_x:.3e}, {hi_x:.3e}]",
            high.get(stage)
        );
        assert!(
            low.get(stage) >= lo_x * 0.8 && low.get(stage) <= hi_x,
            "{stage} manufacturer total {:.4e} W outside range",
            low.get(stage)
        );
        assert!(low.get(stage) <= high.get(stage));
    }
}

#[test]
fn demo_campaign_record_count_matches_its_grid_specification() {
    // The shipped file was generated from the sparse survey spec: a 3x4
    // pulse-tube plane and a 4x5 dilution-unit plane sharing the origin.
    let spec = CampaignSpec::sparse_survey();
    let expected = spec.scenarios().len();
    assert_eq!(expected, 3 * 4 + 4 * 5 - 1);

    let table = include_str!("../data/demo/campaign.csv");
    let meta = include_str!("../data/demo/campaign.meta.toml");
    let ds = parse_dataset(table.as_bytes(), meta).unwrap();
    assert_eq!(ds.records.len(), expected);
    assert_eq!(ds.meta.cooldown_id, "sparse-survey");
}

#[test]
fn demo_campaign_is_bit_reproducible_from_its_spec() {
    let regenerated = run_campaign(&SyntheticParams::default(), &CampaignSpec::sparse_survey())
        .unwrap();
    assert_eq!(
        regenerated.to_table_string(),
        include_str!("../data/demo/campaign.csv")
    );
    assert_eq!(
        regenerated.to_metadata_string(),
        include_str!("../data/demo/campaign.meta.toml")
    );
}

#[test]
fn demo_campaign_builds_a_node_only_map() {
    let table = include_str!("../data/demo/campaign.csv");
    let meta = include_str!("../data/demo/campaign.meta.toml");
    let ds = parse_dataset(table.as_bytes(), meta).unwrap();
    let m = build_map(&ds).unwrap();
    // Union of two planes: every cross-plane cell is incomplete, so the
    // map supports node lookups only.
    assert_eq!(m.grid().valid_cell_count(), 0);
    assert!(m.grid().populated_node_count() > 0);
    let node = LoadVector::ZERO.with(StageId::Stl, 0.02);
    assert_eq!(m.query(&node).unwrap().containment, Containment::NodeExact);
}

#[test]
fn stainless_conductivity_matches_hand_log_log_interpolation() {
    // Independent route: the log-log formula written out by hand over the
    // shipped table's bracketing points.
    let lib = Library::shipped();
    let ss = lib.material("stainless_steel_304").unwrap();
    let t = 5.0; // strictly between the 4 K and 6 K table nodes
    let i = ss.points.iter().position(|(pt, _)| *pt > t).unwrap() - 1;
    let (t0, k0) = ss.points[i];
    let (t1, k1) = ss.points[i + 1];
    assert!(t0 < t && t < t1);
    let hand = (k0.ln()
        + (k1.ln() - k0.ln()) / (t1.ln() - t0.ln()) * (t.ln() - t0.ln()))
    .exp();
    let got = ss.conductivity(t).unwrap();
    assert!(
        ((got - hand) / hand).abs() <= 1e-9,
        "library {got} vs hand {hand}"
    );
}

#[test]
fn map_midpoint_interpolation_tracks_the_forward_model() {
    // Zero-noise campaign: node queries are exact; cell midpoints deviate
    // from the forward model only by grid curvature. The dense default
    // grid keeps that deviation below 4% on every stage (the square-root dilution law in the
    // first mixing-chamber cell sets the worst case).
    let params = SyntheticParams::default();
    let ds = run_campaign(&params, &CampaignSpec::dense_default()).unwrap();
    let m = build_map(&ds).unwrap();
    let grid = m.grid();

    let mut worst: f64 = 0.0;
    for pick in 0..32u32 {
        let q = LoadVector::from_fn(|s| {
            let axis = grid.axis(s);
            let c = (pick as usize * (1 + s.index())) % (axis.len() - 1);
            0.5 * (axis[c] + axis[c + 1])
        });
        let interpolated = m.query(&q).unwrap().state;
        let direct = capmap::synth_state(&params, &q).unwrap();
        for s in StageId::ALL {
            let rel = (interpolated.temps[s] - direct.temps[s]).abs() / direct.temps[s];
            worst = worst.max(rel);
            assert!(
                rel <= 0.04,
                "{s} at {q}: interpolated {} vs model {} ({rel:.4})",
                interpolated.temps[s],
                direct.temps[s]
            );
        }
    }
    assert!(worst > 0.0, "midpoints should differ from the model slightly");
}
