//! `capmap` — capacity-map toolkit for multi-stage cryogenic platforms.
//!
//! One pipeline stage per invocation; composition happens through files.
//! Exit codes: 1 usage error, 2 input/validation error, 3 domain or solver
//! error (out-of-domain query, non-convergence).

use anyhow::{anyhow, Context};
use capmap::archive::{read_archive, write_archive};
use capmap::dataset::{correct_drift, parse_dataset, Dataset};
use capmap::inverse::{infer_load, InferOptions};
use capmap::limits::{headroom_surface, max_stage_power, OperationalLimits};
use capmap::linear::{fit_coupling, residuals};
use capmap::map::{build_map, diff_maps, CapacityMap};
use capmap::shipped::{self, Library};
use capmap::slice::{slice, SliceSpec};
use capmap::stage::StageId;
use capmap::state::{LoadVector, StageVec};
use capmap::svg::{render_headroom_map, render_slice_heatmap};
use capmap::synthetic::{run_campaign, CampaignSpec, SyntheticParams};
use capmap::validate::validate_dataset;
use capmap::Error as CapmapError;
use clap::{Args, Parser, Subcommand};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "capmap",
    about = "Thermal capacity maps for multi-stage cryogenic platforms",
    long_about = "Build empirical capacity maps of a dilution refrigerator from measurement \
                  campaigns, slice and query them, fit the small-signal linear model, estimate \
                  payload conduction loads, solve coupled equilibria, infer loads from observed \
                  temperatures and compute per-stage headroom.\n\nAll internal quantities are \
                  SI; command-line power flags carry explicit unit suffixes.",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Applied load flags with explicit units per stage, matching the magnitude
/// each stage usually runs at (PT stages in W, STL/CLD in mW, MXC in uW).
#[derive(Args, Debug, Clone, Copy, Default)]
struct LoadArgs {
    /// PT1 heater power in W
    #[arg(long = "q-pt1-W", value_name = "W", default_value_t = 0.0)]
    q_pt1_w: f64,
    /// PT2 heater power in W
    #[arg(long = "q-pt2-W", value_name = "W", default_value_t = 0.0)]
    q_pt2_w: f64,
    /// Still heater power in mW
    #[arg(long = "q-stl-mW", value_name = "mW", default_value_t = 0.0)]
    q_stl_mw: f64,
    /// Cold-plate heater power in mW
    #[arg(long = "q-cld-mW", value_name = "mW", default_value_t = 0.0)]
    q_cld_mw: f64,
    /// Mixing-chamber heater power in uW
    #[arg(long = "q-mxc-uW", value_name = "uW", default_value_t = 0.0)]
    q_mxc_uw: f64,
}

impl LoadArgs {
    fn to_load_vector(self) -> anyhow::Result<LoadVector> {
        LoadVector::new(StageVec([
            self.q_pt1_w,
            self.q_pt2_w,
            self.q_stl_mw * 1e-3,
            self.q_cld_mw * 1e-3,
            self.q_mxc_uw * 1e-6,
        ]))
        .ok_or_else(|| anyhow!("load values must be finite and non-negative"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic measurement campaign (dataset table + metadata)
    Simulate {
        /// Synthetic platform parameters: `default` or a TOML file
        #[arg(long, default_value = "default")]
        params: String,
        /// Campaign grid: `dense`, `sparse` or a TOML file
        #[arg(long, default_value = "dense")]
        campaign: String,
        /// Output directory for campaign.csv + campaign.meta.toml
        #[arg(long)]
        out: PathBuf,
        /// Noise seed (enables seeded Gaussian noise)
        #[arg(long)]
        seed: Option<u64>,
        /// Inject the configured slow PT1 drift
        #[arg(long)]
        drift: bool,
    },
    /// Validate a dataset and print the findings report
    Validate {
        /// Dataset directory (campaign.csv + campaign.meta.toml) or CSV path
        #[arg(long)]
        data: PathBuf,
        /// Remove a linear PT1 drift (K/s) before validating, using record
        /// timestamps referenced to the first record
        #[arg(long, value_name = "K_PER_S")]
        correct_drift: Option<f64>,
    },
    /// Build a content-hashed capacity-map archive from a dataset
    Build {
        #[arg(long)]
        data: PathBuf,
        /// Output archive path (.arc)
        #[arg(long)]
        out: PathBuf,
    },
    /// Interpolate the platform state at a loading scenario
    Query {
        /// Capacity-map archive
        map: PathBuf,
        #[command(flatten)]
        load: LoadArgs,
        /// Write the interpolated state as TOML
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a 2-D slice of the map as CSV and/or SVG heatmap
    Slice {
        map: PathBuf,
        /// Varying stage on the x axis (pt1, pt2, stl, cld, mxc)
        #[arg(long, short = 'x')]
        x: StageId,
        /// Varying stage on the y axis
        #[arg(long, short = 'y')]
        y: StageId,
        /// State field: t_pt1..t_mxc, p_cond, p_still, flow
        #[arg(long)]
        field: String,
        #[command(flatten)]
        fixed: LoadArgs,
        /// SVG heatmap output path
        #[arg(long)]
        out: PathBuf,
        /// Also write the slice as a CSV table
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Fit the small-signal linear coupling matrix and export residuals
    FitLinear {
        #[arg(long)]
        data: PathBuf,
        /// Fit loads up to this fraction of each stage's axis maximum
        #[arg(long, default_value_t = 0.1)]
        small_load_fraction: f64,
        /// Coupling-matrix CSV output
        #[arg(long)]
        out: PathBuf,
        /// Residual-table CSV output
        #[arg(long)]
        residuals: Option<PathBuf>,
    },
    /// Estimate payload loads and predict the platform state
    Payload {
        /// Payload spec TOML (or `validation` for the shipped example)
        #[arg(long)]
        spec: String,
        /// Capacity-map archive supplying base temperatures and predictions
        #[arg(long = "temps-from")]
        temps_from: PathBuf,
        /// Iterate payload and map to thermal equilibrium
        #[arg(long)]
        equilibrium: bool,
        /// Ambient (room) temperature in K
        #[arg(long = "ambient-K", value_name = "K", default_value_t = 295.0)]
        ambient_k: f64,
        /// Damping factor of the fixed-point iteration, in (0, 1]
        #[arg(long, default_value_t = 0.5)]
        damping: f64,
        /// Relative convergence tolerance (temperatures and loads)
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 100)]
        max_iterations: usize,
        /// Extra material/cable data directory merged over the shipped set
        #[arg(long = "data-dir")]
        data_dir: Option<PathBuf>,
        /// Report output path
        #[arg(long)]
        out: PathBuf,
    },
    /// Infer the applied loads that explain observed stage temperatures
    Infer {
        #[arg(long)]
        map: PathBuf,
        /// Observed temperatures CSV: `stage,t_K[,weight]`
        #[arg(long)]
        observed: PathBuf,
        /// Number of multi-start searches
        #[arg(long, default_value_t = 8)]
        starts: usize,
        /// Inferred-load TOML output
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-stage admissible power against operational limits
    Headroom {
        #[arg(long)]
        map: PathBuf,
        /// Stage to search (omit when using --surface)
        #[arg(long)]
        stage: Option<StageId>,
        /// Limits TOML (defaults to the shipped still/mixing-chamber limits)
        #[arg(long)]
        limits: Option<PathBuf>,
        #[command(flatten)]
        fixed: LoadArgs,
        /// Compute a 2-D admissibility surface instead of a single stage
        #[arg(long)]
        surface: bool,
        /// Surface x stage
        #[arg(long, short = 'x')]
        x: Option<StageId>,
        /// Surface y stage
        #[arg(long, short = 'y')]
        y: Option<StageId>,
        /// CSV output (surface or single-stage report)
        #[arg(long)]
        out: Option<PathBuf>,
        /// SVG admissibility map (surface mode)
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Per-node offsets between two maps sharing grid points
    Diff {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Per-node offset CSV output
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own message (help/version go to stdout).
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<CapmapError>()
                .map(|ce| if ce.is_input_error() { 2 } else { 3 })
                .unwrap_or(2);
            ExitCode::from(code)
        }
    }
}

/// Write a file atomically: write to a sibling temp path, then rename.
fn write_atomic(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    let tmp = path.with_extension("tmp-capmap");
    std::fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

/// Load a dataset from a directory (campaign.csv + campaign.meta.toml) or
/// from a CSV path with a `.meta.toml` sibling.
fn load_dataset(data: &Path) -> anyhow::Result<Dataset> {
    let (table_path, meta_path) = if data.is_dir() {
        (data.join("campaign.csv"), data.join("campaign.meta.toml"))
    } else {
        let meta = data.with_extension("").with_extension("meta.toml");
        (data.to_path_buf(), meta)
    };
    let table = std::fs::File::open(&table_path)
        .with_context(|| format!("opening {}", table_path.display()))?;
    let meta = std::fs::read_to_string(&meta_path)
        .with_context(|| format!("opening {}", meta_path.display()))?;
    Ok(parse_dataset(table, &meta)?)
}

fn load_map(path: &Path) -> anyhow::Result<CapacityMap> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("opening {}", path.display()))?;
    let ds = read_archive(&text)?;
    Ok(build_map(&ds)?)
}

fn load_limits(path: &Option<PathBuf>) -> anyhow::Result<OperationalLimits> {
    match path {
        None => Ok(shipped::default_limits()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("opening {}", p.display()))?;
            let lim: OperationalLimits = toml::from_str(&text)
                .map_err(|e| CapmapError::BadMetadata(format!("limits document: {e}")))?;
            if !lim.is_valid() {
                return Err(anyhow!("limits must all be positive"));
            }
            Ok(lim)
        }
    }
}

fn load_library(extra: &Option<PathBuf>) -> anyhow::Result<Library> {
    let mut lib = Library::shipped().clone();
    if let Some(dir) = extra {
        lib.load_dir(dir)?;
    }
    Ok(lib)
}

/// Parse the observed-temperatures CSV (`stage,t_K[,weight]`).
fn load_observed(path: &Path) -> anyhow::Result<(BTreeMap<StageId, f64>, Option<StageVec>)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("opening {}", path.display()))?;
    let mut observed = BTreeMap::new();
    let mut weights: Option<StageVec> = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("stage,") {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() < 2 {
            return Err(anyhow!("observed file: bad line `{line}`"));
        }
        let stage: StageId = cells[0].parse().map_err(|e| anyhow!("{e}"))?;
        let t: f64 = cells[1]
            .parse()
            .with_context(|| format!("bad temperature `{}`", cells[1]))?;
        observed.insert(stage, t);
        if let Some(w) = cells.get(2).filter(|w| !w.is_empty()) {
            let w: f64 = w.parse().with_context(|| format!("bad weight `{w}`"))?;
            let mut wv = weights.unwrap_or_default();
            wv[stage] = w;
            weights = Some(wv);
        }
    }
    Ok((observed, weights))
}

fn state_toml(state: &capmap::PlatformState) -> String {
    let mut out = String::from("[temperatures_k]\n");
    for s in StageId::ALL {
        out.push_str(&format!("{} = {:e}\n", s.key(), state.temps[s]));
    }
    out.push_str("\n[circulation]\n");
    if let Some(p) = state.p_condenser {
        out.push_str(&format!("p_condenser_pa = {p:e}\n"));
    }
    if let Some(p) = state.p_still {
        out.push_str(&format!("p_still_pa = {p:e}\n"));
    }
    if let Some(f) = state.flow {
        out.push_str(&format!("flow_mol_s = {f:e}\n"));
    }
    out
}

fn print_state(state: &capmap::PlatformState) {
    for s in StageId::ALL {
        println!("  T_{}  = {:.6} K", s.name(), state.temps[s]);
    }
    if let Some(p) = state.p_condenser {
        println!("  p_condenser = {p:.3} Pa");
    }
    if let Some(p) = state.p_still {
        println!("  p_still = {p:.4} Pa");
    }
    if let Some(f) = state.flow {
        println!("  flow = {f:.6e} mol/s");
    }
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Simulate {
            params,
            campaign,
            out,
            seed,
            drift,
        } => {
            let params = match params.as_str() {
                "default" => SyntheticParams::default(),
                path => toml::from_str(
                    &std::fs::read_to_string(path).with_context(|| format!("opening {path}"))?,
                )
                .map_err(|e| CapmapError::BadMetadata(format!("params: {e}")))?,
            };
            let mut spec = match campaign.as_str() {
                "dense" => CampaignSpec::dense_default(),
                "sparse" => CampaignSpec::sparse_survey(),
                path => toml::from_str(
                    &std::fs::read_to_string(path).with_context(|| format!("opening {path}"))?,
                )
                .map_err(|e| CapmapError::BadMetadata(format!("campaign: {e}")))?,
            };
            if let Some(seed) = seed {
                spec.seed = seed;
                spec.noise = true;
            }
            if drift {
                spec.drift = true;
            }
            let ds = run_campaign(&params, &spec)?;
            write_atomic(&out.join("campaign.csv"), &ds.to_table_string())?;
            write_atomic(&out.join("campaign.meta.toml"), &ds.to_metadata_string())?;
            println!(
                "simulated {} scenarios -> {} (noise: {}, drift: {})",
                ds.records.len(),
                out.display(),
                spec.noise,
                spec.drift
            );
            Ok(())
        }

        Command::Validate { data, correct_drift: rate } => {
            let mut ds = load_dataset(&data)?;
            if let Some(rate) = rate {
                let t0 = ds
                    .records
                    .first()
                    .and_then(|r| r.timestamp)
                    .ok_or_else(|| anyhow!("drift correction needs timestamps"))?;
                let corrected = correct_drift(&ds, StageId::Pt1, rate, t0)?;
                println!("{corrected}");
                ds = corrected.dataset;
            }
            let report = validate_dataset(&ds);
            print!("{report}");
            Ok(())
        }

        Command::Build { data, out } => {
            let ds = load_dataset(&data)?;
            let map = build_map(&ds)?;
            let grid = map.grid();
            write_atomic(&out, &write_archive(&ds)?)?;
            println!(
                "map built: {} populated nodes, {} cells ({} valid, {} invalid) -> {}",
                grid.populated_node_count(),
                grid.cell_count(),
                grid.valid_cell_count(),
                grid.invalid_cell_count(),
                out.display()
            );
            Ok(())
        }

        Command::Query { map, load, out } => {
            let m = load_map(&map)?;
            let q = load.to_load_vector()?;
            let r = m.query(&q)?;
            println!("query {q}");
            println!("containment: {:?}, cell: {:?}", r.containment, r.cell);
            print_state(&r.state);
            if let Some(out) = out {
                write_atomic(&out, &state_toml(&r.state))?;
                println!("state written to {}", out.display());
            }
            Ok(())
        }

        Command::Slice {
            map,
            x,
            y,
            field,
            fixed,
            out,
            table,
        } => {
            let m = load_map(&map)?;
            let spec = SliceSpec {
                x_stage: x,
                y_stage: y,
                fixed: fixed.to_load_vector()?,
                field,
            };
            let t = slice(&m, &spec)?;
            let gaps = t.values.iter().filter(|v| v.is_none()).count();
            write_atomic(&out, &render_slice_heatmap(&t))?;
            println!(
                "slice {} over {} x {}: {} points ({} gaps) -> {}",
                t.field,
                x,
                y,
                t.values.len(),
                gaps,
                out.display()
            );
            if let Some(table_path) = table {
                write_atomic(&table_path, &t.to_csv())?;
                println!("table written to {}", table_path.display());
            }
            Ok(())
        }

        Command::FitLinear {
            data,
            small_load_fraction,
            out,
            residuals: residuals_out,
        } => {
            let ds = load_dataset(&data)?;
            let model = fit_coupling(&ds, small_load_fraction)?;
            write_atomic(&out, &model.to_csv())?;
            println!(
                "coupling matrix fitted (loads up to {:.0}% of each axis) -> {}",
                small_load_fraction * 100.0,
                out.display()
            );
            for i in StageId::ALL {
                let row: Vec<String> = StageId::ALL
                    .iter()
                    .map(|&j| format!("{:>10.3e}", model.coefficient(i, j)))
                    .collect();
                println!("  {} [{}] K/W", i.name(), row.join(" "));
            }
            let table = residuals(&model, &ds);
            println!("residuals over the full dataset (max abs per stage):");
            for s in StageId::ALL {
                println!(
                    "  {}: {:.3e} K ({:.2}%)",
                    s.name(),
                    table.max_abs_k[s],
                    table.max_abs_pct[s]
                );
            }
            if let Some(res_out) = residuals_out {
                write_atomic(&res_out, &table.to_csv())?;
                println!("residual table written to {}", res_out.display());
            }
            Ok(())
        }

        Command::Payload {
            spec,
            temps_from,
            equilibrium,
            ambient_k,
            damping,
            tol,
            max_iterations,
            data_dir,
            out,
        } => {
            let payload = match spec.as_str() {
                "validation" => shipped::validation_payload(),
                path => capmap::PayloadSpec::parse_toml(
                    &std::fs::read_to_string(path).with_context(|| format!("opening {path}"))?,
                )?,
            };
            let lib = load_library(&data_dir)?;
            let m = load_map(&temps_from)?;
            let base = m.query(&m.min_corner())?.state;

            let mut report = format!("payload: {}\n", payload.name);
            if equilibrium {
                let opts = capmap::EquilibriumOptions {
                    damping,
                    tol_temp_rel: tol,
                    tol_load_rel: tol,
                    max_iterations,
                    ambient_t_k: ambient_k,
                };
                let r = capmap::solve_equilibrium(&m, &payload, &lib, &opts)?;
                report.push_str(&format!("{r}"));
                print!("{r}");
                if !r.converged {
                    write_atomic(&out, &report)?;
                    return Err(CapmapError::Inverse(format!(
                        "equilibrium did not converge within {max_iterations} iterations"
                    ))
                    .into());
                }
            } else {
                let loads = capmap::aggregate_loads(&payload, &lib, &base.temps, ambient_k)?;
                report.push_str("one-shot estimate at the map's base temperatures\n");
                for (s, q) in loads.0.iter() {
                    report.push_str(&format!("  {s}: {q:.6e} W\n"));
                }
                println!("estimated loads at base temperatures:");
                for (s, q) in loads.0.iter() {
                    println!("  {s}: {q:.6e} W");
                }
                match m.query(&loads) {
                    Ok(r) => {
                        report.push_str("predicted state at those loads:\n");
                        report.push_str(&state_toml(&r.state));
                        println!("predicted state at those loads:");
                        print_state(&r.state);
                    }
                    Err(e) => {
                        report.push_str(&format!("prediction unavailable: {e}\n"));
                        println!("prediction unavailable: {e}");
                    }
                }
            }
            write_atomic(&out, &report)?;
            println!("report written to {}", out.display());
            Ok(())
        }

        Command::Infer {
            map,
            observed,
            starts,
            out,
        } => {
            let m = load_map(&map)?;
            let (obs, weights) = load_observed(&observed)?;
            let opts = InferOptions {
                starts,
                weights,
                ..InferOptions::default()
            };
            let inf = infer_load(&m, &obs, &opts)?;
            println!("inferred loads (weighted RMS residual {:.3e} K):", inf.residual_k);
            for (s, q) in inf.q.0.iter() {
                println!("  {s}: {q:.6e} W");
            }
            if inf.non_unique {
                println!("warning: {} alternative minimizers within 2x residual", inf.alternatives.len());
                for (q, r) in &inf.alternatives {
                    println!("  alternative (residual {r:.3e} K): {q}");
                }
            }
            if let Some(out) = out {
                let mut text = String::from("[inferred_loads_w]\n");
                for (s, q) in inf.q.0.iter() {
                    text.push_str(&format!("{} = {:e}\n", s.key(), q));
                }
                text.push_str(&format!(
                    "\n[diagnostics]\nresidual_k = {:e}\nnon_unique = {}\nevaluations = {}\n",
                    inf.residual_k, inf.non_unique, inf.evaluations
                ));
                write_atomic(&out, &text)?;
                println!("inference written to {}", out.display());
            }
            Ok(())
        }

        Command::Headroom {
            map,
            stage,
            limits,
            fixed,
            surface,
            x,
            y,
            out,
            svg,
        } => {
            let m = load_map(&map)?;
            let lim = load_limits(&limits)?;
            let fixed = fixed.to_load_vector()?;
            if surface {
                let (x, y) = match (x, y) {
                    (Some(x), Some(y)) => (x, y),
                    _ => return Err(anyhow!("--surface needs --x and --y stages")),
                };
                let s = headroom_surface(&m, x, y, &fixed, &lim)?;
                println!(
                    "admissibility surface {} x {}: {} of {} points admissible",
                    x,
                    y,
                    s.admissible_count(),
                    s.points.len()
                );
                if let Some(out) = out {
                    write_atomic(&out, &s.to_csv())?;
                    println!("surface written to {}", out.display());
                }
                if let Some(svg_path) = svg {
                    write_atomic(&svg_path, &render_headroom_map(&s))?;
                    println!("admissibility map written to {}", svg_path.display());
                }
            } else {
                let stage = stage.ok_or_else(|| anyhow!("--stage required (or use --surface)"))?;
                let r = max_stage_power(&m, stage, &fixed, &lim)?;
                println!("{r}");
                if let Some(out) = out {
                    let text = format!(
                        "stage,admissible_max_W,binding,zero_headroom,scan_fallback\n{},{:e},{},{},{}\n",
                        r.stage, r.admissible_max_w, r.binding, r.zero_headroom, r.used_scan_fallback
                    );
                    write_atomic(&out, &text)?;
                    println!("report written to {}", out.display());
                }
            }
            Ok(())
        }

        Command::Diff { a, b, out } => {
            let map_a = load_map(&a)?;
            let map_b = load_map(&b)?;
            let d = diff_maps(&map_a, &map_b)?;
            println!("{} shared nodes; per-stage changes (mean %, max |%|):", d.nodes.len());
            for s in StageId::ALL {
                println!(
                    "  {}: {:+.4}% mean, {:.4}% max",
                    s.name(),
                    d.mean_pct[s],
                    d.max_abs_pct[s].abs()
                );
            }
            if let Some(out) = out {
                write_atomic(&out, &d.to_csv())?;
                println!("per-node offsets written to {}", out.display());
            }
            Ok(())
        }
    }
}
