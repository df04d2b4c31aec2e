//! Command-line surface: single plans, experiment sweeps, benchmark
//! replays, and Timed-ESDF renderings.
//!
//! Exit codes: 0 success, 2 partial plan (goal not reached by the front
//! end), 1 any error.

mod svg;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use st_planner::dataset_replay;
use st_planner::planner::{plan_st, PlannerKind};
use st_planner::sim_harness::{self, ExperimentConfig};
use st_planner::timed_esdf::TimedEsdf;
use st_planner::types::{ScenarioConfig, StateTime, Vec2};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "st-planner", about = "State-time trajectory planning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario or experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Base RNG seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Trials per experiment point.
    #[arg(long, global = true)]
    trials: Option<usize>,

    /// Planner selection: st, vo, or wg.
    #[arg(long, global = true)]
    planner: Option<String>,

    /// Suppress wall-clock content (SVG timestamp comment, trace timings).
    #[arg(long, global = true)]
    deterministic: bool,

    /// Config overrides as key=value (e.g. --set epsilon=0.3). Keys not in
    /// the config schema are command parameters (n_obstacles, slice,
    /// resolution, traces).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Plan once on a seeded scenario; writes trajectory.json, report.json,
    /// and plan.svg.
    Plan,
    /// Run an experiment sweep; writes metrics.csv (and per-trial traces
    /// under --set traces=1).
    Sim,
    /// Replay a recorded sequence with the planner in the loop; writes
    /// bench_metrics.csv.
    Bench {
        /// Track file (normalized TSV with a '# source_fps:' header).
        #[arg(long)]
        sequence: PathBuf,
    },
    /// Sample one Timed-ESDF slice; writes CSV and an SVG heatmap.
    RenderEsdf,
}

/// Overrides split into config-field edits and command parameters.
struct Overrides {
    config_edits: BTreeMap<String, serde_json::Value>,
    params: BTreeMap<String, String>,
}

const PARAM_KEYS: [&str; 4] = ["n_obstacles", "slice", "resolution", "traces"];

fn parse_overrides(sets: &[String]) -> anyhow::Result<Overrides> {
    let mut config_edits = BTreeMap::new();
    let mut params = BTreeMap::new();
    for entry in sets {
        let (key, value) = entry
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects key=value, got '{entry}'"))?;
        if PARAM_KEYS.contains(&key) {
            params.insert(key.to_string(), value.to_string());
        } else {
            let parsed: serde_json::Value =
                serde_json::from_str(value).unwrap_or(serde_json::Value::String(value.into()));
            config_edits.insert(key.to_string(), parsed);
        }
    }
    Ok(Overrides {
        config_edits,
        params,
    })
}

fn apply_edits(
    mut value: serde_json::Value,
    edits: &BTreeMap<String, serde_json::Value>,
) -> anyhow::Result<serde_json::Value> {
    for (key, new) in edits {
        let mut cursor = &mut value;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let map = cursor
                .as_object_mut()
                .ok_or_else(|| anyhow!("cannot set '{key}': not an object"))?;
            if i == parts.len() - 1 {
                map.insert(part.to_string(), new.clone());
            } else {
                cursor = map
                    .get_mut(*part)
                    .ok_or_else(|| anyhow!("cannot set '{key}': missing '{part}'"))?;
            }
        }
    }
    Ok(value)
}

fn load_scenario(cli: &Cli, ov: &Overrides) -> anyhow::Result<ScenarioConfig> {
    let raw = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text).context("parsing config JSON")?
        }
        None => serde_json::to_value(ScenarioConfig::default())?,
    };
    let patched = apply_edits(raw, &ov.config_edits)?;
    let mut cfg: ScenarioConfig = serde_json::from_value(patched).context("invalid scenario")?;
    if let Some(seed) = cli.seed {
        cfg.rng_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_planner(name: &str) -> anyhow::Result<PlannerKind> {
    name.parse::<PlannerKind>()
        .map_err(|e| anyhow!(e.to_string()))
}

fn param<T: std::str::FromStr>(ov: &Overrides, key: &str, default: T) -> anyhow::Result<T> {
    match ov.params.get(key) {
        Some(raw) => raw
            .parse()
            .map_err(|_| anyhow!("bad value '{raw}' for {key}")),
        None => Ok(default),
    }
}

fn write(path: &Path, content: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content)?;
    Ok(())
}

fn timestamp_comment(svg: &mut svg::Svg, deterministic: bool) {
    if !deterministic {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        svg.comment(&format!("generated at unix {now}"));
    }
}

fn cmd_plan(cli: &Cli, ov: &Overrides) -> anyhow::Result<ExitCode> {
    let cfg = load_scenario(cli, ov)?;
    let n_obstacles: usize = param(ov, "n_obstacles", 40)?;
    let (world, robot) = sim_harness::init_scenario(&cfg, n_obstacles, cfg.rng_seed);
    let plan = plan_st(&world, &robot, cfg.goal, &cfg)?;

    write(
        &cli.out.join("trajectory.json"),
        &serde_json::to_string_pretty(plan.trajectory.waypoints())?,
    )?;
    write(
        &cli.out.join("report.json"),
        &serde_json::to_string_pretty(&plan.report)?,
    )?;

    let mut image = svg::Svg::new(cfg.workspace_extent, 60.0);
    timestamp_comment(&mut image, cli.deterministic);
    let t_end = plan.trajectory.end_time();
    for o in &world.obstacles.obstacles {
        let swept = o.p + o.v * (t_end - world.t_now);
        image.line(o.p, swept, "#bbbbbb", 1.0);
        image.circle(o.p, cfg.safe_distance, "#888888", 0.8);
    }
    image.polyline(
        plan.trajectory.waypoints().iter().map(|w| w.p),
        "#1f6fd0",
        2.0,
    );
    image.circle(robot.p, 0.1, "#2ca02c", 1.0);
    image.circle(cfg.goal, 0.1, "#d62728", 1.0);
    write(&cli.out.join("plan.svg"), &image.finish())?;

    Ok(if plan.complete {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_sim(cli: &Cli, ov: &Overrides) -> anyhow::Result<ExitCode> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow!("--config is required for sim"))?;
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let raw: serde_json::Value = serde_json::from_str(&text).context("parsing config JSON")?;
    let patched = apply_edits(raw, &ov.config_edits)?;
    let mut config: ExperimentConfig =
        serde_json::from_value(patched).context("invalid experiment config")?;
    if let Some(seed) = cli.seed {
        config.base.rng_seed = seed;
    }
    if let Some(trials) = cli.trials {
        config.trials = trials;
    }
    if let Some(name) = &cli.planner {
        config.planner = vec![parse_planner(name)?];
    }
    config.validate()?;

    let traces_wanted: usize = param(ov, "traces", 0)?;
    let rows = sim_harness::run_experiment_traced(&config)?;
    let metrics: Vec<_> = rows.iter().map(|(m, _)| m.clone()).collect();
    write(&cli.out.join("metrics.csv"), &sim_harness::metrics_csv(&metrics))?;
    let mut summaries = String::new();
    for (row, traces) in &rows {
        for summary in &row.outcomes {
            summaries.push_str(&serde_json::to_string(&serde_json::json!({
                "sweep_value": row.sweep_value,
                "planner": row.planner.to_string(),
                "seed": summary.seed,
                "outcome": summary.outcome,
                "time_cost": summary.time_cost,
            }))?);
            summaries.push('\n');
        }
        if traces_wanted != 0 {
            for (summary, trace) in row.outcomes.iter().zip(traces) {
                let name = format!(
                    "trace_{}_{}_{}.jsonl",
                    row.planner, row.sweep_value, summary.seed
                );
                write(&cli.out.join("traces").join(name), &trace.to_jsonl(cli.deterministic))?;
            }
        }
    }
    write(&cli.out.join("trials.jsonl"), &summaries)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(cli: &Cli, ov: &Overrides, sequence: &Path) -> anyhow::Result<ExitCode> {
    let tracks = dataset_replay::load(sequence)
        .with_context(|| format!("loading sequence {}", sequence.display()))?;
    let seq = dataset_replay::interpolate_10hz(&tracks);
    let base = load_scenario(cli, ov)?;
    let cfg = sim_harness::bench_config(&seq, &base);
    let trials = cli.trials.unwrap_or(30);
    let planners: Vec<PlannerKind> = match &cli.planner {
        Some(name) => vec![parse_planner(name)?],
        None => vec![PlannerKind::St, PlannerKind::Vo, PlannerKind::Wg],
    };
    let label = sequence
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".into());

    let mut out = String::from(
        "sequence,sweep_value,planner,success_rate,mean_time_cost,n_trials\n",
    );
    for planner in planners {
        let row = sim_harness::run_bench(&seq, &cfg, planner, trials, cfg.rng_seed);
        out.push_str(&format!(
            "{label},{:.6},{},{:.6},{:.6},{}\n",
            row.sweep_value,
            row.planner,
            row.success_rate,
            row.mean_time_cost,
            row.outcomes.len()
        ));
    }
    write(&cli.out.join("bench_metrics.csv"), &out)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_render_esdf(cli: &Cli, ov: &Overrides) -> anyhow::Result<ExitCode> {
    let cfg = load_scenario(cli, ov)?;
    let n_obstacles: usize = param(ov, "n_obstacles", 40)?;
    let slice: usize = param(ov, "slice", 0)?;
    let resolution: f64 = param(ov, "resolution", 0.1)?;
    let (world, _) = sim_harness::init_scenario(&cfg, n_obstacles, cfg.rng_seed);
    let field = TimedEsdf::build(
        &world,
        0.0,
        cfg.horizon,
        cfg.dt,
        cfg.c_eff(),
        cfg.epsilon,
    );
    let csv = field.sample_grid_csv(slice, cfg.workspace_extent, resolution)?;
    write(&cli.out.join(format!("esdf_slice_{slice}.csv")), &csv)?;

    let mut image = svg::Svg::new(cfg.workspace_extent, 60.0);
    timestamp_comment(&mut image, cli.deterministic);
    let t = slice as f64 * cfg.dt;
    let (nx, ny) = (
        (cfg.workspace_extent.x / resolution).round() as usize,
        (cfg.workspace_extent.y / resolution).round() as usize,
    );
    for iy in 0..ny {
        for ix in 0..nx {
            let p = Vec2::new(ix as f64 * resolution, iy as f64 * resolution);
            let d = field
                .query(&StateTime {
                    p,
                    v: Vec2::ZERO,
                    t,
                })?
                .d;
            image.cell(p, resolution, &svg::distance_color(d));
        }
    }
    for seg in field.slice_segments(slice) {
        image.line(seg.a, seg.b, "black", 1.5);
    }
    write(&cli.out.join(format!("esdf_slice_{slice}.svg")), &image.finish())?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> anyhow::Result<ExitCode> {
        let overrides = parse_overrides(&cli.set)?;
        match &cli.command {
            Command::Plan => cmd_plan(&cli, &overrides),
            Command::Sim => cmd_sim(&cli, &overrides),
            Command::Bench { sequence } => cmd_bench(&cli, &overrides, sequence),
            Command::RenderEsdf => cmd_render_esdf(&cli, &overrides),
        }
    };
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
