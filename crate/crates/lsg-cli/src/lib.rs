//! Command implementations behind the `lsg` binary: run missions, replay
//! semantic queries against a saved graph, compare the hierarchical planner
//! with the grid baseline, and export graph dumps.

use std::io::BufRead;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use lsg::export;
use lsg::geometry::{euclidean, Point3, Pose6};
use lsg::hplanner::{
    parse_query, plan_hierarchical, resolve_query, PlanContext, PlanResult, TerminalSpec,
};
use lsg::mission::{run_mission, MissionConfig, MissionOutcome};
use lsg::scene::Lsg;
use lsg::vplanner::{plan_grid, Cell, OccupancyGrid, DEFAULT_CELL_SIZE_M, DEFAULT_RISK_FACTOR};
use lsg::world::{Scenario, World};

/// Failure modes mapped to process exit codes: input errors exit 2, mission
/// aborts exit 3, planning failures exit 4.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    MissionAbort(String),
    Planning(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::MissionAbort(_) => 3,
            CliError::Planning(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::MissionAbort(m) | CliError::Planning(m) => m,
        }
    }
}

fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

/// What a `run` left on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub config: Option<String>,
    pub seed: u64,
    pub out_dir: String,
    pub artifacts: Vec<String>,
}

fn load_config(path: Option<&Path>) -> Result<MissionConfig, CliError> {
    match path {
        None => Ok(MissionConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(input_err)?;
            let config: MissionConfig = serde_json::from_str(&text).map_err(input_err)?;
            config.validate().map_err(input_err)?;
            Ok(config)
        }
    }
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario, CliError> {
    let mut scenario = Scenario::load(path).map_err(input_err)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

/// Execute a mission and write lsg.json, metrics.csv, events.log, plans.json
/// and manifest.json into `out_dir`.
pub fn cmd_run(
    scenario_path: &Path,
    config_path: Option<&Path>,
    seed: Option<u64>,
    out_dir: &Path,
    no_timing: bool,
) -> Result<RunManifest, CliError> {
    let scenario = load_scenario(scenario_path, seed)?;
    let seed = scenario.seed;
    let config = load_config(config_path)?;
    let outcome = run_mission(scenario, &config).map_err(input_err)?;
    let manifest = write_artifacts(
        &outcome,
        scenario_path,
        config_path,
        seed,
        out_dir,
        no_timing,
    )?;
    println!(
        "mission {}: {} inspected, {} detected left, {:.1} s simulated",
        if outcome.aborted.is_some() {
            "ABORTED"
        } else {
            "done"
        },
        outcome.lsg.inspected().count(),
        outcome.lsg.detected().count(),
        outcome.sim_duration_s
    );
    for artifact in &manifest.artifacts {
        println!(
            "  wrote {}",
            Path::new(&manifest.out_dir).join(artifact).display()
        );
    }
    if let Some(reason) = &outcome.aborted {
        return Err(CliError::MissionAbort(reason.clone()));
    }
    Ok(manifest)
}

fn write_artifacts(
    outcome: &MissionOutcome,
    scenario_path: &Path,
    config_path: Option<&Path>,
    seed: u64,
    out_dir: &Path,
    no_timing: bool,
) -> Result<RunManifest, CliError> {
    std::fs::create_dir_all(out_dir).map_err(input_err)?;
    let write = |name: &str, content: String| -> Result<(), CliError> {
        std::fs::write(out_dir.join(name), content).map_err(input_err)
    };
    write("lsg.json", outcome.lsg.to_json())?;
    write("metrics.csv", outcome.trace.to_csv())?;
    let mut events = String::new();
    for event in &outcome.events {
        events.push_str(&serde_json::to_string(event).map_err(input_err)?);
        events.push('\n');
    }
    write("events.log", events)?;
    let mut plans = outcome.plans.clone();
    if no_timing {
        for record in &mut plans {
            record.plan.zero_timings();
        }
    }
    write(
        "plans.json",
        serde_json::to_string_pretty(&plans).map_err(input_err)?,
    )?;
    let manifest = RunManifest {
        scenario: scenario_path.display().to_string(),
        config: config_path.map(|p| p.display().to_string()),
        seed,
        out_dir: out_dir.display().to_string(),
        artifacts: vec![
            "lsg.json".into(),
            "metrics.csv".into(),
            "events.log".into(),
            "plans.json".into(),
        ],
    };
    write(
        "manifest.json",
        serde_json::to_string_pretty(&manifest).map_err(input_err)?,
    )?;
    Ok(manifest)
}

/// World hooks for query planning: present only when a scenario is supplied.
struct QueryWorld {
    world: World,
    grid: OccupancyGrid,
}

fn query_world(scenario_path: Option<&Path>) -> Result<Option<QueryWorld>, CliError> {
    let Some(path) = scenario_path else {
        return Ok(None);
    };
    let scenario = load_scenario(path, None)?;
    let mut grid = OccupancyGrid::rasterize(&scenario, DEFAULT_CELL_SIZE_M);
    grid.inflate_risk(DEFAULT_RISK_FACTOR);
    let world = World::new(scenario).map_err(input_err)?;
    Ok(Some(QueryWorld { world, grid }))
}

/// Why a single query line failed: bad text vs failed planning.
#[derive(Debug)]
pub enum QueryFailure {
    BadQuery(String),
    Planning(String),
}

impl QueryFailure {
    pub fn message(&self) -> &str {
        match self {
            QueryFailure::BadQuery(m) | QueryFailure::Planning(m) => m,
        }
    }
}

/// Resolve one query line ("Return to Base" or the Visit grammar) and plan.
pub fn plan_one_query(
    lsg: &Lsg,
    text: &str,
    hooks: Option<&QueryWorldRef<'_>>,
) -> Result<PlanResult, QueryFailure> {
    if lsg.inspected().next().is_none() {
        return Err(QueryFailure::Planning(
            "no inspected targets: nothing to plan over".into(),
        ));
    }
    let terminal = if text.trim().eq_ignore_ascii_case("return to base") {
        TerminalSpec::target(lsg.robot_id())
    } else {
        let query = parse_query(text).map_err(|e| QueryFailure::BadQuery(e.to_string()))?;
        resolve_query(lsg, &query).map_err(|e| QueryFailure::BadQuery(e.to_string()))?
    };
    let robot = lsg.robot_pose();
    let ctx = match hooks {
        Some(h) => PlanContext {
            leg_clear: Some(h.leg_clear),
            grid: Some(h.grid),
        },
        None => PlanContext::default(),
    };
    plan_hierarchical(lsg, &robot, &terminal, &ctx)
        .map_err(|e| QueryFailure::Planning(e.to_string()))
}

pub struct QueryWorldRef<'a> {
    pub leg_clear: &'a dyn Fn(Point3, Point3) -> bool,
    pub grid: &'a OccupancyGrid,
}

/// Plan semantic queries against a saved graph, one-shot or as a line REPL.
pub fn cmd_query(
    lsg_path: &Path,
    query: Option<&str>,
    interactive: bool,
    scenario_path: Option<&Path>,
    json: bool,
    no_timing: bool,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(lsg_path).map_err(input_err)?;
    let lsg = Lsg::from_json(&text).map_err(input_err)?;
    let hooks = query_world(scenario_path)?;
    let leg_closure = hooks.as_ref().map(|h| {
        let world = h.world.clone();
        move |a: Point3, b: Point3| world.segment_clear(a, b)
    });
    let hooks_ref = match (&hooks, &leg_closure) {
        (Some(h), Some(leg)) => Some(QueryWorldRef {
            leg_clear: leg,
            grid: &h.grid,
        }),
        _ => None,
    };

    let emit = |plan: &mut PlanResult| {
        if no_timing {
            plan.zero_timings();
        }
        if json {
            println!(
                "{}",
                serde_json::to_string_pretty(plan).expect("plan serializes")
            );
        } else {
            println!("{}", plan.summary());
        }
    };

    if let Some(text) = query {
        let mut plan = plan_one_query(&lsg, text, hooks_ref.as_ref()).map_err(|e| match e {
            QueryFailure::BadQuery(m) => CliError::Input(m),
            QueryFailure::Planning(m) => CliError::Planning(m),
        })?;
        emit(&mut plan);
        return Ok(());
    }
    if interactive {
        let stdin = std::io::stdin();
        for line in stdin.lock().lines() {
            let line = line.map_err(input_err)?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                println!("usage: Visit <feature> in <level> of <target> | Return to Base");
                continue;
            }
            match plan_one_query(&lsg, trimmed, hooks_ref.as_ref()) {
                Ok(mut plan) => emit(&mut plan),
                Err(failure) => println!("error: {}", failure.message()),
            }
        }
        return Ok(());
    }
    Err(CliError::Input(
        "query needs --q \"<text>\" or --interactive".into(),
    ))
}

/// One row of the planner comparison table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRow {
    pub query_id: usize,
    pub hp_time_ms: f64,
    pub vp_time_ms: f64,
    pub hp_len_m: f64,
    pub vp_len_m: f64,
}

/// Outcome of the HP-vs-VP study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub skipped: usize,
}

impl CompareReport {
    pub fn to_csv(&self, no_timing: bool) -> String {
        let mut out = String::from("query_id,hp_time_ms,vp_time_ms,hp_len_m,vp_len_m\n");
        for row in &self.rows {
            let (hp_t, vp_t) = if no_timing {
                (0.0, 0.0)
            } else {
                (row.hp_time_ms, row.vp_time_ms)
            };
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.query_id, hp_t, vp_t, row.hp_len_m, row.vp_len_m
            ));
        }
        out
    }
}

fn sample_free_point(
    rng: &mut ChaCha8Rng,
    scenario: &Scenario,
    grid: &OccupancyGrid,
) -> Option<Point3> {
    for _ in 0..1000 {
        let fx = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let fy = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let p = Point3::xy(
            scenario.bounds.min[0] + fx * scenario.bounds.width(),
            scenario.bounds.min[1] + fy * scenario.bounds.height(),
        );
        if scenario.footprints().any(|(_, poly)| poly.contains(p)) {
            continue;
        }
        match grid.world_to_cell(p) {
            Some((ix, iy)) if grid.cell(ix, iy) != Cell::Occupied => return Some(p),
            _ => continue,
        }
    }
    None
}

/// Run a mission, then time `n` random navigation queries through both the
/// hierarchical planner and the grid baseline.
pub fn run_comparison(
    scenario: Scenario,
    config: &MissionConfig,
    n: usize,
    seed: u64,
) -> Result<CompareReport, CliError> {
    let outcome = run_mission(scenario.clone(), config).map_err(input_err)?;
    if let Some(reason) = outcome.aborted {
        return Err(CliError::MissionAbort(reason));
    }
    let lsg = outcome.lsg;
    if lsg.inspected().next().is_none() {
        return Err(CliError::Planning(
            "mission inspected nothing; no graph to query".into(),
        ));
    }
    let mut grid = OccupancyGrid::rasterize(&scenario, DEFAULT_CELL_SIZE_M);
    grid.inflate_risk(DEFAULT_RISK_FACTOR);
    let world = World::new(scenario.clone()).map_err(input_err)?;
    let leg_clear = |a: Point3, b: Point3| world.segment_clear(a, b);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut skipped = 0usize;
    let mut query_id = 0usize;
    while rows.len() < n && query_id < n * 10 {
        query_id += 1;
        let Some(start) = sample_free_point(&mut rng, &scenario, &grid) else {
            skipped += 1;
            continue;
        };
        let Some(goal) = sample_free_point(&mut rng, &scenario, &grid) else {
            skipped += 1;
            continue;
        };
        // The hierarchical terminal is the stored pose nearest the goal.
        let mut nearest: Option<(f64, TerminalSpec, Point3)> = None;
        for target in lsg.inspected() {
            for level in target.levels().expect("inspected").children() {
                for pose in level.poses.children() {
                    let d = euclidean(pose.pose.position, goal);
                    if nearest.as_ref().is_none_or(|(bd, _, _)| d < *bd) {
                        nearest = Some((
                            d,
                            TerminalSpec {
                                target: target.id,
                                level: Some(level.id),
                                pose: Some(pose.id),
                            },
                            pose.pose.position,
                        ));
                    }
                }
            }
        }
        let (_, terminal, terminal_pos) = nearest.expect("inspected targets have poses");
        let ctx = PlanContext {
            leg_clear: Some(&leg_clear),
            grid: Some(&grid),
        };
        let start_pose = Pose6::level(start, 0.0);
        let hp = match plan_hierarchical(&lsg, &start_pose, &terminal, &ctx) {
            Ok(plan) => plan,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let vp = match plan_grid(&grid, start, terminal_pos) {
            Ok(plan) => plan,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        rows.push(CompareRow {
            query_id: rows.len(),
            hp_time_ms: hp.layers.iter().map(|l| l.time_ms).sum(),
            vp_time_ms: vp.time_ms,
            hp_len_m: hp.total_length_m,
            vp_len_m: vp.length_m,
        });
    }
    Ok(CompareReport { rows, skipped })
}

pub fn cmd_compare(
    scenario_path: &Path,
    config_path: Option<&Path>,
    n: usize,
    seed: u64,
    out: Option<&Path>,
    no_timing: bool,
) -> Result<CompareReport, CliError> {
    let scenario = load_scenario(scenario_path, None)?;
    let config = load_config(config_path)?;
    let report = run_comparison(scenario, &config, n, seed)?;
    let csv = report.to_csv(no_timing);
    match out {
        Some(path) => std::fs::write(path, &csv).map_err(input_err)?,
        None => print!("{csv}"),
    }
    if !report.rows.is_empty() {
        let median = |mut xs: Vec<f64>| -> f64 {
            xs.sort_by(f64::total_cmp);
            xs[xs.len() / 2]
        };
        let hp: Vec<f64> = report.rows.iter().map(|r| r.hp_time_ms).collect();
        let vp: Vec<f64> = report.rows.iter().map(|r| r.vp_time_ms).collect();
        eprintln!(
            "# {} rows, {} skipped; median hp {:.4} ms, median vp {:.4} ms",
            report.rows.len(),
            report.skipped,
            median(hp),
            median(vp)
        );
    }
    Ok(report)
}

/// Export a saved graph's union as DOT, GraphML or lossless JSON.
pub fn cmd_export(lsg_path: &Path, format: &str, out: Option<&Path>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(lsg_path).map_err(input_err)?;
    let lsg = Lsg::from_json(&text).map_err(input_err)?;
    let union = lsg.graph_union();
    let rendered = match format {
        "dot" => export::to_dot(&union),
        "graphml" => export::to_graphml(&union),
        "union-json" => export::to_union_json(&union),
        other => return Err(CliError::Input(format!("unknown export format `{other}`"))),
    };
    match out {
        Some(path) => std::fs::write(path, rendered).map_err(input_err)?,
        None => print!("{rendered}"),
    }
    Ok(())
}
