//! Command-line front door for the restoration scheduling toolkit:
//! `validate` checks a dataset, `schedule` plans one period, `benchmark`
//! compares the methods over a window, and `restore-sim` runs the benchmark
//! under the built-in earthquake-restoration timeline.
//!
//! Exit codes are a stable contract: 0 success, 1 usage or configuration
//! error, 2 data error, 3 solver failure.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use gridrestore_core::baselines::{build_milp_instance, dump_lp, run_milp_uc, run_mng};
use gridrestore_core::grid::{GenType, GridCase, Method, Schedule};
use gridrestore_core::harness::{
    renewable_share, report_text, run_window, schedule_csv, write_outputs, BenchmarkReport,
    WindowOutcome,
};
use gridrestore_core::ingest::{
    case_counts, load_case, load_timeseries, period_index, TimeseriesSet, STUDY_YEAR,
};
use gridrestore_core::scenario::{
    build_period, AreaDefaults, GoalPortfolio, ScenarioError, ScenarioMeta, StageConfig,
};
use gridrestore_core::steady_state::{opf_check, SolveOptions};
use gridrestore_core::uss::run_uss;

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

#[derive(Parser, Debug)]
#[command(
    name = "gridrestore",
    version,
    about = "Generation prioritization for power-system operation and restoration"
)]
struct Cli {
    /// TOML run configuration; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Write solver iteration traces next to the other artifacts.
    #[arg(long, global = true)]
    trace: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct IoArgs {
    /// Dataset directory holding bus/branch/gen CSVs and timeseries/.
    #[arg(long, value_name = "DIR")]
    data_dir: Option<PathBuf>,
    /// Directory for reports, schedules and dumps (default "out").
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct WindowArgs {
    /// Comma-separated subset of uss,milp,mng (default all three).
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    methods: Option<Vec<String>>,
    /// First period of the window (1-based hour of the study year).
    #[arg(long, value_name = "N")]
    first_period: Option<u32>,
    /// Last period of the window, inclusive.
    #[arg(long, value_name = "N")]
    last_period: Option<u32>,
    /// Stage timeline TOML ("default" selects the built-in plan).
    #[arg(long, value_name = "FILE")]
    stage_config: Option<PathBuf>,
    /// Run methods on separate threads; timing columns become
    /// non-comparable across methods.
    #[arg(long)]
    parallel: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a dataset and report its structural counts.
    Validate {
        #[command(flatten)]
        io: IoArgs,
    },
    /// Schedule a single period and write every chosen method's plan.
    Schedule {
        #[command(flatten)]
        io: IoArgs,
        /// Period to schedule (1-based hour of the study year).
        #[arg(long, value_name = "N")]
        period: Option<u32>,
        /// Comma-separated subset of uss,milp,mng (default all three).
        #[arg(long, value_delimiter = ',', value_name = "LIST")]
        methods: Option<Vec<String>>,
        /// Stage timeline TOML ("default" selects the built-in plan).
        #[arg(long, value_name = "FILE")]
        stage_config: Option<PathBuf>,
        /// Write the optimizer input of every energized area in LP format.
        #[arg(long)]
        dump_lp: bool,
    },
    /// Compare the methods hour-by-hour over a window and write reports.
    Benchmark {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        window: WindowArgs,
    },
    /// Benchmark under the built-in earthquake-restoration timeline
    /// (default window: the whole staged span).
    RestoreSim {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        window: WindowArgs,
    },
}

// ---------------------------------------------------------------------------
// Config file: every knob a flag can set, all optional; flags win.
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    data_dir: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    methods: Option<Vec<String>>,
    stage_config: Option<PathBuf>,
    parallel: Option<bool>,
    window: Option<WindowConfig>,
    goal: Option<GoalConfig>,
    solver: Option<SolverConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowConfig {
    first_period: Option<u32>,
    last_period: Option<u32>,
    first: Option<DateHour>,
    last: Option<DateHour>,
}

/// Calendar timestamp inside the study year.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct DateHour {
    #[serde(default = "study_year")]
    year: i32,
    month: u32,
    day: u32,
    hour: u32,
}

fn study_year() -> i32 {
    STUDY_YEAR
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalConfig {
    solar_pct: Option<f64>,
    hydro_pct: Option<f64>,
    wind_pct: Option<f64>,
    other_pct: Option<f64>,
    min_renewable_pct: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverConfig {
    tol: Option<f64>,
    max_iter: Option<usize>,
    enforce_q_limits: Option<bool>,
    max_q_rounds: Option<usize>,
    enforce_branch_ratings: Option<bool>,
    loss_adder_pct: Option<f64>,
}

// ---------------------------------------------------------------------------
// Error-to-exit-code contract
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum CliError {
    /// Bad flags, bad config file, out-of-range windows. Exit 1.
    Usage(String),
    /// Unreadable or malformed input data. Exit 2.
    Data(String),
    /// A requested schedule came back not working. Exit 3.
    Solver(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Solver(m) => write!(f, "solver failure: {m}"),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn data(msg: impl fmt::Display) -> CliError {
    CliError::Data(msg.to_string())
}

// ---------------------------------------------------------------------------
// Resolution: config file + flags → one concrete run setup
// ---------------------------------------------------------------------------

struct Setup {
    data_dir: PathBuf,
    output_dir: PathBuf,
    methods: Vec<Method>,
    stages: Option<StageConfig>,
    parallel: bool,
    goal: GoalPortfolio,
    opts: SolveOptions,
    window: Option<(u32, u32)>,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else { return Ok(RunConfig::default()) };
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| usage(format!("bad config {}: {e}", path.display())))
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>, CliError> {
    let mut methods = Vec::new();
    for name in names {
        let method = match name.trim().to_ascii_lowercase().as_str() {
            "uss" => Method::Uss,
            "milp" | "milp_uc" | "milp-uc" => Method::MilpUc,
            "mng" => Method::Mng,
            other => return Err(usage(format!("unknown method {other:?} (use uss, milp, mng)"))),
        };
        if !methods.contains(&method) {
            methods.push(method);
        }
    }
    if methods.is_empty() {
        return Err(usage("the method list is empty"));
    }
    Ok(methods)
}

fn resolve_stages(path: Option<&Path>) -> Result<Option<StageConfig>, CliError> {
    let Some(path) = path else { return Ok(None) };
    if path.as_os_str() == "default" {
        return Ok(Some(StageConfig::csz_default()));
    }
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read stage config {}: {e}", path.display())))?;
    StageConfig::from_toml(&text)
        .map(Some)
        .map_err(|e| usage(format!("bad stage config {}: {e}", path.display())))
}

fn resolve_window(
    flags_first: Option<u32>,
    flags_last: Option<u32>,
    cfg: Option<&WindowConfig>,
) -> Result<Option<(u32, u32)>, CliError> {
    let date_to_period = |d: DateHour| {
        period_index(d.year, d.month, d.day, d.hour).map_err(|e| usage(e.to_string()))
    };
    let mut first = flags_first;
    let mut last = flags_last;
    if let Some(cfg) = cfg {
        if first.is_none() {
            first = match (cfg.first_period, cfg.first) {
                (Some(p), _) => Some(p),
                (None, Some(d)) => Some(date_to_period(d)?),
                (None, None) => None,
            };
        }
        if last.is_none() {
            last = match (cfg.last_period, cfg.last) {
                (Some(p), _) => Some(p),
                (None, Some(d)) => Some(date_to_period(d)?),
                (None, None) => None,
            };
        }
    }
    match (first, last) {
        (Some(f), Some(l)) if f == 0 => Err(usage(format!("periods are 1-based, got {f}..={l}"))),
        (Some(f), Some(l)) if f > l => Err(usage(format!("empty window {f}..={l}"))),
        (Some(f), Some(l)) => Ok(Some((f, l))),
        (None, None) => Ok(None),
        _ => Err(usage("a window needs both its first and last period")),
    }
}

fn resolve_setup(
    config: &RunConfig,
    io: &IoArgs,
    window: &WindowArgs,
) -> Result<Setup, CliError> {
    let data_dir = io
        .data_dir
        .clone()
        .or_else(|| config.data_dir.clone())
        .ok_or_else(|| usage("no dataset directory (--data-dir or data_dir in config)"))?;
    let output_dir = io
        .output_dir
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let methods = match window.methods.as_ref().or(config.methods.as_ref()) {
        Some(names) => parse_methods(names)?,
        None => Method::ALL.to_vec(),
    };
    let stages = resolve_stages(
        window.stage_config.as_deref().or(config.stage_config.as_deref()),
    )?;
    let parallel = window.parallel || config.parallel.unwrap_or(false);

    let mut goal = GoalPortfolio::default();
    if let Some(g) = &config.goal {
        if let Some(v) = g.solar_pct {
            goal.solar_pct = v;
        }
        if let Some(v) = g.hydro_pct {
            goal.hydro_pct = v;
        }
        if let Some(v) = g.wind_pct {
            goal.wind_pct = v;
        }
        if let Some(v) = g.other_pct {
            goal.other_pct = v;
        }
        if let Some(v) = g.min_renewable_pct {
            goal.min_renewable_pct = v;
        }
    }

    let mut opts = SolveOptions::default();
    if let Some(s) = &config.solver {
        if let Some(v) = s.tol {
            opts.tol = v;
        }
        if let Some(v) = s.max_iter {
            opts.max_iter = v;
        }
        if let Some(v) = s.enforce_q_limits {
            opts.enforce_q_limits = v;
        }
        if let Some(v) = s.max_q_rounds {
            opts.max_q_rounds = v;
        }
        if let Some(v) = s.enforce_branch_ratings {
            opts.enforce_branch_ratings = v;
        }
        if let Some(v) = s.loss_adder_pct {
            opts.loss_adder_pct = v;
        }
    }

    let window =
        resolve_window(window.first_period, window.last_period, config.window.as_ref())?;

    Ok(Setup { data_dir, output_dir, methods, stages, parallel, goal, opts, window })
}

fn load_system(dir: &Path) -> Result<(GridCase, TimeseriesSet), CliError> {
    let case = load_case(dir).map_err(data)?;
    let ts = load_timeseries(dir, &case).map_err(data)?;
    Ok((case, ts))
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

/// Reference layout of the full source dataset.
const REFERENCE_COUNTS: (usize, usize, usize, usize, usize) = (73, 120, 158, 51, 8784);

fn cmd_validate(config: &RunConfig, io: &IoArgs) -> Result<(), CliError> {
    let data_dir = io
        .data_dir
        .clone()
        .or_else(|| config.data_dir.clone())
        .ok_or_else(|| usage("no dataset directory (--data-dir or data_dir in config)"))?;
    let (case, ts) = load_system(&data_dir)?;
    let c = case_counts(&case);
    println!("{}", data_dir.display());
    println!("  buses         {}", c.buses);
    println!("  branches      {}", c.branches);
    println!(
        "  generators    {} ({} conventional, {} renewable, {} storage, {} sync-cond)",
        c.generators, c.conventional, c.renewable, c.storage, c.sync_cond
    );
    println!("  loads         {}", c.loads);
    println!("  periods       {}", ts.period_count);
    let (rb, rl, rg, rd, rp) = REFERENCE_COUNTS;
    if (c.buses, c.branches, c.generators, c.loads, ts.period_count) == (rb, rl, rg, rd, rp) {
        println!("layout matches the reference system ({rb}/{rl}/{rg}/{rd}/{rp})");
    } else {
        println!(
            "layout differs from the reference system \
             ({rb} buses / {rl} branches / {rg} generators / {rd} loads / {rp} periods)"
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// schedule
// ---------------------------------------------------------------------------

struct PeriodPlan {
    method: Method,
    schedule: Schedule,
}

fn run_one_method(
    method: Method,
    case: &GridCase,
    meta: &ScenarioMeta,
    period: u32,
    opts: &SolveOptions,
) -> Schedule {
    match method {
        Method::Uss => run_uss(case, meta, None, opts).schedule,
        Method::MilpUc => run_milp_uc(case, period, None, opts).schedule,
        Method::Mng => run_mng(case, meta, None, opts).schedule,
    }
}

/// Re-checks a finished plan with tracing on and renders the iteration log.
fn verification_trace(case: &GridCase, schedule: &Schedule, opts: &SolveOptions) -> String {
    let mut replay = case.clone();
    for g in &mut replay.generators {
        if g.gtype == GenType::Conventional {
            if let Some(&on) = schedule.unit_status.get(&g.id) {
                g.status = on;
            }
        }
    }
    let traced = SolveOptions { record_trace: true, ..opts.clone() };
    let check = opf_check(&replay, &traced);
    let mut text = String::new();
    for line in &check.power_flow.trace {
        text.push_str(line);
        text.push('\n');
    }
    text.push_str(&format!("working: {}\n", check.working));
    for reason in &check.reasons {
        text.push_str(&format!("reason: {reason}\n"));
    }
    text
}

#[allow(clippy::too_many_arguments)]
fn cmd_schedule(
    config: &RunConfig,
    io: &IoArgs,
    period: Option<u32>,
    methods: Option<&Vec<String>>,
    stage_config: Option<&Path>,
    dump_lp_flag: bool,
    trace: bool,
) -> Result<(), CliError> {
    let window = WindowArgs {
        methods: methods.cloned(),
        stage_config: stage_config.map(Path::to_path_buf),
        ..WindowArgs::default()
    };
    let setup = resolve_setup(config, io, &window)?;
    let period = period.ok_or_else(|| usage("schedule needs --period"))?;
    let (case, ts) = load_system(&setup.data_dir)?;
    if period == 0 || period as usize > ts.period_count {
        return Err(usage(format!(
            "period {period} outside the series (1..={})",
            ts.period_count
        )));
    }

    let defaults = AreaDefaults::compute(&case, &ts);
    let (scase, meta) =
        build_period(&case, &defaults, &ts, period, &setup.goal, setup.stages.as_ref())
            .map_err(scenario_error)?;

    let mut plans = Vec::new();
    for &method in &setup.methods {
        let schedule = run_one_method(method, &scase, &meta, period, &setup.opts);
        let enabled = schedule.enabled_conventional(&scase);
        let share = renewable_share(&scase, &schedule);
        println!(
            "{method} period {period}: {}, {enabled} conventional units enabled, \
             renewable share {share:.4}, {:.3}s",
            if schedule.feasible { "working" } else { "not working" },
            schedule.elapsed_s
        );
        plans.push(PeriodPlan { method, schedule });
    }

    for plan in &plans {
        let dir = setup.output_dir.join("schedules").join(plan.method.tag());
        fs::create_dir_all(&dir).map_err(data)?;
        fs::write(dir.join(format!("{period}.csv")), schedule_csv(&plan.schedule))
            .map_err(data)?;
        if trace {
            let tdir = setup.output_dir.join("trace");
            fs::create_dir_all(&tdir).map_err(data)?;
            fs::write(
                tdir.join(format!("{}_{period}.log", plan.method.tag())),
                verification_trace(&scase, &plan.schedule, &setup.opts),
            )
            .map_err(data)?;
        }
    }
    if dump_lp_flag {
        let dir = setup.output_dir.join("lp");
        fs::create_dir_all(&dir).map_err(data)?;
        for area in scase.energized_areas() {
            let inst = build_milp_instance(&scase, area, None);
            fs::write(dir.join(format!("area_{area}_{period}.lp")), dump_lp(&inst))
                .map_err(data)?;
        }
    }

    let broken: Vec<String> = plans
        .iter()
        .filter(|p| !p.schedule.feasible)
        .map(|p| p.method.to_string())
        .collect();
    if broken.is_empty() {
        Ok(())
    } else {
        Err(CliError::Solver(format!(
            "no working schedule for period {period} from: {}",
            broken.join(", ")
        )))
    }
}

fn scenario_error(e: ScenarioError) -> CliError {
    match e {
        ScenarioError::BadPeriod { .. } => usage(e.to_string()),
        other => data(other),
    }
}

// ---------------------------------------------------------------------------
// benchmark / restore-sim
// ---------------------------------------------------------------------------

fn merged_ratios(report: &mut BenchmarkReport) {
    report.ratios.clear();
    if let Some(first) = report.rows.first() {
        if first.total_elapsed_s > 0.0 {
            for row in report.rows.iter().skip(1) {
                report.ratios.insert(
                    format!("elapsed_{}_over_{}", row.method.tag(), first.method.tag()),
                    row.total_elapsed_s / first.total_elapsed_s,
                );
            }
        }
    }
}

fn run_methods_parallel(
    case: &GridCase,
    ts: &TimeseriesSet,
    setup: &Setup,
    first: u32,
    last: u32,
) -> Result<WindowOutcome, CliError> {
    let partials: Vec<Result<WindowOutcome, ScenarioError>> = thread::scope(|scope| {
        let handles: Vec<_> = setup
            .methods
            .iter()
            .map(|&method| {
                scope.spawn(move || {
                    run_window(
                        case,
                        ts,
                        &[method],
                        first,
                        last,
                        &setup.goal,
                        setup.stages.as_ref(),
                        &setup.opts,
                    )
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("method thread finished")).collect()
    });

    let mut merged: Option<WindowOutcome> = None;
    for partial in partials {
        let partial = partial.map_err(scenario_error)?;
        match &mut merged {
            None => merged = Some(partial),
            Some(m) => {
                m.report.rows.extend(partial.report.rows);
                m.report.records.extend(partial.report.records);
                m.schedules.extend(partial.schedules);
                m.gpwd_tables.extend(partial.gpwd_tables);
            }
        }
    }
    let mut merged = merged.expect("at least one method requested");
    merged_ratios(&mut merged.report);
    Ok(merged)
}

fn cmd_benchmark(
    config: &RunConfig,
    io: &IoArgs,
    window: &WindowArgs,
    default_stages: bool,
    trace: bool,
) -> Result<(), CliError> {
    let mut setup = resolve_setup(config, io, window)?;
    if default_stages && setup.stages.is_none() {
        setup.stages = Some(StageConfig::csz_default());
    }
    if setup.window.is_none() {
        if let Some(stages) = setup.stages.as_ref().filter(|_| default_stages) {
            // The restoration simulation defaults to the staged span.
            let first = stages.stages.iter().map(|s| s.first_period).min();
            let last = stages.stages.iter().map(|s| s.last_period).max();
            setup.window = first.zip(last);
        }
    }
    let Some((first, last)) = setup.window else {
        return Err(usage(
            "no window: give --first-period/--last-period or a [window] config table",
        ));
    };

    let (case, ts) = load_system(&setup.data_dir)?;
    if first == 0 || last as usize > ts.period_count {
        return Err(usage(format!(
            "window {first}..={last} outside the series (1..={})",
            ts.period_count
        )));
    }
    if trace {
        eprintln!("note: --trace applies to `schedule`; benchmark timing stays untraced");
    }

    let outcome = if setup.parallel {
        eprintln!(
            "warning: --parallel runs methods on separate threads; \
             timing columns are not comparable across methods"
        );
        run_methods_parallel(&case, &ts, &setup, first, last)?
    } else {
        run_window(
            &case,
            &ts,
            &setup.methods,
            first,
            last,
            &setup.goal,
            setup.stages.as_ref(),
            &setup.opts,
        )
        .map_err(scenario_error)?
    };

    write_outputs(&setup.output_dir, &outcome).map_err(data)?;
    print!("{}", report_text(&outcome.report));
    println!("artifacts written to {}", setup.output_dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Validate { io } => cmd_validate(&config, io),
        Command::Schedule { io, period, methods, stage_config, dump_lp } => cmd_schedule(
            &config,
            io,
            *period,
            methods.as_ref(),
            stage_config.as_deref(),
            *dump_lp,
            cli.trace,
        ),
        Command::Benchmark { io, window } => cmd_benchmark(&config, io, window, false, cli.trace),
        Command::RestoreSim { io, window } => cmd_benchmark(&config, io, window, true, cli.trace),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) =>
        {
            print!("{e}");
            std::process::exit(0);
        }
        Err(e) => {
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.code());
        }
    }
}
