//! Command-line front end: run experiments, compare results, check model
//! files and replay recorded traces.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fmsim::bridge::{cell_model, parse, serialize, WireMessage};
use fmsim::mes::{DispatchPolicy, PriorityRule};
use fmsim::metrics::{
    compare_and_emit, read_rows, replay, rows, run_once, run_scenario, write_csv, write_json, ControllerKind,
    Scenario, ScenarioConfig,
};
use fmsim::petri::Net;

#[derive(Parser)]
#[command(name = "fmsim", version, about = "Shop-floor simulator with an agent-based execution layer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenarios and write run-<scenario>-<controller>.csv/.json.
    Run(RunArgs),
    /// Merge run files and check agents against the conventional controller.
    Compare {
        /// Directory holding run-*.csv files.
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        /// Where results.csv, results.json and the .dat tables go.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Parse and validate a NET or SETUP document.
    ValidateModel { file: PathBuf },
    /// Write the cell net, orders included, as a NET document.
    ExportModel {
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
        #[arg(long)]
        orders: Option<u32>,
        /// Defaults to stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Re-check a recorded joint trace.
    Replay {
        file: PathBuf,
        /// Orders released in the recorded run; defaults to the highest
        /// order commanded.
        #[arg(long)]
        orders: Option<u32>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenarios to run, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = Scenario::ALL)]
    scenario: Vec<Scenario>,
    /// Controllers to run, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = ControllerKind::ALL)]
    controller: Vec<ControllerKind>,
    /// Settings file; flags given on the command line win.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    orders: Option<u32>,
    #[arg(long)]
    runs: Option<usize>,
    /// Explicit run seeds, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
    seeds: Option<Vec<u64>>,
    /// First seed; runs use consecutive seeds from here.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    failure_probability: Option<f64>,
    #[arg(long)]
    repair_ms: Option<u64>,
    #[arg(long)]
    policy: Option<DispatchPolicy>,
    #[arg(long)]
    priority: Option<PriorityRule>,
    #[arg(long)]
    max_wip: Option<u32>,
    #[arg(long, default_value = "results", value_name = "DIR")]
    out: PathBuf,
    /// Print the effective settings of each run group and stop.
    #[arg(long)]
    print_config: bool,
    /// Hold runs to wall-clock pace, in simulated seconds per second.
    #[arg(long, value_name = "SPEEDUP")]
    pace: Option<f64>,
    /// Record the full joint trace of the first seed (one scenario and
    /// controller only).
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Compare { input, out } => compare(&input, out.as_deref().unwrap_or(&input)),
        Command::ValidateModel { file } => validate_model(&file),
        Command::ExportModel { config, orders, out } => export_model(config, orders, out),
        Command::Replay { file, orders } => replay_file(&file, orders),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn settings(args: &RunArgs, scenario: Scenario, controller: ControllerKind) -> Result<ScenarioConfig> {
    let mut c = match &args.config {
        Some(path) => ScenarioConfig::from_config_text(&read(path)?).with_context(|| format!("in {}", path.display()))?,
        None => ScenarioConfig::new(scenario, controller),
    };
    c.scenario = scenario;
    c.controller = controller;
    if let Some(v) = args.orders {
        c.base.order_count = v;
    }
    if let Some(v) = &args.seeds {
        c.seeds = v.clone();
        if args.runs.is_none() {
            c.runs = v.len();
        }
    }
    if let Some(v) = args.runs {
        c.runs = v;
    }
    if let Some(first) = args.seed {
        c.seeds = (first..).take(c.runs).collect();
    }
    if let Some(v) = args.failure_probability {
        c.failure_probability = v;
    }
    if let Some(v) = args.repair_ms {
        c.repair_time = v;
    }
    if let Some(v) = args.policy {
        c.policy = v;
    }
    if let Some(v) = args.priority {
        c.priority = v;
    }
    if let Some(v) = args.max_wip {
        c.max_wip = v;
    }
    c.pace = args.pace;
    c.check()?;
    Ok(c)
}

fn run(args: RunArgs) -> Result<()> {
    let mut groups = Vec::new();
    for &s in &args.scenario {
        for &c in &args.controller {
            groups.push(settings(&args, s, c)?);
        }
    }
    if args.print_config {
        for g in &groups {
            println!("# {} {}\n{}", g.scenario, g.controller, g.to_config_text());
        }
        return Ok(());
    }
    if args.trace.is_some() && groups.len() != 1 {
        bail!("--trace needs exactly one scenario and one controller");
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut troubled = 0;
    for g in &groups {
        let results = run_scenario(g)?;
        for r in &results {
            println!(
                "{} {} seed {}: {}/{} orders, lead time {} ms, {:.3} orders/h, makespan {} ms, {:.2?}",
                r.scenario,
                r.controller,
                r.seed,
                r.kpis.orders_completed,
                r.kpis.orders_released,
                r.kpis.lead_time_mean.map_or_else(|| "-".into(), |v| format!("{v:.1}")),
                r.kpis.throughput,
                r.kpis.makespan,
                r.wall
            );
            let problems = r.kpis.incomplete.len() + r.violations.len() + r.audit.len() + r.calendar_overlaps;
            if problems > 0 {
                troubled += 1;
                eprintln!(
                    "  {} incomplete orders, {} protocol violations, {} audit findings, {} calendar overlaps",
                    r.kpis.incomplete.len(),
                    r.violations.len(),
                    r.audit.len(),
                    r.calendar_overlaps
                );
                for v in r.violations.iter().take(5) {
                    eprintln!("  {v}");
                }
                for a in r.audit.iter().take(5) {
                    eprintln!("  {a}");
                }
            }
        }
        let table = rows(&results);
        let stem = format!("run-{}-{}", g.scenario, g.controller);
        let file = |ext: &str| -> Result<BufWriter<fs::File>> {
            let path = args.out.join(format!("{stem}.{ext}"));
            Ok(BufWriter::new(fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?))
        };
        write_csv(&table, file("csv")?)?;
        write_json(&table, file("json")?)?;
        if let Some(path) = &args.trace {
            let mut full = g.clone();
            full.full_trace = true;
            let r = run_once(&full, g.seeds[0])?;
            let w = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
            r.trace.write_lines(w)?;
        }
    }
    if troubled > 0 {
        bail!("{troubled} runs had problems");
    }
    Ok(())
}

fn compare(input: &Path, out: &Path) -> Result<()> {
    let mut all = Vec::new();
    let mut files: Vec<PathBuf> = fs::read_dir(input)
        .with_context(|| format!("reading {}", input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "csv")
                && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("run-"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no run-*.csv files in {}", input.display());
    }
    for f in &files {
        let text = read(f)?;
        all.extend(read_rows(text.as_bytes()).with_context(|| format!("in {}", f.display()))?);
    }
    for v in compare_and_emit(&all, out)? {
        let status = match v.holds {
            Some(true) => "holds",
            Some(false) => "FAILS",
            None => "n/a",
        };
        println!("{status:5}  {}  ({})", v.claim, v.detail);
    }
    println!("wrote {}", out.join("results.csv").display());
    Ok(())
}

fn validate_model(file: &Path) -> Result<()> {
    let bytes = fs::read(file).with_context(|| format!("reading {}", file.display()))?;
    let model = match parse(&bytes)? {
        WireMessage::Net(m) | WireMessage::Setup { net: m, .. } => m,
        _ => bail!("{} holds no NET or SETUP document", file.display()),
    };
    let (places, transitions, arcs, tokens) =
        (model.places.len(), model.transitions.len(), model.arcs.len(), model.initial.len());
    let name = model.name.clone();
    Net::new(model)?;
    println!("{name}: valid, {places} places, {transitions} transitions, {arcs} arcs, {tokens} initial tokens");
    Ok(())
}

fn export_model(config: Option<PathBuf>, orders: Option<u32>, out: Option<PathBuf>) -> Result<()> {
    let mut c = match &config {
        Some(path) => ScenarioConfig::from_config_text(&read(path)?)?,
        None => ScenarioConfig::new(Scenario::A, ControllerKind::Agents),
    };
    if let Some(n) = orders {
        c.base.order_count = n;
    }
    let bytes = serialize(&WireMessage::Net(cell_model(&c.fms(c.seeds[0]))?))?;
    match out {
        Some(path) => fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?,
        None => println!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(())
}

fn replay_file(file: &Path, orders: Option<u32>) -> Result<()> {
    let r = replay(&read(file)?, orders)?;
    println!(
        "{} lines: {} events, {} commands, {} messages, {} updates",
        r.lines, r.events, r.commands, r.messages, r.updates
    );
    println!(
        "{}/{} orders, lead time {} ms, {:.3} orders/h, makespan {} ms",
        r.kpis.orders_completed,
        r.kpis.orders_released,
        r.kpis.lead_time_mean.map_or_else(|| "-".into(), |v| format!("{v:.1}")),
        r.kpis.throughput,
        r.kpis.makespan
    );
    for (res, u) in &r.kpis.utilization {
        println!("  {res}: {u:.2}%");
    }
    for v in &r.violations {
        println!("violation: {v}");
    }
    for p in &r.problems {
        println!("audit: {p}");
    }
    if !r.violations.is_empty() || !r.problems.is_empty() {
        bail!("{} violations, {} audit findings", r.violations.len(), r.problems.len());
    }
    println!("conformant");
    Ok(())
}
