use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{ArgGroup, Args, Parser, Subcommand};
use gamedyn::content::{ContentProvider, RemoteConfig, RemoteProvider, StubProvider};
use gamedyn::dynamics::AdaptationParams;
use gamedyn::engine::{run_simulation, run_sweep, SimulationTrace};
use gamedyn::report::{read_trace_csv, render_chart, write_sweep_csv, write_trace_csv, ChartKind};
use gamedyn::scenario::{
    load_scenario, parse_sweep_axis, preset, ScenarioConfig, ScenarioError, SweepSpec, PRESET_NAMES,
};

#[derive(Parser)]
#[command(
    name = "gamedyn",
    version,
    about = "Gamified engagement dynamics simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its trace.
    Simulate(SimulateArgs),
    /// Run a parameter grid and write one summary row per run.
    Sweep(SweepArgs),
    /// List the built-in presets or write one to a file.
    Preset(PresetArgs),
    /// Validate a scenario file and print the report.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Render a chart from saved trace CSVs.
    Chart(ChartArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the scenario horizon.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    chart: Option<PathBuf>,
    /// Request feedback text from the endpoint in GAMEDYN_LLM_URL.
    #[arg(long)]
    remote_llm: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// `path=start:stop:step` or `path=v1,v2,...`; repeatable.
    #[arg(long = "axis", required = true)]
    axes: Vec<String>,
    /// Replicate seeds; defaults to the scenario seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Engagement overlay, one series per grid point (first seed).
    #[arg(long)]
    chart: Option<PathBuf>,
    /// Worker threads; defaults to the number of processors.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    remote_llm: bool,
}

#[derive(Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["list", "name"])))]
struct PresetArgs {
    #[arg(long)]
    list: bool,
    #[arg(long, requires = "emit")]
    name: Option<String>,
    #[arg(long)]
    emit: Option<PathBuf>,
}

#[derive(Args)]
struct ChartArgs {
    #[arg(long = "trace", required = true)]
    traces: Vec<PathBuf>,
    #[arg(long, value_parser = |s: &str| s.parse::<ChartKind>())]
    kind: ChartKind,
    #[arg(long)]
    out: PathBuf,
}

/// Exit 2 for configuration and usage problems, 1 for everything else.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Config(e.into())
    }
}

trait ResultExt<T> {
    fn config(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ResultExt<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Sweep(args) => sweep(args),
        Command::Preset(args) => preset_cmd(args),
        Command::Validate { scenario } => validate(&scenario),
        Command::Chart(args) => chart(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn read_scenario(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .config()?;
    load_scenario(&text)
        .with_context(|| format!("loading {}", path.display()))
        .config()
}

fn provider(remote: bool) -> Result<Box<dyn ContentProvider>, Failure> {
    if remote {
        let cfg = RemoteConfig::from_env().config()?;
        Ok(Box::new(RemoteProvider::new(cfg)))
    } else {
        Ok(Box::new(StubProvider))
    }
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

/// Writes every output through a temp file in the target directory, renaming
/// only after all of them were written.
fn write_outputs(outputs: &[(&Path, String)]) -> Result<(), Failure> {
    let mut staged = Vec::with_capacity(outputs.len());
    for (path, contents) in outputs {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)
            .with_context(|| format!("creating temp file for {}", path.display()))
            .runtime()?;
        tmp.write_all(contents.as_bytes())
            .with_context(|| format!("writing {}", path.display()))
            .runtime()?;
        staged.push((tmp, *path));
    }
    for (tmp, path) in staged {
        tmp.persist(path)
            .with_context(|| format!("renaming into {}", path.display()))
            .runtime()?;
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let mut cfg = read_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(steps) = args.steps {
        cfg.horizon = steps;
    }
    let report = cfg.validate();
    if !report.is_ok() {
        return Err(ScenarioError::Invalid(report).into());
    }
    let provider = provider(args.remote_llm || cfg.remote_llm)?;
    let trace = run_simulation(&cfg, provider.as_ref()).runtime()?;
    print_warnings(&trace.warnings);

    let mut outputs = vec![(args.out.as_path(), write_trace_csv(&trace))];
    if let Some(chart) = &args.chart {
        let svg = render_chart(std::slice::from_ref(&trace), ChartKind::Both).runtime()?;
        outputs.push((chart.as_path(), svg));
    }
    write_outputs(&outputs)
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let mut base = read_scenario(&args.scenario)?;
    let axes = args
        .axes
        .iter()
        .map(|a| parse_sweep_axis(a))
        .collect::<Result<Vec<_>, _>>()?;
    let remote = args.remote_llm || base.remote_llm;
    base.remote_llm = remote;
    let spec = SweepSpec {
        base,
        axes,
        replicate_seeds: args.seeds,
    };
    spec.validate()?;
    let provider = provider(remote)?;
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let results = run_sweep(&spec, provider.as_ref(), jobs).runtime()?;

    let mut failures = 0;
    for r in &results {
        print_warnings(&r.warnings);
        if let Err(e) = &r.summary {
            failures += 1;
            eprintln!(
                "warning: run {:?} seed {} failed: {e}",
                r.axis_values, r.seed
            );
        }
    }
    let paths: Vec<String> = spec.axes.iter().map(|a| a.path.clone()).collect();
    let mut outputs = vec![(
        args.out.as_path(),
        write_sweep_csv(&paths, &results).runtime()?,
    )];

    if let Some(chart) = &args.chart {
        let seed = spec.seeds()[0];
        let mut traces = Vec::new();
        for r in results
            .iter()
            .filter(|r| r.seed == seed && r.summary.is_ok())
        {
            let mut cfg = spec.base.clone();
            let mut label = Vec::new();
            for (path, v) in paths.iter().zip(&r.axis_values) {
                cfg = cfg.with_value(path, *v)?;
                label.push(format!("{path}={v}"));
            }
            cfg.seed = seed;
            cfg.name = label.join(", ");
            traces.push(run_simulation(&cfg, provider.as_ref()).runtime()?);
        }
        if traces.is_empty() {
            return Err(Failure::Runtime(anyhow!("no successful runs to chart")));
        }
        outputs.push((
            chart.as_path(),
            render_chart(&traces, ChartKind::Engagement).runtime()?,
        ));
    }
    write_outputs(&outputs)?;
    if failures > 0 {
        return Err(Failure::Runtime(anyhow!(
            "{failures} of {} runs failed",
            results.len()
        )));
    }
    Ok(())
}

fn preset_cmd(args: PresetArgs) -> Result<(), Failure> {
    if args.list {
        for name in PRESET_NAMES {
            println!("{name}");
        }
        return Ok(());
    }
    let (Some(name), Some(emit)) = (args.name, args.emit) else {
        return Err(Failure::Config(anyhow!(
            "preset needs --list or --name with --emit"
        )));
    };
    let cfg = preset(&name)?;
    write_outputs(&[(emit.as_path(), cfg.to_json())])
}

fn validate(path: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .config()?;
    match load_scenario(&text) {
        Ok(_) => {
            println!("{}: ok", path.display());
            Ok(())
        }
        Err(ScenarioError::Invalid(report)) => {
            print!("{}: {report}", path.display());
            Err(Failure::Config(anyhow!("validation failed")))
        }
        Err(e) => Err(e.into()),
    }
}

fn chart(args: ChartArgs) -> Result<(), Failure> {
    let defaults = AdaptationParams::default();
    let mut traces: Vec<SimulationTrace> = Vec::new();
    for path in &args.traces {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .config()?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let mut trace = read_trace_csv(&text, &name, (defaults.t_min, defaults.t_max))
            .with_context(|| format!("parsing {}", path.display()))
            .config()?;
        // widen the default axis to cover traces run under other bounds
        for r in &trace.rows {
            trace.t_bounds.0 = trace.t_bounds.0.min(r.t_difficulty);
            trace.t_bounds.1 = trace.t_bounds.1.max(r.t_difficulty);
        }
        traces.push(trace);
    }
    let svg = render_chart(&traces, args.kind).config()?;
    write_outputs(&[(args.out.as_path(), svg)])
}
