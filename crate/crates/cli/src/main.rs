use std::io::{BufReader, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mlcforge::analysis::{analyze, lint_automl, Analysis, AnalyzeOptions};
use mlcforge::build::{self, package, ArtifactKind, BuildOptions, Launcher, MockBridge, MockLauncher, ProcessLauncher, Store};
use mlcforge::codegen::{self, backend};
use mlcforge::diag::Diagnostic;
use mlcforge::sim::{self, PredictorMode};
use mlcforge::syntax::load_project;
use mlcforge::ModelUnit;

/// Nonzero exit for findings (as opposed to tool failures).
#[derive(Debug)]
struct Findings(String);

impl std::fmt::Display for Findings {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Findings {}

const EXIT_FINDINGS: u8 = 1;
const EXIT_TOOL: u8 = 3;

#[derive(Parser)]
#[command(name = "mlcc", version, about = "Check, build, simulate and package mlcforge projects")]
struct Cli {
    /// Project directory (holds mlc.project).
    #[arg(short = 'C', long, global = true, default_value = ".")]
    project: PathBuf,
    /// Bridge command, or `mock` for the built-in deterministic trainer.
    /// Defaults to $MLCC_LAUNCHER, then the project's `launcher`.
    #[arg(long, global = true)]
    launcher: Option<String>,
    /// Seconds to wait for a bridge reply.
    #[arg(long, global = true, default_value_t = build::DEFAULT_TIMEOUT.as_secs())]
    timeout: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and analyze; print diagnostics.
    Check,
    /// Report hyperparameter findings; with --automl show the fixes.
    Lint {
        /// Apply the rule fixes to the loaded configs and report each one as AUTOFIX.
        #[arg(long)]
        automl: bool,
    },
    /// Generate code and train stale units.
    Build(BuildArgs),
    /// Same as build; --force retrains everything.
    Train(BuildArgs),
    /// Simulate a scenario and check its expectations.
    Run {
        /// Scenario file; relative paths also resolve against the project.
        scenario: PathBuf,
        /// Where predictions come from: the scenario's bindings, oracles only,
        /// or stored models for every unit.
        #[arg(long, value_enum, default_value_t = Mode::Scenario)]
        predictor: Mode,
        /// Write the trace as TSV.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Run this many times and require identical traces.
        #[arg(long, default_value_t = 1)]
        replay: usize,
    },
    /// Pack a source, model or dataset archive into the store.
    Pack {
        #[arg(value_enum)]
        kind: PackKind,
        /// Only this unit (model and dataset archives).
        #[arg(long)]
        unit: Option<String>,
    },
    /// Inspect the artifact store.
    Artifacts {
        #[command(subcommand)]
        cmd: ArtifactsCmd,
    },
    /// Serve the deterministic mock trainer over stdin/stdout.
    ServeMock {
        /// Paths in requests resolve against this directory.
        #[arg(long, default_value = ".")]
        root: PathBuf,
    },
}

#[derive(clap::Args)]
struct BuildArgs {
    /// Units trained in parallel.
    #[arg(short, long, default_value_t = 1)]
    jobs: usize,
    /// Cold-train every unit regardless of the store.
    #[arg(long)]
    force: bool,
    /// Rebuild whenever a project file changes.
    #[arg(long)]
    watch: bool,
    /// Write the build report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Print the plan without training.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum ArtifactsCmd {
    /// Stored builds and packed archives.
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum PackKind {
    Source,
    Model,
    Dataset,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Scenario,
    Oracle,
    Trained,
}

fn print_diags(diags: &[Diagnostic]) {
    for d in diags {
        eprintln!("{}", d.render());
    }
}

fn load(root: &Path) -> Result<ModelUnit> {
    let (unit, diags) = load_project(root).with_context(|| format!("loading {}", root.display()))?;
    if diags.iter().any(Diagnostic::is_error) {
        print_diags(&diags);
        return Err(Findings(format!("{} syntax error(s)", diags.iter().filter(|d| d.is_error()).count())).into());
    }
    print_diags(&diags);
    Ok(unit)
}

fn checked(root: &Path, automl: Option<bool>) -> Result<Analysis> {
    let unit = load(root)?;
    let a = analyze(&unit, AnalyzeOptions { automl });
    if a.has_errors() {
        print_diags(&a.diagnostics);
        let n = a.diagnostics.iter().filter(|d| d.is_error()).count();
        return Err(Findings(format!("{n} error(s)")).into());
    }
    Ok(a)
}

fn launcher(cli: &Cli, unit: &ModelUnit) -> Result<Box<dyn Launcher>> {
    let cmd = cli
        .launcher
        .clone()
        .or_else(|| std::env::var("MLCC_LAUNCHER").ok().filter(|s| !s.trim().is_empty()))
        .or_else(|| unit.manifest.launcher.clone())
        .context("no bridge launcher: pass --launcher, set MLCC_LAUNCHER or add `launcher` to mlc.project")?;
    if cmd.trim() == "mock" {
        return Ok(Box::new(MockLauncher::new(&unit.root)));
    }
    let l = ProcessLauncher::from_command(&cmd, &unit.root, Duration::from_secs(cli.timeout)).context("empty launcher command")?;
    Ok(Box::new(l))
}

fn backend_of(unit: &ModelUnit) -> Result<Box<dyn codegen::BackendAdapter>> {
    backend(&unit.manifest.backend).with_context(|| format!("unknown backend `{}`", unit.manifest.backend))
}

fn check(cli: &Cli) -> Result<()> {
    let unit = load(&cli.project)?;
    let a = analyze(&unit, AnalyzeOptions::default());
    print_diags(&a.diagnostics);
    let errors = a.diagnostics.iter().filter(|d| d.is_error()).count();
    let others = a.diagnostics.len() - errors;
    println!("{}: {} unit(s), {errors} error(s), {others} other finding(s)", unit.manifest.name, a.units.len());
    if errors > 0 {
        return Err(Findings(format!("{errors} error(s)")).into());
    }
    Ok(())
}

fn lint(cli: &Cli, automl: bool) -> Result<()> {
    let unit = load(&cli.project)?;
    let (diags, _) = lint_automl(&unit, automl);
    for d in &diags {
        println!("{}", d.render());
    }
    if diags.iter().any(Diagnostic::is_error) {
        return Err(Findings("lint errors".into()).into());
    }
    Ok(())
}

fn build_once(cli: &Cli, args: &BuildArgs, force: bool) -> Result<()> {
    let a = checked(&cli.project, None)?;
    let be = backend_of(&a.unit)?;
    if args.dry_run {
        let inputs = build::unit_inputs(&a, be.as_ref())?;
        let plan = build::plan(&inputs, &build::store_for(&a.unit), force)?;
        print_diags(&plan.notes);
        for e in &plan.entries {
            println!("{}\t{}", e.inputs.name, e.decision);
        }
        return Ok(());
    }
    let l = launcher(cli, &a.unit)?;
    let opts = BuildOptions { jobs: args.jobs.max(1), force };
    let out = build::build(&a, be.as_ref(), l.as_ref(), &opts)?;
    print_diags(&out.plan.notes);
    for u in &out.report.units {
        println!("{}\t{}\t{}", u.unit, u.decision, u.status.name());
        if let build::UnitStatus::Failed(msg) | build::UnitStatus::Aborted(msg) = &u.status {
            for line in msg.lines() {
                eprintln!("  {line}");
            }
        }
    }
    if let Some(path) = &args.report {
        std::fs::write(path, out.report.to_text()).with_context(|| format!("writing {}", path.display()))?;
    }
    if !out.report.succeeded() {
        return Err(Findings("some units failed to build".into()).into());
    }
    Ok(())
}

fn build_cmd(cli: &Cli, args: &BuildArgs, force: bool) -> Result<()> {
    let first = build_once(cli, args, force);
    if !args.watch {
        return first;
    }
    if let Err(e) = first {
        eprintln!("mlcc: {e:#}");
    }
    let unit = load(&cli.project)?;
    let skip = [unit.manifest.store.as_str(), codegen::GEN_DIR];
    eprintln!("watching {} (ctrl-c to stop)", cli.project.display());
    build::watch::watch(&cli.project, &skip, build::watch::POLL_INTERVAL, |changed| {
        eprintln!("changed: {}", changed.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "));
        if let Err(e) = build_once(cli, args, false) {
            eprintln!("mlcc: {e:#}");
        }
        true
    });
    Ok(())
}

fn run(cli: &Cli, scenario: &Path, mode: Mode, trace_out: Option<&Path>, replay: usize) -> Result<()> {
    let a = checked(&cli.project, None)?;
    let in_project = cli.project.join(scenario);
    let scenario = if !scenario.exists() && in_project.exists() { in_project.as_path() } else { scenario };
    let sc = sim::load_scenario(scenario).map_err(|d| {
        print_diags(&d);
        Findings(format!("invalid scenario {}", scenario.display()))
    })?;
    let mode = match mode {
        Mode::Scenario => PredictorMode::Scenario,
        Mode::Oracle => PredictorMode::Oracle,
        Mode::Trained => PredictorMode::Trained,
    };
    let needs_bridge = mode == PredictorMode::Trained
        || sc.predictors.values().any(|b| matches!(b, sim::PredictorBinding::Trained(_)));
    let l = if needs_bridge { Some(launcher(cli, &a.unit)?) } else { None };
    let store = build::store_for(&a.unit);
    let mut predictors = sim::bind_predictors(&a, &sc, &store, l.as_deref(), mode)?;
    let run = sim::replay_determinism(&a.unit, &sc, &mut predictors, replay.max(1))?;
    if let Some(path) = trace_out {
        std::fs::write(path, run.trace_text()).with_context(|| format!("writing {}", path.display()))?;
    }
    let results = run.check(&sc);
    for r in &results {
        println!("{}", r.to_line());
    }
    match &run.outcome {
        Err(e @ sim::SimError::BridgeFailure { .. }) => bail!("{e}"),
        Err(e) => return Err(Findings(format!("run stopped: {e}")).into()),
        Ok(()) => {}
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{}: {} event(s), {} of {} expectation(s) met", sc.name, run.trace.len(), results.len() - failed, results.len());
    if failed > 0 {
        return Err(Findings(format!("{failed} expectation(s) failed")).into());
    }
    Ok(())
}

fn pack(cli: &Cli, kind: PackKind, only: Option<&str>) -> Result<()> {
    let kind = match kind {
        PackKind::Source => ArtifactKind::Source,
        PackKind::Model => ArtifactKind::Model,
        PackKind::Dataset => ArtifactKind::Dataset,
    };
    let unit = load(&cli.project)?;
    let store = build::store_for(&unit);
    let packages = match kind {
        ArtifactKind::Source => {
            let a = analyze(&unit, AnalyzeOptions::default());
            let generated = if a.has_errors() { None } else { Some(codegen::generate(&a, backend_of(&unit)?.as_ref())?) };
            vec![package::package_source(&unit, generated.as_ref())?]
        }
        ArtifactKind::Model | ArtifactKind::Dataset => {
            let mut latest: Vec<build::StoreRecord> = Vec::new();
            for rec in store.records()? {
                match latest.iter_mut().find(|r| r.unit == rec.unit) {
                    Some(r) if r.build_no < rec.build_no => *r = rec,
                    Some(_) => {}
                    None => latest.push(rec),
                }
            }
            latest.retain(|r| only.is_none_or(|u| u == r.unit));
            if latest.is_empty() {
                return Err(Findings("nothing to pack; run `mlcc build` first".into()).into());
            }
            latest
                .iter()
                .map(|r| if kind == ArtifactKind::Model { package::package_model(&store, r) } else { package::package_dataset(&store, r) })
                .collect::<Result<_, _>>()?
        }
    };
    for p in packages {
        let path = package::store_package(&store, &p)?;
        println!("{}\t{}", path.display(), p.digest());
    }
    Ok(())
}

fn artifacts(cli: &Cli) -> Result<()> {
    let unit = load(&cli.project)?;
    let store: Store = build::store_for(&unit);
    let mut out = std::io::stdout().lock();
    writeln!(out, "unit\tbuild\trows\tarchive")?;
    for r in store.records()? {
        writeln!(out, "{}\t{}\t{}\t{}", r.unit, r.build_no, r.row_count, r.archive)?;
    }
    let packs = store.packages()?;
    if !packs.is_empty() {
        writeln!(out, "\nkind\tpath\tdigest")?;
        for p in packs {
            writeln!(out, "{}\t{}\t{}", p.kind, p.path, p.digest)?;
        }
    }
    Ok(())
}

fn serve_mock(root: &Path) -> Result<()> {
    let mut bridge = MockBridge::new(root);
    let stdin = std::io::stdin();
    build::bridge::serve(&mut |verb, payload| bridge.handle(verb, payload), BufReader::new(stdin.lock()), std::io::stdout())?;
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Check => check(cli),
        Cmd::Lint { automl } => lint(cli, *automl),
        Cmd::Build(args) => build_cmd(cli, args, args.force),
        Cmd::Train(args) => build_cmd(cli, args, args.force),
        Cmd::Run { scenario, predictor, trace_out, replay } => run(cli, scenario, *predictor, trace_out.as_deref(), *replay),
        Cmd::Pack { kind, unit } => pack(cli, *kind, unit.as_deref()),
        Cmd::Artifacts { cmd: ArtifactsCmd::List } => artifacts(cli),
        Cmd::ServeMock { root } => serve_mock(root),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Findings>() => {
            eprintln!("mlcc: {e}");
            ExitCode::from(EXIT_FINDINGS)
        }
        Err(e) => {
            eprintln!("mlcc: error: {e:#}");
            ExitCode::from(EXIT_TOOL)
        }
    }
}
