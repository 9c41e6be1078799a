use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use meshforge::backends::mock::MockGenerator;
use meshforge::backends::BackendDescriptor;
use meshforge::mesh::{read_mesh, write_mesh, MeshFormat};
use meshforge::pipeline::{report_metrics, run_script, Backends, Pipeline, PipelineConfig, Script, SessionState};
use meshforge::repo::{AssetSource, HashingEmbedder, RepoConfig, Repository};
use meshforge::simplify::{simplify, SimplifyConfig, DEFAULT_TARGET_VERTICES};
use serde_json::json;

use crate::bench::{load_dir, mock_set, parse_targets, sweep_table};
use crate::config::{ApiConfig, DEFAULT_BIND};

#[derive(Debug, Parser)]
#[command(name = "meshforge", version, about = "Turn object requests into AR-ready meshes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP API.
    Serve(ServeArgs),
    /// Decimate one mesh file to a vertex budget.
    Simplify(SimplifyArgs),
    /// Inspect or extend an asset repository.
    Repo(RepoArgs),
    /// Size and latency benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Scripted sessions.
    #[command(subcommand)]
    Session(SessionCommand),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "MFORGE_BIND", default_value = DEFAULT_BIND)]
    pub bind: SocketAddr,
    #[arg(long, env = "MFORGE_REPO", default_value = "repo")]
    pub repo: PathBuf,
    #[arg(long, env = "MFORGE_TOKEN", hide_env_values = true)]
    pub token: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TARGET_VERTICES)]
    pub target: usize,
    /// Directory of built console assets.
    #[arg(long)]
    pub console: Option<PathBuf>,
    /// JSON array of backend descriptors; unlisted kinds use mocks.
    #[arg(long)]
    pub backends: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Json,
    Text,
}

#[derive(Debug, Args)]
pub struct SimplifyArgs {
    #[arg(long, default_value_t = DEFAULT_TARGET_VERTICES)]
    pub target: usize,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "out")]
    pub output: PathBuf,
    /// Print the simplification report.
    #[arg(long)]
    pub report: Option<ReportFormat>,
    /// Let boundary vertices move.
    #[arg(long)]
    pub free_boundary: bool,
}

#[derive(Debug, Args)]
pub struct RepoArgs {
    #[arg(long, env = "MFORGE_REPO", default_value = "repo")]
    pub repo: PathBuf,
    #[command(subcommand)]
    pub action: RepoAction,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SourceArg {
    Generated,
    Imported,
    ImageDerived,
}

impl From<SourceArg> for AssetSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Generated => AssetSource::Generated,
            SourceArg::Imported => AssetSource::Imported,
            SourceArg::ImageDerived => AssetSource::ImageDerived,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum RepoAction {
    /// Store a mesh file under a label.
    Add {
        #[arg(long)]
        label: String,
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, value_enum, default_value = "imported")]
        source: SourceArg,
    },
    /// Nearest stored labels to a text.
    Query {
        #[arg(long)]
        text: String,
        #[arg(short, long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0.0)]
        min_score: f64,
    },
    /// Record counts by source and total hits.
    Stats,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Simplify a mesh set at several vertex budgets and tabulate size and time.
    Sweep {
        #[arg(long, default_value = "500,800,1000,1500,2000")]
        targets: String,
        /// Directory of `.mforge` / `.obj` meshes.
        #[arg(long)]
        dir: Option<PathBuf>,
        /// Number of mock meshes when no directory is given.
        #[arg(long, default_value_t = 20)]
        mock: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum SessionCommand {
    /// Replay a scripted session against mock backends.
    Run {
        #[arg(long)]
        script: PathBuf,
        /// Persist into this repository instead of an in-memory one.
        #[arg(long)]
        repo: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TARGET_VERTICES)]
        target: usize,
    },
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    match rt.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn broken_pipe(e: &anyhow::Error) -> bool {
    e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}

pub async fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Serve(args) => serve(args).await,
        Command::Simplify(args) => simplify_file(&args),
        Command::Repo(args) => repo(&args),
        Command::Bench(BenchCommand::Sweep { targets, dir, mock }) => {
            let targets = parse_targets(&targets)?;
            let meshes = match dir {
                Some(d) => load_dir(&d)?,
                None => mock_set(mock),
            };
            let rows = tokio::task::spawn_blocking(move || sweep_table(&meshes, &targets)).await??;
            print_json(&rows)
        }
        Command::Session(SessionCommand::Run { script, repo, target }) => session_run(&script, repo.as_deref(), target).await,
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    writeln!(std::io::stdout().lock(), "{text}")?;
    Ok(())
}

async fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let backends: Vec<BackendDescriptor> = match &args.backends {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => Vec::new(),
    };
    let config = ApiConfig {
        bind: args.bind,
        repo_path: args.repo,
        simplify_target: args.target,
        backends,
        token: args.token,
        console_dir: args.console,
    };
    crate::serve(config, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}

fn format_of(path: &Path) -> anyhow::Result<MeshFormat> {
    path.extension()
        .and_then(|e| e.to_str())
        .and_then(MeshFormat::from_extension)
        .with_context(|| format!("{}: unknown mesh extension (use .mforge or .obj)", path.display()))
}

fn simplify_file(args: &SimplifyArgs) -> anyhow::Result<()> {
    let bytes = std::fs::read(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let mesh = read_mesh(&bytes, format_of(&args.input)?).with_context(|| format!("decoding {}", args.input.display()))?;
    let cfg = SimplifyConfig {
        preserve_boundary: !args.free_boundary,
        ..SimplifyConfig::with_target(args.target)
    };
    let (out, mut report) = simplify(&mesh, &cfg)?;
    let started = Instant::now();
    let encoded = write_mesh(&out, format_of(&args.output)?);
    report.serialize_seconds = Some(started.elapsed().as_secs_f64());
    std::fs::write(&args.output, encoded).with_context(|| format!("writing {}", args.output.display()))?;
    match args.report {
        Some(ReportFormat::Json) => print_json(&report)?,
        Some(ReportFormat::Text) => writeln!(
            std::io::stdout().lock(),
            "{} -> {} vertices, {} -> {} faces, {} collapses in {:.3} s{}",
            report.initial_vertices,
            report.final_vertices,
            report.initial_faces,
            report.final_faces,
            report.collapses,
            report.decimation_seconds,
            if report.guard_blocked { " (guard blocked)" } else { "" }
        )?,
        None => {}
    }
    Ok(())
}

fn repo(args: &RepoArgs) -> anyhow::Result<()> {
    let repo = crate::open_repo(&args.repo)?;
    match &args.action {
        RepoAction::Add { label, mesh, source } => {
            let bytes = std::fs::read(mesh).with_context(|| format!("reading {}", mesh.display()))?;
            let m = read_mesh(&bytes, format_of(mesh)?)?;
            let record = repo.insert_asset(label, &m, (*source).into())?;
            print_json(&json!({"id": record.id, "label": record.label, "mesh_ref": record.mesh_ref}))
        }
        RepoAction::Query { text, k, min_score } => print_json(&repo.query_label(text, *k, *min_score)?),
        RepoAction::Stats => print_json(&repo.stats()),
    }
}

/// Plays a script on mocks and prints the session outcome plus the
/// metrics report. Fails when the session ends in `Failed` or the served
/// mesh does not validate.
pub async fn session_run(script_path: &Path, repo_dir: Option<&Path>, target: usize) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(script_path).with_context(|| format!("reading {}", script_path.display()))?;
    let script = Script::from_json(&text).with_context(|| format!("parsing {}", script_path.display()))?;
    let repo = match repo_dir {
        Some(d) => crate::open_repo(d)?,
        None => Repository::in_memory(RepoConfig::default(), Arc::new(HashingEmbedder::default())),
    };
    let mut generator = MockGenerator::new().with_latency(Duration::from_millis(script.mock.generator_latency_ms));
    if let Some(n) = script.mock.fixed_vertices {
        generator = generator.with_fixed_vertices(n);
    }
    let config = PipelineConfig {
        simplify: SimplifyConfig::with_target(target),
        retrieval_delay_ms: script.mock.retrieval_delay_ms,
        ..PipelineConfig::default()
    };
    let pipeline = Pipeline::new(Arc::new(repo), Backends::mock(generator), config);
    let session = run_script(&pipeline, &script).await?;
    let asset_valid = match &session.asset {
        Some(id) => {
            let record = pipeline.repo().get(id).context("served asset missing from repository")?;
            Some(pipeline.repo().load_mesh(&record.mesh_ref)?.validate().is_valid())
        }
        None => None,
    };
    let report = report_metrics(std::slice::from_ref(&session));
    print_json(&json!({
        "session_id": session.id,
        "state": session.state,
        "state_history": session.state_history,
        "served": session.served,
        "asset_valid": asset_valid,
        "error": session.error,
        "report": report,
    }))?;
    if session.state == SessionState::Failed {
        bail!("session failed: {}", session.error.map(|e| e.message).unwrap_or_default());
    }
    if asset_valid == Some(false) {
        bail!("served asset failed validation");
    }
    Ok(())
}
