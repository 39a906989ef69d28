//! Benchmark operator CLI: run suites, lint playbooks, replay stored
//! episodes, and export scenario sets.
//!
//! Exit codes: 0 success, 1 internal/lint/replay-mismatch failure, 2 config
//! error. Diagnostics go to stderr; summaries to stdout.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use remedbench_core::bench::{
    emit_report, generate_scenarios, normalize_results_json, rng, run_benchmark, run_episode,
    BackendKind, Difficulty, EpisodeResult, RunOutput, RunSpec, ScenarioSet,
};
use remedbench_core::cluster::{parse_topology, ClusterState, SystemId};
use remedbench_core::playbook::{self, parse_playbook};
use remedbench_core::policy::PolicyKind;

use config::ConfigFile;

#[derive(Parser)]
#[command(
    name = "remedbench",
    version,
    about = "Microservice remediation benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Generate scenarios, run episodes, and emit reports
    Run(RunArgs),
    /// Check a playbook file against the supported dialect
    Lint {
        /// Playbook file to check
        file: PathBuf,
    },
    /// Re-execute one stored episode and compare it with the recorded run
    Replay {
        /// results.json produced by `run`
        results: PathBuf,
        /// Scenario id of the episode to replay
        episode_id: String,
    },
    /// Generate a scenario set and print it as JSON (importable via --scenarios)
    Scenarios(ScenarioArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Key-value config file; flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Topology: tt, ob or sm
    #[arg(long)]
    system: Option<String>,
    /// easy, medium or hard
    #[arg(long)]
    difficulty: Option<String>,
    /// sologen or thinkremed
    #[arg(long)]
    policy: Option<String>,
    /// oracle, naive_then_oracle, broken or remote
    #[arg(long)]
    backend: Option<String>,
    /// Chat endpoint URL (remote backend)
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name (remote backend)
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum reflection retries
    #[arg(long = "tmax")]
    t_max: Option<u32>,
    /// Read-only probe rounds per attempt
    #[arg(long)]
    probe_budget: Option<u32>,
    /// Per-completion timeout in seconds
    #[arg(long)]
    timeout_s: Option<u64>,
    /// Scenario count override (defaults: 23/49/80 per difficulty)
    #[arg(long)]
    count: Option<u32>,
    /// Worker pool size (1 = fully sequential)
    #[arg(long)]
    jobs: Option<u32>,
    /// Output directory for reports
    #[arg(long)]
    out: Option<PathBuf>,
    /// Import a scenario set (JSON) instead of generating one
    #[arg(long)]
    scenarios: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    system: String,
    #[arg(long)]
    difficulty: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to the difficulty's standard size
    #[arg(long)]
    count: Option<u32>,
}

/// Separates "you asked for something invalid" (exit 2) from "it broke" (1).
enum CliError {
    Config(String),
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Internal(e)
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Lint { file } => cmd_lint(&file),
        Command::Replay {
            results,
            episode_id,
        } => cmd_replay(&results, &episode_id),
        Command::Scenarios(args) => cmd_scenarios(args),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn build_run_spec(args: &RunArgs) -> Result<(RunSpec, PathBuf, Option<PathBuf>), CliError> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path).map_err(|e| config_err(format!("{e:#}")))?,
        None => ConfigFile::default(),
    };
    let parse_field = |flag: Option<&str>, key: &str| -> Result<Option<String>, CliError> {
        Ok(flag
            .map(str::to_string)
            .or_else(|| file.get(key).map(str::to_string)))
    };

    let require = |value: Option<String>, key: &str| {
        value.ok_or_else(|| {
            config_err(format!(
                "missing required setting: {key} (flag --{key} or config key)"
            ))
        })
    };

    let system: SystemId = require(parse_field(args.system.as_deref(), "system")?, "system")?
        .parse()
        .map_err(config_err)?;
    let difficulty: Difficulty = require(
        parse_field(args.difficulty.as_deref(), "difficulty")?,
        "difficulty",
    )?
    .parse()
    .map_err(config_err)?;
    let policy: PolicyKind = require(parse_field(args.policy.as_deref(), "policy")?, "policy")?
        .parse()
        .map_err(config_err)?;
    let backend: BackendKind =
        require(parse_field(args.backend.as_deref(), "backend")?, "backend")?
            .parse()
            .map_err(config_err)?;

    let numeric = |flag: Option<u64>, key: &str| -> Result<Option<u64>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        file.get_parsed::<u64>(key)
            .map_err(|e| config_err(format!("{e:#}")))
    };

    let mut spec = RunSpec::new(system, difficulty, policy, backend);
    spec.endpoint = parse_field(args.endpoint.as_deref(), "endpoint")?;
    spec.model = parse_field(args.model.as_deref(), "model")?;
    spec.seed = numeric(args.seed, "seed")?.unwrap_or(0);
    spec.t_max = numeric(args.t_max.map(u64::from), "tmax")?.unwrap_or(1) as u32;
    spec.probe_budget =
        numeric(args.probe_budget.map(u64::from), "probe_budget")?.unwrap_or(5) as u32;
    spec.timeout_s =
        numeric(args.timeout_s, "timeout_s")?.unwrap_or(remedbench_core::policy::DEFAULT_TIMEOUT_S);
    spec.count = numeric(args.count.map(u64::from), "count")?.map(|c| c as u32);
    spec.jobs = numeric(args.jobs.map(u64::from), "jobs")?.unwrap_or(1) as u32;

    if spec.backend == BackendKind::Remote {
        if spec.endpoint.is_none() {
            return Err(config_err("backend=remote requires --endpoint"));
        }
        if spec.model.is_none() {
            return Err(config_err("backend=remote requires --model"));
        }
    }

    let out = args
        .out
        .clone()
        .or_else(|| file.get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("bench-out"));
    let scenarios = args
        .scenarios
        .clone()
        .or_else(|| file.get("scenarios").map(PathBuf::from));
    Ok((spec, out, scenarios))
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, CliError> {
    let (spec, out_dir, scenario_path) = build_run_spec(&args)?;

    let imported = match &scenario_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading scenarios {}", path.display()))
                .map_err(CliError::Internal)?;
            let set: ScenarioSet = serde_json::from_str(&text)
                .map_err(|e| config_err(format!("scenario file {}: {e}", path.display())))?;
            if set.system_id != spec.system {
                return Err(config_err(format!(
                    "scenario file targets {} but the run is configured for {}",
                    set.system_id, spec.system
                )));
            }
            Some(set)
        }
        None => None,
    };

    let run = run_benchmark(&spec, imported).map_err(|e| match e {
        remedbench_core::bench::BenchError::Config(msg) => config_err(msg),
        remedbench_core::bench::BenchError::Capacity { .. } => config_err(e.to_string()),
        other => CliError::Internal(anyhow!(other)),
    })?;
    let files = emit_report(&run, &out_dir).map_err(|e| CliError::Internal(anyhow!(e)))?;

    print_summary(&run);
    println!("reports: {} files under {}", files.len(), out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn print_summary(run: &RunOutput) {
    let s = &run.summary;
    println!(
        "system={} difficulty={} policy={} backend={} seed={}",
        run.spec.system, run.spec.difficulty, run.spec.policy, run.spec.backend, run.spec.seed
    );
    println!(
        "episodes={} injected={} remediated={} RA={:.3}",
        s.n_episodes, s.n_injected, s.n_success, s.ra
    );
    println!(
        "ARL={} ATC={} atc_all={} availability_violations={}",
        s.arl_s
            .map(|v| format!("{v:.3}s"))
            .unwrap_or_else(|| "n/a".into()),
        s.atc
            .map(|v| format!("{v:.1}"))
            .unwrap_or_else(|| "n/a".into()),
        s.atc_all
            .map(|v| format!("{v:.1}"))
            .unwrap_or_else(|| "n/a".into()),
        s.availability_violations,
    );
    for row in &s.per_type {
        println!(
            "  {:22} episodes={:3} remediated={:3} RA={:.3}",
            row.failure_type.display_name(),
            row.episodes,
            row.successes,
            row.ra
        );
    }
}

fn cmd_lint(file: &Path) -> Result<ExitCode, CliError> {
    let text = match std::fs::read_to_string(file) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: {e}", file.display());
            return Ok(ExitCode::FAILURE);
        }
    };
    let playbook = match parse_playbook(&text) {
        Ok(pb) => pb,
        Err(e) => {
            eprintln!("{}: {e}", file.display());
            return Ok(ExitCode::FAILURE);
        }
    };

    let mut warnings = 0u32;
    for play in &playbook.plays {
        for task in &play.tasks {
            match playbook::shell::parse_line(&task.line) {
                Ok(cmds) => {
                    for cmd in cmds {
                        let bin = cmd.argv[0].as_str();
                        if bin == "echo" {
                            continue;
                        }
                        if bin != "kubectl" {
                            eprintln!(
                                "warning: task {:?}: unsupported binary at runtime: {bin}",
                                task.name
                            );
                            warnings += 1;
                        }
                    }
                }
                Err(e) => {
                    eprintln!("warning: task {:?}: {e}", task.name);
                    warnings += 1;
                }
            }
        }
    }
    let tasks: usize = playbook.plays.iter().map(|p| p.tasks.len()).sum();
    println!(
        "{}: ok ({} plays, {} tasks, {} warnings)",
        file.display(),
        playbook.plays.len(),
        tasks,
        warnings
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_replay(results_path: &Path, episode_id: &str) -> Result<ExitCode, CliError> {
    let text = std::fs::read_to_string(results_path)
        .with_context(|| format!("reading {}", results_path.display()))
        .map_err(CliError::Internal)?;
    let doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| config_err(format!("{}: {e}", results_path.display())))?;

    let spec: RunSpec = serde_json::from_value(doc["config"].clone())
        .map_err(|e| config_err(format!("results config: {e}")))?;
    if !spec.backend.deterministic() {
        return Err(config_err(format!(
            "non-replayable backend: {} episodes are not deterministic",
            spec.backend
        )));
    }
    let scenario_set: ScenarioSet = serde_json::from_value(doc["scenario_set"].clone())
        .map_err(|e| config_err(format!("results scenario_set: {e}")))?;
    let episodes: Vec<EpisodeResult> = serde_json::from_value(doc["episodes"].clone())
        .map_err(|e| config_err(format!("results episodes: {e}")))?;

    let stored = episodes
        .iter()
        .find(|e| e.scenario_id == episode_id)
        .ok_or_else(|| config_err(format!("no episode with id {episode_id:?}")))?;
    // the episode seed derives from the scenario's position in the set
    let (idx, scenario) = scenario_set
        .scenarios
        .iter()
        .enumerate()
        .find(|(_, s)| s.id == episode_id)
        .ok_or_else(|| config_err(format!("scenario {episode_id:?} missing from results")))?;

    let topo = parse_topology(spec.system.builtin_topology())
        .map_err(|e| CliError::Internal(anyhow!(e)))?;
    let mut state = ClusterState::from_topology(&topo);
    let backend =
        remedbench_core::bench::make_backend(&spec).map_err(|e| CliError::Internal(anyhow!(e)))?;
    let replayed = run_episode(
        &mut state,
        scenario,
        rng::mix(spec.seed, idx as u64),
        spec.policy,
        &spec.policy_config(),
        backend.as_ref(),
        scenario_set.difficulty,
    )
    .map_err(|e| CliError::Internal(anyhow!(e)))?;

    let normalize = |e: &EpisodeResult| -> Result<String> {
        let text = serde_json::to_string_pretty(e)?;
        Ok(normalize_results_json(&text)?)
    };
    let stored_n = normalize(stored).map_err(CliError::Internal)?;
    let replayed_n = normalize(&replayed).map_err(CliError::Internal)?;
    if stored_n == replayed_n {
        println!("replay ok: {episode_id} reproduces the stored transcripts");
        return Ok(ExitCode::SUCCESS);
    }

    eprintln!("replay mismatch for {episode_id}:");
    let mut shown = 0;
    for (a, b) in stored_n.lines().zip(replayed_n.lines()) {
        if a != b && shown < 20 {
            eprintln!("  - {a}");
            eprintln!("  + {b}");
            shown += 1;
        }
    }
    if stored_n.lines().count() != replayed_n.lines().count() {
        eprintln!(
            "  (line counts differ: stored {}, replayed {})",
            stored_n.lines().count(),
            replayed_n.lines().count()
        );
    }
    Ok(ExitCode::FAILURE)
}

fn cmd_scenarios(args: ScenarioArgs) -> Result<ExitCode, CliError> {
    let system: SystemId = args.system.parse().map_err(config_err)?;
    let difficulty: Difficulty = args.difficulty.parse().map_err(config_err)?;
    let count = args.count.unwrap_or_else(|| difficulty.default_count());
    let set = generate_scenarios(system, difficulty, args.seed, count)
        .map_err(|e| config_err(e.to_string()))?;
    println!(
        "{}",
        serde_json::to_string_pretty(&set).expect("scenario set serializes")
    );
    Ok(ExitCode::SUCCESS)
}
