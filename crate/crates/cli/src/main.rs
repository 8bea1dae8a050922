use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use multibang::config::{ConfigError, ExperimentConfig, ProblemConfig};
use multibang::experiments::{run_experiment, RunReport};
use multibang::verify::{verify_suite, VerifyOptions};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const OUT_ENV: &str = "MULTIBANG_OUT_DIR";
const DEFAULT_OUT: &str = "multibang-out";

#[derive(Parser)]
#[command(name = "multibang", version, about = "Multibang control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config
    Run {
        config: PathBuf,
        /// output directory; overrides the config and the environment
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in consistency checks and print a summary
    Verify {
        /// also write the report and a manifest here
        #[arg(long)]
        out: Option<PathBuf>,
        /// perturb the closed-form radial cost weight (relative) to exercise the checks
        #[arg(long, default_value_t = 0.0)]
        perturb_radial_alpha: f64,
    },
    /// Tabulate the regions and Yosida map of a penalty over a grid
    PenaltyMap {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Output directory precedence: flag, config, environment, default.
fn output_dir(flag: Option<&Path>, cfg: Option<&ExperimentConfig>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn describe_config_error(path: &Path, err: &ConfigError) -> String {
    match err {
        ConfigError::Parse { line, column, message } => {
            format!("{}:{line}:{column}: {message}", path.display())
        }
        other => format!("{}: {other}", path.display()),
    }
}

struct Manifest {
    command: &'static str,
    config_path: Option<PathBuf>,
    config: Value,
    seed: Value,
    files: Vec<String>,
    timings: serde_json::Map<String, Value>,
    summary: Value,
    error: Value,
}

impl Manifest {
    fn new(command: &'static str, config_path: Option<&Path>) -> Self {
        Self {
            command,
            config_path: config_path.map(Path::to_path_buf),
            config: Value::Null,
            seed: Value::Null,
            files: Vec::new(),
            timings: serde_json::Map::new(),
            summary: Value::Null,
            error: Value::Null,
        }
    }

    fn time(&mut self, key: &str, start: Instant) {
        self.timings.insert(key.to_string(), json!(start.elapsed().as_secs_f64()));
    }

    fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let status = if self.error.is_null() { "ok" } else { "error" };
        let doc = json!({
            "tool": "multibang",
            "version": env!("CARGO_PKG_VERSION"),
            "schema_version": multibang::config::SCHEMA_VERSION,
            "command": self.command,
            "config_path": self.config_path,
            "config": self.config,
            "seed": self.seed,
            "status": status,
            "files": self.files,
            "timings_seconds": self.timings,
            "summary": self.summary,
            "error": self.error,
        });
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}

fn write_report(dir: &Path, report: &RunReport, manifest: &mut Manifest) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for a in &report.artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.contents).with_context(|| format!("writing {}", path.display()))?;
        manifest.files.push(a.name.clone());
    }
    Ok(())
}

fn error_record(kind: &str, message: String) -> Value {
    json!({ "kind": kind, "message": message })
}

/// Loads, runs and writes one experiment. The manifest is written on every
/// path that knows its output directory.
fn run_config(command: &'static str, path: &Path, out: Option<&Path>, require_map: bool) -> Result<bool> {
    let start = Instant::now();
    let mut manifest = Manifest::new(command, Some(path));
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            let msg = format!("cannot read {}: {e}", path.display());
            manifest.error = error_record("io", msg.clone());
            manifest.write(&output_dir(out, None))?;
            bail!(msg);
        }
    };
    let cfg = match ExperimentConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            let msg = describe_config_error(path, &e);
            manifest.error = error_record("config", msg.clone());
            manifest.write(&output_dir(out, None))?;
            bail!(msg);
        }
    };
    let dir = output_dir(out, Some(&cfg));
    manifest.config = serde_json::to_value(&cfg)?;
    manifest.seed = json!(cfg.seed);
    if require_map && !matches!(cfg.problem, ProblemConfig::PenaltyMap(_)) {
        let msg = format!("{}: expected a penalty_map problem, found {}", path.display(), cfg.problem.kind());
        manifest.error = error_record("config", msg.clone());
        manifest.write(&dir)?;
        bail!(msg);
    }
    manifest.time("load", start);
    let base = path.parent().unwrap_or(Path::new("."));
    let solve_start = Instant::now();
    let result = run_experiment(&cfg, base);
    manifest.time("run", solve_start);
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            manifest.error = error_record(cfg.problem.kind(), e.to_string());
            manifest.time("total", start);
            manifest.write(&dir)?;
            bail!("{} run failed: {e}", cfg.problem.kind());
        }
    };
    let write_start = Instant::now();
    if let Err(e) = write_report(&dir, &report, &mut manifest) {
        manifest.error = error_record("io", format!("{e:#}"));
        manifest.write(&dir)?;
        return Err(e);
    }
    manifest.time("write", write_start);
    manifest.summary = report.summary.clone();
    if !report.passed {
        manifest.error = error_record("verify", "one or more checks failed".into());
    }
    manifest.time("total", start);
    manifest.write(&dir)?;
    if let Some(text) = report.artifacts.iter().find(|a| a.name == "verify.txt") {
        print!("{}", text.contents);
    }
    println!("{}", serde_json::to_string_pretty(&report.summary)?);
    println!("wrote {} files to {}", manifest.files.len() + 1, dir.display());
    Ok(report.passed)
}

fn run_verify(out: Option<&Path>, perturb: f64) -> Result<bool> {
    let start = Instant::now();
    let report = verify_suite(&VerifyOptions { perturb_radial_alpha: perturb });
    print!("{report}");
    let passed = report.passed();
    println!("{}", if passed { "all checks passed" } else { "some checks failed" });
    let dir = out.map(Path::to_path_buf).or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from));
    if let Some(dir) = dir {
        let mut manifest = Manifest::new("verify", None);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("verify.json"), serde_json::to_string_pretty(&report)?)?;
        manifest.files.push("verify.json".into());
        manifest.config = json!({ "perturb_radial_alpha": perturb });
        manifest.summary = json!({ "passed": passed, "groups": report.groups.len() });
        if !passed {
            manifest.error = error_record("verify", "one or more checks failed".into());
        }
        manifest.time("total", start);
        manifest.write(&dir)?;
    }
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config, out } => run_config("run", config, out.as_deref(), false),
        Command::PenaltyMap { config, out } => run_config("penalty-map", config, out.as_deref(), true),
        Command::Verify { out, perturb_radial_alpha } => run_verify(out.as_deref(), *perturb_radial_alpha),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
