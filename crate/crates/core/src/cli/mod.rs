//! Command-line runs.
//!
//! Every subcommand reads a JSON config, applies `--set path=value`
//! overrides, validates the result and runs it. Exit codes: 0 on success,
//! 2 for configuration errors, 3 for runtime errors. Failures print a JSON
//! object `{"error": {...}}` on stderr; successful runs print their summary
//! JSON on stdout.

pub mod config;
pub mod run;
pub mod schema;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde_json::{json, Value};

pub use config::{apply_overrides, prepare, read_config, Plan, Prepared, Violation};
pub use run::{execute, RunFailure};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "IONPROBE_OUTPUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ionprobe", version, about = "Single-particle transmission microscopy simulations and adaptive measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON config file (`-` for stdin).
    config: PathBuf,
    /// Override a config field, e.g. `--set design.levels=5`. Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Output directory; beats the config's `output_dir` and $IONPROBE_OUTPUT_DIR.
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Adaptive knife-edge beam profiling against a simulated edge.
    ProfileEdge(RunArgs),
    /// Adaptive localization of a circular hole against a simulated sample.
    LocateHole(RunArgs),
    /// Raster-scan imaging of a mask.
    Raster(RunArgs),
    /// SNR tables for deterministic and Poissonian sources.
    Snr(RunArgs),
    /// Maximum-likelihood fit of a recorded run log.
    Fit(RunArgs),
    /// Check a config without running it, or print a mode's JSON schema.
    Validate {
        /// JSON config file; its `mode` field selects the rules.
        #[arg(required_unless_present = "schema")]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "PATH=VALUE")]
        overrides: Vec<String>,
        /// Print the JSON schema of MODE instead.
        #[arg(long, value_name = "MODE", conflicts_with = "config", value_parser = schema::MODES)]
        schema: Option<String>,
    },
}

fn command() -> clap::Command {
    let mut cmd = Cli::command();
    for mode in schema::MODES {
        cmd = cmd.mut_subcommand(mode, |c| c.after_help(schema::help_text(mode)));
    }
    cmd
}

/// Entry point of the `ionprobe` binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli(args, &mut stdout.lock(), &mut stderr.lock())
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Output goes to `out` and `err`.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return EXIT_CONFIG;
        }
    };
    match cli.command {
        Command::ProfileEdge(a) => run_mode("profile-edge", a, out, err),
        Command::LocateHole(a) => run_mode("locate-hole", a, out, err),
        Command::Raster(a) => run_mode("raster", a, out, err),
        Command::Snr(a) => run_mode("snr", a, out, err),
        Command::Fit(a) => run_mode("fit", a, out, err),
        Command::Validate { schema: Some(mode), .. } => {
            print_json(out, &schema::json_schema(&mode));
            EXIT_OK
        }
        Command::Validate { config, overrides, .. } => {
            let path = config.expect("clap requires a config without --schema");
            validate(&path, &overrides, out, err)
        }
    }
}

fn print_json(w: &mut dyn Write, value: &Value) {
    let _ = writeln!(w, "{}", serde_json::to_string_pretty(value).expect("JSON values serialize"));
}

fn config_error(err: &mut dyn Write, message: &str, violations: &[Violation]) -> i32 {
    print_json(err, &json!({ "error": { "kind": "config", "message": message, "violations": violations } }));
    EXIT_CONFIG
}

fn load(path: &Path, overrides: &[String]) -> Result<Value, Violation> {
    let mut value = read_config(path)?;
    apply_overrides(&mut value, overrides)?;
    Ok(value)
}

fn validate(path: &Path, overrides: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let value = match load(path, overrides) {
        Ok(v) => v,
        Err(v) => return config_error(err, &v.message.clone(), &[v]),
    };
    let mode = value.get("mode").and_then(Value::as_str).map(str::to_string);
    let violations = match prepare(&value, None) {
        Ok(_) => Vec::new(),
        Err(v) => v,
    };
    print_json(out, &json!({ "valid": violations.is_empty(), "mode": mode, "violations": violations }));
    if violations.is_empty() {
        EXIT_OK
    } else {
        EXIT_CONFIG
    }
}

fn run_mode(mode: &str, args: RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let value = match load(&args.config, &args.overrides) {
        Ok(v) => v,
        Err(v) => return config_error(err, &v.message.clone(), &[v]),
    };
    let prepared = match prepare(&value, Some(mode)) {
        Ok(p) => p,
        Err(v) => return config_error(err, &format!("{} violation(s) in the {mode} config", v.len()), &v),
    };
    let out_dir = args
        .output_dir
        .or_else(|| prepared.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    match execute(&prepared, &out_dir) {
        Ok(summary) => {
            print_json(out, &summary);
            EXIT_OK
        }
        Err(RunFailure { error, iteration }) => {
            let mut body = json!({ "kind": "runtime", "message": error.to_string(), "violations": [] });
            if let Some(i) = iteration {
                body["iteration"] = json!(i);
            }
            print_json(err, &json!({ "error": body }));
            EXIT_RUNTIME
        }
    }
}
