mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use opsys_core::{run, ExperimentConfig, ExperimentReport, EXPERIMENTS};

use config::ConfigFile;

/// Exit statuses.
const OK: u8 = 0;
const USAGE: u8 = 1;
const CHECK_FAILED: u8 = 2;
const INDETERMINATE: u8 = 3;

/// Share of indeterminate certificates above which a run is not trusted.
const INDETERMINATE_LIMIT: f64 = 0.1;

#[derive(Parser)]
#[command(name = "opsys", version, about = "Seeded experiments on finite-dimensional operator systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its report.
    Run {
        name: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides OPSYS_SEED and the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to `<name>.<format>` in the working directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the experiments.
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

struct RunSpec {
    config: ExperimentConfig,
    out: PathBuf,
    format: Format,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::List => {
            for (name, about) in EXPERIMENTS {
                println!("{name:<22} {about}");
            }
            ExitCode::from(OK)
        }
        Command::Run { name, config, seed, out, format, threads } => {
            if let Some(t) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
                    eprintln!("error: cannot start {t} threads: {e}");
                    return ExitCode::from(USAGE);
                }
            }
            let spec = match resolve(&name, config.as_deref(), seed, out, format) {
                Ok(s) => s,
                Err(msg) => {
                    eprintln!("error: {msg}");
                    return ExitCode::from(USAGE);
                }
            };
            ExitCode::from(execute(&spec))
        }
    }
}

fn resolve(name: &str, config: Option<&Path>, seed: Option<u64>, out: Option<PathBuf>, format: Format) -> Result<RunSpec, String> {
    let mut cfg = ExperimentConfig::defaults(name).map_err(|e| e.to_string())?;
    if let Some(path) = config {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let file = ConfigFile::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        file.resolve(&mut cfg);
    }
    if let Ok(v) = std::env::var("OPSYS_SEED") {
        cfg.seed = v.trim().parse().map_err(|_| format!("OPSYS_SEED is not an unsigned integer: {v:?}"))?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    let out = out.unwrap_or_else(|| PathBuf::from(format!("{name}.{}", format.extension())));
    Ok(RunSpec { config: cfg, out, format })
}

fn execute(spec: &RunSpec) -> u8 {
    let report = match run(&spec.config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return USAGE;
        }
    };
    let body = match spec.format {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    let written = body.map_err(|e| e.to_string()).and_then(|b| write_atomic(&spec.out, b.as_bytes()));
    if let Err(e) = written {
        eprintln!("error: cannot write {}: {e}", spec.out.display());
        return USAGE;
    }
    let code = status(&report);
    println!("{}", summary_line(&report, &spec.out, code));
    code
}

/// An indeterminate-dominated run is reported as such even if its checks
/// passed, since the checks then rest on too few decided certificates.
fn status(report: &ExperimentReport) -> u8 {
    if report.indeterminate_fraction() > INDETERMINATE_LIMIT {
        INDETERMINATE
    } else if report.passed() {
        OK
    } else {
        CHECK_FAILED
    }
}

fn summary_line(report: &ExperimentReport, out: &Path, code: u8) -> String {
    let passed = report.checks.iter().filter(|c| c.passed).count();
    let verdict = match code {
        OK => "pass",
        CHECK_FAILED => "FAIL",
        _ => "INDETERMINATE",
    };
    let mut line = format!(
        "{} seed={} {verdict}: {passed}/{} checks, {}/{} indeterminate, {:.1}s -> {}",
        report.experiment,
        report.config.seed,
        report.checks.len(),
        report.indeterminate,
        report.certificates,
        report.wall_time_s,
        out.display()
    );
    for c in report.checks.iter().filter(|c| !c.passed) {
        line.push_str(&format!("\n  failed {}: {}", c.name, c.detail));
    }
    line
}

/// Temp file in the target directory, then rename over the target.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), String> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| e.to_string())?;
    tmp.write_all(bytes).map_err(|e| e.to_string())?;
    tmp.as_file().sync_all().map_err(|e| e.to_string())?;
    tmp.persist(path).map_err(|e| e.error.to_string())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use opsys_core::experiments::Check;

    fn report(passed: bool, certificates: usize, indeterminate: usize) -> ExperimentReport {
        ExperimentReport {
            schema_version: 1,
            experiment: "exp_hope".into(),
            config: ExperimentConfig::defaults("exp_hope").unwrap(),
            records: Vec::new(),
            summary: Vec::new(),
            checks: vec![Check { name: "c".into(), passed, detail: String::new() }],
            certificates,
            indeterminate,
            wall_time_s: 0.0,
        }
    }

    #[test]
    fn exit_status() {
        assert_eq!(status(&report(true, 100, 10)), OK);
        assert_eq!(status(&report(false, 100, 10)), CHECK_FAILED);
        assert_eq!(status(&report(true, 100, 11)), INDETERMINATE);
        assert_eq!(status(&report(false, 100, 50)), INDETERMINATE);
        assert_eq!(status(&report(true, 0, 0)), OK);
    }
}
