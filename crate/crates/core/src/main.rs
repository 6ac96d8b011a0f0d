use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use specvar::report::{self, parse_real_list, Command, JobSpec};

/// Variational calculus of spectral functions: subderivatives, second
/// subderivatives, critical cones, second semiderivatives and prox, each
/// compared with difference-quotient oracles.
#[derive(Debug, Parser)]
#[command(name = "specvar", version)]
struct Cli {
    /// REPORT, SUBDERIV, SSUB, PROX, CRITCONE, SEMIDERIV or VERIFY.
    #[arg(long)]
    command: Command,

    /// Matrix file: JSON {"n", "entries"} or CSV rows.
    #[arg(long)]
    matrix: Option<PathBuf>,

    /// Symmetric function as inline JSON or a path, e.g. '{"name":"order_stat","i":1}'.
    #[arg(long)]
    theta: Option<String>,

    /// Direction H, same formats as --matrix.
    #[arg(long)]
    direction: Option<PathBuf>,

    /// Subgradient y in eigenbasis order, e.g. "1,0". Defaults to the first generator of ∂θ(λ(X)).
    #[arg(long, value_parser = real_list, allow_hyphen_values = true)]
    subgradient: Option<RealList>,

    /// Prox parameter γ.
    #[arg(long)]
    gamma: Option<f64>,

    #[arg(long, env = "SPECVAR_SEED", default_value_t = 42)]
    seed: u64,

    /// Strictly decreasing t levels for the Δ² oracle, e.g. "1e-3,1e-4,1e-5".
    #[arg(long, value_parser = real_list)]
    probe_t_grid: Option<RealList>,

    /// Ball samples per t level.
    #[arg(long)]
    probe_samples: Option<usize>,

    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Write the per-level quotient trace (SSUB, REPORT) as CSV.
    #[arg(long)]
    trace_csv: Option<PathBuf>,

    /// Trial-count multiplier for VERIFY.
    #[arg(long, default_value_t = 1.0)]
    verify_scale: f64,
}

#[derive(Debug, Clone)]
struct RealList(Vec<f64>);

fn real_list(s: &str) -> Result<RealList, String> {
    parse_real_list(s).map(RealList)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let job = JobSpec {
        command: cli.command,
        matrix_path: cli.matrix,
        theta: cli.theta,
        direction_path: cli.direction,
        subgradient: cli.subgradient.map(|l| l.0),
        gamma: cli.gamma,
        probe_t_grid: cli.probe_t_grid.map(|l| l.0),
        probe_samples: cli.probe_samples,
        seed: cli.seed,
        output_path: cli.out.clone(),
        trace_csv: cli.trace_csv,
        verify_scale: cli.verify_scale,
    };
    match report::run(&job) {
        Ok(outcome) => {
            for w in &outcome.document.warnings {
                eprintln!("warning: {w}");
            }
            if cli.out.is_none() {
                let _ = writeln!(std::io::stdout().lock(), "{}", outcome.document.to_json());
            }
            if job.command == Command::Verify {
                if let Some(suites) = outcome.document.output["suites"].as_array() {
                    for s in suites {
                        let ok = s["passed"].as_bool().unwrap_or(false);
                        eprintln!(
                            "[{}] {} {}",
                            if ok { "PASS" } else { "FAIL" },
                            s["id"].as_str().unwrap_or("?"),
                            s["name"].as_str().unwrap_or("?")
                        );
                    }
                }
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
