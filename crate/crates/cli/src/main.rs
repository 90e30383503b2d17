use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use syncscope_core::config::{config_hash, parse_config, SystemConfig};
use syncscope_core::network::build_model;
use syncscope_core::output::{sweep_csv, to_json, trace_csv, AnalysisReport, ModesReport};
use syncscope_core::simulator::{run, GainMode};
use syncscope_core::stability::{analyze, boundary_sweep, Verdict};

const EXIT_ERROR: u8 = 1;
const EXIT_NOT_CERTIFIED: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "syncscope", version, about = "Synchronization stability analysis and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate the small-gain criterion. Exit 0 certified, 2 not certified.
    Analyze {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit the boundary sweep and forbidden-region samples as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Run the nonlinear simulation. Exit 0 completed, 3 diverged.
    Simulate {
        config: PathBuf,
        /// Defaults to dynamic, or quasistatic for branch networks.
        #[arg(long, value_enum)]
        gain_mode: Option<GainModeArg>,
        #[arg(long, value_name = "SECONDS")]
        dt: Option<f64>,
        #[arg(long, value_name = "SECONDS")]
        duration: Option<f64>,
        /// `.json` writes JSON, anything else CSV. Default: CSV on stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report the modal decomposition of the inertia-channel matrix.
    Modes {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GainModeArg {
    Dynamic,
    Quasistatic,
}

type CliResult<T> = Result<T, String>;

fn load(path: &Path) -> CliResult<(SystemConfig, String)> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let cfg = parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let hash = config_hash(&text).map_err(|e| e.to_string())?;
    Ok((cfg, hash))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_analyze(config: &Path, out: Option<&Path>, csv: bool) -> CliResult<u8> {
    let (cfg, hash) = load(config)?;
    let graph = cfg.to_graph().map_err(|e| e.to_string())?;
    let grid = cfg.grid();
    let analysis = analyze(&graph, cfg.system.omega0, &grid).map_err(|e| e.to_string())?;
    for w in &analysis.report.warnings {
        eprintln!("warning: {w}");
    }
    if csv {
        let rows = boundary_sweep(&analysis.model, &analysis.dynamics, &grid);
        emit(out, &sweep_csv(&rows, &hash, analysis.dynamics.damping()))?;
    } else {
        let report = AnalysisReport::new(&analysis, &hash);
        emit(out, &to_json(&report).map_err(|e| e.to_string())?)?;
    }
    Ok(match analysis.report.verdict {
        Verdict::CertifiedStable => 0,
        Verdict::NotCertified => EXIT_NOT_CERTIFIED,
    })
}

fn cmd_simulate(
    config: &Path,
    gain_mode: Option<GainModeArg>,
    dt: Option<f64>,
    duration: Option<f64>,
    out: Option<&Path>,
) -> CliResult<u8> {
    let (cfg, hash) = load(config)?;
    let graph = cfg.to_graph().map_err(|e| e.to_string())?;
    let mode = match gain_mode {
        Some(GainModeArg::Dynamic) => GainMode::Dynamic,
        Some(GainModeArg::Quasistatic) => GainMode::QuasiStatic,
        None if graph.branch_network().is_some() => GainMode::QuasiStatic,
        None => GainMode::Dynamic,
    };
    let mut opts = cfg.run_options(mode);
    if let Some(dt) = dt {
        opts.dt = dt;
        // keep dt_out a multiple of dt
        if opts.dt_out < dt || ((opts.dt_out / dt) - (opts.dt_out / dt).round()).abs() > 1e-9 {
            opts.dt_out = dt;
        }
    }
    if let Some(d) = duration {
        opts.duration = d;
    }
    let (eq, _) = build_model(&graph, cfg.system.omega0).map_err(|e| e.to_string())?;
    let mut trace = run(&graph, &eq, &cfg.perturbation_list(), &opts).map_err(|e| e.to_string())?;
    trace.metadata.config_hash = Some(hash);

    let json = out.is_some_and(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")));
    let text = if json {
        to_json(&trace).map_err(|e| e.to_string())?
    } else {
        trace_csv(&trace)
    };
    emit(out, &text)?;
    Ok(match &trace.diverged {
        Some(d) => {
            eprintln!("diverged at t = {} s: {}", d.time, d.reason);
            EXIT_DIVERGED
        }
        None => 0,
    })
}

fn cmd_modes(config: &Path, out: Option<&Path>) -> CliResult<u8> {
    let (cfg, hash) = load(config)?;
    let graph = cfg.to_graph().map_err(|e| e.to_string())?;
    let (eq, model) = build_model(&graph, cfg.system.omega0).map_err(|e| e.to_string())?;
    emit(out, &to_json(&ModesReport::new(&eq, &model, &hash)).map_err(|e| e.to_string())?)?;
    Ok(0)
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("SYNCSCOPE_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("SYNCSCOPE_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_ERROR);
    }
    let result = match &cli.command {
        Command::Analyze { config, out, csv } => cmd_analyze(config, out.as_deref(), *csv),
        Command::Simulate {
            config,
            gain_mode,
            dt,
            duration,
            out,
        } => cmd_simulate(config, *gain_mode, *dt, *duration, out.as_deref()),
        Command::Modes { config, out } => cmd_modes(config, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
