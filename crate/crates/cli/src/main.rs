//! `diracflow` command line driver.
//!
//! Exit codes: 0 every row agrees, 1 some row disagrees, 2 some row is
//! inconclusive or failed, 3 usage, configuration or I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use diracflow::Error;
use diracflow::flow::Backend;
use diracflow::gauge::predicted_sf;
use diracflow::harness::report::load_reports;
use diracflow::harness::{
    BackendChoice, ExperimentConfig, FlowReport, WORKERS_ENV, load_config, run_experiment, torus_case, workers,
};

const EXIT_AGREE: u8 = 0;
const EXIT_DISAGREE: u8 = 1;
const EXIT_INCONCLUSIVE: u8 = 2;
const EXIT_USAGE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "diracflow", version, about = "Spectral flow of planar Dirac operators under flux insertion")]
#[command(after_help = "Worker count: set DIRACFLOW_WORKERS (default: available parallelism).\n\
Exit codes: 0 all agree, 1 disagreement, 2 inconclusive, 3 usage or configuration error.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Predicted spectral flow from the topology alone.
    Predict(Common),
    /// Measure the flow of the configured case, ignoring any sweep.
    Flow(Common),
    /// Measure every case of the configured sweep.
    Sweep(Common),
    /// Index of the clutched operator on the space-time torus.
    Torus(Common),
    /// Render and audit saved reports.
    Report {
        /// Report directories or report.json files.
        paths: Vec<PathBuf>,
        /// Directory read when no paths are given.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print CSV instead of the text table.
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackendArg {
    Radial,
    Lattice,
    Both,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Radial N and/or lattice cells per diameter for the selected backends;
    /// radial N for `torus`.
    #[arg(long)]
    resolution: Option<usize>,
    /// Initial number of t samples.
    #[arg(long)]
    tsamples: Option<usize>,
    /// Maximum bisection depth of the t grid.
    #[arg(long)]
    max_depth: Option<usize>,
}

impl Common {
    fn load(&self) -> diracflow::Result<ExperimentConfig> {
        let mut cfg = load_config(&self.config)?;
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        if let Some(b) = self.backend {
            cfg.backend = match b {
                BackendArg::Radial => BackendChoice::Radial,
                BackendArg::Lattice => BackendChoice::Lattice,
                BackendArg::Both => BackendChoice::Both,
            };
        }
        if let Some(n) = self.resolution {
            for b in cfg.backend.backends() {
                match b {
                    Backend::Radial => cfg.radial.n = n,
                    Backend::Lattice => cfg.lattice.cells_per_diameter = n,
                }
            }
            cfg.torus.resolution = n;
        }
        if let Some(n) = self.tsamples {
            cfg.flow.t_samples = n;
        }
        if let Some(d) = self.max_depth {
            cfg.flow.max_depth = d;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn status_code(report: &FlowReport) -> u8 {
    match report.exit_code() {
        0 => EXIT_AGREE,
        1 => EXIT_DISAGREE,
        _ => EXIT_INCONCLUSIVE,
    }
}

fn finish(report: &FlowReport) -> u8 {
    print!("{}", report.render_text());
    status_code(report)
}

fn predict(c: &Common) -> diracflow::Result<u8> {
    let cfg = c.load()?;
    for case in cfg.expand()? {
        let sf = predicted_sf(&case.gauge.build(), &case.domain.build()?)?;
        println!("{}  predicted sf = {sf}", case.key);
    }
    Ok(EXIT_AGREE)
}

fn flow(c: &Common, sweep: bool) -> diracflow::Result<u8> {
    let mut cfg = c.load()?;
    if !sweep {
        cfg.sweep = None;
    } else if cfg.sweep.is_none() {
        return Err(Error::Config("configuration has no [sweep] section".into()));
    }
    let report = run_experiment(&cfg)?;
    println!("artifacts in {}", cfg.output.display());
    Ok(finish(&report))
}

fn torus(c: &Common) -> diracflow::Result<u8> {
    let cfg = c.load()?;
    let mut code = EXIT_AGREE;
    for case in cfg.expand()? {
        let predicted = predicted_sf(&case.gauge.build(), &case.domain.build()?)?;
        match torus_case(&cfg, &case) {
            Ok((a, b, ratio)) => {
                let ok = a == predicted && b == predicted;
                println!(
                    "{}  predicted {predicted}  index {a} (N_t = {}), {b} (N_t = {})  gap ratio {ratio:.3e}  {}",
                    case.key,
                    cfg.torus.n_t,
                    2 * cfg.torus.n_t,
                    if ok { "agree" } else { "DISAGREE" }
                );
                if !ok {
                    code = EXIT_DISAGREE;
                }
            }
            Err(e @ (Error::Inconclusive(_) | Error::Size { .. } | Error::Resolution(_))) => {
                println!("{}  predicted {predicted}  INCONCLUSIVE: {e}", case.key);
                if code == EXIT_AGREE {
                    code = EXIT_INCONCLUSIVE;
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(code)
}

fn report(paths: &[PathBuf], out: &Option<PathBuf>, csv: bool) -> diracflow::Result<u8> {
    let paths = if paths.is_empty() {
        vec![out.clone().ok_or_else(|| Error::Config("give report paths or --out".into()))?]
    } else {
        paths.to_vec()
    };
    let r = load_reports(&paths)?;
    if csv {
        print!("{}", r.render_csv());
        return Ok(status_code(&r));
    }
    Ok(finish(&r))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    if let Err(e) = workers() {
        eprintln!("error: {e} (set {WORKERS_ENV} to a positive integer)");
        return ExitCode::from(EXIT_USAGE);
    }
    let result = match &cli.command {
        Command::Predict(c) => predict(c),
        Command::Flow(c) => flow(c, false),
        Command::Sweep(c) => flow(c, true),
        Command::Torus(c) => torus(c),
        Command::Report { paths, out, csv } => report(paths, out, *csv),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
