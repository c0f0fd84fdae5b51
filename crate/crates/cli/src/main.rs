use clap::{Args, Parser, Subcommand};
use spinlimit_core::figures::{run_figure, Figure, Scale};
use spinlimit_core::{ConfigError, EnsembleError, ExperimentConfig, ExperimentResult, RunOptions, SweepAxis};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "spinlimit", version, about = "Energy resolution of dipolar spin-ensemble magnetometers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write `result.json` and `result.csv`.
    Run(Common),
    /// Regenerate the dataset of a figure.
    Figure {
        /// fig1, fig2, fig3 or figS1.
        name: Figure,
        #[arg(long, default_value = "desk")]
        scale: Scale,
        #[command(flatten)]
        common: Common,
    },
    /// Run independent experiments along one axis.
    Sweep {
        /// cluster_size, spin or omega_ratio.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set clusters=4e3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Single-threaded, with no wall-clock time in the output.
    #[arg(long)]
    serial: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<EnsembleError> for Failure {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Config(c) => Failure::Config(c.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, Failure> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Failure::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            c.set(k.trim(), v.trim())?;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c.validate()?;
        Ok(c)
    }

    fn options(&self) -> Result<RunOptions, Failure> {
        match (self.serial, self.threads) {
            (true, Some(_)) => Err(Failure::Config("--serial and --threads are exclusive".into())),
            (true, None) => Ok(RunOptions::serial()),
            (false, Some(0)) => Err(Failure::Config("--threads must be positive".into())),
            (false, Some(n)) => Ok(RunOptions::threads(n)),
            (false, None) => Ok(RunOptions::default()),
        }
    }
}

fn report(r: &ExperimentResult) {
    match r.curve.optimum {
        Some(o) => eprintln!(
            "E_R,min/hbar = {:.4} +- {:.4} at tau_opt = {:.4}{}",
            o.er_min,
            r.curve.er_min_stderr.unwrap_or(f64::NAN),
            o.tau_opt,
            if o.at_boundary { " (grid boundary)" } else { "" }
        ),
        None => eprintln!("no finite energy resolution on the grid"),
    }
    for w in &r.diagnostics.warnings {
        eprintln!("warning: {w}");
    }
}

fn write_result(r: &ExperimentResult, dir: &Path, stem: &str) -> Result<(), Failure> {
    r.write_files(dir, stem)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(common) => {
            let config = common.config()?;
            let options = common.options()?;
            eprintln!(
                "running {} clusters of M = {}, s = {}",
                config.clusters, config.cluster_size, config.species
            );
            let r = spinlimit_core::run_experiment(&config, options)?;
            report(&r);
            write_result(&r, &common.out, "result")
        }
        Command::Figure { name, scale, common } => {
            let base = common.config()?;
            let options = common.options()?;
            let out = run_figure(name, scale, &base, options, &mut |line| eprintln!("{line}"))?;
            let dir = common.out.join(name.name());
            std::fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(e.to_string()))?;
            let f = std::fs::File::create(dir.join(format!("{name}.csv"))).map_err(|e| Failure::Runtime(e.to_string()))?;
            out.table.write_csv(std::io::BufWriter::new(f))?;
            for (i, r) in out.results.iter().enumerate() {
                write_result(r, &dir, &format!("point{i:02}"))?;
            }
            for f in &out.failures {
                eprintln!("failed: {f}");
            }
            if out.failures.is_empty() {
                Ok(())
            } else {
                Err(Failure::Runtime(format!("{} point(s) failed", out.failures.len())))
            }
        }
        Command::Sweep { axis, values, common } => {
            let template = common.config()?;
            let options = common.options()?;
            let mut failed = 0;
            for (i, v) in values.iter().enumerate() {
                eprintln!("[{}/{}] {} = {v}", i + 1, values.len(), axis.key());
                let result = spinlimit_core::ensemble::sweep_config(&template, axis, *v, i)
                    .map_err(EnsembleError::from)
                    .and_then(|c| spinlimit_core::run_experiment(&c, options));
                match result {
                    Ok(r) => {
                        report(&r);
                        write_result(&r, &common.out, &format!("{}_{v}", axis.key()))?;
                    }
                    Err(e) => {
                        eprintln!("failed: {} = {v}: {e}", axis.key());
                        failed += 1;
                    }
                }
            }
            if failed == 0 {
                Ok(())
            } else {
                Err(Failure::Runtime(format!("{failed} point(s) failed")))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
