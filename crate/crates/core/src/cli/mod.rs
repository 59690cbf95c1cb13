//! Command-line front end: configuration, run pipelines, checkpoints,
//! frame export and parameter sweeps.

pub mod checkpoint;
pub mod config;
pub mod frames;
pub mod runner;
pub mod sweep;

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use crate::error::{Error, Result};

use config::{parse_config, Mode, RunSpec};
use runner::{run_replay, RunContext};

#[derive(Parser, Debug)]
#[command(name = "qdynkit", version, about = "Grid-based quantum dynamics from a TOML configuration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Bound states by diagonalization (psi.eigen)
    Bound(RunArgs),
    /// Real-time propagation (time.main, time.propa)
    Propa(RunArgs),
    /// Imaginary-time relaxation (time.main, cheby_imag)
    Relax(RunArgs),
    /// One run per value of sweep.key
    Sweep(RunArgs),
    /// Frames from saved wavefunctions (psi.save, plot)
    Replay(RunArgs),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Configuration file
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory [default: $QDYNKIT_OUT or the current directory]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Concurrent sweep points [default: available cores]
    #[arg(long)]
    pub threads: Option<usize>,
    /// Skip frame export (replay: skip PNG rasterization)
    #[arg(long)]
    pub no_frames: bool,
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Command::Bound(a) | Command::Propa(a) | Command::Relax(a) | Command::Sweep(a) | Command::Replay(a) => a,
        }
    }
}

/// Copies log output to the console and the run's log file.
struct Tee {
    file: Arc<Mutex<File>>,
}

impl Write for Tee {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        std::io::stderr().write_all(buf)?;
        self.file.lock().expect("log file").write_all(buf)?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        std::io::stderr().flush()?;
        self.file.lock().expect("log file").flush()
    }
}

fn init_logging(path: &std::path::Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let tee = Tee { file: Arc::new(Mutex::new(file)) };
    // a second initialization (several runs in one process) keeps the first sink
    let _ = env_logger::Builder::new()
        .filter_level(log::LevelFilter::Info)
        .parse_default_env()
        .format(|buf, record| writeln!(buf, "[{}] {}", record.level(), record.args()))
        .target(env_logger::Target::Pipe(Box::new(tee)))
        .try_init();
    Ok(())
}

pub fn out_dir(arg: Option<PathBuf>) -> PathBuf {
    arg.or_else(|| std::env::var_os("QDYNKIT_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn dispatch(command: &Command, spec: &RunSpec, ctx: &RunContext) -> Result<()> {
    let args = command.args();
    match command {
        Command::Bound(_) => runner::run_bound(spec, ctx).map(drop),
        Command::Propa(_) => runner::run_propa(spec, ctx).map(drop),
        Command::Relax(_) => runner::run_relax(spec, ctx).map(drop),
        Command::Replay(_) => run_replay(spec, ctx).map(drop),
        Command::Sweep(_) => {
            if spec.sweep.as_ref().is_some_and(|s| s.run == Mode::Bound) && spec.eigen.is_none() {
                return Err(Error::config("psi.eigen.stop", "sweep.run = \"bound\" needs psi.eigen"));
            }
            let threads = args
                .threads
                .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
            let points = sweep::run_sweep(spec, ctx, threads)?;
            let failed = points.iter().filter(|p| p.result.is_err()).count();
            if failed > 0 {
                log::warn!("{failed} of {} sweep point(s) failed; see sweep.csv", points.len());
            }
            Ok(())
        }
    }
}

/// Runs one command. Errors raised once the log is open are logged too.
pub fn run(cli: &Cli) -> Result<()> {
    let args = cli.command.args();
    let spec = parse_config(&args.config)?;
    if matches!(cli.command, Command::Sweep(_)) && spec.sweep.is_none() {
        return Err(Error::config("sweep", "missing required section: key and values"));
    }
    let dir = out_dir(args.out_dir.clone());
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    init_logging(&dir.join(format!("{}.log", spec.stem)))?;
    info!("qdynkit {} {:?}", env!("CARGO_PKG_VERSION"), cli.command);
    info!("resolved configuration:\n{}", spec.echo.trim_end());
    if args.threads.is_some() && !matches!(cli.command, Command::Sweep(_)) {
        info!("--threads applies to sweeps only");
    }
    let ctx = RunContext { out_dir: dir, frames: !args.no_frames };
    dispatch(&cli.command, &spec, &ctx).inspect_err(|e| error!("{e}"))?;
    info!("done");
    Ok(())
}

/// Process entry point; returns the exit status.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            if !log::log_enabled!(log::Level::Error) {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    }
}
