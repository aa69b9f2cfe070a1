use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dynvoter::experiment::{exit_code, load_config, run, write_report, Experiment, Overrides, Params, THREADS_ENV};
use dynvoter::sim::StartMode;

#[derive(Parser)]
#[command(name = "dynvoter", version, about = "Voter model and random walks on rewiring random regular graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Diffusion constant table over a (d, nu) grid.
    #[command(alias = "theta-table")]
    Theta(Common),
    /// Meeting time of two walks.
    SimMeeting(Common),
    /// Voter model traces, martingale and heterozygosity gates.
    SimVoter(Common),
    /// Two-phase renewal toy model.
    SimToy(Common),
    /// Forward voter vs backward coalescing walks on a shared event log.
    DualityCheck(Common),
    /// Fisher-Wright reference paths.
    Fw(Common),
    /// Edge-started meeting tail at an intermediate time.
    EdgeTail(Common),
    /// Discordance homogenisation functional over a range of n.
    Homogenisation(Common),
    /// Consensus time (exploratory, ungated).
    Consensus(Common),
    /// Run the experiment described by a JSON config file.
    Run(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    d: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    nu: Vec<f64>,
    #[arg(long)]
    u: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Macroscopic horizon T.
    #[arg(long = "T", alias = "t-end")]
    t_end: Option<f64>,
    /// Evaluation time for duality checks.
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    hbar: Option<u32>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "s-n")]
    s_n: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// stationary-pair or edge.
    #[arg(long, value_parser = parse_start)]
    start: Option<StartMode>,
    #[arg(long = "grid-step")]
    grid_step: Option<f64>,
    #[arg(long = "t-cap")]
    t_cap: Option<f64>,
    /// Check times (units of n for the voter, absolute for fw).
    #[arg(long, value_delimiter = ',')]
    s: Vec<f64>,
    #[arg(long = "check-times", value_delimiter = ',')]
    check_times: Vec<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
    /// CSV output path; the JSON summary is written alongside.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_start(s: &str) -> Result<StartMode, String> {
    match s {
        "stationary-pair" => Ok(StartMode::StationaryPair),
        "edge" => Ok(StartMode::Edge),
        _ => Err(format!("unknown start mode `{s}` (stationary-pair | edge)")),
    }
}

impl Common {
    fn overrides(self, experiment: Option<Experiment>) -> (Option<PathBuf>, Overrides) {
        let params = Params {
            n: self.n,
            d: self.d,
            nu: self.nu,
            u: self.u,
            horizon: self.horizon,
            t_end: self.t_end,
            t: self.t,
            reps: self.reps,
            delta: self.delta,
            hbar: self.hbar,
            tol: self.tol,
            s_n: self.s_n,
            dt: self.dt,
            theta: self.theta,
            start: self.start,
            grid_step: self.grid_step,
            t_cap: self.t_cap,
            s: self.s,
            check_times: self.check_times,
        };
        let o = Overrides { experiment, params, seed: self.seed, threads: self.threads, out: self.out };
        (self.config, o)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (exp, common) = match cli.command {
        Command::Theta(c) => (Some(Experiment::ThetaTable), c),
        Command::SimMeeting(c) => (Some(Experiment::SimMeeting), c),
        Command::SimVoter(c) => (Some(Experiment::SimVoter), c),
        Command::SimToy(c) => (Some(Experiment::SimToy), c),
        Command::DualityCheck(c) => (Some(Experiment::DualityCheck), c),
        Command::Fw(c) => (Some(Experiment::Fw), c),
        Command::EdgeTail(c) => (Some(Experiment::EdgeTail), c),
        Command::Homogenisation(c) => (Some(Experiment::Homogenisation), c),
        Command::Consensus(c) => (Some(Experiment::Consensus), c),
        Command::Run(c) => {
            if c.config.is_none() {
                eprintln!("error: `run` needs --config");
                return ExitCode::from(2);
            }
            (None, c)
        }
    };
    let (path, overrides) = common.overrides(exp);
    let cfg = match load_config(path.as_deref(), overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = run(&cfg);
    match &outcome {
        Ok(report) => {
            match write_report(&cfg, report) {
                Ok((csv, json)) => eprintln!("wrote {} and {}", csv.display(), json.display()),
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            }
            for g in &report.summary.gates {
                let tag = if g.pass { "PASS" } else { "FAIL" };
                eprintln!("{tag} {} value={:.4e} threshold={:.4e}", g.name, g.value, g.threshold);
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&outcome) as u8)
}
