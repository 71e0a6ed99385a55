use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ddopt::experiment::{cmd_report, cmd_run, ExperimentSpec, ProblemSource};
use ddopt::reference::solve_reference_cached;
use ddopt::schedule::{generate_schedule, AsyncSchedule};
use ddopt::{Error, InexactOracle, Result, Scenario};

/// Dual decomposition under simulated asynchrony and inexact agents.
#[derive(Parser)]
#[command(name = "ddopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSV trace.
    Run {
        #[command(flatten)]
        setup: Setup,
        /// Leave the envelope columns empty.
        #[arg(long)]
        no_envelopes: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compare traces of the same problem (markdown).
    Report {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the reference solution as JSON.
    Reference {
        /// `num` or a problem file.
        #[arg(long, default_value = "num")]
        problem: String,
    },
    /// Check a configuration and its schedule without running.
    Validate {
        #[command(flatten)]
        setup: Setup,
        /// Also write the schedule that would be used.
        #[arg(long)]
        write_schedule: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Setup {
    /// `num` or a problem file.
    #[arg(long, default_value = "num")]
    problem: String,
    /// Starting configuration; the other flags override it.
    #[arg(long, default_value = "sync_exact")]
    scenario: String,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    k0: Option<usize>,
    /// Total inexactness, split equally over agents.
    #[arg(long, conflicts_with = "eps")]
    eps_total: Option<f64>,
    /// Per-agent inexactness, comma separated.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_oracle)]
    oracle: Option<InexactOracle>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    record_every: Option<usize>,
    /// Schedule file; generated from the seed otherwise.
    #[arg(long)]
    schedule: Option<PathBuf>,
}

fn parse_oracle(s: &str) -> std::result::Result<InexactOracle, String> {
    match s {
        "boxed" => Ok(InexactOracle::Boxed),
        "level_set" => Ok(InexactOracle::LevelSet),
        _ => Err(format!("expected boxed or level_set, got {s}")),
    }
}

impl Setup {
    fn spec(&self) -> Result<ExperimentSpec> {
        let sc: Scenario = self.scenario.parse()?;
        let problem = ProblemSource::parse(&self.problem);
        let n_agents = problem.load()?.n_agents();
        let mut config = sc.config_for(n_agents);
        if let Some(a) = self.alpha {
            config.alpha = a;
        }
        if let Some(k0) = self.k0 {
            config.k0 = k0;
        }
        if let Some(total) = self.eps_total {
            config.eps_per_agent = vec![total / n_agents as f64; n_agents];
            if self.oracle.is_none() && total > 0.0 {
                config.oracle = InexactOracle::LevelSet;
            }
        }
        if let Some(eps) = &self.eps {
            config.eps_per_agent = eps.clone();
        }
        if let Some(o) = self.oracle {
            config.oracle = o;
        }
        if let Some(m) = self.max_iters {
            config.max_iters = m;
        }
        if self.tolerance.is_some() {
            config.tolerance = self.tolerance;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(r) = self.record_every {
            config.record_every = r;
        }
        Ok(ExperimentSpec {
            problem,
            label: sc.name().to_owned(),
            config,
            schedule: self.schedule.clone(),
            envelopes: true,
        })
    }
}

fn validate(spec: &ExperimentSpec, write_schedule: Option<PathBuf>) -> Result<()> {
    let problem = spec.problem.load()?;
    let lips = problem.lipschitz_data();
    spec.config.validate(&lips, problem.n_agents())?;
    let schedule = match &spec.schedule {
        Some(path) => {
            AsyncSchedule::from_text(&std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?)?
        }
        None => generate_schedule(
            problem.n_agents(),
            spec.config.max_iters,
            spec.config.k0,
            spec.config.seed,
        )?,
    };
    let violations = schedule.validate();
    for v in &violations {
        eprintln!("{v}");
    }
    if !violations.is_empty() {
        return Err(Error::Schedule(format!(
            "{} violation(s)",
            violations.len()
        )));
    }
    if let Some(path) = write_schedule {
        std::fs::write(&path, schedule.to_text()).map_err(|e| Error::Io { path, source: e })?;
    }
    println!(
        "ok: {} agents, alpha = {} < {}, k0 = {}, eps_D = {}",
        problem.n_agents(),
        spec.config.alpha,
        lips.max_step_size(spec.config.k0),
        spec.config.k0,
        spec.config.eps_total()
    );
    Ok(())
}

fn main_inner(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            setup,
            no_envelopes,
            output,
        } => {
            let mut spec = setup.spec()?;
            spec.envelopes = !no_envelopes;
            let exp = cmd_run(&spec, &output)?;
            eprintln!(
                "{}: {} iterations, {} rows -> {}",
                spec.label,
                exp.trace.iterations,
                exp.rows.len(),
                output.display()
            );
        }
        Command::Report { traces, output } => {
            let text = cmd_report(&traces)?;
            match output {
                Some(path) => {
                    std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?
                }
                None => print!("{text}"),
            }
        }
        Command::Reference { problem } => {
            let problem = ProblemSource::parse(&problem).load()?;
            let r = solve_reference_cached(&problem, &problem.lipschitz_data())?;
            println!(
                "{}",
                serde_json::to_string_pretty(&r).expect("serializable")
            );
        }
        Command::Validate {
            setup,
            write_schedule,
        } => validate(&setup.spec()?, write_schedule)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
