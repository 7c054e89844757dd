//! Command-line driver: single runs, epsilon sweeps, workload generation,
//! and oracle verification of converged runs. All artifacts are
//! deterministic functions of the input files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lb_core::dynamics::{self, EquilibriumReport};
use lb_core::game::SystemState;
use lb_core::oracle::{self, GridSpec};
use lb_core::scenario::{self, Scenario, WorkloadKind};
use lb_core::Error;

const EXIT_INPUT: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NO_CONVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(name = "lb", version, about = "Static load balancing via epsilon-congestion game dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the dynamics on a scenario file and write trace artifacts.
    Run {
        scenario: PathBuf,
        /// Output directory for trace.csv, load_ratio.csv, report.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run one scenario under several epsilon values.
    Sweep {
        scenario: PathBuf,
        /// Comma-separated epsilon list, e.g. 1e-12,6.1e-5,1e-3.
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        /// Output directory for sweep.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a workload scenario file.
    Gen {
        #[arg(value_enum)]
        kind: KindArg,
        #[arg(value_parser = clap::value_parser!(u32).range(1..))]
        m: u32,
        #[arg(value_parser = clap::value_parser!(u32).range(1..))]
        n: u32,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Certify a converged report against the brute-force grid oracle.
    Verify {
        report: PathBuf,
        /// Grid resolution; defaults to the run's grid_G.
        #[arg(long)]
        grid: Option<u32>,
        /// Move this client fully onto its slowest server first, to
        /// demonstrate a failing certificate.
        #[arg(long)]
        perturb: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    High,
    Low,
    GaussianAverage,
}

impl From<KindArg> for WorkloadKind {
    fn from(kind: KindArg) -> Self {
        match kind {
            KindArg::High => WorkloadKind::high(),
            KindArg::Low => WorkloadKind::low(),
            KindArg::GaussianAverage => WorkloadKind::gaussian_average(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, out } => cmd_run(&scenario, &out),
        Command::Sweep { scenario, eps, out } => cmd_sweep(&scenario, &eps, &out),
        Command::Gen { kind, m, n, seed, out } => cmd_gen(kind, m as usize, n as usize, seed, &out),
        Command::Verify { report, grid, perturb } => cmd_verify(&report, grid, perturb),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InfeasibleLoad { .. } | Error::InfeasibleInitial { .. } => EXIT_INFEASIBLE,
        _ => EXIT_INPUT,
    }
}

fn load_scenario(path: &Path) -> Result<Scenario, Error> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut scenario = scenario::parse_scenario(&text)?;
    apply_slack_override(&mut scenario.config.stability_slack)?;
    scenario.validate()?;
    Ok(scenario)
}

fn apply_slack_override(slack: &mut f64) -> Result<(), Error> {
    if let Ok(raw) = std::env::var("LB_STABILITY_SLACK") {
        let value: f64 = raw
            .parse()
            .map_err(|_| Error::Validation(format!("LB_STABILITY_SLACK is not a number: {raw}")))?;
        if !(value.is_finite() && (0.0..1.0).contains(&value)) {
            return Err(Error::Validation(format!(
                "LB_STABILITY_SLACK must lie in [0, 1), got {value}"
            )));
        }
        *slack = value;
    }
    Ok(())
}

/// 17 significant digits, enough to reparse the exact f64.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

fn cmd_run(scenario_path: &Path, out: &Path) -> Result<ExitCode, Error> {
    let scenario = load_scenario(scenario_path)?;
    let state0 = scenario.initial_state()?;
    let mut report = dynamics::run(&state0, &scenario.config)?;

    let grid = scenario.grid();
    report.best_response_gaps = (0..report.final_state.clients.len())
        .map(|j| oracle::best_response_gap(&report.final_state, j, &grid, &scenario.config))
        .collect::<Result<_, _>>()?;

    fs::create_dir_all(out).map_err(|e| Error::Validation(format!("{}: {e}", out.display())))?;
    write_file(&out.join("trace.csv"), &trace_csv(&report))?;
    write_file(&out.join("load_ratio.csv"), &load_ratio_csv(&report.final_state))?;
    let mut json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Validation(e.to_string()))?;
    json.push('\n');
    write_file(&out.join("report.json"), &json)?;

    if report.converged {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("did not converge within {} rounds", report.rounds);
        Ok(ExitCode::from(EXIT_NO_CONVERGENCE))
    }
}

fn trace_csv(report: &EquilibriumReport) -> String {
    let mut csv = String::from("round,mover,accepted,cost_before,cost_after,potential\n");
    for rec in &report.trace {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            rec.round,
            rec.mover,
            rec.accepted,
            fmt_f64(rec.cost_before),
            fmt_f64(rec.cost_after),
            fmt_f64(rec.potential),
        ));
    }
    csv
}

fn load_ratio_csv(state: &SystemState) -> String {
    let mut csv = String::from("server,mu_max,beta,LR\n");
    for (i, server) in state.servers.iter().enumerate() {
        let beta = state.arrival_rate(i);
        csv.push_str(&format!(
            "{},{},{},{}\n",
            server.id,
            fmt_f64(server.mu_max),
            fmt_f64(beta),
            fmt_f64(server.load_ratio(beta)),
        ));
    }
    csv
}

fn cmd_sweep(scenario_path: &Path, eps: &[f64], out: &Path) -> Result<ExitCode, Error> {
    let scenario = load_scenario(scenario_path)?;
    for &e in eps {
        if !(e.is_finite() && (0.0..1.0).contains(&e)) {
            return Err(Error::Validation(format!("sweep epsilon must lie in [0, 1), got {e}")));
        }
        if e == 0.0 && scenario.config.max_rounds == lb_core::game::MaxRounds::Bound {
            return Err(Error::Validation(
                "epsilon 0 needs an explicit max_rounds in the scenario".into(),
            ));
        }
    }
    let state0 = scenario.initial_state()?;

    let mut csv = String::from("epsilon,rounds,final_total_cost,final_potential,converged\n");
    for &e in eps {
        let config = lb_core::game::GameConfig { epsilon: e, ..scenario.config.clone() };
        match dynamics::run(&state0, &config) {
            Ok(report) => {
                let total = report.final_total_cost()?;
                let potential = report.final_state.system_potential()?;
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    fmt_f64(e),
                    report.rounds,
                    fmt_f64(total),
                    fmt_f64(potential),
                    report.converged,
                ));
            }
            Err(err) => {
                // record the failed row and keep sweeping
                csv.push_str(&format!("{},0,nan,nan,error:{err}\n", fmt_f64(e)));
            }
        }
    }
    fs::create_dir_all(out).map_err(|e| Error::Validation(format!("{}: {e}", out.display())))?;
    write_file(&out.join("sweep.csv"), &csv)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(kind: KindArg, m: usize, n: usize, seed: u64, out: &Path) -> Result<ExitCode, Error> {
    let mut scenario = scenario::generate(&WorkloadKind::from(kind), m, n, seed)?;
    apply_slack_override(&mut scenario.config.stability_slack)?;
    scenario.validate()?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Validation(format!("{}: {e}", dir.display())))?;
    }
    write_file(out, &scenario::serialize_scenario(&scenario))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(report_path: &Path, grid: Option<u32>, perturb: Option<usize>) -> Result<ExitCode, Error> {
    let text = fs::read_to_string(report_path)
        .map_err(|e| Error::Parse(format!("{}: {e}", report_path.display())))?;
    let report: EquilibriumReport =
        serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    if !report.converged {
        return Err(Error::Validation(
            "report did not converge; verify expects an equilibrium state".into(),
        ));
    }
    let mut config = report.config.clone();
    apply_slack_override(&mut config.stability_slack)?;
    let mut state = report.final_state.clone();
    state.validate(config.stability_slack)?;

    if let Some(client) = perturb {
        perturb_onto_slowest(&mut state, client, config.stability_slack)?;
    }

    let grid = GridSpec::new(grid.unwrap_or(config.grid_g));
    let certificate = oracle::verify_epsilon_nash(&state, config.epsilon, &grid)?;

    let mut json = serde_json::to_string_pretty(&certificate)
        .map_err(|e| Error::Validation(e.to_string()))?;
    json.push('\n');
    let out = report_path.with_file_name("certificate.json");
    write_file(&out, &json)?;
    println!(
        "epsilon {}: holds={} (with grid slack {}: {})",
        certificate.epsilon_checked,
        certificate.holds,
        certificate.grid_slack,
        certificate.holds_with_slack
    );
    Ok(ExitCode::SUCCESS)
}

/// Park the client's whole load on the feasible server with the worst
/// current delay.
fn perturb_onto_slowest(state: &mut SystemState, client: usize, slack: f64) -> Result<(), Error> {
    if client >= state.clients.len() {
        return Err(Error::Validation(format!("no client {client} to perturb")));
    }
    let phi = state.clients[client].phi;
    let mut target: Option<(usize, f64)> = None;
    for (i, server) in state.servers.iter().enumerate() {
        let others: f64 = state
            .clients
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != client)
            .map(|(k, c)| state.strategy.row(k)[i] * c.phi)
            .sum();
        if others + phi > server.mu_max * (1.0 - slack) {
            continue;
        }
        let delay = 1.0 / (server.mu_max - others);
        if target.is_none_or(|(_, d)| delay > d) {
            target = Some((i, delay));
        }
    }
    let (slowest, _) = target.ok_or(Error::InfeasibleLoad {
        demand: phi,
        capacity: 0.0,
    })?;
    let mut row = vec![0.0; state.servers.len()];
    row[slowest] = 1.0;
    state
        .strategy
        .set_row(client, row)
        .map_err(|e| Error::Validation(e.to_string()))?;
    Ok(())
}
