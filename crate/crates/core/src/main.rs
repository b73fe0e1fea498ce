use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use pvjtcs::charging::{schedule_charging, DayAheadInputs};
use pvjtcs::io::{write_atomic, ModeSelect, ScenarioConfig};
use pvjtcs::model::{GameParams, PvGroup};
use pvjtcs::simulator::{run, Mode, RunOptions, RunOutput, RunSummary};
use pvjtcs::synth::{write_scenario, SyntheticSpec};
use pvjtcs::vi::{kkt_verify, solve_slot};

#[derive(Parser)]
#[command(name = "pvjtcs", version, about = "Joint transport and charging scheduling for shared electric vehicles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Jtcs,
    Tgc,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario day.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Write the solver trace of every slot game.
        #[arg(long)]
        trace_vi: bool,
        /// Print the effective configuration and exit.
        #[arg(long)]
        dump_config: bool,
    },
    /// Solve one slot game from a JSON instance.
    SolveVi {
        #[arg(long)]
        instance: PathBuf,
        /// Also write the iteration trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Solve the day-ahead charging plan from JSON inputs; prints CSV.
    PlanCharging {
        #[arg(long)]
        inputs: PathBuf,
    },
    /// Write a synthetic grid scenario.
    GenScenario {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        requests: Option<usize>,
        #[arg(long)]
        fleet: Option<usize>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupSpec {
    m: u32,
    d: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ViInstance {
    groups: Vec<GroupSpec>,
    e_plus: f64,
    price: f64,
    #[serde(default)]
    params: GameParams,
}

#[derive(Serialize)]
struct ViReport {
    x: Vec<f64>,
    granted_e_plus: f64,
    iterations: usize,
    final_residual: Option<f64>,
    kkt_worst: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            mode,
            seed,
            out,
            trace_vi,
            dump_config,
        } => run_config(&config, mode, seed, &out, trace_vi, dump_config),
        Command::SolveVi { instance, trace } => solve_vi(&instance, trace.as_deref()),
        Command::PlanCharging { inputs } => plan_charging(&inputs),
        Command::GenScenario {
            out,
            seed,
            requests,
            fleet,
        } => {
            let mut spec = SyntheticSpec::default();
            spec.seed = seed.unwrap_or(spec.seed);
            spec.requests = requests.unwrap_or(spec.requests);
            spec.fleet_size = fleet.unwrap_or(spec.fleet_size);
            write_scenario(&spec, &out)?;
            println!("scenario written to {}", out.display());
            Ok(())
        }
    }
}

fn run_config(
    path: &Path,
    mode: Option<ModeArg>,
    seed: Option<u64>,
    out: &Path,
    trace_vi: bool,
    dump_config: bool,
) -> anyhow::Result<()> {
    let mut cfg = ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(m) = mode {
        cfg.mode = match m {
            ModeArg::Jtcs => ModeSelect::Jtcs,
            ModeArg::Tgc => ModeSelect::Tgc,
            ModeArg::Both => ModeSelect::Both,
        };
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if dump_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let scenario = cfg.build_scenario(cfg.seed)?;
    let options = RunOptions { keep_vi_traces: trace_vi };
    let modes = cfg.mode.modes();
    let outputs: Vec<RunOutput> = std::thread::scope(|s| {
        let handles: Vec<_> = modes
            .iter()
            .map(|&m| {
                let scenario = &scenario;
                s.spawn(move || run(scenario, m, options))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for o in &outputs {
        let name = o.summary.mode.name();
        write_atomic(&out.join(format!("slots_{name}.csv")), |b| o.summary.write_slots_csv(b))?;
        if let Some((inputs, plan)) = &o.day_ahead {
            write_atomic(&out.join("charging_plan.csv"), |b| plan.write_csv(inputs, b))?;
        }
        for (slot, trace) in &o.vi_traces {
            write_atomic(&out.join(format!("vi_trace_{slot}.csv")), |b| trace.write_csv(b))?;
        }
    }
    let summaries: Vec<&RunSummary> = outputs.iter().map(|o| &o.summary).collect();
    let json = serde_json::to_string_pretty(&summaries)?;
    write_atomic(&out.join("summary.json"), |b| {
        b.extend_from_slice(json.as_bytes());
        Ok(())
    })?;
    print_headline(&summaries);
    for s in &summaries {
        let a = &s.audit;
        if a.energy_out_of_bounds + a.full_pv_charged + a.transported_and_charged + a.strategy_violations + a.dry_run_hash_mismatches > 0 {
            bail!("{} run broke a simulation invariant: {a:?}", s.mode.name());
        }
    }
    Ok(())
}

fn print_headline(summaries: &[&RunSummary]) {
    println!("{:<8} {:>12} {:>14} {:>12} {:>8} {:>8} {:>10}", "mode", "avg c/kwh", "payment $", "charged kwh", "served", "waiting", "trip min");
    for s in summaries {
        println!(
            "{:<8} {:>12} {:>14.2} {:>12.1} {:>8} {:>8} {:>10}",
            s.mode.name(),
            s.average_price.map_or("-".to_string(), |p| format!("{p:.3}")),
            s.total_payment_cents / 100.0,
            s.total_charged_kwh,
            s.served,
            s.waiting,
            s.mean_trip_minutes.map_or("-".to_string(), |m| format!("{m:.1}")),
        );
    }
    let find = |m: Mode| summaries.iter().find(|s| s.mode == m);
    if let (Some(j), Some(t)) = (find(Mode::Jtcs), find(Mode::Tgc)) {
        if let (Some(pj), Some(pt)) = (j.average_price, t.average_price) {
            println!("jtcs average price is {:.2}% below tgc", (pt - pj) / pt * 100.0);
        }
        println!(
            "charged energy {:.1} vs {:.1} kwh, payment {:.2} vs {:.2} $",
            j.total_charged_kwh,
            t.total_charged_kwh,
            j.total_payment_cents / 100.0,
            t.total_payment_cents / 100.0
        );
    }
}

fn solve_vi(path: &Path, trace_path: Option<&Path>) -> anyhow::Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let inst: ViInstance = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    inst.params.validate()?;
    let groups: Vec<PvGroup> = inst.groups.iter().map(|g| PvGroup::player(g.m, g.d)).collect();
    if let Some(g) = groups.iter().find(|g| g.d > g.m) {
        bail!("group demand {} exceeds its {} vehicles", g.d, g.m);
    }
    let d_total = groups.iter().map(|g| g.d).sum();
    let sol = solve_slot(&groups, inst.e_plus, d_total, inst.price, &inst.params)?;
    let kkt_worst = if sol.players.is_empty() {
        None
    } else {
        let active: Vec<PvGroup> = sol.players.iter().map(|&i| groups[i].clone()).collect();
        let x: Vec<f64> = sol.players.iter().map(|&i| sol.x[i]).collect();
        Some(kkt_verify(&x, &active, &sol.set, inst.price, &inst.params).worst())
    };
    if let Some(p) = trace_path {
        write_atomic(p, |b| sol.trace.write_csv(b))?;
    }
    let report = ViReport {
        x: sol.x.clone(),
        granted_e_plus: sol.clamp.granted,
        iterations: sol.trace.iterations(),
        final_residual: sol.trace.final_residual(),
        kkt_worst,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn plan_charging(path: &Path) -> anyhow::Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let inputs: DayAheadInputs = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let plan = schedule_charging(&inputs)?;
    plan.write_csv(&inputs, std::io::stdout().lock())?;
    eprintln!("cost {:.4} cents, final energy {:.3} kwh", plan.cost, plan.e_final);
    Ok(())
}
