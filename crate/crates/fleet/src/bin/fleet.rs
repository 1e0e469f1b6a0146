//! Command-line front end: single-day runs, the estimation pipeline,
//! sensitivity sweeps, and scenario validation.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use milp::SolverConfig;

use fleet::assigner::TargetPolicy;
use fleet::core::{Kwh, Minutes, Usd};
use fleet::planner::{
    estimate_delta, estimate_wait_and_gamma, solve_plan, CongestionTrace, DayAheadPlan,
    DriveTrace, PlanParams,
};
use fleet::policies::{PolicyKind, QueueBehavior};
use fleet::scenario::{default_stations, generate, load_bundle, Scenario, ScenarioConfig};
use fleet::sim::{run_day, trace_to_csv, KpiReport, SimConfig};
use fleet::{FleetError, Result};

#[derive(Parser)]
#[command(name = "fleet", about = "Electric ride-hailing fleet simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one or more seeded days and write KPI tables.
    Run(RunArgs),
    /// Estimate planner inputs from historical simulation runs.
    Estimate(EstimateArgs),
    /// Cross-product sensitivity sweep, long-format CSV output.
    Sweep(SweepArgs),
    /// Load and validate a scenario bundle.
    ValidateScenario(ValidateArgs),
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario bundle directory; omitted means synthetic generation.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    fleet_size: usize,
    #[arg(long, default_value_t = 600)]
    demand: usize,
    /// Battery capacity per vehicle, kWh.
    #[arg(long, default_value_t = 62.0)]
    battery: f64,
    /// Chargers per station over the default 4-station layout.
    #[arg(long, default_value_t = 1)]
    chargers_per_station: usize,
    /// Replace the time-of-use curve with a flat 0.33 USD/kWh price.
    #[arg(long)]
    no_tou: bool,
}

impl ScenarioArgs {
    fn config(&self) -> ScenarioConfig {
        ScenarioConfig {
            fleet_size: self.fleet_size,
            demand_total: self.demand,
            battery_kwh: self.battery,
            stations: Some(default_stations(self.chargers_per_station)),
            constant_price: if self.no_tou { Some(0.33) } else { None },
            ..ScenarioConfig::default()
        }
    }

    fn build(&self, seed: u64) -> Result<Scenario> {
        match &self.scenario {
            Some(dir) => load_bundle(dir),
            None => generate(&self.config(), seed),
        }
    }
}

#[derive(Args, Clone)]
struct PolicyArgs {
    #[arg(long, default_value = "congestion_aware", value_parser = parse_policy)]
    policy: PolicyKind,
    #[arg(long, default_value = "chasing_b", value_parser = parse_queue_behavior)]
    queue_behavior: QueueBehavior,
    /// Benchmark patience at a queue before chasing, minutes.
    #[arg(long, default_value_t = 15.0)]
    max_wait_at_charger_min: f64,
    /// Assignment delay threshold, minutes; "inf" disables delaying.
    #[arg(long, default_value = "30", value_parser = parse_wait)]
    max_queue_wait: f64,
    /// Charge straight to E_max instead of anticipating remaining needs.
    #[arg(long)]
    no_anticipation: bool,
}

impl PolicyArgs {
    fn sim_config(&self) -> SimConfig {
        SimConfig {
            policy: self.policy,
            queue_behavior: self.queue_behavior,
            max_wait_at_charger: self.max_wait_at_charger_min,
            max_queue_wait: self.max_queue_wait,
            target_policy: if self.no_anticipation {
                TargetPolicy::FullToMax
            } else {
                TargetPolicy::Anticipative
            },
            ..SimConfig::default()
        }
    }
}

fn parse_policy(s: &str) -> std::result::Result<PolicyKind, String> {
    PolicyKind::ALL
        .iter()
        .find(|k| k.name() == s)
        .copied()
        .ok_or_else(|| format!("unknown policy `{s}` (key: policy)"))
}

fn parse_queue_behavior(s: &str) -> std::result::Result<QueueBehavior, String> {
    match s {
        "naive" => Ok(QueueBehavior::Naive),
        "chasing_a" => Ok(QueueBehavior::ChasingA),
        "chasing_b" => Ok(QueueBehavior::ChasingB),
        _ => Err(format!("unknown queue behavior `{s}` (key: queue_behavior)")),
    }
}

fn parse_wait(s: &str) -> std::result::Result<f64, String> {
    if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("none") {
        return Ok(f64::INFINITY);
    }
    s.parse::<f64>().map_err(|e| e.to_string())
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u64])]
    seeds: Vec<u64>,
    /// Day-ahead plan CSV; congestion-aware runs without one plan on the fly.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Estimation datasets used when planning on the fly.
    #[arg(long, default_value_t = 3)]
    datasets: usize,
    /// Solver wall-clock budget for the day-ahead plan, seconds.
    #[arg(long, default_value_t = 10.0)]
    plan_time_limit: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write per-seed event trace CSVs.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Number of independent estimation days.
    #[arg(long, default_value_t = 10)]
    datasets: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u64, 2, 3])]
    seeds: Vec<u64>,
    /// Policies to sweep, comma-separated; "all" expands to every policy.
    #[arg(long, default_value = "all")]
    policies: String,
    /// Battery capacities to sweep, kWh.
    #[arg(long, value_delimiter = ',', default_values_t = vec![62.0])]
    batteries: Vec<f64>,
    /// Charger counts per station to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1])]
    chargers: Vec<usize>,
    /// Queue-wait limits to sweep, minutes or "inf".
    #[arg(long, value_delimiter = ',', default_value = "30", value_parser = parse_wait)]
    max_queue_waits: Vec<f64>,
    /// Confirm grids larger than 200 cells.
    #[arg(long)]
    yes: bool,
    #[arg(long, default_value_t = 2)]
    datasets: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    scenario: PathBuf,
}

/// Estimated planner inputs plus their serialized form.
struct Estimates {
    delta: Vec<Kwh>,
    wait: Vec<Vec<Minutes>>,
    gamma: Usd,
    lambda: Vec<f64>,
}

/// Run the two-stage estimation: energy-unconstrained days for per-epoch
/// consumption, Fastest-policy days for queue waits and opportunity cost.
fn estimate(args: &ScenarioArgs, datasets: usize, base_seed: u64) -> Result<Estimates> {
    if datasets == 0 {
        return Err(FleetError::Validation("estimation needs at least one dataset".into()));
    }
    let mut drive = Vec::new();
    let mut congestion = Vec::new();
    let mut lambda = Vec::new();
    for i in 0..datasets {
        let seed = base_seed.wrapping_add(10_000 + i as u64);
        let scenario = args.build(seed)?;
        if scenario.requests.is_empty() {
            return Err(FleetError::Validation(
                "estimation datasets must contain demand".into(),
            ));
        }
        let nh = scenario.config.grid.num_epochs();
        if lambda.is_empty() {
            lambda = vec![0.0; nh];
        }
        for r in &scenario.requests {
            lambda[scenario.config.grid.epoch_of(r.arrival_time) - 1] += 1.0;
        }
        let unconstrained = SimConfig {
            energy_unconstrained: true,
            collect_trace: false,
            ..SimConfig::default()
        };
        let (report, _) = run_day(&scenario, None, None, &unconstrained, seed)?;
        drive.push(DriveTrace {
            per_epoch_energy: report.per_epoch_drive_energy,
            num_vehicles: scenario.fleet.len(),
        });
        let fastest = SimConfig {
            policy: PolicyKind::Fastest,
            collect_trace: false,
            ..SimConfig::default()
        };
        let (report, _) = run_day(&scenario, None, None, &fastest, seed)?;
        congestion.push(CongestionTrace {
            waits: report
                .sessions
                .iter()
                .map(|s| (s.arrival_epoch, s.charger_id, s.queue_wait))
                .collect(),
            profit: report.profit(),
            drive_minutes: report.drive_minutes,
        });
    }
    for l in &mut lambda {
        *l /= datasets as f64;
    }
    let sample = args.build(base_seed)?;
    let delta = estimate_delta(&drive)?;
    let (wait, gamma) =
        estimate_wait_and_gamma(&congestion, sample.config.grid.num_epochs(), sample.chargers.len())?;
    if !(gamma > 0.0) {
        return Err(FleetError::Validation(
            "estimated opportunity cost is nonpositive; estimation days were unprofitable".into(),
        ));
    }
    Ok(Estimates { delta, wait, gamma, lambda })
}

fn plan_params(scenario: &Scenario, est: &Estimates) -> Result<PlanParams> {
    let grid = &scenario.config.grid;
    let epoch_prices: Result<Vec<Usd>> = (1..=grid.num_epochs())
        .map(|h| scenario.prices.epoch_price(h, grid))
        .collect();
    Ok(PlanParams {
        delta: est.delta.clone(),
        wait: est.wait.clone(),
        gamma: est.gamma,
        access_cost: scenario.config.econ.charging_access_cost,
        epoch_prices: epoch_prices?,
        lambda: est.lambda.clone(),
    })
}

fn build_plan(scenario: &Scenario, est: &Estimates, time_limit: f64) -> Result<DayAheadPlan> {
    let params = plan_params(scenario, est)?;
    params.validate(scenario.chargers.len())?;
    // accept the incumbent at the limit; plans need not be proven optimal
    let mut solver = SolverConfig::default().with_time_limit(time_limit);
    solver.relative_gap_tolerance = 0.05;
    solve_plan(
        &scenario.fleet,
        &scenario.chargers,
        &params,
        &scenario.config.grid,
        &solver,
        scenario.chargers.len(),
    )
}

fn params_csv(est: &Estimates) -> String {
    let mut out = String::from("kind,epoch,charger,value\n");
    for (h, d) in est.delta.iter().enumerate() {
        let _ = writeln!(out, "delta,{},,{d:.6}", h + 1);
    }
    for (h, row) in est.wait.iter().enumerate() {
        for (s, w) in row.iter().enumerate() {
            let _ = writeln!(out, "wait,{},{s},{w:.6}", h + 1);
        }
    }
    for (h, l) in est.lambda.iter().enumerate() {
        let _ = writeln!(out, "lambda,{},,{l:.6}", h + 1);
    }
    let _ = writeln!(out, "gamma,,,{:.6}", est.gamma);
    out
}

fn epoch_series_csv(report: &KpiReport) -> String {
    let mut out = String::from("epoch,charging,waiting,drive_energy_kwh\n");
    for h in 0..report.per_epoch_charging.len() {
        let _ = writeln!(
            out,
            "{},{},{},{:.4}",
            h + 1,
            report.per_epoch_charging[h],
            report.per_epoch_waiting[h],
            report.per_epoch_drive_energy[h]
        );
    }
    out
}

fn soc_csv(report: &KpiReport) -> String {
    let mut out = String::from("vehicle_id,soc_kwh\n");
    for (i, s) in report.final_soc.iter().enumerate() {
        let _ = writeln!(out, "{i},{s:.4}");
    }
    out
}

fn mean_row(reports: &[KpiReport]) -> String {
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&KpiReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n;
    format!(
        "{:.4},{:.4},{:.4},{:.4},{:.2},{:.2},{:.4},{:.3},{:.3}",
        mean(&|r| r.profit()) / 1000.0,
        mean(&|r| r.revenue) / 1000.0,
        mean(&|r| r.travel_cost()) / 1000.0,
        mean(&|r| r.charging_cost) / 1000.0,
        mean(&|r| r.charged_energy),
        mean(&|r| r.service_rate()) * 100.0,
        mean(&|r| r.km_total) / 1000.0,
        mean(&|r| r.wait_minutes) / 60.0,
        mean(&|r| r.charge_minutes) / 60.0
    )
}

/// One seeded day under the given policy; congestion-aware runs receive an
/// estimated plan when none is supplied.
fn run_one(
    scenario: &Scenario,
    sim: &SimConfig,
    plan: Option<&DayAheadPlan>,
    delta: Option<&[Kwh]>,
    seed: u64,
) -> Result<(KpiReport, String)> {
    let (report, trace) = run_day(scenario, plan, delta, sim, seed)?;
    Ok((report, trace_to_csv(&trace)))
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let needs_plan = args.policy.policy == PolicyKind::CongestionAware;
    let est = if needs_plan {
        Some(estimate(&args.scenario, args.datasets, args.seeds[0])?)
    } else {
        None
    };
    let mut sim = args.policy.sim_config();
    sim.collect_trace = args.trace;
    let mut reports = Vec::new();
    let mut csv = format!("seed,policy,{}\n", KpiReport::CSV_HEADER);
    for &seed in &args.seeds {
        let scenario = args.scenario.build(seed)?;
        let plan = match (&args.plan, &est) {
            (Some(path), _) => Some(fleet::planner::load_plan(path, scenario.fleet.len())?),
            (None, Some(est)) => Some(build_plan(&scenario, est, args.plan_time_limit)?),
            (None, None) => None,
        };
        let delta = est.as_ref().map(|e| e.delta.as_slice());
        let (report, trace) = run_one(&scenario, &sim, plan.as_ref(), delta, seed)?;
        if args.trace {
            std::fs::write(args.out.join(format!("trace_seed{seed}.csv")), trace)?;
        }
        std::fs::write(
            args.out.join(format!("epoch_series_seed{seed}.csv")),
            epoch_series_csv(&report),
        )?;
        std::fs::write(args.out.join(format!("soc_seed{seed}.csv")), soc_csv(&report))?;
        let _ = writeln!(csv, "{seed},{},{}", args.policy.policy.name(), report.csv_row());
        reports.push(report);
    }
    let _ = writeln!(csv, "mean,{},{}", args.policy.policy.name(), mean_row(&reports));
    std::fs::write(args.out.join("kpis.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_estimate(args: &EstimateArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let est = estimate(&args.scenario, args.datasets, args.seed)?;
    let csv = params_csv(&est);
    std::fs::write(args.out.join("params.csv"), &csv)?;
    println!(
        "estimated over {} datasets: gamma {:.4} USD/min, params written to {}",
        args.datasets,
        est.gamma,
        args.out.join("params.csv").display()
    );
    Ok(())
}

fn parse_policies(s: &str) -> Result<Vec<PolicyKind>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(PolicyKind::ALL.to_vec());
    }
    s.split(',')
        .map(|p| {
            PolicyKind::ALL
                .iter()
                .find(|k| k.name() == p.trim())
                .copied()
                .ok_or_else(|| FleetError::Validation(format!("unknown policy `{}`", p.trim())))
        })
        .collect()
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let policies = parse_policies(&args.policies)?;
    if policies.is_empty()
        || args.batteries.is_empty()
        || args.chargers.is_empty()
        || args.max_queue_waits.is_empty()
    {
        return Err(FleetError::Validation("sweep grid has an empty dimension".into()));
    }
    let cells = policies.len() * args.batteries.len() * args.chargers.len()
        * args.max_queue_waits.len();
    if cells * args.seeds.len() > 200 && !args.yes {
        return Err(FleetError::Validation(format!(
            "{} runs requested; pass --yes to confirm",
            cells * args.seeds.len()
        )));
    }
    let mut csv = format!(
        "policy,battery_kwh,chargers_per_station,max_queue_wait_min,seed,{}\n",
        KpiReport::CSV_HEADER
    );
    for &policy in &policies {
        for &battery in &args.batteries {
            for &chargers in &args.chargers {
                for &mqw in &args.max_queue_waits {
                    let scen_args = ScenarioArgs {
                        battery,
                        chargers_per_station: chargers,
                        ..args.scenario.clone()
                    };
                    let mut sim = SimConfig {
                        policy,
                        max_queue_wait: mqw,
                        collect_trace: false,
                        ..SimConfig::default()
                    };
                    sim.collect_trace = false;
                    let est = if policy == PolicyKind::CongestionAware {
                        Some(estimate(&scen_args, args.datasets, args.seeds[0])?)
                    } else {
                        None
                    };
                    for &seed in &args.seeds {
                        let scenario = scen_args.build(seed)?;
                        let plan = match &est {
                            Some(e) => Some(build_plan(&scenario, e, 10.0)?),
                            None => None,
                        };
                        let delta = est.as_ref().map(|e| e.delta.as_slice());
                        let (report, _) =
                            run_one(&scenario, &sim, plan.as_ref(), delta, seed)?;
                        let mqw_label = if mqw.is_infinite() {
                            "inf".to_string()
                        } else {
                            format!("{mqw}")
                        };
                        let _ = writeln!(
                            csv,
                            "{},{battery},{chargers},{mqw_label},{seed},{}",
                            policy.name(),
                            report.csv_row()
                        );
                    }
                }
            }
        }
    }
    std::fs::write(args.out.join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<()> {
    let scenario = load_bundle(&args.scenario)?;
    scenario.validate()?;
    println!(
        "ok: {} vehicles, {} chargers, {} requests, seed {}",
        scenario.fleet.len(),
        scenario.chargers.len(),
        scenario.requests.len(),
        scenario.seed
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::ValidateScenario(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (FleetError::Validation(_) | FleetError::Config(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
