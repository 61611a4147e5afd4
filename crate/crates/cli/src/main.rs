use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use log::{debug, info};

use d3s_core::casestudy::{self, guardrail_instance, long_failure, short_failure};
use d3s_core::dimensioning::{
    brute_force_front, dimension, max_min_rate, DimensionConfig, DimensionError, FrontPoint, PlanContext, Term,
};
use d3s_core::scenario::{parse_scenario, Scenario, ScenarioError, SpectrumMode};
use d3s_core::simulator::{run as simulate, SimConfig, SimError};

#[derive(Parser, Debug)]
#[command(name = "d3s", version, about = "Plan and simulate UAV-assisted network healing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dimension, plan and simulate one scenario.
    Run(RunArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Simulate,
    DimensionOnly,
    Oracle,
    CasestudyShort,
    CasestudyLong,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Spectrum {
    Shared,
    Ofdma,
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Scenario file (TOML). Case-study modes generate their own.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "simulate")]
    mode: Mode,
    /// Drone comm power budgets to sweep, watts.
    #[arg(long, value_delimiter = ',')]
    power_sweep: Vec<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Back-pressure momentum weight.
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, value_enum)]
    spectrum: Option<Spectrum>,
    /// Simulated slots; defaults to the whole service window.
    #[arg(long)]
    slots: Option<usize>,
}

/// Bad input: exit code 2.
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

fn sim_error(e: SimError) -> anyhow::Error {
    match e {
        SimError::Scenario(e) => input(e.to_string()),
        other => other.into(),
    }
}

fn dim_error(e: DimensionError) -> anyhow::Error {
    match e {
        DimensionError::Scenario(e) => input(e.to_string()),
        other => other.into(),
    }
}

const FRONT_CSV_HEADER: &str = "k,f_T_seconds,violation,plan_id";
const RATE_POWER_CSV_HEADER: &str = "platform,power_W,uav_count,min_rate_bps,plan_id";

fn write_front(path: &Path, points: &[FrontPoint], flagged: &[FrontPoint]) -> anyhow::Result<()> {
    let mut out = io::BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(out, "{FRONT_CSV_HEADER}")?;
    for p in points.iter().chain(flagged) {
        let o = &p.objectives;
        let life = if o.min_lifetime.is_finite() { format!("{:.3}", o.min_lifetime) } else { "inf".into() };
        writeln!(out, "{},{},{:.3},{}", o.uav_count, life, o.max_rate_violation, p.plan_id)?;
    }
    out.flush()?;
    Ok(())
}

fn load_scenario(args: &RunArgs) -> anyhow::Result<Scenario> {
    let seed = args.seed.unwrap_or(0);
    let mut sc = match (&args.scenario, args.mode) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| input(format!("cannot read scenario {}: {e}", path.display())))?;
            let mut sc = parse_scenario(&text).map_err(|e| input(format!("{}: {e}", path.display())))?;
            if let Some(s) = args.seed {
                sc.seed = s;
            }
            sc
        }
        (None, Mode::CasestudyLong) => long_failure(seed).map_err(|e: ScenarioError| input(e.to_string()))?,
        (None, Mode::Oracle) => guardrail_instance(seed),
        (None, _) => short_failure(seed).map_err(|e: ScenarioError| input(e.to_string()))?,
    };
    if let Some(s) = args.spectrum {
        sc.channels.mode = match s {
            Spectrum::Shared => SpectrumMode::SharedSpectrum,
            Spectrum::Ofdma => SpectrumMode::Ofdma,
        };
    }
    sc.validate().map_err(|e| input(e.to_string()))?;
    Ok(sc)
}

fn label(mode: Mode) -> &'static str {
    match mode {
        Mode::Simulate => "simulate",
        Mode::DimensionOnly => "dimension",
        Mode::Oracle => "oracle",
        Mode::CasestudyShort => "casestudy-short",
        Mode::CasestudyLong => "casestudy-long",
    }
}

fn term_of(sc: &Scenario, mode: Mode) -> Term {
    match mode {
        Mode::CasestudyLong => Term::Long,
        Mode::CasestudyShort => Term::Short,
        _ => sc.request.failure_class.map_or(Term::Short, |c| c.term()),
    }
}

/// Re-dimensions the short-term fleet at every drone budget with the UAV count
/// held at that of the base plan, then adds the long-term plan at its own budget.
fn power_sweep(sc: &Scenario, sweep: &[f64], dir: &Path) -> anyhow::Result<()> {
    let path = dir.join("rate_vs_power.csv");
    let mut out = io::BufWriter::new(fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(out, "{RATE_POWER_CSV_HEADER}")?;
    let cfg = DimensionConfig {
        seed: sc.seed,
        ..DimensionConfig::default()
    };
    let snapshot = sc.demand_at(sc.request.start()).map_err(|e| input(e.to_string()))?;
    let ctx = PlanContext::new(sc, &cfg);
    let base = dimension(sc, &sc.fleet, Term::Short, &cfg).map_err(dim_error)?;
    let k = base.min_count_plan().map(|p| p.objectives.uav_count);
    for &w in sweep {
        let mut s = sc.clone();
        for spec in s.fleet.specs.iter_mut().filter(|p| p.term == Term::Short) {
            spec.comm_power_max = w;
        }
        let pinned = DimensionConfig {
            k_min: k.unwrap_or(1),
            k_max: k,
            ..cfg.clone()
        };
        let r = dimension(&s, &s.fleet, Term::Short, &pinned).map_err(dim_error)?;
        match r.front.first().or(r.flagged.first()) {
            Some(p) => {
                let rate = max_min_rate(&p.plan.association(), &snapshot, &p.plan.uavs, &ctx)?;
                writeln!(out, "drone,{w},{},{rate:.3},{}", p.objectives.uav_count, p.plan_id)?;
            }
            None => writeln!(out, "drone,{w},0,0.000,")?,
        }
        info!("swept {w} W");
    }
    if sc.fleet.uavs.iter().any(|u| sc.fleet.spec_of(u).term == Term::Long) {
        let r = dimension(sc, &sc.fleet, Term::Long, &cfg).map_err(dim_error)?;
        if let Some(p) = r.min_count_plan() {
            let budget = p.plan.uavs.iter().map(|u| u.spec.comm_power_max).fold(0.0, f64::max);
            let rate = max_min_rate(&p.plan.association(), &snapshot, &p.plan.uavs, &ctx)?;
            writeln!(out, "helikite,{budget},{},{rate:.3},{}", p.objectives.uav_count, p.plan_id)?;
        }
    }
    out.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(args: &RunArgs) -> anyhow::Result<()> {
    if !(0.0..1.0).contains(&args.beta) {
        return Err(input(format!("--beta {} outside [0, 1)", args.beta)));
    }
    if let Some(w) = args.power_sweep.iter().find(|w| !(**w > 0.0)) {
        return Err(input(format!("--power-sweep value {w} must be > 0")));
    }
    let sc = load_scenario(args)?;
    let name = label(args.mode);
    let dir = args.out.join(format!("{name}_seed{}", sc.seed));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    debug!("scenario seed {} with {} devices", sc.seed, sc.devices.len());
    fs::write(dir.join("scenario.toml"), sc.to_toml_string()?).with_context(|| format!("writing {}", dir.display()))?;

    let cfg = DimensionConfig {
        seed: sc.seed,
        ..DimensionConfig::default()
    };
    match args.mode {
        Mode::Oracle => {
            let oracle = sc
                .oracle
                .as_ref()
                .ok_or_else(|| input("oracle mode needs a scenario with an oracle section"))?;
            let exact = brute_force_front(&sc, &sc.fleet, &oracle.candidates, &oracle.power_levels).map_err(dim_error)?;
            let fleet_cfg = DimensionConfig {
                candidate_locations: Some(oracle.candidates.clone()),
                power_levels: Some(oracle.power_levels.clone()),
                ..cfg
            };
            let heur = dimension(&sc, &sc.fleet, term_of(&sc, args.mode), &fleet_cfg).map_err(dim_error)?;
            write_front(&dir.join("oracle_front.csv"), &exact, &[])?;
            write_front(&dir.join("front.csv"), &heur.front, &heur.flagged)?;
            let counts = |f: &[FrontPoint]| f.iter().map(|p| p.objectives.uav_count).collect::<std::collections::BTreeSet<_>>();
            let (a, b) = (counts(&exact), counts(&heur.front));
            let show = |v: Vec<&usize>| v.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" ");
            println!("f_U only in oracle: [{}]", show(a.difference(&b).collect()));
            println!("f_U only in heuristic: [{}]", show(b.difference(&a).collect()));
        }
        Mode::DimensionOnly => {
            let r = dimension(&sc, &sc.fleet, term_of(&sc, args.mode), &cfg).map_err(dim_error)?;
            write_front(&dir.join("front.csv"), &r.front, &r.flagged)?;
            for d in &r.diagnostics {
                info!("{d}");
            }
        }
        Mode::Simulate | Mode::CasestudyShort | Mode::CasestudyLong => {
            if matches!(args.mode, Mode::CasestudyShort | Mode::CasestudyLong) {
                let r = dimension(&sc, &sc.fleet, Term::Short, &cfg).map_err(dim_error)?;
                let file = if args.mode == Mode::CasestudyLong { "front_short.csv" } else { "front.csv" };
                write_front(&dir.join(file), &r.front, &r.flagged)?;
                if args.mode == Mode::CasestudyLong {
                    let r = dimension(&sc, &sc.fleet, Term::Long, &cfg).map_err(dim_error)?;
                    write_front(&dir.join("front.csv"), &r.front, &r.flagged)?;
                }
            }
            let sim = SimConfig {
                label: name.into(),
                slot_length: casestudy::SLOT_LENGTH,
                horizon_slots: args.slots,
                beta: args.beta,
                dimension: cfg,
                ..SimConfig::default()
            };
            let report = simulate(&sc, &sim).map_err(sim_error)?;
            report.write_bundle(&args.out)?;
            print!("{}", report.summary());
        }
    }
    if !args.power_sweep.is_empty() {
        power_sweep(&sc, &args.power_sweep, &dir)?;
    }
    println!("outputs in {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("D3S_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<InputError>() => {
            eprintln!("error kind=input msg=\"{}\"", format!("{e:#}").replace('"', "'"));
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error kind=internal msg=\"{}\"", format!("{e:#}").replace('"', "'"));
            ExitCode::from(1)
        }
    }
}
