//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for invalid input (bad arguments, scenario
//! parse or validation errors), 2 for I/O failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::engine::{self, Jitter, SweepParam};
use crate::error::Result;
use crate::output;
use crate::power_path::{required_capacitance, usable_energy};
use crate::scenario::Scenario;

#[derive(Debug, Parser)]
#[command(name = "leaksim", version, about = "Battery-free LTE-M leak beacon simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ScenarioArg {
    /// Scenario file (TOML). Built-in defaults are used when omitted.
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario and write trace.csv, events.jsonl and report.txt.
    Run {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short, default_value = "out")]
        out: PathBuf,
    },
    /// Run one simulation per value of a single parameter.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// capacitance_f, depth_mm, idle_interval_s, psm_enabled, band_mode or gate_mode.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, short, default_value = "out")]
        out: PathBuf,
    },
    /// Repeated runs with perturbed harvester endpoints and per-run seeds.
    #[command(name = "montecarlo")]
    MonteCarlo {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, short)]
        n: usize,
        /// Defaults to the scenario seed.
        #[arg(long)]
        master_seed: Option<u64>,
        /// Relative half-width of the uniform perturbation on the SCC endpoints.
        #[arg(long, default_value_t = 0.10)]
        jitter: f64,
        /// Relative half-width of the uniform perturbation on the OCV endpoints.
        #[arg(long, default_value_t = 0.05)]
        v_jitter: f64,
        #[arg(long, short, default_value = "out")]
        out: PathBuf,
    },
    /// Capacitance needed to supply a load energy through the gate window.
    #[command(name = "size-cap")]
    SizeCap {
        #[arg(long = "e-load-j")]
        e_load_j: f64,
        #[arg(long)]
        eff: f64,
        #[arg(long = "v-on")]
        v_on: f64,
        #[arg(long = "v-off")]
        v_off: f64,
    },
}

fn load(arg: &ScenarioArg) -> Result<Scenario> {
    match &arg.scenario {
        Some(p) => Scenario::load(p),
        None => Ok(Scenario::default()),
    }
}

fn cmd_run(arg: &ScenarioArg, seed: Option<u64>, out: &Path) -> Result<String> {
    let mut s = load(arg)?;
    if let Some(seed) = seed {
        s.run.seed = seed;
        s.validate()?;
    }
    let r = engine::run(&s)?;
    output::write_run(out, &s, &r)?;
    let e = &r.summary.events;
    Ok(format!(
        "activation: {}\ncycles: {}\nbeacons per cycle: {:?}\nbrownouts: {}\nwrote {}\n",
        e.activation_time_s
            .map_or("never".into(), |t| format!("{:.2} min", t / 60.0)),
        e.cycles,
        e.beacons_per_cycle,
        e.brownouts,
        out.display()
    ))
}

fn cmd_sweep(arg: &ScenarioArg, param: &str, values: &[String], out: &Path) -> Result<String> {
    let s = load(arg)?;
    let p: SweepParam = param.parse()?;
    let values: Vec<String> = values.iter().map(|v| v.trim().to_string()).collect();
    let scenarios = values.iter().map(|v| p.apply(&s, v)).collect::<Result<Vec<_>>>()?;
    let results = engine::sweep(&s, param, &values)?;
    output::write_sweep(out, p.as_str(), &values, &scenarios, &results)?;
    Ok(output::sweep_summary_csv(&values, &results))
}

fn cmd_montecarlo(
    arg: &ScenarioArg,
    n: usize,
    master_seed: Option<u64>,
    jitter: f64,
    v_jitter: f64,
    out: &Path,
) -> Result<String> {
    let s = load(arg)?;
    let master = master_seed.unwrap_or(s.run.seed);
    let jitter = Jitter {
        i_peak_frac: jitter,
        i_plateau_frac: jitter,
        v_peak_frac: v_jitter,
        v_plateau_frac: v_jitter,
    };
    let mc = engine::run_monte_carlo(&s, n, jitter, master)?;
    output::write_monte_carlo(out, &mc)?;
    let mut text = output::to_json_rounded(&mc.stats, true)?;
    text.push('\n');
    Ok(text)
}

fn cmd_size_cap(e_load_j: f64, eff: f64, v_on: f64, v_off: f64) -> Result<String> {
    let c = required_capacitance(e_load_j, eff, v_on, v_off)?;
    let window = usable_energy(1.0, v_on, v_off)?;
    Ok(format!(
        "usable energy per farad: {} J/F\nenergy drawn from capacitor: {} J\nrequired capacitance: {} F\n",
        output::fmt_f64(window),
        output::fmt_f64(e_load_j / eff),
        output::fmt_f64(c)
    ))
}

pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Run { scenario, seed, out } => cmd_run(scenario, *seed, out),
        Command::Sweep {
            scenario,
            param,
            values,
            out,
        } => cmd_sweep(scenario, param, values, out),
        Command::MonteCarlo {
            scenario,
            n,
            master_seed,
            jitter,
            v_jitter,
            out,
        } => cmd_montecarlo(scenario, *n, *master_seed, *jitter, *v_jitter, out),
        Command::SizeCap {
            e_load_j,
            eff,
            v_on,
            v_off,
        } => cmd_size_cap(*e_load_j, *eff, *v_on, *v_off),
    }
}

/// Parse arguments, run, print, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
