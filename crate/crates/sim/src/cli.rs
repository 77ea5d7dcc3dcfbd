//! Command-line interface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use scbf_core::sim::{self, Summary, SAFETY_TOLERANCE};
use scbf_core::ScenarioConfig;

use crate::feasibility::{format_report, parse_gamma_list, parse_limits};
use crate::scenario::{parse_scenario, read_text};
use crate::sweep;
use crate::trace::write_trace;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ABORT: i32 = 2;
pub const EXIT_UNSAFE: i32 = 3;

pub const OUT_DIR_ENV: &str = "SCBF_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "scbf", version, about = "Synergistic CBF safety filter simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write trace.csv and summary.json.
    Simulate(SimulateArgs),
    /// Print the feasibility margin for a limits file.
    Feasibility(FeasibilityArgs),
    /// Parse and validate a scenario without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run variants of a scenario with one parameter changed, in parallel.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    pub out: PathBuf,
    /// Write every N-th record only.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub every: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Override the step size, s.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Override the run length, s.
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FeasibilityArgs {
    #[arg(long)]
    pub limits: PathBuf,
    /// Override the file's γ.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Maximize jointly over γ: a list `a,b,c` or a range `lo:hi:n`.
    #[arg(long = "sweep-gamma", conflicts_with = "gamma")]
    pub sweep_gamma: Option<String>,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Dotted path into the scenario file, e.g. `scbf.vartheta` or
    /// `obstacles[0].d_min`.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values.
    #[arg(long)]
    pub values: String,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Worker threads; all cores by default.
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Feasibility(a) => feasibility(a),
        Command::Validate { scenario } => validate(&scenario),
        Command::Sweep(a) => run_sweep(a),
    }
}

fn usage_error(msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    EXIT_USAGE
}

fn load(path: &Path) -> Result<ScenarioConfig, i32> {
    parse_scenario(path).map_err(|e| usage_error(format!("{}: {e}", path.display())))
}

fn print_summary(s: &Summary) {
    println!("steps            {}", s.steps);
    println!("min d/d_min      {:.6}", s.min_distance_ratio);
    if let Some(worst) = s.margins.iter().min_by(|a, b| a.ratio().total_cmp(&b.ratio())) {
        println!(
            "closest pair     {} at t = {:.2} s: {:.4} m (d_min {} m)",
            worst.pair, worst.t_at_min, worst.min_distance, worst.d_min
        );
    }
    println!("max |y_b|        {:.4} m", s.max_abs_y_b);
    println!("final formation  {:.4} m", s.final_formation_error);
    println!("jumps            {}", s.jump_counts.iter().sum::<usize>());
    println!("max jumps / 10 s {}", s.max_jumps_in_window);
    println!("max |r|          {:.6} rad/s", s.max_abs_r);
    println!("u range          [{:.6}, {:.6}] m/s", s.u_min, s.u_max);
    println!("relaxed steps    {}", s.relaxed_steps);
    if let Some(r) = s.max_formation_ratio_in_encounter {
        println!("max d_f/d_f,d    {r:.4} (during encounters)");
    }
}

fn simulate(a: SimulateArgs) -> i32 {
    let mut config = match load(&a.scenario) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some(dt) = a.dt {
        config.dt = dt;
    }
    if let Some(t_end) = a.t_end {
        config.t_end = t_end;
    }
    if let Err(e) = config.validate() {
        return usage_error(e);
    }
    log::info!("running {} for {} steps", config.name, config.steps());
    let trace = match sim::run(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("simulation aborted: {e}");
            return EXIT_ABORT;
        }
    };
    let summary = sim::metrics(&trace);
    if let Err(e) = write_trace(&trace, &summary, &config, &a.output.out, a.output.every as usize, SAFETY_TOLERANCE) {
        eprintln!("cannot write output: {e}");
        return EXIT_ABORT;
    }
    println!("scenario         {}", config.name);
    print_summary(&summary);
    println!("output           {}", a.output.out.display());
    if summary.is_safe(SAFETY_TOLERANCE) {
        EXIT_OK
    } else {
        eprintln!("safety violation: a pair came closer than {} of its d_min", 1.0 - SAFETY_TOLERANCE);
        EXIT_UNSAFE
    }
}

fn validate(path: &Path) -> i32 {
    match load(path) {
        Ok(c) => {
            println!(
                "ok: {} ({} agents, {} obstacles, {:?} mode, {} steps of {} s)",
                c.name,
                c.agents.len(),
                c.obstacles.len(),
                c.mode,
                c.steps(),
                c.dt
            );
            EXIT_OK
        }
        Err(code) => code,
    }
}

fn feasibility(a: FeasibilityArgs) -> i32 {
    let spec = match parse_limits(&a.limits) {
        Ok(s) => s,
        Err(e) => return usage_error(format!("{}: {e}", a.limits.display())),
    };
    let report = match &a.sweep_gamma {
        Some(list) => {
            let gammas = match parse_gamma_list(list) {
                Ok(g) => g,
                Err(e) => return usage_error(format!("--sweep-gamma: {e}")),
            };
            if !a.json {
                for &g in &gammas {
                    let r = spec.report(g);
                    println!("gamma {g:<10.6} margin {:>12.6} at vartheta {:.6}", r.margin, r.argmax_vartheta);
                }
            }
            spec.sweep(&gammas).expect("at least one gamma")
        }
        None => {
            let gamma = a.gamma.unwrap_or(spec.gamma);
            if !(gamma > 0.0 && gamma.is_finite()) {
                return usage_error("--gamma must be positive");
            }
            spec.report(gamma)
        }
    };
    if a.json {
        let p = report.params;
        let v = serde_json::json!({
            "beta1": p.beta1,
            "beta2": p.beta2,
            "beta3": p.beta3,
            "gamma": p.gamma,
            "u_omax": p.u_omax,
            "a_omax": p.a_omax,
            "margin": report.margin,
            "argmax_vartheta": report.argmax_vartheta,
            "certified": report.certified(),
        });
        println!("{}", serde_json::to_string_pretty(&v).expect("plain JSON values serialize"));
    } else {
        print!("{}", format_report(&report));
    }
    EXIT_OK
}

fn dir_name(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._=-+".contains(c) { c } else { '_' })
        .collect()
}

fn run_sweep(a: SweepArgs) -> i32 {
    let base: serde_json::Value = match read_text(&a.scenario)
        .map_err(|e| e.to_string())
        .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
    {
        Ok(v) => v,
        Err(e) => return usage_error(format!("{}: {e}", a.scenario.display())),
    };
    let values = sweep::parse_values(&a.values);
    if values.is_empty() {
        return usage_error("--values is empty");
    }
    let configs = match sweep::variants(&base, &a.param, &values) {
        Ok(c) => c,
        Err(e) => return usage_error(e),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(a.jobs.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => return usage_error(e),
    };
    let runs = pool.install(|| sweep::run_all(configs));
    let mut code = EXIT_OK;
    println!("{:<40} {:>10} {:>10} {:>6} {:>8}  status", "run", "min d/dmin", "max |y_b|", "jumps", "relaxed");
    for run in &runs {
        let name = &run.config.name;
        match &run.result {
            Ok((trace, summary)) => {
                let dir = a.output.out.join(dir_name(name));
                if let Err(e) = write_trace(trace, summary, &run.config, &dir, a.output.every as usize, SAFETY_TOLERANCE) {
                    eprintln!("cannot write output: {e}");
                    code = EXIT_ABORT;
                    continue;
                }
                let safe = summary.is_safe(SAFETY_TOLERANCE);
                if !safe && code == EXIT_OK {
                    code = EXIT_UNSAFE;
                }
                println!(
                    "{:<40} {:>10.4} {:>10.3} {:>6} {:>8}  {}",
                    name,
                    summary.min_distance_ratio,
                    summary.max_abs_y_b,
                    summary.jump_counts.iter().sum::<usize>(),
                    summary.relaxed_steps,
                    if safe { "safe" } else { "UNSAFE" }
                );
            }
            Err(e) => {
                println!("{name:<40} aborted: {e}");
                code = EXIT_ABORT;
            }
        }
    }
    code
}
