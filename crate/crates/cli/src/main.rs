use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Args, Parser, Subcommand};

use indi_core::config::{self, ConfigKind};
use indi_core::identification::report::{fit_plots, identify, Fitted};
use indi_core::identification::IdentConfig;
use indi_core::log::{read_log, write_log, LogRecord};
use indi_core::plot::standard_plots;
use indi_core::presets::{self, Preset};
use indi_core::scenario::{run, summarize};

#[derive(Parser)]
#[command(
    name = "indi-sim",
    version,
    about = "Closed-loop INDI simulation and identification for a dual-motor, dual-flap tailsitter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate scenarios; writes log.csv, summary.json and plots per scenario.
    Run(RunArgs),
    /// Fit effectiveness, sideslip and flap-lift models to a log.
    Identify(IdentifyArgs),
    /// Render the standard plots of an existing log.
    Plot(PlotArgs),
    /// Parse and check config files without simulating.
    ValidateConfig {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Write a preset as scenario, vehicle and plant config files.
    ExportPreset {
        name: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// List the built-in presets.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config files.
    scenarios: Vec<PathBuf>,
    /// Built-in preset to run; repeatable.
    #[arg(long = "preset", value_name = "NAME")]
    presets: Vec<String>,
    /// Overrides every scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides every scenario's duration, seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Parent of the per-scenario output directories.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scenarios simulated in parallel.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: u32,
    /// Skip the SVG plots.
    #[arg(long)]
    no_plots: bool,
}

#[derive(Args)]
struct IdentifyArgs {
    log: PathBuf,
    #[arg(long, default_value = "ident")]
    out: PathBuf,
    /// Segment length, seconds.
    #[arg(long)]
    window: Option<f64>,
    /// Leading fraction of samples used for fitting.
    #[arg(long)]
    train_fraction: Option<f64>,
}

#[derive(Args)]
struct PlotArgs {
    log: PathBuf,
    #[arg(long, default_value = "plots")]
    out: PathBuf,
}

enum Failure {
    /// Bad configuration, arguments or input files.
    Config(String),
    /// A simulation hit a non-finite state.
    Fault,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Fault => 2,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn load_log(path: &Path) -> Result<Vec<LogRecord>, Failure> {
    let f = File::open(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let records =
        read_log(BufReader::new(f)).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    if records.is_empty() {
        return Err(config_err(format!("{}: log has no rows", path.display())));
    }
    Ok(records)
}

struct Job {
    preset: Preset,
    dir: PathBuf,
}

/// Every config is loaded and checked here, before anything runs.
fn plan_jobs(args: &RunArgs) -> Result<Vec<Job>, Failure> {
    if args.scenarios.is_empty() && args.presets.is_empty() {
        return Err(config_err(
            "nothing to run: give scenario files or --preset",
        ));
    }
    if let Some(d) = args.duration {
        if !(d.is_finite() && d > 0.0) {
            return Err(config_err(format!("--duration must be positive, got {d}")));
        }
    }
    let mut jobs = Vec::new();
    for path in &args.scenarios {
        let r = config::load_scenario(path).map_err(config_err)?;
        let base = args
            .out
            .clone()
            .or(r.output_dir)
            .unwrap_or_else(|| "out".into());
        jobs.push((r.preset, base));
    }
    for name in &args.presets {
        let p = presets::preset(name).ok_or_else(|| {
            config_err(format!(
                "unknown preset `{name}`; known: {}",
                presets::NAMES.join(", ")
            ))
        })?;
        jobs.push((p, args.out.clone().unwrap_or_else(|| "out".into())));
    }
    let mut out: Vec<Job> = Vec::new();
    for (mut preset, base) in jobs {
        if let Some(s) = args.seed {
            preset.scenario.seed = s;
        }
        if let Some(d) = args.duration {
            preset.scenario.duration = d;
        }
        let dir = base.join(&preset.scenario.name);
        if out.iter().any(|j| j.dir == dir) {
            return Err(config_err(format!(
                "two scenarios would write to {}",
                dir.display()
            )));
        }
        out.push(Job { preset, dir });
    }
    Ok(out)
}

/// One finished scenario: the line to print and how it ended.
struct JobReport {
    line: String,
    result: Result<(), Failure>,
}

fn write_outputs(job: &Job, plots: bool) -> Result<JobReport, Failure> {
    let name = &job.preset.scenario.name;
    let out = run(&job.preset.scenario, &job.preset.vehicle, &job.preset.plant);
    create_dir(&job.dir)?;
    let log_path = job.dir.join("log.csv");
    let file =
        File::create(&log_path).map_err(|e| config_err(format!("{}: {e}", log_path.display())))?;
    write_log(BufWriter::new(file), &out.records)
        .map_err(|e| config_err(format!("{}: {e}", log_path.display())))?;
    let summary = summarize(&out.records);
    write_file(
        &job.dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary).unwrap(),
    )?;
    if plots && !out.records.is_empty() {
        for (file, svg) in standard_plots(&out.records) {
            write_file(&job.dir.join(file), &svg)?;
        }
    }
    let Some(f) = out.fault else {
        return Ok(JobReport {
            line: format!(
                "{name}: ok, {:.1} s -> {}",
                summary.duration,
                job.dir.display()
            ),
            result: Ok(()),
        });
    };
    let dump = job.dir.join("fault.json");
    write_file(&dump, &serde_json::to_string_pretty(&f).unwrap())?;
    Ok(JobReport {
        line: format!(
            "{name}: numerical fault at t = {:.3} s ({}); state in {}",
            f.t,
            f.what,
            dump.display()
        ),
        result: Err(Failure::Fault),
    })
}

fn run_job(job: &Job, plots: bool) -> JobReport {
    write_outputs(job, plots).unwrap_or_else(|f| JobReport {
        line: match &f {
            Failure::Config(m) => format!("{}: {m}", job.preset.scenario.name),
            Failure::Fault => unreachable!("faults are reported, not raised"),
        },
        result: Err(f),
    })
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let jobs = plan_jobs(args)?;
    let next = AtomicUsize::new(0);
    let workers = (args.jobs as usize).min(jobs.len());
    let mut reports: Vec<(usize, JobReport)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let k = next.fetch_add(1, Ordering::Relaxed);
                        let Some(job) = jobs.get(k) else { break };
                        done.push((k, run_job(job, !args.no_plots)));
                    }
                    done
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    reports.sort_by_key(|(k, _)| *k);
    let mut worst: Option<Failure> = None;
    for (_, r) in reports {
        match &r.result {
            Ok(()) => println!("{}", r.line),
            Err(_) => eprintln!("{}", r.line),
        }
        if let Err(f) = r.result {
            // a fault outranks an output error
            if worst.as_ref().is_none_or(|w| f.code() > w.code()) {
                worst = Some(f);
            }
        }
    }
    match worst {
        None => Ok(()),
        Some(Failure::Fault) => Err(Failure::Fault),
        Some(Failure::Config(_)) => Err(Failure::Config(String::new())),
    }
}

fn cmd_identify(args: &IdentifyArgs) -> Result<(), Failure> {
    let mut cfg = IdentConfig::default();
    if let Some(w) = args.window {
        if !(w.is_finite() && w > 0.0) {
            return Err(config_err(format!("--window must be positive, got {w}")));
        }
        cfg.window = w;
    }
    if let Some(f) = args.train_fraction {
        if !(f > 0.0 && f <= 1.0) {
            return Err(config_err(format!(
                "--train-fraction must be in (0, 1], got {f}"
            )));
        }
        cfg.train_fraction = f;
    }
    let records = load_log(&args.log)?;
    let report = identify(&records, &cfg);
    create_dir(&args.out)?;
    write_file(
        &args.out.join("report.json"),
        &serde_json::to_string_pretty(&report).unwrap(),
    )?;
    for (file, svg) in fit_plots(&records, &report) {
        write_file(&args.out.join(file), &svg)?;
    }
    let status = |f: Option<&str>| f.map_or("fitted".to_string(), |r| format!("not fitted ({r})"));
    let reason = |f: &Fitted<_>| match f {
        Fitted::Failed(r) => Some(r.clone()),
        Fitted::Ok(_) => None,
    };
    println!(
        "pitch effectiveness: {}",
        status(reason(&report.pitch_effectiveness).as_deref())
    );
    println!(
        "yaw effectiveness: {}",
        status(reason(&report.yaw_effectiveness).as_deref())
    );
    match &report.sideslip {
        Fitted::Ok(r) => println!(
            "sideslip: fitted, c2 = {:.4}, b2 = {:.4}",
            r.affine.coefficients[0], r.affine.coefficients[1]
        ),
        Fitted::Failed(r) => println!("sideslip: not fitted ({r})"),
    }
    match &report.flap_lift {
        Fitted::Ok(f) => println!("flap lift: fitted, G_flap = {:.4e}", f.g_flap),
        Fitted::Failed(r) => println!("flap lift: not fitted ({r})"),
    }
    println!("report -> {}", args.out.join("report.json").display());
    if report.any_ok() {
        Ok(())
    } else {
        Err(config_err("no model could be fitted to this log"))
    }
}

fn cmd_plot(args: &PlotArgs) -> Result<(), Failure> {
    let records = load_log(&args.log)?;
    create_dir(&args.out)?;
    for (file, svg) in standard_plots(&records) {
        write_file(&args.out.join(file), &svg)?;
        println!("{}", args.out.join(file).display());
    }
    Ok(())
}

fn cmd_validate(files: &[PathBuf]) -> Result<(), Failure> {
    let mut bad = 0;
    for f in files {
        match config::validate_file(f) {
            Ok(kind) => {
                let kind = match kind {
                    ConfigKind::Scenario => "scenario",
                    ConfigKind::Vehicle => "vehicle",
                    ConfigKind::Plant => "plant",
                };
                println!("{}: ok ({kind})", f.display());
            }
            Err(e) => {
                eprintln!("{e}");
                bad += 1;
            }
        }
    }
    if bad == 0 {
        Ok(())
    } else {
        Err(Failure::Config(String::new()))
    }
}

fn cmd_export(name: &str, out: &Path) -> Result<(), Failure> {
    let p = presets::preset(name).ok_or_else(|| {
        config_err(format!(
            "unknown preset `{name}`; known: {}",
            presets::NAMES.join(", ")
        ))
    })?;
    create_dir(out)?;
    let (v, pl, s) = ("vehicle.toml", "plant.toml", format!("{name}.toml"));
    write_file(&out.join(v), &config::vehicle_to_toml(&p.vehicle))?;
    write_file(&out.join(pl), &config::plant_to_toml(&p.plant))?;
    write_file(
        &out.join(&s),
        &config::scenario_to_toml(&p.scenario, Some(Path::new(v)), Some(Path::new(pl))),
    )?;
    println!("{}", out.join(s).display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Identify(a) => cmd_identify(a),
        Command::Plot(a) => cmd_plot(a),
        Command::ValidateConfig { files } => cmd_validate(files),
        Command::ExportPreset { name, out } => cmd_export(name, out),
        Command::Presets => {
            for n in presets::NAMES {
                println!("{n}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if let Failure::Config(m) = &f {
                if !m.is_empty() {
                    eprintln!("error: {m}");
                }
            }
            ExitCode::from(f.code())
        }
    }
}
