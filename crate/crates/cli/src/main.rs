use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use manhattan_layout::pipeline::{
    bundled_scenario, export_map, run_on, simulate, MapFormat, MapModel, Mode, Overrides, Recording, RunOutput,
    ScenarioConfig, Stage, BUNDLED_SCENARIOS,
};

/// Manhattan-world layout reconstruction from simulated or recorded depth sequences.
#[derive(Parser, Debug)]
#[command(name = "mlayout", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate sensor data: a depth recording in depth mode, observations in range mode.
    Simulate(Common),
    /// Run the front-end and optimizer and write every output file.
    Solve(SolveArgs),
    /// Run and print the evaluation tables.
    Evaluate(SolveArgs),
    /// Render a map as SVG, from a saved `map.json` or from a fresh run.
    Plot(PlotArgs),
    /// Solve, write all outputs and print the evaluation.
    All(SolveArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(long, default_value = "corridor_loop")]
    config: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long = "max-gap")]
    max_gap: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// Last optimization stage to run.
    #[arg(long, default_value = "convex")]
    stage: Stage,
    /// Depth recording (frames/*.depth + odometry.csv) to use instead of simulated frames.
    #[arg(long)]
    recording: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[command(flatten)]
    solve: SolveArgs,
    /// Saved map to render instead of running the pipeline.
    #[arg(long)]
    map: Option<PathBuf>,
}

fn load_config(c: &Common) -> Result<ScenarioConfig> {
    let path = Path::new(&c.config);
    let mut cfg = if path.exists() {
        ScenarioConfig::from_path(path)?
    } else if BUNDLED_SCENARIOS.iter().any(|(n, _)| *n == c.config) {
        bundled_scenario(&c.config)?
    } else {
        let names: Vec<&str> = BUNDLED_SCENARIOS.iter().map(|(n, _)| *n).collect();
        bail!(
            "no scenario file {:?} and no bundled scenario of that name (bundled: {})",
            c.config,
            names.join(", ")
        );
    };
    Overrides {
        seed: c.seed,
        epsilon: c.epsilon,
        mu: c.mu,
        max_gap: c.max_gap,
    }
    .apply(&mut cfg)?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(args: &SolveArgs) -> Result<RunOutput> {
    let cfg = load_config(&args.common)?;
    let mut sim = simulate(&cfg)?;
    if let Some(dir) = &args.recording {
        if cfg.mode != Mode::Depth {
            bail!("--recording needs a depth-mode scenario (mode = \"depth\")");
        }
        sim = sim.with_recording(Recording::read(dir)?);
    }
    Ok(run_on(&cfg, args.stage, sim)?)
}

fn simulate_cmd(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let sim = simulate(&cfg)?;
    std::fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    write(&c.out.join("scenario.json"), &cfg.to_json())?;
    let truth = serde_json::json!({ "world": sim.world, "trajectory": sim.truth });
    write(&c.out.join("truth.json"), &serde_json::to_string_pretty(&truth)?)?;
    match cfg.mode {
        Mode::Depth => {
            sim.recording().write(&c.out)?;
            println!(
                "wrote {} depth frames and odometry to {}",
                sim.frames.len(),
                c.out.display()
            );
        }
        Mode::Range => {
            let data = serde_json::json!({ "observations": sim.observations, "odometry": sim.odometry });
            write(&c.out.join("observations.json"), &serde_json::to_string_pretty(&data)?)?;
            println!(
                "wrote {} range observations to {}",
                sim.observations.len(),
                c.out.display()
            );
        }
    }
    Ok(())
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn opt_m(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

fn print_evaluation(out: &RunOutput) {
    let r = &out.report;
    println!("scenario {} (seed {}, stage {})", r.scenario, r.seed, r.stage);
    println!(
        "frames {}  path {:.2} m  observations {}",
        r.frames, r.path_length, r.observations
    );
    println!();
    println!("drift (m)   raw odometry  compass  least squares  convex");
    println!(
        "            {:>12}  {:>7}  {:>13}  {:>6}",
        opt_m(r.drift.raw_odometry),
        opt_m(r.drift.compass_aligned),
        opt_m(r.drift.least_squares),
        opt_m(r.drift.convex)
    );
    println!();
    println!(
        "segments {} -> structures {}  reduction {}%  (true planes seen {})",
        r.initial_segments,
        opt(r.final_structures),
        r.complexity_reduction.map_or_else(|| "-".into(), |v| format!("{v:.1}")),
        r.true_planes_observed
    );
    println!(
        "hypotheses {} accepted of {}  converged {}  impure structures {}",
        opt(r.hypotheses_accepted),
        opt(r.hypotheses_considered),
        opt(r.convex_converged),
        opt(r.impure_structures)
    );
    if let Some(table) = &r.surface_distances {
        println!();
        println!(
            "{:<40} {:>4} {:>9} {:>9} {:>8}",
            "surface pair", "axis", "truth", "model", "error %"
        );
        for row in &table.rows {
            println!(
                "{:<40} {:>4} {:>9.3} {:>9.3} {:>8.2}",
                row.label,
                row.axis.name(),
                row.ground_truth,
                row.model,
                100.0 * row.error / row.ground_truth
            );
        }
        println!("mean relative error {:.2}%", 100.0 * table.mean_relative_error);
    }
    println!("optimization {:.3} s", out.timing.total());
    for w in &r.warnings {
        println!("warning: {w}");
    }
}

fn plot_cmd(args: &PlotArgs) -> Result<()> {
    let out_dir = &args.solve.common.out;
    let map = match &args.map {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            MapModel::from_json(&text)?
        }
        None => run(&args.solve)?.map(),
    };
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let path = out_dir.join("map.svg");
    write(&path, &export_map(&map, MapFormat::Svg))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MLAYOUT_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => simulate_cmd(c),
        Command::Solve(a) => run(a).and_then(|out| {
            out.write_outputs(&a.common.out)?;
            println!("wrote outputs to {}", a.common.out.display());
            Ok(())
        }),
        Command::Evaluate(a) => run(a).and_then(|out| {
            std::fs::create_dir_all(&a.common.out)?;
            write(&a.common.out.join("report.json"), &out.report_json())?;
            print_evaluation(&out);
            Ok(())
        }),
        Command::Plot(a) => plot_cmd(a),
        Command::All(a) => run(a).and_then(|out| {
            out.write_outputs(&a.common.out)?;
            print_evaluation(&out);
            println!("wrote outputs to {}", a.common.out.display());
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
