use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use decoupled_odometry::geometry::Vec3;
use decoupled_odometry::ingest::{read_poses, write_poses};
use decoupled_odometry::pipeline::{diagnostics_csv, evaluate_kitti, run_sequence, write_synthetic, Config, SequenceResult};
use decoupled_odometry::synth::{circle_trajectory, parse_scene, straight_trajectory, SyntheticScene};
use decoupled_odometry::Error;

#[derive(Parser)]
#[command(name = "decoupled-odometry", version, about = "LiDAR odometry with decoupled rotation and translation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the trajectory of a scan directory and write KITTI poses.
    Odometry {
        #[command(flatten)]
        run: RunArgs,
        /// Pose file to write.
        #[arg(long)]
        out: PathBuf,
        /// Also write per-frame diagnostics CSV here.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        /// Also write the pose-graph edges here.
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Compare an estimated pose file with ground truth.
    Eval { gt: PathBuf, est: PathBuf },
    /// Render a synthetic scan sequence with ground-truth poses.
    Synth {
        /// Scene description (`key = value` lines); default scene if absent.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Route::Circle)]
        trajectory: Route,
        /// Circle radius, metres.
        #[arg(long, default_value_t = 20.0)]
        radius: f64,
        /// Distance between frames, metres.
        #[arg(long, default_value_t = 2.0)]
        step: f64,
    },
    /// Run odometry and write only the per-frame diagnostics CSV.
    Inspect {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        csv: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Directory of NNNNNN.bin scans.
    #[arg(long)]
    scans: PathBuf,
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Route {
    Circle,
    Straight,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

fn load_config(run: &RunArgs) -> Result<Config, Failure> {
    let mut cfg = match &run.config {
        Some(p) => Config::load(p).map_err(|e| Failure::Usage(e.to_string()))?,
        None => Config::default(),
    };
    for pair in &run.set {
        cfg.set_pair(pair).map_err(|e| Failure::Usage(e.to_string()))?;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn run(run: &RunArgs) -> Result<SequenceResult, Failure> {
    let cfg = load_config(run)?;
    let res = run_sequence(&run.scans, &cfg)?;
    let fallbacks = res.frames.iter().filter(|f| f.fallback).count();
    eprintln!(
        "{} frames, {} rotation fallbacks, {} skip edges",
        res.trajectory.len(),
        fallbacks,
        res.skip_edges
    );
    if let Some(rep) = &res.optimization {
        eprintln!("graph cost {:.6e} -> {:.6e} in {} iterations", rep.initial_cost, rep.final_cost, rep.iterations);
    }
    if let Some(e) = &res.optimization_error {
        eprintln!("warning: {e}; keeping unoptimized poses");
    }
    Ok(res)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Data(Error::Io {
        path: path.to_path_buf(),
        source: e,
    }))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Odometry { run: args, out, diagnostics, graph } => {
            let res = run(&args)?;
            write_poses(&res.trajectory, &out)?;
            if let Some(p) = diagnostics {
                write_text(&p, &diagnostics_csv(&res.frames))?;
            }
            if let Some(p) = graph {
                write_text(&p, &res.graph.dump())?;
            }
        }
        Command::Eval { gt, est } => {
            let e = evaluate_kitti(&read_poses(&gt)?, &read_poses(&est)?)?;
            println!("{:.4}% / {:.6} deg/m", e.translation_pct, e.rotation_deg_per_m);
        }
        Command::Synth { scene, frames, out, trajectory, radius, step } => {
            if frames == 0 || !(step > 0.0) || !(radius > 0.0) {
                return Err(Failure::Usage("--frames, --step and --radius must be positive".into()));
            }
            let scene = match scene {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(|e| Failure::Data(Error::Io { path: p.clone(), source: e }))?;
                    parse_scene(&text)?
                }
                None => SyntheticScene::default(),
            };
            let poses = match trajectory {
                Route::Circle => circle_trajectory(radius, step, frames, scene.sensor_height),
                Route::Straight => straight_trajectory(Vec3::new(-20.0, 10.0, scene.sensor_height), step, frames),
            };
            write_synthetic(&scene, &poses, &out)?;
            eprintln!(
                "wrote {frames} scans to {}; pass --config {} to match the sensor",
                out.display(),
                out.join("odometry.cfg").display()
            );
        }
        Command::Inspect { run: args, csv } => {
            let res = run(&args)?;
            write_text(&csv, &diagnostics_csv(&res.frames))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
