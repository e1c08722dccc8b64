use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use elmap_core::eval::MetricReport;
use elmap_core::odometry::OdometryMode;
use elmap_core::scenario::{compare_reports, run_scenario, ScenarioConfig};
use elmap_core::scene::build_scene;

#[derive(Parser)]
#[command(name = "elmap", version, about = "Elevation-mapping scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write metrics.csv / metrics.json.
    Run(RunArgs),
    /// Tabulate metrics.json files against the first one.
    Compare {
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
    },
    /// Write the scene heightfield as CSV.
    ExportScene {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML scenario file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    no_rear_camera: bool,
    #[arg(long, value_parser = ["gt", "ekf-vio", "ekf-novio"])]
    odometry: Option<String>,
    /// Dump map_*.csv and cloud_*.xyz every this many simulated seconds.
    #[arg(long, value_name = "SECONDS")]
    snapshot_every: Option<f64>,
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => Ok(ScenarioConfig::load(p)?),
        None => Ok(ScenarioConfig::default()),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.no_rear_camera {
        cfg.cameras.use_rear = false;
    }
    if let Some(mode) = &args.odometry {
        cfg.odometry.mode = mode.parse::<OdometryMode>().map_err(anyhow::Error::msg)?;
    }
    if let Some(s) = args.snapshot_every {
        cfg.snapshot_every = Some(s);
    }
    let out = run_scenario(&cfg, Some(&args.out))?;
    for r in &out.reports {
        println!("{:<28} {:<22} {:>14} {}", r.metric, r.tag, elmap_core::eval::format_value(r.mean), r.unit);
    }
    eprintln!("wrote {}", args.out.join("metrics.csv").display());
    Ok(())
}

fn compare(paths: &[PathBuf]) -> Result<()> {
    let mut inputs = Vec::new();
    for p in paths {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let reports: Vec<MetricReport> =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        if reports.is_empty() {
            bail!("{} holds no metrics", p.display());
        }
        inputs.push((label_for(p), reports));
    }
    print!("{}", compare_reports(&inputs).render());
    Ok(())
}

/// Parent directory name, which is the run's --out.
fn label_for(p: &Path) -> String {
    p.parent()
        .and_then(|d| d.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

fn export_scene(config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let hf = build_scene(&cfg.scene, cfg.scene_resolution)?;
    fs::create_dir_all(out)?;
    let path = out.join("scene.csv");
    let mut w = BufWriter::new(File::create(&path)?);
    hf.write_csv(&mut w)?;
    w.flush()?;
    eprintln!("wrote {} ({} x {} cells)", path.display(), hf.cells_x(), hf.cells_y());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Compare { reports } => compare(&reports),
        Command::ExportScene { config, out } => export_scene(config.as_deref(), &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
