//! Command-line front end: `synth`, `run` and `eval`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::cloud::{frame_file_name, read_lidar_cloud, read_manifest, read_radar_cloud, CloudKind, RadarCloud};
use crate::config::{PipelineConfig, PipelineMode};
use crate::error::{Error, Result};
use crate::eval::{detection_recall, evaluate, false_positive_rate, read_tum, write_tum, EvalOptions, MetricReport, Trajectory};
use crate::odometry::Odometry;
use crate::select::{select, select_lidar_only, SelectionResult};
use crate::synth::{generate, read_smoke_flags, write_scene, SceneConfig};

#[derive(Debug, Parser)]
#[command(name = "degenfuse", version, about = "LiDAR-radar fusion odometry front-end")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic sequence with ground truth.
    Synth { config: PathBuf, out: PathBuf },
    /// Run selection and odometry over a sequence directory.
    Run { data: PathBuf, config: PathBuf, out: PathBuf },
    /// Score an estimated trajectory against ground truth.
    Eval {
        est: PathBuf,
        gt: PathBuf,
        /// `degeneracy.csv` from `run`, for detection recall.
        #[arg(long, requires = "smoke")]
        flags: Option<PathBuf>,
        /// `smoke_frames.csv` from `synth`.
        #[arg(long, requires = "flags")]
        smoke: Option<PathBuf>,
        /// Evaluation settings from a pipeline config's `[evaluation]` group.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        max_dt: Option<f64>,
        #[arg(long)]
        rpe_delta: Option<usize>,
        /// Skip the rigid alignment before APE.
        #[arg(long)]
        no_align: bool,
        /// Where to write the metrics; defaults to `metrics.json` next to `est`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// What `run` produced, for callers that want more than the files.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub selections: Vec<SelectionResult>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn cmd_synth(config: &Path, out: &Path) -> Result<()> {
    let cfg = SceneConfig::load(config)?;
    let scene = generate(&cfg)?;
    write_scene(out, &scene)?;
    log::info!("wrote {} frames to {}", scene.frames.len(), out.display());
    Ok(())
}

/// Processes every frame listed in `data/frames.csv`. A missing LiDAR file
/// marks a deleted scan; a missing radar file counts as an empty radar frame.
pub fn run_pipeline(data: &Path, cfg: &PipelineConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let manifest = read_manifest(data)?;
    if manifest.is_empty() {
        return Err(Error::InsufficientData(format!("{} lists no frames", data.join("frames.csv").display())));
    }
    let mut odom = Odometry::new(cfg.odometry.clone())?;
    let mut selections = Vec::with_capacity(manifest.len());
    let mut poses = Vec::with_capacity(manifest.len());
    for entry in &manifest {
        let lidar_path = data.join(frame_file_name(entry.index, CloudKind::Lidar));
        let radar_path = data.join(frame_file_name(entry.index, CloudKind::Radar));
        let lidar = if lidar_path.exists() { Some(read_lidar_cloud(&lidar_path)?) } else { None };
        let radar = if radar_path.exists() {
            read_radar_cloud(&radar_path)?
        } else {
            log::warn!("frame {}: no radar file", entry.index);
            RadarCloud::empty(entry.timestamp, "radar")
        };
        let mut sel = match cfg.mode {
            PipelineMode::Fusion => select(lidar.as_ref(), &radar, &cfg.front_end)?,
            PipelineMode::LidarOnly => select_lidar_only(lidar.as_ref(), entry.timestamp),
        };
        sel.timestamp = entry.timestamp;
        let (pose, status) = odom.process(&sel);
        log::debug!(
            "frame {}: {} ratio={:.3} removed={} {:?}",
            entry.index,
            sel.source,
            sel.degeneracy.ratio,
            sel.n_removed(),
            status
        );
        poses.push(pose);
        selections.push(sel);
    }
    if selections.iter().all(|s| s.source == crate::select::Source::Skip) {
        return Err(Error::InsufficientData("every frame was skipped; no trajectory".into()));
    }
    Ok(RunOutput {
        trajectory: Trajectory::new(poses)?,
        selections,
    })
}

fn selection_csv(indices: &[usize], sels: &[SelectionResult]) -> String {
    let mut s = String::from("frame,source,ratio,n_removed,ego_vx,ego_vy,ego_vz\n");
    for (i, sel) in indices.iter().zip(sels) {
        let (vx, vy, vz) = match &sel.ego {
            Some(e) if e.converged => (e.velocity.x.to_string(), e.velocity.y.to_string(), e.velocity.z.to_string()),
            _ => (String::new(), String::new(), String::new()),
        };
        let _ = writeln!(s, "{i},{},{},{},{vx},{vy},{vz}", sel.source, sel.degeneracy.ratio, sel.n_removed());
    }
    s
}

fn degeneracy_csv(indices: &[usize], sels: &[SelectionResult]) -> String {
    let mut s = String::from("frame,n_matched,n_radar_static,ratio,use_lidar\n");
    for (i, sel) in indices.iter().zip(sels) {
        let d = &sel.degeneracy;
        let _ = writeln!(s, "{i},{},{},{},{}", d.n_matched, d.n_radar_static, d.ratio, u8::from(d.use_lidar));
    }
    s
}

pub fn cmd_run(data: &Path, config: &Path, out: &Path) -> Result<RunOutput> {
    let cfg = PipelineConfig::load(config)?;
    let result = run_pipeline(data, &cfg)?;
    create_dir(out)?;
    let indices: Vec<usize> = read_manifest(data)?.iter().map(|e| e.index).collect();
    write_tum(&out.join("est.tum"), &result.trajectory)?;
    write_text(&out.join("selection.csv"), &selection_csv(&indices, &result.selections))?;
    write_text(&out.join("degeneracy.csv"), &degeneracy_csv(&indices, &result.selections))?;
    write_text(&out.join("config.ini"), &cfg.to_ini())?;
    if cfg.dump_removed {
        for (i, sel) in indices.iter().zip(&result.selections) {
            if let Some(r) = &sel.removal {
                let mut s = String::from("id\n");
                for id in &r.dynamic_lidar_ids {
                    let _ = writeln!(s, "{id}");
                }
                write_text(&out.join(format!("removed_{i:06}.csv")), &s)?;
            }
        }
    }
    Ok(result)
}

/// Reads the `use_lidar` column of a `degeneracy.csv`.
pub fn read_use_lidar_flags(path: &Path) -> Result<Vec<bool>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let col = header.iter().position(|h| *h == "use_lidar").ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: "no 'use_lidar' column".into(),
    })?;
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| match l.split(',').nth(col).map(str::trim) {
            Some("1") => Ok(true),
            Some("0") => Ok(false),
            _ => Err(Error::Parse {
                path: path.to_path_buf(),
                line: i as u64 + 2,
                message: "use_lidar must be 0 or 1".into(),
            }),
        })
        .collect()
}

pub fn cmd_eval(
    est: &Path,
    gt: &Path,
    flags: Option<&Path>,
    smoke: Option<&Path>,
    options: &EvalOptions,
    out: &Path,
) -> Result<MetricReport> {
    let est_traj = read_tum(est)?;
    let gt_traj = read_tum(gt)?;
    let mut report = evaluate(&est_traj, &gt_traj, options)?;
    if let (Some(f), Some(s)) = (flags, smoke) {
        let use_lidar = read_use_lidar_flags(f)?;
        let gt_smoke = read_smoke_flags(s)?;
        report.recall = Some(detection_recall(&use_lidar, &gt_smoke)?);
        report.false_positive_rate = false_positive_rate(&use_lidar, &gt_smoke).ok();
    }
    if report.alignment_degenerate {
        log::warn!("trajectory alignment was degenerate; APE computed without alignment");
    }
    write_text(out, &report.to_json())?;
    Ok(report)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, out } => cmd_synth(&config, &out),
        Command::Run { data, config, out } => cmd_run(&data, &config, &out).map(|_| ()),
        Command::Eval { est, gt, flags, smoke, config, max_dt, rpe_delta, no_align, out } => {
            let mut options = match &config {
                Some(c) => PipelineConfig::load(c)?.evaluation,
                None => EvalOptions::default(),
            };
            if let Some(v) = max_dt {
                options.max_dt = v;
            }
            if let Some(v) = rpe_delta {
                options.rpe_delta = v;
            }
            if no_align {
                options.align = false;
            }
            if !(options.max_dt > 0.0) || options.rpe_delta == 0 {
                return Err(Error::Validation("--max-dt must be > 0 and --rpe-delta >= 1".into()));
            }
            let out = out.unwrap_or_else(|| est.parent().unwrap_or(Path::new(".")).join("metrics.json"));
            let report = cmd_eval(&est, &gt, flags.as_deref(), smoke.as_deref(), &options, &out)?;
            println!("{}", report.to_json().trim_end());
            Ok(())
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on success, 1 for invalid input, 2 for processing failures.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}
