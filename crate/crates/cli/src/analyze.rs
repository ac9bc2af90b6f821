use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use softarm::io::{fmt_sig, JsonObject};
use softarm::mocap::{
    bending_angle_series, height_series, parse_mocap_csv, smooth_trajectory, tip_cloud, write_series_csv,
    MocapTrajectory,
};
use softarm::workspace::{write_cloud_csv, WorkspaceMetrics};

use crate::output::{create, write_text};
use crate::svg::planar_scatter;
use crate::{CliError, CliResult, Ctx};

#[derive(Subcommand)]
pub enum AnalyzeCommand {
    /// Measured tip workspace from one marker.
    Workspace(WorkspaceArgs),
    /// Per-frame bend angle from the circle through the tip markers.
    Bending(BendingArgs),
}

#[derive(Args)]
pub struct Common {
    /// Long-format CSV: frame,time_s,marker_id,x_mm,y_mm,z_mm.
    #[arg(long)]
    input: PathBuf,
    /// Median filter window in frames (odd); defaults to the config.
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Args)]
pub struct WorkspaceArgs {
    #[command(flatten)]
    common: Common,
    /// Tip marker id (default: the first configured tip marker).
    #[arg(long)]
    marker: Option<String>,
    /// Volume bin height, mm.
    #[arg(long)]
    bin_height: Option<f64>,
}

#[derive(Args)]
pub struct BendingArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated tip marker ids (default: from the config).
    #[arg(long, value_delimiter = ',')]
    markers: Option<Vec<String>>,
    /// Arc length the markers span, mm (default: the marker segment's length).
    #[arg(long)]
    length: Option<f64>,
}

fn load(ctx: &Ctx, c: &Common) -> CliResult<MocapTrajectory<f64>> {
    let file = File::open(&c.input)
        .map_err(|e| CliError::Usage(format!("cannot open {}: {e}", c.input.display())))?;
    let traj = parse_mocap_csv(BufReader::new(file))?;
    let window = c.window.unwrap_or(ctx.config.alignment.median_window);
    Ok(smooth_trajectory(&traj, window)?)
}

pub fn run(ctx: &Ctx, cmd: &AnalyzeCommand) -> CliResult {
    match cmd {
        AnalyzeCommand::Workspace(a) => workspace(ctx, a),
        AnalyzeCommand::Bending(a) => bending(ctx, a),
    }
}

fn workspace(ctx: &Ctx, a: &WorkspaceArgs) -> CliResult {
    let cfg = &ctx.config;
    let traj = load(ctx, &a.common)?;
    let marker = match &a.marker {
        Some(m) => m.clone(),
        None => cfg
            .alignment
            .tip_markers
            .first()
            .cloned()
            .ok_or_else(|| CliError::Usage("no --marker given and no tip markers configured".into()))?,
    };
    let alignment = cfg.alignment();
    let cloud = tip_cloud(&traj, &marker, &alignment)?;
    let metrics = WorkspaceMetrics::from_cloud(&cloud, a.bin_height.unwrap_or(cfg.sweep.bin_height_mm))?;

    write_text(&ctx.out, "metrics.json", &metrics.to_json())?;
    let (_, w) = create(&ctx.out, "cloud.csv")?;
    write_cloud_csv(&cloud, w)?;
    let (_, w) = create(&ctx.out, "height.csv")?;
    write_series_csv(&height_series(&traj, &marker, &alignment)?, "z_mm", 1.0, w)?;
    let xy: Vec<(f64, f64)> = cloud.points().iter().map(|p| (p.x, p.y)).collect();
    let title = format!("measured workspace of {marker}, top view (r_max {} mm)", fmt_sig(metrics.r_max));
    write_text(&ctx.out, "workspace.svg", &planar_scatter(&xy, Some(metrics.r_max), &title))?;

    let summary = JsonObject::new()
        .string("marker", &marker)
        .integer("points", cloud.len() as i64)
        .number("r_max_mm", metrics.r_max)
        .number("planar_area_mm2", metrics.planar_area)
        .number("volume_mm3", metrics.volume)
        .number("z_min_mm", metrics.z_extent.0)
        .number("z_max_mm", metrics.z_extent.1);
    println!("{}", summary.render(0));
    Ok(())
}

fn bending(ctx: &Ctx, a: &BendingArgs) -> CliResult {
    let cfg = &ctx.config;
    let traj = load(ctx, &a.common)?;
    let markers = a.markers.clone().unwrap_or_else(|| cfg.alignment.tip_markers.clone());
    if markers.len() < 3 {
        return Err(CliError::Usage(format!("need at least 3 tip markers, got {}", markers.len())));
    }
    let length = match a.length {
        Some(l) => l,
        None => {
            let seg = cfg.solver.marker_segment;
            cfg.segments
                .get(seg)
                .map(|s| s.length_mm)
                .ok_or_else(|| CliError::Usage(format!("marker segment {seg} not configured; pass --length")))?
        }
    };
    let series = bending_angle_series(&traj, &markers, length)?;
    let (_, w) = create(&ctx.out, "bending.csv")?;
    write_series_csv(&series, "angle_deg", 180.0 / std::f64::consts::PI, w)?;

    let angles: Vec<f64> = series.iter().map(|&(_, v)| v.to_degrees()).collect();
    let max = angles.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = angles.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = angles.iter().sum::<f64>() / angles.len() as f64;
    let summary = JsonObject::new()
        .integer("frames", series.len() as i64)
        .number("arc_length_mm", length)
        .number("angle_min_deg", min)
        .number("angle_mean_deg", mean)
        .number("angle_max_deg", max);
    println!("{}", summary.render(0));
    Ok(())
}
