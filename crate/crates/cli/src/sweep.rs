use std::io::Write;

use clap::Args;
use softarm::io::{fmt_sig, JsonObject};
use softarm::workspace::{scaling_report, sweep_workspace, write_cloud_csv, WorkspaceMetrics};

use crate::output::{create, write_text};
use crate::svg::planar_scatter;
use crate::{CliResult, Ctx};

#[derive(Args)]
pub struct WorkspaceArgs {
    /// Sweep the first N configured segments (default: all).
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long)]
    theta_steps: Option<usize>,
    #[arg(long)]
    phi_steps: Option<usize>,
    /// Evaluate at most this many grid samples (evenly strided).
    #[arg(long)]
    max_samples: Option<u64>,
    /// Volume bin height, mm.
    #[arg(long)]
    bin_height: Option<f64>,
}

pub fn run(ctx: &Ctx, a: &WorkspaceArgs) -> CliResult {
    let cfg = &ctx.config;
    let n = a.segments.unwrap_or(cfg.segments.len());
    let bin = a.bin_height.unwrap_or(cfg.sweep.bin_height_mm);

    // Metrics for every prefix 1..=n so the scaling relative to one segment
    // can be reported; the last cloud is the one written out.
    let mut metrics = Vec::with_capacity(n);
    let mut cloud = None;
    for k in 1..=n {
        let sweep = cfg.sweep_config(k, a.theta_steps, a.phi_steps, a.max_samples)?;
        let c = sweep_workspace(&sweep)?;
        metrics.push(WorkspaceMetrics::from_cloud(&c, bin)?);
        cloud = Some(c);
    }
    let (Some(cloud), Some(last)) = (cloud, metrics.last().copied()) else {
        return Err(softarm::Error::Config(format!("segment count {n} outside 1..={}", cfg.segments.len())).into());
    };

    write_text(&ctx.out, "metrics.json", &last.to_json())?;
    let (_, w) = create(&ctx.out, "cloud.csv")?;
    write_cloud_csv(&cloud, w)?;
    let xy: Vec<(f64, f64)> = cloud.points().iter().map(|p| (p.x, p.y)).collect();
    let title = format!("{n}-segment workspace, top view (r_max {} mm)", fmt_sig(last.r_max));
    write_text(&ctx.out, "workspace.svg", &planar_scatter(&xy, Some(last.r_max), &title))?;

    let mut summary = JsonObject::new()
        .integer("segments", n as i64)
        .integer("points", cloud.len() as i64)
        .number("r_max_mm", last.r_max)
        .number("planar_area_mm2", last.planar_area)
        .number("volume_mm3", last.volume)
        .number("z_min_mm", last.z_extent.0)
        .number("z_max_mm", last.z_extent.1);
    // A degenerate baseline (zero area or volume) has no meaningful ratios.
    let base = metrics[0];
    if n > 1 && !(base.planar_area > 0.0 && base.volume > 0.0) {
        summary = summary
            .number("area_ratio_vs_1", f64::NAN)
            .number("volume_ratio_vs_1", f64::NAN);
    } else if n > 1 {
        let rows = scaling_report(&metrics)?;
        let (_, mut w) = create(&ctx.out, "scaling.csv")?;
        writeln!(w, "segments,r_max_mm,planar_area_mm2,volume_mm3,area_ratio,volume_ratio")?;
        for (k, (m, r)) in metrics.iter().zip(&rows).enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                k + 1,
                fmt_sig(m.r_max),
                fmt_sig(m.planar_area),
                fmt_sig(m.volume),
                fmt_sig(r.area_ratio),
                fmt_sig(r.volume_ratio)
            )?;
        }
        w.flush()?;
        let last_row = rows.last().expect("n > 1");
        summary = summary
            .number("area_ratio_vs_1", last_row.area_ratio)
            .number("volume_ratio_vs_1", last_row.volume_ratio);
    }
    println!("{}", summary.render(0));
    Ok(())
}
