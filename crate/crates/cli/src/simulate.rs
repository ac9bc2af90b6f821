use std::io::Write;

use clap::Args;
use softarm::io::{fmt_sig, JsonObject};
use softarm::kinematics::ActuationCommand;
use softarm::statics::Solver;

use crate::output::{create, nested, write_text};
use crate::{CliError, CliResult, Ctx};

#[derive(Args)]
pub struct SimulateArgs {
    /// Tendon pull `s<seg>[t<tendon>]:<mm>`, 1-based; tendon defaults to 1.
    /// Repeatable.
    #[arg(long = "pull", value_name = "SPEC")]
    pulls: Vec<String>,
    /// Tip payload, g.
    #[arg(long, default_value_t = 0.0)]
    payload: f64,
    /// Use this material for every segment.
    #[arg(long)]
    material: Option<String>,
    /// Simulate only the first N configured segments.
    #[arg(long)]
    segments: Option<usize>,
    /// Override every segment's length, mm.
    #[arg(long)]
    length: Option<f64>,
    #[arg(long)]
    no_gravity: bool,
}

/// Pull spec as (segment, tendon, mm), zero-based.
fn parse_pull(spec: &str) -> CliResult<(usize, usize, f64)> {
    let bad = || CliError::Usage(format!("bad pull `{spec}`, expected s<seg>[t<tendon>]:<mm>"));
    let (target, mm) = spec.split_once(':').ok_or_else(bad)?;
    let mm: f64 = mm.trim().parse().map_err(|_| bad())?;
    let target = target.trim().strip_prefix('s').ok_or_else(bad)?;
    let (seg, tendon) = match target.split_once('t') {
        Some((s, t)) => (s, Some(t)),
        None => (target, None),
    };
    let seg: usize = seg.parse().map_err(|_| bad())?;
    let tendon: usize = tendon.map_or(Ok(1), str::parse).map_err(|_| bad())?;
    if seg == 0 || tendon == 0 {
        return Err(bad());
    }
    Ok((seg - 1, tendon - 1, mm))
}

pub fn run(ctx: &Ctx, a: &SimulateArgs) -> CliResult {
    let cfg = &ctx.config;
    let chain = cfg.chain(a.material.as_deref(), a.segments, a.length)?;
    let mut pulls: Vec<Vec<f64>> = chain.iter().map(|s| vec![0.0; s.layout.count()]).collect();
    for spec in &a.pulls {
        let (seg, tendon, mm) = parse_pull(spec)?;
        let slot = pulls
            .get_mut(seg)
            .and_then(|p| p.get_mut(tendon))
            .ok_or_else(|| CliError::Usage(format!("pull `{spec}` names a tendon the arm does not have")))?;
        *slot = mm;
    }
    let command = ActuationCommand::new(pulls.clone(), f64::INFINITY)?;
    let load = cfg.load_case(a.payload, !a.no_gravity)?;
    let result = Solver::new(cfg.solver_settings()).solve(&chain, &command, &load)?;

    // The offset models friction on taut tendons only; slack ones stay at 0.
    let tensions: Vec<Vec<f64>> = result
        .tendon_tensions
        .iter()
        .zip(&chain)
        .map(|(ts, seg)| {
            let offset = cfg.tension_offset(&seg.material.name);
            ts.iter().map(|&t| if t > 0.0 { t + offset } else { 0.0 }).collect()
        })
        .collect();
    let deg = |v: &[f64]| v.iter().map(|x| x.to_degrees()).collect::<Vec<_>>();
    let materials = chain
        .iter()
        .map(|s| serde_json::Value::String(s.material.name.clone()).to_string())
        .collect::<Vec<_>>()
        .join(", ");
    let json = JsonObject::new()
        .integer("segments", chain.len() as i64)
        .raw("materials", format!("[{materials}]"))
        .number("payload_g", a.payload)
        .boolean("gravity", !a.no_gravity)
        .raw("pulls_mm", nested(&pulls))
        .number("ccfit_angle_deg", result.ccfit_angle.to_degrees())
        .number("tip_angle_deg", result.tip_angle.to_degrees())
        .number("vertical_displacement_mm", result.vertical_displacement)
        .raw("tendon_tensions_n", nested(&tensions))
        .numbers("segment_ccfit_angles_deg", &deg(&result.segment_ccfit_angles))
        .numbers("segment_rise_mm", &result.segment_rise)
        .number("nonuniformity", result.nonuniformity)
        .number("plane_angle_deg", result.plane_angle.to_degrees())
        .number("energy_nmm", result.energy)
        .number("kkt_residual", result.kkt_residual)
        .number("constraint_violation_mm", result.constraint_violation)
        .integer("outer_iterations", result.outer_iterations as i64)
        .render(0);
    write_text(&ctx.out, "equilibrium.json", &json)?;

    let (_, mut w) = create(&ctx.out, "shape.csv")?;
    writeln!(w, "node,x_mm,y_mm,z_mm")?;
    for (i, p) in result.shape.iter().enumerate() {
        writeln!(w, "{i},{},{},{}", fmt_sig(p.x), fmt_sig(p.y), fmt_sig(p.z))?;
    }
    w.flush()?;
    println!("{json}");
    Ok(())
}
