use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use clap::Args;
use softarm::calibration::{
    default_initial, fit_material_with, read_observations_csv, residual_report, write_report_csv, FitOptions,
};
use softarm::io::JsonObject;

use crate::output::{create, write_text};
use crate::{CliError, CliResult, Ctx};

#[derive(Args)]
pub struct CalibrateArgs {
    /// Observation CSV: material,payload_g,pull_mm,angle_deg,z_mm,tension_n,length_mm.
    #[arg(long)]
    data: PathBuf,
    /// Material to fit; only its rows are used.
    #[arg(long)]
    material: String,
    /// Keep the tension offset at zero even when shape targets are present.
    #[arg(long)]
    fix_offset: bool,
    /// Also write the fitted material back into the --config file.
    #[arg(long)]
    update_config: bool,
}

pub fn run(ctx: &Ctx, a: &CalibrateArgs) -> CliResult {
    let cfg = &ctx.config;
    let file = File::open(&a.data).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", a.data.display())))?;
    let all = read_observations_csv::<f64, _>(BufReader::new(file))?;
    let observations: Vec<_> = all.into_iter().filter(|o| o.material == a.material).collect();
    if observations.is_empty() {
        return Err(CliError::Usage(format!("no observations for material '{}'", a.material)));
    }

    // Density, tendon layout and end cap come from the first configured
    // segment; the length is per observation.
    let spec = cfg.chain(Some(&a.material), Some(1), None)?.remove(0);
    let initial = default_initial(&spec.material);
    // A tension offset is only identifiable next to shape targets: with
    // tension targets alone it trades off exactly against the stiffnesses.
    let has_shape = observations
        .iter()
        .any(|o| o.ccfit_angle.is_some() || o.vertical_displacement.is_some());
    let mut solver = cfg.solver_settings();
    solver.marker_segment = 0;
    let options = FitOptions {
        solver,
        fit_offset: has_shape && !a.fix_offset,
        ..FitOptions::default()
    };
    let result = fit_material_with(&observations, &spec, &initial, &options)?;

    let (_, w) = create(&ctx.out, "residuals.csv")?;
    write_report_csv(&residual_report(&result), w)?;
    let mut updated = cfg.clone();
    updated.set_material(&result.material, result.tension_offset);
    let text = updated.to_json()?;
    write_text(&ctx.out, "arm.json", &text)?;
    if a.update_config {
        std::fs::write(&ctx.config_path, format!("{text}\n"))?;
    }

    let summary = JsonObject::new()
        .string("material", &a.material)
        .integer("observations", observations.len() as i64)
        .number("bending_stiffness_nmm2", result.material.bending_stiffness)
        .number("axial_stiffness_n", result.material.axial_stiffness)
        .number("tension_offset_n", result.tension_offset)
        .boolean("offset_fitted", options.fit_offset)
        .number("initial_residual_norm", result.initial_residual_norm)
        .number("relative_residual_norm", result.relative_residual_norm)
        .integer("iterations", result.iterations as i64);
    println!("{}", summary.render(0));
    Ok(())
}
