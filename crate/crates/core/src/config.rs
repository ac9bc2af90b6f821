//! Project configuration: one strict JSON document.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::fit_theta_max;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::io::fmt_sig;
use crate::kinematics::TendonLayout;
use crate::mocap::FrameAlignment;
use crate::statics::{LoadCase, MarkerSpan, MaterialParams, SegmentSpec, SolverSettings, STANDARD_GRAVITY};
use crate::workspace::{SegmentSweep, SweepConfig, DEFAULT_BIN_HEIGHT, DEFAULT_EVAL_SAMPLES, MAX_GRID_SAMPLES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialEntry {
    pub bending_stiffness_nmm2: f64,
    pub axial_stiffness_n: f64,
    pub linear_density_g_per_mm: f64,
    #[serde(default)]
    pub tension_offset_n: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentEntry {
    pub material: String,
    pub length_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_cap_mass_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pitch_radius_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tendon_count: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverEntry {
    pub subdivisions: usize,
    pub gradient_tol: f64,
    pub constraint_tol_mm: f64,
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
    pub mount_angle_deg: f64,
    /// Index of the segment carrying the tip markers.
    pub marker_segment: usize,
    pub marker_count: usize,
    /// Distal span covered by the virtual markers; absent means the whole
    /// segment.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marker_span_mm: Option<f64>,
}

impl Default for SolverEntry {
    fn default() -> Self {
        let s = SolverSettings::<f64>::default();
        Self {
            subdivisions: s.subdivisions,
            gradient_tol: s.gradient_tol,
            constraint_tol_mm: s.constraint_tol,
            max_outer_iterations: s.max_outer_iterations,
            max_inner_iterations: s.max_inner_iterations,
            mount_angle_deg: 0.0,
            marker_segment: s.marker_segment,
            marker_count: s.marker_count,
            marker_span_mm: None,
        }
    }
}

/// Per-segment bend limit: exactly one of the three sources must be set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepEntry {
    pub theta_steps: usize,
    pub phi_steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_max_rad: Option<f64>,
    /// Largest tendon pull; θ_max = δ_max / d.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_max_mm: Option<f64>,
    /// Measured single-segment reach; θ_max is fitted to it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reach_mm: Option<f64>,
    pub max_eval_samples: u64,
    pub bin_height_mm: f64,
}

impl Default for SweepEntry {
    fn default() -> Self {
        Self {
            theta_steps: 12,
            phi_steps: 16,
            theta_max_rad: None,
            delta_max_mm: None,
            reach_mm: None,
            max_eval_samples: DEFAULT_EVAL_SAMPLES,
            bin_height_mm: DEFAULT_BIN_HEIGHT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignmentEntry {
    pub origin_mm: [f64; 3],
    pub axis: [f64; 3],
    pub tip_markers: Vec<String>,
    pub median_window: usize,
}

impl Default for AlignmentEntry {
    fn default() -> Self {
        Self {
            origin_mm: [0.0; 3],
            axis: [0.0, 0.0, 1.0],
            tip_markers: (1..=5).map(|i| format!("tip{i}")).collect(),
            median_window: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DefaultsEntry {
    pub pitch_radius_mm: f64,
    pub end_cap_mass_g: f64,
    pub tendon_count: usize,
    pub gravity_mm_s2: f64,
}

impl Default for DefaultsEntry {
    fn default() -> Self {
        Self {
            pitch_radius_mm: 8.0,
            end_cap_mass_g: 5.0,
            tendon_count: 3,
            gravity_mm_s2: STANDARD_GRAVITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub materials: BTreeMap<String, MaterialEntry>,
    pub segments: Vec<SegmentEntry>,
    #[serde(default)]
    pub solver: SolverEntry,
    #[serde(default)]
    pub sweep: SweepEntry,
    #[serde(default)]
    pub alignment: AlignmentEntry,
    #[serde(default)]
    pub defaults: DefaultsEntry,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn positive(v: f64, what: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(format!("{what} must be positive, got {v}")))
    }
}

fn non_negative(v: f64, what: &str) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(format!("{what} must be non-negative, got {v}")))
    }
}

impl ProjectConfig {
    /// Parses and fully validates a config document.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.materials.is_empty() {
            return Err(config_err("no materials defined"));
        }
        for name in self.materials.keys() {
            self.material(name)?;
        }
        if self.segments.is_empty() {
            return Err(config_err("no segments defined"));
        }
        let d = &self.defaults;
        positive(d.pitch_radius_mm, "defaults.pitch_radius_mm")?;
        non_negative(d.end_cap_mass_g, "defaults.end_cap_mass_g")?;
        non_negative(d.gravity_mm_s2, "defaults.gravity_mm_s2")?;
        self.chain(None, None, None)?;

        let s = &self.solver;
        if s.subdivisions < 4 {
            return Err(config_err(format!("solver.subdivisions must be >= 4, got {}", s.subdivisions)));
        }
        positive(s.gradient_tol, "solver.gradient_tol")?;
        positive(s.constraint_tol_mm, "solver.constraint_tol_mm")?;
        if s.max_outer_iterations == 0 || s.max_inner_iterations == 0 {
            return Err(config_err("solver iteration caps must be >= 1"));
        }
        if !s.mount_angle_deg.is_finite() {
            return Err(config_err("solver.mount_angle_deg must be finite"));
        }
        if s.marker_segment >= self.segments.len() {
            return Err(config_err(format!(
                "solver.marker_segment {} outside the {} configured segments",
                s.marker_segment,
                self.segments.len()
            )));
        }
        if s.marker_count < 3 {
            return Err(config_err("solver.marker_count must be >= 3"));
        }
        if let Some(span) = s.marker_span_mm {
            positive(span, "solver.marker_span_mm")?;
        }

        let w = &self.sweep;
        if w.theta_steps == 0 || w.phi_steps == 0 {
            return Err(config_err("sweep step counts must be >= 1"));
        }
        if w.max_eval_samples == 0 {
            return Err(config_err("sweep.max_eval_samples must be >= 1"));
        }
        if w.max_eval_samples > MAX_GRID_SAMPLES {
            return Err(config_err(format!("sweep.max_eval_samples exceeds {MAX_GRID_SAMPLES}")));
        }
        positive(w.bin_height_mm, "sweep.bin_height_mm")?;
        let sources = [w.theta_max_rad, w.delta_max_mm, w.reach_mm].iter().filter(|v| v.is_some()).count();
        if sources != 1 {
            return Err(config_err(
                "sweep needs exactly one of theta_max_rad, delta_max_mm, reach_mm",
            ));
        }
        self.theta_max()?;

        let a = &self.alignment;
        if a.origin_mm.iter().any(|v| !v.is_finite()) {
            return Err(config_err("alignment.origin_mm must be finite"));
        }
        if Vec3::from(a.axis).normalized().is_none() {
            return Err(config_err("alignment.axis must be a non-zero vector"));
        }
        if a.tip_markers.len() < 3 {
            return Err(config_err("alignment.tip_markers needs at least 3 ids"));
        }
        if a.median_window == 0 || a.median_window % 2 == 0 {
            return Err(config_err("alignment.median_window must be odd"));
        }
        Ok(())
    }

    /// Material by name; the error names the missing material.
    pub fn material(&self, name: &str) -> Result<MaterialParams<f64>> {
        let m = self.materials.get(name).ok_or_else(|| {
            config_err(format!(
                "unknown material `{name}` (known: {})",
                self.materials.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })?;
        if !m.tension_offset_n.is_finite() {
            return Err(config_err(format!("material `{name}`: tension offset must be finite")));
        }
        MaterialParams::new(name, m.bending_stiffness_nmm2, m.axial_stiffness_n, m.linear_density_g_per_mm)
            .map_err(|e| config_err(format!("material `{name}`: {e}")))
    }

    pub fn tension_offset(&self, name: &str) -> f64 {
        self.materials.get(name).map_or(0.0, |m| m.tension_offset_n)
    }

    /// First `count` configured segments (all when `None`), optionally with
    /// every segment's material or length replaced.
    pub fn chain(
        &self,
        material: Option<&str>,
        count: Option<usize>,
        length: Option<f64>,
    ) -> Result<Vec<SegmentSpec<f64>>> {
        let n = count.unwrap_or(self.segments.len());
        if n == 0 || n > self.segments.len() {
            return Err(config_err(format!(
                "segment count {n} outside 1..={}",
                self.segments.len()
            )));
        }
        let d = &self.defaults;
        self.segments[..n]
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let name = material.unwrap_or(&s.material);
                let mat = self.material(name)?;
                let len = length.unwrap_or(s.length_mm);
                positive(len, &format!("segments[{i}].length_mm"))?;
                let cap = s.end_cap_mass_g.unwrap_or(d.end_cap_mass_g);
                non_negative(cap, &format!("segments[{i}].end_cap_mass_g"))?;
                let radius = s.pitch_radius_mm.unwrap_or(d.pitch_radius_mm);
                positive(radius, &format!("segments[{i}].pitch_radius_mm"))?;
                let count = s.tendon_count.unwrap_or(d.tendon_count);
                let layout = TendonLayout::symmetric(radius, count)
                    .map_err(|e| config_err(format!("segments[{i}]: {e}")))?;
                SegmentSpec::new(len, layout, mat, cap).map_err(|e| config_err(format!("segments[{i}]: {e}")))
            })
            .collect()
    }

    pub fn solver_settings(&self) -> SolverSettings<f64> {
        let s = &self.solver;
        SolverSettings {
            subdivisions: s.subdivisions,
            gradient_tol: s.gradient_tol,
            constraint_tol: s.constraint_tol_mm,
            max_outer_iterations: s.max_outer_iterations,
            max_inner_iterations: s.max_inner_iterations,
            mount_angle: s.mount_angle_deg.to_radians(),
            marker_segment: s.marker_segment,
            marker_count: s.marker_count,
            marker_span: s.marker_span_mm.map_or(MarkerSpan::WholeSegment, MarkerSpan::Distal),
        }
    }

    pub fn load_case(&self, payload_g: f64, gravity: bool) -> Result<LoadCase<f64>> {
        let load = LoadCase {
            payload_mass: payload_g,
            gravity_magnitude: self.defaults.gravity_mm_s2,
            gravity_enabled: gravity,
        };
        load.validate()?;
        Ok(load)
    }

    /// Per-segment bend limit from whichever source the sweep section names.
    /// Reach and pull are converted using the first segment.
    pub fn theta_max(&self) -> Result<f64> {
        let w = &self.sweep;
        let first = &self.segments[0];
        let theta = if let Some(t) = w.theta_max_rad {
            t
        } else if let Some(delta) = w.delta_max_mm {
            positive(delta, "sweep.delta_max_mm")?;
            delta / first.pitch_radius_mm.unwrap_or(self.defaults.pitch_radius_mm)
        } else if let Some(r) = w.reach_mm {
            fit_theta_max(r, first.length_mm).map_err(|e| config_err(format!("sweep.reach_mm: {e}")))?
        } else {
            return Err(config_err("sweep has no bend limit"));
        };
        if !(theta > 0.0 && theta <= std::f64::consts::PI) {
            return Err(config_err(format!("sweep bend limit {theta} rad outside (0, π]")));
        }
        Ok(theta)
    }

    /// Sweep over the first `n` segments with optional grid overrides.
    pub fn sweep_config(
        &self,
        n: usize,
        theta_steps: Option<usize>,
        phi_steps: Option<usize>,
        max_eval_samples: Option<u64>,
    ) -> Result<SweepConfig<f64>> {
        if n == 0 || n > self.segments.len() {
            return Err(config_err(format!(
                "segment count {n} outside 1..={}",
                self.segments.len()
            )));
        }
        let theta_max = self.theta_max()?;
        Ok(SweepConfig {
            segments: self.segments[..n]
                .iter()
                .map(|s| SegmentSweep {
                    length: s.length_mm,
                    theta_max,
                    theta_steps: theta_steps.unwrap_or(self.sweep.theta_steps),
                    phi_steps: phi_steps.unwrap_or(self.sweep.phi_steps),
                })
                .collect(),
            max_eval_samples: max_eval_samples.unwrap_or(self.sweep.max_eval_samples),
        })
    }

    pub fn alignment(&self) -> FrameAlignment<f64> {
        FrameAlignment {
            origin: Vec3::from(self.alignment.origin_mm),
            axis: Vec3::from(self.alignment.axis),
        }
    }

    /// Replaces (or adds) a material entry, rounding to the report precision.
    pub fn set_material(&mut self, params: &MaterialParams<f64>, tension_offset: f64) {
        let round = |v: f64| fmt_sig(v).parse::<f64>().unwrap_or(v);
        self.materials.insert(
            params.name.clone(),
            MaterialEntry {
                bending_stiffness_nmm2: round(params.bending_stiffness),
                axial_stiffness_n: round(params.axial_stiffness),
                linear_density_g_per_mm: round(params.linear_density),
                tension_offset_n: round(tension_offset),
            },
        );
    }
}
