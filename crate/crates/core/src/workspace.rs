//! Reachable-workspace sweeps over stacked constant-curvature segments and
//! the radial-reach / planar-area / volume metrics derived from tip clouds.

use std::cmp::Ordering;
use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::io::{fmt_sig, JsonObject};
use crate::kinematics::{compose_chain, ArcParams};
use crate::scalar::Real;

/// Hard ceiling on the full sweep grid.
pub const MAX_GRID_SAMPLES: u64 = 10_000_000;
/// Default number of samples actually evaluated (strided beyond this).
pub const DEFAULT_EVAL_SAMPLES: u64 = 1_000_000;
pub const DEFAULT_BIN_HEIGHT: f64 = 5.0;
pub const CLOUD_HEADER: &str = "x_mm,y_mm,z_mm";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentSweep<T> {
    pub length: T,
    /// Largest bend angle, rad, in (0, π].
    pub theta_max: T,
    pub theta_steps: usize,
    pub phi_steps: usize,
}

impl<T: Real> SegmentSweep<T> {
    fn validate(&self, i: usize) -> Result<()> {
        if !(self.length > T::zero() && self.length.is_finite()) {
            return Err(Error::invalid(format!("sweep segment {i}: length must be positive")));
        }
        if !(self.theta_max > T::zero() && self.theta_max <= T::PI()) {
            return Err(Error::invalid(format!(
                "sweep segment {i}: theta_max {} outside (0, π]",
                self.theta_max
            )));
        }
        if self.theta_steps == 0 || self.phi_steps == 0 {
            return Err(Error::invalid(format!("sweep segment {i}: step counts must be >= 1")));
        }
        Ok(())
    }

    fn theta(&self, i: usize) -> T {
        if self.theta_steps == 1 {
            T::zero()
        } else {
            self.theta_max * T::from_usize_lossy(i) / T::from_usize_lossy(self.theta_steps - 1)
        }
    }

    fn phi(&self, j: usize) -> T {
        T::two_pi() * T::from_usize_lossy(j) / T::from_usize_lossy(self.phi_steps)
    }

    fn samples(&self) -> u64 {
        self.theta_steps as u64 * self.phi_steps as u64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig<T> {
    pub segments: Vec<SegmentSweep<T>>,
    /// Grids larger than this are evaluated on an evenly strided subset.
    pub max_eval_samples: u64,
}

impl<T: Real> SweepConfig<T> {
    /// `count` identical segments with the default 12 × 16 grid.
    pub fn uniform(count: usize, length: T, theta_max: T) -> Self {
        Self {
            segments: vec![
                SegmentSweep {
                    length,
                    theta_max,
                    theta_steps: 12,
                    phi_steps: 16,
                };
                count
            ],
            max_eval_samples: DEFAULT_EVAL_SAMPLES,
        }
    }

    pub fn with_steps(mut self, theta_steps: usize, phi_steps: usize) -> Self {
        for s in &mut self.segments {
            s.theta_steps = theta_steps;
            s.phi_steps = phi_steps;
        }
        self
    }

    pub fn grid_size(&self) -> u64 {
        self.segments
            .iter()
            .fold(1u64, |acc, s| acc.saturating_mul(s.samples()))
    }

    fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::invalid("sweep needs at least one segment"));
        }
        for (i, s) in self.segments.iter().enumerate() {
            s.validate(i)?;
        }
        let total = self.grid_size();
        if total > MAX_GRID_SAMPLES {
            return Err(Error::invalid(format!(
                "sweep grid has {total} samples, budget is {MAX_GRID_SAMPLES}"
            )));
        }
        if self.max_eval_samples == 0 {
            return Err(Error::invalid("max_eval_samples must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud<T> {
    points: Vec<Vec3<T>>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(points: Vec<Vec3<T>>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("non-finite point {p:?}")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec3<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, p: Vec3<T>) -> Result<()> {
        if !p.is_finite() {
            return Err(Error::invalid(format!("non-finite point {p:?}")));
        }
        self.points.push(p);
        Ok(())
    }

    /// Sorts lexicographically by (x, y, z).
    pub fn canonicalize(&mut self) {
        self.points.sort_by(lex_cmp);
    }

    pub fn z_extent(&self) -> Option<(T, T)> {
        let first = self.points.first()?.z;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| (lo.min(p.z), hi.max(p.z))))
    }
}

fn lex_cmp<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Ordering {
    let c = |u: T, v: T| u.partial_cmp(&v).unwrap_or(Ordering::Equal);
    c(a.x, b.x).then(c(a.y, b.y)).then(c(a.z, b.z))
}

/// Tip position of every (θ, φ) grid combination across the segments, each
/// arc's φ taken in its own base frame. The result is canonically sorted, so
/// it does not depend on how the work was scheduled.
pub fn sweep_workspace<T: Real>(config: &SweepConfig<T>) -> Result<PointCloud<T>> {
    config.validate()?;
    let total = config.grid_size();
    let stride = total.div_ceil(config.max_eval_samples).max(1);
    let count = total.div_ceil(stride);
    let segs = &config.segments;

    let mut points = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut flat = k * stride;
            let mut arcs = Vec::with_capacity(segs.len());
            for s in segs.iter().rev() {
                let per = s.samples();
                let local = flat % per;
                flat /= per;
                let ti = (local / s.phi_steps as u64) as usize;
                let pj = (local % s.phi_steps as u64) as usize;
                arcs.push(ArcParams::from_bend(s.theta(ti), s.phi(pj), s.length)?);
            }
            arcs.reverse();
            Ok(compose_chain(&arcs)?.translation)
        })
        .collect::<Result<Vec<_>>>()?;
    points.par_sort_by(lex_cmp);
    PointCloud::new(points)
}

/// Largest horizontal distance of any point from the z axis.
pub fn max_radial_reach<T: Real>(cloud: &PointCloud<T>) -> Result<T> {
    if cloud.is_empty() {
        return Err(Error::invalid("empty point cloud"));
    }
    Ok(cloud.points.iter().fold(T::zero(), |m, p| m.max(p.radial())))
}

/// Circular planar workspace area π·r².
pub fn planar_area<T: Real>(r_max: T) -> Result<T> {
    if !(r_max >= T::zero()) {
        return Err(Error::invalid(format!("radius must be non-negative, got {r_max}")));
    }
    Ok(T::PI() * r_max * r_max)
}

/// Volume from stacked circular cross-sections.
///
/// Points are binned along z starting at the lowest point; each non-empty bin
/// contributes a disc with the bin's largest radial distance. The top bin is
/// clipped at the highest point, so the bins exactly tile the z extent.
pub fn workspace_volume<T: Real>(cloud: &PointCloud<T>, bin_height: T) -> Result<T> {
    if cloud.is_empty() {
        return Err(Error::invalid("empty point cloud"));
    }
    if !(bin_height > T::zero() && bin_height.is_finite()) {
        return Err(Error::invalid(format!("bin height must be positive, got {bin_height}")));
    }
    let (lo, hi) = cloud.z_extent().expect("non-empty");
    let extent = hi - lo;
    let bins = (extent / bin_height).ceil().to_usize().unwrap_or(0).max(1);
    let mut radius = vec![None::<T>; bins];
    for p in &cloud.points {
        let b = ((p.z - lo) / bin_height).floor().to_usize().unwrap_or(0).min(bins - 1);
        let r = p.radial();
        radius[b] = Some(radius[b].map_or(r, |m: T| m.max(r)));
    }
    let mut volume = T::zero();
    for (b, r) in radius.iter().enumerate() {
        if let Some(r) = r {
            let bottom = bin_height * T::from_usize_lossy(b);
            let height = (extent - bottom).min(bin_height).max(T::zero());
            volume += T::PI() * *r * *r * height;
        }
    }
    Ok(volume)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorkspaceMetrics<T> {
    pub r_max: T,
    pub planar_area: T,
    pub volume: T,
    pub z_extent: (T, T),
}

impl<T: Real> WorkspaceMetrics<T> {
    pub fn from_cloud(cloud: &PointCloud<T>, bin_height: T) -> Result<Self> {
        let r_max = max_radial_reach(cloud)?;
        Ok(Self {
            r_max,
            planar_area: planar_area(r_max)?,
            volume: workspace_volume(cloud, bin_height)?,
            z_extent: cloud.z_extent().expect("non-empty"),
        })
    }

    pub fn to_json(&self) -> String {
        JsonObject::new()
            .number("r_max_mm", self.r_max)
            .number("planar_area_mm2", self.planar_area)
            .number("volume_mm3", self.volume)
            .number("z_min_mm", self.z_extent.0)
            .number("z_max_mm", self.z_extent.1)
            .render(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingRow<T> {
    pub area_ratio: T,
    pub volume_ratio: T,
}

/// Area and volume of each entry relative to the first.
pub fn scaling_report<T: Real>(metrics: &[WorkspaceMetrics<T>]) -> Result<Vec<ScalingRow<T>>> {
    if metrics.len() < 2 {
        return Err(Error::invalid("scaling report needs a baseline and at least one comparison"));
    }
    let base = &metrics[0];
    if !(base.planar_area > T::zero()) || !(base.volume > T::zero()) {
        return Err(Error::invalid("baseline area and volume must be positive"));
    }
    Ok(metrics
        .iter()
        .map(|m| ScalingRow {
            area_ratio: m.planar_area / base.planar_area,
            volume_ratio: m.volume / base.volume,
        })
        .collect())
}

pub fn write_cloud_csv<T: Real, W: Write>(cloud: &PointCloud<T>, writer: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    writeln!(w, "{CLOUD_HEADER}")?;
    for p in &cloud.points {
        writeln!(w, "{},{},{}", fmt_sig(p.x), fmt_sig(p.y), fmt_sig(p.z))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cloud_csv<T: Real, R: Read>(reader: R) -> Result<PointCloud<T>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or(Error::Parse {
            line: 1,
            message: format!("empty input, expected header '{CLOUD_HEADER}'"),
        })?
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
    if header.iter().map(str::trim).ne(CLOUD_HEADER.split(',')) {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must be '{CLOUD_HEADER}'"),
        });
    }
    let mut pts = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let mut xyz = [T::zero(); 3];
        for (i, slot) in xyz.iter_mut().enumerate() {
            let raw = rec.get(i).ok_or(Error::Parse {
                line,
                message: "expected 3 fields".into(),
            })?;
            let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("'{raw}' is not a number"),
            })?;
            *slot = T::lit(v);
        }
        pts.push(Vec3::from_array(xyz));
    }
    PointCloud::new(pts)
}
