//! Motion-capture marker trajectories: CSV ingest, median smoothing, circle
//! fitting and the derived bend-angle / tip-cloud measurements.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geom::{symmetric_eigen, Mat3, Vec3};
use crate::scalar::Real;
use crate::workspace::PointCloud;

pub const MOCAP_HEADER: [&str; 6] = ["frame", "time_s", "marker_id", "x_mm", "y_mm", "z_mm"];

#[derive(Clone, Debug, PartialEq)]
pub struct Frame<T> {
    pub index: u64,
    pub time: T,
    /// Visible markers in file order.
    pub markers: Vec<(String, Vec3<T>)>,
}

impl<T: Real> Frame<T> {
    pub fn marker(&self, id: &str) -> Option<Vec3<T>> {
        self.markers.iter().find(|(m, _)| m == id).map(|&(_, p)| p)
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct MocapTrajectory<T> {
    pub frames: Vec<Frame<T>>,
}

impl<T: Real> MocapTrajectory<T> {
    /// Marker ids in order of first appearance.
    pub fn marker_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = Vec::new();
        for f in &self.frames {
            for (id, _) in &f.markers {
                if !ids.contains(id) {
                    ids.push(id.clone());
                }
            }
        }
        ids
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.frames.windows(2) {
            if w[1].index <= w[0].index {
                return Err(Error::Format(format!(
                    "frame indices not strictly increasing ({} after {})",
                    w[1].index, w[0].index
                )));
            }
            if w[1].time < w[0].time {
                return Err(Error::Format(format!("time decreases at frame {}", w[1].index)));
            }
        }
        Ok(())
    }
}

fn parse_field<T: Real>(value: &str, column: &str, line: usize) -> Result<T> {
    let v: f64 = value.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("column {column}: '{value}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("column {column}: non-finite value"),
        });
    }
    Ok(T::lit(v))
}

/// Reads `frame,time_s,marker_id,x_mm,y_mm,z_mm` rows, sorted by frame.
pub fn parse_mocap_csv<T: Real, R: Read>(reader: R) -> Result<MocapTrajectory<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(e, 1))?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty input, expected header".into(),
            })
        }
    };
    if header.iter().map(str::trim).ne(MOCAP_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must be '{}'", MOCAP_HEADER.join(",")),
        });
    }
    let mut traj = MocapTrajectory { frames: Vec::new() };
    for rec in records {
        let rec = rec.map_err(|e| csv_error(e, 0))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != MOCAP_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", MOCAP_HEADER.len(), rec.len()),
            });
        }
        let index: u64 = rec[0].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("column frame: '{}' is not a frame index", &rec[0]),
        })?;
        let time: T = parse_field(&rec[1], "time_s", line)?;
        let id = rec[2].trim().to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty marker_id".into(),
            });
        }
        let p = Vec3::new(
            parse_field(&rec[3], "x_mm", line)?,
            parse_field(&rec[4], "y_mm", line)?,
            parse_field(&rec[5], "z_mm", line)?,
        );
        match traj.frames.last_mut() {
            Some(f) if f.index == index => {
                if f.time != time {
                    return Err(Error::Format(format!(
                        "line {line}: frame {index} has inconsistent timestamps"
                    )));
                }
                if f.marker(&id).is_some() {
                    return Err(Error::Format(format!(
                        "line {line}: marker {id} repeated in frame {index}"
                    )));
                }
                f.markers.push((id, p));
            }
            Some(f) if index < f.index => {
                return Err(Error::Format(format!(
                    "line {line}: frame {index} follows frame {}; rows must be sorted by frame",
                    f.index
                )));
            }
            Some(f) if time < f.time => {
                return Err(Error::Format(format!("line {line}: time decreases at frame {index}")));
            }
            _ => traj.frames.push(Frame {
                index,
                time,
                markers: vec![(id, p)],
            }),
        }
    }
    Ok(traj)
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Writes the trajectory in the same format `parse_mocap_csv` reads, using
/// shortest round-trip float formatting.
pub fn write_mocap_csv<T: Real, W: Write>(traj: &MocapTrajectory<T>, writer: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    writeln!(w, "{}", MOCAP_HEADER.join(","))?;
    for f in &traj.frames {
        for (id, p) in &f.markers {
            writeln!(w, "{},{},{},{},{},{}", f.index, f.time, id, p.x, p.y, p.z)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn median<T: Real>(buf: &mut [T]) -> T {
    buf.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = buf.len();
    if n % 2 == 1 {
        buf[n / 2]
    } else {
        (buf[n / 2 - 1] + buf[n / 2]) / T::lit(2.0)
    }
}

/// Centered median filter per marker and axis.
///
/// The window never reaches across a frame where the marker is missing; near
/// the ends of a visible run it shrinks symmetrically.
pub fn smooth_trajectory<T: Real>(traj: &MocapTrajectory<T>, window: usize) -> Result<MocapTrajectory<T>> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::invalid(format!("median window must be odd and >= 1, got {window}")));
    }
    let radius = window / 2;
    let mut out = traj.clone();
    if radius == 0 {
        return Ok(out);
    }
    for id in traj.marker_ids() {
        let track: Vec<Option<Vec3<T>>> = traj.frames.iter().map(|f| f.marker(&id)).collect();
        let mut buf = Vec::with_capacity(window);
        let mut i = 0;
        while i < track.len() {
            if track[i].is_none() {
                i += 1;
                continue;
            }
            let start = i;
            while i < track.len() && track[i].is_some() {
                i += 1;
            }
            let run: Vec<Vec3<T>> = track[start..i].iter().map(|p| p.unwrap()).collect();
            for k in 0..run.len() {
                let r = radius.min(k).min(run.len() - 1 - k);
                let mut smoothed = [T::zero(); 3];
                for (axis, slot) in smoothed.iter_mut().enumerate() {
                    buf.clear();
                    buf.extend(run[k - r..=k + r].iter().map(|p| p[axis]));
                    *slot = median(&mut buf);
                }
                let frame = &mut out.frames[start + k];
                if let Some(entry) = frame.markers.iter_mut().find(|(m, _)| *m == id) {
                    entry.1 = Vec3::from_array(smoothed);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircleFit<T> {
    pub center: Vec3<T>,
    pub radius: T,
    /// Unit normal, oriented so the points run counter-clockwise about it.
    pub normal: Vec3<T>,
    pub rms_residual: T,
}

/// Least-squares circle through 3D points.
///
/// Plane from the centroid and the smallest principal direction, algebraic
/// (Kåsa) circle in that plane, then Gauss-Newton on the geometric distance.
pub fn fit_circle_3d<T: Real>(points: &[Vec3<T>]) -> Result<CircleFit<T>> {
    if points.len() < 3 {
        return Err(Error::invalid(format!("circle fit needs >= 3 points, got {}", points.len())));
    }
    let n_t = T::from_usize_lossy(points.len());
    let centroid = points.iter().fold(Vec3::zeros(), |a, &p| a + p) * (T::one() / n_t);
    let mut cov = [[T::zero(); 3]; 3];
    for p in points {
        let d = (*p - centroid).to_array();
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    let (vals, vecs) = symmetric_eigen(&Mat3::from_rows(cov));
    let spread = vals[2];
    if !(spread > T::zero()) {
        return Err(Error::DegenerateFit("points coincide".into()));
    }
    if vals[1] <= spread * T::lit(1e-20) {
        return Err(Error::DegenerateFit("points are collinear".into()));
    }
    let u = vecs[2];
    let mut normal = vecs[0];
    let v = normal.cross(u);

    let scale = (spread / n_t).sqrt();
    let planar: Vec<(T, T)> = points
        .iter()
        .map(|&p| {
            let d = p - centroid;
            (d.dot(u) / scale, d.dot(v) / scale)
        })
        .collect();

    // Kåsa: a² + b² + D a + E b + F = 0 in the least-squares sense.
    let mut ata = [[T::zero(); 3]; 3];
    let mut atb = [T::zero(); 3];
    for &(a, b) in &planar {
        let row = [a, b, T::one()];
        let rhs = -(a * a + b * b);
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] += row[i] * rhs;
        }
    }
    let sol = solve3(ata, atb).ok_or_else(|| Error::DegenerateFit("singular circle system".into()))?;
    let mut cx = -sol[0] / T::lit(2.0);
    let mut cy = -sol[1] / T::lit(2.0);
    let r2 = cx * cx + cy * cy - sol[2];
    if !(r2 > T::zero()) || !r2.is_finite() {
        return Err(Error::DegenerateFit("points are collinear".into()));
    }
    let mut r = r2.sqrt();
    if r > T::lit(1e12) {
        return Err(Error::DegenerateFit("points are collinear".into()));
    }

    // Geometric refinement on residuals |p - c| - r.
    for _ in 0..50 {
        let mut jtj = [[T::zero(); 3]; 3];
        let mut jtr = [T::zero(); 3];
        for &(a, b) in &planar {
            let dx = a - cx;
            let dy = b - cy;
            let dist = dx.hypot(dy);
            if dist == T::zero() {
                continue;
            }
            let row = [-dx / dist, -dy / dist, -T::one()];
            let res = dist - r;
            for i in 0..3 {
                for j in 0..3 {
                    jtj[i][j] += row[i] * row[j];
                }
                jtr[i] -= row[i] * res;
            }
        }
        let Some(step) = solve3(jtj, jtr) else { break };
        cx += step[0];
        cy += step[1];
        r += step[2];
        let size = step[0].abs().max(step[1].abs()).max(step[2].abs());
        if size <= T::epsilon() * T::lit(16.0) * (T::one() + r) {
            break;
        }
    }
    if !(r > T::zero()) {
        return Err(Error::DegenerateFit("refinement produced a non-positive radius".into()));
    }

    let mut sq = T::zero();
    for &(a, b) in &planar {
        let d = (a - cx).hypot(b - cy) - r;
        sq += d * d;
    }
    let center = centroid + u * (cx * scale) + v * (cy * scale);
    // Orient the normal by the traversal direction of the input order.
    let mut turning = Vec3::zeros();
    for w in points.windows(2) {
        turning += (w[0] - center).cross(w[1] - center);
    }
    if turning.dot(normal) < T::zero() {
        normal = -normal;
    }
    Ok(CircleFit {
        center,
        radius: r * scale,
        normal,
        rms_residual: (sq / n_t).sqrt() * scale,
    })
}

/// Gaussian elimination with partial pivoting on a 3×3 system.
fn solve3<T: Real>(mut a: [[T; 3]; 3], mut b: [T; 3]) -> Option<[T; 3]> {
    let norm = a.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()));
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if !(a[piv][col].abs() > norm * T::epsilon()) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] = a[row][k] - f * a[col][k];
            }
            b[row] = b[row] - f * b[col];
        }
    }
    let mut x = [T::zero(); 3];
    for i in (0..3).rev() {
        let s: T = (i + 1..3).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Bend angle from the circle through the tip markers, per frame.
///
/// Frames with fewer than three visible tip markers are skipped; collinear
/// markers give angle 0.
pub fn bending_angle_series<T: Real>(traj: &MocapTrajectory<T>, tip_ids: &[String], arc_length: T) -> Result<Vec<(T, T)>> {
    if !(arc_length > T::zero()) {
        return Err(Error::invalid("arc length must be positive"));
    }
    let mut series = Vec::new();
    for f in &traj.frames {
        let pts: Vec<Vec3<T>> = tip_ids.iter().filter_map(|id| f.marker(id)).collect();
        if pts.len() < 3 {
            continue;
        }
        let angle = match fit_circle_3d(&pts) {
            Ok(fit) => arc_length / fit.radius,
            Err(Error::DegenerateFit(_)) => T::zero(),
            Err(e) => return Err(e),
        };
        series.push((f.time, angle));
    }
    if series.is_empty() {
        return Err(Error::NoSolution("no frame has three or more tip markers".into()));
    }
    Ok(series)
}

/// Rigid map from mocap coordinates into the arm frame: `origin` goes to
/// zero and `axis` (the arm's central axis) to +Z.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameAlignment<T> {
    pub origin: Vec3<T>,
    pub axis: Vec3<T>,
}

impl<T: Real> Default for FrameAlignment<T> {
    fn default() -> Self {
        Self {
            origin: Vec3::zeros(),
            axis: Vec3::unit_z(),
        }
    }
}

impl<T: Real> FrameAlignment<T> {
    pub fn rotation(&self) -> Result<Mat3<T>> {
        let a = self
            .axis
            .normalized()
            .ok_or_else(|| Error::invalid("alignment axis must be non-zero"))?;
        let z = Vec3::unit_z();
        let c = a.dot(z).max(-T::one()).min(T::one());
        let k = a.cross(z);
        let s = k.norm();
        if s <= T::lit(1e-15) {
            return Ok(if c > T::zero() {
                Mat3::identity()
            } else {
                Mat3::rot_y(T::PI())
            });
        }
        Ok(Mat3::axis_angle(k * (T::one() / s), s.atan2(c)))
    }

    pub fn apply(&self, rot: &Mat3<T>, p: Vec3<T>) -> Vec3<T> {
        rot.mul_vec(p - self.origin)
    }
}

/// Positions of one marker, in the arm frame, for every frame it is visible.
pub fn tip_cloud<T: Real>(traj: &MocapTrajectory<T>, marker: &str, alignment: &FrameAlignment<T>) -> Result<PointCloud<T>> {
    let rot = alignment.rotation()?;
    let pts: Vec<Vec3<T>> = traj
        .frames
        .iter()
        .filter_map(|f| f.marker(marker))
        .map(|p| alignment.apply(&rot, p))
        .collect();
    if pts.is_empty() {
        return Err(Error::invalid(format!("marker '{marker}' never visible")));
    }
    PointCloud::new(pts)
}

/// Vertical (arm-frame Z) position of one marker over time.
pub fn height_series<T: Real>(traj: &MocapTrajectory<T>, marker: &str, alignment: &FrameAlignment<T>) -> Result<Vec<(T, T)>> {
    let rot = alignment.rotation()?;
    let s: Vec<(T, T)> = traj
        .frames
        .iter()
        .filter_map(|f| f.marker(marker).map(|p| (f.time, alignment.apply(&rot, p).z)))
        .collect();
    if s.is_empty() {
        return Err(Error::invalid(format!("marker '{marker}' never visible")));
    }
    Ok(s)
}

/// Two-column series CSV (`time_s,<value>`), value scaled by `scale`.
pub fn write_series_csv<T: Real, W: Write>(series: &[(T, T)], value_column: &str, scale: T, writer: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    writeln!(w, "time_s,{value_column}")?;
    for &(t, v) in series {
        writeln!(w, "{},{}", crate::io::fmt_sig(t), crate::io::fmt_sig(v * scale))?;
    }
    w.flush()?;
    Ok(())
}
