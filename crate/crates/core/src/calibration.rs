//! Material and workspace parameter fitting against measured endpoints.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::fmt_sig;
use crate::kinematics::ActuationCommand;
use crate::optim::solve_dense;
use crate::scalar::Real;
use crate::statics::{LoadCase, MaterialParams, SegmentSpec, Solver, SolverSettings};

pub const OBSERVATION_HEADER: [&str; 7] = [
    "material",
    "payload_g",
    "pull_mm",
    "angle_deg",
    "z_mm",
    "tension_n",
    "length_mm",
];

/// One measured operating point of a single segment pulled on tendon 0.
/// Missing targets are excluded from the fit.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation<T> {
    pub material: String,
    pub payload: T,
    pub pull: T,
    /// Circle-fit bend angle, rad.
    pub ccfit_angle: Option<T>,
    pub vertical_displacement: Option<T>,
    pub tension: Option<T>,
    pub segment_length: T,
}

impl<T: Real> Observation<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.payload >= T::zero()) || !self.payload.is_finite() {
            return Err(Error::invalid(format!("payload must be >= 0, got {}", self.payload)));
        }
        if !(self.pull > T::zero()) || !(self.segment_length > self.pull) {
            return Err(Error::invalid(format!(
                "pull must lie in (0, length), got {} for length {}",
                self.pull, self.segment_length
            )));
        }
        if let Some(a) = self.ccfit_angle {
            if !(a >= T::zero() && a <= T::PI()) {
                return Err(Error::invalid(format!("angle {a} rad outside [0, pi]")));
            }
        }
        if let Some(t) = self.tension {
            if !(t >= T::zero()) || !t.is_finite() {
                return Err(Error::invalid(format!("tension must be >= 0, got {t}")));
            }
        }
        if let Some(z) = self.vertical_displacement {
            if !z.is_finite() {
                return Err(Error::invalid("displacement is not finite"));
            }
        }
        if self.targets().next().is_none() {
            return Err(Error::invalid("observation has no target values"));
        }
        Ok(())
    }

    fn label(&self) -> String {
        format!("{} at {} g, {} mm pull", self.material, self.payload, self.pull)
    }

    /// Present targets as (quantity index, value); 0 angle, 1 displacement, 2 tension.
    fn targets(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        [self.ccfit_angle, self.vertical_displacement, self.tension]
            .into_iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
    }
}

/// Model output for one observation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction<T> {
    pub ccfit_angle: T,
    pub vertical_displacement: T,
    /// Includes the fitted tension offset.
    pub tension: T,
}

impl<T: Real> Prediction<T> {
    fn get(&self, quantity: usize) -> T {
        match quantity {
            0 => self.ccfit_angle,
            1 => self.vertical_displacement,
            _ => self.tension,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CalibrationResult<T> {
    pub material: MaterialParams<T>,
    /// Constant added to every predicted tension, N.
    pub tension_offset: T,
    pub observations: Vec<Observation<T>>,
    pub predictions: Vec<Prediction<T>>,
    /// Normalized residuals (predicted − target)/|target|, in observation
    /// order, angle then displacement then tension, absent targets skipped.
    pub residuals: Vec<T>,
    /// Root mean square of `residuals`.
    pub relative_residual_norm: T,
    pub initial_residual_norm: T,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct FitOptions<T> {
    pub solver: SolverSettings<T>,
    pub fit_offset: bool,
    pub initial_offset: T,
    pub max_iterations: usize,
    /// Stop once the parameter step is this small relative to the parameters.
    pub step_tol: T,
    pub initial_damping: T,
}

impl<T: Real> Default for FitOptions<T> {
    fn default() -> Self {
        Self {
            solver: SolverSettings::default(),
            fit_offset: true,
            initial_offset: T::zero(),
            max_iterations: 200,
            step_tol: T::lit(1e-8),
            initial_damping: T::lit(1e-3),
        }
    }
}

/// Initial material for a fit: EI = 500 N·mm², EA = 50 N, with the density
/// of `base`.
pub fn default_initial<T: Real>(base: &MaterialParams<T>) -> MaterialParams<T> {
    base.with_stiffness(T::lit(500.0), T::lit(50.0))
}

/// Fits EI, EA and a tension offset with default options.
pub fn fit_material<T: Real>(
    observations: &[Observation<T>],
    spec: &SegmentSpec<T>,
    initial: &MaterialParams<T>,
) -> Result<CalibrationResult<T>> {
    fit_material_with(observations, spec, initial, &FitOptions::default())
}

struct Problem<'a, T> {
    observations: &'a [Observation<T>],
    spec: &'a SegmentSpec<T>,
    base: &'a MaterialParams<T>,
    solver: Solver<T>,
}

impl<T: Real> Problem<'_, T> {
    /// Parameters: [ln EI, ln EA, offset].
    fn material(&self, p: &[T; 3]) -> MaterialParams<T> {
        self.base.with_stiffness(p[0].exp(), p[1].exp())
    }

    fn predict_one(&self, material: &MaterialParams<T>, offset: T, obs: &Observation<T>) -> Result<Prediction<T>> {
        let mut seg = self.spec.clone();
        seg.length = obs.segment_length;
        seg.material = material.clone();
        let tendons = seg.layout.count();
        let command = ActuationCommand::single(1, tendons, 0, 0, obs.pull)?;
        let load = LoadCase::new(obs.payload)?;
        let r = self.solver.solve(std::slice::from_ref(&seg), &command, &load)?;
        Ok(Prediction {
            ccfit_angle: r.ccfit_angle,
            vertical_displacement: r.vertical_displacement,
            tension: r.tendon_tensions[0][0] + offset,
        })
    }

    fn predict(&self, p: &[T; 3]) -> Result<Vec<Prediction<T>>> {
        let material = self.material(p);
        self.observations
            .par_iter()
            .enumerate()
            .map(|(index, obs)| {
                self.predict_one(&material, p[2], obs).map_err(|e| Error::Observation {
                    index,
                    label: obs.label(),
                    source: Box::new(e),
                })
            })
            .collect()
    }

    fn residuals(&self, preds: &[Prediction<T>]) -> Vec<T> {
        let mut r = Vec::new();
        for (obs, pred) in self.observations.iter().zip(preds) {
            for (q, target) in obs.targets() {
                r.push((pred.get(q) - target) / target.abs().max(T::epsilon()));
            }
        }
        r
    }

    fn offset_column(&self) -> Vec<T> {
        let mut col = Vec::new();
        for obs in self.observations {
            for (q, target) in obs.targets() {
                col.push(if q == 2 { T::one() / target.abs().max(T::epsilon()) } else { T::zero() });
            }
        }
        col
    }
}

fn rms<T: Real>(r: &[T]) -> T {
    if r.is_empty() {
        return T::zero();
    }
    (r.iter().map(|&v| v * v).sum::<T>() / T::from_usize_lossy(r.len())).sqrt()
}

fn half_sq<T: Real>(r: &[T]) -> T {
    r.iter().map(|&v| v * v).sum::<T>() * T::lit(0.5)
}

/// Levenberg-Marquardt fit of EI and EA (in log space) and optionally a
/// constant tension offset. Each residual evaluation is a full equilibrium
/// solve; observations are solved in parallel and gathered in input order.
///
/// A solver failure at the initial guess is returned with the offending
/// observation; a failure at a trial step only rejects that step.
pub fn fit_material_with<T: Real>(
    observations: &[Observation<T>],
    spec: &SegmentSpec<T>,
    initial: &MaterialParams<T>,
    options: &FitOptions<T>,
) -> Result<CalibrationResult<T>> {
    if observations.len() < 2 {
        return Err(Error::invalid(format!(
            "calibration needs at least 2 observations, got {}",
            observations.len()
        )));
    }
    let first = observations[0].payload;
    if observations.iter().all(|o| o.payload == first) {
        return Err(Error::invalid("calibration needs observations at 2 or more payloads"));
    }
    for (index, obs) in observations.iter().enumerate() {
        obs.validate().map_err(|e| Error::Observation {
            index,
            label: obs.label(),
            source: Box::new(e),
        })?;
    }
    initial.validate()?;
    spec.validate()?;

    let problem = Problem {
        observations,
        spec,
        base: initial,
        solver: Solver::new(options.solver.clone()),
    };
    let free: Vec<usize> = if options.fit_offset { vec![0, 1, 2] } else { vec![0, 1] };
    let mut p = [
        initial.bending_stiffness.ln(),
        initial.axial_stiffness.ln(),
        options.initial_offset,
    ];
    let mut preds = problem.predict(&p)?;
    let mut r = problem.residuals(&preds);
    let initial_norm = rms(&r);
    let mut cost = half_sq(&r);
    let mut lambda = options.initial_damping;
    let offset_col = problem.offset_column();
    let fd = T::lit(1e-4);
    let mut iterations = 0;

    'outer: while iterations < options.max_iterations {
        iterations += 1;
        // Central-difference Jacobian for the log-stiffness columns.
        let mut jac: Vec<Vec<T>> = Vec::with_capacity(free.len());
        for &k in &free {
            if k == 2 {
                jac.push(offset_col.clone());
                continue;
            }
            let mut plus = p;
            let mut minus = p;
            plus[k] += fd;
            minus[k] -= fd;
            let rp = problem.residuals(&problem.predict(&plus)?);
            let rm = problem.residuals(&problem.predict(&minus)?);
            jac.push(rp.iter().zip(&rm).map(|(&a, &b)| (a - b) / (fd + fd)).collect());
        }
        let nf = free.len();
        let mut jtj = vec![vec![T::zero(); nf]; nf];
        let mut jtr = vec![T::zero(); nf];
        for a in 0..nf {
            for b in 0..nf {
                jtj[a][b] = jac[a].iter().zip(&jac[b]).map(|(&x, &y)| x * y).sum();
            }
            jtr[a] = jac[a].iter().zip(&r).map(|(&x, &y)| x * y).sum();
        }
        loop {
            let mut damped = jtj.clone();
            for (a, row) in damped.iter_mut().enumerate() {
                row[a] += lambda * jtj[a][a].max(T::lit(1e-12));
            }
            let rhs: Vec<T> = jtr.iter().map(|&v| -v).collect();
            let Some(step) = solve_dense(damped, rhs) else {
                lambda *= T::lit(10.0);
                if lambda > T::lit(1e12) {
                    break 'outer;
                }
                continue;
            };
            let mut trial = p;
            for (&k, &s) in free.iter().zip(&step) {
                trial[k] += s;
            }
            let step_norm = step.iter().map(|&s| s * s).sum::<T>().sqrt();
            let p_norm = free.iter().map(|&k| p[k] * p[k]).sum::<T>().sqrt();
            let accepted = match problem.predict(&trial) {
                Ok(tp) => {
                    let tr = problem.residuals(&tp);
                    let tc = half_sq(&tr);
                    if tc < cost {
                        p = trial;
                        preds = tp;
                        r = tr;
                        cost = tc;
                        true
                    } else {
                        false
                    }
                }
                Err(e) if e.is_numerical() => false,
                Err(e) => return Err(e),
            };
            if step_norm <= options.step_tol * (T::one() + p_norm) {
                break 'outer;
            }
            if accepted {
                lambda = (lambda / T::lit(10.0)).max(T::lit(1e-12));
                break;
            }
            lambda *= T::lit(10.0);
            if lambda > T::lit(1e12) {
                break 'outer;
            }
        }
    }

    Ok(CalibrationResult {
        material: problem.material(&p),
        tension_offset: p[2],
        observations: observations.to_vec(),
        predictions: preds,
        relative_residual_norm: rms(&r),
        residuals: r,
        initial_residual_norm: initial_norm,
        iterations,
    })
}

/// Upper end of the bend-angle interval on which the planar constant-
/// curvature reach ℓ(1 − cos θ)/θ increases.
pub const THETA_REACH_LIMIT: f64 = 2.331;

fn reach_ratio<T: Real>(theta: T) -> T {
    if theta.abs() < T::lit(1e-4) {
        // (1 − cos θ)/θ = θ/2 − θ³/24 + …
        theta / T::lit(2.0) - theta * theta * theta / T::lit(24.0)
    } else {
        (T::one() - theta.cos()) / theta
    }
}

/// Bend angle whose constant-curvature planar reach equals `r_max`.
pub fn fit_theta_max<T: Real>(r_max: T, length: T) -> Result<T> {
    if !(length > T::zero()) || !length.is_finite() {
        return Err(Error::invalid(format!("length must be positive, got {length}")));
    }
    let hi_limit = T::lit(THETA_REACH_LIMIT);
    let top = length * reach_ratio(hi_limit);
    if !(r_max > T::zero()) || !(r_max < top) {
        return Err(Error::NoSolution(format!(
            "reach {r_max} mm outside (0, {top}) for a {length} mm segment"
        )));
    }
    let target = r_max / length;
    let (mut lo, mut hi) = (T::zero(), hi_limit);
    let tol = T::lit(1e-9).max(T::epsilon() * T::lit(4.0));
    while hi - lo > tol {
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if reach_ratio(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * T::lit(0.5))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow<T> {
    pub material: String,
    pub payload: T,
    pub pull: T,
    /// "angle_deg", "z_mm" or "tension_n".
    pub quantity: &'static str,
    pub target: T,
    pub predicted: T,
    pub relative_error: T,
}

/// Predicted against target for every present target value.
pub fn residual_report<T: Real>(result: &CalibrationResult<T>) -> Vec<ReportRow<T>> {
    let mut rows = Vec::new();
    for (obs, pred) in result.observations.iter().zip(&result.predictions) {
        for (q, target) in obs.targets() {
            let predicted = pred.get(q);
            let (quantity, scale) = match q {
                0 => ("angle_deg", T::lit(180.0) / T::PI()),
                1 => ("z_mm", T::one()),
                _ => ("tension_n", T::one()),
            };
            rows.push(ReportRow {
                material: obs.material.clone(),
                payload: obs.payload,
                pull: obs.pull,
                quantity,
                target: target * scale,
                predicted: predicted * scale,
                relative_error: (predicted - target) / target.abs().max(T::epsilon()),
            });
        }
    }
    rows
}

pub fn write_report_csv<T: Real, W: Write>(rows: &[ReportRow<T>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["material", "payload_g", "pull_mm", "quantity", "target", "predicted", "relative_error"])
        .map_err(csv_err)?;
    for row in rows {
        w.write_record([
            row.material.clone(),
            fmt_sig(row.payload),
            fmt_sig(row.pull),
            row.quantity.to_string(),
            fmt_sig(row.target),
            fmt_sig(row.predicted),
            fmt_sig(row.relative_error),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Reads observations. Columns after the seven required ones (such as a
/// source note) are ignored; empty target cells mean "not measured".
pub fn read_observations_csv<T: Real, R: Read>(reader: R) -> Result<Vec<Observation<T>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.len() < OBSERVATION_HEADER.len()
        || header.iter().zip(OBSERVATION_HEADER).any(|(a, b)| a.trim() != b)
    {
        return Err(Error::Format(format!(
            "observation header must start with `{}`, got `{}`",
            OBSERVATION_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let field = |k: usize| rec.get(k).unwrap_or("").trim();
        let num = |k: usize| -> Result<Option<T>> {
            let s = field(k);
            if s.is_empty() {
                return Ok(None);
            }
            let v: f64 = s.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column `{}`: `{s}` is not a number", OBSERVATION_HEADER[k]),
            })?;
            Ok(Some(T::lit(v)))
        };
        let required = |k: usize| -> Result<T> {
            num(k)?.ok_or_else(|| Error::Parse {
                line,
                message: format!("column `{}` is required", OBSERVATION_HEADER[k]),
            })
        };
        let material = field(0).to_string();
        if material.is_empty() {
            return Err(Error::Parse {
                line,
                message: "material is empty".into(),
            });
        }
        let obs = Observation {
            material,
            payload: required(1)?,
            pull: required(2)?,
            ccfit_angle: num(3)?.map(|a| a.to_radians()),
            vertical_displacement: num(4)?,
            tension: num(5)?,
            segment_length: required(6)?,
        };
        obs.validate().map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        out.push(obs);
    }
    if out.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no observations".into(),
        });
    }
    Ok(out)
}

pub fn write_observations_csv<T: Real, W: Write>(observations: &[Observation<T>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(OBSERVATION_HEADER).map_err(csv_err)?;
    let opt = |v: Option<T>| v.map(fmt_sig).unwrap_or_default();
    for o in observations {
        w.write_record([
            o.material.clone(),
            fmt_sig(o.payload),
            fmt_sig(o.pull),
            opt(o.ccfit_angle.map(|a| a.to_degrees())),
            opt(o.vertical_displacement),
            opt(o.tension),
            fmt_sig(o.segment_length),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
