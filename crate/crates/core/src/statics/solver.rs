//! Tendon-displacement-controlled equilibrium by augmented Lagrangian.
//!
//! Each pulled tendon gives an inequality `path(x) ≤ ℓ − δ` (a tendon can go
//! slack but never stretch). The outer loop updates the tension multipliers,
//! the inner loop minimizes the augmented energy with BFGS in variables scaled
//! by the elastic stiffness of each sub-arc.

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::kinematics::ActuationCommand;
use crate::optim::{minimize_bfgs, polish_newton, BfgsOptions, Objective};
use crate::scalar::{angle_distance, Real};

use super::ccfit::{ccfit_angle_in_model, MarkerSpan};
use super::model::{LoadCase, RodModel, RodState, SegmentSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct SolverSettings<T> {
    /// Sub-arcs per segment.
    pub subdivisions: usize,
    /// Max-norm of the Lagrangian gradient (N·mm per unit state).
    pub gradient_tol: T,
    /// Complementarity / feasibility tolerance on tendon lengths, mm.
    pub constraint_tol: T,
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
    /// Base heading from −Z toward the bending direction, rad.
    pub mount_angle: T,
    /// Segment carrying the tip markers.
    pub marker_segment: usize,
    pub marker_count: usize,
    pub marker_span: MarkerSpan<T>,
}

impl<T: Real> Default for SolverSettings<T> {
    fn default() -> Self {
        Self {
            subdivisions: 20,
            gradient_tol: T::lit(1e-8),
            constraint_tol: T::lit(1e-6),
            max_outer_iterations: 50,
            max_inner_iterations: 5000,
            mount_angle: T::zero(),
            marker_segment: 0,
            marker_count: 5,
            marker_span: MarkerSpan::WholeSegment,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EquilibriumResult<T> {
    /// Tangent turn at the chain tip relative to the mount, rad.
    pub tip_angle: T,
    /// Circle-fit bend angle of the marker segment, rad.
    pub ccfit_angle: T,
    /// Rise of the marker segment's distal end over the unactuated pose, mm.
    pub vertical_displacement: T,
    /// Tension per segment and tendon, N (zero for free tendons).
    pub tendon_tensions: Vec<Vec<T>>,
    pub state: RodState<T>,
    /// Std. dev. of marker-segment curvature over its mean magnitude.
    pub nonuniformity: T,
    pub segment_ccfit_angles: Vec<T>,
    pub segment_rise: Vec<T>,
    /// Orientation of the bending plane about Z, rad.
    pub plane_angle: T,
    /// Backbone nodes in the world frame, mount first.
    pub shape: Vec<Vec3<T>>,
    pub energy: T,
    pub kkt_residual: T,
    pub constraint_violation: T,
    pub outer_iterations: usize,
}

struct Constraint<T> {
    seg: usize,
    tendon: usize,
    free_length: T,
    grad: Vec<T>,
}

/// Augmented energy in scaled variables `u = x · scale`.
struct Augmented<'a, T> {
    model: &'a RodModel<T>,
    constraints: &'a [Constraint<T>],
    multipliers: &'a [T],
    penalty: T,
    scale: &'a [T],
}

impl<T: Real> Augmented<'_, T> {
    fn unscale(&self, u: &[T]) -> Vec<T> {
        u.iter().zip(self.scale).map(|(&v, &s)| v / s).collect()
    }
}

impl<T: Real> Objective<T> for Augmented<'_, T> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn eval(&self, u: &[T], grad: &mut [T]) -> T {
        let x = self.unscale(u);
        let mut value = self.model.energy_and_gradient(&x, grad);
        for (c, &lambda) in self.constraints.iter().zip(self.multipliers) {
            let h = path_from_grad(&c.grad, &x, self.model, c) - c.free_length;
            let shifted = lambda + self.penalty * h;
            if shifted > T::zero() {
                value += (shifted * shifted - lambda * lambda) / (T::lit(2.0) * self.penalty);
                for (g, &dg) in grad.iter_mut().zip(&c.grad) {
                    *g += shifted * dg;
                }
            } else {
                value -= lambda * lambda / (T::lit(2.0) * self.penalty);
            }
        }
        for (g, &s) in grad.iter_mut().zip(self.scale) {
            *g /= s;
        }
        value
    }
}

fn path_from_grad<T: Real>(grad: &[T], x: &[T], model: &RodModel<T>, c: &Constraint<T>) -> T {
    // path = Σ Δs + grad·x, and Σ Δs is the segment rest length.
    let rest = model.segments()[c.seg].length;
    rest + grad.iter().zip(x).map(|(&g, &v)| g * v).sum::<T>()
}

pub struct Solver<T> {
    pub settings: SolverSettings<T>,
}

impl<T: Real> Default for Solver<T> {
    fn default() -> Self {
        Self {
            settings: SolverSettings::default(),
        }
    }
}

/// Equilibrium with default settings.
pub fn solve_equilibrium<T: Real>(
    chain: &[SegmentSpec<T>],
    command: &ActuationCommand<T>,
    load: &LoadCase<T>,
) -> Result<EquilibriumResult<T>> {
    Solver::default().solve(chain, command, load)
}

impl<T: Real> Solver<T> {
    pub fn new(settings: SolverSettings<T>) -> Self {
        Self { settings }
    }

    /// Bending plane shared by all pulled tendons, or an error if they do not
    /// lie in one plane.
    fn bending_plane(chain: &[SegmentSpec<T>], command: &ActuationCommand<T>) -> Result<T> {
        let mut plane: Option<T> = None;
        let tol = T::lit(1e-9);
        for (k, seg) in chain.iter().enumerate() {
            for (i, &delta) in command.segment(k).iter().enumerate() {
                if delta <= T::zero() {
                    continue;
                }
                let psi = seg.layout.angles()[i];
                match plane {
                    None => plane = Some(psi),
                    Some(p) => {
                        let d = angle_distance(psi, p);
                        if d > tol && (d - T::PI()).abs() > tol {
                            return Err(Error::invalid(format!(
                                "segment {k} tendon {i} is not in the bending plane of the other pulled tendons; \
                                 only planar commands are supported"
                            )));
                        }
                    }
                }
            }
        }
        Ok(plane.unwrap_or_else(T::zero))
    }

    fn validate(&self, chain: &[SegmentSpec<T>], command: &ActuationCommand<T>) -> Result<()> {
        let s = &self.settings;
        if s.subdivisions < 4 {
            return Err(Error::invalid("need at least 4 sub-arcs per segment"));
        }
        if s.marker_segment >= chain.len() {
            return Err(Error::invalid(format!(
                "marker segment {} outside a chain of {} segments",
                s.marker_segment,
                chain.len()
            )));
        }
        if s.marker_count < 3 {
            return Err(Error::invalid("circle fit needs at least 3 markers"));
        }
        if command.segments() != chain.len() {
            return Err(Error::invalid(format!(
                "command covers {} segments, chain has {}",
                command.segments(),
                chain.len()
            )));
        }
        for (k, seg) in chain.iter().enumerate() {
            let pulls = command.segment(k);
            if pulls.len() != seg.layout.count() {
                return Err(Error::invalid(format!(
                    "segment {k}: {} pulls for {} tendons",
                    pulls.len(),
                    seg.layout.count()
                )));
            }
            if pulls.iter().any(|&d| d < T::zero()) {
                return Err(Error::invalid(format!("segment {k}: negative pull")));
            }
            if pulls.len() >= 3 && pulls.iter().all(|&d| d > T::zero()) {
                return Err(Error::invalid(format!("segment {k}: antagonistic command")));
            }
            if pulls.iter().any(|&d| d >= seg.length) {
                return Err(Error::invalid(format!("segment {k}: pull exceeds the segment length")));
            }
        }
        Ok(())
    }

    pub fn solve(
        &self,
        chain: &[SegmentSpec<T>],
        command: &ActuationCommand<T>,
        load: &LoadCase<T>,
    ) -> Result<EquilibriumResult<T>> {
        self.validate(chain, command)?;
        let plane = Self::bending_plane(chain, command)?;
        let s = &self.settings;
        let model = RodModel::new(chain, load, s.subdivisions, s.mount_angle, plane)?;

        let (x, tensions_flat, constraints, outer, kkt, violation, energy) = self.minimize(&model, command)?;

        // Unactuated reference pose under the same load.
        let idle = ActuationCommand::idle(chain.len(), 0);
        let reference = if constraints.is_empty() {
            x.clone()
        } else {
            let (x_ref, ..) = self.minimize(&model, &idle)?;
            x_ref
        };

        let n = s.subdivisions;
        let m = model.sub_arcs();
        let mut tendon_tensions: Vec<Vec<T>> = chain.iter().map(|seg| vec![T::zero(); seg.layout.count()]).collect();
        for (c, &t) in constraints.iter().zip(&tensions_flat) {
            tendon_tensions[c.seg][c.tendon] = t;
        }

        let (pts, headings) = model.nodes(&x);
        let (ref_pts, _) = model.nodes(&reference);
        let segment_rise: Vec<T> = (1..=chain.len()).map(|k| pts[k * n].z - ref_pts[k * n].z).collect();
        let segment_ccfit_angles = (0..chain.len())
            .map(|k| ccfit_angle_in_model(&model, &x, k, s.marker_count, s.marker_span))
            .collect::<Result<Vec<_>>>()?;

        let kseg = s.marker_segment;
        let kappa = &x[kseg * n..(kseg + 1) * n];
        let nt = T::from_usize_lossy(n);
        let mean = kappa.iter().copied().sum::<T>() / nt;
        let mean_abs = kappa.iter().map(|k| k.abs()).sum::<T>() / nt;
        let var = kappa.iter().map(|&k| (k - mean) * (k - mean)).sum::<T>() / nt;
        let nonuniformity = if mean_abs > T::zero() { var.sqrt() / mean_abs } else { T::zero() };

        Ok(EquilibriumResult {
            tip_angle: headings[m] - s.mount_angle,
            ccfit_angle: segment_ccfit_angles[kseg],
            vertical_displacement: segment_rise[kseg],
            tendon_tensions,
            state: RodState::from_vector(&x, n),
            nonuniformity,
            segment_ccfit_angles,
            segment_rise,
            plane_angle: plane,
            shape: pts.iter().map(|&p| model.to_world(p)).collect(),
            energy,
            kkt_residual: kkt,
            constraint_violation: violation,
            outer_iterations: outer,
        })
    }

    /// Runs the augmented-Lagrangian loop. Returns the state, per-constraint
    /// tensions, constraints, outer iterations, KKT residual, worst
    /// complementarity violation and elastic+gravity energy.
    #[allow(clippy::type_complexity)]
    fn minimize(
        &self,
        model: &RodModel<T>,
        command: &ActuationCommand<T>,
    ) -> Result<(Vec<T>, Vec<T>, Vec<Constraint<T>>, usize, T, T, T)> {
        let s = &self.settings;
        let chain = model.segments();
        let n = s.subdivisions;
        let m = model.sub_arcs();

        let mut constraints = Vec::new();
        for (k, seg) in chain.iter().enumerate() {
            for (i, &delta) in command.pulls().get(k).map(|p| p.as_slice()).unwrap_or(&[]).iter().enumerate() {
                if delta > T::zero() {
                    constraints.push(Constraint {
                        seg: k,
                        tendon: i,
                        free_length: seg.length - delta,
                        grad: model.tendon_path_gradient(k, i),
                    });
                }
            }
        }

        // Initial guess: each pulled segment as the uniform arc that meets
        // its first constraint exactly, no strain.
        let mut x = vec![T::zero(); 2 * m];
        for c in &constraints {
            let start = c.seg * n;
            if x[start] != T::zero() {
                continue;
            }
            let d = model.tendon_offset(c.seg, c.tendon);
            if d.abs() > T::zero() {
                let seg = &chain[c.seg];
                let kappa = (seg.length - c.free_length) / (seg.length * d);
                x[start..start + n].iter_mut().for_each(|v| *v = kappa);
            }
        }

        let mut scale = vec![T::zero(); 2 * m];
        for (k, seg) in chain.iter().enumerate() {
            let ds = seg.length / T::from_usize_lossy(n);
            for j in k * n..(k + 1) * n {
                scale[j] = (seg.material.bending_stiffness * ds).sqrt();
                scale[m + j] = (seg.material.axial_stiffness * ds).sqrt();
            }
        }

        // Penalty sized so the constraint curvature is ~10× the (unit) elastic one.
        let mut penalty = constraints
            .iter()
            .map(|c| {
                let g2: T = c.grad.iter().zip(&scale).map(|(&g, &s)| (g / s) * (g / s)).sum();
                T::lit(10.0) / g2
            })
            .fold(T::infinity(), |a, b| a.min(b));
        if !penalty.is_finite() {
            penalty = T::one();
        }
        let mut multipliers = vec![T::zero(); constraints.len()];
        let mut u: Vec<T> = x.iter().zip(&scale).map(|(&v, &s)| v * s).collect();

        let max_scale = scale.iter().fold(T::zero(), |a, &b| a.max(b));
        let mut last_violation = T::infinity();
        let mut kkt = T::infinity();
        let mut grad = vec![T::zero(); 2 * m];
        for outer in 1..=s.max_outer_iterations {
            let aug = Augmented {
                model,
                constraints: &constraints,
                multipliers: &multipliers,
                penalty,
                scale: &scale,
            };
            // BFGS sees g/scale; this bounds the unscaled gradient by gradient_tol.
            let inner_tol = s.gradient_tol / max_scale.max(T::one());
            let opts = BfgsOptions {
                gradient_tol: inner_tol,
                max_iterations: s.max_inner_iterations,
            };
            let report = minimize_bfgs(&aug, &mut u, &opts);
            if report.gradient_norm > inner_tol {
                polish_newton(&aug, &mut u, inner_tol, 30);
            }
            x = aug.unscale(&u);

            // Complementarity measure with the multipliers used in this
            // round, then the first-order multiplier update.
            let mut violation = T::zero();
            for (c, lambda) in constraints.iter().zip(multipliers.iter_mut()) {
                let h = path_from_grad(&c.grad, &x, model, c) - c.free_length;
                violation = violation.max(h.max(-*lambda / penalty).abs());
                *lambda = (*lambda + penalty * h).max(T::zero());
            }
            let energy = model.energy_and_gradient(&x, &mut grad);
            for (c, &lambda) in constraints.iter().zip(&multipliers) {
                for (g, &dg) in grad.iter_mut().zip(&c.grad) {
                    *g += lambda * dg;
                }
            }
            kkt = grad.iter().fold(T::zero(), |a, g| a.max(g.abs()));
            if violation <= s.constraint_tol && kkt <= self.kkt_tolerance(energy) {
                return Ok((x, multipliers, constraints, outer, kkt, violation, energy));
            }
            if violation > s.constraint_tol && violation > T::lit(0.25) * last_violation {
                penalty *= T::lit(10.0);
            }
            last_violation = violation;
        }
        Err(Error::SolverFailure {
            iterations: s.max_outer_iterations,
            gradient_norm: kkt.as_f64(),
            constraint_violation: last_violation.as_f64(),
        })
    }

    /// Acceptable Lagrangian gradient at the returned state. Round-off in the
    /// energy sum bounds how small the gradient can get.
    fn kkt_tolerance(&self, energy: T) -> T {
        self.settings
            .gradient_tol
            .max(T::epsilon() * T::lit(1e4) * (T::one() + energy.abs()))
    }
}
