//! Piecewise-constant-curvature geometry.
//!
//! A segment bent into a circular arc is described by its curvature `kappa`
//! (always non-negative), the angle `phi` of its bending plane measured from
//! the base x axis, and its arc length. The base frame has z along the
//! unbent backbone.

use crate::error::{Error, Result};
use crate::geom::{Mat3, RigidTransform, Vec3};
use crate::scalar::{wrap_angle, Real};

/// Below this `|κℓ|` the closed-form arc expressions switch to series.
const SERIES_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArcParams<T> {
    kappa: T,
    phi: T,
    length: T,
}

impl<T: Real> ArcParams<T> {
    /// Builds a validated arc. A negative curvature is folded into the
    /// bending-plane angle (`phi + π`), so the stored curvature is never
    /// negative.
    pub fn new(kappa: T, phi: T, length: T) -> Result<Self> {
        if !(kappa.is_finite() && phi.is_finite() && length.is_finite()) {
            return Err(Error::invalid("arc parameters must be finite"));
        }
        if length <= T::zero() {
            return Err(Error::invalid(format!("arc length must be positive, got {length}")));
        }
        let (kappa, phi) = if kappa < T::zero() {
            (-kappa, phi + T::PI())
        } else {
            (kappa, phi)
        };
        if kappa * length >= T::two_pi() {
            return Err(Error::GeometryViolation(format!(
                "bend angle {} rad closes a full loop",
                kappa * length
            )));
        }
        Ok(Self {
            kappa,
            phi: wrap_angle(phi),
            length,
        })
    }

    pub fn straight(length: T) -> Result<Self> {
        Self::new(T::zero(), T::zero(), length)
    }

    /// Arc with total bend angle `theta` spread over `length`.
    pub fn from_bend(theta: T, phi: T, length: T) -> Result<Self> {
        if length <= T::zero() {
            return Err(Error::invalid(format!("arc length must be positive, got {length}")));
        }
        Self::new(theta / length, phi, length)
    }

    pub fn kappa(&self) -> T {
        self.kappa
    }

    pub fn phi(&self) -> T {
        self.phi
    }

    pub fn length(&self) -> T {
        self.length
    }

    /// Total bend angle κℓ.
    pub fn bend_angle(&self) -> T {
        self.kappa * self.length
    }

    /// The same arc truncated to arc length `s` from the base.
    pub fn truncated(&self, s: T) -> Result<Self> {
        Self::new(self.kappa, self.phi, s)
    }

    /// In-plane tip offsets `((1 − cos κs)/κ, sin κs / κ)` for arc length `s`.
    fn planar_offsets(&self, s: T) -> (T, T) {
        let ks = self.kappa * s;
        if ks.abs() < T::lit(SERIES_THRESHOLD) {
            let ks2 = ks * ks;
            let lateral = s * ks / T::lit(2.0) * (T::one() - ks2 / T::lit(12.0));
            let axial = s * (T::one() - ks2 / T::lit(6.0));
            (lateral, axial)
        } else {
            ((T::one() - ks.cos()) / self.kappa, ks.sin() / self.kappa)
        }
    }

    fn point_at(&self, s: T) -> Vec3<T> {
        let (lateral, axial) = self.planar_offsets(s);
        let (sp, cp) = self.phi.sin_cos();
        Vec3::new(lateral * cp, lateral * sp, axial)
    }
}

/// Base-to-tip frame of a constant-curvature arc.
pub fn arc_transform<T: Real>(arc: &ArcParams<T>) -> RigidTransform<T> {
    let rz = Mat3::rot_z(arc.phi);
    let rotation = rz * Mat3::rot_y(arc.bend_angle()) * rz.transpose();
    RigidTransform::new(rotation, arc.point_at(arc.length))
}

/// `n` backbone points equally spaced in arc length, base first.
pub fn arc_points<T: Real>(arc: &ArcParams<T>, n: usize) -> Result<Vec<Vec3<T>>> {
    if n < 2 {
        return Err(Error::invalid(format!("arc_points needs n >= 2, got {n}")));
    }
    let step = arc.length / T::from_usize_lossy(n - 1);
    let mut pts: Vec<Vec3<T>> = (0..n - 1)
        .map(|i| arc.point_at(step * T::from_usize_lossy(i)))
        .collect();
    // Last point is exactly the transform translation.
    pts.push(arc_transform(arc).translation);
    Ok(pts)
}

/// Serial composition of arcs, base to tip.
pub fn compose_chain<T: Real>(arcs: &[ArcParams<T>]) -> Result<RigidTransform<T>> {
    if arcs.is_empty() {
        return Err(Error::invalid("compose_chain needs at least one arc"));
    }
    Ok(arcs
        .iter()
        .fold(RigidTransform::identity(), |acc, a| acc.then(&arc_transform(a))))
}

/// Angular placement of the tendon channels around the backbone.
#[derive(Clone, Debug, PartialEq)]
pub struct TendonLayout<T> {
    pitch_radius: T,
    angles: Vec<T>,
}

impl<T: Real> TendonLayout<T> {
    pub fn new(pitch_radius: T, angles: Vec<T>) -> Result<Self> {
        if !(pitch_radius > T::zero() && pitch_radius.is_finite()) {
            return Err(Error::invalid(format!(
                "tendon pitch radius must be positive, got {pitch_radius}"
            )));
        }
        if angles.is_empty() {
            return Err(Error::invalid("tendon layout needs at least one tendon"));
        }
        let angles: Vec<T> = angles.into_iter().map(wrap_angle).collect();
        let tol = T::lit(1e-9);
        for i in 0..angles.len() {
            for j in i + 1..angles.len() {
                if crate::scalar::angle_distance(angles[i], angles[j]) < tol {
                    return Err(Error::invalid(format!(
                        "tendons {i} and {j} share the angular position {}",
                        angles[i]
                    )));
                }
            }
        }
        Ok(Self {
            pitch_radius,
            angles,
        })
    }

    /// `count` tendons evenly spaced starting at angle 0.
    pub fn symmetric(pitch_radius: T, count: usize) -> Result<Self> {
        let n = T::from_usize_lossy(count);
        let angles = (0..count)
            .map(|i| T::two_pi() * T::from_usize_lossy(i) / n)
            .collect();
        Self::new(pitch_radius, angles)
    }

    /// Three tendons at 0, 2π/3, 4π/3.
    pub fn three(pitch_radius: T) -> Result<Self> {
        Self::symmetric(pitch_radius, 3)
    }

    pub fn pitch_radius(&self) -> T {
        self.pitch_radius
    }

    pub fn angles(&self) -> &[T] {
        &self.angles
    }

    pub fn count(&self) -> usize {
        self.angles.len()
    }

    pub fn check_fits(&self, outer_radius: T) -> Result<()> {
        if self.pitch_radius >= outer_radius {
            return Err(Error::GeometryViolation(format!(
                "tendon pitch radius {} is not inside the segment radius {outer_radius}",
                self.pitch_radius
            )));
        }
        Ok(())
    }
}

/// Path length of every tendon along a bent segment: `ℓ(1 − κ d cos(φ − ψᵢ))`.
pub fn tendon_lengths<T: Real>(arc: &ArcParams<T>, layout: &TendonLayout<T>) -> Result<Vec<T>> {
    let kd = arc.kappa * layout.pitch_radius;
    if kd >= T::one() {
        return Err(Error::GeometryViolation(format!(
            "κ·d = {kd} >= 1: tendon channel would fold through the backbone"
        )));
    }
    Ok(layout
        .angles
        .iter()
        .map(|&psi| arc.length * (T::one() - kd * (arc.phi - psi).cos()))
        .collect())
}

/// Arc reached by shortening tendons by `pulls` (mm).
///
/// Tendons with an exactly zero pull are left free and impose nothing; the
/// remaining ones must agree on a single arc. With one constrained tendon the
/// segment bends straight toward it.
pub fn arc_from_pulls<T: Real>(pulls: &[T], layout: &TendonLayout<T>, length: T) -> Result<ArcParams<T>> {
    if pulls.len() != layout.count() {
        return Err(Error::invalid(format!(
            "{} pulls given for a layout with {} tendons",
            pulls.len(),
            layout.count()
        )));
    }
    if length <= T::zero() {
        return Err(Error::invalid("segment length must be positive"));
    }
    if pulls.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("tendon pulls must be finite"));
    }
    let scale = layout.pitch_radius * length;
    // Unknowns: a = κ cos φ, b = κ sin φ. Each constrained tendon gives
    // d ℓ (a cos ψ + b sin ψ) = δ.
    let (mut m00, mut m01, mut m11, mut r0, mut r1) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
    let mut active = Vec::new();
    for (&delta, &psi) in pulls.iter().zip(&layout.angles) {
        if delta == T::zero() {
            continue;
        }
        let (s, c) = psi.sin_cos();
        m00 += c * c;
        m01 += c * s;
        m11 += s * s;
        r0 += c * delta / scale;
        r1 += s * delta / scale;
        active.push((delta, c, s));
    }
    if active.is_empty() {
        return ArcParams::straight(length);
    }
    let (a, b) = pseudo_solve_2x2(m00, m01, m11, r0, r1);
    let tol = T::lit(1e-9) * (T::one() + pulls.iter().fold(T::zero(), |m, p| m.max(p.abs())));
    for &(delta, c, s) in &active {
        let predicted = scale * (a * c + b * s);
        if (predicted - delta).abs() > tol {
            return Err(Error::NoSolution(format!(
                "pulls {:?} are not produced by any constant-curvature arc",
                pulls.iter().map(|p| p.as_f64()).collect::<Vec<_>>()
            )));
        }
    }
    let kappa = a.hypot(b);
    let phi = if kappa > T::zero() { b.atan2(a) } else { T::zero() };
    if kappa * layout.pitch_radius >= T::one() {
        return Err(Error::GeometryViolation(format!(
            "pulls require κ·d = {} >= 1",
            kappa * layout.pitch_radius
        )));
    }
    ArcParams::new(kappa, phi, length)
}

/// Minimum-norm solution of the symmetric system `[m00 m01; m01 m11] x = r`.
fn pseudo_solve_2x2<T: Real>(m00: T, m01: T, m11: T, r0: T, r1: T) -> (T, T) {
    let det = m00 * m11 - m01 * m01;
    let trace = m00 + m11;
    if det.abs() > T::lit(1e-12) * trace * trace {
        return ((m11 * r0 - m01 * r1) / det, (m00 * r1 - m01 * r0) / det);
    }
    // Rank one: M = trace · u uᵀ, pseudo-inverse = u uᵀ / trace.
    if trace <= T::zero() {
        return (T::zero(), T::zero());
    }
    let (ux, uy) = if m00 >= m11 {
        let n = m00.hypot(m01);
        (m00 / n, m01 / n)
    } else {
        let n = m01.hypot(m11);
        (m01 / n, m11 / n)
    };
    let proj = (ux * r0 + uy * r1) / trace;
    (ux * proj, uy * proj)
}

/// Per-segment tendon pull displacements (mm).
#[derive(Clone, Debug, PartialEq)]
pub struct ActuationCommand<T> {
    pulls: Vec<Vec<T>>,
}

impl<T: Real> ActuationCommand<T> {
    /// Validates pulls against `delta_max`. Every pull must be in
    /// `[0, delta_max]` and no segment may have all of its tendons pulled.
    pub fn new(pulls: Vec<Vec<T>>, delta_max: T) -> Result<Self> {
        for (seg, p) in pulls.iter().enumerate() {
            for (i, &d) in p.iter().enumerate() {
                if !(d >= T::zero() && d <= delta_max) {
                    return Err(Error::invalid(format!(
                        "segment {seg} tendon {i}: pull {d} mm outside [0, {delta_max}]"
                    )));
                }
            }
            let active = p.iter().filter(|&&d| d > T::zero()).count();
            if p.len() >= 3 && active == p.len() {
                return Err(Error::invalid(format!(
                    "segment {seg}: all {} tendons pulled (antagonistic command)",
                    p.len()
                )));
            }
        }
        Ok(Self { pulls })
    }

    /// No pulls on `segments` segments of `tendons` tendons each.
    pub fn idle(segments: usize, tendons: usize) -> Self {
        Self {
            pulls: vec![vec![T::zero(); tendons]; segments],
        }
    }

    /// A single tendon pulled by `delta` on one segment.
    pub fn single(segments: usize, tendons: usize, segment: usize, tendon: usize, delta: T) -> Result<Self> {
        let mut pulls = vec![vec![T::zero(); tendons]; segments];
        *pulls
            .get_mut(segment)
            .and_then(|p| p.get_mut(tendon))
            .ok_or_else(|| Error::invalid(format!("no tendon {tendon} on segment {segment}")))? = delta;
        Self::new(pulls, T::infinity())
    }

    pub fn segments(&self) -> usize {
        self.pulls.len()
    }

    pub fn segment(&self, i: usize) -> &[T] {
        &self.pulls[i]
    }

    pub fn pulls(&self) -> &[Vec<T>] {
        &self.pulls
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: Vec3<f64>, b: Vec3<f64>, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn straight_arc_is_translation() {
        let t = arc_transform(&ArcParams::new(0.0, 0.0, 100.0).unwrap());
        assert!(t.rotation.frobenius_distance(&Mat3::identity()) < 1e-15);
        assert!(close(t.translation, Vec3::new(0.0, 0.0, 100.0), 1e-12));
    }

    #[test]
    fn quarter_circle() {
        let t = arc_transform(&ArcParams::new(PI / 200.0, 0.0, 100.0).unwrap());
        let r = 200.0 / PI;
        assert!(close(t.translation, Vec3::new(r, 0.0, r), 1e-9));
        // tangent (third column) now points along +x
        assert!(close(t.rotation.column(2), Vec3::new(1.0, 0.0, 0.0), 1e-12));
        let t = arc_transform(&ArcParams::new(PI / 200.0, PI / 2.0, 100.0).unwrap());
        assert!(close(t.translation, Vec3::new(0.0, r, r), 1e-9));
    }

    #[test]
    fn negative_curvature_folds_into_phi() {
        let a = ArcParams::new(-0.01, 0.0, 50.0).unwrap();
        assert_eq!(a.kappa(), 0.01);
        assert!((a.phi() - PI).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_arcs() {
        assert!(ArcParams::new(0.0, 0.0, 0.0_f64).is_err());
        assert!(matches!(
            ArcParams::new(0.1, 0.0, 70.0_f64),
            Err(Error::GeometryViolation(_))
        ));
    }

    #[test]
    fn arc_points_straight_and_endpoints() {
        let pts = arc_points(&ArcParams::straight(100.0).unwrap(), 3).unwrap();
        assert!(close(pts[1], Vec3::new(0.0, 0.0, 50.0), 1e-12));
        let q = ArcParams::new(PI / 200.0, 0.0, 100.0).unwrap();
        let pts = arc_points(&q, 2).unwrap();
        assert_eq!(pts[0], Vec3::zeros());
        assert_eq!(pts[1], arc_transform(&q).translation);
        assert!(arc_points(&q, 1).is_err());
    }

    #[test]
    fn chain_of_quarters_is_semicircle() {
        let q = ArcParams::new(PI / 200.0, 0.0, 100.0).unwrap();
        let t = compose_chain(&[q, q]).unwrap();
        assert!(close(t.translation, Vec3::new(400.0 / PI, 0.0, 0.0), 1e-9));
        let s = ArcParams::straight(100.0).unwrap();
        assert!(close(compose_chain(&[s, s]).unwrap().translation, Vec3::new(0.0, 0.0, 200.0), 1e-12));
        assert!(compose_chain::<f64>(&[]).is_err());
    }

    #[test]
    fn tendon_length_examples() {
        let layout = TendonLayout::<f64>::three(6.0).unwrap();
        let l = tendon_lengths(&ArcParams::straight(100.0).unwrap(), &layout).unwrap();
        assert!(l.iter().all(|&x| (x - 100.0).abs() < 1e-12));
        let l = tendon_lengths(&ArcParams::new(0.005, 0.0, 100.0).unwrap(), &layout).unwrap();
        assert!((l[0] - 97.0).abs() < 1e-9);
        assert!((l[1] - 101.5).abs() < 1e-9 && (l[2] - 101.5).abs() < 1e-9);
        assert!(matches!(
            tendon_lengths(&ArcParams::new(0.2, 0.0, 10.0).unwrap(), &layout),
            Err(Error::GeometryViolation(_))
        ));
    }

    #[test]
    fn single_pull_bends_toward_tendon() {
        let layout = TendonLayout::three(6.0).unwrap();
        let arc = arc_from_pulls(&[0.0, 3.0, 0.0], &layout, 100.0).unwrap();
        assert!((arc.phi() - 2.0 * PI / 3.0).abs() < 1e-12);
        assert!((arc.kappa() - 3.0 / 600.0).abs() < 1e-15);
        let l = tendon_lengths(&arc, &layout).unwrap();
        assert!((l[1] - 97.0).abs() < 1e-9);
    }

    #[test]
    fn pulls_without_arc_are_rejected() {
        let layout = TendonLayout::three(6.0).unwrap();
        assert!(matches!(
            arc_from_pulls(&[2.0, 2.0, 2.0], &layout, 100.0),
            Err(Error::NoSolution(_))
        ));
        let zero = arc_from_pulls(&[0.0, 0.0, 0.0], &layout, 100.0).unwrap();
        assert_eq!(zero.kappa(), 0.0);
    }

    #[test]
    fn command_validation() {
        assert!(ActuationCommand::new(vec![vec![45.0, 0.0, 0.0]], 50.0).is_ok());
        assert!(ActuationCommand::new(vec![vec![45.0, 10.0, 0.0]], 50.0).is_ok());
        assert!(ActuationCommand::new(vec![vec![45.0, 10.0, 1.0]], 50.0).is_err());
        assert!(ActuationCommand::new(vec![vec![-1.0, 0.0, 0.0]], 50.0).is_err());
        assert!(ActuationCommand::new(vec![vec![60.0, 0.0, 0.0]], 50.0).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let t = arc_transform(&ArcParams::new(std::f32::consts::PI / 200.0, 0.0, 100.0).unwrap());
        assert!((t.translation.x - 63.662).abs() < 1e-3);
    }
}
