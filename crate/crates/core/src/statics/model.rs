//! Discretized planar rod: elastic and gravitational energy, tendon paths.
//!
//! Each segment is split into `n` sub-arcs of rest length `Δs = ℓ/n`. Sub-arc
//! `j` turns the backbone tangent by `κⱼΔs` and has deformed length
//! `Δs(1 + εⱼ)`; within a sub-arc the backbone is an exact circular arc.
//! Positions live in the bending plane: the horizontal coordinate runs along
//! the plane direction, the vertical one is world Z (up). The backbone heading
//! is measured from −Z toward the plane direction, so a heading of zero hangs
//! straight down.

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::kinematics::TendonLayout;
use crate::scalar::{sinc, sinc_prime, Real};

/// Newtons per gram per (mm/s²).
const NEWTON_PER_GRAM_MM_S2: f64 = 1e-6;
/// Standard gravity in mm/s².
pub const STANDARD_GRAVITY: f64 = 9806.65;

#[derive(Clone, Debug, PartialEq)]
pub struct MaterialParams<T> {
    pub name: String,
    /// EI, N·mm².
    pub bending_stiffness: T,
    /// EA, N.
    pub axial_stiffness: T,
    /// Body mass per unit rest length, g/mm.
    pub linear_density: T,
}

impl<T: Real> MaterialParams<T> {
    pub fn new(name: impl Into<String>, bending_stiffness: T, axial_stiffness: T, linear_density: T) -> Result<Self> {
        let m = Self {
            name: name.into(),
            bending_stiffness,
            axial_stiffness,
            linear_density,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bending_stiffness > T::zero() && self.bending_stiffness.is_finite()) {
            return Err(Error::invalid(format!("{}: bending stiffness must be positive", self.name)));
        }
        if !(self.axial_stiffness > T::zero() && self.axial_stiffness.is_finite()) {
            return Err(Error::invalid(format!("{}: axial stiffness must be positive", self.name)));
        }
        if !(self.linear_density >= T::zero() && self.linear_density.is_finite()) {
            return Err(Error::invalid(format!("{}: linear density must be non-negative", self.name)));
        }
        Ok(())
    }

    pub fn with_stiffness(&self, bending_stiffness: T, axial_stiffness: T) -> Self {
        Self {
            bending_stiffness,
            axial_stiffness,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentSpec<T> {
    pub length: T,
    pub layout: TendonLayout<T>,
    pub material: MaterialParams<T>,
    /// Lumped at the segment's distal end, g.
    pub end_cap_mass: T,
}

impl<T: Real> SegmentSpec<T> {
    pub fn new(length: T, layout: TendonLayout<T>, material: MaterialParams<T>, end_cap_mass: T) -> Result<Self> {
        let s = Self {
            length,
            layout,
            material,
            end_cap_mass,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > T::zero() && self.length.is_finite()) {
            return Err(Error::invalid(format!("segment length must be positive, got {}", self.length)));
        }
        if !(self.end_cap_mass >= T::zero() && self.end_cap_mass.is_finite()) {
            return Err(Error::invalid("end-cap mass must be non-negative"));
        }
        self.material.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadCase<T> {
    /// Mass hung at the distal tip, g.
    pub payload_mass: T,
    /// mm/s².
    pub gravity_magnitude: T,
    pub gravity_enabled: bool,
}

impl<T: Real> LoadCase<T> {
    pub fn new(payload_mass: T) -> Result<Self> {
        let l = Self {
            payload_mass,
            gravity_magnitude: T::lit(STANDARD_GRAVITY),
            gravity_enabled: true,
        };
        l.validate()?;
        Ok(l)
    }

    pub fn without_gravity() -> Self {
        Self {
            payload_mass: T::zero(),
            gravity_magnitude: T::lit(STANDARD_GRAVITY),
            gravity_enabled: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.payload_mass >= T::zero() && self.payload_mass.is_finite()) {
            return Err(Error::invalid(format!("payload mass must be non-negative, got {}", self.payload_mass)));
        }
        if !(self.gravity_magnitude >= T::zero() && self.gravity_magnitude.is_finite()) {
            return Err(Error::invalid("gravity magnitude must be non-negative"));
        }
        Ok(())
    }

    /// Weight in newtons of one gram.
    pub fn newtons_per_gram(&self) -> T {
        if self.gravity_enabled {
            self.gravity_magnitude * T::lit(NEWTON_PER_GRAM_MM_S2)
        } else {
            T::zero()
        }
    }
}

/// Per-sub-arc curvature (1/mm, signed in the bending plane) and axial strain.
#[derive(Clone, Debug, PartialEq)]
pub struct RodState<T> {
    pub curvature: Vec<T>,
    pub strain: Vec<T>,
    /// Sub-arcs per segment.
    pub subdivisions: usize,
}

impl<T: Real> RodState<T> {
    pub fn straight(segments: usize, subdivisions: usize) -> Self {
        let m = segments * subdivisions;
        Self {
            curvature: vec![T::zero(); m],
            strain: vec![T::zero(); m],
            subdivisions,
        }
    }

    /// Uniform curvature per segment, no strain.
    pub fn uniform(curvatures: &[T], subdivisions: usize) -> Self {
        let curvature = curvatures
            .iter()
            .flat_map(|&k| std::iter::repeat(k).take(subdivisions))
            .collect::<Vec<_>>();
        let strain = vec![T::zero(); curvature.len()];
        Self {
            curvature,
            strain,
            subdivisions,
        }
    }

    pub fn sub_arcs(&self) -> usize {
        self.curvature.len()
    }

    /// Flattened `[κ…, ε…]`.
    pub fn to_vector(&self) -> Vec<T> {
        let mut v = self.curvature.clone();
        v.extend_from_slice(&self.strain);
        v
    }

    pub fn from_vector(v: &[T], subdivisions: usize) -> Self {
        let m = v.len() / 2;
        Self {
            curvature: v[..m].to_vec(),
            strain: v[m..].to_vec(),
            subdivisions,
        }
    }

    pub fn segment_curvature(&self, seg: usize) -> &[T] {
        &self.curvature[seg * self.subdivisions..(seg + 1) * self.subdivisions]
    }
}

/// Planar position (horizontal along the bending plane, vertical Z).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanarPoint<T> {
    pub h: T,
    pub z: T,
}

#[inline]
fn heading_dir<T: Real>(theta: T) -> (T, T) {
    let (s, c) = theta.sin_cos();
    (s, -c)
}

/// A chain of segments under one load, discretized for energy evaluation.
#[derive(Clone, Debug)]
pub struct RodModel<T> {
    segments: Vec<SegmentSpec<T>>,
    subdivisions: usize,
    mount_angle: T,
    plane_angle: T,
    rest_len: Vec<T>,
    bend_stiff: Vec<T>,
    axial_stiff: Vec<T>,
    /// Weight (N) lumped at each node, node 0 at the mount.
    node_weight: Vec<T>,
}

impl<T: Real> RodModel<T> {
    /// `mount_angle` is the base heading (0 hangs along −Z); `plane_angle`
    /// orients the bending plane about Z, positive curvature bending toward it.
    pub fn new(
        chain: &[SegmentSpec<T>],
        load: &LoadCase<T>,
        subdivisions: usize,
        mount_angle: T,
        plane_angle: T,
    ) -> Result<Self> {
        if chain.is_empty() {
            return Err(Error::invalid("chain has no segments"));
        }
        if subdivisions < 4 {
            return Err(Error::invalid(format!("need at least 4 sub-arcs per segment, got {subdivisions}")));
        }
        for s in chain {
            s.validate()?;
        }
        load.validate()?;
        let m = chain.len() * subdivisions;
        let n_t = T::from_usize_lossy(subdivisions);
        let w = load.newtons_per_gram();
        let mut rest_len = Vec::with_capacity(m);
        let mut bend_stiff = Vec::with_capacity(m);
        let mut axial_stiff = Vec::with_capacity(m);
        let mut node_weight = vec![T::zero(); m + 1];
        let half = T::lit(0.5);
        for (k, seg) in chain.iter().enumerate() {
            let ds = seg.length / n_t;
            let sub_weight = seg.material.linear_density * ds * w;
            for j in 0..subdivisions {
                let idx = k * subdivisions + j;
                rest_len.push(ds);
                bend_stiff.push(seg.material.bending_stiffness);
                axial_stiff.push(seg.material.axial_stiffness);
                node_weight[idx] += half * sub_weight;
                node_weight[idx + 1] += half * sub_weight;
            }
            node_weight[(k + 1) * subdivisions] += seg.end_cap_mass * w;
        }
        node_weight[m] += load.payload_mass * w;
        Ok(Self {
            segments: chain.to_vec(),
            subdivisions,
            mount_angle,
            plane_angle,
            rest_len,
            bend_stiff,
            axial_stiff,
            node_weight,
        })
    }

    pub fn segments(&self) -> &[SegmentSpec<T>] {
        &self.segments
    }

    pub fn subdivisions(&self) -> usize {
        self.subdivisions
    }

    pub fn sub_arcs(&self) -> usize {
        self.rest_len.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.sub_arcs()
    }

    pub fn mount_angle(&self) -> T {
        self.mount_angle
    }

    pub fn plane_angle(&self) -> T {
        self.plane_angle
    }

    pub fn check_state(&self, state: &RodState<T>) -> Result<()> {
        let m = self.sub_arcs();
        if state.curvature.len() != m || state.strain.len() != m || state.subdivisions != self.subdivisions {
            return Err(Error::invalid(format!(
                "state has {}/{} sub-arcs ({} per segment); model expects {m} ({} per segment)",
                state.curvature.len(),
                state.strain.len(),
                state.subdivisions,
                self.subdivisions
            )));
        }
        if let Some(e) = state.strain.iter().find(|&&e| !(e > -T::one())) {
            return Err(Error::invalid(format!("axial strain {e} <= -1")));
        }
        Ok(())
    }

    /// Signed moment arm of a tendon in the bending plane.
    pub fn tendon_offset(&self, seg: usize, tendon: usize) -> T {
        let layout = &self.segments[seg].layout;
        layout.pitch_radius() * (self.plane_angle - layout.angles()[tendon]).cos()
    }

    /// Backbone nodes (planar) and tangent headings, node 0 at the mount.
    pub fn nodes(&self, x: &[T]) -> (Vec<PlanarPoint<T>>, Vec<T>) {
        let m = self.sub_arcs();
        let (kappa, eps) = x.split_at(m);
        let mut pts = Vec::with_capacity(m + 1);
        let mut headings = Vec::with_capacity(m + 1);
        let mut p = PlanarPoint { h: T::zero(), z: T::zero() };
        let mut theta = self.mount_angle;
        pts.push(p);
        headings.push(theta);
        let half = T::lit(0.5);
        for j in 0..m {
            let turn = kappa[j] * self.rest_len[j];
            let len = self.rest_len[j] * (T::one() + eps[j]);
            let chord = len * sinc(half * turn);
            let (dh, dz) = heading_dir(theta + half * turn);
            p.h += chord * dh;
            p.z += chord * dz;
            theta += turn;
            pts.push(p);
            headings.push(theta);
        }
        (pts, headings)
    }

    /// Backbone point at rest arc length `s` from the base of segment `seg`.
    pub fn point_at(&self, x: &[T], seg: usize, s: T) -> PlanarPoint<T> {
        let m = self.sub_arcs();
        let n = self.subdivisions;
        let (kappa, eps) = x.split_at(m);
        let ds = self.segments[seg].length / T::from_usize_lossy(n);
        let local = (s / ds).floor().to_usize().unwrap_or(0).min(n - 1);
        let j = seg * n + local;
        let mut p = PlanarPoint { h: T::zero(), z: T::zero() };
        let mut theta = self.mount_angle;
        let half = T::lit(0.5);
        for i in 0..j {
            let turn = kappa[i] * self.rest_len[i];
            let chord = self.rest_len[i] * (T::one() + eps[i]) * sinc(half * turn);
            let (dh, dz) = heading_dir(theta + half * turn);
            p.h += chord * dh;
            p.z += chord * dz;
            theta += turn;
        }
        let u = (s - ds * T::from_usize_lossy(local)).max(T::zero());
        let turn = kappa[j] * u;
        let chord = u * (T::one() + eps[j]) * sinc(half * turn);
        let (dh, dz) = heading_dir(theta + half * turn);
        p.h += chord * dh;
        p.z += chord * dz;
        p
    }

    pub fn to_world(&self, p: PlanarPoint<T>) -> Vec3<T> {
        let (s, c) = self.plane_angle.sin_cos();
        Vec3::new(p.h * c, p.h * s, p.z)
    }

    /// Deformed backbone length of one segment.
    pub fn deformed_length(&self, x: &[T], seg: usize) -> T {
        let m = self.sub_arcs();
        let n = self.subdivisions;
        (seg * n..(seg + 1) * n)
            .map(|j| self.rest_len[j] * (T::one() + x[m + j]))
            .sum()
    }

    pub fn tendon_path_length(&self, x: &[T], seg: usize, tendon: usize) -> T {
        let m = self.sub_arcs();
        let n = self.subdivisions;
        let d = self.tendon_offset(seg, tendon);
        (seg * n..(seg + 1) * n)
            .map(|j| self.rest_len[j] * (T::one() + x[m + j] - x[j] * d))
            .sum()
    }

    /// Gradient of a tendon path length; constant because paths are linear
    /// in the state.
    pub fn tendon_path_gradient(&self, seg: usize, tendon: usize) -> Vec<T> {
        let m = self.sub_arcs();
        let n = self.subdivisions;
        let d = self.tendon_offset(seg, tendon);
        let mut g = vec![T::zero(); 2 * m];
        for j in seg * n..(seg + 1) * n {
            g[j] = -self.rest_len[j] * d;
            g[m + j] = self.rest_len[j];
        }
        g
    }

    pub fn elastic_energy(&self, x: &[T]) -> T {
        let m = self.sub_arcs();
        let half = T::lit(0.5);
        (0..m)
            .map(|j| {
                half * self.rest_len[j]
                    * (self.bend_stiff[j] * x[j] * x[j] + self.axial_stiff[j] * x[m + j] * x[m + j])
            })
            .sum()
    }

    pub fn gravity_energy(&self, x: &[T]) -> T {
        let (pts, _) = self.nodes(x);
        pts.iter().zip(&self.node_weight).map(|(p, &w)| w * p.z).sum()
    }

    /// Total potential energy (N·mm); writes its gradient into `grad`.
    pub fn energy_and_gradient(&self, x: &[T], grad: &mut [T]) -> T {
        let m = self.sub_arcs();
        debug_assert_eq!(x.len(), 2 * m);
        let (kappa, eps) = x.split_at(m);
        let half = T::lit(0.5);

        let mut energy = T::zero();
        for j in 0..m {
            let ds = self.rest_len[j];
            energy += half * ds * (self.bend_stiff[j] * kappa[j] * kappa[j] + self.axial_stiff[j] * eps[j] * eps[j]);
            grad[j] = ds * self.bend_stiff[j] * kappa[j];
            grad[m + j] = ds * self.axial_stiff[j] * eps[j];
        }

        // Gravity: E = Σ_j W_j c_j with c_j the vertical rise of chord j and
        // W_j the total weight at or beyond node j + 1.
        let mut distal = vec![T::zero(); m];
        let mut acc = T::zero();
        for j in (0..m).rev() {
            acc += self.node_weight[j + 1];
            distal[j] = acc;
        }
        if acc == T::zero() {
            return energy;
        }
        let mut theta = self.mount_angle;
        // chord horizontal components, weighted
        let mut weighted_h = vec![T::zero(); m];
        let mut local_turn = vec![T::zero(); m];
        for j in 0..m {
            let ds = self.rest_len[j];
            let turn = kappa[j] * ds;
            let len = ds * (T::one() + eps[j]);
            let mid = theta + half * turn;
            let (sm, cm) = mid.sin_cos();
            let sc = sinc(half * turn);
            let dz = -len * sc * cm;
            energy += distal[j] * dz;
            weighted_h[j] = distal[j] * len * sc * sm;
            // d(dz)/d(turn) holding the start heading fixed
            let dturn = -len * (half * sinc_prime(half * turn) * cm - sc * sm * half);
            local_turn[j] = distal[j] * dturn;
            grad[m + j] += distal[j] * (-ds * sc * cm);
            theta += turn;
        }
        // Turning sub-arc i rotates every later chord: d(dz_j)/dθ = h_j.
        let mut later = T::zero();
        for i in (0..m).rev() {
            grad[i] += self.rest_len[i] * (local_turn[i] + later);
            later += weighted_h[i];
        }
        energy
    }

    pub fn energy(&self, x: &[T]) -> T {
        let mut g = vec![T::zero(); x.len()];
        self.energy_and_gradient(x, &mut g)
    }
}

fn default_model<T: Real>(state: &RodState<T>, chain: &[SegmentSpec<T>], load: &LoadCase<T>) -> Result<RodModel<T>> {
    let model = RodModel::new(chain, load, state.subdivisions, T::zero(), T::zero())?;
    model.check_state(state)?;
    Ok(model)
}

/// Elastic plus gravitational energy of `state`, arm hanging along −Z with
/// the bending plane along +X.
pub fn total_energy<T: Real>(state: &RodState<T>, chain: &[SegmentSpec<T>], load: &LoadCase<T>) -> Result<T> {
    let model = default_model(state, chain, load)?;
    Ok(model.energy(&state.to_vector()))
}

/// Gradient of [`total_energy`] with respect to `[κ…, ε…]`.
pub fn energy_gradient<T: Real>(state: &RodState<T>, chain: &[SegmentSpec<T>], load: &LoadCase<T>) -> Result<Vec<T>> {
    let model = default_model(state, chain, load)?;
    let x = state.to_vector();
    let mut g = vec![T::zero(); x.len()];
    model.energy_and_gradient(&x, &mut g);
    Ok(g)
}

/// Discretized path of tendon `tendon` along segment `seg`, bending plane at
/// angle 0.
pub fn tendon_path_length<T: Real>(state: &RodState<T>, chain: &[SegmentSpec<T>], seg: usize, tendon: usize) -> Result<T> {
    let model = default_model(state, chain, &LoadCase::without_gravity())?;
    if seg >= chain.len() || tendon >= chain[seg].layout.count() {
        return Err(Error::invalid(format!("no tendon {tendon} on segment {seg}")));
    }
    Ok(model.tendon_path_length(&state.to_vector(), seg, tendon))
}
