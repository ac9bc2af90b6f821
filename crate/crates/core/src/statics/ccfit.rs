//! Constant-curvature bend angle estimated from virtual tip markers.

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mocap::fit_circle_3d;
use crate::scalar::Real;

use super::model::{LoadCase, RodModel, RodState, SegmentSpec};

/// Where the virtual markers sit along the marker segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MarkerSpan<T> {
    /// Evenly from the segment base to its tip.
    WholeSegment,
    /// Evenly over the distal rest length (mm) ending at the segment tip.
    Distal(T),
}

impl<T: Real> MarkerSpan<T> {
    fn rest_range(&self, length: T) -> Result<(T, T)> {
        match *self {
            MarkerSpan::WholeSegment => Ok((T::zero(), length)),
            MarkerSpan::Distal(span) => {
                if !(span > T::zero()) {
                    return Err(Error::invalid(format!("marker span must be positive, got {span}")));
                }
                Ok(((length - span).max(T::zero()), length))
            }
        }
    }
}

/// Marker positions in the world frame, base to tip.
pub fn marker_positions<T: Real>(
    model: &RodModel<T>,
    x: &[T],
    seg: usize,
    count: usize,
    span: MarkerSpan<T>,
) -> Result<Vec<Vec3<T>>> {
    if count < 3 {
        return Err(Error::invalid(format!("circle fit needs at least 3 markers, got {count}")));
    }
    let length = model.segments()[seg].length;
    let (a, b) = span.rest_range(length)?;
    let last = T::from_usize_lossy(count - 1);
    Ok((0..count)
        .map(|i| {
            let s = a + (b - a) * T::from_usize_lossy(i) / last;
            model.to_world(model.point_at(x, seg, s))
        })
        .collect())
}

/// Circle-fit angle of one segment: deformed length over fitted radius,
/// signed by the turning direction of the markers.
///
/// Using the deformed length makes any uniform state return exactly κ·ℓ,
/// strained or not, since the arc radius is (1+ε)/κ.
pub(crate) fn ccfit_angle_in_model<T: Real>(
    model: &RodModel<T>,
    x: &[T],
    seg: usize,
    count: usize,
    span: MarkerSpan<T>,
) -> Result<T> {
    let pts = marker_positions(model, x, seg, count, span)?;
    let fit = match fit_circle_3d(&pts) {
        Ok(fit) => fit,
        Err(Error::DegenerateFit(_)) => return Ok(T::zero()),
        Err(e) => return Err(e),
    };
    let angle = model.deformed_length(x, seg) / fit.radius;
    // Planar turning sign: positive curvature turns the tangent from −Z
    // toward +h, which is a counter-clockwise turn in the (h, z) plane.
    let (s, c) = model.plane_angle().sin_cos();
    let mut turning = T::zero();
    for w in pts.windows(3) {
        let d1 = w[1] - w[0];
        let d2 = w[2] - w[1];
        let h1 = d1.x * c + d1.y * s;
        let h2 = d2.x * c + d2.y * s;
        turning += h1 * d2.z - d1.z * h2;
    }
    Ok(if turning < T::zero() { -angle } else { angle })
}

/// Circle-fit bend angle of the base segment of a planar state, using
/// `tip_window` markers spread over the whole segment.
pub fn ccfit_angle_from_state<T: Real>(state: &RodState<T>, chain: &[SegmentSpec<T>], tip_window: usize) -> Result<T> {
    ccfit_angle_with_span(state, chain, 0, tip_window, MarkerSpan::WholeSegment)
}

pub fn ccfit_angle_with_span<T: Real>(
    state: &RodState<T>,
    chain: &[SegmentSpec<T>],
    seg: usize,
    tip_window: usize,
    span: MarkerSpan<T>,
) -> Result<T> {
    if tip_window < 3 {
        return Err(Error::invalid(format!("tip window must be at least 3, got {tip_window}")));
    }
    if seg >= chain.len() {
        return Err(Error::invalid(format!("segment {seg} outside a chain of {}", chain.len())));
    }
    let model = RodModel::new(chain, &LoadCase::without_gravity(), state.subdivisions, T::zero(), T::zero())?;
    model.check_state(state)?;
    ccfit_angle_in_model(&model, &state.to_vector(), seg, tip_window, span)
}
