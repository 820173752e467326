//! Cone geometry: membership, polar decomposition, discrete exit detection,
//! and the Brownian scaling operator K_t(w)(s) = √t · w(s/t).
//!
//! Three convex-cone families are supported, each with vertex at the origin:
//! a planar wedge of opening angle β occupying polar angles (0, β), the
//! 3-D circular cone of half-angle θ₀ about the first coordinate axis, and
//! the half-space x₁ > 0 in any dimension d ≥ 1. Cones are open: boundary
//! points are classified outside, so grid exit detection errs on the side of
//! rejecting (conservative for rejection sampling).

use std::io::Write as IoWrite;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::RngStreamSpec;

/// A supported cone family with its geometric parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConeSpec {
    /// Planar wedge {(r cos φ, r sin φ) : r > 0, 0 < φ < β}, β ∈ (0, π].
    /// β = π is the open half-plane, included so the d = 2 half-space
    /// exit-law sanity case α₁ = 1 is exercised.
    Wedge { beta: f64 },
    /// Circular cone in R³ of half-angle θ₀ ∈ (0, π/2] about the +x₁ axis.
    Circular3D { theta0: f64 },
    /// Open half-space {x₁ > 0} in R^d, d ≥ 1.
    HalfSpace { d: usize },
}

impl ConeSpec {
    /// Wedge of opening angle `beta` ∈ (0, π].
    pub fn wedge(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta <= 0.0 || beta > std::f64::consts::PI {
            return Err(Error::domain(format!(
                "wedge angle must lie in (0, π], got {beta}"
            )));
        }
        Ok(ConeSpec::Wedge { beta })
    }

    /// Circular cone of half-angle `theta0` ∈ (0, π/2].
    pub fn circular3d(theta0: f64) -> Result<Self> {
        if !theta0.is_finite() || theta0 <= 0.0 || theta0 > std::f64::consts::FRAC_PI_2 {
            return Err(Error::domain(format!(
                "circular-cone half-angle must lie in (0, π/2], got {theta0}"
            )));
        }
        Ok(ConeSpec::Circular3D { theta0 })
    }

    /// Half-space {x₁ > 0} in dimension `d` ≥ 1.
    pub fn half_space(d: usize) -> Result<Self> {
        if d < 1 {
            return Err(Error::domain("half-space dimension must be ≥ 1"));
        }
        Ok(ConeSpec::HalfSpace { d })
    }

    /// Ambient dimension of the cone.
    pub fn dim(&self) -> usize {
        match self {
            ConeSpec::Wedge { .. } => 2,
            ConeSpec::Circular3D { .. } => 3,
            ConeSpec::HalfSpace { d } => *d,
        }
    }

    fn check_dim(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim() {
            return Err(Error::domain(format!(
                "point dimension {} does not match cone dimension {}",
                p.len(),
                self.dim()
            )));
        }
        if p.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("point coordinates must be finite"));
        }
        Ok(())
    }

    /// True iff `p` lies in the open cone (boundary points are outside).
    pub fn contains(&self, p: &[f64]) -> Result<bool> {
        self.check_dim(p)?;
        Ok(self.contains_unchecked(p))
    }

    /// Membership without the dimension/finiteness checks; used by the hot
    /// loops of exit detection and rejection sampling.
    #[inline]
    pub(crate) fn contains_unchecked(&self, p: &[f64]) -> bool {
        match *self {
            ConeSpec::Wedge { beta } => {
                let phi = p[1].atan2(p[0]);
                phi > 0.0 && phi < beta && (p[0] != 0.0 || p[1] != 0.0)
            }
            ConeSpec::Circular3D { theta0 } => {
                let r = norm(p);
                if r == 0.0 {
                    return false;
                }
                let theta = (p[0] / r).clamp(-1.0, 1.0).acos();
                theta < theta0
            }
            ConeSpec::HalfSpace { .. } => p[0] > 0.0,
        }
    }

    /// Polar decomposition (r, angular): r = |p| and the cap coordinate of
    /// the direction p/|p| — polar angle for the wedge, colatitude from the
    /// +x₁ axis for the circular cone and half-space.
    pub fn polar(&self, p: &[f64]) -> Result<(f64, f64)> {
        self.check_dim(p)?;
        let r = norm(p);
        if r == 0.0 {
            return Err(Error::domain("polar decomposition undefined at the origin"));
        }
        let angular = match *self {
            ConeSpec::Wedge { .. } => p[1].atan2(p[0]),
            ConeSpec::Circular3D { .. } | ConeSpec::HalfSpace { .. } => {
                (p[0] / r).clamp(-1.0, 1.0).acos()
            }
        };
        Ok((r, angular))
    }
}

#[inline]
pub(crate) fn norm(p: &[f64]) -> f64 {
    p.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// A discretized path: positions on the uniform grid t_k = k·dt.
///
/// Points are stored flat (row-major, `dim` coordinates per grid time) to
/// keep large samples cache-friendly; [`PathSample::point`] views one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    /// Grid spacing (> 0).
    pub dt: f64,
    /// Ambient dimension.
    pub dim: usize,
    /// Grid times, `times[k] = k·dt`, starting at 0.
    pub times: Vec<f64>,
    /// Flat coordinates: point k occupies `points[k*dim .. (k+1)*dim]`.
    pub points: Vec<f64>,
    /// The stream that generated this path (for reproducibility records).
    pub seed: RngStreamSpec,
}

impl PathSample {
    /// Build a path from flat points, synthesising the uniform time grid.
    pub fn from_points(dt: f64, dim: usize, points: Vec<f64>, seed: RngStreamSpec) -> Result<Self> {
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::domain(format!("path dt must be positive, got {dt}")));
        }
        if dim == 0 {
            return Err(Error::domain("path dimension must be ≥ 1"));
        }
        if points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::domain(format!(
                "flat point buffer length {} is not a positive multiple of dim {dim}",
                points.len()
            )));
        }
        let n = points.len() / dim;
        let times = (0..n).map(|k| k as f64 * dt).collect();
        Ok(PathSample {
            dt,
            dim,
            times,
            points,
            seed,
        })
    }

    /// Number of grid points (including t = 0).
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Coordinates of the k-th grid point.
    #[inline]
    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    /// Last grid point.
    pub fn last_point(&self) -> &[f64] {
        self.point(self.len() - 1)
    }

    /// Serialize as CSV with header `t,x1,...,xd` and 17 significant digits
    /// per value (lossless round-trip for f64).
    pub fn write_csv<W: IoWrite>(&self, w: &mut W) -> Result<()> {
        write!(w, "t")?;
        for j in 1..=self.dim {
            write!(w, ",x{j}")?;
        }
        writeln!(w)?;
        for k in 0..self.len() {
            write!(w, "{:.16e}", self.times[k])?;
            for c in self.point(k) {
                write!(w, ",{c:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Smallest grid index k ≥ 1 whose point lies outside the open cone, or
/// `None` if the whole grid stays inside (discrete surrogate of the exit
/// time τ_C; the start point is not examined).
pub fn first_exit_index(path: &PathSample, cone: &ConeSpec) -> Option<usize> {
    debug_assert_eq!(path.dim, cone.dim());
    (1..path.len()).find(|&k| !cone.contains_unchecked(path.point(k)))
}

/// Brownian scaling K_t: maps a path w to √t · w(·/t), i.e. the grid spacing
/// becomes t·dt and every coordinate is multiplied by √t.
pub fn scale_path(path: &PathSample, t: f64) -> Result<PathSample> {
    if t <= 0.0 || !t.is_finite() {
        return Err(Error::domain(format!(
            "scaling time must be positive, got {t}"
        )));
    }
    let s = t.sqrt();
    let points = path.points.iter().map(|c| c * s).collect();
    PathSample::from_points(path.dt * t, path.dim, points, path.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn seed() -> RngStreamSpec {
        RngStreamSpec::new(7, 0)
    }

    const PI: f64 = std::f64::consts::PI;

    // ------------------------------------------------------------------
    // membership
    // ------------------------------------------------------------------

    #[test]
    fn wedge_membership_basics() {
        let cone = ConeSpec::wedge(PI / 2.0).unwrap();
        assert!(cone.contains(&[1.0, 1.0]).unwrap());
        assert!(
            !cone.contains(&[1.0, 0.0]).unwrap(),
            "edge is outside (open cone)"
        );
        assert!(
            !cone.contains(&[0.0, 1.0]).unwrap(),
            "other edge is outside"
        );
        assert!(!cone.contains(&[1.0, -0.1]).unwrap());
        assert!(!cone.contains(&[0.0, 0.0]).unwrap(), "vertex is outside");
    }

    #[test]
    fn half_plane_wedge_is_upper_half_plane() {
        let cone = ConeSpec::wedge(PI).unwrap();
        assert!(cone.contains(&[-3.0, 0.5]).unwrap());
        assert!(cone.contains(&[3.0, 0.5]).unwrap());
        assert!(!cone.contains(&[-3.0, 0.0]).unwrap());
        assert!(!cone.contains(&[3.0, -0.5]).unwrap());
    }

    #[test]
    fn half_space_membership() {
        let cone = ConeSpec::half_space(3).unwrap();
        assert!(!cone.contains(&[-0.1, 5.0, 5.0]).unwrap());
        assert!(cone.contains(&[0.1, -5.0, 5.0]).unwrap());
        assert!(
            !cone.contains(&[0.0, 1.0, 1.0]).unwrap(),
            "boundary hyperplane outside"
        );

        let line = ConeSpec::half_space(1).unwrap();
        assert!(line.contains(&[2.0]).unwrap());
        assert!(!line.contains(&[0.0]).unwrap());
        assert!(!line.contains(&[-2.0]).unwrap());
    }

    #[test]
    fn circular_cone_membership() {
        let cone = ConeSpec::circular3d(PI / 4.0).unwrap();
        // polar angle exactly π/4: boundary, outside.
        assert!(!cone.contains(&[1.0, 1.0, 0.0]).unwrap());
        assert!(cone.contains(&[1.0, 0.5, 0.5]).unwrap());
        assert!(!cone.contains(&[1.0, 1.0, 1.0]).unwrap());
        assert!(!cone.contains(&[0.0, 0.0, 0.0]).unwrap());
        assert!(cone.contains(&[5.0, 0.0, 0.0]).unwrap(), "axis is interior");
    }

    #[test]
    fn membership_is_scale_invariant() {
        let cones = [
            ConeSpec::wedge(2.0).unwrap(),
            ConeSpec::circular3d(0.7).unwrap(),
            ConeSpec::half_space(3).unwrap(),
        ];
        let probes: [&[f64]; 4] = [
            &[0.3, 0.4, 0.1],
            &[1.0, -0.2, 0.5],
            &[0.05, 0.8, -0.3],
            &[2.0, 1.9, 0.0],
        ];
        for cone in &cones {
            for p in probes {
                let p = &p[..cone.dim()];
                let inside = cone.contains(p).unwrap();
                for lambda in [1e-6, 0.1, 1.0, 17.0, 1e6] {
                    let q: Vec<f64> = p.iter().map(|c| c * lambda).collect();
                    assert_eq!(
                        cone.contains(&q).unwrap(),
                        inside,
                        "cone {cone:?}, point {p:?}, λ={lambda}"
                    );
                }
            }
        }
    }

    #[test]
    fn membership_rejects_dimension_mismatch() {
        let cone = ConeSpec::wedge(1.0).unwrap();
        assert!(matches!(
            cone.contains(&[1.0, 2.0, 3.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            cone.contains(&[f64::NAN, 0.0]),
            Err(Error::Domain(_))
        ));
    }

    // ------------------------------------------------------------------
    // polar decomposition
    // ------------------------------------------------------------------

    #[test]
    fn polar_examples() {
        let wedge = ConeSpec::wedge(PI).unwrap();
        let (r, phi) = wedge.polar(&[0.0, 2.0]).unwrap();
        assert_relative_eq!(r, 2.0, max_relative = 1e-15);
        assert_relative_eq!(phi, PI / 2.0, max_relative = 1e-15);

        let hs = ConeSpec::half_space(2).unwrap();
        let (r, theta) = hs.polar(&[3.0, 0.0]).unwrap();
        assert_relative_eq!(r, 3.0, max_relative = 1e-15);
        assert_abs_diff_eq!(theta, 0.0, epsilon = 1e-15);

        let circ = ConeSpec::circular3d(PI / 3.0).unwrap();
        let (r, theta) = circ.polar(&[1.0, 1.0, 0.0]).unwrap();
        assert_relative_eq!(r, 2f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(theta, PI / 4.0, max_relative = 1e-14);
    }

    #[test]
    fn polar_rejects_origin() {
        let cone = ConeSpec::half_space(2).unwrap();
        assert!(matches!(cone.polar(&[0.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn polar_roundtrip_reconstruction() {
        // Rebuild the point from (r, angular) in the plane containing it.
        let wedge = ConeSpec::wedge(2.5).unwrap();
        for p in [[0.3, 0.7], [1.5, 0.01], [-0.2, 1.0]] {
            let (r, phi) = wedge.polar(&p).unwrap();
            let rebuilt = [r * phi.cos(), r * phi.sin()];
            assert_abs_diff_eq!(rebuilt[0], p[0], epsilon = 1e-12);
            assert_abs_diff_eq!(rebuilt[1], p[1], epsilon = 1e-12);
        }

        // Half-space (axis-aligned case): p in the (x₁, x₂) plane.
        let hs = ConeSpec::half_space(3).unwrap();
        for p in [[0.5, 1.2, 0.0], [2.0, -0.3, 0.0]] {
            let (r, theta) = hs.polar(&p).unwrap();
            let sign = if p[1] >= 0.0 { 1.0 } else { -1.0 };
            let rebuilt = [r * theta.cos(), sign * r * theta.sin(), 0.0];
            for i in 0..3 {
                assert_abs_diff_eq!(rebuilt[i], p[i], epsilon = 1e-12);
            }
        }
    }

    // ------------------------------------------------------------------
    // paths, exit detection, scaling
    // ------------------------------------------------------------------

    fn line_path(from: [f64; 2], to: [f64; 2], n: usize, dt: f64) -> PathSample {
        let mut pts = Vec::with_capacity(2 * (n + 1));
        for k in 0..=n {
            let s = k as f64 / n as f64;
            pts.push(from[0] + s * (to[0] - from[0]));
            pts.push(from[1] + s * (to[1] - from[1]));
        }
        PathSample::from_points(dt, 2, pts, seed()).unwrap()
    }

    #[test]
    fn path_sample_invariants() {
        let p = line_path([1.0, 1.0], [2.0, 2.0], 10, 0.1);
        assert_eq!(p.len(), 11);
        for (k, t) in p.times.iter().enumerate() {
            assert_relative_eq!(*t, k as f64 * 0.1, max_relative = 1e-15);
        }
        assert_eq!(p.point(0), &[1.0, 1.0]);
        assert_eq!(p.last_point(), &[2.0, 2.0]);
    }

    #[test]
    fn path_sample_validation() {
        assert!(matches!(
            PathSample::from_points(0.0, 2, vec![1.0, 1.0], seed()),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            PathSample::from_points(0.1, 2, vec![1.0, 1.0, 1.0], seed()),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            PathSample::from_points(0.1, 2, vec![], seed()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn exit_detection_constant_interior_path() {
        let cone = ConeSpec::wedge(PI / 2.0).unwrap();
        let p = line_path([1.0, 1.0], [1.0, 1.0], 5, 0.2);
        assert_eq!(first_exit_index(&p, &cone), None);
    }

    #[test]
    fn exit_detection_immediate_exit() {
        let cone = ConeSpec::wedge(PI / 2.0).unwrap();
        let pts = vec![1.0, 1.0, -0.5, 0.5, 1.0, 1.0];
        let p = PathSample::from_points(0.1, 2, pts, seed()).unwrap();
        assert_eq!(first_exit_index(&p, &cone), Some(1));
    }

    #[test]
    fn exit_detection_straight_line_crossing() {
        // From (1, 0.5) to (1, −0.5) in 10 steps: x₂(k) = 0.5 − k/10 hits 0
        // exactly at k = 5 (boundary counts as exit), so the first exit is 5.
        let cone = ConeSpec::wedge(PI / 2.0).unwrap();
        let p = line_path([1.0, 0.5], [1.0, -0.5], 10, 0.1);
        assert_eq!(first_exit_index(&p, &cone), Some(5));
    }

    #[test]
    fn exit_detection_is_stable_under_truncation() {
        let cone = ConeSpec::wedge(PI / 2.0).unwrap();
        let p = line_path([1.0, 0.5], [1.0, -0.5], 10, 0.1);
        let k = first_exit_index(&p, &cone).unwrap();
        let truncated =
            PathSample::from_points(p.dt, p.dim, p.points[..(k + 1) * p.dim].to_vec(), p.seed)
                .unwrap();
        assert_eq!(first_exit_index(&truncated, &cone), Some(k));
    }

    #[test]
    fn scaling_identity_at_t_equal_one() {
        let p = line_path([1.0, 0.5], [2.0, 1.5], 4, 0.25);
        let q = scale_path(&p, 1.0).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn scaling_by_four_doubles_values_and_stretches_times() {
        let p = line_path([1.0, 1.0], [3.0, -1.0], 4, 0.25);
        let q = scale_path(&p, 4.0).unwrap();
        assert_relative_eq!(q.dt, 1.0, max_relative = 1e-15);
        for k in 0..p.len() {
            assert_relative_eq!(q.times[k], 4.0 * p.times[k], max_relative = 1e-15);
            for (a, b) in q.point(k).iter().zip(p.point(k)) {
                assert_relative_eq!(*a, 2.0 * b, max_relative = 1e-15);
            }
        }
    }

    #[test]
    fn scaling_round_trip_recovers_path() {
        let p = line_path([0.7, 0.2], [1.1, 2.2], 8, 0.125);
        let q = scale_path(&scale_path(&p, 2.0).unwrap(), 0.5).unwrap();
        assert_eq!(q.len(), p.len());
        for k in 0..p.len() {
            assert_abs_diff_eq!(q.times[k], p.times[k], epsilon = 1e-12);
            for (a, b) in q.point(k).iter().zip(p.point(k)) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn scaling_rejects_nonpositive_time() {
        let p = line_path([1.0, 1.0], [2.0, 2.0], 2, 0.5);
        assert!(matches!(scale_path(&p, 0.0), Err(Error::Domain(_))));
        assert!(matches!(scale_path(&p, -2.0), Err(Error::Domain(_))));
    }

    // ------------------------------------------------------------------
    // CSV serialization
    // ------------------------------------------------------------------

    #[test]
    fn csv_header_and_roundtrip_precision() {
        let pts = vec![0.1, std::f64::consts::PI, 1.0 / 3.0, 2f64.sqrt()];
        let p = PathSample::from_points(0.5, 2, pts.clone(), seed()).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2");
        for (k, line) in lines.enumerate() {
            let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
            assert_eq!(fields.len(), 3);
            assert_eq!(fields[0], p.times[k], "times must round-trip exactly");
            assert_eq!(fields[1], pts[2 * k], "coordinates must round-trip exactly");
            assert_eq!(fields[2], pts[2 * k + 1]);
        }
    }

    // ------------------------------------------------------------------
    // constructor validation
    // ------------------------------------------------------------------

    #[test]
    fn cone_constructors_validate_parameters() {
        assert!(ConeSpec::wedge(PI + 1e-9).is_err());
        assert!(ConeSpec::wedge(0.0).is_err());
        assert!(ConeSpec::wedge(f64::NAN).is_err());
        assert!(ConeSpec::circular3d(PI / 2.0 + 1e-9).is_err());
        assert!(ConeSpec::circular3d(-0.5).is_err());
        assert!(ConeSpec::half_space(0).is_err());
        assert!(ConeSpec::wedge(PI).is_ok());
        assert!(ConeSpec::circular3d(PI / 2.0).is_ok());
        assert!(ConeSpec::half_space(1).is_ok());
    }
}
