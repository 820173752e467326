//! Path samplers: Brownian motion, the Brownian meander via two
//! constructions, the D-meander, rejection-sampled cone-conditioned paths,
//! and the approximate cone meander started near the vertex.
//!
//! # Reproducibility contract
//!
//! Every sampler is a deterministic function of an [`RngStreamSpec`] plus a
//! `(phase, index)` pair: the generator for one unit of work is derived by
//! [`stream_rng`] from the 32-byte key `(seed, stream_id, phase, index)`, so
//! identical inputs reproduce bit-identical paths regardless of how many
//! worker threads run. Parallel ensemble drivers key each path by its own
//! index rather than sharing a generator, which makes merged output
//! invariant (including order) to the worker count.
//!
//! # Boundary handling
//!
//! Linear boundary facets (half-space; each wedge edge) get an exact
//! per-step Brownian-bridge crossing correction: a step from signed inward
//! distance `a` to `b > 0` is killed with probability `exp(−2ab/dt)`, the
//! exact bridge crossing probability for a line. The wedge applies the two
//! edge corrections independently, which slightly over-rejects paths that
//! would cross both edges within one step near the vertex — a conservative
//! approximation. The circular cone's lateral boundary is curved and has no
//! closed-form correction, so it uses plain grid membership checks; this
//! requires `dt ≤ 1e−4` and carries a documented O(√dt) survival bias
//! (equivalent to starting slightly farther from the boundary).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cones::{ConeSpec, PathSample};
use crate::error::{Error, Result};

/// Phase tag for free Brownian motion sampling.
pub const PHASE_BM: u64 = 1;
/// Phase tag for the meander-by-transform construction.
pub const PHASE_MEANDER_TRANSFORM: u64 = 2;
/// Phase tag for the meander-by-section construction.
pub const PHASE_MEANDER_SECTION: u64 = 3;
/// Phase tag for rejection-sampled conditioned paths.
pub const PHASE_CONDITIONED: u64 = 4;
/// Phase tag for the D-meander (meander × independent BMs).
pub const PHASE_D_MEANDER: u64 = 5;
/// Phase tag for fixed-attempt survival estimation.
pub const PHASE_SURVIVAL: u64 = 6;
/// Phase tag for continuing accepted paths past their horizon.
pub const PHASE_CONTINUATION: u64 = 7;

/// Resample budget for the degenerate-σ branch of the meander transform.
const MAX_MEANDER_RESAMPLES: u64 = 1000;
/// Horizon cap (in time units) for the section construction's level search.
const MAX_SECTION_HORIZON: f64 = 1e4;
/// Coarsest step allowed against curved (circular-cone) boundaries, which
/// have no bridge correction.
const MAX_CURVED_DT: f64 = 1e-4;
/// Skip the bridge-correction uniform draw when 2ab/dt exceeds this bound
/// (crossing probability below e^{−40} ≈ 4e−18).
const BRIDGE_EXPONENT_CUTOFF: f64 = 40.0;

/// Seed + stream coordinates for a reproducible random stream.
///
/// Distinct `stream_id`s give statistically independent streams of the
/// underlying counter-based generator; identical `(seed, stream_id)` pairs
/// reproduce identical output bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStreamSpec {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStreamSpec {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStreamSpec { seed, stream_id }
    }
}

/// Derive the generator for one unit of work from its stream coordinates.
///
/// The ChaCha key is the little-endian concatenation
/// `seed | stream_id | phase | index`, so distinct coordinates can never
/// collide and no draw-counting is needed for independence.
pub fn stream_rng(spec: RngStreamSpec, phase: u64, index: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&spec.seed.to_le_bytes());
    key[8..16].copy_from_slice(&spec.stream_id.to_le_bytes());
    key[16..24].copy_from_slice(&phase.to_le_bytes());
    key[24..32].copy_from_slice(&index.to_le_bytes());
    ChaCha12Rng::from_seed(key)
}

/// Attempt statistics from a rejection sampler; the acceptance rate is a
/// consistent estimator of the survival probability being conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectionReport {
    /// Total attempts simulated.
    pub attempts: u64,
    /// Attempts that survived the whole horizon.
    pub accepted: u64,
    /// `accepted / attempts` (0 when no attempts ran).
    pub acceptance_rate: f64,
}

impl RejectionReport {
    pub fn new(attempts: u64, accepted: u64) -> Self {
        debug_assert!(accepted <= attempts);
        let acceptance_rate = if attempts == 0 {
            0.0
        } else {
            accepted as f64 / attempts as f64
        };
        RejectionReport {
            attempts,
            accepted,
            acceptance_rate,
        }
    }

    /// Binomial standard error of the acceptance rate.
    pub fn rate_stderr(&self) -> f64 {
        if self.attempts == 0 {
            return f64::NAN;
        }
        let p = self.acceptance_rate;
        (p * (1.0 - p) / self.attempts as f64).sqrt()
    }
}

// ---------------------------------------------------------------------
// killed-walk engine
// ---------------------------------------------------------------------

/// Boundary geometry prepared for the step loop.
#[derive(Debug, Clone)]
pub(crate) enum Geometry {
    /// Intersection of half-spaces with the given inward unit normals.
    Linear { normals: Vec<Vec<f64>>, dim: usize },
    /// Circular cone about +x₁ in 3-D: membership x₁ > 0 and x₁² > |x|²cos²θ₀.
    CircularGrid { cos_sq: f64 },
}

impl Geometry {
    pub(crate) fn for_cone(cone: &ConeSpec, dt: f64) -> Result<Geometry> {
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::Config(format!(
                "dt must be positive and finite, got {dt}"
            )));
        }
        match cone {
            ConeSpec::HalfSpace { d } => {
                let mut e1 = vec![0.0; *d];
                e1[0] = 1.0;
                Ok(Geometry::Linear {
                    normals: vec![e1],
                    dim: *d,
                })
            }
            ConeSpec::Wedge { beta } => {
                // Edge along +x has inward normal +y; the edge at angle β has
                // inward normal (sin β, −cos β). At β = π both coincide, so a
                // single facet remains (the half-plane y > 0).
                let mut normals = vec![vec![0.0, 1.0]];
                if *beta < std::f64::consts::PI {
                    normals.push(vec![beta.sin(), -beta.cos()]);
                }
                Ok(Geometry::Linear { normals, dim: 2 })
            }
            ConeSpec::Circular3D { theta0 } => {
                if dt > MAX_CURVED_DT * (1.0 + 1e-12) {
                    return Err(Error::Config(format!(
                        "circular-cone sampling uses plain grid checks on the curved \
                         boundary and requires dt ≤ {MAX_CURVED_DT:e}, got {dt:e}"
                    )));
                }
                let c = theta0.cos();
                Ok(Geometry::CircularGrid { cos_sq: c * c })
            }
        }
    }

    fn dim(&self) -> usize {
        match self {
            Geometry::Linear { dim, .. } => *dim,
            Geometry::CircularGrid { .. } => 3,
        }
    }
}

/// Reusable scratch state for killed random walks (avoids per-attempt
/// allocation in hot rejection loops).
pub(crate) struct Walker {
    p: Vec<f64>,
    q: Vec<f64>,
    dists: Vec<f64>,
}

impl Walker {
    pub(crate) fn new(dim: usize) -> Walker {
        Walker {
            p: vec![0.0; dim],
            q: vec![0.0; dim],
            dists: Vec::new(),
        }
    }

    /// Run a killed walk from `start` for `steps` steps of size `dt` (the
    /// last step has size `last_dt`). Returns `Some(k)` if the walk was
    /// killed at step `k ∈ 1..=steps` (exit during ((k−1)·dt, k·dt]),
    /// `None` if it survived every step. If `record` is given, each
    /// surviving position is appended (the caller seeds it with the start).
    #[allow(clippy::too_many_arguments)] // hot inner loop; a params struct would obscure it
    pub(crate) fn run(
        &mut self,
        geom: &Geometry,
        start: &[f64],
        dt: f64,
        steps: usize,
        last_dt: f64,
        rng: &mut ChaCha12Rng,
        mut record: Option<&mut Vec<f64>>,
    ) -> Option<usize> {
        let d = geom.dim();
        debug_assert_eq!(start.len(), d);
        self.p.clear();
        self.p.extend_from_slice(start);
        let sqrt_dt = dt.sqrt();
        let sqrt_last = last_dt.sqrt();

        match geom {
            Geometry::Linear { normals, .. } => {
                self.dists.clear();
                for n in normals {
                    self.dists.push(dot(n, &self.p));
                }
                for k in 1..=steps {
                    let (h, sh) = if k == steps {
                        (last_dt, sqrt_last)
                    } else {
                        (dt, sqrt_dt)
                    };
                    for i in 0..d {
                        let xi: f64 = rng.sample(StandardNormal);
                        self.q[i] = self.p[i] + sh * xi;
                    }
                    for (fi, n) in normals.iter().enumerate() {
                        let b = dot(n, &self.q);
                        if b <= 0.0 {
                            return Some(k);
                        }
                        let prod = 2.0 * self.dists[fi] * b;
                        if prod <= BRIDGE_EXPONENT_CUTOFF * h {
                            let u: f64 = rng.random();
                            if u < (-prod / h).exp() {
                                return Some(k);
                            }
                        }
                        self.dists[fi] = b;
                    }
                    std::mem::swap(&mut self.p, &mut self.q);
                    if let Some(buf) = record.as_deref_mut() {
                        buf.extend_from_slice(&self.p);
                    }
                }
                None
            }
            Geometry::CircularGrid { cos_sq } => {
                for k in 1..=steps {
                    let sh = if k == steps { sqrt_last } else { sqrt_dt };
                    for i in 0..3 {
                        let xi: f64 = rng.sample(StandardNormal);
                        self.q[i] = self.p[i] + sh * xi;
                    }
                    let r2 = self.q[0] * self.q[0] + self.q[1] * self.q[1] + self.q[2] * self.q[2];
                    if self.q[0] <= 0.0 || self.q[0] * self.q[0] <= r2 * cos_sq {
                        return Some(k);
                    }
                    std::mem::swap(&mut self.p, &mut self.q);
                    if let Some(buf) = record.as_deref_mut() {
                        buf.extend_from_slice(&self.p);
                    }
                }
                None
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Number of grid steps covering `horizon` at step `dt`, requiring the
/// horizon to be an integer multiple of dt (uniform-grid path contract).
pub(crate) fn grid_steps(horizon: f64, dt: f64) -> Result<usize> {
    if dt <= 0.0 || !dt.is_finite() {
        return Err(Error::Config(format!(
            "dt must be positive and finite, got {dt}"
        )));
    }
    if horizon < dt || !horizon.is_finite() {
        return Err(Error::Config(format!(
            "horizon must be ≥ dt, got {horizon}"
        )));
    }
    let k = (horizon / dt).round();
    if (k * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::Config(format!(
            "horizon {horizon} is not an integer multiple of dt = {dt}"
        )));
    }
    if k > 1e9 {
        return Err(Error::Config(format!(
            "horizon/dt = {k} exceeds the step budget 1e9"
        )));
    }
    Ok(k as usize)
}

/// Split an arbitrary positive horizon into `(steps, last_dt)` with all
/// steps of size `dt` except a possibly shorter final one.
fn split_horizon(horizon: f64, dt: f64) -> Result<(usize, f64)> {
    if horizon <= 0.0 || !horizon.is_finite() {
        return Err(Error::Config(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if dt <= 0.0 || !dt.is_finite() {
        return Err(Error::Config(format!(
            "dt must be positive and finite, got {dt}"
        )));
    }
    let full = (horizon / dt).floor();
    let rem = horizon - full * dt;
    if full >= 1e9 {
        return Err(Error::Config(
            "horizon/dt exceeds the step budget 1e9".into(),
        ));
    }
    if rem <= 1e-12 * horizon.max(1.0) {
        Ok(((full as usize).max(1), dt))
    } else {
        Ok((full as usize + 1, rem))
    }
}

// ---------------------------------------------------------------------
// public samplers
// ---------------------------------------------------------------------

/// Standard d-dimensional Brownian motion from the origin on a uniform grid:
/// increments i.i.d. N(0, dt·I).
pub fn sample_bm(
    d: usize,
    dt: f64,
    horizon: f64,
    stream: RngStreamSpec,
    index: u64,
) -> Result<PathSample> {
    if d == 0 {
        return Err(Error::domain("dimension must be ≥ 1"));
    }
    let steps = grid_steps(horizon, dt)?;
    let mut rng = stream_rng(stream, PHASE_BM, index);
    let sqrt_dt = dt.sqrt();
    let mut pts = Vec::with_capacity((steps + 1) * d);
    pts.extend(std::iter::repeat_n(0.0, d));
    for k in 1..=steps {
        for i in 0..d {
            let prev = pts[(k - 1) * d + i];
            let xi: f64 = rng.sample(StandardNormal);
            pts.push(prev + sqrt_dt * xi);
        }
    }
    PathSample::from_points(dt, d, pts, stream)
}

/// Core of the meander-by-transform construction; returns the 1-D meander
/// values on the grid `[0, 1]/dt` plus the number of degenerate source
/// paths that had to be resampled.
fn meander_transform_core(dt: f64, rng: &mut ChaCha12Rng) -> Result<(Vec<f64>, u64)> {
    let k_steps = grid_steps(1.0, dt)?;
    if k_steps < 2 {
        return Err(Error::Config(
            "meander transform needs at least 2 grid steps".into(),
        ));
    }
    let sqrt_dt = dt.sqrt();
    let mut w = vec![0.0; k_steps + 1];
    for resamples in 0..MAX_MEANDER_RESAMPLES {
        for j in 1..=k_steps {
            let xi: f64 = rng.sample(StandardNormal);
            w[j] = w[j - 1] + sqrt_dt * xi;
        }
        // Locate the step containing the last zero of the *continuous*
        // path, scanning backward: a grid sign change crosses zero surely,
        // and a same-sign step hides a sub-grid zero with the exact bridge
        // probability e^{−2 w_j w_{j+1}/dt}, sampled here per step. Plain
        // sign-change detection alone carries an O(√dt) bias that is
        // statistically visible at the sample sizes used by the
        // verification harness (measured: KS distance ≈ 0.022 at
        // dt = 1e−3), so the bridge refinement is not optional. j = 0
        // always qualifies since w_0 = 0.
        let mut lz = 0;
        for j in (0..k_steps).rev() {
            let prod = w[j] * w[j + 1];
            let crossed = if prod <= 0.0 {
                true
            } else {
                let expo = 2.0 * prod / dt;
                expo <= BRIDGE_EXPONENT_CUTOFF && {
                    let u: f64 = rng.random();
                    u < (-expo).exp()
                }
            };
            if crossed {
                lz = j;
                break;
            }
        }
        let sigma_idx = lz + 1;
        if sigma_idx == k_steps {
            // Degenerate σ = 1 − dt: the sign-constant tail is a single
            // step; resample the source path.
            continue;
        }
        let sigma = sigma_idx as f64 * dt;
        let stretch = 1.0 - sigma;
        let scale = 1.0 / stretch.sqrt();
        let mut out = Vec::with_capacity(k_steps + 1);
        out.push(0.0);
        for j in 1..=k_steps {
            // Source grid coordinate of σ + t_j(1−σ): all values land in
            // [σ_idx, K], inside the strictly sign-constant run, so the
            // interpolated value is nonzero and the output positive.
            let u = sigma_idx as f64 + j as f64 * stretch;
            let i0 = u.floor() as usize;
            let val = if i0 >= k_steps {
                w[k_steps]
            } else {
                let frac = u - i0 as f64;
                w[i0] + frac * (w[i0 + 1] - w[i0])
            };
            out.push(val.abs() * scale);
        }
        return Ok((out, resamples));
    }
    Err(Error::Sampling(format!(
        "meander transform hit the degenerate-σ branch {MAX_MEANDER_RESAMPLES} times in a row"
    )))
}

/// 1-D Brownian meander on [0, 1] via the last-zero transform: simulate BM,
/// locate the step containing the last zero (grid sign changes plus
/// bridge-sampled sub-grid zeros, so σ is the last zero of the continuous
/// path up to one-step placement), and return |W(σ + t(1−σ))|/√(1−σ) on the
/// original grid (linear interpolation, X̃(0) = 0 exactly). Also returns
/// the number of degenerate source paths (σ = 1 − dt) that were resampled.
pub fn sample_meander_transform(
    dt: f64,
    stream: RngStreamSpec,
    index: u64,
) -> Result<(PathSample, u64)> {
    let mut rng = stream_rng(stream, PHASE_MEANDER_TRANSFORM, index);
    let (out, resamples) = meander_transform_core(dt, &mut rng)?;
    let path = PathSample::from_points(dt, 1, out, stream)?;
    Ok((path, resamples))
}

/// 1-D Brownian meander at level `x` via the section construction: run BM
/// from 0, find the first grid crossing of level `x` followed by strict
/// positivity for one time unit (on the grid and between grid points, via
/// bridge zero-touch sampling), and return that unit section (starting at
/// the crossing value, within one grid-step overshoot of `x`).
///
/// Fails with a sampling error if no such section appears within the
/// horizon cap of 10⁴ time units.
pub fn sample_meander_section(
    x: f64,
    dt: f64,
    stream: RngStreamSpec,
    index: u64,
) -> Result<PathSample> {
    if x < 0.0 || !x.is_finite() {
        return Err(Error::domain(format!("level x must be ≥ 0, got {x}")));
    }
    let k_steps = grid_steps(1.0, dt)?;
    let max_steps = (MAX_SECTION_HORIZON / dt) as u64;
    let mut rng = stream_rng(stream, PHASE_MEANDER_SECTION, index);
    let sqrt_dt = dt.sqrt();

    let mut w = 0.0_f64;
    let mut consumed: u64 = 0;
    let mut buf: Vec<f64> = Vec::with_capacity(k_steps + 1);
    loop {
        // Scan for a grid crossing of level x.
        loop {
            if consumed >= max_steps {
                return Err(Error::Sampling(format!(
                    "no unit-length positive section at level {x} within horizon \
                     {MAX_SECTION_HORIZON} (grid {dt}); the level-hit search was capped"
                )));
            }
            let xi: f64 = rng.sample(StandardNormal);
            let next = w + sqrt_dt * xi;
            consumed += 1;
            let crossed = (w - x) * (next - x) <= 0.0;
            w = next;
            if crossed {
                break;
            }
        }
        // Candidate start: require strict positivity for the next unit —
        // on the grid and between grid points, using the exact bridge
        // zero-touch probability e^{−2ab/dt} for same-sign steps (plain
        // grid positivity hides sub-grid dips and biases the section law
        // by O(√dt)). On failure, resume the scan from the failure point —
        // any level crossings inside the failed window are followed by the
        // same zero within their own unit window, so they cannot be
        // section starts either.
        buf.clear();
        buf.push(w);
        let mut ok = true;
        for _ in 0..k_steps {
            if consumed >= max_steps {
                return Err(Error::Sampling(format!(
                    "no unit-length positive section at level {x} within horizon \
                     {MAX_SECTION_HORIZON} (grid {dt}); the level-hit search was capped"
                )));
            }
            let prev = w;
            let xi: f64 = rng.sample(StandardNormal);
            w += sqrt_dt * xi;
            consumed += 1;
            buf.push(w);
            if w <= 0.0 || prev <= 0.0 {
                ok = false;
                break;
            }
            let expo = 2.0 * prev * w / dt;
            if expo <= BRIDGE_EXPONENT_CUTOFF {
                let u: f64 = rng.random();
                if u < (-expo).exp() {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return PathSample::from_points(dt, 1, buf, stream);
        }
    }
}

/// Brownian motion from `x` conditioned to stay in `cone` through `horizon`,
/// by rejection: simulate killed walks (grid + bridge-corrected linear
/// facets) until one survives. Returns the accepted path and the attempt
/// report; the acceptance rate estimates W_x(τ_C > horizon).
pub fn sample_conditioned(
    cone: &ConeSpec,
    x: &[f64],
    horizon: f64,
    dt: f64,
    stream: RngStreamSpec,
    index: u64,
    max_attempts: u64,
) -> Result<(PathSample, RejectionReport)> {
    if !cone.contains(x)? {
        return Err(Error::domain(format!(
            "start point {x:?} must lie inside the cone"
        )));
    }
    if max_attempts == 0 {
        return Err(Error::domain("max_attempts must be ≥ 1"));
    }
    let steps = grid_steps(horizon, dt)?;
    let geom = Geometry::for_cone(cone, dt)?;
    let d = cone.dim();
    let mut rng = stream_rng(stream, PHASE_CONDITIONED, index);
    let mut walker = Walker::new(d);
    let mut buf: Vec<f64> = Vec::with_capacity((steps + 1) * d);
    for attempt in 1..=max_attempts {
        buf.clear();
        buf.extend_from_slice(x);
        if walker
            .run(&geom, x, dt, steps, dt, &mut rng, Some(&mut buf))
            .is_none()
        {
            let path = PathSample::from_points(dt, d, std::mem::take(&mut buf), stream)?;
            return Ok((path, RejectionReport::new(attempt, 1)));
        }
    }
    Err(Error::RejectionExhausted {
        report: RejectionReport::new(max_attempts, 0),
    })
}

/// D-meander in d ≥ 2 dimensions: coordinate 1 is a Brownian meander (via
/// the transform construction), coordinates 2..d are independent BMs, all
/// drawn from one derived stream.
pub fn sample_d_meander(
    d: usize,
    dt: f64,
    stream: RngStreamSpec,
    index: u64,
) -> Result<PathSample> {
    if d < 2 {
        return Err(Error::domain(format!(
            "D-meander needs dimension ≥ 2, got {d}"
        )));
    }
    let mut rng = stream_rng(stream, PHASE_D_MEANDER, index);
    let (meander, _) = meander_transform_core(dt, &mut rng)?;
    let k = meander.len() - 1;
    let sqrt_dt = dt.sqrt();
    let mut pts = vec![0.0; (k + 1) * d];
    for (j, m) in meander.iter().enumerate() {
        pts[j * d] = *m;
    }
    for c in 1..d {
        let mut val = 0.0;
        for j in 1..=k {
            let xi: f64 = rng.sample(StandardNormal);
            val += sqrt_dt * xi;
            pts[j * d + c] = val;
        }
    }
    PathSample::from_points(dt, d, pts, stream)
}

/// The m₁-maximizing interior unit direction: the wedge bisector, the
/// circular-cone axis, or e₁ for a half-space. Rejection sampling started
/// along this direction has the highest acceptance rate.
pub fn default_direction(cone: &ConeSpec) -> Vec<f64> {
    match cone {
        ConeSpec::Wedge { beta } => vec![(beta / 2.0).cos(), (beta / 2.0).sin()],
        ConeSpec::Circular3D { .. } => vec![1.0, 0.0, 0.0],
        ConeSpec::HalfSpace { d } => {
            let mut e1 = vec![0.0; *d];
            e1[0] = 1.0;
            e1
        }
    }
}

/// Approximate C-Brownian meander: the conditioned law started at
/// `epsilon · direction`, which converges weakly to the meander as
/// ε → 0. The returned report's acceptance rate estimates
/// W_{εu}(τ_C > 1) ≈ g(εu)·∫h(1,z)dz for small ε.
///
/// `direction` defaults to the cone's m₁-maximizing direction
/// ([`default_direction`]); if given, it must be an interior unit vector.
pub fn sample_cone_meander_approx(
    cone: &ConeSpec,
    epsilon: f64,
    direction: Option<&[f64]>,
    dt: f64,
    stream: RngStreamSpec,
    index: u64,
    max_attempts: u64,
) -> Result<(PathSample, RejectionReport)> {
    if epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(Error::domain(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let default_dir;
    let dir: &[f64] = match direction {
        Some(u) => {
            if u.len() != cone.dim() {
                return Err(Error::domain(format!(
                    "direction has dimension {}, cone has dimension {}",
                    u.len(),
                    cone.dim()
                )));
            }
            let norm = dot(u, u).sqrt();
            if (norm - 1.0).abs() > 1e-8 {
                return Err(Error::domain(format!(
                    "direction must be a unit vector (|u| = {norm})"
                )));
            }
            if !cone.contains(u)? {
                return Err(Error::domain("direction must point into the cone interior"));
            }
            u
        }
        None => {
            default_dir = default_direction(cone);
            &default_dir
        }
    };
    let x: Vec<f64> = dir.iter().map(|c| c * epsilon).collect();
    sample_conditioned(cone, &x, 1.0, dt, stream, index, max_attempts)
}

// ---------------------------------------------------------------------
// ensemble drivers (parallel, worker-count invariant)
// ---------------------------------------------------------------------

/// Estimate W_x(τ_C > horizon) from a fixed number of independent killed
/// walks, in parallel. The horizon may be any positive time (a shorter
/// final step is used when it is not a grid multiple).
pub fn survival_mc(
    cone: &ConeSpec,
    x: &[f64],
    horizon: f64,
    dt: f64,
    stream: RngStreamSpec,
    attempts: u64,
) -> Result<RejectionReport> {
    if !cone.contains(x)? {
        return Err(Error::domain(format!(
            "start point {x:?} must lie inside the cone"
        )));
    }
    let (steps, last_dt) = split_horizon(horizon, dt)?;
    let geom = Geometry::for_cone(cone, dt)?;
    let accepted = (0..attempts)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = stream_rng(stream, PHASE_SURVIVAL, i);
            let mut walker = Walker::new(geom.dim());
            walker
                .run(&geom, x, dt, steps, last_dt, &mut rng, None)
                .is_none()
        })
        .count();
    Ok(RejectionReport::new(attempts, accepted as u64))
}

/// Draw `n` accepted conditioned paths in parallel and reduce each to a
/// summary with `f` (avoids materializing n full paths at once). Returns
/// the summaries in index order plus the merged rejection report.
#[allow(clippy::too_many_arguments)] // mirrors sample_conditioned_ensemble plus the map
pub fn sample_conditioned_ensemble_map<T: Send>(
    cone: &ConeSpec,
    x: &[f64],
    horizon: f64,
    dt: f64,
    stream: RngStreamSpec,
    n: usize,
    max_attempts: u64,
    f: impl Fn(&PathSample) -> T + Sync,
) -> Result<(Vec<T>, RejectionReport)> {
    let results: Result<Vec<(T, u64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (path, report) =
                sample_conditioned(cone, x, horizon, dt, stream, i as u64, max_attempts)?;
            Ok((f(&path), report.attempts))
        })
        .collect();
    let pairs = results?;
    let attempts: u64 = pairs.iter().map(|(_, a)| a).sum();
    let summaries = pairs.into_iter().map(|(t, _)| t).collect();
    Ok((summaries, RejectionReport::new(attempts, n as u64)))
}

/// Draw `n` accepted conditioned paths in parallel. Intended for modest `n`
/// (paths are kept whole); use [`sample_conditioned_ensemble_map`] for large
/// statistical ensembles.
pub fn sample_conditioned_ensemble(
    cone: &ConeSpec,
    x: &[f64],
    horizon: f64,
    dt: f64,
    stream: RngStreamSpec,
    n: usize,
    max_attempts: u64,
) -> Result<(Vec<PathSample>, RejectionReport)> {
    sample_conditioned_ensemble_map(cone, x, horizon, dt, stream, n, max_attempts, |p| p.clone())
}

/// Draw `n` meander sections at level `x` in parallel, retrying any index
/// whose level search hits the horizon cap with a fresh derived stream
/// (distributionally safe: the section law does not depend on which
/// candidate crossing succeeds). Returns the sections plus the number of
/// horizon-cap retries.
pub fn sample_meander_section_ensemble(
    x: f64,
    dt: f64,
    stream: RngStreamSpec,
    n: usize,
) -> Result<(Vec<PathSample>, u64)> {
    const RETRY_STRIDE: u64 = 1 << 47;
    const MAX_RETRIES: u64 = 64;
    let results: Result<Vec<(PathSample, u64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut retries = 0;
            loop {
                match sample_meander_section(x, dt, stream, i as u64 + retries * RETRY_STRIDE) {
                    Ok(path) => return Ok((path, retries)),
                    Err(Error::Sampling(_)) if retries < MAX_RETRIES => retries += 1,
                    Err(e) => return Err(e),
                }
            }
        })
        .collect();
    let pairs = results?;
    let retries = pairs.iter().map(|(_, r)| r).sum();
    Ok((pairs.into_iter().map(|(p, _)| p).collect(), retries))
}
