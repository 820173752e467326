//! Dirichlet spectral data of the cone cross-section (the cap O ⊂ S^{d−1}):
//! eigenvalues λ_j, exponents α_j = √(λ_j + (d/2 − 1)²), orthonormal angular
//! modes m_j, and the surface integral ∫_O m₁ dσ.
//!
//! Closed forms cover the wedge (sine modes on an arc) and the half-space
//! (m₁ ∝ cos θ on a hemisphere); the 3-D circular cone needs the principal
//! Legendre degree ν solving P_ν(cos θ₀) = 0, found by bracketing and
//! bisection. Only wedges get a multi-mode basis — every implemented formula
//! for the other families depends on (α₁, m₁) alone.
//!
//! The measure σ is the surface measure of S^{d−1} restricted to the cap;
//! for the circular cone and half-space the azimuthal directions are
//! integrated out, leaving the colatitude weight |S^{d−2}| sin^{d−2}θ dθ
//! (2π sin θ dθ in d = 3).

use crate::cones::ConeSpec;
use crate::error::{Error, Result};
use crate::quad;
use crate::specfun::{self, SeriesControl};

/// Sign-scan step and upper limit for bracketing the principal Legendre
/// degree; the first sign change of ν ↦ P_ν(cos θ₀) on [0.5, 200] brackets
/// the smallest positive root for every supported half-angle.
const NU_SCAN_START: f64 = 0.5;
const NU_SCAN_STEP: f64 = 0.5;
const NU_SCAN_END: f64 = 200.0;
/// Residual requirement |P_ν(cos θ₀)| at the returned degree.
const NU_RESIDUAL_TOL: f64 = 1e-10;
/// Default bisection tolerance for basis construction.
const NU_DEFAULT_TOL: f64 = 1e-10;
/// Quadrature agreement target for normalization and surface integrals.
const QUAD_TOL: f64 = 1e-10;
/// Default number of wedge series modes.
pub const DEFAULT_WEDGE_MODES: usize = 50;

/// Angular shape of one eigenfunction, dispatched by cone family.
#[derive(Debug, Clone, Copy, PartialEq)]
enum ModeShape {
    /// √(2/β) · sin(jπφ/β) on the arc (0, β).
    WedgeSine { j: usize, beta: f64 },
    /// N · P_ν(cos θ) on the spherical cap (0, θ₀).
    CapLegendre { nu: f64, norm: f64 },
    /// N_d · cos θ on the hemisphere (0, π/2) in dimension d ≥ 2.
    HemisphereCosine { norm: f64 },
    /// d = 1: the cap is the single point {+1} with unit mass; m₁ ≡ 1.
    PointMass,
}

/// One spectral entry: eigenvalue, exponent, and the angular mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEntry {
    /// Dirichlet eigenvalue λ_j of the cap.
    pub lambda: f64,
    /// Exponent α_j = √(λ_j + (d/2 − 1)²).
    pub alpha: f64,
    mode: ModeShape,
}

impl SpectralEntry {
    /// m_j at the cap coordinate (no range check; quadrature hot path).
    #[inline]
    pub(crate) fn eval_unchecked(&self, angular: f64) -> f64 {
        match self.mode {
            ModeShape::WedgeSine { j, beta } => {
                (2.0 / beta).sqrt() * (j as f64 * std::f64::consts::PI * angular / beta).sin()
            }
            ModeShape::CapLegendre { nu, norm } => {
                // The series terminates or converges geometrically for
                // cos θ ≥ 0, so the default control cannot fail here.
                norm * specfun::legendre_p(nu, angular.cos(), SeriesControl::default())
                    .expect("Legendre series converges on the cap range")
            }
            ModeShape::HemisphereCosine { norm } => norm * angular.cos(),
            ModeShape::PointMass => 1.0,
        }
    }
}

/// Dirichlet spectral data of a cone's cap, sorted by eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    /// The cone this basis belongs to.
    pub cone: ConeSpec,
    /// Entries (λ_j, α_j, m_j), λ strictly increasing.
    pub entries: Vec<SpectralEntry>,
    /// ∫_O m₁ dσ.
    pub m1_integral: f64,
}

impl SpectralBasis {
    /// Build the spectral data for any supported cone with default settings
    /// (J = 50 modes for wedges, principal mode only otherwise).
    pub fn for_cone(cone: &ConeSpec) -> Result<SpectralBasis> {
        match *cone {
            ConeSpec::Wedge { beta } => wedge_spectrum(beta, DEFAULT_WEDGE_MODES),
            ConeSpec::Circular3D { theta0 } => circular_cone_basis(theta0),
            ConeSpec::HalfSpace { d } => half_space_basis(d),
        }
    }

    /// Number of modes in the basis.
    pub fn num_modes(&self) -> usize {
        self.entries.len()
    }

    /// Principal eigenvalue λ₁.
    pub fn lambda1(&self) -> f64 {
        self.entries[0].lambda
    }

    /// Principal exponent α₁.
    pub fn alpha1(&self) -> f64 {
        self.entries[0].alpha
    }

    /// Ambient dimension d.
    pub fn dim(&self) -> usize {
        self.cone.dim()
    }

    /// Exponent of the meander exit law: the survival probability beyond the
    /// unit horizon decays as t^(−α₁/2 + (d−2)/4).
    pub fn exit_exponent(&self) -> f64 {
        -self.alpha1() / 2.0 + (self.dim() as f64 - 2.0) / 4.0
    }

    /// Upper end of the cap coordinate range (0 for the d = 1 point cap).
    ///
    /// Polar coordinates on the cone are (r, u) with u ∈ [0, `cap_upper`]:
    /// the wedge angle, the colatitude from the cone axis, or the colatitude
    /// from the inward normal for half-spaces.
    pub fn cap_upper(&self) -> f64 {
        match self.cone {
            ConeSpec::Wedge { beta } => beta,
            ConeSpec::Circular3D { theta0 } => theta0,
            ConeSpec::HalfSpace { d } => {
                if d == 1 {
                    0.0
                } else {
                    std::f64::consts::FRAC_PI_2
                }
            }
        }
    }

    /// σ-measure density at a cap coordinate, i.e. the weight w(u) with
    /// ∫_O f dσ = ∫ f(u) w(u) du (a point mass of weight 1 when d = 1).
    ///
    /// Together with [`SpectralBasis::cap_upper`] this turns cone volume
    /// integrals into iterated polar ones:
    /// ∫_C f dy = ∫_0^∞ ∫_0^upper f(r, u) r^{d−1} w(u) du dr.
    pub fn cap_weight(&self, angular: f64) -> f64 {
        match self.cone {
            ConeSpec::Wedge { .. } => 1.0,
            ConeSpec::Circular3D { .. } => 2.0 * std::f64::consts::PI * angular.sin(),
            ConeSpec::HalfSpace { d } => match d {
                1 => 1.0,
                2 => 2.0, // two symmetric colatitude rays on S¹
                _ => sphere_area(d - 2) * angular.sin().powi(d as i32 - 2),
            },
        }
    }
}

/// Surface area of the unit sphere S^k ⊂ R^{k+1}: 2π^{(k+1)/2} / Γ((k+1)/2).
pub(crate) fn sphere_area(k: usize) -> f64 {
    let half = (k as f64 + 1.0) / 2.0;
    let ln = std::f64::consts::LN_2 + half * std::f64::consts::PI.ln()
        - specfun::log_gamma(half).expect("positive argument");
    ln.exp()
}

/// Closed-form wedge spectrum: λ_j = (jπ/β)², m_j(φ) = √(2/β) sin(jπφ/β),
/// α_j = jπ/β (d = 2), with m₁_integral = √(2/β)·2β/π.
pub fn wedge_spectrum(beta: f64, j_modes: usize) -> Result<SpectralBasis> {
    let cone = ConeSpec::wedge(beta)?;
    if j_modes < 1 {
        return Err(Error::domain("wedge spectrum needs at least one mode"));
    }
    let entries = (1..=j_modes)
        .map(|j| {
            let alpha = j as f64 * std::f64::consts::PI / beta;
            SpectralEntry {
                lambda: alpha * alpha,
                alpha,
                mode: ModeShape::WedgeSine { j, beta },
            }
        })
        .collect();
    let m1_integral = (2.0 / beta).sqrt() * 2.0 * beta / std::f64::consts::PI;
    Ok(SpectralBasis {
        cone,
        entries,
        m1_integral,
    })
}

/// Principal Legendre degree for the circular cone: smallest ν > 0 with
/// P_ν(cos θ₀) = 0, by sign-scan bracketing and bisection to |Δν| ≤ tol
/// (and residual ≤ 1e−10 regardless of tol). Returns (ν, λ₁, α₁) with
/// λ₁ = ν(ν+1) and α₁ = ν + 1/2.
pub fn circular_cone_principal(theta0: f64, tol: f64) -> Result<(f64, f64, f64)> {
    // Constructor enforces θ₀ ∈ (0, π/2].
    ConeSpec::circular3d(theta0)?;
    if tol <= 0.0 || !tol.is_finite() {
        return Err(Error::domain(format!(
            "bisection tolerance must be positive, got {tol}"
        )));
    }
    let x0 = theta0.cos();
    let ctl = SeriesControl::default();
    let f = |nu: f64| specfun::legendre_p(nu, x0, ctl);

    // Bracket: P_ν(cos θ₀) > 0 for 0 ≤ ν < ν₁ (principal positivity), so the
    // first sign change of the scan brackets the smallest positive root.
    let mut a = NU_SCAN_START;
    let mut fa = f(a)?;
    let mut bracket = None;
    let mut b = a;
    while b < NU_SCAN_END {
        b = a + NU_SCAN_STEP;
        let fb = f(b)?;
        if fa.signum() != fb.signum() || fb == 0.0 {
            bracket = Some((a, fa, b, fb));
            break;
        }
        a = b;
        fa = fb;
    }
    let (mut a, mut fa, mut b, _fb) = bracket.ok_or_else(|| {
        Error::Numeric(format!(
            "no sign change of P_ν(cos {theta0}) for ν ∈ [{NU_SCAN_START}, {NU_SCAN_END}] \
             (half-angle too small for the scan range)"
        ))
    })?;

    // Bisect until both the user tolerance and the residual target hold (or
    // the interval collapses to machine precision).
    let mut nu = 0.5 * (a + b);
    let mut fm = f(nu)?;
    for _ in 0..200 {
        if fm == 0.0 || (b - a <= tol && fm.abs() <= NU_RESIDUAL_TOL) {
            break;
        }
        if fa.signum() == fm.signum() {
            a = nu;
            fa = fm;
        } else {
            b = nu;
        }
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        nu = mid;
        fm = f(nu)?;
    }
    if fm.abs() > NU_RESIDUAL_TOL {
        return Err(Error::Numeric(format!(
            "bisection stalled at ν = {nu} with residual {fm:.3e} > {NU_RESIDUAL_TOL:.0e}"
        )));
    }
    let lambda1 = nu * (nu + 1.0);
    Ok((nu, lambda1, nu + 0.5))
}

/// Principal-mode basis for the 3-D circular cone: m₁(θ) = N·P_ν(cos θ) with
/// N fixed by unit L²(O, σ) norm (σ carries the 2π azimuth and sin θ
/// Jacobian), plus the ∫_O m₁ dσ quadrature value.
pub fn circular_cone_basis(theta0: f64) -> Result<SpectralBasis> {
    let cone = ConeSpec::circular3d(theta0)?;
    let (nu, lambda, alpha) = circular_cone_principal(theta0, NU_DEFAULT_TOL)?;
    let ctl = SeriesControl::default();
    let sq_norm = quad::integrate_adaptive(
        |theta| {
            let p = specfun::legendre_p(nu, theta.cos(), ctl)
                .expect("Legendre series converges on the cap range");
            2.0 * std::f64::consts::PI * p * p * theta.sin()
        },
        0.0,
        theta0,
        QUAD_TOL,
        64,
    )?;
    let norm = 1.0 / sq_norm.sqrt();
    let entries = vec![SpectralEntry {
        lambda,
        alpha,
        mode: ModeShape::CapLegendre { nu, norm },
    }];
    let mut basis = SpectralBasis {
        cone,
        entries,
        m1_integral: f64::NAN,
    };
    basis.m1_integral = m1_surface_integral(&basis)?;
    Ok(basis)
}

/// Principal-mode basis for the half-space {x₁ > 0} in R^d.
///
/// For d ≥ 2 the cap is a hemisphere: m₁(θ) = N_d cos θ, λ₁ = d − 1,
/// α₁ = d/2, with N_d = √(d·Γ(d/2)/π^{d/2}) from the closed-form norm.
/// For d = 1 the cap degenerates to the point {+1}: λ₁ = 0 (no curvature to
/// generate a spectral gap), α₁ = √(0 + (1/2 − 1)²) = 1/2, m₁ ≡ 1.
pub fn half_space_basis(d: usize) -> Result<SpectralBasis> {
    let cone = ConeSpec::half_space(d)?;
    let entries = if d == 1 {
        vec![SpectralEntry {
            lambda: 0.0,
            alpha: 0.5,
            mode: ModeShape::PointMass,
        }]
    } else {
        let df = d as f64;
        let norm = (df
            * (specfun::log_gamma(df / 2.0)? - (df / 2.0) * std::f64::consts::PI.ln()).exp())
        .sqrt();
        vec![SpectralEntry {
            lambda: df - 1.0,
            alpha: df / 2.0,
            mode: ModeShape::HemisphereCosine { norm },
        }]
    };
    let mut basis = SpectralBasis {
        cone,
        entries,
        m1_integral: f64::NAN,
    };
    basis.m1_integral = m1_surface_integral(&basis)?;
    Ok(basis)
}

/// m₁ at a cap coordinate, with range checking: positive on the open cap,
/// zero (to Dirichlet tolerance) at the cap boundary.
pub fn principal_eigenfunction(basis: &SpectralBasis, angular: f64) -> Result<f64> {
    let upper = basis.cap_upper();
    if !angular.is_finite() || angular < 0.0 || angular > upper {
        return Err(Error::domain(format!(
            "cap coordinate {angular} outside [0, {upper}] for {:?}",
            basis.cone
        )));
    }
    Ok(basis.entries[0].eval_unchecked(angular))
}

/// ∫_O m₁ dσ by Gauss–Legendre quadrature with node doubling until two
/// successive estimates agree to 1e−10 (exact point evaluation when d = 1).
pub fn m1_surface_integral(basis: &SpectralBasis) -> Result<f64> {
    let upper = basis.cap_upper();
    if upper == 0.0 {
        // d = 1 point cap: σ is a unit point mass.
        return Ok(basis.entries[0].eval_unchecked(0.0));
    }
    let m1 = &basis.entries[0];
    quad::integrate_adaptive(
        |u| m1.eval_unchecked(u) * basis.cap_weight(u),
        0.0,
        upper,
        QUAD_TOL,
        64,
    )
}
