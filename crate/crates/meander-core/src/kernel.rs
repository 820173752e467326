//! Heat kernel of Brownian motion killed at the cone boundary, and the
//! entrance law of the cone meander.
//!
//! For a cone `C` with spectral data `(α_j, m_j)` the killed transition
//! density factorizes over the cap modes: in polar coordinates `x = (ρ, θ)`,
//! `y = (r, η)`,
//!
//! ```text
//! p(t, x, y) = e^{−(ρ² + r²)/2t} / (t (ρr)^{d/2−1})
//!              · Σ_j I_{α_j}(ρr/t) m_j(θ) m_j(η),
//! ```
//!
//! where `I_ν` is the modified Bessel function. As the start point shrinks to
//! the apex the kernel splits into a start factor and an arrival profile,
//! `p(t, x, y) ≈ g(x) · h(t, y)` with
//!
//! ```text
//! g(x)    = ρ^{α₁ − (d/2 − 1)} m₁(θ),
//! h(t, y) = r^{α₁ − (d/2 − 1)} e^{−r²/2t} m₁(η) / (2^{α₁} Γ(α₁ + 1) t^{α₁+1}).
//! ```
//!
//! Conditioning on survival up to time 1 and letting the start point go to
//! the apex yields the meander's entrance density
//!
//! ```text
//! e(t, y) = c · t^{−α₁−1} r^{α₁ − (d/2−1)} e^{−r²/2t} m₁(η) · P_y(τ_C > 1 − t),
//! ```
//!
//! for `0 < t ≤ 1`, with the normalization constant fixed by `∫ e(1, y) dy = 1`:
//!
//! ```text
//! 1/c = 2^{α₁/2 + (d−2)/4} Γ(α₁/2 + (d+2)/4) ∫_O m₁ dσ.
//! ```
//!
//! Note that `e(t, y) = c · 2^{α₁} Γ(α₁+1) · h(t, y) · P_y(τ_C > 1 − t)`, so
//! `∫ h(1, z) dz = 1 / (c · 2^{α₁} Γ(α₁+1))` — the Γ-factors of `h` do not
//! cancel against `c`.
//!
//! Beyond the unit horizon the conditioning stops and the meander's residual
//! lifetime is polynomial: `P(τ > t) = t^{−α₁/2 + (d−2)/4}` for `t ≥ 1`.
//!
//! Everything here is assembled in log space: Bessel values arrive as
//! logarithms, the mode sum is factored by its leading term, and the omitted
//! tail is bounded explicitly from `I_α(z) ≤ (z/2)^α e^z / Γ(α+1)`.

use std::f64::consts::{LN_2, PI};

use crate::cones::ConeSpec;
use crate::error::{Error, Result};
use crate::quad;
use crate::sampler::{self, RngStreamSpec};
use crate::specfun::{self, SeriesControl};
use crate::spectrum::SpectralBasis;
use crate::stats;

/// A mode whose Bessel factor is below `e^{−MODE_CUTOFF_LOG}` of the leading
/// one contributes less than ~3e−20 relatively; the sum stops there.
const MODE_CUTOFF_LOG: f64 = 45.0;

/// Absolute tail bound above which a kernel evaluation is flagged as not
/// meeting the default tolerance.
const KERNEL_TAIL_TOLERANCE: f64 = 1e-8;

/// Radial truncation for entrance-density quadrature at `t = 1`: the Γ-type
/// integrand `r^{α₁+d/2} e^{−r²/2}` has relative mass below 1e−30 beyond
/// `r = 12` for every supported cone.
const RADIAL_CUTOFF: f64 = 12.0;

/// Relative tolerance for the internal adaptive quadratures.
const QUAD_TOL: f64 = 1e-11;

/// Monte Carlo sample count used by [`EntranceLaw::entrance_density`] when
/// the survival mode is `MonteCarlo`. Callers needing a different budget can
/// evaluate [`survival_probability`] directly and scale the `t = 1` density.
const DEFAULT_SURVIVAL_SAMPLES: u64 = 100_000;

/// One heat-kernel evaluation with its truncation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEval {
    /// The kernel value `p(t, x, y)` (clamped to `≥ 0`; the mode sum can
    /// produce a tiny negative residue near the boundary).
    pub value: f64,
    /// Explicit absolute bound on the omitted series tail, from
    /// `I_α(z) ≤ (z/2)^α e^z / Γ(α+1)` and `|m_j(θ) m_j(η)| ≤ 2/β`.
    pub tail_bound: f64,
    /// Whether `tail_bound ≤ 1e−8`. A cleared flag means the 50-mode basis is
    /// too short for this argument (large `ρr/t`); the value is still the
    /// exact partial sum and `tail_bound` quantifies what is missing.
    pub within_tolerance: bool,
}

/// Evaluate the killed heat kernel on a planar wedge by the spectral series.
///
/// Requires a wedge basis, `t > 0`, and `x, y` strictly inside the wedge.
/// The mode sum is factored by its leading Bessel term so that the assembly
/// never under- or overflows for finite inputs; modes are dropped once their
/// Bessel factor falls below `e^{−45}` of the leading one, and the omitted
/// tail (dropped modes plus everything beyond the basis) is bounded
/// explicitly in the result.
pub fn heat_kernel_wedge(
    basis: &SpectralBasis,
    t: f64,
    x: &[f64],
    y: &[f64],
) -> Result<KernelEval> {
    let beta = match basis.cone {
        ConeSpec::Wedge { beta } => beta,
        _ => {
            return Err(Error::Config(
                "heat_kernel_wedge requires a wedge spectral basis; circular cones and \
                 half-spaces carry only the principal mode"
                    .into(),
            ));
        }
    };
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::domain(format!(
            "heat kernel requires t > 0, got {t}"
        )));
    }
    if !basis.cone.contains(x)? {
        return Err(Error::domain(
            "heat kernel start point x must lie inside the wedge",
        ));
    }
    if !basis.cone.contains(y)? {
        return Err(Error::domain(
            "heat kernel end point y must lie inside the wedge",
        ));
    }
    let (rho, theta) = basis.cone.polar(x)?;
    let (r, eta) = basis.cone.polar(y)?;

    let z = rho * r / t;
    // d = 2, so the prefactor (ρr)^{d/2−1} is 1.
    let ln_pref = -(rho * rho + r * r) / (2.0 * t) - t.ln();
    let ctl = SeriesControl::default();

    let ln_i1 = specfun::bessel_i_log(basis.entries[0].alpha, z, ctl)?;
    let mut acc = 0.0;
    // 0-based index of the first mode NOT included in the sum.
    let mut omitted_from = basis.num_modes();
    for (idx, entry) in basis.entries.iter().enumerate() {
        let ln_ij = if idx == 0 {
            ln_i1
        } else {
            specfun::bessel_i_log(entry.alpha, z, ctl)?
        };
        let rel = ln_ij - ln_i1;
        if rel < -MODE_CUTOFF_LOG {
            omitted_from = idx;
            break;
        }
        acc += rel.exp() * entry.eval_unchecked(theta) * entry.eval_unchecked(eta);
    }
    let value = ((ln_pref + ln_i1).exp() * acc).max(0.0);

    // Bound every omitted term: |term_j| ≤ e^{ln_pref} (z/2)^{α_j} e^z / Γ(α_j+1) · 2/β
    // with α_j = jπ/β. The bound terms eventually decay super-exponentially
    // (Γ wins once α_j ≳ e·z/2), so direct summation terminates.
    let ln_base = ln_pref + z + (2.0 / beta).ln();
    let ln_half_z = (z / 2.0).ln();
    let mut tail = 0.0_f64;
    let mut j = omitted_from + 1; // 1-based mode index of the first omitted term
    loop {
        let alpha_j = j as f64 * PI / beta;
        let term = (ln_base + alpha_j * ln_half_z - specfun::log_gamma(alpha_j + 1.0)?).exp();
        tail += term;
        j += 1;
        if term == 0.0 || term <= tail * 1e-16 || !tail.is_finite() {
            break;
        }
        if j > omitted_from + 200_000 {
            return Err(Error::Convergence {
                context: "heat kernel tail bound".into(),
                max_terms: 200_000,
            });
        }
    }

    Ok(KernelEval {
        value,
        tail_bound: tail,
        within_tolerance: tail <= KERNEL_TAIL_TOLERANCE,
    })
}

/// How the cone survival probability `P_y(τ_C > s)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurvivalMode {
    /// Integrate the spectral series kernel over the cone (wedges only,
    /// where the full mode expansion is available). Deterministic; the
    /// reported standard error is 0.
    Series,
    /// The reflection-principle formula `2Φ(a/√s) − 1` for a half-space at
    /// distance `a` (exact; standard error 0).
    ClosedForm,
    /// Kill-counting Monte Carlo over `n` independent walks with the given
    /// step size and RNG stream. Works for every cone family; the only
    /// option for circular cones beyond the principal-mode identities.
    MonteCarlo {
        /// Walk step size. Circular cones require `dt ≤ 1e−4` (the grid
        /// membership test has an O(√dt) boundary bias; linear boundaries
        /// are bridge-corrected and exact at any `dt`).
        dt: f64,
        /// RNG stream for reproducibility.
        stream: RngStreamSpec,
    },
}

impl SurvivalMode {
    /// The preferred evaluation mode for each cone family: the deterministic
    /// series for wedges, the closed form for half-spaces, and Monte Carlo
    /// (at the finest supported step) for circular cones.
    pub fn default_for(cone: &ConeSpec, stream: RngStreamSpec) -> SurvivalMode {
        match cone {
            ConeSpec::Wedge { .. } => SurvivalMode::Series,
            ConeSpec::HalfSpace { .. } => SurvivalMode::ClosedForm,
            ConeSpec::Circular3D { .. } => SurvivalMode::MonteCarlo { dt: 1e-4, stream },
        }
    }
}

/// `P_y(τ_C > s)` with a standard error: `(estimate, stderr)`.
///
/// `s = 0` returns `(1, 0)` exactly (the exit time is a.s. positive from an
/// interior point). The `n` argument is the Monte Carlo sample count and is
/// ignored by the deterministic modes. Unsupported cone/mode pairs (series
/// off a wedge, closed form off a half-space) are configuration errors.
pub fn survival_probability(
    cone: &ConeSpec,
    basis: &SpectralBasis,
    y: &[f64],
    s: f64,
    mode: &SurvivalMode,
    n: u64,
) -> Result<(f64, f64)> {
    if basis.cone != *cone {
        return Err(Error::Config(
            "survival_probability: the spectral basis was built for a different cone".into(),
        ));
    }
    if !cone.contains(y)? {
        return Err(Error::domain(
            "survival_probability requires y inside the cone",
        ));
    }
    if !s.is_finite() || s < 0.0 {
        return Err(Error::domain(format!(
            "survival horizon must satisfy s ≥ 0, got {s}"
        )));
    }
    if s == 0.0 {
        return Ok((1.0, 0.0));
    }
    match *mode {
        SurvivalMode::Series => {
            let beta = match *cone {
                ConeSpec::Wedge { beta } => beta,
                _ => {
                    return Err(Error::Config(
                        "series survival mode needs the full wedge mode expansion; use the \
                         closed form (half-space) or Monte Carlo (circular cone) instead"
                            .into(),
                    ));
                }
            };
            Ok((wedge_survival_series(basis, beta, y, s)?, 0.0))
        }
        SurvivalMode::ClosedForm => {
            if !matches!(cone, ConeSpec::HalfSpace { .. }) {
                return Err(Error::Config(
                    "closed-form survival mode applies only to half-spaces".into(),
                ));
            }
            let a = y[0];
            Ok((2.0 * stats::normal_cdf(a / s.sqrt()) - 1.0, 0.0))
        }
        SurvivalMode::MonteCarlo { dt, stream } => {
            let report = sampler::survival_mc(cone, y, s, dt, stream, n)?;
            Ok((report.acceptance_rate, report.rate_stderr()))
        }
    }
}

/// `∫_C p(s, y, z) dz` for a wedge: the angular integral of each mode is
/// closed-form (`∫₀^β m_j = √(2/β) β (1 − cos jπ)/(jπ)`, zero for even `j`),
/// leaving one radial quadrature per contributing mode.
fn wedge_survival_series(basis: &SpectralBasis, beta: f64, y: &[f64], s: f64) -> Result<f64> {
    let (rho, theta) = basis.cone.polar(y)?;
    let r_max = rho + RADIAL_CUTOFF * s.sqrt();
    let ctl = SeriesControl::default();
    let mut total = 0.0_f64;
    for (idx, entry) in basis.entries.iter().enumerate() {
        let j = idx + 1;
        if j % 2 == 0 {
            continue; // ∫₀^β sin(jπφ/β) dφ = 0 for even j
        }
        let angular = (2.0 / beta).sqrt() * 2.0 * beta / (j as f64 * PI);
        let alpha = entry.alpha;
        let radial = quad::integrate_adaptive(
            |r| {
                if r <= 0.0 {
                    return 0.0;
                }
                let ln_i = specfun::bessel_i_log(alpha, rho * r / s, ctl)
                    .expect("Bessel series converges for finite nonnegative arguments");
                (ln_i - (rho * rho + r * r) / (2.0 * s)).exp() * r / s
            },
            0.0,
            r_max,
            QUAD_TOL,
            64,
        )?;
        let contribution = entry.eval_unchecked(theta) * angular * radial;
        total += contribution;
        if contribution.abs() <= 1e-12 * total.abs().max(1e-300) {
            return Ok(total.clamp(0.0, 1.0));
        }
    }
    Err(Error::Convergence {
        context: "wedge survival series".into(),
        max_terms: basis.num_modes(),
    })
}

/// The entrance law of the cone meander: normalization constant, leading
/// kernel factors, the time-`t` density of the conditioned endpoint, and the
/// polynomial exit law beyond the unit horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct EntranceLaw {
    basis: SpectralBasis,
    c: f64,
    alpha1: f64,
    d: usize,
}

impl EntranceLaw {
    /// Build the entrance law from spectral data. The normalization
    /// `1/c = 2^{α₁/2 + (d−2)/4} Γ(α₁/2 + (d+2)/4) ∫_O m₁ dσ` is assembled in
    /// log space and must come out positive and finite.
    pub fn new(basis: SpectralBasis) -> Result<EntranceLaw> {
        let alpha1 = basis.alpha1();
        let d = basis.dim();
        let df = d as f64;
        let ln_inv_c = (alpha1 / 2.0 + (df - 2.0) / 4.0) * LN_2
            + specfun::log_gamma(alpha1 / 2.0 + (df + 2.0) / 4.0)?
            + basis.m1_integral.ln();
        let c = (-ln_inv_c).exp();
        if !c.is_finite() || c <= 0.0 {
            return Err(Error::Numeric(format!(
                "entrance normalization failed: c = {c} for α₁ = {alpha1}, d = {d}"
            )));
        }
        Ok(EntranceLaw {
            basis,
            c,
            alpha1,
            d,
        })
    }

    /// Convenience constructor: default spectral basis for the cone, then
    /// [`EntranceLaw::new`].
    pub fn for_cone(cone: &ConeSpec) -> Result<EntranceLaw> {
        EntranceLaw::new(SpectralBasis::for_cone(cone)?)
    }

    /// The spectral basis this law was built from.
    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    /// The cone.
    pub fn cone(&self) -> &ConeSpec {
        &self.basis.cone
    }

    /// The entrance normalization constant `c`.
    pub fn normalization(&self) -> f64 {
        self.c
    }

    /// Principal exponent α₁.
    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.d
    }

    /// The common radial exponent `α₁ − (d/2 − 1)` of `g`, `h`, and `e`.
    fn radial_exponent(&self) -> f64 {
        self.alpha1 - (self.d as f64 / 2.0 - 1.0)
    }

    /// The leading-order factorization `p(t, x, y) ≈ g(x) h(t, y)` of the
    /// kernel near the apex: returns `(g(x), h(t, y))`. Requires `t > 0` and
    /// both points inside the cone.
    pub fn leading_factors(&self, x: &[f64], t: f64, y: &[f64]) -> Result<(f64, f64)> {
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::domain(format!(
                "leading_factors requires t > 0, got {t}"
            )));
        }
        if !self.basis.cone.contains(x)? {
            return Err(Error::domain("leading_factors requires x inside the cone"));
        }
        if !self.basis.cone.contains(y)? {
            return Err(Error::domain("leading_factors requires y inside the cone"));
        }
        let (rho, theta) = self.basis.cone.polar(x)?;
        let (r, eta) = self.basis.cone.polar(y)?;
        let k = self.radial_exponent();
        let g = rho.powf(k) * self.basis.entries[0].eval_unchecked(theta);
        let ln_h = k * r.ln()
            - r * r / (2.0 * t)
            - self.alpha1 * LN_2
            - specfun::log_gamma(self.alpha1 + 1.0)?
            - (self.alpha1 + 1.0) * t.ln();
        let h = ln_h.exp() * self.basis.entries[0].eval_unchecked(eta);
        Ok((g, h))
    }

    /// The entrance density `e(t, y)` of the meander at time `0 < t ≤ 1`.
    ///
    /// At `t = 1` the survival factor is exactly 1 and the value is fully
    /// deterministic. For `t < 1` the factor `P_y(τ_C > 1 − t)` is evaluated
    /// in the given [`SurvivalMode`]; with `MonteCarlo` the result carries
    /// that mode's sampling error (100 000 walks).
    pub fn entrance_density(&self, t: f64, y: &[f64], mode: &SurvivalMode) -> Result<f64> {
        if !t.is_finite() || t <= 0.0 || t > 1.0 {
            return Err(Error::domain(format!(
                "entrance density is defined for 0 < t ≤ 1, got t = {t}"
            )));
        }
        if !self.basis.cone.contains(y)? {
            return Err(Error::domain("entrance density requires y inside the cone"));
        }
        let (r, eta) = self.basis.cone.polar(y)?;
        let ln_base = self.c.ln() - (self.alpha1 + 1.0) * t.ln() + self.radial_exponent() * r.ln()
            - r * r / (2.0 * t);
        let base = ln_base.exp() * self.basis.entries[0].eval_unchecked(eta);
        let survival = if t == 1.0 {
            1.0
        } else {
            survival_probability(
                &self.basis.cone,
                &self.basis,
                y,
                1.0 - t,
                mode,
                DEFAULT_SURVIVAL_SAMPLES,
            )?
            .0
        };
        Ok(base * survival)
    }

    /// `∫_C e(1, y) dy` by quadrature: the angular factor is `∫_O m₁ dσ` and
    /// the radial integral is adaptive on `[0, 12]`. Equals 1 up to
    /// quadrature error when the normalization is consistent.
    pub fn entrance_mass(&self) -> Result<f64> {
        let k = self.radial_exponent() + (self.d as f64 - 1.0);
        let radial = quad::integrate_adaptive(
            |r| {
                if r <= 0.0 {
                    0.0
                } else {
                    (k * r.ln() - r * r / 2.0).exp()
                }
            },
            0.0,
            RADIAL_CUTOFF,
            QUAD_TOL,
            64,
        )?;
        Ok(self.c * self.basis.m1_integral * radial)
    }

    /// CDF of the radius `|y|` under `e(1, ·)`: the density is proportional
    /// to `r^{α₁ + d/2} e^{−r²/2}`, i.e. `r²/2 ~ Gamma((α₁ + d/2 + 1)/2)`.
    pub fn radial_cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let a = (self.alpha1 + self.d as f64 / 2.0 + 1.0) / 2.0;
        statrs::function::gamma::gamma_lr(a, r * r / 2.0)
    }

    /// CDF of the cap coordinate under `e(1, ·)` (any `0 < t ≤ 1`; the
    /// angular marginal is time-independent): `∫₀^u m₁ dσ / ∫_O m₁ dσ`.
    pub fn angular_cdf(&self, angular: f64) -> Result<f64> {
        let upper = self.basis.cap_upper();
        if upper == 0.0 {
            return Err(Error::domain(
                "angular CDF undefined for a zero-dimensional cap (d = 1 half-line)",
            ));
        }
        if !angular.is_finite() {
            return Err(Error::domain("angular coordinate must be finite"));
        }
        if angular <= 0.0 {
            return Ok(0.0);
        }
        if angular >= upper {
            return Ok(1.0);
        }
        let entry = &self.basis.entries[0];
        let basis = &self.basis;
        let partial = quad::integrate_adaptive(
            |u| entry.eval_unchecked(u) * basis.cap_weight(u),
            0.0,
            angular,
            QUAD_TOL,
            32,
        )?;
        Ok((partial / self.basis.m1_integral).clamp(0.0, 1.0))
    }

    /// The meander's exit law beyond the unit horizon:
    /// `P(τ > t) = t^{−α₁/2 + (d−2)/4}` for `t ≥ 1`.
    pub fn meander_exit_survival(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || t < 1.0 {
            return Err(Error::domain(format!(
                "the meander exit law applies beyond the unit horizon (t ≥ 1), got t = {t}"
            )));
        }
        Ok(t.powf(self.basis.exit_exponent()))
    }
}
