//! Closed-form exponent calculus for long-range interactions decaying as
//! `d^{-α}` with `α ∈ (2D, 2D+1]`, plus the neighborhood-radius rules
//! `δ(ε)` and an order-of-magnitude sample-complexity formula.
//!
//! The chain of exponents starts from the decay power `α` and the lattice
//! dimension `D` and is evaluated strictly in dependency order
//! `ε※ → ε → α' → β → η → μ → ν → ω`:
//!
//! ```text
//! x  = α − 2D                      (0 < x ≤ 1)
//! ε※ = x² / (x² + x + D)           ε = ε※/2
//! α' = x − ε
//! β  = (x + D)/x − ε/2
//! η  = x / (2(2x + 2D − 1))
//! μ  = α'·η
//! ν  = α'·β − μ·(β + 1)
//! ω  = k·D / (ν − D)
//! ```
//!
//! `ν` controls how fast far-away couplings stop mattering (`ν > D`
//! always holds, which is what makes local feature windows work at all),
//! and `ω` is the exponent in the power-law feature-count estimate. The
//! same `ν` is also given by an explicit rational function of `x`
//! ([`nu_polynomial`]), and the two routes are required to agree — a
//! strong cross-check since the algebra is lengthy.
//!
//! Everything here is a pure function of its arguments; none of the
//! unspecified prefactor constants are known, so every quantity that
//! depends on them takes explicit values (defaulting to 1) and the
//! sample-complexity output is labeled non-predictive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::csv_string;

/// Margin `ζ = 1e−12` by which decay powers above the supported range are
/// pulled back: `α > 2D+1` is evaluated at `2D+1−ζ`.
pub const CLAMP_MARGIN: f64 = 1e-12;

/// Below this the curve emitter stops chasing the `x → 0` divergence of
/// `1/(ν−D)` and `1/μ` and evaluates at the cap instead.
pub const CURVE_X_CAP: f64 = 1e-6;

/// Plateau height (`≈ 14708`) of the envelope bound on the oscillatory
/// frequency integral behind the radius-threshold display
/// `δ > (max(ξ, η)/b)^{1/μ}`. Documentation only — it never enters a
/// prediction.
pub const ENVELOPE_PLATEAU_HEIGHT: f64 = 14708.0;

/// Lower end of the bracket on the knee location `ξ※` where the envelope
/// bound stops being flat and starts decaying.
pub const ENVELOPE_KNEE_LOWER: f64 = 36057.0;

/// Upper end of the bracket on the envelope knee location `ξ※`.
pub const ENVELOPE_KNEE_UPPER: f64 = 36058.0;

/// The full exponent chain evaluated at one `(α, D, k)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentSet {
    /// Decay power as requested.
    pub alpha: f64,
    /// Decay power actually evaluated (differs from `alpha` only when
    /// clamped).
    pub effective_alpha: f64,
    /// Lattice dimension.
    pub d: usize,
    /// Interaction body count (enters only `ω`).
    pub k: usize,
    /// Whether `alpha > 2D+1` was pulled back to `2D+1−ζ`.
    pub clamped: bool,
    pub eps_star: f64,
    pub eps: f64,
    pub alpha_prime: f64,
    pub beta: f64,
    pub eta: f64,
    pub mu: f64,
    pub nu: f64,
    pub omega: f64,
}

fn validate_dimension(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::invalid("lattice dimension must be at least 1"));
    }
    Ok(())
}

/// Evaluates the exponent chain. Requires `α > 2D` (below that the
/// locality analysis has no content); `α > 2D+1` is evaluated at
/// `2D+1−ζ` with the `clamped` flag set, while `α = 2D+1` exactly is in
/// range and evaluates directly.
pub fn exponents(alpha: f64, d: usize, k: usize) -> Result<ExponentSet> {
    validate_dimension(d)?;
    if k == 0 {
        return Err(Error::invalid("interaction body count must be at least 1"));
    }
    if !alpha.is_finite() {
        return Err(Error::invalid(format!("decay power must be finite, got {alpha}")));
    }
    let two_d = 2.0 * d as f64;
    if alpha <= two_d {
        return Err(Error::invalid(format!(
            "decay power {alpha} is outside the supported range: need α > 2D = {two_d} \
             (at and below it the locality bound is vacuous)"
        )));
    }
    let limit = two_d + 1.0;
    let (effective_alpha, clamped) = if alpha > limit {
        (limit - CLAMP_MARGIN, true)
    } else {
        (alpha, false)
    };

    let dd = d as f64;
    let x = effective_alpha - two_d;
    let eps_star = x * x / (x * x + x + dd);
    let eps = eps_star / 2.0;
    let alpha_prime = x - eps;
    let beta = (x + dd) / x - eps / 2.0;
    let eta = 0.5 * x / (2.0 * x + two_d - 1.0);
    let mu = alpha_prime * eta;
    let nu = alpha_prime * beta - mu * (beta + 1.0);
    let omega = k as f64 * dd / (nu - dd);
    Ok(ExponentSet {
        alpha,
        effective_alpha,
        d,
        k,
        clamped,
        eps_star,
        eps,
        alpha_prime,
        beta,
        eta,
        mu,
        nu,
        omega,
    })
}

/// The locality exponent `ν` by the explicit rational identity
///
/// ```text
/// ν = D + [8(D−1)D²x + 4D(5D−4)x² + (24D²−8)x³
///          + (42D−14)x⁴ + (16D+9)x⁵ + 10x⁶]
///       / [16(2D−1+2x)(D+x²+x)²],   x = α − 2D ∈ (0, 1].
/// ```
///
/// Every numerator coefficient is nonnegative for `D ≥ 1`, which makes
/// `ν > D` manifest. Must agree with the [`exponents`] route to
/// floating-point accuracy; the two derivations share no code.
pub fn nu_polynomial(alpha: f64, d: usize) -> Result<f64> {
    validate_dimension(d)?;
    let dd = d as f64;
    let x = alpha - 2.0 * dd;
    if !(x > 0.0 && x <= 1.0) || !x.is_finite() {
        return Err(Error::invalid(format!(
            "rational identity holds for α − 2D ∈ (0, 1], got {x}"
        )));
    }
    let numerator = 8.0 * (dd - 1.0) * dd * dd * x
        + 4.0 * dd * (5.0 * dd - 4.0) * x.powi(2)
        + (24.0 * dd * dd - 8.0) * x.powi(3)
        + (42.0 * dd - 14.0) * x.powi(4)
        + (16.0 * dd + 9.0) * x.powi(5)
        + 10.0 * x.powi(6);
    let denominator = 16.0 * (2.0 * dd - 1.0 + 2.0 * x) * (dd + x * x + x).powi(2);
    Ok(dd + numerator / denominator)
}

/// How the interaction strength falls off with distance, which decides
/// the shape of both the radius rule `δ(ε)` and the feature-count
/// estimate `N(ε)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayRegime {
    Exponential,
    PowerLaw,
}

/// The prefactor constants left free by the analysis. All default to 1;
/// anything computed from them is order-of-magnitude only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConstants {
    pub c: f64,
    pub c_tilde: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for ScalingConstants {
    fn default() -> Self {
        ScalingConstants {
            c: 1.0,
            c_tilde: 1.0,
            c1: 1.0,
            c2: 1.0,
        }
    }
}

impl ScalingConstants {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c", self.c),
            ("c_tilde", self.c_tilde),
            ("C1", self.c1),
            ("C2", self.c2),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "scaling constant {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Regime input for the radius rule; the power-law branch needs the
/// exponents of the Hamiltonian it will be applied to.
#[derive(Clone, Copy, Debug)]
pub enum DeltaRegime {
    Exponential,
    PowerLaw(ExponentSet),
}

/// A chosen neighborhood radius with its inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaChoice {
    pub regime: DecayRegime,
    pub eps: f64,
    pub constants: ScalingConstants,
    /// The branch value before rounding.
    pub raw: f64,
    /// `⌈raw⌉`, at least 1. Stored as a float because the power-law
    /// branch overflows any integer type long before it overflows `f64`.
    pub delta: f64,
}

/// Picks the neighborhood radius guaranteeing truncation error `≤ ε`:
/// `δ = c·log²(c̃/ε)` for exponentially decaying interactions and
/// `δ = c̃·max(ε^{−1/(ν−D)}, log^{2/μ}(3C₂/ε))` for power-law decay,
/// rounded up to an integer. Valid for `0 < ε ≤ 1/e`.
pub fn delta_for_epsilon(
    regime: DeltaRegime,
    eps: f64,
    constants: &ScalingConstants,
) -> Result<DeltaChoice> {
    constants.validate()?;
    if !(eps > 0.0 && eps <= (-1.0f64).exp()) {
        return Err(Error::invalid(format!(
            "truncation target must satisfy 0 < ε ≤ 1/e, got {eps}"
        )));
    }
    let (tag, raw) = match regime {
        DeltaRegime::Exponential => {
            let log = (constants.c_tilde / eps).ln();
            (DecayRegime::Exponential, constants.c * log * log)
        }
        DeltaRegime::PowerLaw(exp) => {
            let power = eps.powf(-1.0 / (exp.nu - exp.d as f64));
            let log = (3.0 * constants.c2 / eps).ln().powf(2.0 / exp.mu);
            (DecayRegime::PowerLaw, constants.c_tilde * power.max(log))
        }
    };
    Ok(DeltaChoice {
        regime: tag,
        eps,
        constants: *constants,
        raw,
        delta: raw.ceil().max(1.0),
    })
}

/// Emits plot data for the scaling exponents: one CSV row
/// `(D, x, inv_nu_minus_D, inv_mu)` per grid point and dimension, plus
/// the pulled-back endpoint `x = 1 − ζ` for each dimension. Grid values
/// must lie in `(0, 1]`; values below the divergence cap are evaluated
/// at [`CURVE_X_CAP`] (both curves blow up as `x → 0`).
pub fn emit_exponent_curves(
    d_list: &[usize],
    x_grid: &[f64],
    config_hash: Option<&str>,
) -> Result<String> {
    if d_list.is_empty() || x_grid.is_empty() {
        return Err(Error::invalid("curve emission needs dimensions and a grid"));
    }
    for &x in x_grid {
        if !(x > 0.0 && x <= 1.0) {
            return Err(Error::invalid(format!("grid values must lie in (0, 1], got {x}")));
        }
    }
    let mut rows = Vec::new();
    for &d in d_list {
        validate_dimension(d)?;
        let mut push = |x_label: f64, x_eval: f64| -> Result<()> {
            let exp = exponents(2.0 * d as f64 + x_eval, d, 1)?;
            rows.push(vec![
                d.to_string(),
                format!("{x_label}"),
                format!("{}", 1.0 / (exp.nu - d as f64)),
                format!("{}", 1.0 / exp.mu),
            ]);
            Ok(())
        };
        for &x in x_grid {
            push(x, x.max(CURVE_X_CAP))?;
        }
        // The evaluation point used for every decay power above the
        // supported range.
        let clamped_x = 1.0 - CLAMP_MARGIN;
        push(clamped_x, clamped_x)?;
    }
    Ok(csv_string(
        config_hash,
        &["D", "x", "inv_nu_minus_D", "inv_mu"],
        &rows,
    ))
}

/// Inputs of the generalization-bound sample count.
#[derive(Clone, Copy, Debug)]
pub struct SampleComplexityInputs {
    pub regime: DecayRegime,
    /// Feature-truncation error budget (drives the feature count).
    pub eps1: f64,
    /// Prediction error budget (enters as `ε₃^{−2}`).
    pub eps3: f64,
    /// Observable normalization factor (enters as `r⁴`).
    pub r_o: f64,
    /// Number of observables predicted simultaneously.
    pub set_size: f64,
    /// Failure probability of the uniform guarantee.
    pub confidence_gamma: f64,
    pub k: usize,
    pub d: usize,
    /// Decay power; required by the power-law regime, unused otherwise.
    pub alpha: Option<f64>,
}

/// Label attached to every sample-complexity estimate.
pub const SAMPLE_COMPLEXITY_CAVEAT: &str =
    "order-of-magnitude only — not a testable prediction";

/// The estimate, kept in log space because the power-law feature count
/// overflows `f64` for small budgets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleComplexityEstimate {
    pub regime: DecayRegime,
    /// `log₂` of the estimated sample count.
    pub log2_n: f64,
    /// `2^log2_n`; `inf` when it exceeds `f64`.
    pub n: f64,
    pub caveat: &'static str,
}

/// Evaluates `N = r⁴ · ε₃⁻² · N(ε₁) · log(|S|/γ)` with every unknown
/// prefactor set to 1, where the feature count is
/// `N(ε) = 2^{log²(1/ε)}` for exponential decay and
/// `N(ε) = 2^{ε^{−ω}·log(1/ε)}` for power-law decay. The result is an
/// order-of-magnitude statement, never a testable prediction.
pub fn sample_complexity_estimate(
    inputs: &SampleComplexityInputs,
) -> Result<SampleComplexityEstimate> {
    validate_dimension(inputs.d)?;
    if inputs.k == 0 {
        return Err(Error::invalid("interaction body count must be at least 1"));
    }
    for (name, v, lo, hi) in [
        ("eps1", inputs.eps1, 0.0, 1.0),
        ("eps3", inputs.eps3, 0.0, 1.0),
        ("confidence_gamma", inputs.confidence_gamma, 0.0, 1.0),
    ] {
        if !(v > lo && v < hi) {
            return Err(Error::invalid(format!("{name} must lie in ({lo}, {hi}), got {v}")));
        }
    }
    if !(inputs.r_o > 0.0) || !inputs.r_o.is_finite() {
        return Err(Error::invalid("observable normalization must be positive"));
    }
    if !(inputs.set_size >= 1.0) {
        return Err(Error::invalid("the observable set must be nonempty"));
    }
    let log2_features = match inputs.regime {
        DecayRegime::Exponential => {
            let l = (1.0 / inputs.eps1).ln();
            l * l
        }
        DecayRegime::PowerLaw => {
            let alpha = inputs.alpha.ok_or_else(|| {
                Error::invalid("the power-law regime needs the decay power α")
            })?;
            let exp = exponents(alpha, inputs.d, inputs.k)?;
            inputs.eps1.powf(-exp.omega) * (1.0 / inputs.eps1).ln()
        }
    };
    let log_factor = (inputs.set_size / inputs.confidence_gamma).ln();
    if !(log_factor > 0.0) {
        return Err(Error::invalid(
            "log(|S|/γ) must be positive; increase the set size or tighten γ",
        ));
    }
    let log2_n = 4.0 * inputs.r_o.log2() - 2.0 * inputs.eps3.log2()
        + log2_features
        + log_factor.log2();
    Ok(SampleComplexityEstimate {
        regime: inputs.regime,
        log2_n,
        n: log2_n.exp2(),
        caveat: SAMPLE_COMPLEXITY_CAVEAT,
    })
}
