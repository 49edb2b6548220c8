//! Utility functions comparable to an exponential (on ℝ) or to a power
//! utility (on ℝ₊), together with their ratio certificates.
//!
//! Every family is described through its marginal ratio
//! `𝔉(x) = U′(x) / comparison′(x)`, where the comparison marginal is
//! `exp(−αx)` on ℝ and `x^{p−1}` on ℝ₊. Values are recovered from the
//! marginal by quadrature from a fixed anchor point.

use thiserror::Error;

use crate::quadrature::integrate;
use crate::roots::{newton_bisect, RootOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UtilityError {
    #[error("risk aversion must be positive, got {0}")]
    RiskAversion(f64),
    #[error("exponent must be negative, got {0}")]
    Exponent(f64),
    #[error("perturbation size a·δ = {0} must lie in [0, 1)")]
    PerturbationSize(f64),
    #[error("marginal utility is not strictly decreasing: {0}")]
    Monotonicity(String),
    #[error("mixing weight {0} outside (0, 1]")]
    MixingWeight(f64),
    #[error("family exponent {p} exceeds the base exponent {p0}")]
    ExponentAboveBase { p: f64, p0: f64 },
    #[error("utility field weight {0} is not positive and finite")]
    FieldWeight(f64),
}

/// A strictly increasing, strictly concave, twice differentiable utility.
pub trait ScalarUtility: Sync {
    fn value(&self, x: f64) -> f64;
    fn marginal(&self, x: f64) -> f64;
    /// Second derivative U″(x) < 0.
    fn curvature(&self, x: f64) -> f64;
    fn inverse_marginal(&self, y: f64) -> f64;
    fn in_domain(&self, x: f64) -> bool {
        x.is_finite()
    }
}

/// Ratio of the marginal utility to its comparison marginal, with the
/// declared bounds ℓ ≤ 𝔉 ≤ u.
pub trait RatioCertified {
    fn ratio(&self, x: f64) -> f64;
    /// ln of the comparison marginal at `x`.
    fn log_comparison(&self, x: f64) -> f64;
    fn certificate(&self) -> (f64, f64);
}

const VALUE_REL_TOL: f64 = 1e-14;

fn root_opts() -> RootOptions {
    RootOptions {
        x_tol: 1e-15,
        max_iter: 200,
    }
}

/// Shape of 𝔉_δ for utilities on ℝ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatioKind {
    /// 𝔉 ≡ 1.
    Unit,
    /// 𝔉(x) = 1 + a·δ·sin(ωx).
    Sine { amplitude: f64, frequency: f64 },
    /// 𝔉 ≡ 1 + a·δ.
    ConstantShift { amplitude: f64 },
}

/// Utility on ℝ with U′(x) = 𝔉(x)·exp(−αx).
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityOnR {
    delta: f64,
    alpha: f64,
    kind: RatioKind,
    anchor: f64,
    sup_value: f64,
}

impl UtilityOnR {
    /// U(x) = −exp(−αx)/α.
    pub fn exponential(alpha: f64) -> Result<Self, UtilityError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(UtilityError::RiskAversion(alpha));
        }
        Ok(Self::assemble(0.0, alpha, RatioKind::Unit, -1.0 / alpha))
    }

    /// Perturbed exponential utility; `anchor` is U(0) and defaults to −1/α.
    pub fn perturbed(
        delta: f64,
        alpha: f64,
        kind: RatioKind,
        anchor: Option<f64>,
    ) -> Result<Self, UtilityError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(UtilityError::RiskAversion(alpha));
        }
        let eps = perturbation(delta, kind);
        if !(0.0..1.0).contains(&eps) {
            return Err(UtilityError::PerturbationSize(eps));
        }
        if let RatioKind::Sine { frequency, .. } = kind {
            if eps * frequency.abs() >= alpha * (1.0 - eps) {
                return Err(UtilityError::Monotonicity(format!(
                    "a·δ·ω = {} must be below α(1 − a·δ) = {}",
                    eps * frequency.abs(),
                    alpha * (1.0 - eps)
                )));
            }
        }
        Ok(Self::perturbed_unchecked(delta, alpha, kind, anchor))
    }

    /// Skips the monotonicity and size checks; used to exercise the
    /// certification diagnostics on invalid families.
    pub fn perturbed_unchecked(
        delta: f64,
        alpha: f64,
        kind: RatioKind,
        anchor: Option<f64>,
    ) -> Self {
        let kind = if perturbation(delta, kind) == 0.0 {
            RatioKind::Unit
        } else {
            kind
        };
        Self::assemble(delta, alpha, kind, anchor.unwrap_or(-1.0 / alpha))
    }

    fn assemble(delta: f64, alpha: f64, kind: RatioKind, anchor: f64) -> Self {
        let mut u = Self {
            delta,
            alpha,
            kind,
            anchor,
            sup_value: 0.0,
        };
        u.sup_value = match kind {
            RatioKind::Unit => anchor + 1.0 / alpha,
            RatioKind::ConstantShift { .. } => anchor + u.shift() / alpha,
            RatioKind::Sine { .. } => {
                // tail beyond 60/α is below u·e^{-60}/α
                anchor + integrate(|x| u.marginal(x), 0.0, 60.0 / alpha, 0.0, VALUE_REL_TOL)
            }
        };
        u
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kind(&self) -> RatioKind {
        self.kind
    }

    /// U(0).
    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    /// U(+∞) = V(0).
    pub fn sup_value(&self) -> f64 {
        self.sup_value
    }

    /// f(δ) = sup_x |𝔉_δ(x) − 1|.
    pub fn f_delta(&self) -> f64 {
        perturbation(self.delta, self.kind)
    }

    /// g(δ) = |α_δ − 1|.
    pub fn g_delta(&self) -> f64 {
        (self.alpha - 1.0).abs()
    }

    fn eps(&self) -> f64 {
        perturbation(self.delta, self.kind)
    }

    fn shift(&self) -> f64 {
        1.0 + self.eps()
    }

    /// Convex conjugate V(y) = sup_x (U(x) − xy), with V(0) = U(∞).
    pub fn conjugate(&self, y: f64) -> f64 {
        if y == 0.0 {
            return self.sup_value;
        }
        let a = self.alpha;
        match self.kind {
            RatioKind::Unit => self.sup_value + (y * y.ln() - y) / a,
            RatioKind::ConstantShift { .. } => {
                self.sup_value + (y * (y / self.shift()).ln() - y) / a
            }
            RatioKind::Sine { .. } => {
                let x = self.inverse_marginal(y);
                self.value(x) - x * y
            }
        }
    }

    /// V′(y) = −I(y).
    pub fn conjugate_derivative(&self, y: f64) -> f64 {
        -self.inverse_marginal(y)
    }

    /// V″(y) = −1/U″(I(y)).
    pub fn conjugate_curvature(&self, y: f64) -> f64 {
        -1.0 / self.curvature(self.inverse_marginal(y))
    }

    /// Conjugate of the comparison exponential: (y ln y − y)/α.
    pub fn comparison_conjugate(&self, y: f64) -> f64 {
        if y == 0.0 {
            0.0
        } else {
            (y * y.ln() - y) / self.alpha
        }
    }
}

fn perturbation(delta: f64, kind: RatioKind) -> f64 {
    match kind {
        RatioKind::Unit => 0.0,
        RatioKind::Sine { amplitude, .. } | RatioKind::ConstantShift { amplitude } => {
            amplitude.abs() * delta
        }
    }
}

impl ScalarUtility for UtilityOnR {
    fn value(&self, x: f64) -> f64 {
        let a = self.alpha;
        match self.kind {
            RatioKind::Unit => self.anchor - (-a * x).exp_m1() / a,
            RatioKind::ConstantShift { .. } => self.anchor - self.shift() * (-a * x).exp_m1() / a,
            RatioKind::Sine { .. } => {
                self.anchor + integrate(|s| self.marginal(s), 0.0, x, 0.0, VALUE_REL_TOL)
            }
        }
    }

    fn marginal(&self, x: f64) -> f64 {
        self.ratio(x) * (-self.alpha * x).exp()
    }

    fn curvature(&self, x: f64) -> f64 {
        let a = self.alpha;
        let e = (-a * x).exp();
        match self.kind {
            RatioKind::Unit => -a * e,
            RatioKind::ConstantShift { .. } => -a * self.shift() * e,
            RatioKind::Sine {
                amplitude,
                frequency,
            } => {
                let eps = amplitude.abs() * self.delta;
                let s = amplitude.signum();
                e * (eps * s * frequency * (frequency * x).cos()
                    - a * (1.0 + eps * s * (frequency * x).sin()))
            }
        }
    }

    fn inverse_marginal(&self, y: f64) -> f64 {
        let a = self.alpha;
        match self.kind {
            RatioKind::Unit => -y.ln() / a,
            RatioKind::ConstantShift { .. } => -(y / self.shift()).ln() / a,
            RatioKind::Sine {
                amplitude,
                frequency,
            } => {
                let eps = amplitude.abs() * self.delta;
                let s = amplitude.signum();
                let (lower, upper) = self.certificate();
                let ly = y.ln();
                let lo = -(ly - lower.ln()) / a;
                let hi = -(ly - upper.ln()) / a;
                let g = |x: f64| {
                    let sn = s * (frequency * x).sin();
                    let cs = s * (frequency * x).cos();
                    let r = 1.0 + eps * sn;
                    (r.ln() - a * x - ly, eps * frequency * cs / r - a)
                };
                newton_bisect(g, lo, hi, root_opts()).unwrap_or(0.5 * (lo + hi))
            }
        }
    }
}

impl RatioCertified for UtilityOnR {
    fn ratio(&self, x: f64) -> f64 {
        match self.kind {
            RatioKind::Unit => 1.0,
            RatioKind::ConstantShift { .. } => self.shift(),
            RatioKind::Sine {
                amplitude,
                frequency,
            } => 1.0 + amplitude * self.delta * (frequency * x).sin(),
        }
    }

    fn log_comparison(&self, x: f64) -> f64 {
        -self.alpha * x
    }

    fn certificate(&self) -> (f64, f64) {
        let eps = self.eps();
        match self.kind {
            RatioKind::Unit => (1.0, 1.0),
            RatioKind::ConstantShift { .. } => (1.0_f64.min(1.0 + eps), 1.0_f64.max(1.0 + eps)),
            RatioKind::Sine { .. } => (1.0 - eps, 1.0 + eps),
        }
    }
}

/// The utility x ↦ α·U(x/α), which has unit comparison risk aversion
/// whenever `U` is comparable to exp(−αx).
#[derive(Debug, Clone, Copy)]
pub struct Rescaled<'a, U> {
    inner: &'a U,
    alpha: f64,
}

impl<'a, U: ScalarUtility> Rescaled<'a, U> {
    pub fn new(inner: &'a U, alpha: f64) -> Self {
        Self { inner, alpha }
    }
}

impl<U: ScalarUtility> ScalarUtility for Rescaled<'_, U> {
    fn value(&self, x: f64) -> f64 {
        self.alpha * self.inner.value(x / self.alpha)
    }
    fn marginal(&self, x: f64) -> f64 {
        self.inner.marginal(x / self.alpha)
    }
    fn curvature(&self, x: f64) -> f64 {
        self.inner.curvature(x / self.alpha) / self.alpha
    }
    fn inverse_marginal(&self, y: f64) -> f64 {
        self.alpha * self.inner.inverse_marginal(y)
    }
    fn in_domain(&self, x: f64) -> bool {
        self.inner.in_domain(x / self.alpha)
    }
}

/// Mixing weight f(p) used to build a family (U_p)_{p ≤ p0} from a base
/// utility at p0. Both variants satisfy f(p0) = 1 and keep (1 − p)·f(p)
/// bounded as p → −∞.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixingFunction {
    /// f(p) = 1 / (1 − p + p0).
    InverseLinear,
    /// f(p) = ((1 − p0)/(1 − p))^k with k ≥ 1.
    InversePower { exponent: f64 },
}

impl MixingFunction {
    pub fn eval(&self, p: f64, p0: f64) -> f64 {
        match *self {
            MixingFunction::InverseLinear => 1.0 / (1.0 - p + p0),
            MixingFunction::InversePower { exponent } => ((1.0 - p0) / (1.0 - p)).powf(exponent),
        }
    }

    /// Whether limsup (1 − p)·f(p) < ∞.
    pub fn has_bounded_rate(&self) -> bool {
        match *self {
            MixingFunction::InverseLinear => true,
            MixingFunction::InversePower { exponent } => exponent >= 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PowerShape {
    /// 𝔉 ≡ 1.
    Pure,
    /// 𝔉(x) = 1 + b·sin(ω ln x).
    LogSine { amplitude: f64, frequency: f64 },
    /// 𝔉_p = 1 + f(p)(𝔉_base − 1), i.e.
    /// U′_p(x) = f(p) x^{p−p0} U′_base(x) + (1 − f(p)) x^{p−1}.
    Member { base: Box<UtilityOnRPlus>, mix: f64 },
}

/// Utility on (0, ∞) with U′(x) = 𝔉(x)·x^{p−1}, p < 0.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityOnRPlus {
    p: f64,
    shape: PowerShape,
    /// U(1).
    anchor: f64,
}

impl UtilityOnRPlus {
    /// U(x) = x^p / p.
    pub fn power(p: f64) -> Result<Self, UtilityError> {
        check_exponent(p)?;
        Ok(Self {
            p,
            shape: PowerShape::Pure,
            anchor: 1.0 / p,
        })
    }

    /// Power utility whose marginal ratio oscillates in log-wealth.
    pub fn log_sine(p: f64, amplitude: f64, frequency: f64) -> Result<Self, UtilityError> {
        check_exponent(p)?;
        let b = amplitude.abs();
        if !(0.0..1.0).contains(&b) {
            return Err(UtilityError::PerturbationSize(b));
        }
        if b * frequency.abs() >= (1.0 - p) * (1.0 - b) {
            return Err(UtilityError::Monotonicity(format!(
                "b·ω = {} must be below (1 − p)(1 − b) = {}",
                b * frequency.abs(),
                (1.0 - p) * (1.0 - b)
            )));
        }
        Ok(Self {
            p,
            shape: PowerShape::LogSine {
                amplitude: b,
                frequency,
            },
            anchor: 1.0 / p,
        })
    }

    /// Member of the family generated by `base` (at exponent p0 = base.p())
    /// with mixing weight `mix.eval(p, p0)`.
    pub fn family_member(
        base: &UtilityOnRPlus,
        p: f64,
        mix: &MixingFunction,
    ) -> Result<Self, UtilityError> {
        let p0 = base.p;
        check_exponent(p)?;
        if p > p0 {
            return Err(UtilityError::ExponentAboveBase { p, p0 });
        }
        let at_base = mix.eval(p0, p0);
        if (at_base - 1.0).abs() > 1e-12 {
            return Err(UtilityError::MixingWeight(at_base));
        }
        let weight = mix.eval(p, p0);
        Self::family_member_with_weight(base, p, weight)
    }

    /// Member with an explicit mixing weight f(p) ∈ (0, 1].
    pub fn family_member_with_weight(
        base: &UtilityOnRPlus,
        p: f64,
        weight: f64,
    ) -> Result<Self, UtilityError> {
        check_exponent(p)?;
        if p > base.p {
            return Err(UtilityError::ExponentAboveBase { p, p0: base.p });
        }
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(UtilityError::MixingWeight(weight));
        }
        if p == base.p && weight == 1.0 {
            return Ok(base.clone());
        }
        let shape = match base.shape {
            PowerShape::Pure => PowerShape::Pure,
            _ => PowerShape::Member {
                base: Box::new(base.clone()),
                mix: weight,
            },
        };
        Ok(Self {
            p,
            shape,
            anchor: 1.0 / p,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn shape(&self) -> &PowerShape {
        &self.shape
    }

    pub fn is_pure_power(&self) -> bool {
        matches!(self.shape, PowerShape::Pure)
    }

    /// U(1).
    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    /// x·𝔉′(x).
    fn ratio_log_slope(&self, x: f64) -> f64 {
        match &self.shape {
            PowerShape::Pure => 0.0,
            PowerShape::LogSine {
                amplitude,
                frequency,
            } => amplitude * frequency * (frequency * x.ln()).cos(),
            PowerShape::Member { base, mix } => mix * base.ratio_log_slope(x),
        }
    }
}

fn check_exponent(p: f64) -> Result<(), UtilityError> {
    if !(p < 0.0 && p.is_finite()) {
        return Err(UtilityError::Exponent(p));
    }
    Ok(())
}

impl ScalarUtility for UtilityOnRPlus {
    fn value(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        let p = self.p;
        match self.shape {
            PowerShape::Pure => self.anchor + (p * x.ln()).exp_m1() / p,
            _ => {
                // U(x) − U(1) = ∫_0^{ln x} 𝔉(e^s) e^{ps} ds
                self.anchor
                    + integrate(
                        |s| self.ratio(s.exp()) * (p * s).exp(),
                        0.0,
                        x.ln(),
                        0.0,
                        VALUE_REL_TOL,
                    )
            }
        }
    }

    fn marginal(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::INFINITY;
        }
        self.ratio(x) * ((self.p - 1.0) * x.ln()).exp()
    }

    fn curvature(&self, x: f64) -> f64 {
        let p = self.p;
        ((p - 2.0) * x.ln()).exp() * ((p - 1.0) * self.ratio(x) + self.ratio_log_slope(x))
    }

    fn inverse_marginal(&self, y: f64) -> f64 {
        let q = self.p - 1.0;
        match self.shape {
            PowerShape::Pure => (y.ln() / q).exp(),
            _ => {
                let (lower, upper) = self.certificate();
                let ly = y.ln();
                let lo = (ly - lower.ln()) / q;
                let hi = (ly - upper.ln()) / q;
                let g = |s: f64| {
                    let x = s.exp();
                    let r = self.ratio(x);
                    (r.ln() + q * s - ly, self.ratio_log_slope(x) / r + q)
                };
                newton_bisect(g, lo, hi, root_opts())
                    .unwrap_or(0.5 * (lo + hi))
                    .exp()
            }
        }
    }

    fn in_domain(&self, x: f64) -> bool {
        x > 0.0 && x.is_finite()
    }
}

impl RatioCertified for UtilityOnRPlus {
    fn ratio(&self, x: f64) -> f64 {
        match &self.shape {
            PowerShape::Pure => 1.0,
            PowerShape::LogSine {
                amplitude,
                frequency,
            } => 1.0 + amplitude * (frequency * x.ln()).sin(),
            PowerShape::Member { base, mix } => 1.0 + mix * (base.ratio(x) - 1.0),
        }
    }

    fn log_comparison(&self, x: f64) -> f64 {
        (self.p - 1.0) * x.ln()
    }

    fn certificate(&self) -> (f64, f64) {
        match &self.shape {
            PowerShape::Pure => (1.0, 1.0),
            PowerShape::LogSine { amplitude, .. } => (1.0 - amplitude, 1.0 + amplitude),
            PowerShape::Member { base, mix } => {
                let (l, u) = base.certificate();
                (mix * (l - 1.0) + 1.0, mix * (u - 1.0) + 1.0)
            }
        }
    }
}

/// Utility random field D_T·U_p(x) with leafwise weights D_T.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityField {
    utility: UtilityOnRPlus,
    weights: Vec<f64>,
    k1: f64,
    k2: f64,
}

impl UtilityField {
    pub fn new(utility: UtilityOnRPlus, weights: Vec<f64>) -> Result<Self, UtilityError> {
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(UtilityError::FieldWeight(*w));
        }
        let k1 = weights.iter().copied().fold(f64::INFINITY, f64::min);
        let k2 = weights.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            utility,
            weights,
            k1,
            k2,
        })
    }

    /// D_T = exp(B).
    pub fn from_claim(utility: UtilityOnRPlus, claim: &[f64]) -> Result<Self, UtilityError> {
        Self::new(utility, claim.iter().map(|b| b.exp()).collect())
    }

    pub fn unit(utility: UtilityOnRPlus, leaves: usize) -> Self {
        Self::new(utility, vec![1.0; leaves]).expect("unit weights are valid")
    }

    pub fn utility(&self) -> &UtilityOnRPlus {
        &self.utility
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// (k1, k2) with k1 ≤ D_T ≤ k2.
    pub fn bounds(&self) -> (f64, f64) {
        (self.k1, self.k2)
    }
}

/// Empirical ratio bounds over a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioCertificate {
    pub lower: f64,
    pub upper: f64,
    /// sup |𝔉 − 1| over the grid.
    pub sup_deviation: f64,
    /// Whether U′ is strictly decreasing along the grid.
    pub monotone: bool,
}

pub fn certify_ratio_bounds<U: RatioCertified + ScalarUtility>(
    u: &U,
    grid: &[f64],
) -> RatioCertificate {
    let mut cert = RatioCertificate {
        lower: f64::INFINITY,
        upper: f64::NEG_INFINITY,
        sup_deviation: 0.0,
        monotone: true,
    };
    let mut prev_log_marginal = f64::INFINITY;
    for &x in grid {
        let r = u.ratio(x);
        cert.lower = cert.lower.min(r);
        cert.upper = cert.upper.max(r);
        cert.sup_deviation = cert.sup_deviation.max((r - 1.0).abs());
        let lm = r.ln() + u.log_comparison(x);
        if !(lm < prev_log_marginal) {
            cert.monotone = false;
        }
        prev_log_marginal = lm;
    }
    cert
}

/// Uniform grid on [−20, 20].
pub fn real_line_grid(points: usize) -> Vec<f64> {
    linspace(-20.0, 20.0, points)
}

/// Log-spaced grid on [1e−6, 1e4].
pub fn positive_grid(points: usize) -> Vec<f64> {
    linspace(-6.0, 4.0, points)
        .into_iter()
        .map(|e| 10f64.powf(e))
        .collect()
}

/// Log-spaced grid on [lo, hi].
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), points)
        .into_iter()
        .map(f64::exp)
        .collect()
}

pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Largest violation of u·Ṽ(y/u) + V(0) ≤ V(y) ≤ ℓ·Ṽ(y/ℓ) + V(0), where Ṽ
/// is the conjugate of the comparison exponential.
pub fn conjugate_sandwich_audit(u: &UtilityOnR, ygrid: &[f64]) -> f64 {
    let (lower, upper) = u.certificate();
    let v0 = u.sup_value();
    ygrid
        .iter()
        .map(|&y| {
            let v = u.conjugate(y);
            let lo = upper * u.comparison_conjugate(y / upper) + v0;
            let hi = lower * u.comparison_conjugate(y / lower) + v0;
            (lo - v).max(v - hi).max(0.0)
        })
        .fold(0.0, f64::max)
}

/// Largest violation of the two-sided power sandwich
/// (ℓ·1{x≥1} + u·1{x<1})(x^p − 1)/p + U(1) ≤ U(x) ≤ (u·1{x≥1} + ℓ·1{x<1})(x^p − 1)/p + U(1),
/// relative to 1 + |U(x) − U(1)|.
pub fn power_sandwich_audit(u: &UtilityOnRPlus, grid: &[f64]) -> f64 {
    let (lower, upper) = u.certificate();
    let p = u.p();
    let u1 = u.value(1.0);
    grid.iter()
        .map(|&x| {
            let base = (p * x.ln()).exp_m1() / p;
            let (c_lo, c_hi) = if x >= 1.0 {
                (lower, upper)
            } else {
                (upper, lower)
            };
            let v = u.value(x);
            let lo = c_lo * base + u1;
            let hi = c_hi * base + u1;
            (lo - v).max(v - hi).max(0.0) / (1.0 + (v - u1).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn sine(delta: f64) -> UtilityOnR {
        UtilityOnR::perturbed(
            delta,
            1.0,
            RatioKind::Sine {
                amplitude: 0.2,
                frequency: 1.0,
            },
            None,
        )
        .unwrap()
    }

    #[test]
    fn exponential_examples() {
        let u = UtilityOnR::exponential(1.0).unwrap();
        assert_abs_diff_eq!(u.conjugate(1.0), -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u.inverse_marginal(1.0), 0.0, epsilon = 1e-15);
        let u2 = UtilityOnR::exponential(2.0).unwrap();
        let cert = certify_ratio_bounds(&u2, &real_line_grid(1001));
        assert_eq!(
            (cert.lower, cert.upper, cert.sup_deviation, cert.monotone),
            (1.0, 1.0, 0.0, true)
        );
        assert_eq!(u2.f_delta(), 0.0);
        assert_eq!(u2.g_delta(), 1.0);
        assert!(UtilityOnR::exponential(0.0).is_err());
        assert!(UtilityOnR::exponential(-1.0).is_err());
    }

    #[test]
    fn sine_at_zero_is_exponential() {
        let a = sine(0.0);
        let b = UtilityOnR::exponential(1.0).unwrap();
        for x in [-3.0, 0.0, 2.5] {
            assert_eq!(a.value(x), b.value(x));
            assert_eq!(a.marginal(x), b.marginal(x));
        }
    }

    #[test]
    fn sine_certificate() {
        let u = sine(0.1);
        let (l, h) = u.certificate();
        assert_abs_diff_eq!(l, 0.98, epsilon = 1e-15);
        assert_abs_diff_eq!(h, 1.02, epsilon = 1e-15);
        assert_abs_diff_eq!(u.f_delta(), 0.02, epsilon = 1e-15);
        let cert = certify_ratio_bounds(&u, &real_line_grid(4001));
        assert!(cert.monotone);
        assert!(cert.sup_deviation <= 0.02 + 1e-12);
        // the grid hits sin ≈ ±1 closely enough
        assert!(cert.sup_deviation > 0.02 - 1e-5);
    }

    #[test]
    fn sine_validation() {
        let k = RatioKind::Sine {
            amplitude: 0.2,
            frequency: 40.0,
        };
        assert!(matches!(
            UtilityOnR::perturbed(0.2, 1.0, k, None),
            Err(UtilityError::Monotonicity(_))
        ));
        let k = RatioKind::Sine {
            amplitude: 20.0,
            frequency: 0.0,
        };
        assert!(matches!(
            UtilityOnR::perturbed(0.1, 1.0, k, None),
            Err(UtilityError::PerturbationSize(_))
        ));
        let bad = UtilityOnR::perturbed_unchecked(
            0.5,
            1.0,
            RatioKind::Sine {
                amplitude: 0.9,
                frequency: 20.0,
            },
            None,
        );
        assert!(!certify_ratio_bounds(&bad, &real_line_grid(4001)).monotone);
    }

    #[test]
    fn sine_values_match_closed_form_antiderivative() {
        // oracle: ∫ e^{-x}(1 + ε sin x) dx in closed form
        let eps = 0.02;
        let u = sine(0.1);
        let anti = |x: f64| -(-x).exp() - eps * (-x).exp() * (x.sin() + x.cos()) / 2.0;
        for x in [-15.0, -4.0, -0.3, 0.0, 0.7, 6.0, 19.0] {
            let expected = -1.0 + anti(x) - anti(0.0);
            assert_relative_eq!(u.value(x), expected, max_relative = 1e-12, epsilon = 1e-14);
        }
        assert_relative_eq!(u.sup_value(), -1.0 - anti(0.0), max_relative = 1e-13);
    }

    #[test]
    fn inverse_round_trip_on_grid() {
        let u = sine(0.1);
        for x in linspace(-5.0, 5.0, 201) {
            assert_abs_diff_eq!(u.inverse_marginal(u.marginal(x)), x, epsilon = 1e-10);
        }
    }

    #[test]
    fn marginal_round_trip_on_log_grid() {
        let u = sine(0.2);
        for y in log_grid(1e-6, 1e6, 200) {
            assert_relative_eq!(u.marginal(u.inverse_marginal(y)), y, max_relative = 1e-10);
        }
        let v = UtilityOnRPlus::log_sine(-3.0, 0.1, 1.0).unwrap();
        for y in log_grid(1e-6, 1e6, 200) {
            assert_relative_eq!(v.marginal(v.inverse_marginal(y)), y, max_relative = 1e-10);
        }
    }

    #[test]
    fn conjugate_consistency() {
        for u in [sine(0.1), UtilityOnR::exponential(1.7).unwrap()] {
            for y in log_grid(1e-3, 1e3, 50) {
                let x = u.inverse_marginal(y);
                assert_abs_diff_eq!(u.conjugate(y), u.value(x) - x * y, epsilon = 1e-9);
            }
        }
        let shift =
            UtilityOnR::perturbed(0.1, 1.3, RatioKind::ConstantShift { amplitude: 0.5 }, None)
                .unwrap();
        for y in log_grid(1e-3, 1e3, 50) {
            let x = shift.inverse_marginal(y);
            assert_abs_diff_eq!(shift.conjugate(y), shift.value(x) - x * y, epsilon = 1e-9);
        }
    }

    #[test]
    fn sandwich_audits() {
        let ygrid = log_grid(1e-3, 1e3, 200);
        let u = UtilityOnR::exponential(1.0).unwrap();
        assert!(conjugate_sandwich_audit(&u, &ygrid) <= 1e-10);
        assert!(conjugate_sandwich_audit(&sine(0.1), &ygrid) <= 1e-8);
        assert_abs_diff_eq!(u.comparison_conjugate(1.0), -1.0, epsilon = 1e-15);
        let v = UtilityOnRPlus::log_sine(-3.0, 0.1, 1.0).unwrap();
        assert!(power_sandwich_audit(&v, &log_grid(1e-2, 1e2, 200)) <= 1e-10);
    }

    #[test]
    fn power_examples() {
        let u = UtilityOnRPlus::power(-1.0).unwrap();
        for x in [0.5f64, 1.0, 3.0] {
            assert_relative_eq!(u.value(x), -1.0 / x, max_relative = 1e-15);
            assert_relative_eq!(u.marginal(x), x.powi(-2), max_relative = 1e-14);
            assert_eq!(u.ratio(x), 1.0);
        }
        for y in [0.25f64, 1.0, 4.0] {
            assert_relative_eq!(u.inverse_marginal(y), y.powf(-0.5), max_relative = 1e-14);
        }
        assert_eq!(u.value(1.0), -1.0);
        assert!(UtilityOnRPlus::power(0.0).is_err());
        assert!(UtilityOnRPlus::power(0.5).is_err());
    }

    #[test]
    fn family_member_examples() {
        let base = UtilityOnRPlus::log_sine(-3.0, 0.1, 1.0).unwrap();
        let mix = MixingFunction::InverseLinear;
        let same = UtilityOnRPlus::family_member(&base, -3.0, &mix).unwrap();
        assert_eq!(same, base);

        let pure = UtilityOnRPlus::power(-3.0).unwrap();
        let m = UtilityOnRPlus::family_member(&pure, -10.0, &mix).unwrap();
        for x in [0.3f64, 1.0, 2.0] {
            assert_relative_eq!(m.marginal(x), x.powf(-11.0), max_relative = 1e-13);
        }

        let m = UtilityOnRPlus::family_member(&base, -12.0, &mix).unwrap();
        let (l, u) = m.certificate();
        assert_abs_diff_eq!(l, 0.99, epsilon = 1e-15);
        assert_abs_diff_eq!(u, 1.01, epsilon = 1e-15);
        let grid = positive_grid(4001);
        let cert = certify_ratio_bounds(&m, &grid);
        assert!(cert.monotone);
        assert!(cert.lower >= l - 1e-15 && cert.upper <= u + 1e-15);

        assert!(matches!(
            UtilityOnRPlus::family_member(&base, -2.0, &mix),
            Err(UtilityError::ExponentAboveBase { .. })
        ));
        assert!(UtilityOnRPlus::family_member_with_weight(&base, -5.0, 0.0).is_err());
        assert!(UtilityOnRPlus::family_member_with_weight(&base, -5.0, 1.5).is_err());
    }

    #[test]
    fn family_member_marginal_matches_mixture_formula() {
        let base = UtilityOnRPlus::log_sine(-2.0, 0.3, 2.0).unwrap();
        let m = UtilityOnRPlus::family_member(&base, -7.0, &MixingFunction::InverseLinear).unwrap();
        let f = 1.0 / 6.0;
        for x in [0.1f64, 0.9, 1.0, 4.0] {
            let expected = f * x.powf(-5.0) * base.marginal(x) + (1.0 - f) * x.powf(-8.0);
            assert_relative_eq!(m.marginal(x), expected, max_relative = 1e-13);
        }
    }

    #[test]
    fn curvature_matches_finite_differences() {
        let base = UtilityOnRPlus::log_sine(-2.0, 0.3, 2.0).unwrap();
        let m = UtilityOnRPlus::family_member(&base, -7.0, &MixingFunction::InverseLinear).unwrap();
        let s = sine(0.2);
        let h = 1e-6;
        for x in [0.5, 1.0, 1.7] {
            let fd = (m.marginal(x + h) - m.marginal(x - h)) / (2.0 * h);
            assert_relative_eq!(m.curvature(x), fd, max_relative = 1e-7);
            let fd = (s.marginal(x + h) - s.marginal(x - h)) / (2.0 * h);
            assert_relative_eq!(s.curvature(x), fd, max_relative = 1e-7);
        }
    }

    #[test]
    fn inada_span_on_grid() {
        let u = sine(0.1);
        let (l, h) = u.certificate();
        let grid = real_line_grid(4001);
        let (xmin, xmax) = (grid[0], grid[grid.len() - 1]);
        assert!(u.marginal(xmin) >= l * (-xmin).exp());
        assert!(u.marginal(xmax) <= h * (-xmax).exp());
        assert!(u.marginal(xmin) > 1e8 && u.marginal(xmax) < 1e-8);
    }

    #[test]
    fn rescaled_utility_has_unit_comparison() {
        let u = UtilityOnR::exponential(2.5).unwrap();
        let r = Rescaled::new(&u, 2.5);
        for x in [-1.0f64, 0.0, 2.0] {
            assert_relative_eq!(r.marginal(x), (-x).exp(), max_relative = 1e-14);
        }
    }

    proptest! {
        #[test]
        fn fenchel_young(x in -8.0f64..8.0, ly in -6.0f64..6.0) {
            let u = sine(0.15);
            let y = ly.exp();
            prop_assert!(u.value(x) <= u.conjugate(y) + x * y + 1e-8);
            let yx = u.marginal(x);
            prop_assert!((u.value(x) - u.conjugate(yx) - x * yx).abs() <= 1e-8 * (1.0 + yx));
        }

        #[test]
        fn family_ratio_within_certificate(lx in -10.0f64..10.0, p in -80.0f64..-3.0) {
            let base = UtilityOnRPlus::log_sine(-3.0, 0.1, 1.0).unwrap();
            let m = UtilityOnRPlus::family_member(&base, p, &MixingFunction::InverseLinear).unwrap();
            let (l, u) = m.certificate();
            let r = m.ratio(lx.exp());
            prop_assert!(r >= l - 1e-15 && r <= u + 1e-15);
        }
    }
}
