//! Closed-form exponents and dimension predictions for γ-LQG metric ball
//! boundaries and their thick points.
//!
//! Everything here is a pure function of `(γ, d_γ)` and, where relevant, the
//! thickness parameter `α`. The value of `d_γ` is only known at `γ = √(8/3)`,
//! so it is supplied through a [`DGammaModel`] rather than fixed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `√(8/3)`, the only coupling where `d_γ` is known exactly (`d = 4`).
pub const SQRT_8_3: f64 = 1.632_993_161_855_452_1;

const EXACT_GAMMA_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormulaError {
    #[error("gamma must lie in (0, 2), got {0}")]
    GammaOutOfRange(f64),
    #[error("the exact model d = 4 only applies at gamma = sqrt(8/3), got gamma = {0}")]
    NotSqrt83(f64),
    #[error("d_gamma must exceed 2, got {0}")]
    DimensionTooSmall(f64),
    #[error("alpha = {alpha} is at or beyond the pole Q = {q}")]
    AlphaAtPole { alpha: f64, q: f64 },
    #[error("alpha window is empty: 4 - 2 xi Q + xi^2 = {0} <= 0")]
    EmptyWindow(f64),
    #[error("moment exponent p = {p} outside [0, {max}]")]
    MomentOutOfRange { p: f64, max: f64 },
    #[error("cannot parse d_gamma model {0:?} (expected exact|watabiki|quad|user:<value>)")]
    BadModel(String),
}

fn check_gamma(gamma: f64) -> Result<(), FormulaError> {
    if gamma > 0.0 && gamma < 2.0 {
        Ok(())
    } else {
        Err(FormulaError::GammaOutOfRange(gamma))
    }
}

/// How `d_γ` is obtained for a given coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DGammaModel {
    /// `d = 4`, valid only at `γ = √(8/3)`.
    ExactSqrt83,
    Watabiki,
    QuadraticGuess,
    UserSupplied(f64),
}

impl DGammaModel {
    pub fn d_gamma(&self, gamma: f64) -> Result<f64, FormulaError> {
        check_gamma(gamma)?;
        let d = match *self {
            DGammaModel::ExactSqrt83 => {
                if (gamma - SQRT_8_3).abs() > EXACT_GAMMA_TOL {
                    return Err(FormulaError::NotSqrt83(gamma));
                }
                4.0
            }
            DGammaModel::Watabiki => watabiki(gamma)?,
            DGammaModel::QuadraticGuess => quadratic_guess(gamma)?,
            DGammaModel::UserSupplied(d) => d,
        };
        if d.is_finite() && d > 2.0 {
            Ok(d)
        } else {
            Err(FormulaError::DimensionTooSmall(d))
        }
    }
}

impl fmt::Display for DGammaModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DGammaModel::ExactSqrt83 => f.write_str("exact"),
            DGammaModel::Watabiki => f.write_str("watabiki"),
            DGammaModel::QuadraticGuess => f.write_str("quad"),
            DGammaModel::UserSupplied(v) => write!(f, "user:{v}"),
        }
    }
}

impl FromStr for DGammaModel {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "exact" => Ok(DGammaModel::ExactSqrt83),
            "watabiki" => Ok(DGammaModel::Watabiki),
            "quad" => Ok(DGammaModel::QuadraticGuess),
            other => other
                .strip_prefix("user:")
                .and_then(|v| v.trim().parse::<f64>().ok())
                .map(DGammaModel::UserSupplied)
                .ok_or_else(|| FormulaError::BadModel(s.to_string())),
        }
    }
}

impl TryFrom<String> for DGammaModel {
    type Error = FormulaError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<DGammaModel> for String {
    fn from(m: DGammaModel) -> String {
        m.to_string()
    }
}

/// Coupling constant and dimension. `ξ` and `Q` are always re-derived from
/// these two numbers so they can never drift out of sync.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct GammaParams {
    gamma: f64,
    d_gamma: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    gamma: f64,
    d_gamma: f64,
    #[serde(default, skip_deserializing)]
    xi: f64,
    #[serde(default, skip_deserializing)]
    q: f64,
}

impl TryFrom<RawParams> for GammaParams {
    type Error = FormulaError;

    fn try_from(raw: RawParams) -> Result<Self, Self::Error> {
        GammaParams::from_dimension(raw.gamma, raw.d_gamma)
    }
}

impl From<GammaParams> for RawParams {
    fn from(p: GammaParams) -> Self {
        RawParams {
            gamma: p.gamma,
            d_gamma: p.d_gamma,
            xi: p.xi(),
            q: p.q(),
        }
    }
}

impl GammaParams {
    pub fn new(gamma: f64, model: DGammaModel) -> Result<Self, FormulaError> {
        let d_gamma = model.d_gamma(gamma)?;
        Ok(GammaParams { gamma, d_gamma })
    }

    pub fn from_dimension(gamma: f64, d_gamma: f64) -> Result<Self, FormulaError> {
        GammaParams::new(gamma, DGammaModel::UserSupplied(d_gamma))
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn d_gamma(&self) -> f64 {
        self.d_gamma
    }

    /// `ξ = γ / d_γ`, the Weyl-scaling exponent.
    pub fn xi(&self) -> f64 {
        self.gamma / self.d_gamma
    }

    /// `Q = 2/γ + γ/2`, the coordinate-change exponent.
    pub fn q(&self) -> f64 {
        2.0 / self.gamma + self.gamma / 2.0
    }
}

/// Shorthand for [`GammaParams::new`].
pub fn make_params(gamma: f64, model: DGammaModel) -> Result<GammaParams, FormulaError> {
    GammaParams::new(gamma, model)
}

/// Watabiki's prediction for `d_γ`.
pub fn watabiki(gamma: f64) -> Result<f64, FormulaError> {
    check_gamma(gamma)?;
    let g2 = gamma * gamma;
    Ok(1.0 + g2 / 4.0 + 0.25 * ((4.0 + g2).powi(2) + 16.0 * g2).sqrt())
}

/// The quadratic alternative `2 + γ²/2 + γ/√6`.
pub fn quadratic_guess(gamma: f64) -> Result<f64, FormulaError> {
    check_gamma(gamma)?;
    Ok(2.0 + gamma * gamma / 2.0 + gamma / 6f64.sqrt())
}

/// Euclidean dimension of a metric ball boundary, `2 - ξQ + ξ²/2`.
pub fn euclid_boundary_dim(p: &GammaParams) -> f64 {
    let xi = p.xi();
    2.0 - xi * p.q() + xi * xi / 2.0
}

/// Quantum dimension of a metric ball boundary, `d_γ - 1`.
pub fn quantum_boundary_dim(p: &GammaParams) -> f64 {
    p.d_gamma() - 1.0
}

/// Euclidean dimension of boundary metric `α`-thick points,
/// `2 - ξ(Q - α) - α²/2`. Negative outside [`alpha_window`]; not clamped.
pub fn thick_euclid_dim(p: &GammaParams, alpha: f64) -> f64 {
    2.0 - p.xi() * (p.q() - alpha) - alpha * alpha / 2.0
}

/// Quantum dimension of boundary metric `α`-thick points,
/// `(2 - α²/2) / (ξ(Q - α)) - 1`.
pub fn thick_quantum_dim(p: &GammaParams, alpha: f64) -> Result<f64, FormulaError> {
    let q = p.q();
    if alpha >= q {
        return Err(FormulaError::AlphaAtPole { alpha, q });
    }
    Ok((2.0 - alpha * alpha / 2.0) / (p.xi() * (q - alpha)) - 1.0)
}

/// Open interval of `α` where the thick-point dimensions are positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaWindow {
    pub lo: f64,
    pub hi: f64,
}

impl AlphaWindow {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Membership in the open window.
    pub fn contains(&self, alpha: f64) -> bool {
        alpha > self.lo && alpha < self.hi
    }
}

pub fn alpha_window(p: &GammaParams) -> Result<AlphaWindow, FormulaError> {
    let xi = p.xi();
    let disc = 4.0 - 2.0 * xi * p.q() + xi * xi;
    if disc <= 0.0 {
        return Err(FormulaError::EmptyWindow(disc));
    }
    let half = disc.sqrt();
    Ok(AlphaWindow {
        lo: xi - half,
        hi: xi + half,
    })
}

pub fn is_in_window(p: &GammaParams, alpha: f64) -> bool {
    alpha_window(p).map(|w| w.contains(alpha)).unwrap_or(false)
}

/// Exponent of the one-point probability of a boundary point being `α`-thick
/// at scale `ε`: `ξ(Q - α) + α²/2`.
pub fn one_point_exponent(p: &GammaParams, alpha: f64) -> f64 {
    p.xi() * (p.q() - alpha) + alpha * alpha / 2.0
}

/// `(p+1) ξQ - (p+1)² ξ²/2`, the exponent of the expected `p`-th diameter
/// sum over a covering of the boundary by `ε`-boxes.
pub fn moment_exponent(p: &GammaParams, pexp: f64) -> Result<f64, FormulaError> {
    let max = 2.0 * p.d_gamma() / p.gamma() - 1.0;
    if !(0.0..=max).contains(&pexp) {
        return Err(FormulaError::MomentOutOfRange { p: pexp, max });
    }
    let xi = p.xi();
    let k = pexp + 1.0;
    Ok(k * xi * p.q() - k * k * xi * xi / 2.0)
}

/// Exponent of the upper tail of an `ε`-ball diameter beyond `ε^{ξ(Q-α)}`.
pub fn diam_tail_exponent(alpha: f64) -> f64 {
    alpha * alpha / 2.0
}

/// One line of the formula table printed by the `formulas` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormulaRow {
    pub gamma: f64,
    pub d_gamma: f64,
    pub xi: f64,
    pub q: f64,
    pub euclid_boundary_dim: f64,
    pub quantum_boundary_dim: f64,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub alpha: Option<f64>,
    pub thick_euclid_dim: Option<f64>,
    pub thick_quantum_dim: Option<f64>,
}

impl FormulaRow {
    pub const CSV_HEADER: &'static str = "gamma,d_gamma,xi,q,euclid_boundary_dim,quantum_boundary_dim,alpha_lo,alpha_hi,alpha,thick_euclid_dim,thick_quantum_dim";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.gamma,
            self.d_gamma,
            self.xi,
            self.q,
            self.euclid_boundary_dim,
            self.quantum_boundary_dim,
            self.alpha_lo,
            self.alpha_hi,
            opt(self.alpha),
            opt(self.thick_euclid_dim),
            opt(self.thick_quantum_dim),
        )
    }
}

/// Evenly spaced couplings strictly inside `(lo, hi)`, endpoints included.
pub fn gamma_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Formula table over `gammas`. With `alpha_points > 0`, each coupling gets
/// that many rows sampling the closed α-window (thick-point columns filled);
/// otherwise one row per coupling.
pub fn formula_table(
    gammas: &[f64],
    model: DGammaModel,
    alpha_points: usize,
) -> Result<Vec<FormulaRow>, FormulaError> {
    let mut rows = Vec::new();
    for &gamma in gammas {
        let p = GammaParams::new(gamma, model)?;
        let window = alpha_window(&p)?;
        let base = FormulaRow {
            gamma,
            d_gamma: p.d_gamma(),
            xi: p.xi(),
            q: p.q(),
            euclid_boundary_dim: euclid_boundary_dim(&p),
            quantum_boundary_dim: quantum_boundary_dim(&p),
            alpha_lo: window.lo,
            alpha_hi: window.hi,
            alpha: None,
            thick_euclid_dim: None,
            thick_quantum_dim: None,
        };
        if alpha_points == 0 {
            rows.push(base);
            continue;
        }
        for alpha in gamma_grid(window.lo, window.hi, alpha_points) {
            rows.push(FormulaRow {
                alpha: Some(alpha),
                thick_euclid_dim: Some(thick_euclid_dim(&p, alpha)),
                thick_quantum_dim: thick_quantum_dim(&p, alpha).ok(),
                ..base.clone()
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact() -> GammaParams {
        GammaParams::new(SQRT_8_3, DGammaModel::ExactSqrt83).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn sqrt83_constant_is_accurate() {
        assert!(close(SQRT_8_3, (8.0f64 / 3.0).sqrt(), 1e-15));
    }

    #[test]
    fn params_at_pure_gravity() {
        let p = exact();
        assert!(close(p.xi(), 1.0 / 6f64.sqrt(), 1e-12));
        assert!(close(p.q(), 5.0 / 6f64.sqrt(), 1e-12));
    }

    #[test]
    fn params_user_supplied() {
        let p = make_params(1.0, DGammaModel::UserSupplied(2.5)).unwrap();
        assert!(close(p.xi(), 0.4, 1e-15));
        assert!(close(p.q(), 2.5, 1e-15));
    }

    #[test]
    fn params_reject_bad_inputs() {
        assert!(matches!(
            make_params(2.1, DGammaModel::Watabiki),
            Err(FormulaError::GammaOutOfRange(_))
        ));
        assert!(make_params(0.0, DGammaModel::QuadraticGuess).is_err());
        assert!(matches!(
            make_params(1.5, DGammaModel::ExactSqrt83),
            Err(FormulaError::NotSqrt83(_))
        ));
        assert!(matches!(
            make_params(1.0, DGammaModel::UserSupplied(2.0)),
            Err(FormulaError::DimensionTooSmall(_))
        ));
        assert!(make_params(SQRT_8_3 + 5e-13, DGammaModel::ExactSqrt83).is_ok());
        assert!(make_params(SQRT_8_3 + 2e-12, DGammaModel::ExactSqrt83).is_err());
    }

    #[test]
    fn watabiki_values() {
        assert!(close(watabiki(SQRT_8_3).unwrap(), 4.0, 1e-12));
        // mpmath, 30 digits: 3.56155281280883027491...
        assert!(close(watabiki(2f64.sqrt()).unwrap(), 3.561_552_812_808_830, 1e-12));
        assert!(close(watabiki(1e-9).unwrap(), 2.0, 1e-12));
        assert!(watabiki(2.0).is_err());
    }

    #[test]
    fn quadratic_guess_values() {
        assert!(close(quadratic_guess(SQRT_8_3).unwrap(), 4.0, 1e-12));
        // mpmath: 3.57735026918962576450...
        assert!(close(quadratic_guess(2f64.sqrt()).unwrap(), 3.577_350_269_189_626, 1e-12));
        assert!(close(quadratic_guess(1e-13).unwrap(), 2.0, 1e-12));
        assert!(quadratic_guess(-0.5).is_err());
    }

    #[test]
    fn boundary_dims_at_pure_gravity() {
        let p = exact();
        assert!(close(euclid_boundary_dim(&p), 1.25, 1e-12));
        assert!(close(quantum_boundary_dim(&p), 3.0, 1e-12));
    }

    #[test]
    fn quantum_boundary_dim_is_d_minus_one() {
        let p = GammaParams::from_dimension(1.0, 2.5).unwrap();
        assert!(close(quantum_boundary_dim(&p), 1.5, 1e-15));
        let p = GammaParams::from_dimension(1.0, 2.0 + 1e-6).unwrap();
        assert!(close(quantum_boundary_dim(&p), 1.0 + 1e-6, 1e-15));
    }

    #[test]
    fn preset_models_respect_printed_bounds() {
        for model in [DGammaModel::Watabiki, DGammaModel::QuadraticGuess] {
            for gamma in gamma_grid(0.01, 1.99, 199) {
                let p = GammaParams::new(gamma, model).unwrap();
                assert!(euclid_boundary_dim(&p) <= 1.2584, "{model} at {gamma}");
            }
            let p = GammaParams::new(2f64.sqrt(), model).unwrap();
            let e = euclid_boundary_dim(&p);
            assert!((1.2343..=1.25).contains(&e), "{model}: {e}");
        }
    }

    #[test]
    fn sqrt2_bracket_upper_end() {
        // d solving 2 - ξQ + ξ²/2 = 5/4 at γ = √2 (mpmath findroot).
        let p = GammaParams::from_dimension(2f64.sqrt(), 3.632_993_161_855_452).unwrap();
        assert!(close(euclid_boundary_dim(&p), 1.25, 1e-12));
    }

    #[test]
    fn thick_euclid_values() {
        let p = exact();
        assert!(close(thick_euclid_dim(&p, p.xi()), euclid_boundary_dim(&p), 1e-12));
        assert!(close(thick_euclid_dim(&p, 0.0), 7.0 / 6.0, 1e-12));
        let w = alpha_window(&p).unwrap();
        assert!(close(thick_euclid_dim(&p, w.lo), 0.0, 1e-12));
        assert!(close(thick_euclid_dim(&p, w.hi), 0.0, 1e-12));
        assert!(thick_euclid_dim(&p, w.hi + 0.5) < 0.0);
    }

    #[test]
    fn thick_quantum_values() {
        let p = exact();
        assert!(close(thick_quantum_dim(&p, p.gamma()).unwrap(), 3.0, 1e-12));
        assert!(close(thick_quantum_dim(&p, 0.0).unwrap(), 1.4, 1e-12));
        assert!(thick_quantum_dim(&p, p.q()).is_err());
        assert!(thick_quantum_dim(&p, p.q() + 1.0).is_err());
    }

    #[test]
    fn thick_quantum_vanishes_with_euclid_at_window_ends() {
        // At the window ends 2 - α²/2 = ξ(Q-α), so the quantum formula reads 0.
        let p = exact();
        let w = alpha_window(&p).unwrap();
        for a in [w.lo, w.hi] {
            assert!(close(2.0 - a * a / 2.0, p.xi() * (p.q() - a), 1e-12));
            assert!(close(thick_quantum_dim(&p, a).unwrap(), 0.0, 1e-11));
        }
        // Bisection on the quantum formula recovers the same endpoints.
        let f = |a: f64| thick_quantum_dim(&p, a).unwrap();
        let (mut lo, mut hi) = (0.5, w.hi + 1e-3);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 { lo = mid } else { hi = mid }
        }
        assert!(close(lo, w.hi, 1e-10));
    }

    #[test]
    fn window_at_pure_gravity() {
        let w = alpha_window(&exact()).unwrap();
        assert!(close(w.lo, 1.0 / 6f64.sqrt() - 2.5f64.sqrt(), 1e-12));
        assert!(close(w.hi, 1.0 / 6f64.sqrt() + 2.5f64.sqrt(), 1e-12));
        assert!(close(w.lo, -1.172_890_539_620_326_6, 1e-12));
        assert!(close(w.hi, 1.989_387_120_548_052_7, 1e-12));
        assert!(close(w.midpoint(), exact().xi(), 1e-12));
        assert!(w.contains(0.0) && !w.contains(w.hi) && !w.contains(2.5));
        assert!(is_in_window(&exact(), 0.4));
        assert!(!is_in_window(&exact(), -1.5));
    }

    #[test]
    fn one_point_exponent_values() {
        let p = exact();
        let xi = p.xi();
        assert!(close(one_point_exponent(&p, xi), xi * p.q() - xi * xi / 2.0, 1e-12));
        assert!(close(one_point_exponent(&p, xi), 0.75, 1e-12));
        assert!(close(one_point_exponent(&p, 0.0), xi * p.q(), 1e-15));
    }

    #[test]
    fn moment_exponent_values() {
        let p = exact();
        assert!(close(moment_exponent(&p, 3.0).unwrap(), 2.0, 1e-12));
        let xi = p.xi();
        assert!(close(moment_exponent(&p, 0.0).unwrap(), xi * p.q() - xi * xi / 2.0, 1e-15));
        // The vertex p = Q/ξ - 1 = 4 lies past the admissible range here.
        assert!(moment_exponent(&p, p.q() / xi - 1.0).is_err());
        assert!(moment_exponent(&p, -0.1).is_err());
        assert!(moment_exponent(&p, 2.0 * 4.0 / SQRT_8_3 - 1.0 + 1e-9).is_err());
    }

    #[test]
    fn diam_tail_values() {
        assert_eq!(diam_tail_exponent(0.0), 0.0);
        assert_eq!(diam_tail_exponent(2.0), 2.0);
        assert!(close(diam_tail_exponent(exact().xi()), 1.0 / 12.0, 1e-15));
    }

    #[test]
    fn model_strings_round_trip() {
        for s in ["exact", "watabiki", "quad", "user:3.25"] {
            let m: DGammaModel = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("user:abc".parse::<DGammaModel>().is_err());
        assert!("cubic".parse::<DGammaModel>().is_err());
        let json = serde_json::to_string(&DGammaModel::UserSupplied(2.75)).unwrap();
        assert_eq!(json, "\"user:2.75\"");
    }

    #[test]
    fn params_serde_rederives_exponents() {
        let p = exact();
        let json = serde_json::to_string(&p).unwrap();
        let back: GammaParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<GammaParams>(r#"{"gamma":2.5,"d_gamma":4}"#).is_err());
    }

    #[test]
    fn table_shapes() {
        let rows = formula_table(&[SQRT_8_3], DGammaModel::ExactSqrt83, 0).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].alpha.is_none());
        let rows = formula_table(&gamma_grid(0.5, 1.5, 3), DGammaModel::Watabiki, 5).unwrap();
        assert_eq!(rows.len(), 15);
        assert!(close(rows[0].thick_euclid_dim.unwrap(), 0.0, 1e-12));
        assert_eq!(rows[0].to_csv().split(',').count(), FormulaRow::CSV_HEADER.split(',').count());
    }
}
