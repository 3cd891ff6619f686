//! Free thermal, vacuum and Hadamard two-point kernels.
//!
//! The thermal covariance on the cylinder `[0, β) × ℝ` is the periodic
//! Green function of `−∂_u² − ∂_x² + m²`,
//!
//! ```text
//! C(u, x) = (1/2π) ∫₀^∞ dp cosh((β/2 − u) w)/(w sinh(β w/2)) cos(x p),   w = √(p² + m²)
//!         = (1/β) Σ_n e^{−ε_n |x|}/(2 ε_n) cos(ω_n u)
//!         = (1/2π) Σ_k K₀(m √((u + kβ)² + x²)).
//! ```
//!
//! The three lines give three independent evaluation routes: adaptive
//! momentum quadrature, the Matsubara mode sum and the image sum. The fast
//! [`thermal_covariance`] picks whichever of the last two is cheaper.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{EuclideanPoint, ThermalParams};
use crate::quad::adaptive_gk;
use crate::special::{bessel_entire_parts, k0k1, re_k0_signed, EULER_GAMMA};

const TWO_PI: f64 = 2.0 * PI;
const IMAGE_TOL: f64 = 1e-17;

/// `C^∞_m(u, x) = K₀(m√(u² + x²))/2π`.
pub fn vacuum_covariance(p: &ThermalParams, pt: EuclideanPoint) -> Result<f64> {
    let r = pt.u.hypot(pt.x);
    if r == 0.0 {
        return Err(Error::Singular("vacuum covariance at the origin".into()));
    }
    Ok(k0k1(p.mass * r).0 / TWO_PI)
}

fn image_sum<F: FnMut(f64) -> (f64, f64)>(beta: f64, u: f64, mut term: F, skip_zero: bool) -> (f64, f64) {
    // returns (Σ K₀ terms, Σ ∂_u terms) over images u + kβ
    let (mut s0, mut s1) = if skip_zero { (0.0, 0.0) } else { term(u) };
    let mut k = 1.0;
    loop {
        let (a0, a1) = term(u + k * beta);
        let (b0, b1) = term(u - k * beta);
        s0 += a0 + b0;
        s1 += a1 + b1;
        if (a0 + b0).abs() <= IMAGE_TOL * s0.abs() || (a0 == 0.0 && b0 == 0.0) {
            break;
        }
        k += 1.0;
    }
    (s0, s1)
}

/// Image-sum route `(1/2π)Σ_k K₀(m√((u+kβ)² + x²))`, valid for every `u`.
pub fn thermal_covariance_images(p: &ThermalParams, u: f64, x: f64) -> Result<f64> {
    Ok(thermal_images_with_du(p, u, x)?.0)
}

fn thermal_images_with_du(p: &ThermalParams, u: f64, x: f64) -> Result<(f64, f64)> {
    let u = u.rem_euclid(p.beta);
    if x == 0.0 && (u == 0.0 || u == p.beta) {
        return Err(Error::Singular("thermal covariance at coincident points".into()));
    }
    let m = p.mass;
    let (s0, s1) = image_sum(
        p.beta,
        u,
        |uk| {
            let r = uk.hypot(x);
            let (k0, k1) = k0k1(m * r);
            (k0, -m * k1 * uk / r)
        },
        false,
    );
    Ok((s0 / TWO_PI, s1 / TWO_PI))
}

/// Thermal part `C^β_m − C^∞_m`, the images with `k ≠ 0`. Finite at the origin.
pub fn thermal_excess(p: &ThermalParams, u: f64, x: f64) -> f64 {
    let m = p.mass;
    let u = if u.abs() <= 0.5 * p.beta { u } else { u.rem_euclid(p.beta) };
    let (s, _) = image_sum(p.beta, u, |uk| (k0k1(m * uk.hypot(x)).0, 0.0), true);
    s / TWO_PI
}

/// Number of Matsubara modes per sign so that the tail bound is below `tol`.
pub fn matsubara_n_for_tolerance(p: &ThermalParams, x: f64, tol: f64) -> Result<usize> {
    if x == 0.0 {
        return Err(Error::Singular("Matsubara sum diverges at x = 0".into()));
    }
    let mut n = 0;
    while matsubara_tail(p, x, n) > tol {
        n += 1;
        if n > 10_000_000 {
            return Err(Error::Capacity("Matsubara truncation above 1e7 modes".into()));
        }
    }
    Ok(n)
}

/// Geometric bound on `|Σ_{|n| > N}|`.
pub fn matsubara_tail(p: &ThermalParams, x: f64, n: usize) -> f64 {
    let w = TWO_PI / p.beta;
    let wn = w * (n + 1) as f64;
    let x = x.abs();
    (1.0 / (p.beta * wn)) * (-wn * x).exp() / (-(-w * x).exp_m1())
}

/// Matsubara value with its certified truncation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatsubaraValue {
    pub value: f64,
    pub tail_bound: f64,
    pub n_max: usize,
}

/// Mode sum truncated at `|n| ≤ n_max`.
pub fn thermal_covariance_matsubara(p: &ThermalParams, pt: EuclideanPoint, n_max: usize) -> Result<MatsubaraValue> {
    if pt.x == 0.0 {
        return Err(Error::Singular("Matsubara sum diverges at x = 0".into()));
    }
    let (v, _) = matsubara_sum(p, pt.u, pt.x, n_max);
    Ok(MatsubaraValue { value: v, tail_bound: matsubara_tail(p, pt.x, n_max), n_max })
}

fn matsubara_sum(p: &ThermalParams, u: f64, x: f64, n_max: usize) -> (f64, f64) {
    let x = x.abs();
    let m2 = p.mass * p.mass;
    let w = TWO_PI / p.beta;
    let mut s0 = (-p.mass * x).exp() / (2.0 * p.mass);
    let mut s1 = 0.0;
    for n in 1..=n_max {
        let wn = w * n as f64;
        let e = (m2 + wn * wn).sqrt();
        let a = (-e * x).exp() / e; // two signs of n combined: 2·e^{−εx}/(2ε)
        let (sn, cn) = (wn * u).sin_cos();
        s0 += a * cn;
        s1 -= a * wn * sn;
    }
    (s0 / p.beta, s1 / p.beta)
}

/// Matsubara value and `∂_u` value, truncated by tolerance.
pub fn thermal_matsubara_with_du(p: &ThermalParams, u: f64, x: f64, tol: f64) -> Result<(f64, f64)> {
    let n = matsubara_n_for_tolerance(p, x, tol)?;
    // the u-derivative tail carries an extra ω_n; a few extra modes cover it
    let extra = (4.0 * p.beta / (TWO_PI * x.abs())).ceil() as usize + 2;
    Ok(matsubara_sum(p, u, x, n + extra))
}

fn prefer_matsubara(p: &ThermalParams, x: f64) -> bool {
    let x = x.abs();
    if x == 0.0 {
        return false;
    }
    let modes = p.beta / (TWO_PI * x);
    let images = 6.0 / (p.mass * p.beta) + 3.0;
    modes < images
}

/// Fast evaluation of `C^β_m(u, x)` for any real `u` (β-periodic, even).
pub fn thermal_covariance(p: &ThermalParams, u: f64, x: f64) -> Result<f64> {
    if prefer_matsubara(p, x) {
        let n = matsubara_n_for_tolerance(p, x, 1e-17 / p.mass.max(1.0))?;
        Ok(matsubara_sum(p, u, x, n).0)
    } else {
        thermal_covariance_images(p, u, x)
    }
}

/// `(C, ∂_u C)` by the fast route.
pub fn thermal_with_du(p: &ThermalParams, u: f64, x: f64) -> Result<(f64, f64)> {
    if prefer_matsubara(p, x) {
        thermal_matsubara_with_du(p, u, x, 1e-17 / p.mass.max(1.0))
    } else {
        thermal_images_with_du(p, u, x)
    }
}

/// Quadrature result with its error budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureValue {
    pub value: f64,
    pub error: f64,
    pub p_max: f64,
}

/// Momentum-integral route at the default tolerance `1e-11` (relative to the
/// vacuum part).
pub fn thermal_covariance_quadrature(p: &ThermalParams, pt: EuclideanPoint) -> Result<f64> {
    Ok(thermal_quadrature_with(p, pt, 1e-11)?.value)
}

/// Momentum-integral route.
///
/// The vacuum piece `e^{−u w}` is split off and integrated in closed form
/// (it is `K₀`); the remainder decays like `e^{−β w/2}` and goes through
/// adaptive Gauss–Kronrod on `[0, P]`, with the tail beyond `P` bounded
/// analytically.
pub fn thermal_quadrature_with(p: &ThermalParams, pt: EuclideanPoint, rel_tol: f64) -> Result<QuadratureValue> {
    let beta = p.beta;
    let m = p.mass;
    if !(0.0..=beta).contains(&pt.u) {
        return Err(Error::Domain(format!("u = {} outside [0, β]", pt.u)));
    }
    let up = pt.u.min(beta - pt.u);
    let x = pt.x.abs();
    if up == 0.0 && x == 0.0 {
        return Err(Error::Singular("thermal covariance at coincident points".into()));
    }
    let vac = k0k1(m * up.hypot(x)).0 / TWO_PI;
    let far = beta - up;
    let denom_floor = -(-beta * m).exp_m1();
    let tail = |pm: f64| 2.0 * (-far * pm).exp() / (pm * far * denom_floor) / TWO_PI;
    let abs_tol = rel_tol * vac;
    let mut p_max = (m + 1.0).max(1.0 / far);
    while tail(p_max) > 0.1 * abs_tol {
        p_max *= 1.25;
    }
    let f = |q: f64| {
        let w = q.hypot(m);
        let num = (-far * w).exp() + (-(beta + up) * w).exp();
        num / (-(-beta * w).exp_m1()) / w * (x * q).cos()
    };
    let panels = ((x * p_max / TWO_PI).ceil() as usize * 2).max(8);
    let r = adaptive_gk(f, 0.0, p_max, panels, 0.5 * abs_tol * TWO_PI, 1e-15, 200_000)?;
    Ok(QuadratureValue {
        value: vac + r.value / TWO_PI,
        error: r.error / TWO_PI + tail(p_max),
        p_max,
    })
}

/// `𝓗^μ_0(x) = −(1/4π) log|x²/4μ²|`, `x² = −x0² + x1²`.
pub fn massless_hadamard(p: &ThermalParams, x0: f64, x1: f64) -> Result<f64> {
    let s = -x0 * x0 + x1 * x1;
    if s.abs() < 1e-12 {
        return Err(Error::Singular("massless Hadamard function on the light cone".into()));
    }
    Ok(-(s.abs() / (4.0 * p.mu_scale * p.mu_scale)).ln() / (4.0 * PI))
}

/// `𝓗_m(x) = (1/2π) Re K₀(m√(x²))`, principal branch for timelike `x²`.
pub fn massive_hadamard(p: &ThermalParams, x0: f64, x1: f64) -> Result<f64> {
    let s = -x0 * x0 + x1 * x1;
    if s.abs() < 1e-12 {
        return Err(Error::Singular("massive Hadamard function on the light cone".into()));
    }
    Ok(re_k0_signed(0.25 * p.mass * p.mass * s)? / TWO_PI)
}

/// `𝓗^μ_0 − 𝓗_m`, continuous across the light cone with cone value
/// `(ln(mμ) + γ)/2π`.
pub fn hadamard_difference(p: &ThermalParams, x0: f64, x1: f64) -> f64 {
    let s = -x0 * x0 + x1 * x1;
    let q = 0.25 * p.mass * p.mass * s;
    let cone = ((p.mass * p.mu_scale).ln() + EULER_GAMMA) / TWO_PI;
    if q == 0.0 {
        return cone;
    }
    if q.abs() < 4.0 {
        let (i, sq) = bessel_entire_parts(q);
        let lq = q.abs().ln();
        return lq * (i - 1.0) / (4.0 * PI) + cone + EULER_GAMMA * (i - 1.0) / TWO_PI - sq / TWO_PI;
    }
    let h0 = -(s.abs() / (4.0 * p.mu_scale * p.mu_scale)).ln() / (4.0 * PI);
    let hm = re_k0_signed(q).expect("q is nonzero") / TWO_PI;
    h0 - hm
}

/// Evaluator kinds for the uniform facade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovarianceKind {
    ThermalQuadrature,
    ThermalMatsubara,
    Vacuum,
    MasslessHadamard,
    MassiveHadamard,
}

/// Uniform evaluator. Hadamard kinds read `pt.u` as `x⁰` and `pt.x` as `x¹`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEval {
    pub kind: CovarianceKind,
    pub params: ThermalParams,
    pub truncation: usize,
}

impl CovarianceEval {
    pub fn new(kind: CovarianceKind, params: ThermalParams, truncation: usize) -> Result<Self> {
        if truncation == 0 {
            return Err(Error::Config("truncation must be at least 1".into()));
        }
        Ok(Self { kind, params, truncation })
    }

    pub fn eval(&self, pt: EuclideanPoint) -> Result<f64> {
        let p = &self.params;
        match self.kind {
            CovarianceKind::ThermalQuadrature => {
                let tol = 10f64.powi(-(self.truncation.min(14) as i32));
                Ok(thermal_quadrature_with(p, pt, tol)?.value)
            }
            CovarianceKind::ThermalMatsubara => Ok(thermal_covariance_matsubara(p, pt, self.truncation)?.value),
            CovarianceKind::Vacuum => vacuum_covariance(p, pt),
            CovarianceKind::MasslessHadamard => massless_hadamard(p, pt.u, pt.x),
            CovarianceKind::MassiveHadamard => massive_hadamard(p, pt.u, pt.x),
        }
    }
}

/// `c_β` of the uniform decay bound `|C(u, x)| ≤ c_β e^{−m|x|/√2}/m`, `|x| > α`.
pub fn decay_constant(beta: f64, alpha_cut: f64) -> f64 {
    (2.0 / beta) / (-(-(alpha_cut / SQRT_2) * (TWO_PI / beta)).exp_m1())
}

pub fn decay_bound(p: &ThermalParams, alpha_cut: f64, x: f64) -> f64 {
    decay_constant(p.beta, alpha_cut) * (-p.mass * x.abs() / SQRT_2).exp() / p.mass
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub c_beta: f64,
    pub margins: Vec<f64>,
    pub min_margin: f64,
    pub violations: usize,
}

/// Margin `bound − |C|` at every grid point.
pub fn decay_bound_report(p: &ThermalParams, alpha_cut: f64, grid: &[EuclideanPoint]) -> Result<DecayReport> {
    let mut margins = Vec::with_capacity(grid.len());
    for pt in grid {
        if pt.x.abs() <= alpha_cut {
            return Err(Error::Domain(format!("grid point x = {} inside the cut {alpha_cut}", pt.x)));
        }
        let c = thermal_covariance(p, pt.u, pt.x)?;
        margins.push(decay_bound(p, alpha_cut, pt.x) - c.abs());
    }
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let violations = margins.iter().filter(|m| **m < 0.0).count();
    Ok(DecayReport { c_beta: decay_constant(p.beta, alpha_cut), margins, min_margin, violations })
}

/// Supremum over the vacuum-limit window `u ∈ [0, β/2]` of `|C^β − C^∞|`
/// as bounded by `(1/π)(1/βm)(1 + 2/βm)`.
pub fn vacuum_limit_bound(p: &ThermalParams) -> f64 {
    let bm = p.beta * p.mass;
    (1.0 / PI) * (1.0 / bm) * (1.0 + 2.0 / bm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpNorm {
    pub value: f64,
    pub tail: f64,
    pub cutoff: f64,
    pub inconclusive: bool,
}

/// `(∫|C(u, x)|^p dx)^{1/p}` over `x ∈ ℝ` at fixed `u`. `pexp = ∞` gives
/// the grid maximum.
pub fn lp_norm_slice(p: &ThermalParams, u: f64, pexp: f64) -> Result<LpNorm> {
    if !(u > 0.0 && u < p.beta) {
        return Err(Error::Domain(format!("u = {u} must lie in (0, β)")));
    }
    if !(pexp >= 1.0) {
        return Err(Error::Domain(format!("exponent {pexp} below 1")));
    }
    if pexp.is_infinite() {
        let mut best: f64 = 0.0;
        for i in 0..=4000 {
            let x = 12.0 * i as f64 / 4000.0 / p.mass.clamp(0.1, 1.0);
            best = best.max(thermal_covariance(p, u, x)?.abs());
        }
        return Ok(LpNorm { value: best, tail: 0.0, cutoff: 0.0, inconclusive: false });
    }
    let c = decay_constant(p.beta, 1.0) / p.mass;
    let tail_of = |xc: f64| 2.0 * c.powf(pexp) * SQRT_2 / (pexp * p.mass) * (-pexp * p.mass * xc / SQRT_2).exp();
    let mut xc: f64 = 2.0;
    let mut bulk = 0.0;
    let mut done = 0.0;
    let tol = 1e-10;
    loop {
        let r = adaptive_gk(
            |x| thermal_covariance(p, u, x).map(|v| v.abs().powf(pexp)).unwrap_or(f64::NAN),
            done,
            xc,
            8,
            1e-16,
            1e-12,
            50_000,
        )?;
        if r.value.is_nan() {
            return Err(Error::Quadrature { msg: "non-finite integrand".into(), partial: bulk });
        }
        bulk += 2.0 * r.value;
        done = xc;
        if tail_of(xc) <= tol * bulk || xc > 400.0 / p.mass {
            break;
        }
        xc *= 1.5;
    }
    let tail = tail_of(xc);
    Ok(LpNorm {
        value: bulk.powf(1.0 / pexp),
        tail,
        cutoff: xc,
        inconclusive: tail > tol * bulk,
    })
}

/// `∫_ℝ C(u, x) dx = cosh(m(β/2 − u))/(2m sinh(mβ/2))`: the zero spatial
/// momentum mode.
pub fn slice_integral_exact(p: &ThermalParams, u: f64) -> f64 {
    let m = p.mass;
    (m * (0.5 * p.beta - u)).cosh() / (2.0 * m * (0.5 * m * p.beta).sinh())
}

/// Smallest eigenvalue of the Gram matrix of `C^β − C^∞` on equal-time points.
pub fn excess_gram_min_eigenvalue(p: &ThermalParams, xs: &[f64]) -> f64 {
    let n = xs.len();
    let g = nalgebra::DMatrix::from_fn(n, n, |i, j| thermal_excess(p, 0.0, xs[i] - xs[j]));
    g.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pr(beta: f64, m: f64) -> ThermalParams {
        ThermalParams::new(beta, m)
    }

    #[test]
    fn vacuum_reference() {
        let v = vacuum_covariance(&pr(1.0, 1.0), EuclideanPoint::new(0.0, 1.0)).unwrap();
        assert!((v - 0.421_024_438_240_708_34 / TWO_PI).abs() < 1e-15);
        assert!((v - 0.067_008_1).abs() < 1e-7);
        assert!(vacuum_covariance(&pr(1.0, 1.0), EuclideanPoint::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn three_routes_agree() {
        let p = pr(2.0, 1.0);
        let pt = EuclideanPoint::new(0.7, 1.3);
        let q = thermal_covariance_quadrature(&p, pt).unwrap();
        let n = matsubara_n_for_tolerance(&p, 1.3, 1e-14).unwrap();
        let ms = thermal_covariance_matsubara(&p, pt, n).unwrap();
        let im = thermal_covariance_images(&p, 0.7, 1.3).unwrap();
        assert!((q - ms.value).abs() < 1e-10 * q);
        assert!((q - im).abs() < 1e-10 * q);
        assert!(ms.tail_bound < 1e-14);
    }

    #[test]
    fn zero_mode_only() {
        let p = pr(2.0, 1.0);
        let v = thermal_covariance_matsubara(&p, EuclideanPoint::new(0.3, 0.8), 0).unwrap();
        assert!((v.value - (-0.8f64).exp() / (2.0 * 2.0)).abs() < 1e-15);
        assert!(thermal_covariance_matsubara(&p, EuclideanPoint::new(0.3, 0.0), 4).is_err());
    }

    #[test]
    fn midpoint_value_matches_direct_quadrature() {
        // β = 2, m = 1, u = β/2, x = 0: (1/2π)∫ dp /(w sinh w)
        let p = pr(2.0, 1.0);
        let direct = adaptive_gk(
            |q| {
                let w = q.hypot(1.0);
                1.0 / (w * w.sinh())
            },
            0.0,
            60.0,
            16,
            1e-15,
            1e-14,
            10_000,
        )
        .unwrap()
        .value
            / TWO_PI;
        let v = thermal_covariance_quadrature(&p, EuclideanPoint::new(1.0, 0.0)).unwrap();
        assert!((v - direct).abs() < 1e-11 * direct);
    }

    #[test]
    fn derivative_routes_agree() {
        let p = pr(1.0, 2.0);
        for &(u, x) in &[(0.2, 0.4), (0.45, 1.1), (0.9, 0.05)] {
            let (_, du_img) = thermal_images_with_du(&p, u, x).unwrap();
            let (_, du_mat) = thermal_matsubara_with_du(&p, u, x, 1e-16).unwrap();
            let h = 1e-5;
            let fd = (thermal_covariance(&p, u + h, x).unwrap() - thermal_covariance(&p, u - h, x).unwrap()) / (2.0 * h);
            assert!((du_img - du_mat).abs() < 1e-9 * du_img.abs().max(1e-3), "{u} {x}");
            assert!((fd - du_mat).abs() < 1e-6 * du_mat.abs().max(1e-3), "{u} {x}");
        }
    }

    #[test]
    fn hadamard_values() {
        let p = ThermalParams { mu_scale: 0.7, ..pr(1.0, 1.0) };
        assert!(massless_hadamard(&p, 0.0, 1.4).unwrap().abs() < 1e-15);
        assert!(massless_hadamard(&p, 1.0, 1.0).is_err());
        let s = massive_hadamard(&p, 0.0, 1.0).unwrap();
        assert!((s - 0.421_024_438_240_708_34 / TWO_PI).abs() < 1e-15);
        let t = massive_hadamard(&p, 2.0, 0.5).unwrap();
        let y = (4.0f64 - 0.25).sqrt();
        assert!((t + 0.25 * crate::special::bessel_y0(y).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn hadamard_difference_is_continuous_on_cone() {
        let p = ThermalParams { mu_scale: 1.3, ..pr(1.0, 2.0) };
        let cone = hadamard_difference(&p, 1.0, 1.0);
        let near = hadamard_difference(&p, 1.0, 1.0 + 1e-9);
        assert!((cone - near).abs() < 1e-7);
        for &(a, b) in &[(0.1, 0.7), (0.9, 0.2), (3.0, 0.5), (0.2, 4.0)] {
            let d = massless_hadamard(&p, a, b).unwrap() - massive_hadamard(&p, a, b).unwrap();
            assert!((hadamard_difference(&p, a, b) - d).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn slice_norm_matches_zero_mode() {
        let p = pr(1.5, 2.0);
        let n = lp_norm_slice(&p, 0.4, 1.0).unwrap();
        assert!((n.value - slice_integral_exact(&p, 0.4)).abs() < 1e-9);
        assert!(!n.inconclusive);
    }

    #[test]
    fn excess_is_positive_semidefinite() {
        let p = pr(1.0, 1.0);
        let xs: Vec<f64> = (0..30).map(|i| i as f64 * 0.13).collect();
        assert!(excess_gram_min_eigenvalue(&p, &xs) > -1e-10);
    }
}
