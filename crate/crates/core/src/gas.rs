//! Coulomb-gas estimators.
//!
//! Every vertex-operator expectation reduces to integrals over charge
//! positions of `exp(−Σ_{i<j} a_i a_j ħ w(x_i, x_j))`. The estimators here
//! sample positions from the cutoff `g` and sum the charge signs exactly.
//! Paired quantities are evaluated on the same positions, so inequality
//! checks compare differences with their own (small) standard errors.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::CovarianceModel;
use crate::mc::{sample_moments, stream_id, ComplexEstimate, Estimate, Moments, Rng};
use crate::params::{RunConfig, ThermalParams};
use crate::quad::GaussLegendre;

/// Largest number of charges whose signs are enumerated exactly.
pub const MAX_EXACT_SIGNS: usize = 12;

/// Charge positions and signed charges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeConfiguration {
    pub points: Vec<[f64; 2]>,
    pub charges: Vec<f64>,
}

impl ChargeConfiguration {
    pub fn new(points: Vec<[f64; 2]>, charges: Vec<f64>, a: f64) -> Result<Self> {
        if points.len() != charges.len() {
            return Err(Error::Domain("one charge per point".into()));
        }
        if charges.iter().any(|c| (c.abs() - a).abs() > 1e-12 * a) {
            return Err(Error::Domain(format!("charges must be ±{a}")));
        }
        Ok(Self { points, charges })
    }
}

/// Spacetime cutoff `g`. Points are `[t, s]` (or `[u, x]` on the Euclidean
/// side). `Interval` lives on the line `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CutoffFunction {
    Interval { lo: f64, hi: f64 },
    Rect { t: (f64, f64), s: (f64, f64) },
    /// `D_μ = {|t − s| < μ, |t + s| < μ}`.
    Diamond { mu: f64 },
    /// Union of unit squares given by their lower-left corners.
    Squares(Vec<[f64; 2]>),
    /// `exp(1 − 1/(1 − r²/R²))` inside the disk of radius `R`.
    Bump { center: [f64; 2], radius: f64 },
}

fn bump_profile(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r2)).exp()
    }
}

impl CutoffFunction {
    /// Lebesgue measure of the sampling box.
    pub fn bounding_measure(&self) -> f64 {
        match self {
            CutoffFunction::Interval { lo, hi } => hi - lo,
            CutoffFunction::Rect { t, s } => (t.1 - t.0) * (s.1 - s.0),
            CutoffFunction::Diamond { mu } => 2.0 * mu * mu,
            CutoffFunction::Squares(c) => c.len() as f64,
            CutoffFunction::Bump { radius, .. } => 4.0 * radius * radius,
        }
    }

    /// Uniform draw from the sampling box and the value of `g` there.
    pub fn sample(&self, rng: &mut Rng) -> ([f64; 2], f64) {
        match self {
            CutoffFunction::Interval { lo, hi } => ([0.0, lo + (hi - lo) * rng.random::<f64>()], 1.0),
            CutoffFunction::Rect { t, s } => (
                [t.0 + (t.1 - t.0) * rng.random::<f64>(), s.0 + (s.1 - s.0) * rng.random::<f64>()],
                1.0,
            ),
            CutoffFunction::Diamond { mu } => {
                let u = mu * (2.0 * rng.random::<f64>() - 1.0);
                let v = mu * (2.0 * rng.random::<f64>() - 1.0);
                ([0.5 * (v + u), 0.5 * (v - u)], 1.0)
            }
            CutoffFunction::Squares(c) => {
                let k = rng.random_range(0..c.len());
                ([c[k][0] + rng.random::<f64>(), c[k][1] + rng.random::<f64>()], 1.0)
            }
            CutoffFunction::Bump { center, radius } => {
                let dt = radius * (2.0 * rng.random::<f64>() - 1.0);
                let ds = radius * (2.0 * rng.random::<f64>() - 1.0);
                let r2 = (dt * dt + ds * ds) / (radius * radius);
                ([center[0] + dt, center[1] + ds], bump_profile(r2))
            }
        }
    }

    /// `g` at a point.
    pub fn value(&self, x: [f64; 2]) -> f64 {
        let ind = |b: bool| if b { 1.0 } else { 0.0 };
        match self {
            CutoffFunction::Interval { lo, hi } => ind(x[0] == 0.0 && x[1] > *lo && x[1] < *hi),
            CutoffFunction::Rect { t, s } => ind(x[0] > t.0 && x[0] < t.1 && x[1] > s.0 && x[1] < s.1),
            CutoffFunction::Diamond { mu } => ind((x[0] - x[1]).abs() < *mu && (x[0] + x[1]).abs() < *mu),
            CutoffFunction::Squares(c) => {
                ind(c.iter().any(|q| x[0] > q[0] && x[0] < q[0] + 1.0 && x[1] > q[1] && x[1] < q[1] + 1.0))
            }
            CutoffFunction::Bump { center, radius } => {
                let r2 = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)) / (radius * radius);
                bump_profile(r2)
            }
        }
    }

    fn bump_moment(radius: f64, q: f64) -> f64 {
        // ∫ g^q over the disk, polar coordinates
        let gl = GaussLegendre::new(64);
        2.0 * PI * radius * radius * gl.integrate(|r| r * bump_profile(r * r).powf(q), 0.0, 1.0)
    }

    /// `∫ g`.
    pub fn integral(&self) -> f64 {
        match self {
            CutoffFunction::Bump { radius, .. } => Self::bump_moment(*radius, 1.0),
            CutoffFunction::Squares(c) => {
                let mut c = c.clone();
                c.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
                c.dedup();
                c.len() as f64
            }
            _ => self.bounding_measure(),
        }
    }

    /// `‖g‖_q`; closed form `(measure)^{1/q}` for characteristic functions.
    pub fn lq_norm(&self, q: f64) -> f64 {
        match self {
            CutoffFunction::Bump { radius, .. } => {
                if q.is_infinite() {
                    1.0
                } else {
                    Self::bump_moment(*radius, q).powf(1.0 / q)
                }
            }
            _ => {
                if q.is_infinite() {
                    1.0
                } else {
                    self.integral().powf(1.0 / q)
                }
            }
        }
    }
}

/// Background field `φ` entering the vertex phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FieldConfiguration {
    Zero,
    Constant(f64),
    PlaneWave { amplitude: f64, k_t: f64, k_s: f64 },
}

impl FieldConfiguration {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match self {
            FieldConfiguration::Zero => 0.0,
            FieldConfiguration::Constant(c) => *c,
            FieldConfiguration::PlaneWave { amplitude, k_t, k_s } => amplitude * (k_t * x[0] + k_s * x[1]).cos(),
        }
    }
}

/// `exp(−Σ_{i<j} a_i a_j ħ w(x_i, x_j))`.
pub fn gas_weight(w: &CovarianceModel, cfg: &ChargeConfiguration, hbar: f64) -> Result<f64> {
    let n = cfg.points.len();
    let mut e = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = w.eval(cfg.points[i], cfg.points[j])?;
            e += cfg.charges[i] * cfg.charges[j] * v;
        }
    }
    let out = (-hbar * e).exp();
    if !out.is_finite() {
        return Err(Error::Singular("gas weight overflow at near-coincident opposite charges".into()));
    }
    Ok(out)
}

/// Pairwise kernel values, row-major upper triangle used.
fn pair_matrix(w: &CovarianceModel, pts: &[[f64; 2]]) -> Result<Vec<f64>> {
    let n = pts.len();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = w.eval(pts[i], pts[j])?;
            m[i * n + j] = v;
            m[j * n + i] = v;
        }
    }
    Ok(m)
}

/// Draw `n` points from `g`, redrawing the whole set if a kernel
/// evaluation is singular. Returns positions, the product of `g` values
/// and the number of rejected draws.
fn draw_points(
    g: &CutoffFunction,
    kernels: &[&CovarianceModel],
    n: usize,
    rng: &mut Rng,
) -> (Vec<[f64; 2]>, f64, Vec<Vec<f64>>, u64) {
    let mut rejected = 0;
    loop {
        let mut pts = Vec::with_capacity(n);
        let mut gw = 1.0;
        for _ in 0..n {
            let (x, v) = g.sample(rng);
            pts.push(x);
            gw *= v;
        }
        let mats: Result<Vec<Vec<f64>>> = kernels.iter().map(|k| pair_matrix(k, &pts)).collect();
        match mats {
            Ok(m) => return (pts, gw, m, rejected),
            Err(_) => rejected += 1,
        }
        if rejected > 1_000_000 {
            panic!("cutoff support lies on a kernel singularity");
        }
    }
}

/// `Σ_{i<j} s_i s_j w_ij` for the sign pattern `mask` (bit set = positive).
fn signed_energy(m: &[f64], n: usize, mask: u64) -> f64 {
    let mut e = 0.0;
    for i in 0..n {
        let si = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
        for j in (i + 1)..n {
            let sj = if mask >> j & 1 == 1 { 1.0 } else { -1.0 };
            e += si * sj * m[i * n + j];
        }
    }
    e
}

/// `(1/2^n) Σ_signs exp(−a²ħ Σ s_i s_j w_ij)`: the integrand of `ev₀(V^n)`
/// for `V = ∫ cos(aφ) g`.
fn cosine_sign_average(m: &[f64], n: usize, a2h: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    // pattern and its negation carry the same weight
    let half = 1u64 << (n - 1);
    let mut s = 0.0;
    for mask in 0..half {
        s += (-a2h * signed_energy(m, n, mask)).exp();
    }
    s / half as f64
}

/// Weight for a fixed assignment: the first `plus` charges positive.
fn fixed_assignment_weight(m: &[f64], n: usize, plus: usize, a2h: f64) -> f64 {
    let mask = (1u64 << plus) - 1;
    (-a2h * signed_energy(m, n, mask)).exp()
}

/// Result of an S-matrix coefficient estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmatrixEstimate {
    pub n: usize,
    pub value: ComplexEstimate,
    pub rejected: u64,
}

/// `S_n = (1/n!)(iλ/ħ)^n (1/2^n) Σ_signs ∫ e^{iΣ a_k φ(x_k)} e^{−Σ a_i a_j ħ 𝓗_m} Π g`.
pub fn smatrix_coefficient_mc(
    p: &ThermalParams,
    lambda: f64,
    g: &CutoffFunction,
    n: usize,
    phi: &FieldConfiguration,
    cfg: &RunConfig,
) -> Result<SmatrixEstimate> {
    smatrix_coefficient_with_kernel(p, &CovarianceModel::MassiveHadamard(*p), lambda, g, n, phi, cfg)
}

pub fn smatrix_coefficient_with_kernel(
    p: &ThermalParams,
    w: &CovarianceModel,
    lambda: f64,
    g: &CutoffFunction,
    n: usize,
    phi: &FieldConfiguration,
    cfg: &RunConfig,
) -> Result<SmatrixEstimate> {
    if n > MAX_EXACT_SIGNS {
        return Err(Error::Capacity(format!("order {n} above {MAX_EXACT_SIGNS}")));
    }
    if n == 0 {
        return Ok(SmatrixEstimate { n, value: ComplexEstimate::exact(1.0, 0.0), rejected: 0 });
    }
    if 2.0 * p.alpha() >= 1.0 {
        return Err(Error::Precondition(format!(
            "a²ħ/4π = {} ≥ 1/2: the squared integrand |x²|^(−2α) is not integrable, so the \
             Monte-Carlo variance is infinite (Cauchy-determinant integrability condition)",
            p.alpha()
        )));
    }
    let a = p.coupling_a;
    let a2h = a * a * p.hbar;
    let vol = g.bounding_measure().powi(n as i32);
    let rejected = std::sync::atomic::AtomicU64::new(0);
    let mom = sample_moments(cfg.seed, stream_id("smatrix") ^ n as u64, cfg.samples, 2, |rng, out| {
        let (pts, gw, mats, rej) = draw_points(g, &[w], n, rng);
        rejected.fetch_add(rej, std::sync::atomic::Ordering::Relaxed);
        let m = &mats[0];
        let phase: Vec<f64> = pts.iter().map(|x| a * phi.eval(*x)).collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for mask in 0..(1u64 << n) {
            let mut ph = 0.0;
            for (k, f) in phase.iter().enumerate() {
                ph += if mask >> k & 1 == 1 { *f } else { -*f };
            }
            acc += Complex64::from_polar((-a2h * signed_energy(m, n, mask)).exp(), ph);
        }
        acc *= vol * gw / (1u64 << n) as f64;
        out[0] = acc.re;
        out[1] = acc.im;
    });
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    let pref = Complex64::new(0.0, lambda / p.hbar).powu(n as u32) / fact;
    let mean = pref * Complex64::new(mom.mean[0], mom.mean[1]);
    // rotation by i^n swaps or keeps the error components
    let (er, ei) = (mom.std_error(0) * pref.norm(), mom.std_error(1) * pref.norm());
    let (re_err, im_err) = if n % 2 == 0 { (er, ei) } else { (ei, er) };
    Ok(SmatrixEstimate {
        n,
        value: ComplexEstimate { re: mean.re, im: mean.im, re_err, im_err },
        rejected: rejected.into_inner(),
    })
}

/// Both sides of Cauchy's determinant identity in null coordinates.
pub fn cauchy_identity_check(xs: &[[f64; 2]], ys: &[[f64; 2]]) -> Result<(f64, f64)> {
    let n = xs.len();
    if ys.len() != n || n == 0 {
        return Err(Error::Domain("need two non-empty lists of equal length".into()));
    }
    let null = |p: &[f64; 2]| (p[0] - p[1], p[0] + p[1]);
    let xu: Vec<(f64, f64)> = xs.iter().map(null).collect();
    let yu: Vec<(f64, f64)> = ys.iter().map(null).collect();
    let sq = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0) * (a.1 - b.1)).abs();
    let mut log_lhs = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            log_lhs += sq(xu[i], xu[j]).ln() + sq(yu[i], yu[j]).ln();
        }
        for j in 0..n {
            let d = sq(xu[i], yu[j]);
            if d == 0.0 {
                return Err(Error::Degenerate("coincident null coordinates".into()));
            }
            log_lhs -= d.ln();
        }
    }
    let det = |pick: fn(&(f64, f64)) -> f64| -> Result<f64> {
        let m = DMatrix::from_fn(n, n, |i, j| 1.0 / (pick(&xu[i]) - pick(&yu[j])));
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("coincident null coordinates".into()));
        }
        Ok(m.determinant().abs())
    };
    let rhs = det(|p| p.0)? * det(|p| p.1)?;
    if rhs == 0.0 {
        return Err(Error::Degenerate("singular Cauchy matrix".into()));
    }
    Ok((log_lhs.exp(), rhs))
}

/// Pair integral `∫∫_{(−μ,μ)²} |a − b|^{−s} da db` by quadrature in
/// centre/difference coordinates, with `r = 2μ t^{1/(1−s)}` absorbing the
/// singularity.
pub fn pair_cell_integral(mu: f64, s: f64, nodes: usize) -> f64 {
    let gl = GaussLegendre::new(nodes);
    let e = 1.0 / (1.0 - s);
    // r ∈ (0, 2μ): ∫ dc over |c| < μ − r/2, doubled for negative r
    2.0 * gl.integrate(
        |t| {
            let r = 2.0 * mu * t.powf(e);
            let jac_times_weight = 2.0 * mu * e * t.powf(e - 1.0) * r.powf(-s);
            let c_len = gl.integrate(|_| 1.0, -(mu - 0.5 * r), mu - 0.5 * r);
            jac_times_weight * c_len
        },
        0.0,
        1.0,
    )
}

/// The Cauchy-determinant constant `C` for exponent `s = αp`.
///
/// For every permutation pair `(π, π')` the cell integral
/// `∫_{D_μ^{2n}} Π|x^v_i − y^v_{π(i)}|^{−s} Π|x^u_j − y^u_{π'(j)}|^{−s}`
/// is a product of `2n` pair integrals, each carrying the factor ½ of
/// `dt ds = ½ du dv`. The constant is the largest `(cell)^{1/2n}` over all
/// pairs at `n ∈ {1, 2}`.
pub fn cauchy_constant(mu: f64, s: f64) -> Result<CauchyConstant> {
    if !(0.0..1.0).contains(&s) {
        return Err(Error::Domain(format!("exponent αp = {s} must lie in [0, 1)")));
    }
    let pair = pair_cell_integral(mu, s, 64);
    let mut best: f64 = 0.0;
    let mut cells = Vec::new();
    for n in 1..=2usize {
        let perms = permutations(n);
        for pi in &perms {
            for pj in &perms {
                // D_μ is a product in (u, v); since π and π' are bijections the
                // cell splits into one pair integral per matched (x_i, y_π(i))
                // in v and per (x_j, y_π'(j)) in u
                let mut cell = 1.0;
                for (_vi, _ui) in pi.iter().zip(pj) {
                    cell *= 0.5 * pair * 0.5 * pair;
                }
                cells.push(cell);
                best = best.max(cell.powf(1.0 / (2 * n) as f64));
            }
        }
    }
    let closed = (2.0 * mu).powf(2.0 - s) / ((1.0 - s) * (2.0 - s));
    Ok(CauchyConstant { value: best, closed_form: closed, cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyConstant {
    pub value: f64,
    pub closed_form: f64,
    pub cells: Vec<f64>,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut v = rest.clone();
            v.insert(pos, n - 1);
            out.push(v);
        }
    }
    out
}

/// Inputs of the `S_n` majorant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MajorantInputs {
    pub mu: f64,
    pub alpha: f64,
    pub p: f64,
    pub lambda: f64,
    pub hbar: f64,
    pub a: f64,
    pub k_const: f64,
    pub g_q_norm: f64,
    pub c_const: f64,
}

/// `2(2μ)^{nα}/(n!)^{1−1/p} (2λe^{a²K/2}/ħ)^n ‖g‖_q^n C^{n/p}`.
pub fn convergence_majorant(n: usize, m: &MajorantInputs) -> f64 {
    let nf = n as f64;
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    let base = 2.0 * m.lambda * (0.5 * m.a * m.a * m.k_const).exp() / m.hbar;
    2.0 * (2.0 * m.mu).powf(nf * m.alpha) / fact.powf(1.0 - 1.0 / m.p)
        * base.powf(nf)
        * m.g_q_norm.powf(nf)
        * m.c_const.powf(nf / m.p)
}

/// Majorant for `g` supported on `V_g` unit squares: the proof's version
/// with `μ = 1`, `λ → λV_g` and `‖g₀‖_q = 1` for the unit-square cutoff.
pub fn convergence_v_majorant(n: usize, m: &MajorantInputs, v_g: usize) -> f64 {
    let scaled = MajorantInputs { mu: 1.0, lambda: m.lambda * v_g as f64, g_q_norm: 1.0, ..*m };
    convergence_majorant(n, &scaled)
}

/// First `n` from which the majorant terms decrease.
pub fn majorant_ratio_threshold(m: &MajorantInputs) -> Option<usize> {
    if m.p <= 1.0 {
        return None;
    }
    (0..10_000).find(|&n| convergence_majorant(n + 2, m) < convergence_majorant(n + 1, m)).map(|n| n + 1)
}

/// Estimates of every `Z^{2q}_{2n}` for `q = −n..=n` from one sample set,
/// plus `ev₀(V^{2n})`, with shared positions.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderSample {
    pub k: usize,
    /// Observables: `[ev₀(V^k), Z^{2q}_{2n} for q = −n..=n]` (the latter only for even `k`).
    pub moments: Moments,
}

/// Partition-function observables at `k` charges. For a kernel list the
/// observables are laid out kernel-major.
fn order_sample(
    p: &ThermalParams,
    kernels: &[&CovarianceModel],
    g: &CutoffFunction,
    k: usize,
    cfg: &RunConfig,
    label: &str,
) -> Moments {
    let a2h = p.coupling_a * p.coupling_a * p.hbar;
    let per = if k % 2 == 0 { 2 + k } else { 1 };
    let dim = per * kernels.len();
    let vol = g.bounding_measure().powi(k as i32);
    sample_moments(cfg.seed, stream_id(label) ^ (k as u64).wrapping_mul(0x9e37), cfg.samples, dim, |rng, out| {
        let (_, gw, mats, _) = draw_points(g, kernels, k, rng);
        for (ki, m) in mats.iter().enumerate() {
            let base = ki * per;
            out[base] = vol * gw * cosine_sign_average(m, k, a2h);
            if k % 2 == 0 {
                let n = k / 2;
                for (qi, plus) in (0..=k).enumerate() {
                    // q = plus − n
                    let _ = n;
                    out[base + 1 + qi] = vol * gw * fixed_assignment_weight(m, k, plus, a2h);
                }
            }
        }
    })
}

/// `Z^{2q}_{2n}(w, g)` with `n + q` positive and `n − q` negative charges.
pub fn canonical_partition(
    p: &ThermalParams,
    w: &CovarianceModel,
    g: &CutoffFunction,
    n: usize,
    q: i64,
    cfg: &RunConfig,
) -> Result<Estimate> {
    if q.unsigned_abs() as usize > n {
        return Err(Error::Domain(format!("|q| = {} exceeds n = {n}", q.abs())));
    }
    if n == 0 {
        return Ok(Estimate::exact(1.0));
    }
    let m = order_sample(p, &[w], g, 2 * n, cfg, "canonical");
    let idx = 1 + (n as i64 + q) as usize;
    Ok(Estimate::new(m.mean[idx], m.std_error(idx)))
}

/// Truncated grand-canonical series with per-order samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrandPartitions {
    pub xi: Estimate,
    pub xi_cosh: Estimate,
    pub z_grand: Estimate,
    /// `Ξ_cosh` at doubled cutoff `2g`, from the same samples.
    pub xi_cosh_2g: Estimate,
    /// Paired differences, each with its own standard error.
    pub z_minus_xi_cosh: Estimate,
    pub xi_cosh_2g_minus_z: Estimate,
    pub two_xi_cosh_minus_xi: Estimate,
    pub last_term: f64,
}

struct SeriesAccumulator {
    value: f64,
    var: f64,
}

impl SeriesAccumulator {
    fn new() -> Self {
        Self { value: 0.0, var: 0.0 }
    }
    fn add(&mut self, m: &Moments, coeffs: &[f64]) {
        let (v, e) = m.linear(coeffs);
        self.value += v;
        self.var += e * e;
    }
    fn add_exact(&mut self, v: f64) {
        self.value += v;
    }
    fn finish(&self) -> Estimate {
        Estimate::new(self.value, self.var.sqrt())
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `Ξ = Σ_{k ≤ 2n_max} z^k/k! ev₀(V^k)`, `Ξ_cosh` its even part and
/// `Z = Σ_{n ≤ n_max} z^{2n}/(n!)² Z_n`.
pub fn grand_partitions(
    p: &ThermalParams,
    w: &CovarianceModel,
    g: &CutoffFunction,
    z: f64,
    n_max: usize,
    cfg: &RunConfig,
) -> Result<GrandPartitions> {
    if 2 * n_max > MAX_EXACT_SIGNS {
        return Err(Error::Capacity(format!("n_max = {n_max} too large")));
    }
    let mut xi = SeriesAccumulator::new();
    let mut xc = SeriesAccumulator::new();
    let mut zg = SeriesAccumulator::new();
    let mut x2 = SeriesAccumulator::new();
    let mut d1 = SeriesAccumulator::new();
    let mut d2 = SeriesAccumulator::new();
    let mut d3 = SeriesAccumulator::new();
    for acc in [&mut xi, &mut xc, &mut zg, &mut x2] {
        acc.add_exact(1.0);
    }
    d3.add_exact(1.0);
    let mut last_term: f64 = 0.0;
    if z != 0.0 {
        for k in 1..=2 * n_max {
            let m = order_sample(p, &[w], g, k, cfg, "grand");
            let ck = z.powi(k as i32) / factorial(k);
            let mut c = vec![0.0; m.dim()];
            c[0] = ck;
            xi.add(&m, &c);
            last_term = last_term.max((ck * m.mean[0]).abs());
            if k % 2 == 1 {
                c[0] = -ck;
                d3.add(&m, &c);
                continue;
            }
            let n = k / 2;
            xc.add(&m, &c);
            c[0] = ck * 2f64.powi(k as i32);
            x2.add(&m, &c);
            c[0] = ck;
            d3.add(&m, &c);
            let mut cz = vec![0.0; m.dim()];
            cz[1 + n] = z.powi(k as i32) / factorial(n).powi(2);
            zg.add(&m, &cz);
            // Z − Ξ_cosh
            let mut c1 = cz.clone();
            c1[0] = -ck;
            d1.add(&m, &c1);
            // Ξ_cosh(2g) − Z
            let mut c2: Vec<f64> = cz.iter().map(|v| -v).collect();
            c2[0] = ck * 2f64.powi(k as i32);
            d2.add(&m, &c2);
        }
    }
    Ok(GrandPartitions {
        xi: xi.finish(),
        xi_cosh: xc.finish(),
        z_grand: zg.finish(),
        xi_cosh_2g: x2.finish(),
        z_minus_xi_cosh: d1.finish(),
        xi_cosh_2g_minus_z: d2.finish(),
        two_xi_cosh_minus_xi: {
            // 2Ξ_cosh − Ξ = 1 + Σ_even − Σ_odd
            d3.finish()
        },
        last_term,
    })
}

/// Outcome of a paired inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub lhs: Estimate,
    pub rhs: Estimate,
    /// `rhs − lhs` with its own standard error (paired samples).
    pub gap: Estimate,
    pub holds: bool,
}

impl InequalityCheck {
    pub fn new(name: impl Into<String>, lhs: Estimate, rhs: Estimate, gap: Estimate) -> Self {
        let holds = gap.value >= -3.0 * gap.std_error - 1e-12 * (lhs.value.abs() + rhs.value.abs());
        Self { name: name.into(), lhs, rhs, gap, holds }
    }
}

/// `Z^{2q}_{2n} ≤ Z_n` for `q = 1..=n`, `n ≤ n_max`, on common samples.
pub fn charge_imbalance_checks(
    p: &ThermalParams,
    w: &CovarianceModel,
    g: &CutoffFunction,
    n_max: usize,
    cfg: &RunConfig,
) -> Vec<InequalityCheck> {
    let mut out = Vec::new();
    for n in 1..=n_max {
        let m = order_sample(p, &[w], g, 2 * n, cfg, "imbalance");
        let neutral = 1 + n;
        for q in 1..=n {
            let idx = 1 + n + q;
            let mut c = vec![0.0; m.dim()];
            c[neutral] = 1.0;
            c[idx] = -1.0;
            let (gv, ge) = m.linear(&c);
            out.push(InequalityCheck::new(
                format!("Z^{}_{} <= Z_{}", 2 * q, 2 * n, n),
                Estimate::new(m.mean[idx], m.std_error(idx)),
                Estimate::new(m.mean[neutral], m.std_error(neutral)),
                Estimate::new(gv, ge),
            ));
            let pos = m.mean[idx] >= -3.0 * m.std_error(idx);
            if !pos {
                out.push(InequalityCheck::new(
                    format!("Z^{}_{} >= 0", 2 * q, 2 * n),
                    Estimate::exact(0.0),
                    Estimate::new(m.mean[idx], m.std_error(idx)),
                    Estimate::new(m.mean[idx], m.std_error(idx)),
                ));
            }
        }
    }
    out
}

/// Sandwich `Ξ_cosh(g) ≤ Z(g) ≤ Ξ_cosh(2g)` and `Ξ ≤ 2Ξ_cosh`.
pub fn partition_sandwich_checks(gp: &GrandPartitions) -> Vec<InequalityCheck> {
    vec![
        InequalityCheck::new("Xi_cosh(g) <= Z(g)", gp.xi_cosh, gp.z_grand, gp.z_minus_xi_cosh),
        InequalityCheck::new("Z(g) <= Xi_cosh(2g)", gp.z_grand, gp.xi_cosh_2g, gp.xi_cosh_2g_minus_z),
        InequalityCheck::new(
            "Xi <= 2 Xi_cosh",
            gp.xi,
            Estimate::new(2.0 * gp.xi_cosh.value, 2.0 * gp.xi_cosh.std_error),
            gp.two_xi_cosh_minus_xi,
        ),
    ]
}

/// Gram matrix of `w_big − w_small` on a point cloud. Diagonal entries
/// split a `1e-7` spatial offset symmetrically about the point, so that
/// matching singularities cancel and image terms stay at `O(h²)`.
pub fn difference_gram(w_big: &CovarianceModel, w_small: &CovarianceModel, pts: &[[f64; 2]]) -> Result<DMatrix<f64>> {
    let n = pts.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let (a, b) = if i == j {
                ([pts[i][0], pts[i][1] - 5e-8], [pts[i][0], pts[i][1] + 5e-8])
            } else {
                (pts[i], pts[j])
            };
            let v = w_big.eval(a, b)? - w_small.eval(a, b)?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

fn cloud(g: &CutoffFunction, n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = crate::mc::chunk_rng(seed, stream_id("cloud"), 0);
    (0..n).map(|_| g.sample(&mut rng).0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningReport {
    pub min_eigenvalue: f64,
    pub total: InequalityCheck,
    pub per_order: Vec<InequalityCheck>,
}

/// `ev₀(exp_{w_big}(V^g)) ≥ ev₀(exp_{w_small}(V^g))` truncated at `k ≤ order`.
pub fn conditioning_check(
    p: &ThermalParams,
    w_big: &CovarianceModel,
    w_small: &CovarianceModel,
    g: &CutoffFunction,
    order: usize,
    cfg: &RunConfig,
) -> Result<ConditioningReport> {
    let pts = cloud(g, 48, cfg.seed);
    let gram = difference_gram(w_big, w_small, &pts)?;
    let scale = gram.diagonal().abs().max().max(1e-300);
    let min_ev = gram.symmetric_eigenvalues().min();
    if min_ev < -1e-8 * scale {
        return Err(Error::Precondition(format!("w_big − w_small has eigenvalue {min_ev:e}")));
    }
    let mut lhs = SeriesAccumulator::new();
    let mut rhs = SeriesAccumulator::new();
    let mut gap = SeriesAccumulator::new();
    for acc in [&mut lhs, &mut rhs] {
        acc.add_exact(1.0);
    }
    let mut per_order = Vec::new();
    for k in 1..=order {
        let m = order_sample(p, &[w_small, w_big], g, k, cfg, "conditioning");
        let per = m.dim() / 2;
        let ck = 1.0 / factorial(k);
        let mut cs = vec![0.0; m.dim()];
        cs[0] = ck;
        let mut cb = vec![0.0; m.dim()];
        cb[per] = ck;
        let mut cd = vec![0.0; m.dim()];
        cd[per] = ck;
        cd[0] = -ck;
        lhs.add(&m, &cs);
        rhs.add(&m, &cb);
        gap.add(&m, &cd);
        let (a, ae) = m.linear(&cs);
        let (b, be) = m.linear(&cb);
        let (d, de) = m.linear(&cd);
        per_order.push(InequalityCheck::new(
            format!("order {k}"),
            Estimate::new(a, ae),
            Estimate::new(b, be),
            Estimate::new(d, de),
        ));
    }
    Ok(ConditioningReport {
        min_eigenvalue: min_ev,
        total: InequalityCheck::new("conditioning", lhs.finish(), rhs.finish(), gap.finish()),
        per_order,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseConditioningReport {
    pub min_eigenvalue: f64,
    pub max_diagonal: f64,
    pub z_level: Vec<InequalityCheck>,
    pub xi_level: InequalityCheck,
}

/// `Z_n(w₁) ≤ e^{n a²ħK} Z_n(w₀)` and `Ξ(w₁, g) ≤ 2Ξ(w₀, 2e^{a²ħK/2} g)`.
pub fn inverse_conditioning_check(
    p: &ThermalParams,
    w1: &CovarianceModel,
    w0: &CovarianceModel,
    g: &CutoffFunction,
    k_const: f64,
    n_max: usize,
    cfg: &RunConfig,
) -> Result<InverseConditioningReport> {
    let pts = cloud(g, 48, cfg.seed ^ 1);
    let gram = difference_gram(w1, w0, &pts)?;
    let scale = gram.diagonal().abs().max().max(1e-300);
    let min_ev = gram.symmetric_eigenvalues().min();
    if min_ev < -1e-8 * scale {
        return Err(Error::Precondition(format!("w₁ − w₀ has eigenvalue {min_ev:e}")));
    }
    let max_diag = gram.diagonal().max();
    if max_diag > k_const * (1.0 + 1e-9) {
        return Err(Error::Precondition(format!("diagonal {max_diag} exceeds K = {k_const}")));
    }
    let a2h = p.coupling_a * p.coupling_a * p.hbar;
    let mut z_level = Vec::new();
    let mut lhs = SeriesAccumulator::new();
    let mut rhs = SeriesAccumulator::new();
    let mut gap = SeriesAccumulator::new();
    lhs.add_exact(1.0);
    rhs.add_exact(2.0);
    gap.add_exact(1.0);
    let zfac = 2.0 * (0.5 * a2h * k_const).exp();
    for k in 1..=2 * n_max {
        let m = order_sample(p, &[w1, w0], g, k, cfg, "inverse");
        let per = m.dim() / 2;
        let ck = 1.0 / factorial(k);
        let mut c1 = vec![0.0; m.dim()];
        c1[0] = ck;
        let mut c0 = vec![0.0; m.dim()];
        c0[per] = 2.0 * ck * zfac.powi(k as i32);
        let cd: Vec<f64> = c1.iter().zip(&c0).map(|(a, b)| b - a).collect();
        lhs.add(&m, &c1);
        rhs.add(&m, &c0);
        gap.add(&m, &cd);
        if k % 2 == 0 {
            let n = k / 2;
            let f = (n as f64 * a2h * k_const).exp();
            let mut a = vec![0.0; m.dim()];
            a[1 + n] = 1.0;
            let mut b = vec![0.0; m.dim()];
            b[per + 1 + n] = f;
            let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| y - x).collect();
            let (av, ae) = m.linear(&a);
            let (bv, be) = m.linear(&b);
            let (dv, de) = m.linear(&d);
            z_level.push(InequalityCheck::new(
                format!("Z_{n}(w1) <= e^(n a^2 hbar K) Z_{n}(w0)"),
                Estimate::new(av, ae),
                Estimate::new(bv, be),
                Estimate::new(dv, de),
            ));
        }
    }
    Ok(InverseConditioningReport {
        min_eigenvalue: min_ev,
        max_diagonal: max_diag,
        z_level,
        xi_level: InequalityCheck::new("Xi(w1,g) <= 2 Xi(w0, 2e^(a^2 hbar K/2) g)", lhs.finish(), rhs.finish(), gap.finish()),
    })
}

/// `Z₁(w, g) = ∫∫ exp(+a²ħ w(x, y)) g(x) g(y)` for `g` the indicator of an
/// equal-time interval, by quadrature in the separation `r` with
/// `r = L t^{1/(1−γ)}` removing the `r^{−γ}` singularity, `γ` the local
/// exponent of the kernel (`a²ħ/2π` for the logarithmic kernels).
pub fn z1_interval_quadrature(p: &ThermalParams, w: &CovarianceModel, len: f64) -> Result<f64> {
    let a2h = p.coupling_a * p.coupling_a * p.hbar;
    let gamma = if w.is_regular() { 0.0 } else { a2h / (2.0 * PI) };
    let e = 1.0 / (1.0 - gamma);
    let gl = GaussLegendre::new(96);
    let mut err = None;
    let mut total = 0.0;
    let panels = 8;
    for k in 0..panels {
        let (lo, hi) = (k as f64 / panels as f64, (k + 1) as f64 / panels as f64);
        total += gl.integrate(
            |t| {
                let r = len * t.powf(e);
                let jac = len * e * t.powf(e - 1.0);
                match w.eval([0.0, 0.0], [0.0, r]) {
                    Ok(v) => 2.0 * (len - r) * (a2h * v).exp() * jac,
                    Err(x) => {
                        err = Some(x);
                        0.0
                    }
                }
            },
            lo,
            hi,
        );
    }
    match err {
        Some(e) => Err(e),
        None => Ok(total),
    }
}

/// Gaussian functional used by the Jensen check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GaussianFunctional {
    /// `Σ c_k φ_k`.
    Linear(Vec<f64>),
    /// `Σ c_k cos(a φ_k)`: a discretised `V^g`.
    CosineSum { coeffs: Vec<f64>, a: f64 },
}

impl GaussianFunctional {
    fn eval(&self, phi: &[f64]) -> f64 {
        match self {
            GaussianFunctional::Linear(c) => c.iter().zip(phi).map(|(a, b)| a * b).sum(),
            GaussianFunctional::CosineSum { coeffs, a } => coeffs.iter().zip(phi).map(|(c, f)| c * (a * f).cos()).sum(),
        }
    }
}

/// Convex test functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConvexFunction {
    Affine { slope: f64, offset: f64 },
    Square,
    /// `Σ_{l ≤ 2n} x^l/l!`, convex for every `n`.
    TruncatedExp(usize),
}

impl ConvexFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ConvexFunction::Affine { slope, offset } => slope * x + offset,
            ConvexFunction::Square => x * x,
            ConvexFunction::TruncatedExp(n) => {
                let mut t = 1.0;
                let mut s = 1.0;
                for l in 1..=2 * n {
                    t *= x / l as f64;
                    s += t;
                }
                s
            }
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match self {
            ConvexFunction::Affine { slope, .. } => *slope,
            ConvexFunction::Square => 2.0 * x,
            ConvexFunction::TruncatedExp(n) => {
                let mut t = 1.0;
                let mut s = 1.0;
                for l in 1..(2 * n) {
                    t *= x / l as f64;
                    s += t;
                }
                s
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JensenReport {
    pub mean_f: Estimate,
    pub f_mean: f64,
    pub gap: Estimate,
    pub holds: bool,
}

/// `E[f(G(φ))] ≥ f(E[G(φ)])` for `φ ~ N(0, ħ w)` on a finite grid.
pub fn jensen_check(
    w: &DMatrix<f64>,
    hbar: f64,
    functional: &GaussianFunctional,
    f: ConvexFunction,
    cfg: &RunConfig,
) -> Result<JensenReport> {
    let chol = nalgebra::Cholesky::new(w.clone() * hbar)
        .ok_or_else(|| Error::Precondition("covariance matrix is not positive definite".into()))?;
    let l = chol.l();
    let n = w.nrows();
    let mom = sample_moments(cfg.seed, stream_id("jensen"), cfg.samples, 2, |rng, out| {
        let z = nalgebra::DVector::from_fn(n, |_, _| rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng));
        let phi = &l * z;
        let gv = functional.eval(phi.as_slice());
        out[0] = f.eval(gv);
        out[1] = gv;
    });
    let mean_g = mom.mean[1];
    let f_mean = f.eval(mean_g);
    // delta method for mean f(G) − f(mean G)
    let (gap, se) = mom.linear(&[1.0, -f.derivative(mean_g)]);
    let gap = gap - f_mean + f.derivative(mean_g) * mean_g;
    let gap_est = Estimate::new(gap, se);
    let holds = gap >= -3.0 * se - 1e-12 * f_mean.abs();
    Ok(JensenReport { mean_f: Estimate::new(mom.mean[0], mom.std_error(0)), f_mean, gap: gap_est, holds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub checks: Vec<InequalityCheck>,
}

/// `|ev₀(Π_i A_i)| ≤ ev₀(A^n)` with `A_i = V^{g_{Q + shift_i}}` translates of
/// `A = V^{g_Q}` on the unit square `Q`, plus the Cauchy–Schwarz case
/// `|ev₀(V_a^{g_Q})|² ≤ ev₀(V_{−a}^{g_Q} · V_a^{g_Q})`.
pub fn holder_translation_check(
    p: &ThermalParams,
    w: &CovarianceModel,
    shifts: &[[f64; 2]],
    cfg: &RunConfig,
) -> Result<HolderReport> {
    if !w.is_translation_invariant() {
        return Err(Error::Precondition("Hölder translation check needs a translation-invariant kernel".into()));
    }
    let n = shifts.len();
    if n == 0 || n > MAX_EXACT_SIGNS {
        return Err(Error::Domain("between 1 and 12 translates".into()));
    }
    let a2h = p.coupling_a * p.coupling_a * p.hbar;
    let unit = CutoffFunction::Rect { t: (0.0, 1.0), s: (0.0, 1.0) };
    let mom = sample_moments(cfg.seed, stream_id("holder") ^ n as u64, cfg.samples, 3, |rng, out| {
        loop {
            let base: Vec<[f64; 2]> = (0..n).map(|_| unit.sample(rng).0).collect();
            let moved: Vec<[f64; 2]> = base.iter().zip(shifts).map(|(x, s)| [x[0] + s[0], x[1] + s[1]]).collect();
            let (Ok(mb), Ok(mm)) = (pair_matrix(w, &base), pair_matrix(w, &moved)) else { continue };
            out[0] = cosine_sign_average(&mm, n, a2h);
            out[1] = cosine_sign_average(&mb, n, a2h);
            // Cauchy–Schwarz: opposite pair on the first two base points
            out[2] = if n >= 2 { (a2h * mb[1]).exp() } else { 1.0 };
            break;
        }
    });
    let mut checks = Vec::new();
    let (gv, ge) = mom.linear(&[-1.0, 1.0, 0.0]);
    checks.push(InequalityCheck::new(
        format!("|ev0(prod of {n} translates)| <= ev0(A^{n})"),
        Estimate::new(mom.mean[0], mom.std_error(0)),
        Estimate::new(mom.mean[1], mom.std_error(1)),
        Estimate::new(gv, ge),
    ));
    if n >= 2 {
        // ev₀(V_a^{g_Q}) = |Q| = 1 exactly
        let rhs = Estimate::new(mom.mean[2], mom.std_error(2));
        checks.push(InequalityCheck::new(
            "|ev0(A)|^2 <= ev0(A* A)",
            Estimate::exact(1.0),
            rhs,
            Estimate::new(mom.mean[2] - 1.0, mom.std_error(2)),
        ));
    }
    Ok(HolderReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_basics() {
        let p = ThermalParams::new(1.0, 1.0);
        let w = CovarianceModel::MassiveHadamard(p);
        let one = ChargeConfiguration::new(vec![[0.0, 0.0]], vec![1.0], 1.0).unwrap();
        assert_eq!(gas_weight(&w, &one, 1.0).unwrap(), 1.0);
        let like = ChargeConfiguration::new(vec![[0.0, 0.0], [0.0, 1.0]], vec![1.0, 1.0], 1.0).unwrap();
        assert!(gas_weight(&w, &like, 1.0).unwrap() < 1.0);
        let flip = ChargeConfiguration::new(vec![[0.0, 0.0], [0.0, 1.0]], vec![-1.0, -1.0], 1.0).unwrap();
        assert_eq!(gas_weight(&w, &like, 1.0).unwrap(), gas_weight(&w, &flip, 1.0).unwrap());
    }

    #[test]
    fn cauchy_identity_small_cases() {
        let xs = [[0.3, 0.1], [1.2, -0.4], [0.1, 0.9]];
        let ys = [[0.7, 0.2], [-0.5, 0.35], [0.2, -1.1]];
        for n in 1..=3 {
            let (l, r) = cauchy_identity_check(&xs[..n], &ys[..n]).unwrap();
            assert!((l - r).abs() < 1e-10 * l, "n = {n}: {l} vs {r}");
        }
        let (l1, _) = cauchy_identity_check(&xs[..2], &ys[..2]).unwrap();
        let (l2, _) = cauchy_identity_check(&xs[..2], &[ys[1], ys[0]]).unwrap();
        assert!((l1 - l2).abs() < 1e-12 * l1);
    }

    #[test]
    fn cauchy_constant_quadrature_matches_closed_form() {
        for &s in &[0.0, 0.16, 0.5, 0.8] {
            let c = cauchy_constant(1.0, s).unwrap();
            assert!((c.value - c.closed_form).abs() < 1e-8 * c.closed_form, "s = {s}");
        }
    }

    #[test]
    fn smatrix_first_order_without_field() {
        let p = ThermalParams::new(1.0, 1.0);
        let g = CutoffFunction::Diamond { mu: 1.0 };
        let r = smatrix_coefficient_mc(&p, 0.5, &g, 1, &FieldConfiguration::Zero, &RunConfig::default().with_samples(100))
            .unwrap();
        assert!((r.value.norm() - 0.5 * 2.0).abs() < 1e-12);
        let r0 = smatrix_coefficient_mc(&p, 0.5, &g, 0, &FieldConfiguration::Zero, &RunConfig::default()).unwrap();
        assert_eq!(r0.value.re, 1.0);
    }

    #[test]
    fn jensen_variance_identity() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let f = GaussianFunctional::Linear(vec![1.0, 1.0]);
        let r = jensen_check(&w, 1.0, &f, ConvexFunction::Square, &RunConfig::default().with_samples(50_000)).unwrap();
        // gap = Var(G) = 1 + 2 + 0.6
        assert!((r.gap.value - 3.6).abs() < 4.0 * r.gap.std_error + 0.05);
        let lin = jensen_check(&w, 1.0, &f, ConvexFunction::Affine { slope: 2.0, offset: 1.0 }, &RunConfig::default())
            .unwrap();
        assert!(lin.gap.value.abs() < 1e-12);
    }
}
