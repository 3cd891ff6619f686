//! Generating functional at truncated order and the (Y, Γ) cluster expansion.
//!
//! Orders are exponential-generating. The order-`n` term is
//!
//! `(λ/ħ)ⁿ/n! ∫_{[0,β]ⁿ} dU ∫_{Λⁿ} dX 2⁻ⁿ Σ_signs Π_i src_i · exp(−Σ_{i<j} a_i a_j ħ C_ij)`,
//!
//! where the cube over `n!` is the ordered simplex, and `src_i` couples charge
//! `i` to the observable through `C` and `∂_u C`. The free Gaussian
//! expectation of the observable is divided out, so the order-zero term of
//! `F` is 1, like that of `Z`.
//!
//! The cluster expansion telescopes the interior bonds of the window. For a
//! term `(Y, Γ)` the kernel is the interpolated covariance with `Γ` active,
//! the remaining bonds of `Y` frozen to Dirichlet, and its exponent `G(σ)` is
//! multilinear in `σ`. `∂^Γ e^G` is assembled from the Möbius coefficients of
//! the corner values and integrated over `[0,1]^Γ` by tensor Gauss–Legendre.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use num_complex::Complex64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dirichlet::{corner_bonds, BondSet, InterpolationVector};
use crate::error::{Error, Result};
use crate::gas::CutoffFunction;
use crate::kernel::CovarianceModel;
use crate::mc::{sample_moments, stream_id, ComplexEstimate, Estimate, Moments, Rng};
use crate::params::{EuclideanPoint, RunConfig, ThermalParams};
use crate::quad::GaussLegendre;

/// Highest perturbative order; signs are summed exactly up to here.
pub const MAX_ORDER: usize = 6;
/// Largest active bond set of a cluster term.
pub const MAX_GAMMA: usize = 12;
/// Cap on the number of enumerated cluster terms.
pub const MAX_TERMS: usize = 4096;
/// Default stopping tolerance of the σ-quadrature.
pub const SIGMA_TOL: f64 = 1e-8;
const SIGMA_MAX_DEGREE: usize = 64;
const SIGMA_NODE_BUDGET: usize = 1 << 22;

/// Integer window `Λ = [lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Region {
    pub lo: i64,
    pub hi: i64,
}

impl Region {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if lo >= hi {
            return Err(Error::Domain(format!("region [{lo}, {hi}] is empty")));
        }
        Ok(Self { lo, hi })
    }

    pub fn len(&self) -> i64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    /// Integers strictly inside.
    pub fn interior_bonds(&self) -> BondSet {
        BondSet::from_unsorted(((self.lo + 1)..self.hi).collect())
    }

    pub fn contains(&self, o: &Region) -> bool {
        self.lo <= o.lo && o.hi <= self.hi
    }

    pub fn cutoff(&self) -> CutoffFunction {
        CutoffFunction::Interval { lo: self.lo as f64, hi: self.hi as f64 }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Finite union of disjoint intervals, sampled uniformly.
#[derive(Debug, Clone, PartialEq)]
struct Domain {
    segs: Vec<(f64, f64)>,
}

impl Domain {
    fn new(segs: Vec<(f64, f64)>) -> Self {
        Self { segs: segs.into_iter().filter(|(a, b)| b > a).collect() }
    }

    fn measure(&self) -> f64 {
        self.segs.iter().map(|(a, b)| b - a).sum()
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        let mut t = rng.random::<f64>() * self.measure();
        for (a, b) in &self.segs {
            if t < b - a {
                return a + t;
            }
            t -= b - a;
        }
        let (_, b) = self.segs[self.segs.len() - 1];
        b
    }
}

/// Observable `A(ψ, ψ′)`: samples of `ψ` and `ψ′` on a uniform grid of `Σ₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSource {
    pub x0: f64,
    pub dx: f64,
    pub psi: Vec<f64>,
    pub psi_prime: Vec<f64>,
}

impl TestSource {
    pub fn new(x0: f64, dx: f64, psi: Vec<f64>, psi_prime: Vec<f64>) -> Result<Self> {
        if psi.len() != psi_prime.len() {
            return Err(Error::Domain("ψ and ψ′ need the same grid".into()));
        }
        if !(dx > 0.0) || !x0.is_finite() {
            return Err(Error::Domain("grid spacing must be positive".into()));
        }
        if psi.iter().chain(&psi_prime).any(|v| !v.is_finite()) {
            return Err(Error::Domain("source samples must be finite".into()));
        }
        Ok(Self { x0, dx, psi, psi_prime })
    }

    /// `A = 1`.
    pub fn zero() -> Self {
        Self { x0: 0.0, dx: 1.0, psi: Vec::new(), psi_prime: Vec::new() }
    }

    /// Tent profiles on `[lo, hi]` peaking at the midpoint.
    pub fn tent(lo: f64, hi: f64, nodes: usize, amp: f64, amp_prime: f64) -> Result<Self> {
        if nodes < 3 || hi <= lo {
            return Err(Error::Domain("a tent needs at least 3 nodes on a nonempty interval".into()));
        }
        let dx = (hi - lo) / (nodes - 1) as f64;
        let shape: Vec<f64> = (0..nodes).map(|i| 1.0 - (2.0 * i as f64 / (nodes - 1) as f64 - 1.0).abs()).collect();
        Self::new(lo, dx, shape.iter().map(|v| amp * v).collect(), shape.iter().map(|v| amp_prime * v).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.psi.iter().chain(&self.psi_prime).all(|v| *v == 0.0)
    }

    /// Hull of the nonzero samples.
    pub fn support(&self) -> Option<(f64, f64)> {
        let nz: Vec<usize> =
            (0..self.psi.len()).filter(|i| self.psi[*i] != 0.0 || self.psi_prime[*i] != 0.0).collect();
        let (first, last) = (*nz.first()?, *nz.last()?);
        Some((self.x0 + first as f64 * self.dx, self.x0 + last as f64 * self.dx))
    }

    pub fn with_psi_negated(&self) -> Self {
        Self { psi: self.psi.iter().map(|v| -v).collect(), ..self.clone() }
    }

    pub fn with_psi_prime_negated(&self) -> Self {
        Self { psi_prime: self.psi_prime.iter().map(|v| -v).collect(), ..self.clone() }
    }

    /// Trapezoid nodes `(x, w ψ, w ψ′)`, zero rows dropped.
    fn nodes(&self) -> Vec<(f64, f64, f64)> {
        let n = self.psi.len();
        (0..n)
            .filter_map(|i| {
                let w = if i == 0 || i + 1 == n { 0.5 * self.dx } else { self.dx };
                let (a, b) = (self.psi[i], self.psi_prime[i]);
                (a != 0.0 || b != 0.0).then_some((self.x0 + i as f64 * self.dx, w * a, w * b))
            })
            .collect()
    }
}

/// Ordered times `0 ≤ u₁ ≤ … ≤ u_n ≤ β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexSample {
    pub u: Vec<f64>,
}

impl SimplexSample {
    pub fn draw(rng: &mut Rng, beta: f64, n: usize) -> Self {
        let mut u: Vec<f64> = (0..n).map(|_| beta * rng.random::<f64>()).collect();
        u.sort_by(f64::total_cmp);
        Self { u }
    }

    /// `|β𝒮_n| = βⁿ/n!`.
    pub fn volume(beta: f64, n: usize) -> f64 {
        beta.powi(n as i32) / factorial(n)
    }

    pub fn is_valid(&self, beta: f64) -> bool {
        self.u.windows(2).all(|w| w[0] <= w[1]) && self.u.iter().all(|u| (0.0..=beta).contains(u))
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `(Σ wψ C, Σ wψ′ ∂_uC)` for a charge at `(u, x)` and the source at time 0.
fn source_exponents(w: &CovarianceModel, nodes: &[(f64, f64, f64)], u: f64, x: f64) -> Result<(f64, f64)> {
    let (mut s, mut ph) = (0.0, 0.0);
    for &(x0, wp, wq) in nodes {
        let (c, dc) = w.eval_du([u, x], [0.0, x0])?;
        s += wp * c;
        ph += wq * dc;
    }
    Ok((s, ph))
}

/// `exp(−aħ∫ψ C(u, x₀ − x)) · exp(i aħ∫ψ′ ∂_uC(u, x₀ − x))` for one charge.
pub fn source_coupling(p: &ThermalParams, src: &TestSource, pt: EuclideanPoint, a: f64) -> Result<Complex64> {
    source_coupling_with(p, &CovarianceModel::Thermal(*p), src, pt, a)
}

/// [`source_coupling`] for an arbitrary kernel.
pub fn source_coupling_with(
    p: &ThermalParams,
    w: &CovarianceModel,
    src: &TestSource,
    pt: EuclideanPoint,
    a: f64,
) -> Result<Complex64> {
    if !(pt.u > 0.0 && pt.u < p.beta) {
        return Err(Error::Domain(format!("charge time {} outside (0, β)", pt.u)));
    }
    let (s, ph) = source_exponents(w, &src.nodes(), pt.u, pt.x)?;
    Ok(Complex64::new(-a * p.hbar * s, a * p.hbar * ph).exp())
}

/// Kernel data of one configuration under one kernel.
struct KernelData {
    n: usize,
    pair: Vec<f64>,
    s: Vec<f64>,
    ph: Vec<f64>,
}

impl KernelData {
    fn new(w: &CovarianceModel, nodes: &[(f64, f64, f64)], u: &[f64], x: &[f64]) -> Result<Self> {
        let n = u.len();
        let mut pair = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = w.eval([u[i], x[i]], [u[j], x[j]])?;
                pair[i * n + j] = v;
                pair[j * n + i] = v;
            }
        }
        let mut s = vec![0.0; n];
        let mut ph = vec![0.0; n];
        if !nodes.is_empty() {
            for i in 0..n {
                (s[i], ph[i]) = source_exponents(w, nodes, u[i], x[i])?;
            }
        }
        Ok(Self { n, pair, s, ph })
    }

    /// Exponent `G` for the charges `signs · a` restricted to the points in `sub`.
    fn exponent(&self, p: &ThermalParams, signs: &[f64], sub: u64, with_source: bool) -> Complex64 {
        let a = p.coupling_a;
        let (mut re, mut im) = (0.0, 0.0);
        for i in (0..self.n).filter(|i| sub >> i & 1 == 1) {
            for j in ((i + 1)..self.n).filter(|j| sub >> j & 1 == 1) {
                re -= p.hbar * a * a * signs[i] * signs[j] * self.pair[i * self.n + j];
            }
            if with_source {
                re -= signs[i] * a * p.hbar * self.s[i];
                im += signs[i] * a * p.hbar * self.ph[i];
            }
        }
        Complex64::new(re, im)
    }
}

fn sign_vector(n: usize, mask: u64) -> Vec<f64> {
    (0..n).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect()
}

/// Integrand for explicit charges (each `±a`) at `points`, times in `(0, β)`.
pub fn signed_integrand(
    p: &ThermalParams,
    w: &CovarianceModel,
    src: &TestSource,
    points: &[EuclideanPoint],
    charges: &[f64],
) -> Result<Complex64> {
    if charges.len() != points.len() {
        return Err(Error::Domain("one charge per point".into()));
    }
    let u: Vec<f64> = points.iter().map(|q| q.u).collect();
    let x: Vec<f64> = points.iter().map(|q| q.x).collect();
    let kd = KernelData::new(w, &src.nodes(), &u, &x)?;
    let signs: Vec<f64> = charges.iter().map(|c| c.signum()).collect();
    Ok(kd.exponent(p, &signs, full_mask(points.len()), true).exp())
}

/// Sign-averaged integrand `2⁻ⁿ Σ_signs Π src_i exp(−Σ a_i a_j ħ C_ij)`.
pub fn charge_integrand(
    p: &ThermalParams,
    w: &CovarianceModel,
    src: &TestSource,
    points: &[EuclideanPoint],
) -> Result<Complex64> {
    let n = points.len();
    if n > MAX_ORDER {
        return Err(Error::Capacity(format!("order {n} exceeds {MAX_ORDER}")));
    }
    let u: Vec<f64> = points.iter().map(|q| q.u).collect();
    let x: Vec<f64> = points.iter().map(|q| q.x).collect();
    let kd = KernelData::new(w, &src.nodes(), &u, &x)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for mask in 0..(1u64 << n) {
        acc += kd.exponent(p, &sign_vector(n, mask), full_mask(n), true).exp();
    }
    Ok(acc / (1u64 << n) as f64)
}

fn full_mask(n: usize) -> u64 {
    if n == 0 {
        0
    } else {
        (1u64 << n) - 1
    }
}

/// Value of `∫_{[0,1]^Γ} ∂^Γ e^{G(σ)} dσ` and the Gauss–Legendre degree used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaIntegral {
    pub value: Complex64,
    pub degree: usize,
}

/// σ-integral of `∂^Γ e^G` for multilinear `G` given by its corner values
/// (`corners[T]` = `G` with the bonds in `T` free).
pub fn sigma_integral(corners: &[Complex64], tol: f64) -> Result<SigmaIntegral> {
    let k = corners.len().trailing_zeros() as usize;
    if corners.len() != 1 << k {
        return Err(Error::Domain("corner count must be a power of two".into()));
    }
    if k == 0 {
        return Ok(SigmaIntegral { value: corners[0].exp(), degree: 0 });
    }
    if k > MAX_GAMMA {
        return Err(Error::Capacity(format!("{k} active bonds exceed {MAX_GAMMA}")));
    }
    let mut g = corners.to_vec();
    for b in 0..k {
        for m in 0..g.len() {
            if m >> b & 1 == 1 {
                let lower = g[m ^ (1 << b)];
                g[m] -= lower;
            }
        }
    }
    let mut degree = 4;
    let mut prev = tensor_gl(&g, k, degree)?;
    loop {
        degree *= 2;
        let cur = tensor_gl(&g, k, degree)?;
        if (cur - prev).norm() <= tol * cur.norm().max(1.0) {
            return Ok(SigmaIntegral { value: cur, degree });
        }
        if degree >= SIGMA_MAX_DEGREE {
            return Err(Error::Quadrature {
                msg: format!("σ-quadrature unstable at degree {degree}"),
                partial: cur.norm(),
            });
        }
        prev = cur;
    }
}

/// Tensor Gauss–Legendre of `∂^Γ e^G` with Möbius coefficients `g`.
fn tensor_gl(g: &[Complex64], k: usize, degree: usize) -> Result<Complex64> {
    let total = degree.checked_pow(k as u32).filter(|t| *t <= SIGMA_NODE_BUDGET).ok_or_else(|| {
        Error::Capacity(format!("σ-grid of degree {degree} in {k} dimensions exceeds the node budget"))
    })?;
    let gl = GaussLegendre::new(degree);
    let x: Vec<f64> = gl.nodes.iter().map(|t| 0.5 * (t + 1.0)).collect();
    let w: Vec<f64> = gl.weights.iter().map(|t| 0.5 * t).collect();
    let size = 1usize << k;
    let mut d = vec![Complex64::new(0.0, 0.0); size];
    let mut dd = vec![Complex64::new(0.0, 0.0); size];
    let mut idx = vec![0usize; k];
    let mut acc = Complex64::new(0.0, 0.0);
    for _ in 0..total {
        d.copy_from_slice(g);
        let mut weight = 1.0;
        for (b, &i) in idx.iter().enumerate() {
            let s = x[i];
            weight *= w[i];
            for m in 0..size {
                if m >> b & 1 == 0 {
                    let upper = d[m | 1 << b];
                    d[m] += s * upper;
                }
            }
        }
        // d[γ] = ∂^γ G(σ); dd[T] = ∂^T e^G / e^G by peeling the block of the lowest bond
        dd[0] = Complex64::new(1.0, 0.0);
        for t in 1..size {
            let low = t & t.wrapping_neg();
            let rest = t ^ low;
            let mut sum = Complex64::new(0.0, 0.0);
            let mut r = rest;
            loop {
                let gamma = r | low;
                sum += d[gamma] * dd[t ^ gamma];
                if r == 0 {
                    break;
                }
                r = (r - 1) & rest;
            }
            dd[t] = sum;
        }
        acc += weight * d[0].exp() * dd[size - 1];
        for i in idx.iter_mut() {
            *i += 1;
            if *i < degree {
                break;
            }
            *i = 0;
        }
    }
    Ok(acc)
}

/// `Σ_T (−1)^{|Γ∖T|} e^{G(1_T)}`: the σ-integral by the fundamental theorem.
pub fn corner_difference(corners: &[Complex64]) -> Complex64 {
    let k = corners.len().trailing_zeros();
    corners
        .iter()
        .enumerate()
        .map(|(m, g)| if (k - (m as u32).count_ones()) % 2 == 0 { g.exp() } else { -g.exp() })
        .sum()
}

/// One order of an MC estimate over a family of corner kernels.
struct OrderJob<'a> {
    p: &'a ThermalParams,
    lambda: f64,
    corners: &'a [CovarianceModel],
    nodes: &'a [(f64, f64, f64)],
    domain: &'a Domain,
    sigma_tol: f64,
}

impl OrderJob<'_> {
    fn prefactor(&self, n: usize) -> f64 {
        (self.lambda / self.p.hbar * self.p.beta * self.domain.measure()).powi(n as i32) / factorial(n)
    }

    /// Order-`n` term and the largest σ-degree used.
    fn run(&self, n: usize, cfg: &RunConfig, stream: u64) -> Result<(ComplexEstimate, usize)> {
        if n > MAX_ORDER {
            return Err(Error::Capacity(format!("order {n} exceeds {MAX_ORDER}")));
        }
        let k = self.corners.len().trailing_zeros() as usize;
        if n == 0 {
            let v = if k == 0 { 1.0 } else { 0.0 };
            return Ok((ComplexEstimate::exact(v, 0.0), 0));
        }
        if self.domain.measure() == 0.0 {
            return Ok((ComplexEstimate::exact(0.0, 0.0), 0));
        }
        if k == 0 && self.nodes.is_empty() && n == 1 {
            return Ok((ComplexEstimate::exact(self.prefactor(1), 0.0), 0));
        }
        let pref = self.prefactor(n) / (1u64 << n) as f64;
        let failure: Mutex<Option<Error>> = Mutex::new(None);
        let degree = AtomicUsize::new(0);
        let mo = sample_moments(cfg.seed, stream, cfg.samples, 2, |rng, out| {
            let t = SimplexSample::draw(rng, self.p.beta, n);
            let x: Vec<f64> = (0..n).map(|_| self.domain.sample(rng)).collect();
            match self.sample(&t.u, &x) {
                Ok((v, deg)) => {
                    out[0] = pref * v.re;
                    out[1] = pref * v.im;
                    degree.fetch_max(deg, Ordering::Relaxed);
                }
                Err(e) => {
                    failure.lock().expect("poisoned").get_or_insert(e);
                }
            }
        });
        if let Some(e) = failure.into_inner().expect("poisoned") {
            return Err(e);
        }
        Ok((complex_from(&mo, 0, 1), degree.into_inner()))
    }

    fn sample(&self, u: &[f64], x: &[f64]) -> Result<(Complex64, usize)> {
        let n = u.len();
        let data: Vec<KernelData> =
            self.corners.iter().map(|w| KernelData::new(w, self.nodes, u, x)).collect::<Result<_>>()?;
        let with_source = !self.nodes.is_empty();
        let mut acc = Complex64::new(0.0, 0.0);
        let mut deg = 0;
        let mut g = vec![Complex64::new(0.0, 0.0); data.len()];
        for mask in 0..(1u64 << n) {
            let signs = sign_vector(n, mask);
            for (gi, kd) in g.iter_mut().zip(&data) {
                *gi = kd.exponent(self.p, &signs, full_mask(n), with_source);
            }
            let si = sigma_integral(&g, self.sigma_tol)?;
            acc += si.value;
            deg = deg.max(si.degree);
        }
        Ok((acc, deg))
    }
}

fn complex_from(m: &Moments, re: usize, im: usize) -> ComplexEstimate {
    ComplexEstimate { re: m.mean[re], im: m.mean[im], re_err: m.std_error(re), im_err: m.std_error(im) }
}

fn interval_of(h: &CutoffFunction) -> Result<Domain> {
    match h {
        CutoffFunction::Interval { lo, hi } if hi > lo => Ok(Domain::new(vec![(*lo, *hi)])),
        _ => Err(Error::Domain("generating terms need a spatial interval cutoff".into())),
    }
}

/// Order-`n` term of the numerator (`src ≠ 0`) or denominator (`src = 0`).
#[allow(clippy::too_many_arguments)]
pub fn generating_term(
    p: &ThermalParams,
    lambda: f64,
    w: &CovarianceModel,
    src: &TestSource,
    h: &CutoffFunction,
    n: usize,
    cfg: &RunConfig,
) -> Result<ComplexEstimate> {
    let domain = interval_of(h)?;
    let nodes = src.nodes();
    let corners = [w.clone()];
    let job = OrderJob { p, lambda, corners: &corners, nodes: &nodes, domain: &domain, sigma_tol: SIGMA_TOL };
    Ok(job.run(n, cfg, stream_id(&format!("generating/{}/{n}", w.name())))?.0)
}

/// Truncated numerator and denominator, per order and summed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FandZ {
    pub f: Vec<ComplexEstimate>,
    pub z: Vec<Estimate>,
    pub f_total: ComplexEstimate,
    pub z_total: Estimate,
    /// `Cov(Re F, Z)` and `Cov(Im F, Z)` of the totals.
    pub cov_fz: (f64, f64),
    pub ratio: ComplexEstimate,
    /// Magnitude of the highest order relative to the total, a tail heuristic.
    pub last_term: f64,
}

impl FandZ {
    fn assemble(f: Vec<ComplexEstimate>, z: Vec<Estimate>, cov_fz: (f64, f64)) -> Result<Self> {
        let sum_sq = |v: &mut dyn Iterator<Item = f64>| v.map(|e| e * e).sum::<f64>().sqrt();
        let f_total = ComplexEstimate {
            re: f.iter().map(|e| e.re).sum(),
            im: f.iter().map(|e| e.im).sum(),
            re_err: sum_sq(&mut f.iter().map(|e| e.re_err)),
            im_err: sum_sq(&mut f.iter().map(|e| e.im_err)),
        };
        let z_total = Estimate::new(z.iter().map(|e| e.value).sum(), sum_sq(&mut z.iter().map(|e| e.std_error)));
        if !(z_total.value > 3.0 * z_total.std_error) {
            return Err(Error::DivisionGuard(format!(
                "Z = {} ± {} is consistent with zero",
                z_total.value, z_total.std_error
            )));
        }
        let zt = z_total.value;
        let (rr, ri) = (f_total.re / zt, f_total.im / zt);
        let var = |fe: f64, r: f64, c: f64| (fe * fe + r * r * z_total.std_error.powi(2) - 2.0 * r * c) / (zt * zt);
        let ratio = ComplexEstimate {
            re: rr,
            im: ri,
            re_err: var(f_total.re_err, rr, cov_fz.0).max(0.0).sqrt(),
            im_err: var(f_total.im_err, ri, cov_fz.1).max(0.0).sqrt(),
        };
        let nf = f.last().map(|e| e.value().norm()).unwrap_or(0.0) / f_total.value().norm().max(f64::MIN_POSITIVE);
        let nz = z.last().map(|e| e.value.abs()).unwrap_or(0.0) / zt;
        Ok(Self { f, z, f_total, z_total, cov_fz, ratio, last_term: nf.max(nz) })
    }
}

/// `F(Λ)` and `Z(Λ)` on common configurations, orders `0..=n_max`.
#[allow(clippy::too_many_arguments)]
pub fn f_and_z(
    p: &ThermalParams,
    lambda: f64,
    w: &CovarianceModel,
    src: &TestSource,
    region: Region,
    n_max: usize,
    cfg: &RunConfig,
) -> Result<FandZ> {
    let domain = Domain::new(vec![(region.lo as f64, region.hi as f64)]);
    f_and_z_on(p, lambda, w, src, &domain, n_max, cfg, &format!("fz/{}/{region}", w.name()))
}

#[allow(clippy::too_many_arguments)]
fn f_and_z_on(
    p: &ThermalParams,
    lambda: f64,
    w: &CovarianceModel,
    src: &TestSource,
    domain: &Domain,
    n_max: usize,
    cfg: &RunConfig,
    label: &str,
) -> Result<FandZ> {
    if n_max > MAX_ORDER {
        return Err(Error::Capacity(format!("order {n_max} exceeds {MAX_ORDER}")));
    }
    let nodes = src.nodes();
    let mut f = vec![ComplexEstimate::exact(1.0, 0.0)];
    let mut z = vec![Estimate::exact(1.0)];
    let mut cov = (0.0, 0.0);
    for n in 1..=n_max {
        if domain.measure() == 0.0 {
            f.push(ComplexEstimate::exact(0.0, 0.0));
            z.push(Estimate::exact(0.0));
            continue;
        }
        let pref = (lambda / p.hbar * p.beta * domain.measure()).powi(n as i32) / factorial(n) / (1u64 << n) as f64;
        let failure: Mutex<Option<Error>> = Mutex::new(None);
        let mo = sample_moments(cfg.seed, stream_id(&format!("{label}/{n}")), cfg.samples, 3, |rng, out| {
            let t = SimplexSample::draw(rng, p.beta, n);
            let x: Vec<f64> = (0..n).map(|_| domain.sample(rng)).collect();
            let kd = match KernelData::new(w, &nodes, &t.u, &x) {
                Ok(k) => k,
                Err(e) => {
                    failure.lock().expect("poisoned").get_or_insert(e);
                    return;
                }
            };
            let (mut fv, mut zv) = (Complex64::new(0.0, 0.0), 0.0);
            for mask in 0..(1u64 << n) {
                let signs = sign_vector(n, mask);
                fv += kd.exponent(p, &signs, full_mask(n), true).exp();
                zv += kd.exponent(p, &signs, full_mask(n), false).re.exp();
            }
            out[0] = pref * fv.re;
            out[1] = pref * fv.im;
            out[2] = pref * zv;
        });
        if let Some(e) = failure.into_inner().expect("poisoned") {
            return Err(e);
        }
        f.push(complex_from(&mo, 0, 1));
        z.push(Estimate::new(mo.mean[2], mo.std_error(2)));
        cov.0 += mo.cov_of_mean(0, 2);
        cov.1 += mo.cov_of_mean(1, 2);
    }
    FandZ::assemble(f, z, cov)
}

/// Order-by-order comparison of a Dirichlet-decoupled window with the
/// product of its pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecouplingReport {
    pub pieces: Vec<(f64, f64)>,
    pub z_whole: Vec<Estimate>,
    pub z_product: Vec<Estimate>,
    pub f_whole: Vec<ComplexEstimate>,
    pub f_product: Vec<ComplexEstimate>,
    /// Largest `|whole − product|/σ` over orders and both functionals.
    pub max_sigma: f64,
    /// No bond of `Γ` lies inside the window.
    pub trivial: bool,
    pub holds: bool,
}

/// Verifies `Z_{C^Γ}(Λ) = Π Z(Λ ∩ X_i)` and `F_{C^Γ}(Λ) = F(piece with A)·Π Z(others)`.
#[allow(clippy::too_many_arguments)]
pub fn decoupling_check(
    p: &ThermalParams,
    lambda: f64,
    gamma: &BondSet,
    src: &TestSource,
    region: Region,
    n_max: usize,
    cfg: &RunConfig,
) -> Result<DecouplingReport> {
    if gamma.is_empty() {
        return Err(Error::Domain("decoupling needs at least one bond".into()));
    }
    let w = CovarianceModel::Dirichlet { params: *p, bonds: gamma.clone(), n_images: cfg.n_images };
    let cuts: Vec<f64> =
        gamma.as_slice().iter().filter(|b| **b > region.lo && **b < region.hi).map(|b| *b as f64).collect();
    let mut edges = vec![region.lo as f64];
    edges.extend(&cuts);
    edges.push(region.hi as f64);
    let pieces: Vec<(f64, f64)> = edges.windows(2).map(|e| (e[0], e[1])).collect();
    let whole = f_and_z_on(p, lambda, &w, src, &Domain::new(vec![(edges[0], edges[edges.len() - 1])]), n_max, cfg, "decouple/whole")?;
    if cuts.is_empty() {
        return Ok(DecouplingReport {
            pieces,
            z_product: whole.z.clone(),
            f_product: whole.f.clone(),
            z_whole: whole.z,
            f_whole: whole.f,
            max_sigma: 0.0,
            trivial: true,
            holds: true,
        });
    }
    let host = match src.support() {
        None => None,
        Some((a, b)) => Some(
            pieces
                .iter()
                .position(|(lo, hi)| a >= *lo && b <= *hi)
                .ok_or_else(|| Error::Domain("the source straddles a bond".into()))?,
        ),
    };
    let mut f_host = None;
    let mut z_others: Vec<Vec<Estimate>> = Vec::new();
    for (i, (lo, hi)) in pieces.iter().enumerate() {
        let r = f_and_z_on(p, lambda, &w, src, &Domain::new(vec![(*lo, *hi)]), n_max, cfg, &format!("decouple/{lo}/{hi}"))?;
        if Some(i) == host {
            f_host = Some((r.f, r.z));
        } else {
            z_others.push(r.z);
        }
    }
    // with A = 1 every piece is a Z factor and F = Z
    let (z_product, f_product) = match f_host {
        Some((fh, zh)) => {
            let mut all: Vec<&[Estimate]> = vec![zh.as_slice()];
            all.extend(z_others.iter().map(|v| v.as_slice()));
            let zp = truncated_product(&all, n_max).0;
            let rest: Vec<&[Estimate]> = z_others.iter().map(|v| v.as_slice()).collect();
            (zp, complex_product(&fh, &rest, n_max).0)
        }
        None => {
            let all: Vec<&[Estimate]> = z_others.iter().map(|v| v.as_slice()).collect();
            let zp = truncated_product(&all, n_max).0;
            let fp = zp.iter().map(|e| ComplexEstimate { re: e.value, im: 0.0, re_err: e.std_error, im_err: 0.0 }).collect();
            (zp, fp)
        }
    };
    let mut max_sigma: f64 = 0.0;
    for k in 0..=n_max {
        let dz = (whole.z[k].value - z_product[k].value).abs();
        let sz = whole.z[k].std_error.hypot(z_product[k].std_error).max(1e-12);
        max_sigma = max_sigma.max(dz / sz);
        let df = (whole.f[k].value() - f_product[k].value()).norm();
        let sf = whole.f[k].std_error().hypot(f_product[k].std_error()).max(1e-12);
        max_sigma = max_sigma.max(df / sf);
    }
    Ok(DecouplingReport {
        pieces,
        z_whole: whole.z,
        z_product,
        f_whole: whole.f,
        f_product,
        max_sigma,
        trivial: false,
        holds: max_sigma <= 3.0,
    })
}

/// Truncated Cauchy product of independent real series: per-order values and
/// the total `Σ_{k ≤ n_max}`, with delta-method errors.
fn truncated_product(series: &[&[Estimate]], n_max: usize) -> (Vec<Estimate>, Estimate) {
    let m = series.len();
    let mut val = vec![0.0; n_max + 1];
    // grad[k][i][j]: derivative of order k (k = n_max + 1: the total) w.r.t. series[i][j]
    let mut grad = vec![vec![vec![0.0; n_max + 1]; m]; n_max + 2];
    let mut tuples = Vec::new();
    order_tuples(m, n_max, &mut Vec::new(), &mut tuples);
    for idx in tuples {
        if idx.iter().zip(series).any(|(j, s)| *j >= s.len()) {
            continue;
        }
        let k: usize = idx.iter().sum();
        let vals: Vec<f64> = idx.iter().zip(series).map(|(j, s)| s[*j].value).collect();
        val[k] += vals.iter().product::<f64>();
        for i in 0..m {
            let others: f64 = vals.iter().enumerate().filter(|(l, _)| *l != i).map(|(_, v)| v).product();
            grad[k][i][idx[i]] += others;
            grad[n_max + 1][i][idx[i]] += others;
        }
    }
    let est = |g: &Vec<Vec<f64>>, v: f64| {
        let mut var = 0.0;
        for (gi, s) in g.iter().zip(series) {
            for (gij, e) in gi.iter().zip(s.iter()) {
                var += (gij * e.std_error).powi(2);
            }
        }
        Estimate::new(v, var.sqrt())
    };
    let per = (0..=n_max).map(|k| est(&grad[k], val[k])).collect();
    let total = est(&grad[n_max + 1], val.iter().sum());
    (per, total)
}

/// Index tuples of length `m` with sum at most `n_max`.
fn order_tuples(m: usize, budget: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if prefix.len() == m {
        out.push(prefix.clone());
        return;
    }
    for j in 0..=budget {
        prefix.push(j);
        order_tuples(m, budget - j, prefix, out);
        prefix.pop();
    }
}

/// Product of one complex series with independent real series.
fn complex_product(c: &[ComplexEstimate], real: &[&[Estimate]], n_max: usize) -> (Vec<ComplexEstimate>, ComplexEstimate) {
    let re: Vec<Estimate> = c.iter().map(|e| Estimate::new(e.re, e.re_err)).collect();
    let im: Vec<Estimate> = c.iter().map(|e| Estimate::new(e.im, e.im_err)).collect();
    let mut sr = vec![re.as_slice()];
    sr.extend_from_slice(real);
    let mut si = vec![im.as_slice()];
    si.extend_from_slice(real);
    let (pr, tr) = truncated_product(&sr, n_max);
    let (pi, ti) = truncated_product(&si, n_max);
    let per = pr
        .iter()
        .zip(&pi)
        .map(|(r, i)| ComplexEstimate { re: r.value, im: i.value, re_err: r.std_error, im_err: i.std_error })
        .collect();
    (per, ComplexEstimate { re: tr.value, im: ti.value, re_err: tr.std_error, im_err: ti.std_error })
}

/// A `(Y, Γ)` pair. `frozen` lists the bonds of `Y`'s closure held Dirichlet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterTerm {
    pub y: Region,
    pub gamma: BondSet,
    pub frozen: BondSet,
}

impl ClusterTerm {
    pub fn id(&self) -> String {
        format!("Y{}G{:?}", self.y, self.gamma.as_slice())
    }
}

/// All `(Y, Γ)` with `Y₀ ⊆ Y ⊆ window`, `Γ` inside `Y`, and every bond of `Y`
/// outside `Y₀` in `Γ`. Only interior bonds of the window are expanded.
pub fn enumerate_cluster_terms(y0: Region, window: Region) -> Result<Vec<ClusterTerm>> {
    if !window.contains(&y0) {
        return Err(Error::Domain(format!("{y0} is not inside {window}")));
    }
    let bonds = window.interior_bonds();
    let is_bond = |b: i64| bonds.contains(b);
    let mut lefts: Vec<i64> = vec![window.lo];
    lefts.extend(bonds.as_slice().iter().filter(|b| **b <= y0.lo));
    let mut rights: Vec<i64> = bonds.as_slice().iter().copied().filter(|b| *b >= y0.hi).collect();
    rights.push(window.hi);
    let inner: Vec<i64> = ((y0.lo + 1)..y0.hi).filter(|b| is_bond(*b)).collect();
    if inner.len() > MAX_GAMMA {
        return Err(Error::Capacity(format!("{} optional bonds inside Y₀", inner.len())));
    }
    let mut out = Vec::new();
    for &a in &lefts {
        for &b in &rights {
            let y = Region { lo: a, hi: b };
            let forced: Vec<i64> = ((a + 1)..b).filter(|x| is_bond(*x) && (*x <= y0.lo || *x >= y0.hi)).collect();
            if forced.len() + inner.len() > MAX_GAMMA {
                return Err(Error::Capacity(format!("{y} has more than {MAX_GAMMA} active bonds")));
            }
            for mask in 0..(1u64 << inner.len()) {
                let chosen = BondSet::from_unsorted(inner.clone()).subset(mask);
                let gamma = BondSet::from_unsorted(forced.iter().chain(chosen.as_slice()).copied().collect());
                let closure: Vec<i64> = (a..=b).filter(|x| is_bond(*x)).collect();
                let frozen = BondSet::from_unsorted(closure).minus(&gamma);
                out.push(ClusterTerm { y, gamma, frozen });
                if out.len() > MAX_TERMS {
                    return Err(Error::Capacity(format!("more than {MAX_TERMS} cluster terms")));
                }
            }
        }
    }
    out.sort_by(|s, t| s.y.len().cmp(&t.y.len()).then(s.y.cmp(&t.y)).then(s.gamma.as_slice().cmp(t.gamma.as_slice())));
    Ok(out)
}

/// Per-term row of a cluster sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTermRow {
    pub id: String,
    pub y: Region,
    pub gamma: Vec<i64>,
    pub sigma_degree: usize,
    /// `Σ_n ∫∂^ΓF_n(σ, Λ∩Y) dσ` per order.
    pub integrals: Vec<ComplexEstimate>,
    /// Contribution to `S(Λ)`.
    pub contribution: ComplexEstimate,
}

/// Cluster-resummed `S(Λ)` next to the direct ratio on the same `Z(Λ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSum {
    pub window: Region,
    pub y0: Region,
    pub n_max: usize,
    pub terms: Vec<ClusterTermRow>,
    /// `Σ_{Y,Γ} Σ_{n₁+n₂=k} I_{n₁} Z^{∂Y}_{n₂}` per order `k`.
    pub numerator: Vec<ComplexEstimate>,
    pub direct: FandZ,
    pub value: ComplexEstimate,
    /// `(S_cluster − F/Z)` with its combined error.
    pub identity_gap: ComplexEstimate,
}

impl ClusterSum {
    /// `|gap| ≤ k σ` on the modulus.
    pub fn identity_holds(&self, k: f64) -> bool {
        self.identity_gap.value().norm() <= k * self.identity_gap.std_error().max(1e-14)
    }
}

/// Cluster expansion of `F(Λ)/Z(Λ)` for the observable supported in `Y₀`.
#[allow(clippy::too_many_arguments)]
pub fn cluster_sum(
    p: &ThermalParams,
    lambda: f64,
    src: &TestSource,
    y0: Region,
    window: Region,
    n_max: usize,
    cfg: &RunConfig,
) -> Result<ClusterSum> {
    if let Some((a, b)) = src.support() {
        if a < y0.lo as f64 || b > y0.hi as f64 {
            return Err(Error::Domain(format!("source support [{a}, {b}] leaves Y₀ = {y0}")));
        }
    }
    let terms = enumerate_cluster_terms(y0, window)?;
    let bonds = window.interior_bonds();
    let nodes = src.nodes();
    let tag = format!("m{}/b{}/l{lambda}", p.mass, p.beta);
    let mut by_y: BTreeMap<Region, (Vec<ComplexEstimate>, Vec<Estimate>)> = BTreeMap::new();
    let mut rows = Vec::new();
    for t in &terms {
        let iv = InterpolationVector::new(t.gamma.clone(), vec![1.0; t.gamma.len()], t.frozen.clone())?;
        let corners: Vec<CovarianceModel> = (0..(1u64 << t.gamma.len()))
            .map(|mask| CovarianceModel::Dirichlet {
                params: *p,
                bonds: corner_bonds(&iv, mask),
                n_images: cfg.n_images,
            })
            .collect();
        let domain = Domain::new(vec![(t.y.lo as f64, t.y.hi as f64)]);
        let job = OrderJob { p, lambda, corners: &corners, nodes: &nodes, domain: &domain, sigma_tol: SIGMA_TOL };
        let mut integrals = Vec::new();
        let mut degree = 0;
        for n in 0..=n_max {
            let (e, d) = job.run(n, cfg, stream_id(&format!("cluster/{tag}/{}/I/{n}", t.id())))?;
            integrals.push(e);
            degree = degree.max(d);
        }
        let entry = by_y.entry(t.y).or_insert_with(|| (vec![ComplexEstimate::exact(0.0, 0.0); n_max + 1], Vec::new()));
        for (acc, e) in entry.0.iter_mut().zip(&integrals) {
            *acc = ComplexEstimate {
                re: acc.re + e.re,
                im: acc.im + e.im,
                re_err: acc.re_err.hypot(e.re_err),
                im_err: acc.im_err.hypot(e.im_err),
            };
        }
        rows.push(ClusterTermRow {
            id: t.id(),
            y: t.y,
            gamma: t.gamma.as_slice().to_vec(),
            sigma_degree: degree,
            integrals,
            contribution: ComplexEstimate::exact(0.0, 0.0),
        });
    }
    for (y, (_, zs)) in by_y.iter_mut() {
        let boundary = BondSet::from_unsorted([y.lo, y.hi].into_iter().filter(|b| bonds.contains(*b)).collect());
        let w = CovarianceModel::Dirichlet { params: *p, bonds: boundary, n_images: cfg.n_images };
        let outside = Domain::new(vec![(window.lo as f64, y.lo as f64), (y.hi as f64, window.hi as f64)]);
        let r = f_and_z_on(p, lambda, &w, &TestSource::zero(), &outside, n_max, cfg, &format!("cluster/{tag}/Z/{y}"))?;
        *zs = r.z;
    }
    let direct = f_and_z(p, lambda, &CovarianceModel::Thermal(*p), src, window, n_max, cfg)?;
    let zt = direct.z_total.value;
    for row in rows.iter_mut() {
        let zs = &by_y[&row.y].1;
        let (_, tot) = complex_product(&row.integrals, &[zs.as_slice()], n_max);
        row.contribution = ComplexEstimate { re: tot.re / zt, im: tot.im / zt, re_err: tot.re_err / zt, im_err: tot.im_err / zt };
    }
    let mut numerator = vec![ComplexEstimate::exact(0.0, 0.0); n_max + 1];
    let mut total = ComplexEstimate::exact(0.0, 0.0);
    let add = |a: &ComplexEstimate, b: &ComplexEstimate| ComplexEstimate {
        re: a.re + b.re,
        im: a.im + b.im,
        re_err: a.re_err.hypot(b.re_err),
        im_err: a.im_err.hypot(b.im_err),
    };
    for (js, zs) in by_y.values() {
        let (per, tot) = complex_product(js, &[zs.as_slice()], n_max);
        for (acc, e) in numerator.iter_mut().zip(&per) {
            *acc = add(acc, e);
        }
        total = add(&total, &tot);
    }
    let value = ComplexEstimate { re: total.re / zt, im: total.im / zt, re_err: total.re_err / zt, im_err: total.im_err / zt };
    let z_err = direct.z_total.std_error;
    let gap = |s: f64, se: f64, f: f64, fe: f64, cov: f64| {
        let d = (s - f) / zt;
        let var = (se * se + fe * fe + d * d * z_err * z_err + 2.0 * d * cov) / (zt * zt);
        (d, var.max(0.0).sqrt())
    };
    let (gr, gre) = gap(total.re, total.re_err, direct.f_total.re, direct.f_total.re_err, direct.cov_fz.0);
    let (gi, gie) = gap(total.im, total.im_err, direct.f_total.im, direct.f_total.im_err, direct.cov_fz.1);
    Ok(ClusterSum {
        window,
        y0,
        n_max,
        terms: rows,
        numerator,
        direct,
        value,
        identity_gap: ComplexEstimate { re: gr, im: gi, re_err: gre, im_err: gie },
    })
}

/// Two-bond telescoping identity on fixed configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelescopingReport {
    pub configurations: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub max_abs_error: f64,
    pub holds: bool,
}

/// `F(1,1) = F(0,0) + ∫∂₁F(σ₁,0) + ∫∂₂F(0,σ₂) + ∫∫∂₁∂₂F` for bonds `{0, 1}`
/// on `[−1, 2]`, each side integrated by its own route.
pub fn telescoping_check(p: &ThermalParams, src: &TestSource, configurations: usize, cfg: &RunConfig) -> Result<TelescopingReport> {
    let iv = InterpolationVector::uniform(BondSet::from_unsorted(vec![0, 1]), 1.0);
    let corners: Vec<CovarianceModel> = (0..4u64)
        .map(|mask| CovarianceModel::Dirichlet { params: *p, bonds: corner_bonds(&iv, mask), n_images: cfg.n_images })
        .collect();
    let nodes = src.nodes();
    let mut rng = crate::mc::chunk_rng(cfg.seed, stream_id("telescoping"), 0);
    let (mut lhs, mut rhs, mut worst) = (0.0, 0.0, 0.0f64);
    for _ in 0..configurations {
        let n = 2;
        let t = SimplexSample::draw(&mut rng, p.beta, n);
        let x: Vec<f64> = (0..n).map(|_| -1.0 + 3.0 * rng.random::<f64>()).collect();
        let data: Vec<KernelData> = corners.iter().map(|w| KernelData::new(w, &nodes, &t.u, &x)).collect::<Result<_>>()?;
        for mask in 0..(1u64 << n) {
            let signs = sign_vector(n, mask);
            let g: Vec<Complex64> = data.iter().map(|kd| kd.exponent(p, &signs, full_mask(n), true)).collect();
            let f11 = g[3].exp();
            let f00 = g[0].exp();
            // bit 0 ↔ bond 0; the other bond held Dirichlet
            let s0 = sigma_integral(&[g[0], g[1]], 1e-13)?.value;
            let s1 = sigma_integral(&[g[0], g[2]], 1e-13)?.value;
            let s01 = sigma_integral(&g, 1e-13)?.value;
            let r = f00 + s0 + s1 + s01;
            worst = worst.max((f11 - r).norm());
            lhs += f11.re;
            rhs += r.re;
        }
    }
    Ok(TelescopingReport { configurations, lhs, rhs, max_abs_error: worst, holds: worst <= 1e-10 })
}

/// Subset weights `f(S)` (with source) and `z(S)` of one configuration.
fn subset_weights(p: &ThermalParams, kd: &KernelData, with_source: bool) -> (Vec<Complex64>, Vec<f64>) {
    let n = kd.n;
    let size = 1usize << n;
    let mut f = vec![Complex64::new(0.0, 0.0); size];
    let mut z = vec![0.0; size];
    for s in 0..size as u64 {
        let k = s.count_ones();
        let norm = 1.0 / (1u64 << k) as f64;
        // enumerate sign patterns of the points in s only
        let mut sub = s;
        let mut acc_f = Complex64::new(0.0, 0.0);
        let mut acc_z = 0.0;
        loop {
            let signs = sign_vector(n, sub);
            acc_z += kd.exponent(p, &signs, s, false).re.exp();
            if with_source {
                acc_f += kd.exponent(p, &signs, s, true).exp();
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & s;
        }
        z[s as usize] = norm * acc_z;
        f[s as usize] = if with_source { norm * acc_f } else { Complex64::new(norm * acc_z, 0.0) };
    }
    (f, z)
}

/// `Σ_{S⊆X} f(S) z̃(X∖S)` with `z̃` the subset-convolution inverse of `z`.
fn linked_weight(f: &[Complex64], z: &[f64]) -> Complex64 {
    let size = z.len();
    let mut zi = vec![0.0; size];
    zi[0] = 1.0 / z[0];
    for x in 1..size {
        let mut acc = 0.0;
        let mut s = x;
        while s > 0 {
            acc += z[s] * zi[x ^ s];
            s = (s - 1) & x;
        }
        zi[x] = -acc / z[0];
    }
    let full = size - 1;
    let mut r = Complex64::new(0.0, 0.0);
    let mut s = full;
    loop {
        r += f[s] * zi[full ^ s];
        if s == 0 {
            break;
        }
        s = (s - 1) & full;
    }
    r
}

/// Ursell function `u(X)` of the subset weights, `z(X) = Σ_{S∋min X} u(S) z(X∖S)`.
fn ursell_weight(z: &[f64]) -> f64 {
    let size = z.len();
    let mut u = vec![0.0; size];
    for x in 1..size {
        let low = x & x.wrapping_neg();
        let rest = x ^ low;
        let mut acc = 0.0;
        // proper subsets of x that contain its lowest point
        let mut r = rest;
        loop {
            let s = r | low;
            if s != x {
                acc += u[s] * z[x ^ s];
            }
            if r == 0 {
                break;
            }
            r = (r - 1) & rest;
        }
        u[x] = z[x] - acc;
    }
    u[size - 1]
}

/// One window of an adiabatic scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub window: Region,
    pub value: ComplexEstimate,
    /// `S(Λ_k) − S(Λ_{k−1})` on common configurations; absent for the first window.
    pub gap: Option<ComplexEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    /// Successive `|gap_{k+1}/gap_k|`.
    pub ratios: Vec<f64>,
    /// `e^{−m/√2}`, the decay rate of the kernel bound.
    pub reference_ratio: f64,
    pub monotone: bool,
    pub converged: bool,
    pub inconclusive: bool,
}

/// `S(Λ) = F/Z` expanded in `λ` to order `n_max` (linked estimator), over
/// nested windows sampled on common configurations of the largest one.
#[allow(clippy::too_many_arguments)]
pub fn adiabatic_scan(
    p: &ThermalParams,
    lambda: f64,
    src: &TestSource,
    y0: Region,
    windows: &[Region],
    n_max: usize,
    cfg: &RunConfig,
) -> Result<ScanReport> {
    if windows.is_empty() {
        return Err(Error::Domain("no windows".into()));
    }
    for w in windows.windows(2) {
        if !w[1].contains(&w[0]) || w[0] == w[1] {
            return Err(Error::Domain(format!("windows {} and {} are not strictly nested", w[0], w[1])));
        }
    }
    if !windows[0].contains(&y0) {
        return Err(Error::Domain(format!("{y0} is not inside {}", windows[0])));
    }
    if n_max > MAX_ORDER.min(5) {
        return Err(Error::Capacity(format!("linked estimator limited to order {}", MAX_ORDER.min(5))));
    }
    let nw = windows.len();
    let big = windows[nw - 1];
    let domain = Domain::new(vec![(big.lo as f64, big.hi as f64)]);
    let w = CovarianceModel::Thermal(*p);
    let nodes = src.nodes();
    let mut orders: Vec<Moments> = Vec::new();
    for n in 1..=n_max {
        let pref = (lambda / p.hbar * p.beta * domain.measure()).powi(n as i32) / factorial(n);
        let failure: Mutex<Option<Error>> = Mutex::new(None);
        let label = format!("scan/m{}/b{}/l{lambda}/{big}/{n}", p.mass, p.beta);
        // per window, then per gap: each gap is its own observable so that
        // its error does not come from differencing nearly equal variances
        let mo = sample_moments(cfg.seed, stream_id(&label), cfg.samples, 4 * nw - 2, |rng, out| {
            let t = SimplexSample::draw(rng, p.beta, n);
            let x: Vec<f64> = (0..n).map(|_| domain.sample(rng)).collect();
            let kd = match KernelData::new(&w, &nodes, &t.u, &x) {
                Ok(k) => k,
                Err(e) => {
                    failure.lock().expect("poisoned").get_or_insert(e);
                    return;
                }
            };
            let (f, z) = subset_weights(p, &kd, true);
            let r = pref * linked_weight(&f, &z);
            let inside: Vec<bool> =
                windows.iter().map(|win| x.iter().all(|v| *v >= win.lo as f64 && *v <= win.hi as f64)).collect();
            for (i, ins) in inside.iter().enumerate() {
                if *ins {
                    out[2 * i] = r.re;
                    out[2 * i + 1] = r.im;
                }
                if i > 0 && *ins && !inside[i - 1] {
                    out[2 * nw + 2 * (i - 1)] = r.re;
                    out[2 * nw + 2 * (i - 1) + 1] = r.im;
                }
            }
        });
        if let Some(e) = failure.into_inner().expect("poisoned") {
            return Err(e);
        }
        orders.push(mo);
    }
    let combine = |slot: usize| -> ComplexEstimate {
        let (mut re, mut im, mut vr, mut vi) = (0.0, 0.0, 0.0, 0.0);
        for mo in &orders {
            re += mo.mean[slot];
            im += mo.mean[slot + 1];
            vr += mo.cov_of_mean(slot, slot);
            vi += mo.cov_of_mean(slot + 1, slot + 1);
        }
        ComplexEstimate { re, im, re_err: vr.sqrt(), im_err: vi.sqrt() }
    };
    let mut rows = Vec::new();
    for (i, win) in windows.iter().enumerate() {
        let mut v = combine(2 * i);
        v.re += 1.0;
        let gap = (i > 0).then(|| combine(2 * nw + 2 * (i - 1)));
        rows.push(ScanRow { window: *win, value: v, gap });
    }
    let gaps: Vec<&ComplexEstimate> = rows.iter().filter_map(|r| r.gap.as_ref()).collect();
    let ratios: Vec<f64> = gaps.windows(2).map(|g| g[1].value().norm() / g[0].value().norm().max(f64::MIN_POSITIVE)).collect();
    let monotone = gaps.windows(2).all(|g| g[1].value().norm() < g[0].value().norm());
    let inconclusive = gaps.windows(2).any(|g| {
        g[1].value().norm() - g[0].value().norm() > 3.0 * g[0].std_error().hypot(g[1].std_error())
    });
    let converged = match (gaps.last(), rows.len()) {
        (Some(g), n) if n >= 2 => {
            let s = rows[n - 1].value.std_error().hypot(rows[n - 2].value.std_error());
            monotone && g.value().norm() < 5.0 * s
        }
        _ => false,
    };
    Ok(ScanReport { rows, ratios, reference_ratio: (-p.mass / SQRT_2).exp(), monotone, converged, inconclusive })
}

/// First-order `S(outer) − S(inner)` by tensor Gauss–Legendre:
/// `(λ/ħ) ∫₀^β du ∫_{outer∖inner} dx (cosh(aħ(s − i ph)) − 1)`.
pub fn first_order_gap_quadrature(
    p: &ThermalParams,
    lambda: f64,
    src: &TestSource,
    inner: Region,
    outer: Region,
    nodes_per_unit: usize,
) -> Result<Complex64> {
    if !outer.contains(&inner) {
        return Err(Error::Domain(format!("{inner} is not inside {outer}")));
    }
    let w = CovarianceModel::Thermal(*p);
    let sn = src.nodes();
    let gl_u = GaussLegendre::new(4 * nodes_per_unit);
    let gl_x = GaussLegendre::new(nodes_per_unit);
    let mut acc = Complex64::new(0.0, 0.0);
    let cells = (outer.lo..inner.lo).chain(inner.hi..outer.hi);
    for cell in cells {
        for (x, wx) in gl_x.mapped(cell as f64, cell as f64 + 1.0) {
            for (u, wu) in gl_u.mapped(0.0, p.beta) {
                let (s, ph) = source_exponents(&w, &sn, u, x)?;
                let z = Complex64::new(p.coupling_a * p.hbar * s, -p.coupling_a * p.hbar * ph);
                acc += wx * wu * (z.cosh() - 1.0);
            }
        }
    }
    Ok(acc * lambda / p.hbar)
}

/// `ln Z(Λ)` expanded in `λ` to order `n_max` through Ursell functions.
pub fn log_partition(
    p: &ThermalParams,
    lambda: f64,
    w: &CovarianceModel,
    segments: &[(f64, f64)],
    n_max: usize,
    cfg: &RunConfig,
    label: &str,
) -> Result<Estimate> {
    if n_max > 5 {
        return Err(Error::Capacity("Ursell estimator limited to order 5".into()));
    }
    let domain = Domain::new(segments.to_vec());
    let mut value = 0.0;
    let mut var = 0.0;
    for n in 1..=n_max {
        if domain.measure() == 0.0 {
            break;
        }
        let pref = (lambda / p.hbar * p.beta * domain.measure()).powi(n as i32) / factorial(n);
        if n == 1 {
            value += pref;
            continue;
        }
        let failure: Mutex<Option<Error>> = Mutex::new(None);
        let mo = sample_moments(cfg.seed, stream_id(&format!("logz/{label}/{n}")), cfg.samples, 1, |rng, out| {
            let t = SimplexSample::draw(rng, p.beta, n);
            let x: Vec<f64> = (0..n).map(|_| domain.sample(rng)).collect();
            match KernelData::new(w, &[], &t.u, &x) {
                Ok(kd) => out[0] = pref * ursell_weight(&subset_weights(p, &kd, false).1),
                Err(e) => {
                    failure.lock().expect("poisoned").get_or_insert(e);
                }
            }
        });
        if let Some(e) = failure.into_inner().expect("poisoned") {
            return Err(e);
        }
        value += mo.mean[0];
        var += mo.cov_of_mean(0, 0);
    }
    Ok(Estimate::new(value, var.sqrt()))
}

/// Linear fit of `ln Z([0, L])` against `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub lengths: Vec<i64>,
    pub log_z: Vec<Estimate>,
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
    pub relative_residual: f64,
    pub holds: bool,
}

pub fn stability_fit(p: &ThermalParams, lambda: f64, lengths: &[i64], n_max: usize, cfg: &RunConfig) -> Result<StabilityReport> {
    if lengths.len() < 3 {
        return Err(Error::Domain("a stability fit needs at least three lengths".into()));
    }
    let w = CovarianceModel::Thermal(*p);
    let log_z: Vec<Estimate> = lengths
        .iter()
        .map(|l| log_partition(p, lambda, &w, &[(0.0, *l as f64)], n_max, cfg, &format!("stab/m{}/l{lambda}/{l}", p.mass)))
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = lengths.iter().map(|l| *l as f64).collect();
    let ys: Vec<f64> = log_z.iter().map(|e| e.value).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).abs()).fold(0.0, f64::max);
    let relative_residual = max_residual / slope.abs();
    Ok(StabilityReport {
        lengths: lengths.to_vec(),
        log_z,
        slope,
        intercept,
        max_residual,
        relative_residual,
        holds: relative_residual < 0.1,
    })
}

/// All set partitions of `0..n` as block lists (restricted growth strings).
pub fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    let mut rgs = vec![0usize; n];
    fn rec(i: usize, max: usize, rgs: &mut Vec<usize>, out: &mut Vec<Vec<Vec<usize>>>) {
        let n = rgs.len();
        if i == n {
            let blocks = rgs.iter().max().map(|m| m + 1).unwrap_or(0);
            let mut p = vec![Vec::new(); blocks];
            for (j, b) in rgs.iter().enumerate() {
                p[*b].push(j);
            }
            out.push(p);
            return;
        }
        let top = if i == 0 { 0 } else { max + 1 };
        for b in 0..=top {
            rgs[i] = b;
            rec(i + 1, max.max(b), rgs, out);
        }
    }
    if n == 0 {
        return vec![Vec::new()];
    }
    rec(0, 0, &mut rgs, &mut out);
    out
}

/// `2^{max(Σa−1, 0)} Π(1 + a_i)`.
pub fn n_of_a_bound(a: &[i64]) -> f64 {
    let r: i64 = a.iter().sum();
    2f64.powi((r - 1).max(0) as i32) * a.iter().map(|v| 1.0 + *v as f64).product::<f64>()
}

/// Sequences of at most `len` non-negative integers summing to `r`.
pub fn sequence_count(len: usize, r: usize) -> f64 {
    // C(r + L − 1, L − 1) compositions allowing zeros, for each length L
    (1..=len).map(|l| binomial(r + l - 1, l - 1)).sum()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exhaustive partition statistics for one bond set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionCount {
    pub gamma: Vec<i64>,
    pub partitions: usize,
    /// Exact `n(A)` for every occurring gap sequence, with the bound.
    pub n_of_a: Vec<(Vec<i64>, usize, f64)>,
    pub violations: usize,
}

/// `n(A)`: partitions of `Γ` grouped by the diameters of their blocks, the
/// blocks ordered by their smallest element.
pub fn partition_count(gamma: &[i64]) -> PartitionCount {
    let mut g = gamma.to_vec();
    g.sort_unstable();
    let parts = set_partitions(g.len());
    let mut counts: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
    for part in &parts {
        let a: Vec<i64> = part.iter().map(|b| g[*b.last().expect("block")] - g[b[0]]).collect();
        *counts.entry(a).or_default() += 1;
    }
    let n_of_a: Vec<(Vec<i64>, usize, f64)> = counts.into_iter().map(|(a, c)| { let b = n_of_a_bound(&a); (a, c, b) }).collect();
    let violations = n_of_a.iter().filter(|(a, c, b)| {
        let r: i64 = a.iter().sum();
        *c as f64 > *b || *b > ((1.0 + 2f64.ln()) * r as f64).exp() * (1.0 + 1e-12)
    }).count();
    PartitionCount { gamma: g, partitions: parts.len(), n_of_a, violations }
}

/// `Σ_π Π_γ e^{−mΔ(γ)/(2√2)}` by enumeration.
pub fn partition_sum(gamma: &[i64], mass: f64) -> f64 {
    let mut g = gamma.to_vec();
    g.sort_unstable();
    set_partitions(g.len())
        .iter()
        .map(|part| part.iter().map(|b| (-mass * (g[*b.last().expect("block")] - g[b[0]]) as f64 / (2.0 * SQRT_2)).exp()).product::<f64>())
        .sum()
}

/// `(c₁, c₂)` of the combinatoric bound, `None` while the geometric series diverges.
pub fn combinatoric_constants(mass: f64) -> Option<(f64, f64)> {
    let rho = 4.0 * std::f64::consts::E * (-mass / (2.0 * SQRT_2)).exp();
    (rho < 1.0).then(|| (1.0 / (2.0 * (1.0 - rho)), 2f64.ln()))
}

/// Exhaustive combinatorics over subsets of `0..span` of size at most `max_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinatoricsReport {
    pub sets: usize,
    pub partitions: usize,
    pub n_of_a_checks: usize,
    pub n_of_a_violations: usize,
    pub sequence_checks: usize,
    pub sequence_violations: usize,
    /// `(m, worst ratio of partition sum to c₁e^{c₂|Γ|})`.
    pub lemma: Vec<(f64, f64)>,
    pub lemma_violations: usize,
}

pub fn combinatorics(span: i64, max_size: usize, masses: &[f64]) -> CombinatoricsReport {
    let mut rep = CombinatoricsReport {
        sets: 0,
        partitions: 0,
        n_of_a_checks: 0,
        n_of_a_violations: 0,
        sequence_checks: 0,
        sequence_violations: 0,
        lemma: masses.iter().map(|m| (*m, 0.0)).collect(),
        lemma_violations: 0,
    };
    for mask in 1u64..(1 << span) {
        if mask.count_ones() as usize > max_size {
            continue;
        }
        let gamma: Vec<i64> = (0..span).filter(|i| mask >> i & 1 == 1).collect();
        rep.sets += 1;
        let pc = partition_count(&gamma);
        rep.partitions += pc.partitions;
        rep.n_of_a_checks += pc.n_of_a.len();
        rep.n_of_a_violations += pc.violations;
        for (i, m) in masses.iter().enumerate() {
            if let Some((c1, c2)) = combinatoric_constants(*m) {
                let ratio = partition_sum(&gamma, *m) / (c1 * (c2 * gamma.len() as f64).exp());
                rep.lemma[i].1 = rep.lemma[i].1.max(ratio);
                if ratio > 1.0 {
                    rep.lemma_violations += 1;
                }
            }
        }
    }
    for len in 1..=max_size {
        for r in 0..=(4 * span as usize) {
            rep.sequence_checks += 1;
            let bound = 2f64.powi(len as i32) * 2f64.powi(r as i32 - 1);
            if sequence_count(len, r) > bound {
                rep.sequence_violations += 1;
            }
        }
    }
    rep
}

/// Bound diagnostics of the cluster expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// `(window, Y, ln ratio, σ)` for `ln Z^{∂Y}(Λ∖Y) − ln Z(Λ)`.
    pub ratios: Vec<(Region, Region, f64, f64)>,
    /// `max ln(ratio)/|Y|` over all tested pairs.
    pub k_ratio: f64,
    pub ratio_margin_min: f64,
    /// `(m, k₁)` from `ln max|∫∂^ΓF| ≈ −k₁|Γ| + const`.
    pub k1: Vec<(f64, f64)>,
    pub k1_increasing: bool,
    pub combinatorics: CombinatoricsReport,
    /// `(k, ev₀(L), ‖w′‖_p (k!)^q c^k)` with all charges in one unit interval.
    pub primo: Vec<(usize, Estimate, f64)>,
    pub primo_holds: bool,
}

/// Runs the four bound diagnostics at desk scale.
pub fn bound_suite(p: &ThermalParams, lambda: f64, n_max: usize, cfg: &RunConfig) -> Result<BoundReport> {
    let y0 = Region::new(0, 1)?;
    // (i) ratio bound with the cumulant form of ln Z
    let mut ratios = Vec::new();
    for window in [Region::new(-2, 2)?, Region::new(-3, 3)?] {
        let free = CovarianceModel::Thermal(*p);
        let lz = log_partition(p, lambda, &free, &[(window.lo as f64, window.hi as f64)], n_max, cfg, &format!("bound/{window}"))?;
        let bonds = window.interior_bonds();
        let mut ys: Vec<Region> = enumerate_cluster_terms(y0, window)?.into_iter().map(|t| t.y).collect();
        ys.dedup();
        for y in ys {
            let boundary = BondSet::from_unsorted([y.lo, y.hi].into_iter().filter(|b| bonds.contains(*b)).collect());
            let w = CovarianceModel::Dirichlet { params: *p, bonds: boundary, n_images: cfg.n_images };
            let segs = [(window.lo as f64, y.lo as f64), (y.hi as f64, window.hi as f64)];
            let lo = log_partition(p, lambda, &w, &segs, n_max, cfg, &format!("bound/{window}/{y}"))?;
            ratios.push((window, y, lo.value - lz.value, lo.std_error.hypot(lz.std_error)));
        }
    }
    let k_ratio = ratios.iter().map(|(_, y, l, _)| l / y.len() as f64).fold(f64::NEG_INFINITY, f64::max);
    let ratio_margin_min = ratios.iter().map(|(_, y, l, _)| k_ratio * y.len() as f64 - l).fold(f64::INFINITY, f64::min);

    // (ii) decay of the σ-integrated derivatives with |Γ|
    let src = TestSource::tent(0.0, 1.0, 5, 1.0, 1.0)?;
    let window = Region::new(-2, 2)?;
    let mut k1 = Vec::new();
    for m in [2.0, 4.0, 8.0] {
        let pm = p.with_mass(m);
        let terms = enumerate_cluster_terms(y0, window)?;
        let nodes = src.nodes();
        let mut best: BTreeMap<usize, f64> = BTreeMap::new();
        for t in &terms {
            let iv = InterpolationVector::new(t.gamma.clone(), vec![1.0; t.gamma.len()], t.frozen.clone())?;
            let corners: Vec<CovarianceModel> = (0..(1u64 << t.gamma.len()))
                .map(|mask| CovarianceModel::Dirichlet { params: pm, bonds: corner_bonds(&iv, mask), n_images: cfg.n_images })
                .collect();
            let domain = Domain::new(vec![(t.y.lo as f64, t.y.hi as f64)]);
            let job = OrderJob { p: &pm, lambda, corners: &corners, nodes: &nodes, domain: &domain, sigma_tol: SIGMA_TOL };
            let (e, _) = job.run(1, cfg, stream_id(&format!("bound/k1/{m}/{}", t.id())))?;
            let v = e.value().norm() + 2.0 * e.std_error();
            let slot = best.entry(t.gamma.len()).or_insert(0.0);
            *slot = slot.max(v);
        }
        let pts: Vec<(f64, f64)> = best.iter().filter(|(_, v)| **v > 0.0).map(|(k, v)| (*k as f64, v.ln())).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|q| q.0).sum::<f64>() / n;
        let my = pts.iter().map(|q| q.1).sum::<f64>() / n;
        let slope = pts.iter().map(|q| (q.0 - mx) * (q.1 - my)).sum::<f64>() / pts.iter().map(|q| (q.0 - mx).powi(2)).sum::<f64>();
        k1.push((m, -slope));
    }
    let k1_increasing = k1.windows(2).all(|w| w[1].1 > w[0].1);

    // (iii) combinatorics
    let comb = combinatorics(8, 5, &[8.0, 10.0, 12.0]);

    // (iv) k charges in (0, β) × (0, 1): the worst sign pattern
    let mut primo = Vec::new();
    let c = 2.0 * std::f64::consts::E;
    let (pp, q) = (2.0, 2.0);
    let w = CovarianceModel::Thermal(*p);
    for k in 1..=4usize {
        let mut worst = Estimate::exact(0.0);
        for signs_mask in 0..(1u64 << k) {
            let signs = sign_vector(k, signs_mask);
            let vol = (p.beta).powi(k as i32);
            let mo = sample_moments(cfg.seed, stream_id(&format!("primo/{k}/{signs_mask}")), cfg.samples, 1, |rng, out| {
                let u: Vec<f64> = (0..k).map(|_| p.beta * rng.random::<f64>()).collect();
                let x: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
                if let Ok(kd) = KernelData::new(&w, &[], &u, &x) {
                    out[0] = vol * kd.exponent(p, &signs, full_mask(k), false).re.exp();
                }
            });
            if mo.mean[0] > worst.value {
                worst = Estimate::new(mo.mean[0], mo.std_error(0));
            }
        }
        let norm = (p.beta).powf(k as f64 / pp);
        let rhs = norm * factorial(k).powf(q) * c.powi(k as i32);
        primo.push((k, worst, rhs));
    }
    let primo_holds = primo.iter().all(|(_, e, r)| e.value - 3.0 * e.std_error <= *r);
    Ok(BoundReport {
        ratios,
        k_ratio,
        ratio_margin_min,
        k1,
        k1_increasing,
        combinatorics: comb,
        primo,
        primo_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(samples: usize) -> RunConfig {
        RunConfig { samples, n_images: 6, ..RunConfig::default() }
    }

    #[test]
    fn enumeration_matches_hand_count() {
        let terms = enumerate_cluster_terms(Region::new(0, 1).unwrap(), Region::new(-1, 2).unwrap()).unwrap();
        let ys: Vec<(i64, i64)> = terms.iter().map(|t| (t.y.lo, t.y.hi)).collect();
        assert_eq!(ys, vec![(0, 1), (-1, 1), (0, 2), (-1, 2)]);
        assert!(terms[0].gamma.is_empty());
        let wide = enumerate_cluster_terms(Region::new(0, 1).unwrap(), Region::new(-2, 2).unwrap()).unwrap();
        assert_eq!(wide.len(), 6);
        let y0 = Region::new(0, 3).unwrap();
        let many = enumerate_cluster_terms(y0, Region::new(-3, 6).unwrap()).unwrap();
        for t in &many {
            let outside = t.y.interior_bonds().minus(&t.gamma);
            assert!(outside.as_slice().iter().all(|b| *b > y0.lo && *b < y0.hi));
        }
        for k in 1..=9 {
            let count = many.iter().filter(|t| t.y.len() == k).count();
            assert!(count as i64 <= k * (1 << y0.len()));
        }
    }

    #[test]
    fn sigma_quadrature_matches_corner_difference() {
        let g = [
            Complex64::new(0.1, 0.2),
            Complex64::new(-0.3, 0.05),
            Complex64::new(0.4, -0.1),
            Complex64::new(0.2, 0.3),
            Complex64::new(-0.2, 0.1),
            Complex64::new(0.5, 0.0),
            Complex64::new(0.0, -0.4),
            Complex64::new(0.3, 0.2),
        ];
        let s = sigma_integral(&g, 1e-13).unwrap();
        assert!((s.value - corner_difference(&g)).norm() < 1e-12);
    }

    #[test]
    fn first_order_closed_form() {
        let p = ThermalParams::default();
        let h = CutoffFunction::Interval { lo: 0.0, hi: 1.0 };
        let e = generating_term(&p, 0.7, &CovarianceModel::Thermal(p), &TestSource::zero(), &h, 1, &cfg(100)).unwrap();
        assert!((e.re - 0.7 * p.beta / p.hbar).abs() < 1e-14);
    }

    #[test]
    fn pure_phase_source() {
        let p = ThermalParams::default();
        let src = TestSource::tent(0.0, 1.0, 5, 0.0, 1.3).unwrap();
        let v = source_coupling(&p, &src, EuclideanPoint::new(0.3, 0.4), 1.0).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-14);
        let z = source_coupling(&p, &TestSource::zero(), EuclideanPoint::new(0.3, 0.4), 1.0).unwrap();
        assert_eq!(z, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn telescoping_is_exact() {
        let p = ThermalParams::default();
        let src = TestSource::tent(0.0, 1.0, 5, 1.0, 1.0).unwrap();
        let r = telescoping_check(&p, &src, 8, &cfg(1)).unwrap();
        assert!(r.holds, "{r:?}");
    }

    #[test]
    fn linked_and_ursell_small_cases() {
        // two points: r = f12 − f1 − f2 − z12 + 2 with z1 = z2 = 1
        let f = [1.0, 0.9, 0.8, 0.75].map(|v| Complex64::new(v, 0.0));
        let z = [1.0, 1.0, 1.0, 1.3];
        let r = linked_weight(&f, &z);
        assert!((r.re - (0.75 - 0.9 - 0.8 - 1.3 + 2.0)).abs() < 1e-14);
        assert!((ursell_weight(&z) - 0.3).abs() < 1e-14);
        let z3 = [1.0, 1.0, 1.0, 1.2, 1.0, 1.1, 1.05, 1.5];
        // u(123) = z123 − z12 − z13 − z23 + 2
        assert!((ursell_weight(&z3) - (1.5 - 1.2 - 1.1 - 1.05 + 2.0)).abs() < 1e-14);
    }

    #[test]
    fn partitions_of_two() {
        let pc = partition_count(&[0, 1]);
        assert_eq!(pc.partitions, 2);
        assert_eq!(pc.n_of_a, vec![(vec![0, 0], 1, 1.0), (vec![1], 1, 2.0)]);
        assert_eq!(set_partitions(5).len(), 52);
    }

    #[test]
    fn first_order_gap_matches_quadrature() {
        let p = ThermalParams::new(1.0, 2.0);
        let src = TestSource::tent(0.0, 1.0, 5, 1.0, 1.0).unwrap();
        let wins = [Region::new(-1, 2).unwrap(), Region::new(-2, 3).unwrap()];
        let r = adiabatic_scan(&p, 1.0, &src, Region::new(0, 1).unwrap(), &wins, 1, &cfg(20_000)).unwrap();
        let g = r.rows[1].gap.unwrap();
        let q = first_order_gap_quadrature(&p, 1.0, &src, wins[0], wins[1], 24).unwrap();
        assert!((g.re - q.re).abs() < 3.0 * g.re_err, "{g:?} vs {q}");
    }

    #[test]
    fn lambda_zero_scan_is_flat() {
        let p = ThermalParams::default();
        let src = TestSource::tent(0.0, 1.0, 5, 1.0, 1.0).unwrap();
        let wins = [Region::new(-1, 2).unwrap(), Region::new(-2, 3).unwrap()];
        let r = adiabatic_scan(&p, 0.0, &src, Region::new(0, 1).unwrap(), &wins, 2, &cfg(200)).unwrap();
        assert_eq!(r.rows[1].gap.unwrap().value().norm(), 0.0);
        assert_eq!(r.rows[0].value.re, 1.0);
    }
}
