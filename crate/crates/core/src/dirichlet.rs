//! Covariances with Dirichlet data on integer bond sets.
//!
//! A bond set `Γ ⊂ ℤ` cuts the line into components. Within one component
//! the covariance is built from the free thermal kernel by image charges;
//! across components it vanishes identically. The interpolated covariance
//! `C(s)` is the convex sum over subsets of active bonds and is affine in
//! each `s_b`, so its mixed derivatives are exact corner differences.
//!
//! [`bridge_estimator`] is an independent route through the Wiener-measure
//! representation: exponential total time, a periodic heat kernel in `u`,
//! and Brownian bridges in `x` whose bond crossings are resolved exactly.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covariance::{decay_constant, thermal_covariance, thermal_with_du};
use crate::error::{Error, Result};
use crate::mc::{sample_moments, stream_id, Estimate};
use crate::params::{EuclideanPoint, RunConfig, ThermalParams};

/// Largest active bond count accepted by the corner expansion.
pub const MAX_ACTIVE: usize = 14;

/// Sorted, duplicate-free set of integer bonds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct BondSet {
    bonds: Vec<i64>,
}

/// Position of a point relative to a bond set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    OnBond(i64),
    Between(Option<i64>, Option<i64>),
}

impl BondSet {
    pub fn new(bonds: Vec<i64>) -> Result<Self> {
        if bonds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain(format!("bond list {bonds:?} is not strictly increasing")));
        }
        Ok(Self { bonds })
    }

    pub fn from_unsorted(mut bonds: Vec<i64>) -> Self {
        bonds.sort_unstable();
        bonds.dedup();
        Self { bonds }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bonds.is_empty()
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.bonds
    }

    pub fn contains(&self, b: i64) -> bool {
        self.bonds.binary_search(&b).is_ok()
    }

    pub fn union(&self, o: &BondSet) -> BondSet {
        Self::from_unsorted(self.bonds.iter().chain(&o.bonds).copied().collect())
    }

    pub fn minus(&self, o: &BondSet) -> BondSet {
        Self { bonds: self.bonds.iter().copied().filter(|b| !o.contains(*b)).collect() }
    }

    pub fn is_disjoint(&self, o: &BondSet) -> bool {
        self.bonds.iter().all(|b| !o.contains(*b))
    }

    /// Subset selected by the bits of `mask` (bit `i` ↔ `i`-th bond).
    pub fn subset(&self, mask: u64) -> BondSet {
        Self { bonds: self.bonds.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, b)| *b).collect() }
    }

    pub fn component(&self, x: f64) -> Component {
        let idx = self.bonds.partition_point(|b| (*b as f64) < x);
        if idx < self.bonds.len() && self.bonds[idx] as f64 == x {
            return Component::OnBond(self.bonds[idx]);
        }
        let left = if idx > 0 { Some(self.bonds[idx - 1]) } else { None };
        Component::Between(left, self.bonds.get(idx).copied())
    }

    pub fn min(&self) -> Option<i64> {
        self.bonds.first().copied()
    }

    pub fn max(&self) -> Option<i64> {
        self.bonds.last().copied()
    }
}

/// Per-bond interpolation parameters. Active bonds carry `s_b ∈ [0,1]`;
/// `frozen` bonds are held at `s = 0`; every other bond is free (`s = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationVector {
    pub active: BondSet,
    pub s: Vec<f64>,
    pub frozen: BondSet,
}

impl InterpolationVector {
    pub fn new(active: BondSet, s: Vec<f64>, frozen: BondSet) -> Result<Self> {
        if s.len() != active.len() {
            return Err(Error::Domain("one s-value per active bond".into()));
        }
        if s.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain("s-values must lie in [0, 1]".into()));
        }
        if !active.is_disjoint(&frozen) {
            return Err(Error::Domain("active and frozen bonds overlap".into()));
        }
        Ok(Self { active, s, frozen })
    }

    pub fn uniform(active: BondSet, value: f64) -> Self {
        let n = active.len();
        Self { active, s: vec![value; n], frozen: BondSet::empty() }
    }

    pub fn get(&self, b: i64) -> Option<f64> {
        self.active.as_slice().iter().position(|x| *x == b).map(|i| self.s[i])
    }

    pub fn set(&mut self, b: i64, v: f64) {
        if let Some(i) = self.active.as_slice().iter().position(|x| *x == b) {
            self.s[i] = v;
        }
    }
}

/// Image sum with its certified tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageValue {
    pub value: f64,
    pub tail_bound: f64,
}

fn thermal_pair(p: &ThermalParams, u: f64, x: f64, du: bool) -> Result<(f64, f64)> {
    if du {
        thermal_with_du(p, u, x)
    } else {
        Ok((thermal_covariance(p, u, x)?, 0.0))
    }
}

/// `C^b(u, x₁, x₂) = C(u, x₁ − x₂) − C(u, x₁ + x₂ − 2b)` on one side of `b`.
pub fn half_line_covariance(p: &ThermalParams, b: i64, pt1: EuclideanPoint, pt2: EuclideanPoint) -> Result<f64> {
    Ok(half_line(p, b as f64, pt1.u - pt2.u, pt1.x, pt2.x, false)?.0)
}

fn half_line(p: &ThermalParams, b: f64, u: f64, x1: f64, x2: f64, du: bool) -> Result<(f64, f64)> {
    if (x1 - b) * (x2 - b) <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let (d0, d1) = thermal_pair(p, u, x1 - x2, du)?;
    let (r0, r1) = thermal_pair(p, u, x1 + x2 - 2.0 * b, du)?;
    Ok((d0 - r0, d1 - r1))
}

/// Interval image sum on `(a, b)` truncated after `n_images` levels beyond
/// the two nearest reflections.
pub fn interval_covariance(
    p: &ThermalParams,
    a: i64,
    b: i64,
    pt1: EuclideanPoint,
    pt2: EuclideanPoint,
    n_images: usize,
) -> Result<ImageValue> {
    if a >= b {
        return Err(Error::Domain(format!("interval ({a}, {b}) is empty")));
    }
    let (af, bf) = (a as f64, b as f64);
    for x in [pt1.x, pt2.x] {
        if x < af || x > bf {
            return Err(Error::Domain(format!("x = {x} outside ({a}, {b})")));
        }
    }
    if [pt1.x, pt2.x].iter().any(|x| *x == af || *x == bf) {
        return Ok(ImageValue { value: 0.0, tail_bound: 0.0 });
    }
    let v = interval(p, af, bf, pt1.u - pt2.u, pt1.x, pt2.x, n_images, false)?.0;
    let l = bf - af;
    let c = decay_constant(p.beta, l) / p.mass;
    let k = 2.0 * n_images as f64 + 1.0;
    let tail = 4.0 * c * (-p.mass * l * k / SQRT_2).exp() / (-(-2.0 * p.mass * l / SQRT_2).exp_m1());
    Ok(ImageValue { value: v, tail_bound: tail })
}

#[allow(clippy::too_many_arguments)]
fn interval(p: &ThermalParams, a: f64, b: f64, u: f64, x1: f64, x2: f64, levels: usize, du: bool) -> Result<(f64, f64)> {
    let l = b - a;
    let d = x1 - x2;
    let sb = x1 + x2 - 2.0 * b;
    let sa = x1 + x2 - 2.0 * a;
    let (c0, c1) = thermal_pair(p, u, d, du)?;
    let (rb0, rb1) = thermal_pair(p, u, sb, du)?;
    let (ra0, ra1) = thermal_pair(p, u, sa, du)?;
    let (mut s0, mut s1) = (c0 - rb0 - ra0, c1 - rb1 - ra1);
    let scale = c0.abs() + rb0.abs() + ra0.abs();
    for k in 1..=levels {
        let sh = 2.0 * l * k as f64;
        let (p0, p1) = thermal_pair(p, u, d + sh, du)?;
        let (m0, m1) = thermal_pair(p, u, d - sh, du)?;
        let (q0, q1) = thermal_pair(p, u, sb - sh, du)?;
        let (w0, w1) = thermal_pair(p, u, sa + sh, du)?;
        let lv0 = p0 + m0 - q0 - w0;
        s0 += lv0;
        s1 += p1 + m1 - q1 - w1;
        if p0.abs() + m0.abs() + q0.abs() + w0.abs() <= 1e-17 * scale {
            break;
        }
    }
    Ok((s0, s1))
}

/// Covariance with Dirichlet data on `gamma`: zero across bonds, image
/// charges within a component.
pub fn gamma_covariance(
    p: &ThermalParams,
    gamma: &BondSet,
    pt1: EuclideanPoint,
    pt2: EuclideanPoint,
    n_images: usize,
) -> Result<f64> {
    Ok(gamma_eval(p, gamma, pt1.u - pt2.u, pt1.x, pt2.x, n_images, false)?.0)
}

/// `(C^Γ, ∂_u C^Γ)` at time separation `u`.
pub fn gamma_eval(
    p: &ThermalParams,
    gamma: &BondSet,
    u: f64,
    x1: f64,
    x2: f64,
    n_images: usize,
    du: bool,
) -> Result<(f64, f64)> {
    let c1 = gamma.component(x1);
    let c2 = gamma.component(x2);
    match (c1, c2) {
        (Component::OnBond(_), _) | (_, Component::OnBond(_)) => Ok((0.0, 0.0)),
        (Component::Between(l1, r1), Component::Between(l2, r2)) => {
            if l1 != l2 || r1 != r2 {
                return Ok((0.0, 0.0));
            }
            match (l1, r1) {
                (None, None) => thermal_pair(p, u, x1 - x2, du),
                (Some(b), None) | (None, Some(b)) => half_line(p, b as f64, u, x1, x2, du),
                (Some(a), Some(b)) => interval(p, a as f64, b as f64, u, x1, x2, n_images, du),
            }
        }
    }
}

/// Dirichlet bond set of the corner `mask` of the active bonds: bit set
/// means `s_b = 1` (free), clear means Dirichlet.
pub fn corner_bonds(s: &InterpolationVector, mask: u64) -> BondSet {
    let full = (1u64 << s.active.len()) - 1;
    s.active.subset(full & !mask).union(&s.frozen)
}

/// `C(s) = Σ_{Γ ⊆ active} Π_{Γ} s_i Π_{active∖Γ} (1 − s_j) C^{(active∖Γ) ∪ frozen}`.
pub fn interpolated_covariance(
    p: &ThermalParams,
    s: &InterpolationVector,
    pt1: EuclideanPoint,
    pt2: EuclideanPoint,
    n_images: usize,
) -> Result<f64> {
    let n = s.active.len();
    if n > MAX_ACTIVE {
        return Err(Error::Capacity(format!("{n} active bonds exceed the limit {MAX_ACTIVE}")));
    }
    let mut total = 0.0;
    for mask in 0..(1u64 << n) {
        let mut w = 1.0;
        for (i, si) in s.s.iter().enumerate() {
            w *= if mask >> i & 1 == 1 { *si } else { 1.0 - si };
        }
        if w == 0.0 {
            continue;
        }
        total += w * gamma_covariance(p, &corner_bonds(s, mask), pt1, pt2, n_images)?;
    }
    Ok(total)
}

/// Exact `∂^Γ C(s)` by the corner formula `Σ_σ (−1)^{|Γ|−|σ|} C(s; s_Γ ← σ)`.
pub fn partial_gamma_covariance(
    p: &ThermalParams,
    s: &InterpolationVector,
    gamma: &BondSet,
    pt1: EuclideanPoint,
    pt2: EuclideanPoint,
    n_images: usize,
) -> Result<f64> {
    if gamma.as_slice().iter().any(|b| !s.active.contains(*b)) {
        return Err(Error::Domain("derivative bonds must be active".into()));
    }
    let k = gamma.len();
    let mut total = 0.0;
    for mask in 0..(1u64 << k) {
        let mut sv = s.clone();
        for (i, b) in gamma.as_slice().iter().enumerate() {
            sv.set(*b, (mask >> i & 1) as f64);
        }
        let sign = if (k - mask.count_ones() as usize) % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * interpolated_covariance(p, &sv, pt1, pt2, n_images)?;
    }
    Ok(total)
}

/// `D_Γ C`: paths touching every bond of `Γ`, all other bonds free.
pub fn dgamma_covariance(
    p: &ThermalParams,
    gamma: &BondSet,
    pt1: EuclideanPoint,
    pt2: EuclideanPoint,
    n_images: usize,
) -> Result<f64> {
    let s = InterpolationVector::uniform(gamma.clone(), 1.0);
    partial_gamma_covariance(p, &s, gamma, pt1, pt2, n_images)
}

/// Periodic heat kernel `W(T, u)` of standard Brownian motion on the circle
/// of length β. Image sum for short times, Fourier sum for long times.
pub fn theta_weight(beta: f64, t: f64, u: f64) -> f64 {
    let u = u.rem_euclid(beta);
    if t < 0.25 * beta * beta {
        let norm = 1.0 / (2.0 * PI * t).sqrt();
        let mut s = (-u * u / (2.0 * t)).exp();
        let mut k = 1.0;
        loop {
            let a = (-(u + k * beta).powi(2) / (2.0 * t)).exp();
            let b = (-(u - k * beta).powi(2) / (2.0 * t)).exp();
            s += a + b;
            if a + b <= 1e-14 * s || k > 1e4 {
                break;
            }
            k += 1.0;
        }
        s * norm
    } else {
        let w = 2.0 * PI / beta;
        let mut s = 1.0;
        let mut n = 1.0;
        loop {
            let wn = w * n;
            let a = 2.0 * (-0.5 * wn * wn * t).exp();
            s += a * (wn * u).cos();
            if a < 1e-14 * s.abs().max(1e-300) {
                break;
            }
            n += 1.0;
        }
        s / beta
    }
}

/// Probability that a Brownian bridge from `z0` to `z1` over time `t` stays
/// inside `(l, r)`; `None` ends are open.
pub fn bridge_stay_probability(z0: f64, z1: f64, t: f64, l: Option<f64>, r: Option<f64>) -> f64 {
    match (l, r) {
        (None, None) => 1.0,
        (Some(a), None) => {
            if z0 <= a || z1 <= a {
                0.0
            } else {
                -(-2.0 * (z0 - a) * (z1 - a) / t).exp_m1()
            }
        }
        (None, Some(b)) => {
            if z0 >= b || z1 >= b {
                0.0
            } else {
                -(-2.0 * (b - z0) * (b - z1) / t).exp_m1()
            }
        }
        (Some(a), Some(b)) => {
            if z0 <= a || z1 <= a || z0 >= b || z1 >= b {
                return 0.0;
            }
            let len = b - a;
            let d = z1 - z0;
            if t < len * len {
                // image series relative to the free Gaussian
                let rel = |y: f64| (-(y * y - d * d) / (2.0 * t)).exp();
                let s0 = z1 + z0 - 2.0 * a;
                let mut s = 1.0 - rel(s0);
                let mut k = 1.0;
                loop {
                    let sh = 2.0 * len * k;
                    let add = rel(d + sh) + rel(d - sh) - rel(s0 + sh) - rel(s0 - sh);
                    s += add;
                    if add.abs() < 1e-16 || k > 200.0 {
                        break;
                    }
                    k += 1.0;
                }
                s.clamp(0.0, 1.0)
            } else {
                // eigenfunction expansion
                let free = (-d * d / (2.0 * t)).exp() / (2.0 * PI * t).sqrt();
                let mut s = 0.0;
                let mut n = 1.0;
                loop {
                    let k = n * PI / len;
                    let e = (-0.5 * k * k * t).exp();
                    s += (k * (z0 - a)).sin() * (k * (z1 - a)).sin() * e;
                    if e < 1e-17 {
                        break;
                    }
                    n += 1.0;
                }
                (2.0 / len * s / free).clamp(0.0, 1.0)
            }
        }
    }
}

/// Probability that the bridge avoids every bond of `avoid`, given knots.
fn avoid_probability(knots: &[f64], dt: f64, avoid: &BondSet) -> f64 {
    let mut prob = 1.0;
    for w in knots.windows(2) {
        let (l, r) = match avoid.component(w[0]) {
            Component::OnBond(_) => return 0.0,
            Component::Between(l, r) => (l.map(|v| v as f64), r.map(|v| v as f64)),
        };
        prob *= bridge_stay_probability(w[0], w[1], dt, l, r);
        if prob == 0.0 {
            return 0.0;
        }
    }
    prob
}

/// Bridge estimate with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeResult {
    pub estimate: Estimate,
    pub knots: usize,
    pub warning: Option<String>,
}

/// Interior bridge knots used by [`bridge_estimator`].
pub const BRIDGE_KNOTS: usize = 8;

/// Monte-Carlo estimate of the path-integral covariance with bonds in
/// `touch` required to be hit and bonds in `avoid` forbidden.
///
/// `T ~ Exp(m²/2)`; each sample contributes
/// `(1/m²) W(T, u) φ_T(x − y) P(constraints | knots)`, where the
/// conditional probability is exact per bridge segment and touch
/// constraints enter by inclusion–exclusion over avoid events.
pub fn bridge_estimator(
    p: &ThermalParams,
    touch: &BondSet,
    avoid: &BondSet,
    pt1: EuclideanPoint,
    pt2: EuclideanPoint,
    cfg: &RunConfig,
) -> Result<BridgeResult> {
    if !touch.is_disjoint(avoid) {
        return Err(Error::Domain("touch and avoid sets overlap".into()));
    }
    if touch.len() > MAX_ACTIVE {
        return Err(Error::Capacity("too many touch bonds".into()));
    }
    let (x, y) = (pt1.x, pt2.x);
    let u = pt1.u - pt2.u;
    let m2 = p.mass * p.mass;
    let nt = touch.len();
    let subsets: Vec<(f64, BondSet)> = (0..(1u64 << nt))
        .map(|mask| {
            let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            (sign, avoid.union(&touch.subset(mask)))
        })
        .collect();
    let stream = stream_id("bridge") ^ (x.to_bits().rotate_left(17)) ^ y.to_bits() ^ u.to_bits().rotate_left(41);
    let mom = sample_moments(cfg.seed, stream, cfg.samples, 1, |rng, out| {
        let e: f64 = rng.random::<f64>();
        let t = -(-e).ln_1p() * 2.0 / m2;
        let w = theta_weight(p.beta, t, u);
        let k = (-(x - y).powi(2) / (2.0 * t)).exp() / (2.0 * PI * t).sqrt();
        // bridge knots
        let steps = BRIDGE_KNOTS + 1;
        let dt = t / steps as f64;
        let mut knots = Vec::with_capacity(steps + 1);
        knots.push(x);
        let mut z = x;
        for i in 1..steps {
            let remaining = t - dt * (i - 1) as f64;
            let mean = z + (y - z) * dt / remaining;
            let var = dt * (remaining - dt) / remaining;
            let g: f64 = StandardNormal.sample(rng);
            z = mean + var.sqrt() * g;
            knots.push(z);
        }
        knots.push(y);
        let mut prob = 0.0;
        for (sign, set) in &subsets {
            prob += sign * avoid_probability(&knots, dt, set);
        }
        out[0] = w * k * prob / m2;
    });
    let estimate = Estimate::new(mom.mean[0], mom.std_error(0));
    let warning = if estimate.std_error > 0.05 * estimate.value.abs() {
        Some(format!("relative standard error {:.3} above 5%", estimate.std_error / estimate.value.abs().max(1e-300)))
    } else {
        None
    };
    Ok(BridgeResult { estimate, knots: BRIDGE_KNOTS, warning })
}

/// Distance of `x` to the nearest bond.
pub fn distance_to(gamma: &BondSet, x: f64) -> f64 {
    gamma.as_slice().iter().map(|b| (x - *b as f64).abs()).fold(f64::INFINITY, f64::min)
}

/// Largest gap between bonds of `Γ` (its diameter).
pub fn bond_diameter(gamma: &BondSet) -> f64 {
    match (gamma.min(), gamma.max()) {
        (Some(a), Some(b)) => (b - a) as f64,
        _ => 0.0,
    }
}

/// Right-hand side of the `D_Γ C` decay bound without its constant.
pub fn dgamma_envelope(p: &ThermalParams, gamma: &BondSet, x: f64, y: f64) -> f64 {
    let r = p.mass / SQRT_2;
    (-r * bond_diameter(gamma)).exp() * (-r * distance_to(gamma, x)).exp() * (-r * distance_to(gamma, y)).exp() / p.mass
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DGammaReport {
    pub constant: f64,
    pub values: Vec<f64>,
    pub margins: Vec<f64>,
    pub violations: usize,
}

/// Smallest `c` with `|D_Γ C| ≤ c·envelope` on the calibration pairs.
pub fn calibrate_dgamma_constant(
    p: &ThermalParams,
    gamma: &BondSet,
    pairs: &[(EuclideanPoint, EuclideanPoint)],
    n_images: usize,
) -> Result<f64> {
    let mut c: f64 = 0.0;
    for (a, b) in pairs {
        let v = dgamma_covariance(p, gamma, *a, *b, n_images)?;
        c = c.max(v.abs() / dgamma_envelope(p, gamma, a.x, b.x));
    }
    Ok(c)
}

/// Margins `c·envelope − |D_Γ C|` for the given constant.
pub fn dgamma_bound_report(
    p: &ThermalParams,
    gamma: &BondSet,
    pairs: &[(EuclideanPoint, EuclideanPoint)],
    constant: f64,
    n_images: usize,
) -> Result<DGammaReport> {
    if gamma.is_empty() {
        return Err(Error::Domain("bound needs at least one bond".into()));
    }
    let mut values = Vec::new();
    let mut margins = Vec::new();
    for (a, b) in pairs {
        let v = dgamma_covariance(p, gamma, *a, *b, n_images)?;
        margins.push(constant * dgamma_envelope(p, gamma, a.x, b.x) - v.abs());
        values.push(v);
    }
    let violations = margins.iter().filter(|m| **m < 0.0).count();
    Ok(DGammaReport { constant, values, margins, violations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(u: f64, x: f64) -> EuclideanPoint {
        EuclideanPoint::new(u, x)
    }

    #[test]
    fn components() {
        let g = BondSet::new(vec![0, 3]).unwrap();
        assert_eq!(g.component(1.0), Component::Between(Some(0), Some(3)));
        assert_eq!(g.component(-2.0), Component::Between(None, Some(0)));
        assert_eq!(g.component(3.0), Component::OnBond(3));
        assert!(BondSet::new(vec![2, 1]).is_err());
    }

    #[test]
    fn half_line_example() {
        let p = ThermalParams::new(2.0, 1.0);
        let v = half_line_covariance(&p, 0, pt(1.0, 1.0), pt(0.0, 2.0)).unwrap();
        let e = thermal_covariance(&p, 1.0, -1.0).unwrap() - thermal_covariance(&p, 1.0, 3.0).unwrap();
        assert!((v - e).abs() < 1e-15);
        assert_eq!(half_line_covariance(&p, 0, pt(0.5, -1.0), pt(0.0, 2.0)).unwrap(), 0.0);
        assert!(half_line_covariance(&p, 0, pt(0.5, 0.0), pt(0.0, 2.0)).unwrap().abs() < 1e-15);
    }

    #[test]
    fn dispatch_matches_direct_formulas() {
        let p = ThermalParams::new(1.0, 2.0);
        let g = BondSet::new(vec![0, 3]).unwrap();
        let a = pt(0.3, 1.0);
        let b = pt(0.0, 2.0);
        let d = gamma_covariance(&p, &g, a, b, 12).unwrap();
        let i = interval_covariance(&p, 0, 3, a, b, 12).unwrap();
        assert_eq!(d, i.value);
        let free = gamma_covariance(&p, &BondSet::empty(), a, b, 12).unwrap();
        assert_eq!(free, thermal_covariance(&p, 0.3, -1.0).unwrap());
        assert_eq!(gamma_covariance(&p, &BondSet::new(vec![0]).unwrap(), pt(0.1, -1.0), pt(0.0, 1.0), 4).unwrap(), 0.0);
    }

    #[test]
    fn interval_truncation_is_certified() {
        let p = ThermalParams::new(1.0, 2.0);
        let a = pt(0.4, 1.5);
        let b = pt(0.0, 1.5);
        let v0 = interval_covariance(&p, 0, 3, a, b, 0).unwrap();
        let v5 = interval_covariance(&p, 0, 3, a, b, 5).unwrap();
        assert!((v0.value - v5.value).abs() <= v0.tail_bound);
        assert!((v0.value - v5.value).abs() < (-2.0 * SQRT_2 * 3.0f64).exp());
    }

    #[test]
    fn theta_routes_agree() {
        let beta = 1.3;
        for &u in &[0.0, 0.2, 0.9] {
            let t = 0.25 * beta * beta;
            let a = theta_weight(beta, t * 0.999_999, u);
            let b = theta_weight(beta, t * 1.000_001, u);
            assert!((a - b).abs() < 1e-5 * a);
        }
    }

    #[test]
    fn stay_probability_routes_agree() {
        let (a, b) = (0.0, 1.0);
        for &(z0, z1) in &[(0.3, 0.6), (0.1, 0.9), (0.5, 0.5)] {
            let l = 1.0;
            let lo = bridge_stay_probability(z0, z1, l * 0.9999, Some(a), Some(b));
            let hi = bridge_stay_probability(z0, z1, l * 1.0001, Some(a), Some(b));
            assert!((lo - hi).abs() < 1e-3 * lo.max(1e-12), "{z0} {z1}: {lo} {hi}");
        }
    }

    #[test]
    fn interpolation_corners_and_midpoint() {
        let p = ThermalParams::new(1.0, 2.0);
        let act = BondSet::new(vec![0, 2]).unwrap();
        let a = pt(0.2, 0.7);
        let b = pt(0.0, 1.4);
        let s1 = InterpolationVector::uniform(act.clone(), 1.0);
        let s0 = InterpolationVector::uniform(act.clone(), 0.0);
        let free = interpolated_covariance(&p, &s1, a, b, 10).unwrap();
        assert_eq!(free, thermal_covariance(&p, 0.2, -0.7).unwrap());
        let dir = interpolated_covariance(&p, &s0, a, b, 10).unwrap();
        assert_eq!(dir, gamma_covariance(&p, &act, a, b, 10).unwrap());
        let mut sh = s1.clone();
        sh.set(0, 0.5);
        let mut sz = s1.clone();
        sz.set(0, 0.0);
        let mid = interpolated_covariance(&p, &sh, a, b, 10).unwrap();
        let lo = interpolated_covariance(&p, &sz, a, b, 10).unwrap();
        assert!((mid - 0.5 * (free + lo)).abs() < 1e-12);
    }

    #[test]
    fn bridge_without_constraints_matches_covariance() {
        let p = ThermalParams::new(1.0, 1.5);
        let cfg = RunConfig::default().with_samples(40_000);
        let r = bridge_estimator(&p, &BondSet::empty(), &BondSet::empty(), pt(0.3, 0.2), pt(0.0, 0.9), &cfg).unwrap();
        let c = thermal_covariance(&p, 0.3, -0.7).unwrap();
        assert!((r.estimate.value - c).abs() < 4.0 * r.estimate.std_error, "{:?} vs {c}", r.estimate);
    }

    #[test]
    fn reflection_identity_for_exterior_points() {
        let p = ThermalParams::new(1.0, 1.0);
        let g = BondSet::new(vec![0, 1]).unwrap();
        let x = pt(0.3, -0.5);
        let y = pt(0.0, 0.4);
        let d = dgamma_covariance(&p, &g, x, y, 12).unwrap();
        let refl = thermal_covariance(&p, 0.3, -0.5 - (2.0 - 0.4)).unwrap();
        assert!((d - refl).abs() < 1e-13, "{d} vs {refl}");
        let y2 = pt(0.0, 1.7);
        let d2 = dgamma_covariance(&p, &g, x, y2, 12).unwrap();
        assert!((d2 - thermal_covariance(&p, 0.3, -2.2).unwrap()).abs() < 1e-13);
    }
}
