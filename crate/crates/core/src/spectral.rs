//! The comparison kernel `𝓦 = (𝓗^μ_0 − 𝓗_m)Ω` and the constant `K = ‖𝓦̂‖₁`.
//!
//! The kernel is sampled in null coordinates `u = t − s`, `v = t + s`, where
//! `x² = −uv` and the window is a product `ψ(u)ψ(v)`. With the transform
//! normalised so that `𝓦(x) = ∫ 𝓦̂(k) e^{−ik·x} d²k`, the grid value of
//! `‖𝓦̂‖₁` is `N^{−2} Σ |DFT|`, independent of the linear coordinates used.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::covariance::hadamard_difference;
use crate::error::{Error, Result};
use crate::params::ThermalParams;
use crate::special::sine_integral;

/// Smooth plateau `Ω(u, v) = ψ(u)ψ(v)` with `ψ ≡ 1` on `|y| ≤ 2μ` and a
/// mollifier ramp of length `width` beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowFunction {
    pub mu: f64,
    pub width: f64,
}

fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

impl WindowFunction {
    pub fn new(mu: f64) -> Self {
        Self { mu, width: mu }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.width > 0.0) || !self.mu.is_finite() || !self.width.is_finite() {
            return Err(Error::Domain(format!("window needs μ > 0 and width > 0, got {self:?}")));
        }
        Ok(())
    }

    pub fn profile(&self, y: f64) -> f64 {
        let plateau = 2.0 * self.mu;
        smooth_step(1.0 - (y.abs() - plateau) / self.width)
    }

    pub fn value(&self, u: f64, v: f64) -> f64 {
        self.profile(u) * self.profile(v)
    }

    /// `Ω` vanishes for `|u|` or `|v|` beyond this.
    pub fn support_half_width(&self) -> f64 {
        2.0 * self.mu + self.width
    }
}

/// Periodic square lattice in `(u, v)` with `points_per_axis` nodes per
/// axis covering `[−extent, extent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullGrid {
    pub extent: f64,
    pub points_per_axis: usize,
}

impl NullGrid {
    pub fn new(extent: f64, points_per_axis: usize) -> Result<Self> {
        if !points_per_axis.is_power_of_two() || points_per_axis < 8 {
            return Err(Error::Domain(format!("points per axis must be a power of two ≥ 8, got {points_per_axis}")));
        }
        if !(extent > 0.0) {
            return Err(Error::Domain("grid extent must be positive".into()));
        }
        Ok(Self { extent, points_per_axis })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / self.points_per_axis as f64
    }

    /// Coordinate of array index `i` in FFT order (origin at index 0).
    pub fn coord(&self, i: usize) -> f64 {
        let n = self.points_per_axis;
        let j = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
        j * self.spacing()
    }
}

/// Kernel samples in FFT order, row index `u`, column index `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrid {
    pub grid: NullGrid,
    pub values: Vec<f64>,
}

impl KernelGrid {
    pub fn at(&self, iu: usize, iv: usize) -> f64 {
        self.values[iu * self.grid.points_per_axis + iv]
    }
}

fn check_resolution(win: &WindowFunction, grid: &NullGrid) -> Result<()> {
    win.validate()?;
    // at least 8 nodes across a tenth of the plateau width 2μ
    if grid.spacing() > 2.0 * win.mu / 80.0 {
        return Err(Error::Refinement {
            msg: format!("spacing {} does not resolve the light-cone logarithms (need ≤ {})", grid.spacing(), win.mu / 40.0),
            curve: vec![],
        });
    }
    if grid.extent < win.support_half_width() {
        return Err(Error::Domain(format!(
            "grid extent {} does not cover the window support {}",
            grid.extent,
            win.support_half_width()
        )));
    }
    Ok(())
}

/// Samples of `(𝓗^μ_0 − 𝓗_m)Ω` on the null grid. Nodes on the light cone
/// take the continuous cone value.
pub fn comparison_kernel(p: &ThermalParams, win: &WindowFunction, grid: &NullGrid) -> Result<KernelGrid> {
    check_resolution(win, grid)?;
    let n = grid.points_per_axis;
    let half = win.support_half_width();
    let coords: Vec<f64> = (0..n).map(|i| grid.coord(i)).collect();
    let prof: Vec<f64> = coords.iter().map(|&y| win.profile(y)).collect();
    let mut values = vec![0.0; n * n];
    // 𝓦 depends on u, v through uv and the two profiles, so the
    // non-negative quadrant determines the rest
    let quadrant: Vec<usize> = (0..=n / 2).filter(|&i| coords[i].abs() < half).collect();
    let mirror = |i: usize| (n - i) % n;
    for &iu in &quadrant {
        for &iv in &quadrant {
            let (u, v) = (coords[iu], coords[iv]);
            let w = prof[iu] * prof[iv];
            if w == 0.0 {
                continue;
            }
            let t = 0.5 * (u + v);
            let s = 0.5 * (v - u);
            let pos = w * hadamard_difference(p, t, s);
            // (u, v) and (−u, −v) share x²; (u, −v) and (−u, v) flip its sign
            let t2 = 0.5 * (u - v);
            let s2 = -0.5 * (u + v);
            let neg = w * hadamard_difference(p, t2, s2);
            for (a, b, val) in [(iu, iv, pos), (mirror(iu), mirror(iv), pos), (iu, mirror(iv), neg), (mirror(iu), iv, neg)] {
                values[a * n + b] = val;
            }
        }
    }
    Ok(KernelGrid { grid: *grid, values })
}

/// Positive/negative split of the sampled transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSplit {
    /// `‖𝓦̂‖₁`.
    pub w_norm: f64,
    pub p_norm: f64,
    pub n_norm: f64,
    /// `𝓦(0) = ∫ 𝓦̂`, a lower bound for `K`.
    pub w_origin: f64,
    pub max_im_over_re: f64,
    /// `|Σ|𝓦|² − N^{−2}Σ|DFT|²| / Σ|𝓦|²`.
    pub parseval_rel: f64,
}

fn fft2(values: &[f64], n: usize) -> Vec<Complex64> {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut buf);
    // transpose, then the column pass as rows
    let mut tr = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            tr[j * n + i] = buf[i * n + j];
        }
    }
    fft.process(&mut tr);
    tr
}

pub fn spectral_split(kernel: &KernelGrid) -> SpectralSplit {
    let n = kernel.grid.points_per_axis;
    let hat = fft2(&kernel.values, n);
    let norm = 1.0 / (n * n) as f64;
    let (mut pn, mut nn, mut origin, mut e2) = (0.0, 0.0, 0.0, 0.0);
    let (mut max_re, mut max_im): (f64, f64) = (0.0, 0.0);
    for z in &hat {
        let r = z.re * norm;
        if r > 0.0 {
            pn += r;
        } else {
            nn -= r;
        }
        origin += r;
        max_re = max_re.max(z.re.abs());
        max_im = max_im.max(z.im.abs());
        e2 += z.norm_sqr() * norm;
    }
    let x2: f64 = kernel.values.iter().map(|v| v * v).sum();
    SpectralSplit {
        w_norm: pn + nn,
        p_norm: pn,
        n_norm: nn,
        w_origin: origin,
        max_im_over_re: max_im / max_re.max(1e-300),
        parseval_rel: (x2 - e2).abs() / x2.max(1e-300),
    }
}

/// One grid of the refinement sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementPoint {
    pub points_per_axis: usize,
    pub spacing: f64,
    pub k_raw: f64,
    /// Richardson value from this grid and the previous one.
    pub k_extrapolated: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KConstant {
    pub k: f64,
    pub window: WindowFunction,
    pub extent: f64,
    pub curve: Vec<RefinementPoint>,
    /// Observed convergence order used for extrapolation.
    pub order: f64,
    /// Relative change of the extrapolated value between the two finest grids.
    pub relative_change: f64,
    pub finest: SpectralSplit,
}

/// Grid sizes used by [`k_constant_default`].
pub const DEFAULT_SIZES: [usize; 4] = [512, 1024, 2048, 4096];
/// Extent of the FFT box in units of the window's support half-width.
pub const DEFAULT_PADDING: f64 = 2.0;

/// `K` by Richardson extrapolation over successive halvings of the spacing.
pub fn k_constant(p: &ThermalParams, win: &WindowFunction, extent: f64, sizes: &[usize]) -> Result<KConstant> {
    if sizes.len() < 4 {
        return Err(Error::Domain("need four grids: three to fit the order, one to test it".into()));
    }
    if sizes.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(Error::Domain("grid sizes must double".into()));
    }
    let mut curve = Vec::with_capacity(sizes.len());
    let mut finest = None;
    for &n in sizes {
        let grid = NullGrid::new(extent, n)?;
        let kern = comparison_kernel(p, win, &grid)?;
        let split = spectral_split(&kern);
        curve.push(RefinementPoint { points_per_axis: n, spacing: grid.spacing(), k_raw: split.w_norm, k_extrapolated: None });
        finest = Some(split);
    }
    let raw: Vec<f64> = curve.iter().map(|c| c.k_raw).collect();
    let diffs: Vec<f64> = raw.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let as_curve = |c: &[RefinementPoint]| c.iter().map(|r| (r.spacing, r.k_raw)).collect::<Vec<_>>();
    if diffs.windows(2).any(|d| !(d[1] < d[0])) {
        return Err(Error::Refinement { msg: format!("no Cauchy trend in K: {raw:?}"), curve: as_curve(&curve) });
    }
    let l = raw.len();
    // order from the three coarsest grids, so the finest pair tests it
    let ratio = diffs[0] / diffs[1];
    let order = ratio.log2().clamp(0.5, 4.0);
    let f = 2f64.powf(order) - 1.0;
    for i in 1..l {
        curve[i].k_extrapolated = Some(raw[i] + (raw[i] - raw[i - 1]) / f);
    }
    let k = curve[l - 1].k_extrapolated.expect("set above");
    let prev = curve[l - 2].k_extrapolated.expect("set above");
    Ok(KConstant {
        k,
        window: *win,
        extent,
        curve,
        order,
        relative_change: (k - prev).abs() / k.abs().max(1e-300),
        finest: finest.expect("at least four grids"),
    })
}

/// `K` for the window `Ω` with plateau `D_{2μ}` (`μ` from the parameters).
pub fn k_constant_default(p: &ThermalParams) -> Result<KConstant> {
    let win = WindowFunction::new(p.mu_scale);
    k_constant(p, &win, DEFAULT_PADDING * win.support_half_width(), &DEFAULT_SIZES)
}

/// Imaginary part of `(2π)^{−1/2} ∫_{−b}^{b} v log|v/b| e^{ikv} dv`,
/// namely `√(2/π)(sin bk − Si bk)/k²` (the real part vanishes).
pub fn log_ramp_transform(b: f64, k: f64) -> f64 {
    if k == 0.0 {
        return 0.0;
    }
    let bk = b * k;
    if bk.abs() < 1e-3 {
        // sin x − Si x = −x³/9 + x⁵/600 − …
        let x2 = bk * bk;
        return (2.0 / PI).sqrt() * b * b * bk * (-1.0 / 9.0 + x2 / 600.0);
    }
    (2.0 / PI).sqrt() * (bk.sin() - sine_integral(bk)) / (k * k)
}

/// The log-carrying part of `𝓗^μ_0 − 𝓗_m` at the light cone,
/// `(m²/16π) x² log(|x²|/4)`.
pub fn log_singular_part(p: &ThermalParams, x2: f64) -> f64 {
    if x2 == 0.0 {
        return 0.0;
    }
    p.mass * p.mass / (16.0 * PI) * x2 * (x2.abs() / 4.0).ln()
}

/// Hadamard scale at which the comparison kernel vanishes on the light cone.
pub fn matched_mu(mass: f64) -> f64 {
    (-crate::special::EULER_GAMMA).exp() / mass
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_gk;

    #[test]
    fn window_shape() {
        let w = WindowFunction::new(1.0);
        assert_eq!(w.value(1.9, -2.0), 1.0);
        assert_eq!(w.value(3.0, 0.0), 0.0);
        let y = 2.4;
        assert_eq!(w.profile(y), w.profile(-y));
        assert!(w.profile(y) > 0.0 && w.profile(y) < 1.0);
    }

    #[test]
    fn log_ramp_closed_form_matches_quadrature() {
        let b = 1.3;
        for &k in &[0.01, 0.7, 3.0, 11.0, 40.0] {
            let f = |v: f64| if v == 0.0 { 0.0 } else { v * (v / b).ln() * (k * v).sin() };
            let q = adaptive_gk(f, 0.0, b, 16, 1e-14, 1e-13, 100_000).unwrap().value;
            let num = 2.0 * q / (2.0 * PI).sqrt();
            let exact = log_ramp_transform(b, k);
            assert!((num - exact).abs() < 1e-10, "k = {k}: {num} vs {exact}");
        }
    }

    #[test]
    fn log_coefficient_near_cone() {
        let p = ThermalParams::new(1.0, 2.0);
        let cone = hadamard_difference(&p, 0.0, 0.0);
        let g = |s: f64| (hadamard_difference(&p, 0.0, s.sqrt()) - cone) / s;
        for &s in &[1e-4, 1e-6] {
            let coef = g(s) - g(s / std::f64::consts::E);
            assert!((coef / (p.mass * p.mass / (16.0 * PI)) - 1.0).abs() < 50.0 * s.sqrt(), "{coef}");
        }
    }

    #[test]
    fn kernel_symmetry_and_support() {
        let p = ThermalParams::new(1.0, 2.0);
        let w = WindowFunction::new(1.0);
        let g = NullGrid::new(6.0, 512).unwrap();
        let k = comparison_kernel(&p, &w, &g).unwrap();
        let n = 512;
        for &(a, b) in &[(3usize, 17usize), (40, 200), (100, 7)] {
            assert_eq!(k.at(a, b), k.at((n - a) % n, (n - b) % n));
        }
        // |u| = 4 is outside the support
        let i = (4.0 / g.spacing()) as usize;
        assert_eq!(k.at(i, 0), 0.0);
        let s = spectral_split(&k);
        assert!(s.max_im_over_re < 1e-8);
        assert!(s.parseval_rel < 1e-8);
        assert!((s.p_norm + s.n_norm - s.w_norm).abs() < 1e-10 * s.w_norm);
        assert!(s.w_origin <= s.w_norm);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let p = ThermalParams::new(1.0, 2.0);
        let w = WindowFunction::new(1.0);
        let g = NullGrid::new(9.0, 128).unwrap();
        assert!(matches!(comparison_kernel(&p, &w, &g), Err(Error::Refinement { .. })));
    }
}
