//! The property suite behind `sgt verify all`.
//!
//! Every check is deterministic given the seed, so two runs with the same
//! configuration produce identical reports.

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cluster::{
    adiabatic_scan, bound_suite, cluster_sum, combinatorics, stability_fit, telescoping_check, Region, TestSource,
};
use crate::covariance::{
    decay_bound_report, matsubara_n_for_tolerance, thermal_covariance, thermal_covariance_matsubara,
    thermal_covariance_quadrature, vacuum_limit_bound,
};
use crate::dirichlet::{
    bridge_estimator, dgamma_covariance, gamma_covariance, interpolated_covariance, partial_gamma_covariance, BondSet,
    InterpolationVector,
};
use crate::error::Result;
use crate::gas::{
    cauchy_constant, cauchy_identity_check, charge_imbalance_checks, conditioning_check, convergence_majorant,
    grand_partitions, holder_translation_check, inverse_conditioning_check, jensen_check, partition_sandwich_checks,
    smatrix_coefficient_mc, ConvexFunction, CutoffFunction, FieldConfiguration, GaussianFunctional, InequalityCheck,
    MajorantInputs,
};
use crate::kernel::CovarianceModel;
use crate::mc::{chunk_rng, stream_id, Rng};
use crate::params::{EuclideanPoint, RunConfig, ThermalParams};
use crate::quad::adaptive_gk;
use crate::spectral::{k_constant_default, log_ramp_transform};

/// Outcome of one property check. `value` is the headline number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, value: f64, detail: String) -> Self {
        Self { name: name.to_string(), passed, value, detail }
    }
}

fn rng_for(cfg: &RunConfig, label: &str) -> Rng {
    chunk_rng(cfg.seed, stream_id(label), 0)
}

fn capture(name: &str, r: Result<Check>) -> Check {
    r.unwrap_or_else(|e| Check::new(name, false, f64::NAN, format!("error: {e}")))
}

/// Matsubara sum against momentum quadrature at random points.
pub fn covariance_routes(cfg: &RunConfig, points: usize) -> Result<Check> {
    let mut rng = rng_for(cfg, "verify/routes");
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let p = ThermalParams::new(0.5 + 3.5 * rng.random::<f64>(), 0.5 + 7.5 * rng.random::<f64>());
        let u = p.beta * rng.random::<f64>();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let x = sign * (0.05 + 1.95 * rng.random::<f64>());
        let pt = EuclideanPoint::new(u, x);
        let q = thermal_covariance_quadrature(&p, pt)?;
        let n = matsubara_n_for_tolerance(&p, x, 1e-16 * q.abs().max(1e-300))?;
        let ms = thermal_covariance_matsubara(&p, pt, n)?;
        worst = worst.max((q - ms.value).abs() / q.abs());
    }
    Ok(Check::new("covariance routes", worst < 1e-8, worst, format!("max relative difference {worst:.2e} on {points} points")))
}

fn pde_residual(p: &ThermalParams, u: f64, x: f64, h: f64) -> Result<f64> {
    let c = |du: f64, dx: f64| thermal_covariance(p, u + du, x + dx);
    let c0 = c(0.0, 0.0)?;
    let lap = (c(h, 0.0)? + c(-h, 0.0)? + c(0.0, h)? + c(0.0, -h)? - 4.0 * c0) / (h * h);
    Ok(lap - p.mass * p.mass * c0)
}

/// Reflection symmetries, positivity on a grid and the Helmholtz residual.
pub fn covariance_symmetry(p: &ThermalParams, n: usize) -> Result<Check> {
    let mut sym: f64 = 0.0;
    let mut min_c = f64::INFINITY;
    for i in 0..n {
        let u = p.beta * (i as f64 + 0.5) / n as f64;
        for j in 0..n {
            let x = -10.0 + 20.0 * (j as f64 + 0.5) / n as f64;
            let c = thermal_covariance(p, u, x)?;
            sym = sym.max((c - thermal_covariance(p, u, -x)?).abs());
            sym = sym.max((c - thermal_covariance(p, p.beta - u, x)?).abs());
            min_c = min_c.min(c);
        }
    }
    let mut pde_ok = true;
    let mut pde_ratio: f64 = 0.0;
    for (fu, x) in [(0.5, 0.7), (0.3, 1.5), (0.8, -0.4)] {
        let u = fu * p.beta;
        let r1 = pde_residual(p, u, x, 0.02)?.abs();
        let r2 = pde_residual(p, u, x, 0.01)?.abs();
        pde_ok &= r2 <= 0.3 * r1 + 1e-9;
        pde_ratio = pde_ratio.max(r2 / r1.max(1e-300));
    }
    let passed = sym < 1e-10 && min_c > 0.0 && pde_ok;
    Ok(Check::new(
        "covariance symmetry and positivity",
        passed,
        sym,
        format!("symmetry defect {sym:.2e}, min C {min_c:.3e}, residual ratio h/2:h {pde_ratio:.3}"),
    ))
}

pub fn decay_certificate(p: &ThermalParams, n: usize) -> Result<Check> {
    let cut = 0.5;
    let mut grid = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let u = p.beta * (i as f64 + 0.5) / n as f64;
            let x = cut + 10.0 * (j as f64 + 1.0) / n as f64;
            grid.push(EuclideanPoint::new(u, x));
        }
    }
    let r = decay_bound_report(p, cut, &grid)?;
    Ok(Check::new(
        "decay bound",
        r.violations == 0,
        r.min_margin,
        format!("c_beta {:.4}, min margin {:.3e} on {} points", r.c_beta, r.min_margin, grid.len()),
    ))
}

/// Boundary vanishing, decoupling, affinity and the sign of `∂^Γ C`.
pub fn dirichlet_properties(p: &ThermalParams, cfg: &RunConfig, configurations: usize) -> Result<Check> {
    let ni = cfg.n_images;
    let pt = EuclideanPoint::new;
    let g = BondSet::new(vec![0, 3])?;
    let boundary = gamma_covariance(p, &g, pt(0.3 * p.beta, 1e-10), pt(0.0, 1.5), ni)?.abs();
    let across = gamma_covariance(p, &g, pt(0.3 * p.beta, -0.5), pt(0.0, 1.0), ni)?;
    let mut rng = rng_for(cfg, "verify/dirichlet");
    let pool = [-1i64, 0, 1, 2];
    let mut affine: f64 = 0.0;
    let mut min_d = f64::INFINITY;
    for _ in 0..configurations {
        let active = BondSet::new(pool.to_vec())?;
        let s: Vec<f64> = (0..pool.len()).map(|_| rng.random::<f64>()).collect();
        let iv = InterpolationVector::new(active, s, BondSet::empty())?;
        let a = pt(p.beta * rng.random::<f64>(), -2.0 + 5.0 * rng.random::<f64>());
        let b = pt(0.0, -2.0 + 5.0 * rng.random::<f64>());
        let bond = pool[rng.random_range(0..pool.len())];
        let at = |v: f64| {
            let mut t = iv.clone();
            t.set(bond, v);
            interpolated_covariance(p, &t, a, b, ni)
        };
        let (c0, ch, c1) = (at(0.0)?, at(0.5)?, at(1.0)?);
        affine = affine.max((ch - 0.5 * (c0 + c1)).abs());
        let mask = rng.random_range(1u64..(1 << pool.len()));
        let gamma = iv.active.subset(mask);
        min_d = min_d.min(partial_gamma_covariance(p, &iv, &gamma, a, b, ni)?);
    }
    let passed = boundary < 1e-8 && across == 0.0 && affine < 1e-12 && min_d >= -1e-12;
    Ok(Check::new(
        "dirichlet properties",
        passed,
        min_d,
        format!("boundary {boundary:.1e}, across {across:e}, affinity {affine:.1e}, min corner derivative {min_d:.3e}"),
    ))
}

/// The path-sampling route against image charges.
pub fn bridge_oracle(p: &ThermalParams, cfg: &RunConfig) -> Result<Check> {
    let pt = EuclideanPoint::new;
    let none = BondSet::empty();
    let mut worst: f64 = 0.0;
    for (u, x, y) in [(0.3, 0.2, 0.9), (0.5, -0.4, 0.1), (0.1, 0.0, 1.2)] {
        let u = u * p.beta;
        let r = bridge_estimator(p, &none, &none, pt(u, x), pt(0.0, y), cfg)?;
        let c = thermal_covariance(p, u, x - y)?;
        worst = worst.max((r.estimate.value - c).abs() / r.estimate.std_error.max(1e-300));
    }
    let g = BondSet::new(vec![0, 1])?;
    let (a, b) = (pt(0.3 * p.beta, -0.5), pt(0.0, 0.4));
    let r = bridge_estimator(p, &g, &none, a, b, cfg)?;
    let d = dgamma_covariance(p, &g, a, b, cfg.n_images)?;
    worst = worst.max((r.estimate.value - d).abs() / r.estimate.std_error.max(1e-300));
    let straddle = bridge_estimator(p, &none, &BondSet::new(vec![0])?, pt(0.2 * p.beta, -0.5), pt(0.0, 0.5), cfg)?;
    let passed = worst <= 3.0 && straddle.estimate.value == 0.0;
    Ok(Check::new(
        "bridge oracle",
        passed,
        worst,
        format!("max deviation {worst:.2} sigma, straddling avoid estimate {:e}", straddle.estimate.value),
    ))
}

pub fn cauchy_identity(cfg: &RunConfig, draws: usize) -> Result<Check> {
    let mut rng = rng_for(cfg, "verify/cauchy");
    let mut worst: f64 = 0.0;
    for n in 1..=3 {
        for _ in 0..draws {
            let mut pts = || -> Vec<[f64; 2]> {
                (0..n).map(|_| [2.0 * rng.random::<f64>() - 1.0, 2.0 * rng.random::<f64>() - 1.0]).collect()
            };
            let (xs, ys) = (pts(), pts());
            let (l, r) = cauchy_identity_check(&xs, &ys)?;
            worst = worst.max((l - r).abs() / l.abs());
        }
    }
    Ok(Check::new("cauchy identity", worst < 1e-10, worst, format!("max relative difference {worst:.2e}")))
}

/// `|S_n|` against the assembled majorant, and the stability of `K`.
pub fn majorant_and_k(p: &ThermalParams, lambda: f64, cfg: &RunConfig, n_max: usize) -> Result<(Check, Check)> {
    let k = k_constant_default(p)?;
    let mut si_err: f64 = 0.0;
    let b = 1.3;
    for kk in [0.5, 2.0, 7.0, 25.0] {
        let f = |v: f64| if v == 0.0 { 0.0 } else { v * (v / b).ln() * (kk * v).sin() };
        let q = adaptive_gk(f, 0.0, b, 16, 1e-14, 1e-13, 100_000)?.value;
        let direct = 2.0 * q / (2.0 * std::f64::consts::PI).sqrt();
        si_err = si_err.max((direct - log_ramp_transform(b, kk)).abs());
    }
    let kcheck = Check::new(
        "comparison constant",
        k.relative_change < 0.01 && si_err < 1e-8,
        k.k,
        format!("K {:.6}, relative change {:.2e}, Si transform error {si_err:.1e}", k.k, k.relative_change),
    );
    let mu = p.mu_scale;
    let alpha = p.alpha();
    let pexp = 2.0;
    let c = cauchy_constant(mu, alpha * pexp)?;
    let g = CutoffFunction::Diamond { mu };
    let inputs = MajorantInputs {
        mu,
        alpha,
        p: pexp,
        lambda,
        hbar: p.hbar,
        a: p.coupling_a,
        k_const: k.k,
        g_q_norm: g.lq_norm(pexp / (pexp - 1.0)),
        c_const: c.value,
    };
    let mut worst = f64::NEG_INFINITY;
    for n in 1..=n_max {
        let s = smatrix_coefficient_mc(p, lambda, &g, n, &FieldConfiguration::Zero, cfg)?;
        let bound = convergence_majorant(n, &inputs);
        worst = worst.max((s.value.norm() - 3.0 * s.value.std_error()) / bound);
    }
    let mcheck = Check::new(
        "majorant dominance",
        worst <= 1.0,
        worst,
        format!("max |S_n|/bound {worst:.3e} for n <= {n_max}, C {:.4}", c.value),
    );
    Ok((mcheck, kcheck))
}

/// Appendix inequality suite with paired samples.
pub fn inequality_suite(p: &ThermalParams, cfg: &RunConfig, n_max: usize) -> Result<Vec<InequalityCheck>> {
    let th = CovarianceModel::Thermal(*p);
    let mut out = Vec::new();
    // lattice free field on a periodic chain: w = (−Δ_h + m²)^{−1}/h
    let (sites, h) = (8usize, 0.5);
    let mut op = DMatrix::from_diagonal_element(sites, sites, 2.0 / (h * h) + p.mass * p.mass);
    for i in 0..sites {
        op[(i, (i + 1) % sites)] -= 1.0 / (h * h);
        op[((i + 1) % sites, i)] -= 1.0 / (h * h);
    }
    let gram = op.try_inverse().ok_or_else(|| crate::error::Error::Degenerate("lattice operator".into()))? / h;
    let cos = GaussianFunctional::CosineSum { coeffs: vec![0.4; sites], a: p.coupling_a };
    let lin = GaussianFunctional::Linear(vec![1.0; sites]);
    for (name, functional, f) in [
        ("Jensen truncated exp", &cos, ConvexFunction::TruncatedExp(n_max)),
        ("Jensen square", &lin, ConvexFunction::Square),
    ] {
        let r = jensen_check(&gram, p.hbar, functional, f, cfg)?;
        out.push(InequalityCheck::new(name, crate::mc::Estimate::exact(r.f_mean), r.mean_f, r.gap));
    }
    let rect = CutoffFunction::Rect { t: (0.0, p.beta.min(1.0)), s: (-1.0, 1.0) };
    let dir = CovarianceModel::Dirichlet { params: *p, bonds: BondSet::new(vec![0])?, n_images: cfg.n_images };
    let cond = conditioning_check(p, &th, &dir, &rect, n_max, cfg)?;
    out.push(cond.total);
    let vac = CovarianceModel::Vacuum(*p);
    let line = CutoffFunction::Interval { lo: 0.0, hi: 2.0 };
    let inv = inverse_conditioning_check(p, &th, &vac, &line, vacuum_limit_bound(p), n_max, cfg)?;
    out.extend(inv.z_level);
    out.push(inv.xi_level);
    let gp = grand_partitions(p, &th, &rect, 1.0, n_max, cfg)?;
    out.extend(partition_sandwich_checks(&gp));
    out.extend(charge_imbalance_checks(p, &th, &rect, n_max, cfg));
    out.extend(holder_translation_check(p, &th, &[[0.0, 0.0], [0.0, 1.0]], cfg)?.checks);
    Ok(out)
}

pub fn cluster_identity(lambda: f64, cfg: &RunConfig, masses: &[f64]) -> Result<Check> {
    let src = TestSource::tent(0.0, 1.0, 5, 1.0, 1.0)?;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for &m in masses {
        let p = ThermalParams::new(1.0, m);
        let s = cluster_sum(&p, lambda, &src, Region::new(0, 1)?, Region::new(-2, 2)?, 2, cfg)?;
        let z = s.identity_gap.value().norm() / s.identity_gap.std_error().max(1e-14);
        worst = worst.max(z);
        parts.push(format!("m={m}: {z:.2} sigma"));
    }
    let tel = telescoping_check(&ThermalParams::default(), &src, 8, cfg)?;
    Ok(Check::new(
        "cluster identity",
        worst <= 3.0 && tel.holds,
        worst,
        format!("{}; telescoping error {:.1e}", parts.join(", "), tel.max_abs_error),
    ))
}

pub fn adiabatic_trend(lambda: f64, cfg: &RunConfig) -> Result<Check> {
    let p = ThermalParams::new(1.0, 4.0);
    let src = TestSource::tent(0.0, 1.0, 5, 1.0, 1.0)?;
    let windows: Vec<Region> = (1..=4).map(|k| Region::new(-k, k + 1)).collect::<Result<_>>()?;
    let r = adiabatic_scan(&p, lambda, &src, Region::new(0, 1)?, &windows, 2, cfg)?;
    let last = r.rows.last().and_then(|row| row.gap).map(|g| g.value().norm()).unwrap_or(f64::NAN);
    Ok(Check::new(
        "adiabatic trend",
        r.monotone && r.converged,
        last,
        format!("monotone {}, converged {}, final gap {last:.2e}", r.monotone, r.converged),
    ))
}

pub fn stability(p: &ThermalParams, lambda: f64, cfg: &RunConfig) -> Result<Check> {
    let r = stability_fit(p, lambda, &[1, 2, 4, 8], 2, cfg)?;
    Ok(Check::new(
        "stability bound",
        r.holds,
        r.relative_residual,
        format!("slope {:.5}, relative residual {:.2e}", r.slope, r.relative_residual),
    ))
}

pub fn combinatorics_check() -> Check {
    let r = combinatorics(8, 5, &[8.0, 10.0, 12.0]);
    let bad = r.n_of_a_violations + r.sequence_violations + r.lemma_violations;
    Check::new(
        "combinatorics",
        bad == 0,
        bad as f64,
        format!("{} sets, {} partitions, {bad} violations", r.sets, r.partitions),
    )
}

pub fn bounds(p: &ThermalParams, lambda: f64, cfg: &RunConfig) -> Result<Check> {
    let r = bound_suite(p, lambda, 2, cfg)?;
    let bad = r.combinatorics.n_of_a_violations + r.combinatorics.sequence_violations + r.combinatorics.lemma_violations;
    let passed = r.k1_increasing && r.primo_holds && r.ratio_margin_min >= 0.0 && bad == 0;
    Ok(Check::new(
        "cluster bounds",
        passed,
        r.k_ratio,
        format!("k_ratio {:.4}, k1 increasing {}, primo {}", r.k_ratio, r.k1_increasing, r.primo_holds),
    ))
}

/// Runs the suite. `fast` trims sample counts and orders.
pub fn run_suite(p: &ThermalParams, lambda: f64, cfg: &RunConfig, fast: bool) -> Vec<Check> {
    let small = if fast { cfg.with_samples(cfg.samples.min(4000)) } else { cfg.clone() };
    let bridge_cfg = cfg.with_samples(if fast { 20_000 } else { 100_000 });
    let (points, grid, confs, draws, order, ineq_order) = if fast { (20, 20, 40, 20, 3, 2) } else { (100, 50, 200, 100, 4, 3) };
    let mut out = vec![
        capture("covariance routes", covariance_routes(cfg, points)),
        capture("covariance symmetry and positivity", covariance_symmetry(p, grid)),
        capture("decay bound", decay_certificate(p, 50)),
        capture("dirichlet properties", dirichlet_properties(p, cfg, confs)),
        capture("bridge oracle", bridge_oracle(p, &bridge_cfg)),
        capture("cauchy identity", cauchy_identity(cfg, draws)),
    ];
    match majorant_and_k(p, lambda, &small, order) {
        Ok((m, k)) => out.extend([m, k]),
        Err(e) => {
            let msg = format!("error: {e}");
            out.push(Check::new("majorant dominance", false, f64::NAN, msg.clone()));
            out.push(Check::new("comparison constant", false, f64::NAN, msg));
        }
    }
    match inequality_suite(p, &small, ineq_order) {
        Ok(list) => {
            let failed: Vec<&str> = list.iter().filter(|c| !c.holds).map(|c| c.name.as_str()).collect();
            let worst = list.iter().map(|c| c.gap.value / c.gap.std_error.max(1e-300)).fold(f64::INFINITY, f64::min);
            let detail = if failed.is_empty() {
                format!("{} inequalities hold", list.len())
            } else {
                format!("failed: {}", failed.join("; "))
            };
            out.push(Check::new("inequality suite", failed.is_empty(), worst, detail));
        }
        Err(e) => out.push(Check::new("inequality suite", false, f64::NAN, format!("error: {e}"))),
    }
    let masses: &[f64] = &[2.0, 4.0];
    out.push(capture("cluster identity", cluster_identity(lambda, &small, masses)));
    out.push(capture("adiabatic trend", adiabatic_trend(lambda, cfg)));
    out.push(capture("stability bound", stability(p, lambda, &small)));
    out.push(combinatorics_check());
    if !fast {
        out.push(capture("cluster bounds", bounds(p, lambda, cfg)));
    }
    out
}
