//! The `sgt` command line.
//!
//! Exit codes: 0 success, 1 invalid configuration or usage, 2 computation
//! error, 3 verification failure.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::cluster::{adiabatic_scan, bound_suite, cluster_sum, Region, TestSource};
use crate::config::{ConfigLayer, Format, ParamsSection, RunSection, Settings};
use crate::covariance::{
    decay_bound, matsubara_n_for_tolerance, thermal_covariance_images, thermal_covariance_matsubara,
    thermal_quadrature_with, vacuum_covariance,
};
use crate::dirichlet::{bridge_estimator, gamma_covariance, BondSet};
use crate::error::{Error, Result};
use crate::gas::{
    cauchy_constant, convergence_majorant, grand_partitions, smatrix_coefficient_mc, CutoffFunction,
    FieldConfiguration, MajorantInputs,
};
use crate::kernel::CovarianceModel;
use crate::params::EuclideanPoint;
use crate::record::{Cell, ResultRecord, Table};
use crate::spectral::k_constant_default;
use crate::verify;

#[derive(Debug, Parser)]
#[command(name = "sgt", version, about = "Thermal Sine-Gordon covariances, Coulomb gas and cluster expansion")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML file with [params] and [run] sections; flags win over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Mass m.
    #[arg(long = "m", global = true)]
    mass: Option<f64>,
    /// Vertex charge a.
    #[arg(long = "a", global = true)]
    coupling_a: Option<f64>,
    #[arg(long, global = true)]
    hbar: Option<f64>,
    /// Hadamard length scale μ.
    #[arg(long = "mu", global = true)]
    mu_scale: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[arg(long, global = true)]
    n_max: Option<usize>,
    #[arg(long, global = true)]
    quad_points: Option<usize>,
    #[arg(long, global = true)]
    n_images: Option<usize>,
    /// Output directory (default: $SGT_OUTPUT_DIR, else ./sgt-out).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Write the record without printing a summary.
    #[arg(long, short, global = true)]
    quiet: bool,
}

impl CommonArgs {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            params: ParamsSection {
                beta: self.beta,
                mass: self.mass,
                coupling_a: self.coupling_a,
                hbar: self.hbar,
                mu_scale: self.mu_scale,
            },
            run: RunSection {
                seed: self.seed,
                samples: self.samples,
                tolerance: self.tolerance,
                n_max: self.n_max,
                quad_points: self.quad_points,
                n_images: self.n_images,
                output_dir: self.output_dir.clone(),
                format: self.format,
                workers: self.workers,
                lambda: self.lambda,
            },
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Free thermal covariance.
    #[command(subcommand)]
    Cov(CovCmd),
    /// Dirichlet covariances and the path-sampling estimator.
    #[command(subcommand)]
    Dirichlet(DirichletCmd),
    /// Coulomb-gas estimators.
    #[command(subcommand)]
    Gas(GasCmd),
    /// The comparison constant K.
    Kconst,
    /// Cluster expansion.
    #[command(subcommand)]
    Cluster(ClusterCmd),
    /// Property suite.
    #[command(subcommand)]
    Verify(VerifyCmd),
}

#[derive(Debug, Subcommand, Serialize)]
enum CovCmd {
    /// C at one point by every route.
    Eval {
        #[arg(long)]
        u: f64,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
    },
    /// C along x at fixed u.
    Table {
        #[arg(long)]
        u: f64,
        #[arg(long, default_value_t = 0.05)]
        x_min: f64,
        #[arg(long, default_value_t = 5.0)]
        x_max: f64,
        #[arg(long, default_value_t = 50)]
        points: usize,
        /// Cut α of the decay bound column (NaN for |x| ≤ α).
        #[arg(long, default_value_t = 0.5)]
        alpha_cut: f64,
    },
}

#[derive(Debug, Subcommand, Serialize)]
enum DirichletCmd {
    /// C^Γ at one pair of points.
    Eval {
        /// Comma-separated bonds.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        bonds: Vec<i64>,
        #[arg(long)]
        u: f64,
        #[arg(long, allow_hyphen_values = true)]
        x1: f64,
        #[arg(long, allow_hyphen_values = true)]
        x2: f64,
    },
    /// Brownian-bridge estimate with touch/avoid constraints.
    Bridge {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        touch: Vec<i64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        avoid: Vec<i64>,
        #[arg(long)]
        u: f64,
        #[arg(long, allow_hyphen_values = true)]
        x1: f64,
        #[arg(long, allow_hyphen_values = true)]
        x2: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum CutoffKind {
    /// D_μ, the diamond of half-diagonal μ.
    Diamond,
    /// The unit square (0, 1)².
    Square,
}

impl CutoffKind {
    fn build(self, mu: f64) -> CutoffFunction {
        match self {
            CutoffKind::Diamond => CutoffFunction::Diamond { mu },
            CutoffKind::Square => CutoffFunction::Rect { t: (0.0, 1.0), s: (0.0, 1.0) },
        }
    }
}

#[derive(Debug, Subcommand, Serialize)]
enum GasCmd {
    /// S-matrix coefficients S_0..S_order against the majorant.
    Smatrix {
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, value_enum, default_value_t = CutoffKind::Diamond)]
        cutoff: CutoffKind,
        /// Constant background field φ.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        phi: f64,
    },
    /// Canonical and grand-canonical partition functions.
    Partition {
        #[arg(long, default_value_t = 1.0)]
        z: f64,
        #[arg(long, value_enum, default_value_t = CutoffKind::Square)]
        cutoff: CutoffKind,
    },
    /// Jensen, conditioning, sandwich and Hölder inequalities.
    Inequalities,
}

#[derive(Debug, Args, Serialize)]
struct SourceArgs {
    #[arg(long, default_value_t = 0)]
    y0_lo: i64,
    #[arg(long, default_value_t = 1)]
    y0_hi: i64,
    /// Amplitude of ψ (tent profile on Y₀).
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    psi: f64,
    /// Amplitude of ψ′.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    psi_prime: f64,
}

impl SourceArgs {
    fn region(&self) -> Result<Region> {
        Region::new(self.y0_lo, self.y0_hi)
    }

    fn source(&self) -> Result<TestSource> {
        TestSource::tent(self.y0_lo as f64, self.y0_hi as f64, 5, self.psi, self.psi_prime)
    }
}

#[derive(Debug, Subcommand, Serialize)]
enum ClusterCmd {
    /// Cluster sum against the direct ratio F/Z.
    Run {
        #[arg(long, default_value_t = -2, allow_hyphen_values = true)]
        window_lo: i64,
        #[arg(long, default_value_t = 2)]
        window_hi: i64,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Adiabatic scan over windows [y0_lo − k, y0_hi + k].
    Scan {
        #[arg(long, default_value_t = 4)]
        windows: i64,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Ratio, decay, combinatorial and primo bounds.
    Bounds,
}

#[derive(Debug, Subcommand, Serialize)]
enum VerifyCmd {
    /// Every property check; exit 3 if any fails.
    All {
        /// Reduced sample counts and orders.
        #[arg(long)]
        fast: bool,
    },
}

struct Outcome {
    record: ResultRecord,
    failed: bool,
    /// Per-check lines printed before the values.
    report: Vec<String>,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(&cli) {
        Ok(0) => 0,
        Ok(code) => code,
        Err(e) => {
            eprintln!("sgt: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let mut layer = ConfigLayer::default();
    if let Some(path) = &cli.common.config {
        layer = ConfigLayer::from_file(path)?;
    }
    let settings = Settings::resolve(&layer.overlay(&cli.common.layer()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", settings.workers)))?;
    let start = Instant::now();
    let outcome = pool.install(|| dispatch(&cli.command, &settings))?;
    let mut record = outcome.record;
    record.wall_time_s = start.elapsed().as_secs_f64();
    record.timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let path = match settings.format {
        Format::Json => record.write_json(&settings.output_dir)?,
        Format::Csv => record.write_csv(&settings.output_dir)?,
    };
    if cli.common.quiet {
        return Ok(if outcome.failed { 3 } else { 0 });
    }
    for line in &outcome.report {
        println!("{line}");
    }
    for (k, v) in &record.values {
        match (v, record.std_errors.get(k)) {
            (Cell::Num(x), Some(Cell::Num(e))) => println!("{k} = {x:.12e} ± {e:.2e}"),
            (Cell::Num(x), _) => println!("{k} = {x:.12e}"),
            (Cell::Text(s), _) => println!("{k} = {s}"),
        }
    }
    println!("wrote {}", path.display());
    Ok(if outcome.failed { 3 } else { 0 })
}

fn snapshot(settings: &Settings, args: &impl Serialize) -> serde_json::Value {
    serde_json::json!({
        "params": settings.params,
        "run": settings.run,
        "lambda": settings.lambda,
        "args": args,
    })
}

fn record_for(name: &str, settings: &Settings, args: &impl Serialize) -> ResultRecord {
    ResultRecord::new(name, snapshot(settings, args), settings.run.seed, settings.workers)
}

fn dispatch(cmd: &Command, s: &Settings) -> Result<Outcome> {
    let ok = |record| Ok(Outcome { record, failed: false, report: Vec::new() });
    match cmd {
        Command::Cov(c) => ok(cov(c, s)?),
        Command::Dirichlet(c) => ok(dirichlet(c, s)?),
        Command::Gas(c) => gas(c, s),
        Command::Kconst => ok(kconst(s)?),
        Command::Cluster(c) => ok(cluster(c, s)?),
        Command::Verify(VerifyCmd::All { fast }) => {
            let mut r = record_for("verify all", s, &serde_json::json!({ "fast": fast }));
            let checks = verify::run_suite(&s.params, s.lambda, &s.run, *fast);
            r.table = Table::new(&["check", "passed", "value", "detail"]);
            let mut report = Vec::new();
            for c in &checks {
                report.push(format!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
                r.value(&c.name, c.passed);
                r.table.push(vec![c.name.clone().into(), c.passed.into(), c.value.into(), c.detail.clone().into()]);
            }
            let failed = checks.iter().any(|c| !c.passed);
            r.value("all passed", !failed);
            Ok(Outcome { record: r, failed, report })
        }
    }
}

fn cov(c: &CovCmd, s: &Settings) -> Result<ResultRecord> {
    let p = &s.params;
    match c {
        CovCmd::Eval { u, x } => {
            let mut r = record_for("cov eval", s, c);
            let pt = EuclideanPoint::new(*u, *x);
            let q = thermal_quadrature_with(p, pt, s.run.tolerance.max(1e-14))?;
            r.table = Table::new(&["route", "value", "error_bound"]);
            r.estimate("quadrature", q.value, q.error);
            r.table.push(vec!["quadrature".into(), q.value.into(), q.error.into()]);
            if *x != 0.0 {
                let n = matsubara_n_for_tolerance(p, *x, s.run.tolerance)?;
                let m = thermal_covariance_matsubara(p, pt, n)?;
                r.estimate("matsubara", m.value, m.tail_bound);
                r.table.push(vec!["matsubara".into(), m.value.into(), m.tail_bound.into()]);
            }
            let im = thermal_covariance_images(p, *u, *x)?;
            r.value("images", im);
            r.table.push(vec!["images".into(), im.into(), Cell::num(f64::NAN)]);
            let vac = vacuum_covariance(p, pt)?;
            r.value("vacuum", vac);
            r.table.push(vec!["vacuum".into(), vac.into(), Cell::num(f64::NAN)]);
            Ok(r)
        }
        CovCmd::Table { u, x_min, x_max, points, alpha_cut } => {
            if *points < 2 || !(x_max > x_min) {
                return Err(Error::Config("need points >= 2 and x_max > x_min".into()));
            }
            let mut r = record_for("cov table", s, c);
            r.table = Table::new(&["u", "x", "quadrature", "matsubara", "vacuum", "decay_bound"]);
            for i in 0..*points {
                let x = x_min + (x_max - x_min) * i as f64 / (*points - 1) as f64;
                let pt = EuclideanPoint::new(*u, x);
                let q = thermal_quadrature_with(p, pt, s.run.tolerance.max(1e-14))?.value;
                let m = if x != 0.0 {
                    let n = matsubara_n_for_tolerance(p, x, s.run.tolerance)?;
                    thermal_covariance_matsubara(p, pt, n)?.value
                } else {
                    f64::NAN
                };
                let v = vacuum_covariance(p, pt)?;
                let b = if x.abs() > *alpha_cut && *alpha_cut > 0.0 { decay_bound(p, *alpha_cut, x) } else { f64::NAN };
                r.table.push(vec![(*u).into(), x.into(), q.into(), m.into(), v.into(), b.into()]);
            }
            r.value("rows", *points);
            Ok(r)
        }
    }
}

fn dirichlet(c: &DirichletCmd, s: &Settings) -> Result<ResultRecord> {
    let p = &s.params;
    match c {
        DirichletCmd::Eval { bonds, u, x1, x2 } => {
            let mut r = record_for("dirichlet eval", s, c);
            let g = BondSet::from_unsorted(bonds.clone());
            let v = gamma_covariance(p, &g, EuclideanPoint::new(*u, *x1), EuclideanPoint::new(0.0, *x2), s.run.n_images)?;
            r.value("value", v);
            r.table = Table::new(&["bonds", "u", "x1", "x2", "value"]);
            r.table.push(vec![format!("{:?}", g.as_slice()).into(), (*u).into(), (*x1).into(), (*x2).into(), v.into()]);
            Ok(r)
        }
        DirichletCmd::Bridge { touch, avoid, u, x1, x2 } => {
            let mut r = record_for("dirichlet bridge", s, c);
            let (t, a) = (BondSet::from_unsorted(touch.clone()), BondSet::from_unsorted(avoid.clone()));
            let (p1, p2) = (EuclideanPoint::new(*u, *x1), EuclideanPoint::new(0.0, *x2));
            let b = bridge_estimator(p, &t, &a, p1, p2, &s.run)?;
            if let Some(w) = &b.warning {
                eprintln!("warning: {w}");
            }
            // image-charge reference: inclusion–exclusion over the touch set
            let mut reference = 0.0;
            for mask in 0..(1u64 << t.len()) {
                let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                reference += sign * gamma_covariance(p, &a.union(&t.subset(mask)), p1, p2, s.run.n_images)?;
            }
            r.estimate("estimate", b.estimate.value, b.estimate.std_error);
            r.value("reference", reference);
            r.table = Table::new(&["estimate", "std_error", "reference", "knots"]);
            r.table.push(vec![b.estimate.value.into(), b.estimate.std_error.into(), reference.into(), b.knots.into()]);
            Ok(r)
        }
    }
}

fn gas(c: &GasCmd, s: &Settings) -> Result<Outcome> {
    let p = &s.params;
    let cfg = &s.run;
    match c {
        GasCmd::Smatrix { order, cutoff, phi } => {
            let mut r = record_for("gas smatrix", s, c);
            let g = cutoff.build(p.mu_scale);
            let k = k_constant_default(p)?;
            let pexp = 2.0;
            let cc = cauchy_constant(p.mu_scale, p.alpha() * pexp)?;
            let inputs = MajorantInputs {
                mu: p.mu_scale,
                alpha: p.alpha(),
                p: pexp,
                lambda: s.lambda,
                hbar: p.hbar,
                a: p.coupling_a,
                k_const: k.k,
                g_q_norm: g.lq_norm(pexp / (pexp - 1.0)),
                c_const: cc.value,
            };
            let field = if *phi == 0.0 { FieldConfiguration::Zero } else { FieldConfiguration::Constant(*phi) };
            r.value("K", k.k);
            r.value("C", cc.value);
            r.table = Table::new(&["n", "re", "im", "re_err", "im_err", "abs", "majorant"]);
            for n in 0..=*order {
                let e = smatrix_coefficient_mc(p, s.lambda, &g, n, &field, cfg)?;
                let v = e.value;
                let bound = convergence_majorant(n, &inputs);
                r.estimate(&format!("abs S_{n}"), v.norm(), v.std_error());
                r.table.push(vec![
                    n.into(),
                    v.re.into(),
                    v.im.into(),
                    v.re_err.into(),
                    v.im_err.into(),
                    v.norm().into(),
                    bound.into(),
                ]);
            }
            Ok(Outcome { record: r, failed: false, report: Vec::new() })
        }
        GasCmd::Partition { z, cutoff } => {
            let mut r = record_for("gas partition", s, c);
            let g = cutoff.build(p.mu_scale);
            let w = CovarianceModel::Thermal(*p);
            let gp = grand_partitions(p, &w, &g, *z, cfg.n_max, cfg)?;
            r.table = Table::new(&["n", "q", "value", "std_error"]);
            for n in 1..=cfg.n_max {
                for q in -(n as i64)..=(n as i64) {
                    let e = crate::gas::canonical_partition(p, &w, &g, n, q, cfg)?;
                    r.table.push(vec![n.into(), q.into(), e.value.into(), e.std_error.into()]);
                }
            }
            r.estimate("Xi", gp.xi.value, gp.xi.std_error);
            r.estimate("Xi_cosh", gp.xi_cosh.value, gp.xi_cosh.std_error);
            r.estimate("Z", gp.z_grand.value, gp.z_grand.std_error);
            r.estimate("Xi_cosh(2g)", gp.xi_cosh_2g.value, gp.xi_cosh_2g.std_error);
            Ok(Outcome { record: r, failed: false, report: Vec::new() })
        }
        GasCmd::Inequalities => {
            let mut r = record_for("gas inequalities", s, c);
            let list = verify::inequality_suite(p, cfg, cfg.n_max)?;
            r.table = Table::new(&["name", "lhs", "lhs_err", "rhs", "rhs_err", "gap", "gap_err", "holds"]);
            let mut report = Vec::new();
            for q in &list {
                report.push(format!("[{}] {}", if q.holds { "PASS" } else { "FAIL" }, q.name));
                r.table.push(vec![
                    q.name.clone().into(),
                    q.lhs.value.into(),
                    q.lhs.std_error.into(),
                    q.rhs.value.into(),
                    q.rhs.std_error.into(),
                    q.gap.value.into(),
                    q.gap.std_error.into(),
                    q.holds.into(),
                ]);
            }
            let failed = list.iter().any(|q| !q.holds);
            r.value("all hold", !failed);
            Ok(Outcome { record: r, failed, report })
        }
    }
}

fn kconst(s: &Settings) -> Result<ResultRecord> {
    let mut r = record_for("kconst", s, &serde_json::Value::Null);
    let k = k_constant_default(&s.params)?;
    r.value("K", k.k);
    r.value("relative_change", k.relative_change);
    r.value("order", k.order);
    r.value("positive_part", k.finest.p_norm);
    r.value("negative_part", k.finest.n_norm);
    r.table = Table::new(&["points_per_axis", "spacing", "k_raw", "k_extrapolated"]);
    for c in &k.curve {
        r.table.push(vec![
            c.points_per_axis.into(),
            c.spacing.into(),
            c.k_raw.into(),
            c.k_extrapolated.map(Cell::num).unwrap_or_else(|| Cell::num(f64::NAN)),
        ]);
    }
    Ok(r)
}

fn cluster(c: &ClusterCmd, s: &Settings) -> Result<ResultRecord> {
    let p = &s.params;
    let cfg = &s.run;
    match c {
        ClusterCmd::Run { window_lo, window_hi, source } => {
            let mut r = record_for("cluster run", s, c);
            let window = Region::new(*window_lo, *window_hi)?;
            let sum = cluster_sum(p, s.lambda, &source.source()?, source.region()?, window, cfg.n_max, cfg)?;
            r.table = Table::new(&[
                "term", "y_lo", "y_hi", "gamma", "sigma_degree", "contribution_re", "contribution_im", "err_re", "err_im",
            ]);
            for t in &sum.terms {
                let gamma = t.gamma.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(" ");
                r.table.push(vec![
                    t.id.clone().into(),
                    t.y.lo.into(),
                    t.y.hi.into(),
                    gamma.into(),
                    t.sigma_degree.into(),
                    t.contribution.re.into(),
                    t.contribution.im.into(),
                    t.contribution.re_err.into(),
                    t.contribution.im_err.into(),
                ]);
            }
            r.estimate("cluster_re", sum.value.re, sum.value.re_err);
            r.estimate("cluster_im", sum.value.im, sum.value.im_err);
            r.estimate("direct_re", sum.direct.ratio.re, sum.direct.ratio.re_err);
            r.estimate("direct_im", sum.direct.ratio.im, sum.direct.ratio.im_err);
            r.estimate("gap_abs", sum.identity_gap.value().norm(), sum.identity_gap.std_error());
            r.value("identity_within_3_sigma", sum.identity_holds(3.0));
            Ok(r)
        }
        ClusterCmd::Scan { windows, source } => {
            if *windows < 1 {
                return Err(Error::Config("need at least one window".into()));
            }
            let mut r = record_for("cluster scan", s, c);
            let y0 = source.region()?;
            let ws: Vec<Region> = (1..=*windows).map(|k| Region::new(y0.lo - k, y0.hi + k)).collect::<Result<_>>()?;
            let scan = adiabatic_scan(p, s.lambda, &source.source()?, y0, &ws, cfg.n_max, cfg)?;
            r.table = Table::new(&["window_lo", "window_hi", "value_re", "value_im", "err_re", "err_im", "gap_abs", "gap_err"]);
            for row in &scan.rows {
                let (g, ge) = row.gap.map(|g| (g.value().norm(), g.std_error())).unwrap_or((f64::NAN, f64::NAN));
                r.table.push(vec![
                    row.window.lo.into(),
                    row.window.hi.into(),
                    row.value.re.into(),
                    row.value.im.into(),
                    row.value.re_err.into(),
                    row.value.im_err.into(),
                    g.into(),
                    ge.into(),
                ]);
            }
            r.value("monotone", scan.monotone);
            r.value("converged", scan.converged);
            r.value("inconclusive", scan.inconclusive);
            r.value("reference_ratio", scan.reference_ratio);
            Ok(r)
        }
        ClusterCmd::Bounds => {
            let mut r = record_for("cluster bounds", s, c);
            let b = bound_suite(p, s.lambda, cfg.n_max, cfg)?;
            r.table = Table::new(&["quantity", "key", "value", "std_error"]);
            for (w, y, l, e) in &b.ratios {
                r.table.push(vec!["ln_ratio".into(), format!("{w} {y}").into(), (*l).into(), (*e).into()]);
            }
            for (m, k) in &b.k1 {
                r.table.push(vec!["k1".into(), format!("m={m}").into(), (*k).into(), Cell::num(0.0)]);
            }
            for (m, ratio) in &b.combinatorics.lemma {
                r.table.push(vec!["lemma_ratio".into(), format!("m={m}").into(), (*ratio).into(), Cell::num(0.0)]);
            }
            for (k, e, rhs) in &b.primo {
                r.table.push(vec!["primo".into(), format!("k={k} rhs={rhs:e}").into(), e.value.into(), e.std_error.into()]);
            }
            r.value("k_ratio", b.k_ratio);
            r.value("ratio_margin_min", b.ratio_margin_min);
            r.value("k1_increasing", b.k1_increasing);
            r.value("primo_holds", b.primo_holds);
            r.value("partitions", b.combinatorics.partitions);
            r.value(
                "combinatoric_violations",
                b.combinatorics.n_of_a_violations + b.combinatorics.sequence_violations + b.combinatorics.lemma_violations,
            );
            Ok(r)
        }
    }
}
