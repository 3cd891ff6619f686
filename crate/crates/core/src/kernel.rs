//! The covariance abstraction consumed by every Coulomb-gas integrand.

use serde::{Deserialize, Serialize};

use crate::covariance::{
    hadamard_difference, massive_hadamard, massless_hadamard, thermal_covariance, thermal_excess, thermal_with_du,
    vacuum_covariance,
};
use crate::dirichlet::{corner_bonds, gamma_eval, interpolated_covariance, BondSet, InterpolationVector, MAX_ACTIVE};
use crate::error::Error;
use crate::error::Result;
use crate::params::{EuclideanPoint, ThermalParams};

/// Two-point kernel `w(a, b)`.
///
/// Euclidean models read a point as `[u, x]`; the thermal ones are
/// β-periodic and even in the time separation. Hadamard models read a
/// point as Minkowski `[t, s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CovarianceModel {
    Thermal(ThermalParams),
    Vacuum(ThermalParams),
    /// `C^β − C^∞`, finite at coincident points.
    ThermalExcess(ThermalParams),
    MasslessHadamard(ThermalParams),
    MassiveHadamard(ThermalParams),
    /// `𝓗^μ_0 − 𝓗_m`.
    HadamardDifference(ThermalParams),
    Dirichlet { params: ThermalParams, bonds: BondSet, n_images: usize },
    Interpolated { params: ThermalParams, s: InterpolationVector, n_images: usize },
    /// `c·w`, handy for comparison pairs.
    Scaled(f64, Box<CovarianceModel>),
}

impl CovarianceModel {
    pub fn eval(&self, a: [f64; 2], b: [f64; 2]) -> Result<f64> {
        let du = a[0] - b[0];
        let dx = a[1] - b[1];
        match self {
            CovarianceModel::Thermal(p) => thermal_covariance(p, du, dx),
            CovarianceModel::Vacuum(p) => vacuum_covariance(p, EuclideanPoint::new(du, dx)),
            CovarianceModel::ThermalExcess(p) => Ok(thermal_excess(p, du, dx)),
            CovarianceModel::MasslessHadamard(p) => massless_hadamard(p, du, dx),
            CovarianceModel::MassiveHadamard(p) => massive_hadamard(p, du, dx),
            CovarianceModel::HadamardDifference(p) => Ok(hadamard_difference(p, du, dx)),
            CovarianceModel::Dirichlet { params, bonds, n_images } => {
                Ok(gamma_eval(params, bonds, du, a[1], b[1], *n_images, false)?.0)
            }
            CovarianceModel::Interpolated { params, s, n_images } => interpolated_covariance(
                params,
                s,
                EuclideanPoint::new(a[0], a[1]),
                EuclideanPoint::new(b[0], b[1]),
                *n_images,
            ),
            CovarianceModel::Scaled(c, inner) => Ok(c * inner.eval(a, b)?),
        }
    }

    /// `(w, ∂w/∂a₀)`: the kernel and its derivative in the time of the first
    /// point. Models without a term-wise derivative use a central difference.
    pub fn eval_du(&self, a: [f64; 2], b: [f64; 2]) -> Result<(f64, f64)> {
        let du = a[0] - b[0];
        match self {
            CovarianceModel::Thermal(p) => thermal_with_du(p, du, a[1] - b[1]),
            CovarianceModel::Dirichlet { params, bonds, n_images } => {
                gamma_eval(params, bonds, du, a[1], b[1], *n_images, true)
            }
            CovarianceModel::Interpolated { params, s, n_images } => {
                let n = s.active.len();
                if n > MAX_ACTIVE {
                    return Err(Error::Capacity(format!("{n} active bonds exceed the limit {MAX_ACTIVE}")));
                }
                let (mut c, mut d) = (0.0, 0.0);
                for mask in 0..(1u64 << n) {
                    let w: f64 = s.s.iter().enumerate().map(|(i, si)| if mask >> i & 1 == 1 { *si } else { 1.0 - si }).product();
                    if w == 0.0 {
                        continue;
                    }
                    let (v, dv) = gamma_eval(params, &corner_bonds(s, mask), du, a[1], b[1], *n_images, true)?;
                    c += w * v;
                    d += w * dv;
                }
                Ok((c, d))
            }
            CovarianceModel::Scaled(c, inner) => {
                let (v, dv) = inner.eval_du(a, b)?;
                Ok((c * v, c * dv))
            }
            _ => {
                let h = 1e-5 * du.abs().max(1.0);
                let v = self.eval(a, b)?;
                let up = self.eval([a[0] + h, a[1]], b)?;
                let dn = self.eval([a[0] - h, a[1]], b)?;
                Ok((v, (up - dn) / (2.0 * h)))
            }
        }
    }

    /// Depends on `a − b` only.
    pub fn is_translation_invariant(&self) -> bool {
        match self {
            CovarianceModel::Dirichlet { bonds, .. } => bonds.is_empty(),
            CovarianceModel::Interpolated { .. } => false,
            CovarianceModel::Scaled(_, inner) => inner.is_translation_invariant(),
            _ => true,
        }
    }

    /// Whether coincident points are finite (`ThermalExcess`, `HadamardDifference`).
    pub fn is_regular(&self) -> bool {
        match self {
            CovarianceModel::ThermalExcess(_) | CovarianceModel::HadamardDifference(_) => true,
            CovarianceModel::Scaled(_, inner) => inner.is_regular(),
            _ => false,
        }
    }

    pub fn name(&self) -> String {
        match self {
            CovarianceModel::Thermal(_) => "thermal".into(),
            CovarianceModel::Vacuum(_) => "vacuum".into(),
            CovarianceModel::ThermalExcess(_) => "thermal-excess".into(),
            CovarianceModel::MasslessHadamard(_) => "massless-hadamard".into(),
            CovarianceModel::MassiveHadamard(_) => "massive-hadamard".into(),
            CovarianceModel::HadamardDifference(_) => "hadamard-difference".into(),
            CovarianceModel::Dirichlet { bonds, .. } => format!("dirichlet{:?}", bonds.as_slice()),
            CovarianceModel::Interpolated { .. } => "interpolated".into(),
            CovarianceModel::Scaled(c, inner) => format!("{c}*{}", inner.name()),
        }
    }
}
