//! Special functions used by the covariance and comparison kernels.
//!
//! Everything here is real-valued double precision. `K₀`, `K₁` use the
//! small-argument series below `z = 2` and Temme's continued fraction
//! above. `J₀`, `Y₀` use Miller's backward recurrence with the Neumann
//! series for `Y₀`, switching to the Hankel expansion for large arguments.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const EPS: f64 = 1e-17;

/// Modified Bessel function of the second kind, order zero.
pub fn bessel_k0(z: f64) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Domain(format!("K0 needs z > 0, got {z}")));
    }
    Ok(k0k1(z).0)
}

/// `K₁(z)` for `z > 0`.
pub fn bessel_k1(z: f64) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Domain(format!("K1 needs z > 0, got {z}")));
    }
    Ok(k0k1(z).1)
}

/// `(K₀(z), K₁(z))` without argument checks. Caller guarantees `z > 0`.
pub fn k0k1(z: f64) -> (f64, f64) {
    if z > 700.0 {
        return (0.0, 0.0);
    }
    if z <= 2.0 {
        k0k1_series(z)
    } else {
        k0k1_temme(z)
    }
}

fn k0k1_series(z: f64) -> (f64, f64) {
    let t = 0.25 * z * z;
    let lg = (0.5 * z).ln();
    // term_k = t^k / (k!)^2, harmonic H_k
    let mut term = 1.0;
    let mut harm = 0.0;
    let mut i0 = 1.0;
    let mut s0 = 0.0;
    // I₁ = (z/2) Σ t^k/(k!(k+1)!)
    let mut term1 = 1.0;
    let mut i1 = 1.0;
    // Σ (ψ(k+1)+ψ(k+2)) t^k/(k!(k+1)!), ψ(k+1) = H_k − γ
    let mut s1 = -2.0 * EULER_GAMMA + 1.0;
    let mut k = 0.0_f64;
    loop {
        k += 1.0;
        term *= t / (k * k);
        harm += 1.0 / k;
        term1 *= t / (k * (k + 1.0));
        i0 += term;
        s0 += term * harm;
        i1 += term1;
        let psi_sum = 2.0 * (harm - EULER_GAMMA) + 1.0 / (k + 1.0);
        s1 += term1 * psi_sum;
        if term < EPS * i0 && term1 < EPS * i1 {
            break;
        }
    }
    let k0 = -(lg + EULER_GAMMA) * i0 + s0;
    let k1 = 1.0 / z + 0.5 * z * i1 * lg - 0.25 * z * s1;
    (k0, k1)
}

fn k0k1_temme(x: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..10_000 {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < 1e-17 {
            break;
        }
    }
    let h = a1 * h;
    let k0 = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    (k0, k1)
}

/// Bessel `J₀`.
pub fn bessel_j0(y: f64) -> f64 {
    j0y0(y.abs()).0
}

/// Bessel `Y₀` for `y > 0`.
pub fn bessel_y0(y: f64) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::Domain(format!("Y0 needs y > 0, got {y}")));
    }
    Ok(j0y0(y).1)
}

fn j0y0(y: f64) -> (f64, f64) {
    if y < 1e-3 {
        let t = 0.25 * y * y;
        let j0 = 1.0 - t + t * t / 4.0;
        let y0 = if y > 0.0 {
            (2.0 / PI) * (((0.5 * y).ln() + EULER_GAMMA) * j0 + t - 0.375 * t * t)
        } else {
            f64::NEG_INFINITY
        };
        return (j0, y0);
    }
    if y > 30.0 {
        return j0y0_hankel(y);
    }
    j0y0_miller(y)
}

fn j0y0_miller(y: f64) -> (f64, f64) {
    let start = (y + 30.0 + 4.0 * y.sqrt()).ceil() as usize;
    let n = start + (start & 1);
    let mut jp = 0.0; // j_{k+1}
    let mut jk = 1e-30; // j_k
    let mut norm = 0.0; // j_0 + 2 Σ j_{2k}
    let mut neumann = 0.0; // Σ_{k≥1} (−1)^k j_{2k}/k
    for k in (1..=n).rev() {
        // j_{k-1} = (2k/y) j_k − j_{k+1}
        let jm = (2.0 * k as f64 / y) * jk - jp;
        jp = jk;
        jk = jm;
        let idx = k - 1;
        if idx > 0 && idx % 2 == 0 {
            norm += 2.0 * jk;
            let half = (idx / 2) as f64;
            let sign = if (idx / 2) % 2 == 0 { 1.0 } else { -1.0 };
            neumann += sign * jk / half;
        }
        if jk.abs() > 1e250 {
            jk *= 1e-250;
            jp *= 1e-250;
            norm *= 1e-250;
            neumann *= 1e-250;
        }
    }
    norm += jk;
    let j0 = jk / norm;
    let neumann = neumann / norm;
    let y0 = (2.0 / PI) * ((0.5 * y).ln() + EULER_GAMMA) * j0 - (4.0 / PI) * neumann;
    (j0, y0)
}

fn j0y0_hankel(y: f64) -> (f64, f64) {
    // P₀, Q₀ asymptotic series, summed to the smallest term.
    let z8 = 8.0 * y;
    let mut p = 1.0;
    let mut q = -1.0 / z8;
    let mut tp = 1.0;
    let mut tq = -1.0 / z8;
    let mut k = 1.0_f64;
    loop {
        // ratio for μ = 0: terms (−1)^k Π(2j−1)²/( (2k)! z8^{2k} )
        let a = (4.0 * k - 3.0).powi(2) * (4.0 * k - 1.0).powi(2);
        let np = -tp * a / ((2.0 * k - 1.0) * (2.0 * k) * z8 * z8);
        let b = (4.0 * k - 1.0).powi(2) * (4.0 * k + 1.0).powi(2);
        let nq = -tq * b / ((2.0 * k) * (2.0 * k + 1.0) * z8 * z8);
        if np.abs() > tp.abs() || nq.abs() > tq.abs() || k > 60.0 {
            break;
        }
        tp = np;
        tq = nq;
        p += tp;
        q += tq;
        if tp.abs() < 1e-17 && tq.abs() < 1e-17 {
            break;
        }
        k += 1.0;
    }
    let chi = y - 0.25 * PI;
    let amp = (2.0 / (PI * y)).sqrt();
    let j0 = amp * (p * chi.cos() - q * chi.sin());
    let y0 = amp * (p * chi.sin() + q * chi.cos());
    (j0, y0)
}

/// Sine integral `Si(x) = ∫₀ˣ sin t / t dt`.
pub fn sine_integral(x: f64) -> f64 {
    let t = x.abs();
    let v = if t <= 4.0 {
        let mut sum = t;
        let mut term = t;
        let t2 = t * t;
        let mut k = 0.0_f64;
        loop {
            // x^{2k+1}/(2k+1)! → x^{2k+3}/(2k+3)!
            term *= -t2 / ((2.0 * k + 2.0) * (2.0 * k + 3.0));
            let add = term / (2.0 * k + 3.0);
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
            k += 1.0;
        }
        sum
    } else {
        // complex Lentz evaluation of E₁(it)
        use num_complex::Complex64 as C;
        let mut b = C::new(1.0, t);
        let mut c = C::new(1e300, 0.0);
        let mut d = C::new(1.0, 0.0) / b;
        let mut h = d;
        for i in 2..100_000 {
            let a = -((i - 1) as f64).powi(2);
            b += 2.0;
            d = C::new(1.0, 0.0) / (d * a + b);
            c = b + C::new(a, 0.0) / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).norm() < 1e-16 {
                break;
            }
        }
        h *= C::new(t.cos(), -t.sin());
        FRAC_PI_2 + h.im
    };
    if x < 0.0 {
        -v
    } else {
        v
    }
}

/// Real part of `K₀(2√q)` continued to negative `q` through the principal
/// branch: `K₀(2√q)` for `q > 0`, `−(π/2)Y₀(2√|q|)` for `q < 0`.
pub fn re_k0_signed(q: f64) -> Result<f64> {
    if q == 0.0 || !q.is_finite() {
        return Err(Error::Singular("Re K0 at zero argument".into()));
    }
    if q > 0.0 {
        bessel_k0(2.0 * q.sqrt())
    } else {
        Ok(-FRAC_PI_2 * bessel_y0(2.0 * (-q).sqrt())?)
    }
}

/// The entire functions `I(q) = Σ q^k/(k!)²` and `S(q) = Σ H_k q^k/(k!)²`.
///
/// `Re K₀(2√q) = −(½ ln|q| + γ) I(q) + S(q)` for either sign of `q`.
pub fn bessel_entire_parts(q: f64) -> (f64, f64) {
    let mut term = 1.0;
    let mut harm = 0.0;
    let mut i = 1.0;
    let mut s = 0.0;
    let mut k = 0.0_f64;
    loop {
        k += 1.0;
        term *= q / (k * k);
        harm += 1.0 / k;
        i += term;
        s += term * harm;
        if term.abs() < 1e-18 * (1.0 + i.abs()) && k > 2.0 {
            break;
        }
    }
    (i, s)
}

/// `(I(q) − 1)/q`, accurate for small `|q|`.
pub fn bessel_entire_i_minus_one_over_q(q: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0_f64;
    loop {
        k += 1.0;
        term *= q / (k * k);
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}
