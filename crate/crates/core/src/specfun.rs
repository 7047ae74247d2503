//! Modified Bessel functions and exact exit laws of a Bessel process.
//!
//! `I_nu` and `K_nu` are evaluated together by Temme's series (`x < 2`) or
//! Steed's continued fraction (`x >= 2`) for the reduced order
//! `mu = nu - round(nu)`, followed by forward recurrence for `K` and the
//! Wronskian for `I`. Integer orders need no special treatment: Temme's
//! series is the analytic limit of the reflection formula.
//!
//! The exit-law helpers never form `a^{-2nu} - b^{-2nu}` directly; every
//! such difference goes through [`neg_pow_diff_ln`] so that unit-width
//! intervals far from the origin keep full relative precision.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;
const MAX_ITER: usize = 100_000;

/// Taylor coefficients of `1/Gamma(1+z)` about zero.
const RECIP_GAMMA: [f64; 27] = [
    1.0,
    0.577_215_664_901_532_860_61,
    -0.655_878_071_520_253_881_08,
    -0.042_002_635_034_095_235_529,
    0.166_538_611_382_291_489_5,
    -0.042_197_734_555_544_336_748,
    -0.009_621_971_527_876_973_562_1,
    0.007_218_943_246_663_099_542_4,
    -0.001_165_167_591_859_065_112_1,
    -0.000_215_241_674_114_950_972_82,
    0.000_128_050_282_388_116_186_15,
    -0.000_020_134_854_780_788_238_656,
    -1.250_493_482_142_670_657_3e-6,
    1.133_027_231_981_695_882_4e-6,
    -2.056_338_416_977_607_103_5e-7,
    6.116_095_104_481_415_817_9e-9,
    5.002_007_644_469_222_930_1e-9,
    -1.181_274_570_487_020_144_6e-9,
    1.043_426_711_691_100_510_5e-10,
    7.782_263_439_905_071_254e-12,
    -3.696_805_618_642_205_708_2e-12,
    5.100_370_287_454_475_979e-13,
    -2.058_326_053_566_506_783_2e-14,
    -5.348_122_539_423_017_982_4e-15,
    1.226_778_628_238_260_790_2e-15,
    -1.181_259_301_697_458_769_5e-16,
    1.186_692_254_751_600_332_6e-18,
];

/// Order of a Bessel process. Only the transient regime `nu > 0` is valid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesselOrder {
    nu: f64,
}

impl BesselOrder {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return domain(format!("Bessel order must be positive, got {nu}"));
        }
        Ok(Self { nu })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Dimension `d = 2 nu + 2`.
    pub fn dimension(&self) -> f64 {
        2.0 * self.nu + 2.0
    }

    /// Drift coefficient `(2 nu + 1) / 2` of the SDE `dY = dW + c/Y dt`.
    pub fn drift_coefficient(&self) -> f64 {
        self.nu + 0.5
    }
}

/// Start point `x` inside the barriers `a < x < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub a: f64,
    pub x: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, x: f64, b: f64) -> Result<Self> {
        if !(0.0 < a && a < x && x < b && b.is_finite()) {
            return domain(format!("need 0 < a < x < b, got ({a}, {x}, {b})"));
        }
        Ok(Self { a, x, b })
    }

    /// Unit band `(R-1, R, R+1)` around a level.
    pub fn unit_band(r: f64) -> Result<Self> {
        Self::new(r - 1.0, r, r + 1.0)
    }
}

fn recip_gamma_parts(mu: f64) -> (f64, f64, f64, f64) {
    // g(z) = 1/Gamma(1+z) = sum c_k z^k; split into even and odd parts.
    let mut even = 0.0;
    let mut odd_over_mu = 0.0;
    let mu2 = mu * mu;
    let mut p = 1.0;
    for k in (0..RECIP_GAMMA.len()).step_by(2) {
        even += RECIP_GAMMA[k] * p;
        if k + 1 < RECIP_GAMMA.len() {
            odd_over_mu += RECIP_GAMMA[k + 1] * p;
        }
        p *= mu2;
    }
    let gampl = even + mu * odd_over_mu; // 1/Gamma(1+mu)
    let gammi = even - mu * odd_over_mu; // 1/Gamma(1-mu)
    let gam1 = -odd_over_mu; // (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu)
    let gam2 = even;
    (gam1, gam2, gampl, gammi)
}

/// Returns `(I_nu(x) e^{-x}, K_nu(x) e^{x})`.
pub fn bessel_ik_scaled(nu: f64, x: f64) -> Result<(f64, f64)> {
    if !(x > 0.0 && x.is_finite()) {
        return domain(format!("Bessel argument must be positive, got {x}"));
    }
    if !(0.0..=100.0).contains(&nu) {
        return domain(format!("Bessel order outside [0, 100]: {nu}"));
    }
    let nl = (nu + 0.5).floor() as usize;
    let xmu = nu - nl as f64;
    let xmu2 = xmu * xmu;
    let xi = 1.0 / x;
    let xi2 = 2.0 * xi;

    // CF1: I'_nu / I_nu.
    let mut h = (nu * xi).max(FPMIN);
    let mut b = xi2 * nu;
    let mut d = 0.0;
    let mut c = h;
    let mut converged = false;
    for _ in 0..MAX_ITER {
        b += xi2;
        d = 1.0 / (b + d);
        c = b + 1.0 / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < EPS {
            converged = true;
            break;
        }
    }
    if !converged {
        return domain(format!("continued fraction failed for nu={nu}, x={x}"));
    }

    let mut ril = FPMIN;
    let mut ripl = h * ril;
    let ril1 = ril;
    let mut fact = nu * xi;
    for _ in 0..nl {
        let ritemp = fact * ril + ripl;
        fact -= xi;
        ripl = fact * ritemp + ril;
        ril = ritemp;
    }
    let f = ripl / ril;

    // K_mu and K_{mu+1}, scaled by e^x.
    let (mut rkmu, mut rk1);
    if x < 2.0 {
        let x2 = 0.5 * x;
        let pimu = PI * xmu;
        let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
        let d = -x2.ln();
        let e = xmu * d;
        let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
        let (gam1, gam2, gampl, gammi) = recip_gamma_parts(xmu);
        let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
        let mut sum = ff;
        let ee = e.exp();
        let mut p = 0.5 * ee / gampl;
        let mut q = 0.5 / (ee * gammi);
        let mut cc = 1.0;
        let dd = x2 * x2;
        let mut sum1 = p;
        let mut ok = false;
        for i in 1..MAX_ITER {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi - xmu2);
            cc *= dd / fi;
            p /= fi - xmu;
            q /= fi + xmu;
            let del = cc * ff;
            sum += del;
            let del1 = cc * (p - fi * ff);
            sum1 += del1;
            if del.abs() < sum.abs() * EPS {
                ok = true;
                break;
            }
        }
        if !ok {
            return domain(format!("Temme series failed for nu={nu}, x={x}"));
        }
        let ex = x.exp();
        rkmu = sum * ex;
        rk1 = sum1 * xi2 * ex;
    } else {
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut h = d;
        let mut delh = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let a1 = 0.25 - xmu2;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        let mut ok = false;
        for i in 2..MAX_ITER {
            let fi = i as f64;
            a -= 2.0 * (fi - 1.0);
            c = -a * c / fi;
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh = (b * d - 1.0) * delh;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < EPS {
                ok = true;
                break;
            }
        }
        if !ok {
            return domain(format!("Steed continued fraction failed for nu={nu}, x={x}"));
        }
        h *= a1;
        rkmu = (PI / (2.0 * x)).sqrt() / s;
        rk1 = rkmu * (xmu + x + 0.5 - h) * xi;
    }

    let rkmup = xmu * xi * rkmu - rk1;
    // Wronskian I K' - I' K = -1/x; the e^{+-x} scalings cancel.
    let rimu = xi / (f * rkmu - rkmup);
    let ri = rimu * ril1 / ril;
    for i in 1..=nl {
        let rktemp = (xmu + i as f64) * xi2 * rk1 + rkmu;
        rkmu = rk1;
        rk1 = rktemp;
    }
    if !(ri.is_finite() && rkmu.is_finite()) {
        return domain(format!("Bessel evaluation overflowed for nu={nu}, x={x}"));
    }
    Ok((ri, rkmu))
}

fn guard(nu: f64, x: f64) -> Result<()> {
    if !(x > 0.0 && x < 700.0) {
        return domain(format!("Bessel argument outside (0, 700): {x}"));
    }
    if !(0.0..=100.0).contains(&nu) {
        return domain(format!("Bessel order outside [0, 100]: {nu}"));
    }
    Ok(())
}

/// Modified Bessel function of the first kind.
pub fn bessel_i(nu: f64, x: f64) -> Result<f64> {
    guard(nu, x)?;
    let (is, _) = bessel_ik_scaled(nu, x)?;
    let v = is * x.exp();
    if !v.is_finite() {
        return domain(format!("I_{nu}({x}) overflows"));
    }
    Ok(v)
}

/// Modified Bessel function of the second kind.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    guard(nu, x)?;
    let (_, ks) = bessel_ik_scaled(nu, x)?;
    let v = ks * (-x).exp();
    if !v.is_finite() {
        return domain(format!("K_{nu}({x}) overflows"));
    }
    Ok(v)
}

/// `S_nu(u, v)` as `mantissa * exp(log_scale)`, overflow-free.
fn s_nu_scaled(nu: f64, u: f64, v: f64) -> Result<(f64, f64)> {
    let (iu, ku) = bessel_ik_scaled(nu, u)?;
    let (iv, kv) = bessel_ik_scaled(nu, v)?;
    // I(u)K(v) - K(u)I(v) = e^{|u-v|} [ ... ] with the small term damped.
    let diff = u - v;
    let mant = if diff >= 0.0 {
        iu * kv - ku * iv * (-2.0 * diff).exp()
    } else {
        iu * kv * (2.0 * diff).exp() - ku * iv
    };
    Ok((mant, diff.abs() - nu * (u * v).ln()))
}

/// `S_nu(u,v) = (uv)^{-nu} (I_nu(u) K_nu(v) - K_nu(u) I_nu(v))`.
pub fn s_nu(nu: f64, u: f64, v: f64) -> Result<f64> {
    if nu <= 0.0 {
        return domain(format!("order must be positive, got {nu}"));
    }
    guard(nu, u)?;
    guard(nu, v)?;
    if u == v {
        return Ok(0.0);
    }
    let (m, l) = s_nu_scaled(nu, u, v)?;
    Ok(m * l.exp())
}

/// `ln(lo^{-s} - hi^{-s})` for `0 < lo < hi`, `s > 0`, without cancellation.
pub fn neg_pow_diff_ln(lo: f64, hi: f64, s: f64) -> f64 {
    let ln_ratio = ((hi - lo) / lo).ln_1p();
    -s * lo.ln() + (-(-s * ln_ratio).exp_m1()).ln()
}

/// `lo^{-s} - hi^{-s}` for `0 < lo < hi`.
pub fn neg_pow_diff(lo: f64, hi: f64, s: f64) -> f64 {
    neg_pow_diff_ln(lo, hi, s).exp()
}

/// Probability of leaving `(a, b)` through `a` when started at `x`.
pub fn hitting_probability(order: BesselOrder, iv: Interval) -> f64 {
    let s = 2.0 * order.nu;
    (neg_pow_diff_ln(iv.x, iv.b, s) - neg_pow_diff_ln(iv.a, iv.b, s)).exp()
}

/// Mean exit time `E_x tau(a, b)`.
pub fn expected_exit_time(order: BesselOrder, iv: Interval) -> f64 {
    let nu = order.nu;
    let s = 2.0 * nu;
    let Interval { a, x, b } = iv;
    // Divided differences of f(y) = y^{-2nu}; the numerator is rewritten as
    // (b-x)(x-a)[(b-a) d1 + (x+a)(d1-d2)] with every term positive.
    let d1 = neg_pow_diff(a, x, s) / (x - a);
    let d2 = neg_pow_diff(x, b, s) / (b - x);
    let numer = (b - x) * (x - a) * ((b - a) * d1 + (x + a) * (d1 - d2));
    let denom = neg_pow_diff(a, b, s);
    numer / (2.0 * (nu + 1.0) * denom)
}

/// Laplace transform `E_x exp(-alpha tau)` of the exit time.
pub fn exit_laplace(order: BesselOrder, iv: Interval, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return domain(format!("alpha must be nonnegative, got {alpha}"));
    }
    if alpha == 0.0 {
        return Ok(1.0);
    }
    let nu = order.nu;
    let r = (2.0 * alpha).sqrt();
    let (a, x, b) = (iv.a * r, iv.x * r, iv.b * r);
    for z in [a, x, b] {
        if z >= 700.0 {
            return domain(format!("scaled barrier {z} exceeds the guard range"));
        }
    }
    let (m1, l1) = s_nu_scaled(nu, b, x)?;
    let (m2, l2) = s_nu_scaled(nu, x, a)?;
    let (m0, l0) = s_nu_scaled(nu, b, a)?;
    Ok(m1 * (l1 - l0).exp() / m0 + m2 * (l2 - l0).exp() / m0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    /// Power series for I_nu summed with compensated accumulation.
    fn i_series(nu: f64, x: f64, terms: usize) -> f64 {
        let half = 0.5 * x;
        let mut term = half.powf(nu) / statrs::function::gamma::gamma(nu + 1.0);
        let mut sum = 0.0;
        let mut comp = 0.0;
        for k in 0..terms {
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            let k = k as f64;
            term *= half * half / ((k + 1.0) * (nu + k + 1.0));
        }
        sum
    }

    #[test]
    fn half_integer_closed_forms() {
        for &x in &[0.01, 0.3, 1.0, 1.99, 2.0, 5.0, 12.0, 40.0, 300.0] {
            let i_half = (2.0 / (PI * x)).sqrt() * x.sinh();
            let k_half = (PI / (2.0 * x)).sqrt() * (-x).exp();
            assert!(rel(bessel_i(0.5, x).unwrap(), i_half) < 1e-12, "I x={x}");
            assert!(rel(bessel_k(0.5, x).unwrap(), k_half) < 1e-12, "K x={x}");
            // K_{3/2}(x) = K_{1/2}(x) (1 + 1/x)
            assert!(rel(bessel_k(1.5, x).unwrap(), k_half * (1.0 + 1.0 / x)) < 1e-12);
        }
        assert!((bessel_i(0.5, 1.0).unwrap() - 0.937_674_888_245_488).abs() < 1e-12);
        assert!((bessel_k(0.5, 1.0).unwrap() - 0.461_068_504_447_894).abs() < 1e-12);
        assert!((bessel_k(0.5, 2.0).unwrap() - 0.119_937_771_968_061_45).abs() < 1e-12);
    }

    #[test]
    fn i_matches_power_series() {
        for &nu in &[0.0, 0.25, 1.0, 2.0, 3.7, 10.0] {
            for &x in &[1e-3, 0.5, 2.0, 7.5, 15.0] {
                let want = i_series(nu, x, 60);
                assert!(rel(bessel_i(nu, x).unwrap(), want) < 1e-12, "nu={nu} x={x}");
            }
        }
        assert!((bessel_i(1.0, 2.0).unwrap() - 1.590_636_854_637_329).abs() < 1e-12);
        assert!((bessel_i(0.0, 1e-12).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn integer_order_k_is_the_limit_of_neighbours() {
        for &n in &[0.0, 1.0, 2.0, 5.0] {
            for &x in &[0.1, 1.0, 3.0, 20.0] {
                let eps = 1e-6;
                let lim = 0.5 * (bessel_k(n + eps, x).unwrap() + bessel_k((n - eps).abs(), x).unwrap());
                assert!(rel(bessel_k(n, x).unwrap(), lim) < 1e-10, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn wronskian_holds() {
        // I_nu K_{nu+1} + I_{nu+1} K_nu = 1/x
        for &nu in &[0.0, 0.3, 1.0, 4.5, 20.0] {
            for &x in &[0.05, 1.0, 2.5, 30.0, 600.0] {
                let (i0, k0) = bessel_ik_scaled(nu, x).unwrap();
                let (i1, k1) = bessel_ik_scaled(nu + 1.0, x).unwrap();
                assert!(rel(i0 * k1 + i1 * k0, 1.0 / x) < 1e-12, "nu={nu} x={x}");
            }
        }
    }

    #[test]
    fn domain_errors() {
        assert!(bessel_i(0.5, 0.0).is_err());
        assert!(bessel_k(0.5, -1.0).is_err());
        assert!(bessel_k(101.0, 1.0).is_err());
        assert!(bessel_i(1.0, 800.0).is_err());
        assert!(Interval::new(2.0, 1.0, 3.0).is_err());
        assert!(BesselOrder::new(0.0).is_err());
    }

    #[test]
    fn s_nu_half_integer_and_antisymmetry() {
        let want = 1f64.sinh() / 2.0;
        assert!(rel(s_nu(0.5, 2.0, 1.0).unwrap(), want) < 1e-12);
        assert_eq!(s_nu(1.3, 2.0, 2.0).unwrap(), 0.0);
        for &(nu, u, v) in &[(0.5, 3.0, 1.0), (1.0, 0.2, 4.0), (2.5, 10.0, 9.0)] {
            let a = s_nu(nu, u, v).unwrap();
            let b = s_nu(nu, v, u).unwrap();
            assert!((a + b).abs() <= 1e-12 * a.abs());
            assert_eq!(a > 0.0, u > v);
        }
    }

    #[test]
    fn hitting_probability_examples() {
        let half = BesselOrder::new(0.5).unwrap();
        let p = hitting_probability(half, Interval::new(1.0, 2.0, 3.0).unwrap());
        assert!((p - 0.25).abs() < 1e-15);
        let near = hitting_probability(half, Interval::new(1.0, 1.0 + 1e-12, 3.0).unwrap());
        assert!((near - 1.0).abs() < 1e-10);
        let far = hitting_probability(half, Interval::new(1.0, 2.0, 1e12).unwrap());
        assert!((far - 0.5).abs() < 1e-10);
    }

    #[test]
    fn expected_exit_time_unit_band_is_one_at_half() {
        let half = BesselOrder::new(0.5).unwrap();
        for r in [2.0, 3.0, 10.0, 1e3, 1e5] {
            let e = expected_exit_time(half, Interval::unit_band(r).unwrap());
            assert!((e - 1.0).abs() < 1e-10, "R={r}: {e}");
        }
        let near = expected_exit_time(half, Interval::new(1.0, 1.0 + 1e-9, 3.0).unwrap());
        assert!(near.abs() < 1e-8);
    }

    #[test]
    fn exit_laplace_half_integer() {
        let half = BesselOrder::new(0.5).unwrap();
        let iv = Interval::new(1.0, 2.0, 3.0).unwrap();
        assert_eq!(exit_laplace(half, iv, 0.0).unwrap(), 1.0);
        let v = exit_laplace(half, iv, 0.5).unwrap();
        assert!(rel(v, 1.0 / 1f64.cosh()) < 1e-12);
    }

    #[test]
    fn laplace_derivative_is_mean_exit_time() {
        for &(nu, a, x, b) in &[(0.5, 1.0, 2.0, 3.0), (1.0, 1.0, 2.0, 3.0), (2.0, 4.0, 5.0, 6.0), (0.3, 0.5, 0.7, 2.0)] {
            let order = BesselOrder::new(nu).unwrap();
            let iv = Interval::new(a, x, b).unwrap();
            let h = 1e-5;
            let fd = -(exit_laplace(order, iv, 2.0 * h).unwrap() - exit_laplace(order, iv, 0.0).unwrap())
                / (2.0 * h);
            let want = expected_exit_time(order, iv);
            assert!(rel(fd, want) < 1e-4, "nu={nu}: {fd} vs {want}");
        }
    }

    #[test]
    fn hitting_probability_decreases_in_start() {
        let order = BesselOrder::new(1.7).unwrap();
        let mut prev = 1.0;
        for k in 1..100 {
            let x = 2.0 + k as f64 * 0.03;
            let p = hitting_probability(order, Interval::new(2.0, x, 5.0).unwrap());
            assert!(p < prev);
            prev = p;
        }
    }
}
