//! Goodness-of-fit tests and log-log regression.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::walklaw::Kahan;

/// Smallest sample any test here accepts.
pub const MIN_SAMPLE: usize = 30;

fn need(n: usize) -> Result<()> {
    if n < MIN_SAMPLE {
        return Err(Error::InsufficientSample { needed: MIN_SAMPLE, got: n });
    }
    Ok(())
}

pub fn mean(xs: &[f64]) -> f64 {
    let mut k = Kahan::default();
    for &x in xs {
        k.add(x);
    }
    k.value() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let mut k = Kahan::default();
    for &x in xs {
        k.add((x - m) * (x - m));
    }
    k.value() / (xs.len() as f64 - 1.0)
}

/// Standard error of the sample mean.
pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Kolmogorov survival function `P(K > lambda)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-transformed series, fast for small lambda.
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for j in 1..=20 {
            let k = (2 * j - 1) as f64;
            s += (c * k * k).exp();
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        let mut sign = 1.0;
        for j in 1..=100 {
            let jf = j as f64;
            let term = (-2.0 * jf * jf * lambda * lambda).exp();
            s += sign * term;
            if term < 1e-300 {
                break;
            }
            sign = -sign;
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

fn ks_p(d: f64, ne: f64) -> f64 {
    let s = ne.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsResult> {
    need(samples.len())?;
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(KsResult { statistic: d, p_value: ks_p(d, n), n: xs.len() })
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    need(a.len())?;
    need(b.len())?;
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|p, q| p.total_cmp(q));
    xb.sort_by(|p, q| p.total_cmp(q));
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    Ok(KsResult { statistic: d, p_value: ks_p(d, ne), n: xa.len() + xb.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub bins: usize,
}

/// Pearson chi-square test. Adjacent bins are merged left to right until
/// every expected count is at least 5; `fitted` parameters reduce the
/// degrees of freedom.
pub fn chi_square(observed: &[f64], expected: &[f64], fitted: usize) -> Result<ChiSquareResult> {
    if observed.len() != expected.len() {
        return Err(Error::Domain("observed and expected bin counts differ".into()));
    }
    let total: f64 = observed.iter().sum();
    need(total as usize)?;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        acc.0 += o;
        acc.1 += e;
        if acc.1 >= 5.0 {
            bins.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => bins.push(acc),
        }
    }
    if bins.len() < 2 + fitted {
        return Err(Error::DegenerateVariance(format!(
            "only {} bins with expected count >= 5",
            bins.len()
        )));
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let df = bins.len() - 1 - fitted;
    let dist = ChiSquared::new(df as f64).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(ChiSquareResult { statistic: stat, df, p_value: dist.sf(stat), bins: bins.len() })
}

/// Chi-square test of integer samples against a pmf on `1, 2, ...`.
/// The last bin collects the upper tail.
pub fn chi_square_discrete<F: Fn(u64) -> f64>(samples: &[u64], pmf: F) -> Result<ChiSquareResult> {
    need(samples.len())?;
    let n = samples.len() as f64;
    let kmax = *samples.iter().max().unwrap_or(&1);
    let mut observed = vec![0.0; kmax as usize + 1];
    for &k in samples {
        observed[k as usize] += 1.0;
    }
    let mut expected = Vec::with_capacity(observed.len());
    let mut cum = 0.0f64;
    for k in 0..=kmax {
        let p = if k == kmax { (1.0f64 - cum).max(0.0) } else { pmf(k) };
        cum += p;
        expected.push(p * n);
    }
    // Drop leading empty bins of zero mass so they do not distort merging.
    let start = expected.iter().position(|&e| e > 0.0).unwrap_or(0);
    let lead: f64 = observed[..start].iter().sum();
    if lead > 0.0 {
        return Ok(ChiSquareResult { statistic: f64::INFINITY, df: 1, p_value: 0.0, bins: 0 });
    }
    chi_square(&observed[start..], &expected[start..], 0)
}

/// Least-squares line with heteroskedasticity-robust (HC1) slope error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub n: usize,
}

impl Regression {
    pub fn ci_contains(&self, v: f64) -> bool {
        self.ci_low <= v && v <= self.ci_high
    }
}

/// Ordinary least squares of `y` on `x` with a two-sided Student-t interval.
pub fn ols(x: &[f64], y: &[f64], level: f64) -> Result<Regression> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Domain("x and y lengths differ".into()));
    }
    if n < 3 {
        return Err(Error::InsufficientSample { needed: 3, got: n });
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateVariance("regressor has zero spread".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let meat: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - intercept - slope * a;
            e * e * (a - mx) * (a - mx)
        })
        .sum();
    let nf = n as f64;
    let slope_se = (nf / (nf - 2.0) * meat).sqrt() / sxx;
    let t = StudentsT::new(0.0, 1.0, nf - 2.0)
        .map_err(|e| Error::Domain(e.to_string()))?
        .inverse_cdf(0.5 + level / 2.0);
    Ok(Regression {
        slope,
        intercept,
        slope_se,
        ci_low: slope - t * slope_se,
        ci_high: slope + t * slope_se,
        level,
        n,
    })
}

/// Regression of `ln y` on `ln x`. All values must be positive.
pub fn loglog_fit(x: &[f64], y: &[f64], level: f64) -> Result<Regression> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    ols(&lx, &ly, level)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InsufficientSample { needed: 3, got: x.len().min(y.len()) });
    }
    let rx = ranks(x);
    let ry = ranks(y);
    let (mx, my) = (mean(&rx), mean(&ry));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateVariance("constant ranks".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    if v.is_empty() {
        return f64::NAN;
    }
    let h = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn kolmogorov_branches_agree() {
        for &l in &[1.0, 1.1, 1.18, 1.25] {
            let c = -std::f64::consts::PI.powi(2) / (8.0 * l * l);
            let small: f64 = 1.0
                - (2.0 * std::f64::consts::PI).sqrt() / l
                    * (1..=20).map(|j| (c * ((2 * j - 1) as f64).powi(2)).exp()).sum::<f64>();
            let large: f64 = 2.0
                * (1..=100)
                    .map(|j| {
                        let j = j as f64;
                        (if j as i64 % 2 == 1 { 1.0 } else { -1.0 }) * (-2.0 * j * j * l * l).exp()
                    })
                    .sum::<f64>();
            assert!((small - large).abs() < 1e-12);
        }
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.6276) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn ks_p_values_are_uniform() {
        let mut pv = Vec::new();
        for rep in 0..100u64 {
            let mut s = Stream::new(11, rep);
            let xs: Vec<f64> = (0..500).map(|_| s.uniform()).collect();
            pv.push(ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).unwrap().p_value);
        }
        let meta = ks_one_sample(&pv, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(meta.p_value > 0.001, "{meta:?}");
    }

    #[test]
    fn ks_rejects_wrong_target() {
        let mut s = Stream::new(3, 0);
        let xs: Vec<f64> = (0..2000).map(|_| s.uniform()).collect();
        assert!(ks_one_sample(&xs, |x| x.clamp(0.0, 1.0).powi(2)).unwrap().p_value < 1e-6);
        let ys: Vec<f64> = (0..2000).map(|_| s.uniform() * 1.2).collect();
        assert!(ks_two_sample(&xs, &ys).unwrap().p_value < 1e-3);
    }

    #[test]
    fn chi_square_geometric_pass_rate() {
        let p = 0.1;
        let mut passes = 0;
        for rep in 0..100u64 {
            let mut s = Stream::new(5, rep);
            let xs: Vec<u64> = (0..10_000).map(|_| s.geometric(p)).collect();
            let r = chi_square_discrete(&xs, |k| if k == 0 { 0.0 } else { p * (1.0 - p).powi(k as i32 - 1) })
                .unwrap();
            if r.p_value > 0.01 {
                passes += 1;
            }
        }
        assert!(passes >= 95, "{passes}");
    }

    #[test]
    fn small_samples_are_rejected() {
        assert!(matches!(
            ks_one_sample(&[0.5; 10], |x| x),
            Err(Error::InsufficientSample { needed: 30, got: 10 })
        ));
    }

    #[test]
    fn noiseless_power_law_fit() {
        let x: Vec<f64> = (1..=20).map(|k| 10f64.powf(k as f64 / 4.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sqrt()).collect();
        let r = loglog_fit(&x, &y, 0.95).unwrap();
        assert!((r.slope - 0.5).abs() < 1e-12);
        assert!(ols(&[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0], 0.95).is_err());
    }

    #[test]
    fn spearman_monotone_and_ties() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman(&x, &[2.0, 4.0, 8.0, 16.0, 32.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        let r = spearman(&x, &[1.0, 1.0, 2.0, 2.0, 3.0]).unwrap();
        assert!(r > 0.9 && r < 1.0);
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5), 2.0);
        assert_eq!(quantile(&[0.0, 10.0], 0.25), 2.5);
    }
}
