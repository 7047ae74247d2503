//! Joint law of the total local times `xi(R, inf)` of the walk and
//! `eta(R, inf)` of the Bessel process at a level.
//!
//! Each visit of the embedded walk to `R` corresponds to one excursion of
//! the Bessel path started at `R`; the local time collected per excursion is
//! exponential with mean `theta`, independently of the others and of the
//! number of visits. Summing `xi` such terms gives `eta`, which is then
//! exponential with mean `theta / p* = R / nu`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::rng::Stream;
use crate::stats;
use crate::walklaw::{bessel_scaled_ab, local_time_law, WalkLaw};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcursionLaw {
    pub nu: f64,
    pub level: u64,
    /// `A_R = (R-1)^{-2nu} - R^{-2nu}`.
    pub a_r: f64,
    /// `B_R = R^{-2nu} - (R+1)^{-2nu}`.
    pub b_r: f64,
    /// Mean local time per excursion, `R^{2nu+1} A_R B_R / (nu (A_R + B_R))`.
    pub theta: f64,
    /// Escape probability of the walk from `R`.
    pub p_star: f64,
}

impl ExcursionLaw {
    /// Moment generating function `1 / (1 - theta lambda)` of one excursion's
    /// local time, for `lambda < 1/theta`.
    pub fn mgf(&self, lambda: f64) -> Result<f64> {
        if lambda * self.theta >= 1.0 {
            return domain(format!("mgf diverges at lambda = {lambda}"));
        }
        Ok(1.0 / (1.0 - self.theta * lambda))
    }

    /// Mean of `eta(R, inf)`.
    pub fn eta_mean(&self) -> f64 {
        self.theta / self.p_star
    }
}

pub fn excursion_law(nu: f64, level: u64) -> Result<ExcursionLaw> {
    if level < 2 {
        return domain(format!("excursion law needs R >= 2, got {level}"));
    }
    let law = WalkLaw::bessel(nu)?;
    let (a, b) = bessel_scaled_ab(nu, level);
    let r = level as f64;
    let scale = r.powf(-2.0 * nu);
    let theta = r * a * b / (nu * (a + b));
    let p_star = local_time_law(&law, level)?.p_star;
    Ok(ExcursionLaw { nu, level, a_r: a * scale, b_r: b * scale, theta, p_star })
}

/// One draw of `(xi, eta)` from their joint law.
pub fn sample_joint_local_time(law: &ExcursionLaw, rng: &mut Stream) -> (u64, f64) {
    let xi = rng.geometric(law.p_star);
    let mut eta = rng.exponential(law.theta);
    if xi > 1 {
        eta += rng.gamma((xi - 1) as f64, law.theta);
    }
    (xi, eta)
}

/// Per-level summary of `|xi - eta|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub level: u64,
    pub mean: f64,
    pub std_error: f64,
    pub q50: f64,
    pub q99: f64,
    /// `q99 / (sqrt(R) (1 + ln R))`.
    pub scaled_q99: f64,
}

/// Roughly `per_decade` integer levels per decade from `lo` to `hi`.
pub fn log_grid(lo: u64, hi: u64, per_decade: usize) -> Vec<u64> {
    let (a, b) = ((lo.max(1) as f64).log10(), (hi as f64).log10());
    let n = (((b - a) * per_decade as f64).round() as usize).max(1);
    let mut out: Vec<u64> = (0..=n).map(|k| 10f64.powf(a + (b - a) * k as f64 / n as f64).round() as u64).collect();
    out.dedup();
    out
}

/// Samples `draws` pairs at each level of `levels`; level `k` of the grid
/// uses stream `(seed_base, stream_offset + k)`.
pub fn discrepancy_profile(
    nu: f64,
    levels: &[u64],
    draws: usize,
    seed_base: u64,
    stream_offset: u64,
) -> Result<Vec<ProfileRow>> {
    if levels.iter().copied().max().unwrap_or(0) < 100 {
        return domain("the level grid must reach at least 100");
    }
    levels
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let law = excursion_law(nu, r)?;
            let mut rng = Stream::new(seed_base, stream_offset + k as u64);
            let d: Vec<f64> = (0..draws)
                .map(|_| {
                    let (xi, eta) = sample_joint_local_time(&law, &mut rng);
                    (xi as f64 - eta).abs()
                })
                .collect();
            let rf = r as f64;
            let q99 = stats::quantile(&d, 0.99);
            Ok(ProfileRow {
                level: r,
                mean: stats::mean(&d),
                std_error: stats::std_error(&d),
                q50: stats::quantile(&d, 0.5),
                q99,
                scaled_q99: q99 / (rf.sqrt() * (1.0 + rf.ln())),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_is_one_at_half() {
        for r in [2u64, 3, 10, 1000, 100_000] {
            let l = excursion_law(0.5, r).unwrap();
            assert!((l.theta - 1.0).abs() < 1e-10, "R={r}: {}", l.theta);
        }
    }

    #[test]
    fn order_one_at_two() {
        let l = excursion_law(1.0, 2).unwrap();
        assert!((l.a_r - 0.75).abs() < 1e-15);
        assert!((l.b_r - 5.0 / 36.0).abs() < 1e-15);
        assert!((l.theta - 15.0 / 16.0).abs() < 1e-15);
        assert!((l.eta_mean() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn theta_tends_to_one() {
        for nu in [0.3, 1.0, 2.5] {
            let l = excursion_law(nu, 1000).unwrap();
            assert!((l.theta - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn single_visit_gives_one_exponential() {
        let law = ExcursionLaw { nu: 1.0, level: 5, a_r: 0.0, b_r: 0.0, theta: 0.9, p_star: 1.0 };
        let mut rng = Stream::new(1, 1);
        let xs: Vec<f64> = (0..5000).map(|_| sample_joint_local_time(&law, &mut rng)).map(|(k, e)| {
            assert_eq!(k, 1);
            e
        }).collect();
        let r = stats::ks_one_sample(&xs, |x| 1.0 - (-x / 0.9).exp()).unwrap();
        assert!(r.p_value > 0.001);
    }

    #[test]
    fn mgf_is_exponential() {
        let l = excursion_law(1.0, 7).unwrap();
        assert!((l.mgf(0.1).unwrap() - 1.0 / (1.0 - 0.1 * l.theta)).abs() < 1e-15);
        assert!(l.mgf(2.0 / l.theta).is_err());
    }

    #[test]
    fn grid_and_profile_preconditions() {
        assert_eq!(log_grid(100, 10_000, 2), vec![100, 316, 1000, 3162, 10_000]);
        assert!(discrepancy_profile(0.5, &[10, 20], 100, 0, 0).is_err());
    }
}
