//! Embedding the Bessel-derived walk into a Bessel path by stopping times.
//!
//! With `Y(0) = 0`, `t_1` is the first hit of 1, `t_2` the first hit of 2
//! after it, and afterwards `t_n` is the first exit of `(X_{n-1} - 1,
//! X_{n-1} + 1)` after `t_{n-1}`. Then `X_n = Y(t_n)` is a nearest-neighbour
//! walk with the Bessel-derived law of the same order.
//!
//! Integer levels hit by the path after `t_n` are exactly the levels the
//! walk visits after step `n`, so the walk's future infimum follows from the
//! path's: it is the ceiling of the path infimum, at least 1.

use serde::{Deserialize, Serialize};

use crate::besselsim::{sample_future_inf, BesselPath, BesselStepper, Event, Scheme, Side, Walker};
use crate::error::{domain, Error, Result};
use crate::rng::Stream;
use crate::specfun::BesselOrder;
use crate::stats::{self, Regression, MIN_SAMPLE};
use crate::walklaw::WalkLaw;
use crate::walksim::{StopStatus, WalkPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedStatus {
    Complete,
    /// The host path ended before the requested number of stop times.
    HorizonReached,
}

/// An embedded walk together with integer-time summaries of its host path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub nu: f64,
    /// `t_0 = 0 < t_1 < ...`
    pub stop_times: Vec<f64>,
    /// `X_n = Y(t_n)`.
    pub walk: Vec<u64>,
    /// `Y(k)` at integer times.
    pub y_int: Vec<f64>,
    /// `M(k) = max_{s <= k} Y(s)`.
    pub y_max: Vec<f64>,
    /// `I(k) = inf_{s >= k} Y(s)`.
    pub y_inf: Vec<f64>,
    /// Largest oscillation of `Y` over `[k, k+1]`, as a running maximum.
    pub osc_max: Vec<f64>,
    /// `inf_{m >= N} X_m` for the last recorded step `N`.
    pub walk_tail_inf: u64,
    pub status: EmbedStatus,
    pub requested: usize,
}

impl Embedding {
    /// Number of recorded steps.
    pub fn steps(&self) -> usize {
        self.walk.len() - 1
    }

    /// Largest `n` at which both `X_n` and `Y(n)` are known.
    pub fn horizon(&self) -> usize {
        self.steps().min(self.y_int.len() - 1)
    }

    pub fn walk_path(&self) -> WalkPath {
        WalkPath {
            positions: self.walk.clone(),
            seed_base: 0,
            stream_index: 0,
            status: match self.status {
                EmbedStatus::Complete => StopStatus::Completed,
                EmbedStatus::HorizonReached => StopStatus::BudgetExhausted,
            },
            floor: None,
            residual: 0.0,
            future_inf: Some(self.walk_tail_inf),
        }
    }

    /// `J_n = inf_{m >= n} X_m` for `n = 0..=steps`.
    pub fn walk_future_inf(&self) -> Vec<u64> {
        let mut out = vec![0; self.walk.len()];
        let mut cur = self.walk_tail_inf;
        for n in (0..self.walk.len()).rev() {
            cur = cur.min(self.walk[n]);
            out[n] = cur;
        }
        out
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.walk.first() != Some(&0) || self.stop_times.first() != Some(&0.0) {
            return Err(Error::Certification("embedding must start at 0".into()));
        }
        for n in 1..self.walk.len() {
            if self.walk[n].abs_diff(self.walk[n - 1]) != 1 {
                return Err(Error::Certification(format!("step {n} is not nearest-neighbour")));
            }
            if self.stop_times[n] <= self.stop_times[n - 1] {
                return Err(Error::Certification(format!("stop time {n} does not increase")));
            }
        }
        if self.walk_tail_inf > *self.walk.last().unwrap() {
            return Err(Error::Certification("tail infimum above the last position".into()));
        }
        Ok(())
    }
}

/// Integer-time summaries accumulated segment by segment.
struct Recorder {
    y_int: Vec<f64>,
    seg_min: Vec<f64>,
    seg_max: Vec<f64>,
}

impl Recorder {
    fn new(y0: f64) -> Self {
        Self { y_int: vec![y0], seg_min: Vec::new(), seg_max: Vec::new() }
    }

    // Segments never straddle an integer time.
    fn segment(&mut self, t0: f64, y0: f64, t1: f64, y1: f64) {
        let k = t0.floor() as usize;
        if k == self.seg_min.len() {
            self.seg_min.push(y0);
            self.seg_max.push(y0);
        }
        self.seg_min[k] = self.seg_min[k].min(y0).min(y1);
        self.seg_max[k] = self.seg_max[k].max(y0).max(y1);
        if t1 == self.y_int.len() as f64 {
            self.y_int.push(y1);
        }
    }

    /// `(M, I, oscillation)` at integer times given the infimum after the
    /// last segment.
    fn finish(&self, tail_inf: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.y_int.len();
        let mut m = vec![self.y_int[0]; n];
        let mut osc = vec![0.0f64; n];
        for k in 1..n {
            m[k] = m[k - 1].max(self.seg_max[k - 1]);
            osc[k] = osc[k - 1].max(self.seg_max[k - 1] - self.seg_min[k - 1]);
        }
        let mut inf = vec![tail_inf; n];
        let mut cur = tail_inf;
        for k in (0..self.seg_min.len()).rev() {
            cur = cur.min(self.seg_min[k]);
            if k < n {
                inf[k] = cur;
            }
        }
        (m, inf, osc)
    }
}

fn walk_tail(last: u64, path_inf: f64) -> u64 {
    if last == 0 {
        return 0;
    }
    (path_inf.ceil().max(1.0) as u64).min(last)
}

/// Embeds the first `n` steps into a stored path.
///
/// A path that ends too early yields a partial embedding with status
/// [`EmbedStatus::HorizonReached`].
pub fn embed(path: &BesselPath, n: usize) -> Result<Embedding> {
    if path.is_empty() || !(path.values[0] >= 0.0 && path.values[0] < 1.0) || path.times[0] != 0.0 {
        return domain("the host path must start in [0, 1) at time 0");
    }
    let mut rec = Recorder::new(path.values[0]);
    let mut stop_times = vec![0.0];
    let mut walk = vec![0u64];
    let mut last_stop = 0;
    let mut x = 0u64;
    for k in 1..path.len() {
        let (t0, y0, t1, y) = (path.times[k - 1], path.values[k - 1], path.times[k], path.values[k]);
        rec.segment(t0, y0, t1, y);
        if walk.len() > n {
            continue;
        }
        let next = if y >= (x + 1) as f64 {
            x + 1
        } else if x >= 2 && y <= (x - 1) as f64 {
            x - 1
        } else {
            continue;
        };
        x = next;
        stop_times.push(t1);
        walk.push(x);
        last_stop = k;
    }
    let path_inf = path.values[last_stop..].iter().copied().fold(path.future_inf, f64::min);
    let (y_max, y_inf, osc_max) = rec.finish(path.future_inf);
    let status = if walk.len() > n { EmbedStatus::Complete } else { EmbedStatus::HorizonReached };
    Ok(Embedding {
        nu: path.nu,
        stop_times,
        walk_tail_inf: walk_tail(x, path_inf),
        walk,
        y_int: rec.y_int,
        y_max,
        y_inf,
        osc_max,
        status,
        requested: n,
    })
}

/// Simulates a path from 0 just long enough to embed `n` steps and reach
/// time `n`. The path is not stored; it ends at a stop time, where its
/// future infimum is sampled exactly.
pub fn simulate_embedding(
    order: BesselOrder,
    n: usize,
    scheme: Scheme,
    rng: &mut Stream,
    budget: u64,
) -> Result<Embedding> {
    let stepper = BesselStepper::new(order, scheme)?;
    let mut w = Walker::new(stepper, 0.0, budget);
    let mut rec = Recorder::new(0.0);
    let mut stop_times = Vec::with_capacity(n + 1);
    let mut walk = Vec::with_capacity(n + 1);
    stop_times.push(0.0);
    walk.push(0u64);
    let mut x = 0u64;
    let target = n as f64;
    while walk.len() <= n || w.t < target {
        let lo = if x >= 2 { Some((x - 1) as f64) } else { None };
        let hi = Some((x + 1) as f64);
        let next_int = w.t.floor() + 1.0;
        let ev = w.advance(lo, hi, next_int, &[], rng, &mut |t0, y0, t1, y1| rec.segment(t0, y0, t1, y1))?;
        if let Event::Exit(side) = ev {
            x = match side {
                Side::Upper => x + 1,
                Side::Lower => x - 1,
            };
            stop_times.push(w.t);
            walk.push(x);
        }
    }
    let tail = sample_future_inf(order, w.y, rng);
    let (y_max, y_inf, osc_max) = rec.finish(tail);
    Ok(Embedding {
        nu: order.nu(),
        stop_times,
        walk_tail_inf: walk_tail(x, tail),
        walk,
        y_int: rec.y_int,
        y_max,
        y_inf,
        osc_max,
        status: EmbedStatus::Complete,
        requested: n,
    })
}

/// Per-`n` discrepancies between the host path and the embedded walk, for
/// `n = 0..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremaProfile {
    /// `max_{m <= n} |Y(m) - X_m|`.
    pub abs_max: Vec<f64>,
    /// `|M(n) - Q_n|`.
    pub max_diff: Vec<f64>,
    /// `|I(n) - J_n|`.
    pub inf_diff: Vec<f64>,
}

pub fn extrema_discrepancy(emb: &Embedding) -> Result<ExtremaProfile> {
    emb.check_invariants()?;
    let h = emb.horizon();
    let j = emb.walk_future_inf();
    let mut abs_max = Vec::with_capacity(h + 1);
    let mut max_diff = Vec::with_capacity(h + 1);
    let mut inf_diff = Vec::with_capacity(h + 1);
    let (mut run, mut q) = (0.0f64, 0u64);
    for n in 0..=h {
        run = run.max((emb.y_int[n] - emb.walk[n] as f64).abs());
        q = q.max(emb.walk[n]);
        abs_max.push(run);
        max_diff.push((emb.y_max[n] - q as f64).abs());
        inf_diff.push((emb.y_inf[n] - j[n] as f64).abs());
    }
    Ok(ExtremaProfile { abs_max, max_diff, inf_diff })
}

/// An [`ExtremaProfile`] read off at grid points only, plus `t_n - n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridProfile {
    pub n: Vec<usize>,
    pub abs_max: Vec<f64>,
    pub max_diff: Vec<f64>,
    pub inf_diff: Vec<f64>,
    pub time_lag: Vec<f64>,
}

pub fn grid_profile(emb: &Embedding, grid: &[usize]) -> Result<GridProfile> {
    let full = extrema_discrepancy(emb)?;
    if let Some(&bad) = grid.iter().find(|&&n| n > emb.horizon()) {
        return domain(format!("grid point {bad} beyond the embedding horizon {}", emb.horizon()));
    }
    let pick = |v: &[f64]| grid.iter().map(|&n| v[n]).collect::<Vec<_>>();
    Ok(GridProfile {
        n: grid.to_vec(),
        abs_max: pick(&full.abs_max),
        max_diff: pick(&full.max_diff),
        inf_diff: pick(&full.inf_diff),
        time_lag: grid.iter().map(|&n| emb.stop_times[n] - n as f64).collect(),
    })
}

/// Which discrepancy a slope is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discrepancy {
    AbsMax,
    MaxDiff,
    InfDiff,
    TimeLag,
}

/// Seed-averaged profile at each grid point.
pub fn mean_profile(profiles: &[GridProfile], which: Discrepancy) -> Result<Vec<f64>> {
    let first = profiles.first().ok_or(Error::InsufficientSample { needed: 1, got: 0 })?;
    let mut sums = vec![0.0; first.n.len()];
    for p in profiles {
        if p.n != first.n {
            return domain("profiles were taken on different grids");
        }
        let v = match which {
            Discrepancy::AbsMax => &p.abs_max,
            Discrepancy::MaxDiff => &p.max_diff,
            Discrepancy::InfDiff => &p.inf_diff,
            Discrepancy::TimeLag => &p.time_lag,
        };
        for (s, x) in sums.iter_mut().zip(v) {
            *s += if which == Discrepancy::TimeLag { x.abs() } else { *x };
        }
    }
    Ok(sums.into_iter().map(|s| s / profiles.len() as f64).collect())
}

/// Slope of the log seed mean against `log n`. Needs at least 30 seeds and
/// a grid spanning three decades.
pub fn discrepancy_slope(profiles: &[GridProfile], which: Discrepancy, level: f64) -> Result<Regression> {
    if profiles.len() < MIN_SAMPLE {
        return Err(Error::InsufficientSample { needed: MIN_SAMPLE, got: profiles.len() });
    }
    let grid = &profiles[0].n;
    let lo = grid.iter().copied().filter(|&n| n > 0).min().unwrap_or(0);
    let hi = grid.iter().copied().max().unwrap_or(0);
    if lo == 0 || (hi as f64 / lo as f64).log10() < 3.0 - 1e-9 {
        return domain("the n-grid must span at least three decades");
    }
    let means = mean_profile(profiles, which)?;
    let (x, y): (Vec<f64>, Vec<f64>) =
        grid.iter().zip(&means).filter(|(&n, _)| n > 0).map(|(&n, &m)| (n as f64, m)).unzip();
    stats::loglog_fit(&x, &y, level)
}

/// Slope for `max_{m <= n} |Y(m) - X_m|`.
pub fn discrepancy_exponent(profiles: &[GridProfile], level: f64) -> Result<Regression> {
    discrepancy_slope(profiles, Discrepancy::AbsMax, level)
}

/// Up-step counts `(ups, visits)` per level below `rmax`, excluding step 0.
pub fn step_counts(walk: &[u64], rmax: u64) -> Vec<(u64, u64)> {
    let mut c = vec![(0u64, 0u64); rmax as usize + 1];
    for w in walk.windows(2) {
        if w[0] <= rmax {
            let e = &mut c[w[0] as usize];
            e.1 += 1;
            if w[1] > w[0] {
                e.0 += 1;
            }
        }
    }
    c
}

/// Chi-square of the up/down split at each level in `2..=rmax` against a
/// law, pooled over levels with at least `min_visits` visits.
pub fn transition_gof(walk: &[u64], law: &WalkLaw, rmax: u64, min_visits: u64) -> Result<stats::ChiSquareResult> {
    let counts = step_counts(walk, rmax);
    let mut stat = 0.0;
    let mut df = 0usize;
    for (r, &(up, visits)) in counts.iter().enumerate().skip(2) {
        if visits < min_visits {
            continue;
        }
        let p = law.up_prob(r as u64);
        let (eu, ed) = (visits as f64 * p, visits as f64 * (1.0 - p));
        let down = (visits - up) as f64;
        stat += (up as f64 - eu).powi(2) / eu + (down - ed).powi(2) / ed;
        df += 1;
    }
    if df == 0 {
        return Err(Error::InsufficientSample { needed: min_visits as usize, got: 0 });
    }
    let chi = statrs::distribution::ChiSquared::new(df as f64).map_err(|e| Error::Domain(e.to_string()))?;
    use statrs::distribution::ContinuousCDF;
    Ok(stats::ChiSquareResult { statistic: stat, df, p_value: chi.sf(stat), bins: df })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::besselsim::simulate_bessel;

    fn order(nu: f64) -> BesselOrder {
        BesselOrder::new(nu).unwrap()
    }

    #[test]
    fn first_stop_is_one() {
        for seed in 0..20 {
            let mut rng = Stream::new(seed, 0);
            let e = simulate_embedding(order(0.5), 5, Scheme::default(), &mut rng, 1 << 30).unwrap();
            assert_eq!(e.walk[1], 1);
            assert_eq!(e.walk[2], 2);
            e.check_invariants().unwrap();
        }
    }

    #[test]
    fn stored_path_embedding() {
        let mut rng = Stream::new(3, 1);
        let path = simulate_bessel(order(1.0), 0.0, 300.0, Scheme::default(), &mut rng, 1 << 30).unwrap();
        let e = embed(&path, 1_000_000).unwrap();
        assert_eq!(e.status, EmbedStatus::HorizonReached);
        assert!(e.steps() > 50);
        e.check_invariants().unwrap();
        for (&t, &x) in e.stop_times.iter().zip(&e.walk) {
            let k = path.times.iter().position(|&s| s == t).unwrap();
            assert_eq!(path.values[k], x as f64);
        }
        assert_eq!(e.y_int.len(), 301);
        let short = embed(&path, 10).unwrap();
        assert_eq!(short.status, EmbedStatus::Complete);
        assert_eq!(short.steps(), 10);
        assert_eq!(&short.walk[..], &e.walk[..11]);
    }

    #[test]
    fn extrema_bounds_hold_pathwise() {
        let mut rng = Stream::new(11, 2);
        let e = simulate_embedding(order(0.5), 3000, Scheme::default(), &mut rng, 1 << 32).unwrap();
        let p = extrema_discrepancy(&e).unwrap();
        assert_eq!(p.abs_max.len(), 3001);
        for n in 0..=3000 {
            assert!(p.max_diff[n] <= p.abs_max[n] + e.osc_max[n] + 1e-12, "n={n}");
        }
        let j = e.walk_future_inf();
        for n in 0..=3000 {
            assert!(e.y_inf[n] <= e.y_int[n]);
            assert!(j[n] <= e.walk[n]);
            if n > 0 {
                assert!(j[n] >= j[n - 1]);
            }
        }
    }

    #[test]
    fn slope_preconditions() {
        let p = GridProfile { n: vec![10, 100], abs_max: vec![1.0, 2.0], max_diff: vec![1.0; 2], inf_diff: vec![1.0; 2], time_lag: vec![0.0; 2] };
        let few = vec![p.clone(); 5];
        assert!(matches!(discrepancy_exponent(&few, 0.95), Err(Error::InsufficientSample { .. })));
        let narrow = vec![p; 30];
        assert!(matches!(discrepancy_exponent(&narrow, 0.95), Err(Error::Domain(_))));
        let one = GridProfile { n: vec![1000], abs_max: vec![1.0], max_diff: vec![1.0], inf_diff: vec![1.0], time_lag: vec![0.0] };
        assert!(discrepancy_exponent(&vec![one; 30], 0.95).is_err());
    }

    #[test]
    fn embedded_steps_follow_the_law() {
        let mut rng = Stream::new(5, 0);
        let e = simulate_embedding(order(0.5), 20_000, Scheme::default(), &mut rng, 1 << 34).unwrap();
        let law = WalkLaw::bessel(0.5).unwrap();
        let g = transition_gof(&e.walk, &law, 50, 20).unwrap();
        assert!(g.p_value > 1e-3, "{g:?}");
    }
}
