//! Seeded simulation of nearest-neighbour walks.
//!
//! Every step consumes one 53-bit uniform `u` and moves up iff `u < E_x`.
//! "Infinite horizon" quantities are made finite without bias: once the walk
//! reaches an escape level `m` above a watched level `L`, a single Bernoulli
//! draw with the exact return probability `h(m) = P_m(hit L)` decides whether
//! it ever comes back. On a return the excursion down to `L` is simulated
//! from the Doob transform conditioned to hit `L`; otherwise the walk is
//! certified never to visit `L` or below again.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{domain, Error, Result};
use crate::rng::Stream;
use crate::walklaw::{tail_sum, LawFamily, WalkLaw};

const TWO53: f64 = 9_007_199_254_740_992.0;

fn threshold(p: f64) -> u64 {
    (p.clamp(0.0, 1.0) * TWO53).ceil() as u64
}

#[inline(always)]
fn draw53(rng: &mut Stream) -> u64 {
    rng.next_u64() >> 11
}

/// Up-step thresholds of a law, extended on demand.
#[derive(Debug, Clone)]
pub struct StepSampler {
    law: WalkLaw,
    thr: Vec<u64>,
}

impl StepSampler {
    pub fn new(law: &WalkLaw) -> Self {
        let mut s = Self { law: law.clone(), thr: Vec::new() };
        s.extend(1024);
        s
    }

    pub fn law(&self) -> &WalkLaw {
        &self.law
    }

    fn extend(&mut self, upto: usize) {
        let from = self.thr.len();
        for i in from..upto {
            self.thr.push(threshold(self.law.up_prob(i as u64)));
        }
    }

    #[inline(always)]
    pub fn step(&mut self, x: u64, rng: &mut Stream) -> u64 {
        let i = x as usize;
        if i >= self.thr.len() {
            self.extend((2 * i).max(1024));
        }
        let up = draw53(rng) < self.thr[i];
        if up {
            x + 1
        } else {
            x - 1
        }
    }
}

/// Relative accuracy of generic tail sums behind return probabilities.
const KERNEL_TOL: f64 = 1e-10;

/// Return probabilities to a fixed level `L` and the walk conditioned to
/// reach it.
#[derive(Debug, Clone)]
pub struct ReturnKernel {
    law: WalkLaw,
    level: u64,
    bessel: Option<f64>,
    /// `D(L + k)` for the generic case.
    d: Vec<f64>,
    /// `ln prod_{l=L+1}^{L+k} U_l`.
    log_w: Vec<f64>,
    cond_thr: Vec<u64>,
}

impl ReturnKernel {
    pub fn new(law: &WalkLaw, level: u64) -> Result<Self> {
        if level == 0 {
            return domain("the watched level must be at least 1");
        }
        let mut k = Self {
            law: law.clone(),
            level,
            bessel: law.bessel_nu(),
            d: Vec::new(),
            log_w: Vec::new(),
            cond_thr: Vec::new(),
        };
        if k.bessel.is_none() {
            k.grow(level + 64)?;
        }
        k.extend_cond(level + 64)?;
        Ok(k)
    }

    pub fn level(&self) -> u64 {
        self.level
    }

    fn grow(&mut self, top: u64) -> Result<()> {
        let have = self.d.len() as u64;
        if top < self.level + have {
            return Ok(());
        }
        let new_len = (top - self.level + 1).max(2 * have);
        let new_top = self.level + new_len - 1;
        let mut fresh = vec![0.0; (new_len - have) as usize];
        let mut dn = tail_sum(&self.law, new_top, KERNEL_TOL)?;
        for idx in (0..fresh.len()).rev() {
            fresh[idx] = dn;
            let i = self.level + have + idx as u64;
            // D(i-1) = 1 + U_i D(i)
            dn = 1.0 + self.law.u_ratio(i)? * dn;
        }
        self.d.extend(fresh);
        while (self.log_w.len() as u64) < new_len {
            let k = self.log_w.len() as u64;
            let v = if k == 0 { 0.0 } else { self.log_w[k as usize - 1] + self.law.u_ratio(self.level + k)?.ln() };
            self.log_w.push(v);
        }
        Ok(())
    }

    /// `h(i) = P_i(hit L)` for `i >= L`.
    pub fn hit_prob(&mut self, i: u64) -> Result<f64> {
        if i <= self.level {
            return Ok(1.0);
        }
        if let Some(nu) = self.bessel {
            return Ok((self.level as f64 / i as f64).powf(2.0 * nu));
        }
        self.grow(i)?;
        let k = (i - self.level) as usize;
        Ok((self.log_w[k].exp() * self.d[k] / self.d[0]).min(1.0))
    }

    fn extend_cond(&mut self, top: u64) -> Result<()> {
        while (self.level + self.cond_thr.len() as u64) <= top {
            let i = self.level + self.cond_thr.len() as u64;
            let p = if i == self.level {
                self.law.up_prob(i)
            } else if let Some(nu) = self.bessel {
                let x = i as f64;
                self.law.up_prob(i) * (x / (x + 1.0)).powf(2.0 * nu)
            } else {
                self.hit_prob(i + 1)? / self.hit_prob(i)? * self.law.up_prob(i)
            };
            self.cond_thr.push(threshold(p));
        }
        Ok(())
    }

    /// One step of the walk conditioned to hit `L`, from `x > L`.
    #[inline(always)]
    fn cond_step(&mut self, x: u64, rng: &mut Stream) -> Result<u64> {
        let k = (x - self.level) as usize;
        if k >= self.cond_thr.len() {
            self.extend_cond(x.max(self.level + 2 * self.cond_thr.len() as u64))?;
        }
        Ok(if draw53(rng) < self.cond_thr[k] { x + 1 } else { x - 1 })
    }

    /// Smallest level above `L` whose return probability is at most `target`.
    pub fn escape_level(&mut self, target: f64) -> Result<u64> {
        let mut m = self.level + 1;
        if let Some(nu) = self.bessel {
            let m0 = (self.level as f64 * target.powf(-1.0 / (2.0 * nu))).floor() as u64;
            m = m.max(m0.saturating_sub(1));
        }
        while self.hit_prob(m)? > target {
            m += 1;
        }
        Ok(m)
    }

    /// Samples `inf_{k >= 0} X_k` for the walk started at `m`, conditioned
    /// never to visit `L`. With `H(j) = P_m(hit j)` the law is
    /// `P(inf <= j | inf > L) = (H(j) - H(L)) / (1 - H(L))`.
    pub fn sample_future_inf(&mut self, m: u64, rng: &mut Stream) -> Result<u64> {
        let hm_l = self.hit_prob(m)?;
        // Unconditionally P(inf <= j) = P_m(hit j). Condition on inf > L.
        let u = rng.uniform();
        self.search_inf(m, hm_l + u * (1.0 - hm_l), self.level + 1)
    }

    /// Quantile `v` of `max(L, inf_{k >= 0} X_k)` for the walk from `m`,
    /// without conditioning. Feeding one uniform to several kernels couples
    /// their infima monotonically.
    pub fn future_inf_quantile(&mut self, m: u64, v: f64) -> Result<u64> {
        if m <= self.level {
            return Ok(self.level);
        }
        self.search_inf(m, v, self.level)
    }

    // Smallest j in [lo, m] with P_m(hit j) >= target.
    fn search_inf(&mut self, m: u64, target: f64, lo: u64) -> Result<u64> {
        let (mut lo, mut hi) = (lo, m);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.hit_from(m, mid)? >= target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(lo)
    }

    /// `P_m(hit j)` for `L <= j <= m`.
    fn hit_from(&mut self, m: u64, j: u64) -> Result<f64> {
        Ok((self.hit_prob(m)? / self.hit_prob(j)?).min(1.0))
    }
}

/// How a simulation is ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StopRule {
    /// Exactly `n` steps.
    Steps { n: u64 },
    /// Stop at the first position whose return probability to `level` is
    /// below `eps`; later visits are ignored with total probability `< eps`.
    LevelExceeded { level: u64, eps: f64 },
    /// Stop once the walk is certified never to visit `level` again, with
    /// the possible returns resolved exactly.
    Certified { level: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopStatus {
    Completed,
    BudgetExhausted,
}

/// A simulated trajectory `X_0, ..., X_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkPath {
    pub positions: Vec<u64>,
    pub seed_base: u64,
    pub stream_index: u64,
    pub status: StopStatus,
    /// The walk never visits this level or below after the last position.
    pub floor: Option<u64>,
    /// Upper bound on the probability that `floor` is wrong.
    pub residual: f64,
    /// `inf_{k >= n} X_k`, sampled from its exact conditional law.
    pub future_inf: Option<u64>,
}

impl WalkPath {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn last(&self) -> u64 {
        *self.positions.last().unwrap()
    }

    /// Nearest-neighbour, nonnegativity and parity checks.
    pub fn check_invariants(&self) -> Result<()> {
        for (k, w) in self.positions.windows(2).enumerate() {
            if w[0].abs_diff(w[1]) != 1 {
                return Err(Error::Certification(format!("non-unit step at {k}")));
            }
        }
        if let Some(&x0) = self.positions.first() {
            for (k, &x) in self.positions.iter().enumerate() {
                if (x + k as u64) % 2 != x0 % 2 {
                    return Err(Error::Certification(format!("parity broken at {k}")));
                }
            }
        }
        Ok(())
    }
}

enum Outcome {
    Done,
    Budget,
}

/// Runs from `start` until certified never to visit `kernel.level()` again.
/// `visit` sees every position after `start`.
///
/// With `jump`, a return excursion is collapsed to its endpoint: the walk
/// conditioned to hit `L` stays strictly above `L` until it does, and for
/// `nu <= 1` its duration has infinite mean.
#[allow(clippy::too_many_arguments)]
fn run_certified<V: FnMut(u64)>(
    steps: &mut StepSampler,
    kernel: &mut ReturnKernel,
    start: u64,
    escape: u64,
    rng: &mut Stream,
    budget: u64,
    jump: bool,
    visit: &mut V,
) -> Result<(u64, Outcome)> {
    let level = kernel.level();
    let mut x = start;
    let mut used = 0u64;
    loop {
        while x < escape {
            if used >= budget {
                return Ok((x, Outcome::Budget));
            }
            x = steps.step(x, rng);
            used += 1;
            visit(x);
        }
        let h = kernel.hit_prob(x)?;
        if !rng.bernoulli(h) {
            return Ok((x, Outcome::Done));
        }
        if jump {
            x = level;
            visit(x);
            continue;
        }
        while x > level {
            if used >= budget {
                return Ok((x, Outcome::Budget));
            }
            x = kernel.cond_step(x, rng)?;
            used += 1;
            visit(x);
        }
    }
}

/// Simulates and stores a path. A path stopped by the budget is returned
/// with [`StopStatus::BudgetExhausted`].
pub fn simulate_walk(
    law: &WalkLaw,
    stop: StopRule,
    seed_base: u64,
    stream_index: u64,
    budget: u64,
) -> Result<WalkPath> {
    simulate_walk_from(law, 0, stop, seed_base, stream_index, budget)
}

pub fn simulate_walk_from(
    law: &WalkLaw,
    start: u64,
    stop: StopRule,
    seed_base: u64,
    stream_index: u64,
    budget: u64,
) -> Result<WalkPath> {
    let mut rng = Stream::new(seed_base, stream_index);
    let mut steps = StepSampler::new(law);
    let mut positions = vec![start];
    let mut path = WalkPath {
        positions: Vec::new(),
        seed_base,
        stream_index,
        status: StopStatus::Completed,
        floor: None,
        residual: 0.0,
        future_inf: None,
    };
    match stop {
        StopRule::Steps { n } => {
            let mut x = start;
            for _ in 0..n.min(budget) {
                x = steps.step(x, &mut rng);
                positions.push(x);
            }
            if n > budget {
                path.status = StopStatus::BudgetExhausted;
            }
        }
        StopRule::LevelExceeded { level, eps } => {
            if !(eps > 0.0 && eps < 1.0) {
                return domain(format!("residual must lie in (0, 1), got {eps}"));
            }
            let mut kernel = ReturnKernel::new(law, level)?;
            let m = kernel.escape_level(eps)?;
            let mut x = start;
            let mut used = 0;
            while x < m {
                if used >= budget {
                    path.status = StopStatus::BudgetExhausted;
                    break;
                }
                x = steps.step(x, &mut rng);
                used += 1;
                positions.push(x);
            }
            if path.status == StopStatus::Completed {
                path.floor = Some(level);
                path.residual = kernel.hit_prob(m)?;
                path.future_inf = Some(kernel.sample_future_inf(m, &mut rng)?);
            }
        }
        StopRule::Certified { level } => {
            let mut kernel = ReturnKernel::new(law, level)?;
            let m = kernel.escape_level(0.5)?.max(start + 1);
            let (x, out) = run_certified(&mut steps, &mut kernel, start, m, &mut rng, budget, false, &mut |x| {
                positions.push(x)
            })?;
            match out {
                Outcome::Done => {
                    path.floor = Some(level);
                    path.future_inf = Some(kernel.sample_future_inf(x, &mut rng)?);
                }
                Outcome::Budget => path.status = StopStatus::BudgetExhausted,
            }
        }
    }
    path.positions = positions;
    Ok(path)
}

/// Number of visits to `level` along a path certified for that level.
pub fn total_local_time(path: &WalkPath, level: u64) -> Result<u64> {
    match path.floor {
        Some(f) if f >= level && path.status == StopStatus::Completed => {
            Ok(path.positions.iter().filter(|&&x| x == level).count() as u64)
        }
        _ => Err(Error::Certification(format!(
            "path is not certified for level {level}"
        ))),
    }
}

/// Exact draw of `xi(level, inf)` without storing the path.
///
/// The walk starts at `level` itself: a transient walk from 0 reaches every
/// level with probability one, and by the strong Markov property the visit
/// count is the same from there.
pub struct LocalTimeSampler {
    steps: StepSampler,
    kernel: ReturnKernel,
    escape: u64,
    budget: u64,
}

impl LocalTimeSampler {
    pub fn new(law: &WalkLaw, level: u64, budget: u64) -> Result<Self> {
        if level < 1 {
            return domain("level must be at least 1");
        }
        let mut kernel = ReturnKernel::new(law, level)?;
        let escape = kernel.escape_level(0.5)?;
        Ok(Self { steps: StepSampler::new(law), kernel, escape, budget })
    }

    pub fn sample(&mut self, rng: &mut Stream) -> Result<u64> {
        let level = self.kernel.level();
        let mut count = 1u64;
        let (_, out) = run_certified(
            &mut self.steps,
            &mut self.kernel,
            level,
            self.escape,
            rng,
            self.budget,
            true,
            &mut |x| count += (x == level) as u64,
        )?;
        match out {
            Outcome::Done => Ok(count),
            Outcome::Budget => Err(Error::BudgetExhausted { steps: self.budget }),
        }
    }
}

/// `X_n / sqrt(n)` for a walk started at 0.
pub fn scaled_position(steps: &mut StepSampler, n: u64, rng: &mut Stream) -> f64 {
    let mut x = 0u64;
    for _ in 0..n {
        x = steps.step(x, rng);
    }
    x as f64 / (n as f64).sqrt()
}

/// CDF of the limit law of `X_n / sqrt(n)` with density
/// `x^B e^{-x^2/2} / (2^{B/2-1/2} Gamma(B/2+1/2))`.
pub fn limit_law_cdf(b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr((b + 1.0) / 2.0, x * x / 2.0)
    }
}

pub fn limit_law_density(b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (b * x.ln() - x * x / 2.0 - (b / 2.0 - 0.5) * std::f64::consts::LN_2 - ln_gamma(b / 2.0 + 0.5)).exp()
}

/// Mean of the limit law, `sqrt 2 Gamma(B/2+1) / Gamma(B/2+1/2)`.
pub fn limit_law_mean(b: f64) -> f64 {
    (std::f64::consts::LN_2 / 2.0 + ln_gamma(b / 2.0 + 1.0) - ln_gamma(b / 2.0 + 0.5)).exp()
}

/// `B` of a law whose offsets behave like `B/(4j)`, when known.
pub fn drift_constant(law: &WalkLaw) -> Option<f64> {
    match law.family() {
        LawFamily::BesselDerived { nu } => Some(2.0 * nu + 1.0),
        LawFamily::PowerFamily { b, .. } => Some(*b),
        _ => None,
    }
}

/// Escape velocity at one level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum PsiValue {
    /// `Psi(R)`; `-2` means even the `j = -1` event failed.
    Exact(i64),
    /// The run of no-return levels reached the certified range; `Psi(R)` is
    /// at least this.
    AtLeast(i64),
}

impl PsiValue {
    pub fn lower(&self) -> i64 {
        match *self {
            PsiValue::Exact(v) | PsiValue::AtLeast(v) => v,
        }
    }
}

/// `ok[l]`: the last visit to `l` precedes the first visit to `l + 1`, for
/// `l = 0..=top`.
fn psi_from_ok(ok: &[bool], rmax: u64) -> Vec<PsiValue> {
    let n = ok.len();
    let mut run = vec![0usize; n + 1];
    for l in (0..n).rev() {
        run[l] = if ok[l] { run[l + 1] + 1 } else { 0 };
    }
    (1..=rmax)
        .map(|r| {
            let start = (r - 1) as usize;
            let len = run[start];
            let v = len as i64 - 2;
            if start + len >= n {
                PsiValue::AtLeast(v)
            } else {
                PsiValue::Exact(v)
            }
        })
        .collect()
}

/// Discrete derived processes of a path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedDiscrete {
    /// `Q_n = max_{k<=n} X_k`.
    pub q: Vec<u64>,
    /// `J_n = inf_{k>=n} X_k`, using the sampled future infimum.
    pub j: Vec<u64>,
    /// `G_m = sup{k : X_k <= m}` for `m < future infimum`.
    pub g: Vec<u64>,
    /// `Psi(R)` for `R = 1..=floor - 1`.
    pub psi: Vec<PsiValue>,
}

pub fn derived_discrete(path: &WalkPath) -> Result<DerivedDiscrete> {
    let (floor, inf) = match (path.floor, path.future_inf, path.status) {
        (Some(f), Some(i), StopStatus::Completed) => (f, i),
        _ => {
            return Err(Error::Certification(
                "future infimum unknown; simulate with a certified stop rule".into(),
            ))
        }
    };
    let xs = &path.positions;
    let n = xs.len();
    let mut q = Vec::with_capacity(n);
    let mut m = 0;
    for &x in xs {
        m = m.max(x);
        q.push(m);
    }
    let mut j = vec![0; n];
    let mut cur = inf;
    for k in (0..n).rev() {
        cur = cur.min(xs[k]);
        j[k] = cur;
    }
    let mut g = vec![0u64; inf as usize];
    for (k, &x) in xs.iter().enumerate() {
        if let Some(slot) = g.get_mut(x as usize) {
            *slot = k as u64;
        }
    }
    for m in 1..g.len() {
        g[m] = g[m].max(g[m - 1]);
    }
    // Levels 0..=floor are never visited after the path ends.
    let top = floor as usize;
    let mut first = vec![u64::MAX; top + 2];
    let mut last = vec![0u64; top + 2];
    for (k, &x) in xs.iter().enumerate() {
        let x = x as usize;
        if x <= top + 1 {
            if first[x] == u64::MAX {
                first[x] = k as u64;
            }
            last[x] = k as u64;
        }
    }
    let ok: Vec<bool> = (0..top).map(|l| first[l + 1] != u64::MAX && last[l] < first[l + 1]).collect();
    let rmax = floor.saturating_sub(1);
    Ok(DerivedDiscrete { q, j, g, psi: psi_from_ok(&ok, rmax) })
}

/// `Psi(R)` for `R = 1..=rmax` on one walk from 0, computed while
/// streaming. Levels up to `rmax + margin` are certified exactly.
pub fn escape_profile(
    law: &WalkLaw,
    rmax: u64,
    margin: u64,
    rng: &mut Stream,
    budget: u64,
) -> Result<Vec<PsiValue>> {
    let top = rmax + margin;
    let mut steps = StepSampler::new(law);
    let mut kernel = ReturnKernel::new(law, top)?;
    let escape = kernel.escape_level(0.9)?;
    let size = top as usize + 2;
    let mut first = vec![u64::MAX; size];
    let mut last = vec![0u64; size];
    first[0] = 0;
    let mut t = 0u64;
    let (_, out) = run_certified(&mut steps, &mut kernel, 0, escape, rng, budget, true, &mut |x| {
        t += 1;
        let i = x as usize;
        if i < size {
            if first[i] == u64::MAX {
                first[i] = t;
            }
            last[i] = t;
        }
    })?;
    if let Outcome::Budget = out {
        return Err(Error::BudgetExhausted { steps: budget });
    }
    let ok: Vec<bool> = (0..=top as usize).map(|l| last[l] < first[l + 1]).collect();
    Ok(psi_from_ok(&ok, rmax))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walklaw::local_time_law;

    #[test]
    fn deterministic_up_walk() {
        let law = WalkLaw::constant(0.5).unwrap();
        let p = simulate_walk(&law, StopRule::Steps { n: 50 }, 1, 2, u64::MAX).unwrap();
        assert!(p.positions.iter().enumerate().all(|(k, &x)| x == k as u64));
        let p = simulate_walk(&law, StopRule::Certified { level: 20 }, 1, 2, u64::MAX).unwrap();
        assert_eq!(total_local_time(&p, 5).unwrap(), 1);
        let d = derived_discrete(&p).unwrap();
        let n = p.len() as u64;
        assert!(d.q.iter().enumerate().all(|(k, &v)| v == k as u64));
        assert!(d.j.iter().enumerate().all(|(k, &v)| v == k as u64));
        assert!(d.g.iter().enumerate().all(|(k, &v)| v == k as u64));
        assert!(matches!(d.psi[0], PsiValue::AtLeast(_)));
        assert!(n > 20);
    }

    #[test]
    fn paths_are_reproducible_and_valid() {
        let law = WalkLaw::bessel(0.5).unwrap();
        let a = simulate_walk(&law, StopRule::Certified { level: 8 }, 9, 4, u64::MAX).unwrap();
        let b = simulate_walk(&law, StopRule::Certified { level: 8 }, 9, 4, u64::MAX).unwrap();
        assert_eq!(a, b);
        a.check_invariants().unwrap();
        assert_eq!(a.positions[0], 0);
    }

    #[test]
    fn budget_is_reported() {
        let law = WalkLaw::bessel(0.5).unwrap();
        let p = simulate_walk(&law, StopRule::Certified { level: 1000 }, 1, 1, 100).unwrap();
        assert_eq!(p.status, StopStatus::BudgetExhausted);
        assert_eq!(p.len(), 101);
        assert!(total_local_time(&p, 10).is_err());
        assert!(derived_discrete(&p).is_err());
    }

    #[test]
    fn local_time_mean_matches_escape_probability() {
        let law = WalkLaw::bessel(0.5).unwrap();
        let mut s = LocalTimeSampler::new(&law, 5, u64::MAX).unwrap();
        let mut rng = Stream::new(77, 0);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| s.sample(&mut rng).unwrap() as f64).collect();
        let m = crate::stats::mean(&xs);
        let se = crate::stats::std_error(&xs);
        let want = local_time_law(&law, 5).unwrap().mean();
        assert!((m - want).abs() < 4.0 * se, "{m} vs {want}");
    }

    #[test]
    fn generic_kernel_matches_closed_form() {
        // Same law written as an explicit table over a Bessel tail.
        let nu = 0.5;
        let table: Vec<f64> = (1..=30).map(|i| WalkLaw::bessel(nu).unwrap().p(i)).collect();
        let law = WalkLaw::new(LawFamily::Explicit {
            table,
            tail: Box::new(LawFamily::BesselDerived { nu }),
        })
        .unwrap();
        let mut k = ReturnKernel::new(&law, 10).unwrap();
        for m in [11u64, 20, 40, 200] {
            let h = k.hit_prob(m).unwrap();
            assert!((h - 10.0 / m as f64).abs() < 1e-9, "m={m}: {h}");
        }
    }

    #[test]
    fn limit_law_mean_for_b2() {
        assert!((limit_law_mean(2.0) - 2.0 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-14);
        // density integrates to the CDF
        let mut s = 0.0;
        let h = 1e-4;
        let mut x = h / 2.0;
        while x < 2.0 {
            s += limit_law_density(2.0, x) * h;
            x += h;
        }
        assert!((s - limit_law_cdf(2.0, 2.0)).abs() < 1e-7);
    }

    #[test]
    fn inverse_relation_of_j_and_g() {
        let law = WalkLaw::bessel(1.0).unwrap();
        for idx in 0..200 {
            let p = simulate_walk(&law, StopRule::Certified { level: 15 }, 3, idx, u64::MAX).unwrap();
            let d = derived_discrete(&p).unwrap();
            for (m, &gm) in d.g.iter().enumerate() {
                let gm = gm as usize;
                assert!(d.j[gm] <= m as u64);
                let next = d.j.get(gm + 1).copied().unwrap_or(p.future_inf.unwrap());
                assert!(next > m as u64);
            }
            for k in 0..p.len() {
                assert!(d.j[k] <= p.positions[k] && p.positions[k] <= d.q[k]);
            }
        }
    }

    #[test]
    fn psi_definition_on_small_example() {
        // ok = [T, T, F, T, T, T]
        let ok = [true, true, false, true, true, true];
        let psi = psi_from_ok(&ok, 5);
        assert_eq!(psi[0], PsiValue::Exact(0)); // R=1: ok[0], ok[1]
        assert_eq!(psi[1], PsiValue::Exact(-1));
        assert_eq!(psi[2], PsiValue::Exact(-2));
        assert_eq!(psi[3], PsiValue::AtLeast(1));
    }
}
