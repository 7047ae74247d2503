//! Bessel process paths.
//!
//! Values are advanced with the exact squared-Bessel transition
//! `Y_{t+h}^2 = (Y_t + sqrt(h) Z)^2 + h chi^2_{d-1}`, valid for every step
//! size. Step sizes only matter for detecting level crossings, so they adapt
//! to the distance `r` from the nearest level of interest,
//! `h = clamp((r/4)^2, delta, Delta)`. A crossing inside a step whose end
//! point has not crossed is caught with the Brownian-bridge probability
//! `exp(-2 r_0 r_1 / h)`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::Stream;
use crate::specfun::{BesselOrder, Interval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Exact squared-Bessel transition.
    Exact,
    /// Euler-Maruyama on `dY = dW + (nu + 1/2)/Y dt`, halving near 0.
    Euler,
}

/// Step-size control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scheme {
    /// Largest step.
    pub coarse: f64,
    /// Smallest step, used next to a level.
    pub fine: f64,
    pub integrator: Integrator,
}

impl Default for Scheme {
    fn default() -> Self {
        Self { coarse: 0.25, fine: 1e-5, integrator: Integrator::Exact }
    }
}

impl Scheme {
    pub fn validate(&self) -> Result<()> {
        if !(self.fine > 0.0 && self.coarse >= self.fine && self.coarse.is_finite()) {
            return domain(format!("need coarse >= fine > 0, got {} and {}", self.coarse, self.fine));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum ChiRest {
    /// `k` exponential pairs plus an optional squared normal.
    Split { pairs: u32, odd: bool },
    Gamma { shape: f64 },
}

/// One-step transition of a Bessel process.
#[derive(Debug, Clone, Copy)]
pub struct BesselStepper {
    order: BesselOrder,
    scheme: Scheme,
    chi: ChiRest,
}

impl BesselStepper {
    pub fn new(order: BesselOrder, scheme: Scheme) -> Result<Self> {
        scheme.validate()?;
        let k = order.dimension() - 1.0;
        let chi = if (k - k.round()).abs() < 1e-12 && k.round() <= 64.0 {
            let k = k.round() as u32;
            ChiRest::Split { pairs: k / 2, odd: k % 2 == 1 }
        } else {
            ChiRest::Gamma { shape: k / 2.0 }
        };
        Ok(Self { order, scheme, chi })
    }

    pub fn order(&self) -> BesselOrder {
        self.order
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    fn chi_rest(&self, rng: &mut Stream) -> f64 {
        match self.chi {
            ChiRest::Split { pairs, odd } => {
                let mut s = 0.0;
                if pairs > 0 {
                    let mut prod = 1.0;
                    for _ in 0..pairs {
                        prod *= rng.uniform_open();
                    }
                    s = -2.0 * prod.ln();
                }
                if odd {
                    let z = rng.normal();
                    s += z * z;
                }
                s
            }
            ChiRest::Gamma { shape } => rng.gamma(shape, 2.0),
        }
    }

    /// Value after time `h` from `y`.
    pub fn advance(&self, y: f64, h: f64, rng: &mut Stream) -> Result<f64> {
        match self.scheme.integrator {
            Integrator::Exact => {
                let m = y + h.sqrt() * rng.normal();
                Ok((m * m + h * self.chi_rest(rng)).sqrt())
            }
            Integrator::Euler => self.euler(y, h, rng),
        }
    }

    fn euler(&self, y: f64, h: f64, rng: &mut Stream) -> Result<f64> {
        let c = self.order.drift_coefficient();
        let floor = self.scheme.fine * 1e-3;
        if y <= 0.0 {
            // EM is singular at 0; one exact increment leaves it.
            let m = h.sqrt() * rng.normal();
            return Ok((m * m + h * self.chi_rest(rng)).sqrt());
        }
        let mut left = h;
        let mut y = y;
        while left > 0.0 {
            let mut s = left;
            while c / y * s > 0.5 * y {
                s /= 2.0;
                if s < floor {
                    return Err(Error::NonConvergence(format!(
                        "Euler step below {floor} near y = {y}"
                    )));
                }
            }
            let next = y + c / y * s + s.sqrt() * rng.normal();
            if next <= 0.0 {
                if s / 2.0 < floor {
                    return Err(Error::NonConvergence(format!("Euler step overshot 0 at y = {y}")));
                }
                continue;
            }
            y = next;
            left -= s;
        }
        Ok(y)
    }

    /// Step size at distance `r` from the nearest level of interest.
    pub fn step_for(&self, r: f64) -> f64 {
        (r * r / 16.0).clamp(self.scheme.fine, self.scheme.coarse)
    }
}

/// Probability that a Brownian bridge over time `h` between two points at
/// distances `r0, r1 > 0` on the same side of a level touches it.
pub fn bridge_hit_prob(r0: f64, r1: f64, h: f64) -> f64 {
    let e = 2.0 * r0 * r1 / h;
    if e > 60.0 {
        0.0
    } else {
        (-e).exp()
    }
}

/// Which side of an interval a path left through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lower,
    Upper,
}

/// What stopped [`Walker::advance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    Exit(Side),
    TimeReached,
}

/// A Bessel path advanced step by step.
#[derive(Debug, Clone)]
pub struct Walker {
    pub stepper: BesselStepper,
    pub t: f64,
    pub y: f64,
    pub steps: u64,
    pub budget: u64,
}

impl Walker {
    pub fn new(stepper: BesselStepper, y0: f64, budget: u64) -> Self {
        Self { stepper, t: 0.0, y: y0, steps: 0, budget }
    }

    /// Runs until the path leaves `(lo, hi)` or time `t_stop` is reached.
    /// Missing barriers are absent. `watch` lists further levels near which
    /// steps are refined. `obs` sees every segment `(t0, y0, t1, y1)`; an
    /// exit segment ends at the crossing, with `y1` equal to the barrier.
    pub fn advance<F: FnMut(f64, f64, f64, f64)>(
        &mut self,
        lo: Option<f64>,
        hi: Option<f64>,
        t_stop: f64,
        watch: &[f64],
        rng: &mut Stream,
        obs: &mut F,
    ) -> Result<Event> {
        loop {
            if self.t >= t_stop {
                return Ok(Event::TimeReached);
            }
            if let Some(l) = lo {
                if self.y <= l {
                    return Ok(Event::Exit(Side::Lower));
                }
            }
            if let Some(u) = hi {
                if self.y >= u {
                    return Ok(Event::Exit(Side::Upper));
                }
            }
            if self.steps >= self.budget {
                return Err(Error::BudgetExhausted { steps: self.budget });
            }
            let mut r = f64::INFINITY;
            if let Some(l) = lo {
                r = r.min(self.y - l);
            }
            if let Some(u) = hi {
                r = r.min(u - self.y);
            }
            for &w in watch {
                r = r.min((self.y - w).abs());
            }
            let mut h = self.stepper.step_for(r);
            let mut clipped = false;
            if self.t + h >= t_stop {
                h = t_stop - self.t;
                clipped = true;
            }
            let y0 = self.y;
            let y1 = self.stepper.advance(y0, h, rng)?;
            self.steps += 1;
            let t0 = self.t;
            let t1 = if clipped { t_stop } else { t0 + h };
            if let Some(l) = lo {
                if y1 <= l {
                    let tc = t0 + h * (y0 - l) / (y0 - y1);
                    obs(t0, y0, tc, l);
                    self.t = tc;
                    self.y = l;
                    return Ok(Event::Exit(Side::Lower));
                }
                let p = bridge_hit_prob(y0 - l, y1 - l, h);
                if p > 0.0 && rng.uniform() < p {
                    let tc = t0 + h / 2.0;
                    obs(t0, y0, tc, l);
                    self.t = tc;
                    self.y = l;
                    return Ok(Event::Exit(Side::Lower));
                }
            }
            if let Some(u) = hi {
                if y1 >= u {
                    let tc = t0 + h * (u - y0) / (y1 - y0);
                    obs(t0, y0, tc, u);
                    self.t = tc;
                    self.y = u;
                    return Ok(Event::Exit(Side::Upper));
                }
                let p = bridge_hit_prob(u - y0, u - y1, h);
                if p > 0.0 && rng.uniform() < p {
                    let tc = t0 + h / 2.0;
                    obs(t0, y0, tc, u);
                    self.t = tc;
                    self.y = u;
                    return Ok(Event::Exit(Side::Upper));
                }
            }
            obs(t0, y0, t1, y1);
            self.t = t1;
            self.y = y1;
        }
    }
}

/// First exit from an interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitSample {
    pub side: Side,
    pub time: f64,
}

/// Default step budget for single exits and occupation samples.
pub const EXIT_BUDGET: u64 = 100_000_000;

pub fn sample_exit(order: BesselOrder, iv: Interval, scheme: Scheme, rng: &mut Stream) -> Result<ExitSample> {
    if iv.x - iv.a <= 1e-12 * iv.a.max(1.0) {
        return Ok(ExitSample { side: Side::Lower, time: 0.0 });
    }
    let stepper = BesselStepper::new(order, scheme)?;
    let mut w = Walker::new(stepper, iv.x, EXIT_BUDGET);
    match w.advance(Some(iv.a), Some(iv.b), f64::INFINITY, &[], rng, &mut |_, _, _, _| {})? {
        Event::Exit(side) => Ok(ExitSample { side, time: w.t }),
        Event::TimeReached => unreachable!("no time limit was set"),
    }
}

/// Time a linear segment spends strictly inside `(lo, hi)`.
pub fn segment_time_in_band(t0: f64, y0: f64, t1: f64, y1: f64, lo: f64, hi: f64) -> f64 {
    let dt = t1 - t0;
    if dt <= 0.0 {
        return 0.0;
    }
    if y0 == y1 {
        return if y0 > lo && y0 < hi { dt } else { 0.0 };
    }
    let (a, b) = if y0 < y1 { (y0, y1) } else { (y1, y0) };
    let overlap = (b.min(hi) - a.max(lo)).max(0.0);
    dt * overlap / (b - a)
}

/// Exact-horizon draw of `(1/2 eps) |{s : |Y(s) - R| < eps}|` for a path
/// from 0.
///
/// The path starts where it first enters the band, at `R - eps`. Once it
/// reaches `m = R + eps + 1` it returns to the band's upper edge with
/// probability `((R + eps)/m)^{2 nu}`, in which case it restarts there;
/// otherwise it never comes back.
pub fn occupation_sample(
    order: BesselOrder,
    level: f64,
    eps: f64,
    scheme: Scheme,
    rng: &mut Stream,
) -> Result<f64> {
    if !(eps > 0.0 && level - eps > 0.0) {
        return domain(format!("band ({}, {}) must lie in (0, inf)", level - eps, level + eps));
    }
    let stepper = BesselStepper::new(order, scheme)?;
    let (lo, hi) = (level - eps, level + eps);
    let m = hi + 1.0;
    let back = (hi / m).powf(2.0 * order.nu());
    let mut w = Walker::new(stepper, lo, EXIT_BUDGET);
    let mut time = 0.0;
    loop {
        let ev = w.advance(None, Some(m), f64::INFINITY, &[lo, hi], rng, &mut |t0, y0, t1, y1| {
            time += segment_time_in_band(t0, y0, t1, y1, lo, hi);
        })?;
        debug_assert_eq!(ev, Event::Exit(Side::Upper));
        if !rng.bernoulli(back) {
            return Ok(time / (2.0 * eps));
        }
        w.y = hi;
    }
}

/// A stored path. Every crossing of an integer level appears as a grid
/// point with exactly that value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BesselPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub scheme: Scheme,
    pub nu: f64,
    /// `inf_{s >= T} Y(s)` after the last grid time `T`, sampled exactly.
    pub future_inf: f64,
}

impl BesselPath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }
}

/// Samples `inf_{s >= 0} Y(s)` for a path started at `y`.
pub fn sample_future_inf(order: BesselOrder, y: f64, rng: &mut Stream) -> f64 {
    y * rng.uniform_open().powf(1.0 / (2.0 * order.nu()))
}

/// Simulates `Y` on `[0, t_max]` from `y0`, refining near integer levels
/// and stopping exactly at integer times.
pub fn simulate_bessel(
    order: BesselOrder,
    y0: f64,
    t_max: f64,
    scheme: Scheme,
    rng: &mut Stream,
    budget: u64,
) -> Result<BesselPath> {
    if !(y0 >= 0.0 && t_max >= 0.0) {
        return domain("need y0 >= 0 and t_max >= 0");
    }
    let stepper = BesselStepper::new(order, scheme)?;
    let mut w = Walker::new(stepper, y0, budget);
    let mut times = vec![0.0];
    let mut values = vec![y0];
    while w.t < t_max {
        let next_int = (w.t.floor() + 1.0).min(t_max);
        let lo = w.y.ceil() - 1.0;
        let hi = w.y.floor() + 1.0;
        let lo = if lo <= 0.0 { None } else { Some(lo) };
        w.advance(lo, Some(hi), next_int, &[], rng, &mut |_, _, t1, y1| {
            times.push(t1);
            values.push(y1);
        })?;
    }
    let future_inf = sample_future_inf(order, w.y, rng);
    Ok(BesselPath { times, values, scheme, nu: order.nu(), future_inf })
}

/// `(1/2 eps)` times the time a stored path spends in `(R - eps, R + eps)`.
pub fn occupation_local_time(path: &BesselPath, level: f64, eps: f64) -> Result<f64> {
    let (lo, hi) = (level - eps, level + eps);
    let mut time = 0.0;
    let mut resolution: f64 = 0.0;
    for k in 1..path.len() {
        let (y0, y1) = (path.values[k - 1], path.values[k]);
        let t = segment_time_in_band(path.times[k - 1], y0, path.times[k], y1, lo, hi);
        if t > 0.0 || (y0.min(y1) < hi && y0.max(y1) > lo) {
            resolution = resolution.max((y1 - y0).abs());
        }
        time += t;
    }
    if resolution > eps {
        return Err(Error::Domain(format!(
            "band half-width {eps} is below the path resolution {resolution} near the level"
        )));
    }
    Ok(time / (2.0 * eps))
}

/// Derived processes on the grid of a stored path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedContinuous {
    /// Running maximum at grid times.
    pub m: Vec<f64>,
    /// Future infimum at grid times.
    pub i: Vec<f64>,
    /// `A(l) = sup{s : Y(s) <= l}` for integer levels `l` below the future
    /// infimum of the path end.
    pub a: Vec<f64>,
}

pub fn derived_continuous(path: &BesselPath) -> Result<DerivedContinuous> {
    if path.is_empty() {
        return Err(Error::Certification("empty path".into()));
    }
    let n = path.len();
    let mut m = Vec::with_capacity(n);
    let mut run = f64::NEG_INFINITY;
    for &y in &path.values {
        run = run.max(y);
        m.push(run);
    }
    let mut i = vec![0.0; n];
    let mut cur = path.future_inf;
    for k in (0..n).rev() {
        cur = cur.min(path.values[k]);
        i[k] = cur;
    }
    let levels = path.future_inf.ceil() as usize;
    let mut a = vec![0.0; levels];
    for k in 0..n {
        let y = path.values[k];
        let first = y.ceil().max(0.0) as usize;
        for slot in a.iter_mut().skip(first) {
            *slot = path.times[k];
        }
    }
    Ok(DerivedContinuous { m, i, a })
}
