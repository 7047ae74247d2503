//! Coupling two walks whose laws share the drift `B/(4j)` and differ by
//! `O(j^-gamma)`.
//!
//! From `(j, k)` both coordinates move together as often as their laws
//! allow. When `p1_j >= p2_k` the moves `(+1,+1)`, `(+1,-1)`, `(-1,-1)` have
//! probabilities `1/2 + p2_k`, `p1_j - p2_k`, `1/2 - p1_j`; otherwise the
//! mirror table applies. A coordinate at 0 always steps up and the other one
//! follows its own law.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::Stream;
use crate::stats::{self, Regression, MIN_SAMPLE};
use crate::walklaw::{LawFamily, WalkLaw};
use crate::walksim::ReturnKernel;

/// Range over which laws are checked at construction.
const CHECK_JMAX: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    /// `p1_j < p2_k`, `j <= k`.
    #[serde(rename = "i")]
    I,
    /// `p1_j < p2_k`, `j > k`.
    #[serde(rename = "ii")]
    Ii,
    /// `p1_j >= p2_k`, `j < k`.
    #[serde(rename = "iii")]
    Iii,
    /// `p1_j >= p2_k`, `j >= k`.
    #[serde(rename = "iv")]
    Iv,
    /// Some coordinate is at 0.
    #[serde(rename = "boundary")]
    Boundary,
}

impl Case {
    pub fn as_str(&self) -> &'static str {
        match self {
            Case::I => "i",
            Case::Ii => "ii",
            Case::Iii => "iii",
            Case::Iv => "iv",
            Case::Boundary => "boundary",
        }
    }

    fn index(&self) -> usize {
        *self as usize
    }
}

/// One row of the joint transition table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub case: Case,
    pub moves: [(i8, i8); 3],
    pub probs: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct Coupling {
    law1: WalkLaw,
    law2: WalkLaw,
    b: f64,
    gamma: f64,
    c: f64,
    p1: Vec<f64>,
    p2: Vec<f64>,
    tails: Option<(ReturnKernel, ReturnKernel)>,
    floors: (u64, u64),
}

/// Largest level the walk can never pass downwards once above it: the last
/// `i >= 1` with up-probability 1, or 1.
fn floor_level(law: &WalkLaw) -> u64 {
    (1..=CHECK_JMAX).rev().find(|&i| law.up_prob(i) >= 1.0).unwrap_or(1)
}

fn power_params(law: &WalkLaw) -> Result<(f64, f64, f64)> {
    match law.family() {
        LawFamily::PowerFamily { b, gamma, c, .. } => Ok((*b, *gamma, *c)),
        other => Err(Error::Hypothesis(format!("coupled laws must be power families, got {other:?}"))),
    }
}

impl Coupling {
    pub fn new(law1: &WalkLaw, law2: &WalkLaw) -> Result<Self> {
        let (b1, g1, c1) = power_params(law1)?;
        let (b2, g2, c2) = power_params(law2)?;
        if b1 != b2 {
            return Err(Error::Hypothesis(format!("drift constants differ: {b1} vs {b2}")));
        }
        if g1 != g2 {
            return Err(Error::Hypothesis(format!("exponents differ: {g1} vs {g2}")));
        }
        if b1 <= 1.0 || !(g1 > 1.0 && g1 <= 2.0) {
            return Err(Error::Hypothesis(format!("need B > 1 and 1 < gamma <= 2, got B={b1}, gamma={g1}")));
        }
        let c = c1.max(c2);
        for law in [law1, law2] {
            law.check_power_hypothesis(b1, g1, c, CHECK_JMAX)?;
            if let Some(i) = (1..=CHECK_JMAX).find(|&i| law.up_prob(i) <= 0.0) {
                return Err(Error::Hypothesis(format!("walk cannot leave {{0, ..., {i}}}")));
            }
        }
        Ok(Self {
            law1: law1.clone(),
            law2: law2.clone(),
            b: b1,
            gamma: g1,
            c,
            p1: Vec::new(),
            p2: Vec::new(),
            tails: None,
            floors: (floor_level(law1), floor_level(law2)),
        })
    }

    pub fn laws(&self) -> (&WalkLaw, &WalkLaw) {
        (&self.law1, &self.law2)
    }

    /// Common perturbation bound `C`.
    pub fn c(&self) -> f64 {
        self.c
    }

    #[inline]
    fn cached(cache: &mut Vec<f64>, law: &WalkLaw, i: u64) -> f64 {
        let i = i as usize;
        if i >= cache.len() {
            let top = (2 * i).max(64);
            for l in cache.len()..=top {
                cache.push(law.p(l as u64));
            }
        }
        cache[i]
    }

    pub fn transition(&mut self, j: u64, k: u64) -> Transition {
        let p1 = Self::cached(&mut self.p1, &self.law1, j);
        let p2 = Self::cached(&mut self.p2, &self.law2, k);
        match (j, k) {
            (0, 0) => Transition { case: Case::Boundary, moves: [(1, 1), (1, 1), (1, 1)], probs: [1.0, 0.0, 0.0] },
            (0, _) => Transition { case: Case::Boundary, moves: [(1, 1), (1, -1), (1, -1)], probs: [0.5 + p2, 0.5 - p2, 0.0] },
            (_, 0) => Transition { case: Case::Boundary, moves: [(1, 1), (-1, 1), (-1, 1)], probs: [0.5 + p1, 0.5 - p1, 0.0] },
            _ if p1 >= p2 => Transition {
                case: if j >= k { Case::Iv } else { Case::Iii },
                moves: [(1, 1), (1, -1), (-1, -1)],
                probs: [0.5 + p2, p1 - p2, 0.5 - p1],
            },
            _ => Transition {
                case: if j <= k { Case::I } else { Case::Ii },
                moves: [(1, 1), (-1, 1), (-1, -1)],
                probs: [0.5 + p1, p2 - p1, 0.5 - p2],
            },
        }
    }

    /// One joint step. Cumulative thresholds are `1/2 + min(p)` and
    /// `1/2 + max(p)`, so each coordinate moves up exactly when its own law
    /// says so.
    pub fn joint_step(&mut self, j: u64, k: u64, rng: &mut Stream) -> (u64, u64, Case) {
        let t = self.transition(j, k);
        let u = rng.uniform();
        let idx = if u < t.probs[0] {
            0
        } else if u < t.probs[0] + t.probs[1] {
            1
        } else {
            2
        };
        let (dj, dk) = t.moves[idx];
        ((j as i64 + dj as i64) as u64, (k as i64 + dk as i64) as u64, t.case)
    }

    /// `2 C m^{2-gamma} / (B/4 - C m^{1-gamma})`, the bound on `|j - k|` in
    /// cases (i) and (iv) with `m = min(j, k)`, when the denominator is
    /// positive and `m >= B/2`.
    pub fn case_bound(&self, m: u64) -> Option<f64> {
        let mf = m as f64;
        if m == 0 || mf < self.b / 2.0 {
            return None;
        }
        let den = self.b / 4.0 - self.c * mf.powf(1.0 - self.gamma);
        (den > 0.0).then(|| 2.0 * self.c * mf.powf(2.0 - self.gamma) / den)
    }

    /// Checks the per-case inequalities and parity for one step.
    pub fn check_step(&self, case: Case, from: (u64, u64), to: (u64, u64)) -> Result<()> {
        let (j, k) = (from.0 as i64, from.1 as i64);
        let (j1, k1) = (to.0 as i64, to.1 as i64);
        let fail = |what: &str| {
            Err(Error::Certification(format!("case {} violated {what} at ({j},{k}) -> ({j1},{k1})", case.as_str())))
        };
        if (j1 - k1).rem_euclid(2) != 0 {
            return fail("parity");
        }
        let within = |d: i64, m: u64| self.case_bound(m).is_none_or(|b| d as f64 <= b * (1.0 + 1e-12));
        match case {
            Case::I if !within(k - j, from.0) => fail("the difference bound"),
            Case::Iv if !within(j - k, from.1) => fail("the difference bound"),
            Case::Ii if !(-2 <= j1 - k1 && j1 - k1 <= j - k) => fail("-2 <= j'-k' <= j-k"),
            Case::Iii if !(-2 <= k1 - j1 && k1 - j1 <= k - j) => fail("-2 <= k'-j' <= k-j"),
            _ => Ok(()),
        }
    }

    /// Samples the future infima `(J1, J2)` from positions `(j, k)` using
    /// one uniform. Each position must lie above its law's floor level.
    pub fn sample_tails(&mut self, j: u64, k: u64, rng: &mut Stream) -> Result<(u64, u64)> {
        if j < self.floors.0 || k < self.floors.1 {
            return Err(Error::Certification(format!(
                "positions ({j}, {k}) lie below the floor levels {:?}",
                self.floors
            )));
        }
        if self.tails.is_none() {
            self.tails = Some((ReturnKernel::new(&self.law1, self.floors.0)?, ReturnKernel::new(&self.law2, self.floors.1)?));
        }
        let (k1, k2) = self.tails.as_mut().unwrap();
        let v = rng.uniform();
        Ok((k1.future_inf_quantile(j, v)?, k2.future_inf_quantile(k, v)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingTrace {
    pub j: Vec<u64>,
    pub k: Vec<u64>,
    /// Case of the transition from step `n` to `n + 1`.
    pub cases: Vec<Case>,
    /// Future infima after the last step.
    pub tail_inf: (u64, u64),
}

impl CouplingTrace {
    pub fn len(&self) -> usize {
        self.j.len()
    }

    pub fn is_empty(&self) -> bool {
        self.j.is_empty()
    }

    /// Counts per case in the order i, ii, iii, iv, boundary.
    pub fn case_counts(&self) -> [u64; 5] {
        let mut c = [0; 5];
        for case in &self.cases {
            c[case.index()] += 1;
        }
        c
    }
}

/// Runs the joint chain for `n` steps from `(0, 0)`, checking every step.
pub fn simulate_coupling(cp: &mut Coupling, n: usize, rng: &mut Stream) -> Result<CouplingTrace> {
    let mut j = Vec::with_capacity(n + 1);
    let mut k = Vec::with_capacity(n + 1);
    let mut cases = Vec::with_capacity(n);
    let (mut a, mut b) = (0u64, 0u64);
    j.push(a);
    k.push(b);
    for _ in 0..n {
        let (a1, b1, case) = cp.joint_step(a, b, rng);
        cp.check_step(case, (a, b), (a1, b1))?;
        (a, b) = (a1, b1);
        j.push(a);
        k.push(b);
        cases.push(case);
    }
    let tail_inf = cp.sample_tails(a, b, rng)?;
    Ok(CouplingTrace { j, k, cases, tail_inf })
}

/// Per-`n` discrepancies of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingProfile {
    /// `max_{m <= n} |j_m - k_m|`.
    pub abs_max: Vec<u64>,
    /// `|Q1_n - Q2_n|`.
    pub max_diff: Vec<u64>,
    /// `|J1_n - J2_n|`.
    pub inf_diff: Vec<u64>,
}

fn future_inf(x: &[u64], tail: u64) -> Vec<u64> {
    let mut out = vec![0; x.len()];
    let mut cur = tail.min(*x.last().unwrap_or(&tail));
    for n in (0..x.len()).rev() {
        cur = cur.min(x[n]);
        out[n] = cur;
    }
    out
}

pub fn extrema_coupling(trace: &CouplingTrace) -> Result<CouplingProfile> {
    if trace.is_empty() {
        return Err(Error::Certification("empty trace".into()));
    }
    let j1 = future_inf(&trace.j, trace.tail_inf.0);
    let j2 = future_inf(&trace.k, trace.tail_inf.1);
    let n = trace.len();
    let mut abs_max = Vec::with_capacity(n);
    let mut max_diff = Vec::with_capacity(n);
    let mut inf_diff = Vec::with_capacity(n);
    let (mut run, mut q1, mut q2) = (0, 0, 0);
    for m in 0..n {
        run = run.max(trace.j[m].abs_diff(trace.k[m]));
        q1 = q1.max(trace.j[m]);
        q2 = q2.max(trace.k[m]);
        abs_max.push(run);
        max_diff.push(q1.abs_diff(q2));
        inf_diff.push(j1[m].abs_diff(j2[m]));
    }
    Ok(CouplingProfile { abs_max, max_diff, inf_diff })
}

/// Seed averages on an `n`-grid with log-log slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub grid: Vec<usize>,
    pub mean_abs_max: Vec<f64>,
    pub mean_max_diff: Vec<f64>,
    pub mean_inf_diff: Vec<f64>,
    /// Largest `|j_n - k_n|` over every seed and step.
    pub overall_max: u64,
    pub case_counts: [u64; 5],
    /// Slope of `mean_abs_max`.
    pub slope: Regression,
    /// Slope of `mean_max_diff`, when every mean is positive.
    pub max_diff_slope: Option<Regression>,
    pub seeds: usize,
}

/// Runs `seeds` traces of length `max(grid)` on streams
/// `(seed_base, stream_offset + s)`.
pub fn coupling_discrepancy(
    cp: &mut Coupling,
    grid: &[usize],
    seeds: usize,
    seed_base: u64,
    stream_offset: u64,
    level: f64,
) -> Result<CouplingReport> {
    if seeds < MIN_SAMPLE {
        return Err(Error::InsufficientSample { needed: MIN_SAMPLE, got: seeds });
    }
    if grid.len() < 3 || grid.contains(&0) {
        return domain("the n-grid needs at least three positive points");
    }
    let n = *grid.iter().max().unwrap();
    let g = grid.len();
    let (mut s_abs, mut s_max, mut s_inf) = (vec![0.0; g], vec![0.0; g], vec![0.0; g]);
    let mut overall = 0;
    let mut counts = [0u64; 5];
    for s in 0..seeds {
        let mut rng = Stream::new(seed_base, stream_offset + s as u64);
        let trace = simulate_coupling(cp, n, &mut rng)?;
        let prof = extrema_coupling(&trace)?;
        for (c, x) in counts.iter_mut().zip(trace.case_counts()) {
            *c += x;
        }
        overall = overall.max(prof.abs_max[n]);
        for (i, &m) in grid.iter().enumerate() {
            s_abs[i] += prof.abs_max[m] as f64;
            s_max[i] += prof.max_diff[m] as f64;
            s_inf[i] += prof.inf_diff[m] as f64;
        }
    }
    let scale = |v: Vec<f64>| v.into_iter().map(|x| x / seeds as f64).collect::<Vec<_>>();
    let (mean_abs_max, mean_max_diff, mean_inf_diff) = (scale(s_abs), scale(s_max), scale(s_inf));
    let x: Vec<f64> = grid.iter().map(|&m| m as f64).collect();
    let slope = if mean_abs_max.iter().all(|&v| v > 0.0) {
        stats::loglog_fit(&x, &mean_abs_max, level)?
    } else {
        stats::ols(&x.iter().map(|v| v.ln()).collect::<Vec<_>>(), &mean_abs_max, level)?
    };
    let max_diff_slope = if mean_max_diff.iter().all(|&v| v > 0.0) {
        Some(stats::loglog_fit(&x, &mean_max_diff, level)?)
    } else {
        None
    };
    Ok(CouplingReport {
        grid: grid.to_vec(),
        mean_abs_max,
        mean_max_diff,
        mean_inf_diff,
        overall_max: overall,
        case_counts: counts,
        slope,
        max_diff_slope,
        seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walklaw::Perturbation;

    fn pair(gamma: f64) -> Coupling {
        let l1 = WalkLaw::power(2.0, gamma, 1.0, Perturbation::Plus).unwrap();
        let l2 = WalkLaw::power(2.0, gamma, 0.0, Perturbation::Zero).unwrap();
        Coupling::new(&l1, &l2).unwrap()
    }

    #[test]
    fn table_example() {
        let l = WalkLaw::power(2.0, 2.0, 0.0, Perturbation::Zero).unwrap();
        let mut cp = Coupling::new(&l, &l).unwrap();
        let t = cp.transition(4, 8);
        assert_eq!(t.case, Case::Iv.min_case(Case::Iii));
        assert_eq!(t.probs, [0.5625, 0.0625, 0.375]);
        assert_eq!(t.moves[1], (1, -1));
    }

    impl Case {
        fn min_case(self, other: Case) -> Case {
            if self.index() < other.index() { self } else { other }
        }
    }

    #[test]
    fn identical_laws_stay_together() {
        let l = WalkLaw::power(2.0, 1.5, 1.0, Perturbation::Plus).unwrap();
        let mut cp = Coupling::new(&l, &l).unwrap();
        let mut rng = Stream::new(1, 0);
        let t = simulate_coupling(&mut cp, 20_000, &mut rng).unwrap();
        assert_eq!(t.j, t.k);
        assert_eq!(t.tail_inf.0, t.tail_inf.1);
        let p = extrema_coupling(&t).unwrap();
        assert!(p.abs_max.iter().chain(&p.max_diff).chain(&p.inf_diff).all(|&d| d == 0));
    }

    #[test]
    fn pathwise_bounds() {
        let mut cp = pair(1.5);
        let mut rng = Stream::new(2, 0);
        let t = simulate_coupling(&mut cp, 50_000, &mut rng).unwrap();
        let p = extrema_coupling(&t).unwrap();
        for n in 0..t.len() {
            assert!(p.max_diff[n] <= p.abs_max[n]);
        }
        let c = t.case_counts();
        assert!(c[0] + c[1] + c[2] + c[3] > 0);
    }

    #[test]
    fn rejects_bad_pairs() {
        let a = WalkLaw::power(2.0, 1.5, 1.0, Perturbation::Plus).unwrap();
        let trapped = WalkLaw::power(2.0, 1.5, 1.0, Perturbation::Minus).unwrap();
        assert!(matches!(Coupling::new(&a, &trapped), Err(Error::Hypothesis(_))));
        let other_b = WalkLaw::power(3.0, 1.5, 0.0, Perturbation::Zero).unwrap();
        assert!(Coupling::new(&a, &other_b).is_err());
        let bessel = WalkLaw::bessel(0.5).unwrap();
        assert!(Coupling::new(&a, &bessel).is_err());
        let flat = WalkLaw::power(0.5, 1.5, 0.0, Perturbation::Zero).unwrap();
        assert!(Coupling::new(&flat, &flat).is_err());
    }

    #[test]
    fn check_step_catches_violations() {
        let cp = pair(1.5);
        assert!(cp.check_step(Case::Ii, (5, 3), (4, 4)).is_ok());
        assert!(cp.check_step(Case::Ii, (5, 3), (6, 2)).is_err());
        assert!(cp.check_step(Case::Iv, (60, 10), (61, 11)).is_err());
        assert!(cp.check_step(Case::I, (100, 10_000), (101, 10_001)).is_err());
    }

    #[test]
    fn report_preconditions() {
        let mut cp = pair(2.0);
        assert!(coupling_discrepancy(&mut cp, &[10, 100, 1000], 5, 0, 0, 0.95).is_err());
        assert!(coupling_discrepancy(&mut cp, &[10, 100], 30, 0, 0, 0.95).is_err());
    }
}
