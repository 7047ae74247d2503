//! Laws of nearest-neighbour walks on the nonnegative integers.
//!
//! A law assigns to every level `i >= 1` an offset `p_i` in `[-1/2, 1/2]`;
//! from `i` the walk steps up with probability `E_i = 1/2 + p_i` and down
//! otherwise. Level 0 always reflects (`E_0 = 1`).

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::verdict::{TestVerdict, Verdict};

/// Sign pattern `s(j)` of the perturbation term of a power family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Perturbation {
    Zero,
    Plus,
    Minus,
    Alternating,
}

impl Perturbation {
    fn sign(&self, j: u64) -> f64 {
        match self {
            Perturbation::Zero => 0.0,
            Perturbation::Plus => 1.0,
            Perturbation::Minus => -1.0,
            Perturbation::Alternating => {
                if j % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LawFamily {
    /// Walk read off a Bessel process of order `nu` at unit-band exits.
    BesselDerived { nu: f64 },
    /// `p_j = B/(4j) + C s(j) / j^gamma`, clipped to `[-1/2, 1/2]`.
    PowerFamily {
        b: f64,
        gamma: f64,
        c: f64,
        rule: Perturbation,
    },
    /// `p_1..p_n` from `table`, then the `tail` law.
    Explicit { table: Vec<f64>, tail: Box<LawFamily> },
    /// The same offset at every level.
    Constant { p: f64 },
}

/// An immutable, validated walk law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LawFamily", into = "LawFamily")]
pub struct WalkLaw {
    family: LawFamily,
}

impl TryFrom<LawFamily> for WalkLaw {
    type Error = Error;
    fn try_from(family: LawFamily) -> Result<Self> {
        WalkLaw::new(family)
    }
}

impl From<WalkLaw> for LawFamily {
    fn from(law: WalkLaw) -> Self {
        law.family
    }
}

fn check_family(f: &LawFamily) -> Result<()> {
    match f {
        LawFamily::BesselDerived { nu } => {
            if !(*nu > 0.0 && nu.is_finite()) {
                return domain(format!("Bessel order must be positive, got {nu}"));
            }
        }
        LawFamily::PowerFamily { b, gamma, c, .. } => {
            if !(b.is_finite() && *gamma > 0.0 && gamma.is_finite() && *c >= 0.0 && c.is_finite()) {
                return domain(format!("invalid power family B={b} gamma={gamma} C={c}"));
            }
        }
        LawFamily::Explicit { table, tail } => {
            if let Some(p) = table.iter().find(|p| !(-0.5..=0.5).contains(*p)) {
                return domain(format!("table offset {p} outside [-1/2, 1/2]"));
            }
            check_family(tail)?;
        }
        LawFamily::Constant { p } => {
            if !(-0.5..=0.5).contains(p) {
                return domain(format!("offset {p} outside [-1/2, 1/2]"));
            }
        }
    }
    Ok(())
}

/// `(A_R R^{2nu}, B_R R^{2nu})` with `A_R = (R-1)^{-2nu} - R^{-2nu}` and
/// `B_R = R^{-2nu} - (R+1)^{-2nu}`; both accurate for large `R`.
pub fn bessel_scaled_ab(nu: f64, r: u64) -> (f64, f64) {
    let inv = 1.0 / r as f64;
    let a = (-2.0 * nu * (-inv).ln_1p()).exp_m1();
    let b = -(-2.0 * nu * inv.ln_1p()).exp_m1();
    (a, b)
}

fn family_p(f: &LawFamily, i: u64) -> f64 {
    match f {
        LawFamily::BesselDerived { nu } => {
            if i <= 1 {
                0.5
            } else {
                let (a, b) = bessel_scaled_ab(*nu, i);
                (a - b) / (2.0 * (a + b))
            }
        }
        LawFamily::PowerFamily { b, gamma, c, rule } => {
            if i == 0 {
                return 0.5;
            }
            let j = i as f64;
            (b / (4.0 * j) + c * rule.sign(i) / j.powf(*gamma)).clamp(-0.5, 0.5)
        }
        LawFamily::Explicit { table, tail } => {
            if i >= 1 && (i as usize) <= table.len() {
                table[i as usize - 1]
            } else {
                family_p(tail, i)
            }
        }
        LawFamily::Constant { p } => *p,
    }
}

fn family_u(f: &LawFamily, i: u64) -> f64 {
    match f {
        LawFamily::BesselDerived { nu } if i >= 2 => {
            let (a, b) = bessel_scaled_ab(*nu, i);
            b / a
        }
        LawFamily::Explicit { table, tail } if (i as usize) > table.len() => family_u(tail, i),
        _ => {
            let p = family_p(f, i);
            (0.5 - p) / (0.5 + p)
        }
    }
}

impl WalkLaw {
    pub fn new(family: LawFamily) -> Result<Self> {
        check_family(&family)?;
        Ok(Self { family })
    }

    pub fn bessel(nu: f64) -> Result<Self> {
        Self::new(LawFamily::BesselDerived { nu })
    }

    pub fn power(b: f64, gamma: f64, c: f64, rule: Perturbation) -> Result<Self> {
        Self::new(LawFamily::PowerFamily { b, gamma, c, rule })
    }

    pub fn constant(p: f64) -> Result<Self> {
        Self::new(LawFamily::Constant { p })
    }

    pub fn family(&self) -> &LawFamily {
        &self.family
    }

    pub fn bessel_nu(&self) -> Option<f64> {
        match self.family {
            LawFamily::BesselDerived { nu } => Some(nu),
            _ => None,
        }
    }

    /// Offset `p_i`. Level 0 reports `1/2` since it always reflects.
    pub fn p(&self, i: u64) -> f64 {
        if i == 0 {
            0.5
        } else {
            family_p(&self.family, i)
        }
    }

    /// Up-step probability `E_i`.
    pub fn up_prob(&self, i: u64) -> f64 {
        if i == 0 {
            1.0
        } else {
            0.5 + self.p(i)
        }
    }

    /// `U_i = (1 - E_i)/E_i`.
    pub fn u_ratio(&self, i: u64) -> Result<f64> {
        if i == 0 {
            return domain("U_i is defined for i >= 1");
        }
        if 0.5 + self.p(i) <= 0.0 {
            return Err(Error::DegenerateLaw(format!("E_{i} = 0")));
        }
        Ok(family_u(&self.family, i))
    }

    fn u_unchecked(&self, i: u64) -> f64 {
        family_u(&self.family, i)
    }

    /// Verifies `|p_j - B/(4j)| <= C/j^gamma` for `B/2 <= j <= jmax`.
    /// Below `B/2` the drift term alone exceeds `1/2` and clipping applies.
    pub fn check_power_hypothesis(&self, b: f64, gamma: f64, c: f64, jmax: u64) -> Result<()> {
        let start = ((b / 2.0).ceil() as u64).max(1);
        for j in start..=jmax {
            let jf = j as f64;
            let dev = (self.p(j) - b / (4.0 * jf)).abs();
            if dev > c / jf.powf(gamma) * (1.0 + 1e-12) + 1e-15 {
                return Err(Error::Hypothesis(format!(
                    "|p_{j} - B/(4j)| = {dev} exceeds C/j^gamma"
                )));
            }
        }
        Ok(())
    }
}

/// Geometric law of the total number of visits to a level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeLaw {
    pub level: u64,
    pub p_star: f64,
    pub q_star: f64,
}

impl LocalTimeLaw {
    pub fn new(level: u64, p_star: f64) -> Result<Self> {
        if !(p_star > 0.0 && p_star <= 1.0) {
            return domain(format!("escape probability {p_star} outside (0, 1]"));
        }
        Ok(Self { level, p_star, q_star: 1.0 - p_star })
    }

    pub fn pmf(&self, k: u64) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.p_star * self.q_star.powi((k - 1).min(i32::MAX as u64) as i32)
        }
    }

    pub fn mean(&self) -> f64 {
        1.0 / self.p_star
    }
}

/// `p_R` of the Bessel-derived walk.
pub fn p_bessel(nu: f64, r: u64) -> Result<f64> {
    Ok(WalkLaw::bessel(nu)?.p(r))
}

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}

const BLOCK_RATIO: f64 = std::f64::consts::SQRT_2;
const TAIL_BLOCKS: usize = 10;

/// Classifies `sum_j prod_{i<=j} U_i` as finite (transient) or infinite.
///
/// Terms are summed over blocks `[r^m, r^{m+1})` with `r = sqrt 2`. A term
/// sequence behaving like `j^{-s}` gives block ratios near `r^{1-s}`; the
/// walk is declared transient when the last ten ratios are at most
/// `r^{-0.1}` and the geometric remainder estimate is below `tol` times the
/// sum, recurrent when they are all at least `r^{0.1}`.
///
/// A level with `U_i = 0` reflects the walk upwards, so products restart
/// after it; zeros recurring in the upper half of the scan mean the walk can
/// never come back down and are reported as transient.
pub fn is_transient(law: &WalkLaw, tol: f64, jmax: u64) -> Result<TestVerdict> {
    if jmax < 1000 {
        return domain(format!("jmax must be at least 1000, got {jmax}"));
    }
    let mut log_prod = 0.0;
    let mut total = Kahan::default();
    let mut block = Kahan::default();
    let mut blocks: Vec<f64> = Vec::new();
    let mut next_edge = BLOCK_RATIO;
    let mut last_zero = 0u64;
    for j in 1..=jmax {
        let u = law.u_unchecked(j);
        if u <= 0.0 {
            last_zero = j;
            log_prod = 0.0;
            total = Kahan::default();
            block = Kahan::default();
            blocks.clear();
            next_edge = BLOCK_RATIO;
            continue;
        }
        log_prod += u.ln();
        let t = log_prod.exp();
        total.add(t);
        block.add(t);
        let rel = (j - last_zero) as f64;
        if rel + 1.0 >= next_edge {
            blocks.push(block.value());
            block = Kahan::default();
            while next_edge <= rel + 1.0 {
                next_edge *= BLOCK_RATIO;
            }
        }
    }
    let n = blocks.len();
    let tail: Vec<f64> = blocks[n.saturating_sub(TAIL_BLOCKS + 1)..].to_vec();
    let ratios: Vec<f64> = tail.windows(2).map(|w| w[1] / w[0]).collect();
    let sum = total.value();
    let mut verdict = Verdict::Inconclusive;
    if last_zero > jmax / 2 {
        verdict = Verdict::Converges;
    } else if ratios.len() == TAIL_BLOCKS {
        let down = BLOCK_RATIO.powf(-0.1);
        let up = BLOCK_RATIO.powf(0.1);
        if ratios.iter().all(|&q| q <= down) {
            let q = *ratios.last().unwrap();
            let remainder = tail.last().unwrap() * q / (1.0 - q);
            if remainder <= tol * sum {
                verdict = Verdict::Converges;
            }
        } else if ratios.iter().all(|&q| q >= up) {
            verdict = Verdict::Diverges;
        }
    }
    let conclusion = match verdict {
        Verdict::Converges => Some("transient".to_string()),
        Verdict::Diverges => Some("recurrent".to_string()),
        Verdict::Inconclusive => None,
    };
    Ok(TestVerdict { verdict, conclusion, partial_sum: sum, block_sums: tail, tail_ratios: ratios })
}

/// Default term budget for [`d_tail`].
pub const D_TAIL_JMAX: u64 = 50_000_000;

/// `D(R, inf) = 1 + sum_{j>=1} prod_{i=1}^{j} U_{R+i}` by direct summation.
///
/// At `j = 2^m` the local decay exponent `s` is read off `t_j / t_{j/2}` and
/// the remainder is extrapolated as a power-law tail. Summation stops once
/// the extrapolation's own error, about `remainder / j`, is below
/// `tol * sum`.
pub fn d_tail(law: &WalkLaw, r: u64, tol: f64) -> Result<f64> {
    d_tail_budget(law, r, tol, D_TAIL_JMAX)
}

pub fn d_tail_budget(law: &WalkLaw, r: u64, tol: f64, jmax: u64) -> Result<f64> {
    if r == 0 {
        return domain("D(R, inf) needs R >= 1");
    }
    let mut sum = Kahan::default();
    sum.add(1.0);
    let mut log_prod = 0.0;
    let mut half_term = f64::NAN;
    let mut checkpoint = 16u64;
    for j in 1..=jmax {
        let u = law.u_unchecked(r + j);
        if u <= 0.0 {
            return Ok(sum.value());
        }
        log_prod += u.ln();
        let t = log_prod.exp();
        sum.add(t);
        if t < f64::MIN_POSITIVE {
            return Ok(sum.value());
        }
        if j == 8 {
            half_term = t;
        }
        if j == checkpoint {
            // Fit t ~ n^-s in the absolute index n = R + j.
            let n = (r + j) as f64;
            let s = (half_term / t).ln() / (n / (r + j / 2) as f64).ln();
            if s > 1.0 {
                // sum over k > n of t (n/k)^s
                let rem = t * n.powf(s) * (n + 0.5).powf(1.0 - s) / (s - 1.0);
                if rem / n < tol * sum.value() || rem < f64::EPSILON * sum.value() {
                    return Ok(sum.value() + rem);
                }
            }
            half_term = t;
            checkpoint *= 2;
        }
    }
    Err(Error::NonConvergence(format!(
        "D({r}, inf) tail did not settle within {jmax} terms"
    )))
}

/// `D(R, inf)`: closed form for Bessel-derived laws, [`d_tail`] otherwise.
pub fn tail_sum(law: &WalkLaw, r: u64, tol: f64) -> Result<f64> {
    match law.family {
        LawFamily::BesselDerived { nu } if r >= 1 => {
            // D = R^{-2nu} / A_{R+1} = 1 / (B_R R^{2nu})
            let (_, b) = bessel_scaled_ab(nu, r);
            Ok(1.0 / b)
        }
        _ => d_tail(law, r, tol),
    }
}

/// Geometric law of the total number of visits to `R`.
pub fn local_time_law(law: &WalkLaw, r: u64) -> Result<LocalTimeLaw> {
    if r < 2 {
        return domain(format!("local time law is stated for R >= 2, got {r}"));
    }
    let d = tail_sum(law, r, 1e-12)?;
    let p_star = law.up_prob(r) / d;
    if let Some(nu) = law.bessel_nu() {
        let rf = r as f64;
        // (1/2 + p_R)((R+1)^{2nu} - R^{2nu}) / (R+1)^{2nu}
        let closed = law.up_prob(r) * -(2.0 * nu * (rf / (rf + 1.0)).ln()).exp_m1();
        // the log of R/(R+1) loses about R ulps
        if ((p_star - closed) / closed).abs() > 1e-12f64.max(8.0 * rf * f64::EPSILON) {
            return Err(Error::Certification(format!(
                "escape probability {p_star} disagrees with closed form {closed}"
            )));
        }
    }
    LocalTimeLaw::new(r, p_star)
}

/// Probability that the walk started at `m` ever visits `R < m`.
///
/// With `w_k = prod_{l=R+1}^{k} U_l` this is `w_m D(m) / D(R)`.
pub fn return_probability(law: &WalkLaw, m: u64, r: u64) -> Result<f64> {
    if r == 0 {
        return domain("return level must be at least 1");
    }
    if m <= r {
        return if m == r { Ok(1.0) } else { domain(format!("start {m} below target {r}")) };
    }
    if let Some(nu) = law.bessel_nu() {
        if r >= 1 {
            return Ok((r as f64 / m as f64).powf(2.0 * nu));
        }
    }
    let mut log_w = 0.0;
    for l in r + 1..=m {
        let u = law.u_unchecked(l);
        if u <= 0.0 {
            return Ok(0.0);
        }
        log_w += u.ln();
    }
    let dm = tail_sum(law, m, 1e-12)?;
    let dr = tail_sum(law, r, 1e-12)?;
    Ok((log_w.exp() * dm / dr).min(1.0))
}

/// Same as [`return_probability`] but always by tail sums, for checking
/// closed forms.
pub fn return_probability_by_sums(law: &WalkLaw, m: u64, r: u64, tol: f64) -> Result<f64> {
    if m <= r || r == 0 {
        return domain("need m > R >= 1");
    }
    let mut log_w = 0.0;
    for l in r + 1..=m {
        log_w += law.u_unchecked(l).ln();
    }
    Ok(log_w.exp() * d_tail(law, m, tol)? / d_tail(law, r, tol)?)
}

/// Escape probability from `R` for the chain absorbed at `n`.
fn absorbed_escape(law: &WalkLaw, r: u64, n: u64) -> f64 {
    // g(i) = P_i(hit R before N) on R+1..N-1 with g(R) = 1, g(N) = 0:
    // -(1-E_i) g(i-1) + g(i) - E_i g(i+1) = 0, solved by the Thomas algorithm.
    let m = (n - r - 1) as usize;
    let mut cp = vec![0.0; m];
    let mut dp = vec![0.0; m];
    for k in 0..m {
        let i = r + 1 + k as u64;
        let up = law.up_prob(i);
        let lo = -(1.0 - up);
        let hi = -up;
        let rhs = if k == 0 { 1.0 - up } else { 0.0 };
        let (c_prev, d_prev) = if k == 0 { (0.0, 0.0) } else { (cp[k - 1], dp[k - 1]) };
        let denom = 1.0 - lo * c_prev;
        if denom == 0.0 {
            cp[k] = 0.0;
            dp[k] = 0.0;
            continue;
        }
        cp[k] = hi / denom;
        dp[k] = (rhs - lo * d_prev) / denom;
    }
    let mut g_next = 0.0;
    let mut g_first = 0.0;
    for k in (0..m).rev() {
        let g = dp[k] - cp[k] * g_next;
        g_next = g;
        g_first = g;
    }
    law.up_prob(r) * (1.0 - g_first)
}

fn aitken(seq: &[f64]) -> Vec<f64> {
    seq.windows(3)
        .map(|w| {
            let d1 = w[1] - w[0];
            let d2 = w[2] - w[1];
            let den = d2 - d1;
            if den.abs() <= 1e-300 || !(d1 * d2 > 0.0) {
                w[2]
            } else {
                w[2] - d2 * d2 / den
            }
        })
        .collect()
}

/// Independent check of [`local_time_law`] by linear algebra.
///
/// Solves the first-step equations of the chain absorbed at `N`, `2N`, ...,
/// `16N` and extrapolates the escape probabilities to `N = inf` by repeated
/// Aitken acceleration.
pub fn truncated_chain_oracle(law: &WalkLaw, r: u64, n: u64) -> Result<LocalTimeLaw> {
    if r < 1 || n < r + 2 {
        return domain(format!("need N >= R + 2 and R >= 1, got R={r}, N={n}"));
    }
    let mut seq: Vec<f64> = (0..5).map(|j| absorbed_escape(law, r, n << j)).collect();
    if seq.windows(2).all(|w| w[0] == w[1]) {
        return LocalTimeLaw::new(r, seq[0]);
    }
    while seq.len() >= 3 {
        let next = aitken(&seq);
        if next.len() < 3 {
            seq = next;
            break;
        }
        seq = next;
    }
    let p = *seq.last().unwrap();
    if seq.len() == 2 && (seq[1] - seq[0]).abs() > 1e-8 {
        return Err(Error::NonConvergence(format!(
            "truncated chain estimates {} and {} differ by more than 1e-8; enlarge N",
            seq[0], seq[1]
        )));
    }
    LocalTimeLaw::new(r, p)
}
