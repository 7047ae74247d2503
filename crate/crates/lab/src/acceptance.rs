//! The acceptance suite behind `lab verify`.
//!
//! Criteria 1, 4, 9 and 11 are exact or deterministic checks and take
//! seconds. The rest run the experiment defaults and take minutes each.
//!
//! Criterion 10 is diagnostic: its line is printed like the others but a
//! failure does not fail the suite. At `nu = 1/2` a run of `k` no-return
//! levels starting at `R` has probability about `2^-(k+1) / R`, so over
//! `R <= 10^4` a seed reaches the band with probability near 0.3.

use std::time::Instant;

use nnwalk::classtest::{evaluate_test, BoundaryFunction, TestId};
use nnwalk::localtime::excursion_law;
use nnwalk::specfun::{exit_laplace, expected_exit_time, hitting_probability, BesselOrder, Interval};
use nnwalk::walklaw::{is_transient, local_time_law, p_bessel, truncated_chain_oracle, Perturbation, WalkLaw};
use nnwalk::Verdict;
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentId};
use crate::error::{Context, Result};
use crate::experiments::run_experiment;
use crate::thresholds::Thresholds;

pub const CRITERIA: [(u32, &str); 11] = [
    (1, "closed-form oracle suite"),
    (2, "geometric law of the walk local time"),
    (3, "exponential law of the diffusion local time"),
    (4, "transience classifier"),
    (5, "embedding exponent"),
    (6, "local-time discrepancy"),
    (7, "coupling"),
    (8, "limit law"),
    (9, "class-test verdict grid"),
    (10, "escape process"),
    (11, "truncated-chain oracle equivalence"),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub title: &'static str,
    pub pass: bool,
    pub diagnostic: bool,
    /// Failed sub-checks, or a short summary when everything passed.
    pub detail: String,
    pub seconds: f64,
}

pub const DIAGNOSTIC: [u32; 1] = [10];

impl CriterionResult {
    /// `PASS 4 transience classifier [2.6s] all checks hold`
    pub fn line(&self) -> String {
        let tag = if self.diagnostic { " (diagnostic)" } else { "" };
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        format!("{verdict} {} {}{tag} [{:.1}s] {}", self.id, self.title, self.seconds, self.detail)
    }

    /// Whether the suite as a whole may still pass.
    pub fn acceptable(&self) -> bool {
        self.pass || self.diagnostic
    }
}

pub fn title(id: u32) -> Option<&'static str> {
    CRITERIA.iter().find(|c| c.0 == id).map(|c| c.1)
}

/// Runs one criterion. `Err` means the machinery broke, not that a check failed.
pub fn run_criterion(id: u32, th: &Thresholds) -> Result<CriterionResult> {
    let title = title(id).ok_or_else(|| crate::error::LabError::Config(format!("no acceptance criterion {id}")))?;
    let start = Instant::now();
    let failures = match id {
        1 => oracles(th.oracle.tolerance)?,
        2 => experiment(ExperimentId::Geometric, th)?,
        3 => experiment(ExperimentId::Exponential, th)?,
        4 => transience()?,
        5 => experiment(ExperimentId::Embed, th)?,
        6 => experiment(ExperimentId::LocalTime, th)?,
        7 => experiment(ExperimentId::Couple, th)?,
        8 => experiment(ExperimentId::LimitLaw, th)?,
        9 => verdict_grid()?,
        10 => experiment(ExperimentId::Escape, th)?,
        _ => chain(th.chain.tolerance)?,
    };
    let pass = failures.is_empty();
    let detail = if pass { "all checks hold".to_string() } else { failures.join("; ") };
    Ok(CriterionResult { id, title, pass, diagnostic: DIAGNOSTIC.contains(&id), detail, seconds: start.elapsed().as_secs_f64() })
}

fn check(failures: &mut Vec<String>, ok: bool, what: impl FnOnce() -> String) {
    if !ok {
        failures.push(what());
    }
}

fn oracles(tol: f64) -> Result<Vec<String>> {
    let ctx = || "oracle suite".to_string();
    let mut f = Vec::new();
    let half = BesselOrder::new(0.5).context(ctx)?;
    let law = WalkLaw::bessel(0.5).context(ctx)?;
    let near = |a: f64, b: f64| (a - b).abs() <= tol * b.abs().max(1.0);
    for r in [2u64, 3, 5, 10, 20, 100, 1000] {
        let rf = r as f64;
        let p = p_bessel(0.5, r).context(ctx)?;
        check(&mut f, near(p, 0.5 / rf), || format!("p_{r} = {p}"));
        let ps = local_time_law(&law, r).context(ctx)?.p_star;
        check(&mut f, near(ps, 0.5 / rf), || format!("pStar({r}) = {ps}"));
        let theta = excursion_law(0.5, r).context(ctx)?.theta;
        check(&mut f, near(theta, 1.0), || format!("theta({r}) = {theta}"));
        let band = Interval::new(rf - 1.0, rf, rf + 1.0).context(ctx)?;
        let et = expected_exit_time(half, band);
        check(&mut f, near(et, 1.0), || format!("exit time at {r} = {et}"));
    }
    let iv = Interval::new(1.0, 2.0, 3.0).context(ctx)?;
    let h = hitting_probability(half, iv);
    check(&mut f, near(h, 0.25), || format!("hitting probability = {h}"));
    let l = exit_laplace(half, iv, 0.5).context(ctx)?;
    check(&mut f, near(l, 1.0 / 1f64.cosh()), || format!("exit Laplace = {l}"));
    Ok(f)
}

fn experiment(id: ExperimentId, th: &Thresholds) -> Result<Vec<String>> {
    let mut cfg = ExperimentConfig::defaults(id);
    cfg.thresholds = th.clone();
    let (report, _) = run_experiment(&cfg)?;
    Ok(report
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{}: {} (want {})", c.name, c.value, c.condition))
        .collect())
}

fn transience() -> Result<Vec<String>> {
    let ctx = || "transience classifier".to_string();
    let mut cases = vec![(WalkLaw::constant(0.0), vec![Verdict::Diverges])];
    cases.push((WalkLaw::power(0.5, 2.0, 0.0, Perturbation::Zero), vec![Verdict::Diverges]));
    for b in [1.5, 2.0, 3.0] {
        cases.push((WalkLaw::power(b, 2.0, 0.0, Perturbation::Zero), vec![Verdict::Converges]));
    }
    for nu in [0.25, 0.5, 1.0, 2.0] {
        cases.push((WalkLaw::bessel(nu), vec![Verdict::Converges]));
    }
    cases.push((WalkLaw::power(1.0, 2.0, 0.0, Perturbation::Zero), vec![Verdict::Inconclusive]));
    let mut f = Vec::new();
    for (law, want) in cases {
        let law = law.context(ctx)?;
        let got = is_transient(&law, 1e-2, 4_000_000).context(ctx)?.verdict;
        check(&mut f, want.contains(&got), || format!("{:?}: {}", law.family(), got.as_str()));
    }
    Ok(f)
}

/// Off-critical grid on the two analytic families, continuous tests and
/// their walk counterparts with `B = 2 nu + 1`. Both must match the known
/// side of the flip.
fn verdict_grid() -> Result<Vec<String>> {
    let mut jobs: Vec<(TestId, BoundaryFunction, f64, bool)> = Vec::new();
    for nu in [0.25, 0.5, 1.0, 2.0] {
        for c in [1.0, 1.5, 1.9, 2.1, 2.5, 3.0] {
            for t in [TestId::BesselUpper, TestId::BesselFutureInfUpper, TestId::BesselGapUpper] {
                jobs.push((t, BoundaryFunction::SqrtLogLog { c }, nu, c > 2.0));
            }
        }
        let crit = 1.0 / (2.0 * nu);
        for m in [0.5, 0.8, 1.2, 2.0] {
            jobs.push((TestId::BesselLower, BoundaryFunction::PowerLog { beta: m * crit }, nu, m > 1.0));
        }
    }
    let mut f = Vec::new();
    for (t, b, nu, converges) in jobs {
        let want = if converges { Verdict::Converges } else { Verdict::Diverges };
        for test in [t, t.counterpart()] {
            let p = if test.takes_drift() { 2.0 * nu + 1.0 } else { nu };
            let got = evaluate_test(test, &b, p).context(|| format!("{test} {b:?}"))?.verdict;
            check(&mut f, got == want, || format!("{test} {} at {p}: {}", b.expression(), got.as_str()));
        }
    }
    Ok(f)
}

fn chain(tol: f64) -> Result<Vec<String>> {
    let mut f = Vec::new();
    for nu in [0.25, 0.5, 1.0, 2.0] {
        let ctx = || format!("chain oracle nu={nu}");
        let law = WalkLaw::bessel(nu).context(ctx)?;
        for r in [2u64, 5, 10, 20] {
            let exact = local_time_law(&law, r).context(ctx)?.p_star;
            let solved = truncated_chain_oracle(&law, r, 10_000).context(ctx)?.p_star;
            check(&mut f, (exact - solved).abs() <= tol, || format!("nu={nu} R={r}: {solved} vs {exact}"));
        }
    }
    Ok(f)
}
