//! Experiment runners.
//!
//! Stream layout: unit `i` of block `b` (a grid point, a `(nu, R)` pair, a
//! `gamma`) draws from `Stream::new(seed_base, b * STRIDE + i)`. Units run in
//! parallel and are merged in index order, so results do not depend on the
//! thread count.

use nnwalk::besselsim::{occupation_sample, Scheme};
use nnwalk::classtest::{evaluate_test, verdict_to_class, BoundaryFunction, Monotone, TestId};
use nnwalk::couple::{coupling_discrepancy, Coupling};
use nnwalk::embed::{discrepancy_slope, grid_profile, mean_profile, simulate_embedding, Discrepancy, GridProfile};
use nnwalk::localtime::{discrepancy_profile, excursion_law, sample_joint_local_time};
use nnwalk::rng::Stream;
use nnwalk::specfun::BesselOrder;
use nnwalk::stats::{self, Regression};
use nnwalk::walklaw::{local_time_law, Perturbation, WalkLaw};
use nnwalk::walksim::{escape_profile, limit_law_cdf, scaled_position, LocalTimeSampler, StepSampler};
use nnwalk::{Error, Verdict};
use rayon::prelude::*;
use serde_json::json;

use crate::config::*;
use crate::error::{Context, LabError, Result};
use crate::report::{version, Check, StatReport, Table};

pub const STRIDE: u64 = 1 << 32;

/// Step budget for single simulations; far above anything the defaults need.
const BUDGET: u64 = 1 << 40;

fn stream(seed_base: u64, block: usize, unit: usize) -> Stream {
    Stream::new(seed_base, block as u64 * STRIDE + unit as u64)
}

fn fit_json(r: &Regression) -> serde_json::Value {
    json!({ "slope": r.slope, "ci_low": r.ci_low, "ci_high": r.ci_high, "level": r.level, "points": r.n })
}

/// Parses a boundary family. Built-in names take one parameter; anything
/// else is `expr:<monotone>:<expression>` with `{p}` standing for the
/// parameter, e.g. `expr:non_decreasing:sqrt({p}*loglog(t))`.
pub fn family(name: &str, p: f64) -> Result<BoundaryFunction> {
    Ok(match name {
        "sqrt_loglog" => BoundaryFunction::SqrtLogLog { c: p },
        "power_log" => BoundaryFunction::PowerLog { beta: p },
        "loglog" => BoundaryFunction::LogLog { c: p },
        "inverse_loglog" => BoundaryFunction::InverseLogLog { c: p },
        "inverse_log_pow" => BoundaryFunction::InverseLogPow { beta: p },
        _ => {
            let mut parts = name.splitn(3, ':');
            let (Some("expr"), Some(m), Some(e)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(LabError::Config(format!("unknown family '{name}'")));
            };
            let monotone = match m {
                "non_decreasing" => Monotone::NonDecreasing,
                "non_increasing" => Monotone::NonIncreasing,
                "log_ratio_non_decreasing" => Monotone::LogRatioNonDecreasing,
                _ => return Err(LabError::Config(format!("unknown monotonicity '{m}'"))),
            };
            BoundaryFunction::Expression { expr: e.replace("{p}", &format!("({p})")), monotone }
        }
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(StatReport, Table)> {
    cfg.validate()?;
    let s = cfg.seed_base;
    let th = &cfg.thresholds;
    let (summary, checks, table) = match &cfg.params {
        Params::Geometric(p) => geometric(p, s, th)?,
        Params::Exponential(p) => exponential(p, s, th)?,
        Params::Embed(p) => embedding(p, s, th)?,
        Params::LocalTime(p) => local_time(p, s, th)?,
        Params::Couple(p) => coupling(p, s, th)?,
        Params::Escape(p) => escape(p, s, th)?,
        Params::LimitLaw(p) => limit_law(p, s, th)?,
        Params::ClassTable(p) => class_table(p)?,
    };
    let pass = checks.iter().all(|c| c.pass);
    let report = StatReport { experiment: cfg.experiment, version: version(), config: cfg.clone(), summary, checks, pass };
    Ok((report, table))
}

type Out = (serde_json::Value, Vec<Check>, Table);

fn pairs<T: Copy, U: Copy>(a: &[T], b: &[U]) -> Vec<(T, U)> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).collect()
}

fn geometric(p: &GeometricParams, seed: u64, th: &crate::thresholds::Thresholds) -> Result<Out> {
    let t = th.geometric;
    let mut table = Table::new(&["nu", "level", "repetition", "walks", "mean", "chi_square", "df", "p_value"]);
    let mut checks = Vec::new();
    let mut summary = Vec::new();
    for (b, (nu, r)) in pairs(&p.nu, &p.levels).into_iter().enumerate() {
        let ctx = || format!("exp-geometric nu={nu} R={r}");
        let law = WalkLaw::bessel(nu).context(ctx)?;
        let lt = local_time_law(&law, r).context(ctx)?;
        let reps: Vec<(f64, f64, stats::ChiSquareResult)> = (0..p.repetitions)
            .into_par_iter()
            .map(|rep| {
                let mut sampler = LocalTimeSampler::new(&law, r, BUDGET)?;
                let mut rng = stream(seed, b, rep);
                let xs = (0..p.walks).map(|_| sampler.sample(&mut rng)).collect::<nnwalk::Result<Vec<u64>>>()?;
                let sum: f64 = xs.iter().map(|&x| x as f64).sum();
                let chi = stats::chi_square_discrete(&xs, |k| lt.pmf(k))?;
                Ok((sum, xs.len() as f64, chi))
            })
            .collect::<nnwalk::Result<_>>()
            .context(ctx)?;
        let passed = reps.iter().filter(|(_, _, c)| c.p_value >= t.alpha).count();
        let rate = passed as f64 / reps.len() as f64;
        let (sum, n) = reps.iter().fold((0.0, 0.0), |(s, n), (a, b, _)| (s + a, n + b));
        let mean = sum / n;
        let target = lt.mean();
        let sigma = (1.0 - lt.p_star).sqrt() / lt.p_star / n.sqrt();
        for (i, (s, k, c)) in reps.iter().enumerate() {
            table.push(vec![nu.into(), r.into(), i.into(), (*k as u64).into(), (s / k).into(), c.statistic.into(), c.df.into(), c.p_value.into()]);
        }
        checks.push(Check::new(
            format!("nu={nu} R={r} chi-square pass rate"),
            rate,
            format!(">= {}", t.min_pass_rate),
            rate >= t.min_pass_rate,
        ));
        let z = (mean - target) / sigma;
        checks.push(Check::new(format!("nu={nu} R={r} mean z-score"), z, format!("|z| <= {}", t.mean_sigmas), z.abs() <= t.mean_sigmas));
        summary.push(json!({ "nu": nu, "level": r, "p_star": lt.p_star, "mean": mean, "target_mean": target, "pass_rate": rate }));
    }
    Ok((json!({ "cells": summary }), checks, table))
}

fn exponential(p: &ExponentialParams, seed: u64, th: &crate::thresholds::Thresholds) -> Result<Out> {
    let alpha = th.exponential.alpha;
    let mut table = Table::new(&["nu", "level", "method", "draws", "mean", "ks_statistic", "p_value"]);
    let mut checks = Vec::new();
    let mut summary = Vec::new();
    for (b, (nu, r)) in pairs(&p.nu, &p.levels).into_iter().enumerate() {
        let ctx = || format!("exp-exponential nu={nu} R={r}");
        let ex = excursion_law(nu, r).context(ctx)?;
        let order = BesselOrder::new(nu).context(ctx)?;
        let mean = r as f64 / nu;
        let cdf = |x: f64| if x <= 0.0 { 0.0 } else { -(-x / mean).exp_m1() };
        let mut rng = stream(seed, 2 * b, 0);
        let exact: Vec<f64> = (0..p.exact_draws).map(|_| sample_joint_local_time(&ex, &mut rng).1).collect();
        let occ: Vec<f64> = (0..p.occupation_draws)
            .into_par_iter()
            .map(|i| occupation_sample(order, r as f64, p.band, Scheme::default(), &mut stream(seed, 2 * b + 1, i)))
            .collect::<nnwalk::Result<_>>()
            .context(ctx)?;
        let ks_exact = stats::ks_one_sample(&exact, cdf).context(ctx)?;
        let ks_occ = stats::ks_one_sample(&occ, cdf).context(ctx)?;
        let ks_two = stats::ks_two_sample(&exact, &occ).context(ctx)?;
        let rows = [("exact", &exact, ks_exact), ("occupation", &occ, ks_occ)];
        for (name, xs, ks) in rows {
            table.push(vec![nu.into(), r.into(), name.into(), xs.len().into(), stats::mean(xs).into(), ks.statistic.into(), ks.p_value.into()]);
        }
        table.push(vec![nu.into(), r.into(), "two-sample".into(), (exact.len() + occ.len()).into(), f64::NAN.into(), ks_two.statistic.into(), ks_two.p_value.into()]);
        for (name, ks) in [("exact KS", ks_exact), ("occupation KS", ks_occ), ("two-sample KS", ks_two)] {
            checks.push(Check::new(format!("nu={nu} R={r} {name} p-value"), ks.p_value, format!(">= {alpha}"), ks.p_value >= alpha));
        }
        summary.push(json!({
            "nu": nu, "level": r, "target_mean": mean,
            "exact_mean": stats::mean(&exact), "occupation_mean": stats::mean(&occ),
            "exact_p": ks_exact.p_value, "occupation_p": ks_occ.p_value, "two_sample_p": ks_two.p_value,
        }));
    }
    Ok((json!({ "cells": summary, "band": p.band }), checks, table))
}

fn embedding(p: &EmbedParams, seed: u64, th: &crate::thresholds::Thresholds) -> Result<Out> {
    let t = th.embed;
    let ctx = || "exp-embed".to_string();
    let order = BesselOrder::new(p.nu).context(ctx)?;
    let grid: Vec<usize> = p.n_grid.points().into_iter().map(|n| n as usize).collect();
    let nmax = *grid.last().unwrap();
    let profiles: Vec<GridProfile> = (0..p.seeds)
        .into_par_iter()
        .map(|s| {
            let emb = simulate_embedding(order, nmax, Scheme::default(), &mut stream(seed, 0, s), BUDGET)?;
            grid_profile(&emb, &grid)
        })
        .collect::<nnwalk::Result<_>>()
        .context(ctx)?;
    let which = [Discrepancy::AbsMax, Discrepancy::MaxDiff, Discrepancy::InfDiff, Discrepancy::TimeLag];
    let means: Vec<Vec<f64>> = which.iter().map(|&w| mean_profile(&profiles, w)).collect::<nnwalk::Result<_>>().context(ctx)?;
    let mut table = Table::new(&["n", "mean_abs_max", "mean_max_diff", "mean_inf_diff", "mean_abs_time_lag"]);
    for (i, &n) in grid.iter().enumerate() {
        table.push(vec![n.into(), means[0][i].into(), means[1][i].into(), means[2][i].into(), means[3][i].into()]);
    }
    let abs = discrepancy_slope(&profiles, Discrepancy::AbsMax, t.level).context(ctx)?;
    let others: Vec<(&str, Option<Regression>)> = [("max_diff", Discrepancy::MaxDiff), ("inf_diff", Discrepancy::InfDiff), ("time_lag", Discrepancy::TimeLag)]
        .into_iter()
        .map(|(n, w)| (n, discrepancy_slope(&profiles, w, t.level).ok()))
        .collect();
    let pass = abs.slope >= t.slope_min && abs.slope <= t.slope_max;
    let checks = vec![Check::new("abs max slope", abs.slope, format!("in [{}, {}]", t.slope_min, t.slope_max), pass)];
    let mut summary = json!({ "nu": p.nu, "seeds": p.seeds, "abs_max_slope": fit_json(&abs) });
    for (n, r) in others {
        summary[format!("{n}_slope")] = r.as_ref().map(fit_json).unwrap_or(serde_json::Value::Null);
    }
    Ok((summary, checks, table))
}

fn local_time(p: &LocalTimeParams, seed: u64, th: &crate::thresholds::Thresholds) -> Result<Out> {
    let max = th.localtime.slope_max;
    let levels = p.r_grid.points();
    let mut table = Table::new(&["nu", "level", "mean_abs_diff", "std_error", "q50", "q99", "scaled_q99"]);
    let mut checks = Vec::new();
    let mut summary = Vec::new();
    for (b, &nu) in p.nu.iter().enumerate() {
        let ctx = || format!("exp-localtime nu={nu}");
        let rows = discrepancy_profile(nu, &levels, p.draws, seed, b as u64 * STRIDE).context(ctx)?;
        for r in &rows {
            table.push(vec![nu.into(), r.level.into(), r.mean.into(), r.std_error.into(), r.q50.into(), r.q99.into(), r.scaled_q99.into()]);
        }
        let x: Vec<f64> = rows.iter().map(|r| r.level as f64).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.mean).collect();
        let fit = stats::loglog_fit(&x, &y, 0.95).context(ctx)?;
        checks.push(Check::new(format!("nu={nu} mean |xi - eta| slope"), fit.slope, format!("<= {max}"), fit.slope <= max));
        summary.push(json!({ "nu": nu, "slope": fit_json(&fit), "max_scaled_q99": rows.iter().map(|r| r.scaled_q99).fold(0.0, f64::max) }));
    }
    Ok((json!({ "cells": summary }), checks, table))
}

fn coupling(p: &CoupleParams, seed: u64, th: &crate::thresholds::Thresholds) -> Result<Out> {
    let t = th.couple;
    let grid: Vec<usize> = p.n_grid.points().into_iter().map(|n| n as usize).collect();
    let mut table = Table::new(&["gamma", "n", "mean_abs_max", "mean_max_diff", "mean_inf_diff"]);
    let mut checks = Vec::new();
    let mut summary = Vec::new();
    for (b, &gamma) in p.gamma.iter().enumerate() {
        let ctx = || format!("exp-couple gamma={gamma}");
        let l1 = WalkLaw::power(p.drift, gamma, p.c, Perturbation::Plus).context(ctx)?;
        let l2 = WalkLaw::power(p.drift, gamma, 0.0, Perturbation::Zero).context(ctx)?;
        let mut cp = Coupling::new(&l1, &l2).context(ctx)?;
        // A violated case inequality surfaces as a Certification error.
        let rep = match coupling_discrepancy(&mut cp, &grid, p.seeds, seed, b as u64 * STRIDE, t.level) {
            Err(Error::Certification(msg)) => {
                checks.push(Check::new(format!("gamma={gamma} pathwise case inequalities"), 0.0, "hold on every step", false));
                summary.push(json!({ "gamma": gamma, "violation": msg }));
                continue;
            }
            r => r.context(ctx)?,
        };
        for (i, &n) in grid.iter().enumerate() {
            table.push(vec![gamma.into(), n.into(), rep.mean_abs_max[i].into(), rep.mean_max_diff[i].into(), rep.mean_inf_diff[i].into()]);
        }
        let steps: u64 = rep.case_counts.iter().sum();
        checks.push(Check::new(format!("gamma={gamma} pathwise case inequalities"), steps as f64, "hold on every step", true));
        if gamma >= 2.0 {
            checks.push(Check::new(
                format!("gamma={gamma} abs max slope"),
                rep.slope.slope,
                format!("{} CI [{:.4}, {:.4}] contains 0", t.level, rep.slope.ci_low, rep.slope.ci_high),
                rep.slope.ci_contains(0.0),
            ));
        } else {
            checks.push(Check::new(format!("gamma={gamma} abs max slope"), rep.slope.slope, format!("<= {}", t.slope_max), rep.slope.slope <= t.slope_max));
        }
        summary.push(json!({
            "gamma": gamma, "c": p.c, "seeds": rep.seeds, "slope": fit_json(&rep.slope),
            "max_diff_slope": rep.max_diff_slope.as_ref().map(fit_json),
            "overall_max": rep.overall_max,
            "case_counts": { "i": rep.case_counts[0], "ii": rep.case_counts[1], "iii": rep.case_counts[2], "iv": rep.case_counts[3], "boundary": rep.case_counts[4] },
        }));
    }
    Ok((json!({ "drift": p.drift, "cells": summary }), checks, table))
}

fn escape(p: &EscapeParams, seed: u64, th: &crate::thresholds::Thresholds) -> Result<Out> {
    let t = th.escape;
    let ctx = || "exp-escape".to_string();
    let law = WalkLaw::bessel(p.nu).context(ctx)?;
    let runs: Vec<(f64, i64)> = (0..p.seeds)
        .into_par_iter()
        .map(|s| {
            let psi = escape_profile(&law, p.rmax, p.margin, &mut stream(seed, 0, s), BUDGET)?;
            // psi[r - 1] is Psi(r); a censored value enters with its lower bound.
            let best = (p.rmin..=p.rmax)
                .map(|r| psi[(r - 1) as usize].lower() as f64 / (r as f64).ln().ln())
                .fold(f64::NEG_INFINITY, f64::max);
            Ok((best, psi[(p.rmax - 1) as usize].lower()))
        })
        .collect::<nnwalk::Result<_>>()
        .context(ctx)?;
    let mut table = Table::new(&["seed", "running_max_ratio", "psi_at_rmax"]);
    for (s, (best, last)) in runs.iter().enumerate() {
        table.push(vec![s.into(), (*best).into(), (*last).into()]);
    }
    let inside = runs.iter().filter(|(b, _)| *b >= t.lower && *b <= t.upper).count();
    let frac = inside as f64 / runs.len() as f64;
    let ratios: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let checks = vec![Check::new(
        "fraction of seeds with running max in band",
        frac,
        format!(">= {} with band [{:.4}, {:.4}]", t.min_fraction, t.lower, t.upper),
        frac >= t.min_fraction,
    )];
    let summary = json!({
        "nu": p.nu, "rmin": p.rmin, "rmax": p.rmax, "fraction_in_band": frac,
        "median_ratio": stats::quantile(&ratios, 0.5), "q05": stats::quantile(&ratios, 0.05), "q95": stats::quantile(&ratios, 0.95),
    });
    Ok((summary, checks, table))
}

fn limit_law(p: &LimitLawParams, seed: u64, th: &crate::thresholds::Thresholds) -> Result<Out> {
    let alpha = th.limitlaw.alpha;
    let ctx = || "exp-limitlaw".to_string();
    let law = WalkLaw::power(p.drift, 2.0, 0.0, Perturbation::Zero).context(ctx)?;
    let xs: Vec<f64> = (0..p.seeds)
        .into_par_iter()
        .map(|s| scaled_position(&mut StepSampler::new(&law), p.steps, &mut stream(seed, 0, s)))
        .collect();
    let ks = stats::ks_one_sample(&xs, |x| limit_law_cdf(p.drift, x)).context(ctx)?;
    let mut table = Table::new(&["seed", "scaled_position"]);
    for (s, &x) in xs.iter().enumerate() {
        table.push(vec![s.into(), x.into()]);
    }
    let checks = vec![Check::new("KS p-value", ks.p_value, format!(">= {alpha}"), ks.p_value >= alpha)];
    let summary = json!({
        "drift": p.drift, "steps": p.steps, "seeds": p.seeds, "ks_statistic": ks.statistic, "p_value": ks.p_value,
        "mean": stats::mean(&xs), "target_mean": nnwalk::walksim::limit_law_mean(p.drift),
    });
    Ok((summary, checks, table))
}

/// One row of a verdict table.
#[derive(Debug, Clone, PartialEq)]
pub struct VerdictRow {
    pub test: TestId,
    pub family: String,
    pub family_param: f64,
    /// `nu`, or `B` for walk tests.
    pub test_param: f64,
    pub verdict: Option<Verdict>,
    /// Class statement, or the reason there is none.
    pub statement: String,
}

pub fn verdict_rows(tests: &[TestId], families: &[FamilyGrid], nus: &[f64]) -> Result<Vec<VerdictRow>> {
    let mut jobs = Vec::new();
    for &test in tests {
        for fam in families {
            for &fp in &fam.params {
                for &nu in nus {
                    jobs.push((test, fam.family.clone(), fp, if test.takes_drift() { 2.0 * nu + 1.0 } else { nu }));
                }
            }
        }
    }
    jobs.into_par_iter()
        .map(|(test, name, fp, tp)| {
            let f = family(&name, fp)?;
            let (verdict, statement) = match evaluate_test(test, &f, tp) {
                Ok(v) => (Some(v.verdict), verdict_to_class(test, v.verdict).unwrap_or_else(|_| "inconclusive".into())),
                Err(e @ (Error::Hypothesis(_) | Error::Domain(_) | Error::Expression(_))) => (None, e.to_string()),
                Err(e) => return Err(LabError::Core { context: format!("{test} {name}({fp})"), source: e }),
            };
            Ok(VerdictRow { test, family: name, family_param: fp, test_param: tp, verdict, statement })
        })
        .collect()
}

pub fn verdict_table(rows: &[VerdictRow]) -> Table {
    let mut table = Table::new(&["test", "family", "family_param", "test_param", "verdict", "class_statement"]);
    for r in rows {
        let v = r.verdict.map(|v| v.as_str()).unwrap_or("not-applicable");
        table.push(vec![r.test.as_str().into(), r.family.as_str().into(), r.family_param.into(), r.test_param.into(), v.into(), r.statement.as_str().into()]);
    }
    table
}

fn class_table(p: &ClassTableParams) -> Result<Out> {
    let rows = verdict_rows(&p.tests, &p.families, &p.nu)?;
    let count = |v: Option<Verdict>| rows.iter().filter(|r| r.verdict == v).count();
    let summary = json!({
        "rows": rows.len(),
        "converges": count(Some(Verdict::Converges)),
        "diverges": count(Some(Verdict::Diverges)),
        "inconclusive": count(Some(Verdict::Inconclusive)),
        "not_applicable": count(None),
    });
    Ok((summary, Vec::new(), verdict_table(&rows)))
}
