//! Statistical comparison of empirical outcomes against target laws, and
//! the simulation-level minimality checks.
//!
//! The distances handle atoms exactly: the KS statistic is evaluated from
//! both sides at every jump point of either distribution, and the
//! Wasserstein-1 distance integrates `|F_n − F|` in closed form using the
//! identity `∫ F dx = P` (the put transform is an antiderivative of the
//! CDF).

use serde::{Deserialize, Serialize};

use crate::law::TargetLaw;
use crate::simulate::{blj_stop, SimulationBundle, WalkConfig};
use crate::{Error, Result};

/// Hard ceiling on the censored fraction: censored paths bias terminal laws
/// toward the truncation walls, so they exclude a bundle from testing.
pub const CENSOR_CEILING: f64 = 0.01;

/// Sorted terminal sample with censoring bookkeeping.
#[derive(Debug, Clone)]
pub struct EmpiricalLaw {
    values: Vec<f64>,
    path_count: usize,
    censored: usize,
}

impl EmpiricalLaw {
    pub fn from_values(mut values: Vec<f64>, censored: usize) -> Self {
        values.sort_by(f64::total_cmp);
        let path_count = values.len() + censored;
        Self { values, path_count, censored }
    }

    /// Keeps the uncensored terminals; censored paths stay counted.
    pub fn from_bundle(bundle: &SimulationBundle) -> Self {
        let censored = bundle.censored();
        let values = bundle
            .outcomes
            .iter()
            .filter(|o| !o.censored)
            .map(|o| o.terminal)
            .collect();
        Self::from_values(values, censored)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn path_count(&self) -> usize {
        self.path_count
    }

    pub fn censored(&self) -> usize {
        self.censored
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.path_count.max(1) as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.values.partition_point(|&v| v <= x) as f64 / self.values.len() as f64
    }

    pub fn cdf_left(&self, x: f64) -> f64 {
        self.values.partition_point(|&v| v < x) as f64 / self.values.len() as f64
    }

    /// Count of samples within ±tol of `x`.
    pub fn atom_tally(&self, x: f64, tol: f64) -> usize {
        self.values.partition_point(|&v| v <= x + tol)
            - self.values.partition_point(|&v| v < x - tol)
    }

    fn check_censoring(&self) -> Result<()> {
        if self.censored_fraction() >= CENSOR_CEILING {
            return Err(Error::ExcessiveCensoring {
                censored: self.censored,
                total: self.path_count,
                limit_percent: CENSOR_CEILING * 100.0,
            });
        }
        Ok(())
    }
}

/// One-sample KS distance `sup |F_n − F|`, checked from both sides at every
/// sample point and every atom of the law.
pub fn ks_distance(emp: &EmpiricalLaw, law: &TargetLaw) -> Result<f64> {
    emp.check_censoring()?;
    if emp.is_empty() {
        return Err(Error::Config("empty sample".into()));
    }
    let mut sup = 0.0f64;
    let mut check = |x: f64| {
        sup = sup
            .max((emp.cdf(x) - law.cdf(x)).abs())
            .max((emp.cdf_left(x) - law.cdf_left(x)).abs());
    };
    let mut prev = f64::NAN;
    for &v in emp.values() {
        if v != prev {
            check(v);
            prev = v;
        }
    }
    for a in law.atoms() {
        check(a.position);
    }
    Ok(sup)
}

/// Wasserstein-1 distance `∫ |F_n − F| dx`, exact on each constancy segment
/// of the empirical CDF via `∫ F = P` and monotone root splitting.
pub fn wasserstein1(emp: &EmpiricalLaw, law: &TargetLaw) -> Result<f64> {
    emp.check_censoring()?;
    if emp.is_empty() {
        return Err(Error::Config("empty sample".into()));
    }
    let put = law.put_profile();
    let antideriv = |x: f64| put.value_extended(x);

    // breakpoints: sample values plus the law's support ends
    let (a, b) = law.support();
    let mut points: Vec<f64> = emp.values().to_vec();
    points.push(a);
    points.push(b);
    points.sort_by(f64::total_cmp);
    points.dedup();

    let lo = points[0].min(a);
    let hi = points[points.len() - 1].max(b);
    let mut total = 0.0;
    let mut edges = Vec::with_capacity(points.len() + 2);
    edges.push(lo);
    edges.extend(points.iter().copied().filter(|&p| p > lo && p < hi));
    edges.push(hi);
    for w in edges.windows(2) {
        let (l, r) = (w[0], w[1]);
        if r <= l {
            continue;
        }
        let c = emp.cdf(0.5 * (l + r));
        // F crosses level c at most once on (l, r)
        let x_star = law.quantile(c).clamp(l, r);
        for (s, e) in [(l, x_star), (x_star, r)] {
            if e > s {
                let int_f = antideriv(e) - antideriv(s);
                total += (int_f - c * (e - s)).abs();
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KsTwoSample {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub m: usize,
}

/// Two-sample KS with the asymptotic Kolmogorov p-value. Ties (atoms) make
/// the p-value conservative.
pub fn ks_two_sample(a: &EmpiricalLaw, b: &EmpiricalLaw) -> Result<KsTwoSample> {
    a.check_censoring()?;
    b.check_censoring()?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::Config("empty sample".into()));
    }
    let mut stat = 0.0f64;
    let mut check = |x: f64| {
        stat = stat
            .max((a.cdf(x) - b.cdf(x)).abs())
            .max((a.cdf_left(x) - b.cdf_left(x)).abs());
    };
    for &v in a.values() {
        check(v);
    }
    for &v in b.values() {
        check(v);
    }
    let (n, m) = (a.len(), b.len());
    let ne = (n as f64 * m as f64) / (n + m) as f64;
    let lam = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * stat;
    Ok(KsTwoSample { statistic: stat, p_value: kolmogorov_q(lam), n, m })
}

/// Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeStat {
    pub x: f64,
    pub mean: f64,
    /// Half width of the normal 95% interval.
    pub ci_half: f64,
    pub n: usize,
}

/// Sample means with normal confidence intervals for the local time at the
/// bundle's probe sites.
pub fn local_time_profile(bundle: &SimulationBundle) -> Result<Vec<ProbeStat>> {
    if bundle.outcomes.len() < 10_000 {
        return Err(Error::Config(format!(
            "local-time profile needs at least 10^4 paths, got {}",
            bundle.outcomes.len()
        )));
    }
    let n = bundle.outcomes.len();
    let mut stats = Vec::with_capacity(bundle.probes.len());
    for (j, &x) in bundle.probes.iter().enumerate() {
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for o in &bundle.outcomes {
            let v = o.probe_local_times[j];
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as f64;
        let var = (sum2 / n as f64 - mean * mean).max(0.0);
        stats.push(ProbeStat {
            x,
            mean,
            ci_half: 1.96 * (var / n as f64).sqrt(),
            n,
        });
    }
    Ok(stats)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimalityRow {
    pub kappa: f64,
    pub mean_l_x0: f64,
    pub ci_half: f64,
    pub shift_expected: f64,
    pub shift_measured: f64,
    pub shift_ok: bool,
}

/// Report of the local-time minimality checks across a κ ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimalityReport {
    pub kappa0: f64,
    pub rows: Vec<MinimalityRow>,
    pub monotone: bool,
    pub minimum_at_kappa0: bool,
    pub pass: bool,
}

/// Runs the comparison embedding at each κ and checks the three assertable
/// consequences of minimality: E[L^{x0}] is nondecreasing in κ, the excess
/// over the κ₀ run equals κ − κ₀ (within 3% or the joint CI), and the κ₀
/// run attains the minimum.
pub fn minimality_suite(
    law: &TargetLaw,
    x0: f64,
    lambda: f64,
    kappas: &[f64],
    cfg: &WalkConfig,
) -> Result<MinimalityReport> {
    let kappa0 = law.kappa0(x0)?;
    if kappas.len() < 3 {
        return Err(Error::Config(
            "minimality suite needs kappa0 and at least two larger values".into(),
        ));
    }
    let tol0 = 1e-9 * (1.0 + kappa0);
    if (kappas[0] - kappa0).abs() > tol0 {
        return Err(Error::Config(format!(
            "first kappa must be kappa0 = {kappa0}, got {}",
            kappas[0]
        )));
    }

    let mut rows: Vec<MinimalityRow> = Vec::with_capacity(kappas.len());
    for (i, &kappa) in kappas.iter().enumerate() {
        let mut run_cfg = cfg.clone();
        run_cfg.seed = cfg.seed.wrapping_add(1000 * i as u64);
        let bundle = blj_stop(law, x0, kappa, lambda, &run_cfg)?;
        let emp = EmpiricalLaw::from_bundle(&bundle);
        emp.check_censoring()?;
        let n = bundle.outcomes.len() as f64;
        let mean = bundle.outcomes.iter().map(|o| o.l_x0).sum::<f64>() / n;
        let var = bundle
            .outcomes
            .iter()
            .map(|o| (o.l_x0 - mean) * (o.l_x0 - mean))
            .sum::<f64>()
            / n;
        let ci = 1.96 * (var / n).sqrt();
        rows.push(MinimalityRow {
            kappa,
            mean_l_x0: mean,
            ci_half: ci,
            shift_expected: kappa - kappa0,
            shift_measured: 0.0,
            shift_ok: true,
        });
    }
    let base_mean = rows[0].mean_l_x0;
    let base_ci = rows[0].ci_half;
    for row in rows.iter_mut().skip(1) {
        row.shift_measured = row.mean_l_x0 - base_mean;
        let tol = (0.03 * row.shift_expected).max(row.ci_half + base_ci);
        row.shift_ok = (row.shift_measured - row.shift_expected).abs() <= tol;
    }

    let monotone = rows.windows(2).all(|w| {
        w[1].mean_l_x0 >= w[0].mean_l_x0 - (w[0].ci_half + w[1].ci_half)
    });
    let minimum_at_kappa0 = rows
        .iter()
        .skip(1)
        .all(|r| r.mean_l_x0 + r.ci_half + base_ci >= base_mean);
    let pass = monotone && minimum_at_kappa0 && rows.iter().all(|r| r.shift_ok);
    Ok(MinimalityReport { kappa0, rows, monotone, minimum_at_kappa0, pass })
}
