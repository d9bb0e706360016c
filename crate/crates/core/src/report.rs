//! Bundled example pipelines: construct → classify → eigen-check →
//! simulate → verify, with every reported number tagged by the method that
//! produced its expected value.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::eigen::{self, BoundaryCondition, SolveOptions};
use crate::law::TargetLaw;
use crate::presets;
use crate::simulate::{blj_stop, diffusion_path, exp_time_stop, WalkConfig};
use crate::speed::{self, EndpointKind, ToLawOptions};
use crate::verify::{self, EmpiricalLaw};
use crate::{Error, Result};

pub const EXAMPLES: [&str; 5] = [
    "jump3",
    "inverse-bessel",
    "bessel-martingale",
    "kimura",
    "reflected-cosh",
];

/// Where a check's expected value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckBasis {
    /// Exact arithmetic inside the atom + piecewise-linear model.
    ExactArithmetic,
    /// A closed-form expression evaluated independently.
    ClosedForm,
    /// Numerical integration of the defining integral.
    QuadratureOracle,
    /// The integrated-form defect of the generalized second-order equation.
    ResidualOracle,
    /// Seeded Monte-Carlo statistics with stated tolerances.
    MonteCarlo,
    /// Agreement between two independently computed routes.
    Consistency,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRow {
    pub check: String,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub relative: bool,
    pub pass: bool,
    pub basis: CheckBasis,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOptions {
    pub paths: u32,
    pub delta: f64,
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { paths: 20_000, delta: 1.0 / 200.0, seed: 727_029 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExampleReport {
    pub schema_version: u32,
    pub example: String,
    pub config: RunOptions,
    pub rows: Vec<CheckRow>,
    pub ops_exercised: BTreeSet<String>,
    pub pass: bool,
}

impl ExampleReport {
    fn new(example: &str, config: &RunOptions) -> Self {
        Self {
            schema_version: 1,
            example: example.to_string(),
            config: config.clone(),
            rows: Vec::new(),
            ops_exercised: BTreeSet::new(),
            pass: true,
        }
    }

    fn op(&mut self, name: &str) {
        self.ops_exercised.insert(name.to_string());
    }

    fn row(
        &mut self,
        check: &str,
        value: f64,
        expected: f64,
        tolerance: f64,
        relative: bool,
        basis: CheckBasis,
    ) {
        let err = if relative {
            (value - expected).abs() / expected.abs().max(1e-300)
        } else {
            (value - expected).abs()
        };
        let pass = err <= tolerance;
        self.pass &= pass;
        self.rows.push(CheckRow {
            check: check.to_string(),
            value,
            expected,
            tolerance,
            relative,
            pass,
            basis,
        });
    }

    fn flag(&mut self, check: &str, ok: bool, basis: CheckBasis) {
        self.pass &= ok;
        self.rows.push(CheckRow {
            check: check.to_string(),
            value: ok as u8 as f64,
            expected: 1.0,
            tolerance: 0.0,
            relative: false,
            pass: ok,
            basis,
        });
    }
}

/// Runs a named bundled example end to end and reports one row per check.
pub fn run_example(name: &str, opts: &RunOptions) -> Result<ExampleReport> {
    match name {
        "jump3" => jump3_pipeline(opts),
        "inverse-bessel" => inverse_bessel_pipeline(opts),
        "bessel-martingale" => bessel_martingale_pipeline(opts),
        "kimura" => kimura_pipeline(opts),
        "reflected-cosh" => reflected_cosh_pipeline(opts),
        other => Err(Error::UnknownExample(other.to_string())),
    }
}

/// Monte-Carlo tolerance on an atom frequency: a 4σ binomial band plus a
/// δ-discretization allowance.
fn mass_tol(paths: u32) -> f64 {
    4.0 * (0.25 / paths as f64).sqrt() + 0.004
}

fn jump3_pipeline(opts: &RunOptions) -> Result<ExampleReport> {
    let mut rep = ExampleReport::new("jump3", opts);
    let law = presets::jump3();
    let x0 = 0.5;
    let lambda = 1.0;

    rep.op("law.mean");
    rep.row("mean", law.mean(), 0.5, 1e-14, false, CheckBasis::ExactArithmetic);
    rep.op("law.call_price");
    rep.op("law.put_price");
    rep.op("law.potential");
    rep.row(
        "call(3/4)",
        law.call_price(0.75)?,
        1.0 / 12.0,
        1e-14,
        false,
        CheckBasis::ExactArithmetic,
    );
    rep.row(
        "put(1/4)",
        law.put_price(0.25)?,
        1.0 / 12.0,
        1e-14,
        false,
        CheckBasis::ExactArithmetic,
    );
    rep.row(
        "potential = call + put at 0.7",
        law.potential(0.7)?,
        law.call_price(0.7)? + law.put_price(0.7)?,
        1e-14,
        false,
        CheckBasis::Consistency,
    );
    rep.op("law.v_kernel");
    rep.row(
        "V(0) = 2(P(x0) − P(0))",
        law.v_kernel(x0, 0.0)?,
        1.0 / 3.0,
        1e-14,
        false,
        CheckBasis::ExactArithmetic,
    );
    rep.op("law.kappa0");
    let kappa0 = law.kappa0(x0)?;
    rep.row("kappa0", kappa0, 1.0 / 3.0, 1e-14, false, CheckBasis::ExactArithmetic);

    rep.op("speed.from_law");
    for w in [4.0, 5.0, 6.0] {
        let speed = speed::from_law(&law, x0, lambda, 2.0 / w)?;
        if w == 6.0 {
            rep.flag(
                "W=6: endpoint atoms infinite",
                speed.atom_at(0.0).unwrap().mass.is_infinite()
                    && speed.atom_at(1.0).unwrap().mass.is_infinite(),
                CheckBasis::ExactArithmetic,
            );
        } else {
            let direct0 = 0.5 * (1.0 / 3.0) / (1.0 / w - 1.0 / 6.0);
            rep.row(
                &format!("W={w}: m({{0}}) from the decomposition"),
                speed.atom_at(0.0).unwrap().mass.finite().unwrap(),
                direct0,
                1e-12,
                true,
                CheckBasis::ExactArithmetic,
            );
        }
        let direct_h = 0.5 * (1.0 / 3.0) * w;
        rep.row(
            &format!("W={w}: m({{1/2}}) from the decomposition"),
            speed.atom_at(0.5).unwrap().mass.finite().unwrap(),
            direct_h,
            1e-12,
            true,
            CheckBasis::ExactArithmetic,
        );
    }

    rep.op("speed.lambda_potential");
    rep.op("speed.minimalize");
    let minimal = speed::minimalize(&law, x0, lambda)?;
    rep.row(
        "u(x0, 1/4) at W=6",
        speed::lambda_potential(&minimal, 0.25)?,
        1.0 / 6.0,
        1e-14,
        false,
        CheckBasis::ExactArithmetic,
    );
    let sticky = speed::DiffusionSpec::new(law.clone(), x0, lambda, 0.5)?;
    rep.row(
        "u(x0, 1/4) at W=4",
        speed::lambda_potential(&sticky, 0.25)?,
        1.0 / 3.0,
        1e-14,
        false,
        CheckBasis::ExactArithmetic,
    );

    rep.op("speed.classify");
    let report = speed::classify(&minimal)?;
    rep.flag(
        "W=6: absorbing endpoints, minimal",
        report.left == EndpointKind::Absorbing
            && report.right == EndpointKind::Absorbing
            && report.minimal,
        CheckBasis::Consistency,
    );
    let report = speed::classify(&sticky)?;
    rep.flag(
        "W=4: sticky-reflecting endpoints, non-minimal",
        report.left == EndpointKind::StickyReflecting
            && report.right == EndpointKind::StickyReflecting
            && !report.minimal,
        CheckBasis::Consistency,
    );

    rep.op("eigen.solve");
    let sol = eigen::solve(
        &minimal.speed,
        x0,
        lambda,
        (BoundaryCondition::FromClassification, BoundaryCondition::FromClassification),
        &SolveOptions::default(),
    )?;
    rep.row("eigen Wronskian at W=6", sol.wronskian, 6.0, 1e-10, true, CheckBasis::ResidualOracle);
    rep.row(
        "Wronskian spread",
        sol.wronskian_spread,
        0.0,
        1e-8,
        false,
        CheckBasis::ResidualOracle,
    );
    rep.op("eigen.ode_residual");
    rep.row(
        "increasing eigenfunction residual",
        eigen::ode_residual(&sol.grid_fn_varphi(), &minimal.speed, lambda),
        0.0,
        1e-8,
        false,
        CheckBasis::ResidualOracle,
    );
    rep.op("eigen.hitting_laplace");
    rep.row(
        "absorption weight 1/phi(0)",
        eigen::hitting_laplace(&sol, x0, 0.0)?,
        1.0 / 3.0,
        1e-10,
        true,
        CheckBasis::ClosedForm,
    );

    rep.op("speed.to_law");
    let back = speed::to_law(&minimal.speed, x0, lambda, &ToLawOptions::default())?;
    for &p in &[0.0, 0.5, 1.0] {
        rep.row(
            &format!("round trip atom at {p}"),
            back.atom_mass_at(p),
            1.0 / 3.0,
            1e-6,
            false,
            CheckBasis::Consistency,
        );
    }

    // Monte Carlo: both constructions at both κ values
    let cfg = WalkConfig {
        delta: opts.delta,
        paths: opts.paths,
        seed: opts.seed,
        probes: vec![0.25, 0.5, 0.75],
        ..Default::default()
    };
    rep.op("simulate.blj_stop");
    rep.op("simulate.exp_time_stop");
    rep.op("verify.ks_two_sample");
    rep.op("verify.ks_distance");
    rep.op("verify.wasserstein1");
    rep.op("verify.local_time_profile");
    let mtol = mass_tol(opts.paths);
    for (kname, kappa) in [("kappa0", kappa0), ("kappa=0.5", 0.5)] {
        let blj = blj_stop(&law, x0, kappa, lambda, &cfg)?;
        let speed_m = speed::from_law(&law, x0, lambda, kappa)?;
        let exp = exp_time_stop(&speed_m, x0, lambda, &cfg)?;
        let emp_blj = EmpiricalLaw::from_bundle(&blj);
        let emp_exp = EmpiricalLaw::from_bundle(&exp);
        for &atom in &[0.0, 0.5, 1.0] {
            let f = emp_blj.atom_tally(atom, 1e-9) as f64 / emp_blj.len() as f64;
            rep.row(
                &format!("{kname}: comparison-rule mass at {atom}"),
                f,
                1.0 / 3.0,
                mtol,
                false,
                CheckBasis::MonteCarlo,
            );
            let f = emp_exp.atom_tally(atom, 1e-9) as f64 / emp_exp.len() as f64;
            rep.row(
                &format!("{kname}: exponential-clock mass at {atom}"),
                f,
                1.0 / 3.0,
                mtol,
                false,
                CheckBasis::MonteCarlo,
            );
        }
        let ks = verify::ks_two_sample(&emp_blj, &emp_exp)?;
        rep.flag(
            &format!("{kname}: two constructions agree (KS p = {:.3})", ks.p_value),
            ks.p_value > 0.01,
            CheckBasis::MonteCarlo,
        );
        let d = verify::ks_distance(&emp_exp, &law)?;
        rep.row(
            &format!("{kname}: KS distance to the target"),
            d,
            0.0,
            mtol,
            false,
            CheckBasis::MonteCarlo,
        );
        let w1 = verify::wasserstein1(&emp_exp, &law)?;
        rep.row(
            &format!("{kname}: W1 distance to the target"),
            w1,
            0.0,
            mtol,
            false,
            CheckBasis::MonteCarlo,
        );
        let n = blj.outcomes.len() as f64;
        let mean_l = blj.outcomes.iter().map(|o| o.l_x0).sum::<f64>() / n;
        rep.row(
            &format!("{kname}: E[L^x0] = kappa"),
            mean_l,
            kappa,
            0.03 * kappa + 2.0 / (n).sqrt() * kappa,
            false,
            CheckBasis::MonteCarlo,
        );
        let profile = verify::local_time_profile(&blj)?;
        for p in &profile {
            let expected = kappa - law.v_kernel(x0, p.x)?;
            rep.row(
                &format!("{kname}: mean L^x at x = {}", p.x),
                p.mean,
                expected,
                0.03 * expected + 2.0 * p.ci_half,
                false,
                CheckBasis::MonteCarlo,
            );
        }
    }

    rep.op("verify.minimality_suite");
    let mcfg = WalkConfig {
        delta: opts.delta,
        paths: opts.paths,
        seed: opts.seed,
        ..Default::default()
    };
    let minrep = verify::minimality_suite(&law, x0, lambda, &[kappa0, 0.4, 0.5], &mcfg)?;
    rep.flag("minimality ladder", minrep.pass, CheckBasis::MonteCarlo);
    for r in minrep.rows.iter().skip(1) {
        rep.row(
            &format!("excess local time at kappa = {}", r.kappa),
            r.shift_measured,
            r.shift_expected,
            (0.03 * r.shift_expected).max(2.0 * r.ci_half),
            false,
            CheckBasis::MonteCarlo,
        );
    }

    rep.op("simulate.diffusion_path");
    let pcfg = WalkConfig { delta: 1.0 / 100.0, seed: opts.seed, ..Default::default() };
    let times: Vec<f64> = (1..=10).map(|k| k as f64 * 0.1).collect();
    let mut on_atoms = true;
    for p in 0..20 {
        let sample = diffusion_path(&sticky.speed, x0, &times, &pcfg, p)?;
        on_atoms &= sample
            .positions
            .iter()
            .all(|&x| [0.0, 0.5, 1.0].iter().any(|&a| (x - a).abs() < 1e-9));
    }
    rep.flag("paths live on the three atoms", on_atoms, CheckBasis::MonteCarlo);

    rep.op("law.sample");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    use rand_core::SeedableRng;
    let draws: Vec<f64> = (0..opts.paths).map(|_| law.sample(&mut rng)).collect();
    let emp = EmpiricalLaw::from_values(draws, 0);
    rep.row(
        "inverse-CDF sampler KS",
        verify::ks_distance(&emp, &law)?,
        0.0,
        2.0 * 1.36 / (opts.paths as f64).sqrt(),
        false,
        CheckBasis::QuadratureOracle,
    );

    Ok(rep)
}

fn inverse_bessel_pipeline(opts: &RunOptions) -> Result<ExampleReport> {
    let mut rep = ExampleReport::new("inverse-bessel", opts);
    let law = presets::inverse_bessel_law();
    let lambda = 0.5;
    let x0 = 1.0;
    let e = std::f64::consts::E;

    rep.op("law.mean");
    rep.row(
        "mean = 1 − 1/e",
        law.mean(),
        1.0 - 1.0 / e,
        1e-5,
        false,
        CheckBasis::QuadratureOracle,
    );
    rep.op("law.put_price");
    rep.row(
        "P(0.6) = sinh(1)·0.6·e^{−1/0.6}",
        law.put_price(0.6)?,
        1f64.sinh() * 0.6 * (-1.0 / 0.6f64).exp(),
        1e-5,
        true,
        CheckBasis::ClosedForm,
    );
    rep.op("law.call_price");
    rep.row(
        "C(2) = e^{−1}(2·sinh(1/2) − 1)",
        law.call_price(2.0)?,
        (2.0 * 0.5f64.sinh() - 1.0) / e,
        1e-4,
        true,
        CheckBasis::ClosedForm,
    );
    rep.op("law.kappa0");
    let kappa0 = law.kappa0(x0)?;
    rep.row(
        "kappa0 = 2 sinh(1)/e",
        kappa0,
        2.0 * 1f64.sinh() / e,
        1e-5,
        true,
        CheckBasis::ClosedForm,
    );

    rep.op("speed.minimalize");
    let minimal = speed::minimalize(&law, x0, lambda)?;
    for &x in &[0.25f64, 0.5, 1.5, 3.0] {
        rep.row(
            &format!("minimal speed density at {x} is x^-4"),
            minimal.speed.density(x),
            x.powi(-4),
            2e-6,
            true,
            CheckBasis::ClosedForm,
        );
    }

    rep.op("speed.classify");
    let report = speed::classify(&minimal)?;
    rep.flag(
        "minimal, right endpoint entrance, strict local martingale",
        report.minimal
            && report.right_entrance
            && !report.left_entrance
            && !report.martingale
            && report.strict_local_martingale == Some(true),
        CheckBasis::Consistency,
    );

    rep.op("eigen.solve");
    let speed = presets::inverse_bessel_speed();
    let sol = eigen::solve(
        &speed,
        x0,
        lambda,
        (BoundaryCondition::Absorbing, BoundaryCondition::Reflecting),
        &SolveOptions::default(),
    )?;
    rep.row(
        "Wronskian = e/sinh(1)",
        sol.wronskian,
        e / 1f64.sinh(),
        1e-5,
        true,
        CheckBasis::ClosedForm,
    );
    for &x in &[0.5f64, 2.0] {
        rep.row(
            &format!("increasing eigenfunction at {x}"),
            sol.value_varphi(x)?,
            x * (1.0 - 1.0 / x).exp(),
            2e-5,
            true,
            CheckBasis::ClosedForm,
        );
        rep.row(
            &format!("decreasing eigenfunction at {x}"),
            sol.value_phi(x)?,
            x * (1.0 / x).sinh() / 1f64.sinh(),
            2e-5,
            true,
            CheckBasis::ClosedForm,
        );
    }
    rep.op("eigen.hitting_laplace");
    rep.row(
        "E_2[exp(−H_1/2)] = 2 sinh(1/2)/sinh(1)",
        eigen::hitting_laplace(&sol, 2.0, 1.0)?,
        2.0 * 0.5f64.sinh() / 1f64.sinh(),
        1e-5,
        true,
        CheckBasis::ClosedForm,
    );
    rep.op("eigen.ode_residual");
    // ϕ spans ~20 orders of magnitude here; the solver's locally scaled
    // residual is the meaningful defect
    rep.row(
        "eigenfunction residuals (locally scaled)",
        sol.residual_varphi.max(sol.residual_phi),
        0.0,
        1e-8,
        false,
        CheckBasis::ResidualOracle,
    );

    rep.op("speed.to_law");
    let recovered = speed::to_law(
        &speed,
        x0,
        lambda,
        &ToLawOptions { sensitivity_check: true, ..Default::default() },
    )?;
    let mut worst: f64 = 0.0;
    for &x in &[0.5f64, 1.0, 2.0, 5.0] {
        let expected = law.density(x);
        worst = worst.max((recovered.density(x) - expected).abs() / expected);
    }
    rep.row(
        "recovered exponential-time density",
        worst,
        0.0,
        1e-3,
        false,
        CheckBasis::Consistency,
    );

    Ok(rep)
}

fn bessel_martingale_pipeline(opts: &RunOptions) -> Result<ExampleReport> {
    let mut rep = ExampleReport::new("bessel-martingale", opts);
    let law = presets::inverse_bessel_law();
    let lambda = 0.5;
    let xbar = law.mean();

    rep.op("speed.martingale_version");
    let spec = speed::martingale_version(&law, lambda)?;
    rep.row(
        "starts at the mean",
        spec.x0,
        1.0 - 1.0 / std::f64::consts::E,
        1e-5,
        false,
        CheckBasis::QuadratureOracle,
    );
    for &x in &[0.2f64, 0.4, 0.6] {
        rep.row(
            &format!("speed density at {x} is x^-4"),
            spec.speed.density(x),
            x.powi(-4),
            2e-6,
            true,
            CheckBasis::ClosedForm,
        );
    }
    for &x in &[0.7f64, 0.85, 0.99] {
        let mu = 1f64.sinh() * (-1.0 / x).exp() / (x * x * x);
        let c = 1f64.sinh() * x * (-1.0 / x).exp() + xbar - x;
        rep.row(
            &format!("middle-branch density at {x}"),
            spec.speed.density(x),
            mu / c,
            5e-5,
            true,
            CheckBasis::ClosedForm,
        );
    }

    rep.op("speed.classify");
    let report = speed::classify(&spec)?;
    rep.flag(
        "no entrance boundary; the stopped process is a martingale",
        !report.left_entrance
            && !report.right_entrance
            && report.martingale
            && report.strict_local_martingale == Some(false),
        CheckBasis::Consistency,
    );
    rep.flag("minimal at the mean", report.minimal, CheckBasis::Consistency);

    Ok(rep)
}

fn kimura_pipeline(opts: &RunOptions) -> Result<ExampleReport> {
    let mut rep = ExampleReport::new("kimura", opts);
    let lambda = 1.0;
    let x0 = 0.5;
    let speed = presets::kimura_speed();

    rep.op("eigen.solve");
    let solve_opts = SolveOptions {
        truncate: Some((0.0005, 0.9995)),
        ..Default::default()
    };
    let sol = eigen::solve(
        &speed,
        x0,
        lambda,
        (BoundaryCondition::Absorbing, BoundaryCondition::Absorbing),
        &solve_opts,
    )?;
    rep.row("Wronskian = 12", sol.wronskian, 12.0, 1e-6, true, CheckBasis::ClosedForm);
    for &x in &[0.2f64, 0.5, 0.8] {
        rep.row(
            &format!("increasing eigenfunction at {x}"),
            sol.value_varphi(x)?,
            2.0 * x * x / (1.0 - x),
            1e-5,
            true,
            CheckBasis::ClosedForm,
        );
    }

    rep.op("eigen.shift_family");
    rep.op("eigen.ode_residual");
    for delta in [0.0, 1.0, 5.0] {
        let shifted = eigen::shift_family(&sol, delta)?;
        let mut worst: f64 = 0.0;
        for &x in &[0.1f64, 0.3, 0.45] {
            let expected = (0.5 * delta * (1.0 - x) + x * x) * (1.0 - x) * (1.0 - x);
            worst = worst.max((shifted.sigma2(x).unwrap() - expected).abs() / expected);
        }
        for &x in &[0.55f64, 0.7, 0.9] {
            let expected = (0.5 * delta * x + (1.0 - x) * (1.0 - x)) * x * x;
            worst = worst.max((shifted.sigma2(x).unwrap() - expected).abs() / expected);
        }
        rep.row(
            &format!("shifted sigma^2 formulas at delta = {delta}"),
            worst,
            0.0,
            2e-5,
            false,
            CheckBasis::ClosedForm,
        );
        let grid: Vec<f64> = sol
            .grid
            .iter()
            .copied()
            .filter(|&x| (0.04..=0.96).contains(&x))
            .collect();
        let anchor = grid.partition_point(|&g| g < 0.5);
        let f = move |x: f64| {
            if x <= 0.5 {
                2.0 * x * x / (1.0 - x) + delta
            } else {
                2.0 * (1.0 - x) * (1.0 - x) / x + delta
            }
        };
        rep.row(
            &format!("shifted closed forms pass the residual oracle (delta = {delta})"),
            eigen::ode_residual_fn(&f, &grid, anchor, (6.0, -6.0), &shifted, lambda),
            0.0,
            1e-8,
            false,
            CheckBasis::ResidualOracle,
        );
    }

    rep.op("law.kappa0");
    rep.op("speed.minimalize");
    rep.op("speed.classify");
    let law = presets::kimura_exp_law();
    rep.row(
        "exponential-time law kappa0 = 1/6",
        law.kappa0(x0)?,
        1.0 / 6.0,
        1e-6,
        true,
        CheckBasis::ClosedForm,
    );
    let minimal = speed::minimalize(&law, x0, lambda)?;
    let mut worst: f64 = 0.0;
    for &x in &[0.2f64, 0.4, 0.6, 0.8] {
        let expected = 1.0 / (x * x * (1.0 - x) * (1.0 - x));
        worst = worst.max((minimal.speed.density(x) - expected).abs() / expected);
    }
    rep.row(
        "minimal speed reproduces the Kimura density",
        worst,
        0.0,
        1e-4,
        false,
        CheckBasis::Consistency,
    );
    let report = speed::classify(&minimal)?;
    rep.flag(
        "both endpoints natural (inaccessible), minimal",
        report.minimal
            && report.left == EndpointKind::Inaccessible
            && report.right == EndpointKind::Inaccessible,
        CheckBasis::Consistency,
    );

    Ok(rep)
}

fn reflected_cosh_pipeline(opts: &RunOptions) -> Result<ExampleReport> {
    let mut rep = ExampleReport::new("reflected-cosh", opts);
    let lambda = 0.5;
    let x0 = 1.5;
    let speed = presets::lebesgue_speed();

    rep.op("eigen.solve");
    let sol = eigen::solve(
        &speed,
        x0,
        lambda,
        (BoundaryCondition::Reflecting, BoundaryCondition::Reflecting),
        &SolveOptions::default(),
    )?;
    let mut worst: f64 = 0.0;
    for (i, &x) in sol.grid.iter().enumerate() {
        worst = worst
            .max((sol.varphi[i] - x.cosh() / x0.cosh()).abs())
            .max((sol.phi[i] - (2.0 - x).cosh() / (2.0 - x0).cosh()).abs());
    }
    rep.row(
        "cosh eigenfunction profiles (max abs deviation)",
        worst,
        0.0,
        1e-6,
        false,
        CheckBasis::ClosedForm,
    );
    rep.row(
        "Wronskian = tanh(x0) + tanh(2 − x0)",
        sol.wronskian,
        x0.tanh() + (2.0 - x0).tanh(),
        1e-9,
        true,
        CheckBasis::ClosedForm,
    );
    rep.op("eigen.hitting_laplace");
    rep.row(
        "E_1[exp(−H_1.5/2)] = cosh(1)/cosh(1.5)",
        eigen::hitting_laplace(&sol, 1.0, 1.5)?,
        1f64.cosh() / 1.5f64.cosh(),
        1e-8,
        true,
        CheckBasis::ClosedForm,
    );

    rep.op("speed.to_law");
    let law = speed::to_law(&speed, x0, lambda, &ToLawOptions::default())?;
    let w = x0.tanh() + (2.0 - x0).tanh();
    let mut worst: f64 = 0.0;
    for &x in &[0.3f64, 0.9, 1.4] {
        let expected = x.cosh() / x0.cosh() / w;
        worst = worst.max((law.density(x) - expected).abs() / expected);
    }
    rep.row(
        "exponential-time density is cosh-shaped",
        worst,
        0.0,
        1e-4,
        false,
        CheckBasis::ClosedForm,
    );

    rep.op("speed.minimalize");
    let minimal = speed::minimalize(&law, x0, lambda)?;
    let mut worst: f64 = 0.0;
    for &x in &[0.4f64, 0.9, 1.3] {
        let expected = 1.0 - 1.0 / x.cosh();
        worst = worst.max((minimal.speed.sigma2(x).unwrap() - expected).abs() / expected);
    }
    rep.row(
        "minimal sigma^2 = 1 − 1/cosh(x) below x0",
        worst,
        0.0,
        1e-4,
        false,
        CheckBasis::ClosedForm,
    );
    let mut worst: f64 = 0.0;
    for &x in &[1.7f64, 1.9] {
        let expected = 1.0 - (2.0 - x0).cosh() / ((2.0 - x).cosh() * x0.cosh());
        worst = worst.max((minimal.speed.sigma2(x).unwrap() - expected).abs() / expected);
    }
    rep.row(
        "minimal sigma^2 above x0",
        worst,
        0.0,
        1e-4,
        false,
        CheckBasis::ClosedForm,
    );

    rep.op("eigen.shift_family");
    let eta = 1.0 / x0.cosh();
    let shifted = eigen::shift_family(&sol, -eta)?;
    let mut worst: f64 = 0.0;
    for &x in &[0.4f64, 0.9, 1.3] {
        let expected = 1.0 - 1.0 / x.cosh();
        worst = worst.max((shifted.sigma2(x).unwrap() - expected).abs() / expected);
    }
    rep.row(
        "maximal downward shift reproduces the same sigma^2",
        worst,
        0.0,
        1e-7,
        false,
        CheckBasis::ClosedForm,
    );

    rep.op("speed.classify");
    let report = speed::classify(&minimal)?;
    rep.flag(
        "minimal: one entrance boundary (right), left inaccessible",
        report.minimal && report.right_entrance && !report.left_entrance
            && report.left == EndpointKind::Inaccessible,
        CheckBasis::Consistency,
    );
    let reflected = speed::DiffusionSpec::new(law.clone(), x0, lambda, 2.0 / sol.wronskian)?;
    let report = speed::classify(&reflected)?;
    rep.flag(
        "reflected original: two entrance boundaries, non-minimal",
        !report.minimal && report.left_entrance && report.right_entrance,
        CheckBasis::Consistency,
    );

    Ok(rep)
}

use rand_core::SeedableRng as _;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_examples_pass_with_small_budgets() {
        let opts = RunOptions { paths: 12_000, delta: 1.0 / 100.0, seed: 11 };
        for name in EXAMPLES {
            let rep = run_example(name, &opts).unwrap();
            let failed: Vec<&CheckRow> = rep.rows.iter().filter(|r| !r.pass).collect();
            assert!(
                rep.pass,
                "{name} failed rows: {:#?}",
                failed
            );
        }
    }

    #[test]
    fn unknown_example_errors() {
        assert!(matches!(
            run_example("nope", &RunOptions::default()),
            Err(Error::UnknownExample(_))
        ));
    }

    #[test]
    fn coverage_union_spans_public_operations() {
        let opts = RunOptions { paths: 12_000, delta: 1.0 / 100.0, seed: 11 };
        let mut seen = BTreeSet::new();
        for name in EXAMPLES {
            seen.extend(run_example(name, &opts).unwrap().ops_exercised);
        }
        for op in [
            "law.mean",
            "law.call_price",
            "law.put_price",
            "law.potential",
            "law.v_kernel",
            "law.kappa0",
            "law.sample",
            "speed.from_law",
            "speed.lambda_potential",
            "speed.classify",
            "speed.minimalize",
            "speed.martingale_version",
            "speed.to_law",
            "eigen.solve",
            "eigen.hitting_laplace",
            "eigen.ode_residual",
            "eigen.shift_family",
            "simulate.blj_stop",
            "simulate.exp_time_stop",
            "simulate.diffusion_path",
            "verify.ks_distance",
            "verify.wasserstein1",
            "verify.ks_two_sample",
            "verify.local_time_profile",
            "verify.minimality_suite",
        ] {
            assert!(seen.contains(op), "operation {op} not exercised by any example");
        }
    }
}
