//! Bundled example laws and speed measures.
//!
//! Analytic densities are sampled onto graded node grids at ingestion (the
//! piecewise-linear model is the exact representation everything else works
//! on); mass clipped at the tails is recorded on the law object and
//! renormalized away.

use std::sync::Arc;

use crate::law::{Atom, DensityPiece, LawSpec, TargetLaw};
use crate::speed::{DensityForm, SpeedDensityPiece, SpeedMeasure, SpeedSpec};
use crate::{Error, Result};

pub const LAW_PRESETS: [&str; 3] = ["jump3", "inverse-bessel", "kimura-exp-law"];
pub const SPEED_PRESETS: [&str; 3] = ["lebesgue", "kimura", "inverse-bessel"];

/// μ = (δ₀ + δ_{1/2} + δ₁)/3.
pub fn jump3() -> TargetLaw {
    TargetLaw::new(
        vec![
            Atom { position: 0.0, mass: 1.0 / 3.0 },
            Atom { position: 0.5, mass: 1.0 / 3.0 },
            Atom { position: 1.0, mass: 1.0 / 3.0 },
        ],
        vec![],
    )
    .expect("jump3 preset is valid")
}

/// Exponential-time law of the inverse Bessel(3) diffusion started at 1
/// (λ = 1/2): density `sinh(1)e^{−1/x}x⁻³` on (0,1], `e⁻¹sinh(1/x)x⁻³` on
/// [1,∞); total mass 1, mean 1 − 1/e.
///
/// The left tail is clipped at mass 1e-8 and the right tail where its first
/// moment drops to 1e-8, so put/call values stay reliable to ~1e-6 relative
/// wherever they are not exponentially small.
pub fn inverse_bessel_law() -> TargetLaw {
    let density = |x: f64| {
        if x <= 0.0 {
            0.0
        } else if x <= 1.0 {
            1f64.sinh() * (-1.0 / x).exp() / (x * x * x)
        } else {
            (1.0 / x).sinh() / std::f64::consts::E / (x * x * x)
        }
    };
    // left: sinh(1)(1+1/x)e^{−1/x} = 1e-8; right: tail first moment
    // ∫ y μ(dy) ≈ 1/(2e x²) = 1e-8
    let x_left = 0.046_08f64;
    let x_right = 4290.0f64;
    // uniform in 1/x below 1 (resolves the essential singularity),
    // log-spaced above
    let mut grid = Vec::with_capacity(22_000);
    let u_max = 1.0 / x_left;
    let n1 = 16_000;
    for k in 0..n1 {
        let u = u_max - (u_max - 1.0) * k as f64 / n1 as f64;
        grid.push(1.0 / u);
    }
    let n2 = 20_000;
    let ln_hi = x_right.ln();
    for k in 0..=n2 {
        grid.push((ln_hi * k as f64 / n2 as f64).exp());
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    TargetLaw::from_density_fn(
        density,
        (0.0, f64::INFINITY),
        &grid,
        (1e-8, 1e-8),
        "inverse-bessel",
    )
    .expect("inverse-bessel preset is valid")
}

/// Exponential-time law of the Kimura diffusion started at 1/2 (λ = 1):
/// density `(1/3)(1−x)⁻³` on (0,1/2], `(1/3)x⁻³` on [1/2,1).
pub fn kimura_exp_law() -> TargetLaw {
    let lower = |x: f64| (1.0 - x).powi(-3) / 3.0;
    let upper = |x: f64| x.powi(-3) / 3.0;
    let n = 1200usize;
    let sample = |f: &dyn Fn(f64) -> f64, off: f64, scale: f64| -> Vec<(f64, f64)> {
        (0..=n)
            .map(|k| {
                let x = off + 0.5 * k as f64 / n as f64;
                (x, scale * f(x))
            })
            .collect()
    };
    // rescale the trapezoid total to exactly 1 before construction
    let mut total = 0.0;
    for (f, off) in [(&lower as &dyn Fn(f64) -> f64, 0.0), (&upper, 0.5)] {
        let nodes = sample(f, off, 1.0);
        for w in nodes.windows(2) {
            total += 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
        }
    }
    let scale = 1.0 / total;
    TargetLaw::with_declared_support(
        vec![],
        vec![
            DensityPiece::new(sample(&lower, 0.0, scale)).expect("lower kimura piece"),
            DensityPiece::new(sample(&upper, 0.5, scale)).expect("upper kimura piece"),
        ],
        Some((0.0, 1.0)),
        Some(crate::law::Discretization {
            tail_epsilon: (0.0, 0.0),
            source: "kimura-exp-law".into(),
        }),
    )
    .expect("kimura-exp-law preset is valid")
}

/// Lebesgue speed measure on [0, 2] (reflected Brownian motion).
pub fn lebesgue_speed() -> SpeedMeasure {
    SpeedMeasure::new(
        (0.0, 2.0),
        vec![],
        vec![SpeedDensityPiece {
            lo: 0.0,
            hi: 2.0,
            form: DensityForm::Pwl(vec![(0.0, 1.0), (2.0, 1.0)]),
        }],
    )
    .expect("lebesgue preset is valid")
}

/// Kimura speed measure `m(dx) = dx/(x²(1−x)²)` on (0, 1).
pub fn kimura_speed() -> SpeedMeasure {
    SpeedMeasure::new(
        (0.0, 1.0),
        vec![],
        vec![SpeedDensityPiece {
            lo: 0.0,
            hi: 1.0,
            form: DensityForm::Func(Arc::new(|x: f64| {
                1.0 / (x * x * (1.0 - x) * (1.0 - x))
            })),
        }],
    )
    .expect("kimura speed preset is valid")
}

/// Inverse-Bessel speed measure `m(dx) = dx/x⁴` on (0, ∞), represented on
/// (0.05, 40).
pub fn inverse_bessel_speed() -> SpeedMeasure {
    SpeedMeasure::new(
        (0.0, f64::INFINITY),
        vec![],
        vec![SpeedDensityPiece {
            lo: 0.05,
            hi: 40.0,
            form: DensityForm::Func(Arc::new(|x: f64| x.powi(-4))),
        }],
    )
    .expect("inverse-bessel speed preset is valid")
}

pub fn law_preset(name: &str) -> Result<TargetLaw> {
    match name {
        "jump3" => Ok(jump3()),
        "inverse-bessel" => Ok(inverse_bessel_law()),
        "kimura-exp-law" => Ok(kimura_exp_law()),
        other => Err(Error::UnknownExample(other.to_string())),
    }
}

pub fn speed_preset(name: &str) -> Result<SpeedMeasure> {
    match name {
        "lebesgue" => Ok(lebesgue_speed()),
        "kimura" => Ok(kimura_speed()),
        "inverse-bessel" => Ok(inverse_bessel_speed()),
        other => Err(Error::UnknownExample(other.to_string())),
    }
}

/// Resolves a parsed law spec, dispatching `preset` names.
pub fn law_from_spec(spec: &LawSpec) -> Result<TargetLaw> {
    match &spec.preset {
        Some(name) => {
            if !spec.atoms.is_empty() || !spec.density.is_empty() {
                return Err(Error::Config(
                    "law spec must not combine a preset with an explicit body".into(),
                ));
            }
            law_preset(name)
        }
        None => TargetLaw::from_spec(spec),
    }
}

/// Resolves a parsed speed spec, dispatching `preset` names.
pub fn speed_from_spec(spec: &SpeedSpec) -> Result<SpeedMeasure> {
    match &spec.preset {
        Some(name) => {
            if !spec.atoms.is_empty() || !spec.density.is_empty() {
                return Err(Error::Config(
                    "speed spec must not combine a preset with an explicit body".into(),
                ));
            }
            speed_preset(name)
        }
        None => SpeedMeasure::from_spec(spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverse_bessel_mean_and_potentials() {
        let law = inverse_bessel_law();
        // x̄ = 1 − 1/e up to the recorded tail clipping
        let expected = 1.0 - (-1.0f64).exp();
        assert!(
            (law.mean() - expected).abs() < 2e-4,
            "mean {} vs {expected}",
            law.mean()
        );
        // P(x) = sinh(1)·x·e^{−1/x} below 1, C(x) = e⁻¹(x·sinh(1/x) − 1) above
        for &x in &[0.3f64, 0.6, 0.9] {
            let p = 1f64.sinh() * x * (-1.0 / x).exp();
            assert_relative_eq!(law.put_price(x).unwrap(), p, max_relative = 1e-5);
        }
        for &x in &[1.0f64, 2.0, 5.0] {
            let c = ((1.0 / x).sinh() * x - 1.0) / std::f64::consts::E;
            assert_relative_eq!(law.call_price(x).unwrap(), c, max_relative = 2e-4);
        }
        // κ₀ at x0 = 1 is 2P(1) = 2 sinh(1)/e
        let k0 = law.kappa0(1.0).unwrap();
        assert_relative_eq!(
            k0,
            2.0 * 1f64.sinh() / std::f64::consts::E,
            max_relative = 1e-5
        );
    }

    #[test]
    fn minimal_inverse_bessel_speed_is_quartic() {
        let law = inverse_bessel_law();
        let spec = crate::speed::minimalize(&law, 1.0, 0.5).unwrap();
        for &x in &[0.2f64, 0.5, 0.8, 1.5, 3.0] {
            let got = spec.speed.density(x);
            assert_relative_eq!(got, x.powi(-4), max_relative = 2e-6);
        }
    }

    #[test]
    fn martingale_version_matches_printed_branches() {
        let law = inverse_bessel_law();
        let spec = crate::speed::martingale_version(&law, 0.5).unwrap();
        let xbar = law.mean();
        // below the mean: dx/x⁴
        for &x in &[0.2f64, 0.4, 0.6] {
            assert_relative_eq!(spec.speed.density(x), x.powi(-4), max_relative = 2e-6);
        }
        // middle branch on (x̄, 1]: μ/C with C(x) = sinh(1)xe^{−1/x} + x̄ − x
        for &x in &[0.7f64, 0.85, 0.99] {
            let mu = 1f64.sinh() * (-1.0 / x).exp() / (x * x * x);
            let c = 1f64.sinh() * x * (-1.0 / x).exp() + xbar - x;
            assert_relative_eq!(spec.speed.density(x), mu / c, max_relative = 5e-5);
        }
    }

    #[test]
    fn kimura_law_mass_and_kappa0() {
        let law = kimura_exp_law();
        assert_relative_eq!(law.mean(), 0.5, epsilon = 1e-9);
        // P(1/2) = 1/12, κ₀ = 1/6, and the law is symmetric
        assert_relative_eq!(
            law.put_price(0.5).unwrap(),
            1.0 / 12.0,
            max_relative = 1e-6
        );
        assert_relative_eq!(law.kappa0(0.5).unwrap(), 1.0 / 6.0, max_relative = 1e-6);
        // minimal speed reproduces the Kimura density
        let spec = crate::speed::minimalize(&law, 0.5, 1.0).unwrap();
        for &x in &[0.2f64, 0.4, 0.6, 0.8] {
            let expected = 1.0 / (x * x * (1.0 - x) * (1.0 - x));
            assert_relative_eq!(spec.speed.density(x), expected, max_relative = 1e-4);
        }
    }

    #[test]
    fn preset_lookup_errors_on_unknown() {
        assert!(law_preset("nope").is_err());
        assert!(speed_preset("nope").is_err());
    }
}
