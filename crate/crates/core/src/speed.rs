//! Speed measures and the correspondence between a diffusion's exponential
//! time law and its speed measure.
//!
//! The forward direction is the decomposition
//!
//! ```text
//! m(dx) = (1/2λ) μ(dx) / (P(x) − P(x0) + κ/2)   for a < x ≤ x0,
//! m(dx) = (1/2λ) μ(dx) / (C(x) − C(x0) + κ/2)   for x0 ≤ x < b,
//! ```
//!
//! with `κ = 2/W_λ ≥ κ₀ = max{2C(x0), 2P(x0)}`. Where the denominator
//! vanishes at an endpoint atom of μ the speed measure gets an infinite atom
//! (an absorbing endpoint); κ = κ₀ makes the diffusion minimal. The inverse
//! direction (`to_law`) multiplies the λ-potential back against `m` using
//! the eigenfunctions and recovers endpoint masses from hitting transforms.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::eigen::{self, BoundaryCondition, SolveOptions};
use crate::law::{Atom, DensityPiece, Discretization, TargetLaw};
use crate::quadrature::{integrate, GL8};
use crate::{Error, Result};

/// Atom of a speed measure; endpoints may carry infinite mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AtomMass {
    Finite(f64),
    Infinite,
}

impl AtomMass {
    pub fn is_infinite(&self) -> bool {
        matches!(self, AtomMass::Infinite)
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            AtomMass::Finite(m) => Some(*m),
            AtomMass::Infinite => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedAtom {
    pub position: f64,
    pub mass: AtomMass,
}

/// Density of a speed measure piece: sampled nodes or a closed form.
#[derive(Clone)]
pub enum DensityForm {
    Pwl(Vec<(f64, f64)>),
    Func(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for DensityForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensityForm::Pwl(nodes) => write!(f, "Pwl({} nodes)", nodes.len()),
            DensityForm::Func(_) => write!(f, "Func(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpeedDensityPiece {
    pub lo: f64,
    pub hi: f64,
    pub form: DensityForm,
}

impl SpeedDensityPiece {
    pub fn density(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        match &self.form {
            DensityForm::Pwl(nodes) => {
                let i = nodes.partition_point(|n| n.0 <= x).clamp(1, nodes.len() - 1) - 1;
                let (x0, f0) = nodes[i];
                let (x1, f1) = nodes[i + 1];
                f0 + (f1 - f0) * (x - x0) / (x1 - x0)
            }
            DensityForm::Func(f) => f(x).max(0.0),
        }
    }
}

/// Nonnegative, non-zero Borel measure on an interval, with atoms (possibly
/// infinite at the endpoints) and density pieces.
#[derive(Debug, Clone)]
pub struct SpeedMeasure {
    interval: (f64, f64),
    domain: (f64, f64),
    atoms: Vec<SpeedAtom>,
    pieces: Vec<SpeedDensityPiece>,
}

impl SpeedMeasure {
    pub fn new(
        interval: (f64, f64),
        mut atoms: Vec<SpeedAtom>,
        pieces: Vec<SpeedDensityPiece>,
    ) -> Result<Self> {
        if atoms.is_empty() && pieces.is_empty() {
            return Err(Error::InvalidSpeed("measure has no mass".into()));
        }
        atoms.sort_by(|a, b| a.position.total_cmp(&b.position));
        for w in atoms.windows(2) {
            if w[0].position == w[1].position {
                return Err(Error::InvalidSpeed(format!(
                    "duplicate atom at {}",
                    w[0].position
                )));
            }
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in &atoms {
            if !a.position.is_finite() {
                return Err(Error::InvalidSpeed("atom at a non-finite position".into()));
            }
            if let AtomMass::Finite(m) = a.mass {
                if !(m > 0.0) || !m.is_finite() {
                    return Err(Error::InvalidSpeed(format!(
                        "atom at {} must have positive finite mass or the infinite flag",
                        a.position
                    )));
                }
            }
            lo = lo.min(a.position);
            hi = hi.max(a.position);
        }
        for p in &pieces {
            if !(p.hi > p.lo) {
                return Err(Error::InvalidSpeed("empty density piece".into()));
            }
            if let DensityForm::Pwl(nodes) = &p.form {
                if nodes.len() < 2 {
                    return Err(Error::InvalidSpeed("density piece needs two nodes".into()));
                }
                for n in nodes {
                    if !n.1.is_finite() || n.1 < 0.0 {
                        return Err(Error::InvalidSpeed(format!(
                            "density node ({}, {}) is not finite and nonnegative",
                            n.0, n.1
                        )));
                    }
                }
            }
            lo = lo.min(p.lo);
            hi = hi.max(p.hi);
        }
        let domain = (lo, hi);
        for a in &atoms {
            if a.mass.is_infinite() && a.position > lo && a.position < hi {
                return Err(Error::InvalidSpeed(format!(
                    "infinite atom at interior point {}",
                    a.position
                )));
            }
        }
        Ok(Self { interval, domain, atoms, pieces })
    }

    /// Declared interval (a, b); endpoints may be infinite.
    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    /// Finite hull of the represented mass.
    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn atoms(&self) -> &[SpeedAtom] {
        &self.atoms
    }

    pub fn pieces(&self) -> &[SpeedDensityPiece] {
        &self.pieces
    }

    pub fn density(&self, x: f64) -> f64 {
        self.pieces.iter().map(|p| p.density(x)).sum()
    }

    /// σ²(x) = 1/density(x) where a positive density exists.
    pub fn sigma2(&self, x: f64) -> Option<f64> {
        let d = self.density(x);
        (d > 0.0).then(|| 1.0 / d)
    }

    pub fn atom_at(&self, x: f64) -> Option<SpeedAtom> {
        let scale = 1.0 + x.abs();
        self.atoms
            .iter()
            .find(|a| (a.position - x).abs() <= 1e-12 * scale)
            .copied()
    }

    pub fn has_infinite_atom(&self) -> bool {
        self.atoms.iter().any(|a| a.mass.is_infinite())
    }

    /// Mass of `[lo, hi]` by composite Gauss on the density plus atoms;
    /// infinite atoms make the result infinite.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        let mut total = 0.0;
        for a in &self.atoms {
            if a.position >= lo && a.position <= hi {
                match a.mass {
                    AtomMass::Infinite => return f64::INFINITY,
                    AtomMass::Finite(m) => total += m,
                }
            }
        }
        for p in &self.pieces {
            let l = lo.max(p.lo);
            let h = hi.min(p.hi);
            if h <= l {
                continue;
            }
            let n = 64;
            let step = (h - l) / n as f64;
            for k in 0..n {
                let a = l + step * k as f64;
                total += integrate(&GL8, a, a + step, |x| p.density(x));
            }
        }
        total
    }

    pub fn to_spec(&self) -> SpeedSpec {
        let enc = |v: f64| if v.is_finite() { Some(v) } else { None };
        let mut infinite = Vec::new();
        let mut atoms = Vec::new();
        for a in &self.atoms {
            match a.mass {
                AtomMass::Infinite => {
                    infinite.push(
                        if (a.position - self.domain.0).abs() <= (a.position - self.domain.1).abs()
                        {
                            "left".to_string()
                        } else {
                            "right".to_string()
                        },
                    );
                }
                AtomMass::Finite(m) => atoms.push([a.position, m]),
            }
        }
        SpeedSpec {
            schema_version: 1,
            preset: None,
            interval: [enc(self.interval.0), enc(self.interval.1)],
            atoms,
            infinite_atoms: infinite,
            density: self
                .pieces
                .iter()
                .map(|p| {
                    let nodes: Vec<[f64; 2]> = match &p.form {
                        DensityForm::Pwl(nodes) => nodes.iter().map(|&(x, f)| [x, f]).collect(),
                        DensityForm::Func(f) => {
                            // sampled export; interior nodes avoid endpoint blow-ups
                            let n = 512;
                            (0..=n)
                                .map(|k| {
                                    let t = (k as f64 + 0.5) / (n as f64 + 1.0);
                                    let x = p.lo + (p.hi - p.lo) * t;
                                    [x, f(x)]
                                })
                                .collect()
                        }
                    };
                    SpeedPieceSpec { interval: [p.lo, p.hi], nodes }
                })
                .collect(),
        }
    }

    pub fn from_spec(spec: &SpeedSpec) -> Result<Self> {
        if spec.schema_version != 1 {
            return Err(Error::Config(format!(
                "unsupported schema_version {}",
                spec.schema_version
            )));
        }
        let interval = (
            spec.interval[0].unwrap_or(f64::NEG_INFINITY),
            spec.interval[1].unwrap_or(f64::INFINITY),
        );
        let mut atoms: Vec<SpeedAtom> = spec
            .atoms
            .iter()
            .map(|&[x, m]| SpeedAtom { position: x, mass: AtomMass::Finite(m) })
            .collect();
        let pieces: Vec<SpeedDensityPiece> = spec
            .density
            .iter()
            .map(|p| SpeedDensityPiece {
                lo: p.interval[0],
                hi: p.interval[1],
                form: DensityForm::Pwl(p.nodes.iter().map(|&[x, f]| (x, f)).collect()),
            })
            .collect();
        // hull of the explicit mass decides where the infinite flags sit
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in &atoms {
            lo = lo.min(a.position);
            hi = hi.max(a.position);
        }
        for p in &pieces {
            lo = lo.min(p.lo);
            hi = hi.max(p.hi);
        }
        for side in &spec.infinite_atoms {
            let pos = match side.as_str() {
                "left" => {
                    if interval.0.is_finite() {
                        interval.0.min(lo)
                    } else {
                        lo
                    }
                }
                "right" => {
                    if interval.1.is_finite() {
                        interval.1.max(hi)
                    } else {
                        hi
                    }
                }
                other => {
                    return Err(Error::Config(format!(
                        "infinite_atoms entries must be \"left\" or \"right\", got {other:?}"
                    )))
                }
            };
            atoms.retain(|a| a.position != pos);
            atoms.push(SpeedAtom { position: pos, mass: AtomMass::Infinite });
        }
        Self::new(interval, atoms, pieces)
    }
}

/// On-disk speed-measure description (mirrors the law spec plus the
/// infinite-atom flags; infinite atoms are never encoded as large floats).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeedSpec {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub interval: [Option<f64>; 2],
    #[serde(default)]
    pub atoms: Vec<[f64; 2]>,
    #[serde(default)]
    pub infinite_atoms: Vec<String>,
    #[serde(default)]
    pub density: Vec<SpeedPieceSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeedPieceSpec {
    pub interval: [f64; 2],
    pub nodes: Vec<[f64; 2]>,
}

/// Equality tolerance for the boundary dichotomy: exact-model laws resolve
/// `1/W = P(x0)` at machine precision, ingested numeric laws carry their
/// discretization.
pub fn law_equality_tol(law: &TargetLaw) -> f64 {
    if law.is_numeric() {
        1e-9
    } else {
        1e-12
    }
}

/// A diffusion pinned by (μ, x0, λ, κ) with its derived speed measure;
/// κ = 2/W_λ.
#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    pub law: TargetLaw,
    pub x0: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub speed: SpeedMeasure,
}

impl DiffusionSpec {
    pub fn new(law: TargetLaw, x0: f64, lambda: f64, kappa: f64) -> Result<Self> {
        let speed = from_law(&law, x0, lambda, kappa)?;
        Ok(Self { law, x0, lambda, kappa, speed })
    }

    pub fn wronskian(&self) -> f64 {
        2.0 / self.kappa
    }
}

/// Builds the speed measure of the diffusion with `X_{T_λ} ~ μ` and
/// Wronskian `2/κ`.
pub fn from_law(law: &TargetLaw, x0: f64, lambda: f64, kappa: f64) -> Result<SpeedMeasure> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    let kappa0 = law.kappa0(x0)?;
    let tol = law_equality_tol(law) * (1.0 + kappa0);
    if kappa < kappa0 - tol {
        return Err(Error::InconsistentWronskian { kappa, kappa0 });
    }
    let half_kappa = 0.5 * kappa;
    let (a, b) = law.support();

    let put = law.put_profile();
    let call = law.call_profile();
    let p0 = put.value(x0);
    let c0 = call.value(x0);
    // at a minimal side the offset κ/2 − P(x0) (resp. C) is analytically
    // zero; snap it so rounding residue cannot mask the denominator's
    // vanishing at the boundary
    let snap = |off: f64| if off.abs() <= tol { 0.0 } else { off };
    let off_put = snap(half_kappa - p0);
    let off_call = snap(half_kappa - c0);

    let mut atoms = Vec::new();
    for at in law.atoms() {
        let x = at.position;
        let d = if x <= x0 {
            put.value(x) + off_put
        } else {
            call.value(x) + off_call
        };
        if d <= tol {
            // only the extreme support points can reach a vanishing denominator
            assert!(
                (x - a).abs() <= 1e-12 * (1.0 + a.abs())
                    || (x - b).abs() <= 1e-12 * (1.0 + b.abs()),
                "vanishing denominator at interior atom {x}: convexity violated"
            );
            atoms.push(SpeedAtom { position: x, mass: AtomMass::Infinite });
        } else {
            atoms.push(SpeedAtom {
                position: x,
                mass: AtomMass::Finite(at.mass / (2.0 * lambda * d)),
            });
        }
    }

    let mut pieces = Vec::new();
    for piece in law.pieces() {
        let law_c = law.clone();
        let (lo, hi) = (piece.lo(), piece.hi());
        let f = move |x: f64| {
            let d = if x <= x0 {
                law_c.put_profile().value(x) + off_put
            } else {
                law_c.call_profile().value(x) + off_call
            };
            let num = law_c.density(x);
            if d <= 0.0 {
                if num > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            } else {
                num / (2.0 * lambda * d)
            }
        };
        pieces.push(SpeedDensityPiece { lo, hi, form: DensityForm::Func(Arc::new(f)) });
    }

    SpeedMeasure::new(law.declared_support(), atoms, pieces)
}

/// u_λ(x0, y): the λ-potential of the diffusion, computed from the branch
/// formula and cross-checked against κ − V(y).
pub fn lambda_potential(spec: &DiffusionSpec, y: f64) -> Result<f64> {
    let (a, b) = spec.law.support();
    if y < a || y > b {
        return Err(Error::Domain { what: "y", value: y, lo: a, hi: b });
    }
    let u = if y <= spec.x0 {
        2.0 * (spec.law.put_price(y)? - spec.law.put_price(spec.x0)?) + spec.kappa
    } else {
        2.0 * (spec.law.call_price(y)? - spec.law.call_price(spec.x0)?) + spec.kappa
    };
    let via_v = spec.kappa - spec.law.v_kernel(spec.x0, y)?;
    assert!(
        (u - via_v).abs() <= 1e-12 * (1.0 + u.abs().max(via_v.abs())),
        "lambda-potential routes disagree at y = {y}: {u} vs {via_v}"
    );
    Ok(u)
}

/// Per-endpoint behaviour; `StickyReflecting` covers instantly reflecting
/// endpoints (zero atom) as well.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndpointKind {
    Absorbing,
    StickyReflecting,
    Inaccessible,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub left: EndpointKind,
    pub right: EndpointKind,
    pub left_entrance: bool,
    pub right_entrance: bool,
    pub minimal: bool,
    pub martingale: bool,
    /// Only reported when an endpoint is infinite; a stopped diffusion on a
    /// bounded interval is always a martingale.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strict_local_martingale: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Side {
    Left,
    Right,
}

/// True when `∫ (1+|x|) m(dx)` diverges toward the endpoint (or an infinite
/// atom sits there) — the boundary dichotomy used to pick eigenfunction
/// boundary conditions.
pub(crate) fn boundary_tail_diverges(speed: &SpeedMeasure, side: Side) -> bool {
    tail_integral_diverges(speed, side, |x| 1.0 + x.abs())
}

/// Does `∫ w(x) m(dx)` diverge toward the given endpoint of the effective
/// domain? Probes geometrically shrinking bands; divergence shows up as
/// non-vanishing (or growing) band increments or a blown-up total.
fn tail_integral_diverges(speed: &SpeedMeasure, side: Side, weight: impl Fn(f64) -> f64) -> bool {
    let (lo, hi) = speed.domain();
    let endpoint = match side {
        Side::Left => lo,
        Side::Right => hi,
    };
    if let Some(atom) = speed.atom_at(endpoint) {
        if atom.mass.is_infinite() {
            return true;
        }
    }
    let width = hi - lo;
    let mut eps = 0.25 * width;
    let mut total = 0.0;
    let mut last_increment = f64::INFINITY;
    let cap = 1e12 * (1.0 + endpoint.abs());
    for _ in 0..48 {
        let next = 0.5 * eps;
        let (band_lo, band_hi) = match side {
            Side::Left => (endpoint + next, endpoint + eps),
            Side::Right => (endpoint - eps, endpoint - next),
        };
        let mut inc = integrate(&GL8, band_lo, band_hi, |x| weight(x) * speed.density(x));
        for a in speed.atoms() {
            if a.position > band_lo && a.position <= band_hi {
                match a.mass {
                    AtomMass::Infinite => return true,
                    AtomMass::Finite(m) => inc += weight(a.position) * m,
                }
            }
        }
        total += inc;
        last_increment = inc;
        if total > cap {
            return true;
        }
        eps = next;
    }
    last_increment > 1e-10 * (1.0 + total)
}

/// Boundary behaviour, minimality and the martingale property of the
/// diffusion. Entrance is decided both by the numeric tail-integral test on
/// `m` and by the exact Wronskian equality `1/W = P(x0)` (resp. `C(x0)`);
/// the two routes must agree.
pub fn classify(spec: &DiffusionSpec) -> Result<BoundaryReport> {
    let tol = law_equality_tol(&spec.law) * (1.0 + spec.kappa);
    let p0 = spec.law.put_price(spec.x0)?;
    let c0 = spec.law.call_price(spec.x0)?;
    let half_kappa = 0.5 * spec.kappa;

    let eq_diverges_left = (half_kappa - p0).abs() <= tol;
    let eq_diverges_right = (half_kappa - c0).abs() <= tol;
    let num_diverges_left = tail_integral_diverges(&spec.speed, Side::Left, |x| 1.0 + x.abs());
    let num_diverges_right = tail_integral_diverges(&spec.speed, Side::Right, |x| 1.0 + x.abs());
    if eq_diverges_left != num_diverges_left || eq_diverges_right != num_diverges_right {
        return Err(Error::ClassificationConflict(format!(
            "Wronskian equality says diverges = ({eq_diverges_left}, {eq_diverges_right}), \
             tail integrals say ({num_diverges_left}, {num_diverges_right})"
        )));
    }

    let (a_decl, b_decl) = spec.speed.interval();
    let (a_eff, b_eff) = spec.speed.domain();
    let kind_of = |side: Side| -> EndpointKind {
        let (decl, eff, diverges) = match side {
            Side::Left => (a_decl, a_eff, num_diverges_left),
            Side::Right => (b_decl, b_eff, num_diverges_right),
        };
        if !decl.is_finite() {
            return EndpointKind::Inaccessible;
        }
        if let Some(atom) = spec.speed.atom_at(eff) {
            if atom.mass.is_infinite() {
                return EndpointKind::Absorbing;
            }
        }
        if !diverges {
            return EndpointKind::StickyReflecting;
        }
        // divergent mass: reachable in finite time means frozen on arrival
        let accessible = !tail_integral_diverges(&spec.speed, side, |x| match side {
            Side::Left => x - a_eff,
            Side::Right => b_eff - x,
        });
        if accessible {
            EndpointKind::Absorbing
        } else {
            EndpointKind::Inaccessible
        }
    };

    let minimal = (half_kappa - p0.max(c0)).abs() <= tol;
    let left_entrance = !num_diverges_left;
    let right_entrance = !num_diverges_right;
    let entrance_count = left_entrance as u8 + right_entrance as u8;
    assert_eq!(
        minimal,
        entrance_count <= 1,
        "minimality and the entrance-boundary count disagree"
    );

    // Kotani: on an unbounded side the stopped process is a martingale iff
    // the x-weighted tail integral diverges there.
    let mut martingale = true;
    if !b_decl.is_finite() && right_entrance {
        martingale = false;
    }
    if !a_decl.is_finite() && left_entrance {
        martingale = false;
    }
    let unbounded = !a_decl.is_finite() || !b_decl.is_finite();

    Ok(BoundaryReport {
        left: kind_of(Side::Left),
        right: kind_of(Side::Right),
        left_entrance,
        right_entrance,
        minimal,
        martingale,
        strict_local_martingale: unbounded.then_some(!martingale),
    })
}

/// The minimal diffusion for (μ, x0, λ): κ = κ₀.
pub fn minimalize(law: &TargetLaw, x0: f64, lambda: f64) -> Result<DiffusionSpec> {
    let kappa0 = law.kappa0(x0)?;
    DiffusionSpec::new(law.clone(), x0, lambda, kappa0)
}

/// The martingale version: started at the mean, where κ₀ = 2C = 2P and both
/// boundary integrals diverge.
pub fn martingale_version(law: &TargetLaw, lambda: f64) -> Result<DiffusionSpec> {
    let mean = law.mean();
    let atom = law.atom_mass_at(mean);
    if atom > 0.0 {
        return Err(Error::AtomAt {
            at: mean,
            mass: atom,
            context: "martingale version starts at the mean, which must carry no atom",
        });
    }
    minimalize(law, mean, lambda)
}

/// Options for the eigen solve embedded in `to_law`.
#[derive(Debug, Clone, Default)]
pub struct ToLawOptions {
    pub solve: SolveOptions,
    /// Run the ε vs ε/2 truncation-sensitivity check (meaningful when the
    /// solve domain is truncated away from the measure's own hull).
    pub sensitivity_check: bool,
}

/// Recovers the exponential-time law of the diffusion with speed measure `m`
/// started at `x0`: interior mass is `λ·u_λ(x0, x)·m(dx)` with
/// `u_λ(x0, x) = (2/W)·φ(x∧x0)·ϕ(x∨x0)`, and absorbing endpoints receive the
/// hitting masses `E[e^{−λH}]` from the eigenfunction ratios.
pub fn to_law(
    speed: &SpeedMeasure,
    x0: f64,
    lambda: f64,
    opts: &ToLawOptions,
) -> Result<TargetLaw> {
    let sol = eigen::solve(
        speed,
        x0,
        lambda,
        (BoundaryCondition::FromClassification, BoundaryCondition::FromClassification),
        &opts.solve,
    )?;
    if opts.sensitivity_check {
        eigen::truncation_sensitivity(speed, x0, lambda, &opts.solve)?;
    }
    let w = sol.wronskian;
    let (lo, hi) = (sol.grid[0], sol.grid[sol.grid.len() - 1]);

    let mut atoms: Vec<Atom> = Vec::new();
    let mut total_atom_mass = 0.0;
    for a in speed.atoms() {
        match a.mass {
            AtomMass::Infinite => {
                // absorption mass via E_{x0}[e^{−λ H_endpoint}]
                let mass = eigen::hitting_laplace(&sol, x0, a.position)?;
                if mass > 1e-15 {
                    atoms.push(Atom { position: a.position, mass });
                    total_atom_mass += mass;
                }
            }
            AtomMass::Finite(m) => {
                let u = (2.0 / w)
                    * sol.value_varphi(a.position.min(x0))?
                    * sol.value_phi(a.position.max(x0))?;
                let mass = lambda * u * m;
                if mass > 1e-15 {
                    atoms.push(Atom { position: a.position, mass });
                    total_atom_mass += mass;
                }
            }
        }
    }
    // a truncated-away absorbing end of a singular density also leaks hitting
    // mass; pick it up when the solve used an absorbing condition off-atom
    for (endpoint, absorbing) in [(lo, sol.left_absorbing), (hi, sol.right_absorbing)] {
        if absorbing && speed.atom_at(endpoint).is_none() {
            let mass = eigen::hitting_laplace(&sol, x0, endpoint)?;
            if mass > 1e-12 {
                atoms.push(Atom { position: endpoint, mass });
                total_atom_mass += mass;
            }
        }
    }

    let mut nodes: Vec<(f64, f64)> = Vec::with_capacity(sol.grid.len());
    for (i, &x) in sol.grid.iter().enumerate() {
        let u = (2.0 / w) * if x <= x0 { sol.varphi[i] } else { sol.phi[i] };
        nodes.push((x, lambda * u * speed.density(x)));
    }
    let mut density_mass = 0.0;
    for pair in nodes.windows(2) {
        density_mass += 0.5 * (pair[0].1 + pair[1].1) * (pair[1].0 - pair[0].0);
    }

    let total = total_atom_mass + density_mass;
    if (total - 1.0).abs() > 1e-3 {
        return Err(Error::InvalidSpeed(format!(
            "recovered law has total mass {total}, off from 1 beyond the 1e-3 grid budget"
        )));
    }
    // renormalize the grid-limited recovery so the law invariant holds exactly
    let scale = 1.0 / total;
    for a in &mut atoms {
        a.mass *= scale;
    }
    for n in &mut nodes {
        n.1 *= scale;
    }

    let pieces = if nodes.iter().any(|n| n.1 > 0.0) {
        vec![DensityPiece::new(nodes)?]
    } else {
        vec![]
    };
    TargetLaw::with_declared_support(
        atoms,
        pieces,
        Some(speed.interval()),
        Some(Discretization {
            tail_epsilon: (0.0, 0.0),
            source: format!(
                "to_law(grid {} points, mass defect {:.3e})",
                sol.grid.len(),
                total - 1.0
            ),
        }),
    )
}
