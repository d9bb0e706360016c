//! Target laws μ: probability measures made of atoms and piecewise-linear
//! density pieces on a finite interval.
//!
//! With a piecewise-linear density the transforms
//!
//! ```text
//! C(x) = ∫ (y − x)+ μ(dy)      P(x) = ∫ (x − y)+ μ(dy)      U = C + P
//! ```
//!
//! are piecewise cubic polynomials with slope kinks at the atoms, so they are
//! stored and evaluated in closed form. Everything downstream (the kernel
//! average `V`, the constant `κ₀`, speed-measure denominators) is then exact
//! within the representation; the only approximation ever made is the initial
//! sampling of an analytic density onto a node grid.

use std::sync::Arc;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const MASS_TOL: f64 = 1e-12;

/// Point mass of a target law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub position: f64,
    pub mass: f64,
}

/// One density piece: nodes `(x, f(x))` interpolated linearly in between.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityPiece {
    nodes: Vec<(f64, f64)>,
}

impl DensityPiece {
    pub fn new(nodes: Vec<(f64, f64)>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidLaw("density piece needs at least two nodes".into()));
        }
        for w in nodes.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidLaw(format!(
                    "density nodes not strictly increasing at x = {}",
                    w[1].0
                )));
            }
        }
        for &(x, f) in &nodes {
            if !x.is_finite() || !f.is_finite() || f < 0.0 {
                return Err(Error::InvalidLaw(format!(
                    "density node ({x}, {f}) is not finite and nonnegative"
                )));
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    pub fn lo(&self) -> f64 {
        self.nodes[0].0
    }

    pub fn hi(&self) -> f64 {
        self.nodes[self.nodes.len() - 1].0
    }
}

/// How a law obtained by sampling an analytic density remembers its origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    /// Mass clipped off each tail before renormalization.
    pub tail_epsilon: (f64, f64),
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PotentialKind {
    Call,
    Put,
    Potential,
}

/// Exact piecewise-cubic representation of C, P or U, with the slope kinks
/// contributed by atoms.
#[derive(Debug, Clone)]
pub struct PotentialProfile {
    kind: PotentialKind,
    breaks: Vec<f64>,
    /// Per segment: cubic coefficients `c0 + c1 t + c2 t² + c3 t³`. Put and
    /// potential profiles anchor at the left breakpoint (t = x − breaks[i]);
    /// the call profile anchors at the right one (t = x − breaks[i+1]), so
    /// its exponentially small values near b come out of locally small
    /// positive sums instead of catastrophic cancellations.
    coeffs: Vec<[f64; 4]>,
    right_anchored: bool,
    /// Atom positions and masses (slope jumps of P, and of −C).
    kinks: Vec<(f64, f64)>,
    support: (f64, f64),
    mean: f64,
}

impl PotentialProfile {
    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    pub fn kinks(&self) -> &[(f64, f64)] {
        &self.kinks
    }

    fn segment_index(&self, x: f64) -> usize {
        let n = self.breaks.len();
        let idx = self.breaks.partition_point(|&b| b <= x);
        idx.clamp(1, n - 1) - 1
    }

    /// Value on the support; the caller is responsible for the domain check.
    pub fn value(&self, x: f64) -> f64 {
        if self.coeffs.is_empty() {
            // single-point support: all payoffs vanish at the point itself
            return 0.0;
        }
        let i = self.segment_index(x);
        let anchor = if self.right_anchored { self.breaks[i + 1] } else { self.breaks[i] };
        let t = x - anchor;
        let c = self.coeffs[i];
        c[0] + t * (c[1] + t * (c[2] + t * c[3]))
    }

    /// Natural extension beyond the support: `C(x) = x̄ − x` below, `0` above,
    /// and symmetrically for P; `U = C + P` everywhere.
    pub fn value_extended(&self, x: f64) -> f64 {
        let (a, b) = self.support;
        if x >= a && x <= b {
            return self.value(x);
        }
        match self.kind {
            PotentialKind::Call => {
                if x < a {
                    self.mean - x
                } else {
                    0.0
                }
            }
            PotentialKind::Put => {
                if x < a {
                    0.0
                } else {
                    x - self.mean
                }
            }
            PotentialKind::Potential => (x - self.mean).abs().max((self.mean - x).abs()),
        }
    }

    fn derivative_in_segment(&self, i: usize, x: f64) -> f64 {
        if self.coeffs.is_empty() {
            return 0.0;
        }
        let anchor = if self.right_anchored { self.breaks[i + 1] } else { self.breaks[i] };
        let t = x - anchor;
        let c = self.coeffs[i];
        c[1] + t * (2.0 * c[2] + t * 3.0 * c[3])
    }

    /// Right derivative (for P this is the mass at or below `x`).
    pub fn derivative_right(&self, x: f64) -> f64 {
        self.derivative_in_segment(self.segment_index(x), x)
    }

    /// Left derivative (for P this is the mass strictly below `x`).
    pub fn derivative_left(&self, x: f64) -> f64 {
        let i = self.segment_index(x);
        if x <= self.breaks[i] && i > 0 {
            self.derivative_in_segment(i - 1, x)
        } else {
            self.derivative_in_segment(i, x)
        }
    }
}

/// A probability measure with atoms and piecewise-linear density pieces,
/// carrying its exact call/put profiles.
#[derive(Debug, Clone)]
pub struct TargetLaw {
    atoms: Vec<Atom>,
    pieces: Vec<DensityPiece>,
    support: (f64, f64),
    declared_support: (f64, f64),
    discretization: Option<Discretization>,
    mean: f64,
    call: Arc<PotentialProfile>,
    put: Arc<PotentialProfile>,
    potential: Arc<PotentialProfile>,
}

/// Kahan-compensated accumulator for the construction sums.
#[derive(Default, Clone, Copy)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum
    }
}

impl TargetLaw {
    pub fn new(atoms: Vec<Atom>, pieces: Vec<DensityPiece>) -> Result<Self> {
        Self::with_declared_support(atoms, pieces, None, None)
    }

    /// Full constructor; `declared` records an originally infinite support of
    /// a truncated ingest.
    pub fn with_declared_support(
        mut atoms: Vec<Atom>,
        mut pieces: Vec<DensityPiece>,
        declared: Option<(f64, f64)>,
        discretization: Option<Discretization>,
    ) -> Result<Self> {
        if atoms.is_empty() && pieces.is_empty() {
            return Err(Error::InvalidLaw("measure has no mass".into()));
        }
        atoms.sort_by(|a, b| a.position.total_cmp(&b.position));
        pieces.sort_by(|a, b| a.lo().total_cmp(&b.lo()));
        for a in &atoms {
            if !a.position.is_finite() || !(a.mass > 0.0) || !a.mass.is_finite() {
                return Err(Error::InvalidLaw(format!(
                    "atom ({}, {}) is not finite with positive mass",
                    a.position, a.mass
                )));
            }
        }
        for w in atoms.windows(2) {
            if w[0].position == w[1].position {
                return Err(Error::InvalidLaw(format!(
                    "duplicate atom at {}",
                    w[0].position
                )));
            }
        }
        for w in pieces.windows(2) {
            if w[1].lo() < w[0].hi() {
                return Err(Error::InvalidLaw(format!(
                    "density pieces overlap near x = {}",
                    w[1].lo()
                )));
            }
        }

        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in &atoms {
            lo = lo.min(a.position);
            hi = hi.max(a.position);
        }
        for p in &pieces {
            lo = lo.min(p.lo());
            hi = hi.max(p.hi());
        }
        let support = (lo, hi);
        let declared_support = declared.unwrap_or(support);

        let (call, put, potential, mean, total) = build_profiles(&atoms, &pieces, support);
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidLaw(format!(
                "total mass {total} differs from 1 by more than {MASS_TOL:e}"
            )));
        }

        Ok(Self {
            atoms,
            pieces,
            support,
            declared_support,
            discretization,
            mean,
            call: Arc::new(call),
            put: Arc::new(put),
            potential: Arc::new(potential),
        })
    }

    /// Samples an analytic density onto `grid`, clips the declared tails and
    /// renormalizes to unit mass. `tail_epsilon` is whatever mass the caller
    /// left outside the grid.
    pub fn from_density_fn(
        density: impl Fn(f64) -> f64,
        declared: (f64, f64),
        grid: &[f64],
        tail_epsilon: (f64, f64),
        source: &str,
    ) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::InvalidLaw("sampling grid needs at least two points".into()));
        }
        let mut nodes: Vec<(f64, f64)> = grid.iter().map(|&x| (x, density(x).max(0.0))).collect();
        // two rescale passes pin the trapezoid total to 1 up to rounding
        for _ in 0..2 {
            let mut total = Kahan::default();
            for w in nodes.windows(2) {
                total.add(0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0));
            }
            let scale = 1.0 / total.value();
            for n in &mut nodes {
                n.1 *= scale;
            }
        }
        Self::with_declared_support(
            Vec::new(),
            vec![DensityPiece::new(nodes)?],
            Some(declared),
            Some(Discretization {
                tail_epsilon,
                source: source.to_string(),
            }),
        )
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn pieces(&self) -> &[DensityPiece] {
        &self.pieces
    }

    /// Effective (finite) support `[a, b]`.
    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    /// Declared support; infinite endpoints survive truncation here.
    pub fn declared_support(&self) -> (f64, f64) {
        self.declared_support
    }

    pub fn discretization(&self) -> Option<&Discretization> {
        self.discretization.as_ref()
    }

    /// True for laws sampled from an analytic density; equality tests
    /// downstream then use the looser 1e-9 tolerance.
    pub fn is_numeric(&self) -> bool {
        self.discretization.is_some()
    }

    /// x̄_μ = ∫ y μ(dy), exact for the atom + piecewise-linear model.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    fn check_domain(&self, what: &'static str, x: f64) -> Result<()> {
        let (a, b) = self.support;
        if x < a || x > b || !x.is_finite() {
            return Err(Error::Domain { what, value: x, lo: a, hi: b });
        }
        Ok(())
    }

    fn check_x0(&self, x0: f64) -> Result<()> {
        let (a, b) = self.support;
        if !(x0 > a && x0 < b) {
            return Err(Error::Domain { what: "x0", value: x0, lo: a, hi: b });
        }
        Ok(())
    }

    pub fn call_price(&self, x: f64) -> Result<f64> {
        self.check_domain("x", x)?;
        Ok(self.call.value(x))
    }

    pub fn put_price(&self, x: f64) -> Result<f64> {
        self.check_domain("x", x)?;
        Ok(self.put.value(x))
    }

    /// U(x) = ∫ |x − y| μ(dy).
    pub fn potential(&self, x: f64) -> Result<f64> {
        self.check_domain("x", x)?;
        Ok(self.potential.value(x))
    }

    pub fn call_profile(&self) -> &PotentialProfile {
        &self.call
    }

    pub fn put_profile(&self) -> &PotentialProfile {
        &self.put
    }

    pub fn potential_profile(&self) -> &PotentialProfile {
        &self.potential
    }

    /// Kernel average `V(x) = ∫ E_y[L^x until hitting x0] μ(dy)`, evaluated
    /// on both closed forms and cross-checked:
    /// `2(P(x0) − P(x))` below x0, `2(C(x0) − C(x))` above, which must agree
    /// with `U(x0) − U(x) + |x0 − x|`.
    ///
    /// Defined for every real `x` (constant beyond the support).
    pub fn v_kernel(&self, x0: f64, x: f64) -> Result<f64> {
        self.check_x0(x0)?;
        let v = if x <= x0 {
            2.0 * (self.put.value_extended(x0) - self.put.value_extended(x))
        } else {
            2.0 * (self.call.value_extended(x0) - self.call.value_extended(x))
        };
        let u_route = self.potential.value_extended(x0) - self.potential.value_extended(x)
            + (x0 - x).abs();
        // the U route subtracts values of size O(|x|); scale the rounding
        // budget accordingly
        let scale = 1.0 + x.abs() + x0.abs() + v.abs();
        assert!(
            (v - u_route).abs() <= 1e-12 * scale,
            "kernel-average routes disagree at x = {x}: {v} vs {u_route}"
        );
        Ok(v)
    }

    /// κ₀ = max{2C(x0), 2P(x0)} = sup_x V(x); the sup is re-checked on a
    /// refinement of the breakpoint grid.
    pub fn kappa0(&self, x0: f64) -> Result<f64> {
        self.check_x0(x0)?;
        let k = (2.0 * self.call.value(x0)).max(2.0 * self.put.value(x0));
        let mut sup = f64::NEG_INFINITY;
        let breaks = self.call.breakpoints();
        for w in breaks.windows(2) {
            for j in 0..8 {
                let x = w[0] + (w[1] - w[0]) * j as f64 / 8.0;
                sup = sup.max(self.v_kernel(x0, x)?);
            }
        }
        sup = sup.max(self.v_kernel(x0, breaks[breaks.len() - 1])?);
        assert!(
            (sup - k).abs() <= 1e-10 * (1.0 + k.abs()),
            "grid sup of V ({sup}) disagrees with max{{2C, 2P}} ({k})"
        );
        Ok(k)
    }

    /// Atom mass exactly at `x` (0 when there is none).
    pub fn atom_mass_at(&self, x: f64) -> f64 {
        let scale = 1.0 + x.abs();
        self.atoms
            .iter()
            .find(|a| (a.position - x).abs() <= 1e-12 * scale)
            .map_or(0.0, |a| a.mass)
    }

    /// Density value at `x` (piecewise-linear interpolation; 0 off-piece).
    pub fn density(&self, x: f64) -> f64 {
        for p in &self.pieces {
            if x < p.lo() || x > p.hi() {
                continue;
            }
            let nodes = p.nodes();
            let i = nodes.partition_point(|n| n.0 <= x).clamp(1, nodes.len() - 1) - 1;
            let (x0, f0) = nodes[i];
            let (x1, f1) = nodes[i + 1];
            return f0 + (f1 - f0) * (x - x0) / (x1 - x0);
        }
        0.0
    }

    /// F(x) = μ((−∞, x]); the right derivative of the exact P profile.
    pub fn cdf(&self, x: f64) -> f64 {
        let (a, b) = self.support;
        if x < a {
            return 0.0;
        }
        if x >= b {
            return 1.0;
        }
        self.put.derivative_right(x).clamp(0.0, 1.0)
    }

    /// F(x−) = μ((−∞, x)).
    pub fn cdf_left(&self, x: f64) -> f64 {
        let (a, b) = self.support;
        if x <= a {
            return 0.0;
        }
        if x > b {
            return 1.0;
        }
        self.put.derivative_left(x).clamp(0.0, 1.0)
    }

    /// Generalized inverse CDF: smallest `x` with `F(x) ≥ q`.
    pub fn quantile(&self, q: f64) -> f64 {
        let (a, b) = self.support;
        if q <= 0.0 {
            return a;
        }
        if q >= 1.0 {
            return b;
        }
        let breaks = self.put.breakpoints();
        // first breakpoint with F(break) >= q
        let mut lo = 0usize;
        let mut hi = breaks.len() - 1;
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.cdf(breaks[mid]) >= q {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let xr = breaks[lo];
        if self.cdf_left(xr) <= q {
            // the jump (atom) or the point itself covers q
            if self.atom_mass_at(xr) > 0.0 || self.cdf_left(xr) == q {
                return xr;
            }
        }
        // q is reached inside the previous segment: invert the quadratic CDF
        let xl = breaks[lo - 1];
        let f_l = self.cdf(xl);
        let d_l = self.density(xl);
        let slope = (self.density(xr) - d_l) / (xr - xl);
        // F(xl + t) = f_l + d_l t + slope t²/2 = q
        let c = f_l - q;
        let t = solve_increasing_quadratic(0.5 * slope, d_l, c, xr - xl);
        (xl + t).clamp(xl, xr)
    }

    /// Inverse-CDF draw from a seeded stream.
    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let u = ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
        self.quantile(u)
    }

    /// Total mass on `[lo, hi]` (inclusive), exact.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        if hi < lo {
            return 0.0;
        }
        (self.cdf(hi) - self.cdf_left(lo)).clamp(0.0, 1.0)
    }

    pub fn to_spec(&self) -> LawSpec {
        let enc = |v: f64| if v.is_finite() { Some(v) } else { None };
        LawSpec {
            schema_version: 1,
            preset: None,
            support: [enc(self.declared_support.0), enc(self.declared_support.1)],
            atoms: self.atoms.iter().map(|a| [a.position, a.mass]).collect(),
            density: self
                .pieces
                .iter()
                .map(|p| DensityPieceSpec {
                    interval: [p.lo(), p.hi()],
                    nodes: p.nodes().iter().map(|&(x, f)| [x, f]).collect(),
                })
                .collect(),
            effective_support: Some([self.support.0, self.support.1]),
            discretization: self.discretization.clone(),
        }
    }

    /// Builds a law from a parsed spec body (presets are resolved upstream).
    pub fn from_spec(spec: &LawSpec) -> Result<Self> {
        if spec.schema_version != 1 {
            return Err(Error::Config(format!(
                "unsupported schema_version {}",
                spec.schema_version
            )));
        }
        let declared = (
            spec.support[0].unwrap_or(f64::NEG_INFINITY),
            spec.support[1].unwrap_or(f64::INFINITY),
        );
        if !declared.0.is_finite() || !declared.1.is_finite() {
            // nodes on an infinite interval cannot integrate: reject unless a
            // preset resolved this upstream
            if !spec.atoms.is_empty() || !spec.density.is_empty() {
                return Err(Error::InvalidLaw(
                    "explicit atoms/density on an infinite support do not integrate; \
                     use a preset or truncate"
                        .into(),
                ));
            }
        }
        let atoms = spec
            .atoms
            .iter()
            .map(|&[x, m]| Atom { position: x, mass: m })
            .collect();
        let mut pieces = Vec::new();
        for p in &spec.density {
            let piece = DensityPiece::new(p.nodes.iter().map(|&[x, f]| (x, f)).collect())?;
            if (piece.lo() - p.interval[0]).abs() > 1e-9 || (piece.hi() - p.interval[1]).abs() > 1e-9
            {
                return Err(Error::InvalidLaw(format!(
                    "piece interval [{}, {}] does not match its node span [{}, {}]",
                    p.interval[0],
                    p.interval[1],
                    piece.lo(),
                    piece.hi()
                )));
            }
            pieces.push(piece);
        }
        Self::with_declared_support(atoms, pieces, Some(declared), spec.discretization.clone())
    }
}

/// Smallest t ≥ 0 with `a t² + b t + c = 0` on `[0, t_max]` for a CDF segment
/// (increasing, so b ≥ 0); falls back to bisection if the closed form is
/// ill-conditioned.
fn solve_increasing_quadratic(a: f64, b: f64, c: f64, t_max: f64) -> f64 {
    let g = |t: f64| a * t * t + b * t + c;
    if a.abs() < 1e-300 {
        if b.abs() < 1e-300 {
            return 0.0;
        }
        return (-c / b).clamp(0.0, t_max);
    }
    let disc = b * b - 4.0 * a * c;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        // citardauq form is stable when b > 0
        let t = if b >= 0.0 { -2.0 * c / (b + sq) } else { (-b + sq) / (2.0 * a) };
        if t.is_finite() && (0.0..=t_max).contains(&t) && g(t).abs() <= 1e-9 {
            return t;
        }
    }
    let (mut lo, mut hi) = (0.0, t_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Builds the exact C/P/U profiles and returns them with the mean and the
/// total mass.
fn build_profiles(
    atoms: &[Atom],
    pieces: &[DensityPiece],
    support: (f64, f64),
) -> (PotentialProfile, PotentialProfile, PotentialProfile, f64, f64) {
    let (a, b) = support;
    let mut breaks: Vec<f64> = vec![a, b];
    breaks.extend(atoms.iter().map(|at| at.position));
    for p in pieces {
        breaks.extend(p.nodes().iter().map(|n| n.0));
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let n = breaks.len();

    // density value and slope on each segment [breaks[i], breaks[i+1]]
    let mut seg_f = vec![0.0; n - 1];
    let mut seg_s = vec![0.0; n - 1];
    for p in pieces {
        let nodes = p.nodes();
        for w in nodes.windows(2) {
            let i0 = breaks.partition_point(|&x| x < w[0].0);
            let i1 = breaks.partition_point(|&x| x < w[1].0);
            for i in i0..i1 {
                let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                seg_f[i] = w[0].1 + slope * (breaks[i] - w[0].0);
                seg_s[i] = slope;
            }
        }
    }

    // prefix sums at breakpoints: atom mass/moment ≤ break, density mass/moment up to break
    let mut am = vec![0.0; n];
    let mut am1 = vec![0.0; n];
    {
        let mut k = Kahan::default();
        let mut k1 = Kahan::default();
        let mut ai = 0usize;
        for (i, &bx) in breaks.iter().enumerate() {
            while ai < atoms.len() && atoms[ai].position <= bx {
                k.add(atoms[ai].mass);
                k1.add(atoms[ai].mass * atoms[ai].position);
                ai += 1;
            }
            am[i] = k.value();
            am1[i] = k1.value();
        }
    }
    let mut dm = vec![0.0; n];
    let mut dm1 = vec![0.0; n];
    {
        let mut k = Kahan::default();
        let mut k1 = Kahan::default();
        for i in 0..n - 1 {
            dm[i] = k.value();
            dm1[i] = k1.value();
            let h = breaks[i + 1] - breaks[i];
            let (f, s) = (seg_f[i], seg_s[i]);
            k.add(h * (f + 0.5 * s * h));
            // ∫ (breaks[i] + t) (f + s t) dt over [0, h]
            k1.add(breaks[i] * h * (f + 0.5 * s * h) + h * h * (0.5 * f + s * h / 3.0));
        }
        dm[n - 1] = k.value();
        dm1[n - 1] = k1.value();
    }
    let total_mass = am[n - 1] + dm[n - 1];
    let total_m1 = am1[n - 1] + dm1[n - 1];
    let mean = total_m1 / total_mass;

    // put (and the potential) anchored at the left breakpoint
    let mut put_c = Vec::with_capacity(n - 1);
    let mut pot_c = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let bx = breaks[i];
        let mass_le = am[i] + dm[i];
        let m1_le = am1[i] + dm1[i];
        let mass_gt = total_mass - mass_le;
        let m1_gt = total_m1 - m1_le;
        let p0 = bx * mass_le - m1_le;
        let c0 = m1_gt - bx * mass_gt;
        let (f, s) = (seg_f[i], seg_s[i]);
        let p = [p0, mass_le, 0.5 * f, s / 6.0];
        put_c.push(p);
        pot_c.push([p[0] + c0, p[1] - mass_gt, 2.0 * p[2], 2.0 * p[3]]);
    }

    // call anchored at the right breakpoint, accumulated right to left from
    // strictly positive increments: with t = x − breaks[i+1] ≤ 0,
    // C(x) = C(r) − G·t + (ρ(r)/2)t² + (s/6)t³ where G is the mass above
    let mut call_c = vec![[0.0; 4]; n - 1];
    {
        let mut mass_above = Kahan::default();
        let mut value = Kahan::default();
        let mut ai = atoms.len();
        for i in (0..n - 1).rev() {
            let r = breaks[i + 1];
            let h = r - breaks[i];
            let (f, s) = (seg_f[i], seg_s[i]);
            // atoms exactly at r join the mass seen from inside segment i
            while ai > 0 && atoms[ai - 1].position >= r {
                mass_above.add(atoms[ai - 1].mass);
                ai -= 1;
            }
            let g = mass_above.value();
            let rho_r = f + s * h;
            call_c[i] = [value.value(), -g, 0.5 * rho_r, s / 6.0];
            // value and mass at the segment's left end
            value.add(g * h + 0.5 * rho_r * h * h - s * h * h * h / 6.0);
            mass_above.add(h * (f + 0.5 * s * h));
        }
    }

    let kinks: Vec<(f64, f64)> = atoms.iter().map(|at| (at.position, at.mass)).collect();
    let mk = |kind, coeffs: Vec<[f64; 4]>, right: bool| PotentialProfile {
        kind,
        breaks: breaks.clone(),
        coeffs,
        right_anchored: right,
        kinks: kinks.clone(),
        support,
        mean,
    };
    (
        mk(PotentialKind::Call, call_c, true),
        mk(PotentialKind::Put, put_c, false),
        mk(PotentialKind::Potential, pot_c, false),
        mean,
        total_mass,
    )
}

/// On-disk law description.
///
/// `support` entries may be `null` for an infinite endpoint (presets only);
/// `preset` names a bundled law and excludes the explicit body.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LawSpec {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub support: [Option<f64>; 2],
    #[serde(default)]
    pub atoms: Vec<[f64; 2]>,
    #[serde(default)]
    pub density: Vec<DensityPieceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_support: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discretization: Option<Discretization>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityPieceSpec {
    pub interval: [f64; 2],
    pub nodes: Vec<[f64; 2]>,
}
