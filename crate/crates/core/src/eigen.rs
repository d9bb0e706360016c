//! Eigenfunctions of the generalized second-order equation
//! `½ d²f/(dm dx) = λ f`.
//!
//! The increasing solution `φ` is marched from the left endpoint, the
//! decreasing solution `ϕ` from the right, both normalized to 1 at `x0`.
//! Between atoms the equation reads `f'' = q(x) f` with `q = 2λ·density`;
//! each grid cell is crossed with a fourth-order Magnus step whose transfer
//! matrix has determinant exactly 1, so the Wronskian `W = φ'ϕ − ϕ'φ` is
//! conserved to rounding across the whole grid. Atoms of `m` enter as
//! derivative kinks `f'(x+) − f'(x−) = 2λ f(x) m({x})`, which also leave the
//! Wronskian unchanged.
//!
//! `ode_residual` is the universal oracle: it checks the integrated Volterra
//! form `f(x) = f(c) + f'(c)(x−c) + 2λ ∫_c^x (x−y) f(y) m(dy)` by
//! accumulating the moments `∫ f dm` and `∫ y f dm` cell by cell.

use crate::quadrature::{integrate, GL3};
use crate::speed::{AtomMass, SpeedMeasure};
use crate::{Error, Result};

const SQRT3_6: f64 = 0.288_675_134_594_812_87;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// f → 0 at the endpoint.
    Absorbing,
    /// f' → 0 at the endpoint (sticky atoms add their kink on top).
    Reflecting,
    /// Absorbing where the boundary tail of `m` diverges (or an infinite
    /// atom sits), reflecting otherwise.
    FromClassification,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Residual target for the integrated-form self check.
    pub residual_target: f64,
    pub max_refinements: u32,
    /// Largest cell; defaults to (hi − lo)/2000.
    pub max_cell: Option<f64>,
    /// Split a cell when q varies by more than this fraction across it.
    pub rel_q_variation: f64,
    /// Split a cell when h·√q exceeds this phase.
    pub max_phase: f64,
    /// Never split below this cell size.
    pub h_floor: f64,
    /// Explicit truncation of the solve domain (singular or infinite ends).
    pub truncate: Option<(f64, f64)>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            residual_target: 1e-8,
            max_refinements: 3,
            max_cell: None,
            rel_q_variation: 0.01,
            max_phase: 0.5,
            h_floor: 1e-6,
            truncate: None,
        }
    }
}

/// Grid representation of the λ-eigenfunction pair.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    pub grid: Vec<f64>,
    pub varphi: Vec<f64>,
    pub phi: Vec<f64>,
    pub dvarphi_left: Vec<f64>,
    pub dvarphi_right: Vec<f64>,
    pub dphi_left: Vec<f64>,
    pub dphi_right: Vec<f64>,
    pub wronskian: f64,
    /// Max relative deviation of the pointwise Wronskian across the grid.
    pub wronskian_spread: f64,
    pub x0: f64,
    pub x0_index: usize,
    pub lambda: f64,
    pub left_absorbing: bool,
    pub right_absorbing: bool,
    pub residual_varphi: f64,
    pub residual_phi: f64,
    speed: SpeedMeasure,
    /// Node indices (atoms and ends) delimiting smooth stretches;
    /// interpolation stencils never cross them.
    segments: Vec<usize>,
}

impl EigenSolution {
    pub fn speed(&self) -> &SpeedMeasure {
        &self.speed
    }

    pub fn value_varphi(&self, x: f64) -> Result<f64> {
        self.interp(&self.varphi, x)
    }

    pub fn value_phi(&self, x: f64) -> Result<f64> {
        self.interp(&self.phi, x)
    }

    fn interp(&self, values: &[f64], x: f64) -> Result<f64> {
        let n = self.grid.len();
        let (lo, hi) = (self.grid[0], self.grid[n - 1]);
        if x < lo - 1e-12 * (1.0 + lo.abs()) || x > hi + 1e-12 * (1.0 + hi.abs()) {
            return Err(Error::Domain { what: "x", value: x, lo, hi });
        }
        let x = x.clamp(lo, hi);
        let cell = self.grid.partition_point(|&g| g <= x).clamp(1, n - 1) - 1;
        for idx in [cell, cell + 1] {
            if (self.grid[idx] - x).abs() <= 1e-13 * (1.0 + x.abs()) {
                return Ok(values[idx]);
            }
        }
        Ok(interp_segmented(&self.grid, values, &self.segments, cell, x))
    }

    /// Sampled view used by the residual oracle.
    pub fn grid_fn_varphi(&self) -> GridFn<'_> {
        GridFn {
            grid: &self.grid,
            values: &self.varphi,
            anchor_index: self.x0_index,
            anchor_slope_left: self.dvarphi_left[self.x0_index],
            anchor_slope_right: self.dvarphi_right[self.x0_index],
        }
    }

    pub fn grid_fn_phi(&self) -> GridFn<'_> {
        GridFn {
            grid: &self.grid,
            values: &self.phi,
            anchor_index: self.x0_index,
            anchor_slope_left: self.dphi_left[self.x0_index],
            anchor_slope_right: self.dphi_right[self.x0_index],
        }
    }
}

/// Plain Lagrange interpolation on up to 4 points.
fn lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..xs.len() {
        let mut l = ys[i];
        for j in 0..xs.len() {
            if i != j {
                l *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc += l;
    }
    acc
}

/// Cubic Lagrange around `cell`, with the stencil clamped to the smooth
/// segment containing it.
fn interp_segmented(grid: &[f64], values: &[f64], segments: &[usize], cell: usize, x: f64) -> f64 {
    let seg = segments.partition_point(|&s| s <= cell).max(1) - 1;
    let (s_lo, s_hi) = (segments[seg], segments[seg + 1]);
    let mut first = cell.saturating_sub(1).max(s_lo);
    let last = (first + 3).min(s_hi);
    first = last.saturating_sub(3).max(s_lo);
    lagrange(&grid[first..=last], &values[first..=last], x)
}

/// One Magnus step across `[s, s+h]` (h may be negative) for `f'' = q f`,
/// sampling q at the two Gauss points. The transfer matrix has det 1.
fn propagate(f: f64, d: f64, q1: f64, q2: f64, h: f64) -> (f64, f64) {
    let qm = 0.5 * (q1 + q2);
    let dd = 3f64.sqrt() / 12.0 * h * h * (q1 - q2);
    let theta2 = dd * dd + h * h * qm;
    let (ch, shq) = if theta2 > 1e-8 {
        let th = theta2.sqrt();
        (th.cosh(), th.sinh() / th)
    } else if theta2 < -1e-8 {
        let th = (-theta2).sqrt();
        (th.cos(), th.sin() / th)
    } else {
        (
            1.0 + theta2 * (0.5 + theta2 / 24.0),
            1.0 + theta2 * (1.0 / 6.0 + theta2 / 120.0),
        )
    };
    let nf = ch * f + shq * (dd * f + h * d);
    let nd = shq * (h * qm * f - dd * d) + ch * d;
    (nf, nd)
}

/// Pulls singular (or infinite-density) endpoints inward until the density
/// is marchable; endpoints with infinite atoms stay put.
fn auto_truncate(measure: &SpeedMeasure) -> (f64, f64) {
    let (lo, hi) = measure.domain();
    let w = hi - lo;
    let trunc_side = |endpoint: f64, inward: f64| -> f64 {
        if measure.atom_at(endpoint).is_some_and(|a| a.mass.is_infinite()) {
            return endpoint;
        }
        let d = measure.density(endpoint + inward * w * 1e-9);
        if d.is_finite() && d < 1e14 {
            return endpoint;
        }
        let mut eps = w * 1e-9;
        while eps < 0.4 * w {
            let d = measure.density(endpoint + inward * eps);
            if d.is_finite() && d < 1e10 {
                return endpoint + inward * eps;
            }
            eps *= 2.0;
        }
        endpoint + inward * 0.4 * w
    };
    (trunc_side(lo, 1.0), trunc_side(hi, -1.0))
}

#[allow(clippy::too_many_arguments)]
fn build_grid(
    measure: &SpeedMeasure,
    lo: f64,
    hi: f64,
    x0: f64,
    lambda: f64,
    max_cell: f64,
    rel_var: f64,
    max_phase: f64,
    h_floor: f64,
) -> Vec<f64> {
    let mut base: Vec<f64> = vec![lo, hi, x0];
    for a in measure.atoms() {
        if a.position > lo && a.position < hi {
            base.push(a.position);
        }
    }
    for p in measure.pieces() {
        for &edge in &[p.lo, p.hi] {
            if edge > lo && edge < hi {
                base.push(edge);
            }
        }
        if let crate::speed::DensityForm::Pwl(nodes) = &p.form {
            base.extend(nodes.iter().map(|n| n.0).filter(|&x| x > lo && x < hi));
        }
    }
    base.sort_by(f64::total_cmp);
    base.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + a.abs()));

    let q = |x: f64| 2.0 * lambda * measure.density(x);
    let mut grid = Vec::with_capacity(4096);
    for w in base.windows(2) {
        grid.push(w[0]);
        let mut stack = vec![(w[0], w[1])];
        let mut cells = Vec::new();
        while let Some((a, b)) = stack.pop() {
            let h = b - a;
            let g1 = a + h * (0.5 - SQRT3_6);
            let g2 = a + h * (0.5 + SQRT3_6);
            let (q1, q2) = (q(g1), q(g2));
            let qm = 0.5 * (q1 + q2);
            let split = h > h_floor
                && (h > max_cell
                    || h * qm.max(0.0).sqrt() > max_phase
                    || (q1 - q2).abs() > rel_var * (qm + 1e-300));
            if split {
                let mid = 0.5 * (a + b);
                stack.push((mid, b));
                stack.push((a, mid));
            } else {
                cells.push(b);
            }
        }
        cells.sort_by(f64::total_cmp);
        grid.extend(cells);
    }
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + a.abs()));
    grid
}

struct March {
    values: Vec<f64>,
    dleft: Vec<f64>,
    dright: Vec<f64>,
    /// log-scale offsets accumulated by overflow rescaling
    logscale: Vec<f64>,
}

/// Marches the pair (f, f') across the grid: left→right for the increasing
/// solution, right→left for the decreasing one.
fn march(
    measure: &SpeedMeasure,
    grid: &[f64],
    lambda: f64,
    forward: bool,
    start_absorbing: bool,
) -> March {
    let n = grid.len();
    let mut values = vec![0.0; n];
    let mut dleft = vec![0.0; n];
    let mut dright = vec![0.0; n];
    let mut logscale = vec![0.0; n];

    let atom_mass =
        |x: f64| -> f64 { measure.atom_at(x).and_then(|a| a.mass.finite()).unwrap_or(0.0) };
    let q = |x: f64| 2.0 * lambda * measure.density(x);

    let start = if forward { 0 } else { n - 1 };
    let (mut f, mut d) = if start_absorbing {
        (0.0, if forward { 1.0 } else { -1.0 })
    } else {
        (1.0, 0.0)
    };
    let mut ls = 0.0;

    // at the start node the boundary-side derivative is the raw condition;
    // the inward side picks up the endpoint atom kink (absorbing starts
    // carry their infinite atom inside the condition itself)
    values[start] = f;
    logscale[start] = ls;
    let start_kink = if start_absorbing {
        0.0
    } else {
        2.0 * lambda * atom_mass(grid[start]) * f
    };
    if forward {
        dleft[start] = d;
        d += start_kink;
        dright[start] = d;
    } else {
        dright[start] = d;
        d -= start_kink;
        dleft[start] = d;
    }

    let steps: Vec<usize> = if forward {
        (1..n).collect()
    } else {
        (0..n - 1).rev().collect()
    };
    for k in steps {
        let from = if forward { grid[k - 1] } else { grid[k + 1] };
        let to = grid[k];
        let h = to - from;
        let g1 = from + h * (0.5 - SQRT3_6);
        let g2 = from + h * (0.5 + SQRT3_6);
        let (nf, nd) = propagate(f, d, q(g1), q(g2), h);
        f = nf;
        d = nd;
        // rescale before overflow; normalization at x0 cancels the factor
        let mag = f.abs().max(d.abs());
        if mag > 1e150 {
            f /= mag;
            d /= mag;
            ls += mag.ln();
        }
        values[k] = f;
        logscale[k] = ls;
        let at_far_end = if forward { k == n - 1 } else { k == 0 };
        let kink = 2.0 * lambda * atom_mass(grid[k]) * f;
        if forward {
            dleft[k] = d;
            d += kink;
            dright[k] = d;
        } else {
            dright[k] = d;
            d -= kink;
            dleft[k] = d;
        }
        let _ = at_far_end;
    }

    March { values, dleft, dright, logscale }
}

fn normalize(m: &mut March, x0_index: usize) -> Result<()> {
    let f0 = m.values[x0_index];
    let ls0 = m.logscale[x0_index];
    if !(f0 > 0.0) || !f0.is_finite() {
        return Err(Error::SolverDegenerate(format!(
            "eigenfunction vanishes at the normalization point (value {f0})"
        )));
    }
    let ln_f0 = f0.ln();
    for i in 0..m.values.len() {
        let rescale = (m.logscale[i] - ls0 - ln_f0).exp();
        m.values[i] *= rescale;
        m.dleft[i] *= rescale;
        m.dright[i] *= rescale;
    }
    Ok(())
}

/// Solves for the normalized eigenfunction pair on the (possibly truncated)
/// domain, refining the grid until the integrated-form residual target is
/// met.
pub fn solve(
    measure: &SpeedMeasure,
    x0: f64,
    lambda: f64,
    bc: (BoundaryCondition, BoundaryCondition),
    opts: &SolveOptions,
) -> Result<EigenSolution> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    let (lo, hi) = opts.truncate.unwrap_or_else(|| auto_truncate(measure));
    if !(x0 > lo && x0 < hi) {
        return Err(Error::Domain { what: "x0", value: x0, lo, hi });
    }

    let resolve = |c: BoundaryCondition, side: crate::speed::Side| -> bool {
        match c {
            BoundaryCondition::Absorbing => true,
            BoundaryCondition::Reflecting => false,
            BoundaryCondition::FromClassification => {
                crate::speed::boundary_tail_diverges(measure, side)
            }
        }
    };
    let left_absorbing = resolve(bc.0, crate::speed::Side::Left);
    let right_absorbing = resolve(bc.1, crate::speed::Side::Right);

    let mut max_cell = opts.max_cell.unwrap_or((hi - lo) / 2000.0);
    let mut rel_var = opts.rel_q_variation;
    let mut worst: Option<(f64, Vec<(f64, f64)>)> = None;
    let mut last_h = max_cell;

    for _ in 0..=opts.max_refinements {
        let grid = build_grid(
            measure, lo, hi, x0, lambda, max_cell, rel_var, opts.max_phase, opts.h_floor,
        );
        last_h = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        let x0_index = grid
            .iter()
            .position(|&g| (g - x0).abs() <= 1e-13 * (1.0 + x0.abs()))
            .ok_or_else(|| Error::SolverDegenerate("x0 missing from the grid".into()))?;

        let mut fwd = march(measure, &grid, lambda, true, left_absorbing);
        let mut bwd = march(measure, &grid, lambda, false, right_absorbing);
        normalize(&mut fwd, x0_index)?;
        normalize(&mut bwd, x0_index)?;

        let n = grid.len();
        let w_of = |i: usize, fwd: &March, bwd: &March| -> f64 {
            if i == n - 1 {
                fwd.dleft[i] * bwd.values[i] - bwd.dleft[i] * fwd.values[i]
            } else {
                fwd.dright[i] * bwd.values[i] - bwd.dright[i] * fwd.values[i]
            }
        };
        let w0 = w_of(x0_index, &fwd, &bwd);
        if !(w0 > 0.0) || !w0.is_finite() {
            return Err(Error::SolverDegenerate(format!(
                "Wronskian not positive (value {w0})"
            )));
        }
        let mut spread = 0.0f64;
        for i in 0..n {
            let representable = fwd.values[i].is_finite()
                && bwd.values[i].is_finite()
                && fwd.values[i].abs() > 1e-280
                && bwd.values[i].abs() > 1e-280
                && fwd.values[i].abs() < 1e280
                && bwd.values[i].abs() < 1e280;
            if !representable {
                continue;
            }
            let wi = w_of(i, &fwd, &bwd);
            if wi.is_finite() {
                spread = spread.max((wi - w0).abs() / w0.abs());
            }
        }

        // strict monotonicity where values have not underflowed
        for i in 0..n - 1 {
            let (a, b) = (fwd.values[i], fwd.values[i + 1]);
            if a > 1e-280 && b.is_finite() && b <= a * (1.0 - 1e-12) {
                return Err(Error::SolverDegenerate(format!(
                    "increasing eigenfunction not monotone near x = {}",
                    grid[i]
                )));
            }
            let (a, b) = (bwd.values[i + 1], bwd.values[i]);
            if a > 1e-280 && b.is_finite() && b <= a * (1.0 - 1e-12) {
                return Err(Error::SolverDegenerate(format!(
                    "decreasing eigenfunction not monotone near x = {}",
                    grid[i]
                )));
            }
        }

        let mut segments: Vec<usize> = vec![0];
        for (i, &g) in grid.iter().enumerate() {
            if i > 0 && i < n - 1 && measure.atom_at(g).is_some() {
                segments.push(i);
            }
        }
        segments.push(n - 1);

        let mut sol = EigenSolution {
            grid,
            varphi: fwd.values,
            phi: bwd.values,
            dvarphi_left: fwd.dleft,
            dvarphi_right: fwd.dright,
            dphi_left: bwd.dleft,
            dphi_right: bwd.dright,
            wronskian: w0,
            wronskian_spread: spread,
            x0,
            x0_index,
            lambda,
            left_absorbing,
            right_absorbing,
            residual_varphi: 0.0,
            residual_phi: 0.0,
            speed: measure.clone(),
            segments,
        };

        let (res_f, prof_f) = residual_core(
            &FSource::Sampled(&sol.grid_fn_varphi(), &sol.segments),
            &sol.grid,
            measure,
            lambda,
            true,
        );
        let (res_b, prof_b) = residual_core(
            &FSource::Sampled(&sol.grid_fn_phi(), &sol.segments),
            &sol.grid,
            measure,
            lambda,
            true,
        );
        let res = res_f.max(res_b);
        if res <= opts.residual_target {
            sol.residual_varphi = res_f;
            sol.residual_phi = res_b;
            return Ok(sol);
        }
        if worst.as_ref().is_none_or(|(r, _)| res < *r) {
            worst = Some((res, if res_f >= res_b { prof_f } else { prof_b }));
        }
        max_cell *= 0.5;
        rel_var *= 0.5;
    }

    let (residual, profile) = worst.unwrap_or((f64::NAN, Vec::new()));
    Err(Error::SolverNonConvergence {
        residual,
        target: opts.residual_target,
        step: last_h,
        profile,
    })
}

/// A sampled function on a grid with one-sided slopes at an anchor index.
#[derive(Debug, Clone)]
pub struct GridFn<'a> {
    pub grid: &'a [f64],
    pub values: &'a [f64],
    pub anchor_index: usize,
    pub anchor_slope_left: f64,
    pub anchor_slope_right: f64,
}

enum FSource<'a> {
    Sampled(&'a GridFn<'a>, &'a [usize]),
    Callable {
        f: &'a dyn Fn(f64) -> f64,
        anchor_index: usize,
        slope_left: f64,
        slope_right: f64,
    },
}

impl FSource<'_> {
    fn anchor_index(&self) -> usize {
        match self {
            FSource::Sampled(g, _) => g.anchor_index,
            FSource::Callable { anchor_index, .. } => *anchor_index,
        }
    }

    fn slopes(&self) -> (f64, f64) {
        match self {
            FSource::Sampled(g, _) => (g.anchor_slope_left, g.anchor_slope_right),
            FSource::Callable { slope_left, slope_right, .. } => (*slope_left, *slope_right),
        }
    }

    fn node_value(&self, grid: &[f64], i: usize) -> f64 {
        match self {
            FSource::Sampled(g, _) => g.values[i],
            FSource::Callable { f, .. } => f(grid[i]),
        }
    }

    /// Value between nodes: exact call for callables, segment-clamped cubic
    /// Lagrange for samples.
    fn value_in_cell(&self, grid: &[f64], cell: usize, x: f64) -> f64 {
        match self {
            FSource::Callable { f, .. } => f(x),
            FSource::Sampled(g, segments) => interp_segmented(grid, g.values, segments, cell, x),
        }
    }
}

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

/// Shared residual sweep; returns the max defect (absolute or locally
/// scaled) and a sparse (x, defect) profile for diagnostics.
fn residual_core(
    f: &FSource,
    grid: &[f64],
    measure: &SpeedMeasure,
    lambda: f64,
    scaled: bool,
) -> (f64, Vec<(f64, f64)>) {
    let n = grid.len();
    let anchor = f.anchor_index();
    let c = grid[anchor];
    let fc = f.node_value(grid, anchor);
    let (slope_l, slope_r) = f.slopes();

    let mut worst = 0.0f64;
    let mut profile = Vec::new();
    let mut sweep = |right: bool| {
        let slope = if right { slope_r } else { slope_l };
        let mut m0 = Kahan::default();
        let mut m1 = Kahan::default();
        let indices: Vec<usize> = if right {
            (anchor + 1..n).collect()
        } else {
            (0..anchor).rev().collect()
        };
        for j in indices {
            let (cell, lo, hi) = if right {
                (j - 1, grid[j - 1], grid[j])
            } else {
                (j, grid[j], grid[j + 1])
            };
            let dm0 = integrate(&GL3, lo, hi, |y| {
                f.value_in_cell(grid, cell, y) * measure.density(y)
            });
            let dm1 = integrate(&GL3, lo, hi, |y| {
                y * f.value_in_cell(grid, cell, y) * measure.density(y)
            });
            m0.add(dm0);
            m1.add(dm1);
            // atom at the inner edge of the freshly crossed cell
            let inner = if right { cell } else { j + 1 };
            if inner != anchor {
                if let Some(atom) = measure.atom_at(grid[inner]) {
                    if let AtomMass::Finite(mass) = atom.mass {
                        let fv = f.node_value(grid, inner);
                        m0.add(fv * mass);
                        m1.add(grid[inner] * fv * mass);
                    }
                }
            }
            let x = grid[j];
            let fx = f.node_value(grid, j);
            if !fx.is_finite() || fx.abs() > 1e100 {
                continue;
            }
            let linear = fc + slope * (x - c);
            // ∫_c^x (x−y) f dm flips orientation on the left sweep
            let signed = if right {
                x * m0.value() - m1.value()
            } else {
                m1.value() - x * m0.value()
            };
            let integral = 2.0 * lambda * signed;
            let r = (fx - linear - integral).abs();
            let denom = if scaled {
                1.0 + fx.abs() + linear.abs().max(integral.abs())
            } else {
                1.0
            };
            let r = r / denom;
            if r >= worst {
                worst = r;
                profile.push((x, r));
            } else if j % 97 == 0 {
                profile.push((x, r));
            }
            if profile.len() > 512 {
                profile.drain(..256);
            }
        }
    };
    sweep(true);
    sweep(false);
    (worst, profile)
}

/// Max over the grid of the integrated-form defect
/// `|f(x) − f(c) − f'(c)(x−c) − 2λ∫_c^x (x−y) f dm|`, anchored at the
/// sampled function's anchor node.
pub fn ode_residual(f: &GridFn, speed: &SpeedMeasure, lambda: f64) -> f64 {
    let segments = segments_of(f.grid, speed);
    residual_core(&FSource::Sampled(f, &segments), f.grid, speed, lambda, false).0
}

/// Same oracle for a closed-form function; `anchor_slopes` are the
/// one-sided derivatives at `grid[anchor_index]`.
pub fn ode_residual_fn(
    f: &dyn Fn(f64) -> f64,
    grid: &[f64],
    anchor_index: usize,
    anchor_slopes: (f64, f64),
    speed: &SpeedMeasure,
    lambda: f64,
) -> f64 {
    residual_core(
        &FSource::Callable {
            f,
            anchor_index,
            slope_left: anchor_slopes.0,
            slope_right: anchor_slopes.1,
        },
        grid,
        speed,
        lambda,
        false,
    )
    .0
}

fn segments_of(grid: &[f64], speed: &SpeedMeasure) -> Vec<usize> {
    let n = grid.len();
    let mut segments = vec![0];
    for (i, &g) in grid.iter().enumerate() {
        if i > 0 && i < n - 1 && speed.atom_at(g).is_some() {
            segments.push(i);
        }
    }
    segments.push(n - 1);
    segments
}

/// `E_x[e^{−λ H_y}]`: the increasing-eigenfunction ratio below, the
/// decreasing one above; always in (0, 1].
pub fn hitting_laplace(sol: &EigenSolution, x: f64, y: f64) -> Result<f64> {
    if x == y {
        return Ok(1.0);
    }
    let (num, den) = if x < y {
        (sol.value_varphi(x)?, sol.value_varphi(y)?)
    } else {
        (sol.value_phi(x)?, sol.value_phi(y)?)
    };
    if den <= 0.0 || !den.is_finite() {
        return Ok(0.0);
    }
    Ok((num / den).clamp(0.0, 1.0))
}

/// Speed measures of the family sharing the exponential-time law, built from
/// the shifted eigenfunctions `φ + δ` (below x0) and `ϕ + δ` (above):
/// densities scale by `f/(f+δ)` and atom masses likewise; for δ > 0 an
/// absorbing endpoint atom becomes the finite sticky mass `Δf'/(2λδ)`. The
/// most negative admissible shift, δ = −min(endpoint values), produces the
/// minimal diffusion.
pub fn shift_family(sol: &EigenSolution, delta: f64) -> Result<SpeedMeasure> {
    let n = sol.grid.len();
    let end_min = sol.varphi[0].min(sol.phi[n - 1]);
    if delta < -end_min - 1e-12 * (1.0 + end_min.abs()) {
        return Err(Error::Config(format!(
            "shift {delta} drives the eigenfunctions negative (min endpoint value {end_min})"
        )));
    }
    let lambda = sol.lambda;

    let mut atoms = Vec::new();
    for a in sol.speed.atoms() {
        let pos = a.position;
        if pos < sol.grid[0] - 1e-12 || pos > sol.grid[n - 1] + 1e-12 {
            continue;
        }
        match a.mass {
            AtomMass::Infinite => {
                if delta.abs() <= 1e-300 {
                    atoms.push(*a);
                } else {
                    // the shifted eigenfunction no longer vanishes at the
                    // endpoint: the derivative jump spreads over Δf'/(2λδ)
                    let jump = if (pos - sol.grid[0]).abs() <= (pos - sol.grid[n - 1]).abs() {
                        sol.dvarphi_right[0]
                    } else {
                        -sol.dphi_left[n - 1]
                    };
                    atoms.push(crate::speed::SpeedAtom {
                        position: pos,
                        mass: AtomMass::Finite(jump / (2.0 * lambda * delta)),
                    });
                }
            }
            AtomMass::Finite(m) => {
                let f = if pos <= sol.x0 {
                    sol.value_varphi(pos)?
                } else {
                    sol.value_phi(pos)?
                };
                let scaled = m * f / (f + delta);
                if scaled > 0.0 {
                    atoms.push(crate::speed::SpeedAtom {
                        position: pos,
                        mass: AtomMass::Finite(scaled),
                    });
                }
            }
        }
    }

    let sol_arc = std::sync::Arc::new(sol.clone());
    let mut pieces = Vec::new();
    for p in sol.speed.pieces() {
        let lo = p.lo.max(sol.grid[0]);
        let hi = p.hi.min(sol.grid[n - 1]);
        if hi <= lo {
            continue;
        }
        let base = p.clone();
        let sol_c = sol_arc.clone();
        let f = move |x: f64| {
            let rho = base.density(x);
            if rho <= 0.0 {
                return 0.0;
            }
            let f = if x <= sol_c.x0 {
                sol_c.value_varphi(x).unwrap_or(f64::NAN)
            } else {
                sol_c.value_phi(x).unwrap_or(f64::NAN)
            };
            rho * f / (f + delta)
        };
        pieces.push(crate::speed::SpeedDensityPiece {
            lo,
            hi,
            form: crate::speed::DensityForm::Func(std::sync::Arc::new(f)),
        });
    }

    SpeedMeasure::new(sol.speed.interval(), atoms, pieces)
}

/// Re-solves with the truncation gap halved and demands interior agreement
/// within 1e-6; returns the observed deviation.
pub fn truncation_sensitivity(
    measure: &SpeedMeasure,
    x0: f64,
    lambda: f64,
    opts: &SolveOptions,
) -> Result<f64> {
    let (lo0, hi0) = measure.domain();
    let coarse = opts.truncate.unwrap_or_else(|| auto_truncate(measure));
    if coarse.0 <= lo0 && coarse.1 >= hi0 {
        return Ok(0.0);
    }
    let fine = (lo0 + 0.5 * (coarse.0 - lo0), hi0 - 0.5 * (hi0 - coarse.1));
    let bc = (
        BoundaryCondition::FromClassification,
        BoundaryCondition::FromClassification,
    );
    let mut opts_coarse = opts.clone();
    opts_coarse.truncate = Some(coarse);
    let sol_a = solve(measure, x0, lambda, bc, &opts_coarse)?;
    let mut opts_fine = opts.clone();
    opts_fine.truncate = Some(fine);
    let sol_b = solve(measure, x0, lambda, bc, &opts_fine)?;

    let mut worst = 0.0f64;
    for k in 1..64 {
        let x = coarse.0 + (coarse.1 - coarse.0) * k as f64 / 64.0;
        let va = sol_a.value_varphi(x)?;
        let pa = sol_a.value_phi(x)?;
        let dv = (va - sol_b.value_varphi(x)?).abs();
        let dp = (pa - sol_b.value_phi(x)?).abs();
        let scale = 1.0 + va.abs().max(pa.abs());
        worst = worst.max(dv.max(dp) / scale);
    }
    if worst > 1e-6 {
        return Err(Error::SolverDegenerate(format!(
            "truncation sensitivity {worst:.3e} exceeds 1e-6; move the cutoff outward"
        )));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speed::{DensityForm, SpeedDensityPiece};
    use approx::assert_relative_eq;

    fn lebesgue_0_2() -> SpeedMeasure {
        SpeedMeasure::new(
            (0.0, 2.0),
            vec![],
            vec![SpeedDensityPiece {
                lo: 0.0,
                hi: 2.0,
                form: DensityForm::Pwl(vec![(0.0, 1.0), (2.0, 1.0)]),
            }],
        )
        .unwrap()
    }

    fn kimura_speed() -> SpeedMeasure {
        SpeedMeasure::new(
            (0.0, 1.0),
            vec![],
            vec![SpeedDensityPiece {
                lo: 0.0,
                hi: 1.0,
                form: DensityForm::Func(std::sync::Arc::new(|x: f64| {
                    1.0 / (x * x * (1.0 - x) * (1.0 - x))
                })),
            }],
        )
        .unwrap()
    }

    fn bessel_speed(lo: f64, hi: f64) -> SpeedMeasure {
        SpeedMeasure::new(
            (0.0, f64::INFINITY),
            vec![],
            vec![SpeedDensityPiece {
                lo,
                hi,
                form: DensityForm::Func(std::sync::Arc::new(|x: f64| x.powi(-4))),
            }],
        )
        .unwrap()
    }

    #[test]
    fn cosh_profiles_on_reflected_lebesgue() {
        let m = lebesgue_0_2();
        let x0 = 1.5;
        let sol = solve(
            &m,
            x0,
            0.5,
            (BoundaryCondition::Reflecting, BoundaryCondition::Reflecting),
            &SolveOptions::default(),
        )
        .unwrap();
        let mut worst = 0.0f64;
        for (i, &x) in sol.grid.iter().enumerate() {
            let v = x.cosh() / x0.cosh();
            let p = (2.0 - x).cosh() / (2.0 - x0).cosh();
            worst = worst.max((sol.varphi[i] - v).abs().max((sol.phi[i] - p).abs()));
        }
        assert!(worst < 1e-6, "profile deviation {worst}");
        assert!(sol.wronskian_spread < 1e-8, "spread {}", sol.wronskian_spread);
        let w_expected = x0.tanh() + (2.0 - x0).tanh();
        assert_relative_eq!(sol.wronskian, w_expected, max_relative = 1e-9);
    }

    #[test]
    fn kimura_closed_forms_and_wronskian() {
        let m = kimura_speed();
        let opts = SolveOptions { truncate: Some((0.0005, 0.9995)), ..Default::default() };
        let sol = solve(
            &m,
            0.5,
            1.0,
            (BoundaryCondition::Absorbing, BoundaryCondition::Absorbing),
            &opts,
        )
        .unwrap();
        assert_relative_eq!(sol.wronskian, 12.0, max_relative = 1e-6);
        let mut worst = 0.0f64;
        for (i, &x) in sol.grid.iter().enumerate() {
            if x < 0.05 || x > 0.95 {
                continue;
            }
            let v = 2.0 * x * x / (1.0 - x);
            let p = 2.0 * (1.0 - x) * (1.0 - x) / x;
            worst = worst
                .max((sol.varphi[i] - v).abs() / v)
                .max((sol.phi[i] - p).abs() / p);
        }
        assert!(worst < 1e-5, "relative deviation {worst}");
    }

    #[test]
    fn bessel_eigenfunctions_and_wronskian() {
        let m = bessel_speed(0.05, 40.0);
        let sol = solve(
            &m,
            1.0,
            0.5,
            (BoundaryCondition::Absorbing, BoundaryCondition::Reflecting),
            &SolveOptions::default(),
        )
        .unwrap();
        let w_expected = std::f64::consts::E / 1f64.sinh();
        assert_relative_eq!(sol.wronskian, w_expected, max_relative = 1e-5);
        for &x in &[0.5f64, 1.0, 2.0, 5.0] {
            let v = x * (1.0 - 1.0 / x).exp();
            let p = x * (1.0 / x).sinh() / 1f64.sinh();
            assert_relative_eq!(sol.value_varphi(x).unwrap(), v, max_relative = 2e-5);
            assert_relative_eq!(sol.value_phi(x).unwrap(), p, max_relative = 2e-5);
        }
    }

    #[test]
    fn residual_oracle_on_closed_forms() {
        // cosh satisfies f'' = f: residual vanishes at λ = 1/2, not at λ = 1
        let m = lebesgue_0_2();
        let grid: Vec<f64> = (0..=2000).map(|k| k as f64 * 1e-3).collect();
        let anchor = 1000;
        let slopes = (grid[anchor].sinh(), grid[anchor].sinh());
        let f = |x: f64| x.cosh();
        let good = ode_residual_fn(&f, &grid, anchor, slopes, &m, 0.5);
        assert!(good < 1e-9, "residual {good}");
        let bad = ode_residual_fn(&f, &grid, anchor, slopes, &m, 1.0);
        assert!(bad > 0.3, "wrong-eigenvalue residual {bad} should be large");
    }

    #[test]
    fn solve_output_passes_its_own_residual() {
        let m = lebesgue_0_2();
        let sol = solve(
            &m,
            1.0,
            0.5,
            (BoundaryCondition::Reflecting, BoundaryCondition::Reflecting),
            &SolveOptions::default(),
        )
        .unwrap();
        let r = ode_residual(&sol.grid_fn_varphi(), &m, 0.5);
        assert!(r < 1e-8, "residual {r}");
    }

    #[test]
    fn hitting_laplace_frozen_values() {
        let m = lebesgue_0_2();
        let sol = solve(
            &m,
            1.0,
            0.5,
            (BoundaryCondition::Reflecting, BoundaryCondition::Reflecting),
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(hitting_laplace(&sol, 1.3, 1.3).unwrap(), 1.0);
        // E_1[e^{−H_{1.5}/2}] = cosh(1)/cosh(1.5)
        let expected = 1f64.cosh() / 1.5f64.cosh();
        assert_relative_eq!(
            hitting_laplace(&sol, 1.0, 1.5).unwrap(),
            expected,
            max_relative = 1e-8
        );
        assert_relative_eq!(expected, 0.655_957_4, max_relative = 1e-6);

        let bessel = bessel_speed(0.05, 40.0);
        let sol = solve(
            &bessel,
            1.0,
            0.5,
            (BoundaryCondition::Absorbing, BoundaryCondition::Reflecting),
            &SolveOptions::default(),
        )
        .unwrap();
        // decreasing branch: E_2[e^{−H_1/2}] = 2 sinh(1/2)/sinh(1)
        let expected = 2.0 * 0.5f64.sinh() / 1f64.sinh();
        assert_relative_eq!(
            hitting_laplace(&sol, 2.0, 1.0).unwrap(),
            expected,
            max_relative = 1e-5
        );
        assert_relative_eq!(expected, 0.886_818_9, max_relative = 1e-6);
    }

    #[test]
    fn hitting_laplace_is_multiplicative() {
        let m = lebesgue_0_2();
        let sol = solve(
            &m,
            1.0,
            0.5,
            (BoundaryCondition::Reflecting, BoundaryCondition::Reflecting),
            &SolveOptions::default(),
        )
        .unwrap();
        let (x, y, z) = (0.3, 0.9, 1.7);
        let lhs = hitting_laplace(&sol, x, y).unwrap() * hitting_laplace(&sol, y, z).unwrap();
        let rhs = hitting_laplace(&sol, x, z).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-9);
    }

    #[test]
    fn shift_family_kimura_sigma_formulas() {
        let m = kimura_speed();
        let opts = SolveOptions { truncate: Some((0.0005, 0.9995)), ..Default::default() };
        let sol = solve(
            &m,
            0.5,
            1.0,
            (BoundaryCondition::Absorbing, BoundaryCondition::Absorbing),
            &opts,
        )
        .unwrap();
        for delta in [0.0, 1.0, 5.0] {
            let shifted = shift_family(&sol, delta).unwrap();
            for &x in &[0.1, 0.25, 0.45] {
                let expected = (0.5 * delta * (1.0 - x) + x * x) * (1.0 - x) * (1.0 - x);
                assert_relative_eq!(shifted.sigma2(x).unwrap(), expected, max_relative = 2e-5);
            }
            for &x in &[0.55, 0.75, 0.9] {
                let expected = (0.5 * delta * x + (1.0 - x) * (1.0 - x)) * x * x;
                assert_relative_eq!(shifted.sigma2(x).unwrap(), expected, max_relative = 2e-5);
            }
            // closed-form check of the shifted pair against the shifted measure
            let grid: Vec<f64> = sol
                .grid
                .iter()
                .copied()
                .filter(|&x| x > 0.04 && x < 0.96)
                .collect();
            let anchor = grid.partition_point(|&g| g < 0.5);
            let f = |x: f64| {
                if x <= 0.5 {
                    2.0 * x * x / (1.0 - x) + delta
                } else {
                    2.0 * (1.0 - x) * (1.0 - x) / x + delta
                }
            };
            let r = ode_residual_fn(&f, &grid, anchor, (6.0, -6.0), &shifted, 1.0);
            assert!(r < 1e-8, "shifted residual {r} at delta {delta}");
        }
    }

    #[test]
    fn shift_family_delta_zero_is_identity() {
        let m = lebesgue_0_2();
        let sol = solve(
            &m,
            1.0,
            0.5,
            (BoundaryCondition::Reflecting, BoundaryCondition::Reflecting),
            &SolveOptions::default(),
        )
        .unwrap();
        let same = shift_family(&sol, 0.0).unwrap();
        for &x in &[0.2, 0.7, 1.1, 1.9] {
            assert_relative_eq!(same.density(x), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn shift_family_minimal_direction_reflected_bm() {
        let m = lebesgue_0_2();
        let x0 = 1.5;
        let sol = solve(
            &m,
            x0,
            0.5,
            (BoundaryCondition::Reflecting, BoundaryCondition::Reflecting),
            &SolveOptions::default(),
        )
        .unwrap();
        // largest admissible downward shift: η = min(φ(0), ϕ(2)) = 1/cosh(x0)
        let eta = 1.0 / x0.cosh();
        let minimal = shift_family(&sol, -eta).unwrap();
        for &x in &[0.3f64, 0.8, 1.2] {
            let expected = 1.0 - 1.0 / x.cosh();
            assert_relative_eq!(minimal.sigma2(x).unwrap(), expected, max_relative = 1e-7);
        }
        for &x in &[1.6f64, 1.9] {
            let expected = 1.0 - (2.0 - x0).cosh() / ((2.0 - x).cosh() * x0.cosh());
            assert_relative_eq!(minimal.sigma2(x).unwrap(), expected, max_relative = 1e-7);
        }
        // too large a shift is rejected
        assert!(shift_family(&sol, -eta * 1.01).is_err());
    }

    #[test]
    fn jump3_pure_atom_measure_exact_march() {
        use crate::law::Atom;
        let law = crate::law::TargetLaw::new(
            vec![
                Atom { position: 0.0, mass: 1.0 / 3.0 },
                Atom { position: 0.5, mass: 1.0 / 3.0 },
                Atom { position: 1.0, mass: 1.0 / 3.0 },
            ],
            vec![],
        )
        .unwrap();
        // W = 6 (absorbing) and W = 4 (sticky): the march reproduces the
        // input Wronskian exactly
        for (kappa, w) in [(1.0 / 3.0, 6.0), (0.5, 4.0)] {
            let speed = crate::speed::from_law(&law, 0.5, 1.0, kappa).unwrap();
            let sol = solve(
                &speed,
                0.5,
                1.0,
                (
                    BoundaryCondition::FromClassification,
                    BoundaryCondition::FromClassification,
                ),
                &SolveOptions::default(),
            )
            .unwrap();
            assert_relative_eq!(sol.wronskian, w, max_relative = 1e-12);
            assert!(sol.wronskian_spread < 1e-12);
        }
        // frozen endpoint values of the absorbing pair: ϕ(0) = φ(1) = 3
        let speed = crate::speed::from_law(&law, 0.5, 1.0, 1.0 / 3.0).unwrap();
        let sol = solve(
            &speed,
            0.5,
            1.0,
            (
                BoundaryCondition::FromClassification,
                BoundaryCondition::FromClassification,
            ),
            &SolveOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(sol.value_phi(0.0).unwrap(), 3.0, max_relative = 1e-12);
        assert_relative_eq!(sol.value_varphi(1.0).unwrap(), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn truncation_sensitivity_bessel() {
        let m = bessel_speed(0.05, 40.0);
        let opts = SolveOptions { truncate: Some((0.08, 40.0)), ..Default::default() };
        let dev = truncation_sensitivity(&m, 1.0, 0.5, &opts).unwrap();
        assert!(dev < 1e-6, "sensitivity {dev}");
    }
}
