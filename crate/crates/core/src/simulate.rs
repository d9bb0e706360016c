//! Seeded random-walk engine with a local-time field.
//!
//! Brownian motion is approximated by a simple random walk on a δ-grid with
//! time step δ²; each visit to a site adds δ to that site's local time and
//! δ·m(bin) to the additive functional `Γ = ∫ L^x m(dx)`. Two stopping rules
//! are realized on top of the same walk:
//!
//! * the pathwise comparison `λκΓ > L^{x0}` (with an independent
//!   exponential mark at x0 carrying the atom μ({x0}), see `blj_stop`), and
//! * the exponential clock `Γ > T_λ` (`exp_time_stop`).
//!
//! Sites where the speed measure is infinite stop the walk on contact.
//! Paths are independent, deterministically seeded from (seed, path index),
//! and merged in fixed chunk order so repeated runs are byte-identical.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::law::TargetLaw;
use crate::speed::{AtomMass, SpeedMeasure};
use crate::{Error, Result};

/// Walk discretization and reproducibility knobs.
#[derive(Debug, Clone)]
pub struct WalkConfig {
    /// Spatial step δ; the time step is δ².
    pub delta: f64,
    /// Truncated walk domain; defaults to the mass hull ± δ (a forced step
    /// back from a massless wall site leaves the embedded chain unchanged).
    pub domain: Option<(f64, f64)>,
    pub max_steps: u64,
    pub seed: u64,
    pub paths: u32,
    /// Sites at which per-path local times are recorded.
    pub probes: Vec<f64>,
    /// Re-derive Γ from the local-time field on sampled steps and compare
    /// with the running accumulator (test instrumentation).
    pub check_conservation: bool,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            delta: 1.0 / 400.0,
            domain: None,
            max_steps: 20_000_000,
            seed: 1,
            paths: 10_000,
            probes: Vec::new(),
            check_conservation: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    Blj,
    ExpTime,
}

/// One stopped path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingOutcome {
    pub terminal: f64,
    pub rule: StopRule,
    /// Γ at the stopping step (infinite atoms absorb: Γ jumps to ∞).
    pub gamma: f64,
    pub l_x0: f64,
    pub steps: u64,
    pub censored: bool,
    /// Local-time snapshot at the configured probe sites.
    pub probe_local_times: Vec<f64>,
}

/// Outcomes of a seeded path bundle plus merged local-time statistics.
#[derive(Debug, Clone)]
pub struct SimulationBundle {
    pub rule: StopRule,
    pub lambda: f64,
    pub kappa: Option<f64>,
    pub outcomes: Vec<EmbeddingOutcome>,
    /// Probe positions (snapped to sites) matching `probe_local_times`.
    pub probes: Vec<f64>,
    /// Mean local time per site over all paths (censored included).
    pub sites: Vec<f64>,
    pub mean_local_time: Vec<f64>,
    /// Paths that touched a truncation wall at least once.
    pub wall_contact_paths: u64,
}

impl SimulationBundle {
    pub fn censored(&self) -> usize {
        self.outcomes.iter().filter(|o| o.censored).count()
    }

    pub fn terminal_values(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.terminal).collect()
    }
}

/// Shared site-grid data for one bundle.
struct Engine {
    lo: f64,
    delta: f64,
    n_sites: usize,
    x0_index: usize,
    /// Binned measure mass per site (zero at infinite sites).
    m_bin: Vec<f64>,
    infinite: Vec<bool>,
    lambda: f64,
    max_steps: u64,
    probe_indices: Vec<usize>,
    check_conservation: bool,
    /// Exact positions (atoms) that lattice sites snap to when reporting
    /// terminals, so the float dust of `lo + i·δ` never lands a terminal
    /// value next to a CDF jump instead of on it.
    snap: Vec<f64>,
}

enum RuleParams {
    /// λκ·(Γ − m({x0})·L^{x0}) > L^{x0} — the comparison runs on the
    /// atom-free part of Γ — plus an exponential mark at x0 when
    /// μ({x0}) > 0: stop there once (μ₀/κ)·L^{x0} exceeds an independent
    /// Exp(1). With no atom at x0 this is the plain comparison rule.
    Blj { kappa: f64, atom_rate: f64, x0_atom_mass: f64 },
    /// Γ > T_λ.
    ExpTime,
}

impl Engine {
    fn site(&self, i: usize) -> f64 {
        let x = self.lo + self.delta * i as f64;
        for &p in &self.snap {
            if (x - p).abs() <= 1e-6 * self.delta {
                return p;
            }
        }
        x
    }

    fn run_path(
        &self,
        rule: &RuleParams,
        rng: &mut ChaCha8Rng,
        local: &mut [f64],
    ) -> (EmbeddingOutcome, bool) {
        local.fill(0.0);
        let delta = self.delta;
        let mut pos = self.x0_index;
        let mut gamma = 0.0f64;
        let mut l_x0 = 0.0f64;
        let mut steps = 0u64;
        let mut censored = false;
        let mut touched_wall = false;

        // draw per-path marks up front in a fixed order
        let (kappa_lambda, drift_mass, x0_clock, gamma_budget) = match rule {
            RuleParams::Blj { kappa, atom_rate, x0_atom_mass } => {
                let clock = if *atom_rate > 0.0 {
                    exp1(rng) / *atom_rate
                } else {
                    f64::INFINITY
                };
                (self.lambda * kappa, *x0_atom_mass, clock, f64::INFINITY)
            }
            RuleParams::ExpTime => (0.0, 0.0, f64::INFINITY, exp1(rng) / self.lambda),
        };
        let is_blj = matches!(rule, RuleParams::Blj { .. });

        let mut bits = 0u64;
        let mut bits_left = 0u32;
        let terminal;
        loop {
            if self.infinite[pos] {
                gamma = f64::INFINITY;
                terminal = self.site(pos);
                break;
            }
            local[pos] += delta;
            gamma += delta * self.m_bin[pos];
            if pos == self.x0_index {
                l_x0 += delta;
                if l_x0 > x0_clock {
                    terminal = self.site(pos);
                    break;
                }
            }
            let stop = if is_blj {
                kappa_lambda * (gamma - drift_mass * l_x0) > l_x0
            } else {
                gamma > gamma_budget
            };
            if stop {
                terminal = self.site(pos);
                break;
            }
            if steps >= self.max_steps {
                censored = true;
                terminal = self.site(pos);
                break;
            }
            if self.check_conservation && steps & 0x3fff == 0x3fff {
                let direct: f64 = local
                    .iter()
                    .zip(&self.m_bin)
                    .map(|(l, m)| l * m)
                    .sum();
                assert!(
                    (direct - gamma).abs() <= 1e-9 * (1.0 + gamma.abs()),
                    "additive functional drifted from its field: {direct} vs {gamma}"
                );
            }
            steps += 1;
            if bits_left == 0 {
                bits = rng.next_u64();
                bits_left = 64;
            }
            let up = bits & 1 == 1;
            bits >>= 1;
            bits_left -= 1;
            if pos == 0 {
                pos = 1;
                touched_wall = true;
            } else if pos == self.n_sites - 1 {
                pos = self.n_sites - 2;
                touched_wall = true;
            } else if up {
                pos += 1;
            } else {
                pos -= 1;
            }
        }

        let probe_local_times = self.probe_indices.iter().map(|&i| local[i]).collect();
        (
            EmbeddingOutcome {
                terminal,
                rule: if is_blj { StopRule::Blj } else { StopRule::ExpTime },
                gamma,
                l_x0,
                steps,
                censored,
                probe_local_times,
            },
            touched_wall,
        )
    }

    fn run_bundle(
        &self,
        rule: RuleParams,
        seed: u64,
        paths: u32,
        lambda: f64,
        kappa: Option<f64>,
    ) -> SimulationBundle {
        const CHUNK: u32 = 256;
        let n_chunks = paths.div_ceil(CHUNK);
        let results: Vec<(Vec<EmbeddingOutcome>, Vec<f64>, u64)> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut local = vec![0.0f64; self.n_sites];
                let mut lsum = vec![0.0f64; self.n_sites];
                let first = c * CHUNK;
                let last = (first + CHUNK).min(paths);
                let mut outs = Vec::with_capacity((last - first) as usize);
                let mut walls = 0u64;
                for p in first..last {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(1 + p as u64);
                    let (out, touched) = self.run_path(&rule, &mut rng, &mut local);
                    for (s, l) in lsum.iter_mut().zip(local.iter()) {
                        *s += l;
                    }
                    walls += touched as u64;
                    outs.push(out);
                }
                (outs, lsum, walls)
            })
            .collect();

        let mut outcomes = Vec::with_capacity(paths as usize);
        let mut lsum = vec![0.0f64; self.n_sites];
        let mut wall_contact_paths = 0;
        for (outs, ls, walls) in results {
            outcomes.extend(outs);
            for (a, b) in lsum.iter_mut().zip(ls) {
                *a += b;
            }
            wall_contact_paths += walls;
        }
        let inv = 1.0 / paths as f64;
        SimulationBundle {
            rule: match rule {
                RuleParams::Blj { .. } => StopRule::Blj,
                RuleParams::ExpTime => StopRule::ExpTime,
            },
            lambda,
            kappa,
            outcomes,
            probes: self.probe_indices.iter().map(|&i| self.site(i)).collect(),
            sites: (0..self.n_sites).map(|i| self.site(i)).collect(),
            mean_local_time: lsum.into_iter().map(|s| s * inv).collect(),
            wall_contact_paths,
        }
    }
}

fn exp1(rng: &mut ChaCha8Rng) -> f64 {
    -uniform_open01(rng.next_u64()).ln()
}

fn uniform_open01(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn site_grid(cfg: &WalkConfig, hull: (f64, f64), x0: f64) -> Result<(f64, usize, usize, Vec<usize>)> {
    let delta = cfg.delta;
    if !(delta > 0.0) {
        return Err(Error::Config(format!("delta must be positive, got {delta}")));
    }
    let (lo_want, hi_want) = cfg
        .domain
        .unwrap_or((hull.0 - delta, hull.1 + delta));
    if lo_want > hull.0 || hi_want < hull.1 {
        return Err(Error::Config(format!(
            "walk domain [{lo_want}, {hi_want}] does not cover the mass hull [{}, {}]",
            hull.0, hull.1
        )));
    }
    // anchor the lattice at x0 so the start sits exactly on a site
    let below = ((x0 - lo_want) / delta).ceil() as i64;
    let above = ((hi_want - x0) / delta).ceil() as i64;
    let lo = x0 - below as f64 * delta;
    let n_sites = (below + above + 1) as usize;
    if n_sites < 3 {
        return Err(Error::Config("walk domain shorter than two steps".into()));
    }
    let x0_index = below as usize;
    let mut probe_indices = Vec::with_capacity(cfg.probes.len());
    for &p in &cfg.probes {
        let i = ((p - lo) / delta).round();
        if i < 0.0 || i as usize >= n_sites {
            return Err(Error::Config(format!("probe {p} outside the walk domain")));
        }
        probe_indices.push(i as usize);
    }
    Ok((lo, n_sites, x0_index, probe_indices))
}

/// Embeds μ by the comparison rule `λκΓ > L^{x0}` with
/// `m(dx) = μ(dx)/(λ(κ − V(x)))`; sites where κ − V vanishes carry infinite
/// mass and stop on contact.
///
/// An atom of μ at x0 adds a drift `m({x0})·L^{x0}` to Γ which can never
/// fire the comparison; it is realized instead by an independent Exp(1)
/// mark at rate μ({x0})/κ per unit of L^{x0}, while the comparison runs on
/// the atom-free part of Γ (the discounted first-passage root then sits at
/// λ again, so the terminal law is unchanged). With μ({x0}) = 0 the rule is
/// the plain pathwise comparison.
pub fn blj_stop(
    law: &TargetLaw,
    x0: f64,
    kappa: f64,
    lambda: f64,
    cfg: &WalkConfig,
) -> Result<SimulationBundle> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    let kappa0 = law.kappa0(x0)?;
    let tol = crate::speed::law_equality_tol(law) * (1.0 + kappa0);
    if kappa < kappa0 - tol {
        return Err(Error::InconsistentWronskian { kappa, kappa0 });
    }
    let (lo, n_sites, x0_index, probe_indices) = site_grid(cfg, law.support(), x0)?;
    let delta = cfg.delta;

    let mut m_bin = vec![0.0f64; n_sites];
    let mut infinite = vec![false; n_sites];
    for i in 0..n_sites {
        let x = lo + delta * i as f64;
        let mass = law.mass_between(x - 0.5 * delta, x + 0.5 * delta - 1e-15 * delta.max(1.0));
        if mass <= 0.0 {
            continue;
        }
        let weight = kappa - law.v_kernel(x0, x)?;
        if weight <= tol {
            infinite[i] = true;
        } else {
            m_bin[i] = mass / (lambda * weight);
        }
    }
    let mu0 = law.atom_mass_at(x0);
    let atom_rate = mu0 / kappa;
    let x0_atom_mass = mu0 / (lambda * kappa);
    let snap = law.atoms().iter().map(|a| a.position).collect();

    let engine = Engine {
        lo,
        delta,
        n_sites,
        x0_index,
        m_bin,
        infinite,
        lambda,
        max_steps: cfg.max_steps,
        probe_indices,
        check_conservation: cfg.check_conservation,
        snap,
    };
    Ok(engine.run_bundle(
        RuleParams::Blj { kappa, atom_rate, x0_atom_mass },
        cfg.seed,
        cfg.paths,
        lambda,
        Some(kappa),
    ))
}

/// Embeds the exponential-time law of the diffusion with speed measure `m`:
/// stop when `Γ` exceeds an independent Exp(λ) draw; infinite atoms absorb.
pub fn exp_time_stop(
    speed: &SpeedMeasure,
    x0: f64,
    lambda: f64,
    cfg: &WalkConfig,
) -> Result<SimulationBundle> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    let (lo, n_sites, x0_index, probe_indices) = site_grid(cfg, speed.domain(), x0)?;
    let delta = cfg.delta;
    let (m_bin, infinite) = bin_speed(speed, lo, delta, n_sites);
    let snap = speed.atoms().iter().map(|a| a.position).collect();

    let engine = Engine {
        lo,
        delta,
        n_sites,
        x0_index,
        m_bin,
        infinite,
        lambda,
        max_steps: cfg.max_steps,
        probe_indices,
        check_conservation: cfg.check_conservation,
        snap,
    };
    Ok(engine.run_bundle(RuleParams::ExpTime, cfg.seed, cfg.paths, lambda, None))
}

fn bin_speed(speed: &SpeedMeasure, lo: f64, delta: f64, n_sites: usize) -> (Vec<f64>, Vec<bool>) {
    let mut m_bin = vec![0.0f64; n_sites];
    let mut infinite = vec![false; n_sites];
    for a in speed.atoms() {
        let i = ((a.position - lo) / delta).round();
        if i < 0.0 || i as usize >= n_sites {
            continue;
        }
        let i = i as usize;
        match a.mass {
            AtomMass::Infinite => infinite[i] = true,
            AtomMass::Finite(m) => m_bin[i] += m,
        }
    }
    for p in speed.pieces() {
        let first = ((p.lo - lo) / delta - 0.5).floor().max(0.0) as usize;
        let last = (((p.hi - lo) / delta + 0.5).ceil() as usize).min(n_sites - 1);
        for i in first..=last {
            let x = lo + delta * i as f64;
            let cell_lo = (x - 0.5 * delta).max(p.lo);
            let cell_hi = (x + 0.5 * delta).min(p.hi);
            if cell_hi <= cell_lo {
                continue;
            }
            let mass = crate::quadrature::integrate(&crate::quadrature::GL8, cell_lo, cell_hi, |y| {
                p.density(y)
            });
            if !mass.is_finite() || mass > 1e12 {
                infinite[i] = true;
            } else {
                m_bin[i] += mass;
            }
        }
    }
    for (m, inf) in m_bin.iter_mut().zip(&infinite) {
        if *inf {
            *m = 0.0;
        }
    }
    (m_bin, infinite)
}

/// A diffusion path sampled at requested diffusion times via the inverse
/// time change `X_t = B_{A_t}`, `A_t = inf{u: Γ_u > t}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub absorbed: bool,
    pub censored: bool,
    pub steps: u64,
}

/// Simulates one diffusion path and reads it at the given (sorted) times.
pub fn diffusion_path(
    speed: &SpeedMeasure,
    x0: f64,
    times: &[f64],
    cfg: &WalkConfig,
    path_index: u32,
) -> Result<PathSample> {
    if times.is_empty() {
        return Err(Error::Config("no sampling times requested".into()));
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] < 0.0 {
        return Err(Error::Config("negative sampling time".into()));
    }
    let horizon = *sorted.last().unwrap();
    if !horizon.is_finite() {
        return Err(Error::Config("horizon must be finite".into()));
    }
    let (lo, n_sites, x0_index, _) = site_grid(cfg, speed.domain(), x0)?;
    let delta = cfg.delta;
    let (m_bin, infinite) = bin_speed(speed, lo, delta, n_sites);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1 + path_index as u64);

    let mut positions = vec![f64::NAN; sorted.len()];
    let mut next = 0usize;
    let mut pos = x0_index;
    let mut gamma = 0.0f64;
    let mut steps = 0u64;
    let mut absorbed = false;
    let mut censored = false;
    let mut bits = 0u64;
    let mut bits_left = 0u32;

    // time 0 reads the start point
    while next < sorted.len() && sorted[next] <= 0.0 {
        positions[next] = lo + delta * pos as f64;
        next += 1;
    }
    while next < sorted.len() {
        if infinite[pos] {
            absorbed = true;
            let here = lo + delta * pos as f64;
            for p in positions.iter_mut().skip(next) {
                *p = here;
            }
            next = sorted.len();
            break;
        }
        gamma += delta * m_bin[pos];
        while next < sorted.len() && gamma > sorted[next] {
            positions[next] = lo + delta * pos as f64;
            next += 1;
        }
        if next >= sorted.len() {
            break;
        }
        if steps >= cfg.max_steps {
            censored = true;
            break;
        }
        steps += 1;
        if bits_left == 0 {
            bits = rng.next_u64();
            bits_left = 64;
        }
        let up = bits & 1 == 1;
        bits >>= 1;
        bits_left -= 1;
        if pos == 0 {
            pos = 1;
        } else if pos == n_sites - 1 {
            pos = n_sites - 2;
        } else if up {
            pos += 1;
        } else {
            pos -= 1;
        }
    }

    Ok(PathSample { times: sorted, positions, absorbed, censored, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::{Atom, DensityPiece};
    use crate::speed::{from_law, DensityForm, SpeedDensityPiece};

    fn jump3() -> TargetLaw {
        TargetLaw::new(
            vec![
                Atom { position: 0.0, mass: 1.0 / 3.0 },
                Atom { position: 0.5, mass: 1.0 / 3.0 },
                Atom { position: 1.0, mass: 1.0 / 3.0 },
            ],
            vec![],
        )
        .unwrap()
    }

    fn small_cfg(paths: u32) -> WalkConfig {
        WalkConfig {
            delta: 1.0 / 100.0,
            paths,
            seed: 12345,
            probes: vec![0.25, 0.5],
            check_conservation: true,
            ..Default::default()
        }
    }

    #[test]
    fn two_atom_exit_is_symmetric_and_mean_local_time_h() {
        let h = 0.25;
        let law = TargetLaw::new(
            vec![
                Atom { position: 0.5 - h, mass: 0.5 },
                Atom { position: 0.5 + h, mass: 0.5 },
            ],
            vec![],
        )
        .unwrap();
        let cfg = WalkConfig {
            delta: 1.0 / 100.0,
            paths: 4000,
            seed: 7,
            ..Default::default()
        };
        let bundle = blj_stop(&law, 0.5, h, 1.0, &cfg).unwrap();
        assert_eq!(bundle.censored(), 0);
        let lowers = bundle
            .outcomes
            .iter()
            .filter(|o| (o.terminal - (0.5 - h)).abs() < 1e-9)
            .count();
        let frac = lowers as f64 / bundle.outcomes.len() as f64;
        assert!((frac - 0.5).abs() < 0.03, "lower-exit fraction {frac}");
        let mean_l: f64 =
            bundle.outcomes.iter().map(|o| o.l_x0).sum::<f64>() / bundle.outcomes.len() as f64;
        assert!((mean_l - h).abs() < 0.03 * h + 0.01, "mean L^x0 {mean_l} vs {h}");
    }

    #[test]
    fn jump3_blj_minimal_masses_and_local_time() {
        let law = jump3();
        let cfg = small_cfg(6000);
        let bundle = blj_stop(&law, 0.5, 1.0 / 3.0, 1.0, &cfg).unwrap();
        assert_eq!(bundle.censored(), 0);
        let n = bundle.outcomes.len() as f64;
        for &atom in &[0.0, 0.5, 1.0] {
            let hits = bundle
                .outcomes
                .iter()
                .filter(|o| (o.terminal - atom).abs() < 1e-9)
                .count() as f64;
            assert!(
                (hits / n - 1.0 / 3.0).abs() < 0.025,
                "mass at {atom}: {}",
                hits / n
            );
        }
        let mean_l: f64 = bundle.outcomes.iter().map(|o| o.l_x0).sum::<f64>() / n;
        assert!(
            (mean_l - 1.0 / 3.0).abs() < 0.015,
            "mean L^x0 {mean_l} vs 1/3"
        );
    }

    #[test]
    fn jump3_exp_time_masses_sticky_regime() {
        let law = jump3();
        let speed = from_law(&law, 0.5, 1.0, 0.5).unwrap();
        let cfg = small_cfg(6000);
        let bundle = exp_time_stop(&speed, 0.5, 1.0, &cfg).unwrap();
        assert_eq!(bundle.censored(), 0);
        let n = bundle.outcomes.len() as f64;
        for &atom in &[0.0, 0.5, 1.0] {
            let hits = bundle
                .outcomes
                .iter()
                .filter(|o| (o.terminal - atom).abs() < 1e-9)
                .count() as f64;
            assert!(
                (hits / n - 1.0 / 3.0).abs() < 0.025,
                "mass at {atom}: {}",
                hits / n
            );
        }
        // E[L^{x0}] = κ
        let mean_l: f64 = bundle.outcomes.iter().map(|o| o.l_x0).sum::<f64>() / n;
        assert!((mean_l - 0.5).abs() < 0.02, "mean L^x0 {mean_l} vs 0.5");
    }

    #[test]
    fn exp_time_single_finite_atom_always_lands_there() {
        let m = SpeedMeasure::new(
            (0.0, 1.0),
            vec![crate::speed::SpeedAtom {
                position: 0.75,
                mass: AtomMass::Finite(2.0),
            }],
            vec![],
        )
        .unwrap();
        let cfg = WalkConfig {
            delta: 1.0 / 64.0,
            domain: Some((-0.5, 1.5)),
            paths: 200,
            seed: 3,
            ..Default::default()
        };
        let bundle = exp_time_stop(&m, 0.25, 1.0, &cfg).unwrap();
        for o in &bundle.outcomes {
            assert!((o.terminal - 0.75).abs() < 1e-9);
        }
    }

    #[test]
    fn lebesgue_path_looks_brownian() {
        let m = SpeedMeasure::new(
            (-4.0, 4.0),
            vec![],
            vec![SpeedDensityPiece {
                lo: -4.0,
                hi: 4.0,
                form: DensityForm::Pwl(vec![(-4.0, 1.0), (4.0, 1.0)]),
            }],
        )
        .unwrap();
        let cfg = WalkConfig {
            delta: 1.0 / 50.0,
            paths: 1,
            seed: 42,
            ..Default::default()
        };
        let t = 1.0;
        let n = 4000;
        let mut sum2 = 0.0;
        for p in 0..n {
            let sample = diffusion_path(&m, 0.0, &[t], &cfg, p).unwrap();
            assert!(!sample.censored);
            sum2 += sample.positions[0] * sample.positions[0];
        }
        let var = sum2 / n as f64;
        assert!((var - t).abs() < 0.05 * t + 0.02, "variance {var} vs {t}");
    }

    #[test]
    fn jump3_paths_visit_only_atoms_and_freeze_when_absorbed() {
        let law = jump3();
        // sticky regime: path lives on the three atoms
        let speed = from_law(&law, 0.5, 1.0, 0.5).unwrap();
        let cfg = WalkConfig {
            delta: 1.0 / 100.0,
            paths: 1,
            seed: 11,
            ..Default::default()
        };
        let times: Vec<f64> = (1..=20).map(|k| k as f64 * 0.05).collect();
        for p in 0..50 {
            let sample = diffusion_path(&speed, 0.5, &times, &cfg, p).unwrap();
            for &x in &sample.positions {
                assert!(
                    [0.0, 0.5, 1.0].iter().any(|&a| (x - a).abs() < 1e-9),
                    "position {x} off the atom set"
                );
            }
        }
        // absorbing regime: once at an endpoint the path stays
        let speed = from_law(&law, 0.5, 1.0, 1.0 / 3.0).unwrap();
        let mut saw_absorption = false;
        for p in 0..50 {
            let sample = diffusion_path(&speed, 0.5, &times, &cfg, p).unwrap();
            if sample.absorbed {
                saw_absorption = true;
                let last = sample.positions[sample.positions.len() - 1];
                assert!(last.abs() < 1e-9 || (last - 1.0).abs() < 1e-9);
                let first_hit = sample
                    .positions
                    .iter()
                    .position(|&x| x.abs() < 1e-9 || (x - 1.0).abs() < 1e-9)
                    .unwrap();
                for &x in &sample.positions[first_hit..] {
                    assert_eq!(x, last);
                }
            }
        }
        assert!(saw_absorption, "no path reached an endpoint by t = 1");
    }

    #[test]
    fn bundles_are_deterministic_given_seed() {
        let law = jump3();
        let cfg = WalkConfig {
            delta: 1.0 / 50.0,
            paths: 300,
            seed: 99,
            ..Default::default()
        };
        let a = blj_stop(&law, 0.5, 0.5, 1.0, &cfg).unwrap();
        let b = blj_stop(&law, 0.5, 0.5, 1.0, &cfg).unwrap();
        for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
            assert_eq!(x.terminal, y.terminal);
            assert_eq!(x.steps, y.steps);
            assert_eq!(x.l_x0, y.l_x0);
        }
        assert_eq!(a.mean_local_time, b.mean_local_time);
    }

    #[test]
    fn uniform_law_smooth_blj_embedding() {
        // density case: uniform on [0,1], κ slightly above κ₀
        let law = TargetLaw::new(
            vec![],
            vec![DensityPiece::new(vec![(0.0, 1.0), (1.0, 1.0)]).unwrap()],
        )
        .unwrap();
        let k0 = law.kappa0(0.5).unwrap();
        let cfg = WalkConfig {
            delta: 1.0 / 200.0,
            paths: 4000,
            seed: 5,
            ..Default::default()
        };
        let bundle = blj_stop(&law, 0.5, k0 * 1.3, 1.0, &cfg).unwrap();
        assert_eq!(bundle.censored(), 0);
        // quantile-coupled W1 against the uniform target; continuous targets
        // converge slower in δ than atomic ones (the walk truncates the
        // small-excursion contributions to Γ), hence the coarse band
        let mut vals = bundle.terminal_values();
        vals.sort_by(f64::total_cmp);
        let n = vals.len();
        let w1: f64 = vals
            .iter()
            .enumerate()
            .map(|(i, v)| (v - (i as f64 + 0.5) / n as f64).abs())
            .sum::<f64>()
            / n as f64;
        assert!(w1 < 0.05, "W1 to uniform {w1}");
        let mean = vals.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }
}
