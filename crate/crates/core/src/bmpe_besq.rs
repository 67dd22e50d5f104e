//! Squared Bessel processes and Brownian motion perturbed at its extrema.
//!
//! `dY = D(t) dt + sqrt(nu Y+) dB` is simulated by Euler steps; with
//! `nu = 4` it is the squared Bessel process of dimension `D`.
//!
//! A perturbed Brownian motion solves `W = B + alpha S + beta I` where `S`
//! and `I` are the running maximum and minimum of `W`. It moves like `B`
//! away from its extrema and pushes them by `1/(1-alpha)` (resp.
//! `1/(1-beta)`) times the local time it spends there.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::quadrature::incomplete_beta;

/// Piecewise-constant drift: `drifts[k]` applies from `starts[k]` on.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftSchedule {
    starts: Vec<f64>,
    drifts: Vec<f64>,
}

impl DriftSchedule {
    pub fn constant(d: f64) -> Self {
        DriftSchedule { starts: alloc::vec![0.0], drifts: alloc::vec![d] }
    }

    /// Pieces `(start, drift)` with increasing starts, the first at 0.
    pub fn piecewise(pieces: &[(f64, f64)]) -> Result<Self> {
        if pieces.is_empty() || pieces[0].0 != 0.0 {
            return Err(Error::InvalidArgument("drift schedule must start at 0"));
        }
        if pieces.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::InvalidArgument("drift schedule starts must increase"));
        }
        Ok(DriftSchedule { starts: pieces.iter().map(|p| p.0).collect(), drifts: pieces.iter().map(|p| p.1).collect() })
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = self.starts.partition_point(|&s| s <= t);
        self.drifts[k.saturating_sub(1)]
    }

    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.starts.iter().copied().zip(self.drifts.iter().copied())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BesqConfig {
    pub y0: f64,
    pub nu: f64,
    pub drift: DriftSchedule,
    pub dt: f64,
    pub horizon: f64,
    /// From this time on the first visit to 0 absorbs. Without it, 0
    /// absorbs wherever the drift is not positive.
    pub absorb_after: Option<f64>,
    /// Stop storing values once absorbed.
    pub stop_at_absorption: bool,
}

/// Values on the grid `k dt`, frozen at 0 after absorption.
#[derive(Clone, Debug, PartialEq)]
pub struct SdePath {
    pub dt: f64,
    pub values: Vec<f64>,
    /// Number of grid steps covering the horizon.
    pub steps: usize,
    pub absorbed_at: Option<usize>,
}

impl SdePath {
    /// Value at grid index `k`, 0 past a truncated absorption.
    pub fn value(&self, k: usize) -> f64 {
        self.values.get(k).copied().unwrap_or(0.0)
    }
    pub fn value_at(&self, t: f64) -> f64 {
        self.value(libm::round(t / self.dt) as usize)
    }
    pub fn absorption_time(&self) -> Option<f64> {
        self.absorbed_at.map(|k| k as f64 * self.dt)
    }
}

fn check_grid(dt: f64, horizon: f64) -> Result<usize> {
    if !(dt > 0.0) || !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument("need dt > 0 and a finite horizon >= 0"));
    }
    Ok(libm::round(horizon / dt) as usize)
}

/// Euler scheme for `dY = D dt + sqrt(nu Y+) dB`; negative values are
/// clamped to 0, or absorb when the absorption rule applies.
pub fn besq_simulate<R: Rng + ?Sized>(cfg: &BesqConfig, rng: &mut R) -> Result<SdePath> {
    if !(cfg.nu > 0.0) || !(cfg.y0 >= 0.0) {
        return Err(Error::InvalidArgument("need nu > 0 and y0 >= 0"));
    }
    let steps = check_grid(cfg.dt, cfg.horizon)?;
    let mut values = Vec::with_capacity(steps + 1);
    let mut y = cfg.y0;
    values.push(y);
    let sd = libm::sqrt(cfg.nu * cfg.dt);
    let mut absorbed_at = None;
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        let d = cfg.drift.at(t);
        let z: f64 = StandardNormal.sample(rng);
        y += d * cfg.dt + sd * libm::sqrt(y.max(0.0)) * z;
        if y <= 0.0 {
            y = 0.0;
            let t1 = t + cfg.dt;
            let absorbing = match cfg.absorb_after {
                Some(a) => t1 >= a,
                None => d <= 0.0,
            };
            if absorbing {
                absorbed_at = Some(k + 1);
                values.push(0.0);
                if cfg.stop_at_absorption {
                    break;
                }
                values.resize(steps + 1, 0.0);
                break;
            }
        }
        values.push(y);
    }
    Ok(SdePath { dt: cfg.dt, values, steps, absorbed_at })
}

/// Perturbation strengths; both must be below 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BmpeParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BmpeParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha < 1.0) || !alpha.is_finite() {
            return Err(Error::DegenerateParameter("alpha must be below 1"));
        }
        if !(beta < 1.0) || !beta.is_finite() {
            return Err(Error::DegenerateParameter("beta must be below 1"));
        }
        Ok(BmpeParams { alpha, beta })
    }

    /// The reflected process `-W`, with the roles of the extrema swapped.
    pub fn mirrored(self) -> Self {
        BmpeParams { alpha: self.beta, beta: self.alpha }
    }
}

/// Running minimum, position and running maximum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extrema {
    pub lower: f64,
    pub pos: f64,
    pub upper: f64,
}

impl Extrema {
    pub const ORIGIN: Extrema = Extrema { lower: 0.0, pos: 0.0, upper: 0.0 };

    pub fn new(lower: f64, pos: f64, upper: f64) -> Result<Self> {
        if !(lower <= pos && pos <= upper) {
            return Err(Error::InvalidArgument("need lower <= pos <= upper"));
        }
        Ok(Extrema { lower, pos, upper })
    }

    pub fn mirrored(self) -> Self {
        Extrema { lower: -self.upper, pos: -self.pos, upper: -self.lower }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitSide {
    Lower,
    Upper,
}

/// Grid values of `W`, `S`, `I` and the driving Brownian motion `B`.
#[derive(Clone, Debug, PartialEq)]
pub struct BmpePath {
    pub dt: f64,
    pub w: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub b: Vec<f64>,
    pub params: BmpeParams,
    pub init: Extrema,
}

impl BmpePath {
    /// `max_k |W_k - (B_k + alpha S_k + beta I_k)|`.
    pub fn functional_residual(&self) -> f64 {
        (0..self.w.len())
            .map(|k| (self.w[k] - (self.b[k] + self.params.alpha * self.upper[k] + self.params.beta * self.lower[k])).abs())
            .fold(0.0, f64::max)
    }
}

const WALL_SIGMAS: f64 = 8.0;
const SUBSTEPS: usize = 100;

#[derive(Clone, Copy, Debug)]
struct Kernel {
    p: BmpeParams,
    b: f64,
    i: f64,
    s: f64,
}

impl Kernel {
    fn from_extrema(p: BmpeParams, e: Extrema) -> Self {
        Kernel { p, b: e.pos - p.alpha * e.upper - p.beta * e.lower, i: e.lower, s: e.upper }
    }

    #[inline]
    fn w(&self) -> f64 {
        self.b + self.p.alpha * self.s + self.p.beta * self.i
    }

    /// One step of length `dt`. Within the step only the nearer of the two
    /// effective walls (extremum or target) is checked, using the exact law
    /// of the Brownian bridge extreme; when the walls are closer than
    /// `WALL_SIGMAS` standard deviations the step is split once into
    /// `SUBSTEPS` pieces, below which only the endpoint is used.
    fn step<R: Rng + ?Sized>(&mut self, dt: f64, a: f64, bt: f64, rng: &mut R, depth: u8) -> Option<ExitSide> {
        let w = self.w();
        let lo = self.i.max(a);
        let hi = self.s.min(bt);
        let sd = libm::sqrt(dt);
        if hi - lo < WALL_SIGMAS * sd {
            if depth == 0 {
                for _ in 0..SUBSTEPS {
                    if let Some(e) = self.step(dt / SUBSTEPS as f64, a, bt, rng, 1) {
                        return Some(e);
                    }
                }
                return None;
            }
            return self.endpoint_step(sd, a, bt, rng);
        }
        let z: f64 = StandardNormal.sample(rng);
        let db = sd * z;
        let e: f64 = Exp1.sample(rng);
        // max of a bridge from 0 to db over time dt: (db + sqrt(db^2 + 2 dt E)) / 2
        let spread = libm::sqrt(db * db + 2.0 * dt * e);
        if hi - w <= w - lo {
            let reach = 0.5 * (db + spread);
            let gap = hi - w;
            if reach >= gap {
                if bt <= self.s {
                    return Some(ExitSide::Upper);
                }
                self.s += (reach - gap) / (1.0 - self.p.alpha);
                if self.s >= bt {
                    self.s = bt;
                    self.b += db;
                    return Some(ExitSide::Upper);
                }
            }
        } else {
            let reach = 0.5 * (spread - db);
            let gap = w - lo;
            if reach >= gap {
                if a >= self.i {
                    return Some(ExitSide::Lower);
                }
                self.i -= (reach - gap) / (1.0 - self.p.beta);
                if self.i <= a {
                    self.i = a;
                    self.b += db;
                    return Some(ExitSide::Lower);
                }
            }
        }
        // The far wall is only checked at the endpoint.
        self.b += db;
        self.settle(a, bt)
    }

    fn endpoint_step<R: Rng + ?Sized>(&mut self, sd: f64, a: f64, bt: f64, rng: &mut R) -> Option<ExitSide> {
        let z: f64 = StandardNormal.sample(rng);
        self.b += sd * z;
        self.settle(a, bt)
    }

    /// Moves an extremum overshot by the current position, keeps
    /// `I <= W <= S` exact in floating point and reports a target hit.
    fn settle(&mut self, a: f64, bt: f64) -> Option<ExitSide> {
        let w = self.w();
        if w > self.s {
            self.s += (w - self.s) / (1.0 - self.p.alpha);
        } else if w < self.i {
            self.i -= (self.i - w) / (1.0 - self.p.beta);
        }
        loop {
            let w = self.w();
            let b = if w > self.s {
                self.b - (w - self.s)
            } else if w < self.i {
                self.b + (self.i - w)
            } else {
                break;
            };
            self.b = match b == self.b {
                false => b,
                true if w > self.s => b.next_down(),
                true => b.next_up(),
            };
        }
        if self.w() >= bt {
            return Some(ExitSide::Upper);
        }
        if self.w() <= a {
            return Some(ExitSide::Lower);
        }
        None
    }
}

/// Simulates `(W, S, I)` on `[0, horizon]`.
pub fn bmpe_simulate<R: Rng + ?Sized>(params: BmpeParams, init: Extrema, horizon: f64, dt: f64, rng: &mut R) -> Result<BmpePath> {
    let params = BmpeParams::new(params.alpha, params.beta)?;
    let init = Extrema::new(init.lower, init.pos, init.upper)?;
    let steps = check_grid(dt, horizon)?;
    let mut k = Kernel::from_extrema(params, init);
    let mut out = BmpePath {
        dt,
        w: Vec::with_capacity(steps + 1),
        upper: Vec::with_capacity(steps + 1),
        lower: Vec::with_capacity(steps + 1),
        b: Vec::with_capacity(steps + 1),
        params,
        init,
    };
    let record = |k: &Kernel, out: &mut BmpePath| {
        out.w.push(k.w());
        out.upper.push(k.s);
        out.lower.push(k.i);
        out.b.push(k.b);
    };
    record(&k, &mut out);
    for _ in 0..steps {
        k.step(dt, f64::NEG_INFINITY, f64::INFINITY, rng, 0);
        record(&k, &mut out);
    }
    Ok(out)
}

/// `W(horizon)` only, without storing the path.
pub fn bmpe_endpoint<R: Rng + ?Sized>(params: BmpeParams, horizon: f64, dt: f64, rng: &mut R) -> Result<f64> {
    let params = BmpeParams::new(params.alpha, params.beta)?;
    let steps = check_grid(dt, horizon)?;
    let mut k = Kernel::from_extrema(params, Extrema::ORIGIN);
    for _ in 0..steps {
        k.step(dt, f64::NEG_INFINITY, f64::INFINITY, rng, 0);
    }
    Ok(k.w())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExitOutcome {
    pub side: ExitSide,
    /// Extrema and position at the exit time.
    pub state: Extrema,
}

fn check_targets(init: Extrema, a: f64, b: f64) -> Result<()> {
    if !(a < init.pos && init.pos < b) {
        return Err(Error::InvalidArgument("need a < position < b"));
    }
    if !(init.lower <= init.pos && init.pos <= init.upper) {
        return Err(Error::InvalidArgument("need lower <= pos <= upper"));
    }
    Ok(())
}

/// Exit from `(a, b)` on a time grid of step `dt`.
pub fn bmpe_exit_grid<R: Rng + ?Sized>(params: BmpeParams, init: Extrema, a: f64, b: f64, dt: f64, rng: &mut R) -> Result<ExitOutcome> {
    let params = BmpeParams::new(params.alpha, params.beta)?;
    check_targets(init, a, b)?;
    let mut k = Kernel::from_extrema(params, init);
    loop {
        if let Some(side) = k.step(dt, a, b, rng, 0) {
            let pos = if side == ExitSide::Upper { b } else { a };
            let state = Extrema { lower: k.i.min(pos), pos, upper: k.s.max(pos) };
            return Ok(ExitOutcome { side, state });
        }
    }
}

const EXIT_MAX_CYCLES: usize = 100_000_000;

/// Exit from `(a, b)` sampled exactly through the excursion structure.
///
/// Between the two effective walls `max(I, a)` and `min(S, b)` the process
/// is a Brownian motion, so the wall it reaches first is a gambler's ruin.
/// At an extremum wall with the other wall `D` away, the drawdown from the
/// extremum reaches `D` after the driving motion has advanced its own
/// maximum by an exponential amount with mean `D`; the extremum moves by
/// that amount divided by `1 - alpha` (or `1 - beta`). Reaching a target
/// wall ends the run. A start with `I = W = S` is first spread by a
/// two-sided step of size `1e-9 (b - a)`.
pub fn bmpe_exit<R: Rng + ?Sized>(params: BmpeParams, init: Extrema, a: f64, b: f64, rng: &mut R) -> Result<ExitOutcome> {
    let p = BmpeParams::new(params.alpha, params.beta)?;
    check_targets(init, a, b)?;
    #[derive(PartialEq)]
    enum At {
        Inside,
        Hi,
        Lo,
    }
    let (mut i, mut w, mut s) = (init.lower, init.pos, init.upper);
    let mut at = At::Inside;
    if i == s {
        let z: f64 = StandardNormal.sample(rng);
        let d = 1e-9 * (b - a) * z;
        if d >= 0.0 {
            s += d / (1.0 - p.alpha);
            w = s;
            at = At::Hi;
        } else {
            i += d / (1.0 - p.beta);
            w = i;
            at = At::Lo;
        }
    } else if w == s {
        at = At::Hi;
    } else if w == i {
        at = At::Lo;
    }
    for _ in 0..EXIT_MAX_CYCLES {
        let lo = i.max(a);
        let hi = s.min(b);
        match at {
            At::Inside => {
                let u: f64 = rng.random();
                if u * (hi - lo) < w - lo {
                    w = hi;
                    at = At::Hi;
                } else {
                    w = lo;
                    at = At::Lo;
                }
            }
            At::Hi => {
                if b <= s {
                    return Ok(ExitOutcome { side: ExitSide::Upper, state: Extrema { lower: i, pos: b, upper: s.max(b) } });
                }
                let d = s - lo;
                let e: f64 = Exp1.sample(rng);
                let ds = e * d / (1.0 - p.alpha);
                if s + ds >= b {
                    return Ok(ExitOutcome { side: ExitSide::Upper, state: Extrema { lower: i, pos: b, upper: b } });
                }
                s += ds;
                w = s - d;
                at = if ds > 0.0 { At::Inside } else { At::Lo };
            }
            At::Lo => {
                if a >= i {
                    return Ok(ExitOutcome { side: ExitSide::Lower, state: Extrema { lower: i.min(a), pos: a, upper: s } });
                }
                let d = hi - i;
                let e: f64 = Exp1.sample(rng);
                let di = e * d / (1.0 - p.beta);
                if i - di <= a {
                    return Ok(ExitOutcome { side: ExitSide::Lower, state: Extrema { lower: a, pos: a, upper: s } });
                }
                i -= di;
                w = i + d;
                at = if di > 0.0 { At::Inside } else { At::Hi };
            }
        }
    }
    Err(Error::NonTerminating("exit sampler exceeded its cycle budget"))
}

fn check_theta(theta_plus: f64, theta_minus: f64) -> Result<()> {
    if !(theta_plus < 1.0 && theta_plus.is_finite()) {
        return Err(Error::DegenerateParameter("theta+ must be below 1"));
    }
    if !(theta_minus < 1.0 && theta_minus.is_finite()) {
        return Err(Error::DegenerateParameter("theta- must be below 1"));
    }
    Ok(())
}

/// `P(tau_a < tau_b)` from the origin, `a < 0 < b`:
/// `I_{b/(b-a)}(1 - theta-, 1 - theta+)`.
pub fn exit_prob_analytic(theta_plus: f64, theta_minus: f64, a: f64, b: f64) -> Result<f64> {
    check_theta(theta_plus, theta_minus)?;
    if !(a < 0.0 && b > 0.0) {
        return Err(Error::InvalidArgument("need a < 0 < b"));
    }
    Ok(incomplete_beta(1.0 - theta_minus, 1.0 - theta_plus, b / (b - a)))
}

/// Probabilities of leaving an interval through each end.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExitProbabilities {
    pub lower: f64,
    pub upper: f64,
}

impl ExitProbabilities {
    fn from_upper(upper: f64) -> Self {
        ExitProbabilities { lower: 1.0 - upper, upper }
    }
    fn from_lower(lower: f64) -> Self {
        ExitProbabilities { lower, upper: 1.0 - lower }
    }
}

/// Exit probabilities from `(lower, 0, upper)` when one extremum is
/// already beyond its target:
///
/// * `lower <= a < 0 <= upper <= b`: `P(tau_b < tau_a) = (-a/(b-a)) ((b-a)/(upper-a))^theta+`
/// * `a <= lower <= 0 < b <= upper`: `P(tau_a < tau_b) = (b/(b-a)) ((b-a)/(b-lower))^theta-`
/// * `lower <= a` and `b <= upper`: Brownian, `P(tau_b < tau_a) = -a/(b-a)`
pub fn exit_prob_initialized(theta_plus: f64, theta_minus: f64, lower: f64, upper: f64, a: f64, b: f64) -> Result<ExitProbabilities> {
    check_theta(theta_plus, theta_minus)?;
    if !(lower <= 0.0 && 0.0 <= upper && a < 0.0 && 0.0 < b) {
        return Err(Error::InvalidArgument("need lower <= 0 <= upper and a < 0 < b"));
    }
    if lower <= a && b <= upper {
        Ok(ExitProbabilities::from_upper(-a / (b - a)))
    } else if lower <= a && upper <= b {
        Ok(ExitProbabilities::from_upper((-a / (b - a)) * libm::pow((b - a) / (upper - a), theta_plus)))
    } else if a <= lower && b <= upper {
        Ok(ExitProbabilities::from_lower((b / (b - a)) * libm::pow((b - a) / (b - lower), theta_minus)))
    } else {
        Err(Error::UnsupportedOrdering)
    }
}

fn rayknight_schedule(theta_plus: f64, theta_minus: f64, lo: f64, w: f64, hi: f64) -> Result<DriftSchedule> {
    if !(0.0 <= lo && lo <= w && w <= hi) {
        return Err(Error::InvalidArgument("need 0 <= lower <= pos <= upper"));
    }
    // Empty intervals are dropped, so the first kept piece starts at 0.
    let bounds = [(0.0, lo, 2.0 * (1.0 - theta_minus)), (lo, w, 2.0), (w, hi, 0.0), (hi, f64::INFINITY, 2.0 * theta_plus)];
    let pieces: Vec<(f64, f64)> = bounds.iter().filter(|b| b.1 > b.0).map(|b| (b.0, b.2)).collect();
    DriftSchedule::piecewise(&pieces)
}

/// Local-time profile of a perturbed Brownian motion started from
/// `(lower, pos, upper)` with `0 <= lower <= pos <= upper`, stopped on first
/// hitting 0: a squared Bessel path in space with dimension `2(1 - theta-)`
/// on `[0, lower]`, 2 on `[lower, pos]`, 0 on `[pos, upper]` and
/// `2 theta+` beyond, absorbed at its first zero after `pos`.
#[allow(clippy::too_many_arguments)]
pub fn rayknight_law<R: Rng + ?Sized>(
    theta_plus: f64,
    theta_minus: f64,
    lower: f64,
    pos: f64,
    upper: f64,
    dx: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<SdePath> {
    check_theta(theta_plus, theta_minus)?;
    let cfg = BesqConfig {
        y0: 0.0,
        nu: 4.0,
        drift: rayknight_schedule(theta_plus, theta_minus, lower, pos, upper)?,
        dt: dx,
        horizon,
        absorb_after: Some(pos),
        stop_at_absorption: true,
    };
    besq_simulate(&cfg, rng)
}

/// Absorption location of [`rayknight_law`], or `None` if the profile
/// survives up to `horizon`. Nothing is stored.
#[allow(clippy::too_many_arguments)]
pub fn rayknight_absorption<R: Rng + ?Sized>(
    theta_plus: f64,
    theta_minus: f64,
    lower: f64,
    pos: f64,
    upper: f64,
    dx: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<Option<f64>> {
    check_theta(theta_plus, theta_minus)?;
    let schedule = rayknight_schedule(theta_plus, theta_minus, lower, pos, upper)?;
    let steps = check_grid(dx, horizon)?;
    let sd = libm::sqrt(4.0 * dx);
    let mut y = 0.0f64;
    let mut next_break = 0usize;
    let pieces: Vec<(f64, f64)> = schedule.pieces().collect();
    let mut d = pieces[0].1;
    for k in 0..steps {
        let t = k as f64 * dx;
        while next_break < pieces.len() && pieces[next_break].0 <= t {
            d = pieces[next_break].1;
            next_break += 1;
        }
        let z: f64 = StandardNormal.sample(rng);
        y += d * dx + sd * libm::sqrt(y) * z;
        if y <= 0.0 {
            y = 0.0;
            let t1 = t + dx;
            if t1 >= pos {
                return Ok(Some(t1));
            }
        }
    }
    Ok(None)
}

/// How the basic walk resolves steps next to an extremum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtremumSampler {
    /// Closed-form step probabilities where available, otherwise local-time
    /// profiles at spatial step `dx`; new extrema by rejection on the exit
    /// side.
    RayKnight { dx: f64 },
    /// The exact excursion sampler [`bmpe_exit`].
    Exact,
}

/// Spatial step for local-time profiles in the basic walk.
pub const DEFAULT_SPATIAL_DX: f64 = 1e-3;

const REJECTION_ATTEMPTS: usize = 100_000;

/// New maximum after leaving `(pos - 1, pos + 1)` through the bottom,
/// sampled from the local-time profile conditioned on absorption before the
/// top.
fn new_max_on_lower_exit<R: Rng + ?Sized>(p: BmpeParams, e: Extrema, dx: f64, rng: &mut R) -> Result<f64> {
    let a = e.pos - 1.0;
    let (lo, w, hi, b) = ((e.lower - a).max(0.0), 1.0, e.upper - a, 2.0);
    if hi >= b {
        return Ok(e.upper);
    }
    for _ in 0..REJECTION_ATTEMPTS {
        if let Some(sigma) = rayknight_absorption(p.alpha, p.beta, lo, w, hi, dx, b, rng)? {
            if sigma < b {
                return Ok(a + sigma.max(hi));
            }
        }
    }
    Err(Error::RejectionExhausted { attempts: REJECTION_ATTEMPTS })
}

fn bulk(e: Extrema) -> bool {
    e.pos - e.lower >= 1.0 && e.upper - e.pos >= 1.0
}

/// One step of the basic walk: the state of a perturbed Brownian motion
/// started from `state` when it first moves one unit away.
pub fn bmpe_walk_step<R: Rng + ?Sized>(params: BmpeParams, state: Extrema, sampler: ExtremumSampler, rng: &mut R) -> Result<Extrema> {
    let p = BmpeParams::new(params.alpha, params.beta)?;
    let e = Extrema::new(state.lower, state.pos, state.upper)?;
    if bulk(e) {
        let right: bool = rng.random();
        let pos = e.pos + if right { 1.0 } else { -1.0 };
        return Ok(Extrema { pos, ..e });
    }
    let dx = match sampler {
        ExtremumSampler::Exact => return Ok(bmpe_exit(p, e, e.pos - 1.0, e.pos + 1.0, rng)?.state),
        ExtremumSampler::RayKnight { dx } => dx,
    };
    let (lo_gap, hi_gap) = (e.pos - e.lower, e.upper - e.pos);
    let p_lower = if lo_gap == 0.0 && hi_gap == 0.0 {
        Some(exit_prob_analytic(p.alpha, p.beta, -1.0, 1.0)?)
    } else if lo_gap >= 1.0 || hi_gap >= 1.0 {
        Some(exit_prob_initialized(p.alpha, p.beta, -lo_gap, hi_gap, -1.0, 1.0)?.lower)
    } else {
        None
    };
    let lower_exit = match p_lower {
        Some(q) => rng.random::<f64>() < q,
        None => {
            // Both extrema within one unit: the local-time profile decides.
            let a = e.pos - 1.0;
            let sigma = rayknight_absorption(p.alpha, p.beta, (e.lower - a).max(0.0), 1.0, e.upper - a, dx, 2.0, rng)?;
            match sigma {
                Some(s) if s < 2.0 => {
                    let upper = a + s.max(e.upper - a);
                    return Ok(Extrema { lower: e.lower.min(a), pos: a, upper });
                }
                _ => false,
            }
        }
    };
    if lower_exit {
        let upper = new_max_on_lower_exit(p, e, dx, rng)?;
        Ok(Extrema { lower: e.lower.min(e.pos - 1.0), pos: e.pos - 1.0, upper })
    } else {
        let m = new_max_on_lower_exit(p.mirrored(), e.mirrored(), dx, rng)?;
        Ok(Extrema { lower: -m, pos: e.pos + 1.0, upper: e.upper.max(e.pos + 1.0) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng64;
    use rand::SeedableRng;

    #[test]
    fn drift_schedule_lookup() {
        let d = DriftSchedule::piecewise(&[(0.0, 1.0), (0.5, 2.0), (1.0, 0.0)]).unwrap();
        assert_eq!(d.at(0.0), 1.0);
        assert_eq!(d.at(0.49), 1.0);
        assert_eq!(d.at(0.5), 2.0);
        assert_eq!(d.at(7.0), 0.0);
    }

    #[test]
    fn zero_stays_zero_without_drift() {
        let mut rng = Rng64::seed_from_u64(1);
        let cfg = BesqConfig {
            y0: 0.0,
            nu: 4.0,
            drift: DriftSchedule::constant(0.0),
            dt: 1e-3,
            horizon: 1.0,
            absorb_after: None,
            stop_at_absorption: false,
        };
        let p = besq_simulate(&cfg, &mut rng).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.0));
        assert_eq!(p.values.len(), 1001);
    }

    #[test]
    fn absorbed_paths_are_frozen() {
        let mut rng = Rng64::seed_from_u64(2);
        let cfg = BesqConfig {
            y0: 0.05,
            nu: 4.0,
            drift: DriftSchedule::constant(0.0),
            dt: 1e-3,
            horizon: 2.0,
            absorb_after: None,
            stop_at_absorption: false,
        };
        for _ in 0..50 {
            let p = besq_simulate(&cfg, &mut rng).unwrap();
            if let Some(k) = p.absorbed_at {
                assert!(p.values[k..].iter().all(|&v| v == 0.0));
                assert!(p.values[..k].iter().all(|&v| v > 0.0) || k == 0);
            }
        }
    }

    #[test]
    fn degenerate_parameters_are_rejected() {
        assert!(BmpeParams::new(1.0, 0.0).is_err());
        assert!(BmpeParams::new(0.2, 1.5).is_err());
        assert!(exit_prob_analytic(1.0, 0.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn unperturbed_exit_is_gamblers_ruin() {
        let v = exit_prob_analytic(0.0, 0.0, -1.0, 2.0).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn initialized_orderings() {
        assert!(matches!(exit_prob_initialized(0.2, 0.1, -0.5, 0.5, -1.0, 1.0), Err(Error::UnsupportedOrdering)));
        let v = exit_prob_initialized(0.0, 0.3, -2.0, 0.5, -1.0, 3.0).unwrap();
        assert!((v.upper - 0.25).abs() < 1e-15);
        // The maximum already sits on the target.
        let v = exit_prob_initialized(0.6, 0.3, -2.0, 3.0, -1.0, 3.0).unwrap();
        assert!((v.upper - 0.25).abs() < 1e-15);
        let v = exit_prob_initialized(0.5, 0.0, -1.0, 0.0, -1.0, 1.0).unwrap();
        assert!((v.upper - libm::sqrt(2.0) / 2.0).abs() < 1e-15);
        let v = exit_prob_initialized(0.4, 0.7, -5.0, 5.0, -1.0, 2.0).unwrap();
        assert!((v.upper - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn residual_is_exactly_zero() {
        let mut rng = Rng64::seed_from_u64(3);
        let p = bmpe_simulate(BmpeParams::new(0.4, -0.7).unwrap(), Extrema::ORIGIN, 1.0, 1e-3, &mut rng).unwrap();
        assert_eq!(p.functional_residual(), 0.0);
        for k in 0..p.w.len() {
            assert!(p.lower[k] <= p.w[k] && p.w[k] <= p.upper[k]);
        }
        assert!(p.upper.windows(2).all(|v| v[1] >= v[0]));
        assert!(p.lower.windows(2).all(|v| v[1] <= v[0]));
    }

    #[test]
    fn bulk_steps_keep_extrema() {
        let mut rng = Rng64::seed_from_u64(4);
        let e = Extrema::new(-5.0, 0.0, 5.0).unwrap();
        for _ in 0..20 {
            let n = bmpe_walk_step(BmpeParams::new(0.5, 0.5).unwrap(), e, ExtremumSampler::RayKnight { dx: 1e-2 }, &mut rng).unwrap();
            assert_eq!((n.lower, n.upper), (-5.0, 5.0));
            assert_eq!((n.pos - e.pos).abs(), 1.0);
        }
    }

    #[test]
    fn exact_exit_keeps_order() {
        let mut rng = Rng64::seed_from_u64(5);
        let p = BmpeParams::new(0.5, -0.5).unwrap();
        for _ in 0..1000 {
            let o = bmpe_exit(p, Extrema::ORIGIN, -1.0, 2.0, &mut rng).unwrap();
            assert!(o.state.lower <= o.state.pos && o.state.pos <= o.state.upper);
            assert!(o.state.lower >= -1.0 && o.state.upper <= 2.0);
        }
    }
}
