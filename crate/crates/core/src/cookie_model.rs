//! Markovian cookie stacks.
//!
//! A [`CookieChainSpec`] is a finite Markov chain `K` on cookie states, a
//! right-step probability per state and a law for the first cookie. Every
//! site carries an independent stack whose states follow the chain. A
//! [`CookieEnvironment`] materializes stacks lazily from a seed through the
//! counter hash in [`crate::rng`], so it can be replayed and shared between
//! a walk and the branching-like processes built on the same seed.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::error::{Error, Result};
use crate::rng::{counter_uniform, counter_word, derive_seed, mix64, site_key, unit_f64, Rng64, Tag};
use crate::sites::SiteVec;

pub const DEFAULT_CRITICALITY_TOLERANCE: f64 = 1e-9;
const ROW_SUM_TOLERANCE: f64 = 1e-9;
const POWER_TOLERANCE: f64 = 1e-12;
const POWER_MAX_ITERATIONS: usize = 1_000_000;
const UNIQUENESS_TOLERANCE: f64 = 1e-6;

/// Unvalidated description of a cookie chain.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecInput {
    pub n_states: usize,
    /// Row-major `n_states x n_states`.
    pub transition: Vec<f64>,
    pub p: Vec<f64>,
    pub eta: Vec<f64>,
    pub strict_interior: bool,
    pub criticality_tolerance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SpecIssue {
    NoStates,
    DimensionMismatch { field: &'static str, expected: usize, got: usize },
    NotFinite { field: &'static str, index: usize },
    NotStochastic { row: usize, sum: f64 },
    NegativeEntry { row: usize, col: usize },
    ProbabilityOutOfRange { state: usize, value: f64 },
    EtaNotDistribution { sum: f64 },
    NonUniqueStationary,
    NoConvergence,
    NotCritical { mean_drift: f64, tolerance: f64 },
    BoundaryProbability { state: usize, value: f64 },
}

impl core::fmt::Display for SpecIssue {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SpecIssue::NoStates => write!(f, "chain has no states"),
            SpecIssue::DimensionMismatch { field, expected, got } => {
                write!(f, "{field} has length {got}, expected {expected}")
            }
            SpecIssue::NotFinite { field, index } => write!(f, "{field}[{index}] is not finite"),
            SpecIssue::NotStochastic { row, sum } => write!(f, "row {row} sums to {sum}"),
            SpecIssue::NegativeEntry { row, col } => write!(f, "entry ({row},{col}) is negative"),
            SpecIssue::ProbabilityOutOfRange { state, value } => {
                write!(f, "p[{state}] = {value} is outside [0,1]")
            }
            SpecIssue::EtaNotDistribution { sum } => {
                write!(f, "eta is not a probability vector (sum {sum})")
            }
            SpecIssue::NonUniqueStationary => write!(f, "stationary distribution is not unique"),
            SpecIssue::NoConvergence => write!(f, "power iteration did not converge"),
            SpecIssue::NotCritical { mean_drift, tolerance } => {
                write!(f, "mu . p = {mean_drift} differs from 1/2 by more than {tolerance}")
            }
            SpecIssue::BoundaryProbability { state, value } => {
                write!(f, "p[{state}] = {value} is on the boundary")
            }
        }
    }
}

/// Outcome of [`validate_spec`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpecDiagnostics {
    pub accepted: bool,
    pub failures: Vec<SpecIssue>,
    pub warnings: Vec<SpecIssue>,
    pub stationary: Option<Vec<f64>>,
    pub mean_drift: Option<f64>,
}

impl SpecDiagnostics {
    pub fn describe(&self) -> String {
        let mut s = String::new();
        for f in &self.failures {
            s.push_str(&format!("error: {f}\n"));
        }
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s
    }
}

fn check_stochastic(k: &[f64], n: usize) -> core::result::Result<(), SpecIssue> {
    for row in 0..n {
        let r = &k[row * n..(row + 1) * n];
        if let Some(col) = r.iter().position(|&v| v < 0.0) {
            return Err(SpecIssue::NegativeEntry { row, col });
        }
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(SpecIssue::NotStochastic { row, sum });
        }
    }
    Ok(())
}

fn power_iterate(k: &[f64], n: usize, mut v: Vec<f64>) -> Result<Vec<f64>> {
    // Lazy chain (I + K)/2 has the same stationary laws and is aperiodic.
    let mut next = vec![0.0; n];
    for _ in 0..POWER_MAX_ITERATIONS {
        for (j, x) in next.iter_mut().enumerate() {
            *x = 0.5 * v[j];
        }
        for i in 0..n {
            let vi = 0.5 * v[i];
            if vi == 0.0 {
                continue;
            }
            let row = &k[i * n..(i + 1) * n];
            for j in 0..n {
                next[j] += vi * row[j];
            }
        }
        let total: f64 = next.iter().sum();
        let mut change = 0.0;
        for j in 0..n {
            next[j] /= total;
            change += (next[j] - v[j]).abs();
        }
        core::mem::swap(&mut v, &mut next);
        if change < POWER_TOLERANCE {
            return Ok(v);
        }
    }
    Err(Error::NoConvergence { iterations: POWER_MAX_ITERATIONS })
}

/// Stationary law of the row-stochastic matrix `k` (row-major, `n x n`).
///
/// Power iteration from two pseudo-random starting laws; if they settle on
/// different limits the chain has several closed classes.
pub fn stationary_distribution(k: &[f64], n: usize) -> Result<Vec<f64>> {
    if n == 0 || k.len() != n * n {
        return Err(Error::InvalidSpec(String::from("transition matrix has the wrong size")));
    }
    if let Err(issue) = check_stochastic(k, n) {
        let (row, sum) = match issue {
            SpecIssue::NotStochastic { row, sum } => (row, sum),
            SpecIssue::NegativeEntry { row, .. } => (row, f64::NAN),
            _ => unreachable!(),
        };
        return Err(Error::NotStochastic { row, sum });
    }
    let start = |salt: u64| -> Vec<f64> {
        let w: Vec<f64> = (0..n).map(|i| 0.05 + unit_f64(mix64(salt ^ mix64(i as u64)))).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    };
    let a = power_iterate(k, n, start(0x1234_5678))?;
    let b = power_iterate(k, n, start(0x9abc_def0))?;
    let gap: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
    if gap > UNIQUENESS_TOLERANCE {
        return Err(Error::NonUniqueStationary);
    }
    Ok(a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect())
}

/// Checks a spec without panicking and reports every problem found.
pub fn validate_spec(input: &SpecInput) -> SpecDiagnostics {
    let mut failures = Vec::new();
    let mut warnings = Vec::new();
    let n = input.n_states;
    let done = |failures: Vec<SpecIssue>, warnings| SpecDiagnostics {
        accepted: false,
        failures,
        warnings,
        stationary: None,
        mean_drift: None,
    };
    if n == 0 {
        failures.push(SpecIssue::NoStates);
        return done(failures, warnings);
    }
    for (field, len, expected) in [
        ("transition", input.transition.len(), n * n),
        ("p", input.p.len(), n),
        ("eta", input.eta.len(), n),
    ] {
        if len != expected {
            failures.push(SpecIssue::DimensionMismatch { field, expected, got: len });
        }
    }
    if !failures.is_empty() {
        return done(failures, warnings);
    }
    for (field, v) in [("transition", &input.transition), ("p", &input.p), ("eta", &input.eta)] {
        if let Some(index) = v.iter().position(|x| !x.is_finite()) {
            failures.push(SpecIssue::NotFinite { field, index });
        }
    }
    if !failures.is_empty() {
        return done(failures, warnings);
    }
    let stochastic = check_stochastic(&input.transition, n);
    if let Err(issue) = stochastic.clone() {
        failures.push(issue);
    }
    for (state, &value) in input.p.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            failures.push(SpecIssue::ProbabilityOutOfRange { state, value });
        } else if value == 0.0 || value == 1.0 {
            let issue = SpecIssue::BoundaryProbability { state, value };
            if input.strict_interior {
                failures.push(issue);
            } else {
                warnings.push(issue);
            }
        }
    }
    let eta_sum: f64 = input.eta.iter().sum();
    if input.eta.iter().any(|&x| x < 0.0) || (eta_sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        failures.push(SpecIssue::EtaNotDistribution { sum: eta_sum });
    }
    let mut stationary = None;
    let mut mean_drift = None;
    if stochastic.is_ok() {
        match stationary_distribution(&input.transition, n) {
            Ok(mu) => {
                let pbar: f64 = mu.iter().zip(&input.p).map(|(m, p)| m * p).sum();
                let tolerance = input.criticality_tolerance.unwrap_or(DEFAULT_CRITICALITY_TOLERANCE);
                if (pbar - 0.5).abs() > tolerance {
                    failures.push(SpecIssue::NotCritical { mean_drift: pbar, tolerance });
                }
                mean_drift = Some(pbar);
                stationary = Some(mu);
            }
            Err(Error::NonUniqueStationary) => failures.push(SpecIssue::NonUniqueStationary),
            Err(_) => failures.push(SpecIssue::NoConvergence),
        }
    }
    SpecDiagnostics { accepted: failures.is_empty(), failures, warnings, stationary, mean_drift }
}

/// A validated cookie chain.
#[derive(Clone, Debug, PartialEq)]
pub struct CookieChainSpec {
    n: usize,
    k: Vec<f64>,
    cum: Vec<f64>,
    p: Vec<f64>,
    eta: Vec<f64>,
    eta_cum: Vec<f64>,
    mu: Vec<f64>,
    potential: Vec<f64>,
    absorbing: Vec<bool>,
    strict_interior: bool,
    warnings: Vec<SpecIssue>,
}

fn cumulative(v: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = v
        .iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = f64::INFINITY;
    }
    out
}

#[inline]
fn inverse_cdf(cum: &[f64], u: f64, weights: &[f64]) -> usize {
    let mut i = 0;
    while u >= cum[i] {
        i += 1;
    }
    // Never land on a zero-weight state through rounding.
    while weights[i] == 0.0 && i + 1 < cum.len() {
        i += 1;
    }
    i
}

/// Solves `g - K g = f` with `mu . g = 0`, where `f = 2p - 1` centred under
/// `mu`, through the fundamental matrix `I - K + 1 mu^T`.
fn drift_potential(k: &[f64], p: &[f64], mu: &[f64]) -> Result<Vec<f64>> {
    let n = p.len();
    let mean: f64 = mu.iter().zip(p).map(|(m, q)| m * (2.0 * q - 1.0)).sum();
    let z = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - k[i * n + j] + mu[j]);
    let f = DVector::from_fn(n, |i, _| 2.0 * p[i] - 1.0 - mean);
    let g = z.lu().solve(&f).ok_or(Error::NonUniqueStationary)?;
    Ok(g.iter().copied().collect())
}

impl CookieChainSpec {
    pub fn new(input: SpecInput) -> Result<Self> {
        let diag = validate_spec(&input);
        if !diag.accepted {
            if diag.failures.contains(&SpecIssue::NonUniqueStationary) {
                return Err(Error::NonUniqueStationary);
            }
            if let Some(SpecIssue::NotStochastic { row, sum }) =
                diag.failures.iter().find(|f| matches!(f, SpecIssue::NotStochastic { .. }))
            {
                return Err(Error::NotStochastic { row: *row, sum: *sum });
            }
            return Err(Error::InvalidSpec(diag.describe()));
        }
        let n = input.n_states;
        let cum = (0..n).flat_map(|i| cumulative(&input.transition[i * n..(i + 1) * n])).collect();
        let absorbing = (0..n).map(|i| input.transition[i * n + i] == 1.0).collect();
        let mu = diag.stationary.unwrap_or_default();
        let potential = drift_potential(&input.transition, &input.p, &mu)?;
        Ok(CookieChainSpec {
            n,
            cum,
            eta_cum: cumulative(&input.eta),
            absorbing,
            potential,
            mu,
            strict_interior: input.strict_interior,
            warnings: diag.warnings,
            k: input.transition,
            p: input.p,
            eta: input.eta,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n
    }
    pub fn transition(&self) -> &[f64] {
        &self.k
    }
    pub fn k(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }
    pub fn p(&self) -> &[f64] {
        &self.p
    }
    pub fn eta(&self) -> &[f64] {
        &self.eta
    }
    pub fn stationary(&self) -> &[f64] {
        &self.mu
    }
    /// `g` with `g - K g = 2p - 1` and `mu . g = 0`. Summed over the cookies
    /// consumed from state `R_1` until the chain sits at `R_{T+1}`, the
    /// drifts `2p(R_j) - 1` have mean `E[g(R_1) - g(R_{T+1})]`.
    pub fn drift_potential(&self) -> &[f64] {
        &self.potential
    }
    pub fn strict_interior(&self) -> bool {
        self.strict_interior
    }
    pub fn warnings(&self) -> &[SpecIssue] {
        &self.warnings
    }
    /// True when the state never leaves itself.
    pub fn is_absorbing(&self, i: usize) -> bool {
        self.absorbing[i]
    }
    /// `mu . p`.
    pub fn mean_right_probability(&self) -> f64 {
        self.mu.iter().zip(&self.p).map(|(m, p)| m * p).sum()
    }

    pub fn to_input(&self) -> SpecInput {
        SpecInput {
            n_states: self.n,
            transition: self.k.clone(),
            p: self.p.clone(),
            eta: self.eta.clone(),
            strict_interior: self.strict_interior,
            criticality_tolerance: None,
        }
    }

    /// State after `from` given a uniform.
    #[inline]
    pub fn step_state(&self, from: usize, u: f64) -> usize {
        let n = self.n;
        inverse_cdf(&self.cum[from * n..(from + 1) * n], u, &self.k[from * n..(from + 1) * n])
    }

    /// First-cookie state under `eta` given a uniform.
    #[inline]
    pub fn eta_state(&self, u: f64) -> usize {
        inverse_cdf(&self.eta_cum, u, &self.eta)
    }
}

/// Chain for the M-cookie stack `omega_1, ..., omega_M`
/// followed by fair coins: state `j` moves to `j+1`, the last state is a
/// fair absorbing state.
pub fn make_m_cookie_spec(omega: &[f64]) -> Result<CookieChainSpec> {
    if omega.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(Error::InvalidArgument("cookie strengths must lie in [0,1]"));
    }
    let m = omega.len();
    let n = m + 1;
    let mut k = vec![0.0; n * n];
    for j in 0..m {
        k[j * n + j + 1] = 1.0;
    }
    k[m * n + m] = 1.0;
    let mut p = omega.to_vec();
    p.push(0.5);
    let mut eta = vec![0.0; n];
    eta[0] = 1.0;
    let strict = omega.iter().all(|&w| w > 0.0 && w < 1.0);
    CookieChainSpec::new(SpecInput {
        n_states: n,
        transition: k,
        p,
        eta,
        strict_interior: strict,
        criticality_tolerance: None,
    })
}

/// `sum_j (2 omega_j - 1)`, the total drift of an M-cookie stack.
pub fn m_cookie_drift(omega: &[f64]) -> f64 {
    omega.iter().map(|w| 2.0 * w - 1.0).sum()
}

/// Per-site first-cookie states over a window; `None` marks a site whose
/// first cookie is drawn from the environment's first-cookie law.
#[derive(Clone, Debug, PartialEq)]
pub struct CookieSnapshot {
    pub lo: i64,
    pub states: Vec<Option<u16>>,
}

impl CookieSnapshot {
    pub fn hi(&self) -> i64 {
        self.lo + self.states.len() as i64 - 1
    }
    pub fn get(&self, x: i64) -> Option<u16> {
        let i = x - self.lo;
        if i < 0 {
            return None;
        }
        self.states.get(i as usize).copied().flatten()
    }
}

/// Law of the first cookie at fresh sites.
#[derive(Clone, Debug, PartialEq)]
pub enum FirstCookieLaw {
    Eta,
    Fixed(usize),
    Law(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SamplingMode {
    /// Every coin is read from the site stream; runs sharing a seed are
    /// pathwise identical.
    #[default]
    CoinByCoin,
    /// Runs inside an absorbing state are drawn from their negative binomial
    /// law in one shot. Same law, not pathwise coupled with coin-by-coin runs.
    Accelerated,
}

/// Which coin outcome a branching-like step counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    /// Count right steps (successes) until a number of left steps.
    Plus,
    /// Count left steps (failures) until a number of right steps.
    Minus,
}

/// Result of consuming a stack until a number of stopping coins.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct StackRun {
    /// Counted coins.
    pub count: u64,
    /// Coins consumed.
    pub trials: u64,
    /// Sum over consumed cookies of `2p - 1` (Plus) or `1 - 2p` (Minus).
    pub drift: f64,
}

#[derive(Clone, Copy, Debug, Default)]
struct SiteRecord {
    key: u64,
    consumed: u64,
    last: u16,
    ready: bool,
}

fn first_state_with(
    spec: &CookieChainSpec,
    first: &FirstCookieLaw,
    first_cum: &[f64],
    overrides: Option<&CookieSnapshot>,
    x: i64,
    key: u64,
) -> usize {
    if let Some(s) = overrides.and_then(|o| o.get(x)) {
        return s as usize;
    }
    let u = counter_uniform(key, 1, Tag::State);
    match first {
        FirstCookieLaw::Eta => spec.eta_state(u),
        FirstCookieLaw::Fixed(i) => *i,
        FirstCookieLaw::Law(w) => inverse_cdf(first_cum, u, w),
    }
}

/// Lazily realized cookie stacks on all of Z.
#[derive(Clone, Debug)]
pub struct CookieEnvironment {
    spec: Arc<CookieChainSpec>,
    seed: u64,
    mode: SamplingMode,
    first: FirstCookieLaw,
    first_cum: Vec<f64>,
    overrides: Option<CookieSnapshot>,
    sites: SiteVec<SiteRecord>,
}

impl CookieEnvironment {
    pub fn new(spec: Arc<CookieChainSpec>, seed: u64) -> Self {
        CookieEnvironment {
            spec,
            seed,
            mode: SamplingMode::CoinByCoin,
            first: FirstCookieLaw::Eta,
            first_cum: Vec::new(),
            overrides: None,
            sites: SiteVec::new(),
        }
    }

    pub fn with_sampling(mut self, mode: SamplingMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_first_cookie(mut self, law: FirstCookieLaw) -> Self {
        if let FirstCookieLaw::Law(w) = &law {
            self.first_cum = cumulative(w);
        }
        self.first = law;
        self
    }

    pub fn with_snapshot(mut self, snapshot: CookieSnapshot) -> Self {
        self.overrides = Some(snapshot);
        self
    }

    pub fn spec(&self) -> &CookieChainSpec {
        &self.spec
    }
    pub fn spec_arc(&self) -> &Arc<CookieChainSpec> {
        &self.spec
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn sampling(&self) -> SamplingMode {
        self.mode
    }

    /// Cookies consumed at `x` so far.
    pub fn consumed(&self, x: i64) -> u64 {
        self.sites.get(x).map_or(0, |r| r.consumed)
    }

    fn first_state(&self, x: i64, key: u64) -> usize {
        first_state_with(&self.spec, &self.first, &self.first_cum, self.overrides.as_ref(), x, key)
    }

    #[inline]
    fn state_after(&self, x: i64, rec: &SiteRecord) -> usize {
        let j = rec.consumed + 1;
        if j == 1 {
            self.first_state(x, rec.key)
        } else if self.spec.n == 1 {
            0
        } else {
            let last = rec.last as usize;
            if self.spec.absorbing[last] {
                last
            } else {
                self.spec.step_state(last, counter_uniform(rec.key, j, Tag::State))
            }
        }
    }

    #[inline]
    fn record(&mut self, x: i64) -> SiteRecord {
        let seed = self.seed;
        let rec = self.sites.get_mut(x);
        if !rec.ready {
            rec.key = site_key(seed, x);
            rec.ready = true;
        }
        *rec
    }

    /// State of the next unconsumed cookie at `x`.
    pub fn peek_state(&self, x: i64) -> usize {
        match self.sites.get(x) {
            Some(rec) if rec.ready => self.state_after(x, rec),
            _ => {
                let rec = SiteRecord { key: site_key(self.seed, x), ..Default::default() };
                self.state_after(x, &rec)
            }
        }
    }

    /// Consumes one cookie at `x`; returns its state and whether the walker
    /// steps right.
    #[inline]
    pub fn next_cookie(&mut self, x: i64) -> (usize, bool) {
        let seed = self.seed;
        let spec = &*self.spec;
        let rec = self.sites.get_mut(x);
        if !rec.ready {
            rec.key = site_key(seed, x);
            rec.ready = true;
        }
        let j = rec.consumed + 1;
        let state = if j == 1 {
            first_state_with(spec, &self.first, &self.first_cum, self.overrides.as_ref(), x, rec.key)
        } else if spec.n == 1 {
            0
        } else {
            let last = rec.last as usize;
            if spec.absorbing[last] {
                last
            } else {
                spec.step_state(last, counter_uniform(rec.key, j, Tag::State))
            }
        };
        let right = counter_uniform(rec.key, j, Tag::Coin) < spec.p[state];
        rec.consumed = j;
        rec.last = state as u16;
        (state, right)
    }

    /// State of the `k`-th cookie (1-based) at `x`, consumed or not.
    pub fn state_of(&self, x: i64, k: u64) -> usize {
        assert!(k >= 1, "cookie index is 1-based");
        let key = site_key(self.seed, x);
        let mut s = self.first_state(x, key);
        for j in 2..=k {
            if self.spec.n == 1 || self.spec.absorbing[s] {
                break;
            }
            s = self.spec.step_state(s, counter_uniform(key, j, Tag::State));
        }
        s
    }

    /// States of cookies `1..=k` at `x`; entry `j` is `state_of(x, j + 1)`.
    pub fn state_sequence(&self, x: i64, k: u64) -> Vec<usize> {
        let key = site_key(self.seed, x);
        let mut out = Vec::with_capacity(k as usize);
        if k == 0 {
            return out;
        }
        let mut s = self.first_state(x, key);
        out.push(s);
        for j in 2..=k {
            if self.spec.n > 1 && !self.spec.absorbing[s] {
                s = self.spec.step_state(s, counter_uniform(key, j, Tag::State));
            }
            out.push(s);
        }
        out
    }

    /// Consumes the stack at `x` until `target` stopping coins have been
    /// seen. Under [`Polarity::Plus`] left steps stop and right steps are
    /// counted; [`Polarity::Minus`] swaps the roles.
    pub fn run_stack(&mut self, x: i64, target: u64, polarity: Polarity) -> Result<StackRun> {
        let mut out = StackRun::default();
        if target == 0 {
            return Ok(out);
        }
        let mut rec = self.record(x);
        let spec = Arc::clone(&self.spec);
        let counted_is_right = polarity == Polarity::Plus;
        let sign = if counted_is_right { 1.0 } else { -1.0 };
        let mut stops = 0u64;
        while stops < target {
            let state = self.state_after(x, &rec);
            let j = rec.consumed + 1;
            if self.mode == SamplingMode::Accelerated && spec.absorbing[state] {
                let (count, trials) = self.negative_binomial(&rec, spec.p[state], target - stops, counted_is_right)?;
                out.count = out.count.checked_add(count).ok_or(Error::Overflow)?;
                out.trials = out.trials.checked_add(trials).ok_or(Error::Overflow)?;
                out.drift += sign * (2.0 * spec.p[state] - 1.0) * trials as f64;
                rec.consumed = rec.consumed.checked_add(trials).ok_or(Error::Overflow)?;
                rec.last = state as u16;
                break;
            }
            let right = counter_uniform(rec.key, j, Tag::Coin) < spec.p[state];
            rec.consumed = j;
            rec.last = state as u16;
            out.trials += 1;
            out.drift += sign * (2.0 * spec.p[state] - 1.0);
            if right == counted_is_right {
                out.count += 1;
            } else {
                stops += 1;
            }
            if out.trials > (1u64 << 62) {
                return Err(Error::NonTerminating("stack never produces a stopping coin"));
            }
        }
        *self.sites.get_mut(x) = rec;
        Ok(out)
    }

    fn negative_binomial(&self, rec: &SiteRecord, p_right: f64, stops: u64, counted_is_right: bool) -> Result<(u64, u64)> {
        let (p_count, p_stop) = if counted_is_right { (p_right, 1.0 - p_right) } else { (1.0 - p_right, p_right) };
        if p_stop == 0.0 {
            return Err(Error::NonTerminating("absorbing state never produces a stopping coin"));
        }
        if p_count == 0.0 {
            return Ok((0, stops));
        }
        let mut rng = Rng64::seed_from_u64(derive_seed(counter_word(rec.key, rec.consumed, Tag::Fast), &[stops]));
        let gamma = Gamma::new(stops as f64, p_count / p_stop).map_err(|_| Error::Overflow)?;
        let lambda: f64 = gamma.sample(&mut rng);
        let count = if lambda <= 0.0 {
            0
        } else {
            let poisson = Poisson::new(lambda).map_err(|_| Error::Overflow)?;
            let c: f64 = poisson.sample(&mut rng);
            if c >= 1.8e19 {
                return Err(Error::Overflow);
            }
            c as u64
        };
        Ok((count, count.checked_add(stops).ok_or(Error::Overflow)?))
    }

    /// First unconsumed cookie state at every site of `lo..=hi`; sites never
    /// visited are reported as `None`.
    pub fn remaining_first_cookies(&self, lo: i64, hi: i64) -> CookieSnapshot {
        let states = (lo..=hi)
            .map(|x| if self.consumed(x) == 0 { None } else { Some(self.peek_state(x) as u16) })
            .collect();
        CookieSnapshot { lo, states }
    }
}
