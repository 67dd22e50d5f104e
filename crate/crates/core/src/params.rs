//! Estimation of the limiting drift and variance parameters.
//!
//! For a single generation of `U+` started from `n` with first cookie in
//! state `i`:
//!
//! * `r+(i) = lim E[U_1 - n]`,
//! * `nu = lim Var(U_1) / n`,
//! * `pi+` is the limiting law of the state of the next cookie.
//!
//! `U-` gives `r-` and `pi-` the same way. The drift is estimated by the
//! conditional expectation `E[sum_j (2 p(R_j) - 1)]` over the consumed
//! cookies, which has the same mean as `U_1 - n` and much smaller variance.
//! Each quantity is measured at several `n` and extrapolated by a weighted
//! least-squares fit of `c0 + c1 / n`.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::cookie_model::{CookieChainSpec, CookieEnvironment, FirstCookieLaw, Polarity, SamplingMode};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::runner::ReplicateRunner;

const TAG_PARAMS: u64 = 0x7061_7261;

#[derive(Clone, Debug, PartialEq)]
pub struct EstimationConfig {
    pub levels: Vec<u64>,
    /// Replicates per (sign, first state, level).
    pub reps: u64,
    pub batches: usize,
    pub sampling: SamplingMode,
    /// Standardized residual of the `c0 + c1/n` fit above which the level
    /// estimates are declared non-convergent.
    pub convergence_sigmas: f64,
    /// Allowed disagreement, in combined standard errors, between the
    /// variance estimated from `U+` and from `U-`.
    pub mismatch_sigmas: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            levels: vec![1 << 10, 1 << 12, 1 << 14],
            reps: 32_000,
            batches: 32,
            sampling: SamplingMode::Accelerated,
            convergence_sigmas: 5.0,
            mismatch_sigmas: 5.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn new(value: f64, se: f64) -> Self {
        Estimate { value, se }
    }
    /// `|value - target| / se`, infinite when the error is zero but the
    /// value is off.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.value - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.se
        }
    }
}

/// One generation of `U+` (Plus) or `U-` (Minus) from `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenerationSample {
    pub count: u64,
    /// `count - n` with the coin noise and the chain noise both averaged
    /// out: `+-(g(R_1) - g(R_{T+1}))` for the drift potential `g`. Same
    /// mean as `count - n`.
    pub drift: f64,
    pub next_state: usize,
}

/// Runs one generation with a fixed first cookie state.
pub fn sample_generation(
    spec: &Arc<CookieChainSpec>,
    polarity: Polarity,
    first_state: usize,
    n: u64,
    seed: u64,
    sampling: SamplingMode,
) -> Result<GenerationSample> {
    let mut env = CookieEnvironment::new(spec.clone(), seed)
        .with_sampling(sampling)
        .with_first_cookie(FirstCookieLaw::Fixed(first_state));
    let run = env.run_stack(0, n, polarity)?;
    let next_state = env.peek_state(0);
    let g = spec.drift_potential();
    let sign = if polarity == Polarity::Plus { 1.0 } else { -1.0 };
    Ok(GenerationSample { count: run.count, drift: sign * (g[first_state] - g[next_state]), next_state })
}

/// Per-level estimates for one sign.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelEstimates {
    pub n: u64,
    pub r: Vec<Estimate>,
    pub nu: Estimate,
    pub pi: Vec<Estimate>,
    /// Per-batch `pi` vectors, pooled over first states.
    pub pi_batches: Vec<Vec<f64>>,
}

fn batch_summary(values: &[f64]) -> Estimate {
    let (m, se) = crate::stats::mean_se(values);
    Estimate::new(m, if se.is_nan() { 0.0 } else { se })
}

fn estimate_level<R: ReplicateRunner>(
    spec: &Arc<CookieChainSpec>,
    polarity: Polarity,
    n: u64,
    cfg: &EstimationConfig,
    seed: u64,
    runner: &R,
) -> Result<LevelEstimates> {
    let states = spec.n_states();
    let b = cfg.batches;
    let sign_tag = match polarity {
        Polarity::Plus => 1,
        Polarity::Minus => 2,
    };
    let mut r = Vec::with_capacity(states);
    let mut nu_batches = vec![0.0; b];
    let mut pi_counts = vec![vec![0u64; states]; b];
    let mut batch_sizes = vec![0u64; b];
    for i in 0..states {
        let samples: Vec<Result<GenerationSample>> = runner.map(cfg.reps, |k| {
            let s = derive_seed(seed, &[TAG_PARAMS, sign_tag, i as u64, n, k]);
            sample_generation(spec, polarity, i, n, s, cfg.sampling)
        });
        let samples: Vec<GenerationSample> = samples.into_iter().collect::<Result<_>>()?;
        let per = samples.len() / b;
        let mut drift_means = Vec::with_capacity(b);
        for (j, chunk) in samples.chunks(per).take(b).enumerate() {
            let c = chunk.len() as f64;
            drift_means.push(chunk.iter().map(|s| s.drift).sum::<f64>() / c);
            let counts: Vec<f64> = chunk.iter().map(|s| s.count as f64).collect();
            nu_batches[j] += crate::stats::variance(&counts) / n as f64 / states as f64;
            for s in chunk {
                pi_counts[j][s.next_state] += 1;
            }
            batch_sizes[j] += chunk.len() as u64;
        }
        r.push(batch_summary(&drift_means));
    }
    let pi_batches: Vec<Vec<f64>> = pi_counts
        .iter()
        .zip(&batch_sizes)
        .map(|(c, &t)| c.iter().map(|&x| x as f64 / t as f64).collect())
        .collect();
    let pi = (0..states)
        .map(|s| batch_summary(&pi_batches.iter().map(|v| v[s]).collect::<Vec<_>>()))
        .collect();
    Ok(LevelEstimates { n, r, nu: batch_summary(&nu_batches), pi, pi_batches })
}

/// Weighted least-squares fit of `y = c0 + c1 / n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extrapolation {
    pub c0: Estimate,
    pub c1: f64,
    /// Largest standardized residual.
    pub worst_residual: f64,
}

pub fn extrapolate(levels: &[u64], values: &[Estimate]) -> Extrapolation {
    if levels.len() == 1 {
        return Extrapolation { c0: values[0], c1: 0.0, worst_residual: 0.0 };
    }
    let max_se = values.iter().map(|e| e.se).fold(0.0, f64::max);
    let floor = (max_se * 1e-6).max(1e-15);
    let w: Vec<f64> = values.iter().map(|e| 1.0 / e.se.max(floor).powi(2)).collect();
    let x: Vec<f64> = levels.iter().map(|&n| 1.0 / n as f64).collect();
    let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..levels.len() {
        s0 += w[k];
        s1 += w[k] * x[k];
        s2 += w[k] * x[k] * x[k];
        t0 += w[k] * values[k].value;
        t1 += w[k] * x[k] * values[k].value;
    }
    let det = s0 * s2 - s1 * s1;
    let c0 = (s2 * t0 - s1 * t1) / det;
    let c1 = (s0 * t1 - s1 * t0) / det;
    let var0 = s2 / det;
    let worst_residual = (0..levels.len())
        .map(|k| (values[k].value - c0 - c1 * x[k]).abs() * libm::sqrt(w[k]))
        .fold(0.0, f64::max);
    Extrapolation { c0: Estimate::new(c0, libm::sqrt(var0)), c1, worst_residual }
}

/// Estimates for one sign.
#[derive(Clone, Debug, PartialEq)]
pub struct SignEstimates {
    pub levels: Vec<LevelEstimates>,
    pub r: Vec<Estimate>,
    pub nu: Estimate,
    /// Taken from the largest level.
    pub pi: Vec<Estimate>,
}

fn estimate_sign<R: ReplicateRunner>(
    spec: &Arc<CookieChainSpec>,
    polarity: Polarity,
    cfg: &EstimationConfig,
    seed: u64,
    runner: &R,
) -> Result<SignEstimates> {
    let levels: Vec<LevelEstimates> =
        cfg.levels.iter().map(|&n| estimate_level(spec, polarity, n, cfg, seed, runner)).collect::<Result<_>>()?;
    let check = |what: String, e: Extrapolation| -> Result<Estimate> {
        if e.worst_residual > cfg.convergence_sigmas {
            return Err(Error::NonConvergent(format!("{what}: standardized residual {:.2}", e.worst_residual)));
        }
        Ok(e.c0)
    };
    let sign = if polarity == Polarity::Plus { "+" } else { "-" };
    let mut r = Vec::new();
    for i in 0..spec.n_states() {
        let series: Vec<Estimate> = levels.iter().map(|l| l.r[i]).collect();
        r.push(check(format!("r{sign}({i})"), extrapolate(&cfg.levels, &series))?);
    }
    let series: Vec<Estimate> = levels.iter().map(|l| l.nu).collect();
    let nu = check(format!("nu from U{sign}"), extrapolate(&cfg.levels, &series))?;
    let pi = levels.last().unwrap().pi.clone();
    Ok(SignEstimates { levels, r, nu, pi })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recurrence {
    TransientRight,
    TransientLeft,
    Recurrent,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Classification {
    pub class: Recurrence,
    /// Some `theta` lies within the error of 1.
    pub near_boundary: bool,
}

/// Recurrence class from `theta+` and `theta-`. Since
/// `theta+ + theta- = 1 - 2/nu < 1`, a pair summing to 1 or more is
/// rejected as inconsistent.
pub fn classify(theta_plus: f64, theta_minus: f64, err: f64) -> Result<Classification> {
    if !(theta_plus.is_finite() && theta_minus.is_finite()) {
        return Err(Error::DegenerateParameter("theta must be finite"));
    }
    if theta_plus + theta_minus >= 1.0 {
        return Err(Error::DegenerateParameter("theta+ + theta- must be below 1"));
    }
    let class = if theta_plus > 1.0 {
        Recurrence::TransientRight
    } else if theta_minus > 1.0 {
        Recurrence::TransientLeft
    } else {
        Recurrence::Recurrent
    };
    let near_boundary = (theta_plus - 1.0).abs() < err || (theta_minus - 1.0).abs() < err;
    Ok(Classification { class, near_boundary })
}

/// `theta = 2 (law . r) / nu`.
pub fn compute_theta(r: &[f64], law: &[f64], nu: f64) -> f64 {
    2.0 * law.iter().zip(r).map(|(a, b)| a * b).sum::<f64>() / nu
}

/// Total drift of a deterministic M-cookie stack; equals `theta+` and
/// `-theta-` for that stack.
pub fn delta_m_cookie(omega: &[f64]) -> f64 {
    crate::cookie_model::m_cookie_drift(omega)
}

fn theta_estimate(r: &[Estimate], law: &[f64], nu: Estimate) -> Estimate {
    let rv: Vec<f64> = r.iter().map(|e| e.value).collect();
    let theta = compute_theta(&rv, law, nu.value);
    let k = 2.0 / nu.value;
    let var_r: f64 = law.iter().zip(r).map(|(l, e)| l * l * e.se * e.se).sum::<f64>() * k * k;
    let var_nu = (theta / nu.value).powi(2) * nu.se * nu.se;
    Estimate::new(theta, libm::sqrt(var_r + var_nu))
}

fn theta_at_pi(s: &SignEstimates, nu: Estimate) -> Estimate {
    let pi: Vec<f64> = s.pi.iter().map(|e| e.value).collect();
    let base = theta_estimate(&s.r, &pi, nu);
    let rv: Vec<f64> = s.r.iter().map(|e| e.value).collect();
    let dots: Vec<f64> = s.levels.last().unwrap().pi_batches.iter().map(|p| compute_theta(&rv, p, nu.value)).collect();
    let (_, se_pi) = crate::stats::mean_se(&dots);
    let se_pi = if se_pi.is_nan() { 0.0 } else { se_pi };
    Estimate::new(base.value, libm::sqrt(base.se * base.se + se_pi * se_pi))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterEstimates {
    pub plus: SignEstimates,
    pub minus: SignEstimates,
    /// Average of the two variance estimates.
    pub nu: Estimate,
    pub theta_plus: Estimate,
    pub theta_minus: Estimate,
    /// `theta+` evaluated at `pi+`; zero in the limit.
    pub theta_plus_at_pi: Estimate,
    /// `theta-` evaluated at `pi-`; zero in the limit.
    pub theta_minus_at_pi: Estimate,
    /// `sum_i eta_i (r+(i) + r-(i)) - (nu/2 - 1)`; zero in the limit.
    pub identity_residual: Estimate,
    pub classification: Option<Classification>,
}

impl ParameterEstimates {
    pub fn r_plus(&self) -> Vec<f64> {
        self.plus.r.iter().map(|e| e.value).collect()
    }
    pub fn r_minus(&self) -> Vec<f64> {
        self.minus.r.iter().map(|e| e.value).collect()
    }
    /// `sqrt(1 - theta+ - theta-)`, `NaN` when the sum exceeds 1.
    pub fn scaling_constant(&self) -> f64 {
        libm::sqrt(1.0 - self.theta_plus.value - self.theta_minus.value)
    }
}

/// Estimates `r+-`, `nu`, `pi+-` and `theta+-` for a spec.
pub fn estimate_parameters<R: ReplicateRunner>(
    spec: &Arc<CookieChainSpec>,
    cfg: &EstimationConfig,
    seed: u64,
    runner: &R,
) -> Result<ParameterEstimates> {
    if cfg.levels.is_empty() || cfg.batches < 2 || cfg.reps < 2 * cfg.batches as u64 {
        return Err(Error::InvalidArgument("need levels, at least two batches and two replicates per batch"));
    }
    let plus = estimate_sign(spec, Polarity::Plus, cfg, seed, runner)?;
    let minus = estimate_sign(spec, Polarity::Minus, cfg, seed, runner)?;
    let gap = (plus.nu.value - minus.nu.value).abs();
    let se = libm::sqrt(plus.nu.se * plus.nu.se + minus.nu.se * minus.nu.se);
    if gap > cfg.mismatch_sigmas * se && gap > 1e-12 {
        return Err(Error::PlusMinusMismatch { plus: plus.nu.value, minus: minus.nu.value });
    }
    let nu = Estimate::new(0.5 * (plus.nu.value + minus.nu.value), 0.5 * se);
    let eta = spec.eta();
    let theta_plus = theta_estimate(&plus.r, eta, nu);
    let theta_minus = theta_estimate(&minus.r, eta, nu);
    let theta_plus_at_pi = theta_at_pi(&plus, nu);
    let theta_minus_at_pi = theta_at_pi(&minus, nu);
    let mut id = 0.0;
    let mut id_var = 0.0;
    for (i, &e) in eta.iter().enumerate() {
        id += e * (plus.r[i].value + minus.r[i].value);
        id_var += e * e * (plus.r[i].se.powi(2) + minus.r[i].se.powi(2));
    }
    id -= nu.value / 2.0 - 1.0;
    id_var += 0.25 * nu.se * nu.se;
    let err = 4.0 * theta_plus.se.max(theta_minus.se);
    let classification = classify(theta_plus.value, theta_minus.value, err).ok();
    Ok(ParameterEstimates {
        plus,
        minus,
        nu,
        theta_plus,
        theta_minus,
        theta_plus_at_pi,
        theta_minus_at_pi,
        identity_residual: Estimate::new(id, libm::sqrt(id_var)),
        classification,
    })
}
