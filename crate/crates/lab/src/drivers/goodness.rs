//! Regularity of the remaining first cookies around the walk.
//!
//! At every step before the walk leaves `[-K sqrt n, K sqrt n]`, each window
//! of `floor(n^(1/8))` consecutive sites in `[X, S]` must average `r+` to
//! within `1 / ln sqrt(n)` of 0, and each window in `[I, X]` to within the
//! same bound of `nu/2 - 1`. Intervals shorter than a window hold vacuously.

use std::collections::BTreeSet;

use erw_core::cookie_model::CookieEnvironment;
use erw_core::erw::{simulate, StopRule, WalkOptions};
use erw_core::rng::derive_seed;
use erw_core::runner::ReplicateRunner;
use erw_core::stats::wilson_ci;

use super::parameters::resolve;
use super::Context;
use crate::error::{config_err, LabResult};
use crate::output::Outcome;
use crate::report::{num, Check, Table, Verdict};

const TAG: u64 = 0x676f_6f64;
/// Fewer pooled sites than this make the distance to `pi+` inconclusive.
const MIN_TV_SITES: u64 = 200;

struct Windows {
    width: usize,
    scale: f64,
    threshold: f64,
    rho: f64,
    sums: Vec<f64>,
    bad: BTreeSet<usize>,
}

impl Windows {
    fn new(values: &[f64], width: usize, scale: f64, threshold: f64, rho: f64) -> Self {
        let n = values.len() + 1 - width;
        let mut w = Windows { width, scale, threshold, rho, sums: vec![0.0; n], bad: BTreeSet::new() };
        for j in 0..n {
            w.refresh(values, j);
        }
        w
    }

    fn refresh(&mut self, values: &[f64], j: usize) {
        let s: f64 = values[j..j + self.width].iter().sum();
        self.sums[j] = s;
        if (s / self.scale - self.rho).abs() > self.threshold {
            self.bad.insert(j);
        } else {
            self.bad.remove(&j);
        }
    }

    /// Recomputes the windows covering index `i`.
    fn touch(&mut self, values: &[f64], i: usize) {
        let lo = (i + 1).saturating_sub(self.width);
        let hi = i.min(self.sums.len() - 1);
        for j in lo..=hi {
            self.refresh(values, j);
        }
    }

    /// Whether every window inside `lo..=hi` is good.
    fn good(&self, lo: usize, hi: usize) -> bool {
        if hi + 1 < lo + self.width {
            return true;
        }
        self.bad.range(lo..=hi + 1 - self.width).next().is_none()
    }
}

struct Replicate {
    good: bool,
    first_bad: Option<u64>,
    steps: u64,
    /// First-cookie states right of the walk at the exit time.
    states: Vec<u64>,
}

pub fn run(ctx: &Context) -> LabResult<Outcome> {
    let sec = &ctx.config.goodness;
    let p = resolve(ctx)?;
    let (spec, _) = ctx.spec()?;
    let r_plus = p
        .r_plus
        .clone()
        .ok_or_else(|| config_err("goodness needs r+ per state: set parameters.r_plus or omit parameters to estimate them"))?;
    if r_plus.len() != spec.n_states() {
        return Err(config_err(format!("r_plus has {} entries for {} states", r_plus.len(), spec.n_states())));
    }
    let n = sec.n as f64;
    let m = n.sqrt();
    if !(m > 1.0) {
        return Err(config_err("goodness needs n > 1"));
    }
    let m_alpha = n.powf(0.125);
    let width = m_alpha.floor() as usize;
    let threshold = 1.0 / m.ln();
    let half = ((sec.big_k * m).floor() as i64).max(1);
    let size = (2 * half + 1) as usize;
    let fresh: f64 = spec.eta().iter().zip(&r_plus).map(|(e, r)| e * r).sum();
    let rho_left = p.nu / 2.0 - 1.0;
    let n_states = spec.n_states();
    let stop = StopRule::Exit { lower: Some(-half), upper: Some(half) };
    let options = WalkOptions { record_path: true, ..WalkOptions::default() };

    let reps = ctx.pool.map(sec.replicates, |r| -> LabResult<Replicate> {
        let env = CookieEnvironment::new(spec.clone(), derive_seed(ctx.seed, &[TAG, r]));
        let t = simulate(env, stop, options)?;
        let path = t.positions.as_deref().unwrap_or_default();
        let idx = |x: i64| (x + half) as usize;
        let seqs: Vec<Vec<usize>> = (-half..=half).map(|x| t.env.state_sequence(x, t.local_time(x) + 1)).collect();

        let mut states = vec![0u64; n_states];
        let (x_end, s_end) = (t.final_position, t.max);
        for x in x_end + 1..=s_end {
            if t.left_steps(x) >= sec.min_left_steps {
                states[seqs[idx(x)][t.local_time(x) as usize]] += 1;
            }
        }

        let mut first_bad = None;
        if width <= size {
            let mut visits = vec![0usize; size];
            let mut values = vec![fresh; size];
            let mut right = Windows::new(&values, width, m_alpha, threshold, 0.0);
            let mut left = Windows::new(&values, width, m_alpha, threshold, rho_left);
            let (mut lo, mut hi) = (path[0], path[0]);
            for (k, &x) in path.iter().enumerate() {
                lo = lo.min(x);
                hi = hi.max(x);
                if !(right.good(idx(x), idx(hi)) && left.good(idx(lo), idx(x))) {
                    first_bad = Some(k as u64);
                    break;
                }
                if k + 1 < path.len() {
                    let i = idx(x);
                    visits[i] += 1;
                    values[i] = r_plus[seqs[i][visits[i]]];
                    right.touch(&values, i);
                    left.touch(&values, i);
                }
            }
        }
        Ok(Replicate { good: first_bad.is_none(), first_bad, steps: t.steps, states })
    });
    let reps: Vec<Replicate> = reps.into_iter().collect::<LabResult<_>>()?;

    let mut b = ctx.builder("verify-goodness");
    b.parameters(p.report());
    let hits = reps.iter().filter(|r| r.good).count() as u64;
    let total = reps.len() as u64;
    let freq = hits as f64 / total.max(1) as f64;
    b.check(
        Check::lower_bound("environment good up to the exit time", "frequency", total, freq, sec.target_frequency, true)
            .with_note(format!("window {width}, threshold {threshold}, interval [-{half}, {half}]")),
    );
    if total > 0 {
        let ci = wilson_ci(hits, total, 0.99)?;
        b.value("frequency_ci99", [ci.lo, ci.hi]);
    }

    let mut pooled = vec![0u64; n_states];
    for r in &reps {
        for (c, s) in pooled.iter_mut().zip(&r.states) {
            *c += s;
        }
    }
    let sites: u64 = pooled.iter().sum();
    let mut dist = Table::new("first_cookies", &["state", "count", "frequency", "pi_plus"]);
    match &p.pi_plus {
        Some(pi) if sites > 0 => {
            let tv: f64 = 0.5 * pooled.iter().zip(pi).map(|(&c, &q)| (c as f64 / sites as f64 - q).abs()).sum::<f64>();
            let mut check =
                Check::upper_bound("first cookies right of the walk against pi+", "total_variation", sites, tv, sec.tv_tolerance, false);
            if sites < MIN_TV_SITES {
                check.verdict = Verdict::Inconclusive;
                check = check.with_note(format!("only {sites} sites; at least {MIN_TV_SITES} needed for a verdict"));
            }
            b.check(check);
            for (i, &c) in pooled.iter().enumerate() {
                dist.push(vec![i.to_string(), c.to_string(), num(c as f64 / sites as f64), num(pi[i])]);
            }
        }
        _ => b.value("first_cookie_sites", sites),
    }

    let mut per = Table::new("replicates", &["replicate", "steps", "good", "first_bad_step"]);
    for (i, r) in reps.iter().enumerate() {
        per.push(vec![i.to_string(), r.steps.to_string(), r.good.to_string(), r.first_bad.map_or(String::new(), |k| k.to_string())]);
    }
    Ok(Outcome { report: b.finish()?, tables: vec![per, dist] })
}
