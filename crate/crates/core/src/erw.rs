//! The excited random walk.
//!
//! On its `j`-th visit to `x` the walker consumes cookie `j` of the stack at
//! `x` and steps right with probability `p(R^x_j)`. All randomness lives in
//! the [`CookieEnvironment`], so a walk is a deterministic function of the
//! environment seed.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::blp::{run_blp, BlpKind, Direction, Window};
use crate::cookie_model::{CookieChainSpec, CookieEnvironment, CookieSnapshot};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::sites::SiteVec;
use crate::stats::{wilson_ci, Interval};

pub const DEFAULT_STEP_CAP: u64 = 1_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Exactly `n` steps.
    FixedSteps(u64),
    /// First visit to `lower` or `upper` (either may be absent).
    Exit { lower: Option<i64>, upper: Option<i64> },
    /// The `k`-th displacement of `floor(epsilon sqrt(n))` from the last
    /// mesoscopic position.
    Mesoscopic { k: usize, epsilon: f64, n: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkOptions {
    pub step_cap: u64,
    pub record_path: bool,
    /// Replace every excursion above this level by a right step and an
    /// immediate return. Local times and cookies at sites at or below the
    /// level are unaffected, provided the walk returns from every excursion.
    /// `steps` then counts each collapsed excursion as two steps.
    pub collapse_above: Option<i64>,
}

impl Default for WalkOptions {
    fn default() -> Self {
        WalkOptions { step_cap: DEFAULT_STEP_CAP, record_path: false, collapse_above: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    FixedSteps,
    HitLower,
    HitUpper,
    Mesoscopic,
}

/// Times at which the walk has moved `floor(epsilon sqrt(n))` away from its
/// previous recorded position.
#[derive(Clone, Debug, PartialEq)]
pub struct MesoscopicSchedule {
    pub epsilon: f64,
    pub n: u64,
    pub scale: u64,
    /// `T_0 = 0, T_1, ...`.
    pub times: Vec<u64>,
    /// Direction of each displacement.
    pub signs: Vec<i8>,
    /// `X_{T_k} / scale`.
    pub embedded: Vec<i64>,
}

/// Mesoscopic scale `floor(epsilon sqrt(n))`.
pub fn mesoscopic_scale(epsilon: f64, n: u64) -> Result<u64> {
    if !(epsilon > 0.0) || n == 0 {
        return Err(Error::InvalidArgument("epsilon and n must be positive"));
    }
    let h = libm::floor(epsilon * libm::sqrt(n as f64));
    if h < 1.0 {
        return Err(Error::InvalidArgument("epsilon sqrt(n) is below one step"));
    }
    Ok(h as u64)
}

#[derive(Clone, Debug)]
struct MesoTracker {
    sched: MesoscopicSchedule,
    anchor: i64,
}

impl MesoTracker {
    fn new(epsilon: f64, n: u64, start: i64) -> Result<Self> {
        let scale = mesoscopic_scale(epsilon, n)?;
        let s = scale as i64;
        Ok(MesoTracker {
            sched: MesoscopicSchedule {
                epsilon,
                n,
                scale,
                times: alloc::vec![0],
                signs: Vec::new(),
                embedded: alloc::vec![start.div_euclid(s)],
            },
            anchor: start,
        })
    }

    #[inline]
    fn observe(&mut self, t: u64, x: i64) {
        let d = x - self.anchor;
        if d.unsigned_abs() == self.sched.scale {
            self.sched.times.push(t);
            self.sched.signs.push(if d > 0 { 1 } else { -1 });
            let last = *self.sched.embedded.last().unwrap();
            self.sched.embedded.push(last + if d > 0 { 1 } else { -1 });
            self.anchor = x;
        }
    }

    fn count(&self) -> usize {
        self.sched.times.len() - 1
    }
}

#[derive(Clone, Debug)]
pub struct WalkTrajectory {
    /// `X_0, X_1, ...` when recorded.
    pub positions: Option<Vec<i64>>,
    /// Right and left steps taken from each site.
    pub edges: SiteVec<(u64, u64)>,
    pub steps: u64,
    pub final_position: i64,
    pub min: i64,
    pub max: i64,
    pub reason: StopReason,
    pub mesoscopic: Option<MesoscopicSchedule>,
    pub env: CookieEnvironment,
}

impl WalkTrajectory {
    /// `L(n, x)`: visits to `x` before the final time.
    pub fn local_time(&self, x: i64) -> u64 {
        let (r, l) = self.edges.value(x);
        r + l
    }
    pub fn right_steps(&self, x: i64) -> u64 {
        self.edges.value(x).0
    }
    pub fn left_steps(&self, x: i64) -> u64 {
        self.edges.value(x).1
    }

    /// Running minimum and maximum along the recorded path.
    pub fn running_extrema(&self) -> Result<(Vec<i64>, Vec<i64>)> {
        let path = self.positions.as_ref().ok_or(Error::InvalidArgument("walk path was not recorded"))?;
        let mut lo = Vec::with_capacity(path.len());
        let mut hi = Vec::with_capacity(path.len());
        let (mut a, mut b) = (path[0], path[0]);
        for &x in path {
            a = a.min(x);
            b = b.max(x);
            lo.push(a);
            hi.push(b);
        }
        Ok((lo, hi))
    }
}

/// Runs the walk from 0 in `env` until the stop rule fires.
pub fn simulate(mut env: CookieEnvironment, stop: StopRule, options: WalkOptions) -> Result<WalkTrajectory> {
    let mut x = 0i64;
    let mut edges: SiteVec<(u64, u64)> = SiteVec::new();
    let mut path = if options.record_path { Some(alloc::vec![0i64]) } else { None };
    let mut steps = 0u64;
    let (mut min, mut max) = (0i64, 0i64);
    let (fixed, lower, upper) = match stop {
        StopRule::FixedSteps(n) => (Some(n), None, None),
        StopRule::Exit { lower, upper } => (None, lower, upper),
        StopRule::Mesoscopic { .. } => (None, None, None),
    };
    let mut meso = match stop {
        StopRule::Mesoscopic { k, epsilon, n } => {
            if k == 0 {
                return Err(Error::InvalidArgument("mesoscopic count must be positive"));
            }
            Some((k, MesoTracker::new(epsilon, n, 0)?))
        }
        _ => None,
    };
    if let (Some(a), Some(b)) = (lower, upper) {
        if a >= b {
            return Err(Error::InvalidArgument("exit interval is empty"));
        }
    }
    let collapse = options.collapse_above.unwrap_or(i64::MAX);
    let limit = fixed.unwrap_or(u64::MAX).min(options.step_cap);
    let (lo_stop, hi_stop) = (lower.unwrap_or(i64::MIN), upper.unwrap_or(i64::MAX));
    let reason = loop {
        if x == lo_stop {
            break StopReason::HitLower;
        }
        if x == hi_stop {
            break StopReason::HitUpper;
        }
        if steps >= limit {
            if fixed.is_some_and(|n| steps >= n) {
                break StopReason::FixedSteps;
            }
            return Err(Error::StepBudgetExceeded { cap: options.step_cap });
        }
        if let Some((k, t)) = &meso {
            if t.count() >= *k {
                break StopReason::Mesoscopic;
            }
        }
        let (_, right) = env.next_cookie(x);
        let e = edges.get_mut(x);
        if right {
            e.0 += 1;
            if x >= collapse {
                edges.get_mut(x + 1).1 += 1;
                steps += 2;
                max = max.max(x + 1);
                if let Some(p) = path.as_mut() {
                    p.push(x + 1);
                    p.push(x);
                }
                continue;
            }
            x += 1;
            max = max.max(x);
        } else {
            e.1 += 1;
            x -= 1;
            min = min.min(x);
        }
        steps += 1;
        if let Some(p) = path.as_mut() {
            p.push(x);
        }
        if let Some((_, t)) = meso.as_mut() {
            t.observe(steps, x);
        }
    };
    Ok(WalkTrajectory {
        positions: path,
        edges,
        steps,
        final_position: x,
        min,
        max,
        reason,
        mesoscopic: meso.map(|(_, t)| t.sched),
        env,
    })
}

/// First `k` mesoscopic times of a recorded path.
pub fn mesoscopic_times(traj: &WalkTrajectory, epsilon: f64, n: u64, k: usize) -> Result<MesoscopicSchedule> {
    let path = traj.positions.as_ref().ok_or(Error::InvalidArgument("walk path was not recorded"))?;
    let mut t = MesoTracker::new(epsilon, n, path[0])?;
    for (j, &x) in path.iter().enumerate().skip(1) {
        if t.count() >= k {
            break;
        }
        t.observe(j as u64, x);
    }
    if t.count() < k {
        return Err(Error::InsufficientPath { needed: k, found: t.count() });
    }
    Ok(t.sched)
}

/// First unconsumed cookie state at each site of `[I_t, S_t]` after `t`
/// steps of a recorded walk. Sites not yet consumed are `None`.
pub fn remaining_first_cookies(traj: &WalkTrajectory, t: usize) -> Result<CookieSnapshot> {
    let path = traj.positions.as_ref().ok_or(Error::InvalidArgument("walk path was not recorded"))?;
    if t >= path.len() {
        return Err(Error::InvalidArgument("time index beyond the recorded path"));
    }
    let lo = *path[..=t].iter().min().unwrap();
    let hi = *path[..=t].iter().max().unwrap();
    let mut visits = alloc::vec![0u64; (hi - lo + 1) as usize];
    for &x in &path[..t] {
        visits[(x - lo) as usize] += 1;
    }
    let states = visits
        .iter()
        .enumerate()
        .map(|(i, &v)| if v == 0 { None } else { Some(traj.env.state_of(lo + i as i64, v + 1) as u16) })
        .collect();
    Ok(CookieSnapshot { lo, states })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoodnessResult {
    pub good: bool,
    /// Largest `|m^-alpha * window sum - rho|` over all windows.
    pub worst_deviation: f64,
    /// Offset of the worst window within the interval.
    pub worst_start: usize,
    pub threshold: f64,
}

/// Checks every window of `floor(m_alpha)` consecutive values against
/// `|sum / m_alpha - rho| <= 1 / ln m`.
pub fn goodness_of_values(values: &[f64], m_alpha: f64, rho: f64, m: f64) -> Result<GoodnessResult> {
    if !(m > 1.0) || !(m_alpha >= 1.0) {
        return Err(Error::InvalidArgument("need m > 1 and m_alpha >= 1"));
    }
    let w = libm::floor(m_alpha) as usize;
    if w > values.len() {
        return Err(Error::WindowTooLong { window: w, interval: values.len() });
    }
    let threshold = 1.0 / libm::log(m);
    let mut sum: f64 = values[..w].iter().sum();
    let mut worst = (sum / m_alpha - rho).abs();
    let mut worst_start = 0;
    for start in 1..=values.len() - w {
        sum += values[start + w - 1] - values[start - 1];
        let d = (sum / m_alpha - rho).abs();
        if d > worst {
            worst = d;
            worst_start = start;
        }
    }
    Ok(GoodnessResult { good: worst <= threshold, worst_deviation: worst, worst_start, threshold })
}

/// [`goodness_of_values`] on a snapshot over `lo..=hi`, reading `r_plus` per
/// state and `fresh` at sites whose first cookie is still drawn from the
/// initial law.
pub fn goodness_check(
    snapshot: &CookieSnapshot,
    lo: i64,
    hi: i64,
    r_plus: &[f64],
    fresh: f64,
    m_alpha: f64,
    rho: f64,
    m: f64,
) -> Result<GoodnessResult> {
    if hi < lo {
        return Err(Error::InvalidArgument("empty interval"));
    }
    let values: Vec<f64> = (lo..=hi).map(|x| snapshot.get(x).map_or(fresh, |s| r_plus[s as usize])).collect();
    goodness_of_values(&values, m_alpha, rho, m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LiftGroundKind {
    LiftingLeft,
    LiftingRight,
    GroundingLeft,
    GroundingRight,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiftGroundEstimate {
    pub successes: u64,
    pub reps: u64,
    pub estimate: f64,
    pub ci: Interval,
    pub target: f64,
    /// Lower confidence bound at least `1 - epsilon^3`.
    pub holds: bool,
}

/// Monte Carlo probability that a `V` process from 0 reaches `x`
/// (lifting) or a `U` process from `floor(x)` dies out (grounding) within
/// `hi - lo` generations, using the snapshot's first cookies on `lo..=hi`.
#[allow(clippy::too_many_arguments)]
pub fn lifting_grounding_estimate(
    spec: Arc<CookieChainSpec>,
    snapshot: &CookieSnapshot,
    kind: LiftGroundKind,
    x: f64,
    epsilon: f64,
    reps: u64,
    seed: u64,
    confidence: f64,
) -> Result<LiftGroundEstimate> {
    if reps == 0 || !(x >= 0.0) {
        return Err(Error::InvalidArgument("need reps > 0 and x >= 0"));
    }
    let window = Window::new(snapshot.lo, snapshot.hi())?;
    let horizon = window.len() - 1;
    let (blp, init) = match kind {
        LiftGroundKind::LiftingLeft => (BlpKind::VPlus, 0),
        LiftGroundKind::LiftingRight => (BlpKind::VMinus, 0),
        LiftGroundKind::GroundingLeft => (BlpKind::UPlus, libm::floor(x) as u64),
        LiftGroundKind::GroundingRight => (BlpKind::UMinus, libm::floor(x) as u64),
    };
    let direction: Direction = blp.direction();
    let mut successes = 0u64;
    for r in 0..reps {
        let mut env = CookieEnvironment::new(spec.clone(), derive_seed(seed, &[r])).with_snapshot(snapshot.clone());
        let t = run_blp(&mut env, blp, init, window, direction)?;
        let hit = match kind {
            LiftGroundKind::LiftingLeft | LiftGroundKind::LiftingRight => {
                t.values.iter().position(|&z| z as f64 >= x).is_some_and(|i| i <= horizon)
            }
            _ => t.absorption_index.is_some_and(|i| i <= horizon),
        };
        successes += hit as u64;
    }
    let ci = wilson_ci(successes, reps, confidence)?;
    let target = 1.0 - epsilon * epsilon * epsilon;
    Ok(LiftGroundEstimate {
        successes,
        reps,
        estimate: successes as f64 / reps as f64,
        ci,
        target,
        holds: ci.lo >= target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cookie_model::make_m_cookie_spec;
    use alloc::vec;

    fn fair() -> Arc<CookieChainSpec> {
        Arc::new(make_m_cookie_spec(&[]).unwrap())
    }

    #[test]
    fn path_invariants() {
        let env = CookieEnvironment::new(Arc::new(make_m_cookie_spec(&[0.9, 0.2]).unwrap()), 3);
        let t = simulate(env, StopRule::FixedSteps(500), WalkOptions { record_path: true, ..Default::default() }).unwrap();
        let p = t.positions.as_ref().unwrap();
        assert_eq!(p.len(), 501);
        assert!(p.windows(2).all(|w| (w[1] - w[0]).abs() == 1));
        let total: u64 = t.edges.iter().map(|(_, (r, l))| r + l).sum();
        assert_eq!(total, 500);
        for (x, _) in t.edges.iter() {
            let direct = p[..500].iter().filter(|&&y| y == x).count() as u64;
            assert_eq!(t.local_time(x), direct);
        }
        let (lo, hi) = t.running_extrema().unwrap();
        assert_eq!(*lo.last().unwrap(), t.min);
        assert_eq!(*hi.last().unwrap(), t.max);
    }

    #[test]
    fn step_cap_is_enforced() {
        let env = CookieEnvironment::new(fair(), 1);
        let opts = WalkOptions { step_cap: 10, ..Default::default() };
        let r = simulate(env, StopRule::Exit { lower: Some(-1000), upper: Some(1000) }, opts);
        assert!(matches!(r, Err(Error::StepBudgetExceeded { cap: 10 })));
    }

    #[test]
    fn unit_scale_schedule_is_the_walk() {
        let env = CookieEnvironment::new(fair(), 2);
        let t = simulate(env, StopRule::FixedSteps(40), WalkOptions { record_path: true, ..Default::default() }).unwrap();
        let s = mesoscopic_times(&t, 1.0, 1, 40).unwrap();
        assert_eq!(s.times, (0..=40).collect::<Vec<u64>>());
        assert_eq!(&s.embedded, t.positions.as_ref().unwrap());
        assert!(matches!(mesoscopic_times(&t, 1.0, 1, 41), Err(Error::InsufficientPath { .. })));
    }

    #[test]
    fn online_and_offline_schedules_agree() {
        let env = CookieEnvironment::new(fair(), 9);
        let rule = StopRule::Mesoscopic { k: 12, epsilon: 0.1, n: 10_000 };
        let t = simulate(env, rule, WalkOptions { record_path: true, ..Default::default() }).unwrap();
        let online = t.mesoscopic.clone().unwrap();
        assert_eq!(online.times.len(), 13);
        assert_eq!(*online.times.last().unwrap(), t.steps);
        let offline = mesoscopic_times(&t, 0.1, 10_000, 12).unwrap();
        assert_eq!(online, offline);
        assert!(online.embedded.windows(2).all(|w| (w[1] - w[0]).abs() == 1));
    }

    #[test]
    fn collapse_keeps_low_local_times() {
        for seed in 0..20 {
            let a = simulate(
                CookieEnvironment::new(fair(), seed),
                StopRule::Exit { lower: Some(-10), upper: None },
                WalkOptions::default(),
            );
            let b = simulate(
                CookieEnvironment::new(fair(), seed),
                StopRule::Exit { lower: Some(-10), upper: None },
                WalkOptions { collapse_above: Some(3), ..Default::default() },
            )
            .unwrap();
            let Ok(a) = a else { continue };
            for x in -10..=3 {
                assert_eq!(a.local_time(x), b.local_time(x), "seed {seed} site {x}");
            }
            assert_eq!(a.right_steps(3), b.right_steps(3));
            assert!(b.max <= 4);
        }
    }

    #[test]
    fn snapshot_bookkeeping() {
        let spec = Arc::new(make_m_cookie_spec(&[0.9, 0.2]).unwrap());
        let t = simulate(CookieEnvironment::new(spec, 5), StopRule::FixedSteps(30), WalkOptions { record_path: true, ..Default::default() }).unwrap();
        let s0 = remaining_first_cookies(&t, 0).unwrap();
        assert_eq!(s0.states, vec![None]);
        let s1 = remaining_first_cookies(&t, 1).unwrap();
        let x1 = t.positions.as_ref().unwrap()[1];
        assert_eq!(s1.get(0), Some(t.env.state_of(0, 2) as u16));
        assert_eq!(s1.get(x1), None);
    }

    #[test]
    fn goodness_thresholds() {
        let m = 1e4;
        let thr = 1.0 / libm::log(m);
        let r = goodness_of_values(&[0.3; 50], 5.0, 0.3, m).unwrap();
        assert!(r.good);
        assert_eq!(r.worst_deviation, 0.0);
        let mut v = vec![0.0; 50];
        for x in &mut v[20..25] {
            *x = 2.0 * thr;
        }
        let r = goodness_of_values(&v, 5.0, 0.0, m).unwrap();
        assert!(!r.good);
        assert_eq!(r.worst_start, 20);
        assert!((r.worst_deviation - 2.0 * thr).abs() < 1e-12);
        assert_eq!(goodness_of_values(&[0.0; 3], 5.0, 0.0, m), Err(Error::WindowTooLong { window: 5, interval: 3 }));
    }

    #[test]
    fn trivial_lifting_and_grounding() {
        let snap = CookieSnapshot { lo: 0, states: vec![None; 20] };
        let g = lifting_grounding_estimate(fair(), &snap, LiftGroundKind::GroundingLeft, 0.0, 0.1, 1000, 1, 0.95).unwrap();
        assert_eq!(g.estimate, 1.0);
        let l = lifting_grounding_estimate(fair(), &snap, LiftGroundKind::LiftingRight, 0.0, 0.1, 1000, 1, 0.95).unwrap();
        assert_eq!(l.estimate, 1.0);
    }
}
