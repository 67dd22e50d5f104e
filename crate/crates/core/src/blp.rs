//! Branching-like processes.
//!
//! Generation `i` of a process reads the cookie stack of one site and counts
//! coins of one kind before a prescribed number of coins of the other kind:
//!
//! * `U+`: right steps before the `Z_{i-1}`-th left step (0 absorbing),
//! * `V+`: right steps before the `(Z_{i-1}+1)`-th left step,
//! * `U-`, `V-`: the same with left and right swapped.
//!
//! Plus processes read sites left to right, minus processes right to left.
//! Run on the same seed as a walk, they reproduce the walk's directed-edge
//! local times exactly.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::cookie_model::{CookieChainSpec, CookieEnvironment, Polarity, SamplingMode};
use crate::erw::WalkTrajectory;
use crate::error::{Error, Result};

/// A stream of coin flips; `true` is a success (right step).
pub trait CoinSource {
    fn flip(&mut self) -> bool;
}

/// Coins read from a fixed script. Panics when the script runs out.
#[derive(Clone, Debug)]
pub struct ScriptedCoins<'a> {
    script: &'a [bool],
    next: usize,
}

impl<'a> ScriptedCoins<'a> {
    pub fn new(script: &'a [bool]) -> Self {
        ScriptedCoins { script, next: 0 }
    }
    pub fn used(&self) -> usize {
        self.next
    }
}

impl CoinSource for ScriptedCoins<'_> {
    fn flip(&mut self) -> bool {
        let c = self.script[self.next];
        self.next += 1;
        c
    }
}

fn count_before(coins: &mut impl CoinSource, stops: u64, counted: bool) -> u64 {
    let mut count = 0;
    let mut seen = 0;
    while seen < stops {
        if coins.flip() == counted {
            count += 1;
        } else {
            seen += 1;
        }
    }
    count
}

/// Successes before the `current`-th failure.
pub fn step_u_plus(current: u64, coins: &mut impl CoinSource) -> u64 {
    count_before(coins, current, true)
}

/// Successes before the `(current+1)`-th failure.
pub fn step_v_plus(current: u64, coins: &mut impl CoinSource) -> u64 {
    count_before(coins, current + 1, true)
}

/// Failures before the `current`-th success.
pub fn step_u_minus(current: u64, coins: &mut impl CoinSource) -> u64 {
    count_before(coins, current, false)
}

/// Failures before the `(current+1)`-th success.
pub fn step_v_minus(current: u64, coins: &mut impl CoinSource) -> u64 {
    count_before(coins, current + 1, false)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlpKind {
    UPlus,
    VPlus,
    UMinus,
    VMinus,
}

impl BlpKind {
    pub fn polarity(self) -> Polarity {
        match self {
            BlpKind::UPlus | BlpKind::VPlus => Polarity::Plus,
            BlpKind::UMinus | BlpKind::VMinus => Polarity::Minus,
        }
    }

    /// Whether one extra stopping coin is required each generation.
    pub fn immigrates(self) -> bool {
        matches!(self, BlpKind::VPlus | BlpKind::VMinus)
    }

    pub fn direction(self) -> Direction {
        match self.polarity() {
            Polarity::Plus => Direction::LeftToRight,
            Polarity::Minus => Direction::RightToLeft,
        }
    }

    /// Stopping coins needed when the previous generation is `z`.
    pub fn target(self, z: u64) -> Result<u64> {
        if self.immigrates() {
            z.checked_add(1).ok_or(Error::Overflow)
        } else {
            Ok(z)
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BlpKind::UPlus => "U+",
            BlpKind::VPlus => "V+",
            BlpKind::UMinus => "U-",
            BlpKind::VMinus => "V-",
        }
    }
}

impl core::str::FromStr for BlpKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "U+" | "u+" | "UPlus" | "u_plus" => Ok(BlpKind::UPlus),
            "V+" | "v+" | "VPlus" | "v_plus" => Ok(BlpKind::VPlus),
            "U-" | "u-" | "UMinus" | "u_minus" => Ok(BlpKind::UMinus),
            "V-" | "v-" | "VMinus" | "v_minus" => Ok(BlpKind::VMinus),
            _ => Err(Error::InvalidArgument("unknown process kind")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    LeftToRight,
    RightToLeft,
}

/// Sites `lo..=hi` consumed one per generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if hi < lo {
            return Err(Error::InvalidArgument("empty window"));
        }
        Ok(Window { lo, hi })
    }
    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// Site read by generation `i` (1-based).
    pub fn site(&self, direction: Direction, i: usize) -> i64 {
        match direction {
            Direction::LeftToRight => self.lo + i as i64 - 1,
            Direction::RightToLeft => self.hi - i as i64 + 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlpTrajectory {
    pub kind: BlpKind,
    /// `Z_0, Z_1, ..., Z_len`.
    pub values: Vec<u64>,
    /// Site read by generation `i` is `sites[i-1]`.
    pub sites: Vec<i64>,
    /// First generation at which a `U` process is 0.
    pub absorption_index: Option<usize>,
}

fn check_direction(kind: BlpKind, direction: Direction) -> Result<()> {
    if kind.direction() != direction {
        return Err(Error::WindowDirectionMismatch);
    }
    Ok(())
}

/// Runs one process over a window of the environment.
pub fn run_blp(env: &mut CookieEnvironment, kind: BlpKind, init: u64, window: Window, direction: Direction) -> Result<BlpTrajectory> {
    check_direction(kind, direction)?;
    let len = window.len();
    let mut values = Vec::with_capacity(len + 1);
    let mut sites = Vec::with_capacity(len);
    values.push(init);
    let mut z = init;
    let mut absorption_index = if !kind.immigrates() && init == 0 { Some(0) } else { None };
    for i in 1..=len {
        let x = window.site(direction, i);
        z = env.run_stack(x, kind.target(z)?, kind.polarity())?.count;
        values.push(z);
        sites.push(x);
        if z == 0 && absorption_index.is_none() && !kind.immigrates() {
            absorption_index = Some(i);
        }
    }
    Ok(BlpTrajectory { kind, values, sites, absorption_index })
}

/// One leg of a concatenated process.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub kind: BlpKind,
    pub window: Window,
    pub direction: Direction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConcatTrajectory {
    pub values: Vec<u64>,
    pub sites: Vec<i64>,
    /// Index where the second leg starts (the last value of the first leg).
    pub seam: usize,
    /// First index at or after the seam where the value is 0.
    pub absorption_index: Option<usize>,
}

/// Runs `first` from `init`, then `second` from the last value of `first`.
pub fn run_concatenated(env: &mut CookieEnvironment, init: u64, first: Segment, second: Segment) -> Result<ConcatTrajectory> {
    let a = run_blp(env, first.kind, init, first.window, first.direction)?;
    let seam = a.values.len() - 1;
    let b = run_blp(env, second.kind, a.values[seam], second.window, second.direction)?;
    let mut values = a.values;
    values.extend_from_slice(&b.values[1..]);
    let mut sites = a.sites;
    sites.extend_from_slice(&b.sites);
    let absorption_index = values[seam..].iter().position(|&z| z == 0).map(|i| i + seam);
    Ok(ConcatTrajectory { values, sites, seam, absorption_index })
}

/// The process whose law matches the walk's right-step counts
/// `E_{-l}, ..., E_0, E_1, ..., E_{right}` before first hitting `-l`:
/// `V+` from 0 on `-l+1..=0`, then `U+` on `1..=right`.
pub fn walk_edge_process(env: &mut CookieEnvironment, l: u64, right: i64) -> Result<ConcatTrajectory> {
    if l == 0 || right < 1 {
        return Err(Error::InvalidArgument("need l >= 1 and right >= 1"));
    }
    let first = Segment { kind: BlpKind::VPlus, window: Window::new(-(l as i64) + 1, 0)?, direction: Direction::LeftToRight };
    let second = Segment { kind: BlpKind::UPlus, window: Window::new(1, right)?, direction: Direction::LeftToRight };
    run_concatenated(env, 0, first, second)
}

/// Runs two copies from different initial values on identical coins.
/// The result is ordered pointwise when `init_low <= init_high`.
pub fn coupled_pair(
    spec: Arc<CookieChainSpec>,
    seed: u64,
    kind: BlpKind,
    init_low: u64,
    init_high: u64,
    window: Window,
    direction: Direction,
) -> Result<(BlpTrajectory, BlpTrajectory)> {
    let mut a = CookieEnvironment::new(spec.clone(), seed).with_sampling(SamplingMode::CoinByCoin);
    let mut b = CookieEnvironment::new(spec, seed).with_sampling(SamplingMode::CoinByCoin);
    Ok((run_blp(&mut a, kind, init_low, window, direction)?, run_blp(&mut b, kind, init_high, window, direction)?))
}

/// Directed-edge local times on `lo..=hi`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeLocalTimes {
    pub lo: i64,
    /// Steps from `x` to `x+1`.
    pub right: Vec<u64>,
    /// Steps from `x` to `x-1`.
    pub left: Vec<u64>,
}

impl EdgeLocalTimes {
    pub fn right_at(&self, x: i64) -> u64 {
        self.right[(x - self.lo) as usize]
    }
    pub fn left_at(&self, x: i64) -> u64 {
        self.left[(x - self.lo) as usize]
    }
}

/// Counts steps right and left from each site of `lo..=hi` among the first
/// `stop` steps of a recorded walk.
pub fn extract_edge_local_times(walk: &WalkTrajectory, stop: usize, lo: i64, hi: i64) -> Result<EdgeLocalTimes> {
    let path = walk.positions.as_ref().ok_or(Error::InvalidArgument("walk path was not recorded"))?;
    if stop >= path.len() {
        return Err(Error::InvalidArgument("stop index beyond the recorded path"));
    }
    if hi < lo {
        return Err(Error::InvalidArgument("empty site range"));
    }
    let n = (hi - lo + 1) as usize;
    let mut right = alloc::vec![0u64; n];
    let mut left = alloc::vec![0u64; n];
    for w in path[..=stop].windows(2) {
        let x = w[0];
        if x < lo || x > hi {
            continue;
        }
        let i = (x - lo) as usize;
        if w[1] > x {
            right[i] += 1;
        } else {
            left[i] += 1;
        }
    }
    Ok(EdgeLocalTimes { lo, right, left })
}
