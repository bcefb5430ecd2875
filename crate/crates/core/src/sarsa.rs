//! Tabular SARSA over occupancy states.

use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{catalog_for, state_count, summarize, Environment, EpisodeMetrics, TrialRecord};
use crate::network::NetworkConfig;
use crate::scalar::Real;

/// Initial value of every Q-table entry.
pub const Q_INIT: f64 = -100.0;

const MAX_TABLE_ENTRIES: usize = 1 << 28;
const QTABLE_MAGIC: &[u8; 4] = b"NQTB";
const QTABLE_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct SarsaHyper<T> {
    pub alpha: T,
    pub gamma: T,
    pub epsilon: T,
    pub episodes: usize,
    pub trials_per_episode: usize,
    /// Hand over to the deep agent after this many episodes without a new
    /// best episode reward. Off when `None`.
    pub fallback_after_stagnant: Option<usize>,
}

impl<T: Real> Default for SarsaHyper<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(0.75),
            gamma: T::lit(0.6),
            epsilon: T::lit(0.1),
            episodes: 500,
            trials_per_episode: 500,
            fallback_after_stagnant: None,
        }
    }
}

impl<T: Real> SarsaHyper<T> {
    pub fn check(&self) -> Result<()> {
        let unit = |x: T| x >= T::zero() && x <= T::one();
        if !unit(self.alpha) || !unit(self.gamma) || !unit(self.epsilon) {
            return Err(Error::Config("alpha, gamma and epsilon must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Shape of the state space: an occupancy grid whose entries are digits in `radix`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateLayout {
    pub n_bs: usize,
    pub n_subchannels: usize,
    pub radix: u32,
}

impl StateLayout {
    /// Occupancy entries run from 0 to the cluster load.
    pub fn for_config<T: Real>(config: &NetworkConfig<T>) -> Self {
        Self {
            n_bs: config.n_bs,
            n_subchannels: config.n_subchannels,
            radix: config.max_cluster_load as u32 + 1,
        }
    }

    pub fn n_states(&self) -> Result<usize> {
        state_count(self.n_bs * self.n_subchannels, self.radix)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QTable<T> {
    layout: StateLayout,
    n_actions: usize,
    values: Vec<T>,
}

impl<T: Real> QTable<T> {
    pub fn new(layout: StateLayout, n_actions: usize) -> Result<Self> {
        let n_states = layout.n_states()?;
        let entries = n_states
            .checked_mul(n_actions)
            .filter(|&e| e <= MAX_TABLE_ENTRIES)
            .ok_or_else(|| Error::Config("Q-table would be too large".into()))?;
        Ok(Self {
            layout,
            n_actions,
            values: vec![T::lit(Q_INIT); entries],
        })
    }

    pub fn for_config(config: &NetworkConfig<T>) -> Result<Self> {
        let n_actions = catalog_for(config.n_bs, config.n_subchannels).len();
        Self::new(StateLayout::for_config(config), n_actions)
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn n_states(&self) -> usize {
        self.values.len() / self.n_actions
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> T {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, value: T) {
        self.values[s * self.n_actions + a] = value;
    }

    pub fn row(&self, s: usize) -> &[T] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [T] {
        &mut self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Writes the table with its header:
    ///
    /// ```text
    /// magic "NQTB" | version u16 | n_bs u32 | n_subchannels u32 | radix u32 |
    /// n_actions u32 | alpha f64 | gamma f64 | epsilon f64 | values f64 × (states·actions)
    /// ```
    ///
    /// All integers and floats little-endian, values row-major by state.
    pub fn write_to<W: Write>(&self, w: &mut W, hyper: &SarsaHyper<T>) -> Result<()> {
        let io = |e: std::io::Error| Error::Checkpoint(e.to_string());
        w.write_all(QTABLE_MAGIC).map_err(io)?;
        w.write_all(&QTABLE_VERSION.to_le_bytes()).map_err(io)?;
        for v in [
            self.layout.n_bs as u32,
            self.layout.n_subchannels as u32,
            self.layout.radix,
            self.n_actions as u32,
        ] {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        for v in [hyper.alpha, hyper.gamma, hyper.epsilon] {
            w.write_all(&v.as_f64().to_le_bytes()).map_err(io)?;
        }
        for v in &self.values {
            w.write_all(&v.as_f64().to_le_bytes()).map_err(io)?;
        }
        Ok(())
    }

    /// Reads a table written by [`QTable::write_to`], returning the stored
    /// learning rate, discount and exploration rate alongside.
    pub fn read_from<R: Read>(r: &mut R) -> Result<(Self, [T; 3])> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != QTABLE_MAGIC {
            return Err(Error::Checkpoint("not a Q-table checkpoint".into()));
        }
        let version = u16::from_le_bytes(read_array(r)?);
        if version != QTABLE_VERSION {
            return Err(Error::Checkpoint(format!("unsupported Q-table version {version}")));
        }
        let mut dims = [0u32; 4];
        for d in &mut dims {
            *d = u32::from_le_bytes(read_array(r)?);
        }
        let layout = StateLayout {
            n_bs: dims[0] as usize,
            n_subchannels: dims[1] as usize,
            radix: dims[2],
        };
        let mut hyper = [T::zero(); 3];
        for h in &mut hyper {
            *h = T::lit(f64::from_le_bytes(read_array(r)?));
        }
        let mut table = Self::new(layout, dims[3] as usize)?;
        for v in &mut table.values {
            *v = T::lit(f64::from_le_bytes(read_array(r)?));
        }
        Ok((table, hyper))
    }
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))
}

pub(crate) fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy choice over a row of action values.
pub fn epsilon_greedy<T: Real, R: Rng + ?Sized>(row: &[T], epsilon: T, rng: &mut R) -> usize {
    if epsilon > T::zero() && rng.random::<f64>() < epsilon.as_f64() {
        rng.random_range(0..row.len())
    } else {
        argmax(row)
    }
}

pub fn select_action<T: Real, R: Rng + ?Sized>(q: &QTable<T>, s: usize, epsilon: T, rng: &mut R) -> usize {
    epsilon_greedy(q.row(s), epsilon, rng)
}

/// Q(s,a) ← (1−α)·Q(s,a) + α·(r + γ·Q(s′,a′)). Returns the new entry.
pub fn sarsa_update<T: Real>(
    q: &mut QTable<T>,
    s: usize,
    a: usize,
    r: T,
    s_next: usize,
    a_next: usize,
    hyper: &SarsaHyper<T>,
) -> T {
    let target = r + hyper.gamma * q.get(s_next, a_next);
    let value = (T::one() - hyper.alpha) * q.get(s, a) + hyper.alpha * target;
    q.set(s, a, value);
    value
}

pub fn greedy_policy<T: Real>(q: &QTable<T>) -> Vec<usize> {
    (0..q.n_states()).map(|s| argmax(q.row(s))).collect()
}

pub fn state_value<T: Real>(q: &QTable<T>, s: usize) -> T {
    q.row(s).iter().copied().fold(T::neg_infinity(), T::max)
}

/// One training episode: T_e trials of choose, step, choose next, update.
pub fn run_episode<T: Real, R: Rng + ?Sized>(
    env: &mut Environment<T>,
    q: &mut QTable<T>,
    hyper: &SarsaHyper<T>,
    rng: &mut R,
) -> Result<EpisodeMetrics<T>> {
    let mut trace = Vec::with_capacity(hyper.trials_per_episode);
    if hyper.trials_per_episode > 0 {
        let mut s = env.state_index()?;
        let mut a = select_action(q, s, hyper.epsilon, rng);
        for _ in 0..hyper.trials_per_episode {
            let out = env.step(a, rng);
            let s_next = env.state_index()?;
            let a_next = select_action(q, s_next, hyper.epsilon, rng);
            sarsa_update(q, s, a, out.reward, s_next, a_next, hyper);
            trace.push(TrialRecord {
                action: a,
                reward: out.reward,
                sum_rate_bps: out.sum_rate_bps,
                valid: out.valid,
            });
            s = s_next;
            a = a_next;
        }
    }
    Ok(summarize(env, trace))
}

/// Follows the greedy policy for `steps` trials without learning.
pub fn greedy_rollout<T: Real, R: Rng + ?Sized>(
    env: &mut Environment<T>,
    q: &QTable<T>,
    steps: usize,
    rng: &mut R,
) -> Result<EpisodeMetrics<T>> {
    let mut trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        let a = argmax(q.row(env.state_index()?));
        let out = env.step(a, rng);
        trace.push(TrialRecord {
            action: a,
            reward: out.reward,
            sum_rate_bps: out.sum_rate_bps,
            valid: out.valid,
        });
    }
    Ok(summarize(env, trace))
}

/// Counts episodes since the last new best cumulative reward.
#[derive(Clone, Debug)]
pub struct StagnationMonitor<T> {
    patience: usize,
    best: Option<T>,
    since_best: usize,
}

impl<T: Real> StagnationMonitor<T> {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            since_best: 0,
        }
    }

    /// Records an episode reward and reports whether patience ran out.
    pub fn observe(&mut self, reward: T) -> bool {
        match self.best {
            Some(b) if reward <= b => self.since_best += 1,
            _ => {
                self.best = Some(reward);
                self.since_best = 0;
            }
        }
        self.since_best >= self.patience
    }
}
