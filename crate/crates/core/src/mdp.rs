//! The association MDP shared by the tabular and deep agents.
//!
//! The agent-visible state is the occupancy matrix: how many users each
//! (base station, sub-channel) cell holds. Actions move one user between two
//! cells that share a base station or a sub-channel, or do nothing. The
//! environment keeps the concrete user placement behind the matrix so that
//! every state can be scored with the SIC sum rate.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::network::{
    gain_order, instantaneous_sum_rate, AssociationState, FlatEvaluator, NetworkConfig, Occupancy,
    RateReport, ResourceBlock, UserId, UserTerminal,
};
use crate::scalar::Real;

pub const REWARD_KEEP: f64 = 0.0;
pub const REWARD_PENALTY: f64 = -10.0;

/// A move of one user from the `-1` cell to the `+1` cell, or the all-zero no-op.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SwapAction {
    n_bs: usize,
    n_subchannels: usize,
    delta: Vec<i8>,
}

impl SwapAction {
    pub fn noop(n_bs: usize, n_subchannels: usize) -> Self {
        Self {
            n_bs,
            n_subchannels,
            delta: vec![0; n_bs * n_subchannels],
        }
    }

    pub fn moving(n_bs: usize, n_subchannels: usize, from: (usize, usize), to: (usize, usize)) -> Self {
        assert_ne!(from, to, "a move needs two distinct cells");
        let mut a = Self::noop(n_bs, n_subchannels);
        a.delta[from.0 * n_subchannels + from.1] = -1;
        a.delta[to.0 * n_subchannels + to.1] = 1;
        a
    }

    /// Row-major delta matrix.
    pub fn delta(&self) -> &[i8] {
        &self.delta
    }

    pub fn rows(&self) -> Vec<Vec<i8>> {
        self.delta.chunks(self.n_subchannels).map(|r| r.to_vec()).collect()
    }

    pub fn is_noop(&self) -> bool {
        self.delta.iter().all(|&d| d == 0)
    }

    /// Flat index of the decremented cell.
    pub fn source(&self) -> Option<usize> {
        self.delta.iter().position(|&d| d == -1)
    }

    /// Flat index of the incremented cell.
    pub fn target(&self) -> Option<usize> {
        self.delta.iter().position(|&d| d == 1)
    }

    pub fn inverse(&self) -> Self {
        Self {
            n_bs: self.n_bs,
            n_subchannels: self.n_subchannels,
            delta: self.delta.iter().map(|&d| -d).collect(),
        }
    }
}

/// Ordered action set. For two base stations and two sub-channels this is the
/// canonical list of eight swaps followed by the no-op:
///
/// ```text
/// 0: (0,0)->(1,0)   1: (1,0)->(0,0)   2: (0,1)->(1,1)   3: (1,1)->(0,1)
/// 4: (1,1)->(1,0)   5: (1,0)->(1,1)   6: (0,1)->(0,0)   7: (0,0)->(0,1)
/// 8: no-op
/// ```
///
/// Other sizes list every move between two cells in the same row or column,
/// ordered by source then target in row-major order, then the no-op.
pub fn action_catalog<T: Real>(config: &NetworkConfig<T>) -> Vec<SwapAction> {
    catalog_for(config.n_bs, config.n_subchannels)
}

pub fn catalog_for(n_bs: usize, n_sub: usize) -> Vec<SwapAction> {
    let mut actions = Vec::new();
    if n_bs == 2 && n_sub == 2 {
        let moves = [
            ((0, 0), (1, 0)),
            ((1, 0), (0, 0)),
            ((0, 1), (1, 1)),
            ((1, 1), (0, 1)),
            ((1, 1), (1, 0)),
            ((1, 0), (1, 1)),
            ((0, 1), (0, 0)),
            ((0, 0), (0, 1)),
        ];
        for (from, to) in moves {
            actions.push(SwapAction::moving(2, 2, from, to));
        }
    } else {
        for from in 0..n_bs * n_sub {
            for to in 0..n_bs * n_sub {
                let (fb, fs) = (from / n_sub, from % n_sub);
                let (tb, ts) = (to / n_sub, to % n_sub);
                if from != to && (fb == tb || fs == ts) {
                    actions.push(SwapAction::moving(n_bs, n_sub, (fb, fs), (tb, ts)));
                }
            }
        }
    }
    actions.push(SwapAction::noop(n_bs, n_sub));
    actions
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnvState {
    pub association: AssociationState,
    pub step: usize,
}

impl EnvState {
    pub fn new(association: AssociationState) -> Self {
        Self { association, step: 0 }
    }

    pub fn occupancy(&self) -> &Occupancy {
        self.association.occupancy()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InvalidMove;

/// Applies `action` to the occupancy and moves one uniformly chosen user of
/// the source cell. Rejects moves that would leave a cell outside `[0, max_load]`.
pub fn apply_action<R: Rng + ?Sized>(
    state: &EnvState,
    action: &SwapAction,
    max_load: usize,
    rng: &mut R,
) -> std::result::Result<EnvState, InvalidMove> {
    let occ = state.occupancy();
    if !move_allowed(occ.as_slice(), action, max_load) {
        return Err(InvalidMove);
    }
    let mut next = state.clone();
    next.step += 1;
    if let (Some(src), Some(dst)) = (action.source(), action.target()) {
        let n_sub = occ.n_subchannels();
        let from = ResourceBlock::new(src / n_sub, src % n_sub);
        let to = ResourceBlock::new(dst / n_sub, dst % n_sub);
        let members = state.association.members(from);
        let user = members[rng.random_range(0..members.len())];
        next.association.assign(user, to);
    }
    Ok(next)
}

fn move_allowed(counts: &[u32], action: &SwapAction, max_load: usize) -> bool {
    counts.iter().zip(action.delta()).all(|(&c, &d)| {
        let v = c as i64 + d as i64;
        v >= 0 && v <= max_load as i64
    })
}

/// Zero when the sum rate did not drop and no user was lost, the penalty otherwise.
pub fn reward<T: Real>(prev: &EnvState, next: &EnvState, prev_rate: T, next_rate: T) -> T {
    reward_from_counts(prev.occupancy().total(), next.occupancy().total(), prev_rate, next_rate)
}

pub fn reward_from_counts<T: Real>(prev_users: u32, next_users: u32, prev_rate: T, next_rate: T) -> T {
    if next_rate >= prev_rate && prev_users == next_users {
        T::lit(REWARD_KEEP)
    } else {
        T::lit(REWARD_PENALTY)
    }
}

/// Mixed-radix code of an occupancy matrix with radix `n_users + 1`. Digits
/// are read row-major, most significant first, so `[[1,0],[0,0]]` with radix
/// 4 encodes to 64.
pub fn state_index(occupancy: &Occupancy, n_users: usize) -> Result<usize> {
    encode_digits(occupancy.as_slice(), n_users as u32 + 1)
}

pub fn encode_digits(digits: &[u32], radix: u32) -> Result<usize> {
    let mut code: usize = 0;
    for &d in digits {
        if d >= radix {
            return Err(Error::Radix { value: d, radix });
        }
        code = code
            .checked_mul(radix as usize)
            .and_then(|c| c.checked_add(d as usize))
            .ok_or_else(|| Error::Config("state index overflows usize".into()))?;
    }
    Ok(code)
}

pub fn decode_state_index(code: usize, n_bs: usize, n_subchannels: usize, radix: u32) -> Occupancy {
    let cells = n_bs * n_subchannels;
    let mut digits = vec![0u32; cells];
    let mut rest = code;
    for slot in digits.iter_mut().rev() {
        *slot = (rest % radix as usize) as u32;
        rest /= radix as usize;
    }
    Occupancy::from_flat(n_bs, n_subchannels, digits)
}

/// Number of codes for a grid of `cells` digits in the given radix.
pub fn state_count(cells: usize, radix: u32) -> Result<usize> {
    (radix as usize)
        .checked_pow(cells as u32)
        .ok_or_else(|| Error::Config("state space overflows usize".into()))
}

/// Occupancy scaled by `max_load`, then the instantaneous and average reward.
pub fn encode_drl_state<T: Real>(occupancy: &Occupancy, max_load: usize, r_inst: T, r_avg: T) -> Vec<T> {
    let mut v = Vec::with_capacity(occupancy.as_slice().len() + 2);
    encode_drl_state_into(occupancy.as_slice(), max_load, r_inst, r_avg, &mut v);
    v
}

pub fn encode_drl_state_into<T: Real>(counts: &[u32], max_load: usize, r_inst: T, r_avg: T, out: &mut Vec<T>) {
    out.clear();
    let scale = T::from_usize(max_load).unwrap();
    out.extend(counts.iter().map(|&c| T::from_u32(c).unwrap() / scale));
    out.push(r_inst);
    out.push(r_avg);
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionRecord<T> {
    pub s: EnvState,
    pub a: usize,
    pub r: T,
    pub s_next: EnvState,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome<T> {
    pub reward: T,
    pub valid: bool,
    pub sum_rate_bps: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialRecord<T> {
    pub action: usize,
    pub reward: T,
    pub sum_rate_bps: T,
    pub valid: bool,
}

/// What one episode of either agent reports.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeMetrics<T> {
    pub cumulative_reward: T,
    /// Sum rate averaged over the episode's trials.
    pub mean_sum_rate: T,
    pub final_sum_rate: T,
    /// Highest sum rate among the visited associations, the episode's answer.
    pub best_sum_rate: T,
    pub best_association: AssociationState,
    /// Users decoded with a positive rate in the best association.
    pub served_users: usize,
    pub trace: Vec<TrialRecord<T>>,
}

/// A fixed user population and its current association.
#[derive(Clone, Debug)]
pub struct Environment<T> {
    config: NetworkConfig<T>,
    users: Vec<UserTerminal<T>>,
    ids: Vec<UserId>,
    gains: Vec<T>,
    powers: Vec<T>,
    rb_of: Vec<Option<usize>>,
    evaluator: FlatEvaluator<T>,
    actions: Vec<SwapAction>,
    state: EnvState,
    rate: T,
    best_rate: T,
    best: AssociationState,
    scratch: Vec<usize>,
}

impl<T: Real> Environment<T> {
    /// Starts from `association`; every active user must be assigned.
    pub fn new(config: NetworkConfig<T>, users: Vec<UserTerminal<T>>, association: AssociationState) -> Result<Self> {
        config.check()?;
        let active: Vec<UserTerminal<T>> = users.into_iter().filter(|u| u.active).collect();
        let order = gain_order(&active);
        let ids: Vec<UserId> = order.iter().map(|&k| active[k].id).collect();
        let gains = order.iter().map(|&k| active[k].gain).collect();
        let powers = order.iter().map(|&k| active[k].tx_power_w).collect();
        if association.assigned_count() != ids.len() || ids.iter().any(|&id| association.rb_of(id).is_none()) {
            return Err(Error::Config("initial association must place every active user".into()));
        }
        if association.occupancy().max_entry() as usize > config.max_cluster_load {
            return Err(Error::Config("initial association exceeds the cluster load".into()));
        }
        let rb_of = ids
            .iter()
            .map(|&id| association.rb_of(id).map(|rb| config.rb_index(rb)))
            .collect();
        let mut env = Self {
            evaluator: FlatEvaluator::new(&config),
            actions: action_catalog(&config),
            users: active,
            ids,
            gains,
            powers,
            rb_of,
            state: EnvState::new(association.clone()),
            rate: T::zero(),
            best_rate: T::zero(),
            best: association,
            scratch: Vec::new(),
            config,
        };
        env.rate = env.evaluate();
        env.best_rate = env.rate;
        Ok(env)
    }

    /// Starts from an occupancy matrix drawn uniformly among those that hold
    /// all users within the cluster load, with users placed at random.
    pub fn random_start<R: Rng + ?Sized>(
        config: NetworkConfig<T>,
        users: Vec<UserTerminal<T>>,
        rng: &mut R,
    ) -> Result<Self> {
        let active: Vec<UserId> = users.iter().filter(|u| u.active).map(|u| u.id).collect();
        let counts = random_occupancy(rng, active.len(), config.n_resource_blocks(), config.max_cluster_load)?;
        let mut placement = active.clone();
        for i in (1..placement.len()).rev() {
            placement.swap(i, rng.random_range(0..=i));
        }
        let mut association = AssociationState::new(config.n_bs, config.n_subchannels);
        let mut it = placement.into_iter();
        for (cell, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                association.assign(it.next().unwrap(), config.rb_at(cell));
            }
        }
        Self::new(config, users, association)
    }

    fn evaluate(&mut self) -> T {
        self.evaluator.evaluate(&self.rb_of, &self.gains, &self.powers).sum_rate_bps
    }

    pub fn config(&self) -> &NetworkConfig<T> {
        &self.config
    }

    pub fn users(&self) -> &[UserTerminal<T>] {
        &self.users
    }

    pub fn n_users(&self) -> usize {
        self.ids.len()
    }

    pub fn actions(&self) -> &[SwapAction] {
        &self.actions
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn occupancy(&self) -> &Occupancy {
        self.state.occupancy()
    }

    pub fn sum_rate(&self) -> T {
        self.rate
    }

    pub fn best_sum_rate(&self) -> T {
        self.best_rate
    }

    pub fn best_association(&self) -> &AssociationState {
        &self.best
    }

    pub fn report(&self) -> RateReport<T> {
        instantaneous_sum_rate(&self.state.association, &self.users, &self.config)
    }

    /// Takes catalog action `action`. An illegal move keeps the state and
    /// earns the penalty.
    pub fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> StepOutcome<T> {
        let swap = &self.actions[action];
        let prev_rate = self.rate;
        let prev_users = self.occupancy().total();
        if !move_allowed(self.occupancy().as_slice(), swap, self.config.max_cluster_load) {
            self.state.step += 1;
            return StepOutcome {
                reward: T::lit(REWARD_PENALTY),
                valid: false,
                sum_rate_bps: prev_rate,
            };
        }
        if let (Some(src), Some(dst)) = (swap.source(), swap.target()) {
            self.scratch.clear();
            self.scratch
                .extend((0..self.rb_of.len()).filter(|&k| self.rb_of[k] == Some(src)));
            let k = self.scratch[rng.random_range(0..self.scratch.len())];
            self.rb_of[k] = Some(dst);
            self.state.association.assign(self.ids[k], self.config.rb_at(dst));
            self.rate = self.evaluate();
            if self.rate > self.best_rate {
                self.best_rate = self.rate;
                self.best = self.state.association.clone();
            }
        }
        self.state.step += 1;
        let r = reward_from_counts(prev_users, self.occupancy().total(), prev_rate, self.rate);
        StepOutcome {
            reward: r,
            valid: true,
            sum_rate_bps: self.rate,
        }
    }

    /// Like [`Environment::step`] but returns the full transition.
    pub fn transition<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> TransitionRecord<T> {
        let s = self.state.clone();
        let out = self.step(action, rng);
        TransitionRecord {
            s,
            a: action,
            r: out.reward,
            s_next: self.state.clone(),
        }
    }

    pub fn state_index(&self) -> Result<usize> {
        state_index(self.occupancy(), self.config.max_cluster_load)
    }

    /// Served users in the best association seen so far.
    pub fn best_served_users(&self) -> usize {
        instantaneous_sum_rate(&self.best, &self.users, &self.config).served_users()
    }
}

/// Uniform draw over matrices of `cells` nonnegative counts summing to
/// `n_users` with every count at most `max_load`: stars and bars, then rejection.
pub fn random_occupancy<R: Rng + ?Sized>(rng: &mut R, n_users: usize, cells: usize, max_load: usize) -> Result<Vec<u32>> {
    if n_users > cells * max_load {
        return Err(Error::Config(format!(
            "{n_users} users cannot fit in {cells} cells of load {max_load}"
        )));
    }
    let slots = n_users + cells - 1;
    loop {
        let mut bars = index::sample(rng, slots, cells - 1).into_vec();
        bars.sort_unstable();
        let mut counts = Vec::with_capacity(cells);
        let mut prev = 0usize;
        for &b in &bars {
            counts.push((b - prev) as u32);
            prev = b + 1;
        }
        counts.push((slots - prev) as u32);
        if counts.iter().all(|&c| c as usize <= max_load) {
            return Ok(counts);
        }
    }
}

/// Summary statistics over a finished trace.
pub(crate) fn summarize<T: Real>(
    env: &Environment<T>,
    trace: Vec<TrialRecord<T>>,
) -> EpisodeMetrics<T> {
    let cumulative_reward = trace.iter().map(|t| t.reward).sum();
    let mean_sum_rate = if trace.is_empty() {
        env.sum_rate()
    } else {
        trace.iter().map(|t| t.sum_rate_bps).sum::<T>() / T::from_usize(trace.len()).unwrap()
    };
    EpisodeMetrics {
        cumulative_reward,
        mean_sum_rate,
        final_sum_rate: env.sum_rate(),
        best_sum_rate: env.best_sum_rate(),
        best_association: env.best_association().clone(),
        served_users: env.best_served_users(),
        trace,
    }
}
