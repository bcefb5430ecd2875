//! Uplink NOMA physical layer.
//!
//! Users sharing one resource block (a sub-channel at one base station) form a
//! NOMA cluster. The receiver decodes the cluster strongest-gain first with
//! successive interference cancellation (SIC); a user whose rate misses the SIC
//! threshold takes every weaker user of the cluster down with it. Co-channel
//! users served by other base stations appear as inter-cell interference.
//!
//! Members of a cluster are kept in ascending `(gain, id)` order, so decoding
//! walks each member list back to front.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::RangeInclusive;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Boltzmann constant in J/K.
pub const BOLTZMANN: f64 = 1.380649e-23;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(pub u32);

/// One sub-channel at one base station.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResourceBlock {
    pub bs: usize,
    pub subchannel: usize,
}

impl ResourceBlock {
    pub fn new(bs: usize, subchannel: usize) -> Self {
        Self { bs, subchannel }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig<T> {
    pub n_bs: usize,
    pub n_subchannels: usize,
    /// System bandwidth B, split evenly across sub-channels.
    pub total_bandwidth_hz: T,
    pub resistor_temp_k: T,
    pub boltzmann: T,
    /// Maximum users per resource block (U_s).
    pub max_cluster_load: usize,
    /// Per-cluster transmit power budget (P_s).
    pub subchannel_power_cap_w: T,
    /// Rate a decoded user must reach for SIC to continue (R^th).
    pub sic_rate_threshold_bps: T,
    pub gain_levels: Vec<T>,
    pub power_levels_dbm: Vec<T>,
}

impl<T: Real> Default for NetworkConfig<T> {
    fn default() -> Self {
        Self {
            n_bs: 2,
            n_subchannels: 2,
            total_bandwidth_hz: T::lit(60e3),
            resistor_temp_k: T::lit(300.0),
            boltzmann: T::lit(BOLTZMANN),
            max_cluster_load: 3,
            subchannel_power_cap_w: T::lit(10.0),
            sic_rate_threshold_bps: T::lit(10e3),
            gain_levels: [1.0e-5, 1.5e-5, 2.0e-5].iter().map(|&g| T::lit(g)).collect(),
            power_levels_dbm: [5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
                .iter()
                .map(|&p| T::lit(p))
                .collect(),
        }
    }
}

impl<T: Real> NetworkConfig<T> {
    pub fn check(&self) -> Result<()> {
        if self.n_bs == 0 || self.n_subchannels == 0 {
            return Err(Error::Config("n_bs and n_subchannels must be at least 1".into()));
        }
        if !(self.total_bandwidth_hz > T::zero()) {
            return Err(Error::Config("total_bandwidth_hz must be positive".into()));
        }
        if self.gain_levels.is_empty() || self.gain_levels.iter().any(|&g| !(g > T::zero())) {
            return Err(Error::Config("gain_levels must be nonempty and positive".into()));
        }
        if self.power_levels_dbm.is_empty() {
            return Err(Error::Config("power_levels_dbm must be nonempty".into()));
        }
        if self.max_cluster_load == 0 {
            return Err(Error::Config("max_cluster_load must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_resource_blocks(&self) -> usize {
        self.n_bs * self.n_subchannels
    }

    /// Bandwidth of one sub-channel, B / N_s.
    pub fn subchannel_bandwidth_hz(&self) -> T {
        self.total_bandwidth_hz / T::from_usize(self.n_subchannels).unwrap()
    }

    /// Minimum SINR that meets the SIC rate threshold: 2^(R^th N_s / B) - 1.
    pub fn sinr_threshold(&self) -> T {
        let exponent = self.sic_rate_threshold_bps / self.subchannel_bandwidth_hz();
        T::lit(2.0).powf(exponent) - T::one()
    }

    pub fn power_levels_w(&self) -> Vec<T> {
        self.power_levels_dbm.iter().map(|&p| dbm_to_watts(p)).collect()
    }

    /// Row-major index of a resource block (base station major).
    pub fn rb_index(&self, rb: ResourceBlock) -> usize {
        rb.bs * self.n_subchannels + rb.subchannel
    }

    pub fn rb_at(&self, index: usize) -> ResourceBlock {
        ResourceBlock::new(index / self.n_subchannels, index % self.n_subchannels)
    }
}

pub fn dbm_to_watts<T: Real>(dbm: T) -> T {
    T::lit(10.0).powf(dbm / T::lit(10.0)) / T::lit(1000.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserTerminal<T> {
    pub id: UserId,
    pub gain: T,
    pub tx_power_w: T,
    pub active: bool,
}

impl<T: Real> UserTerminal<T> {
    pub fn new(id: u32, gain: T, tx_power_w: T) -> Self {
        Self {
            id: UserId(id),
            gain,
            tx_power_w,
            active: true,
        }
    }

    /// Received power p·g.
    pub fn received_power(&self) -> T {
        self.tx_power_w * self.gain
    }
}

/// `n_bs × n_subchannels` matrix of user counts, row-major by base station.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Occupancy {
    n_bs: usize,
    n_subchannels: usize,
    counts: Vec<u32>,
}

impl Occupancy {
    pub fn zeros(n_bs: usize, n_subchannels: usize) -> Self {
        Self {
            n_bs,
            n_subchannels,
            counts: vec![0; n_bs * n_subchannels],
        }
    }

    pub fn from_rows(rows: &[&[u32]]) -> Self {
        let n_bs = rows.len();
        let n_subchannels = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == n_subchannels), "ragged occupancy rows");
        Self {
            n_bs,
            n_subchannels,
            counts: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    pub fn from_flat(n_bs: usize, n_subchannels: usize, counts: Vec<u32>) -> Self {
        assert_eq!(counts.len(), n_bs * n_subchannels);
        Self {
            n_bs,
            n_subchannels,
            counts,
        }
    }

    pub fn n_bs(&self) -> usize {
        self.n_bs
    }

    pub fn n_subchannels(&self) -> usize {
        self.n_subchannels
    }

    pub fn get(&self, bs: usize, subchannel: usize) -> u32 {
        self.counts[bs * self.n_subchannels + subchannel]
    }

    pub fn set(&mut self, bs: usize, subchannel: usize, value: u32) {
        self.counts[bs * self.n_subchannels + subchannel] = value;
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn max_entry(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }
}

/// The clustering indicators: which resource block each assigned user occupies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssociationState {
    assignment: BTreeMap<UserId, ResourceBlock>,
    occupancy: Occupancy,
}

impl AssociationState {
    pub fn new(n_bs: usize, n_subchannels: usize) -> Self {
        Self {
            assignment: BTreeMap::new(),
            occupancy: Occupancy::zeros(n_bs, n_subchannels),
        }
    }

    pub fn from_pairs(
        n_bs: usize,
        n_subchannels: usize,
        pairs: impl IntoIterator<Item = (UserId, ResourceBlock)>,
    ) -> Self {
        let mut state = Self::new(n_bs, n_subchannels);
        for (user, rb) in pairs {
            state.assign(user, rb);
        }
        state
    }

    /// Places `user` on `rb`, moving it if it was already assigned elsewhere.
    pub fn assign(&mut self, user: UserId, rb: ResourceBlock) {
        assert!(rb.bs < self.occupancy.n_bs && rb.subchannel < self.occupancy.n_subchannels);
        if let Some(prev) = self.assignment.insert(user, rb) {
            let c = self.occupancy.get(prev.bs, prev.subchannel);
            self.occupancy.set(prev.bs, prev.subchannel, c - 1);
        }
        let c = self.occupancy.get(rb.bs, rb.subchannel);
        self.occupancy.set(rb.bs, rb.subchannel, c + 1);
    }

    pub fn unassign(&mut self, user: UserId) -> Option<ResourceBlock> {
        let prev = self.assignment.remove(&user)?;
        let c = self.occupancy.get(prev.bs, prev.subchannel);
        self.occupancy.set(prev.bs, prev.subchannel, c - 1);
        Some(prev)
    }

    pub fn rb_of(&self, user: UserId) -> Option<ResourceBlock> {
        self.assignment.get(&user).copied()
    }

    /// Users on `rb`, in ascending id order.
    pub fn members(&self, rb: ResourceBlock) -> Vec<UserId> {
        self.assignment
            .iter()
            .filter(|(_, &r)| r == rb)
            .map(|(&u, _)| u)
            .collect()
    }

    pub fn occupancy(&self) -> &Occupancy {
        &self.occupancy
    }

    pub fn assigned_count(&self) -> usize {
        self.assignment.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (UserId, ResourceBlock)> + '_ {
        self.assignment.iter().map(|(&u, &r)| (u, r))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterMember<T> {
    pub id: UserId,
    pub gain: T,
    pub tx_power_w: T,
}

impl<T: Real> ClusterMember<T> {
    pub fn received_power(&self) -> T {
        self.tx_power_w * self.gain
    }
}

/// One resource block's users, weakest gain first.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSnapshot<T> {
    pub bs: usize,
    pub subchannel: usize,
    pub members: Vec<ClusterMember<T>>,
}

impl<T: Real> ClusterSnapshot<T> {
    /// Builds a snapshot, sorting members by ascending gain with ties broken by id.
    pub fn new(bs: usize, subchannel: usize, mut members: Vec<ClusterMember<T>>) -> Self {
        sort_members(&mut members);
        Self {
            bs,
            subchannel,
            members,
        }
    }

    pub fn total_power_w(&self) -> T {
        self.members.iter().map(|m| m.tx_power_w).sum()
    }

    pub fn received_power(&self) -> T {
        let mut total = T::zero();
        for m in &self.members {
            total += m.received_power();
        }
        total
    }
}

fn sort_members<T: Real>(members: &mut [ClusterMember<T>]) {
    members.sort_by(|a, b| {
        a.gain
            .partial_cmp(&b.gain)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.id.cmp(&b.id))
    });
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateReport<T> {
    pub per_user_rate_bps: BTreeMap<UserId, T>,
    pub per_user_sinr: BTreeMap<UserId, T>,
    pub sum_rate_bps: T,
    pub decode_failures: BTreeSet<UserId>,
}

impl<T: Real> RateReport<T> {
    pub fn empty() -> Self {
        Self {
            per_user_rate_bps: BTreeMap::new(),
            per_user_sinr: BTreeMap::new(),
            sum_rate_bps: T::zero(),
            decode_failures: BTreeSet::new(),
        }
    }

    pub fn merge(&mut self, other: RateReport<T>) {
        self.per_user_rate_bps.extend(other.per_user_rate_bps);
        self.per_user_sinr.extend(other.per_user_sinr);
        self.decode_failures.extend(other.decode_failures);
        self.sum_rate_bps += other.sum_rate_bps;
    }

    /// Users decoded with a positive rate.
    pub fn served_users(&self) -> usize {
        self.per_user_rate_bps
            .values()
            .filter(|&&r| r > T::zero())
            .count()
    }
}

/// Constraint identifiers of the sum-rate problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Constraint {
    /// Members of a cluster are not in ascending gain order.
    GainOrder,
    /// Cluster transmit power exceeds P_s.
    PowerCap,
    /// A clustered user falls below the SINR needed for the SIC rate threshold.
    SinrThreshold,
    /// Total clustered users outside the admissible system range.
    SystemLoad,
    /// A cluster holds more than U_s users.
    ClusterLoad,
    /// A user appears in more than one cluster.
    SingleCluster,
}

/// Thermal noise k_b·T_r·B.
pub fn noise_power<T: Real>(config: &NetworkConfig<T>) -> T {
    config.boltzmann * config.resistor_temp_k * config.total_bandwidth_hz
}

/// Active users keyed by id; assigned ids missing from `users` are ignored.
fn active_lookup<T: Real>(users: &[UserTerminal<T>]) -> BTreeMap<UserId, &UserTerminal<T>> {
    users.iter().filter(|u| u.active).map(|u| (u.id, u)).collect()
}

/// Builds every non-empty cluster in resource-block order. Inactive users are left out.
pub fn build_clusters<T: Real>(
    state: &AssociationState,
    users: &[UserTerminal<T>],
) -> Vec<ClusterSnapshot<T>> {
    let lookup = active_lookup(users);
    let occ = state.occupancy();
    let mut per_rb: Vec<Vec<ClusterMember<T>>> =
        vec![Vec::new(); occ.n_bs() * occ.n_subchannels()];
    for (id, rb) in state.iter() {
        if let Some(u) = lookup.get(&id) {
            per_rb[rb.bs * occ.n_subchannels() + rb.subchannel].push(ClusterMember {
                id,
                gain: u.gain,
                tx_power_w: u.tx_power_w,
            });
        }
    }
    per_rb
        .into_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(idx, members)| {
            ClusterSnapshot::new(idx / occ.n_subchannels(), idx % occ.n_subchannels(), members)
        })
        .collect()
}

/// Received power per resource block, row-major.
fn received_per_rb<T: Real>(clusters: &[ClusterSnapshot<T>], n_bs: usize, n_sub: usize) -> Vec<T> {
    let mut received = vec![T::zero(); n_bs * n_sub];
    for c in clusters {
        received[c.bs * n_sub + c.subchannel] += c.received_power();
    }
    received
}

fn interference_from<T: Real>(received: &[T], n_bs: usize, n_sub: usize, bs: usize, sub: usize) -> T {
    let mut total = T::zero();
    for other in (0..n_bs).filter(|&i| i != bs) {
        total += received[other * n_sub + sub];
    }
    total
}

/// Power received at `target_bs` on `subchannel` from users of every other base station.
pub fn inter_cell_interference<T: Real>(
    target_bs: usize,
    subchannel: usize,
    state: &AssociationState,
    users: &[UserTerminal<T>],
) -> T {
    let occ = state.occupancy();
    let clusters = build_clusters(state, users);
    let received = received_per_rb(&clusters, occ.n_bs(), occ.n_subchannels());
    interference_from(&received, occ.n_bs(), occ.n_subchannels(), target_bs, subchannel)
}

/// SINR of every member. A member is interfered by the weaker members of its
/// cluster, which are still undecoded when its turn comes.
pub fn cluster_sinrs<T: Real>(
    cluster: &ClusterSnapshot<T>,
    inter_cell_w: T,
    noise_w: T,
) -> Vec<(UserId, T)> {
    let mut intra = T::zero();
    cluster
        .members
        .iter()
        .map(|m| {
            let signal = m.received_power();
            let sinr = sinr_of(signal, intra, inter_cell_w, noise_w);
            intra += signal;
            (m.id, sinr)
        })
        .collect()
}

#[inline]
fn sinr_of<T: Real>(signal: T, intra: T, inter: T, noise: T) -> T {
    if signal == T::zero() {
        T::zero()
    } else {
        signal / (intra + inter + noise)
    }
}

/// Decodes a cluster strongest-first. Once a decoded user misses the rate
/// threshold, all weaker members fail with rate zero.
pub fn sic_decode<T: Real>(
    cluster: &ClusterSnapshot<T>,
    sinrs: &[(UserId, T)],
    config: &NetworkConfig<T>,
) -> RateReport<T> {
    let bandwidth = config.subchannel_bandwidth_hz();
    let mut report = RateReport::empty();
    let mut cascade_broken = false;
    for &(id, sinr) in sinrs.iter().rev() {
        report.per_user_sinr.insert(id, sinr);
        if cascade_broken {
            report.per_user_rate_bps.insert(id, T::zero());
            report.decode_failures.insert(id);
            continue;
        }
        let rate = bandwidth * (T::one() + sinr).log2();
        report.per_user_rate_bps.insert(id, rate);
        report.sum_rate_bps += rate;
        if rate < config.sic_rate_threshold_bps {
            cascade_broken = true;
        }
    }
    debug_assert_eq!(sinrs.len(), cluster.members.len());
    report
}

/// Rates of a set of clusters, with inter-cell interference taken from the
/// other clusters in the set.
pub fn evaluate_clusters<T: Real>(
    clusters: &[ClusterSnapshot<T>],
    config: &NetworkConfig<T>,
) -> RateReport<T> {
    let noise = noise_power(config);
    let (n_bs, n_sub) = (config.n_bs, config.n_subchannels);
    let received = received_per_rb(clusters, n_bs, n_sub);
    let mut report = RateReport::empty();
    for cluster in clusters {
        let inter = interference_from(&received, n_bs, n_sub, cluster.bs, cluster.subchannel);
        let sinrs = cluster_sinrs(cluster, inter, noise);
        report.merge(sic_decode(cluster, &sinrs, config));
    }
    report
}

pub fn instantaneous_sum_rate<T: Real>(
    state: &AssociationState,
    users: &[UserTerminal<T>],
    config: &NetworkConfig<T>,
) -> RateReport<T> {
    evaluate_clusters(&build_clusters(state, users), config)
}

/// Constraint violations of an association, in identifier order.
pub fn validate<T: Real>(
    state: &AssociationState,
    users: &[UserTerminal<T>],
    config: &NetworkConfig<T>,
) -> Vec<Constraint> {
    let n_active = users.iter().filter(|u| u.active).count();
    validate_clusters(&build_clusters(state, users), n_active, config)
}

/// Checks the constraint system on explicit cluster snapshots. Member order is
/// taken as given, so an unsorted snapshot reports `GainOrder`.
///
/// The system-load lower bound is `min(2, n_active)`: a lone active user may be
/// served on its own.
pub fn validate_clusters<T: Real>(
    clusters: &[ClusterSnapshot<T>],
    n_active: usize,
    config: &NetworkConfig<T>,
) -> Vec<Constraint> {
    let mut violations = BTreeSet::new();
    let noise = noise_power(config);
    let threshold = config.sinr_threshold();
    let (n_bs, n_sub) = (config.n_bs, config.n_subchannels);
    let received = received_per_rb(clusters, n_bs, n_sub);

    let mut seen = BTreeSet::new();
    let mut clustered = 0usize;
    for cluster in clusters {
        if cluster.members.windows(2).any(|w| w[0].gain > w[1].gain) {
            violations.insert(Constraint::GainOrder);
        }
        if cluster.total_power_w() > config.subchannel_power_cap_w {
            violations.insert(Constraint::PowerCap);
        }
        if cluster.members.len() > config.max_cluster_load {
            violations.insert(Constraint::ClusterLoad);
        }
        let inter = interference_from(&received, n_bs, n_sub, cluster.bs, cluster.subchannel);
        if cluster_sinrs(cluster, inter, noise)
            .iter()
            .any(|&(_, s)| s < threshold)
        {
            violations.insert(Constraint::SinrThreshold);
        }
        for m in &cluster.members {
            clustered += 1;
            if !seen.insert(m.id) {
                violations.insert(Constraint::SingleCluster);
            }
        }
    }
    if clustered > 0 && (clustered < n_active.min(2) || clustered > n_active) {
        violations.insert(Constraint::SystemLoad);
    }
    violations.into_iter().collect()
}

/// Draws an active population with a user count uniform on `[2, U_s·N_b·N_s]`.
pub fn sample_active_users<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    config: &NetworkConfig<T>,
    n_total_users: usize,
) -> Result<Vec<UserTerminal<T>>> {
    let max_active = config.max_cluster_load * config.n_resource_blocks();
    sample_users(rng, config, 2..=max_active, n_total_users)
}

/// Draws `count ~ U(count_range)` distinct users out of `population`, each
/// with a gain and a transmit power level picked uniformly from the config.
pub fn sample_users<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    config: &NetworkConfig<T>,
    count_range: RangeInclusive<usize>,
    population: usize,
) -> Result<Vec<UserTerminal<T>>> {
    config.check()?;
    let (lo, hi) = (*count_range.start(), *count_range.end());
    if lo > hi {
        return Err(Error::Config(format!("empty active-user range [{lo}, {hi}]")));
    }
    if hi > population {
        return Err(Error::Config(format!(
            "active-user range reaches {hi} but the population holds {population}"
        )));
    }
    let count = rng.random_range(lo..=hi);
    let mut ids = index::sample(rng, population, count).into_vec();
    ids.sort_unstable();
    let levels_w = config.power_levels_w();
    Ok(ids
        .into_iter()
        .map(|id| {
            let gain = config.gain_levels[rng.random_range(0..config.gain_levels.len())];
            let power = levels_w[rng.random_range(0..levels_w.len())];
            UserTerminal::new(id as u32, gain, power)
        })
        .collect())
}

/// Allocation-free sum-rate evaluation for hot loops.
///
/// Users are given once, pre-sorted by ascending `(gain, id)`; each call
/// supplies a resource-block index per user (or `None`) and transmit powers.
/// The arithmetic is ordered exactly like [`evaluate_clusters`], so both paths
/// agree bit for bit.
#[derive(Clone, Debug)]
pub struct FlatEvaluator<T> {
    n_bs: usize,
    n_sub: usize,
    bandwidth: T,
    rate_threshold: T,
    sinr_threshold: T,
    noise: T,
    received: Vec<T>,
    intra: Vec<T>,
    rb_rate: Vec<T>,
    broken: Vec<bool>,
    sinr: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlatOutcome<T> {
    pub sum_rate_bps: T,
    pub served_users: usize,
    /// Every clustered user meets the SINR threshold.
    pub meets_sinr_threshold: bool,
}

impl<T: Real> FlatEvaluator<T> {
    pub fn new(config: &NetworkConfig<T>) -> Self {
        let n_rb = config.n_resource_blocks();
        Self {
            n_bs: config.n_bs,
            n_sub: config.n_subchannels,
            bandwidth: config.subchannel_bandwidth_hz(),
            rate_threshold: config.sic_rate_threshold_bps,
            sinr_threshold: config.sinr_threshold(),
            noise: noise_power(config),
            received: vec![T::zero(); n_rb],
            intra: vec![T::zero(); n_rb],
            rb_rate: vec![T::zero(); n_rb],
            broken: vec![false; n_rb],
            sinr: Vec::new(),
        }
    }

    /// `rb_of[k]`, `gains[k]`, `powers[k]` describe the k-th user in ascending
    /// `(gain, id)` order.
    pub fn evaluate(&mut self, rb_of: &[Option<usize>], gains: &[T], powers: &[T]) -> FlatOutcome<T> {
        let n = rb_of.len();
        self.received.iter_mut().for_each(|x| *x = T::zero());
        self.intra.iter_mut().for_each(|x| *x = T::zero());
        self.rb_rate.iter_mut().for_each(|x| *x = T::zero());
        self.broken.iter_mut().for_each(|x| *x = false);
        self.sinr.clear();
        self.sinr.resize(n, T::zero());

        for k in 0..n {
            if let Some(rb) = rb_of[k] {
                self.received[rb] += powers[k] * gains[k];
            }
        }
        let mut meets = true;
        for k in 0..n {
            let Some(rb) = rb_of[k] else { continue };
            let (bs, sub) = (rb / self.n_sub, rb % self.n_sub);
            let inter = interference_from(&self.received, self.n_bs, self.n_sub, bs, sub);
            let signal = powers[k] * gains[k];
            let sinr = sinr_of(signal, self.intra[rb], inter, self.noise);
            self.intra[rb] += signal;
            if sinr < self.sinr_threshold {
                meets = false;
            }
            self.sinr[k] = sinr;
        }
        let mut served = 0;
        for k in (0..n).rev() {
            let Some(rb) = rb_of[k] else { continue };
            if self.broken[rb] {
                continue;
            }
            let rate = self.bandwidth * (T::one() + self.sinr[k]).log2();
            self.rb_rate[rb] += rate;
            if rate > T::zero() {
                served += 1;
            }
            if rate < self.rate_threshold {
                self.broken[rb] = true;
            }
        }
        let mut total = T::zero();
        for &r in &self.rb_rate {
            total += r;
        }
        FlatOutcome {
            sum_rate_bps: total,
            served_users: served,
            meets_sinr_threshold: meets,
        }
    }
}

/// Indices of `users` in ascending `(gain, id)` order.
pub fn gain_order<T: Real>(users: &[UserTerminal<T>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..users.len()).collect();
    order.sort_by(|&a, &b| {
        users[a]
            .gain
            .partial_cmp(&users[b].gain)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(users[a].id.cmp(&users[b].id))
    });
    order
}
