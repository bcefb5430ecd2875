//! Reference allocators: brute-force optimum, orthogonal access and NOMA at a
//! fixed transmit power.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::network::{
    gain_order, noise_power, AssociationState, FlatEvaluator, NetworkConfig, UserId, UserTerminal,
};
use crate::scalar::Real;

/// Largest `assignments × power combinations` product the brute force accepts.
pub const MAX_SEARCH_SIZE: u128 = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkResult<T> {
    pub best_assignment: AssociationState,
    pub best_powers: BTreeMap<UserId, T>,
    pub best_sum_rate_bps: T,
    /// Raw user-to-block assignments visited, before any filtering.
    pub states_evaluated: u64,
    pub served_users: usize,
}

/// Every assignment of every active user to a resource block, with every
/// combination of configured power levels, subject to cluster load, power cap
/// and the SINR threshold. Ties keep the first optimum in lexicographic order
/// of (block of user 0, block of user 1, …), then of power indices.
pub fn exhaustive_best<T: Real>(users: &[UserTerminal<T>], config: &NetworkConfig<T>) -> Result<BenchmarkResult<T>> {
    config.check()?;
    let active: Vec<&UserTerminal<T>> = users.iter().filter(|u| u.active).collect();
    let n = active.len();
    let cells = config.n_resource_blocks();
    let levels = config.power_levels_w();
    let assignments = (cells as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    let combos = (levels.len() as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    let size = assignments.saturating_mul(combos);
    if size > MAX_SEARCH_SIZE {
        return Err(Error::InstanceTooLarge {
            configurations: size,
            limit: MAX_SEARCH_SIZE,
        });
    }

    // Evaluation runs over users in ascending (gain, id) order.
    let owned: Vec<UserTerminal<T>> = active.iter().map(|u| (*u).clone()).collect();
    let order = gain_order(&owned);
    let gains: Vec<T> = order.iter().map(|&k| owned[k].gain).collect();
    let mut evaluator = FlatEvaluator::new(config);
    let mut rb_sorted = vec![None; n];
    let mut powers_sorted = vec![T::zero(); n];

    let mut assignment = vec![0usize; n];
    let mut level_idx = vec![0usize; n];
    let mut load = vec![0usize; cells];
    let mut cluster_power = vec![T::zero(); cells];
    let mut best: Option<(T, Vec<usize>, Vec<usize>, usize)> = None;
    let mut states_evaluated = 0u64;

    loop {
        states_evaluated += 1;
        load.iter_mut().for_each(|l| *l = 0);
        assignment.iter().for_each(|&c| load[c] += 1);
        if load.iter().all(|&l| l <= config.max_cluster_load) {
            for (pos, &k) in order.iter().enumerate() {
                rb_sorted[pos] = Some(assignment[k]);
            }
            level_idx.iter_mut().for_each(|l| *l = 0);
            loop {
                cluster_power.iter_mut().for_each(|p| *p = T::zero());
                for k in 0..n {
                    cluster_power[assignment[k]] += levels[level_idx[k]];
                }
                if cluster_power.iter().all(|&p| p <= config.subchannel_power_cap_w) {
                    for (pos, &k) in order.iter().enumerate() {
                        powers_sorted[pos] = levels[level_idx[k]];
                    }
                    let out = evaluator.evaluate(&rb_sorted, &gains, &powers_sorted);
                    if out.meets_sinr_threshold && best.as_ref().is_none_or(|b| out.sum_rate_bps > b.0) {
                        best = Some((out.sum_rate_bps, assignment.clone(), level_idx.clone(), out.served_users));
                    }
                }
                if !odometer(&mut level_idx, levels.len()) {
                    break;
                }
            }
        }
        if !odometer(&mut assignment, cells) {
            break;
        }
    }

    let (rate, assignment, level_idx, served) = best.ok_or(Error::Infeasible)?;
    let best_assignment = AssociationState::from_pairs(
        config.n_bs,
        config.n_subchannels,
        active.iter().zip(&assignment).map(|(u, &c)| (u.id, config.rb_at(c))),
    );
    let best_powers = active.iter().zip(&level_idx).map(|(u, &l)| (u.id, levels[l])).collect();
    Ok(BenchmarkResult {
        best_assignment,
        best_powers,
        best_sum_rate_bps: rate,
        states_evaluated,
        served_users: served,
    })
}

/// Advances a little-endian-last counter (last digit fastest). Returns false on wrap.
fn odometer(digits: &mut [usize], radix: usize) -> bool {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < radix {
            return true;
        }
        *d = 0;
    }
    false
}

/// The exhaustive search with every user pinned to `fixed_level_dbm`.
pub fn noma_fixed_power<T: Real>(
    users: &[UserTerminal<T>],
    config: &NetworkConfig<T>,
    fixed_level_dbm: T,
) -> Result<BenchmarkResult<T>> {
    if !config.power_levels_dbm.contains(&fixed_level_dbm) {
        return Err(Error::Config(format!(
            "fixed power {fixed_level_dbm} dBm is not a configured level"
        )));
    }
    let pinned = NetworkConfig {
        power_levels_dbm: vec![fixed_level_dbm],
        ..config.clone()
    };
    exhaustive_best(users, &pinned)
}

/// One user per resource block, strongest received power first; blocks fill
/// in row-major order. Users keep their own transmit power and see only
/// co-channel users of other base stations as interference.
pub fn oma_allocate<T: Real>(users: &[UserTerminal<T>], config: &NetworkConfig<T>) -> Result<BenchmarkResult<T>> {
    config.check()?;
    let mut ranked: Vec<&UserTerminal<T>> = users.iter().filter(|u| u.active).collect();
    ranked.sort_by(|a, b| {
        b.received_power()
            .partial_cmp(&a.received_power())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.id.cmp(&b.id))
    });
    let cells = config.n_resource_blocks();
    let served: Vec<&UserTerminal<T>> = ranked.into_iter().take(cells).collect();
    let mut assignment = AssociationState::new(config.n_bs, config.n_subchannels);
    for (cell, u) in served.iter().enumerate() {
        assignment.assign(u.id, config.rb_at(cell));
    }
    let noise = noise_power(config);
    let bandwidth = config.subchannel_bandwidth_hz();
    let mut total = T::zero();
    let mut positive = 0;
    for (cell, u) in served.iter().enumerate() {
        let sub = cell % config.n_subchannels;
        let mut inter = T::zero();
        for (other, v) in served.iter().enumerate() {
            if other != cell && other % config.n_subchannels == sub {
                inter += v.received_power();
            }
        }
        let rate = bandwidth * (T::one() + u.received_power() / (inter + noise)).log2();
        if rate > T::zero() {
            positive += 1;
        }
        total += rate;
    }
    Ok(BenchmarkResult {
        best_powers: served.iter().map(|u| (u.id, u.tx_power_w)).collect(),
        best_assignment: assignment,
        best_sum_rate_bps: total,
        states_evaluated: 1,
        served_users: positive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{instantaneous_sum_rate, sample_users, validate, ResourceBlock};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> NetworkConfig<f64> {
        NetworkConfig::default()
    }

    #[test]
    fn single_user_single_block() {
        let c = NetworkConfig {
            n_bs: 1,
            n_subchannels: 1,
            ..cfg()
        };
        let users = vec![UserTerminal::new(0, 1e-5, 0.01)];
        let r = exhaustive_best(&users, &c).unwrap();
        assert_eq!(r.states_evaluated, 1);
        assert_eq!(r.best_assignment.rb_of(UserId(0)), Some(ResourceBlock::new(0, 0)));
        assert_eq!(r.best_powers[&UserId(0)], 1.0);
    }

    #[test]
    fn raw_assignment_count() {
        let c = NetworkConfig {
            power_levels_dbm: vec![20.0],
            ..cfg()
        };
        let users = vec![
            UserTerminal::new(0, 1e-5, 0.1),
            UserTerminal::new(1, 1.5e-5, 0.1),
            UserTerminal::new(2, 2e-5, 0.1),
        ];
        assert_eq!(exhaustive_best(&users, &c).unwrap().states_evaluated, 64);
    }

    #[test]
    fn result_is_valid_and_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = cfg();
        for _ in 0..20 {
            let users = sample_users(&mut rng, &c, 2..=3, 12).unwrap();
            let r = exhaustive_best(&users, &c).unwrap();
            let powered: Vec<UserTerminal<f64>> = users
                .iter()
                .map(|u| UserTerminal {
                    tx_power_w: r.best_powers[&u.id],
                    ..u.clone()
                })
                .collect();
            assert!(validate(&r.best_assignment, &powered, &c).is_empty());
            let report = instantaneous_sum_rate(&r.best_assignment, &powered, &c);
            assert_eq!(report.sum_rate_bps, r.best_sum_rate_bps);
            assert_eq!(report.served_users(), r.served_users);
        }
    }

    #[test]
    fn fixed_power_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = cfg();
        for _ in 0..10 {
            let users = sample_users(&mut rng, &c, 2..=3, 12).unwrap();
            let full = exhaustive_best(&users, &c).unwrap();
            let fixed = noma_fixed_power(&users, &c, 20.0).unwrap();
            assert!(fixed.best_sum_rate_bps <= full.best_sum_rate_bps);
            let single = NetworkConfig {
                power_levels_dbm: vec![20.0],
                ..c.clone()
            };
            assert_eq!(
                noma_fixed_power(&users, &single, 20.0).unwrap(),
                exhaustive_best(&users, &single).unwrap()
            );
        }
        let users = vec![UserTerminal::new(0, 1e-5, 0.1)];
        assert!(noma_fixed_power(&users, &c, 21.0).is_err());
    }

    #[test]
    fn guard_rejects_large_instances() {
        let c = cfg();
        let users: Vec<UserTerminal<f64>> = (0..10).map(|i| UserTerminal::new(i, 1e-5, 0.1)).collect();
        assert!(matches!(exhaustive_best(&users, &c), Err(Error::InstanceTooLarge { .. })));
    }

    #[test]
    fn oma_examples() {
        let c = cfg();
        let four: Vec<UserTerminal<f64>> = (0..4).map(|i| UserTerminal::new(i, 1e-5, 0.1)).collect();
        let r = oma_allocate(&four, &c).unwrap();
        assert_eq!(r.served_users, 4);
        assert_eq!(r.best_assignment.occupancy().as_slice(), &[1, 1, 1, 1]);

        let ten: Vec<UserTerminal<f64>> = (0..10)
            .map(|i| UserTerminal::new(i, [1e-5, 1.5e-5, 2e-5][i as usize % 3], 0.01 * (i + 1) as f64))
            .collect();
        let r = oma_allocate(&ten, &c).unwrap();
        assert_eq!(r.served_users, 4);
        assert_eq!(r.best_assignment.assigned_count(), 4);
        // Strongest received powers p·g: users 8, 9, 7, 5.
        let mut kept: Vec<u32> = r.best_assignment.iter().map(|(u, _)| u.0).collect();
        kept.sort_unstable();
        assert_eq!(kept, vec![5, 7, 8, 9]);
    }

    #[test]
    fn oma_rate_hand_computed() {
        let c = cfg();
        let users = vec![UserTerminal::new(0, 2e-5, 1.0), UserTerminal::new(1, 1e-5, 1.0)];
        let r = oma_allocate(&users, &c).unwrap();
        let noise = noise_power(&c);
        let expected = 30e3 * (1.0 + 2e-5 / noise).log2() + 30e3 * (1.0 + 1e-5 / noise).log2();
        assert_eq!(r.best_sum_rate_bps, expected);
    }
}
