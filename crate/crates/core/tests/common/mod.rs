#![allow(dead_code)]

//! Test-side reference implementations, written from the formulas and kept
//! free of library helpers other than plain data types.

use noma_alloc::{NetworkConfig, UserTerminal};

pub struct OracleBest {
    pub rate: f64,
    /// Resource-block index per user, in input order.
    pub blocks: Vec<usize>,
    pub powers_w: Vec<f64>,
}

struct Placed {
    id: u32,
    gain: f64,
    power: f64,
    block: usize,
}

/// Sum rate of a full placement, or `None` when it breaks a load, power or
/// SINR constraint.
pub fn placement_rate(placed: &[(u32, f64, f64, usize)], cfg: &NetworkConfig<f64>) -> Option<f64> {
    rate_of(placed, cfg, true)
}

/// Best sum rate over block choices only, users keeping their own powers and
/// no SINR filter: the ceiling for an agent that moves users but never
/// changes their power.
pub fn best_with_own_powers(users: &[UserTerminal<f64>], cfg: &NetworkConfig<f64>) -> f64 {
    let n_blocks = cfg.n_bs * cfg.n_subchannels;
    let mut blocks = vec![0usize; users.len()];
    let mut best = 0.0f64;
    loop {
        let placed: Vec<(u32, f64, f64, usize)> = users
            .iter()
            .zip(&blocks)
            .map(|(u, &b)| (u.id.0, u.gain, u.tx_power_w, b))
            .collect();
        if let Some(r) = rate_of(&placed, cfg, false) {
            best = best.max(r);
        }
        let mut i = 0;
        loop {
            if i == blocks.len() {
                return best;
            }
            blocks[i] += 1;
            if blocks[i] < n_blocks {
                break;
            }
            blocks[i] = 0;
            i += 1;
        }
    }
}

fn rate_of(placed: &[(u32, f64, f64, usize)], cfg: &NetworkConfig<f64>, sinr_filter: bool) -> Option<f64> {
    let placed: Vec<Placed> = placed
        .iter()
        .map(|&(id, gain, power, block)| Placed { id, gain, power, block })
        .collect();
    let n_sub = cfg.n_subchannels;
    let n_blocks = cfg.n_bs * n_sub;
    let noise = 1.380649e-23 * cfg.resistor_temp_k * cfg.total_bandwidth_hz;
    let b_sub = cfg.total_bandwidth_hz / n_sub as f64;
    let gamma_th = 2f64.powf(cfg.sic_rate_threshold_bps * n_sub as f64 / cfg.total_bandwidth_hz) - 1.0;

    let mut total = 0.0;
    for block in 0..n_blocks {
        let mut members: Vec<&Placed> = placed.iter().filter(|p| p.block == block).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() > cfg.max_cluster_load {
            return None;
        }
        if members.iter().map(|m| m.power).sum::<f64>() > cfg.subchannel_power_cap_w {
            return None;
        }
        members.sort_by(|a, b| a.gain.partial_cmp(&b.gain).unwrap().then(a.id.cmp(&b.id)));
        let (bs, sub) = (block / n_sub, block % n_sub);
        let inter: f64 = placed
            .iter()
            .filter(|p| p.block / n_sub != bs && p.block % n_sub == sub)
            .map(|p| p.power * p.gain)
            .sum();
        let sinr: Vec<f64> = (0..members.len())
            .map(|k| {
                let weaker: f64 = members[..k].iter().map(|m| m.power * m.gain).sum();
                members[k].power * members[k].gain / (weaker + inter + noise)
            })
            .collect();
        if sinr_filter && sinr.iter().any(|&s| s < gamma_th) {
            return None;
        }
        // Strongest first; one miss silences everyone weaker.
        let mut block_rate = 0.0;
        for k in (0..members.len()).rev() {
            let rate = b_sub * (1.0 + sinr[k]).log2();
            block_rate += rate;
            if rate < cfg.sic_rate_threshold_bps {
                break;
            }
        }
        total += block_rate;
    }
    Some(total)
}

/// Depth-first search over every (block, power level) choice per user.
pub fn recursive_best(users: &[UserTerminal<f64>], cfg: &NetworkConfig<f64>) -> Option<OracleBest> {
    let levels: Vec<f64> = cfg
        .power_levels_dbm
        .iter()
        .map(|dbm| 10f64.powf(dbm / 10.0) / 1000.0)
        .collect();
    let n_blocks = cfg.n_bs * cfg.n_subchannels;
    let mut best: Option<OracleBest> = None;
    let mut stack: Vec<(u32, f64, f64, usize)> = Vec::new();

    fn go(
        i: usize,
        users: &[UserTerminal<f64>],
        levels: &[f64],
        n_blocks: usize,
        cfg: &NetworkConfig<f64>,
        stack: &mut Vec<(u32, f64, f64, usize)>,
        best: &mut Option<OracleBest>,
    ) {
        if i == users.len() {
            if let Some(rate) = placement_rate(stack, cfg) {
                if best.as_ref().map_or(true, |b| rate > b.rate) {
                    *best = Some(OracleBest {
                        rate,
                        blocks: stack.iter().map(|s| s.3).collect(),
                        powers_w: stack.iter().map(|s| s.2).collect(),
                    });
                }
            }
            return;
        }
        for block in 0..n_blocks {
            for &p in levels {
                stack.push((users[i].id.0, users[i].gain, p, block));
                go(i + 1, users, levels, n_blocks, cfg, stack, best);
                stack.pop();
            }
        }
    }
    go(0, users, &levels, n_blocks, cfg, &mut stack, &mut best);
    best
}

/// Two states, two actions, deterministic transitions.
/// Returns (next_state, reward) for `(state, action)`.
pub fn toy_step(state: usize, action: usize) -> (usize, f64) {
    match (state, action) {
        (0, 0) => (0, -10.0),
        (0, _) => (1, -2.0),
        (1, 0) => (1, -1.0),
        _ => (0, -6.0),
    }
}

/// Optimal action values of the toy MDP by value iteration.
pub fn toy_q_star(gamma: f64) -> [[f64; 2]; 2] {
    let mut q = [[0.0f64; 2]; 2];
    for _ in 0..10_000 {
        let mut next = q;
        for s in 0..2 {
            for a in 0..2 {
                let (s2, r) = toy_step(s, a);
                next[s][a] = r + gamma * q[s2][0].max(q[s2][1]);
            }
        }
        q = next;
    }
    q
}
