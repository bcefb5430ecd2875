use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{exhaustive_best, noma_fixed_power, oma_allocate};
use crate::dqn::DqnAgent;
use crate::error::Result;
use crate::harness::config::{ExperimentConfig, Scenario};
use crate::mdp::{catalog_for, Environment};
use crate::network::{sample_users, UserTerminal};
use crate::sarsa::{self, greedy_rollout, QTable, StagnationMonitor};

/// One episode of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scenario: String,
    pub seed: u64,
    pub episode: usize,
    /// Cumulative reward of the episode; zero for the non-learning allocators.
    pub reward: f64,
    /// Sum rate of the allocation the episode produced.
    pub sum_rate_bps: f64,
    /// Mean loss of the episode's gradient steps, when there were any.
    pub loss: Option<f64>,
    /// Wall-clock seconds per allocation decision.
    pub clustering_time_s: f64,
    /// Users served with a positive rate, summed over episodes so far.
    pub served_users: u64,
}

/// Learned state left behind by a training seed.
#[derive(Clone, Debug)]
pub enum Learner {
    Sarsa(QTable<f64>),
    Dqn(Box<DqnAgent<f64>>),
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub learner: Option<Learner>,
    /// Episode at which a stagnant tabular run handed over to the deep agent.
    pub fallback_episode: Option<usize>,
}

const AGENT_STREAM: u64 = 0;
const EVAL_STREAM_BASE: u64 = 1 << 40;

/// Generator for the users of `episode`. Agents never draw from it, so
/// scenarios sharing a seed and traffic see the same instances.
pub fn instance_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode + 1);
    rng
}

/// Generator for agent decisions and initial associations.
pub fn agent_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(AGENT_STREAM);
    rng
}

/// Generator for held-out evaluation instance `index`.
pub fn evaluation_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(EVAL_STREAM_BASE + index);
    rng
}

pub fn episode_users(cfg: &ExperimentConfig, seed: u64, episode: usize) -> Result<Vec<UserTerminal<f64>>> {
    let episode = if cfg.freeze_instance { 0 } else { episode };
    draw_users(cfg, &mut instance_rng(seed, episode as u64))
}

pub fn draw_users(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Vec<UserTerminal<f64>>> {
    sample_users(
        rng,
        &cfg.network(),
        cfg.traffic.min_users..=cfg.traffic.max_users,
        cfg.population(),
    )
}

fn new_dqn(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<DqnAgent<f64>> {
    let input = cfg.n_bs * cfg.n_subchannels + 2;
    let actions = catalog_for(cfg.n_bs, cfg.n_subchannels).len();
    DqnAgent::new(cfg.dqn(), input, actions, rng)
}

/// Runs every episode of one seed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    cfg.validate()?;
    let net = cfg.network();
    let mut rng = agent_rng(seed);
    let mut records = Vec::with_capacity(cfg.episodes);
    let mut served_total = 0u64;
    let mut fallback_episode = None;

    let mut learner = match cfg.scenario {
        Scenario::SarsaLight => Some(Learner::Sarsa(QTable::for_config(&net)?)),
        Scenario::DqnMedium | Scenario::DqnHeavy => Some(Learner::Dqn(Box::new(new_dqn(cfg, &mut rng)?))),
        _ => None,
    };
    let hyper = cfg.sarsa();
    let mut monitor = cfg.fallback_after_stagnant.map(StagnationMonitor::new);

    for episode in 0..cfg.episodes {
        let users = episode_users(cfg, seed, episode)?;
        let start = Instant::now();
        let (reward, rate, loss, served, decisions) = match (&mut learner, cfg.scenario) {
            (Some(Learner::Sarsa(q)), _) => {
                let mut env = Environment::random_start(net.clone(), users, &mut rng)?;
                let m = sarsa::run_episode(&mut env, q, &hyper, &mut rng)?;
                if let Some(mon) = monitor.as_mut() {
                    if mon.observe(m.cumulative_reward) {
                        fallback_episode = Some(episode);
                        monitor = None;
                    }
                }
                (m.cumulative_reward, m.best_sum_rate, None, m.served_users, cfg.trials)
            }
            (Some(Learner::Dqn(agent)), _) => {
                let mut env = Environment::random_start(net.clone(), users, &mut rng)?;
                let ep = agent.run_episode(&mut env, &mut rng)?;
                let m = &ep.metrics;
                (m.cumulative_reward, m.best_sum_rate, ep.mean_loss(), m.served_users, cfg.trials)
            }
            (None, Scenario::Benchmark) => {
                let r = exhaustive_best(&users, &net)?;
                (0.0, r.best_sum_rate_bps, None, r.served_users, 1)
            }
            (None, Scenario::NomaFixed) => {
                let r = noma_fixed_power(&users, &net, cfg.fixed_power_dbm)?;
                (0.0, r.best_sum_rate_bps, None, r.served_users, 1)
            }
            (None, _) => {
                let r = oma_allocate(&users, &net)?;
                (0.0, r.best_sum_rate_bps, None, r.served_users, 1)
            }
        };
        let elapsed = start.elapsed().as_secs_f64();
        served_total += served as u64;
        records.push(MetricsRecord {
            scenario: cfg.scenario.name().to_string(),
            seed,
            episode,
            reward,
            sum_rate_bps: rate,
            loss,
            clustering_time_s: elapsed / decisions.max(1) as f64,
            served_users: served_total,
        });
        if fallback_episode == Some(episode) {
            learner = Some(Learner::Dqn(Box::new(new_dqn(cfg, &mut rng)?)));
        }
    }
    Ok(SeedRun {
        seed,
        records,
        learner,
        fallback_episode,
    })
}

/// Runs all seeds and joins the records in (seed order, episode) order.
pub fn run_seeds(cfg: &ExperimentConfig) -> Result<Vec<SeedRun>> {
    cfg.validate()?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    if workers <= 1 || cfg.seeds.len() <= 1 {
        return cfg.seeds.iter().map(|&s| run_seed(cfg, s)).collect();
    }
    let mut results: Vec<Option<Result<SeedRun>>> = (0..cfg.seeds.len()).map(|_| None).collect();
    for chunk_start in (0..cfg.seeds.len()).step_by(workers) {
        let chunk = &cfg.seeds[chunk_start..(chunk_start + workers).min(cfg.seeds.len())];
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunk.iter().map(|&s| scope.spawn(move || run_seed(cfg, s))).collect();
            for (i, h) in handles.into_iter().enumerate() {
                results[chunk_start + i] = Some(h.join().expect("seed worker panicked"));
            }
        });
    }
    results.into_iter().map(|r| r.unwrap()).collect()
}

/// Rolls out a trained learner greedily on held-out instances and returns
/// the best sum rate reached on each.
pub fn greedy_evaluation(
    cfg: &ExperimentConfig,
    seed: u64,
    learner: &Learner,
    instances: usize,
) -> Result<Vec<(Vec<UserTerminal<f64>>, f64)>> {
    let net = cfg.network();
    let mut out = Vec::with_capacity(instances);
    for k in 0..instances {
        let mut rng = evaluation_rng(seed, k as u64);
        let users = draw_users(cfg, &mut rng)?;
        let mut env = Environment::random_start(net.clone(), users.clone(), &mut rng)?;
        let m = match learner {
            Learner::Sarsa(q) => greedy_rollout(&mut env, q, cfg.trials, &mut rng)?,
            Learner::Dqn(agent) => agent.greedy_rollout(&mut env, cfg.trials, &mut rng)?,
        };
        out.push((users, m.best_sum_rate));
    }
    Ok(out)
}
