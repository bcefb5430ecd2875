//! Deep Q-network agent: experience replay, a slowly synced target network
//! and a masked squared-error loss on the taken action.

use std::io::{Read, Write};

use rand::Rng;

use crate::adam::{adam_step_mlp, AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::mdp::{encode_drl_state_into, summarize, Environment, EpisodeMetrics, TrialRecord};
use crate::mlp::{Activation, MaskedTarget, Mlp};
use crate::replay::{Experience, ReplayBuffer};
use crate::sarsa::{argmax, epsilon_greedy, read_array, read_exact};
use crate::scalar::Real;

const DQN_MAGIC: &[u8; 4] = b"NDQN";
const DQN_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct DqnConfig<T> {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Transitions collected with random actions before the first gradient step.
    pub pretrain_length: usize,
    /// Environment steps between target syncs.
    pub target_update_interval: usize,
    pub epsilon: T,
    pub gamma: T,
    pub episodes: usize,
    pub trials_per_episode: usize,
    pub adam: AdamConfig<T>,
}

impl<T: Real> Default for DqnConfig<T> {
    fn default() -> Self {
        Self {
            hidden: vec![500, 500],
            activation: Activation::Relu,
            batch_size: 500,
            replay_capacity: 500,
            pretrain_length: 500,
            target_update_interval: 100,
            epsilon: T::lit(0.1),
            gamma: T::lit(0.6),
            episodes: 500,
            trials_per_episode: 500,
            adam: AdamConfig::default(),
        }
    }
}

impl<T: Real> DqnConfig<T> {
    pub fn check(&self) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return Err(Error::Config("batch_size must be in [1, replay_capacity]".into()));
        }
        if self.target_update_interval == 0 {
            return Err(Error::Config("target_update_interval must be at least 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        let unit = |x: T| x >= T::zero() && x <= T::one();
        if !unit(self.epsilon) || !unit(self.gamma) {
            return Err(Error::Config("epsilon and gamma must lie in [0, 1]".into()));
        }
        self.adam.check()
    }

    pub fn widths(&self, input: usize, actions: usize) -> Vec<usize> {
        let mut w = vec![input];
        w.extend_from_slice(&self.hidden);
        w.push(actions);
        w
    }
}

/// The trained network θ and its frozen copy θ′.
#[derive(Clone, Debug, PartialEq)]
pub struct TwinNetworks<T> {
    pub train_net: Mlp<T>,
    target_net: Mlp<T>,
}

impl<T: Real> TwinNetworks<T> {
    pub fn new(train_net: Mlp<T>) -> Self {
        Self {
            target_net: train_net.clone(),
            train_net,
        }
    }

    pub fn target_net(&self) -> &Mlp<T> {
        &self.target_net
    }

    pub fn sync_target(&mut self) {
        self.target_net.clone_from(&self.train_net);
    }
}

/// y = r + γ·max_a′ Q(s′, a′; θ′) for every record.
pub fn target_values<T: Real>(batch: &[&Experience<T>], target_net: &Mlp<T>, gamma: T) -> Result<Vec<T>> {
    batch
        .iter()
        .map(|e| {
            let q = target_net.forward(&e.next_state)?;
            let best = q.iter().copied().fold(T::neg_infinity(), T::max);
            Ok(e.reward + gamma * best)
        })
        .collect()
}

/// Samples a mini-batch, regresses the taken-action outputs of the training
/// network onto the target values and applies one Adam step. Returns the batch loss.
pub fn train_step<T: Real, R: Rng + ?Sized>(
    twins: &mut TwinNetworks<T>,
    buffer: &ReplayBuffer<T>,
    adam: &mut AdamState<T>,
    batch_size: usize,
    gamma: T,
    rng: &mut R,
) -> Result<T> {
    let batch = buffer.sample_minibatch(batch_size, rng)?;
    let ys = target_values(&batch, &twins.target_net, gamma)?;
    let inputs: Vec<Vec<T>> = batch.iter().map(|e| e.state.clone()).collect();
    let targets: Vec<MaskedTarget<T>> = batch
        .iter()
        .zip(ys)
        .map(|(e, value)| MaskedTarget { index: e.action, value })
        .collect();
    let (loss, grads) = twins.train_net.backward(&inputs, &targets)?;
    adam_step_mlp(&mut twins.train_net, &grads, adam)?;
    Ok(loss)
}

pub fn select_action<T: Real, R: Rng + ?Sized>(
    twins: &TwinNetworks<T>,
    state: &[T],
    epsilon: T,
    rng: &mut R,
) -> Result<usize> {
    let q = twins.train_net.forward(state)?;
    Ok(epsilon_greedy(&q, epsilon, rng))
}

/// Episode metrics plus the losses of the gradient steps taken in it.
#[derive(Clone, Debug, PartialEq)]
pub struct DqnEpisode<T> {
    pub metrics: EpisodeMetrics<T>,
    pub losses: Vec<T>,
}

impl<T: Real> DqnEpisode<T> {
    pub fn mean_loss(&self) -> Option<T> {
        if self.losses.is_empty() {
            None
        } else {
            Some(self.losses.iter().copied().sum::<T>() / T::from_usize(self.losses.len()).unwrap())
        }
    }
}

#[derive(Clone, Debug)]
pub struct DqnAgent<T> {
    pub config: DqnConfig<T>,
    pub twins: TwinNetworks<T>,
    pub buffer: ReplayBuffer<T>,
    pub adam: AdamState<T>,
    env_steps: u64,
    grad_steps: u64,
    episodes_run: u64,
}

impl<T: Real> DqnAgent<T> {
    pub fn new<R: Rng + ?Sized>(config: DqnConfig<T>, input: usize, actions: usize, rng: &mut R) -> Result<Self> {
        config.check()?;
        let net = Mlp::new(&config.widths(input, actions), config.activation, rng)?;
        let adam = AdamState::new(config.adam.clone(), net.param_count());
        Ok(Self {
            buffer: ReplayBuffer::new(config.replay_capacity)?,
            twins: TwinNetworks::new(net),
            adam,
            config,
            env_steps: 0,
            grad_steps: 0,
            episodes_run: 0,
        })
    }

    /// Agent sized for an environment: occupancy plus two reward features in,
    /// one output per catalog action.
    pub fn for_env<R: Rng + ?Sized>(config: DqnConfig<T>, env: &Environment<T>, rng: &mut R) -> Result<Self> {
        Self::new(config, env.occupancy().as_slice().len() + 2, env.n_actions(), rng)
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn grad_steps(&self) -> u64 {
        self.grad_steps
    }

    pub fn in_pretrain(&self) -> bool {
        (self.env_steps as usize) < self.config.pretrain_length
    }

    /// One episode of T_e trials: act, remember, train once the pretraining
    /// phase is over and the buffer holds a batch, sync the target on cadence.
    pub fn run_episode<R: Rng + ?Sized>(&mut self, env: &mut Environment<T>, rng: &mut R) -> Result<DqnEpisode<T>> {
        let load = env.config().max_cluster_load;
        let trials = self.config.trials_per_episode;
        let mut trace = Vec::with_capacity(trials);
        let mut losses = Vec::new();
        let mut state = Vec::new();
        let mut next_state = Vec::new();
        let mut total = T::zero();
        encode_drl_state_into(env.occupancy().as_slice(), load, T::zero(), T::zero(), &mut state);
        for t in 1..=trials {
            let action = if self.in_pretrain() {
                rng.random_range(0..env.n_actions())
            } else {
                select_action(&self.twins, &state, self.config.epsilon, rng)?
            };
            let out = env.step(action, rng);
            total += out.reward;
            let avg = total / T::from_usize(t).unwrap();
            encode_drl_state_into(env.occupancy().as_slice(), load, out.reward, avg, &mut next_state);
            self.buffer.remember(Experience {
                state: state.clone(),
                action,
                reward: out.reward,
                next_state: next_state.clone(),
            });
            self.env_steps += 1;
            if !self.in_pretrain() && self.buffer.len() >= self.config.batch_size {
                let loss = train_step(
                    &mut self.twins,
                    &self.buffer,
                    &mut self.adam,
                    self.config.batch_size,
                    self.config.gamma,
                    rng,
                )?;
                self.grad_steps += 1;
                losses.push(loss);
            }
            if self.env_steps % self.config.target_update_interval as u64 == 0 {
                self.twins.sync_target();
            }
            trace.push(TrialRecord {
                action,
                reward: out.reward,
                sum_rate_bps: out.sum_rate_bps,
                valid: out.valid,
            });
            std::mem::swap(&mut state, &mut next_state);
        }
        self.episodes_run += 1;
        Ok(DqnEpisode {
            metrics: summarize(env, trace),
            losses,
        })
    }

    /// Acts greedily for `steps` trials without storing or training.
    pub fn greedy_rollout<R: Rng + ?Sized>(
        &self,
        env: &mut Environment<T>,
        steps: usize,
        rng: &mut R,
    ) -> Result<EpisodeMetrics<T>> {
        let load = env.config().max_cluster_load;
        let mut trace = Vec::with_capacity(steps);
        let mut state = Vec::new();
        let mut total = T::zero();
        encode_drl_state_into(env.occupancy().as_slice(), load, T::zero(), T::zero(), &mut state);
        for t in 1..=steps {
            let action = argmax(&self.twins.train_net.forward(&state)?);
            let out = env.step(action, rng);
            total += out.reward;
            let avg = total / T::from_usize(t).unwrap();
            encode_drl_state_into(env.occupancy().as_slice(), load, out.reward, avg, &mut state);
            trace.push(TrialRecord {
                action,
                reward: out.reward,
                sum_rate_bps: out.sum_rate_bps,
                valid: out.valid,
            });
        }
        Ok(summarize(env, trace))
    }

    /// Run-state checkpoint; the replay buffer and optimizer moments are not kept.
    ///
    /// ```text
    /// magic "NDQN" | version u16 | episodes u64 | env steps u64 | gradient steps u64 |
    /// training network | target network
    /// ```
    ///
    /// Each network uses the layout of [`Mlp::write_to`]; integers little-endian.
    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> Result<()> {
        let io = |e: std::io::Error| Error::Checkpoint(e.to_string());
        w.write_all(DQN_MAGIC).map_err(io)?;
        w.write_all(&DQN_VERSION.to_le_bytes()).map_err(io)?;
        for v in [self.episodes_run, self.env_steps, self.grad_steps] {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        self.twins.train_net.write_to(w)?;
        self.twins.target_net.write_to(w)
    }

    /// Restores networks and counters into an agent built with a matching config.
    pub fn restore_checkpoint<R: Read>(&mut self, r: &mut R) -> Result<()> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != DQN_MAGIC {
            return Err(Error::Checkpoint("not a DQN checkpoint".into()));
        }
        let version = u16::from_le_bytes(read_array(r)?);
        if version != DQN_VERSION {
            return Err(Error::Checkpoint(format!("unsupported DQN version {version}")));
        }
        let episodes = u64::from_le_bytes(read_array(r)?);
        let env_steps = u64::from_le_bytes(read_array(r)?);
        let grad_steps = u64::from_le_bytes(read_array(r)?);
        let train = Mlp::read_from(r)?;
        let target = Mlp::read_from(r)?;
        if train.widths() != self.twins.train_net.widths() || target.widths() != train.widths() {
            return Err(Error::Checkpoint("checkpoint architecture differs from the agent".into()));
        }
        self.twins = TwinNetworks {
            train_net: train,
            target_net: target,
        };
        self.episodes_run = episodes;
        self.env_steps = env_steps;
        self.grad_steps = grad_steps;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{NetworkConfig, UserTerminal};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp(next: Vec<f64>, reward: f64) -> Experience<f64> {
        Experience {
            state: vec![0.0, 0.0],
            action: 0,
            reward,
            next_state: next,
        }
    }

    #[test]
    fn target_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&[2, 4, 3], Activation::Tanh, &mut rng).unwrap();
        let zero = Mlp::zeros(&[2, 4, 3], Activation::Tanh).unwrap();
        let a = exp(vec![0.3, -0.7], -10.0);
        let b = exp(vec![1.0, 1.0], 0.0);
        assert_eq!(target_values(&[&a, &b], &net, 0.0).unwrap(), vec![-10.0, 0.0]);
        assert_eq!(target_values(&[&a, &b], &zero, 0.6).unwrap(), vec![-10.0, 0.0]);

        let mut five = Mlp::zeros(&[2, 1, 3], Activation::Relu).unwrap();
        five.layers_mut()[1].biases = vec![1.0, 5.0, -2.0];
        assert_relative_eq!(target_values(&[&a], &five, 0.6).unwrap()[0], -7.0, max_relative = 1e-12);
    }

    #[test]
    fn select_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::zeros(&[2, 3, 5], Activation::Relu).unwrap();
        net.layers_mut()[1].biases = vec![0.0, 0.1, 0.2, 0.9, 0.3];
        let mut twins = TwinNetworks::new(net);
        assert_eq!(select_action(&twins, &[0.5, 0.5], 0.0, &mut rng).unwrap(), 3);
        twins.train_net.layers_mut()[1].biases.iter_mut().for_each(|b| *b -= 7.0);
        assert_eq!(select_action(&twins, &[0.5, 0.5], 0.0, &mut rng).unwrap(), 3);
        let n = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[select_action(&twins, &[0.5, 0.5], 1.0, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.2).abs() < 0.02);
        }
    }

    #[test]
    fn sync_copies_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut twins = TwinNetworks::new(Mlp::new(&[3, 8, 4], Activation::Sigmoid, &mut rng).unwrap());
        twins.train_net.layers_mut()[0].weights[0] += 1.0;
        assert_ne!(twins.train_net, *twins.target_net());
        twins.sync_target();
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(twins.train_net.forward(&x).unwrap(), twins.target_net().forward(&x).unwrap());
        }
    }

    #[test]
    fn exact_predictions_leave_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::zeros(&[2, 3, 2], Activation::Relu).unwrap();
        let mut twins = TwinNetworks::new(net);
        let mut buf = ReplayBuffer::new(4).unwrap();
        for _ in 0..4 {
            buf.remember(exp(vec![1.0, 0.0], 0.0));
        }
        let mut adam = AdamState::new(AdamConfig::default(), twins.train_net.param_count());
        let before = twins.train_net.clone();
        let loss = train_step(&mut twins, &buf, &mut adam, 4, 0.6, &mut rng).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(twins.train_net, before);
    }

    fn small_config() -> DqnConfig<f64> {
        DqnConfig {
            hidden: vec![16, 16],
            batch_size: 8,
            replay_capacity: 50,
            pretrain_length: 30,
            target_update_interval: 10,
            trials_per_episode: 25,
            adam: AdamConfig {
                learning_rate: 1e-2,
                ..AdamConfig::default()
            },
            ..DqnConfig::default()
        }
    }

    fn env(rng: &mut ChaCha8Rng) -> Environment<f64> {
        let users = vec![
            UserTerminal::new(0, 1e-5, 0.01),
            UserTerminal::new(1, 2e-5, 0.1),
            UserTerminal::new(2, 1.5e-5, 1.0),
            UserTerminal::new(3, 1.0e-5, 0.1),
        ];
        let cfg = NetworkConfig {
            max_cluster_load: 4,
            ..NetworkConfig::default()
        };
        Environment::random_start(cfg, users, rng).unwrap()
    }

    #[test]
    fn pretraining_takes_no_gradient_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut e = env(&mut rng);
        let mut agent = DqnAgent::for_env(small_config(), &e, &mut rng).unwrap();
        let before = agent.twins.train_net.clone();
        let ep = agent.run_episode(&mut e, &mut rng).unwrap();
        assert!(ep.losses.is_empty());
        assert_eq!(agent.grad_steps(), 0);
        assert_eq!(agent.twins.train_net, before);
        let ep = agent.run_episode(&mut e, &mut rng).unwrap();
        assert_eq!(ep.losses.len(), 21);
        assert_eq!(agent.env_steps(), 50);
    }

    #[test]
    fn target_frozen_between_syncs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut e = env(&mut rng);
        let mut cfg = small_config();
        cfg.target_update_interval = 1000;
        cfg.pretrain_length = 0;
        let mut agent = DqnAgent::for_env(cfg, &e, &mut rng).unwrap();
        let frozen = agent.twins.target_net().clone();
        for _ in 0..4 {
            agent.run_episode(&mut e, &mut rng).unwrap();
        }
        assert_eq!(*agent.twins.target_net(), frozen);
        assert_ne!(agent.twins.train_net, frozen);
    }

    #[test]
    fn same_seed_same_losses() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let mut e = env(&mut rng);
            let mut agent = DqnAgent::for_env(small_config(), &e, &mut rng).unwrap();
            (0..4)
                .flat_map(|_| agent.run_episode(&mut e, &mut rng).unwrap().losses)
                .collect::<Vec<f64>>()
        };
        let a = run();
        assert!(!a.is_empty());
        assert_eq!(a, run());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut e = env(&mut rng);
        let mut agent = DqnAgent::for_env(small_config(), &e, &mut rng).unwrap();
        agent.run_episode(&mut e, &mut rng).unwrap();
        agent.run_episode(&mut e, &mut rng).unwrap();
        let mut bytes = Vec::new();
        agent.write_checkpoint(&mut bytes).unwrap();
        let mut fresh = DqnAgent::for_env(small_config(), &e, &mut rng).unwrap();
        fresh.restore_checkpoint(&mut bytes.as_slice()).unwrap();
        assert_eq!(fresh.twins, agent.twins);
        assert_eq!(fresh.env_steps(), 50);
        assert_eq!(fresh.grad_steps(), agent.grad_steps());
        assert!(fresh.restore_checkpoint(&mut &bytes[..10]).is_err());
    }

    #[test]
    fn config_gate() {
        let mut c = DqnConfig::<f64>::default();
        assert!(c.check().is_ok());
        c.batch_size = 501;
        assert!(c.check().is_err());
    }
}
