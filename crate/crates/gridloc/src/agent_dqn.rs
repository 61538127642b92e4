//! The deep Q agent: epsilon-greedy behavior with a per-episode decay
//! schedule, replay memory, TD(0) targets bootstrapped by the live network,
//! one gradient update per environment step, and greedy evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::grid_env::{Action, AgentPos, EnvOpts, GridEnv};
use crate::metrics::{MetricsRow, MetricsSink};
use crate::neuro::loss::{l1_batch_grad, l1_batch_loss};
use crate::neuro::{AdamState, NetSpec, Network, Tensor};
use crate::replay::{ReplayBuffer, Transition};

/// Training hyperparameters; defaults reproduce the reference protocol.
#[derive(Clone, Copy, Debug)]
pub struct Hyperparams {
    pub gamma: f64,
    pub eps_init: f64,
    /// Epsilon decrease per episode (or per step with `per_step_eps_decay`).
    pub eps_decay: f64,
    pub eps_min: f64,
    pub lr: f64,
    pub batch: usize,
    pub steps_per_episode: usize,
    pub episodes: usize,
    pub memory: usize,
    pub seed: u64,
    /// Experimental: decay epsilon every environment step instead of every
    /// episode.
    pub per_step_eps_decay: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            gamma: 0.99,
            eps_init: 0.7,
            eps_decay: 1e-4,
            eps_min: 1e-4,
            lr: 1e-4,
            batch: 128,
            steps_per_episode: 20,
            episodes: 90,
            memory: 15_000,
            seed: 7,
            per_step_eps_decay: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must be in (0,1), got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.eps_init) || !(0.0..=1.0).contains(&self.eps_min) {
            return Err(Error::Config("epsilon values must be in [0,1]".into()));
        }
        if self.eps_min > self.eps_init {
            return Err(Error::Config(format!(
                "eps_min {} exceeds eps_init {}",
                self.eps_min, self.eps_init
            )));
        }
        if self.eps_decay < 0.0 {
            return Err(Error::Config("eps_decay must be >= 0".into()));
        }
        if self.batch == 0 || self.batch > self.memory {
            return Err(Error::Config(format!(
                "batch {} must be in 1..=memory ({})",
                self.batch, self.memory
            )));
        }
        if self.steps_per_episode == 0 || self.episodes == 0 {
            return Err(Error::Config("episodes and steps per episode must be >= 1".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Exploration rate at a 0-based episode index:
/// `max(eps_min, eps_init - episode * eps_decay)`.
pub fn epsilon_at(episode: usize, hp: &Hyperparams) -> f64 {
    (hp.eps_init - episode as f64 * hp.eps_decay).max(hp.eps_min)
}

/// Epsilon-greedy selection: explore uniformly with probability `eps`,
/// otherwise take the argmax with ties broken by lowest action code.
pub fn select_action(q: &[f32; 3], eps: f64, rng: &mut ChaCha8Rng) -> Action {
    if rng.gen::<f64>() < eps {
        Action::from_index(rng.gen_range(0..3))
    } else {
        greedy_action(q)
    }
}

/// Argmax with lowest-code tie break (Stay < Down < Right).
pub fn greedy_action(q: &[f32; 3]) -> Action {
    let mut best = 0usize;
    for i in 1..3 {
        if q[i] > q[best] {
            best = i;
        }
    }
    Action::from_index(best)
}

/// TD(0) target `r + gamma * max_a Q(s', a)`; no terminal masking because
/// the MDP has no terminal states.
pub fn td_target(r: f64, next_q: &[f32; 3], gamma: f64) -> f64 {
    let max_next = next_q.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v));
    r + gamma * max_next as f64
}

/// Everything a training step needs besides the network itself.
pub struct TrainContext<'a> {
    pub envs: &'a [GridEnv],
    pub hp: Hyperparams,
}

impl<'a> TrainContext<'a> {
    pub fn new(envs: &'a [GridEnv], hp: Hyperparams) -> Self {
        TrainContext { envs, hp }
    }

    fn render_batch(&self, refs: &[(usize, AgentPos)]) -> Tensor<f32> {
        let env0 = &self.envs[0];
        let (h, w) = env0.render_dims();
        let mut data = Vec::with_capacity(refs.len() * 2 * h * w);
        for &(image_id, pos) in refs {
            let env = &self.envs[image_id];
            let state: Tensor<f32> = crate::grid_env::render_for(env, pos);
            data.extend_from_slice(state.data());
        }
        Tensor::from_vec(&[refs.len(), 2, h, w], data)
    }
}

/// One gradient update from a uniformly sampled replay batch. Returns `None`
/// without touching the network while the buffer holds fewer than `batch`
/// transitions (reported in metrics, not an error).
pub fn train_step(
    net: &mut Network<f32>,
    adam: &mut AdamState<f32>,
    buffer: &ReplayBuffer,
    ctx: &TrainContext,
    rng: &mut ChaCha8Rng,
) -> Result<Option<f32>> {
    let batch = ctx.hp.batch;
    if buffer.len() < batch {
        return Ok(None);
    }
    let samples: Vec<Transition> = (0..batch).map(|_| *buffer.sample(rng)).collect();

    let cur_refs: Vec<(usize, AgentPos)> = samples.iter().map(|t| (t.image_id, t.pos)).collect();
    let next_refs: Vec<(usize, AgentPos)> =
        samples.iter().map(|t| (t.image_id, t.next_pos)).collect();

    // bootstrap Q values: same network, no gradient flow
    let next_q = net.forward_batch_nocache(&ctx.render_batch(&next_refs))?;
    let cache = net.forward_batch(&ctx.render_batch(&cur_refs))?;
    let pred = cache.output();

    // target equals the prediction except at the taken action, so the L1
    // batch loss reduces to the per-transition error on that action
    let mut target = pred.clone();
    for (i, t) in samples.iter().enumerate() {
        let nq: &[f32] = &next_q.data()[i * 3..(i + 1) * 3];
        let td = td_target(t.reward, &[nq[0], nq[1], nq[2]], ctx.hp.gamma);
        target.data_mut()[i * 3 + t.action.index()] = td as f32;
    }

    let loss = l1_batch_loss(pred, &target);
    let grad = l1_batch_grad(pred, &target);
    let grads = net.backward_batch(&cache, &grad);
    adam.step(&mut net.params, &grads)?;
    Ok(Some(loss))
}

/// Full training loop: per episode draw one training image, run
/// `steps_per_episode` epsilon-greedy steps pushing transitions, update once
/// per step when the buffer is warm, then evaluate greedily on the test set
/// and emit one metrics row.
pub fn train(
    train_ds: &Dataset,
    test_ds: &Dataset,
    hp: Hyperparams,
    opts: EnvOpts,
    sink: &mut dyn MetricsSink,
) -> Result<Network<f32>> {
    hp.validate()?;
    if train_ds.is_empty() || test_ds.is_empty() {
        return Err(Error::Config("training and test datasets must be non-empty".into()));
    }
    let mut envs = build_envs(train_ds, opts)?;
    let test_envs = build_envs(test_ds, opts)?;
    let (h, w) = envs[0].render_dims();
    let mut net: Network<f32> = Network::init(NetSpec::dqn(h, w), hp.seed);
    let mut adam = AdamState::new(&net.spec, hp.lr);
    let mut buffer = ReplayBuffer::new(hp.memory);
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);

    for episode in 0..hp.episodes {
        let image_id = rng.gen_range(0..envs.len());
        let mut eps = if hp.per_step_eps_decay {
            (hp.eps_init - (episode * hp.steps_per_episode) as f64 * hp.eps_decay).max(hp.eps_min)
        } else {
            epsilon_at(episode, &hp)
        };
        envs[image_id].reset::<f32>();
        let mut reward_sum = 0.0f64;
        let mut loss_sum = 0.0f64;
        let mut loss_count = 0usize;
        for step in 0..hp.steps_per_episode {
            if hp.per_step_eps_decay && step > 0 {
                eps = (eps - hp.eps_decay).max(hp.eps_min);
            }
            let pos = envs[image_id].pos();
            let state: Tensor<f32> = envs[image_id].render_state();
            let q = forward_q3(&net, &state)?;
            let action = select_action(&q, eps, &mut rng);
            let (reward, next_pos) = envs[image_id].step_pos(action);
            reward_sum += reward;
            buffer.push(Transition {
                image_id,
                pos,
                action,
                reward,
                next_pos,
            });
            let ctx = TrainContext::new(&envs, hp);
            if let Some(loss) = train_step(&mut net, &mut adam, &buffer, &ctx, &mut rng)? {
                loss_sum += loss as f64;
                loss_count += 1;
            }
        }
        let accuracy = evaluate_envs(&net, &test_envs, hp.steps_per_episode)?;
        sink.record(MetricsRow {
            step: episode as u32 + 1,
            epsilon: Some(eps),
            mean_reward: Some(reward_sum / hp.steps_per_episode as f64),
            train_loss: (loss_count > 0).then_some(loss_sum / loss_count as f64),
            test_accuracy: accuracy,
        });
        log::info!(
            "episode {:>3}: eps {:.4} mean reward {:+.3} test accuracy {:.3}",
            episode + 1,
            eps,
            reward_sum / hp.steps_per_episode as f64,
            accuracy
        );
    }
    Ok(net)
}

/// Greedy (eps = 0) accuracy: the fraction of images whose 20-step rollout
/// ends overlapping the lesion. Rollouts advance in lockstep so the forward
/// passes batch across images; the reduction is a count, so the result does
/// not depend on dataset order.
pub fn evaluate(net: &Network<f32>, ds: &Dataset, steps: usize, opts: EnvOpts) -> Result<f64> {
    let envs = build_envs(ds, opts)?;
    evaluate_envs(net, &envs, steps)
}

fn evaluate_envs(net: &Network<f32>, test_envs: &[GridEnv], steps: usize) -> Result<f64> {
    let mut envs: Vec<GridEnv> = test_envs.to_vec();
    let n = envs.len();
    if n == 0 {
        return Err(Error::Config("evaluation dataset is empty".into()));
    }
    let (h, w) = envs[0].render_dims();
    for env in &mut envs {
        env.reset::<f32>();
    }
    for _ in 0..steps {
        let mut data = Vec::with_capacity(n * 2 * h * w);
        for env in &envs {
            let s: Tensor<f32> = env.render_state();
            data.extend_from_slice(s.data());
        }
        let batch = Tensor::from_vec(&[n, 2, h, w], data);
        let q = net.forward_batch_nocache(&batch)?;
        for (i, env) in envs.iter_mut().enumerate() {
            let row = &q.data()[i * 3..(i + 1) * 3];
            env.step_pos(greedy_action(&[row[0], row[1], row[2]]));
        }
    }
    let hits = envs.iter().filter(|e| e.cell_overlaps(e.pos())).count();
    Ok(hits as f64 / n as f64)
}

pub(crate) fn build_envs(ds: &Dataset, opts: EnvOpts) -> Result<Vec<GridEnv>> {
    ds.items.iter().map(|item| item.to_env(ds.spec, opts)).collect()
}

fn forward_q3(net: &Network<f32>, state: &Tensor<f32>) -> Result<[f32; 3]> {
    let mut shape = vec![1usize];
    shape.extend_from_slice(state.shape());
    let batched = Tensor::from_vec(&shape, state.data().to_vec());
    let out = net.forward_batch_nocache(&batched)?;
    Ok([out.data()[0], out.data()[1], out.data()[2]])
}
