//! Exact solvers for a single image's MDP: infinite-horizon value iteration,
//! finite-horizon backward induction, and a tabular TD(0) Q-learner. These
//! are the ground truth the network agent is tested against.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{io_err, Result};
use crate::grid_env::{Action, AgentPos, GridEnv};

/// Exact state-action values for one image's MDP.
#[derive(Clone, Debug)]
pub struct QTable {
    rows: usize,
    cols: usize,
    pub gamma: f64,
    /// Max change of the final sweep (value iteration) or the final
    /// horizon increment (backward induction).
    pub residual: f64,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(rows: usize, cols: usize, gamma: f64) -> Self {
        QTable {
            rows,
            cols,
            gamma,
            residual: f64::INFINITY,
            values: vec![0.0; rows * cols * 3],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, pos: AgentPos, action: Action) -> f64 {
        self.values[(pos.row * self.cols + pos.col) * 3 + action.index()]
    }

    pub fn set(&mut self, pos: AgentPos, action: Action, v: f64) {
        self.values[(pos.row * self.cols + pos.col) * 3 + action.index()] = v;
    }

    /// Max over actions at a state.
    pub fn state_value(&self, pos: AgentPos) -> f64 {
        Action::ALL
            .iter()
            .map(|&a| self.get(pos, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action, ties broken by lowest action code.
    pub fn greedy(&self, pos: AgentPos) -> Action {
        let mut best = Action::Stay;
        let mut best_v = self.get(pos, Action::Stay);
        for a in [Action::Down, Action::Right] {
            let v = self.get(pos, a);
            if v > best_v {
                best_v = v;
                best = a;
            }
        }
        best
    }

    pub fn max_abs_diff(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// CSV dump: `row,col,q_stay,q_down,q_right`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("row,col,q_stay,q_down,q_right\n");
        for row in 0..self.rows {
            for col in 0..self.cols {
                let pos = AgentPos { row, col };
                out.push_str(&format!(
                    "{row},{col},{},{},{}\n",
                    self.get(pos, Action::Stay),
                    self.get(pos, Action::Down),
                    self.get(pos, Action::Right),
                ));
            }
        }
        let mut f = std::fs::File::create(path).map_err(io_err(path))?;
        f.write_all(out.as_bytes()).map_err(io_err(path))
    }
}

/// Synchronous value iteration to the fixed point of
/// `Q(s,a) = r(s,a) + gamma * max_a' Q(s',a')`. Contraction guarantees
/// convergence; sweeps stop when the max change drops below `tol`.
pub fn value_iteration(env: &GridEnv, gamma: f64, tol: f64) -> QTable {
    assert!(gamma > 0.0 && gamma < 1.0, "gamma must be in (0,1)");
    assert!(tol > 0.0, "tolerance must be positive");
    let (rows, cols) = (env.spec().rows(), env.spec().cols());
    let mut q = QTable::zeros(rows, cols, gamma);
    loop {
        let (next, delta) = bellman_sweep(env, gamma, &q);
        q = next;
        q.residual = delta;
        if delta < tol {
            return q;
        }
    }
}

/// One synchronous Bellman-optimality backup; returns the new table and the
/// max absolute change.
fn bellman_sweep(env: &GridEnv, gamma: f64, q: &QTable) -> (QTable, f64) {
    let mut next = QTable::zeros(q.rows, q.cols, gamma);
    let mut delta = 0.0f64;
    for row in 0..q.rows {
        for col in 0..q.cols {
            let pos = AgentPos { row, col };
            for a in Action::ALL {
                let (dest, reward) = env.peek(pos, a);
                let v = reward + gamma * q.state_value(dest);
                delta = delta.max((v - q.get(pos, a)).abs());
                next.set(pos, a, v);
            }
        }
    }
    (next, delta)
}

/// Exact optimal return for exactly `horizon` remaining steps, one table per
/// step-to-go: index `k` holds the (k+1)-step table.
pub fn backward_induction(env: &GridEnv, gamma: f64, horizon: usize) -> Vec<QTable> {
    assert!(horizon >= 1, "horizon must be >= 1");
    let (rows, cols) = (env.spec().rows(), env.spec().cols());
    let mut tables = Vec::with_capacity(horizon);
    let mut prev = QTable::zeros(rows, cols, gamma);
    for _ in 0..horizon {
        let (mut next, delta) = bellman_sweep(env, gamma, &prev);
        next.residual = delta;
        tables.push(next.clone());
        prev = next;
    }
    tables
}

/// Tabular TD(0) Q-learning under a constant epsilon-greedy behavior policy.
/// `iterations` counts environment steps; episodes reset every
/// `steps_per_episode` steps, drawing the environment uniformly from `envs`.
pub fn tabular_q_learning(
    envs: &mut [GridEnv],
    gamma: f64,
    eps: f64,
    alpha: f64,
    steps_per_episode: usize,
    iterations: usize,
    rng: &mut ChaCha8Rng,
) -> QTable {
    assert!(!envs.is_empty());
    assert!(alpha > 0.0 && alpha <= 1.0, "alpha must be in (0,1]");
    let (rows, cols) = (envs[0].spec().rows(), envs[0].spec().cols());
    let mut q = QTable::zeros(rows, cols, gamma);
    let mut env_idx = 0usize;
    for step in 0..iterations {
        if step % steps_per_episode == 0 {
            env_idx = rng.gen_range(0..envs.len());
            envs[env_idx].reset::<f32>();
        }
        let env = &mut envs[env_idx];
        let pos = env.pos();
        let action = if rng.gen::<f64>() < eps {
            Action::from_index(rng.gen_range(0..3))
        } else {
            q.greedy(pos)
        };
        let (reward, next_pos) = env.step_pos(action);
        let target = reward + gamma * q.state_value(next_pos);
        let old = q.get(pos, action);
        q.set(pos, action, old + alpha * (target - old));
    }
    q
}

/// Exhaustive in-place sweeps over every (state, action) pair with step size
/// `alpha`; at `alpha = 1` this is Gauss-Seidel value iteration and reaches
/// the exact fixed point on this deterministic MDP.
pub fn tabular_q_sweeps(env: &GridEnv, gamma: f64, alpha: f64, sweeps: usize) -> QTable {
    let (rows, cols) = (env.spec().rows(), env.spec().cols());
    let mut q = QTable::zeros(rows, cols, gamma);
    for _ in 0..sweeps {
        for row in 0..rows {
            for col in 0..cols {
                let pos = AgentPos { row, col };
                for a in Action::ALL {
                    let (dest, reward) = env.peek(pos, a);
                    let target = reward + gamma * q.state_value(dest);
                    let old = q.get(pos, a);
                    q.set(pos, a, old + alpha * (target - old));
                }
            }
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_env::{greedy_rollout, EnvOpts, GridSpec};
    use rand::SeedableRng;

    fn env_with_lesion_block(block: AgentPos) -> GridEnv {
        let spec = GridSpec::new(240, 240, 60).unwrap();
        let image = vec![0.25f32; 240 * 240];
        let mut mask = vec![0u8; 240 * 240];
        let (rows, cols) = spec.block_pixels(block);
        for r in rows {
            for c in cols.clone() {
                mask[r * spec.image_width + c] = 1;
            }
        }
        GridEnv::new(image, &mask, spec, EnvOpts::default()).unwrap()
    }

    #[test]
    fn overlapping_stay_value_is_geometric_series() {
        let env = env_with_lesion_block(AgentPos { row: 2, col: 2 });
        let q = value_iteration(&env, 0.99, 1e-9);
        let v = q.get(AgentPos { row: 2, col: 2 }, Action::Stay);
        assert!((v - 100.0).abs() < 1e-6, "Q(lesion, stay) = {v}");
    }

    #[test]
    fn entering_action_value_is_also_100() {
        // cell immediately left of a lesion cell: Q(s, Right) = 1 + 0.99*100
        let env = env_with_lesion_block(AgentPos { row: 2, col: 2 });
        let q = value_iteration(&env, 0.99, 1e-9);
        let v = q.get(AgentPos { row: 2, col: 1 }, Action::Right);
        assert!((v - 100.0).abs() < 1e-6, "Q(left-of-lesion, right) = {v}");
    }

    #[test]
    fn start_state_value_matches_hand_path() {
        // lesion at block (2,2): three outside moves then entry from (0,0):
        // -0.5 (1 + g + g^2) + g^3 + g^4 * 100 = 95.54485
        let env = env_with_lesion_block(AgentPos { row: 2, col: 2 });
        let q = value_iteration(&env, 0.99, 1e-9);
        let best = q.state_value(AgentPos::START);
        assert!((best - 95.54485).abs() < 1e-5, "V(start) = {best}");
    }

    #[test]
    fn values_are_bounded_by_reward_range() {
        let env = env_with_lesion_block(AgentPos { row: 1, col: 3 });
        let gamma = 0.99;
        let q = value_iteration(&env, gamma, 1e-9);
        let (lo, hi) = (-2.0 / (1.0 - gamma), 1.0 / (1.0 - gamma));
        for row in 0..4 {
            for col in 0..4 {
                for a in Action::ALL {
                    let v = q.get(AgentPos { row, col }, a);
                    assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
                }
            }
        }
    }

    #[test]
    fn residuals_decrease_monotonically() {
        let env = env_with_lesion_block(AgentPos { row: 3, col: 1 });
        let tables = backward_induction(&env, 0.99, 200);
        // skip the first few sweeps where new states come online
        let resid: Vec<f64> = tables.iter().map(|t| t.residual).collect();
        for w in resid.windows(2).skip(8) {
            assert!(
                w[1] <= w[0] + 1e-12,
                "residual increased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn horizon_one_is_myopic() {
        let env = env_with_lesion_block(AgentPos { row: 2, col: 2 });
        let q1 = &backward_induction(&env, 0.99, 1)[0];
        // non-overlapping cell with non-overlapping neighbors: best is a move
        assert_eq!(q1.state_value(AgentPos::START), -0.5);
        // overlapping cell: best is stay
        assert_eq!(q1.state_value(AgentPos { row: 2, col: 2 }), 1.0);
        assert_eq!(q1.greedy(AgentPos { row: 2, col: 2 }), Action::Stay);
    }

    #[test]
    fn backward_induction_converges_to_value_iteration() {
        // gamma^h / (1 - gamma) bounds the finite-horizon gap; pick h so the
        // bound sits below the comparison tolerance
        let env = env_with_lesion_block(AgentPos { row: 2, col: 2 });
        let gamma = 0.99f64;
        let tol = 1e-4;
        let horizon = 1400; // gamma^1400 / 0.01 = 7.8e-5 < 1e-4
        assert!(gamma.powi(horizon as i32) / (1.0 - gamma) < tol);
        let vi = value_iteration(&env, gamma, 1e-9);
        let bi = backward_induction(&env, gamma, horizon);
        let diff = vi.max_abs_diff(bi.last().unwrap());
        assert!(diff < tol, "max diff {diff}");
    }

    #[test]
    fn backward_induction_matches_vi_at_pinned_bound_gamma_097() {
        // at gamma = 0.97 the horizon-500 bound gamma^500/(1-gamma) = 8.1e-6
        let env = env_with_lesion_block(AgentPos { row: 2, col: 2 });
        let vi = value_iteration(&env, 0.97, 1e-10);
        let bi = backward_induction(&env, 0.97, 500);
        let diff = vi.max_abs_diff(bi.last().unwrap());
        assert!(diff < 1e-4, "max diff {diff}");
    }

    #[test]
    fn greedy_policy_reaches_lesion_within_grid_diameter() {
        for block in [
            AgentPos { row: 0, col: 1 },
            AgentPos { row: 3, col: 3 },
            AgentPos { row: 2, col: 0 },
        ] {
            let mut env = env_with_lesion_block(block);
            let q = value_iteration(&env, 0.99, 1e-9);
            let (traj, success) = greedy_rollout(&mut env, |e| q.greedy(e.pos()), 20);
            assert!(success);
            // reached within (rows-1)+(cols-1) steps
            let reach = traj.iter().position(|&p| p == block).unwrap();
            assert!(reach <= 6, "reached at step {reach}");
        }
    }

    #[test]
    fn exhaustive_alpha_one_sweeps_hit_the_fixed_point() {
        let env = env_with_lesion_block(AgentPos { row: 1, col: 2 });
        let q = tabular_q_sweeps(&env, 0.99, 1.0, 4000);
        let vi = value_iteration(&env, 0.99, 1e-12);
        assert!(q.max_abs_diff(&vi) < 1e-9);
    }

    #[test]
    fn zero_iterations_gives_zero_table() {
        let mut envs = vec![env_with_lesion_block(AgentPos { row: 2, col: 2 })];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = tabular_q_learning(&mut envs, 0.99, 0.3, 0.1, 20, 0, &mut rng);
        for row in 0..4 {
            for col in 0..4 {
                for a in Action::ALL {
                    assert_eq!(q.get(AgentPos { row, col }, a), 0.0);
                }
            }
        }
    }

    #[test]
    fn qtable_csv_has_one_row_per_cell() {
        let env = env_with_lesion_block(AgentPos { row: 2, col: 2 });
        let q = value_iteration(&env, 0.99, 1e-9);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csv");
        q.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 17);
        assert!(text.starts_with("row,col,q_stay,q_down,q_right\n"));
    }
}
