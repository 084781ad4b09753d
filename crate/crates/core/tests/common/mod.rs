#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shaped_horizon::{Potential, RewardTable, StateActionTable, TabularMdp};

/// Random MDP with dense stochastic rows; state `n_states - 1` is terminal
/// when `with_terminal` is set.
pub fn random_mdp(seed: u64, n_states: usize, n_actions: usize, gamma: f64, with_terminal: bool) -> (TabularMdp, RewardTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transitions = Vec::with_capacity(n_states * n_actions * n_states);
    let terminal: Vec<bool> = (0..n_states).map(|s| with_terminal && s == n_states - 1).collect();
    for s in 0..n_states {
        for _ in 0..n_actions {
            if terminal[s] {
                transitions.extend((0..n_states).map(|t| if t == s { 1.0 } else { 0.0 }));
                continue;
            }
            let raw: Vec<f64> = (0..n_states).map(|_| rng.gen::<f64>().powi(3)).collect();
            let total: f64 = raw.iter().sum();
            let mut row: Vec<f64> = raw.iter().map(|x| x / total).collect();
            // push the rounding residue into the largest entry
            let residue = 1.0 - row.iter().sum::<f64>();
            let imax = (0..n_states).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            row[imax] += residue;
            transitions.extend(row);
        }
    }
    let mdp = TabularMdp::new(n_states, n_actions, gamma, transitions, terminal, 100).unwrap();
    let rewards = StateActionTable::from_fn(n_states, n_actions, |s, _| if mdp.is_terminal(s) { 0.0 } else { rng.gen_range(-1.0..1.0) });
    (mdp, RewardTable(rewards))
}

pub fn random_potential(rng: &mut ChaCha8Rng, n_states: usize, scale: f64) -> Potential {
    Potential::new((0..n_states).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Dense Gaussian elimination with partial pivoting: solves `a x = b`.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Shortest number of moves from every cell to the goal, by breadth-first
/// search over the grid graph.
pub fn bfs_distances(spec: &shaped_horizon::GridSpec) -> Vec<usize> {
    use shaped_horizon::gridworld::Move;
    let n = spec.n_states();
    let mut dist = vec![usize::MAX; n];
    let goal = spec.goal_state();
    dist[goal] = 0;
    let mut queue = std::collections::VecDeque::from([goal]);
    while let Some(s) = queue.pop_front() {
        for mv in Move::ALL {
            // moves are reversible on an open grid
            let t = spec.neighbour(s, mv);
            if dist[t] == usize::MAX {
                dist[t] = dist[s] + 1;
                queue.push_back(t);
            }
        }
    }
    dist
}
