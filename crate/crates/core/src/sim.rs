//! Monte Carlo trajectories and the one-dimensional magnetization chains.
//!
//! Trajectories are reproducible bit for bit: each one draws from a
//! counter-based ChaCha8 stream keyed by (seed, trajectory index), so batches
//! give identical results no matter how many workers run them.

use crate::chain;
use crate::error::{Error, Result};
use crate::exec;
use crate::game::GameSpec;
use crate::subset::SubsetMask;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub seed: u64,
    pub stream: u64,
    pub start: usize,
    pub steps: u64,
    pub final_state: usize,
    /// Visits of X_1..X_steps to each tracked set.
    pub occupation: Vec<u64>,
    /// First t >= 0 with X_t in the tracked set (0 when the start is inside).
    pub first_hit: Vec<Option<u64>>,
    /// Full path X_0..X_steps when recording was requested.
    pub path: Option<Vec<u32>>,
}

/// One step of the dynamics: pick a player uniformly, then resample her
/// strategy from the Boltzmann update.
fn step(g: &GameSpec, beta: f64, state: usize, rng: &mut ChaCha8Rng) -> usize {
    let n = g.n_players();
    let player = rng.gen_range(0..n);
    let sigma = chain::boltzmann_update(g, beta, player, state).expect("validated beta");
    let mut u: f64 = rng.gen();
    for (s, &p) in sigma.iter().enumerate() {
        if u < p {
            return g.index().with_strategy(state, player, s);
        }
        u -= p;
    }
    // numerical leftovers land on the last strategy
    g.index()
        .with_strategy(state, player, g.strategy_counts()[player] - 1)
}

/// Simulates one trajectory on the stream `(seed, stream)`.
pub fn simulate(
    g: &GameSpec,
    beta: f64,
    start: usize,
    steps: u64,
    seed: u64,
    stream: u64,
    tracked: &[SubsetMask],
    record_path: bool,
) -> Result<Trajectory> {
    if start >= g.size() {
        return Err(Error::invalid(format!(
            "start profile {start} out of range for |S| = {}",
            g.size()
        )));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::invalid("beta must be a finite nonnegative real"));
    }
    for mask in tracked {
        if mask.universe() != g.size() {
            return Err(Error::SizeMismatch("tracked set universe".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut state = start;
    let mut occupation = vec![0u64; tracked.len()];
    let mut first_hit: Vec<Option<u64>> = tracked
        .iter()
        .map(|m| if m.contains(start) { Some(0) } else { None })
        .collect();
    let mut path = record_path.then(|| {
        let mut v = Vec::with_capacity(steps as usize + 1);
        v.push(start as u32);
        v
    });
    for t in 1..=steps {
        state = step(g, beta, state, &mut rng);
        for (k, mask) in tracked.iter().enumerate() {
            if mask.contains(state) {
                occupation[k] += 1;
                if first_hit[k].is_none() {
                    first_hit[k] = Some(t);
                }
            }
        }
        if let Some(p) = &mut path {
            p.push(state as u32);
        }
    }
    Ok(Trajectory {
        seed,
        stream,
        start,
        steps,
        final_state: state,
        occupation,
        first_hit,
        path,
    })
}

/// Simulates `count` trajectories on streams `0..count`, in parallel; the
/// result is ordered by stream index and identical across worker counts.
#[allow(clippy::too_many_arguments)]
pub fn simulate_batch(
    g: &GameSpec,
    beta: f64,
    start: usize,
    steps: u64,
    seed: u64,
    count: u64,
    tracked: &[SubsetMask],
    record_path: bool,
) -> Result<Vec<Trajectory>> {
    // validate once up front so the parallel map cannot fail
    simulate(g, beta, start, 0, seed, 0, tracked, false)?;
    Ok(exec::map_indexed(count as usize, |k| {
        simulate(g, beta, start, steps, seed, k as u64, tracked, record_path)
            .expect("validated inputs")
    }))
}

/// Draws `samples` independent single steps from `from` and counts the
/// destinations; the empirical row converges to `P(from, .)`.
pub fn sample_transitions(
    g: &GameSpec,
    beta: f64,
    from: usize,
    samples: u64,
    seed: u64,
) -> Result<Vec<u64>> {
    if from >= g.size() {
        return Err(Error::invalid("start profile out of range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; g.size()];
    for _ in 0..samples {
        counts[step(g, beta, from, &mut rng)] += 1;
    }
    Ok(counts)
}

/// A birth-death chain on `0..=m` with up/down/stay probabilities per state.
#[derive(Debug, Clone, Serialize)]
pub struct BirthDeathChain {
    pub up: Vec<f64>,
    pub down: Vec<f64>,
    pub stay: Vec<f64>,
}

impl BirthDeathChain {
    pub fn new(up: Vec<f64>, down: Vec<f64>, stay: Vec<f64>) -> Result<Self> {
        let m = up.len();
        if m < 2 || down.len() != m || stay.len() != m {
            return Err(Error::SizeMismatch("birth-death rate vectors".into()));
        }
        for i in 0..m {
            let total = up[i] + down[i] + stay[i];
            if up[i] < 0.0 || down[i] < 0.0 || stay[i] < 0.0 || (total - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "rates at state {i} are not a distribution (sum {total})"
                )));
            }
        }
        if down[0] != 0.0 || up[m - 1] != 0.0 {
            return Err(Error::invalid("boundary rates must vanish"));
        }
        Ok(BirthDeathChain { up, down, stay })
    }

    pub fn len(&self) -> usize {
        self.up.len()
    }

    pub fn is_empty(&self) -> bool {
        self.up.is_empty()
    }

    /// The auxiliary walk used for coordination lower bounds:
    /// `p_i = (m-i)/(4m)`, `q_i = (m+i)/(4m)`, `r_i = 1/2` in the interior,
    /// with `p_0 = q_m = r_0 = r_m = 1/2` and `q_0 = p_m = 0` on the
    /// boundary.
    pub fn drifted_walk(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid("need at least two interior states"));
        }
        let mf = m as f64;
        let mut up = vec![0.0; m + 1];
        let mut down = vec![0.0; m + 1];
        let mut stay = vec![0.5; m + 1];
        up[0] = 0.5;
        down[m] = 0.5;
        for i in 1..m {
            up[i] = (mf - i as f64) / (4.0 * mf);
            down[i] = (mf + i as f64) / (4.0 * mf);
            stay[i] = 1.0 - up[i] - down[i];
        }
        BirthDeathChain::new(up, down, stay)
    }

    /// Expected hitting time of `target` from every state, by a tridiagonal
    /// solve of `(I - P) h = 1` off the target.
    pub fn expected_hitting(&self, target: usize) -> Result<Vec<f64>> {
        let m = self.len();
        if target >= m {
            return Err(Error::invalid("target out of range"));
        }
        let others: Vec<usize> = (0..m).filter(|&i| i != target).collect();
        let pos: std::collections::HashMap<usize, usize> =
            others.iter().enumerate().map(|(a, &i)| (i, a)).collect();
        let k = others.len();
        let mut a = DMatrix::<f64>::identity(k, k);
        for (row, &i) in others.iter().enumerate() {
            let mut couple = |j: isize, p: f64| {
                if p == 0.0 {
                    return;
                }
                let j = j as usize;
                if let Some(&col) = pos.get(&j) {
                    a[(row, col)] -= p;
                }
            };
            couple(i as isize, self.stay[i]);
            if i > 0 {
                couple(i as isize - 1, self.down[i]);
            }
            if i + 1 < m {
                couple(i as isize + 1, self.up[i]);
            }
        }
        let h = a
            .lu()
            .solve(&nalgebra::DVector::from_element(k, 1.0))
            .ok_or_else(|| Error::Numerical("birth-death solve is singular".into()))?;
        let mut out = vec![0.0; m];
        for (row, &i) in others.iter().enumerate() {
            out[i] = h[row];
        }
        Ok(out)
    }

    /// Stationary distribution by detailed balance along the path.
    pub fn stationary(&self) -> Vec<f64> {
        let m = self.len();
        let mut w = vec![1.0f64; m];
        for i in 1..m {
            w[i] = w[i - 1] * self.up[i - 1] / self.down[i];
        }
        let z: f64 = w.iter().sum();
        w.into_iter().map(|v| v / z).collect()
    }

    pub fn simulate(&self, start: usize, steps: u64, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = start;
        let mut path = Vec::with_capacity(steps as usize + 1);
        path.push(state);
        for _ in 0..steps {
            let u: f64 = rng.gen();
            state = if u < self.up[state] {
                state + 1
            } else if u < self.up[state] + self.down[state] {
                state - 1
            } else {
                state
            };
            path.push(state);
        }
        path
    }
}

/// Exact projection of an exchangeable binary game onto the count of
/// strategy-0 players: the returned chain lives on `k = 0..=n` and
/// `magnetizations[k] = 2k - n`. Fails on games whose update probabilities
/// depend on more than (own spin, count of others).
pub fn magnetization_chain(g: &GameSpec, beta: f64) -> Result<(BirthDeathChain, Vec<i64>)> {
    let n = g.n_players();
    if g.strategy_counts().iter().any(|&m| m != 2) {
        return Err(Error::invalid("projection requires binary strategies"));
    }
    let ix = g.index();
    // verify exchangeability: sigma_i(.|x_{-i}) must depend only on the count
    // of strategy-0 players among the others
    let mut table: std::collections::HashMap<(usize, usize), (f64, f64)> =
        std::collections::HashMap::new();
    for x in 0..g.size() {
        for i in 0..n {
            let others = (0..n)
                .filter(|&j| j != i && ix.strategy_of(x, j) == 0)
                .count();
            let own = ix.strategy_of(x, i);
            let sigma = chain::boltzmann_update(g, beta, i, x)?;
            let key = (own, others);
            let entry = (sigma[0], sigma[1]);
            match table.get(&key) {
                None => {
                    table.insert(key, entry);
                }
                Some(&(s0, s1)) => {
                    if (s0 - entry.0).abs() > 1e-12 || (s1 - entry.1).abs() > 1e-12 {
                        return Err(Error::invalid(
                            "game is not exchangeable; magnetization is not Markov",
                        ));
                    }
                }
            }
        }
    }
    let nf = n as f64;
    let mut up = vec![0.0; n + 1]; // k -> k+1: a strategy-1 player flips to 0
    let mut down = vec![0.0; n + 1];
    let mut stay = vec![0.0; n + 1];
    for k in 0..=n {
        if k < n {
            // flipping player currently plays 1 and sees k zeros among others
            let (s0, _) = table[&(1, k)];
            up[k] = (nf - k as f64) / nf * s0;
        }
        if k > 0 {
            let (_, s1) = table[&(0, k - 1)];
            down[k] = k as f64 / nf * s1;
        }
        stay[k] = 1.0 - up[k] - down[k];
    }
    let magnetizations: Vec<i64> = (0..=n).map(|k| 2 * k as i64 - n as i64).collect();
    Ok((BirthDeathChain::new(up, down, stay)?, magnetizations))
}

/// The magnetization drift root: the unique positive zero of
/// `f(x) = (e^{bx}(1-x) - e^{-bx}(1+x)) / (e^{bx}(1-x) + e^{-bx}(1+x))`,
/// equivalently of `x = tanh(b x)`, for the scaled temperature `b = beta*n`.
/// Exists only in the supercritical regime `b > 1`.
pub fn solve_cw_zeta_scaled(b: f64) -> Result<f64> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::invalid("scaled beta must be positive"));
    }
    let f = |x: f64| {
        let e = (b * x).exp();
        let num = e * (1.0 - x) - (1.0 + x) / e;
        let den = e * (1.0 - x) + (1.0 + x) / e;
        num / den
    };
    // sign change on (0, 1): f is positive just above 0 iff b > 1
    let lo_probe = f(1e-9);
    if lo_probe <= 0.0 {
        return Err(Error::invalid(format!(
            "subcritical regime: no positive root at scaled beta {b}"
        )));
    }
    let mut lo = 1e-9;
    let mut hi = 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 {
            break;
        }
    }
    let root = 0.5 * (lo + hi);
    if f(root).abs() > 1e-9 && (hi - lo) > 1e-12 {
        return Err(Error::Numerical("zeta bisection did not converge".into()));
    }
    Ok(root)
}

/// Raw-parameter form: the effective drift temperature of the n-player game
/// is `beta * n`.
pub fn solve_cw_zeta(beta: f64, n: usize) -> Result<f64> {
    solve_cw_zeta_scaled(beta * n as f64)
}
