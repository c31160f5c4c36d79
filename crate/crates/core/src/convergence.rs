//! Total-variation machinery: exact mixing times, hitting-time tails and
//! expectations, and the numerical bound suite.
//!
//! Distance profiles are evaluated from cached binary powers of the dense
//! active block, so probing `d(t)` costs O(log t) matrix products; the search
//! for the mixing time exploits the monotonicity of `d`, which is asserted on
//! every evaluated grid point rather than assumed silently.

use crate::chain::{self, ChainKind, ChainMatrix};
use crate::dist::{tv_distance_slices, Dist};
use crate::error::{Error, Result};
use crate::exec;
use crate::game::GameSpec;
use crate::spectral;
use crate::subset::SubsetMask;
use nalgebra::DMatrix;
use serde::Serialize;

/// Default step cap for mixing-time searches.
pub const DEFAULT_MIXING_CAP: u64 = 10_000_000;
/// Default step budget for hitting-tail iteration.
pub const DEFAULT_HITTING_BUDGET: u64 = 1_000_000;
/// Exhaustive enumeration cap for the within-L bottleneck minimum.
pub const B_STAR_SUBSET_CAP: usize = 20;

/// Total-variation distance between two distributions.
pub fn tv_distance(a: &Dist, b: &Dist) -> Result<f64> {
    a.tv(b)
}

/// Cached binary powers of the dense active block of a chain.
pub struct DensePowers {
    size: usize,
    members: Vec<usize>,
    pows: Vec<DMatrix<f64>>, // pows[k] = P^(2^k)
    evaluated_d: Vec<(u64, f64)>,
    pi_block: Vec<f64>,
}

impl DensePowers {
    pub fn new(p: &ChainMatrix) -> Result<Self> {
        let (members, m) = p.dense_active();
        if members.len() > spectral::DENSE_EIGEN_CAP {
            return Err(Error::cap(
                "dense evolution",
                spectral::DENSE_EIGEN_CAP,
                members.len(),
                "restrict to a smaller subset",
            ));
        }
        let pi_block: Vec<f64> = members.iter().map(|&x| p.pi().prob(x)).collect();
        Ok(DensePowers {
            size: p.size(),
            members,
            pows: vec![m],
            evaluated_d: Vec::new(),
            pi_block,
        })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    fn pow2(&mut self, k: usize) -> DMatrix<f64> {
        while self.pows.len() <= k {
            let last = self.pows.last().unwrap();
            let next = last * last;
            self.pows.push(next);
        }
        self.pows[k].clone()
    }

    /// `P^t` over the active block.
    pub fn power(&mut self, t: u64) -> DMatrix<f64> {
        let k = self.members.len();
        let mut acc = DMatrix::<f64>::identity(k, k);
        let mut bit = 0;
        let mut rest = t;
        while rest != 0 {
            if rest & 1 == 1 {
                let p2 = self.pow2(bit);
                acc *= p2;
            }
            rest >>= 1;
            bit += 1;
        }
        acc
    }

    fn d_of_matrix(&self, m: &DMatrix<f64>) -> f64 {
        let k = self.members.len();
        (0..k)
            .map(|a| {
                0.5 * (0..k)
                    .map(|b| (m[(a, b)] - self.pi_block[b]).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// `d(t) = max_x ||P^t(x, .) - pi||_TV` over the active block.
    pub fn d(&mut self, t: u64) -> f64 {
        let m = self.power(t);
        let v = self.d_of_matrix(&m);
        self.evaluated_d.push((t, v));
        v
    }

    /// Asserts that the distance profile was non-increasing across every
    /// evaluated grid point.
    pub fn check_monotone(&self) -> Result<()> {
        let mut pts = self.evaluated_d.clone();
        pts.sort_by_key(|&(t, _)| t);
        for w in pts.windows(2) {
            if w[1].1 > w[0].1 + 1e-12 {
                return Err(Error::Numerical(format!(
                    "distance profile not monotone: d({}) = {} rose to d({}) = {}",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(())
    }

    /// Row of `P^t` for the given state, expanded to the full index space.
    pub fn row_at(&mut self, t: u64, state: usize) -> Result<Vec<f64>> {
        let a = self
            .members
            .iter()
            .position(|&x| x == state)
            .ok_or_else(|| Error::invalid(format!("state {state} is not active")))?;
        let m = self.power(t);
        let mut row = vec![0.0; self.size];
        for (b, &y) in self.members.iter().enumerate() {
            row[y] = m[(a, b)];
        }
        Ok(row)
    }
}

/// `d(t)` for a stochastic chain (full or restricted-loop).
pub fn distance_profile(p: &ChainMatrix, t: u64) -> Result<f64> {
    if matches!(p.kind(), ChainKind::Substochastic(_)) {
        return Err(Error::invalid("distance profile needs a stochastic chain"));
    }
    Ok(DensePowers::new(p)?.d(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MixingTime {
    Exact(u64),
    /// The cap was reached with d still above eps; the cap certifies a lower
    /// bound, not a value.
    LowerBound(u64),
}

impl MixingTime {
    pub fn exact(&self) -> Option<u64> {
        match self {
            MixingTime::Exact(t) => Some(*t),
            MixingTime::LowerBound(_) => None,
        }
    }
}

/// Exact `t_mix(eps) = min { t : d(t) <= eps }` by doubling plus bitwise
/// descent on the monotone profile.
pub fn mixing_time(p: &ChainMatrix, eps: f64, cap: u64) -> Result<MixingTime> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid("eps must lie in (0, 1)"));
    }
    let mut dp = DensePowers::new(p)?;
    let result = mixing_time_with(&mut dp, eps, cap)?;
    dp.check_monotone()?;
    Ok(result)
}

fn mixing_time_with(dp: &mut DensePowers, eps: f64, cap: u64) -> Result<MixingTime> {
    if dp.d(0) <= eps {
        return Ok(MixingTime::Exact(0));
    }
    if cap == 0 {
        return Ok(MixingTime::LowerBound(0));
    }
    // doubling phase
    let mut hi = 1u64;
    loop {
        if dp.d(hi) <= eps {
            break;
        }
        if hi >= cap {
            return Ok(MixingTime::LowerBound(cap));
        }
        hi = hi.saturating_mul(2).min(cap);
    }
    if hi == 1 {
        return Ok(MixingTime::Exact(1));
    }
    // bitwise ascent to the largest t in [lo, hi) with d(t) > eps
    let lo = hi / 2;
    let mut t = lo;
    let mut m = dp.power(lo);
    let span = hi - lo;
    let mut step = 1u64 << (63 - span.leading_zeros());
    while step >= 1 {
        if t + step < hi {
            let p2 = dp.power(step);
            let candidate = &m * &p2;
            let d = dp.d_of_matrix(&candidate);
            dp.evaluated_d.push((t + step, d));
            if d > eps {
                t += step;
                m = candidate;
            }
        }
        if step == 1 {
            break;
        }
        step /= 2;
    }
    Ok(MixingTime::Exact(t + 1))
}

/// Mixing time with the cap set from the relaxation-time upper bound
/// `t_mix <= log(4/pi_min) * t_rel`, which terminates on every reversible
/// chain at desk scale; non-reversible chains fall back to the default cap.
pub fn mixing_time_auto(p: &ChainMatrix, eps: f64) -> Result<MixingTime> {
    let cap = match spectral::spectrum(p) {
        Ok(s) if s.reversible && s.lambda_star < 1.0 => {
            let pi_min = p
                .active_members()
                .iter()
                .map(|&x| p.pi().prob(x))
                .fold(f64::INFINITY, f64::min);
            let bound = (4.0 / (eps.min(0.25) * pi_min)).ln() * s.t_rel;
            (bound.ceil() as u64).max(4)
        }
        _ => DEFAULT_MIXING_CAP,
    };
    mixing_time(p, eps, cap)
}

/// Exact hitting structure for a target set: per-start tail table on a
/// doubling grid, expected hitting times, and the eps-hitting times
/// `T^eps(x) = min { t : Pr_x[tau > t] <= eps }`.
#[derive(Debug, Clone, Serialize)]
pub struct HittingProfile {
    pub target: SubsetMask,
    /// Complement of the target; tails and expectations live here.
    pub start_set: SubsetMask,
    pub eps: f64,
    pub grid: Vec<u64>,
    /// `tails[gi][x] = Pr_x[tau_target > grid[gi]]`, zero outside the start
    /// set.
    pub tails: Vec<Vec<f64>>,
    /// Expected hitting times, zero outside the start set.
    pub expected: Vec<f64>,
    /// Per-start eps-hitting time; `None` when the budget was exhausted
    /// first. Starts inside the target report 0.
    pub t_eps: Vec<Option<u64>>,
    pub budget: u64,
}

impl HittingProfile {
    pub fn tail(&self, grid_pos: usize, state: usize) -> f64 {
        self.tails[grid_pos][state]
    }

    pub fn tail_at(&self, t: u64, state: usize) -> Option<f64> {
        let gi = self.grid.iter().position(|&g| g == t)?;
        Some(self.tails[gi][state])
    }

    pub fn max_t_eps(&self) -> Option<u64> {
        let mut worst = 0u64;
        for x in self.start_set.iter() {
            worst = worst.max(self.t_eps[x]?);
        }
        Some(worst)
    }
}

/// Computes the hitting profile of `target` for the full chain by iterating
/// the killed matrix on the complement: `Pr_x[tau > t] = (P_killed^t 1)(x)`,
/// and expectations by solving `(I - P_killed) h = 1` on the complement.
pub fn hitting_profile(
    p: &ChainMatrix,
    target: &SubsetMask,
    eps: f64,
    extra_grid: &[u64],
    budget: u64,
) -> Result<HittingProfile> {
    if !matches!(p.kind(), ChainKind::Full) {
        return Err(Error::invalid("hitting profiles start from the full chain"));
    }
    if target.is_empty() {
        return Err(Error::EmptySubset);
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid("eps must lie in (0, 1)"));
    }
    let l = target.complement();
    let size = p.size();
    let mut grid: Vec<u64> = vec![0];
    let mut g = 1u64;
    while g <= budget {
        grid.push(g);
        g = g.saturating_mul(2);
    }
    grid.extend_from_slice(extra_grid);
    grid.sort_unstable();
    grid.dedup();
    grid.retain(|&t| t <= budget);
    // auto-doubling points beyond the last crossing are dispensable; the
    // caller's own grid points are not
    let required_max = extra_grid.iter().copied().max().unwrap_or(0);

    if l.is_empty() {
        return Ok(HittingProfile {
            target: target.clone(),
            start_set: l,
            eps,
            tails: vec![vec![0.0; size]; grid.len()],
            grid,
            expected: vec![0.0; size],
            t_eps: vec![Some(0); size],
            budget,
        });
    }

    let killed = chain::restrict_kill(p, &l)?;
    let (tails, t_eps) = if l.len() <= DENSE_TAIL_CAP {
        killed_tails_dense(&killed, &l, size, eps, &grid, budget)
    } else {
        killed_tails_stepping(&killed, &l, size, eps, &mut grid, budget, required_max)
    };
    grid.truncate(tails.len());

    let (members, block) = killed.dense_active();
    let k = members.len();
    let a = DMatrix::<f64>::identity(k, k) - block;
    let rhs = nalgebra::DVector::from_element(k, 1.0);
    let h = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("hitting-time solve is singular".into()))?;
    let mut expected = vec![0.0; size];
    for (a, &x) in members.iter().enumerate() {
        expected[x] = h[a];
    }

    Ok(HittingProfile {
        target: target.clone(),
        start_set: l,
        eps,
        grid,
        tails,
        expected,
        t_eps,
        budget,
    })
}

/// Killed blocks up to this order use cached binary powers; beyond it the
/// tails are iterated step by step.
pub const DENSE_TAIL_CAP: usize = 64;

/// Tails and eps-hitting times by linear iteration of the killed matrix;
/// used for large blocks where dense powers would not pay off.
fn killed_tails_stepping(
    killed: &ChainMatrix,
    l: &SubsetMask,
    size: usize,
    eps: f64,
    grid: &mut [u64],
    budget: u64,
    required_max: u64,
) -> (Vec<Vec<f64>>, Vec<Option<u64>>) {
    let mut u: Vec<f64> = (0..size)
        .map(|x| if l.contains(x) { 1.0 } else { 0.0 })
        .collect();
    let mut tails: Vec<Vec<f64>> = Vec::with_capacity(grid.len());
    let mut t_eps: Vec<Option<u64>> = (0..size)
        .map(|x| if l.contains(x) { None } else { Some(0) })
        .collect();
    let mut remaining = l.len();
    let mut gi = 0usize;
    let mut t = 0u64;
    loop {
        if gi < grid.len() && grid[gi] == t {
            tails.push(u.clone());
            gi += 1;
        }
        for x in l.iter() {
            if t_eps[x].is_none() && u[x] <= eps {
                t_eps[x] = Some(t);
                remaining -= 1;
            }
        }
        if (remaining == 0 && (gi >= grid.len() || t >= required_max)) || t >= budget {
            break;
        }
        u = killed.step_function(&u);
        t += 1;
    }
    (tails, t_eps)
}

/// Tails and eps-hitting times from cached binary powers of the killed
/// block. Tails are non-increasing in t per start, so each eps-hitting time
/// is found by a doubling table plus bisection in O(log^2 t) matrix-vector
/// products.
fn killed_tails_dense(
    killed: &ChainMatrix,
    l: &SubsetMask,
    size: usize,
    eps: f64,
    grid: &[u64],
    budget: u64,
) -> (Vec<Vec<f64>>, Vec<Option<u64>>) {
    let (members, block) = killed.dense_active();
    let k = members.len();
    let ones = nalgebra::DVector::from_element(k, 1.0);
    let max_bit = 64 - budget.leading_zeros() as usize;
    // squares[b] = block^(2^b); table[b] = block^(2^b) * 1
    let mut squares: Vec<DMatrix<f64>> = vec![block];
    let mut table: Vec<nalgebra::DVector<f64>> = vec![&squares[0] * &ones];
    for b in 1..=max_bit {
        let next = &squares[b - 1] * &squares[b - 1];
        let v = &next * &ones;
        squares.push(next);
        table.push(v);
    }
    let tail_vec = |t: u64| -> nalgebra::DVector<f64> {
        let mut v = ones.clone();
        let mut rest = t;
        let mut bit = 0usize;
        while rest != 0 {
            if rest & 1 == 1 {
                v = &squares[bit] * v;
            }
            rest >>= 1;
            bit += 1;
        }
        v
    };

    let expand = |v: &nalgebra::DVector<f64>| -> Vec<f64> {
        let mut out = vec![0.0; size];
        for (a, &x) in members.iter().enumerate() {
            out[x] = v[a].max(0.0);
        }
        out
    };
    let tails: Vec<Vec<f64>> = grid
        .iter()
        .map(|&t| {
            if t == 0 {
                expand(&ones)
            } else {
                expand(&tail_vec(t))
            }
        })
        .collect();

    let per_start: Vec<Option<u64>> = exec::map_indexed(k, |a| {
        // first power-of-two horizon that crosses eps
        let mut crossing_bit = None;
        for (b, v) in table.iter().enumerate() {
            if v[a] <= eps {
                crossing_bit = Some(b);
                break;
            }
        }
        let Some(b) = crossing_bit else {
            // never crossed within the doubling table, which extends past the
            // budget; nothing to resolve
            return None;
        };
        if b == 0 {
            return Some(1);
        }
        let (mut lo, mut hi) = (1u64 << (b - 1), 1u64 << b);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if tail_vec(mid)[a] <= eps {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    });
    let mut t_eps: Vec<Option<u64>> = (0..size)
        .map(|x| if l.contains(x) { None } else { Some(0) })
        .collect();
    for (a, &x) in members.iter().enumerate() {
        t_eps[x] = per_start[a].filter(|&t| t <= budget);
    }
    (tails, t_eps)
}

/// Exact asymptotic variance of the empirical mean of `f` along the
/// stationary chain, via the fundamental-matrix solve
/// `(I - P + 1 pi^T) g = f - pi(f)`. Occupation measures along a trajectory
/// are autocorrelated, so Monte Carlo comparisons are calibrated with this
/// instead of the i.i.d. variance.
pub fn asymptotic_variance(p: &ChainMatrix, f: &[f64]) -> Result<f64> {
    if !matches!(p.kind(), ChainKind::Full) {
        return Err(Error::invalid("asymptotic variance needs the full chain"));
    }
    if f.len() != p.size() {
        return Err(Error::SizeMismatch("function length".into()));
    }
    let size = p.size();
    let pi = p.pi();
    let mean: f64 = (0..size).map(|x| pi.prob(x) * f[x]).sum();
    let fc: Vec<f64> = f.iter().map(|&v| v - mean).collect();
    let (_, block) = p.dense_active();
    let mut a = DMatrix::<f64>::identity(size, size) - block;
    for x in 0..size {
        for y in 0..size {
            a[(x, y)] += pi.prob(y);
        }
    }
    let rhs = nalgebra::DVector::from_column_slice(&fc);
    let g = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("fundamental-matrix solve is singular".into()))?;
    let var: f64 = (0..size).map(|x| pi.prob(x) * fc[x] * fc[x]).sum();
    let cross: f64 = (0..size).map(|x| pi.prob(x) * fc[x] * g[x]).sum();
    Ok(2.0 * cross - var)
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub subset: Option<String>,
    pub t: Option<u64>,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundSuiteReport {
    pub checks: Vec<BoundCheck>,
    pub violations: Vec<BoundCheck>,
    pub skipped: Vec<String>,
    pub slack: f64,
    pub t_mix: Option<u64>,
    pub t_rel: f64,
}

/// Verifies, with exact quantities, the relaxation-time sandwich, the
/// bottleneck lower bound on the mixing time, and the killed-matrix hitting
/// inequalities over the given subsets and time grid. Every check that fails
/// beyond `slack` lands in `violations` with its exact numbers.
pub fn verify_bound_suite(
    g: &GameSpec,
    p: &ChainMatrix,
    subsets: &[SubsetMask],
    t_grid: &[u64],
    slack: f64,
) -> Result<BoundSuiteReport> {
    if !matches!(p.kind(), ChainKind::Full) {
        return Err(Error::invalid("the bound suite runs on the full chain"));
    }
    let mut checks: Vec<BoundCheck> = Vec::new();
    let mut skipped: Vec<String> = Vec::new();

    let spec = spectral::spectrum(p)?;
    let t_rel = spec.t_rel;
    // log pi straight from the potential so that huge beta cannot underflow
    // pi_min.
    let log_pi: Vec<f64> = if g.has_potential() {
        chain::log_gibbs(g, p.beta())?
    } else {
        p.pi().values().iter().map(|&v| v.ln()).collect()
    };
    let log_pi_min = log_pi.iter().cloned().fold(f64::INFINITY, f64::min);

    let cap = (((4.0f64 / 0.25).ln() - log_pi_min) * t_rel).ceil() as u64 + 4;
    let t_mix = mixing_time(p, 0.25, cap)?;
    if let Some(tm) = t_mix.exact() {
        let tmf = tm as f64;
        checks.push(BoundCheck {
            name: "relaxation_lower".into(),
            subset: None,
            t: None,
            lhs: (t_rel - 1.0) * 2.0f64.ln(),
            rhs: tmf,
            pass: (t_rel - 1.0) * 2.0f64.ln() <= tmf + slack,
        });
        let upper = ((4.0f64).ln() - log_pi_min) * t_rel;
        checks.push(BoundCheck {
            name: "relaxation_upper".into(),
            subset: None,
            t: None,
            lhs: tmf,
            rhs: upper,
            pass: tmf <= upper + slack,
        });
    } else {
        skipped.push("relaxation sandwich (mixing cap reached)".into());
    }

    let pi = p.pi().clone();
    for l in subsets {
        let label = Some(l.to_string());
        let pl = pi.mass(l);
        if l.is_empty() || pl <= 0.0 {
            skipped.push(format!("empty or massless subset {l}"));
            continue;
        }
        let b = chain::bottleneck(p, l)?;
        if pl <= 0.5 + 1e-12 {
            if let Some(tm) = t_mix.exact() {
                checks.push(BoundCheck {
                    name: "bottleneck_mixing_lower".into(),
                    subset: label.clone(),
                    t: None,
                    lhs: 1.0 / (4.0 * b),
                    rhs: tm as f64,
                    pass: 1.0 / (4.0 * b) <= tm as f64 + slack,
                });
            }
        }
        if l.len() == p.size() {
            skipped.push("hitting lemmas for L = S".into());
            continue;
        }

        let target = l.complement();
        let killed = chain::restrict_kill(p, l)?;
        let lam = spectral::lambda_max_killed(&killed)?;
        let log_mass = log_sum_exp(l.iter().map(|x| log_pi[x]));
        let log_pi_l: Vec<f64> = log_pi.iter().map(|&lp| lp - log_mass).collect();

        // The eps-hitting-time bound also fixes the iteration budget: when
        // the within-L Cheeger minimum is available, running the tails out to
        // the bound lets the inequality resolve instead of being skipped.
        let cheeger = if l.len() <= B_STAR_SUBSET_CAP {
            chain::killed_cheeger_min(p, l, B_STAR_SUBSET_CAP).ok()
        } else {
            None
        };
        let eps_hit = 0.25;
        let t_eps_bound = |x: usize, cheeger_min: f64| {
            cheeger_min.powi(-2) * (2.0 * (1.0 - eps_hit) / eps_hit - log_pi_l[x])
        };
        let mut budget = t_grid.iter().copied().max().unwrap_or(1024).max(1024);
        if let Some(ch) = cheeger {
            if ch > 0.0 {
                let worst = l
                    .iter()
                    .map(|x| t_eps_bound(x, ch))
                    .fold(0.0f64, f64::max);
                if worst.is_finite() {
                    budget = budget.max(worst.ceil() as u64 + 1);
                }
            }
        }
        let profile = hitting_profile(p, &target, eps_hit, t_grid, budget)?;

        for &t in t_grid {
            let Some(gi) = profile.grid.iter().position(|&gt| gt == t) else {
                skipped.push(format!("t = {t} beyond tail budget for {l}"));
                continue;
            };
            let tf = t as f64;
            let max_tail = l.iter().map(|x| profile.tail(gi, x)).fold(0.0f64, f64::max);
            let lower = if lam > 0.0 {
                (tf * lam.ln()).exp()
            } else {
                f64::from(t == 0)
            };
            checks.push(BoundCheck {
                name: "tail_spectral_lower".into(),
                subset: label.clone(),
                t: Some(t),
                lhs: lower,
                rhs: max_tail,
                pass: lower <= max_tail + slack,
            });
            for x in l.iter() {
                let bound = if lam > 0.0 {
                    (tf * lam.ln() - 0.5 * log_pi_l[x]).exp()
                } else {
                    f64::from(t == 0)
                };
                let tail = profile.tail(gi, x);
                checks.push(BoundCheck {
                    name: "tail_spectral_upper".into(),
                    subset: label.clone(),
                    t: Some(t),
                    lhs: tail,
                    rhs: bound,
                    pass: tail <= bound + slack,
                });
            }
            if b < 1.0 {
                let min_escape = l
                    .iter()
                    .map(|x| 1.0 - profile.tail(gi, x))
                    .fold(f64::INFINITY, f64::min);
                let bound = tf * b / (1.0 - b);
                checks.push(BoundCheck {
                    name: "escape_bottleneck_upper".into(),
                    subset: label.clone(),
                    t: Some(t),
                    lhs: min_escape,
                    rhs: bound,
                    pass: min_escape <= bound + slack,
                });
            } else {
                skipped.push(format!("escape bound for {l} (B = 1)"));
            }
        }

        match cheeger {
            Some(ch) if ch > 0.0 => {
                for x in l.iter() {
                    let bound = t_eps_bound(x, ch);
                    match profile.t_eps[x] {
                        Some(te) => checks.push(BoundCheck {
                            name: "t_eps_upper".into(),
                            subset: label.clone(),
                            t: Some(te),
                            lhs: te as f64,
                            rhs: bound,
                            pass: te as f64 <= bound + slack,
                        }),
                        // the budget covered the bound, so an unresolved
                        // hitting time is a genuine violation
                        None => checks.push(BoundCheck {
                            name: "t_eps_upper".into(),
                            subset: label.clone(),
                            t: None,
                            lhs: profile.budget as f64,
                            rhs: bound,
                            pass: false,
                        }),
                    }
                }
            }
            _ => skipped.push(format!("killed Cheeger minimum unavailable for {l}")),
        }
    }

    let violations: Vec<BoundCheck> = checks.iter().filter(|c| !c.pass).cloned().collect();
    Ok(BoundSuiteReport {
        checks,
        violations,
        skipped,
        slack,
        t_mix: t_mix.exact(),
        t_rel,
    })
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = values.collect();
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + vals.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// All connected subsets of the active space up to `max_size`.
pub fn connected_subset_family(p: &ChainMatrix, max_size: usize) -> Vec<SubsetMask> {
    let scope = p.active();
    let mut out = Vec::new();
    chain::enumerate_connected(p.index(), &scope, max_size, |m| out.push(m.clone()));
    out
}

/// Worst TV distance of `P^t(x, .)` to `mu` over the given starts; the
/// per-start expansions run as independent parallel tasks.
pub fn max_tv_to(dp: &mut DensePowers, starts: &[usize], t: u64, mu: &Dist) -> Result<f64> {
    let m = dp.power(t);
    let members = dp.members().to_vec();
    let pos: std::collections::HashMap<usize, usize> =
        members.iter().enumerate().map(|(a, &x)| (x, a)).collect();
    let size = mu.len();
    let tvs = exec::map_indexed(starts.len(), |si| {
        let a = pos[&starts[si]];
        let mut row = vec![0.0; size];
        for (b, &y) in members.iter().enumerate() {
            row[y] = m[(a, b)];
        }
        tv_distance_slices(&row, mu.values()).unwrap()
    });
    Ok(tvs.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::build_chain;
    use crate::zoo;
    use approx::assert_abs_diff_eq;

    #[test]
    fn distance_at_zero_is_one_minus_min_mass() {
        let g = zoo::ladder2();
        let p = build_chain(&g, (2.0f64).ln()).unwrap();
        let d0 = distance_profile(&p, 0).unwrap();
        assert_abs_diff_eq!(d0, 1.0 - 1.0 / 9.0, epsilon = 1e-12);
    }

    #[test]
    fn single_player_uniform_update_mixes_in_one_step() {
        let g = crate::zoo::make_random_potential(&[3], 0, 0.0, 4096).unwrap();
        let p = build_chain(&g, 0.0).unwrap();
        assert_eq!(distance_profile(&p, 1).unwrap(), 0.0);
        assert_eq!(mixing_time(&p, 0.25, 100).unwrap(), MixingTime::Exact(1));
    }

    #[test]
    fn mixing_time_matches_brute_force_grid() {
        // brute-force oracle: evolve every row step by step and scan t
        let g = zoo::ladder2();
        for beta in [0.0, 0.7, 1.5] {
            let p = build_chain(&g, beta).unwrap();
            let pi = p.pi().clone();
            let mut rows: Vec<Vec<f64>> = (0..4)
                .map(|x| {
                    let mut r = vec![0.0; 4];
                    r[x] = 1.0;
                    r
                })
                .collect();
            let mut oracle = None;
            for _t in 0..=200u64 {
                let d = rows
                    .iter()
                    .map(|r| tv_distance_slices(r, pi.values()).unwrap())
                    .fold(0.0f64, f64::max);
                if d <= 0.25 {
                    oracle = Some(_t);
                    break;
                }
                rows = rows.iter().map(|r| p.step_distribution(r)).collect();
            }
            let got = mixing_time(&p, 0.25, 10_000).unwrap();
            assert_eq!(got, MixingTime::Exact(oracle.unwrap()), "beta = {beta}");
        }
    }

    #[test]
    fn mixing_time_eps_scaling_bound() {
        let g = zoo::ladder2();
        let p = build_chain(&g, 0.9).unwrap();
        let t_quarter = mixing_time(&p, 0.25, 10_000).unwrap().exact().unwrap();
        for eps in [0.1, 0.01, 1e-3] {
            let t_eps = mixing_time(&p, eps, 100_000).unwrap().exact().unwrap();
            let factor = (1.0f64 / eps).log2().ceil();
            assert!(
                t_eps as f64 <= factor * t_quarter as f64,
                "t({eps}) = {t_eps} vs {factor} * {t_quarter}"
            );
        }
    }

    #[test]
    fn mixing_cap_reports_lower_bound() {
        let g = crate::zoo::make_pure_coordination(4).unwrap();
        let p = build_chain(&g, 8.0).unwrap();
        match mixing_time(&p, 0.25, 8).unwrap() {
            MixingTime::LowerBound(8) => {}
            other => panic!("expected a lower bound, got {other:?}"),
        }
    }

    #[test]
    fn mixing_time_auto_terminates_on_slow_chains() {
        let g = crate::zoo::make_pure_coordination(3).unwrap();
        let p = build_chain(&g, 6.0).unwrap();
        let t = mixing_time_auto(&p, 0.25).unwrap();
        assert!(t.exact().is_some());
    }

    #[test]
    fn restricted_chain_mixing_time_is_supported() {
        let g = zoo::ladder2();
        let p = build_chain(&g, 0.5).unwrap();
        let l = SubsetMask::from_indices(4, &[0, 1]).unwrap();
        let r = chain::restrict_loop(&p, &l).unwrap();
        let t = mixing_time(&r, 0.25, 10_000).unwrap();
        assert!(t.exact().is_some());
    }

    #[test]
    fn hitting_single_player_geometric() {
        let g = crate::zoo::make_random_potential(&[2], 0, 0.0, 4096).unwrap();
        let p = build_chain(&g, 0.0).unwrap();
        let target = SubsetMask::singleton(2, 1);
        let prof = hitting_profile(&p, &target, 0.25, &[1], 1000).unwrap();
        // Pr[tau <= 1] = 1/2 and E[tau] = 2 for a geometric(1/2) escape
        let gi = prof.grid.iter().position(|&t| t == 1).unwrap();
        assert_abs_diff_eq!(1.0 - prof.tail(gi, 0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(prof.expected[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn hitting_ladder2_single_exit_edge() {
        let g = zoo::ladder2();
        let p = build_chain(&g, (2.0f64).ln()).unwrap();
        let target = SubsetMask::from_indices(4, &[1, 3]).unwrap();
        let prof = hitting_profile(&p, &target, 0.25, &[1], 1000).unwrap();
        let gi = prof.grid.iter().position(|&t| t == 1).unwrap();
        assert_abs_diff_eq!(1.0 - prof.tail(gi, 0), 1.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn hitting_tails_match_dense_power_oracle() {
        let g = crate::zoo::make_random_potential(&[2, 3], 13, 1.0, 4096).unwrap();
        let p = build_chain(&g, 1.2).unwrap();
        let target = SubsetMask::from_indices(6, &[2, 5]).unwrap();
        let prof = hitting_profile(&p, &target, 0.25, &[3, 7], 512).unwrap();
        let killed = chain::restrict_kill(&p, &target.complement()).unwrap();
        let (members, block) = killed.dense_active();
        for (gi, &t) in prof.grid.iter().enumerate() {
            let mut m = DMatrix::<f64>::identity(members.len(), members.len());
            for _ in 0..t {
                m = &m * &block;
            }
            let ones = nalgebra::DVector::from_element(members.len(), 1.0);
            let tails = &m * ones;
            for (a, &x) in members.iter().enumerate() {
                assert!(
                    (prof.tail(gi, x) - tails[a]).abs() <= 1e-12,
                    "t = {t}, x = {x}"
                );
            }
        }
    }

    #[test]
    fn t_eps_is_monotone_in_eps() {
        let g = crate::zoo::make_pure_coordination(3).unwrap();
        let p = build_chain(&g, 2.0).unwrap();
        let target = SubsetMask::singleton(8, 0);
        let mut previous: Option<Vec<Option<u64>>> = None;
        for eps in [0.5, 0.25, 0.1, 0.05] {
            let prof = hitting_profile(&p, &target, eps, &[], 100_000).unwrap();
            if let Some(prev) = previous {
                for x in prof.start_set.iter() {
                    assert!(prof.t_eps[x].unwrap() >= prev[x].unwrap());
                }
            }
            previous = Some(prof.t_eps.clone());
        }
    }

    #[test]
    fn bound_suite_ladder2_holds() {
        let g = zoo::ladder2();
        let p = build_chain(&g, (2.0f64).ln()).unwrap();
        let l = SubsetMask::from_indices(4, &[0, 2]).unwrap();
        let report = verify_bound_suite(&g, &p, &[l], &[1, 2, 4, 8], 1e-8).unwrap();
        assert!(report.violations.is_empty(), "{:?}", report.violations);
    }

    #[test]
    fn bound_suite_skips_the_full_space_gracefully() {
        let g = zoo::ladder2();
        let p = build_chain(&g, 0.3).unwrap();
        let report = verify_bound_suite(&g, &p, &[SubsetMask::full(4)], &[1, 2], 1e-8).unwrap();
        assert!(report.violations.is_empty());
        assert!(report.skipped.iter().any(|s| s.contains("L = S")));
    }

    #[test]
    fn asymptotic_variance_of_constant_is_zero() {
        let g = zoo::ladder2();
        let p = build_chain(&g, 0.8).unwrap();
        let v = asymptotic_variance(&p, &[3.0; 4]).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn asymptotic_variance_two_state_closed_form() {
        // for an indicator on a two-state chain with second eigenvalue lambda,
        // sigma^2 = Var * (1 + lambda) / (1 - lambda); here lambda = 0.
        let g = crate::zoo::make_random_potential(&[2], 0, 0.0, 4096).unwrap();
        let p = build_chain(&g, 0.0).unwrap();
        let v = asymptotic_variance(&p, &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(v, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn max_tv_reuses_powers_consistently() {
        let g = zoo::ladder2();
        let p = build_chain(&g, 0.9).unwrap();
        let mut dp = DensePowers::new(&p).unwrap();
        let pi = p.pi().clone();
        let d3 = distance_profile(&p, 3).unwrap();
        let via_helper = max_tv_to(&mut dp, &[0, 1, 2, 3], 3, &pi).unwrap();
        assert_abs_diff_eq!(d3, via_helper, epsilon = 1e-13);
    }
}
