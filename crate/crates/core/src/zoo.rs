//! Named game families with their exact potentials.
//!
//! Binary families encode the spin +1 as strategy 0 and -1 as strategy 1, so
//! the all-plus profile is index 0 and the all-minus profile is index |S|-1.

use crate::error::{Error, Result};
use crate::game::{GameSpec, DEFAULT_SIZE_CAP};
use crate::profile::ProfileIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    PureCoordination,
    CurieWeiss,
    RingCoordination,
    Pigou,
    Counterexample,
    RandomPotential,
    /// Two-player ladder fixture with potential (0, 1, 1, 2); small enough to
    /// check everything by hand.
    Ladder2,
}

impl Family {
    pub fn all() -> &'static [Family] {
        &[
            Family::PureCoordination,
            Family::CurieWeiss,
            Family::RingCoordination,
            Family::Pigou,
            Family::Counterexample,
            Family::RandomPotential,
            Family::Ladder2,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::PureCoordination => "pure_coordination",
            Family::CurieWeiss => "curie_weiss",
            Family::RingCoordination => "ring_coordination",
            Family::Pigou => "pigou",
            Family::Counterexample => "counterexample",
            Family::RandomPotential => "random_potential",
            Family::Ladder2 => "ladder2",
        }
    }

    pub fn parse(name: &str) -> Result<Family> {
        Family::all()
            .iter()
            .find(|f| f.name() == name)
            .copied()
            .ok_or_else(|| {
                let valid: Vec<&str> = Family::all().iter().map(|f| f.name()).collect();
                Error::invalid(format!(
                    "unknown game family '{name}'; valid families: {}",
                    valid.join(", ")
                ))
            })
    }
}

/// Spin value of a binary strategy: 0 -> +1, 1 -> -1.
#[inline]
pub fn spin(strategy: usize) -> i64 {
    1 - 2 * strategy as i64
}

/// Magnetization `M(x) = sum_i x_i` of a profile of a binary game.
pub fn magnetization(ix: &ProfileIndex, profile: usize) -> Result<i64> {
    if ix.radices().iter().any(|&m| m != 2) {
        return Err(Error::invalid("magnetization requires binary strategies"));
    }
    Ok((0..ix.n_players())
        .map(|i| spin(ix.strategy_of(profile, i)))
        .sum())
}

/// Consensus profiles of a game where all players share the same strategy
/// count: the index of (s, s, ..., s) for each strategy s.
pub fn consensus_profiles(ix: &ProfileIndex) -> Result<Vec<usize>> {
    let m = ix.radices()[0];
    if ix.radices().iter().any(|&mi| mi != m) {
        return Err(Error::invalid(
            "consensus profiles require equal strategy counts",
        ));
    }
    (0..m)
        .map(|s| ix.encode(&vec![s; ix.n_players()]))
        .collect()
}

/// The two-player ladder fixture: binary strategies, potential (0, 1, 1, 2)
/// over profile indices, utilities -phi.
pub fn ladder2() -> GameSpec {
    GameSpec::from_potential(
        Some("ladder2".into()),
        vec![2, 2],
        vec![0.0, 1.0, 1.0, 2.0],
    )
    .expect("ladder2 is well-formed")
}

/// Pure coordination: utility 1 when all players play the same strategy,
/// 0 otherwise; potential -1 on the consensus profiles and 0 elsewhere.
pub fn make_pure_coordination(n: usize) -> Result<GameSpec> {
    if n < 1 {
        return Err(Error::invalid("pure coordination requires n >= 1"));
    }
    let ix = ProfileIndex::new(&vec![2; n])?;
    let size = ix.size();
    let consensus = consensus_profiles(&ix)?;
    let mut phi = vec![0.0; size];
    let mut util = vec![0.0; size];
    for &c in &consensus {
        phi[c] = -1.0;
        util[c] = 1.0;
    }
    let mut utilities = Vec::with_capacity(n * size);
    for _ in 0..n {
        utilities.extend_from_slice(&util);
    }
    GameSpec::new(
        Some("pure_coordination".into()),
        vec![2; n],
        utilities,
        Some(phi),
    )
}

/// Curie-Weiss: `u_i(x) = x_i * sum_{j != i} x_j` over spins, with exact
/// potential `phi(x) = -sum_{j < k} x_j x_k` (unordered pairs).
pub fn make_curie_weiss(n: usize) -> Result<GameSpec> {
    if n < 2 {
        return Err(Error::invalid("Curie-Weiss requires n >= 2"));
    }
    let ix = ProfileIndex::new(&vec![2; n])?;
    let size = ix.size();
    let mut phi = vec![0.0; size];
    let mut utilities = vec![0.0; n * size];
    for x in 0..size {
        let m = magnetization(&ix, x)? as f64;
        // sum_{j<k} x_j x_k = (M^2 - n)/2 for +-1 spins
        phi[x] = -(m * m - n as f64) / 2.0;
        for i in 0..n {
            let si = spin(ix.strategy_of(x, i)) as f64;
            utilities[i * size + x] = si * (m - si);
        }
    }
    GameSpec::new(Some("curie_weiss".into()), vec![2; n], utilities, Some(phi))
}

/// Graphical coordination game on the ring: each adjacent pair plays a 2x2
/// coordination game with payoffs a (both +), b (both -), c/d (mismatched),
/// requiring a > d and b > c.
///
/// The per-edge exact potential is anchored at phi(+,+) = 0, which forces
/// phi(+,-) = phi(-,+) = a - d and phi(-,-) = (a - d) - (b - c); the game
/// potential is the sum over the ring edges.
pub fn make_ring_coordination(n: usize, a: f64, b: f64, c: f64, d: f64) -> Result<GameSpec> {
    if n < 3 {
        return Err(Error::invalid("ring coordination requires n >= 3"));
    }
    if !(a > d) || !(b > c) {
        return Err(Error::invalid(
            "ring coordination requires a > d and b > c",
        ));
    }
    let ix = ProfileIndex::new(&vec![2; n])?;
    let size = ix.size();
    // payoff[s][t]: row player's payoff when playing s against t
    let payoff = [[a, c], [d, b]];
    let edge_phi = [[0.0, a - d], [a - d, (a - d) - (b - c)]];
    let mut phi = vec![0.0; size];
    let mut utilities = vec![0.0; n * size];
    for x in 0..size {
        for i in 0..n {
            let si = ix.strategy_of(x, i);
            let sj = ix.strategy_of(x, (i + 1) % n);
            phi[x] += edge_phi[si][sj];
            utilities[i * size + x] += payoff[si][sj];
            utilities[((i + 1) % n) * size + x] += payoff[sj][si];
        }
    }
    Ok(GameSpec::new(
        Some("ring_coordination".into()),
        vec![2; n],
        utilities,
        Some(phi),
    )?
    .with_param("a", a)
    .with_param("b", b)
    .with_param("c", c)
    .with_param("d", d))
}

/// Pigou congestion game: link 1 has fixed cost 1, link 2 costs c/n where c
/// players (strategy 1) use it; utilities are negated costs and the potential
/// is `phi(c) = (n - c) + c(c+1)/(2n)`.
pub fn make_pigou(n: usize) -> Result<GameSpec> {
    if n < 1 {
        return Err(Error::invalid("Pigou requires n >= 1"));
    }
    let ix = ProfileIndex::new(&vec![2; n])?;
    let size = ix.size();
    let nf = n as f64;
    let mut phi = vec![0.0; size];
    let mut utilities = vec![0.0; n * size];
    for x in 0..size {
        let c = (0..n).filter(|&i| ix.strategy_of(x, i) == 1).count() as f64;
        phi[x] = (nf - c) + c * (c + 1.0) / (2.0 * nf);
        for i in 0..n {
            utilities[i * size + x] = if ix.strategy_of(x, i) == 1 {
                -c / nf
            } else {
                -1.0
            };
        }
    }
    GameSpec::new(Some("pigou".into()), vec![2; n], utilities, Some(phi))
}

/// Scan cap for the counterexample schedule.
pub const SCHEDULE_N_CAP: usize = 1_000_000;
pub const SCHEDULE_J_CAP: usize = 4;

/// The schedule interleaving the polynomials `p_j(n) = n^j` with the
/// super-polynomials `q_j(n) = exp(log n * log^(j) n)`. The window of index j
/// covers `n_{j-1} < n <= n_j`, where `n_j` is the first n at which
/// `p_j(n) < q_j(n) - eps`, found by upward scan (j starts at 1, n_0 = 1).
#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleSchedule {
    pub eps: f64,
    /// (j, lower exclusive, upper inclusive) for each scanned window.
    pub windows: Vec<(usize, usize, usize)>,
}

/// j-fold iterated natural logarithm; NaN when it leaves the domain.
fn iterated_log(j: usize, n: f64) -> f64 {
    let mut v = n;
    for _ in 0..j {
        v = v.ln();
    }
    v
}

fn q_j(j: usize, n: usize) -> f64 {
    let nf = n as f64;
    let it = iterated_log(j, nf);
    if it.is_nan() {
        f64::NAN
    } else {
        (nf.ln() * it).exp()
    }
}

fn p_j(j: usize, n: usize) -> f64 {
    (n as f64).powi(j as i32)
}

impl CounterexampleSchedule {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.25) {
            return Err(Error::invalid("counterexample requires 0 < eps < 1/4"));
        }
        let mut windows = Vec::new();
        let mut lower = 1usize; // n_0 = 1
        for j in 1..=SCHEDULE_J_CAP {
            let crossover = (lower + 1..=SCHEDULE_N_CAP).find(|&n| {
                let q = q_j(j, n);
                q.is_finite() && p_j(j, n) < q - eps
            });
            match crossover {
                Some(nj) => {
                    windows.push((j, lower, nj));
                    lower = nj;
                }
                None => {
                    // No crossover below the cap: this window covers the rest
                    // of the scanned range.
                    windows.push((j, lower, SCHEDULE_N_CAP));
                    break;
                }
            }
        }
        Ok(CounterexampleSchedule { eps, windows })
    }

    pub fn max_n(&self) -> usize {
        self.windows.last().map(|w| w.2).unwrap_or(1)
    }

    /// Window index j applying to the given n.
    pub fn window_of(&self, n: usize) -> Result<usize> {
        self.windows
            .iter()
            .find(|&&(_, lo, hi)| lo < n && n <= hi)
            .map(|&(j, _, _)| j)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "n = {n} outside the scanned schedule range 2..={}",
                    self.max_n()
                ))
            })
    }

    /// The stability horizon `T(n) = q_j(n) - eps` for the window containing n.
    pub fn horizon(&self, n: usize) -> Result<f64> {
        let j = self.window_of(n)?;
        let t = q_j(j, n) - self.eps;
        if !(t > self.eps) {
            return Err(Error::Numerical(format!(
                "schedule horizon T({n}) = {t} is not above eps"
            )));
        }
        Ok(t)
    }

    /// The (p_j, q_j) pair of the window containing n, for classification.
    pub fn window_pair(&self, n: usize) -> Result<(f64, f64)> {
        let j = self.window_of(n)?;
        Ok((p_j(j, n), q_j(j, n)))
    }
}

/// The potential game whose all-ones profile has a bottleneck that tracks the
/// schedule horizon: `phi(x) = n - t` for profiles with t < n players at
/// strategy 1, and `phi(1,...,1) = 1 - k_n` with
/// `k_n = log(T(n)/eps - 1) / beta`.
///
/// With this sign the one-step leave probability from (1,...,1) is exactly
/// `eps / T(n)`. `literal_sign` restores `1 + k_n` instead, for which the
/// leave probability is `1 - eps / T(n)`.
pub fn make_counterexample(n: usize, beta: f64, eps: f64, literal_sign: bool) -> Result<GameSpec> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::invalid("counterexample requires beta > 0"));
    }
    if n < 2 {
        return Err(Error::invalid("counterexample requires n >= 2"));
    }
    let schedule = CounterexampleSchedule::new(eps)?;
    let horizon = schedule.horizon(n)?;
    let k_n = (horizon / eps - 1.0).ln() / beta;
    let ix = ProfileIndex::new(&vec![2; n])?;
    let size = ix.size();
    let mut phi = vec![0.0; size];
    for x in 0..size {
        let ones = (0..n).filter(|&i| ix.strategy_of(x, i) == 1).count();
        phi[x] = if ones == n {
            if literal_sign {
                1.0 + k_n
            } else {
                1.0 - k_n
            }
        } else {
            (n - ones) as f64
        };
    }
    Ok(
        GameSpec::from_potential(Some("counterexample".into()), vec![2; n], phi)?
            .with_param("beta", beta)
            .with_param("eps", eps)
            .with_param("horizon", horizon)
            .with_param("k_n", k_n),
    )
}

/// Seeded game with i.i.d. uniform potential values in [0, range] and
/// utilities -phi.
pub fn make_random_potential(
    strategy_counts: &[usize],
    seed: u64,
    range: f64,
    size_cap: usize,
) -> Result<GameSpec> {
    if !(range >= 0.0) || !range.is_finite() {
        return Err(Error::invalid("range must be a nonnegative real"));
    }
    let ix = ProfileIndex::new(strategy_counts)?;
    if ix.size() > size_cap {
        return Err(Error::cap(
            "profile space",
            size_cap,
            ix.size(),
            "choose fewer players or strategies",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi: Vec<f64> = (0..ix.size()).map(|_| rng.gen::<f64>() * range).collect();
    Ok(
        GameSpec::from_potential(Some("random_potential".into()), strategy_counts.to_vec(), phi)?
            .with_param("seed", seed as f64)
            .with_param("range", range),
    )
}

/// Builds a zoo game from a family name and named parameters, the form used
/// by the CLI.
pub fn build(family: Family, n: usize, params: &BTreeMap<String, f64>) -> Result<GameSpec> {
    let get = |key: &str, default: Option<f64>| -> Result<f64> {
        params.get(key).copied().or(default).ok_or_else(|| {
            Error::invalid(format!(
                "family {} requires parameter '{key}'",
                family.name()
            ))
        })
    };
    match family {
        Family::PureCoordination => make_pure_coordination(n),
        Family::CurieWeiss => make_curie_weiss(n),
        Family::RingCoordination => make_ring_coordination(
            n,
            get("a", Some(1.0))?,
            get("b", Some(1.0))?,
            get("c", Some(0.0))?,
            get("d", Some(0.0))?,
        ),
        Family::Pigou => make_pigou(n),
        Family::Counterexample => make_counterexample(
            n,
            get("beta", Some(5.0))?,
            get("eps", Some(0.1))?,
            get("literal_sign", Some(0.0))? != 0.0,
        ),
        Family::RandomPotential => {
            let m = get("m", Some(2.0))? as usize;
            make_random_potential(
                &vec![m; n],
                get("seed", Some(0.0))? as u64,
                get("range", Some(1.0))?,
                DEFAULT_SIZE_CAP,
            )
        }
        Family::Ladder2 => Ok(ladder2()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::verify_potential;

    #[test]
    fn pure_coordination_utilities_on_consensus_and_off() {
        let g = make_pure_coordination(2).unwrap();
        // (0,0) and (1,1) pay 1 to both players, the rest pay 0
        for i in 0..2 {
            assert_eq!(g.utility(i, 0), 1.0);
            assert_eq!(g.utility(i, 3), 1.0);
            assert_eq!(g.utility(i, 1), 0.0);
            assert_eq!(g.utility(i, 2), 0.0);
        }
        let g3 = make_pure_coordination(3).unwrap();
        let x = g3.index().encode(&[0, 0, 1]).unwrap();
        for i in 0..3 {
            assert_eq!(g3.utility(i, x), 0.0);
        }
    }

    #[test]
    fn pure_coordination_potential_certified_by_deviation_check() {
        let g = make_pure_coordination(3).unwrap();
        let check = verify_potential(&g, 1e-9).unwrap();
        assert!(check.pass);
    }

    #[test]
    fn curie_weiss_hand_expanded_values() {
        let g = make_curie_weiss(3).unwrap();
        // x = (+1, +1, -1): spins mapped from strategies (0, 0, 1)
        let x = g.index().encode(&[0, 0, 1]).unwrap();
        assert_eq!(g.utility(2, x), -2.0);
        assert_eq!(g.potential().unwrap()[x], 1.0);

        let g2 = make_curie_weiss(2).unwrap();
        let pp = g2.index().encode(&[0, 0]).unwrap();
        assert_eq!(g2.potential().unwrap()[pp], -1.0);
        assert_eq!(g2.utility(0, pp), 1.0);
        assert_eq!(g2.utility(1, pp), 1.0);
    }

    #[test]
    fn curie_weiss_magnetization_of_all_plus_is_n() {
        for n in 2..6 {
            let g = make_curie_weiss(n).unwrap();
            assert_eq!(magnetization(g.index(), 0).unwrap(), n as i64);
        }
    }

    #[test]
    fn ring_all_plus_pays_two_edges_of_a() {
        let g = make_ring_coordination(3, 2.0, 2.0, 0.0, 0.0).unwrap();
        for i in 0..3 {
            assert_eq!(g.utility(i, 0), 4.0);
        }
        assert!(verify_potential(&g, 1e-9).unwrap().pass);
    }

    #[test]
    fn ring_symmetric_payoffs_give_equal_consensus_potentials() {
        let g = make_ring_coordination(4, 1.0, 1.0, 0.0, 0.0).unwrap();
        let phi = g.potential().unwrap();
        assert_eq!(phi[0], phi[g.size() - 1]);
    }

    #[test]
    fn ring_rejects_bad_parameter_order() {
        assert!(make_ring_coordination(3, 1.0, 1.0, 0.0, 2.0).is_err());
        assert!(make_ring_coordination(3, 1.0, 0.5, 0.6, 0.0).is_err());
    }

    #[test]
    fn pigou_potential_closed_form_at_small_n() {
        let g = make_pigou(2).unwrap();
        let phi = g.potential().unwrap();
        let all_link1 = g.index().encode(&[0, 0]).unwrap();
        let one_link2 = g.index().encode(&[1, 0]).unwrap();
        assert!((phi[all_link1] - 2.0).abs() < 1e-15);
        assert!((phi[one_link2] - 1.5).abs() < 1e-15);
        assert!(verify_potential(&g, 1e-9).unwrap().pass);
    }

    #[test]
    fn pigou_potential_decreases_in_c_until_the_final_tie() {
        // phi(c) - phi(c+1) = 1 - (c+1)/n: strictly positive for c < n-1 and
        // exactly zero at the last step, so the all-link-2 profile attains
        // (but shares) the minimum.
        for n in 1..=12usize {
            let g = make_pigou(n).unwrap();
            let phi_of_c = |c: usize| {
                let x = g
                    .index()
                    .encode(&(0..n).map(|i| usize::from(i < c)).collect::<Vec<_>>())
                    .unwrap();
                g.potential().unwrap()[x]
            };
            for c in 0..n.saturating_sub(1) {
                assert!(phi_of_c(c) > phi_of_c(c + 1));
            }
            if n >= 2 {
                assert!((phi_of_c(n - 1) - phi_of_c(n)).abs() < 1e-12);
            }
            let phi = g.potential().unwrap();
            let min = phi.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!((phi[g.size() - 1] - min).abs() < 1e-12);
        }
    }

    #[test]
    fn schedule_windows_are_increasing_and_start_small() {
        let s = CounterexampleSchedule::new(0.1).unwrap();
        assert_eq!(s.windows[0], (1, 1, 3)); // n^1 < n^{ln n} - eps first at n = 3
        let mut prev = 0;
        for &(_, lo, hi) in &s.windows {
            assert!(lo < hi);
            assert!(lo >= prev);
            prev = hi;
        }
    }

    #[test]
    fn counterexample_shell_potentials() {
        let g = make_counterexample(5, 5.0, 0.1, false).unwrap();
        let phi = g.potential().unwrap();
        // t = n-1 players at strategy 1 -> phi = 1
        let x = g.index().encode(&[0, 1, 1, 1, 1]).unwrap();
        assert_eq!(phi[x], 1.0);
        // all ones carries the corrected value 1 - k_n
        let k_n = g.params["k_n"];
        assert!((phi[g.size() - 1] - (1.0 - k_n)).abs() < 1e-12);
        let lit = make_counterexample(5, 5.0, 0.1, true).unwrap();
        assert!((lit.potential().unwrap()[g.size() - 1] - (1.0 + k_n)).abs() < 1e-12);
    }

    #[test]
    fn counterexample_large_beta_limit_flattens_the_top() {
        let g = make_counterexample(4, 1e4, 0.1, false).unwrap();
        let phi = g.potential().unwrap();
        assert!((phi[g.size() - 1] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn counterexample_rejects_out_of_range_parameters() {
        assert!(make_counterexample(1, 5.0, 0.1, false).is_err());
        assert!(make_counterexample(4, 0.0, 0.1, false).is_err());
        assert!(make_counterexample(4, 5.0, 0.3, false).is_err());
    }

    #[test]
    fn random_potential_is_deterministic_under_seed() {
        let a = make_random_potential(&[2, 3], 42, 1.0, 4096).unwrap();
        let b = make_random_potential(&[2, 3], 42, 1.0, 4096).unwrap();
        assert_eq!(a, b);
        let c = make_random_potential(&[2, 3], 43, 1.0, 4096).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_potential_zero_range_is_constant() {
        let g = make_random_potential(&[2, 2], 7, 0.0, 4096).unwrap();
        assert!(g.potential().unwrap().iter().all(|&p| p == 0.0));
        assert!(verify_potential(&g, 1e-9).unwrap().pass);
    }

    #[test]
    fn random_potential_respects_the_size_cap() {
        assert!(make_random_potential(&[2; 13], 0, 1.0, 4096).is_err());
    }

    #[test]
    fn every_zoo_family_passes_potential_verification() {
        let games = [
            make_pure_coordination(4).unwrap(),
            make_curie_weiss(4).unwrap(),
            make_ring_coordination(5, 2.0, 1.5, 0.25, 0.5).unwrap(),
            make_pigou(4).unwrap(),
            make_counterexample(4, 5.0, 0.1, false).unwrap(),
            make_random_potential(&[3, 2, 2], 11, 2.0, 4096).unwrap(),
            ladder2(),
        ];
        for g in &games {
            let check = verify_potential(g, 1e-9).unwrap();
            assert!(check.pass, "{:?}: {}", g.name, check.max_violation);
        }
    }

    #[test]
    fn family_parse_rejects_unknown_names() {
        assert!(Family::parse("pure_coordination").is_ok());
        let err = Family::parse("nonsense").unwrap_err();
        assert!(err.to_string().contains("valid families"));
    }
}
