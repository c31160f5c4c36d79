//! Finite strategic games with optional exact potentials.

use crate::error::{Error, Result};
use crate::profile::ProfileIndex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Default cap on the number of profiles a game may have. Analyses are exact
/// and dense-ish, so games are desk scale by design.
pub const DEFAULT_SIZE_CAP: usize = 16_384;

/// A finite strategic game: `n` players, per-player strategy counts, a dense
/// utility table and an optional potential table.
///
/// Utilities are stored player-major: `utilities[p * |S| + x]` is the payoff
/// of player `p` at profile index `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub name: Option<String>,
    pub params: BTreeMap<String, f64>,
    strategy_counts: Vec<usize>,
    utilities: Vec<f64>,
    potential: Option<Vec<f64>>,
    index: ProfileIndex,
}

/// On-disk JSON layout of a game.
#[derive(Debug, Serialize, Deserialize)]
struct GameFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    n: usize,
    strategy_counts: Vec<usize>,
    utilities: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    potential: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<BTreeMap<String, f64>>,
}

impl GameSpec {
    pub fn new(
        name: Option<String>,
        strategy_counts: Vec<usize>,
        utilities: Vec<f64>,
        potential: Option<Vec<f64>>,
    ) -> Result<Self> {
        let index = ProfileIndex::new(&strategy_counts)?;
        let size = index.size();
        if utilities.len() != size * strategy_counts.len() {
            return Err(Error::SizeMismatch(format!(
                "utility table has {} entries, expected n*|S| = {}",
                utilities.len(),
                size * strategy_counts.len()
            )));
        }
        if utilities.iter().any(|u| !u.is_finite()) {
            return Err(Error::invalid("utilities must be finite"));
        }
        if let Some(phi) = &potential {
            if phi.len() != size {
                return Err(Error::SizeMismatch(format!(
                    "potential table has {} entries, expected |S| = {size}",
                    phi.len()
                )));
            }
            if phi.iter().any(|p| !p.is_finite()) {
                return Err(Error::invalid("potential values must be finite"));
            }
        }
        Ok(GameSpec {
            name,
            params: BTreeMap::new(),
            strategy_counts,
            utilities,
            potential,
            index,
        })
    }

    /// Convenience constructor for potential-only games: `u_i = -phi` for
    /// every player, which is always an exact potential.
    pub fn from_potential(
        name: Option<String>,
        strategy_counts: Vec<usize>,
        phi: Vec<f64>,
    ) -> Result<Self> {
        let index = ProfileIndex::new(&strategy_counts)?;
        let size = index.size();
        if phi.len() != size {
            return Err(Error::SizeMismatch(format!(
                "potential table has {} entries, expected |S| = {size}",
                phi.len()
            )));
        }
        let mut utilities = Vec::with_capacity(size * strategy_counts.len());
        for _ in 0..strategy_counts.len() {
            utilities.extend(phi.iter().map(|&v| -v));
        }
        GameSpec::new(name, strategy_counts, utilities, Some(phi))
    }

    pub fn n_players(&self) -> usize {
        self.strategy_counts.len()
    }

    pub fn strategy_counts(&self) -> &[usize] {
        &self.strategy_counts
    }

    pub fn size(&self) -> usize {
        self.index.size()
    }

    pub fn index(&self) -> &ProfileIndex {
        &self.index
    }

    #[inline]
    pub fn utility(&self, player: usize, profile: usize) -> f64 {
        self.utilities[player * self.index.size() + profile]
    }

    pub fn has_potential(&self) -> bool {
        self.potential.is_some()
    }

    pub fn potential(&self) -> Result<&[f64]> {
        self.potential.as_deref().ok_or(Error::MissingPotential)
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    /// Replace the potential table (used by tests to inject defects).
    pub fn set_potential(&mut self, phi: Option<Vec<f64>>) -> Result<()> {
        if let Some(p) = &phi {
            if p.len() != self.size() {
                return Err(Error::SizeMismatch("potential table length".into()));
            }
        }
        self.potential = phi;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = GameFile {
            name: self.name.clone(),
            n: self.n_players(),
            strategy_counts: self.strategy_counts.clone(),
            utilities: self.utilities.clone(),
            potential: self.potential.clone(),
            params: if self.params.is_empty() {
                None
            } else {
                Some(self.params.clone())
            },
        };
        serde_json::to_string_pretty(&file).expect("game serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GameFile = serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("malformed game file: {e}")))?;
        if file.n != file.strategy_counts.len() {
            return Err(Error::invalid(format!(
                "field n = {} disagrees with strategy_counts length {}",
                file.n,
                file.strategy_counts.len()
            )));
        }
        let mut g = GameSpec::new(
            file.name,
            file.strategy_counts,
            file.utilities,
            file.potential,
        )?;
        g.params = file.params.unwrap_or_default();
        Ok(g)
    }

    /// Profile indices that are local minima of the potential (every neighbor
    /// has potential >= theirs); these are the pure Nash equilibria.
    pub fn potential_local_minima(&self) -> Result<Vec<usize>> {
        let phi = self.potential()?;
        Ok((0..self.size())
            .filter(|&x| {
                self.index
                    .neighbors(x)
                    .iter()
                    .all(|&(_, y)| phi[y] >= phi[x])
            })
            .collect())
    }
}

/// Result of checking the exact-potential identity.
#[derive(Debug, Clone, Serialize)]
pub struct PotentialCheck {
    pub pass: bool,
    pub tol: f64,
    /// Worst absolute violation of `phi(x) - phi(y) = u_i(y) - u_i(x)`.
    pub max_violation: f64,
    /// Profile, player and deviation index realizing the worst violation.
    pub worst_profile: usize,
    pub worst_player: usize,
    pub worst_deviation: usize,
}

/// Checks `phi(x) - phi(y) = u_i(y) - u_i(x)` over every profile `x`, player
/// `i` and unilateral deviation `y = (x_{-i}, y_i)`.
pub fn verify_potential(g: &GameSpec, tol: f64) -> Result<PotentialCheck> {
    let phi = g.potential()?;
    let mut worst = (0.0f64, 0usize, 0usize, 0usize);
    for x in 0..g.size() {
        for (player, y) in g.index().neighbors(x) {
            let lhs = phi[x] - phi[y];
            let rhs = g.utility(player, y) - g.utility(player, x);
            let viol = (lhs - rhs).abs();
            if viol > worst.0 {
                worst = (viol, x, player, y);
            }
        }
    }
    Ok(PotentialCheck {
        pass: worst.0 <= tol,
        tol,
        max_violation: worst.0,
        worst_profile: worst.1,
        worst_player: worst.2,
        worst_deviation: worst.3,
    })
}

/// `Delta(n) = max { phi(x) - phi(y) : H(x, y) = 1 }`, the Lipschitz constant
/// of the potential over neighboring profiles.
pub fn lipschitz_delta(g: &GameSpec) -> Result<f64> {
    let phi = g.potential()?;
    let mut delta: f64 = 0.0;
    for x in 0..g.size() {
        for (_, y) in g.index().neighbors(x) {
            delta = delta.max(phi[x] - phi[y]);
        }
    }
    Ok(delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn ladder2() -> GameSpec {
        crate::zoo::ladder2()
    }

    #[test]
    fn ladder2_potential_is_exact_with_zero_violation() {
        let g = ladder2();
        let check = verify_potential(&g, 1e-9).unwrap();
        assert!(check.pass);
        assert_eq!(check.max_violation, 0.0);
    }

    #[test]
    fn perturbed_ladder2_fails_with_the_injected_violation() {
        let mut g = ladder2();
        let mut phi = g.potential().unwrap().to_vec();
        phi[3] += 0.1; // profile (1,1)
        g.set_potential(Some(phi)).unwrap();
        let check = verify_potential(&g, 1e-9).unwrap();
        assert!(!check.pass);
        assert!((check.max_violation - 0.1).abs() < 1e-12);
        assert_eq!(check.worst_profile.max(check.worst_deviation), 3);
    }

    #[test]
    fn curie_weiss_three_player_identity_by_brute_force() {
        // u_i(x) = x_i * sum_{j != i} x_j with phi = -sum_{j<k} x_j x_k,
        // expanded by hand over all 8 profiles and 24 deviations.
        let g = crate::zoo::make_curie_weiss(3).unwrap();
        let check = verify_potential(&g, 1e-9).unwrap();
        assert!(check.pass, "violation {}", check.max_violation);
    }

    #[test]
    fn missing_potential_is_a_precondition_error() {
        let g = GameSpec::new(None, vec![2], vec![0.0, 1.0], None).unwrap();
        assert!(matches!(
            verify_potential(&g, 1e-9),
            Err(Error::MissingPotential)
        ));
    }

    #[test]
    fn lipschitz_delta_ladder2_by_full_scan() {
        // 4 profiles x 2 neighbors = 8 ordered pairs; max difference is 1.
        let g = ladder2();
        assert_eq!(lipschitz_delta(&g).unwrap(), 1.0);
    }

    #[test]
    fn lipschitz_delta_constant_potential_is_zero() {
        let g = GameSpec::from_potential(None, vec![2, 2], vec![3.0; 4]).unwrap();
        assert_eq!(lipschitz_delta(&g).unwrap(), 0.0);
    }

    #[test]
    fn lipschitz_delta_pigou_by_neighbor_scan() {
        let g = crate::zoo::make_pigou(2).unwrap();
        let phi = g.potential().unwrap().to_vec();
        let mut expected: f64 = 0.0;
        for x in 0..g.size() {
            for (_, y) in g.index().neighbors(x) {
                expected = expected.max(phi[x] - phi[y]);
            }
        }
        assert_eq!(lipschitz_delta(&g).unwrap(), expected);
    }

    #[test]
    fn json_roundtrip_preserves_the_game() {
        let g = ladder2().with_param("beta_hint", 0.5);
        let text = g.to_json();
        let g2 = GameSpec::from_json(&text).unwrap();
        assert_eq!(g, g2);
    }

    #[test]
    fn json_rejects_inconsistent_player_count() {
        let bad = r#"{"n": 3, "strategy_counts": [2, 2], "utilities": [0, 0, 0, 0, 0, 0, 0, 0]}"#;
        assert!(GameSpec::from_json(bad).is_err());
    }
}
