//! Parsing of game references, subset specs, and start profiles.

use metastab_core::error::{Error, Result};
use metastab_core::{zoo, GameSpec, SubsetMask};
use std::collections::BTreeMap;

/// Resolves a game reference: a path to a game-spec JSON file, or a zoo
/// reference `family` / `family:n=6,a=2,...`.
pub fn resolve_game(reference: &str) -> Result<GameSpec> {
    let path = std::path::Path::new(reference);
    if path.exists() || reference.ends_with(".json") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read {reference}: {e}")))?;
        return GameSpec::from_json(&text);
    }
    let (family_name, params_text) = match reference.split_once(':') {
        Some((f, p)) => (f, p),
        None => (reference, ""),
    };
    let family = zoo::Family::parse(family_name)?;
    let mut params: BTreeMap<String, f64> = BTreeMap::new();
    let mut n: Option<usize> = None;
    for pair in params_text.split(',').filter(|s| !s.is_empty()) {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("expected key=value, got '{pair}'")))?;
        let v: f64 = value
            .parse()
            .map_err(|_| Error::invalid(format!("bad value for {key}: '{value}'")))?;
        if key == "n" {
            n = Some(v as usize);
        } else {
            params.insert(key.to_string(), v);
        }
    }
    let n = match (n, family) {
        (Some(v), _) => v,
        (None, zoo::Family::Ladder2) => 2,
        (None, _) => return Err(Error::invalid("zoo reference needs n=<players>")),
    };
    zoo::build(family, n, &params)
}

/// Parses a subset spec against a game:
///   `indices:0,3,7`   explicit profile indices
///   `consensus`       all consensus profiles (equal strategy counts)
///   `consensus:K`     the K-th consensus singleton
///   `mag>=K` `mag<=K` magnetization half-spaces (binary games)
///   `sublevel<=C`     potential sublevel set
///   `all`             the whole profile space
pub fn parse_subset(g: &GameSpec, spec: &str) -> Result<SubsetMask> {
    let size = g.size();
    if spec == "all" {
        return Ok(SubsetMask::full(size));
    }
    if let Some(rest) = spec.strip_prefix("indices:") {
        let indices: Vec<usize> = rest
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::invalid(format!("bad index '{s}'")))
            })
            .collect::<Result<_>>()?;
        return SubsetMask::from_indices(size, &indices);
    }
    if spec == "consensus" {
        let c = zoo::consensus_profiles(g.index())?;
        return SubsetMask::from_indices(size, &c);
    }
    if let Some(rest) = spec.strip_prefix("consensus:") {
        let k: usize = rest
            .parse()
            .map_err(|_| Error::invalid(format!("bad consensus rank '{rest}'")))?;
        let c = zoo::consensus_profiles(g.index())?;
        let idx = *c
            .get(k)
            .ok_or_else(|| Error::invalid(format!("consensus rank {k} out of range")))?;
        return Ok(SubsetMask::singleton(size, idx));
    }
    for (prefix, is_ge) in [("mag>=", true), ("mag<=", false)] {
        if let Some(rest) = spec.strip_prefix(prefix) {
            let k: i64 = rest
                .parse()
                .map_err(|_| Error::invalid(format!("bad magnetization bound '{rest}'")))?;
            let members: Vec<usize> = (0..size)
                .filter(|&x| {
                    let m = zoo::magnetization(g.index(), x).unwrap_or(i64::MIN);
                    if is_ge {
                        m >= k
                    } else {
                        m <= k
                    }
                })
                .collect();
            if g.strategy_counts().iter().any(|&m| m != 2) {
                return Err(Error::invalid("magnetization specs need binary strategies"));
            }
            return SubsetMask::from_indices(size, &members);
        }
    }
    if let Some(rest) = spec.strip_prefix("sublevel<=") {
        let c: f64 = rest
            .parse()
            .map_err(|_| Error::invalid(format!("bad sublevel threshold '{rest}'")))?;
        let phi = g.potential()?;
        let members: Vec<usize> = (0..size).filter(|&x| phi[x] <= c).collect();
        return SubsetMask::from_indices(size, &members);
    }
    Err(Error::invalid(format!(
        "unknown subset spec '{spec}' (expected all, indices:..., consensus[:K], mag>=K, \
         mag<=K, or sublevel<=C)"
    )))
}

/// Parses a start profile: comma-separated strategies `0,1,0` or `idx:5`.
pub fn parse_profile(g: &GameSpec, spec: &str) -> Result<usize> {
    if let Some(rest) = spec.strip_prefix("idx:") {
        let idx: usize = rest
            .parse()
            .map_err(|_| Error::invalid(format!("bad profile index '{rest}'")))?;
        if idx >= g.size() {
            return Err(Error::invalid(format!(
                "profile index {idx} out of range for |S| = {}",
                g.size()
            )));
        }
        return Ok(idx);
    }
    let strategies: Vec<usize> = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad strategy '{s}'")))
        })
        .collect::<Result<_>>()?;
    g.index().encode(&strategies)
}
