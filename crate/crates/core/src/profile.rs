//! Mixed-radix indexing of strategy profiles.
//!
//! A profile `(s_0, ..., s_{n-1})` with per-player strategy counts
//! `(m_0, ..., m_{n-1})` is identified with the integer
//! `sum_i s_i * stride_i`, `stride_i = m_0 * ... * m_{i-1}` (player 0 least
//! significant). All other modules work on these dense indices only.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileIndex {
    radices: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
}

impl ProfileIndex {
    pub fn new(radices: &[usize]) -> Result<Self> {
        if radices.is_empty() {
            return Err(Error::invalid("at least one player is required"));
        }
        if radices.contains(&0) {
            return Err(Error::invalid("every strategy count must be >= 1"));
        }
        let mut strides = Vec::with_capacity(radices.len());
        let mut size: usize = 1;
        for &m in radices {
            strides.push(size);
            size = size
                .checked_mul(m)
                .ok_or_else(|| Error::invalid("profile space overflows usize"))?;
        }
        Ok(ProfileIndex {
            radices: radices.to_vec(),
            strides,
            size,
        })
    }

    pub fn n_players(&self) -> usize {
        self.radices.len()
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    /// Total number of profiles `|S|`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Number of Hamming neighbors of any profile: `sum_i (m_i - 1)`.
    pub fn degree(&self) -> usize {
        self.radices.iter().map(|m| m - 1).sum()
    }

    pub fn encode(&self, strategies: &[usize]) -> Result<usize> {
        if strategies.len() != self.radices.len() {
            return Err(Error::SizeMismatch(format!(
                "profile has {} entries, game has {} players",
                strategies.len(),
                self.radices.len()
            )));
        }
        let mut idx = 0;
        for (i, (&s, &m)) in strategies.iter().zip(&self.radices).enumerate() {
            if s >= m {
                return Err(Error::invalid(format!(
                    "strategy {s} out of range for player {i} (m_i = {m})"
                )));
            }
            idx += s * self.strides[i];
        }
        Ok(idx)
    }

    pub fn decode(&self, index: usize) -> Vec<usize> {
        debug_assert!(index < self.size);
        self.radices
            .iter()
            .zip(&self.strides)
            .map(|(&m, &stride)| (index / stride) % m)
            .collect()
    }

    /// Strategy played at `index` by `player`.
    #[inline]
    pub fn strategy_of(&self, index: usize, player: usize) -> usize {
        (index / self.strides[player]) % self.radices[player]
    }

    /// Index obtained from `index` by switching `player` to strategy `s`.
    #[inline]
    pub fn with_strategy(&self, index: usize, player: usize, s: usize) -> usize {
        debug_assert!(s < self.radices[player]);
        let current = self.strategy_of(index, player);
        let delta = s as isize - current as isize;
        (index as isize + delta * self.strides[player] as isize) as usize
    }

    /// All profiles at Hamming distance one from `index`, tagged with the
    /// deviating player.
    pub fn neighbors(&self, index: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.degree());
        for player in 0..self.radices.len() {
            let current = self.strategy_of(index, player);
            for s in 0..self.radices[player] {
                if s != current {
                    out.push((player, self.with_strategy(index, player, s)));
                }
            }
        }
        out
    }
}
