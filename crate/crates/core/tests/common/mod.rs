//! Shared corpus for the acceptance suite.

use metastab_core::{zoo, GameSpec};

pub const BETAS: [f64; 4] = [0.0, 0.5, 2.0, 10.0];

/// 100 seeded random potential games with n <= 4 players and m_i <= 3.
pub fn random_corpus() -> Vec<GameSpec> {
    let shapes: [&[usize]; 10] = [
        &[2, 2],
        &[3, 2],
        &[2, 2, 2],
        &[3, 3],
        &[3, 2, 2],
        &[3, 3, 2],
        &[2, 2, 2, 2],
        &[3, 3, 3],
        &[3, 2, 2, 2],
        &[3, 3, 2, 2],
    ];
    (0..100u64)
        .map(|i| {
            let shape = shapes[(i % shapes.len() as u64) as usize];
            zoo::make_random_potential(shape, 1000 + i, 1.0, 4096).unwrap()
        })
        .collect()
}

/// 100 seeded random games with n <= 3 players and |S| <= 12, small enough
/// for exhaustive connected-subset sweeps.
pub fn small_corpus() -> Vec<GameSpec> {
    let shapes: [&[usize]; 5] = [&[2, 2], &[3, 2], &[2, 2, 2], &[3, 3], &[3, 2, 2]];
    (0..100u64)
        .map(|i| {
            let shape = shapes[(i % shapes.len() as u64) as usize];
            zoo::make_random_potential(shape, 2000 + i, 1.0, 4096).unwrap()
        })
        .collect()
}

/// Zoo instances with |S| bounded by the cap.
pub fn zoo_desk(size_cap: usize) -> Vec<GameSpec> {
    let mut games = vec![zoo::ladder2()];
    for n in 2..=8 {
        games.push(zoo::make_pure_coordination(n).unwrap());
        games.push(zoo::make_curie_weiss(n).unwrap());
        games.push(zoo::make_pigou(n).unwrap());
    }
    for n in 3..=8 {
        games.push(zoo::make_ring_coordination(n, 1.0, 1.0, 0.0, 0.0).unwrap());
    }
    games.push(zoo::make_ring_coordination(5, 2.0, 1.5, 0.25, 0.5).unwrap());
    for n in 4..=8 {
        games.push(zoo::make_counterexample(n, 5.0, 0.1, false).unwrap());
    }
    games.retain(|g| g.size() <= size_cap);
    games
}
