//! Eigenstructure of the dynamics and its restrictions.
//!
//! Reversible chains are symmetrized by the similarity `D^{1/2} P D^{-1/2}`
//! (D = diag pi) before a symmetric eigensolve, which is backward stable;
//! non-reversible chains go through a general eigensolve and only eigenvalues
//! that are real within 1e-9 are accepted. The killed matrix `P_{L-bar}` is
//! sub-stochastic, so its top eigenvalue (extracted by power iteration on the
//! symmetrized form) controls hitting tails.

use crate::chain::{self, ChainKind, ChainMatrix};
use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::game::GameSpec;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Dense eigensolves refuse matrices beyond this order.
pub const DENSE_EIGEN_CAP: usize = 4096;
/// Reversibility certification threshold used to pick the eigensolve route.
pub const REVERSIBILITY_TOL: f64 = 1e-9;
/// Power-iteration convergence target for the killed top eigenvalue.
pub const POWER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct Spectrum {
    /// Eigenvalues sorted non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Largest non-principal eigenvalue modulus (stochastic kinds only).
    pub lambda_star: f64,
    /// Relaxation time `1 / (1 - lambda_star)`.
    pub t_rel: f64,
    /// Whether the symmetrized route was used.
    pub reversible: bool,
    pub kind: String,
}

fn kind_label(kind: &ChainKind) -> String {
    match kind {
        ChainKind::Full => "full".into(),
        ChainKind::RestrictedLoop(_) => "restricted_loop".into(),
        ChainKind::Substochastic(_) => "substochastic".into(),
    }
}

/// Symmetrized dense block `D^{1/2} P D^{-1/2}` over the active members.
/// Roundoff asymmetry is averaged away after the similarity transform.
fn symmetrized_block(p: &ChainMatrix) -> Result<(Vec<usize>, DMatrix<f64>)> {
    let (members, mut m) = p.dense_active();
    let pi = p.pi();
    let sqrt_pi: Vec<f64> = members.iter().map(|&x| pi.prob(x).sqrt()).collect();
    if sqrt_pi.iter().any(|&s| s == 0.0 || !s.is_finite()) {
        return Err(Error::Numerical(
            "reference distribution vanishes on an active state".into(),
        ));
    }
    let k = members.len();
    for a in 0..k {
        for b in 0..k {
            m[(a, b)] *= sqrt_pi[a] / sqrt_pi[b];
        }
    }
    for a in 0..k {
        for b in (a + 1)..k {
            let avg = 0.5 * (m[(a, b)] + m[(b, a)]);
            m[(a, b)] = avg;
            m[(b, a)] = avg;
        }
    }
    Ok((members, m))
}

/// Full spectrum of the matrix (over its active block), sorted non-increasing.
pub fn spectrum(p: &ChainMatrix) -> Result<Spectrum> {
    let members = p.active_members();
    if members.len() > DENSE_EIGEN_CAP {
        return Err(Error::cap(
            "dense eigensolve",
            DENSE_EIGEN_CAP,
            members.len(),
            "restrict to a smaller subset",
        ));
    }
    let reversible = chain::check_reversibility(p, &p.pi().clone(), REVERSIBILITY_TOL)?.pass
        && members.iter().all(|&x| p.pi().prob(x) > 0.0);
    let mut eigenvalues: Vec<f64> = if reversible {
        let (_, m) = symmetrized_block(p)?;
        m.symmetric_eigen().eigenvalues.iter().copied().collect()
    } else {
        let (_, m) = p.dense_active();
        let complex = m.complex_eigenvalues();
        let mut vals = Vec::with_capacity(complex.len());
        for c in complex.iter() {
            if c.im.abs() > 1e-9 * c.re.abs().max(1.0) {
                return Err(Error::Numerical(format!(
                    "complex eigenvalue {c} on a non-reversible chain"
                )));
            }
            vals.push(c.re);
        }
        vals
    };
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let lambda_star = eigenvalues
        .iter()
        .skip(1)
        .map(|l| l.abs())
        .fold(0.0f64, f64::max);
    Ok(Spectrum {
        lambda_star,
        t_rel: 1.0 / (1.0 - lambda_star),
        reversible,
        kind: kind_label(p.kind()),
        eigenvalues,
    })
}

/// Largest eigenvalue of the killed matrix, by power iteration on the
/// symmetrized block (shifted by +I so that sign oscillation cannot stall
/// convergence). Returns an error with the residual if the iteration cap is
/// reached.
pub fn lambda_max_killed(p_kill: &ChainMatrix) -> Result<f64> {
    let ChainKind::Substochastic(_) = p_kill.kind() else {
        return Err(Error::invalid("lambda_max_killed expects a killed chain"));
    };
    let (members, m) = symmetrized_block(p_kill)?;
    let k = members.len();
    if k == 1 {
        return Ok(m[(0, 0)]);
    }
    let mut v = nalgebra::DVector::from_element(k, 1.0 / (k as f64).sqrt());
    let shifted = &m + DMatrix::<f64>::identity(k, k);
    let mut lambda = 0.0;
    let cap = 500_000usize;
    for it in 0..cap {
        let mut w = &shifted * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        w /= norm;
        let mv = &m * &w;
        lambda = w.dot(&mv);
        let resid = (&mv - lambda * &w).amax();
        v = w;
        if resid <= POWER_TOL {
            return Ok(lambda.clamp(0.0, 1.0));
        }
        if it == cap - 1 {
            return Err(Error::Numerical(format!(
                "power iteration did not reach {POWER_TOL} (residual {resid})"
            )));
        }
    }
    Ok(lambda)
}

/// Dirichlet form `E_P(phi) = (1/2) sum_{x,y} pi(x) P(x,y) (phi(x)-phi(y))^2`.
pub fn dirichlet_form(p: &ChainMatrix, pi: &Dist, phi: &[f64]) -> Result<f64> {
    if phi.len() != p.size() || pi.len() != p.size() {
        return Err(Error::SizeMismatch("dirichlet form arguments".into()));
    }
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("test function must be finite"));
    }
    let mut e = 0.0;
    for x in 0..p.size() {
        for &(y, v) in p.row(x) {
            let d = phi[x] - phi[y];
            e += pi.prob(x) * v * d * d;
        }
    }
    Ok(0.5 * e)
}

#[derive(Debug, Clone, Serialize)]
pub struct RayleighReport {
    pub lambda_max: f64,
    /// Rayleigh quotient of the computed top eigenvector, zero-extended.
    pub eigenvector_quotient: f64,
    /// Smallest quotient among the random probes.
    pub min_random_quotient: f64,
    pub probes: usize,
    pub pass: bool,
}

/// Checks the variational characterization of `1 - lambda_max` for the killed
/// chain: the top eigenvector attains the infimum of
/// `E_P(phi) / E_pi[phi^2]` over functions supported on L (within 1e-8), and
/// random probes never go below it.
pub fn rayleigh_check(
    p_full: &ChainMatrix,
    p_kill: &ChainMatrix,
    probes: usize,
    seed: u64,
) -> Result<RayleighReport> {
    let ChainKind::Substochastic(l) = p_kill.kind().clone() else {
        return Err(Error::invalid("rayleigh_check expects a killed chain"));
    };
    if !matches!(p_full.kind(), ChainKind::Full) {
        return Err(Error::invalid("rayleigh_check expects the full chain"));
    }
    let lambda = lambda_max_killed(p_kill)?;
    let gap = 1.0 - lambda;
    let pi = p_full.pi().clone();

    let quotient = |phi: &[f64]| -> Result<f64> {
        let e = dirichlet_form(p_full, &pi, phi)?;
        let m2: f64 = phi
            .iter()
            .enumerate()
            .map(|(x, &v)| pi.prob(x) * v * v)
            .sum();
        if m2 == 0.0 {
            return Err(Error::invalid("probe function vanishes in L2(pi)"));
        }
        Ok(e / m2)
    };

    // Top eigenvector of the symmetrized killed block, mapped back through
    // D^{-1/2} and zero-extended to S.
    let (members, m) = symmetrized_block(p_kill)?;
    let sym = m.symmetric_eigen();
    let (mut best, mut best_val) = (0usize, f64::NEG_INFINITY);
    for (i, &ev) in sym.eigenvalues.iter().enumerate() {
        if ev > best_val {
            best_val = ev;
            best = i;
        }
    }
    let mut phi_star = vec![0.0; p_full.size()];
    for (a, &x) in members.iter().enumerate() {
        phi_star[x] = sym.eigenvectors[(a, best)] / p_kill.pi().prob(x).sqrt();
    }
    let eig_quot = quotient(&phi_star)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_random = f64::INFINITY;
    for _ in 0..probes {
        let mut phi = vec![0.0; p_full.size()];
        for x in l.iter() {
            phi[x] = rng.gen::<f64>() * 2.0 - 1.0;
        }
        min_random = min_random.min(quotient(&phi)?);
    }
    let pass = (eig_quot - gap).abs() <= 1e-8 && min_random >= gap - 1e-8;
    Ok(RayleighReport {
        lambda_max: lambda,
        eigenvector_quotient: eig_quot,
        min_random_quotient: min_random,
        probes,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceDetReport {
    /// `(1/n) sum_i prod_{j != i} m_j`, the closed form the trace must equal.
    pub trace_formula: f64,
    /// Trace at the requested beta and at the reference betas {0, 1, 5}.
    pub traces: Vec<(f64, f64)>,
    pub max_trace_deviation: f64,
    pub abs_determinant: f64,
    /// `max |f^T P|` for the alternating-shell null covector.
    pub null_covector_residual: f64,
    /// Worst deviation of `P(x,x) = sum_i P((x_{-i}, s_i*), x)`.
    pub loop_identity_residual: f64,
    pub anchor_profile: usize,
    pub pass: bool,
}

/// Verifies the beta-independent trace, the vanishing determinant, the
/// explicit null covector and the loop identity of the transition matrix.
/// Requires every player to have at least two strategies.
pub fn trace_and_det_report(g: &GameSpec, beta: f64) -> Result<TraceDetReport> {
    if g.strategy_counts().iter().any(|&m| m < 2) {
        return Err(Error::invalid(
            "trace/determinant identities need m_i >= 2 for every player",
        ));
    }
    let n = g.n_players();
    let size = g.size();
    if size > DENSE_EIGEN_CAP {
        return Err(Error::cap(
            "dense determinant",
            DENSE_EIGEN_CAP,
            size,
            "analyze a smaller game",
        ));
    }
    let trace_formula = (0..n)
        .map(|i| {
            g.strategy_counts()
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &m)| m as f64)
                .product::<f64>()
        })
        .sum::<f64>()
        / n as f64;

    let mut betas = vec![beta];
    for b in [0.0, 1.0, 5.0] {
        if !betas.contains(&b) {
            betas.push(b);
        }
    }
    let mut traces = Vec::new();
    let mut max_dev = 0.0f64;
    let mut abs_det = f64::NAN;
    let mut null_resid = f64::NAN;
    let mut loop_resid = f64::NAN;
    let anchor = 0usize;
    for (bi, &b) in betas.iter().enumerate() {
        let p = chain::build_chain(g, b)?;
        let tr: f64 = (0..size).map(|x| p.entry(x, x)).sum();
        traces.push((b, tr));
        max_dev = max_dev.max((tr - trace_formula).abs());
        if bi == 0 {
            abs_det = abs_determinant(&p)?;
            null_resid = null_covector_residual(g, &p, anchor);
            loop_resid = loop_identity_residual(g, &p);
        }
    }
    let pass = max_dev <= 1e-10 && abs_det <= 1e-9 && null_resid <= 1e-9 && loop_resid <= 1e-12;
    Ok(TraceDetReport {
        trace_formula,
        traces,
        max_trace_deviation: max_dev,
        abs_determinant: abs_det,
        null_covector_residual: null_resid,
        loop_identity_residual: loop_resid,
        anchor_profile: anchor,
        pass,
    })
}

/// |det P| via the eigenvalue product of the symmetrized form when the chain
/// is reversible, and via the singular-value product otherwise.
fn abs_determinant(p: &ChainMatrix) -> Result<f64> {
    let reversible = chain::check_reversibility(p, &p.pi().clone(), REVERSIBILITY_TOL)?.pass
        && p.pi().values().iter().all(|&v| v > 0.0);
    if reversible {
        let (_, m) = symmetrized_block(p)?;
        Ok(m.symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|l| l.abs())
            .product())
    } else {
        let (_, m) = p.dense_active();
        Ok(m.svd(false, false).singular_values.iter().product())
    }
}

/// Builds the alternating covector over the shells S^j anchored at `x` (with
/// canonical deviations `s_i* = (x_i + 1) mod m_i`): -1 on even shells, +1 on
/// odd shells, 0 elsewhere. Returns `max_y |f^T P|(y)`.
fn null_covector_residual(g: &GameSpec, p: &ChainMatrix, anchor: usize) -> f64 {
    let ix = g.index();
    let n = g.n_players();
    let mut f = vec![0.0; g.size()];
    for subset in 0u64..(1 << n) {
        let mut z = anchor;
        for i in 0..n {
            if subset >> i & 1 == 1 {
                let dev = (ix.strategy_of(anchor, i) + 1) % g.strategy_counts()[i];
                z = ix.with_strategy(z, i, dev);
            }
        }
        f[z] = if subset.count_ones() % 2 == 0 { -1.0 } else { 1.0 };
    }
    let ftp = p.step_distribution(&f);
    ftp.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Worst deviation of the loop identity `P(x,x) = sum_i P((x_{-i}, s_i*), x)`
/// over every profile. The deviation strategies are arbitrary as long as they
/// differ from x_i; two canonical choices are exercised.
fn loop_identity_residual(g: &GameSpec, p: &ChainMatrix) -> f64 {
    let ix = g.index();
    let mut worst = 0.0f64;
    for pick_last in [false, true] {
        for x in 0..g.size() {
            let mut total = 0.0;
            for i in 0..g.n_players() {
                let m = g.strategy_counts()[i];
                let current = ix.strategy_of(x, i);
                let dev = if pick_last {
                    // the largest strategy different from the current one
                    if current == m - 1 {
                        m - 2
                    } else {
                        m - 1
                    }
                } else {
                    (current + 1) % m
                };
                let z = ix.with_strategy(x, i, dev);
                total += p.entry(z, x);
            }
            worst = worst.max((p.entry(x, x) - total).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_chain, restrict_kill, restrict_loop};
    use crate::subset::SubsetMask;
    use crate::test_util::{random_connected_subset, random_nonempty_subset};
    use crate::zoo;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_single_player_chain_has_rank_one_spectrum() {
        let g = crate::zoo::make_random_potential(&[4], 0, 0.0, 4096).unwrap();
        let p = build_chain(&g, 0.0).unwrap();
        let s = spectrum(&p).unwrap();
        assert_abs_diff_eq!(s.eigenvalues[0], 1.0, epsilon = 1e-9);
        for &l in &s.eigenvalues[1..] {
            assert_abs_diff_eq!(l, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ladder2_lazy_walk_spectrum_and_relaxation_time() {
        let g = zoo::ladder2();
        let p = build_chain(&g, 0.0).unwrap();
        let s = spectrum(&p).unwrap();
        let expect = [1.0, 0.5, 0.5, 0.0];
        for (a, e) in s.eigenvalues.iter().zip(expect) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(s.t_rel, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn counterexample_spectra_stay_in_unit_interval() {
        for n in [3usize, 5] {
            let g = zoo::make_counterexample(n, 5.0, 0.1, false).unwrap();
            let p = build_chain(&g, 5.0).unwrap();
            let s = spectrum(&p).unwrap();
            assert!(s
                .eigenvalues
                .iter()
                .all(|&l| (-1e-9..=1.0 + 1e-9).contains(&l)));
        }
    }

    #[test]
    fn killed_singleton_eigenvalue_is_the_diagonal_entry() {
        let g = zoo::ladder2();
        let p = build_chain(&g, (2.0f64).ln()).unwrap();
        let k = restrict_kill(&p, &SubsetMask::singleton(4, 0)).unwrap();
        assert_abs_diff_eq!(lambda_max_killed(&k).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn killed_everything_has_unit_eigenvalue() {
        let g = zoo::ladder2();
        let p = build_chain(&g, 0.4).unwrap();
        let k = restrict_kill(&p, &SubsetMask::full(4)).unwrap();
        assert_abs_diff_eq!(lambda_max_killed(&k).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn killed_gap_is_bounded_by_the_bottleneck() {
        let g = crate::zoo::make_random_potential(&[2, 2, 2], 3, 1.0, 4096).unwrap();
        let p = build_chain(&g, 1.4).unwrap();
        for seed in 0..12u64 {
            let l = random_nonempty_subset(8, seed);
            if l.len() == 8 {
                continue;
            }
            let k = restrict_kill(&p, &l).unwrap();
            let lam = lambda_max_killed(&k).unwrap();
            let b = crate::chain::bottleneck(&p, &l).unwrap();
            assert!(
                1.0 - lam <= b + 1e-10,
                "gap {} > bottleneck {}",
                1.0 - lam,
                b
            );
        }
    }

    #[test]
    fn restrictions_of_potential_chains_have_nonnegative_spectra() {
        let g = crate::zoo::make_random_potential(&[3, 2, 2], 17, 1.0, 4096).unwrap();
        let p = build_chain(&g, 2.2).unwrap();
        let full = spectrum(&p).unwrap();
        assert!(full.eigenvalues.iter().all(|&l| l >= -1e-9));
        for seed in 0..10u64 {
            let l = random_connected_subset(p.index(), seed);
            let loopy = restrict_loop(&p, &l).unwrap();
            let killed = restrict_kill(&p, &l).unwrap();
            for s in [spectrum(&loopy).unwrap(), spectrum(&killed).unwrap()] {
                assert!(
                    s.eigenvalues.iter().all(|&l| l >= -1e-9),
                    "negative eigenvalue in {:?}",
                    s.eigenvalues
                );
            }
        }
    }

    #[test]
    fn dirichlet_form_basics() {
        let g = zoo::ladder2();
        let p = build_chain(&g, 0.0).unwrap();
        let pi = p.pi().clone();
        assert_eq!(dirichlet_form(&p, &pi, &[2.0; 4]).unwrap(), 0.0);
        // indicator of {(0,0)} scaled by pi(L) = 1/4: E = pi(L)^2 Q(L, L-bar)
        let phi = [0.25, 0.0, 0.0, 0.0];
        let expect = 0.25f64.powi(2) * (0.25 * 0.5);
        assert_abs_diff_eq!(
            dirichlet_form(&p, &pi, &phi).unwrap(),
            expect,
            epsilon = 1e-15
        );
        // invariance under adding constants
        let shifted: Vec<f64> = phi.iter().map(|v| v + 5.0).collect();
        assert_abs_diff_eq!(
            dirichlet_form(&p, &pi, &shifted).unwrap(),
            expect,
            epsilon = 1e-12
        );
    }

    #[test]
    fn rayleigh_singleton_quotient_is_one_minus_diagonal() {
        let g = zoo::ladder2();
        let p = build_chain(&g, (2.0f64).ln()).unwrap();
        let k = restrict_kill(&p, &SubsetMask::singleton(4, 0)).unwrap();
        let rep = rayleigh_check(&p, &k, 50, 7).unwrap();
        assert!(rep.pass);
        assert_abs_diff_eq!(rep.eigenvector_quotient, 1.0 - 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn rayleigh_check_on_random_potential_games() {
        for seed in 0..4u64 {
            let g = crate::zoo::make_random_potential(&[2, 2, 2], seed, 1.0, 4096).unwrap();
            let p = build_chain(&g, 1.1).unwrap();
            let l = random_connected_subset(p.index(), seed + 100);
            let k = restrict_kill(&p, &l).unwrap();
            let rep = rayleigh_check(&p, &k, 200, seed).unwrap();
            assert!(rep.pass, "{rep:?}");
        }
    }

    #[test]
    fn trace_det_report_on_binary_game() {
        let g = crate::zoo::make_pure_coordination(4).unwrap();
        let rep = trace_and_det_report(&g, 2.0).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert_abs_diff_eq!(rep.trace_formula, 8.0, epsilon = 1e-12); // 2^{n-1}
    }

    #[test]
    fn trace_det_report_on_mixed_radix_game() {
        let g = crate::zoo::make_random_potential(&[3, 2, 4], 5, 1.0, 4096).unwrap();
        let rep = trace_and_det_report(&g, 0.7).unwrap();
        assert!(rep.pass, "{rep:?}");
        let expect = (2.0 * 4.0 + 3.0 * 4.0 + 3.0 * 2.0) / 3.0;
        assert_abs_diff_eq!(rep.trace_formula, expect, epsilon = 1e-12);
    }

    #[test]
    fn single_player_uniform_trace_and_det() {
        let g = crate::zoo::make_random_potential(&[5], 1, 0.0, 4096).unwrap();
        let rep = trace_and_det_report(&g, 0.0).unwrap();
        assert_abs_diff_eq!(rep.trace_formula, 1.0, epsilon = 1e-12);
        assert!(rep.abs_determinant <= 1e-9);
    }

    #[test]
    fn trace_det_rejects_single_strategy_players() {
        let g = crate::zoo::make_random_potential(&[1, 3], 0, 1.0, 4096).unwrap();
        assert!(trace_and_det_report(&g, 1.0).is_err());
    }
}
