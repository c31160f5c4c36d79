//! Metastable distributions, pseudo-mixing times, and the distributions the
//! partition machinery builds from them.
//!
//! A distribution mu is (eps, T)-metastable when `||mu P^t - mu||_TV <= eps`
//! for every t <= T. Horizons beyond the step budget are certified through
//! the one-step scaling bound (a drift of eps/T per step accumulates to at
//! most eps over T steps); certificates record which mode produced the
//! verdict.

use crate::chain::{self, ChainKind, ChainMatrix};
use crate::convergence::{self, DensePowers, HittingProfile};
use crate::dist::{tv_distance_slices, Dist};
use crate::error::{Error, Result};
use crate::subset::SubsetMask;
use serde::Serialize;

/// Default step budget for explicit metastability checks.
pub const DEFAULT_META_STEP_BUDGET: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CertificateMode {
    /// Every step up to the horizon was evolved and checked.
    Stepwise,
    /// The horizon exceeded the step budget; the verdict comes from the
    /// one-step drift bound.
    BoundCertified,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetaCertificate {
    pub mu: Dist,
    pub eps: f64,
    pub horizon: f64,
    pub mode: CertificateMode,
    /// Stepwise: the exact max drift observed up to the horizon (or up to the
    /// early-exit violation). Bound-certified: one-step drift times horizon.
    pub observed_max: f64,
    /// Thinned record of checked (t, drift) pairs: powers of two plus the
    /// argmax.
    pub grid: Vec<(u64, f64)>,
    pub pass: bool,
}

/// Checks (eps, T)-metastability of `mu`. Horizons at most `step_budget` are
/// evolved step by step with an early exit on violation; larger horizons are
/// certified through the one-step bound `||mu P - mu|| <= eps / T`.
pub fn is_metastable(
    p: &ChainMatrix,
    mu: &Dist,
    eps: f64,
    horizon: f64,
    step_budget: u64,
) -> Result<MetaCertificate> {
    if mu.len() != p.size() {
        return Err(Error::SizeMismatch("distribution length".into()));
    }
    if !(horizon >= 0.0) {
        return Err(Error::invalid("horizon must be nonnegative"));
    }
    let steps = horizon.floor();
    if steps <= step_budget as f64 {
        let steps = steps as u64;
        let mut grid: Vec<(u64, f64)> = Vec::new();
        let mut current = mu.values().to_vec();
        let mut observed = (0u64, 0.0f64);
        for t in 1..=steps {
            current = p.step_distribution(&current);
            let drift = tv_distance_slices(&current, mu.values())?;
            if drift > observed.1 {
                observed = (t, drift);
            }
            if t.is_power_of_two() || t == steps {
                grid.push((t, drift));
            }
            if drift > eps {
                grid.push((t, drift));
                return Ok(MetaCertificate {
                    mu: mu.clone(),
                    eps,
                    horizon,
                    mode: CertificateMode::Stepwise,
                    observed_max: drift,
                    grid,
                    pass: false,
                });
            }
        }
        if observed.0 > 0 && !grid.iter().any(|&(t, _)| t == observed.0) {
            grid.push(observed);
            grid.sort_by_key(|&(t, _)| t);
        }
        Ok(MetaCertificate {
            mu: mu.clone(),
            eps,
            horizon,
            mode: CertificateMode::Stepwise,
            observed_max: observed.1,
            grid,
            pass: true,
        })
    } else {
        let one = p.step_distribution(mu.values());
        let drift = tv_distance_slices(&one, mu.values())?;
        let implied = drift * horizon;
        Ok(MetaCertificate {
            mu: mu.clone(),
            eps,
            horizon,
            mode: CertificateMode::BoundCertified,
            observed_max: implied,
            grid: vec![(1, drift)],
            pass: implied <= eps,
        })
    }
}

/// The stationary distribution conditioned on L: `pi_L = pi / pi(L)` on L.
pub fn stationary_restricted(pi: &Dist, l: &SubsetMask) -> Result<Dist> {
    chain::restrict_distribution(pi, l)
}

#[derive(Debug, Clone, Serialize)]
pub struct PseudoMixResult {
    pub eps: f64,
    pub value: convergence::MixingTime,
    /// Worst TV to the target at the returned time (or at the budget).
    pub final_tv: f64,
    /// Whether the monotone bisection route was used (valid only for
    /// stationary targets).
    pub monotone_route: bool,
}

/// Pseudo-mixing time `t_mu^L(eps) = min { t : max_{x in L} ||P^t(x,.) -
/// mu|| <= eps }` by simultaneous row evolution, scanning every t. When `mu`
/// is stationary for the chain the worst distance is non-increasing and a
/// doubling-plus-bisection search is used instead; the monotonicity is
/// asserted on every probed point rather than assumed.
pub fn pseudo_mixing_time(
    p: &ChainMatrix,
    mu: &Dist,
    l: &SubsetMask,
    eps: f64,
    budget: u64,
) -> Result<PseudoMixResult> {
    if l.is_empty() {
        return Err(Error::EmptySubset);
    }
    if mu.len() != p.size() {
        return Err(Error::SizeMismatch("distribution length".into()));
    }
    let active = p.active();
    if !l.is_subset_of(&active) {
        return Err(Error::invalid("start set must lie in the active space"));
    }
    let starts = l.to_indices();
    let one_step = p.step_distribution(mu.values());
    let stationary = tv_distance_slices(&one_step, mu.values())? <= 1e-12;

    if stationary {
        let mut dp = DensePowers::new(p)?;
        let mut evaluated: Vec<(u64, f64)> = Vec::new();
        let probe = |dp: &mut DensePowers, evaluated: &mut Vec<(u64, f64)>, t: u64| -> Result<f64> {
            let v = convergence::max_tv_to(dp, &starts, t, mu)?;
            evaluated.push((t, v));
            Ok(v)
        };
        let d0 = probe(&mut dp, &mut evaluated, 0)?;
        if d0 <= eps {
            return Ok(PseudoMixResult {
                eps,
                value: convergence::MixingTime::Exact(0),
                final_tv: d0,
                monotone_route: true,
            });
        }
        let mut hi = 1u64;
        loop {
            let d_hi = probe(&mut dp, &mut evaluated, hi)?;
            if d_hi <= eps {
                break;
            }
            if hi >= budget {
                return Ok(PseudoMixResult {
                    eps,
                    value: convergence::MixingTime::LowerBound(budget),
                    final_tv: d_hi,
                    monotone_route: true,
                });
            }
            hi = hi.saturating_mul(2).min(budget);
        }
        let mut lo = hi / 2;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if probe(&mut dp, &mut evaluated, mid)? <= eps {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        evaluated.sort_by_key(|&(t, _)| t);
        for w in evaluated.windows(2) {
            if w[1].1 > w[0].1 + 1e-12 {
                return Err(Error::Numerical(format!(
                    "pseudo-mixing profile rose at t = {} despite a stationary target",
                    w[1].0
                )));
            }
        }
        let final_tv = convergence::max_tv_to(&mut dp, &starts, hi, mu)?;
        return Ok(PseudoMixResult {
            eps,
            value: convergence::MixingTime::Exact(hi),
            final_tv,
            monotone_route: true,
        });
    }

    // General target: the profile need not be monotone, so scan every step.
    let size = p.size();
    let mut rows: Vec<Vec<f64>> = starts
        .iter()
        .map(|&x| {
            let mut r = vec![0.0; size];
            r[x] = 1.0;
            r
        })
        .collect();
    for t in 0..=budget {
        let worst = rows
            .iter()
            .map(|r| tv_distance_slices(r, mu.values()).unwrap())
            .fold(0.0f64, f64::max);
        if worst <= eps {
            return Ok(PseudoMixResult {
                eps,
                value: convergence::MixingTime::Exact(t),
                final_tv: worst,
                monotone_route: false,
            });
        }
        if t == budget {
            return Ok(PseudoMixResult {
                eps,
                value: convergence::MixingTime::LowerBound(budget),
                final_tv: worst,
                monotone_route: false,
            });
        }
        rows = crate::exec::map_indexed(rows.len(), |i| p.step_distribution(&rows[i]));
    }
    unreachable!()
}

/// Pointwise mixture of distributions with validated weights.
pub fn convex_combination(parts: &[(f64, Dist)]) -> Result<Dist> {
    if parts.is_empty() {
        return Err(Error::invalid("mixture needs at least one part"));
    }
    let total: f64 = parts.iter().map(|(w, _)| w).sum();
    if parts.iter().any(|(w, _)| *w < 0.0) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(
            "mixture weights must be nonnegative and sum to 1",
        ));
    }
    let size = parts[0].1.len();
    let mut v = vec![0.0; size];
    for (w, d) in parts {
        if d.len() != size {
            return Err(Error::SizeMismatch("mixture component length".into()));
        }
        for (acc, &p) in v.iter_mut().zip(d.values()) {
            *acc += w * p;
        }
    }
    Dist::new(v)
}

#[derive(Debug, Clone, Serialize)]
pub struct NuResult {
    pub nu: Dist,
    /// Conditional absorption weight of each core.
    pub weights: Vec<f64>,
    /// `T^eps(x)`: the absorption horizon the conditioning uses.
    pub t_eps: u64,
    /// Total mass absorbed by the horizon (the conditioning event).
    pub absorbed_mass: f64,
}

/// Builds `nu_x = sum_i mu_i * Pr_x[absorbed in T_i | absorbed by T^eps(x)]`
/// for a residual start x: the chain is evolved with every core state
/// absorbing, newly absorbed mass is credited to its core, and the weights
/// are conditioned on absorption by the eps-hitting time. Unabsorbed mass is
/// discarded by the conditioning, never folded into the cores.
pub fn nu_distribution(
    p: &ChainMatrix,
    x: usize,
    cores: &[SubsetMask],
    mus: &[Dist],
    residual: &SubsetMask,
    eps: f64,
    budget: u64,
) -> Result<NuResult> {
    if !matches!(p.kind(), ChainKind::Full) {
        return Err(Error::invalid("nu construction needs the full chain"));
    }
    if cores.is_empty() || cores.len() != mus.len() {
        return Err(Error::invalid("need one target distribution per core"));
    }
    if !residual.contains(x) {
        return Err(Error::invalid("start profile must lie in the residual set"));
    }
    let size = p.size();
    let mut union = SubsetMask::empty(size);
    for (i, core) in cores.iter().enumerate() {
        if core.is_empty() {
            return Err(Error::invalid(format!("core {i} is empty")));
        }
        if core.intersects(&union) {
            return Err(Error::invalid("cores must be disjoint"));
        }
        union = union.union(core);
    }
    if union.intersects(residual) || union.len() + residual.len() != size {
        return Err(Error::invalid(
            "cores plus residual must partition the profile space",
        ));
    }

    let profile: HittingProfile = convergence::hitting_profile(p, &union, eps, &[], budget)?;
    let t_eps = profile.t_eps[x].ok_or_else(|| {
        Error::Numerical(format!("absorption budget {budget} exhausted for start {x}"))
    })?;

    // Per-residual-state absorption rates into each core.
    let members = residual.to_indices();
    let rates: Vec<Vec<f64>> = cores
        .iter()
        .map(|core| {
            members
                .iter()
                .map(|&z| {
                    p.row(z)
                        .iter()
                        .filter(|&&(y, _)| core.contains(y))
                        .map(|&(_, v)| v)
                        .sum::<f64>()
                })
                .collect()
        })
        .collect();

    let killed = chain::restrict_kill(p, residual)?;
    let mut u = vec![0.0; size];
    u[x] = 1.0;
    let mut absorbed = vec![0.0f64; cores.len()];
    for _t in 1..=t_eps {
        for (i, rate) in rates.iter().enumerate() {
            absorbed[i] += members
                .iter()
                .zip(rate)
                .map(|(&z, &r)| u[z] * r)
                .sum::<f64>();
        }
        u = killed.step_distribution(&u);
    }
    let total: f64 = absorbed.iter().sum();
    if total <= 0.0 {
        return Err(Error::Numerical(
            "no mass absorbed by the conditioning horizon".into(),
        ));
    }
    let weights: Vec<f64> = absorbed.iter().map(|a| a / total).collect();
    let parts: Vec<(f64, Dist)> = weights
        .iter()
        .zip(mus)
        .map(|(&w, mu)| (w, mu.clone()))
        .collect();
    let nu = convex_combination(&parts)?;
    Ok(NuResult {
        nu,
        weights,
        t_eps,
        absorbed_mass: total,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CouplingCheckRow {
    pub start: usize,
    pub t: u64,
    /// TV between the full and the restricted evolution.
    pub lhs_restriction: f64,
    /// TV between the full evolution and pi_L.
    pub lhs_convergence: f64,
    /// TV between the restricted evolution and pi_L.
    pub restricted_tv: f64,
    /// Escape probability by time t.
    pub escape: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CouplingCheckReport {
    pub rows: Vec<CouplingCheckRow>,
    pub violations: usize,
    pub tol: f64,
}

/// Verifies, for every start in L and every grid time, that the full and the
/// loop-restricted evolutions differ by at most the escape probability, and
/// that convergence to pi_L is controlled by the restricted convergence plus
/// the escape probability.
pub fn restriction_coupling_check(
    p: &ChainMatrix,
    l: &SubsetMask,
    t_grid: &[u64],
) -> Result<CouplingCheckReport> {
    if !matches!(p.kind(), ChainKind::Full) {
        return Err(Error::invalid("coupling check needs the full chain"));
    }
    if !chain::is_connected(p.index(), l) {
        return Err(Error::invalid("L must be connected"));
    }
    let tol = 1e-10;
    let restricted = chain::restrict_loop(p, l)?;
    let pi_l = restricted.pi().clone();
    let mut dp_full = DensePowers::new(p)?;
    let mut dp_restricted = DensePowers::new(&restricted)?;
    let budget = t_grid.iter().copied().max().unwrap_or(0);
    let profile = if l.len() == p.size() {
        None
    } else {
        Some(convergence::hitting_profile(
            p,
            &l.complement(),
            0.25,
            t_grid,
            budget,
        )?)
    };

    let mut rows = Vec::new();
    for &t in t_grid {
        for x in l.iter() {
            let full_row = dp_full.row_at(t, x)?;
            let restr_row = dp_restricted.row_at(t, x)?;
            let lhs_restriction = tv_distance_slices(&full_row, &restr_row)?;
            let lhs_convergence = tv_distance_slices(&full_row, pi_l.values())?;
            let restricted_tv = tv_distance_slices(&restr_row, pi_l.values())?;
            let escape = match &profile {
                Some(prof) => {
                    1.0 - prof
                        .tail_at(t, x)
                        .ok_or_else(|| Error::Numerical(format!("tail missing at t = {t}")))?
                }
                None => 0.0,
            };
            let pass =
                lhs_restriction <= escape + tol && lhs_convergence <= restricted_tv + escape + tol;
            rows.push(CouplingCheckRow {
                start: x,
                t,
                lhs_restriction,
                lhs_convergence,
                restricted_tv,
                escape,
                pass,
            });
        }
    }
    let violations = rows.iter().filter(|r| !r.pass).count();
    Ok(CouplingCheckReport {
        rows,
        violations,
        tol,
    })
}
