//! The bottleneck-driven partition procedure and its verifier.
//!
//! The procedure repeatedly picks, among the remaining profiles, a
//! minimal-stationary-mass subset whose bottleneck ratio is below 1/q(n),
//! computes the mixing time of the chain restricted to it, and keeps the
//! states that are unlikely to escape within that time as the component's
//! core. The search over subsets is exponential by nature, so the candidate
//! family is an explicit parameter and each returned component records which
//! family produced it.

use crate::chain::{self, ChainMatrix, ScopedFlows, SubsetFamily};
use crate::convergence::{self, MixingTime};
use crate::error::{Error, Result};
use crate::exec;
use crate::game::GameSpec;
use crate::subset::SubsetMask;
use crate::zoo;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Named growth functions for the polynomial/super-polynomial thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GrowthFn {
    /// `sum_k coeffs[k] * n^k`.
    Poly { coeffs: Vec<f64> },
    /// `exp(scale * n^exponent)`.
    ExpPoly { scale: f64, exponent: f64 },
    /// `exp(scale * sqrt(n) * ln n)`.
    ExpSqrtLog { scale: f64 },
    /// `n^(ln n)`.
    PowLog,
}

impl GrowthFn {
    pub fn monomial(coeff: f64, degree: usize) -> Self {
        let mut coeffs = vec![0.0; degree + 1];
        coeffs[degree] = coeff;
        GrowthFn::Poly { coeffs }
    }

    pub fn eval(&self, n: f64) -> f64 {
        match self {
            GrowthFn::Poly { coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * n.powi(k as i32))
                .sum(),
            GrowthFn::ExpPoly { scale, exponent } => (scale * n.powf(*exponent)).exp(),
            GrowthFn::ExpSqrtLog { scale } => (scale * n.sqrt() * n.ln()).exp(),
            GrowthFn::PowLog => n.powf(n.ln()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            GrowthFn::Poly { coeffs } => {
                let terms: Vec<String> = coeffs
                    .iter()
                    .enumerate()
                    .filter(|&(_, c)| *c != 0.0)
                    .map(|(k, c)| match k {
                        0 => format!("{c}"),
                        1 => format!("{c}*n"),
                        _ => format!("{c}*n^{k}"),
                    })
                    .collect();
                if terms.is_empty() {
                    "0".into()
                } else {
                    terms.join(" + ")
                }
            }
            GrowthFn::ExpPoly { scale, exponent } => {
                if *exponent == 1.0 {
                    format!("exp({scale}*n)")
                } else {
                    format!("exp({scale}*n^{exponent})")
                }
            }
            GrowthFn::ExpSqrtLog { scale } => format!("exp({scale}*sqrt(n)*log(n))"),
            GrowthFn::PowLog => "n^log(n)".into(),
        }
    }
}

/// Horizon used to certify that q eventually dominates p.
const DOMINANCE_HORIZON: usize = 10_000;

/// Configuration of the partition procedure: the polynomial/super-polynomial
/// pair, the tolerance, and the subset search family with its caps.
#[derive(Debug, Clone, Serialize)]
pub struct PQConfig {
    pub p: GrowthFn,
    pub q: GrowthFn,
    pub eps: f64,
    pub family: SubsetFamily,
    /// Budget for residual eps-hitting times, as a multiple of p(n).
    pub residual_budget_factor: f64,
}

impl PQConfig {
    pub fn new(p: GrowthFn, q: GrowthFn, eps: f64, family: SubsetFamily) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::invalid("eps must lie in (0, 1)"));
        }
        Ok(PQConfig {
            p,
            q,
            eps,
            family,
            residual_budget_factor: 4.0,
        })
    }

    /// Checks that p is >= 1 and non-decreasing on the scanned range and that
    /// q/p grows without bound: the ratio must be non-decreasing on a tail of
    /// the dominance horizon and exceed 1 there.
    pub fn validate_range(&self, n_lo: usize, n_hi: usize) -> Result<()> {
        if n_lo == 0 || n_lo > n_hi {
            return Err(Error::invalid("empty or zero-based n range"));
        }
        let mut prev = f64::NEG_INFINITY;
        for n in n_lo..=n_hi {
            let v = self.p.eval(n as f64);
            if v < 1.0 {
                return Err(Error::invalid(format!(
                    "p({n}) = {v} is below 1 on the scanned range"
                )));
            }
            if v < prev {
                return Err(Error::invalid(format!("p is decreasing at n = {n}")));
            }
            prev = v;
        }
        let ratio = |n: usize| self.q.eval(n as f64) / self.p.eval(n as f64);
        let mut tail_start = None;
        let mut prev_ratio = f64::INFINITY;
        for n in (n_lo..=DOMINANCE_HORIZON).rev() {
            let r = ratio(n);
            if r <= prev_ratio {
                tail_start = Some(n);
                prev_ratio = r;
            } else {
                break;
            }
        }
        let start = tail_start.ok_or_else(|| Error::invalid("q/p never grows"))?;
        if ratio(DOMINANCE_HORIZON) <= 1.0 || start > DOMINANCE_HORIZON / 2 {
            return Err(Error::invalid(format!(
                "q does not dominate p by n = {DOMINANCE_HORIZON} (ratio tail starts at {start})"
            )));
        }
        Ok(())
    }
}

/// One component returned by the procedure, with its certificates.
#[derive(Debug, Clone, Serialize)]
pub struct ComponentCertificate {
    pub r: SubsetMask,
    pub core: SubsetMask,
    /// Bottleneck ratio of R in the full chain.
    pub b_r: f64,
    pub pi_r: f64,
    /// Mixing time of the chain restricted to R at the configured eps.
    pub t_mix_r: u64,
    /// Escape probability within t_mix_r for every state of R.
    pub escape: Vec<(usize, f64)>,
    /// Which candidate family produced R.
    pub family: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionResult {
    pub components: Vec<ComponentCertificate>,
    pub residual: SubsetMask,
    /// eps-hitting time of the core union from each residual state; `None`
    /// when the budget ran out first.
    pub residual_t_eps: Vec<(usize, Option<u64>)>,
    /// True when no subset qualified on the first iteration (fast-mixing
    /// regime: the stationary distribution itself is the answer).
    pub stationary_regime: bool,
    /// True when the loop stopped because a chosen subset had an empty core.
    pub terminated_on_empty_core: bool,
    pub eps: f64,
    pub q_threshold: f64,
    pub p_horizon: f64,
}

impl PartitionResult {
    pub fn core_union(&self, size: usize) -> SubsetMask {
        let mut u = SubsetMask::empty(size);
        for c in &self.components {
            u = u.union(&c.core);
        }
        u
    }
}

/// Picks the qualifying subset (B <= threshold, pi <= 1/2) of minimal
/// stationary mass within the scope, ties broken by the smaller bitmask.
fn min_mass_qualifying(
    p: &ChainMatrix,
    scope: &SubsetMask,
    family: &SubsetFamily,
    game: &GameSpec,
    b_threshold: f64,
) -> Result<Option<(SubsetMask, f64, f64)>> {
    let half = 0.5 + 1e-12;
    match family {
        SubsetFamily::Exhaustive { cap } => {
            let flows = ScopedFlows::new(p, scope, *cap)?;
            let total = flows.patterns();
            let score = |pattern: usize| -> Option<(f64, u64)> {
                let (b, pl) = flows.eval(pattern as u64)?;
                if pl > half || b > b_threshold {
                    return None;
                }
                Some((pl, pattern as u64))
            };
            Ok(exec::argmin_indexed(total as usize, score).map(|(_, (pl, pat))| {
                let mask = flows.pattern_to_mask(p.size(), pat);
                let (b, _) = flows.eval(pat).unwrap();
                (mask, b, pl)
            }))
        }
        _ => {
            let candidates = chain::candidate_subsets(p, scope, family, Some(game))?;
            let pi = p.pi();
            let scored = exec::map_indexed(candidates.len(), |i| {
                let l = &candidates[i];
                let pl = pi.mass(l);
                if pl <= 0.0 || pl > half {
                    return None;
                }
                let b = chain::bottleneck(p, l).ok()?;
                if b > b_threshold {
                    return None;
                }
                Some((pl, b))
            });
            let mut best: Option<(f64, f64, &SubsetMask)> = None;
            for (i, s) in scored.iter().enumerate() {
                if let Some((pl, b)) = s {
                    let cand = (*pl, *b, &candidates[i]);
                    best = match best {
                        None => Some(cand),
                        Some(cur) => {
                            let better = cand.0 < cur.0
                                || (cand.0 == cur.0
                                    && cand.2.cmp_as_integer(cur.2) == std::cmp::Ordering::Less);
                            Some(if better { cand } else { cur })
                        }
                    };
                }
            }
            Ok(best.map(|(pl, b, mask)| (mask.clone(), b, pl)))
        }
    }
}

/// Runs the partition procedure: while some subset of the remaining states
/// has stationary mass at most 1/2 and bottleneck ratio at most 1/q(n), take
/// one of minimal mass as R_i, keep as its core T_i the states unlikely to
/// escape R_i within the restricted mixing time, and remove the core from the
/// remaining states. Stops when a core comes out empty.
pub fn run_a_pq(g: &GameSpec, beta: f64, cfg: &PQConfig) -> Result<PartitionResult> {
    let p = chain::build_chain(g, beta)?;
    let n = g.n_players() as f64;
    let q_threshold = 1.0 / cfg.q.eval(n);
    let p_horizon = cfg.p.eval(n);
    let mut remaining = SubsetMask::full(p.size());
    let mut components: Vec<ComponentCertificate> = Vec::new();
    let mut terminated_on_empty_core = false;

    loop {
        if remaining.is_empty() {
            break;
        }
        let Some((r, b_r, pi_r)) =
            min_mass_qualifying(&p, &remaining, &cfg.family, g, q_threshold)?
        else {
            break;
        };
        // Minimal-mass qualifying subsets are connected: a disconnected
        // qualifier would contain a component with no larger bottleneck and
        // strictly smaller mass.
        if !chain::is_connected(p.index(), &r) {
            return Err(Error::Numerical(format!(
                "chosen subset {r} is disconnected, contradicting minimality"
            )));
        }
        let restricted = chain::restrict_loop(&p, &r)?;
        let t_mix_r = match convergence::mixing_time_auto(&restricted, cfg.eps)? {
            MixingTime::Exact(t) => t,
            MixingTime::LowerBound(cap) => {
                return Err(Error::Numerical(format!(
                    "restricted mixing time exceeded the cap {cap} on {r}"
                )))
            }
        };
        let escape_profile =
            convergence::hitting_profile(&p, &r.complement(), cfg.eps, &[t_mix_r], t_mix_r)?;
        let gi = escape_profile
            .grid
            .iter()
            .position(|&t| t == t_mix_r)
            .expect("t_mix_r was added to the grid");
        let mut core = SubsetMask::empty(p.size());
        let mut escape = Vec::new();
        for x in r.iter() {
            let esc = 1.0 - escape_profile.tail(gi, x);
            if esc <= cfg.eps {
                core.insert(x);
                escape.push((x, esc));
            }
        }
        if core.is_empty() {
            terminated_on_empty_core = true;
            break;
        }
        remaining = remaining.minus(&core);
        components.push(ComponentCertificate {
            r,
            core,
            b_r,
            pi_r,
            t_mix_r,
            escape,
            family: cfg.family.label(),
        });
    }

    let stationary_regime = components.is_empty() && !terminated_on_empty_core;
    let mut residual_t_eps: Vec<(usize, Option<u64>)> = Vec::new();
    if !components.is_empty() && !remaining.is_empty() {
        let union = {
            let mut u = SubsetMask::empty(p.size());
            for c in &components {
                u = u.union(&c.core);
            }
            u
        };
        let budget = ((p_horizon * cfg.residual_budget_factor).ceil() as u64).max(1024);
        let profile = convergence::hitting_profile(&p, &union, cfg.eps, &[], budget)?;
        for x in remaining.iter() {
            residual_t_eps.push((x, profile.t_eps[x]));
        }
    }

    Ok(PartitionResult {
        components,
        residual: remaining,
        residual_t_eps,
        stationary_regime,
        terminated_on_empty_core,
        eps: cfg.eps,
        q_threshold,
        p_horizon,
    })
}

/// A candidate partition to verify: components (R_i, T_i) plus the residual
/// set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionCandidate {
    pub components: Vec<(SubsetMask, SubsetMask)>,
    pub residual: SubsetMask,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionRow {
    pub component: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionVerification {
    /// Condition 1: B(R_i) <= 1/q(n).
    pub bottleneck: Vec<ConditionRow>,
    /// Condition 2: restricted mixing time <= p(n).
    pub mixing: Vec<ConditionRow>,
    /// Condition 3: worst escape probability from the core within the
    /// restricted mixing time <= eps.
    pub core_escape: Vec<ConditionRow>,
    /// Condition 4: worst probability of missing the core union within p(n)
    /// steps from the residual <= eps.
    pub residual_reach: Option<ConditionRow>,
    pub t_mix_values: Vec<u64>,
    pub pass: bool,
}

/// Checks the four partition conditions for a candidate, with exact numbers.
/// Structural violations (cores escaping their subsets, a non-partition,
/// disconnected subsets) are input errors naming the broken rule.
pub fn verify_partition(
    g: &GameSpec,
    beta: f64,
    candidate: &PartitionCandidate,
    p_fn: &GrowthFn,
    q_fn: &GrowthFn,
    eps: f64,
) -> Result<PartitionVerification> {
    let p = chain::build_chain(g, beta)?;
    let size = p.size();
    // structural checks
    let mut union = SubsetMask::empty(size);
    for (i, (r, t)) in candidate.components.iter().enumerate() {
        if r.is_empty() {
            return Err(Error::invalid(format!("component {i}: R is empty")));
        }
        if !t.is_subset_of(r) {
            return Err(Error::invalid(format!(
                "component {i}: core is not contained in its subset"
            )));
        }
        if t.intersects(&union) {
            return Err(Error::invalid(format!(
                "component {i}: cores are not pairwise disjoint"
            )));
        }
        if !chain::is_connected(p.index(), r) {
            return Err(Error::invalid(format!("component {i}: R is not connected")));
        }
        union = union.union(t);
    }
    if union.intersects(&candidate.residual) || union.len() + candidate.residual.len() != size {
        return Err(Error::invalid(
            "cores plus residual must partition the profile space",
        ));
    }

    let n = g.n_players() as f64;
    let q_threshold = 1.0 / q_fn.eval(n);
    let p_horizon = p_fn.eval(n);
    let mut bottleneck = Vec::new();
    let mut mixing = Vec::new();
    let mut core_escape = Vec::new();
    let mut t_mix_values = Vec::new();

    for (i, (r, t)) in candidate.components.iter().enumerate() {
        let b = chain::bottleneck(&p, r)?;
        bottleneck.push(ConditionRow {
            component: i,
            lhs: b,
            rhs: q_threshold,
            pass: b <= q_threshold,
        });
        let restricted = chain::restrict_loop(&p, r)?;
        let t_mix = match convergence::mixing_time_auto(&restricted, eps)? {
            MixingTime::Exact(v) => v,
            MixingTime::LowerBound(cap) => {
                mixing.push(ConditionRow {
                    component: i,
                    lhs: cap as f64,
                    rhs: p_horizon,
                    pass: false,
                });
                t_mix_values.push(cap);
                continue;
            }
        };
        t_mix_values.push(t_mix);
        mixing.push(ConditionRow {
            component: i,
            lhs: t_mix as f64,
            rhs: p_horizon,
            pass: (t_mix as f64) <= p_horizon,
        });
        if t.is_empty() {
            core_escape.push(ConditionRow {
                component: i,
                lhs: 0.0,
                rhs: eps,
                pass: true,
            });
            continue;
        }
        let profile = convergence::hitting_profile(&p, &r.complement(), eps, &[t_mix], t_mix)?;
        let gi = profile.grid.iter().position(|&x| x == t_mix).unwrap();
        let worst = t
            .iter()
            .map(|x| 1.0 - profile.tail(gi, x))
            .fold(0.0f64, f64::max);
        core_escape.push(ConditionRow {
            component: i,
            lhs: worst,
            rhs: eps,
            pass: worst <= eps,
        });
    }

    let residual_reach = if candidate.residual.is_empty() {
        None
    } else if union.is_empty() {
        Some(ConditionRow {
            component: usize::MAX,
            lhs: 1.0,
            rhs: eps,
            pass: false,
        })
    } else {
        let horizon = p_horizon.floor() as u64;
        let profile = convergence::hitting_profile(&p, &union, eps, &[horizon], horizon)?;
        let gi = profile.grid.iter().position(|&x| x == horizon).unwrap();
        let worst_miss = candidate
            .residual
            .iter()
            .map(|x| profile.tail(gi, x))
            .fold(0.0f64, f64::max);
        Some(ConditionRow {
            component: usize::MAX,
            lhs: worst_miss,
            rhs: eps,
            pass: worst_miss <= eps,
        })
    };

    let pass = bottleneck.iter().all(|c| c.pass)
        && mixing.iter().all(|c| c.pass)
        && core_escape.iter().all(|c| c.pass)
        && residual_reach.as_ref().map_or(true, |c| c.pass);
    Ok(PartitionVerification {
        bottleneck,
        mixing,
        core_escape,
        residual_reach,
        t_mix_values,
        pass,
    })
}

/// Bottleneck ratio of `A` inside the restricted chain on L (exposed for
/// spot checks; the partition procedure itself always uses full-chain
/// bottlenecks).
pub fn bottleneck_within(p: &ChainMatrix, l: &SubsetMask, a: &SubsetMask) -> Result<f64> {
    if !a.is_subset_of(l) {
        return Err(Error::invalid("A must be contained in L"));
    }
    let restricted = chain::restrict_loop(p, l)?;
    chain::bottleneck(&restricted, a)
}

/// Rules for choosing beta as a function of n in sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BetaRule {
    Const(f64),
    /// `c * ln n`.
    MulLogN(f64),
    /// `c / n`.
    OverN(f64),
    /// `c * ln n / n`.
    MulLogNOverN(f64),
}

impl BetaRule {
    pub fn eval(&self, n: usize) -> f64 {
        let nf = n as f64;
        match self {
            BetaRule::Const(c) => *c,
            BetaRule::MulLogN(c) => c * nf.ln(),
            BetaRule::OverN(c) => c / nf,
            BetaRule::MulLogNOverN(c) => c * nf.ln() / nf,
        }
    }

    pub fn label(&self) -> String {
        match self {
            BetaRule::Const(c) => format!("{c}"),
            BetaRule::MulLogN(c) => format!("{c}*log(n)"),
            BetaRule::OverN(c) => format!("{c}/n"),
            BetaRule::MulLogNOverN(c) => format!("{c}*log(n)/n"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    /// `B >= 1/p(n)`: the subset is left on a polynomial time scale.
    PolySide,
    /// `B <= 1/q(n)`: the subset is a super-polynomial trap.
    SuperSide,
    /// Neither bound applies, or both do (the pair cannot separate at this n).
    Unclassified,
}

pub fn classify(b: f64, p_val: f64, q_val: f64) -> Classification {
    let poly = b >= 1.0 / p_val;
    let superp = b <= 1.0 / q_val;
    match (poly, superp) {
        (true, false) => Classification::PolySide,
        (false, true) => Classification::SuperSide,
        _ => Classification::Unclassified,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub beta: f64,
    pub subset: String,
    pub subset_size: usize,
    pub pi_mass: f64,
    pub b: f64,
    pub inv_b: f64,
    pub p_val: f64,
    pub q_val: f64,
    pub class: Classification,
}

/// Structural candidate subsets for the sweep: consensus singletons,
/// magnetization half-spaces for binary games, and a few potential sublevel
/// sets.
fn structural_subsets(g: &GameSpec) -> Vec<(String, SubsetMask)> {
    let ix = g.index();
    let size = g.size();
    let mut out: Vec<(String, SubsetMask)> = Vec::new();
    if let Ok(consensus) = zoo::consensus_profiles(ix) {
        for (s, idx) in consensus.iter().enumerate() {
            out.push((format!("consensus_{s}"), SubsetMask::singleton(size, *idx)));
        }
    }
    if g.strategy_counts().iter().all(|&m| m == 2) {
        let mut plus = SubsetMask::empty(size);
        let mut minus = SubsetMask::empty(size);
        for x in 0..size {
            let m = zoo::magnetization(ix, x).unwrap();
            if m > 0 {
                plus.insert(x);
            } else if m < 0 {
                minus.insert(x);
            }
        }
        if !plus.is_empty() {
            out.push(("mag_positive".into(), plus));
        }
        if !minus.is_empty() {
            out.push(("mag_negative".into(), minus));
        }
    }
    if let Ok(phi) = g.potential() {
        let mut levels: Vec<f64> = phi.to_vec();
        levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        levels.dedup();
        if levels.len() > 1 {
            for frac in [0.25, 0.5] {
                let c = levels[(levels.len() as f64 * frac) as usize];
                let members: Vec<usize> = (0..size).filter(|&x| phi[x] <= c).collect();
                if !members.is_empty() && members.len() < size {
                    out.push((
                        format!("sublevel_{frac}"),
                        SubsetMask::from_indices(size, &members).unwrap(),
                    ));
                }
            }
        }
    }
    out
}

/// Exact bottleneck table over an n-range for a zoo family: each structural
/// subset is scored and classified against the (p, q) pair. When no pair is
/// given, the counterexample family is classified against its own schedule
/// window pair, and everything else against (n^3, exp(0.5 n)).
pub fn classification_sweep(
    family: zoo::Family,
    params: &BTreeMap<String, f64>,
    beta_rule: &BetaRule,
    n_range: std::ops::RangeInclusive<usize>,
    pq: Option<(GrowthFn, GrowthFn)>,
) -> Result<Vec<SweepRow>> {
    if n_range.is_empty() {
        return Err(Error::invalid("empty n range"));
    }
    let mut rows = Vec::new();
    for n in n_range {
        let g = zoo::build(family, n, params)?;
        let beta = beta_rule.eval(n);
        let p = chain::build_chain(&g, beta)?;
        let (p_val, q_val) = match &pq {
            Some((pf, qf)) => (pf.eval(n as f64), qf.eval(n as f64)),
            None if family == zoo::Family::Counterexample => {
                let eps = params.get("eps").copied().unwrap_or(0.1);
                zoo::CounterexampleSchedule::new(eps)?.window_pair(n)?
            }
            None => (
                GrowthFn::monomial(1.0, 3).eval(n as f64),
                GrowthFn::ExpPoly {
                    scale: 0.5,
                    exponent: 1.0,
                }
                .eval(n as f64),
            ),
        };
        for (label, mask) in structural_subsets(&g) {
            let pi_mass = p.pi().mass(&mask);
            if pi_mass <= 0.0 {
                continue;
            }
            let b = chain::bottleneck(&p, &mask)?;
            rows.push(SweepRow {
                n,
                beta,
                subset: label,
                subset_size: mask.len(),
                pi_mass,
                b,
                inv_b: 1.0 / b,
                p_val,
                q_val,
                class: classify(b, p_val, q_val),
            });
        }
    }
    Ok(rows)
}
