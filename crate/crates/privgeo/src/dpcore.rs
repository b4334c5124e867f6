//! Differential-privacy primitives: discrete Laplace noise, two sparse
//! selection mechanisms, composition arithmetic, an exact distribution
//! oracle for tiny instances, and the budget ledger.
//!
//! Neighboring datasets differ by adding/removing one record throughout.
//! All sampling is inverse-CDF over a deterministic key order (the null
//! symbol first, then ascending keys), with exponentials evaluated in log
//! space after max-subtraction, so a fixed seed reproduces every choice.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::{capacity, contract, Result};
use crate::geom;

/// Failure probability used when callers don't specify one.
pub const DEFAULT_BETA: f64 = 0.01;

/// Which privacy regime a randomized pipeline runs in: pure ε-DP (selection
/// falls back to a universe sampler) or approximate (ε, δ)-DP (selection may
/// return the null outcome).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    Pure,
    Approx,
}

/// An (ε, δ, β) privacy/accuracy budget. δ = 0 flags pure mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    pub beta: f64,
}

impl PrivacyBudget {
    pub fn pure(epsilon: f64, beta: f64) -> Result<Self> {
        PrivacyBudget::approx(epsilon, 0.0, beta)
    }

    pub fn approx(epsilon: f64, delta: f64, beta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(contract(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(contract(format!("delta must lie in [0, 1), got {delta}")));
        }
        if !(delta == 0.0 || delta > 0.0) || !delta.is_finite() {
            return Err(contract("delta must be finite"));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(contract(format!("beta must lie in (0, 1), got {beta}")));
        }
        Ok(PrivacyBudget { epsilon, delta, beta })
    }

    pub fn is_pure(&self) -> bool {
        self.delta == 0.0
    }

    /// Explicit split: fractions of ε, δ, and β for a sub-mechanism.
    pub fn scaled(&self, eps_frac: f64, delta_frac: f64, beta_frac: f64) -> Self {
        PrivacyBudget {
            epsilon: self.epsilon * eps_frac,
            delta: self.delta * delta_frac,
            beta: self.beta * beta_frac,
        }
    }
}

/// One logged mechanism invocation.
#[derive(Debug, Clone, Serialize)]
pub struct BudgetEntry {
    pub scope: String,
    pub mechanism: String,
    pub epsilon: f64,
    pub delta: f64,
    /// Entries sharing a group id act on disjoint data slices; the group
    /// contributes its per-entry maximum, not its sum.
    pub group: Option<u64>,
}

/// Instrumentation log of every primitive mechanism invocation. This is
/// observability only — privacy comes from the parameter arithmetic — and
/// nothing reads it back into control flow.
#[derive(Debug, Clone, Default, Serialize)]
pub struct BudgetLedger {
    pub entries: Vec<BudgetEntry>,
    #[serde(skip)]
    scope_stack: Vec<String>,
    #[serde(skip)]
    group_stack: Vec<u64>,
    #[serde(skip)]
    next_group: u64,
}

impl BudgetLedger {
    pub fn push_scope(&mut self, name: &str) {
        self.scope_stack.push(name.to_string());
    }

    pub fn pop_scope(&mut self) {
        self.scope_stack.pop();
    }

    /// Open a parallel-composition group: entries charged inside act on
    /// disjoint data slices.
    pub fn begin_parallel(&mut self) {
        self.group_stack.push(self.next_group);
        self.next_group += 1;
    }

    pub fn end_parallel(&mut self) {
        self.group_stack.pop();
    }

    pub fn charge(&mut self, mechanism: &str, epsilon: f64, delta: f64) {
        self.entries.push(BudgetEntry {
            scope: self.scope_stack.join("/"),
            mechanism: mechanism.to_string(),
            epsilon,
            delta,
            group: self.group_stack.last().copied(),
        });
    }

    /// Total (ε, δ) consumed: sequential entries add up; each parallel
    /// group contributes its per-entry maximum.
    pub fn consumed(&self) -> (f64, f64) {
        let mut eps = 0.0;
        let mut delta = 0.0;
        let mut groups: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
        for e in &self.entries {
            match e.group {
                None => {
                    eps += e.epsilon;
                    delta += e.delta;
                }
                Some(g) => {
                    let slot = groups.entry(g).or_insert((0.0, 0.0));
                    slot.0 = slot.0.max(e.epsilon);
                    slot.1 = slot.1.max(e.delta);
                }
            }
        }
        for (ge, gd) in groups.values() {
            eps += ge;
            delta += gd;
        }
        (eps, delta)
    }
}

// ---------------------------------------------------------------------------
// Noise primitives
// ---------------------------------------------------------------------------

/// Discrete Laplace draw: integer with pmf proportional to e^{−|k|/λ}.
/// Sampled exactly as the difference of two geometric draws.
pub fn dlap_sample(lambda: f64, rng: &mut ChaCha20Rng) -> Result<i64> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(contract(format!("noise scale must be positive, got {lambda}")));
    }
    let ln_q = -1.0 / lambda; // ln of the geometric ratio, in (−∞, 0)
    let geometric = |rng: &mut ChaCha20Rng| -> i64 {
        let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
        (u.ln() / ln_q).floor() as i64
    };
    let g1 = geometric(rng);
    let g2 = geometric(rng);
    Ok(g1 - g2)
}

/// Exact discrete Laplace pmf value at k.
pub fn dlap_pmf(lambda: f64, k: i64) -> f64 {
    let q = (-1.0 / lambda).exp();
    (1.0 - q) / (1.0 + q) * q.powi(k.unsigned_abs().min(i32::MAX as u64) as i32)
}

/// Continuous Laplace draw with the given scale.
pub fn lap_sample(scale: f64, rng: &mut ChaCha20Rng) -> Result<f64> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(contract(format!("noise scale must be positive, got {scale}")));
    }
    let u: f64 = rng.random::<f64>() - 0.5; // [−0.5, 0.5)
    let a = 1.0 - 2.0 * u.abs(); // (0, 1]
    Ok(-scale * u.signum() * a.ln())
}

/// Gaussian draw with the given standard deviation.
pub fn gauss_sample(sigma: f64, rng: &mut ChaCha20Rng) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(contract(format!("noise scale must be positive, got {sigma}")));
    }
    Ok(sigma * geom::std_normal(rng))
}

// ---------------------------------------------------------------------------
// Sparse selection
// ---------------------------------------------------------------------------

/// Selection input: a list of small subsets of an abstract keyed universe.
#[derive(Debug, Clone)]
pub struct SelectionInput {
    pub sets: Vec<Vec<Vec<u8>>>,
    pub ell: usize,
}

impl SelectionInput {
    pub fn new(sets: Vec<Vec<Vec<u8>>>, ell: usize) -> Result<Self> {
        for (i, s) in sets.iter().enumerate() {
            if s.len() > ell {
                return Err(contract(format!(
                    "set {i} has {} elements, above the bound {ell}",
                    s.len()
                )));
            }
            let mut sorted = s.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != s.len() {
                return Err(contract(format!("set {i} contains duplicate keys")));
            }
        }
        Ok(SelectionInput { sets, ell })
    }

    /// Accumulate per-key occurrence scores.
    pub fn to_scored(&self) -> ScoredUniverse<Vec<u8>> {
        let mut scores: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
        for s in &self.sets {
            for k in s {
                *scores.entry(k.clone()).or_insert(0) += 1;
            }
        }
        ScoredUniverse {
            scores,
            n: self.sets.len(),
            ln_ell: (self.ell.max(1) as f64).ln(),
        }
    }
}

/// Pre-accumulated selection scores. `scores` holds only keys appearing in
/// at least one set; `n` is the number of sets and `ln_ell` the log of the
/// per-set size bound (which may be a structural bound rather than the
/// observed maximum).
#[derive(Debug, Clone)]
pub struct ScoredUniverse<K: Ord + Clone> {
    pub scores: BTreeMap<K, u64>,
    pub n: usize,
    pub ln_ell: f64,
}

/// Null-score of the approximate mechanism:
/// (2/ε)(1 + ln(ℓ/(δ(1 − e^{−ε/2})))).
pub fn score_bot_apx(eps: f64, delta: f64, ln_ell: f64) -> f64 {
    (2.0 / eps) * (1.0 + ln_ell - (delta * (1.0 - (-eps / 2.0).exp())).ln())
}

/// Null-score of the pure mechanism: (2/ε)·ln(1/p).
pub fn score_bot_pure(eps: f64, p_min: f64) -> f64 {
    (2.0 / eps) * (1.0 / p_min).ln()
}

/// Additive error bound of the approximate mechanism at failure
/// probability β: score⊥ + (2/ε)·ln(2nℓ/β).
pub fn apx_error_bound(eps: f64, delta: f64, ln_ell: f64, n: usize, beta: f64) -> f64 {
    score_bot_apx(eps, delta, ln_ell)
        + (2.0 / eps) * (2.0f64.ln() + (n.max(1) as f64).ln() + ln_ell - beta.ln())
}

/// Additive error bound of the pure mechanism at failure probability β:
/// score⊥ + (2/ε)·ln(2|U|/β), with ln|U| honestly replaceable by
/// min(ln|U|, ln(nℓ)) since zero-score elements carry no selection mass.
pub fn pure_error_bound(eps: f64, p_min: f64, ln_universe: f64, beta: f64) -> f64 {
    score_bot_pure(eps, p_min) + (2.0 / eps) * (2.0f64.ln() + ln_universe - beta.ln())
}

/// Inverse-CDF draw over nonnegative weights; returns the chosen index.
pub(crate) fn weighted_index(weights: &[f64], rng: &mut ChaCha20Rng) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0);
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Approximate-mode selection over accumulated scores. Returns `None` for
/// the null outcome. Charges (ε, δ) to the ledger.
pub fn apx_select_scored<K: Ord + Clone>(
    scored: &ScoredUniverse<K>,
    eps: f64,
    delta: f64,
    rng: &mut ChaCha20Rng,
    ledger: &mut BudgetLedger,
) -> Result<Option<K>> {
    if !(eps > 0.0) {
        return Err(contract("selection needs a positive epsilon"));
    }
    if !(delta > 0.0) {
        return Err(contract(
            "approximate selection needs delta > 0; use the pure variant for delta = 0",
        ));
    }
    ledger.charge("apx-selection", eps, delta);
    let s_bot = score_bot_apx(eps, delta, scored.ln_ell);
    // Keys in ascending order, null first; weights e^{(ε/2)·score},
    // max-subtracted.
    let mut log_w = vec![(eps / 2.0) * s_bot];
    let keys: Vec<&K> = scored.scores.keys().collect();
    for k in &keys {
        log_w.push((eps / 2.0) * scored.scores[*k] as f64);
    }
    let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_w.iter().map(|a| (a - m).exp()).collect();
    let idx = weighted_index(&weights, rng);
    Ok(if idx == 0 { None } else { Some(keys[idx - 1].clone()) })
}

/// Pure-mode selection over accumulated scores. The null outcome falls back
/// to a draw from `oracle`, a near-uniform universe sampler guaranteeing
/// probability at least `p_min` per element. Charges ε to the ledger.
pub fn pure_select_scored<K: Ord + Clone>(
    scored: &ScoredUniverse<K>,
    eps: f64,
    p_min: f64,
    oracle: &mut dyn FnMut(&mut ChaCha20Rng) -> K,
    rng: &mut ChaCha20Rng,
    ledger: &mut BudgetLedger,
) -> Result<K> {
    if !(eps > 0.0) {
        return Err(contract("selection needs a positive epsilon"));
    }
    if !(p_min > 0.0 && p_min <= 1.0) {
        return Err(contract(format!(
            "oracle minimum probability must lie in (0, 1], got {p_min}"
        )));
    }
    ledger.charge("pure-selection", eps, 0.0);
    // Null weight is exactly 1/p (no −1 correction); scored keys weigh
    // e^{(ε/2)·score} − 1, all evaluated after max-subtraction.
    let ln_null = (1.0 / p_min).ln();
    let keys: Vec<&K> = scored.scores.keys().collect();
    let mut m = ln_null;
    for k in &keys {
        m = m.max((eps / 2.0) * scored.scores[*k] as f64);
    }
    let mut weights = vec![(ln_null - m).exp()];
    for k in &keys {
        let a = (eps / 2.0) * scored.scores[*k] as f64;
        weights.push((a - m).exp() - (-m).exp());
    }
    let idx = weighted_index(&weights, rng);
    Ok(if idx == 0 {
        oracle(rng)
    } else {
        keys[idx - 1].clone()
    })
}

/// Approximate-mode selection on an explicit set list.
pub fn apx_sparse_selection(
    input: &SelectionInput,
    eps: f64,
    delta: f64,
    rng: &mut ChaCha20Rng,
    ledger: &mut BudgetLedger,
) -> Result<Option<Vec<u8>>> {
    apx_select_scored(&input.to_scored(), eps, delta, rng, ledger)
}

/// Pure-mode selection on an explicit set list.
pub fn pure_sparse_selection(
    input: &SelectionInput,
    eps: f64,
    p_min: f64,
    oracle: &mut dyn FnMut(&mut ChaCha20Rng) -> Vec<u8>,
    rng: &mut ChaCha20Rng,
    ledger: &mut BudgetLedger,
) -> Result<Vec<u8>> {
    pure_select_scored(&input.to_scored(), eps, p_min, oracle, rng, ledger)
}

// ---------------------------------------------------------------------------
// Exact distribution oracle
// ---------------------------------------------------------------------------

/// Which mechanism the distribution oracle should evaluate.
#[derive(Debug, Clone)]
pub enum SelectionMode {
    Apx { delta: f64 },
    /// Pure mode folds the oracle channel into element probabilities, so the
    /// oracle's own distribution must be supplied.
    Pure { p_min: f64, oracle_dist: BTreeMap<Vec<u8>, f64> },
}

/// Exact output distribution of a selection mechanism on a small instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionDist {
    pub probs: BTreeMap<Vec<u8>, f64>,
    /// Probability of the null outcome (always 0 in pure mode, where null
    /// re-samples from the oracle).
    pub bot: f64,
}

/// Direct evaluation of the selection weights; test oracle for both
/// mechanisms. Universe capped at 10³ keys.
pub fn selection_distribution(
    input: &SelectionInput,
    eps: f64,
    mode: &SelectionMode,
) -> Result<SelectionDist> {
    let scored = input.to_scored();
    let universe: Vec<Vec<u8>> = match mode {
        SelectionMode::Apx { .. } => scored.scores.keys().cloned().collect(),
        SelectionMode::Pure { oracle_dist, .. } => {
            let mut u: Vec<Vec<u8>> = oracle_dist.keys().cloned().collect();
            for k in scored.scores.keys() {
                if !oracle_dist.contains_key(k) {
                    u.push(k.clone());
                }
            }
            u.sort();
            u
        }
    };
    if universe.len() > 1000 {
        return Err(capacity(format!(
            "distribution oracle limited to 1000 universe keys, got {}",
            universe.len()
        )));
    }
    let mut probs: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
    let mut bot = 0.0;
    match mode {
        SelectionMode::Apx { delta } => {
            if !(*delta > 0.0) {
                return Err(contract("approximate mode needs delta > 0"));
            }
            let s_bot = score_bot_apx(eps, *delta, scored.ln_ell);
            let w_bot = ((eps / 2.0) * s_bot).exp();
            let mut z = w_bot;
            let mut w = BTreeMap::new();
            for k in &universe {
                let wk = ((eps / 2.0) * scored.scores.get(k).copied().unwrap_or(0) as f64).exp();
                z += wk;
                w.insert(k.clone(), wk);
            }
            for (k, wk) in w {
                probs.insert(k, wk / z);
            }
            bot = w_bot / z;
        }
        SelectionMode::Pure { p_min, oracle_dist } => {
            if !(*p_min > 0.0 && *p_min <= 1.0) {
                return Err(contract("oracle minimum probability must lie in (0, 1]"));
            }
            let w_bot = 1.0 / p_min;
            let mut z = w_bot;
            let mut w = BTreeMap::new();
            for k in &universe {
                let sc = scored.scores.get(k).copied().unwrap_or(0) as f64;
                let wk = ((eps / 2.0) * sc).exp() - 1.0;
                z += wk;
                w.insert(k.clone(), wk);
            }
            let p_bot = w_bot / z;
            for k in &universe {
                let direct = w[k] / z;
                let via_oracle = p_bot * oracle_dist.get(k).copied().unwrap_or(0.0);
                probs.insert(k.clone(), direct + via_oracle);
            }
        }
    }
    Ok(SelectionDist { probs, bot })
}

/// Hockey-stick divergence Σ max(0, P[o] − e^ε·Q[o]) over the union of
/// outcomes (null included); the approximate-DP test statistic.
pub fn hockey_stick_divergence(p: &SelectionDist, q: &SelectionDist, eps: f64) -> f64 {
    let mut total = (p.bot - eps.exp() * q.bot).max(0.0);
    let mut keys: Vec<&Vec<u8>> = p.probs.keys().collect();
    for k in q.probs.keys() {
        if !p.probs.contains_key(k) {
            keys.push(k);
        }
    }
    for k in keys {
        let pp = p.probs.get(k).copied().unwrap_or(0.0);
        let qq = q.probs.get(k).copied().unwrap_or(0.0);
        total += (pp - eps.exp() * qq).max(0.0);
    }
    total
}

/// Worst outcome-probability ratio max P[o]/Q[o] (infinite if some outcome
/// has P > 0, Q = 0); the pure-DP test statistic.
pub fn max_probability_ratio(p: &SelectionDist, q: &SelectionDist) -> f64 {
    let mut worst: f64 = 1.0;
    let mut consider = |pp: f64, qq: f64| {
        if pp <= 1e-15 {
            return;
        }
        if qq <= 0.0 {
            worst = f64::INFINITY;
        } else {
            worst = worst.max(pp / qq);
        }
    };
    consider(p.bot, q.bot);
    let mut keys: Vec<&Vec<u8>> = p.probs.keys().collect();
    for k in q.probs.keys() {
        if !p.probs.contains_key(k) {
            keys.push(k);
        }
    }
    for k in keys {
        consider(
            p.probs.get(k).copied().unwrap_or(0.0),
            q.probs.get(k).copied().unwrap_or(0.0),
        );
    }
    worst
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub enum ComposeMode {
    Basic,
    Advanced { delta_prime: f64 },
}

/// Total budget of running the given mechanisms in sequence.
///
/// Basic mode sums. Advanced mode requires k identical parts (ε, δ) and a
/// slack δ' > 0, and returns
/// (2kε(e^ε − 1) + ε·sqrt(2k·ln(1/δ')), kδ + δ').
pub fn compose(parts: &[(f64, f64)], mode: ComposeMode) -> Result<(f64, f64)> {
    match mode {
        ComposeMode::Basic => Ok(parts
            .iter()
            .fold((0.0, 0.0), |(e, d), (pe, pd)| (e + pe, d + pd))),
        ComposeMode::Advanced { delta_prime } => {
            if !(delta_prime > 0.0) {
                return Err(contract("advanced composition needs delta' > 0"));
            }
            if parts.is_empty() {
                return Ok((0.0, delta_prime));
            }
            let (e0, d0) = parts[0];
            if parts.iter().any(|&(e, d)| e != e0 || d != d0) {
                return Err(contract("advanced composition needs identical parts"));
            }
            let k = parts.len() as f64;
            let eps_total =
                2.0 * k * e0 * (e0.exp() - 1.0) + e0 * (2.0 * k * (1.0 / delta_prime).ln()).sqrt();
            Ok((eps_total, k * d0 + delta_prime))
        }
    }
}

/// Largest per-step ε whose k-fold advanced composition stays within
/// `eps_total` (with per-step δ and slack δ'), found by bisection.
pub fn advanced_step_epsilon(
    eps_total: f64,
    k: usize,
    delta_step: f64,
    delta_prime: f64,
) -> Result<f64> {
    if !(eps_total > 0.0) || k == 0 {
        return Err(contract("per-step search needs a positive total and k >= 1"));
    }
    let total = |e: f64| -> f64 {
        compose(&vec![(e, delta_step); k], ComposeMode::Advanced { delta_prime })
            .map(|(et, _)| et)
            .unwrap_or(f64::INFINITY)
    };
    let mut lo = 0.0;
    let mut hi = eps_total;
    while total(hi) < eps_total {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) <= eps_total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
