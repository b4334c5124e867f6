//! Private densest-ball search: given points in the unit ball and a target
//! radius r, find a center whose slightly enlarged ball holds almost as
//! many points as the best radius-r ball.
//!
//! Low dimension: build a lattice cover at radius αr, list-decode each
//! point at radius (1+α)r, and run sparse selection on the accumulated
//! per-cover-point counts. High dimension: project to a random low-dim
//! subspace, locate the cluster there, pull back the matching points, and
//! refine coordinates blockwise with a fresh rotation.

use std::collections::BTreeMap;

use crate::config::Ctx;
use crate::cover::{self, build_cover, sampler_min_probability, Decoder};
use crate::dpcore::{
    self, apx_select_scored, pure_select_scored, Mode, PrivacyBudget, ScoredUniverse,
};
use crate::error::{capacity, contract, Result};
use crate::exec;
use crate::geom::{self, SLACK};
use crate::lattice::{lattice_params, Family};
use crate::Tunables;

/// A densest-ball problem: points in the closed unit ball, target radius,
/// accuracy parameter, and privacy budget.
#[derive(Debug, Clone)]
pub struct BallInstance {
    pub points: Vec<Vec<f64>>,
    pub r: f64,
    pub alpha: f64,
    pub budget: PrivacyBudget,
    dimension: usize,
}

impl BallInstance {
    pub fn new(points: Vec<Vec<f64>>, r: f64, alpha: f64, budget: PrivacyBudget) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(contract(
                "empty instance needs an explicit dimension; use with_dimension",
            ));
        };
        let d = first.len();
        BallInstance::with_dimension(d, points, r, alpha, budget)
    }

    pub fn with_dimension(
        dimension: usize,
        points: Vec<Vec<f64>>,
        r: f64,
        alpha: f64,
        budget: PrivacyBudget,
    ) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(contract(format!("radius must lie in (0, 1], got {r}")));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(contract(format!(
                "accuracy parameter must lie in (0, 1], got {alpha}"
            )));
        }
        for (i, x) in points.iter().enumerate() {
            if x.len() != dimension {
                return Err(contract(format!(
                    "point {i} has dimension {}, expected {dimension}",
                    x.len()
                )));
            }
            if geom::norm(x) > 1.0 + SLACK {
                return Err(contract(format!(
                    "point {i} lies outside the closed unit ball (norm {})",
                    geom::norm(x)
                )));
            }
        }
        Ok(BallInstance { points, r, alpha, budget, dimension })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
}

/// A located ball: center, the enlarged radius the contract speaks about,
/// and a non-private inside count for testing.
#[derive(Debug, Clone, PartialEq)]
pub struct BallResult {
    pub center: Vec<f64>,
    pub effective_radius: f64,
    pub count_inside: usize,
}

fn count_within(points: &[Vec<f64>], center: &[f64], radius: f64) -> usize {
    points
        .iter()
        .filter(|x| geom::dist(x, center) <= radius + SLACK)
        .count()
}

/// Core low-dimensional routine. Relaxes the public r ≤ 1 bound (blockwise
/// callers pass radii slightly above 1); still needs αr < 1 so the cover
/// exists. Consumes budget (ε, δ) in one selection call.
pub(crate) fn densest_ball_low_dim_raw(
    points: &[Vec<f64>],
    d: usize,
    r: f64,
    alpha: f64,
    budget: &PrivacyBudget,
    mode: Mode,
    ctx: &mut Ctx,
) -> Result<BallResult> {
    if d > ctx.cfg.low_dim_limit {
        return Err(capacity(format!(
            "dimension {d} exceeds the low-dimension limit {}",
            ctx.cfg.low_dim_limit
        )));
    }
    if mode == Mode::Approx && budget.delta == 0.0 {
        return Err(contract("approximate mode needs delta > 0"));
    }
    let delta_cover = alpha * r;
    let delta_prime = (1.0 + alpha) * r;
    let cover = build_cover(d, delta_cover, Family::ScaledInteger)?;
    let decoder = Decoder::with_cap(&cover, delta_prime, ctx.cfg.decode_set_cap)?;
    // Chunked accumulation: each chunk fills a local map in parallel, then
    // the maps merge in chunk order so results never depend on scheduling.
    let chunks: Vec<&[Vec<f64>]> = points.chunks(256).collect();
    let partials = exec::par_map(&chunks, |chunk| {
        let mut local: BTreeMap<Vec<i64>, u64> = BTreeMap::new();
        for x in *chunk {
            decoder.for_each_in_list(x, &mut |coeffs| {
                if let Some(c) = local.get_mut(coeffs) {
                    *c += 1;
                } else {
                    local.insert(coeffs.to_vec(), 1);
                }
            })?;
        }
        Ok(local)
    });
    let mut scores: BTreeMap<Vec<i64>, u64> = BTreeMap::new();
    for partial in partials {
        for (coeffs, c) in partial? {
            *scores.entry(coeffs).or_insert(0) += c;
        }
    }
    // Per-point list size is bounded structurally: lattice points within
    // Δ' of a query are ≥ λ apart, so ℓ ≤ (1 + τΔ'/Δ)^d.
    let (_, _, tau) = lattice_params(&cover.backend);
    let ln_ell = d as f64 * (1.0 + tau * delta_prime / delta_cover).ln();
    let scored = ScoredUniverse { scores, n: points.len(), ln_ell };
    let center_coeffs = match mode {
        Mode::Approx => {
            apx_select_scored(&scored, budget.epsilon, budget.delta, &mut ctx.rng, &mut ctx.ledger)?
                .unwrap_or_else(|| vec![0; d])
        }
        Mode::Pure => {
            let p_min = sampler_min_probability(&cover);
            let cov = &cover;
            let mut oracle = |rng: &mut rand_chacha::ChaCha20Rng| {
                cover::sample_near_uniform(cov, rng)
                    .expect("cover sampling cannot fail")
                    .coefficients
            };
            pure_select_scored(
                &scored,
                budget.epsilon,
                p_min,
                &mut oracle,
                &mut ctx.rng,
                &mut ctx.ledger,
            )?
        }
    };
    let center = cover.backend.embed(&center_coeffs)?.embedding;
    let effective_radius = (1.0 + alpha) * r;
    let count_inside = count_within(points, &center, effective_radius);
    Ok(BallResult { center, effective_radius, count_inside })
}

/// Densest ball in low dimension (d up to the configured limit, default
/// 24): cover at αr, decode at (1+α)r, sparse selection on the counts. The
/// null outcome of approximate selection maps to the lattice origin.
pub fn densest_ball_low_dim(inst: &BallInstance, mode: Mode, ctx: &mut Ctx) -> Result<BallResult> {
    ctx.ledger.push_scope("densest-ball-low");
    let out = densest_ball_low_dim_raw(
        &inst.points,
        inst.dimension,
        inst.r,
        inst.alpha,
        &inst.budget,
        mode,
        ctx,
    );
    ctx.ledger.pop_scope();
    out
}

/// Number of coordinate blocks the center-refinement step uses.
pub(crate) fn block_count(
    n: usize,
    d: usize,
    alpha: f64,
    beta: f64,
    mode: Mode,
    cfg: &Tunables,
) -> usize {
    if let Some(bd) = cfg.block_dim_override {
        return d.div_ceil(bd.max(1)).max(1);
    }
    let c = match mode {
        Mode::Pure => cfg.block_const_pure,
        Mode::Approx => cfg.block_const_apx,
    };
    let denom = c * ((n.max(2) * d) as f64 / beta).ln() / (alpha * alpha);
    ((d as f64 / denom).floor() as usize).max(1)
}

/// Dimensions of the b consecutive coordinate blocks: block j gets
/// ⌊jd/b⌋ − ⌊(j−1)d/b⌋ coordinates.
fn block_dims(d: usize, b: usize) -> Vec<usize> {
    (1..=b).map(|j| j * d / b - (j - 1) * d / b).collect()
}

/// Center refinement under the promise that all points fit in one radius-r
/// ball: rotate randomly, split coordinates into blocks, run a low-dim
/// densest-ball per block at the block's share of the budget, concatenate
/// the block centers, and rotate back. Pure mode splits ε evenly; approx
/// mode charges each block (ε', δ') sized for advanced composition.
pub fn one_center(
    points: &[Vec<f64>],
    r: f64,
    alpha: f64,
    budget: &PrivacyBudget,
    mode: Mode,
    ctx: &mut Ctx,
) -> Result<Vec<f64>> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(contract(format!("radius must be positive, got {r}")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(contract(format!(
            "accuracy parameter must lie in (0, 1], got {alpha}"
        )));
    }
    let Some(first) = points.first() else {
        return Err(contract("center refinement needs at least one point"));
    };
    let d = first.len();
    let n = points.len();
    ctx.ledger.push_scope("one-center");
    let result = (|| {
        let rotation = geom::random_rotation(d, &mut ctx.rng);
        let rotated: Vec<Vec<f64>> = exec::par_map(points, |x| geom::apply_rows(&rotation, x));
        let b = block_count(n, d, alpha, budget.beta, mode, &ctx.cfg);
        let dims = block_dims(d, b);
        let (block_budget, block_mode) = match mode {
            Mode::Pure => (
                PrivacyBudget {
                    epsilon: budget.epsilon / b as f64,
                    delta: 0.0,
                    beta: budget.beta / (2.0 * d as f64),
                },
                Mode::Pure,
            ),
            Mode::Approx => {
                let eps_blk = (budget.epsilon
                    / (100.0 * (b as f64 * (2.0 / budget.delta).ln()).sqrt()))
                .min(1.0);
                (
                    PrivacyBudget {
                        epsilon: eps_blk,
                        delta: 0.5 * budget.delta / b as f64,
                        beta: budget.beta / (2.0 * d as f64),
                    },
                    Mode::Approx,
                )
            }
        };
        let mut assembled = Vec::with_capacity(d);
        let mut offset = 0usize;
        for (j, &dj) in dims.iter().enumerate() {
            if dj == 0 {
                continue;
            }
            ctx.ledger.push_scope(&format!("block-{j}"));
            let slice: Vec<Vec<f64>> = rotated
                .iter()
                .map(|x| x[offset..offset + dj].to_vec())
                .collect();
            let rj = (1.0 + 0.1 * alpha) * (dj as f64 / d as f64).sqrt() * r;
            let blk = densest_ball_low_dim_raw(
                &slice,
                dj,
                rj,
                0.1 * alpha,
                &block_budget,
                block_mode,
                ctx,
            );
            ctx.ledger.pop_scope();
            assembled.extend(blk?.center);
            offset += dj;
        }
        Ok(geom::apply_rows_transpose(&rotation, &assembled))
    })();
    ctx.ledger.pop_scope();
    result
}

/// Projection dimension d' = min{d, ⌈C·ln(nd/β)/α²⌉}.
pub(crate) fn effective_dim(n: usize, d: usize, alpha: f64, beta: f64, cfg: &Tunables) -> usize {
    if let Some(dim) = cfg.ball_dim_override {
        return dim.min(d).max(1);
    }
    let c = cfg.effective_ball_dim_const();
    let formula = (c * ((n.max(2) * d) as f64 / beta).ln() / (alpha * alpha)).ceil() as usize;
    formula.min(d).max(1)
}

/// Densest ball in high dimension: random projection to d' coordinates,
/// low-dim search there at half the budget, pull back the points landing in
/// the located ball, and refine their center blockwise at the other half.
/// Budgets compose basically: ε/2 + ε/2 and δ/2 + δ/2; the failure
/// probability splits in thirds (projection, low-dim call, refinement).
pub fn densest_ball_high_dim(inst: &BallInstance, mode: Mode, ctx: &mut Ctx) -> Result<BallResult> {
    if mode == Mode::Approx && inst.budget.delta == 0.0 {
        return Err(contract("approximate mode needs delta > 0"));
    }
    let d = inst.dimension;
    let n = inst.points.len();
    let alpha = inst.alpha;
    let a0 = 0.1 * alpha;
    ctx.ledger.push_scope("densest-ball-high");
    let result = (|| {
        let dp = effective_dim(n, d, alpha, inst.budget.beta, &ctx.cfg);
        let rotation = geom::random_rotation(d, &mut ctx.rng);
        let proj = &rotation[..dp];
        let projected: Vec<Vec<f64>> = exec::par_map(&inst.points, |x| geom::apply_rows(proj, x));
        let r_proj = (1.0 + a0) * (dp as f64 / d as f64).sqrt() * inst.r;
        let half = PrivacyBudget {
            epsilon: inst.budget.epsilon / 2.0,
            delta: inst.budget.delta / 2.0,
            beta: inst.budget.beta / 3.0,
        };
        let low = densest_ball_low_dim_raw(&projected, dp, r_proj, a0, &half, mode, ctx)?;
        let capture_radius = (1.0 + a0) * r_proj;
        let cluster: Vec<Vec<f64>> = inst
            .points
            .iter()
            .zip(&projected)
            .filter(|(_, xp)| geom::dist(xp, &low.center) <= capture_radius + SLACK)
            .map(|(x, _)| x.clone())
            .collect();
        let center = if cluster.is_empty() {
            vec![0.0; d]
        } else {
            one_center(
                &cluster,
                (1.0 + a0).powi(3) * inst.r,
                a0,
                &half,
                mode,
                ctx,
            )?
        };
        let effective_radius = (1.0 + alpha) * inst.r;
        let count_inside = count_within(&inst.points, &center, effective_radius);
        Ok(BallResult { center, effective_radius, count_inside })
    })();
    ctx.ledger.pop_scope();
    result
}

// ---------------------------------------------------------------------------
// Error bounds
// ---------------------------------------------------------------------------

/// Additive error of the low-dimensional search at failure probability β:
/// the selection error bound with the cover's structural constants folded
/// in (δ = 0 means pure mode).
pub fn low_dim_error_bound(
    n: usize,
    d: usize,
    r: f64,
    alpha: f64,
    eps: f64,
    delta: f64,
    beta: f64,
) -> f64 {
    let dc = alpha * r;
    let lambda = 2.0 * dc / (d as f64).sqrt();
    let half = lambda / 2.0;
    let u = d as f64 * ((1.0 + dc + half) / half).ln();
    let ln_ell = d as f64 * (1.0 + (d as f64).sqrt() * (1.0 + alpha) / alpha).ln();
    let nf = n.max(1) as f64;
    if delta == 0.0 {
        let ln_universe = u.min(nf.ln() + ln_ell);
        dpcore::pure_error_bound(eps, 0.99 * (-u).exp(), ln_universe, beta)
    } else {
        dpcore::apx_error_bound(eps, delta, ln_ell, n, beta)
    }
}

/// Additive error of blockwise center refinement: 160/α times the worst
/// per-block low-dim error, mirroring the budget split [`one_center`]
/// makes.
pub fn one_center_error_bound(
    n: usize,
    d: usize,
    r: f64,
    alpha: f64,
    budget: &PrivacyBudget,
    mode: Mode,
    cfg: &Tunables,
) -> f64 {
    let b = block_count(n, d, alpha, budget.beta, mode, cfg);
    let (eps_blk, delta_blk) = match mode {
        Mode::Pure => (budget.epsilon / b as f64, 0.0),
        Mode::Approx => (
            (budget.epsilon / (100.0 * (b as f64 * (2.0 / budget.delta).ln()).sqrt())).min(1.0),
            0.5 * budget.delta / b as f64,
        ),
    };
    let beta_blk = budget.beta / (2.0 * d as f64);
    let mut worst: f64 = 0.0;
    for dj in block_dims(d, b) {
        if dj == 0 {
            continue;
        }
        let rj = (1.0 + 0.1 * alpha) * (dj as f64 / d as f64).sqrt() * r;
        worst = worst.max(low_dim_error_bound(n, dj, rj, 0.1 * alpha, eps_blk, delta_blk, beta_blk));
    }
    (160.0 / alpha) * worst
}

/// Additive error of the high-dimensional pipeline: the projected low-dim
/// error plus the refinement error, each at its stage's budget share —
/// the same composition the count guarantee follows.
pub fn high_dim_error_bound(
    n: usize,
    d: usize,
    r: f64,
    alpha: f64,
    budget: &PrivacyBudget,
    mode: Mode,
    cfg: &Tunables,
) -> f64 {
    let a0 = 0.1 * alpha;
    let dp = effective_dim(n, d, alpha, budget.beta, cfg);
    let r_proj = (1.0 + a0) * (dp as f64 / d as f64).sqrt() * r;
    let half = PrivacyBudget {
        epsilon: budget.epsilon / 2.0,
        delta: budget.delta / 2.0,
        beta: budget.beta / 3.0,
    };
    let delta_low = match mode {
        Mode::Pure => 0.0,
        Mode::Approx => half.delta,
    };
    let t1 = low_dim_error_bound(n, dp, r_proj, a0, half.epsilon, delta_low, half.beta);
    let t2 = one_center_error_bound(n, d, (1.0 + a0).powi(3) * r, a0, &half, mode, cfg);
    t1 + t2
}
