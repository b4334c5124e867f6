//! Private (k, p)-clustering built from candidate grids and noisy counts.
//!
//! The low-dimensional pipeline has four stages: a coarse centroid set
//! localizes the data (the origin plus 2k⌈log₂ n⌉ noisy densest-ball centers
//! found at doubling radii), a refined candidate set meshes balls around
//! every coarse candidate, a private coreset snaps each point to its nearest
//! candidate and releases discrete-Laplace counts, and a pluggable
//! non-private solver clusters the weighted coreset. The high-dimensional
//! entry point projects to O(p⁴·log(k/β)/α²) coordinates, clusters there at
//! a tenth of the target accuracy, and lifts every part back through a
//! private center finder. A discrete exponential mechanism over candidate
//! k-subsets provides the fixed-parameter variant.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand_chacha::ChaCha20Rng;

use crate::config::{Ctx, Tunables};
use crate::cover::{build_cover, Decoder};
use crate::densestball::{self, densest_ball_low_dim_raw};
use crate::dpcore::{
    self, dlap_sample, gauss_sample, lap_sample, Mode, PrivacyBudget,
};
use crate::error::{capacity, contract, Result};
use crate::exec;
use crate::geom::{self, SLACK};
use crate::lattice::Family;

/// Largest radius the coarse stage passes to the densest-ball search: the
/// cover construction needs αr < 1 and the coarse stage runs at α = 1, so
/// radii from the doubling schedule are clamped here. Removal and mesh radii
/// keep using the unclamped schedule value.
const COARSE_RADIUS_CAP: f64 = 0.995;

/// A refinement mesh spans this many coarse radii around each candidate, so
/// its cover parameter is ζ divided by this factor.
const MESH_SPAN: f64 = 40.0;

/// Multiple of the stage radius removed around each coarse candidate before
/// the next densest-ball round.
const COARSE_REMOVAL_FACTOR: f64 = 8.0;

/// Relative cost improvement below which the solver's refinement loop stops.
const REFINE_TOL: f64 = 1e-7;

/// Hard iteration cap on the solver's refinement loop.
const REFINE_MAX_ITERS: usize = 200;

/// Fixed-point iterations of the reweighted center update (p ≠ 2).
const IRLS_ITERS: usize = 64;

/// Distance clamp keeping the reweighted center update defined at data
/// points, where the p < 2 weight 1/dist^{2−p} blows up.
const IRLS_EPS: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Instance and result types
// ---------------------------------------------------------------------------

/// A (k, p)-clustering task on points of the unit ball.
#[derive(Debug, Clone)]
pub struct ClusteringInstance {
    pub points: Vec<Vec<f64>>,
    pub k: usize,
    /// Cost exponent; distances enter the objective as dist^p.
    pub p: f64,
    /// Target multiplicative accuracy in (0, 1].
    pub alpha: f64,
    pub budget: PrivacyBudget,
    dimension: usize,
}

impl ClusteringInstance {
    pub fn new(
        points: Vec<Vec<f64>>,
        k: usize,
        p: f64,
        alpha: f64,
        budget: PrivacyBudget,
    ) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(contract(
                "empty instance needs an explicit dimension; use with_dimension",
            ));
        };
        let d = first.len();
        Self::with_dimension(d, points, k, p, alpha, budget)
    }

    pub fn with_dimension(
        dimension: usize,
        points: Vec<Vec<f64>>,
        k: usize,
        p: f64,
        alpha: f64,
        budget: PrivacyBudget,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(contract("dimension must be positive"));
        }
        if k == 0 {
            return Err(contract("need at least one center"));
        }
        if !(p >= 1.0 && p.is_finite()) {
            return Err(contract(format!("cost exponent must satisfy p ≥ 1, got {p}")));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(contract(format!(
                "accuracy parameter must lie in (0, 1], got {alpha}"
            )));
        }
        for x in &points {
            if x.len() != dimension {
                return Err(contract(format!(
                    "point dimension {} does not match instance dimension {dimension}",
                    x.len()
                )));
            }
            if geom::norm(x) > 1.0 + SLACK {
                return Err(contract("points must lie in the unit ball"));
            }
        }
        Ok(ClusteringInstance { points, k, p, alpha, budget, dimension })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
}

/// Which pipeline stage produced a candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Coarse,
    Refined,
}

/// Candidate centers produced by the localization stages. A coarse set has
/// exactly 2k⌈log₂ n⌉ + 1 entries (duplicates kept), the origin first.
#[derive(Debug, Clone)]
pub struct CentroidSet {
    pub candidates: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

/// Weighted point set standing in for the data: candidate centers paired
/// with noisy counts. Zero-weight candidates are dropped.
#[derive(Debug, Clone)]
pub struct Coreset {
    pub points: Vec<(Vec<f64>, u64)>,
}

impl Coreset {
    pub fn total_weight(&self) -> u64 {
        self.points.iter().map(|(_, w)| *w).sum()
    }
}

/// Final centers plus the cost of those centers on the points the producing
/// call received. For the private pipelines the cost is recomputed on the
/// raw instance as a diagnostic: treat it as internal telemetry, not as a
/// differentially private release.
#[derive(Debug, Clone)]
pub struct ClusterSolution {
    pub centers: Vec<Vec<f64>>,
    pub cost: f64,
}

/// Pluggable non-private solver: (weighted points, dimension, k, p, rng) →
/// solution on the weighted input. Must be deterministic given the stream.
pub type Solver =
    fn(&[(Vec<f64>, u64)], usize, usize, f64, &mut ChaCha20Rng) -> Result<ClusterSolution>;

// ---------------------------------------------------------------------------
// Cost and structural constants
// ---------------------------------------------------------------------------

fn dist_pow(x: &[f64], c: &[f64], p: f64) -> f64 {
    let d2 = geom::dist2(x, c);
    if p == 2.0 {
        d2
    } else if p == 1.0 {
        d2.sqrt()
    } else {
        d2.sqrt().powf(p)
    }
}

fn min_dist_pow(x: &[f64], centers: &[Vec<f64>], p: f64) -> f64 {
    centers
        .iter()
        .map(|c| dist_pow(x, c, p))
        .fold(f64::INFINITY, f64::min)
}

/// Σ_x min_c dist(x, c)^p.
pub fn cost(points: &[Vec<f64>], centers: &[Vec<f64>], p: f64) -> Result<f64> {
    if centers.is_empty() {
        return Err(contract("cost needs at least one center"));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(contract(format!("cost exponent must satisfy p ≥ 1, got {p}")));
    }
    let per: Vec<f64> = exec::par_map(points, |x| min_dist_pow(x, centers, p));
    Ok(per.iter().sum())
}

/// Σ_x w(x) · min_c dist(x, c)^p over a weighted point set.
pub fn weighted_cost(
    weighted: &[(Vec<f64>, u64)],
    centers: &[Vec<f64>],
    p: f64,
) -> Result<f64> {
    if centers.is_empty() {
        return Err(contract("cost needs at least one center"));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(contract(format!("cost exponent must satisfy p ≥ 1, got {p}")));
    }
    let per: Vec<f64> =
        exec::par_map(weighted, |(x, w)| *w as f64 * min_dist_pow(x, centers, p));
    Ok(per.iter().sum())
}

/// λ(p, γ) = (1 + γ) / ((1 + γ)^{1/p} − 1)^p, a constant satisfying
/// (a + b)^p ≤ (1 + γ)·a^p + λ·b^p for all a, b ≥ 0. It is a valid envelope,
/// not the minimal one; the analysis constants downstream are calibrated to
/// this exact form.
pub fn power_sum_constant(p: f64, gamma: f64) -> f64 {
    let g = (1.0 + gamma).powf(1.0 / p) - 1.0;
    (1.0 + gamma) / g.powf(p)
}

/// Mesh accuracy parameter of the refinement stage:
/// ζ = 0.01·(α / (10·λ(p, α/2)))^{1/p}. The formula value is tiny — a mesh
/// at ζ/40 has far more points than any direct enumeration can hold — so
/// [`Tunables::zeta_override`] exists for runnable configurations.
pub fn zeta_parameter(p: f64, alpha: f64) -> f64 {
    0.01 * (alpha / (10.0 * power_sum_constant(p, alpha / 2.0))).powf(1.0 / p)
}

/// Scaling applied after the clustering projection:
/// Λ = √(0.01/ln(n/β) · d'/d).
pub fn lambda_scale(n: usize, beta: f64, d_low: usize, d: usize) -> f64 {
    let denom = ((n.max(2) as f64) / beta).ln();
    (0.01 / denom * d_low as f64 / d as f64).sqrt()
}

/// ⌈log₂ n⌉ as an exact integer computation (0 for n ≤ 1).
fn ceil_log2(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

/// ln Γ(t/2) for integer t ≥ 1, via the factorial and half-integer
/// recurrences (Γ(1/2) = √π).
fn ln_gamma_half_int(t: usize) -> f64 {
    if t % 2 == 0 {
        (1..t / 2).map(|i| (i as f64).ln()).sum()
    } else {
        let mut acc = 0.5 * PI.ln();
        let mut x = 0.5;
        while x + 1.0 <= t as f64 / 2.0 + 1e-9 {
            acc += x.ln();
            x += 1.0;
        }
        acc
    }
}

/// ln of the d-dimensional Euclidean ball volume at radius r.
fn ln_ball_volume(d: usize, r: f64) -> f64 {
    d as f64 * r.ln() + d as f64 / 2.0 * PI.ln() - ln_gamma_half_int(d + 2)
}

// ---------------------------------------------------------------------------
// Coarse and refined candidate sets
// ---------------------------------------------------------------------------

/// Doubling radius of stage i on n points, before the cover-validity clamp.
fn stage_radius(i: usize, n: usize) -> f64 {
    (i as f64).exp2() / n as f64
}

/// Localize the data: the origin plus 2k noisy densest-ball centers at each
/// of the ⌈log₂ n⌉ doubling radii 2^i/n, searched at α = 1 with an even
/// ε/(2k⌈log₂ n⌉) split (pure selection; δ stays unspent). After each hit,
/// points within 8 stage radii of the center leave the working set; the
/// output keeps every center, duplicates included, so its size is exactly
/// 2k⌈log₂ n⌉ + 1.
pub fn coarse_centroid_set(inst: &ClusteringInstance, ctx: &mut Ctx) -> Result<CentroidSet> {
    let n = inst.points.len();
    let d = inst.dimension;
    let levels = ceil_log2(n);
    let rounds = 2 * inst.k * levels;
    ctx.ledger.push_scope("coarse-centroids");
    let out = (|| {
        let mut candidates = vec![vec![0.0; d]];
        if rounds > 0 {
            let unit_budget = PrivacyBudget {
                epsilon: inst.budget.epsilon / rounds as f64,
                delta: 0.0,
                beta: inst.budget.beta / rounds as f64,
            };
            let mut uncovered = inst.points.clone();
            for i in 1..=levels {
                let r = stage_radius(i, n).min(COARSE_RADIUS_CAP);
                for _ in 0..2 * inst.k {
                    let found = densest_ball_low_dim_raw(
                        &uncovered,
                        d,
                        r,
                        1.0,
                        &unit_budget,
                        Mode::Pure,
                        ctx,
                    )?;
                    let cut = COARSE_REMOVAL_FACTOR * r + SLACK;
                    uncovered.retain(|x| geom::dist(x, &found.center) > cut);
                    candidates.push(found.center);
                }
            }
        }
        Ok(CentroidSet { candidates, provenance: Provenance::Coarse })
    })();
    ctx.ledger.pop_scope();
    out
}

/// Effective mesh parameter: the override if set, else the formula value.
fn mesh_zeta(p: f64, alpha: f64, cfg: &Tunables) -> Result<f64> {
    let zeta = match cfg.zeta_override {
        Some(z) => z,
        None => zeta_parameter(p, alpha),
    };
    if !(zeta.is_finite() && zeta > 0.0) {
        return Err(contract(format!("mesh parameter must be positive, got {zeta}")));
    }
    Ok(zeta)
}

/// Refine the coarse set: the origin plus, for every coarse candidate c and
/// stage radius r = 2^i/n, a (ζr)-mesh of the ball of radius 40r around c,
/// radially projected into the unit ball and deduplicated in insertion
/// order. The mesh reuses one unit-ball cover at parameter ζ/40, shifted and
/// scaled per (candidate, radius) pair — projection onto a convex set is
/// 1-Lipschitz, so the covering property survives. The coarse stage inside
/// spends the full declared budget; the mesh itself is data-independent.
pub fn refined_centroid_set(inst: &ClusteringInstance, ctx: &mut Ctx) -> Result<CentroidSet> {
    let coarse = coarse_centroid_set(inst, ctx)?;
    let n = inst.points.len();
    let d = inst.dimension;
    let levels = ceil_log2(n);
    let zeta = mesh_zeta(inst.p, inst.alpha, &ctx.cfg)?;
    let mesh_delta = zeta / MESH_SPAN;
    if !(mesh_delta < 1.0) {
        return Err(contract(format!(
            "mesh parameter {zeta} leaves no valid cover spacing"
        )));
    }
    let cap = ctx.cfg.decode_set_cap;
    // Cheap lower bound on the mesh size before materializing anything: the
    // cells of the scaled integer lattice have diameter 2·(ζ/40), so the
    // unit ball holds at least vol(B(1 − 2ζ/40))/cellvol lattice points.
    let cell_side = 2.0 * mesh_delta / (d as f64).sqrt();
    let inner = 1.0 - 2.0 * mesh_delta;
    if inner > 0.0 {
        let ln_lower = ln_ball_volume(d, inner) - d as f64 * cell_side.ln();
        if ln_lower > (cap as f64).ln() {
            return Err(capacity(format!(
                "unit mesh at spacing {cell_side:.3e} holds at least e^{ln_lower:.1} \
                 points, over the candidate cap {cap}"
            )));
        }
    }
    let cover = build_cover(d, mesh_delta, Family::ScaledInteger)?;
    let decoder = Decoder::with_cap(&cover, 1.0 + mesh_delta, cap)?;
    let base = decoder.decode(&vec![0.0; d])?;
    let mesh: Vec<Vec<f64>> = base.points.into_iter().map(|p| p.embedding).collect();

    let origin = vec![0.0; d];
    let mut seen: BTreeSet<Vec<u64>> = BTreeSet::new();
    seen.insert(geom::bit_key(&origin));
    let mut candidates = vec![origin];
    for c in &coarse.candidates {
        for i in 1..=levels {
            let span = MESH_SPAN * stage_radius(i, n);
            for v in &mesh {
                let shifted: Vec<f64> =
                    c.iter().zip(v).map(|(a, b)| a + span * b).collect();
                let z = geom::project_to_unit_ball(&shifted);
                if seen.insert(geom::bit_key(&z)) {
                    candidates.push(z);
                    if candidates.len() > cap {
                        return Err(capacity(format!(
                            "refined candidate set exceeds the cap {cap}"
                        )));
                    }
                }
            }
        }
    }
    Ok(CentroidSet { candidates, provenance: Provenance::Refined })
}

// ---------------------------------------------------------------------------
// Private coreset
// ---------------------------------------------------------------------------

/// Index of the candidate nearest to x; exact distance ties go to the
/// lexicographically smaller candidate.
fn snap_index(x: &[f64], candidates: &[Vec<f64>]) -> usize {
    let mut best = 0usize;
    let mut best_d2 = geom::dist2(x, &candidates[0]);
    for (i, c) in candidates.iter().enumerate().skip(1) {
        let d2 = geom::dist2(x, c);
        if d2 < best_d2
            || (d2 == best_d2 && geom::lex_cmp(c, &candidates[best]) == Ordering::Less)
        {
            best = i;
            best_d2 = d2;
        }
    }
    best
}

/// Snap the data onto a refined candidate set built at half the budget, then
/// release one discrete-Laplace count per candidate at the other half
/// (DLap(2/ε) on a sensitivity-1 histogram), clamp negatives to zero, and
/// drop empty candidates. Distance work runs in parallel; the noise stream
/// is drawn sequentially in candidate order.
pub fn private_coreset(inst: &ClusteringInstance, ctx: &mut Ctx) -> Result<Coreset> {
    ctx.ledger.push_scope("private-coreset");
    let out = (|| {
        let half = ClusteringInstance {
            budget: inst.budget.scaled(0.5, 0.5, 0.5),
            ..inst.clone()
        };
        let refined = refined_centroid_set(&half, ctx)?;
        let candidates = refined.candidates;
        let snapped: Vec<usize> =
            exec::par_map(&inst.points, |x| snap_index(x, &candidates));
        let mut counts = vec![0u64; candidates.len()];
        for i in snapped {
            counts[i] += 1;
        }
        let lambda = 2.0 / inst.budget.epsilon;
        let mut weighted = Vec::new();
        for (c, count) in candidates.into_iter().zip(&counts) {
            let noisy = (*count as i64).saturating_add(dlap_sample(lambda, &mut ctx.rng)?);
            if noisy > 0 {
                weighted.push((c, noisy as u64));
            }
        }
        ctx.ledger.charge("dlap-histogram", inst.budget.epsilon / 2.0, 0.0);
        Ok(Coreset { points: weighted })
    })();
    ctx.ledger.pop_scope();
    out
}

/// Additive error envelope of [`private_coreset`] at failure probability β,
/// with every constant written out: the snap term passes displacements of
/// 100ζ·r through the power-mean inequality against a cost proxy, the
/// localization term charges the 4k coarse balls their densest-ball error
/// at the stage budget, and the noise term bounds the clamped count noise
/// across the whole candidate support. An evaluable envelope, not a tight
/// certificate.
pub fn coreset_error_bound(
    n: usize,
    d: usize,
    k: usize,
    p: f64,
    alpha: f64,
    budget: &PrivacyBudget,
    zeta: f64,
    candidate_count: usize,
    cost_proxy: f64,
) -> f64 {
    let rounds = (2 * k * ceil_log2(n)) as f64;
    let m = candidate_count.max(2) as f64;
    let snap = power_sum_constant(p, alpha / 2.0) * (100.0 * zeta).powf(p) * cost_proxy;
    let localization = if rounds > 0.0 {
        let eps_unit = budget.epsilon / 2.0 / rounds;
        let beta_unit = budget.beta / 2.0 / rounds;
        let r_min = (2.0 / n.max(2) as f64).min(COARSE_RADIUS_CAP);
        let t_star =
            densestball::low_dim_error_bound(n, d, r_min, 1.0, eps_unit, 0.0, beta_unit);
        4.0 * k as f64 * t_star * 2f64.powf(p)
    } else {
        0.0
    };
    let noise =
        2f64.powf(p) * m * (2.0 / budget.epsilon) * (2.0 * m / budget.beta).ln();
    snap + localization + noise
}

// ---------------------------------------------------------------------------
// Non-private solver
// ---------------------------------------------------------------------------

/// One reweighted fixed-point update pass for the weighted p-center of a
/// member set. p = 2 reproduces the weighted mean in a single step; p = 1 is
/// the geometric-median iteration with the standard vertex handling: mass
/// sitting exactly on the current center anchors the step (a naive distance
/// clamp would pin the iteration at any data point forever), the center is
/// optimal once the pull of the remaining mass cannot overcome the anchored
/// weight, and otherwise the step toward the reweighted target is damped by
/// the anchored fraction. For p > 1 coincident mass exerts no pull, so it is
/// simply skipped.
fn irls_center(members: &[(&[f64], f64)], start: &[f64], p: f64) -> Vec<f64> {
    let mut c = start.to_vec();
    for _ in 0..IRLS_ITERS {
        let mut num = vec![0.0; c.len()];
        let mut pull = vec![0.0; c.len()];
        let mut den = 0.0;
        let mut anchored = 0.0;
        for (x, w) in members {
            let dist = geom::dist(x, &c);
            if dist < IRLS_EPS {
                anchored += w;
                continue;
            }
            let wi = w * dist.powf(p - 2.0);
            for ((nj, pj), (xj, cj)) in
                num.iter_mut().zip(pull.iter_mut()).zip(x.iter().zip(&c))
            {
                *nj += wi * xj;
                *pj += wi * (xj - cj);
            }
            den += wi;
        }
        if den <= 0.0 {
            break; // every member sits on the center already
        }
        let target: Vec<f64> = num.iter().map(|v| v / den).collect();
        let next: Vec<f64> = if anchored > 0.0 && p == 1.0 {
            let pull_norm = geom::norm(&pull);
            if pull_norm <= anchored {
                break; // the vertex is the optimum
            }
            let step = 1.0 - anchored / pull_norm;
            c.iter().zip(&target).map(|(cj, tj)| cj + step * (tj - cj)).collect()
        } else {
            target
        };
        let moved = geom::dist(&next, &c);
        c = next;
        if moved < 1e-9 {
            break;
        }
    }
    c
}

/// Weighted (k, p)-clustering by D^p-weighted seeding plus alternating
/// assignment/recenter refinement, with the per-round costs returned for
/// monotonicity checks. Ties in assignment go to the lowest center index;
/// clusters that empty out keep their previous center; k larger than the
/// support duplicates centers. Deterministic given the stream.
pub(crate) fn solve_weighted_with_trace(
    weighted: &[(Vec<f64>, u64)],
    d: usize,
    k: usize,
    p: f64,
    rng: &mut ChaCha20Rng,
) -> Result<(ClusterSolution, Vec<f64>)> {
    if k == 0 {
        return Err(contract("need at least one center"));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(contract(format!("cost exponent must satisfy p ≥ 1, got {p}")));
    }
    let support: Vec<(&[f64], f64)> = weighted
        .iter()
        .filter(|(_, w)| *w > 0)
        .map(|(x, w)| (x.as_slice(), *w as f64))
        .collect();
    if support.is_empty() {
        let sol = ClusterSolution { centers: vec![vec![0.0; d]; k], cost: 0.0 };
        return Ok((sol, Vec::new()));
    }
    // D^p seeding: first center by weight, the rest by weight times the
    // p-th power of the distance to the nearest chosen center.
    let base: Vec<f64> = support.iter().map(|(_, w)| *w).collect();
    let mut centers: Vec<Vec<f64>> =
        vec![support[dpcore::weighted_index(&base, rng)].0.to_vec()];
    while centers.len() < k {
        let pull: Vec<f64> = support
            .iter()
            .map(|(x, w)| w * min_dist_pow(x, &centers, p))
            .collect();
        let pick = if pull.iter().sum::<f64>() > 0.0 {
            dpcore::weighted_index(&pull, rng)
        } else {
            0
        };
        centers.push(support[pick].0.to_vec());
    }
    let support_cost = |centers: &[Vec<f64>]| -> f64 {
        support
            .iter()
            .map(|(x, w)| w * min_dist_pow(x, centers, p))
            .sum()
    };
    let mut trace = vec![support_cost(&centers)];
    for _ in 0..REFINE_MAX_ITERS {
        let assign: Vec<usize> = support
            .iter()
            .map(|(x, _)| {
                let mut best = 0;
                let mut best_c = f64::INFINITY;
                for (j, c) in centers.iter().enumerate() {
                    let v = dist_pow(x, c, p);
                    if v < best_c {
                        best_c = v;
                        best = j;
                    }
                }
                best
            })
            .collect();
        for j in 0..centers.len() {
            let members: Vec<(&[f64], f64)> = support
                .iter()
                .zip(&assign)
                .filter(|(_, a)| **a == j)
                .map(|((x, w), _)| (*x, *w))
                .collect();
            if members.is_empty() {
                continue;
            }
            centers[j] = irls_center(&members, &centers[j], p);
        }
        let now = support_cost(&centers);
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(now);
        if prev - now <= REFINE_TOL * prev.max(1.0) {
            break;
        }
    }
    let final_cost = *trace.last().expect("trace starts non-empty");
    Ok((ClusterSolution { centers, cost: final_cost }, trace))
}

/// Default non-private solver matching the [`Solver`] signature.
pub fn nonprivate_solver(
    weighted: &[(Vec<f64>, u64)],
    d: usize,
    k: usize,
    p: f64,
    rng: &mut ChaCha20Rng,
) -> Result<ClusterSolution> {
    Ok(solve_weighted_with_trace(weighted, d, k, p, rng)?.0)
}

// ---------------------------------------------------------------------------
// End-to-end pipelines
// ---------------------------------------------------------------------------

/// Low-dimensional private clustering: a private coreset at the full
/// declared budget, then the non-private solver on the weighted coreset.
/// The returned cost is recomputed on the instance points (diagnostic).
pub fn cluster_low_dim(
    inst: &ClusteringInstance,
    solver: Solver,
    ctx: &mut Ctx,
) -> Result<ClusterSolution> {
    ctx.ledger.push_scope("cluster-low");
    let out = (|| {
        let coreset = private_coreset(inst, ctx)?;
        let sol = solver(&coreset.points, inst.dimension, inst.k, inst.p, &mut ctx.rng)?;
        let total = cost(&inst.points, &sol.centers, inst.p)?;
        Ok(ClusterSolution { centers: sol.centers, cost: total })
    })();
    ctx.ledger.pop_scope();
    out
}

/// Exact running product for C(m, k), reporting cap + 1 as soon as the
/// count exceeds the cap (each partial product C(m, i) is an integer, so
/// the division is exact).
fn binomial_capped(m: u128, k: u128, cap: u128) -> u128 {
    let k = k.min(m - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (m - i) / (i + 1);
        if r > cap {
            return cap + 1;
        }
    }
    r
}

/// Advance indices to the next k-subset of {0, …, m−1} in lexicographic
/// order; false once the last subset has been visited.
fn next_combination(idx: &mut [usize], m: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] != i + m - k {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// ε-private selection of k centers from an explicit candidate list by the
/// exponential mechanism over all C(|candidates|, k) subsets, weighted
/// e^{−ε·cost/(2Γ)} with Γ = 2^p (one point's cost contribution in the unit
/// ball is at most diameter^p, the mechanism's removal sensitivity).
/// Enumeration is lexicographic and capped by
/// [`Tunables::em_tuple_cap`]; subset costs are computed in parallel, the
/// draw itself from the sequential stream.
pub fn discrete_exp_clustering(
    points: &[Vec<f64>],
    candidates: &[Vec<f64>],
    k: usize,
    p: f64,
    eps: f64,
    ctx: &mut Ctx,
) -> Result<ClusterSolution> {
    let m = candidates.len();
    if k == 0 || k > m {
        return Err(contract(format!(
            "need 1 ≤ k ≤ |candidates| = {m}, got k = {k}"
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(contract(format!("selection needs a positive epsilon, got {eps}")));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(contract(format!("cost exponent must satisfy p ≥ 1, got {p}")));
    }
    for x in points.iter().chain(candidates.iter()) {
        if geom::norm(x) > 1.0 + SLACK {
            return Err(contract("points and candidates must lie in the unit ball"));
        }
    }
    let cap = ctx.cfg.em_tuple_cap;
    if binomial_capped(m as u128, k as u128, cap) > cap {
        return Err(capacity(format!(
            "C({m}, {k}) subsets exceed the selection cap {cap}"
        )));
    }
    let mut combos: Vec<Vec<usize>> = Vec::new();
    let mut sel: Vec<usize> = (0..k).collect();
    loop {
        combos.push(sel.clone());
        if !next_combination(&mut sel, m) {
            break;
        }
    }
    let costs: Vec<f64> = exec::par_map(&combos, |sel| {
        points
            .iter()
            .map(|x| {
                sel.iter()
                    .map(|&ci| dist_pow(x, &candidates[ci], p))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    });
    let gamma = 2f64.powf(p);
    let log_w: Vec<f64> = costs.iter().map(|c| -eps * c / (2.0 * gamma)).collect();
    let peak = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_w.iter().map(|a| (a - peak).exp()).collect();
    let idx = dpcore::weighted_index(&weights, &mut ctx.rng);
    ctx.ledger.charge("discrete-selection", eps, 0.0);
    let centers: Vec<Vec<f64>> =
        combos[idx].iter().map(|&ci| candidates[ci].clone()).collect();
    Ok(ClusterSolution { centers, cost: costs[idx] })
}

/// Fixed-parameter pipeline: refined candidates at half the budget, then
/// the discrete selection over candidate k-subsets at the other half. The
/// subset cap makes this practical only for small candidate sets (generous
/// mesh overrides); the cap error is the honest report of the inherent
/// |candidates|^k blowup.
pub fn fpt_cluster(inst: &ClusteringInstance, ctx: &mut Ctx) -> Result<ClusterSolution> {
    ctx.ledger.push_scope("fpt-cluster");
    let out = (|| {
        let half = ClusteringInstance {
            budget: inst.budget.scaled(0.5, 0.5, 0.5),
            ..inst.clone()
        };
        let refined = refined_centroid_set(&half, ctx)?;
        discrete_exp_clustering(
            &inst.points,
            &refined.candidates,
            inst.k,
            inst.p,
            inst.budget.epsilon / 2.0,
            ctx,
        )
    })();
    ctx.ledger.pop_scope();
    out
}

// ---------------------------------------------------------------------------
// Private center finding
// ---------------------------------------------------------------------------

fn noisy_mean(
    points: &[Vec<f64>],
    d: usize,
    budget: &PrivacyBudget,
    mode: Mode,
    ctx: &mut Ctx,
) -> Result<Vec<f64>> {
    let eps_half = budget.epsilon / 2.0;
    let noisy_count =
        (points.len() as i64).saturating_add(dlap_sample(2.0 / budget.epsilon, &mut ctx.rng)?);
    let denom = noisy_count.max(1) as f64;
    let mut sum = vec![0.0; d];
    for x in points {
        for (s, v) in sum.iter_mut().zip(x) {
            *s += v;
        }
    }
    let mut delta_spent = 0.0;
    match mode {
        Mode::Pure => {
            // ‖x‖₂ ≤ 1 gives ‖x‖₁ ≤ √d, the removal sensitivity of the sum.
            let scale = (d as f64).sqrt() / eps_half;
            for s in sum.iter_mut() {
                *s += lap_sample(scale, &mut ctx.rng)?;
            }
        }
        Mode::Approx => {
            let sigma = (2.0 * (1.25 / budget.delta).ln()).sqrt() / eps_half;
            for s in sum.iter_mut() {
                *s += gauss_sample(sigma, &mut ctx.rng)?;
            }
            delta_spent = budget.delta;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / denom).collect();
    ctx.ledger.charge("noisy-mean", budget.epsilon, delta_spent);
    Ok(geom::project_to_unit_ball(&mean))
}

fn noisy_median(
    points: &[Vec<f64>],
    d: usize,
    budget: &PrivacyBudget,
    mode: Mode,
    ctx: &mut Ctx,
) -> Result<Vec<f64>> {
    let steps = d.max(1);
    let tf = steps as f64;
    // Per-step ℓ2 sensitivity of the summed unit-vector subgradient is 2.
    let (lap_scale, sigma, delta_spent) = match mode {
        Mode::Pure => {
            let eps_step = budget.epsilon / tf;
            (Some(2.0 * (d as f64).sqrt() / eps_step), None, 0.0)
        }
        Mode::Approx => {
            let delta_prime = budget.delta / 2.0;
            let delta_step = budget.delta / (2.0 * tf);
            let eps_step =
                dpcore::advanced_step_epsilon(budget.epsilon, steps, delta_step, delta_prime)?;
            let sigma = 2.0 * (2.0 * (1.25 / delta_step).ln()).sqrt() / eps_step;
            (None, Some(sigma), budget.delta)
        }
    };
    // Step size 1/(G√T) over the unit ball, with G the gradient bound
    // including the expected noise norm.
    let noise_norm = match (lap_scale, sigma) {
        (Some(b), _) => b * (2.0 * d as f64).sqrt(),
        (_, Some(s)) => s * (d as f64).sqrt(),
        _ => unreachable!(),
    };
    let grad_bound = (points.len() as f64 + noise_norm).max(1.0);
    let eta = 1.0 / (grad_bound * tf.sqrt());
    let mut theta = vec![0.0; d];
    let mut avg = vec![0.0; d];
    for _ in 0..steps {
        let mut g = vec![0.0; d];
        for x in points {
            let dist = geom::dist(&theta, x);
            if dist > IRLS_EPS {
                for (gj, (tj, xj)) in g.iter_mut().zip(theta.iter().zip(x)) {
                    *gj += (tj - xj) / dist;
                }
            }
        }
        for gj in g.iter_mut() {
            *gj += match (lap_scale, sigma) {
                (Some(b), _) => lap_sample(b, &mut ctx.rng)?,
                (_, Some(s)) => gauss_sample(s, &mut ctx.rng)?,
                _ => unreachable!(),
            };
        }
        let stepped: Vec<f64> =
            theta.iter().zip(&g).map(|(t, gj)| t - eta * gj).collect();
        theta = geom::project_to_unit_ball(&stepped);
        for (a, t) in avg.iter_mut().zip(&theta) {
            *a += t;
        }
    }
    let mean_iterate: Vec<f64> = avg.iter().map(|a| a / tf).collect();
    ctx.ledger.charge("dp-subgradient", budget.epsilon, delta_spent);
    Ok(geom::project_to_unit_ball(&mean_iterate))
}

/// Private p-center of a point set in the unit ball, spending the whole
/// budget as one ledger entry. p = 2: a noisy mean — half the ε on a
/// discrete-Laplace count, half on the coordinate sums (pure: Laplace at
/// ℓ1 sensitivity √d; approximate: Gaussian at ℓ2 sensitivity 1 spending
/// δ). p = 1: ⌈d⌉ projected noisy subgradient steps with averaged iterates
/// (pure: an even ε split per step; approximate: per-step ε from the
/// advanced composition inverse at δ/(2T) per step plus δ/2 slack). Noise
/// is drawn even for an empty input, keeping neighboring runs
/// indistinguishable.
pub fn find_center(
    points: &[Vec<f64>],
    d: usize,
    p: f64,
    budget: &PrivacyBudget,
    mode: Mode,
    ctx: &mut Ctx,
) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(contract("dimension must be positive"));
    }
    if mode == Mode::Approx && !(budget.delta > 0.0) {
        return Err(contract("approximate mode needs delta > 0"));
    }
    if !(budget.epsilon > 0.0 && budget.epsilon.is_finite()) {
        return Err(contract(format!(
            "center finding needs a positive epsilon, got {}",
            budget.epsilon
        )));
    }
    for x in points {
        if x.len() != d {
            return Err(contract(format!(
                "point dimension {} does not match dimension {d}",
                x.len()
            )));
        }
        if geom::norm(x) > 1.0 + SLACK {
            return Err(contract("points must lie in the unit ball"));
        }
    }
    if p == 2.0 {
        noisy_mean(points, d, budget, mode, ctx)
    } else if p == 1.0 {
        noisy_median(points, d, budget, mode, ctx)
    } else {
        Err(contract(format!("center finding supports p ∈ {{1, 2}}, got {p}")))
    }
}

// ---------------------------------------------------------------------------
// High-dimensional pipeline
// ---------------------------------------------------------------------------

/// Projection dimension d' = min(d, ⌈c·p⁴·ln(k/β)/α²⌉) with c from the
/// tunables, or the override clamped to [1, d].
fn effective_cluster_dim(
    k: usize,
    p: f64,
    alpha: f64,
    beta: f64,
    d: usize,
    cfg: &Tunables,
) -> usize {
    if let Some(v) = cfg.cluster_dim_override {
        return v.clamp(1, d);
    }
    let raw = cfg.cluster_dim_const * p.powi(4) * (k as f64 / beta).ln() / (alpha * alpha);
    (raw.ceil() as usize).clamp(1, d)
}

fn nearest_center(x: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0usize;
    let mut best_d2 = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d2 = geom::dist2(x, c);
        if d2 < best_d2 {
            best_d2 = d2;
            best = i;
        }
    }
    best
}

/// High-dimensional private clustering. The data is rotated, truncated to
/// d' coordinates (orthonormal rows, so norms never grow), and scaled by
/// Λ = √(0.01/ln(n/β)·d'/d) — anything the scaling would push past the unit
/// ball is zeroed, a guard that cannot fire after an orthonormal projection
/// but keeps the clamp explicit. The low-dimensional pipeline runs on the
/// scaled points at a tenth of the accuracy target with (ε/2, 0, β/4); its
/// centers induce a partition (nearest center on the projected points, ties
/// to the lowest index), and each part's final center comes from
/// [`find_center`] on the original coordinates at (ε/2, δ, β/(4k)) — parts
/// are disjoint, so those charges compose in parallel. The mode follows the
/// declared δ: zero runs pure, positive runs approximate.
pub fn cluster_high_dim(
    inst: &ClusteringInstance,
    solver: Solver,
    ctx: &mut Ctx,
) -> Result<ClusterSolution> {
    let mode = if inst.budget.delta > 0.0 { Mode::Approx } else { Mode::Pure };
    let n = inst.points.len();
    let d = inst.dimension;
    let beta = inst.budget.beta;
    ctx.ledger.push_scope("cluster-high");
    let out = (|| {
        let d_low = effective_cluster_dim(inst.k, inst.p, inst.alpha, beta, d, &ctx.cfg);
        let rotation = geom::random_rotation(d, &mut ctx.rng);
        let proj = &rotation[..d_low];
        let lambda = lambda_scale(n, beta, d_low, d);
        let projected: Vec<Vec<f64>> = exec::par_map(&inst.points, |x| {
            let y = geom::apply_rows(proj, x);
            if geom::norm(&y) <= 1.0 / lambda + SLACK {
                geom::scale(&y, lambda)
            } else {
                vec![0.0; d_low]
            }
        });
        let low_budget = PrivacyBudget {
            epsilon: inst.budget.epsilon / 2.0,
            delta: 0.0,
            beta: beta / 4.0,
        };
        let low_inst = ClusteringInstance::with_dimension(
            d_low,
            projected.clone(),
            inst.k,
            inst.p,
            0.1 * inst.alpha,
            low_budget,
        )?;
        let low_sol = cluster_low_dim(&low_inst, solver, ctx)?;
        let assign: Vec<usize> =
            exec::par_map(&projected, |y| nearest_center(y, &low_sol.centers));
        let mut parts: Vec<Vec<Vec<f64>>> = vec![Vec::new(); low_sol.centers.len()];
        for (i, a) in assign.into_iter().enumerate() {
            parts[a].push(inst.points[i].clone());
        }
        let fc_budget = PrivacyBudget {
            epsilon: inst.budget.epsilon / 2.0,
            delta: inst.budget.delta,
            beta: beta / (4.0 * inst.k as f64),
        };
        let mut found: Vec<Result<Vec<f64>>> = Vec::with_capacity(parts.len());
        ctx.ledger.begin_parallel();
        for (j, part) in parts.iter().enumerate() {
            ctx.ledger.push_scope(&format!("part{j}"));
            found.push(find_center(part, d, inst.p, &fc_budget, mode, ctx));
            ctx.ledger.pop_scope();
        }
        ctx.ledger.end_parallel();
        let centers: Vec<Vec<f64>> = found.into_iter().collect::<Result<_>>()?;
        let total = cost(&inst.points, &centers, inst.p)?;
        Ok(ClusterSolution { centers, cost: total })
    })();
    ctx.ledger.pop_scope();
    out
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
