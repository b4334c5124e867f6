//! Consumers of the dense-ball machinery: a descending radius search that
//! certifies a small ball holding a target count, subsample-and-aggregate
//! for privately stabilizing black-box estimators, and margin-halfspace
//! learning through random sign projections.
//!
//! The radius search probes the geometric schedule r_high, r_high/w, … with
//! two noisy density probes per level and stops at the first level whose
//! shrunken probe loses the target count. Its budget is pre-divided evenly
//! across the whole schedule, so a full descent consumes exactly the
//! declared (ε, δ) and an early return consumes less. Aggregation evaluates
//! an estimator on disjoint random blocks and hands the evaluations to the
//! radius search; halfspace learning maps labeled samples to signed unit
//! directions, finds their densest spherical cap, and pulls the cap center
//! back to a separating direction.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::config::{Ctx, Tunables};
use crate::densestball::{
    self, densest_ball_low_dim_raw, high_dim_error_bound, low_dim_error_bound, BallResult,
};
use crate::dpcore::{dlap_sample, Mode, PrivacyBudget};
use crate::error::{capacity, contract, Result};
use crate::exec;
use crate::geom::{self, SLACK};

/// Failsafe cap on the radius schedule length; a shrink ratio barely above
/// one over a wide radius range would otherwise stall the search.
const MAX_SCHEDULE_STEPS: usize = 4096;

/// Norms at or below this are treated as directionless when normalizing.
const DIRECTION_FLOOR: f64 = 1e-12;

// --- target-count ball search ---------------------------------------------

/// A target-count ball search task: find a small closed ball holding at
/// least `target_count` points, with the optimal radius promised to lie in
/// [r_low, r_high].
#[derive(Debug, Clone)]
pub struct OneClusterInstance {
    /// Input points, each inside the closed unit ball.
    pub points: Vec<Vec<f64>>,
    /// How many points the returned ball must (approximately) hold.
    pub target_count: usize,
    /// Grid pitch of the discretized input domain; the natural radius floor.
    pub kappa: f64,
    /// Smallest radius the schedule probes.
    pub r_low: f64,
    /// Largest radius the schedule probes.
    pub r_high: f64,
    /// Per-level shrink ratio, in (1, 2]; w − 1 doubles as the accuracy
    /// parameter of every density probe, so the returned radius exceeds the
    /// best possible one by at most a factor w².
    pub w: f64,
    pub budget: PrivacyBudget,
    dimension: usize,
}

impl OneClusterInstance {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        points: Vec<Vec<f64>>,
        target_count: usize,
        kappa: f64,
        r_low: f64,
        r_high: f64,
        w: f64,
        budget: PrivacyBudget,
    ) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(contract(
                "empty instance needs an explicit dimension; use with_dimension",
            ));
        };
        let d = first.len();
        OneClusterInstance::with_dimension(d, points, target_count, kappa, r_low, r_high, w, budget)
    }

    /// Search the whole feasible range: r_low = κ, r_high = 1.
    pub fn full_range(
        points: Vec<Vec<f64>>,
        target_count: usize,
        kappa: f64,
        w: f64,
        budget: PrivacyBudget,
    ) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(contract(
                "empty instance needs an explicit dimension; use with_dimension",
            ));
        };
        let d = first.len();
        OneClusterInstance::with_dimension(d, points, target_count, kappa, kappa, 1.0, w, budget)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_dimension(
        dimension: usize,
        points: Vec<Vec<f64>>,
        target_count: usize,
        kappa: f64,
        r_low: f64,
        r_high: f64,
        w: f64,
        budget: PrivacyBudget,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(contract("dimension must be positive"));
        }
        if !(kappa > 0.0 && kappa <= 1.0) {
            return Err(contract(format!("grid pitch must lie in (0, 1], got {kappa}")));
        }
        if !(r_low > 0.0) {
            return Err(contract(format!("radius floor must be positive, got {r_low}")));
        }
        if r_low > r_high {
            return Err(contract(format!(
                "radius floor {r_low} exceeds radius ceiling {r_high}"
            )));
        }
        if !(r_high <= 1.0) {
            return Err(contract(format!(
                "radius ceiling must lie in (0, 1], got {r_high}"
            )));
        }
        if !(w > 1.0 && w <= 2.0) {
            return Err(contract(format!("shrink ratio must lie in (1, 2], got {w}")));
        }
        if (w - 1.0) * r_high >= 1.0 {
            return Err(contract(format!(
                "probe accuracy (w − 1)·r_high = {} must stay below 1 so probe covers exist",
                (w - 1.0) * r_high
            )));
        }
        if target_count > points.len() {
            return Err(contract(format!(
                "target count {target_count} exceeds the {} available points",
                points.len()
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
        Ok(OneClusterInstance {
            points,
            target_count,
            kappa,
            r_low,
            r_high,
            w,
            budget,
            dimension,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
}

/// Number of levels the radius schedule visits: how often r_high can be
/// divided by w before dropping below r_low. Equals ⌊log_w(r_high/r_low)⌋ + 1
/// for valid instances.
pub fn one_cluster_schedule_len(r_low: f64, r_high: f64, w: f64) -> usize {
    let mut levels = 0usize;
    let mut r = r_high;
    while r >= r_low && levels <= MAX_SCHEDULE_STEPS {
        levels += 1;
        r /= w;
    }
    levels
}

/// Count slack t′ the search subtracts from the target: the certified
/// additive error of a single density probe at the smallest scheduled
/// radius, plus the tail reach of the count noise over the whole schedule,
/// (4/ε)·log_w(r_high/r_low)·ln(2/β).
pub fn one_cluster_threshold(inst: &OneClusterInstance, cfg: &Tunables) -> f64 {
    let levels = one_cluster_schedule_len(inst.r_low, inst.r_high, inst.w).max(1);
    let units = 2.0 * levels as f64;
    let probe_budget = inst.budget.scaled(1.0 / (2.0 * units), 1.0 / units, 1.0);
    let r_min = inst.r_high / inst.w.powi(levels as i32);
    let alpha = inst.w - 1.0;
    let n = inst.points.len();
    let probe_bound = if inst.dimension <= cfg.low_dim_limit {
        low_dim_error_bound(
            n,
            inst.dimension,
            r_min,
            alpha,
            probe_budget.epsilon,
            probe_budget.delta,
            probe_budget.beta,
        )
    } else {
        let mode = if inst.budget.is_pure() { Mode::Pure } else { Mode::Approx };
        high_dim_error_bound(n, inst.dimension, r_min, alpha, &probe_budget, mode, cfg)
    };
    let log_levels = (inst.r_high / inst.r_low).ln() / inst.w.ln();
    probe_bound + 4.0 / inst.budget.epsilon * log_levels * (2.0 / inst.budget.beta).ln()
}

/// One density probe at radius r, routed by dimension. Low dimensions call
/// the core routine directly (its radius certificate is w·r); high
/// dimensions go through the projecting search.
fn dense_probe(
    inst: &OneClusterInstance,
    r: f64,
    budget: &PrivacyBudget,
    mode: Mode,
    ctx: &mut Ctx,
) -> Result<BallResult> {
    let alpha = inst.w - 1.0;
    if inst.dimension <= ctx.cfg.low_dim_limit {
        ctx.ledger.push_scope("densest-ball-low");
        let out = densest_ball_low_dim_raw(&inst.points, inst.dimension, r, alpha, budget, mode, ctx);
        ctx.ledger.pop_scope();
        out
    } else {
        let ball = densestball::BallInstance::with_dimension(
            inst.dimension,
            inst.points.clone(),
            r,
            alpha,
            *budget,
        )?;
        densestball::densest_ball_high_dim(&ball, mode, ctx)
    }
}

fn noisy_count(count: usize, lambda: f64, eps: f64, ctx: &mut Ctx) -> Result<f64> {
    let noise = dlap_sample(lambda, &mut ctx.rng)?;
    ctx.ledger.charge("dlap-count", eps, 0.0);
    Ok(count as f64 + noise as f64)
}

/// Descending geometric search for a small ball holding `target_count`
/// points.
///
/// Each level probes the current radius r (the probe's ball is certified at
/// w·r) and the shrunken radius r/w (certified at r), adds discrete-Laplace
/// noise to both inside counts, and compares them against
/// `target_count` − t′ with t′ from [`one_cluster_threshold`]. A failing
/// first probe ends the search with `None`; a failing shrunken probe, or
/// the schedule crossing `r_low`, returns the current center with its
/// certified radius w·r — always the ball the surviving count spoke about,
/// which keeps the returned radius within w² of the best possible one. The
/// declared budget is split evenly across all 2 × schedule-length
/// (probe, count) pairs, half of each unit's ε to the probe and half to the
/// count, so a full descent consumes exactly (ε, δ).
pub fn one_cluster(inst: &OneClusterInstance, ctx: &mut Ctx) -> Result<Option<(Vec<f64>, f64)>> {
    let levels = one_cluster_schedule_len(inst.r_low, inst.r_high, inst.w);
    if levels > MAX_SCHEDULE_STEPS {
        return Err(capacity(format!(
            "radius schedule longer than {MAX_SCHEDULE_STEPS} levels; raise r_low or w"
        )));
    }
    let units = 2.0 * levels as f64;
    let probe_budget = inst.budget.scaled(1.0 / (2.0 * units), 1.0 / units, 1.0);
    let eps_count = inst.budget.epsilon / (2.0 * units);
    let mode = if inst.budget.is_pure() { Mode::Pure } else { Mode::Approx };
    let bar = inst.target_count as f64 - one_cluster_threshold(inst, &ctx.cfg);

    ctx.ledger.push_scope("one-cluster");
    let out = descend(inst, &probe_budget, mode, eps_count, bar, ctx);
    ctx.ledger.pop_scope();
    out
}

fn descend(
    inst: &OneClusterInstance,
    probe_budget: &PrivacyBudget,
    mode: Mode,
    eps_count: f64,
    bar: f64,
    ctx: &mut Ctx,
) -> Result<Option<(Vec<f64>, f64)>> {
    let lambda = 1.0 / eps_count;
    let mut r = inst.r_high;
    loop {
        let wide = dense_probe(inst, r, probe_budget, mode, ctx)?;
        let s_wide = noisy_count(wide.count_inside, lambda, eps_count, ctx)?;
        if s_wide <= bar {
            return Ok(None);
        }
        let narrow = dense_probe(inst, r / inst.w, probe_budget, mode, ctx)?;
        let s_narrow = noisy_count(narrow.count_inside, lambda, eps_count, ctx)?;
        if s_narrow <= bar || r / inst.w < inst.r_low {
            return Ok(Some((wide.center, inst.w * r)));
        }
        r /= inst.w;
    }
}

// --- subsample and aggregate ----------------------------------------------

/// Radius range handed to the ball search that aggregates block
/// evaluations.
#[derive(Debug, Clone)]
pub struct AggregateSearch {
    /// Grid pitch of the evaluation domain.
    pub kappa: f64,
    pub r_low: f64,
    pub r_high: f64,
    /// Shrink ratio of the aggregation search, in (1, 2].
    pub w: f64,
}

impl AggregateSearch {
    /// Search the whole feasible range: r_low = κ, r_high = 1.
    pub fn full_range(kappa: f64, w: f64) -> Self {
        AggregateSearch { kappa, r_low: kappa, r_high: 1.0, w }
    }
}

/// A stabilization task for a black-box estimator: find a point the
/// estimator lands near on most random size-m blocks of the dataset.
pub struct StablePointQuery<'a> {
    /// Black-box estimator: maps a block of dataset indices to a point of
    /// the closed unit ball. Runs on disjoint blocks, possibly in parallel,
    /// so it must not carry interior mutability that breaks under sharing.
    pub evaluator: &'a (dyn Fn(&[usize]) -> Result<Vec<f64>> + Sync),
    /// Block size each evaluation sees.
    pub m: usize,
    /// Assumed probability that an evaluation lands within the stable
    /// radius of the stable point, in (0, 1].
    pub zeta: f64,
    pub budget: PrivacyBudget,
}

/// How many disjoint evaluation blocks a dataset of size n yields: ⌊n/(9m)⌋.
pub fn aggregate_block_count(n: usize, m: usize) -> usize {
    if m == 0 {
        0
    } else {
        n / (9 * m)
    }
}

/// Privately aggregate a black-box estimator over disjoint random blocks.
///
/// Draws ⌊n/(9m)⌋ · m distinct indices, chunks them into blocks of m,
/// evaluates the estimator on every block (in parallel when enabled — the
/// mechanism randomness stays on the sequential driver), and runs the
/// target-count ball search over the evaluations with target
/// ⌈c · ζ · blocks⌉, c from `stability_fraction`. Returns the found center,
/// or `None` when no radius in the search range concentrates the
/// evaluations.
///
/// The constraints ε ≤ ζ/72 and δ ≤ β·ε/3 keep a single dataset row's
/// influence on the evaluation profile within the privacy accounting of the
/// inner search. The sample floor n ≥ m·⌈ln(12/β)/ζ²⌉ only sizes the block
/// count against the stability probability; callers should additionally
/// size n so that ζ·⌊n/(9m)⌋ clears the search threshold
/// ([`one_cluster_threshold`]) with room to spare.
pub fn sample_aggregate(
    query: &StablePointQuery,
    n: usize,
    search: &AggregateSearch,
    ctx: &mut Ctx,
) -> Result<Option<Vec<f64>>> {
    if query.m == 0 {
        return Err(contract("block size must be positive"));
    }
    if query.m > n {
        return Err(contract(format!(
            "block size {} exceeds the dataset size {n}",
            query.m
        )));
    }
    if !(query.zeta > 0.0 && query.zeta <= 1.0) {
        return Err(contract(format!(
            "stability probability must lie in (0, 1], got {}",
            query.zeta
        )));
    }
    let budget = &query.budget;
    if budget.epsilon > query.zeta / 72.0 {
        return Err(contract(format!(
            "stable aggregation needs epsilon <= zeta/72; got epsilon {} with bound {}",
            budget.epsilon,
            query.zeta / 72.0
        )));
    }
    if budget.delta > budget.beta * budget.epsilon / 3.0 {
        return Err(contract(format!(
            "stable aggregation needs delta <= beta*epsilon/3; got delta {} with bound {}",
            budget.delta,
            budget.beta * budget.epsilon / 3.0
        )));
    }
    let floor = query.m * ((12.0 / budget.beta).ln() / (query.zeta * query.zeta)).ceil() as usize;
    if n < floor {
        return Err(contract(format!(
            "dataset too small for stable aggregation: n {n} below the floor {floor} \
             (m·ln(12/beta)/zeta²)"
        )));
    }
    let blocks = aggregate_block_count(n, query.m);
    if blocks == 0 {
        return Err(contract(format!(
            "need n >= 9m to form an evaluation block; got n {n} with m {}",
            query.m
        )));
    }

    let picked = rand::seq::index::sample(&mut ctx.rng, n, blocks * query.m).into_vec();
    let index_blocks: Vec<&[usize]> = picked.chunks(query.m).collect();
    let evals = exec::par_map(&index_blocks, |block| (query.evaluator)(block));
    let mut points = Vec::with_capacity(blocks);
    for e in evals {
        points.push(e?);
    }
    let target = (ctx.cfg.stability_fraction * query.zeta * blocks as f64).ceil() as usize;
    let dim = points[0].len();
    let inst = OneClusterInstance::with_dimension(
        dim,
        points,
        target,
        search.kappa,
        search.r_low,
        search.r_high,
        search.w,
        *budget,
    )?;
    ctx.ledger.push_scope("sample-aggregate");
    let found = one_cluster(&inst, ctx);
    ctx.ledger.pop_scope();
    Ok(found?.map(|(center, _)| center))
}

// --- margin halfspace learning --------------------------------------------

/// A labeled-sample halfspace learning task: find a direction whose margin-μ
/// error rate is small when some direction classifies the samples well at
/// margin μ.
#[derive(Debug, Clone)]
pub struct MarginInstance {
    /// Labeled samples (x, y): x inside the closed unit ball and nonzero,
    /// y ∈ {−1, +1}.
    pub samples: Vec<(Vec<f64>, f64)>,
    /// Margin the error rate is measured against, in (0, 1).
    pub mu: f64,
    /// Target excess error the sample floor is sized for, in (0, 1).
    pub target_excess: f64,
    pub budget: PrivacyBudget,
    dimension: usize,
}

impl MarginInstance {
    pub fn new(
        samples: Vec<(Vec<f64>, f64)>,
        mu: f64,
        target_excess: f64,
        budget: PrivacyBudget,
    ) -> Result<Self> {
        let Some((first, _)) = samples.first() else {
            return Err(contract(
                "empty instance needs an explicit dimension; use with_dimension",
            ));
        };
        let d = first.len();
        MarginInstance::with_dimension(d, samples, mu, target_excess, budget)
    }

    pub fn with_dimension(
        dimension: usize,
        samples: Vec<(Vec<f64>, f64)>,
        mu: f64,
        target_excess: f64,
        budget: PrivacyBudget,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(contract("dimension must be positive"));
        }
        if !(mu > 0.0 && mu < 1.0) {
            return Err(contract(format!("margin must lie in (0, 1), got {mu}")));
        }
        if !(target_excess > 0.0 && target_excess < 1.0) {
            return Err(contract(format!(
                "target excess error must lie in (0, 1), got {target_excess}"
            )));
        }
        for (i, (x, y)) in samples.iter().enumerate() {
            if x.len() != dimension {
                return Err(contract(format!(
                    "sample {i} has dimension {}, expected {dimension}",
                    x.len()
                )));
            }
            let nrm = geom::norm(x);
            if nrm > 1.0 + SLACK {
                return Err(contract(format!(
                    "sample {i} lies outside the closed unit ball (norm {nrm})"
                )));
            }
            if nrm == 0.0 {
                return Err(contract(format!(
                    "sample {i} is the origin and carries no direction"
                )));
            }
            if *y != 1.0 && *y != -1.0 {
                return Err(contract(format!("label {i} must be +1 or -1, got {y}")));
            }
        }
        Ok(MarginInstance { samples, mu, target_excess, budget, dimension })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
}

/// Dimension the sign projection maps into:
/// ⌈c · ln(100/(t·β)) / μ²⌉ with c from `halfspace_dim_const`.
pub fn halfspace_projection_dim(mu: f64, target_excess: f64, beta: f64, cfg: &Tunables) -> usize {
    let arg = 100.0 / (target_excess * beta);
    ((cfg.halfspace_dim_const * arg.ln() / (mu * mu)).ceil() as usize).max(1)
}

/// Random ±1/√rows projection matrix, one row per output coordinate.
pub fn sign_matrix(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
    let s = 1.0 / (rows as f64).sqrt();
    (0..rows)
        .map(|_| (0..cols).map(|_| if rng.random::<bool>() { s } else { -s }).collect())
        .collect()
}

/// Signed, projected, normalized image of a labeled sample: y·Ax/‖Ax‖, a
/// point of the unit sphere, odd in the label. Returns `None` when Ax is
/// numerically directionless (the sample then casts no vote).
pub fn halfspace_embed(rows: &[Vec<f64>], x: &[f64], y: f64) -> Option<Vec<f64>> {
    let v = geom::apply_rows(rows, x);
    let nrm = geom::norm(&v);
    if nrm <= DIRECTION_FLOOR {
        return None;
    }
    Some(geom::scale(&v, y / nrm))
}

/// Normalize, falling back to the first axis when the vector is
/// directionless.
fn unit_or_axis(v: &[f64], d: usize) -> Vec<f64> {
    let nrm = geom::norm(v);
    if nrm > DIRECTION_FLOOR {
        geom::scale(v, 1.0 / nrm)
    } else {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        e
    }
}

/// Learn a unit direction with small margin-μ′ error from μ-margin data,
/// μ′ = √(1 − (1−μ²)(1+α)²) with α from `halfspace_alpha`.
///
/// Pipeline: project every sample through a random ±1/√d′ matrix with d′
/// from [`halfspace_projection_dim`]; embed each as the signed unit
/// direction y·Ax/‖Ax‖; find the densest radius-√(1−μ²) ball among the
/// embeddings (a correctly classifying direction concentrates them in a
/// spherical cap of exactly that chordal radius); pull the cap center back
/// through the transpose and normalize. The whole privacy budget goes to
/// the single ball search.
pub fn learn_halfspace(inst: &MarginInstance, ctx: &mut Ctx) -> Result<Vec<f64>> {
    let alpha = ctx.cfg.halfspace_alpha;
    let stretch = (1.0 + alpha) * (1.0 + alpha) * (1.0 - inst.mu * inst.mu);
    if stretch >= 1.0 {
        return Err(contract(format!(
            "margin slack: (1+alpha)²·(1−mu²) = {stretch} must stay below 1; \
             lower halfspace_alpha or raise mu"
        )));
    }
    let floor = (ctx.cfg.halfspace_sample_const
        / (inst.mu * inst.mu * inst.target_excess * inst.target_excess))
        .ceil() as usize;
    if inst.samples.len() < floor {
        return Err(contract(format!(
            "sample floor: need at least {floor} samples at margin {} and excess {}, got {}",
            inst.mu,
            inst.target_excess,
            inst.samples.len()
        )));
    }
    let dp = halfspace_projection_dim(inst.mu, inst.target_excess, inst.budget.beta, &ctx.cfg);
    let mode = if inst.budget.is_pure() { Mode::Pure } else { Mode::Approx };

    ctx.ledger.push_scope("halfspace");
    let out = project_and_search(inst, alpha, dp, mode, ctx);
    ctx.ledger.pop_scope();
    out
}

fn project_and_search(
    inst: &MarginInstance,
    alpha: f64,
    dp: usize,
    mode: Mode,
    ctx: &mut Ctx,
) -> Result<Vec<f64>> {
    let proj = sign_matrix(dp, inst.dimension, &mut ctx.rng);
    let mut images = Vec::with_capacity(inst.samples.len());
    for (x, y) in &inst.samples {
        if let Some(z) = halfspace_embed(&proj, x, *y) {
            images.push(z);
        }
    }
    let r = (1.0 - inst.mu * inst.mu).sqrt();
    let ball = densestball::BallInstance::with_dimension(dp, images, r, alpha, inst.budget)?;
    let dense = densestball::densest_ball_low_dim(&ball, mode, ctx)?;
    let dir = unit_or_axis(&dense.center, dp);
    let back = geom::apply_rows_transpose(&proj, &dir);
    Ok(unit_or_axis(&back, inst.dimension))
}

// --- tests -----------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    fn pure(eps: f64, beta: f64) -> PrivacyBudget {
        PrivacyBudget::pure(eps, beta).unwrap()
    }

    fn count_within(points: &[Vec<f64>], center: &[f64], radius: f64) -> usize {
        points.iter().filter(|x| geom::dist(x, center) <= radius + SLACK).count()
    }

    #[test]
    fn one_cluster_instance_rejects_bad_parameters() {
        let b = pure(1.0, 0.1);
        let pts = vec![vec![0.1, 0.0], vec![0.0, 0.2]];
        assert!(OneClusterInstance::new(vec![], 0, 0.01, 0.01, 1.0, 1.5, b).is_err());
        assert!(OneClusterInstance::new(pts.clone(), 3, 0.01, 0.01, 1.0, 1.5, b).is_err());
        assert!(OneClusterInstance::new(pts.clone(), 1, 0.0, 0.01, 1.0, 1.5, b).is_err());
        assert!(OneClusterInstance::new(pts.clone(), 1, 0.01, 0.0, 1.0, 1.5, b).is_err());
        assert!(OneClusterInstance::new(pts.clone(), 1, 0.01, 0.5, 0.2, 1.5, b).is_err());
        assert!(OneClusterInstance::new(pts.clone(), 1, 0.01, 0.01, 1.2, 1.5, b).is_err());
        assert!(OneClusterInstance::new(pts.clone(), 1, 0.01, 0.01, 1.0, 1.0, b).is_err());
        assert!(OneClusterInstance::new(pts.clone(), 1, 0.01, 0.01, 1.0, 2.5, b).is_err());
        assert!(OneClusterInstance::new(pts.clone(), 1, 0.01, 0.01, 1.0, 2.0, b).is_err());
        assert!(OneClusterInstance::new(vec![vec![1.3, 0.0]], 1, 0.01, 0.01, 1.0, 1.5, b).is_err());
        assert!(
            OneClusterInstance::new(vec![vec![0.1], vec![0.1, 0.2]], 1, 0.01, 0.01, 1.0, 1.5, b)
                .is_err()
        );
        assert!(OneClusterInstance::new(pts, 2, 0.01, 0.01, 1.0, 1.5, b).is_ok());
    }

    #[test]
    fn schedule_length_matches_the_log_formula() {
        let grid: [(f64, f64, f64); 6] = [
            (0.1, 1.0, 1.5),
            (0.02, 0.5, 1.25),
            (2f64.powi(-10), 1.0, 1.8),
            (0.3, 0.3, 1.1),
            (0.5, 0.9, 2.0),
            (0.25, 1.0, 2.0),
        ];
        for (rl, rh, w) in grid {
            let expect = ((rh / rl).ln() / w.ln() + 1e-9).floor() as usize + 1;
            assert_eq!(one_cluster_schedule_len(rl, rh, w), expect, "rl={rl} rh={rh} w={w}");
        }
    }

    #[test]
    fn one_cluster_identical_points_lands_at_the_floor() {
        let kappa = 2f64.powi(-10);
        let q = vec![0.3, -0.2];
        let points: Vec<Vec<f64>> = (0..60).map(|_| q.clone()).collect();
        let budget = pure(1000.0, 0.05);
        let mut hits = 0;
        for seed in 0..100 {
            let inst =
                OneClusterInstance::full_range(points.clone(), 60, kappa, 1.8, budget).unwrap();
            let mut ctx = Ctx::new(seed);
            let bar = inst.target_count as f64 - one_cluster_threshold(&inst, &ctx.cfg);
            let got = one_cluster(&inst, &mut ctx).unwrap();
            if let Some((center, radius)) = got {
                let inside = count_within(&points, &center, radius);
                if radius <= 1.8 * 1.8 * kappa && (inside as f64) >= bar {
                    hits += 1;
                }
            }
        }
        assert!(hits >= 95, "only {hits}/100 runs found a floor-scale certified ball");
    }

    #[test]
    fn one_cluster_zero_target_never_returns_bottom() {
        let budget = pure(2.0, 1e-8);
        for seed in 0..50 {
            let mut ctx = Ctx::new(seed);
            let points: Vec<Vec<f64>> =
                (0..24).map(|_| geom::uniform_in_ball(2, 0.9, &mut ctx.rng)).collect();
            let inst = OneClusterInstance::new(points, 0, 0.01, 0.05, 0.8, 1.6, budget).unwrap();
            let got = one_cluster(&inst, &mut ctx).unwrap();
            assert!(got.is_some(), "target 0 must always be satisfiable (seed {seed})");
        }
    }

    #[test]
    fn one_cluster_planted_cluster_certified_radius() {
        let q = [0.25, -0.4];
        let budget = pure(60.0, 0.05);
        let mut hits = 0;
        for seed in 0..100 {
            let mut data_rng = rng(9_000 + seed);
            let mut points: Vec<Vec<f64>> = (0..500)
                .map(|_| {
                    let off = geom::uniform_in_ball(2, 0.1, &mut data_rng);
                    vec![q[0] + off[0], q[1] + off[1]]
                })
                .collect();
            points.extend((0..500).map(|_| geom::uniform_in_ball(2, 1.0, &mut data_rng)));
            let inst =
                OneClusterInstance::new(points.clone(), 500, 0.01, 0.02, 0.5, 1.25, budget)
                    .unwrap();
            let mut ctx = Ctx::new(seed);
            let bar = 500.0 - one_cluster_threshold(&inst, &ctx.cfg);
            if let Some((center, radius)) = one_cluster(&inst, &mut ctx).unwrap() {
                let inside = count_within(&points, &center, radius);
                if radius <= 1.25 * 1.25 * 0.1 + SLACK && (inside as f64) >= bar {
                    hits += 1;
                }
            }
        }
        assert!(hits >= 90, "only {hits}/100 planted runs met the radius and count contract");
    }

    #[test]
    fn one_cluster_budget_ledger_is_exact() {
        let q = vec![0.1, 0.05];
        let points: Vec<Vec<f64>> = (0..40).map(|_| q.clone()).collect();
        for budget in [pure(80.0, 0.1), PrivacyBudget::approx(80.0, 1e-6, 0.1).unwrap()] {
            let inst =
                OneClusterInstance::new(points.clone(), 40, 0.05, 0.05, 0.4, 1.6, budget).unwrap();
            let mut ctx = Ctx::new(7);
            let got = one_cluster(&inst, &mut ctx).unwrap();
            assert!(got.is_some());
            let (eps, delta) = ctx.ledger.consumed();
            assert!((eps - 80.0).abs() < 1e-9, "consumed eps {eps}");
            assert!((delta - budget.delta).abs() < 1e-12, "consumed delta {delta}");
        }
        // An immediate bottom spends only the first level's share: one probe
        // and one count, each at eps/(2·units).
        let mut ctx = Ctx::new(11);
        let spread: Vec<Vec<f64>> =
            (0..30).map(|_| geom::uniform_in_ball(2, 0.9, &mut ctx.rng)).collect();
        let inst =
            OneClusterInstance::new(spread, 30, 0.02, 0.02, 0.04, 1.6, pure(400.0, 0.1)).unwrap();
        let got = one_cluster(&inst, &mut ctx).unwrap();
        assert!(got.is_none());
        let (eps, _) = ctx.ledger.consumed();
        assert!((eps - 100.0).abs() < 1e-9, "early bottom consumed eps {eps}");
    }

    #[test]
    fn aggregate_block_count_is_the_ninth_fraction() {
        assert_eq!(aggregate_block_count(1000, 10), 11);
        assert_eq!(aggregate_block_count(89, 10), 0);
        assert_eq!(aggregate_block_count(90, 10), 1);
        assert_eq!(aggregate_block_count(599, 3), 22);
        assert_eq!(aggregate_block_count(0, 5), 0);
        assert_eq!(aggregate_block_count(50, 0), 0);
    }

    #[test]
    fn sample_aggregate_rejects_each_precondition_violation() {
        let search = AggregateSearch::full_range(0.05, 1.5);
        let ok = |_: &[usize]| -> Result<Vec<f64>> { Ok(vec![0.0]) };
        let b = pure(0.01, 0.2);
        let mut ctx = Ctx::new(1);
        let mut err = |m: usize, zeta: f64, budget: PrivacyBudget, n: usize| {
            let query = StablePointQuery { evaluator: &ok, m, zeta, budget };
            sample_aggregate(&query, n, &search, &mut ctx).unwrap_err().to_string()
        };
        assert!(err(0, 0.9, b, 100).contains("block size"));
        assert!(err(200, 0.9, b, 100).contains("block size"));
        assert!(err(1, 0.0, b, 100).contains("stability probability"));
        assert!(err(1, 0.9, pure(0.5, 0.2), 100).contains("zeta/72"));
        let leaky = PrivacyBudget::approx(0.01, 1e-3, 0.2).unwrap();
        assert!(err(1, 0.9, leaky, 100).contains("delta"));
        assert!(err(1, 0.9, b, 5).contains("floor"));
        assert!(err(2, 0.9, b, 17).contains("n >= 9m"));
    }

    #[test]
    fn sample_aggregate_constant_evaluator_recovers_the_constant() {
        let eval = |_: &[usize]| -> Result<Vec<f64>> { Ok(vec![0.3]) };
        let search = AggregateSearch { kappa: 0.05, r_low: 0.1, r_high: 0.4, w: 2.0 };
        let budget = pure(0.0125, 0.2);
        for seed in 0..3 {
            let query = StablePointQuery { evaluator: &eval, m: 1, zeta: 0.9, budget };
            let mut ctx = Ctx::new(seed);
            let got = sample_aggregate(&query, 180_000, &search, &mut ctx).unwrap();
            let center = got.expect("constant evaluations form a perfect cluster");
            assert!((center[0] - 0.3).abs() <= 0.2 + SLACK, "center {center:?}");
            let (eps, _) = ctx.ledger.consumed();
            assert!((eps - 0.0125).abs() < 1e-12, "consumed {eps}");
        }
    }

    #[test]
    fn sample_aggregate_median_evaluator_tracks_the_stable_point() {
        let mut data_rng = rng(424_242);
        let n = 2_700_000usize;
        let data: Vec<f64> =
            (0..n).map(|_| 0.35 + 0.2 * (data_rng.random::<f64>() - 0.5)).collect();
        let eval = |idx: &[usize]| -> Result<Vec<f64>> {
            let mut vals: Vec<f64> = idx.iter().map(|&i| data[i]).collect();
            vals.sort_by(f64::total_cmp);
            Ok(vec![vals[vals.len() / 2]])
        };
        let search = AggregateSearch { kappa: 0.05, r_low: 0.1, r_high: 0.1, w: 1.25 };
        let budget = pure(0.0125, 0.2);
        // The empirical stable point is the data midpoint 0.35: the
        // 90th-percentile deviation of a median-of-5 over U(0.35 ± 0.1) is
        // about 0.062, so a ζ = 0.9 stable radius of 0.065 has slack and the
        // contract allows landing within (1 + (w−1)) = w times it.
        let mut hits = 0;
        for seed in 0..100 {
            let query = StablePointQuery { evaluator: &eval, m: 5, zeta: 0.9, budget };
            let mut ctx = Ctx::new(seed);
            if let Some(center) = sample_aggregate(&query, n, &search, &mut ctx).unwrap() {
                if (center[0] - 0.35).abs() <= 1.25 * 0.065 {
                    hits += 1;
                }
            }
        }
        assert!(hits >= 90, "only {hits}/100 medians landed near the stable point");
    }

    #[test]
    fn margin_instance_rejects_bad_samples() {
        let b = pure(1.0, 0.1);
        assert!(MarginInstance::new(vec![], 0.5, 0.5, b).is_err());
        assert!(MarginInstance::new(vec![(vec![0.0, 0.0], 1.0)], 0.5, 0.5, b).is_err());
        assert!(MarginInstance::new(vec![(vec![0.5, 0.0], 0.5)], 0.5, 0.5, b).is_err());
        assert!(MarginInstance::new(vec![(vec![1.5, 0.0], 1.0)], 0.5, 0.5, b).is_err());
        assert!(MarginInstance::new(vec![(vec![0.5, 0.0], 1.0)], 1.0, 0.5, b).is_err());
        assert!(MarginInstance::new(vec![(vec![0.5, 0.0], 1.0)], 0.5, 0.0, b).is_err());
        assert!(
            MarginInstance::new(vec![(vec![0.5], 1.0), (vec![0.5, 0.0], 1.0)], 0.5, 0.5, b)
                .is_err()
        );
        assert!(MarginInstance::new(vec![(vec![0.5, 0.0], -1.0)], 0.5, 0.5, b).is_ok());
    }

    #[test]
    fn cap_membership_matches_margin_threshold() {
        // ⟨u, z⟩ ≥ μ exactly when ‖z − μu‖ ≤ √(1−μ²) for unit u and z: both
        // sides restate ‖z − μu‖² = 1 − 2μ⟨u, z⟩ + μ².
        let mut r = rng(31);
        let mu = 0.37f64;
        let cap = (1.0 - mu * mu).sqrt();
        let unit = |r: &mut ChaCha20Rng| {
            let v = geom::uniform_in_ball(6, 1.0, r);
            geom::scale(&v, 1.0 / geom::norm(&v))
        };
        for _ in 0..10_000 {
            let u = unit(&mut r);
            let z = unit(&mut r);
            let inner = geom::dot(&u, &z);
            let moved: Vec<f64> = z.iter().zip(&u).map(|(a, b)| a - mu * b).collect();
            if (inner - mu).abs() > 1e-9 {
                assert_eq!(inner >= mu, geom::norm(&moved) <= cap);
            }
        }
    }

    #[test]
    fn embedding_is_odd_in_the_label_and_unit_norm() {
        let mut r = rng(77);
        let proj = sign_matrix(3, 5, &mut r);
        for _ in 0..200 {
            let x = geom::uniform_in_ball(5, 1.0, &mut r);
            let (Some(zp), Some(zm)) =
                (halfspace_embed(&proj, &x, 1.0), halfspace_embed(&proj, &x, -1.0))
            else {
                continue;
            };
            assert!((geom::norm(&zp) - 1.0).abs() < 1e-9);
            for (a, b) in zp.iter().zip(&zm) {
                assert_eq!(*a, -*b);
            }
        }
    }

    #[test]
    fn projection_dim_follows_the_config_constant() {
        let mut cfg = Tunables::default();
        cfg.halfspace_dim_const = 0.14;
        let expect = (0.14 * (100.0f64 / (0.5 * 0.2)).ln() / 0.25).ceil() as usize;
        assert_eq!(halfspace_projection_dim(0.5, 0.5, 0.2, &cfg), expect);
        assert_eq!(expect, 4);
        cfg.halfspace_dim_const = 1e-9;
        assert_eq!(halfspace_projection_dim(0.5, 0.5, 0.2, &cfg), 1);
    }

    #[test]
    fn halfspace_learns_aligned_separator() {
        let mut cfg = Tunables::default();
        cfg.halfspace_dim_const = 0.14; // projection dim 4 at μ = 0.5, t = 0.5, β = 0.2
        cfg.halfspace_alpha = 0.15;
        let mu = 0.5f64;
        let mu_eff = (1.0 - (1.0 - mu * mu) * 1.15f64.powi(2)).sqrt(); // ≈ 0.09
        for seed in 0..5 {
            let mut data_rng = rng(5_100 + seed);
            let samples: Vec<(Vec<f64>, f64)> = (0..250)
                .map(|i| {
                    let y = if i % 2 == 0 { 1.0 } else { -1.0 };
                    let off = geom::uniform_in_ball(2, 0.02, &mut data_rng);
                    let raw = [1.0 + off[0], off[1]];
                    let x = geom::scale(&raw, 0.95 * y / geom::norm(&raw));
                    (x, y)
                })
                .collect();
            let inst = MarginInstance::new(samples.clone(), mu, 0.5, pure(400.0, 0.2)).unwrap();
            let mut ctx = Ctx::with(cfg.clone(), seed);
            let u = learn_halfspace(&inst, &mut ctx).unwrap();
            assert!((geom::norm(&u) - 1.0).abs() < 1e-9);
            let bad = samples
                .iter()
                .filter(|(x, y)| y * geom::dot(&u, x) / geom::norm(x) <= mu_eff)
                .count();
            assert_eq!(bad, 0, "seed {seed}: {bad}/250 samples below the shifted margin");
        }
    }

    #[test]
    fn halfspace_generalizes_to_holdout() {
        let mut cfg = Tunables::default();
        cfg.halfspace_dim_const = 0.038; // projection dim 3 at μ = 0.3, t = 0.3, β = 0.3
        cfg.halfspace_alpha = 0.045;
        let mu = 0.3;
        let dir = {
            let v = [1.0, 1.0, 1.0];
            geom::scale(&v, 1.0 / geom::norm(&v))
        };
        let mut hits = 0;
        for seed in 0..100 {
            let mut data_rng = rng(7_300 + seed);
            let draw = |rng: &mut ChaCha20Rng| -> (Vec<f64>, f64) {
                let y = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let m = 0.8 + 0.17 * rng.random::<f64>();
                let perp = loop {
                    let c = geom::uniform_in_ball(3, 1.0, rng);
                    let along = geom::dot(&c, &dir);
                    let p: Vec<f64> = c.iter().zip(&dir).map(|(a, b)| a - along * b).collect();
                    if geom::norm(&p) > 1e-6 {
                        break geom::scale(&p, 1.0 / geom::norm(&p));
                    }
                };
                let x: Vec<f64> = dir
                    .iter()
                    .zip(&perp)
                    .map(|(a, b)| 0.95 * y * (m * a + (1.0 - m * m).sqrt() * b))
                    .collect();
                (x, y)
            };
            let train: Vec<_> = (0..100).map(|_| draw(&mut data_rng)).collect();
            let hold: Vec<_> = (0..300).map(|_| draw(&mut data_rng)).collect();
            let inst = MarginInstance::new(train, mu, 0.3, pure(300.0, 0.3)).unwrap();
            let mut ctx = Ctx::with(cfg.clone(), seed);
            let u = learn_halfspace(&inst, &mut ctx).unwrap();
            let wrong = hold.iter().filter(|(x, y)| y * geom::dot(&u, x) <= 0.0).count();
            if wrong <= 30 {
                hits += 1;
            }
        }
        assert!(hits >= 90, "only {hits}/100 runs kept holdout error at or under 10%");
    }

    #[test]
    fn apps_are_deterministic_for_a_fixed_seed() {
        let q = vec![0.2, 0.1];
        let points: Vec<Vec<f64>> = (0..30).map(|_| q.clone()).collect();
        let inst =
            OneClusterInstance::new(points, 30, 0.01, 0.05, 0.4, 1.5, pure(200.0, 0.1)).unwrap();
        let run = |seed| {
            let mut ctx = Ctx::new(seed);
            one_cluster(&inst, &mut ctx).unwrap()
        };
        assert_eq!(run(5), run(5));

        let eval = |_: &[usize]| -> Result<Vec<f64>> { Ok(vec![0.3]) };
        let search = AggregateSearch { kappa: 0.05, r_low: 0.1, r_high: 0.4, w: 2.0 };
        let run_agg = |seed| {
            let query =
                StablePointQuery { evaluator: &eval, m: 1, zeta: 0.9, budget: pure(0.0125, 0.2) };
            let mut ctx = Ctx::new(seed);
            sample_aggregate(&query, 180, &search, &mut ctx).unwrap()
        };
        assert_eq!(run_agg(9), run_agg(9));

        let mut cfg = Tunables::default();
        cfg.halfspace_dim_const = 0.14;
        cfg.halfspace_alpha = 0.15;
        let mut data_rng = rng(61);
        let samples: Vec<(Vec<f64>, f64)> = (0..60)
            .map(|i| {
                let y = if i % 2 == 0 { 1.0 } else { -1.0 };
                let off = geom::uniform_in_ball(2, 0.02, &mut data_rng);
                let raw = [1.0 + off[0], off[1]];
                (geom::scale(&raw, 0.95 * y / geom::norm(&raw)), y)
            })
            .collect();
        let inst = MarginInstance::new(samples, 0.5, 0.5, pure(400.0, 0.2)).unwrap();
        let run_half = |seed| {
            let mut ctx = Ctx::with(cfg.clone(), seed);
            learn_halfspace(&inst, &mut ctx).unwrap()
        };
        assert_eq!(run_half(3), run_half(3));
    }
}
