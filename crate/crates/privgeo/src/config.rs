//! Tunable constants and the per-run context.
//!
//! Every constant the algorithms leave open as an order-of-magnitude choice
//! is collected in [`Tunables`] with its default, so callers (and the CLI's
//! `--const-*` flags) can override them without touching algorithm code.
//! [`Ctx`] bundles the tunables with the run's random stream and the privacy
//! ledger; one `Ctx` per pipeline invocation keeps runs reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::dpcore::BudgetLedger;

/// Dimension ceiling for direct lattice/cover machinery (enumeration cost is
/// exponential in the dimension past this point).
pub const LOW_DIM_LIMIT_DEFAULT: usize = 24;

/// Tunable constants with library defaults.
///
/// The dimension-reduction and block constants are deliberately conservative;
/// the `*_override` hooks exist because at bench scale the conservative
/// values put every instance on the `d' = d` branch. Overrides marked
/// "off-formula" trade the stated failure probabilities for speed and are
/// labeled as such in the CLI help.
#[derive(Debug, Clone)]
pub struct Tunables {
    /// Max dimension for the low-dim cover path (default 24).
    pub low_dim_limit: usize,
    /// Cap on the decoder offset-set size before a capacity error.
    pub decode_set_cap: usize,
    /// Multiplier in the projection-dimension formula of the high-dim
    /// dense-ball solver: d' = ceil(c · ln(nd/β)/α²).
    pub ball_dim_const: f64,
    /// Hard override of that projection dimension (off-formula).
    pub ball_dim_override: Option<usize>,
    /// Replace `ball_dim_const` with 20 (off-formula aggressive profile).
    pub aggressive_dims: bool,
    /// Block-size constant for the pure-mode block center solver.
    pub block_const_pure: f64,
    /// Block-size constant for the approximate-mode block center solver.
    pub block_const_apx: f64,
    /// Direct per-block dimension target (off-formula testing hook).
    pub block_dim_override: Option<usize>,
    /// Override the refinement grid parameter ζ (off-formula; the formula
    /// value is far below what any direct enumeration can realize).
    pub zeta_override: Option<f64>,
    /// Multiplier in the clustering projection dimension
    /// d' = ceil(c · p⁴ · ln(k/β)/α²).
    pub cluster_dim_const: f64,
    /// Hard override of the clustering projection dimension (off-formula).
    pub cluster_dim_override: Option<usize>,
    /// Cap on enumerated k-subsets in the discrete selection solver.
    pub em_tuple_cap: u128,
    /// Multiplier in the halfspace projection dimension
    /// d' = ceil(c · ln(1/(0.01 t β))/μ²).
    pub halfspace_dim_const: f64,
    /// Multiplier in the halfspace sample floor ceil(c/(μ²t²)).
    pub halfspace_sample_const: f64,
    /// Slack parameter for the halfspace dense-ball call; must satisfy
    /// (1+α)²(1−μ²) < 1.
    pub halfspace_alpha: f64,
    /// Coefficient c in the aggregation target count
    /// T = ceil(c · ζ · blocks).
    pub stability_fraction: f64,
}

impl Default for Tunables {
    fn default() -> Self {
        Tunables {
            low_dim_limit: LOW_DIM_LIMIT_DEFAULT,
            decode_set_cap: 10_000_000,
            ball_dim_const: 1e6,
            ball_dim_override: None,
            aggressive_dims: false,
            block_const_pure: 1e8,
            block_const_apx: 1e6,
            block_dim_override: None,
            zeta_override: None,
            cluster_dim_const: 50.0,
            cluster_dim_override: None,
            em_tuple_cap: 1_000_000,
            halfspace_dim_const: 0.05,
            halfspace_sample_const: 0.6,
            halfspace_alpha: 0.02,
            stability_fraction: 0.5,
        }
    }
}

impl Tunables {
    /// Effective projection constant for the high-dim dense-ball solver.
    pub fn effective_ball_dim_const(&self) -> f64 {
        if self.aggressive_dims {
            20.0
        } else {
            self.ball_dim_const
        }
    }
}

/// Per-run context: constants, the seeded random stream, and the privacy
/// ledger. All mechanism randomness is drawn sequentially from `rng`, so a
/// fixed seed reproduces a run bit for bit.
#[derive(Debug)]
pub struct Ctx {
    pub cfg: Tunables,
    pub rng: ChaCha20Rng,
    pub ledger: BudgetLedger,
}

impl Ctx {
    /// Context with default tunables.
    pub fn new(seed: u64) -> Self {
        Ctx::with(Tunables::default(), seed)
    }

    /// Context with explicit tunables.
    pub fn with(cfg: Tunables, seed: u64) -> Self {
        Ctx {
            cfg,
            rng: ChaCha20Rng::seed_from_u64(seed),
            ledger: BudgetLedger::default(),
        }
    }
}
