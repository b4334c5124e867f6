//! Dynamic exact closest-pair threshold tracking over integer grids.
//!
//! Maintains, under point insertions and deletions, whether any two points
//! of the current multiset lie within a fixed squared Euclidean distance
//! `ξ`. Points are bucketed into the cells of a scaled integer grid whose
//! covering radius is `√ξ/2`, so a cell holding two points certifies a
//! close pair outright, and any surviving close pair must join two
//! singleton cells whose centers lie within `2√ξ` of each other. The
//! structure keeps one record per occupied cell — a member count, a
//! per-coordinate XOR of the members (which *is* the member whenever the
//! cell is a singleton), and a count of nearby singleton partners — plus
//! two global tallies from which queries answer in constant time.
//!
//! Every quantity is a pure function of the current multiset: the cell map
//! is a canonical-shape crit-bit trie and all arithmetic in the update
//! path is integer-exact, so equal sets serialize to identical bytes no
//! matter the operation history.

use crate::error::{capacity, contract, Result};
use crate::trie::CritBitMap;

// --- configuration ---------------------------------------------------------

/// Maximum supported dimension; neighbor enumeration grows exponentially in
/// it.
const MAX_DIMENSION: usize = 8;
/// Maximum coordinate bit width keeping every comparison inside `u128`.
const MAX_COORD_BITS: u32 = 60;

/// Instance parameters for the tracker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CPConfig {
    /// Point dimension, between 1 and 8.
    pub d: usize,
    /// Coordinates range over the integers in `[0, 2^l_bits]`, inclusive.
    pub l_bits: u32,
    /// Squared-distance threshold defining a close pair.
    pub xi: u128,
}

impl CPConfig {
    pub fn new(d: usize, l_bits: u32, xi: u128) -> Result<CPConfig> {
        if d == 0 {
            return Err(contract("dimension must be at least 1"));
        }
        if d > MAX_DIMENSION {
            return Err(capacity(format!(
                "dimension {d} exceeds the supported maximum of {MAX_DIMENSION}"
            )));
        }
        if l_bits > MAX_COORD_BITS {
            return Err(capacity(format!(
                "coordinate width {l_bits} exceeds the supported maximum of {MAX_COORD_BITS} bits"
            )));
        }
        Ok(CPConfig { d, l_bits, xi })
    }

    /// Largest admissible coordinate value, `2^l_bits`.
    pub fn max_coord(&self) -> u64 {
        1u64 << self.l_bits
    }
}

// --- exact cell geometry ---------------------------------------------------

/// Whether `t² · xi ≥ u`, exactly. The product may exceed 128 bits only
/// when it certainly dominates `u` (which stays below `2^126`), so an
/// overflowing multiplication decides the comparison.
fn scaled_square_reaches(t: u128, xi: u128, u: u128) -> bool {
    (t * t).checked_mul(xi).is_none_or(|v| v >= u)
}

/// Index of the nearest cell center along one axis: the smallest `m ≥ 0`
/// with `4d·x² ≤ (2m+1)²·ξ`, i.e. `x` rounded to the nearest multiple of
/// `√(ξ/d)` with half-way ties taken downward — integer-exact throughout.
fn nearest_cell_index(x: u64, d: usize, xi: u128) -> u64 {
    let u = 4 * d as u128 * x as u128 * x as u128;
    if u == 0 {
        return 0;
    }
    // Seed an odd candidate for 2m+1 near √(u/ξ), then walk to the exact
    // boundary; the seed is within a constant of the target, so both walks
    // terminate after O(1) probes.
    let mut t = (u / xi).isqrt() | 1;
    while t >= 3 && scaled_square_reaches(t - 2, xi, u) {
        t -= 2;
    }
    while !scaled_square_reaches(t, xi, u) {
        t += 2;
    }
    ((t - 1) / 2) as u64
}

/// Squared Euclidean distance between integer tuples, compared to `bound`
/// with early exit. Exact: each term stays below `2^124` and at most eight
/// accumulate before the comparison cuts off.
fn within_squared(a: &[u64], b: &[u64], bound: u128) -> bool {
    let mut total: u128 = 0;
    for (p, q) in a.iter().zip(b) {
        let diff = p.abs_diff(*q) as u128;
        total += diff * diff;
        if total > bound {
            return false;
        }
    }
    true
}

/// Visits every integer offset vector `δ` with `Σ δ_i² ≤ reach` applied to
/// `cell`, skipping candidates with a negative coordinate. Includes the
/// zero offset (the cell itself); callers filter it.
fn visit_reach_offsets(cell: &[u64], idx: usize, remaining: i128, current: &mut Vec<u64>, f: &mut impl FnMut(&[u64])) {
    if idx == cell.len() {
        f(current);
        return;
    }
    let radius = (remaining as u128).isqrt() as i128;
    for delta in -radius..=radius {
        let coord = cell[idx] as i128 + delta;
        if coord < 0 {
            continue;
        }
        current.push(coord as u64);
        visit_reach_offsets(cell, idx + 1, remaining - delta * delta, current, f);
        current.pop();
    }
}

// --- state -----------------------------------------------------------------

/// Per-cell summary maintained by the tracker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellRecord {
    /// Number of current points bucketed into the cell.
    pub n_count: u64,
    /// When the cell is a singleton: how many other singleton cells hold a
    /// point within the threshold. Zero otherwise.
    pub p_leq_xi: u64,
    /// Per-coordinate XOR over the member multiset; equals the sole member
    /// when `n_count == 1`.
    pub x_xor: Vec<u64>,
}

/// History-independent closest-pair tracker.
#[derive(Debug, Clone)]
pub struct CPState {
    cfg: CPConfig,
    cells: CritBitMap<CellRecord>,
    members: CritBitMap<u64>,
    q_marked: u64,
    p_total: u64,
}

impl CPState {
    pub fn new(cfg: CPConfig) -> CPState {
        CPState { cfg, cells: CritBitMap::new(), members: CritBitMap::new(), q_marked: 0, p_total: 0 }
    }

    pub fn config(&self) -> &CPConfig {
        &self.cfg
    }

    /// Number of cells holding at least two points.
    pub fn q_marked(&self) -> u64 {
        self.q_marked
    }

    /// Number of unordered pairs of singleton cells whose points lie within
    /// the threshold.
    pub fn p_total(&self) -> u64 {
        self.p_total
    }

    /// Whether any two current points are within squared distance `ξ`.
    pub fn lookup(&self) -> bool {
        self.q_marked >= 1 || self.p_total >= 1
    }

    pub fn insert(&mut self, x: &[u64]) -> Result<()> {
        self.validate_point(x)?;
        match self.members.get_mut(x) {
            Some(mult) => *mult += 1,
            None => {
                self.members.insert(x, 1);
            }
        }
        let cell = self.cell_of(x);
        self.update_cell(cell, x, true);
        Ok(())
    }

    pub fn delete(&mut self, x: &[u64]) -> Result<()> {
        self.validate_point(x)?;
        match self.members.get_mut(x) {
            Some(mult) if *mult > 1 => *mult -= 1,
            Some(_) => {
                self.members.remove(x);
            }
            None => return Err(contract("delete of a point absent from the set")),
        }
        let cell = self.cell_of(x);
        self.update_cell(cell, x, false);
        Ok(())
    }

    /// Canonical byte encoding; equal configurations and point multisets
    /// produce identical bytes regardless of operation history.
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"CPST");
        out.push(1u8);
        out.push(self.cfg.d as u8);
        out.push(self.cfg.l_bits as u8);
        out.extend_from_slice(&self.cfg.xi.to_be_bytes());
        out.extend_from_slice(&self.q_marked.to_be_bytes());
        out.extend_from_slice(&self.p_total.to_be_bytes());
        out.extend_from_slice(&(self.cells.len() as u64).to_be_bytes());
        for (key, rec) in self.cells.iter() {
            for word in key {
                out.extend_from_slice(&word.to_be_bytes());
            }
            out.extend_from_slice(&rec.n_count.to_be_bytes());
            out.extend_from_slice(&rec.p_leq_xi.to_be_bytes());
            for word in &rec.x_xor {
                out.extend_from_slice(&word.to_be_bytes());
            }
        }
        out.extend_from_slice(&(self.members.len() as u64).to_be_bytes());
        for (coords, mult) in self.members.iter() {
            for word in coords {
                out.extend_from_slice(&word.to_be_bytes());
            }
            out.extend_from_slice(&mult.to_be_bytes());
        }
        out
    }

    // --- internals ---------------------------------------------------------

    fn validate_point(&self, x: &[u64]) -> Result<()> {
        if x.len() != self.cfg.d {
            return Err(contract(format!(
                "point has {} coordinates, expected {}",
                x.len(),
                self.cfg.d
            )));
        }
        let bound = self.cfg.max_coord();
        if x.iter().any(|&c| c > bound) {
            return Err(contract(format!("coordinate exceeds the grid bound {bound}")));
        }
        Ok(())
    }

    /// Cell key of a point: nearest grid index per coordinate, or the raw
    /// coordinates when `ξ = 0` (cells degenerate to exact duplicates).
    fn cell_of(&self, x: &[u64]) -> Vec<u64> {
        if self.cfg.xi == 0 {
            return x.to_vec();
        }
        x.iter().map(|&c| nearest_cell_index(c, self.cfg.d, self.cfg.xi)).collect()
    }

    /// Singleton cells other than `cell` whose center lies within `2√ξ`,
    /// i.e. whose key differs by squared norm at most `4d` — the only cells
    /// that can host the partner of a close cross-cell pair. Returns
    /// `(key, member)` pairs; scans whichever is smaller of the occupied
    /// cell list and the offset ball around `cell`.
    fn singleton_neighbors(&self, cell: &[u64]) -> Vec<(Vec<u64>, Vec<u64>)> {
        let reach = 4 * self.cfg.d as u128;
        let side = 2 * (reach.isqrt() as u64) + 1;
        let ball_bound = side.pow(self.cfg.d as u32);
        let mut found = Vec::new();
        if (self.cells.len() as u64) < ball_bound {
            for (key, rec) in self.cells.iter() {
                if rec.n_count == 1 && key != cell && within_squared(key, cell, reach) {
                    found.push((key.to_vec(), rec.x_xor.clone()));
                }
            }
        } else {
            let mut current = Vec::with_capacity(cell.len());
            visit_reach_offsets(cell, 0, reach as i128, &mut current, &mut |candidate| {
                if candidate != cell {
                    if let Some(rec) = self.cells.get(candidate) {
                        if rec.n_count == 1 {
                            found.push((candidate.to_vec(), rec.x_xor.clone()));
                        }
                    }
                }
            });
        }
        found
    }

    /// Applies one membership change to `cell` (the arrival or departure of
    /// `x`), keeping every counter exact. Pair bookkeeping only moves when
    /// the cell enters or leaves singleton status; each affected partner
    /// record and the global tally shift by the difference between the new
    /// and old pairing indicators.
    fn update_cell(&mut self, cell: Vec<u64>, x: &[u64], inserting: bool) {
        let (n_old, xor_old) = match self.cells.get(&cell) {
            Some(rec) => (rec.n_count, rec.x_xor.clone()),
            None => (0, vec![0u64; self.cfg.d]),
        };
        let n_new = if inserting { n_old + 1 } else { n_old - 1 };
        let mut xor_new = xor_old.clone();
        for (word, xw) in xor_new.iter_mut().zip(x) {
            *word ^= xw;
        }
        let old_single = (n_old == 1).then_some(&xor_old);
        let new_single = (n_new == 1).then_some(&xor_new);
        let mut near_new = 0u64;
        if old_single.is_some() || new_single.is_some() {
            for (key, partner) in self.singleton_neighbors(&cell) {
                let was_paired =
                    old_single.is_some_and(|p| within_squared(p, &partner, self.cfg.xi));
                let is_paired =
                    new_single.is_some_and(|p| within_squared(p, &partner, self.cfg.xi));
                near_new += is_paired as u64;
                if is_paired != was_paired {
                    let rec = self.cells.get_mut(&key).expect("partner record exists");
                    if is_paired {
                        rec.p_leq_xi += 1;
                        self.p_total += 1;
                    } else {
                        rec.p_leq_xi -= 1;
                        self.p_total -= 1;
                    }
                }
            }
        }
        self.q_marked += (n_new >= 2) as u64;
        self.q_marked -= (n_old >= 2) as u64;
        if n_new == 0 {
            self.cells.remove(&cell);
        } else {
            match self.cells.get_mut(&cell) {
                Some(rec) => {
                    rec.n_count = n_new;
                    rec.p_leq_xi = near_new;
                    rec.x_xor = xor_new;
                }
                None => {
                    self.cells.insert(
                        &cell,
                        CellRecord { n_count: n_new, p_leq_xi: near_new, x_xor: xor_new },
                    );
                }
            }
        }
    }
}

// --- tests -----------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn dist_sq(a: &[u64], b: &[u64]) -> u128 {
        a.iter().zip(b).map(|(p, q)| {
            let d = p.abs_diff(*q) as u128;
            d * d
        }).sum()
    }

    fn brute_force_pair(live: &[Vec<u64>], xi: u128) -> bool {
        for i in 0..live.len() {
            for j in i + 1..live.len() {
                if dist_sq(&live[i], &live[j]) <= xi {
                    return true;
                }
            }
        }
        false
    }

    /// Recomputes every maintained quantity from the raw member multiset
    /// and checks it against the live records and tallies.
    fn check_counters_from_scratch(state: &CPState) {
        let xi = state.cfg.xi;
        // Rebuild per-cell count and XOR from the membership multiset.
        let mut rebuilt: Vec<(Vec<u64>, u64, Vec<u64>)> = Vec::new();
        for (coords, mult) in state.members.iter() {
            let cell = state.cell_of(coords);
            match rebuilt.iter_mut().find(|(k, _, _)| *k == cell) {
                Some((_, count, xor)) => {
                    *count += mult;
                    if mult % 2 == 1 {
                        for (w, c) in xor.iter_mut().zip(coords) {
                            *w ^= c;
                        }
                    }
                }
                None => {
                    let xor = if mult % 2 == 1 { coords.to_vec() } else { vec![0; coords.len()] };
                    rebuilt.push((cell, *mult, xor));
                }
            }
        }
        assert_eq!(state.cells.len(), rebuilt.len());
        for (key, count, xor) in &rebuilt {
            let rec = state.cells.get(key).expect("rebuilt cell present");
            assert_eq!(rec.n_count, *count);
            assert_eq!(&rec.x_xor, xor);
        }
        let q: u64 = rebuilt.iter().filter(|(_, count, _)| *count >= 2).count() as u64;
        assert_eq!(state.q_marked, q, "marked-cell tally");
        let singles: Vec<&(Vec<u64>, u64, Vec<u64>)> =
            rebuilt.iter().filter(|(_, count, _)| *count == 1).collect();
        let mut p = 0u64;
        for i in 0..singles.len() {
            let mut near = 0u64;
            for j in 0..singles.len() {
                if i != j && dist_sq(&singles[i].2, &singles[j].2) <= xi {
                    near += 1;
                    if i < j {
                        p += 1;
                    }
                }
            }
            let rec = state.cells.get(&singles[i].0).unwrap();
            assert_eq!(rec.p_leq_xi, near, "per-cell partner count");
        }
        for (key, count, _) in &rebuilt {
            if *count >= 2 {
                assert_eq!(state.cells.get(key).unwrap().p_leq_xi, 0);
            }
        }
        assert_eq!(state.p_total, p, "pair tally");
    }

    #[test]
    fn config_rejects_out_of_band_instances() {
        assert!(matches!(CPConfig::new(0, 8, 4), Err(Error::Contract(_))));
        assert!(matches!(CPConfig::new(9, 8, 4), Err(Error::Capacity(_))));
        assert!(matches!(CPConfig::new(2, 61, 4), Err(Error::Capacity(_))));
        let cfg = CPConfig::new(8, 60, u128::MAX).unwrap();
        assert_eq!(cfg.max_coord(), 1u64 << 60);
    }

    #[test]
    fn one_point_reports_no_pair() {
        let mut state = CPState::new(CPConfig::new(2, 8, 25).unwrap());
        state.insert(&[7, 7]).unwrap();
        assert!(!state.lookup());
        assert_eq!(state.q_marked(), 0);
        assert_eq!(state.p_total(), 0);
    }

    #[test]
    fn cross_cell_pair_is_counted_once() {
        // Hand-worked geometry: ξ = 25 in the plane puts the grid pitch at
        // √12.5 ≈ 3.54, so (0,0) buckets to cell (0,0) and (3,4) to (1,1),
        // while their squared distance 25 sits exactly on the threshold.
        let mut state = CPState::new(CPConfig::new(2, 8, 25).unwrap());
        state.insert(&[0, 0]).unwrap();
        assert!(!state.lookup());
        state.insert(&[3, 4]).unwrap();
        assert_eq!(state.cells.get(&[0, 0]).unwrap().n_count, 1);
        assert_eq!(state.cells.get(&[1, 1]).unwrap().n_count, 1);
        assert_eq!(state.p_total(), 1);
        assert_eq!(state.q_marked(), 0);
        assert!(state.lookup());
        state.delete(&[3, 4]).unwrap();
        assert_eq!(state.p_total(), 0);
        assert!(!state.lookup());
    }

    #[test]
    fn duplicate_point_marks_its_cell() {
        let mut state = CPState::new(CPConfig::new(3, 8, 2).unwrap());
        state.insert(&[5, 6, 7]).unwrap();
        state.insert(&[5, 6, 7]).unwrap();
        assert_eq!(state.q_marked(), 1);
        assert_eq!(state.p_total(), 0);
        assert!(state.lookup());
        state.delete(&[5, 6, 7]).unwrap();
        assert_eq!(state.q_marked(), 0);
        assert!(!state.lookup());
    }

    #[test]
    fn empty_state_reports_no_pair() {
        let state = CPState::new(CPConfig::new(4, 8, 100).unwrap());
        assert!(!state.lookup());
    }

    #[test]
    fn zero_threshold_detects_only_exact_duplicates() {
        let mut state = CPState::new(CPConfig::new(2, 8, 0).unwrap());
        state.insert(&[1, 2]).unwrap();
        state.insert(&[1, 3]).unwrap();
        assert!(!state.lookup(), "adjacent but distinct points are not within 0");
        state.insert(&[1, 2]).unwrap();
        assert!(state.lookup());
        assert_eq!(state.q_marked(), 1);
        state.delete(&[1, 2]).unwrap();
        assert!(!state.lookup());
    }

    #[test]
    fn update_rejects_bad_points() {
        let mut state = CPState::new(CPConfig::new(2, 4, 4).unwrap());
        assert!(matches!(state.insert(&[1]), Err(Error::Contract(_))));
        assert!(matches!(state.insert(&[17, 0]), Err(Error::Contract(_))));
        assert!(state.insert(&[16, 0]).is_ok(), "the upper grid corner is inclusive");
        let err = state.delete(&[3, 3]).unwrap_err();
        assert!(err.to_string().contains("absent"), "got: {err}");
    }

    #[test]
    fn cell_rounding_breaks_halfway_ties_downward() {
        // d = 1, ξ = 4: pitch 2, so x = 1 sits exactly between centers 0
        // and 2 and must round down; x = 3 sits between 2 and 4 likewise.
        assert_eq!(nearest_cell_index(1, 1, 4), 0);
        assert_eq!(nearest_cell_index(3, 1, 4), 1);
        assert_eq!(nearest_cell_index(4, 1, 4), 2);
        // Against the straightforward floating-point rounding away from
        // exact halves.
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..20_000 {
            let d = rng.random_range(1..=8usize);
            let xi = rng.random_range(1..=1u128 << 40);
            let x = rng.random_range(0..=1u64 << 30);
            let m = nearest_cell_index(x, d, xi);
            let pitch = (xi as f64 / d as f64).sqrt();
            let ideal = x as f64 / pitch;
            assert!(
                (m as f64 - ideal).abs() <= 0.5 + 1e-6,
                "x={x} d={d} xi={xi}: index {m} vs ideal {ideal}"
            );
        }
    }

    #[test]
    fn neighbor_offsets_cover_the_reach_ball() {
        for d in 1..=3usize {
            let reach = (4 * d) as i128;
            let radius = (reach as u128).isqrt() as i64;
            let center = vec![10u64; d];
            let mut visited = Vec::new();
            let mut current = Vec::new();
            visit_reach_offsets(&center, 0, reach, &mut current, &mut |c| {
                visited.push(c.to_vec())
            });
            let mut expected = Vec::new();
            let span: Vec<i64> = (-radius..=radius).collect();
            let mut stack = vec![Vec::new()];
            for _ in 0..d {
                let mut next = Vec::new();
                for prefix in &stack {
                    for &delta in &span {
                        let mut p = prefix.clone();
                        p.push(delta);
                        next.push(p);
                    }
                }
                stack = next;
            }
            for offsets in stack {
                if offsets.iter().map(|&o| (o * o) as i128).sum::<i128>() <= reach {
                    expected.push(offsets.iter().map(|&o| (10 + o) as u64).collect::<Vec<_>>());
                }
            }
            visited.sort();
            expected.sort();
            assert_eq!(visited, expected, "d={d}");
        }
    }

    #[test]
    fn both_neighbor_routes_agree() {
        // Route A keeps the cell list small (full scan); route B pads the
        // map past the offset-ball bound so the same updates run through
        // the offset enumeration. The pad cells are far away and must not
        // disturb the pair ledger.
        let cfg = CPConfig::new(2, 10, 25).unwrap();
        let close_a = [100u64, 100];
        let close_b = [103u64, 104];
        let mut plain = CPState::new(cfg);
        plain.insert(&close_a).unwrap();
        plain.insert(&close_b).unwrap();
        assert_eq!(plain.p_total(), 1);
        assert_eq!(plain.q_marked(), 0);

        let mut padded = CPState::new(cfg);
        for i in 0..30u64 {
            padded.insert(&[600 + 10 * i, 800]).unwrap();
        }
        assert!(padded.cells.len() >= 25, "pad must push the map past the ball bound");
        assert!(!padded.lookup());
        padded.insert(&close_a).unwrap();
        padded.insert(&close_b).unwrap();
        assert_eq!(padded.p_total(), 1);
        assert_eq!(padded.q_marked(), 0);
        check_counters_from_scratch(&padded);
        padded.delete(&close_b).unwrap();
        assert_eq!(padded.p_total(), 0);
        assert!(!padded.lookup());
        check_counters_from_scratch(&padded);
    }

    #[test]
    fn replay_matches_brute_force_oracle() {
        // Anchored point clouds per dimension, sized so queries come out
        // both ways; every operation is cross-checked against an O(n²)
        // scan and the counters are rebuilt from scratch periodically.
        let plans: [(usize, u128, u64); 4] = [(1, 2, 9), (2, 16, 6), (3, 24, 5), (6, 54, 4)];
        for (d, xi, anchors) in plans {
            let cfg = CPConfig::new(d, 8, xi).unwrap();
            let mut state = CPState::new(cfg);
            let mut live: Vec<Vec<u64>> = Vec::new();
            let mut rng = ChaCha20Rng::seed_from_u64(7000 + d as u64);
            let mut saw = [0usize; 2];
            for step in 0..2000 {
                let deleting = live.len() > 8 || (!live.is_empty() && rng.random_range(0..100) < 40);
                if deleting {
                    let victim = live.swap_remove(rng.random_range(0..live.len()));
                    state.delete(&victim).unwrap();
                } else {
                    let point: Vec<u64> = if !live.is_empty() && rng.random_range(0..100) < 5 {
                        live[rng.random_range(0..live.len())].clone()
                    } else {
                        let anchor = 16 * rng.random_range(0..anchors);
                        (0..d).map(|_| anchor + rng.random_range(0..=8u64)).collect()
                    };
                    state.insert(&point).unwrap();
                    live.push(point);
                }
                let expected = brute_force_pair(&live, xi);
                assert_eq!(state.lookup(), expected, "d={d} step={step}");
                saw[expected as usize] += 1;
                if step % 50 == 0 {
                    check_counters_from_scratch(&state);
                }
            }
            check_counters_from_scratch(&state);
            assert!(saw[0] >= 50 && saw[1] >= 50, "d={d}: outcome mix {saw:?} too lopsided");
        }
    }

    #[test]
    fn serialization_is_a_pure_function_of_the_set() {
        let cfg = CPConfig::new(3, 8, 27).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let mut target: Vec<Vec<u64>> = (0..85)
            .map(|_| (0..3).map(|_| rng.random_range(0..=40u64)).collect())
            .collect();
        for _ in 0..15 {
            let copy = target[rng.random_range(0..85)].clone();
            target.push(copy);
        }
        // Decoys live in a disjoint coordinate band so their removal
        // restores the target multiset exactly.
        let decoys: Vec<Vec<u64>> = (0..40)
            .map(|_| (0..3).map(|_| rng.random_range(100..=140u64)).collect())
            .collect();

        let mut reference_state = CPState::new(cfg);
        let mut sorted = target.clone();
        sorted.sort();
        for p in &sorted {
            reference_state.insert(p).unwrap();
        }
        let reference = reference_state.serialize();

        for round in 0..50 {
            let mut ops: Vec<(bool, Vec<u64>)> = target.iter().map(|p| (false, p.clone())).collect();
            ops.extend(decoys.iter().map(|p| (true, p.clone())));
            for i in (1..ops.len()).rev() {
                ops.swap(i, rng.random_range(0..=i));
            }
            let mut state = CPState::new(cfg);
            let mut pending: Vec<Vec<u64>> = Vec::new();
            for (is_decoy, point) in ops {
                state.insert(&point).unwrap();
                if is_decoy {
                    pending.push(point);
                }
                // Interleave decoy removals with the remaining inserts.
                if !pending.is_empty() && rng.random_range(0..3) == 0 {
                    let victim = pending.swap_remove(rng.random_range(0..pending.len()));
                    state.delete(&victim).unwrap();
                }
            }
            for victim in pending {
                state.delete(&victim).unwrap();
            }
            assert_eq!(state.serialize(), reference, "round {round}");
        }

        // The encoding discriminates: moving one point changes the bytes.
        let mut perturbed = CPState::new(cfg);
        for p in &sorted[1..] {
            perturbed.insert(p).unwrap();
        }
        let mut moved = sorted[0].clone();
        moved[0] += 60;
        perturbed.insert(&moved).unwrap();
        assert_ne!(perturbed.serialize(), reference);
    }

    #[test]
    fn insert_delete_round_trip_restores_empty_bytes() {
        let cfg = CPConfig::new(2, 8, 9).unwrap();
        let fresh = CPState::new(cfg).serialize();
        let mut state = CPState::new(cfg);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let points: Vec<Vec<u64>> =
            (0..5).map(|_| (0..2).map(|_| rng.random_range(0..=50u64)).collect()).collect();
        for p in &points {
            state.insert(p).unwrap();
        }
        for p in points.iter().rev() {
            state.delete(p).unwrap();
        }
        assert_eq!(state.serialize(), fresh);
        assert!(!state.lookup());
    }
}
