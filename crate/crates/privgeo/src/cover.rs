//! Lattice covers of the unit ball: construction at a chosen covering
//! radius, list-decoding of all cover points near a query, and a
//! near-uniform sampler over the cover.
//!
//! A cover at parameter Δ is the implicit set C_Δ = {v ∈ L : ‖v‖ ≤ R + Δ}
//! for a lattice L scaled so its covering radius equals Δ exactly, with R
//! the covered ball's radius (1 here). Every point of the ball is within Δ
//! of some cover element, and cover elements keep pairwise distance at
//! least the lattice minimum distance.

use std::collections::{BTreeSet, VecDeque};

use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::{capacity, contract, Result};
use crate::geom::{self, SLACK};
use crate::lattice::{
    closest_vector, lattice_params, relevant_vectors, Family, LatticeBackend, LatticePoint,
};

/// Default ceiling on the decoder's precomputed offset set.
pub const DECODE_SET_CAP: usize = 10_000_000;

/// A covering-radius-Δ lattice cover of the ball of radius `ball_radius`.
#[derive(Debug, Clone, Serialize)]
pub struct DeltaCover {
    pub delta: f64,
    pub backend: LatticeBackend,
    pub ball_radius: f64,
}

/// All cover points within `radius` of `center`, sorted by coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodedList {
    pub center: Vec<f64>,
    pub radius: f64,
    pub points: Vec<LatticePoint>,
}

/// Build the Δ-cover of the unit ball: the backend is scaled so the
/// covering radius is Δ exactly (square family: s = 2Δ/√d; hexagonal:
/// s = √3·Δ, two dimensions only).
pub fn build_cover(d: usize, delta: f64, family: Family) -> Result<DeltaCover> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(contract(format!(
            "cover parameter must lie in (0, 1), got {delta}"
        )));
    }
    let backend = match family {
        Family::ScaledInteger => {
            LatticeBackend::scaled_integer(d, 2.0 * delta / (d as f64).sqrt())?
        }
        Family::ScaledAStar => {
            if d != 2 {
                return Err(contract(format!(
                    "hexagonal covers exist only in dimension 2, got {d}"
                )));
            }
            LatticeBackend::scaled_a_star(3.0f64.sqrt() * delta)?
        }
    };
    debug_assert!((backend.covering_radius - delta).abs() < 1e-12 * (1.0 + delta));
    Ok(DeltaCover {
        delta,
        backend,
        ball_radius: 1.0,
    })
}

impl DeltaCover {
    /// Membership test for the implicit cover set (closed, with float slack).
    pub fn contains(&self, p: &LatticePoint) -> bool {
        geom::norm(&p.embedding) <= self.ball_radius + self.delta + SLACK
    }

    /// The lattice origin as a cover point.
    pub fn origin(&self) -> LatticePoint {
        self.backend
            .embed(&vec![0; self.backend.dimension])
            .expect("origin embeds in every backend")
    }
}

/// Upper bound u on ln |C_Δ|, from disjoint packing balls of radius λ/2
/// inside the ball of radius R + Δ + λ/2: u = d·ln((R + Δ + λ/2)/(λ/2)).
pub fn cover_log_size_upper_bound(cover: &DeltaCover) -> f64 {
    let (lambda, _, _) = lattice_params(&cover.backend);
    let half = lambda / 2.0;
    cover.backend.dimension as f64 * ((cover.ball_radius + cover.delta + half) / half).ln()
}

/// Per-element probability floor of [`sample_near_uniform`]:
/// 0.99·e^{−u} ≤ 0.99/|C_Δ|.
pub fn sampler_min_probability(cover: &DeltaCover) -> f64 {
    0.99 * (-cover_log_size_upper_bound(cover)).exp()
}

/// Reusable list-decoder: precomputes the offset set once, then decodes
/// many queries at the same radius. Offsets carry their embeddings so the
/// per-query filter runs without allocating on rejected candidates.
#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    cover: &'a DeltaCover,
    delta_prime: f64,
    offsets: Vec<(Vec<i64>, Vec<f64>)>,
}

impl<'a> Decoder<'a> {
    pub fn new(cover: &'a DeltaCover, delta_prime: f64) -> Result<Self> {
        Decoder::with_cap(cover, delta_prime, DECODE_SET_CAP)
    }

    /// The offset set S = {u ∈ L : ‖u‖ ≤ Δ' + Δ} is closed under the
    /// norm-reduction walk (every nonzero lattice point has a relevant
    /// vector step strictly reducing its norm), so breadth-first search
    /// over relevant-vector steps with a norm cap enumerates all of it.
    pub fn with_cap(cover: &'a DeltaCover, delta_prime: f64, cap: usize) -> Result<Self> {
        if delta_prime < cover.delta {
            return Err(contract(format!(
                "decode radius {delta_prime} is below the cover parameter {}",
                cover.delta
            )));
        }
        let d = cover.backend.dimension;
        let steps: Vec<(Vec<i64>, Vec<f64>, f64)> = relevant_vectors(&cover.backend)?
            .into_iter()
            .map(|p| {
                let n2 = geom::norm2(&p.embedding);
                (p.coefficients, p.embedding, n2)
            })
            .collect();
        let cap2 = {
            let c = delta_prime + cover.delta + SLACK;
            c * c
        };
        let mut seen: BTreeSet<Vec<i64>> = BTreeSet::new();
        // queue entries carry (coefficients, embedding, squared norm) so a
        // child's norm is three dot-product terms, not a fresh embedding
        let mut queue: VecDeque<(Vec<i64>, Vec<f64>, f64)> = VecDeque::new();
        seen.insert(vec![0; d]);
        queue.push_back((vec![0; d], vec![0.0; d], 0.0));
        let mut scratch: Vec<i64> = vec![0; d];
        while let Some((coeffs, emb, n2)) = queue.pop_front() {
            for (sc, se, sn2) in &steps {
                for i in 0..d {
                    scratch[i] = coeffs[i] + sc[i];
                }
                if seen.contains(scratch.as_slice()) {
                    continue;
                }
                let child_n2 = n2 + 2.0 * geom::dot(&emb, se) + sn2;
                if child_n2 > cap2 {
                    continue;
                }
                if seen.len() >= cap {
                    return Err(capacity(format!(
                        "decode offset set exceeds the cap of {cap} points"
                    )));
                }
                let child_emb = geom::add(&emb, se);
                seen.insert(scratch.clone());
                queue.push_back((scratch.clone(), child_emb, child_n2));
            }
        }
        let offsets = seen
            .into_iter()
            .map(|coeffs| {
                let emb = cover.backend.embed(&coeffs)?.embedding;
                Ok((coeffs, emb))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Decoder { cover, delta_prime, offsets })
    }

    fn check_query(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.cover.backend.dimension {
            return Err(contract(format!(
                "query has dimension {}, cover has {}",
                x.len(),
                self.cover.backend.dimension
            )));
        }
        if geom::norm(x) > self.cover.ball_radius + self.delta_prime + SLACK {
            return Err(contract(
                "decode query lies outside the enlarged ball".to_string(),
            ));
        }
        Ok(())
    }

    /// Visit the coefficient vector of every cover point within
    /// `delta_prime` of x (closed ball, float slack) without materializing
    /// the list. Visit order is fixed (ascending offset), so runs are
    /// reproducible.
    pub fn for_each_in_list(&self, x: &[f64], f: &mut dyn FnMut(&[i64])) -> Result<()> {
        self.check_query(x)?;
        let cover = self.cover;
        let d = cover.backend.dimension;
        let c0 = closest_vector(&cover.backend, x)?;
        let dist_cap2 = {
            let c = self.delta_prime + SLACK;
            c * c
        };
        let ball_cap2 = {
            let c = cover.ball_radius + cover.delta + SLACK;
            c * c
        };
        let mut coeff_scratch: Vec<i64> = vec![0; d];
        for (oc, oe) in &self.offsets {
            let mut dist2 = 0.0;
            let mut norm2 = 0.0;
            for i in 0..d {
                let v = c0.embedding[i] + oe[i];
                let dv = v - x[i];
                dist2 += dv * dv;
                norm2 += v * v;
            }
            if dist2 <= dist_cap2 && norm2 <= ball_cap2 {
                for i in 0..d {
                    coeff_scratch[i] = c0.coefficients[i] + oc[i];
                }
                f(&coeff_scratch);
            }
        }
        Ok(())
    }

    /// All cover points within `delta_prime` of x, sorted by coefficients,
    /// with canonical embeddings.
    pub fn decode(&self, x: &[f64]) -> Result<DecodedList> {
        let mut coeff_sets: Vec<Vec<i64>> = Vec::new();
        self.for_each_in_list(x, &mut |coeffs| coeff_sets.push(coeffs.to_vec()))?;
        coeff_sets.sort();
        let points = coeff_sets
            .into_iter()
            .map(|c| self.cover.backend.embed(&c))
            .collect::<Result<Vec<_>>>()?;
        Ok(DecodedList {
            center: x.to_vec(),
            radius: self.delta_prime,
            points,
        })
    }
}

/// One-shot list-decode; see [`Decoder`] for the amortized path.
pub fn decode_list(cover: &DeltaCover, x: &[f64], delta_prime: f64) -> Result<DecodedList> {
    Decoder::new(cover, delta_prime)?.decode(x)
}

/// Number of rejection attempts the sampler makes: round(100·(1+2Δ)^d).
pub(crate) fn rejection_cap(cover: &DeltaCover) -> u64 {
    (100.0 * (1.0 + 2.0 * cover.delta).powi(cover.backend.dimension as i32)).round() as u64
}

/// Near-uniform cover draw, and whether the rejection loop was exhausted
/// (in which case the origin is returned).
pub(crate) fn sample_near_uniform_traced(
    cover: &DeltaCover,
    rng: &mut ChaCha20Rng,
) -> Result<(LatticePoint, bool)> {
    let d = cover.backend.dimension;
    let sampling_radius = cover.ball_radius + 2.0 * cover.delta;
    for _ in 0..rejection_cap(cover) {
        let y = geom::uniform_in_ball(d, sampling_radius, rng);
        let v = closest_vector(&cover.backend, &y)?;
        if cover.contains(&v) {
            return Ok((v, false));
        }
    }
    Ok((cover.origin(), true))
}

/// Draw a cover element with probability at least
/// [`sampler_min_probability`] each, by rejection: sample uniformly in the
/// enlarged ball of radius 1 + 2Δ, round to the lattice, accept on cover
/// membership; exhausting the attempt budget returns the origin. Worst-case
/// attempt count grows exponentially with dimension.
pub fn sample_near_uniform(cover: &DeltaCover, rng: &mut ChaCha20Rng) -> Result<LatticePoint> {
    Ok(sample_near_uniform_traced(cover, rng)?.0)
}
