//! Exact lattice arithmetic: closest-vector solving, Voronoi relevant
//! vectors, and packing/covering parameters for two pluggable families.
//!
//! `ScaledInteger` is the workhorse (per-coordinate rounding solves CVP);
//! `ScaledAStar` is the planar hexagonal lattice with a better
//! covering-to-packing ratio. The scale is a finite double, i.e. an exact
//! dyadic rational, so embeddings are deterministic functions of the integer
//! coefficients and coefficient vectors round-trip exactly.

use serde::Serialize;

use crate::config::LOW_DIM_LIMIT_DEFAULT;
use crate::error::{capacity, contract, Result};
use crate::geom;

/// Lattice family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    /// s·Z^d: CVP by per-coordinate rounding; ratio 2μ/λ = √d.
    ScaledInteger,
    /// Planar hexagonal lattice (d = 2 only); ratio 2μ/λ = 2/√3.
    ScaledAStar,
}

/// A lattice in R^d with closed-form parameters.
///
/// `min_distance` (λ) is the shortest nonzero vector norm, `covering_radius`
/// (μ) the largest distance from any point of R^d to the lattice, and
/// `tau` = 2μ/λ ≥ 1 the quality ratio the cover sizes depend on.
#[derive(Debug, Clone, Serialize)]
pub struct LatticeBackend {
    pub dimension: usize,
    pub family: Family,
    pub scale: f64,
    pub min_distance: f64,
    pub covering_radius: f64,
    pub tau: f64,
}

/// A lattice point: integer basis coefficients plus their embedding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticePoint {
    pub coefficients: Vec<i64>,
    pub embedding: Vec<f64>,
}

impl LatticeBackend {
    /// s·Z^d.
    pub fn scaled_integer(dimension: usize, scale: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(contract("lattice dimension must be positive"));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(contract(format!("lattice scale must be positive, got {scale}")));
        }
        let d = dimension as f64;
        Ok(LatticeBackend {
            dimension,
            family: Family::ScaledInteger,
            scale,
            min_distance: scale,
            covering_radius: scale * d.sqrt() / 2.0,
            tau: d.sqrt(),
        })
    }

    /// Hexagonal lattice at scale s, with basis s·(1,0) and s·(1/2, √3/2).
    pub fn scaled_a_star(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(contract(format!("lattice scale must be positive, got {scale}")));
        }
        Ok(LatticeBackend {
            dimension: 2,
            family: Family::ScaledAStar,
            scale,
            min_distance: scale,
            covering_radius: scale / 3f64.sqrt(),
            tau: 2.0 / 3f64.sqrt(),
        })
    }

    /// Embed integer coefficients into R^d.
    pub fn embed(&self, coefficients: &[i64]) -> Result<LatticePoint> {
        if coefficients.len() != self.dimension {
            return Err(contract(format!(
                "coefficient length {} does not match lattice dimension {}",
                coefficients.len(),
                self.dimension
            )));
        }
        let s = self.scale;
        let embedding = match self.family {
            Family::ScaledInteger => coefficients.iter().map(|&k| s * k as f64).collect(),
            Family::ScaledAStar => {
                let (k1, k2) = (coefficients[0] as f64, coefficients[1] as f64);
                vec![s * (k1 + k2 / 2.0), s * k2 * 3f64.sqrt() / 2.0]
            }
        };
        Ok(LatticePoint { coefficients: coefficients.to_vec(), embedding })
    }
}

/// Closed-form (λ, μ, τ).
pub fn lattice_params(backend: &LatticeBackend) -> (f64, f64, f64) {
    (backend.min_distance, backend.covering_radius, backend.tau)
}

/// Exact closest lattice point to `target`; ties broken by lexicographically
/// smallest coefficient vector.
pub fn closest_vector(backend: &LatticeBackend, target: &[f64]) -> Result<LatticePoint> {
    if target.len() != backend.dimension {
        return Err(contract(format!(
            "target length {} does not match lattice dimension {}",
            target.len(),
            backend.dimension
        )));
    }
    if target.iter().any(|x| !x.is_finite()) {
        return Err(contract("target coordinates must be finite"));
    }
    match backend.family {
        Family::ScaledInteger => {
            // Round half *down*: the smaller coefficient is the
            // lexicographically smaller of two equidistant candidates.
            let coeffs: Vec<i64> = target
                .iter()
                .map(|&t| (t / backend.scale - 0.5).ceil() as i64)
                .collect();
            backend.embed(&coeffs)
        }
        Family::ScaledAStar => {
            let s = backend.scale;
            let a2 = target[1] / (s * 3f64.sqrt() / 2.0);
            let a1 = target[0] / s - a2 / 2.0;
            let (r1, r2) = (a1.round() as i64, a2.round() as i64);
            // The minimizer's basis coefficients lie within 2 of the naive
            // rounding (the Voronoi cell fits well inside one basis cell).
            let mut best: Option<(f64, LatticePoint)> = None;
            for k1 in (r1 - 2)..=(r1 + 2) {
                for k2 in (r2 - 2)..=(r2 + 2) {
                    let cand = backend.embed(&[k1, k2])?;
                    let d2 = geom::dist2(&cand.embedding, target);
                    let replace = match &best {
                        None => true,
                        Some((bd2, bp)) => {
                            d2 < bd2 - 1e-12
                                || (d2 <= bd2 + 1e-12
                                    && cand.coefficients < bp.coefficients)
                        }
                    };
                    if replace {
                        best = Some((d2, cand));
                    }
                }
            }
            Ok(best.expect("candidate box is nonempty").1)
        }
    }
}

/// The Voronoi relevant vectors (facet normals of the origin cell), sorted by
/// coefficient vector. Uses the crate default dimension limit.
pub fn relevant_vectors(backend: &LatticeBackend) -> Result<Vec<LatticePoint>> {
    relevant_vectors_bounded(backend, LOW_DIM_LIMIT_DEFAULT)
}

/// As [`relevant_vectors`] with an explicit dimension cap.
pub fn relevant_vectors_bounded(
    backend: &LatticeBackend,
    max_dim: usize,
) -> Result<Vec<LatticePoint>> {
    if backend.dimension > max_dim {
        return Err(capacity(format!(
            "relevant-vector enumeration limited to dimension {max_dim}, got {}",
            backend.dimension
        )));
    }
    let mut coeff_sets: Vec<Vec<i64>> = match backend.family {
        Family::ScaledInteger => {
            let d = backend.dimension;
            let mut v = Vec::with_capacity(2 * d);
            for i in 0..d {
                for sign in [-1i64, 1] {
                    let mut c = vec![0i64; d];
                    c[i] = sign;
                    v.push(c);
                }
            }
            v
        }
        Family::ScaledAStar => vec![
            vec![-1, 0],
            vec![-1, 1],
            vec![0, -1],
            vec![0, 1],
            vec![1, -1],
            vec![1, 0],
        ],
    };
    coeff_sets.sort();
    coeff_sets.iter().map(|c| backend.embed(c)).collect()
}
