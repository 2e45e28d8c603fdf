//! Rasterization of point sets into density matrices over a bounding box, and
//! the KL / Jaccard comparisons between the normalized distributions.
//!
//! Matrices are stored sparsely as `(flat_index, value)` pairs sorted by
//! `flat_index = row * n_grid + col`, with rows indexing latitude and columns
//! longitude. Profiles occupy a tiny fraction of a fine grid, so this keeps
//! `n_grid = 500` affordable for hundreds of profiles.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;
use crate::scalar::Scalar;

/// Default grid resolution per axis.
pub const DEFAULT_GRID_N: usize = 50;
/// Default additive smoothing for the KL divergence.
pub const DEFAULT_KL_EPSILON: f64 = 1e-9;
/// Relative padding applied to data-driven bounding boxes.
pub const BBOX_PAD_FRACTION: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum DistributionError {
    #[error("bounding box must satisfy min < max on both axes")]
    InvalidBoundingBox,
    #[error("grid resolution must be at least 1")]
    InvalidGrid,
    #[error("no points fall inside the bounding box ({dropped} dropped)")]
    AllPointsOutside { dropped: usize },
    #[error("density matrix has zero total mass")]
    ZeroTotal,
    #[error("distributions are defined over different grids")]
    GridMismatch,
    #[error("smoothing epsilon must be positive and finite")]
    InvalidEpsilon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox<T> {
    pub min_lat: T,
    pub max_lat: T,
    pub min_lon: T,
    pub max_lon: T,
}

impl<T: Scalar> BoundingBox<T> {
    pub fn new(min_lat: T, max_lat: T, min_lon: T, max_lon: T) -> Result<Self, DistributionError> {
        if min_lat < max_lat && min_lon < max_lon {
            Ok(Self { min_lat, max_lat, min_lon, max_lon })
        } else {
            Err(DistributionError::InvalidBoundingBox)
        }
    }

    /// Data extent of `points`, padded by `pad_fraction` of the span on each
    /// side. A zero span is padded by a fixed 1e-5 degrees instead.
    pub fn covering<'a, I>(points: I, pad_fraction: T) -> Option<Self>
    where
        I: IntoIterator<Item = &'a GeoPoint<T>>,
    {
        let mut iter = points.into_iter();
        let first = iter.next()?;
        let mut b = Self { min_lat: first.lat, max_lat: first.lat, min_lon: first.lon, max_lon: first.lon };
        for p in iter {
            b.min_lat = b.min_lat.min(p.lat);
            b.max_lat = b.max_lat.max(p.lat);
            b.min_lon = b.min_lon.min(p.lon);
            b.max_lon = b.max_lon.max(p.lon);
        }
        let pad = |span: T| if span > T::zero() { span * pad_fraction } else { T::lit(1e-5) };
        let lat_pad = pad(b.max_lat - b.min_lat);
        let lon_pad = pad(b.max_lon - b.min_lon);
        Some(Self {
            min_lat: b.min_lat - lat_pad,
            max_lat: b.max_lat + lat_pad,
            min_lon: b.min_lon - lon_pad,
            max_lon: b.max_lon + lon_pad,
        })
    }

    pub fn contains(&self, p: &GeoPoint<T>) -> bool {
        self.min_lat <= p.lat && p.lat <= self.max_lat && self.min_lon <= p.lon && p.lon <= self.max_lon
    }

    /// Grid cell `(row, col)` of `p`. Cells are half-open except the last
    /// row and column, which also take the top and right edges.
    pub fn cell_of(&self, p: &GeoPoint<T>, n_grid: usize) -> Option<(usize, usize)> {
        if !self.contains(p) {
            return None;
        }
        let axis = |v: T, lo: T, hi: T| {
            let idx = ((v - lo) / (hi - lo) * T::from_count(n_grid)).floor();
            idx.to_usize().unwrap_or(0).min(n_grid - 1)
        };
        Some((axis(p.lat, self.min_lat, self.max_lat), axis(p.lon, self.min_lon, self.max_lon)))
    }
}

/// Per-cell point counts of one profile.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T> {
    pub n_grid: usize,
    pub bbox: BoundingBox<T>,
    cells: Vec<(usize, u64)>,
    total: u64,
    /// Points that fell outside the bounding box.
    pub dropped: usize,
}

impl<T: Scalar> DensityMatrix<T> {
    pub fn count(&self, row: usize, col: usize) -> u64 {
        let key = row * self.n_grid + col;
        self.cells.binary_search_by_key(&key, |&(k, _)| k).map_or(0, |i| self.cells[i].1)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Non-zero cells as `(flat_index, count)` in ascending index order.
    pub fn nonzero(&self) -> &[(usize, u64)] {
        &self.cells
    }

    pub fn to_dense(&self) -> Vec<Vec<u64>> {
        let mut dense = vec![vec![0; self.n_grid]; self.n_grid];
        for &(k, c) in &self.cells {
            dense[k / self.n_grid][k % self.n_grid] = c;
        }
        dense
    }

    /// Builds a matrix from dense row-major counts.
    pub fn from_dense(counts: &[Vec<u64>], bbox: BoundingBox<T>) -> Result<Self, DistributionError> {
        let n_grid = counts.len();
        if n_grid == 0 || counts.iter().any(|row| row.len() != n_grid) {
            return Err(DistributionError::InvalidGrid);
        }
        let cells: Vec<(usize, u64)> = counts
            .iter()
            .flatten()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (k, c))
            .collect();
        let total = cells.iter().map(|&(_, c)| c).sum();
        Ok(Self { n_grid, bbox, cells, total, dropped: 0 })
    }
}

/// Normalized density matrix; entries sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution<T> {
    pub n_grid: usize,
    pub bbox: BoundingBox<T>,
    cells: Vec<(usize, T)>,
}

impl<T: Scalar> Distribution<T> {
    pub fn prob(&self, row: usize, col: usize) -> T {
        let key = row * self.n_grid + col;
        self.cells.binary_search_by_key(&key, |&(k, _)| k).map_or(T::zero(), |i| self.cells[i].1)
    }

    pub fn nonzero(&self) -> &[(usize, T)] {
        &self.cells
    }

    pub fn support_len(&self) -> usize {
        self.cells.len()
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut dense = vec![vec![T::zero(); self.n_grid]; self.n_grid];
        for &(k, p) in &self.cells {
            dense[k / self.n_grid][k % self.n_grid] = p;
        }
        dense
    }

    fn check_compatible(&self, other: &Self) -> Result<(), DistributionError> {
        if self.n_grid == other.n_grid && self.bbox == other.bbox {
            Ok(())
        } else {
            Err(DistributionError::GridMismatch)
        }
    }
}

pub fn rasterize<T: Scalar>(
    points: &[GeoPoint<T>],
    bbox: BoundingBox<T>,
    n_grid: usize,
) -> Result<DensityMatrix<T>, DistributionError> {
    if n_grid == 0 || n_grid.checked_mul(n_grid).is_none() {
        return Err(DistributionError::InvalidGrid);
    }
    let mut keys = Vec::with_capacity(points.len());
    let mut dropped = 0;
    for p in points {
        match bbox.cell_of(p, n_grid) {
            Some((r, c)) => keys.push(r * n_grid + c),
            None => dropped += 1,
        }
    }
    if keys.is_empty() {
        return Err(DistributionError::AllPointsOutside { dropped });
    }
    keys.sort_unstable();
    let mut cells: Vec<(usize, u64)> = Vec::new();
    for k in keys {
        match cells.last_mut() {
            Some((last, c)) if *last == k => *c += 1,
            _ => cells.push((k, 1)),
        }
    }
    let total = cells.iter().map(|&(_, c)| c).sum();
    Ok(DensityMatrix { n_grid, bbox, cells, total, dropped })
}

pub fn normalize<T: Scalar>(m: &DensityMatrix<T>) -> Result<Distribution<T>, DistributionError> {
    if m.total == 0 {
        return Err(DistributionError::ZeroTotal);
    }
    let total = T::lit(m.total as f64);
    let cells = m.cells.iter().map(|&(k, c)| (k, T::lit(c as f64) / total)).collect();
    Ok(Distribution { n_grid: m.n_grid, bbox: m.bbox, cells })
}

/// `KL(p' ‖ q')` in nats, where `p'` and `q'` are `p` and `q` with `epsilon`
/// added to every cell and renormalized.
pub fn kl_divergence<T: Scalar>(p: &Distribution<T>, q: &Distribution<T>, epsilon: T) -> Result<T, DistributionError> {
    p.check_compatible(q)?;
    if !(epsilon.is_finite() && epsilon > T::zero()) {
        return Err(DistributionError::InvalidEpsilon);
    }
    let n_cells = T::from_count(p.n_grid * p.n_grid);
    let p_norm = p.cells.iter().map(|&(_, v)| v).sum::<T>() + n_cells * epsilon;
    let q_norm = q.cells.iter().map(|&(_, v)| v).sum::<T>() + n_cells * epsilon;

    let mut total = T::zero();
    let mut union = 0usize;
    for (pv, qv) in merge_join(&p.cells, &q.cells) {
        union += 1;
        let a = (pv + epsilon) / p_norm;
        let b = (qv + epsilon) / q_norm;
        total = total + a * (a / b).ln();
    }
    // Cells empty in both contribute identically.
    let both_empty = T::from_count(p.n_grid * p.n_grid - union);
    if both_empty > T::zero() && p_norm != q_norm {
        total = total + both_empty * (epsilon / p_norm) * (q_norm / p_norm).ln();
    }
    Ok(total.max(T::zero()))
}

/// Share of the combined mass of `p` and `q` that sits in cells where both
/// are non-zero: `Σ_{p·q≠0} (p + q) / Σ (p + q)`.
pub fn jaccard_overlap<T: Scalar>(p: &Distribution<T>, q: &Distribution<T>) -> Result<T, DistributionError> {
    p.check_compatible(q)?;
    let (mut shared, mut total) = (T::zero(), T::zero());
    for (pv, qv) in merge_join(&p.cells, &q.cells) {
        let mass = pv + qv;
        total = total + mass;
        if pv * qv != T::zero() {
            shared = shared + mass;
        }
    }
    if total == T::zero() {
        return Ok(T::zero());
    }
    Ok((shared / total).max(T::zero()).min(T::one()))
}

/// `1 − jaccard_overlap`, so that identical supports are at distance zero.
pub fn jaccard_distance<T: Scalar>(p: &Distribution<T>, q: &Distribution<T>) -> Result<T, DistributionError> {
    Ok(T::one() - jaccard_overlap(p, q)?)
}

/// Walks the union of two sorted sparse vectors, yielding `(a, b)` values with
/// zero filled in for missing entries.
fn merge_join<'a, T: Scalar>(a: &'a [(usize, T)], b: &'a [(usize, T)]) -> impl Iterator<Item = (T, T)> + 'a {
    let (mut i, mut j) = (0, 0);
    std::iter::from_fn(move || match (a.get(i), b.get(j)) {
        (Some(&(ka, va)), Some(&(kb, vb))) => Some(match ka.cmp(&kb) {
            Ordering::Less => {
                i += 1;
                (va, T::zero())
            }
            Ordering::Greater => {
                j += 1;
                (T::zero(), vb)
            }
            Ordering::Equal => {
                i += 1;
                j += 1;
                (va, vb)
            }
        }),
        (Some(&(_, va)), None) => {
            i += 1;
            Some((va, T::zero()))
        }
        (None, Some(&(_, vb))) => {
            j += 1;
            Some((T::zero(), vb))
        }
        (None, None) => None,
    })
}
