//! Geographic primitives: great-circle distance, centroids, a local planar
//! projection, and the fixed-size window search behind the local-region
//! centroid.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Spherical Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Default side length of the local-region window, in meters.
pub const DEFAULT_LOCAL_WINDOW_M: f64 = 640.0;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("coordinate out of range: lat={lat}, lon={lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("operation requires at least one point")]
    EmptyInput,
    #[error("window side must be positive and finite, got {0}")]
    InvalidSide(f64),
}

/// Latitude/longitude pair in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint<T> {
    pub lat: T,
    pub lon: T,
}

impl<T: Scalar> GeoPoint<T> {
    /// Validated constructor; rejects non-finite or out-of-range values.
    pub fn new(lat: T, lon: T) -> Result<Self, GeoError> {
        let valid = lat.is_finite()
            && lon.is_finite()
            && lat.abs() <= T::lit(90.0)
            && lon.abs() <= T::lit(180.0);
        if valid {
            Ok(Self { lat, lon })
        } else {
            Err(GeoError::InvalidCoordinate { lat: lat.as_f64(), lon: lon.as_f64() })
        }
    }

    pub fn cast<U: Scalar>(self) -> GeoPoint<U> {
        GeoPoint { lat: U::lit(self.lat.as_f64()), lon: U::lit(self.lon.as_f64()) }
    }
}

/// Point in a local tangent plane, meters east (`x`) and north (`y`) of the
/// projection origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint<T> {
    pub x: T,
    pub y: T,
}

/// Axis-aligned square `[x0, x0 + side] × [y0, y0 + side]` (closed on every
/// edge) and the number of points it covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window<T> {
    pub x0: T,
    pub y0: T,
    pub side: T,
    pub count: usize,
}

impl<T: Scalar> Window<T> {
    pub fn contains(&self, p: &PlanarPoint<T>) -> bool {
        self.x0 <= p.x && p.x <= self.x0 + self.side && self.y0 <= p.y && p.y <= self.y0 + self.side
    }
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine<T: Scalar>(p: GeoPoint<T>, q: GeoPoint<T>) -> T {
    let rad = T::PI() / T::lit(180.0);
    let (lat1, lat2) = (p.lat * rad, q.lat * rad);
    let half_dlat = (q.lat - p.lat) * rad / T::lit(2.0);
    let half_dlon = (q.lon - p.lon) * rad / T::lit(2.0);
    let a = half_dlat.sin().powi(2) + lat1.cos() * lat2.cos() * half_dlon.sin().powi(2);
    let a = a.min(T::one());
    let c = T::lit(2.0) * a.sqrt().atan2((T::one() - a).sqrt());
    T::lit(EARTH_RADIUS_M) * c
}

/// Arithmetic mean of latitudes and of longitudes.
pub fn centroid<T: Scalar>(points: &[GeoPoint<T>]) -> Result<GeoPoint<T>, GeoError> {
    if points.is_empty() {
        return Err(GeoError::EmptyInput);
    }
    let n = T::from_count(points.len());
    let lat = points.iter().map(|p| p.lat).sum::<T>() / n;
    let lon = points.iter().map(|p| p.lon).sum::<T>() / n;
    Ok(GeoPoint { lat, lon })
}

/// Equirectangular projection about a fixed origin. Accurate to well under a
/// percent within a degree or so of the origin, which is district scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalProjection<T> {
    origin: GeoPoint<T>,
    cos_lat0: T,
    meters_per_degree: T,
}

impl<T: Scalar> LocalProjection<T> {
    pub fn new(origin: GeoPoint<T>) -> Self {
        let rad = T::PI() / T::lit(180.0);
        Self {
            origin,
            cos_lat0: (origin.lat * rad).cos(),
            meters_per_degree: rad * T::lit(EARTH_RADIUS_M),
        }
    }

    pub fn origin(&self) -> GeoPoint<T> {
        self.origin
    }

    pub fn project(&self, p: GeoPoint<T>) -> PlanarPoint<T> {
        PlanarPoint {
            x: (p.lon - self.origin.lon) * self.cos_lat0 * self.meters_per_degree,
            y: (p.lat - self.origin.lat) * self.meters_per_degree,
        }
    }

    pub fn unproject(&self, p: PlanarPoint<T>) -> GeoPoint<T> {
        GeoPoint {
            lat: self.origin.lat + p.y / self.meters_per_degree,
            lon: self.origin.lon + p.x / (self.cos_lat0 * self.meters_per_degree),
        }
    }
}

pub fn project_local<T: Scalar>(points: &[GeoPoint<T>], origin: GeoPoint<T>) -> Vec<PlanarPoint<T>> {
    let proj = LocalProjection::new(origin);
    points.iter().map(|&p| proj.project(p)).collect()
}

/// Finds the `side × side` axis-aligned window covering the most points.
///
/// The returned corner is the lexicographically smallest `(x0, y0)` among the
/// optimal windows whose left edge lies on some input `x` and bottom edge on
/// some input `y`. Runs in `O(n log n)`: points are swept by `x` through a
/// slab of width `side` while a max segment tree over the candidate bottom
/// edges counts how many slab points each candidate would cover.
pub fn max_coverage_window<T: Scalar>(points: &[PlanarPoint<T>], side: T) -> Result<Window<T>, GeoError> {
    if points.is_empty() {
        return Err(GeoError::EmptyInput);
    }
    if !(side.is_finite() && side > T::zero()) {
        return Err(GeoError::InvalidSide(side.as_f64()));
    }

    let mut ys: Vec<T> = points.iter().map(|p| p.y).collect();
    ys.sort_by(cmp_scalar);
    ys.dedup();

    // Candidate bottom edges ys[lo..=hi] are exactly those with
    // ys[k] <= y <= ys[k] + side.
    let spans: Vec<(usize, usize)> = points
        .iter()
        .map(|p| {
            let lo = ys.partition_point(|&v| p.y > v + side);
            let hi = ys.partition_point(|&v| v <= p.y) - 1;
            (lo, hi)
        })
        .collect();

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| cmp_scalar(&points[a].x, &points[b].x));

    let mut tree = MaxAddTree::new(ys.len());
    let mut best: Option<(usize, T, usize)> = None;
    let (mut left, mut right) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let x0 = points[order[i]].x;
        while right < order.len() && points[order[right]].x <= x0 + side {
            let (lo, hi) = spans[order[right]];
            tree.add(lo, hi, 1);
            right += 1;
        }
        while points[order[left]].x < x0 {
            let (lo, hi) = spans[order[left]];
            tree.add(lo, hi, -1);
            left += 1;
        }
        let (count, k) = tree.max_leftmost();
        let count = count as usize;
        if best.is_none_or(|(c, _, _)| count > c) {
            best = Some((count, x0, k));
        }
        while i < order.len() && points[order[i]].x == x0 {
            i += 1;
        }
    }

    let (count, x0, k) = best.expect("non-empty input yields a window");
    Ok(Window { x0, y0: ys[k], side, count })
}

/// Local-region centroid: the mean of the points inside the `side × side`
/// window (meters) that covers the most points.
pub fn local_region_centroid<T: Scalar>(points: &[GeoPoint<T>], side: T) -> Result<GeoPoint<T>, GeoError> {
    let origin = centroid(points)?;
    let planar = project_local(points, origin);
    let window = max_coverage_window(&planar, side)?;
    let covered: Vec<GeoPoint<T>> = points
        .iter()
        .zip(&planar)
        .filter(|(_, pp)| window.contains(pp))
        .map(|(&p, _)| p)
        .collect();
    centroid(&covered)
}

fn cmp_scalar<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Segment tree supporting range add and a global max query that reports the
/// leftmost maximising leaf.
struct MaxAddTree {
    size: usize,
    max: Vec<i64>,
    pending: Vec<i64>,
}

impl MaxAddTree {
    fn new(size: usize) -> Self {
        Self { size, max: vec![0; 4 * size.max(1)], pending: vec![0; 4 * size.max(1)] }
    }

    fn add(&mut self, lo: usize, hi: usize, delta: i64) {
        self.add_at(1, 0, self.size - 1, lo, hi, delta);
    }

    fn add_at(&mut self, node: usize, nlo: usize, nhi: usize, lo: usize, hi: usize, delta: i64) {
        if hi < nlo || nhi < lo {
            return;
        }
        if lo <= nlo && nhi <= hi {
            self.max[node] += delta;
            self.pending[node] += delta;
            return;
        }
        let mid = (nlo + nhi) / 2;
        self.add_at(2 * node, nlo, mid, lo, hi, delta);
        self.add_at(2 * node + 1, mid + 1, nhi, lo, hi, delta);
        self.max[node] = self.max[2 * node].max(self.max[2 * node + 1]) + self.pending[node];
    }

    fn max_leftmost(&self) -> (i64, usize) {
        let best = self.max[1];
        let (mut node, mut lo, mut hi) = (1, 0, self.size - 1);
        let mut target = best;
        while lo < hi {
            target -= self.pending[node];
            let mid = (lo + hi) / 2;
            if self.max[2 * node] == target {
                node *= 2;
                hi = mid;
            } else {
                node = 2 * node + 1;
                lo = mid + 1;
            }
        }
        (best, lo)
    }
}
