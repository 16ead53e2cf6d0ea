//! Points, finite point sets and the Hausdorff-Pompeiu metric.
//!
//! A [`PointSet`] is a finite, nonempty, deduplicated set of points in R^d,
//! the computational stand-in for a nonempty bounded closed subset. The
//! distance between sets is the Hausdorff-Pompeiu metric
//! `h(A, B) = max(d(A, B), d(B, A))` with
//! `d(A, B) = max_{a in A} min_{b in B} |a - b|`.
//!
//! Beyond distances the module provides the two set-size controls used by the
//! attractor iterations: greedy farthest-point subsampling down to a target
//! covering radius ([`beta_dense_subset`]) and snapping to a uniform grid
//! ([`prune_to_grid`]), both with exactly measurable error.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Relative dedup tolerance: points closer than this fraction of the bounding
/// box diameter are considered floating-point duplicates.
pub const DEDUP_REL_TOL: f64 = 1e-12;

/// A single point of R^d with finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Parse {
                detail: "point must have at least one coordinate".into(),
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

/// Euclidean distance between two points.
pub fn distance(p: &Point, q: &Point) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    Ok(dist_slices(p.coords(), q.coords()))
}

/// Distance between coordinate slices of equal length.
pub(crate) fn dist_slices(a: &[f64], b: &[f64]) -> f64 {
    dist_sq_slices(a, b).sqrt()
}

pub(crate) fn dist_sq_slices(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        s += d * d;
    }
    s
}

pub(crate) fn cmp_slices(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.partial_cmp(y).expect("finite coordinates") {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// Finite nonempty set of points in R^d.
///
/// Rows are kept sorted lexicographically, which gives every set a canonical
/// representation: equality of two `PointSet`s is plain equality of their
/// coordinate buffers. Construction deduplicates points closer than
/// `DEDUP_REL_TOL` times the bounding-box diameter.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    data: Vec<f64>,
    dim: usize,
}

impl PointSet {
    /// Builds a set from a flat row-major buffer of `data.len() / dim` points.
    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parse {
                detail: "dimension must be positive".into(),
            });
        }
        if data.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Parse {
                detail: format!("flat buffer length {} not divisible by dim {dim}", data.len()),
            });
        }
        if data.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        let mut set = Self { data, dim };
        set.canonicalize();
        Ok(set)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        let dim = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::Parse {
                    detail: format!("row {i} has {} coordinates, expected {dim}", r.len()),
                });
            }
        }
        Self::from_flat(rows.concat(), dim)
    }

    pub fn singleton(p: &Point) -> Self {
        Self {
            data: p.coords().to_vec(),
            dim: p.dim(),
        }
    }

    /// Rows already sorted, pairwise distinct and finite; skips canonicalization.
    pub(crate) fn from_sorted_unchecked(data: Vec<f64>, dim: usize) -> Self {
        debug_assert!(!data.is_empty() && data.len().is_multiple_of(dim));
        Self { data, dim }
    }

    fn canonicalize(&mut self) {
        let n = self.len();
        let dim = self.dim;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_unstable_by(|&i, &j| cmp_slices(self.point(i), self.point(j)));
        let mut sorted = Vec::with_capacity(self.data.len());
        for &i in &order {
            sorted.extend_from_slice(self.point(i));
        }
        // Dedup pass: drop a row when it is within tolerance of the last kept
        // row. After sorting, floating-point duplicates are adjacent.
        let tol = DEDUP_REL_TOL * bbox_diameter_of(&sorted, dim);
        let mut kept = Vec::with_capacity(sorted.len());
        kept.extend_from_slice(&sorted[..dim]);
        for row in sorted.chunks_exact(dim).skip(1) {
            let last = &kept[kept.len() - dim..];
            if dist_slices(last, row) > tol {
                kept.extend_from_slice(row);
            }
        }
        self.data = kept;
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: nonempty
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    /// Componentwise bounding box `(min, max)`.
    pub fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = self.point(0).to_vec();
        let mut hi = lo.clone();
        for row in self.iter() {
            for (k, &c) in row.iter().enumerate() {
                if c < lo[k] {
                    lo[k] = c;
                }
                if c > hi[k] {
                    hi[k] = c;
                }
            }
        }
        (lo, hi)
    }

    pub fn bbox_diameter(&self) -> f64 {
        bbox_diameter_of(&self.data, self.dim)
    }

    /// Serializes as CSV: one point per row, `dim` columns, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.iter() {
            for (k, c) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{c:?}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the CSV form; rejects rows of inconsistent arity.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|e| Error::Parse {
                        detail: format!("line {}: bad number `{tok}`: {e}", lineno + 1),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(Error::Parse {
                        detail: format!(
                            "line {}: {} columns, expected {}",
                            lineno + 1,
                            row.len(),
                            first.len()
                        ),
                    });
                }
            }
            rows.push(row);
        }
        Self::from_rows(&rows)
    }
}

fn bbox_diameter_of(data: &[f64], dim: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in data.chunks_exact(dim) {
            lo = lo.min(row[k]);
            hi = hi.max(row[k]);
        }
        let e = hi - lo;
        s += e * e;
    }
    s.sqrt()
}

// ---------------------------------------------------------------------------
// Hausdorff-Pompeiu distance
// ---------------------------------------------------------------------------

/// Number of points below which the plain pairwise scan wins over a grid.
const GRID_MIN_TARGET: usize = 64;

/// Directed Hausdorff semi-distance `d(A, B) = max_{a} min_{b} |a - b|`.
pub fn directed_distance(a: &PointSet, b: &PointSet) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if b.dim() <= 3 && b.len() >= GRID_MIN_TARGET {
        if let Some(index) = CellIndex::build(b) {
            let mut max = 0.0f64;
            for q in a.iter() {
                let d = index.min_dist(q, max);
                if d > max {
                    max = d;
                }
            }
            return Ok(max);
        }
    }
    // Pairwise scan with early exit: once some b comes within the running
    // maximum, this a cannot raise it.
    let mut max_sq = 0.0f64;
    for q in a.iter() {
        let mut best = f64::INFINITY;
        for p in b.iter() {
            let d = dist_sq_slices(q, p);
            if d < best {
                best = d;
                if best <= max_sq {
                    break;
                }
            }
        }
        if best > max_sq {
            max_sq = best;
        }
    }
    Ok(max_sq.sqrt())
}

/// Hausdorff-Pompeiu distance `h(A, B) = max(d(A, B), d(B, A))`.
pub fn hausdorff(a: &PointSet, b: &PointSet) -> Result<f64> {
    Ok(directed_distance(a, b)?.max(directed_distance(b, a)?))
}

/// Uniform-cell index over a point set, for nearest-point queries in d <= 3.
struct CellIndex<'a> {
    set: &'a PointSet,
    pitch: f64,
    cells: HashMap<[i64; 3], Vec<u32>>,
    lo_cell: [i64; 3],
    hi_cell: [i64; 3],
}

impl<'a> CellIndex<'a> {
    fn build(set: &'a PointSet) -> Option<Self> {
        let diam = set.bbox_diameter();
        if diam <= 0.0 {
            return None;
        }
        let n = set.len() as f64;
        let pitch = diam / n.powf(1.0 / set.dim() as f64).max(1.0);
        if !pitch.is_finite() || pitch <= 0.0 {
            return None;
        }
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        let mut lo_cell = [i64::MAX; 3];
        let mut hi_cell = [i64::MIN; 3];
        for (i, row) in set.iter().enumerate() {
            let key = cell_of(row, pitch);
            for k in 0..3 {
                lo_cell[k] = lo_cell[k].min(key[k]);
                hi_cell[k] = hi_cell[k].max(key[k]);
            }
            cells.entry(key).or_default().push(i as u32);
        }
        Some(Self {
            set,
            pitch,
            cells,
            lo_cell,
            hi_cell,
        })
    }

    /// Distance from `q` to the set. May return any value `<= abort_above`
    /// early; above that threshold the result is the exact minimum. Negative
    /// `abort_above` disables the early return.
    fn min_dist(&self, q: &[f64], abort_above: f64) -> f64 {
        let dim = self.set.dim();
        let center = cell_of(q, self.pitch);
        let abort_sq = if abort_above >= 0.0 {
            abort_above * abort_above
        } else {
            -1.0
        };
        let mut best_sq = f64::INFINITY;
        // Occupied cells have Chebyshev distance in [first_ring, last_ring]
        // from the query cell, so the sweep covers exactly that span.
        let mut first_ring = 0i64;
        let mut last_ring = 0i64;
        for k in 0..dim {
            let below = self.lo_cell[k] - center[k];
            let above = center[k] - self.hi_cell[k];
            first_ring = first_ring.max(below.max(above));
            last_ring = last_ring.max(
                (center[k] - self.lo_cell[k])
                    .abs()
                    .max((center[k] - self.hi_cell[k]).abs()),
            );
        }
        for ring in first_ring..=last_ring {
            // Cells on ring k contain no point closer than (k-1)*pitch.
            if ring > 0 {
                let lower = (ring - 1) as f64 * self.pitch;
                if lower * lower > best_sq {
                    break;
                }
            }
            self.scan_ring(&center, ring, dim, q, &mut best_sq);
            if best_sq <= abort_sq {
                return best_sq.sqrt();
            }
        }
        best_sq.sqrt()
    }

    /// Visits the cells at Chebyshev distance exactly `ring` from `center`,
    /// clipped to the occupied bounding box so empty shell stretches cost
    /// nothing.
    fn scan_ring(&self, center: &[i64; 3], ring: i64, dim: usize, q: &[f64], best_sq: &mut f64) {
        let mut visit = |key: [i64; 3]| {
            if let Some(idxs) = self.cells.get(&key) {
                for &i in idxs {
                    let d = dist_sq_slices(q, self.set.point(i as usize));
                    if d < *best_sq {
                        *best_sq = d;
                    }
                }
            }
        };
        if ring == 0 {
            visit(*center);
            return;
        }
        let inside = |k: usize, cell: i64| cell >= self.lo_cell[k] && cell <= self.hi_cell[k];
        // span of offsets along axis k, clipped to the box
        let clip = |k: usize, a: i64, b: i64| {
            (
                a.max(self.lo_cell[k] - center[k]),
                b.min(self.hi_cell[k] - center[k]),
            )
        };
        match dim {
            1 => {
                for dx in [-ring, ring] {
                    if inside(0, center[0] + dx) {
                        visit([center[0] + dx, 0, 0]);
                    }
                }
            }
            2 => {
                for dx in [-ring, ring] {
                    if inside(0, center[0] + dx) {
                        let (y0, y1) = clip(1, -ring, ring);
                        for dy in y0..=y1 {
                            visit([center[0] + dx, center[1] + dy, 0]);
                        }
                    }
                }
                for dy in [-ring, ring] {
                    if inside(1, center[1] + dy) {
                        let (x0, x1) = clip(0, -ring + 1, ring - 1);
                        for dx in x0..=x1 {
                            visit([center[0] + dx, center[1] + dy, 0]);
                        }
                    }
                }
            }
            _ => {
                for dx in [-ring, ring] {
                    if inside(0, center[0] + dx) {
                        let (y0, y1) = clip(1, -ring, ring);
                        let (z0, z1) = clip(2, -ring, ring);
                        for dy in y0..=y1 {
                            for dz in z0..=z1 {
                                visit([center[0] + dx, center[1] + dy, center[2] + dz]);
                            }
                        }
                    }
                }
                for dy in [-ring, ring] {
                    if inside(1, center[1] + dy) {
                        let (x0, x1) = clip(0, -ring + 1, ring - 1);
                        let (z0, z1) = clip(2, -ring, ring);
                        for dx in x0..=x1 {
                            for dz in z0..=z1 {
                                visit([center[0] + dx, center[1] + dy, center[2] + dz]);
                            }
                        }
                    }
                }
                for dz in [-ring, ring] {
                    if inside(2, center[2] + dz) {
                        let (x0, x1) = clip(0, -ring + 1, ring - 1);
                        let (y0, y1) = clip(1, -ring + 1, ring - 1);
                        for dx in x0..=x1 {
                            for dy in y0..=y1 {
                                visit([center[0] + dx, center[1] + dy, center[2] + dz]);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn cell_of(row: &[f64], pitch: f64) -> [i64; 3] {
    let mut key = [0i64; 3];
    for (k, &c) in row.iter().enumerate().take(3) {
        key[k] = (c / pitch).floor() as i64;
    }
    key
}

// ---------------------------------------------------------------------------
// beta-dense subsampling (farthest-point sampling)
// ---------------------------------------------------------------------------

/// Greedy farthest-point subsample `S` of `A` with `hausdorff(A, S) < beta`.
///
/// Seeded at the lexicographically smallest point; each round adds the point
/// farthest from the current subset (ties broken by lowest index), so the
/// result is deterministic. The subset is greedily small, not globally
/// minimal.
pub fn beta_dense_subset(a: &PointSet, beta: f64) -> Result<PointSet> {
    if beta <= 0.0 {
        return Err(Error::NonPositive {
            quantity: "beta",
            value: beta,
        });
    }
    let (set, _) = beta_cover_capped(a, beta, a.len());
    Ok(set)
}

/// Farthest-point subsample stopped at covering radius `< beta` or at
/// `max_points` points, whichever comes first. Returns the subset together
/// with its exact covering radius `hausdorff(A, S)` (0 when `S == A`).
pub fn beta_cover_capped(a: &PointSet, beta: f64, max_points: usize) -> (PointSet, f64) {
    let n = a.len();
    let cap = max_points.clamp(1, n);
    let mut selected: Vec<usize> = vec![0];
    let mut min_dist: Vec<f64> = a.iter().map(|p| dist_slices(p, a.point(0))).collect();
    let mut radius = fold_max(&min_dist);
    while radius.1 >= beta && selected.len() < cap {
        let (idx, _) = radius;
        selected.push(idx);
        let newp = a.point(idx);
        for (i, p) in a.iter().enumerate() {
            let d = dist_slices(p, newp);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
        radius = fold_max(&min_dist);
    }
    let mut data = Vec::with_capacity(selected.len() * a.dim());
    selected.sort_unstable();
    for &i in &selected {
        data.extend_from_slice(a.point(i));
    }
    (PointSet::from_sorted_unchecked(data, a.dim()), radius.1)
}

fn fold_max(v: &[f64]) -> (usize, f64) {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, &x) in v.iter().enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Grid pruning
// ---------------------------------------------------------------------------

/// Snaps every point to the center of its cell in a uniform grid of spacing
/// `delta` and deduplicates, so `hausdorff(A, result) <= delta * sqrt(d) / 2`.
/// Non-positive `delta` returns the set unchanged.
pub fn prune_to_grid(a: &PointSet, delta: f64) -> PointSet {
    prune_to_grid_measured(a, delta).0
}

/// Same as [`prune_to_grid`] but also returns the exact maximum snap distance,
/// a certified (and usually tighter) stand-in for the `delta * sqrt(d) / 2`
/// bound.
pub fn prune_to_grid_measured(a: &PointSet, delta: f64) -> (PointSet, f64) {
    if delta <= 0.0 {
        return (a.clone(), 0.0);
    }
    let mut accum = GridAccum::new(a.dim(), delta);
    for p in a.iter() {
        accum.insert(p);
    }
    accum.finish()
}

/// Streaming grid accumulator: feeds points in, produces the pruned set plus
/// the maximum snap distance without materializing the raw union.
pub(crate) struct GridAccum {
    dim: usize,
    delta: f64,
    small: Option<std::collections::HashSet<[i64; 4]>>,
    big: Option<std::collections::HashSet<Vec<i64>>>,
    max_move_sq: f64,
}

impl GridAccum {
    pub(crate) fn new(dim: usize, delta: f64) -> Self {
        debug_assert!(delta > 0.0);
        let (small, big) = if dim <= 4 {
            (Some(Default::default()), None)
        } else {
            (None, Some(Default::default()))
        };
        Self {
            dim,
            delta,
            small,
            big,
            max_move_sq: 0.0,
        }
    }

    pub(crate) fn insert(&mut self, p: &[f64]) {
        let mut move_sq = 0.0;
        if let Some(set) = self.small.as_mut() {
            let mut key = [0i64; 4];
            for (k, &c) in p.iter().enumerate() {
                let cell = (c / self.delta).floor() as i64;
                key[k] = cell;
                let center = (cell as f64 + 0.5) * self.delta;
                let d = c - center;
                move_sq += d * d;
            }
            set.insert(key);
        } else {
            let set = self.big.as_mut().unwrap();
            let mut key = Vec::with_capacity(self.dim);
            for &c in p {
                let cell = (c / self.delta).floor() as i64;
                key.push(cell);
                let center = (cell as f64 + 0.5) * self.delta;
                let d = c - center;
                move_sq += d * d;
            }
            set.insert(key);
        }
        if move_sq > self.max_move_sq {
            self.max_move_sq = move_sq;
        }
    }

    pub(crate) fn finish(self) -> (PointSet, f64) {
        let dim = self.dim;
        let delta = self.delta;
        let center = |cell: i64| (cell as f64 + 0.5) * delta;
        let data = if let Some(set) = self.small {
            let mut keys: Vec<[i64; 4]> = set.into_iter().collect();
            keys.sort_unstable_by(|a, b| a[..dim].cmp(&b[..dim]));
            let mut data = Vec::with_capacity(keys.len() * dim);
            for key in keys {
                data.extend(key[..dim].iter().map(|&c| center(c)));
            }
            data
        } else {
            let mut keys: Vec<Vec<i64>> = self.big.unwrap().into_iter().collect();
            keys.sort_unstable();
            let mut data = Vec::with_capacity(keys.len() * dim);
            for key in keys {
                data.extend(key.iter().map(|&c| center(c)));
            }
            data
        };
        (
            PointSet::from_sorted_unchecked(data, dim),
            self.max_move_sq.sqrt(),
        )
    }
}
