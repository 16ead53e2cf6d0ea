//! Finite iterated function systems of affine contractions.
//!
//! An IFS `R = (R^d, (psi_i))` with `alpha = max_i Lip(psi_i) < 1` has a
//! unique attractor `A_R`, the fixed point of the fractal operator
//! `F_R(A) = U_i psi_i(A)`, and Picard iteration converges with
//! `h(A_k, A_R) <= alpha^k / (1 - alpha) * h(A_0, A_1)`.
//!
//! [`attractor`] runs that iteration on finite point sets, optionally pruning
//! every iterate to a grid; the pruning error of each step is measured exactly
//! and folded into an [`OstrowskiLedger`], so the returned bound certifies the
//! distance to the true attractor.

use crate::error::{Error, Result};
use crate::metric::{dist_slices, hausdorff, GridAccum, Point, PointSet};
use crate::report::{ConvergenceReport, OstrowskiLedger};

/// Relative tolerance of the power iteration for spectral norms.
pub const SPECTRAL_TOL: f64 = 1e-12;
const SPECTRAL_MAX_ITER: usize = 10_000;
/// Safety inflation so cached Lipschitz constants err on the conservative
/// side; well inside the 1e-9 accuracy contract.
const SPECTRAL_INFLATE: f64 = 1.0 + 1e-11;

/// Largest singular value of a `d x d` row-major matrix, by power iteration
/// on `M^T M` to relative tolerance [`SPECTRAL_TOL`] (at most 10^4 rounds).
///
/// On non-convergence the error reports the iteration cap; callers may fall
/// back to [`frobenius_norm`], which dominates the spectral norm.
pub fn spectral_norm(matrix: &[f64], dim: usize) -> Result<f64> {
    assert_eq!(matrix.len(), dim * dim, "matrix must be d x d");
    if matrix.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite);
    }
    // B = M^T M, symmetric positive semidefinite.
    let mut b = vec![0.0; dim * dim];
    for r in 0..dim {
        for c in 0..dim {
            let mut s = 0.0;
            for k in 0..dim {
                s += matrix[k * dim + r] * matrix[k * dim + c];
            }
            b[r * dim + c] = s;
        }
    }
    // Deterministic pseudo-random start vector; an axis-aligned start can sit
    // exactly orthogonal to the dominant eigenvector for diagonal matrices.
    let mut rng = crate::chaos::SplitMix64::new(POWER_ITERATION_SEED);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.next_f64() + 0.5).collect();
    normalize(&mut v);
    let mut lambda_prev = -1.0;
    for _ in 0..SPECTRAL_MAX_ITER {
        let mut w = vec![0.0; dim];
        for r in 0..dim {
            let mut s = 0.0;
            for c in 0..dim {
                s += b[r * dim + c] * v[c];
            }
            w[r] = s;
        }
        // Rayleigh quotient (v is unit length).
        let lambda: f64 = v.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
        let wnorm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if wnorm == 0.0 {
            return Ok(0.0);
        }
        for (x, y) in v.iter_mut().zip(w.iter()) {
            *x = y / wnorm;
        }
        if (lambda - lambda_prev).abs() <= SPECTRAL_TOL * lambda.max(f64::MIN_POSITIVE) {
            return Ok(lambda.max(0.0).sqrt() * SPECTRAL_INFLATE);
        }
        lambda_prev = lambda;
    }
    Err(Error::PowerIterationStalled {
        max_iterations: SPECTRAL_MAX_ITER,
    })
}

const POWER_ITERATION_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

/// Frobenius norm, an upper bound for the spectral norm.
pub fn frobenius_norm(matrix: &[f64]) -> f64 {
    matrix.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Affine self-map `x -> M x + c` of R^d with cached Lipschitz constant
/// `lip = |M|_2`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    matrix: Vec<f64>,
    offset: Vec<f64>,
    lip: f64,
}

impl AffineMap {
    pub fn new(matrix: Vec<f64>, offset: Vec<f64>) -> Result<Self> {
        let dim = offset.len();
        if matrix.len() != dim * dim {
            return Err(Error::Parse {
                detail: format!(
                    "matrix has {} entries, expected {} for dim {dim}",
                    matrix.len(),
                    dim * dim
                ),
            });
        }
        if offset.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        let lip = spectral_norm(&matrix, dim)?;
        Ok(Self {
            matrix,
            offset,
            lip,
        })
    }

    /// Builds a map with an externally computed Lipschitz constant. Used when
    /// many maps share the same matrix and the norm is already known.
    pub(crate) fn from_parts(matrix: Vec<f64>, offset: Vec<f64>, lip: f64) -> Self {
        debug_assert_eq!(matrix.len(), offset.len() * offset.len());
        Self {
            matrix,
            offset,
            lip,
        }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn lip(&self) -> f64 {
        self.lip
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (r, out_r) in out.iter_mut().enumerate() {
            let row = &self.matrix[r * d..(r + 1) * d];
            let mut s = 0.0;
            for (m, c) in row.iter().zip(x.iter()) {
                s += m * c;
            }
            *out_r = s + self.offset[r];
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.apply_into(x, &mut out);
        out
    }

    /// Fixed point of the map, by iteration (requires `lip < 1`).
    pub fn fixed_point(&self) -> Point {
        let d = self.dim();
        let mut x = self.offset.clone();
        let mut next = vec![0.0; d];
        for _ in 0..10_000 {
            self.apply_into(&x, &mut next);
            let step = dist_slices(&x, &next);
            std::mem::swap(&mut x, &mut next);
            if step <= 1e-15 * (1.0 + x.iter().map(|c| c.abs()).fold(0.0, f64::max)) {
                break;
            }
        }
        Point::new(x).expect("fixed point is finite for a contraction")
    }
}

/// Finite IFS of affine contractions; `alpha = max lip < 1`.
#[derive(Debug, Clone)]
pub struct FiniteIfs {
    maps: Vec<AffineMap>,
    dim: usize,
    alpha: f64,
}

impl FiniteIfs {
    pub fn new(maps: Vec<AffineMap>) -> Result<Self> {
        let first = maps.first().ok_or(Error::EmptyPointSet)?;
        let dim = first.dim();
        let mut alpha = 0.0f64;
        for m in &maps {
            if m.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.dim(),
                });
            }
            alpha = alpha.max(m.lip());
        }
        if alpha >= 1.0 {
            return Err(Error::NotContractive {
                detail: format!("max Lipschitz constant {alpha} >= 1"),
            });
        }
        Ok(Self { maps, dim, alpha })
    }

    pub fn maps(&self) -> &[AffineMap] {
        &self.maps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Contraction factor of the fractal operator, `max_i Lip(psi_i)`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Default iteration seed: the fixed point of the first map.
    pub fn default_seed(&self) -> PointSet {
        PointSet::singleton(&self.maps[0].fixed_point())
    }
}

/// Grid spacing policy for the attractor iteration.
#[derive(Debug, Clone)]
pub enum PruneSchedule {
    /// No pruning: the exact Picard sequence.
    Exact,
    /// Fixed spacing every step.
    Constant(f64),
    /// Spacing derived from the target tolerance: half the tolerance budget
    /// goes to accumulated pruning error, and the spacing snaps down to a
    /// power of two so iterates of dyadic systems reuse grid points.
    Auto,
    /// Explicit per-step spacings; the last entry repeats.
    Explicit(Vec<f64>),
}

impl PruneSchedule {
    fn delta(&self, tol: f64, alpha: f64, dim: usize) -> f64 {
        match self {
            PruneSchedule::Exact => 0.0,
            PruneSchedule::Constant(d) => *d,
            PruneSchedule::Auto => pow2_floor(tol * (1.0 - alpha) / (dim as f64).sqrt()),
            PruneSchedule::Explicit(v) => v.last().copied().unwrap_or(0.0),
        }
    }

    fn delta_at(&self, k: usize, tol: f64, alpha: f64, dim: usize) -> f64 {
        match self {
            PruneSchedule::Explicit(v) => v
                .get(k - 1)
                .copied()
                .unwrap_or_else(|| self.delta(tol, alpha, dim)),
            _ => self.delta(tol, alpha, dim),
        }
    }
}

/// Largest power of two `<= x` (0 for non-positive `x`).
pub(crate) fn pow2_floor(x: f64) -> f64 {
    if x <= 0.0 || !x.is_finite() {
        return 0.0;
    }
    let e = x.log2().floor();
    let candidate = 2.0f64.powi(e as i32);
    // guard against log2 rounding at exact powers of two
    if candidate > x {
        candidate / 2.0
    } else if candidate * 2.0 <= x {
        candidate * 2.0
    } else {
        candidate
    }
}

/// Resource caps for iterative solvers.
#[derive(Debug, Clone)]
pub struct Budgets {
    /// Cap on the cardinality of any materialized point set.
    pub max_points: usize,
    /// Cap on the number of induced maps.
    pub max_maps: usize,
    /// Cap on iterations of any single fixed-point loop.
    pub max_iterations: usize,
    /// Cap on raw product-support size in measure pushforwards.
    pub max_product_atoms: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            max_points: 10_000_000,
            max_maps: 200_000,
            max_iterations: 10_000,
            max_product_atoms: 500_000,
        }
    }
}

/// One application of the fractal operator: the union of the images of `a`
/// under every map, pruned to a grid of spacing `delta` (`delta == 0` keeps
/// the exact union).
pub fn fractal_step(ifs: &FiniteIfs, a: &PointSet, delta: f64) -> Result<PointSet> {
    Ok(fractal_step_measured(ifs, a, delta)?.0)
}

/// [`fractal_step`] plus the exact maximum snap distance of the pruning pass
/// (0 when `delta == 0`).
pub fn fractal_step_measured(ifs: &FiniteIfs, a: &PointSet, delta: f64) -> Result<(PointSet, f64)> {
    if a.dim() != ifs.dim() {
        return Err(Error::DimensionMismatch {
            expected: ifs.dim(),
            got: a.dim(),
        });
    }
    let dim = ifs.dim();
    let mut out = vec![0.0; dim];
    if delta > 0.0 {
        let mut accum = GridAccum::new(dim, delta);
        for map in ifs.maps() {
            for p in a.iter() {
                map.apply_into(p, &mut out);
                accum.insert(&out);
            }
        }
        Ok(accum.finish())
    } else {
        let mut data = Vec::with_capacity(ifs.maps().len() * a.len() * dim);
        for map in ifs.maps() {
            for p in a.iter() {
                map.apply_into(p, &mut out);
                data.extend_from_slice(&out);
            }
        }
        Ok((PointSet::from_flat(data, dim)?, 0.0))
    }
}

/// Deterministic attractor iteration with a certified stopping rule.
///
/// Iterates `A_k = prune(F_R(A_{k-1}), delta_k)` and stops once the ledger
/// bound `alpha^k/(1-alpha) * d01 + sum alpha^(k-i) * eps_i` drops to `tol`,
/// where `eps_i` is the measured pruning error of step `i` and `d01` the
/// measured upper bound `h(A_0, A_1) + eps_1` on the initial displacement.
/// The returned set is certified within `tol` of the exact attractor unless
/// the report carries a budget flag.
pub fn attractor(
    ifs: &FiniteIfs,
    seed: &PointSet,
    tol: f64,
    schedule: &PruneSchedule,
    budgets: &Budgets,
) -> Result<(PointSet, ConvergenceReport)> {
    if tol <= 0.0 {
        return Err(Error::NonPositive {
            quantity: "tol",
            value: tol,
        });
    }
    if seed.dim() != ifs.dim() {
        return Err(Error::DimensionMismatch {
            expected: ifs.dim(),
            got: seed.dim(),
        });
    }
    let alpha = ifs.alpha();
    let mut current = seed.clone();
    let mut ledger: Option<OstrowskiLedger> = None;
    let mut displacements = Vec::new();
    let mut converged = false;
    let mut budget_exceeded = None;

    for k in 1..=budgets.max_iterations {
        let delta = schedule.delta_at(k, tol, alpha, ifs.dim());
        let (next, eps) = fractal_step_measured(ifs, &current, delta)?;
        let step_h = hausdorff(&current, &next)?;
        displacements.push(step_h);
        let ledger = ledger.get_or_insert_with(|| {
            // h(A_0, F(A_0)) <= h(A_0, A_1) + h(A_1, F(A_0)) <= step_h + eps
            OstrowskiLedger::new(alpha, step_h + eps)
        });
        let bound = ledger.push(0.0, delta, eps);
        current = next;
        if bound <= tol {
            converged = true;
            break;
        }
        if current.len() > budgets.max_points {
            budget_exceeded = Some(format!(
                "point budget: {} points exceeds {}",
                current.len(),
                budgets.max_points
            ));
            break;
        }
    }
    let ledger = ledger.expect("at least one iteration ran");
    if !converged && budget_exceeded.is_none() {
        budget_exceeded = Some(format!(
            "iteration budget: bound {} above tol {tol} after {} steps",
            ledger.last_bound(),
            budgets.max_iterations
        ));
    }
    Ok((
        current,
        ConvergenceReport {
            ledger,
            step_displacements: displacements,
            converged,
            budget_exceeded,
        },
    ))
}
