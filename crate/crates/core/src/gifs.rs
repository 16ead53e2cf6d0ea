//! Generalized iterated function systems of order `m` and their reduction to
//! ordinary IFS.
//!
//! A GIFS `S = (R^d)^m -> R^d` consists of multi-affine contractions
//! `phi_j(x_1, .., x_m) = A_1 x_1 + ... + A_m x_m + c_j` with per-argument
//! Lipschitz data `a_i = |A_i|_2` and `sum_i a_i < 1`. Its attractor `A_S` is
//! the fixed point of `F_S(A) = U_j phi_j(A, .., A)`.
//!
//! Substituting a fixed set `B` into arguments `2..m` induces an ordinary IFS
//! `R_B` with maps `x -> phi_j(x, b_2, .., b_m)` indexed by
//! `(b, j) in B^(m-1) x {1..n}`. The evaluation map `ev_S(B) = A_(R_B)` is a
//! contraction with `Lip(ev_S) <= lip_fs = max_j sum_i a_i`, and its fixed
//! point is `A_S`. [`approximate_attractor`] iterates `ev_S` with finite
//! subsamples and inexact inner solves, certifying the total error through an
//! [`OstrowskiLedger`](crate::report::OstrowskiLedger).

use crate::error::{Error, Result};
use crate::ifs::{attractor, spectral_norm, AffineMap, Budgets, FiniteIfs, PruneSchedule};
use crate::metric::{beta_cover_capped, hausdorff, GridAccum, PointSet};
use crate::report::{ConvergenceReport, OstrowskiLedger};

/// Multi-affine contraction `phi(x_1, .., x_m) = sum_i A_i x_i + c` with
/// cached per-argument Lipschitz constants `a_i = |A_i|_2`, `sum a_i < 1`.
#[derive(Debug, Clone)]
pub struct MultiAffineMap {
    matrices: Vec<Vec<f64>>,
    offset: Vec<f64>,
    arg_lips: Vec<f64>,
}

impl MultiAffineMap {
    pub fn new(matrices: Vec<Vec<f64>>, offset: Vec<f64>) -> Result<Self> {
        let dim = offset.len();
        if matrices.is_empty() {
            return Err(Error::Parse {
                detail: "a map needs at least one matrix".into(),
            });
        }
        for (i, m) in matrices.iter().enumerate() {
            if m.len() != dim * dim {
                return Err(Error::Parse {
                    detail: format!(
                        "matrix {i} has {} entries, expected {} for dim {dim}",
                        m.len(),
                        dim * dim
                    ),
                });
            }
        }
        if offset.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        let arg_lips = matrices
            .iter()
            .map(|m| spectral_norm(m, dim))
            .collect::<Result<Vec<f64>>>()?;
        let total: f64 = arg_lips.iter().sum();
        if total >= 1.0 {
            return Err(Error::NotContractive {
                detail: format!("sum of argument Lipschitz constants is {total} >= 1"),
            });
        }
        Ok(Self {
            matrices,
            offset,
            arg_lips,
        })
    }

    pub fn order(&self) -> usize {
        self.matrices.len()
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    /// Per-argument Lipschitz constants `(a_1, .., a_m)`.
    pub fn arg_lips(&self) -> &[f64] {
        &self.arg_lips
    }

    pub fn lip_sum(&self) -> f64 {
        self.arg_lips.iter().sum()
    }

    pub fn matrices(&self) -> &[Vec<f64>] {
        &self.matrices
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    /// Offset of the induced one-argument map for fixed tail arguments:
    /// `c + sum_{i>=2} A_i b_i`, accumulated in increasing `i`. The induced
    /// maps built from this reproduce `apply` bit for bit.
    pub fn partial_offset(&self, tail: &[&[f64]]) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim()];
        self.partial_offset_into(tail, &mut acc);
        acc
    }

    pub(crate) fn partial_offset_into(&self, tail: &[&[f64]], acc: &mut [f64]) {
        debug_assert_eq!(tail.len(), self.order() - 1);
        let d = self.dim();
        acc.copy_from_slice(&self.offset);
        for (i, b) in tail.iter().enumerate() {
            let mat = &self.matrices[i + 1];
            for (r, acc_r) in acc.iter_mut().enumerate() {
                let mut s = 0.0;
                for c in 0..d {
                    s += mat[r * d + c] * b[c];
                }
                *acc_r += s;
            }
        }
    }

    /// `A_1 x + tail_offset`, the induced-map action with a precomputed tail.
    pub(crate) fn apply_with_tail_offset(&self, x: &[f64], tail_offset: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let mat = &self.matrices[0];
        for r in 0..d {
            let mut s = 0.0;
            for c in 0..d {
                s += mat[r * d + c] * x[c];
            }
            out[r] = s + tail_offset[r];
        }
    }

    pub fn apply_into(&self, args: &[&[f64]], out: &mut [f64]) {
        debug_assert_eq!(args.len(), self.order());
        let tail = self.partial_offset(&args[1..]);
        self.apply_with_tail_offset(args[0], &tail, out);
    }

    pub fn apply(&self, args: &[&[f64]]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.apply_into(args, &mut out);
        out
    }
}

/// GIFS of order `m`: finitely many multi-affine contractions sharing order
/// and dimension, with `lip_fs = max_j sum_i a_i^(j) < 1`.
#[derive(Debug, Clone)]
pub struct GifsSystem {
    maps: Vec<MultiAffineMap>,
    order: usize,
    dim: usize,
    lip_fs: f64,
}

impl GifsSystem {
    pub fn new(maps: Vec<MultiAffineMap>) -> Result<Self> {
        let first = maps.first().ok_or(Error::EmptyPointSet)?;
        let (order, dim) = (first.order(), first.dim());
        let mut lip_fs = 0.0f64;
        for m in &maps {
            if m.order() != order {
                return Err(Error::Parse {
                    detail: format!("maps mix orders {order} and {}", m.order()),
                });
            }
            if m.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.dim(),
                });
            }
            lip_fs = lip_fs.max(m.lip_sum());
        }
        Ok(Self {
            maps,
            order,
            dim,
            lip_fs,
        })
    }

    pub fn maps(&self) -> &[MultiAffineMap] {
        &self.maps
    }

    pub fn n(&self) -> usize {
        self.maps.len()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `Lip(F_S) <= max_j sum_i a_i^(j)`, also the certified bound on
    /// `Lip(ev_S)`.
    pub fn lip_fs(&self) -> f64 {
        self.lip_fs
    }

    /// Default seed: the fixed point of `x -> phi_1(x, .., x)`.
    pub fn default_seed(&self) -> Result<PointSet> {
        let d = self.dim;
        let mut sum = vec![0.0; d * d];
        for mat in self.maps[0].matrices() {
            for (s, m) in sum.iter_mut().zip(mat.iter()) {
                *s += m;
            }
        }
        let diag = AffineMap::from_parts(sum, self.maps[0].offset().to_vec(), self.lip_fs);
        Ok(PointSet::singleton(&diag.fixed_point()))
    }
}

/// Per-map and aggregate Lipschitz data of a system.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzData {
    /// `(a_1, .., a_m)` for each map.
    pub per_map: Vec<Vec<f64>>,
    /// `max_j sum_i a_i^(j)`.
    pub lip_fs: f64,
    /// Certified contraction bound for the evaluation map (equals `lip_fs`).
    pub alpha_ev_bound: f64,
}

pub fn lipschitz_data(system: &GifsSystem) -> LipschitzData {
    LipschitzData {
        per_map: system.maps.iter().map(|m| m.arg_lips().to_vec()).collect(),
        lip_fs: system.lip_fs,
        alpha_ev_bound: system.lip_fs,
    }
}

/// One application of the simplified generalized fractal operator
/// `F_S(A) = U_j phi_j(A, .., A)`, pruned at `delta`.
///
/// The raw image count is `n * |A|^m`; if it exceeds the point budget the
/// call fails and the caller must raise `delta` or shrink `A`.
pub fn gifs_step(
    system: &GifsSystem,
    a: &PointSet,
    delta: f64,
    budgets: &Budgets,
) -> Result<PointSet> {
    let args: Vec<&PointSet> = vec![a; system.order()];
    gifs_step_multi(system, &args, delta, budgets)
}

/// `F_S(A_1, .., A_m) = U_j phi_j(A_1 x .. x A_m)`, pruned at `delta`.
pub fn gifs_step_multi(
    system: &GifsSystem,
    args: &[&PointSet],
    delta: f64,
    budgets: &Budgets,
) -> Result<PointSet> {
    if args.len() != system.order() {
        return Err(Error::Parse {
            detail: format!(
                "{} argument sets for a system of order {}",
                args.len(),
                system.order()
            ),
        });
    }
    for s in args {
        if s.dim() != system.dim() {
            return Err(Error::DimensionMismatch {
                expected: system.dim(),
                got: s.dim(),
            });
        }
    }
    let raw = args
        .iter()
        .try_fold(system.n(), |acc, s| acc.checked_mul(s.len()))
        .unwrap_or(usize::MAX);
    if raw > budgets.max_points {
        return Err(Error::BudgetExceeded {
            budget: "point",
            needed: raw,
            limit: budgets.max_points,
        });
    }
    let dim = system.dim();
    let m = system.order();
    let tail_len = m - 1;
    let n = system.n();
    let mut out = vec![0.0; dim];
    // per-map induced offsets for the current tail tuple, hoisted out of the
    // inner loop over the first argument
    let mut offsets = vec![0.0; dim * n];
    let mut idx = vec![0usize; tail_len];
    let mut tail: Vec<&[f64]> = vec![args[0].point(0); tail_len];

    let mut emit_all = |sink: &mut dyn FnMut(&[f64])| loop {
        for (k, (slot, &i)) in tail.iter_mut().zip(idx.iter()).enumerate() {
            *slot = args[k + 1].point(i);
        }
        for (j, phi) in system.maps().iter().enumerate() {
            phi.partial_offset_into(&tail, &mut offsets[j * dim..(j + 1) * dim]);
        }
        for x in args[0].iter() {
            for (j, phi) in system.maps().iter().enumerate() {
                phi.apply_with_tail_offset(x, &offsets[j * dim..(j + 1) * dim], &mut out);
                sink(&out);
            }
        }
        let mut pos = tail_len;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < args[pos + 1].len() {
                break;
            }
            idx[pos] = 0;
        }
    };

    if delta > 0.0 {
        let mut accum = GridAccum::new(dim, delta);
        emit_all(&mut |p| accum.insert(p));
        Ok(accum.finish().0)
    } else {
        let mut data = Vec::with_capacity(raw * dim);
        emit_all(&mut |p| data.extend_from_slice(p));
        PointSet::from_flat(data, dim)
    }
}

/// The classical m-tuple recursion `A_{k+m} = F_S(A_k, .., A_{k+m-1})`,
/// run for `steps` new terms; returns the last term. Serves as the
/// independent oracle for evaluation-map results.
pub fn classical_gifs_iterate(
    system: &GifsSystem,
    seeds: &[PointSet],
    steps: usize,
    delta: f64,
    budgets: &Budgets,
) -> Result<PointSet> {
    if seeds.len() != system.order() {
        return Err(Error::Parse {
            detail: format!(
                "{} seed sets for a system of order {}",
                seeds.len(),
                system.order()
            ),
        });
    }
    if steps == 0 {
        return Err(Error::NonPositive {
            quantity: "steps",
            value: 0.0,
        });
    }
    let mut window: Vec<PointSet> = seeds.to_vec();
    let mut last = None;
    for _ in 0..steps {
        let args: Vec<&PointSet> = window.iter().collect();
        let next = gifs_step_multi(system, &args, delta, budgets)?;
        window.rotate_left(1);
        let m = window.len();
        window[m - 1] = next.clone();
        last = Some(next);
    }
    Ok(last.expect("steps >= 1"))
}

/// Builds the finite IFS induced by `B`: one affine map
/// `x -> A_1^(j) x + (c_j + sum_{i>=2} A_i^(j) b_i)` per
/// `(b, j) in B^(m-1) x {1..n}`.
pub fn induce_ifs(system: &GifsSystem, b: &PointSet, budgets: &Budgets) -> Result<FiniteIfs> {
    if b.dim() != system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            got: b.dim(),
        });
    }
    let tail_len = system.order() - 1;
    let count = b
        .len()
        .checked_pow(tail_len as u32)
        .and_then(|p| p.checked_mul(system.n()))
        .unwrap_or(usize::MAX);
    if count > budgets.max_maps {
        return Err(Error::BudgetExceeded {
            budget: "map",
            needed: count,
            limit: budgets.max_maps,
        });
    }
    let mut maps = Vec::with_capacity(count);
    let mut idx = vec![0usize; tail_len];
    let mut tail: Vec<&[f64]> = vec![b.point(0); tail_len];
    loop {
        for (slot, &i) in tail.iter_mut().zip(idx.iter()) {
            *slot = b.point(i);
        }
        for phi in system.maps() {
            maps.push(AffineMap::from_parts(
                phi.matrices()[0].clone(),
                phi.partial_offset(&tail),
                phi.arg_lips()[0],
            ));
        }
        let mut pos = tail_len;
        loop {
            if pos == 0 {
                return FiniteIfs::new(maps);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < b.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Evaluation map `ev_S(B)`: the attractor of the induced IFS `R_B`, solved
/// to a certified Hausdorff tolerance `sigma`.
pub fn evaluation_map(
    system: &GifsSystem,
    b: &PointSet,
    sigma: f64,
    budgets: &Budgets,
) -> Result<(PointSet, ConvergenceReport)> {
    evaluation_map_seeded(system, b, sigma, None, budgets)
}

pub(crate) fn evaluation_map_seeded(
    system: &GifsSystem,
    b: &PointSet,
    sigma: f64,
    seed: Option<&PointSet>,
    budgets: &Budgets,
) -> Result<(PointSet, ConvergenceReport)> {
    if sigma <= 0.0 {
        return Err(Error::NonPositive {
            quantity: "sigma",
            value: sigma,
        });
    }
    let ifs = induce_ifs(system, b, budgets)?;
    let default_seed;
    let seed = match seed {
        Some(s) => s,
        None => {
            default_seed = ifs.default_seed();
            &default_seed
        }
    };
    attractor(&ifs, seed, sigma, &PruneSchedule::Auto, budgets)
}

/// Inexactness schedule for the outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    /// `1/k`.
    Harmonic,
    /// `ratio^k`.
    Geometric { ratio: f64 },
    /// `max(ratio^k, floor)`.
    GeometricFloor { ratio: f64, floor: f64 },
}

impl Schedule {
    pub fn value(&self, k: usize) -> f64 {
        match self {
            Schedule::Harmonic => 1.0 / k as f64,
            Schedule::Geometric { ratio } => ratio.powi(k as i32),
            Schedule::GeometricFloor { ratio, floor } => ratio.powi(k as i32).max(*floor),
        }
    }
}

/// Options for [`approximate_attractor`] and
/// [`joint_iterate`](crate::measure::joint_iterate).
#[derive(Debug, Clone)]
pub struct OuterOptions {
    pub beta: Schedule,
    pub sigma: Schedule,
    /// Number of outer steps `K`.
    pub steps: usize,
    /// Optional certified bound at which to stop early.
    pub target: Option<f64>,
    /// Inexactness forcing: solve each step no looser than a fixed fraction
    /// of the current certified bound, so the ledger keeps contracting even
    /// under slow schedules. The schedule values remain ceilings.
    pub adaptive: bool,
    pub budgets: Budgets,
}

impl Default for OuterOptions {
    fn default() -> Self {
        Self {
            beta: Schedule::Harmonic,
            sigma: Schedule::Harmonic,
            steps: 12,
            target: None,
            adaptive: true,
            budgets: Budgets::default(),
        }
    }
}

/// Forcing fraction: inexactness is kept below `eta * current_bound`,
/// with `eta` capped so the certified bound contracts at `(1 + alpha) / 2`
/// or better.
pub(crate) fn forcing_eta(alpha: f64) -> f64 {
    if alpha <= 0.0 {
        return 0.1;
    }
    (0.1f64).min((1.0 - alpha) / (4.0 * alpha))
}

/// The outer approximation loop for the GIFS attractor.
///
/// Per step `k`: subsample `B_{k-1}` to a covering radius below `beta_k`
/// (farthest-point sampling, capped by the map budget), induce the finite
/// IFS, inner-solve its attractor to `sigma_k` seeded at the previous
/// iterate, and record the achieved inexactness
/// `eps_k = lip_fs * beta_hat_k + sigma_hat_k` where both hatted quantities
/// are measured, certified values. The ledger bound after step `K` certifies
/// `h(B_K, A_S) <= bounds[K]`.
pub fn approximate_attractor(
    system: &GifsSystem,
    b0: &PointSet,
    opts: &OuterOptions,
) -> Result<(PointSet, ConvergenceReport)> {
    if b0.dim() != system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            got: b0.dim(),
        });
    }
    if opts.steps == 0 {
        return Err(Error::NonPositive {
            quantity: "steps",
            value: 0.0,
        });
    }
    let alpha = system.lip_fs();
    let eta = forcing_eta(alpha);
    let budgets = &opts.budgets;
    let sub_cap = subsample_cap(system, budgets);

    let mut current = b0.clone();
    let mut ledger: Option<OstrowskiLedger> = None;
    let mut displacements = Vec::new();
    let mut converged = false;
    let mut budget_note: Option<String> = None;
    let mut annotations: Vec<String> = Vec::new();

    for k in 1..=opts.steps {
        let mut beta_k = opts.beta.value(k);
        let mut sigma_k = opts.sigma.value(k);
        if opts.adaptive {
            if let Some(l) = &ledger {
                // Keep eps_k = alpha*beta + sigma below eta*(alpha + 1/2)
                // times the current bound, so the bound contracts at
                // alpha*(1 + eta) + eta/2 < 1 per step.
                let b = l.last_bound();
                beta_k = beta_k.min(eta * b);
                sigma_k = sigma_k.min(eta * b / 2.0);
            }
        }
        let (bsub, beta_hat) = beta_cover_capped(&current, beta_k.max(f64::MIN_POSITIVE), sub_cap);
        if beta_hat >= beta_k && beta_hat > 0.0 {
            annotations.push(format!(
                "step {k}: map budget capped the subsample; covering radius {beta_hat:.3e} above requested {beta_k:.3e}"
            ));
        }
        let (next, inner) = evaluation_map_seeded(system, &bsub, sigma_k, Some(&current), budgets)?;
        let sigma_hat = inner.final_bound();
        if let Some(flag) = inner.budget_exceeded {
            budget_note = Some(format!("inner solve at step {k}: {flag}"));
        }
        let eps = alpha * beta_hat + sigma_hat;
        let step_h = hausdorff(&current, &next)?;
        displacements.push(step_h);
        let ledger = ledger.get_or_insert_with(|| OstrowskiLedger::new(alpha, step_h + eps));
        let bound = ledger.push(beta_hat, sigma_hat, eps);
        current = next;
        if budget_note.is_some() {
            break;
        }
        if let Some(target) = opts.target {
            if bound <= target {
                converged = true;
                break;
            }
        }
        if k == opts.steps {
            converged = true;
        }
    }
    let mut ledger = ledger.expect("at least one outer step ran");
    for note in annotations {
        ledger.annotate(note);
    }
    Ok((
        current,
        ConvergenceReport {
            ledger,
            step_displacements: displacements,
            converged,
            budget_exceeded: budget_note,
        },
    ))
}

/// Largest subsample size whose induced system stays within the map budget.
pub(crate) fn subsample_cap(system: &GifsSystem, budgets: &Budgets) -> usize {
    if system.order() == 1 {
        return usize::MAX;
    }
    let per_map = (budgets.max_maps / system.n()).max(1);
    let tail = (system.order() - 1) as f64;
    ((per_map as f64).powf(1.0 / tail).floor() as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::fractal_step;
    use crate::metric::hausdorff;

    fn set1(xs: &[f64]) -> PointSet {
        PointSet::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

    /// Order-2 system phi_1(x,y) = (x+y)/4, phi_2(x,y) = (x+y)/4 + 1/2,
    /// whose attractor is [0, 1].
    pub(crate) fn averaging_pair() -> GifsSystem {
        let phi1 = MultiAffineMap::new(vec![vec![0.25], vec![0.25]], vec![0.0]).unwrap();
        let phi2 = MultiAffineMap::new(vec![vec![0.25], vec![0.25]], vec![0.5]).unwrap();
        GifsSystem::new(vec![phi1, phi2]).unwrap()
    }

    #[test]
    fn gifs_step_examples() {
        let s = averaging_pair();
        let b = Budgets::default();
        assert_eq!(
            gifs_step(&s, &set1(&[0.0]), 0.0, &b).unwrap(),
            set1(&[0.0, 0.5])
        );
        assert_eq!(
            gifs_step(&s, &set1(&[0.0, 1.0]), 0.0, &b).unwrap(),
            set1(&[0.0, 0.25, 0.5, 0.75, 1.0])
        );
    }

    #[test]
    fn gifs_step_m1_equals_fractal_step_exactly() {
        let phi1 = MultiAffineMap::new(vec![vec![0.5]], vec![0.0]).unwrap();
        let phi2 = MultiAffineMap::new(vec![vec![0.5]], vec![0.5]).unwrap();
        let s = GifsSystem::new(vec![phi1, phi2]).unwrap();
        let ifs = induce_ifs(&s, &set1(&[123.0]), &Budgets::default()).unwrap();
        let a = set1(&[0.0, 0.3, 1.0]);
        let via_gifs = gifs_step(&s, &a, 0.0, &Budgets::default()).unwrap();
        let via_ifs = fractal_step(&ifs, &a, 0.0).unwrap();
        assert_eq!(via_gifs, via_ifs);
    }

    #[test]
    fn gifs_step_budget_error() {
        let s = averaging_pair();
        let budgets = Budgets {
            max_points: 10,
            ..Budgets::default()
        };
        let a = set1(&[0.0, 0.1, 0.2, 0.3]);
        // raw = 2 * 4^2 = 32 > 10
        assert!(matches!(
            gifs_step(&s, &a, 0.1, &budgets),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn classical_first_step_is_gifs_step() {
        let s = averaging_pair();
        let b = Budgets::default();
        let seeds = vec![set1(&[0.0]), set1(&[0.0])];
        let one = classical_gifs_iterate(&s, &seeds, 1, 0.0, &b).unwrap();
        assert_eq!(one, gifs_step(&s, &set1(&[0.0]), 0.0, &b).unwrap());
    }

    #[test]
    fn classical_converges_to_unit_interval() {
        let s = averaging_pair();
        let b = Budgets::default();
        let seeds = vec![set1(&[0.0]), set1(&[0.0])];
        let result = classical_gifs_iterate(&s, &seeds, 25, 1e-3, &b).unwrap();
        let grid = set1(&(0..=1000).map(|i| i as f64 / 1000.0).collect::<Vec<_>>());
        let h = hausdorff(&result, &grid).unwrap();
        assert!(h <= 5e-3, "h = {h}");
    }

    #[test]
    fn induce_counts_and_values() {
        let s = averaging_pair();
        let b = Budgets::default();
        let three = set1(&[0.0, 0.5, 1.0]);
        let ifs = induce_ifs(&s, &three, &b).unwrap();
        assert_eq!(ifs.maps().len(), 6); // n * |B|^(m-1) = 2 * 3

        let ifs0 = induce_ifs(&s, &set1(&[0.0]), &b).unwrap();
        let offsets: Vec<f64> = ifs0.maps().iter().map(|m| m.offset()[0]).collect();
        assert_eq!(offsets, vec![0.0, 0.5]); // {x/4, x/4 + 1/2}
        assert!(ifs0.maps().iter().all(|m| m.matrix()[0] == 0.25));

        let ifs1 = induce_ifs(&s, &set1(&[1.0]), &b).unwrap();
        let offsets: Vec<f64> = ifs1.maps().iter().map(|m| m.offset()[0]).collect();
        assert_eq!(offsets, vec![0.25, 0.75]); // {x/4 + 1/4, x/4 + 3/4}
    }

    #[test]
    fn induce_map_budget() {
        let s = averaging_pair();
        let budgets = Budgets {
            max_maps: 5,
            ..Budgets::default()
        };
        let three = set1(&[0.0, 0.5, 1.0]);
        assert!(matches!(
            induce_ifs(&s, &three, &budgets),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    /// Operator identity (small instances): the induced fractal step equals
    /// the direct enumeration of phi_j over A x B^(m-1), bit for bit.
    #[test]
    fn induced_step_equals_direct_enumeration() {
        let s = averaging_pair();
        let b = Budgets::default();
        let bset = set1(&[0.0, 0.7]);
        let a = set1(&[0.1, 0.4, 0.9]);
        let ifs = induce_ifs(&s, &bset, &b).unwrap();
        let via_induced = fractal_step(&ifs, &a, 0.0).unwrap();

        let mut data = Vec::new();
        for phi in s.maps() {
            for x in a.iter() {
                for bb in bset.iter() {
                    data.extend_from_slice(&phi.apply(&[x, bb]));
                }
            }
        }
        let direct = PointSet::from_flat(data, 1).unwrap();
        assert_eq!(via_induced, direct);
    }

    #[test]
    fn evaluation_map_ignores_b_when_tail_matrices_vanish() {
        let phi1 = MultiAffineMap::new(vec![vec![0.5], vec![0.0]], vec![0.0]).unwrap();
        let phi2 = MultiAffineMap::new(vec![vec![0.3], vec![0.0]], vec![0.6]).unwrap();
        let s = GifsSystem::new(vec![phi1, phi2]).unwrap();
        let b = Budgets::default();
        let (a0, _) = evaluation_map(&s, &set1(&[0.0]), 1e-6, &b).unwrap();
        let (a7, _) = evaluation_map(&s, &set1(&[7.0]), 1e-6, &b).unwrap();
        assert_eq!(a0, a7);
    }

    #[test]
    fn evaluation_map_on_singleton_gives_cantor_endpoints() {
        let s = averaging_pair();
        let b = Budgets::default();
        let sigma = 1e-5;
        let (set, report) = evaluation_map(&s, &set1(&[0.0]), sigma, &b).unwrap();
        assert!(report.converged);
        // endpoints 0 and 2/3 are fixed points of x/4 and x/4 + 1/2
        let endpoints = set1(&[0.0, 2.0 / 3.0]);
        assert!(crate::metric::directed_distance(&endpoints, &set).unwrap() <= sigma);
        // h-stability: refining the tolerance moves the output by at most
        // the sum of the two certificates
        let (finer, _) = evaluation_map(&s, &set1(&[0.0]), sigma / 10.0, &b).unwrap();
        assert!(hausdorff(&set, &finer).unwrap() <= sigma + sigma / 10.0);
    }

    #[test]
    fn evaluation_map_fixes_the_attractor() {
        let s = averaging_pair();
        let b = Budgets::default();
        let grid = set1(&(0..=200).map(|i| i as f64 / 200.0).collect::<Vec<_>>());
        let sigma = 1e-4;
        let (image, _) = evaluation_map(&s, &grid, sigma, &b).unwrap();
        // ev_S(A_S) = A_S, and the grid is within 2.5e-3 of A_S = [0, 1]
        let h = hausdorff(&image, &grid).unwrap();
        assert!(h <= s.lip_fs() * 2.5e-3 + sigma + 2.5e-3, "h = {h}");
    }

    #[test]
    fn approximate_attractor_certifies_unit_interval() {
        let s = averaging_pair();
        let opts = OuterOptions {
            steps: 8,
            ..OuterOptions::default()
        };
        let (set, report) = approximate_attractor(&s, &set1(&[0.0]), &opts).unwrap();
        assert!(report.converged);
        let bound = report.final_bound();
        let grid = set1(&(0..=2000).map(|i| i as f64 / 2000.0).collect::<Vec<_>>());
        let h = hausdorff(&set, &grid).unwrap();
        assert!(h <= bound + 2.5e-4, "h = {h}, bound = {bound}");
        // bounds decrease once contraction dominates
        let bounds = report.ledger.bounds();
        assert!(bounds.last().unwrap() < &bounds[1]);
    }

    #[test]
    fn approximate_attractor_m1_single_step() {
        let phi1 = MultiAffineMap::new(vec![vec![0.5]], vec![0.0]).unwrap();
        let phi2 = MultiAffineMap::new(vec![vec![0.5]], vec![0.5]).unwrap();
        let s = GifsSystem::new(vec![phi1, phi2]).unwrap();
        let opts = OuterOptions {
            steps: 1,
            sigma: Schedule::Geometric { ratio: 1e-3 },
            ..OuterOptions::default()
        };
        let (set, report) = approximate_attractor(&s, &set1(&[0.25]), &opts).unwrap();
        // ev_S is constant in B for m = 1, so B_1 is already sigma_1-close
        let sigma_hat = report.ledger.rows()[0].sigma;
        assert!(sigma_hat <= 1e-3);
        let grid = set1(&(0..=4000).map(|i| i as f64 / 4000.0).collect::<Vec<_>>());
        assert!(hausdorff(&set, &grid).unwrap() <= sigma_hat + 2.5e-4);
    }

    #[test]
    fn lipschitz_data_examples() {
        let s = averaging_pair();
        let data = lipschitz_data(&s);
        assert!((data.per_map[0][0] - 0.25).abs() < 1e-9);
        assert!((data.per_map[0][1] - 0.25).abs() < 1e-9);
        assert!((data.lip_fs - 0.5).abs() < 1e-9);
        assert_eq!(data.lip_fs, data.alpha_ev_bound);

        let half = MultiAffineMap::new(vec![vec![0.5], vec![0.0]], vec![0.0]).unwrap();
        assert!((half.arg_lips()[0] - 0.5).abs() < 1e-9);
        assert_eq!(half.arg_lips()[1], 0.0);
        assert!((half.lip_sum() - 0.5).abs() < 1e-9);

        let m2 = MultiAffineMap::new(
            vec![
                vec![0.3, 0.0, 0.0, 0.1],
                vec![0.0, 0.2, 0.0, 0.0],
            ],
            vec![0.0, 0.0],
        )
        .unwrap();
        assert!((m2.arg_lips()[0] - 0.3).abs() < 1e-9);
        assert!((m2.arg_lips()[1] - 0.2).abs() < 1e-9);
        assert!((m2.lip_sum() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn non_contractive_map_rejected() {
        let err = MultiAffineMap::new(vec![vec![0.5], vec![0.5]], vec![0.0]);
        assert!(matches!(err, Err(Error::NotContractive { .. })));
    }

    #[test]
    fn schedules() {
        assert_eq!(Schedule::Harmonic.value(4), 0.25);
        assert_eq!(Schedule::Geometric { ratio: 0.5 }.value(3), 0.125);
        assert_eq!(
            Schedule::GeometricFloor {
                ratio: 0.5,
                floor: 0.2
            }
            .value(5),
            0.2
        );
    }
}
