//! Discrete probability measures, the Monge-Kantorovich metric, and
//! generalized Markov operators.
//!
//! `d_MK(mu, nu) = sup { |int f dmu - int f dnu| : Lip(f) <= 1 }` equals, by
//! Kantorovich-Rubinstein duality, the optimal-transport cost with Euclidean
//! ground distance; [`mk_distance`] computes that primal program exactly with
//! a transportation simplex. On the line the same value has a closed form,
//! the integral of the CDF difference, exposed separately as
//! [`mk_distance_1d`] and used as an independent oracle.
//!
//! A GIFS with probabilities `(phi_j, q_j)` drives the generalized Markov
//! operator `M(mu_0, .., mu_{m-1}) = sum_j q_j (phi_j)_# (mu_0 x .. x mu_{m-1})`
//! ([`markov_step_gifsp`]). Fixing a measure `nu` in arguments `2..m` gives
//! the Markov operator of the induced system ([`markov_step_induced`]);
//! iterating it is contractive on average with factor `a_1` and converges to
//! the Hutchinson measure ([`hutchinson_measure`]). The joint evaluation map
//! `EV(B, nu)` pairs the induced attractor with the induced Hutchinson
//! measure; [`joint_iterate`] drives it to the GIFS attractor and measure
//! with a certified ledger at the factor
//! `max(lip_fs, sum_{i>=2} a_i / (1 - a_1))`.

use crate::error::{Error, Result};
use crate::gifs::{evaluation_map_seeded, forcing_eta, GifsSystem, OuterOptions};
use crate::ifs::{pow2_floor, Budgets};
use crate::metric::{
    beta_cover_capped, cmp_slices, dist_slices, hausdorff, PointSet, DEDUP_REL_TOL,
};
use crate::report::{ConvergenceReport, OstrowskiLedger};
use std::collections::HashMap;
use std::fmt::Write as _;

/// Support cap per side for the exact transport solve.
pub const MK_SUPPORT_CAP: usize = 2000;
/// Default mass threshold below which atoms merge into their nearest
/// surviving neighbor.
pub const W_MIN_DEFAULT: f64 = 1e-10;
/// Normalization tolerance of the probability-vector invariant.
pub const MASS_TOL: f64 = 1e-12;
/// Raw product counts up to this size are materialized exactly; larger
/// pushforwards stream through a fine grid.
const MATERIALIZE_CAP: usize = 4_000_000;

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Finitely supported probability measure: distinct atoms with strictly
/// positive weights summing to one (within [`MASS_TOL`]). Atoms are kept in
/// lexicographic order, so equal measures have identical buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
    dim: usize,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        if atoms.len() != weights.len() {
            return Err(Error::Parse {
                detail: format!("{} atoms but {} weights", atoms.len(), weights.len()),
            });
        }
        let dim = atoms[0].len();
        for a in &atoms {
            if a.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: a.len(),
                });
            }
        }
        let flat: Vec<f64> = atoms.concat();
        let (m, _) = Self::from_raw(flat, weights, dim)?;
        Ok(m)
    }

    /// Canonicalizes raw (atom, weight) pairs: sorts by (atom, weight bits),
    /// merges atoms within the dedup tolerance, validates positivity and
    /// normalization. Returns the measure and the exact mass-transport slack
    /// of the merge, `sum w * |atom - merged position|`.
    pub(crate) fn from_raw(flat: Vec<f64>, weights: Vec<f64>, dim: usize) -> Result<(Self, f64)> {
        if dim == 0 || flat.is_empty() || flat.len() != weights.len() * dim {
            return Err(Error::Parse {
                detail: "malformed atom buffer".into(),
            });
        }
        if flat.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        if weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
            return Err(Error::NotNormalized {
                detail: "weights must be strictly positive".into(),
            });
        }
        let n = weights.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_unstable_by(|&i, &j| {
            cmp_slices(&flat[i * dim..(i + 1) * dim], &flat[j * dim..(j + 1) * dim])
                .then(weights[i].total_cmp(&weights[j]))
        });
        let diam = {
            let mut s = 0.0;
            for k in 0..dim {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for row in flat.chunks_exact(dim) {
                    lo = lo.min(row[k]);
                    hi = hi.max(row[k]);
                }
                s += (hi - lo) * (hi - lo);
            }
            s.sqrt()
        };
        let tol = DEDUP_REL_TOL * diam;
        let mut atoms = Vec::with_capacity(flat.len());
        let mut ws: Vec<f64> = Vec::with_capacity(n);
        let mut slack = 0.0f64;
        for &i in &order {
            let row = &flat[i * dim..(i + 1) * dim];
            let w = weights[i];
            if !ws.is_empty() {
                let head = &atoms[atoms.len() - dim..];
                let d = dist_slices(head, row);
                if d <= tol {
                    *ws.last_mut().unwrap() += w;
                    slack += w * d;
                    continue;
                }
            }
            atoms.extend_from_slice(row);
            ws.push(w);
        }
        let total = kahan_sum(ws.iter().copied());
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::NotNormalized {
                detail: format!("weights sum to {total}"),
            });
        }
        Ok((
            Self {
                atoms,
                weights: ws,
                dim,
            },
            slack,
        ))
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::new(vec![point.to_vec()], vec![1.0])
    }

    /// Uniform weights on the points of a set.
    pub fn uniform_on(set: &PointSet) -> Self {
        let n = set.len();
        Self {
            atoms: set.flat().to_vec(),
            weights: vec![1.0 / n as f64; n],
            dim: set.dim(),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.atoms
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    pub fn total_mass(&self) -> f64 {
        kahan_sum(self.weights.iter().copied())
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        kahan_sum(self.iter().map(|(x, w)| w * f(x)))
    }

    /// The support as a point set.
    pub fn support_points(&self) -> PointSet {
        PointSet::from_flat(self.atoms.clone(), self.dim).expect("atoms form a valid set")
    }

    /// Snaps atoms to a grid of spacing `delta`, accumulating cell masses.
    /// Returns the coarsened measure and the exact transport slack
    /// `sum w * |move|`, which bounds the Monge-Kantorovich perturbation.
    pub fn coarsen_to_grid(&self, delta: f64) -> (Self, f64) {
        if delta <= 0.0 {
            return (self.clone(), 0.0);
        }
        let mut accum = MeasureGridAccum::new(self.dim, delta);
        for (x, w) in self.iter() {
            accum.insert(x, w);
        }
        accum.finish()
    }

    /// Merges every atom of mass below `w_min` into its nearest surviving
    /// atom. Mass is preserved exactly; the returned slack
    /// `sum w * |move|` bounds the metric perturbation.
    pub fn merge_small(&self, w_min: f64) -> (Self, f64) {
        if w_min <= 0.0 || self.len() == 1 {
            return (self.clone(), 0.0);
        }
        let survivors: Vec<usize> = (0..self.len())
            .filter(|&i| self.weights[i] >= w_min)
            .collect();
        if survivors.len() == self.len() {
            return (self.clone(), 0.0);
        }
        if survivors.is_empty() {
            // keep the heaviest atom
            let mut best = 0usize;
            for i in 1..self.len() {
                if self.weights[i] > self.weights[best] {
                    best = i;
                }
            }
            let slack = kahan_sum(
                (0..self.len())
                    .filter(|&i| i != best)
                    .map(|i| self.weights[i] * dist_slices(self.atom(i), self.atom(best))),
            );
            return (
                Self {
                    atoms: self.atom(best).to_vec(),
                    weights: vec![self.total_mass()],
                    dim: self.dim,
                },
                slack,
            );
        }
        let mut new_weights: Vec<f64> = survivors.iter().map(|&i| self.weights[i]).collect();
        let mut slack = 0.0;
        for i in 0..self.len() {
            if self.weights[i] >= w_min {
                continue;
            }
            let (mut best_j, mut best_d) = (0usize, f64::INFINITY);
            for (j, &s) in survivors.iter().enumerate() {
                let d = dist_slices(self.atom(i), self.atom(s));
                if d < best_d {
                    best_d = d;
                    best_j = j;
                }
            }
            new_weights[best_j] += self.weights[i];
            slack += self.weights[i] * best_d;
        }
        let mut atoms = Vec::with_capacity(survivors.len() * self.dim);
        for &s in &survivors {
            atoms.extend_from_slice(self.atom(s));
        }
        (
            Self {
                atoms,
                weights: new_weights,
                dim: self.dim,
            },
            slack,
        )
    }

    /// CSV: `dim` coordinate columns plus one weight column, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (x, w) in self.iter() {
            for c in x {
                let _ = write!(out, "{c:?},");
            }
            let _ = writeln!(out, "{w:?}");
        }
        out
    }

    /// Parses the CSV form, validating positivity and normalization (reader
    /// tolerance 1e-9; exact tiny rounding is rescaled away).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut atoms: Vec<Vec<f64>> = Vec::new();
        let mut weights = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|e| Error::Parse {
                        detail: format!("line {}: bad number `{tok}`: {e}", lineno + 1),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if cols.len() < 2 {
                return Err(Error::Parse {
                    detail: format!("line {}: need d coordinates plus a weight", lineno + 1),
                });
            }
            if let Some(first) = atoms.first() {
                if cols.len() != first.len() + 1 {
                    return Err(Error::Parse {
                        detail: format!("line {}: inconsistent arity", lineno + 1),
                    });
                }
            }
            let w = cols.pop().unwrap();
            if w <= 0.0 {
                return Err(Error::NotNormalized {
                    detail: format!("line {}: weight {w} not positive", lineno + 1),
                });
            }
            weights.push(w);
            atoms.push(cols);
        }
        if atoms.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        let total = kahan_sum(weights.iter().copied());
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized {
                detail: format!("weights sum to {total}"),
            });
        }
        if (total - 1.0).abs() > MASS_TOL {
            for w in weights.iter_mut() {
                *w /= total;
            }
        }
        Self::new(atoms, weights)
    }
}

/// Grid accumulator for measures: per-cell compensated mass sums plus the
/// exact transport slack of the snapping.
struct MeasureGridAccum {
    dim: usize,
    delta: f64,
    cells: HashMap<Vec<i64>, (f64, f64)>,
    arrival: Vec<Vec<i64>>,
    slack: f64,
}

impl MeasureGridAccum {
    fn new(dim: usize, delta: f64) -> Self {
        Self {
            dim,
            delta,
            cells: HashMap::new(),
            arrival: Vec::new(),
            slack: 0.0,
        }
    }

    fn insert(&mut self, x: &[f64], w: f64) {
        let mut key = Vec::with_capacity(self.dim);
        let mut move_sq = 0.0;
        for &c in x {
            let cell = (c / self.delta).floor() as i64;
            key.push(cell);
            let d = c - (cell as f64 + 0.5) * self.delta;
            move_sq += d * d;
        }
        self.slack += w * move_sq.sqrt();
        match self.cells.get_mut(&key) {
            Some((sum, comp)) => {
                let t = *sum + w;
                if sum.abs() >= w.abs() {
                    *comp += (*sum - t) + w;
                } else {
                    *comp += (w - t) + *sum;
                }
                *sum = t;
            }
            None => {
                self.cells.insert(key.clone(), (w, 0.0));
                self.arrival.push(key);
            }
        }
    }

    fn finish(self) -> (DiscreteMeasure, f64) {
        let mut keys: Vec<Vec<i64>> = self.arrival;
        keys.sort_unstable();
        let mut atoms = Vec::with_capacity(keys.len() * self.dim);
        let mut weights = Vec::with_capacity(keys.len());
        for key in keys {
            let (sum, comp) = self.cells[&key];
            atoms.extend(key.iter().map(|&c| (c as f64 + 0.5) * self.delta));
            weights.push(sum + comp);
        }
        (
            DiscreteMeasure {
                atoms,
                weights,
                dim: self.dim,
            },
            self.slack,
        )
    }
}

/// GIFS with probabilities `q_j > 0`, `sum q_j = 1`.
///
/// The measure pipeline additionally needs the uniform per-argument data
/// `a_i = max_j a_i^(j)` to satisfy `sum_i a_i < 1`; this is checked here.
#[derive(Debug, Clone)]
pub struct GifsP {
    system: GifsSystem,
    probs: Vec<f64>,
    arg_max: Vec<f64>,
}

impl GifsP {
    pub fn new(system: GifsSystem, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != system.n() {
            return Err(Error::Parse {
                detail: format!("{} probabilities for {} maps", probs.len(), system.n()),
            });
        }
        if probs.iter().any(|&q| !q.is_finite() || q <= 0.0) {
            return Err(Error::NotNormalized {
                detail: "probabilities must be strictly positive".into(),
            });
        }
        let total = kahan_sum(probs.iter().copied());
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::NotNormalized {
                detail: format!("probabilities sum to {total}"),
            });
        }
        let m = system.order();
        let mut arg_max = vec![0.0f64; m];
        for map in system.maps() {
            for (i, &a) in map.arg_lips().iter().enumerate() {
                arg_max[i] = arg_max[i].max(a);
            }
        }
        let uniform_sum: f64 = arg_max.iter().sum();
        if uniform_sum >= 1.0 {
            return Err(Error::NotContractive {
                detail: format!(
                    "uniform per-argument data sums to {uniform_sum} >= 1; the measure \
                     operator is not contractive on average"
                ),
            });
        }
        Ok(Self {
            system,
            probs,
            arg_max,
        })
    }

    pub fn system(&self) -> &GifsSystem {
        &self.system
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Uniform per-argument Lipschitz data `a_i = max_j a_i^(j)`.
    pub fn arg_max(&self) -> &[f64] {
        &self.arg_max
    }

    /// Contraction-on-average factor of the induced Markov operator,
    /// `lambda = a_1`.
    pub fn lambda(&self) -> f64 {
        self.arg_max[0]
    }

    /// Coupling factor of the measure component w.r.t. `nu`,
    /// `sum_{i>=2} a_i / (1 - a_1)`.
    pub fn measure_coupling_factor(&self) -> f64 {
        let tail: f64 = self.arg_max[1..].iter().sum();
        tail / (1.0 - self.arg_max[0])
    }

    /// Contraction factor of the joint evaluation map,
    /// `max(lip_fs, sum_{i>=2} a_i / (1 - a_1))`.
    pub fn joint_contraction_factor(&self) -> f64 {
        self.system.lip_fs().max(self.measure_coupling_factor())
    }
}

// ---------------------------------------------------------------------------
// Monge-Kantorovich distance
// ---------------------------------------------------------------------------

/// Exact Wasserstein-1 distance via the primal transport program with
/// Euclidean ground cost. Supports up to [`MK_SUPPORT_CAP`] atoms per side.
pub fn mk_distance(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            got: nu.dim(),
        });
    }
    if mu.len() > MK_SUPPORT_CAP || nu.len() > MK_SUPPORT_CAP {
        return Err(Error::SupportTooLarge {
            atoms: mu.len().max(nu.len()),
            limit: MK_SUPPORT_CAP,
        });
    }
    for m in [mu, nu] {
        let total = m.total_mass();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized {
                detail: format!("measure mass {total}"),
            });
        }
    }
    let n = mu.len();
    let m = nu.len();
    let mut cost = vec![0.0f64; n * m];
    for i in 0..n {
        for j in 0..m {
            cost[i * m + j] = dist_slices(mu.atom(i), nu.atom(j));
        }
    }
    crate::transport::solve_transport(&crate::transport::TransportProblem {
        supply: mu.weights(),
        demand: nu.weights(),
        cost: &cost,
    })
}

/// Closed-form Wasserstein-1 on the line: the integral of the absolute CDF
/// difference. Any support size.
pub fn mk_distance_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: mu.dim().max(nu.dim()),
        });
    }
    // atoms are sorted ascending (canonical order in 1-D)
    let (mut i, mut j) = (0usize, 0usize);
    let (mut cdf_mu, mut cdf_nu) = (0.0f64, 0.0f64);
    let mut last_t: Option<f64> = None;
    let mut w1 = 0.0f64;
    while i < mu.len() || j < nu.len() {
        let tm = if i < mu.len() {
            mu.atom(i)[0]
        } else {
            f64::INFINITY
        };
        let tn = if j < nu.len() {
            nu.atom(j)[0]
        } else {
            f64::INFINITY
        };
        let t = tm.min(tn);
        if let Some(prev) = last_t {
            w1 += (cdf_mu - cdf_nu).abs() * (t - prev);
        }
        while i < mu.len() && mu.atom(i)[0] == t {
            cdf_mu += mu.weight(i);
            i += 1;
        }
        while j < nu.len() && nu.atom(j)[0] == t {
            cdf_nu += nu.weight(j);
            j += 1;
        }
        last_t = Some(t);
    }
    Ok(w1)
}

/// Certified upper bound on `d_MK`, usable at any support size: exact on the
/// line or within the transport cap, otherwise both measures are coarsened to
/// fit and the measured coarsening slacks are added.
pub fn mk_upper(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    if mu.dim() == 1 {
        return mk_distance_1d(mu, nu);
    }
    if mu.len() <= MK_SUPPORT_CAP && nu.len() <= MK_SUPPORT_CAP {
        return mk_distance(mu, nu);
    }
    let mut extent = 0.0f64;
    for m in [mu, nu] {
        let sp = m.support_points();
        extent = extent.max(sp.bbox_diameter());
    }
    let cells_per_axis = (MK_SUPPORT_CAP as f64).powf(1.0 / mu.dim() as f64).floor();
    let delta = extent / cells_per_axis.max(1.0);
    let (cmu, smu) = mu.coarsen_to_grid(delta);
    let (cnu, snu) = nu.coarsen_to_grid(delta);
    Ok(mk_distance(&cmu, &cnu)? + smu + snu)
}

// ---------------------------------------------------------------------------
// Generalized Markov operators
// ---------------------------------------------------------------------------

/// Pushforward of the product measure under the GIFSp:
/// atom `phi_j(x_0, .., x_{m-1})` with weight `q_j * prod mu_i(x_i)`, atoms
/// merged at the dedup tolerance, then masses below `w_min` folded into their
/// nearest surviving atom (total mass preserved exactly).
pub fn markov_step_gifsp(
    p: &GifsP,
    mus: &[DiscreteMeasure],
    w_min: f64,
    budgets: &Budgets,
) -> Result<DiscreteMeasure> {
    Ok(markov_step_gifsp_measured(p, mus, w_min, None, budgets)?.0)
}

/// [`markov_step_gifsp`] plus the exact mass-transport slack of all merging.
/// `grid` overrides the dedup-scale merge grid of the streaming path.
pub(crate) fn markov_step_gifsp_measured(
    p: &GifsP,
    mus: &[DiscreteMeasure],
    w_min: f64,
    grid: Option<f64>,
    budgets: &Budgets,
) -> Result<(DiscreteMeasure, f64)> {
    let system = p.system();
    if mus.len() != system.order() {
        return Err(Error::Parse {
            detail: format!(
                "{} measures for a system of order {}",
                mus.len(),
                system.order()
            ),
        });
    }
    for m in mus {
        if m.dim() != system.dim() {
            return Err(Error::DimensionMismatch {
                expected: system.dim(),
                got: m.dim(),
            });
        }
    }
    let raw = mus
        .iter()
        .try_fold(system.n(), |acc, m| acc.checked_mul(m.len()))
        .unwrap_or(usize::MAX);
    if raw > budgets.max_product_atoms {
        return Err(Error::BudgetExceeded {
            budget: "product-support",
            needed: raw,
            limit: budgets.max_product_atoms,
        });
    }
    let dim = system.dim();
    let tail_len = system.order() - 1;
    let n = system.n();
    let mut out = vec![0.0; dim];
    // per-map tail offsets and weight factors q_j * prod_i w(b_i), hoisted
    // out of the loop over the first argument; the factor's multiplication
    // order is shared with the induced enumeration so the two routes agree
    // bit for bit
    let mut offsets = vec![0.0; dim * n];
    let mut factors = vec![0.0; n];
    let mut idx = vec![0usize; tail_len];
    let mut tail: Vec<&[f64]> = vec![mus[0].atom(0); tail_len];

    let mut emit = |sink: &mut dyn FnMut(&[f64], f64)| loop {
        let mut w_tail = 1.0f64;
        for (k, (slot, &i)) in tail.iter_mut().zip(idx.iter()).enumerate() {
            *slot = mus[k + 1].atom(i);
            w_tail *= mus[k + 1].weight(i);
        }
        for (j, phi) in system.maps().iter().enumerate() {
            phi.partial_offset_into(&tail, &mut offsets[j * dim..(j + 1) * dim]);
            factors[j] = p.probs()[j] * w_tail;
        }
        for (x, wx) in mus[0].iter() {
            for (j, phi) in system.maps().iter().enumerate() {
                phi.apply_with_tail_offset(x, &offsets[j * dim..(j + 1) * dim], &mut out);
                sink(&out, factors[j] * wx);
            }
        }
        let mut pos = tail_len;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < mus[pos + 1].len() {
                break;
            }
            idx[pos] = 0;
        }
    };

    let (measure, slack) = if raw <= MATERIALIZE_CAP && grid.is_none() {
        let mut flat = Vec::with_capacity(raw * dim);
        let mut weights = Vec::with_capacity(raw);
        emit(&mut |x, w| {
            flat.extend_from_slice(x);
            weights.push(w);
        });
        DiscreteMeasure::from_raw(flat, weights, dim)?
    } else {
        let delta = grid.unwrap_or_else(|| dedup_grid(p, mus));
        let mut accum = MeasureGridAccum::new(dim, delta);
        emit(&mut |x, w| accum.insert(x, w));
        accum.finish()
    };
    let (merged, wmin_slack) = measure.merge_small(w_min);
    Ok((merged, slack + wmin_slack))
}

/// Markov operator of the IIFSp induced by `(supp nu, nu)`: by duality the
/// pushforward of `mu x nu^(m-1)` under the induced maps. Equals
/// `markov_step_gifsp(p, (mu, nu, .., nu))` exactly; the two enumerations are
/// written independently but share the canonical weight-product order, so the
/// identity holds bit for bit after canonical atom ordering.
pub fn markov_step_induced(
    p: &GifsP,
    b_measure: &DiscreteMeasure,
    mu: &DiscreteMeasure,
    w_min: f64,
    budgets: &Budgets,
) -> Result<DiscreteMeasure> {
    Ok(markov_step_induced_measured(p, b_measure, mu, w_min, None, budgets)?.0)
}

pub(crate) fn markov_step_induced_measured(
    p: &GifsP,
    nu: &DiscreteMeasure,
    mu: &DiscreteMeasure,
    w_min: f64,
    grid: Option<f64>,
    budgets: &Budgets,
) -> Result<(DiscreteMeasure, f64)> {
    let system = p.system();
    if mu.dim() != system.dim() || nu.dim() != system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            got: mu.dim().min(nu.dim()),
        });
    }
    let tail = system.order() - 1;
    let raw = nu
        .len()
        .checked_pow(tail as u32)
        .and_then(|x| x.checked_mul(mu.len()))
        .and_then(|x| x.checked_mul(system.n()))
        .unwrap_or(usize::MAX);
    if raw > budgets.max_product_atoms {
        return Err(Error::BudgetExceeded {
            budget: "product-support",
            needed: raw,
            limit: budgets.max_product_atoms,
        });
    }
    let dim = system.dim();
    let n = system.n();
    let mut out = vec![0.0; dim];
    // the transfer-operator enumeration: Theta = B^(m-1) x {1..n} outer,
    // mu inner; the per-theta offsets phi_j(., b) and weight factors
    // q_j * prod nu(b_i) come out once per theta, then mu streams through
    let mut offsets = vec![0.0; dim * n];
    let mut factors = vec![0.0; n];
    let mut idx = vec![0usize; tail];
    let mut btuple: Vec<&[f64]> = vec![nu.atom(0); tail];

    let mut emit = |sink: &mut dyn FnMut(&[f64], f64)| loop {
        let mut w_tail = 1.0f64;
        for (slot, &i) in btuple.iter_mut().zip(idx.iter()) {
            *slot = nu.atom(i);
            w_tail *= nu.weight(i);
        }
        for (j, phi) in system.maps().iter().enumerate() {
            phi.partial_offset_into(&btuple, &mut offsets[j * dim..(j + 1) * dim]);
            factors[j] = p.probs()[j] * w_tail;
        }
        for (x, wx) in mu.iter() {
            for (j, phi) in system.maps().iter().enumerate() {
                phi.apply_with_tail_offset(x, &offsets[j * dim..(j + 1) * dim], &mut out);
                sink(&out, factors[j] * wx);
            }
        }
        let mut pos = tail;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < nu.len() {
                break;
            }
            idx[pos] = 0;
        }
    };

    let (measure, slack) = if raw <= MATERIALIZE_CAP && grid.is_none() {
        let mut flat = Vec::with_capacity(raw * dim);
        let mut weights = Vec::with_capacity(raw);
        emit(&mut |x, w| {
            flat.extend_from_slice(x);
            weights.push(w);
        });
        DiscreteMeasure::from_raw(flat, weights, dim)?
    } else {
        let delta = grid.unwrap_or_else(|| dedup_grid_pair(p, mu, nu));
        let mut accum = MeasureGridAccum::new(dim, delta);
        emit(&mut |x, w| accum.insert(x, w));
        accum.finish()
    };
    let (merged, wmin_slack) = measure.merge_small(w_min);
    Ok((merged, slack + wmin_slack))
}

/// Dedup-scale merge grid for streamed pushforwards: a power of two near
/// `DEDUP_REL_TOL` times the output extent, estimated by interval arithmetic.
fn dedup_grid(p: &GifsP, mus: &[DiscreteMeasure]) -> f64 {
    let boxes: Vec<(Vec<f64>, Vec<f64>)> = mus
        .iter()
        .map(|m| {
            let sp = m.support_points();
            sp.bbox()
        })
        .collect();
    output_grid(p, &boxes)
}

fn dedup_grid_pair(p: &GifsP, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let mut boxes = vec![mu.support_points().bbox()];
    for _ in 1..p.system().order() {
        boxes.push(nu.support_points().bbox());
    }
    output_grid(p, &boxes)
}

fn output_grid(p: &GifsP, boxes: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let system = p.system();
    let d = system.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for phi in system.maps() {
        for r in 0..d {
            let mut a = phi.offset()[r];
            let mut b = phi.offset()[r];
            for (i, mat) in phi.matrices().iter().enumerate() {
                for c in 0..d {
                    let m = mat[r * d + c];
                    let (l, h) = (boxes[i].0[c], boxes[i].1[c]);
                    let (x, y) = ((m * l).min(m * h), (m * l).max(m * h));
                    a += x;
                    b += y;
                }
            }
            lo[r] = lo[r].min(a);
            hi[r] = hi[r].max(b);
        }
    }
    let mut span = 0.0;
    for r in 0..d {
        let e = hi[r] - lo[r];
        span += e * e;
    }
    let span = span.sqrt().max(f64::MIN_POSITIVE);
    pow2_floor(DEDUP_REL_TOL * span / (d as f64).sqrt()).max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------------------
// Hutchinson measure iteration
// ---------------------------------------------------------------------------

/// Iterates the induced Markov operator to its fixed point in `d_MK`.
///
/// The operator is contractive on average with `lambda = a_1`; iterates are
/// coarsened to a grid sized from `tol` and every merge's exact transport
/// slack enters the ledger, so the final bound certifies
/// `d_MK(result, mu_fixed) <= tol`.
pub fn hutchinson_measure(
    p: &GifsP,
    b_measure: &DiscreteMeasure,
    mu0: &DiscreteMeasure,
    tol: f64,
    budgets: &Budgets,
) -> Result<(DiscreteMeasure, ConvergenceReport)> {
    if tol <= 0.0 {
        return Err(Error::NonPositive {
            quantity: "tol",
            value: tol,
        });
    }
    let lambda = p.lambda();
    let dim = p.system().dim();
    let grid = pow2_floor(tol * (1.0 - lambda) / (dim as f64).sqrt()).max(f64::MIN_POSITIVE);
    let mut current = mu0.clone();
    let mut ledger: Option<OstrowskiLedger> = None;
    let mut displacements = Vec::new();
    let mut converged = false;
    let mut budget_flag = None;

    for _k in 1..=budgets.max_iterations {
        let (next, eps) =
            markov_step_induced_measured(p, b_measure, &current, W_MIN_DEFAULT, Some(grid), budgets)?;
        let step = mk_upper(&current, &next)?;
        displacements.push(step);
        let ledger = ledger.get_or_insert_with(|| OstrowskiLedger::new(lambda, step + eps));
        let bound = ledger.push(0.0, grid, eps);
        current = next;
        if bound <= tol {
            converged = true;
            break;
        }
    }
    let ledger = ledger.expect("at least one step ran");
    if !converged {
        budget_flag = Some(format!(
            "iteration budget: measure bound {} above {tol}",
            ledger.last_bound()
        ));
    }
    Ok((
        current,
        ConvergenceReport {
            ledger,
            step_displacements: displacements,
            converged,
            budget_exceeded: budget_flag,
        },
    ))
}

// ---------------------------------------------------------------------------
// Joint evaluation and iteration
// ---------------------------------------------------------------------------

/// Joint evaluation map `EV(B, nu) = (induced attractor, induced Hutchinson
/// measure)`, each solved to the certified tolerance `sigma`. Requires
/// `supp(nu)` to lie in `B` (up to the dedup tolerance).
pub fn joint_evaluation(
    p: &GifsP,
    b: &PointSet,
    nu: &DiscreteMeasure,
    sigma: f64,
    budgets: &Budgets,
) -> Result<(PointSet, DiscreteMeasure)> {
    let tol = DEDUP_REL_TOL * b.bbox_diameter();
    let support = nu.support_points();
    if crate::metric::directed_distance(&support, b)? > tol {
        return Err(Error::Precondition {
            detail: "supp(nu) must lie in B".into(),
        });
    }
    let (attractor, _) = evaluation_map_seeded(p.system(), b, sigma, None, budgets)?;
    let (measure, _) = hutchinson_measure(p, nu, nu, sigma, budgets)?;
    Ok((attractor, measure))
}

/// Outcome of [`joint_iterate`].
#[derive(Debug, Clone)]
pub struct JointResult {
    pub attractor: PointSet,
    pub measure: DiscreteMeasure,
    pub report: ConvergenceReport,
    /// Per-step `(h, d_MK)` displacement pairs behind the `d_max` entries.
    pub component_steps: Vec<(f64, f64)>,
}

/// Iterates the joint evaluation map with inexact inner solves.
///
/// The ledger runs in the product metric `d_max = max(h, d_MK)` at the
/// contraction factor `c = max(lip_fs, sum_{i>=2} a_i / (1 - a_1))`. Each
/// step's inexactness combines the measured subsample radius (set side), the
/// measured coarsening slack of `nu` (measure side, weighted by the coupling
/// factor) and both inner certificates.
pub fn joint_iterate(
    p: &GifsP,
    b0: &PointSet,
    nu0: &DiscreteMeasure,
    opts: &OuterOptions,
) -> Result<JointResult> {
    let system = p.system();
    if b0.dim() != system.dim() || nu0.dim() != system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            got: b0.dim().min(nu0.dim()),
        });
    }
    let c = p.joint_contraction_factor();
    let c_nu = p.measure_coupling_factor();
    let alpha_set = system.lip_fs();
    let eta = forcing_eta(c);
    let budgets = &opts.budgets;
    let sub_cap = crate::gifs::subsample_cap(system, budgets);
    let dim = system.dim() as f64;
    // nu-support cap so the product stays within budget
    let nu_cap: usize = if system.order() == 1 {
        usize::MAX
    } else {
        let per = budgets.max_product_atoms / system.n().max(1);
        (per as f64)
            .powf(1.0 / system.order() as f64)
            .floor()
            .max(4.0) as usize
    };

    let mut b = b0.clone();
    let mut nu = nu0.clone();
    let mut ledger: Option<OstrowskiLedger> = None;
    let mut displacements = Vec::new();
    let mut component_steps = Vec::new();
    let mut converged = false;
    let mut budget_flag = None;
    let mut annotations = Vec::new();

    for k in 1..=opts.steps {
        let mut beta_k = opts.beta.value(k);
        let mut sigma_k = opts.sigma.value(k);
        if opts.adaptive {
            if let Some(l) = &ledger {
                let bound = l.last_bound();
                beta_k = beta_k.min(eta * bound);
                sigma_k = sigma_k.min(eta * bound / 2.0);
            }
        }
        // set side
        let (bsub, beta_hat) = beta_cover_capped(&b, beta_k.max(f64::MIN_POSITIVE), sub_cap);
        let (b_next, inner_set) =
            evaluation_map_seeded(system, &bsub, sigma_k, Some(&b), budgets)?;
        let sigma_set = inner_set.final_bound();
        if let Some(flag) = inner_set.budget_exceeded {
            budget_flag = Some(format!("set solve at step {k}: {flag}"));
        }
        // measure side: coarsen nu to the subsample scale and within budget
        let mut gamma_grid = pow2_floor(2.0 * beta_k / dim.sqrt());
        let support_extent = nu.support_points().bbox_diameter().max(f64::MIN_POSITIVE);
        let budget_grid = support_extent * dim.sqrt() / nu_cap as f64;
        gamma_grid = gamma_grid.max(pow2_floor(budget_grid) * 2.0);
        let (mut nu_tilde, gamma_hat) = nu.coarsen_to_grid(gamma_grid);
        let mut gamma_hat = gamma_hat;
        let mut tol_meas = sigma_k;
        let measure_result = loop {
            match hutchinson_measure(p, &nu_tilde, &nu_tilde, tol_meas, budgets) {
                Ok(r) => break Ok(r),
                Err(Error::BudgetExceeded { .. }) if tol_meas < 0.5 => {
                    // coarsen harder and relax; slacks stay accounted
                    gamma_grid *= 4.0;
                    tol_meas *= 2.0;
                    let (nt, extra) = nu.coarsen_to_grid(gamma_grid);
                    nu_tilde = nt;
                    gamma_hat = extra;
                    annotations
                        .push(format!("step {k}: measure grid relaxed to {gamma_grid:.3e}"));
                }
                Err(e) => break Err(e),
            }
        };
        let (nu_next, inner_meas) = measure_result?;
        let sigma_meas = inner_meas.final_bound();
        if let Some(flag) = inner_meas.budget_exceeded {
            budget_flag = Some(format!("measure solve at step {k}: {flag}"));
        }
        let eps_set = alpha_set * beta_hat + sigma_set;
        let eps_meas = c_nu * gamma_hat + sigma_meas;
        let eps = eps_set.max(eps_meas);
        let h_step = hausdorff(&b, &b_next)?;
        let mk_step = mk_upper(&nu, &nu_next)?;
        let d_step = h_step.max(mk_step);
        displacements.push(d_step);
        component_steps.push((h_step, mk_step));
        let ledger = ledger.get_or_insert_with(|| OstrowskiLedger::new(c, d_step + eps));
        let bound = ledger.push(beta_hat, sigma_set.max(sigma_meas), eps);
        b = b_next;
        nu = nu_next;
        if budget_flag.is_some() {
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
    let mut ledger = ledger.expect("at least one joint step ran");
    for note in annotations {
        ledger.annotate(note);
    }
    Ok(JointResult {
        attractor: b,
        measure: nu,
        report: ConvergenceReport {
            ledger,
            step_displacements: displacements,
            converged,
            budget_exceeded: budget_flag,
        },
        component_steps,
    })
}
