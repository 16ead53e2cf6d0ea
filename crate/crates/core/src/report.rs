//! Certified error accounting for inexact fixed-point iterations.
//!
//! For a contraction `T` with factor `alpha < 1` and an iteration that only
//! lands near each exact step, `d(y_k, T(y_{k-1})) <= eps_k`, the distance to
//! the fixed point `p` obeys
//!
//! ```text
//! d(y_k, p) <= alpha^k / (1 - alpha) * d(y_0, T(y_0)) + sum_{i=1..k} alpha^(k-i) * eps_i
//! ```
//!
//! [`OstrowskiLedger`] records `(alpha, d01, eps_1..eps_k)` and the resulting
//! cumulative bounds. Bounds are evaluated directly from the closed form above
//! (powers via `powi`, the sum accumulated in increasing `i`), never
//! incrementally, so an independent recomputation reproduces them bit for bit.

use std::fmt::Write as _;

/// One recorded outer step: requested-or-achieved subsample radius `beta`,
/// inner solve bound `sigma`, the combined inexactness `eps`, and the
/// cumulative certified bound after this step.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub k: usize,
    pub beta: f64,
    pub sigma: f64,
    pub eps: f64,
    pub bound: f64,
}

/// Inexact-iteration error ledger.
#[derive(Debug, Clone)]
pub struct OstrowskiLedger {
    alpha: f64,
    d01: f64,
    rows: Vec<LedgerRow>,
    annotations: Vec<String>,
}

impl OstrowskiLedger {
    /// `alpha` is the contraction factor of the exact map, `d01` an upper
    /// bound on the initial displacement `d(y_0, T(y_0))`.
    pub fn new(alpha: f64, d01: f64) -> Self {
        assert!((0.0..1.0).contains(&alpha), "alpha must lie in [0, 1)");
        assert!(d01 >= 0.0 && d01.is_finite());
        Self {
            alpha,
            d01,
            rows: Vec::new(),
            annotations: Vec::new(),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn d01(&self) -> f64 {
        self.d01
    }

    pub fn rows(&self) -> &[LedgerRow] {
        &self.rows
    }

    pub fn eps(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.eps).collect()
    }

    pub fn bounds(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.bound).collect()
    }

    /// Records step `k = len + 1` with inexactness `eps` and returns the new
    /// cumulative bound.
    pub fn push(&mut self, beta: f64, sigma: f64, eps: f64) -> f64 {
        debug_assert!(eps >= 0.0);
        let k = self.rows.len() + 1;
        let eps_seq: Vec<f64> = self
            .rows
            .iter()
            .map(|r| r.eps)
            .chain(std::iter::once(eps))
            .collect();
        let bound = ostrowski_bound(self.alpha, self.d01, &eps_seq);
        self.rows.push(LedgerRow {
            k,
            beta,
            sigma,
            eps,
            bound,
        });
        bound
    }

    /// Picard part of the bound after `k` steps, `alpha^k / (1-alpha) * d01`.
    pub fn picard_term(&self, k: usize) -> f64 {
        self.alpha.powi(k as i32) / (1.0 - self.alpha) * self.d01
    }

    /// Latest cumulative bound; before any step this is the `k = 0` value
    /// `d01 / (1 - alpha)`.
    pub fn last_bound(&self) -> f64 {
        self.rows
            .last()
            .map(|r| r.bound)
            .unwrap_or(self.d01 / (1.0 - self.alpha))
    }

    pub fn annotate(&mut self, note: impl Into<String>) {
        self.annotations.push(note.into());
    }

    pub fn annotations(&self) -> &[String] {
        &self.annotations
    }

    /// CSV with header `k,beta,sigma,eps,bound`, one row per step.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,beta,sigma,eps,bound\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?}",
                r.k, r.beta, r.sigma, r.eps, r.bound
            );
        }
        out
    }
}

/// Direct evaluation of the estimate for `k = eps.len()` steps:
/// `alpha^k/(1-alpha)*d01 + sum_{i=1..k} alpha^(k-i)*eps[i-1]`, the sum taken
/// in increasing `i`.
pub fn ostrowski_bound(alpha: f64, d01: f64, eps: &[f64]) -> f64 {
    let k = eps.len() as i32;
    let mut bound = alpha.powi(k) / (1.0 - alpha) * d01;
    for (i, &e) in eps.iter().enumerate() {
        bound += alpha.powi(k - (i as i32 + 1)) * e;
    }
    bound
}

/// Outcome of an iterative solve: the certified ledger plus per-step
/// displacement measurements and termination status.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub ledger: OstrowskiLedger,
    /// Measured distance between consecutive iterates, one entry per step.
    pub step_displacements: Vec<f64>,
    pub converged: bool,
    /// `Some(description)` when a budget stopped the iteration early.
    pub budget_exceeded: Option<String>,
}

impl ConvergenceReport {
    pub fn final_bound(&self) -> f64 {
        self.ledger.last_bound()
    }

    pub fn iterations(&self) -> usize {
        self.ledger.rows().len()
    }
}
