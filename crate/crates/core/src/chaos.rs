//! Random-orbit (chaos game) iteration for induced systems.
//!
//! A GIFS is not a dynamical system: one application consumes an m-tuple and
//! returns a single point, with no canonical way to continue. The induced
//! system is dynamical. Fixing a probability `nu`, each step draws a map
//! index `j ~ q` and tail arguments `b_2, .., b_m` i.i.d. from `nu`, and
//! moves `x <- phi_j(x, b_2, .., b_m)`.
//!
//! Whether such orbits recover the GIFS attractor or its Hutchinson measure
//! in the limit of refined `(B, nu)` is open; this module produces orbits and
//! ergodic averages as experiments and diagnostics, not as certified
//! approximations.

use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, GifsP};
use crate::metric::Point;

/// SplitMix64: a counter-based 64-bit generator (Steele, Lea & Flood's
/// mixing function over a Weyl sequence). One `u64` of state, identical
/// output on every platform for a given seed.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Parameters of one random orbit.
#[derive(Debug, Clone)]
pub struct OrbitConfig {
    pub seed_point: Point,
    pub rng_seed: u64,
    /// Leading iterates to discard.
    pub burn_in: usize,
    /// Total iterates to generate; must exceed `burn_in`.
    pub length: usize,
}

/// Runs the chaos game on the system induced by `nu`.
///
/// Deterministic given `rng_seed`: each step draws the map index first, then
/// the `m - 1` tail points in argument order, all by inverse-CDF lookup on
/// one SplitMix64 stream. Returns the iterates after `burn_in`.
pub fn random_orbit(p: &GifsP, nu: &DiscreteMeasure, cfg: &OrbitConfig) -> Result<Vec<Point>> {
    let system = p.system();
    if cfg.seed_point.dim() != system.dim() || nu.dim() != system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            got: cfg.seed_point.dim().min(nu.dim()),
        });
    }
    if cfg.length <= cfg.burn_in {
        return Err(Error::Precondition {
            detail: format!(
                "orbit length {} must exceed burn-in {}",
                cfg.length, cfg.burn_in
            ),
        });
    }
    let q_cum = cumulative(p.probs());
    let nu_cum = cumulative(nu.weights());
    let tail_len = system.order() - 1;

    let mut rng = SplitMix64::new(cfg.rng_seed);
    let mut x = cfg.seed_point.coords().to_vec();
    let mut next = vec![0.0; system.dim()];
    let mut tail_idx = vec![0usize; tail_len];
    let mut orbit = Vec::with_capacity(cfg.length - cfg.burn_in);

    for k in 1..=cfg.length {
        let j = sample(&q_cum, rng.next_f64());
        for slot in tail_idx.iter_mut() {
            *slot = sample(&nu_cum, rng.next_f64());
        }
        {
            let mut args: Vec<&[f64]> = Vec::with_capacity(system.order());
            args.push(&x);
            for &i in &tail_idx {
                args.push(nu.atom(i));
            }
            system.maps()[j].apply_into(&args, &mut next);
        }
        std::mem::swap(&mut x, &mut next);
        if k > cfg.burn_in {
            orbit.push(Point::new(x.clone())?);
        }
    }
    Ok(orbit)
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cum.push(acc);
    }
    cum
}

fn sample(cum: &[f64], u: f64) -> usize {
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

/// Built-in observables for ergodic averages.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    /// First coordinate (the identity on the line).
    Identity,
    Coordinate(usize),
    /// Euclidean norm.
    Norm,
    /// `cos` of one coordinate: bounded, 1-Lipschitz.
    Cos(usize),
    /// `min(1, |x|)`: bounded, 1-Lipschitz.
    MinNorm,
}

impl Observable {
    /// Parses `identity`, `coord:<i>`, `norm`, `cos:<i>` or `min1norm`.
    pub fn parse(name: &str) -> Result<Self> {
        let known = "identity, coord:<i>, norm, cos:<i>, min1norm";
        if name == "identity" {
            return Ok(Self::Identity);
        }
        if name == "norm" {
            return Ok(Self::Norm);
        }
        if name == "min1norm" {
            return Ok(Self::MinNorm);
        }
        if let Some(i) = name.strip_prefix("coord:") {
            if let Ok(i) = i.parse() {
                return Ok(Self::Coordinate(i));
            }
        }
        if let Some(i) = name.strip_prefix("cos:") {
            if let Ok(i) = i.parse() {
                return Ok(Self::Cos(i));
            }
        }
        Err(Error::UnknownObservable {
            name: name.to_string(),
            known: known.to_string(),
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Identity => x[0],
            Self::Coordinate(i) => x.get(*i).copied().unwrap_or(0.0),
            Self::Norm => x.iter().map(|c| c * c).sum::<f64>().sqrt(),
            Self::Cos(i) => x.get(*i).copied().unwrap_or(0.0).cos(),
            Self::MinNorm => x.iter().map(|c| c * c).sum::<f64>().sqrt().min(1.0),
        }
    }
}

/// Arithmetic mean of the observable over the orbit.
pub fn ergodic_average(orbit: &[Point], observable: &Observable) -> Result<f64> {
    if orbit.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for p in orbit {
        let v = observable.eval(p.coords());
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    Ok((sum + comp) / orbit.len() as f64)
}

/// Bins an orbit into an empirical probability measure (uniform weight per
/// visit, atoms snapped to `bin_width` when positive).
pub fn empirical_measure(orbit: &[Point], bin_width: f64) -> Result<DiscreteMeasure> {
    if orbit.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let w = 1.0 / orbit.len() as f64;
    let measure = DiscreteMeasure::new(
        orbit.iter().map(|p| p.coords().to_vec()).collect(),
        vec![w; orbit.len()],
    )?;
    if bin_width > 0.0 {
        Ok(measure.coarsen_to_grid(bin_width).0)
    } else {
        Ok(measure)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gifs::{GifsSystem, MultiAffineMap};
    use crate::ifs::Budgets;
    use crate::metric::{directed_distance, PointSet};

    fn binary_halving_p() -> GifsP {
        let phi1 = MultiAffineMap::new(vec![vec![0.5]], vec![0.0]).unwrap();
        let phi2 = MultiAffineMap::new(vec![vec![0.5]], vec![0.5]).unwrap();
        GifsP::new(GifsSystem::new(vec![phi1, phi2]).unwrap(), vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn splitmix_deterministic_and_uniform() {
        let mut a = SplitMix64::new(42);
        let mut b = SplitMix64::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut rng = SplitMix64::new(7);
        let n = 20_000;
        let mean: f64 = (0..n).map(|_| rng.next_f64()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn deterministic_single_map_orbit() {
        let single = GifsP::new(
            GifsSystem::new(vec![
                MultiAffineMap::new(vec![vec![0.5]], vec![0.0]).unwrap()
            ])
            .unwrap(),
            vec![1.0],
        )
        .unwrap();
        let nu = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let cfg = OrbitConfig {
            seed_point: Point::new(vec![1.0]).unwrap(),
            rng_seed: 999,
            burn_in: 0,
            length: 6,
        };
        let orbit = random_orbit(&single, &nu, &cfg).unwrap();
        let values: Vec<f64> = orbit.iter().map(|p| p.coords()[0]).collect();
        assert_eq!(values, vec![0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625]);
    }

    #[test]
    fn replay_determinism() {
        let p = binary_halving_p();
        let nu = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let cfg = OrbitConfig {
            seed_point: Point::new(vec![0.3]).unwrap(),
            rng_seed: 0xDEADBEEF,
            burn_in: 10,
            length: 500,
        };
        let a = random_orbit(&p, &nu, &cfg).unwrap();
        let b = random_orbit(&p, &nu, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 490);
    }

    #[test]
    fn orbit_tracks_attractor() {
        let p = binary_halving_p();
        let nu = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let cfg = OrbitConfig {
            seed_point: Point::new(vec![0.0]).unwrap(),
            rng_seed: 12345,
            burn_in: 50,
            length: 20_000,
        };
        let orbit = random_orbit(&p, &nu, &cfg).unwrap();
        let orbit_set =
            PointSet::from_rows(&orbit.iter().map(|p| p.coords().to_vec()).collect::<Vec<_>>())
                .unwrap();
        let (att, _) = crate::gifs::evaluation_map(
            p.system(),
            &PointSet::from_rows(&[vec![0.0]]).unwrap(),
            1e-4,
            &Budgets::default(),
        )
        .unwrap();
        // orbit points absorbed into the attractor
        assert!(directed_distance(&orbit_set, &att).unwrap() <= 1e-3);
        // and the orbit fills it out
        assert!(crate::metric::hausdorff(&orbit_set, &att).unwrap() <= 0.05);
    }

    /// Orbit containment: after burn-in ~ log(tol)/log(alpha) from a far
    /// seed, every kept point lies within tol of the attractor.
    #[test]
    fn burn_in_absorbs_far_seeds() {
        let p = binary_halving_p();
        let nu = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let tol = 1e-3;
        // dist(seed, A) = 4, alpha = 1/2: 12 steps reach 4 * 2^-12 < tol
        let cfg = OrbitConfig {
            seed_point: Point::new(vec![5.0]).unwrap(),
            rng_seed: 5,
            burn_in: 13,
            length: 2000,
        };
        let orbit = random_orbit(&p, &nu, &cfg).unwrap();
        let orbit_set =
            PointSet::from_rows(&orbit.iter().map(|p| p.coords().to_vec()).collect::<Vec<_>>())
                .unwrap();
        let (att, _) = crate::gifs::evaluation_map(
            p.system(),
            &PointSet::from_rows(&[vec![0.0]]).unwrap(),
            1e-5,
            &Budgets::default(),
        )
        .unwrap();
        assert!(directed_distance(&orbit_set, &att).unwrap() <= tol);
    }

    #[test]
    fn ergodic_average_examples() {
        let p = binary_halving_p();
        let nu = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let cfg = OrbitConfig {
            seed_point: Point::new(vec![0.0]).unwrap(),
            rng_seed: 31337,
            burn_in: 100,
            length: 100_000,
        };
        let orbit = random_orbit(&p, &nu, &cfg).unwrap();
        // constant observable: mean is the constant
        let c = ergodic_average(&orbit, &Observable::Cos(7)).unwrap();
        assert_eq!(c, 1.0); // missing coordinate reads as 0, cos(0) = 1
        // invariant measure is uniform on [0,1]: mean of identity near 1/2
        // (statistical tolerance, deterministic under the fixed seed)
        let mean = ergodic_average(&orbit, &Observable::Identity).unwrap();
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
        // against the measure-module integral
        let (mu, _) = crate::measure::hutchinson_measure(
            &p,
            &nu,
            &nu,
            1e-3,
            &Budgets::default(),
        )
        .unwrap();
        let integral = mu.integrate(|x| x[0]);
        assert!((mean - integral).abs() < 3.0 / (cfg.length as f64).sqrt() + 2e-3);
    }

    #[test]
    fn ergodic_decaying_orbit() {
        let single = GifsP::new(
            GifsSystem::new(vec![
                MultiAffineMap::new(vec![vec![0.5]], vec![0.0]).unwrap()
            ])
            .unwrap(),
            vec![1.0],
        )
        .unwrap();
        let nu = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let cfg = OrbitConfig {
            seed_point: Point::new(vec![1.0]).unwrap(),
            rng_seed: 0,
            burn_in: 0,
            length: 10_000,
        };
        let orbit = random_orbit(&single, &nu, &cfg).unwrap();
        let mean = ergodic_average(&orbit, &Observable::Identity).unwrap();
        assert!(mean.abs() < 1e-3);
    }

    #[test]
    fn unknown_observable_is_reported() {
        assert!(matches!(
            Observable::parse("entropy"),
            Err(Error::UnknownObservable { .. })
        ));
        assert_eq!(Observable::parse("coord:2").unwrap(), Observable::Coordinate(2));
    }

    #[test]
    fn orbit_validates_config() {
        let p = binary_halving_p();
        let nu = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let cfg = OrbitConfig {
            seed_point: Point::new(vec![0.0]).unwrap(),
            rng_seed: 1,
            burn_in: 10,
            length: 10,
        };
        assert!(random_orbit(&p, &nu, &cfg).is_err());
    }

    #[test]
    fn empirical_measure_bins() {
        let pts: Vec<Point> = (0..10)
            .map(|i| Point::new(vec![i as f64 / 10.0]).unwrap())
            .collect();
        let mu = empirical_measure(&pts, 0.25).unwrap();
        assert!((mu.total_mass() - 1.0).abs() <= 1e-12);
        assert!(mu.len() <= 5);
    }
}
