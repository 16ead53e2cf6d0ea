//! Cross-module properties: images under affine contractions, the induced
//! system identities, evaluation-map contraction, and degeneracy of order-1
//! systems to the plain IFS engine.

use gifs_core::chaos::SplitMix64;
use gifs_core::gifs::{
    approximate_attractor, classical_gifs_iterate, evaluation_map, induce_ifs, GifsSystem,
    MultiAffineMap, OuterOptions, Schedule,
};
use gifs_core::ifs::{attractor, fractal_step, AffineMap, Budgets, FiniteIfs, PruneSchedule};
use gifs_core::metric::{directed_distance, hausdorff, PointSet};

fn set1(xs: &[f64]) -> PointSet {
    PointSet::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
}

fn random_set(rng: &mut SplitMix64, dim: usize, n: usize, scale: f64) -> PointSet {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| (rng.next_f64() - 0.5) * scale).collect())
        .collect();
    PointSet::from_rows(&rows).unwrap()
}

/// Sierpinski gasket: three halving maps toward the triangle vertices.
fn sierpinski() -> FiniteIfs {
    let vertices = [[0.0, 0.0], [1.0, 0.0], [0.5, sqrt3() / 2.0]];
    let maps = vertices
        .iter()
        .map(|v| {
            AffineMap::new(
                vec![0.5, 0.0, 0.0, 0.5],
                vec![v[0] / 2.0, v[1] / 2.0],
            )
            .unwrap()
        })
        .collect();
    FiniteIfs::new(maps).unwrap()
}

fn sqrt3() -> f64 {
    3.0f64.sqrt()
}

/// h(psi(K), psi(H)) <= Lip(psi) h(K, H) for random affine contractions.
#[test]
fn lipschitz_image_bound() {
    let mut rng = SplitMix64::new(211);
    for _ in 0..60 {
        let dim = 1 + (rng.next_u64() % 2) as usize;
        let matrix: Vec<f64> = (0..dim * dim)
            .map(|_| (rng.next_f64() - 0.5) * 1.2)
            .collect();
        let offset: Vec<f64> = (0..dim).map(|_| (rng.next_f64() - 0.5) * 2.0).collect();
        let map = AffineMap::new(matrix, offset).unwrap();
        let nk = 1 + (rng.next_u64() % 10) as usize;
        let nh = 1 + (rng.next_u64() % 10) as usize;
        let k = random_set(&mut rng, dim, nk, 3.0);
        let h = random_set(&mut rng, dim, nh, 3.0);
        let image = |s: &PointSet| {
            PointSet::from_rows(&s.iter().map(|p| map.apply(p)).collect::<Vec<_>>()).unwrap()
        };
        let lhs = hausdorff(&image(&k), &image(&h)).unwrap();
        let rhs = map.lip() * hausdorff(&k, &h).unwrap();
        assert!(lhs <= rhs + 1e-9, "{lhs} > {rhs}");
    }
}

/// Deterministic attractor vs the exact level-7 composition enumeration of
/// the gasket (3^7 points from a vertex seed).
#[test]
fn sierpinski_matches_level7_enumeration() {
    let ifs = sierpinski();
    let seed = PointSet::from_rows(&[vec![0.0, 0.0]]).unwrap();
    let (cloud, report) = attractor(
        &ifs,
        &seed,
        1e-3,
        &PruneSchedule::Auto,
        &Budgets::default(),
    )
    .unwrap();
    assert!(report.converged);

    // oracle: all 7-fold compositions applied to the seed vertex
    let mut points = vec![vec![0.0, 0.0]];
    for _ in 0..7 {
        let mut next = Vec::with_capacity(points.len() * 3);
        for p in &points {
            for map in ifs.maps() {
                next.push(map.apply(p));
            }
        }
        points = next;
    }
    assert_eq!(points.len(), 3usize.pow(7));
    let oracle = PointSet::from_rows(&points).unwrap();
    let h = hausdorff(&cloud, &oracle).unwrap();
    // oracle itself sits within 2^-7 of the gasket
    assert!(h <= 1e-2, "h = {h}");
}

/// Evaluation-map contraction with inner-solve slack:
/// h(ev(B), ev(B')) <= lip_fs h(B, B') + 2 sigma.
#[test]
fn evaluation_map_contraction_sampled() {
    let mut rng = SplitMix64::new(223);
    let budgets = Budgets::default();
    let sigma = 1e-4;
    for _ in 0..3 {
        let system = random_order2_system(&mut rng);
        let lip = system.lip_fs();
        for _ in 0..8 {
            let nb = 1 + (rng.next_u64() % 8) as usize;
            let nb2 = 1 + (rng.next_u64() % 8) as usize;
            let b1 = random_set(&mut rng, 1, nb, 1.0);
            let b2 = random_set(&mut rng, 1, nb2, 1.0);
            let (a1, r1) = evaluation_map(&system, &b1, sigma, &budgets).unwrap();
            let (a2, r2) = evaluation_map(&system, &b2, sigma, &budgets).unwrap();
            assert!(r1.converged && r2.converged);
            let lhs = hausdorff(&a1, &a2).unwrap();
            let rhs = lip * hausdorff(&b1, &b2).unwrap() + 2.0 * sigma;
            assert!(lhs <= rhs, "{lhs} > {rhs} (lip {lip})");
        }
    }
}

fn random_order2_system(rng: &mut SplitMix64) -> GifsSystem {
    let n = 1 + (rng.next_u64() % 3) as usize;
    let maps = (0..n)
        .map(|_| {
            let a1 = rng.next_f64() * 0.4 + 0.05;
            let a2 = rng.next_f64() * (0.9 - a1 - 0.05);
            let sign1 = if rng.next_u64().is_multiple_of(2) { 1.0 } else { -1.0 };
            let sign2 = if rng.next_u64().is_multiple_of(2) { 1.0 } else { -1.0 };
            MultiAffineMap::new(
                vec![vec![sign1 * a1], vec![sign2 * a2]],
                vec![(rng.next_f64() - 0.5) * 0.8],
            )
            .unwrap()
        })
        .collect();
    GifsSystem::new(maps).unwrap()
}

/// Fixed-point consistency: for B close to A_S,
/// h(ev(B), B) <= lip_fs h(B, A_S) + sigma + h(B, A_S).
#[test]
fn evaluation_map_fixed_point_consistency() {
    let system = averaging_pair();
    let budgets = Budgets::default();
    // tight stand-in for A_S = [0, 1]
    let b = set1(&(0..=400).map(|i| i as f64 / 400.0).collect::<Vec<_>>());
    let err_b = 1.25e-3; // h(B, A_S) = half the grid spacing
    let sigma = 1e-4;
    let (image, _) = evaluation_map(&system, &b, sigma, &budgets).unwrap();
    let lhs = hausdorff(&image, &b).unwrap();
    let rhs = system.lip_fs() * err_b + sigma + err_b;
    assert!(lhs <= rhs, "{lhs} > {rhs}");
}

fn averaging_pair() -> GifsSystem {
    let phi1 = MultiAffineMap::new(vec![vec![0.25], vec![0.25]], vec![0.0]).unwrap();
    let phi2 = MultiAffineMap::new(vec![vec![0.25], vec![0.25]], vec![0.5]).unwrap();
    GifsSystem::new(vec![phi1, phi2]).unwrap()
}

/// The identity behind the iteration-comparison remark:
/// A_(R_B) = F_S(A_(R_B), B^(m-1)) for any fixed B, realized here as the
/// induced fractal step fixing its own attractor.
#[test]
fn induced_attractor_is_fixed_by_induced_step() {
    let system = averaging_pair();
    let budgets = Budgets::default();
    let b = set1(&[0.0, 0.35, 1.0]);
    let sigma = 1e-6;
    let (a, _) = evaluation_map(&system, &b, sigma, &budgets).unwrap();
    let ifs = induce_ifs(&system, &b, &budgets).unwrap();
    let stepped = fractal_step(&ifs, &a, 0.0).unwrap();
    let h = hausdorff(&stepped, &a).unwrap();
    assert!(h <= 2.0 * sigma, "h = {h}");
}

/// m = 1 degeneracy: the classical recursion and the evaluation-map loop
/// both reproduce the plain IFS attractor.
#[test]
fn order_one_degenerates_to_ifs_engine() {
    // gasket as an order-1 GIFS
    let vertices = [[0.0, 0.0], [1.0, 0.0], [0.5, sqrt3() / 2.0]];
    let maps: Vec<MultiAffineMap> = vertices
        .iter()
        .map(|v| {
            MultiAffineMap::new(
                vec![vec![0.5, 0.0, 0.0, 0.5]],
                vec![v[0] / 2.0, v[1] / 2.0],
            )
            .unwrap()
        })
        .collect();
    let system = GifsSystem::new(maps).unwrap();
    let budgets = Budgets::default();
    let tol = 1e-2;

    let ifs = sierpinski();
    let (reference, _) = attractor(
        &ifs,
        &ifs.default_seed(),
        tol,
        &PruneSchedule::Auto,
        &budgets,
    )
    .unwrap();

    // classical recursion (window of one)
    let seed = PointSet::from_rows(&[vec![0.0, 0.0]]).unwrap();
    let classical =
        classical_gifs_iterate(&system, std::slice::from_ref(&seed), 14, 1e-3, &budgets)
            .unwrap();
    assert!(hausdorff(&classical, &reference).unwrap() <= 2.0 * tol);

    // evaluation-map loop collapses after one outer step
    let opts = OuterOptions {
        steps: 1,
        sigma: Schedule::Geometric { ratio: tol },
        budgets: budgets.clone(),
        ..OuterOptions::default()
    };
    let (evmap, report) = approximate_attractor(&system, &seed, &opts).unwrap();
    assert!(report.converged);
    assert!(hausdorff(&evmap, &reference).unwrap() <= 2.0 * tol);
}

/// ev_S([0,1]-grid) stays near the grid for the averaging pair, as the
/// attractor [0,1] is the evaluation map's fixed point.
#[test]
fn subsampled_outer_iteration_reaches_fixed_point() {
    let system = averaging_pair();
    let opts = OuterOptions {
        steps: 10,
        ..OuterOptions::default()
    };
    let (set, report) = approximate_attractor(&system, &set1(&[0.0]), &opts).unwrap();
    assert!(report.converged);
    let bound = report.final_bound();
    assert!(bound < 0.02, "bound {bound}");
    let grid = set1(&(0..=4000).map(|i| i as f64 / 4000.0).collect::<Vec<_>>());
    let measured = hausdorff(&set, &grid).unwrap();
    assert!(measured <= bound + 1.25e-4, "{measured} > {bound}");
    // subsample radii recorded in the ledger stay within the requested 1/k
    for row in report.ledger.rows() {
        assert!(row.beta <= 1.0 / row.k as f64 + 1e-12);
    }
}

/// Order-3 system phi(x,y,z) = (x+y+z)/6 (+ 1/2): attractor [0, 1]. Both the
/// classical window recursion and the evaluation-map loop must find it; the
/// induced systems here are indexed by pairs from B^2.
#[test]
fn order_three_system_converges() {
    let mk = |offset: f64| {
        MultiAffineMap::new(
            vec![vec![1.0 / 6.0], vec![1.0 / 6.0], vec![1.0 / 6.0]],
            vec![offset],
        )
        .unwrap()
    };
    let system = GifsSystem::new(vec![mk(0.0), mk(0.5)]).unwrap();
    let budgets = Budgets::default();
    let grid = set1(&(0..=500).map(|i| i as f64 / 500.0).collect::<Vec<_>>());

    // the direct recursion enumerates |A|^3 products per step, so it only
    // affords a coarse grid before the point budget bites
    let seeds = vec![set1(&[0.0]); 3];
    let classical = classical_gifs_iterate(&system, &seeds, 30, 8e-3, &budgets).unwrap();
    let h_classical = hausdorff(&classical, &grid).unwrap();
    assert!(h_classical <= 2.5e-2, "classical h = {h_classical}");

    let opts = OuterOptions {
        steps: 8,
        ..OuterOptions::default()
    };
    let (evmap, report) = approximate_attractor(&system, &set1(&[0.0]), &opts).unwrap();
    assert!(report.converged);
    let bound = report.final_bound();
    let h_evmap = hausdorff(&evmap, &grid).unwrap();
    assert!(h_evmap <= bound + 1e-3, "evmap h = {h_evmap}, bound = {bound}");
}

/// Orbits of an induced system stay inside the attractor's neighborhood and
/// the directed distance from the attractor to a long orbit is small.
#[test]
fn chaos_game_fills_induced_attractor() {
    use gifs_core::chaos::{random_orbit, OrbitConfig};
    use gifs_core::measure::{DiscreteMeasure, GifsP};
    use gifs_core::metric::Point;

    let system = averaging_pair();
    let p = GifsP::new(system, vec![0.5, 0.5]).unwrap();
    let nu = DiscreteMeasure::dirac(&[0.0]).unwrap();
    let cfg = OrbitConfig {
        seed_point: Point::new(vec![0.0]).unwrap(),
        rng_seed: 2024,
        burn_in: 100,
        length: 30_000,
    };
    let orbit = random_orbit(&p, &nu, &cfg).unwrap();
    let orbit_set =
        PointSet::from_rows(&orbit.iter().map(|q| q.coords().to_vec()).collect::<Vec<_>>())
            .unwrap();
    let (att, _) = evaluation_map(
        p.system(),
        &set1(&[0.0]),
        1e-4,
        &Budgets::default(),
    )
    .unwrap();
    assert!(directed_distance(&orbit_set, &att).unwrap() <= 1e-3);
    assert!(directed_distance(&att, &orbit_set).unwrap() <= 0.02);
}
