use landscape_lab::abstraction::{
    grid_smooth, jacobian_norm_probe, level_energy, smoothness_report, AbstractionHierarchy, DecoderFamily, RealGrid,
};
use landscape_lab::landscape::{hessian_fd, symmetric_spectral_norm, uniform_memory_set, EnergyLandscape, MemorySet};
use landscape_lab::seed::{rng_for, Stream};
use proptest::prelude::*;
use rand::Rng as _;

fn single_memory(dim: usize) -> EnergyLandscape {
    EnergyLandscape::new(MemorySet::new(vec![vec![0.0; dim]], vec![0]).unwrap(), 2.0).unwrap()
}

#[test]
fn single_memory_hessian_follows_c_squared() {
    let h = AbstractionHierarchy::new(DecoderFamily::Diagonal, vec![1.0, 0.8, 0.6], 2).unwrap();
    let rows = smoothness_report(&h, &single_memory(2), 32, 1.0, 5).unwrap();
    for (row, want) in rows.iter().zip([1.0, 0.64, 0.36]) {
        assert!((row.hessian_norm_est - want).abs() < 1e-3, "{row:?}");
        assert!((row.lipschitz_est - want).abs() < 1e-3, "{row:?}");
    }
}

#[test]
fn diagonal_level_energy_examples() {
    let h = AbstractionHierarchy::new(DecoderFamily::Diagonal, vec![1.0, 0.5], 2).unwrap();
    assert!((level_energy(&h, &single_memory(2), 1, &[2.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);

    let pair = EnergyLandscape::new(MemorySet::new(vec![vec![-1.0], vec![1.0]], vec![0, 1]).unwrap(), 4.0).unwrap();
    let h1 = AbstractionHierarchy::new(DecoderFamily::Diagonal, vec![1.0, 0.5], 1).unwrap();
    let e = level_energy(&h1, &pair, 1, &[0.0]).unwrap();
    assert!((e - (0.5 - 2f64.ln() / 4.0)).abs() < 1e-15);
}

/// Largest Hessian norm on a dense grid covering the level's probe ball.
fn dense_hessian_sup(h: &AbstractionHierarchy, l: &EnergyLandscape, a: usize, probe_radius: f64) -> f64 {
    let level = h.level(l, a).unwrap();
    let center = h.encode(a, &l.memories().centroid()).unwrap();
    let r = probe_radius / h.contraction(a).unwrap();
    let n = 48;
    let mut best: f64 = 0.0;
    for i in 0..=n {
        for j in 0..=n {
            let u = [-1.0 + 2.0 * i as f64 / n as f64, -1.0 + 2.0 * j as f64 / n as f64];
            if u[0] * u[0] + u[1] * u[1] > 1.0 {
                continue;
            }
            let z = [center[0] + r * u[0], center[1] + r * u[1]];
            let hess = hessian_fd(&level, &z, 1e-4 * r.max(1.0)).unwrap();
            best = best.max(symmetric_spectral_norm(&hess));
        }
    }
    best
}

// Mean-value inequality: every probe-pair gradient ratio is bounded by the
// Hessian norm somewhere on the segment, hence by its sup over the ball.
#[test]
fn lipschitz_never_exceeds_hessian_sup() {
    for seed in 0..20 {
        let m = uniform_memory_set(10, 2, 1.5, 2, seed).unwrap();
        let l = EnergyLandscape::new(m, 2.0).unwrap();
        for fam in [DecoderFamily::Diagonal, DecoderFamily::Tanh] {
            let h = AbstractionHierarchy::geometric(fam, 0.9, 4, 2).unwrap();
            for row in smoothness_report(&h, &l, 128, 1.0, seed).unwrap() {
                assert!(row.hessian_norm_est.is_finite() && row.hessian_norm_est >= 0.0);
                let sup = dense_hessian_sup(&h, &l, row.level, 1.0);
                assert!(row.hessian_norm_est <= sup * 1.01, "seed {seed} {fam:?} {row:?} sup {sup}");
                assert!(row.lipschitz_est <= sup * 1.01, "seed {seed} {fam:?} {row:?} sup {sup}");
            }
        }
    }
}

#[test]
fn smoothness_report_is_deterministic() {
    let l = EnergyLandscape::new(uniform_memory_set(10, 2, 1.5, 2, 1).unwrap(), 2.0).unwrap();
    let h = AbstractionHierarchy::geometric(DecoderFamily::Tanh, 0.9, 3, 2).unwrap();
    let a = smoothness_report(&h, &l, 40, 1.0, 17).unwrap();
    let b = smoothness_report(&h, &l, 40, 1.0, 17).unwrap();
    assert_eq!(a, b);
}

#[test]
fn tanh_jacobian_norms_sit_just_below_c() {
    let h = AbstractionHierarchy::geometric(DecoderFamily::Tanh, 0.7, 3, 3).unwrap();
    let mut last = f64::INFINITY;
    for a in 1..=3 {
        let c = h.contraction(a).unwrap();
        let j = jacobian_norm_probe(&h, a, 256, 11).unwrap();
        // sup of c * sech^2 is c, reached at the origin
        assert!(j <= c + 1e-8);
        assert!(j > 0.95 * c);
        assert!(j < last);
        last = j;
    }
}

fn random_grid(rows: usize, cols: usize, seed: u64) -> RealGrid {
    let mut rng = rng_for(seed, Stream::Generator, 77);
    let data = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
    RealGrid::new(rows, cols, data).unwrap()
}

#[test]
fn spike_response_matches_direct_kernel() {
    let spike = RealGrid::from_fn(9, 9, |r, c| if (r, c) == (4, 4) { 1.0 } else { 0.0 });
    let out = grid_smooth(&spike, 1.0).unwrap();
    let mut total = 0.0;
    for i in -3i32..=3 {
        for j in -3i32..=3 {
            total += (-((i * i + j * j) as f64) / 2.0).exp();
        }
    }
    assert!((out.get(4, 4) - 1.0 / total).abs() < 1e-14);
    assert!((out.get(4, 5) - (-0.5f64).exp() / total).abs() < 1e-14);
}

#[test]
fn smoothing_never_adds_curvature_or_minima() {
    for seed in 0..50 {
        let g = random_grid(12 + (seed as usize % 5), 15, seed);
        for sigma in [0.5, 1.0, 2.0] {
            let s = grid_smooth(&g, sigma).unwrap();
            assert!(s.total_curvature() <= g.total_curvature() + 1e-9, "seed {seed} sigma {sigma}");
            assert!(s.strict_local_minima() <= g.strict_local_minima(), "seed {seed} sigma {sigma}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smoothing_is_linear(seed in 0u64..10_000, rows in 3usize..12, cols in 3usize..12, sigma in 0.3..3.0f64, k in -3.0..3.0f64) {
        let a = random_grid(rows, cols, seed);
        let b = random_grid(rows, cols, seed + 1);
        let mix = RealGrid::new(rows, cols, a.data().iter().zip(b.data()).map(|(x, y)| x + k * y).collect()).unwrap();
        let (sa, sb, sm) = (grid_smooth(&a, sigma).unwrap(), grid_smooth(&b, sigma).unwrap(), grid_smooth(&mix, sigma).unwrap());
        for i in 0..rows * cols {
            prop_assert!((sm.data()[i] - (sa.data()[i] + k * sb.data()[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn encode_then_decode_round_trips(ratio in 0.3..0.95f64, a in 0usize..4, u in prop::collection::vec(-0.9..0.9f64, 3)) {
        for fam in [DecoderFamily::Diagonal, DecoderFamily::Tanh] {
            let h = AbstractionHierarchy::geometric(fam, ratio, 3, 3).unwrap();
            // inside the tanh decoder's image
            let x: Vec<f64> = u.iter().map(|v| v * h.contraction(a).unwrap()).collect();
            let back = h.decode(a, &h.encode(a, &x).unwrap()).unwrap();
            for (u, v) in back.iter().zip(&x) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }
    }
}
