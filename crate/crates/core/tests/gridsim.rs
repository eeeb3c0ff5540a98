mod common;

use landscape_lab::gridsim::{amplification_curve, coarsen, init_grid, one_step_map, share_stderr, ClassGrid, RED};

#[test]
fn enumeration_matches_closed_form_and_quoted_values() {
    // m(0.8) = 0.4096 + 0.4096 + 0.0768
    for (p, want) in [(0.5, 0.5), (0.6, 0.648), (0.7, 0.784), (0.8, 0.896), (0.9, 0.972)] {
        let e = common::enumerated_one_step(p);
        assert!((e - want).abs() < 1e-12, "p {p}: {e}");
        assert!((one_step_map(p) - e).abs() < 1e-12);
    }
}

#[test]
fn initial_share_is_within_three_sigma() {
    let g = init_grid(512, 0.9, 4).unwrap();
    assert!((g.red_share() - 0.9).abs() < 3.0 * share_stderr(0.9, 512 * 512));
    assert_eq!(g, init_grid(512, 0.9, 4).unwrap());
}

#[test]
fn one_coarsening_matches_the_enumeration() {
    for (k, p) in [0.5, 0.6, 0.7, 0.8, 0.9].into_iter().enumerate() {
        let g = init_grid(512, p, 100 + k as u64).unwrap();
        let c = coarsen(&g, 7).unwrap();
        let m = common::enumerated_one_step(p);
        assert!((c.red_share() - m).abs() < 3.0 * share_stderr(m, 256 * 256), "p {p}");
    }
}

#[test]
fn balanced_curve_stays_flat_and_biased_curve_climbs() {
    for pt in amplification_curve(512, 0.5, 5, 3).unwrap() {
        let cells = pt.side * pt.side;
        assert!((pt.red_share - 0.5).abs() < 3.0 * share_stderr(0.5, cells), "{pt:?}");
    }
    let curve = amplification_curve(512, 0.7, 4, 3).unwrap();
    for w in curve.windows(2) {
        assert!(w[1].red_share > w[0].red_share);
    }
}

#[test]
fn ties_are_fair_and_keyed_by_block() {
    // every block is a 2-2 tie
    let side = 256;
    let cells = (0..side * side).map(|k| ((k / side) % 2) as u8).collect();
    let g = ClassGrid::new(side, cells).unwrap();
    let a = coarsen(&g, 9).unwrap();
    let n = 128.0 * 128.0;
    assert!((a.red_share() - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());
    assert_eq!(a, coarsen(&g, 9).unwrap());
    assert_ne!(a, coarsen(&g, 10).unwrap());
}

#[test]
fn level_limits() {
    assert!(amplification_curve(64, 0.6, 6, 0).is_ok());
    assert!(amplification_curve(64, 0.6, 7, 0).unwrap_err().is_input_error());
    assert!(init_grid(48, 0.6, 0).is_err());
    let one = ClassGrid::new(1, vec![RED]);
    assert!(one.is_err() || coarsen(&one.unwrap(), 0).is_err());
}
