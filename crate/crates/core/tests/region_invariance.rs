mod common;

use affreg::affine_sim::AffinePose;
use common::invariance_under;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

#[test]
fn area_tracks_determinant_under_tilt_two() {
    for phi in [0.0, 0.4, 1.1, 2.0] {
        let pose = AffinePose::new(1.0, 0.3, 2.0, phi).unwrap();
        let (ratio, _) = invariance_under(&pose);
        assert!((ratio / 2.0 - 1.0).abs() < 0.10, "phi {phi}: area ratio {ratio}");
    }
}

#[test]
fn relative_position_survives_random_poses() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let pose = AffinePose::new(
            rng.random_range(0.8..1.2),
            rng.random_range(-PI..PI),
            rng.random_range(1.0..2.0),
            rng.random_range(0.0..PI),
        )
        .unwrap();
        let (_, drift) = invariance_under(&pose);
        worst = worst.max(drift);
    }
    assert!(worst < 0.05, "worst drift {worst}");
}
