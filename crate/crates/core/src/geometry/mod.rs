//! Homography and epipolar evaluation of correspondences.

mod eval;
mod fundamental;
mod homography;

pub use eval::{
    accuracy_f, accuracy_h, epsilon_for, fundamental_between, h_precision, match_correct_h,
    parse_homography, parse_par, read_homography, read_par, CameraPose, EvalReport,
    DEFAULT_F_THRESHOLD,
};
pub use fundamental::{fundamental_from_pose, symmetric_epipolar_distance, FundamentalMatrix};
pub use homography::{estimate_h_ransac, fit_homography, Homography, RansacParams};

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            iterations: 2000,
            inlier_eps: 3.0,
            seed: 42,
        }
    }
}
