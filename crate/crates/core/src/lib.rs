pub mod affine_sim;
pub mod bench;
pub mod error;
pub mod detect;
pub mod geometry;
pub mod imaging;
pub mod mser;
pub mod pipeline;
pub mod matching;
pub mod region_desc;
pub mod textfmt;
pub mod synth;

pub use error::{Error, Result};
