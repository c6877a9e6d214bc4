//! Predictive mutation testing on a small scale.
//!
//! [`minilang`] runs programs and tests, [`mutation`] produces mutants,
//! [`groundtruth`] executes them into a kill matrix, [`encoding`] turns
//! (mutant, test) pairs into token sequences, [`model`] trains classifiers on
//! them, [`eval`] aggregates and scores predictions, and [`pipeline`] ties the
//! steps together over files.

pub mod corpus;
pub mod encoding;
pub mod eval;
pub mod groundtruth;
pub mod minilang;
pub mod model;
pub mod mutation;
pub mod pipeline;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/minilang.md")]
    mod minilang {}
    #[doc = include_str!("../../../book/src/mutants.md")]
    mod mutants {}
    #[doc = include_str!("../../../book/src/kill-matrix.md")]
    mod kill_matrix {}
    #[doc = include_str!("../../../book/src/encoding.md")]
    mod encoding {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
