//! Compiles every Rust listing of the guide in `book/src` as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/corpora.md")]
pub mod corpora {}
#[doc = include_str!("../../../book/src/redaction.md")]
pub mod redaction {}
#[doc = include_str!("../../../book/src/dp-rewriting.md")]
pub mod dp_rewriting {}
#[doc = include_str!("../../../book/src/annotation.md")]
pub mod annotation {}
#[doc = include_str!("../../../book/src/aggregation.md")]
pub mod aggregation {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
