//! The `nva` book as a crate. Each chapter is a module whose docs are the
//! chapter's Markdown, so `cargo test --doc -p nva-guide` runs every listing.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/mixtures.md")]
pub mod mixtures {}

#[doc = include_str!("../../../book/src/potential.md")]
pub mod potential {}

#[doc = include_str!("../../../book/src/fitness-shaping.md")]
pub mod fitness_shaping {}

#[doc = include_str!("../../../book/src/optimizers.md")]
pub mod optimizers {}

#[doc = include_str!("../../../book/src/benchmarks.md")]
pub mod benchmarks {}
