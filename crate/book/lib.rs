// The guide lives in src/*.md. Each chapter is pulled in as the doc comment
// of an empty module so `cargo test --doc -p sadsac-book` runs every snippet
// against the current library, and a failure names its chapter.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/data.md")]
pub mod data {}
#[doc = include_str!("src/diagnostics.md")]
pub mod diagnostics {}
#[doc = include_str!("src/models.md")]
pub mod models {}
#[doc = include_str!("src/richness.md")]
pub mod richness {}
#[doc = include_str!("src/hill.md")]
pub mod hill {}
#[doc = include_str!("src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("src/accumulation.md")]
pub mod accumulation {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
#[doc = include_str!("../README.md")]
pub mod readme {}
