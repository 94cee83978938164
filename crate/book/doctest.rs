// mdbook cannot run Rust snippets against a workspace crate, so every chapter
// is included here as the doc comment of an empty module and `cargo test`
// runs the code blocks as ordinary doctests. One module per chapter keeps the
// failure names readable.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/cumulants.md")]
pub mod cumulants {}
#[doc = include_str!("src/preprocessing.md")]
pub mod preprocessing {}
#[doc = include_str!("src/features.md")]
pub mod features {}
#[doc = include_str!("src/spatial.md")]
pub mod spatial {}
#[doc = include_str!("src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
