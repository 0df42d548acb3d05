//! The guide's chapters, included as docs so their listings run as
//! doc-tests. Build the readable version with `mdbook build book`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/corpus.md")]
pub mod corpus {}
#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}
#[doc = include_str!("../../../book/src/blending.md")]
pub mod blending {}
#[doc = include_str!("../../../book/src/mechanics.md")]
pub mod mechanics {}
#[doc = include_str!("../../../book/src/layouts.md")]
pub mod layouts {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/workbench.md")]
pub mod workbench {}
