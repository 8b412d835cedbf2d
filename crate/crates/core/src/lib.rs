//! Traffic spike detection explained by events announced in online
//! discussion.
//!
//! The [`harness`] module runs the whole pipeline over file artifacts; the
//! other modules hold the stages. See the guide in `book/` for a walkthrough.

pub mod baseline;
pub mod correlation;
pub mod harness;
pub mod inference;
pub mod ingest;
pub mod model;
pub mod parallel;
pub mod semantics;
pub mod store;
pub mod traffic;

// The guide's chapters run as doctests so its snippets stay in sync.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/quickstart.md")]
    mod quickstart {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/spikes.md")]
    mod spikes {}
    #[doc = include_str!("../../../book/src/consensus.md")]
    mod consensus {}
    #[doc = include_str!("../../../book/src/semantics.md")]
    mod semantics {}
    #[doc = include_str!("../../../book/src/correlation.md")]
    mod correlation {}
    #[doc = include_str!("../../../book/src/testing.md")]
    mod testing {}
}
