//! Similarity-based annotation of documents with controlled-vocabulary codes.
//!
//! Documents are indexed as weighted term bags, a new document is used as a
//! query, and the labels of its nearest neighbors vote. See the guide in
//! `book/` for a walk through each stage.

pub mod corpus;
pub mod error;
pub mod evalens;
pub mod index;
pub mod knn;
pub mod metalabels;
pub mod profiles;
pub mod recipe;
pub mod textproc;

pub use error::{Error, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/index.md")]
    mod index {}
    #[doc = include_str!("../../../book/src/knn.md")]
    mod knn {}
    #[doc = include_str!("../../../book/src/metalabels.md")]
    mod metalabels {}
    #[doc = include_str!("../../../book/src/profiles.md")]
    mod profiles {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/recipes.md")]
    mod recipes {}
}
