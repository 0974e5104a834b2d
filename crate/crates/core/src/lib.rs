//! Person-job fit over a workplace heterogeneous information network.
//!
//! Stage one pre-trains entity embeddings with a relational graph encoder and
//! a link-existence decoder. Stage two scores member/job candidate pairs with
//! job-conditioned attention over profile tokens and relevance-weighted
//! aggregation over professional connections.

pub mod binio;
pub mod csagnn;
pub mod error;
pub mod eval;
pub mod pretrain;
pub mod rng;
pub mod sampler;
pub mod store;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
pub use store::{CandidatePair, EntityKind, EntityRef, RelationKind, RelationView, WhinStore};
