//! DAG query answering over knowledge graphs.
//!
//! The crate covers the whole pipeline: an indexed triple store ([`kg`]),
//! the query algebra with relaxation and computation graphs ([`query`]),
//! an exact set-semantics oracle ([`oracle`]), benchmark generation with
//! difficulty splits ([`bench`]), a small reverse-mode differentiation
//! kernel ([`autodiff`]), box / Beta / cone query embeddings with a
//! relational combinator for role meets ([`geometry`]), and training and
//! evaluation ([`train`]).

pub mod autodiff;
pub mod bench;
pub mod geometry;
pub mod kg;
pub mod oracle;
pub mod query;
pub mod train;
