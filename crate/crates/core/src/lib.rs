//! Core of the long chain-of-thought (LCoT) knowledge base.
//!
//! The crate is organised along the data flow of the system:
//!
//! - [`gateway`]: uniform access to model backends (HTTP providers and a
//!   deterministic scripted mock) with per-backend concurrency bounds and retry.
//! - [`socrates`]: curriculum loading, thumbnail planning, question generation
//!   and prompt sanitization.
//! - [`consensus`]: multi-solver fan-out, final-answer extraction and the
//!   unanimity filter.
//! - [`store`]: the append-only JSONL corpus of verified question/chain/answer
//!   records.
//! - [`search`]: inverse knowledge search (query expansion, BM25 inverted
//!   index, cross-disciplinary re-ranking, scaffold categorization).
//! - [`plato`]: grounded article synthesis, the ungrounded baseline and keyword
//!   extraction.
//! - [`eval`]: knowledge-point and factual-error judging, grounded vs baseline
//!   comparison.

pub mod consensus;
pub mod eval;
pub mod gateway;
pub mod plato;
pub mod search;
pub mod socrates;
pub mod store;
pub mod text;

mod digest;
pub mod util;

pub use digest::{sha256_hex, short_digest};
