//! QoS-aware retrieval of function-implementation variants.
//!
//! A caller asks for a function type together with weighted attribute
//! constraints (data rates, processing modes, bit widths and similar, all
//! mapped onto 16-bit integers). The library ranks the stored
//! implementation variants of that type by a weighted attribute similarity
//! and lets an allocation layer pick the best variant that still fits the
//! current resource load.
//!
//! The crate is organized along the data path:
//!
//! * [`case_base`] — requests, the implementation tree, the per-attribute
//!   range table, validation and range-table construction.
//! * [`similarity`] — local and global similarity in a floating-point
//!   reference engine and a division-free 16-bit fixed-point engine.
//! * [`retrieval`] — type lookup, linear merge scan over sorted attribute
//!   lists, most-similar and n-best selection with threshold rejection.
//! * [`allocator`] — capacity feasibility, bypass tokens and
//!   configuration-repository lookups.
//! * [`codec`] — the packed 16-bit-word binary image mirroring the RAM
//!   layout of an embedded target, plus a line-based text source format.

pub mod allocator;
pub mod case_base;
pub mod codec;
pub mod retrieval;
pub mod similarity;

pub use allocator::{AllocationDecision, Allocator, BypassToken, ResourceSnapshot, TokenStatus};
pub use case_base::{
    build_range_table, validate_case_base, validate_request, AttributeId, AttributeValue, CaseBase,
    FunctionTypeId, ImplId, RangeEntry, RangeTable, Request, RequestAttribute, Weight,
    WeightPolicy,
};
pub use retrieval::{
    retrieve_most_similar, retrieve_n_best, score_implementation, EngineKind, RetrievalError,
    RetrievalResult, RetrievalStats,
};
pub use similarity::{SimilarityF, SimilarityQ};
