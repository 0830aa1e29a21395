//! Encodings of case-bases, range tables and requests: a packed 16-bit-word
//! binary image mirroring the RAM layout of an embedded retrieval unit, and
//! a line-based text source format for authoring and tooling.

mod packed;
mod source;

pub use packed::{
    layout_summary, pack_case_base, pack_request, unpack_case_base, unpack_request, LayoutSummary,
    PackedImage, PackedRequest, FORMAT_VERSION, HEADER_WORDS, MAGIC,
};
pub use source::{emit_source, parse_source, SyntaxError};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("bad magic word {found:#06x}, expected {MAGIC:#06x}")]
    BadMagic { found: u16 },
    #[error("unsupported format version {found}, this build reads version {FORMAT_VERSION}")]
    BadVersion { found: u16 },
    #[error("image too short for the {HEADER_WORDS}-word header ({len} words)")]
    TruncatedHeader { len: usize },
    #[error("pointer {pointer} points outside the image")]
    DanglingPointer { pointer: u16 },
    #[error("list ran past the end of the image at word {offset} without a terminator")]
    UnterminatedList { offset: usize },
    #[error("ids not strictly ascending at word {offset}")]
    Ordering { offset: usize },
    #[error("reserved zero id at word {offset}")]
    ZeroId { offset: usize },
    #[error("range bounds inverted at word {offset}: lower {lower} > upper {upper}")]
    InvertedRange {
        offset: usize,
        lower: u16,
        upper: u16,
    },
    #[error("weight word {found} at word {offset} exceeds the Q15 unit 32768")]
    WeightOverflow { found: u16, offset: usize },
    #[error("trailing words after the terminator at word {offset}")]
    TrailingData { offset: usize },
    #[error("byte stream of {len} bytes is not a whole number of 16-bit words")]
    OddByteLength { len: usize },
    #[error("image would need {words} words; pointers are 16-bit, so at most 65535 fit")]
    OffsetOverflow { words: usize },
    #[error("request has no attributes")]
    EmptyRequest,
}
