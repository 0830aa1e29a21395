//! The packed binary image: linear lists of 16-bit words connected by
//! absolute word-offset pointers, every list terminated by a zero word in
//! an id position.
//!
//! Case-base image layout (offsets in words from the start of the image):
//!
//! ```text
//! word 0  magic 0x5143
//! word 1  format version
//! word 2  offset of the type list, 0 if the section is absent
//! word 3  offset of the range table, 0 if the section is absent
//! ...     type list:   (type_id, impl-list offset) pairs, 0-terminated
//! ...     per type:    (impl_id, attr-list offset) pairs, 0-terminated
//! ...     per impl:    (attr_id, value) pairs, 0-terminated
//! ...     range table: (attr_id, lower, upper, recip_q16) quads, 0-terminated
//! ```
//!
//! A packed request is headerless so that its size is exactly
//! `2 * (2 + 3k)` bytes for `k` attributes:
//!
//! ```text
//! [type_id] then (attr_id, value, weight_q15) per attribute, then 0
//! ```
//!
//! Ids are nonzero by construction; value, weight and pointer words may
//! legally be zero only where the layout says so. Words serialize
//! little-endian, two bytes each. Target labels are not encoded.

use crate::case_base::{
    AttributeId, CaseAttribute, CaseBase, FunctionTypeEntry, FunctionTypeId, ImplId,
    ImplementationCase, RangeEntry, RangeTable, Request, RequestAttribute, Weight,
};
use crate::codec::CodecError;

pub const MAGIC: u16 = 0x5143;
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_WORDS: usize = 4;

/// A complete case-base image (header, implementation tree, range table).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedImage {
    words: Vec<u16>,
}

/// A packed request, headerless.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedRequest {
    words: Vec<u16>,
}

fn words_to_bytes(words: &[u16]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(words.len() * 2);
    for w in words {
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    bytes
}

fn bytes_to_words(bytes: &[u8]) -> Result<Vec<u16>, CodecError> {
    if !bytes.len().is_multiple_of(2) {
        return Err(CodecError::OddByteLength { len: bytes.len() });
    }
    Ok(bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect())
}

impl PackedImage {
    /// Wraps raw words without interpretation; `unpack_case_base` does the
    /// checking. Mainly useful for tests and fault injection.
    pub fn from_words(words: Vec<u16>) -> Self {
        Self { words }
    }

    pub fn words(&self) -> &[u16] {
        &self.words
    }

    pub fn word_len(&self) -> usize {
        self.words.len()
    }

    pub fn byte_len(&self) -> usize {
        self.words.len() * 2
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        words_to_bytes(&self.words)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        Ok(Self {
            words: bytes_to_words(bytes)?,
        })
    }
}

impl PackedRequest {
    pub fn from_words(words: Vec<u16>) -> Self {
        Self { words }
    }

    pub fn words(&self) -> &[u16] {
        &self.words
    }

    pub fn byte_len(&self) -> usize {
        self.words.len() * 2
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        words_to_bytes(&self.words)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        Ok(Self {
            words: bytes_to_words(bytes)?,
        })
    }
}

/// Word counts of every image section, closed-form from the list lengths.
/// `pack_case_base` emits exactly these sizes, which makes the accounting
/// checkable against the produced image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutSummary {
    pub header_words: usize,
    pub type_list_words: usize,
    pub impl_list_words: usize,
    pub attr_list_words: usize,
    pub range_table_words: usize,
}

impl LayoutSummary {
    pub fn total_words(&self) -> usize {
        self.header_words
            + self.type_list_words
            + self.impl_list_words
            + self.attr_list_words
            + self.range_table_words
    }

    pub fn total_bytes(&self) -> usize {
        self.total_words() * 2
    }
}

pub fn layout_summary(cb: &CaseBase, rt: &RangeTable) -> LayoutSummary {
    LayoutSummary {
        header_words: HEADER_WORDS,
        type_list_words: 2 * cb.entries.len() + 1,
        impl_list_words: cb
            .entries
            .iter()
            .map(|e| 2 * e.implementations.len() + 1)
            .sum(),
        attr_list_words: cb
            .entries
            .iter()
            .flat_map(|e| &e.implementations)
            .map(|c| 2 * c.attributes.len() + 1)
            .sum(),
        range_table_words: 4 * rt.entries.len() + 1,
    }
}

/// Packs a valid case-base and range table into one image. Deterministic:
/// equal inputs produce byte-identical output.
pub fn pack_case_base(cb: &CaseBase, rt: &RangeTable) -> Result<PackedImage, CodecError> {
    let summary = layout_summary(cb, rt);
    let total = summary.total_words();
    if total > usize::from(u16::MAX) {
        return Err(CodecError::OffsetOverflow { words: total });
    }

    // all offsets follow from the list lengths: type list right after the
    // header, then per type its implementation list followed by that type's
    // attribute lists, then the range table
    let type_list_at = HEADER_WORDS;
    let mut cursor = type_list_at + summary.type_list_words;
    let mut impl_lists = Vec::with_capacity(cb.entries.len());
    for entry in &cb.entries {
        let impl_list_at = cursor;
        cursor += 2 * entry.implementations.len() + 1;
        let mut attr_lists = Vec::with_capacity(entry.implementations.len());
        for case in &entry.implementations {
            attr_lists.push(cursor);
            cursor += 2 * case.attributes.len() + 1;
        }
        impl_lists.push((impl_list_at, attr_lists));
    }
    let range_table_at = cursor;

    let mut words = Vec::with_capacity(total);
    words.extend([
        MAGIC,
        FORMAT_VERSION,
        type_list_at as u16,
        range_table_at as u16,
    ]);

    for (entry, (impl_list_at, _)) in cb.entries.iter().zip(&impl_lists) {
        words.push(entry.type_id.get());
        words.push(*impl_list_at as u16);
    }
    words.push(0);

    for (entry, (impl_list_at, attr_lists)) in cb.entries.iter().zip(&impl_lists) {
        debug_assert_eq!(words.len(), *impl_list_at);
        for (case, attr_list_at) in entry.implementations.iter().zip(attr_lists) {
            words.push(case.impl_id.get());
            words.push(*attr_list_at as u16);
        }
        words.push(0);
        for (case, attr_list_at) in entry.implementations.iter().zip(attr_lists) {
            debug_assert_eq!(words.len(), *attr_list_at);
            for attr in &case.attributes {
                words.push(attr.id.get());
                words.push(attr.value);
            }
            words.push(0);
        }
    }

    debug_assert_eq!(words.len(), range_table_at);
    for e in &rt.entries {
        words.extend([e.id.get(), e.lower, e.upper, e.recip_q16]);
    }
    words.push(0);
    debug_assert_eq!(words.len(), total);

    Ok(PackedImage { words })
}

fn word_at(words: &[u16], offset: usize) -> Result<u16, CodecError> {
    words
        .get(offset)
        .copied()
        .ok_or(CodecError::UnterminatedList { offset })
}

fn checked_pointer(words: &[u16], pointer: u16) -> Result<usize, CodecError> {
    let target = usize::from(pointer);
    if pointer == 0 || target >= words.len() {
        return Err(CodecError::DanglingPointer { pointer });
    }
    Ok(target)
}

fn unpack_attr_list(words: &[u16], start: usize) -> Result<Vec<CaseAttribute>, CodecError> {
    let mut attributes = Vec::new();
    let mut pos = start;
    let mut prev = 0u16;
    loop {
        let id = word_at(words, pos)?;
        if id == 0 {
            return Ok(attributes);
        }
        if id <= prev {
            return Err(CodecError::Ordering { offset: pos });
        }
        prev = id;
        let value = word_at(words, pos + 1)?;
        attributes.push(CaseAttribute {
            id: AttributeId::new(id).ok_or(CodecError::ZeroId { offset: pos })?,
            value,
        });
        pos += 2;
    }
}

fn unpack_impl_list(words: &[u16], start: usize) -> Result<Vec<ImplementationCase>, CodecError> {
    let mut implementations = Vec::new();
    let mut pos = start;
    let mut prev = 0u16;
    loop {
        let id = word_at(words, pos)?;
        if id == 0 {
            return Ok(implementations);
        }
        if id <= prev {
            return Err(CodecError::Ordering { offset: pos });
        }
        prev = id;
        let pointer = word_at(words, pos + 1)?;
        let attributes = unpack_attr_list(words, checked_pointer(words, pointer)?)?;
        implementations.push(ImplementationCase {
            impl_id: ImplId::new(id).ok_or(CodecError::ZeroId { offset: pos })?,
            target_label: None,
            attributes,
        });
        pos += 2;
    }
}

fn unpack_range_table(words: &[u16], start: usize) -> Result<RangeTable, CodecError> {
    let mut entries = Vec::new();
    let mut pos = start;
    let mut prev = 0u16;
    loop {
        let id = word_at(words, pos)?;
        if id == 0 {
            return Ok(RangeTable { entries });
        }
        if id <= prev {
            return Err(CodecError::Ordering { offset: pos });
        }
        prev = id;
        let lower = word_at(words, pos + 1)?;
        let upper = word_at(words, pos + 2)?;
        let recip = word_at(words, pos + 3)?;
        let id = AttributeId::new(id).ok_or(CodecError::ZeroId { offset: pos })?;
        // the stored reciprocal word is kept verbatim; the fixed-point
        // engine trusts it exactly like the hardware trusts its RAM
        let entry = RangeEntry::from_stored(id, lower, upper, recip).map_err(|_| {
            CodecError::InvertedRange {
                offset: pos,
                lower,
                upper,
            }
        })?;
        entries.push(entry);
        pos += 4;
    }
}

/// Decodes an image back into its case-base and range table. Structural
/// faults (bad header, dangling pointers, missing terminators, unsorted
/// lists) are errors; tree-level validity beyond that is the business of
/// `validate_case_base`. Target labels are not encoded, so they come back
/// as `None`.
pub fn unpack_case_base(img: &PackedImage) -> Result<(CaseBase, RangeTable), CodecError> {
    let words = img.words();
    if words.len() < HEADER_WORDS {
        return Err(CodecError::TruncatedHeader { len: words.len() });
    }
    if words[0] != MAGIC {
        return Err(CodecError::BadMagic { found: words[0] });
    }
    if words[1] != FORMAT_VERSION {
        return Err(CodecError::BadVersion { found: words[1] });
    }

    let mut entries = Vec::new();
    if words[2] != 0 {
        let mut pos = checked_pointer(words, words[2])?;
        let mut prev = 0u16;
        loop {
            let id = word_at(words, pos)?;
            if id == 0 {
                break;
            }
            if id <= prev {
                return Err(CodecError::Ordering { offset: pos });
            }
            prev = id;
            let pointer = word_at(words, pos + 1)?;
            let implementations = unpack_impl_list(words, checked_pointer(words, pointer)?)?;
            entries.push(FunctionTypeEntry {
                type_id: FunctionTypeId::new(id).ok_or(CodecError::ZeroId { offset: pos })?,
                implementations,
            });
            pos += 2;
        }
    }

    let range_table = if words[3] == 0 {
        RangeTable::default()
    } else {
        unpack_range_table(words, checked_pointer(words, words[3])?)?
    };

    Ok((CaseBase { entries }, range_table))
}

/// Packs a validated request. Weights are stored in Q15, so they round-trip
/// to within one Q15 unit; empty requests have no retrieval meaning and are
/// refused.
pub fn pack_request(req: &Request) -> Result<PackedRequest, CodecError> {
    if req.attributes.is_empty() {
        return Err(CodecError::EmptyRequest);
    }
    let mut words = Vec::with_capacity(2 + 3 * req.attributes.len());
    words.push(req.function_type.get());
    for a in &req.attributes {
        words.extend([a.id.get(), a.value, a.weight.q15()]);
    }
    words.push(0);
    Ok(PackedRequest { words })
}

/// Decodes a packed request. The terminator must be the last word.
pub fn unpack_request(words: &[u16]) -> Result<Request, CodecError> {
    let type_word = word_at(words, 0)?;
    let function_type = FunctionTypeId::new(type_word).ok_or(CodecError::ZeroId { offset: 0 })?;

    let mut attributes = Vec::new();
    let mut pos = 1;
    let mut prev = 0u16;
    loop {
        let id = word_at(words, pos)?;
        if id == 0 {
            pos += 1;
            break;
        }
        if id <= prev {
            return Err(CodecError::Ordering { offset: pos });
        }
        prev = id;
        let value = word_at(words, pos + 1)?;
        let weight_word = word_at(words, pos + 2)?;
        let weight = Weight::from_q15(weight_word).map_err(|_| CodecError::WeightOverflow {
            found: weight_word,
            offset: pos + 2,
        })?;
        attributes.push(RequestAttribute {
            id: AttributeId::new(id).ok_or(CodecError::ZeroId { offset: pos })?,
            value,
            weight,
        });
        pos += 3;
    }
    if pos != words.len() {
        return Err(CodecError::TrailingData { offset: pos });
    }
    Ok(Request {
        function_type,
        attributes,
    })
}
