//! Domain types for function requests, the implementation tree and the
//! per-attribute range table.
//!
//! The tree structures are plain data with public fields. Tooling has to be
//! able to load and inspect broken inputs, so [`validate_case_base`] reports
//! invariant violations as data instead of making them unrepresentable; only
//! the small leaf types ([`AttributeId`], [`Weight`], [`RangeEntry`]) enforce
//! their local invariants at construction.

use std::collections::BTreeMap;
use std::fmt;
use std::num::NonZeroU16;

use thiserror::Error;

/// One unit in the Q15 weight encoding: 1.0 == 32768.
pub const Q15_ONE: u32 = 1 << 15;
/// One unit in the Q16 similarity/reciprocal encoding: 1.0 == 65536.
pub const Q16_ONE: u32 = 1 << 16;
/// Accepted deviation of a request's weight sum from 1 in the real view.
/// The Q15 view tolerates one rounding unit per attribute instead, which is
/// the best a packed request can carry (uniform 1/3 weights round to 10923
/// each and sum to 32769, not 32768).
pub const WEIGHT_SUM_TOLERANCE: f64 = 1.0 / 1024.0;

/// Attribute type identifier. The zero word terminates lists in the packed
/// encoding, so valid ids start at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AttributeId(NonZeroU16);

impl AttributeId {
    pub fn new(id: u16) -> Option<Self> {
        NonZeroU16::new(id).map(Self)
    }

    pub fn get(self) -> u16 {
        self.0.get()
    }
}

impl fmt::Display for AttributeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Function type identifier, the id a request asks for. Nonzero for the
/// same terminator reason as [`AttributeId`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FunctionTypeId(NonZeroU16);

impl FunctionTypeId {
    pub fn new(id: u16) -> Option<Self> {
        NonZeroU16::new(id).map(Self)
    }

    pub fn get(self) -> u16 {
        self.0.get()
    }
}

impl fmt::Display for FunctionTypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Implementation identifier, unique within its function type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ImplId(NonZeroU16);

impl ImplId {
    pub fn new(id: u16) -> Option<Self> {
        NonZeroU16::new(id).map(Self)
    }

    pub fn get(self) -> u16 {
        self.0.get()
    }
}

impl fmt::Display for ImplId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Unitless 16-bit attribute value. Bit widths, processing modes, rates and
/// similar all map onto this range.
pub type AttributeValue = u16;

/// Weighting factor for one requested attribute.
///
/// The exact value is kept as `f64`; [`Weight::q15`] is the 16-bit view used
/// by the fixed-point engine and the packed request encoding. Validated
/// requests carry weights in [0, 1]; larger raw weights are accepted at
/// construction so they can flow into [`WeightPolicy::Normalize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weight(f64);

impl Weight {
    pub fn new(w: f64) -> Result<Self, WeightError> {
        if w.is_finite() && w >= 0.0 {
            Ok(Self(w))
        } else {
            Err(WeightError(w))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// Q15 view, `round(w * 32768)`. Saturates at 32768 for the raw
    /// weights above 1 that only exist before normalization.
    pub fn q15(self) -> u16 {
        let q = (self.0 * Q15_ONE as f64).round();
        if q >= Q15_ONE as f64 {
            Q15_ONE as u16
        } else {
            q as u16
        }
    }

    /// Reconstructs a weight from its packed Q15 word.
    pub fn from_q15(q: u16) -> Result<Self, WeightError> {
        if u32::from(q) > Q15_ONE {
            return Err(WeightError(f64::from(q) / Q15_ONE as f64));
        }
        Ok(Self(f64::from(q) / Q15_ONE as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("weight {0} is negative or not finite")]
pub struct WeightError(pub f64);

/// One constrained attribute of a request: id, desired value and weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequestAttribute {
    pub id: AttributeId,
    pub value: AttributeValue,
    pub weight: Weight,
}

/// A function request: the desired function type plus weighted attribute
/// constraints, sorted ascending by attribute id. The attribute set may be
/// any nonempty subset of the attribute universe.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub function_type: FunctionTypeId,
    pub attributes: Vec<RequestAttribute>,
}

impl Request {
    pub fn weight_sum(&self) -> f64 {
        self.attributes.iter().map(|a| a.weight.get()).sum()
    }
}

/// One attribute/value pair of a stored implementation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaseAttribute {
    pub id: AttributeId,
    pub value: AttributeValue,
}

/// One implementation variant of a function type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImplementationCase {
    pub impl_id: ImplId,
    /// Free-text tag for the execution target class. Documentation only:
    /// never part of similarity and not encoded in packed images.
    pub target_label: Option<String>,
    /// Sorted ascending by attribute id.
    pub attributes: Vec<CaseAttribute>,
}

/// All implementation variants of one function type, sorted by impl id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionTypeEntry {
    pub type_id: FunctionTypeId,
    pub implementations: Vec<ImplementationCase>,
}

/// The searchable library: function types, each with its implementation
/// variants, each described by attribute/value pairs. Sorted by type id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CaseBase {
    pub entries: Vec<FunctionTypeEntry>,
}

impl CaseBase {
    pub fn find_type(&self, type_id: FunctionTypeId) -> Option<&FunctionTypeEntry> {
        self.entries.iter().find(|e| e.type_id == type_id)
    }

    pub fn find_implementation(
        &self,
        type_id: FunctionTypeId,
        impl_id: ImplId,
    ) -> Option<&ImplementationCase> {
        self.find_type(type_id)?
            .implementations
            .iter()
            .find(|c| c.impl_id == impl_id)
    }
}

/// Design-global value bounds for one attribute, with the pre-computed
/// reciprocal of `d_max + 1` that lets the fixed-point engine multiply
/// instead of divide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RangeEntry {
    pub id: AttributeId,
    pub lower: AttributeValue,
    pub upper: AttributeValue,
    /// Maximum possible distance for this attribute, `upper - lower`.
    pub d_max: u16,
    /// `round(65536 / (d_max + 1))`. A point range (`d_max == 0`) stores 0:
    /// 65536 does not fit a 16-bit word, and the similarity path
    /// short-circuits to an exact match there instead of multiplying.
    pub recip_q16: u16,
}

impl RangeEntry {
    pub fn new(
        id: AttributeId,
        lower: AttributeValue,
        upper: AttributeValue,
    ) -> Result<Self, RangeError> {
        if lower > upper {
            return Err(RangeError::Inverted {
                id: id.get(),
                lower,
                upper,
            });
        }
        let d_max = upper - lower;
        Ok(Self {
            id,
            lower,
            upper,
            d_max,
            recip_q16: reciprocal_q16(d_max),
        })
    }

    /// Rebuilds an entry around a reciprocal word read back from a packed
    /// image. The stored word is authoritative there and is kept verbatim,
    /// mirroring how the fixed-point datapath trusts its RAM contents.
    pub fn from_stored(
        id: AttributeId,
        lower: AttributeValue,
        upper: AttributeValue,
        recip_q16: u16,
    ) -> Result<Self, RangeError> {
        if lower > upper {
            return Err(RangeError::Inverted {
                id: id.get(),
                lower,
                upper,
            });
        }
        Ok(Self {
            id,
            lower,
            upper,
            d_max: upper - lower,
            recip_q16,
        })
    }
}

/// `round(65536 / (d_max + 1))` with round-half-up; 0 for a point range.
/// For `d_max >= 1` the result is in 1..=32768 and fits a 16-bit word.
pub fn reciprocal_q16(d_max: u16) -> u16 {
    if d_max == 0 {
        return 0;
    }
    let den = u32::from(d_max) + 1;
    ((Q16_ONE + den / 2) / den) as u16
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RangeError {
    #[error("attribute {id}: lower bound {lower} exceeds upper bound {upper}")]
    Inverted { id: u16, lower: u16, upper: u16 },
    #[error("range entries not strictly ascending by attribute id at position {position}")]
    Ordering { position: usize },
}

/// Per-attribute range entries, sorted ascending by attribute id. The table
/// is an authoritative design-time input: its bounds may be wider than
/// anything visible in a single case-base.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RangeTable {
    pub entries: Vec<RangeEntry>,
}

impl RangeTable {
    pub fn new(entries: Vec<RangeEntry>) -> Result<Self, RangeError> {
        for (i, pair) in entries.windows(2).enumerate() {
            if pair[1].id <= pair[0].id {
                return Err(RangeError::Ordering { position: i + 1 });
            }
        }
        Ok(Self { entries })
    }

    pub fn lookup(&self, id: AttributeId) -> Option<&RangeEntry> {
        self.entries
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Union of `self` and `derived`, entries from `self` winning on
    /// conflicts. Used to fill gaps in an explicit table from a built one.
    pub fn with_fallback(&self, derived: &RangeTable) -> RangeTable {
        let mut merged: BTreeMap<AttributeId, RangeEntry> = BTreeMap::new();
        for e in &derived.entries {
            merged.insert(e.id, *e);
        }
        for e in &self.entries {
            merged.insert(e.id, *e);
        }
        RangeTable {
            entries: merged.into_values().collect(),
        }
    }
}

/// How [`validate_request`] treats the weight sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightPolicy {
    /// Require the sum to already be 1 within tolerance.
    Strict,
    /// Rescale all weights by `1 / sum` so the sum is exactly 1.
    Normalize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RequestError {
    #[error("request has no attributes")]
    Empty,
    #[error("attribute ids not strictly ascending at position {position}")]
    Ordering { position: usize },
    #[error("weight sum {sum} is outside the accepted tolerance around 1")]
    WeightSum { sum: f64 },
    #[error("weights sum to zero and cannot be normalized")]
    ZeroWeightSum,
    #[error("weight {weight} exceeds 1 in a strict-policy request")]
    WeightAboveOne { weight: f64 },
    #[error(transparent)]
    Weight(#[from] WeightError),
}

/// Checks a request and returns it in validated form.
///
/// Under [`WeightPolicy::Strict`] the request is returned unchanged if its
/// weight sum is 1 within [`WEIGHT_SUM_TOLERANCE`] (or within one Q15 unit
/// per attribute in the Q15 view, for requests decoded from packed form).
/// Under [`WeightPolicy::Normalize`] all weights are rescaled by the
/// reciprocal of their sum.
pub fn validate_request(req: &Request, policy: WeightPolicy) -> Result<Request, RequestError> {
    if req.attributes.is_empty() {
        return Err(RequestError::Empty);
    }
    for (i, pair) in req.attributes.windows(2).enumerate() {
        if pair[1].id <= pair[0].id {
            return Err(RequestError::Ordering { position: i + 1 });
        }
    }
    let sum = req.weight_sum();
    match policy {
        WeightPolicy::Strict => {
            if let Some(a) = req.attributes.iter().find(|a| a.weight.get() > 1.0) {
                return Err(RequestError::WeightAboveOne {
                    weight: a.weight.get(),
                });
            }
            let q15_sum: i64 = req
                .attributes
                .iter()
                .map(|a| i64::from(a.weight.q15()))
                .sum();
            let q15_ok =
                (q15_sum - i64::from(Q15_ONE)).unsigned_abs() <= req.attributes.len() as u64;
            if (sum - 1.0).abs() <= WEIGHT_SUM_TOLERANCE || q15_ok {
                Ok(req.clone())
            } else {
                Err(RequestError::WeightSum { sum })
            }
        }
        WeightPolicy::Normalize => {
            if sum <= 0.0 {
                return Err(RequestError::ZeroWeightSum);
            }
            let attributes = req
                .attributes
                .iter()
                .map(|a| {
                    Ok(RequestAttribute {
                        id: a.id,
                        value: a.value,
                        weight: Weight::new(a.weight.get() / sum)?,
                    })
                })
                .collect::<Result<_, RequestError>>()?;
            Ok(Request {
                function_type: req.function_type,
                attributes,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    /// Ids at one tree level are not strictly ascending.
    OutOfOrder {
        prev: u16,
        next: u16,
    },
    DuplicateId {
        id: u16,
    },
    EmptyImplementations,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::OutOfOrder { prev, next } => {
                write!(
                    f,
                    "id {next} follows {prev}, ids must be strictly ascending"
                )
            }
            ViolationKind::DuplicateId { id } => write!(f, "duplicate id {id}"),
            ViolationKind::EmptyImplementations => write!(f, "no implementations"),
        }
    }
}

/// One invariant violation, located by a path into the tree such as
/// `type 1 / impl 2 / attr 4`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub location: String,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.kind)
    }
}

/// All violations found in a case-base; empty for a valid one.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(f, "valid");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

fn check_id_sequence(
    ids: impl Iterator<Item = u16>,
    location: impl Fn(u16) -> String,
    out: &mut Vec<Violation>,
) {
    let mut prev: Option<u16> = None;
    for id in ids {
        if let Some(p) = prev {
            if id == p {
                out.push(Violation {
                    location: location(id),
                    kind: ViolationKind::DuplicateId { id },
                });
            } else if id < p {
                out.push(Violation {
                    location: location(id),
                    kind: ViolationKind::OutOfOrder { prev: p, next: id },
                });
            }
        }
        prev = Some(id);
    }
}

/// Checks every ordering and uniqueness invariant of the tree and reports
/// all violations with their locations. Violations are data, not faults: a
/// valid case-base simply yields an empty report.
pub fn validate_case_base(cb: &CaseBase) -> ValidationReport {
    let mut violations = Vec::new();

    check_id_sequence(
        cb.entries.iter().map(|e| e.type_id.get()),
        |id| format!("type {id}"),
        &mut violations,
    );

    for entry in &cb.entries {
        let t = entry.type_id.get();
        if entry.implementations.is_empty() {
            violations.push(Violation {
                location: format!("type {t}"),
                kind: ViolationKind::EmptyImplementations,
            });
        }
        check_id_sequence(
            entry.implementations.iter().map(|c| c.impl_id.get()),
            |id| format!("type {t} / impl {id}"),
            &mut violations,
        );
        for case in &entry.implementations {
            let i = case.impl_id.get();
            check_id_sequence(
                case.attributes.iter().map(|a| a.id.get()),
                |id| format!("type {t} / impl {i} / attr {id}"),
                &mut violations,
            );
        }
    }

    ValidationReport { violations }
}

/// Optional extra check: implementation ids unique across the whole
/// case-base, for deployments that key a global function repository by the
/// bare implementation id.
pub fn validate_global_impl_ids(cb: &CaseBase) -> Vec<Violation> {
    let mut seen: BTreeMap<u16, FunctionTypeId> = BTreeMap::new();
    let mut violations = Vec::new();
    for entry in &cb.entries {
        for case in &entry.implementations {
            let id = case.impl_id.get();
            if seen.insert(id, entry.type_id).is_some() {
                violations.push(Violation {
                    location: format!("type {} / impl {id}", entry.type_id),
                    kind: ViolationKind::DuplicateId { id },
                });
            }
        }
    }
    violations
}

/// Derives a range table from everything observable in the given case-bases
/// and requests: per attribute id, the bounds are the global min/max of all
/// values seen for it. Insensitive to input order.
///
/// This is a convenience for generated data. Real deployments treat the
/// range table as an authoritative design-time input, since the design-wide
/// bounds can be wider than any one tree shows.
pub fn build_range_table(case_bases: &[CaseBase], extra_requests: &[Request]) -> RangeTable {
    let mut bounds: BTreeMap<AttributeId, (u16, u16)> = BTreeMap::new();
    let mut fold = |id: AttributeId, value: AttributeValue| {
        let e = bounds.entry(id).or_insert((value, value));
        e.0 = e.0.min(value);
        e.1 = e.1.max(value);
    };
    for cb in case_bases {
        for entry in &cb.entries {
            for case in &entry.implementations {
                for attr in &case.attributes {
                    fold(attr.id, attr.value);
                }
            }
        }
    }
    for req in extra_requests {
        for attr in &req.attributes {
            fold(attr.id, attr.value);
        }
    }
    let entries = bounds
        .into_iter()
        .map(|(id, (lower, upper))| {
            RangeEntry::new(id, lower, upper).expect("min <= max by construction")
        })
        .collect();
    RangeTable { entries }
}
