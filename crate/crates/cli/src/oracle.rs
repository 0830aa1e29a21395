//! Brute-force reference ranking and the engine-agreement checks built on
//! it.
//!
//! The reference is deliberately independent of the engine: it searches
//! every attribute list from the top, evaluates `1 - d/(1 + d_max)`
//! directly in f64, and sorts the full scoreboard. No merge scan, no
//! stored reciprocal.

use qcbr_core::case_base::{CaseBase, ImplId, RangeTable, Request};
use qcbr_core::retrieval::{retrieve_most_similar, retrieve_n_best, EngineKind, RetrievalError};
use qcbr_core::similarity::SimilarityF;

/// Float gap between best and second-best above which the fixed-point
/// engine is required to pick the same winner as the reference.
pub const ARGMAX_GAP: f64 = 1.0 / 256.0;

/// Tolerance for float-engine vs brute-force similarity values.
pub const FLOAT_MATCH_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleEntry {
    pub impl_id: ImplId,
    pub similarity: f64,
    /// Per-implementation bound on |fixed - float|: reciprocal rounding
    /// contributes at most `w * (d/2 + 1)` Q16 units per matched attribute,
    /// weight quantization and product truncation at most `(k+1)/32768` in
    /// total.
    pub fixed_bound: f64,
}

/// Scores and sorts every implementation of the requested type.
pub fn rank_all(
    cb: &CaseBase,
    rt: &RangeTable,
    req: &Request,
) -> Result<Vec<OracleEntry>, RetrievalError> {
    let entry = cb
        .find_type(req.function_type)
        .ok_or(RetrievalError::UnknownFunctionType(req.function_type))?;

    let mut out = Vec::with_capacity(entry.implementations.len());
    for case in &entry.implementations {
        let mut sum = 0.0;
        let mut bound = (req.attributes.len() as f64 + 1.0) / 32768.0;
        for want in &req.attributes {
            let range = rt
                .lookup(want.id)
                .ok_or(RetrievalError::MissingRangeEntry(want.id))?;
            match case.attributes.iter().find(|a| a.id == want.id) {
                Some(a) => {
                    let d = want.value.abs_diff(a.value);
                    if d > range.d_max {
                        return Err(RetrievalError::Similarity(
                            qcbr_core::similarity::SimilarityError::RangeViolation {
                                distance: d,
                                d_max: range.d_max,
                            },
                        ));
                    }
                    sum +=
                        want.weight.get() * (1.0 - f64::from(d) / (1.0 + f64::from(range.d_max)));
                    bound += want.weight.get() * (f64::from(d) / 2.0 + 1.0) / 65536.0;
                }
                None => {
                    // unsatisfiable requirement: contributes exactly zero in
                    // both engines, so no error term either
                }
            }
        }
        out.push(OracleEntry {
            impl_id: case.impl_id,
            similarity: sum.clamp(0.0, 1.0),
            fixed_bound: bound,
        });
    }
    out.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.impl_id.cmp(&b.impl_id))
    });
    Ok(out)
}

/// Outcome of checking one instance against the reference.
#[derive(Debug, Clone, Default)]
pub struct InstanceReport {
    pub violations: Vec<String>,
    pub max_fixed_float_deviation: f64,
    /// Whether the best/second-best float gap exceeded [`ARGMAX_GAP`].
    pub gap_conditioned: bool,
    /// Both engines picked the same winner (meaningful when conditioned).
    pub argmax_agreed: bool,
}

impl InstanceReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Runs the float engine, the fixed engine and the brute-force reference
/// over one instance and records every property violation:
///
/// 1. the float ranking must equal the reference in ids, order and value;
/// 2. every fixed similarity must stay within its error bound of the float
///    value;
/// 3. when the float gap exceeds [`ARGMAX_GAP`], both engines must pick the
///    same winner.
pub fn check_instance(
    cb: &CaseBase,
    rt: &RangeTable,
    req: &Request,
) -> Result<InstanceReport, RetrievalError> {
    let reference = rank_all(cb, rt, req)?;
    let (float_ranking, _) = retrieve_n_best(
        cb,
        rt,
        req,
        usize::MAX,
        SimilarityF::ZERO,
        EngineKind::FloatReference,
    )?;
    let (fixed_ranking, _) = retrieve_n_best(
        cb,
        rt,
        req,
        usize::MAX,
        SimilarityF::ZERO,
        EngineKind::FixedQ16,
    )?;

    let mut report = InstanceReport::default();

    if float_ranking.len() != reference.len() {
        report.violations.push(format!(
            "float engine returned {} results, reference has {}",
            float_ranking.len(),
            reference.len()
        ));
    } else {
        for (rank, (got, want)) in float_ranking.iter().zip(&reference).enumerate() {
            if got.impl_id != want.impl_id {
                report.violations.push(format!(
                    "rank {}: float engine impl {} vs reference impl {}",
                    rank + 1,
                    got.impl_id,
                    want.impl_id
                ));
            } else if (got.similarity_f.get() - want.similarity).abs() > FLOAT_MATCH_TOLERANCE {
                report.violations.push(format!(
                    "impl {}: float similarity {} vs reference {}",
                    got.impl_id,
                    got.similarity_f.get(),
                    want.similarity
                ));
            }
        }
    }

    for want in &reference {
        let Some(fixed) = fixed_ranking.iter().find(|r| r.impl_id == want.impl_id) else {
            report.violations.push(format!(
                "impl {} missing from the fixed ranking",
                want.impl_id
            ));
            continue;
        };
        let deviation = (fixed.similarity_f.get() - want.similarity).abs();
        report.max_fixed_float_deviation = report.max_fixed_float_deviation.max(deviation);
        if deviation > want.fixed_bound {
            report.violations.push(format!(
                "impl {}: fixed deviation {deviation} exceeds bound {}",
                want.impl_id, want.fixed_bound
            ));
        }
    }

    report.gap_conditioned =
        reference.len() >= 2 && reference[0].similarity - reference[1].similarity > ARGMAX_GAP;
    let (float_best, _) = retrieve_most_similar(cb, rt, req, EngineKind::FloatReference)?;
    let (fixed_best, _) = retrieve_most_similar(cb, rt, req, EngineKind::FixedQ16)?;
    report.argmax_agreed = float_best.impl_id == fixed_best.impl_id;
    if report.gap_conditioned && !report.argmax_agreed {
        report.violations.push(format!(
            "argmax disagreement at gap {}: float impl {}, fixed impl {}",
            reference[0].similarity - reference[1].similarity,
            float_best.impl_id,
            fixed_best.impl_id
        ));
    }

    Ok(report)
}
