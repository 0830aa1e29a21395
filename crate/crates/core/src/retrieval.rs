//! The retrieval engine: function-type lookup, linear merge scan of each
//! implementation's attribute list against the request, and most-similar /
//! n-best selection with threshold rejection.
//!
//! Attribute lists on both sides are sorted by id, so scoring walks them
//! with two cursors that only ever advance: once a requested id has been
//! passed, the next (larger) requested id continues from the current
//! position instead of searching from the top. The search effort per
//! implementation is therefore linear in its list length, witnessed by
//! [`RetrievalStats`].

use thiserror::Error;

use crate::case_base::{
    AttributeId, CaseBase, FunctionTypeEntry, FunctionTypeId, ImplId, ImplementationCase,
    RangeTable, Request, Weight,
};
use crate::similarity::{
    global_similarity_f, global_similarity_q, local_similarity_f, local_similarity_q,
    SimilarityError, SimilarityF, SimilarityQ,
};

/// Which similarity engine scores the implementations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    /// f64 arithmetic, the reference both for results and for tests.
    FloatReference,
    /// The division-free 16-bit datapath (Q16 similarities, Q15 weights).
    FixedQ16,
}

/// Work counters for one query, modelling the packed-list walk.
///
/// `words_read` counts 16-bit words fetched from the lists: each id word
/// once when the cursor first reaches it, each value word on a match, list
/// pointers and terminators as they are crossed. `comparisons` counts id
/// comparisons. `multiplications` counts one per local-similarity
/// normalization with nonzero distance plus one per amalgamation term, the
/// same convention in both engines so runs are comparable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RetrievalStats {
    pub words_read: u64,
    pub comparisons: u64,
    pub multiplications: u64,
}

impl RetrievalStats {
    pub fn merge(&mut self, other: RetrievalStats) {
        self.words_read += other.words_read;
        self.comparisons += other.comparisons;
        self.multiplications += other.multiplications;
    }
}

/// Global similarity of one implementation under one request. The float
/// view is always present; for the fixed engine it is exactly
/// `similarity_q / 65536`, so ordering by it matches the Q16 ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImplementationScore {
    pub similarity_f: SimilarityF,
    pub similarity_q: Option<SimilarityQ>,
}

/// One ranked retrieval outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetrievalResult {
    pub type_id: FunctionTypeId,
    pub impl_id: ImplId,
    pub similarity_f: SimilarityF,
    pub similarity_q: Option<SimilarityQ>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RetrievalError {
    #[error("function type {0} is not in the case-base")]
    UnknownFunctionType(FunctionTypeId),
    #[error("function type {0} has no implementations")]
    EmptyImplementationList(FunctionTypeId),
    #[error("requested attribute {0} has no range-table entry")]
    MissingRangeEntry(AttributeId),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

/// Scores one implementation against a validated request.
///
/// Walks the request blocks and the implementation's attribute list with
/// two forward-only cursors. A requested attribute the implementation lacks
/// is an unsatisfiable requirement: its local similarity is 0 while its
/// weight still counts. Implementation attributes the request does not
/// mention are skipped. `stats` covers only this implementation's list.
pub fn score_implementation(
    case: &ImplementationCase,
    req: &Request,
    ranges: &RangeTable,
    engine: EngineKind,
) -> Result<(ImplementationScore, RetrievalStats), RetrievalError> {
    let mut stats = RetrievalStats::default();
    let use_fixed = matches!(engine, EngineKind::FixedQ16);
    let k = req.attributes.len();
    let mut locals_f: Vec<SimilarityF> = Vec::with_capacity(if use_fixed { 0 } else { k });
    let mut locals_q: Vec<SimilarityQ> = Vec::with_capacity(if use_fixed { k } else { 0 });

    let attrs = &case.attributes;
    let mut cursor = 0usize;
    // id word at `cursor`, fetched once and cached; 0 once the terminator
    // has been reached
    let mut loaded: Option<u16> = None;

    for want in &req.attributes {
        let range = ranges
            .lookup(want.id)
            .ok_or(RetrievalError::MissingRangeEntry(want.id))?;
        let wanted = want.id.get();

        let mut matched = None;
        loop {
            let id_word = *loaded.get_or_insert_with(|| {
                stats.words_read += 1;
                attrs.get(cursor).map_or(0, |a| a.id.get())
            });
            stats.comparisons += 1;
            if id_word == 0 || id_word > wanted {
                // terminator or first larger id: the attribute is missing;
                // keep the position for the next (larger) requested id
                break;
            }
            let consumed = cursor;
            cursor += 1;
            loaded = None;
            if id_word == wanted {
                stats.words_read += 1; // the value word of the matched block
                matched = Some(attrs[consumed].value);
                break;
            }
            // id_word < wanted: an attribute the request does not mention
        }

        match matched {
            Some(value) => {
                if crate::similarity::distance(want.value, value) > 0 {
                    stats.multiplications += 1;
                }
                if use_fixed {
                    locals_q.push(local_similarity_q(want.value, value, range)?);
                } else {
                    locals_f.push(local_similarity_f(want.value, value, range.d_max)?);
                }
            }
            None => {
                if use_fixed {
                    locals_q.push(SimilarityQ::ZERO);
                } else {
                    locals_f.push(SimilarityF::ZERO);
                }
            }
        }
    }

    stats.multiplications += k as u64;
    let score = if use_fixed {
        let weights: Vec<u16> = req.attributes.iter().map(|a| a.weight.q15()).collect();
        let q = global_similarity_q(&locals_q, &weights)?;
        ImplementationScore {
            similarity_f: q.to_similarity_f(),
            similarity_q: Some(q),
        }
    } else {
        let weights: Vec<Weight> = req.attributes.iter().map(|a| a.weight).collect();
        ImplementationScore {
            similarity_f: global_similarity_f(&locals_f, &weights)?,
            similarity_q: None,
        }
    };
    Ok((score, stats))
}

fn find_type_entry<'a>(
    cb: &'a CaseBase,
    wanted: FunctionTypeId,
    stats: &mut RetrievalStats,
) -> Option<&'a FunctionTypeEntry> {
    for entry in &cb.entries {
        stats.words_read += 1; // type id word
        stats.comparisons += 1;
        if entry.type_id == wanted {
            stats.words_read += 1; // pointer word of the matched entry
            return Some(entry);
        }
    }
    stats.words_read += 1; // terminator
    None
}

fn result_for(
    entry: &FunctionTypeEntry,
    case: &ImplementationCase,
    score: ImplementationScore,
) -> RetrievalResult {
    RetrievalResult {
        type_id: entry.type_id,
        impl_id: case.impl_id,
        similarity_f: score.similarity_f,
        similarity_q: score.similarity_q,
    }
}

/// Scores every implementation of the requested type and returns the best,
/// ties going to the lowest implementation id.
pub fn retrieve_most_similar(
    cb: &CaseBase,
    ranges: &RangeTable,
    req: &Request,
    engine: EngineKind,
) -> Result<(RetrievalResult, RetrievalStats), RetrievalError> {
    let mut stats = RetrievalStats::default();
    let entry = find_type_entry(cb, req.function_type, &mut stats)
        .ok_or(RetrievalError::UnknownFunctionType(req.function_type))?;
    if entry.implementations.is_empty() {
        return Err(RetrievalError::EmptyImplementationList(req.function_type));
    }

    let mut best: Option<RetrievalResult> = None;
    for case in &entry.implementations {
        stats.words_read += 2; // impl-list block: id and pointer
        let (score, s) = score_implementation(case, req, ranges, engine)?;
        stats.merge(s);
        let candidate = result_for(entry, case, score);
        let wins = match &best {
            None => true,
            Some(cur) => {
                candidate.similarity_f > cur.similarity_f
                    || (candidate.similarity_f == cur.similarity_f
                        && candidate.impl_id < cur.impl_id)
            }
        };
        if wins {
            best = Some(candidate);
        }
    }
    Ok((best.expect("nonempty implementation list"), stats))
}

/// Scores every implementation of the requested type, drops the ones below
/// `threshold`, and returns the best `n` in descending similarity order
/// (ties ascending by implementation id).
pub fn retrieve_n_best(
    cb: &CaseBase,
    ranges: &RangeTable,
    req: &Request,
    n: usize,
    threshold: SimilarityF,
    engine: EngineKind,
) -> Result<(Vec<RetrievalResult>, RetrievalStats), RetrievalError> {
    let mut stats = RetrievalStats::default();
    let entry = find_type_entry(cb, req.function_type, &mut stats)
        .ok_or(RetrievalError::UnknownFunctionType(req.function_type))?;

    let mut results = Vec::with_capacity(entry.implementations.len());
    for case in &entry.implementations {
        stats.words_read += 2;
        let (score, s) = score_implementation(case, req, ranges, engine)?;
        stats.merge(s);
        if score.similarity_f >= threshold {
            results.push(result_for(entry, case, score));
        }
    }
    results.sort_by(|a, b| {
        b.similarity_f
            .cmp(&a.similarity_f)
            .then_with(|| a.impl_id.cmp(&b.impl_id))
    });
    results.truncate(n);
    Ok((results, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_base::tests::{equalizer_case_base, equalizer_ranges, equalizer_request};
    use crate::case_base::{AttributeId, CaseAttribute, RangeEntry, RequestAttribute};
    use proptest::prelude::*;

    fn impl_3_gpp() -> ImplementationCase {
        equalizer_case_base().entries[0].implementations[2].clone()
    }

    #[test]
    fn equalizer_scores_match_the_worked_example() {
        let cb = equalizer_case_base();
        let rt = equalizer_ranges();
        let req = equalizer_request();

        let expected = [284.0 / 333.0, 107.0 / 111.0, 430.0 / 999.0];
        for (case, want) in cb.entries[0].implementations.iter().zip(expected) {
            let (score, _) =
                score_implementation(case, &req, &rt, EngineKind::FloatReference).unwrap();
            assert!(
                (score.similarity_f.get() - want).abs() < 1e-12,
                "impl {}: got {}, want {want}",
                case.impl_id,
                score.similarity_f.get()
            );
        }
    }

    #[test]
    fn equalizer_fixed_scores_match_the_hand_derived_words() {
        let cb = equalizer_case_base();
        let rt = equalizer_ranges();
        let req = equalizer_request();

        let expected = [55894u32, 63176, 28209];
        for (case, want) in cb.entries[0].implementations.iter().zip(expected) {
            let (score, _) = score_implementation(case, &req, &rt, EngineKind::FixedQ16).unwrap();
            assert_eq!(
                score.similarity_q.unwrap().raw(),
                want,
                "impl {}",
                case.impl_id
            );
        }
    }

    #[test]
    fn missing_attribute_scores_zero_with_full_weight() {
        let case = ImplementationCase {
            impl_id: ImplId::new(1).unwrap(),
            target_label: None,
            attributes: vec![CaseAttribute {
                id: AttributeId::new(2).unwrap(),
                value: 9,
            }],
        };
        let req = Request {
            function_type: FunctionTypeId::new(1).unwrap(),
            attributes: vec![RequestAttribute {
                id: AttributeId::new(5).unwrap(),
                value: 3,
                weight: Weight::new(1.0).unwrap(),
            }],
        };
        let rt = RangeTable::new(vec![
            RangeEntry::new(AttributeId::new(5).unwrap(), 0, 10).unwrap()
        ])
        .unwrap();
        let (score, _) =
            score_implementation(&case, &req, &rt, EngineKind::FloatReference).unwrap();
        assert_eq!(score.similarity_f, SimilarityF::ZERO);
        let (score, _) = score_implementation(&case, &req, &rt, EngineKind::FixedQ16).unwrap();
        assert_eq!(score.similarity_q.unwrap(), SimilarityQ::ZERO);
    }

    #[test]
    fn missing_range_entry_is_an_error() {
        let rt = RangeTable::default();
        let err = score_implementation(
            &impl_3_gpp(),
            &equalizer_request(),
            &rt,
            EngineKind::FloatReference,
        )
        .unwrap_err();
        assert_eq!(
            err,
            RetrievalError::MissingRangeEntry(AttributeId::new(1).unwrap())
        );
    }

    #[test]
    fn most_similar_picks_the_dsp_variant() {
        let (best, _) = retrieve_most_similar(
            &equalizer_case_base(),
            &equalizer_ranges(),
            &equalizer_request(),
            EngineKind::FloatReference,
        )
        .unwrap();
        assert_eq!(best.impl_id, ImplId::new(2).unwrap());
        assert!((best.similarity_f.get() - 0.96).abs() < 0.005);
    }

    #[test]
    fn both_engines_agree_on_the_equalizer_winner() {
        let cb = equalizer_case_base();
        let rt = equalizer_ranges();
        let req = equalizer_request();
        let (float_best, _) =
            retrieve_most_similar(&cb, &rt, &req, EngineKind::FloatReference).unwrap();
        let (fixed_best, _) = retrieve_most_similar(&cb, &rt, &req, EngineKind::FixedQ16).unwrap();
        assert_eq!(float_best.impl_id, fixed_best.impl_id);
    }

    #[test]
    fn identical_implementation_scores_exactly_one() {
        let req = equalizer_request();
        let case = ImplementationCase {
            impl_id: ImplId::new(1).unwrap(),
            target_label: None,
            attributes: req
                .attributes
                .iter()
                .map(|a| CaseAttribute {
                    id: a.id,
                    value: a.value,
                })
                .collect(),
        };
        let cb = CaseBase {
            entries: vec![FunctionTypeEntry {
                type_id: req.function_type,
                implementations: vec![case],
            }],
        };
        let (best, _) =
            retrieve_most_similar(&cb, &equalizer_ranges(), &req, EngineKind::FloatReference)
                .unwrap();
        assert_eq!(best.similarity_f, SimilarityF::ONE);
        let (best, _) =
            retrieve_most_similar(&cb, &equalizer_ranges(), &req, EngineKind::FixedQ16).unwrap();
        assert_eq!(best.similarity_q.unwrap(), SimilarityQ::ONE);
    }

    #[test]
    fn unknown_function_type_is_an_error() {
        let mut req = equalizer_request();
        req.function_type = FunctionTypeId::new(99).unwrap();
        let err = retrieve_most_similar(
            &equalizer_case_base(),
            &equalizer_ranges(),
            &req,
            EngineKind::FloatReference,
        )
        .unwrap_err();
        assert_eq!(
            err,
            RetrievalError::UnknownFunctionType(FunctionTypeId::new(99).unwrap())
        );
    }

    #[test]
    fn empty_implementation_list_is_an_error() {
        let cb = CaseBase {
            entries: vec![FunctionTypeEntry {
                type_id: FunctionTypeId::new(1).unwrap(),
                implementations: vec![],
            }],
        };
        let err = retrieve_most_similar(
            &cb,
            &equalizer_ranges(),
            &equalizer_request(),
            EngineKind::FloatReference,
        )
        .unwrap_err();
        assert_eq!(
            err,
            RetrievalError::EmptyImplementationList(FunctionTypeId::new(1).unwrap())
        );
    }

    #[test]
    fn n_best_ranks_and_rejects_below_threshold() {
        let cb = equalizer_case_base();
        let rt = equalizer_ranges();
        let req = equalizer_request();

        let (all, _) = retrieve_n_best(
            &cb,
            &rt,
            &req,
            3,
            SimilarityF::ZERO,
            EngineKind::FloatReference,
        )
        .unwrap();
        let ids: Vec<u16> = all.iter().map(|r| r.impl_id.get()).collect();
        assert_eq!(ids, [2, 1, 3]);

        let half = SimilarityF::new(0.5).unwrap();
        let (kept, _) =
            retrieve_n_best(&cb, &rt, &req, 3, half, EngineKind::FloatReference).unwrap();
        let ids: Vec<u16> = kept.iter().map(|r| r.impl_id.get()).collect();
        assert_eq!(ids, [2, 1]);

        let (none, _) = retrieve_n_best(
            &cb,
            &rt,
            &req,
            0,
            SimilarityF::ZERO,
            EngineKind::FloatReference,
        )
        .unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn ties_break_toward_the_lowest_impl_id() {
        let cb = equalizer_case_base();
        let mut entry = cb.entries[0].clone();
        // two copies of the DSP variant under different ids, stored in
        // descending-score order on purpose
        entry.implementations = vec![
            ImplementationCase {
                impl_id: ImplId::new(9).unwrap(),
                ..entry.implementations[1].clone()
            },
            ImplementationCase {
                impl_id: ImplId::new(4).unwrap(),
                ..entry.implementations[1].clone()
            },
        ];
        let cb = CaseBase {
            entries: vec![entry],
        };
        let (best, _) = retrieve_most_similar(
            &cb,
            &equalizer_ranges(),
            &equalizer_request(),
            EngineKind::FloatReference,
        )
        .unwrap();
        assert_eq!(best.impl_id, ImplId::new(4).unwrap());
    }

    #[test]
    fn linear_scan_bound_on_the_equalizer_library() {
        let cb = equalizer_case_base();
        let rt = equalizer_ranges();
        let req = equalizer_request();
        for case in &cb.entries[0].implementations {
            let (_, stats) =
                score_implementation(case, &req, &rt, EngineKind::FloatReference).unwrap();
            assert!(stats.words_read <= 2 * case.attributes.len() as u64 + 2);
        }
    }

    fn arb_request_ids(max_id: u16) -> impl Strategy<Value = Vec<u16>> {
        prop::collection::btree_set(1..=max_id, 1..6).prop_map(|s| s.into_iter().collect())
    }

    proptest! {
        /// Raising the threshold never adds results; a smaller n is always a
        /// prefix of a larger one.
        #[test]
        fn threshold_and_n_are_monotone(t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0, n in 0usize..5) {
            let cb = equalizer_case_base();
            let rt = equalizer_ranges();
            let req = equalizer_request();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let lo = SimilarityF::new(lo).unwrap();
            let hi = SimilarityF::new(hi).unwrap();

            let (loose, _) = retrieve_n_best(&cb, &rt, &req, usize::MAX, lo, EngineKind::FloatReference).unwrap();
            let (tight, _) = retrieve_n_best(&cb, &rt, &req, usize::MAX, hi, EngineKind::FloatReference).unwrap();
            prop_assert!(tight.len() <= loose.len());
            prop_assert_eq!(&loose[..tight.len()], &tight[..]);

            let (first_n, _) = retrieve_n_best(&cb, &rt, &req, n, lo, EngineKind::FloatReference).unwrap();
            prop_assert_eq!(&loose[..n.min(loose.len())], &first_n[..]);
        }

        /// The stored order of implementations does not change the ranking,
        /// even when the list is not sort-normalized.
        #[test]
        fn ranking_is_insensitive_to_stored_order(seed in 0u64..64) {
            let cb = equalizer_case_base();
            let mut shuffled = cb.clone();
            let impls = &mut shuffled.entries[0].implementations;
            impls.rotate_left((seed % 3) as usize);
            if seed % 2 == 1 {
                impls.swap(0, 1);
            }

            let rt = equalizer_ranges();
            let req = equalizer_request();
            let (a, _) = retrieve_n_best(&cb, &rt, &req, usize::MAX, SimilarityF::ZERO, EngineKind::FloatReference).unwrap();
            let (b, _) = retrieve_n_best(&shuffled, &rt, &req, usize::MAX, SimilarityF::ZERO, EngineKind::FloatReference).unwrap();
            prop_assert_eq!(a, b);
        }

        /// A requested attribute the implementation lacks contributes a zero
        /// term: dropping it from the request (weights untouched) leaves the
        /// score bit-identical in both engines.
        #[test]
        fn absent_attributes_contribute_exactly_zero(ids in arb_request_ids(12), case_ids in arb_request_ids(12)) {
            let case = ImplementationCase {
                impl_id: ImplId::new(1).unwrap(),
                target_label: None,
                attributes: case_ids.iter().map(|&id| CaseAttribute {
                    id: AttributeId::new(id).unwrap(),
                    value: id,
                }).collect(),
            };
            let weight = Weight::new(1.0 / ids.len() as f64).unwrap();
            let req = Request {
                function_type: FunctionTypeId::new(1).unwrap(),
                attributes: ids.iter().map(|&id| RequestAttribute {
                    id: AttributeId::new(id).unwrap(),
                    value: 1,
                    weight,
                }).collect(),
            };
            let pruned = Request {
                function_type: req.function_type,
                attributes: req.attributes.iter()
                    .filter(|a| case_ids.contains(&a.id.get()))
                    .copied()
                    .collect(),
            };
            let rt = RangeTable::new((1..=12).map(|id| {
                RangeEntry::new(AttributeId::new(id).unwrap(), 0, 16).unwrap()
            }).collect()).unwrap();

            for engine in [EngineKind::FloatReference, EngineKind::FixedQ16] {
                let (full, _) = score_implementation(&case, &req, &rt, engine).unwrap();
                let (dropped, _) = score_implementation(&case, &pruned, &rt, engine).unwrap();
                prop_assert_eq!(full, dropped);
            }
        }

        /// words_read over one attribute list stays within 2*len + 2 and
        /// every requested id is resolved in a single forward pass.
        #[test]
        fn scan_is_linear_for_arbitrary_id_sets(ids in arb_request_ids(24), case_ids in arb_request_ids(24)) {
            let case = ImplementationCase {
                impl_id: ImplId::new(1).unwrap(),
                target_label: None,
                attributes: case_ids.iter().map(|&id| CaseAttribute {
                    id: AttributeId::new(id).unwrap(),
                    value: 0,
                }).collect(),
            };
            let weight = Weight::new(1.0 / ids.len() as f64).unwrap();
            let req = Request {
                function_type: FunctionTypeId::new(1).unwrap(),
                attributes: ids.iter().map(|&id| RequestAttribute {
                    id: AttributeId::new(id).unwrap(),
                    value: 0,
                    weight,
                }).collect(),
            };
            let rt = RangeTable::new((1..=24).map(|id| {
                RangeEntry::new(AttributeId::new(id).unwrap(), 0, 16).unwrap()
            }).collect()).unwrap();

            let (_, stats) = score_implementation(&case, &req, &rt, EngineKind::FloatReference).unwrap();
            prop_assert!(stats.words_read <= 2 * case.attributes.len() as u64 + 2);
        }
    }
}
