//! Allocation layer over retrieval: feasibility filtering against a
//! resource snapshot, bypass tokens for repeated calls, and lookup of
//! configuration-data references by implementation id.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::case_base::{CaseBase, FunctionTypeId, ImplId, RangeTable, Request};
use crate::retrieval::{retrieve_n_best, EngineKind, RetrievalError, RetrievalResult};
use crate::similarity::SimilarityF;

/// Current per-device-class capacity plus the per-implementation demand
/// records. An implementation with no demand record is feasible by default;
/// a class with no capacity record has capacity 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResourceSnapshot {
    capacities: BTreeMap<String, u64>,
    demands: BTreeMap<(FunctionTypeId, ImplId), Demand>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Demand {
    pub device_class: String,
    pub units: u64,
}

impl ResourceSnapshot {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_capacity(&mut self, device_class: impl Into<String>, units: u64) {
        self.capacities.insert(device_class.into(), units);
    }

    pub fn set_demand(
        &mut self,
        type_id: FunctionTypeId,
        impl_id: ImplId,
        device_class: impl Into<String>,
        units: u64,
    ) {
        self.demands.insert(
            (type_id, impl_id),
            Demand {
                device_class: device_class.into(),
                units,
            },
        );
    }

    pub fn capacity(&self, device_class: &str) -> u64 {
        self.capacities.get(device_class).copied().unwrap_or(0)
    }

    pub fn demand(&self, type_id: FunctionTypeId, impl_id: ImplId) -> Option<&Demand> {
        self.demands.get(&(type_id, impl_id))
    }

    pub fn is_feasible(&self, type_id: FunctionTypeId, impl_id: ImplId) -> bool {
        match self.demand(type_id, impl_id) {
            Some(d) => d.units <= self.capacity(&d.device_class),
            None => true,
        }
    }
}

/// Cached record of a previous selection. A valid token lets the caller
/// skip retrieval and only re-check availability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BypassToken {
    pub type_id: FunctionTypeId,
    pub impl_id: ImplId,
    /// Similarity at issue time, for the caller's bookkeeping.
    pub similarity: SimilarityF,
    pub sequence: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenStatus {
    Valid,
    Stale,
}

/// Outcome of one allocation: the best feasible candidate, the remaining
/// feasible alternatives in rank order, and the candidates rejected for
/// resource reasons. `chosen` empty means the caller has to relax its
/// constraints and retry.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationDecision {
    pub chosen: Option<RetrievalResult>,
    pub alternatives: Vec<RetrievalResult>,
    pub rejected_infeasible: Vec<ImplId>,
    pub token: Option<BypassToken>,
}

/// Issues allocation decisions and numbers their bypass tokens. Token
/// issuance mutates the sequence counter, so concurrent allocations need
/// exclusive access to one allocator; reads of the case-base are free.
#[derive(Debug)]
pub struct Allocator {
    next_sequence: u64,
}

impl Allocator {
    pub fn new() -> Self {
        Self { next_sequence: 1 }
    }

    /// Retrieves the n best matches, drops the infeasible ones, and picks
    /// the highest-similarity feasible result.
    #[allow(clippy::too_many_arguments)]
    pub fn allocate(
        &mut self,
        cb: &CaseBase,
        ranges: &RangeTable,
        req: &Request,
        snapshot: &ResourceSnapshot,
        n: usize,
        threshold: SimilarityF,
        engine: EngineKind,
    ) -> Result<AllocationDecision, RetrievalError> {
        let (ranked, _) = retrieve_n_best(cb, ranges, req, n, threshold, engine)?;

        let mut feasible = Vec::new();
        let mut rejected_infeasible = Vec::new();
        for result in ranked {
            if snapshot.is_feasible(result.type_id, result.impl_id) {
                feasible.push(result);
            } else {
                rejected_infeasible.push(result.impl_id);
            }
        }

        let mut feasible = feasible.into_iter();
        let chosen = feasible.next();
        let token = chosen.map(|c| {
            let sequence = self.next_sequence;
            self.next_sequence += 1;
            BypassToken {
                type_id: c.type_id,
                impl_id: c.impl_id,
                similarity: c.similarity_f,
                sequence,
            }
        });

        Ok(AllocationDecision {
            chosen,
            alternatives: feasible.collect(),
            rejected_infeasible,
            token,
        })
    }
}

impl Default for Allocator {
    fn default() -> Self {
        Self::new()
    }
}

/// A token is valid while its implementation still exists in the case-base
/// and its resource demand still fits the snapshot.
pub fn check_token(token: &BypassToken, cb: &CaseBase, snapshot: &ResourceSnapshot) -> TokenStatus {
    let exists = cb
        .find_implementation(token.type_id, token.impl_id)
        .is_some();
    if exists && snapshot.is_feasible(token.type_id, token.impl_id) {
        TokenStatus::Valid
    } else {
        TokenStatus::Stale
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RepositoryError {
    #[error("duplicate repository key (type {type_id}, impl {impl_id})")]
    DuplicateKey {
        type_id: FunctionTypeId,
        impl_id: ImplId,
    },
    #[error("no configuration reference for (type {type_id}, impl {impl_id})")]
    NotInRepository {
        type_id: FunctionTypeId,
        impl_id: ImplId,
    },
}

/// Injected map from implementation identity to an opaque reference for its
/// configuration data (an opcode blob, a bitstream path, a URI).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigRepository {
    entries: BTreeMap<(FunctionTypeId, ImplId), String>,
}

impl ConfigRepository {
    /// Builds the repository, rejecting duplicate keys outright.
    pub fn from_entries(
        entries: impl IntoIterator<Item = ((FunctionTypeId, ImplId), String)>,
    ) -> Result<Self, RepositoryError> {
        let mut map = BTreeMap::new();
        for ((type_id, impl_id), reference) in entries {
            if map.insert((type_id, impl_id), reference).is_some() {
                return Err(RepositoryError::DuplicateKey { type_id, impl_id });
            }
        }
        Ok(Self { entries: map })
    }

    pub fn config_ref(
        &self,
        type_id: FunctionTypeId,
        impl_id: ImplId,
    ) -> Result<&str, RepositoryError> {
        self.entries
            .get(&(type_id, impl_id))
            .map(String::as_str)
            .ok_or(RepositoryError::NotInRepository { type_id, impl_id })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_base::tests::{equalizer_case_base, equalizer_ranges, equalizer_request};

    fn type_id(id: u16) -> FunctionTypeId {
        FunctionTypeId::new(id).unwrap()
    }

    fn impl_id(id: u16) -> ImplId {
        ImplId::new(id).unwrap()
    }

    fn ample_snapshot() -> ResourceSnapshot {
        let mut s = ResourceSnapshot::new();
        s.set_capacity("fpga", 10);
        s.set_capacity("dsp", 10);
        s.set_capacity("cpu", 10);
        s.set_demand(type_id(1), impl_id(1), "fpga", 1);
        s.set_demand(type_id(1), impl_id(2), "dsp", 1);
        s.set_demand(type_id(1), impl_id(3), "cpu", 1);
        s
    }

    #[test]
    fn ample_capacity_chooses_the_best_match() {
        let mut alloc = Allocator::new();
        let decision = alloc
            .allocate(
                &equalizer_case_base(),
                &equalizer_ranges(),
                &equalizer_request(),
                &ample_snapshot(),
                usize::MAX,
                SimilarityF::ZERO,
                EngineKind::FloatReference,
            )
            .unwrap();
        assert_eq!(decision.chosen.unwrap().impl_id, impl_id(2));
        let alt: Vec<u16> = decision
            .alternatives
            .iter()
            .map(|r| r.impl_id.get())
            .collect();
        assert_eq!(alt, [1, 3]);
        assert!(decision.rejected_infeasible.is_empty());
        let token = decision.token.unwrap();
        assert_eq!((token.impl_id, token.sequence), (impl_id(2), 1));
    }

    #[test]
    fn exhausted_class_falls_back_to_the_next_best() {
        let mut snapshot = ample_snapshot();
        snapshot.set_capacity("dsp", 0);
        let mut alloc = Allocator::new();
        let decision = alloc
            .allocate(
                &equalizer_case_base(),
                &equalizer_ranges(),
                &equalizer_request(),
                &snapshot,
                usize::MAX,
                SimilarityF::ZERO,
                EngineKind::FloatReference,
            )
            .unwrap();
        let chosen = decision.chosen.unwrap();
        assert_eq!(chosen.impl_id, impl_id(1));
        assert!((chosen.similarity_f.get() - 0.85).abs() < 0.005);
        assert_eq!(decision.rejected_infeasible, [impl_id(2)]);
    }

    #[test]
    fn empty_snapshot_matches_plain_retrieval() {
        let cb = equalizer_case_base();
        let rt = equalizer_ranges();
        let req = equalizer_request();
        let (ranked, _) = retrieve_n_best(
            &cb,
            &rt,
            &req,
            usize::MAX,
            SimilarityF::ZERO,
            EngineKind::FloatReference,
        )
        .unwrap();

        let mut alloc = Allocator::new();
        let decision = alloc
            .allocate(
                &cb,
                &rt,
                &req,
                &ResourceSnapshot::new(),
                usize::MAX,
                SimilarityF::ZERO,
                EngineKind::FloatReference,
            )
            .unwrap();
        assert_eq!(decision.chosen.as_ref(), ranked.first());
        assert_eq!(decision.alternatives, ranked[1..]);
        assert!(decision.rejected_infeasible.is_empty());
    }

    #[test]
    fn no_feasible_candidate_leaves_chosen_empty() {
        let mut snapshot = ample_snapshot();
        snapshot.set_capacity("fpga", 0);
        snapshot.set_capacity("dsp", 0);
        snapshot.set_capacity("cpu", 0);
        let mut alloc = Allocator::new();
        let decision = alloc
            .allocate(
                &equalizer_case_base(),
                &equalizer_ranges(),
                &equalizer_request(),
                &snapshot,
                usize::MAX,
                SimilarityF::ZERO,
                EngineKind::FloatReference,
            )
            .unwrap();
        assert!(decision.chosen.is_none());
        assert!(decision.token.is_none());
        assert!(decision.alternatives.is_empty());
        assert_eq!(
            decision.rejected_infeasible,
            [impl_id(2), impl_id(1), impl_id(3)]
        );
    }

    #[test]
    fn tokens_stay_valid_while_resources_hold() {
        let cb = equalizer_case_base();
        let snapshot = ample_snapshot();
        let token = BypassToken {
            type_id: type_id(1),
            impl_id: impl_id(2),
            similarity: SimilarityF::new(0.96).unwrap(),
            sequence: 1,
        };
        assert_eq!(check_token(&token, &cb, &snapshot), TokenStatus::Valid);

        let mut drained = snapshot.clone();
        drained.set_capacity("dsp", 0);
        assert_eq!(check_token(&token, &cb, &drained), TokenStatus::Stale);

        let mut without_impl = cb.clone();
        without_impl.entries[0].implementations.remove(1);
        assert_eq!(
            check_token(&token, &without_impl, &snapshot),
            TokenStatus::Stale
        );
    }

    #[test]
    fn allocate_is_filter_then_argmax_for_every_capacity_pattern() {
        let cb = equalizer_case_base();
        let rt = equalizer_ranges();
        let req = equalizer_request();
        // every combination of the three classes open or drained, at every
        // threshold bracket of the example's three scores
        for mask in 0u8..8 {
            for threshold in [0.0, 0.5, 0.9, 1.0] {
                let mut snapshot = ample_snapshot();
                for (bit, class) in ["fpga", "dsp", "cpu"].iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        snapshot.set_capacity(*class, 0);
                    }
                }
                let threshold = SimilarityF::new(threshold).unwrap();
                let mut alloc = Allocator::new();
                let decision = alloc
                    .allocate(
                        &cb,
                        &rt,
                        &req,
                        &snapshot,
                        usize::MAX,
                        threshold,
                        EngineKind::FloatReference,
                    )
                    .unwrap();

                // reference: rank everything, drop below-threshold and
                // infeasible entries, take the head
                let (ranked, _) = retrieve_n_best(
                    &cb,
                    &rt,
                    &req,
                    usize::MAX,
                    threshold,
                    EngineKind::FloatReference,
                )
                .unwrap();
                let expected = ranked
                    .iter()
                    .find(|r| snapshot.is_feasible(r.type_id, r.impl_id));
                assert_eq!(decision.chosen.as_ref(), expected, "mask {mask}");

                if let Some(token) = &decision.token {
                    assert_eq!(check_token(token, &cb, &snapshot), TokenStatus::Valid);
                }
                if let Some(chosen) = &decision.chosen {
                    assert!(snapshot.is_feasible(chosen.type_id, chosen.impl_id));
                }
            }
        }
    }

    #[test]
    fn sequence_numbers_advance_per_decision() {
        let mut alloc = Allocator::new();
        let snapshot = ample_snapshot();
        for expected in 1..=3u64 {
            let decision = alloc
                .allocate(
                    &equalizer_case_base(),
                    &equalizer_ranges(),
                    &equalizer_request(),
                    &snapshot,
                    usize::MAX,
                    SimilarityF::ZERO,
                    EngineKind::FloatReference,
                )
                .unwrap();
            assert_eq!(decision.token.unwrap().sequence, expected);
        }
    }

    #[test]
    fn repository_lookup_and_duplicate_rejection() {
        let repo = ConfigRepository::from_entries([
            (
                (type_id(1), impl_id(2)),
                "bitstreams/eq_dsp.bin".to_string(),
            ),
            (
                (type_id(1), impl_id(1)),
                "bitstreams/eq_fpga.bit".to_string(),
            ),
        ])
        .unwrap();
        assert_eq!(
            repo.config_ref(type_id(1), impl_id(2)).unwrap(),
            "bitstreams/eq_dsp.bin"
        );
        assert_eq!(
            repo.config_ref(type_id(1), impl_id(9)),
            Err(RepositoryError::NotInRepository {
                type_id: type_id(1),
                impl_id: impl_id(9)
            })
        );

        let dup = ConfigRepository::from_entries([
            ((type_id(1), impl_id(2)), "a".to_string()),
            ((type_id(1), impl_id(2)), "b".to_string()),
        ]);
        assert_eq!(
            dup,
            Err(RepositoryError::DuplicateKey {
                type_id: type_id(1),
                impl_id: impl_id(2)
            })
        );
    }
}
