//! Local and global similarity in two functionally equivalent engines: a
//! floating-point reference and a 16-bit fixed-point path.
//!
//! Local similarity of two attribute values is `1 - d / (1 + d_max)` where
//! `d` is their Manhattan distance and `d_max` the design-global maximum
//! distance of that attribute type. The global similarity of an
//! implementation is the weighted sum of its local similarities.
//!
//! The fixed-point engine never divides: the range table carries
//! `round(65536 / (d_max + 1))` per attribute, so a local similarity is one
//! multiply and one subtract. Formats: similarities are Q16 (1.0 == 65536,
//! which needs 17 bits and therefore a wider accumulator), weights Q15
//! (1.0 == 32768). Reciprocals round half-up, products truncate — the
//! cheapest datapath convention, fixed here so results are bit-exact.

use std::cmp::Ordering;

use thiserror::Error;

use crate::case_base::{AttributeValue, RangeEntry, Weight, Q16_ONE};

/// A similarity value in [0, 1], floating-point view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityF(f64);

impl SimilarityF {
    pub const ZERO: Self = Self(0.0);
    pub const ONE: Self = Self(1.0);

    /// Accepts values in [0, 1]; rejects NaN and out-of-range input.
    pub fn new(s: f64) -> Option<Self> {
        if (0.0..=1.0).contains(&s) {
            Some(Self(normalize_zero(s)))
        } else {
            None
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    fn clamped(s: f64) -> Self {
        Self(normalize_zero(s.clamp(0.0, 1.0)))
    }
}

// Similarity values never hold NaN, so a total order exists; -0.0 is
// normalized away at construction to keep Eq and Ord consistent.
fn normalize_zero(s: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        s
    }
}

impl Eq for SimilarityF {}

impl Ord for SimilarityF {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for SimilarityF {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A similarity value in Q16: the stored integer means `value / 65536`.
/// The exact 1.0 is 65536 and needs 17 bits, hence the `u32` storage even
/// though every intermediate word on the datapath fits 16 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SimilarityQ(u32);

impl SimilarityQ {
    pub const ZERO: Self = Self(0);
    pub const ONE: Self = Self(Q16_ONE);

    pub fn new(raw: u32) -> Option<Self> {
        (raw <= Q16_ONE).then_some(Self(raw))
    }

    pub fn raw(self) -> u32 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.0) / f64::from(Q16_ONE)
    }

    pub fn to_similarity_f(self) -> SimilarityF {
        SimilarityF(self.to_f64())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SimilarityError {
    /// The observed distance exceeds the declared design-global maximum;
    /// the range table is stale. Out-of-range values are an error rather
    /// than clamped so the staleness surfaces instead of skewing results.
    #[error("distance {distance} exceeds the declared d_max {d_max}; stale range table")]
    RangeViolation { distance: u16, d_max: u16 },
    #[error("{similarities} local similarities but {weights} weights")]
    LengthMismatch { similarities: usize, weights: usize },
}

/// Manhattan distance of two attribute values.
pub fn distance(a: AttributeValue, b: AttributeValue) -> u16 {
    a.abs_diff(b)
}

/// Local similarity `1 - d / (1 + d_max)` in the reference engine.
pub fn local_similarity_f(
    a: AttributeValue,
    b: AttributeValue,
    d_max: u16,
) -> Result<SimilarityF, SimilarityError> {
    let d = distance(a, b);
    if d > d_max {
        return Err(SimilarityError::RangeViolation { distance: d, d_max });
    }
    Ok(SimilarityF(1.0 - f64::from(d) / (1.0 + f64::from(d_max))))
}

/// Local similarity on the fixed-point path: `65536 - d * recip_q16` with a
/// 32-bit intermediate product and no division anywhere.
///
/// A point range short-circuits to 1.0 — in-range values must be equal
/// there, and its stored reciprocal word is 0 by convention. For very wide
/// ranges the half-up rounding of the reciprocal can push the product past
/// 65536; the subtraction saturates at 0, which stays within the
/// engine-agreement error bound.
pub fn local_similarity_q(
    a: AttributeValue,
    b: AttributeValue,
    range: &RangeEntry,
) -> Result<SimilarityQ, SimilarityError> {
    let d = distance(a, b);
    if d > range.d_max {
        return Err(SimilarityError::RangeViolation {
            distance: d,
            d_max: range.d_max,
        });
    }
    if range.d_max == 0 {
        return Ok(SimilarityQ::ONE);
    }
    let product = u32::from(d) * u32::from(range.recip_q16);
    Ok(SimilarityQ(Q16_ONE.saturating_sub(product)))
}

/// Weighted sum of local similarities, reference engine. Expects the weight
/// sum to be 1 within tolerance (a validated request); the result is clamped
/// to [0, 1] against the tolerance slack.
pub fn global_similarity_f(
    similarities: &[SimilarityF],
    weights: &[Weight],
) -> Result<SimilarityF, SimilarityError> {
    if similarities.len() != weights.len() {
        return Err(SimilarityError::LengthMismatch {
            similarities: similarities.len(),
            weights: weights.len(),
        });
    }
    let sum: f64 = similarities
        .iter()
        .zip(weights)
        .map(|(s, w)| w.get() * s.get())
        .sum();
    Ok(SimilarityF::clamped(sum))
}

/// Weighted sum on the fixed-point path: per attribute
/// `floor(w_q15 * s_q16 / 32768)`, accumulated wide and clamped to
/// [0, 65536].
pub fn global_similarity_q(
    similarities: &[SimilarityQ],
    weights_q15: &[u16],
) -> Result<SimilarityQ, SimilarityError> {
    if similarities.len() != weights_q15.len() {
        return Err(SimilarityError::LengthMismatch {
            similarities: similarities.len(),
            weights: weights_q15.len(),
        });
    }
    let mut acc: u64 = 0;
    for (s, &w) in similarities.iter().zip(weights_q15) {
        acc += (u64::from(w) * u64::from(s.raw())) >> 15;
    }
    Ok(SimilarityQ(acc.min(u64::from(Q16_ONE)) as u32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_base::{AttributeId, Q15_ONE};
    use proptest::prelude::*;

    fn range(lower: u16, upper: u16) -> RangeEntry {
        RangeEntry::new(AttributeId::new(1).unwrap(), lower, upper).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(16, 16), 0);
        assert_eq!(distance(40, 44), 4);
        assert_eq!(distance(44, 40), 4);
    }

    #[test]
    fn local_float_examples() {
        assert_eq!(local_similarity_f(16, 16, 8).unwrap().get(), 1.0);
        let s = local_similarity_f(40, 44, 36).unwrap().get();
        assert!((s - (1.0 - 4.0 / 37.0)).abs() < 1e-15);
        let s = local_similarity_f(16, 8, 8).unwrap().get();
        assert!((s - (1.0 - 8.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn local_float_rejects_out_of_range_distance() {
        assert_eq!(
            local_similarity_f(0, 10, 4),
            Err(SimilarityError::RangeViolation {
                distance: 10,
                d_max: 4
            })
        );
    }

    #[test]
    fn local_fixed_examples() {
        // d_max 36 -> recip 1771; d = 4 -> 65536 - 7084
        assert_eq!(
            local_similarity_q(40, 44, &range(8, 44)).unwrap().raw(),
            58452
        );
        // d_max 8 -> recip 7282; d = 8 -> 65536 - 58256
        assert_eq!(
            local_similarity_q(16, 8, &range(8, 16)).unwrap().raw(),
            7280
        );
        // d_max 2 -> recip 21845; d = 1
        assert_eq!(local_similarity_q(1, 2, &range(0, 2)).unwrap().raw(), 43691);
        assert_eq!(
            local_similarity_q(16, 16, &range(8, 16)).unwrap(),
            SimilarityQ::ONE
        );
    }

    #[test]
    fn point_range_short_circuits_to_one() {
        let r = range(5, 5);
        assert_eq!(r.recip_q16, 0);
        assert_eq!(local_similarity_q(5, 5, &r).unwrap(), SimilarityQ::ONE);
        assert!(local_similarity_q(5, 6, &r).is_err());
    }

    #[test]
    fn wide_range_saturates_instead_of_wrapping() {
        // d_max 999 -> recip rounds up to 66; d near d_max overshoots 65536
        let r = range(0, 999);
        assert_eq!(r.recip_q16, 66);
        let s = local_similarity_q(0, 999, &r).unwrap();
        assert_eq!(s, SimilarityQ::ZERO);
    }

    #[test]
    fn global_float_examples() {
        let w = vec![Weight::new(1.0 / 3.0).unwrap(); 3];
        let fpga = [
            SimilarityF::ONE,
            SimilarityF::new(1.0 - 1.0 / 3.0).unwrap(),
            SimilarityF::new(1.0 - 4.0 / 37.0).unwrap(),
        ];
        let s = global_similarity_f(&fpga, &w).unwrap().get();
        assert!((s - 284.0 / 333.0).abs() < 1e-12, "got {s}");

        let dsp = [
            SimilarityF::ONE,
            SimilarityF::ONE,
            SimilarityF::new(1.0 - 4.0 / 37.0).unwrap(),
        ];
        let s = global_similarity_f(&dsp, &w).unwrap().get();
        assert!((s - 107.0 / 111.0).abs() < 1e-12, "got {s}");

        let all_ones = [SimilarityF::ONE; 3];
        assert_eq!(
            global_similarity_f(&all_ones, &w).unwrap(),
            SimilarityF::ONE
        );
    }

    #[test]
    fn global_length_mismatch() {
        let w = vec![Weight::new(1.0).unwrap()];
        assert_eq!(
            global_similarity_f(&[SimilarityF::ONE, SimilarityF::ZERO], &w),
            Err(SimilarityError::LengthMismatch {
                similarities: 2,
                weights: 1
            })
        );
    }

    #[test]
    fn global_fixed_examples() {
        let w = [10923u16; 3];
        let dsp = [
            SimilarityQ::ONE,
            SimilarityQ::ONE,
            SimilarityQ::new(58452).unwrap(),
        ];
        // 21846 + 21846 + 19484
        assert_eq!(global_similarity_q(&dsp, &w).unwrap().raw(), 63176);

        let zeros = [SimilarityQ::ZERO; 3];
        assert_eq!(global_similarity_q(&zeros, &w).unwrap(), SimilarityQ::ZERO);

        let single = [SimilarityQ::new(58452).unwrap()];
        assert_eq!(
            global_similarity_q(&single, &[Q15_ONE as u16])
                .unwrap()
                .raw(),
            58452
        );
    }

    #[test]
    fn global_fixed_clamps_the_rounding_excess() {
        // uniform thirds sum to 32769 in Q15; three exact ones would
        // accumulate to 65538 without the clamp
        let w = [10923u16; 3];
        let ones = [SimilarityQ::ONE; 3];
        assert_eq!(global_similarity_q(&ones, &w).unwrap(), SimilarityQ::ONE);
    }

    /// |s_q16/65536 - (1 - d/(1+d_max))| <= (0.5*d + 1)/65536, checked in
    /// exact integer arithmetic over the full small-range sweep.
    #[test]
    fn fixed_point_error_bound_sweep() {
        for d_max in 1u16..=256 {
            let r = range(0, d_max);
            for d in 0..=d_max {
                let s = local_similarity_q(0, d, &r).unwrap().raw() as i64;
                let den = i64::from(d_max) + 1;
                let lhs = (2 * s * den - 2 * 65536 * (den - i64::from(d))).abs();
                let rhs = (i64::from(d) + 2) * den;
                assert!(lhs <= rhs, "d={d} d_max={d_max} s={s}");
            }
        }
    }

    #[test]
    fn fixed_is_strictly_monotone_on_the_sweep_domain() {
        for d_max in 1u16..=256 {
            let r = range(0, d_max);
            let mut prev = local_similarity_q(0, 0, &r).unwrap();
            for d in 1..=d_max {
                let s = local_similarity_q(0, d, &r).unwrap();
                assert!(s < prev, "d={d} d_max={d_max}");
                prev = s;
            }
        }
    }

    proptest! {
        #[test]
        fn distance_is_symmetric(a: u16, b: u16) {
            prop_assert_eq!(distance(a, b), distance(b, a));
            prop_assert_eq!(distance(a, a), 0);
        }

        #[test]
        fn local_identity_holds_in_both_engines(lower: u16, span in 0u16..1024, offset in 0u16..1024) {
            let upper = lower.saturating_add(span);
            let r = range(lower, upper);
            let a = lower.saturating_add(offset.min(upper - lower));
            prop_assert_eq!(local_similarity_f(a, a, r.d_max).unwrap(), SimilarityF::ONE);
            prop_assert_eq!(local_similarity_q(a, a, &r).unwrap(), SimilarityQ::ONE);
            let b = a.checked_add(1).filter(|&b| b <= upper);
            if let Some(b) = b {
                prop_assert!(local_similarity_f(a, b, r.d_max).unwrap() < SimilarityF::ONE);
                prop_assert!(local_similarity_q(a, b, &r).unwrap() < SimilarityQ::ONE);
            }
        }

        #[test]
        fn float_is_strictly_monotone_in_distance(d_max in 1u16..=4096, d in 1u16..=4096) {
            let d = d.min(d_max);
            let closer = local_similarity_f(0, d - 1, d_max).unwrap();
            let farther = local_similarity_f(0, d, d_max).unwrap();
            prop_assert!(farther < closer);
        }

        #[test]
        fn bounds_hold_for_all_in_range_inputs(lower: u16, span in 0u16..=2048, d in 0u16..=2048) {
            let upper = lower.saturating_add(span);
            let r = range(lower, upper);
            let d = d.min(r.d_max);
            let f = local_similarity_f(lower, lower + d, r.d_max).unwrap();
            prop_assert!((0.0..=1.0).contains(&f.get()));
            let q = local_similarity_q(lower, lower + d, &r).unwrap();
            prop_assert!(q.raw() <= Q16_ONE);
        }

        /// The fixed amalgamation only loses the per-term floor truncation:
        /// 0 <= sum(w*s)/32768 - global < number of terms, in exact integers.
        #[test]
        fn fixed_amalgamation_error_is_below_one_unit_per_term(
            terms in (1usize..9).prop_flat_map(|k| {
                prop::collection::vec((0u32..=Q16_ONE, 0u16..=(Q15_ONE as u16 / k as u16)), k)
            })
        ) {
            let sims: Vec<SimilarityQ> = terms.iter().map(|&(s, _)| SimilarityQ::new(s).unwrap()).collect();
            let weights: Vec<u16> = terms.iter().map(|&(_, w)| w).collect();
            let got = u64::from(global_similarity_q(&sims, &weights).unwrap().raw());
            let exact_x32768: u64 = terms.iter().map(|&(s, w)| u64::from(s) * u64::from(w)).sum();
            prop_assert!(got * 32768 <= exact_x32768);
            prop_assert!(exact_x32768 - got * 32768 < terms.len() as u64 * 32768);
        }

        #[test]
        fn global_float_stays_in_bounds(
            pairs in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..9)
        ) {
            let sum: f64 = pairs.iter().map(|&(_, w)| w).sum();
            prop_assume!(sum > 0.0);
            let sims: Vec<SimilarityF> = pairs.iter().map(|&(s, _)| SimilarityF::new(s).unwrap()).collect();
            let weights: Vec<Weight> = pairs.iter().map(|&(_, w)| Weight::new(w / sum).unwrap()).collect();
            let g = global_similarity_f(&sims, &weights).unwrap().get();
            prop_assert!((0.0..=1.0).contains(&g));
        }
    }
}
