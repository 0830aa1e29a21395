//! Deterministic random generation of case-base libraries and requests,
//! seeded so identical parameters reproduce identical structures byte for
//! byte.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qcbr_core::case_base::{
    build_range_table, AttributeId, CaseAttribute, CaseBase, FunctionTypeEntry, FunctionTypeId,
    ImplId, ImplementationCase, RangeTable, Request, RequestAttribute, Weight,
};

/// Shape of a generated library.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenSpec {
    pub seed: u64,
    pub types: u16,
    pub impls_per_type: u16,
    pub attrs_per_impl: u16,
    /// Size of the shared attribute-id pool. Kept wider than
    /// `attrs_per_impl` by default so requests can name attributes an
    /// implementation lacks, which is what exercises the unsatisfiable-
    /// requirement path.
    pub attr_pool: u16,
    /// Largest generated attribute value.
    pub value_bound: u16,
    /// Requests generated alongside the case-base.
    pub requests: u16,
}

impl GenSpec {
    /// Pool width used when none is given: half again as many ids as one
    /// implementation carries.
    pub fn default_pool(attrs_per_impl: u16) -> u16 {
        attrs_per_impl.saturating_add(attrs_per_impl / 2).max(1)
    }

    pub fn validate(&self) -> Result<(), String> {
        for (field, value) in [
            ("types", self.types),
            ("impls", self.impls_per_type),
            ("attrs", self.attrs_per_impl),
        ] {
            if value == 0 {
                return Err(format!("`--{field}` must be at least 1"));
            }
        }
        if self.attr_pool < self.attrs_per_impl {
            return Err(format!(
                "`--pool` ({}) must be at least `--attrs` ({})",
                self.attr_pool, self.attrs_per_impl
            ));
        }
        Ok(())
    }
}

fn gen_weights(rng: &mut ChaCha8Rng, k: usize) -> Vec<Weight> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter()
        .map(|w| Weight::new(w / total).expect("normalized weight"))
        .collect()
}

/// Generates a case-base, a covering range table and the requested number
/// of requests. The structures always pass `validate_case_base` and
/// `validate_request`; the range table is built over everything generated,
/// so every request is answerable without range errors.
pub fn generate(spec: &GenSpec) -> (CaseBase, RangeTable, Vec<Request>) {
    debug_assert!(spec.validate().is_ok());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // sparse ids make the generated files look like real libraries where
    // attribute numbering has gaps
    let span = (usize::from(spec.attr_pool) * 3).min(usize::from(u16::MAX));
    let mut pool: Vec<AttributeId> = sample(&mut rng, span, usize::from(spec.attr_pool))
        .into_iter()
        .map(|i| AttributeId::new(i as u16 + 1).expect("ids start at 1"))
        .collect();
    pool.sort();

    let labels = ["fpga", "dsp", "gpp", "asic"];
    let entries = (1..=spec.types)
        .map(|t| FunctionTypeEntry {
            type_id: FunctionTypeId::new(t).expect("nonzero"),
            implementations: (1..=spec.impls_per_type)
                .map(|i| {
                    let mut picked =
                        sample(&mut rng, pool.len(), usize::from(spec.attrs_per_impl)).into_vec();
                    picked.sort_unstable();
                    ImplementationCase {
                        impl_id: ImplId::new(i).expect("nonzero"),
                        target_label: Some(labels[rng.random_range(0..labels.len())].to_string()),
                        attributes: picked
                            .into_iter()
                            .map(|p| CaseAttribute {
                                id: pool[p],
                                value: rng.random_range(0..=spec.value_bound),
                            })
                            .collect(),
                    }
                })
                .collect(),
        })
        .collect();
    let cb = CaseBase { entries };

    let requests = (0..spec.requests)
        .map(|_| {
            let function_type =
                FunctionTypeId::new(rng.random_range(1..=spec.types)).expect("nonzero");
            let k = usize::from(rng.random_range(1..=spec.attrs_per_impl));
            let mut picked = sample(&mut rng, pool.len(), k).into_vec();
            picked.sort_unstable();
            let weights = gen_weights(&mut rng, k);
            Request {
                function_type,
                attributes: picked
                    .into_iter()
                    .zip(weights)
                    .map(|(p, weight)| RequestAttribute {
                        id: pool[p],
                        value: rng.random_range(0..=spec.value_bound),
                        weight,
                    })
                    .collect(),
            }
        })
        .collect::<Vec<_>>();

    let rt = build_range_table(std::slice::from_ref(&cb), &requests);
    (cb, rt, requests)
}

/// Draws one random instance from the family described by `bounds`:
/// `types`, `impls_per_type` and `attrs_per_impl` are read as per-trial
/// upper limits, `attr_pool` as the widest allowed pool, `value_bound` as
/// is. Exactly one request is generated. Fully determined by `trial_seed`,
/// which is the reproducer an agreement checker prints.
pub fn sample_bounded(bounds: &GenSpec, trial_seed: u64) -> (CaseBase, RangeTable, Request) {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let attrs = rng.random_range(1..=bounds.attrs_per_impl);
    let pool_margin = bounds.attr_pool.saturating_sub(bounds.attrs_per_impl);
    let spec = GenSpec {
        seed: rng.random::<u64>(),
        types: rng.random_range(1..=bounds.types),
        impls_per_type: rng.random_range(1..=bounds.impls_per_type),
        attrs_per_impl: attrs,
        attr_pool: attrs + rng.random_range(0..=pool_margin),
        value_bound: bounds.value_bound,
        requests: 1,
    };
    let (cb, rt, mut requests) = generate(&spec);
    let req = requests.pop().expect("one request generated");
    (cb, rt, req)
}
