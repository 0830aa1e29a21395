//! Command implementations. Every command prints deterministic output for
//! identical inputs; diagnostics go to stderr.

use std::fmt::Write as _;
use std::path::Path;

use qcbr_core::allocator::Allocator;
use qcbr_core::case_base::{
    build_range_table, validate_case_base, validate_request, CaseBase, RangeTable, Request,
    WeightPolicy,
};
use qcbr_core::codec::{
    layout_summary, pack_case_base, parse_source, unpack_case_base, unpack_request, PackedImage,
    PackedRequest,
};
use qcbr_core::retrieval::{retrieve_n_best, EngineKind, RetrievalStats};
use qcbr_core::similarity::SimilarityF;

use crate::args::{Cli, Command, GenShape};
use crate::gen::{generate, GenSpec};
use crate::oracle::check_instance;
use crate::snapshot::parse_snapshot;
use crate::CmdError;

pub fn dispatch(cli: Cli) -> Result<(), CmdError> {
    let engine: EngineKind = cli.engine.into();
    match cli.command {
        Command::Build { source, out } => cmd_build(&source, &out),
        Command::Validate { path } => cmd_validate(&path),
        Command::Ranges { source } => cmd_ranges(&source),
        Command::Gen {
            out,
            shape,
            requests,
        } => cmd_gen(&out, &shape, requests, cli.seed),
        Command::Retrieve {
            image,
            request,
            inline,
            n,
            threshold,
            normalize,
        } => cmd_retrieve(
            &image,
            request.as_deref(),
            inline.as_deref(),
            n,
            threshold,
            normalize,
            engine,
        ),
        Command::Allocate {
            image,
            request,
            inline,
            snapshot,
            n,
            threshold,
            normalize,
        } => cmd_allocate(
            &image,
            request.as_deref(),
            inline.as_deref(),
            &snapshot,
            n,
            threshold,
            normalize,
            engine,
        ),
        Command::OracleCheck { trials, shape } => cmd_oracle_check(trials, &shape, cli.seed),
    }
}

fn read_text(path: &Path) -> Result<String, CmdError> {
    std::fs::read_to_string(path)
        .map_err(|e| CmdError::Data(format!("cannot read {}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CmdError> {
    std::fs::read(path).map_err(|e| CmdError::Data(format!("cannot read {}: {e}", path.display())))
}

fn parse_source_file(path: &Path) -> Result<(CaseBase, RangeTable, Vec<Request>), CmdError> {
    let text = read_text(path)?;
    parse_source(&text).map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))
}

fn load_image(path: &Path) -> Result<(CaseBase, RangeTable), CmdError> {
    let bytes = read_bytes(path)?;
    let img = PackedImage::from_bytes(&bytes)
        .map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))?;
    unpack_case_base(&img).map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))
}

fn single_request(requests: Vec<Request>, origin: &str) -> Result<Request, CmdError> {
    match requests.len() {
        1 => Ok(requests.into_iter().next().expect("length checked")),
        n => Err(CmdError::Data(format!(
            "{origin} must contain exactly one request, found {n}"
        ))),
    }
}

fn load_request(
    path: Option<&Path>,
    inline: Option<&str>,
    normalize: bool,
) -> Result<Request, CmdError> {
    let req = match (path, inline) {
        (Some(path), None) => {
            if path.extension().is_some_and(|e| e == "qrq") {
                let bytes = read_bytes(path)?;
                let packed = PackedRequest::from_bytes(&bytes)
                    .map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))?;
                unpack_request(packed.words())
                    .map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))?
            } else {
                let (_, _, requests) = parse_source_file(path)?;
                single_request(requests, &path.display().to_string())?
            }
        }
        (None, Some(inline)) => {
            let text = inline.replace(';', "\n");
            let (_, _, requests) =
                parse_source(&text).map_err(|e| CmdError::Data(format!("inline request: {e}")))?;
            single_request(requests, "the inline request")?
        }
        (None, None) => {
            return Err(CmdError::Usage(
                "provide a request file or --inline".to_string(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with forbids this"),
    };
    let policy = if normalize {
        WeightPolicy::Normalize
    } else {
        WeightPolicy::Strict
    };
    validate_request(&req, policy).map_err(|e| CmdError::Data(format!("invalid request: {e}")))
}

fn parse_threshold(threshold: f64) -> Result<SimilarityF, CmdError> {
    SimilarityF::new(threshold)
        .ok_or_else(|| CmdError::Usage(format!("--threshold must be in [0, 1], got {threshold}")))
}

/// The table packed into an image: explicit `range` lines first, derived
/// bounds filling in any attribute they leave uncovered.
fn effective_ranges(cb: &CaseBase, explicit: &RangeTable, requests: &[Request]) -> RangeTable {
    let derived = build_range_table(std::slice::from_ref(cb), requests);
    explicit.with_fallback(&derived)
}

fn cmd_build(source: &Path, out: &Path) -> Result<(), CmdError> {
    let (cb, explicit, requests) = parse_source_file(source)?;
    let report = validate_case_base(&cb);
    if !report.is_valid() {
        return Err(CmdError::Data(format!(
            "{} is not a valid case-base:\n{report}",
            source.display()
        )));
    }
    let ranges = effective_ranges(&cb, &explicit, &requests);
    let img = pack_case_base(&cb, &ranges).map_err(|e| CmdError::Data(e.to_string()))?;
    std::fs::write(out, img.to_bytes())
        .map_err(|e| CmdError::Data(format!("cannot write {}: {e}", out.display())))?;

    let s = layout_summary(&cb, &ranges);
    println!("header                {:>6} words", s.header_words);
    println!("type list             {:>6} words", s.type_list_words);
    println!("implementation lists  {:>6} words", s.impl_list_words);
    println!("attribute lists       {:>6} words", s.attr_list_words);
    println!("range table           {:>6} words", s.range_table_words);
    println!(
        "total                 {:>6} words, {} bytes",
        s.total_words(),
        s.total_bytes()
    );
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<(), CmdError> {
    let is_image = path.extension().is_some_and(|e| e == "qcb");
    let (cb, ranges, requests) = if is_image {
        let (cb, rt) = load_image(path)?;
        (cb, rt, Vec::new())
    } else {
        parse_source_file(path)?
    };

    let report = validate_case_base(&cb);
    if !report.is_valid() {
        return Err(CmdError::Data(format!(
            "{} is not a valid case-base:\n{report}",
            path.display()
        )));
    }
    for (i, req) in requests.iter().enumerate() {
        validate_request(req, WeightPolicy::Strict)
            .map_err(|e| CmdError::Data(format!("{}: request {}: {e}", path.display(), i + 1)))?;
    }

    let impls: usize = cb.entries.iter().map(|e| e.implementations.len()).sum();
    println!(
        "OK: {} types, {impls} implementations, {} range entries, {} requests",
        cb.entries.len(),
        ranges.entries.len(),
        requests.len()
    );
    Ok(())
}

fn cmd_ranges(source: &Path) -> Result<(), CmdError> {
    let (cb, explicit, requests) = parse_source_file(source)?;
    let ranges = effective_ranges(&cb, &explicit, &requests);
    println!("id\tlower\tupper\td_max\trecip_q16");
    for e in &ranges.entries {
        println!(
            "{}\t{}\t{}\t{}\t{}",
            e.id, e.lower, e.upper, e.d_max, e.recip_q16
        );
    }
    Ok(())
}

fn gen_spec_from(shape: &GenShape, requests: u16, seed: u64) -> Result<GenSpec, CmdError> {
    let spec = GenSpec {
        seed,
        types: shape.types,
        impls_per_type: shape.impls,
        attrs_per_impl: shape.attrs,
        attr_pool: shape
            .pool
            .unwrap_or_else(|| GenSpec::default_pool(shape.attrs)),
        value_bound: shape.value_bound,
        requests,
    };
    spec.validate().map_err(CmdError::Usage)?;
    Ok(spec)
}

fn cmd_gen(out: &Path, shape: &GenShape, requests: u16, seed: u64) -> Result<(), CmdError> {
    let spec = gen_spec_from(shape, requests, seed)?;
    let (cb, ranges, reqs) = generate(&spec);
    let text = qcbr_core::codec::emit_source(&cb, &ranges, &reqs);
    std::fs::write(out, &text)
        .map_err(|e| CmdError::Data(format!("cannot write {}: {e}", out.display())))?;

    let img = pack_case_base(&cb, &ranges).map_err(|e| CmdError::Data(e.to_string()))?;
    let impls: usize = cb.entries.iter().map(|e| e.implementations.len()).sum();
    println!(
        "generated {} types, {impls} implementations, {} range entries, {} requests",
        cb.entries.len(),
        ranges.entries.len(),
        reqs.len()
    );
    println!("packed size: {} bytes", img.byte_len());
    Ok(())
}

fn print_stats(stats: &RetrievalStats) {
    eprintln!(
        "stats: words_read={} comparisons={} multiplications={}",
        stats.words_read, stats.comparisons, stats.multiplications
    );
}

#[allow(clippy::too_many_arguments)]
fn cmd_retrieve(
    image: &Path,
    request: Option<&Path>,
    inline: Option<&str>,
    n: usize,
    threshold: f64,
    normalize: bool,
    engine: EngineKind,
) -> Result<(), CmdError> {
    let (cb, ranges) = load_image(image)?;
    let req = load_request(request, inline, normalize)?;
    let threshold = parse_threshold(threshold)?;

    let (results, stats) = retrieve_n_best(&cb, &ranges, &req, n, threshold, engine)
        .map_err(|e| CmdError::Data(e.to_string()))?;

    let mut out = String::new();
    for (rank, r) in results.iter().enumerate() {
        let _ = writeln!(
            out,
            "{}\t{}\t{:.6}",
            rank + 1,
            r.impl_id,
            r.similarity_f.get()
        );
    }
    print!("{out}");
    print_stats(&stats);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_allocate(
    image: &Path,
    request: Option<&Path>,
    inline: Option<&str>,
    snapshot_path: &Path,
    n: usize,
    threshold: f64,
    normalize: bool,
    engine: EngineKind,
) -> Result<(), CmdError> {
    let (cb, ranges) = load_image(image)?;
    let req = load_request(request, inline, normalize)?;
    let threshold = parse_threshold(threshold)?;
    let snapshot_text = read_text(snapshot_path)?;
    let snapshot = parse_snapshot(&snapshot_text)
        .map_err(|e| CmdError::Data(format!("{}: {e}", snapshot_path.display())))?;

    let mut allocator = Allocator::new();
    let decision = allocator
        .allocate(&cb, &ranges, &req, &snapshot, n, threshold, engine)
        .map_err(|e| CmdError::Data(e.to_string()))?;

    match &decision.chosen {
        Some(c) => println!("chosen\t{}\t{:.6}", c.impl_id, c.similarity_f.get()),
        None => println!("chosen\tnone"),
    }
    if let Some(token) = &decision.token {
        println!(
            "token\t{}\ttype {}\timpl {}",
            token.sequence, token.type_id, token.impl_id
        );
    }
    for alt in &decision.alternatives {
        println!(
            "alternative\t{}\t{:.6}",
            alt.impl_id,
            alt.similarity_f.get()
        );
    }
    for rejected in &decision.rejected_infeasible {
        println!("infeasible\t{rejected}");
    }
    Ok(())
}

fn cmd_oracle_check(trials: u64, shape: &GenShape, seed: u64) -> Result<(), CmdError> {
    if trials == 0 {
        return Err(CmdError::Usage("--trials must be at least 1".to_string()));
    }
    let bounds = gen_spec_from(shape, 1, seed)?;

    let mut gap_conditioned = 0u64;
    let mut agreements = 0u64;
    let mut max_deviation = 0.0f64;
    let mut violations = 0u64;
    let mut first_bad_seed = None;

    for trial in 0..trials {
        let trial_seed = seed.wrapping_add(trial);
        let (cb, ranges, req) = crate::gen::sample_bounded(&bounds, trial_seed);

        let report = check_instance(&cb, &ranges, &req).map_err(|e| {
            CmdError::Internal(format!("trial seed {trial_seed}: engine error: {e}"))
        })?;

        if report.gap_conditioned {
            gap_conditioned += 1;
            if report.argmax_agreed {
                agreements += 1;
            }
        }
        max_deviation = max_deviation.max(report.max_fixed_float_deviation);
        if !report.ok() {
            violations += report.violations.len() as u64;
            first_bad_seed.get_or_insert(trial_seed);
            for v in &report.violations {
                eprintln!("violation (reproduce with --seed {trial_seed} --trials 1): {v}");
            }
        }
    }

    println!("trials {trials}");
    println!("gap-conditioned {gap_conditioned}, agreements {agreements}");
    println!("max fixed/float deviation {max_deviation:.9}");

    match first_bad_seed {
        None => Ok(()),
        Some(bad) => Err(CmdError::Internal(format!(
            "{violations} property violations; first reproducer seed {bad}"
        ))),
    }
}
