//! Line-based text source for case-bases, range tables and requests.
//!
//! ```text
//! # comments run to the end of the line
//! type 1
//!   impl 1 FPGA          # optional free-text label
//!     attr 1 16
//!   impl 2 DSP
//!     attr 1 16
//! range 1 8 16           # attribute id, lower bound, upper bound
//! request 1
//!   want 1 16 0.5        # attribute id, desired value, weight
//! ```
//!
//! Indentation is free-form; nesting follows from the keywords. `range`
//! lines may appear anywhere and in any order. The parser only rejects
//! syntax (unknown keywords, malformed numbers, the reserved id 0, lines
//! outside their block); semantic checks such as ordering and weight sums
//! stay with `validate_case_base` and `validate_request`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::case_base::{
    AttributeId, CaseAttribute, CaseBase, FunctionTypeEntry, FunctionTypeId, ImplId,
    ImplementationCase, RangeEntry, RangeTable, Request, RequestAttribute, Weight,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> SyntaxError {
    SyntaxError {
        line,
        message: message.into(),
    }
}

fn parse_u16(token: &str, line: usize, what: &str) -> Result<u16, SyntaxError> {
    token.parse::<u16>().map_err(|_| {
        err(
            line,
            format!("{what} `{token}` is not an integer in 0..=65535"),
        )
    })
}

fn parse_id(token: &str, line: usize, what: &str) -> Result<u16, SyntaxError> {
    let id = parse_u16(token, line, what)?;
    if id == 0 {
        return Err(err(
            line,
            format!("{what} 0 is reserved as the list terminator"),
        ));
    }
    Ok(id)
}

fn parse_weight(token: &str, line: usize) -> Result<Weight, SyntaxError> {
    let raw = token
        .parse::<f64>()
        .map_err(|_| err(line, format!("weight `{token}` is not a number")))?;
    Weight::new(raw).map_err(|e| err(line, e.to_string()))
}

#[derive(PartialEq)]
enum Context {
    Top,
    Type,
    Impl,
    Request,
}

/// Parses a source file into a case-base, a range table and the requests it
/// lists, in file order. Ordering and weight-sum problems are deliberately
/// let through for the validators to report.
pub fn parse_source(text: &str) -> Result<(CaseBase, RangeTable, Vec<Request>), SyntaxError> {
    let mut entries: Vec<FunctionTypeEntry> = Vec::new();
    let mut ranges: Vec<(usize, RangeEntry)> = Vec::new();
    let mut requests: Vec<Request> = Vec::new();
    let mut context = Context::Top;

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        match tokens[0] {
            "type" => {
                if tokens.len() != 2 {
                    return Err(err(line, "expected `type <id>`"));
                }
                let id = parse_id(tokens[1], line, "type id")?;
                entries.push(FunctionTypeEntry {
                    type_id: FunctionTypeId::new(id).expect("nonzero"),
                    implementations: Vec::new(),
                });
                context = Context::Type;
            }
            "impl" => {
                if tokens.len() < 2 {
                    return Err(err(line, "expected `impl <id> [label]`"));
                }
                if !matches!(context, Context::Type | Context::Impl) {
                    return Err(err(line, "`impl` outside a type block"));
                }
                let id = parse_id(tokens[1], line, "impl id")?;
                let label = (tokens.len() > 2).then(|| tokens[2..].join(" "));
                entries
                    .last_mut()
                    .expect("context guarantees an open type")
                    .implementations
                    .push(ImplementationCase {
                        impl_id: ImplId::new(id).expect("nonzero"),
                        target_label: label,
                        attributes: Vec::new(),
                    });
                context = Context::Impl;
            }
            "attr" => {
                if tokens.len() != 3 {
                    return Err(err(line, "expected `attr <id> <value>`"));
                }
                if context != Context::Impl {
                    return Err(err(line, "`attr` outside an impl block"));
                }
                let id = parse_id(tokens[1], line, "attribute id")?;
                let value = parse_u16(tokens[2], line, "attribute value")?;
                entries
                    .last_mut()
                    .and_then(|e| e.implementations.last_mut())
                    .expect("context guarantees an open impl")
                    .attributes
                    .push(CaseAttribute {
                        id: AttributeId::new(id).expect("nonzero"),
                        value,
                    });
            }
            "range" => {
                if tokens.len() != 4 {
                    return Err(err(line, "expected `range <id> <lower> <upper>`"));
                }
                let id = parse_id(tokens[1], line, "attribute id")?;
                let lower = parse_u16(tokens[2], line, "lower bound")?;
                let upper = parse_u16(tokens[3], line, "upper bound")?;
                let entry = RangeEntry::new(AttributeId::new(id).expect("nonzero"), lower, upper)
                    .map_err(|e| err(line, e.to_string()))?;
                ranges.push((line, entry));
            }
            "request" => {
                if tokens.len() != 2 {
                    return Err(err(line, "expected `request <type_id>`"));
                }
                let id = parse_id(tokens[1], line, "type id")?;
                requests.push(Request {
                    function_type: FunctionTypeId::new(id).expect("nonzero"),
                    attributes: Vec::new(),
                });
                context = Context::Request;
            }
            "want" => {
                if tokens.len() != 4 {
                    return Err(err(line, "expected `want <id> <value> <weight>`"));
                }
                if context != Context::Request {
                    return Err(err(line, "`want` outside a request block"));
                }
                let id = parse_id(tokens[1], line, "attribute id")?;
                let value = parse_u16(tokens[2], line, "attribute value")?;
                let weight = parse_weight(tokens[3], line)?;
                requests
                    .last_mut()
                    .expect("context guarantees an open request")
                    .attributes
                    .push(RequestAttribute {
                        id: AttributeId::new(id).expect("nonzero"),
                        value,
                        weight,
                    });
            }
            other => return Err(err(line, format!("unknown keyword `{other}`"))),
        }
    }

    // range lines are position-free; canonicalize by id and reject doubles
    ranges.sort_by_key(|(_, e)| e.id);
    for pair in ranges.windows(2) {
        if pair[0].1.id == pair[1].1.id {
            return Err(err(
                pair[1].0,
                format!("duplicate range for attribute {}", pair[1].1.id),
            ));
        }
    }
    let range_table = RangeTable {
        entries: ranges.into_iter().map(|(_, e)| e).collect(),
    };

    Ok((CaseBase { entries }, range_table, requests))
}

/// Renders structures back to source text. `parse_source(emit_source(..))`
/// reproduces the structures exactly; weights print in shortest
/// round-tripping form. Labels must not contain `#`, which would read back
/// as a comment.
pub fn emit_source(cb: &CaseBase, rt: &RangeTable, requests: &[Request]) -> String {
    let mut out = String::new();
    for entry in &cb.entries {
        let _ = writeln!(out, "type {}", entry.type_id);
        for case in &entry.implementations {
            match &case.target_label {
                Some(label) => {
                    let _ = writeln!(out, "  impl {} {}", case.impl_id, label);
                }
                None => {
                    let _ = writeln!(out, "  impl {}", case.impl_id);
                }
            }
            for a in &case.attributes {
                let _ = writeln!(out, "    attr {} {}", a.id, a.value);
            }
        }
    }
    if !rt.entries.is_empty() {
        if !out.is_empty() {
            out.push('\n');
        }
        for e in &rt.entries {
            let _ = writeln!(out, "range {} {} {}", e.id, e.lower, e.upper);
        }
    }
    for req in requests {
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "request {}", req.function_type);
        for a in &req.attributes {
            let _ = writeln!(out, "  want {} {} {}", a.id, a.value, a.weight.get());
        }
    }
    out
}
