//! Text format for resource snapshots:
//!
//! ```text
//! # capacity <device-class> <units>
//! capacity dsp 4
//! # demand <type_id> <impl_id> <device-class> <units>
//! demand 1 2 dsp 1
//! ```

use qcbr_core::allocator::ResourceSnapshot;
use qcbr_core::case_base::{FunctionTypeId, ImplId};
use qcbr_core::codec::SyntaxError;

fn err(line: usize, message: impl Into<String>) -> SyntaxError {
    SyntaxError {
        line,
        message: message.into(),
    }
}

pub fn parse_snapshot(text: &str) -> Result<ResourceSnapshot, SyntaxError> {
    let mut snapshot = ResourceSnapshot::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        match tokens[0] {
            "capacity" => {
                if tokens.len() != 3 {
                    return Err(err(line, "expected `capacity <class> <units>`"));
                }
                let units: u64 = tokens[2]
                    .parse()
                    .map_err(|_| err(line, format!("units `{}` is not an integer", tokens[2])))?;
                snapshot.set_capacity(tokens[1], units);
            }
            "demand" => {
                if tokens.len() != 5 {
                    return Err(err(
                        line,
                        "expected `demand <type_id> <impl_id> <class> <units>`",
                    ));
                }
                let type_id = tokens[1]
                    .parse::<u16>()
                    .ok()
                    .and_then(FunctionTypeId::new)
                    .ok_or_else(|| err(line, format!("bad type id `{}`", tokens[1])))?;
                let impl_id = tokens[2]
                    .parse::<u16>()
                    .ok()
                    .and_then(ImplId::new)
                    .ok_or_else(|| err(line, format!("bad impl id `{}`", tokens[2])))?;
                let units: u64 = tokens[4]
                    .parse()
                    .map_err(|_| err(line, format!("units `{}` is not an integer", tokens[4])))?;
                snapshot.set_demand(type_id, impl_id, tokens[3], units);
            }
            other => return Err(err(line, format!("unknown keyword `{other}`"))),
        }
    }
    Ok(snapshot)
}
