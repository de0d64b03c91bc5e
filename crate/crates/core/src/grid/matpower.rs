//! The subset of MATPOWER case files needed for DC analysis.

use std::fmt::Write as _;

use super::{Branch, Bus, BusType, Gen, GridCase, GridError};

struct Row {
    line: usize,
    values: Vec<f64>,
}

/// Text with `%` comments blanked out, keeping line structure.
fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let mut in_str = false;
        for ch in line.chars() {
            match ch {
                '\'' => in_str = !in_str,
                '%' if !in_str => break,
                _ => {}
            }
            out.push(ch);
        }
        out.push('\n');
    }
    out
}

fn line_of(text: &str, pos: usize) -> usize {
    text[..pos].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Byte offset just past `mpc.<name>` followed by optional whitespace and `=`.
fn find_assignment(text: &str, name: &str) -> Option<usize> {
    let key = format!("mpc.{name}");
    let mut from = 0;
    while let Some(rel) = text[from..].find(&key) {
        let start = from + rel;
        let after = start + key.len();
        let next = text[after..].chars().next();
        let ident_continues = next.is_some_and(|c| c.is_alphanumeric() || c == '_');
        let preceded = start > 0 && {
            let c = text[..start].chars().next_back().unwrap();
            c.is_alphanumeric() || c == '_'
        };
        if !ident_continues && !preceded {
            let rest = text[after..].trim_start();
            if let Some(stripped) = rest.strip_prefix('=') {
                return Some(text.len() - stripped.len());
            }
        }
        from = after;
    }
    None
}

fn parse_number(tok: &str, line: usize) -> Result<f64, GridError> {
    tok.parse::<f64>().map_err(|_| GridError::MalformedRow {
        line,
        reason: format!("`{tok}` is not a number"),
    })
}

fn parse_scalar(text: &str, name: &'static str) -> Result<f64, GridError> {
    let pos = find_assignment(text, name).ok_or(GridError::MissingSection(name))?;
    let end = text[pos..].find([';', '\n']).map_or(text.len(), |e| pos + e);
    parse_number(text[pos..end].trim(), line_of(text, pos))
}

fn parse_matrix(text: &str, name: &'static str) -> Result<Option<Vec<Row>>, GridError> {
    let Some(pos) = find_assignment(text, name) else {
        return Ok(None);
    };
    let line = line_of(text, pos);
    let body_start = match text[pos..].find(|c: char| !c.is_whitespace()) {
        Some(off) if text[pos + off..].starts_with('[') => pos + off + 1,
        _ => {
            return Err(GridError::MalformedRow {
                line,
                reason: format!("`mpc.{name}` is not a bracketed matrix"),
            })
        }
    };
    let body_end = text[body_start..]
        .find(']')
        .map(|e| body_start + e)
        .ok_or_else(|| GridError::MalformedRow {
            line,
            reason: format!("unterminated matrix `mpc.{name}`"),
        })?;

    let mut rows = Vec::new();
    let mut row_start = body_start;
    let body = &text[body_start..body_end];
    for piece in body.split_inclusive([';', '\n']) {
        let piece_start = row_start;
        row_start += piece.len();
        let content = piece.trim_end_matches([';', '\n']);
        let toks: Vec<&str> = content
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .collect();
        if toks.is_empty() {
            continue;
        }
        let first_tok = content.find(toks[0]).unwrap_or(0);
        let line = line_of(text, piece_start + first_tok);
        let values = toks
            .iter()
            .map(|t| parse_number(t, line))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(Row { line, values });
    }
    Ok(Some(rows))
}

fn need(row: &Row, cols: usize, what: &str) -> Result<(), GridError> {
    if row.values.len() < cols {
        return Err(GridError::MalformedRow {
            line: row.line,
            reason: format!("{what} row needs at least {cols} columns, found {}", row.values.len()),
        });
    }
    Ok(())
}

fn as_id(v: f64, line: usize, what: &str) -> Result<usize, GridError> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e15 {
        Ok(v as usize)
    } else {
        Err(GridError::MalformedRow {
            line,
            reason: format!("{what} `{v}` is not a positive integer"),
        })
    }
}

/// Parses `mpc.baseMVA`, `mpc.bus`, `mpc.branch` and (optionally) `mpc.gen`.
///
/// Columns follow MATPOWER: bus `[id type Pd ...]`, gen `[bus Pg ... status(8)]`,
/// branch `[from to r x ... tap(9) angle status(11)]`. Missing trailing gen and
/// branch columns default to in-service with tap 0.
pub fn parse_matpower(text: &str) -> Result<GridCase, GridError> {
    let text = strip_comments(text);
    let base_mva = parse_scalar(&text, "baseMVA")?;
    let bus_rows = parse_matrix(&text, "bus")?.ok_or(GridError::MissingSection("bus"))?;
    let branch_rows = parse_matrix(&text, "branch")?.ok_or(GridError::MissingSection("branch"))?;
    let gen_rows = parse_matrix(&text, "gen")?.unwrap_or_default();

    let mut buses = Vec::with_capacity(bus_rows.len());
    for r in &bus_rows {
        need(r, 3, "bus")?;
        let id = as_id(r.values[0], r.line, "bus id")?;
        let code = r.values[1];
        let kind = (code.fract() == 0.0 && (1.0..=4.0).contains(&code))
            .then(|| BusType::from_code(code as u8))
            .flatten()
            .ok_or_else(|| GridError::MalformedRow {
                line: r.line,
                reason: format!("unknown bus type `{code}`"),
            })?;
        buses.push(Bus { id, kind, pd: r.values[2] });
    }
    let mut gens = Vec::with_capacity(gen_rows.len());
    for r in &gen_rows {
        need(r, 2, "gen")?;
        gens.push(Gen {
            bus: as_id(r.values[0], r.line, "generator bus")?,
            pg: r.values[1],
            in_service: r.values.get(7).is_none_or(|&s| s > 0.0),
        });
    }
    let mut branches = Vec::with_capacity(branch_rows.len());
    for r in &branch_rows {
        need(r, 4, "branch")?;
        branches.push(Branch {
            from: as_id(r.values[0], r.line, "branch endpoint")?,
            to: as_id(r.values[1], r.line, "branch endpoint")?,
            x: r.values[3],
            tap: r.values.get(8).copied().unwrap_or(0.0),
            in_service: r.values.get(10).is_none_or(|&s| s > 0.0),
        });
    }
    let case = GridCase {
        base_mva,
        buses,
        gens,
        branches,
    };
    case.validate()?;
    Ok(case)
}

/// Emits a MATPOWER case with full standard column counts. Values round-trip exactly.
pub fn write_matpower(case: &GridCase, name: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "function mpc = {name}");
    let _ = writeln!(s, "mpc.version = '2';");
    let _ = writeln!(s, "mpc.baseMVA = {:?};", case.base_mva);
    s.push_str("\n%% bus data\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\nmpc.bus = [\n");
    for b in &case.buses {
        let _ = writeln!(s, "\t{}\t{}\t{:?}\t0\t0\t0\t1\t1\t0\t0\t1\t1.1\t0.9;", b.id, b.kind.code(), b.pd);
    }
    s.push_str("];\n\n%% generator data\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\nmpc.gen = [\n");
    for g in &case.gens {
        let _ = writeln!(
            s,
            "\t{}\t{:?}\t0\t0\t0\t1\t{:?}\t{}\t{:?}\t0;",
            g.bus,
            g.pg,
            case.base_mva,
            u8::from(g.in_service),
            g.pg.max(0.0) * 2.0
        );
    }
    s.push_str(
        "];\n\n%% branch data\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\nmpc.branch = [\n",
    );
    for br in &case.branches {
        let _ = writeln!(
            s,
            "\t{}\t{}\t0\t{:?}\t0\t0\t0\t0\t{:?}\t0\t{}\t-360\t360;",
            br.from,
            br.to,
            br.x,
            br.tap,
            u8::from(br.in_service)
        );
    }
    s.push_str("];\n");
    s
}
