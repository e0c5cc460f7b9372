use std::collections::HashMap;
use std::io::{Read, Write};

use super::ilp::{Constraint, IlpModel, Sense, VarKind, Variable};
use crate::error::{Error, Result};

const MAX_LINE: usize = 255;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn push_wrapped(out: &mut String, line: &mut String, token: &str) {
    if line.len() + token.len() + 1 > MAX_LINE {
        out.push_str(line);
        out.push('\n');
        line.clear();
        line.push_str("   ");
    }
    line.push(' ');
    line.push_str(token);
}

fn linear_terms(out: &mut String, line: &mut String, model: &IlpModel, terms: &[(usize, f64)]) {
    for &(v, c) in terms {
        let sign = if c.is_sign_negative() { "-" } else { "+" };
        push_wrapped(out, line, &format!("{sign} {} {}", c.abs(), model.vars[v].name));
    }
}

/// Writes the model in CPLEX LP text form. Numbers use the shortest
/// representation that parses back to the same value.
pub fn write_lp<W: Write>(model: &IlpModel, w: &mut W) -> Result<()> {
    let mut out = String::new();
    out.push_str("\\ trip recommendation ILP\nMaximize\n");
    let mut line = String::from(" obj:");
    if model.objective.is_empty() && !model.vars.is_empty() {
        push_wrapped(&mut out, &mut line, &format!("0 {}", model.vars[0].name));
    }
    linear_terms(&mut out, &mut line, model, &model.objective);
    out.push_str(&line);
    out.push_str("\nSubject To\n");
    for c in &model.constraints {
        let mut line = format!(" {}:", c.name);
        if c.terms.is_empty() {
            push_wrapped(&mut out, &mut line, &format!("0 {}", model.vars[0].name));
        }
        linear_terms(&mut out, &mut line, model, &c.terms);
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        push_wrapped(&mut out, &mut line, &format!("{op} {}", c.rhs));
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str("Bounds\n");
    for v in &model.vars {
        match v.kind {
            VarKind::Binary if v.lower == 0.0 && v.upper == 1.0 => {}
            _ if v.lower == v.upper => out.push_str(&format!(" {} = {}\n", v.name, v.lower)),
            _ => out.push_str(&format!(" {} <= {} <= {}\n", v.lower, v.name, v.upper)),
        }
    }
    for (title, kind) in [("Binary", VarKind::Binary), ("General", VarKind::General)] {
        out.push_str(title);
        out.push('\n');
        let mut line = String::new();
        for v in model.vars.iter().filter(|v| v.kind == kind) {
            push_wrapped(&mut out, &mut line, &v.name);
        }
        if !line.is_empty() {
            out.push_str(&line);
            out.push('\n');
        }
    }
    out.push_str("End\n");
    w.write_all(out.as_bytes())?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Objective,
    Constraints,
    Bounds,
    Binary,
    General,
}

fn section_of(line: &str) -> Option<Section> {
    match line.trim().to_ascii_lowercase().as_str() {
        "maximize" | "maximise" | "max" => Some(Section::Objective),
        "subject to" | "such that" | "st" | "s.t." => Some(Section::Constraints),
        "bounds" => Some(Section::Bounds),
        "binary" | "binaries" | "bin" => Some(Section::Binary),
        "general" | "generals" | "gen" => Some(Section::General),
        _ => None,
    }
}

struct Expr {
    name: String,
    tokens: Vec<(usize, String)>,
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    tok.parse().map_err(|_| parse_err(line, format!("expected a number, found `{tok}`")))
}

/// Parses `[+|-] [coef] name ...` terms, stopping at a comparison operator.
fn parse_terms(tokens: &[(usize, String)]) -> Result<(Vec<(String, f64)>, usize)> {
    let mut terms = Vec::new();
    let mut k = 0;
    while k < tokens.len() {
        let (line, tok) = (&tokens[k].0, tokens[k].1.as_str());
        if matches!(tok, "<=" | ">=" | "=" | "=<" | "=>" | "<" | ">") {
            break;
        }
        let mut sign = 1.0;
        let mut k2 = k;
        if tok == "+" || tok == "-" {
            if tok == "-" {
                sign = -1.0;
            }
            k2 += 1;
        }
        let t = tokens.get(k2).ok_or_else(|| parse_err(*line, "dangling sign"))?;
        let (coef, name_at) = match t.1.parse::<f64>() {
            Ok(c) => (c, k2 + 1),
            Err(_) => (1.0, k2),
        };
        let name = tokens.get(name_at).ok_or_else(|| parse_err(*line, "missing variable"))?;
        terms.push((name.1.clone(), sign * coef));
        k = name_at + 1;
    }
    Ok((terms, k))
}

/// Reads the LP subset [`write_lp`] produces. Variables are ordered as
/// declared in the Binary section, then the General section.
pub fn read_lp<R: Read>(mut r: R) -> Result<IlpModel> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut section = Section::None;
    let mut exprs: Vec<(Section, Expr)> = Vec::new();
    let mut bounds: Vec<(usize, String)> = Vec::new();
    let mut decl: Vec<(VarKind, String)> = Vec::new();
    let mut ended = false;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('\\').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.eq_ignore_ascii_case("end") {
            ended = true;
            break;
        }
        if let Some(s) = section_of(line) {
            section = s;
            continue;
        }
        match section {
            Section::None => return Err(parse_err(lineno, "content before the objective section")),
            Section::Objective | Section::Constraints => {
                let rest = match line.split_once(':') {
                    Some((name, rest)) => {
                        exprs.push((section, Expr { name: name.trim().to_string(), tokens: Vec::new() }));
                        rest
                    }
                    None => line,
                };
                let cur = exprs
                    .last_mut()
                    .filter(|(s, _)| *s == section)
                    .ok_or_else(|| parse_err(lineno, "expression without a name"))?;
                cur.1.tokens.extend(rest.split_whitespace().map(|t| (lineno, t.to_string())));
            }
            Section::Bounds => bounds.push((lineno, line.to_string())),
            Section::Binary => decl.extend(line.split_whitespace().map(|t| (VarKind::Binary, t.to_string()))),
            Section::General => decl.extend(line.split_whitespace().map(|t| (VarKind::General, t.to_string()))),
        }
    }
    if !ended {
        return Err(parse_err(text.lines().count(), "missing End"));
    }

    let mut vars = Vec::new();
    let mut index = HashMap::new();
    for kind in [VarKind::Binary, VarKind::General] {
        for (k, name) in decl.iter().filter(|(k, _)| *k == kind) {
            if index.insert(name.clone(), vars.len()).is_some() {
                return Err(parse_err(0, format!("variable `{name}` declared twice")));
            }
            let (lower, upper) = if *k == VarKind::Binary { (0.0, 1.0) } else { (0.0, f64::INFINITY) };
            vars.push(Variable { name: name.clone(), kind: *k, lower, upper });
        }
    }
    let lookup = |name: &str, line: usize| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| parse_err(line, format!("undeclared variable `{name}`")))
    };

    for (lineno, b) in &bounds {
        let toks: Vec<&str> = b.split_whitespace().collect();
        match toks.as_slice() {
            [name, "=", v] => {
                let v = parse_number(v, *lineno)?;
                let k = lookup(name, *lineno)?;
                vars[k].lower = v;
                vars[k].upper = v;
            }
            [lo, "<=", name, "<=", hi] => {
                let k = lookup(name, *lineno)?;
                vars[k].lower = parse_number(lo, *lineno)?;
                vars[k].upper = parse_number(hi, *lineno)?;
            }
            [name, "<=", hi] => {
                let k = lookup(name, *lineno)?;
                vars[k].upper = parse_number(hi, *lineno)?;
            }
            [name, ">=", lo] => {
                let k = lookup(name, *lineno)?;
                vars[k].lower = parse_number(lo, *lineno)?;
            }
            _ => return Err(parse_err(*lineno, format!("unsupported bound `{b}`"))),
        }
    }

    let mut objective = Vec::new();
    let mut constraints = Vec::new();
    for (section, e) in exprs {
        let first_line = e.tokens.first().map(|t| t.0).unwrap_or(0);
        let (terms, k) = parse_terms(&e.tokens)?;
        let resolved = terms
            .into_iter()
            .map(|(n, c)| Ok((lookup(&n, first_line)?, c)))
            .collect::<Result<Vec<_>>>()?;
        if section == Section::Objective {
            if k != e.tokens.len() {
                return Err(parse_err(first_line, "objective contains a comparison"));
            }
            objective.extend(resolved.into_iter().filter(|&(_, c)| c != 0.0));
            continue;
        }
        let rest = &e.tokens[k..];
        let (sense, rhs) = match rest {
            [(_, op), (l, v)] => {
                let sense = match op.as_str() {
                    "<=" | "=<" | "<" => Sense::Le,
                    ">=" | "=>" | ">" => Sense::Ge,
                    _ => Sense::Eq,
                };
                (sense, parse_number(v, *l)?)
            }
            _ => return Err(parse_err(first_line, format!("constraint `{}` lacks a right-hand side", e.name))),
        };
        let terms = resolved.into_iter().filter(|&(_, c)| c != 0.0).collect();
        constraints.push(Constraint { name: e.name, terms, sense, rhs });
    }
    Ok(IlpModel { vars, objective, constraints })
}
