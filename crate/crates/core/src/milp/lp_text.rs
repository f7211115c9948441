//! CPLEX-style LP text format.
//!
//! The writer always emits the five sections `Minimize`, `Subject To`,
//! `Bounds`, `Binaries`, `End`. Names are sanitized so that every name is a
//! legal, unique identifier that cannot be mistaken for a number. An
//! objective constant is carried by a variable `obj_const` fixed to 1.
//! The reader accepts the subset the writer produces.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use super::{ConstraintSense, LinExpr, MixedIntegerModel, VarId, VarKind};

const MAX_LINE: usize = 240;
const MAX_NAME: usize = 200;
pub const CONSTANT_VAR: &str = "obj_const";

#[derive(Debug, Error)]
pub enum LpTextError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unsupported section `{0}`")]
    Unsupported(String),
}

fn sanitize(raw: &str) -> String {
    let mut s: String = raw
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    let needs_prefix = match s.chars().next() {
        None => true,
        Some(c) => !c.is_ascii_alphabetic() || c == 'e' || c == 'E',
    };
    if needs_prefix {
        s.insert_str(0, "v_");
    }
    s.truncate(MAX_NAME);
    s
}

/// Deterministic sanitized, collision-free names.
fn unique_names<'a>(
    raw: impl Iterator<Item = &'a str>,
    taken: &mut HashSet<String>,
) -> Vec<String> {
    raw.map(|r| {
        let base = sanitize(r);
        let mut name = base.clone();
        let mut k = 1;
        while taken.contains(&name) || is_keyword(&name) {
            name = format!("{base}_{k}");
            k += 1;
        }
        taken.insert(name.clone());
        name
    })
    .collect()
}

fn is_keyword(s: &str) -> bool {
    matches!(
        s.to_ascii_lowercase().as_str(),
        "minimize"
            | "minimum"
            | "min"
            | "maximize"
            | "maximum"
            | "max"
            | "subject"
            | "st"
            | "bounds"
            | "bound"
            | "binaries"
            | "binary"
            | "bin"
            | "generals"
            | "general"
            | "end"
            | "free"
            | "inf"
            | "infinity"
    )
}

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

struct Wrapped {
    out: String,
    line_len: usize,
}

impl Wrapped {
    fn start(&mut self, s: &str) {
        self.out.push_str(s);
        self.line_len = s.len();
    }

    fn push(&mut self, token: &str) {
        if self.line_len + token.len() + 1 > MAX_LINE {
            self.out.push_str("\n   ");
            self.line_len = 3;
        }
        self.out.push(' ');
        self.out.push_str(token);
        self.line_len += token.len() + 1;
    }

    fn end(&mut self) {
        self.out.push('\n');
        self.line_len = 0;
    }
}

fn write_terms(w: &mut Wrapped, terms: &[(VarId, f64)], names: &[String]) {
    for (i, &(v, c)) in terms.iter().enumerate() {
        let sign = if c < 0.0 {
            "-"
        } else if i == 0 {
            ""
        } else {
            "+"
        };
        let mag = num(c.abs());
        let t = if sign.is_empty() {
            format!("{mag} {}", names[v.0])
        } else {
            format!("{sign} {mag} {}", names[v.0])
        };
        w.push(&t);
    }
}

/// Renders `model` as LP text. Identical models yield identical bytes.
pub fn export_lp_text(model: &MixedIntegerModel) -> String {
    let mut taken = HashSet::new();
    let has_const = model.objective.constant != 0.0;
    if has_const {
        taken.insert(CONSTANT_VAR.to_string());
    }
    let vnames = unique_names(model.variables.iter().map(|v| v.name.as_str()), &mut taken);
    let cnames = unique_names(
        model.constraints.iter().map(|c| c.name.as_str()),
        &mut taken,
    );

    let mut w = Wrapped {
        out: String::new(),
        line_len: 0,
    };
    let _ = writeln!(
        w.out,
        "\\ {} variables, {} constraints",
        model.num_vars(),
        model.num_constraints()
    );
    w.out.push_str("Minimize\n");
    w.start(" obj:");
    let obj = model.objective.compacted();
    write_terms(&mut w, &obj.terms, &vnames);
    if has_const {
        let c = obj.constant;
        let sign = if c < 0.0 {
            "-"
        } else if obj.terms.is_empty() {
            ""
        } else {
            "+"
        };
        let t = format!("{sign} {} {CONSTANT_VAR}", num(c.abs()));
        w.push(t.trim_start());
    } else if obj.terms.is_empty() {
        if let Some(first) = vnames.first() {
            w.push(&format!("0 {first}"));
        }
    }
    w.end();

    w.out.push_str("Subject To\n");
    for (c, name) in model.constraints.iter().zip(&cnames) {
        w.start(&format!(" {name}:"));
        if c.coeffs.is_empty() {
            // An empty row still needs a variable to be legal.
            match vnames.first() {
                Some(v) => w.push(&format!("0 {v}")),
                None => continue,
            }
        }
        write_terms(&mut w, &c.coeffs, &vnames);
        w.push(&format!("{} {}", c.sense, num(c.rhs)));
        w.end();
    }

    w.out.push_str("Bounds\n");
    for (v, name) in model.variables.iter().zip(&vnames) {
        let (lo, hi) = (v.lower, v.upper);
        if v.kind == VarKind::Binary && lo == 0.0 && hi == 1.0 {
            continue;
        }
        let line = if lo == hi {
            format!(" {name} = {}", num(lo))
        } else if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            format!(" {name} free")
        } else if hi == f64::INFINITY {
            format!(" {name} >= {}", num(lo))
        } else {
            format!(" {} <= {name} <= {}", num(lo), num(hi))
        };
        w.out.push_str(&line);
        w.out.push('\n');
    }
    if has_const {
        let _ = writeln!(w.out, " {CONSTANT_VAR} = 1");
    }

    w.out.push_str("Binaries\n");
    w.line_len = 0;
    let mut any = false;
    for (v, name) in model.variables.iter().zip(&vnames) {
        if v.kind == VarKind::Binary {
            if !any {
                w.out.push(' ');
                w.line_len = 1;
                any = true;
                w.out.push_str(name);
                w.line_len += name.len();
            } else {
                w.push(name);
            }
        }
    }
    if any {
        w.end();
    }
    w.out.push_str("End\n");
    w.out
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    None,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    Done,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Plus,
    Minus,
    Colon,
    Sense(ConstraintSense),
}

fn tokenize(s: &str, line: usize) -> Result<Vec<Tok>, LpTextError> {
    let mut out = Vec::new();
    let b = s.as_bytes();
    let mut i = 0;
    let err = |msg: String| LpTextError::Syntax { line, msg };
    while i < b.len() {
        let c = b[i] as char;
        match c {
            ' ' | '\t' | '\r' => i += 1,
            '+' => {
                out.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                out.push(Tok::Minus);
                i += 1;
            }
            ':' => {
                out.push(Tok::Colon);
                i += 1;
            }
            '<' | '>' | '=' => {
                let sense = match c {
                    '<' => ConstraintSense::Le,
                    '>' => ConstraintSense::Ge,
                    _ => ConstraintSense::Eq,
                };
                i += 1;
                if i < b.len() && b[i] == b'=' {
                    i += 1;
                }
                // "=<" and "=>" are accepted aliases.
                if sense == ConstraintSense::Eq && i < b.len() && (b[i] == b'<' || b[i] == b'>') {
                    let s2 = if b[i] == b'<' {
                        ConstraintSense::Le
                    } else {
                        ConstraintSense::Ge
                    };
                    i += 1;
                    out.push(Tok::Sense(s2));
                } else {
                    out.push(Tok::Sense(sense));
                }
            }
            _ if c.is_ascii_digit() || c == '.' => {
                let st = i;
                while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
                    i += 1;
                }
                if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                    let mut j = i + 1;
                    if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                        j += 1;
                    }
                    if j < b.len() && b[j].is_ascii_digit() {
                        i = j;
                        while i < b.len() && b[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &s[st..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| err(format!("bad number `{text}`")))?;
                out.push(Tok::Num(v));
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let st = i;
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_' || b[i] == b'.')
                {
                    i += 1;
                }
                let word = &s[st..i];
                let lower = word.to_ascii_lowercase();
                if lower == "inf" || lower == "infinity" {
                    out.push(Tok::Num(f64::INFINITY));
                } else {
                    out.push(Tok::Name(word.to_string()));
                }
            }
            _ => return Err(err(format!("unexpected character `{c}`"))),
        }
    }
    Ok(out)
}

struct Builder {
    model: MixedIntegerModel,
    index: HashMap<String, VarId>,
    declared_bounds: HashSet<VarId>,
}

impl Builder {
    fn var(&mut self, name: &str) -> VarId {
        if let Some(&v) = self.index.get(name) {
            return v;
        }
        let v = self.model.add_continuous(name, 0.0, f64::INFINITY);
        self.index.insert(name.to_string(), v);
        v
    }
}

/// Optional row name, the linear terms, and the optional right-hand side.
type ParsedLinear = (Option<String>, LinExpr, Option<(ConstraintSense, f64)>);

/// Parses `[name:] terms [sense [sign] number]` from a token stream.
fn parse_linear(toks: &[Tok], b: &mut Builder, line: usize) -> Result<ParsedLinear, LpTextError> {
    let err = |msg: &str| LpTextError::Syntax {
        line,
        msg: msg.to_string(),
    };
    let mut i = 0;
    let mut label = None;
    if let (Some(Tok::Name(n)), Some(Tok::Colon)) = (toks.first(), toks.get(1)) {
        label = Some(n.clone());
        i = 2;
    }
    let mut expr = LinExpr::new();
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    while i < toks.len() {
        match &toks[i] {
            Tok::Plus => {}
            Tok::Minus => sign = -sign,
            Tok::Num(v) => coef = Some(coef.unwrap_or(1.0) * v),
            Tok::Name(n) => {
                let v = b.var(n);
                expr.add_term(v, sign * coef.unwrap_or(1.0));
                sign = 1.0;
                coef = None;
            }
            Tok::Sense(s) => {
                if coef.is_some() {
                    return Err(err("dangling number before sense"));
                }
                let mut rsign = 1.0;
                let mut j = i + 1;
                while let Some(Tok::Plus | Tok::Minus) = toks.get(j) {
                    if toks[j] == Tok::Minus {
                        rsign = -rsign;
                    }
                    j += 1;
                }
                let Some(Tok::Num(r)) = toks.get(j) else {
                    return Err(err("missing right-hand side"));
                };
                if j + 1 != toks.len() {
                    return Err(err("trailing tokens after right-hand side"));
                }
                return Ok((label, expr, Some((*s, rsign * r))));
            }
            Tok::Colon => return Err(err("unexpected `:`")),
        }
        i += 1;
    }
    if let Some(c) = coef {
        expr.add_constant(sign * c);
    }
    Ok((label, expr, None))
}

fn parse_bound(toks: &[Tok], b: &mut Builder, line: usize) -> Result<(), LpTextError> {
    let err = |msg: &str| LpTextError::Syntax {
        line,
        msg: msg.to_string(),
    };
    // Fold signs into numbers.
    let mut t: Vec<Tok> = Vec::new();
    let mut neg = false;
    for tok in toks {
        match tok {
            Tok::Minus => neg = !neg,
            Tok::Plus => {}
            Tok::Num(v) => {
                t.push(Tok::Num(if neg { -v } else { *v }));
                neg = false;
            }
            other => t.push(other.clone()),
        }
    }
    let set = |b: &mut Builder, n: &str, lo: Option<f64>, hi: Option<f64>| {
        let v = b.var(n);
        b.declared_bounds.insert(v);
        let var = &mut b.model.variables[v.0];
        if let Some(lo) = lo {
            var.lower = lo;
        }
        if let Some(hi) = hi {
            var.upper = hi;
        }
    };
    use ConstraintSense::*;
    match t.as_slice() {
        [Tok::Name(n), Tok::Name(f)] if f.eq_ignore_ascii_case("free") => {
            set(b, n, Some(f64::NEG_INFINITY), Some(f64::INFINITY))
        }
        [Tok::Name(n), Tok::Sense(Eq), Tok::Num(v)] => set(b, n, Some(*v), Some(*v)),
        [Tok::Name(n), Tok::Sense(Ge), Tok::Num(v)] => set(b, n, Some(*v), None),
        [Tok::Name(n), Tok::Sense(Le), Tok::Num(v)] => set(b, n, None, Some(*v)),
        [Tok::Num(v), Tok::Sense(Le), Tok::Name(n)] => set(b, n, Some(*v), None),
        [Tok::Num(v), Tok::Sense(Ge), Tok::Name(n)] => set(b, n, None, Some(*v)),
        [Tok::Num(lo), Tok::Sense(Le), Tok::Name(n), Tok::Sense(Le), Tok::Num(hi)] => {
            set(b, n, Some(*lo), Some(*hi))
        }
        _ => return Err(err("unrecognized bound")),
    }
    Ok(())
}

fn section_of(line: &str) -> Option<Section> {
    let l = line.trim().to_ascii_lowercase();
    let s = match l.as_str() {
        "minimize" | "minimum" | "min" => Section::Objective,
        "subject to" | "such that" | "st" | "s.t." => Section::Constraints,
        "bounds" | "bound" => Section::Bounds,
        "binaries" | "binary" | "bin" => Section::Binaries,
        "end" => Section::Done,
        _ => return None,
    };
    Some(s)
}

/// Parses LP text in the subset written by [`export_lp_text`]. Variables are
/// created in order of first appearance. An objective constant carried by
/// `obj_const` stays a fixed variable.
pub fn parse_lp_text(text: &str) -> Result<MixedIntegerModel, LpTextError> {
    let mut b = Builder {
        model: MixedIntegerModel::new(),
        index: HashMap::new(),
        declared_bounds: HashSet::new(),
    };
    let mut section = Section::None;
    // Statements may span lines; buffer tokens until a statement completes.
    let mut pending: Vec<Tok> = Vec::new();
    let mut pending_line = 0;
    let mut objective_tokens: Vec<Tok> = Vec::new();
    let mut binaries: Vec<String> = Vec::new();
    let mut row = 0usize;

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let content = raw.split('\\').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        if let Some(s) = section_of(content) {
            if !pending.is_empty() {
                return Err(LpTextError::Syntax {
                    line: pending_line,
                    msg: "unterminated constraint".into(),
                });
            }
            section = s;
            continue;
        }
        let lower = content.trim().to_ascii_lowercase();
        if matches!(
            lower.as_str(),
            "maximize" | "maximum" | "max" | "generals" | "general" | "semi-continuous" | "sos"
        ) {
            return Err(LpTextError::Unsupported(lower));
        }
        let toks = tokenize(content, line_no)?;
        match section {
            Section::None | Section::Done => {
                return Err(LpTextError::Syntax {
                    line: line_no,
                    msg: "content outside a section".into(),
                })
            }
            Section::Objective => objective_tokens.extend(toks),
            Section::Constraints => {
                if pending.is_empty() {
                    pending_line = line_no;
                }
                let complete = toks.iter().any(|t| matches!(t, Tok::Sense(_)));
                pending.extend(toks);
                if complete {
                    let (label, expr, sense) = parse_linear(&pending, &mut b, pending_line)?;
                    let (sense, rhs) = sense.expect("sense present");
                    let name = label.unwrap_or_else(|| format!("R{row}"));
                    b.model.add_constraint(name, expr, sense, rhs);
                    row += 1;
                    pending.clear();
                }
            }
            Section::Bounds => parse_bound(&toks, &mut b, line_no)?,
            Section::Binaries => {
                for t in toks {
                    match t {
                        Tok::Name(n) => binaries.push(n),
                        _ => {
                            return Err(LpTextError::Syntax {
                                line: line_no,
                                msg: "expected a variable name".into(),
                            })
                        }
                    }
                }
            }
        }
    }
    if !pending.is_empty() {
        return Err(LpTextError::Syntax {
            line: pending_line,
            msg: "unterminated constraint".into(),
        });
    }
    let (_, objective, sense) = parse_linear(&objective_tokens, &mut b, 0)?;
    if sense.is_some() {
        return Err(LpTextError::Syntax {
            line: 0,
            msg: "objective contains a relational operator".into(),
        });
    }
    b.model.set_objective(objective);
    for n in binaries {
        let v = b.var(&n);
        let var = &mut b.model.variables[v.0];
        var.kind = VarKind::Binary;
        if !b.declared_bounds.contains(&v) {
            var.lower = 0.0;
            var.upper = 1.0;
        }
    }
    Ok(b.model)
}
