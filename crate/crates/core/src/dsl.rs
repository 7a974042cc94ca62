//! Text format for scene programs (`.scene` files and VLM responses).
//!
//! One statement per line:
//!
//! ```text
//! # group: sleeping area
//! bed_0.set_pose(x=2.0, y=1.2, z=0.25, rotation=180)
//! constraints.distance(bed_0, nightstand_0, min=0.1, max=0.5)
//! constraints.on_top_of(lamp_0, nightstand_0)
//! constraints.align_with(nightstand_1, nightstand_0, angle=0)
//! constraints.point_towards(chair_0, desk_0, angle=0)
//! constraints.against_wall(bed_0, wall_north)
//! ```
//!
//! Angles are degrees. A malformed line yields a diagnostic and is skipped;
//! parsing never fails as a whole. Lines starting with `#` are comments,
//! except `# group: <label>` which sets the program's group label.

use std::collections::BTreeSet;
use std::fmt;

use crate::scene::{is_valid_id, Pose, Relation, RelationKind, SceneProgram, WallId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    VlmResponse,
    File,
    Inline,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramText {
    pub source: String,
    pub origin: Origin,
}

impl ProgramText {
    pub fn inline(source: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            origin: Origin::Inline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub column: usize,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{}:{}: {}: {}",
            self.line, self.column, sev, self.message
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Punct(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    col: usize,
}

struct LineError {
    col: usize,
    message: String,
}

fn err<T>(col: usize, message: impl Into<String>) -> Result<T, LineError> {
    Err(LineError {
        col,
        message: message.into(),
    })
}

fn tokenize(line: &str) -> Result<Vec<Token>, LineError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c == '#' {
            break;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                col,
            });
        } else if c == '"' || c == '\'' {
            // quoted identifiers are accepted as plain identifiers
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && chars[j] != c {
                j += 1;
            }
            if j >= chars.len() {
                return err(col, "unterminated quote");
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..j].iter().collect()),
                col,
            });
            i = j + 1;
        } else if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' {
            // a '.' directly after an identifier or ')' is member access
            let member = c == '.'
                && matches!(
                    out.last(),
                    Some(Token {
                        tok: Tok::Ident(_),
                        ..
                    }) | Some(Token {
                        tok: Tok::Punct(')'),
                        ..
                    })
                );
            if member {
                out.push(Token {
                    tok: Tok::Punct('.'),
                    col,
                });
                i += 1;
                continue;
            }
            let start = i;
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            let text: String = chars[start..i].iter().collect();
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => out.push(Token {
                    tok: Tok::Num(v),
                    col,
                }),
                _ => return err(col, format!("invalid number `{text}`")),
            }
        } else if matches!(c, '(' | ')' | ',' | '=') {
            out.push(Token {
                tok: Tok::Punct(c),
                col,
            });
            i += 1;
        } else {
            return err(col, format!("unexpected character `{c}`"));
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    end_col: usize,
}

impl<'a> Cursor<'a> {
    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.col)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        self.pos += 1;
        t
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize), LineError> {
        let col = self.col();
        match self.next() {
            Some(Token {
                tok: Tok::Ident(s), ..
            }) => Ok((s.clone(), col)),
            _ => err(col, format!("expected {what}")),
        }
    }

    fn punct(&mut self, p: char) -> Result<(), LineError> {
        let col = self.col();
        match self.next() {
            Some(Token {
                tok: Tok::Punct(c), ..
            }) if *c == p => Ok(()),
            _ => err(col, format!("expected `{p}`")),
        }
    }

    fn peek_punct(&self, p: char) -> bool {
        matches!(self.toks.get(self.pos), Some(Token { tok: Tok::Punct(c), .. }) if *c == p)
    }

    fn done(&self) -> Result<(), LineError> {
        if self.pos < self.toks.len() {
            return err(self.col(), "unexpected trailing input");
        }
        Ok(())
    }
}

/// A call argument: `name=value`, a bare identifier, or a bare number.
enum Arg {
    Named(String, f64, usize),
    Ident(String, usize),
    Num(f64, usize),
}

fn call_args(cur: &mut Cursor) -> Result<Vec<Arg>, LineError> {
    cur.punct('(')?;
    let mut args = Vec::new();
    if cur.peek_punct(')') {
        cur.next();
        return Ok(args);
    }
    loop {
        let col = cur.col();
        match cur.next().map(|t| &t.tok) {
            Some(Tok::Ident(name)) => {
                if cur.peek_punct('=') {
                    cur.next();
                    let vcol = cur.col();
                    match cur.next().map(|t| &t.tok) {
                        Some(Tok::Num(v)) => args.push(Arg::Named(name.clone(), *v, col)),
                        _ => return err(vcol, format!("expected a number for `{name}`")),
                    }
                } else {
                    args.push(Arg::Ident(name.clone(), col));
                }
            }
            Some(Tok::Num(v)) => args.push(Arg::Num(*v, col)),
            _ => return err(col, "expected an argument"),
        }
        let col = cur.col();
        match cur.next().map(|t| &t.tok) {
            Some(Tok::Punct(',')) => {
                if cur.peek_punct(')') {
                    cur.next();
                    return Ok(args);
                }
            }
            Some(Tok::Punct(')')) => return Ok(args),
            _ => return err(col, "expected `,` or `)`"),
        }
    }
}

/// Collects numeric parameters by name; bare numbers fill `names` in order.
fn numeric_params(
    args: &[Arg],
    names: &[&str],
    defaults: &[Option<f64>],
) -> Result<Vec<f64>, LineError> {
    let mut values: Vec<Option<f64>> = vec![None; names.len()];
    let mut positional = 0;
    for arg in args {
        match arg {
            Arg::Named(name, v, col) => {
                let Some(k) = names.iter().position(|n| n == name) else {
                    return err(*col, format!("unknown parameter `{name}`"));
                };
                if values[k].is_some() {
                    return err(*col, format!("parameter `{name}` given twice"));
                }
                values[k] = Some(*v);
            }
            Arg::Num(v, col) => {
                while positional < names.len() && values[positional].is_some() {
                    positional += 1;
                }
                if positional >= names.len() {
                    return err(*col, "too many arguments");
                }
                values[positional] = Some(*v);
            }
            Arg::Ident(name, col) => return err(*col, format!("unexpected identifier `{name}`")),
        }
    }
    values
        .iter()
        .zip(defaults)
        .zip(names)
        .map(|((v, d), name)| {
            v.or(*d).ok_or_else(|| LineError {
                col: 1,
                message: format!("missing parameter `{name}`"),
            })
        })
        .collect()
}

enum Statement {
    Pose(String, Pose),
    Relation(Relation),
}

struct Known<'a> {
    assets: &'a BTreeSet<String>,
    walls: &'a [WallId],
}

impl Known<'_> {
    fn asset(&self, id: &str, col: usize) -> Result<(), LineError> {
        if !is_valid_id(id) {
            return err(col, format!("`{id}` is not a valid asset id"));
        }
        if !self.assets.contains(id) {
            return err(col, format!("unknown asset `{id}`"));
        }
        Ok(())
    }
}

fn parse_statement(toks: &[Token], end_col: usize, known: &Known) -> Result<Statement, LineError> {
    let mut cur = Cursor {
        toks,
        pos: 0,
        end_col,
    };
    let (head, head_col) = cur.ident("an asset id or `constraints`")?;
    cur.punct('.')?;
    let (method, method_col) = cur.ident("a method name")?;
    let args = call_args(&mut cur)?;
    cur.done()?;

    if head != "constraints" {
        if method != "set_pose" {
            return err(
                method_col,
                format!("unknown method `{method}`, expected `set_pose`"),
            );
        }
        known.asset(&head, head_col)?;
        let v = numeric_params(&args, &["x", "y", "z", "rotation"], &[None; 4])?;
        let pose = Pose::from_degrees(v[0], v[1], v[2], v[3]);
        return Ok(Statement::Pose(head, pose));
    }

    let Some(kind) = RelationKind::parse(&method) else {
        return err(method_col, format!("unknown relation `{method}`"));
    };
    let mut ids = Vec::new();
    let mut rest = Vec::new();
    for a in args {
        match a {
            Arg::Ident(s, col) if ids.len() < 2 => ids.push((s, col)),
            other => rest.push(other),
        }
    }
    if ids.len() != 2 {
        return err(method_col, format!("`{method}` takes two ids"));
    }
    let (subject, scol) = &ids[0];
    let (target, tcol) = &ids[1];
    known.asset(subject, *scol)?;
    let rel_err = |e: crate::Error| LineError {
        col: method_col,
        message: e.to_string(),
    };
    let rel = match kind {
        RelationKind::AgainstWall => {
            let Some(wall) = WallId::parse(target).filter(|w| known.walls.contains(w)) else {
                return err(*tcol, format!("unknown wall `{target}`"));
            };
            numeric_params(&rest, &[], &[])?;
            Relation::against_wall(subject.clone(), wall)
        }
        RelationKind::Distance => {
            known.asset(target, *tcol)?;
            let v = numeric_params(&rest, &["min", "max"], &[Some(0.0), None])?;
            Relation::distance(subject.clone(), target.clone(), v[0], v[1]).map_err(rel_err)?
        }
        RelationKind::OnTopOf => {
            known.asset(target, *tcol)?;
            numeric_params(&rest, &[], &[])?;
            Relation::on_top_of(subject.clone(), target.clone()).map_err(rel_err)?
        }
        RelationKind::AlignWith => {
            known.asset(target, *tcol)?;
            let v = numeric_params(&rest, &["angle"], &[Some(0.0)])?;
            Relation::align_with(subject.clone(), target.clone(), v[0].to_radians())
                .map_err(rel_err)?
        }
        RelationKind::PointTowards => {
            known.asset(target, *tcol)?;
            let v = numeric_params(&rest, &["angle"], &[Some(0.0)])?;
            Relation::point_towards(subject.clone(), target.clone(), v[0].to_radians())
                .map_err(rel_err)?
        }
    };
    Ok(Statement::Relation(rel))
}

/// Parses a program. Unknown ids, malformed statements and invalid parameters
/// become diagnostics; the offending line is skipped.
pub fn parse_program(
    text: &ProgramText,
    known_assets: &BTreeSet<String>,
    known_walls: &[WallId],
) -> (SceneProgram, Vec<Diagnostic>) {
    let known = Known {
        assets: known_assets,
        walls: known_walls,
    };
    let mut program = SceneProgram::default();
    let mut diags = Vec::new();
    for (n, line) in text.source.lines().enumerate() {
        let line_no = n + 1;
        let trimmed = line.trim_start();
        if let Some(label) = trimmed.strip_prefix("# group:") {
            program.group_label = Some(label.trim().to_string());
            continue;
        }
        let toks = match tokenize(line) {
            Ok(t) => t,
            Err(e) => {
                diags.push(Diagnostic {
                    line: line_no,
                    column: e.col,
                    severity: Severity::Error,
                    message: e.message,
                });
                continue;
            }
        };
        if toks.is_empty() {
            continue;
        }
        match parse_statement(&toks, line.chars().count() + 1, &known) {
            Ok(Statement::Pose(id, pose)) => {
                if program.poses.insert(id.clone(), pose).is_some() {
                    diags.push(Diagnostic {
                        line: line_no,
                        column: toks[0].col,
                        severity: Severity::Warning,
                        message: format!("pose of `{id}` set again; the later one wins"),
                    });
                }
            }
            Ok(Statement::Relation(rel)) => program.relations.push(rel),
            Err(e) => diags.push(Diagnostic {
                line: line_no,
                column: e.col,
                severity: Severity::Error,
                message: e.message,
            }),
        }
    }
    (program, diags)
}

fn num(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

fn degrees(rad: f64) -> String {
    let d = rad.to_degrees();
    num(if d <= -180.0 { d + 360.0 } else { d })
}

/// Canonical text: group label, poses sorted by id, then relations in order.
pub fn serialize_program(program: &SceneProgram) -> ProgramText {
    let mut out = String::new();
    if let Some(label) = &program.group_label {
        out.push_str(&format!("# group: {label}\n"));
    }
    for (id, p) in &program.poses {
        out.push_str(&format!(
            "{id}.set_pose(x={}, y={}, z={}, rotation={})\n",
            num(p.x),
            num(p.y),
            num(p.z),
            degrees(p.theta)
        ));
    }
    for rel in &program.relations {
        let line = match rel {
            Relation::Distance {
                subject,
                target,
                min,
                max,
            } => format!(
                "constraints.distance({subject}, {target}, min={}, max={})",
                num(*min),
                num(*max)
            ),
            Relation::OnTopOf { subject, target } => {
                format!("constraints.on_top_of({subject}, {target})")
            }
            Relation::AlignWith {
                subject,
                target,
                angle,
            } => format!(
                "constraints.align_with({subject}, {target}, angle={})",
                degrees(*angle)
            ),
            Relation::PointTowards {
                subject,
                target,
                angle,
            } => format!(
                "constraints.point_towards({subject}, {target}, angle={})",
                degrees(*angle)
            ),
            Relation::AgainstWall { subject, wall } => {
                format!("constraints.against_wall({subject}, {wall})")
            }
        };
        out.push_str(&line);
        out.push('\n');
    }
    ProgramText {
        source: out,
        origin: Origin::Inline,
    }
}

/// Contents of the first fenced code block, or the whole response when there
/// is none. A language tag on the opening fence is dropped.
pub fn extract_code_block(response: &str) -> ProgramText {
    let source = match response.find("```") {
        None => response.to_string(),
        Some(open) => {
            let after = &response[open + 3..];
            let body = match after.find('\n') {
                Some(nl) => &after[nl + 1..],
                None => "",
            };
            match body.find("```") {
                Some(close) => body[..close].trim_end_matches('\n').to_string(),
                None => body.to_string(),
            }
        }
    };
    ProgramText {
        source,
        origin: Origin::VlmResponse,
    }
}
