//! Line-oriented trace language.
//!
//! ```text
//! # comment
//! typedef pair struct 8 0:int32 4:int32
//! typedef word prim 8
//! alloc a 10 [type=<name>] [align=<n>]
//! let p = ptr a [+ <off>]
//! add q = p + 8            # or: add q = p - 8
//! load q 1
//! store q 4
//! expect oob
//! cast p pair
//! free a                   # object name or variable
//! ```
//!
//! Integers are unsigned decimal or `0x` hex. `expect` applies to the
//! immediately preceding statement, which must be checkable (`let`, `add`,
//! `load`, `store`, `cast`, `free`).

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::monitor::Outcome;
use crate::types::TypeRegistry;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Statement {
    TypedefPrim {
        name: String,
        size: u64,
    },
    TypedefStruct {
        name: String,
        size: u64,
        fields: Vec<(u64, String)>,
    },
    Alloc {
        id: String,
        size: u64,
        ty: Option<String>,
        align: Option<u64>,
    },
    Free {
        target: String,
    },
    Let {
        var: String,
        object: String,
        offset: u64,
    },
    Add {
        dst: String,
        src: String,
        delta: i64,
    },
    Load {
        var: String,
        width: u64,
    },
    Store {
        var: String,
        width: u64,
    },
    Cast {
        var: String,
        ty: String,
    },
    Expect(Outcome),
}

impl Statement {
    /// Statements that produce a verdict an `expect` can bind to.
    pub fn is_checkable(&self) -> bool {
        matches!(
            self,
            Statement::Let { .. }
                | Statement::Add { .. }
                | Statement::Load { .. }
                | Statement::Store { .. }
                | Statement::Cast { .. }
                | Statement::Free { .. }
        )
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::TypedefPrim { name, size } => write!(f, "typedef {name} prim {size}"),
            Statement::TypedefStruct { name, size, fields } => {
                write!(f, "typedef {name} struct {size}")?;
                for (off, ty) in fields {
                    write!(f, " {off}:{ty}")?;
                }
                Ok(())
            }
            Statement::Alloc { id, size, ty, align } => {
                write!(f, "alloc {id} {size}")?;
                if let Some(ty) = ty {
                    write!(f, " type={ty}")?;
                }
                if let Some(align) = align {
                    write!(f, " align={align}")?;
                }
                Ok(())
            }
            Statement::Free { target } => write!(f, "free {target}"),
            Statement::Let { var, object, offset: 0 } => write!(f, "let {var} = ptr {object}"),
            Statement::Let { var, object, offset } => write!(f, "let {var} = ptr {object} + {offset}"),
            Statement::Add { dst, src, delta } if *delta < 0 => {
                write!(f, "add {dst} = {src} - {}", delta.unsigned_abs())
            }
            Statement::Add { dst, src, delta } => write!(f, "add {dst} = {src} + {delta}"),
            Statement::Load { var, width } => write!(f, "load {var} {width}"),
            Statement::Store { var, width } => write!(f, "store {var} {width}"),
            Statement::Cast { var, ty } => write!(f, "cast {var} {ty}"),
            Statement::Expect(outcome) => write!(f, "expect {outcome}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Line {
    pub line: usize,
    pub stmt: Statement,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceProgram {
    pub statements: Vec<Line>,
}

impl TraceProgram {
    /// Builds a program from statements, numbering them as consecutive lines.
    pub fn from_statements(stmts: impl IntoIterator<Item = Statement>) -> Self {
        Self {
            statements: stmts
                .into_iter()
                .enumerate()
                .map(|(i, stmt)| Line { line: i + 1, stmt })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }
}

impl fmt::Display for TraceProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.statements {
            writeln!(f, "{}", l.stmt)?;
        }
        Ok(())
    }
}

pub fn parse_int(tok: &str) -> Option<u64> {
    match tok.strip_prefix("0x").or_else(|| tok.strip_prefix("0X")) {
        Some(hex) if !hex.is_empty() && !hex.starts_with('+') => u64::from_str_radix(hex, 16).ok(),
        Some(_) => None,
        None if !tok.is_empty() && tok.bytes().all(|b| b.is_ascii_digit()) => tok.parse().ok(),
        None => None,
    }
}

fn is_ident(tok: &str) -> bool {
    let mut chars = tok.chars();
    chars
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

struct Parser {
    line: usize,
    objects: HashSet<String>,
    vars: HashSet<String>,
    types: HashSet<String>,
    last_checkable: bool,
}

impl Parser {
    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            message: message.into(),
        }
    }

    fn int(&self, tok: &str) -> Result<u64, ParseError> {
        parse_int(tok).ok_or_else(|| self.err(format!("malformed integer `{tok}`")))
    }

    fn ident<'a>(&self, tok: &'a str) -> Result<&'a str, ParseError> {
        if is_ident(tok) {
            Ok(tok)
        } else {
            Err(self.err(format!("invalid name `{tok}`")))
        }
    }

    fn known_var(&self, tok: &str) -> Result<String, ParseError> {
        if self.vars.contains(tok) {
            Ok(tok.to_string())
        } else {
            Err(self.err(format!("undefined variable `{tok}`")))
        }
    }

    fn known_object(&self, tok: &str) -> Result<String, ParseError> {
        if self.objects.contains(tok) {
            Ok(tok.to_string())
        } else {
            Err(self.err(format!("undefined object `{tok}`")))
        }
    }

    fn known_type(&self, tok: &str) -> Result<String, ParseError> {
        if self.types.contains(tok) {
            Ok(tok.to_string())
        } else {
            Err(self.err(format!("undefined type `{tok}`")))
        }
    }

    fn arity(&self, toks: &[&str], n: usize, usage: &str) -> Result<(), ParseError> {
        if toks.len() == n {
            Ok(())
        } else {
            Err(self.err(format!("expected `{usage}`")))
        }
    }

    fn statement(&mut self, toks: &[&str]) -> Result<Statement, ParseError> {
        let stmt = match toks[0] {
            "typedef" => self.typedef(toks)?,
            "alloc" => {
                if toks.len() < 3 || toks.len() > 5 {
                    return Err(self.err("expected `alloc <id> <size> [type=<name>] [align=<n>]`"));
                }
                let id = self.ident(toks[1])?.to_string();
                let size = self.int(toks[2])?;
                let (mut ty, mut align) = (None, None);
                for opt in &toks[3..] {
                    match opt.split_once('=') {
                        Some(("type", name)) if ty.is_none() => ty = Some(self.known_type(name)?),
                        Some(("align", n)) if align.is_none() => align = Some(self.int(n)?),
                        _ => return Err(self.err(format!("unexpected alloc option `{opt}`"))),
                    }
                }
                self.objects.insert(id.clone());
                Statement::Alloc { id, size, ty, align }
            }
            "free" => {
                self.arity(toks, 2, "free <id|var>")?;
                let target = toks[1];
                if !self.vars.contains(target) && !self.objects.contains(target) {
                    return Err(self.err(format!("undefined object or variable `{target}`")));
                }
                Statement::Free {
                    target: target.to_string(),
                }
            }
            "let" => {
                if !(toks.len() == 5 || toks.len() == 7) || toks[2] != "=" || toks[3] != "ptr" {
                    return Err(self.err("expected `let <var> = ptr <id> [+ <off>]`"));
                }
                let object = self.known_object(toks[4])?;
                let offset = if toks.len() == 7 {
                    if toks[5] != "+" {
                        return Err(self.err("expected `+ <off>`"));
                    }
                    self.int(toks[6])?
                } else {
                    0
                };
                let var = self.ident(toks[1])?.to_string();
                self.vars.insert(var.clone());
                Statement::Let { var, object, offset }
            }
            "add" => {
                if toks.len() != 6 || toks[2] != "=" {
                    return Err(self.err("expected `add <var2> = <var> +|- <delta>`"));
                }
                let src = self.known_var(toks[3])?;
                let magnitude = self.int(toks[5])?;
                let delta = match toks[4] {
                    "+" => i64::try_from(magnitude).ok(),
                    "-" => 0i64.checked_sub_unsigned(magnitude),
                    op => return Err(self.err(format!("expected `+` or `-`, found `{op}`"))),
                }
                .ok_or_else(|| self.err(format!("delta `{}` out of range", toks[5])))?;
                let dst = self.ident(toks[1])?.to_string();
                self.vars.insert(dst.clone());
                Statement::Add { dst, src, delta }
            }
            "load" | "store" => {
                self.arity(toks, 3, &format!("{} <var> <width>", toks[0]))?;
                let var = self.known_var(toks[1])?;
                let width = self.int(toks[2])?;
                if width == 0 {
                    return Err(self.err("width must be at least 1"));
                }
                if toks[0] == "load" {
                    Statement::Load { var, width }
                } else {
                    Statement::Store { var, width }
                }
            }
            "cast" => {
                self.arity(toks, 3, "cast <var> <typename>")?;
                Statement::Cast {
                    var: self.known_var(toks[1])?,
                    ty: self.known_type(toks[2])?,
                }
            }
            "expect" => {
                self.arity(toks, 2, "expect <outcome>")?;
                if !self.last_checkable {
                    return Err(self.err("`expect` must follow a checkable statement"));
                }
                Statement::Expect(toks[1].parse().map_err(|e: String| self.err(e))?)
            }
            other => return Err(self.err(format!("unknown statement `{other}`"))),
        };
        Ok(stmt)
    }

    fn typedef(&mut self, toks: &[&str]) -> Result<Statement, ParseError> {
        if toks.len() < 4 {
            return Err(self.err("expected `typedef <name> prim <size>` or `typedef <name> struct <size> <off>:<type>...`"));
        }
        let name = self.ident(toks[1])?.to_string();
        if self.types.contains(&name) {
            return Err(self.err(format!("type `{name}` already defined")));
        }
        let size = self.int(toks[3])?;
        let stmt = match toks[2] {
            "prim" => {
                self.arity(toks, 4, "typedef <name> prim <size>")?;
                Statement::TypedefPrim {
                    name: name.clone(),
                    size,
                }
            }
            "struct" => {
                if toks.len() < 5 {
                    return Err(self.err("struct needs at least one field"));
                }
                let fields = toks[4..]
                    .iter()
                    .map(|f| {
                        let (off, ty) = f
                            .split_once(':')
                            .ok_or_else(|| self.err(format!("expected `<off>:<type>`, found `{f}`")))?;
                        Ok((self.int(off)?, self.known_type(ty)?))
                    })
                    .collect::<Result<_, ParseError>>()?;
                Statement::TypedefStruct {
                    name: name.clone(),
                    size,
                    fields,
                }
            }
            kind => return Err(self.err(format!("unknown typedef kind `{kind}`"))),
        };
        self.types.insert(name);
        Ok(stmt)
    }
}

pub fn parse(text: &str) -> Result<TraceProgram, ParseError> {
    let mut p = Parser {
        line: 0,
        objects: HashSet::new(),
        vars: HashSet::new(),
        types: TypeRegistry::BUILTINS
            .iter()
            .map(|(name, _)| name.to_string())
            .collect(),
        last_checkable: false,
    };
    let mut statements = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        p.line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let stmt = p.statement(&toks)?;
        p.last_checkable = stmt.is_checkable();
        statements.push(Line { line: p.line, stmt });
    }
    Ok(TraceProgram { statements })
}
