//! The navigation program DSL: one primitive call per line.
//!
//! ```text
//! program := line+
//! line    := call NEWLINE | comment | blank
//! call    := IDENT "(" [arg ("," arg)*] ")"
//! arg     := STRING | INT | REAL
//! comment := "#" ... end of line
//! ```
//!
//! Strings are double-quoted with `\"` and `\\` escapes. An integer is
//! accepted wherever a real is expected and stays an integer in the tree, so
//! printing and reparsing reproduces the program exactly.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line} col {col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line} col {col}: unknown primitive {name:?}")]
    UnknownPrimitive { line: usize, col: usize, name: String },
    #[error("line {line} col {col}: {name} takes {expected} argument(s), got {got}")]
    Arity { line: usize, col: usize, name: String, expected: usize, got: usize },
    #[error("line {line} col {col}: {name} argument {index} must be {expected}, got {got}")]
    Type { line: usize, col: usize, name: String, index: usize, expected: &'static str, got: &'static str },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArgValue {
    Str(String),
    Int(i64),
    Real(f64),
}

impl ArgValue {
    fn kind(&self) -> &'static str {
        match self {
            ArgValue::Str(_) => "a string",
            ArgValue::Int(_) => "an integer",
            ArgValue::Real(_) => "a real",
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            ArgValue::Str(s) => s,
            _ => panic!("argument is not a string"),
        }
    }

    pub fn as_int(&self) -> i64 {
        match self {
            ArgValue::Int(v) => *v,
            _ => panic!("argument is not an integer"),
        }
    }

    /// Numeric value; integers widen.
    pub fn as_real(&self) -> f64 {
        match self {
            ArgValue::Int(v) => *v as f64,
            ArgValue::Real(v) => *v,
            ArgValue::Str(_) => panic!("argument is not numeric"),
        }
    }
}

impl fmt::Display for ArgValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgValue::Str(s) => {
                write!(f, "\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
            }
            ArgValue::Int(v) => write!(f, "{v}"),
            ArgValue::Real(v) => {
                let s = v.to_string();
                // Keep the token in the REAL lexical class.
                if s.contains('.') {
                    write!(f, "{s}")
                } else {
                    write!(f, "{s}.0")
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveCall {
    pub name: String,
    pub args: Vec<ArgValue>,
    /// 1-based source location of the call name.
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for PrimitiveCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub calls: Vec<PrimitiveCall>,
}

/// Parameter type in a registry signature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamType {
    Str,
    Int,
    /// Real or integer literal.
    Real,
}

impl ParamType {
    fn accepts(self, arg: &ArgValue) -> bool {
        matches!(
            (self, arg),
            (ParamType::Str, ArgValue::Str(_))
                | (ParamType::Int, ArgValue::Int(_))
                | (ParamType::Real, ArgValue::Int(_))
                | (ParamType::Real, ArgValue::Real(_))
        )
    }

    fn describe(self) -> &'static str {
        match self {
            ParamType::Str => "a string",
            ParamType::Int => "an integer",
            ParamType::Real => "a number",
        }
    }
}

use ParamType::{Int, Real, Str};

/// The full primitive registry: every callable maneuver and its signature.
pub const PRIMITIVE_COUNT: usize = 23;

const REGISTRY: [(&str, &[ParamType]); PRIMITIVE_COUNT] = [
    ("move_to_object", &[Str]),
    ("move_to_instance", &[Str, Int]),
    ("move_to_nth_closest", &[Str, Int]),
    ("move_to_nth_in_view", &[Str, Int]),
    ("move_to_closest", &[Str]),
    ("move_to_farthest", &[Str]),
    ("move_between", &[Str, Int, Str, Int]),
    ("move_between_instances", &[Str, Int, Int]),
    ("move_to_left_of", &[Str, Int]),
    ("move_to_right_of", &[Str, Int]),
    ("move_in_front_of", &[Str, Int]),
    ("move_behind", &[Str, Int]),
    ("move_to_point", &[Real, Real]),
    ("move_within", &[Str, Int, Real]),
    ("face_object", &[Str]),
    ("face_instance", &[Str, Int]),
    ("turn_left", &[Real]),
    ("turn_right", &[Real]),
    ("turn_to_heading", &[Real]),
    ("move_forward", &[Real]),
    ("move_backward", &[Real]),
    ("return_to_start", &[]),
    ("stop", &[]),
];

pub fn primitive_names() -> Vec<&'static str> {
    REGISTRY.iter().map(|(n, _)| *n).collect()
}

pub fn signature_of(name: &str) -> Option<&'static [ParamType]> {
    REGISTRY.iter().find(|(n, _)| *n == name).map(|(_, sig)| *sig)
}

struct LineScanner<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    src: &'a str,
}

impl<'a> LineScanner<'a> {
    fn new(src: &'a str, line: usize) -> Self {
        Self { chars: src.chars().collect(), pos: 0, line, src }
    }

    fn col(&self) -> usize {
        self.pos + 1
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn skip_spaces(&mut self) {
        while matches!(self.peek(), Some(c) if c == ' ' || c == '\t') {
            self.pos += 1;
        }
    }

    fn error(&self, col: usize, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax { line: self.line, col, msg: msg.into() }
    }

    fn ident(&mut self) -> Result<(String, usize), ParseError> {
        let start = self.col();
        let mut s = String::new();
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                s.push(c);
                self.pos += 1;
            }
            Some(c) => return Err(self.error(start, format!("expected a call name, found {c:?}"))),
            None => return Err(self.error(start, "expected a call name")),
        }
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
            s.push(self.bump().unwrap());
        }
        Ok((s, start))
    }

    fn string_literal(&mut self) -> Result<ArgValue, ParseError> {
        let start = self.col();
        self.bump(); // opening quote
        let mut s = String::new();
        loop {
            match self.bump() {
                None => return Err(self.error(start, "unterminated string")),
                Some('"') => return Ok(ArgValue::Str(s)),
                Some('\\') => match self.bump() {
                    Some('"') => s.push('"'),
                    Some('\\') => s.push('\\'),
                    Some(c) => {
                        return Err(self.error(self.col() - 1, format!("unknown escape \\{c}")))
                    }
                    None => return Err(self.error(start, "unterminated string")),
                },
                Some(c) => s.push(c),
            }
        }
    }

    fn number_literal(&mut self) -> Result<ArgValue, ParseError> {
        let start_pos = self.pos;
        let start = self.col();
        if matches!(self.peek(), Some('+') | Some('-')) {
            self.pos += 1;
        }
        let digits_begin = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == digits_begin {
            return Err(self.error(start, "expected digits in number"));
        }
        let mut is_real = false;
        if self.peek() == Some('.') {
            is_real = true;
            self.pos += 1;
            let frac_begin = self.pos;
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
            if self.pos == frac_begin {
                return Err(self.error(self.col(), "expected digits after decimal point"));
            }
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            is_real = true;
            self.pos += 1;
            if matches!(self.peek(), Some('+') | Some('-')) {
                self.pos += 1;
            }
            let exp_begin = self.pos;
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
            if self.pos == exp_begin {
                return Err(self.error(self.col(), "expected digits in exponent"));
            }
        }
        let text: String = self.chars[start_pos..self.pos].iter().collect();
        if is_real {
            text.parse::<f64>()
                .map(ArgValue::Real)
                .map_err(|_| self.error(start, format!("bad real literal {text:?}")))
        } else {
            text.parse::<i64>()
                .map(ArgValue::Int)
                .map_err(|_| self.error(start, format!("integer literal {text:?} out of range")))
        }
    }

    fn argument(&mut self) -> Result<(ArgValue, usize), ParseError> {
        let col = self.col();
        match self.peek() {
            Some('"') => Ok((self.string_literal()?, col)),
            Some(c) if c.is_ascii_digit() || c == '+' || c == '-' => {
                Ok((self.number_literal()?, col))
            }
            Some(c) => Err(self.error(
                col,
                format!("expected a quoted string or number argument, found {c:?}"),
            )),
            None => Err(self.error(col, "expected an argument before end of line")),
        }
    }

    /// Parse one call, which must be the only content of the line apart from
    /// trailing spaces or a comment.
    fn call(&mut self) -> Result<PrimitiveCall, ParseError> {
        self.skip_spaces();
        let (name, name_col) = self.ident()?;
        self.skip_spaces();
        if self.peek() != Some('(') {
            return Err(self.error(self.col(), "expected '(' after call name"));
        }
        self.bump();
        let mut args = Vec::new();
        let mut arg_cols = Vec::new();
        self.skip_spaces();
        if self.peek() == Some(')') {
            self.bump();
        } else {
            loop {
                self.skip_spaces();
                let (arg, col) = self.argument()?;
                args.push(arg);
                arg_cols.push(col);
                self.skip_spaces();
                match self.bump() {
                    Some(',') => continue,
                    Some(')') => break,
                    Some(c) => {
                        return Err(self.error(self.col() - 1, format!("expected ',' or ')', found {c:?}")))
                    }
                    None => return Err(self.error(self.col(), "expected ')' before end of line")),
                }
            }
        }
        self.skip_spaces();
        match self.peek() {
            None => {}
            Some('#') => {}
            Some(c) => {
                return Err(self.error(self.col(), format!("unexpected {c:?} after call")));
            }
        }

        // The line is syntactically a call; now check it against the registry.
        let Some(sig) = signature_of(&name) else {
            return Err(ParseError::UnknownPrimitive { line: self.line, col: name_col, name });
        };
        if sig.len() != args.len() {
            return Err(ParseError::Arity {
                line: self.line,
                col: name_col,
                name,
                expected: sig.len(),
                got: args.len(),
            });
        }
        for (i, (param, arg)) in sig.iter().zip(&args).enumerate() {
            if !param.accepts(arg) {
                return Err(ParseError::Type {
                    line: self.line,
                    col: arg_cols[i],
                    name,
                    index: i + 1,
                    expected: param.describe(),
                    got: arg.kind(),
                });
            }
        }
        let _ = self.src;
        Ok(PrimitiveCall { name, args, line: self.line, col: name_col })
    }
}

/// Parse a whole program: one call per non-blank, non-comment line.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut calls = Vec::new();
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        last_line = i + 1;
        let trimmed = raw.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        calls.push(LineScanner::new(raw, i + 1).call()?);
    }
    if calls.is_empty() {
        return Err(ParseError::Syntax {
            line: last_line.max(1),
            col: 1,
            msg: "program contains no calls".into(),
        });
    }
    Ok(Program { calls })
}

/// Render a program in canonical form: one call per line. Parsing the output
/// reproduces an equal Program (modulo source locations).
pub fn pretty_print(prog: &Program) -> String {
    let mut out = String::new();
    for call in &prog.calls {
        out.push_str(&call.to_string());
        out.push('\n');
    }
    out
}
