//! Tokenizer and recursive-descent helpers for the textual inscription syntax.
//!
//! Token colors, arc patterns, arc expressions, guards and color sets all share
//! one small grammar so that nets can be stored in model files and traces:
//!
//! ```text
//! value   := "()" | "true" | "false" | INT | STRING | "{" [field ("," field)*] "}"
//! pattern := "_" | "?" IDENT | value-literal | "{" [key ":" pattern ...] "}"
//! expr    := literal | IDENT | "{" [key ":" expr ...] "}" | "(" OP expr* ")"
//! colors  := "unit" | "bool" | "int" | "str" | "(enum" IDENT* ")" | "{" key ":" colors ... "}"
//! ```

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    LParen,
    RParen,
    LBrace,
    RBrace,
    Colon,
    Comma,
    Question,
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::LBrace => f.write_str("'{'"),
            Tok::RBrace => f.write_str("'}'"),
            Tok::Colon => f.write_str("':'"),
            Tok::Comma => f.write_str("','"),
            Tok::Question => f.write_str("'?'"),
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Int(i) => write!(f, "integer {i}"),
            Tok::Float(x) => write!(f, "number {x}"),
            Tok::Str(s) => write!(f, "string {s:?}"),
        }
    }
}

/// Error raised while reading inscription text.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("syntax error at offset {offset}: {message}")]
pub struct SyntaxError {
    pub offset: usize,
    pub message: String,
}

pub(crate) struct Parser<'a> {
    src: &'a str,
    pos: usize,
    peeked: Option<(usize, Tok)>,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

impl<'a> Parser<'a> {
    pub(crate) fn new(src: &'a str) -> Self {
        Self {
            src,
            pos: 0,
            peeked: None,
        }
    }

    pub(crate) fn error(&self, offset: usize, message: impl Into<String>) -> SyntaxError {
        SyntaxError {
            offset,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        let trimmed = rest.trim_start();
        self.pos += rest.len() - trimmed.len();
    }

    fn lex(&mut self) -> Result<Option<(usize, Tok)>, SyntaxError> {
        self.skip_ws();
        let start = self.pos;
        let mut chars = self.src[self.pos..].chars();
        let Some(c) = chars.next() else {
            return Ok(None);
        };
        let single = |p: &mut Self, t: Tok| {
            p.pos += 1;
            Ok(Some((start, t)))
        };
        match c {
            '(' => single(self, Tok::LParen),
            ')' => single(self, Tok::RParen),
            '{' => single(self, Tok::LBrace),
            '}' => single(self, Tok::RBrace),
            ':' => single(self, Tok::Colon),
            ',' => single(self, Tok::Comma),
            '?' => single(self, Tok::Question),
            '"' => self.lex_string(start),
            c if c.is_ascii_digit() || c == '-' => self.lex_number(start),
            c if is_ident_start(c) => {
                let len = self.src[start..]
                    .char_indices()
                    .find(|&(_, ch)| !is_ident_char(ch))
                    .map_or(self.src.len() - start, |(i, _)| i);
                self.pos = start + len;
                Ok(Some((start, Tok::Ident(self.src[start..start + len].to_string()))))
            }
            other => Err(self.error(start, format!("unexpected character {other:?}"))),
        }
    }

    fn lex_string(&mut self, start: usize) -> Result<Option<(usize, Tok)>, SyntaxError> {
        let mut out = String::new();
        let mut iter = self.src[start + 1..].char_indices();
        while let Some((i, ch)) = iter.next() {
            match ch {
                '"' => {
                    self.pos = start + 1 + i + 1;
                    return Ok(Some((start, Tok::Str(out))));
                }
                '\\' => match iter.next() {
                    Some((_, '"')) => out.push('"'),
                    Some((_, '\\')) => out.push('\\'),
                    Some((_, 'n')) => out.push('\n'),
                    Some((_, 't')) => out.push('\t'),
                    Some((_, 'r')) => out.push('\r'),
                    _ => return Err(self.error(start + 1 + i, "invalid escape in string")),
                },
                c => out.push(c),
            }
        }
        Err(self.error(start, "unterminated string"))
    }

    fn lex_number(&mut self, start: usize) -> Result<Option<(usize, Tok)>, SyntaxError> {
        let bytes = self.src.as_bytes();
        let mut end = start;
        if bytes[end] == b'-' {
            end += 1;
        }
        let digits_start = end;
        let mut float = false;
        while end < bytes.len() {
            match bytes[end] {
                b'0'..=b'9' => end += 1,
                b'.' | b'e' | b'E' => {
                    float = true;
                    end += 1;
                }
                b'+' | b'-' if float && matches!(bytes[end - 1], b'e' | b'E') => end += 1,
                _ => break,
            }
        }
        if end == digits_start {
            return Err(self.error(start, "expected digits"));
        }
        let text = &self.src[start..end];
        self.pos = end;
        let tok = if float {
            Tok::Float(
                text.parse()
                    .map_err(|_| self.error(start, format!("invalid number {text:?}")))?,
            )
        } else {
            Tok::Int(
                text.parse()
                    .map_err(|_| self.error(start, format!("integer out of range {text:?}")))?,
            )
        };
        Ok(Some((start, tok)))
    }

    pub(crate) fn peek(&mut self) -> Result<Option<&Tok>, SyntaxError> {
        if self.peeked.is_none() {
            self.peeked = self.lex()?;
        }
        Ok(self.peeked.as_ref().map(|(_, t)| t))
    }

    pub(crate) fn next(&mut self) -> Result<(usize, Tok), SyntaxError> {
        if let Some(t) = self.peeked.take() {
            return Ok(t);
        }
        self.lex()?
            .ok_or_else(|| self.error(self.src.len(), "unexpected end of input"))
    }

    pub(crate) fn expect(&mut self, want: Tok) -> Result<(), SyntaxError> {
        let (at, got) = self.next()?;
        if got == want {
            Ok(())
        } else {
            Err(self.error(at, format!("expected {want}, found {got}")))
        }
    }

    pub(crate) fn ident(&mut self) -> Result<String, SyntaxError> {
        match self.next()? {
            (_, Tok::Ident(s)) => Ok(s),
            (at, other) => Err(self.error(at, format!("expected identifier, found {other}"))),
        }
    }

    /// Consumes the token if it equals `want`.
    pub(crate) fn eat(&mut self, want: &Tok) -> Result<bool, SyntaxError> {
        if self.peek()? == Some(want) {
            self.peeked = None;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Parses `{ key: <item>, ... }` after the opening brace has been consumed.
    pub(crate) fn fields<T>(
        &mut self,
        mut item: impl FnMut(&mut Self) -> Result<T, SyntaxError>,
    ) -> Result<Vec<(String, T)>, SyntaxError> {
        let mut out = Vec::new();
        if self.eat(&Tok::RBrace)? {
            return Ok(out);
        }
        loop {
            let at = self.pos;
            let key = self.ident()?;
            if out.iter().any(|(k, _)| *k == key) {
                return Err(self.error(at, format!("duplicate field `{key}`")));
            }
            self.expect(Tok::Colon)?;
            out.push((key, item(self)?));
            if self.eat(&Tok::Comma)? {
                continue;
            }
            self.expect(Tok::RBrace)?;
            return Ok(out);
        }
    }

    pub(crate) fn finish(&mut self) -> Result<(), SyntaxError> {
        match self.peek()? {
            None => Ok(()),
            Some(_) => {
                let (at, tok) = self.next()?;
                Err(self.error(at, format!("trailing input: {tok}")))
            }
        }
    }
}

/// Writes `s` as a quoted string literal.
pub(crate) fn write_quoted(f: &mut impl fmt::Write, s: &str) -> fmt::Result {
    f.write_char('"')?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            '\r' => f.write_str("\\r")?,
            c => f.write_char(c)?,
        }
    }
    f.write_char('"')
}

pub(crate) fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if is_ident_start(c)) && chars.all(is_ident_char)
}
