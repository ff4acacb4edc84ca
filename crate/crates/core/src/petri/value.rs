//! Token colors and color sets.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::syntax::{is_ident, write_quoted, Parser, SyntaxError, Tok};

/// A structured token color.
///
/// The derived ordering is the canonical order used for binding tie-breaks.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Unit,
    Bool(bool),
    Int(i64),
    Str(String),
    Record(BTreeMap<String, Value>),
}

impl Value {
    pub fn str(s: impl Into<String>) -> Self {
        Value::Str(s.into())
    }

    pub fn record<K: Into<String>>(fields: impl IntoIterator<Item = (K, Value)>) -> Self {
        Value::Record(fields.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn field(&self, name: &str) -> Option<&Value> {
        match self {
            Value::Record(m) => m.get(name),
            _ => None,
        }
    }

    pub(crate) fn parse_with(p: &mut Parser<'_>) -> Result<Value, SyntaxError> {
        let (at, tok) = p.next()?;
        match tok {
            Tok::LParen => {
                p.expect(Tok::RParen)?;
                Ok(Value::Unit)
            }
            Tok::Ident(s) if s == "true" => Ok(Value::Bool(true)),
            Tok::Ident(s) if s == "false" => Ok(Value::Bool(false)),
            Tok::Int(i) => Ok(Value::Int(i)),
            Tok::Str(s) => Ok(Value::Str(s)),
            Tok::LBrace => Ok(Value::Record(p.fields(Value::parse_with)?.into_iter().collect())),
            other => Err(p.error(at, format!("expected a value, found {other}"))),
        }
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => f.write_str("()"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => write_quoted(f, s),
            Value::Record(m) => {
                f.write_str("{")?;
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                f.write_str("}")
            }
        }
    }
}

impl FromStr for Value {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser::new(s);
        let v = Value::parse_with(&mut p)?;
        p.finish()?;
        Ok(v)
    }
}

/// Declared token schema of a place.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColorSet {
    Unit,
    Bool,
    Int,
    Str,
    /// A string drawn from a fixed list of labels.
    Enum(Vec<String>),
    Record(BTreeMap<String, ColorSet>),
}

impl ColorSet {
    pub fn record<K: Into<String>>(fields: impl IntoIterator<Item = (K, ColorSet)>) -> Self {
        ColorSet::Record(fields.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn enumeration<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Self {
        ColorSet::Enum(labels.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, value: &Value) -> bool {
        match (self, value) {
            (ColorSet::Unit, Value::Unit)
            | (ColorSet::Bool, Value::Bool(_))
            | (ColorSet::Int, Value::Int(_))
            | (ColorSet::Str, Value::Str(_)) => true,
            (ColorSet::Enum(labels), Value::Str(s)) => labels.iter().any(|l| l == s),
            (ColorSet::Record(schema), Value::Record(fields)) => {
                schema.len() == fields.len()
                    && schema
                        .iter()
                        .all(|(k, cs)| fields.get(k).is_some_and(|v| cs.contains(v)))
            }
            _ => false,
        }
    }

    fn parse_with(p: &mut Parser<'_>) -> Result<ColorSet, SyntaxError> {
        let (at, tok) = p.next()?;
        match tok {
            Tok::Ident(s) => match s.as_str() {
                "unit" => Ok(ColorSet::Unit),
                "bool" => Ok(ColorSet::Bool),
                "int" => Ok(ColorSet::Int),
                "str" => Ok(ColorSet::Str),
                other => Err(p.error(at, format!("unknown color set `{other}`"))),
            },
            Tok::LParen => {
                let kw_at = at + 1;
                if p.ident()? != "enum" {
                    return Err(p.error(kw_at, "expected `enum`"));
                }
                let mut labels = Vec::new();
                while !p.eat(&Tok::RParen)? {
                    labels.push(p.ident()?);
                }
                Ok(ColorSet::Enum(labels))
            }
            Tok::LBrace => Ok(ColorSet::Record(
                p.fields(ColorSet::parse_with)?.into_iter().collect(),
            )),
            other => Err(p.error(at, format!("expected a color set, found {other}"))),
        }
    }
}

impl fmt::Display for ColorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColorSet::Unit => f.write_str("unit"),
            ColorSet::Bool => f.write_str("bool"),
            ColorSet::Int => f.write_str("int"),
            ColorSet::Str => f.write_str("str"),
            ColorSet::Enum(labels) => {
                f.write_str("(enum")?;
                for l in labels {
                    write!(f, " {l}")?;
                }
                f.write_str(")")
            }
            ColorSet::Record(m) => {
                f.write_str("{")?;
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                f.write_str("}")
            }
        }
    }
}

impl FromStr for ColorSet {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser::new(s);
        let cs = ColorSet::parse_with(&mut p)?;
        if let ColorSet::Enum(labels) = &cs {
            if let Some(bad) = labels.iter().find(|l| !is_ident(l)) {
                return Err(p.error(0, format!("invalid enum label {bad:?}")));
            }
        }
        p.finish()?;
        Ok(cs)
    }
}
