//! Arc patterns, arc expressions and guards.
//!
//! Inscriptions are plain data so a net can be written to and read back from a
//! model file. Input arcs carry a [`Pattern`] that binds variables; guards,
//! delays and output arcs are [`Expr`] trees evaluated over those bindings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use super::rng::SimRng;
use super::syntax::{Parser, SyntaxError, Tok};
use super::value::Value;

/// Variable bindings produced by matching input arcs.
pub type Env = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("type error in `{op}`: {detail}")]
    Type { op: &'static str, detail: String },
    #[error("division by zero")]
    DivisionByZero,
    #[error("random draw requested where no random source is available")]
    Stochastic,
    #[error("record has no field `{0}`")]
    NoField(String),
}

/// Input-arc inscription.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    /// `_`
    Any,
    /// `?x`; repeated occurrences must agree.
    Var(String),
    Lit(Value),
    /// Matches a record with exactly these fields.
    Record(BTreeMap<String, Pattern>),
}

impl Pattern {
    pub fn var(name: &str) -> Self {
        Pattern::Var(name.to_string())
    }

    pub fn record<K: Into<String>>(fields: impl IntoIterator<Item = (K, Pattern)>) -> Self {
        Pattern::Record(fields.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    /// Matches `value`, extending `env`. Names bound by this call are pushed on
    /// `trail` so a failed match can be rolled back by the caller.
    pub fn match_into(&self, value: &Value, env: &mut Env, trail: &mut Vec<String>) -> bool {
        match self {
            Pattern::Any => true,
            Pattern::Lit(v) => v == value,
            Pattern::Var(name) => match env.get(name) {
                Some(bound) => bound == value,
                None => {
                    env.insert(name.clone(), value.clone());
                    trail.push(name.clone());
                    true
                }
            },
            Pattern::Record(fields) => match value {
                Value::Record(vals) if vals.len() == fields.len() => fields
                    .iter()
                    .all(|(k, p)| vals.get(k).is_some_and(|v| p.match_into(v, env, trail))),
                _ => false,
            },
        }
    }

    /// Matches without keeping bindings.
    pub fn matches(&self, value: &Value, env: &Env) -> bool {
        let mut scratch = env.clone();
        self.match_into(value, &mut scratch, &mut Vec::new())
    }

    /// The single value this pattern can match under `env`, if determined.
    pub fn ground(&self, env: &Env) -> Option<Value> {
        match self {
            Pattern::Any => None,
            Pattern::Lit(v) => Some(v.clone()),
            Pattern::Var(name) => env.get(name).cloned(),
            Pattern::Record(fields) => fields
                .iter()
                .map(|(k, p)| p.ground(env).map(|v| (k.clone(), v)))
                .collect::<Option<BTreeMap<_, _>>>()
                .map(Value::Record),
        }
    }

    pub fn vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Pattern::Var(name) => {
                out.insert(name.clone());
            }
            Pattern::Record(fields) => fields.values().for_each(|p| p.vars(out)),
            Pattern::Any | Pattern::Lit(_) => {}
        }
    }

    fn parse_with(p: &mut Parser<'_>) -> Result<Pattern, SyntaxError> {
        match p.peek()? {
            Some(Tok::Question) => {
                p.next()?;
                Ok(Pattern::Var(p.ident()?))
            }
            Some(Tok::Ident(s)) if s == "_" => {
                p.next()?;
                Ok(Pattern::Any)
            }
            Some(Tok::LBrace) => {
                p.next()?;
                Ok(Pattern::Record(
                    p.fields(Pattern::parse_with)?.into_iter().collect(),
                ))
            }
            _ => Ok(Pattern::Lit(Value::parse_with(p)?)),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Any => f.write_str("_"),
            Pattern::Var(n) => write!(f, "?{n}"),
            Pattern::Lit(v) => write!(f, "{v}"),
            Pattern::Record(m) => {
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

impl FromStr for Pattern {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser::new(s);
        let pat = Pattern::parse_with(&mut p)?;
        p.finish()?;
        Ok(pat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Not,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    If,
}

impl Op {
    const ALL: [(Op, &'static str); 15] = [
        (Op::Eq, "eq"),
        (Op::Ne, "ne"),
        (Op::Lt, "lt"),
        (Op::Le, "le"),
        (Op::Gt, "gt"),
        (Op::Ge, "ge"),
        (Op::And, "and"),
        (Op::Or, "or"),
        (Op::Not, "not"),
        (Op::Add, "add"),
        (Op::Sub, "sub"),
        (Op::Mul, "mul"),
        (Op::Div, "div"),
        (Op::Mod, "mod"),
        (Op::If, "if"),
    ];

    pub fn name(self) -> &'static str {
        Op::ALL.iter().find(|(op, _)| *op == self).map(|(_, n)| *n).unwrap()
    }

    fn from_name(name: &str) -> Option<Op> {
        Op::ALL.iter().find(|(_, n)| *n == name).map(|(op, _)| *op)
    }

    fn arity_ok(self, n: usize) -> bool {
        match self {
            Op::Not => n == 1,
            Op::If => n == 3,
            Op::And | Op::Or => n >= 1,
            _ => n == 2,
        }
    }
}

/// Guard, delay and output-arc inscription.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Value),
    Var(String),
    Record(BTreeMap<String, Expr>),
    Field(Box<Expr>, String),
    Apply(Op, Vec<Expr>),
    /// Draws `true` with the given probability from the run's random stream.
    Bernoulli(f64),
}

impl From<Value> for Expr {
    fn from(v: Value) -> Self {
        Expr::Lit(v)
    }
}

impl Expr {
    pub fn var(name: &str) -> Self {
        Expr::Var(name.to_string())
    }

    pub fn int(i: i64) -> Self {
        Expr::Lit(Value::Int(i))
    }

    pub fn record<K: Into<String>>(fields: impl IntoIterator<Item = (K, Expr)>) -> Self {
        Expr::Record(fields.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn apply(op: Op, args: impl IntoIterator<Item = Expr>) -> Self {
        Expr::Apply(op, args.into_iter().collect())
    }

    pub fn field(self, name: &str) -> Self {
        Expr::Field(Box::new(self), name.to_string())
    }

    pub fn is_stochastic(&self) -> bool {
        match self {
            Expr::Bernoulli(_) => true,
            Expr::Lit(_) | Expr::Var(_) => false,
            Expr::Record(m) => m.values().any(Expr::is_stochastic),
            Expr::Field(e, _) => e.is_stochastic(),
            Expr::Apply(_, args) => args.iter().any(Expr::is_stochastic),
        }
    }

    pub fn free_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(n) => {
                out.insert(n.clone());
            }
            Expr::Record(m) => m.values().for_each(|e| e.free_vars(out)),
            Expr::Field(e, _) => e.free_vars(out),
            Expr::Apply(_, args) => args.iter().for_each(|e| e.free_vars(out)),
            Expr::Lit(_) | Expr::Bernoulli(_) => {}
        }
    }

    /// Problems detectable without evaluation (arity, probability range).
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.check_into(&mut out);
        out
    }

    fn check_into(&self, out: &mut Vec<String>) {
        match self {
            Expr::Bernoulli(p) if !(0.0..=1.0).contains(p) => {
                out.push(format!("bernoulli probability {p} outside [0, 1]"))
            }
            Expr::Apply(op, args) => {
                if !op.arity_ok(args.len()) {
                    out.push(format!("`{}` applied to {} arguments", op.name(), args.len()));
                }
                args.iter().for_each(|a| a.check_into(out));
            }
            Expr::Record(m) => m.values().for_each(|e| e.check_into(out)),
            Expr::Field(e, _) => e.check_into(out),
            _ => {}
        }
    }

    /// Evaluates deterministically; random draws are an error.
    pub fn eval(&self, env: &Env) -> Result<Value, EvalError> {
        self.eval_inner(env, &mut None)
    }

    /// Evaluates, taking random draws from `rng`.
    pub fn eval_with(&self, env: &Env, rng: &mut SimRng) -> Result<Value, EvalError> {
        self.eval_inner(env, &mut Some(rng))
    }

    fn eval_inner(&self, env: &Env, rng: &mut Option<&mut SimRng>) -> Result<Value, EvalError> {
        match self {
            Expr::Lit(v) => Ok(v.clone()),
            Expr::Var(n) => env.get(n).cloned().ok_or_else(|| EvalError::Unbound(n.clone())),
            Expr::Record(m) => m
                .iter()
                .map(|(k, e)| Ok((k.clone(), e.eval_inner(env, rng)?)))
                .collect::<Result<BTreeMap<_, _>, _>>()
                .map(Value::Record),
            Expr::Field(e, name) => field_of(e.eval_inner(env, rng)?, name),
            Expr::Bernoulli(p) => match rng {
                Some(r) => Ok(Value::Bool(r.bernoulli(*p))),
                None => Err(EvalError::Stochastic),
            },
            Expr::Apply(Op::If, args) if args.len() == 3 => {
                let c = truth(Op::If, &args[0].eval_inner(env, rng)?)?;
                args[if c { 1 } else { 2 }].eval_inner(env, rng)
            }
            Expr::Apply(op, args) => {
                let vals = args
                    .iter()
                    .map(|a| a.eval_inner(env, rng))
                    .collect::<Result<Vec<_>, _>>()?;
                apply(*op, &vals)
            }
        }
    }

    /// Every value the expression can take, treating each random draw as a
    /// nondeterministic choice. Used by the untimed reachability oracle.
    pub fn outcomes(&self, env: &Env) -> Result<Vec<Value>, EvalError> {
        let mut vals = match self {
            Expr::Lit(v) => vec![v.clone()],
            Expr::Var(n) => vec![env.get(n).cloned().ok_or_else(|| EvalError::Unbound(n.clone()))?],
            Expr::Bernoulli(p) => {
                let mut v = Vec::new();
                if *p < 1.0 {
                    v.push(Value::Bool(false));
                }
                if *p > 0.0 {
                    v.push(Value::Bool(true));
                }
                v
            }
            Expr::Field(e, name) => e
                .outcomes(env)?
                .into_iter()
                .map(|v| field_of(v, name))
                .collect::<Result<_, _>>()?,
            Expr::Record(m) => {
                let mut acc = vec![BTreeMap::new()];
                for (k, e) in m {
                    let opts = e.outcomes(env)?;
                    acc = acc
                        .into_iter()
                        .flat_map(|partial| {
                            opts.iter().map(move |o| {
                                let mut next = partial.clone();
                                next.insert(k.clone(), o.clone());
                                next
                            })
                        })
                        .collect();
                }
                acc.into_iter().map(Value::Record).collect()
            }
            Expr::Apply(op, args) => {
                let mut acc: Vec<Vec<Value>> = vec![Vec::new()];
                for a in args {
                    let opts = a.outcomes(env)?;
                    acc = acc
                        .into_iter()
                        .flat_map(|partial| {
                            opts.iter().map(move |o| {
                                let mut next = partial.clone();
                                next.push(o.clone());
                                next
                            })
                        })
                        .collect();
                }
                let mut out = Vec::with_capacity(acc.len());
                for vals in acc {
                    if *op == Op::If && vals.len() == 3 {
                        out.push(if truth(Op::If, &vals[0])? { vals[1].clone() } else { vals[2].clone() });
                    } else {
                        out.push(apply(*op, &vals)?);
                    }
                }
                out
            }
        };
        vals.sort();
        vals.dedup();
        Ok(vals)
    }

    fn parse_with(p: &mut Parser<'_>) -> Result<Expr, SyntaxError> {
        match p.peek()? {
            Some(Tok::LParen) => {
                let (at, _) = p.next()?;
                if p.eat(&Tok::RParen)? {
                    return Ok(Expr::Lit(Value::Unit));
                }
                let name = p.ident()?;
                match name.as_str() {
                    "field" => {
                        let e = Expr::parse_with(p)?;
                        let key = p.ident()?;
                        p.expect(Tok::RParen)?;
                        Ok(Expr::Field(Box::new(e), key))
                    }
                    "bernoulli" => {
                        let (at, tok) = p.next()?;
                        let prob = match tok {
                            Tok::Float(x) => x,
                            Tok::Int(i) => i as f64,
                            other => return Err(p.error(at, format!("expected probability, found {other}"))),
                        };
                        p.expect(Tok::RParen)?;
                        Ok(Expr::Bernoulli(prob))
                    }
                    other => {
                        let op = Op::from_name(other)
                            .ok_or_else(|| p.error(at + 1, format!("unknown operator `{other}`")))?;
                        let mut args = Vec::new();
                        while !p.eat(&Tok::RParen)? {
                            args.push(Expr::parse_with(p)?);
                        }
                        if !op.arity_ok(args.len()) {
                            return Err(p.error(at, format!("`{other}` applied to {} arguments", args.len())));
                        }
                        Ok(Expr::Apply(op, args))
                    }
                }
            }
            Some(Tok::LBrace) => {
                p.next()?;
                Ok(Expr::Record(p.fields(Expr::parse_with)?.into_iter().collect()))
            }
            Some(Tok::Ident(s)) if s != "true" && s != "false" => Ok(Expr::Var(p.ident()?)),
            _ => Ok(Expr::Lit(Value::parse_with(p)?)),
        }
    }
}

fn field_of(v: Value, name: &str) -> Result<Value, EvalError> {
    match v {
        Value::Record(mut m) => m.remove(name).ok_or_else(|| EvalError::NoField(name.to_string())),
        other => Err(EvalError::Type {
            op: "field",
            detail: format!("{other} is not a record"),
        }),
    }
}

fn truth(op: Op, v: &Value) -> Result<bool, EvalError> {
    v.as_bool().ok_or_else(|| EvalError::Type {
        op: op.name(),
        detail: format!("expected bool, got {v}"),
    })
}

fn int(op: Op, v: &Value) -> Result<i64, EvalError> {
    v.as_int().ok_or_else(|| EvalError::Type {
        op: op.name(),
        detail: format!("expected int, got {v}"),
    })
}

fn apply(op: Op, vals: &[Value]) -> Result<Value, EvalError> {
    let overflow = || EvalError::Type {
        op: op.name(),
        detail: "integer overflow".to_string(),
    };
    Ok(match op {
        Op::Eq => Value::Bool(vals[0] == vals[1]),
        Op::Ne => Value::Bool(vals[0] != vals[1]),
        Op::Lt => Value::Bool(vals[0] < vals[1]),
        Op::Le => Value::Bool(vals[0] <= vals[1]),
        Op::Gt => Value::Bool(vals[0] > vals[1]),
        Op::Ge => Value::Bool(vals[0] >= vals[1]),
        Op::And => {
            let mut acc = true;
            for v in vals {
                acc &= truth(op, v)?;
            }
            Value::Bool(acc)
        }
        Op::Or => {
            let mut acc = false;
            for v in vals {
                acc |= truth(op, v)?;
            }
            Value::Bool(acc)
        }
        Op::Not => Value::Bool(!truth(op, &vals[0])?),
        Op::Add => Value::Int(int(op, &vals[0])?.checked_add(int(op, &vals[1])?).ok_or_else(overflow)?),
        Op::Sub => Value::Int(int(op, &vals[0])?.checked_sub(int(op, &vals[1])?).ok_or_else(overflow)?),
        Op::Mul => Value::Int(int(op, &vals[0])?.checked_mul(int(op, &vals[1])?).ok_or_else(overflow)?),
        Op::Div | Op::Mod => {
            let (a, b) = (int(op, &vals[0])?, int(op, &vals[1])?);
            if b == 0 {
                return Err(EvalError::DivisionByZero);
            }
            Value::Int(if op == Op::Div { a.div_euclid(b) } else { a.rem_euclid(b) })
        }
        Op::If => {
            if truth(op, &vals[0])? {
                vals[1].clone()
            } else {
                vals[2].clone()
            }
        }
    })
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Var(n) => f.write_str(n),
            Expr::Record(m) => {
                f.write_str("{")?;
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                f.write_str("}")
            }
            Expr::Field(e, k) => write!(f, "(field {e} {k})"),
            Expr::Apply(op, args) => {
                write!(f, "({}", op.name())?;
                for a in args {
                    write!(f, " {a}")?;
                }
                f.write_str(")")
            }
            Expr::Bernoulli(p) => write!(f, "(bernoulli {p:?})"),
        }
    }
}

impl FromStr for Expr {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser::new(s);
        let e = Expr::parse_with(&mut p)?;
        p.finish()?;
        Ok(e)
    }
}
