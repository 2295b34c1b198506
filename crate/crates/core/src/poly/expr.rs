//! Coefficient expressions stored in basis bundles.
//!
//! A tree is a nested JSON array: `["+", a, b, ...]`, `["*", a, b, ...]`,
//! `["-", a, b]`, `["/", a, b]`, `["neg", a]` and `["^", base, k]`. Leaves are
//! strings holding either a rational constant (`"-2"`, `"7/2"`) or a symbol
//! (`x0_2`, `xf_3`, `umax`, `umin`, `xmax_2`, `xmin_3`, `t7`).

use std::fmt;

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("malformed expression node: {0}")]
    Malformed(String),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("invalid constant `{0}`")]
    BadConstant(String),
}

/// Named parameter or unknown that may appear in a coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    X0(usize),
    Xf(usize),
    XMin(usize),
    XMax(usize),
    UMin,
    UMax,
    /// Switching time `t_k`, 1-based.
    T(usize),
}

impl Symbol {
    pub fn parse(s: &str) -> Result<Self, ExprError> {
        let bad = || ExprError::UnknownSymbol(s.to_string());
        match s {
            "umin" => return Ok(Symbol::UMin),
            "umax" => return Ok(Symbol::UMax),
            _ => {}
        }
        let index = |rest: &str| -> Result<usize, ExprError> {
            let k: usize = rest.parse().map_err(|_| bad())?;
            if k == 0 || rest.starts_with('0') {
                return Err(bad());
            }
            Ok(k)
        };
        if let Some(rest) = s.strip_prefix("x0_") {
            Ok(Symbol::X0(index(rest)?))
        } else if let Some(rest) = s.strip_prefix("xf_") {
            Ok(Symbol::Xf(index(rest)?))
        } else if let Some(rest) = s.strip_prefix("xmin_") {
            Ok(Symbol::XMin(index(rest)?))
        } else if let Some(rest) = s.strip_prefix("xmax_") {
            Ok(Symbol::XMax(index(rest)?))
        } else if let Some(rest) = s.strip_prefix('t') {
            Ok(Symbol::T(index(rest)?))
        } else {
            Err(bad())
        }
    }

    pub fn is_time(&self) -> bool {
        matches!(self, Symbol::T(_))
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::X0(i) => write!(f, "x0_{i}"),
            Symbol::Xf(i) => write!(f, "xf_{i}"),
            Symbol::XMin(i) => write!(f, "xmin_{i}"),
            Symbol::XMax(i) => write!(f, "xmax_{i}"),
            Symbol::UMin => f.write_str("umin"),
            Symbol::UMax => f.write_str("umax"),
            Symbol::T(k) => write!(f, "t{k}"),
        }
    }
}

/// Values bound to symbols during evaluation.
pub trait Env {
    fn get(&self, s: Symbol) -> Option<f64>;
}

/// Rational constant kept in its textual form so that trees round-trip exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Constant {
    text: String,
    value: f64,
}

impl Constant {
    pub fn parse(text: &str) -> Result<Self, ExprError> {
        let bad = || ExprError::BadConstant(text.to_string());
        let int = |s: &str| -> Result<f64, ExprError> {
            let digits = s.strip_prefix('-').unwrap_or(s);
            if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            s.parse::<f64>().map_err(|_| bad())
        };
        let value = match text.split_once('/') {
            Some((num, den)) => {
                let d = int(den)?;
                if d == 0.0 || den.starts_with('-') {
                    return Err(bad());
                }
                int(num)? / d
            }
            None => int(text)?,
        };
        Ok(Self {
            text: text.to_string(),
            value,
        })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(Constant),
    Sym(Symbol),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    pub fn from_json(v: &Value) -> Result<Self, ExprError> {
        match v {
            Value::String(s) => {
                let first = s.chars().next().unwrap_or(' ');
                if first.is_ascii_digit() || first == '-' {
                    Constant::parse(s).map(Expr::Const)
                } else {
                    Symbol::parse(s).map(Expr::Sym)
                }
            }
            Value::Array(items) => {
                let op = items
                    .first()
                    .and_then(Value::as_str)
                    .ok_or_else(|| ExprError::Malformed(v.to_string()))?;
                let args = &items[1..];
                let sub = |k: usize| Expr::from_json(&args[k]).map(Box::new);
                let arity = |want: usize| {
                    if args.len() == want {
                        Ok(())
                    } else {
                        Err(ExprError::Malformed(v.to_string()))
                    }
                };
                match op {
                    "+" | "*" => {
                        if args.is_empty() {
                            return Err(ExprError::Malformed(v.to_string()));
                        }
                        let terms = args
                            .iter()
                            .map(Expr::from_json)
                            .collect::<Result<Vec<_>, _>>()?;
                        Ok(if op == "+" {
                            Expr::Add(terms)
                        } else {
                            Expr::Mul(terms)
                        })
                    }
                    "-" => {
                        arity(2)?;
                        Ok(Expr::Sub(sub(0)?, sub(1)?))
                    }
                    "/" => {
                        arity(2)?;
                        Ok(Expr::Div(sub(0)?, sub(1)?))
                    }
                    "neg" => {
                        arity(1)?;
                        Ok(Expr::Neg(sub(0)?))
                    }
                    "^" => {
                        arity(2)?;
                        let k = args[1]
                            .as_u64()
                            .filter(|k| *k <= u32::MAX as u64)
                            .ok_or_else(|| ExprError::Malformed(v.to_string()))?;
                        Ok(Expr::Pow(sub(0)?, k as u32))
                    }
                    _ => Err(ExprError::Malformed(v.to_string())),
                }
            }
            _ => Err(ExprError::Malformed(v.to_string())),
        }
    }

    pub fn to_json(&self) -> Value {
        let node = |op: &str, args: Vec<Value>| {
            let mut items = vec![Value::String(op.to_string())];
            items.extend(args);
            Value::Array(items)
        };
        match self {
            Expr::Const(c) => Value::String(c.text.clone()),
            Expr::Sym(s) => Value::String(s.to_string()),
            Expr::Add(t) => node("+", t.iter().map(Expr::to_json).collect()),
            Expr::Mul(t) => node("*", t.iter().map(Expr::to_json).collect()),
            Expr::Sub(a, b) => node("-", vec![a.to_json(), b.to_json()]),
            Expr::Div(a, b) => node("/", vec![a.to_json(), b.to_json()]),
            Expr::Neg(a) => node("neg", vec![a.to_json()]),
            Expr::Pow(a, k) => node("^", vec![a.to_json(), Value::from(*k)]),
        }
    }

    /// Evaluates the tree; fails on the first unbound symbol.
    pub fn eval(&self, env: &dyn Env) -> Result<f64, Symbol> {
        Ok(match self {
            Expr::Const(c) => c.value,
            Expr::Sym(s) => env.get(*s).ok_or(*s)?,
            Expr::Add(t) => {
                let mut acc = 0.0;
                for e in t {
                    acc += e.eval(env)?;
                }
                acc
            }
            Expr::Mul(t) => {
                let mut acc = 1.0;
                for e in t {
                    acc *= e.eval(env)?;
                }
                acc
            }
            Expr::Sub(a, b) => a.eval(env)? - b.eval(env)?,
            Expr::Div(a, b) => a.eval(env)? / b.eval(env)?,
            Expr::Neg(a) => -a.eval(env)?,
            Expr::Pow(a, k) => a.eval(env)?.powi(*k as i32),
        })
    }

    /// Evaluates the tree and the largest absolute summand met on the way,
    /// which serves as the magnitude scale for near-zero tests.
    pub fn eval_with_scale(&self, env: &dyn Env) -> Result<(f64, f64), Symbol> {
        match self {
            Expr::Add(t) => {
                let mut acc = 0.0;
                let mut scale: f64 = 0.0;
                for e in t {
                    let (v, s) = e.eval_with_scale(env)?;
                    acc += v;
                    scale = scale.max(s).max(v.abs());
                }
                Ok((acc, scale))
            }
            Expr::Sub(a, b) => {
                let (va, sa) = a.eval_with_scale(env)?;
                let (vb, sb) = b.eval_with_scale(env)?;
                Ok((va - vb, sa.max(sb).max(va.abs()).max(vb.abs())))
            }
            Expr::Neg(a) => {
                let (v, s) = a.eval_with_scale(env)?;
                Ok((-v, s))
            }
            other => {
                let v = other.eval(env)?;
                Ok((v, v.abs()))
            }
        }
    }

    /// Every symbol occurring in the tree.
    pub fn symbols(&self, out: &mut Vec<Symbol>) {
        match self {
            Expr::Const(_) => {}
            Expr::Sym(s) => {
                if !out.contains(s) {
                    out.push(*s)
                }
            }
            Expr::Add(t) | Expr::Mul(t) => t.iter().for_each(|e| e.symbols(out)),
            Expr::Sub(a, b) | Expr::Div(a, b) => {
                a.symbols(out);
                b.symbols(out);
            }
            Expr::Neg(a) | Expr::Pow(a, _) => a.symbols(out),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::collections::HashMap;

    struct Map(HashMap<String, f64>);
    impl Env for Map {
        fn get(&self, s: Symbol) -> Option<f64> {
            self.0.get(&s.to_string()).copied()
        }
    }

    fn env(pairs: &[(&str, f64)]) -> Map {
        Map(pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }

    #[test]
    fn symbols_round_trip() {
        for s in ["x0_2", "xf_3", "xmin_2", "xmax_4", "umin", "umax", "t15"] {
            assert_eq!(Symbol::parse(s).unwrap().to_string(), s);
        }
        for s in ["x0_", "t0", "y", "x0_02", "tt"] {
            assert!(Symbol::parse(s).is_err(), "{s}");
        }
    }

    #[test]
    fn constants() {
        assert_eq!(Constant::parse("7/2").unwrap().value(), 3.5);
        assert_eq!(Constant::parse("-2").unwrap().value(), -2.0);
        for bad in ["", "1/0", "1.5", "a", "2/-3", "-"] {
            assert!(Constant::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn evaluates_all_operators() {
        let tree = json!([
            "+",
            ["*", "-2", "umax", "xf_2"],
            ["^", ["-", "xf_1", "x0_1"], 2],
            ["/", "t3", "2"],
            ["neg", "umin"]
        ]);
        let e = Expr::from_json(&tree).unwrap();
        let v = e
            .eval(&env(&[
                ("umax", 1.5),
                ("xf_2", 2.0),
                ("xf_1", 4.0),
                ("x0_1", 1.0),
                ("t3", 3.0),
                ("umin", -1.0),
            ]))
            .unwrap();
        assert_eq!(v, -6.0 + 9.0 + 1.5 + 1.0);
        assert_eq!(e.to_json(), tree);
    }

    #[test]
    fn unbound_symbol_is_reported() {
        let e = Expr::from_json(&json!(["*", "t1", "umax"])).unwrap();
        assert_eq!(e.eval(&env(&[("umax", 1.0)])), Err(Symbol::T(1)));
    }

    #[test]
    fn scale_tracks_cancellation() {
        let e = Expr::from_json(&json!([
            "+",
            ["*", "1000", "umax"],
            ["*", "-1000", "umax"],
            "1"
        ]))
        .unwrap();
        let (v, s) = e.eval_with_scale(&env(&[("umax", 1.0)])).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(s, 1000.0);
    }

    #[test]
    fn rejects_malformed_trees() {
        for bad in [
            json!(["%", "1"]),
            json!(["-", "1"]),
            json!(["^", "x0_2", -1]),
            json!(3),
            json!([]),
            json!(["+"]),
        ] {
            assert!(Expr::from_json(&bad).is_err(), "{bad}");
        }
    }
}
