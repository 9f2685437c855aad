//! Arithmetic over table columns for the fit coordinates, e.g.
//! `log(var * n^0.5)` or `log(log(n))`.

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Column(String),
    Neg(Box<Expr>),
    Bin(char, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Ln,
    Log2,
    Log10,
    Exp,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "log" | "ln" => Func::Ln,
            "log2" => Func::Log2,
            "log10" => Func::Log10,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn syntax(src: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("expression '{src}': {msg}"))
}

fn lex(src: &str) -> CliResult<Vec<Tok>> {
    let b = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < b.len() && ((b[i] as char).is_ascii_digit() || b[i] == b'.') {
                i += 1;
            }
            // exponent part, only when followed by a digit or sign
            if i + 1 < b.len() && (b[i] == b'e' || b[i] == b'E') {
                let j = if b[i + 1] == b'+' || b[i + 1] == b'-' {
                    i + 2
                } else {
                    i + 1
                };
                if j < b.len() && (b[j] as char).is_ascii_digit() {
                    i = j;
                    while i < b.len() && (b[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            out.push(Tok::Num(
                text.parse().map_err(|_| syntax(src, format!("bad number '{text}'")))?,
            ));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < b.len() && ((b[i] as char).is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            out.push(Tok::Ident(src[start..i].to_string()));
        } else if "+-*/^()".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            return Err(syntax(src, format!("unexpected character '{c}'")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Tok>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek_op(&self) -> Option<char> {
        match self.toks.get(self.pos) {
            Some(Tok::Op(c)) => Some(*c),
            _ => None,
        }
    }

    fn expect(&mut self, c: char) -> CliResult<()> {
        if self.peek_op() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(syntax(self.src, format!("expected '{c}'")))
        }
    }

    fn sum(&mut self) -> CliResult<Expr> {
        let mut lhs = self.product()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.product()?));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> CliResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> CliResult<Expr> {
        if self.peek_op() == Some('-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    // right associative, binds tighter than unary minus on its left
    fn power(&mut self) -> CliResult<Expr> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            return Ok(Expr::Bin('^', Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> CliResult<Expr> {
        let tok = self.toks.get(self.pos).cloned();
        self.pos += 1;
        match tok {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::Op('(')) => {
                let e = self.sum()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if self.peek_op() == Some('(') {
                    let f =
                        Func::from_name(&name).ok_or_else(|| syntax(self.src, format!("unknown function '{name}'")))?;
                    self.pos += 1;
                    let arg = self.sum()?;
                    self.expect(')')?;
                    Ok(Expr::Call(f, Box::new(arg)))
                } else {
                    Ok(Expr::Column(name))
                }
            }
            _ => Err(syntax(self.src, "unexpected end or operator")),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> CliResult<Self> {
        let mut p = Parser {
            src,
            toks: lex(src)?,
            pos: 0,
        };
        let e = p.sum()?;
        if p.pos != p.toks.len() {
            return Err(syntax(src, "trailing input"));
        }
        Ok(e)
    }

    /// Column names referenced, other than the constants `pi` and `e`.
    pub fn columns(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit(&mut |name| {
            if !out.contains(&name) {
                out.push(name);
            }
        });
        out
    }

    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Num(_) => {}
            Expr::Column(c) => f(c),
            Expr::Neg(a) | Expr::Call(_, a) => a.visit(f),
            Expr::Bin(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    /// Evaluates with `lookup` resolving column names. Constants `pi` and `e`
    /// are used only when no column of that name exists.
    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> CliResult<f64> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Column(c) => match (lookup(c), c.as_str()) {
                (Some(v), _) => v,
                (None, "pi") => std::f64::consts::PI,
                (None, "e") => std::f64::consts::E,
                (None, _) => return Err(CliError::Config(format!("unknown column '{c}'"))),
            },
            Expr::Neg(a) => -a.eval(lookup)?,
            Expr::Bin(op, a, b) => {
                let (x, y) = (a.eval(lookup)?, b.eval(lookup)?);
                match op {
                    '+' => x + y,
                    '-' => x - y,
                    '*' => x * y,
                    '/' => x / y,
                    _ => x.powf(y),
                }
            }
            Expr::Call(f, a) => {
                let x = a.eval(lookup)?;
                match f {
                    Func::Ln | Func::Log2 | Func::Log10 if !(x > 0.0) => {
                        return Err(CliError::Config(format!("logarithm of non-positive value {x}")));
                    }
                    Func::Ln => x.ln(),
                    Func::Log2 => x.log2(),
                    Func::Log10 => x.log10(),
                    Func::Exp => x.exp(),
                    Func::Sqrt => x.sqrt(),
                    Func::Abs => x.abs(),
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str) -> f64 {
        Expr::parse(src).unwrap().eval(&|c| (c == "n").then_some(16.0)).unwrap()
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("1 + 2 * 3"), 7.0);
        assert_eq!(ev("-2^2"), -4.0);
        assert_eq!(ev("2^3^2"), 512.0);
        assert_eq!(ev("(1 + 2) * 3"), 9.0);
        assert_eq!(ev("n^0.5 / 2"), 2.0);
        assert_eq!(ev("1e-3 * 1000"), 1.0);
        assert!((ev("log(e)") - 1.0).abs() < 1e-15);
        assert_eq!(ev("log2(n)"), 4.0);
    }

    #[test]
    fn errors() {
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("foo(1)").is_err());
        assert!(Expr::parse("(1").is_err());
        assert!(Expr::parse("1 2").is_err());
        assert!(Expr::parse("log(-1)").unwrap().eval(&|_| None).is_err());
        assert!(Expr::parse("m").unwrap().eval(&|_| None).is_err());
    }

    #[test]
    fn referenced_columns() {
        assert_eq!(
            Expr::parse("log(var) - log(n) + var").unwrap().columns(),
            vec!["var", "n"]
        );
    }
}
