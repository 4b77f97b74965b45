use std::collections::BTreeMap;

use super::{BinaryOp, Expr, UnaryOp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lx.next()?;
            let end = tok == Tok::End;
            out.push((tok, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn next(&mut self) -> Result<(Tok, usize)> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || c == b'.' {
            return self.number(start);
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self.pos < bytes.len()
                && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_')
            {
                self.pos += 1;
            }
            return Ok((Tok::Ident(self.src[start..self.pos].to_string()), start));
        }
        if b"+-*/^(),".contains(&c) {
            self.pos += 1;
            return Ok((Tok::Op(c as char), start));
        }
        let ch = self.src[start..].chars().next().unwrap_or('?');
        Err(Error::Syntax {
            offset: start,
            message: format!("unexpected character `{ch}`"),
        })
    }

    fn number(&mut self, start: usize) -> Result<(Tok, usize)> {
        let bytes = self.src.as_bytes();
        let digits = |pos: &mut usize| {
            let s = *pos;
            while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
                *pos += 1;
            }
            *pos - s
        };
        let mut n = digits(&mut self.pos);
        if self.pos < bytes.len() && bytes[self.pos] == b'.' {
            self.pos += 1;
            n += digits(&mut self.pos);
        }
        if n == 0 {
            return Err(Error::Syntax {
                offset: start,
                message: "malformed number".into(),
            });
        }
        if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < bytes.len() && (bytes[self.pos] == b'+' || bytes[self.pos] == b'-') {
                self.pos += 1;
            }
            if digits(&mut self.pos) == 0 {
                self.pos = save;
                return Err(Error::Syntax {
                    offset: save,
                    message: "malformed exponent".into(),
                });
            }
        }
        let text = &self.src[start..self.pos];
        let v: f64 = text.parse().map_err(|_| Error::Syntax {
            offset: start,
            message: format!("malformed number `{text}`"),
        })?;
        Ok((Tok::Num(v), start))
    }
}

pub(super) struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    dimension: usize,
    params: &'a BTreeMap<String, f64>,
}

impl<'a> Parser<'a> {
    pub(super) fn new(
        src: &str,
        dimension: usize,
        params: &'a BTreeMap<String, f64>,
    ) -> Result<Self> {
        Ok(Self {
            toks: Lexer::tokens(src)?,
            pos: 0,
            dimension,
            params,
        })
    }

    pub(super) fn parse(mut self) -> Result<Expr> {
        let e = self.sum()?;
        match self.peek() {
            Tok::End => Ok(e),
            t => Err(self.unexpected(&t.clone())),
        }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if t != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, t: &Tok) -> Error {
        let what = match t {
            Tok::Num(v) => format!("unexpected number {v}"),
            Tok::Ident(s) => format!("unexpected identifier `{s}`"),
            Tok::Op(c) => format!("unexpected `{c}`"),
            Tok::End => "unexpected end of input".to_string(),
        };
        Error::Syntax {
            offset: self.offset(),
            message: what,
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if *self.peek() == Tok::Op(c) {
            self.bump();
            Ok(())
        } else {
            let t = self.peek().clone();
            Err(match t {
                Tok::End => Error::Syntax {
                    offset: self.offset(),
                    message: format!("expected `{c}` before end of input"),
                },
                _ => Error::Syntax {
                    offset: self.offset(),
                    message: format!("expected `{c}`"),
                },
            })
        }
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinaryOp::Add,
                Tok::Op('-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinaryOp::Mul,
                Tok::Op('/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    // Unary minus binds looser than `^`, so `-x^2` is `-(x^2)`.
    fn unary(&mut self) -> Result<Expr> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        if *self.peek() == Tok::Op('+') {
            self.bump();
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            // right-associative; the exponent may carry its own sign
            let exp = self.unary()?;
            return Ok(Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let at = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::Op('(') => {
                self.bump();
                let e = self.sum()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                self.identifier(name, at)
            }
            t => Err(self.unexpected(&t)),
        }
    }

    fn identifier(&mut self, name: String, at: usize) -> Result<Expr> {
        if *self.peek() == Tok::Op('(') {
            let op = UnaryOp::from_name(&name).ok_or(Error::UnknownIdentifier {
                name: name.clone(),
                offset: at,
            })?;
            self.bump();
            let mut args = Vec::new();
            if *self.peek() != Tok::Op(')') {
                args.push(self.sum()?);
                while *self.peek() == Tok::Op(',') {
                    self.bump();
                    args.push(self.sum()?);
                }
            }
            self.expect(')')?;
            if args.len() != 1 {
                return Err(Error::Arity {
                    name,
                    expected: 1,
                    found: args.len(),
                });
            }
            return Ok(Expr::Unary(op, Box::new(args.pop().unwrap())));
        }
        if UnaryOp::from_name(&name).is_some() {
            return Err(Error::Syntax {
                offset: self.offset(),
                message: format!("expected `(` after function `{name}`"),
            });
        }
        if name == "t" {
            return Ok(Expr::Time);
        }
        if let Some(idx) = name.strip_prefix('x').and_then(|s| {
            (!s.is_empty() && !s.starts_with('0'))
                .then(|| s.parse::<usize>().ok())
                .flatten()
        }) {
            if idx >= 1 && idx <= self.dimension {
                return Ok(Expr::State(idx - 1));
            }
        }
        if let Some(&v) = self.params.get(&name) {
            return Ok(Expr::Const(v));
        }
        if name == "pi" {
            return Ok(Expr::Const(std::f64::consts::PI));
        }
        Err(Error::UnknownIdentifier { name, offset: at })
    }
}
