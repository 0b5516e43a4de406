//! A small expression language for scalar fields in config files.
//!
//! Grammar (recursive descent, `^` binds tighter than unary minus,
//! left-associative `* /` and `+ -`):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | atom ('^' integer)?
//! atom   := number | ident | '(' expr ')' | ident '(' expr ')'
//! ```
//!
//! Identifiers are the variables `x y t x1 y1 x2 y2`, the constant `pi`,
//! and the functions `sin cos exp`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{GridScalar, GridSpec};

pub const VARIABLES: [&str; 7] = ["x", "y", "t", "x1", "y1", "x2", "y2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprAst {
    Number(f64),
    Var(String),
    Pi,
    Neg(Box<ExprAst>),
    Add(Box<ExprAst>, Box<ExprAst>),
    Sub(Box<ExprAst>, Box<ExprAst>),
    Mul(Box<ExprAst>, Box<ExprAst>),
    Div(Box<ExprAst>, Box<ExprAst>),
    Pow(Box<ExprAst>, i32),
    Call(Func, Box<ExprAst>),
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src, pos: 0 }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek_char() {
            if c.is_ascii_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn found(&self) -> String {
        match self.peek_char() {
            Some(c) => format!("`{c}`"),
            None => "end of input".into(),
        }
    }

    fn err(&self, expected: &str) -> Error {
        Error::Parse {
            offset: self.pos,
            expected: expected.into(),
            found: self.found(),
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek_char() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("`{c}`")))
        }
    }

    fn parse_expr(&mut self) -> Result<ExprAst> {
        let mut lhs = self.parse_term()?;
        loop {
            if self.eat('+') {
                let rhs = self.parse_term()?;
                lhs = ExprAst::Add(Box::new(lhs), Box::new(rhs));
            } else if self.eat('-') {
                let rhs = self.parse_term()?;
                lhs = ExprAst::Sub(Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn parse_term(&mut self) -> Result<ExprAst> {
        let mut lhs = self.parse_factor()?;
        loop {
            if self.eat('*') {
                let rhs = self.parse_factor()?;
                lhs = ExprAst::Mul(Box::new(lhs), Box::new(rhs));
            } else if self.eat('/') {
                let rhs = self.parse_factor()?;
                lhs = ExprAst::Div(Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn parse_factor(&mut self) -> Result<ExprAst> {
        if self.eat('-') {
            return Ok(ExprAst::Neg(Box::new(self.parse_factor()?)));
        }
        let atom = self.parse_atom()?;
        if self.eat('^') {
            let k = self.parse_integer()?;
            return Ok(ExprAst::Pow(Box::new(atom), k));
        }
        Ok(atom)
    }

    fn parse_integer(&mut self) -> Result<i32> {
        self.skip_ws();
        let start = self.pos;
        if self.peek_char() == Some('-') {
            self.pos += 1;
        }
        while matches!(self.peek_char(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start || (self.pos == start + 1 && &self.src[start..self.pos] == "-") {
            self.pos = start;
            return Err(self.err("integer exponent"));
        }
        self.src[start..self.pos]
            .parse::<i32>()
            .map_err(|_| self.err("integer exponent"))
    }

    fn parse_atom(&mut self) -> Result<ExprAst> {
        self.skip_ws();
        match self.peek_char() {
            Some(c) if c.is_ascii_digit() => self.parse_number(),
            Some(c) if c.is_ascii_alphabetic() => self.parse_ident(),
            Some('(') => {
                self.pos += 1;
                let inner = self.parse_expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            _ => Err(self.err("number, identifier, or `(`")),
        }
    }

    fn parse_number(&mut self) -> Result<ExprAst> {
        let start = self.pos;
        while matches!(self.peek_char(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.peek_char() == Some('.') {
            self.pos += 1;
            while matches!(self.peek_char(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if matches!(self.peek_char(), Some('e' | 'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek_char(), Some('+' | '-')) {
                self.pos += 1;
            }
            if matches!(self.peek_char(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek_char(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = mark; // `e` belonged to an identifier after all
            }
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .map(ExprAst::Number)
            .map_err(|_| self.err("number"))
    }

    fn parse_ident(&mut self) -> Result<ExprAst> {
        let start = self.pos;
        while matches!(self.peek_char(), Some(c) if c.is_ascii_alphanumeric()) {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        let func = match name {
            "pi" => return Ok(ExprAst::Pi),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            _ => None,
        };
        if let Some(f) = func {
            self.expect('(')?;
            let arg = self.parse_expr()?;
            self.expect(')')?;
            return Ok(ExprAst::Call(f, Box::new(arg)));
        }
        if VARIABLES.contains(&name) {
            return Ok(ExprAst::Var(name.to_string()));
        }
        self.pos = start;
        Err(self.err("variable (x, y, t, x1, y1, x2, y2), `pi`, or function (sin, cos, exp)"))
    }
}

/// Parse an expression string.
pub fn parse(src: &str) -> Result<ExprAst> {
    let mut p = Parser::new(src);
    let ast = p.parse_expr()?;
    p.skip_ws();
    if p.pos != src.len() {
        return Err(p.err("end of input or operator"));
    }
    Ok(ast)
}

/// Canonical fully parenthesized text; `parse(print(ast)) == ast`.
pub fn print(ast: &ExprAst) -> String {
    match ast {
        ExprAst::Number(v) => format!("{v}"),
        ExprAst::Var(n) => n.clone(),
        ExprAst::Pi => "pi".into(),
        ExprAst::Neg(a) => format!("(-{})", print(a)),
        ExprAst::Add(a, b) => format!("({} + {})", print(a), print(b)),
        ExprAst::Sub(a, b) => format!("({} - {})", print(a), print(b)),
        ExprAst::Mul(a, b) => format!("({} * {})", print(a), print(b)),
        ExprAst::Div(a, b) => format!("({} / {})", print(a), print(b)),
        ExprAst::Pow(a, k) => format!("({}^{})", print(a), k),
        ExprAst::Call(f, a) => format!("{}({})", f.name(), print(a)),
    }
}

/// Evaluate pointwise on the grid. Coordinates take values in `[0, period)`.
pub fn eval(ast: &ExprAst, grid: &GridSpec) -> Result<GridScalar> {
    match ast {
        ExprAst::Number(v) => Ok(GridScalar::constant(grid, Complex64::new(*v, 0.0))),
        ExprAst::Pi => Ok(GridScalar::constant(
            grid,
            Complex64::new(std::f64::consts::PI, 0.0),
        )),
        ExprAst::Var(name) => match grid.axis_of(name) {
            Some(axis) => Ok(GridScalar::coordinate(grid, axis)),
            None => Err(Error::UnknownVariable(name.clone())),
        },
        ExprAst::Neg(a) => Ok(eval(a, grid)?.neg()),
        ExprAst::Add(a, b) => Ok(eval(a, grid)?.add(&eval(b, grid)?)),
        ExprAst::Sub(a, b) => Ok(eval(a, grid)?.sub(&eval(b, grid)?)),
        ExprAst::Mul(a, b) => Ok(eval(a, grid)?.mul(&eval(b, grid)?)),
        ExprAst::Div(a, b) => eval(a, grid)?.div(&eval(b, grid)?),
        ExprAst::Pow(a, k) => {
            let base = eval(a, grid)?;
            if *k < 0 {
                let m = base.materialize();
                if m.periodic_values().iter().any(|v| v.norm_sqr() == 0.0) {
                    return Err(Error::DivisionByZero);
                }
            }
            Ok(base.map(|v| v.powi(*k)))
        }
        ExprAst::Call(f, a) => {
            let arg = eval(a, grid)?;
            Ok(match f {
                Func::Sin => arg.map(|v| v.sin()),
                Func::Cos => arg.map(|v| v.cos()),
                Func::Exp => arg.map(|v| v.exp()),
            })
        }
    }
}

/// Parse and evaluate in one step.
pub fn eval_str(src: &str, grid: &GridSpec) -> Result<GridScalar> {
    eval(&parse(src)?, grid)
}
