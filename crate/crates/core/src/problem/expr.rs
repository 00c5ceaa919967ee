//! Coefficient expressions: a small recursive-descent parser, a fully
//! parenthesised printer and evaluation over any [`Real`] scalar.
//!
//! Grammar (`^` binds tightest and associates to the right):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | name | func '(' sum ')' | '(' sum ')'
//! ```

use std::fmt;
use std::sync::Arc;

use super::dual::{Dual, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Tanh,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn uses_variables(&self) -> bool {
        match self {
            Node::Num(_) => false,
            Node::Var(_) => true,
            Node::Neg(a) | Node::Call(_, a) => a.uses_variables(),
            Node::Bin(_, a, b) => a.uses_variables() || b.uses_variables(),
        }
    }

    fn uses(&self, var: usize) -> bool {
        match self {
            Node::Num(_) => false,
            Node::Var(v) => *v == var,
            Node::Neg(a) | Node::Call(_, a) => a.uses(var),
            Node::Bin(_, a, b) => a.uses(var) || b.uses(var),
        }
    }
}

/// A parsed expression together with its declared variable list.
#[derive(Clone, PartialEq)]
pub struct Expr {
    root: Arc<Node>,
    vars: Arc<[String]>,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root, &self.vars)
    }
}

struct Shown<'a>(&'a Node, &'a [String]);

impl fmt::Display for Shown<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, self.0, self.1)
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, node: &Node, vars: &[String]) -> fmt::Result {
    match node {
        Node::Num(v) => write!(f, "{v:?}"),
        Node::Var(i) => write!(f, "{}", vars[*i]),
        Node::Neg(a) => write!(f, "(-{})", Shown(a, vars)),
        Node::Bin(op, a, b) => write!(f, "({} {} {})", Shown(a, vars), op.symbol(), Shown(b, vars)),
        Node::Call(func, a) => write!(f, "{}({})", func.name(), Shown(a, vars)),
    }
}

impl Expr {
    /// Parses `src`; every identifier that is not a function name or `pi`
    /// must appear in `variables`.
    pub fn parse(src: &str, variables: &[&str]) -> Result<Self> {
        let vars: Arc<[String]> = variables.iter().map(|s| s.to_string()).collect();
        let mut parser = Parser {
            src: src.as_bytes(),
            pos: 0,
            vars: &vars,
        };
        parser.skip_ws();
        if parser.at_end() {
            return Err(Error::Syntax {
                pos: 0,
                msg: "empty expression".into(),
            });
        }
        let root = parser.sum()?;
        parser.skip_ws();
        if !parser.at_end() {
            return Err(parser.error(format!("unexpected `{}`", parser.peek_char())));
        }
        Ok(Self {
            root: Arc::new(root),
            vars,
        })
    }

    /// A constant expression over the given variables.
    pub fn constant(value: f64, variables: &[&str]) -> Self {
        Self {
            root: Arc::new(Node::Num(value)),
            vars: variables.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn is_constant(&self) -> bool {
        !self.root.uses_variables()
    }

    /// Whether the expression syntactically references variable `var`.
    pub fn depends_on(&self, var: usize) -> bool {
        self.root.uses(var)
    }

    /// The same tree re-bound to a different (compatible) variable list.
    pub fn with_variables(&self, variables: &[&str]) -> Result<Self> {
        Expr::parse(&self.to_string(), variables)
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        self.eval_real(point)
    }

    /// Evaluation over any scalar implementing [`Real`].
    pub fn eval_real<T: Real>(&self, point: &[T]) -> Result<T> {
        if point.len() != self.vars.len() {
            return Err(Error::Shape(format!(
                "expression over {} variables evaluated at {} values",
                self.vars.len(),
                point.len()
            )));
        }
        eval_node(&self.root, point, &self.vars)
    }

    /// Value and the partial derivatives with respect to the variables listed
    /// in `wrt`, by forward-mode dual numbers.
    pub fn eval_partials(&self, point: &[f64], wrt: &[usize]) -> Result<(f64, Vec<f64>)> {
        let mut value = None;
        let mut partials = Vec::with_capacity(wrt.len());
        let mut seeded: Vec<Dual<f64>> = point.iter().map(|&p| Dual::constant(p)).collect();
        for &w in wrt {
            if w >= point.len() {
                return Err(Error::Shape(format!("no variable with index {w}")));
            }
            seeded[w].eps = 1.0;
            let d = self.eval_real(&seeded)?;
            seeded[w].eps = 0.0;
            value.get_or_insert(d.re);
            partials.push(d.eps);
        }
        let value = match value {
            Some(v) => v,
            None => self.eval(point)?,
        };
        Ok((value, partials))
    }

    /// Value and single partial derivative with respect to variable `w`.
    pub fn eval_partial(&self, point: &[f64], w: usize) -> Result<(f64, f64)> {
        let mut seeded: Vec<Dual<f64>> = point.iter().map(|&p| Dual::constant(p)).collect();
        seeded[w].eps = 1.0;
        let d = self.eval_real(&seeded)?;
        Ok((d.re, d.eps))
    }
}

fn domain_error(node: &Node, vars: &[String], msg: &str) -> Error {
    Error::ExprDomain {
        subexpr: Shown(node, vars).to_string(),
        msg: msg.into(),
    }
}

fn eval_node<T: Real>(node: &Node, point: &[T], vars: &[String]) -> Result<T> {
    let out = match node {
        Node::Num(v) => return Ok(T::cst(*v)),
        Node::Var(i) => return Ok(point[*i]),
        Node::Neg(a) => return Ok(-eval_node(a, point, vars)?),
        Node::Bin(op, a, b) => {
            let l = eval_node(a, point, vars)?;
            match op {
                BinOp::Add => l + eval_node(b, point, vars)?,
                BinOp::Sub => l - eval_node(b, point, vars)?,
                BinOp::Mul => l * eval_node(b, point, vars)?,
                BinOp::Div => {
                    let r = eval_node(b, point, vars)?;
                    if r.value() == 0.0 {
                        return Err(domain_error(node, vars, "division by zero"));
                    }
                    l / r
                }
                BinOp::Pow => eval_pow(node, l, b, point, vars)?,
            }
        }
        Node::Call(func, a) => {
            let x = eval_node(a, point, vars)?;
            match func {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Exp => x.exp(),
                Func::Tanh => x.tanh(),
                Func::Abs => x.abs(),
                Func::Ln => {
                    if x.value() <= 0.0 {
                        return Err(domain_error(node, vars, "logarithm of a nonpositive number"));
                    }
                    x.ln()
                }
            }
        }
    };
    if !out.all_finite() {
        return Err(domain_error(node, vars, "non-finite result"));
    }
    Ok(out)
}

fn eval_pow<T: Real>(node: &Node, base: T, exp_node: &Node, point: &[T], vars: &[String]) -> Result<T> {
    let e = eval_node(exp_node, point, vars)?;
    let ev = e.value();
    if !exp_node.uses_variables() {
        if ev == ev.trunc() && ev.abs() <= i32::MAX as f64 {
            if ev < 0.0 && base.value() == 0.0 {
                return Err(domain_error(node, vars, "division by zero"));
            }
            return Ok(base.powi(ev as i32));
        }
        if base.value() < 0.0 {
            return Err(domain_error(node, vars, "non-integer power of a negative base"));
        }
        return Ok(base.powc(ev));
    }
    if base.value() <= 0.0 {
        return Err(domain_error(node, vars, "variable exponent requires a positive base"));
    }
    Ok((e * base.ln()).exp())
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    vars: &'a [String],
}

impl Parser<'_> {
    fn error(&self, msg: String) -> Error {
        Error::Syntax { pos: self.pos, msg }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek_char(&self) -> char {
        std::str::from_utf8(&self.src[self.pos..])
            .ok()
            .and_then(|s| s.chars().next())
            .unwrap_or('?')
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<Node> {
        let mut lhs = self.product()?;
        loop {
            let op = if self.eat(b'+') {
                BinOp::Add
            } else if self.eat(b'-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.product()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat(b'*') {
                BinOp::Mul
            } else if self.eat(b'/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if self.eat(b'^') {
            let exponent = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unexpected end of input".into())),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.sum()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`".into()));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.name(),
            Some(_) => Err(self.error(format!("unexpected `{}`", self.peek_char()))),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == b'.') {
            self.pos += 1;
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Node::Num).map_err(|_| Error::Syntax {
            pos: start,
            msg: format!("malformed number `{text}`"),
        })
    }

    fn name(&mut self) -> Result<Node> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        if let Some(i) = self.vars.iter().position(|v| v == name) {
            return Ok(Node::Var(i));
        }
        if let Some(func) = Func::from_name(name) {
            if !self.eat(b'(') {
                return Err(self.error(format!("expected `(` after `{name}`")));
            }
            let arg = self.sum()?;
            if !self.eat(b')') {
                return Err(self.error("expected `)`".into()));
            }
            return Ok(Node::Call(func, Box::new(arg)));
        }
        if name == "pi" {
            return Ok(Node::Num(std::f64::consts::PI));
        }
        Err(Error::UndeclaredVariable {
            name: name.to_string(),
            pos: start,
        })
    }
}
