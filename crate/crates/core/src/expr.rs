//! Math expressions over named variables, used for boundary data, sources,
//! initial conditions and exact solutions given as strings in input files.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?          // right associative
//! primary := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Identifiers are bound late: parsing never fails on an unknown name, only
//! evaluation does. `pi` is a builtin constant.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

/// Expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Pi,
    Var(String),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    fn precedence(&self) -> u8 {
        match self {
            Node::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Node::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Node::Neg(_) => 3,
            Node::Bin(BinOp::Pow, ..) => 4,
            _ => 5,
        }
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Node::Var(name) => {
                if !out.iter().any(|n| n == name) {
                    out.push(name.clone());
                }
            }
            Node::Neg(a) => a.collect_vars(out),
            Node::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Node::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
            Node::Num(_) | Node::Pi => {}
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, node: &Node, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({node})")
    } else {
        write!(f, "{node}")
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(v) => write!(f, "{v:?}"),
            Node::Pi => write!(f, "pi"),
            Node::Var(name) => write!(f, "{name}"),
            Node::Neg(a) => {
                write!(f, "-")?;
                write_child(f, a, a.precedence() < 3)
            }
            Node::Bin(op, a, b) => {
                let p = self.precedence();
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                if *op == BinOp::Pow {
                    write_child(f, a, a.precedence() <= p)?;
                    write!(f, "^")?;
                    write_child(f, b, b.precedence() < 3)
                } else {
                    write_child(f, a, a.precedence() < p)?;
                    write!(f, "{sym}")?;
                    write_child(f, b, b.precedence() <= p)
                }
            }
            Node::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn next(&mut self) -> Result<(Tok, usize)> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok((Tok::End, start + 1));
        };
        if c.is_ascii_digit() || c == b'.' {
            let mut end = self.pos;
            while end < self.src.len() && (self.src[end].is_ascii_digit() || self.src[end] == b'.') {
                end += 1;
            }
            if end < self.src.len() && (self.src[end] == b'e' || self.src[end] == b'E') {
                let mut k = end + 1;
                if k < self.src.len() && (self.src[k] == b'+' || self.src[k] == b'-') {
                    k += 1;
                }
                if k < self.src.len() && self.src[k].is_ascii_digit() {
                    while k < self.src.len() && self.src[k].is_ascii_digit() {
                        k += 1;
                    }
                    end = k;
                }
            }
            let text = std::str::from_utf8(&self.src[start..end]).unwrap();
            let value = text.parse::<f64>().map_err(|_| Error::Syntax {
                column: start + 1,
                message: format!("malformed number '{text}'"),
            })?;
            self.pos = end;
            return Ok((Tok::Num(value), start + 1));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut end = self.pos;
            while end < self.src.len() && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_') {
                end += 1;
            }
            let text = std::str::from_utf8(&self.src[start..end]).unwrap().to_string();
            self.pos = end;
            return Ok((Tok::Ident(text), start + 1));
        }
        if b"+-*/^(),".contains(&c) {
            self.pos += 1;
            return Ok((Tok::Op(c as char), start + 1));
        }
        Err(Error::Syntax { column: start + 1, message: format!("unexpected character '{}'", c as char) })
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    col: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self> {
        let mut lexer = Lexer { src: src.as_bytes(), pos: 0 };
        let (tok, col) = lexer.next()?;
        Ok(Parser { lexer, tok, col })
    }

    fn bump(&mut self) -> Result<()> {
        let (tok, col) = self.lexer.next()?;
        self.tok = tok;
        self.col = col;
        Ok(())
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax { column: self.col, message: message.into() })
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.tok == Tok::Op(c) {
            self.bump()
        } else {
            self.error(format!("expected '{c}'"))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        match self.tok {
            Tok::Op('-') => {
                self.bump()?;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Tok::Op('+') => {
                self.bump()?;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if self.tok == Tok::Op('^') {
            self.bump()?;
            let exponent = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Node::Num(v))
            }
            Tok::Ident(name) => {
                let name_col = self.col;
                self.bump()?;
                if self.tok == Tok::Op('(') {
                    let Some(func) = Func::from_name(&name) else {
                        return Err(Error::Syntax { column: name_col, message: format!("unknown function '{name}'") });
                    };
                    self.bump()?;
                    let mut args = vec![self.expr()?];
                    while self.tok == Tok::Op(',') {
                        self.bump()?;
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    if args.len() != func.arity() {
                        return Err(Error::Syntax {
                            column: name_col,
                            message: format!("'{name}' takes {} argument(s), got {}", func.arity(), args.len()),
                        });
                    }
                    Ok(Node::Call(func, args))
                } else if name == "pi" {
                    Ok(Node::Pi)
                } else {
                    Ok(Node::Var(name))
                }
            }
            Tok::Op('(') => {
                self.bump()?;
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Tok::End => self.error("unexpected end of expression"),
            Tok::Op(c) => self.error(format!("unexpected '{c}'")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Instr {
    Push(f64),
    Load(usize),
    Neg,
    Bin(BinOp),
    Call(Func),
}

fn compile(node: &Node, slot: &dyn Fn(&str) -> usize, out: &mut Vec<Instr>) {
    match node {
        Node::Num(v) => out.push(Instr::Push(*v)),
        Node::Pi => out.push(Instr::Push(std::f64::consts::PI)),
        Node::Var(name) => out.push(Instr::Load(slot(name))),
        Node::Neg(a) => {
            compile(a, slot, out);
            out.push(Instr::Neg);
        }
        Node::Bin(op, a, b) => {
            compile(a, slot, out);
            compile(b, slot, out);
            out.push(Instr::Bin(*op));
        }
        Node::Call(func, args) => {
            for a in args {
                compile(a, slot, out);
            }
            out.push(Instr::Call(*func));
        }
    }
}

fn run(program: &[Instr], args: &[f64], stack: &mut Vec<f64>) -> Result<f64> {
    stack.clear();
    for instr in program {
        match *instr {
            Instr::Push(v) => stack.push(v),
            Instr::Load(i) => stack.push(args[i]),
            Instr::Neg => {
                let a = stack.pop().unwrap();
                stack.push(-a);
            }
            Instr::Bin(op) => {
                let b = stack.pop().unwrap();
                let a = stack.pop().unwrap();
                stack.push(match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(Error::Eval(format!("division by zero ({a} / 0)")));
                        }
                        a / b
                    }
                    BinOp::Pow => a.powf(b),
                });
            }
            Instr::Call(func) => {
                let v = match func {
                    Func::Min | Func::Max => {
                        let b = stack.pop().unwrap();
                        let a = stack.pop().unwrap();
                        if func == Func::Min {
                            a.min(b)
                        } else {
                            a.max(b)
                        }
                    }
                    _ => {
                        let a = stack.pop().unwrap();
                        match func {
                            Func::Sin => a.sin(),
                            Func::Cos => a.cos(),
                            Func::Tan => a.tan(),
                            Func::Exp => a.exp(),
                            Func::Log => {
                                if a <= 0.0 {
                                    return Err(Error::Eval(format!("log of nonpositive operand {a}")));
                                }
                                a.ln()
                            }
                            Func::Sqrt => {
                                if a < 0.0 {
                                    return Err(Error::Eval(format!("sqrt of negative operand {a}")));
                                }
                                a.sqrt()
                            }
                            Func::Abs => a.abs(),
                            Func::Min | Func::Max => unreachable!(),
                        }
                    }
                };
                stack.push(v);
            }
        }
    }
    Ok(stack.pop().unwrap_or(0.0))
}

/// Lookup of variable values by name.
pub trait Env {
    fn lookup(&self, name: &str) -> Option<f64>;
}

impl Env for HashMap<String, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Env for HashMap<&str, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Env for [(&str, f64)] {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

impl<const N: usize> Env for [(&str, f64); N] {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.as_slice().lookup(name)
    }
}

/// A parsed expression. Immutable; evaluation with distinct environments may
/// run concurrently.
#[derive(Debug, Clone)]
pub struct Expr {
    source: String,
    root: Node,
    free: Vec<String>,
    program: Vec<Instr>,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut parser = Parser::new(src)?;
        let root = parser.expr()?;
        if parser.tok != Tok::End {
            return parser.error("unexpected trailing input");
        }
        let mut free = Vec::new();
        root.collect_vars(&mut free);
        let mut program = Vec::new();
        compile(&root, &|name| free.iter().position(|n| n == name).unwrap(), &mut program);
        Ok(Expr { source: src.to_string(), root, free, program })
    }

    /// A constant expression.
    pub fn constant(value: f64) -> Expr {
        Expr { source: format!("{value:?}"), root: Node::Num(value), free: Vec::new(), program: vec![Instr::Push(value)] }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn tree(&self) -> &Node {
        &self.root
    }

    /// Free variables in order of first appearance.
    pub fn free_variables(&self) -> &[String] {
        &self.free
    }

    pub fn eval<E: Env + ?Sized>(&self, env: &E) -> Result<f64> {
        let mut args = Vec::with_capacity(self.free.len());
        for name in &self.free {
            match env.lookup(name) {
                Some(v) => args.push(v),
                None => return Err(Error::Eval(format!("unbound variable '{name}' in '{}'", self.source))),
            }
        }
        run(&self.program, &args, &mut Vec::with_capacity(8))
    }

    /// Resolve every free variable to a position in `names`, producing a
    /// program that evaluates from a plain slice of values.
    pub fn bind(&self, names: &[&str]) -> Result<BoundExpr> {
        for name in &self.free {
            if !names.contains(&name.as_str()) {
                return Err(Error::Eval(format!(
                    "unbound variable '{name}' in '{}' (available: {})",
                    self.source,
                    names.join(", ")
                )));
            }
        }
        let mut program = Vec::new();
        compile(&self.root, &|name| names.iter().position(|n| *n == name).unwrap(), &mut program);
        Ok(BoundExpr { source: self.source.clone(), program, arity: names.len() })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

impl std::str::FromStr for Expr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Expr> {
        Expr::parse(s)
    }
}

/// An expression whose variables have been assigned slots.
#[derive(Debug, Clone)]
pub struct BoundExpr {
    source: String,
    program: Vec<Instr>,
    arity: usize,
}

impl BoundExpr {
    pub fn eval(&self, args: &[f64]) -> Result<f64> {
        debug_assert_eq!(args.len(), self.arity);
        run(&self.program, args, &mut Vec::with_capacity(8))
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

/// A scalar function of `(x, y, t)` plus optional named parameters, as used
/// for boundary values and sources.
#[derive(Debug, Clone)]
pub struct SpaceTimeFn {
    expr: BoundExpr,
    params: Vec<String>,
}

impl SpaceTimeFn {
    pub fn parse(src: &str, params: &[&str]) -> Result<SpaceTimeFn> {
        let mut names = vec!["x", "y", "t"];
        names.extend_from_slice(params);
        let expr = Expr::parse(src)?.bind(&names)?;
        Ok(SpaceTimeFn { expr, params: params.iter().map(|s| s.to_string()).collect() })
    }

    pub fn constant(value: f64) -> SpaceTimeFn {
        SpaceTimeFn { expr: Expr::constant(value).bind(&["x", "y", "t"]).unwrap(), params: Vec::new() }
    }

    pub fn eval(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        debug_assert!(self.params.is_empty());
        self.expr.eval(&[x, y, t])
    }

    /// Evaluate with parameter values given in the order used at parse time.
    pub fn eval_with(&self, x: f64, y: f64, t: f64, params: &[f64]) -> Result<f64> {
        let mut args = [0.0; 8];
        args[0] = x;
        args[1] = y;
        args[2] = t;
        args[3..3 + params.len()].copy_from_slice(params);
        self.expr.eval(&args[..3 + self.params.len()])
    }

    pub fn source(&self) -> &str {
        self.expr.source()
    }
}
