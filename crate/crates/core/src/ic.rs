//! Initial-condition registry and a small arithmetic-expression parser.
//!
//! Presets cover every built-in experiment. Models evolved through the
//! antiderivative (the Riemann-form equations) take the derivative field
//! u_0 = q_0' as solver input; those presets carry the primitive q_0
//! alongside so the integration constant can be pinned at x = -L. The
//! derivative is always analytic, never spectral differentiation of the
//! aperiodic primitive.
//!
//! The expression language exists so configs can state custom initial data
//! without arbitrary code: numbers, x, i, + - * / ^integer, parentheses,
//! and the functions exp, sech, cosh, sinh, tanh, sin, cos, sqrt.

use crate::spectral::Grid;
use num_complex::Complex64;
use std::fmt;
use thiserror::Error;

/// A named initial condition: the field handed to the solver and, for
/// antiderivative-evolved models, the primitive it differentiates.
#[derive(Clone, Copy)]
pub struct IcPreset {
    pub name: &'static str,
    /// Physical samples fed to the solver.
    pub field: fn(f64) -> Complex64,
    /// Primitive q_0 with field = q_0'; its value at -L is the
    /// antiderivative integration constant.
    pub primitive: Option<fn(f64) -> f64>,
}

impl fmt::Debug for IcPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IcPreset")
            .field("name", &self.name)
            .field("has_primitive", &self.primitive.is_some())
            .finish()
    }
}

impl IcPreset {
    pub fn sample(&self, grid: &Grid) -> Vec<Complex64> {
        grid.points().iter().map(|&x| (self.field)(x)).collect()
    }

    /// Integration constant for antiderivative-evolved models: the
    /// primitive evaluated at the left edge.
    pub fn primitive_left(&self, half_width: f64) -> Option<f64> {
        self.primitive.map(|p| p(-half_width))
    }
}

fn real(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

fn gaussian_13(x: f64) -> Complex64 {
    real(1.3 * (-x * x).exp())
}

fn gaussian_unit(x: f64) -> Complex64 {
    real((-x * x).exp())
}

fn gaussian_6(x: f64) -> Complex64 {
    real(6.0 * (-x * x).exp())
}

fn kdv_soliton(x: f64) -> Complex64 {
    let c = x.cosh();
    real(2.0 / (c * c))
}

fn nls_packet(x: f64) -> Complex64 {
    Complex64::new(0.0, x).exp() * ((1.0 + x) * (-0.7 * x * x).exp())
}

fn nls_soliton(x: f64) -> Complex64 {
    Complex64::new(0.0, x).exp() / x.cosh()
}

fn logistic_primitive(x: f64) -> f64 {
    1.0 / (1.0 + (10.0 * x).exp())
}

fn logistic_shift_primitive(x: f64) -> f64 {
    logistic_primitive(x) - 1.0
}

// d/dx 1/(1 + e^{10x}) in the overflow-safe sech form.
fn logistic_derivative(x: f64) -> Complex64 {
    let c = (5.0 * x).cosh();
    real(-2.5 / (c * c))
}

fn sech2_primitive(x: f64) -> f64 {
    let c = x.cosh();
    -1.0 / (c * c)
}

fn sech2_derivative(x: f64) -> Complex64 {
    let c = x.cosh();
    real(2.0 * x.tanh() / (c * c))
}

fn shelf_primitive(x: f64) -> f64 {
    // Rising step of the opposite orientation plus a Gaussian bump at -5;
    // 1 - 1/(1 + e^{-10x}) = 1/(1 + e^{10x}).
    logistic_primitive(x) + (-10.0 * (x + 5.0) * (x + 5.0)).exp()
}

fn shelf_derivative(x: f64) -> Complex64 {
    let s = x + 5.0;
    logistic_derivative(x) + real(-20.0 * s * (-10.0 * s * s).exp())
}

/// Every built-in initial condition. Derivative-form entries (those with a
/// primitive) are solver inputs for the antiderivative-evolved models.
pub const IC_PRESETS: &[IcPreset] = &[
    IcPreset {
        name: "gaussian-1.3",
        field: gaussian_13,
        primitive: None,
    },
    IcPreset {
        name: "gaussian",
        field: gaussian_unit,
        primitive: None,
    },
    IcPreset {
        name: "two-soliton-gaussian",
        field: gaussian_6,
        primitive: None,
    },
    IcPreset {
        name: "kdv-soliton",
        field: kdv_soliton,
        primitive: None,
    },
    IcPreset {
        name: "nls-packet",
        field: nls_packet,
        primitive: None,
    },
    IcPreset {
        name: "nls-soliton",
        field: nls_soliton,
        primitive: None,
    },
    IcPreset {
        name: "riemann-logistic",
        field: logistic_derivative,
        primitive: Some(logistic_primitive),
    },
    IcPreset {
        name: "kawahara-logistic",
        field: logistic_derivative,
        primitive: Some(logistic_shift_primitive),
    },
    IcPreset {
        name: "riemann-sech",
        field: sech2_derivative,
        primitive: Some(sech2_primitive),
    },
    IcPreset {
        name: "riemann-shelf",
        field: shelf_derivative,
        primitive: Some(shelf_primitive),
    },
];

pub fn ic_by_name(name: &str) -> Option<&'static IcPreset> {
    IC_PRESETS.iter().find(|p| p.name == name)
}

#[derive(Debug, Error, PartialEq)]
#[error("expression error at byte {pos}: {msg}")]
pub struct ExprError {
    pub pos: usize,
    pub msg: String,
}

fn err<T>(pos: usize, msg: impl Into<String>) -> Result<T, ExprError> {
    Err(ExprError {
        pos,
        msg: msg.into(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Func {
    Exp,
    Sech,
    Cosh,
    Sinh,
    Tanh,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    fn eval(self, z: Complex64) -> Complex64 {
        match self {
            Func::Exp => z.exp(),
            Func::Sech => z.cosh().finv(),
            Func::Cosh => z.cosh(),
            Func::Sinh => z.sinh(),
            Func::Tanh => z.tanh(),
            Func::Sin => z.sin(),
            Func::Cos => z.cos(),
            Func::Sqrt => z.sqrt(),
        }
    }
}

#[derive(Debug)]
enum Node {
    Num(f64),
    X,
    I,
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Neg(Box<Node>),
    Pow(Box<Node>, i32),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval(&self, x: f64) -> Complex64 {
        match self {
            Node::Num(v) => Complex64::new(*v, 0.0),
            Node::X => Complex64::new(x, 0.0),
            Node::I => Complex64::new(0.0, 1.0),
            Node::Add(a, b) => a.eval(x) + b.eval(x),
            Node::Sub(a, b) => a.eval(x) - b.eval(x),
            Node::Mul(a, b) => a.eval(x) * b.eval(x),
            Node::Div(a, b) => a.eval(x) / b.eval(x),
            Node::Neg(a) => -a.eval(x),
            Node::Pow(a, n) => a.eval(x).powi(*n),
            Node::Call(f, a) => f.eval(a.eval(x)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push((i, Tok::Plus));
                i += 1;
            }
            '-' => {
                out.push((i, Tok::Minus));
                i += 1;
            }
            '*' => {
                out.push((i, Tok::Star));
                i += 1;
            }
            '/' => {
                out.push((i, Tok::Slash));
                i += 1;
            }
            '^' => {
                out.push((i, Tok::Caret));
                i += 1;
            }
            '(' => {
                out.push((i, Tok::LParen));
                i += 1;
            }
            ')' => {
                out.push((i, Tok::RParen));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // Exponent suffix: e or E, optional sign, digits.
                if i < bytes.len()
                    && (bytes[i] == b'e' || bytes[i] == b'E')
                    && i + 1 < bytes.len()
                    && (bytes[i + 1].is_ascii_digit()
                        || ((bytes[i + 1] == b'+' || bytes[i + 1] == b'-')
                            && i + 2 < bytes.len()
                            && bytes[i + 2].is_ascii_digit()))
                {
                    i += 2;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let text = &src[start..i];
                match text.parse::<f64>() {
                    Ok(v) => out.push((start, Tok::Num(v))),
                    Err(_) => return err(start, format!("bad number '{text}'")),
                }
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push((start, Tok::Ident(src[start..i].to_string())));
            }
            other => return err(i, format!("unexpected character '{other}'")),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [(usize, Tok)],
    pos: usize,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|(p, _)| *p)
            .unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<(), ExprError> {
        let at = self.here();
        match self.bump() {
            Some(ref t) if t == want => Ok(()),
            Some(t) => err(at, format!("expected {what}, found {t:?}")),
            None => err(at, format!("expected {what}, found end of input")),
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.bump();
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.bump();
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.bump();
            let neg = if matches!(self.peek(), Some(Tok::Minus)) {
                self.bump();
                true
            } else {
                false
            };
            let at = self.here();
            match self.bump() {
                Some(Tok::Num(v)) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => {
                    let n = v as i32;
                    return Ok(Node::Pow(Box::new(base), if neg { -n } else { n }));
                }
                Some(t) => return err(at, format!("exponent must be an integer, found {t:?}")),
                None => return err(at, "exponent must be an integer, found end of input"),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let at = self.here();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Node::Num(v)),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(&Tok::RParen, "')'")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "x" => Ok(Node::X),
                "i" => Ok(Node::I),
                other => {
                    let func = match other {
                        "exp" => Func::Exp,
                        "sech" => Func::Sech,
                        "cosh" => Func::Cosh,
                        "sinh" => Func::Sinh,
                        "tanh" => Func::Tanh,
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        "sqrt" => Func::Sqrt,
                        _ => return err(at, format!("unknown name '{other}'")),
                    };
                    self.expect(&Tok::LParen, "'(' after function name")?;
                    let arg = self.expr()?;
                    self.expect(&Tok::RParen, "')'")?;
                    Ok(Node::Call(func, Box::new(arg)))
                }
            },
            Some(t) => err(at, format!("expected a value, found {t:?}")),
            None => err(at, "expected a value, found end of input"),
        }
    }
}

/// A parsed initial-condition expression in the variable x.
#[derive(Debug)]
pub struct Expression {
    src: String,
    root: Node,
}

impl Expression {
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let toks = lex(src)?;
        let mut p = Parser {
            toks: &toks,
            pos: 0,
            end: src.len(),
        };
        let root = p.expr()?;
        if p.pos < toks.len() {
            return err(p.here(), "trailing input after expression");
        }
        Ok(Expression {
            src: src.to_string(),
            root,
        })
    }

    pub fn src(&self) -> &str {
        &self.src
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        self.root.eval(x)
    }

    pub fn sample(&self, grid: &Grid) -> Vec<Complex64> {
        grid.points().iter().map(|&x| self.eval(x)).collect()
    }
}
