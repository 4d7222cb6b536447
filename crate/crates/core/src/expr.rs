//! Real-valued coefficient expressions in the variables `t` and `x`.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?          right associative
//! atom    := number | 't' | 'x' | 'pi' | func '(' sum ')' | '(' sum ')'
//! func    := sin | cos | exp | tanh | sqrt
//! number  := digits ['.' digits] [('e' | 'E') ['+' | '-'] digits]
//! ```
//!
//! All arithmetic is 64-bit floating point. Evaluation fails on division by
//! zero, square roots of negative numbers and any non-finite result.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier '{name}' at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("evaluation error at (t={t}, x={x}): {message}")]
    Eval { t: f64, x: f64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "tanh" => Some(Func::Tanh),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
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

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprAst {
    Number(f64),
    Var(Var),
    Pi,
    Neg(Box<ExprAst>),
    Binary(BinOp, Box<ExprAst>, Box<ExprAst>),
    Call(Func, Box<ExprAst>),
}

impl ExprAst {
    pub fn eval(&self, t: f64, x: f64) -> Result<f64, ExprError> {
        let v = self.eval_inner(t, x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(eval_error(t, x, "non-finite result"))
        }
    }

    fn eval_inner(&self, t: f64, x: f64) -> Result<f64, ExprError> {
        Ok(match self {
            ExprAst::Number(v) => *v,
            ExprAst::Var(Var::T) => t,
            ExprAst::Var(Var::X) => x,
            ExprAst::Pi => std::f64::consts::PI,
            ExprAst::Neg(e) => -e.eval_inner(t, x)?,
            ExprAst::Binary(op, a, b) => {
                let a = a.eval_inner(t, x)?;
                let b = b.eval_inner(t, x)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(eval_error(t, x, "division by zero"));
                        }
                        a / b
                    }
                    BinOp::Pow => a.powf(b),
                }
            }
            ExprAst::Call(f, arg) => {
                let a = arg.eval_inner(t, x)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Tanh => a.tanh(),
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(eval_error(t, x, "square root of a negative number"));
                        }
                        a.sqrt()
                    }
                }
            }
        })
    }

    pub fn uses(&self, var: Var) -> bool {
        match self {
            ExprAst::Number(_) | ExprAst::Pi => false,
            ExprAst::Var(v) => *v == var,
            ExprAst::Neg(e) | ExprAst::Call(_, e) => e.uses(var),
            ExprAst::Binary(_, a, b) => a.uses(var) || b.uses(var),
        }
    }

    /// Binding strength of the outermost node, used to decide parentheses.
    fn precedence(&self) -> u8 {
        match self {
            ExprAst::Binary(op, _, _) => op.precedence(),
            ExprAst::Neg(_) => 3,
            _ => 5,
        }
    }
}

fn eval_error(t: f64, x: f64, message: &str) -> ExprError {
    ExprError::Eval {
        t,
        x,
        message: message.to_string(),
    }
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprAst::Number(v) => write!(f, "{v:?}"),
            ExprAst::Var(Var::T) => f.write_str("t"),
            ExprAst::Var(Var::X) => f.write_str("x"),
            ExprAst::Pi => f.write_str("pi"),
            ExprAst::Neg(e) => {
                // the operand of unary minus is a unary or a power
                if e.precedence() >= 3 {
                    write!(f, "-{e}")
                } else {
                    write!(f, "-({e})")
                }
            }
            ExprAst::Call(func, arg) => write!(f, "{}({arg})", func.name()),
            ExprAst::Binary(op, a, b) => {
                let p = op.precedence();
                let (left_paren, right_paren) = if *op == BinOp::Pow {
                    // base must be an atom; exponent may be a unary
                    (a.precedence() <= p, b.precedence() < 3)
                } else {
                    (a.precedence() < p, b.precedence() <= p)
                };
                write_operand(f, a, left_paren)?;
                write!(f, "{}", op.symbol())?;
                write_operand(f, b, right_paren)
            }
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &ExprAst, paren: bool) -> fmt::Result {
    if paren {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// A parsed expression together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: Arc<str>,
    ast: Arc<ExprAst>,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr, ExprError> {
        Ok(Expr {
            source: Arc::from(source.trim()),
            ast: Arc::new(parse(source)?),
        })
    }

    pub fn constant(v: f64) -> Expr {
        let ast = if v < 0.0 {
            ExprAst::Neg(Box::new(ExprAst::Number(-v)))
        } else {
            ExprAst::Number(v)
        };
        Expr {
            source: Arc::from(ast.to_string()),
            ast: Arc::new(ast),
        }
    }

    pub fn eval(&self, t: f64, x: f64) -> Result<f64, ExprError> {
        self.ast.eval(t, x)
    }

    pub fn ast(&self) -> &ExprAst {
        &self.ast
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn depends_on_t(&self) -> bool {
        self.ast.uses(Var::T)
    }

    pub fn depends_on_x(&self) -> bool {
        self.ast.uses(Var::X)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Number(v) => format!("number {v}"),
            Token::Ident(s) => format!("identifier '{s}'"),
            Token::Plus => "'+'".into(),
            Token::Minus => "'-'".into(),
            Token::Star => "'*'".into(),
            Token::Slash => "'/'".into(),
            Token::Caret => "'^'".into(),
            Token::LParen => "'('".into(),
            Token::RParen => "')'".into(),
            Token::End => "end of input".into(),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(Token, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Token::Plus,
            b'-' => Token::Minus,
            b'*' => Token::Star,
            b'/' => Token::Slash,
            b'^' => Token::Caret,
            b'(' => Token::LParen,
            b')' => Token::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    message: format!("malformed number '{text}'"),
                })?;
                out.push((Token::Number(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Token::Ident(src[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character '{ch}'"),
                });
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Token::End, src.len()));
    Ok(out)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn advance(&mut self) -> Token {
        let tok = self.tokens[self.pos].0.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn expect(&mut self, tok: Token, what: &str) -> Result<(), ExprError> {
        if *self.peek() == tok {
            self.advance();
            Ok(())
        } else {
            Err(ExprError::Syntax {
                offset: self.offset(),
                message: format!("expected {what}"),
            })
        }
    }

    fn sum(&mut self) -> Result<ExprAst, ExprError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Token::Plus => BinOp::Add,
                Token::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.product()?;
            lhs = ExprAst::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<ExprAst, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Token::Star => BinOp::Mul,
                Token::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.unary()?;
            lhs = ExprAst::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<ExprAst, ExprError> {
        if *self.peek() == Token::Minus {
            self.advance();
            return Ok(ExprAst::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<ExprAst, ExprError> {
        let base = self.atom()?;
        if *self.peek() == Token::Caret {
            self.advance();
            let exponent = self.unary()?;
            return Ok(ExprAst::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<ExprAst, ExprError> {
        let offset = self.offset();
        match self.advance() {
            Token::Number(v) => Ok(ExprAst::Number(v)),
            Token::LParen => {
                let inner = self.sum()?;
                self.expect(Token::RParen, "')'")?;
                Ok(inner)
            }
            Token::Ident(name) => match name.as_str() {
                "t" => Ok(ExprAst::Var(Var::T)),
                "x" => Ok(ExprAst::Var(Var::X)),
                "pi" => Ok(ExprAst::Pi),
                other => match Func::from_name(other) {
                    Some(func) => {
                        self.expect(Token::LParen, "'(' after function name")?;
                        let arg = self.sum()?;
                        self.expect(Token::RParen, "')'")?;
                        Ok(ExprAst::Call(func, Box::new(arg)))
                    }
                    None => Err(ExprError::UnknownIdentifier {
                        name: other.to_string(),
                        offset,
                    }),
                },
            },
            tok => Err(ExprError::Syntax {
                offset,
                message: format!("expected a number, variable or '(' but found {}", tok.describe()),
            }),
        }
    }
}

pub fn parse(source: &str) -> Result<ExprAst, ExprError> {
    let mut parser = Parser {
        tokens: tokenize(source)?,
        pos: 0,
    };
    let ast = parser.sum()?;
    if *parser.peek() != Token::End {
        return Err(ExprError::Syntax {
            offset: parser.offset(),
            message: format!("unexpected {}", parser.peek().describe()),
        });
    }
    Ok(ast)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(s: &str, t: f64, x: f64) -> f64 {
        parse(s).unwrap().eval(t, x).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1+2*3", 0.0, 0.0), 7.0);
        assert_eq!(ev("2^3^2", 0.0, 0.0), 512.0);
        assert_eq!(ev("-2^2", 0.0, 0.0), -4.0);
        assert_eq!(ev("2^-1", 0.0, 0.0), 0.5);
        assert_eq!(ev("8/4/2", 0.0, 0.0), 1.0);
        assert_eq!(ev("1-2-3", 0.0, 0.0), -4.0);
        assert_eq!(ev(" ( 1 + 2 ) * 3 ", 0.0, 0.0), 9.0);
        assert_eq!(ev("1.5e2 + 2E-1", 0.0, 0.0), 150.2);
    }

    #[test]
    fn unclosed_paren_reports_offset() {
        let err = parse("2*(t").unwrap_err();
        assert_eq!(
            err,
            ExprError::Syntax {
                offset: 4,
                message: "expected ')'".into()
            }
        );
    }

    #[test]
    fn unknown_identifiers_are_rejected() {
        for name in ["a", "y", "e", "log", "sinh", "T"] {
            assert!(matches!(parse(name), Err(ExprError::UnknownIdentifier { .. })), "{name}");
        }
        for name in ["t", "x", "pi", "sin(x)", "cos(t)", "exp(1)", "tanh(x)", "sqrt(2)"] {
            assert!(parse(name).is_ok(), "{name}");
        }
    }

    #[test]
    fn function_values() {
        assert!((ev("sin(x)", 0.0, std::f64::consts::FRAC_PI_2) - 1.0).abs() < 1e-15);
        assert_eq!(ev("exp(t)*2", 0.0, 5.0), 2.0);
        assert_eq!(ev("sqrt(4)", 0.0, 0.0), 2.0);
    }

    #[test]
    fn evaluation_errors_carry_the_point() {
        let err = parse("1/x").unwrap().eval(0.0, 0.0).unwrap_err();
        assert!(matches!(err, ExprError::Eval { t, x, .. } if t == 0.0 && x == 0.0));
        assert!(parse("sqrt(x)").unwrap().eval(0.0, -1.0).is_err());
        assert!(parse("exp(x)").unwrap().eval(0.0, 1e4).is_err());
    }

    #[test]
    fn trailing_garbage_is_a_syntax_error() {
        assert!(matches!(parse("1 2"), Err(ExprError::Syntax { offset: 2, .. })));
        assert!(matches!(parse("1 + "), Err(ExprError::Syntax { offset: 4, .. })));
        assert!(matches!(parse("3 $"), Err(ExprError::Syntax { offset: 2, .. })));
        assert!(matches!(parse("sin x"), Err(ExprError::Syntax { .. })));
    }

    #[test]
    fn dependence_flags() {
        let e = Expr::parse("1 + x^2").unwrap();
        assert!(e.depends_on_x());
        assert!(!e.depends_on_t());
        assert_eq!(Expr::constant(-2.5).eval(0.0, 0.0).unwrap(), -2.5);
    }

    /// Independent oracle: a separate tree type evaluated by direct recursion.
    #[derive(Debug, Clone)]
    enum Oracle {
        Num(f64),
        T,
        X,
        Neg(Box<Oracle>),
        Add(Box<Oracle>, Box<Oracle>),
        Sub(Box<Oracle>, Box<Oracle>),
        Mul(Box<Oracle>, Box<Oracle>),
        Div(Box<Oracle>, Box<Oracle>),
        Sin(Box<Oracle>),
        Tanh(Box<Oracle>),
        Exp(Box<Oracle>),
    }

    impl Oracle {
        fn value(&self, t: f64, x: f64) -> f64 {
            match self {
                Oracle::Num(v) => *v,
                Oracle::T => t,
                Oracle::X => x,
                Oracle::Neg(a) => -a.value(t, x),
                Oracle::Add(a, b) => a.value(t, x) + b.value(t, x),
                Oracle::Sub(a, b) => a.value(t, x) - b.value(t, x),
                Oracle::Mul(a, b) => a.value(t, x) * b.value(t, x),
                Oracle::Div(a, b) => a.value(t, x) / b.value(t, x),
                Oracle::Sin(a) => a.value(t, x).sin(),
                Oracle::Tanh(a) => a.value(t, x).tanh(),
                Oracle::Exp(a) => a.value(t, x).exp(),
            }
        }

        /// Fully parenthesized source text.
        fn source(&self) -> String {
            match self {
                Oracle::Num(v) => format!("{v:?}"),
                Oracle::T => "t".into(),
                Oracle::X => "x".into(),
                Oracle::Neg(a) => format!("(-{})", a.source()),
                Oracle::Add(a, b) => format!("({}+{})", a.source(), b.source()),
                Oracle::Sub(a, b) => format!("({}-{})", a.source(), b.source()),
                Oracle::Mul(a, b) => format!("({}*{})", a.source(), b.source()),
                Oracle::Div(a, b) => format!("({}/{})", a.source(), b.source()),
                Oracle::Sin(a) => format!("sin({})", a.source()),
                Oracle::Tanh(a) => format!("tanh({})", a.source()),
                Oracle::Exp(a) => format!("exp({})", a.source()),
            }
        }
    }

    fn oracle_strategy() -> impl Strategy<Value = Oracle> {
        let leaf = prop_oneof![
            (0.0f64..10.0).prop_map(Oracle::Num),
            Just(Oracle::T),
            Just(Oracle::X),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Oracle::Neg(Box::new(a))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Oracle::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Oracle::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Oracle::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Oracle::Div(Box::new(a), Box::new(b))),
                inner.clone().prop_map(|a| Oracle::Sin(Box::new(a))),
                inner.clone().prop_map(|a| Oracle::Tanh(Box::new(a))),
                inner.prop_map(|a| Oracle::Exp(Box::new(a))),
            ]
        })
    }

    fn ast_strategy() -> impl Strategy<Value = ExprAst> {
        let leaf = prop_oneof![
            (0.0f64..100.0).prop_map(ExprAst::Number),
            Just(ExprAst::Var(Var::T)),
            Just(ExprAst::Var(Var::X)),
            Just(ExprAst::Pi),
        ];
        leaf.prop_recursive(5, 32, 2, |inner| {
            let op = prop_oneof![
                Just(BinOp::Add),
                Just(BinOp::Sub),
                Just(BinOp::Mul),
                Just(BinOp::Div),
                Just(BinOp::Pow)
            ];
            let func = prop_oneof![
                Just(Func::Sin),
                Just(Func::Cos),
                Just(Func::Exp),
                Just(Func::Tanh),
                Just(Func::Sqrt)
            ];
            prop_oneof![
                inner.clone().prop_map(|a| ExprAst::Neg(Box::new(a))),
                (op, inner.clone(), inner.clone())
                    .prop_map(|(op, a, b)| ExprAst::Binary(op, Box::new(a), Box::new(b))),
                (func, inner).prop_map(|(f, a)| ExprAst::Call(f, Box::new(a))),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 1000, rng_seed: proptest::test_runner::RngSeed::Fixed(0), ..ProptestConfig::default() })]

        #[test]
        fn eval_matches_direct_interpretation(tree in oracle_strategy(), t in -2.0f64..2.0, x in -2.0f64..2.0) {
            let expected = tree.value(t, x);
            let parsed = parse(&tree.source()).unwrap();
            match parsed.eval(t, x) {
                Ok(v) => prop_assert!((v - expected).abs() <= 1e-12 * (1.0 + expected.abs()), "{} vs {}", v, expected),
                Err(_) => prop_assert!(!expected.is_finite() || tree.source().contains('/')),
            }
        }

        #[test]
        fn pretty_print_is_idempotent(ast in ast_strategy()) {
            let printed = ast.to_string();
            let reparsed = parse(&printed).unwrap();
            prop_assert_eq!(&reparsed, &ast);
            prop_assert_eq!(reparsed.to_string(), printed);
        }
    }
}
