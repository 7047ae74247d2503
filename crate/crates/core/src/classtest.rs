//! Upper and lower class integral and series tests.
//!
//! Every test is an integral `int_{x0}^inf G(x) dx` or a series
//! `sum_{k >= x0} G(k)` whose convergence decides class membership of a
//! boundary. Boundaries that matter live on iterated-log scales, so all
//! evaluation happens in the variable `v = ln ln x` with values carried as
//! signed logarithms. Blocks are log-dyadic: `ln x` doubles from one block
//! to the next, which turns the critical power-of-log families into
//! geometric block sequences. The two lower tests on `b(2^t)` are power
//! laws in `t` on the critical families and use plain dyadic blocks in `t`.
//!
//! A test converges when the last `window` block ratios are all at most
//! `ratio < 1`, and diverges when the last `window + 1` block sums are
//! non-decreasing. Anything else is inconclusive. The default 900 blocks
//! reach `ln ln x` of about 625, far enough that polylog factors no longer
//! hide a small power of `log x`.
//!
//! Series are summed term by term while the terms are below `2^16`; beyond
//! that block sums of a series are replaced by the integral of its summand,
//! which for eventually monotone summands differs from the block sum by at
//! most one term.
//!
//! Boundary expressions use `t` (also `x`, `n` or `R`) with `+ - * / ^`,
//! parentheses, numbers and the functions `log` (or `ln`), `loglog`,
//! `logloglog`, `sqrt` and `exp`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::verdict::{TestVerdict, Verdict};

const LN_LN_2: f64 = -0.366_512_920_581_664_3;
/// Series terms below this index are summed one by one.
const DIRECT_LIMIT: f64 = 65_536.0;

/// A real number stored as `sign * exp(ln)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNum {
    sign: i8,
    ln: f64,
}

impl LogNum {
    pub const ZERO: LogNum = LogNum { sign: 0, ln: f64::NEG_INFINITY };

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            Self { sign: if x > 0.0 { 1 } else { -1 }, ln: x.abs().ln() }
        }
    }

    /// The positive number `exp(ln)`.
    pub fn from_ln(ln: f64) -> Self {
        if ln == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            Self { sign: 1, ln }
        }
    }

    pub fn value(&self) -> f64 {
        self.sign as f64 * self.ln.exp()
    }

    /// `ln |x|`, `-inf` at zero.
    pub fn ln_abs(&self) -> f64 {
        self.ln
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    fn neg(self) -> Self {
        Self { sign: -self.sign, ln: self.ln }
    }

    fn mul(self, o: Self) -> Self {
        if self.sign == 0 || o.sign == 0 {
            return Self::ZERO;
        }
        Self { sign: self.sign * o.sign, ln: self.ln + o.ln }
    }

    fn div(self, o: Self) -> Result<Self> {
        if o.sign == 0 {
            return Err(Error::Expression("division by zero".into()));
        }
        if self.sign == 0 {
            return Ok(Self::ZERO);
        }
        Ok(Self { sign: self.sign * o.sign, ln: self.ln - o.ln })
    }

    fn add(self, o: Self) -> Self {
        if self.sign == 0 {
            return o;
        }
        if o.sign == 0 {
            return self;
        }
        let (big, small) = if self.ln >= o.ln { (self, o) } else { (o, self) };
        if big.ln == f64::INFINITY {
            return big;
        }
        let d = (small.ln - big.ln).exp();
        if big.sign == small.sign {
            Self { sign: big.sign, ln: big.ln + d.ln_1p() }
        } else if d == 1.0 {
            Self::ZERO
        } else {
            Self { sign: big.sign, ln: big.ln + (-d).ln_1p() }
        }
    }

    fn pow(self, e: Self) -> Result<Self> {
        let p = e.value();
        match self.sign {
            0 if p > 0.0 => Ok(Self::ZERO),
            0 => Err(Error::Expression("zero raised to a non-positive power".into())),
            1 => Ok(Self::from_ln(p * self.ln)),
            _ if p.fract() == 0.0 => {
                let s = if (p as i64) % 2 == 0 { 1 } else { -1 };
                Ok(Self { sign: s, ln: p * self.ln })
            }
            _ => Err(Error::Expression("negative base with a fractional power".into())),
        }
    }

    fn log(self) -> Result<Self> {
        if self.sign != 1 {
            return Err(Error::Expression("logarithm of a non-positive number".into()));
        }
        Ok(Self::from_f64(self.ln))
    }

    fn exp(self) -> Self {
        Self::from_ln(self.value())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Log,
    LogLog,
    LogLogLog,
    Sqrt,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Parsed boundary expression in one variable.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Neg(Box<Expr>),
    Bin(Op, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Where an expression is evaluated, given by `ln ln` of the point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arg {
    pub ll: f64,
}

impl Expr {
    pub fn eval(&self, a: Arg) -> Result<LogNum> {
        Ok(match self {
            Expr::Const(c) => LogNum::from_f64(*c),
            Expr::Var => LogNum::from_ln(a.ll.exp()),
            Expr::Neg(e) => e.eval(a)?.neg(),
            Expr::Bin(op, l, r) => {
                let (x, y) = (l.eval(a)?, r.eval(a)?);
                match op {
                    Op::Add => x.add(y),
                    Op::Sub => x.add(y.neg()),
                    Op::Mul => x.mul(y),
                    Op::Div => x.div(y)?,
                    Op::Pow => x.pow(y)?,
                }
            }
            // Logs of the variable itself are taken exactly, since the
            // variable can be far beyond f64 range.
            Expr::Call(Func::Log, e) if **e == Expr::Var => LogNum::from_ln(a.ll),
            Expr::Call(Func::LogLog, e) if **e == Expr::Var => LogNum::from_f64(a.ll),
            Expr::Call(Func::LogLogLog, e) if **e == Expr::Var => LogNum::from_f64(a.ll).log()?,
            Expr::Call(f, e) => {
                let x = e.eval(a)?;
                match f {
                    Func::Log => x.log()?,
                    Func::LogLog => x.log()?.log()?,
                    Func::LogLogLog => x.log()?.log()?.log()?,
                    Func::Sqrt => x.pow(LogNum::from_f64(0.5))?,
                    Func::Exp => x.exp(),
                }
            }
        })
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err<T>(&self, msg: &str) -> Result<T> {
        Err(Error::Expression(format!("{msg} at offset {}", self.pos)))
    }

    fn skip(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut e = self.term()?;
        loop {
            if self.eat(b'+') {
                e = Expr::Bin(Op::Add, Box::new(e), Box::new(self.term()?));
            } else if self.eat(b'-') {
                e = Expr::Bin(Op::Sub, Box::new(e), Box::new(self.term()?));
            } else {
                return Ok(e);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut e = self.unary()?;
        loop {
            if self.eat(b'*') {
                e = Expr::Bin(Op::Mul, Box::new(e), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                e = Expr::Bin(Op::Div, Box::new(e), Box::new(self.unary()?));
            } else {
                return Ok(e);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat(b'^') {
            return Ok(Expr::Bin(Op::Pow, Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => self.err("unexpected end of expression"),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return self.err("expected ')'");
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.s.len() {
                    let c = self.s[self.pos];
                    let exp_sign = (c == b'-' || c == b'+') && matches!(self.s[self.pos - 1], b'e' | b'E');
                    if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let txt = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
                txt.parse::<f64>().map(Expr::Const).or_else(|_| self.err("bad number"))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
                let f = match name {
                    "t" | "x" | "n" | "R" => return Ok(Expr::Var),
                    "log" | "ln" => Func::Log,
                    "loglog" => Func::LogLog,
                    "logloglog" => Func::LogLogLog,
                    "sqrt" => Func::Sqrt,
                    "exp" => Func::Exp,
                    _ => return Err(Error::Expression(format!("unknown name '{name}'"))),
                };
                if !self.eat(b'(') {
                    return self.err("expected '(' after a function name");
                }
                let e = self.expr()?;
                if !self.eat(b')') {
                    return self.err("expected ')'");
                }
                Ok(Expr::Call(f, Box::new(e)))
            }
            Some(c) => self.err(&format!("unexpected '{}'", c as char)),
        }
    }
}

pub fn parse_expression(s: &str) -> Result<Expr> {
    let mut p = Parser { s: s.as_bytes(), pos: 0 };
    let e = p.expr()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    Ok(e)
}

/// Shape a test demands of its boundary function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotone {
    NonDecreasing,
    NonIncreasing,
    /// `ln f(t) / ln t` non-decreasing.
    LogRatioNonDecreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BoundaryFunction {
    /// `sqrt(c loglog t)`.
    SqrtLogLog { c: f64 },
    /// `(log t)^-beta`.
    PowerLog { beta: f64 },
    /// `c loglog t`.
    LogLog { c: f64 },
    /// `1 / (c loglog t)`.
    InverseLogLog { c: f64 },
    /// `exp((log t)^beta)`, for the range tests.
    InverseLogPow { beta: f64 },
    Expression { expr: String, monotone: Monotone },
}

impl BoundaryFunction {
    pub fn expression(&self) -> String {
        match self {
            BoundaryFunction::SqrtLogLog { c } => format!("sqrt({c}*loglog(t))"),
            BoundaryFunction::PowerLog { beta } => format!("log(t)^(-{beta})"),
            BoundaryFunction::LogLog { c } => format!("{c}*loglog(t)"),
            BoundaryFunction::InverseLogLog { c } => format!("1/({c}*loglog(t))"),
            BoundaryFunction::InverseLogPow { beta } => format!("exp(log(t)^{beta})"),
            BoundaryFunction::Expression { expr, .. } => expr.clone(),
        }
    }

    /// Whether the function has the shape `m` on its whole domain.
    pub fn has_shape(&self, m: Monotone) -> bool {
        use BoundaryFunction::*;
        use Monotone::*;
        match (self, m) {
            (SqrtLogLog { c }, NonDecreasing) | (LogLog { c }, NonDecreasing) => *c >= 0.0,
            (PowerLog { beta }, NonIncreasing) => *beta >= 0.0,
            (PowerLog { beta }, NonDecreasing) => *beta <= 0.0,
            (InverseLogLog { c }, NonIncreasing) => *c > 0.0,
            (InverseLogPow { beta }, LogRatioNonDecreasing) => *beta >= 1.0,
            (Expression { monotone, .. }, m) => *monotone == m,
            _ => false,
        }
    }

    pub fn parsed(&self) -> Result<Expr> {
        parse_expression(&self.expression())
    }
}

/// Integral and series tests. `bessel-*` tests take the order `nu`,
/// `walk-*` tests the drift constant `B`, except `walk-local-time-upper`
/// which takes `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestId {
    /// `int (b(2^t))^{2nu} dt`.
    BesselLower,
    /// `int a^{2nu+2} x^-1 e^{-a^2/2} dx`.
    BesselUpper,
    /// `int psi^{2nu} x^-1 e^{-psi^2/2} dx`.
    BesselFutureInfUpper,
    /// `int x^-1 phi^-nu e^{-1/(2 phi)} dx`.
    BesselEscapeLower,
    /// `int x^-1 psi^{2-2nu} e^{-psi^2/2} dx`.
    BesselGapUpper,
    /// `int dx / (x log rho)`.
    BesselRangeLower,
    /// `int f x^-1 e^{-nu f} dx`.
    BesselLocalTimeUpper,
    /// `sum a(k)^{B+1} k^-1 e^{-a^2/2}`.
    WalkUpper,
    /// `sum (b(2^k))^{B-1}`.
    WalkLower,
    /// `sum psi^{B-1} k^-1 e^{-psi^2/2}`.
    WalkFutureInfUpper,
    /// `sum k^-1 phi^{-(B-1)/2} e^{-1/(2 phi)}`.
    WalkEscapeLower,
    /// `sum k^-1 psi^{3-B} e^{-psi^2/2}`.
    WalkGapUpper,
    /// `sum 1 / (k log rho(k))`.
    WalkRangeLower,
    /// `sum f(k) k^-1 e^{-nu f(k)}`.
    WalkLocalTimeUpper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    /// `q ln b(2^x)`.
    Lower { q: f64 },
    /// `q ln a - a^2/2 - ln x`.
    Upper { q: f64 },
    /// `-q ln phi - 1/(2 phi) - ln x`.
    Escape { q: f64 },
    /// `-ln log rho - ln x`.
    Range,
    /// `ln f - nu f - ln x`.
    LocalTime { nu: f64 },
}

impl TestId {
    pub const ALL: [TestId; 14] = [
        TestId::BesselLower,
        TestId::BesselUpper,
        TestId::BesselFutureInfUpper,
        TestId::BesselEscapeLower,
        TestId::BesselGapUpper,
        TestId::BesselRangeLower,
        TestId::BesselLocalTimeUpper,
        TestId::WalkUpper,
        TestId::WalkLower,
        TestId::WalkFutureInfUpper,
        TestId::WalkEscapeLower,
        TestId::WalkGapUpper,
        TestId::WalkRangeLower,
        TestId::WalkLocalTimeUpper,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TestId::BesselLower => "bessel-lower",
            TestId::BesselUpper => "bessel-upper",
            TestId::BesselFutureInfUpper => "bessel-future-inf-upper",
            TestId::BesselEscapeLower => "bessel-escape-lower",
            TestId::BesselGapUpper => "bessel-gap-upper",
            TestId::BesselRangeLower => "bessel-range-lower",
            TestId::BesselLocalTimeUpper => "bessel-local-time-upper",
            TestId::WalkUpper => "walk-upper",
            TestId::WalkLower => "walk-lower",
            TestId::WalkFutureInfUpper => "walk-future-inf-upper",
            TestId::WalkEscapeLower => "walk-escape-lower",
            TestId::WalkGapUpper => "walk-gap-upper",
            TestId::WalkRangeLower => "walk-range-lower",
            TestId::WalkLocalTimeUpper => "walk-local-time-upper",
        }
    }

    /// Series tests sum over integers; the others integrate.
    pub fn is_series(&self) -> bool {
        self.as_str().starts_with("walk")
    }

    /// The matching test for the other process. Walk tests with drift `B`
    /// match Bessel tests of order `(B-1)/2`; the local-time pair shares `nu`.
    pub fn counterpart(&self) -> TestId {
        let i = Self::ALL.iter().position(|t| t == self).unwrap();
        let pairs = [(0, 8), (1, 7), (2, 9), (3, 10), (4, 11), (5, 12), (6, 13)];
        let (a, b) = pairs.iter().find(|(a, b)| *a == i || *b == i).unwrap();
        Self::ALL[if *a == i { *b } else { *a }]
    }

    /// Whether the parameter is the drift constant `B` rather than `nu`.
    pub fn takes_drift(&self) -> bool {
        self.is_series() && *self != TestId::WalkLocalTimeUpper
    }

    pub fn requires(&self) -> Monotone {
        match self {
            TestId::BesselLower | TestId::WalkLower | TestId::BesselEscapeLower | TestId::WalkEscapeLower => {
                Monotone::NonIncreasing
            }
            TestId::BesselRangeLower | TestId::WalkRangeLower => Monotone::LogRatioNonDecreasing,
            _ => Monotone::NonDecreasing,
        }
    }

    fn shape(&self, param: f64) -> Result<Shape> {
        let bad = |what: &str| Err(Error::Domain(format!("{} needs {what}, got {param}", self.as_str())));
        if self.takes_drift() {
            if !(param > 1.0) {
                return bad("B > 1");
            }
        } else if *self == TestId::BesselUpper {
            if !(param >= 0.0) {
                return bad("nu >= 0");
            }
        } else if !(param > 0.0) {
            return bad("nu > 0");
        }
        let p = param;
        Ok(match self {
            TestId::BesselLower => Shape::Lower { q: 2.0 * p },
            TestId::WalkLower => Shape::Lower { q: p - 1.0 },
            TestId::BesselUpper => Shape::Upper { q: 2.0 * p + 2.0 },
            TestId::WalkUpper => Shape::Upper { q: p + 1.0 },
            TestId::BesselFutureInfUpper => Shape::Upper { q: 2.0 * p },
            TestId::WalkFutureInfUpper => Shape::Upper { q: p - 1.0 },
            TestId::BesselGapUpper => Shape::Upper { q: 2.0 - 2.0 * p },
            TestId::WalkGapUpper => Shape::Upper { q: 3.0 - p },
            TestId::BesselEscapeLower => Shape::Escape { q: p },
            TestId::WalkEscapeLower => Shape::Escape { q: (p - 1.0) / 2.0 },
            TestId::BesselRangeLower | TestId::WalkRangeLower => Shape::Range,
            TestId::BesselLocalTimeUpper | TestId::WalkLocalTimeUpper => Shape::LocalTime { nu: p },
        })
    }

    /// Class statement `(symbol, process, class)` for convergence.
    fn statement(&self) -> (&'static str, &'static str, &'static str) {
        match self {
            TestId::BesselLower => ("t^{1/2}b(t)", "Y_ν", "LLC"),
            TestId::BesselUpper => ("t^{1/2}a(t)", "Y", "UUC"),
            TestId::BesselFutureInfUpper => ("t^{1/2}ψ(t)", "I", "UUC"),
            TestId::BesselEscapeLower => ("t^2φ(t)", "A", "LLC"),
            TestId::BesselGapUpper => ("t^{1/2}ψ(t)", "Y−I", "UUC"),
            TestId::BesselRangeLower => ("1/ρ(t)", "M−I", "LLC"),
            TestId::BesselLocalTimeUpper => ("Rf(R)", "η(R,∞)", "UUC"),
            TestId::WalkUpper => ("n^{1/2}a(n)", "X_n", "UUC"),
            TestId::WalkLower => ("n^{1/2}b(n)", "X_n", "LLC"),
            TestId::WalkFutureInfUpper => ("n^{1/2}ψ(n)", "J_n", "UUC"),
            TestId::WalkEscapeLower => ("n^2φ(n)", "G_n", "LLC"),
            TestId::WalkGapUpper => ("n^{1/2}ψ(n)", "X_n−J_n", "UUC"),
            TestId::WalkRangeLower => ("1/ρ(n)", "Q_n−J_n", "LLC"),
            TestId::WalkLocalTimeUpper => ("Rf(R)", "ξ(R,∞)", "UUC"),
        }
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Domain(format!("unknown test '{s}'")))
    }
}

/// Maps a decided verdict to the class statement it licenses.
pub fn verdict_to_class(test: TestId, verdict: Verdict) -> Result<String> {
    let (sym, process, class) = test.statement();
    match verdict {
        Verdict::Converges => Ok(format!("{sym} ∈ {class}({process})")),
        Verdict::Diverges => Ok(format!("{sym} ∉ {class}({process})")),
        Verdict::Inconclusive => Err(Error::Inconclusive),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOptions {
    /// Where the integral or series starts.
    pub x0: f64,
    pub blocks: usize,
    pub window: usize,
    /// Largest block ratio accepted as geometric decay.
    pub ratio: f64,
    pub rel_tol: f64,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self { x0: 10.0, blocks: 900, window: 10, ratio: 0.99, rel_tol: 1e-10 }
    }
}

struct Integrand<'a> {
    f: &'a Expr,
    shape: Shape,
}

impl Integrand<'_> {
    /// `ln (x G(x))` at `ln ln x = ll`, or `ln G(x)` for `Lower`, which has
    /// no `1/x` factor. Keeping the factor out avoids cancelling `ln x`
    /// against itself when `ln x` is astronomically large.
    fn ln_core(&self, ll: f64) -> Result<f64> {
        let ln_x = ll.exp();
        let at = |ll| self.f.eval(Arg { ll });
        let positive = |v: LogNum, what: &str| {
            if v.sign() < 0 {
                Err(Error::Domain(format!("boundary function is negative ({what})")))
            } else {
                Ok(v)
            }
        };
        Ok(match self.shape {
            Shape::Lower { q } => {
                let b = positive(at(ln_x + LN_LN_2)?, "b")?;
                if b.sign() == 0 {
                    if q > 0.0 { f64::NEG_INFINITY } else { 0.0 }
                } else {
                    q * b.ln_abs()
                }
            }
            Shape::Upper { q } => {
                let a = positive(at(ll)?, "a")?;
                let a2 = a.value() * a.value();
                if a.sign() == 0 {
                    if q > 0.0 { f64::NEG_INFINITY } else if q == 0.0 { 0.0 } else { f64::INFINITY }
                } else {
                    q * a.ln_abs() - a2 / 2.0
                }
            }
            Shape::Escape { q } => {
                let phi = positive(at(ll)?, "phi")?;
                if phi.sign() == 0 {
                    f64::NEG_INFINITY
                } else {
                    -q * phi.ln_abs() - 0.5 / phi.value()
                }
            }
            Shape::Range => {
                let lr = at(ll)?.log()?;
                if lr.sign() != 1 {
                    return Err(Error::Domain("log rho must be positive".into()));
                }
                -lr.ln_abs()
            }
            Shape::LocalTime { nu } => {
                let f = positive(at(ll)?, "f")?;
                if f.sign() == 0 {
                    f64::NEG_INFINITY
                } else {
                    f.ln_abs() - nu * f.value()
                }
            }
        })
    }

    fn is_lower(&self) -> bool {
        matches!(self.shape, Shape::Lower { .. })
    }

    /// `ln G(x)` at `ln ln x = ll`, for moderate `x`.
    fn ln_g(&self, ll: f64) -> Result<f64> {
        let c = self.ln_core(ll)?;
        Ok(if self.is_lower() { c } else { c - ll.exp() })
    }

    /// The block variable `w`: `ln x` for `Lower`, whose integrand is a
    /// power of `x` on the critical families, and `ln ln x` otherwise.
    fn w_of_x(&self, x: f64) -> f64 {
        if self.is_lower() { x.ln() } else { x.ln().ln() }
    }

    fn x_of_w(&self, w: f64) -> f64 {
        if self.is_lower() { w.exp() } else { w.exp().exp() }
    }

    /// `ln ln x` of the point where the boundary is evaluated.
    fn arg_ll(&self, w: f64) -> f64 {
        if self.is_lower() { w + LN_LN_2 } else { w }
    }

    /// `ln` of the integrand in `w`; `dx/dw` is `x` or `x ln x`.
    fn ln_w(&self, w: f64) -> Result<f64> {
        let c = self.ln_core(if self.is_lower() { w.ln() } else { w })?;
        Ok(c + w)
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, floor: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    // Halving stops at the rounding floor, or noise would force full depth.
    let t = (tol / 2.0).max(floor);
    simpson(f, a, m, fa, flm, fm, left, t, floor, depth - 1) + simpson(f, m, b, fm, frm, fb, right, t, floor, depth - 1)
}

/// `ln int_a^b exp(h(v)) dv` for a log-integrand `h`.
fn ln_block_integral(h: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    let probe: Vec<f64> = (0..=8).map(|i| h(a + (b - a) * i as f64 / 8.0)).collect::<Result<_>>()?;
    let shift = probe.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if shift.is_nan() || probe.iter().any(|p| p.is_nan()) {
        return Err(Error::NonConvergence("integrand is NaN".into()));
    }
    if shift == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if shift == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let err = std::cell::Cell::new(None);
    let f = |v: f64| match h(v) {
        Ok(x) if x.is_nan() => {
            err.set(Some(Error::NonConvergence(format!("integrand is NaN at {v}"))));
            0.0
        }
        Ok(x) => (x - shift).exp(),
        Err(e) => {
            err.set(Some(e));
            0.0
        }
    };
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let scale = (b - a) / 8.0 * probe.iter().map(|&p| (p - shift).exp()).sum::<f64>();
    let scale = scale.max(f64::MIN_POSITIVE);
    let s = simpson(&f, a, b, fa, fm, fb, whole, rel_tol * scale, 64.0 * f64::EPSILON * scale, 30);
    if let Some(e) = err.take() {
        return Err(e);
    }
    Ok(shift + s.max(0.0).ln())
}

fn ln_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Samples the boundary on the evaluation range and checks the shape the
/// test requires. A sampled check is not a proof.
fn check_monotone(need: Monotone, f: &Expr, ll_lo: f64, ll_hi: f64) -> Result<()> {
    let mut prev: Option<f64> = None;
    for i in 0..=400 {
        let ll = ll_lo + (ll_hi - ll_lo) * i as f64 / 400.0;
        let y = f.eval(Arg { ll })?;
        // Compare on a log scale, which preserves order for positive values.
        let key = match need {
            Monotone::LogRatioNonDecreasing => {
                let lr = y.log()?;
                if lr.sign() != 1 {
                    return Err(Error::Hypothesis("log rho must be positive".into()));
                }
                lr.ln_abs() - ll
            }
            _ if y.sign() < 0 => return Err(Error::Hypothesis("boundary function is negative".into())),
            _ => y.ln_abs(),
        };
        if let Some(p) = prev {
            let tol = 1e-12 * p.abs().max(1.0);
            let bad = match need {
                Monotone::NonIncreasing => key > p + tol,
                _ => key < p - tol,
            };
            if bad {
                return Err(Error::Hypothesis(format!(
                    "boundary is not {:?} near ln ln t = {ll:.4}",
                    need
                )));
            }
        }
        prev = Some(key);
    }
    Ok(())
}

pub fn evaluate_test(test: TestId, f: &BoundaryFunction, param: f64) -> Result<TestVerdict> {
    evaluate_test_with(test, f, param, &TestOptions::default())
}

pub fn evaluate_test_with(test: TestId, f: &BoundaryFunction, param: f64, opts: &TestOptions) -> Result<TestVerdict> {
    let shape = test.shape(param)?;
    if !f.has_shape(test.requires()) {
        return Err(Error::Hypothesis(format!("{} needs a {:?} boundary", test, test.requires())));
    }
    if !(opts.x0 > std::f64::consts::E && opts.window >= 2 && opts.blocks > opts.window && opts.ratio < 1.0) {
        return Err(Error::Domain("test options out of range".into()));
    }
    let expr = f.parsed()?;
    let ig = Integrand { f: &expr, shape };
    let h = std::f64::consts::LN_2;
    let w0 = ig.w_of_x(opts.x0);
    let w_end = w0 + h * opts.blocks as f64;
    check_monotone(test.requires(), &expr, ig.arg_ll(w0), ig.arg_ll(w_end))?;
    let ln_w = |w: f64| ig.ln_w(w);
    let direct_w = ig.w_of_x(DIRECT_LIMIT);
    let mut logs = Vec::with_capacity(opts.blocks);
    for k in 0..opts.blocks {
        let (a, b) = (w0 + h * k as f64, w0 + h * (k + 1) as f64);
        let l = if test.is_series() && a < direct_w {
            let (xa, xb) = (ig.x_of_w(a), ig.x_of_w(b).min(DIRECT_LIMIT));
            let (first, last) = (xa.ceil() as u64, xb.ceil() as u64);
            let terms = (first..last).map(|k| ig.ln_g((k as f64).ln().ln())).collect::<Result<Vec<_>>>()?;
            let direct = ln_sum_exp(terms.into_iter());
            if b > direct_w {
                let rest = ln_block_integral(&ln_w, direct_w, b, opts.rel_tol)?;
                ln_sum_exp([direct, rest].into_iter())
            } else {
                direct
            }
        } else {
            ln_block_integral(&ln_w, a, b, opts.rel_tol)?
        };
        if l.is_nan() {
            return Err(Error::NonConvergence(format!("block {k} evaluated to NaN")));
        }
        logs.push(l);
    }
    let partial_sum = logs.iter().map(|l| l.exp()).sum::<f64>();
    let w = opts.window;
    let tail = &logs[logs.len() - w - 1..];
    let ratios: Vec<f64> = tail.windows(2).map(|p| (p[1] - p[0]).exp()).collect();
    let block_sums: Vec<f64> = tail.iter().map(|l| l.exp()).collect();
    let verdict = if logs.iter().all(|&l| l == f64::NEG_INFINITY) {
        Verdict::Converges
    } else if tail.windows(2).all(|p| p[1] - p[0] <= opts.ratio.ln() || p[1] == f64::NEG_INFINITY) {
        Verdict::Converges
    } else {
        // Non-decreasing block sums are a harmonic minorant with room to
        // spare; the weaker k s_k form misfires near critical constants.
        let minorant = tail.windows(2).all(|p| p[0].is_finite() && p[1] >= p[0] - 1e-9);
        if minorant || tail.iter().any(|&l| l == f64::INFINITY) {
            Verdict::Diverges
        } else {
            Verdict::Inconclusive
        }
    };
    let conclusion = verdict_to_class(test, verdict).ok();
    Ok(TestVerdict { verdict, conclusion, partial_sum, block_sums, tail_ratios: ratios })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn val(s: &str, t: f64) -> f64 {
        parse_expression(s).unwrap().eval(Arg { ll: t.ln().ln() }).unwrap().value()
    }

    #[test]
    fn parser_basics() {
        let t = 1234.5f64;
        assert!((val("sqrt(3*loglog(t))", t) - (3.0 * t.ln().ln()).sqrt()).abs() < 1e-12);
        assert!((val("log(x)^(-0.8)", t) - t.ln().powf(-0.8)).abs() < 1e-14);
        assert!((val("2^3^2", t) - 512.0).abs() < 1e-9);
        assert!((val("-2^2 + 1e1", t) - 6.0).abs() < 1e-12);
        assert!((val("logloglog(n) - ln(ln(ln(n)))", t)).abs() < 1e-12);
        assert!((val("t/t*2.5e-1", t) - 0.25).abs() < 1e-12);
        for bad in ["", "log(", "foo(t)", "t t", "2 +", "sqrt t"] {
            assert!(matches!(parse_expression(bad), Err(Error::Expression(_))), "{bad}");
        }
    }

    #[test]
    fn huge_arguments() {
        // t = exp(exp(100))
        let e = parse_expression("loglog(t)^2 / log(t)").unwrap();
        let v = e.eval(Arg { ll: 100.0 }).unwrap();
        assert!((v.ln_abs() - (2.0 * 100f64.ln() - 100.0)).abs() < 1e-12);
        assert_eq!(parse_expression("1/t").unwrap().eval(Arg { ll: 100.0 }).unwrap().value(), 0.0);
    }

    #[test]
    fn lognum_arithmetic() {
        let a = LogNum::from_f64(3.0);
        let b = LogNum::from_f64(-5.0);
        assert!((a.add(b).value() + 2.0).abs() < 1e-14);
        assert_eq!(a.add(a.neg()), LogNum::ZERO);
        assert!((b.pow(LogNum::from_f64(2.0)).unwrap().value() - 25.0).abs() < 1e-12);
        assert!(b.pow(LogNum::from_f64(0.5)).is_err());
        assert!(b.log().is_err());
    }

    #[test]
    fn upper_flips_at_two() {
        for (c, want) in [(1.5, Verdict::Diverges), (1.9, Verdict::Diverges), (2.1, Verdict::Converges), (3.0, Verdict::Converges)] {
            let v = evaluate_test(TestId::BesselUpper, &BoundaryFunction::SqrtLogLog { c }, 0.5).unwrap();
            assert_eq!(v.verdict, want, "c={c}: {v:?}");
        }
    }

    #[test]
    fn lower_flips_at_inverse_two_nu() {
        for nu in [0.5, 1.0, 2.0] {
            let crit = 1.0 / (2.0 * nu);
            let lo = evaluate_test(TestId::BesselLower, &BoundaryFunction::PowerLog { beta: crit - 0.2 }, nu).unwrap();
            let hi = evaluate_test(TestId::BesselLower, &BoundaryFunction::PowerLog { beta: crit + 0.2 }, nu).unwrap();
            assert_eq!(lo.verdict, Verdict::Diverges);
            assert_eq!(hi.verdict, Verdict::Converges);
        }
    }

    #[test]
    fn zero_local_time_boundary_converges() {
        let f = BoundaryFunction::Expression { expr: "0".into(), monotone: Monotone::NonDecreasing };
        assert_eq!(evaluate_test(TestId::BesselLocalTimeUpper, &f, 1.0).unwrap().verdict, Verdict::Converges);
    }

    #[test]
    fn class_statements() {
        assert_eq!(verdict_to_class(TestId::BesselLower, Verdict::Converges).unwrap(), "t^{1/2}b(t) ∈ LLC(Y_ν)");
        assert_eq!(verdict_to_class(TestId::WalkUpper, Verdict::Diverges).unwrap(), "n^{1/2}a(n) ∉ UUC(X_n)");
        assert_eq!(verdict_to_class(TestId::BesselUpper, Verdict::Inconclusive), Err(Error::Inconclusive));
    }

    #[test]
    fn shape_and_parameter_checks() {
        let up = BoundaryFunction::SqrtLogLog { c: 3.0 };
        assert!(matches!(evaluate_test(TestId::BesselLower, &up, 1.0), Err(Error::Hypothesis(_))));
        assert!(matches!(evaluate_test(TestId::WalkUpper, &up, 0.5), Err(Error::Domain(_))));
        let lying = BoundaryFunction::Expression { expr: "log(t)".into(), monotone: Monotone::NonIncreasing };
        assert!(matches!(evaluate_test(TestId::WalkLower, &lying, 2.0), Err(Error::Hypothesis(_))));
        assert!(matches!(
            evaluate_test(TestId::BesselRangeLower, &BoundaryFunction::InverseLogPow { beta: 0.5 }, 1.0),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn ids_round_trip() {
        for t in TestId::ALL {
            assert_eq!(t.as_str().parse::<TestId>().unwrap(), t);
            assert_eq!(t.counterpart().counterpart(), t);
            assert_ne!(t.is_series(), t.counterpart().is_series());
        }
    }
}
