//! A small expression language for densities, integrands and region
//! indicators.
//!
//! Expressions are parsed against an ordered list of variable names and then
//! evaluated at points whose coordinates follow that order:
//!
//! ```
//! use rmc_core::expression::{parse, VarOrder};
//!
//! let vars = VarOrder::new(["x", "y"]).unwrap();
//! let region = parse("y^2 <= x and y >= 0 and y <= x - 2", &vars).unwrap();
//! assert_eq!(region.eval(&[3.0, 1.0]).unwrap(), 1.0);
//! assert_eq!(region.eval(&[3.0, 2.0]).unwrap(), 0.0);
//! ```
//!
//! Relational operators yield exact `0.0`/`1.0` indicator values and `and`
//! multiplies indicators. Domain faults (`log` of a non-positive value, `sqrt`
//! of a negative one, division by zero, `0^negative`, or any NaN result) are
//! reported as errors rather than propagated.

mod eval;
mod lexer;
mod parser;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

pub use eval::{EvalError, EvalFault};

/// Identifiers that cannot be used as variable names.
pub const RESERVED: &[&str] = &["pi", "e", "and"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: expected {expected}, found {found}")]
    Syntax {
        offset: usize,
        expected: String,
        found: String,
    },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{func}` takes {expected} argument(s) but {found} were given (byte {offset})")]
    Arity {
        func: String,
        expected: usize,
        found: usize,
        offset: usize,
    },
    #[error("expression is empty")]
    Empty,
    #[error("invalid variable list: {0}")]
    InvalidVars(String),
}

/// Ordered, distinct variable names. The position of a name is the index of
/// the matching coordinate in every evaluation point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarOrder {
    names: Vec<String>,
}

impl VarOrder {
    pub fn new<I, S>(names: I) -> Result<Self, ExprError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(ExprError::InvalidVars("at least one variable is required".into()));
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if !is_identifier(name) {
                return Err(ExprError::InvalidVars(format!("`{name}` is not an identifier")));
            }
            if RESERVED.contains(&name.as_str()) || Func::from_name(name).is_some() {
                return Err(ExprError::InvalidVars(format!("`{name}` is a reserved name")));
            }
            if !seen.insert(name.as_str()) {
                return Err(ExprError::InvalidVars(format!("`{name}` appears twice")));
            }
        }
        Ok(Self { names })
    }

    /// Parses a comma-separated list such as `"x,y"`.
    pub fn parse_list(text: &str) -> Result<Self, ExprError> {
        Self::new(text.split(',').map(str::trim))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

impl fmt::Display for VarOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.names.join(","))
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constant {
    Pi,
    E,
}

impl Constant {
    pub fn value(self) -> f64 {
        match self {
            Constant::Pi => std::f64::consts::PI,
            Constant::E => std::f64::consts::E,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Constant::Pi => "pi",
            Constant::E => "e",
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
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelOp {
    Le,
    Ge,
    Lt,
    Gt,
}

impl RelOp {
    fn symbol(self) -> &'static str {
        match self {
            RelOp::Le => "<=",
            RelOp::Ge => ">=",
            RelOp::Lt => "<",
            RelOp::Gt => ">",
        }
    }
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
    pub fn from_name(name: &str) -> Option<Self> {
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

    pub fn name(self) -> &'static str {
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

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

/// Expression tree node. Variables are stored by their index in the
/// enclosing [`VarOrder`].
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Const(Constant),
    Var(usize),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
    Rel(RelOp, Box<Node>, Box<Node>),
    And(Vec<Node>),
}

/// A parsed expression bound to its variable order. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprAst {
    root: Node,
    vars: VarOrder,
}

impl ExprAst {
    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn vars(&self) -> &VarOrder {
        &self.vars
    }

    pub fn dim(&self) -> usize {
        self.vars.dim()
    }

    /// Evaluates at `point`, whose coordinates follow [`ExprAst::vars`].
    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        if point.len() != self.vars.dim() {
            return Err(EvalError::dimension(self.vars.dim(), point.len()));
        }
        eval::eval_node(&self.root, point, &self.vars)
    }

    /// Names of the variables that actually occur in the expression.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut idx = BTreeSet::new();
        collect_vars(&self.root, &mut idx);
        idx.into_iter()
            .map(|i| self.vars.names()[i].clone())
            .collect()
    }

    /// True if the root is a relation or conjunction, i.e. the expression is
    /// an indicator.
    pub fn is_indicator(&self) -> bool {
        matches!(self.root, Node::Rel(..) | Node::And(_))
    }
}

fn collect_vars(node: &Node, out: &mut BTreeSet<usize>) {
    match node {
        Node::Num(_) | Node::Const(_) => {}
        Node::Var(i) => {
            out.insert(*i);
        }
        Node::Neg(a) => collect_vars(a, out),
        Node::Binary(_, a, b) | Node::Rel(_, a, b) => {
            collect_vars(a, out);
            collect_vars(b, out);
        }
        Node::Call(_, args) | Node::And(args) => args.iter().for_each(|a| collect_vars(a, out)),
    }
}

/// Parses `text` against `vars`.
pub fn parse(text: &str, vars: &VarOrder) -> Result<ExprAst, ExprError> {
    let root = parser::parse_node(text, Some(vars))?;
    Ok(ExprAst {
        root,
        vars: vars.clone(),
    })
}

/// Parses and evaluates an expression with no variables, e.g. `"3*pi/4"`.
pub fn parse_constant(text: &str) -> Result<f64, ExprError> {
    let root = parser::parse_node(text, None)?;
    eval::eval_node(&root, &[], &VarOrder { names: Vec::new() }).map_err(|e| ExprError::Syntax {
        offset: 0,
        expected: "a constant expression".into(),
        found: e.to_string(),
    })
}

/// Set of variable names referenced by `ast`.
pub fn free_vars(ast: &ExprAst) -> BTreeSet<String> {
    ast.free_vars()
}

// Binding strength used by the printer; mirrors the grammar levels.
fn precedence(node: &Node) -> u8 {
    match node {
        Node::And(_) => 1,
        Node::Rel(..) => 2,
        Node::Binary(BinOp::Add | BinOp::Sub, ..) => 3,
        Node::Binary(BinOp::Mul | BinOp::Div, ..) => 4,
        Node::Neg(_) => 5,
        Node::Binary(BinOp::Pow, ..) => 6,
        Node::Num(v) if *v < 0.0 || v.is_sign_negative() => 5,
        Node::Num(_) | Node::Const(_) | Node::Var(_) | Node::Call(..) => 7,
    }
}

struct Printer<'a> {
    node: &'a Node,
    vars: &'a VarOrder,
}

impl Printer<'_> {
    fn child<'b>(&'b self, node: &'b Node) -> Printer<'b> {
        Printer {
            node,
            vars: self.vars,
        }
    }

    fn write_min(&self, f: &mut fmt::Formatter<'_>, node: &Node, min: u8) -> fmt::Result {
        if precedence(node) < min {
            write!(f, "({})", self.child(node))
        } else {
            write!(f, "{}", self.child(node))
        }
    }
}

impl fmt::Display for Printer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Node::Num(v) => write!(f, "{v}"),
            Node::Const(c) => f.write_str(c.name()),
            Node::Var(i) => match self.vars.names().get(*i) {
                Some(name) => f.write_str(name),
                None => write!(f, "${i}"),
            },
            Node::Neg(a) => {
                f.write_str("-")?;
                self.write_min(f, a, 6)
            }
            Node::Binary(op, a, b) => {
                let (lmin, rmin) = match op {
                    BinOp::Add | BinOp::Sub => (3, 4),
                    BinOp::Mul | BinOp::Div => (4, 5),
                    BinOp::Pow => (7, 5),
                };
                self.write_min(f, a, lmin)?;
                if *op == BinOp::Pow {
                    f.write_str(op.symbol())?;
                } else {
                    write!(f, " {} ", op.symbol())?;
                }
                self.write_min(f, b, rmin)
            }
            Node::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{}", self.child(a))?;
                }
                f.write_str(")")
            }
            Node::Rel(op, a, b) => {
                self.write_min(f, a, 3)?;
                write!(f, " {} ", op.symbol())?;
                self.write_min(f, b, 3)
            }
            Node::And(items) => {
                for (i, a) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" and ")?;
                    }
                    self.write_min(f, a, 2)?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}",
            Printer {
                node: &self.root,
                vars: &self.vars
            }
        )
    }
}

pub(crate) fn render_node(node: &Node, vars: &VarOrder) -> String {
    Printer { node, vars }.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xy() -> VarOrder {
        VarOrder::new(["x", "y"]).unwrap()
    }

    #[test]
    fn sine_density_at_half_pi() {
        let vars = VarOrder::new(["x"]).unwrap();
        let ast = parse("sin(x)/sqrt(2)", &vars).unwrap();
        let v = ast.eval(&[std::f64::consts::FRAC_PI_2]).unwrap();
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn product_of_two_vars() {
        let ast = parse("x*y", &xy()).unwrap();
        assert_eq!(ast.eval(&[2.0, 3.0]).unwrap(), 6.0);
    }

    #[test]
    fn example_two_region() {
        let ast = parse("y^2 <= x and y >= 0 and y <= x - 2", &xy()).unwrap();
        assert!(ast.is_indicator());
        assert_eq!(ast.eval(&[3.0, 1.0]).unwrap(), 1.0);
        assert_eq!(ast.eval(&[3.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn power_is_right_associative() {
        assert_eq!(parse_constant("2^3^2").unwrap(), 512.0);
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        assert_eq!(parse_constant("-2^2").unwrap(), -4.0);
        assert_eq!(parse_constant("2^-1").unwrap(), 0.5);
    }

    #[test]
    fn self_difference_is_zero() {
        let vars = VarOrder::new(["x"]).unwrap();
        assert_eq!(parse("x - x", &vars).unwrap().eval(&[7.3]).unwrap(), 0.0);
    }

    #[test]
    fn log_of_negative_faults() {
        let vars = VarOrder::new(["x"]).unwrap();
        let err = parse("log(x)", &vars).unwrap().eval(&[-1.0]).unwrap_err();
        assert_eq!(err.fault, EvalFault::Log);
        assert_eq!(err.node, "log(x)");
    }

    #[test]
    fn other_domain_faults() {
        let vars = VarOrder::new(["x"]).unwrap();
        let at = |s: &str, x: f64| parse(s, &vars).unwrap().eval(&[x]).map_err(|e| e.fault);
        assert_eq!(at("sqrt(x)", -0.5), Err(EvalFault::Sqrt));
        assert_eq!(at("1/x", 0.0), Err(EvalFault::DivisionByZero));
        assert_eq!(at("x^(-1)", 0.0), Err(EvalFault::ZeroToNegativePower));
        assert_eq!(at("x^0.5", -4.0), Err(EvalFault::NotANumber));
        assert!(at("sqrt(x)", 0.0).is_ok());
    }

    #[test]
    fn free_vars_examples() {
        let one = VarOrder::new(["x"]).unwrap();
        let set = |s: &str, v: &VarOrder| -> Vec<String> {
            parse(s, v).unwrap().free_vars().into_iter().collect()
        };
        assert_eq!(set("sin(x)/sqrt(2)", &one), vec!["x"]);
        assert!(set("pi + e", &one).is_empty());
        assert_eq!(set("x*y + y", &xy()), vec!["x", "y"]);
        assert_eq!(set("y + 1", &xy()), vec!["y"]);
    }

    #[test]
    fn unknown_identifier_is_named() {
        let err = parse("x + z", &xy()).unwrap_err();
        assert_eq!(
            err,
            ExprError::UnknownIdentifier {
                name: "z".into(),
                offset: 4
            }
        );
        assert!(matches!(
            parse("foo(x)", &xy()),
            Err(ExprError::UnknownIdentifier { name, .. }) if name == "foo"
        ));
    }

    #[test]
    fn arity_errors() {
        assert!(matches!(
            parse("max(x)", &xy()),
            Err(ExprError::Arity { expected: 2, found: 1, .. })
        ));
        assert!(matches!(
            parse("sin(x, y)", &xy()),
            Err(ExprError::Arity { expected: 1, found: 2, .. })
        ));
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse("x + * y", &xy()) {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("(x + y", &xy()), Err(ExprError::Syntax { offset: 6, .. })));
        assert!(matches!(parse("x < y < 1", &xy()), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("--x", &xy()), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("x # y", &xy()), Err(ExprError::Syntax { offset: 2, .. })));
        assert_eq!(parse("   ", &xy()), Err(ExprError::Empty));
    }

    #[test]
    fn reserved_names_rejected_as_vars() {
        assert!(VarOrder::new(["pi"]).is_err());
        assert!(VarOrder::new(["e", "x"]).is_err());
        assert!(VarOrder::new(["sin"]).is_err());
        assert!(VarOrder::new(["x", "x"]).is_err());
        assert!(VarOrder::new(Vec::<String>::new()).is_err());
        assert!(VarOrder::new(["1x"]).is_err());
        assert_eq!(VarOrder::parse_list("x, y").unwrap(), xy());
    }

    #[test]
    fn relations_are_exact_indicators() {
        let ast = parse("x < y", &xy()).unwrap();
        assert_eq!(ast.eval(&[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(ast.eval(&[2.0, 2.0]).unwrap(), 0.0);
        let ast = parse("max(x <= 0, y <= 0)", &xy()).unwrap();
        assert_eq!(ast.eval(&[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(ast.eval(&[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn numeric_literals() {
        assert_eq!(parse_constant("1.5e2").unwrap(), 150.0);
        assert_eq!(parse_constant("2E-1").unwrap(), 0.2);
        assert_eq!(parse_constant(".5").unwrap(), 0.5);
        assert_eq!(parse_constant("3*pi/4").unwrap(), 3.0 * std::f64::consts::PI / 4.0);
        assert!(parse_constant("1e999").is_err());
    }

    #[test]
    fn display_reparses() {
        let texts = [
            "exp(-(x^2 + y^2 - 0.4*x*y)/1.92)/6.1563",
            "-x^2",
            "(-x)^2",
            "2^3^2",
            "(2^3)^2",
            "x - (y - 1)",
            "x / (y * 2)",
            "(x < y) and (y < 1) and x >= 0",
            "(x <= 1 and y <= 1) and x > 0",
            "min(x, -y) + max(1, 2)",
            "-(x + y)",
            "x^-y",
            "(x <= 1) + 2",
        ];
        for t in texts {
            let a = parse(t, &xy()).unwrap();
            let printed = a.to_string();
            let b = parse(&printed, &xy()).unwrap();
            assert_eq!(a, b, "{t} -> {printed}");
        }
    }
}
