use std::fmt;

use thiserror::Error;

use super::{render_node, BinOp, Func, Node, RelOp, VarOrder};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalFault {
    Log,
    Sqrt,
    DivisionByZero,
    ZeroToNegativePower,
    NotANumber,
    Dimension { expected: usize, found: usize },
}

impl fmt::Display for EvalFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalFault::Log => f.write_str("log of a non-positive value"),
            EvalFault::Sqrt => f.write_str("sqrt of a negative value"),
            EvalFault::DivisionByZero => f.write_str("division by zero"),
            EvalFault::ZeroToNegativePower => f.write_str("zero raised to a negative power"),
            EvalFault::NotANumber => f.write_str("result is not a number"),
            EvalFault::Dimension { expected, found } => {
                write!(f, "point has {found} coordinates, expected {expected}")
            }
        }
    }
}

/// Evaluation failure together with the offending sub-expression.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{fault} in `{node}`")]
pub struct EvalError {
    pub fault: EvalFault,
    pub node: String,
}

impl EvalError {
    pub(super) fn dimension(expected: usize, found: usize) -> Self {
        Self {
            fault: EvalFault::Dimension { expected, found },
            node: String::new(),
        }
    }
}

#[inline]
fn fault(fault: EvalFault, node: &Node, vars: &VarOrder) -> EvalError {
    EvalError {
        fault,
        node: render_node(node, vars),
    }
}

#[inline]
fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub(super) fn eval_node(node: &Node, x: &[f64], vars: &VarOrder) -> Result<f64, EvalError> {
    let value = match node {
        Node::Num(v) => return Ok(*v),
        Node::Const(c) => return Ok(c.value()),
        Node::Var(i) => x[*i],
        Node::Neg(a) => -eval_node(a, x, vars)?,
        Node::Binary(op, a, b) => {
            let l = eval_node(a, x, vars)?;
            match op {
                BinOp::Add => l + eval_node(b, x, vars)?,
                BinOp::Sub => l - eval_node(b, x, vars)?,
                BinOp::Mul => l * eval_node(b, x, vars)?,
                BinOp::Div => {
                    let r = eval_node(b, x, vars)?;
                    if r == 0.0 {
                        return Err(fault(EvalFault::DivisionByZero, node, vars));
                    }
                    l / r
                }
                BinOp::Pow => {
                    // small integer literal exponents take the powi path
                    if let Node::Num(k) = **b {
                        if k.fract() == 0.0 && k.abs() <= 64.0 {
                            if l == 0.0 && k < 0.0 {
                                return Err(fault(EvalFault::ZeroToNegativePower, node, vars));
                            }
                            return Ok(l.powi(k as i32));
                        }
                    }
                    let r = eval_node(b, x, vars)?;
                    if l == 0.0 && r < 0.0 {
                        return Err(fault(EvalFault::ZeroToNegativePower, node, vars));
                    }
                    l.powf(r)
                }
            }
        }
        Node::Call(func, args) => {
            let a = eval_node(&args[0], x, vars)?;
            match func {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Tan => a.tan(),
                Func::Exp => a.exp(),
                Func::Log => {
                    if a <= 0.0 {
                        return Err(fault(EvalFault::Log, node, vars));
                    }
                    a.ln()
                }
                Func::Sqrt => {
                    if a < 0.0 {
                        return Err(fault(EvalFault::Sqrt, node, vars));
                    }
                    a.sqrt()
                }
                Func::Abs => a.abs(),
                Func::Min => a.min(eval_node(&args[1], x, vars)?),
                Func::Max => a.max(eval_node(&args[1], x, vars)?),
            }
        }
        Node::Rel(op, a, b) => {
            let l = eval_node(a, x, vars)?;
            let r = eval_node(b, x, vars)?;
            return Ok(indicator(match op {
                RelOp::Le => l <= r,
                RelOp::Ge => l >= r,
                RelOp::Lt => l < r,
                RelOp::Gt => l > r,
            }));
        }
        Node::And(items) => {
            let mut acc = 1.0;
            for item in items {
                acc *= eval_node(item, x, vars)?;
            }
            acc
        }
    };
    if value.is_nan() {
        return Err(fault(EvalFault::NotANumber, node, vars));
    }
    Ok(value)
}
