//! Recursive descent over the token stream. One function per grammar level:
//!
//! ```text
//! expr   := conj
//! conj   := rel { "and" rel }
//! rel    := sum [ ("<=" | ">=" | "<" | ">") sum ]
//! sum    := term { ("+" | "-") term }
//! term   := factor { ("*" | "/") factor }
//! factor := ["-"] power
//! power  := atom [ "^" factor ]
//! atom   := number | ident | ident "(" expr { "," expr } ")" | "(" expr ")"
//! ```

use super::lexer::{tokenize, Spanned, Tok};
use super::{BinOp, Constant, ExprError, Func, Node, RelOp, VarOrder};

struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    vars: Option<&'a VarOrder>,
}

pub(super) fn parse_node(text: &str, vars: Option<&VarOrder>) -> Result<Node, ExprError> {
    let toks = tokenize(text)?;
    if toks.len() == 1 {
        return Err(ExprError::Empty);
    }
    let mut p = Parser { toks, pos: 0, vars };
    let node = p.conj()?;
    match p.peek() {
        Tok::End => Ok(node),
        _ => Err(p.unexpected("an operator or end of input")),
    }
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.offset(),
            expected: expected.to_string(),
            found: self.peek().describe(),
        }
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), ExprError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn conj(&mut self) -> Result<Node, ExprError> {
        let start = self.offset();
        let first = self.rel()?;
        let mut items = vec![first];
        while matches!(self.peek(), Tok::Ident(s) if s == "and") {
            self.bump();
            let offset = self.offset();
            items.push(self.rel()?);
            if !matches!(items[items.len() - 1], Node::Rel(..) | Node::And(_)) {
                return Err(ExprError::Syntax {
                    offset,
                    expected: "a comparison after `and`".into(),
                    found: "an arithmetic expression".into(),
                });
            }
        }
        if items.len() > 1 && !matches!(items[0], Node::Rel(..) | Node::And(_)) {
            return Err(ExprError::Syntax {
                offset: start,
                expected: "a comparison before `and`".into(),
                found: "an arithmetic expression".into(),
            });
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Node::And(items)
        })
    }

    fn rel(&mut self) -> Result<Node, ExprError> {
        let lhs = self.sum()?;
        let op = match self.peek() {
            Tok::Le => RelOp::Le,
            Tok::Ge => RelOp::Ge,
            Tok::Lt => RelOp::Lt,
            Tok::Gt => RelOp::Gt,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.sum()?;
        if matches!(self.peek(), Tok::Le | Tok::Ge | Tok::Lt | Tok::Gt) {
            return Err(self.unexpected("`and` or end of relation (chained comparisons are not allowed)"));
        }
        Ok(Node::Rel(op, Box::new(lhs), Box::new(rhs)))
    }

    fn sum(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Node, ExprError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.power()?;
            return Ok(Node::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.factor()?;
            return Ok(Node::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Node::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.conj()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let offset = self.offset();
                self.bump();
                if *self.peek() == Tok::LParen {
                    return self.call(&name, offset);
                }
                self.identifier(name, offset)
            }
            _ => Err(self.unexpected("a number, identifier or `(`")),
        }
    }

    fn identifier(&self, name: String, offset: usize) -> Result<Node, ExprError> {
        match name.as_str() {
            "pi" => return Ok(Node::Const(Constant::Pi)),
            "e" => return Ok(Node::Const(Constant::E)),
            "and" => {
                return Err(ExprError::Syntax {
                    offset,
                    expected: "an operand".into(),
                    found: "`and`".into(),
                })
            }
            _ => {}
        }
        if Func::from_name(&name).is_some() {
            return Err(ExprError::Syntax {
                offset: offset + name.len(),
                expected: format!("`(` after function `{name}`"),
                found: self.peek().describe(),
            });
        }
        match self.vars.and_then(|v| v.index_of(&name)) {
            Some(i) => Ok(Node::Var(i)),
            None => Err(ExprError::UnknownIdentifier { name, offset }),
        }
    }

    fn call(&mut self, name: &str, offset: usize) -> Result<Node, ExprError> {
        let func = Func::from_name(name).ok_or_else(|| ExprError::UnknownIdentifier {
            name: name.to_string(),
            offset,
        })?;
        self.expect(Tok::LParen, "`(`")?;
        let mut args = vec![self.conj()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            args.push(self.conj()?);
        }
        self.expect(Tok::RParen, "`,` or `)`")?;
        if args.len() != func.arity() {
            return Err(ExprError::Arity {
                func: name.to_string(),
                expected: func.arity(),
                found: args.len(),
                offset,
            });
        }
        Ok(Node::Call(func, args))
    }
}
