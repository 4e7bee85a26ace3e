//! Expressions flattened to a postfix program over indexed variables, for the
//! hot loops of numerical integration.

use super::{apply_binary, apply_unary, BinaryOp, EvalError, Expr, UnaryOp};

#[derive(Clone, Debug)]
enum Op {
    Const(f64),
    Load(usize),
    Unary(UnaryOp, usize),
    Binary(BinaryOp, usize),
}

/// An expression with variables resolved to slot indices.
#[derive(Clone, Debug)]
pub struct CompiledExpr {
    ops: Vec<Op>,
    /// Rendered source of every fallible node, for domain-error reports.
    nodes: Vec<String>,
    depth: usize,
}

impl CompiledExpr {
    pub fn new(e: &Expr, vars: &[&str]) -> Result<Self, EvalError> {
        let mut out = CompiledExpr {
            ops: Vec::new(),
            nodes: Vec::new(),
            depth: 0,
        };
        let mut depth = 0;
        out.emit(e, vars, &mut depth)?;
        Ok(out)
    }

    fn emit(&mut self, e: &Expr, vars: &[&str], depth: &mut usize) -> Result<(), EvalError> {
        match e {
            Expr::Const(c) => self.ops.push(Op::Const(*c)),
            Expr::Var(name) => {
                let slot = vars
                    .iter()
                    .position(|v| v == name)
                    .ok_or_else(|| EvalError::Unbound(name.clone()))?;
                self.ops.push(Op::Load(slot));
            }
            Expr::Unary(op, a) => {
                self.emit(a, vars, depth)?;
                self.nodes.push(e.to_string());
                self.ops.push(Op::Unary(*op, self.nodes.len() - 1));
                *depth -= 1;
            }
            Expr::Binary(op, a, b) => {
                self.emit(a, vars, depth)?;
                self.emit(b, vars, depth)?;
                self.nodes.push(e.to_string());
                self.ops.push(Op::Binary(*op, self.nodes.len() - 1));
                *depth -= 2;
            }
        }
        *depth += 1;
        self.depth = self.depth.max(*depth);
        Ok(())
    }

    pub fn eval(&self, values: &[f64]) -> Result<f64, EvalError> {
        let mut stack: Vec<f64> = Vec::with_capacity(self.depth);
        for op in &self.ops {
            match *op {
                Op::Const(c) => stack.push(c),
                Op::Load(slot) => stack.push(values[slot]),
                Op::Unary(u, node) => {
                    let x = stack.pop().expect("stack underflow");
                    let v = apply_unary(u, x).map_err(|reason| self.domain(node, reason))?;
                    stack.push(v);
                }
                Op::Binary(b, node) => {
                    let y = stack.pop().expect("stack underflow");
                    let x = stack.pop().expect("stack underflow");
                    let v = apply_binary(b, x, y).map_err(|reason| self.domain(node, reason))?;
                    stack.push(v);
                }
            }
        }
        Ok(stack.pop().expect("empty program"))
    }

    fn domain(&self, node: usize, reason: &'static str) -> EvalError {
        EvalError::Domain {
            node: self.nodes[node].clone(),
            reason,
        }
    }
}
