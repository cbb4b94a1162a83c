//! Random expression skeletons over continuous operators.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::numerics::RngStream;

/// Operators that may appear at non-leaf nodes, in sampling-table order.
pub const OPERATORS: [ExprKind; 8] = [
    ExprKind::Add,
    ExprKind::Mul,
    ExprKind::Sub,
    ExprKind::Square,
    ExprKind::Cube,
    ExprKind::Exp,
    ExprKind::Sin,
    ExprKind::Cos,
];

/// Un-normalized sampling weights aligned with [`OPERATORS`].
pub const OPERATOR_WEIGHTS: [f64; 8] = [10.0, 10.0, 5.0, 4.0, 2.0, 4.0, 4.0, 4.0];

pub const MAX_OPERATORS: usize = 5;
pub const VARIABLE_LEAF_PROB: f64 = 0.8;
pub const INTEGER_LEAF_RANGE: (usize, usize) = (1, 5);
pub const CONSTANT_RANGE: (f64, f64) = (1.0, 5.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ExprKind {
    Add,
    Mul,
    Sub,
    Square,
    Cube,
    Exp,
    Sin,
    Cos,
    Variable(usize),
    Constant(f64),
    /// Unrealized constant in a skeleton; always the left factor of a
    /// coefficient product inside a unary operator.
    Placeholder,
}

impl ExprKind {
    pub fn arity(self) -> usize {
        match self {
            ExprKind::Add | ExprKind::Mul | ExprKind::Sub => 2,
            ExprKind::Square | ExprKind::Cube | ExprKind::Exp | ExprKind::Sin | ExprKind::Cos => 1,
            ExprKind::Variable(_) | ExprKind::Constant(_) | ExprKind::Placeholder => 0,
        }
    }

    pub fn operator_index(self) -> Option<usize> {
        OPERATORS.iter().position(|&k| k == self)
    }

    fn symbol(self) -> &'static str {
        match self {
            ExprKind::Add => "add",
            ExprKind::Mul => "mul",
            ExprKind::Sub => "sub",
            ExprKind::Square => "sq",
            ExprKind::Cube => "cube",
            ExprKind::Exp => "exp",
            ExprKind::Sin => "sin",
            ExprKind::Cos => "cos",
            ExprKind::Variable(_) => "x",
            ExprKind::Constant(_) => "c",
            ExprKind::Placeholder => "C",
        }
    }
}

/// Expression tree node.
///
/// Skeletons hold [`ExprKind::Placeholder`] leaves; [`ExprNode::realize`]
/// replaces each with an independent `U(1, 5)` constant. Every unary
/// operator's argument is wrapped as `mul(C, arg)`, so sampled functions take
/// the form `sin(C·x)`. These coefficient products are structural and are not
/// counted as sampled operators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExprNode {
    pub kind: ExprKind,
    pub children: Vec<ExprNode>,
}

impl ExprNode {
    pub fn leaf(kind: ExprKind) -> Self {
        debug_assert_eq!(kind.arity(), 0);
        ExprNode {
            kind,
            children: Vec::new(),
        }
    }

    pub fn unary(kind: ExprKind, child: ExprNode) -> Self {
        debug_assert_eq!(kind.arity(), 1);
        ExprNode {
            kind,
            children: vec![child],
        }
    }

    pub fn binary(kind: ExprKind, lhs: ExprNode, rhs: ExprNode) -> Self {
        debug_assert_eq!(kind.arity(), 2);
        ExprNode {
            kind,
            children: vec![lhs, rhs],
        }
    }

    pub fn variable(index: usize) -> Self {
        Self::leaf(ExprKind::Variable(index))
    }

    pub fn constant(value: f64) -> Self {
        Self::leaf(ExprKind::Constant(value))
    }

    /// A `mul(C, arg)` coefficient product, as built by the sampler.
    fn is_coefficient_product(&self) -> bool {
        self.kind == ExprKind::Mul
            && self.children.first().map(|c| c.kind) == Some(ExprKind::Placeholder)
    }

    fn visit(&self, f: &mut impl FnMut(&ExprNode)) {
        f(self);
        for c in &self.children {
            c.visit(f);
        }
    }

    /// Sampled operators of a skeleton in pre-order, excluding coefficient
    /// products.
    pub fn operators(&self) -> Vec<ExprKind> {
        let mut out = Vec::new();
        self.visit(&mut |n| {
            if n.kind.arity() > 0 && !n.is_coefficient_product() {
                out.push(n.kind);
            }
        });
        out
    }

    pub fn arity_consistent(&self) -> bool {
        self.children.len() == self.kind.arity() && self.children.iter().all(Self::arity_consistent)
    }

    pub fn placeholder_count(&self) -> usize {
        let mut k = 0;
        self.visit(&mut |n| {
            if n.kind == ExprKind::Placeholder {
                k += 1;
            }
        });
        k
    }

    /// Replaces every placeholder with an independent draw from `U(1, 5)`.
    pub fn realize(&self, rng: &mut RngStream) -> ExprNode {
        match self.kind {
            ExprKind::Placeholder => {
                ExprNode::constant(rng.uniform(CONSTANT_RANGE.0, CONSTANT_RANGE.1))
            }
            _ => ExprNode {
                kind: self.kind,
                children: self.children.iter().map(|c| c.realize(rng)).collect(),
            },
        }
    }

    /// Canonical string with realized constants stripped back to `C`.
    ///
    /// Integer leaves stay literal since they are part of the skeleton.
    pub fn skeleton_key(&self) -> String {
        let mut s = String::new();
        self.write_key(&mut s);
        s
    }

    fn write_key(&self, out: &mut String) {
        match self.kind {
            ExprKind::Variable(i) => out.push_str(&format!("x{i}")),
            ExprKind::Constant(v) if v.fract() == 0.0 => out.push_str(&format!("{v}")),
            ExprKind::Constant(_) | ExprKind::Placeholder => out.push('C'),
            k => {
                out.push_str(k.symbol());
                out.push('(');
                for (i, c) in self.children.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    c.write_key(out);
                }
                out.push(')');
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let arg = |i: usize| self.children[i].eval(x);
        match self.kind {
            ExprKind::Add => arg(0) + arg(1),
            ExprKind::Mul => arg(0) * arg(1),
            ExprKind::Sub => arg(0) - arg(1),
            ExprKind::Square => arg(0).powi(2),
            ExprKind::Cube => arg(0).powi(3),
            ExprKind::Exp => arg(0).exp(),
            ExprKind::Sin => arg(0).sin(),
            ExprKind::Cos => arg(0).cos(),
            ExprKind::Variable(i) => x[i],
            ExprKind::Constant(v) => v,
            ExprKind::Placeholder => f64::NAN,
        }
    }
}

impl fmt::Display for ExprNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.children;
        match self.kind {
            ExprKind::Add => write!(f, "({} + {})", c[0], c[1]),
            ExprKind::Mul => write!(f, "({} * {})", c[0], c[1]),
            ExprKind::Sub => write!(f, "({} - {})", c[0], c[1]),
            ExprKind::Square => write!(f, "({})^2", c[0]),
            ExprKind::Cube => write!(f, "({})^3", c[0]),
            ExprKind::Exp => write!(f, "exp({})", c[0]),
            ExprKind::Sin => write!(f, "sin({})", c[0]),
            ExprKind::Cos => write!(f, "cos({})", c[0]),
            ExprKind::Variable(i) => write!(f, "x{}", i + 1),
            ExprKind::Constant(v) => write!(f, "{v}"),
            ExprKind::Placeholder => write!(f, "C"),
        }
    }
}

/// Samples an expression skeleton over `d_x` variables.
///
/// The operator count is uniform on `1..=5`. Operators are placed one at a
/// time into a uniformly chosen open slot, each kind drawn from
/// [`OPERATOR_WEIGHTS`]; remaining slots become leaves (a variable with
/// probability 0.8, otherwise an integer in `1..=5`).
pub fn sample_expression(d_x: usize, rng: &mut RngStream) -> ExprNode {
    assert!(d_x >= 1, "expression needs at least one variable");
    let num_ops = rng.int_inclusive(1, MAX_OPERATORS);

    enum Slot {
        Open,
        Filled(ExprKind, Vec<usize>),
    }
    let mut arena = vec![Slot::Open];
    let mut open = vec![0usize];
    for _ in 0..num_ops {
        let pick = rng.int_inclusive(0, open.len() - 1);
        let slot = open.swap_remove(pick);
        let kind = OPERATORS[rng.weighted_index(&OPERATOR_WEIGHTS)];
        let mut children = Vec::new();
        if kind.arity() == 1 {
            // coefficient product mul(C, arg)
            let placeholder = arena.len();
            arena.push(Slot::Filled(ExprKind::Placeholder, vec![]));
            let arg = arena.len();
            arena.push(Slot::Open);
            open.push(arg);
            let product = arena.len();
            arena.push(Slot::Filled(ExprKind::Mul, vec![placeholder, arg]));
            children.push(product);
        } else {
            for _ in 0..2 {
                let child = arena.len();
                arena.push(Slot::Open);
                open.push(child);
                children.push(child);
            }
        }
        arena[slot] = Slot::Filled(kind, children);
    }
    for slot in open {
        let kind = if rng.bernoulli(VARIABLE_LEAF_PROB) {
            ExprKind::Variable(rng.int_inclusive(0, d_x - 1))
        } else {
            ExprKind::Constant(
                rng.int_inclusive(INTEGER_LEAF_RANGE.0, INTEGER_LEAF_RANGE.1) as f64,
            )
        };
        arena[slot] = Slot::Filled(kind, vec![]);
    }

    fn build(arena: &[Slot], i: usize) -> ExprNode {
        match &arena[i] {
            Slot::Filled(kind, children) => ExprNode {
                kind: *kind,
                children: children.iter().map(|&c| build(arena, c)).collect(),
            },
            Slot::Open => unreachable!("all slots are filled before building"),
        }
    }
    build(&arena, 0)
}
