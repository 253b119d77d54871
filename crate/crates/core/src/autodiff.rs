//! Tape-based reverse-mode automatic differentiation over scalar
//! expressions, with support for differentiating through a gradient
//! (double backpropagation).
//!
//! Expressions are recorded eagerly on a [`Tape`]: every operation appends a
//! node holding its operands and value. Two backward passes are available:
//!
//! - [`Tape::grad`] accumulates plain `f64` adjoints (a first-order
//!   gradient),
//! - [`Tape::grad_vars`] emits the adjoint computation as new tape nodes, so
//!   the gradient is itself a differentiable expression. Running the numeric
//!   pass over such an expression yields second-order quantities like
//!   `grad(1/2 ||grad f||^2) = Hessian(f) * grad(f)` without any finite
//!   differences.
//!
//! Tapes are straight-line: there is no recorded control flow, the stable
//! branches inside `sigmoid` / `log_sigmoid` live in the node evaluation
//! itself. A recorded tape can therefore be re-evaluated at new leaf values
//! with [`Tape::reevaluate`], which is what the finite-difference Jacobian
//! drivers rely on; re-evaluation reproduces the exact bits a fresh
//! recording would produce.

use std::cell::RefCell;
use std::rc::Rc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdError {
    #[error("non-finite value in {context} (log/div evaluated outside its domain upstream)")]
    NonFinite { context: &'static str },
    #[error("tape has {expected} input slots, got {got} values")]
    InputMismatch { expected: usize, got: usize },
}

/// ReLU derivative convention: the subgradient at zero is 0.
fn step(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Numerically stable logistic sigmoid.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable log(sigmoid(x)).
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Input(usize),
    Const(f64),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Exp(usize),
    Ln(usize),
    Tanh(usize),
    Relu(usize),
    /// Heaviside step; derivative of relu. Its own derivative is 0.
    Step(usize),
    Sigmoid(usize),
    LogSigmoid(usize),
    Square(usize),
}

fn eval_op(op: Op, vals: &[f64]) -> f64 {
    match op {
        Op::Input(_) | Op::Const(_) => unreachable!("leaves are evaluated by forward_pass"),
        Op::Add(a, b) => vals[a] + vals[b],
        Op::Sub(a, b) => vals[a] - vals[b],
        Op::Mul(a, b) => vals[a] * vals[b],
        Op::Div(a, b) => vals[a] / vals[b],
        Op::Neg(a) => -vals[a],
        Op::Exp(a) => vals[a].exp(),
        Op::Ln(a) => vals[a].ln(),
        Op::Tanh(a) => vals[a].tanh(),
        Op::Relu(a) => relu(vals[a]),
        Op::Step(a) => step(vals[a]),
        Op::Sigmoid(a) => sigmoid(vals[a]),
        Op::LogSigmoid(a) => log_sigmoid(vals[a]),
        Op::Square(a) => vals[a] * vals[a],
    }
}

fn forward_pass(ops: &[Op], vals: &mut [f64], inputs: &[f64]) {
    for (i, op) in ops.iter().enumerate() {
        vals[i] = match *op {
            Op::Input(slot) => inputs[slot],
            Op::Const(c) => c,
            _ => eval_op(*op, vals),
        };
    }
}

#[derive(Debug, Default)]
struct TapeInner {
    ops: Vec<Op>,
    vals: Vec<f64>,
    /// Current leaf values, in slot order.
    input_values: Vec<f64>,
}

/// Recording tape. Cheap to clone (shared handle); single-threaded.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

/// A scalar value recorded on a tape.
#[derive(Debug, Clone)]
pub struct Var {
    tape: Tape,
    idx: usize,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_inputs(&self) -> usize {
        self.inner.borrow().input_values.len()
    }

    fn same(a: &Tape, b: &Tape) -> bool {
        Rc::ptr_eq(&a.inner, &b.inner)
    }

    fn push_node(&self, op: Op, val: f64) -> Var {
        let mut inner = self.inner.borrow_mut();
        let idx = inner.ops.len();
        inner.ops.push(op);
        inner.vals.push(val);
        Var {
            tape: self.clone(),
            idx,
        }
    }

    fn push(&self, op: Op) -> Var {
        let val = eval_op(op, &self.inner.borrow().vals);
        self.push_node(op, val)
    }

    /// Registers a new differentiable leaf.
    pub fn input(&self, value: f64) -> Var {
        let slot = {
            let mut inner = self.inner.borrow_mut();
            inner.input_values.push(value);
            inner.input_values.len() - 1
        };
        self.push_node(Op::Input(slot), value)
    }

    pub fn inputs(&self, values: &[f64]) -> Vec<Var> {
        values.iter().map(|&v| self.input(v)).collect()
    }

    pub fn constant(&self, value: f64) -> Var {
        self.push_node(Op::Const(value), value)
    }

    pub fn value(&self, v: &Var) -> f64 {
        debug_assert!(Tape::same(self, &v.tape));
        self.inner.borrow().vals[v.idx]
    }

    /// Replaces the leaf values (in slot order) and recomputes every node in
    /// topological order. Re-evaluation is bit-identical to recording the
    /// same expression fresh at the new point.
    pub fn reevaluate(&self, values: &[f64]) -> Result<(), AdError> {
        let mut inner = self.inner.borrow_mut();
        if values.len() != inner.input_values.len() {
            return Err(AdError::InputMismatch {
                expected: inner.input_values.len(),
                got: values.len(),
            });
        }
        inner.input_values.clear();
        inner.input_values.extend_from_slice(values);
        let TapeInner {
            ops,
            vals,
            input_values,
        } = &mut *inner;
        forward_pass(ops, vals, input_values);
        Ok(())
    }

    /// First-order reverse pass: numeric gradient of `output` with respect
    /// to `wrt` at the currently stored values.
    pub fn grad(&self, output: &Var, wrt: &[Var]) -> Result<Vec<f64>, AdError> {
        debug_assert!(Tape::same(self, &output.tape));
        let inner = self.inner.borrow();
        let k = output.idx;
        if !inner.vals[k].is_finite() {
            return Err(AdError::NonFinite {
                context: "output value",
            });
        }
        let ops = &inner.ops;
        let vals = &inner.vals;
        let mut adj = vec![0.0; k + 1];
        adj[k] = 1.0;
        for i in (0..=k).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            match ops[i] {
                Op::Input(_) | Op::Const(_) => {}
                Op::Add(p, q) => {
                    adj[p] += a;
                    adj[q] += a;
                }
                Op::Sub(p, q) => {
                    adj[p] += a;
                    adj[q] -= a;
                }
                Op::Mul(p, q) => {
                    adj[p] += a * vals[q];
                    adj[q] += a * vals[p];
                }
                Op::Div(p, q) => {
                    adj[p] += a / vals[q];
                    adj[q] -= a * vals[i] / vals[q];
                }
                Op::Neg(p) => adj[p] -= a,
                Op::Exp(p) => adj[p] += a * vals[i],
                Op::Ln(p) => adj[p] += a / vals[p],
                Op::Tanh(p) => {
                    let y = vals[i];
                    adj[p] += a * (1.0 - y * y);
                }
                Op::Relu(p) => adj[p] += a * step(vals[p]),
                Op::Step(_) => {}
                Op::Sigmoid(p) => {
                    let y = vals[i];
                    adj[p] += a * y * (1.0 - y);
                }
                Op::LogSigmoid(p) => adj[p] += a * sigmoid(-vals[p]),
                Op::Square(p) => adj[p] += a * 2.0 * vals[p],
            }
        }
        let g: Vec<f64> = wrt
            .iter()
            .map(|v| {
                debug_assert!(Tape::same(self, &v.tape));
                if v.idx <= k {
                    adj[v.idx]
                } else {
                    0.0
                }
            })
            .collect();
        if g.iter().any(|x| !x.is_finite()) {
            return Err(AdError::NonFinite {
                context: "gradient value",
            });
        }
        Ok(g)
    }

    /// Reverse pass that emits the adjoint computation as tape nodes, so the
    /// returned gradient components are themselves differentiable.
    pub fn grad_vars(&self, output: &Var, wrt: &[Var]) -> Result<Vec<Var>, AdError> {
        debug_assert!(Tape::same(self, &output.tape));
        let k = output.idx;
        if !self.value(output).is_finite() {
            return Err(AdError::NonFinite {
                context: "output value",
            });
        }
        let mut adj: Vec<Option<Var>> = vec![None; k + 1];
        adj[k] = Some(self.constant(1.0));
        for i in (0..=k).rev() {
            let Some(a) = adj[i].clone() else { continue };
            let op = self.inner.borrow().ops[i];
            let node = Var {
                tape: self.clone(),
                idx: i,
            };
            match op {
                Op::Input(_) | Op::Const(_) | Op::Step(_) => {}
                Op::Add(p, q) => {
                    self.accumulate(&mut adj, p, a.clone());
                    self.accumulate(&mut adj, q, a);
                }
                Op::Sub(p, q) => {
                    self.accumulate(&mut adj, p, a.clone());
                    self.accumulate_neg(&mut adj, q, a);
                }
                Op::Mul(p, q) => {
                    let vp = Var {
                        tape: self.clone(),
                        idx: p,
                    };
                    let vq = Var {
                        tape: self.clone(),
                        idx: q,
                    };
                    self.accumulate(&mut adj, p, &a * &vq);
                    self.accumulate(&mut adj, q, &a * &vp);
                }
                Op::Div(p, q) => {
                    let vq = Var {
                        tape: self.clone(),
                        idx: q,
                    };
                    self.accumulate(&mut adj, p, &a / &vq);
                    // d(a/b)/db = -(a/b)/b
                    self.accumulate_neg(&mut adj, q, &(&a * &node) / &vq);
                }
                Op::Neg(p) => self.accumulate_neg(&mut adj, p, a),
                Op::Exp(p) => self.accumulate(&mut adj, p, &a * &node),
                Op::Ln(p) => {
                    let vp = Var {
                        tape: self.clone(),
                        idx: p,
                    };
                    self.accumulate(&mut adj, p, &a / &vp);
                }
                Op::Tanh(p) => {
                    let d = 1.0 - node.square();
                    self.accumulate(&mut adj, p, &a * &d);
                }
                Op::Relu(p) => {
                    let d = self.push(Op::Step(p));
                    self.accumulate(&mut adj, p, &a * &d);
                }
                Op::Sigmoid(p) => {
                    let d = &node * &(1.0 - &node);
                    self.accumulate(&mut adj, p, &a * &d);
                }
                Op::LogSigmoid(p) => {
                    let vp = Var {
                        tape: self.clone(),
                        idx: p,
                    };
                    let d = (-&vp).sigmoid();
                    self.accumulate(&mut adj, p, &a * &d);
                }
                Op::Square(p) => {
                    let vp = Var {
                        tape: self.clone(),
                        idx: p,
                    };
                    let d = &vp + &vp;
                    self.accumulate(&mut adj, p, &a * &d);
                }
            }
        }
        let grads: Vec<Var> = wrt
            .iter()
            .map(|v| {
                debug_assert!(Tape::same(self, &v.tape));
                if v.idx <= k {
                    adj[v.idx].clone().unwrap_or_else(|| self.constant(0.0))
                } else {
                    self.constant(0.0)
                }
            })
            .collect();
        if grads.iter().any(|g| !self.value(g).is_finite()) {
            return Err(AdError::NonFinite {
                context: "gradient value",
            });
        }
        Ok(grads)
    }

    fn accumulate(&self, adj: &mut [Option<Var>], target: usize, term: Var) {
        adj[target] = Some(match adj[target].take() {
            Some(prev) => &prev + &term,
            None => term,
        });
    }

    fn accumulate_neg(&self, adj: &mut [Option<Var>], target: usize, term: Var) {
        adj[target] = Some(match adj[target].take() {
            Some(prev) => &prev - &term,
            None => -&term,
        });
    }

    /// Sum of the given vars; an empty slice sums to a constant 0.
    pub fn sum(&self, vars: &[Var]) -> Var {
        match vars.split_first() {
            None => self.constant(0.0),
            Some((first, rest)) => rest.iter().fold(first.clone(), |acc, v| &acc + v),
        }
    }

    /// Dot product of two equal-length var slices.
    pub fn dot(&self, a: &[Var], b: &[Var]) -> Var {
        assert_eq!(a.len(), b.len(), "dot length mismatch");
        let products: Vec<Var> = a.iter().zip(b).map(|(x, y)| x * y).collect();
        self.sum(&products)
    }

    /// Smallest |input| over all relu nodes currently on the tape, if any.
    ///
    /// A margin well above the finite-difference step certifies that no relu
    /// kink lies between probe points, i.e. the expression is smooth there.
    pub fn min_abs_relu_input(&self) -> Option<f64> {
        let inner = self.inner.borrow();
        let mut min: Option<f64> = None;
        for op in &inner.ops {
            if let Op::Relu(p) = op {
                let m = inner.vals[*p].abs();
                min = Some(match min {
                    Some(cur) => cur.min(m),
                    None => m,
                });
            }
        }
        min
    }
}

impl Var {
    pub fn value(&self) -> f64 {
        self.tape.value(self)
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn exp(&self) -> Var {
        self.tape.push(Op::Exp(self.idx))
    }

    pub fn ln(&self) -> Var {
        self.tape.push(Op::Ln(self.idx))
    }

    pub fn tanh(&self) -> Var {
        self.tape.push(Op::Tanh(self.idx))
    }

    pub fn relu(&self) -> Var {
        self.tape.push(Op::Relu(self.idx))
    }

    pub fn sigmoid(&self) -> Var {
        self.tape.push(Op::Sigmoid(self.idx))
    }

    pub fn log_sigmoid(&self) -> Var {
        self.tape.push(Op::LogSigmoid(self.idx))
    }

    pub fn square(&self) -> Var {
        self.tape.push(Op::Square(self.idx))
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $op:ident) => {
        impl std::ops::$trait<&Var> for &Var {
            type Output = Var;
            fn $method(self, rhs: &Var) -> Var {
                debug_assert!(Tape::same(&self.tape, &rhs.tape), "vars from different tapes");
                self.tape.push(Op::$op(self.idx, rhs.idx))
            }
        }
        impl std::ops::$trait<Var> for Var {
            type Output = Var;
            fn $method(self, rhs: Var) -> Var {
                std::ops::$trait::$method(&self, &rhs)
            }
        }
        impl std::ops::$trait<&Var> for Var {
            type Output = Var;
            fn $method(self, rhs: &Var) -> Var {
                std::ops::$trait::$method(&self, rhs)
            }
        }
        impl std::ops::$trait<Var> for &Var {
            type Output = Var;
            fn $method(self, rhs: Var) -> Var {
                std::ops::$trait::$method(self, &rhs)
            }
        }
        impl std::ops::$trait<f64> for &Var {
            type Output = Var;
            fn $method(self, rhs: f64) -> Var {
                let c = self.tape.constant(rhs);
                std::ops::$trait::$method(self, &c)
            }
        }
        impl std::ops::$trait<f64> for Var {
            type Output = Var;
            fn $method(self, rhs: f64) -> Var {
                std::ops::$trait::$method(&self, rhs)
            }
        }
        impl std::ops::$trait<&Var> for f64 {
            type Output = Var;
            fn $method(self, rhs: &Var) -> Var {
                let c = rhs.tape.constant(self);
                std::ops::$trait::$method(&c, rhs)
            }
        }
        impl std::ops::$trait<Var> for f64 {
            type Output = Var;
            fn $method(self, rhs: Var) -> Var {
                std::ops::$trait::$method(self, &rhs)
            }
        }
    };
}

impl_binop!(Add, add, Add);
impl_binop!(Sub, sub, Sub);
impl_binop!(Mul, mul, Mul);
impl_binop!(Div, div, Div);

impl std::ops::Neg for &Var {
    type Output = Var;
    fn neg(self) -> Var {
        self.tape.push(Op::Neg(self.idx))
    }
}

impl std::ops::Neg for Var {
    type Output = Var;
    fn neg(self) -> Var {
        -&self
    }
}

/// Gradient of a recorded scalar function at `x`.
pub fn grad<F>(scalar_fn: F, x: &[f64]) -> Result<Vec<f64>, AdError>
where
    F: FnOnce(&Tape, &[Var]) -> Var,
{
    let tape = Tape::new();
    let vars = tape.inputs(x);
    let out = scalar_fn(&tape, &vars);
    tape.grad(&out, &vars)
}

/// Builds `1/2 ||field||^2` as a tape expression.
pub fn half_squared_norm(tape: &Tape, field: &[Var]) -> Var {
    let squares: Vec<Var> = field.iter().map(|v| v.square()).collect();
    tape.sum(&squares) * 0.5
}

/// Evaluates a vector field `v(x)` built as a differentiable expression and
/// the gradient of `L(x) = 1/2 ||v(x)||^2`, which equals `v'(x)^T v(x)`.
///
/// The components of `v` may themselves be gradients produced by
/// [`Tape::grad_vars`]; that is the double-backpropagation path.
pub fn grad_norm_grad<F>(field_builder: F, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), AdError>
where
    F: FnOnce(&Tape, &[Var]) -> Vec<Var>,
{
    let tape = Tape::new();
    let vars = tape.inputs(x);
    let field = field_builder(&tape, &vars);
    let v: Vec<f64> = field.iter().map(|f| f.value()).collect();
    if v.iter().any(|c| !c.is_finite()) {
        return Err(AdError::NonFinite {
            context: "field value",
        });
    }
    let l = half_squared_norm(&tape, &field);
    let gl = tape.grad(&l, &vars)?;
    Ok((v, gl))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn grad_of_half_norm_squared_is_identity() {
        let g = grad(
            |tape, xs| half_squared_norm(tape, xs),
            &[3.0, 4.0],
        )
        .unwrap();
        assert_eq!(g, vec![3.0, 4.0]);
    }

    #[test]
    fn grad_of_bilinear() {
        let g = grad(|_, xs| &xs[0] * &xs[1], &[2.0, 5.0]).unwrap();
        assert_eq!(g, vec![5.0, 2.0]);
    }

    #[test]
    fn grad_of_log_sigmoid_at_zero() {
        let g = grad(|_, xs| xs[0].log_sigmoid(), &[0.0]).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let g = grad(|_, xs| xs[0].relu(), &[0.0]).unwrap();
        assert_eq!(g[0], 0.0);
        let g = grad(|_, xs| xs[0].relu(), &[1.5]).unwrap();
        assert_eq!(g[0], 1.0);
        let g = grad(|_, xs| xs[0].relu(), &[-1.5]).unwrap();
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn ln_outside_domain_propagates_error() {
        let r = grad(|_, xs| xs[0].ln(), &[-1.0]);
        assert!(matches!(r, Err(AdError::NonFinite { .. })));
    }

    #[test]
    fn division_by_zero_propagates_error() {
        let r = grad(|_, xs| 1.0 / &xs[0], &[0.0]);
        assert!(matches!(r, Err(AdError::NonFinite { .. })));
    }

    #[test]
    fn composite_gradient_matches_finite_differences() {
        let f = |tape: &Tape, xs: &[Var]| -> Var {
            let a = &xs[0];
            let b = &xs[1];
            let t1 = (a * b).exp();
            let t2 = 1.0 + a.tanh().square();
            let t3 = (2.0 + b.sigmoid()).ln();
            let t4 = (a - 0.5).relu();
            let d = tape.dot(xs, xs);
            &t1 / &t2 + &t3 * &t4 + d
        };
        let x = [0.8, -0.6];
        let g = grad(f, &x).unwrap();
        let eps = 1e-6;
        for i in 0..2 {
            let mut xp = x;
            xp[i] += eps;
            let tape = Tape::new();
            let fp = f(&tape, &tape.inputs(&xp)).value();
            let mut xm = x;
            xm[i] -= eps;
            let tape = Tape::new();
            let fm = f(&tape, &tape.inputs(&xm)).value();
            let fd = (fp - fm) / (2.0 * eps);
            assert!(rel_close(g[i], fd, 1e-7), "i={i}: {} vs {}", g[i], fd);
        }
    }

    #[test]
    fn second_order_via_grad_vars() {
        // f(x) = x^3, f' = 3x^2, d/dx (1/2 f'^2) = f'' f' = 18 x^3.
        let x = 2.0;
        let (v, gl) = grad_norm_grad(
            |tape, xs| {
                let f = &(&xs[0] * &xs[0]) * &xs[0];
                tape.grad_vars(&f, xs).unwrap()
            },
            &[x],
        )
        .unwrap();
        assert!((v[0] - 12.0).abs() < 1e-12);
        assert!((gl[0] - 144.0).abs() < 1e-9);
    }

    #[test]
    fn grad_norm_grad_of_linear_rotation_field() {
        // v(x) = Ax with A = [[0,1],[-1,0]]; grad L = A^T v.
        let (v, gl) = grad_norm_grad(
            |_, xs| vec![xs[1].clone(), -&xs[0]],
            &[1.0, 2.0],
        )
        .unwrap();
        assert_eq!(v, vec![2.0, -1.0]);
        assert_eq!(gl, vec![1.0, 2.0]);
    }

    #[test]
    fn grad_norm_grad_of_zero_field() {
        let (v, gl) = grad_norm_grad(
            |tape, _| vec![tape.constant(0.0), tape.constant(0.0)],
            &[0.3, -0.4],
        )
        .unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
        assert_eq!(gl, vec![0.0, 0.0]);
    }

    #[test]
    fn taping_is_deterministic() {
        let run = || {
            grad(
                |tape, xs| {
                    let t = (&xs[0] * 1.7).tanh() + xs[1].sigmoid().ln();
                    let s = tape.sum(&[t.clone(), xs[0].exp()]);
                    s.square()
                },
                &[0.123456789, 0.987654321],
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn reevaluation_matches_fresh_recording() {
        let build = |_: &Tape, xs: &[Var]| -> Var {
            (&xs[0] * &xs[1]).exp() + xs[0].relu() * xs[1].sigmoid()
        };
        let tape = Tape::new();
        let xs = tape.inputs(&[0.4, -0.3]);
        let out = build(&tape, &xs);
        let g1 = tape.grad(&out, &xs).unwrap();

        // Move to a new point via re-evaluation.
        tape.reevaluate(&[-0.9, 1.2]).unwrap();
        let g2 = tape.grad(&out, &xs).unwrap();

        // Fresh recordings at both points.
        let fresh = |x: &[f64]| {
            let t = Tape::new();
            let vs = t.inputs(x);
            let o = build(&t, &vs);
            t.grad(&o, &vs).unwrap()
        };
        let f1 = fresh(&[0.4, -0.3]);
        let f2 = fresh(&[-0.9, 1.2]);
        assert_eq!(g2, f2);
        // Going back also reproduces the original bits.
        tape.reevaluate(&[0.4, -0.3]).unwrap();
        let g1_again = tape.grad(&out, &xs).unwrap();
        assert_eq!(g1, f1);
        assert_eq!(g1, g1_again);
    }

    #[test]
    fn grad_vars_reevaluates_across_relu_kink() {
        // The step factor must be re-derived from the new input, not frozen.
        let tape = Tape::new();
        let xs = tape.inputs(&[1.0]);
        let f = xs[0].relu().square() * 0.5;
        let gf = tape.grad_vars(&f, &xs).unwrap();
        assert_eq!(gf[0].value(), 1.0);
        tape.reevaluate(&[-2.0]).unwrap();
        assert_eq!(gf[0].value(), 0.0);
        tape.reevaluate(&[3.0]).unwrap();
        assert_eq!(gf[0].value(), 3.0);
    }

    #[test]
    fn min_abs_relu_input_reports_margin() {
        let tape = Tape::new();
        let xs = tape.inputs(&[0.5, -0.2]);
        let _ = xs[0].relu() + xs[1].relu();
        assert_eq!(tape.min_abs_relu_input(), Some(0.2));
        let empty = Tape::new();
        let _ = empty.inputs(&[1.0]);
        assert_eq!(empty.min_abs_relu_input(), None);
    }
}
