//! Expression-graph automatic differentiation with nested (second-order)
//! derivatives.
//!
//! The engine keeps a flat arena of nodes; children always precede parents,
//! so a single index sweep evaluates the whole graph and a reverse sweep
//! accumulates adjoints. The adjoint pass comes in two flavours:
//!
//! * [`Graph::grad_values`] — numeric reverse mode, used in the training
//!   hot path.
//! * [`Graph::grad_exprs`] — the adjoint pass *emits new graph nodes*, so a
//!   gradient is itself an expression and can be differentiated again.
//!   Physics residuals (input derivatives of network outputs) and
//!   Hessian-vector products are built this way.
//!
//! A built graph with frozen values is immutable and may be read from many
//! threads; construction and value mutation are single-threaded per graph.

use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`] arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ExprId(pub(crate) u32);

/// Handle to a variable slot of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub(crate) u32);

impl ExprId {
    #[inline]
    fn idx(self) -> usize {
        self.0 as usize
    }
}

impl VarId {
    #[inline]
    pub fn slot(self) -> usize {
        self.0 as usize
    }
}

/// Unary primitives beyond the structural node kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryFn {
    Exp,
    Ln,
    Sin,
    Cos,
    Recip,
}

#[derive(Debug, Clone, Copy)]
enum Node {
    Const(f64),
    Var(u32),
    /// N-ary sum; children live in `Graph::children[start..start+len]`.
    Sum {
        start: u32,
        len: u32,
    },
    Prod(ExprId, ExprId),
    /// Power with a constant exponent.
    Pow(ExprId, f64),
    Tanh(ExprId),
    Unary(UnaryFn, ExprId),
}

/// Acyclic expression graph over an ordered variable set.
///
/// Variable order is fixed for the lifetime of a computation so gradients
/// are position-stable. Each variable has exactly one canonical node.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    children: Vec<ExprId>,
    var_names: Vec<String>,
    var_nodes: Vec<ExprId>,
}

/// Ordered variable assignment for a graph; `values[slot]` binds the
/// variable with that slot.
#[derive(Debug, Clone, Default)]
pub struct VarSet {
    pub values: Vec<f64>,
}

impl VarSet {
    pub fn new(values: Vec<f64>) -> Self {
        VarSet { values }
    }
}

/// Scratch buffers reused across evaluations of one graph.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    pub values: Vec<f64>,
    adjoints: Vec<f64>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn var_count(&self) -> usize {
        self.var_names.len()
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.var_names[v.slot()]
    }

    /// Canonical node of a variable.
    pub fn var_expr(&self, v: VarId) -> ExprId {
        self.var_nodes[v.slot()]
    }

    fn push(&mut self, node: Node) -> ExprId {
        let id = ExprId(self.nodes.len() as u32);
        self.nodes.push(node);
        id
    }

    /// Register a new variable. Identifiers must be unique.
    pub fn var(&mut self, name: impl Into<String>) -> Result<VarId> {
        let name = name.into();
        if self.var_names.iter().any(|n| *n == name) {
            return Err(Error::config(format!("duplicate variable `{name}`")));
        }
        let slot = self.var_names.len() as u32;
        self.var_names.push(name);
        let node = self.push(Node::Var(slot));
        self.var_nodes.push(node);
        Ok(VarId(slot))
    }

    /// Register `n` variables named `prefix[0..n]`, returning the first slot.
    pub fn var_block(&mut self, prefix: &str, n: usize) -> Result<Vec<VarId>> {
        (0..n).map(|i| self.var(format!("{prefix}[{i}]"))).collect()
    }

    pub fn constant(&mut self, value: f64) -> ExprId {
        self.push(Node::Const(value))
    }

    fn const_value(&self, id: ExprId) -> Option<f64> {
        match self.nodes[id.idx()] {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    /// N-ary sum with light folding: zero terms are dropped and constants
    /// are merged.
    pub fn sum(&mut self, terms: &[ExprId]) -> ExprId {
        let mut acc_const = 0.0;
        let mut rest: Vec<ExprId> = Vec::with_capacity(terms.len());
        for &t in terms {
            match self.const_value(t) {
                Some(c) => acc_const += c,
                None => rest.push(t),
            }
        }
        if acc_const != 0.0 || rest.is_empty() {
            let c = self.constant(acc_const);
            rest.push(c);
        }
        if rest.len() == 1 {
            return rest[0];
        }
        let start = self.children.len() as u32;
        let len = rest.len() as u32;
        self.children.extend_from_slice(&rest);
        self.push(Node::Sum { start, len })
    }

    pub fn add(&mut self, a: ExprId, b: ExprId) -> ExprId {
        self.sum(&[a, b])
    }

    pub fn sub(&mut self, a: ExprId, b: ExprId) -> ExprId {
        let nb = self.neg(b);
        self.sum(&[a, nb])
    }

    pub fn neg(&mut self, a: ExprId) -> ExprId {
        let m1 = self.constant(-1.0);
        self.mul(m1, a)
    }

    pub fn mul(&mut self, a: ExprId, b: ExprId) -> ExprId {
        match (self.const_value(a), self.const_value(b)) {
            (Some(x), Some(y)) => self.constant(x * y),
            (Some(0.0), _) | (_, Some(0.0)) => self.constant(0.0),
            (Some(1.0), _) => b,
            (_, Some(1.0)) => a,
            _ => self.push(Node::Prod(a, b)),
        }
    }

    /// Scale by a constant factor.
    pub fn scale(&mut self, factor: f64, a: ExprId) -> ExprId {
        let c = self.constant(factor);
        self.mul(c, a)
    }

    pub fn pow(&mut self, base: ExprId, exponent: f64) -> ExprId {
        if exponent == 0.0 {
            return self.constant(1.0);
        }
        if exponent == 1.0 {
            return base;
        }
        if let Some(c) = self.const_value(base) {
            return self.constant(c.powf(exponent));
        }
        self.push(Node::Pow(base, exponent))
    }

    pub fn tanh(&mut self, a: ExprId) -> ExprId {
        if let Some(c) = self.const_value(a) {
            return self.constant(c.tanh());
        }
        self.push(Node::Tanh(a))
    }

    pub fn unary(&mut self, f: UnaryFn, a: ExprId) -> ExprId {
        if let Some(c) = self.const_value(a) {
            return self.constant(apply_unary(f, c));
        }
        self.push(Node::Unary(f, a))
    }

    pub fn exp(&mut self, a: ExprId) -> ExprId {
        self.unary(UnaryFn::Exp, a)
    }

    pub fn sin(&mut self, a: ExprId) -> ExprId {
        self.unary(UnaryFn::Sin, a)
    }

    pub fn cos(&mut self, a: ExprId) -> ExprId {
        self.unary(UnaryFn::Cos, a)
    }

    pub fn ln(&mut self, a: ExprId) -> ExprId {
        self.unary(UnaryFn::Ln, a)
    }

    pub fn recip(&mut self, a: ExprId) -> ExprId {
        self.unary(UnaryFn::Recip, a)
    }

    /// Dot product of two equally long expression slices.
    pub fn dot(&mut self, a: &[ExprId], b: &[ExprId]) -> ExprId {
        debug_assert_eq!(a.len(), b.len());
        let prods: Vec<ExprId> = a
            .iter()
            .zip(b.iter())
            .map(|(&x, &y)| self.mul(x, y))
            .collect();
        self.sum(&prods)
    }

    fn check_bound(&self, vars: &VarSet) -> Result<()> {
        if vars.values.len() < self.var_count() {
            return Err(Error::config(format!(
                "unbound variable `{}`: {} values supplied for {} variables",
                self.var_names[vars.values.len()],
                vars.values.len(),
                self.var_count()
            )));
        }
        Ok(())
    }

    /// Evaluate every node up to and including `upto`, writing node values
    /// into the workspace. Children precede parents by construction, so one
    /// index sweep suffices.
    pub fn eval_prefix(&self, upto: ExprId, vars: &VarSet, ws: &mut Workspace) -> Result<f64> {
        self.check_bound(vars)?;
        ws.values.resize(self.nodes.len(), 0.0);
        self.eval_range(0, upto.idx() + 1, vars, ws);
        Ok(ws.values[upto.idx()])
    }

    /// Evaluate the full arena.
    pub fn eval_all(&self, vars: &VarSet, ws: &mut Workspace) -> Result<()> {
        self.check_bound(vars)?;
        ws.values.resize(self.nodes.len(), 0.0);
        self.eval_range(0, self.nodes.len(), vars, ws);
        Ok(())
    }

    /// Re-evaluate nodes in `[from, to)`, assuming values below `from` are
    /// current. Used when only late-appended nodes changed inputs.
    pub fn eval_range(&self, from: usize, to: usize, vars: &VarSet, ws: &mut Workspace) {
        let values = &mut ws.values;
        for i in from..to {
            let v = match self.nodes[i] {
                Node::Const(c) => c,
                Node::Var(slot) => vars.values[slot as usize],
                Node::Sum { start, len } => {
                    let mut acc = 0.0;
                    for k in start..start + len {
                        acc += values[self.children[k as usize].idx()];
                    }
                    acc
                }
                Node::Prod(a, b) => values[a.idx()] * values[b.idx()],
                Node::Pow(a, k) => pow_value(values[a.idx()], k),
                Node::Tanh(a) => values[a.idx()].tanh(),
                Node::Unary(f, a) => apply_unary(f, values[a.idx()]),
            };
            values[i] = v;
        }
    }

    /// Evaluate a single root expression.
    pub fn eval(&self, root: ExprId, vars: &VarSet) -> Result<f64> {
        let mut ws = Workspace::default();
        self.eval_prefix(root, vars, &mut ws)
    }

    /// Numeric reverse sweep seeded at `root`; `ws` must hold current values
    /// for all ancestors of `root`. Adjoints land in `ws.adjoints`, indexed
    /// by node.
    pub fn backward(&self, root: ExprId, ws: &mut Workspace) {
        let n = root.idx() + 1;
        ws.adjoints.clear();
        ws.adjoints.resize(self.nodes.len(), 0.0);
        ws.adjoints[root.idx()] = 1.0;
        let values = &ws.values;
        let adj = &mut ws.adjoints;
        for i in (0..n).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            match self.nodes[i] {
                Node::Const(_) | Node::Var(_) => {}
                Node::Sum { start, len } => {
                    for k in start..start + len {
                        adj[self.children[k as usize].idx()] += a;
                    }
                }
                Node::Prod(l, r) => {
                    adj[l.idx()] += a * values[r.idx()];
                    adj[r.idx()] += a * values[l.idx()];
                }
                Node::Pow(b, k) => {
                    let x = values[b.idx()];
                    let d = if k == 2.0 { 2.0 * x } else { k * pow_value(x, k - 1.0) };
                    adj[b.idx()] += a * d;
                }
                Node::Tanh(x) => {
                    let t = values[i];
                    adj[x.idx()] += a * (1.0 - t * t);
                }
                Node::Unary(f, x) => {
                    let d = match f {
                        UnaryFn::Exp => values[i],
                        UnaryFn::Ln => 1.0 / values[x.idx()],
                        UnaryFn::Sin => values[x.idx()].cos(),
                        UnaryFn::Cos => -values[x.idx()].sin(),
                        UnaryFn::Recip => {
                            let r = values[i];
                            -r * r
                        }
                    };
                    adj[x.idx()] += a * d;
                }
            }
        }
    }

    /// Numeric gradient of `root` with respect to every variable slot.
    pub fn grad_values(&self, root: ExprId, vars: &VarSet, ws: &mut Workspace) -> Result<Vec<f64>> {
        self.eval_prefix(root, vars, ws)?;
        self.backward(root, ws);
        Ok(self.collect_var_adjoints(ws))
    }

    /// Read per-variable adjoints after a [`Graph::backward`] sweep.
    pub fn collect_var_adjoints(&self, ws: &Workspace) -> Vec<f64> {
        self.var_nodes
            .iter()
            .map(|id| ws.adjoints.get(id.idx()).copied().unwrap_or(0.0))
            .collect()
    }

    /// ∂root/∂v for each `v` in `wrt`, in `wrt` order, evaluated at `vars`.
    pub fn gradient(&self, root: ExprId, vars: &VarSet, wrt: &[VarId]) -> Result<Vec<f64>> {
        let mut ws = Workspace::default();
        self.eval_prefix(root, vars, &mut ws)?;
        self.backward(root, &mut ws);
        Ok(wrt
            .iter()
            .map(|v| {
                let id = self.var_expr(*v).idx();
                ws.adjoints.get(id).copied().unwrap_or(0.0)
            })
            .collect())
    }

    /// Adjoint pass that emits graph nodes: returns expressions for
    /// ∂root/∂v, one per `wrt` entry. The emitted expressions live in this
    /// graph and can themselves be differentiated (nested derivatives).
    pub fn grad_exprs(&mut self, root: ExprId, wrt: &[VarId]) -> Vec<ExprId> {
        let n = root.idx() + 1;
        // Contribution lists per node; materialized into Sum nodes on demand.
        let mut contribs: Vec<Vec<ExprId>> = vec![Vec::new(); n];
        let one = self.constant(1.0);
        contribs[root.idx()].push(one);
        for i in (0..n).rev() {
            if contribs[i].is_empty() {
                continue;
            }
            let a = self.sum(&std::mem::take(&mut contribs[i]));
            // Stash the materialized adjoint so wrt lookup sees it.
            contribs[i].push(a);
            if self.const_value(a) == Some(0.0) {
                continue;
            }
            match self.nodes[i] {
                Node::Const(_) | Node::Var(_) => {}
                Node::Sum { start, len } => {
                    for k in start..start + len {
                        let c = self.children[k as usize];
                        if c.idx() < n {
                            contribs[c.idx()].push(a);
                        }
                    }
                }
                Node::Prod(l, r) => {
                    let dl = self.mul(a, r);
                    contribs[l.idx()].push(dl);
                    let dr = self.mul(a, l);
                    contribs[r.idx()].push(dr);
                }
                Node::Pow(b, k) => {
                    let p = self.pow(b, k - 1.0);
                    let kp = self.scale(k, p);
                    let d = self.mul(a, kp);
                    contribs[b.idx()].push(d);
                }
                Node::Tanh(x) => {
                    let this = ExprId(i as u32);
                    let t2 = self.mul(this, this);
                    let nt2 = self.neg(t2);
                    let one = self.constant(1.0);
                    let sech2 = self.add(one, nt2);
                    let d = self.mul(a, sech2);
                    contribs[x.idx()].push(d);
                }
                Node::Unary(f, x) => {
                    let this = ExprId(i as u32);
                    let deriv = match f {
                        UnaryFn::Exp => this,
                        UnaryFn::Ln => self.recip(x),
                        UnaryFn::Sin => self.cos(x),
                        UnaryFn::Cos => {
                            let s = self.sin(x);
                            self.neg(s)
                        }
                        UnaryFn::Recip => {
                            let sq = self.mul(this, this);
                            self.neg(sq)
                        }
                    };
                    let d = self.mul(a, deriv);
                    contribs[x.idx()].push(d);
                }
            }
        }
        wrt.iter()
            .map(|v| {
                let slot = self.var_expr(*v);
                if slot.idx() < n && !contribs[slot.idx()].is_empty() {
                    contribs[slot.idx()][0]
                } else {
                    self.constant(0.0)
                }
            })
            .collect()
    }
}

#[inline]
fn pow_value(x: f64, k: f64) -> f64 {
    if k == 2.0 {
        x * x
    } else if k.fract() == 0.0 && k.abs() <= 32.0 {
        x.powi(k as i32)
    } else {
        x.powf(k)
    }
}

#[inline]
fn apply_unary(f: UnaryFn, x: f64) -> f64 {
    match f {
        UnaryFn::Exp => x.exp(),
        UnaryFn::Ln => x.ln(),
        UnaryFn::Sin => x.sin(),
        UnaryFn::Cos => x.cos(),
        UnaryFn::Recip => 1.0 / x,
    }
}

/// Hessian-vector products of a scalar loss with respect to a parameter
/// block, computed as the derivative of ⟨∇loss, v⟩.
///
/// The direction `v` is bound to auxiliary variables, so repeated
/// applications at the same parameter point reuse the forward sweep over
/// the loss and gradient subgraphs.
pub struct HvpOperator {
    graph: Graph,
    dot_root: ExprId,
    params: Vec<VarId>,
    aux: Vec<VarId>,
    tail_start: usize,
    vars: VarSet,
    ws: Workspace,
    primed: bool,
}

impl HvpOperator {
    /// Build the operator by extending a clone of `graph` with the gradient
    /// expressions of `loss` and a dot-product head.
    pub fn new(graph: &Graph, loss: ExprId, params: &[VarId]) -> Result<Self> {
        let mut g = graph.clone();
        let grads = g.grad_exprs(loss, params);
        let tail_start = g.len();
        let aux: Result<Vec<VarId>> = (0..params.len())
            .map(|i| g.var(format!("__hvp_dir[{i}]")))
            .collect();
        let aux = aux?;
        let aux_exprs: Vec<ExprId> = aux.iter().map(|v| g.var_expr(*v)).collect();
        let dot_root = g.dot(&grads, &aux_exprs);
        let n_vars = g.var_count();
        Ok(HvpOperator {
            graph: g,
            dot_root,
            params: params.to_vec(),
            aux,
            tail_start,
            vars: VarSet::new(vec![0.0; n_vars]),
            ws: Workspace::default(),
            primed: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    /// Fix the evaluation point. Must be called before [`HvpOperator::apply`]
    /// and again whenever the point changes.
    pub fn set_point(&mut self, full_vars: &VarSet) -> Result<()> {
        let supplied = full_vars.values.len();
        for (i, v) in full_vars.values.iter().enumerate() {
            self.vars.values[i] = *v;
        }
        for v in self.vars.values[supplied..].iter_mut() {
            *v = 0.0;
        }
        self.graph.eval_all(&self.vars, &mut self.ws)?;
        self.primed = true;
        Ok(())
    }

    /// H·v at the current point.
    pub fn apply(&mut self, v: &[f64]) -> Result<Vec<f64>> {
        if !self.primed {
            return Err(Error::config("HvpOperator::apply before set_point"));
        }
        if v.len() != self.params.len() {
            return Err(Error::config(format!(
                "direction length {} does not match parameter count {}",
                v.len(),
                self.params.len()
            )));
        }
        for (aux, val) in self.aux.iter().zip(v.iter()) {
            self.vars.values[aux.slot()] = *val;
        }
        // Only the dot-product tail depends on the direction.
        self.graph
            .eval_range(self.tail_start, self.graph.len(), &self.vars, &mut self.ws);
        self.graph.backward(self.dot_root, &mut self.ws);
        Ok(self
            .params
            .iter()
            .map(|p| self.ws.adjoints[self.graph.var_expr(*p).idx()])
            .collect())
    }
}

/// One-call convenience: H·v for `loss` over `params` at `vars`.
pub fn hvp(graph: &Graph, loss: ExprId, params: &[VarId], vars: &VarSet, v: &[f64]) -> Result<Vec<f64>> {
    let mut op = HvpOperator::new(graph, loss, params)?;
    op.set_point(vars)?;
    op.apply(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quad_graph() -> (Graph, ExprId, Vec<VarId>) {
        // L = 1/2 (3 a^2 + b^2)
        let mut g = Graph::new();
        let a = g.var("a").unwrap();
        let b = g.var("b").unwrap();
        let ae = g.var_expr(a);
        let be = g.var_expr(b);
        let a2 = g.pow(ae, 2.0);
        let b2 = g.pow(be, 2.0);
        let a2s = g.scale(1.5, a2);
        let b2s = g.scale(0.5, b2);
        let l = g.add(a2s, b2s);
        (g, l, vec![a, b])
    }

    #[test]
    fn evaluate_basics() {
        let mut g = Graph::new();
        let x = g.var("x").unwrap();
        let xe = g.var_expr(x);
        let x2 = g.pow(xe, 2.0);
        assert_eq!(g.eval(x2, &VarSet::new(vec![3.0])).unwrap(), 9.0);

        let th = g.tanh(xe);
        assert_eq!(g.eval(th, &VarSet::new(vec![0.0])).unwrap(), 0.0);

        let mut g = Graph::new();
        let x = g.var("x").unwrap();
        let y = g.var("y").unwrap();
        let (xe, ye) = (g.var_expr(x), g.var_expr(y));
        let xy = g.mul(xe, ye);
        let e = g.add(xy, ye);
        assert_eq!(g.eval(e, &VarSet::new(vec![2.0, 5.0])).unwrap(), 15.0);
    }

    #[test]
    fn evaluate_unbound_variable_errors() {
        let mut g = Graph::new();
        let x = g.var("x").unwrap();
        let _y = g.var("y").unwrap();
        let xe = g.var_expr(x);
        let e = g.pow(xe, 2.0);
        let err = g.eval(e, &VarSet::new(vec![1.0])).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "got {err:?}");
    }

    #[test]
    fn evaluation_is_bit_stable() {
        let (g, l, _) = quad_graph();
        let vars = VarSet::new(vec![0.3, -1.7]);
        let v1 = g.eval(l, &vars).unwrap();
        let v2 = g.eval(l, &vars).unwrap();
        assert_eq!(v1.to_bits(), v2.to_bits());
    }

    #[test]
    fn gradient_basics() {
        let mut g = Graph::new();
        let x = g.var("x").unwrap();
        let xe = g.var_expr(x);
        let x2 = g.pow(xe, 2.0);
        let grad = g.gradient(x2, &VarSet::new(vec![3.0]), &[x]).unwrap();
        assert_eq!(grad, vec![6.0]);

        let mut g = Graph::new();
        let x = g.var("x").unwrap();
        let y = g.var("y").unwrap();
        let (xe, ye) = (g.var_expr(x), g.var_expr(y));
        let xy = g.mul(xe, ye);
        let grad = g.gradient(xy, &VarSet::new(vec![2.0, 5.0]), &[x, y]).unwrap();
        assert_eq!(grad, vec![5.0, 2.0]);
    }

    #[test]
    fn nested_differentiation_cubic() {
        // d/dx (d/dx x^3) = 6x -> 12 at x = 2
        let mut g = Graph::new();
        let x = g.var("x").unwrap();
        let xe = g.var_expr(x);
        let x3 = g.pow(xe, 3.0);
        let d1 = g.grad_exprs(x3, &[x]);
        let d2 = g.grad_exprs(d1[0], &[x]);
        let v = g.eval(d2[0], &VarSet::new(vec![2.0])).unwrap();
        assert_relative_eq!(v, 12.0, max_relative = 1e-12);
    }

    #[test]
    fn nested_tanh_second_derivative_matches_analytic() {
        // tanh'' = -2 tanh (1 - tanh^2)
        let mut g = Graph::new();
        let x = g.var("x").unwrap();
        let xe = g.var_expr(x);
        let th = g.tanh(xe);
        let d1 = g.grad_exprs(th, &[x]);
        let d2 = g.grad_exprs(d1[0], &[x]);
        for &pt in &[-1.3, -0.2, 0.0, 0.7, 2.1] {
            let got = g.eval(d2[0], &VarSet::new(vec![pt])).unwrap();
            let t = pt.tanh();
            let want = -2.0 * t * (1.0 - t * t);
            assert!((got - want).abs() < 1e-10, "x={pt}: {got} vs {want}");
        }
    }

    #[test]
    fn hvp_diagonal_quadratic() {
        let (g, l, params) = quad_graph();
        let vars = VarSet::new(vec![0.4, -2.0]);
        let out = hvp(&g, l, &params, &vars, &[1.0, 0.0]).unwrap();
        assert_relative_eq!(out[0], 3.0, max_relative = 1e-12);
        assert_relative_eq!(out[1], 0.0, max_relative = 1e-12);
    }

    #[test]
    fn hvp_off_diagonal() {
        // L = a b, H = [[0,1],[1,0]], v = (1,1) -> (1,1)
        let mut g = Graph::new();
        let a = g.var("a").unwrap();
        let b = g.var("b").unwrap();
        let (ae, be) = (g.var_expr(a), g.var_expr(b));
        let l = g.mul(ae, be);
        let out = hvp(&g, l, &[a, b], &VarSet::new(vec![0.7, -0.1]), &[1.0, 1.0]).unwrap();
        assert_relative_eq!(out[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(out[1], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn hvp_dimension_mismatch_errors() {
        let (g, l, params) = quad_graph();
        let vars = VarSet::new(vec![0.4, -2.0]);
        assert!(hvp(&g, l, &params, &vars, &[1.0]).is_err());
    }

    /// Deterministic pseudo-random generator for test points (splitmix64).
    fn splitmix(state: &mut u64) -> f64 {
        *state = state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Random smooth expression over `vars`, depth-bounded.
    fn random_expr(g: &mut Graph, vars: &[VarId], state: &mut u64, depth: usize) -> ExprId {
        let choice = (splitmix(state) * 8.0) as usize;
        if depth == 0 || choice == 0 {
            let k = (splitmix(state) * vars.len() as f64) as usize;
            return g.var_expr(vars[k.min(vars.len() - 1)]);
        }
        if choice == 1 {
            return g.constant(splitmix(state) * 4.0 - 2.0);
        }
        let a = random_expr(g, vars, state, depth - 1);
        match choice {
            2 => {
                let b = random_expr(g, vars, state, depth - 1);
                g.add(a, b)
            }
            3 => {
                let b = random_expr(g, vars, state, depth - 1);
                g.mul(a, b)
            }
            4 => g.tanh(a),
            5 => g.sin(a),
            6 => g.cos(a),
            7 => {
                let k = 2.0 + (splitmix(state) * 3.0).floor();
                g.pow(a, k)
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn gradient_matches_central_differences_on_random_expressions() {
        let mut state = 0x5DEECE66D_u64;
        let mut checked = 0usize;
        for _case in 0..100 {
            let mut g = Graph::new();
            let vars: Vec<VarId> = (0..3).map(|i| g.var(format!("v{i}")).unwrap()).collect();
            let e = random_expr(&mut g, &vars, &mut state, 4);
            let point: Vec<f64> = (0..3).map(|_| splitmix(&mut state) * 2.0 - 1.0).collect();
            let vs = VarSet::new(point.clone());
            let grad = g.gradient(e, &vs, &vars).unwrap();
            for (i, gi) in grad.iter().enumerate() {
                let h = 1e-5 * (1.0 + point[i].abs());
                let mut p = point.clone();
                p[i] += h;
                let fp = g.eval(e, &VarSet::new(p.clone())).unwrap();
                p[i] -= 2.0 * h;
                let fm = g.eval(e, &VarSet::new(p)).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                let scale = gi.abs().max(fd.abs()).max(1.0);
                if scale > 1e6 {
                    continue; // steep power chains lose FD accuracy
                }
                assert!(
                    (gi - fd).abs() / scale < 1e-5,
                    "case {_case} var {i}: analytic {gi} vs fd {fd}"
                );
                checked += 1;
            }
        }
        assert!(checked > 200, "too few comparisons ran: {checked}");
    }

    #[test]
    fn hvp_matches_finite_difference_of_gradient_on_random_cubic() {
        let mut state = 0xC0FFEE_u64;
        for _case in 0..20 {
            let dim = 4;
            let mut g = Graph::new();
            let vars: Vec<VarId> = (0..dim).map(|i| g.var(format!("t{i}")).unwrap()).collect();
            // Random cubic: sum of c_ijk t_i t_j t_k plus quadratic part.
            let mut terms = Vec::new();
            for _ in 0..10 {
                let i = (splitmix(&mut state) * dim as f64) as usize % dim;
                let j = (splitmix(&mut state) * dim as f64) as usize % dim;
                let k = (splitmix(&mut state) * dim as f64) as usize % dim;
                let c = g.constant(splitmix(&mut state) * 2.0 - 1.0);
                let (vi, vj, vk) = (g.var_expr(vars[i]), g.var_expr(vars[j]), g.var_expr(vars[k]));
                let ij = g.mul(vi, vj);
                let ijk = g.mul(ij, vk);
                terms.push(g.mul(c, ijk));
            }
            let loss = g.sum(&terms);
            let theta: Vec<f64> = (0..dim).map(|_| splitmix(&mut state) * 2.0 - 1.0).collect();
            let v: Vec<f64> = (0..dim).map(|_| splitmix(&mut state) * 2.0 - 1.0).collect();
            let norm = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
            let eps = 1e-4 * (1.0 + norm);

            let hv = hvp(&g, loss, &vars, &VarSet::new(theta.clone()), &v).unwrap();

            let plus: Vec<f64> = theta.iter().zip(&v).map(|(t, d)| t + eps * d).collect();
            let minus: Vec<f64> = theta.iter().zip(&v).map(|(t, d)| t - eps * d).collect();
            let gp = g.gradient(loss, &VarSet::new(plus), &vars).unwrap();
            let gm = g.gradient(loss, &VarSet::new(minus), &vars).unwrap();
            for i in 0..dim {
                let fd = (gp[i] - gm[i]) / (2.0 * eps);
                let scale = hv[i].abs().max(fd.abs()).max(1e-6);
                assert!(
                    (hv[i] - fd).abs() / scale < 1e-4,
                    "case {_case} comp {i}: hvp {} vs fd {}",
                    hv[i],
                    fd
                );
            }
        }
    }

    #[test]
    fn hvp_bilinearity_and_symmetry() {
        let mut state = 0xFEED_u64;
        let dim = 5;
        let mut g = Graph::new();
        let vars: Vec<VarId> = (0..dim).map(|i| g.var(format!("t{i}")).unwrap()).collect();
        let mut terms = Vec::new();
        for _ in 0..12 {
            let i = (splitmix(&mut state) * dim as f64) as usize % dim;
            let j = (splitmix(&mut state) * dim as f64) as usize % dim;
            let c = g.constant(splitmix(&mut state) * 2.0 - 1.0);
            let (vi, vj) = (g.var_expr(vars[i]), g.var_expr(vars[j]));
            let ij = g.mul(vi, vj);
            let t = g.tanh(ij);
            terms.push(g.mul(c, t));
        }
        let loss = g.sum(&terms);
        let theta: Vec<f64> = (0..dim).map(|_| splitmix(&mut state) * 0.8 - 0.4).collect();
        let vars_set = VarSet::new(theta);
        let mut op = HvpOperator::new(&g, loss, &vars).unwrap();
        op.set_point(&vars_set).unwrap();

        let v: Vec<f64> = (0..dim).map(|_| splitmix(&mut state) * 2.0 - 1.0).collect();
        let w: Vec<f64> = (0..dim).map(|_| splitmix(&mut state) * 2.0 - 1.0).collect();
        let (a, b) = (0.37, -1.45);

        let hv = op.apply(&v).unwrap();
        let hw = op.apply(&w).unwrap();
        let mix: Vec<f64> = v.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
        let hmix = op.apply(&mix).unwrap();
        for i in 0..dim {
            assert!(
                (hmix[i] - (a * hv[i] + b * hw[i])).abs() < 1e-10,
                "bilinearity failed at {i}"
            );
        }
        let whv: f64 = w.iter().zip(&hv).map(|(x, y)| x * y).sum();
        let vhw: f64 = v.iter().zip(&hw).map(|(x, y)| x * y).sum();
        assert!((whv - vhw).abs() < 1e-8, "symmetry: {whv} vs {vhw}");
    }
}
