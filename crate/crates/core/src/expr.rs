//! Expression trees: representation, random construction, mutation, and
//! batch evaluation with exact node-operation accounting.
//!
//! Trees are stored in prefix (pre-order) form as a flat `Vec<NodeKind>`,
//! which keeps subtree extraction and splicing cheap for mutation.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::Rng;

use crate::error::{Error, Result};

/// Fallback value of the protected division when |denominator| < `DIV_EPS`.
pub const DIV_FALLBACK: f64 = 1.0;
/// Denominator magnitude below which division is considered degenerate.
pub const DIV_EPS: f64 = 1e-9;
/// Magnitude that non-finite intermediate results are clamped to.
pub const OVERFLOW_CLAMP: f64 = 1e150;

/// Semantics of an individual: its outputs over all cases, length m.
pub type SemanticVector = Vec<f64>;

/// A single tree node. Binary functions have arity 2, terminals arity 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NodeKind {
    Add,
    Sub,
    Mul,
    /// Protected division: returns `DIV_FALLBACK` near a zero denominator.
    Div,
    Min,
    Max,
    /// Feature reference by ordinal.
    Var(usize),
    /// Ephemeral random constant, sampled in [-1, 1] at creation time.
    Const(f64),
}

impl NodeKind {
    pub fn arity(&self) -> usize {
        match self {
            NodeKind::Var(_) | NodeKind::Const(_) => 0,
            _ => 2,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.arity() == 0
    }

    fn label(&self) -> &'static str {
        match self {
            NodeKind::Add => "add",
            NodeKind::Sub => "sub",
            NodeKind::Mul => "mul",
            NodeKind::Div => "div",
            NodeKind::Min => "min",
            NodeKind::Max => "max",
            _ => unreachable!("terminals have no label"),
        }
    }

    fn apply(&self, a: f64, b: f64) -> f64 {
        let v = match self {
            NodeKind::Add => a + b,
            NodeKind::Sub => a - b,
            NodeKind::Mul => a * b,
            NodeKind::Div => {
                if b.abs() < DIV_EPS {
                    DIV_FALLBACK
                } else {
                    a / b
                }
            }
            NodeKind::Min => a.min(b),
            NodeKind::Max => a.max(b),
            _ => unreachable!("terminals are never applied"),
        };
        if v.is_finite() {
            v
        } else if v.is_nan() {
            0.0
        } else if v > 0.0 {
            OVERFLOW_CLAMP
        } else {
            -OVERFLOW_CLAMP
        }
    }
}

const ALL_OPS: [NodeKind; 6] = [
    NodeKind::Add,
    NodeKind::Sub,
    NodeKind::Mul,
    NodeKind::Div,
    NodeKind::Min,
    NodeKind::Max,
];

/// Case matrix, stored column-major for fast batch evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseMatrix {
    columns: Vec<Vec<f64>>,
    rows: usize,
}

impl CaseMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut columns = vec![Vec::with_capacity(n_rows); n_cols];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::data(format!(
                    "ragged matrix: row {} has {} columns, expected {}",
                    i + 1,
                    row.len(),
                    n_cols
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                columns[j].push(v);
            }
        }
        Ok(CaseMatrix { columns, rows: n_rows })
    }

    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let rows = columns.first().map_or(0, |c| c.len());
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::contract("columns of unequal length".to_string()));
        }
        Ok(CaseMatrix { columns, rows })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// New matrix keeping only the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> CaseMatrix {
        let columns = self
            .columns
            .iter()
            .map(|c| indices.iter().map(|&i| c[i]).collect())
            .collect();
        CaseMatrix {
            columns,
            rows: indices.len(),
        }
    }
}

/// Counts node operations: one evaluation of one node on one case.
///
/// Optionally records one `(tree_size, case_count)` event per batch
/// evaluation so totals can be reconciled against an independent recount.
#[derive(Debug, Default)]
pub struct EvalCounter {
    total: AtomicU64,
    events: Option<Mutex<Vec<(u64, u64)>>>,
}

impl EvalCounter {
    pub fn new() -> Self {
        EvalCounter::default()
    }

    pub fn with_event_log() -> Self {
        EvalCounter {
            total: AtomicU64::new(0),
            events: Some(Mutex::new(Vec::new())),
        }
    }

    pub fn total(&self) -> u64 {
        self.total.load(Ordering::Relaxed)
    }

    pub fn add(&self, n: u64) {
        self.total.fetch_add(n, Ordering::Relaxed);
    }

    fn record_event(&self, tree_size: u64, cases: u64) {
        if let Some(events) = &self.events {
            events.lock().unwrap().push((tree_size, cases));
        }
    }

    /// Logged `(tree_size, case_count)` events, if event logging is on.
    pub fn events(&self) -> Option<Vec<(u64, u64)>> {
        self.events
            .as_ref()
            .map(|e| e.lock().unwrap().clone())
    }
}

/// An individual: an expression tree in prefix order.
#[derive(Clone, Debug, PartialEq)]
pub struct ExprTree {
    nodes: Vec<NodeKind>,
}

impl ExprTree {
    pub fn new(nodes: Vec<NodeKind>) -> Result<Self> {
        let tree = ExprTree { nodes };
        if tree.nodes.is_empty() {
            return Err(Error::contract("empty expression tree"));
        }
        if tree.subtree_end(0) != tree.nodes.len() {
            return Err(Error::contract("malformed prefix expression"));
        }
        Ok(tree)
    }

    pub fn leaf(kind: NodeKind) -> Self {
        debug_assert!(kind.is_terminal());
        ExprTree { nodes: vec![kind] }
    }

    pub fn nodes(&self) -> &[NodeKind] {
        &self.nodes
    }

    /// Node count.
    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    /// Maximum root-to-leaf edge count (a lone terminal has depth 0).
    pub fn depth(&self) -> usize {
        self.depth_at(0).1
    }

    fn depth_at(&self, idx: usize) -> (usize, usize) {
        match self.nodes[idx].arity() {
            0 => (idx + 1, 0),
            _ => {
                let (after_left, dl) = self.depth_at(idx + 1);
                let (after_right, dr) = self.depth_at(after_left);
                (after_right, 1 + dl.max(dr))
            }
        }
    }

    /// Exclusive end index of the subtree rooted at `idx`.
    pub fn subtree_end(&self, idx: usize) -> usize {
        let mut pending = 1usize;
        let mut i = idx;
        while pending > 0 && i < self.nodes.len() {
            pending += self.nodes[i].arity();
            pending -= 1;
            i += 1;
        }
        i
    }

    /// Largest referenced feature ordinal, if any `Var` exists.
    pub fn max_var(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                NodeKind::Var(i) => Some(*i),
                _ => None,
            })
            .max()
    }

    pub fn contains_min_max(&self) -> bool {
        self.nodes
            .iter()
            .any(|n| matches!(n, NodeKind::Min | NodeKind::Max))
    }

    /// Evaluates the tree on every case, adding exactly `size * rows`
    /// node operations to `counter`.
    pub fn evaluate(&self, cases: &CaseMatrix, counter: &EvalCounter) -> Result<SemanticVector> {
        let m = cases.rows();
        if m == 0 {
            return Err(Error::contract("cannot evaluate on an empty case matrix"));
        }
        if let Some(v) = self.max_var() {
            if v >= cases.cols() {
                return Err(Error::contract(format!(
                    "tree references feature x{} but the matrix has {} columns",
                    v,
                    cases.cols()
                )));
            }
        }
        counter.record_event(self.size() as u64, m as u64);

        // Reverse-prefix evaluation: operands are on the stack by the time
        // their operator is reached; the left operand is the last pushed.
        let mut stack: Vec<Vec<f64>> = Vec::new();
        let mut pool: Vec<Vec<f64>> = Vec::new();
        for node in self.nodes.iter().rev() {
            match node {
                NodeKind::Var(j) => {
                    let mut buf = pool.pop().unwrap_or_default();
                    buf.clear();
                    buf.extend_from_slice(cases.column(*j));
                    stack.push(buf);
                }
                NodeKind::Const(c) => {
                    let mut buf = pool.pop().unwrap_or_default();
                    buf.clear();
                    buf.resize(m, *c);
                    stack.push(buf);
                }
                op => {
                    let mut left = stack.pop().expect("validated prefix form");
                    let right = stack.pop().expect("validated prefix form");
                    for j in 0..m {
                        left[j] = op.apply(left[j], right[j]);
                    }
                    stack.push(left);
                    pool.push(right);
                }
            }
            counter.add(m as u64);
        }
        Ok(stack.pop().expect("validated prefix form"))
    }

    /// Prefix-notation string, e.g. `(max (add x0 0.25) x3)`.
    pub fn to_prefix_string(&self) -> String {
        let mut out = String::new();
        self.write_prefix(0, &mut out);
        out
    }

    fn write_prefix(&self, idx: usize, out: &mut String) -> usize {
        match self.nodes[idx] {
            NodeKind::Var(i) => {
                out.push_str(&format!("x{i}"));
                idx + 1
            }
            NodeKind::Const(c) => {
                out.push_str(&format!("{c}"));
                idx + 1
            }
            op => {
                out.push('(');
                out.push_str(op.label());
                out.push(' ');
                let after_left = self.write_prefix(idx + 1, out);
                out.push(' ');
                let after_right = self.write_prefix(after_left, out);
                out.push(')');
                after_right
            }
        }
    }

    /// Parses the output of [`to_prefix_string`](Self::to_prefix_string).
    pub fn parse(text: &str) -> Result<Self> {
        let spaced = text.replace('(', " ( ").replace(')', " ) ");
        let tokens: Vec<&str> = spaced.split_whitespace().collect();
        let mut pos = 0;
        let mut nodes = Vec::new();
        parse_expr(&tokens, &mut pos, &mut nodes)?;
        if pos != tokens.len() {
            return Err(Error::data(format!(
                "trailing tokens after expression: {:?}",
                &tokens[pos..]
            )));
        }
        ExprTree::new(nodes)
    }
}

impl fmt::Display for ExprTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_prefix_string())
    }
}

fn parse_expr(tokens: &[&str], pos: &mut usize, nodes: &mut Vec<NodeKind>) -> Result<()> {
    let tok = *tokens
        .get(*pos)
        .ok_or_else(|| Error::data("unexpected end of expression"))?;
    *pos += 1;
    if tok == "(" {
        let op = *tokens
            .get(*pos)
            .ok_or_else(|| Error::data("missing operator after '('"))?;
        *pos += 1;
        let kind = match op {
            "add" => NodeKind::Add,
            "sub" => NodeKind::Sub,
            "mul" => NodeKind::Mul,
            "div" => NodeKind::Div,
            "min" => NodeKind::Min,
            "max" => NodeKind::Max,
            other => return Err(Error::data(format!("unknown operator '{other}'"))),
        };
        nodes.push(kind);
        parse_expr(tokens, pos, nodes)?;
        parse_expr(tokens, pos, nodes)?;
        match tokens.get(*pos) {
            Some(&")") => {
                *pos += 1;
                Ok(())
            }
            _ => Err(Error::data("expected ')'")),
        }
    } else if let Some(rest) = tok.strip_prefix('x') {
        if let Ok(i) = rest.parse::<usize>() {
            nodes.push(NodeKind::Var(i));
            return Ok(());
        }
        Err(Error::data(format!("invalid variable token '{tok}'")))
    } else {
        let v: f64 = tok
            .parse()
            .map_err(|_| Error::data(format!("invalid token '{tok}'")))?;
        nodes.push(NodeKind::Const(v));
        Ok(())
    }
}

/// Tree construction context: feature count and function set.
#[derive(Clone, Copy, Debug)]
pub struct TreeGen {
    pub feature_count: usize,
    /// When false, `Min`/`Max` are excluded from the function set.
    pub use_min_max: bool,
}

impl TreeGen {
    fn ops(&self) -> &'static [NodeKind] {
        if self.use_min_max {
            &ALL_OPS
        } else {
            &ALL_OPS[..4]
        }
    }

    /// Uniform over the terminal classes: each feature and the ERC class
    /// equally likely; the ERC itself is uniform in [-1, 1].
    fn random_terminal<R: Rng + ?Sized>(&self, rng: &mut R) -> NodeKind {
        let pick = rng.gen_range(0..=self.feature_count);
        if pick < self.feature_count {
            NodeKind::Var(pick)
        } else {
            NodeKind::Const(rng.gen_range(-1.0..=1.0))
        }
    }

    fn random_op<R: Rng + ?Sized>(&self, rng: &mut R) -> NodeKind {
        let ops = self.ops();
        ops[rng.gen_range(0..ops.len())]
    }

    /// "Grow" construction: function nodes are forced below `min_depth` and
    /// forbidden at `max_depth`; in between, the choice is uniform over all
    /// primitives (functions plus terminal classes).
    pub fn grow<R: Rng + ?Sized>(&self, rng: &mut R, min_depth: usize, max_depth: usize) -> ExprTree {
        let mut nodes = Vec::new();
        self.grow_into(rng, 0, min_depth, max_depth, &mut nodes);
        ExprTree { nodes }
    }

    fn grow_into<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        depth: usize,
        min_depth: usize,
        max_depth: usize,
        nodes: &mut Vec<NodeKind>,
    ) {
        let make_function = if depth >= max_depth {
            false
        } else if depth < min_depth {
            true
        } else {
            let n_ops = self.ops().len();
            let n_terminals = self.feature_count + 1;
            rng.gen_range(0..n_ops + n_terminals) < n_ops
        };
        if make_function {
            nodes.push(self.random_op(rng));
            self.grow_into(rng, depth + 1, min_depth, max_depth, nodes);
            self.grow_into(rng, depth + 1, min_depth, max_depth, nodes);
        } else {
            nodes.push(self.random_terminal(rng));
        }
    }

    /// "Full" construction: every leaf sits at exactly `depth` edges.
    pub fn full<R: Rng + ?Sized>(&self, rng: &mut R, depth: usize) -> ExprTree {
        let mut nodes = Vec::new();
        self.full_into(rng, depth, &mut nodes);
        ExprTree { nodes }
    }

    fn full_into<R: Rng + ?Sized>(&self, rng: &mut R, depth: usize, nodes: &mut Vec<NodeKind>) {
        if depth == 0 {
            nodes.push(self.random_terminal(rng));
        } else {
            nodes.push(self.random_op(rng));
            self.full_into(rng, depth - 1, nodes);
            self.full_into(rng, depth - 1, nodes);
        }
    }

    /// Ramped half-and-half initialization over depth strata
    /// `min(2, max_depth)..=max_depth`, alternating full and grow per
    /// stratum. Trees are assigned to (depth, method) cells round-robin,
    /// so cell counts differ by at most one.
    pub fn ramped_half_and_half<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        pop_size: usize,
        max_depth: usize,
    ) -> Vec<ExprTree> {
        let lo = 2.min(max_depth).max(1);
        let depths: Vec<usize> = (lo..=max_depth).collect();
        let n_cells = depths.len() * 2;
        (0..pop_size)
            .map(|i| {
                let cell = i % n_cells;
                let depth = depths[cell / 2];
                if cell % 2 == 0 {
                    self.full(rng, depth)
                } else {
                    self.grow(rng, lo.min(depth), depth)
                }
            })
            .collect()
    }

    /// Subtree mutation. The replaced site is a leaf with probability
    /// `leaf_bias` (an internal node otherwise), chosen uniformly within
    /// its class; the replacement is grown with depth at most
    /// `subtree_max_depth`. The parent is left unmodified.
    pub fn mutate<R: Rng + ?Sized>(
        &self,
        parent: &ExprTree,
        rng: &mut R,
        leaf_bias: f64,
        subtree_max_depth: usize,
    ) -> ExprTree {
        self.mutate_at(parent, rng, leaf_bias, subtree_max_depth).0
    }

    /// As [`mutate`](Self::mutate), also returning the replaced site index.
    pub(crate) fn mutate_at<R: Rng + ?Sized>(
        &self,
        parent: &ExprTree,
        rng: &mut R,
        leaf_bias: f64,
        subtree_max_depth: usize,
    ) -> (ExprTree, usize) {
        let leaves: Vec<usize> = (0..parent.size())
            .filter(|&i| parent.nodes[i].is_terminal())
            .collect();
        let internals: Vec<usize> = (0..parent.size())
            .filter(|&i| !parent.nodes[i].is_terminal())
            .collect();
        let site = if internals.is_empty() || rng.gen_range(0.0..1.0) < leaf_bias {
            leaves[rng.gen_range(0..leaves.len())]
        } else {
            internals[rng.gen_range(0..internals.len())]
        };
        let replacement = self.grow(rng, 0, subtree_max_depth);
        let end = parent.subtree_end(site);
        let mut nodes = Vec::with_capacity(parent.size() - (end - site) + replacement.size());
        nodes.extend_from_slice(&parent.nodes[..site]);
        nodes.extend_from_slice(&replacement.nodes);
        nodes.extend_from_slice(&parent.nodes[end..]);
        (ExprTree { nodes }, site)
    }
}
