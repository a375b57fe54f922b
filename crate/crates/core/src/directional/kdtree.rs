//! Fixed-leaf-count k-d tree over `[0,1]^2` with split-collapse adaptation.
//!
//! Nodes are stored in preorder: the left child of an inner node directly
//! follows it, the right child index is stored explicitly.

use alloc::vec::Vec;

use crate::sampling::SquarePoint;

/// Axis-aligned rectangle of the unit square.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Rect {
    pub const UNIT: Rect = Rect { lo: [0.0, 0.0], hi: [1.0, 1.0] };

    pub fn area(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    /// Axis with the larger extent; ties go to `u`.
    pub fn longer_axis(&self) -> usize {
        if self.extent(1) > self.extent(0) {
            1
        } else {
            0
        }
    }

    /// Halves at relative position `split` along `axis`.
    pub fn split(&self, axis: usize, split: f64) -> (Rect, Rect) {
        let at = self.lo[axis] + split * self.extent(axis);
        let mut left = *self;
        let mut right = *self;
        left.hi[axis] = at;
        right.lo[axis] = at;
        (left, right)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Node {
    Inner { axis: u8, split: f64, right: u32 },
    Leaf { prob: f64, accum: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct KdTree {
    nodes: Vec<Node>,
    leaf_count: usize,
    epsilon: f64,
    trained: bool,
}

// Owned tree used while editing topology.
impl KdTree {
    /// Uniform tree built by repeatedly halving the largest leaf along its
    /// longer axis (ties: first leaf in preorder).
    pub fn new(leaf_count: usize) -> Self {
        let l = leaf_count.max(1);
        let mut t = KdTree {
            nodes: alloc::vec![Node::Leaf { prob: 1.0, accum: 0.0 }],
            leaf_count: 1,
            epsilon: 1e-4 / l as f64,
            trained: false,
        };
        while t.leaf_count < l {
            let rects = t.leaf_rects();
            let mut best = (f64::NEG_INFINITY, 0usize, Rect::UNIT);
            for &(i, r) in &rects {
                if r.area() > best.0 {
                    best = (r.area(), i, r);
                }
            }
            t.rebuild(Some(best.1), None);
            t.leaf_count += 1;
        }
        for n in &mut t.nodes {
            if let Node::Leaf { prob, .. } = n {
                *prob = 0.0;
            }
        }
        let rects = t.leaf_rects();
        for (i, r) in rects {
            t.nodes[i] = Node::Leaf { prob: r.area(), accum: 0.0 };
        }
        t
    }

    /// Builds a uniform tree and overwrites the leaf probabilities (preorder).
    pub fn with_probabilities(probs: &[f64]) -> Self {
        let mut t = KdTree::new(probs.len());
        let leaves: Vec<usize> = t.leaf_rects().iter().map(|&(i, _)| i).collect();
        for (i, &p) in leaves.iter().zip(probs) {
            t.nodes[*i] = Node::Leaf { prob: p, accum: 0.0 };
        }
        t
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Tree from a preorder node list (left child at `i + 1`). Returns
    /// `None` unless every node is reached exactly once, relative splits lie
    /// in (0, 1) and probabilities are finite and non-negative.
    pub fn from_nodes(nodes: Vec<Node>, trained: bool) -> Option<Self> {
        if nodes.is_empty() {
            return None;
        }
        let mut seen = alloc::vec![false; nodes.len()];
        let mut stack = alloc::vec![(0usize, Rect::UNIT)];
        let mut leaves = 0;
        while let Some((i, r)) = stack.pop() {
            if i >= nodes.len() || seen[i] {
                return None;
            }
            seen[i] = true;
            match nodes[i] {
                Node::Leaf { prob, accum } => {
                    if !(prob >= 0.0 && prob.is_finite() && accum.is_finite()) {
                        return None;
                    }
                    leaves += 1;
                }
                Node::Inner { axis, split, right } => {
                    let a = axis as usize;
                    if a > 1 || !(split > 0.0 && split < 1.0) || right as usize <= i + 1 {
                        return None;
                    }
                    let (lo, hi) = r.split(a, split);
                    stack.push((right as usize, hi));
                    stack.push((i + 1, lo));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return None;
        }
        Some(KdTree { nodes, leaf_count: leaves, epsilon: 1e-4 / leaves as f64, trained })
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, eps: f64) {
        self.epsilon = eps;
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// `(node index, rectangle)` of every leaf in preorder.
    pub fn leaf_rects(&self) -> Vec<(usize, Rect)> {
        let mut out = Vec::with_capacity(self.leaf_count);
        let mut stack = alloc::vec![(0usize, Rect::UNIT)];
        while let Some((i, r)) = stack.pop() {
            match self.nodes[i] {
                Node::Leaf { .. } => out.push((i, r)),
                Node::Inner { axis, split, right } => {
                    let (a, b) = r.split(axis as usize, split);
                    stack.push((right as usize, b));
                    stack.push((i + 1, a));
                }
            }
        }
        out
    }

    /// Leaf probabilities in preorder.
    pub fn probabilities(&self) -> Vec<f64> {
        self.leaf_rects().iter().map(|&(i, _)| self.prob(i)).collect()
    }

    fn prob(&self, i: usize) -> f64 {
        match self.nodes[i] {
            Node::Leaf { prob, .. } => prob,
            Node::Inner { .. } => 0.0,
        }
    }

    // Subtree masses for every node.
    fn masses(&self) -> Vec<f64> {
        let mut m = alloc::vec![0.0; self.nodes.len()];
        for i in (0..self.nodes.len()).rev() {
            m[i] = match self.nodes[i] {
                Node::Leaf { prob, .. } => prob,
                Node::Inner { right, .. } => m[i + 1] + m[right as usize],
            };
        }
        m
    }

    /// Leaf containing `uv`; points on a split go to the lower child.
    pub fn locate(&self, uv: SquarePoint) -> (usize, Rect) {
        let mut i = 0;
        let mut r = Rect::UNIT;
        let p = [uv.u, uv.v];
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return (i, r),
                Node::Inner { axis, split, right } => {
                    let (a, b) = r.split(axis as usize, split);
                    if p[axis as usize] <= a.hi[axis as usize] {
                        i += 1;
                        r = a;
                    } else {
                        i = right as usize;
                        r = b;
                    }
                }
            }
        }
    }

    pub fn pdf(&self, uv: SquarePoint) -> f64 {
        let (i, r) = self.locate(uv);
        self.prob(i) / r.area()
    }

    /// Hierarchical sample warping.
    pub fn sample(&self, u: SquarePoint) -> (SquarePoint, f64) {
        let m = self.masses();
        let mut i = 0;
        let mut r = Rect::UNIT;
        let mut x = [u.u, u.v];
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => break,
                Node::Inner { axis, split, right } => {
                    let a = axis as usize;
                    let total = m[i];
                    let q = if total > 0.0 { m[i + 1] / total } else { split };
                    let (lr, rr) = r.split(a, split);
                    if x[a] < q {
                        x[a] /= q;
                        i += 1;
                        r = lr;
                    } else {
                        x[a] = if q < 1.0 { (x[a] - q) / (1.0 - q) } else { 0.0 };
                        i = right as usize;
                        r = rr;
                    }
                }
            }
        }
        let uv = SquarePoint::new(
            (r.lo[0] + x[0].min(1.0) * r.extent(0)).min(r.hi[0]),
            (r.lo[1] + x[1].min(1.0) * r.extent(1)).min(r.hi[1]),
        );
        (uv, self.pdf(uv))
    }

    /// Adds to the frame accumulator of the containing leaf; negative or
    /// non-finite contributions are rejected.
    pub fn record(&mut self, uv: SquarePoint, contribution: f64) -> bool {
        if !(contribution >= 0.0) || !contribution.is_finite() {
            return false;
        }
        let (i, _) = self.locate(uv);
        if let Node::Leaf { accum, .. } = &mut self.nodes[i] {
            *accum += contribution;
        }
        true
    }

    pub fn accumulated(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Leaf { accum, .. } => *accum,
                Node::Inner { .. } => 0.0,
            })
            .sum()
    }

    /// Probability update followed by at most one split-collapse step.
    pub fn end_frame(&mut self, blend: f64, t_split: f64) {
        let total = self.accumulated();
        if total > 0.0 {
            let l = self.leaf_count as f64;
            let eps = self.epsilon;
            let blend = if self.trained { blend } else { 1.0 };
            let mut sum = 0.0;
            for n in &mut self.nodes {
                if let Node::Leaf { prob, accum } = n {
                    let fresh = eps + (1.0 - l * eps) * *accum / total;
                    *prob = (1.0 - blend) * *prob + blend * fresh;
                    sum += *prob;
                }
            }
            for n in &mut self.nodes {
                if let Node::Leaf { prob, .. } = n {
                    *prob /= sum;
                }
            }
            self.trained = true;
        }
        for n in &mut self.nodes {
            if let Node::Leaf { accum, .. } = n {
                *accum = 0.0;
            }
        }
        self.adapt(t_split);
    }

    fn adapt(&mut self, t_split: f64) {
        let mut l_max: Option<(usize, f64)> = None;
        let mut p_min: Option<(usize, f64)> = None;
        for i in 0..self.nodes.len() {
            match self.nodes[i] {
                Node::Leaf { prob, .. } => {
                    if l_max.is_none_or(|(_, p)| prob > p) {
                        l_max = Some((i, prob));
                    }
                }
                Node::Inner { right, .. } => {
                    let (a, b) = (i + 1, right as usize);
                    if let (Node::Leaf { prob: pa, .. }, Node::Leaf { prob: pb, .. }) = (self.nodes[a], self.nodes[b]) {
                        let s = pa + pb;
                        if p_min.is_none_or(|(_, p)| s < p) {
                            p_min = Some((i, s));
                        }
                    }
                }
            }
        }
        let (Some((leaf, pl)), Some((parent, pp))) = (l_max, p_min) else {
            return;
        };
        let child_of_parent = match self.nodes[parent] {
            Node::Inner { right, .. } => leaf == parent + 1 || leaf == right as usize,
            Node::Leaf { .. } => false,
        };
        if pl > t_split * pp && !child_of_parent {
            self.rebuild(Some(leaf), Some(parent));
        }
    }

    // Re-packs the tree, splitting `split_leaf` at its longer-axis midpoint
    // and collapsing `collapse` into a single leaf.
    fn rebuild(&mut self, split_leaf: Option<usize>, collapse: Option<usize>) {
        fn emit(t: &KdTree, i: usize, r: Rect, s: Option<usize>, c: Option<usize>, out: &mut Vec<Node>) {
            if Some(i) == c {
                let mass = match t.nodes[i] {
                    Node::Inner { right, .. } => t.prob(i + 1) + t.prob(right as usize),
                    Node::Leaf { prob, .. } => prob,
                };
                out.push(Node::Leaf { prob: mass, accum: 0.0 });
                return;
            }
            match t.nodes[i] {
                Node::Leaf { prob, .. } => {
                    if Some(i) == s {
                        let at = out.len() as u32;
                        let axis = r.longer_axis() as u8;
                        out.push(Node::Inner { axis, split: 0.5, right: at + 2 });
                        out.push(Node::Leaf { prob: 0.5 * prob, accum: 0.0 });
                        out.push(Node::Leaf { prob: 0.5 * prob, accum: 0.0 });
                    } else {
                        out.push(Node::Leaf { prob, accum: 0.0 });
                    }
                }
                Node::Inner { axis, split, right } => {
                    let (a, b) = r.split(axis as usize, split);
                    let at = out.len();
                    out.push(Node::Inner { axis, split, right: 0 });
                    emit(t, i + 1, a, s, c, out);
                    let r = out.len() as u32;
                    if let Node::Inner { right, .. } = &mut out[at] {
                        *right = r;
                    }
                    emit(t, right as usize, b, s, c, out);
                }
            }
        }
        let mut nodes = Vec::with_capacity(self.nodes.len() + 2);
        emit(self, 0, Rect::UNIT, split_leaf, collapse, &mut nodes);
        self.nodes = nodes;
    }
}
