use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Internal-node rule: rows with `x[var] <= cut` go left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub var: usize,
    pub cut: f64,
}

impl DecisionRule {
    #[inline]
    pub fn goes_left(&self, row: &[f64]) -> bool {
        row[self.var] <= self.cut
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum NodeKind {
    Leaf {
        value: f64,
    },
    Split {
        rule: DecisionRule,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub depth: usize,
    pub parent: Option<usize>,
    #[serde(flatten)]
    pub kind: NodeKind,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }
}

/// A binary decision tree stored as a node arena; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Default for Tree {
    fn default() -> Self {
        Tree::leaf(0.0)
    }
}

impl Tree {
    /// Root-only tree.
    pub fn leaf(value: f64) -> Self {
        Tree {
            nodes: vec![Node {
                depth: 0,
                parent: None,
                kind: NodeKind::Leaf { value },
            }],
        }
    }

    /// Build from a raw node arena, checking structural consistency.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        let tree = Tree { nodes };
        tree.check()?;
        Ok(tree)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_root_only(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].is_leaf())
            .collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn internal_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| !self.nodes[i].is_leaf())
            .collect()
    }

    /// Internal nodes whose children are both leaves.
    pub fn prunable_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.is_prunable(i))
            .collect()
    }

    pub(crate) fn is_prunable(&self, id: usize) -> bool {
        match self.nodes[id].kind {
            NodeKind::Split { left, right, .. } => {
                self.nodes[left].is_leaf() && self.nodes[right].is_leaf()
            }
            NodeKind::Leaf { .. } => false,
        }
    }

    /// Depth of the deepest leaf.
    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn children(&self, id: usize) -> Option<(usize, usize)> {
        match self.nodes[id].kind {
            NodeKind::Split { left, right, .. } => Some((left, right)),
            NodeKind::Leaf { .. } => None,
        }
    }

    pub fn rule(&self, id: usize) -> Option<DecisionRule> {
        match self.nodes[id].kind {
            NodeKind::Split { rule, .. } => Some(rule),
            NodeKind::Leaf { .. } => None,
        }
    }

    pub fn leaf_value(&self, id: usize) -> Option<f64> {
        match self.nodes[id].kind {
            NodeKind::Leaf { value } => Some(value),
            NodeKind::Split { .. } => None,
        }
    }

    pub(crate) fn set_leaf_value(&mut self, id: usize, value: f64) {
        if let NodeKind::Leaf { value: v } = &mut self.nodes[id].kind {
            *v = value;
        }
    }

    pub(crate) fn set_rule(&mut self, id: usize, new_rule: DecisionRule) {
        if let NodeKind::Split { rule, .. } = &mut self.nodes[id].kind {
            *rule = new_rule;
        }
    }

    /// Index of the leaf a row routes to. The row must have enough entries.
    #[inline]
    pub fn leaf_for(&self, row: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id].kind {
                NodeKind::Leaf { .. } => return id,
                NodeKind::Split { rule, left, right } => {
                    id = if rule.goes_left(row) { *left } else { *right };
                }
            }
        }
    }

    /// Value of the leaf a row routes to, without bounds checks on the rules.
    #[inline]
    pub(crate) fn evaluate(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_for(row)].kind {
            NodeKind::Leaf { value } => value,
            NodeKind::Split { .. } => unreachable!(),
        }
    }

    /// Value of the leaf a covariate vector routes to.
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if let Some(var) = self.max_var() {
            if var >= row.len() {
                return Err(Error::Structural(format!(
                    "rule uses covariate {var} but the row has {} entries",
                    row.len()
                )));
            }
        }
        Ok(self.evaluate(row))
    }

    pub(crate) fn max_var(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Split { rule, .. } => Some(rule.var),
                NodeKind::Leaf { .. } => None,
            })
            .max()
    }

    /// Turn leaf `id` into a split with two new leaves.
    pub(crate) fn grow(&mut self, id: usize, rule: DecisionRule) -> (usize, usize) {
        let depth = self.nodes[id].depth + 1;
        let left = self.nodes.len();
        let right = left + 1;
        for _ in 0..2 {
            self.nodes.push(Node {
                depth,
                parent: Some(id),
                kind: NodeKind::Leaf { value: 0.0 },
            });
        }
        self.nodes[id].kind = NodeKind::Split { rule, left, right };
        (left, right)
    }

    /// Collapse the prunable node `id` into a leaf and compact the arena.
    pub(crate) fn prune(&mut self, id: usize) {
        debug_assert!(self.is_prunable(id));
        self.nodes[id].kind = NodeKind::Leaf { value: 0.0 };
        self.compact();
    }

    /// Drop unreachable nodes, renumbering in depth-first order.
    fn compact(&mut self) {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            order.push(id);
            if let NodeKind::Split { left, right, .. } = self.nodes[id].kind {
                stack.push(right);
                stack.push(left);
            }
        }
        let mut new_id = vec![usize::MAX; self.nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            new_id[old] = new;
        }
        let nodes = order
            .iter()
            .map(|&old| {
                let n = &self.nodes[old];
                Node {
                    depth: n.depth,
                    parent: n.parent.map(|p| new_id[p]),
                    kind: match n.kind {
                        NodeKind::Split { rule, left, right } => NodeKind::Split {
                            rule,
                            left: new_id[left],
                            right: new_id[right],
                        },
                        NodeKind::Leaf { value } => NodeKind::Leaf { value },
                    },
                }
            })
            .collect();
        self.nodes = nodes;
    }

    /// Nodes of the subtree rooted at `id`, `id` first.
    pub(crate) fn subtree(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            if let Some((l, r)) = self.children(n) {
                stack.push(r);
                stack.push(l);
            }
        }
        out
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Structural("tree has no nodes".into()));
        }
        if self.nodes[0].parent.is_some() || self.nodes[0].depth != 0 {
            return Err(Error::Structural("node 0 must be the root".into()));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id], true) {
                return Err(Error::Structural(format!("node {id} reached twice")));
            }
            match self.nodes[id].kind {
                NodeKind::Split { rule, left, right } => {
                    if !rule.cut.is_finite() {
                        return Err(Error::Structural(format!("node {id} has a non-finite cut")));
                    }
                    for child in [left, right] {
                        let c = self.nodes.get(child).ok_or_else(|| {
                            Error::Structural(format!("node {id} points at missing node {child}"))
                        })?;
                        if c.parent != Some(id) || c.depth != self.nodes[id].depth + 1 {
                            return Err(Error::Structural(format!(
                                "node {child} has inconsistent parent or depth"
                            )));
                        }
                        stack.push(child);
                    }
                }
                NodeKind::Leaf { value } => {
                    if !value.is_finite() {
                        return Err(Error::Structural(format!("leaf {id} is not finite")));
                    }
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Structural("tree has unreachable nodes".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump(cut: f64, left: f64, right: f64) -> Tree {
        let mut t = Tree::leaf(0.0);
        let (l, r) = t.grow(0, DecisionRule { var: 0, cut });
        t.set_leaf_value(l, left);
        t.set_leaf_value(r, right);
        t
    }

    #[test]
    fn left_branch_honours_less_or_equal() {
        let t = stump(1.0, -1.0, 1.0);
        assert_eq!(t.predict(&[1.0]).unwrap(), -1.0);
        assert_eq!(t.predict(&[1.0 + 1e-12]).unwrap(), 1.0);
    }

    #[test]
    fn out_of_range_variable_is_structural_error() {
        let mut t = Tree::leaf(0.0);
        t.grow(0, DecisionRule { var: 3, cut: 0.0 });
        assert!(matches!(t.predict(&[0.0, 1.0]), Err(Error::Structural(_))));
    }

    #[test]
    fn prune_compacts_and_keeps_structure_valid() {
        let mut t = stump(0.0, 1.0, 2.0);
        let (_, r) = t.children(0).unwrap();
        t.grow(r, DecisionRule { var: 0, cut: 5.0 });
        assert_eq!(t.n_leaves(), 3);
        assert_eq!(t.prunable_nodes(), vec![r]);
        t.prune(r);
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(t.n_nodes(), 3);
        Tree::from_nodes(t.nodes().to_vec()).unwrap();
        t.prune(0);
        assert!(t.is_root_only());
    }

    #[test]
    fn json_round_trip() {
        let t = stump(0.25, -0.5, 0.125);
        let s = serde_json::to_string(&t).unwrap();
        let back: Tree = serde_json::from_str(&s).unwrap();
        assert_eq!(t, back);
    }
}
