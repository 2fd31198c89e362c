//! Ordered labeled trees read from constituency and dependency parses, and
//! the tree edit distance used to compare their structure.

mod bracketed;
mod conllu;
mod ted;

use std::fs;
use std::path::Path;

use thiserror::Error;

pub use bracketed::{parse_bracketed, serialize_bracketed};
pub use conllu::{parse_conllu, serialize_conllu, split_conllu_blocks, DepLabel, ROOT_LABEL};
pub use ted::{avg_ted, ted, EditCosts, UnitCosts};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StyleTreeError {
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("CoNLL-U error at line {line}: {message}")]
    Conllu { line: usize, message: String },
    #[error("length mismatch: {0} reference trees vs {1} hypothesis trees")]
    LengthMismatch(usize, usize),
    #[error("cannot serialize tree: {0}")]
    Serialize(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub label: String,
    pub children: Vec<usize>,
    pub parent: Option<usize>,
    /// Terminal word of a constituency parse.
    pub lexical: bool,
}

/// Nested form used to build trees by hand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NestedNode {
    pub label: String,
    pub lexical: bool,
    pub children: Vec<NestedNode>,
}

impl NestedNode {
    pub fn new(label: impl Into<String>, children: Vec<NestedNode>) -> Self {
        NestedNode {
            label: label.into(),
            lexical: false,
            children,
        }
    }

    pub fn leaf(label: impl Into<String>) -> Self {
        Self::new(label, Vec::new())
    }

    pub fn word(label: impl Into<String>) -> Self {
        NestedNode {
            label: label.into(),
            lexical: true,
            children: Vec::new(),
        }
    }

    fn size(&self) -> usize {
        1 + self.children.iter().map(NestedNode::size).sum::<usize>()
    }
}

/// Nodes stored in left-to-right postorder; the root is the last node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledTree {
    nodes: Vec<Node>,
}

impl LabeledTree {
    pub fn from_nested(root: &NestedNode) -> Self {
        fn walk(n: &NestedNode, nodes: &mut Vec<Node>) -> usize {
            let children: Vec<usize> = n.children.iter().map(|c| walk(c, nodes)).collect();
            let id = nodes.len();
            for &c in &children {
                nodes[c].parent = Some(id);
            }
            nodes.push(Node {
                label: n.label.clone(),
                children,
                parent: None,
                lexical: n.lexical,
            });
            id
        }
        let mut nodes = Vec::with_capacity(root.size());
        walk(root, &mut nodes);
        LabeledTree { nodes }
    }

    pub fn to_nested(&self) -> NestedNode {
        self.nested_at(self.root())
    }

    fn nested_at(&self, i: usize) -> NestedNode {
        let n = &self.nodes[i];
        NestedNode {
            label: n.label.clone(),
            lexical: n.lexical,
            children: n.children.iter().map(|&c| self.nested_at(c)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn label(&self, i: usize) -> &str {
        &self.nodes[i].label
    }

    /// Postorder index of the leftmost leaf under `i`.
    pub fn leftmost_leaf(&self, mut i: usize) -> usize {
        while let Some(&c) = self.nodes[i].children.first() {
            i = c;
        }
        i
    }

    pub fn lexical_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.lexical).count()
    }
}

/// Removes lexical leaves so that distances reflect structure only. A tree
/// that is a single node is returned unchanged.
pub fn prune_leaf_level(tree: &LabeledTree) -> LabeledTree {
    fn strip(n: &NestedNode) -> NestedNode {
        NestedNode {
            label: n.label.clone(),
            lexical: n.lexical,
            children: n
                .children
                .iter()
                .filter(|c| !c.lexical)
                .map(strip)
                .collect(),
        }
    }
    if tree.len() == 1 {
        return tree.clone();
    }
    LabeledTree::from_nested(&strip(&tree.to_nested()))
}

fn read(path: &Path) -> Result<String, StyleTreeError> {
    fs::read_to_string(path).map_err(|e| StyleTreeError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// One bracketed tree per non-blank line.
pub fn read_bracketed_file(path: &Path) -> Result<Vec<LabeledTree>, StyleTreeError> {
    read(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(parse_bracketed)
        .collect()
}

/// Blank-line separated CoNLL-U sentences.
pub fn read_conllu_file(
    path: &Path,
    labeling: DepLabel,
) -> Result<Vec<LabeledTree>, StyleTreeError> {
    let text = read(path)?;
    split_conllu_blocks(&text)
        .into_iter()
        .map(|(offset, block)| {
            parse_conllu(&block, labeling).map_err(|e| match e {
                StyleTreeError::Conllu { line, message } => StyleTreeError::Conllu {
                    line: line + offset,
                    message,
                },
                other => other,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn postorder_layout() {
        let t = parse_bracketed("(S (NP a) (VP b))").unwrap();
        let labels: Vec<&str> = (0..t.len()).map(|i| t.label(i)).collect();
        assert_eq!(labels, ["a", "NP", "b", "VP", "S"]);
        assert_eq!(t.root(), 4);
        assert_eq!(t.node(4).children, vec![1, 3]);
        assert_eq!(t.node(0).parent, Some(1));
        assert_eq!(t.leftmost_leaf(4), 0);
        assert_eq!(t.leftmost_leaf(3), 2);
        assert_eq!(t.lexical_count(), 2);
    }

    #[test]
    fn pruning() {
        let t = parse_bracketed("(S (NP a) (VP b))").unwrap();
        let p = prune_leaf_level(&t);
        assert_eq!(serialize_bracketed(&p), "(S (NP) (VP))");
        assert_eq!(p.len(), 3);
        assert_eq!(prune_leaf_level(&p), p);
        let single = parse_bracketed("w").unwrap();
        assert_eq!(prune_leaf_level(&single), single);
        let flat = parse_bracketed("(X y z)").unwrap();
        assert_eq!(serialize_bracketed(&prune_leaf_level(&flat)), "(X)");
    }

    #[test]
    fn nested_round_trip() {
        let n = NestedNode::new("f", vec![NestedNode::leaf("a"), NestedNode::word("b")]);
        assert_eq!(LabeledTree::from_nested(&n).to_nested(), n);
    }
}
