use serde::{Deserialize, Serialize};

use super::{LabeledTree, NestedNode, StyleTreeError};

/// Label of the artificial node that anchors the head-0 token.
pub const ROOT_LABEL: &str = "ROOT";

/// Which columns make up a dependency node's label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepLabel {
    #[default]
    Deprel,
    /// `deprel/UPOS`.
    DeprelUpos,
}

fn err(line: usize, message: impl Into<String>) -> StyleTreeError {
    StyleTreeError::Conllu {
        line,
        message: message.into(),
    }
}

struct Token {
    line: usize,
    label: String,
    head: usize,
}

/// Reads one sentence block. Comment, multiword (`1-2`) and empty-node
/// (`1.1`) lines are skipped. Children follow surface order.
pub fn parse_conllu(text: &str, labeling: DepLabel) -> Result<LabeledTree, StyleTreeError> {
    let mut tokens: Vec<Token> = Vec::new();
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last_line = line;
        let l = raw.trim_end_matches('\r');
        if l.trim().is_empty() || l.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = l.split('\t').collect();
        if cols.len() != 10 {
            return Err(err(
                line,
                format!("expected 10 columns, found {}", cols.len()),
            ));
        }
        if cols[0].contains(['-', '.']) {
            continue;
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|_| err(line, format!("invalid ID {:?}", cols[0])))?;
        if id != tokens.len() + 1 {
            return Err(err(
                line,
                format!("expected ID {}, found {id}", tokens.len() + 1),
            ));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| err(line, format!("invalid HEAD {:?}", cols[6])))?;
        let (upos, deprel) = (cols[3], cols[7]);
        if deprel.is_empty() || upos.is_empty() {
            return Err(err(line, "empty DEPREL or UPOS"));
        }
        let label = match labeling {
            DepLabel::Deprel => deprel.to_string(),
            DepLabel::DeprelUpos => format!("{deprel}/{upos}"),
        };
        tokens.push(Token { line, label, head });
    }
    if tokens.is_empty() {
        return Err(err(last_line.max(1), "no tokens, so no root"));
    }
    let n = tokens.len();
    let mut root = None;
    for (i, t) in tokens.iter().enumerate() {
        if t.head > n {
            return Err(err(t.line, format!("HEAD {} out of range 0..={n}", t.head)));
        }
        if t.head == i + 1 {
            return Err(err(t.line, "token is its own head"));
        }
        if t.head == 0 {
            if root.is_some() {
                return Err(err(t.line, "multiple roots"));
            }
            root = Some(i + 1);
        }
    }
    let Some(root) = root else {
        return Err(err(last_line, "no token has HEAD 0"));
    };
    for (i, t) in tokens.iter().enumerate() {
        let mut cur = i + 1;
        let mut steps = 0;
        while cur != 0 {
            cur = tokens[cur - 1].head;
            steps += 1;
            if steps > n {
                return Err(err(t.line, "HEAD cycle"));
            }
        }
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for (i, t) in tokens.iter().enumerate() {
        children[t.head].push(i + 1);
    }
    fn build(id: usize, tokens: &[Token], children: &[Vec<usize>]) -> NestedNode {
        NestedNode::new(
            tokens[id - 1].label.clone(),
            children[id]
                .iter()
                .map(|&c| build(c, tokens, children))
                .collect(),
        )
    }
    let tree = NestedNode::new(ROOT_LABEL, vec![build(root, &tokens, &children)]);
    Ok(LabeledTree::from_nested(&tree))
}

/// Writes a dependency tree as a CoNLL-U block, numbering tokens in preorder
/// so that re-reading yields the same child order. The tree must be a ROOT
/// node with exactly one child.
pub fn serialize_conllu(tree: &LabeledTree, labeling: DepLabel) -> Result<String, StyleTreeError> {
    let bad = |m: String| StyleTreeError::Serialize(m);
    let root = tree.node(tree.root());
    if root.label != ROOT_LABEL || root.children.len() != 1 {
        return Err(bad(format!("expected {ROOT_LABEL} with one child")));
    }
    // preorder over the real tokens
    let mut order = Vec::with_capacity(tree.len() - 1);
    let mut stack = vec![root.children[0]];
    while let Some(i) = stack.pop() {
        order.push(i);
        stack.extend(tree.node(i).children.iter().rev());
    }
    let mut id_of = vec![0usize; tree.len()];
    for (k, &i) in order.iter().enumerate() {
        id_of[i] = k + 1;
    }
    let mut out = String::new();
    for (k, &i) in order.iter().enumerate() {
        let node = tree.node(i);
        if node.label.is_empty() || node.label.contains(char::is_whitespace) {
            return Err(bad(format!(
                "label {:?} is not a CoNLL-U field",
                node.label
            )));
        }
        let (deprel, upos) = match labeling {
            DepLabel::Deprel => (node.label.as_str(), "_"),
            DepLabel::DeprelUpos => node
                .label
                .split_once('/')
                .filter(|(d, u)| !d.is_empty() && !u.is_empty() && !u.contains('/'))
                .ok_or_else(|| bad(format!("label {:?} is not deprel/UPOS", node.label)))?,
        };
        let head = node.parent.map_or(0, |p| id_of[p]);
        let id = k + 1;
        out.push_str(&format!(
            "{id}\tw{id}\t_\t{upos}\t_\t_\t{head}\t{deprel}\t_\t_\n"
        ));
    }
    Ok(out)
}

/// Splits a file into sentence blocks, each paired with the number of lines
/// that precede it.
pub fn split_conllu_blocks(text: &str) -> Vec<(usize, String)> {
    let mut blocks = Vec::new();
    let mut cur = String::new();
    let mut start = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                blocks.push((start, std::mem::take(&mut cur)));
            }
            start = i + 1;
        } else {
            cur.push_str(line);
            cur.push('\n');
        }
    }
    if !cur.is_empty() {
        blocks.push((start, cur));
    }
    blocks
}
