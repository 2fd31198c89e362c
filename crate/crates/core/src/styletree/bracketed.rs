use super::{LabeledTree, NestedNode, StyleTreeError};

fn err(position: usize, message: impl Into<String>) -> StyleTreeError {
    StyleTreeError::Parse {
        position,
        message: message.into(),
    }
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.text[self.pos..].chars().next() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn atom(&mut self) -> &'a str {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_whitespace() || c == '(' || c == ')' {
                break;
            }
            self.pos += c.len_utf8();
        }
        &self.text[start..self.pos]
    }

    /// Parses `(LABEL child ...)` with the cursor on the opening parenthesis.
    fn node(&mut self) -> Result<NestedNode, StyleTreeError> {
        let open = self.pos;
        self.pos += 1;
        self.skip_ws();
        let at = self.pos;
        let label = self.atom();
        if label.is_empty() {
            return Err(err(at, "empty label"));
        }
        let mut children = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                None => {
                    return Err(err(
                        self.pos,
                        format!("unclosed parenthesis opened at byte {open}"),
                    ))
                }
                Some(')') => {
                    self.pos += 1;
                    return Ok(NestedNode::new(label, children));
                }
                Some('(') => children.push(self.node()?),
                Some(_) => children.push(NestedNode::word(self.atom())),
            }
        }
    }
}

/// Reads one Penn-style tree. Bare tokens become lexical leaves.
pub fn parse_bracketed(text: &str) -> Result<LabeledTree, StyleTreeError> {
    let mut p = Parser { text, pos: 0 };
    p.skip_ws();
    let root = match p.peek() {
        None => return Err(err(p.pos, "empty input")),
        Some(')') => return Err(err(p.pos, "unexpected ')'")),
        Some('(') => p.node()?,
        Some(_) => NestedNode::word(p.atom()),
    };
    p.skip_ws();
    if p.pos < text.len() {
        return Err(err(p.pos, "trailing input after tree"));
    }
    Ok(LabeledTree::from_nested(&root))
}

/// Canonical form: `(L c1 c2)` for non-lexical nodes, bare labels for lexical
/// leaves, single spaces.
pub fn serialize_bracketed(tree: &LabeledTree) -> String {
    fn write(t: &LabeledTree, i: usize, out: &mut String) {
        let n = t.node(i);
        if n.lexical {
            out.push_str(&n.label);
            return;
        }
        out.push('(');
        out.push_str(&n.label);
        for &c in &n.children {
            out.push(' ');
            write(t, c, out);
        }
        out.push(')');
    }
    let mut out = String::new();
    write(tree, tree.root(), &mut out);
    out
}
