//! Zhang-Shasha ordered tree edit distance.

use super::{LabeledTree, StyleTreeError};

/// Operation costs. Implementations must be non-negative with
/// `relabel(a, a) == 0`.
pub trait EditCosts {
    fn insert(&self, label: &str) -> f64;
    fn delete(&self, label: &str) -> f64;
    fn relabel(&self, from: &str, to: &str) -> f64;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UnitCosts;

impl EditCosts for UnitCosts {
    fn insert(&self, _: &str) -> f64 {
        1.0
    }

    fn delete(&self, _: &str) -> f64 {
        1.0
    }

    fn relabel(&self, from: &str, to: &str) -> f64 {
        if from == to {
            0.0
        } else {
            1.0
        }
    }
}

/// Postorder view with 1-based indices, as in the classic formulation.
struct Prepared<'a> {
    labels: Vec<&'a str>,
    /// `lml[i]`: leftmost leaf descendant of node `i`.
    lml: Vec<usize>,
    keyroots: Vec<usize>,
}

impl<'a> Prepared<'a> {
    fn new(t: &'a LabeledTree) -> Self {
        let n = t.len();
        let mut labels = vec![""; n + 1];
        let mut lml = vec![0; n + 1];
        for i in 0..n {
            labels[i + 1] = t.label(i);
            lml[i + 1] = t.leftmost_leaf(i) + 1;
        }
        // the highest node for each distinct leftmost leaf
        let mut seen = vec![false; n + 1];
        let mut keyroots = Vec::new();
        for i in (1..=n).rev() {
            if !seen[lml[i]] {
                seen[lml[i]] = true;
                keyroots.push(i);
            }
        }
        keyroots.reverse();
        Prepared {
            labels,
            lml,
            keyroots,
        }
    }
}

pub fn ted<C: EditCosts + ?Sized>(t1: &LabeledTree, t2: &LabeledTree, costs: &C) -> f64 {
    let a = Prepared::new(t1);
    let b = Prepared::new(t2);
    let (n1, n2) = (t1.len(), t2.len());
    let mut td = vec![vec![0.0f64; n2 + 1]; n1 + 1];
    let mut fd = vec![vec![0.0f64; n2 + 2]; n1 + 2];

    for &i in &a.keyroots {
        for &j in &b.keyroots {
            let (li, lj) = (a.lml[i], b.lml[j]);
            // fd indices are offset so that row/column 0 is the empty forest
            let (oi, oj) = (li - 1, lj - 1);
            fd[0][0] = 0.0;
            for x in li..=i {
                fd[x - oi][0] = fd[x - oi - 1][0] + costs.delete(a.labels[x]);
            }
            for y in lj..=j {
                fd[0][y - oj] = fd[0][y - oj - 1] + costs.insert(b.labels[y]);
            }
            for x in li..=i {
                for y in lj..=j {
                    let del = fd[x - oi - 1][y - oj] + costs.delete(a.labels[x]);
                    let ins = fd[x - oi][y - oj - 1] + costs.insert(b.labels[y]);
                    if a.lml[x] == li && b.lml[y] == lj {
                        let ren =
                            fd[x - oi - 1][y - oj - 1] + costs.relabel(a.labels[x], b.labels[y]);
                        let d = del.min(ins).min(ren);
                        fd[x - oi][y - oj] = d;
                        td[x][y] = d;
                    } else {
                        let sub = fd[a.lml[x] - 1 - oi][b.lml[y] - 1 - oj] + td[x][y];
                        fd[x - oi][y - oj] = del.min(ins).min(sub);
                    }
                }
            }
        }
    }
    td[n1][n2]
}

/// Mean distance over aligned pairs, and the mean of each distance divided by
/// the pair's combined node count. Empty input gives `(0, 0)`.
pub fn avg_ted<C: EditCosts + ?Sized>(
    refs: &[LabeledTree],
    hyps: &[LabeledTree],
    costs: &C,
) -> Result<(f64, f64), StyleTreeError> {
    if refs.len() != hyps.len() {
        return Err(StyleTreeError::LengthMismatch(refs.len(), hyps.len()));
    }
    if refs.is_empty() {
        return Ok((0.0, 0.0));
    }
    let (mut sum, mut norm) = (0.0, 0.0);
    for (r, h) in refs.iter().zip(hyps) {
        let d = ted(r, h, costs);
        sum += d;
        norm += d / (r.len() + h.len()) as f64;
    }
    let n = refs.len() as f64;
    Ok((sum / n, norm / n))
}
