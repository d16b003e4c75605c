//! Newick reading and writing.
//!
//! Canonical output orders children by their smallest descendant label and
//! prints branch lengths with 9 significant digits, so writing a parsed
//! canonical string reproduces it byte for byte. Unrooted topologies are
//! written with a trifurcating root at the neighbor of leaf `1`.

use super::{check_labels, Phylogeny, Topology};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Node {
    label: Option<String>,
    length: Option<f64>,
    children: Vec<Node>,
    position: usize,
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::NewickSyntax {
            position: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn token(&mut self) -> &'a str {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !b"(),:;".contains(&self.bytes[self.pos])
            && !self.bytes[self.pos].is_ascii_whitespace()
        {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or("")
    }

    fn subtree(&mut self) -> Result<Node> {
        let position = self.pos;
        let mut children = Vec::new();
        if self.peek() == Some(b'(') {
            self.pos += 1;
            loop {
                children.push(self.subtree()?);
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    Some(c) => {
                        return self.err(format!("expected ',' or ')', found {:?}", c as char))
                    }
                    None => {
                        return self.err("unbalanced parenthesis: input ended inside a subtree")
                    }
                }
            }
        }
        let label = self.token();
        let label = (!label.is_empty()).then(|| label.to_string());
        if children.is_empty() && label.is_none() {
            return self.err("empty leaf label");
        }
        let mut length = None;
        if self.peek() == Some(b':') {
            self.pos += 1;
            let t = self.token();
            match t.parse::<f64>() {
                Ok(v) if v.is_finite() => length = Some(v),
                _ => return self.err(format!("invalid branch length {t:?}")),
            }
        }
        Ok(Node {
            label,
            length,
            children,
            position,
        })
    }

    fn tree(mut self) -> Result<Node> {
        let root = self.subtree()?;
        match self.peek() {
            Some(b';') => self.pos += 1,
            Some(b')') => return self.err("unbalanced parenthesis: unexpected ')'"),
            Some(c) => return self.err(format!("expected ';', found {:?}", c as char)),
            None => return self.err("missing terminating ';'"),
        }
        if self.peek().is_some() {
            return self.err("trailing characters after ';'");
        }
        Ok(root)
    }
}

fn parse_raw(text: &str) -> Result<Node> {
    Parser {
        bytes: text.as_bytes(),
        pos: 0,
    }
    .tree()
}

fn leaf_label(node: &Node) -> Result<usize> {
    let raw = node.label.as_deref().unwrap_or("");
    raw.parse::<usize>().map_err(|_| Error::NewickSyntax {
        position: node.position,
        message: format!("leaf label {raw:?} is not a positive integer"),
    })
}

/// Non-empty, non-comment lines of a Newick file.
pub fn newick_records(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// Parses a rooted complete binary tree with lengths on every non-root edge.
pub fn parse_phylogeny(text: &str) -> Result<Phylogeny> {
    let root = parse_raw(text.trim())?;
    let mut depth = None;
    check_shape(&root, 0, &mut depth)?;
    let h = depth.unwrap_or(0);
    let n = 1usize << h;
    let mut edge_tau = vec![0.0; 2 * n - 1];
    let mut labels = vec![0; n];
    let mut queue = std::collections::VecDeque::from([(&root, 0usize)]);
    while let Some((node, v)) = queue.pop_front() {
        if v > 0 {
            edge_tau[v] = node.length.ok_or_else(|| Error::NewickSyntax {
                position: node.position,
                message: "missing branch length".into(),
            })?;
        }
        if node.children.is_empty() {
            labels[v + 1 - n] = leaf_label(node)?;
        } else {
            queue.push_back((&node.children[0], 2 * v + 1));
            queue.push_back((&node.children[1], 2 * v + 2));
        }
    }
    Phylogeny::new(h, edge_tau, labels)
}

fn check_shape(node: &Node, depth: usize, leaf_depth: &mut Option<usize>) -> Result<()> {
    match node.children.len() {
        0 => match *leaf_depth {
            None => {
                *leaf_depth = Some(depth);
                Ok(())
            }
            Some(d) if d == depth => Ok(()),
            Some(_) => Err(Error::TreeShape(
                "leaves are not all at the same depth".into(),
            )),
        },
        2 => node
            .children
            .iter()
            .try_for_each(|c| check_shape(c, depth + 1, leaf_depth)),
        k => Err(Error::TreeShape(format!(
            "non-binary internal node with {k} children at byte {}",
            node.position
        ))),
    }
}

/// Parses an unrooted binary topology. A bifurcating root is suppressed;
/// branch lengths are accepted and ignored.
pub fn parse_topology(text: &str) -> Result<Topology> {
    let root = parse_raw(text.trim())?;
    let mut leaves = Vec::new();
    collect_leaves(&root, &mut leaves)?;
    let n = leaves.len();
    check_labels(&leaves, n)?;
    if n <= 2 {
        let edges: Vec<(usize, usize)> = if n == 2 { vec![(0, 1)] } else { vec![] };
        return Topology::from_edges(n, n, &edges);
    }
    let mut next = n;
    let mut edges = Vec::new();
    match root.children.len() {
        2 => {
            let a = attach(&root.children[0], &mut next, &mut edges)?;
            let b = attach(&root.children[1], &mut next, &mut edges)?;
            edges.push((a, b));
        }
        3 => {
            let id = next;
            next += 1;
            for c in &root.children {
                let child = attach(c, &mut next, &mut edges)?;
                edges.push((id, child));
            }
        }
        k => {
            return Err(Error::TreeShape(format!(
                "root has {k} children; expected 2 or 3"
            )))
        }
    }
    Topology::from_edges(n, next, &edges)
}

fn collect_leaves(node: &Node, out: &mut Vec<usize>) -> Result<()> {
    if node.children.is_empty() {
        out.push(leaf_label(node)?);
        Ok(())
    } else {
        node.children
            .iter()
            .try_for_each(|c| collect_leaves(c, out))
    }
}

fn attach(node: &Node, next: &mut usize, edges: &mut Vec<(usize, usize)>) -> Result<usize> {
    match node.children.len() {
        0 => Ok(leaf_label(node)? - 1),
        2 => {
            let id = *next;
            *next += 1;
            for c in &node.children {
                let child = attach(c, next, edges)?;
                edges.push((id, child));
            }
            Ok(id)
        }
        k => Err(Error::TreeShape(format!(
            "non-binary internal node with {k} children at byte {}",
            node.position
        ))),
    }
}

/// A parsed tree: a complete rooted phylogeny when the input has that shape
/// and all lengths, an unrooted topology otherwise.
#[derive(Debug, Clone)]
pub enum ParsedTree {
    Phylogeny(Phylogeny),
    Topology(Topology),
}

impl ParsedTree {
    pub fn topology(&self) -> Topology {
        match self {
            ParsedTree::Phylogeny(p) => super::unroot(p),
            ParsedTree::Topology(t) => t.clone(),
        }
    }
}

pub fn parse_newick(text: &str) -> Result<ParsedTree> {
    // Syntax errors are reported as such; only shape problems fall through.
    parse_raw(text.trim())?;
    match parse_phylogeny(text) {
        Ok(p) => Ok(ParsedTree::Phylogeny(p)),
        Err(_) => parse_topology(text).map(ParsedTree::Topology),
    }
}

/// Formats a branch length with 9 significant digits, trailing zeros removed.
pub(crate) fn format_length(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = (8 - exp).max(0) as usize;
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

pub(crate) fn write_phylogeny(phy: &Phylogeny) -> String {
    let c = phy.canonicalize();
    fn rec(p: &Phylogeny, v: usize, out: &mut String) {
        match p.children(v) {
            None => out.push_str(&p.label_of(v).unwrap().to_string()),
            Some((a, b)) => {
                out.push('(');
                rec(p, a, out);
                out.push(',');
                rec(p, b, out);
                out.push(')');
            }
        }
        if v > 0 {
            out.push(':');
            out.push_str(&format_length(p.edge_tau(v)));
        }
    }
    let mut out = String::new();
    rec(&c, 0, &mut out);
    out.push(';');
    out
}

pub(crate) fn write_topology(t: &Topology) -> String {
    let n = t.n_leaves();
    match n {
        0 => return ";".into(),
        1 => return "1;".into(),
        2 => return "(1,2);".into(),
        _ => {}
    }
    let root = t.neighbors(0)[0];
    // smallest label below each vertex when hanging from `root`
    fn min_label(t: &Topology, v: usize, from: usize) -> usize {
        if v < t.n_leaves() {
            return v + 1;
        }
        t.neighbors(v)
            .iter()
            .filter(|&&w| w != from)
            .map(|&w| min_label(t, w, v))
            .min()
            .unwrap()
    }
    fn rec(t: &Topology, v: usize, from: usize, out: &mut String) {
        if v < t.n_leaves() {
            out.push_str(&(v + 1).to_string());
            return;
        }
        let mut kids: Vec<(usize, usize)> = t
            .neighbors(v)
            .iter()
            .filter(|&&w| w != from)
            .map(|&w| (min_label(t, w, v), w))
            .collect();
        kids.sort();
        out.push('(');
        for (i, (_, w)) in kids.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            rec(t, *w, v, out);
        }
        out.push(')');
    }
    let mut out = String::new();
    rec(t, root, usize::MAX, &mut out);
    out.push(';');
    out
}
