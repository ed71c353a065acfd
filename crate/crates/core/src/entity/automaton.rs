//! Byte-level Aho-Corasick automaton reporting every (possibly overlapping)
//! occurrence of every pattern.

use crate::error::{Error, Result};

const ROOT: u32 = 0;

#[derive(Debug, Clone, Default)]
struct Node {
    /// Sorted by byte.
    goto: Vec<(u8, u32)>,
    fail: u32,
    /// Ids of patterns that end here, directly or via the failure chain.
    outputs: Vec<u32>,
}

impl Node {
    fn child(&self, byte: u8) -> Option<u32> {
        self.goto
            .binary_search_by_key(&byte, |&(b, _)| b)
            .ok()
            .map(|i| self.goto[i].1)
    }
}

/// One raw hit: pattern id and byte range in the scanned text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RawMatch {
    pub pattern: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone)]
pub struct PatternAutomaton {
    patterns: Vec<String>,
    nodes: Vec<Node>,
}

impl PatternAutomaton {
    /// Build over `patterns`; ids are positions in the slice.
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self> {
        if patterns.is_empty() {
            return Err(Error::EmptyInput("automaton needs at least one pattern".into()));
        }
        let mut nodes = vec![Node::default()];
        for (id, p) in patterns.iter().enumerate() {
            let p = p.as_ref();
            if p.is_empty() {
                return Err(Error::InvalidArgument(format!("pattern {id} is empty")));
            }
            let mut cur = ROOT;
            for &b in p.as_bytes() {
                cur = match nodes[cur as usize].child(b) {
                    Some(next) => next,
                    None => {
                        let next = nodes.len() as u32;
                        nodes.push(Node::default());
                        let goto = &mut nodes[cur as usize].goto;
                        let pos = goto.partition_point(|&(x, _)| x < b);
                        goto.insert(pos, (b, next));
                        next
                    }
                };
            }
            nodes[cur as usize].outputs.push(id as u32);
        }

        // failure links, breadth first
        let mut queue = std::collections::VecDeque::new();
        let first: Vec<u32> = nodes[ROOT as usize].goto.iter().map(|&(_, c)| c).collect();
        for child in first {
            nodes[child as usize].fail = ROOT;
            queue.push_back(child);
        }
        while let Some(state) = queue.pop_front() {
            let edges = nodes[state as usize].goto.clone();
            for (b, child) in edges {
                let mut f = nodes[state as usize].fail;
                let target = loop {
                    if let Some(next) = nodes[f as usize].child(b) {
                        break next;
                    }
                    if f == ROOT {
                        break ROOT;
                    }
                    f = nodes[f as usize].fail;
                };
                nodes[child as usize].fail = target;
                let inherited = nodes[target as usize].outputs.clone();
                nodes[child as usize].outputs.extend(inherited);
                queue.push_back(child);
            }
        }

        Ok(PatternAutomaton {
            patterns: patterns.iter().map(|p| p.as_ref().to_owned()).collect(),
            nodes,
        })
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }

    pub fn pattern(&self, id: usize) -> &str {
        &self.patterns[id]
    }

    pub fn num_states(&self) -> usize {
        self.nodes.len()
    }

    fn next_state(&self, mut state: u32, byte: u8) -> u32 {
        loop {
            let node = &self.nodes[state as usize];
            if let Some(next) = node.child(byte) {
                return next;
            }
            if state == ROOT {
                return ROOT;
            }
            state = node.fail;
        }
    }

    /// Every occurrence of every pattern, ordered by end offset.
    pub fn scan(&self, haystack: &[u8]) -> Vec<RawMatch> {
        let mut out = Vec::new();
        let mut state = ROOT;
        for (i, &b) in haystack.iter().enumerate() {
            state = self.next_state(state, b);
            for &id in &self.nodes[state as usize].outputs {
                let len = self.patterns[id as usize].len();
                out.push(RawMatch {
                    pattern: id as usize,
                    start: i + 1 - len,
                    end: i + 1,
                });
            }
        }
        out
    }

    /// `(node string, fail target string, outputs)` per state, for invariant checks.
    #[cfg(test)]
    fn describe(&self) -> Vec<(Vec<u8>, Vec<u8>, Vec<usize>)> {
        let mut labels = vec![Vec::new(); self.nodes.len()];
        let mut stack = vec![ROOT];
        while let Some(s) = stack.pop() {
            for &(b, c) in &self.nodes[s as usize].goto {
                let mut l = labels[s as usize].clone();
                l.push(b);
                labels[c as usize] = l;
                stack.push(c);
            }
        }
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                (
                    labels[i].clone(),
                    labels[n.fail as usize].clone(),
                    n.outputs.iter().map(|&o| o as usize).collect(),
                )
            })
            .collect()
    }
}

/// O(n·m) reference: every pattern at every offset.
pub fn naive_scan<S: AsRef<str>>(patterns: &[S], haystack: &[u8]) -> Vec<RawMatch> {
    let mut out = Vec::new();
    for (id, p) in patterns.iter().enumerate() {
        let p = p.as_ref().as_bytes();
        if p.is_empty() || p.len() > haystack.len() {
            continue;
        }
        for start in 0..=haystack.len() - p.len() {
            if &haystack[start..start + p.len()] == p {
                out.push(RawMatch {
                    pattern: id,
                    start,
                    end: start + p.len(),
                });
            }
        }
    }
    out
}
