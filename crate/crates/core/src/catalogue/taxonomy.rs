//! The three-level classification tree and its question-driven traversal.
//!
//! Every node carries the yes/no question that admits an NBS into it.
//! Classification walks down from the roots: among a node's children the
//! questions are asked in sibling order, a "yes" descends into that child,
//! and when every sibling but the last has been answered "no" the last one
//! is implied without asking.

use std::collections::{BTreeMap, BTreeSet};

use super::types::TaxonomyNode;
use super::CatalogueError;
use crate::ids::TaxonomyCode;

pub const MAX_DEPTH: u8 = 3;

#[derive(Debug, Clone)]
pub struct Taxonomy {
    nodes: BTreeMap<TaxonomyCode, TaxonomyNode>,
    children: BTreeMap<Option<TaxonomyCode>, Vec<TaxonomyCode>>,
}

/// One question put to the user during classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt<'a> {
    pub node: &'a TaxonomyCode,
    pub question: &'a str,
}

impl Taxonomy {
    /// Builds the tree, checking every structural invariant.
    pub fn new(nodes: Vec<TaxonomyNode>) -> Result<Self, CatalogueError> {
        let invalid = |invariant: &'static str, detail: String| CatalogueError::Invalid { invariant, detail };

        let mut by_code = BTreeMap::new();
        for node in nodes {
            if node.question.trim().is_empty() {
                return Err(invalid("taxonomy node has a question", format!("`{}` has an empty question", node.code)));
            }
            if let Some(dup) = by_code.insert(node.code.clone(), node) {
                return Err(invalid("taxonomy codes are unique", format!("`{}` appears twice", dup.code)));
            }
        }
        if by_code.is_empty() {
            return Err(invalid("taxonomy is non-empty", "no nodes".into()));
        }

        let mut children: BTreeMap<Option<TaxonomyCode>, Vec<TaxonomyCode>> = BTreeMap::new();
        for node in by_code.values() {
            match &node.parent {
                None if node.level != 1 => {
                    return Err(invalid("roots sit at level 1", format!("root `{}` has level {}", node.code, node.level)));
                }
                None => {}
                Some(parent) => {
                    let Some(p) = by_code.get(parent) else {
                        return Err(invalid("parent exists", format!("`{}` names unknown parent `{parent}`", node.code)));
                    };
                    if node.level != p.level + 1 {
                        return Err(invalid(
                            "child level is parent level + 1",
                            format!("`{}` (level {}) under `{}` (level {})", node.code, node.level, p.code, p.level),
                        ));
                    }
                }
            }
            if node.level == 0 || node.level > MAX_DEPTH {
                return Err(invalid("depth at most 3", format!("`{}` has level {}", node.code, node.level)));
            }
            children.entry(node.parent.clone()).or_default().push(node.code.clone());
        }
        // Levels strictly increase along parent links, so no cycles are possible.

        for (parent, kids) in children.iter_mut() {
            kids.sort_by_key(|c| (by_code[c].order, c.clone()));
            let orders: BTreeSet<u32> = kids.iter().map(|c| by_code[c].order).collect();
            if orders.len() != kids.len() {
                return Err(invalid(
                    "sibling order is unambiguous",
                    format!("children of {} share an order value", parent.as_ref().map_or("the root".into(), |p| format!("`{p}`"))),
                ));
            }
            if kids.len() < 2 {
                return Err(invalid(
                    "every branching point discriminates between at least two nodes",
                    format!("{} has a single child", parent.as_ref().map_or("the root".into(), |p| format!("`{p}`"))),
                ));
            }
        }

        Ok(Self { nodes: by_code, children })
    }

    pub fn node(&self, code: &TaxonomyCode) -> Option<&TaxonomyNode> {
        self.nodes.get(code)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &TaxonomyNode> {
        self.nodes.values()
    }

    pub fn contains(&self, code: &TaxonomyCode) -> bool {
        self.nodes.contains_key(code)
    }

    pub fn roots(&self) -> &[TaxonomyCode] {
        self.children.get(&None).map(Vec::as_slice).unwrap_or_default()
    }

    /// Children in sibling order.
    pub fn children(&self, code: &TaxonomyCode) -> &[TaxonomyCode] {
        self.children
            .get(&Some(code.clone()))
            .map(Vec::as_slice)
            .unwrap_or_default()
    }

    pub fn is_leaf(&self, code: &TaxonomyCode) -> bool {
        self.contains(code) && self.children(code).is_empty()
    }

    pub fn leaves(&self) -> Vec<&TaxonomyCode> {
        self.nodes.keys().filter(|c| self.is_leaf(c)).collect()
    }

    /// Root-to-node path, inclusive.
    pub fn path(&self, code: &TaxonomyCode) -> Result<Vec<TaxonomyCode>, CatalogueError> {
        let mut path = Vec::new();
        let mut cur = Some(code.clone());
        while let Some(c) = cur {
            let node = self.nodes.get(&c).ok_or_else(|| CatalogueError::UnknownCode(c.to_string()))?;
            cur = node.parent.clone();
            path.push(c);
        }
        path.reverse();
        Ok(path)
    }

    /// True when `code` equals `ancestor` or lies beneath it.
    pub fn descends_from(&self, code: &TaxonomyCode, ancestor: &TaxonomyCode) -> bool {
        let mut cur = Some(code);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            cur = self.nodes.get(c).and_then(|n| n.parent.as_ref());
        }
        false
    }

    /// The node at `level` on the path to `code`, if the path is that deep.
    pub fn ancestor_at_level(&self, code: &TaxonomyCode, level: u8) -> Option<TaxonomyCode> {
        self.path(code).ok()?.into_iter().find(|c| self.nodes[c].level == level)
    }

    /// Classifies from root-to-leaf yes/no answers.
    pub fn classify(&self, answers: &[bool]) -> Result<TaxonomyCode, CatalogueError> {
        let mut remaining = answers.iter().copied();
        let mut options = self.roots();
        let mut at: Option<&TaxonomyCode> = None;
        loop {
            if options.is_empty() {
                let leaf = at.expect("taxonomy has roots").clone();
                let extra = remaining.count();
                if extra > 0 {
                    return Err(CatalogueError::TooManyAnswers { leaf: leaf.to_string(), extra });
                }
                return Ok(leaf);
            }
            let mut chosen = options.last().expect("non-empty options");
            for candidate in &options[..options.len() - 1] {
                let answer = remaining.next().ok_or_else(|| CatalogueError::IncompleteAnswers {
                    at: at.map_or_else(|| "root".to_owned(), ToString::to_string),
                    pending_question: self.nodes[candidate].question.clone(),
                })?;
                if answer {
                    chosen = candidate;
                    break;
                }
            }
            at = Some(chosen);
            options = self.children(chosen);
        }
    }

    /// The questions that would be asked for `answers` so far, and the next
    /// one if the walk has not yet reached a leaf. Useful for interactive
    /// front-ends.
    pub fn next_prompt(&self, answers: &[bool]) -> Option<Prompt<'_>> {
        let mut remaining = answers.iter().copied();
        let mut options = self.roots();
        while !options.is_empty() {
            let mut chosen = options.last().expect("non-empty options");
            for candidate in &options[..options.len() - 1] {
                match remaining.next() {
                    None => {
                        return Some(Prompt {
                            node: candidate,
                            question: &self.nodes[candidate].question,
                        })
                    }
                    Some(true) => {
                        chosen = candidate;
                        break;
                    }
                    Some(false) => {}
                }
            }
            options = self.children(chosen);
        }
        None
    }

    /// One answer sequence reaching `leaf`.
    pub fn answers_for(&self, leaf: &TaxonomyCode) -> Result<Vec<bool>, CatalogueError> {
        if !self.is_leaf(leaf) {
            return Err(CatalogueError::UnknownCode(leaf.to_string()));
        }
        let path = self.path(leaf)?;
        let mut answers = Vec::new();
        let mut options = self.roots();
        for step in &path {
            let pos = options.iter().position(|c| c == step).expect("path follows children");
            answers.extend(std::iter::repeat_n(false, pos));
            if pos + 1 < options.len() {
                answers.push(true);
            }
            options = self.children(step);
        }
        Ok(answers)
    }
}
