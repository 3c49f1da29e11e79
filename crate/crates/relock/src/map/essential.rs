//! Essential graph skeleton: spanning tree and persistent loop edges.
//!
//! High-covisibility edges are derived from the covisibility graph at
//! pose-graph build time so they can never drift out of sync with the
//! weights.

use std::collections::{BTreeMap, BTreeSet};

use super::covisibility::CovisibilityGraph;
use super::types::KeyFrameId;

#[derive(Clone, Debug, Default)]
pub struct EssentialGraph {
    /// Spanning-tree parent; `None` marks the root.
    parents: BTreeMap<KeyFrameId, Option<KeyFrameId>>,
    /// Loop-closure edges, persistent once added, stored with `a < b`.
    loop_edges: BTreeSet<(KeyFrameId, KeyFrameId)>,
}

impl EssentialGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_keyframe(&mut self, kf: KeyFrameId, parent: Option<KeyFrameId>) {
        debug_assert!(!self.parents.contains_key(&kf));
        self.parents.insert(kf, parent);
    }

    pub fn parent(&self, kf: KeyFrameId) -> Option<KeyFrameId> {
        self.parents.get(&kf).copied().flatten()
    }

    pub fn contains(&self, kf: KeyFrameId) -> bool {
        self.parents.contains_key(&kf)
    }

    pub fn add_loop_edge(&mut self, a: KeyFrameId, b: KeyFrameId) {
        debug_assert_ne!(a, b);
        let edge = if a < b { (a, b) } else { (b, a) };
        self.loop_edges.insert(edge);
    }

    pub fn loop_edges(&self) -> impl Iterator<Item = (KeyFrameId, KeyFrameId)> + '_ {
        self.loop_edges.iter().copied()
    }

    /// Tree edges as `(child, parent)` in ascending child order.
    pub fn tree_edges(&self) -> Vec<(KeyFrameId, KeyFrameId)> {
        self.parents
            .iter()
            .filter_map(|(kf, p)| p.map(|p| (*kf, p)))
            .collect()
    }

    /// Covisibility pairs with weight at least `min_weight`, `a < b`.
    pub fn high_covisibility_edges(
        &self,
        covisibility: &CovisibilityGraph,
        min_weight: u32,
    ) -> Vec<(KeyFrameId, KeyFrameId)> {
        covisibility
            .edges()
            .into_iter()
            .filter(|(_, _, w)| *w >= min_weight)
            .map(|(a, b, _)| (a, b))
            .collect()
    }

    /// True when the parent pointers form a single acyclic tree covering
    /// every registered keyframe.
    pub fn is_spanning_tree(&self) -> bool {
        let mut roots = 0usize;
        for (kf, parent) in &self.parents {
            match parent {
                None => roots += 1,
                Some(p) => {
                    if !self.parents.contains_key(p) {
                        return false;
                    }
                    // walk to the root, bounded by the node count
                    let mut cur = *p;
                    let mut steps = 0usize;
                    loop {
                        if steps > self.parents.len() {
                            return false; // cycle
                        }
                        match self.parents.get(&cur).copied().flatten() {
                            Some(next) => {
                                if next == *kf {
                                    return false;
                                }
                                cur = next;
                                steps += 1;
                            }
                            None => break,
                        }
                    }
                }
            }
        }
        self.parents.is_empty() || roots == 1
    }
}
