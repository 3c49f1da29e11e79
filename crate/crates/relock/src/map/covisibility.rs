//! Covisibility graph: keyframes weighted by shared map-point counts.

use std::collections::BTreeMap;

use super::types::KeyFrameId;

/// Symmetric weight map. Weights equal exact shared-observation counts for
/// every stored edge; pruning policy lives in the map operations.
#[derive(Clone, Debug, Default)]
pub struct CovisibilityGraph {
    adjacency: BTreeMap<KeyFrameId, BTreeMap<KeyFrameId, u32>>,
}

impl CovisibilityGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn weight(&self, a: KeyFrameId, b: KeyFrameId) -> u32 {
        self.adjacency
            .get(&a)
            .and_then(|n| n.get(&b))
            .copied()
            .unwrap_or(0)
    }

    /// Set (or with weight 0, remove) a symmetric edge.
    pub fn set_weight(&mut self, a: KeyFrameId, b: KeyFrameId, weight: u32) {
        debug_assert_ne!(a, b, "no self edges in the covisibility graph");
        if weight == 0 {
            if let Some(n) = self.adjacency.get_mut(&a) {
                n.remove(&b);
            }
            if let Some(n) = self.adjacency.get_mut(&b) {
                n.remove(&a);
            }
        } else {
            self.adjacency.entry(a).or_default().insert(b, weight);
            self.adjacency.entry(b).or_default().insert(a, weight);
        }
    }

    /// Neighbors of `kf` in ascending id order.
    pub fn neighbors(&self, kf: KeyFrameId) -> Vec<KeyFrameId> {
        self.adjacency
            .get(&kf)
            .map(|n| n.keys().copied().collect())
            .unwrap_or_default()
    }

    /// Neighbors with at least `min_weight`, ascending id order.
    pub fn neighbors_with_weight(&self, kf: KeyFrameId, min_weight: u32) -> Vec<KeyFrameId> {
        self.adjacency
            .get(&kf)
            .map(|n| {
                n.iter()
                    .filter(|(_, &w)| w >= min_weight)
                    .map(|(id, _)| *id)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// All edges incident to `kf` as `(neighbor, weight)`.
    pub fn incident(&self, kf: KeyFrameId) -> Vec<(KeyFrameId, u32)> {
        self.adjacency
            .get(&kf)
            .map(|n| n.iter().map(|(id, w)| (*id, *w)).collect())
            .unwrap_or_default()
    }

    /// Every stored edge once, with `a < b`.
    pub fn edges(&self) -> Vec<(KeyFrameId, KeyFrameId, u32)> {
        let mut out = Vec::new();
        for (a, n) in &self.adjacency {
            for (b, w) in n {
                if a < b {
                    out.push((*a, *b, *w));
                }
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        for (a, n) in &self.adjacency {
            for (b, w) in n {
                if self.weight(*b, *a) != *w {
                    return false;
                }
            }
        }
        true
    }
}
