use serde::{Deserialize, Serialize};

/// Per-node neighbor lists for one branch of the local convolution.
///
/// Lists are sorted, deduplicated and always contain the node itself.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodSets {
    lists: Vec<Vec<usize>>,
}

impl NeighborhoodSets {
    /// Builds the sets from raw lists, sorting and deduplicating each one.
    /// Self-membership is not added here; callers that want it include it.
    pub fn from_lists(mut lists: Vec<Vec<usize>>) -> Self {
        for l in &mut lists {
            l.sort_unstable();
            l.dedup();
        }
        Self { lists }
    }

    /// Every node attends only to itself.
    pub fn self_loops(n: usize) -> Self {
        Self {
            lists: (0..n).map(|i| vec![i]).collect(),
        }
    }

    /// Every node attends to every node.
    pub fn complete(n: usize) -> Self {
        Self {
            lists: (0..n).map(|_| (0..n).collect()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.lists[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.lists[i].binary_search(&j).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.lists.iter().map(Vec::as_slice)
    }

    pub fn is_symmetric(&self) -> bool {
        self.lists
            .iter()
            .enumerate()
            .all(|(i, l)| l.iter().all(|&j| j < self.len() && self.contains(j, i)))
    }

    /// True when `self` is a subset of `other`, row by row.
    pub fn is_subset_of(&self, other: &NeighborhoodSets) -> bool {
        self.len() == other.len()
            && self
                .lists
                .iter()
                .enumerate()
                .all(|(i, l)| l.iter().all(|&j| other.contains(i, j)))
    }

    /// Total number of (i, j) entries.
    pub fn nnz(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    /// Applies a node relabeling: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut lists = vec![Vec::new(); self.len()];
        for (i, l) in self.lists.iter().enumerate() {
            lists[perm[i]] = l.iter().map(|&j| perm[j]).collect();
        }
        Self::from_lists(lists)
    }
}
