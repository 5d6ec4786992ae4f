use crate::union_find::DisjointSets;

/// Surjection of ξ columns onto a reduced set of free columns, used to impose equalities
/// between columns exactly by sharing one stored scalar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    /// Reduced column of each original column.
    pub map: Vec<usize>,
    pub ncols: usize,
}

impl ColumnMap {
    pub fn identity(n: usize) -> Self {
        Self {
            map: (0..n).collect(),
            ncols: n,
        }
    }

    /// Reduced columns numbered by their smallest original member.
    pub fn from_sets(sets: &mut DisjointSets) -> Self {
        let (map, ncols) = sets.labels();
        Self { map, ncols }
    }

    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut sets = DisjointSets::new(n);
        for (a, b) in pairs {
            sets.union(a, b);
        }
        Self::from_sets(&mut sets)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn expand<T: Copy>(&self, reduced: &[T]) -> Vec<T> {
        self.map.iter().map(|&c| reduced[c]).collect()
    }

    /// Original-column groups sharing each reduced column.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut g = vec![Vec::new(); self.ncols];
        for (c, &r) in self.map.iter().enumerate() {
            g[r].push(c);
        }
        g
    }

    /// Union-find seeded with this map's classes.
    pub fn to_sets(&self) -> DisjointSets {
        let mut sets = DisjointSets::new(self.map.len());
        let mut rep = vec![usize::MAX; self.ncols];
        for (c, &r) in self.map.iter().enumerate() {
            if rep[r] == usize::MAX {
                rep[r] = c;
            } else {
                sets.union(rep[r], c);
            }
        }
        sets
    }
}
