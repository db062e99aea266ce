//! Set partitions: the partition type used by formation, plus enumeration in
//! restricted-growth-string order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disjoint coalitions covering a set of SBS ids. Kept normalized: members
/// ascending within a coalition, coalitions ordered by smallest member.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    coalitions: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(coalitions: Vec<Vec<usize>>) -> Result<Self> {
        let mut coalitions: Vec<Vec<usize>> = coalitions
            .into_iter()
            .map(|mut c| {
                c.sort_unstable();
                c
            })
            .collect();
        if coalitions.iter().any(|c| c.is_empty()) {
            return Err(Error::InvalidConfig(
                "partition contains an empty coalition".into(),
            ));
        }
        coalitions.sort_by_key(|c| c[0]);
        let mut all: Vec<usize> = coalitions.iter().flatten().copied().collect();
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("partition coalitions overlap".into()));
        }
        Ok(Self { coalitions })
    }

    pub fn singletons(ids: impl IntoIterator<Item = usize>) -> Self {
        Self::new(ids.into_iter().map(|i| vec![i]).collect()).expect("distinct ids")
    }

    pub fn coalitions(&self) -> &[Vec<usize>] {
        &self.coalitions
    }

    pub fn len(&self) -> usize {
        self.coalitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coalitions.is_empty()
    }

    pub fn members(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.coalitions.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    /// Whether this is an exact partition of `0..n`.
    pub fn covers(&self, n: usize) -> bool {
        self.members() == (0..n).collect::<Vec<_>>()
    }

    pub fn coalition_of(&self, i: usize) -> Option<&[usize]> {
        self.coalitions
            .iter()
            .find(|c| c.contains(&i))
            .map(|c| c.as_slice())
    }

    /// Replaces the coalitions in `old` (by index) with `new` ones.
    pub fn replace(&self, old: &[usize], new: Vec<Vec<usize>>) -> Self {
        let mut coalitions: Vec<Vec<usize>> = self
            .coalitions
            .iter()
            .enumerate()
            .filter(|(k, _)| !old.contains(k))
            .map(|(_, c)| c.clone())
            .collect();
        coalitions.extend(new);
        Self::new(coalitions).expect("replacement keeps a partition")
    }

    pub fn mean_size(&self) -> f64 {
        if self.coalitions.is_empty() {
            return 0.0;
        }
        self.coalitions.iter().map(Vec::len).sum::<usize>() as f64 / self.coalitions.len() as f64
    }

    /// Compact text form, e.g. `{0,3}{1}{2,4}`.
    pub fn label(&self) -> String {
        self.coalitions
            .iter()
            .map(|c| {
                format!(
                    "{{{}}}",
                    c.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
                )
            })
            .collect()
    }
}

impl std::fmt::Display for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// Number of set partitions of an `n`-set.
pub fn bell(n: usize) -> u128 {
    let mut row = vec![1u128];
    for _ in 0..n {
        let mut next = vec![*row.last().unwrap()];
        for &x in &row {
            let v = next.last().unwrap() + x;
            next.push(v);
        }
        row = next;
    }
    row[0]
}

/// All set partitions of `items`, in restricted-growth-string order. The
/// first yielded is the single block, the last is all singletons.
pub struct SetPartitions<'a> {
    items: &'a [usize],
    rgs: Vec<usize>,
    done: bool,
}

impl<'a> SetPartitions<'a> {
    pub fn new(items: &'a [usize]) -> Self {
        Self {
            items,
            rgs: vec![0; items.len()],
            done: items.is_empty(),
        }
    }

    fn blocks(&self) -> Vec<Vec<usize>> {
        let k = self.rgs.iter().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); k];
        for (pos, &b) in self.rgs.iter().enumerate() {
            blocks[b].push(self.items[pos]);
        }
        blocks
    }

    fn advance(&mut self) -> bool {
        let n = self.rgs.len();
        for i in (1..n).rev() {
            let prefix_max = self.rgs[..i].iter().copied().max().unwrap_or(0);
            if self.rgs[i] <= prefix_max {
                self.rgs[i] += 1;
                for x in &mut self.rgs[i + 1..] {
                    *x = 0;
                }
                return true;
            }
        }
        false
    }
}

impl Iterator for SetPartitions<'_> {
    type Item = Vec<Vec<usize>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let out = self.blocks();
        if !self.advance() {
            self.done = true;
        }
        Some(out)
    }
}

/// Proper two-block splits of `items` in restricted-growth-string order; the
/// block holding `items[0]` comes first.
pub fn two_way_splits(items: &[usize]) -> impl Iterator<Item = [Vec<usize>; 2]> + '_ {
    let n = items.len();
    let count: u64 = if n < 2 { 0 } else { 1u64 << (n - 1) };
    // Bit k-1 of the mask puts items[k] into the second block; all-zero is
    // the unsplit set. Enumerating masks as RGS strings (read left to right)
    // means reversing the bit order.
    (1..count).map(move |mask| {
        let rgs_mask = (0..n - 1).fold(0u64, |acc, k| acc | (((mask >> k) & 1) << (n - 2 - k)));
        let mut a = vec![items[0]];
        let mut b = Vec::new();
        for (k, &item) in items.iter().enumerate().skip(1) {
            if (rgs_mask >> (k - 1)) & 1 == 1 {
                b.push(item);
            } else {
                a.push(item);
            }
        }
        [a, b]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bell_numbers() {
        let expect = [1u128, 1, 2, 5, 15, 52, 203, 877, 4140, 21147];
        for (n, &b) in expect.iter().enumerate() {
            assert_eq!(bell(n), b);
        }
    }

    #[test]
    fn enumeration_counts_match_bell() {
        for n in 0..=8 {
            let items: Vec<usize> = (0..n).collect();
            let count = SetPartitions::new(&items).count() as u128;
            assert_eq!(count, if n == 0 { 0 } else { bell(n) });
        }
    }

    #[test]
    fn three_set_in_rgs_order() {
        let all: Vec<_> = SetPartitions::new(&[4, 5, 6]).collect();
        assert_eq!(
            all,
            vec![
                vec![vec![4, 5, 6]],
                vec![vec![4, 5], vec![6]],
                vec![vec![4, 6], vec![5]],
                vec![vec![4], vec![5, 6]],
                vec![vec![4], vec![5], vec![6]],
            ]
        );
    }

    #[test]
    fn two_way_splits_of_three() {
        let all: Vec<_> = two_way_splits(&[1, 2, 3]).collect();
        assert_eq!(
            all,
            vec![
                [vec![1, 2], vec![3]],
                [vec![1, 3], vec![2]],
                [vec![1], vec![2, 3]],
            ]
        );
        assert_eq!(two_way_splits(&[1, 2, 3, 4, 5]).count(), 15);
        assert_eq!(two_way_splits(&[1]).count(), 0);
    }

    #[test]
    fn partition_normalizes_and_rejects_overlap() {
        let p = Partition::new(vec![vec![3, 1], vec![0], vec![2]]).unwrap();
        assert_eq!(p.coalitions(), &[vec![0], vec![1, 3], vec![2]]);
        assert!(p.covers(4));
        assert_eq!(p.label(), "{0}{1,3}{2}");
        assert!(Partition::new(vec![vec![0, 1], vec![1]]).is_err());
        let q = p.replace(&[0, 2], vec![vec![0, 2]]);
        assert_eq!(q.coalitions(), &[vec![0, 2], vec![1, 3]]);
    }

    proptest! {
        #[test]
        fn every_enumerated_partition_is_exact_and_distinct(n in 1usize..7) {
            let items: Vec<usize> = (0..n).collect();
            let mut seen = std::collections::HashSet::new();
            for blocks in SetPartitions::new(&items) {
                let p = Partition::new(blocks).unwrap();
                prop_assert!(p.covers(n));
                prop_assert!(seen.insert(p));
            }
        }
    }
}
