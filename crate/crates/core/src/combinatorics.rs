//! Index sets as bitmasks, lexicographic subset enumeration and the signs
//! produced by reordering wedge products.

/// Sorted index set encoded as a bitmask (bit `i` set means index `i` present).
pub type IndexSet = u32;

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// All `k`-element subsets of `0..n` in lexicographic order of their sorted
/// index tuples.
pub fn subsets(n: usize, k: usize) -> Vec<IndexSet> {
    let mut out = Vec::with_capacity(binomial(n, k));
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().fold(0u32, |acc, &i| acc | (1 << i)));
        let Some(pos) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return out;
        };
        idx[pos] += 1;
        for t in pos + 1..k {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

pub fn indices(set: IndexSet) -> Vec<usize> {
    (0..32).filter(|&i| set & (1 << i) != 0).collect()
}

pub fn size(set: IndexSet) -> usize {
    set.count_ones() as usize
}

/// Sign of the permutation sorting the concatenation `a ++ b` (each sorted),
/// or `None` when the sets overlap.
pub fn merge_sign(a: IndexSet, b: IndexSet) -> Option<f64> {
    if a & b != 0 {
        return None;
    }
    // each element of b is moved past the elements of a that exceed it
    let mut inversions = 0u32;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        inversions += (a >> (j + 1)).count_ones();
        rest &= rest - 1;
    }
    Some(if inversions % 2 == 0 { 1.0 } else { -1.0 })
}

/// Sign of the permutation taking the ordered sequence `seq` to sorted order;
/// zero if an index repeats.
pub fn permutation_sign(seq: &[usize]) -> f64 {
    let mut sign = 1.0;
    for i in 0..seq.len() {
        for j in i + 1..seq.len() {
            if seq[i] == seq[j] {
                return 0.0;
            }
            if seq[i] > seq[j] {
                sign = -sign;
            }
        }
    }
    sign
}

/// Lookup table from bitmask to lexicographic rank among subsets of fixed size.
#[derive(Debug, Clone)]
pub struct SubsetRanks {
    pub sets: Vec<IndexSet>,
    rank: Vec<usize>,
}

impl SubsetRanks {
    pub fn new(n: usize, k: usize) -> Self {
        let sets = subsets(n, k);
        let mut rank = vec![usize::MAX; 1 << n];
        for (r, &s) in sets.iter().enumerate() {
            rank[s as usize] = r;
        }
        SubsetRanks { sets, rank }
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn rank(&self, set: IndexSet) -> Option<usize> {
        match self.rank.get(set as usize) {
            Some(&r) if r != usize::MAX => Some(r),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_counts_match_binomials() {
        for n in 0..9 {
            for k in 0..=n {
                let s = subsets(n, k);
                assert_eq!(s.len(), binomial(n, k));
                assert!(s.iter().all(|&x| size(x) == k));
            }
        }
        assert_eq!(subsets(11, 4).len(), 330);
    }

    #[test]
    fn lexicographic_order() {
        let s: Vec<Vec<usize>> = subsets(4, 2).into_iter().map(indices).collect();
        assert_eq!(
            s,
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
    }

    #[test]
    fn merge_sign_matches_permutation_sign() {
        for a in 0u32..32 {
            for b in 0u32..32 {
                let mut seq = indices(a);
                seq.extend(indices(b));
                match merge_sign(a, b) {
                    None => assert!(a & b != 0),
                    Some(s) => assert_eq!(s, permutation_sign(&seq)),
                }
            }
        }
    }

    #[test]
    fn ranks_round_trip() {
        let r = SubsetRanks::new(6, 3);
        for (i, &s) in r.sets.iter().enumerate() {
            assert_eq!(r.rank(s), Some(i));
        }
        assert_eq!(r.rank(0b11), None);
    }
}
