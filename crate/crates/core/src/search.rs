//! Binary searches that report how many key comparisons they made.

/// Number of elements of the ascending slice `sorted` that are `<= key`,
/// together with the comparison count. The count is at most
/// `ceil(log2(len + 1))`.
#[inline]
pub fn rank_le<T: Copy + Ord>(sorted: &[T], key: T) -> (usize, u32) {
    rank_le_by(sorted.len(), |i| sorted[i], key)
}

#[inline]
pub fn rank_le_by<T: Ord>(len: usize, at: impl Fn(usize) -> T, key: T) -> (usize, u32) {
    let (mut lo, mut hi) = (0usize, len);
    let mut comparisons = 0;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        comparisons += 1;
        if at(mid) <= key {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    (lo, comparisons)
}

/// `ceil(log2(n))`, with `0` for `n <= 1`.
pub fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ceil_log2_values() {
        let got: Vec<_> = [0, 1, 2, 3, 4, 5, 8, 9, 1024, 1025].map(ceil_log2).to_vec();
        assert_eq!(got, vec![0, 0, 1, 2, 2, 3, 3, 4, 10, 11]);
    }

    #[test]
    fn rank_edges() {
        assert_eq!(rank_le::<u64>(&[], 5).0, 0);
        assert_eq!(rank_le(&[3u64, 6, 9], 2).0, 0);
        assert_eq!(rank_le(&[3u64, 6, 9], 3).0, 1);
        assert_eq!(rank_le(&[3u64, 6, 9], 8).0, 2);
        assert_eq!(rank_le(&[3u64, 6, 9], 100).0, 3);
    }

    proptest! {
        #[test]
        fn rank_matches_linear_scan(
            mut v in proptest::collection::vec(0u64..1000, 0..300),
            key in 0u64..1000,
        ) {
            v.sort_unstable();
            let (rank, cmps) = rank_le(&v, key);
            prop_assert_eq!(rank, v.iter().filter(|&&x| x <= key).count());
            prop_assert!(cmps <= ceil_log2(v.len()) + 1);
        }
    }
}
