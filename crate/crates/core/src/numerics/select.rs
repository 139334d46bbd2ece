//! Partial selection of the k best entries of a slice.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Whether "best" means smallest or largest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Min,
    Max,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum SelectError {
    #[error("requested k = {k} exceeds {len} available values")]
    KOutOfRange { k: usize, len: usize },
}

/// Entry ordered worst-first so the heap root is the current worst keeper.
struct Keep {
    value: f64,
    index: usize,
    direction: Direction,
}

impl Keep {
    /// True if `self` is a better pick than `other` (ties go to lower index).
    fn better_than(&self, other: &Self) -> bool {
        let ord = match self.direction {
            Direction::Min => self.value.total_cmp(&other.value),
            Direction::Max => other.value.total_cmp(&self.value),
        };
        match ord {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => self.index < other.index,
        }
    }
}

impl PartialEq for Keep {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value && self.index == other.index
    }
}
impl Eq for Keep {}
impl PartialOrd for Keep {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Keep {
    fn cmp(&self, other: &Self) -> Ordering {
        if self.better_than(other) {
            Ordering::Less
        } else if other.better_than(self) {
            Ordering::Greater
        } else {
            Ordering::Equal
        }
    }
}

/// Return the indices of the `k` best values, best first.
///
/// Ties are broken toward the lower index, so the result is deterministic.
/// Runs in O(n log k) with a bounded heap; the input is not reordered.
pub fn select_top_k(
    values: &[f64],
    k: usize,
    direction: Direction,
) -> Result<Vec<usize>, SelectError> {
    if k > values.len() {
        return Err(SelectError::KOutOfRange {
            k,
            len: values.len(),
        });
    }
    if k == 0 {
        return Ok(Vec::new());
    }

    let mut heap: BinaryHeap<Keep> = BinaryHeap::with_capacity(k + 1);
    for (index, &value) in values.iter().enumerate() {
        let candidate = Keep {
            value,
            index,
            direction,
        };
        if heap.len() < k {
            heap.push(candidate);
        } else if candidate.better_than(heap.peek().expect("nonempty heap")) {
            heap.pop();
            heap.push(candidate);
        }
    }

    let mut picked: Vec<Keep> = heap.into_vec();
    picked.sort_by(|a, b| a.cmp(b));
    Ok(picked.into_iter().map(|e| e.index).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_smallest_of_three() {
        assert_eq!(select_top_k(&[5.0, 1.0, 3.0], 2, Direction::Min).unwrap(), vec![1, 2]);
    }

    #[test]
    fn ties_break_by_index() {
        assert_eq!(select_top_k(&[2.0, 2.0, 2.0], 2, Direction::Min).unwrap(), vec![0, 1]);
        assert_eq!(select_top_k(&[2.0, 2.0, 2.0], 2, Direction::Max).unwrap(), vec![0, 1]);
    }

    #[test]
    fn max_direction() {
        assert_eq!(select_top_k(&[1.0, 9.0, 4.0, 7.0], 2, Direction::Max).unwrap(), vec![1, 3]);
    }

    #[test]
    fn k_too_large_is_error() {
        assert!(matches!(
            select_top_k(&[1.0], 2, Direction::Min),
            Err(SelectError::KOutOfRange { k: 2, len: 1 })
        ));
    }

    #[test]
    fn k_zero_is_empty() {
        assert!(select_top_k(&[1.0, 2.0], 0, Direction::Min).unwrap().is_empty());
    }

    #[test]
    fn infinities_sort_last_for_min() {
        let v = [f64::INFINITY, 2.0, f64::INFINITY, 1.0];
        assert_eq!(select_top_k(&v, 3, Direction::Min).unwrap(), vec![3, 1, 0]);
    }

    /// Full-sort oracle: stable sort on (value, index).
    fn oracle(values: &[f64], k: usize, direction: Direction) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| {
            let ord = match direction {
                Direction::Min => values[a].total_cmp(&values[b]),
                Direction::Max => values[b].total_cmp(&values[a]),
            };
            ord.then(a.cmp(&b))
        });
        idx.truncate(k);
        idx
    }

    #[test]
    fn matches_full_sort_on_large_input() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let values: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        assert_eq!(
            select_top_k(&values, 10, Direction::Min).unwrap(),
            oracle(&values, 10, Direction::Min)
        );
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(1000))]

        #[test]
        fn agrees_with_full_sort(values in proptest::collection::vec(-1e3..1e3_f64, 1..100),
                                 k_frac in 0.0..1.0_f64,
                                 max in proptest::bool::ANY) {
            let k = ((values.len() as f64) * k_frac) as usize;
            let direction = if max { Direction::Max } else { Direction::Min };
            proptest::prop_assert_eq!(
                select_top_k(&values, k, direction).unwrap(),
                oracle(&values, k, direction)
            );
        }
    }
}
