use crate::Scalar;

const BLOCK: usize = 128;

/// Pairwise (cascade) summation. The split points depend only on the length,
/// so the result is reproducible regardless of who calls it.
pub(crate) fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    if xs.len() <= BLOCK {
        let mut acc = T::zero();
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub(crate) fn pairwise_mean<T: Scalar>(xs: &[T]) -> T {
    pairwise_sum(xs) / T::from_usize_lossy(xs.len())
}
