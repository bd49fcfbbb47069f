use crate::linalg::Matrix;
use crate::mvn::normal::{std_normal_cdf, std_normal_pdf};
use crate::{Error, Result, Scalar};

/// Variable ordering plus the Cholesky factor of the permuted covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ReorderedCholesky<T> {
    /// `permutation[i]` is the original index of the i-th integration variable.
    pub permutation: Vec<usize>,
    /// Lower triangular, `factor·factorᵀ = covariance.permuted(&permutation)`.
    pub factor: Matrix<T>,
}

/// Mean of a standard normal truncated to [lo, hi].
fn truncated_mean(lo: f64, hi: f64) -> f64 {
    let mass = std_normal_cdf(hi) - std_normal_cdf(lo);
    if mass > 1e-300 {
        (std_normal_pdf(lo) - std_normal_pdf(hi)) / mass
    } else if lo.is_finite() && hi.is_finite() {
        0.5 * (lo + hi)
    } else if lo.is_finite() {
        lo
    } else {
        hi
    }
}

/// Greedy variable reordering and Cholesky factorization for a rectangle
/// probability with zero mean and bounds `lower`, `upper`.
///
/// At step i the remaining variable with the smallest conditional probability
/// of its interval, given the earlier variables at their truncated conditional
/// expectations, is moved to position i. Putting the most constrained
/// variables first concentrates the integrand's variation in the outer
/// dimensions.
pub fn cholesky_reordered<T: Scalar>(
    covariance: &Matrix<T>,
    lower: &[T],
    upper: &[T],
) -> Result<ReorderedCholesky<T>> {
    let p = covariance.rows();
    if !covariance.is_square() || lower.len() != p || upper.len() != p {
        return Err(Error::MvnProblem(format!(
            "covariance {}×{} with {} lower and {} upper bounds",
            covariance.rows(),
            covariance.cols(),
            lower.len(),
            upper.len()
        )));
    }
    let mut c = covariance.clone();
    let mut a: Vec<f64> = lower.iter().map(|x| x.as_f64()).collect();
    let mut b: Vec<f64> = upper.iter().map(|x| x.as_f64()).collect();
    let mut perm: Vec<usize> = (0..p).collect();
    let mut l = Matrix::<T>::zeros(p, p);
    let mut y = vec![0.0f64; p];
    let floor_factor = T::epsilon() * T::lit(16.0);

    for i in 0..p {
        let mut best: Option<(usize, f64)> = None;
        for j in i..p {
            let mut var = c[(j, j)];
            let mut shift = 0.0;
            for k in 0..i {
                var -= l[(j, k)] * l[(j, k)];
                shift += l[(j, k)].as_f64() * y[k];
            }
            if !(var > floor_factor * c[(j, j)].abs()) {
                return Err(Error::Factorization {
                    pivot: perm[j],
                    value: var.as_f64(),
                });
            }
            let sd = var.sqrt().as_f64();
            let prob = std_normal_cdf((b[j] - shift) / sd) - std_normal_cdf((a[j] - shift) / sd);
            if best.is_none_or(|(_, p_best)| prob < p_best) {
                best = Some((j, prob));
            }
        }
        let (j, _) = best.expect("at least one remaining variable");
        if j != i {
            perm.swap(i, j);
            a.swap(i, j);
            b.swap(i, j);
            swap_symmetric(&mut c, i, j);
            for k in 0..i {
                let t = l[(i, k)];
                l[(i, k)] = l[(j, k)];
                l[(j, k)] = t;
            }
        }

        let mut d = c[(i, i)];
        for k in 0..i {
            d -= l[(i, k)] * l[(i, k)];
        }
        let lii = d.sqrt();
        l[(i, i)] = lii;
        for r in (i + 1)..p {
            let mut s = c[(r, i)];
            for k in 0..i {
                s -= l[(r, k)] * l[(i, k)];
            }
            l[(r, i)] = s / lii;
        }

        let mut shift = 0.0;
        for k in 0..i {
            shift += l[(i, k)].as_f64() * y[k];
        }
        let sd = lii.as_f64();
        y[i] = truncated_mean((a[i] - shift) / sd, (b[i] - shift) / sd);
    }

    Ok(ReorderedCholesky {
        permutation: perm,
        factor: l,
    })
}

fn swap_symmetric<T: Scalar>(c: &mut Matrix<T>, i: usize, j: usize) {
    let n = c.rows();
    for k in 0..n {
        let t = c[(i, k)];
        c[(i, k)] = c[(j, k)];
        c[(j, k)] = t;
    }
    for k in 0..n {
        let t = c[(k, i)];
        c[(k, i)] = c[(k, j)];
        c[(k, j)] = t;
    }
}
