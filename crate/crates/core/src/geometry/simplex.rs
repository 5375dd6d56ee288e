//! Dense phase-1 simplex for tiny nonnegative-combination feasibility problems.
//!
//! Decides whether `b = Σ α_j a_j` has a solution with `α >= 0`. Instances here
//! have d <= 4 rows and a handful of columns, so a dense tableau with Bland's
//! rule is both the simplest and the most robust choice.

const PIVOT_EPS: f64 = 1e-12;

/// Outcome of a phase-1 solve.
#[derive(Debug, Clone)]
pub(crate) struct PhaseOne {
    #[cfg_attr(not(test), allow(dead_code))]
    pub alpha: Vec<f64>,
    /// Euclidean residual `‖b − Aα‖` of the returned combination.
    pub residual: f64,
}

/// `columns[j]` is the j-th generator, each of length `b.len()`.
pub(crate) fn phase_one(columns: &[&[f64]], b: &[f64]) -> PhaseOne {
    let rows = b.len();
    let m = columns.len();
    let width = m + rows + 1; // structural | artificial | rhs
    let rhs_col = m + rows;

    let mut t = vec![0.0; rows * width];
    for r in 0..rows {
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for (c, col) in columns.iter().enumerate() {
            t[r * width + c] = sign * col[r];
        }
        t[r * width + m + r] = 1.0;
        t[r * width + rhs_col] = sign * b[r];
    }
    let mut basis: Vec<usize> = (m..m + rows).collect();

    // Reduced costs of min Σ artificials, with the artificials basic.
    let mut z = vec![0.0; width];
    for r in 0..rows {
        for c in 0..m {
            z[c] -= t[r * width + c];
        }
        z[rhs_col] -= t[r * width + rhs_col];
    }

    // Bland's rule terminates; the cap only guards against NaN input.
    let max_iter = 64 * (m + rows + 1);
    for _ in 0..max_iter {
        let Some(enter) = (0..m + rows).find(|&c| z[c] < -PIVOT_EPS) else {
            break;
        };

        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for r in 0..rows {
            let a = t[r * width + enter];
            if a > PIVOT_EPS {
                let ratio = t[r * width + rhs_col] / a;
                let better = match leave {
                    None => true,
                    Some(l) => {
                        ratio < best - PIVOT_EPS
                            || (ratio <= best + PIVOT_EPS && basis[r] < basis[l])
                    }
                };
                if better {
                    best = ratio;
                    leave = Some(r);
                }
            }
        }
        // Phase 1 is bounded below by zero, so an unbounded ray means round-off.
        let Some(p) = leave else { break };

        let piv = t[p * width + enter];
        for c in 0..width {
            t[p * width + c] /= piv;
        }
        for r in 0..rows {
            if r != p {
                let f = t[r * width + enter];
                if f != 0.0 {
                    for c in 0..width {
                        t[r * width + c] -= f * t[p * width + c];
                    }
                }
            }
        }
        let f = z[enter];
        for c in 0..width {
            z[c] -= f * t[p * width + c];
        }
        basis[p] = enter;
    }

    let mut alpha = vec![0.0; m];
    for r in 0..rows {
        if basis[r] < m {
            alpha[basis[r]] = t[r * width + rhs_col].max(0.0);
        }
    }
    let residual = (0..rows)
        .map(|r| {
            let s: f64 = columns.iter().zip(&alpha).map(|(col, a)| col[r] * a).sum();
            (b[r] - s) * (b[r] - s)
        })
        .sum::<f64>()
        .sqrt();
    PhaseOne { alpha, residual }
}
