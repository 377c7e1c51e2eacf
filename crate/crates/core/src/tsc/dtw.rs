use crate::error::{Error, Result};

/// Cumulative-cost matrix over `(n+1) x (m+1)` cells with an infinite border.
struct CostMatrix {
    cols: usize,
    cells: Vec<f64>,
}

impl CostMatrix {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.cols + j]
    }
}

fn check_inputs(x: &[f64], y: &[f64], band: Option<usize>) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Validation("DTW inputs must be non-empty".into()));
    }
    if let Some(r) = band {
        let gap = x.len().abs_diff(y.len());
        if r < gap {
            return Err(Error::Validation(format!(
                "Sakoe-Chiba band {r} admits no alignment for lengths {} and {}",
                x.len(),
                y.len()
            )));
        }
    }
    Ok(())
}

fn accumulate(x: &[f64], y: &[f64], band: Option<usize>) -> CostMatrix {
    let (n, m) = (x.len(), y.len());
    let cols = m + 1;
    let mut cells = vec![f64::INFINITY; (n + 1) * cols];
    cells[0] = 0.0;
    for i in 1..=n {
        let (lo, hi) = match band {
            Some(r) => (i.saturating_sub(r).max(1), (i + r).min(m)),
            None => (1, m),
        };
        for j in lo..=hi {
            let d = x[i - 1] - y[j - 1];
            let best = cells[(i - 1) * cols + j - 1]
                .min(cells[(i - 1) * cols + j])
                .min(cells[i * cols + j - 1]);
            cells[i * cols + j] = d * d + best;
        }
    }
    CostMatrix { cols, cells }
}

/// Minimum cumulative squared cost over monotone alignments (not rooted).
pub fn dtw_squared(x: &[f64], y: &[f64], band: Option<usize>) -> Result<f64> {
    check_inputs(x, y, band)?;
    Ok(accumulate(x, y, band).at(x.len(), y.len()))
}

/// DTW distance: square root of the minimum cumulative squared local cost.
/// `band` is an optional Sakoe-Chiba radius on `|i - j|`.
pub fn dtw_distance(x: &[f64], y: &[f64], band: Option<usize>) -> Result<f64> {
    dtw_squared(x, y, band).map(f64::sqrt)
}

/// DTW distance with one optimal alignment path of `(i, j)` index pairs,
/// from `(0, 0)` to `(n-1, m-1)`.
pub fn dtw_path(x: &[f64], y: &[f64], band: Option<usize>) -> Result<(f64, Vec<(usize, usize)>)> {
    let (sq, path) = dtw_squared_path(x, y, band)?;
    Ok((sq.sqrt(), path))
}

pub(crate) fn dtw_squared_path(
    x: &[f64],
    y: &[f64],
    band: Option<usize>,
) -> Result<(f64, Vec<(usize, usize)>)> {
    check_inputs(x, y, band)?;
    let acc = accumulate(x, y, band);
    let (mut i, mut j) = (x.len(), y.len());
    let mut path = Vec::with_capacity(i + j);
    path.push((i - 1, j - 1));
    while i > 1 || j > 1 {
        // prefer the diagonal on ties, then the i-1 step
        let diag = acc.at(i - 1, j - 1);
        let up = acc.at(i - 1, j);
        let left = acc.at(i, j - 1);
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push((i - 1, j - 1));
    }
    path.reverse();
    Ok((acc.at(x.len(), y.len()), path))
}
