//! Track-to-detection assignment.
//!
//! Costs live in a dense rows-by-columns matrix (tracks by detections);
//! `f64::INFINITY` marks a forbidden pair. Greedy matching is the default —
//! cheap, deterministic and usually good enough — with an optimal
//! Hungarian solver available when crossing tracks make greedy pick badly.

/// Dense cost matrix; `INFINITY` entries can never be matched.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    costs: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        CostMatrix { rows, cols, costs: vec![f64::INFINITY; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.costs[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, cost: f64) {
        self.costs[r * self.cols + c] = cost;
    }
}

/// Result of a matching round. `matches` pairs are (row, column), sorted by
/// row; the unmatched lists are sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

fn collect_unmatched(matrix: &CostMatrix, matches: &mut Vec<(usize, usize)>) -> Assignment {
    matches.sort_unstable();
    let mut row_used = vec![false; matrix.rows];
    let mut col_used = vec![false; matrix.cols];
    for &(r, c) in matches.iter() {
        row_used[r] = true;
        col_used[c] = true;
    }
    Assignment {
        matches: std::mem::take(matches),
        unmatched_rows: (0..matrix.rows).filter(|&r| !row_used[r]).collect(),
        unmatched_cols: (0..matrix.cols).filter(|&c| !col_used[c]).collect(),
    }
}

/// Greedily takes the cheapest remaining pair until none is feasible.
/// Ties break toward the lower column (detection) index, then the lower row,
/// so results are reproducible across runs.
pub fn greedy_assignment(matrix: &CostMatrix) -> Assignment {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for r in 0..matrix.rows {
        for c in 0..matrix.cols {
            let cost = matrix.get(r, c);
            if cost.is_finite() {
                candidates.push((cost, c, r));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut row_used = vec![false; matrix.rows];
    let mut col_used = vec![false; matrix.cols];
    let mut matches = Vec::new();
    for (_, c, r) in candidates {
        if !row_used[r] && !col_used[c] {
            row_used[r] = true;
            col_used[c] = true;
            matches.push((r, c));
        }
    }
    collect_unmatched(matrix, &mut matches)
}

/// Sentinel cost for padding/forbidden entries inside the Hungarian solve;
/// far above any plausible real assignment cost, far below overflow.
const BIG: f64 = 1e9;

/// Minimum-cost assignment via the Hungarian algorithm (potentials form,
/// O(n³)). Infeasible pairs are modeled with a uniform large cost, which
/// makes the solver first maximize the number of feasible matches and then
/// minimize total cost among those; padded or forbidden pairings are dropped
/// from the returned matches.
pub fn hungarian_assignment(matrix: &CostMatrix) -> Assignment {
    let n = matrix.rows.max(matrix.cols);
    if n == 0 {
        return collect_unmatched(matrix, &mut Vec::new());
    }
    // square, 1-indexed view with padding
    let a = |r: usize, c: usize| -> f64 {
        if r <= matrix.rows && c <= matrix.cols {
            let v = matrix.get(r - 1, c - 1);
            if v.is_finite() {
                v
            } else {
                BIG
            }
        } else {
            BIG
        }
    };

    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1]; // p[col] = row currently assigned there
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        // augment along the found path
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut matches = Vec::new();
    #[allow(clippy::needless_range_loop)] // p is 1-indexed like the rest of the algorithm
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= matrix.rows && j <= matrix.cols && matrix.get(i - 1, j - 1).is_finite() {
            matches.push((i - 1, j - 1));
        }
    }
    collect_unmatched(matrix, &mut matches)
}
