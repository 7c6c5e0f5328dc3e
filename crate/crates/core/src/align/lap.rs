use crate::error::{Error, Result};
use crate::linalg::Matrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Min,
    Max,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentProblem {
    pub cost: Matrix,
    pub sense: Sense,
}

impl AssignmentProblem {
    pub fn new(cost: Matrix, sense: Sense) -> Self {
        Self { cost, sense }
    }

    pub fn min(cost: Matrix) -> Self {
        Self::new(cost, Sense::Min)
    }

    pub fn max(cost: Matrix) -> Self {
        Self::new(cost, Sense::Max)
    }
}

/// Optimal assignment `row i -> column perm[i]` and its objective.
///
/// Among optimal assignments the lexicographically smallest is returned, so ties
/// always go to the lowest column index.
pub fn solve_lap(prob: &AssignmentProblem) -> Result<(Vec<usize>, f64)> {
    let c = &prob.cost;
    if !c.is_square() {
        return Err(Error::DimensionMismatch {
            context: "assignment cost",
            expected: "square matrix".into(),
            got: format!("{}x{}", c.nrows(), c.ncols()),
        });
    }
    if c.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("assignment cost".into()));
    }
    let n = c.nrows();
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let cost = match prob.sense {
        Sense::Min => c.clone(),
        Sense::Max => -c,
    };
    let (mut perm, u, v) = hungarian(&cost);
    lex_smallest(&cost, &u, &v, &mut perm);
    let objective = perm.iter().enumerate().map(|(i, &j)| c[(i, j)]).sum();
    Ok((perm, objective))
}

/// Shortest-augmenting-path Hungarian method with dual potentials (minimization).
fn hungarian(c: &Matrix) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = c.nrows();
    // 1-based arrays; index 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = c[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
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
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    (perm, u[1..].to_vec(), v[1..].to_vec())
}

/// Moves an optimal assignment to the lexicographically smallest one among the
/// assignments that are tight under the optimal duals (i.e. all optimal ones).
fn lex_smallest(c: &Matrix, u: &[f64], v: &[f64], perm: &mut [usize]) {
    let n = perm.len();
    let scale = 1.0 + c.amax();
    let tol = 1e-10 * scale;
    let tight = |i: usize, j: usize| (c[(i, j)] - u[i] - v[j]).abs() <= tol;
    let mut owner = vec![0; n];
    for (i, &j) in perm.iter().enumerate() {
        owner[j] = i;
    }
    let mut locked = vec![false; n];
    for i in 0..n {
        for j in 0..n {
            if j == perm[i] {
                break;
            }
            if !tight(i, j) || locked[owner[j]] {
                continue;
            }
            // Re-home the current owner of j, ending at the column i gives up.
            let target = perm[i];
            let start = owner[j];
            let mut seen = vec![false; n];
            let mut path = Vec::new();
            if find_path(start, target, j, i, &tight, perm, &owner, &locked, &mut seen, &mut path) {
                // path holds (row, new column) pairs.
                for &(r, col) in &path {
                    perm[r] = col;
                    owner[col] = r;
                }
                perm[i] = j;
                owner[j] = i;
                break;
            }
        }
        locked[i] = true;
    }
}

#[allow(clippy::too_many_arguments)]
fn find_path(
    row: usize,
    target: usize,
    banned: usize,
    skip_row: usize,
    tight: &impl Fn(usize, usize) -> bool,
    perm: &[usize],
    owner: &[usize],
    locked: &[bool],
    seen: &mut [bool],
    path: &mut Vec<(usize, usize)>,
) -> bool {
    let n = perm.len();
    for col in 0..n {
        if col == banned || col == perm[row] || seen[col] || !tight(row, col) {
            continue;
        }
        seen[col] = true;
        if col == target {
            path.push((row, col));
            return true;
        }
        let next = owner[col];
        if locked[next] || next == skip_row {
            continue;
        }
        path.push((row, col));
        if find_path(next, target, banned, skip_row, tight, perm, owner, locked, seen, path) {
            return true;
        }
        path.pop();
    }
    false
}

/// Exhaustive search over all permutations; only for tiny problems and tests.
pub fn brute_force_lap(prob: &AssignmentProblem) -> (Vec<usize>, f64) {
    let n = prob.cost.nrows();
    let better = |a: f64, b: f64| match prob.sense {
        Sense::Min => a < b,
        Sense::Max => a > b,
    };
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        let val: f64 = perm.iter().enumerate().map(|(i, &j)| prob.cost[(i, j)]).sum();
        if best.as_ref().is_none_or(|(_, b)| better(val, *b)) {
            best = Some((perm.clone(), val));
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    best.unwrap_or((Vec::new(), 0.0))
}

/// Advances to the next permutation in lexicographic order.
pub fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}
