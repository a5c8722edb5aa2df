use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::SparseMatrix;

/// Approximate minimum-degree ordering on the pattern of `A + Aᵀ`, using a
/// quotient graph: eliminated nodes become elements that absorb their
/// neighbouring elements, and degrees are bounded through element sizes.
/// Nodes denser than `10 √n` go last.
pub(super) fn min_degree(a: &SparseMatrix) -> Vec<usize> {
    let n = a.rows();
    let mut vars: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in a.triplets() {
        if i != j {
            vars[i].push(j);
            vars[j].push(i);
        }
    }
    for v in &mut vars {
        v.sort_unstable();
        v.dedup();
    }
    let dense = (10.0 * (n as f64).sqrt()).max(16.0) as usize;
    let mut is_dense = vec![false; n];
    for i in 0..n {
        if vars[i].len() > dense {
            is_dense[i] = true;
        }
    }
    for v in vars.iter_mut() {
        v.retain(|&j| !is_dense[j]);
    }

    // elems[i]: elements adjacent to variable i; members[e]: variables of element e.
    let mut elems: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut absorbed = vec![false; n];
    let mut done = vec![false; n];
    let mut degree: Vec<usize> = vars.iter().map(Vec::len).collect();
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n)
        .filter(|&i| !is_dense[i])
        .map(|i| Reverse((degree[i], i)))
        .collect();
    let mut mark = vec![usize::MAX; n];
    let mut ext = vec![0usize; n];
    let mut ext_mark = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);

    while let Some(Reverse((d, p))) = heap.pop() {
        if done[p] || d != degree[p] {
            continue;
        }
        let k = order.len();
        done[p] = true;
        order.push(p);

        // New element p: neighbours of p plus the members of its elements.
        let mut lp = Vec::new();
        mark[p] = k;
        for &j in &vars[p] {
            if !done[j] && mark[j] != k {
                mark[j] = k;
                lp.push(j);
            }
        }
        for e in std::mem::take(&mut elems[p]) {
            if absorbed[e] {
                continue;
            }
            absorbed[e] = true;
            for &j in &members[e] {
                if !done[j] && mark[j] != k {
                    mark[j] = k;
                    lp.push(j);
                }
            }
            members[e] = Vec::new();
        }
        vars[p] = Vec::new();
        lp.sort_unstable();

        // |Le \ Lp| for elements touching Lp.
        for &i in &lp {
            for &e in &elems[i] {
                if absorbed[e] {
                    continue;
                }
                if ext_mark[e] != k {
                    ext_mark[e] = k;
                    ext[e] = members[e].iter().filter(|&&j| !done[j]).count();
                }
                ext[e] -= 1;
            }
        }
        let remaining = n - order.len();
        for &i in &lp {
            elems[i].retain(|&e| !absorbed[e]);
            elems[i].push(p);
            vars[i].retain(|&j| !done[j] && mark[j] != k);
            let mut deg = vars[i].len() + lp.len() - 1;
            for &e in &elems[i] {
                if e != p {
                    deg += ext[e];
                }
            }
            degree[i] = deg.min(remaining);
            heap.push(Reverse((degree[i], i)));
        }
        members[p] = lp;
    }
    order.extend((0..n).filter(|&i| !done[i]));
    order
}

/// Maximum transversal: a row per column such that every entry
/// `(row[c], c)` is structurally nonzero, by depth-first augmenting paths.
/// `cols` holds the matrix by column; unmatched columns get `usize::MAX`.
pub(super) fn transversal(cols: &SparseMatrix) -> Vec<usize> {
    const NONE: usize = usize::MAX;
    let n = cols.rows();
    let m = cols.cols();
    let mut row_of_col = vec![NONE; n];
    let mut col_of_row = vec![NONE; m];
    // Diagonal first, then any free row.
    for c in 0..n {
        if c < m && cols.get(c, c) != 0.0 {
            row_of_col[c] = c;
            col_of_row[c] = c;
        }
    }
    for c in 0..n {
        if row_of_col[c] != NONE {
            continue;
        }
        if let Some(&r) = cols.row(c).0.iter().find(|&&r| col_of_row[r] == NONE) {
            row_of_col[c] = r;
            col_of_row[r] = c;
        }
    }
    let mut visited = vec![NONE; m];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for start in 0..n {
        if row_of_col[start] != NONE {
            continue;
        }
        // Each frame: (column, next entry to try); rows reached via visited.
        stack.clear();
        stack.push((start, 0));
        let mut found = NONE;
        while let Some(&mut (c, ref mut next)) = stack.last_mut() {
            let rows = cols.row(c).0;
            if let Some(&r) = rows
                .iter()
                .find(|&&r| col_of_row[r] == NONE && visited[r] != start)
            {
                visited[r] = start;
                found = r;
                break;
            }
            let mut pushed = false;
            while *next < rows.len() {
                let r = rows[*next];
                *next += 1;
                if visited[r] != start {
                    visited[r] = start;
                    stack.push((col_of_row[r], 0));
                    pushed = true;
                    break;
                }
            }
            if !pushed {
                stack.pop();
            }
        }
        if found == NONE {
            continue;
        }
        // Augment along the stack.
        let mut r = found;
        while let Some((c, _)) = stack.pop() {
            let prev = row_of_col[c];
            row_of_col[c] = r;
            col_of_row[r] = c;
            r = prev;
        }
    }
    row_of_col
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn is_a_permutation() {
        let t: Vec<_> = (0..30)
            .flat_map(|i| [(i, i, 2.0), (i, (i * 7 + 3) % 30, 1.0)])
            .collect();
        let a = SparseMatrix::from_triplets(30, 30, &t).unwrap();
        let mut p = min_degree(&a);
        p.sort_unstable();
        assert_eq!(p, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn transversal_moves_entries_to_the_diagonal() {
        // Cyclic permutation pattern plus one extra entry; no diagonal at all.
        let n = 6;
        let mut t: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        t.push((0, 3, 2.0));
        let a = SparseMatrix::from_triplets(n, n, &t).unwrap();
        let m = transversal(&a.transpose());
        let mut rows = m.clone();
        rows.sort_unstable();
        assert_eq!(rows, (0..n).collect::<Vec<_>>());
        for (c, &r) in m.iter().enumerate() {
            assert_ne!(a.get(r, c), 0.0);
        }
        let singular = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0)]).unwrap();
        assert!(transversal(&singular.transpose()).contains(&usize::MAX));
    }

    #[test]
    fn arrow_matrix_defers_hub() {
        let n = 8;
        let mut t: Vec<_> = (0..n).map(|i| (i, i, 4.0)).collect();
        for i in 1..n {
            t.push((0, i, 1.0));
            t.push((i, 0, 1.0));
        }
        let a = SparseMatrix::from_triplets(n, n, &t).unwrap();
        let p = min_degree(&a);
        assert!(p.iter().position(|&v| v == 0).unwrap() >= n - 2);
    }
}
