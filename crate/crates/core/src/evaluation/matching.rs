/// Maximum-weight assignment on a rectangular matrix (Hungarian algorithm,
/// O(n³) with potentials). Returns, for each row, its matched column or
/// `None` when there are more rows than columns.
pub fn max_weight_matching(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let big = weights
        .iter()
        .flatten()
        .fold(0.0f64, |m, &w| m.max(w.abs()));
    // minimize (big − w) on the zero-padded square matrix
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            big - weights[i][j]
        } else {
            big
        }
    };
    // 1-based potentials u (rows), v (columns); p[j] = row matched to column j
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
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
    let mut out = vec![None; rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

/// Clustering accuracy: matched count / N under the best one-to-one
/// cluster→label correspondence of the contingency table.
pub fn cluster_accuracy(assignments: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(assignments.len(), labels.len(), "assignment/label length mismatch");
    let n = labels.len();
    if n == 0 {
        return 0.0;
    }
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0.0; classes]; k];
    for (&a, &l) in assignments.iter().zip(labels) {
        table[a][l] += 1.0;
    }
    let matched: f64 = max_weight_matching(&table)
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|j| table[i][j]))
        .sum();
    matched / n as f64
}
