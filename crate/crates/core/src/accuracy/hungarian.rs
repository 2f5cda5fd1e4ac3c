//! Minimum-cost perfect assignment on a square matrix (Kuhn-Munkres with
//! row/column potentials, O(n^3)).

/// Returns `assignment[row] = column` and the total cost.
pub fn hungarian(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = cost.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    assert!(cost.iter().all(|r| r.len() == n), "cost matrix must be square");
    // 1-based arrays; index 0 is the virtual start column
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
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    let total = assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    (assignment, total)
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn two_by_two_hand_example() {
        let (a, total) = hungarian(&[vec![0.2, 0.9], vec![0.8, 0.1]]);
        assert_eq!(a, [0, 1]);
        assert!((total - 0.3).abs() < 1e-12);
    }

    #[test]
    fn anti_diagonal() {
        let (a, total) = hungarian(&[vec![5.0, 1.0, 9.0], vec![1.0, 9.0, 9.0], vec![9.0, 9.0, 1.0]]);
        assert_eq!(a, [1, 0, 2]);
        assert_eq!(total, 3.0);
    }

    #[test]
    fn empty_and_single() {
        assert_eq!(hungarian(&[]), (vec![], 0.0));
        assert_eq!(hungarian(&[vec![4.0]]), (vec![0], 4.0));
    }

    #[test]
    fn matches_permutation_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let n = rng.random_range(1..=6);
            let m: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
            let (a, total) = hungarian(&m);
            let mut cols = a.clone();
            cols.sort();
            assert_eq!(cols, (0..n).collect::<Vec<_>>());
            assert!((total - oracle::brute_force(&m)).abs() < 1e-9);
        }
    }
}
