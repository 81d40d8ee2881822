//! Exact `W_p` between small discrete measures by the transportation simplex.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{norm, DiscreteMeasure};

/// Largest atom count accepted on either side.
pub const MAX_ATOMS: usize = 64;

/// Rows are atoms of `μ`, columns atoms of `ν`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coupling {
    pub matrix: Vec<Vec<f64>>,
}

impl Coupling {
    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let m = self.matrix.first().map_or(0, Vec::len);
        (0..m).map(|j| self.matrix.iter().map(|r| r[j]).sum()).collect()
    }
}

/// `W_p(μ, ν)` and an optimal coupling.
pub fn wasserstein_p(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<(f64, Coupling)> {
    if mu.len() > MAX_ATOMS || nu.len() > MAX_ATOMS {
        return Err(Error::TooLarge { rows: mu.len(), cols: nu.len(), limit: MAX_ATOMS });
    }
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    if !(p >= 1.0) {
        return Err(Error::BadInput(format!("p must be >= 1, got {p}")));
    }
    let cost: Vec<Vec<f64>> = mu
        .atoms()
        .iter()
        .map(|x| {
            nu.atoms()
                .iter()
                .map(|y| {
                    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                    norm(&diff).powf(p)
                })
                .collect()
        })
        .collect();
    let plan = transport_plan(mu.weights(), nu.weights(), &cost)?;
    let total: f64 = plan
        .iter()
        .zip(&cost)
        .map(|(r, c)| r.iter().zip(c).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    Ok((total.max(0.0).powf(1.0 / p), Coupling { matrix: plan }))
}

/// Minimizes `Σ π_ij c_ij` over couplings of `a` and `b`. Northwest-corner
/// start, MODI potentials, entering and leaving cells by lowest index.
pub fn transport_plan(a: &[f64], b: &[f64], cost: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 || cost.len() != n || cost.iter().any(|r| r.len() != m) {
        return Err(Error::BadInput("cost matrix does not match the marginals".into()));
    }
    let mut flow = vec![vec![0.0; m]; n];
    let mut basic = vec![vec![false; m]; n];

    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0], b[0]);
    loop {
        basic[i][j] = true;
        let x = ra.min(rb).max(0.0);
        flow[i][j] = x;
        if i == n - 1 && j == m - 1 {
            break;
        }
        let row_done = j == m - 1 || (i < n - 1 && ra <= rb);
        if row_done {
            rb -= ra;
            i += 1;
            ra = a[i];
        } else {
            ra -= rb;
            j += 1;
            rb = b[j];
        }
    }

    let scale = cost.iter().flatten().fold(0.0f64, |s, c| s.max(c.abs())).max(1.0);
    let tol = 1e-12 * scale;
    let limit = 50 * n * m + 1000;
    for _ in 0..limit {
        let (u, v) = potentials(&basic, cost);
        let entering = (0..n)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .find(|&(i, j)| !basic[i][j] && cost[i][j] - u[i] - v[j] < -tol);
        let Some((ei, ej)) = entering else {
            return Ok(flow);
        };
        let cycle = cycle_through(&basic, ei, ej);
        // odd positions lose flow
        let (mut theta, mut leave) = (f64::INFINITY, (0, 0));
        for &(ci, cj) in cycle.iter().skip(1).step_by(2) {
            let x = flow[ci][cj];
            if x < theta || (x == theta && (ci, cj) < leave) {
                theta = x;
                leave = (ci, cj);
            }
        }
        for (k, &(ci, cj)) in cycle.iter().enumerate() {
            if k % 2 == 0 {
                flow[ci][cj] += theta;
            } else {
                flow[ci][cj] = (flow[ci][cj] - theta).max(0.0);
            }
        }
        flow[leave.0][leave.1] = 0.0;
        basic[leave.0][leave.1] = false;
        basic[ei][ej] = true;
    }
    Err(Error::BadInput(format!("transport simplex did not terminate in {limit} pivots")))
}

/// Dual potentials with `u_0 = 0` over the basis tree.
fn potentials(basic: &[Vec<bool>], cost: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = (basic.len(), basic[0].len());
    let mut u = vec![f64::NAN; n];
    let mut v = vec![f64::NAN; m];
    u[0] = 0.0;
    // nodes 0..n are rows, n..n+m columns
    let mut queue = VecDeque::from([0usize]);
    while let Some(node) = queue.pop_front() {
        if node < n {
            for j in 0..m {
                if basic[node][j] && v[j].is_nan() {
                    v[j] = cost[node][j] - u[node];
                    queue.push_back(n + j);
                }
            }
        } else {
            let j = node - n;
            for i in 0..n {
                if basic[i][j] && u[i].is_nan() {
                    u[i] = cost[i][j] - v[j];
                    queue.push_back(i);
                }
            }
        }
    }
    (u, v)
}

/// The cycle closed by adding `(ei, ej)` to the basis, starting with it.
fn cycle_through(basic: &[Vec<bool>], ei: usize, ej: usize) -> Vec<(usize, usize)> {
    let (n, m) = (basic.len(), basic[0].len());
    let mut parent = vec![usize::MAX; n + m];
    let start = n + ej;
    parent[start] = start;
    let mut queue = VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        if node == ei {
            break;
        }
        let neighbours: Vec<usize> = if node < n {
            (0..m).filter(|&j| basic[node][j]).map(|j| n + j).collect()
        } else {
            (0..n).filter(|&i| basic[i][node - n]).collect()
        };
        for next in neighbours {
            if parent[next] == usize::MAX {
                parent[next] = node;
                queue.push_back(next);
            }
        }
    }
    let mut cycle = vec![(ei, ej)];
    let mut node = ei;
    while node != start {
        let up = parent[node];
        cycle.push(if node < n { (node, up - n) } else { (up, node - n) });
        node = up;
    }
    cycle
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn line(xs: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::uniform(xs.iter().map(|x| vec![*x]).collect()).unwrap()
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for k in 0..n {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn assert_marginals(c: &Coupling, a: &[f64], b: &[f64]) {
        for (x, y) in c.row_sums().iter().zip(a) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }
        for (x, y) in c.col_sums().iter().zip(b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }
        assert!(c.matrix.iter().flatten().all(|v| *v >= 0.0));
    }

    #[test]
    fn identical_measures() {
        let mu = DiscreteMeasure::new(vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![0.5, 0.5]], vec![0.2, 0.5, 0.3]).unwrap();
        let (d, c) = wasserstein_p(&mu, &mu, 2.0).unwrap();
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-12);
        assert_marginals(&c, mu.weights(), mu.weights());
    }

    #[test]
    fn diracs() {
        let x = DiscreteMeasure::dirac(vec![1.0, 2.0]).unwrap();
        let y = DiscreteMeasure::dirac(vec![4.0, -2.0]).unwrap();
        for p in [1.0, 2.0, 3.5] {
            assert_abs_diff_eq!(wasserstein_p(&x, &y, p).unwrap().0, 5.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_point_example() {
        let (d, c) = wasserstein_p(&line(&[0.0, 1.0]), &line(&[0.0, 2.0]), 2.0).unwrap();
        // the two vertex couplings cost ½·0 + ½·1 and ½·4 + ½·1
        assert_abs_diff_eq!(d, 0.5f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(c.matrix[0][0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn too_large() {
        let xs: Vec<f64> = (0..65).map(f64::from).collect();
        assert!(matches!(
            wasserstein_p(&line(&xs), &line(&[0.0]), 2.0),
            Err(Error::TooLarge { rows: 65, cols: 1, limit: 64 })
        ));
    }

    #[test]
    fn unequal_sizes_and_weights() {
        // on the line with p = 1 the distance is the L1 gap of the CDFs
        let mu = DiscreteMeasure::new(vec![vec![0.0], vec![1.0], vec![3.0]], vec![0.5, 0.25, 0.25]).unwrap();
        let nu = DiscreteMeasure::new(vec![vec![0.5], vec![2.0]], vec![0.4, 0.6]).unwrap();
        let (d, c) = wasserstein_p(&mu, &nu, 1.0).unwrap();
        // CDF gaps: [0,0.5): 0.5, [0.5,1): 0.1, [1,2): 0.35, [2,3): 0.25
        let oracle = 0.5 * 0.5 + 0.5 * 0.1 + 1.0 * 0.35 + 1.0 * 0.25;
        assert_abs_diff_eq!(d, oracle, epsilon = 1e-12);
        assert_marginals(&c, mu.weights(), nu.weights());
    }

    fn cloud(n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-2.0..2.0f64, d), n)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_permutation_enumeration(
            (xs, ys) in (1usize..=5).prop_flat_map(|n| (cloud(n, 2), cloud(n, 2))),
            p in prop::sample::select(vec![1.0, 2.0, 3.0]),
        ) {
            let n = xs.len();
            let mu = DiscreteMeasure::uniform(xs.clone()).unwrap();
            let nu = DiscreteMeasure::uniform(ys.clone()).unwrap();
            let brute = permutations(n)
                .iter()
                .map(|s| {
                    (0..n)
                        .map(|i| {
                            let diff: Vec<f64> = xs[i].iter().zip(&ys[s[i]]).map(|(a, b)| a - b).collect();
                            norm(&diff).powf(p)
                        })
                        .sum::<f64>()
                        / n as f64
                })
                .fold(f64::INFINITY, f64::min)
                .powf(1.0 / p);
            let (d, c) = wasserstein_p(&mu, &nu, p).unwrap();
            prop_assert!((d - brute).abs() <= 1e-10 * brute.max(1.0), "{d} vs {brute}");
            assert_marginals(&c, mu.weights(), nu.weights());
        }

        #[test]
        fn metric_axioms(
            xs in cloud(4, 2), ys in cloud(3, 2), zs in cloud(5, 2),
            wx in prop::collection::vec(0.1..1.0f64, 4),
        ) {
            let total: f64 = wx.iter().sum();
            let mu = DiscreteMeasure::new(xs, wx.iter().map(|w| w / total).collect()).unwrap();
            let nu = DiscreteMeasure::uniform(ys).unwrap();
            let rho = DiscreteMeasure::uniform(zs).unwrap();
            let d = |a: &DiscreteMeasure, b: &DiscreteMeasure| wasserstein_p(a, b, 2.0).unwrap().0;
            prop_assert!((d(&mu, &nu) - d(&nu, &mu)).abs() <= 1e-10);
            prop_assert!(d(&mu, &rho) <= d(&mu, &nu) + d(&nu, &rho) + 1e-8);
        }
    }
}
