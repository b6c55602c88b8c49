//! Gauss–Legendre rules and the spectral integration matrix used for
//! iterated integrals.

use nalgebra::DMatrix;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A composite Gauss–Legendre rule on `[a, b]`.
#[derive(Debug, Clone)]
pub struct CompositeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    /// `panels` equal panels of an `order`-point rule each.
    pub fn new(a: f64, b: f64, order: usize, panels: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(order * panels);
        let mut weights = Vec::with_capacity(order * panels);
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(lo + 0.5 * h * (xi + 1.0));
                weights.push(0.5 * h * wi);
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Spectral integration on one Gauss–Legendre panel `[a, b]`:
/// `cumulative[(i, j)]` integrates the `j`-th Lagrange basis polynomial from
/// `a` to node `i`, and `weights[j]` from `a` to `b`.
#[derive(Debug, Clone)]
pub struct IntegrationMatrix {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub cumulative: DMatrix<f64>,
}

impl IntegrationMatrix {
    pub fn new(a: f64, b: f64, order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let h = b - a;
        let nodes: Vec<f64> = x.iter().map(|xi| a + 0.5 * h * (xi + 1.0)).collect();
        let weights: Vec<f64> = w.iter().map(|wi| 0.5 * h * wi).collect();
        let bary = barycentric_weights(&nodes);
        let mut cumulative = DMatrix::zeros(order, order);
        for i in 0..order {
            let len = nodes[i] - a;
            for (xk, wk) in x.iter().zip(&w) {
                let y = a + 0.5 * len * (xk + 1.0);
                let basis = lagrange_basis(&nodes, &bary, y);
                for j in 0..order {
                    cumulative[(i, j)] += 0.5 * len * wk * basis[j];
                }
            }
        }
        Self {
            nodes,
            weights,
            cumulative,
        }
    }
}

fn barycentric_weights(x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            1.0 / (0..x.len())
                .filter(|&k| k != j)
                .map(|k| x[j] - x[k])
                .product::<f64>()
        })
        .collect()
}

fn lagrange_basis(x: &[f64], bary: &[f64], y: f64) -> Vec<f64> {
    if let Some(j) = x.iter().position(|&xj| xj == y) {
        let mut out = vec![0.0; x.len()];
        out[j] = 1.0;
        return out;
    }
    let terms: Vec<f64> = x.iter().zip(bary).map(|(xj, bj)| bj / (y - xj)).collect();
    let sum: f64 = terms.iter().sum();
    terms.iter().map(|t| t / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_integrate_polynomials_exactly() {
        for n in [1, 2, 5, 16, 32] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            let deg = 2 * n - 1;
            let exact = if deg % 2 == 1 {
                0.0
            } else {
                2.0 / (deg + 1) as f64
            };
            let got: f64 = x
                .iter()
                .zip(&w)
                .map(|(xi, wi)| wi * xi.powi(deg as i32))
                .sum();
            assert!((got - exact).abs() < 1e-13, "n={n}");
            let even = 2 * (n - 1);
            let got: f64 = x
                .iter()
                .zip(&w)
                .map(|(xi, wi)| wi * xi.powi(even as i32))
                .sum();
            assert!((got - 2.0 / (even + 1) as f64).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn nodes_are_sorted_and_symmetric() {
        let (x, _) = gauss_legendre(7);
        assert!(x.windows(2).all(|w| w[0] < w[1]));
        assert!(x
            .iter()
            .zip(x.iter().rev())
            .all(|(a, b)| (a + b).abs() < 1e-15));
    }

    #[test]
    fn composite_rule_integrates_smooth_function() {
        let r = CompositeRule::new(0.0, 2.0, 8, 4);
        assert!((r.integrate(f64::exp) - (2f64.exp() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn integration_matrix_gives_antiderivatives() {
        let m = IntegrationMatrix::new(0.5, 1.5, 10);
        let f: Vec<f64> = m.nodes.iter().map(|x| x.cos()).collect();
        for i in 0..10 {
            let got: f64 = (0..10).map(|j| m.cumulative[(i, j)] * f[j]).sum();
            assert!((got - (m.nodes[i].sin() - 0.5f64.sin())).abs() < 1e-12);
        }
    }
}
