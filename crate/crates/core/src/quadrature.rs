//! Gauss rules from the Golub–Welsch eigenproblem, normalized as probability
//! measures: Hermite for `N(0,1)`, Legendre for `U[−1,1]`.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of an `n`-point rule; the weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn golub_welsch(n: usize, off_diag: impl Fn(usize) -> f64) -> Rule {
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = off_diag(k);
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n).map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1 / total).collect(),
    }
}

/// Probabilists' Gauss–Hermite rule: `Σ w_i f(x_i) ≈ E f(Z)`, `Z ~ N(0,1)`.
pub fn gauss_hermite(n: usize) -> Rule {
    golub_welsch(n, |k| (k as f64).sqrt())
}

/// Gauss–Legendre rule for the uniform law on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> Rule {
    golub_welsch(n, |k| {
        let k = k as f64;
        k / (4.0 * k * k - 1.0).sqrt()
    })
}
