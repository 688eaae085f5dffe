//! L2-regularized binary logistic regression.
//!
//! Minimizes `½‖w‖² + C Σ log(1 + exp(-y (w·x + b)))` with L-BFGS and a
//! backtracking line search. The bias is not regularized.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticConfig {
    /// Inverse regularization strength.
    pub c: f64,
    pub max_iter: usize,
    /// Stop once the gradient norm falls below `tol` times its initial value.
    pub tol: f64,
    pub memory: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            max_iter: 300,
            tol: 1e-6,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Row-major feature matrix.
#[derive(Debug, Clone, Copy)]
pub struct Features<'a> {
    pub data: &'a [f64],
    pub dim: usize,
}

impl<'a> Features<'a> {
    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Objective and gradient at `theta = [w..., b]`.
fn objective(x: Features<'_>, y: &[bool], c: f64, theta: &[f64], grad: &mut [f64]) -> f64 {
    let d = x.dim;
    let (w, b) = (&theta[..d], theta[d]);
    let mut f = 0.5 * dot(w, w);
    grad[..d].copy_from_slice(w);
    grad[d] = 0.0;
    for i in 0..x.rows() {
        let row = x.row(i);
        let sign = if y[i] { 1.0 } else { -1.0 };
        let margin = sign * (dot(w, row) + b);
        f += c * softplus(-margin);
        let g = -c * sign * sigmoid(-margin);
        for (gk, xk) in grad[..d].iter_mut().zip(row) {
            *gk += g * xk;
        }
        grad[d] += g;
    }
    f
}

impl LogisticRegression {
    pub fn fit(x: Features<'_>, y: &[bool], cfg: &LogisticConfig) -> Result<Self> {
        if x.dim == 0 || !x.data.len().is_multiple_of(x.dim) || x.rows() != y.len() {
            return Err(Error::validation("feature matrix does not match the labels"));
        }
        if y.is_empty() {
            return Err(Error::validation("cannot fit a classifier on zero samples"));
        }
        if !(cfg.c > 0.0) {
            return Err(Error::validation("regularization constant C must be positive"));
        }
        let n = x.dim + 1;
        let mut theta = vec![0.0; n];
        let mut grad = vec![0.0; n];
        let mut f = objective(x, y, cfg.c, &theta, &mut grad);
        let g0 = dot(&grad, &grad).sqrt().max(1e-300);
        let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
        let mut new_grad = vec![0.0; n];
        let mut candidate = vec![0.0; n];

        for _ in 0..cfg.max_iter {
            if dot(&grad, &grad).sqrt() <= cfg.tol * g0 {
                break;
            }
            // two-loop recursion
            let mut dir: Vec<f64> = grad.iter().map(|g| -g).collect();
            let mut alphas = Vec::with_capacity(history.len());
            for (s, yv, rho) in history.iter().rev() {
                let a = rho * dot(s, &dir);
                for (d, yk) in dir.iter_mut().zip(yv) {
                    *d -= a * yk;
                }
                alphas.push(a);
            }
            if let Some((s, yv, _)) = history.back() {
                let gamma = dot(s, yv) / dot(yv, yv);
                dir.iter_mut().for_each(|d| *d *= gamma);
            }
            for ((s, yv, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
                let beta = rho * dot(yv, &dir);
                for (d, sk) in dir.iter_mut().zip(s) {
                    *d += (a - beta) * sk;
                }
            }
            let mut slope = dot(&grad, &dir);
            if slope >= 0.0 {
                history.clear();
                dir = grad.iter().map(|g| -g).collect();
                slope = dot(&grad, &dir);
            }

            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..50 {
                for k in 0..n {
                    candidate[k] = theta[k] + step * dir[k];
                }
                let fc = objective(x, y, cfg.c, &candidate, &mut new_grad);
                if fc <= f + 1e-4 * step * slope {
                    let s: Vec<f64> = (0..n).map(|k| candidate[k] - theta[k]).collect();
                    let yv: Vec<f64> = (0..n).map(|k| new_grad[k] - grad[k]).collect();
                    let sy = dot(&s, &yv);
                    if sy > 1e-12 {
                        if history.len() == cfg.memory {
                            history.pop_front();
                        }
                        history.push_back((s, yv, 1.0 / sy));
                    }
                    theta.copy_from_slice(&candidate);
                    grad.copy_from_slice(&new_grad);
                    f = fc;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let bias = theta[x.dim];
        theta.truncate(x.dim);
        Ok(Self { weights: theta, bias })
    }

    pub fn decision(&self, row: &[f64]) -> f64 {
        dot(&self.weights, row) + self.bias
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        sigmoid(self.decision(row))
    }
}
