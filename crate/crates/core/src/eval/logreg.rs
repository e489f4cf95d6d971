//! Multinomial logistic regression with an L2 penalty on the weights,
//! fitted by L-BFGS.
//!
//! Objective: `Σ_i [logsumexp(z_i) − z_{i,y_i}] + (λ/2) ‖W‖²` with
//! `z_i = W x_i + b`. Intercepts are not penalized.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};
use crate::linalg::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub l2: f64,
    /// Stop once the gradient's L2 norm falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            l2: 1.0,
            tol: 1e-6,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    /// `classes × d`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

struct Problem<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    classes: usize,
    l2: f64,
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        self.classes * (self.x.cols() + 1)
    }

    /// Objective value and gradient at `theta = [W row-major, b]`.
    fn eval(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let (c, d) = (self.classes, self.x.cols());
        let (w, b) = theta.split_at(c * d);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut f = 0.0;
        let mut z = vec![0.0; c];
        for (row, &yi) in self.x.row_iter().zip(self.y) {
            for k in 0..c {
                z[k] = dot(&w[k * d..(k + 1) * d], row) + b[k];
            }
            let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = zmax + z.iter().map(|v| (v - zmax).exp()).sum::<f64>().ln();
            f += lse - z[yi];
            for k in 0..c {
                let resid = (z[k] - lse).exp() - if k == yi { 1.0 } else { 0.0 };
                grad[k * d..(k + 1) * d]
                    .iter_mut()
                    .zip(row)
                    .for_each(|(g, v)| *g += resid * v);
                grad[c * d + k] += resid;
            }
        }
        for (g, wv) in grad[..c * d].iter_mut().zip(w) {
            *g += self.l2 * wv;
        }
        f + 0.5 * self.l2 * dot(w, w)
    }
}

const HISTORY: usize = 10;

impl LogisticModel {
    /// Fits on rows of `x` with class ids `y` in `0..classes`.
    pub fn fit(x: &Matrix, y: &[usize], classes: usize, cfg: &LogRegConfig) -> Result<Self> {
        if x.rows() != y.len() {
            return shape_err(format!("{} rows but {} labels", x.rows(), y.len()));
        }
        if classes < 2 {
            return invalid("need at least two classes");
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= classes) {
            return invalid(format!("label {bad} outside 0..{classes}"));
        }
        if !(cfg.l2 > 0.0) {
            return invalid("l2 weight must be positive");
        }
        let prob = Problem {
            x,
            y,
            classes,
            l2: cfg.l2,
        };
        let n = prob.dim();
        let mut theta = vec![0.0; n];
        let mut grad = vec![0.0; n];
        let mut f = prob.eval(&theta, &mut grad);
        let mut s_hist: Vec<Vec<f64>> = Vec::new();
        let mut y_hist: Vec<Vec<f64>> = Vec::new();
        let mut iterations = 0;
        let mut gnorm = dot(&grad, &grad).sqrt();
        let mut trial = vec![0.0; n];
        let mut trial_grad = vec![0.0; n];

        while gnorm >= cfg.tol && iterations < cfg.max_iter {
            iterations += 1;
            let mut dir = two_loop(&grad, &s_hist, &y_hist);
            let mut slope = dot(&grad, &dir);
            if slope >= 0.0 {
                s_hist.clear();
                y_hist.clear();
                dir = grad.iter().map(|g| -g).collect();
                slope = -gnorm * gnorm;
            }
            let mut step = if s_hist.is_empty() {
                (1.0 / gnorm).min(1.0)
            } else {
                1.0
            };
            let mut accepted = false;
            for _ in 0..60 {
                trial
                    .iter_mut()
                    .zip(&theta)
                    .zip(&dir)
                    .for_each(|((t, th), d)| *t = th + step * d);
                let ft = prob.eval(&trial, &mut trial_grad);
                if ft <= f + 1e-4 * step * slope {
                    let s: Vec<f64> = dir.iter().map(|d| step * d).collect();
                    let yv: Vec<f64> = trial_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
                    if dot(&s, &yv) > 1e-12 {
                        if s_hist.len() == HISTORY {
                            s_hist.remove(0);
                            y_hist.remove(0);
                        }
                        s_hist.push(s);
                        y_hist.push(yv);
                    }
                    std::mem::swap(&mut theta, &mut trial);
                    std::mem::swap(&mut grad, &mut trial_grad);
                    f = ft;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            gnorm = dot(&grad, &grad).sqrt();
            if !accepted {
                // No decrease representable in floating point: at the optimum.
                break;
            }
        }

        let d = x.cols();
        let weights = Matrix::from_parts(classes, d, theta[..classes * d].to_vec());
        Ok(LogisticModel {
            weights,
            bias: theta[classes * d..].to_vec(),
            iterations,
            converged: gnorm < cfg.tol,
            grad_norm: gnorm,
        })
    }

    /// Class scores `W x + b` for each row.
    pub fn decision(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.weights.cols() {
            return shape_err(format!(
                "model expects dimension {}, got {}",
                self.weights.cols(),
                x.cols()
            ));
        }
        let mut scores = crate::linalg::matmul_nt(x, &self.weights)?;
        for i in 0..scores.rows() {
            scores
                .row_mut(i)
                .iter_mut()
                .zip(&self.bias)
                .for_each(|(s, b)| *s += b);
        }
        Ok(scores)
    }

    /// Highest-scoring class per row, lowest id on ties.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let scores = self.decision(x)?;
        Ok(scores
            .row_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect())
    }
}

fn two_loop(grad: &[f64], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>]) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alpha = vec![0.0; s_hist.len()];
    for i in (0..s_hist.len()).rev() {
        let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
        alpha[i] = rho * dot(&s_hist[i], &q);
        q.iter_mut().zip(&y_hist[i]).for_each(|(qv, yv)| *qv -= alpha[i] * yv);
    }
    if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for i in 0..s_hist.len() {
        let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
        let beta = rho * dot(&y_hist[i], &q);
        q.iter_mut().zip(&s_hist[i]).for_each(|(qv, sv)| *qv += (alpha[i] - beta) * sv);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}
