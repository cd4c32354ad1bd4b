use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{sigmoid, softplus, LogisticParams, Matrix};

const HISTORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;

/// L2-regularised logistic regression fitted with L-BFGS.
///
/// Objective: mean logistic loss + `l2 / 2 * ||w||^2`; the bias is not penalised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticRegression {
    /// Returns the model and the objective value at the start and after each iteration.
    pub fn fit(x: &Matrix, y: &[u8], p: &LogisticParams) -> (Self, Vec<f64>) {
        let d = x.cols();
        // Parameters are packed as [w_0..w_{d-1}, bias].
        let mut theta = vec![0.0; d + 1];
        let (mut loss, mut grad) = objective(x, y, &theta, p.l2);
        let mut history = vec![loss];
        let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();

        for _ in 0..p.max_iter {
            if norm(&grad) <= p.tolerance {
                break;
            }
            let mut dir = two_loop(&grad, &memory);
            let mut slope = dot(&grad, &dir);
            if slope >= 0.0 {
                memory.clear();
                dir = grad.iter().map(|g| -g).collect();
                slope = -dot(&grad, &grad);
            }
            let mut step = 1.0;
            let accepted = loop {
                let trial: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
                let (l, g) = objective(x, y, &trial, p.l2);
                if l <= loss + ARMIJO_C1 * step * slope {
                    break Some((trial, l, g));
                }
                step *= 0.5;
                if step < 1e-20 {
                    break None;
                }
            };
            let Some((next, next_loss, next_grad)) = accepted else {
                break;
            };
            let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
            let yv: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &yv);
            if sy > 1e-12 {
                if memory.len() == HISTORY {
                    memory.pop_front();
                }
                memory.push_back((s, yv, 1.0 / sy));
            }
            theta = next;
            loss = next_loss;
            grad = next_grad;
            history.push(loss);
        }
        let bias = theta.pop().unwrap_or(0.0);
        (Self { weights: theta, bias }, history)
    }

    pub fn score(&self, row: &[f64]) -> f64 {
        sigmoid(dot(&self.weights, row) + self.bias)
    }
}

fn objective(x: &Matrix, y: &[u8], theta: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let d = x.cols();
    let n = x.rows() as f64;
    let (w, b) = theta.split_at(d);
    let mut loss = 0.0;
    let mut grad = vec![0.0; d + 1];
    for (i, &yi) in y.iter().enumerate().take(x.rows()) {
        let row = x.row(i);
        let z = dot(w, row) + b[0];
        let label = f64::from(yi);
        loss += if yi == 1 { softplus(-z) } else { softplus(z) };
        let r = sigmoid(z) - label;
        for (g, v) in grad.iter_mut().zip(row) {
            *g += r * v;
        }
        grad[d] += r;
    }
    loss /= n;
    for g in &mut grad {
        *g /= n;
    }
    loss += 0.5 * l2 * dot(w, w);
    for (g, wj) in grad.iter_mut().zip(w) {
        *g += l2 * wj;
    }
    (loss, grad)
}

fn two_loop(grad: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = memory.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in &mut q {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
