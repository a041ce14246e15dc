//! L2-regularised logistic regression on standardised features.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{math, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub max_iter: usize,
    /// Stop once the gradient norm falls below this.
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            l2: 1e-3,
            max_iter: 5000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    pub means: Vec<f64>,
    /// Zero marks a constant training column, which gets weight 0.
    pub scales: Vec<f64>,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl Logistic {
    fn standardise<'a>(&'a self, x: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        x.iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(v, (m, s))| if *s == 0.0 { 0.0 } else { (v - m) / s })
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let z: f64 = self.standardise(x).zip(&self.weights).map(|(v, w)| v * w).sum::<f64>() + self.intercept;
        math::logistic(z)
    }
}

pub fn train_logistic(x: &[Vec<f64>], y: &[bool], config: &LogisticConfig) -> Result<Logistic> {
    let n = x.len() as f64;
    let p = x.first().map_or(0, Vec::len);
    let mut means = vec![0.0; p];
    let mut scales = vec![0.0; p];
    for j in 0..p {
        let col: Vec<f64> = x.iter().map(|r| r[j]).collect();
        let m = math::mean(&col);
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        means[j] = m;
        scales[j] = if var > 1e-24 { math::sqrt(var) } else { 0.0 };
    }
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|r| {
            r.iter()
                .zip(means.iter().zip(&scales))
                .map(|(v, (m, s))| if *s == 0.0 { 0.0 } else { (v - m) / s })
                .collect()
        })
        .collect();
    let base = y.iter().filter(|&&l| l).count() as f64 / n;
    let mut model = Logistic {
        means,
        scales,
        weights: vec![0.0; p],
        intercept: math::logit(base),
    };
    let mut grad = vec![0.0; p];
    for _ in 0..config.max_iter {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (row, &label) in z.iter().zip(y) {
            let pred = math::logistic(math::dot(row, &model.weights) + model.intercept);
            let err = pred - f64::from(u8::from(label));
            grad_b += err;
            for (g, v) in grad.iter_mut().zip(row) {
                *g += err * v;
            }
        }
        grad_b /= n;
        for (j, g) in grad.iter_mut().enumerate() {
            *g = if model.scales[j] == 0.0 {
                0.0
            } else {
                *g / n + config.l2 * model.weights[j]
            };
        }
        let norm = math::sqrt(grad_b * grad_b + math::dot(&grad, &grad));
        if norm < config.tol {
            break;
        }
        model.intercept -= config.learning_rate * grad_b;
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= config.learning_rate * g;
        }
    }
    Ok(model)
}
