use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Fully connected layer, `y = x Wᵀ + b` with `W` stored out × in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    /// He-style fan-in uniform weights, zero bias.
    pub fn init(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / inputs as f64).sqrt();
        Dense {
            weight: Array2::from_shape_simple_fn((outputs, inputs), || {
                rng.random_range(-limit..limit)
            }),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    /// Accumulates parameter gradients into `grad` and returns `∂L/∂x`.
    pub fn backward(&self, x: &Array2<f64>, dz: &Array2<f64>, grad: &mut Dense) -> Array2<f64> {
        grad.weight += &dz.t().dot(x);
        grad.bias += &dz.sum_axis(Axis(0));
        dz.dot(&self.weight)
    }
}

/// Trainable part of a batch-normalization layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gain: Array1<f64>,
    pub shift: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

impl RunningStats {
    pub fn new(width: usize) -> Self {
        RunningStats {
            mean: Array1::zeros(width),
            var: Array1::ones(width),
        }
    }

    /// `running = momentum · running + (1 − momentum) · batch`
    pub fn update(&mut self, cache: &BnCache, momentum: f64) {
        self.mean.zip_mut_with(&cache.batch_mean, |r, b| {
            *r = momentum * *r + (1.0 - momentum) * b
        });
        self.var.zip_mut_with(&cache.batch_var, |r, b| {
            *r = momentum * *r + (1.0 - momentum) * b
        });
    }
}

#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub batch_mean: Array1<f64>,
    /// Population variance of the batch.
    pub batch_var: Array1<f64>,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        BatchNorm {
            gain: Array1::ones(width),
            shift: Array1::zeros(width),
        }
    }

    pub fn zeros(width: usize) -> Self {
        BatchNorm {
            gain: Array1::zeros(width),
            shift: Array1::zeros(width),
        }
    }

    /// Normalizes with the batch's own statistics.
    pub fn forward_train(&self, z: &Array2<f64>, eps: f64) -> (Array2<f64>, BnCache) {
        let n = z.nrows() as f64;
        let mean = z.sum_axis(Axis(0)) / n;
        let centered = z - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let xhat = centered * &inv_std;
        let y = &xhat * &self.gain + &self.shift;
        (
            y,
            BnCache {
                xhat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
            },
        )
    }

    /// Normalizes with running statistics; rows are independent.
    pub fn forward_infer(&self, z: &Array2<f64>, stats: &RunningStats, eps: f64) -> Array2<f64> {
        let inv_std = stats.var.mapv(|v| 1.0 / (v + eps).sqrt());
        (z - &stats.mean) * &inv_std * &self.gain + &self.shift
    }

    /// Gradient through the batch statistics of a train-mode forward.
    pub fn backward(&self, cache: &BnCache, dy: &Array2<f64>, grad: &mut BatchNorm) -> Array2<f64> {
        let n = dy.nrows() as f64;
        grad.gain += &(dy * &cache.xhat).sum_axis(Axis(0));
        grad.shift += &dy.sum_axis(Axis(0));
        let dxhat = dy * &self.gain;
        let sum_dxhat = dxhat.sum_axis(Axis(0));
        let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
        let inner = dxhat * n - &sum_dxhat - &cache.xhat * &sum_dxhat_xhat;
        inner * &(&cache.inv_std / n)
    }
}

pub fn relu(x: Array2<f64>) -> Array2<f64> {
    x.mapv_into(|v| v.max(0.0))
}

/// Zeroes `grad` wherever the activation output was not positive.
pub fn relu_backward(activated: &Array2<f64>, grad: &Array2<f64>) -> Array2<f64> {
    let mut out = grad.clone();
    out.zip_mut_with(activated, |g, a| {
        if *a <= 0.0 {
            *g = 0.0
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn batch_norm_standardizes() {
        let bn = BatchNorm::new(2);
        let z = array![[1.0, 10.0], [3.0, 10.0], [5.0, 10.0]];
        let (y, cache) = bn.forward_train(&z, 1e-5);
        assert!((cache.batch_mean[0] - 3.0).abs() < 1e-15);
        assert!((cache.batch_var[0] - 8.0 / 3.0).abs() < 1e-12);
        assert!(y.column(0).sum().abs() < 1e-12);
        // constant column normalizes to zero instead of blowing up
        assert!(y.column(1).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn infer_mode_uses_running_stats() {
        let bn = BatchNorm::new(1);
        let stats = RunningStats {
            mean: array![2.0],
            var: array![4.0],
        };
        let y = bn.forward_infer(&array![[4.0]], &stats, 0.0);
        assert_eq!(y[[0, 0]], 1.0);
    }

    #[test]
    fn running_stats_momentum() {
        let mut stats = RunningStats::new(1);
        let cache = BnCache {
            xhat: Array2::zeros((1, 1)),
            inv_std: array![1.0],
            batch_mean: array![10.0],
            batch_var: array![3.0],
        };
        stats.update(&cache, 0.9);
        assert!((stats.mean[0] - 1.0).abs() < 1e-12);
        assert!((stats.var[0] - 1.2).abs() < 1e-12);
    }
}
