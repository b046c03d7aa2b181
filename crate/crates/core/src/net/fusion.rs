//! Additive attention over the two branch outputs:
//! `s_b = vᵀ tanh(P_b h_b)`, `α = softmax(s_deep, s_shallow)`,
//! `fused = α_deep h_deep + α_shallow h_shallow`.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionFusion {
    /// Scoring vector `v`.
    pub score: Array1<f64>,
    pub proj_deep: Array2<f64>,
    pub proj_shallow: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct FusionCache {
    pub u_deep: Array2<f64>,
    pub u_shallow: Array2<f64>,
    /// B × 2, columns (deep, shallow); each row sums to one.
    pub weights: Array2<f64>,
}

impl AttentionFusion {
    pub fn init(width: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut small = || rng.random_range(-INIT_SCALE..INIT_SCALE);
        AttentionFusion {
            score: Array1::from_shape_simple_fn(width, &mut small),
            proj_deep: Array2::from_shape_simple_fn((width, width), &mut small),
            proj_shallow: Array2::from_shape_simple_fn((width, width), &mut small),
        }
    }

    pub fn zeros(width: usize) -> Self {
        AttentionFusion {
            score: Array1::zeros(width),
            proj_deep: Array2::zeros((width, width)),
            proj_shallow: Array2::zeros((width, width)),
        }
    }

    pub fn forward(
        &self,
        h_deep: &Array2<f64>,
        h_shallow: &Array2<f64>,
    ) -> (Array2<f64>, FusionCache) {
        let u_deep = h_deep.dot(&self.proj_deep.t()).mapv_into(f64::tanh);
        let u_shallow = h_shallow.dot(&self.proj_shallow.t()).mapv_into(f64::tanh);
        let s_deep = u_deep.dot(&self.score);
        let s_shallow = u_shallow.dot(&self.score);

        let mut weights = Array2::zeros((h_deep.nrows(), 2));
        Zip::from(weights.rows_mut())
            .and(&s_deep)
            .and(&s_shallow)
            .for_each(|mut w, &a, &b| {
                let m = a.max(b);
                let (ea, eb) = ((a - m).exp(), (b - m).exp());
                w[0] = ea / (ea + eb);
                w[1] = eb / (ea + eb);
            });

        let fused = h_deep * &weights.column(0).insert_axis(Axis(1))
            + h_shallow * &weights.column(1).insert_axis(Axis(1));
        (
            fused,
            FusionCache {
                u_deep,
                u_shallow,
                weights,
            },
        )
    }

    /// Accumulates into `grad`; returns gradients for (h_deep, h_shallow).
    pub fn backward(
        &self,
        h_deep: &Array2<f64>,
        h_shallow: &Array2<f64>,
        cache: &FusionCache,
        d_fused: &Array2<f64>,
        grad: &mut AttentionFusion,
    ) -> (Array2<f64>, Array2<f64>) {
        let a_deep = cache.weights.column(0).insert_axis(Axis(1));
        let a_shallow = cache.weights.column(1).insert_axis(Axis(1));
        let mut dh_deep = d_fused * &a_deep;
        let mut dh_shallow = d_fused * &a_shallow;

        // ∂L/∂α, then through the two-way softmax
        let da_deep = (d_fused * h_deep).sum_axis(Axis(1));
        let da_shallow = (d_fused * h_shallow).sum_axis(Axis(1));
        let mut ds_deep = Array1::zeros(h_deep.nrows());
        let mut ds_shallow = Array1::zeros(h_deep.nrows());
        Zip::from(&mut ds_deep)
            .and(&mut ds_shallow)
            .and(cache.weights.rows())
            .and(&da_deep)
            .and(&da_shallow)
            .for_each(|sd, ss, w, &gd, &gs| {
                let mean = w[0] * gd + w[1] * gs;
                *sd = w[0] * (gd - mean);
                *ss = w[1] * (gs - mean);
            });

        for (ds, u, h, proj, dproj, dh) in [
            (
                &ds_deep,
                &cache.u_deep,
                h_deep,
                &self.proj_deep,
                &mut grad.proj_deep,
                &mut dh_deep,
            ),
            (
                &ds_shallow,
                &cache.u_shallow,
                h_shallow,
                &self.proj_shallow,
                &mut grad.proj_shallow,
                &mut dh_shallow,
            ),
        ] {
            grad.score += &u.t().dot(ds);
            let du = ds.clone().insert_axis(Axis(1)) * &self.score;
            let dq = du * &u.mapv(|v| 1.0 - v * v);
            *dproj += &dq.t().dot(h);
            *dh += &dq.dot(proj);
        }
        (dh_deep, dh_shallow)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn weights_form_a_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = AttentionFusion::init(5, &mut rng);
        let hd = Array2::from_shape_simple_fn((4, 5), || rng.random_range(-3.0..3.0));
        let hs = Array2::from_shape_simple_fn((4, 5), || rng.random_range(-3.0..3.0));
        let (_, cache) = f.forward(&hd, &hs);
        for w in cache.weights.rows() {
            assert!(w[0] > 0.0 && w[0] < 1.0 && w[1] > 0.0 && w[1] < 1.0);
            assert!((w[0] + w[1] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_branches_pass_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut f = AttentionFusion::init(6, &mut rng);
        let h = Array2::from_shape_simple_fn((3, 6), || rng.random_range(-1.0..1.0));
        let (fused, _) = f.forward(&h, &h);
        assert!((&fused - &h).iter().all(|d| d.abs() < 1e-14));

        // equal projections too: the scoring vector receives no gradient
        f.proj_shallow = f.proj_deep.clone();
        let (_, cache) = f.forward(&h, &h);
        let d_fused = Array2::from_shape_simple_fn((3, 6), || rng.random_range(-1.0..1.0));
        let mut grad = AttentionFusion::zeros(6);
        f.backward(&h, &h, &cache, &d_fused, &mut grad);
        assert!(grad.score.iter().all(|g| g.abs() < 1e-15));
        assert!(grad.proj_deep.iter().all(|g| g.abs() < 1e-15));
    }
}
