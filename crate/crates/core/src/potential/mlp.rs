//! Small fully-connected networks with cached forward passes and an
//! input-gradient backward pass (no weight gradients; there is no training
//! here).

use crate::error::Result;
use crate::scalar::Real;
use crate::tsgemm::{gemm_fp16_acc, gemm_nn_acc, prepack_transpose, Matrix};

/// One dense layer; the transpose of the weights is packed once at
/// construction so the backward pass runs as an NN product.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub w: Matrix<T>,
    pub b: Vec<T>,
    pub wt: Matrix<T>,
}

impl<T: Real> Dense<T> {
    pub fn new(w: Matrix<T>, b: Vec<T>) -> Result<Self> {
        if b.len() != w.cols() {
            return Err(crate::Error::Dimension(format!(
                "bias length {} vs {} output columns",
                b.len(),
                w.cols()
            )));
        }
        let wt = prepack_transpose(&w);
        Ok(Dense { w, b, wt })
    }

    pub fn in_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.cols()
    }
}

/// Multi-layer perceptron with tanh hidden activations. When
/// `linear_output` is set the last layer is affine (the fitting net's scalar
/// energy head); otherwise every layer is activated (the embedding net).
#[derive(Debug, Clone)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
    pub linear_output: bool,
}

/// Post-activation outputs of every layer, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    pub outputs: Vec<Matrix<T>>,
}

impl<T: Real> Mlp<T> {
    pub fn new(layers: Vec<Dense<T>>, linear_output: bool) -> Self {
        Mlp {
            layers,
            linear_output,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, Dense::in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::out_dim)
    }

    /// Forward pass over a batch of input rows. `fp16_first` routes the
    /// first layer's product through binary16-quantized storage.
    pub fn forward(&self, x: &Matrix<T>, fp16_first: bool) -> Result<MlpCache<T>> {
        let mut cur = x.clone();
        let mut outputs = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let mut y = Matrix::zeros(cur.rows(), layer.out_dim());
            if fp16_first && li == 0 {
                gemm_fp16_acc(&cur, &layer.w, &mut y)?;
            } else {
                gemm_nn_acc(&cur, &layer.w, &mut y)?;
            }
            let activate = !(self.linear_output && li + 1 == self.layers.len());
            for r in 0..y.rows() {
                let row = y.row_mut(r);
                for (c, v) in row.iter_mut().enumerate() {
                    *v += layer.b[c];
                    if activate {
                        *v = v.tanh();
                    }
                }
            }
            cur = y.clone();
            outputs.push(y);
        }
        Ok(MlpCache { outputs })
    }

    pub fn output<'a>(&self, cache: &'a MlpCache<T>) -> &'a Matrix<T> {
        cache.outputs.last().expect("forward ran")
    }

    /// Gradient of a scalar objective with respect to the input rows, given
    /// its gradient with respect to the output rows.
    pub fn backward(
        &self,
        cache: &MlpCache<T>,
        dout: &Matrix<T>,
        fp16_first: bool,
    ) -> Result<Matrix<T>> {
        let mut delta = dout.clone();
        for li in (0..self.layers.len()).rev() {
            let activated = !(self.linear_output && li + 1 == self.layers.len());
            if activated {
                let y = &cache.outputs[li];
                for r in 0..delta.rows() {
                    for c in 0..delta.cols() {
                        let t = y.get(r, c);
                        delta.set(r, c, delta.get(r, c) * (T::one() - t * t));
                    }
                }
            }
            let mut dx = Matrix::zeros(delta.rows(), self.layers[li].in_dim());
            if fp16_first && li == 0 {
                gemm_fp16_acc(&delta, &self.layers[li].wt, &mut dx)?;
            } else {
                gemm_nn_acc(&delta, &self.layers[li].wt, &mut dx)?;
            }
            delta = dx;
        }
        Ok(delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_mlp(rng: &mut StdRng, dims: &[usize], linear_output: bool) -> Mlp<f64> {
        let layers = dims
            .windows(2)
            .map(|w| {
                let scale = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let data = (0..w[0] * w[1])
                    .map(|_| rng.random_range(-scale..scale))
                    .collect();
                let wmat = Matrix::from_vec(w[0], w[1], data).unwrap();
                let b = (0..w[1]).map(|_| rng.random_range(-0.1..0.1)).collect();
                Dense::new(wmat, b).unwrap()
            })
            .collect();
        Mlp::new(layers, linear_output)
    }

    #[test]
    fn deterministic_and_rowwise() {
        let mut rng = StdRng::seed_from_u64(5);
        let mlp = random_mlp(&mut rng, &[1, 8, 16, 16], false);
        let x = Matrix::from_rows(&[vec![0.0], vec![0.7], vec![0.7]]).unwrap();
        let cache = mlp.forward(&x, false).unwrap();
        let g = mlp.output(&cache);
        // equal inputs give bitwise-equal rows
        assert_eq!(g.row(1), g.row(2));
        // the zero row is MLP(0), reproducible
        let cache2 = mlp.forward(&x, false).unwrap();
        assert_eq!(mlp.output(&cache2).row(0), g.row(0));
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(9);
        let mlp = random_mlp(&mut rng, &[1, 8, 16, 16], false);
        let s0 = 0.43;
        let h = 1e-5;

        for out_idx in [0usize, 5, 15] {
            let mut dout = Matrix::zeros(1, 16);
            dout.set(0, out_idx, 1.0);
            let x = Matrix::from_rows(&[vec![s0]]).unwrap();
            let cache = mlp.forward(&x, false).unwrap();
            let analytic = mlp.backward(&cache, &dout, false).unwrap().get(0, 0);

            let eval = |s: f64| {
                let x = Matrix::from_rows(&[vec![s]]).unwrap();
                let c = mlp.forward(&x, false).unwrap();
                mlp.output(&c).get(0, out_idx)
            };
            let fd = (eval(s0 + h) - eval(s0 - h)) / (2.0 * h);
            let rel = (analytic - fd).abs() / fd.abs().max(1e-12);
            assert!(rel < 1e-6, "output {out_idx}: analytic {analytic} fd {fd}");
        }
    }

    #[test]
    fn linear_output_head_skips_activation() {
        let w = Matrix::from_rows(&[vec![2.0]]).unwrap();
        let head = Mlp::new(vec![Dense::new(w, vec![10.0]).unwrap()], true);
        let x = Matrix::from_rows(&[vec![3.0]]).unwrap();
        let cache = head.forward(&x, false).unwrap();
        assert_eq!(head.output(&cache).get(0, 0), 16.0);
    }
}
