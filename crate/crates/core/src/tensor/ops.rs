use super::Tensor;
use crate::error::{Error, Result};

/// `max(x, alpha x)` element-wise (for `0 <= alpha <= 1`).
pub fn leaky_relu(x: &Tensor, alpha: f64) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { alpha * v })
}

/// Gradient through [`leaky_relu`] given the pre-activation. The slope at
/// exactly zero is taken as `alpha`.
pub fn leaky_relu_backward(pre: &Tensor, grad: &Tensor, alpha: f64) -> Tensor {
    assert_eq!(pre.shape(), grad.shape());
    let data = pre
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&p, &g)| if p > 0.0 { g } else { alpha * g })
        .collect();
    Tensor::from_vec(pre.rows(), pre.cols(), data).expect("shape preserved")
}

/// `X W + b`, with `b` a `1 x out` row broadcast over rows.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if b.shape() != (1, w.cols()) {
        return Err(Error::dims(format!("bias 1x{}", w.cols()), format!("{}x{}", b.rows(), b.cols())));
    }
    let mut y = x.matmul(w)?;
    for r in 0..y.rows() {
        for (v, bias) in y.row_mut(r).iter_mut().zip(b.data()) {
            *v += bias;
        }
    }
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub x: Tensor,
    pub w: Tensor,
    pub b: Tensor,
}

pub fn dense_backward(x: &Tensor, w: &Tensor, grad: &Tensor) -> Result<DenseGrads> {
    Ok(DenseGrads {
        x: grad.matmul_nt(w)?,
        w: x.matmul_tn(grad)?,
        b: grad.column_sums(),
    })
}

/// Mean over all elements of the squared difference.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::dims(format!("{:?}", target.shape()), format!("{:?}", pred.shape())));
    }
    let n = pred.len().max(1) as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

pub fn mse_loss_backward(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    if pred.shape() != target.shape() {
        return Err(Error::dims(format!("{:?}", target.shape()), format!("{:?}", pred.shape())));
    }
    let scale = 2.0 / pred.len().max(1) as f64;
    let data = pred.data().iter().zip(target.data()).map(|(p, t)| scale * (p - t)).collect();
    Tensor::from_vec(pred.rows(), pred.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Central differences of a scalar function of one tensor.
    fn numeric_grad(x: &Tensor, f: impl Fn(&Tensor) -> f64) -> Tensor {
        let h = 1e-6;
        let mut g = Tensor::zeros(x.rows(), x.cols());
        for i in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[i] += h;
            let mut minus = x.clone();
            minus.data_mut()[i] -= h;
            g.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        g
    }

    fn assert_rel(analytic: &Tensor, numeric: &Tensor, tol: f64) {
        for (a, n) in analytic.data().iter().zip(numeric.data()) {
            let scale = a.abs().max(n.abs());
            if scale > 1e-8 {
                assert!((a - n).abs() / scale < tol, "analytic {a} numeric {n}");
            }
        }
    }

    #[test]
    fn leaky_relu_values() {
        let x = Tensor::from_rows(&[[2.0, -2.0, 0.0]]);
        assert_eq!(leaky_relu(&x, 0.2).data(), &[2.0, -0.4, 0.0]);
        assert_eq!(leaky_relu(&x, 1.0), x);
        let g = Tensor::from_rows(&[[1.0, 1.0, 1.0]]);
        assert_eq!(leaky_relu_backward(&x, &g, 0.2).data(), &[1.0, 0.2, 0.2]);
    }

    #[test]
    fn leaky_relu_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(6, 5, &mut rng);
        let w = random(6, 5, &mut rng);
        let loss = |x: &Tensor| leaky_relu(x, 0.2).data().iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>();
        let analytic = leaky_relu_backward(&x, &w, 0.2);
        assert_rel(&analytic, &numeric_grad(&x, loss), 1e-6);
    }

    #[test]
    fn dense_examples() {
        let x = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let y = dense_forward(&x, &Tensor::identity(2), &Tensor::zeros(1, 2)).unwrap();
        assert_eq!(y, x);
        let y = dense_forward(
            &Tensor::from_rows(&[[3.0]]),
            &Tensor::from_rows(&[[2.0]]),
            &Tensor::from_rows(&[[1.0]]),
        )
        .unwrap();
        assert_eq!(y.data(), &[7.0]);
        assert!(dense_forward(&x, &Tensor::identity(2), &Tensor::zeros(1, 3)).is_err());
        assert!(dense_forward(&x, &Tensor::identity(3), &Tensor::zeros(1, 3)).is_err());
    }

    #[test]
    fn dense_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(4, 3, &mut rng);
        let w = random(3, 2, &mut rng);
        let b = random(1, 2, &mut rng);
        let t = random(4, 2, &mut rng);
        let loss = |x: &Tensor, w: &Tensor, b: &Tensor| mse_loss(&dense_forward(x, w, b).unwrap(), &t).unwrap();
        let y = dense_forward(&x, &w, &b).unwrap();
        let g = dense_backward(&x, &w, &mse_loss_backward(&y, &t).unwrap()).unwrap();
        assert_rel(&g.x, &numeric_grad(&x, |x| loss(x, &w, &b)), 1e-5);
        assert_rel(&g.w, &numeric_grad(&w, |w| loss(&x, w, &b)), 1e-5);
        assert_rel(&g.b, &numeric_grad(&b, |b| loss(&x, &w, b)), 1e-5);
    }

    #[test]
    fn mse_examples() {
        let p = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(mse_loss(&p, &p).unwrap(), 0.0);
        let t = p.map(|v| v - 1.0);
        assert_eq!(mse_loss(&p, &t).unwrap(), 1.0);
        assert!(mse_loss(&p, &Tensor::zeros(1, 4)).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random(3, 4, &mut rng);
        let t = random(3, 4, &mut rng);
        assert_rel(
            &mse_loss_backward(&p, &t).unwrap(),
            &numeric_grad(&p, |p| mse_loss(p, &t).unwrap()),
            1e-6,
        );
    }
}
