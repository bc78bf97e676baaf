//! Layer kernels with their backward passes. Parameters live in the model's
//! flat parameter list; layers hold indices into it.

use crate::error::Result;
use crate::tensor::{
    dense_backward, dense_forward, leaky_relu, leaky_relu_backward, spmm, spmm_backward, SparseMatrix, Tensor,
};

/// Propagation operators of a batch.
pub struct Graph<'a> {
    /// Self-loop normalized adjacency.
    pub a_hat: &'a SparseMatrix,
    /// Plain normalized adjacency.
    pub a_tilde: &'a SparseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// `X W + b`, optionally followed by the activation.
    Dense { w: usize, b: usize, act: bool },
    /// `σ(Â X W)`.
    Gcn { w: usize },
    /// Parallel recursive stacks `[W0, V0, W, V]`, averaged.
    Arma { stacks: Vec<[usize; 4]>, iterations: usize },
}

pub enum Cache {
    Dense {
        x: Tensor,
        z: Tensor,
    },
    Gcn {
        ax: Tensor,
        z: Tensor,
    },
    Arma {
        x: Tensor,
        ax: Tensor,
        stacks: Vec<StackCache>,
    },
}

pub struct StackCache {
    /// `Ã X̄(t-1)` for t = 2..T.
    propagated: Vec<Tensor>,
    /// Pre-activations for t = 1..T.
    z: Vec<Tensor>,
}

fn act(z: &Tensor, alpha: f64) -> Tensor {
    leaky_relu(z, alpha)
}

impl Layer {
    pub fn forward(&self, params: &[Tensor], x: &Tensor, graph: &Graph, alpha: f64) -> Result<(Tensor, Cache)> {
        match self {
            Layer::Dense { w, b, act: on } => {
                let z = dense_forward(x, &params[*w], &params[*b])?;
                let y = if *on { act(&z, alpha) } else { z.clone() };
                Ok((y, Cache::Dense { x: x.clone(), z }))
            }
            Layer::Gcn { w } => {
                let ax = spmm(graph.a_hat, x)?;
                let z = ax.matmul(&params[*w])?;
                Ok((act(&z, alpha), Cache::Gcn { ax, z }))
            }
            Layer::Arma { stacks, iterations } => {
                let ax = spmm(graph.a_tilde, x)?;
                let mut out: Option<Tensor> = None;
                let mut caches = Vec::with_capacity(stacks.len());
                for &[w0, v0, w, v] in stacks {
                    let mut z1 = ax.matmul(&params[w0])?;
                    z1.add_assign(&x.matmul(&params[v0])?);
                    let mut h = act(&z1, alpha);
                    let mut cache = StackCache {
                        propagated: Vec::with_capacity(iterations.saturating_sub(1)),
                        z: vec![z1],
                    };
                    if *iterations > 1 {
                        let xv = x.matmul(&params[v])?;
                        for _ in 1..*iterations {
                            let ah = spmm(graph.a_tilde, &h)?;
                            let mut z = ah.matmul(&params[w])?;
                            z.add_assign(&xv);
                            h = act(&z, alpha);
                            cache.propagated.push(ah);
                            cache.z.push(z);
                        }
                    }
                    match &mut out {
                        Some(acc) => acc.add_assign(&h),
                        None => out = Some(h),
                    }
                    caches.push(cache);
                }
                let mut y = out.expect("at least one stack");
                y.scale(1.0 / stacks.len() as f64);
                Ok((
                    y,
                    Cache::Arma {
                        x: x.clone(),
                        ax,
                        stacks: caches,
                    },
                ))
            }
        }
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the layer input.
    pub fn backward(
        &self,
        params: &[Tensor],
        cache: &Cache,
        grad: &Tensor,
        graph: &Graph,
        alpha: f64,
        grads: &mut [Tensor],
    ) -> Result<Tensor> {
        match (self, cache) {
            (Layer::Dense { w, b, act: on }, Cache::Dense { x, z }) => {
                let gz = if *on { leaky_relu_backward(z, grad, alpha) } else { grad.clone() };
                let g = dense_backward(x, &params[*w], &gz)?;
                grads[*w].add_assign(&g.w);
                grads[*b].add_assign(&g.b);
                Ok(g.x)
            }
            (Layer::Gcn { w }, Cache::Gcn { ax, z }) => {
                let gz = leaky_relu_backward(z, grad, alpha);
                grads[*w].add_assign(&ax.matmul_tn(&gz)?);
                spmm_backward(graph.a_hat, &gz.matmul_nt(&params[*w])?)
            }
            (Layer::Arma { stacks, .. }, Cache::Arma { x, ax, stacks: caches }) => {
                let mut gx = Tensor::zeros(x.rows(), x.cols());
                let scale = 1.0 / stacks.len() as f64;
                for (&[w0, v0, w, v], cache) in stacks.iter().zip(caches) {
                    let mut g = grad.clone();
                    g.scale(scale);
                    let mut g_xv: Option<Tensor> = None;
                    for t in (1..cache.z.len()).rev() {
                        let gz = leaky_relu_backward(&cache.z[t], &g, alpha);
                        grads[w].add_assign(&cache.propagated[t - 1].matmul_tn(&gz)?);
                        g = spmm_backward(graph.a_tilde, &gz.matmul_nt(&params[w])?)?;
                        match &mut g_xv {
                            Some(acc) => acc.add_assign(&gz),
                            None => g_xv = Some(gz),
                        }
                    }
                    if let Some(gs) = g_xv {
                        grads[v].add_assign(&x.matmul_tn(&gs)?);
                        gx.add_assign(&gs.matmul_nt(&params[v])?);
                    }
                    let gz = leaky_relu_backward(&cache.z[0], &g, alpha);
                    grads[w0].add_assign(&ax.matmul_tn(&gz)?);
                    grads[v0].add_assign(&x.matmul_tn(&gz)?);
                    gx.add_assign(&spmm_backward(graph.a_tilde, &gz.matmul_nt(&params[w0])?)?);
                    gx.add_assign(&gz.matmul_nt(&params[v0])?);
                }
                Ok(gx)
            }
            _ => unreachable!("cache produced by a different layer"),
        }
    }
}
