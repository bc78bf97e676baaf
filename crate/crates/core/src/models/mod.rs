//! Branch-flow regressors: an ARMA graph network, a deep GCN stack, a
//! per-branch MLP and a whole-grid MLP, all trained on MSE.

mod checkpoint;
mod gradcheck;
mod layers;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::line_graph::{normalize_adjacency, LineGraphSample, NormMode, BRANCH_FEATURES, BUS_FEATURES};
use crate::sampler::GridInfo;
use crate::sparse::CsrMatrix;
use crate::tensor::{glorot_init, mse_loss, mse_loss_backward, SparseMatrix, Tensor};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use gradcheck::{gradcheck, toy_config, toy_sample, GradcheckReport, FD_STEP};
pub use layers::Layer;
use layers::{Cache, Graph};
pub use train::{evaluate_loss, predict_all, train, train_with, EpochStats, History, TrainOptions};

pub const INPUT_WIDTH: usize = crate::line_graph::FEATURE_WIDTH;
pub const OUTPUT_WIDTH: usize = crate::line_graph::TARGET_WIDTH;
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Arma,
    Gcn,
    LocalMlp,
    GlobalMlp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Arma => "arma",
            ModelKind::Gcn => "gcn",
            ModelKind::LocalMlp => "local-mlp",
            ModelKind::GlobalMlp => "global-mlp",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [ModelKind::Arma, ModelKind::Gcn, ModelKind::LocalMlp, ModelKind::GlobalMlp]
            .into_iter()
            .find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelConfig {
    /// Dense pre-layers, ARMA layers, dense post-layers, linear output.
    Arma {
        pre: Vec<usize>,
        layers: Vec<usize>,
        stacks: usize,
        iterations: usize,
        post: Vec<usize>,
        alpha: f64,
    },
    /// GCN layers then a linear output.
    Gcn { layers: Vec<usize>, alpha: f64 },
    /// Per-vertex dense stack.
    LocalMlp { hidden: Vec<usize>, alpha: f64 },
    /// Whole-grid dense network on a fixed slot layout: attribute-major
    /// inputs `8 x bus_slots` and `5 x branch_slots`, output `8 x branch_slots`.
    GlobalMlp {
        bus_slots: usize,
        branch_slots: usize,
        bus_width: usize,
        branch_width: usize,
        hidden: Vec<usize>,
        alpha: f64,
    },
}

impl ModelConfig {
    pub fn arma() -> Self {
        ModelConfig::Arma {
            pre: vec![64, 64],
            layers: vec![64; 5],
            stacks: 2,
            iterations: 8,
            post: vec![64, 64],
            alpha: LEAKY_SLOPE,
        }
    }

    pub fn gcn() -> Self {
        ModelConfig::Gcn {
            layers: vec![64; 40],
            alpha: LEAKY_SLOPE,
        }
    }

    pub fn local_mlp() -> Self {
        ModelConfig::LocalMlp {
            hidden: vec![256, 256, 256, 128, 128, 64],
            alpha: LEAKY_SLOPE,
        }
    }

    pub fn global_mlp(bus_slots: usize, branch_slots: usize) -> Self {
        ModelConfig::GlobalMlp {
            bus_slots,
            branch_slots,
            bus_width: 64,
            branch_width: 64,
            hidden: vec![128, 128],
            alpha: LEAKY_SLOPE,
        }
    }

    /// Slot layout covering the largest bus and branch counts of `grids`.
    pub fn global_mlp_for(grids: &[GridInfo]) -> Self {
        let buses = grids.iter().map(|g| g.buses).max().unwrap_or(0);
        let branches = grids.iter().map(|g| g.branches).max().unwrap_or(0);
        Self::global_mlp(buses, branches)
    }

    pub fn default_for(kind: ModelKind, grids: &[GridInfo]) -> Self {
        match kind {
            ModelKind::Arma => Self::arma(),
            ModelKind::Gcn => Self::gcn(),
            ModelKind::LocalMlp => Self::local_mlp(),
            ModelKind::GlobalMlp => Self::global_mlp_for(grids),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Arma { .. } => ModelKind::Arma,
            ModelConfig::Gcn { .. } => ModelKind::Gcn,
            ModelConfig::LocalMlp { .. } => ModelKind::LocalMlp,
            ModelConfig::GlobalMlp { .. } => ModelKind::GlobalMlp,
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            ModelConfig::Arma { alpha, .. }
            | ModelConfig::Gcn { alpha, .. }
            | ModelConfig::LocalMlp { alpha, .. }
            | ModelConfig::GlobalMlp { alpha, .. } => *alpha,
        }
    }

    fn check(&self) -> Result<()> {
        let widths_ok = |v: &[usize]| v.iter().all(|&w| w > 0);
        let ok = match self {
            ModelConfig::Arma {
                pre,
                layers,
                stacks,
                iterations,
                post,
                ..
            } => widths_ok(pre) && widths_ok(layers) && widths_ok(post) && *stacks > 0 && *iterations > 0,
            ModelConfig::Gcn { layers, .. } => widths_ok(layers),
            ModelConfig::LocalMlp { hidden, .. } => widths_ok(hidden),
            ModelConfig::GlobalMlp {
                bus_slots,
                branch_slots,
                bus_width,
                branch_width,
                hidden,
                ..
            } => *bus_slots > 0 && *branch_slots > 0 && *bus_width > 0 && *branch_width > 0 && widths_ok(hidden),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config("layer widths, stacks and iterations must be positive".into()))
        }
    }
}

struct Builder<'a> {
    rng: &'a mut ChaCha8Rng,
    names: Vec<String>,
    params: Vec<Tensor>,
}

impl Builder<'_> {
    fn weight(&mut self, name: String, rows: usize, cols: usize) -> usize {
        self.names.push(name);
        self.params.push(glorot_init(rows, cols, self.rng));
        self.params.len() - 1
    }

    fn bias(&mut self, name: String, cols: usize) -> usize {
        self.names.push(name);
        self.params.push(Tensor::zeros(1, cols));
        self.params.len() - 1
    }

    fn dense(&mut self, name: &str, fan_in: usize, fan_out: usize, act: bool) -> Layer {
        Layer::Dense {
            w: self.weight(format!("{name}.w"), fan_in, fan_out),
            b: self.bias(format!("{name}.b"), fan_out),
            act,
        }
    }

    /// Hidden dense layers followed by a linear output layer.
    fn mlp(&mut self, prefix: &str, mut width: usize, hidden: &[usize], out: usize) -> (Vec<Layer>, usize) {
        let mut layers = Vec::new();
        for (i, &h) in hidden.iter().enumerate() {
            layers.push(self.dense(&format!("{prefix}.{i}"), width, h, true));
            width = h;
        }
        layers.push(self.dense("out", width, out, false));
        (layers, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    names: Vec<String>,
    params: Vec<Tensor>,
    layers: Vec<Layer>,
    /// Bus and branch input layers of the whole-grid MLP.
    heads: Option<(Layer, Layer)>,
}

impl Model {
    /// Glorot-uniform weights and zero biases drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder {
            rng: &mut rng,
            names: Vec::new(),
            params: Vec::new(),
        };
        let mut layers = Vec::new();
        let mut heads = None;
        match &config {
            ModelConfig::Arma {
                pre,
                layers: arma,
                stacks,
                iterations,
                post,
                ..
            } => {
                let mut width = INPUT_WIDTH;
                for (i, &h) in pre.iter().enumerate() {
                    layers.push(b.dense(&format!("pre.{i}"), width, h, true));
                    width = h;
                }
                for (i, &h) in arma.iter().enumerate() {
                    let stacks = (0..*stacks)
                        .map(|k| {
                            let p = format!("arma.{i}.stack{k}");
                            [
                                b.weight(format!("{p}.w0"), width, h),
                                b.weight(format!("{p}.v0"), width, h),
                                b.weight(format!("{p}.w"), h, h),
                                b.weight(format!("{p}.v"), width, h),
                            ]
                        })
                        .collect();
                    layers.push(Layer::Arma {
                        stacks,
                        iterations: *iterations,
                    });
                    width = h;
                }
                layers.extend(b.mlp("post", width, post, OUTPUT_WIDTH).0);
            }
            ModelConfig::Gcn { layers: gcn, .. } => {
                let mut width = INPUT_WIDTH;
                for (i, &h) in gcn.iter().enumerate() {
                    layers.push(Layer::Gcn {
                        w: b.weight(format!("gcn.{i}.w"), width, h),
                    });
                    width = h;
                }
                layers.extend(b.mlp("post", width, &[], OUTPUT_WIDTH).0);
            }
            ModelConfig::LocalMlp { hidden, .. } => {
                layers.extend(b.mlp("hidden", INPUT_WIDTH, hidden, OUTPUT_WIDTH).0);
            }
            ModelConfig::GlobalMlp {
                bus_slots,
                branch_slots,
                bus_width,
                branch_width,
                hidden,
                ..
            } => {
                let bus = b.dense("bus_in", BUS_FEATURES * bus_slots, *bus_width, true);
                let branch = b.dense("branch_in", BRANCH_FEATURES * branch_slots, *branch_width, true);
                heads = Some((bus, branch));
                layers.extend(b.mlp("hidden", bus_width + branch_width, hidden, OUTPUT_WIDTH * branch_slots).0);
            }
        }
        Ok(Model {
            names: b.names,
            params: b.params,
            config,
            layers,
            heads,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind()
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Assembles the model input for a group of samples.
    pub fn batch(&self, samples: &[&LineGraphSample]) -> Result<Batch> {
        Batch::new(samples, &self.config)
    }

    /// Predictions, one 8-wide row per vertex of the batch.
    pub fn predict(&self, batch: &Batch) -> Result<Tensor> {
        Ok(self.forward(batch)?.0)
    }

    pub fn predict_sample(&self, sample: &LineGraphSample) -> Result<Tensor> {
        self.predict(&self.batch(&[sample])?)
    }

    pub fn forward(&self, batch: &Batch) -> Result<(Tensor, Trace)> {
        let graph = Graph {
            a_hat: &batch.a_hat,
            a_tilde: &batch.a_tilde,
        };
        let alpha = self.config.alpha();
        let (mut x, heads) = match (&self.heads, &batch.global) {
            (None, _) => (batch.features.clone(), None),
            (Some((bus, branch)), Some(g)) => {
                let (hb, cb) = bus.forward(&self.params, &g.bus, &graph, alpha)?;
                let (hr, cr) = branch.forward(&self.params, &g.branch, &graph, alpha)?;
                (Tensor::hcat(&[&hb, &hr])?, Some((cb, cr, hb.cols())))
            }
            (Some(_), None) => return Err(Error::LayoutMismatch("batch built without a slot layout".into())),
        };
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, c) = layer.forward(&self.params, &x, &graph, alpha)?;
            caches.push(c);
            x = y;
        }
        let pred = match &batch.global {
            Some(g) if self.heads.is_some() => g.gather(&x),
            _ => x,
        };
        Ok((pred, Trace { caches, heads }))
    }

    /// Parameter gradients for an upstream gradient on the predictions.
    pub fn backward(&self, batch: &Batch, trace: &Trace, grad_pred: &Tensor) -> Result<Vec<Tensor>> {
        let graph = Graph {
            a_hat: &batch.a_hat,
            a_tilde: &batch.a_tilde,
        };
        let alpha = self.config.alpha();
        let mut grads: Vec<Tensor> = self.params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        let mut g = match &batch.global {
            Some(gl) if self.heads.is_some() => gl.scatter(grad_pred),
            _ => grad_pred.clone(),
        };
        for (layer, cache) in self.layers.iter().zip(&trace.caches).rev() {
            g = layer.backward(&self.params, cache, &g, &graph, alpha, &mut grads)?;
        }
        if let (Some((bus, branch)), Some((cb, cr, split))) = (&self.heads, &trace.heads) {
            let gb = g.column_slice(0, *split);
            let gr = g.column_slice(*split, g.cols() - split);
            bus.backward(&self.params, cb, &gb, &graph, alpha, &mut grads)?;
            branch.backward(&self.params, cr, &gr, &graph, alpha, &mut grads)?;
        }
        Ok(grads)
    }

    /// MSE over every target entry of the batch, and its gradients.
    pub fn loss_and_gradients(&self, batch: &Batch) -> Result<(f64, Vec<Tensor>)> {
        let targets = batch.targets.as_ref().ok_or(Error::UnconvergedLabel)?;
        let (pred, trace) = self.forward(batch)?;
        let loss = mse_loss(&pred, targets)?;
        let grads = self.backward(batch, &trace, &mse_loss_backward(&pred, targets)?)?;
        Ok((loss, grads))
    }

    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        let targets = batch.targets.as_ref().ok_or(Error::UnconvergedLabel)?;
        mse_loss(&self.predict(batch)?, targets)
    }
}

/// Intermediate values kept by [`Model::forward`] for the backward pass.
pub struct Trace {
    caches: Vec<Cache>,
    heads: Option<(Cache, Cache, usize)>,
}

/// Disjoint union of samples: stacked vertex rows and block-diagonal
/// propagation operators.
#[derive(Debug, Clone)]
pub struct Batch {
    pub features: Tensor,
    /// Present only when every sample is labelled.
    pub targets: Option<Tensor>,
    pub a_hat: SparseMatrix,
    pub a_tilde: SparseMatrix,
    /// Vertex range of each sample: `offsets[i]..offsets[i + 1]`.
    pub offsets: Vec<usize>,
    global: Option<GlobalInputs>,
}

#[derive(Debug, Clone)]
struct GlobalInputs {
    bus: Tensor,
    branch: Tensor,
    branch_slots: usize,
    /// `(batch row, branch slot)` of every vertex.
    vertex_slots: Vec<(usize, usize)>,
}

impl GlobalInputs {
    fn gather(&self, out: &Tensor) -> Tensor {
        let mut pred = Tensor::zeros(self.vertex_slots.len(), OUTPUT_WIDTH);
        for (v, &(row, slot)) in self.vertex_slots.iter().enumerate() {
            for a in 0..OUTPUT_WIDTH {
                pred[(v, a)] = out[(row, a * self.branch_slots + slot)];
            }
        }
        pred
    }

    fn scatter(&self, grad: &Tensor) -> Tensor {
        let rows = self.bus.rows();
        let mut g = Tensor::zeros(rows, OUTPUT_WIDTH * self.branch_slots);
        for (v, &(row, slot)) in self.vertex_slots.iter().enumerate() {
            for a in 0..OUTPUT_WIDTH {
                g[(row, a * self.branch_slots + slot)] += grad[(v, a)];
            }
        }
        g
    }
}

impl Batch {
    pub fn new(samples: &[&LineGraphSample], config: &ModelConfig) -> Result<Self> {
        let features = Tensor::vstack(&samples.iter().map(|s| &s.features).collect::<Vec<_>>())?;
        let targets = if samples.iter().all(|s| s.targets.is_some()) {
            Some(Tensor::vstack(
                &samples.iter().map(|s| s.targets.as_ref().unwrap()).collect::<Vec<_>>(),
            )?)
        } else {
            None
        };
        let mut offsets = vec![0];
        for s in samples {
            offsets.push(offsets.last().unwrap() + s.n_vertices());
        }
        let global = match config {
            ModelConfig::GlobalMlp {
                bus_slots,
                branch_slots,
                ..
            } => Some(global_inputs(samples, *bus_slots, *branch_slots)?),
            _ => None,
        };
        let propagates = matches!(config, ModelConfig::Arma { .. } | ModelConfig::Gcn { .. });
        let (a_hat, a_tilde) = if propagates {
            let mut hats = Vec::with_capacity(samples.len());
            let mut tildes = Vec::with_capacity(samples.len());
            for s in samples {
                hats.push(normalize_adjacency(&s.adjacency, NormMode::SelfLoops)?.matrix);
                tildes.push(normalize_adjacency(&s.adjacency, NormMode::Plain)?.matrix);
            }
            (CsrMatrix::block_diag(&hats), CsrMatrix::block_diag(&tildes))
        } else {
            let n = features.rows();
            (CsrMatrix::from_triplets(n, n, &[]), CsrMatrix::from_triplets(n, n, &[]))
        };
        Ok(Batch {
            features,
            targets,
            a_hat,
            a_tilde,
            offsets,
            global,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.features.rows()
    }
}

fn global_inputs(samples: &[&LineGraphSample], bus_slots: usize, branch_slots: usize) -> Result<GlobalInputs> {
    let mut bus = Tensor::zeros(samples.len(), BUS_FEATURES * bus_slots);
    let mut branch = Tensor::zeros(samples.len(), BRANCH_FEATURES * branch_slots);
    let mut vertex_slots = Vec::new();
    for (row, s) in samples.iter().enumerate() {
        for (i, &slot) in s.bus_index_map.iter().enumerate() {
            if slot >= bus_slots {
                return Err(Error::LayoutMismatch(format!(
                    "{} needs bus slot {slot}, layout has {bus_slots}",
                    s.grid_name
                )));
            }
            for a in 0..BUS_FEATURES {
                bus[(row, a * bus_slots + slot)] = s.bus_features[(i, a)];
            }
        }
        for (v, &slot) in s.branch_index_map.iter().enumerate() {
            if slot >= branch_slots {
                return Err(Error::LayoutMismatch(format!(
                    "{} needs branch slot {slot}, layout has {branch_slots}",
                    s.grid_name
                )));
            }
            for a in 0..BRANCH_FEATURES {
                branch[(row, a * branch_slots + slot)] = s.features[(v, a)];
            }
            vertex_slots.push((row, slot));
        }
    }
    Ok(GlobalInputs {
        bus,
        branch,
        branch_slots,
        vertex_slots,
    })
}
