//! Central finite-difference check of model gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Batch, Model, ModelConfig, ModelKind, LEAKY_SLOPE};
use crate::error::Result;
use crate::line_graph::{LineGraphSample, BUS_FEATURES, FEATURE_WIDTH, TARGET_WIDTH};
use crate::sparse::CsrMatrix;
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-6;

/// Entries whose analytic and numeric magnitudes both fall below this are
/// not scored.
const MAGNITUDE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
}

/// Compares every parameter gradient of the batch MSE loss against central
/// differences with step [`FD_STEP`].
pub fn gradcheck(model: &Model, batch: &Batch) -> Result<GradcheckReport> {
    let (_, grads) = model.loss_and_gradients(batch)?;
    let mut probe = model.clone();
    let mut params = Vec::with_capacity(grads.len());
    for (p, g) in grads.iter().enumerate() {
        let mut check = ParamCheck {
            name: model.param_names()[p].clone(),
            entries: g.len(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        for i in 0..g.len() {
            let orig = probe.params[p].data()[i];
            probe.params[p].data_mut()[i] = orig + FD_STEP;
            let plus = probe.loss(batch)?;
            probe.params[p].data_mut()[i] = orig - FD_STEP;
            let minus = probe.loss(batch)?;
            probe.params[p].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let analytic = g.data()[i];
            let err = (analytic - numeric).abs();
            check.max_abs_error = check.max_abs_error.max(err);
            let scale = analytic.abs().max(numeric.abs());
            if scale > MAGNITUDE_FLOOR {
                check.max_rel_error = check.max_rel_error.max(err / scale);
            }
        }
        params.push(check);
    }
    let max_rel_error = params.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport { params, max_rel_error })
}

/// Narrow, shallow variant of each architecture for exhaustive checks.
pub fn toy_config(kind: ModelKind) -> ModelConfig {
    match kind {
        ModelKind::Arma => ModelConfig::Arma {
            pre: vec![6],
            layers: vec![5, 5],
            stacks: 2,
            iterations: 3,
            post: vec![6],
            alpha: LEAKY_SLOPE,
        },
        ModelKind::Gcn => ModelConfig::Gcn {
            layers: vec![6, 6, 6],
            alpha: LEAKY_SLOPE,
        },
        ModelKind::LocalMlp => ModelConfig::LocalMlp {
            hidden: vec![7, 6],
            alpha: LEAKY_SLOPE,
        },
        ModelKind::GlobalMlp => ModelConfig::GlobalMlp {
            bus_slots: 4,
            branch_slots: 5,
            bus_width: 6,
            branch_width: 6,
            hidden: vec![7],
            alpha: LEAKY_SLOPE,
        },
    }
}

/// Five-vertex sample: the line graph of a 4-bus, 5-branch grid with
/// random features and targets.
pub fn toy_sample(seed: u64) -> LineGraphSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = |rows: usize, cols: usize| {
        Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
            .expect("sized buffer")
    };
    let branches = [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)];
    let mut triplets = Vec::new();
    for (a, p) in branches.iter().enumerate() {
        for (b, q) in branches.iter().enumerate() {
            if a != b && (p.0 == q.0 || p.0 == q.1 || p.1 == q.0 || p.1 == q.1) {
                triplets.push((a, b, 1.0));
            }
        }
    }
    LineGraphSample {
        grid_name: "toy".into(),
        adjacency: CsrMatrix::from_triplets(5, 5, &triplets),
        features: random(5, FEATURE_WIDTH),
        targets: Some(random(5, TARGET_WIDTH)),
        branch_index_map: (0..5).collect(),
        bus_features: random(4, BUS_FEATURES),
        bus_index_map: (0..4).collect(),
    }
}
