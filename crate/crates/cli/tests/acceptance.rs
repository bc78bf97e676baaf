//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::process::{Command, ExitCode};
use std::time::Instant;

use gridflow_core::ac::{build_jacobian, compute_mismatch, solve_nr, NrOptions};
use gridflow_core::case_io::validate;
use gridflow_core::grid::build_ybus;
use gridflow_core::line_graph::{build_line_graph, reconstruct_grid, LineGraphSample};
use gridflow_core::metrics::{cosine_distance, dc_baseline, nrmse, nrmse_over, smoothness_report, SmoothnessReport};
use gridflow_core::models::{
    gradcheck, load_checkpoint, predict_all, save_checkpoint, toy_config, toy_sample, train_with, CheckpointMeta,
    Model, ModelConfig, ModelKind, TrainOptions,
};
use gridflow_core::sampler::{
    gen_p_interval, generate_dataset, sample_rng, sample_values, Dataset, GridInfo, SampleRanges, SamplerConfig, Split,
};
use gridflow_core::sparse::CsrMatrix;
use gridflow_core::tensor::Tensor;
use gridflow_core::{cases, Branch, Bus, BusType, Error, Generator, Grid};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REFERENCE: &str = include_str!("../../core/tests/data/reference_solutions.json");

const DATASET_SEED: u64 = 2024;
const DATASET_SIZE: usize = 1500;
const TRAIN_SEED: u64 = 7;
const EPOCHS: usize = 100;
const PROPERTY_CASES: usize = 1000;
const CASE300_RETRY_BUDGET: usize = 10_000;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

fn report(id: usize, title: &str, v: &Verdict) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("criterion {id} [{tag}] {title}: {}", v.detail);
}

fn main() -> ExitCode {
    let mut all = true;
    let mut record = |id: usize, title: &str, v: Verdict| {
        report(id, title, &v);
        all &= v.pass;
    };

    record(1, "solve-ac matches reference voltages", solver_oracle());
    record(2, "two-bus closed form", two_bus());
    record(3, "Jacobian and model gradients vs finite differences", gradients());

    let case30 = cases::load("case30").unwrap();
    let started = Instant::now();
    let data = generate_dataset(std::slice::from_ref(&case30), &SamplerConfig::new(DATASET_SEED, DATASET_SIZE))
        .expect("case30 dataset");
    println!(
        "  case30 dataset: {} samples, seed {DATASET_SEED}, {:.1}s",
        data.samples.len(),
        started.elapsed().as_secs_f64()
    );
    let test = data.split(Split::Test);
    let dc_preds: Vec<Tensor> = test.iter().map(|s| dc_baseline(s, &case30).unwrap()).collect();
    let dc = nrmse_over(&test, &dc_preds).unwrap().nrmse;
    record(4, "DC baseline NRMSE band", Verdict::new((0.45..=0.70).contains(&dc), format!("{dc:.4} in [0.45, 0.70]")));

    let arma = train_model(&data, ModelConfig::arma());
    let arma_nrmse = test_nrmse(&arma.0, &test);
    record(
        5,
        "ArmaGnn desk-scale learning",
        Verdict::new(
            arma_nrmse < 0.20 && arma_nrmse < dc && arma.1 <= 3600.0,
            format!("test NRMSE {arma_nrmse:.4} (< 0.20, DC {dc:.4}), training {:.0}s (<= 3600)", arma.1),
        ),
    );

    let gcn = train_model(&data, ModelConfig::gcn());
    record(6, "GcnStack oversmoothing", oversmoothing(&arma.0, arma_nrmse, &gcn.0, &test));

    record(7, "perturbed case300 pipeline", perturbation());
    record(8, "topology independence", topology(&arma.0));
    record(9, "invariant suites", invariants());

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn solver_oracle() -> Verdict {
    let data: serde_json::Value = serde_json::from_str(REFERENCE).unwrap();
    let mut worst_dv: f64 = 0.0;
    let mut worst_time: f64 = 0.0;
    let mut worst_it = 0;
    let mut worst_mis: f64 = 0.0;
    let mut failures = Vec::new();
    for name in ["case9", "case14", "case30", "case57", "case118", "case300"] {
        let start = Instant::now();
        let out = Command::new(env!("CARGO_BIN_EXE_gridflow"))
            .args(["solve-ac", name])
            .output()
            .expect("gridflow runs");
        worst_time = worst_time.max(start.elapsed().as_secs_f64());
        let stderr = String::from_utf8_lossy(&out.stderr);
        if !out.status.success() || !stderr.contains("converged=true") {
            failures.push(format!("{name} did not converge"));
            continue;
        }
        let field = |key: &str| -> f64 {
            let rest = &stderr[stderr.find(key).unwrap() + key.len()..];
            rest.split_whitespace().next().unwrap().parse().unwrap()
        };
        worst_it = worst_it.max(field("iterations=") as usize);
        worst_mis = worst_mis.max(field("max_mismatch="));
        let text = String::from_utf8(out.stdout).unwrap();
        let solved: Vec<(usize, Complex64)> = text
            .lines()
            .skip(1)
            .take_while(|l| !l.is_empty())
            .map(|l| {
                let c: Vec<&str> = l.split(',').collect();
                let v = Complex64::from_polar(c[1].parse().unwrap(), c[2].parse().unwrap());
                (c[0].parse().unwrap(), v)
            })
            .collect();
        let reference = &data[name];
        let ids = reference["bus_ids"].as_array().unwrap();
        for (k, id) in ids.iter().enumerate() {
            let id = id.as_u64().unwrap() as usize;
            let want = Complex64::from_polar(
                reference["vm"][k].as_f64().unwrap(),
                reference["va_rad"][k].as_f64().unwrap(),
            );
            match solved.iter().find(|(b, _)| *b == id) {
                Some((_, v)) => worst_dv = worst_dv.max((v - want).norm()),
                None => failures.push(format!("{name} bus {id} missing")),
            }
        }
    }
    let pass = failures.is_empty() && worst_dv < 1e-6 && worst_it <= 10 && worst_mis < 1e-8 && worst_time < 1.0;
    Verdict::new(
        pass,
        format!(
            "max |dV| {worst_dv:.2e} (< 1e-6), iterations {worst_it} (<= 10), mismatch {worst_mis:.2e} (< 1e-8), \
             slowest {worst_time:.3}s (< 1){}",
            if failures.is_empty() { String::new() } else { format!(", {}", failures.join("; ")) }
        ),
    )
}

fn plain_bus(id: usize, bus_type: BusType) -> Bus {
    Bus {
        id,
        bus_type,
        pd: 0.0,
        qd: 0.0,
        gs: 0.0,
        bs: 0.0,
        vm: 1.0,
        va: 0.0,
        base_kv: 0.0,
    }
}

fn plain_line(from: usize, to: usize, r: f64, x: f64) -> Branch {
    Branch {
        from,
        to,
        r,
        x,
        b: 0.0,
        tau: 0.0,
        shift: 0.0,
        in_service: true,
    }
}

fn slack_generator(bus: usize) -> Generator {
    Generator {
        bus,
        pg: 0.0,
        qg: 0.0,
        qmax: 0.0,
        qmin: 0.0,
        pmax: 10.0,
        pmin: 0.0,
        vg: 1.0,
        in_service: true,
    }
}

fn two_bus() -> Verdict {
    let (x, p) = (0.1, 1.0);
    let mut load = plain_bus(2, BusType::Pq);
    load.pd = p;
    let grid = Grid {
        name: "two-bus".into(),
        base_mva: 100.0,
        buses: vec![plain_bus(1, BusType::Slack), load],
        generators: vec![slack_generator(1)],
        branches: vec![plain_line(1, 2, 0.0, x)],
    };
    // |V|^4 - |V|^2 + (P x)^2 = 0, sin θ = -P x / |V|
    let px = p * x;
    let vm = ((1.0 + (1.0 - 4.0 * px * px).sqrt()) / 2.0).sqrt();
    let va = -(px / vm).asin();
    let options = NrOptions {
        tolerance: 1e-12,
        ..NrOptions::default()
    };
    let sol = solve_nr(&grid, &options).unwrap();
    let (dm, da) = ((sol.v[1].norm() - vm).abs(), (sol.v[1].arg() - va).abs());
    let quoted = (sol.v[1].norm() - 0.99499).abs() < 1e-4 && (sol.v[1].arg() + 0.10054).abs() < 2e-4;
    Verdict::new(
        sol.converged && dm < 1e-9 && da < 1e-9 && quoted,
        format!(
            "|V2| {:.9} vs {vm:.9}, θ2 {:.9} vs {va:.9}, errors {dm:.1e}/{da:.1e} (< 1e-9)",
            sol.v[1].norm(),
            sol.v[1].arg()
        ),
    )
}

fn jacobian_error(grid: &Grid, v: &[Complex64]) -> f64 {
    let ybus = build_ybus(grid).unwrap();
    let sys = build_jacobian(grid, &ybus, v).unwrap();
    let h = 1e-6;
    let vars: Vec<(usize, bool)> = sys
        .angle_buses
        .iter()
        .map(|&b| (b, true))
        .chain(sys.magnitude_buses.iter().map(|&b| (b, false)))
        .collect();
    let mut worst: f64 = 0.0;
    for (col, &(bus, angle)) in vars.iter().enumerate() {
        let shifted = |d: f64| {
            let mut w = v.to_vec();
            let (m, a) = (w[bus].norm(), w[bus].arg());
            w[bus] = if angle {
                Complex64::from_polar(m, a + d)
            } else {
                Complex64::from_polar(m + d, a)
            };
            compute_mismatch(grid, &ybus, &w).unwrap()
        };
        let (plus, minus) = (shifted(h), shifted(-h));
        for row in 0..sys.dimension() {
            let numeric = (plus[row] - minus[row]) / (2.0 * h);
            let analytic = sys.matrix[(row, col)];
            let scale = analytic.abs().max(numeric.abs());
            if scale > 1e-8 {
                worst = worst.max((analytic - numeric).abs() / scale);
            }
        }
    }
    worst
}

fn gradients() -> Verdict {
    let mut jac: f64 = 0.0;
    for (k, name) in ["case9", "case14", "case30"].iter().enumerate() {
        let grid = sample_values(&cases::load(name).unwrap(), &SampleRanges::default(), &mut sample_rng(11, k as u64));
        let mut rng = sample_rng(12, k as u64);
        let v: Vec<Complex64> = (0..grid.n_buses())
            .map(|_| Complex64::from_polar(rng.random_range(0.9..1.1), rng.random_range(-0.3..0.3)))
            .collect();
        jac = jac.max(jacobian_error(&grid, &v));
    }
    let mut parts = vec![format!("Jacobian {jac:.1e} (< 1e-5)")];
    let mut pass = jac < 1e-5;
    for kind in [ModelKind::Arma, ModelKind::Gcn, ModelKind::LocalMlp, ModelKind::GlobalMlp] {
        let model = Model::new(toy_config(kind), 1).unwrap();
        let sample = toy_sample(2);
        let r = gradcheck(&model, &model.batch(&[&sample]).unwrap()).unwrap();
        pass &= r.max_rel_error < 1e-4;
        parts.push(format!("{} {:.1e}", kind.name(), r.max_rel_error));
    }
    Verdict::new(pass, format!("{} (models < 1e-4)", parts.join(", ")))
}

/// Trains on the train/val splits; returns the model and wall-clock seconds.
fn train_model(data: &Dataset, config: ModelConfig) -> (Model, f64) {
    let kind = config.kind();
    let mut model = Model::new(config, TRAIN_SEED).unwrap();
    let options = TrainOptions {
        epochs: EPOCHS,
        ..TrainOptions::new(TRAIN_SEED)
    };
    let start = Instant::now();
    let history = train_with(
        &mut model,
        &data.split(Split::Train),
        &data.split(Split::Val),
        &options,
        |s| {
            if (s.epoch + 1) % 25 == 0 {
                println!("  {} epoch {}: train {:.3e} val {:.3e}", kind.name(), s.epoch + 1, s.train_loss, s.val_loss);
            }
        },
    )
    .unwrap();
    let secs = start.elapsed().as_secs_f64();
    println!(
        "  {}: best epoch {}, val loss {:.3e}, {secs:.0}s",
        kind.name(),
        history.best_epoch + 1,
        history.best_val_loss
    );
    (model, secs)
}

fn test_nrmse(model: &Model, test: &[&LineGraphSample]) -> f64 {
    let preds = predict_all(model, test, 64).unwrap();
    nrmse_over(test, &preds).unwrap().nrmse
}

fn smoothness(model: &Model, test: &[&LineGraphSample]) -> SmoothnessReport {
    smoothness_report(test, &predict_all(model, test, 64).unwrap()).unwrap()
}

fn oversmoothing(arma: &Model, arma_nrmse: f64, gcn: &Model, test: &[&LineGraphSample]) -> Verdict {
    let gcn_nrmse = test_nrmse(gcn, test);
    let a = smoothness(arma, test);
    let g = smoothness(gcn, test);
    let label = a.mean_label;
    let arma_gap = (a.mean_prediction - label).abs() / label;
    Verdict::new(
        gcn_nrmse > arma_nrmse && g.mean_prediction < label && arma_gap <= 0.25,
        format!(
            "NRMSE gcn {gcn_nrmse:.4} > arma {arma_nrmse:.4}; smoothness label {label:.4}, gcn {:.4} (< label), \
             arma {:.4} ({:.1}% off, <= 25%)",
            g.mean_prediction,
            a.mean_prediction,
            100.0 * arma_gap
        ),
    )
}

fn perturbation() -> Verdict {
    let reference = cases::load("case300").unwrap();
    let mut config = SamplerConfig::new(DATASET_SEED, 500);
    config.perturb = true;
    // ~0.7% of perturbed case300 draws are usable, so 1000 attempts run out
    // on some sample in roughly one run of two
    config.retry_budget = CASE300_RETRY_BUDGET;
    let start = Instant::now();
    let data = match generate_dataset(std::slice::from_ref(&reference), &config) {
        Ok(d) => d,
        Err(e) => return Verdict::new(false, format!("generation failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let mut bad = Vec::new();
    let mut smallest = usize::MAX;
    let mut worst_label: f64 = 0.0;
    for (k, s) in data.samples.iter().enumerate() {
        smallest = smallest.min(s.bus_index_map.len());
        let grid = match reconstruct_grid(s, &reference) {
            Ok(g) => g,
            Err(e) => {
                bad.push(format!("#{k}: {e}"));
                continue;
            }
        };
        // connected, exactly one slack with a generator
        if !validate(&grid).is_empty() {
            bad.push(format!("#{k}: invalid topology"));
        }
        if s.bus_index_map.len() * 10 < reference.n_buses() {
            bad.push(format!("#{k}: {} buses", s.bus_index_map.len()));
        }
        let sol = solve_nr(&grid, &NrOptions::default()).unwrap();
        if !sol.converged || sol.slack_p < 0.0 {
            bad.push(format!("#{k}: converged={} slack_p={:.3}", sol.converged, sol.slack_p));
            continue;
        }
        let labels = s.targets.as_ref().expect("labelled");
        let resolved: Vec<[f64; 8]> = grid.in_service_branches().iter().map(|&b| sol.branches[b].to_array()).collect();
        for (r, row) in resolved.iter().enumerate() {
            for (c, x) in row.iter().enumerate() {
                worst_label = worst_label.max((labels[(r, c)] - x).abs());
            }
        }
    }
    let pass = data.samples.len() == 500 && bad.is_empty() && worst_label < 1e-6 && secs <= 1800.0;
    Verdict::new(
        pass,
        format!(
            "{} samples, {} violations, smallest {smallest}/{} buses, label re-solve gap {worst_label:.1e}, \
             {secs:.0}s (<= 1800){}",
            data.samples.len(),
            bad.len(),
            reference.n_buses(),
            bad.first().map(|b| format!(", first: {b}")).unwrap_or_default()
        ),
    )
}

fn topology(arma: &Model) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("arma-case30.ckpt");
    let meta = CheckpointMeta {
        seed: TRAIN_SEED,
        epochs: EPOCHS,
        best_epoch: None,
        best_val_loss: None,
        training: None,
    };
    save_checkpoint(&path, arma, &meta).unwrap();
    let (loaded, _) = load_checkpoint(&path).unwrap();
    let case118 = generate_dataset(&[cases::load("case118").unwrap()], &SamplerConfig::new(3, 10)).unwrap();
    let samples: Vec<&LineGraphSample> = case118.samples.iter().collect();
    let arma_ok = match predict_all(&loaded, &samples, 16) {
        Ok(p) => p.iter().all(|t| t.data().iter().all(|x| x.is_finite()) && t.rows() == samples[0].n_vertices()),
        Err(_) => false,
    };

    let mixed: Vec<Grid> = ["case9", "case14", "case30", "case39", "case89pegase", "case118"]
        .iter()
        .map(|n| cases::load(n).unwrap())
        .collect();
    let infos: Vec<GridInfo> = mixed
        .iter()
        .map(|g| GridInfo {
            name: g.name.clone(),
            buses: g.n_buses(),
            branches: g.branches.len(),
        })
        .collect();
    let global = Model::new(ModelConfig::global_mlp_for(&infos), 0).unwrap();
    let accepts_mixed = mixed
        .iter()
        .all(|g| global.predict_sample(&LineGraphSample::from_grid(g, None).unwrap()).is_ok());
    let case300 = LineGraphSample::from_grid(&cases::load("case300").unwrap(), None).unwrap();
    let refused = matches!(global.predict_sample(&case300), Err(Error::LayoutMismatch(_)));
    Verdict::new(
        arma_ok && accepts_mixed && refused,
        format!(
            "arma case30 checkpoint on case118: {}; global-mlp on mixed set: {}; on case300: {}",
            if arma_ok { "ok" } else { "failed" },
            if accepts_mixed { "ok" } else { "failed" },
            if refused { "LayoutMismatch" } else { "not refused" }
        ),
    )
}

fn permuted(sample: &LineGraphSample, perm: &[usize]) -> LineGraphSample {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    let t: Vec<(usize, usize, f64)> = sample
        .adjacency
        .triplets()
        .into_iter()
        .map(|(i, j, v)| (inv[i], inv[j], v))
        .collect();
    let rows = |m: &Tensor| Tensor::from_rows(&perm.iter().map(|&p| m.row(p)).collect::<Vec<_>>());
    LineGraphSample {
        adjacency: CsrMatrix::from_triplets(perm.len(), perm.len(), &t),
        features: rows(&sample.features),
        targets: sample.targets.as_ref().map(rows),
        branch_index_map: perm.iter().map(|&p| sample.branch_index_map[p]).collect(),
        ..sample.clone()
    }
}

fn equivariance(rng: &mut ChaCha8Rng) -> usize {
    let pool: Vec<LineGraphSample> = ["case9", "case14", "case30"]
        .iter()
        .map(|n| LineGraphSample::from_grid(&cases::load(n).unwrap(), None).unwrap())
        .collect();
    let kinds = [ModelKind::Arma, ModelKind::Gcn, ModelKind::LocalMlp];
    let mut failures = 0;
    for i in 0..PROPERTY_CASES {
        let sample = &pool[rng.random_range(0..pool.len())];
        let model = Model::new(toy_config(kinds[i % kinds.len()]), rng.random()).unwrap();
        let mut perm: Vec<usize> = (0..sample.n_vertices()).collect();
        perm.shuffle(rng);
        let y = model.predict_sample(sample).unwrap();
        let z = model.predict_sample(&permuted(sample, &perm)).unwrap();
        if perm.iter().enumerate().any(|(r, &p)| z.row(r) != y.row(p)) {
            failures += 1;
        }
    }
    failures
}

fn random_grid(rng: &mut ChaCha8Rng) -> Grid {
    let n = rng.random_range(2..12);
    let mut buses = vec![plain_bus(1, BusType::Slack)];
    buses.extend((2..=n).map(|id| plain_bus(id, BusType::Pq)));
    let m = rng.random_range(0..25);
    let branches = (0..m)
        .filter_map(|_| {
            let (f, t) = (rng.random_range(1..=n), rng.random_range(1..=n));
            let mut br = plain_line(f, t, 0.01, 0.1);
            br.in_service = rng.random_bool(0.85);
            (f != t).then_some(br)
        })
        .collect();
    Grid {
        name: "random".into(),
        base_mva: 100.0,
        buses,
        generators: vec![slack_generator(1)],
        branches,
    }
}

fn line_graph_brute_force(rng: &mut ChaCha8Rng) -> usize {
    let mut failures = 0;
    for _ in 0..PROPERTY_CASES {
        let grid = random_grid(rng);
        let live: Vec<&Branch> = grid.branches.iter().filter(|b| b.in_service).collect();
        let n = live.len();
        let mut want = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let (p, q) = (live[i], live[j]);
                if i != j && (p.from == q.from || p.from == q.to || p.to == q.from || p.to == q.to) {
                    want[i][j] = 1.0;
                }
            }
        }
        if build_line_graph(&grid).unwrap().adjacency.to_dense() != want {
            failures += 1;
        }
    }
    failures
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap()
}

fn nrmse_scale(rng: &mut ChaCha8Rng) -> usize {
    let mut failures = 0;
    for _ in 0..PROPERTY_CASES {
        let rows = rng.random_range(2..40);
        let truth = random_tensor(rng, rows, 8);
        let pred = random_tensor(rng, rows, 8);
        let scales: Vec<f64> = (0..8)
            .map(|_| rng.random_range(1e-3..1e3) * if rng.random_bool(0.5) { -1.0 } else { 1.0 })
            .collect();
        let scaled = |t: &Tensor| {
            let mut s = t.clone();
            for r in 0..rows {
                for (c, k) in s.row_mut(r).iter_mut().zip(&scales) {
                    *c *= k;
                }
            }
            s
        };
        let a = nrmse(&truth, &pred).unwrap();
        let b = nrmse(&scaled(&truth), &scaled(&pred)).unwrap();
        if (a.nrmse - b.nrmse).abs() > 1e-9 * a.nrmse.max(1.0) {
            failures += 1;
        }
    }
    failures
}

fn cosine_range(rng: &mut ChaCha8Rng) -> usize {
    let mut failures = 0;
    for _ in 0..PROPERTY_CASES {
        let n = rng.random_range(1..16);
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
        let d = cosine_distance(&u, &v).unwrap();
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        let own = cosine_distance(&u, &u).unwrap();
        let opposite = cosine_distance(&u, &neg).unwrap();
        if !(0.0..=2.0).contains(&d) || own > 1e-12 || (opposite - 2.0).abs() > 1e-12 {
            failures += 1;
        }
    }
    failures
}

fn within(x: f64, reference: f64, (lo, hi): (f64, f64)) -> bool {
    let (a, b) = (lo * reference, hi * reference);
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    let slack = 1e-12 * reference.abs();
    x >= a - slack && x <= b + slack
}

fn sampler_ranges(rng: &mut ChaCha8Rng) -> usize {
    let pool: Vec<Grid> = ["case9", "case14", "case30", "case39", "case57", "case118"]
        .iter()
        .map(|n| cases::load(n).unwrap())
        .collect();
    let r = SampleRanges::default();
    let mut failures = 0;
    for i in 0..PROPERTY_CASES {
        let g = &pool[i % pool.len()];
        let s = sample_values(g, &r, &mut sample_rng(rng.random(), rng.random()));
        let buses = g.buses.iter().zip(&s.buses).all(|(a, b)| {
            within(b.pd, a.pd, r.load) && within(b.qd, a.qd, r.load) && within(b.gs, a.gs, r.shunt) && within(b.bs, a.bs, r.shunt)
        });
        let gens = g.generators.iter().zip(&s.generators).all(|(a, b)| {
            let (lo, hi) = gen_p_interval(a.pg, a.pmax, r.gen_p);
            b.pg >= lo && b.pg <= hi && (r.gen_v.0..=r.gen_v.1).contains(&b.vg)
        });
        let branches = g.branches.iter().zip(&s.branches).all(|(a, b)| {
            let trafo = if a.is_transformer() {
                (r.tau.0..=r.tau.1).contains(&b.tau) && (r.shift.0..=r.shift.1).contains(&b.shift)
            } else {
                b.tau == a.tau && b.shift == a.shift
            };
            within(b.r, a.r, r.impedance) && within(b.x, a.x, r.impedance) && within(b.b, a.b, r.impedance) && trafo
        });
        if !(buses && gens && branches) {
            failures += 1;
        }
    }
    failures
}

fn invariants() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let results = [
        ("permutation equivariance", equivariance(&mut rng)),
        ("line-graph brute force", line_graph_brute_force(&mut rng)),
        ("NRMSE scale invariance", nrmse_scale(&mut rng)),
        ("cosine range", cosine_range(&mut rng)),
        ("sampler ranges", sampler_ranges(&mut rng)),
    ];
    let pass = results.iter().all(|(_, f)| *f == 0);
    let parts: Vec<String> = results
        .iter()
        .map(|(name, f)| format!("{name} {}/{PROPERTY_CASES}", PROPERTY_CASES - f))
        .collect();
    Verdict::new(pass, parts.join(", "))
}
