//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers. Oracles here are written independently of the
//! library internals they check.

#![allow(clippy::needless_range_loop)]

use molfuse::cliff::{is_cliff, levenshtein, tanimoto, transfection_difference};
use molfuse::encoder::{
    make_mask_plan, pretrain_loss, Encoder3d, ModelDims, PretrainHeads, Structure3dInput,
};
use molfuse::fingerprint::{murcko_scaffold, BitFingerprint, FingerprintKind};
use molfuse::fusion::{hybrid_loss, TargetScaler};
use molfuse::pipeline::commands::{
    run_cliffs, run_embeddings, run_explain, run_predict, run_pretrain, run_split, run_train,
};
use molfuse::pipeline::metrics::spearman;
use molfuse::pipeline::{RunConfig, SplitMethod};
use molfuse::rng::SeedStream;
use molfuse::smiles::parse;
use molfuse::split::{
    adjusted_rand_index, cliff_split, scaffold_split, spectral_cluster, Partition, SplitInput,
};
use molfuse::tensor::{grad_check, Graph, ParamStore, Tensor};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("molfuse-acceptance-{}", std::process::id()));
    let path = dir.join(name);
    std::fs::create_dir_all(&path).unwrap();
    path
}

// ---------------------------------------------------------------------------
// criterion 1: selective scan vs naive recurrence
// ---------------------------------------------------------------------------

/// Straightforward per-step recurrence, written without reference to the
/// library implementation.
#[allow(clippy::needless_range_loop)]
fn scan_oracle(
    u: &[Vec<f64>],
    delta: &[Vec<f64>],
    b: &[Vec<f64>],
    c: &[Vec<f64>],
    a: &[Vec<f64>],
    skip: &[f64],
) -> Vec<Vec<f64>> {
    let (len, d, n) = (u.len(), u[0].len(), a[0].len());
    let mut state = vec![vec![0.0; n]; d];
    let mut out = vec![vec![0.0; d]; len];
    for t in 0..len {
        for ch in 0..d {
            let mut y = skip[ch] * u[t][ch];
            for s in 0..n {
                let decay = (delta[t][ch] * a[ch][s]).exp();
                state[ch][s] = decay * state[ch][s] + delta[t][ch] * b[t][s] * u[t][ch];
                y += c[t][s] * state[ch][s];
            }
            out[t][ch] = y;
        }
    }
    out
}

#[test]
fn acceptance_01_selective_scan_matches_naive_recurrence() {
    let started = Instant::now();
    let mut rng = SeedStream::new(101, "acc1");
    let mut worst = 0.0f64;
    for case in 0..200 {
        let len = 1 + rng.index(64);
        let d = 1 + rng.index(8);
        let n = 1 + rng.index(4);
        let mat = |rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut SeedStream| {
            (0..rows)
                .map(|_| (0..cols).map(|_| rng.uniform(lo, hi)).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        };
        let u = mat(len, d, -2.0, 2.0, &mut rng);
        let delta = match case % 4 {
            0 => mat(len, d, 1e-4, 3e-4, &mut rng),
            1 => mat(len, d, 5.0, 10.0, &mut rng),
            _ => mat(len, d, 0.005, 1.5, &mut rng),
        };
        let b = mat(len, n, -1.0, 1.0, &mut rng);
        let c = mat(len, n, -1.0, 1.0, &mut rng);
        let a = mat(d, n, -3.0, -0.05, &mut rng);
        let skip: Vec<f64> = (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let expected = scan_oracle(&u, &delta, &b, &c, &a, &skip);

        let flat = |m: &[Vec<f64>]| m.iter().flatten().copied().collect::<Vec<f64>>();
        let mut g = Graph::new();
        let uv = g.input(Tensor::matrix(len, d, flat(&u)));
        let dv = g.input(Tensor::matrix(len, d, flat(&delta)));
        let bv = g.input(Tensor::matrix(len, n, flat(&b)));
        let cv = g.input(Tensor::matrix(len, n, flat(&c)));
        let av = g.input(Tensor::matrix(d, n, flat(&a)));
        let sv = g.input(Tensor::row(skip));
        let y = g.selective_scan(uv, dv, bv, cv, av, sv);
        for t in 0..len {
            for ch in 0..d {
                worst = worst.max((g.value(y).at(t, ch) - expected[t][ch]).abs());
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(worst < 1e-10, "max abs diff {worst}");
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 1 PASS: selective scan matches naive recurrence on 200 configs \
         (max abs diff {worst:.2e}, {elapsed:?})"
    );
}

// ---------------------------------------------------------------------------
// criterion 2: gradient suite
// ---------------------------------------------------------------------------

#[test]
fn acceptance_02_gradient_suite() {
    let started = Instant::now();
    let mut rng = SeedStream::new(202, "acc2");
    let rand = |rows: usize, cols: usize, rng: &mut SeedStream| {
        Tensor::zeros(vec![rows, cols]).fill_with(|| rng.uniform(-1.0, 1.0))
    };

    // primitives at < 1e-4
    let mut store = ParamStore::new();
    let x = store.add("x", rand(3, 4, &mut rng));
    let w = store.add("w", rand(4, 3, &mut rng));
    let b = store.add("b", rand(1, 3, &mut rng));
    let kernel = store.add("kernel", rand(3, 4, &mut rng));
    let col = store.add("col", rand(3, 1, &mut rng));
    let target = rand(3, 3, &mut rng);

    type Build = Box<dyn Fn(&mut Graph, &ParamStore) -> molfuse::tensor::Var>;
    let t1 = target.clone();
    let t2 = target.clone();
    let t3 = target.clone();
    let t4 = target.clone();
    let t5 = target.clone();
    let t6 = target.clone();
    let t7 = target.clone();
    let cases: Vec<(&str, Build)> = vec![
        ("linear+mse", Box::new(move |g, s| {
            let (xv, wv, bv) = (g.param(s, x), g.param(s, w), g.param(s, b));
            let y = g.linear(xv, wv, bv);
            g.mse_loss(y, &t1)
        })),
        ("silu", Box::new(move |g, s| {
            let (xv, wv, bv) = (g.param(s, x), g.param(s, w), g.param(s, b));
            let y = g.linear(xv, wv, bv);
            let y = g.silu(y);
            g.mse_loss(y, &t2)
        })),
        ("softplus", Box::new(move |g, s| {
            let (xv, wv, bv) = (g.param(s, x), g.param(s, w), g.param(s, b));
            let y = g.linear(xv, wv, bv);
            let y = g.softplus(y);
            g.mse_loss(y, &t3)
        })),
        ("sigmoid", Box::new(move |g, s| {
            let (xv, wv, bv) = (g.param(s, x), g.param(s, w), g.param(s, b));
            let y = g.linear(xv, wv, bv);
            let y = g.sigmoid(y);
            g.mse_loss(y, &t4)
        })),
        ("tanh", Box::new(move |g, s| {
            let (xv, wv, bv) = (g.param(s, x), g.param(s, w), g.param(s, b));
            let y = g.linear(xv, wv, bv);
            let y = g.tanh(y);
            g.mse_loss(y, &t5)
        })),
        ("relu", Box::new(move |g, s| {
            let (xv, wv, bv) = (g.param(s, x), g.param(s, w), g.param(s, b));
            let y = g.linear(xv, wv, bv);
            let y = g.relu(y);
            g.mse_loss(y, &t6)
        })),
        ("softmax", Box::new(move |g, s| {
            let (xv, wv, bv) = (g.param(s, x), g.param(s, w), g.param(s, b));
            let y = g.linear(xv, wv, bv);
            let y = g.softmax_rows(y);
            g.mse_loss(y, &t7)
        })),
        ("cross-entropy", Box::new(move |g, s| {
            let (xv, wv, bv) = (g.param(s, x), g.param(s, w), g.param(s, b));
            let y = g.linear(xv, wv, bv);
            g.cross_entropy_loss(y, &[0, 2, 1])
        })),
        ("conv1d+smooth-l1", Box::new(move |g, s| {
            let (xv, kv) = (g.param(s, x), g.param(s, kernel));
            let y = g.conv1d_depthwise(xv, kv);
            g.smooth_l1_loss(y, &Tensor::zeros(vec![3, 4]))
        })),
        ("score-scaling", Box::new(move |g, s| {
            let (xv, sv) = (g.param(s, x), g.param(s, col));
            let y = g.mul_broadcast_col(xv, sv);
            let pooled = g.mean_rows(y);
            g.mse_loss(pooled, &Tensor::row(vec![0.1, -0.1, 0.2, -0.2]))
        })),
    ];
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for (name, build) in &cases {
        let err = grad_check(&mut store, &ids, build.as_ref(), 1e-3, 2000);
        assert!(err < 1e-4, "{name}: rel err {err}");
    }

    // full model hybrid loss at < 1e-3 on a dim-32 configuration; the
    // check runs at a well-conditioned point: unit-scale embeddings keep the
    // triplet distances far from the sqrt kink at zero, and a large margin
    // keeps every hinge term strictly active under the probe step
    let dims = ModelDims::micro();
    let vocab = molfuse::pipeline::TokenVocab::build(["CCO", "CCN", "OCC(C)N"], 100).unwrap();
    let mut model = molfuse::pipeline::FusionModel::new(&dims, vocab, 42);
    for name in ["enc3d.embed", "seq.embed"] {
        let id = model.store.lookup(name).unwrap();
        let mut scale_rng = SeedStream::new(99, name);
        model
            .store
            .get_mut(id)
            .tensor
            .data
            .iter_mut()
            .for_each(|v| *v = scale_rng.uniform(-1.0, 1.0));
    }
    model.scaler = Some(TargetScaler { min: -2.0, max: 2.0 });
    let molecules: Vec<_> = ["CCO", "CCN", "OCC(C)N"]
        .iter()
        .enumerate()
        .map(|(i, s)| {
            molfuse::pipeline::model::prepare_molecule(
                &format!("m{i}"),
                s,
                &model.vocab,
                None,
                7,
            )
            .unwrap()
        })
        .collect();
    let targets = Tensor::column(vec![0.4, -0.3, 0.1]);
    let ids = model.param_ids();
    let mut probe_store = model.store.clone();
    let model_ref = &model;
    let mols_ref = &molecules;
    let targets_ref = &targets;
    let err = grad_check(
        &mut probe_store,
        &ids,
        &move |g, store| {
            // forward with the perturbed store
            let mut patched = Vec::new();
            let mut pooled = Vec::new();
            for input in mols_ref {
                let z1 = model_ref.enc3d.encode(g, store, &input.structure);
                let z2 = model_ref
                    .seq
                    .encode(g, store, &input.token_ids)
                    .unwrap();
                let z2a =
                    molfuse::fusion::align(g, z2, &input.mask, input.graph.atoms.len()).unwrap();
                let (scores, fused) = model_ref.fusion.mol_attention(g, store, z1, z2a);
                let raw = model_ref.fusion.predict_raw(g, store, fused, scores);
                patched.push(raw);
                let p1 = g.mean_rows(z1);
                let p2 = g.mean_rows(z2a);
                pooled.push((p1, p2));
            }
            let preds = g.stack_rows(&patched);
            hybrid_loss(g, preds, targets_ref, &pooled, 10.0, 6.0).unwrap()
        },
        1e-4,
        6,
    );
    assert!(err < 1e-3, "end-to-end rel err {err}");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 2 PASS: primitives < 1e-4 and full hybrid loss < 1e-3 \
         (end-to-end rel err {err:.2e}, {elapsed:?})"
    );
}

// ---------------------------------------------------------------------------
// criteria 3 and 9 share one overfit training run
// ---------------------------------------------------------------------------

struct OverfitRun {
    train_mse: f64,
    elapsed_secs: f64,
    steps: usize,
    explanations: HashMap<String, Vec<(String, f64)>>,
    predictions: HashMap<String, f64>,
    truths: HashMap<String, f64>,
}

fn overfit_fixture() -> (String, String) {
    // 32 distinct molecules: one nitrogen atom determines the sign of the
    // label, chain length adds spread within each side
    let mut rows = String::from("id,smiles,efficiency,cell_line\n");
    let mut splits = String::from("id,partition\n");
    let mut idx = 0;
    let mut pairs = Vec::new();
    for length in 4..9 {
        for pos in 1..length {
            pairs.push((length, pos));
        }
    }
    for (i, (length, pos)) in pairs.into_iter().take(16).enumerate() {
        let smiles = format!("{}N{}", "C".repeat(pos), "C".repeat(length - pos));
        rows.push_str(&format!("s{idx:03},{smiles},{},synth\n", 0.5 + 0.1 * i as f64));
        splits.push_str(&format!("s{idx:03},train\n"));
        idx += 1;
    }
    for i in 0..16usize {
        let smiles = if i < 8 {
            "C".repeat(4 + i)
        } else {
            format!("{}O", "C".repeat(4 + i - 8))
        };
        rows.push_str(&format!(
            "s{idx:03},{smiles},{},synth\n",
            -0.5 - 0.1 * i as f64
        ));
        splits.push_str(&format!("s{idx:03},train\n"));
        idx += 1;
    }
    (rows, splits)
}

fn overfit_run() -> &'static OverfitRun {
    static RUN: OnceLock<OverfitRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = scratch_dir("overfit");
        let data = dir.join("data.csv");
        let splits = dir.join("splits.csv");
        let (rows, split_rows) = overfit_fixture();
        std::fs::write(&data, rows).unwrap();
        std::fs::write(&splits, split_rows).unwrap();

        // mini preset, epochs sized for exactly 2000 Adam steps (32/8 = 4
        // steps per epoch)
        let mut config = RunConfig::preset("mini").unwrap();
        config.seed = 1;
        config.epochs = 500;
        let started = Instant::now();
        let report = run_train(&config, &data, Some(&splits), None, &dir).unwrap();
        let elapsed_secs = started.elapsed().as_secs_f64();

        let ckpt = dir.join("checkpoint.bin");
        let explain_dir = scratch_dir("overfit-explain");
        run_explain(&ckpt, &data, &explain_dir, None).unwrap();
        let mut explanations: HashMap<String, Vec<(String, f64)>> = HashMap::new();
        let mut predictions = HashMap::new();
        let content = std::fs::read_to_string(explain_dir.join("explanations.csv")).unwrap();
        for line in content.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            explanations
                .entry(f[0].to_string())
                .or_default()
                .push((f[2].to_string(), f[3].parse().unwrap()));
            predictions.insert(f[0].to_string(), f[4].parse().unwrap());
        }
        let truths = std::fs::read_to_string(&data)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].to_string(), f[2].parse().unwrap())
            })
            .collect();

        OverfitRun {
            train_mse: report.train.mse,
            elapsed_secs,
            steps: report.steps,
            explanations,
            predictions,
            truths,
        }
    })
}

#[test]
fn acceptance_03_overfit_32_molecules() {
    let run = overfit_run();
    assert_eq!(run.steps, 2000);
    assert!(run.train_mse < 0.05, "train MSE {}", run.train_mse);
    assert!(
        run.elapsed_secs < 300.0,
        "training took {:.1}s",
        run.elapsed_secs
    );
    println!(
        "ACCEPTANCE 3 PASS: 32-molecule overfit reached train MSE {:.4} in {} steps \
         ({:.1}s single-core)",
        run.train_mse, run.steps, run.elapsed_secs
    );
}

// ---------------------------------------------------------------------------
// criterion 4: cliff gate arithmetic
// ---------------------------------------------------------------------------

#[test]
fn acceptance_04_cliff_gate_arithmetic() {
    // |m2 - m1| > 1/log10(2) in log2 units is equivalent to a difference
    // above one power of ten
    let threshold = 1.0 / std::f64::consts::LOG10_2;
    // 1/log10(2) is log2(10), roughly 3.3219 in log2 units
    assert!((threshold - std::f64::consts::LOG2_10).abs() < 1e-12);
    assert!((transfection_difference(0.0, threshold) - 1.0).abs() < 1e-12);
    for delta in [1e-9, 1e-3, 1.0] {
        assert!(transfection_difference(0.0, threshold + delta) > 1.0);
        assert!(transfection_difference(0.0, threshold - delta) < 1.0);
    }
    assert!(is_cliff(0.91, 1.69), "reported cliff case must pass the gate");
    assert!(!is_cliff(0.89, 1.69), "similarity 0.89 fails the gate");
    assert!(!is_cliff(0.89, 5.0));
    println!(
        "ACCEPTANCE 4 PASS: cliff threshold |m2-m1| > {threshold:.12} verified; \
         (0.91, 1.69) is a cliff, 0.89 similarity is not"
    );
}

// ---------------------------------------------------------------------------
// criterion 5: similarity oracles
// ---------------------------------------------------------------------------

/// Full-matrix quadratic DP, independent of the library implementation.
fn levenshtein_oracle(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        dp[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = dp[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            dp[i][j] = sub.min(dp[i - 1][j] + 1).min(dp[i][j - 1] + 1);
        }
    }
    dp[a.len()][b.len()]
}

#[test]
fn acceptance_05_similarity_oracles() {
    let mut rng = SeedStream::new(505, "acc5");
    let alphabet: Vec<char> = "CNOPS()=#123cno[]+-".chars().collect();
    for _ in 0..1000 {
        let make = |rng: &mut SeedStream| {
            let len = rng.index(41);
            (0..len)
                .map(|_| alphabet[rng.index(alphabet.len())])
                .collect::<String>()
        };
        let a = make(&mut rng);
        let b = make(&mut rng);
        assert_eq!(levenshtein(&a, &b), levenshtein_oracle(&a, &b), "{a:?} vs {b:?}");
    }

    for _ in 0..1000 {
        let fp = |rng: &mut SeedStream| {
            let mut f = BitFingerprint::zeros(FingerprintKind::Circular, 128);
            for i in 0..128 {
                if rng.next_f64() < 0.25 {
                    f.set(i);
                }
            }
            f
        };
        let fa = fp(&mut rng);
        let fb = fp(&mut rng);
        // bitwise oracle
        let mut a_count = 0.0;
        let mut b_count = 0.0;
        let mut common = 0.0;
        for i in 0..128 {
            if fa.get(i) {
                a_count += 1.0;
            }
            if fb.get(i) {
                b_count += 1.0;
            }
            if fa.get(i) && fb.get(i) {
                common += 1.0;
            }
        }
        let expected = if a_count + b_count - common == 0.0 {
            1.0
        } else {
            common / (a_count + b_count - common)
        };
        assert_eq!(tanimoto(&fa, &fb).unwrap(), expected);
    }
    println!(
        "ACCEPTANCE 5 PASS: Levenshtein matches quadratic DP and Tanimoto matches \
         brute-force bit counting on 1000 random pairs each (exact equality)"
    );
}

// ---------------------------------------------------------------------------
// criterion 6: split properties
// ---------------------------------------------------------------------------

fn scaffold_families() -> Vec<&'static str> {
    vec![
        "C1CC1", "C1CCC1", "C1CCCC1", "C1CCCCC1", "C1CCCCCC1", "C1CCCCCCC1", "C1CCNCC1",
        "C1CCOCC1", "C1CCNC1", "C1CCOC1", "c1ccccc1", "c1ccncc1", "c1ccoc1", "C1CC1CC2CC2",
        "C1CCCCC1C2CCCCC2", "c1ccccc1C2CC2",
    ]
}

#[test]
fn acceptance_06_split_properties() {
    // scaffold split: purity, near-target sizes, determinism
    for seed in 0..50u64 {
        let mut rng = SeedStream::new(seed, "acc6-data");
        let families = scaffold_families();
        let mut dataset = Vec::new();
        for (f, family) in families.iter().enumerate() {
            let copies = 1 + rng.index(3);
            for c in 0..copies {
                // distinct side chains, same scaffold
                let side = "C".repeat(1 + (c + f) % 4);
                dataset.push(SplitInput {
                    id: format!("d{seed}-{f}-{c}"),
                    smiles: format!("{side}{family}"),
                });
            }
        }
        let n = dataset.len() as f64;
        let split = scaffold_split(&dataset, (0.8, 0.1, 0.1), seed).unwrap();
        let again = scaffold_split(&dataset, (0.8, 0.1, 0.1), seed).unwrap();
        assert_eq!(split, again, "seed {seed} not reproducible");

        let mut keys: HashMap<&str, std::collections::HashSet<String>> = HashMap::new();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for (rec, a) in dataset.iter().zip(&split) {
            let key = murcko_scaffold(&parse(&rec.smiles).unwrap()).smiles_like_key;
            keys.entry(a.partition.as_str()).or_default().insert(key);
            *counts.entry(a.partition.as_str()).or_default() += 1;
        }
        let empty = std::collections::HashSet::new();
        let train = keys.get("train").unwrap_or(&empty);
        let val = keys.get("val").unwrap_or(&empty);
        let test = keys.get("test").unwrap_or(&empty);
        assert!(train.is_disjoint(test), "seed {seed}: scaffold leaks into test");
        assert!(train.is_disjoint(val), "seed {seed}: scaffold leaks into val");
        assert!(val.is_disjoint(test), "seed {seed}");
        for (p, ratio) in [("train", 0.8), ("val", 0.1), ("test", 0.1)] {
            let got = *counts.get(p).unwrap_or(&0) as f64;
            assert!(
                (got - ratio * n).abs() <= 2.0,
                "seed {seed}: partition {p} has {got}, target {}",
                ratio * n
            );
        }
    }

    // cliff split: per-cluster quota within one molecule of 10%
    let mut dataset = Vec::new();
    for i in 0..100usize {
        let family = scaffold_families()[i % 5];
        dataset.push(SplitInput {
            id: format!("c{i:03}"),
            smiles: format!("{}{}", "C".repeat(1 + i % 6), family),
        });
    }
    let outcome = cliff_split(&dataset, 5, 99).unwrap();
    let again = cliff_split(&dataset, 5, 99).unwrap();
    assert_eq!(outcome, again, "cliff split not reproducible");
    let mut cluster_sizes = [0usize; 5];
    let mut cluster_tests = [0usize; 5];
    for (label, a) in outcome.clusters.iter().zip(&outcome.assignments) {
        cluster_sizes[label.cluster] += 1;
        if a.partition == Partition::Test {
            cluster_tests[label.cluster] += 1;
        }
    }
    for c in 0..5 {
        let quota = 0.10 * cluster_sizes[c] as f64;
        assert!(
            (cluster_tests[c] as f64 - quota).abs() <= 1.0,
            "cluster {c}: {} test of {} (quota {quota})",
            cluster_tests[c],
            cluster_sizes[c]
        );
    }
    println!(
        "ACCEPTANCE 6 PASS: scaffold purity and sizes within +/-2 on 50 datasets; \
         cliff split test quota within +/-1 per cluster; both seed-reproducible"
    );
}

// ---------------------------------------------------------------------------
// criterion 7: spectral clustering sanity
// ---------------------------------------------------------------------------

#[test]
fn acceptance_07_spectral_clustering_sanity() {
    // two perfect blocks
    let mut fingerprints = Vec::new();
    for i in 0..12 {
        let mut f = BitFingerprint::zeros(FingerprintKind::Circular, 64);
        if i < 6 {
            f.set(1);
            f.set(2);
            f.set(3);
        } else {
            f.set(40);
            f.set(41);
        }
        fingerprints.push(f);
    }
    let labels = spectral_cluster(&fingerprints, 2, 7).unwrap();
    let got: Vec<usize> = labels.iter().map(|l| l.cluster).collect();
    let truth: Vec<usize> = (0..12).map(|i| usize::from(i >= 6)).collect();
    let ari = adjusted_rand_index(&got, &truth);
    assert_eq!(ari, 1.0, "two-block affinity must be recovered exactly");

    // k=5 on 200 synthetic molecules within 30 s
    let started = Instant::now();
    let families = scaffold_families();
    let dataset: Vec<SplitInput> = (0..200)
        .map(|i| SplitInput {
            id: format!("m{i:03}"),
            smiles: format!("{}{}", "C".repeat(1 + i % 8), families[i % families.len()]),
        })
        .collect();
    let outcome = cliff_split(&dataset, 5, 3).unwrap();
    assert_eq!(outcome.assignments.len(), 200);
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 7 PASS: two-block ARI = 1.0; k=5 on 200 molecules in {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// criterion 8: masking contract and loss weights
// ---------------------------------------------------------------------------

#[test]
fn acceptance_08_masking_contract_and_loss_weights() {
    let mut rng = SeedStream::new(808, "acc8");
    for n in 1..=40usize {
        let plan = make_mask_plan(n, 0.15, &mut rng);
        let expected = ((0.15 * n as f64).round() as usize).max(1);
        assert_eq!(plan.masked.len(), expected, "n = {n}");
    }

    // observe the 1/5/10 weights by zeroing heads one at a time
    let dims = ModelDims::micro();
    let mut store = ParamStore::new();
    let mut init = SeedStream::new(809, "acc8-init");
    let encoder = Encoder3d::new(&mut store, &dims, &mut init, "enc3d");
    let heads = PretrainHeads::new(&mut store, &dims, &mut init, "heads");
    let graph_src = parse("CCOCCN").unwrap();
    let coords: Vec<[f64; 3]> = (0..graph_src.atoms.len())
        .map(|i| [i as f64 * 1.5, 0.3 * i as f64, 0.0])
        .collect();
    let input = Structure3dInput::from_graph(&graph_src, &coords).unwrap();
    let plan = make_mask_plan(input.atom_count(), 0.15, &mut rng);

    let components = |store: &ParamStore| {
        let mut g = Graph::new();
        let loss = pretrain_loss(&encoder, &heads, &mut g, store, &input, &plan);
        (
            g.value(loss.total).item(),
            g.value(loss.type_loss).item(),
            g.value(loss.coord_loss).item(),
            g.value(loss.dist_loss).item(),
        )
    };

    let (total, t, c, d) = components(&store);
    assert!(
        (total - (t + 5.0 * c + 10.0 * d)).abs() < 1e-12,
        "total {total} != 1*{t} + 5*{c} + 10*{d}"
    );

    // zero the type head: logits vanish, so the type component becomes the
    // uniform cross entropy ln(30) and the total moves by exactly 1x
    let mut zeroed = store.clone();
    for name in ["heads.type_w", "heads.type_b"] {
        let id = zeroed.lookup(name).unwrap();
        zeroed.get_mut(id).tensor.data.iter_mut().for_each(|v| *v = 0.0);
    }
    let (total_z, t_z, c_z, d_z) = components(&zeroed);
    assert!((t_z - 30f64.ln()).abs() < 1e-12, "zeroed type head: {t_z}");
    assert_eq!(c, c_z);
    assert_eq!(d, d_z);
    assert!(((total_z - total) - (t_z - t)).abs() < 1e-12, "weight of type loss is 1");

    // zero the coordinate head: its component is smooth L1 against zeros
    let mut zeroed = store.clone();
    for name in ["heads.coord_w", "heads.coord_b"] {
        let id = zeroed.lookup(name).unwrap();
        zeroed.get_mut(id).tensor.data.iter_mut().for_each(|v| *v = 0.0);
    }
    let (total_z, _, c_z, _) = components(&zeroed);
    let expected_c: f64 = plan
        .masked
        .iter()
        .flat_map(|&i| input.coords[i])
        .map(|v: f64| {
            if v.abs() < 1.0 {
                0.5 * v * v
            } else {
                v.abs() - 0.5
            }
        })
        .sum::<f64>()
        / (3 * plan.masked.len()) as f64;
    assert!((c_z - expected_c).abs() < 1e-12);
    assert!(
        ((total_z - total) - 5.0 * (c_z - c)).abs() < 1e-12,
        "weight of coordinate loss is 5"
    );

    // zero the pair head: distances predict as zero
    let mut zeroed = store.clone();
    for name in ["heads.pair_w", "heads.pair_b"] {
        let id = zeroed.lookup(name).unwrap();
        zeroed.get_mut(id).tensor.data.iter_mut().for_each(|v| *v = 0.0);
    }
    let (total_z, _, _, d_z) = components(&zeroed);
    let n = input.atom_count();
    let masked: std::collections::HashSet<usize> = plan.masked.iter().copied().collect();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i != j && (masked.contains(&i) || masked.contains(&j)) {
                let v = input.dist[i * n + j];
                sum += if v.abs() < 1.0 { 0.5 * v * v } else { v.abs() - 0.5 };
                count += 1;
            }
        }
    }
    let expected_d = sum / count as f64;
    assert!((d_z - expected_d).abs() < 1e-12);
    assert!(
        ((total_z - total) - 10.0 * (d_z - d)).abs() < 1e-12,
        "weight of distance loss is 10"
    );

    println!(
        "ACCEPTANCE 8 PASS: masks are round(0.15 n) with a floor of 1 for n in 1..=40; \
         loss weights observed as 1/5/10 by zeroing heads"
    );
}

// ---------------------------------------------------------------------------
// criterion 9: explanation contract
// ---------------------------------------------------------------------------

#[test]
fn acceptance_09_explanation_contract() {
    let run = overfit_run();
    let mut n_molecules = 0usize;
    let mut n_hits = 0usize;
    for (id, atoms) in &run.explanations {
        let fixture = overfit_fixture().0;
        let smiles = fixture
            .lines()
            .skip(1)
            .find(|l| l.starts_with(id.as_str()))
            .unwrap()
            .split(',')
            .nth(1)
            .unwrap();
        let expected_atoms = parse(smiles).unwrap().atoms.len();
        assert_eq!(atoms.len(), expected_atoms, "{id}: row count != atom count");
        for (_, score) in atoms {
            assert!(*score > 0.0 && *score < 1.0, "{id}: score {score} outside (0,1)");
        }
        if atoms.iter().any(|(el, _)| el == "N") {
            n_molecules += 1;
            let best = atoms
                .iter()
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            if best.0 == "N" {
                n_hits += 1;
            }
        }
    }
    assert_eq!(n_molecules, 16);
    let fraction = n_hits as f64 / n_molecules as f64;
    assert!(
        fraction >= 0.8,
        "label-determining atom is the top score in only {n_hits}/{n_molecules}"
    );
    println!(
        "ACCEPTANCE 9 PASS: scores in (0,1), one row per atom, and the label-determining \
         atom has the top score in {n_hits}/{n_molecules} molecules"
    );
}

// ---------------------------------------------------------------------------
// criterion 10: end-to-end smoke with byte-identical rerun
// ---------------------------------------------------------------------------

fn e2e_fixture() -> String {
    let heads = ["CCN(C)C", "CCN(CC)CC", "OCCN(C)C", "C1CCNCC1", "c1ccncc1"];
    let tails = ["CCCCCC", "CCCCCCC", "CCCCCCCC", "CCCCCCCCC"];
    let mut rows = String::from("id,smiles,efficiency,cell_line\n");
    let mut rng = SeedStream::new(1000, "e2e-labels");
    for i in 0..100usize {
        let smiles = format!("{}OC(=O){}", tails[i % tails.len()], heads[(i / 4) % heads.len()]);
        let label = rng.uniform(-4.0, 4.0);
        rows.push_str(&format!("e{i:03},{smiles},{label},hela\n"));
    }
    rows
}

fn run_all_commands(dir: &Path, data: &Path) {
    let mut config = RunConfig::preset("mini").unwrap();
    config.seed = 11;
    config.dims = ModelDims::micro();
    config.epochs = 1;
    config.batch_size = 16;
    config.split_method = SplitMethod::Cliff;

    run_cliffs(data, &dir.join("cliffs.csv"), 2, 2048).unwrap();
    run_split(SplitMethod::Cliff, &config, data, &dir.join("splits.csv")).unwrap();
    let pretrain_dir = dir.join("pretrain");
    run_pretrain(&config, data, &pretrain_dir, None).unwrap();
    let train_dir = dir.join("train");
    let mut train_config = config.clone();
    train_config.epochs = 2;
    run_train(
        &train_config,
        data,
        Some(&dir.join("splits.csv")),
        Some(&pretrain_dir.join("checkpoint.bin")),
        &train_dir,
    )
    .unwrap();
    let ckpt = train_dir.join("checkpoint.bin");
    run_predict(&ckpt, data, &dir.join("predict"), None).unwrap();
    run_explain(&ckpt, data, &dir.join("explain"), None).unwrap();
    run_embeddings(&ckpt, data, &dir.join("embeddings"), None).unwrap();
}

fn artifact_files(dir: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().unwrap() != "manifest.json" {
                // manifests embed absolute input paths, which differ between
                // the two run directories by construction
                files.push(path);
            }
        }
    }
    files.sort();
    files
}

#[test]
fn acceptance_10_end_to_end_smoke_and_reproducibility() {
    let base = scratch_dir("e2e");
    let data = base.join("fixture100.csv");
    std::fs::write(&data, e2e_fixture()).unwrap();

    let run1 = base.join("run1");
    let run2 = base.join("run2");
    run_all_commands(&run1, &data);
    run_all_commands(&run2, &data);

    let files1 = artifact_files(&run1);
    let files2 = artifact_files(&run2);
    let rel = |files: &[PathBuf], root: &Path| -> Vec<PathBuf> {
        files
            .iter()
            .map(|f| f.strip_prefix(root).unwrap().to_path_buf())
            .collect()
    };
    assert_eq!(rel(&files1, &run1), rel(&files2, &run2), "artifact sets differ");
    assert!(files1.len() >= 8, "expected the full artifact set, got {files1:?}");
    for (f1, f2) in files1.iter().zip(&files2) {
        let b1 = std::fs::read(f1).unwrap();
        let b2 = std::fs::read(f2).unwrap();
        assert_eq!(b1, b2, "artifact differs between reruns: {f1:?}");
    }

    // the cliff report carries the published counts as a reference
    let report = run_cliffs(&data, &base.join("cliffs-again.csv"), 2, 2048).unwrap();
    assert_eq!(report.reference_pairs_hela, 4267);
    assert_eq!(report.reference_pairs_raw, 2104);

    println!(
        "ACCEPTANCE 10 PASS: cliffs/split/pretrain/train/predict/explain/embeddings all \
         succeed on a 100-molecule fixture and rerun byte-identically \
         ({} artifacts compared; mined {} pairs vs published 4267/2104 reference)",
        files1.len(),
        report.pairs
    );
}

// ---------------------------------------------------------------------------
// criterion 11: external ordering harness
// ---------------------------------------------------------------------------

#[test]
fn acceptance_11_external_ordering_harness() {
    // the rank harness itself on monotone fixtures
    assert_eq!(spearman(&[0.1, 0.2, 0.3], &[1.0, 2.0, 3.0]), Some(1.0));
    assert_eq!(spearman(&[0.1, 10.0, 9999.0], &[1.0, 2.0, 3.0]), Some(1.0));
    assert_eq!(spearman(&[3.0, 2.0, 1.0], &[1.0, 2.0, 3.0]), Some(-1.0));

    // the predict report emits the same consistency number that the
    // emitted predictions imply
    let run = overfit_run();
    let ids: Vec<&String> = run.predictions.keys().collect();
    let preds: Vec<f64> = ids.iter().map(|id| run.predictions[*id]).collect();
    let truths: Vec<f64> = ids.iter().map(|id| run.truths[*id]).collect();
    let rank = spearman(&preds, &truths).unwrap();
    assert!(
        rank > 0.95,
        "overfit model should order its training set (spearman {rank})"
    );
    println!(
        "ACCEPTANCE 11 PASS: Spearman 1.0 on monotone fixtures; overfit-model ordering \
         consistency {rank:.4} on its training set"
    );
}
