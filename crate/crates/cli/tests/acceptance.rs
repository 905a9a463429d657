//! Acceptance suite: eight end-to-end criteria, one PASS/FAIL line each.
//!
//! Run with `cargo test -p decstack-cli --test acceptance -- --nocapture`
//! to see the report. Every criterion runs even if an earlier one fails;
//! the test fails at the end if any line is FAIL.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::time::{Duration, Instant};

use common::{run, xor_workspace};
use decstack_core::engine::{Decision, EngineSpec};
use decstack_core::fixtures::{self, H1, H2};
use decstack_core::mlp::{Activation, MlpSpec};
use decstack_core::train::{train_pool, PoolPlan};
use decstack_core::{
    causal_test, extract_engram, greedy_shrink, minimal_flip_subset_exhaustive, AblationMask, ActivationTrace,
    DecisionStack, Engram, EngramStrategy, JsonlTraceStore, ModelSpec, NodeId, PoolConfig, TraceFilter, TraceStore,
    Verdict,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let detail = f()?;
    let elapsed = start.elapsed();
    ensure!(elapsed < limit, "{detail}; took {elapsed:.2?}, limit {limit:?}");
    Ok(format!("{detail} ({elapsed:.2?})"))
}

fn rand_vec(r: &mut StdRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-scale..scale)).collect()
}

fn rand_matrix(r: &mut StdRng, rows: usize, cols: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..rows).map(|_| rand_vec(r, cols, scale)).collect()
}

fn random_mlp(r: &mut StdRng, sizes: &[usize]) -> MlpSpec {
    MlpSpec {
        layer_sizes: sizes.to_vec(),
        activations: (0..sizes.len() - 2)
            .map(|_| if r.gen_bool(0.7) { Activation::Relu } else { Activation::Identity })
            .collect(),
        weights: sizes.windows(2).map(|w| rand_matrix(r, w[1], w[0], 1.0)).collect(),
        biases: sizes[1..].iter().map(|&n| rand_vec(r, n, 0.5)).collect(),
    }
}

fn random_pool(r: &mut StdRng, dim: usize, hidden: usize, classes: usize, k: Option<usize>) -> PoolConfig {
    let mut models = vec![ModelSpec::Mlp(random_mlp(r, &[dim, hidden, classes]))];
    if let Some(k) = k {
        models.push(ModelSpec::Kmeans(decstack_core::kmeans::KMeansSpec {
            centroids: rand_matrix(r, k, dim, 1.0),
        }));
    }
    let width = classes + k.unwrap_or(0);
    PoolConfig {
        models,
        engine: EngineSpec {
            weights: rand_matrix(r, classes, width, 2.0),
            biases: rand_vec(r, classes, 1.0),
        },
        seed: r.gen(),
    }
}

fn label(stack: &DecisionStack, x: &[f64], mask: &AblationMask) -> usize {
    stack.replay(x, mask).unwrap().label
}

fn mask_of(ids: &[NodeId]) -> AblationMask {
    ids.iter().copied().collect()
}

fn criterion_1() -> Outcome {
    timed(Duration::from_secs(1), || {
        let stack = DecisionStack::new(fixtures::xor_pool()).map_err(|e| e.to_string())?;
        let (_, trace) = stack.decide(&[1.0, 0.0], &AblationMask::empty()).unwrap();
        let engram = |ids: &[NodeId]| Engram {
            nodes: mask_of(ids),
            strategy: EngramStrategy::default(),
            decision_id: trace.decision_id.clone(),
        };
        let h1 = causal_test(&stack, &[1.0, 0.0], &engram(&[H1]), 20, 0).unwrap();
        ensure!(h1.verdict == Verdict::Causal, "{{h1}} verdict {:?}", h1.verdict);
        ensure!(
            h1.original.label == 1 && h1.ablated.label == 0,
            "{{h1}} labels {} -> {}",
            h1.original.label,
            h1.ablated.label
        );
        let h2 = causal_test(&stack, &[1.0, 0.0], &engram(&[H2]), 20, 0).unwrap();
        ensure!(h2.verdict == Verdict::NonCausal, "{{h2}} verdict {:?}", h2.verdict);

        // The same two verdicts through the command-line front end.
        let dir = tempfile::tempdir().unwrap();
        let config = xor_workspace(dir.path());
        let c = config.to_str().unwrap();
        for (node, expected) in [(H1, "CAUSAL"), (H2, "NON_CAUSAL")] {
            let id = node.to_string();
            let out = run(&["explain", "--config", c, "--input", "1,0", "--engram", &id]);
            ensure!(out.code == 0, "explain --engram {id} exited {}: {}", out.code, out.stderr);
            ensure!(out.json()["verdict"] == expected, "explain --engram {id}: {}", out.stdout);
        }
        Ok("{h1} CAUSAL 1 -> 0, {h2} NON_CAUSAL".into())
    })
}

/// Forward pass and loss written independently of the library.
fn reference_loss(net: &MlpSpec, xs: &[Vec<f64>], ts: &[Vec<f64>]) -> f64 {
    let last = net.weights.len() - 1;
    let mut total = 0.0;
    for (x, t) in xs.iter().zip(ts) {
        let mut a = x.clone();
        for (l, (w, b)) in net.weights.iter().zip(&net.biases).enumerate() {
            a = w
                .iter()
                .zip(b)
                .map(|(row, bias)| {
                    let z = row.iter().zip(&a).map(|(p, q)| p * q).sum::<f64>() + bias;
                    if l < last && net.activations[l] == Activation::Relu {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
        }
        total += 0.5 * a.iter().zip(t).map(|(y, t)| (y - t).powi(2)).sum::<f64>();
    }
    total / xs.len() as f64
}

fn criterion_2() -> Outcome {
    const STEP: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    timed(Duration::from_secs(10), || {
        let mut r = StdRng::seed_from_u64(2);
        let mut worst: f64 = 0.0;
        let mut params = 0;
        let nets = 25;
        for n in 0..nets {
            let depth = r.gen_range(1..=3);
            let sizes: Vec<usize> = (0..=depth).map(|_| r.gen_range(1..=8)).collect();
            let net = random_mlp(&mut r, &sizes);
            let batch = r.gen_range(1..=4);
            let xs: Vec<Vec<f64>> = (0..batch).map(|_| rand_vec(&mut r, sizes[0], 1.0)).collect();
            let ts: Vec<Vec<f64>> = (0..batch).map(|_| rand_vec(&mut r, sizes[depth], 1.0)).collect();
            let grad = net.gradient(&xs, &ts).map_err(|e| e.to_string())?;
            let numeric = |perturb: &dyn Fn(&mut MlpSpec, f64)| {
                let mut plus = net.clone();
                perturb(&mut plus, STEP);
                let mut minus = net.clone();
                perturb(&mut minus, -STEP);
                (reference_loss(&plus, &xs, &ts) - reference_loss(&minus, &xs, &ts)) / (2.0 * STEP)
            };
            let rel = |a: f64, b: f64| (a - b).abs() / (a.abs() + b.abs()).max(1e-8);
            for l in 0..net.weights.len() {
                for i in 0..net.weights[l].len() {
                    for j in 0..net.weights[l][i].len() {
                        let e = rel(grad.weights[l][i][j], numeric(&|m, h| m.weights[l][i][j] += h));
                        ensure!(e < TOL, "net {n} {sizes:?}: weight [{l}][{i}][{j}] rel err {e:e}");
                        worst = worst.max(e);
                        params += 1;
                    }
                    let e = rel(grad.biases[l][i], numeric(&|m, h| m.biases[l][i] += h));
                    ensure!(e < TOL, "net {n} {sizes:?}: bias [{l}][{i}] rel err {e:e}");
                    worst = worst.max(e);
                    params += 1;
                }
            }
        }
        Ok(format!("{nets} nets, {params} parameters, max rel err {worst:.2e}"))
    })
}

fn criterion_3() -> Outcome {
    timed(Duration::from_secs(10), || {
        let mut r = StdRng::seed_from_u64(3);
        let pairs = 150;
        let mut silent = 0;
        for p in 0..pairs {
            let dim = r.gen_range(1..=4);
            let classes = r.gen_range(2..=4);
            let k = if r.gen_bool(0.5) { Some(r.gen_range(1..=4)) } else { None };
            let hidden = r.gen_range(1..=8);
            let stack = DecisionStack::new(random_pool(&mut r, dim, hidden, classes, k)).unwrap();
            let x = rand_vec(&mut r, dim, 2.0);
            let (base, trace) = stack.decide(&x, &AblationMask::empty()).unwrap();
            let direct = decstack_core::pool_decide(stack.config(), &x, &AblationMask::empty()).unwrap().0;
            ensure!(
                base.bit_eq(&direct) && base.bit_eq(&stack.replay(&x, &AblationMask::empty()).unwrap()),
                "pair {p}: empty-mask replay differs"
            );
            let quiet: Vec<NodeId> = stack.registry().ablatable().filter(|id| trace.records[id] == 0.0).collect();
            for id in &quiet {
                let d = stack.replay(&x, &mask_of(&[*id])).unwrap();
                ensure!(d.bit_eq(&base), "pair {p}: ablating silent node {id} changed the decision");
                silent += 1;
            }
            if !quiet.is_empty() {
                let d = stack.replay(&x, &mask_of(&quiet)).unwrap();
                ensure!(d.bit_eq(&base), "pair {p}: ablating all silent nodes changed the decision");
            }
        }
        Ok(format!("{pairs} pairs, {silent} silent-node ablations, all bit-identical"))
    })
}

fn criterion_4() -> Outcome {
    timed(Duration::from_secs(60), || {
        let mut r = StdRng::seed_from_u64(4);
        let mut checked = 0;
        let mut attempts = 0;
        let mut strictly_larger = 0;
        while checked < 60 {
            attempts += 1;
            ensure!(attempts < 5000, "only {checked} flipping nets found in {attempts} attempts");
            // hidden + 2 outputs + k centroids + (2 + k) engine slots <= 12
            let k = if r.gen_bool(0.5) { Some(r.gen_range(1..=2)) } else { None };
            let hidden = r.gen_range(1..=8 - 2 * k.unwrap_or(0));
            let stack = DecisionStack::new(random_pool(&mut r, 2, hidden, 2, k)).unwrap();
            let all: AblationMask = stack.registry().ablatable().collect();
            ensure!(all.len() <= 12, "net with {} ablatable nodes", all.len());
            let x = rand_vec(&mut r, 2, 2.0);
            let base = label(&stack, &x, &AblationMask::empty());
            let engram = Engram {
                nodes: all.clone(),
                strategy: EngramStrategy::default(),
                decision_id: String::new(),
            };
            let shrunk = greedy_shrink(&stack, &x, &engram).unwrap();
            if !shrunk.flips {
                continue;
            }
            ensure!(label(&stack, &x, &shrunk.nodes) != base, "net {checked}: greedy subset does not flip");
            for id in &shrunk.nodes {
                let mut smaller = shrunk.nodes.clone();
                smaller.remove(id);
                ensure!(
                    label(&stack, &x, &smaller) == base,
                    "net {checked}: greedy subset is not 1-minimal (drop {id})"
                );
            }
            let exact = minimal_flip_subset_exhaustive(&stack, &x, &all, all.len())
                .unwrap()
                .ok_or_else(|| format!("net {checked}: exhaustive search found nothing"))?;
            ensure!(label(&stack, &x, &exact) != base, "net {checked}: exhaustive subset does not flip");
            ensure!(
                shrunk.nodes.len() >= exact.len(),
                "net {checked}: greedy {} < exhaustive {}",
                shrunk.nodes.len(),
                exact.len()
            );
            strictly_larger += (shrunk.nodes.len() > exact.len()) as usize;
            checked += 1;
        }
        Ok(format!(
            "{checked} flipping nets, greedy 1-minimal and >= exhaustive (strictly larger on {strictly_larger})"
        ))
    })
}

fn blobs(seed: u64, per_class: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut r = StdRng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let centres = [[-1.5, -1.5], [1.5, 1.5]];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for _ in 0..per_class {
        for (class, c) in centres.iter().enumerate() {
            xs.push(vec![c[0] + noise.sample(&mut r), c[1] + noise.sample(&mut r)]);
            ys.push(class);
        }
    }
    (xs, ys)
}

fn blob_csv(xs: &[Vec<f64>], ys: &[usize]) -> String {
    let mut s = String::from("x1,x2,label\n");
    for (x, y) in xs.iter().zip(ys) {
        s += &format!("{},{},{}\n", x[0], x[1], y);
    }
    s
}

const BLOB_PLAN: &str = r#"{"models": [{"type": "mlp", "hidden": [8], "learning_rate": 0.05, "epochs": 200, "batch_size": 16},
                                       {"type": "kmeans", "k": 4}],
                            "engine": {"learning_rate": 0.5, "epochs": 300}}"#;

fn criterion_5() -> Outcome {
    timed(Duration::from_secs(5), || {
        let dir = tempfile::tempdir().unwrap();
        let (xs, ys) = blobs(5, 40);
        fs::write(dir.path().join("blobs.csv"), blob_csv(&xs, &ys)).unwrap();
        let config = dir.path().join("run.json");
        fs::write(
            &config,
            format!(
                r#"{{"dataset": "blobs.csv", "pool": {BLOB_PLAN}, "seed": 11, "num_controls": 20,
                    "paths": {{"model": "model.json"}}}}"#
            ),
        )
        .unwrap();
        let c = config.to_str().unwrap();
        let train = run(&["train", "--config", c]);
        ensure!(train.code == 0, "train exited {}: {}", train.code, train.stderr);

        let mut reports = Vec::new();
        for n in 0..2 {
            let report = dir.path().join(format!("report{n}.json"));
            let store = dir.path().join(format!("traces{n}.jsonl"));
            let out = run(&[
                "explain",
                "--config",
                c,
                "--input",
                "1.25,-0.5",
                "--report",
                report.to_str().unwrap(),
                "--store",
                store.to_str().unwrap(),
            ]);
            ensure!(out.code == 0, "explain run {n} exited {}: {}", out.code, out.stderr);
            reports.push(fs::read(&report).unwrap());
        }
        ensure!(reports[0] == reports[1], "report files differ");
        Ok(format!("two explain runs wrote identical {}-byte reports", reports[0].len()))
    })
}

fn criterion_6() -> Outcome {
    timed(Duration::from_secs(60), || {
        let (xs, ys) = blobs(6, 150);
        let plan: PoolPlan = serde_json::from_str(BLOB_PLAN).unwrap();
        let stack = DecisionStack::new(train_pool(&xs, &ys, &plan, 17).map_err(|e| e.to_string())?).unwrap();
        let correct: Vec<usize> = (0..xs.len())
            .filter(|&i| label(&stack, &xs[i], &AblationMask::empty()) == ys[i])
            .collect();
        let accuracy = correct.len() as f64 / xs.len() as f64;
        ensure!(accuracy >= 0.95, "train accuracy {accuracy:.3} < 0.95");

        let strategy = EngramStrategy::default();
        let mut engram_flips = 0usize;
        let mut control_rate = 0.0;
        let points = 100;
        for (n, &i) in correct.iter().take(points).enumerate() {
            let (_, trace) = stack.decide(&xs[i], &AblationMask::empty()).unwrap();
            let engram = extract_engram(&trace, &strategy, stack.registry()).unwrap();
            let report = causal_test(&stack, &xs[i], &engram, 20, n as u64).unwrap();
            ensure!(!report.controls_skipped, "point {i}: controls skipped");
            engram_flips += (report.verdict == Verdict::Causal) as usize;
            control_rate += report.control_flip_rate;
        }
        let engram_rate = engram_flips as f64 / points as f64;
        let control_rate = control_rate / points as f64;
        ensure!(
            engram_rate > control_rate,
            "engram flip rate {engram_rate:.3} does not exceed control flip rate {control_rate:.3}"
        );
        Ok(format!(
            "train accuracy {accuracy:.3}; engram flip rate {engram_rate:.3} > control flip rate {control_rate:.3}"
        ))
    })
}

fn random_float(r: &mut StdRng) -> f64 {
    match r.gen_range(0..4) {
        0 => r.gen_range(-10.0..10.0),
        1 => 0.0,
        2 => loop {
            let v = f64::from_bits(r.gen());
            if v.is_finite() {
                break v;
            }
        },
        _ => r.gen::<f64>() * 1e-300,
    }
}

fn random_trace(r: &mut StdRng) -> ActivationTrace {
    let models = r.gen_range(1..=3);
    let mut records = BTreeMap::new();
    for m in 0..models {
        for layer in 0..r.gen_range(1..=3) {
            for unit in 0..r.gen_range(1..=6) {
                records.insert(NodeId::pool(m, layer, unit), random_float(r));
            }
        }
    }
    let classes = r.gen_range(2..=4);
    for slot in 0..r.gen_range(1..=6) {
        records.insert(NodeId::engine_slot(slot), random_float(r));
    }
    for c in 0..classes {
        records.insert(NodeId::engine_score(c), random_float(r));
    }
    let ablatable: Vec<NodeId> = records.keys().copied().filter(|id| id.layer == 1).collect();
    let mask = ablatable.into_iter().filter(|_| r.gen_bool(0.2)).collect();
    let scores: Vec<f64> = (0..classes).map(|_| r.gen::<f64>()).collect();
    ActivationTrace {
        decision_id: format!("{:032x}", r.gen::<u128>()),
        input_digest: r.gen(),
        seed: r.gen(),
        mask_applied: mask,
        records,
        decision: Decision::from_scores(scores),
    }
}

fn same_bits(a: &ActivationTrace, b: &ActivationTrace) -> bool {
    a == b
        && a.records.len() == b.records.len()
        && a.records.iter().zip(&b.records).all(|((i, x), (j, y))| i == j && x.to_bits() == y.to_bits())
        && a.decision.scores.iter().zip(&b.decision.scores).all(|(x, y)| x.to_bits() == y.to_bits())
        && a.decision.margin.to_bits() == b.decision.margin.to_bits()
}

fn criterion_7() -> Outcome {
    timed(Duration::from_secs(10), || {
        let mut r = StdRng::seed_from_u64(7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traces.jsonl");
        let traces: Vec<ActivationTrace> = (0..1000).map(|_| random_trace(&mut r)).collect();
        {
            let mut store = JsonlTraceStore::open(&path).map_err(|e| e.to_string())?;
            for t in &traces {
                store.persist(t).map_err(|e| e.to_string())?;
            }
        }
        let store = JsonlTraceStore::open(&path).map_err(|e| e.to_string())?;
        let loaded = store.load(&TraceFilter::All).map_err(|e| e.to_string())?;
        ensure!(loaded.len() == traces.len(), "loaded {} of {} traces", loaded.len(), traces.len());
        for (n, (a, b)) in traces.iter().zip(&loaded).enumerate() {
            ensure!(same_bits(a, b), "trace {n} changed on round trip");
        }
        let one = store
            .load(&TraceFilter::DecisionId(traces[500].decision_id.clone()))
            .map_err(|e| e.to_string())?;
        ensure!(one.len() == 1 && same_bits(&one[0], &traces[500]), "lookup by id failed");
        Ok(format!("{} traces, bit-exact after reopen", loaded.len()))
    })
}

fn criterion_8() -> Outcome {
    let stack = DecisionStack::new(fixtures::xor_pool()).map_err(|e| e.to_string())?;
    let mut sizes = Vec::new();
    for x in [[1.0, 0.0], [0.0, 1.0]] {
        let (_, trace) = stack.decide(&x, &AblationMask::empty()).unwrap();
        let engram = extract_engram(&trace, &EngramStrategy::default(), stack.registry()).unwrap();
        ensure!(engram.nodes.contains(&H1), "h1 missing from the engram of {x:?}: {:?}", engram.nodes);
        sizes.push(engram.nodes.len());
    }
    Ok(format!("h1 in both engrams (sizes {} and {})", sizes[0], sizes[1]))
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 8] = [
        ("xor end-to-end", criterion_1),
        ("gradient oracle", criterion_2),
        ("ablation identities", criterion_3),
        ("greedy vs exhaustive", criterion_4),
        ("determinism", criterion_5),
        ("specificity direction", criterion_6),
        ("persistence round-trip", criterion_7),
        ("shared node h1", criterion_8),
    ];
    let mut failed = Vec::new();
    for (n, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} PASS  {name}: {detail}", n + 1),
            Err(why) => {
                println!("criterion {} FAIL  {name}: {why}", n + 1);
                failed.push(n + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
