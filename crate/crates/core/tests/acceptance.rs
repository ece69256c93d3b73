//! Acceptance gate: one test per criterion, each printing a PASS/FAIL line.
//!
//! Summary lines go straight to stderr so they show up even when the test
//! harness captures output.

use std::io::Write;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rsgnn::belief::{
    bel_to_mass, credal_bounds, mass_to_bel, mass_to_betp, sanitize_mass, ClassUniverse,
    FocalFamily, FocalSet,
};
use rsgnn::encoder::{Encoder, EncoderConfig};
use rsgnn::graph::{
    build_temporal_graph, generate_sbm, read_graph_dir, write_graph_dir, AgentAnnotation,
    FrameAnnotation, NodeGraph, SbmConfig, Split, WindowConfig,
};
use rsgnn::heads::{BeliefHead, VanillaHead};
use rsgnn::loss::{mass_regularizer, LossConfig, NormPenalty};
use rsgnn::metrics::{
    auprc, auroc, brier, ece, evaluate, fpr_at_95_tpr, msp_score, nll, EvalReport, ECE_BINS,
};
use rsgnn::model::{Head, Model, ModelKind};
use rsgnn::nn::{OptimizerKind, Parameters};
use rsgnn::run::{load_run, save_run, RunConfig};
use rsgnn::training::{train, TrainConfig};

fn say(line: String) {
    let _ = writeln!(std::io::stderr().lock(), "{line}");
}

fn report(id: u32, name: &str, pass: bool, detail: String) {
    say(format!(
        "[{}] criterion {id:>2}: {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    ));
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn power_set(c: usize) -> FocalFamily {
    FocalFamily::power_set(ClassUniverse::new(c).unwrap()).unwrap()
}

fn random_row(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.random::<f64>()).collect()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

#[test]
fn criterion_01_mobius_round_trip() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for c in 2..=6 {
        let family = power_set(c);
        for _ in 0..1000 {
            let bel = random_row(&mut rng, family.len());
            let back = mass_to_bel(&bel_to_mass(&bel, &family).unwrap(), &family).unwrap();
            for (a, b) in bel.iter().zip(&back) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    report(
        1,
        "Möbius round trip",
        worst < 1e-10 && elapsed < Duration::from_secs(5),
        format!(
            "max abs error {worst:.2e} over 5000 vectors in {:.3}s",
            elapsed.as_secs_f64()
        ),
    );
}

/// `m(A) = Σ_{B ⊆ A} (−1)^{|A∖B|} Bel(B)` by direct enumeration.
fn alternating_sum(bel: &[f64], family: &FocalFamily) -> Vec<f64> {
    let sets = family.sets();
    sets.iter()
        .map(|a| {
            sets.iter()
                .zip(bel)
                .filter(|(b, _)| b.is_subset_of(a))
                .map(|(b, &v)| if (a.len() - b.len()) % 2 == 0 { v } else { -v })
                .sum()
        })
        .collect()
}

#[test]
fn criterion_02_brute_force_mobius() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for c in 2..=5 {
        let family = power_set(c);
        let m = family.mobius_matrix();
        for _ in 0..200 {
            let bel = random_row(&mut rng, family.len());
            let direct = alternating_sum(&bel, &family);
            let fast = bel_to_mass(&bel, &family).unwrap();
            let dense = ndarray::Array1::from(bel.clone()).dot(&m);
            for k in 0..family.len() {
                worst = worst
                    .max((direct[k] - fast[k]).abs())
                    .max((direct[k] - dense[k]).abs());
            }
        }
    }
    report(
        2,
        "brute-force Möbius equivalence",
        worst < 1e-12,
        format!("max abs deviation {worst:.2e} for C=2..5"),
    );
}

#[test]
fn criterion_03_pignistic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut direct_err, mut simplex_err, mut bound_violation): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut vacuous_err: f64 = 0.0;
    for c in 2..=6 {
        let family = power_set(c);
        let mut vacuous = vec![0.0; family.len()];
        vacuous[family.len() - 1] = 1.0;
        for p in mass_to_betp(&vacuous, &family).unwrap() {
            vacuous_err = vacuous_err.max((p - 1.0 / c as f64).abs());
        }
        for trial in 0..500 {
            let mass = normalized(random_row(&mut rng, family.len()));
            let betp = mass_to_betp(&mass, &family).unwrap();
            for i in 0..c {
                let direct: f64 = family
                    .sets()
                    .iter()
                    .zip(&mass)
                    .filter(|(a, _)| a.contains(i))
                    .map(|(a, &m)| m / a.len() as f64)
                    .sum();
                direct_err = direct_err.max((direct - betp[i]).abs());
            }
            // Arbitrary (possibly invalid) masses for the simplex and bounds checks.
            let raw: Vec<f64> = if trial % 2 == 0 {
                mass.clone()
            } else {
                (0..family.len())
                    .map(|_| rng.random_range(-0.5..1.0))
                    .collect()
            };
            let p = mass_to_betp(&raw, &family).unwrap();
            simplex_err = simplex_err.max((p.iter().sum::<f64>() - 1.0).abs());
            simplex_err = simplex_err.max(-p.iter().cloned().fold(0.0, f64::min));
            if let Some(clean) = sanitize_mass(&raw) {
                let bounds = credal_bounds(&raw, &family).unwrap();
                let q = mass_to_betp(&clean, &family).unwrap();
                for i in 0..c {
                    bound_violation = bound_violation
                        .max(bounds.lower[i] - q[i])
                        .max(q[i] - bounds.upper[i]);
                }
            }
        }
    }
    let pass =
        direct_err < 1e-12 && vacuous_err < 1e-12 && simplex_err < 1e-9 && bound_violation <= 1e-12;
    report(
        3,
        "pignistic correctness",
        pass,
        format!(
            "direct {direct_err:.2e}, vacuous {vacuous_err:.2e}, simplex {simplex_err:.2e}, bounds {bound_violation:.2e}"
        ),
    );
}

#[test]
fn criterion_04_budget_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut counts = Vec::new();
    for (c, expected) in [(10usize, 74usize), (8, 72)] {
        let confusions = [
            Array2::zeros((c, c)),
            Array2::from_shape_simple_fn((c, c), || rng.random_range(0.0..50.0f64).floor()),
        ];
        for conf in confusions {
            let family =
                FocalFamily::budgeted(ClassUniverse::new(c).unwrap(), &conf, 64, 3).unwrap();
            counts.push((c, family.len(), expected));
        }
    }
    report(
        4,
        "focal budget counts",
        counts.iter().all(|&(_, got, want)| got == want),
        format!("(C, |F|, expected) = {counts:?}"),
    );
}

/// 10 nodes, 3 classes, a ring plus chords and self-loops.
fn tiny_graph() -> NodeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 10;
    let features = Array2::from_shape_simple_fn((n, 4), || rng.random_range(-1.0..1.0));
    let mut edges = Vec::new();
    for v in 0..n {
        edges.push((v, (v + 1) % n));
        edges.push(((v + 1) % n, v));
        edges.push((v, v));
    }
    edges.extend([(0, 5), (5, 0), (2, 7), (3, 8), (9, 4)]);
    let labels = (0..n as i64).map(|v| v % 3).collect();
    let split = (0..n)
        .map(|v| if v < 7 { Split::Train } else { Split::Test })
        .collect();
    NodeGraph::new(features, edges, labels, split).unwrap()
}

/// Worst relative error between the analytic gradient and central differences
/// over every parameter entry.
fn gradient_check(model: &mut Model, graph: &NodeGraph, cfg: &LossConfig) -> (f64, usize) {
    let labels: Vec<Option<usize>> = graph.labels().iter().map(|&l| Some(l as usize)).collect();
    let mask: Vec<bool> = graph.split().iter().map(|&s| s == Split::Train).collect();
    let seed = 99;
    model
        .loss_and_grad(graph, &labels, &mask, cfg, seed)
        .unwrap();
    let analytic: Vec<(String, Array2<f64>)> = model
        .params()
        .into_iter()
        .map(|(n, p)| (n, p.grad.clone()))
        .collect();
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (name, grad) in &analytic {
        for idx in 0..grad.len() {
            let (r, c) = (idx / grad.ncols(), idx % grad.ncols());
            let eval = |delta: f64| {
                let mut probe = model.clone();
                let p = probe
                    .params_mut()
                    .into_iter()
                    .find(|(n, _)| n == name)
                    .unwrap()
                    .1;
                p.value[[r, c]] += delta;
                probe
                    .loss_and_grad(graph, &labels, &mask, cfg, seed)
                    .unwrap()
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let a = grad[[r, c]];
            let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    (worst, checked)
}

#[test]
fn criterion_05_gradient_fidelity() {
    let start = Instant::now();
    let graph = tiny_graph();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let encoder = Encoder::new(EncoderConfig::new(4, 8, 0.2), &mut rng).unwrap();
    let family = power_set(3);
    let mut belief = Model {
        encoder: encoder.clone(),
        head: Head::Belief {
            head: BeliefHead::new(8, 8, family.len(), &mut rng),
            family,
        },
    };
    let mut vanilla = Model {
        encoder,
        head: Head::Vanilla(VanillaHead::new(8, 3, &mut rng)),
    };
    let cfg = LossConfig {
        alpha: 0.3,
        beta: 0.2,
        ..LossConfig::default()
    };
    let (rs_err, rs_n) = gradient_check(&mut belief, &graph, &cfg);
    let (va_err, va_n) = gradient_check(&mut vanilla, &graph, &cfg);
    let elapsed = start.elapsed();
    report(
        5,
        "gradient fidelity",
        rs_err < 1e-4 && va_err < 1e-4 && elapsed < Duration::from_secs(30),
        format!(
            "RS-GNN worst rel {rs_err:.2e} over {rs_n} entries, vanilla {va_err:.2e} over {va_n}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_06_regularizer_semantics() {
    let cfg = |mode| LossConfig {
        alpha: 0.37,
        beta: 0.61,
        norm_penalty: mode,
        ..LossConfig::default()
    };
    let eval = |m: &[f64], mode| {
        mass_regularizer(
            &Array2::from_shape_vec((1, m.len()), m.to_vec()).unwrap(),
            &[true],
            &cfg(mode),
        )
        .unwrap()
        .0
    };
    let (a, b) = (0.37, 0.61);
    let mut errors = Vec::new();
    for mode in [NormPenalty::Absolute, NormPenalty::Relaxed] {
        errors.push((eval(&[-0.1, 0.6, 0.6], mode) - (a * 0.1 + b * 0.1)).abs());
    }
    errors.push((eval(&[0.2, 0.3, 0.3], NormPenalty::Absolute) - b * 0.2).abs());
    errors.push(eval(&[0.2, 0.3, 0.3], NormPenalty::Relaxed).abs());
    let hand_ok = errors.iter().all(|&e| e < 1e-12);

    // Dyadic masses so that feasibility is decided exactly in floating point.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut misclassified = 0;
    for _ in 0..2000 {
        let k = rng.random_range(1..8);
        let m: Vec<f64> = (0..k)
            .map(|_| rng.random_range(-4i32..40) as f64 / 64.0)
            .collect();
        let total: f64 = m.iter().sum();
        let nonneg = m.iter().all(|&x| x >= 0.0);
        for (mode, feasible) in [
            (NormPenalty::Absolute, nonneg && total == 1.0),
            (NormPenalty::Relaxed, nonneg && total <= 1.0),
        ] {
            if (eval(&m, mode) == 0.0) != feasible {
                misclassified += 1;
            }
        }
        // Force some exactly feasible cases.
        let mut exact: Vec<f64> = (0..k)
            .map(|_| rng.random_range(0..8) as f64 / 64.0)
            .collect();
        let rest = 1.0 - exact.iter().sum::<f64>();
        if rest >= 0.0 {
            exact.push(rest);
            misclassified += usize::from(eval(&exact, NormPenalty::Absolute) != 0.0);
            misclassified += usize::from(eval(&exact, NormPenalty::Relaxed) != 0.0);
        }
    }
    report(
        6,
        "regularizer semantics",
        hand_ok && misclassified == 0,
        format!("hand-case errors {errors:?}, feasibility misclassifications {misclassified}"),
    );
}

fn brute_auroc(s: &[f64], t: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in (0..s.len()).filter(|&i| t[i]) {
        for j in (0..s.len()).filter(|&j| !t[j]) {
            pairs += 1.0;
            wins += if s[i] > s[j] {
                1.0
            } else if s[i] == s[j] {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / pairs
}

fn brute_fpr95(s: &[f64], t: &[bool]) -> f64 {
    let pos = t.iter().filter(|&&x| x).count() as f64;
    let neg = t.len() as f64 - pos;
    s.iter()
        .filter_map(|&thr| {
            let tp = (0..s.len()).filter(|&i| t[i] && s[i] >= thr).count() as f64;
            let fp = (0..s.len()).filter(|&i| !t[i] && s[i] >= thr).count() as f64;
            (tp / pos >= 0.95).then_some(fp / neg)
        })
        .fold(f64::INFINITY, f64::min)
}

fn brute_auprc(s: &[f64], t: &[bool]) -> f64 {
    let pos = t.iter().filter(|&&x| x).count() as f64;
    let mut thresholds = s.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (mut prev, mut area) = (0.0, 0.0);
    for thr in thresholds {
        let tp = (0..s.len()).filter(|&i| t[i] && s[i] >= thr).count() as f64;
        let all = (0..s.len()).filter(|&i| s[i] >= thr).count() as f64;
        area += (tp / pos - prev) * tp / all;
        prev = tp / pos;
    }
    area
}

#[test]
fn criterion_07_metric_oracles() {
    let tol = 1e-9;
    let mut checks: Vec<(&str, f64, f64)> = Vec::new();

    checks.push((
        "msp one-hot",
        msp_score(&ndarray::arr2(&[[0.0, 1.0, 0.0]]))[0],
        0.0,
    ));
    checks.push((
        "msp uniform C=4",
        msp_score(&Array2::from_elem((1, 4), 0.25))[0],
        0.75,
    ));
    checks.push((
        "msp (0.6,0.3,0.1)",
        msp_score(&ndarray::arr2(&[[0.6, 0.3, 0.1]]))[0],
        0.4,
    ));

    let sep_s = [0.1, 0.1, 0.1, 0.9, 0.9];
    let sep_t = [false, false, false, true, true];
    checks.push(("auroc separated", auroc(&sep_s, &sep_t).unwrap(), 1.0));
    checks.push(("auprc separated", auprc(&sep_s, &sep_t).unwrap(), 1.0));
    checks.push((
        "fpr95 separated",
        fpr_at_95_tpr(&sep_s, &sep_t).unwrap(),
        0.0,
    ));
    checks.push((
        "auroc 4-point hand case",
        auroc(&[0.2, 0.5, 0.5, 0.8], &[false, true, false, true]).unwrap(),
        0.875,
    ));
    checks.push((
        "auprc single positive first",
        auprc(&[0.9, 0.3, 0.2, 0.1], &[true, false, false, false]).unwrap(),
        1.0,
    ));
    checks.push((
        "fpr95 constant scores",
        fpr_at_95_tpr(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(),
        1.0,
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let s20: Vec<f64> = (0..20)
        .map(|_| (rng.random_range(0..10) as f64) / 10.0)
        .collect();
    let t20: Vec<bool> = (0..20).map(|i| i % 3 != 0).collect();
    checks.push((
        "fpr95 20-point scan",
        fpr_at_95_tpr(&s20, &t20).unwrap(),
        brute_fpr95(&s20, &t20),
    ));
    checks.push((
        "auroc 20-point pairs",
        auroc(&s20, &t20).unwrap(),
        brute_auroc(&s20, &t20),
    ));
    checks.push((
        "auprc 20-point scan",
        auprc(&s20, &t20).unwrap(),
        brute_auprc(&s20, &t20),
    ));

    let mut shuffled_ok = true;
    let big_s: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
    let big_t: Vec<bool> = (0..10_000).map(|_| rng.random_bool(0.25)).collect();
    let prevalence = big_t.iter().filter(|&&t| t).count() as f64 / 1e4;
    shuffled_ok &= (auroc(&big_s, &big_t).unwrap() - 0.5).abs() < 0.05;
    shuffled_ok &= (auprc(&big_s, &big_t).unwrap() - prevalence).abs() < 0.05;

    checks.push((
        "ece one-hot correct",
        ece(&ndarray::arr2(&[[1.0, 0.0], [0.0, 1.0]]), &[0, 1], ECE_BINS),
        0.0,
    ));
    let p08 = Array2::from_shape_fn((10, 2), |(_, j)| if j == 0 { 0.8 } else { 0.2 });
    let y08: Vec<usize> = (0..10).map(|i| usize::from(i >= 8)).collect();
    checks.push(("ece matched bin", ece(&p08, &y08, ECE_BINS), 0.0));
    let p09 = Array2::from_shape_fn((10, 2), |(_, j)| if j == 0 { 0.9 } else { 0.1 });
    let y09: Vec<usize> = (0..10).map(|i| usize::from(i >= 6)).collect();
    checks.push(("ece 0.9 conf / 0.6 acc", ece(&p09, &y09, ECE_BINS), 0.3));

    let eps = 1e-8;
    checks.push((
        "nll certain",
        nll(&ndarray::arr2(&[[1.0, 0.0]]), &[0]),
        -(1.0f64 + eps).ln(),
    ));
    let u8 = Array2::from_elem((4, 8), 0.125);
    let nll8 = nll(&u8, &[0, 2, 5, 7]);
    checks.push(("nll uniform C=8", nll8, -(0.125f64 + eps).ln()));
    let mixed = ndarray::arr2(&[[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]]);
    checks.push((
        "nll mixed",
        nll(&mixed, &[0, 1]),
        -((0.7f64 + eps).ln() + (0.3f64 + eps).ln()) / 2.0,
    ));
    checks.push((
        "brier one-hot",
        brier(&ndarray::arr2(&[[0.0, 1.0]]), &[1]),
        0.0,
    ));
    checks.push((
        "brier uniform C=2",
        brier(&ndarray::arr2(&[[0.5, 0.5]]), &[1]),
        0.5,
    ));
    checks.push((
        "brier (0.7,0.3)",
        brier(&ndarray::arr2(&[[0.7, 0.3]]), &[0]),
        0.18,
    ));

    let failed: Vec<_> = checks
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > tol)
        .collect();
    let anchor = (nll8 - 8f64.ln()).abs() < 1e-7 && (nll8 - 2.079).abs() < 5e-4;
    report(
        7,
        "metric oracles",
        failed.is_empty() && shuffled_ok && anchor,
        format!(
            "{} fixtures within {tol:e}, failures {failed:?}; shuffled AUROC/AUPRC ok: {shuffled_ok}; uniform C=8 NLL {nll8:.6} vs ln 8 = {:.6} (2.079)",
            checks.len(),
            8f64.ln()
        ),
    );
}

struct SeedResult {
    seed: u64,
    rsgnn: EvalReport,
    vanilla: EvalReport,
    seconds: f64,
}

#[test]
fn criterion_08_synthetic_leave_out_class() {
    // Seeds run one after another so each timing is for a single core.
    let results: Vec<SeedResult> = (0..3u64)
        .map(|seed| {
            let start = Instant::now();
            let graph = generate_sbm(&SbmConfig {
                num_classes: 6,
                nodes_per_class: 100,
                p_in: 0.1,
                p_out: 0.01,
                feature_dim: 16,
                feature_shift: 1.0,
                seed,
            })
            .unwrap();
            let run = |model| {
                let cfg = TrainConfig {
                    model,
                    epochs: 200,
                    warmup_epochs: 1,
                    lr: 1e-3,
                    optimizer: OptimizerKind::Adam,
                    hidden: 64,
                    seed,
                    ood_classes: vec![4, 5],
                    ..TrainConfig::default()
                };
                let (state, _) = train(&cfg, &graph).unwrap();
                evaluate(&state.model, &state.class_map, &state.ood, &graph).unwrap()
            };
            let vanilla = run(ModelKind::Vanilla);
            let rsgnn = run(ModelKind::Rsgnn);
            SeedResult {
                seed,
                rsgnn,
                vanilla,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect();

    let mut all_ok = true;
    for r in &results {
        let acc = r.rsgnn.id_metrics.accuracy;
        let vacc = r.vanilla.id_metrics.accuracy;
        let cw = &r.rsgnn.ood_detection["credal_width"];
        let ent = &r.rsgnn.ood_detection["entropy"];
        let (cw_auc, ent_auc) = (cw.auroc.unwrap(), ent.auroc.unwrap());
        let direction = cw.mean_ood.unwrap() > cw.mean_id.unwrap()
            && ent.mean_ood.unwrap() > ent.mean_id.unwrap();
        let ok = acc >= 0.90
            && (acc - vacc).abs() <= 0.05
            && cw_auc >= 0.70
            && ent_auc >= 0.70
            && direction
            && r.seconds < 300.0;
        all_ok &= ok;
        say(format!(
            "    seed {}: rsgnn acc {acc:.3} (vanilla {vacc:.3}), credal AUROC {cw_auc:.3}, entropy AUROC {ent_auc:.3}, \
             credal mean ID/OOD {:.3}/{:.3}, entropy mean ID/OOD {:.3}/{:.3}, {:.1}s {}",
            r.seed,
            cw.mean_id.unwrap(),
            cw.mean_ood.unwrap(),
            ent.mean_id.unwrap(),
            ent.mean_ood.unwrap(),
            r.seconds,
            if ok { "ok" } else { "MISS" }
        ));
    }
    report(
        8,
        "synthetic leave-out-class experiment",
        all_ok,
        "accuracy >= 0.90 and within 0.05 of vanilla, credal-width and entropy AUROC >= 0.70, OOD scores above ID, every seed"
            .into(),
    );
}

#[test]
fn criterion_09_determinism() {
    let sbm = SbmConfig {
        num_classes: 4,
        nodes_per_class: 30,
        p_in: 0.15,
        p_out: 0.01,
        feature_dim: 8,
        feature_shift: 1.5,
        seed: 21,
    };
    let root = tempfile::tempdir().unwrap();
    let mut artifacts = Vec::new();
    for attempt in 0..2 {
        let base = root.path().join(format!("attempt-{attempt}"));
        let data = base.join("data");
        write_graph_dir(&generate_sbm(&sbm).unwrap(), &data).unwrap();
        let graph = read_graph_dir(&data).unwrap();
        let mut files = Vec::new();
        for model in [ModelKind::Vanilla, ModelKind::Rsgnn] {
            let cfg = TrainConfig {
                model,
                epochs: 25,
                warmup_epochs: 3,
                hidden: 16,
                seed: 5,
                ood_classes: vec![3],
                ..TrainConfig::default()
            };
            let (state, trace) = train(&cfg, &graph).unwrap();
            let dir = base.join(model.to_string());
            save_run(
                &dir,
                &RunConfig::resolve(&cfg, &state, &graph),
                &state,
                &trace,
            )
            .unwrap();
            let report = load_run(&dir).unwrap().evaluate(&graph).unwrap();
            std::fs::write(dir.join("metrics.json"), report.to_json()).unwrap();
            for name in ["nodes.csv", "edges.csv", "meta.json"] {
                files.push(std::fs::read(data.join(name)).unwrap());
            }
            for name in ["trace.csv", "metrics.json", "config.json", "checkpoint.bin"] {
                files.push(std::fs::read(dir.join(name)).unwrap());
            }
        }
        artifacts.push(files);
    }
    let identical = artifacts[0] == artifacts[1];
    report(
        9,
        "determinism",
        identical,
        format!(
            "{} artifacts compared byte-for-byte across two seeded repeats",
            artifacts[0].len()
        ),
    );
}

fn agent(uid: &str) -> AgentAnnotation {
    AgentAnnotation {
        tube_uid: uid.into(),
        bbox: [0.1, 0.1, 0.4, 0.5],
        action: vec![1.0, 0.0],
        location: vec![0.0, 1.0, 0.0],
        class_label: 0,
    }
}

#[test]
fn criterion_10_temporal_fixtures() {
    let one = FrameAnnotation {
        frame_id: 0,
        agents: vec![agent("a"), agent("b")],
    };
    let g1 = build_temporal_graph(
        &[one],
        &WindowConfig {
            window_size: 1,
            window_stride: 1,
            frame_step: 1,
        },
    )
    .unwrap();
    let first = g1.len() == 1 && g1[0].num_nodes() == 3 && g1[0].edges().len() == 7;

    let frames: Vec<FrameAnnotation> = (0..2)
        .map(|i| FrameAnnotation {
            frame_id: i,
            agents: vec![agent("a")],
        })
        .collect();
    let g2 = &build_temporal_graph(
        &frames,
        &WindowConfig {
            window_size: 2,
            window_stride: 2,
            frame_step: 1,
        },
    )
    .unwrap()[0];
    let agents: Vec<bool> = g2.labels().iter().map(|&l| l >= 0).collect();
    let temporal = g2
        .edges()
        .iter()
        .filter(|&&(s, d)| s != d && agents[s] && agents[d])
        .count();
    let second = temporal == 2;

    let frames: Vec<FrameAnnotation> = (0..40)
        .map(|i| FrameAnnotation {
            frame_id: i,
            agents: vec![agent("a")],
        })
        .collect();
    let windows = build_temporal_graph(&frames, &WindowConfig::default())
        .unwrap()
        .len();
    let third = windows == 2;

    report(
        10,
        "temporal graph fixtures",
        first && second && third,
        format!(
            "single frame: {} nodes / {} edges; persisting tube: {temporal} agent-agent edges; 40 frames at (4,4,5): {windows} windows",
            g1[0].num_nodes(),
            g1[0].edges().len()
        ),
    );
}

#[test]
fn focal_set_display_is_stable() {
    assert_eq!(FocalSet::new([2, 0]).unwrap().to_string(), "{0,2}");
}
