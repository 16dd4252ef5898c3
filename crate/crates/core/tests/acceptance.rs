//! Acceptance suite. Runs the golden experiment once (twice for the
//! determinism check), evaluates every criterion, prints one PASS/FAIL line
//! per criterion and exits non-zero if any failed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;

use sha2::{Digest, Sha256};
use supersub_core::data::synthetic_centers;
use supersub_core::delta::{pack, unpack, DeltaEntry, DeltaMode, DeltaPack, Payload};
use supersub_core::experiment::{self, eval_label, run_pipeline, DataSource, ExperimentConfig, RunLayout, Target};
use supersub_core::nn::{gradient_check, BatchNorm, Layer};
use supersub_core::runtime::{
    compression_csv, confusion_percent_text, evaluate, gap_report, CompressionRow, EfficientSession, EvalMode,
    EvalModels, GapRow, ModelRegistry, Specialists,
};
use supersub_core::{Dataset, HierarchyManifest, Network, NetworkConfig, Prng, Superclass, Tensor};

/// Macro accuracies of the reference run (percent); later runs must stay
/// within `GOLDEN_TOLERANCE` points.
const GOLDEN_ACCURACY: [(&str, f64); 5] = [
    ("lowerbound", 100.0),
    ("upperbound", 100.0),
    ("two_stage_vanilla", 100.0),
    ("two_stage_efficient.fp16", 100.0),
    ("two_stage_efficient.qat-int", 100.0),
];
const GOLDEN_TOLERANCE: f64 = 0.5;

/// SHA-256 over every artifact of the golden run (relative path and bytes,
/// in path order).
const GOLDEN_DIGEST: &str = "5d1ba045b9d6d3611d3d81c7d8031e8c14d7015a9fd8d16380591b46fdbfffcb";

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Everything the criteria read from a finished golden run.
struct Golden {
    layout: RunLayout,
    test: Dataset,
    super_net: Network,
    finetuned: Vec<Network>,
    accuracy: BTreeMap<String, f64>,
    confusion: Vec<Vec<u64>>,
    superclass_accuracy: f64,
    predictions: BTreeMap<String, Vec<(usize, usize)>>,
}

fn load_golden(config: &ExperimentConfig) -> Golden {
    let layout = config.layout();
    let test = Dataset::load(layout.test_data()).unwrap();
    let super_net = Network::load(layout.model(Target::Super)).unwrap();
    let n_super = test.manifest().n_super();
    let finetuned: Vec<Network> = (0..n_super)
        .map(|i| Network::load(layout.finetuned(i)).unwrap())
        .collect();
    let mut accuracy = BTreeMap::new();
    let mut predictions = BTreeMap::new();
    let mut confusion = Vec::new();
    let mut superclass_accuracy = 0.0;
    let runs = [
        (EvalMode::Lowerbound, DeltaMode::QatInt),
        (EvalMode::UpperboundOracle, DeltaMode::QatInt),
        (EvalMode::TwoStageVanilla, DeltaMode::QatInt),
        (EvalMode::TwoStageEfficient, DeltaMode::Fp16),
        (EvalMode::TwoStageEfficient, DeltaMode::QatInt),
    ];
    for (mode, dm) in runs {
        // re-evaluating in memory; the pipeline already wrote the same files
        let e = experiment::eval(config, mode, dm).unwrap();
        let label = eval_label(mode, dm);
        accuracy.insert(label.clone(), e.report.macro_accuracy);
        if mode == EvalMode::TwoStageVanilla {
            confusion = e.report.confusion.clone();
            superclass_accuracy = e.report.superclass_accuracy;
        }
        predictions.insert(label, e.predictions);
    }
    Golden {
        layout,
        test,
        super_net,
        finetuned,
        accuracy,
        confusion,
        superclass_accuracy,
        predictions,
    }
}

fn random_layers(prng: &mut Prng, dims: &[usize], bn: bool) -> Vec<Layer> {
    let mut normal = |scale: f64| (prng.standard_normal() * scale) as f32;
    let mut tensor = |shape: Vec<usize>, scale: f64, offset: f32| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| normal(scale) + offset).collect()).unwrap()
    };
    dims.windows(2)
        .enumerate()
        .map(|(l, w)| {
            let hidden = l + 2 < dims.len();
            Layer {
                weight: tensor(vec![w[1], w[0]], (2.0 / w[0] as f64).sqrt(), 0.0),
                bias: tensor(vec![w[1]], 0.1, 0.0),
                bn: (bn && hidden).then(|| BatchNorm {
                    gamma: tensor(vec![w[1]], 0.2, 1.0),
                    beta: tensor(vec![w[1]], 0.2, 0.0),
                    running_mean: Tensor::zeros(vec![w[1]]),
                    running_var: Tensor::filled(vec![w[1]], 1.0),
                }),
            }
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let mut prng = Prng::new(0xACCE_0001);
    let mut worst = [0.0f64; 2];
    for (slot, bn) in [(0, false), (1, true)] {
        for _ in 0..100 {
            let depth = 1 + prng.below(2);
            let mut dims = vec![2 + prng.below(4)];
            dims.extend((0..depth).map(|_| 2 + prng.below(5)));
            dims.push(2 + prng.below(3));
            let config = NetworkConfig::new(dims.clone(), bn).unwrap();
            let net = Network::from_parts(config, random_layers(&mut prng, &dims, bn), None).unwrap();
            let rows = 3 + prng.below(5);
            let x = Tensor::new(
                vec![rows, dims[0]],
                (0..rows * dims[0]).map(|_| prng.standard_normal() as f32).collect(),
            )
            .unwrap();
            let labels: Vec<usize> = (0..rows).map(|_| prng.below(*dims.last().unwrap())).collect();
            let err = gradient_check(&net, &x, &labels, 1e-4).unwrap();
            worst[slot] = worst[slot].max(err);
        }
    }
    outcome(
        worst[0] < 1e-4 && worst[1] < 1e-3,
        format!(
            "max relative error {:.2e} without batch-norm (< 1e-4), {:.2e} with (< 1e-3)",
            worst[0], worst[1]
        ),
    )
}

fn criterion_2(g: &Golden) -> Outcome {
    let total: u64 = g.confusion.iter().flatten().sum();
    let diagonal: u64 = (0..g.confusion.len()).map(|i| g.confusion[i][i]).sum();
    let off = 100.0 * (total - diagonal) as f64 / total as f64;
    outcome(
        g.superclass_accuracy >= 99.0 && off <= 1.0,
        format!(
            "stage-1 accuracy {:.2}% (>= 99), off-diagonal mass {off:.2}% (<= 1)",
            g.superclass_accuracy
        ),
    )
}

fn pinned_within(g: &Golden) -> (bool, String) {
    let mut ok = true;
    let mut detail = String::new();
    for (label, pinned) in GOLDEN_ACCURACY {
        let got = g.accuracy[label];
        let inside = (got - pinned).abs() <= GOLDEN_TOLERANCE;
        ok &= inside;
        if !inside {
            write!(detail, "; {label} {got:.2} drifted from pinned {pinned:.2}").unwrap();
        }
    }
    (ok, detail)
}

fn criterion_3(g: &Golden) -> Outcome {
    let (lo, up) = (g.accuracy["lowerbound"], g.accuracy["upperbound"]);
    let (pinned, drift) = pinned_within(g);
    outcome(
        up - lo >= 2.0 && pinned,
        format!(
            "upperbound {up:.2} - lowerbound {lo:.2} = {:+.2} points (>= 2.0){drift}",
            up - lo
        ),
    )
}

fn criterion_4(g: &Golden) -> Outcome {
    let (lo, up) = (g.accuracy["lowerbound"], g.accuracy["upperbound"]);
    let mut pass = true;
    let mut detail = String::new();
    for label in ["two_stage_vanilla", "two_stage_efficient.qat-int"] {
        let two = g.accuracy[label];
        let ok = up >= two && two >= lo && two - lo >= 0.5 * (up - lo);
        pass &= ok;
        write!(detail, "{label} {two:.2}; ").unwrap();
    }
    write!(
        detail,
        "upperbound {up:.2} >= two-stage >= lowerbound {lo:.2}, closure >= half the gap"
    )
    .unwrap();
    outcome(pass, detail)
}

fn criterion_5(g: &Golden) -> Outcome {
    let same_predictions = g.predictions["two_stage_efficient.qat-int"] == g.predictions["two_stage_vanilla"];
    let n_super = g.finetuned.len();
    let identical = (0..n_super)
        .filter(|&i| {
            std::fs::read(g.layout.reconstructed(i, DeltaMode::QatInt)).unwrap()
                == std::fs::read(g.layout.finetuned(i)).unwrap()
        })
        .count();
    outcome(
        same_predictions && identical == n_super,
        format!(
            "efficient predictions identical to vanilla on {} rows: {same_predictions}; {identical}/{n_super} specialists bit-identical",
            g.test.len()
        ),
    )
}

fn criterion_6(g: &Golden) -> Outcome {
    let manifest = g.test.manifest().clone();
    let rebuilt: Vec<Network> = (0..g.finetuned.len())
        .map(|i| Network::load(g.layout.reconstructed(i, DeltaMode::Fp16)).unwrap())
        .collect();
    let original = ModelRegistry::resident(g.super_net.clone(), g.finetuned.clone(), manifest.clone()).unwrap();
    let fp16 = ModelRegistry::resident(g.super_net.clone(), rebuilt, manifest).unwrap();
    let acc = |reg: &ModelRegistry| {
        evaluate(EvalMode::UpperboundOracle, EvalModels::Registry(reg), &g.test)
            .unwrap()
            .report
            .macro_accuracy
    };
    let (a, b) = (acc(&original), acc(&fp16));
    let two_stage = g.accuracy["two_stage_efficient.fp16"] - g.accuracy["two_stage_vanilla"];
    outcome(
        (a - b).abs() <= 0.5 && two_stage.abs() <= 0.5,
        format!(
            "specialists {a:.2} vs fp16-rebuilt {b:.2} (|diff| {:.2} <= 0.5); two-stage difference {two_stage:+.2}",
            (a - b).abs()
        ),
    )
}

fn criterion_7(g: &Golden) -> Outcome {
    let manifest = g.test.manifest();
    let mut rows = Vec::new();
    let mut ordered = true;
    for (i, spec) in g.finetuned.iter().enumerate() {
        let fp16 = std::fs::read(g.layout.delta(i, DeltaMode::Fp16)).unwrap().len();
        let qat = std::fs::read(g.layout.delta(i, DeltaMode::QatInt)).unwrap().len();
        ordered &= qat < fp16;
        let name = manifest.superclasses()[i].name.clone();
        let reference = spec.storage_bytes();
        for (mode, packed) in [("fp16", fp16), ("qat-int", qat)] {
            rows.push(CompressionRow {
                superclass: name.clone(),
                mode: mode.into(),
                reference: "f32".into(),
                packed_bytes: packed,
                reference_bytes: reference,
                ratio: packed as f64 / reference as f64,
            });
        }
    }
    let csv = compression_csv(&rows);
    let fp16_avg = rows.iter().filter(|r| r.mode == "fp16").map(|r| r.ratio).sum::<f64>() / g.finetuned.len() as f64;
    let per_super: Vec<String> = rows
        .chunks(2)
        .map(|p| format!("{} {:.3}/{:.3}", p[0].superclass, p[0].ratio, p[1].ratio))
        .collect();
    let has_average = csv.contains("average,fp16,f32,") && csv.contains("average,qat-int,f32,");
    outcome(
        ordered && fp16_avg < 0.7 && has_average,
        format!(
            "qat-int < fp16 packed for every specialist: {ordered}; average fp16 ratio {fp16_avg:.4} (< 0.7); fp16/qat-int per superclass: {}",
            per_super.join(", ")
        ),
    )
}

fn criterion_8(g: &Golden) -> Outcome {
    let manifest = g.test.manifest().clone();
    let packs: Vec<_> = (0..g.finetuned.len())
        .map(|i| {
            supersub_core::delta::PackedDelta::from_bytes(std::fs::read(g.layout.delta(i, DeltaMode::QatInt)).unwrap())
                .unwrap()
        })
        .collect();
    let vanilla = ModelRegistry::resident(g.super_net.clone(), g.finetuned.clone(), manifest.clone()).unwrap();
    let packed = ModelRegistry::packed(g.super_net.clone(), packs, manifest).unwrap();
    let sizes: Vec<u64> = match packed.specialists() {
        Specialists::Packed(p) => p.iter().map(|d| d.packed_size() as u64).collect(),
        Specialists::Resident(_) => unreachable!(),
    };

    // shuffled request trace over the test set
    let mut order: Vec<usize> = (0..g.test.len()).collect();
    Prng::new(0xACCE_0008).shuffle(&mut order);
    let mut session = EfficientSession::new(&packed).unwrap();
    let mut expected = 0u64;
    let mut switches = 0u64;
    let mut cached = None;
    for &r in &order {
        let x = g.test.features().row(r);
        let route = g.super_net.predict_row(x).unwrap();
        if cached != Some(route) {
            expected += sizes[route];
            switches += 1;
            cached = Some(route);
        }
        session.infer(x).unwrap();
    }
    let ledger = session.ledger();
    let total = vanilla.total_model_bytes() as u64;
    let share = 100.0 * ledger.peak_resident_bytes as f64 / total as f64;
    outcome(
        share < 40.0 && ledger.bytes_loaded == expected && ledger.specialist_switches == switches,
        format!(
            "peak resident {} of {total} vanilla bytes = {share:.1}% (< 40); bytes_loaded {} vs {expected} expected over {switches} switches",
            ledger.peak_resident_bytes, ledger.bytes_loaded
        ),
    )
}

fn random_manifest(prng: &mut Prng) -> HierarchyManifest {
    let n_super = 2 + prng.below(3);
    HierarchyManifest::new(
        (0..n_super)
            .map(|i| Superclass {
                name: format!("super {i}"),
                subclasses: (0..2 + prng.below(3)).map(|j| format!("sub {i}/{j}")).collect(),
            })
            .collect(),
    )
    .unwrap()
}

fn random_f32(prng: &mut Prng) -> f32 {
    match prng.below(8) {
        0 => f32::from_bits(prng.next_u64() as u32 & 0x7f7f_ffff),
        1 => -0.0,
        _ => (prng.standard_normal() * 10.0) as f32,
    }
}

fn random_tensor(prng: &mut Prng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| random_f32(prng)).collect()).unwrap()
}

fn corrupted_detected(bytes: &[u8], from: usize, prng: &mut Prng, decode: impl Fn(&[u8]) -> bool) -> bool {
    let mut b = bytes.to_vec();
    let at = from + prng.below(b.len() - from);
    b[at] ^= 1 + prng.below(255) as u8;
    !decode(&b)
}

fn criterion_9(dir: &Path) -> Outcome {
    let mut prng = Prng::new(0xACCE_0009);
    let cases = 1000;
    let mut failures = Vec::new();
    for case in 0..cases {
        // dataset
        let manifest = random_manifest(&mut prng);
        let (rows, dim) = (prng.below(12), 1 + prng.below(5));
        let labels = (0..rows).map(|_| prng.below(manifest.n_sub())).collect();
        let ds = Dataset::new(random_tensor(&mut prng, vec![rows, dim]), labels, manifest).unwrap();
        let path = dir.join("case.hsds");
        ds.save(&path).unwrap();
        let back = Dataset::load(&path).unwrap();
        if back.to_bytes() != ds.to_bytes()
            || back
                .features()
                .data()
                .iter()
                .map(|v| v.to_bits())
                .ne(ds.features().data().iter().map(|v| v.to_bits()))
        {
            failures.push(format!("dataset case {case}"));
        }
        let bytes = ds.to_bytes();
        if !corrupted_detected(&bytes, 0, &mut prng, |b| Dataset::from_bytes(b).is_ok()) {
            failures.push(format!("dataset corruption case {case}"));
        }

        // network
        let depth = 1 + prng.below(2);
        let dims: Vec<usize> = (0..depth + 2).map(|_| 1 + prng.below(5)).collect();
        let bn = prng.below(2) == 1;
        let net = Network::from_parts(
            NetworkConfig::new(dims.clone(), bn).unwrap(),
            random_layers(&mut prng, &dims, bn),
            None,
        )
        .unwrap();
        let path = dir.join("case.hsnw");
        net.save(&path).unwrap();
        if Network::load(&path).unwrap().to_bytes() != net.to_bytes() {
            failures.push(format!("network case {case}"));
        }
        if !corrupted_detected(&net.to_bytes(), 0, &mut prng, |b| Network::from_bytes(b).is_ok()) {
            failures.push(format!("network corruption case {case}"));
        }

        // delta
        let entries = (0..prng.below(5))
            .map(|e| {
                let n = prng.below(10);
                let payload = match prng.below(5) {
                    0 => Payload::F16Delta((0..n).map(|_| prng.next_u64() as u16).collect()),
                    1 => Payload::IntDelta {
                        scale: random_f32(&mut prng),
                        values: (0..n).map(|_| prng.next_u64() as i16).collect(),
                    },
                    2 => Payload::Full((0..n).map(|_| random_f32(&mut prng)).collect()),
                    3 => Payload::XorDelta((0..n).map(|_| prng.next_u64() as u32).collect()),
                    _ => Payload::FullScaled {
                        scale: random_f32(&mut prng),
                        values: (0..n).map(|_| random_f32(&mut prng)).collect(),
                    },
                };
                DeltaEntry {
                    name: format!("layer{e}.weight"),
                    shape: vec![n],
                    payload,
                }
            })
            .collect();
        let qat = prng.below(2) == 1;
        let d = DeltaPack {
            superclass_id: prng.next_u64() as u32,
            mode: if qat { DeltaMode::QatInt } else { DeltaMode::Fp16 },
            qat_bits: if qat { 2 + prng.below(7) as u8 } else { 0 },
            base_fingerprint: prng.next_u64() as u32,
            entries,
        };
        let packed = pack(&d);
        let path = dir.join("case.hsdl");
        std::fs::write(&path, &packed.bytes).unwrap();
        let reread = std::fs::read(&path).unwrap();
        if pack(&unpack(&reread).unwrap()).bytes != packed.bytes {
            failures.push(format!("delta case {case}"));
        }
        // the checksum covers everything after the 16-byte header
        if !corrupted_detected(&packed.bytes, 16, &mut prng, |b| unpack(b).is_ok()) {
            failures.push(format!("delta corruption case {case}"));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{cases} datasets, networks and deltas round-tripped through files; corruption detected in all{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failures: {}", failures.join(", "))
            }
        ),
    )
}

fn digest(root: &Path) -> String {
    fn walk(dir: &Path, out: &mut Vec<std::path::PathBuf>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(&p, out);
            } else {
                out.push(p);
            }
        }
    }
    let mut files = Vec::new();
    walk(root, &mut files);
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        let rel = f.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
        h.update((rel.len() as u64).to_le_bytes());
        h.update(rel.as_bytes());
        let bytes = std::fs::read(&f).unwrap();
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn criterion_10(first: &Path, second: &Path) -> Outcome {
    let (a, b) = (digest(first), digest(second));
    let pinned = if a == GOLDEN_DIGEST {
        "matches pinned digest".to_string()
    } else {
        format!("pinned digest differs, got {a}")
    };
    outcome(
        a == b && a == GOLDEN_DIGEST,
        format!("run digests {} / {} equal: {}; {pinned}", &a[..16], &b[..16], a == b),
    )
}

fn criterion_11() -> Outcome {
    let rows = [
        GapRow {
            label: "lowerbound".into(),
            accuracy: 71.18,
            n_test: 12650,
        },
        GapRow {
            label: "upperbound".into(),
            accuracy: 75.07,
            n_test: 12650,
        },
        GapRow {
            label: "two_stage".into(),
            accuracy: 71.18 + 3.30,
            n_test: 12650,
        },
    ];
    let gap = gap_report(&rows).unwrap();
    let gap_ok = gap.text.contains("upperbound - lowerbound = +3.89 (+5.47%)")
        && gap.text.contains("two_stage - lowerbound = +3.30 (+4.64%)")
        && gap.csv.contains("\nupperbound,75.07,+3.89,+5.47,,\n");

    // Bird row: 96.77% stays in Bird, 0.08% goes to Car
    let names: Vec<String> = ["Bird", "Car", "Other"].iter().map(|s| s.to_string()).collect();
    let counts = vec![vec![9677, 8, 315], vec![4, 9900, 96], vec![10, 20, 9970]];
    let text = confusion_percent_text(&counts, &names).unwrap();
    let bird: Vec<&str> = text.lines().nth(1).unwrap().split_whitespace().collect();
    let confusion_ok = bird == ["Bird", "96.77", "0.08", "3.15"];

    let compression: Vec<CompressionRow> = (0..10)
        .flat_map(|i| {
            [("fp16", 0.44), ("qat-int", 0.20)].map(|(mode, ratio)| CompressionRow {
                superclass: format!("s{i}"),
                mode: mode.into(),
                reference: "f32".into(),
                packed_bytes: (ratio * 1000.0) as usize,
                reference_bytes: 1000,
                ratio,
            })
        })
        .collect();
    let csv = compression_csv(&compression);
    let compression_ok = csv.ends_with("average,fp16,f32,,,0.4400\naverage,qat-int,f32,,,0.2000\n");
    outcome(
        gap_ok && confusion_ok && compression_ok,
        format!("gap 3.89 points / 5.47% and +3.30: {gap_ok}; Bird row 96.77/0.08: {confusion_ok}; ratio averages 0.44/0.20: {compression_ok}"),
    )
}

fn golden_config(dir: &Path) -> ExperimentConfig {
    let config = ExperimentConfig::golden(dir);
    if let DataSource::Synthetic(spec) = &config.data {
        assert_eq!((spec.n_super, spec.dim), (5, 32));
    }
    config
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().unwrap();
    let (run_a, run_b) = (scratch.path().join("golden-a"), scratch.path().join("golden-b"));
    let config = golden_config(&run_a);
    let started = std::time::Instant::now();
    run_pipeline(&config).unwrap();
    let pipeline_secs = started.elapsed().as_secs_f64();
    run_pipeline(&golden_config(&run_b)).unwrap();
    let golden = load_golden(&config);

    // the generator's own centers must agree with the stage-1 router on
    // points placed exactly at subclass centers
    if let DataSource::Synthetic(spec) = &config.data {
        let spec = supersub_core::SyntheticSpec {
            seed: experiment::stage_seed(config.seed, experiment::Stage::Data),
            ..spec.clone()
        };
        let centers = synthetic_centers(&spec).unwrap();
        let manifest = golden.test.manifest();
        let agree = centers
            .subclass
            .iter()
            .enumerate()
            .filter(|(s, c)| golden.super_net.predict_row(c).unwrap() == manifest.super_of(*s).unwrap())
            .count();
        println!(
            "note: router agrees with the generating superclass on {agree}/{} subclass centers",
            centers.subclass.len()
        );
    }

    let checks: Vec<(&str, Outcome)> = vec![
        ("gradient correctness", criterion_1()),
        ("superclass routing", criterion_2(&golden)),
        ("upperbound over lowerbound", criterion_3(&golden)),
        ("gap closure ordering", criterion_4(&golden)),
        ("qat-int exactness", criterion_5(&golden)),
        ("fp16 delta fidelity", criterion_6(&golden)),
        ("compression ordering", criterion_7(&golden)),
        ("one network resident", criterion_8(&golden)),
        ("container round trips", criterion_9(scratch.path())),
        ("pipeline determinism", criterion_10(&run_a, &run_b)),
        ("reference-value rendering", criterion_11()),
    ];
    println!(
        "golden pipeline: {pipeline_secs:.1}s per run; accuracies {:?}",
        golden.accuracy
    );
    let mut failed = 0;
    for (i, (name, o)) in checks.iter().enumerate() {
        println!(
            "criterion {:>2} {} {name}: {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
