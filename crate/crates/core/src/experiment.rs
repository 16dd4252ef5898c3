//! End-to-end experiment driver: configuration, artifact layout, and one
//! function per pipeline step. The CLI is a thin wrapper around these.
//!
//! Every stage draws its randomness from `seed ^ tag` for a fixed per-stage
//! tag, so one seed determines every artifact.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, Dataset, HierarchyManifest, LabelView, SyntheticSpec};
use crate::delta::{
    compression_ratio, compute_delta, pack, quantized_storage_bytes, reconstruct, unpack, DeltaMode, PackedDelta,
};
use crate::error::{Error, Result};
use crate::nn::{finetune_from_super, init_network, train, Network, NetworkConfig, TrainConfig};
use crate::runtime::{
    compression_csv, confusion_csv, confusion_percent_text, evaluate, gap_report, ledger_csv, predictions_csv,
    report_csv, CompressionRow, EvalMode, EvalModels, Evaluation, GapRow, ModelRegistry,
};

/// Pipeline stages with their own random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Data,
    SuperInit,
    SuperTrain,
    LowerboundInit,
    LowerboundTrain,
    SubInit(usize),
    SubTrain(usize),
    Finetune(usize),
}

impl Stage {
    fn tag(self) -> u64 {
        match self {
            Stage::Data => 0xD47A_0000_0000_0000,
            Stage::SuperInit => 0x5E01_0000_0000_0000,
            Stage::SuperTrain => 0x5E02_0000_0000_0000,
            Stage::LowerboundInit => 0x1B01_0000_0000_0000,
            Stage::LowerboundTrain => 0x1B02_0000_0000_0000,
            Stage::SubInit(i) => 0x5B01_0000_0000_0000 | i as u64,
            Stage::SubTrain(i) => 0x5B02_0000_0000_0000 | i as u64,
            Stage::Finetune(i) => 0xF701_0000_0000_0000 | i as u64,
        }
    }
}

pub fn stage_seed(seed: u64, stage: Stage) -> u64 {
    seed ^ stage.tag()
}

/// Where the data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Generated; the spec's own `seed` is replaced by the experiment's
    /// data-stage seed.
    Synthetic(SyntheticSpec),
    /// Existing dataset files.
    Files { train: PathBuf, test: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub hidden: Vec<usize>,
    pub batchnorm: bool,
}

fn default_qat_bits() -> u8 {
    8
}

/// Training hyperparameters of one stage; the seed comes from the stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageTrain {
    pub lr: f32,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub qat: bool,
    #[serde(default = "default_qat_bits")]
    pub qat_bits: u8,
}

impl StageTrain {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            qat: self.qat,
            qat_bits: self.qat_bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub network: NetworkSpec,
    pub super_train: StageTrain,
    /// Specialists trained from scratch (`train sub:i`).
    pub sub_train: StageTrain,
    pub finetune: StageTrain,
    pub lowerbound_train: StageTrain,
    pub delta_mode: DeltaMode,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl ExperimentConfig {
    /// The pinned reference experiment: five superclasses of four subclasses
    /// in 32 dimensions, a 32-64-64 batch-norm MLP, 30 epochs per stage.
    pub fn golden(out_dir: impl Into<PathBuf>) -> Self {
        let plain = StageTrain {
            lr: 0.01,
            epochs: 30,
            batch_size: 32,
            qat: false,
            qat_bits: 8,
        };
        let qat = StageTrain {
            qat: true,
            ..plain.clone()
        };
        ExperimentConfig {
            data: DataSource::Synthetic(SyntheticSpec {
                n_super: 5,
                subs_per_super: vec![4; 5],
                dim: 32,
                super_sep: 6.0,
                sub_sep: 1.5,
                noise_sigma: 1.0,
                n_train_per_sub: 200,
                n_test_per_sub: 50,
                seed: 0,
            }),
            network: NetworkSpec {
                hidden: vec![64, 64],
                batchnorm: true,
            },
            super_train: qat.clone(),
            sub_train: plain.clone(),
            finetune: qat,
            lowerbound_train: plain,
            delta_mode: DeltaMode::QatInt,
            out_dir: out_dir.into(),
            seed: 2024,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| missing_or_io(path, e))?;
        ExperimentConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        if self.network.hidden.is_empty() {
            return Err(Error::parameter("network needs at least one hidden layer"));
        }
        for (name, stage) in [
            ("super_train", &self.super_train),
            ("sub_train", &self.sub_train),
            ("finetune", &self.finetune),
            ("lowerbound_train", &self.lowerbound_train),
        ] {
            stage
                .with_seed(0)
                .validate()
                .map_err(|e| Error::parameter(format!("{name}: {e}")))?;
        }
        if self.finetune.qat && !self.super_train.qat {
            return Err(Error::parameter("QAT finetuning needs a QAT superclass network"));
        }
        if self.finetune.qat && self.finetune.qat_bits != self.super_train.qat_bits {
            return Err(Error::parameter("finetune and super_train must use the same qat_bits"));
        }
        Ok(())
    }

    pub fn layout(&self) -> RunLayout {
        RunLayout::new(&self.out_dir)
    }

    fn network_config(&self, input: usize, head: usize) -> Result<NetworkConfig> {
        let mut dims = vec![input];
        dims.extend(&self.network.hidden);
        dims.push(head);
        NetworkConfig::new(dims, self.network.batchnorm)
    }
}

/// File locations inside a run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLayout {
    root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunLayout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn train_data(&self) -> PathBuf {
        self.root.join("data/train.hsds")
    }

    pub fn test_data(&self) -> PathBuf {
        self.root.join("data/test.hsds")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("data/manifest.json")
    }

    pub fn model(&self, target: Target) -> PathBuf {
        self.root.join(format!("models/{}.hsnw", target.file_stem()))
    }

    pub fn finetuned(&self, i: usize) -> PathBuf {
        self.root.join(format!("models/finetune_{i}.hsnw"))
    }

    pub fn reconstructed(&self, i: usize, mode: DeltaMode) -> PathBuf {
        self.root
            .join(format!("models/reconstructed_{i}.{}.hsnw", mode.label()))
    }

    pub fn loss_history(&self, stem: &str) -> PathBuf {
        self.root.join(format!("loss/{stem}.csv"))
    }

    pub fn delta(&self, i: usize, mode: DeltaMode) -> PathBuf {
        self.root.join(format!("deltas/{}/delta_{i}.hsdl", mode.label()))
    }

    /// `eval/<label>.<kind>.csv`.
    pub fn eval_file(&self, label: &str, kind: &str) -> PathBuf {
        self.root.join(format!("eval/{label}.{kind}.csv"))
    }

    pub fn report_file(&self, name: &str) -> PathBuf {
        self.root.join(format!("report/{name}"))
    }
}

/// Label under which an evaluation's files are written.
pub fn eval_label(mode: EvalMode, delta_mode: DeltaMode) -> String {
    match mode {
        EvalMode::TwoStageEfficient => format!("{}.{}", mode.label(), delta_mode.label()),
        other => other.label().to_string(),
    }
}

/// What `train` produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Super,
    Sub(usize),
    Lowerbound,
}

impl Target {
    fn file_stem(self) -> String {
        match self {
            Target::Super => "super".into(),
            Target::Sub(i) => format!("sub_{i}"),
            Target::Lowerbound => "lowerbound".into(),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Super => f.write_str("super"),
            Target::Sub(i) => write!(f, "sub:{i}"),
            Target::Lowerbound => f.write_str("lowerbound"),
        }
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "super" => Ok(Target::Super),
            "lowerbound" => Ok(Target::Lowerbound),
            _ => s
                .strip_prefix("sub:")
                .and_then(|i| i.parse().ok())
                .map(Target::Sub)
                .ok_or_else(|| {
                    Error::parameter(format!("unknown target {s:?}; expected super, sub:<i> or lowerbound"))
                }),
        }
    }
}

fn missing_or_io(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::Missing(vec![path.to_path_buf()])
    } else {
        Error::Io(e)
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| missing_or_io(path, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

fn load_network(path: &Path) -> Result<Network> {
    Network::from_bytes(&read(path)?)
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::from_bytes(&read(path)?)
}

/// Writes the train and test sets (and their manifest) into the run
/// directory.
pub fn gen_data(config: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    config.validate()?;
    let (train_set, test_set) = match &config.data {
        DataSource::Synthetic(spec) => {
            let spec = SyntheticSpec {
                seed: stage_seed(config.seed, Stage::Data),
                ..spec.clone()
            };
            generate_synthetic(&spec)?
        }
        DataSource::Files { train, test } => {
            let (train_set, test_set) = (load_dataset(train)?, load_dataset(test)?);
            if train_set.manifest() != test_set.manifest() {
                return Err(Error::Validation(
                    "train and test sets use different hierarchies".into(),
                ));
            }
            (train_set, test_set)
        }
    };
    let layout = config.layout();
    write(&layout.train_data(), train_set.to_bytes())?;
    write(&layout.test_data(), test_set.to_bytes())?;
    write(&layout.manifest(), train_set.manifest().to_json())?;
    Ok((train_set, test_set))
}

fn loss_csv(losses: &[f32]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (e, l) in losses.iter().enumerate() {
        out.push_str(&format!("{},{l:.6}\n", e + 1));
    }
    out
}

/// Trains `target` from a fresh initialization and writes the network and
/// its per-epoch loss history.
pub fn train_target(config: &ExperimentConfig, target: Target) -> Result<Network> {
    config.validate()?;
    let layout = config.layout();
    let data = load_dataset(&layout.train_data())?;
    let manifest = data.manifest();
    let (head, view, stage, init_stage, seed_stage) = match target {
        Target::Super => (
            manifest.n_super(),
            LabelView::Superclass,
            &config.super_train,
            Stage::SuperInit,
            Stage::SuperTrain,
        ),
        Target::Lowerbound => (
            manifest.n_sub(),
            LabelView::AllSubclasses,
            &config.lowerbound_train,
            Stage::LowerboundInit,
            Stage::LowerboundTrain,
        ),
        Target::Sub(i) => (
            manifest
                .subclass_count(i)
                .map_err(|_| Error::parameter(format!("no superclass {i}")))?,
            LabelView::SubclassOf(i),
            &config.sub_train,
            Stage::SubInit(i),
            Stage::SubTrain(i),
        ),
    };
    let init = init_network(
        &config.network_config(data.dim(), head)?,
        stage_seed(config.seed, init_stage),
    )?;
    let (net, losses) = train(
        &init,
        &data,
        view,
        &stage.with_seed(stage_seed(config.seed, seed_stage)),
    )?;
    write(&layout.model(target), net.to_bytes())?;
    write(&layout.loss_history(&target.file_stem()), loss_csv(&losses))?;
    Ok(net)
}

/// Finetunes specialist `i` from the stored superclass network.
pub fn finetune(config: &ExperimentConfig, i: usize) -> Result<Network> {
    config.validate()?;
    let layout = config.layout();
    let data = load_dataset(&layout.train_data())?;
    if i >= data.manifest().n_super() {
        return Err(Error::parameter(format!("no superclass {i}")));
    }
    let super_net = load_network(&layout.model(Target::Super))?;
    let tc = config.finetune.with_seed(stage_seed(config.seed, Stage::Finetune(i)));
    let net = finetune_from_super(&super_net, i, &data, &tc)?;
    write(&layout.finetuned(i), net.to_bytes())?;
    Ok(net)
}

/// Sizes reported by [`pack_specialist`].
#[derive(Debug, Clone, PartialEq)]
pub struct PackSummary {
    pub superclass: usize,
    pub mode: DeltaMode,
    pub raw_bytes: usize,
    pub packed_bytes: usize,
    /// Bytes of the specialist in the matching precision: the network file
    /// for fp16, int8 storage for qat-int.
    pub reference_bytes: usize,
    pub ratio: f64,
    /// Ratio against the full-precision network file, for both modes.
    pub ratio_f32: f64,
}

fn reference_bytes(net: &Network, mode: DeltaMode) -> usize {
    match mode {
        DeltaMode::Fp16 => net.storage_bytes(),
        DeltaMode::QatInt => quantized_storage_bytes(net),
    }
}

fn summarize(i: usize, mode: DeltaMode, packed: &PackedDelta, specialist: &Network) -> Result<PackSummary> {
    let reference = reference_bytes(specialist, mode);
    Ok(PackSummary {
        superclass: i,
        mode,
        raw_bytes: packed.raw_size,
        packed_bytes: packed.packed_size(),
        reference_bytes: reference,
        ratio: compression_ratio(packed, reference)?,
        ratio_f32: compression_ratio(packed, specialist.storage_bytes())?,
    })
}

/// Delta-compresses finetuned specialist `i` against the superclass network.
pub fn pack_specialist(config: &ExperimentConfig, i: usize, mode: DeltaMode) -> Result<PackSummary> {
    let layout = config.layout();
    let base = load_network(&layout.model(Target::Super))?;
    let specialist = load_network(&layout.finetuned(i))?;
    let packed = pack(&compute_delta(&base, &specialist, i as u32, mode)?);
    write(&layout.delta(i, mode), &packed.bytes)?;
    summarize(i, mode, &packed, &specialist)
}

/// Rebuilds specialist `i` from its delta and writes it next to the models.
pub fn unpack_specialist(config: &ExperimentConfig, i: usize, mode: DeltaMode) -> Result<Network> {
    let layout = config.layout();
    let d = unpack(&read(&layout.delta(i, mode))?)?;
    if d.superclass_id as usize != i {
        return Err(Error::format(
            4,
            format!("delta file holds superclass {}, expected {i}", d.superclass_id),
        ));
    }
    let base = load_network(&layout.model(Target::Super))?;
    let net = reconstruct(&base, &d)?;
    write(&layout.reconstructed(i, mode), net.to_bytes())?;
    Ok(net)
}

/// Evaluates `mode` and writes report, confusion, prediction and (for the
/// efficient mode) ledger CSVs. `delta_mode` picks the deltas the efficient
/// mode loads.
pub fn eval(config: &ExperimentConfig, mode: EvalMode, delta_mode: DeltaMode) -> Result<Evaluation> {
    let layout = config.layout();
    let test = load_dataset(&layout.test_data())?;
    let manifest = test.manifest().clone();
    let n_super = manifest.n_super();
    let evaluation = match mode {
        EvalMode::Lowerbound => {
            let net = load_network(&layout.model(Target::Lowerbound))?;
            evaluate(mode, EvalModels::Monolithic(&net), &test)?
        }
        EvalMode::UpperboundOracle | EvalMode::TwoStageVanilla => {
            let (base, specialists) = load_all(&layout, n_super, |i| layout.finetuned(i))?;
            let registry = ModelRegistry::resident(base, specialists, manifest)?;
            evaluate(mode, EvalModels::Registry(&registry), &test)?
        }
        EvalMode::TwoStageEfficient => {
            let (base, packs) = load_all(&layout, n_super, |i| layout.delta(i, delta_mode))?;
            let registry = ModelRegistry::packed(base, packs, manifest)?;
            evaluate(mode, EvalModels::Registry(&registry), &test)?
        }
    };
    let label = eval_label(mode, delta_mode);
    write(&layout.eval_file(&label, "report"), report_csv(&evaluation.report))?;
    write(
        &layout.eval_file(&label, "confusion"),
        confusion_csv(&evaluation.report),
    )?;
    write(&layout.eval_file(&label, "predictions"), predictions_csv(&evaluation))?;
    if let Some(ledger) = &evaluation.ledger {
        write(&layout.eval_file(&label, "ledger"), ledger_csv(ledger))?;
    }
    Ok(evaluation)
}

trait Artifact: Sized {
    fn decode(bytes: Vec<u8>) -> Result<Self>;
}

impl Artifact for Network {
    fn decode(bytes: Vec<u8>) -> Result<Self> {
        Network::from_bytes(&bytes)
    }
}

impl Artifact for PackedDelta {
    fn decode(bytes: Vec<u8>) -> Result<Self> {
        PackedDelta::from_bytes(bytes)
    }
}

/// Loads the superclass network and one artifact per superclass, reporting
/// every missing file at once.
fn load_all<T: Artifact>(
    layout: &RunLayout,
    n_super: usize,
    path: impl Fn(usize) -> PathBuf,
) -> Result<(Network, Vec<T>)> {
    let base_path = layout.model(Target::Super);
    let paths: Vec<PathBuf> = (0..n_super).map(path).collect();
    let missing: Vec<PathBuf> = std::iter::once(&base_path)
        .chain(&paths)
        .filter(|p| !p.exists())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::Missing(missing));
    }
    let base = load_network(&base_path)?;
    let items = paths.iter().map(|p| T::decode(read(p)?)).collect::<Result<_>>()?;
    Ok((base, items))
}

/// Rendered summary of a run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub text: String,
    pub gap_csv: String,
    pub compression_csv: String,
}

/// Evaluations that [`report`] summarizes, in table order.
fn report_labels(layout: &RunLayout) -> Vec<String> {
    let mut labels: Vec<String> = [
        EvalMode::Lowerbound,
        EvalMode::UpperboundOracle,
        EvalMode::TwoStageVanilla,
    ]
    .iter()
    .map(|m| m.label().into())
    .collect();
    for mode in [DeltaMode::Fp16, DeltaMode::QatInt] {
        let label = eval_label(EvalMode::TwoStageEfficient, mode);
        if layout.eval_file(&label, "report").exists() {
            labels.push(label);
        }
    }
    labels
}

fn parse_summary(label: &str, csv: &str) -> Result<GapRow> {
    let line = csv
        .lines()
        .find(|l| l.split(',').nth(1) == Some("macro_average"))
        .ok_or_else(|| Error::Validation(format!("{label} report lacks a macro_average line")))?;
    let fields: Vec<&str> = line.split(',').collect();
    let bad = || Error::Validation(format!("malformed summary line in {label} report: {line}"));
    Ok(GapRow {
        label: label.to_string(),
        accuracy: fields.get(2).and_then(|v| v.parse().ok()).ok_or_else(bad)?,
        n_test: fields.get(3).and_then(|v| v.parse().ok()).ok_or_else(bad)?,
    })
}

fn parse_confusion(csv: &str) -> Result<(Vec<String>, Vec<Vec<u64>>)> {
    let mut lines = csv.lines();
    let names: Vec<String> = lines
        .next()
        .unwrap_or_default()
        .split(',')
        .skip(1)
        .map(String::from)
        .collect();
    let counts = lines
        .map(|l| {
            l.split(',')
                .skip(1)
                .map(|c| {
                    c.parse()
                        .map_err(|_| Error::Validation(format!("bad confusion cell {c:?}")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((names, counts))
}

/// Gap table across evaluated modes, the stage-1 confusion matrix in
/// percent, and per-superclass compression ratios with their averages.
/// Writes `report/summary.txt`, `report/gap.csv` and `report/compression.csv`.
pub fn report(run_dir: impl AsRef<Path>) -> Result<RunReport> {
    let layout = RunLayout::new(run_dir.as_ref());
    let manifest_path = layout.manifest();
    let labels = report_labels(&layout);
    let mut required: Vec<PathBuf> = vec![manifest_path.clone(), layout.model(Target::Super)];
    required.extend(labels.iter().map(|l| layout.eval_file(l, "report")));
    required.push(layout.eval_file(EvalMode::TwoStageVanilla.label(), "confusion"));
    let missing: Vec<PathBuf> = required.into_iter().filter(|p| !p.exists()).collect();
    if !missing.is_empty() {
        return Err(Error::Missing(missing));
    }
    let manifest = HierarchyManifest::parse(&String::from_utf8_lossy(&read(&manifest_path)?))?;

    let mut rows = Vec::new();
    for label in &labels {
        let csv = String::from_utf8_lossy(&read(&layout.eval_file(label, "report"))?).into_owned();
        rows.push(parse_summary(label, &csv)?);
    }
    let gap = gap_report(&rows)?;

    let confusion_text = String::from_utf8_lossy(&read(
        &layout.eval_file(EvalMode::TwoStageVanilla.label(), "confusion"),
    )?)
    .into_owned();
    let (names, counts) = parse_confusion(&confusion_text)?;
    let confusion = confusion_percent_text(&counts, &names)?;

    let base = load_network(&layout.model(Target::Super))?;
    let mut compression = Vec::new();
    for mode in [DeltaMode::Fp16, DeltaMode::QatInt] {
        let mut summaries = Vec::new();
        for i in 0..manifest.n_super() {
            let path = layout.delta(i, mode);
            if !path.exists() {
                continue;
            }
            let packed = PackedDelta::from_bytes(read(&path)?)?;
            let specialist = reconstruct(&base, &unpack(&packed.bytes)?)?;
            summaries.push((i, summarize(i, mode, &packed, &specialist)?));
        }
        let name = |i: usize| manifest.superclasses()[i].name.clone();
        let reference = match mode {
            DeltaMode::Fp16 => "f32",
            DeltaMode::QatInt => "int8",
        };
        for (i, s) in &summaries {
            compression.push(CompressionRow {
                superclass: name(*i),
                mode: mode.label().into(),
                reference: reference.into(),
                packed_bytes: s.packed_bytes,
                reference_bytes: s.reference_bytes,
                ratio: s.ratio,
            });
        }
        if mode == DeltaMode::QatInt {
            for (i, s) in &summaries {
                compression.push(CompressionRow {
                    superclass: name(*i),
                    mode: mode.label().into(),
                    reference: "f32".into(),
                    packed_bytes: s.packed_bytes,
                    reference_bytes: (s.packed_bytes as f64 / s.ratio_f32).round() as usize,
                    ratio: s.ratio_f32,
                });
            }
        }
    }
    let compression_csv = compression_csv(&compression);

    let text = format!(
        "accuracy by mode (macro average over superclasses, percent)\n{}\nstage-1 confusion, two_stage_vanilla (row percent)\n{}\ncompression\n{}",
        gap.text, confusion, compression_csv
    );
    write(&layout.report_file("summary.txt"), &text)?;
    write(&layout.report_file("gap.csv"), &gap.csv)?;
    write(&layout.report_file("compression.csv"), &compression_csv)?;
    Ok(RunReport {
        text,
        gap_csv: gap.csv,
        compression_csv,
    })
}

/// Runs every step in order: data, superclass and lowerbound networks,
/// scratch and finetuned specialists, deltas in both modes, all four
/// evaluations (efficient in both delta modes), and the report.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<RunReport> {
    let (train_set, _) = gen_data(config)?;
    let n_super = train_set.manifest().n_super();
    train_target(config, Target::Super)?;
    train_target(config, Target::Lowerbound)?;
    for i in 0..n_super {
        train_target(config, Target::Sub(i))?;
        finetune(config, i)?;
    }
    let modes: &[DeltaMode] = if config.finetune.qat {
        &[DeltaMode::Fp16, DeltaMode::QatInt]
    } else {
        &[DeltaMode::Fp16]
    };
    for &mode in modes {
        for i in 0..n_super {
            pack_specialist(config, i, mode)?;
            unpack_specialist(config, i, mode)?;
        }
    }
    for mode in [
        EvalMode::Lowerbound,
        EvalMode::UpperboundOracle,
        EvalMode::TwoStageVanilla,
    ] {
        eval(config, mode, config.delta_mode)?;
    }
    for &mode in modes {
        eval(config, EvalMode::TwoStageEfficient, mode)?;
    }
    report(&config.out_dir)
}
