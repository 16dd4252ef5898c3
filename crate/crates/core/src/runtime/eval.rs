use std::fmt;
use std::str::FromStr;

use super::{infer_vanilla, infer_with_superclass, CostLedger, EfficientSession, ModelRegistry};
use crate::data::{Dataset, HierarchyManifest};
use crate::error::{Error, Result};
use crate::nn::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EvalMode {
    /// One network over all subclasses.
    Lowerbound,
    /// Specialists selected by the true superclass.
    UpperboundOracle,
    /// Router plus resident specialists.
    TwoStageVanilla,
    /// Router plus specialists rebuilt from packed deltas.
    TwoStageEfficient,
}

impl EvalMode {
    pub const ALL: [EvalMode; 4] = [
        EvalMode::Lowerbound,
        EvalMode::UpperboundOracle,
        EvalMode::TwoStageVanilla,
        EvalMode::TwoStageEfficient,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EvalMode::Lowerbound => "lowerbound",
            EvalMode::UpperboundOracle => "upperbound",
            EvalMode::TwoStageVanilla => "two_stage_vanilla",
            EvalMode::TwoStageEfficient => "two_stage_efficient",
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EvalMode::ALL
            .into_iter()
            .find(|m| m.label() == s || (s == "upperbound_oracle" && *m == EvalMode::UpperboundOracle))
            .ok_or_else(|| Error::Mode(format!("unknown evaluation mode {s:?}")))
    }
}

/// Models handed to [`evaluate`].
#[derive(Debug, Clone, Copy)]
pub enum EvalModels<'a> {
    /// The all-subclass network.
    Monolithic(&'a Network),
    Registry(&'a ModelRegistry),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub superclass_names: Vec<String>,
    /// Subclass accuracy in percent over the rows of each true superclass.
    pub per_superclass: Vec<f64>,
    pub per_superclass_n: Vec<usize>,
    /// Mean of `per_superclass`.
    pub macro_accuracy: f64,
    /// Correct rows over all rows, in percent.
    pub micro_accuracy: f64,
    /// Stage-1 accuracy in percent.
    pub superclass_accuracy: f64,
    /// `confusion[true][predicted]` superclass counts.
    pub confusion: Vec<Vec<u64>>,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    /// (superclass, global subclass) per test row.
    pub predictions: Vec<(usize, usize)>,
    pub ledger: Option<CostLedger>,
}

/// `counts[i][j]` = number of rows with truth `i` predicted as `j`.
pub fn confusion_matrix(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<Vec<Vec<u64>>> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension {
            left: vec![pred.len()],
            right: vec![truth.len()],
        });
    }
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        for label in [p, t] {
            if label >= n_classes {
                return Err(Error::Index {
                    index: label,
                    limit: n_classes,
                });
            }
        }
        counts[t][p] += 1;
    }
    Ok(counts)
}

/// Runs `mode` over `test`. The efficient mode uses a fresh session with the
/// one-entry cache; see [`evaluate_session`] for other session setups.
pub fn evaluate(mode: EvalMode, models: EvalModels<'_>, test: &Dataset) -> Result<Evaluation> {
    let manifest = test.manifest();
    let predictions = match (mode, models) {
        (EvalMode::Lowerbound, EvalModels::Monolithic(net)) => {
            if net.head_dim() != manifest.n_sub() {
                return Err(Error::contract(format!(
                    "lowerbound network has {} outputs for {} subclasses",
                    net.head_dim(),
                    manifest.n_sub()
                )));
            }
            let subs = net.predict(test.features())?;
            subs.into_iter()
                .map(|s| Ok((manifest.super_of(s)?, s)))
                .collect::<Result<Vec<_>>>()?
        }
        (EvalMode::UpperboundOracle, EvalModels::Registry(reg)) => {
            check_manifest(reg, manifest)?;
            let supers = test.super_labels();
            let mut out = Vec::with_capacity(test.len());
            for (r, &s) in supers.iter().enumerate() {
                out.push((s, infer_with_superclass(reg, s, test.features().row(r))?));
            }
            out
        }
        (EvalMode::TwoStageVanilla, EvalModels::Registry(reg)) => {
            check_manifest(reg, manifest)?;
            (0..test.len())
                .map(|r| infer_vanilla(reg, test.features().row(r)))
                .collect::<Result<Vec<_>>>()?
        }
        (EvalMode::TwoStageEfficient, EvalModels::Registry(reg)) => {
            return evaluate_session(&mut EfficientSession::new(reg)?, test);
        }
        (mode, _) => return Err(Error::contract(format!("models do not fit evaluation mode {mode}"))),
    };
    let report = build_report(mode, &predictions, test)?;
    Ok(Evaluation {
        report,
        predictions,
        ledger: None,
    })
}

/// Efficient evaluation through an existing session, in test-set order.
/// The returned ledger is the session's cumulative ledger.
pub fn evaluate_session(session: &mut EfficientSession<'_>, test: &Dataset) -> Result<Evaluation> {
    check_manifest(session.registry(), test.manifest())?;
    let mut predictions = Vec::with_capacity(test.len());
    for r in 0..test.len() {
        let (s, sub, _) = session.infer(test.features().row(r))?;
        predictions.push((s, sub));
    }
    let report = build_report(EvalMode::TwoStageEfficient, &predictions, test)?;
    Ok(Evaluation {
        report,
        predictions,
        ledger: Some(session.ledger()),
    })
}

fn check_manifest(reg: &ModelRegistry, manifest: &HierarchyManifest) -> Result<()> {
    if reg.manifest() != manifest {
        return Err(Error::contract("registry and test set use different hierarchies"));
    }
    Ok(())
}

fn percent(num: usize, den: usize) -> f64 {
    100.0 * num as f64 / den as f64
}

pub(crate) fn build_report(mode: EvalMode, predictions: &[(usize, usize)], test: &Dataset) -> Result<EvalReport> {
    let manifest = test.manifest();
    let n_super = manifest.n_super();
    let truth_super = test.super_labels();
    let mut hits = vec![0usize; n_super];
    let mut totals = vec![0usize; n_super];
    for ((&(_, p_sub), &t_sub), &t_super) in predictions.iter().zip(test.sub_labels()).zip(&truth_super) {
        totals[t_super] += 1;
        if p_sub == t_sub {
            hits[t_super] += 1;
        }
    }
    if let Some(empty) = totals.iter().position(|&n| n == 0) {
        return Err(Error::contract(format!("test set has no rows for superclass {empty}")));
    }
    let pred_super: Vec<usize> = predictions.iter().map(|p| p.0).collect();
    let confusion = confusion_matrix(&pred_super, &truth_super, n_super)?;
    let per_superclass: Vec<f64> = hits.iter().zip(&totals).map(|(&h, &n)| percent(h, n)).collect();
    let diagonal: u64 = (0..n_super).map(|i| confusion[i][i]).sum();
    Ok(EvalReport {
        mode,
        superclass_names: manifest.superclasses().iter().map(|s| s.name.clone()).collect(),
        macro_accuracy: per_superclass.iter().sum::<f64>() / n_super as f64,
        micro_accuracy: percent(hits.iter().sum(), test.len()),
        superclass_accuracy: percent(diagonal as usize, test.len()),
        per_superclass,
        per_superclass_n: totals,
        confusion,
        n_test: test.len(),
    })
}
