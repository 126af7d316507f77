//! The external loop: dynamic-target updates, model-chain accumulation,
//! validation-driven selection, final model assembly and prediction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bench::RunConfig;
use crate::error::{Error, Result};
use crate::evolve::run_internal;
use crate::expr::{CaseMatrix, EvalCounter, ExprTree, SemanticVector};
use crate::scaling::{apply_scaling, ScaledModel, ScalingCoeffs};

/// Every generation best of every external iteration, ordered by
/// (ext_iter, int_iter).
#[derive(Clone, Debug)]
pub struct ModelChain {
    pub models: Vec<ScaledModel>,
    pub n_ext: usize,
    pub n_int: usize,
    /// Cumulative validation MSE per entry, filled by validation.
    pub val_mse: Option<Vec<f64>>,
}

impl ModelChain {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    fn ext_of(&self, idx: usize) -> usize {
        self.models[idx].ext_iter
    }

    fn is_iteration_final(&self, idx: usize) -> bool {
        self.models[idx].int_iter + 1 == self.n_int
    }

    fn final_of_ext(&self, ext: usize) -> &ScaledModel {
        let idx = ext * self.n_int + (self.n_int - 1);
        debug_assert_eq!(self.models[idx].ext_iter, ext);
        &self.models[idx]
    }
}

/// One member of a final model: a tree frozen with its coefficients.
#[derive(Clone, Debug)]
pub struct FinalMember {
    pub tree: ExprTree,
    pub coeffs: ScalingCoeffs,
    pub ext_iter: usize,
    pub int_iter: usize,
}

impl From<&ScaledModel> for FinalMember {
    fn from(m: &ScaledModel) -> Self {
        FinalMember {
            tree: m.tree.clone(),
            coeffs: m.coeffs,
            ext_iter: m.ext_iter,
            int_iter: m.int_iter,
        }
    }
}

/// The selected chain prefix; predicts by summing its members' scaled
/// outputs.
#[derive(Clone, Debug)]
pub struct FinalModel {
    pub members: Vec<FinalMember>,
}

const MODEL_FORMAT_TAG: &str = "sgpdt-model/1";

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    members: Vec<MemberDocument>,
}

#[derive(Serialize, Deserialize)]
struct MemberDocument {
    ext: usize,
    int: usize,
    a: f64,
    b: f64,
    expr: String,
}

impl FinalModel {
    /// Total node count over all members.
    pub fn size(&self) -> usize {
        self.members.iter().map(|m| m.tree.size()).sum()
    }

    /// Elementwise sum of each member's scaled output. Coefficients are
    /// the stored ones; they are never recomputed here.
    pub fn predict(&self, features: &CaseMatrix, counter: &EvalCounter) -> Result<SemanticVector> {
        if self.members.is_empty() {
            return Err(Error::contract("final model has no members"));
        }
        let mut sum = vec![0.0; features.rows()];
        for member in &self.members {
            let raw = member.tree.evaluate(features, counter)?;
            for (s, &r) in sum.iter_mut().zip(&raw) {
                *s += member.coeffs.a + member.coeffs.b * r;
            }
        }
        Ok(sum)
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDocument {
            format: MODEL_FORMAT_TAG.to_string(),
            members: self
                .members
                .iter()
                .map(|m| MemberDocument {
                    ext: m.ext_iter,
                    int: m.int_iter,
                    a: m.coeffs.a,
                    b: m.coeffs.b,
                    expr: m.tree.to_prefix_string(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("model document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| Error::data(format!("invalid model JSON: {e}")))?;
        if doc.format != MODEL_FORMAT_TAG {
            return Err(Error::data(format!(
                "unsupported model format '{}', expected '{MODEL_FORMAT_TAG}'",
                doc.format
            )));
        }
        let members = doc
            .members
            .iter()
            .map(|m| {
                Ok(FinalMember {
                    tree: ExprTree::parse(&m.expr)?,
                    coeffs: ScalingCoeffs { a: m.a, b: m.b },
                    ext_iter: m.ext,
                    int_iter: m.int,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FinalModel { members })
    }
}

/// Diagnostics of one full run.
#[derive(Clone, Debug)]
pub struct RunTrace {
    /// Dynamic target at the start of each external iteration.
    pub targets: Vec<Vec<f64>>,
    /// Residual left after the last external iteration.
    pub final_residual: Vec<f64>,
    /// Raw cumulative validation MSE per chain index.
    pub val_mse: Vec<f64>,
    /// Rolling-mean smoothed validation MSE per chain index.
    pub smoothed_val_mse: Vec<f64>,
    /// Chain index chosen by validation.
    pub selected_index: usize,
    pub train_node_ops: u64,
    pub validation_node_ops: u64,
}

/// Cumulative predictor at a chain index: the sum of the final models of
/// every external iteration completed before `ext(upto)`, plus the model
/// at `upto` itself. Mid-run bests replace (not add to) the running
/// iteration's contribution, since successive generation bests are
/// alternative fits of the same target.
pub fn cumulative_prediction(
    chain: &ModelChain,
    upto: usize,
    features: &CaseMatrix,
    counter: &EvalCounter,
) -> Result<SemanticVector> {
    if upto >= chain.len() {
        return Err(Error::contract(format!(
            "chain index {upto} out of range (length {})",
            chain.len()
        )));
    }
    let mut sum = vec![0.0; features.rows()];
    let mut add_model = |m: &ScaledModel| -> Result<()> {
        let raw = m.tree.evaluate(features, counter)?;
        for (s, &r) in sum.iter_mut().zip(&raw) {
            *s += m.coeffs.a + m.coeffs.b * r;
        }
        Ok(())
    };
    for ext in 0..chain.ext_of(upto) {
        add_model(chain.final_of_ext(ext))?;
    }
    add_model(&chain.models[upto])?;
    Ok(sum)
}

/// Trailing rolling mean; partial windows at the start average over the
/// points available so far.
pub fn rolling_mean(values: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= window {
            sum -= values[i - window];
        }
        let count = (i + 1).min(window);
        out.push(sum / count as f64);
    }
    out
}

/// Index selection over a raw MSE sequence: argmin of the trailing rolling
/// mean; exact ties on the smoothed value are broken by the smaller raw
/// MSE, then by the earliest index.
pub fn select_index(raw_mse: &[f64], window: usize) -> usize {
    let smoothed = rolling_mean(raw_mse, window);
    let mut best = 0;
    for i in 1..smoothed.len() {
        let ord = smoothed[i]
            .total_cmp(&smoothed[best])
            .then(raw_mse[i].total_cmp(&raw_mse[best]));
        if ord == std::cmp::Ordering::Less {
            best = i;
        }
    }
    best
}

/// Outcome of validation selection.
#[derive(Clone, Debug)]
pub struct SelectionOutcome {
    pub final_model: FinalModel,
    pub selected_index: usize,
    pub val_mse: Vec<f64>,
    pub smoothed_val_mse: Vec<f64>,
}

/// Computes the cumulative validation MSE at every chain index, smooths it
/// with a trailing rolling mean, and returns the final models of all fully
/// completed external iterations before the chosen index, appending the
/// mid-run model at that index when it is not an iteration-final model.
pub fn validate_and_select(
    chain: &ModelChain,
    val_features: &CaseMatrix,
    val_targets: &[f64],
    window: usize,
    counter: &EvalCounter,
) -> Result<SelectionOutcome> {
    if chain.is_empty() {
        return Err(Error::contract("cannot select from an empty chain"));
    }
    if window == 0 {
        return Err(Error::config("rolling window must be at least 1"));
    }
    if val_features.rows() < 2 {
        return Err(Error::config(format!(
            "validation set has {} cases, need at least 2",
            val_features.rows()
        )));
    }
    if val_targets.len() != val_features.rows() {
        return Err(Error::contract(
            "validation targets do not match validation features",
        ));
    }

    let m = val_features.rows();
    // Each model's scaled validation output, evaluated once.
    let preds: Vec<Vec<f64>> = chain
        .models
        .iter()
        .map(|model| {
            let raw = model.tree.evaluate(val_features, counter)?;
            Ok(apply_scaling(&raw, model.coeffs))
        })
        .collect::<Result<Vec<_>>>()?;

    // Running sum of completed-iteration finals, in external order. The
    // accumulation order matches `cumulative_prediction` exactly.
    let mut base = vec![0.0; m];
    let mut val_mse = Vec::with_capacity(chain.len());
    for (idx, pred) in preds.iter().enumerate() {
        let mut sq = 0.0;
        for j in 0..m {
            let d = base[j] + pred[j] - val_targets[j];
            sq += d * d;
        }
        val_mse.push(sq / m as f64);
        if chain.is_iteration_final(idx) {
            for j in 0..m {
                base[j] += pred[j];
            }
        }
    }

    let smoothed_val_mse = rolling_mean(&val_mse, window);
    let selected_index = select_index(&val_mse, window);

    let selected_ext = chain.ext_of(selected_index);
    let mut members: Vec<FinalMember> = (0..selected_ext)
        .map(|e| FinalMember::from(chain.final_of_ext(e)))
        .collect();
    members.push(FinalMember::from(&chain.models[selected_index]));

    Ok(SelectionOutcome {
        final_model: FinalModel { members },
        selected_index,
        val_mse,
        smoothed_val_mse,
    })
}

/// The full external loop: `n_ext` internal runs, each against the residual
/// of the previous run's partial model, followed by validation selection.
pub fn run_sgpdt<R: Rng + ?Sized>(
    train_features: &CaseMatrix,
    train_targets: &[f64],
    val_features: &CaseMatrix,
    val_targets: &[f64],
    cfg: &RunConfig,
    rng: &mut R,
    counter: &EvalCounter,
) -> Result<(FinalModel, ModelChain, RunTrace)> {
    cfg.validate()?;
    let ops_start = counter.total();

    let mut target = train_targets.to_vec();
    let mut models = Vec::with_capacity(cfg.n_ext * cfg.n_int);
    let mut targets_trace = Vec::with_capacity(cfg.n_ext);
    for ext_iter in 0..cfg.n_ext {
        targets_trace.push(target.clone());
        let result = run_internal(&target, train_features, cfg, ext_iter, rng, counter)?;
        // The residual error becomes the next target.
        for (t, &p) in target.iter_mut().zip(&result.final_best_train_output) {
            *t -= p;
        }
        models.extend(result.best_per_generation);
    }
    let train_node_ops = counter.total() - ops_start;

    let mut chain = ModelChain {
        models,
        n_ext: cfg.n_ext,
        n_int: cfg.n_int,
        val_mse: None,
    };
    let ops_before_val = counter.total();
    let outcome = validate_and_select(&chain, val_features, val_targets, cfg.rolling_window, counter)?;
    let validation_node_ops = counter.total() - ops_before_val;
    chain.val_mse = Some(outcome.val_mse.clone());

    let trace = RunTrace {
        targets: targets_trace,
        final_residual: target,
        val_mse: outcome.val_mse,
        smoothed_val_mse: outcome.smoothed_val_mse,
        selected_index: outcome.selected_index,
        train_node_ops,
        validation_node_ops,
    };
    Ok((outcome.final_model, chain, trace))
}
