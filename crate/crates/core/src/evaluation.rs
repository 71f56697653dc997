//! Dataset-level evaluation: runs the tokenizer over a split, denormalizes,
//! and aggregates the full metric suite.
//!
//! Aggregation conventions: means over samples for nMAE, nRMSE, rL1, rL2,
//! local variance error, and F_log; maxima for nLinf and Delta P_max;
//! spectral coherence is a single batch-level quantity; token statistics
//! pool every emitted index over the combined stream alphabet.

use crate::datagen::{Dataset, DatasetManifest, Split};
use crate::error::{CoreError, Result};
use crate::field::{denormalize, normalize, Field};
use crate::metrics::{
    error_bound_check, local_variance_error, log_spectral_fidelity, max_spectral_difference,
    physical_errors, spectral_coherence_min, token_stats, ErrorBound, MetricsReport,
    TokenHistogram,
};
use crate::model::{Model, Variant};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub model: String,
    pub dataset: String,
    pub split: String,
    pub metrics: MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_bound: Option<ErrorBound>,
}

pub struct EvalArtifacts {
    pub summary: EvalSummary,
    /// Mean radial power spectra over the split: (truth, reconstruction).
    pub spectrum: (Vec<f64>, Vec<f64>),
    pub tokens: Vec<Option<crate::model::TokenizedSample>>,
}

struct SampleOutcome {
    truth: Field,
    recon: Field,
    cont: Field,
    tokens: Option<crate::model::TokenizedSample>,
    phys: crate::metrics::PhysicalErrors,
    var_err: f64,
    f_log_raw: f64,
    dp_max: f64,
}

fn eval_one(model: &Model<f32>, manifest: &DatasetManifest, raw: &Field) -> Result<SampleOutcome> {
    let stats = manifest.stats();
    let x_norm = normalize(raw, &stats)?;
    let out = model.evaluate_sample(&x_norm)?;
    let recon = denormalize(&out.quantized, &stats)?;
    let cont = denormalize(&out.continuous, &stats)?;
    let phys = physical_errors(raw, &recon, stats.sigma_g)?;
    let var_err = local_variance_error(raw, &recon)?;
    let f_log_raw = log_spectral_fidelity(raw, &recon)?;
    let dp_max = max_spectral_difference(raw, &recon)?;
    Ok(SampleOutcome {
        truth: raw.clone(),
        recon,
        cont,
        tokens: out.tokens,
        phys,
        var_err,
        f_log_raw,
        dp_max,
    })
}

/// Evaluate a model on one split of one dataset.
pub fn evaluate(
    model: &Model<f32>,
    dataset: &Dataset,
    split: Split,
    threads: usize,
) -> Result<EvalArtifacts> {
    let samples = dataset.split(split);
    if samples.is_empty() {
        return Err(CoreError::EmptySplit);
    }
    let manifest = &dataset.manifest;

    let outcomes: Vec<SampleOutcome> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CoreError::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            samples
                .par_iter()
                .map(|raw| eval_one(model, manifest, raw))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        samples
            .iter()
            .map(|raw| eval_one(model, manifest, raw))
            .collect::<Result<Vec<_>>>()?
    };

    let n = outcomes.len() as f64;
    let mean = |f: &dyn Fn(&SampleOutcome) -> f64| outcomes.iter().map(|o| f(o)).sum::<f64>() / n;
    let max = |f: &dyn Fn(&SampleOutcome) -> f64| {
        outcomes.iter().map(|o| f(o)).fold(f64::NEG_INFINITY, f64::max)
    };
    let mean_opt = |f: &dyn Fn(&SampleOutcome) -> Option<f64>| {
        let vals: Vec<f64> = outcomes.iter().filter_map(|o| f(o)).collect();
        (vals.len() == outcomes.len()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };

    let truths: Vec<Field> = outcomes.iter().map(|o| o.truth.clone()).collect();
    let recons: Vec<Field> = outcomes.iter().map(|o| o.recon.clone()).collect();
    let conts: Vec<Field> = outcomes.iter().map(|o| o.cont.clone()).collect();

    let mut metrics = MetricsReport {
        nmae: mean(&|o| o.phys.nmae),
        nrmse: mean(&|o| o.phys.nrmse),
        nlinf: max(&|o| o.phys.nlinf),
        rl1: mean_opt(&|o| o.phys.rl1),
        rl2: mean_opt(&|o| o.phys.rl2),
        delta_sigma2_loc: mean(&|o| o.var_err),
        gamma_min: spectral_coherence_min(&truths, &recons)?,
        delta_p_max: max(&|o| o.dp_max),
        sample_count: outcomes.len(),
        ..Default::default()
    };
    metrics.set_f_log(mean(&|o| o.f_log_raw));

    if model.config.variant != Variant::Continuous {
        let vocab: u64 = model.stream_specs().iter().map(|s| s.codebook_size()).sum();
        let mut hist = TokenHistogram::new(vocab);
        for o in &outcomes {
            hist.record(o.tokens.as_ref().expect("quantized variants emit tokens"));
        }
        let stats = token_stats(&hist)?;
        metrics.utilization = Some(stats.utilization);
        metrics.entropy_bits = Some(stats.entropy_bits);
        metrics.redundancy = Some(stats.redundancy);
    }

    let error_bound = (model.config.variant != Variant::Continuous)
        .then(|| error_bound_check(&truths, &conts, &recons))
        .transpose()?;

    // mean radial spectra for the dump
    let (h, w) = (manifest.height, manifest.width);
    let bins = crate::metrics::bin_count(h, w);
    let mut spec_truth = vec![0.0f64; bins];
    let mut spec_recon = vec![0.0f64; bins];
    for o in &outcomes {
        let pt: Vec<f64> = o.truth.data.iter().map(|&v| v as f64).collect();
        let pr: Vec<f64> = o.recon.data.iter().map(|&v| v as f64).collect();
        for (acc, v) in spec_truth.iter_mut().zip(crate::metrics::radial_power_spectrum(&pt, h, w)) {
            *acc += v / n;
        }
        for (acc, v) in spec_recon.iter_mut().zip(crate::metrics::radial_power_spectrum(&pr, h, w)) {
            *acc += v / n;
        }
    }

    Ok(EvalArtifacts {
        summary: EvalSummary {
            model: model.config.variant.as_str().to_string(),
            dataset: manifest.family.as_str().to_string(),
            split: match split {
                Split::Train => "train",
                Split::Val => "val",
                Split::Test => "test",
            }
            .to_string(),
            metrics,
            error_bound,
        },
        spectrum: (spec_truth, spec_recon),
        tokens: outcomes.into_iter().map(|o| o.tokens).collect(),
    })
}
