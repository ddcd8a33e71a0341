//! Composite runs: clustering a dataset end to end and the noise-robustness
//! sweep comparing robust scales against plain k-NN local scaling.

use serde::{Deserialize, Serialize};

use crate::datasets::{add_noise, gen_two_spirals, Dataset, NoiseSpec};
use crate::error::{Error, Result};
use crate::exec::{derive_seed, map_indexed};
use crate::label_propagation::GraphMethod;
use crate::scale_estimation::ScaleEstimationConfig;
use crate::spectral::{nmi, spectral_cluster_with, ClusteringResult, DEFAULT_RESTARTS};

const STAGE_BASE_DATA: u64 = 41;
const STAGE_NOISE: u64 = 42;
const STAGE_PIPELINE: u64 = 43;

/// Builds the graph with `method`, clusters it into `c` groups and scores
/// against the dataset's labels when present.
pub fn cluster_dataset(
    data: &Dataset,
    method: GraphMethod,
    config: &ScaleEstimationConfig,
    c: usize,
    restarts: usize,
) -> Result<ClusteringResult> {
    let w = method.affinity(data, config)?;
    let mut result = spectral_cluster_with(&w, c, config.seed, restarts)?;
    if let Some(labels) = data.labels() {
        result.nmi = Some(nmi(labels, &result.assignments)?);
    }
    Ok(result)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m == 0 {
        f64::NAN
    } else if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseStudyConfig {
    pub n_per_class: usize,
    /// Jitter of the clean spirals before the study's perturbation.
    pub base_noise: f64,
    pub sigmas: Vec<f64>,
    pub fractions: Vec<f64>,
    pub repeats: usize,
    pub restarts: usize,
    pub graph: ScaleEstimationConfig,
    pub seed: u64,
}

impl Default for NoiseStudyConfig {
    fn default() -> Self {
        Self {
            n_per_class: 100,
            base_noise: crate::datasets::DEFAULT_SPIRAL_NOISE,
            sigmas: vec![0.1, 0.2],
            fractions: vec![0.25, 0.5, 1.0],
            repeats: 5,
            restarts: DEFAULT_RESTARTS,
            graph: ScaleEstimationConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseStudyRow {
    pub method: String,
    pub sigma_noise: f64,
    pub fraction: f64,
    /// Median over repeats.
    pub nmi: f64,
    pub per_repeat: Vec<f64>,
}

/// Two-spirals NMI for both graph constructions over the `sigmas × fractions`
/// grid. Rows are ordered by sigma, then fraction, then method.
pub fn noise_study(config: &NoiseStudyConfig) -> Result<Vec<NoiseStudyRow>> {
    if config.repeats == 0 {
        return Err(Error::Config("repeats must be positive".into()));
    }
    let cells: Vec<(f64, f64)> = config
        .sigmas
        .iter()
        .flat_map(|&s| config.fractions.iter().map(move |&f| (s, f)))
        .collect();
    let methods = [GraphMethod::Robust, GraphMethod::LocalScaling];
    let jobs = cells.len() * config.repeats;
    let scores = map_indexed(config.graph.execution, jobs, |job| -> Result<[f64; 2]> {
        let (cell, rep) = (job / config.repeats, job % config.repeats);
        let (sigma_noise, fraction) = cells[cell];
        let clean = gen_two_spirals(
            config.n_per_class,
            config.base_noise,
            derive_seed(config.seed, STAGE_BASE_DATA, rep as u64),
        )?;
        let spec = NoiseSpec {
            sigma_noise,
            fraction,
            seed: derive_seed(config.seed, STAGE_NOISE, job as u64),
        };
        let noisy = add_noise(&clean, &spec)?;
        let graph = ScaleEstimationConfig {
            seed: derive_seed(config.seed, STAGE_PIPELINE, rep as u64),
            ..config.graph.clone()
        };
        let mut out = [0.0; 2];
        for (m, method) in methods.iter().enumerate() {
            out[m] = cluster_dataset(&noisy, *method, &graph, 2, config.restarts)?
                .nmi
                .expect("spirals are labelled");
        }
        Ok(out)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(cells.len() * 2);
    for (cell, &(sigma_noise, fraction)) in cells.iter().enumerate() {
        for (m, method) in methods.iter().enumerate() {
            let per_repeat: Vec<f64> =
                (0..config.repeats).map(|r| scores[cell * config.repeats + r][m]).collect();
            let nmi = median(&mut per_repeat.clone());
            rows.push(NoiseStudyRow { method: method.name().into(), sigma_noise, fraction, nmi, per_repeat });
        }
    }
    Ok(rows)
}

pub fn write_noise_study_csv<W: std::io::Write>(rows: &[NoiseStudyRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "sigma_noise", "fraction", "nmi"])?;
    for r in rows {
        w.write_record([r.method.clone(), r.sigma_noise.to_string(), r.fraction.to_string(), r.nmi.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
