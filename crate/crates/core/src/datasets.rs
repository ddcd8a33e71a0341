//! Datasets: the sample container, synthetic generators (two spirals,
//! pinwheel), Gaussian noise injection and headerless CSV ingestion.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};

/// N samples by D features, with optional class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Array2<f64>,
    labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(samples: Array2<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        let (n, d) = samples.dim();
        if n < 2 {
            return Err(Error::Input(format!("need at least 2 samples, got {n}")));
        }
        if d < 1 {
            return Err(Error::Input("need at least 1 feature".into()));
        }
        if let Some(((i, j), v)) = samples.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite feature {v} at sample {i}, feature {j}")));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Input(format!("{} labels for {n} samples", l.len())));
            }
        }
        Ok(Self { samples, labels })
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    /// Number of distinct classes, if labelled.
    pub fn n_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| {
            let mut u = l.clone();
            u.sort_unstable();
            u.dedup();
            u.len()
        })
    }

    pub fn without_labels(&self) -> Self {
        Self { samples: self.samples.clone(), labels: None }
    }

    /// Column-wise z-score standardization; constant columns are only centred.
    pub fn standardized(&self) -> Self {
        let mut samples = self.samples.clone();
        let n = samples.nrows() as f64;
        for mut col in samples.axis_iter_mut(Axis(1)) {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
            col.mapv_inplace(|v| (v - mean) * scale);
        }
        Self { samples, labels: self.labels.clone() }
    }

    /// Reorders samples (and labels) so that sample `order[i]` becomes row `i`.
    pub fn select(&self, order: &[usize]) -> Self {
        let samples = self.samples.select(Axis(0), order);
        let labels = self.labels.as_ref().map(|l| order.iter().map(|&i| l[i]).collect());
        Self { samples, labels }
    }
}

/// Default jitter for generated spirals.
pub const DEFAULT_SPIRAL_NOISE: f64 = 0.05;

/// Outer radius of generated spirals.
pub const SPIRAL_RADIUS: f64 = 4.0;

/// Two interleaved Archimedean spirals: radius `SPIRAL_RADIUS · t`, angle 2πt
/// for t in [0.25, 1], the second spiral rotated by π. Labels are 0 and 1.
pub fn gen_two_spirals(n_per_class: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n_per_class < 10 {
        return Err(Error::Config(format!("n_per_class must be >= 10, got {n_per_class}")));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::Config(format!("noise_sd must be >= 0, got {noise_sd}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * n_per_class;
    let mut samples = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for class in 0..2 {
        let offset = PI * class as f64;
        for i in 0..n_per_class {
            let t = 0.25 + 0.75 * i as f64 / (n_per_class - 1) as f64;
            let theta = 2.0 * PI * t + offset;
            let row = class * n_per_class + i;
            samples[[row, 0]] = SPIRAL_RADIUS * t * theta.cos();
            samples[[row, 1]] = SPIRAL_RADIUS * t * theta.sin();
            labels.push(class);
        }
    }
    if noise_sd > 0.0 {
        for v in samples.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += noise_sd * z;
        }
    }
    Dataset::new(samples, Some(labels))
}

/// Pinwheel shape parameters (radially warped Gaussian arms).
#[derive(Debug, Clone, Copy)]
pub struct PinwheelShape {
    pub radial_sd: f64,
    pub tangential_sd: f64,
    pub rate: f64,
}

impl Default for PinwheelShape {
    fn default() -> Self {
        Self { radial_sd: 0.3, tangential_sd: 0.05, rate: 0.25 }
    }
}

pub fn gen_pinwheel(n_per_class: usize, n_classes: usize, seed: u64) -> Result<Dataset> {
    gen_pinwheel_with(n_per_class, n_classes, PinwheelShape::default(), seed)
}

pub fn gen_pinwheel_with(
    n_per_class: usize,
    n_classes: usize,
    shape: PinwheelShape,
    seed: u64,
) -> Result<Dataset> {
    if n_classes < 2 {
        return Err(Error::Config(format!("n_classes must be >= 2, got {n_classes}")));
    }
    if n_per_class < 1 {
        return Err(Error::Config("n_per_class must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_per_class * n_classes;
    let mut samples = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for class in 0..n_classes {
        let base_angle = 2.0 * PI * class as f64 / n_classes as f64;
        for i in 0..n_per_class {
            let z0: f64 = StandardNormal.sample(&mut rng);
            let z1: f64 = StandardNormal.sample(&mut rng);
            let radial = 1.0 + shape.radial_sd * z0;
            let tangential = shape.tangential_sd * z1;
            let angle = base_angle + shape.rate * radial.exp();
            let (s, c) = angle.sin_cos();
            let row = class * n_per_class + i;
            samples[[row, 0]] = radial * c - tangential * s;
            samples[[row, 1]] = radial * s + tangential * c;
            labels.push(class);
        }
    }
    Dataset::new(samples, Some(labels))
}

/// Gaussian perturbation of a random subset of samples.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub sigma_noise: f64,
    pub fraction: f64,
    pub seed: u64,
}

impl NoiseSpec {
    fn affected(&self, n: usize) -> Result<usize> {
        if !(self.sigma_noise > 0.0 && self.sigma_noise.is_finite()) {
            return Err(Error::Config(format!("sigma_noise must be > 0, got {}", self.sigma_noise)));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Config(format!("fraction must be in (0, 1], got {}", self.fraction)));
        }
        let m = (self.fraction * n as f64 - 1e-9).ceil() as usize;
        Ok(m.clamp(1, n))
    }
}

/// Adds N(0, sigma_noise²) to every feature of ⌈fraction·N⌉ randomly chosen rows.
pub fn add_noise(data: &Dataset, spec: &NoiseSpec) -> Result<Dataset> {
    let n = data.len();
    let m = spec.affected(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = sample(&mut rng, n, m).into_vec();
    rows.sort_unstable();
    let normal = Normal::new(0.0, spec.sigma_noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut samples = data.samples.clone();
    for &r in &rows {
        for v in samples.row_mut(r).iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Dataset::new(samples, data.labels.clone())
}

/// Reads a headerless numeric CSV. With `label_column`, the last column holds
/// non-negative integer class ids.
pub fn load_csv(path: &Path, label_column: bool, standardize: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let parse_err = |row: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message,
    };
    let mut width = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(parse_err(row, record.len(), format!("expected {w} columns, found {}", record.len())));
            }
            _ => {}
        }
        let n_features = if label_column { record.len() - 1 } else { record.len() };
        if n_features == 0 {
            return Err(parse_err(row, 1, "no feature columns".into()));
        }
        for (c, cell) in record.iter().enumerate() {
            let column = c + 1;
            if c < n_features {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(row, column, format!("not a number: {cell:?}")))?;
                if !v.is_finite() {
                    return Err(parse_err(row, column, format!("non-finite value: {cell:?}")));
                }
                values.push(v);
            } else {
                let label = parse_label(cell)
                    .ok_or_else(|| parse_err(row, column, format!("not a class id: {cell:?}")))?;
                labels.push(label);
            }
        }
        rows += 1;
    }
    let d = width.map(|w| if label_column { w - 1 } else { w }).unwrap_or(0);
    let samples = Array2::from_shape_vec((rows, d), values)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let data = Dataset::new(samples, label_column.then_some(labels))?;
    Ok(if standardize { data.standardized() } else { data })
}

fn parse_label(cell: &str) -> Option<usize> {
    if let Ok(v) = cell.parse::<usize>() {
        return Some(v);
    }
    let v: f64 = cell.parse().ok()?;
    (v >= 0.0 && v.fract() == 0.0 && v < usize::MAX as f64).then_some(v as usize)
}

/// Writes samples, followed by the label column when present.
pub fn write_csv<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for (i, row) in data.samples.outer_iter().enumerate() {
        let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(l) = &data.labels {
            record.push(l[i].to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
