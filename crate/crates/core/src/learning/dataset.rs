use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::LearningError;

/// Dense row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub d_in: usize,
    pub classes: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        d_in: usize,
        classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self, LearningError> {
        if d_in == 0 || classes < 2 {
            return Err(LearningError::Degenerate(
                "need d_in >= 1 and classes >= 2".into(),
            ));
        }
        if features.len() != labels.len() * d_in {
            return Err(LearningError::Degenerate(
                "feature matrix does not match label count".into(),
            ));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= classes) {
            return Err(LearningError::Degenerate(format!("label {l} out of range")));
        }
        Ok(Dataset {
            d_in,
            classes,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d_in..(i + 1) * self.d_in]
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.d_in);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            d_in: self.d_in,
            classes: self.classes,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Reads `label,f0,..,f{d-1}` rows (with a header line).
    pub fn read_csv<R: Read>(reader: R, classes: usize) -> Result<Self, LearningError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| LearningError::Csv(1, e.to_string()))?
            .clone();
        if headers.get(0) != Some("label") {
            return Err(LearningError::Csv(1, "first column must be `label`".into()));
        }
        for (i, h) in headers.iter().skip(1).enumerate() {
            if h != format!("f{i}") {
                return Err(LearningError::Csv(
                    1,
                    format!("unexpected column {h:?}, expected f{i}"),
                ));
            }
        }
        let d_in = headers.len() - 1;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| LearningError::Csv(line, e.to_string()))?;
            let label: usize = rec[0]
                .parse()
                .map_err(|_| LearningError::Csv(line, format!("bad label {:?}", &rec[0])))?;
            labels.push(label);
            for f in rec.iter().skip(1) {
                features.push(
                    f.parse::<f64>()
                        .map_err(|_| LearningError::Csv(line, format!("not a number: {f:?}")))?,
                );
            }
        }
        Dataset::new(d_in, classes, features, labels)
    }

    pub fn load_csv(path: &Path, classes: usize) -> Result<Self, LearningError> {
        let f = std::fs::File::open(path)
            .map_err(|e| LearningError::Csv(0, format!("{}: {e}", path.display())))?;
        Self::read_csv(f, classes)
    }
}

/// Parameters of the Gaussian-cluster classification task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_samples: usize,
    pub d_in: usize,
    pub classes: usize,
    /// Probability that a label is replaced by a different random class.
    pub noise: f64,
    /// Norm of each class mean; points have unit-variance isotropic noise.
    pub separation: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 1,
            n_samples: 20_000,
            d_in: 32,
            classes: 10,
            noise: 0.0,
            separation: 4.0,
        }
    }
}

/// Training data plus the held-out global test set.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Dataset,
    pub test: Dataset,
}

/// Balanced Gaussian class clusters, split 80/20 per class.
pub fn synth_dataset(spec: &SynthSpec) -> Result<SplitDataset, LearningError> {
    if spec.classes < 2 || spec.d_in == 0 {
        return Err(LearningError::Degenerate(
            "need classes >= 2 and d_in >= 1".into(),
        ));
    }
    if spec.n_samples < 10 * spec.classes {
        return Err(LearningError::Degenerate(format!(
            "need at least {} samples for {} classes",
            10 * spec.classes,
            spec.classes
        )));
    }
    if !(0.0..1.0).contains(&spec.noise) || !(spec.separation.is_finite() && spec.separation >= 0.0)
    {
        return Err(LearningError::Degenerate(
            "noise must be in [0,1), separation >= 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            let g: Vec<f64> = (0..spec.d_in).map(|_| rng.sample(StandardNormal)).collect();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            g.into_iter().map(|v| v / norm * spec.separation).collect()
        })
        .collect();

    let mut labels: Vec<usize> = (0..spec.n_samples).map(|i| i % spec.classes).collect();
    labels.shuffle(&mut rng);
    let mut features = Vec::with_capacity(spec.n_samples * spec.d_in);
    for &l in &labels {
        for mean in &means[l] {
            let z: f64 = StandardNormal.sample(&mut rng);
            features.push(mean + z);
        }
    }
    if spec.noise > 0.0 {
        for l in labels.iter_mut() {
            if rng.random::<f64>() < spec.noise {
                let shift = rng.random_range(1..spec.classes);
                *l = (*l + shift) % spec.classes;
            }
        }
    }
    let all = Dataset::new(spec.d_in, spec.classes, features, labels)?;

    // Labels are already shuffled, so a per-label cut is a random stratified split.
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); spec.classes];
    for (i, &l) in all.labels.iter().enumerate() {
        by_label[l].push(i);
    }
    let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
    for idx in by_label {
        let cut = idx.len() * 4 / 5;
        train_idx.extend_from_slice(&idx[..cut]);
        test_idx.extend_from_slice(&idx[cut..]);
    }
    Ok(SplitDataset {
        train: all.subset(&train_idx),
        test: all.subset(&test_idx),
    })
}

/// 80/20 per-label split of user-supplied data.
pub fn split_dataset(data: &Dataset, seed: u64) -> SplitDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); data.classes];
    for (i, &l) in data.labels.iter().enumerate() {
        by_label[l].push(i);
    }
    let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
    for mut idx in by_label {
        idx.shuffle(&mut rng);
        let cut = idx.len() * 4 / 5;
        train_idx.extend_from_slice(&idx[..cut]);
        test_idx.extend_from_slice(&idx[cut..]);
    }
    SplitDataset {
        train: data.subset(&train_idx),
        test: data.subset(&test_idx),
    }
}
