//! Desk-scale labelled data.
//!
//! The built-in task draws Gaussian inputs and labels them with a random
//! deep ReLU teacher: the flattened input passes through `teacher_depth`
//! random layers, and the final scalar score is cut into equally populated
//! bins, one per class. Small external sets can be loaded from CSV rows of
//! `label, v_0, ..., v_{C*H*W-1}`.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Batch, Tensor};
use crate::error::{Error, Result};
use crate::space::SupernetSpec;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Csv,
    /// Recognised so that configs naming it fail loudly.
    Imagenet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub samples: usize,
    pub teacher_depth: usize,
    /// Mixed into the run seed for data generation.
    pub seed_offset: u64,
    pub path: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Synthetic,
            samples: 512,
            teacher_depth: 6,
            seed_offset: 0x5eed,
            path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    shape: [usize; 3],
    num_classes: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn load(config: &DataConfig, spec: &SupernetSpec, seed: u64) -> Result<Self> {
        let st = spec.stages.first().ok_or_else(|| Error::spec("stages", "empty"))?;
        let shape = [st.channels, st.spatial_size, st.spatial_size];
        match config.source {
            DataSource::Synthetic => Ok(Self::synthetic(
                shape,
                spec.num_classes,
                config.samples,
                config.teacher_depth,
                seed ^ config.seed_offset,
            )),
            DataSource::Csv => {
                let path = config
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Data("csv source requires `path`".into()))?;
                let text = std::fs::read_to_string(path)?;
                Self::from_csv(&text, shape, spec.num_classes)
            }
            DataSource::Imagenet => Err(Error::Unsupported(
                "ImageNet-scale data is outside the desk-scale engine; use the synthetic task or a small CSV set".into(),
            )),
        }
    }

    pub fn synthetic(shape: [usize; 3], num_classes: usize, samples: usize, teacher_depth: usize, seed: u64) -> Self {
        let f: usize = shape.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let layer = Normal::new(0.0, (2.0 / f as f64).sqrt()).expect("finite std");
        let teacher: Vec<Vec<f64>> = (0..teacher_depth)
            .map(|_| (0..f * f).map(|_| layer.sample(&mut rng)).collect())
            .collect();
        let readout: Vec<f64> = (0..f).map(|_| unit.sample(&mut rng)).collect();
        let inputs: Vec<f64> = (0..samples * f).map(|_| unit.sample(&mut rng)).collect();

        let scores: Vec<f64> = inputs
            .chunks(f)
            .map(|x| {
                let mut h = x.to_vec();
                for w in &teacher {
                    h = (0..f)
                        .map(|k| {
                            let v: f64 = w[k * f..(k + 1) * f].iter().zip(&h).map(|(a, b)| a * b).sum();
                            v.max(0.0)
                        })
                        .collect();
                }
                readout.iter().zip(&h).map(|(a, b)| a * b).sum()
            })
            .collect();
        let mut order: Vec<usize> = (0..samples).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        let mut labels = vec![0; samples];
        for (rank, &i) in order.iter().enumerate() {
            labels[i] = rank * num_classes / samples.max(1);
        }
        Dataset {
            shape,
            num_classes,
            inputs,
            labels,
        }
    }

    pub fn from_csv(text: &str, shape: [usize; 3], num_classes: usize) -> Result<Self> {
        let f: usize = shape.iter().product();
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let at = |msg: String| Error::Data(format!("line {}: {msg}", lineno + 1));
            if fields.len() != f + 1 {
                return Err(at(format!("expected {} fields, found {}", f + 1, fields.len())));
            }
            let label: usize = fields[0].parse().map_err(|_| at(format!("bad label `{}`", fields[0])))?;
            if label >= num_classes {
                return Err(at(format!("label {label} outside 0..{num_classes}")));
            }
            for v in &fields[1..] {
                let x: f64 = v.parse().map_err(|_| at(format!("bad value `{v}`")))?;
                if !x.is_finite() {
                    return Err(at("non-finite value".into()));
                }
                inputs.push(x);
            }
            labels.push(label);
        }
        if labels.is_empty() {
            return Err(Error::Data("no samples".into()));
        }
        Ok(Dataset {
            shape,
            num_classes,
            inputs,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample_shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn gather(&self, indices: &[usize]) -> Batch {
        let f: usize = self.shape.iter().product();
        let mut data = Vec::with_capacity(indices.len() * f);
        for &i in indices {
            data.extend_from_slice(&self.inputs[i * f..(i + 1) * f]);
        }
        Batch {
            inputs: Tensor::from_vec([indices.len(), self.shape[0], self.shape[1], self.shape[2]], data)
                .expect("gathered rows match the sample shape"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Mini-batches as a pure function of the iteration number: epoch `e` uses
/// a permutation seeded by `(seed, e)` and drops the ragged tail.
#[derive(Clone, Debug)]
pub struct Sampler {
    seed: u64,
    batch_size: usize,
    epoch: Option<u64>,
    perm: Vec<usize>,
}

impl Sampler {
    pub fn new(seed: u64, batch_size: usize) -> Self {
        Sampler {
            seed,
            batch_size,
            epoch: None,
            perm: Vec::new(),
        }
    }

    pub fn batches_per_epoch(&self, data: &Dataset) -> u64 {
        (data.len() / self.batch_size).max(1) as u64
    }

    pub fn batch(&mut self, data: &Dataset, iteration: u64) -> Batch {
        let per_epoch = self.batches_per_epoch(data);
        let epoch = iteration / per_epoch;
        if self.epoch != Some(epoch) {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ epoch);
            self.perm = (0..data.len()).collect();
            self.perm.shuffle(&mut rng);
            self.epoch = Some(epoch);
        }
        let bs = self.batch_size.min(data.len());
        let at = (iteration % per_epoch) as usize * bs;
        data.gather(&self.perm[at..at + bs])
    }
}
