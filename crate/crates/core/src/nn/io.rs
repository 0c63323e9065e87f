use std::path::Path;

use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};

use super::{MlpModel, ModelMeta, Normalizer, TrainedModel};
use crate::dataset::{header_field, le_f64s, parse_num, split_checked};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &str = "cpsense-model";
pub const MODEL_VERSION: u32 = 1;

fn join<T: ToString>(v: impl IntoIterator<Item = T>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Plain header (dims, provenance, normalizer), then per layer the row-major
/// weight matrix and the bias vector as little-endian f64, then SHA-256.
pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let m = &model.meta;
    let mut out = format!(
        "{MODEL_MAGIC} v{MODEL_VERSION}\n\
         dims: {}\n\
         activation: relu-all\n\
         species: {}\n\
         spheres: {}\n\
         target: {}\n\
         target_units: bar\n\
         seed: {}\n\
         epochs: {}\n\
         dataset_hash: {}\n\
         config_hash: {}\n\
         norm_min: {}\n\
         norm_max: {}\n\
         end-header\n",
        join(model.mlp.dims()),
        m.species.join(","),
        m.spheres.join(","),
        m.target,
        m.seed,
        m.epochs,
        m.dataset_hash,
        m.config_hash,
        join(model.normalizer.min.iter()),
        join(model.normalizer.max.iter()),
    )
    .into_bytes();
    for (w, b) in model.mlp.weights().iter().zip(model.mlp.biases()) {
        for v in w.iter().chain(b.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, body) = split_checked(&bytes, path, MODEL_MAGIC, MODEL_VERSION)?;
    let field = |k: &str| header_field(header, k);
    let floats = |k: &str| -> std::result::Result<Array1<f64>, String> {
        field(k)?.split(',').map(|s| parse_num::<f64>(s, k)).collect()
    };
    let parsed = (|| -> std::result::Result<_, String> {
        let dims: Vec<usize> = field("dims")?
            .split(',')
            .map(|s| parse_num(s, "dims"))
            .collect::<std::result::Result<_, _>>()?;
        if dims.len() < 2 {
            return Err(format!("need at least two layer sizes, got {dims:?}"));
        }
        let list = |k: &str| -> std::result::Result<Vec<String>, String> {
            Ok(field(k)?.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect())
        };
        let meta = ModelMeta {
            species: list("species")?,
            spheres: list("spheres")?,
            target: field("target")?.to_string(),
            seed: parse_num(field("seed")?, "seed")?,
            epochs: parse_num(field("epochs")?, "epochs")?,
            dataset_hash: field("dataset_hash")?.to_string(),
            config_hash: field("config_hash")?.to_string(),
        };
        let expected: usize = dims.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        if body.len() != expected * 8 {
            return Err(format!(
                "parameter block has {} bytes, dims {dims:?} need {}",
                body.len(),
                expected * 8
            ));
        }
        let mut values = le_f64s(body);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in dims.windows(2) {
            let wv: Vec<f64> = values.by_ref().take(w[0] * w[1]).collect();
            weights.push(Array2::from_shape_vec((w[1], w[0]), wv).map_err(|e| e.to_string())?);
            biases.push(values.by_ref().take(w[1]).collect::<Array1<f64>>());
        }
        let (min, max) = (floats("norm_min")?, floats("norm_max")?);
        if min.len() != dims[0] {
            return Err(format!("normalizer has {} components, network takes {}", min.len(), dims[0]));
        }
        Ok((weights, biases, min, max, meta))
    })();
    let (weights, biases, min, max, meta) = parsed.map_err(|msg| Error::format(path, msg))?;
    Ok(TrainedModel {
        mlp: MlpModel::from_parameters(weights, biases)?,
        normalizer: Normalizer::new(min, max)?,
        meta,
    })
}
