//! Random gas mixtures, their sensor responses, and the on-disk dataset format.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::trap::SensorModel;

pub const DATASET_MAGIC: &str = "cpsense-dataset";
pub const DATASET_VERSION: u32 = 1;
const END_HEADER: &str = "end-header\n";
const CHECKSUM_LEN: usize = 32;
/// Resampling attempts per row before giving up on a sampling spec.
const MAX_RESAMPLES: usize = 10_000;

/// How one pressure vector is drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSpec {
    /// Sum of all partial pressures, Pa.
    pub cap: f64,
    pub species: Vec<String>,
    pub target: String,
    /// `None`: the target is just one coordinate of the flat simplex.
    /// `Some((lo, hi))`: target uniform on `[lo, hi]` Pa, the others on the
    /// simplex scaled to the remainder.
    pub target_range: Option<(f64, f64)>,
    pub seed: u64,
}

impl SamplingSpec {
    /// All species uniform on the simplex summing to `cap`.
    pub fn set1(species: Vec<String>, target: &str, cap: f64, seed: u64) -> Self {
        Self {
            cap,
            species,
            target: target.to_string(),
            target_range: None,
            seed,
        }
    }

    /// Target restricted to `[0, target_max]`.
    pub fn set2(species: Vec<String>, target: &str, cap: f64, target_max: f64, seed: u64) -> Self {
        Self {
            target_range: Some((0.0, target_max)),
            ..Self::set1(species, target, cap, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cap > 0.0 && self.cap.is_finite()) {
            return Err(Error::Config(format!("pressure cap must be positive, got {}", self.cap)));
        }
        if self.species.len() < 2 {
            return Err(Error::Config("sampling needs at least two species".into()));
        }
        self.target_index()?;
        if let Some((lo, hi)) = self.target_range {
            if !(0.0 <= lo && lo <= hi && hi <= self.cap) {
                return Err(Error::Config(format!(
                    "target range [{lo}, {hi}] Pa must satisfy 0 <= lo <= hi <= cap = {}",
                    self.cap
                )));
            }
        }
        Ok(())
    }

    pub fn target_index(&self) -> Result<usize> {
        self.species.iter().position(|s| *s == self.target).ok_or_else(|| {
            Error::Config(format!(
                "target species '{}' not among [{}]",
                self.target,
                self.species.join(", ")
            ))
        })
    }
}

/// Flat-Dirichlet draw of `k` parts summing to `total` via sorted-uniform spacings.
fn simplex<R: Rng + ?Sized>(rng: &mut R, k: usize, total: f64) -> Vec<f64> {
    let mut cuts: Vec<f64> = (0..k.saturating_sub(1)).map(|_| rng.gen::<f64>()).collect();
    cuts.sort_by(f64::total_cmp);
    let mut parts = Vec::with_capacity(k);
    let mut prev = 0.0;
    for c in cuts {
        parts.push((c - prev) * total);
        prev = c;
    }
    parts.push((1.0 - prev) * total);
    parts
}

/// One pressure vector (Pa, species order of `spec`).
pub fn sample_pressures<R: Rng + ?Sized>(rng: &mut R, spec: &SamplingSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = spec.species.len();
    match spec.target_range {
        None => Ok(simplex(rng, n, spec.cap)),
        Some((lo, hi)) => {
            let t = spec.target_index()?;
            let target = if hi > lo { lo + (hi - lo) * rng.gen::<f64>() } else { lo };
            let mut rest = simplex(rng, n - 1, spec.cap - target).into_iter();
            Ok((0..n)
                .map(|i| if i == t { target } else { rest.next().unwrap_or(0.0) })
                .collect())
        }
    }
}

/// Everything needed to audit how a dataset was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub species: Vec<String>,
    pub spheres: Vec<String>,
    pub preset: String,
    pub seed: u64,
    pub config_hash: String,
    pub cap: f64,
    pub target: String,
    pub target_range: Option<(f64, f64)>,
    /// Draws rejected because a trap was unstable and redrawn.
    pub resampled: usize,
}

/// Rows of (pressures in Pa, frequencies in rad/s: all axial then all radial).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub pressures: Array2<f64>,
    pub frequencies: Array2<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.pressures.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn target_index(&self) -> Result<usize> {
        self.meta
            .species
            .iter()
            .position(|s| *s == self.meta.target)
            .ok_or_else(|| Error::Config(format!("dataset has no species '{}'", self.meta.target)))
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            meta: self.meta.clone(),
            pressures: self.pressures.select(Axis(0), rows),
            frequencies: self.frequencies.select(Axis(0), rows),
        }
    }

    /// SHA-256 of the serialized file contents.
    pub fn content_hash(&self) -> String {
        let bytes = encode(self);
        hex(&Sha256::digest(&bytes[..bytes.len() - CHECKSUM_LEN]))
    }
}

/// Evaluates `n` random mixtures on `workers` threads. Row `i` draws from the
/// ChaCha stream `(spec.seed, i)`, so the result does not depend on `workers`.
pub fn generate_dataset(
    spec: &SamplingSpec,
    model: &SensorModel,
    n: usize,
    workers: usize,
    preset: &str,
    config_hash: &str,
) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Config("dataset row count must be >= 1".into()));
    }
    let db_names = model.species().names();
    if db_names != spec.species.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::Config(format!(
            "sampling species [{}] differ from the sensor's species order [{}]",
            spec.species.join(", "),
            db_names.join(", ")
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} worker threads: {e}")))?;
    let rows: Vec<(Vec<f64>, Vec<f64>, usize)> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|row| evaluate_row(spec, model, row))
            .collect::<Result<Vec<_>>>()
    })?;

    let s = spec.species.len();
    let f = 2 * model.config().spheres.len();
    let mut pressures = Array2::zeros((n, s));
    let mut frequencies = Array2::zeros((n, f));
    let mut resampled = 0;
    for (i, (p, w, skipped)) in rows.into_iter().enumerate() {
        pressures.row_mut(i).assign(&ndarray::ArrayView1::from(&p));
        frequencies.row_mut(i).assign(&ndarray::ArrayView1::from(&w));
        resampled += skipped;
    }
    if resampled > 0 {
        log::warn!("{resampled} unstable draws were resampled while generating {n} rows");
    }
    Ok(Dataset {
        meta: DatasetMeta {
            species: spec.species.clone(),
            spheres: model.config().spheres.iter().map(|s| s.material.name.clone()).collect(),
            preset: preset.to_string(),
            seed: spec.seed,
            config_hash: config_hash.to_string(),
            cap: spec.cap,
            target: spec.target.clone(),
            target_range: spec.target_range,
            resampled,
        },
        pressures,
        frequencies,
    })
}

fn evaluate_row(spec: &SamplingSpec, model: &SensorModel, row: usize) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(row as u64);
    for skipped in 0..MAX_RESAMPLES {
        let p = sample_pressures(&mut rng, spec)?;
        match model.response(&p) {
            Ok(freq) => return Ok((p, freq.to_vec(), skipped)),
            Err(e @ Error::Unstable { .. }) => log::warn!("row {row}: {e}; resampling"),
            Err(e) => return Err(e),
        }
    }
    Err(Error::Numeric(format!(
        "row {row}: {MAX_RESAMPLES} consecutive draws gave an unstable trap"
    )))
}

/// Reproducible `(train, validation)` row split: a seeded permutation whose
/// first `validation` indices form the validation set.
pub fn split_indices(n: usize, validation: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if validation == 0 || validation >= n {
        return Err(Error::Config(format!(
            "validation size {validation} must lie in [1, {}) for {n} rows",
            n
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train = idx.split_off(validation);
    Ok((train, idx))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn encode(ds: &Dataset) -> Vec<u8> {
    let m = &ds.meta;
    let range = match m.target_range {
        None => "none".to_string(),
        Some((lo, hi)) => format!("{lo},{hi}"),
    };
    let mut out = format!(
        "{DATASET_MAGIC} v{DATASET_VERSION}\n\
         species: {}\n\
         spheres: {}\n\
         units: pressure=Pa frequency=rad/s\n\
         layout: pressures[{}] omega_z[{}] omega_r[{}] f64-le\n\
         preset: {}\n\
         seed: {}\n\
         config_hash: {}\n\
         cap_pa: {}\n\
         target: {}\n\
         target_range_pa: {range}\n\
         resampled: {}\n\
         rows: {}\n\
         {END_HEADER}",
        m.species.join(","),
        m.spheres.join(","),
        m.species.len(),
        m.spheres.len(),
        m.spheres.len(),
        m.preset,
        m.seed,
        m.config_hash,
        m.cap,
        m.target,
        m.resampled,
        ds.len(),
    )
    .into_bytes();
    for (p, f) in ds.pressures.rows().into_iter().zip(ds.frequencies.rows()) {
        for v in p.iter().chain(f.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(ds)).map_err(|e| Error::io(path, e))
}

/// Value of a `key: value` header line.
pub(crate) fn header_field<'a>(text: &'a str, key: &str) -> std::result::Result<&'a str, String> {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(": ")))
        .ok_or_else(|| format!("header field '{key}' missing"))
}

/// Splits a file into (header text, body) after verifying magic, version and
/// the trailing SHA-256.
pub(crate) fn split_checked<'a>(bytes: &'a [u8], path: &Path, magic: &str, version: u32) -> Result<(&'a str, &'a [u8])> {
    let fmt = |msg: String| Error::format(path, msg);
    let end = find(bytes, END_HEADER.as_bytes()).ok_or_else(|| fmt("header terminator not found (truncated or not a cpsense file)".into()))?;
    let header_end = end + END_HEADER.len();
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|_| fmt("header is not UTF-8".into()))?;
    let first = header.lines().next().unwrap_or("");
    let expect = format!("{magic} v{version}");
    if let Some(v) = first.strip_prefix(&format!("{magic} v")) {
        if first != expect {
            return Err(fmt(format!("unsupported version v{v}; this build reads v{version}")));
        }
    } else {
        return Err(fmt(format!("not a {magic} file")));
    }
    if bytes.len() < header_end + CHECKSUM_LEN {
        return Err(fmt("file truncated before checksum".into()));
    }
    let (content, sum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(content).as_slice() != sum {
        return Err(fmt("checksum mismatch (file corrupted or truncated)".into()));
    }
    Ok((header, &content[header_end..]))
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

pub(crate) fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> std::result::Result<T, String> {
    s.trim().parse().map_err(|_| format!("bad {what}: '{s}'"))
}

pub(crate) fn le_f64s(body: &[u8]) -> impl Iterator<Item = f64> + '_ {
    body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, body) = split_checked(&bytes, path, DATASET_MAGIC, DATASET_VERSION)?;
    let parse = || -> std::result::Result<Dataset, String> {
        let field = |k: &str| header_field(header, k);
        let list = |k: &str| -> std::result::Result<Vec<String>, String> {
            Ok(field(k)?.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect())
        };
        let species = list("species")?;
        let spheres = list("spheres")?;
        let rows: usize = parse_num(field("rows")?, "row count")?;
        let target_range = match field("target_range_pa")? {
            "none" => None,
            s => {
                let (lo, hi) = s.split_once(',').ok_or_else(|| format!("bad target range '{s}'"))?;
                Some((parse_num(lo, "range")?, parse_num(hi, "range")?))
            }
        };
        let meta = DatasetMeta {
            preset: field("preset")?.to_string(),
            seed: parse_num(field("seed")?, "seed")?,
            config_hash: field("config_hash")?.to_string(),
            cap: parse_num(field("cap_pa")?, "cap")?,
            target: field("target")?.to_string(),
            target_range,
            resampled: parse_num(field("resampled")?, "resample count")?,
            species,
            spheres,
        };
        let (s, f) = (meta.species.len(), 2 * meta.spheres.len());
        let width = s + f;
        if body.len() != rows * width * 8 {
            return Err(format!(
                "body has {} bytes, expected {rows} rows x {width} columns x 8",
                body.len()
            ));
        }
        let flat: Vec<f64> = le_f64s(body).collect();
        let all = Array2::from_shape_vec((rows, width), flat).map_err(|e| e.to_string())?;
        Ok(Dataset {
            meta,
            pressures: all.slice(ndarray::s![.., ..s]).to_owned(),
            frequencies: all.slice(ndarray::s![.., s..]).to_owned(),
        })
    };
    parse().map_err(|msg| Error::format(path, msg))
}

/// Lossless delimited-text export (shortest round-trip float formatting).
pub fn export_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    let mut cols: Vec<String> = ds.meta.species.iter().map(|s| format!("p_{s}_pa")).collect();
    cols.extend(ds.meta.spheres.iter().map(|s| format!("omega_z_{s}")));
    cols.extend(ds.meta.spheres.iter().map(|s| format!("omega_r_{s}")));
    writeln!(w, "{}", cols.join(",")).map_err(io)?;
    for (p, f) in ds.pressures.rows().into_iter().zip(ds.frequencies.rows()) {
        let line: Vec<String> = p.iter().chain(f.iter()).map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("g{i}")).collect()
    }

    #[test]
    fn simplex_sums_to_cap() {
        let spec = SamplingSpec::set1(names(10), "g0", 2e4, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = sample_pressures(&mut rng, &spec).unwrap();
            let s: f64 = p.iter().sum();
            assert!((s - 2e4).abs() <= 1e-12 * 2e4, "{s}");
            assert!(p.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn degenerate_target_range() {
        let mut spec = SamplingSpec::set2(names(10), "g3", 2e4, 0.0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = sample_pressures(&mut rng, &spec).unwrap();
        assert_eq!(p[3], 0.0);
        assert!((p.iter().sum::<f64>() - 2e4).abs() < 1e-8);
        spec.target_range = Some((3e4, 3e4));
        assert!(matches!(sample_pressures(&mut rng, &spec), Err(Error::Config(_))));
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let (t, v) = split_indices(100, 20, 5).unwrap();
        assert_eq!(v.len(), 20);
        assert_eq!(t.len(), 80);
        let mut all: Vec<usize> = t.iter().chain(&v).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_indices(100, 20, 5).unwrap(), (t, v));
        assert!(split_indices(10, 10, 5).is_err());
    }
}
