//! Field files (raw little-endian complex samples plus a JSON header) and
//! resumable checkpoints.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::bundle::{BundleDescriptor, BundleSpec, MetricField};
use crate::error::{Error, Result};
use crate::field::{EndoField, ScalarField, Twist};
use crate::grid::{DomainDescriptor, TorusDomain};
use crate::hym_system::{Checkpoint, SolverTrace, SystemConfig};
use crate::linalg::{c, CMat, C64};

pub const FIELD_FORMAT: &str = "hymlab-field/1";
pub const CHECKPOINT_FORMAT: &str = "hymlab-checkpoint/1";
pub const DTYPE: &str = "complex128-le";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Scalar,
    Endo,
    Metric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldHeader {
    pub format: String,
    pub dtype: String,
    pub kind: FieldKind,
    /// Matrix size per point (1 for scalars); matrices are stored row-major.
    pub rank: usize,
    pub points: usize,
    pub twist: Option<Twist>,
    pub domain: DomainDescriptor,
    pub domain_hash: String,
    pub bundle: Option<BundleDescriptor>,
    pub spec_hash: Option<String>,
    pub dual: bool,
    pub metadata: Value,
}

impl FieldHeader {
    fn new(kind: FieldKind, rank: usize, domain: &TorusDomain, metadata: Value) -> Self {
        Self {
            format: FIELD_FORMAT.into(),
            dtype: DTYPE.into(),
            kind,
            rank,
            points: domain.num_points(),
            twist: None,
            domain: domain.descriptor(),
            domain_hash: domain.hash(),
            bundle: None,
            spec_hash: None,
            dual: false,
            metadata,
        }
    }

    fn check(&self, kind: FieldKind) -> Result<()> {
        if self.format != FIELD_FORMAT || self.dtype != DTYPE {
            return Err(Error::Config(format!("unsupported field format {} / {}", self.format, self.dtype)));
        }
        if self.kind != kind {
            return Err(Error::Config(format!("expected a {kind:?} field, found {:?}", self.kind)));
        }
        Ok(())
    }

    fn domain(&self) -> Result<TorusDomain> {
        let d = TorusDomain::from_descriptor(&self.domain)?;
        if d.hash() != self.domain_hash {
            return Err(Error::Config("domain hash does not match the stored descriptor".into()));
        }
        if d.num_points() != self.points {
            return Err(Error::DomainMismatch { expected: d.num_points(), found: self.points });
        }
        Ok(d)
    }
}

/// First 16 hex digits of the SHA-256 of the compact JSON encoding.
pub fn content_hash<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&json))[..16].to_string())
}

/// `(base.json, base.bin)`.
pub fn field_paths(base: &Path) -> (PathBuf, PathBuf) {
    (base.with_extension("json"), base.with_extension("bin"))
}

fn write_raw(base: &Path, header: &FieldHeader, samples: impl Iterator<Item = C64>) -> Result<()> {
    let (json, bin) = field_paths(base);
    let mut bytes = Vec::with_capacity(header.points * header.rank * header.rank * 16);
    for v in samples {
        bytes.extend_from_slice(&v.re.to_le_bytes());
        bytes.extend_from_slice(&v.im.to_le_bytes());
    }
    fs::write(bin, bytes)?;
    fs::write(json, serde_json::to_vec_pretty(header)?)?;
    Ok(())
}

fn read_raw(base: &Path) -> Result<(FieldHeader, Vec<C64>)> {
    let (json, bin) = field_paths(base);
    let header: FieldHeader = serde_json::from_slice(&fs::read(json)?)?;
    let bytes = fs::read(bin)?;
    let expected = header.points * header.rank * header.rank * 16;
    if bytes.len() != expected {
        return Err(Error::Config(format!("field payload has {} bytes, header implies {expected}", bytes.len())));
    }
    let samples = bytes
        .chunks_exact(16)
        .map(|b| {
            let re = f64::from_le_bytes(b[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(b[8..].try_into().expect("8 bytes"));
            c(re, im)
        })
        .collect();
    Ok((header, samples))
}

fn matrices(rank: usize, samples: &[C64]) -> Vec<CMat> {
    samples.chunks_exact(rank * rank).map(|s| CMat::from_row_slice(rank, rank, s)).collect()
}

fn row_major(values: &[CMat]) -> impl Iterator<Item = C64> + '_ {
    values.iter().flat_map(|m| {
        let r = m.nrows();
        (0..r * r).map(move |k| m[(k / r, k % r)])
    })
}

pub fn save_scalar(base: &Path, f: &ScalarField, domain: &TorusDomain, metadata: Value) -> Result<()> {
    domain.check_scalar(f)?;
    let header = FieldHeader::new(FieldKind::Scalar, 1, domain, metadata);
    write_raw(base, &header, f.values.iter().copied())
}

pub fn load_scalar(base: &Path) -> Result<(ScalarField, TorusDomain, FieldHeader)> {
    let (header, samples) = read_raw(base)?;
    header.check(FieldKind::Scalar)?;
    let domain = header.domain()?;
    Ok((ScalarField { values: samples }, domain, header))
}

pub fn save_endo(base: &Path, f: &EndoField, domain: &TorusDomain, metadata: Value) -> Result<()> {
    domain.check_endo(f)?;
    let mut header = FieldHeader::new(FieldKind::Endo, f.rank, domain, metadata);
    header.twist = Some(f.twist.clone());
    write_raw(base, &header, row_major(&f.values))
}

pub fn load_endo(base: &Path) -> Result<(EndoField, TorusDomain, FieldHeader)> {
    let (header, samples) = read_raw(base)?;
    header.check(FieldKind::Endo)?;
    let domain = header.domain()?;
    let twist = header.twist.clone().unwrap_or_else(|| Twist::none(domain.real_axes()));
    Ok((EndoField::new(header.rank, matrices(header.rank, &samples), twist), domain, header))
}

pub fn save_metric(base: &Path, h: &MetricField, metadata: Value) -> Result<()> {
    let spec = &h.spec;
    let mut header = FieldHeader::new(FieldKind::Metric, spec.rank, &spec.domain, metadata);
    header.twist = Some(h.endo.twist.clone());
    header.bundle = Some(spec.descriptor());
    header.spec_hash = Some(spec.hash());
    header.dual = h.dual;
    write_raw(base, &header, row_major(&h.endo.values))
}

/// Rebuilds the bundle from the header; the metric is checked for positivity.
pub fn load_metric(base: &Path) -> Result<(MetricField, FieldHeader)> {
    let (header, samples) = read_raw(base)?;
    header.check(FieldKind::Metric)?;
    let domain = header.domain()?;
    let desc = header.bundle.as_ref().ok_or_else(|| Error::Config("metric header lacks a bundle block".into()))?;
    let spec = Arc::new(desc.build(domain)?);
    if header.spec_hash.as_deref() != Some(spec.hash().as_str()) {
        return Err(Error::Config("bundle hash does not match the stored descriptor".into()));
    }
    let twist = header.twist.clone().unwrap_or_else(|| spec.form_twist());
    let mut h = MetricField::new(EndoField::new(spec.rank, matrices(spec.rank, &samples), twist), spec)?;
    h.dual = header.dual;
    Ok((h, header))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointState {
    format: String,
    cfg: SystemConfig,
    dt: f64,
    trace: SolverTrace,
    metadata: Value,
}

/// Writes `metric.{json,bin}`, `a0.{json,bin}` and `state.json` into `dir`.
pub fn save_checkpoint(dir: &Path, ck: &Checkpoint, metadata: Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    save_metric(&dir.join("metric"), &ck.metric, metadata.clone())?;
    save_scalar(&dir.join("a0"), &ck.a0, ck.metric.domain(), metadata.clone())?;
    let state = CheckpointState {
        format: CHECKPOINT_FORMAT.into(),
        cfg: ck.cfg.clone(),
        dt: ck.dt,
        trace: ck.trace.clone(),
        metadata,
    };
    fs::write(dir.join("state.json"), serde_json::to_vec_pretty(&state)?)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(Checkpoint, Value)> {
    let state: CheckpointState = serde_json::from_slice(&fs::read(dir.join("state.json"))?)?;
    if state.format != CHECKPOINT_FORMAT {
        return Err(Error::Config(format!("unsupported checkpoint format {}", state.format)));
    }
    let (metric, _) = load_metric(&dir.join("metric"))?;
    let (a0, domain, _) = load_scalar(&dir.join("a0"))?;
    if domain.hash() != metric.domain().hash() {
        return Err(Error::Config("a0 and metric live on different domains".into()));
    }
    state.cfg.validate()?;
    Ok((Checkpoint { metric, a0, cfg: state.cfg, dt: state.dt, trace: state.trace }, state.metadata))
}

/// Fails when `h` lives on a different bundle than `spec`.
pub fn check_spec(h: &MetricField, spec: &BundleSpec) -> Result<()> {
    if h.spec.hash() != spec.hash() {
        return Err(Error::Config(format!("metric belongs to bundle {}, expected {}", h.spec.hash(), spec.hash())));
    }
    Ok(())
}
