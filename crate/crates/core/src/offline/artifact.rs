//! Binary container for the offline data.
//!
//! Layout (all integers and doubles little-endian):
//!
//! ```text
//! magic    8 bytes  "RBVIOFFL"
//! version  u32
//! count    u32      number of entries
//! entry*   name_len u32, name (UTF-8), kind u8,
//!          kind 0 (matrix): rows u64, cols u64, rows*cols f64 column-major
//!          kind 1 (text):   len u64, bytes (UTF-8)
//! crc32    u32      over every preceding byte
//! ```
//!
//! Coefficient functions are not stored; they are rebuilt from the model
//! description held in the `model` text entry.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fe_truth::{ConstraintOperator, ModelId, ModelSpec, ParameterBox, Resolution, ThetaFunctions};

use super::certification::{CertificationData, ResidualGramian, StabilityBounds};
use super::reduced::ReducedOperators;
use super::spaces::{ColumnSource, DualRBSpace, PrimalRBSpace};

pub const ARTIFACT_MAGIC: &[u8; 8] = b"RBVIOFFL";
pub const ARTIFACT_VERSION: u32 = 1;

/// All offline quantities: spaces, reduced operators, certification data and
/// the few truth-scale blocks needed to reconstruct fields and to evaluate the
/// primal-only bound.
#[derive(Debug, Clone)]
pub struct OfflineArtifact {
    pub spec: Option<ModelSpec>,
    pub theta: ThetaFunctions,
    pub parameter_box: ParameterBox,
    pub snapshot_parameters: Vec<Vec<f64>>,
    pub primal: PrimalRBSpace,
    pub dual: DualRBSpace,
    pub reduced: ReducedOperators,
    pub certification: CertificationData,
    pub b: ConstraintOperator,
    pub g_components: Vec<DVector<f64>>,
    /// `B phi`.
    pub b_phi: DMatrix<f64>,
    /// `B^{-1} g^q`.
    pub binv_g: Vec<DVector<f64>>,
    /// `B^{-1} zeta`.
    pub y: DMatrix<f64>,
}

impl OfflineArtifact {
    /// Truth dimension.
    pub fn n_truth(&self) -> usize {
        self.b.ncols()
    }
}

enum Entry {
    Matrix(DMatrix<f64>),
    Text(String),
}

#[derive(Default)]
struct Writer {
    entries: Vec<(String, Entry)>,
}

impl Writer {
    fn matrix(&mut self, name: impl Into<String>, m: &DMatrix<f64>) {
        self.entries.push((name.into(), Entry::Matrix(m.clone())));
    }

    fn vector(&mut self, name: impl Into<String>, v: &DVector<f64>) {
        self.matrix(name, &DMatrix::from_column_slice(v.len(), 1, v.as_slice()));
    }

    fn scalars(&mut self, name: impl Into<String>, v: &[f64]) {
        self.matrix(name, &DMatrix::from_column_slice(v.len(), 1, v));
    }

    fn matrices(&mut self, name: &str, ms: &[DMatrix<f64>]) {
        self.scalars(format!("{name}.count"), &[ms.len() as f64]);
        for (k, m) in ms.iter().enumerate() {
            self.matrix(format!("{name}.{k}"), m);
        }
    }

    fn vectors(&mut self, name: &str, vs: &[DVector<f64>]) {
        self.scalars(format!("{name}.count"), &[vs.len() as f64]);
        for (k, v) in vs.iter().enumerate() {
            self.vector(format!("{name}.{k}"), v);
        }
    }

    fn text(&mut self, name: impl Into<String>, s: &str) {
        self.entries.push((name.into(), Entry::Text(s.to_string())));
    }

    fn finish(self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(ARTIFACT_MAGIC);
        out.write_u32::<LittleEndian>(ARTIFACT_VERSION).unwrap();
        out.write_u32::<LittleEndian>(self.entries.len() as u32).unwrap();
        for (name, entry) in &self.entries {
            out.write_u32::<LittleEndian>(name.len() as u32).unwrap();
            out.extend_from_slice(name.as_bytes());
            match entry {
                Entry::Matrix(m) => {
                    out.push(0);
                    out.write_u64::<LittleEndian>(m.nrows() as u64).unwrap();
                    out.write_u64::<LittleEndian>(m.ncols() as u64).unwrap();
                    for &v in m.as_slice() {
                        out.write_f64::<LittleEndian>(v).unwrap();
                    }
                }
                Entry::Text(s) => {
                    out.push(1);
                    out.write_u64::<LittleEndian>(s.len() as u64).unwrap();
                    out.extend_from_slice(s.as_bytes());
                }
            }
        }
        let crc = crc32fast::hash(&out);
        out.write_u32::<LittleEndian>(crc).unwrap();
        out
    }
}

struct Reader {
    entries: BTreeMap<String, Entry>,
}

fn corrupt(what: impl std::fmt::Display) -> Error {
    Error::Artifact(format!("corrupt or truncated file: {what}"))
}

impl Reader {
    fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < ARTIFACT_MAGIC.len() + 12 || &bytes[..8] != ARTIFACT_MAGIC {
            return Err(Error::Artifact("not an offline artifact (bad magic)".into()));
        }
        let mut cur = Cursor::new(&bytes[8..]);
        let version = cur.read_u32::<LittleEndian>().map_err(corrupt)?;
        if version != ARTIFACT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: ARTIFACT_VERSION,
            });
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(corrupt("checksum mismatch"));
        }
        let mut cur = Cursor::new(body);
        cur.set_position(12);
        let count = cur.read_u32::<LittleEndian>().map_err(corrupt)?;
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let len = cur.read_u32::<LittleEndian>().map_err(corrupt)? as usize;
            let mut name = vec![0u8; len];
            cur.read_exact(&mut name).map_err(corrupt)?;
            let name = String::from_utf8(name).map_err(corrupt)?;
            let kind = cur.read_u8().map_err(corrupt)?;
            let entry = match kind {
                0 => {
                    let rows = cur.read_u64::<LittleEndian>().map_err(corrupt)? as usize;
                    let cols = cur.read_u64::<LittleEndian>().map_err(corrupt)? as usize;
                    let total = rows.checked_mul(cols).ok_or_else(|| corrupt("matrix size overflow"))?;
                    let remaining = body.len() - cur.position() as usize;
                    if total.checked_mul(8).is_none_or(|b| b > remaining) {
                        return Err(corrupt(format!("matrix {name} exceeds file size")));
                    }
                    let mut data = vec![0.0; total];
                    cur.read_f64_into::<LittleEndian>(&mut data).map_err(corrupt)?;
                    Entry::Matrix(DMatrix::from_vec(rows, cols, data))
                }
                1 => {
                    let len = cur.read_u64::<LittleEndian>().map_err(corrupt)? as usize;
                    let remaining = body.len() - cur.position() as usize;
                    if len > remaining {
                        return Err(corrupt(format!("text {name} exceeds file size")));
                    }
                    let mut s = vec![0u8; len];
                    cur.read_exact(&mut s).map_err(corrupt)?;
                    Entry::Text(String::from_utf8(s).map_err(corrupt)?)
                }
                k => return Err(corrupt(format!("unknown entry kind {k}"))),
            };
            entries.insert(name, entry);
        }
        Ok(Self { entries })
    }

    fn matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        match self.entries.get(name) {
            Some(Entry::Matrix(m)) => Ok(m.clone()),
            _ => Err(Error::Artifact(format!("missing matrix entry {name:?}"))),
        }
    }

    fn vector(&self, name: &str) -> Result<DVector<f64>> {
        let m = self.matrix(name)?;
        Ok(DVector::from_column_slice(m.as_slice()))
    }

    fn scalars(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.matrix(name)?.as_slice().to_vec())
    }

    fn scalar(&self, name: &str) -> Result<f64> {
        self.scalars(name)?
            .first()
            .copied()
            .ok_or_else(|| Error::Artifact(format!("empty scalar entry {name:?}")))
    }

    fn count(&self, name: &str) -> Result<usize> {
        Ok(self.scalar(&format!("{name}.count"))? as usize)
    }

    fn matrices(&self, name: &str) -> Result<Vec<DMatrix<f64>>> {
        (0..self.count(name)?).map(|k| self.matrix(&format!("{name}.{k}"))).collect()
    }

    fn vectors(&self, name: &str) -> Result<Vec<DVector<f64>>> {
        (0..self.count(name)?).map(|k| self.vector(&format!("{name}.{k}"))).collect()
    }

    fn text(&self, name: &str) -> Result<String> {
        match self.entries.get(name) {
            Some(Entry::Text(s)) => Ok(s.clone()),
            _ => Err(Error::Artifact(format!("missing text entry {name:?}"))),
        }
    }
}

/// `model=1;resolution=200;lower=0.001;upper=0.01`.
pub fn encode_spec(spec: &ModelSpec) -> String {
    let b = spec.parameter_box();
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
    format!(
        "model={};resolution={};lower={};upper={}",
        spec.model.number(),
        spec.resolution,
        join(&b.lower),
        join(&b.upper)
    )
}

pub fn decode_spec(text: &str) -> Result<ModelSpec> {
    let bad = || Error::Artifact(format!("malformed model description {text:?}"));
    let mut fields = BTreeMap::new();
    for part in text.split(';') {
        let (k, v) = part.split_once('=').ok_or_else(bad)?;
        fields.insert(k.trim(), v.trim());
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(bad);
    let list = |s: &str| s.split(',').map(|x| x.parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>();
    let model = ModelId::from_number(get("model")?.parse().map_err(|_| bad())?)?;
    let resolution: Resolution = get("resolution")?.parse()?;
    let parameter_box = ParameterBox {
        lower: list(get("lower")?)?,
        upper: list(get("upper")?)?,
    };
    let spec = ModelSpec {
        model,
        resolution,
        parameter_box: (parameter_box != model.default_box()).then_some(parameter_box),
    };
    spec.validate()?;
    Ok(spec)
}

fn encode_sources(sources: &[ColumnSource]) -> Vec<f64> {
    sources
        .iter()
        .map(|s| match s {
            ColumnSource::Snapshot(j) => *j as f64,
            ColumnSource::Supremizer(k) => -(*k as f64) - 1.0,
        })
        .collect()
}

fn decode_sources(v: &[f64]) -> Vec<ColumnSource> {
    v.iter()
        .map(|&x| {
            if x >= 0.0 {
                ColumnSource::Snapshot(x as usize)
            } else {
                ColumnSource::Supremizer((-x - 1.0) as usize)
            }
        })
        .collect()
}

fn indices(v: &[f64]) -> Vec<usize> {
    v.iter().map(|&x| x as usize).collect()
}

fn as_f64(v: &[usize]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Serializes the artifact to bytes.
pub fn encode_offline(art: &OfflineArtifact) -> Result<Vec<u8>> {
    let spec = art
        .spec
        .as_ref()
        .ok_or_else(|| Error::Artifact("only models built from a model description can be saved".into()))?;
    let mut w = Writer::default();
    w.text("model", &encode_spec(spec));
    let p = art.parameter_box.dim();
    w.matrix(
        "snapshot_parameters",
        &DMatrix::from_fn(p, art.snapshot_parameters.len(), |i, j| art.snapshot_parameters[j][i]),
    );
    w.matrix("phi", &art.primal.phi);
    w.matrix("psi", &art.primal.psi);
    w.scalars("n_sup", &[art.primal.n_sup as f64]);
    w.scalars("phi_sources", &encode_sources(&art.primal.phi_sources));
    w.scalars("psi_sources", &as_f64(&art.primal.psi_sources));
    w.matrix("zeta", &art.dual.zeta);
    w.scalars("zeta_sources", &as_f64(&art.dual.sources));

    let r = &art.reduced;
    w.matrices("a_n", &r.a_n);
    w.matrix("b_n", &r.b_n);
    w.vectors("f_n", &r.f_n);
    w.vectors("g_n", &r.g_n);
    w.matrices("atilde_n", &r.atilde_n);
    w.vectors("ftilde_n", &r.ftilde_n);
    w.matrix("pairing", &r.pairing);

    let c = &art.certification;
    w.matrix("gram_pd", &c.primal_dual.gram);
    w.matrix("factor_pd", &c.primal_dual.factor);
    w.matrix("gram_po", &c.primal_only.gram);
    w.matrix("factor_po", &c.primal_only.factor);
    w.scalars("beta", &[c.beta]);
    match &c.stability {
        StabilityBounds::Proportional { coefficients } => {
            w.text("stability", "proportional");
            w.scalars("stability.coefficients", coefficients);
        }
        StabilityBounds::Rayleigh { lower, upper } => {
            w.text("stability", "rayleigh");
            w.scalars("stability.lower", lower);
            w.scalars("stability.upper", upper);
        }
    }
    match &art.b {
        ConstraintOperator::Diagonal(d) => {
            w.text("b.kind", "diagonal");
            w.vector("b", d);
        }
        ConstraintOperator::Dense(m) => {
            w.text("b.kind", "dense");
            w.matrix("b", m);
        }
    }
    w.vectors("g", &art.g_components);
    w.matrix("b_phi", &art.b_phi);
    w.vectors("binv_g", &art.binv_g);
    w.matrix("y", &art.y);
    Ok(w.finish())
}

/// Parses an artifact from bytes.
pub fn decode_offline(bytes: &[u8]) -> Result<OfflineArtifact> {
    let r = Reader::parse(bytes)?;
    let spec = decode_spec(&r.text("model")?)?;
    let params = r.matrix("snapshot_parameters")?;
    let snapshot_parameters = (0..params.ncols()).map(|j| params.column(j).iter().copied().collect()).collect();
    let primal = PrimalRBSpace {
        phi: r.matrix("phi")?,
        psi: r.matrix("psi")?,
        n_sup: r.scalar("n_sup")? as usize,
        phi_sources: decode_sources(&r.scalars("phi_sources")?),
        psi_sources: indices(&r.scalars("psi_sources")?),
    };
    let dual = DualRBSpace {
        zeta: r.matrix("zeta")?,
        sources: indices(&r.scalars("zeta_sources")?),
    };
    let reduced = ReducedOperators {
        a_n: r.matrices("a_n")?,
        b_n: r.matrix("b_n")?,
        f_n: r.vectors("f_n")?,
        g_n: r.vectors("g_n")?,
        atilde_n: r.matrices("atilde_n")?,
        ftilde_n: r.vectors("ftilde_n")?,
        pairing: r.matrix("pairing")?,
    };
    let stability = match r.text("stability")?.as_str() {
        "proportional" => StabilityBounds::Proportional {
            coefficients: r.scalars("stability.coefficients")?,
        },
        "rayleigh" => StabilityBounds::Rayleigh {
            lower: r.scalars("stability.lower")?,
            upper: r.scalars("stability.upper")?,
        },
        other => return Err(Error::Artifact(format!("unknown stability kind {other:?}"))),
    };
    let certification = CertificationData {
        primal_dual: ResidualGramian {
            gram: r.matrix("gram_pd")?,
            factor: r.matrix("factor_pd")?,
        },
        primal_only: ResidualGramian {
            gram: r.matrix("gram_po")?,
            factor: r.matrix("factor_po")?,
        },
        beta: r.scalar("beta")?,
        stability,
    };
    let b = match r.text("b.kind")?.as_str() {
        "diagonal" => ConstraintOperator::Diagonal(r.vector("b")?),
        "dense" => ConstraintOperator::Dense(r.matrix("b")?),
        other => return Err(Error::Artifact(format!("unknown constraint kind {other:?}"))),
    };
    Ok(OfflineArtifact {
        theta: ThetaFunctions::linear_diffusion(),
        parameter_box: spec.parameter_box(),
        spec: Some(spec),
        snapshot_parameters,
        primal,
        dual,
        reduced,
        certification,
        b,
        g_components: r.vectors("g")?,
        b_phi: r.matrix("b_phi")?,
        binv_g: r.vectors("binv_g")?,
        y: r.matrix("y")?,
    })
}

pub fn save_offline(art: &OfflineArtifact, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_offline(art)?)?;
    Ok(())
}

pub fn load_offline(path: impl AsRef<Path>) -> Result<OfflineArtifact> {
    decode_offline(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_text_round_trip() {
        for spec in [ModelSpec::rope(200), ModelSpec::membrane(16, 32)] {
            assert_eq!(decode_spec(&encode_spec(&spec)).unwrap(), spec);
        }
        let mut custom = ModelSpec::rope(10);
        custom.parameter_box = Some(ParameterBox::interval(0.002, 0.003));
        assert_eq!(decode_spec(&encode_spec(&custom)).unwrap(), custom);
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(matches!(decode_offline(b"not an artifact at all"), Err(Error::Artifact(_))));
        let mut w = Writer::default();
        w.scalars("x", &[1.0]);
        let mut bytes = w.finish();
        bytes[8] = 9;
        assert!(matches!(Reader::parse(&bytes), Err(Error::VersionMismatch { found: 9, .. })));
    }

    #[test]
    fn container_round_trip() {
        let mut w = Writer::default();
        w.matrix("m", &DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, f64::MIN_POSITIVE]));
        w.text("t", "hello");
        w.matrix("empty", &DMatrix::zeros(4, 0));
        let bytes = w.finish();
        let r = Reader::parse(&bytes).unwrap();
        assert_eq!(r.matrix("m").unwrap()[(1, 2)], f64::MIN_POSITIVE);
        assert_eq!(r.text("t").unwrap(), "hello");
        assert_eq!(r.matrix("empty").unwrap().shape(), (4, 0));
        for cut in [bytes.len() - 1, bytes.len() / 2, 20] {
            assert!(Reader::parse(&bytes[..cut]).is_err());
        }
    }
}
