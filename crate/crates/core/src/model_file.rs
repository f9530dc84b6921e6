//! Self-contained model files: preprocessing state plus one fitted regressor.
//! The byte layout is documented in `docs/model-format.md`.

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::{GbtModel, LinearModel, RegressionTree, TreeNode};
use crate::dataset::{Encoding, FeatureKind, FeatureScale, Preprocessor, ScaleMethod, ScalingParams, SensorRecord};
use crate::nn::{predict, LayerParams, ModelParameters};

pub const MAGIC: [u8; 8] = *b"SCHMODEL";
pub const FORMAT_VERSION: u16 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown model kind tag {0}")]
    UnknownKind(u8),
    #[error("model file is truncated")]
    Truncated,
    #[error("model file checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Dnn = 1,
    Linear = 2,
    Gbt = 3,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dnn => "dnn",
            ModelKind::Linear => "linear",
            ModelKind::Gbt => "gbt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Regressor {
    Dnn(ModelParameters),
    Linear(LinearModel),
    Gbt(GbtModel),
}

impl Regressor {
    pub fn kind(&self) -> ModelKind {
        match self {
            Regressor::Dnn(_) => ModelKind::Dnn,
            Regressor::Linear(_) => ModelKind::Linear,
            Regressor::Gbt(_) => ModelKind::Gbt,
        }
    }

    /// Prediction for an already-preprocessed row.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            Regressor::Dnn(p) => predict(p, row).expect("row width checked on load"),
            Regressor::Linear(m) => m.predict(row),
            Regressor::Gbt(m) => m.predict(row),
        }
    }

    fn input_dim(&self) -> Option<usize> {
        match self {
            Regressor::Dnn(p) => Some(p.input_dim()),
            Regressor::Linear(m) => Some(m.weights.len()),
            Regressor::Gbt(_) => None,
        }
    }
}

/// A fitted model together with everything needed to run it on raw readings.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub preprocessor: Preprocessor,
    pub model: Regressor,
}

impl SavedModel {
    pub fn new(preprocessor: Preprocessor, model: Regressor) -> Result<SavedModel, ModelFileError> {
        let saved = SavedModel { preprocessor, model };
        saved.check()?;
        Ok(saved)
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.preprocessor.feature_names()
    }

    /// Impute, encode, scale and predict a single raw reading.
    pub fn predict_record(&self, record: &SensorRecord) -> f64 {
        self.model.predict_row(&self.preprocessor.transform(record))
    }

    fn check(&self) -> Result<(), ModelFileError> {
        let width = self.preprocessor.input_dim();
        if self.preprocessor.scaling.features.len() != width {
            return Err(malformed(format!(
                "{} scaling entries for {width} features",
                self.preprocessor.scaling.features.len()
            )));
        }
        let kinds = self.preprocessor.encoding.feature_kinds();
        if self.preprocessor.scaling.features.iter().zip(&kinds).any(|(s, k)| s.kind != *k) {
            return Err(malformed("scaling feature kinds do not match the encoding".into()));
        }
        if let Some(dim) = self.model.input_dim() {
            if dim != width {
                return Err(malformed(format!("model expects {dim} inputs, preprocessor yields {width}")));
            }
        }
        match &self.model {
            Regressor::Dnn(p) => {
                p.check_shape().map_err(|e| malformed(e.to_string()))?;
                if p.layers.last().map(|l| l.outputs) != Some(1) {
                    return Err(malformed("network must end in one output unit".into()));
                }
            }
            Regressor::Gbt(m) => {
                for tree in &m.trees {
                    check_tree(tree, width)?;
                }
            }
            Regressor::Linear(_) => {}
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(&MAGIC);
        w.u16(FORMAT_VERSION);
        w.u8(self.model.kind() as u8);
        w.u8(0);
        write_preprocessor(&mut w, &self.preprocessor);
        match &self.model {
            Regressor::Dnn(p) => write_dnn(&mut w, p),
            Regressor::Linear(m) => {
                w.f64s(&m.weights);
                w.f64(m.bias);
            }
            Regressor::Gbt(m) => write_gbt(&mut w, m),
        }
        let digest = Sha256::digest(&w.buf);
        w.bytes(&digest);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<SavedModel, ModelFileError> {
        if bytes.len() < MAGIC.len() || bytes[..MAGIC.len()] != MAGIC {
            return Err(ModelFileError::BadMagic);
        }
        if bytes.len() < 12 + DIGEST_LEN {
            return Err(ModelFileError::Truncated);
        }
        let version = u16::from_le_bytes([bytes[8], bytes[9]]);
        if version != FORMAT_VERSION {
            return Err(ModelFileError::UnsupportedVersion(version));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(ModelFileError::ChecksumMismatch);
        }
        let mut r = Reader { buf: body, pos: 10 };
        let kind = r.u8()?;
        if r.u8()? != 0 {
            return Err(malformed("reserved byte is not zero".into()));
        }
        let preprocessor = read_preprocessor(&mut r)?;
        let model = match kind {
            1 => Regressor::Dnn(read_dnn(&mut r)?),
            2 => Regressor::Linear(LinearModel {
                weights: r.f64s()?,
                bias: r.f64()?,
            }),
            3 => Regressor::Gbt(read_gbt(&mut r)?),
            k => return Err(ModelFileError::UnknownKind(k)),
        };
        if r.pos != body.len() {
            return Err(malformed(format!("{} trailing bytes", body.len() - r.pos)));
        }
        SavedModel::new(preprocessor, model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelFileError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SavedModel, ModelFileError> {
        SavedModel::from_bytes(&std::fs::read(path)?)
    }
}

fn malformed(msg: String) -> ModelFileError {
    ModelFileError::Malformed(msg)
}

fn check_tree(tree: &RegressionTree, width: usize) -> Result<(), ModelFileError> {
    if tree.nodes.is_empty() {
        return Err(malformed("tree without nodes".into()));
    }
    for (i, node) in tree.nodes.iter().enumerate() {
        match node {
            TreeNode::Leaf { value } if !value.is_finite() => {
                return Err(malformed("non-finite leaf value".into()))
            }
            TreeNode::Leaf { .. } => {}
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                // children always come after their parent, so traversal terminates
                let ok = *feature < width
                    && threshold.is_finite()
                    && *left > i
                    && *right > i
                    && *left < tree.nodes.len()
                    && *right < tree.nodes.len();
                if !ok {
                    return Err(malformed(format!("bad split node {i}")));
                }
            }
        }
    }
    Ok(())
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("model dimension fits in u32");
        self.bytes(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        self.u32(vs.len());
        vs.iter().for_each(|&v| self.f64(v));
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.bytes(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], ModelFileError> {
        let end = self.pos.checked_add(n).ok_or(ModelFileError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(ModelFileError::Truncated)?;
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ModelFileError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize, ModelFileError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }
    /// A count of items that each occupy at least `min_item` bytes; bounded by the
    /// remaining input so a corrupt count cannot trigger a huge allocation.
    fn count(&mut self, min_item: usize) -> Result<usize, ModelFileError> {
        let n = self.u32()?;
        if n.saturating_mul(min_item) > self.buf.len() - self.pos {
            return Err(ModelFileError::Truncated);
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64, ModelFileError> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }
    fn f64s(&mut self) -> Result<Vec<f64>, ModelFileError> {
        let n = self.count(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn str(&mut self) -> Result<String, ModelFileError> {
        let n = self.count(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| malformed("string is not UTF-8".into()))
    }
    fn flag(&mut self) -> Result<bool, ModelFileError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(malformed(format!("flag byte {b}"))),
        }
    }
}

fn write_preprocessor(w: &mut Writer, p: &Preprocessor) {
    p.column_means.iter().for_each(|&m| w.f64(m));
    w.u8(u8::from(p.encoding.include_hour));
    w.f64(p.encoding.mean_hour);
    w.u32(p.encoding.categories.len());
    p.encoding.categories.iter().for_each(|c| w.str(c));
    let names = p.feature_names();
    w.u32(names.len());
    names.iter().for_each(|n| w.str(n));
    w.u8(match p.scaling.method {
        ScaleMethod::MinMax => 0,
        ScaleMethod::ZScore => 1,
    });
    w.u32(p.scaling.features.len());
    for f in &p.scaling.features {
        w.u8(match f.kind {
            FeatureKind::Indicator => 0,
            FeatureKind::Numeric => 1,
        });
        for v in [f.min, f.max, f.mean, f.std] {
            w.f64(v);
        }
    }
}

fn read_preprocessor(r: &mut Reader) -> Result<Preprocessor, ModelFileError> {
    let mut column_means = [0.0; 5];
    for m in &mut column_means {
        *m = r.f64()?;
    }
    let include_hour = r.flag()?;
    let mean_hour = r.f64()?;
    let n = r.count(4)?;
    let categories = (0..n).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
    let encoding = Encoding {
        categories,
        include_hour,
        mean_hour,
    };
    let n = r.count(4)?;
    let names = (0..n).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
    if names != encoding.feature_names() {
        return Err(malformed("feature names do not match the stored encoding".into()));
    }
    let method = match r.u8()? {
        0 => ScaleMethod::MinMax,
        1 => ScaleMethod::ZScore,
        b => return Err(malformed(format!("scale method {b}"))),
    };
    let n = r.count(33)?;
    let mut features = Vec::with_capacity(n);
    for _ in 0..n {
        let kind = match r.u8()? {
            0 => FeatureKind::Indicator,
            1 => FeatureKind::Numeric,
            b => return Err(malformed(format!("feature kind {b}"))),
        };
        features.push(FeatureScale {
            kind,
            min: r.f64()?,
            max: r.f64()?,
            mean: r.f64()?,
            std: r.f64()?,
        });
    }
    Ok(Preprocessor {
        column_means,
        encoding,
        scaling: ScalingParams { method, features },
    })
}

fn write_dnn(w: &mut Writer, p: &ModelParameters) {
    w.u32(p.layers.len());
    for layer in &p.layers {
        w.u32(layer.inputs);
        w.u32(layer.outputs);
        layer.weights.iter().for_each(|&v| w.f64(v));
        layer.biases.iter().for_each(|&v| w.f64(v));
    }
}

fn read_dnn(r: &mut Reader) -> Result<ModelParameters, ModelFileError> {
    let n = r.count(8)?;
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let inputs = r.u32()?;
        let outputs = r.u32()?;
        let cells = inputs
            .checked_mul(outputs)
            .and_then(|c| c.checked_add(outputs))
            .and_then(|c| c.checked_mul(8))
            .ok_or(ModelFileError::Truncated)?;
        if cells > r.buf.len() - r.pos {
            return Err(ModelFileError::Truncated);
        }
        let weights = (0..inputs * outputs).map(|_| r.f64()).collect::<Result<_, _>>()?;
        let biases = (0..outputs).map(|_| r.f64()).collect::<Result<_, _>>()?;
        layers.push(LayerParams {
            inputs,
            outputs,
            weights,
            biases,
        });
    }
    Ok(ModelParameters { layers })
}

fn write_gbt(w: &mut Writer, m: &GbtModel) {
    w.f64(m.base_prediction);
    w.f64(m.shrinkage);
    w.u32(m.trees.len());
    for tree in &m.trees {
        w.u32(tree.nodes.len());
        for node in &tree.nodes {
            match node {
                TreeNode::Leaf { value } => {
                    w.u8(0);
                    w.f64(*value);
                }
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    w.u8(1);
                    w.u32(*feature);
                    w.f64(*threshold);
                    w.u32(*left);
                    w.u32(*right);
                }
            }
        }
    }
}

fn read_gbt(r: &mut Reader) -> Result<GbtModel, ModelFileError> {
    let base_prediction = r.f64()?;
    let shrinkage = r.f64()?;
    let n = r.count(4)?;
    let mut trees = Vec::with_capacity(n);
    for _ in 0..n {
        let count = r.count(9)?;
        let mut nodes = Vec::with_capacity(count);
        for _ in 0..count {
            nodes.push(match r.u8()? {
                0 => TreeNode::Leaf { value: r.f64()? },
                1 => TreeNode::Split {
                    feature: r.u32()?,
                    threshold: r.f64()?,
                    left: r.u32()?,
                    right: r.u32()?,
                },
                b => return Err(malformed(format!("tree node tag {b}"))),
            });
        }
        trees.push(RegressionTree { nodes });
    }
    Ok(GbtModel {
        base_prediction,
        shrinkage,
        trees,
    })
}
