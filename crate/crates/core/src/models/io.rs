//! Versioned binary model files.
//!
//! Layout: `MYOMODEL` magic, `u32` format version, `u32` header length, a
//! JSON header (kind, architecture, feature ordering, standardizer, tensor
//! shapes), then every tensor as little-endian `f64` in header order.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::lda::LdaModel;
use super::optim::ParamSet;
use super::recurrent::{Backbone, Head, RecurrentArch, RecurrentModel};
use crate::dataset::MotionClass;
use crate::error::{Error, Result};
use crate::features::{feature_layout, Standardizer, FEATURE_LAYOUT_VERSION};

pub const MODEL_MAGIC: &[u8; 8] = b"MYOMODEL";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Supervised end-to-end training.
    Supervised,
    /// Backbone after self-supervised pre-training.
    Pretrained,
    /// Frozen backbone with a trained head.
    Finetuned,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Lda(LdaModel),
    Recurrent { model: RecurrentModel, stage: Stage },
    Backbone { backbone: Backbone, standardizer: Standardizer, stage: Stage },
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    stage: Option<Stage>,
    arch: Option<RecurrentArch>,
    classes: Option<Vec<MotionClass>>,
    feature_layout_version: u32,
    features: Vec<String>,
    standardizer: Standardizer,
    tensors: Vec<Vec<usize>>,
}

fn shape2(a: &Array2<f64>) -> Vec<usize> {
    vec![a.nrows(), a.ncols()]
}

fn shape1(a: &Array1<f64>) -> Vec<usize> {
    vec![a.len()]
}

fn backbone_shapes(b: &Backbone) -> Vec<Vec<usize>> {
    vec![
        shape2(&b.w_x),
        shape2(&b.w_h),
        shape1(&b.b_lstm),
        shape2(&b.w1),
        shape1(&b.b1),
        shape1(&b.ln1_gain),
        shape1(&b.ln1_bias),
        shape2(&b.w2),
        shape1(&b.b2),
        shape1(&b.ln2_gain),
        shape1(&b.ln2_bias),
    ]
}

pub fn encode_model(model: &StoredModel) -> Result<Vec<u8>> {
    let (header, data): (Header, Vec<&[f64]>) = match model {
        StoredModel::Lda(m) => (
            Header {
                kind: "lda".into(),
                stage: None,
                arch: None,
                classes: Some(m.classes.clone()),
                feature_layout_version: FEATURE_LAYOUT_VERSION,
                features: feature_layout(),
                standardizer: m.standardizer.clone(),
                tensors: vec![
                    shape2(&m.class_means),
                    shape2(&m.shared_covariance),
                    shape2(&m.inverse_covariance),
                    vec![m.class_priors.len()],
                ],
            },
            vec![
                m.class_means.as_slice().expect("standard layout"),
                m.shared_covariance.as_slice().expect("standard layout"),
                m.inverse_covariance.as_slice().expect("standard layout"),
                &m.class_priors,
            ],
        ),
        StoredModel::Recurrent { model, stage } => {
            let mut tensors = backbone_shapes(&model.backbone);
            tensors.push(shape2(&model.head.w));
            tensors.push(shape1(&model.head.b));
            let mut data = model.backbone.tensors();
            data.extend(model.head.tensors());
            (
                Header {
                    kind: "recurrent".into(),
                    stage: Some(*stage),
                    arch: Some(model.arch()),
                    classes: None,
                    feature_layout_version: FEATURE_LAYOUT_VERSION,
                    features: feature_layout(),
                    standardizer: model.standardizer.clone(),
                    tensors,
                },
                data,
            )
        }
        StoredModel::Backbone { backbone, standardizer, stage } => (
            Header {
                kind: "backbone".into(),
                stage: Some(*stage),
                arch: Some(backbone.arch),
                classes: None,
                feature_layout_version: FEATURE_LAYOUT_VERSION,
                features: feature_layout(),
                standardizer: standardizer.clone(),
                tensors: backbone_shapes(backbone),
            },
            backbone.tensors(),
        ),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * data.iter().map(|t| t.len()).sum::<usize>());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in data {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::MalformedModel("file is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn tensor(&mut self, len: usize) -> Result<Vec<f64>> {
        let raw = self.take(len.checked_mul(8).ok_or_else(|| Error::MalformedModel("tensor too large".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

fn fill<P: ParamSet>(params: &mut P, shapes_expected: &[Vec<usize>], shapes: &[Vec<usize>], r: &mut Reader) -> Result<()> {
    if shapes_expected != shapes {
        return Err(Error::MalformedModel("tensor shapes do not match the architecture".into()));
    }
    for t in params.tensors_mut() {
        let v = r.tensor(t.len())?;
        t.copy_from_slice(&v);
    }
    Ok(())
}

pub fn decode_model(bytes: &[u8]) -> Result<StoredModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8).ok() != Some(MODEL_MAGIC.as_slice()) {
        return Err(Error::MalformedModel("bad magic".into()));
    }
    let version = r.u32()?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::MalformedModel(format!("unsupported format version {version}")));
    }
    let len = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(len)?)
        .map_err(|e| Error::MalformedModel(format!("header: {e}")))?;
    if header.feature_layout_version != FEATURE_LAYOUT_VERSION || header.features != feature_layout() {
        return Err(Error::MalformedModel("feature ordering does not match this build".into()));
    }
    let missing = |what: &str| Error::MalformedModel(format!("header lacks {what}"));
    let model = match header.kind.as_str() {
        "lda" => {
            let classes = header.classes.ok_or_else(|| missing("classes"))?;
            let shapes = &header.tensors;
            let ok = shapes.len() == 4
                && shapes[0].len() == 2
                && shapes[0][0] == classes.len()
                && shapes[1] == vec![shapes[0][1]; 2]
                && shapes[2] == shapes[1]
                && shapes[3] == vec![classes.len()];
            if !ok {
                return Err(Error::MalformedModel("inconsistent LDA tensor shapes".into()));
            }
            let (k, d) = (shapes[0][0], shapes[0][1]);
            let to2 = |v: Vec<f64>, s: (usize, usize)| Array2::from_shape_vec(s, v).expect("length checked");
            let class_means = to2(r.tensor(k * d)?, (k, d));
            let shared_covariance = to2(r.tensor(d * d)?, (d, d));
            let inverse_covariance = to2(r.tensor(d * d)?, (d, d));
            let class_priors = r.tensor(k)?;
            StoredModel::Lda(LdaModel {
                classes,
                class_means,
                shared_covariance,
                inverse_covariance,
                class_priors,
                standardizer: header.standardizer,
            })
        }
        "recurrent" => {
            let arch = header.arch.ok_or_else(|| missing("arch"))?;
            let mut backbone = Backbone::zeros(arch);
            let mut head = Head::zeros(arch);
            let mut expected = backbone_shapes(&backbone);
            expected.push(shape2(&head.w));
            expected.push(shape1(&head.b));
            if expected != header.tensors {
                return Err(Error::MalformedModel("tensor shapes do not match the architecture".into()));
            }
            let n = expected.len();
            fill(&mut backbone, &expected[..n - 2], &header.tensors[..n - 2], &mut r)?;
            fill(&mut head, &expected[n - 2..], &header.tensors[n - 2..], &mut r)?;
            StoredModel::Recurrent {
                model: RecurrentModel { backbone, head, standardizer: header.standardizer },
                stage: header.stage.ok_or_else(|| missing("stage"))?,
            }
        }
        "backbone" => {
            let arch = header.arch.ok_or_else(|| missing("arch"))?;
            let mut backbone = Backbone::zeros(arch);
            let expected = backbone_shapes(&backbone);
            fill(&mut backbone, &expected, &header.tensors, &mut r)?;
            StoredModel::Backbone {
                backbone,
                standardizer: header.standardizer,
                stage: header.stage.ok_or_else(|| missing("stage"))?,
            }
        }
        other => return Err(Error::MalformedModel(format!("unknown model kind {other:?}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::MalformedModel("trailing bytes after parameters".into()));
    }
    Ok(model)
}

pub fn save_model(path: &Path, model: &StoredModel) -> Result<()> {
    std::fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<StoredModel> {
    decode_model(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;

    use super::*;

    fn standardizer() -> Standardizer {
        Standardizer { mean: (0..24).map(|i| i as f64 * 0.1).collect(), std: vec![1.5; 24] }
    }

    #[test]
    fn recurrent_round_trip_is_exact() {
        let m = RecurrentModel::init(RecurrentArch::default(), standardizer(), 4);
        let stored = StoredModel::Recurrent { model: m, stage: Stage::Finetuned };
        let bytes = encode_model(&stored).unwrap();
        assert_eq!(decode_model(&bytes).unwrap(), stored);
        assert_eq!(encode_model(&decode_model(&bytes).unwrap()).unwrap(), bytes);
    }

    #[test]
    fn backbone_round_trip_keeps_stage() {
        let arch = RecurrentArch { hidden: 8, dense: 8, ..Default::default() };
        let stored = StoredModel::Backbone {
            backbone: Backbone::init(arch, 2),
            standardizer: standardizer(),
            stage: Stage::Pretrained,
        };
        assert_eq!(decode_model(&encode_model(&stored).unwrap()).unwrap(), stored);
    }

    #[test]
    fn lda_round_trip_is_exact() {
        let x = Array2::from_shape_fn((60, 24), |(i, j)| ((i * 31 + j * 7) % 17) as f64 + (i % 2) as f64 * 3.0);
        let y: Vec<MotionClass> = (0..60).map(|i| if i % 2 == 0 { MotionClass::WF } else { MotionClass::NM }).collect();
        let m = LdaModel::fit(x.view(), &y, &[MotionClass::WF, MotionClass::NM]).unwrap();
        let stored = StoredModel::Lda(m);
        assert_eq!(decode_model(&encode_model(&stored).unwrap()).unwrap(), stored);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let arch = RecurrentArch { hidden: 4, dense: 4, ..Default::default() };
        let stored = StoredModel::Recurrent { model: RecurrentModel::init(arch, standardizer(), 1), stage: Stage::Supervised };
        let bytes = encode_model(&stored).unwrap();
        assert!(matches!(decode_model(&bytes[..bytes.len() - 3]), Err(Error::MalformedModel(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_model(&bad), Err(Error::MalformedModel(_))));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(decode_model(&long), Err(Error::MalformedModel(_))));
    }
}
