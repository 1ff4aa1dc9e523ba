//! Versioned checkpoint format: component specs plus the parameter buffer as
//! base64 little-endian `f64`s.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{BernoulliEncoder, Dlgm, GaussianEncoder, ImplicitGen, NeuralRf, Sbn, VaePair};
use crate::num::{MlpSpec, ParamVector, Segment};

pub const FORMAT: &str = "sagl-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Component {
    Sbn(Sbn),
    VaePair(VaePair),
    Dlgm(Dlgm),
    ImplicitGen(ImplicitGen),
    NeuralRf(NeuralRf),
    BernoulliEncoder(BernoulliEncoder),
    GaussianEncoder(GaussianEncoder),
    Mlp { spec: MlpSpec, prefix: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub step: u64,
    pub components: BTreeMap<String, Component>,
    pub segments: Vec<Segment>,
    pub params: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

pub fn encode_params(p: &ParamVector) -> String {
    let bytes: Vec<u8> = p.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_params(segments: &[Segment], b64: &str) -> Result<ParamVector> {
    let bytes = STANDARD
        .decode(b64)
        .map_err(|e| Error::invalid(format!("checkpoint parameters are not base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::invalid("checkpoint parameter buffer is not a whole number of f64s"));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut out = ParamVector::new();
    let mut at = 0;
    for s in segments {
        if s.offset != at {
            return Err(Error::invalid(format!("segment `{}` is not contiguous", s.name)));
        }
        let n = s.len();
        let end = at + n;
        if end > data.len() {
            return Err(Error::Shape {
                context: "checkpoint parameter buffer",
                expected: end,
                actual: data.len(),
            });
        }
        out.add(s.name.clone(), s.shape.clone(), data[at..end].to_vec())?;
        at = end;
    }
    if at != data.len() {
        return Err(Error::Shape {
            context: "checkpoint parameter buffer",
            expected: at,
            actual: data.len(),
        });
    }
    Ok(out)
}

impl Checkpoint {
    pub fn new(step: u64, components: BTreeMap<String, Component>, params: &ParamVector) -> Self {
        Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            step,
            components,
            segments: params.segments().to_vec(),
            params: encode_params(params),
            config: None,
        }
    }

    pub fn params(&self) -> Result<ParamVector> {
        decode_params(&self.segments, &self.params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s)?;
        if c.format != FORMAT {
            return Err(Error::invalid(format!("not a checkpoint: format `{}`", c.format)));
        }
        if c.version != VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint version {} (expected {VERSION})",
                c.version
            )));
        }
        c.params()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
