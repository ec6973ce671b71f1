//! Single-file JSON persistence of a trained forecaster.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::NetError;
use crate::normalize::Normalizer;
use crate::params::NetParams;
use crate::spec::NetSpec;
use crate::train::History;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub spec: NetSpec,
    pub shapes: Vec<BlockShape>,
    pub params: NetParams,
    /// Per-signal normalizer applied before windowing.
    pub normalizer: Option<Normalizer>,
    pub history: Option<History>,
    /// Free-form provenance (feature case, upstream fingerprints, ...).
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl ModelFile {
    pub fn new(spec: NetSpec, params: NetParams) -> Result<Self, NetError> {
        spec.validate()?;
        params.check(&spec)?;
        let shapes = spec
            .layout()
            .blocks
            .into_iter()
            .map(|b| BlockShape {
                name: b.name,
                rows: b.rows,
                cols: b.cols,
            })
            .collect();
        Ok(ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            spec,
            shapes,
            params,
            normalizer: None,
            history: None,
            meta: BTreeMap::new(),
        })
    }

    pub fn to_json(&self) -> Result<String, NetError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and checks version, block shapes and parameter count.
    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let version = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != MODEL_FORMAT_VERSION {
            return Err(NetError::Version(version));
        }
        let m: ModelFile = serde_json::from_value(raw)?;
        m.spec.validate()?;
        let expected = ModelFile::new(m.spec.clone(), NetParams::zeros(&m.spec))?.shapes;
        if expected != m.shapes {
            return Err(NetError::Shape("block shapes do not match the network spec".into()));
        }
        m.params.check(&m.spec)?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::forward;
    use crate::spec::{Activation, Arch};

    #[test]
    fn json_roundtrip_preserves_outputs() {
        let spec = NetSpec::new(Arch::Lstm, 1, 3, Activation::Selu).with_io(2, 2, 2);
        let p = NetParams::init(&spec, 4);
        let mut m = ModelFile::new(spec.clone(), p.clone()).unwrap();
        m.normalizer = Some(Normalizer::fit_columns(&[&[1.0, 2.0, 4.0]]).unwrap().with_names(vec!["zeta".into()]));
        m.meta.insert("case".into(), "case01".into());
        let back = ModelFile::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
        assert_eq!(forward(&spec, &p, &x).unwrap(), forward(&back.spec, &back.params, &x).unwrap());
    }

    #[test]
    fn rejects_version_and_shape_mismatch() {
        let spec = NetSpec::new(Arch::Mlp, 1, 2, Activation::Relu).with_io(1, 2, 1);
        let m = ModelFile::new(spec, NetParams::zeros(&NetSpec::new(Arch::Mlp, 1, 2, Activation::Relu).with_io(1, 2, 1))).unwrap();
        let text = m.to_json().unwrap().replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(matches!(ModelFile::from_json(&text), Err(NetError::Version(9))));
        let mut bad = m.clone();
        bad.params.values.push(0.0);
        assert!(ModelFile::from_json(&bad.to_json().unwrap()).is_err());
    }
}
