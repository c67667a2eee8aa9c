//! `.lsvm` checkpoints: magic `LSVM` | version u16 | degree u8 | classes u8 |
//! dim u16 | reserved u16 | gamma, coef0, C, tol as f32 | max_passes u32,
//! then per class: bias f32 | converged u8 | 3 reserved | support count u32 |
//! per support vector: coef f32 followed by `dim` f32 features.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cv::{CvReport, Trial};
use super::svm::{BinarySvm, SvmModel};
use super::SvmConfig;
use crate::error::{Error, Result};
use crate::videoio::ActionLabel;

const MAGIC: &[u8; 4] = b"LSVM";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmSidecar {
    pub config: SvmConfig,
    pub cv: Option<CvReport>,
    #[serde(default)]
    pub trials: Vec<Trial>,
}

pub fn encode_svm(model: &SvmModel) -> Result<Vec<u8>> {
    if model.classes.len() != ActionLabel::COUNT || model.dim == 0 || model.dim > u16::MAX as usize
    {
        return Err(Error::invalid(
            "only trained four-class models can be saved",
        ));
    }
    let c = &model.config;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(c.degree as u8);
    out.push(model.classes.len() as u8);
    out.extend_from_slice(&(model.dim as u16).to_le_bytes());
    out.extend_from_slice(&[0, 0]);
    for v in [c.gamma, c.coef0, c.c, c.tol] {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.extend_from_slice(&(c.max_passes.min(u32::MAX as u64) as u32).to_le_bytes());
    for class in &model.classes {
        out.extend_from_slice(&(class.bias as f32).to_le_bytes());
        out.push(class.converged as u8);
        out.extend_from_slice(&[0, 0, 0]);
        out.extend_from_slice(&(class.support.len() as u32).to_le_bytes());
        for (sv, coef) in class.support.iter().zip(&class.coef) {
            out.extend_from_slice(&(*coef as f32).to_le_bytes());
            for x in sv {
                out.extend_from_slice(&(*x as f32).to_le_bytes());
            }
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
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                self.bytes.len() as u64,
                "truncated LSVM data",
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_bits(self.u32()?) as f64)
    }
}

pub fn decode_svm(bytes: &[u8]) -> Result<SvmModel> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len() as u64, "truncated LSVM header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(0, "bad magic, expected LSVM"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let classes = bytes[7] as usize;
    if classes != ActionLabel::COUNT {
        return Err(Error::format(
            7,
            format!("expected 4 classes, found {classes}"),
        ));
    }
    let dim = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let mut r = Reader { bytes, pos: 12 };
    let config = SvmConfig {
        degree: bytes[6] as u32,
        gamma: r.f32()?,
        coef0: r.f32()?,
        c: r.f32()?,
        tol: r.f32()?,
        max_passes: r.u32()? as u64,
    };
    config
        .validate()
        .map_err(|e| Error::format(6, e.to_string()))?;
    let mut out = Vec::with_capacity(classes);
    for _ in 0..classes {
        let bias = r.f32()?;
        let converged = r.take(4)?[0] != 0;
        let n = r.u32()? as usize;
        let mut support = Vec::with_capacity(n);
        let mut coef = Vec::with_capacity(n);
        for _ in 0..n {
            coef.push(r.f32()?);
            support.push((0..dim).map(|_| r.f32()).collect::<Result<Vec<f64>>>()?);
        }
        out.push(BinarySvm {
            support,
            coef,
            bias,
            converged,
            iterations: 0,
            support_index: Vec::new(),
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            r.pos as u64,
            "trailing bytes after LSVM data",
        ));
    }
    Ok(SvmModel {
        config,
        dim,
        classes: out,
    })
}

pub fn save_svm(
    model: &SvmModel,
    path: impl AsRef<Path>,
    sidecar: Option<&SvmSidecar>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_svm(model)?).map_err(|e| Error::at_path(path, e))?;
    if let Some(sc) = sidecar {
        let side = path.with_extension("json");
        let mut text = serde_json::to_string_pretty(sc)?;
        text.push('\n');
        fs::write(&side, text).map_err(|e| Error::at_path(side, e))?;
    }
    Ok(())
}

pub fn load_svm(path: impl AsRef<Path>) -> Result<SvmModel> {
    let path = path.as_ref();
    decode_svm(&fs::read(path).map_err(|e| Error::at_path(path, e))?)
}

pub fn load_svm_sidecar(path: impl AsRef<Path>) -> Result<SvmSidecar> {
    let side = path.as_ref().with_extension("json");
    let text = fs::read_to_string(&side).map_err(|e| Error::at_path(&side, e))?;
    Ok(serde_json::from_str(&text)?)
}
