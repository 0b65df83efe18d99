//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! "SEQSUMCK" | version u32 | dtype u8 (bytes per scalar)
//! config_len u64 | ModelConfig JSON
//! n_tensors u32 | per tensor: name_len u32, name, rows u64, cols u64, data
//! has_optimizer u8 | [config_len u64, OptimizerConfig JSON,
//!                     encoder_step u64, decoder_step u64,
//!                     first moments (data only), second moments (data only)]
//! has_rng u8 | [seed u64, word_pos u128]
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::optim::{OptimizerConfig, OptimizerState};
use super::params::Seq2SeqParams;
use super::{ModelConfig, ModelError, Real};
use crate::objectives::RngState;

const MAGIC: &[u8; 8] = b"SEQSUMCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub params: Seq2SeqParams<T>,
    pub optimizer: Option<OptimizerState<T>>,
    pub rng: Option<RngState>,
}

impl<T: Real> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(T::BYTES);
        write_json(&mut out, &self.params.config);
        out.extend_from_slice(&(self.params.tensors.len() as u32).to_le_bytes());
        for t in &self.params.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.value.nrows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.value.ncols() as u64).to_le_bytes());
            write_data(&mut out, &t.value);
        }
        match &self.optimizer {
            Some(opt) => {
                out.push(1);
                write_json(&mut out, &opt.config);
                out.extend_from_slice(&opt.encoder_step.to_le_bytes());
                out.extend_from_slice(&opt.decoder_step.to_le_bytes());
                for moments in [&opt.m, &opt.v] {
                    for t in &moments.tensors {
                        write_data(&mut out, &t.value);
                    }
                }
            }
            None => out.push(0),
        }
        match &self.rng {
            Some(r) => {
                out.push(1);
                out.extend_from_slice(&r.seed.to_le_bytes());
                out.extend_from_slice(&r.word_pos.to_le_bytes());
            }
            None => out.push(0),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let dtype = r.take(1)?[0];
        if dtype != T::BYTES {
            return Err(bad(format!(
                "stored scalars are {dtype} bytes, requested {} bytes",
                T::BYTES
            )));
        }
        let config: ModelConfig = r.json()?;
        config.validate()?;
        let mut params = Seq2SeqParams::<T>::zeros(&config);
        let n = r.u32()? as usize;
        if n != params.tensors.len() {
            return Err(bad(format!("expected {} tensors, found {n}", params.tensors.len())));
        }
        for t in &mut params.tensors {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| bad("tensor name is not UTF-8"))?;
            let shape = (r.u64()? as usize, r.u64()? as usize);
            if name != t.name || shape != t.value.dim() {
                return Err(bad(format!(
                    "tensor {name} {shape:?} does not match expected {} {:?}",
                    t.name,
                    t.value.dim()
                )));
            }
            r.fill(&mut t.value)?;
        }
        let optimizer = if r.flag()? {
            let cfg: OptimizerConfig = r.json()?;
            let mut opt = OptimizerState::new(cfg, &params);
            opt.encoder_step = r.u64()?;
            opt.decoder_step = r.u64()?;
            for t in opt.m.tensors.iter_mut().chain(opt.v.tensors.iter_mut()) {
                r.fill(&mut t.value)?;
            }
            Some(opt)
        } else {
            None
        };
        let rng = if r.flag()? {
            let seed = r.u64()?;
            let word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());
            Some(RngState { seed, word_pos })
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes after checkpoint"));
        }
        Ok(Self { params, optimizer, rng })
    }
}

pub fn save_checkpoint<T: Real>(path: &Path, ckpt: &Checkpoint<T>) -> Result<(), ModelError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>, ModelError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    Checkpoint::from_bytes(&bytes)
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

fn write_json<S: serde::Serialize>(out: &mut Vec<u8>, value: &S) {
    let json = serde_json::to_vec(value).expect("config serializes");
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
}

fn write_data<T: Real>(out: &mut Vec<u8>, a: &Array2<T>) {
    for &x in a.iter() {
        x.write_le(out);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| bad("unexpected end of file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn flag(&mut self) -> Result<bool, ModelError> {
        match self.take(1)?[0] {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(bad(format!("invalid section flag {v}"))),
        }
    }

    fn json<D: serde::de::DeserializeOwned>(&mut self) -> Result<D, ModelError> {
        let len = self.u64()? as usize;
        serde_json::from_slice(self.take(len)?).map_err(|e| bad(format!("config JSON: {e}")))
    }

    fn fill<T: Real>(&mut self, a: &mut Array2<T>) -> Result<(), ModelError> {
        let width = T::BYTES as usize;
        let data = self.take(a.len() * width)?;
        for (x, chunk) in a.iter_mut().zip(data.chunks_exact(width)) {
            *x = T::read_le(chunk);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Batch, Trainer};
    use crate::objectives::Rng;

    fn trained() -> Trainer<f32> {
        let cfg = ModelConfig {
            dec_dropout: 0.2,
            ..ModelConfig::tiny(20)
        };
        let mut t = Trainer::new(&cfg, OptimizerConfig::desk_pretrain(), 9).unwrap();
        let batch = Batch::from_pairs(&[(vec![5u32, 6, 7], vec![8u32, 9])]);
        for _ in 0..3 {
            t.step(&batch).unwrap();
        }
        t
    }

    #[test]
    fn round_trip_is_exact_and_resume_matches() {
        let mut t = trained();
        let ckpt = Checkpoint {
            params: t.params.clone(),
            optimizer: Some(t.opt.clone()),
            rng: Some(t.rng.state()),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &ckpt).unwrap();
        let back: Checkpoint<f32> = load_checkpoint(&path).unwrap();
        assert_eq!(back, ckpt);

        let mut resumed = Trainer {
            params: back.params,
            opt: back.optimizer.unwrap(),
            rng: Rng::from_state(back.rng.unwrap()),
        };
        let batch = Batch::from_pairs(&[(vec![5u32, 6, 7], vec![8u32, 9])]);
        for _ in 0..3 {
            assert_eq!(t.step(&batch).unwrap(), resumed.step(&batch).unwrap());
        }
        assert_eq!(t.params, resumed.params);
    }

    #[test]
    fn rejects_wrong_dtype_and_truncation() {
        let t = trained();
        let ckpt = Checkpoint { params: t.params, optimizer: None, rng: None };
        let bytes = ckpt.to_bytes();
        assert!(matches!(Checkpoint::<f64>::from_bytes(&bytes), Err(ModelError::Checkpoint(_))));
        assert!(matches!(
            Checkpoint::<f32>::from_bytes(&bytes[..bytes.len() - 3]),
            Err(ModelError::Checkpoint(_))
        ));
        assert!(matches!(Checkpoint::<f32>::from_bytes(b"garbage!"), Err(ModelError::Checkpoint(_))));
        assert_eq!(Checkpoint::<f32>::from_bytes(&bytes).unwrap(), ckpt);
    }
}
