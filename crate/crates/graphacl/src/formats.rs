//! Binary artifacts: `embeddings.bin` and model checkpoints. All integers and
//! floats are little-endian.

use std::fs;
use std::path::Path;

use graphacl_core::encoder::ModelState;
use graphacl_core::linalg::DenseMatrix;

use crate::error::{CliError, CliResult};

pub const EMBEDDINGS_MAGIC: &[u8; 4] = b"GACL";
pub const EMBEDDINGS_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GACLCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Header, then `N·D` row-major f32 values.
pub fn encode_embeddings(emb: &DenseMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * emb.data().len());
    out.extend_from_slice(EMBEDDINGS_MAGIC);
    out.extend_from_slice(&EMBEDDINGS_VERSION.to_le_bytes());
    out.extend_from_slice(&(emb.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(emb.cols() as u32).to_le_bytes());
    for &x in emb.data() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| CliError::Data {
            path: self.path.to_path_buf(),
            msg: format!("truncated at byte {} (wanted {n} more)", self.pos),
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn expect_end(&self) -> CliResult<()> {
        if self.pos != self.bytes.len() {
            return Err(CliError::Data {
                path: self.path.to_path_buf(),
                msg: format!("{} trailing bytes", self.bytes.len() - self.pos),
            });
        }
        Ok(())
    }

    fn bad(&self, msg: String) -> CliError {
        CliError::Data { path: self.path.to_path_buf(), msg }
    }
}

pub fn decode_embeddings(bytes: &[u8], path: &Path) -> CliResult<DenseMatrix> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != EMBEDDINGS_MAGIC {
        return Err(r.bad("not an embeddings file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != EMBEDDINGS_VERSION {
        return Err(r.bad(format!("unsupported embeddings version {version}")));
    }
    let n = r.u32()? as usize;
    let d = r.u32()? as usize;
    let raw = r.take(n.checked_mul(d).and_then(|x| x.checked_mul(4)).ok_or_else(|| r.bad("size overflow".into()))?)?;
    let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    r.expect_end()?;
    Ok(DenseMatrix::from_vec(n, d, data)?)
}

pub fn write_embeddings(path: &Path, emb: &DenseMatrix) -> CliResult<()> {
    fs::write(path, encode_embeddings(emb)).map_err(CliError::io(path))
}

pub fn read_embeddings(path: &Path) -> CliResult<DenseMatrix> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    decode_embeddings(&bytes, path)
}

/// Every matrix in the state: online, target and predictor tensors, Adam first
/// then second moments, and the step counter as a final `1×1` tensor.
fn checkpoint_tensors(state: &ModelState) -> Vec<DenseMatrix> {
    let mut out: Vec<DenseMatrix> = state
        .online
        .tensors()
        .chain(state.target.tensors())
        .chain(state.predictor.tensors())
        .map(|p| p.value.clone())
        .collect();
    out.extend(state.adam.first.iter().cloned());
    out.extend(state.adam.second.iter().cloned());
    out.push(DenseMatrix::filled(1, 1, state.step as f64));
    out
}

pub fn encode_checkpoint(state: &ModelState) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for t in checkpoint_tensors(state) {
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
        for &x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

/// Fills `template` (built from the same config and input width) from a checkpoint.
pub fn decode_checkpoint(bytes: &[u8], path: &Path, template: &ModelState) -> CliResult<ModelState> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(r.bad("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(r.bad(format!("unsupported checkpoint version {version}")));
    }
    let mut tensors = Vec::new();
    for expected in checkpoint_tensors(template) {
        let shape = (r.u32()? as usize, r.u32()? as usize);
        if shape != expected.shape() {
            return Err(r.bad(format!(
                "tensor {} has shape {shape:?}, the model expects {:?}",
                tensors.len(),
                expected.shape()
            )));
        }
        let raw = r.take(shape.0 * shape.1 * 8)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        tensors.push(DenseMatrix::from_vec(shape.0, shape.1, data)?);
    }
    r.expect_end()?;

    let mut state = template.clone();
    let mut it = tensors.into_iter();
    let params = state
        .online
        .tensors_mut()
        .chain(state.target.tensors_mut())
        .chain(state.predictor.tensors_mut());
    for p in params {
        p.value = it.next().unwrap();
    }
    for m in state.adam.first.iter_mut().chain(state.adam.second.iter_mut()) {
        *m = it.next().unwrap();
    }
    let step = it.next().unwrap().get(0, 0);
    if !(step >= 0.0 && step.fract() == 0.0) {
        return Err(r.bad(format!("step counter {step} is not a non-negative integer")));
    }
    state.step = step as u64;
    Ok(state)
}

pub fn write_checkpoint(path: &Path, state: &ModelState) -> CliResult<()> {
    fs::write(path, encode_checkpoint(state)).map_err(CliError::io(path))
}

pub fn read_checkpoint(path: &Path, template: &ModelState) -> CliResult<ModelState> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    decode_checkpoint(&bytes, path, template)
}

#[cfg(test)]
mod tests {
    use super::*;
    use graphacl_core::trainer::{init_model, TrainConfig};

    #[test]
    fn embeddings_layout() {
        let m = DenseMatrix::from_rows(&[[1.0, -2.5], [0.25, 3.0], [0.0, 1e-3]]);
        let bytes = encode_embeddings(&m);
        assert_eq!(&bytes[..4], b"GACL");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 16 + 3 * 2 * 4);
        assert_eq!(f32::from_le_bytes(bytes[20..24].try_into().unwrap()), -2.5);
        let back = decode_embeddings(&bytes, Path::new("e")).unwrap();
        let expect = DenseMatrix::from_fn(3, 2, |i, j| m.get(i, j) as f32 as f64);
        assert_eq!(back, expect);
    }

    #[test]
    fn embeddings_reject_corruption() {
        let bytes = encode_embeddings(&DenseMatrix::filled(2, 2, 1.0));
        let p = Path::new("e");
        assert!(decode_embeddings(&bytes[..bytes.len() - 1], p).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_embeddings(&extra, p).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(decode_embeddings(&magic, p).is_err());
        let mut version = bytes;
        version[4] = 2;
        assert!(decode_embeddings(&version, p).is_err());
    }

    fn small_state() -> ModelState {
        let cfg = TrainConfig { dim: 3, hidden_dim: 4, seed: 5, ..TrainConfig::default() };
        let mut s = init_model(6, &cfg).unwrap();
        s.step = 17;
        s.adam.first[0].set(0, 0, 0.5);
        s.adam.second[1].set(0, 1, 0.25);
        s
    }

    #[test]
    fn checkpoint_round_trip() {
        let s = small_state();
        let bytes = encode_checkpoint(&s);
        assert_eq!(&bytes[..8], b"GACLCKPT");
        let mut template = small_state();
        template.step = 0;
        template.online.zero_grad();
        template.adam.first[0].set(0, 0, 0.0);
        let back = decode_checkpoint(&bytes, Path::new("c"), &template).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn checkpoint_layout_starts_with_first_weight() {
        let s = small_state();
        let bytes = encode_checkpoint(&s);
        let w = &s.online.layers()[0].weight.value;
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize, w.rows());
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize, w.cols());
        assert_eq!(f64::from_le_bytes(bytes[20..28].try_into().unwrap()), w.get(0, 0));
        // step counter is the last tensor
        let tail = &bytes[bytes.len() - 16..];
        assert_eq!(u32::from_le_bytes(tail[..4].try_into().unwrap()), 1);
        assert_eq!(f64::from_le_bytes(tail[8..].try_into().unwrap()), 17.0);
    }

    #[test]
    fn checkpoint_rejects_other_architecture() {
        let bytes = encode_checkpoint(&small_state());
        let cfg = TrainConfig { dim: 5, hidden_dim: 4, ..TrainConfig::default() };
        let other = init_model(6, &cfg).unwrap();
        assert!(decode_checkpoint(&bytes, Path::new("c"), &other).is_err());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3], Path::new("c"), &small_state()).is_err());
    }
}
