//! Binary model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "CCTX" | u32 version | u32 kind
//! u64 × 7: C, d_c, h_c, h_e, d_hid, d_ctx, N (0 without output projection)
//! u32 char count | u32 code point per non-reserved char
//! u32 tensor count | per tensor: u32 name length, name, u64 rows, u64 cols, payload
//! ```
//!
//! Inference files carry f32 payloads. Checkpoints carry f64 payloads and
//! append training state after the tensors (see the training module).

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::EncoderConfig;
use super::model::Model;
use crate::corpus::CharVocab;
use crate::error::{Error, Result};
use crate::numkernel::{ParamStore, Tensor2};

pub const MAGIC: [u8; 4] = *b"CCTX";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileKind {
    Inference,
    Checkpoint,
}

impl FileKind {
    fn code(self) -> u32 {
        match self {
            FileKind::Inference => 0,
            FileKind::Checkpoint => 1,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(FileKind::Inference),
            1 => Ok(FileKind::Checkpoint),
            _ => Err(Error::Format(format!("unknown file kind {code}"))),
        }
    }

    fn wide(self) -> bool {
        self == FileKind::Checkpoint
    }
}

pub(crate) struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    pub(crate) fn new(inner: W) -> Self {
        Writer { inner }
    }

    pub(crate) fn into_inner(self) -> W {
        self.inner
    }

    pub(crate) fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner.write_all(b)?;
        Ok(())
    }

    pub(crate) fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub(crate) fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub(crate) fn usize(&mut self, v: usize) -> Result<()> {
        self.u64(v as u64)
    }

    pub(crate) fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub(crate) fn str(&mut self, s: &str) -> Result<()> {
        let len = u32::try_from(s.len()).map_err(|_| Error::Format("string too long".into()))?;
        self.u32(len)?;
        self.bytes(s.as_bytes())
    }

    pub(crate) fn tensor(&mut self, name: &str, t: &Tensor2, wide: bool) -> Result<()> {
        self.str(name)?;
        self.usize(t.rows())?;
        self.usize(t.cols())?;
        let mut buf = Vec::with_capacity(t.len() * if wide { 8 } else { 4 });
        for &v in t.data() {
            if wide {
                buf.extend_from_slice(&v.to_le_bytes());
            } else {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        self.bytes(&buf)
    }
}

pub(crate) struct Reader<R: Read> {
    inner: R,
}

fn eof(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format("unexpected end of file".into())
    } else {
        Error::Io(e)
    }
}

/// Caps a single allocation driven by a length field.
const MAX_ELEMENTS: u64 = 1 << 32;

impl<R: Read> Reader<R> {
    pub(crate) fn new(inner: R) -> Self {
        Reader { inner }
    }

    pub(crate) fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        (&mut self.inner).take(n as u64).read_to_end(&mut buf).map_err(eof)?;
        if buf.len() < n {
            return Err(Error::Format("unexpected end of file".into()));
        }
        Ok(buf)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b).map_err(eof)?;
        Ok(b)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub(crate) fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        if v > MAX_ELEMENTS {
            return Err(Error::Format(format!("implausible size {v}")));
        }
        Ok(v as usize)
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub(crate) fn str(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.bytes(len)?).map_err(|_| Error::Format("invalid UTF-8 string".into()))
    }

    pub(crate) fn tensor(&mut self, wide: bool) -> Result<(String, Tensor2)> {
        let name = self.str()?;
        let rows = self.usize()?;
        let cols = self.usize()?;
        let n = rows
            .checked_mul(cols)
            .filter(|&n| n as u64 <= MAX_ELEMENTS)
            .ok_or_else(|| Error::Format(format!("tensor {name} too large")))?;
        let width = if wide { 8 } else { 4 };
        let raw = self.bytes(n * width)?;
        let data = raw
            .chunks_exact(width)
            .map(|c| {
                if wide {
                    f64::from_le_bytes(c.try_into().expect("8 bytes"))
                } else {
                    f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64
                }
            })
            .collect();
        Ok((name, Tensor2::from_vec(rows, cols, data)?))
    }

    /// Errors unless the stream is exhausted.
    pub(crate) fn finish(mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(()),
            _ => Err(Error::Format("trailing bytes after model data".into())),
        }
    }
}

/// Writes header, character table and every tensor of `model`.
pub(crate) fn write_model<W: Write>(w: &mut Writer<W>, model: &Model, kind: FileKind) -> Result<()> {
    let c = model.config();
    w.bytes(&MAGIC)?;
    w.u32(VERSION)?;
    w.u32(kind.code())?;
    for d in [
        model.chars().len(),
        c.char_dim,
        c.word_hidden,
        c.context_hidden,
        c.mlp_hidden,
        c.context_dim,
        model.output_vocab(),
    ] {
        w.usize(d)?;
    }
    let chars = model.chars().chars();
    w.u32(chars.len() as u32)?;
    for &ch in chars {
        w.u32(ch as u32)?;
    }
    let store = model.store();
    w.u32(store.len() as u32)?;
    for (_, name, t) in store.iter() {
        w.tensor(name, t, kind.wide())?;
    }
    Ok(())
}

/// Reads what [`write_model`] wrote.
pub(crate) fn read_model<R: Read>(r: &mut Reader<R>) -> Result<(FileKind, Model)> {
    let magic = r.array::<4>()?;
    if magic != MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let kind = FileKind::from_code(r.u32()?)?;
    let mut dims = [0usize; 7];
    for d in &mut dims {
        *d = r.usize()?;
    }
    let [num_chars, char_dim, word_hidden, context_hidden, mlp_hidden, context_dim, n_out] = dims;
    let config = EncoderConfig {
        char_dim,
        word_hidden,
        context_hidden,
        mlp_hidden,
        context_dim,
    };
    let count = r.u32()? as usize;
    let mut chars = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let cp = r.u32()?;
        chars.push(char::from_u32(cp).ok_or_else(|| Error::Format(format!("invalid code point {cp}")))?);
    }
    let chars = CharVocab::from_chars(chars)?;
    if chars.len() != num_chars {
        return Err(Error::Format(format!(
            "header declares {num_chars} characters, table holds {}",
            chars.len()
        )));
    }
    let tensors = r.u32()? as usize;
    let mut store = ParamStore::new();
    for _ in 0..tensors {
        let (name, t) = r.tensor(kind.wide())?;
        if store.find(&name).is_some() {
            return Err(Error::Format(format!("duplicate tensor {name}")));
        }
        store.add(name, t);
    }
    let model = Model::from_parts(config, chars, store)?;
    if model.output_vocab() != n_out {
        return Err(Error::Format(format!(
            "header declares N={n_out}, tensors give N={}",
            model.output_vocab()
        )));
    }
    let expected = model.layout().all_params().len();
    if model.store().len() != expected {
        return Err(Error::Format(format!(
            "expected {expected} tensors, found {}",
            model.store().len()
        )));
    }
    Ok((kind, model))
}

/// Exports `model` for inference: f32 payloads, output projection dropped.
pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::path(path, e))?;
    let mut w = Writer::new(BufWriter::new(file));
    write_model(&mut w, &model.without_output(), FileKind::Inference)?;
    w.into_inner().flush()?;
    Ok(())
}

pub fn model_to_bytes(model: &Model) -> Result<Vec<u8>> {
    let mut w = Writer::new(Vec::new());
    write_model(&mut w, &model.without_output(), FileKind::Inference)?;
    Ok(w.into_inner())
}

/// Loads the encoder from an inference file or a checkpoint. A checkpoint
/// is parsed in full so that damage to its training state is reported.
pub fn load_model(path: &Path) -> Result<Model> {
    let file = File::open(path).map_err(|e| Error::path(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file).read_to_end(&mut bytes)?;
    model_from_bytes(&bytes)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader::new(bytes);
    let (kind, model) = read_model(&mut r)?;
    match kind {
        FileKind::Inference => {
            r.finish()?;
            Ok(model)
        }
        FileKind::Checkpoint => Ok(crate::training::Trainer::from_bytes(bytes)?.into_model()),
    }
}
