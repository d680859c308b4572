//! Binary checkpoint container.
//!
//! Layout, all integers and reals little-endian:
//!
//! ```text
//! magic        8 bytes  "CONVPSMD"
//! version      u32
//! dim, M, N, F, |words|, |values|   u64 each
//! tables       users (M), items (N), words, slots (F), values;
//!              each string as u32 byte length + UTF-8 bytes
//! tensors      f32 row-major: user, item, word, slot_pos, slot_neg,
//!              value, proj_weight (dim x dim), proj_bias (dim)
//! ```

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{Embedding, Model, ModelParams, ModelTables, ParamShape};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CONVPSMD";
pub const CHECKPOINT_VERSION: u32 = 1;

fn ck(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn write_strings<W: Write>(w: &mut W, names: &[String]) -> std::io::Result<()> {
    for n in names {
        w.write_u32::<LittleEndian>(n.len() as u32)?;
        w.write_all(n.as_bytes())?;
    }
    Ok(())
}

fn read_strings<R: Read>(r: &mut R, count: usize) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = r.read_u32::<LittleEndian>().map_err(|e| ck(e.to_string()))? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf).map_err(|e| ck(e.to_string()))?;
        out.push(String::from_utf8(buf).map_err(|_| ck("table entry is not UTF-8"))?);
    }
    Ok(out)
}

fn read_tensor<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let x = r
            .read_f32::<LittleEndian>()
            .map_err(|_| ck("truncated tensor data"))?;
        out.push(f64::from(x));
    }
    Ok(out)
}

impl Model {
    pub fn to_bytes(&self) -> Vec<u8> {
        let s = self.params.shape();
        let mut w = Vec::new();
        let io = (|| -> std::io::Result<()> {
            w.write_all(CHECKPOINT_MAGIC)?;
            w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
            for n in [s.dim, s.users, s.items, s.slots, s.words, s.values] {
                w.write_u64::<LittleEndian>(n as u64)?;
            }
            write_strings(&mut w, &self.tables.users)?;
            write_strings(&mut w, &self.tables.items)?;
            write_strings(&mut w, &self.tables.words)?;
            write_strings(&mut w, &self.tables.slots)?;
            write_strings(&mut w, &self.tables.values)?;
            for t in self.params.tensors() {
                for &x in t {
                    w.write_f32::<LittleEndian>(x as f32)?;
                }
            }
            Ok(())
        })();
        io.expect("writing to a Vec cannot fail");
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| ck("file too short"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(ck("not a checkpoint (bad magic)"));
        }
        let version = r.read_u32::<LittleEndian>().map_err(|_| ck("file too short"))?;
        if version != CHECKPOINT_VERSION {
            return Err(ck(format!(
                "unsupported format version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.read_u64::<LittleEndian>().map_err(|_| ck("truncated header"))? as usize;
        }
        let [dim, users, items, slots, words, values] = dims;
        if dim == 0 {
            return Err(ck("dimension is zero"));
        }
        let tables = ModelTables {
            users: read_strings(&mut r, users)?,
            items: read_strings(&mut r, items)?,
            words: read_strings(&mut r, words)?,
            slots: read_strings(&mut r, slots)?,
            values: read_strings(&mut r, values)?,
        };
        let shape = ParamShape {
            dim,
            users,
            items,
            words,
            slots,
            values,
        };
        let mut emb = |rows: usize| -> Result<Embedding> {
            Ok(Embedding::from_vec(rows, dim, read_tensor(&mut r, rows * dim)?))
        };
        let params = ModelParams {
            user_emb: emb(shape.users)?,
            item_emb: emb(shape.items)?,
            word_emb: emb(shape.words)?,
            slot_pos_emb: emb(shape.slots)?,
            slot_neg_emb: emb(shape.slots)?,
            value_emb: emb(shape.values)?,
            proj_weight: read_tensor(&mut r, dim * dim)?,
            proj_bias: read_tensor(&mut r, dim)?,
        };
        if (r.position() as usize) != bytes.len() {
            return Err(ck("trailing bytes after tensor data"));
        }
        Model::new(params, tables)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Model> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Model::from_bytes(&bytes)
    }

    /// Rounds every parameter to the precision stored on disk, so an
    /// in-memory model ranks exactly like its reloaded checkpoint.
    pub fn round_to_storage(&mut self) {
        let p = &mut self.params;
        for t in [
            p.user_emb.as_mut_slice(),
            p.item_emb.as_mut_slice(),
            p.word_emb.as_mut_slice(),
            p.slot_pos_emb.as_mut_slice(),
            p.slot_neg_emb.as_mut_slice(),
            p.value_emb.as_mut_slice(),
            p.proj_weight.as_mut_slice(),
            p.proj_bias.as_mut_slice(),
        ] {
            t.iter_mut().for_each(|x| *x = f64::from(*x as f32));
        }
    }
}
