//! Binary model file.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic          4 bytes   "MACM"
//! version        u32       1
//! schema_hash    u64       AttributeSchema::hash of the model schema
//! input_dim      u64
//! trunk_width    u64
//! branch_width   u64
//! dropout_rate   f64
//! bn_epsilon     f64
//! bn_momentum    f64
//! num_attrs      u64
//! num_classes    u64 x num_attrs
//! num_blocks     u64
//! blocks         num_blocks x (len: u64, len x f64)
//! ```
//!
//! Blocks appear in the order trunk (w, b, gamma, beta, running_mean, running_var),
//! then per attribute: hidden (same six) followed by output (w, b). Weight matrices
//! are row-major `fan_in x fan_out`.

use std::path::Path;

use crate::datamodel::AttributeSchema;
use crate::error::{Error, Result};
use crate::io_util;

use super::{MacConfig, MacModel};

const MAGIC: &[u8; 4] = b"MACM";
const VERSION: u32 = 1;

impl MacModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&c.schema.hash().to_le_bytes());
        for v in [c.input_dim, c.trunk_width, c.branch_width] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        for v in [c.dropout_rate, c.bn_epsilon, c.bn_momentum] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(c.schema.len() as u64).to_le_bytes());
        for a in c.schema.attributes() {
            out.extend_from_slice(&(a.num_classes as u64).to_le_bytes());
        }
        let mut me = self.clone();
        let blocks = me.all_tensors_mut();
        out.extend_from_slice(&(blocks.len() as u64).to_le_bytes());
        for block in blocks {
            out.extend_from_slice(&(block.len() as u64).to_le_bytes());
            for v in block.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Decodes a model; `schema` must hash to the value stored in the header.
    pub fn from_bytes(bytes: &[u8], schema: &AttributeSchema) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::ModelFormat("bad magic".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        if r.u64()? != schema.hash() {
            return Err(Error::ModelFormat("schema hash does not match the supplied schema".into()));
        }
        let input_dim = r.usize()?;
        let trunk_width = r.usize()?;
        let branch_width = r.usize()?;
        let dropout_rate = r.f64()?;
        let bn_epsilon = r.f64()?;
        let bn_momentum = r.f64()?;
        let k = r.usize()?;
        if k != schema.len() {
            return Err(Error::ModelFormat("attribute count mismatch".into()));
        }
        for a in schema.attributes() {
            if r.usize()? != a.num_classes {
                return Err(Error::ModelFormat(format!("class count mismatch for `{}`", a.name)));
            }
        }
        let config = MacConfig {
            input_dim,
            trunk_width,
            branch_width,
            dropout_rate,
            bn_epsilon,
            bn_momentum,
            schema: schema.clone(),
        };
        // Shapes come from a fresh model; only the values are read.
        let mut model = MacModel::init(config, 0)?;
        let num_blocks = r.usize()?;
        let mut blocks = model.all_tensors_mut();
        if num_blocks != blocks.len() {
            return Err(Error::ModelFormat(format!(
                "expected {} parameter blocks, found {num_blocks}",
                blocks.len()
            )));
        }
        for block in blocks.iter_mut() {
            let len = r.usize()?;
            if len != block.len() {
                return Err(Error::ModelFormat(format!("block length {len}, expected {}", block.len())));
            }
            for v in block.iter_mut() {
                *v = r.f64()?;
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::ModelFormat("trailing bytes".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io_util::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path, schema: &AttributeSchema) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, schema)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::ModelFormat("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::ModelFormat("size overflow".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
