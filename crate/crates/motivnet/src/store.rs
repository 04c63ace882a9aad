//! Name-addressed, insertion-ordered parameter and buffer registry.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug)]
struct ParamEntry {
    name: String,
    value: Tensor,
    grad: Tensor,
}

#[derive(Clone, Debug)]
struct BufferEntry {
    name: String,
    value: Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Param(usize),
    Buffer(usize),
}

/// Trainable parameters (with gradient slots) and non-trainable buffers for
/// one model. Iteration order is insertion order; names are unique across
/// params and buffers jointly.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<ParamEntry>,
    buffers: Vec<BufferEntry>,
    index: HashMap<String, Slot>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, value: Tensor, trainable: bool) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        if trainable {
            let grad = Tensor::zeros(value.shape());
            self.index
                .insert(name.to_string(), Slot::Param(self.params.len()));
            self.params.push(ParamEntry {
                name: name.to_string(),
                value,
                grad,
            });
        } else {
            self.index
                .insert(name.to_string(), Slot::Buffer(self.buffers.len()));
            self.buffers.push(BufferEntry {
                name: name.to_string(),
                value,
            });
        }
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn is_param(&self, name: &str) -> bool {
        matches!(self.index.get(name), Some(Slot::Param(_)))
    }

    fn slot(&self, name: &str) -> Result<Slot> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownName(name.to_string()))
    }

    /// Value of a param or buffer.
    pub fn value(&self, name: &str) -> Result<&Tensor> {
        match self.slot(name)? {
            Slot::Param(i) => Ok(&self.params[i].value),
            Slot::Buffer(i) => Ok(&self.buffers[i].value),
        }
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        match self.slot(name)? {
            Slot::Param(i) => Ok(&mut self.params[i].value),
            Slot::Buffer(i) => Ok(&mut self.buffers[i].value),
        }
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor> {
        match self.slot(name)? {
            Slot::Param(i) => Ok(&self.params[i].grad),
            Slot::Buffer(_) => Err(Error::Usage(format!("buffer `{name}` has no gradient"))),
        }
    }

    pub fn grad_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        match self.slot(name)? {
            Slot::Param(i) => Ok(&mut self.params[i].grad),
            Slot::Buffer(_) => Err(Error::Usage(format!("buffer `{name}` has no gradient"))),
        }
    }

    pub fn accumulate_grad(&mut self, name: &str, g: &Tensor) -> Result<()> {
        self.grad_mut(name)?.add_assign(g)
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Parameter names in insertion order.
    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    /// Buffer names in insertion order.
    pub fn buffer_names(&self) -> impl Iterator<Item = &str> {
        self.buffers.iter().map(|b| b.name.as_str())
    }

    /// All names in insertion order, params first.
    pub fn all_names(&self) -> Vec<String> {
        self.param_names()
            .chain(self.buffer_names())
            .map(str::to_string)
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum::<usize>()
            + self.buffers.iter().map(|b| b.value.numel()).sum::<usize>()
    }

    /// Serialize values and buffers (not gradients) to the checkpoint
    /// container: version, record count, then per record name, trainable
    /// flag, shape and raw little-endian f64 payload.
    pub fn snapshot(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let n = (self.params.len() + self.buffers.len()) as u64;
        out.extend_from_slice(&n.to_le_bytes());
        for p in &self.params {
            write_record(&mut out, &p.name, true, &p.value);
        }
        for b in &self.buffers {
            write_record(&mut out, &b.name, false, &b.value);
        }
        out
    }

    /// Load a snapshot back. Requires the identical name/shape/trainable
    /// layout; offenders are listed in the error.
    pub fn restore(&mut self, bytes: &[u8]) -> Result<()> {
        let records = read_checkpoint(bytes)?;
        let mut offenders = Vec::new();
        let mut seen = Vec::new();
        for rec in &records {
            seen.push(rec.name.clone());
            match self.index.get(&rec.name) {
                None => offenders.push(format!("{} (not in store)", rec.name)),
                Some(Slot::Param(i)) => {
                    if !rec.trainable {
                        offenders.push(format!("{} (trainable flag mismatch)", rec.name));
                    } else if self.params[*i].value.shape() != rec.value.shape() {
                        offenders.push(format!(
                            "{} (shape {:?} vs {:?})",
                            rec.name,
                            self.params[*i].value.shape(),
                            rec.value.shape()
                        ));
                    }
                }
                Some(Slot::Buffer(i)) => {
                    if rec.trainable {
                        offenders.push(format!("{} (trainable flag mismatch)", rec.name));
                    } else if self.buffers[*i].value.shape() != rec.value.shape() {
                        offenders.push(format!(
                            "{} (shape {:?} vs {:?})",
                            rec.name,
                            self.buffers[*i].value.shape(),
                            rec.value.shape()
                        ));
                    }
                }
            }
        }
        for name in self.index.keys() {
            if !seen.iter().any(|s| s == name) {
                offenders.push(format!("{name} (missing from checkpoint)"));
            }
        }
        if !offenders.is_empty() {
            offenders.sort();
            return Err(Error::Checkpoint(offenders.join(", ")));
        }
        for rec in records {
            match self.index[&rec.name] {
                Slot::Param(i) => self.params[i].value = rec.value,
                Slot::Buffer(i) => self.buffers[i].value = rec.value,
            }
        }
        Ok(())
    }
}

pub struct CheckpointRecord {
    pub name: String,
    pub trainable: bool,
    pub value: Tensor,
}

pub fn write_record(out: &mut Vec<u8>, name: &str, trainable: bool, value: &Tensor) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(u8::from(trainable));
    out.extend_from_slice(&(value.shape().len() as u32).to_le_bytes());
    for &d in value.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in value.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "truncated at byte {} (wanted {} more)",
                self.pos, n
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Vec<CheckpointRecord>> {
    let mut c = Cursor { bytes, pos: 0 };
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let n = c.u64()?;
    let mut records = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let name_len = c.u32()? as usize;
        let name = String::from_utf8(c.take(name_len)?.to_vec())
            .map_err(|e| Error::Checkpoint(format!("bad name utf8: {e}")))?;
        let trainable = c.u8()? != 0;
        let ndim = c.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(c.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(c.f64()?);
        }
        records.push(CheckpointRecord {
            name,
            trainable,
            value: Tensor::from_vec(&shape, data)?,
        });
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after last record",
            bytes.len() - c.pos
        )));
    }
    Ok(records)
}
