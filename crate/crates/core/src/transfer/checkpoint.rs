use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;

use crate::kg::Vocab;
use crate::models::{ConvParams, ModelKind, ModelParams, ModelSpec, Norm};
use crate::training::{issues_to_error, validate_config, TrainConfig};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BKGE";
pub const FORMAT_VERSION: u32 = 1;

/// Float width of the stored parameter tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F64,
    /// Smaller export; loads back rounded to 32-bit values.
    F32,
}

/// Trained parameters with the vocabularies and configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub entities: Arc<Vocab>,
    /// Base relations only; inverse relation rows follow them in the table.
    pub relations: Arc<Vocab>,
    pub config: TrainConfig,
}

impl Checkpoint {
    pub fn new(params: ModelParams, entities: Arc<Vocab>, relations: Arc<Vocab>, config: TrainConfig) -> Result<Self> {
        let ck = Checkpoint {
            params,
            entities,
            relations,
            config,
        };
        ck.check()?;
        Ok(ck)
    }

    fn check(&self) -> Result<()> {
        let p = &self.params;
        let spec = &p.spec;
        let rel_rows = p.base_relations * if spec.reciprocal { 2 } else { 1 };
        let bad = |m: String| Err(Error::Format(format!("inconsistent checkpoint: {m}")));
        if p.entities.dim() != (self.entities.len(), spec.entity_width()) {
            return bad(format!(
                "entity table {:?} for {} entities",
                p.entities.dim(),
                self.entities.len()
            ));
        }
        if p.base_relations != self.relations.len() || p.relations.dim() != (rel_rows, spec.relation_width()) {
            return bad(format!(
                "relation table {:?} for {} relations",
                p.relations.dim(),
                self.relations.len()
            ));
        }
        if let Some(n) = &p.normals {
            if n.dim() != (rel_rows, spec.dim) {
                return bad(format!("normal table {:?}", n.dim()));
            }
        }
        if (spec.kind == ModelKind::TransH) != p.normals.is_some()
            || (spec.kind == ModelKind::ConvE) != p.conv.is_some()
        {
            return bad("tables do not match the model kind".into());
        }
        if let Some(c) = &p.conv {
            if c.filter_bank.len() != c.filters * c.kernel * c.kernel
                || c.projection.dim() != (c.filters * 2 * c.k1 * c.k2, spec.dim)
                || c.k1 * c.k2 != spec.dim
            {
                return bad("ConvE tables do not match their shape".into());
            }
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, out: W, precision: Precision) -> Result<()> {
        self.check()?;
        let mut w = Writer { out, precision };
        let p = &self.params;
        let spec = &p.spec;
        w.bytes(MAGIC)?;
        w.u32(FORMAT_VERSION)?;
        w.u8(match precision {
            Precision::F64 => 8,
            Precision::F32 => 4,
        })?;
        w.u8(spec.kind.tag())?;
        w.u8(match spec.norm {
            Norm::L1 => 1,
            Norm::L2 => 2,
        })?;
        w.u8(spec.reciprocal as u8)?;
        for n in [spec.dim, spec.conv_filters, spec.conv_kernel, p.base_relations] {
            w.u64(n as u64)?;
        }
        w.vocab(&self.entities)?;
        w.vocab(&self.relations)?;
        w.string(&self.config.to_toml())?;
        w.table(&p.entities)?;
        w.table(&p.relations)?;
        w.u8(p.normals.is_some() as u8)?;
        if let Some(n) = &p.normals {
            w.table(n)?;
        }
        w.u8(p.conv.is_some() as u8)?;
        if let Some(c) = &p.conv {
            for n in [c.filters, c.kernel, c.k1, c.k2] {
                w.u64(n as u64)?;
            }
            w.floats(&c.filter_bank)?;
            w.table(&c.projection)?;
        }
        w.out.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Checkpoint> {
        let mut r = Reader {
            input,
            precision: Precision::F64,
        };
        let magic = r.array::<4>()?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic bytes)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint format version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        r.precision = match r.u8()? {
            8 => Precision::F64,
            4 => Precision::F32,
            w => return Err(Error::Format(format!("unsupported float width {w}"))),
        };
        let tag = r.u8()?;
        let kind = ModelKind::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown model tag {tag}")))?;
        let norm = match r.u8()? {
            1 => Norm::L1,
            2 => Norm::L2,
            n => return Err(Error::Format(format!("unknown norm tag {n}"))),
        };
        let reciprocal = match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(Error::Format(format!("bad reciprocal flag {b}"))),
        };
        let dim = r.len()?;
        let conv_filters = r.len()?;
        let conv_kernel = r.len()?;
        let base_relations = r.len()?;
        let spec = ModelSpec {
            kind,
            dim,
            norm,
            reciprocal,
            conv_filters,
            conv_kernel,
        };
        let entities = Arc::new(r.vocab()?);
        let relations = Arc::new(r.vocab()?);
        let config = validate_config(&r.string()?)
            .map_err(|issues| Error::Format(format!("embedded config is invalid: {}", issues_to_error(&issues))))?;
        let ent = r.table()?;
        let rel = r.table()?;
        let normals = if r.flag()? { Some(r.table()?) } else { None };
        let conv = if r.flag()? {
            let (filters, kernel, k1, k2) = (r.len()?, r.len()?, r.len()?, r.len()?);
            let n = r.len()?;
            if n != filters * kernel * kernel {
                return Err(Error::Format("filter bank length does not match its shape".into()));
            }
            let filter_bank = r.floats(n)?;
            let projection = r.table()?;
            Some(ConvParams {
                filters,
                kernel,
                k1,
                k2,
                filter_bank,
                projection,
            })
        } else {
            None
        };
        let mut rest = [0u8; 1];
        if r.input.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        let params = ModelParams {
            spec,
            base_relations,
            entities: ent,
            relations: rel,
            normals,
            conv,
        };
        Checkpoint::new(params, entities, relations, config)
    }

    pub fn save(&self, path: &Path, precision: Precision) -> Result<()> {
        self.write(BufWriter::new(File::create(path)?), precision)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        Checkpoint::read(BufReader::new(File::open(path)?))
    }

    pub fn to_bytes(&self, precision: Precision) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write(&mut buf, precision)?;
        Ok(buf)
    }
}

struct Writer<W> {
    out: W,
    precision: Precision,
}

impl<W: Write> Writer<W> {
    fn bytes(&mut self, b: &[u8]) -> io::Result<()> {
        self.out.write_all(b)
    }

    fn u8(&mut self, v: u8) -> io::Result<()> {
        self.bytes(&[v])
    }

    fn u32(&mut self, v: u32) -> io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    fn u64(&mut self, v: u64) -> io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    fn string(&mut self, s: &str) -> io::Result<()> {
        self.u64(s.len() as u64)?;
        self.bytes(s.as_bytes())
    }

    fn vocab(&mut self, v: &Vocab) -> io::Result<()> {
        self.u64(v.len() as u64)?;
        v.names().iter().try_for_each(|n| self.string(n))
    }

    fn floats(&mut self, xs: &[f64]) -> io::Result<()> {
        self.u64(xs.len() as u64)?;
        self.values(xs.iter().copied())
    }

    fn values(&mut self, xs: impl Iterator<Item = f64>) -> io::Result<()> {
        for x in xs {
            match self.precision {
                Precision::F64 => self.bytes(&x.to_le_bytes())?,
                Precision::F32 => self.bytes(&(x as f32).to_le_bytes())?,
            }
        }
        Ok(())
    }

    fn table(&mut self, t: &Array2<f64>) -> io::Result<()> {
        self.u64(t.nrows() as u64)?;
        self.u64(t.ncols() as u64)?;
        // iteration is logical row-major order regardless of memory layout
        self.values(t.iter().copied())
    }
}

struct Reader<R> {
    input: R,
    precision: Precision,
}

/// Refuses lengths no real checkpoint has, so corrupt headers fail before allocating.
const MAX_LEN: u64 = 1 << 40;

impl<R: Read> Reader<R> {
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.input.read_exact(&mut b).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::Format("checkpoint is truncated".into()),
            _ => Error::Io(e),
        })?;
        Ok(b)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Format(format!("bad flag byte {b}"))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn len(&mut self) -> Result<usize> {
        let n = u64::from_le_bytes(self.array()?);
        if n > MAX_LEN {
            return Err(Error::Format(format!("implausible length {n}")));
        }
        Ok(n as usize)
    }

    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        let got = (&mut self.input).take(n as u64).read_to_end(&mut buf)?;
        if got != n {
            return Err(Error::Format("checkpoint is truncated".into()));
        }
        Ok(buf)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.bytes(n)?).map_err(|_| Error::Format("string is not UTF-8".into()))
    }

    fn vocab(&mut self) -> Result<Vocab> {
        let n = self.len()?;
        let names = (0..n).map(|_| self.string()).collect::<Result<Vec<_>>>()?;
        let v = Vocab::from_names(names.iter());
        if v.len() != n {
            return Err(Error::Format("vocabulary has duplicate names".into()));
        }
        Ok(v)
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let width = match self.precision {
            Precision::F64 => 8,
            Precision::F32 => 4,
        };
        let raw = self.bytes(
            n.checked_mul(width)
                .ok_or_else(|| Error::Format("table too large".into()))?,
        )?;
        Ok(match self.precision {
            Precision::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            Precision::F32 => raw
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                .collect(),
        })
    }

    fn table(&mut self) -> Result<Array2<f64>> {
        let (rows, cols) = (self.len()?, self.len()?);
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format("table too large".into()))?;
        let data = self.floats(n)?;
        Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
    }
}
