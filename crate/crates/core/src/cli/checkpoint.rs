//! Wavefunction checkpoints.
//!
//! `<file>.qwp` holds the header: magic `QWP1`, format version, grid
//! metadata, channel count, payload kind and the resolved configuration.
//! Payloads follow in `<file>_<n>.qwp` chunks (magic `QWPC`, version, chunk
//! number), each a run of `step: u64, t: f64` plus the channel tensors as
//! row-major little-endian `(re, im)` doubles. A chunk is closed before it
//! would exceed [`CHUNK_LIMIT`]; a payload larger than that gets a chunk of
//! its own.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::grids::{Grid1D, GridParams, ProductGrid};
use crate::system::WaveFunction;

pub const HEADER_MAGIC: &[u8; 4] = b"QWP1";
pub const CHUNK_MAGIC: &[u8; 4] = b"QWPC";
pub const VERSION: u32 = 1;
pub const CHUNK_LIMIT: u64 = 64 << 20;
const CHUNK_HEADER: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    /// one payload per saved main step
    TimeSteps,
    /// one payload per eigenstate; `t` carries the energy
    Eigenstates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointHeader {
    pub grid: ProductGrid,
    pub n_channels: usize,
    pub kind: PayloadKind,
    pub config: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Payload {
    pub step: u64,
    pub t: f64,
    pub psi: WaveFunction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub payloads: Vec<Payload>,
}

pub fn header_path(dir: &Path, file: &str) -> PathBuf {
    dir.join(format!("{file}.qwp"))
}

pub fn chunk_path(dir: &Path, file: &str, n: u64) -> PathBuf {
    dir.join(format!("{file}_{n}.qwp"))
}

fn payload_bytes(grid: &ProductGrid, n_channels: usize) -> u64 {
    16 + 16 * (n_channels * grid.size()) as u64
}

fn write_header(w: &mut impl Write, h: &CheckpointHeader) -> std::io::Result<()> {
    w.write_all(HEADER_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(h.n_channels as u32).to_le_bytes())?;
    w.write_all(&(h.grid.ndim() as u32).to_le_bytes())?;
    for g in h.grid.dofs() {
        let (kind, a, b) = match g.params() {
            GridParams::Fft { x_min, x_max } => (0u8, x_min, x_max),
            GridParams::Hermite { omega, r_e } => (1, omega, r_e),
            GridParams::Legendre { m_quantum, radius } => (2, radius, m_quantum as f64),
        };
        w.write_all(&[kind])?;
        w.write_all(&(g.len() as u64).to_le_bytes())?;
        for v in [g.mass(), a, b] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.write_all(&[match h.kind {
        PayloadKind::TimeSteps => 0,
        PayloadKind::Eigenstates => 1,
    }])?;
    w.write_all(&(h.config.len() as u64).to_le_bytes())?;
    w.write_all(h.config.as_bytes())
}

/// Streams payloads into chunk files.
pub struct CheckpointWriter {
    dir: PathBuf,
    file: String,
    shape: Vec<usize>,
    n_channels: usize,
    payload: u64,
    limit: u64,
    chunk: u64,
    out: Option<BufWriter<File>>,
    used: u64,
    last_step: Option<u64>,
}

impl CheckpointWriter {
    pub fn create(dir: &Path, file: &str, header: &CheckpointHeader) -> Result<Self> {
        Self::with_limit(dir, file, header, CHUNK_LIMIT)
    }

    pub fn with_limit(dir: &Path, file: &str, header: &CheckpointHeader, limit: u64) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = header_path(dir, file);
        let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
        write_header(&mut w, header)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&path, e))?;
        // stale chunks of an earlier run would be read back as ours
        let mut n = 1;
        while chunk_path(dir, file, n).exists() {
            let p = chunk_path(dir, file, n);
            std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
            n += 1;
        }
        Ok(CheckpointWriter {
            dir: dir.to_path_buf(),
            file: file.to_string(),
            shape: header.grid.shape().to_vec(),
            n_channels: header.n_channels,
            payload: payload_bytes(&header.grid, header.n_channels),
            limit,
            chunk: 0,
            out: None,
            used: 0,
            last_step: None,
        })
    }

    fn open_chunk(&mut self) -> Result<()> {
        self.close_chunk()?;
        self.chunk += 1;
        let path = chunk_path(&self.dir, &self.file, self.chunk);
        let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
        w.write_all(CHUNK_MAGIC)
            .and_then(|_| w.write_all(&VERSION.to_le_bytes()))
            .and_then(|_| w.write_all(&self.chunk.to_le_bytes()))
            .map_err(|e| Error::io(&path, e))?;
        self.out = Some(w);
        self.used = CHUNK_HEADER;
        Ok(())
    }

    fn close_chunk(&mut self) -> Result<()> {
        if let Some(mut w) = self.out.take() {
            w.flush().map_err(|e| Error::io(chunk_path(&self.dir, &self.file, self.chunk), e))?;
        }
        Ok(())
    }

    /// Appends one payload and flushes it to disk.
    pub fn push(&mut self, step: u64, t: f64, psi: &WaveFunction) -> Result<()> {
        if psi.shape() != self.shape.as_slice() || psi.n_channels() != self.n_channels {
            return Err(Error::Shape(format!(
                "checkpoint holds {} channel(s) of shape {:?}, got {} of {:?}",
                self.n_channels,
                self.shape,
                psi.n_channels(),
                psi.shape()
            )));
        }
        if self.last_step.is_some_and(|s| step <= s) {
            return Err(Error::Shape(format!("checkpoint step {step} does not increase")));
        }
        if self.out.is_none() || (self.used > CHUNK_HEADER && self.used + self.payload > self.limit) {
            self.open_chunk()?;
        }
        let path = chunk_path(&self.dir, &self.file, self.chunk);
        let w = self.out.as_mut().expect("chunk open");
        let mut buf = Vec::with_capacity(self.payload as usize);
        buf.extend_from_slice(&step.to_le_bytes());
        buf.extend_from_slice(&t.to_le_bytes());
        for c in &psi.channels {
            for v in c.iter() {
                buf.extend_from_slice(&v.re.to_le_bytes());
                buf.extend_from_slice(&v.im.to_le_bytes());
            }
        }
        w.write_all(&buf).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;
        self.used += self.payload;
        self.last_step = Some(step);
        Ok(())
    }

    pub fn chunks(&self) -> u64 {
        self.chunk
    }

    pub fn finish(mut self) -> Result<()> {
        self.close_chunk()
    }
}

struct Bytes<'a> {
    path: &'a Path,
    data: &'a [u8],
    at: usize,
}

impl Bytes<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.at + n > self.data.len() {
            return Err(Error::format(self.path, format!("truncated header at byte {}", self.at)));
        }
        let s = &self.data[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_header(path: &Path) -> Result<CheckpointHeader> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut b = Bytes { path, data: &data, at: 0 };
    if b.take(4)? != HEADER_MAGIC {
        return Err(Error::format(path, "not a checkpoint header (bad magic)"));
    }
    let version = b.u32()?;
    if version != VERSION {
        return Err(Error::format(path, format!("format version {version}; this build reads {VERSION}")));
    }
    let n_channels = b.u32()? as usize;
    let ndim = b.u32()? as usize;
    if n_channels == 0 || ndim == 0 {
        return Err(Error::format(path, "empty grid or no channels"));
    }
    let mut dofs = Vec::with_capacity(ndim);
    for k in 0..ndim {
        let kind = b.u8()?;
        let n = b.u64()? as usize;
        let (mass, a, c) = (b.f64()?, b.f64()?, b.f64()?);
        let g = match kind {
            0 => Grid1D::fft(n, a, c, mass),
            1 => Grid1D::hermite(n, mass, a, c),
            2 => Grid1D::legendre(n, mass, a, c as u32),
            other => return Err(Error::format(path, format!("dof {}: unknown grid kind {other}", k + 1))),
        }
        .map_err(|e| Error::format(path, format!("dof {}: {e}", k + 1)))?;
        dofs.push(g);
    }
    let kind = match b.u8()? {
        0 => PayloadKind::TimeSteps,
        1 => PayloadKind::Eigenstates,
        other => return Err(Error::format(path, format!("unknown payload kind {other}"))),
    };
    let len = b.u64()? as usize;
    let config = String::from_utf8(b.take(len)?.to_vec())
        .map_err(|_| Error::format(path, "configuration text is not UTF-8"))?;
    if b.at != data.len() {
        return Err(Error::format(path, format!("{} trailing bytes", data.len() - b.at)));
    }
    let grid = ProductGrid::new(dofs).map_err(|e| Error::format(path, e.to_string()))?;
    Ok(CheckpointHeader { grid, n_channels, kind, config })
}

/// Reads payloads chunk by chunk, in order.
pub struct CheckpointReader {
    pub header: CheckpointHeader,
    dir: PathBuf,
    file: String,
    chunk: u64,
    input: Option<BufReader<File>>,
    last_step: Option<u64>,
    payload: usize,
}

impl CheckpointReader {
    pub fn open(dir: &Path, file: &str) -> Result<Self> {
        let header = read_header(&header_path(dir, file))?;
        let payload = payload_bytes(&header.grid, header.n_channels) as usize;
        Ok(CheckpointReader {
            header,
            dir: dir.to_path_buf(),
            file: file.to_string(),
            chunk: 0,
            input: None,
            last_step: None,
            payload,
        })
    }

    fn open_next(&mut self) -> Result<bool> {
        let path = chunk_path(&self.dir, &self.file, self.chunk + 1);
        let f = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(false),
            Err(e) => return Err(Error::io(&path, e)),
        };
        self.chunk += 1;
        let mut r = BufReader::new(f);
        let mut head = [0u8; CHUNK_HEADER as usize];
        r.read_exact(&mut head)
            .map_err(|_| Error::format(&path, format!("chunk {} is truncated inside its header", self.chunk)))?;
        if &head[..4] != CHUNK_MAGIC {
            return Err(Error::format(&path, format!("chunk {}: bad magic", self.chunk)));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::format(&path, format!("chunk {}: format version {version}", self.chunk)));
        }
        let n = u64::from_le_bytes(head[8..16].try_into().expect("8 bytes"));
        if n != self.chunk {
            return Err(Error::format(&path, format!("chunk file {} claims to be chunk {n}", self.chunk)));
        }
        self.input = Some(r);
        Ok(true)
    }

    /// Next payload, or `None` after the last chunk.
    pub fn next_payload(&mut self) -> Result<Option<Payload>> {
        loop {
            if self.input.is_none() && !self.open_next()? {
                return Ok(None);
            }
            let path = chunk_path(&self.dir, &self.file, self.chunk);
            let r = self.input.as_mut().expect("chunk open");
            let mut buf = vec![0u8; self.payload];
            let mut got = 0;
            while got < buf.len() {
                match r.read(&mut buf[got..]) {
                    Ok(0) => break,
                    Ok(k) => got += k,
                    Err(e) if e.kind() == ErrorKind::Interrupted => {}
                    Err(e) => return Err(Error::io(&path, e)),
                }
            }
            if got == 0 {
                self.input = None;
                continue;
            }
            if got < buf.len() {
                return Err(Error::format(
                    &path,
                    format!("chunk {} is truncated: last payload has {got} of {} bytes", self.chunk, buf.len()),
                ));
            }
            let f = |i: usize| f64::from_le_bytes(buf[i..i + 8].try_into().expect("8 bytes"));
            let step = u64::from_le_bytes(buf[..8].try_into().expect("8 bytes"));
            if self.last_step.is_some_and(|s| step <= s) {
                return Err(Error::format(&path, format!("chunk {}: step {step} does not increase", self.chunk)));
            }
            self.last_step = Some(step);
            let size = self.header.grid.size();
            let shape = self.header.grid.shape().to_vec();
            let channels = (0..self.header.n_channels)
                .map(|c| {
                    let base = 16 + c * size * 16;
                    let data = (0..size).map(|i| C64::new(f(base + 16 * i), f(base + 16 * i + 8))).collect();
                    ArrayD::from_shape_vec(IxDyn(&shape), data).expect("shape")
                })
                .collect();
            return Ok(Some(Payload { step, t: f(8), psi: WaveFunction { channels } }));
        }
    }
}

pub fn load_checkpoint(dir: &Path, file: &str) -> Result<Checkpoint> {
    let mut r = CheckpointReader::open(dir, file)?;
    let mut payloads = Vec::new();
    while let Some(p) = r.next_payload()? {
        payloads.push(p);
    }
    Ok(Checkpoint { header: r.header, payloads })
}
