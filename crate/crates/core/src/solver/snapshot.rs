//! Snapshot files: a short text header terminated by `end\n`, followed by the
//! coefficient arrays as little-endian `f64` (re, im) pairs, harmonic by
//! harmonic, component-major.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};

use super::EnvelopeState;

const MAGIC: &str = "svea-snapshot 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub m: usize,
    pub eps: f64,
    pub t: f64,
    pub length: f64,
    pub points: usize,
    pub comps: usize,
    pub comoving: bool,
    /// Fourier coefficients of `u_j`, `j = 1, 3, …, m`.
    pub coeffs: Vec<Vec<Complex64>>,
}

impl Snapshot {
    pub fn from_state(state: &EnvelopeState) -> Self {
        Self {
            m: state.m,
            eps: state.eps,
            t: state.t,
            length: state.grid.length(),
            points: state.grid.points(),
            comps: state.comps(),
            comoving: state.comoving,
            coeffs: state.coeffs.iter().map(|f| f.values.clone()).collect(),
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "m {}", self.m)?;
        writeln!(w, "eps {:?}", self.eps)?;
        writeln!(w, "t {:?}", self.t)?;
        writeln!(w, "length {:?}", self.length)?;
        writeln!(w, "points {}", self.points)?;
        writeln!(w, "comps {}", self.comps)?;
        writeln!(w, "comoving {}", self.comoving)?;
        writeln!(w, "end")?;
        for block in &self.coeffs {
            for z in block {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        let mut next = |r: &mut BufReader<_>| -> Result<String> {
            line.clear();
            r.read_line(&mut line)
                .map_err(|e| Error::Config(format!("snapshot header: {e}")))?;
            Ok(line.trim_end().to_string())
        };
        if next(&mut r)? != MAGIC {
            return Err(Error::Config("not a snapshot file".into()));
        }
        let mut fields = std::collections::HashMap::new();
        loop {
            let l = next(&mut r)?;
            if l == "end" {
                break;
            }
            if l.is_empty() {
                return Err(Error::Config("truncated snapshot header".into()));
            }
            let (k, v) = l
                .split_once(' ')
                .ok_or_else(|| Error::Config(format!("bad header line '{l}'")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        fn get<T: std::str::FromStr>(f: &std::collections::HashMap<String, String>, k: &str) -> Result<T> {
            f.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Config(format!("snapshot header missing or invalid '{k}'")))
        }
        let m: usize = get(&fields, "m")?;
        let points: usize = get(&fields, "points")?;
        let comps: usize = get(&fields, "comps")?;
        let len = comps * points;
        let mut coeffs = Vec::new();
        let mut buf = [0u8; 16];
        for _ in (1..=m).step_by(2) {
            let mut block = Vec::with_capacity(len);
            for _ in 0..len {
                r.read_exact(&mut buf)
                    .map_err(|e| Error::Config(format!("snapshot payload: {e}")))?;
                let re = f64::from_le_bytes(buf[..8].try_into().unwrap());
                let im = f64::from_le_bytes(buf[8..].try_into().unwrap());
                block.push(Complex64::new(re, im));
            }
            coeffs.push(block);
        }
        Ok(Self {
            m,
            eps: get(&fields, "eps")?,
            t: get(&fields, "t")?,
            length: get(&fields, "length")?,
            points,
            comps,
            comoving: get(&fields, "comoving")?,
            coeffs,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(file)
    }
}
