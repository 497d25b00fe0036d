//! On-disk formats: binary fields and checkpoints, CSV and JSON reports
//!
//! Binary layouts (all integers and floats little-endian):
//!
//! * **Field** — magic `GCLM`, `u32` format version, `u32` cutoff `N`,
//!   `u32` reserved (zero), then `2N` coefficients as `f64` in the basis
//!   index order `-N..-1, 1..N`.
//! * **Checkpoint** — magic `GCKP`, `u32` format version, 32-byte
//!   dynamics hash (solver + forcing sections), `f64` time, `u32` flags
//!   (bit 0: a stochastic-convolution field follows), noise-stream triple
//!   (`u64` seed, trajectory, counter), then the state field and, when
//!   flagged, the convolution field, each in the field layout above.
//!
//! Restarting from a checkpoint whose dynamics hash differs from the
//! present configuration is refused unless explicitly forced.
//!
//! CSV emitters print floats with 17 significant digits (`{:.16e}`), so
//! written values round-trip to the exact `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::diagnostics::{KbEstimate, MomentRow, SpectrumRow};
use crate::ergodicity::CouplingCurve;
use crate::error::{Error, Result};
use crate::forcing::NoiseStream;
use crate::integrator::TrajectoryState;
use crate::spectral::Field;

const FIELD_MAGIC: &[u8; 4] = b"GCLM";
const CHECKPOINT_MAGIC: &[u8; 4] = b"GCKP";
const FIELD_VERSION: u32 = 1;
const CHECKPOINT_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Binary fields
// ---------------------------------------------------------------------------

pub fn write_field<W: Write>(w: &mut W, field: &Field) -> Result<()> {
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&FIELD_VERSION.to_le_bytes())?;
    w.write_all(&(field.cutoff() as u32).to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    for &c in field.coeffs() {
        w.write_all(&c.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub fn read_field<R: Read>(r: &mut R) -> Result<Field> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad field magic {magic:02x?} (expected {FIELD_MAGIC:02x?})"
        )));
    }
    let version = read_u32(r)?;
    if version != FIELD_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported field format version {version} (this build reads {FIELD_VERSION})"
        )));
    }
    let n = read_u32(r)? as usize;
    if !(1..=1 << 24).contains(&n) {
        return Err(Error::Checkpoint(format!("implausible field cutoff {n}")));
    }
    let _reserved = read_u32(r)?;
    let mut coeffs = vec![0.0f64; 2 * n];
    for c in &mut coeffs {
        *c = read_f64(r)?;
        if !c.is_finite() {
            return Err(Error::Checkpoint("non-finite coefficient in field file".into()));
        }
    }
    Field::from_coeffs(n, coeffs)
}

pub fn write_field_file(path: &Path, field: &Field) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_field(&mut w, field)?;
    w.flush()?;
    Ok(())
}

pub fn read_field_file(path: &Path) -> Result<Field> {
    let mut r = BufReader::new(File::open(path)?);
    let field = read_field(&mut r)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint(format!(
            "trailing bytes after field data in {}",
            path.display()
        )));
    }
    Ok(field)
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// A restartable snapshot of one trajectory, tied to the dynamics hash of
/// the configuration that produced it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub dynamics_hash: [u8; 32],
    pub state: TrajectoryState,
}

impl Checkpoint {
    pub fn new(dynamics_hash: [u8; 32], state: TrajectoryState) -> Self {
        Checkpoint {
            dynamics_hash,
            state,
        }
    }

    /// Refuses a resume under a different dynamics (solver/forcing)
    /// configuration unless `force` is set.
    pub fn verify(&self, expected: &[u8; 32], force: bool) -> Result<()> {
        if &self.dynamics_hash != expected && !force {
            return Err(Error::Checkpoint(format!(
                "checkpoint was written under a different solver/forcing configuration \
                 (hash {} vs {}); pass --force to resume anyway",
                hex(&self.dynamics_hash[..8]),
                hex(&expected[..8])
            )));
        }
        Ok(())
    }
}

pub fn write_checkpoint<W: Write>(w: &mut W, ckpt: &Checkpoint) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&ckpt.dynamics_hash)?;
    w.write_all(&ckpt.state.t.to_le_bytes())?;
    let flags: u32 = if ckpt.state.v.is_some() { 1 } else { 0 };
    w.write_all(&flags.to_le_bytes())?;
    let stream = &ckpt.state.stream;
    w.write_all(&stream.seed().to_le_bytes())?;
    w.write_all(&stream.trajectory().to_le_bytes())?;
    w.write_all(&stream.counter().to_le_bytes())?;
    write_field(w, &ckpt.state.omega)?;
    if let Some(v) = &ckpt.state.v {
        write_field(w, v)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad checkpoint magic {magic:02x?} (expected {CHECKPOINT_MAGIC:02x?})"
        )));
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (this build reads {CHECKPOINT_VERSION})"
        )));
    }
    let mut dynamics_hash = [0u8; 32];
    r.read_exact(&mut dynamics_hash)?;
    let t = read_f64(r)?;
    if !t.is_finite() {
        return Err(Error::Checkpoint("non-finite time in checkpoint".into()));
    }
    let flags = read_u32(r)?;
    if flags & !1 != 0 {
        return Err(Error::Checkpoint(format!("unknown checkpoint flags {flags:#x}")));
    }
    let seed = read_u64(r)?;
    let trajectory = read_u64(r)?;
    let counter = read_u64(r)?;
    let omega = read_field(r)?;
    let v = if flags & 1 != 0 {
        Some(read_field(r)?)
    } else {
        None
    };
    let stream = NoiseStream::restore(seed, trajectory, counter);
    Ok(Checkpoint {
        dynamics_hash,
        state: TrajectoryState::from_parts(t, omega, v, stream),
    })
}

pub fn write_checkpoint_file(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, ckpt)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint_file(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);
    let ckpt = read_checkpoint(&mut r)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint(format!(
            "trailing bytes after checkpoint data in {}",
            path.display()
        )));
    }
    Ok(ckpt)
}

// ---------------------------------------------------------------------------
// CSV reports
// ---------------------------------------------------------------------------

/// Formats a float with 17 significant digits so the exact f64 survives a
/// round trip through text.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_spectrum_csv(path: &Path, rows: &[SpectrumRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,k,energy,enstrophy")?;
    for row in rows {
        for k in 1..row.energy.len() {
            writeln!(
                w,
                "{},{k},{},{}",
                fmt(row.t),
                fmt(row.energy[k]),
                fmt(row.enstrophy[k])
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_flux_csv(path: &Path, rows: &[SpectrumRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,k,flux")?;
    for row in rows {
        for k in 1..row.flux.len() {
            writeln!(w, "{},{k},{}", fmt(row.t), fmt(row.flux[k]))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_moments_csv(path: &Path, m: u32, rows: &[MomentRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,m,h_m_sq,int_h_m1_sq")?;
    for row in rows {
        writeln!(
            w,
            "{},{m},{},{}",
            fmt(row.t),
            fmt(row.h_m_sq),
            fmt(row.int_h_m1_sq)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_kb_csv(path: &Path, entries: &[(f64, String, KbEstimate)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "horizon,observable,value,stderr,n_samples,n_batches")?;
    for (horizon, name, est) in entries {
        writeln!(
            w,
            "{},{name},{},{},{},{}",
            fmt(*horizon),
            fmt(est.value),
            fmt(est.stderr),
            est.n_samples,
            est.n_batches
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_attractor_csv(path: &Path, modes: &[i32; 3], rows: &[(f64, [f64; 3])]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,w{},w{},w{}", modes[0], modes[1], modes[2])?;
    for (t, x) in rows {
        writeln!(w, "{},{},{},{}", fmt(*t), fmt(x[0]), fmt(x[1]), fmt(x[2]))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mixing_csv(path: &Path, curve: &CouplingCurve) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,mean_sq_diff,stderr,n_alive")?;
    for j in 0..curve.times.len() {
        writeln!(
            w,
            "{},{},{},{}",
            fmt(curve.times[j]),
            fmt(curve.mean_sq_diff[j]),
            fmt(curve.stderr[j]),
            curve.n_alive
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty-printed JSON report (stable key order: struct definition order).
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Serialization(e.to_string()))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(text.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_bytes(bytes: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().into()
}

pub fn sha256_file(path: &Path) -> Result<[u8; 32]> {
    let mut f = BufReader::new(File::open(path)?);
    let mut h = Sha256::new();
    let mut buf = [0u8; 8192];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().into())
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Run metadata written beside every experiment's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub package: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub dynamics_hash: String,
    pub seed: u64,
    pub resumed: bool,
    pub exit_status: String,
    pub wall_time_secs: f64,
    pub files: Vec<ManifestFile>,
}

impl Manifest {
    pub fn new(command: &str, config_hash: &str, dynamics_hash: &str, seed: u64) -> Self {
        Manifest {
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            dynamics_hash: dynamics_hash.to_string(),
            seed,
            resumed: false,
            exit_status: "ok".to_string(),
            wall_time_secs: 0.0,
            files: Vec::new(),
        }
    }

    /// Records a produced file (path stored relative to `base`).
    pub fn add_file(&mut self, base: &Path, path: &Path) -> Result<()> {
        let digest = sha256_file(path)?;
        let bytes = std::fs::metadata(path)?.len();
        let rel = path.strip_prefix(base).unwrap_or(path);
        self.files.push(ManifestFile {
            path: rel.to_string_lossy().into_owned(),
            sha256: hex(&digest),
            bytes,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        write_json(&path, self)?;
        Ok(path)
    }
}
