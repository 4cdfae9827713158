//! Binary model checkpoints: versioned header, layer shapes, then all
//! parameters as little-endian 64-bit floats. Round trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::train::TrainConfig;
use super::{GcnError, GcnModel, Layer};

const MAGIC: &[u8; 4] = b"VGCN";
const VERSION: u32 = 1;

pub fn save_checkpoint(model: &GcnModel, path: &Path) -> Result<(), GcnError> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(model.f_in as u32).to_le_bytes())?;
    out.write_all(&(model.layers.len() as u32).to_le_bytes())?;
    for layer in &model.layers {
        let (rows, cols) = layer.w.dim();
        out.write_all(&(rows as u32).to_le_bytes())?;
        out.write_all(&(cols as u32).to_le_bytes())?;
    }
    out.write_all(&model.output_mean.to_le_bytes())?;
    out.write_all(&model.output_scale.to_le_bytes())?;
    out.write_all(&(model.best_epoch as u64).to_le_bytes())?;
    out.write_all(&(model.config.epochs as u64).to_le_bytes())?;
    out.write_all(&(model.config.batch_size as u64).to_le_bytes())?;
    out.write_all(&model.config.learning_rate.to_le_bytes())?;
    out.write_all(&model.config.seed.to_le_bytes())?;
    out.write_all(&model.config.train_fraction.to_le_bytes())?;
    out.write_all(&model.config.val_fraction.to_le_bytes())?;
    for layer in &model.layers {
        for v in layer.w.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in layer.b.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn u32(&mut self) -> Result<u32, GcnError> {
        let mut buf = [0u8; 4];
        self.inner.read_exact(&mut buf).map_err(truncated)?;
        Ok(u32::from_le_bytes(buf))
    }

    fn u64(&mut self) -> Result<u64, GcnError> {
        let mut buf = [0u8; 8];
        self.inner.read_exact(&mut buf).map_err(truncated)?;
        Ok(u64::from_le_bytes(buf))
    }

    fn f64(&mut self) -> Result<f64, GcnError> {
        let mut buf = [0u8; 8];
        self.inner.read_exact(&mut buf).map_err(truncated)?;
        Ok(f64::from_le_bytes(buf))
    }
}

fn truncated(e: std::io::Error) -> GcnError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        GcnError::MalformedCheckpoint("file truncated".to_string())
    } else {
        GcnError::Io(e)
    }
}

pub fn load_checkpoint(path: &Path) -> Result<GcnModel, GcnError> {
    let mut r = Reader {
        inner: BufReader::new(File::open(path)?),
    };
    let mut magic = [0u8; 4];
    r.inner.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(GcnError::MalformedCheckpoint("bad magic".to_string()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(GcnError::MalformedCheckpoint(format!(
            "unsupported version {version}"
        )));
    }
    let f_in = r.u32()? as usize;
    let n_layers = r.u32()? as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(GcnError::MalformedCheckpoint(format!(
            "implausible layer count {n_layers}"
        )));
    }
    let mut shapes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        shapes.push((rows, cols));
    }
    // shapes must chain: layer input = previous output, starting at f_in
    let mut expect = f_in;
    for &(rows, cols) in &shapes {
        if rows != expect {
            return Err(GcnError::MalformedCheckpoint(format!(
                "layer input {rows} does not chain from {expect}"
            )));
        }
        expect = cols;
    }
    if expect != 1 {
        return Err(GcnError::MalformedCheckpoint(format!(
            "final layer width {expect}, expected 1"
        )));
    }

    let output_mean = r.f64()?;
    let output_scale = r.f64()?;
    let best_epoch = r.u64()? as usize;
    let config = TrainConfig {
        epochs: r.u64()? as usize,
        batch_size: r.u64()? as usize,
        learning_rate: r.f64()?,
        seed: r.u64()?,
        train_fraction: r.f64()?,
        val_fraction: r.f64()?,
    };

    let mut layers = Vec::with_capacity(n_layers);
    for (rows, cols) in shapes {
        let mut w = Array2::zeros((rows, cols));
        for v in w.iter_mut() {
            *v = r.f64()?;
        }
        let mut b = Array1::zeros(cols);
        for v in b.iter_mut() {
            *v = r.f64()?;
        }
        if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(GcnError::MalformedCheckpoint(
                "non-finite parameter".to_string(),
            ));
        }
        layers.push(Layer { w, b });
    }
    let mut tail = [0u8; 1];
    match r.inner.read(&mut tail) {
        Ok(0) => {}
        Ok(_) => {
            return Err(GcnError::MalformedCheckpoint(
                "trailing bytes after parameters".to_string(),
            ))
        }
        Err(e) => return Err(GcnError::Io(e)),
    }

    Ok(GcnModel {
        layers,
        f_in,
        output_mean,
        output_scale,
        config,
        best_epoch,
    })
}
