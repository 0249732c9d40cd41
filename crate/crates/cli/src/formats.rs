//! Binary and text formats: 8-bit binary PGM images, raw f64 vectors with a
//! magic/shape header, regularizer checkpoints with a trailing checksum, and
//! CSV helpers. Floats in CSV use the shortest round-trip representation, so
//! identical runs produce byte-identical files.

use crate::config::fnv1a;
use crate::{CliError, CliResult};
use dcreg_core::icnn::{Activation, DcMode, DcRegularizer, IcnnLayer, IcnnParams};
use dcreg_core::tensor::Tensor;
use std::io::{Read, Write};
use std::path::Path;

// ---------------------------------------------------------------------------
// PGM (P5, 8-bit)

/// Writes an `n x n` image with values clamped from `[0, 1]` to 8-bit gray.
pub fn write_pgm(path: &Path, n: usize, data: &[f64]) -> CliResult<()> {
    if data.len() != n * n {
        return Err(CliError::config(format!(
            "pgm: expected {} pixels, got {}",
            n * n,
            data.len()
        )));
    }
    let mut out = Vec::with_capacity(n * n + 32);
    out.extend_from_slice(format!("P5\n{n} {n}\n255\n").as_bytes());
    for v in data {
        let byte = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        out.push(byte);
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> CliResult<(usize, usize, Vec<f64>)> {
    let bytes = std::fs::read(path)?;
    let mut parts = Vec::new();
    let mut i = 0usize;
    // header: magic, width, height, maxval — whitespace separated, with
    // optional '#' comments
    while parts.len() < 4 && i < bytes.len() {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        parts.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if parts.len() < 4 || parts[0] != "P5" {
        return Err(CliError::config("pgm: not a binary P5 file"));
    }
    let w: usize = parts[1].parse().map_err(|_| CliError::config("pgm: bad width"))?;
    let h: usize = parts[2].parse().map_err(|_| CliError::config("pgm: bad height"))?;
    let maxval: f64 = parts[3].parse().map_err(|_| CliError::config("pgm: bad maxval"))?;
    i += 1; // single whitespace after maxval
    if bytes.len() < i + w * h {
        return Err(CliError::config("pgm: truncated pixel data"));
    }
    let data = bytes[i..i + w * h]
        .iter()
        .map(|b| *b as f64 / maxval)
        .collect();
    Ok((w, h, data))
}

// ---------------------------------------------------------------------------
// Raw f64 vectors

const VEC_MAGIC: &[u8; 8] = b"DCREGVEC";

/// Little-endian f64 payload with an 8-byte magic and a shape header.
pub fn write_vec(path: &Path, dims: &[u64], data: &[f64]) -> CliResult<()> {
    let expect: u64 = dims.iter().product();
    if expect != data.len() as u64 {
        return Err(CliError::config(format!(
            "vec: shape {:?} needs {} entries, got {}",
            dims,
            expect,
            data.len()
        )));
    }
    let mut out = Vec::with_capacity(16 + dims.len() * 8 + data.len() * 8);
    out.extend_from_slice(VEC_MAGIC);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_vec(path: &Path) -> CliResult<(Vec<u64>, Vec<f64>)> {
    let mut f = std::fs::File::open(path)?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..8] != VEC_MAGIC {
        return Err(CliError::config("vec: bad magic"));
    }
    let rank = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let mut off = 12;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        if bytes.len() < off + 8 {
            return Err(CliError::config("vec: truncated header"));
        }
        dims.push(u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
        off += 8;
    }
    let count: u64 = dims.iter().product();
    if bytes.len() != off + count as usize * 8 {
        return Err(CliError::config("vec: truncated payload"));
    }
    let mut data = Vec::with_capacity(count as usize);
    for k in 0..count as usize {
        let s = off + k * 8;
        data.push(f64::from_le_bytes(bytes[s..s + 8].try_into().unwrap()));
    }
    Ok((dims, data))
}

// ---------------------------------------------------------------------------
// Checkpoints

const CKPT_MAGIC: &[u8; 8] = b"DCREGCK1";
const CKPT_VERSION: u32 = 1;

fn mode_tag(mode: &DcMode) -> (u8, f64) {
    match mode {
        DcMode::Dc => (0, 0.0),
        DcMode::ConvexOnly => (1, 0.0),
        DcMode::WeaklyConvex { rho } => (2, *rho),
    }
}

fn act_tag(a: Activation) -> (u8, f64) {
    match a {
        Activation::Relu => (0, 0.0),
        Activation::LeakyRelu { slope } => (1, slope),
        Activation::Softplus { beta } => (2, beta),
    }
}

fn act_from_tag(tag: u8, param: f64) -> CliResult<Activation> {
    match tag {
        0 => Ok(Activation::Relu),
        1 => Ok(Activation::LeakyRelu { slope: param }),
        2 => Ok(Activation::Softplus { beta: param }),
        other => Err(CliError::config(format!("checkpoint: unknown activation tag {other}"))),
    }
}

fn push_tensor(out: &mut Vec<u8>, t: &Tensor) {
    for v in t.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn net_uniform_activation(p: &IcnnParams) -> CliResult<Activation> {
    let a = p.layers[0].activation;
    if p.layers.iter().any(|l| l.activation != a) {
        return Err(CliError::config(
            "checkpoint: mixed per-layer activations are not serializable",
        ));
    }
    Ok(a)
}

/// Header (magic, version, mode, dims, depth, activation) followed by the
/// flat little-endian parameter block and a trailing 64-bit checksum.
pub fn checkpoint_bytes(reg: &DcRegularizer) -> CliResult<Vec<u8>> {
    let r1 = &reg.r1;
    let width = r1.width();
    if r1.layers.iter().any(|l| l.w_tilde.rows() != width) {
        return Err(CliError::config(
            "checkpoint: non-uniform layer widths are not serializable",
        ));
    }
    let act = net_uniform_activation(r1)?;
    if let Some(r2) = &reg.r2 {
        if net_uniform_activation(r2)? != act
            || r2.width() != width
            || r2.depth() != r1.depth()
            || r2.input_dim != r1.input_dim
        {
            return Err(CliError::config(
                "checkpoint: both networks must share architecture",
            ));
        }
    }

    let (mtag, rho) = mode_tag(&reg.mode);
    let (atag, aparam) = act_tag(act);
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    out.push(mtag);
    out.push(atag);
    out.extend_from_slice(&rho.to_le_bytes());
    out.extend_from_slice(&aparam.to_le_bytes());
    out.extend_from_slice(&(r1.input_dim as u64).to_le_bytes());
    out.extend_from_slice(&(width as u64).to_le_bytes());
    out.extend_from_slice(&(r1.depth() as u64).to_le_bytes());

    let push_net = |out: &mut Vec<u8>, p: &IcnnParams| {
        for l in &p.layers {
            if let Some(w) = &l.w {
                push_tensor(out, w);
            }
            push_tensor(out, &l.w_tilde);
            push_tensor(out, &l.bias);
        }
        push_tensor(out, &p.head_w);
        push_tensor(out, &p.head_b);
    };
    push_net(&mut out, r1);
    if let Some(r2) = &reg.r2 {
        push_net(&mut out, r2);
    }

    let checksum = fnv1a(&out);
    out.extend_from_slice(&checksum.to_le_bytes());
    Ok(out)
}

pub fn write_checkpoint(path: &Path, reg: &DcRegularizer) -> CliResult<()> {
    let bytes = checkpoint_bytes(reg)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> CliResult<DcRegularizer> {
    if bytes.len() < 8 + 4 + 2 + 16 + 24 + 8 || &bytes[..8] != CKPT_MAGIC {
        return Err(CliError::config("checkpoint: bad magic or truncated"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CKPT_VERSION {
        return Err(CliError::config(format!("checkpoint: unsupported version {version}")));
    }
    let body = &bytes[..bytes.len() - 8];
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    if fnv1a(body) != stored {
        return Err(CliError::config("checkpoint: checksum mismatch"));
    }

    let mtag = bytes[12];
    let atag = bytes[13];
    let rho = f64::from_le_bytes(bytes[14..22].try_into().unwrap());
    let aparam = f64::from_le_bytes(bytes[22..30].try_into().unwrap());
    let input_dim = u64::from_le_bytes(bytes[30..38].try_into().unwrap()) as usize;
    let width = u64::from_le_bytes(bytes[38..46].try_into().unwrap()) as usize;
    let depth = u64::from_le_bytes(bytes[46..54].try_into().unwrap()) as usize;
    let act = act_from_tag(atag, aparam)?;

    let mut off = 54usize;
    let mut take = |count: usize| -> CliResult<Vec<f64>> {
        let need = count * 8;
        if body.len() < off + need {
            return Err(CliError::config("checkpoint: truncated parameter block"));
        }
        let mut v = Vec::with_capacity(count);
        for k in 0..count {
            let s = off + k * 8;
            v.push(f64::from_le_bytes(body[s..s + 8].try_into().unwrap()));
        }
        off += need;
        Ok(v)
    };

    let read_net = |take: &mut dyn FnMut(usize) -> CliResult<Vec<f64>>| -> CliResult<IcnnParams> {
        let mut layers = Vec::with_capacity(depth);
        for i in 0..depth {
            let w = if i == 0 {
                None
            } else {
                Some(Tensor::new(width, width, take(width * width)?).expect("sized"))
            };
            let w_tilde = Tensor::new(width, input_dim, take(width * input_dim)?).expect("sized");
            let bias = Tensor::new(width, 1, take(width)?).expect("sized");
            layers.push(IcnnLayer {
                w,
                w_tilde,
                bias,
                activation: act,
            });
        }
        let head_w = Tensor::new(1, width, take(width)?).expect("sized");
        let head_b = Tensor::new(1, 1, take(1)?).expect("sized");
        Ok(IcnnParams {
            input_dim,
            layers,
            head_w,
            head_b,
        })
    };

    let r1 = read_net(&mut take)?;
    let reg = match mtag {
        0 => {
            let r2 = read_net(&mut take)?;
            DcRegularizer::dc(r1, r2).map_err(CliError::from)?
        }
        1 => DcRegularizer::convex_only(r1),
        2 => DcRegularizer::weakly_convex(r1, rho).map_err(CliError::from)?,
        other => return Err(CliError::config(format!("checkpoint: unknown mode tag {other}"))),
    };
    if off != body.len() {
        return Err(CliError::config(format!(
            "checkpoint: {} trailing parameter bytes",
            body.len() - off
        )));
    }
    Ok(reg)
}

pub fn read_checkpoint(path: &Path) -> CliResult<DcRegularizer> {
    if !path.exists() {
        return Err(CliError::missing(format!(
            "checkpoint not found: {}",
            path.display()
        )));
    }
    let bytes = std::fs::read(path)?;
    checkpoint_from_bytes(&bytes)
}

// ---------------------------------------------------------------------------
// CSV

/// Builds a CSV document; floats use Rust's shortest round-trip formatting.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv {
            text: format!("{}\n", header.join(",")),
        }
    }

    pub fn row(&mut self, fields: &[CsvField<'_>]) {
        let mut first = true;
        for f in fields {
            if !first {
                self.text.push(',');
            }
            first = false;
            match f {
                CsvField::F(v) => self.text.push_str(&format!("{v}")),
                CsvField::U(v) => self.text.push_str(&format!("{v}")),
                CsvField::S(v) => self.text.push_str(v),
            }
        }
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

pub enum CsvField<'a> {
    F(f64),
    U(u64),
    S(&'a str),
}
