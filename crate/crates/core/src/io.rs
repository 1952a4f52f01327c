//! On-disk formats: labeled datasets, model checkpoints, loss histories.
//!
//! Both binary formats are an 8-byte magic, a little-endian `u32` version, a
//! length-prefixed JSON header, then raw little-endian `f64` payload. Writing
//! the same value twice gives the same bytes, so SHA-256 digests of files
//! double as reproducibility checks.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forcing::{ForcingFamily, ForcingRecord};
use crate::models::{ModelKind, OperatorModel};
use crate::nn::Activation;
use crate::problem::{Problem, ProblemTag, Split};
use crate::quadrature::RuleDescriptor;
use crate::training::{EpochRecord, LabeledDataset, TrainConfig};

pub const DATASET_MAGIC: &[u8; 8] = b"PGVMDATA";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PGVMCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Headers larger than this are treated as corruption.
const MAX_HEADER: u64 = 1 << 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct DatasetHeader {
    problem: ProblemTag,
    split: Split,
    seed: u64,
    sensor_rule: RuleDescriptor,
    output_rule: RuleDescriptor,
    count: u64,
    sensors: u64,
    outputs: u64,
}

/// Layer layout of the trainable network, echoed so checkpoints are readable
/// without the code that wrote them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkHeader {
    pub dims: Vec<usize>,
    pub activation: Activation,
    pub cutoff: Option<f64>,
    pub final_bias: bool,
}

/// Everything needed to rebuild a trained model for a problem.
///
/// Payload: network parameters layer by layer (row-major `W_l`, then bias),
/// followed by the learned matrix `B` column-major for BNet and L-DeepONet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub problem: ProblemTag,
    pub model: ModelKind,
    /// Reference resolution of the problem the model was built for.
    pub resolution: usize,
    pub epoch: usize,
    pub num_params: u64,
    pub network: Option<NetworkHeader>,
    /// Seed the model was initialized and trained with.
    pub seed: u64,
    pub train_config: Option<TrainConfig>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<f64>,
}

fn network_header(model: &OperatorModel) -> Option<NetworkHeader> {
    let net = match model {
        OperatorModel::PgVarmion(m) => m.net()?,
        OperatorModel::LDeepONet(m) => m.trunk(),
        OperatorModel::BNet(_) => return None,
    };
    Some(NetworkHeader {
        dims: net.dims().to_vec(),
        activation: net.activation(),
        cutoff: net.cutoff(),
        final_bias: net.final_bias(),
    })
}

impl Checkpoint {
    pub fn capture(
        problem: &Problem,
        model: &OperatorModel,
        epoch: usize,
        seed: u64,
        train_config: Option<&TrainConfig>,
    ) -> Self {
        let params = model.params();
        Self {
            header: CheckpointHeader {
                problem: problem.tag(),
                model: model.kind(),
                resolution: problem.resolution(),
                epoch,
                num_params: params.len() as u64,
                network: network_header(model),
                seed,
                train_config: train_config.cloned(),
            },
            params,
        }
    }

    /// Rebuilds the model on `problem`, which must match the header.
    pub fn restore(&self, problem: &Problem) -> Result<OperatorModel> {
        if problem.tag() != self.header.problem {
            return Err(Error::Format(format!(
                "checkpoint is for {}, not {}",
                self.header.problem,
                problem.tag()
            )));
        }
        let mut model = OperatorModel::for_problem(problem, self.header.model, self.header.seed)?;
        if network_header(&model) != self.header.network {
            return Err(Error::Format(format!("network layout of {} does not match the checkpoint", self.header.model)));
        }
        if model.num_params() != self.params.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} parameters, {} expects {}",
                self.params.len(),
                self.header.model,
                model.num_params()
            )));
        }
        model.set_params(&self.params)?;
        Ok(model)
    }
}

fn write_header<W: Write, H: Serialize>(w: &mut W, magic: &[u8; 8], header: &H) -> Result<()> {
    let json = serde_json::to_vec(header).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(magic)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u64::<LittleEndian>(json.len() as u64)?;
    w.write_all(&json)?;
    Ok(())
}

fn read_header<R: Read, H: for<'de> Deserialize<'de>>(r: &mut R, magic: &[u8; 8]) -> Result<H> {
    let mut m = [0u8; 8];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let len = r.read_u64::<LittleEndian>()?;
    if len > MAX_HEADER {
        return Err(Error::Format(format!("header length {len} too large")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)?;
    serde_json::from_slice(&json).map_err(|e| Error::Format(format!("header: {e}")))
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    for &x in xs {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    r.read_f64_into::<LittleEndian>(&mut out)?;
    Ok(out)
}

fn expect_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut b = [0u8; 1];
    match r.read(&mut b)? {
        0 => Ok(()),
        _ => Err(Error::Format("trailing bytes".into())),
    }
}

pub fn write_dataset<W: Write>(w: &mut W, data: &LabeledDataset) -> Result<()> {
    let header = DatasetHeader {
        problem: data.problem,
        split: data.split,
        seed: data.seed,
        sensor_rule: data.sensor_rule.clone(),
        output_rule: data.output_rule.clone(),
        count: data.len() as u64,
        sensors: data.sensors.nrows() as u64,
        outputs: data.labels.nrows() as u64,
    };
    write_header(w, DATASET_MAGIC, &header)?;
    for (j, rec) in data.forcings.iter().enumerate() {
        if rec.family == ForcingFamily::Custom {
            return Err(Error::UnsupportedForcing(format!("sample {j} has a custom forcing")));
        }
        w.write_u8(rec.family.code())?;
        w.write_u64::<LittleEndian>(rec.seed)?;
        w.write_f64::<LittleEndian>(rec.length_scale)?;
        w.write_f64::<LittleEndian>(rec.scale)?;
        w.write_u32::<LittleEndian>(rec.coefficients.len() as u32)?;
        write_f64s(w, &rec.coefficients)?;
        write_f64s(w, data.sensor_vector(j))?;
        write_f64s(w, data.label_vector(j))?;
    }
    Ok(())
}

pub fn read_dataset<R: Read>(r: &mut R) -> Result<LabeledDataset> {
    let h: DatasetHeader = read_header(r, DATASET_MAGIC)?;
    let (n, ns, no) = (h.count as usize, h.sensors as usize, h.outputs as usize);
    let sensor_len = h.sensor_rule.build()?.len();
    let output_len = h.output_rule.build()?.len();
    if sensor_len != ns || output_len != no {
        return Err(Error::Format(format!(
            "rule sizes {sensor_len}/{output_len} disagree with header {ns}/{no}"
        )));
    }
    let mut forcings = Vec::with_capacity(n.min(1 << 20));
    let mut sensors = Vec::new();
    let mut labels = Vec::new();
    for j in 0..n {
        let code = r.read_u8()?;
        let family = ForcingFamily::from_code(code)
            .ok_or_else(|| Error::Format(format!("sample {j}: unknown forcing family {code}")))?;
        let seed = r.read_u64::<LittleEndian>()?;
        let length_scale = r.read_f64::<LittleEndian>()?;
        let scale = r.read_f64::<LittleEndian>()?;
        let nc = r.read_u32::<LittleEndian>()? as usize;
        let coefficients = read_f64s(r, nc)?;
        forcings.push(ForcingRecord { family, seed, length_scale, scale, coefficients });
        sensors.extend(read_f64s(r, ns)?);
        labels.extend(read_f64s(r, no)?);
    }
    expect_eof(r)?;
    Ok(LabeledDataset {
        problem: h.problem,
        split: h.split,
        seed: h.seed,
        sensor_rule: h.sensor_rule,
        output_rule: h.output_rule,
        forcings,
        sensors: DMatrix::from_vec(ns, n, sensors),
        labels: DMatrix::from_vec(no, n, labels),
    })
}

pub fn dataset_bytes(data: &LabeledDataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_dataset(&mut buf, data)?;
    Ok(buf)
}

/// SHA-256 of the serialized dataset, hex encoded.
pub fn dataset_digest(data: &LabeledDataset) -> Result<String> {
    Ok(sha256_hex(&dataset_bytes(data)?))
}

pub fn save_dataset(path: &Path, data: &LabeledDataset) -> Result<String> {
    let bytes = dataset_bytes(data)?;
    std::fs::write(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    read_dataset(&mut BufReader::new(File::open(path)?))
}

/// One row per sample: `sample,family,seed,scale,f_0..,u_0..`.
pub fn write_dataset_csv<W: Write>(w: &mut W, data: &LabeledDataset) -> Result<()> {
    let (ns, no) = (data.sensors.nrows(), data.labels.nrows());
    write!(w, "sample,family,seed,scale")?;
    for k in 0..ns {
        write!(w, ",f_{k}")?;
    }
    for l in 0..no {
        write!(w, ",u_{l}")?;
    }
    writeln!(w)?;
    for (j, rec) in data.forcings.iter().enumerate() {
        write!(w, "{j},{:?},{},{:e}", rec.family, rec.seed, rec.scale)?;
        for v in data.sensor_vector(j).iter().chain(data.label_vector(j)) {
            write!(w, ",{v:e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_checkpoint<W: Write>(w: &mut W, ckpt: &Checkpoint) -> Result<()> {
    if ckpt.header.num_params as usize != ckpt.params.len() {
        return Err(Error::shape("checkpoint header disagrees with parameter count"));
    }
    write_header(w, CHECKPOINT_MAGIC, &ckpt.header)?;
    write_f64s(w, &ckpt.params)
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint> {
    let header: CheckpointHeader = read_header(r, CHECKPOINT_MAGIC)?;
    if header.num_params > 1 << 32 {
        return Err(Error::Format("implausible parameter count".into()));
    }
    let params = read_f64s(r, header.num_params as usize)?;
    expect_eof(r)?;
    Ok(Checkpoint { header, params })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<String> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, ckpt)?;
    std::fs::write(path, &buf)?;
    Ok(sha256_hex(&buf))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

pub fn write_history_csv<W: Write>(w: &mut W, history: &[EpochRecord]) -> Result<()> {
    writeln!(w, "epoch,lr,loss")?;
    for r in history {
        writeln!(w, "{},{:e},{:e}", r.epoch, r.learning_rate, r.loss)?;
    }
    Ok(())
}

pub fn save_text(path: &Path, text: &str) -> Result<String> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(sha256_hex(text.as_bytes()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut r = BufReader::new(File::open(path)?);
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::build_dataset;

    fn small() -> (Problem, LabeledDataset) {
        let p = Problem::new(ProblemTag::Diffusion1d).unwrap();
        let d = build_dataset(&p, Split::Test2, 5, 3).unwrap();
        (p, d)
    }

    #[test]
    fn dataset_round_trip() {
        let (_, d) = small();
        let bytes = dataset_bytes(&d).unwrap();
        let back = read_dataset(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, d);
        assert_eq!(dataset_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn regenerated_dataset_same_digest() {
        let (p, d) = small();
        let again = build_dataset(&p, Split::Test2, 5, 3).unwrap();
        assert_eq!(dataset_digest(&d).unwrap(), dataset_digest(&again).unwrap());
        let other = build_dataset(&p, Split::Test2, 5, 4).unwrap();
        assert_ne!(dataset_digest(&d).unwrap(), dataset_digest(&other).unwrap());
    }

    #[test]
    fn corrupt_files_rejected() {
        let (_, d) = small();
        let bytes = dataset_bytes(&d).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_dataset(&mut bad.as_slice()), Err(Error::Format(_))));
        assert!(read_dataset(&mut &bytes[..bytes.len() - 3]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(read_dataset(&mut long.as_slice()), Err(Error::Format(_))));
        let mut ver = bytes;
        ver[8] = 9;
        assert!(matches!(read_dataset(&mut ver.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn checkpoint_restores_predictions() {
        let (p, d) = small();
        let mut m = OperatorModel::for_problem(&p, ModelKind::PgVarmion, 11).unwrap();
        let perturbed: Vec<f64> = m.params().iter().map(|x| x * 1.1 + 0.01).collect();
        m.set_params(&perturbed).unwrap();
        let ck = Checkpoint::capture(&p, &m, 7, 11, Some(&TrainConfig::desk(p.tag())));
        assert_eq!(ck.header.network.as_ref().unwrap().dims, vec![1, 10, 20, 30, 10]);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ck).unwrap();
        let back = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        let restored = back.restore(&p).unwrap();
        let pts = p.outputs().rule().nodes().to_vec();
        let f = d.sensor_vector(0);
        assert_eq!(m.evaluate(f, &pts).unwrap(), restored.evaluate(f, &pts).unwrap());

        let wrong = Problem::new(ProblemTag::Advdiff1d).unwrap();
        assert!(back.restore(&wrong).is_err());
    }

    #[test]
    fn csv_shapes() {
        let (_, d) = small();
        let mut out = Vec::new();
        write_dataset_csv(&mut out, &d).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0].split(',').count(), 4 + 40 + 200);
        assert_eq!(lines[3].split(',').count(), 4 + 40 + 200);
    }

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
