//! Little-endian binary checkpoints. Floats are stored as raw bit patterns
//! so a round trip is exact.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nets::{Activation, Adam, Estimator, GaussianPolicy, Mlp, ValueNet};
use crate::rng::RngState;

use super::{Baseline, Stage};

const MAGIC: &[u8; 4] = b"HGCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub task: String,
    pub stage: Stage,
    pub baseline: Baseline,
    /// Iterations completed in the run that wrote the checkpoint.
    pub iteration: u64,
    pub lambda: f64,
    pub policy: GaussianPolicy,
    pub value: ValueNet,
    pub estimator: Estimator,
    /// Optimizer over the packed policy and value parameters.
    pub optimizer: Adam,
    pub estimator_optimizer: Adam,
    pub rng: RngState,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, x: u8) {
        self.0.push(x);
    }
    fn u32(&mut self, x: u32) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn u64(&mut self, x: u64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn f64(&mut self, x: f64) {
        self.u64(x.to_bits());
    }
    fn f64s(&mut self, xs: &[f64]) {
        self.u64(xs.len() as u64);
        xs.iter().for_each(|x| self.f64(*x));
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn mlp(&mut self, m: &Mlp) {
        self.u32(m.sizes().len() as u32);
        m.sizes().iter().for_each(|s| self.u32(*s as u32));
        m.activations().iter().for_each(|a| self.u8(a.tag()));
        self.f64s(&m.params);
    }
    fn adam(&mut self, a: &Adam) {
        for x in [a.lr, a.beta1, a.beta2, a.eps] {
            self.f64(x);
        }
        self.u64(a.t);
        self.f64s(&a.m);
        self.f64s(&a.v);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or_else(|| corrupt("truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        if n > (self.bytes.len() - self.pos) / 8 {
            return Err(corrupt("array length exceeds file size"));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("task name is not UTF-8"))
    }
    fn mlp(&mut self) -> Result<Mlp> {
        let n = self.u32()? as usize;
        if !(2..=64).contains(&n) {
            return Err(corrupt(format!("implausible layer count {n}")));
        }
        let sizes = (0..n).map(|_| self.u32().map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
        let acts = (0..n - 1)
            .map(|_| {
                let t = self.u8()?;
                Activation::from_tag(t).ok_or_else(|| corrupt(format!("unknown activation tag {t}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut m = Mlp::new(&sizes, &acts).map_err(|e| corrupt(e.to_string()))?;
        let params = self.f64s()?;
        if params.len() != m.params.len() {
            return Err(corrupt(format!("{} parameters for layer sizes {sizes:?}", params.len())));
        }
        m.params = params;
        Ok(m)
    }
    fn adam(&mut self, n: usize) -> Result<Adam> {
        let (lr, beta1, beta2, eps) = (self.f64()?, self.f64()?, self.f64()?, self.f64()?);
        let t = self.u64()?;
        let (m, v) = (self.f64s()?, self.f64s()?);
        if m.len() != n || v.len() != n {
            return Err(corrupt("optimizer state does not match the networks"));
        }
        Ok(Adam { lr, beta1, beta2, eps, m, v, t })
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.str(&self.task);
        w.u8(self.stage as u8);
        w.u8(self.baseline as u8);
        w.u64(self.iteration);
        w.f64(self.lambda);
        w.mlp(&self.policy.mean);
        w.f64s(&self.policy.log_std);
        w.mlp(&self.value.net);
        w.mlp(&self.estimator.net);
        w.adam(&self.optimizer);
        w.adam(&self.estimator_optimizer);
        w.0.extend_from_slice(&self.rng.seed);
        w.u64(self.rng.stream);
        w.0.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).ok() != Some(MAGIC.as_slice()) {
            return Err(corrupt("not a checkpoint file"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(corrupt(format!("format version {version}, this build reads {FORMAT_VERSION}")));
        }
        let task = r.str()?;
        let stage = Stage::from_tag(r.u8()?).ok_or_else(|| corrupt("unknown stage"))?;
        let baseline = Baseline::from_tag(r.u8()?).ok_or_else(|| corrupt("unknown baseline"))?;
        let iteration = r.u64()?;
        let lambda = r.f64()?;
        let mean = r.mlp()?;
        let log_std = r.f64s()?;
        if log_std.len() != mean.output_dim() {
            return Err(corrupt("log-std size differs from the policy output"));
        }
        let policy = GaussianPolicy { mean, log_std };
        let value = ValueNet { net: r.mlp()? };
        let estimator = Estimator { net: r.mlp()? };
        let n = policy.mean.params.len() + policy.log_std.len() + value.net.params.len();
        let optimizer = r.adam(n)?;
        let estimator_optimizer = r.adam(estimator.net.params.len())?;
        let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());
        if r.pos != bytes.len() {
            return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint {
            task,
            stage,
            baseline,
            iteration,
            lambda,
            policy,
            value,
            estimator,
            optimizer,
            estimator_optimizer,
            rng: RngState { seed, stream, word_pos },
        })
    }

    /// Writes through a temporary file so a crash never leaves a partial checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
