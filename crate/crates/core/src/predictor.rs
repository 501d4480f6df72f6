//! Feature-conditioned transition predictor.
//!
//! Maps a registration feature vector to the four engagement probabilities
//! `P(E|p,NE), P(E|p,E), P(E|a,NE), P(E|a,E)` through an optional tanh hidden
//! layer and logistic output heads. Complements are derived as `1 - p`, so
//! every prediction is a valid [`TransitionModel`].
//!
//! Parameters are stored flat. Without a hidden layer the layout is
//! `W (4 x d), b (4)`; with `h` hidden units it is
//! `W1 (h x d), b1 (h), W2 (4 x h), b2 (4)`, all row-major.

use std::fmt::{self, Write as _};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TransitionModel;

pub const NUM_HEADS: usize = 4;
pub const CHECKPOINT_MAGIC: &str = "rmab-predictor";
pub const CHECKPOINT_VERSION: &str = "v1";

/// Encoded registration features of one beneficiary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite feature value {bad}")));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub feature_dim: usize,
    /// Width of the tanh hidden layer; zero means a purely linear map.
    pub hidden: usize,
}

impl Architecture {
    pub fn linear(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            hidden: 0,
        }
    }

    pub fn num_params(&self) -> usize {
        if self.hidden == 0 {
            NUM_HEADS * self.feature_dim + NUM_HEADS
        } else {
            self.hidden * self.feature_dim + self.hidden + NUM_HEADS * self.hidden + NUM_HEADS
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Init,
    Ts,
    Dfl,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Init => "init",
            Provenance::Ts => "ts",
            Provenance::Dfl => "dfl",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "init" => Ok(Provenance::Init),
            "ts" => Ok(Provenance::Ts),
            "dfl" => Ok(Provenance::Dfl),
            other => Err(Error::InvalidConfig(format!("unknown provenance `{other}`"))),
        }
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub hidden: Vec<f64>,
    pub logits: [f64; NUM_HEADS],
    pub probs: [f64; NUM_HEADS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPredictor {
    arch: Architecture,
    params: Vec<f64>,
    provenance: Provenance,
}

impl TransitionPredictor {
    pub fn zeros(arch: Architecture) -> Self {
        Self {
            arch,
            params: vec![0.0; arch.num_params()],
            provenance: Provenance::Init,
        }
    }

    /// Every parameter drawn from `uniform(-0.1, 0.1)`.
    pub fn random_init(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..arch.num_params())
            .map(|_| rng.gen_range(-0.1..0.1))
            .collect();
        Self {
            arch,
            params,
            provenance: Provenance::Init,
        }
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if params.len() != arch.num_params() {
            return Err(Error::DimensionMismatch {
                expected: arch.num_params(),
                got: params.len(),
            });
        }
        Ok(Self {
            arch,
            params,
            provenance,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn set_provenance(&mut self, provenance: Provenance) {
        self.provenance = provenance;
    }

    fn check_dim(&self, features: &FeatureVector) -> Result<()> {
        if features.dim() != self.arch.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.arch.feature_dim,
                got: features.dim(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, features: &FeatureVector) -> Result<ForwardPass> {
        self.check_dim(features)?;
        let x = features.as_slice();
        let d = self.arch.feature_dim;
        let h = self.arch.hidden;
        let mut logits = [0.0; NUM_HEADS];
        let hidden = if h == 0 {
            let (w, b) = self.params.split_at(NUM_HEADS * d);
            for (k, logit) in logits.iter_mut().enumerate() {
                *logit = b[k] + dot(&w[k * d..(k + 1) * d], x);
            }
            Vec::new()
        } else {
            let (w1, rest) = self.params.split_at(h * d);
            let (b1, rest) = rest.split_at(h);
            let (w2, b2) = rest.split_at(NUM_HEADS * h);
            let act: Vec<f64> = (0..h)
                .map(|j| (b1[j] + dot(&w1[j * d..(j + 1) * d], x)).tanh())
                .collect();
            for (k, logit) in logits.iter_mut().enumerate() {
                *logit = b2[k] + dot(&w2[k * h..(k + 1) * h], &act);
            }
            act
        };
        let probs = logits.map(logistic);
        Ok(ForwardPass {
            hidden,
            logits,
            probs,
        })
    }

    /// Accumulates `d(loss)/d(params)` into `grad` given `d(loss)/d(logits)`.
    pub fn backward(
        &self,
        features: &FeatureVector,
        pass: &ForwardPass,
        dlogits: &[f64; NUM_HEADS],
        grad: &mut [f64],
    ) {
        debug_assert_eq!(grad.len(), self.params.len());
        let x = features.as_slice();
        let d = self.arch.feature_dim;
        let h = self.arch.hidden;
        if h == 0 {
            let (gw, gb) = grad.split_at_mut(NUM_HEADS * d);
            for k in 0..NUM_HEADS {
                gb[k] += dlogits[k];
                axpy(dlogits[k], x, &mut gw[k * d..(k + 1) * d]);
            }
        } else {
            let w2 = &self.params[h * d + h..h * d + h + NUM_HEADS * h];
            let (gw1, rest) = grad.split_at_mut(h * d);
            let (gb1, rest) = rest.split_at_mut(h);
            let (gw2, gb2) = rest.split_at_mut(NUM_HEADS * h);
            let mut dact = vec![0.0; h];
            for k in 0..NUM_HEADS {
                gb2[k] += dlogits[k];
                axpy(dlogits[k], &pass.hidden, &mut gw2[k * h..(k + 1) * h]);
                axpy(dlogits[k], &w2[k * h..(k + 1) * h], &mut dact);
            }
            for j in 0..h {
                let a = pass.hidden[j];
                let dpre = dact[j] * (1.0 - a * a);
                gb1[j] += dpre;
                axpy(dpre, x, &mut gw1[j * d..(j + 1) * d]);
            }
        }
    }

    pub fn engage_probs(&self, features: &FeatureVector) -> Result<[f64; NUM_HEADS]> {
        Ok(self.forward(features)?.probs)
    }

    pub fn predict(&self, features: &FeatureVector) -> Result<TransitionModel> {
        TransitionModel::from_engage_probs(self.engage_probs(features)?)
    }

    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(self.checkpoint_string().as_bytes())
    }

    pub fn checkpoint_string(&self) -> String {
        let mut s = format!(
            "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION} feature_dim={} hidden={} provenance={}\n",
            self.arch.feature_dim, self.arch.hidden, self.provenance
        );
        let d = self.arch.feature_dim;
        let h = self.arch.hidden;
        let rows: Vec<usize> = if h == 0 {
            vec![d; NUM_HEADS].into_iter().chain([NUM_HEADS]).collect()
        } else {
            std::iter::repeat_n(d, h)
                .chain([h])
                .chain(std::iter::repeat_n(h, NUM_HEADS))
                .chain([NUM_HEADS])
                .collect()
        };
        let mut offset = 0;
        for len in rows {
            let line: Vec<String> = self.params[offset..offset + len]
                .iter()
                .map(|w| format!("{w:.16e}"))
                .collect();
            let _ = writeln!(s, "{}", line.join(" "));
            offset += len;
        }
        s
    }

    pub fn read_checkpoint<R: Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut header = String::new();
        reader
            .read_line(&mut header)
            .map_err(|e| Error::io("<checkpoint>", e))?;
        let bad = |msg: String| Error::SchemaViolation {
            file: "checkpoint".into(),
            row: 1,
            column: "header".into(),
            message: msg,
        };
        let mut fields = header.split_whitespace();
        if fields.next() != Some(CHECKPOINT_MAGIC) {
            return Err(bad(format!("expected `{CHECKPOINT_MAGIC}` header")));
        }
        match fields.next() {
            Some(CHECKPOINT_VERSION) => {}
            other => return Err(bad(format!("unsupported version {other:?}"))),
        }
        let (mut dim, mut hidden, mut provenance) = (None, None, Provenance::Init);
        for field in fields {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed header field `{field}`")))?;
            match key {
                "feature_dim" => dim = value.parse().ok(),
                "hidden" => hidden = value.parse().ok(),
                "provenance" => provenance = value.parse()?,
                _ => return Err(bad(format!("unknown header field `{key}`"))),
            }
        }
        let arch = Architecture {
            feature_dim: dim.ok_or_else(|| bad("missing feature_dim".into()))?,
            hidden: hidden.ok_or_else(|| bad("missing hidden".into()))?,
        };
        let mut body = String::new();
        reader
            .read_to_string(&mut body)
            .map_err(|e| Error::io("<checkpoint>", e))?;
        let params = body
            .split_whitespace()
            .enumerate()
            .map(|(i, tok)| {
                tok.parse::<f64>().map_err(|_| Error::SchemaViolation {
                    file: "checkpoint".into(),
                    row: 2,
                    column: format!("weight {i}"),
                    message: format!("not a number: `{tok}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_params(arch, params, provenance)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.checkpoint_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_checkpoint(file)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
