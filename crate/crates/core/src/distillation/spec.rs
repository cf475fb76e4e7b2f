use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::layers::{Activation, MlpParams, Model, MoeParams, Router};
use crate::rng::{item_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Mlp,
    Moe,
    SharedMoe,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Mlp => "mlp",
            Family::Moe => "moe",
            Family::SharedMoe => "shared_moe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RouterKind {
    Full,
    LowRank { d_proj: usize },
}

/// Architecture and hyperparameters of a student.
///
/// Text form: `family:key=value,...`, e.g. `mlp:width=16` or
/// `moe:m=64,k=4,d_exp=1,router=lowrank,d_proj=32,beta=1,act=relu`. Omitted
/// keys take their defaults; `Display` prints the canonical full form.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentSpec {
    pub family: Family,
    /// MLP width, or the shared expert's width for `shared_moe`.
    pub width: usize,
    pub m: usize,
    pub k: usize,
    pub d_exp: usize,
    pub router: RouterKind,
    pub beta: f64,
    pub train_beta: bool,
    pub activation: Activation,
    pub biases: bool,
}

impl StudentSpec {
    pub fn mlp(width: usize) -> Self {
        Self {
            family: Family::Mlp,
            width,
            m: 0,
            k: 0,
            d_exp: 0,
            router: RouterKind::Full,
            beta: 1.0,
            train_beta: false,
            activation: Activation::Relu,
            biases: true,
        }
    }

    pub fn moe(m: usize, k: usize, d_exp: usize) -> Self {
        Self {
            family: Family::Moe,
            width: 0,
            m,
            k,
            d_exp,
            ..Self::mlp(0)
        }
    }

    pub fn shared_moe(d_mlp: usize, m: usize, k: usize, d_exp: usize) -> Self {
        Self {
            family: Family::SharedMoe,
            width: d_mlp,
            ..Self::moe(m, k, d_exp)
        }
    }

    pub fn low_rank(mut self, d_proj: usize) -> Self {
        self.router = RouterKind::LowRank { d_proj };
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_beta(mut self, beta: f64, trainable: bool) -> Self {
        self.beta = beta;
        self.train_beta = trainable;
        self
    }

    pub fn with_biases(mut self, biases: bool) -> Self {
        self.biases = biases;
        self
    }

    pub fn has_router(&self) -> bool {
        self.family != Family::Mlp
    }

    /// Neurons evaluated per input: width, `k * d_exp`, or `width + k * d_exp`.
    pub fn active_neurons(&self) -> usize {
        match self.family {
            Family::Mlp => self.width,
            Family::Moe => self.k * self.d_exp,
            Family::SharedMoe => self.width + self.k * self.d_exp,
        }
    }

    /// Family name, with `_lowrank` appended for low-rank routers.
    pub fn label(&self) -> String {
        match self.router {
            RouterKind::LowRank { .. } if self.has_router() => {
                format!("{}_lowrank", self.family.as_str())
            }
            _ => self.family.as_str().to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.family != Family::Moe && self.width == 0 {
            return bad(format!("{}: width must be >= 1", self.family.as_str()));
        }
        if self.has_router() {
            if self.m == 0 || self.d_exp == 0 {
                return bad("m and d_exp must be >= 1".into());
            }
            if self.k == 0 || self.k > self.m {
                return bad(format!("k = {} must be in 1..={}", self.k, self.m));
            }
            if let RouterKind::LowRank { d_proj: 0 } = self.router {
                return bad("d_proj must be >= 1".into());
            }
            if !(self.beta >= 0.0 && self.beta.is_finite()) {
                return bad(format!("beta = {} must be >= 0", self.beta));
            }
        }
        self.activation.validate()
    }

    /// Student initialized from `(seed, Init)`: weights `N(0, 1/fan_in)`,
    /// biases zero.
    pub fn build(&self, d_in: usize, d_out: usize, seed: u64) -> Result<Model> {
        self.validate()?;
        let mut rng = item_rng(seed, Stream::Init, 0);
        let mlp =
            |rng: &mut _, h| MlpParams::init(rng, d_in, h, d_out, self.activation, self.biases);
        if self.family == Family::Mlp {
            return Ok(Model::Mlp(mlp(&mut rng, self.width)));
        }
        let experts = (0..self.m).map(|_| mlp(&mut rng, self.d_exp)).collect();
        let mut router = match self.router {
            RouterKind::Full => Router::init_full(&mut rng, self.m, d_in, self.k, self.beta),
            RouterKind::LowRank { d_proj } => {
                Router::init_low_rank(&mut rng, self.m, d_in, d_proj, self.k, self.beta)
            }
        };
        router.train_beta = self.train_beta;
        let shared = (self.family == Family::SharedMoe).then(|| mlp(&mut rng, self.width));
        Ok(Model::Moe(MoeParams::new(experts, router, shared)?))
    }
}

impl fmt::Display for StudentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.family.as_str())?;
        if self.family != Family::Moe {
            write!(f, "width={},", self.width)?;
        }
        if self.has_router() {
            write!(f, "m={},k={},d_exp={},", self.m, self.k, self.d_exp)?;
            match self.router {
                RouterKind::Full => write!(f, "router=full,")?,
                RouterKind::LowRank { d_proj } => write!(f, "router=lowrank,d_proj={d_proj},")?,
            }
            write!(f, "beta={},train_beta={},", self.beta, self.train_beta)?;
        }
        write!(f, "act={},biases={}", self.activation, self.biases)
    }
}

impl FromStr for StudentSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidInput(format!("student spec '{s}': {msg}"));
        let (family, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut spec = match family.trim() {
            "mlp" => StudentSpec::mlp(0),
            "moe" => StudentSpec::moe(0, 0, 1),
            "shared_moe" => StudentSpec::shared_moe(0, 0, 0, 1),
            other => return Err(bad(format!("unknown family '{other}'"))),
        };
        let mut router = "full".to_string();
        let mut d_proj = None;
        let mut m_set = false;
        for item in rest.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got '{item}'")))?;
            let int = || {
                value
                    .parse::<usize>()
                    .map_err(|_| bad(format!("{key}: not an integer")))
            };
            let boolean = || {
                value
                    .parse::<bool>()
                    .map_err(|_| bad(format!("{key}: not a boolean")))
            };
            match key {
                "width" | "d_mlp" => spec.width = int()?,
                "m" => {
                    spec.m = int()?;
                    m_set = true;
                }
                "k" => spec.k = int()?,
                "d_exp" => spec.d_exp = int()?,
                "router" => router = value.to_string(),
                "d_proj" => d_proj = Some(int()?),
                "beta" => {
                    spec.beta = value
                        .parse()
                        .map_err(|_| bad("beta: not a number".into()))?
                }
                "train_beta" => spec.train_beta = boolean()?,
                "act" => spec.activation = value.parse()?,
                "biases" => spec.biases = boolean()?,
                other => return Err(bad(format!("unknown key '{other}'"))),
            }
        }
        if spec.has_router() && !m_set {
            spec.m = 8 * spec.k;
        }
        spec.router = match (router.as_str(), d_proj) {
            ("full", None) => RouterKind::Full,
            ("lowrank", Some(d_proj)) => RouterKind::LowRank { d_proj },
            ("lowrank", None) => return Err(bad("lowrank router needs d_proj".into())),
            ("full", Some(_)) => return Err(bad("d_proj given for a full router".into())),
            (other, _) => return Err(bad(format!("unknown router '{other}'"))),
        };
        spec.validate().map_err(|e| bad(e.to_string()))?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn active_neuron_accounting() {
        assert_eq!(StudentSpec::mlp(16).active_neurons(), 16);
        assert_eq!(StudentSpec::moe(64, 4, 4).active_neurons(), 16);
        assert_eq!(
            StudentSpec::shared_moe(128, 256, 128, 1).active_neurons(),
            256
        );
    }

    #[test]
    fn text_form_round_trips() {
        for spec in [
            StudentSpec::mlp(16).with_activation(Activation::Identity),
            StudentSpec::moe(256, 4, 1)
                .low_rank(32)
                .with_beta(0.5, true),
            StudentSpec::shared_moe(8, 32, 4, 2).with_biases(false),
        ] {
            let text = spec.to_string();
            assert_eq!(text.parse::<StudentSpec>().unwrap(), spec, "{text}");
        }
    }

    #[test]
    fn defaults_follow_single_neuron_experts() {
        let s: StudentSpec = "moe:k=4".parse().unwrap();
        assert_eq!((s.m, s.k, s.d_exp), (32, 4, 1));
        assert!("moe:k=4,router=lowrank".parse::<StudentSpec>().is_err());
        assert!("moe:k=9,m=8".parse::<StudentSpec>().is_err());
        assert!("cnn:width=3".parse::<StudentSpec>().is_err());
    }

    #[test]
    fn build_matches_spec() {
        let model = StudentSpec::shared_moe(3, 6, 2, 2)
            .low_rank(2)
            .build(5, 4, 1)
            .unwrap();
        assert_eq!(model.active_neurons(), 7);
        assert_eq!((model.d_in(), model.d_out()), (5, 4));
    }
}
