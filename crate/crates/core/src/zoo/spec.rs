use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ZooError;

macro_rules! token_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $token:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $token)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn token(self) -> &'static str {
                match self {
                    $($name::$variant => $token),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.token())
            }
        }

        impl FromStr for $name {
            type Err = ZooError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($token => Ok($name::$variant),)+
                    other => Err(ZooError::UnknownToken {
                        kind: stringify!($name),
                        token: other.to_string(),
                    }),
                }
            }
        }
    };
}

token_enum!(EncoderKind { Mlp => "mlp", Rnn => "rnn", Tcn => "tcn" });
token_enum!(DecoderKind { Mlp => "mlp", Rnn => "rnn" });
token_enum!(HeadKind { Distribution => "distribution", Quantile => "quantile", Scalar => "scalar" });
token_enum!(DistKind { Gaussian => "gaussian", StudentT => "student_t" });
token_enum!(ScalarLoss { L1 => "l1", L2 => "l2", Mase => "mase" });
token_enum!(InferenceKind { DistMean => "dist_mean", SampleMean => "sample_mean", SampleMedian => "sample_median" });
token_enum!(OptimizerKind { Adam => "adam", Sgd => "sgd" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub kind: HeadKind,
    pub dist: DistKind,
    pub q_lower: f64,
    pub q_upper: f64,
    pub scalar_loss: ScalarLoss,
    pub inference: InferenceKind,
    pub num_samples: usize,
}

impl Default for HeadSpec {
    fn default() -> Self {
        Self {
            kind: HeadKind::Scalar,
            dist: DistKind::Gaussian,
            q_lower: 0.1,
            q_upper: 0.9,
            scalar_loss: ScalarLoss::L2,
            inference: InferenceKind::DistMean,
            num_samples: 100,
        }
    }
}

impl HeadSpec {
    pub fn scalar(loss: ScalarLoss) -> Self {
        Self {
            kind: HeadKind::Scalar,
            scalar_loss: loss,
            ..Self::default()
        }
    }

    pub fn distribution(dist: DistKind, inference: InferenceKind) -> Self {
        Self {
            kind: HeadKind::Distribution,
            dist,
            inference,
            ..Self::default()
        }
    }

    pub fn quantile(q_lower: f64, q_upper: f64) -> Self {
        Self {
            kind: HeadKind::Quantile,
            q_lower,
            q_upper,
            ..Self::default()
        }
    }

    /// Output channels per horizon step.
    pub fn channels(&self) -> usize {
        match self.kind {
            HeadKind::Distribution => match self.dist {
                DistKind::Gaussian => 2,
                DistKind::StudentT => 3,
            },
            HeadKind::Quantile => 3,
            HeadKind::Scalar => 1,
        }
    }

    /// Whether point forecasts come from sampled trajectories.
    pub fn samples(&self) -> bool {
        self.kind == HeadKind::Distribution && self.inference != InferenceKind::DistMean
    }

    pub fn validate(&self) -> Result<(), ZooError> {
        if self.kind == HeadKind::Quantile
            && !(0.0 < self.q_lower
                && self.q_lower < 0.5
                && 0.5 < self.q_upper
                && self.q_upper < 1.0)
        {
            return Err(ZooError::IllegalHead(format!(
                "quantiles must satisfy 0 < q_lower < 0.5 < q_upper < 1, got {} and {}",
                self.q_lower, self.q_upper
            )));
        }
        if self.samples() && self.num_samples == 0 {
            return Err(ZooError::IllegalHead("num_samples must be positive".into()));
        }
        Ok(())
    }
}

/// Forecasting mode implied by an architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForecastMode {
    /// All horizon steps in one pass.
    NonAutoRegressive,
    /// Recurrent decoder fed its previous output.
    Seq2Seq,
    /// Flat decoder; predictions are appended to the encoder input.
    DeepAr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub encoder: EncoderKind,
    pub decoder: DecoderKind,
    pub auto_regressive: bool,
    pub head: HeadSpec,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub dropout: f64,
    pub tcn_kernel: usize,
    pub tcn_num_blocks: usize,
}

impl ArchitectureSpec {
    pub fn new(
        encoder: EncoderKind,
        decoder: DecoderKind,
        auto_regressive: bool,
        head: HeadSpec,
    ) -> Self {
        Self {
            encoder,
            decoder,
            auto_regressive,
            head,
            hidden_size: 32,
            num_layers: 1,
            dropout: 0.0,
            tcn_kernel: 2,
            tcn_num_blocks: 2,
        }
    }

    /// The seven legal (encoder, decoder, auto-regressive) rows.
    pub fn legal_rows() -> [(EncoderKind, DecoderKind, bool); 7] {
        use DecoderKind as D;
        use EncoderKind as E;
        [
            (E::Mlp, D::Mlp, false),
            (E::Rnn, D::Rnn, true),
            (E::Rnn, D::Rnn, false),
            (E::Rnn, D::Mlp, true),
            (E::Rnn, D::Mlp, false),
            (E::Tcn, D::Mlp, true),
            (E::Tcn, D::Mlp, false),
        ]
    }

    pub fn mode(&self) -> ForecastMode {
        match (self.auto_regressive, self.decoder) {
            (false, _) => ForecastMode::NonAutoRegressive,
            (true, DecoderKind::Rnn) => ForecastMode::Seq2Seq,
            (true, DecoderKind::Mlp) => ForecastMode::DeepAr,
        }
    }

    pub fn validate(&self) -> Result<(), ZooError> {
        if self.encoder == EncoderKind::Mlp && self.auto_regressive {
            return Err(ZooError::IllegalArchitecture(
                "a flat (mlp) encoder cannot be auto-regressive".into(),
            ));
        }
        if self.decoder == DecoderKind::Rnn && self.encoder != EncoderKind::Rnn {
            return Err(ZooError::IllegalArchitecture(format!(
                "an rnn decoder requires an rnn encoder, got {}",
                self.encoder
            )));
        }
        if self.hidden_size == 0 || self.num_layers == 0 {
            return Err(ZooError::IllegalArchitecture(
                "hidden_size and num_layers must be positive".into(),
            ));
        }
        if !(0.0..0.8).contains(&self.dropout) {
            return Err(ZooError::IllegalArchitecture(format!(
                "dropout {} outside [0, 0.8)",
                self.dropout
            )));
        }
        if self.encoder == EncoderKind::Tcn && (self.tcn_kernel < 2 || self.tcn_num_blocks == 0) {
            return Err(ZooError::IllegalArchitecture(
                "tcn needs kernel >= 2 and at least one block".into(),
            ));
        }
        self.head.validate()
    }
}

/// Number of past steps a TCN encoder can see: two convolutions per block.
pub fn receptive_field(spec: &ArchitectureSpec) -> Result<usize, ZooError> {
    if spec.encoder != EncoderKind::Tcn {
        return Err(ZooError::NotTcn);
    }
    Ok(1 + (0..spec.tcn_num_blocks)
        .map(|i| 2 * (spec.tcn_kernel - 1) * (1 << i))
        .sum::<usize>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch(e: EncoderKind, d: DecoderKind, ar: bool, head: HeadSpec) -> ArchitectureSpec {
        ArchitectureSpec::new(e, d, ar, head)
    }

    #[test]
    fn legality_follows_the_table() {
        use DecoderKind as D;
        use EncoderKind as E;
        let mut legal = 0;
        for e in E::ALL {
            for d in D::ALL {
                for ar in [false, true] {
                    let ok = arch(*e, *d, ar, HeadSpec::default()).validate().is_ok();
                    assert_eq!(ok, ArchitectureSpec::legal_rows().contains(&(*e, *d, ar)));
                    legal += ok as usize;
                }
            }
        }
        assert_eq!(legal, 7);
        assert!(
            arch(E::Mlp, D::Mlp, false, HeadSpec::scalar(ScalarLoss::L2))
                .validate()
                .is_ok()
        );
        assert!(matches!(
            arch(E::Mlp, D::Mlp, true, HeadSpec::default()).validate(),
            Err(ZooError::IllegalArchitecture(_))
        ));
        let deepar = arch(
            E::Rnn,
            D::Mlp,
            true,
            HeadSpec::distribution(DistKind::Gaussian, InferenceKind::DistMean),
        );
        assert!(deepar.validate().is_ok());
        assert_eq!(deepar.mode(), ForecastMode::DeepAr);
    }

    #[test]
    fn receptive_field_examples() {
        let mut s = arch(
            EncoderKind::Tcn,
            DecoderKind::Mlp,
            false,
            HeadSpec::default(),
        );
        for (k, b, rf) in [(2, 3, 15), (2, 1, 3), (3, 1, 5)] {
            s.tcn_kernel = k;
            s.tcn_num_blocks = b;
            assert_eq!(receptive_field(&s).unwrap(), rf);
        }
        s.encoder = EncoderKind::Rnn;
        assert!(matches!(receptive_field(&s), Err(ZooError::NotTcn)));
    }

    #[test]
    fn head_validation_and_channels() {
        assert!(HeadSpec::quantile(0.6, 0.9).validate().is_err());
        assert!(HeadSpec::quantile(0.1, 0.9).validate().is_ok());
        assert_eq!(
            HeadSpec::distribution(DistKind::StudentT, InferenceKind::DistMean).channels(),
            3
        );
        assert_eq!(
            HeadSpec::distribution(DistKind::Gaussian, InferenceKind::DistMean).channels(),
            2
        );
        assert_eq!(HeadSpec::quantile(0.1, 0.9).channels(), 3);
        assert_eq!(HeadSpec::scalar(ScalarLoss::L1).channels(), 1);
        assert_eq!("student_t".parse::<DistKind>().unwrap(), DistKind::StudentT);
        assert!("bogus".parse::<EncoderKind>().is_err());
    }
}
