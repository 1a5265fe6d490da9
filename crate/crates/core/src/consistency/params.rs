use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The full user-tunable state of the stabilizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyParams {
    /// Upper clamp of the previous-frame weight `w_p`; raises the share of
    /// global consistency.
    pub k1: f32,
    /// Upper clamp of the next-frame weight `w_n`.
    pub k2: f32,
    /// Sharpness of the warp-residual exponentials, applied to squared color
    /// distances summed over channels in `[0, 1]` space.
    pub alpha: f32,
    /// Scale of the consistency weight `w_c`.
    pub lambda: f32,
    /// Solver step size.
    pub eta: f32,
    /// Solver momentum.
    pub kappa: f32,
    pub iterations: usize,
    /// Flow is estimated at 1/`flow_downscale` resolution (1, 2 or 4).
    pub flow_downscale: u32,
}

impl Default for ConsistencyParams {
    fn default() -> Self {
        Preset::Default.params()
    }
}

impl ConsistencyParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(msg.to_owned()));
        let finite = [
            self.k1,
            self.k2,
            self.alpha,
            self.lambda,
            self.eta,
            self.kappa,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return bad("parameters must be finite");
        }
        if self.k1 < 0.0 || self.k2 < 0.0 {
            return bad("k1 and k2 must be >= 0");
        }
        if self.k1 + self.k2 >= 1.0 {
            return bad("k1+k2 must be < 1");
        }
        if self.k1 + self.k2 <= 0.0 {
            return bad("k1+k2 must be > 0");
        }
        if self.alpha < 0.0 {
            return bad("alpha must be >= 0");
        }
        if self.lambda < 0.0 {
            return bad("lambda must be >= 0");
        }
        if self.eta <= 0.0 {
            return bad("eta must be > 0");
        }
        if !(0.0..1.0).contains(&self.kappa) {
            return bad("kappa must be in [0, 1)");
        }
        if self.iterations < 1 {
            return bad("iterations must be >= 1");
        }
        if ![1, 2, 4].contains(&self.flow_downscale) {
            return bad("flow_downscale must be 1, 2 or 4");
        }
        Ok(())
    }
}

/// Partial parameter update; unset fields keep their current value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsPatch {
    pub k1: Option<f32>,
    pub k2: Option<f32>,
    pub alpha: Option<f32>,
    pub lambda: Option<f32>,
    pub eta: Option<f32>,
    pub kappa: Option<f32>,
    pub iterations: Option<usize>,
    pub flow_downscale: Option<u32>,
}

impl ParamsPatch {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    /// Applies the patch and validates the result; `base` is untouched on error.
    pub fn apply(&self, base: &ConsistencyParams) -> Result<ConsistencyParams> {
        let p = ConsistencyParams {
            k1: self.k1.unwrap_or(base.k1),
            k2: self.k2.unwrap_or(base.k2),
            alpha: self.alpha.unwrap_or(base.alpha),
            lambda: self.lambda.unwrap_or(base.lambda),
            eta: self.eta.unwrap_or(base.eta),
            kappa: self.kappa.unwrap_or(base.kappa),
            iterations: self.iterations.unwrap_or(base.iterations),
            flow_downscale: self.flow_downscale.unwrap_or(base.flow_downscale),
        };
        p.validate()?;
        Ok(p)
    }
}

/// Named parameter bundles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// The settings used for the published results.
    Default,
    /// Tuned for a low warping error.
    Objective,
    /// Half-resolution flow and a third of the solver iterations.
    Fast,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Default, Preset::Objective, Preset::Fast];

    pub fn params(self) -> ConsistencyParams {
        let default = ConsistencyParams {
            k1: 0.3,
            k2: 0.5,
            alpha: 6.5e3,
            lambda: 2.0,
            eta: 0.15,
            kappa: 0.2,
            iterations: 150,
            flow_downscale: 1,
        };
        match self {
            Preset::Default => default,
            Preset::Objective => ConsistencyParams {
                k1: 0.3,
                k2: 0.3,
                alpha: 1.0e4,
                lambda: 0.7,
                ..default
            },
            Preset::Fast => ConsistencyParams {
                iterations: 50,
                flow_downscale: 2,
                ..default
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Default => "default",
            Preset::Objective => "objective",
            Preset::Fast => "fast",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_owned()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for p in Preset::ALL {
            p.params().validate().unwrap();
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("turbo".parse::<Preset>().is_err());
    }

    #[test]
    fn preset_values() {
        let d = Preset::Default.params();
        assert_eq!((d.k1, d.k2, d.alpha, d.lambda), (0.3, 0.5, 6.5e3, 2.0));
        assert_eq!((d.eta, d.kappa, d.iterations), (0.15, 0.2, 150));
        let o = Preset::Objective.params();
        assert_eq!((o.k1, o.k2, o.alpha, o.lambda), (0.3, 0.3, 1.0e4, 0.7));
        let f = Preset::Fast.params();
        assert_eq!((f.iterations, f.flow_downscale), (50, 2));
        assert_eq!((f.k1, f.k2, f.lambda), (d.k1, d.k2, d.lambda));
    }

    #[test]
    fn k_sum_must_stay_below_one() {
        let patch = ParamsPatch {
            k1: Some(0.6),
            k2: Some(0.5),
            ..Default::default()
        };
        let err = patch.apply(&ConsistencyParams::default()).unwrap_err();
        assert!(err.to_string().contains("k1+k2 must be < 1"), "{err}");
    }

    #[test]
    fn other_invariants() {
        let base = ConsistencyParams::default();
        for p in [
            ConsistencyParams { eta: 0.0, ..base },
            ConsistencyParams { kappa: 1.0, ..base },
            ConsistencyParams {
                iterations: 0,
                ..base
            },
            ConsistencyParams {
                lambda: -1.0,
                ..base
            },
            ConsistencyParams {
                flow_downscale: 3,
                ..base
            },
            ConsistencyParams {
                k1: 0.0,
                k2: 0.0,
                ..base
            },
            ConsistencyParams {
                k1: f32::NAN,
                ..base
            },
        ] {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    #[test]
    fn patch_keeps_unset_fields() {
        let base = ConsistencyParams::default();
        let p = ParamsPatch {
            lambda: Some(0.1),
            ..Default::default()
        }
        .apply(&base)
        .unwrap();
        assert_eq!(
            p,
            ConsistencyParams {
                lambda: 0.1,
                ..base
            }
        );
        assert!(serde_json::from_str::<ParamsPatch>(r#"{"gamma": 1}"#).is_err());
    }
}
