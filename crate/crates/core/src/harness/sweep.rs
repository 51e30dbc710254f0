use serde::{Deserialize, Serialize};

use super::{run_simulation, PolicyConfig, RunReport};
use crate::clustering::DistanceMetric;
use crate::error::{invalid, Error, Result};
use crate::trace::TraceBundle;

/// Parameter varied by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Budget,
    /// Fixed prefill cluster count.
    C0,
    /// K-means assignment metric; selection keeps scoring by inner product.
    Distance,
    Retention,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::Budget => "budget",
            Self::C0 => "c0",
            Self::Distance => "distance",
            Self::Retention => "retention",
        }
    }

    /// Returns `base` with the axis set to `value`.
    pub fn apply(self, base: &PolicyConfig, value: &str) -> Result<PolicyConfig> {
        let count = || {
            value
                .parse::<usize>()
                .map_err(|_| invalid(format!("{} value {value:?} is not a count", self.name())))
        };
        let mut cfg = base.clone();
        match self {
            Self::Budget => cfg.budget = count()?,
            Self::C0 => cfg.cluster.initial_clusters = Some(count()?),
            Self::Distance => cfg.cluster.metric = value.parse::<DistanceMetric>()?,
            Self::Retention => cfg.retention = count()?,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Self::Budget, Self::C0, Self::Distance, Self::Retention]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| invalid(format!("unknown sweep axis {s:?}")))
    }
}

/// One full simulation per value, each report tagged with `axis` and `value`.
pub fn sweep<S: AsRef<str>>(bundle: &TraceBundle, base: &PolicyConfig, axis: SweepAxis, values: &[S]) -> Result<Vec<RunReport>> {
    if values.is_empty() {
        return Err(invalid("sweep needs at least one value"));
    }
    values
        .iter()
        .map(|v| {
            let v = v.as_ref();
            let cfg = axis.apply(base, v)?;
            Ok(run_simulation(bundle, &cfg)?.with_param("axis", axis.name()).with_param("value", v))
        })
        .collect()
}
