//! Byzantine adversaries. Each attack sees every honest update of the round
//! and overwrites the rows of the malicious clients.
//!
//! The Trimmed Mean Attack and Krum Attack follow the directed-deviation
//! constructions of the attacks they are named after; they are
//! reconstructions, not verbatim ports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::krum_index;
use crate::rng::DetRng;
use crate::vector::{dist_sq, ParamVector, SampleMatrix};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    #[default]
    None,
    SignFlip,
    /// Inner-product manipulation.
    Ima,
    /// Trimmed-mean attack.
    Tma,
    /// Krum attack.
    Ka,
    /// Model replacement.
    Mra,
    LabelNoise,
    LowerBound,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::SignFlip => "sign-flip",
            Self::Ima => "ima",
            Self::Tma => "tma",
            Self::Ka => "ka",
            Self::Mra => "mra",
            Self::LabelNoise => "label-noise",
            Self::LowerBound => "lower-bound",
        }
    }

    /// Attacks whose malicious rows are honest-shaped updates computed on
    /// corrupted data, supplied by the caller.
    pub fn needs_alternative(self) -> bool {
        matches!(self, Self::LabelNoise | Self::LowerBound)
    }
}

/// Attack parameters as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Sign-flip and IMA multiplier. Defaults: 1 (sign-flip), 5 (IMA).
    pub scale: Option<f64>,
    /// TMA offset as a fraction of the honest coordinate range.
    pub margin: f64,
    /// MRA multiplier; defaults to the number of clients.
    pub boost: Option<f64>,
    /// MRA target model; defaults to `w* + 5 e_0`.
    pub target: Option<Vec<f64>>,
    /// Label-noise flip probability per sample.
    pub flip_prob: f64,
    /// Draw a fresh malicious set every round instead of once per run.
    pub resample_each_round: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kind: AttackKind::None,
            scale: None,
            margin: 0.1,
            boost: None,
            target: None,
            flip_prob: 1.0,
            resample_each_round: false,
        }
    }
}

impl AttackConfig {
    pub fn new(kind: AttackKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale.unwrap_or(match self.kind {
            AttackKind::Ima => 5.0,
            _ => 1.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if let Some(s) = self.scale {
            if !(s >= 0.0 && s.is_finite()) {
                return bad("scale", format!("must be finite and non-negative, got {s}"));
            }
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad("margin", format!("must be finite and non-negative, got {}", self.margin));
        }
        if let Some(b) = self.boost {
            if !b.is_finite() {
                return bad("boost", "must be finite".into());
            }
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return bad("flip_prob", format!("must lie in [0, 1], got {}", self.flip_prob));
        }
        Ok(())
    }
}

/// An attack bound to its malicious client set.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    pub config: AttackConfig,
    pub epsilon: f64,
    /// Sorted, distinct client indices.
    pub malicious_ids: Vec<usize>,
    /// Resolved MRA target.
    pub target: Option<ParamVector>,
}

/// Number of malicious clients, `floor(eps m)`.
pub fn malicious_count(epsilon: f64, m: usize) -> usize {
    ((epsilon * m as f64 + 1e-9).floor() as usize).min(m)
}

impl AttackSpec {
    /// Draws `floor(eps m)` malicious clients uniformly at random.
    pub fn new(config: AttackConfig, epsilon: f64, m: usize, rng: &mut DetRng) -> Self {
        let ids = if config.kind == AttackKind::None {
            Vec::new()
        } else {
            rng.sample_indices(m, malicious_count(epsilon, m))
        };
        Self::with_ids(config, epsilon, ids)
    }

    pub fn with_ids(config: AttackConfig, epsilon: f64, mut ids: Vec<usize>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        let target = config.target.clone().map(ParamVector::new);
        Self {
            config,
            epsilon,
            malicious_ids: ids,
            target,
        }
    }

    pub fn is_malicious(&self, i: usize) -> bool {
        self.malicious_ids.binary_search(&i).is_ok()
    }
}

/// What the adversary knows about the current round beyond the honest updates.
#[derive(Debug, Clone, Copy)]
pub struct RoundContext<'a> {
    pub round: usize,
    pub global: &'a ParamVector,
    /// Updates every client would send if its data were corrupted (label
    /// noise, or the lower-bound alternative law). Row `i` belongs to client `i`.
    pub alternative: Option<&'a SampleMatrix>,
    /// Byzantine count the Krum attack assumes the server uses; defaults to
    /// the number of malicious clients.
    pub krum_f: Option<usize>,
}

impl<'a> RoundContext<'a> {
    pub fn new(round: usize, global: &'a ParamVector) -> Self {
        Self {
            round,
            global,
            alternative: None,
            krum_f: None,
        }
    }
}

fn honest_rows(spec: &AttackSpec, updates: &SampleMatrix) -> SampleMatrix {
    let idx: Vec<usize> = (0..updates.rows()).filter(|&i| !spec.is_malicious(i)).collect();
    updates.select_rows(&idx)
}

/// Replaces the malicious rows of `updates` according to `spec`.
pub fn apply_attack(spec: &AttackSpec, updates: &SampleMatrix, ctx: &RoundContext<'_>) -> Result<SampleMatrix> {
    let m = updates.rows();
    if let Some(&i) = spec.malicious_ids.iter().find(|&&i| i >= m) {
        return Err(Error::InvalidParameter {
            name: "malicious_ids",
            reason: format!("client {i} out of range for {m} clients"),
        });
    }
    let mut out = updates.clone();
    let bad = &spec.malicious_ids;
    if bad.is_empty() || spec.config.kind == AttackKind::None {
        return Ok(out);
    }
    let honest = honest_rows(spec, updates);
    if honest.rows() == 0 {
        return Err(Error::Empty("honest updates"));
    }
    match spec.config.kind {
        AttackKind::None => {}
        AttackKind::SignFlip | AttackKind::Ima => {
            let row = ima(&honest, spec.config.scale());
            for &i in bad {
                out.set_row(i, row.as_slice());
            }
        }
        AttackKind::Tma => {
            let row = tma(&honest, spec.config.margin);
            for &i in bad {
                out.set_row(i, row.as_slice());
            }
        }
        AttackKind::Ka => {
            let f = ctx.krum_f.unwrap_or(bad.len());
            let row = ka(&honest, bad.len(), f)?;
            for &i in bad {
                out.set_row(i, row.as_slice());
            }
        }
        AttackKind::Mra => {
            let target = spec
                .target
                .as_ref()
                .ok_or(Error::InvalidParameter {
                    name: "target",
                    reason: "model replacement needs a target".into(),
                })?;
            let boost = spec.config.boost.unwrap_or(m as f64);
            let row = mra(ctx.global, target, boost)?;
            for &i in bad {
                out.set_row(i, row.as_slice());
            }
        }
        AttackKind::LabelNoise | AttackKind::LowerBound => {
            let alt = ctx
                .alternative
                .ok_or(Error::MissingAlternative(spec.config.kind.name()))?;
            if alt.rows() != m || alt.dim() != updates.dim() {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    actual: alt.rows(),
                });
            }
            for &i in bad {
                out.set_row(i, alt.row(i));
            }
        }
    }
    out.check_finite("attacked updates")?;
    Ok(out)
}

/// Inner-product manipulation: `-scale * mean(honest)`.
pub fn ima(honest: &SampleMatrix, scale: f64) -> ParamVector {
    honest.mean().scaled(-scale)
}

/// Per coordinate, a value just outside the honest range on the side opposite
/// the honest mean: `min - margin * range` if the mean is positive, otherwise
/// `max + margin * range`.
pub fn tma(honest: &SampleMatrix, margin: f64) -> ParamVector {
    let mean = honest.mean();
    let out = (0..honest.dim())
        .map(|j| {
            let (lo, hi) = honest
                .iter_rows()
                .map(|r| r[j])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            let range = hi - lo;
            if mean[j] > 0.0 {
                lo - margin * range
            } else {
                hi + margin * range
            }
        })
        .collect();
    ParamVector::new(out)
}

fn with_copies(honest: &SampleMatrix, row: &[f64], copies: usize) -> SampleMatrix {
    let mut all = SampleMatrix::zeros(honest.rows() + copies, honest.dim());
    for (i, r) in honest.iter_rows().enumerate() {
        all.set_row(i, r);
    }
    for i in 0..copies {
        all.set_row(honest.rows() + i, row);
    }
    all
}

/// Krum attack: every malicious row equals `mu - lambda * sign(mu)` for the
/// honest mean `mu`, with `lambda` the largest value in `[0, lambda_max]`
/// (40 bisection steps) at which Krum with `f` Byzantine rows still selects a
/// malicious row.
pub fn ka(honest: &SampleMatrix, copies: usize, f: usize) -> Result<ParamVector> {
    let mu = honest.mean();
    if copies == 0 {
        return Ok(mu);
    }
    let m = honest.rows() + copies;
    let d = honest.dim() as f64;
    let dir: Vec<f64> = mu.as_slice().iter().map(|v| sign(*v)).collect();
    let craft = |lambda: f64| -> ParamVector {
        ParamVector::new(mu.as_slice().iter().zip(&dir).map(|(u, s)| u - lambda * s).collect())
    };
    let selected = |lambda: f64| -> Result<bool> {
        let all = with_copies(honest, craft(lambda).as_slice(), copies);
        Ok(krum_index(&all, f)? >= honest.rows())
    };

    // Upper bound on lambda in the spirit of the original attack: the tightest
    // honest neighbourhood plus the farthest honest row from the mean.
    let h = honest.rows();
    let neighbours = m.saturating_sub(f + 2).min(h.saturating_sub(1));
    let tightest = (0..h)
        .map(|i| {
            let mut dd: Vec<f64> = (0..h)
                .filter(|&j| j != i)
                .map(|j| dist_sq(honest.row(i), honest.row(j)).sqrt())
                .collect();
            dd.sort_unstable_by(f64::total_cmp);
            dd.iter().take(neighbours).sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    let spread = honest
        .iter_rows()
        .map(|r| dist_sq(r, mu.as_slice()).sqrt())
        .fold(0.0, f64::max);
    let denom = (m.saturating_sub(2 * f + 1)).max(1) as f64;
    let tightest = if tightest.is_finite() { tightest } else { 0.0 };
    let lambda_max = tightest / (denom * d.sqrt()) + spread / d.sqrt();

    if selected(lambda_max)? {
        return Ok(craft(lambda_max));
    }
    let (mut lo, mut hi) = (0.0, lambda_max);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if selected(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(craft(lo))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Model replacement: `boost * (target - global)`.
pub fn mra(global: &ParamVector, target: &ParamVector, boost: f64) -> Result<ParamVector> {
    target.check_dim(global.dim())?;
    Ok(target.sub(global).scaled(boost))
}
