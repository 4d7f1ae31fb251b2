//! Synthetic cohort generator.
//!
//! Each patient carries a latent severity that drifts every 4-hour window,
//! plus two static traits (fluid and vasopressor responsiveness) that set
//! the ideal intensity of each drug. Doses are continuous intensities mapped
//! monotonically to raw amounts, so quantile bins of the logged doses keep
//! intensities ordered. Every unit of intensity away from the ideal adds to
//! severity, which then decays geometrically. The logged clinician lands
//! near the ideal with a systematic under-dosing bias, a per-patient style
//! offset and per-window noise.
//!
//! Each window contributes `exp(risk_slope * severity)` to a running risk,
//! and a patient dies at discharge with probability `1 - exp(-s_L * mean
//! risk)`. Because the mean is additive over windows, harm done early can
//! never be undone by later dosing. The hazard scale `s_L` is solved per
//! stay length on a clinician-treated pilot population, so clinician
//! mortality matches the configured target at every length. Observed
//! features are noisy linear readouts of the latent variables, so dosing
//! closer to the ideal than the logged clinician does is a strictly better
//! policy by construction.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::features::{Driver, FEATURES};
use super::{Caps, Cohort, FeatureVector, Outcome, PatientTrajectory, RawDosePair, Timestep};
use crate::math::{exp, floor, log, sqrt};
use crate::rng::{derive_seed, seeded, Rng};
use crate::{Error, Result, N_FEATURES};

/// Dose at integer intensities 1..=4; intensities in between interpolate
/// geometrically and intensities below `MIN_INTENSITY` give no drug.
const IV_LEVEL_DOSE: [f64; 5] = [0.0, 40.0, 150.0, 400.0, 1000.0];
const VP_LEVEL_DOSE: [f64; 5] = [0.0, 0.04, 0.12, 0.3, 0.8];
const MIN_INTENSITY: f64 = 0.5;
const MAX_INTENSITY: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeverityDynamics {
    pub initial_sd: f64,
    /// Fraction of the previous severity carried into the next window.
    pub persistence: f64,
    /// Severity removed every window regardless of treatment.
    pub recovery: f64,
    /// Severity added per unit of IV intensity away from the ideal.
    pub iv_harm: f64,
    /// Severity added per unit of vasopressor intensity away from the ideal.
    pub vp_harm: f64,
    pub noise_sd: f64,
    /// Log-risk of a window per unit of severity.
    pub risk_slope: f64,
}

impl Default for SeverityDynamics {
    fn default() -> Self {
        Self {
            initial_sd: 1.0,
            persistence: 0.8,
            recovery: 0.2,
            iv_harm: 1.0,
            vp_harm: 1.0,
            noise_sd: 0.4,
            risk_slope: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicianBehavior {
    pub iv_bias: f64,
    pub iv_noise: f64,
    pub vp_bias: f64,
    pub vp_noise: f64,
    /// Spread of a per-patient offset added to the IV bias, modelling
    /// clinicians with different dosing habits.
    pub iv_style_sd: f64,
    /// Spread of the same offset as applied to the vasopressor bias.
    pub vp_style_sd: f64,
    /// Probability that a window's two levels are instead drawn uniformly.
    pub explore: f64,
}

impl Default for PhysicianBehavior {
    fn default() -> Self {
        Self {
            iv_bias: -0.5,
            iv_noise: 0.8,
            vp_bias: -0.3,
            vp_noise: 0.6,
            iv_style_sd: 1.0,
            vp_style_sd: 0.5,
            explore: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCohortConfig {
    pub n_patients: usize,
    pub mortality_target: f64,
    pub seed: u64,
    pub min_len: usize,
    pub max_len: usize,
    pub dynamics: SeverityDynamics,
    pub physician: PhysicianBehavior,
    /// Probability that any single measurement is missing.
    pub missing_rate: f64,
    /// Size of the latent-only population used to place the death threshold.
    pub pilot_patients: usize,
}

impl Default for SyntheticCohortConfig {
    fn default() -> Self {
        Self {
            n_patients: 2000,
            mortality_target: 0.137,
            seed: 7,
            min_len: 6,
            max_len: 18,
            dynamics: SeverityDynamics::default(),
            physician: PhysicianBehavior::default(),
            missing_rate: 0.002,
            pilot_patients: 20_000,
        }
    }
}

impl SyntheticCohortConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_patients == 0 {
            return fail(String::from("n_patients must be positive"));
        }
        if !(self.mortality_target > 0.0 && self.mortality_target < 1.0) {
            return fail(format!("mortality_target must lie in (0, 1), got {}", self.mortality_target));
        }
        if self.min_len == 0 || self.max_len < self.min_len {
            return fail(format!(
                "trajectory lengths need 1 <= min_len <= max_len, got {}..={}",
                self.min_len, self.max_len
            ));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return fail(format!("missing_rate must lie in [0, 1), got {}", self.missing_rate));
        }
        if self.pilot_patients == 0 {
            return fail(String::from("pilot_patients must be positive"));
        }
        let d = &self.dynamics;
        let p = &self.physician;
        for (name, v) in [
            ("dynamics.initial_sd", d.initial_sd),
            ("dynamics.noise_sd", d.noise_sd),
            ("dynamics.risk_slope", d.risk_slope),
            ("dynamics.iv_harm", d.iv_harm),
            ("dynamics.vp_harm", d.vp_harm),
            ("physician.iv_noise", p.iv_noise),
            ("physician.vp_noise", p.vp_noise),
            ("physician.iv_style_sd", p.iv_style_sd),
            ("physician.vp_style_sd", p.vp_style_sd),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&p.explore) {
            return fail(format!("physician.explore must lie in [0, 1], got {}", p.explore));
        }
        if !(d.persistence > 0.0 && d.persistence <= 1.0) {
            return fail(format!("dynamics.persistence must lie in (0, 1], got {}", d.persistence));
        }
        for (name, v) in [
            ("dynamics.recovery", d.recovery),
            ("physician.iv_bias", p.iv_bias),
            ("physician.vp_bias", p.vp_bias),
        ] {
            if !v.is_finite() {
                return fail(format!("{name} must be finite, got {v}"));
            }
        }
        Ok(())
    }
}

/// Hidden physiology of one patient at one window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatentState {
    pub severity: f64,
    pub fluid_trait: f64,
    pub pressor_trait: f64,
}

/// Intensity actually delivered: clipped to the dose table, and zero when
/// too low to give any drug.
fn delivered(x: f64) -> f64 {
    if x < MIN_INTENSITY {
        0.0
    } else {
        x.min(MAX_INTENSITY)
    }
}

impl LatentState {
    /// IV fluid intensity (0 or 0.5..=4) that causes no harm.
    pub fn ideal_iv(&self) -> f64 {
        delivered(0.5 + 3.0 * self.fluid_trait)
    }

    /// Vasopressor intensity that causes no harm; zero for most patients.
    pub fn ideal_vp(&self) -> f64 {
        delivered(5.0 * (self.pressor_trait - 0.6))
    }
}

/// Latent dynamics of the generator, exposed so callers can roll out
/// alternative dosing rules against the same ground truth.
#[derive(Clone, Debug)]
pub struct SyntheticModel {
    pub config: SyntheticCohortConfig,
    /// Hazard scale applied to the mean window risk of a patient with
    /// `min_len + i` logged windows, at index `i`.
    pub risk_scales: Vec<f64>,
}

/// Running sum of per-window risk over one stay.
#[derive(Clone, Copy, Debug, Default)]
struct RiskTally {
    sum: f64,
    windows: usize,
}

impl RiskTally {
    fn add(&mut self, model: &SyntheticModel, s: &LatentState) {
        self.sum += exp(model.config.dynamics.risk_slope * s.severity);
        self.windows += 1;
    }

    fn mean(&self) -> f64 {
        self.sum / self.windows.max(1) as f64
    }
}

impl SyntheticModel {
    /// Validates the config and calibrates one hazard scale per stay length
    /// on the pilot population treated by the simulated clinician, so
    /// clinician-treated mortality is the target at every length.
    pub fn calibrate(config: &SyntheticCohortConfig) -> Result<Self> {
        config.validate()?;
        let mut model = Self {
            config: config.clone(),
            risk_scales: Vec::new(),
        };
        let mut rng = seeded(derive_seed(config.seed, 1));
        let lengths = config.min_len..=config.max_len;
        let per_length = config.pilot_patients.div_ceil(lengths.clone().count());
        for len in lengths {
            let risks: Vec<f64> = (0..per_length)
                .map(|_| {
                    let (mut state, style) = model.admit(&mut rng);
                    let mut tally = RiskTally::default();
                    for _ in 0..len {
                        let (iv, vp) = model.physician_levels(&state, style, &mut rng);
                        state = model.advance(&state, iv, vp, &mut rng);
                        tally.add(&model, &state);
                    }
                    tally.mean()
                })
                .collect();
            model.risk_scales.push(solve_scale(&risks, config.mortality_target));
        }
        Ok(model)
    }

    /// Probability of death for a patient whose post-window risks averaged
    /// `mean_risk` over `len` logged windows. Every window contributes
    /// additively, so harm done early cannot be undone later.
    pub fn death_probability(&self, mean_risk: f64, len: usize) -> f64 {
        1.0 - exp(-self.risk_scales[len - self.config.min_len] * mean_risk)
    }

    /// Draws a patient's admission state and standardized clinician style.
    fn admit(&self, rng: &mut Rng) -> (LatentState, f64) {
        let z: f64 = rng.sample(StandardNormal);
        let style: f64 = rng.sample(StandardNormal);
        let state = LatentState {
            severity: self.config.dynamics.initial_sd * z,
            fluid_trait: rng.random::<f64>(),
            pressor_trait: rng.random::<f64>(),
        };
        (state, style)
    }

    fn stay_length(&self, rng: &mut Rng) -> usize {
        rng.random_range(self.config.min_len..=self.config.max_len)
    }

    fn physician_levels(&self, s: &LatentState, style: f64, rng: &mut Rng) -> (f64, f64) {
        let p = &self.config.physician;
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        if p.explore > 0.0 && rng.random::<f64>() < p.explore {
            return (
                delivered(rng.random_range(0.0..MAX_INTENSITY)),
                delivered(rng.random_range(0.0..MAX_INTENSITY)),
            );
        }
        (
            delivered(s.ideal_iv() + p.iv_bias + p.iv_style_sd * style + p.iv_noise * a),
            delivered(s.ideal_vp() + p.vp_bias + p.vp_style_sd * style + p.vp_noise * b),
        )
    }

    /// Severity after one window treated at the given delivered intensities.
    pub fn advance(&self, s: &LatentState, iv: f64, vp: f64, rng: &mut Rng) -> LatentState {
        let d = &self.config.dynamics;
        let harm = d.iv_harm * (iv - s.ideal_iv()).abs() + d.vp_harm * (vp - s.ideal_vp()).abs();
        let z: f64 = rng.sample(StandardNormal);
        LatentState {
            severity: d.persistence * s.severity - d.recovery + harm + d.noise_sd * z,
            ..*s
        }
    }

    fn rollout(&self, n: usize, seed: u64, mut policy: impl FnMut(&LatentState, f64, &mut Rng) -> (f64, f64)) -> f64 {
        let mut rng = seeded(seed);
        let mut deaths = 0usize;
        for _ in 0..n {
            let len = self.stay_length(&mut rng);
            let (mut state, style) = self.admit(&mut rng);
            let mut tally = RiskTally::default();
            for _ in 0..len {
                let (iv, vp) = policy(&state, style, &mut rng);
                state = self.advance(&state, iv, vp, &mut rng);
                tally.add(self, &state);
            }
            if rng.random::<f64>() < self.death_probability(tally.mean(), len) {
                deaths += 1;
            }
        }
        deaths as f64 / n.max(1) as f64
    }

    /// Mortality of `n` fresh patients dosed by `policy` (delivered intensity per drug)
    /// over their logged windows, under the calibrated threshold.
    pub fn rollout_mortality(
        &self,
        n: usize,
        seed: u64,
        mut policy: impl FnMut(&LatentState, &mut Rng) -> (f64, f64),
    ) -> f64 {
        self.rollout(n, seed, |s, _, rng| policy(s, rng))
    }

    /// Mortality under the simulated clinician.
    pub fn physician_mortality(&self, n: usize, seed: u64) -> f64 {
        self.rollout(n, seed, |s, style, rng| self.physician_levels(s, style, rng))
    }

    fn observe(&self, s: &LatentState, rng: &mut Rng) -> Result<FeatureVector> {
        let sqrt12 = sqrt(12.0);
        let mut values = Vec::with_capacity(N_FEATURES);
        for info in &FEATURES {
            let driver = match info.driver {
                Driver::Severity => s.severity,
                Driver::Fluid => (s.fluid_trait - 0.5) * sqrt12,
                Driver::Pressor => (s.pressor_trait - 0.5) * sqrt12,
                Driver::None => 0.0,
            };
            let noise: f64 = rng.sample(StandardNormal);
            let z = info.loading * driver + sqrt(1.0 - info.loading * info.loading) * noise;
            let missing = rng.random::<f64>() < self.config.missing_rate;
            values.push(if missing { None } else { Some(info.mean + info.sd * z) });
        }
        FeatureVector::new(values)
    }

    /// Raw dose of a delivered intensity; strictly increasing above zero,
    /// so any quantile binning of doses keeps intensities ordered.
    fn dose(intensity: f64, table: &[f64; 5]) -> f64 {
        if intensity == 0.0 {
            return 0.0;
        }
        let k = (floor(intensity) as usize).clamp(1, 3);
        let f = intensity - k as f64;
        table[k] * exp(f * log(table[k + 1] / table[k]))
    }

    /// Raw doses of the harmless intensities for `s`.
    pub fn ideal_doses(s: &LatentState) -> RawDosePair {
        RawDosePair {
            iv_volume: Self::dose(s.ideal_iv(), &IV_LEVEL_DOSE),
            vp_max: Self::dose(s.ideal_vp(), &VP_LEVEL_DOSE),
        }
    }

    /// Draws the full observed cohort.
    pub fn generate(&self) -> Result<Cohort> {
        Ok(self.generate_with_latents()?.0)
    }

    /// Draws the cohort together with the hidden state behind every logged
    /// window, indexed like the trajectories and their steps.
    pub fn generate_with_latents(&self) -> Result<(Cohort, Vec<Vec<LatentState>>)> {
        let mut rng = seeded(derive_seed(self.config.seed, 2));
        let mut trajectories = Vec::with_capacity(self.config.n_patients);
        let mut latents = Vec::with_capacity(self.config.n_patients);
        for p in 0..self.config.n_patients {
            let len = self.stay_length(&mut rng);
            let (mut state, style) = self.admit(&mut rng);
            let mut steps = Vec::with_capacity(len);
            let mut hidden = Vec::with_capacity(len);
            let mut tally = RiskTally::default();
            for _ in 0..len {
                hidden.push(state);
                let features = self.observe(&state, &mut rng)?;
                let (iv, vp) = self.physician_levels(&state, style, &mut rng);
                let dose = RawDosePair::new(
                    Self::dose(iv, &IV_LEVEL_DOSE),
                    Self::dose(vp, &VP_LEVEL_DOSE),
                )?;
                steps.push(Timestep::new(features, dose));
                state = self.advance(&state, iv, vp, &mut rng);
                tally.add(self, &state);
            }
            let outcome = if rng.random::<f64>() < self.death_probability(tally.mean(), len) {
                Outcome::Died
            } else {
                Outcome::Survived
            };
            trajectories.push(PatientTrajectory::new(format!("P{p:06}"), steps, outcome)?);
            latents.push(hidden);
        }
        let cohort = Cohort {
            trajectories,
            norm_stats: None,
            caps: Caps::default(),
        };
        Ok((cohort, latents))
    }
}

/// Hazard scale at which the mean death probability over `risks` equals
/// `target`. Mortality is increasing in the scale, so bisection on a
/// log scale converges.
fn solve_scale(risks: &[f64], target: f64) -> f64 {
    let mortality = |scale: f64| {
        risks.iter().map(|&r| 1.0 - exp(-scale * r)).sum::<f64>() / risks.len().max(1) as f64
    };
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mortality(exp(mid)) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    exp(0.5 * (lo + hi))
}

/// Calibrates the generator and draws a cohort.
pub fn generate_synthetic_cohort(config: &SyntheticCohortConfig) -> Result<Cohort> {
    SyntheticModel::calibrate(config)?.generate()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> SyntheticCohortConfig {
        SyntheticCohortConfig {
            n_patients: n,
            pilot_patients: 5000,
            ..Default::default()
        }
    }

    #[test]
    fn single_fixed_length_patient() {
        let cfg = SyntheticCohortConfig {
            n_patients: 1,
            min_len: 3,
            max_len: 3,
            ..small(1)
        };
        let c = generate_synthetic_cohort(&cfg).unwrap();
        assert_eq!(c.len(), 1);
        let t = &c.trajectories[0];
        assert_eq!(t.len(), 3);
        assert!(t.steps[2].is_terminal);
        assert!(!t.steps[0].is_terminal && !t.steps[1].is_terminal);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_synthetic_cohort(&small(50)).unwrap();
        let b = generate_synthetic_cohort(&small(50)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_cohort(&SyntheticCohortConfig { seed: 8, ..small(50) }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            SyntheticCohortConfig { n_patients: 0, ..small(1) },
            SyntheticCohortConfig { mortality_target: 0.0, ..small(1) },
            SyntheticCohortConfig { mortality_target: 1.0, ..small(1) },
            SyntheticCohortConfig { min_len: 4, max_len: 3, ..small(1) },
            SyntheticCohortConfig { missing_rate: 1.0, ..small(1) },
        ] {
            assert!(matches!(generate_synthetic_cohort(&cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn lengths_and_doses_in_range() {
        let c = generate_synthetic_cohort(&small(200)).unwrap();
        for t in &c.trajectories {
            assert!((6..=18).contains(&t.len()));
        }
        assert!(c.timesteps().any(|s| s.raw_dose.vp_max == 0.0));
        assert!(c.timesteps().any(|s| s.raw_dose.vp_max > 0.0));
        assert!(c.timesteps().any(|s| !s.features.is_complete()));
    }

    #[test]
    fn ideal_dosing_beats_the_clinician() {
        let model = SyntheticModel::calibrate(&small(1)).unwrap();
        let physician = model.physician_mortality(4000, 99);
        let ideal = model.rollout_mortality(4000, 99, |s, _| (s.ideal_iv(), s.ideal_vp()));
        assert!((physician - 0.137).abs() < 0.025, "{physician}");
        assert!(ideal < physician - 0.05, "ideal {ideal} vs physician {physician}");
    }
}
