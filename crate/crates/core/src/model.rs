//! Device constants, environment spectra and dressed-state geometry.
//!
//! Unit conventions used throughout the crate:
//! - energies are linear frequencies `E/h` in Hz,
//! - rates and spectral densities are angular rates in s⁻¹,
//! - temperatures are in K, converted with `k_B/h`.

use serde::{Deserialize, Serialize};

use crate::bessel::{bessel_j, BesselTable};
use crate::error::{Error, Result};

/// Boltzmann constant over Planck constant [Hz/K].
pub const K_B_OVER_H: f64 = 2.083_661_9e10;
/// Elementary charge [C].
pub const E_CHARGE: f64 = 1.602_176_634e-19;
/// Planck constant [J s].
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Single-port parallel LC readout tank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TankParams {
    /// Resonance frequency [Hz].
    pub f0: f64,
    /// Inductance [H].
    pub l_ind: f64,
    /// Internal quality factor.
    pub q_int: f64,
    /// Source impedance seen by the tank through its matching network [Ω].
    pub z0: f64,
}

impl Default for TankParams {
    fn default() -> Self {
        Self {
            f0: 0.65e9,
            l_ind: 20e-9,
            q_int: 1e3,
            z0: 5e4,
        }
    }
}

impl TankParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("f0", self.f0), ("l_ind", self.l_ind), ("q_int", self.q_int), ("z0", self.z0)] {
            if !(v > 0.0) {
                return Err(Error::InvalidParam(format!("tank.{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Tank capacitance `1/((2π f0)² L)` [F].
    pub fn c_osc(&self) -> f64 {
        let w0 = std::f64::consts::TAU * self.f0;
        1.0 / (w0 * w0 * self.l_ind)
    }

    /// Parallel loss resistance `q_int·sqrt(L/C)`; infinite for a lossless tank.
    pub fn r_int(&self) -> f64 {
        self.q_int * (self.l_ind / self.c_osc()).sqrt()
    }
}

/// Static device and drive constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceParams {
    /// Josephson energy [Hz].
    pub e_j: f64,
    /// Cooper-pair charging energy [Hz].
    pub e_q: f64,
    /// Microwave drive frequency [Hz].
    pub f_mu: f64,
    /// Probe / oscillator frequency [Hz].
    pub f_rf: f64,
    /// Charge coupling to the oscillator, `C_rf/C_Σ`.
    pub beta: f64,
    /// Converts generator amplitude to drive amplitude in units of 2e.
    pub gamma_mu: f64,
    /// Probe amplitude in units of 2e.
    pub n_rf: f64,
    #[serde(skip)]
    pub tank: TankParams,
}

impl DeviceParams {
    /// Representative device values; `beta`, `gamma_mu` and `n_rf` are
    /// placeholders.
    pub fn representative() -> Self {
        Self {
            e_j: 2.6e9,
            e_q: 62e9,
            f_mu: 7e9,
            f_rf: 0.65e9,
            beta: 0.1,
            gamma_mu: 1.0,
            n_rf: 1e-7,
            tank: TankParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("e_j", self.e_j), ("e_q", self.e_q), ("f_mu", self.f_mu), ("f_rf", self.f_rf)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParam(format!("device.{name} must be > 0, got {v}")));
            }
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidParam(format!("device.beta must be in (0, 1), got {}", self.beta)));
        }
        if !(self.n_rf >= 0.0) {
            return Err(Error::InvalidParam(format!("device.n_rf must be >= 0, got {}", self.n_rf)));
        }
        if !(self.gamma_mu >= 0.0) {
            return Err(Error::InvalidParam(format!("device.gamma_mu must be >= 0, got {}", self.gamma_mu)));
        }
        self.tank.validate()
    }

    /// `E_J / hf_μ`, the expansion parameter of the dressed-state rates.
    pub fn perturbation_ratio(&self) -> f64 {
        self.e_j / self.f_mu
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let r = self.perturbation_ratio();
        if r > 0.5 {
            out.push(format!("e_j/f_mu = {r:.3} > 0.5: dressed-state expansion is unreliable"));
        }
        out
    }

    /// Total island capacitance implied by `e_q` [F].
    pub fn c_sigma(&self) -> f64 {
        let q = 2.0 * E_CHARGE;
        q * q / (2.0 * PLANCK * self.e_q)
    }

    /// Probe voltage `2e·n_rf/C_rf` with `C_rf = β C_Σ` [V].
    pub fn v_rf(&self) -> f64 {
        PLANCK * self.e_q * self.n_rf / (self.beta * E_CHARGE)
    }
}

/// Model for `S_Q` at the dressed gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RelModel {
    PerSliceScalar { s_rel: f64 },
    /// `s_bg + s_peak / (1 + (|Δ - f_rf| / width)²)`, width is the half width [Hz].
    LorentzianPeak { s_bg: f64, s_peak: f64, width: f64 },
}

/// Parametrized charge-noise (`S_Q`) and effective-σx-noise (`S_X`) spectra.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpectrum {
    /// `S_Q(0)` [s⁻¹].
    pub s_phi0: f64,
    pub rel_model: RelModel,
    /// `S_Q(h f_μ)` [s⁻¹]; Ohmic, so `S_Q(m h f_μ) = m s_ohmic`.
    pub s_ohmic: f64,
    /// `S_X(0)` [s⁻¹].
    #[serde(default)]
    pub s_x0: f64,
    /// `S_X(h f_μ)` [s⁻¹].
    #[serde(default)]
    pub s_x_mu: f64,
    /// Bath temperature [K].
    #[serde(default)]
    pub t_bath: f64,
}

/// Frequency at which `S_Q` is requested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaClass {
    Zero,
    /// At a dressed gap [Hz].
    AtGap(f64),
    /// At `m h f_μ`, `m >= 1`.
    Harmonic(u32),
}

impl EnvironmentSpectrum {
    /// Per-slice scalar environment.
    pub fn scalar(s_phi0: f64, s_rel: f64, s_ohmic: f64) -> Self {
        Self {
            s_phi0,
            rel_model: RelModel::PerSliceScalar { s_rel },
            s_ohmic,
            s_x0: 0.0,
            s_x_mu: 0.0,
            t_bath: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut vals = vec![
            ("s_phi0", self.s_phi0),
            ("s_ohmic", self.s_ohmic),
            ("s_x0", self.s_x0),
            ("s_x_mu", self.s_x_mu),
            ("t_bath", self.t_bath),
        ];
        match self.rel_model {
            RelModel::PerSliceScalar { s_rel } => vals.push(("s_rel", s_rel)),
            RelModel::LorentzianPeak { s_bg, s_peak, width } => {
                vals.push(("s_bg", s_bg));
                vals.push(("s_peak", s_peak));
                if !(width > 0.0) {
                    return Err(Error::InvalidParam(format!(
                        "environment.rel_model width must be > 0, got {width}"
                    )));
                }
            }
        }
        for (name, v) in vals {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParam(format!("environment.{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// `S_Q` at the requested frequency class; `f_rf` centers the Lorentzian.
    pub fn s_q(&self, class: OmegaClass, f_rf: f64) -> f64 {
        match class {
            OmegaClass::Zero => self.s_phi0,
            OmegaClass::AtGap(delta) => match self.rel_model {
                RelModel::PerSliceScalar { s_rel } => s_rel,
                RelModel::LorentzianPeak { s_bg, s_peak, width } => {
                    let x = (delta - f_rf).abs() / width;
                    s_bg + s_peak / (1.0 + x * x)
                }
            },
            OmegaClass::Harmonic(m) => m as f64 * self.s_ohmic,
        }
    }

    /// `S_X(m h f_μ)` for `m ∈ {0, 1}`.
    pub fn s_x(&self, m: u32) -> f64 {
        match m {
            0 => self.s_x0,
            1 => self.s_x_mu,
            _ => 0.0,
        }
    }
}

pub fn spectral_density_q(env: &EnvironmentSpectrum, class: OmegaClass, f_rf: f64) -> f64 {
    env.s_q(class, f_rf)
}

/// `E_Ch = E_Q (1 - 2 n_g)`.
pub fn charging_energy(n_g: f64, e_q: f64) -> f64 {
    e_q * (1.0 - 2.0 * n_g)
}

/// `α = 2 E_Q n_μ / h f_μ` with `n_μ = γ_μ A_μ`.
pub fn normalized_amplitude(a_mu: f64, gamma_mu: f64, e_q: f64, f_mu: f64) -> f64 {
    2.0 * e_q * (gamma_mu * a_mu) / f_mu
}

/// Nearest photon resonance `n` and residual detuning `eps = |E_Ch| - n f_μ`.
///
/// The charging energy is folded to `|E_Ch|`: the driven Hamiltonian at
/// `-E_Ch` is unitarily equivalent to the one at `E_Ch`. Ties at
/// `|eps| = f_μ/2` go to the even index.
pub fn resonance_index(e_ch: f64, f_mu: f64) -> (u32, f64) {
    let e = e_ch.abs();
    let n = (e / f_mu).round_ties_even();
    let n = n.max(0.0);
    (n as u32, e - n * f_mu)
}

/// `Δ_n(α) = |E_J J_n(α)|`.
pub fn dressed_gap(n: u32, alpha: f64, e_j: f64) -> Result<f64> {
    Ok((e_j * bessel_j(n as i64, alpha)?).abs())
}

/// `η = atan2(Δ_n, eps)`, in `[0, π]`.
pub fn mixing_angle(eps: f64, delta_n: f64) -> Result<f64> {
    if eps == 0.0 && delta_n == 0.0 {
        return Err(Error::DegenerateAngle);
    }
    let theta = delta_n.atan2(eps.abs());
    Ok(if eps < 0.0 { std::f64::consts::PI - theta } else { theta })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Excited,
    Ground,
}

/// `E^N = N f_μ ± ½ sqrt(eps² + Δ_n²)`.
pub fn ladder_energy(photons: i64, branch: Branch, bias: &BiasPoint, f_mu: f64) -> f64 {
    let half = 0.5 * bias.splitting();
    let base = photons as f64 * f_mu;
    match branch {
        Branch::Excited => base + half,
        Branch::Ground => base - half,
    }
}

/// `A = 1 - (E_J/2f_μ)² Σ_{0<|m|<=m_max} J²_{m-n}(α)/m²`.
pub fn correction_factor_a(alpha: f64, n: u32, e_j: f64, f_mu: f64, m_max: u32) -> Result<f64> {
    if m_max < 1 {
        return Err(Error::InvalidParam("m_max must be >= 1".into()));
    }
    let table = BesselTable::new(alpha, (m_max + n) as usize)?;
    Ok(correction_factor_from_table(&table, n, e_j, f_mu, m_max))
}

pub(crate) fn correction_factor_from_table(table: &BesselTable, n: u32, e_j: f64, f_mu: f64, m_max: u32) -> f64 {
    let n = n as i64;
    let mut sum = 0.0;
    for m in 1..=m_max as i64 {
        let mm = (m * m) as f64;
        sum += (table.get(m - n).powi(2) + table.get(-m - n).powi(2)) / mm;
    }
    let pre = e_j / (2.0 * f_mu);
    1.0 - pre * pre * sum
}

/// One `(n_g, A_μ)` operating point with its dressed-state geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasPoint {
    pub n_g: f64,
    pub a_mu: f64,
    /// Charging energy [Hz].
    pub e_ch: f64,
    pub alpha: f64,
    /// Photon resonance index.
    pub n_res: u32,
    /// Detuning from the resonance [Hz].
    pub eps: f64,
    /// Dressed gap magnitude [Hz].
    pub delta_n: f64,
    /// Signed `J_n(α)`.
    pub j_n: f64,
    /// Mixing angle [rad].
    pub eta: f64,
}

impl BiasPoint {
    pub fn new(n_g: f64, a_mu: f64, device: &DeviceParams) -> Result<Self> {
        if !(a_mu >= 0.0) {
            return Err(Error::InvalidParam(format!("a_mu must be >= 0, got {a_mu}")));
        }
        let e_ch = charging_energy(n_g, device.e_q);
        let alpha = normalized_amplitude(a_mu, device.gamma_mu, device.e_q, device.f_mu);
        let (n_res, eps) = resonance_index(e_ch, device.f_mu);
        let j_n = bessel_j(n_res as i64, alpha)?;
        let delta_n = (device.e_j * j_n).abs();
        let eta = mixing_angle(eps, delta_n)?;
        Ok(Self {
            n_g,
            a_mu,
            e_ch,
            alpha,
            n_res,
            eps,
            delta_n,
            j_n,
            eta,
        })
    }

    /// Point on the `n`-photon resonance at mixing angle `eta`. With a
    /// nonzero gap the detuning is `Δ_n cot η`; with a vanishing gap `eta`
    /// is kept as given and the detuning is zero.
    pub fn at_angle(n_res: u32, alpha: f64, eta: f64, device: &DeviceParams) -> Result<Self> {
        if !(0.0..=std::f64::consts::PI).contains(&eta) {
            return Err(Error::InvalidParam(format!("eta must be in [0, π], got {eta}")));
        }
        let j_n = bessel_j(n_res as i64, alpha)?;
        let delta_n = (device.e_j * j_n).abs();
        let eps = if delta_n > 0.0 { delta_n * eta.cos() / eta.sin() } else { 0.0 };
        let eps = if eps.is_finite() { eps } else { 0.0 };
        let e_ch = n_res as f64 * device.f_mu + eps;
        let a_mu = if device.gamma_mu > 0.0 {
            alpha * device.f_mu / (2.0 * device.e_q * device.gamma_mu)
        } else {
            0.0
        };
        Ok(Self {
            n_g: 0.5 * (1.0 - e_ch / device.e_q),
            a_mu,
            e_ch,
            alpha,
            n_res,
            eps,
            delta_n,
            j_n,
            eta,
        })
    }

    /// Level splitting `sqrt(eps² + Δ_n²)` [Hz].
    pub fn splitting(&self) -> f64 {
        self.eps.hypot(self.delta_n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn charging_energy_examples() {
        assert_eq!(charging_energy(0.5, 62e9), 0.0);
        assert_eq!(charging_energy(0.0, 62e9), 62e9);
        assert_eq!(charging_energy(0.25, 62e9), 31e9);
        assert!(charging_energy(0.75, 62e9) < 0.0);
    }

    #[test]
    fn normalized_amplitude_examples() {
        assert_eq!(normalized_amplitude(0.0, 1.0, 62e9, 7e9), 0.0);
        let a = normalized_amplitude(0.05, 1.0, 62e9, 7e9);
        assert!((a - 2.0 * 62.0 * 0.05 / 7.0).abs() < 1e-12);
        assert!((a - 0.886).abs() < 1e-3);
        let b = normalized_amplitude(0.1, 1.0, 62e9, 7e9);
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn resonance_index_examples() {
        assert_eq!(resonance_index(21e9, 7e9), (3, 0.0));
        assert_eq!(resonance_index(0.0, 7e9), (0, 0.0));
        let (n, eps) = resonance_index(10.4e9, 7e9);
        assert_eq!(n, 1);
        assert!((eps - 3.4e9).abs() < 1.0);
        // ties go to the even index
        assert_eq!(resonance_index(10.5e9, 7e9).0, 2);
        assert_eq!(resonance_index(3.5e9, 7e9).0, 0);
        // folded for negative charging energy
        let (n, eps) = resonance_index(-10.4e9, 7e9);
        assert_eq!(n, 1);
        assert!((eps - 3.4e9).abs() < 1.0);
    }

    #[test]
    fn dressed_gap_examples() {
        assert_eq!(dressed_gap(0, 0.0, 2.6e9).unwrap(), 2.6e9);
        assert_eq!(dressed_gap(1, 0.0, 2.6e9).unwrap(), 0.0);
        let d = dressed_gap(1, 1.8412, 2.6e9).unwrap();
        assert!((d - 1.513e9).abs() < 1e6, "{d}");
        // J_1 is negative past its first zero; the gap is a magnitude
        assert!(dressed_gap(1, 4.0, 2.6e9).unwrap() > 0.0);
    }

    #[test]
    fn mixing_angle_examples() {
        assert_eq!(mixing_angle(0.0, 1e9).unwrap(), FRAC_PI_2);
        assert!(mixing_angle(1e9, 1e-3).unwrap() < 1e-11);
        assert!((mixing_angle(-1e9, 1e-3).unwrap() - PI).abs() < 1e-11);
        assert_eq!(mixing_angle(0.0, 0.0), Err(Error::DegenerateAngle));
    }

    #[test]
    fn ladder_energy_examples() {
        let dev = DeviceParams::representative();
        let b = BiasPoint::at_angle(1, 0.8, FRAC_PI_2, &dev).unwrap();
        let e = ladder_energy(0, Branch::Excited, &b, dev.f_mu);
        assert!((e - b.delta_n / 2.0).abs() < 1e-3);
        let step = ladder_energy(5, Branch::Ground, &b, dev.f_mu) - ladder_energy(4, Branch::Ground, &b, dev.f_mu);
        assert!((step - dev.f_mu).abs() < 1e-3);

        let undriven = BiasPoint::at_angle(0, 0.0, FRAC_PI_2, &dev).unwrap();
        let e = ladder_energy(0, Branch::Excited, &undriven, dev.f_mu);
        assert!((e - dev.e_j / 2.0).abs() < 1e-3);
    }

    #[test]
    fn correction_factor_examples() {
        assert_eq!(correction_factor_a(0.0, 0, 2.6e9, 7e9, 20).unwrap(), 1.0);
        assert_eq!(correction_factor_a(1.3, 2, 0.0, 7e9, 20).unwrap(), 1.0);

        // direct truncated-sum oracle
        let (alpha, n, ej, f) = (1.0f64, 1i64, 2.6e9f64, 7e9f64);
        let mut s = 0.0;
        for m in -20i64..=20 {
            if m != 0 {
                s += bessel_j(m - n, alpha).unwrap().powi(2) / (m * m) as f64;
            }
        }
        let want = 1.0 - (ej / (2.0 * f)).powi(2) * s;
        let got = correction_factor_a(alpha, 1, ej, f, 20).unwrap();
        assert!((got - want).abs() < 1e-14);
        assert!(got > 0.9 && got < 1.0, "{got}");
    }

    #[test]
    fn correction_factor_converges() {
        for &alpha in &[0.0, 0.5, 3.0, 9.0] {
            for n in 0..4 {
                let a = correction_factor_a(alpha, n, 2.6e9, 7e9, 20).unwrap();
                let b = correction_factor_a(alpha, n, 2.6e9, 7e9, 30).unwrap();
                assert!((a - b).abs() < 1e-10, "alpha={alpha} n={n}");
            }
        }
    }

    #[test]
    fn spectral_density_examples() {
        let env = EnvironmentSpectrum::scalar(1e6, 3.3e6, 2e6);
        assert_eq!(env.s_q(OmegaClass::Harmonic(3), 0.65e9), 6e6);
        assert_eq!(env.s_q(OmegaClass::AtGap(1.234e9), 0.65e9), 3.3e6);
        assert_eq!(env.s_q(OmegaClass::Zero, 0.65e9), 1e6);
        let lor = EnvironmentSpectrum {
            rel_model: RelModel::LorentzianPeak { s_bg: 1e5, s_peak: 4e6, width: 50e6 },
            ..env
        };
        assert_eq!(lor.s_q(OmegaClass::AtGap(0.65e9), 0.65e9), 4.1e6);
        let off = lor.s_q(OmegaClass::AtGap(0.70e9), 0.65e9);
        assert!((off - (1e5 + 2e6)).abs() < 1e-3);
    }

    #[test]
    fn validation() {
        let mut d = DeviceParams::representative();
        assert!(d.validate().is_ok());
        d.beta = 1.0;
        assert!(d.validate().is_err());
        let mut d = DeviceParams::representative();
        d.e_j = 0.0;
        assert!(d.validate().is_err());
        let mut d = DeviceParams::representative();
        d.tank.q_int = -1.0;
        assert!(d.validate().is_err());
        let mut d = DeviceParams::representative();
        assert!(d.warnings().is_empty());
        d.e_j = 4e9;
        assert_eq!(d.warnings().len(), 1);

        let mut env = EnvironmentSpectrum::scalar(1.0, 1.0, 1.0);
        assert!(env.validate().is_ok());
        env.t_bath = -0.1;
        assert!(env.validate().is_err());
        env.t_bath = 0.0;
        env.rel_model = RelModel::LorentzianPeak { s_bg: 0.0, s_peak: 1.0, width: 0.0 };
        assert!(env.validate().is_err());
    }

    #[test]
    fn bias_point_invariants() {
        let dev = DeviceParams::representative();
        for i in 0..200 {
            let ng = i as f64 / 199.0;
            let b = BiasPoint::new(ng, 0.03, &dev).unwrap();
            assert!((0.0..=PI).contains(&b.eta));
            assert!(b.delta_n >= 0.0);
            assert!(b.eps.abs() <= dev.f_mu / 2.0 + 1e-3);
            assert!((b.delta_n - dressed_gap(b.n_res, b.alpha, dev.e_j).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn tank_derived_values() {
        let t = TankParams::default();
        let w = std::f64::consts::TAU * t.f0;
        assert!((w * w * t.l_ind * t.c_osc() - 1.0).abs() < 1e-12);
        assert!((t.r_int() - t.q_int * (t.l_ind / t.c_osc()).sqrt()).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn mixing_angle_mirror(eps in -5e9f64..5e9, delta in 1e3f64..3e9) {
            let a = mixing_angle(eps, delta).unwrap();
            let b = mixing_angle(-eps, delta).unwrap();
            if eps >= 0.0 {
                prop_assert_eq!(b, PI - a);
            } else {
                // one ulp of π
                prop_assert!((b - (PI - a)).abs() <= 4.5e-16);
            }
        }

        #[test]
        fn ladder_splitting(ng in 0.0f64..1.0, amp in 0.0f64..0.4) {
            let dev = DeviceParams::representative();
            let b = BiasPoint::new(ng, amp, &dev).unwrap();
            let up = ladder_energy(3, Branch::Excited, &b, dev.f_mu);
            let dn = ladder_energy(3, Branch::Ground, &b, dev.f_mu);
            let want = (b.eps * b.eps + b.delta_n * b.delta_n).sqrt();
            prop_assert!((up - dn - want).abs() <= 1e-12 * want.max(1.0) + 1e-3);
        }

        #[test]
        fn correction_factor_monotone_in_ej(alpha in 0.0f64..10.0, n in 0u32..5, e1 in 0.0f64..3e9, e2 in 0.0f64..3e9) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let a_lo = correction_factor_a(alpha, n, lo, 7e9, 20).unwrap();
            let a_hi = correction_factor_a(alpha, n, hi, 7e9, 20).unwrap();
            prop_assert!(a_hi <= a_lo);
        }
    }
}
