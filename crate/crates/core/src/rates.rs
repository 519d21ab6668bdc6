//! Dressed relaxation, excitation and dephasing rates at one bias point.
//!
//! The reduced two-level description carries three rates: relaxation,
//! excitation and pure dephasing. Each has a photon-conserving part
//! (the undriven golden-rule term, scaled by `A²`) and a sum over
//! `m`-photon transitions weighted by
//! `B_m = E_J² S_Q(m h f_μ) / (m f_μ)²`.
//!
//! Bessel factors enter with their signs: `j⁺ = J_{m-n}(α)` and
//! `j⁻ = J_{-(m+n)}(α)`. Only the final rates are squared.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use crate::bessel::BesselTable;
use crate::error::{Error, Result};
use crate::model::{correction_factor_from_table, BiasPoint, DeviceParams, EnvironmentSpectrum, OmegaClass, K_B_OVER_H};

/// Rates for one photon number change `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhotonRates {
    pub m: u32,
    pub gamma_rel: f64,
    pub gamma_exc: f64,
    pub gamma_phi: f64,
}

/// All dressed rates at a bias point [s⁻¹].
#[derive(Debug, Clone, PartialEq)]
pub struct RateSet {
    /// Total relaxation, including the photon-conserving term.
    pub gamma_rel: f64,
    /// Total excitation, including the thermal term.
    pub gamma_exc: f64,
    pub gamma_1: f64,
    /// `A² cos²η S_Q(0) + Σ Γ_φ^m + Σ Γ_φ,x^m`; the `Γ_1/2` part lives in `gamma_2`.
    pub gamma_phi_pure: f64,
    pub gamma_2: f64,
    /// Signed effective temperature [K]; `+inf` for equal rates.
    pub t_eff: f64,
    /// Equilibrium polarization, `+1` for the dressed ground state.
    pub s_z0: f64,
    pub per_m: Vec<PhotonRates>,
}

/// Photon-conserving rates `(Γ_rel^std, A² cos²η S_Q(0))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StdRates {
    pub gamma_rel: f64,
    pub gamma_phi_pure: f64,
}

pub fn gamma_std(bias: &BiasPoint, env: &EnvironmentSpectrum, a: f64, f_rf: f64) -> StdRates {
    let a2 = a * a;
    let (s, c) = bias.eta.sin_cos();
    StdRates {
        gamma_rel: a2 * s * s * env.s_q(OmegaClass::AtGap(bias.delta_n), f_rf),
        gamma_phi_pure: a2 * c * c * env.s_q(OmegaClass::Zero, f_rf),
    }
}

/// `B_m = E_J² S_Q(m h f_μ) / (m f_μ)²`.
pub fn b_m(m: u32, env: &EnvironmentSpectrum, device: &DeviceParams) -> f64 {
    let denom = m as f64 * device.f_mu;
    device.e_j * device.e_j * env.s_q(OmegaClass::Harmonic(m), device.f_rf) / (denom * denom)
}

/// `(cos²(η/2), sin²(η/2), sin η)`. Above π/2 the angle is reflected
/// (`PI - η` is exact there), so `η` and `PI - η` give swapped bit-identical
/// weights.
fn half_angle_weights(eta: f64) -> (f64, f64, f64) {
    if eta > FRAC_PI_2 {
        let (s2, c2, sin_eta) = half_angle_weights(PI - eta);
        (c2, s2, sin_eta)
    } else {
        let (s, c) = (0.5 * eta).sin_cos();
        (c * c, s * s, eta.sin())
    }
}

fn photon_rates(m: u32, eta: f64, j_plus: f64, j_minus: f64, b: f64) -> PhotonRates {
    let (c2, s2, sin_eta) = half_angle_weights(eta);
    let rel = c2 * j_plus + s2 * j_minus;
    let exc = s2 * j_plus + c2 * j_minus;
    let diff = j_plus - j_minus;
    PhotonRates {
        m,
        gamma_rel: b * rel * rel,
        gamma_exc: b * exc * exc,
        gamma_phi: 0.25 * b * sin_eta * sin_eta * diff * diff,
    }
}

fn bessel_pair(table: &BesselTable, m: u32, n: u32) -> (f64, f64) {
    let (m, n) = (m as i64, n as i64);
    (table.get(m - n), table.get(-(m + n)))
}

/// `m`-photon relaxation, excitation and dephasing rates.
pub fn gamma_m(m: u32, bias: &BiasPoint, env: &EnvironmentSpectrum, device: &DeviceParams) -> Result<PhotonRates> {
    if m == 0 {
        return Err(Error::InvalidParam("photon number change m must be >= 1".into()));
    }
    let table = BesselTable::new(bias.alpha, (m + bias.n_res) as usize)?;
    let (jp, jm) = bessel_pair(&table, m, bias.n_res);
    Ok(photon_rates(m, bias.eta, jp, jm, b_m(m, env, device)))
}

fn phi_x_from_table(table: &BesselTable, m: u32, bias: &BiasPoint, env: &EnvironmentSpectrum) -> f64 {
    let (jp, jm) = bessel_pair(table, m, bias.n_res);
    let s = half_angle_weights(bias.eta).2;
    let sum = jm + jp;
    s * s * sum * sum * env.s_x(m)
}

/// Second-order dephasing through the effective σx noise, `m ∈ {0, 1}`.
pub fn gamma_phi_x(m: u32, bias: &BiasPoint, env: &EnvironmentSpectrum) -> Result<f64> {
    if m > 1 {
        return Err(Error::InvalidParam(format!("gamma_phi_x is cut off above m = 1, got {m}")));
    }
    let table = BesselTable::new(bias.alpha, (m + bias.n_res) as usize)?;
    Ok(phi_x_from_table(&table, m, bias, env))
}

/// Default truncation of the photon sums; wide enough to cover the
/// Bessel support of `α` around the resonance.
pub fn default_m_max(n_res: u32, alpha: f64) -> u32 {
    let support = n_res + alpha.ceil() as u32 + 15;
    20.max(n_res + 10).max(support)
}

/// Signed effective temperature `h Δ_n / (k_B ln(Γ_rel/Γ_exc))` [K].
///
/// Equal rates give `+inf`. A vanishing excitation rate gives `+0`
/// (zero temperature), a vanishing relaxation rate `-0` (full inversion).
pub fn effective_temperature(gamma_rel: f64, gamma_exc: f64, delta_n: f64) -> Result<f64> {
    if !(delta_n >= 0.0) {
        return Err(Error::InvalidParam(format!("dressed gap must be >= 0, got {delta_n}")));
    }
    if !(gamma_rel >= 0.0 && gamma_exc >= 0.0) {
        return Err(Error::InvalidParam("rates must be >= 0".into()));
    }
    match (gamma_rel == 0.0, gamma_exc == 0.0) {
        (true, true) => Err(Error::UndefinedTemperature("both rates vanish")),
        (false, true) => Ok(0.0),
        (true, false) => Ok(-0.0),
        _ if gamma_rel == gamma_exc => Ok(f64::INFINITY),
        _ => Ok((delta_n / K_B_OVER_H) / (gamma_rel / gamma_exc).ln()),
    }
}

/// Every rate at `bias`, with photon sums truncated at `m_max`
/// (defaults to [`default_m_max`]).
pub fn total_rates(
    bias: &BiasPoint,
    env: &EnvironmentSpectrum,
    device: &DeviceParams,
    m_max: Option<u32>,
) -> Result<RateSet> {
    let n = bias.n_res;
    let m_max = m_max.unwrap_or_else(|| default_m_max(n, bias.alpha));
    if m_max < n + 5 {
        return Err(Error::InvalidParam(format!("m_max = {m_max} must be >= n + 5 = {}", n + 5)));
    }
    let table = BesselTable::new(bias.alpha, (m_max + n) as usize)?;
    let a = correction_factor_from_table(&table, n, device.e_j, device.f_mu, m_max);
    let std = gamma_std(bias, env, a, device.f_rf);

    let mut per_m = Vec::with_capacity(m_max as usize);
    let (mut rel, mut exc, mut phi) = (0.0, 0.0, 0.0);
    let mut tail = 0.0;
    for m in 1..=m_max {
        let (jp, jm) = bessel_pair(&table, m, n);
        let r = photon_rates(m, bias.eta, jp, jm, b_m(m, env, device));
        rel += r.gamma_rel;
        exc += r.gamma_exc;
        phi += r.gamma_phi;
        if m + 3 > m_max {
            tail += r.gamma_rel + r.gamma_exc + r.gamma_phi;
        }
        per_m.push(r);
    }
    let total = rel + exc + phi;
    if total > 0.0 && tail > 1e-6 * total {
        return Err(Error::RateNotConverged { tail, total });
    }

    let phi_x = phi_x_from_table(&table, 0, bias, env) + phi_x_from_table(&table, 1, bias, env);

    let gamma_rel = std.gamma_rel + rel;
    let mut gamma_exc = exc;
    if env.t_bath > 0.0 {
        gamma_exc += gamma_rel * (-bias.delta_n / (K_B_OVER_H * env.t_bath)).exp();
    }
    let gamma_1 = gamma_rel + gamma_exc;
    let gamma_phi_pure = std.gamma_phi_pure + phi + phi_x;
    let s_z0 = if gamma_1 > 0.0 { (gamma_rel - gamma_exc) / gamma_1 } else { 0.0 };
    let t_eff = effective_temperature(gamma_rel, gamma_exc, bias.delta_n).unwrap_or(f64::INFINITY);

    Ok(RateSet {
        gamma_rel,
        gamma_exc,
        gamma_1,
        gamma_phi_pure,
        gamma_2: gamma_phi_pure + 0.5 * gamma_1,
        t_eff,
        s_z0,
        per_m,
    })
}

/// Rates at one bias point as linear functionals of the environment
/// spectrum. Building the basis does all the Bessel work once; combining
/// it with a spectrum is a handful of multiply-adds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBasis {
    delta_n: f64,
    /// Per unit `S_Q(Δ_n)`.
    rel_std: f64,
    /// Per unit `S_Q(0)`.
    phi_std: f64,
    /// Per unit `s_ohmic`.
    rel_ohm: f64,
    exc_ohm: f64,
    phi_ohm: f64,
    /// Per unit `S_X(0)` and `S_X(h f_μ)`.
    phi_x0: f64,
    phi_x_mu: f64,
}

impl RateBasis {
    pub fn new(bias: &BiasPoint, device: &DeviceParams, m_max: Option<u32>) -> Result<Self> {
        let unit = EnvironmentSpectrum {
            s_phi0: 1.0,
            rel_model: crate::model::RelModel::PerSliceScalar { s_rel: 1.0 },
            s_ohmic: 1.0,
            s_x0: 1.0,
            s_x_mu: 0.0,
            t_bath: 0.0,
        };
        let n = bias.n_res;
        let m_max = m_max.unwrap_or_else(|| default_m_max(n, bias.alpha));
        if m_max < n + 5 {
            return Err(Error::InvalidParam(format!("m_max = {m_max} must be >= n + 5 = {}", n + 5)));
        }
        let table = BesselTable::new(bias.alpha, (m_max + n) as usize)?;
        let a = correction_factor_from_table(&table, n, device.e_j, device.f_mu, m_max);
        let std = gamma_std(bias, &unit, a, device.f_rf);
        let (mut rel, mut exc, mut phi, mut tail) = (0.0, 0.0, 0.0, 0.0);
        for m in 1..=m_max {
            let (jp, jm) = bessel_pair(&table, m, n);
            let r = photon_rates(m, bias.eta, jp, jm, b_m(m, &unit, device));
            rel += r.gamma_rel;
            exc += r.gamma_exc;
            phi += r.gamma_phi;
            if m + 3 > m_max {
                tail += r.gamma_rel + r.gamma_exc + r.gamma_phi;
            }
        }
        let total = rel + exc + phi;
        if total > 0.0 && tail > 1e-6 * total {
            return Err(Error::RateNotConverged { tail, total });
        }
        let x_unit = EnvironmentSpectrum { s_x0: 0.0, s_x_mu: 1.0, ..unit };
        Ok(Self {
            delta_n: bias.delta_n,
            rel_std: std.gamma_rel,
            phi_std: std.gamma_phi_pure,
            rel_ohm: rel,
            exc_ohm: exc,
            phi_ohm: phi,
            phi_x0: phi_x_from_table(&table, 0, bias, &unit),
            phi_x_mu: phi_x_from_table(&table, 1, bias, &x_unit),
        })
    }

    /// Same totals as [`total_rates`], without the per-`m` breakdown.
    pub fn rates(&self, env: &EnvironmentSpectrum, f_rf: f64) -> RateSet {
        let s_rel = env.s_q(OmegaClass::AtGap(self.delta_n), f_rf);
        let gamma_rel = self.rel_std * s_rel + self.rel_ohm * env.s_ohmic;
        let mut gamma_exc = self.exc_ohm * env.s_ohmic;
        if env.t_bath > 0.0 {
            gamma_exc += gamma_rel * (-self.delta_n / (K_B_OVER_H * env.t_bath)).exp();
        }
        let gamma_1 = gamma_rel + gamma_exc;
        let gamma_phi_pure = self.phi_std * env.s_phi0
            + self.phi_ohm * env.s_ohmic
            + self.phi_x0 * env.s_x0
            + self.phi_x_mu * env.s_x_mu;
        let s_z0 = if gamma_1 > 0.0 { (gamma_rel - gamma_exc) / gamma_1 } else { 0.0 };
        let t_eff = effective_temperature(gamma_rel, gamma_exc, self.delta_n).unwrap_or(f64::INFINITY);
        RateSet {
            gamma_rel,
            gamma_exc,
            gamma_1,
            gamma_phi_pure,
            gamma_2: gamma_phi_pure + 0.5 * gamma_1,
            t_eff,
            s_z0,
            per_m: Vec::new(),
        }
    }
}
