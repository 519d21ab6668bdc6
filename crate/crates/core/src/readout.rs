//! Steady-state Bloch response of the dressed charge and the resulting
//! reflection coefficient of the readout tank.

use num_complex::Complex64;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::model::{BiasPoint, DeviceParams, TankParams, E_CHARGE, PLANCK};
use crate::rates::RateSet;

/// Oscillator response at one bias point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponsePoint {
    /// In-phase dressed charge [C].
    pub q_i: f64,
    /// Quadrature dressed charge [C].
    pub q_q: f64,
    /// Effective parallel capacitance [F].
    pub c_eff: f64,
    /// Effective parallel resistance [Ω]; negative under inversion.
    pub r_eff: f64,
    pub s11: Complex64,
}

/// In-phase and quadrature charge response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargeQuadratures {
    pub q_i: f64,
    pub q_q: f64,
    /// Probe voltage the charges refer to; 1 V in the zero-amplitude
    /// linear-response limit.
    pub v_rf: f64,
    /// The probe Rabi frequency exceeds `Γ_2`.
    pub saturated: bool,
}

/// `(u, v) = s_z0 Ω_R (Δω, Γ_2) / (Δω² + Γ_2² + Ω_R² Γ_2/Γ_1)`.
pub fn bloch_steady_state(delta_omega: f64, omega_rabi: f64, rates: &RateSet) -> Result<(f64, f64)> {
    let (u, v) = bloch_per_drive(delta_omega, omega_rabi, rates)?;
    Ok((u * omega_rabi, v * omega_rabi))
}

// u/Ω_R and v/Ω_R, finite as Ω_R -> 0
fn bloch_per_drive(delta_omega: f64, omega_rabi: f64, rates: &RateSet) -> Result<(f64, f64)> {
    let (g1, g2) = (rates.gamma_1, rates.gamma_2);
    if !(g1 > 0.0 && g2 > 0.0) {
        return Err(Error::BlochSingular { gamma_1: g1, gamma_2: g2 });
    }
    let d = delta_omega * delta_omega + g2 * g2 + omega_rabi * omega_rabi * g2 / g1;
    Ok((rates.s_z0 * delta_omega / d, rates.s_z0 * g2 / d))
}

/// Linear-response charge quadratures of the dressed two-level system
/// driven by the probe, plus the adiabatic quantum-capacitance term.
pub fn charge_quadratures(bias: &BiasPoint, rates: &RateSet, device: &DeviceParams) -> Result<ChargeQuadratures> {
    let (c_eff, g_eff, saturated) = effective_admittance(bias, rates, device)?;
    let v_rf = if device.n_rf > 0.0 { device.v_rf() } else { 1.0 };
    Ok(ChargeQuadratures {
        q_i: c_eff * v_rf / device.beta,
        q_q: g_eff * v_rf / (TAU * device.f_rf * device.beta),
        v_rf,
        saturated,
    })
}

// (C_eff [F], 1/R_eff [S], saturated)
fn effective_admittance(bias: &BiasPoint, rates: &RateSet, device: &DeviceParams) -> Result<(f64, f64, bool)> {
    let beta = device.beta;
    let sin_eta = bias.eta.sin();
    let splitting = bias.splitting();
    let e2_over_h = E_CHARGE * E_CHARGE / PLANCK;

    let omega_rabi = TAU * device.e_q * device.n_rf * sin_eta;
    let (mut c_eff, mut g_eff) = (0.0, 0.0);
    if bias.delta_n > 0.0 && sin_eta > 0.0 {
        let delta_omega = TAU * (splitting - device.f_rf);
        let (u, v) = bloch_per_drive(delta_omega, omega_rabi, rates)?;
        // q = e sinη (u, v) Ω_R with Ω_R / v_rf = 2π β e sinη / h
        let k = TAU * beta * beta * e2_over_h * sin_eta * sin_eta;
        c_eff += k * u;
        g_eff += TAU * device.f_rf * k * v;
    }
    if splitting > 0.0 {
        // β² (2e)²/2h · Δ² / Ω³, weighted by the polarization
        c_eff += beta * beta * 2.0 * e2_over_h * bias.delta_n * bias.delta_n * rates.s_z0 / splitting.powi(3);
    }
    Ok((c_eff, g_eff, omega_rabi > rates.gamma_2))
}

/// Reflection off a parallel LC tank loaded by `c_eff` and `r_eff`.
pub fn reflection_coefficient(c_eff: f64, r_eff: f64, tank: &TankParams, f_probe: f64) -> Result<Complex64> {
    let w = TAU * f_probe;
    let j = Complex64::i();
    let y = 1.0 / (j * w * tank.l_ind) + j * w * (tank.c_osc() + c_eff) + 1.0 / tank.r_int() + 1.0 / r_eff;
    let zy = tank.z0 * y;
    let den = 1.0 + zy;
    if den.norm() <= 1e-14 * (1.0 + zy.norm()) {
        return Err(Error::GainDivergence);
    }
    Ok((1.0 - zy) / den)
}

/// Full readout chain for one bias point, probed at `f_rf`.
pub fn response(bias: &BiasPoint, rates: &RateSet, device: &DeviceParams) -> Result<ResponsePoint> {
    let q = charge_quadratures(bias, rates, device)?;
    let c_eff = device.beta * q.q_i / q.v_rf;
    let g_eff = TAU * device.f_rf * device.beta * q.q_q / q.v_rf;
    let r_eff = 1.0 / g_eff;
    let s11 = reflection_coefficient(c_eff, r_eff, &device.tank, device.f_rf)?;
    Ok(ResponsePoint {
        q_i: q.q_i,
        q_q: q.q_q,
        c_eff,
        r_eff,
        s11,
    })
}
