//! Nonlinear battery model: SOC-dependent losses, efficiencies, power limits,
//! the SOC transition and the degradation cost.
//!
//! Units: power in kW, energy in kWh, `v_r` in volts, `r_in`/`k_b` in ohms.
//! The loss expressions are used as dimensionally self-consistent in these
//! units; the `1e3` factors convert the `R P^2 / V^2` terms to kW.
//!
//! Sign convention: `p > 0` discharges, `p < 0` charges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SOC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    /// Internal resistance (ohm).
    pub r_in: f64,
    /// Polarisation constant.
    pub k_b: f64,
    /// Rated voltage (V).
    pub v_r: f64,
    /// Rated capacity (kWh).
    pub c_r: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Maximum discharge power (kW, positive).
    pub p_d_max: f64,
    /// Most negative charge power (kW, negative).
    pub p_c_min: f64,
    pub eta_d_min: f64,
    pub eta_c_min: f64,
    /// Degradation price ($/kWh).
    pub c_bat: f64,
}

impl Default for BatteryParams {
    /// Shipped profile for the 10-bus system. Capacity, SOC window, power
    /// ratings and `c_bat` are the published system values; `r_in`, `k_b`,
    /// `v_r` and the efficiency minima are assumed (not published) and were
    /// chosen so every loss/efficiency invariant holds on [0.3, 1.0].
    fn default() -> Self {
        BatteryParams {
            r_in: 0.005,
            k_b: 0.0005,
            v_r: 48.0,
            c_r: 60.0,
            soc_min: 0.3,
            soc_max: 1.0,
            p_d_max: 12.0,
            p_c_min: -12.0,
            eta_d_min: 0.95,
            eta_c_min: 0.95,
            c_bat: 0.059,
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Validation(format!("battery: {m}")));
        let all = [
            self.r_in,
            self.k_b,
            self.v_r,
            self.c_r,
            self.soc_min,
            self.soc_max,
            self.p_d_max,
            self.p_c_min,
            self.eta_d_min,
            self.eta_c_min,
            self.c_bat,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return fail("non-finite parameter");
        }
        if !(0.0 < self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return fail("require 0 < soc_min < soc_max <= 1");
        }
        if !(self.p_d_max > 0.0 && self.p_c_min < 0.0) {
            return fail("require p_d_max > 0 > p_c_min");
        }
        if !(self.r_in > 0.0 && self.k_b > 0.0 && self.v_r > 0.0 && self.c_r > 0.0) {
            return fail("require r_in, k_b, v_r, c_r > 0");
        }
        if !(0.0 < self.eta_d_min && self.eta_d_min < 1.0) {
            return fail("require 0 < eta_d_min < 1");
        }
        if !(0.0 < self.eta_c_min && self.eta_c_min < 1.0) {
            return fail("require 0 < eta_c_min < 1");
        }
        if self.c_bat < 0.0 {
            return fail("require c_bat >= 0");
        }
        Ok(())
    }

    fn check_soc(&self, soc: f64) -> Result<()> {
        if !(soc >= self.soc_min - SOC_TOL && soc <= self.soc_max + SOC_TOL) {
            return Err(Error::Domain(format!(
                "soc {soc} outside [{}, {}]",
                self.soc_min, self.soc_max
            )));
        }
        Ok(())
    }

    fn v2(&self) -> f64 {
        self.v_r * self.v_r
    }

    /// Coefficient of the linear loss term, shared by both modes.
    fn linear_coeff(&self, soc: f64) -> f64 {
        1e3 * self.c_r * self.k_b * (1.0 - soc) / (soc * self.v2())
    }

    fn discharge_loss_raw(&self, soc: f64, p: f64) -> f64 {
        1e3 * (self.r_in + self.k_b / soc) / self.v2() * p * p + self.linear_coeff(soc) * p
    }

    fn charge_loss_raw(&self, soc: f64, p: f64) -> f64 {
        1e3 * (self.r_in + self.k_b / (1.1 - soc)) / self.v2() * p * p - self.linear_coeff(soc) * p
    }

    /// Loss for either sign of `p`, zero at `p == 0`. No domain checks.
    pub(crate) fn loss_raw(&self, soc: f64, p: f64) -> f64 {
        if p > 0.0 {
            self.discharge_loss_raw(soc, p)
        } else if p < 0.0 {
            self.charge_loss_raw(soc, p)
        } else {
            0.0
        }
    }
}

/// Discharging loss (kW) at power `p > 0`.
pub fn discharge_loss(params: &BatteryParams, soc: f64, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::Domain(format!("discharge power must be > 0, got {p}")));
    }
    params.check_soc(soc)?;
    Ok(params.discharge_loss_raw(soc, p))
}

/// Charging loss (kW) at power `p < 0`.
pub fn charge_loss(params: &BatteryParams, soc: f64, p: f64) -> Result<f64> {
    if !(p < 0.0) {
        return Err(Error::Domain(format!("charge power must be < 0, got {p}")));
    }
    params.check_soc(soc)?;
    Ok(params.charge_loss_raw(soc, p))
}

/// Discharge efficiency `p / (p + L)` for `p > 0`, charge efficiency
/// `1 + L / p` for `p < 0`. Undefined at zero power.
pub fn efficiency(params: &BatteryParams, soc: f64, p: f64) -> Result<f64> {
    if p > 0.0 {
        let loss = discharge_loss(params, soc, p)?;
        Ok(p / (p + loss))
    } else if p < 0.0 {
        let loss = charge_loss(params, soc, p)?;
        Ok(1.0 + loss / p)
    } else {
        Err(Error::Domain("efficiency undefined at zero power".into()))
    }
}

/// SOC-dependent power window `(p_discharge_max, p_charge_min)` in kW: the
/// efficiency-limited bounds intersected with the converter ratings.
pub fn power_bounds(params: &BatteryParams, soc: f64) -> Result<(f64, f64)> {
    if !(soc > 0.0) {
        return Err(Error::Domain(format!("soc must be > 0, got {soc}")));
    }
    Ok((
        discharge_limit(params, soc).min(params.p_d_max),
        charge_limit(params, soc).max(params.p_c_min),
    ))
}

/// Efficiency-limited discharge bound before the rating cap.
pub fn discharge_limit(params: &BatteryParams, soc: f64) -> f64 {
    let v2 = params.v2();
    let num = v2 * soc * (1.0 / params.eta_d_min - 1.0)
        - 1e3 * params.c_r * params.k_b * (1.0 - soc);
    num / (1e3 * (params.r_in * soc + params.k_b))
}

/// Efficiency-limited charge bound before the rating cap.
pub fn charge_limit(params: &BatteryParams, soc: f64) -> f64 {
    let v2 = params.v2();
    let num = 1e3 * params.c_r * params.k_b * (1.0 - soc) - soc * v2 * (1.0 - params.eta_c_min);
    num / (1e3 * soc * (params.r_in + params.k_b / (1.1 - soc)))
}

/// Next SOC after applying `p` for `dt` hours. Not clamped.
pub fn soc_step(params: &BatteryParams, soc: f64, p: f64, dt: f64) -> f64 {
    if p > 0.0 {
        soc - (p + params.discharge_loss_raw(soc, p)) / params.c_r * dt
    } else if p < 0.0 {
        soc + (-p - params.charge_loss_raw(soc, p)) / params.c_r * dt
    } else {
        soc
    }
}

/// Degradation cost ($) of applying `p` for `dt` hours; zero when idle.
pub fn degradation_cost(params: &BatteryParams, soc: f64, p: f64, dt: f64) -> f64 {
    if p > 0.0 {
        params.c_bat * (p + params.discharge_loss_raw(soc, p)) * dt
    } else if p < 0.0 {
        params.c_bat * params.charge_loss_raw(soc, p) * dt
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Loss formulas written out independently of the implementation.
    fn oracle_ld(soc: f64, p: f64) -> f64 {
        let p_ = BatteryParams::default();
        let v2 = 48.0f64 * 48.0;
        1000.0 * (p_.r_in + p_.k_b / soc) / v2 * p * p
            + 1000.0 * 60.0 * p_.k_b * (1.0 - soc) / (soc * v2) * p
    }

    fn oracle_lc(soc: f64, p: f64) -> f64 {
        let p_ = BatteryParams::default();
        let v2 = 48.0f64 * 48.0;
        1000.0 * (p_.r_in + p_.k_b / (1.1 - soc)) / v2 * p * p
            - 1000.0 * 60.0 * p_.k_b * (1.0 - soc) / (soc * v2) * p
    }

    #[test]
    fn default_params_are_valid() {
        BatteryParams::default().validate().unwrap();
    }

    #[test]
    fn discharge_loss_reference_point() {
        let b = BatteryParams::default();
        // 1e3*(0.005+0.001)/2304*36 + 1e3*60*0.0005*0.5/(0.5*2304)*6
        let expected = 0.09375 + 0.078125;
        assert!((oracle_ld(0.5, 6.0) - expected).abs() < 1e-15);
        let got = discharge_loss(&b, 0.5, 6.0).unwrap();
        assert!((got - expected).abs() < 1e-14, "{got}");
    }

    #[test]
    fn charge_loss_reference_point() {
        let b = BatteryParams::default();
        let expected = oracle_lc(0.5, -6.0);
        // 1e3*(0.005+0.0005/0.6)/2304*36 + 0.078125
        let hand = 1000.0 * (0.005 + 0.0005 / 0.6) / 2304.0 * 36.0 + 0.078125;
        assert!((expected - hand).abs() < 1e-14);
        assert!((charge_loss(&b, 0.5, -6.0).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn loss_vanishes_at_zero_power() {
        let b = BatteryParams::default();
        assert!(discharge_loss(&b, 0.6, 1e-12).unwrap() < 1e-11);
        assert!(charge_loss(&b, 0.6, -1e-12).unwrap() < 1e-11);
    }

    #[test]
    fn full_battery_drops_linear_term() {
        let b = BatteryParams::default();
        let p = 5.0;
        let d = discharge_loss(&b, 1.0, p).unwrap();
        assert!((d - 1e3 * (b.r_in + b.k_b) / (b.v_r * b.v_r) * p * p).abs() < 1e-14);
        let c = charge_loss(&b, 1.0, -p).unwrap();
        assert!((c - 1e3 * (b.r_in + b.k_b / 0.1) / (b.v_r * b.v_r) * p * p).abs() < 1e-13);
    }

    #[test]
    fn domain_errors() {
        let b = BatteryParams::default();
        assert!(discharge_loss(&b, 0.5, 0.0).is_err());
        assert!(discharge_loss(&b, 0.5, -1.0).is_err());
        assert!(discharge_loss(&b, 0.2, 1.0).is_err());
        assert!(charge_loss(&b, 0.5, 0.0).is_err());
        assert!(charge_loss(&b, 0.5, 2.0).is_err());
        assert!(efficiency(&b, 0.5, 0.0).is_err());
        assert!(power_bounds(&b, 0.0).is_err());
        assert!(power_bounds(&b, -0.1).is_err());
    }

    #[test]
    fn efficiencies_compose_losses() {
        let b = BatteryParams::default();
        let ed = efficiency(&b, 0.5, 6.0).unwrap();
        assert!((ed - 6.0 / (6.0 + oracle_ld(0.5, 6.0))).abs() < 1e-15);
        let ec = efficiency(&b, 0.5, -6.0).unwrap();
        assert!((ec - (1.0 + oracle_lc(0.5, -6.0) / -6.0)).abs() < 1e-15);
        assert!(ec < 1.0 && ed < 1.0);
    }

    #[test]
    fn near_lossless_efficiency_tends_to_one() {
        let b = BatteryParams {
            r_in: 1e-12,
            k_b: 1e-12,
            ..BatteryParams::default()
        };
        assert!((efficiency(&b, 0.5, 6.0).unwrap() - 1.0).abs() < 1e-9);
        assert!((efficiency(&b, 0.5, -6.0).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn power_bounds_at_full_charge() {
        let b = BatteryParams::default();
        let (pd, pc) = power_bounds(&b, 1.0).unwrap();
        let eq15_full = 2304.0 * (1.0 / 0.95 - 1.0) / (1000.0 * (0.005 + 0.0005));
        assert!(eq15_full > 12.0);
        assert_eq!(pd, 12.0);
        // Charge side binds on the efficiency limit at full charge.
        let eq16_full = -(2304.0 * 0.05) / (1000.0 * (0.005 + 0.0005 / 0.1));
        assert!((pc - eq16_full).abs() < 1e-12);
        assert!(pc > -12.0);
    }

    #[test]
    fn power_bounds_at_low_soc() {
        let b = BatteryParams::default();
        let soc = 0.3;
        let eq15 = (2304.0 * soc * (1.0 / 0.95 - 1.0) - 1000.0 * 60.0 * 0.0005 * (1.0 - soc))
            / (1000.0 * (0.005 * soc + 0.0005));
        let eq16 = (1000.0 * 60.0 * 0.0005 * (1.0 - soc) - soc * 2304.0 * 0.05)
            / (1000.0 * soc * (0.005 + 0.0005 / (1.1 - soc)));
        let (pd, pc) = power_bounds(&b, soc).unwrap();
        assert!((pd - eq15).abs() < 1e-12 && pd < 12.0);
        assert!((pc - eq16).abs() < 1e-12 && pc > -12.0);
    }

    #[test]
    fn loose_efficiency_saturates_at_rating() {
        let b = BatteryParams {
            eta_d_min: 1e-6,
            eta_c_min: 1e-6,
            ..BatteryParams::default()
        };
        let (pd, pc) = power_bounds(&b, 0.5).unwrap();
        assert_eq!(pd, b.p_d_max);
        assert_eq!(pc, b.p_c_min);
    }

    #[test]
    fn soc_step_cases() {
        let b = BatteryParams::default();
        assert_eq!(soc_step(&b, 0.5, 0.0, 1.0), 0.5);
        let lossless = BatteryParams {
            r_in: 0.0,
            k_b: 0.0,
            ..BatteryParams::default()
        };
        assert!((soc_step(&lossless, 0.5, 6.0, 1.0) - 0.4).abs() < 1e-15);
        let expected = 0.5 + (6.0 - oracle_lc(0.5, -6.0)) / 60.0;
        assert!((soc_step(&b, 0.5, -6.0, 1.0) - expected).abs() < 1e-15);
    }

    #[test]
    fn degradation_cases() {
        let b = BatteryParams::default();
        assert_eq!(b.c_bat, 0.059);
        assert_eq!(degradation_cost(&b, 0.5, 0.0, 1.0), 0.0);
        let expected = 0.059 * (6.0 + oracle_ld(0.5, 6.0));
        assert!((degradation_cost(&b, 0.5, 6.0, 1.0) - expected).abs() < 1e-15);
        let expected_c = 0.059 * oracle_lc(0.5, -6.0);
        assert!((degradation_cost(&b, 0.5, -6.0, 1.0) - expected_c).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_params() {
        let bad = [
            BatteryParams {
                soc_min: 0.0,
                ..Default::default()
            },
            BatteryParams {
                soc_max: 1.2,
                ..Default::default()
            },
            BatteryParams {
                p_c_min: 1.0,
                ..Default::default()
            },
            BatteryParams {
                eta_d_min: 1.0,
                ..Default::default()
            },
            BatteryParams {
                k_b: 0.0,
                ..Default::default()
            },
        ];
        for b in bad {
            assert!(b.validate().is_err(), "{b:?}");
        }
    }
}
