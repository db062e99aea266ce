//! Indoor radio model: ITU-style path loss, Shannon-inverse transmit power and
//! the per-task delay/energy of a link at a fixed target rate.

use serde::{Deserialize, Serialize};

use super::Point3;
use crate::error::{Error, Result};

/// Radio and link-layer constants shared by every link in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    /// Carrier frequency in MHz.
    pub carrier_frequency_mhz: f64,
    pub path_loss_exponent: f64,
    /// Penetration loss in dB for a separation of 1, 2, 3, ... floors.
    /// Zero floors always costs 0 dB; separations past the end of the table
    /// extrapolate linearly from its last two entries.
    pub floor_penetration_db: Vec<f64>,
    /// Noise power in dBW.
    pub noise_power_db: f64,
    /// Interference power in dBW; `None` means a noise-limited channel.
    #[serde(default)]
    pub interference_db: Option<f64>,
    pub bandwidth_hz: f64,
    /// Required MUE-to-SBS rate in bits/s.
    pub target_rate_mue: f64,
    /// Required SBS-to-SBS rate in bits/s.
    pub target_rate_sbs: f64,
    /// Vertical distance between floors, used to count floor crossings.
    pub floor_height: f64,
    /// Size of one task in bits. A value of 1 reproduces the unit-size
    /// convention where per-task delay is exactly `1/r`.
    pub task_size_bits: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_frequency_mhz", self.carrier_frequency_mhz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("target_rate_mue", self.target_rate_mue),
            ("target_rate_sbs", self.target_rate_sbs),
            ("floor_height", self.floor_height),
            ("task_size_bits", self.task_size_bits),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("channel.{name} must be > 0")));
            }
        }
        if self.path_loss_exponent < 0.0 {
            return Err(Error::InvalidConfig(
                "channel.path_loss_exponent must be >= 0".into(),
            ));
        }
        if self.floor_penetration_db.iter().any(|l| *l < 0.0) {
            return Err(Error::InvalidConfig(
                "channel.floor_penetration_db entries must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Penetration loss for `n` floors of separation.
    pub fn floor_loss_db(&self, n: usize) -> f64 {
        let table = &self.floor_penetration_db;
        match (n, table.len()) {
            (0, _) | (_, 0) => 0.0,
            (n, len) if n <= len => table[n - 1],
            (n, 1) => table[0] * n as f64,
            (n, len) => {
                let step = table[len - 1] - table[len - 2];
                table[len - 1] + step * (n - len) as f64
            }
        }
    }

    pub fn floor_of(&self, z: f64) -> i64 {
        (z / self.floor_height + 1e-9).floor() as i64
    }

    /// Noise plus interference in watts.
    pub fn noise_plus_interference_w(&self) -> f64 {
        db_to_linear(self.noise_power_db) + self.interference_db.map_or(0.0, db_to_linear)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// `20 lg f + 10 ν lg d + L_f(n) - 28` with `f` in MHz and `d` in meters.
pub fn path_loss_db(a: Point3, b: Point3, params: &ChannelParams) -> Result<f64> {
    let d = a.distance(b);
    if d <= 0.0 {
        return Err(Error::DegenerateDistance);
    }
    let floors = (params.floor_of(a.z) - params.floor_of(b.z)).unsigned_abs() as usize;
    Ok(20.0 * params.carrier_frequency_mhz.log10()
        + 10.0 * params.path_loss_exponent * d.log10()
        + params.floor_loss_db(floors)
        - 28.0)
}

/// Transmit power needed to sustain a target rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxPower {
    pub watts: f64,
    /// False when the required power exceeds the transmitter's cap; `watts`
    /// is then the cap itself.
    pub feasible: bool,
}

/// Inverts the Shannon rate: `(2^(r/W) - 1)(σ² + I)/H`, capped at `max_power_w`.
pub fn tx_power_for_rate(rate: f64, gain: f64, max_power_w: f64, params: &ChannelParams) -> Result<TxPower> {
    if gain <= 0.0 {
        return Err(Error::NoLink);
    }
    if rate < 0.0 {
        return Err(Error::InvalidConfig("target rate must be >= 0".into()));
    }
    let required = (2f64.powf(rate / params.bandwidth_hz) - 1.0) * params.noise_plus_interference_w() / gain;
    if required > max_power_w {
        Ok(TxPower {
            watts: max_power_w,
            feasible: false,
        })
    } else {
        Ok(TxPower {
            watts: required,
            feasible: true,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    /// Seconds per task.
    pub delay: f64,
    /// Joules per task.
    pub energy: f64,
    pub power_w: f64,
    pub feasible: bool,
}

impl LinkMetrics {
    /// Delay plus energy folded into delay units.
    pub fn cost_per_task(&self, gamma: f64) -> f64 {
        self.delay + gamma * self.energy
    }
}

/// Per-task delay and energy of a transmission from `tx` to `rx` at `rate`.
pub fn link_metrics(
    tx: Point3,
    tx_max_power_dbm: f64,
    rx: Point3,
    rate: f64,
    params: &ChannelParams,
) -> Result<LinkMetrics> {
    if rate <= 0.0 {
        return Err(Error::InvalidConfig("target rate must be > 0".into()));
    }
    let loss = path_loss_db(tx, rx, params)?;
    let gain = db_to_linear(-loss);
    let power = tx_power_for_rate(rate, gain, dbm_to_watts(tx_max_power_dbm), params)?;
    let delay = params.task_size_bits / rate;
    Ok(LinkMetrics {
        delay,
        energy: power.watts * delay,
        power_w: power.watts,
        feasible: power.feasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::table_one_channel;
    use approx::assert_relative_eq;

    fn params() -> ChannelParams {
        ChannelParams {
            task_size_bits: 1.0,
            ..table_one_channel()
        }
    }

    fn p(x: f64, y: f64, z: f64) -> Point3 {
        Point3 { x, y, z }
    }

    #[test]
    fn path_loss_hand_values() {
        let c = params();
        let l10 = path_loss_db(p(0.0, 0.0, 0.0), p(10.0, 0.0, 0.0), &c).unwrap();
        assert_relative_eq!(l10, 64.085, epsilon = 1e-3);
        let l1 = path_loss_db(p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), &c).unwrap();
        assert_relative_eq!(l1, 31.085, epsilon = 1e-3);
    }

    #[test]
    fn one_floor_adds_nine_db() {
        let c = params();
        let same = path_loss_db(p(0.0, 0.0, 0.0), p(10.0, 0.0, 0.0), &c).unwrap();
        // Same 3D distance, one floor apart.
        let up = path_loss_db(p(0.0, 0.0, 0.0), p(0.0, 0.0, 10.0), &c).unwrap();
        assert_relative_eq!(up - same, 9.0, epsilon = 1e-9);
    }

    #[test]
    fn floor_table_extrapolates() {
        let c = params();
        assert_eq!(c.floor_loss_db(0), 0.0);
        assert_eq!(c.floor_loss_db(3), 24.0);
        assert_eq!(c.floor_loss_db(4), 36.0);
    }

    #[test]
    fn coincident_points_are_rejected() {
        let c = params();
        let a = p(1.0, 2.0, 3.0);
        assert!(matches!(path_loss_db(a, a, &c), Err(Error::DegenerateDistance)));
    }

    #[test]
    fn tx_power_limits() {
        let c = ChannelParams {
            interference_db: None,
            ..params()
        };
        let zero = tx_power_for_rate(0.0, 1e-6, 1.0, &c).unwrap();
        assert_eq!(zero.watts, 0.0);
        let tiny = tx_power_for_rate(1e-3, 1e-6, 1.0, &c).unwrap();
        assert!(tiny.watts < 1e-9);

        let at_w = tx_power_for_rate(c.bandwidth_hz, 1e-6, 1.0, &c).unwrap();
        assert_relative_eq!(
            at_w.watts,
            db_to_linear(c.noise_power_db) / 1e-6,
            max_relative = 1e-12
        );

        let capped = tx_power_for_rate(c.bandwidth_hz, 1e-20, 0.01, &c).unwrap();
        assert!(!capped.feasible);
        assert_eq!(capped.watts, 0.01);

        assert!(matches!(tx_power_for_rate(1.0, 0.0, 1.0, &c), Err(Error::NoLink)));
    }

    #[test]
    fn link_delay_is_inverse_rate() {
        let c = params();
        let m = link_metrics(p(0.0, 0.0, 0.0), 10.0, p(5.0, 0.0, 0.0), 25e6, &c).unwrap();
        assert_relative_eq!(m.delay, 4e-8, max_relative = 1e-12);
        assert!(m.feasible);
        let m2 = link_metrics(p(0.0, 0.0, 0.0), 10.0, p(5.0, 0.0, 0.0), 50e6, &c).unwrap();
        assert_eq!(m2.delay * 2.0, m.delay);
        assert_relative_eq!(m.energy, m.power_w / 25e6, max_relative = 1e-12);
    }

    #[test]
    fn far_link_hits_power_cap() {
        let c = params();
        // Four floors and 150 m apart is beyond a 10 dBm MUE.
        let m = link_metrics(p(0.0, 0.0, 0.0), 10.0, p(150.0, 0.0, 40.0), 25e6, &c).unwrap();
        assert!(!m.feasible);
        assert_relative_eq!(m.power_w, 0.01, max_relative = 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn path_loss_monotone(d1 in 0.5f64..300.0, dd in 0.0f64..100.0, floors in 0usize..4) {
            let c = params();
            let z = floors as f64 * c.floor_height;
            let near = path_loss_db(p(0.0, 0.0, 0.0), p(d1, 0.0, z), &c).unwrap();
            let far = path_loss_db(p(0.0, 0.0, 0.0), p(d1 + dd, 0.0, z), &c).unwrap();
            proptest::prop_assert!(far >= near);
            let above = path_loss_db(p(0.0, 0.0, 0.0), p(d1, 0.0, z + c.floor_height), &c).unwrap();
            proptest::prop_assert!(above >= near);
        }

        #[test]
        fn tx_power_monotone(r in 1e3f64..1e8, dr in 1.0f64..1e7, h in 1e-12f64..1e-3, k in 1.01f64..10.0) {
            let c = params();
            let base = tx_power_for_rate(r, h, f64::INFINITY, &c).unwrap().watts;
            let faster = tx_power_for_rate(r + dr, h, f64::INFINITY, &c).unwrap().watts;
            let better = tx_power_for_rate(r, h * k, f64::INFINITY, &c).unwrap().watts;
            proptest::prop_assert!(faster > base);
            proptest::prop_assert!(better < base);
        }
    }
}
