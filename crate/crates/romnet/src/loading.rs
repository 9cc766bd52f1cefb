//! Loading schedule of one flight cycle.
//!
//! The scaled rotation speed ω(t) is piecewise linear over 11 equal steps:
//! a take-off ramp 0→1 over steps 1-3, a cruise plateau at 1 over steps
//! 4-8, and a landing ramp 1→0 over steps 9-11. Temperature and pressure
//! loads blend between their rest and maximum values with ω(t).

use serde::{Deserialize, Serialize};

pub const N_STEPS: usize = 11;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CycleSchedule {
    /// Grid of 12 time points from 0 to the cycle duration.
    pub times: Vec<f64>,
    /// Scaled rotation speed at the grid points, maximum 1.
    pub omega: Vec<f64>,
    /// Physical rotation speed at ω = 1, in rad/s.
    pub rotation_max: f64,
    /// Pressure on the loaded face at rest (gauge; zero keeps the unloaded
    /// state stress-free).
    pub pressure_rest: f64,
    /// Pressure on the loaded face at maximum rotation speed.
    pub pressure_max: f64,
}

impl CycleSchedule {
    pub fn standard(cycle_duration: f64, rotation_max: f64, pressure_rest: f64, pressure_max: f64) -> Self {
        let times = (0..=N_STEPS)
            .map(|k| cycle_duration * k as f64 / N_STEPS as f64)
            .collect();
        let omega = vec![
            0.0,
            1.0 / 3.0,
            2.0 / 3.0,
            1.0,
            1.0,
            1.0,
            1.0,
            1.0,
            1.0,
            2.0 / 3.0,
            1.0 / 3.0,
            0.0,
        ];
        CycleSchedule {
            times,
            omega,
            rotation_max,
            pressure_rest,
            pressure_max,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn cycle_duration(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Piecewise-linear ω(t).
    pub fn omega_at(&self, t: f64) -> f64 {
        let times = &self.times;
        if t <= times[0] {
            return self.omega[0];
        }
        if t >= *times.last().unwrap() {
            return *self.omega.last().unwrap();
        }
        let i = times.partition_point(|&tk| tk <= t).clamp(1, times.len() - 1);
        let (t0, t1) = (times[i - 1], times[i]);
        let f = (t - t0) / (t1 - t0);
        self.omega[i - 1] * (1.0 - f) + self.omega[i] * f
    }

    pub fn pressure_at(&self, t: f64) -> f64 {
        let w = self.omega_at(t);
        (1.0 - w) * self.pressure_rest + w * self.pressure_max
    }

    /// First grid index at which ω reaches its maximum (the start of the
    /// cruise plateau); the von Mises quantity of interest is sampled here.
    pub fn max_speed_step(&self) -> usize {
        let max = self.omega.iter().fold(f64::NEG_INFINITY, |m, &w| m.max(w));
        self.omega.iter().position(|&w| w == max).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn standard_cycle_shape() {
        let s = CycleSchedule::standard(110.0, 700.0, 0.0, 0.6);
        assert_eq!(s.n_steps(), 11);
        assert_eq!(s.times[0], 0.0);
        assert_relative_eq!(s.cycle_duration(), 110.0);
        assert_eq!(s.omega[0], 0.0);
        assert_eq!(*s.omega.last().unwrap(), 0.0);
        assert_eq!(s.max_speed_step(), 3);
        // Strictly increasing grid.
        for w in s.times.windows(2) {
            assert!(w[1] > w[0]);
        }
        // Interpolation hits the grid values and ramps linearly in between.
        assert_relative_eq!(s.omega_at(10.0), 1.0 / 3.0);
        assert_relative_eq!(s.omega_at(5.0), 1.0 / 6.0);
        assert_relative_eq!(s.omega_at(50.0), 1.0);
        assert_relative_eq!(s.omega_at(110.0), 0.0);
        assert_relative_eq!(s.pressure_at(30.0), 0.6);
    }
}
