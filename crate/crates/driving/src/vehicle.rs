//! Kinematic bicycle model and fixed-horizon rollouts.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub pos_x: f64,
    pub pos_y: f64,
    pub heading: f64,
    pub speed: f64,
}

impl VehicleState {
    pub fn new(pos_x: f64, pos_y: f64, heading: f64, speed: f64) -> Self {
        Self {
            pos_x,
            pos_y,
            heading,
            speed,
        }
    }
}

/// Constant steering angle (rad) and acceleration (m/s²) held over a plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvAction {
    pub steering: f64,
    pub accel: f64,
}

/// Human driver's constant steering angle; speed is held.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HvAction {
    pub steering: f64,
}

/// One explicit step of the kinematic bicycle (rear-axle reference). Heading
/// and speed change at constant rates over the step; position advances along
/// the midpoint heading at the average speed. Speed is clamped at zero.
pub fn bicycle_step(state: VehicleState, steering: f64, accel: f64, dt: f64, wheelbase: f64) -> VehicleState {
    let v = state.speed;
    let speed = (v + accel * dt).max(0.0);
    let v_mid = 0.5 * (v + speed);
    let heading = state.heading + v_mid / wheelbase * steering.tan() * dt;
    let mid = 0.5 * (state.heading + heading);
    VehicleState {
        pos_x: state.pos_x + v_mid * mid.cos() * dt,
        pos_y: state.pos_y + v_mid * mid.sin() * dt,
        heading,
        speed,
    }
}

/// `steps + 1` states starting at `start`, holding the inputs fixed.
pub fn rollout(start: VehicleState, steering: f64, accel: f64, dt: f64, steps: usize, wheelbase: f64) -> Vec<VehicleState> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = start;
    out.push(s);
    for _ in 0..steps {
        s = bicycle_step(s, steering, accel, dt, wheelbase);
        out.push(s);
    }
    out
}
