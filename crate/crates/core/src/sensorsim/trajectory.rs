use std::f64::consts::PI;

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RobotState;
use crate::geometry::rotate2;
use crate::scene::Heightfield;

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("command segment {0} has non-positive duration")]
    InvalidSegment(usize),
    #[error("command profile is empty")]
    EmptyProfile,
    #[error("start pose lies outside the heightfield")]
    StartOutside,
}

/// Body-frame command held for `duration` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandSegment {
    pub vx: f64,
    pub vy: f64,
    pub wz: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StartPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandProfile {
    #[serde(default)]
    pub start: StartPose,
    pub segments: Vec<CommandSegment>,
}

impl CommandProfile {
    pub fn constant(vx: f64, vy: f64, wz: f64, duration: f64) -> Self {
        Self { start: StartPose::default(), segments: vec![CommandSegment { vx, vy, wz, duration }] }
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if self.segments.is_empty() {
            return Err(TrajectoryError::EmptyProfile);
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.duration > 0.0 && s.duration.is_finite()) {
                return Err(TrajectoryError::InvalidSegment(i));
            }
        }
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// `(start, end, segment)` for every segment.
    pub fn windows(&self) -> Vec<(f64, f64, CommandSegment)> {
        let mut t = 0.0;
        self.segments
            .iter()
            .map(|s| {
                let w = (t, t + s.duration, *s);
                t += s.duration;
                w
            })
            .collect()
    }

    /// Command active at `t` (the last segment holds past the end).
    pub fn command_at(&self, t: f64) -> [f64; 3] {
        let mut end = 0.0;
        for s in &self.segments {
            end += s.duration;
            if t < end {
                return [s.vx, s.vy, s.wz];
            }
        }
        self.segments.last().map_or([0.0; 3], |s| [s.vx, s.vy, s.wz])
    }
}

/// Parameters of the kinematic trot used in place of legged dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitParams {
    /// Stride frequency in Hz.
    pub frequency: f64,
    /// Fraction of the stride each foot is in stance.
    pub duty: f64,
    /// Thigh sweep amplitude per m/s of forward command.
    pub stride_gain: f64,
    /// Peak extra calf flexion during swing.
    pub swing_lift: f64,
    pub nominal_height: f64,
    /// Standing joint angles for one leg (hip, thigh, calf).
    pub stance_pose: [f64; 3],
    /// First-order lag from command to body velocity; zero tracks exactly.
    pub velocity_time_constant: f64,
    /// Gait-induced oscillation amplitude on (vx, vy, wz).
    pub sway: [f64; 3],
    pub pitch_time_constant: f64,
    /// Lag of the trunk height behind the terrain under the feet.
    pub height_time_constant: f64,
    pub footprint_half_length: f64,
    pub footprint_half_width: f64,
    /// Upper bound of a random phase offset drawn once per run.
    pub phase_jitter: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        Self {
            frequency: 2.0,
            duty: 0.5,
            stride_gain: 0.3,
            swing_lift: 0.5,
            nominal_height: 0.30,
            stance_pose: [0.0, 0.85, -1.7],
            velocity_time_constant: 0.0,
            sway: [0.0; 3],
            pitch_time_constant: 0.15,
            height_time_constant: 0.1,
            footprint_half_length: 0.19,
            footprint_half_width: 0.13,
            phase_jitter: 0.0,
        }
    }
}

impl GaitParams {
    pub fn default_joint_positions(&self) -> [f64; 12] {
        let mut q = [0.0; 12];
        for leg in 0..4 {
            q[3 * leg..3 * leg + 3].copy_from_slice(&self.stance_pose);
        }
        q
    }

    /// Trot: diagonal pairs FL/RR and FR/RL half a stride apart.
    fn phase(&self, leg: usize, t: f64, offset: f64) -> f64 {
        const LEG_OFFSET: [f64; 4] = [0.0, 0.5, 0.5, 0.0];
        // snap values a hair below a whole stride onto the boundary
        let x = self.frequency * t + LEG_OFFSET[leg] + offset;
        (x - (x + 1e-9).floor()).max(0.0)
    }

    fn in_stance(&self, phi: f64) -> bool {
        phi < self.duty - 1e-9
    }

    fn joint_positions(&self, t: f64, forward_cmd: f64, offset: f64) -> [f64; 12] {
        let mut q = self.default_joint_positions();
        let amp = self.stride_gain * forward_cmd;
        for leg in 0..4 {
            let phi = self.phase(leg, t, offset);
            if self.in_stance(phi) {
                let s = phi / self.duty;
                q[3 * leg + 1] += amp * (2.0 * s - 1.0);
            } else {
                let s = (phi - self.duty) / (1.0 - self.duty);
                q[3 * leg + 1] += amp * (2.0 * (0.5 + 0.5 * (PI * s).cos()) - 1.0);
                q[3 * leg + 2] -= self.swing_lift * (PI * s).sin();
            }
        }
        q
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<RobotState>,
    /// Set when the motion left the heightfield and the stream was cut short.
    pub truncated: bool,
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        self.states.last().map_or(0.0, |s| s.t)
    }
}

/// Integrates the command profile kinematically over the terrain.
///
/// Planar motion integrates the body-frame command rotated by yaw, split
/// exactly at segment boundaries. Trunk height is the mean terrain height
/// under the four footprint corners plus the nominal height; pitch and roll
/// follow the footprint slope through a first-order lag. Velocities are
/// forward differences of the resulting poses, expressed in the body frame.
pub fn simulate_trajectory<R: Rng>(
    profile: &CommandProfile,
    hf: &Heightfield,
    dt: f64,
    gait: &GaitParams,
    rng: &mut R,
) -> Result<Trajectory, TrajectoryError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(TrajectoryError::InvalidStep(dt));
    }
    profile.validate()?;
    let total = profile.total_duration();
    let ratio = total / dt;
    let n_steps = if (ratio - ratio.round()).abs() < 1e-6 { ratio.round() as usize } else { ratio.ceil() as usize };
    let times: Vec<f64> = (0..=n_steps)
        .map(|k| if k == n_steps { total } else { k as f64 * dt })
        .collect();
    let phase_offset = if gait.phase_jitter > 0.0 { rng.random_range(0.0..gait.phase_jitter) } else { 0.0 };

    // planar integration
    let windows = profile.windows();
    let mut xy = Vec::with_capacity(times.len());
    let mut yaw = Vec::with_capacity(times.len());
    let mut p = Vector2::new(profile.start.x, profile.start.y);
    let mut heading = profile.start.yaw;
    let mut vel = Vector3::from(profile.command_at(0.0));
    if gait.velocity_time_constant > 0.0 {
        vel = Vector3::zeros();
    }
    xy.push(p);
    yaw.push(heading);
    for k in 0..n_steps {
        let (a, b) = (times[k], times[k + 1]);
        let mut t = a;
        while t < b {
            // next segment boundary inside the step
            let boundary = windows
                .iter()
                .map(|w| w.1)
                .find(|&end| end > t + 1e-12 && end < b - 1e-12)
                .unwrap_or(b);
            let h = boundary - t;
            let cmd = Vector3::from(profile.command_at(t + 0.5 * h));
            if gait.velocity_time_constant > 0.0 {
                vel += (cmd - vel) * (1.0 - (-h / gait.velocity_time_constant).exp());
            } else {
                vel = cmd;
            }
            let sway = gait_sway(gait, t, phase_offset);
            let v = vel + sway;
            p += rotate2(heading, Vector2::new(v.x, v.y)) * h;
            heading += v.z * h;
            t = boundary;
        }
        xy.push(p);
        yaw.push(heading);
    }

    // terrain following
    let mut states: Vec<RobotState> = Vec::with_capacity(times.len());
    let mut truncated = false;
    let mut pitch = 0.0;
    let mut roll = 0.0;
    let mut level = 0.0;
    let mut positions = Vec::with_capacity(times.len());
    let mut orientations = Vec::with_capacity(times.len());
    let mut ground = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let Some(foot_heights) = footprint_heights(hf, gait, xy[k], yaw[k]) else {
            if k == 0 {
                return Err(TrajectoryError::StartOutside);
            }
            truncated = true;
            break;
        };
        let [fl, fr, rl, rr] = foot_heights;
        let mean = 0.25 * (fl + fr + rl + rr);
        let pitch_target = -((0.5 * (fl + fr) - 0.5 * (rl + rr)).atan2(2.0 * gait.footprint_half_length));
        let roll_target = (0.5 * (fl + rl) - 0.5 * (fr + rr)).atan2(2.0 * gait.footprint_half_width);
        if k == 0 || gait.pitch_time_constant <= 0.0 {
            pitch = pitch_target;
            roll = roll_target;
        } else {
            let alpha = 1.0 - (-(times[k] - times[k - 1]) / gait.pitch_time_constant).exp();
            pitch += (pitch_target - pitch) * alpha;
            roll += (roll_target - roll) * alpha;
        }
        if k == 0 || gait.height_time_constant <= 0.0 {
            level = mean;
        } else {
            level += (mean - level) * (1.0 - (-(times[k] - times[k - 1]) / gait.height_time_constant).exp());
        }
        positions.push(Vector3::new(xy[k].x, xy[k].y, level + gait.nominal_height));
        orientations.push(UnitQuaternion::from_euler_angles(roll, pitch, yaw[k]));
        ground.push(mean);
    }

    let n = positions.len();
    let mut prev_contacts = [false; 4];
    let mut prev_air = [0.0; 4];
    let mut last_air = [0.0; 4];
    for k in 0..n {
        let t = times[k];
        let (lin_world, ang_body) = if k + 1 < n {
            let h = times[k + 1] - t;
            let lin = (positions[k + 1] - positions[k]) / h;
            let rel = orientations[k].inverse() * orientations[k + 1];
            (lin, rel.scaled_axis() / h)
        } else if k > 0 {
            let prev = &states[k - 1];
            // hold the last body-frame velocity
            (orientations[k] * prev.linear_velocity, prev.angular_velocity)
        } else {
            (Vector3::zeros(), Vector3::zeros())
        };
        let forward_cmd = profile.command_at(t)[0];
        let q = gait.joint_positions(t, forward_cmd, phase_offset);
        let qm = gait.joint_positions(t - dt, forward_cmd, phase_offset);
        let qp = gait.joint_positions(t + dt, forward_cmd, phase_offset);
        let mut qd = [0.0; 12];
        let mut qdd = [0.0; 12];
        for j in 0..12 {
            qd[j] = (qp[j] - qm[j]) / (2.0 * dt);
            qdd[j] = (qp[j] - 2.0 * q[j] + qm[j]) / (dt * dt);
        }
        let mut contacts = [false; 4];
        let mut air = [0.0; 4];
        let mut first = [false; 4];
        for leg in 0..4 {
            let phi = gait.phase(leg, t, phase_offset);
            contacts[leg] = gait.in_stance(phi);
            if contacts[leg] {
                if k > 0 && !prev_contacts[leg] {
                    first[leg] = true;
                    last_air[leg] = prev_air[leg] + (t - times[k - 1]);
                }
            } else {
                air[leg] = (phi - gait.duty) / gait.frequency;
            }
        }
        prev_contacts = contacts;
        prev_air = air;
        states.push(RobotState {
            t,
            position: positions[k],
            orientation: orientations[k],
            linear_velocity: orientations[k].inverse() * lin_world,
            angular_velocity: ang_body,
            joint_positions: q,
            joint_velocities: qd,
            joint_accelerations: qdd,
            foot_contacts: contacts,
            foot_air_times: air,
            first_contact: first,
            last_air_times: last_air,
            trunk_height: positions[k].z - ground[k],
        });
    }
    Ok(Trajectory { states, truncated })
}

fn gait_sway(gait: &GaitParams, t: f64, offset: f64) -> Vector3<f64> {
    if gait.sway == [0.0; 3] {
        return Vector3::zeros();
    }
    let w = 2.0 * PI * gait.frequency;
    let phase = 2.0 * PI * offset;
    Vector3::new(
        gait.sway[0] * (2.0 * w * t + phase).sin(),
        gait.sway[1] * (w * t + phase).sin(),
        gait.sway[2] * (w * t + phase).sin(),
    )
}

/// Terrain under the FL, FR, RL, RR footprint corners.
fn footprint_heights(hf: &Heightfield, gait: &GaitParams, xy: Vector2<f64>, yaw: f64) -> Option<[f64; 4]> {
    let corners = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
    let mut out = [0.0; 4];
    for (i, (sx, sy)) in corners.iter().enumerate() {
        let w = xy + rotate2(
            yaw,
            Vector2::new(sx * gait.footprint_half_length, sy * gait.footprint_half_width),
        );
        out[i] = hf.height_at(w.x, w.y).ok()?;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::yaw_of;
    use crate::scene::{build_scene, Primitive, SceneSpec, WorldExtent};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat(len: f64) -> Heightfield {
        build_scene(
            &SceneSpec::flat(WorldExtent { x_min: -len, x_max: len, y_min: -len, y_max: len }),
            0.02,
        )
        .unwrap()
    }

    fn run(profile: &CommandProfile, hf: &Heightfield, gait: &GaitParams) -> Trajectory {
        simulate_trajectory(profile, hf, 0.005, gait, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn zero_command_keeps_the_base_still() {
        let hf = flat(2.0);
        let traj = run(&CommandProfile::constant(0.0, 0.0, 0.0, 3.0), &hf, &GaitParams::default());
        let first = traj.states[0].pose();
        for s in &traj.states {
            assert_eq!(s.pose(), first);
        }
    }

    #[test]
    fn straight_line_integrates_exactly() {
        let hf = flat(3.0);
        let traj = run(&CommandProfile::constant(0.5, 0.0, 0.0, 2.0), &hf, &GaitParams::default());
        let last = traj.states.last().unwrap();
        assert!((last.t - 2.0).abs() < 1e-12);
        assert!((last.position.x - 1.0).abs() < 1e-9);
        assert!(last.position.y.abs() < 1e-12);
        assert!(!traj.truncated);
    }

    #[test]
    fn yaw_rate_integrates_exactly_with_partial_last_step() {
        let hf = flat(2.0);
        let traj = run(&CommandProfile::constant(0.0, 0.0, 1.0, PI), &hf, &GaitParams::default());
        let last = traj.states.last().unwrap();
        assert!((last.t - PI).abs() < 1e-12);
        let advanced = crate::geometry::wrap_angle(yaw_of(&last.orientation));
        assert!((advanced.abs() - PI).abs() < 1e-6, "{advanced}");
    }

    #[test]
    fn leaving_the_map_truncates() {
        let hf = flat(1.0);
        let traj = run(&CommandProfile::constant(1.0, 0.0, 0.0, 5.0), &hf, &GaitParams::default());
        assert!(traj.truncated);
        assert!(traj.duration() < 1.0);
    }

    #[test]
    fn trunk_follows_terrain_over_a_step() {
        let spec = SceneSpec {
            extent: WorldExtent { x_min: -1.0, x_max: 4.0, y_min: -1.0, y_max: 1.0 },
            primitives: vec![Primitive::Step { x_start: 1.0, height: 0.2, depth: 1.0 }],
        };
        let hf = build_scene(&spec, 0.01).unwrap();
        let traj = run(&CommandProfile::constant(0.5, 0.0, 0.0, 4.0), &hf, &GaitParams::default());
        let on_step = traj.states.iter().find(|s| s.position.x > 1.75).unwrap();
        assert!((on_step.position.z - 0.5).abs() < 1e-4);
        assert!((on_step.trunk_height - 0.3).abs() < 1e-4);
        // the climb is smooth: no single-tick jump in height
        let vz = traj.states.iter().map(|s| (s.orientation * s.linear_velocity).z.abs()).fold(0.0, f64::max);
        assert!(vz < 1.2, "{vz}");
        // front feet up first: nose-up is negative pitch
        let climbing = traj.states.iter().find(|s| s.position.x > 0.85).unwrap();
        assert!(climbing.orientation.euler_angles().1 < 0.0);
    }

    #[test]
    fn air_time_bookkeeping() {
        let hf = flat(3.0);
        let gait = GaitParams::default();
        let traj = run(&CommandProfile::constant(0.5, 0.0, 0.0, 2.0), &hf, &gait);
        let dt = 0.005;
        let stride = 1.0 / gait.frequency;
        let per_stride = (stride / dt).round() as usize;
        for leg in 0..4 {
            let window = &traj.states[40..40 + per_stride];
            let contact = window.iter().filter(|s| s.foot_contacts[leg]).count();
            let air = window.len() - contact;
            assert!(((contact + air) as f64 * dt - stride).abs() <= dt);
            for s in window {
                assert!(s.foot_air_times[leg] >= 0.0);
                if s.foot_contacts[leg] {
                    assert_eq!(s.foot_air_times[leg], 0.0);
                }
            }
        }
        // every completed swing lasts (1 - duty) / f = 0.25 s
        let touchdowns: Vec<f64> = traj
            .states
            .iter()
            .flat_map(|s| (0..4).filter(move |&l| s.first_contact[l]).map(move |l| s.last_air_times[l]))
            .collect();
        assert!(!touchdowns.is_empty());
        for a in touchdowns {
            assert!((a - 0.25).abs() < 1e-9, "{a}");
        }
    }

    #[test]
    fn quaternions_stay_normalised() {
        let hf = flat(3.0);
        let profile = CommandProfile {
            start: StartPose::default(),
            segments: vec![
                CommandSegment { vx: 0.5, vy: 0.2, wz: 0.7, duration: 1.3 },
                CommandSegment { vx: -0.3, vy: 0.0, wz: -1.0, duration: 1.1 },
            ],
        };
        let gait = GaitParams { velocity_time_constant: 0.1, sway: [0.05, 0.03, 0.1], ..Default::default() };
        let traj = run(&profile, &hf, &gait);
        for s in &traj.states {
            assert!((s.orientation.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let hf = flat(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = GaitParams::default();
        assert_eq!(
            simulate_trajectory(&CommandProfile::constant(0.0, 0.0, 0.0, 1.0), &hf, 0.0, &g, &mut rng),
            Err(TrajectoryError::InvalidStep(0.0))
        );
        assert_eq!(
            simulate_trajectory(&CommandProfile::constant(0.0, 0.0, 0.0, -1.0), &hf, 0.01, &g, &mut rng),
            Err(TrajectoryError::InvalidSegment(0))
        );
    }
}
