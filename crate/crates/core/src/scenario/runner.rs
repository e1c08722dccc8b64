use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rand_chacha::ChaCha8Rng;

use super::{ScenarioConfig, ScenarioError, ScenarioKind};
use crate::cloudfilter::{preprocess, LinkKind, PointCloud, PosedBody, SensorId};
use crate::elevmap::ElevationMap;
use crate::eval::{
    map_vs_ground_truth, rte, tracking_rms, write_metrics_csv, EvalError, MetricReport, TrajectorySample,
    VelocitySample,
};
use crate::obsbuilder::{
    assemble_inputs, sample_heights, EstimationTargets, HeightNoiseState, HistoryBuffer, ObservationFrame, OBS_LEN,
    TARGET_LEN,
};
use crate::odometry::{fuse, make_source_streams, FusedTrajectory, OdometryMode, OdometrySample};
use crate::reward::{compute_terms, pd_torques, RewardBreakdown};
use crate::rng::{SeedTree, Stream};
use crate::scene::{build_scene, Heightfield, Primitive, SceneSpec, WorldExtent};
use crate::sensorsim::{
    inject_sensor_noise, render_depth, simulate_trajectory, CameraModel, CommandProfile, RobotState, StartPose,
    Trajectory,
};

/// Reports produced by one `run_scenario` call.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub reports: Vec<MetricReport>,
}

/// Everything recorded during one pass of the mapping pipeline.
#[derive(Debug, Clone)]
pub struct MappingRun {
    pub trajectory: Trajectory,
    pub odometry: FusedTrajectory,
    /// (t, cm) for every window with valid map cells.
    pub chamfer: Vec<(f64, f64)>,
    pub chamfer_missing: usize,
    /// (t, default-filled samples) per control tick.
    pub fills: Vec<(f64, usize)>,
    pub rewards: Vec<(f64, RewardBreakdown)>,
    pub cloud_frames: usize,
    pub control_ticks: usize,
    pub render_failures: usize,
    pub accumulated_shift: f64,
}

/// Fires once per period of `rate` on a tick clock.
struct Clock {
    rate: f64,
    next: u64,
}

impl Clock {
    fn new(rate: f64) -> Self {
        Self { rate, next: 0 }
    }

    fn due(&mut self, t: f64) -> bool {
        if self.next as f64 / self.rate <= t + 1e-9 {
            self.next += 1;
            true
        } else {
            false
        }
    }
}

struct Artifacts<'a> {
    dir: &'a Path,
    prefix: String,
}

/// The configured pose source over a ground-truth run, drift included.
pub fn estimate_odometry(
    cfg: &ScenarioConfig,
    states: &[RobotState],
    seeds: &SeedTree,
) -> Result<FusedTrajectory, ScenarioError> {
    let o = &cfg.odometry;
    let fused = match o.mode {
        OdometryMode::Gt => FusedTrajectory::from_ground_truth(states),
        mode => {
            let streams = make_source_streams(states, &o.errors, &o.rates, seeds);
            fuse(&states[0], &streams, mode == OdometryMode::EkfVio, &o.ekf)?
        }
    };
    Ok(fused.with_z_drift(o.z_drift_rate))
}

/// Latest sample at or before `t` (the first one before the stream starts).
fn sample_at(samples: &[OdometrySample], t: f64) -> &OdometrySample {
    let k = samples.partition_point(|s| s.t <= t + 1e-9);
    &samples[k.saturating_sub(1)]
}

fn camera_stream(cam: &CameraModel) -> Stream {
    match cam.id {
        SensorId::Front => Stream::FrontCamera,
        SensorId::Rear => Stream::RearCamera,
    }
}

/// Non-foot links with any part of the axis below the terrain.
fn count_collisions(body: &PosedBody, hf: &Heightfield) -> usize {
    body.links
        .iter()
        .filter(|l| l.kind != LinkKind::Foot)
        .filter(|l| {
            let c = &l.capsule;
            [0.0, 0.5, 1.0].iter().any(|&s| {
                let p = c.a + (c.b - c.a) * s;
                hf.height_at(p.x, p.y).is_ok_and(|h| p.z - c.radius < h)
            })
        })
        .count()
}

fn write_snapshot(
    art: &Artifacts,
    index: usize,
    map: &ElevationMap,
    cloud: &[Point3<f64>],
    t: f64,
) -> Result<(), ScenarioError> {
    let mut w = BufWriter::new(File::create(art.dir.join(format!("map_{}{index:04}.csv", art.prefix)))?);
    map.write_csv(&mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(art.dir.join(format!("cloud_{}{index:04}.xyz", art.prefix)))?);
    PointCloud::new(t, crate::cloudfilter::Frame::World, cloud.to_vec()).write_xyz(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Runs trajectory, sensors, filters, drift compensation, mapping, the
/// observation and reward terms, and the map metric over one profile.
///
/// Cameras render at the true pose; everything downstream of the sensor
/// uses the estimated pose.
pub fn run_mapping(
    cfg: &ScenarioConfig,
    hf: &Heightfield,
    profile: &CommandProfile,
    seeds: &SeedTree,
    artifacts_dir: Option<&Path>,
    artifact_prefix: &str,
) -> Result<MappingRun, ScenarioError> {
    let dt = 1.0 / cfg.rates.sim;
    let trajectory = simulate_trajectory(profile, hf, dt, &cfg.gait, &mut seeds.stream(Stream::Gait))?;
    let states = &trajectory.states;
    if states.is_empty() {
        return Err(ScenarioError::Invariant("empty trajectory".into()));
    }
    let odometry = estimate_odometry(cfg, states, seeds)?;
    if odometry.samples.is_empty() {
        return Err(ScenarioError::Invariant("odometry produced no samples".into()));
    }

    let cams = cfg.cameras.enabled();
    let mut cam_rngs: Vec<ChaCha8Rng> = cams.iter().map(|c| seeds.stream(camera_stream(c))).collect();
    let mut height_rng = seeds.stream(Stream::HeightNoise);
    let mut height_noise = HeightNoiseState::new(cfg.policy.height_noise);
    let mut history = HistoryBuffer::new();

    let start = sample_at(&odometry.samples, states[0].t).position.xy();
    let mut map = ElevationMap::new(cfg.mapping.map, start)?;
    let mut clouds = Clock::new(cfg.rates.cloud);
    let mut control = Clock::new(cfg.rates.control);
    let mut chamfer_clock = Clock::new(cfg.rates.chamfer);
    let artifacts = artifacts_dir.map(|dir| Artifacts { dir, prefix: artifact_prefix.to_string() });
    let mut snapshots = cfg.snapshot_every.filter(|_| artifacts.is_some()).map(|s| Clock::new(1.0 / s));
    let control_stride = (cfg.rates.sim / cfg.rates.control).round().max(1.0) as usize;

    let mut run = MappingRun {
        chamfer: Vec::new(),
        chamfer_missing: 0,
        fills: Vec::new(),
        rewards: Vec::new(),
        cloud_frames: 0,
        control_ticks: 0,
        render_failures: 0,
        accumulated_shift: 0.0,
        trajectory: Trajectory { states: Vec::new(), truncated: trajectory.truncated },
        odometry: FusedTrajectory::default(),
    };
    let mut touched = [false; 4];
    let mut prev_action = [0.0; 12];
    let mut last_cloud: Vec<Point3<f64>> = Vec::new();
    let mut snapshot_index = 0;

    for (k, state) in states.iter().enumerate() {
        let t = state.t;
        let est = sample_at(&odometry.samples, t);
        let est_pose = est.pose();
        let gt_pose = state.pose();
        for f in 0..4 {
            touched[f] |= state.first_contact[f];
        }
        map.recenter(est_pose.translation.vector.xy());

        if clouds.due(t) {
            run.cloud_frames += 1;
            let body_gt = cfg.body.pose(&gt_pose, &state.joint_positions);
            let (gt_ref, body_ref) = (&gt_pose, &body_gt);
            let noisy = cfg.sensor_noise;
            let rendered: Vec<(PointCloud, bool)> = std::thread::scope(|s| {
                let handles: Vec<_> = cams
                    .iter()
                    .zip(cam_rngs.iter_mut())
                    .map(|(cam, rng)| {
                        s.spawn(move || {
                            let out = render_depth(cam, gt_ref, t, hf, Some(body_ref));
                            let failed = out.diagnostic.is_some();
                            let cloud = if noisy { inject_sensor_noise(&out.cloud, &cam.noise, rng) } else { out.cloud };
                            (cloud, failed)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("render thread panicked")).collect()
            });
            let body_est = cfg.body.pose(&est_pose, &state.joint_positions);
            if artifacts.is_some() {
                last_cloud.clear();
            }
            for (cam, (cloud, failed)) in cams.iter().zip(rendered) {
                run.render_failures += failed as usize;
                let sensor_pose = cam.world_pose(&est_pose);
                let world = cloud.transformed(&sensor_pose);
                if !world.is_finite() {
                    return Err(ScenarioError::Invariant(format!("non-finite point in {} cloud", cam.id.as_str())));
                }
                let (filtered, _) = preprocess(&world, &body_est, &cfg.mapping.filter);
                if cfg.mapping.drift_compensation {
                    map.drift_compensate(&filtered);
                }
                let model = match cam.id {
                    SensorId::Front => &cfg.mapping.front_variance,
                    SensorId::Rear => &cfg.mapping.rear_variance,
                };
                map.integrate_cloud(&filtered, &Point3::from(sensor_pose.translation.vector), model, t);
                if artifacts.is_some() {
                    last_cloud.extend_from_slice(&filtered.points);
                }
            }
        }

        if let (Some(clock), Some(art)) = (snapshots.as_mut(), artifacts.as_ref()) {
            if clock.due(t) {
                write_snapshot(art, snapshot_index, &map, &last_cloud, t)?;
                snapshot_index += 1;
            }
        }

        if chamfer_clock.due(t) {
            let w = map_vs_ground_truth(&map, hf, &est_pose, &gt_pose, &cfg.mapping.region)?;
            match w.cm {
                Some(cm) => run.chamfer.push((t, cm)),
                None => run.chamfer_missing += 1,
            }
        }

        if control.due(t) {
            run.control_ticks += 1;
            let p = &cfg.policy;
            let samples = sample_heights(&map, &est_pose, &p.height_scan);
            run.fills.push((t, samples.filled));
            let heights = if p.height_noise_enabled {
                height_noise.apply(&samples, &map, est_pose.translation.z, p.height_scan.default_height, t, &mut height_rng)
            } else {
                samples.values.clone()
            };
            let command = profile.command_at(t);
            let frame = ObservationFrame {
                command,
                joint_positions: state.joint_positions,
                joint_velocities: state.joint_velocities,
                projected_gravity: est.orientation.inverse() * Vector3::new(0.0, 0.0, -1.0),
                heights,
            };
            let obs = history.push_and_flatten(&frame);
            let estimated = EstimationTargets {
                linear_velocity: est.orientation.inverse() * est.velocity,
                friction: p.friction,
                contacts: state.foot_contacts,
            };
            let privileged = EstimationTargets { linear_velocity: state.linear_velocity, ..estimated };
            let inputs = assemble_inputs(&obs, &estimated, &privileged);
            if inputs.actor.len() != OBS_LEN + TARGET_LEN || !inputs.actor.iter().all(|v| v.is_finite()) {
                return Err(ScenarioError::Invariant(format!("malformed policy input at t={t:.3}")));
            }

            // the kinematic gait stands in for the policy: its next joint targets are the action
            let next = &states[(k + control_stride).min(states.len() - 1)];
            let q_default = &p.reward.q_default;
            let action: [f64; 12] = std::array::from_fn(|j| next.joint_positions[j] - q_default[j]);
            let torques = pd_torques(&next.joint_positions, &state.joint_positions, &state.joint_velocities, p.kp, p.kd);
            let collisions = count_collisions(&cfg.body.pose(&gt_pose, &state.joint_positions), hf);
            let mut reward_state = state.clone();
            reward_state.first_contact = touched;
            let b = compute_terms(&reward_state, &command, &action, &prev_action, &torques, collisions, &p.reward);
            run.rewards.push((t, b));
            prev_action = action;
            touched = [false; 4];
        }
    }
    run.accumulated_shift = map.accumulated_shift();
    run.trajectory.states = trajectory.states;
    run.odometry = odometry;
    Ok(run)
}

fn gt_samples(states: &[RobotState]) -> Vec<TrajectorySample> {
    states.iter().map(|s| TrajectorySample { t: s.t, position: s.position, orientation: s.orientation }).collect()
}

fn odom_samples(odom: &FusedTrajectory) -> Vec<TrajectorySample> {
    let mut out: Vec<TrajectorySample> = Vec::with_capacity(odom.samples.len());
    for s in &odom.samples {
        // the filter records its initial state; keep timestamps strictly increasing
        if out.last().is_some_and(|l| s.t <= l.t) {
            continue;
        }
        out.push(TrajectorySample { t: s.t, position: s.position, orientation: s.orientation });
    }
    out
}

fn mapping_reports(cfg: &ScenarioConfig, run: &MappingRun, tag: &str) -> Result<Vec<MetricReport>, ScenarioError> {
    let mut reports = Vec::new();
    let windows: Vec<f64> = run.chamfer.iter().map(|c| c.1).collect();
    reports.push(MetricReport::new("chamfer", "cm", tag, windows, run.chamfer_missing));
    let rte_report = match rte(&odom_samples(&run.odometry), &gt_samples(&run.trajectory.states), cfg.rte_segment) {
        Ok(r) => MetricReport::new("rte", "m", tag, r.segment_errors, 0),
        Err(EvalError::InsufficientLength { .. }) => MetricReport::new("rte", "m", tag, Vec::new(), 1),
        Err(e) => return Err(e.into()),
    };
    reports.push(rte_report);
    let filled: usize = run.fills.iter().map(|f| f.1).sum();
    let total = run.fills.len() * crate::obsbuilder::NUM_HEIGHTS;
    let fraction = if total == 0 { f64::NAN } else { filled as f64 / total as f64 };
    reports.push(MetricReport::scalar("default_fill_fraction", "ratio", tag, fraction));
    reports.push(MetricReport::new("reward", "1", tag, run.rewards.iter().map(|r| r.1.total).collect(), 0));
    reports.push(MetricReport::scalar("drift_shift", "m", tag, run.accumulated_shift));
    Ok(reports)
}

fn run_single(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<Vec<MetricReport>, ScenarioError> {
    let hf = build_scene(&cfg.scene, cfg.scene_resolution)?;
    let run = run_mapping(cfg, &hf, &cfg.profile, &SeedTree::new(cfg.seed), out, "")?;
    mapping_reports(cfg, &run, &cfg.tag())
}

fn run_step_sweep(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<Vec<MetricReport>, ScenarioError> {
    let s = &cfg.step_sweep;
    let tag = cfg.tag();
    let seeds = SeedTree::new(cfg.seed);
    let start = cfg.profile.start;
    let duration = (s.x_start + s.depth + s.run_out - start.x) / s.speed;
    if !(duration > 0.0) {
        return Err(ScenarioError::Config("step_sweep: the step lies behind the start pose".into()));
    }
    let profile = CommandProfile { start, ..CommandProfile::constant(s.speed, 0.0, 0.0, duration) };
    // the crossing window: any part of the sampled region over the step
    let half = 0.5 * cfg.mapping.region.length;
    let (lo, hi) = (s.x_start - half, s.x_start + s.depth + half);

    let mut reports = Vec::new();
    let mut successes = 0;
    for (i, &h) in s.heights.iter().enumerate() {
        let scene = SceneSpec {
            extent: cfg.scene.extent,
            primitives: vec![Primitive::Step { x_start: s.x_start, height: h, depth: s.depth }],
        };
        scene.validate()?;
        let hf = build_scene(&scene, cfg.scene_resolution)?;
        let label = format!("h{h:.3}");
        let run = run_mapping(cfg, &hf, &profile, &seeds.child(i as u64), out, &format!("{label}_"))?;
        let x_at = |t: f64| {
            let k = run.trajectory.states.partition_point(|st| st.t <= t + 1e-9).saturating_sub(1);
            run.trajectory.states[k].position.x
        };
        let crossing = |t: f64| (lo..=hi).contains(&x_at(t));
        let chamfer: Vec<f64> = run.chamfer.iter().filter(|c| crossing(c.0)).map(|c| c.1).collect();
        let fills: usize = run.fills.iter().filter(|f| crossing(f.0)).map(|f| f.1).sum();
        let report = MetricReport::new(&format!("step_chamfer_{label}"), "cm", &tag, chamfer, 0);
        let ok = report.mean <= s.success_chamfer_cm && fills == 0;
        successes += ok as usize;
        reports.push(MetricReport::scalar(&format!("step_success_{label}"), "proxy", &tag, ok as u8 as f64));
        reports.push(report);
        reports.push(MetricReport::scalar(&format!("step_default_fill_{label}"), "samples", &tag, fills as f64));
    }
    reports.push(MetricReport::scalar("step_success_rate", "proxy", &tag, successes as f64 / s.heights.len() as f64));
    Ok(reports)
}

fn run_tracking_sweep(cfg: &ScenarioConfig) -> Result<Vec<MetricReport>, ScenarioError> {
    let s = &cfg.tracking_sweep;
    let tag = cfg.tag();
    let seeds = SeedTree::new(cfg.seed);
    let reach = s.segment_duration * (s.vx.iter().chain(&s.vy).fold(0.0f64, |m, v| m.max(v.abs())) * 1.5 + 0.5) + 1.0;
    let scene = SceneSpec::flat(WorldExtent { x_min: -reach, x_max: reach, y_min: -reach, y_max: reach });
    let hf = build_scene(&scene, cfg.scene_resolution.max(0.02))?;
    let dt = 1.0 / cfg.rates.sim;
    let mut sum = [0.0; 3];
    let mut n = 0usize;
    let mut index = 0u64;
    for &vx in &s.vx {
        for &vy in &s.vy {
            for &wz in &s.wz {
                let profile =
                    CommandProfile { start: StartPose::default(), ..CommandProfile::constant(vx, vy, wz, s.segment_duration) };
                let mut rng = seeds.child(index).stream(Stream::Gait);
                index += 1;
                let traj = simulate_trajectory(&profile, &hf, dt, &cfg.gait, &mut rng)?;
                if traj.truncated {
                    return Err(ScenarioError::Invariant(format!("tracking run ({vx}, {vy}, {wz}) left the terrain")));
                }
                let measured: Vec<VelocitySample> = traj
                    .states
                    .iter()
                    .map(|st| VelocitySample {
                        t: st.t,
                        velocity: [st.linear_velocity.x, st.linear_velocity.y, st.angular_velocity.z],
                    })
                    .collect();
                let r = tracking_rms(&measured, &profile, s.settle)?;
                for a in 0..3 {
                    sum[a] += r.rms[a] * r.rms[a] * r.samples as f64;
                }
                n += r.samples;
            }
        }
    }
    let rms = sum.map(|v| (v / n as f64).sqrt());
    Ok(vec![
        MetricReport::scalar("tracking_rms_vx", "m/s", &tag, rms[0]),
        MetricReport::scalar("tracking_rms_vy", "m/s", &tag, rms[1]),
        MetricReport::scalar("tracking_rms_wz", "rad/s", &tag, rms[2]),
    ])
}

/// Runs the configured experiment. With `out` set, the metric tables and
/// any snapshots are written there.
pub fn run_scenario(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<RunOutput, ScenarioError> {
    cfg.validate()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let reports = match cfg.kind {
        ScenarioKind::Mapping => run_single(cfg, out)?,
        ScenarioKind::StepSweep => run_step_sweep(cfg, out)?,
        ScenarioKind::TrackingSweep => run_tracking_sweep(cfg)?,
    };
    if let Some(dir) = out {
        write_reports(dir, &reports)?;
    }
    Ok(RunOutput { reports })
}

/// Writes `metrics.csv` and `metrics.json`.
pub fn write_reports(dir: &Path, reports: &[MetricReport]) -> Result<(), ScenarioError> {
    let mut w = BufWriter::new(File::create(dir.join("metrics.csv"))?);
    write_metrics_csv(&mut w, reports)?;
    w.flush()?;
    let json = serde_json::to_string_pretty(reports).map_err(|e| ScenarioError::Invariant(e.to_string()))?;
    fs::write(dir.join("metrics.json"), json + "\n")?;
    Ok(())
}
