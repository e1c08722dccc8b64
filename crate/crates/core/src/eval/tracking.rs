use super::EvalError;
use crate::sensorsim::CommandProfile;

/// Measured (vx, vy, wz) at time t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocitySample {
    pub t: f64,
    pub velocity: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingResult {
    /// Pooled RMS of (measured - commanded) for vx, vy, wz.
    pub rms: [f64; 3],
    pub samples: usize,
    /// Segments shorter than the settling time.
    pub skipped_segments: usize,
}

/// Per-axis tracking RMS pooled over all command segments, ignoring the
/// first `settle` seconds of each.
pub fn tracking_rms(measured: &[VelocitySample], profile: &CommandProfile, settle: f64) -> Result<TrackingResult, EvalError> {
    let mut sum = [0.0; 3];
    let mut n = 0usize;
    let mut skipped = 0;
    for (start, end, seg) in profile.windows() {
        if end - start < settle {
            skipped += 1;
            continue;
        }
        let from = start + settle;
        let cmd = [seg.vx, seg.vy, seg.wz];
        for s in measured.iter().filter(|s| s.t >= from - 1e-9 && s.t < end - 1e-9) {
            for a in 0..3 {
                sum[a] += (s.velocity[a] - cmd[a]).powi(2);
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(EvalError::NoSamples);
    }
    Ok(TrackingResult { rms: sum.map(|s| (s / n as f64).sqrt()), samples: n, skipped_segments: skipped })
}
