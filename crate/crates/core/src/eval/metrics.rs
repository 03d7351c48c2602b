use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::sim::NUM_JOINTS;

use super::session::TickRecord;
use super::EvalError;

/// Raw per-step record of an evaluation rollout. Metrics are derived from
/// these values only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Start of the control step, s.
    pub t: f64,
    pub x: f64,
    pub pitch: f64,
    /// Trunk height above the terrain after the step, m.
    pub height: f64,
    pub vx: f64,
    pub cmd_vx: f64,
    pub cmd_height: f64,
    /// Mean |τ| over joints and substeps, N·m.
    pub torque_effort: f64,
    pub delta: [f64; NUM_JOINTS],
    /// True ground reactions (fx, fz), front then rear, N.
    pub grf: [[f64; 2]; 2],
    /// Payload carried during the step, kg.
    pub payload: f64,
}

impl Sample {
    pub fn from_tick(r: &TickRecord) -> Self {
        Self {
            t: r.t,
            x: r.state.base_pos[0],
            pitch: r.state.base_pitch,
            height: r.step.height,
            vx: r.state.base_vel[0],
            cmd_vx: r.cmd.vx,
            cmd_height: r.cmd.height,
            torque_effort: r.step.torque_effort,
            delta: r.delta,
            grf: [r.step.contacts.feet[0].grf, r.step.contacts.feet[1].grf],
            payload: r.payload.total(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FallEvent {
    /// End of the step on which the fall was detected, s.
    pub t: f64,
    pub step: usize,
    pub phase: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub scenario: String,
    pub controller: String,
    pub seed: u64,
    pub dt: f64,
    pub phase_starts: Vec<f64>,
    pub samples: Vec<Sample>,
    pub fall: Option<FallEvent>,
}

/// Per-step derived metrics, column-aligned.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricColumns {
    pub t: Vec<f64>,
    pub height: Vec<f64>,
    pub cmd_height: Vec<f64>,
    pub height_error: Vec<f64>,
    pub vx: Vec<f64>,
    pub cmd_vx: Vec<f64>,
    pub vx_error: Vec<f64>,
    pub torque_effort: Vec<f64>,
    pub delta_norm: Vec<f64>,
    pub grf_norm: Vec<f64>,
    pub payload: Vec<f64>,
    pub phase: Vec<usize>,
}

impl MetricColumns {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn is_aligned(&self) -> bool {
        let n = self.t.len();
        [
            &self.height,
            &self.cmd_height,
            &self.height_error,
            &self.vx,
            &self.cmd_vx,
            &self.vx_error,
            &self.torque_effort,
            &self.delta_norm,
            &self.grf_norm,
            &self.payload,
        ]
        .iter()
        .all(|c| c.len() == n)
            && self.phase.len() == n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub median: f64,
}

impl Stat {
    /// NaN for an empty slice.
    pub fn of(values: &[f64]) -> Self {
        Self { mean: mean(values), median: median(values) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: usize,
    pub start: f64,
    pub samples: usize,
    pub payload: f64,
    pub height_error: Stat,
    pub vx_error: Stat,
    pub torque_effort: Stat,
    pub delta_norm: Stat,
    pub grf_norm: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTimeseries {
    pub scenario: String,
    pub controller: String,
    pub seed: u64,
    pub columns: MetricColumns,
    pub phases: Vec<PhaseSummary>,
    pub falls: Vec<FallEvent>,
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Pearson correlation; `None` when undefined (fewer than two points or a
/// constant series).
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / libm::sqrt(sxx * syy))
}

/// Index of the phase active at `t`: the last start time not after it.
pub fn phase_at(starts: &[f64], t: f64) -> usize {
    starts.iter().rposition(|s| *s <= t + 1e-9).unwrap_or(0)
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

pub fn metrics_from_trajectory(traj: &Trajectory) -> MetricsTimeseries {
    let mut c = MetricColumns::default();
    for s in &traj.samples {
        let net = [s.grf[0][0] + s.grf[1][0], s.grf[0][1] + s.grf[1][1]];
        c.t.push(s.t);
        c.height.push(s.height);
        c.cmd_height.push(s.cmd_height);
        c.height_error.push((s.height - s.cmd_height).abs());
        c.vx.push(s.vx);
        c.cmd_vx.push(s.cmd_vx);
        c.vx_error.push((s.vx - s.cmd_vx).abs());
        c.torque_effort.push(s.torque_effort);
        c.delta_norm.push(norm(&s.delta));
        c.grf_norm.push(norm(&net));
        c.payload.push(s.payload);
        c.phase.push(phase_at(&traj.phase_starts, s.t));
    }
    let phases = traj
        .phase_starts
        .iter()
        .enumerate()
        .map(|(phase, &start)| {
            let pick = |col: &[f64]| -> Vec<f64> {
                col.iter().zip(&c.phase).filter(|(_, p)| **p == phase).map(|(v, _)| *v).collect()
            };
            let payload = pick(&c.payload);
            PhaseSummary {
                phase,
                start,
                samples: payload.len(),
                payload: mean(&payload),
                height_error: Stat::of(&pick(&c.height_error)),
                vx_error: Stat::of(&pick(&c.vx_error)),
                torque_effort: Stat::of(&pick(&c.torque_effort)),
                delta_norm: Stat::of(&pick(&c.delta_norm)),
                grf_norm: Stat::of(&pick(&c.grf_norm)),
            }
        })
        .collect();
    MetricsTimeseries {
        scenario: traj.scenario.clone(),
        controller: traj.controller.clone(),
        seed: traj.seed,
        columns: c,
        phases,
        falls: traj.fall.into_iter().collect(),
    }
}

/// Differences `a − b` of per-phase means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseDelta {
    pub phase: usize,
    pub height_error: f64,
    pub vx_error: f64,
    pub torque_effort: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: String,
    pub seed: u64,
    pub controller_a: String,
    pub controller_b: String,
    pub phases: Vec<PhaseDelta>,
    /// Whole-run mean differences, `phase` set to the number of phases.
    pub overall: PhaseDelta,
    pub falls_a: Vec<FallEvent>,
    pub falls_b: Vec<FallEvent>,
}

pub fn compare(a: &MetricsTimeseries, b: &MetricsTimeseries) -> Result<Comparison, EvalError> {
    let starts = |m: &MetricsTimeseries| m.phases.iter().map(|p| p.start).collect::<Vec<_>>();
    if a.scenario != b.scenario || a.seed != b.seed || starts(a) != starts(b) {
        return Err(EvalError::MismatchedScenarios);
    }
    let phases = a
        .phases
        .iter()
        .zip(&b.phases)
        .map(|(pa, pb)| PhaseDelta {
            phase: pa.phase,
            height_error: pa.height_error.mean - pb.height_error.mean,
            vx_error: pa.vx_error.mean - pb.vx_error.mean,
            torque_effort: pa.torque_effort.mean - pb.torque_effort.mean,
        })
        .collect();
    let (ca, cb) = (&a.columns, &b.columns);
    let overall = PhaseDelta {
        phase: a.phases.len(),
        height_error: mean(&ca.height_error) - mean(&cb.height_error),
        vx_error: mean(&ca.vx_error) - mean(&cb.vx_error),
        torque_effort: mean(&ca.torque_effort) - mean(&cb.torque_effort),
    };
    Ok(Comparison {
        scenario: a.scenario.clone(),
        seed: a.seed,
        controller_a: a.controller.clone(),
        controller_b: b.controller.clone(),
        phases,
        overall,
        falls_a: a.falls.clone(),
        falls_b: b.falls.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, uniform};
    use alloc::string::ToString;
    use alloc::vec;

    fn random_trajectory(seed: u64, n: usize) -> Trajectory {
        let mut rng = seeded(seed);
        let phase_starts = vec![0.0, 1.0, 2.5];
        let samples = (0..n)
            .map(|k| {
                let t = k as f64 * 0.02;
                let mut u = || uniform(&mut rng, -1.0, 1.0);
                Sample {
                    t,
                    x: u(),
                    pitch: u(),
                    height: 0.28 + 0.05 * u(),
                    vx: u(),
                    cmd_vx: 0.4,
                    cmd_height: 0.28,
                    torque_effort: 5.0 + u(),
                    delta: [u(), u(), u(), u()],
                    grf: [[u(), 50.0 + u()], [u(), 60.0 + u()]],
                    payload: [0.0, 2.0, 4.0][phase_at(&phase_starts, t)],
                }
            })
            .collect();
        Trajectory {
            scenario: "fixture".to_string(),
            controller: "x".to_string(),
            seed,
            dt: 0.02,
            phase_starts,
            samples,
            fall: None,
        }
    }

    #[test]
    fn phase_means_match_brute_force() {
        let traj = random_trajectory(3, 200);
        let m = metrics_from_trajectory(&traj);
        assert!(m.columns.is_aligned());
        for p in &m.phases {
            let (mut sum, mut n) = (0.0, 0usize);
            for s in &traj.samples {
                let in_phase = s.t + 1e-9 >= traj.phase_starts[p.phase]
                    && traj.phase_starts.get(p.phase + 1).is_none_or(|next| s.t + 1e-9 < *next);
                if in_phase {
                    sum += (s.height - s.cmd_height).abs();
                    n += 1;
                }
            }
            assert_eq!(p.samples, n);
            assert!((p.height_error.mean - sum / n as f64).abs() < 1e-12);
        }
        assert_eq!(m.phases.iter().map(|p| p.samples).sum::<usize>(), 200);
    }

    #[test]
    fn grf_norm_is_norm_of_sum() {
        let mut traj = random_trajectory(1, 1);
        traj.samples[0].grf = [[1.0, 2.0], [2.0, 2.0]];
        let m = metrics_from_trajectory(&traj);
        assert!((m.columns.grf_norm[0] - 5.0).abs() < 1e-15);
    }

    #[test]
    fn recomputation_is_exact() {
        let traj = random_trajectory(4, 150);
        assert_eq!(metrics_from_trajectory(&traj), metrics_from_trajectory(&traj.clone()));
    }

    #[test]
    fn empty_trajectory_gives_empty_metrics() {
        let traj = random_trajectory(1, 0);
        let m = metrics_from_trajectory(&traj);
        assert!(m.columns.is_empty());
        assert!(m.phases.iter().all(|p| p.samples == 0 && p.height_error.mean.is_nan()));
    }

    #[test]
    fn compare_identical_is_zero() {
        let m = metrics_from_trajectory(&random_trajectory(5, 150));
        let c = compare(&m, &m).unwrap();
        assert!(c.phases.iter().all(|d| d.height_error == 0.0 && d.vx_error == 0.0 && d.torque_effort == 0.0));
        assert_eq!(c.overall.height_error, 0.0);
    }

    #[test]
    fn compare_reports_falls_and_rejects_mismatch() {
        let a = metrics_from_trajectory(&random_trajectory(5, 150));
        let mut fallen = random_trajectory(5, 100);
        fallen.fall = Some(FallEvent { t: 2.0, step: 99, phase: 1 });
        fallen.controller = "y".to_string();
        let b = metrics_from_trajectory(&fallen);
        let c = compare(&a, &b).unwrap();
        assert!(c.falls_a.is_empty());
        assert_eq!(c.falls_b.len(), 1);
        assert!(c.phases[2].height_error.is_nan());

        let other_seed = metrics_from_trajectory(&random_trajectory(6, 150));
        assert_eq!(compare(&a, &other_seed), Err(EvalError::MismatchedScenarios));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn pearson_known_values() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &[2.0, 4.0, 6.0, 8.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &[8.0, 6.0, 4.0, 2.0]).unwrap() + 1.0).abs() < 1e-15);
        // Sxy = 0.5, Sxx = 5, Syy = 0.75.
        let r = pearson(&x, &[1.0, 1.0, 2.0, 1.0]).unwrap();
        assert!((r - 0.5 / libm::sqrt(5.0 * 0.75)).abs() < 1e-12, "{r}");
        assert_eq!(pearson(&x, &[1.0; 4]), None);
    }
}
