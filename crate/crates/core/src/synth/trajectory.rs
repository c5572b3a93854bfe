use super::SynthConfig;
use crate::error::{ensure, Result};
use crate::numeric::{sub_seed, Matrix, Rng};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Scripted motion primitive. Each one starts and ends with zero joint
/// velocity, so concatenating them keeps the angle curves C¹.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    /// Cosine-eased move to `target`, perturbed per visit by up to `spread` rad.
    Reach {
        target: [f64; 7],
        duration_s: f64,
        #[serde(default)]
        spread: f64,
    },
    /// Back-and-forth motion around the current pose (cable handling).
    Oscillate {
        amplitude: [f64; 7],
        cycles: u32,
        duration_s: f64,
    },
    /// Holding still with smooth low-amplitude jitter.
    Idle { jitter: f64, duration_s: f64 },
}

impl Primitive {
    fn duration(&self) -> f64 {
        match self {
            Primitive::Reach { duration_s, .. }
            | Primitive::Oscillate { duration_s, .. }
            | Primitive::Idle { duration_s, .. } => *duration_s,
        }
    }
}

/// Reach to the rack, exchange a cable, return home, wait.
pub fn default_script() -> Vec<Primitive> {
    vec![
        Primitive::Reach {
            target: [0.45, 0.15, -0.35, 0.5, 0.2, -0.4, 0.1],
            duration_s: 3.0,
            spread: 0.25,
        },
        Primitive::Oscillate {
            amplitude: [0.0, 0.0, 0.05, 0.1, 0.15, 0.3, 0.2],
            cycles: 3,
            duration_s: 4.5,
        },
        Primitive::Reach {
            target: [-0.4, -0.1, 0.3, -0.45, -0.15, 0.5, -0.2],
            duration_s: 3.5,
            spread: 0.25,
        },
        Primitive::Oscillate {
            amplitude: [0.05, 0.0, 0.1, 0.0, 0.2, 0.35, 0.0],
            cycles: 2,
            duration_s: 3.0,
        },
        Primitive::Reach {
            target: [0.0; 7],
            duration_s: 2.5,
            spread: 0.15,
        },
        Primitive::Idle {
            jitter: 0.02,
            duration_s: 2.0,
        },
    ]
}

/// One instantiated primitive over absolute time `[start, start + duration)`.
struct Segment {
    start: f64,
    duration: f64,
    from: [f64; 7],
    motion: Motion,
}

enum Motion {
    Ease { to: [f64; 7] },
    Wave { amplitude: [f64; 7], cycles: f64 },
    Jitter { amplitude: f64, freqs: [f64; 3], phases: [[f64; 3]; 7] },
}

impl Segment {
    fn end_pose(&self) -> [f64; 7] {
        match &self.motion {
            Motion::Ease { to } => *to,
            _ => self.from,
        }
    }

    fn eval(&self, t: f64) -> [f64; 7] {
        let s = ((t - self.start) / self.duration).clamp(0.0, 1.0);
        let mut q = self.from;
        match &self.motion {
            Motion::Ease { to } => {
                let w = 0.5 * (1.0 - (PI * s).cos());
                for j in 0..7 {
                    q[j] += (to[j] - self.from[j]) * w;
                }
            }
            Motion::Wave { amplitude, cycles } => {
                let w = (PI * cycles * s).sin().powi(2);
                for j in 0..7 {
                    q[j] += amplitude[j] * w;
                }
            }
            Motion::Jitter {
                amplitude,
                freqs,
                phases,
            } => {
                if *amplitude == 0.0 {
                    return q;
                }
                let window = (PI * s).sin().powi(2);
                let tau = t - self.start;
                for j in 0..7 {
                    let n: f64 = (0..3)
                        .map(|k| (2.0 * PI * freqs[k] * tau + phases[j][k]).sin())
                        .sum::<f64>()
                        / 3.0;
                    q[j] += amplitude * window * n;
                }
            }
        }
        q
    }
}

/// Joint-angle time series (`frames × 7`) following the script, repeated as
/// often as needed to fill the requested duration.
pub fn gen_trajectory(config: &SynthConfig) -> Result<Matrix> {
    ensure!(!config.script.is_empty(), InvalidArgument, "activity script is empty");
    ensure!(config.duration_s > 0.0, InvalidArgument, "duration_s must be > 0");
    ensure!(config.fps > 0.0, InvalidArgument, "fps must be > 0");
    for p in &config.script {
        ensure!(
            p.duration() > 0.0 && p.duration().is_finite(),
            InvalidArgument,
            "every primitive needs a positive duration"
        );
    }
    let frames = config.frame_count();
    let mut rng = Rng::new(sub_seed(config.seed, 0x7A));
    let mut out = Matrix::zeros(frames, 7);

    let mut pose = [0.0; 7];
    let mut start = 0.0;
    let mut idx = 0;
    let mut segment = instantiate(&config.script[0], pose, start, &mut rng);
    for f in 0..frames {
        let t = f as f64 / config.fps;
        while t >= segment.start + segment.duration {
            pose = segment.end_pose();
            start = segment.start + segment.duration;
            idx = (idx + 1) % config.script.len();
            segment = instantiate(&config.script[idx], pose, start, &mut rng);
        }
        out.row_mut(f).copy_from_slice(&segment.eval(t));
    }
    Ok(out)
}

fn instantiate(p: &Primitive, from: [f64; 7], start: f64, rng: &mut Rng) -> Segment {
    let motion = match p {
        Primitive::Reach { target, spread, .. } => {
            let mut to = *target;
            for v in &mut to {
                *v += rng.uniform(-spread, *spread);
            }
            Motion::Ease { to }
        }
        Primitive::Oscillate {
            amplitude, cycles, ..
        } => Motion::Wave {
            amplitude: *amplitude,
            cycles: *cycles as f64,
        },
        Primitive::Idle { jitter, .. } => {
            let freqs = [rng.uniform(0.2, 0.6), rng.uniform(0.6, 1.2), rng.uniform(1.2, 2.0)];
            let mut phases = [[0.0; 3]; 7];
            for row in &mut phases {
                for v in row.iter_mut() {
                    *v = rng.uniform(0.0, 2.0 * PI);
                }
            }
            Motion::Jitter {
                amplitude: *jitter,
                freqs,
                phases,
            }
        }
    };
    Segment {
        start,
        duration: p.duration(),
        from,
        motion,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(duration_s: f64, script: Vec<Primitive>) -> SynthConfig {
        SynthConfig {
            duration_s,
            script,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn frame_counts() {
        let t = gen_trajectory(&config(10.0, default_script())).unwrap();
        assert_eq!(t.shape(), (200, 7));
        let t = gen_trajectory(&config(1156.0, default_script())).unwrap();
        assert_eq!(t.rows(), 23_120);
        // within 0.1% of the 23,135-frame recording
        assert!((23_120.0f64 - 23_135.0).abs() / 23_135.0 < 1e-3);
    }

    #[test]
    fn still_idle_is_constant() {
        let t = gen_trajectory(&config(
            5.0,
            vec![Primitive::Idle {
                jitter: 0.0,
                duration_s: 1.0,
            }],
        ))
        .unwrap();
        assert!(t.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_script_rejected() {
        assert!(gen_trajectory(&config(5.0, vec![])).is_err());
    }

    #[test]
    fn motion_is_smooth() {
        // C¹: second differences stay small relative to the frame spacing.
        let c = SynthConfig {
            fps: 200.0,
            ..config(60.0, default_script())
        };
        let t = gen_trajectory(&c).unwrap();
        let dt = 1.0 / c.fps;
        for f in 1..t.rows() - 1 {
            for j in 0..7 {
                let acc = (t[(f + 1, j)] - 2.0 * t[(f, j)] + t[(f - 1, j)]) / (dt * dt);
                assert!(acc.abs() < 10.0, "frame {f} joint {j} acceleration {acc}");
            }
        }
    }

    #[test]
    fn deterministic() {
        let a = gen_trajectory(&config(30.0, default_script())).unwrap();
        let b = gen_trajectory(&config(30.0, default_script())).unwrap();
        assert_eq!(a, b);
    }
}
