//! One-dimensional convergence study: a point is pulled towards a target
//! under `|x_t - x|`, either directly (Cartesian) or through a homogeneous
//! pair `x = x_tilde / w`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Lower bound on `w` in the homogeneous run.
pub const MIN_W: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    Cartesian,
    Homogeneous,
}

impl Representation {
    pub const ALL: [Representation; 2] = [Representation::Cartesian, Representation::Homogeneous];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Cartesian => "cartesian",
            Self::Homogeneous => "homogeneous",
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer1D {
    /// Plain (sub)gradient descent.
    Sgd,
    /// Adam with the trainer's constants.
    Adam,
}

impl FromStr for Optimizer1D {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            _ => Err(Error::InvalidArgument(format!("unknown optimizer {s:?} (expected sgd or adam)"))),
        }
    }
}

/// How the optimized scalar maps to `w`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WActivation {
    /// `w` is optimized directly.
    Linear,
    /// `w = exp(rho)`, as in the 3D pipeline.
    Exp,
}

impl FromStr for WActivation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "exp" => Ok(Self::Exp),
            _ => Err(Error::InvalidArgument(format!("unknown w activation {s:?} (expected linear or exp)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sim1DConfig {
    pub x0: f64,
    pub w0: f64,
    pub targets: Vec<f64>,
    pub lr: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub optimizer: Optimizer1D,
    pub w_activation: WActivation,
    /// When false only `x_tilde` moves in the homogeneous run.
    pub optimize_w: bool,
    /// Stop a trace at the first converged step.
    pub stop_on_convergence: bool,
}

impl Default for Sim1DConfig {
    fn default() -> Self {
        Self {
            x0: 5.0,
            w0: 1.0,
            targets: vec![10.0, 50.0, 250.0],
            lr: 0.1,
            max_iters: 10_000,
            tol: 0.5,
            optimizer: Optimizer1D::Adam,
            w_activation: WActivation::Exp,
            optimize_w: true,
            stop_on_convergence: true,
        }
    }
}

impl Sim1DConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.targets.is_empty() {
            return bad("targets must not be empty".into());
        }
        if !(self.w0 > 0.0 && self.w0.is_finite()) {
            return bad(format!("w0 must be positive, got {}", self.w0));
        }
        if !self.x0.is_finite() || self.targets.iter().any(|t| !t.is_finite()) {
            return bad("x0 and targets must be finite".into());
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimPoint {
    pub iter: usize,
    pub decoded: f64,
    pub loss: f64,
    /// `x` (Cartesian) or `x_tilde` (homogeneous).
    pub x_raw: f64,
    /// 1 for the Cartesian run.
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace {
    pub representation: Representation,
    pub target: f64,
    pub points: Vec<SimPoint>,
    /// First iteration with `|decoded - target| < tol`.
    pub iterations_to_tol: Option<usize>,
    /// Steps where `w` hit [`MIN_W`] and was clamped.
    pub degenerate_events: usize,
}

#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    m: f64,
    v: f64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-15;

impl Moments {
    fn step(&mut self, g: f64, lr: f64, t: usize, opt: Optimizer1D) -> f64 {
        match opt {
            Optimizer1D::Sgd => lr * g,
            Optimizer1D::Adam => {
                self.m = BETA1 * self.m + (1.0 - BETA1) * g;
                self.v = BETA2 * self.v + (1.0 - BETA2) * g * g;
                let mh = self.m / (1.0 - BETA1.powi(t as i32));
                let vh = self.v / (1.0 - BETA2.powi(t as i32));
                lr * mh / (vh.sqrt() + EPS)
            }
        }
    }
}

/// Subgradient sign of `|r|`, zero at the optimum.
fn sign(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn run_target(cfg: &Sim1DConfig, repr: Representation, target: f64) -> SimTrace {
    let mut x = match repr {
        Representation::Cartesian => cfg.x0,
        Representation::Homogeneous => cfg.x0 * cfg.w0,
    };
    let mut u = match cfg.w_activation {
        WActivation::Linear => cfg.w0,
        WActivation::Exp => cfg.w0.ln(),
    };
    let w_of = |u: f64| match cfg.w_activation {
        WActivation::Linear => u,
        WActivation::Exp => u.exp(),
    };
    let (mut mx, mut mu) = (Moments::default(), Moments::default());
    let mut points = Vec::new();
    let mut iterations_to_tol = None;
    let mut degenerate_events = 0;
    for iter in 0..cfg.max_iters {
        let w = match repr {
            Representation::Cartesian => 1.0,
            Representation::Homogeneous => w_of(u),
        };
        let decoded = x / w;
        let r = target - decoded;
        points.push(SimPoint {
            iter,
            decoded,
            loss: r.abs(),
            x_raw: x,
            w,
        });
        if r.abs() < cfg.tol && iterations_to_tol.is_none() {
            iterations_to_tol = Some(iter);
            if cfg.stop_on_convergence {
                break;
            }
        }
        if iter + 1 == cfg.max_iters {
            break;
        }
        let t = iter + 1;
        match repr {
            Representation::Cartesian => x -= mx.step(-sign(r), cfg.lr, t, cfg.optimizer),
            Representation::Homogeneous => {
                let gx = -sign(r) / w;
                let gw = sign(r) * x / (w * w);
                let gu = match cfg.w_activation {
                    WActivation::Linear => gw,
                    WActivation::Exp => gw * w,
                };
                x -= mx.step(gx, cfg.lr, t, cfg.optimizer);
                if cfg.optimize_w {
                    u -= mu.step(gu, cfg.lr, t, cfg.optimizer);
                    let floor = match cfg.w_activation {
                        WActivation::Linear => MIN_W,
                        WActivation::Exp => MIN_W.ln(),
                    };
                    if !(u > floor) {
                        u = floor;
                        degenerate_events += 1;
                    }
                }
            }
        }
    }
    SimTrace {
        representation: repr,
        target,
        points,
        iterations_to_tol,
        degenerate_events,
    }
}

/// One trace per configured target.
pub fn simulate_1d(cfg: &Sim1DConfig, repr: Representation) -> Result<Vec<SimTrace>> {
    cfg.validate()?;
    Ok(cfg.targets.iter().map(|&t| run_target(cfg, repr, t)).collect())
}

/// Rows `iter,representation,target,decoded_x,loss` for every trace point.
pub fn emit_convergence_csv<W: Write>(out: W, traces: &[SimTrace]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["iter", "representation", "target", "decoded_x", "loss"])?;
    for t in traces {
        for p in &t.points {
            wtr.write_record([
                p.iter.to_string(),
                t.representation.to_string(),
                t.target.to_string(),
                p.decoded.to_string(),
                p.loss.to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("convergence csv", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iters(cfg: &Sim1DConfig, repr: Representation) -> Vec<Option<usize>> {
        simulate_1d(cfg, repr)
            .unwrap()
            .iter()
            .map(|t| t.iterations_to_tol)
            .collect()
    }

    #[test]
    fn target_at_start_is_converged_immediately() {
        let cfg = Sim1DConfig {
            targets: vec![5.0],
            ..Default::default()
        };
        for r in Representation::ALL {
            assert_eq!(iters(&cfg, r), vec![Some(0)]);
        }
    }

    #[test]
    fn cartesian_step_count_is_closed_form() {
        // Unit subgradient steps: n = ceil((|x_t - x0| - tol) / lr) away from
        // ties, for both optimizers (Adam's first moments normalize exactly).
        for opt in [Optimizer1D::Sgd, Optimizer1D::Adam] {
            for (lr, target, tol) in [(0.11, 10.0, 0.5), (0.3, 50.0, 0.5), (0.07, 10.0, 0.4)] {
                let cfg = Sim1DConfig {
                    targets: vec![target],
                    lr,
                    tol,
                    optimizer: opt,
                    ..Default::default()
                };
                let expected = ((target - 5.0 - tol) / lr).ceil() as usize;
                assert_eq!(iters(&cfg, Representation::Cartesian), vec![Some(expected)], "{opt:?} {lr}");
            }
        }
    }

    #[test]
    fn homogeneous_is_faster_for_distant_targets() {
        for lr in [0.03, 0.1, 0.3] {
            let cfg = Sim1DConfig {
                targets: vec![50.0, 200.0, 250.0],
                lr,
                ..Default::default()
            };
            let c = iters(&cfg, Representation::Cartesian);
            let h = iters(&cfg, Representation::Homogeneous);
            for (a, b) in h.iter().zip(&c) {
                assert!(a.unwrap() < b.unwrap(), "lr {lr}: {h:?} vs {c:?}");
            }
        }
    }

    #[test]
    fn x_tilde_only_matches_cartesian_at_unit_weight() {
        let cfg = Sim1DConfig {
            optimize_w: false,
            ..Default::default()
        };
        assert_eq!(iters(&cfg, Representation::Homogeneous), iters(&cfg, Representation::Cartesian));
    }

    #[test]
    fn plain_descent_on_raw_weight_hits_the_clamp() {
        let cfg = Sim1DConfig {
            optimizer: Optimizer1D::Sgd,
            w_activation: WActivation::Linear,
            targets: vec![250.0],
            max_iters: 200,
            ..Default::default()
        };
        let t = &simulate_1d(&cfg, Representation::Homogeneous).unwrap()[0];
        assert!(t.degenerate_events > 0);
        assert!(t.points.iter().all(|p| p.w >= MIN_W));
    }

    #[test]
    fn decode_is_invariant_to_joint_scaling_at_start() {
        let base = Sim1DConfig::default();
        let scaled = Sim1DConfig {
            w0: 7.0,
            ..base.clone()
        };
        let a = &simulate_1d(&base, Representation::Homogeneous).unwrap()[0];
        let b = &simulate_1d(&scaled, Representation::Homogeneous).unwrap()[0];
        assert!((a.points[0].decoded - b.points[0].decoded).abs() < 1e-12);
        assert_eq!(b.points[0].x_raw, 35.0);
    }

    #[test]
    fn traces_fit_in_max_iters() {
        let cfg = Sim1DConfig {
            targets: vec![1e6],
            max_iters: 50,
            ..Default::default()
        };
        for r in Representation::ALL {
            let t = &simulate_1d(&cfg, r).unwrap()[0];
            assert!(t.points.len() <= 50);
            assert_eq!(t.iterations_to_tol, None);
        }
    }

    #[test]
    fn csv_rows_match_trace_lengths() {
        let mut buf = Vec::new();
        emit_convergence_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);

        let cfg = Sim1DConfig::default();
        let mut traces = simulate_1d(&cfg, Representation::Cartesian).unwrap();
        traces.extend(simulate_1d(&cfg, Representation::Homogeneous).unwrap());
        let total: usize = traces.iter().map(|t| t.points.len()).sum();
        let mut buf = Vec::new();
        emit_convergence_csv(&mut buf, &traces).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + total);

        let three = SimTrace {
            points: traces[0].points[..3].to_vec(),
            ..traces[0].clone()
        };
        let mut buf = Vec::new();
        emit_convergence_csv(&mut buf, &[three]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            Sim1DConfig { lr: 0.0, ..Default::default() },
            Sim1DConfig { tol: -1.0, ..Default::default() },
            Sim1DConfig { targets: vec![], ..Default::default() },
        ] {
            assert!(simulate_1d(&cfg, Representation::Cartesian).is_err());
        }
    }
}
