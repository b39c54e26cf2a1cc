use super::{eval_checked, VectorField};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// States beyond this magnitude abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ForwardEuler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorSettings {
    pub method: Method,
    pub h: f64,
    pub t_end: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            method: Method::Rk4,
            h: 10e-6,
            t_end: 1.0,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::param("integrator.h", "must be positive"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::param("integrator.t_end", "must be positive"));
        }
        if self.h > 100e-6 {
            log::warn!("step {} s exceeds 100 µs; line dynamics may be under-resolved", self.h);
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.t_end / self.h).round().max(1.0) as usize
    }
}

type HookFn<'a, F> = Box<dyn FnMut(&F, &[f64]) -> Result<(F, Vec<f64>)> + 'a>;

/// A change applied at time `t`: returns the field to continue with and the
/// (possibly resized) state.
pub struct EventHook<'a, F> {
    pub t: f64,
    pub apply: HookFn<'a, F>,
}

impl<'a, F> EventHook<'a, F> {
    pub fn new(t: f64, apply: impl FnMut(&F, &[f64]) -> Result<(F, Vec<f64>)> + 'a) -> Self {
        EventHook {
            t,
            apply: Box::new(apply),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrajectoryStatus {
    Completed,
    Diverged { t: f64, index: usize },
}

/// Sampled trajectory; `segment[k]` indexes the field in `fields` that was
/// active for sample `k`.
pub struct Trajectory<F> {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub segment: Vec<usize>,
    pub fields: Vec<F>,
    pub status: TrajectoryStatus,
}

impl<F> Trajectory<F> {
    pub fn last(&self) -> Option<(&f64, &Vec<f64>)> {
        self.t.last().zip(self.x.last())
    }
}

struct Stepper {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Stepper {
    fn new(n: usize) -> Self {
        Stepper {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
        }
    }

    fn resize(&mut self, n: usize) {
        for k in self.k.iter_mut() {
            k.resize(n, 0.0);
        }
        self.tmp.resize(n, 0.0);
    }

    fn step<F: VectorField>(&mut self, f: &F, method: Method, x: &mut [f64], h: f64) -> Result<()> {
        let n = x.len();
        match method {
            Method::ForwardEuler => {
                eval_checked(f, x, &mut self.k[0])?;
                for (xi, ki) in x.iter_mut().zip(&self.k[0]) {
                    *xi += h * ki;
                }
            }
            Method::Rk4 => {
                let [k1, k2, k3, k4] = &mut self.k;
                let tmp = &mut self.tmp;
                eval_checked(f, x, k1)?;
                for i in 0..n {
                    tmp[i] = x[i] + 0.5 * h * k1[i];
                }
                eval_checked(f, tmp, k2)?;
                for i in 0..n {
                    tmp[i] = x[i] + 0.5 * h * k2[i];
                }
                eval_checked(f, tmp, k3)?;
                for i in 0..n {
                    tmp[i] = x[i] + h * k3[i];
                }
                eval_checked(f, tmp, k4)?;
                for i in 0..n {
                    x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        Ok(())
    }
}

fn diverged(x: &[f64]) -> Option<usize> {
    x.iter().position(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT)
}

/// Fixed-step integration on the grid `t_k = k·h`, sampled every
/// `decimation` steps. Hooks falling between grid points split that step so
/// they act at their exact time; a hook on a grid point acts before the
/// sample at that point is recorded.
///
/// ```
/// use droopgrid::solver::{integrate, FnField, IntegratorSettings, Method};
/// let f = FnField::new(1, |x: &[f64], dx: &mut [f64]| dx[0] = -x[0]);
/// let s = IntegratorSettings { method: Method::Rk4, h: 1e-3, t_end: 1.0 };
/// let tr = integrate(f, vec![1.0], &s, Vec::new(), 100).unwrap();
/// let (_, x) = tr.last().unwrap();
/// assert!((x[0] - (-1.0f64).exp()).abs() < 1e-12);
/// ```
pub fn integrate<'a, F: VectorField>(
    field: F,
    x0: Vec<f64>,
    settings: &IntegratorSettings,
    mut hooks: Vec<EventHook<'a, F>>,
    decimation: usize,
) -> Result<Trajectory<F>> {
    settings.validate()?;
    if decimation == 0 {
        return Err(Error::param("decimation", "must be at least 1"));
    }
    if x0.len() != field.dim() {
        return Err(Error::Length {
            expected: field.dim(),
            found: x0.len(),
        });
    }
    if hooks.windows(2).any(|w| w[1].t < w[0].t) || hooks.iter().any(|h| !(h.t >= 0.0)) {
        return Err(Error::Events("hook times must be non-negative and sorted".into()));
    }
    let h = settings.h;
    let n_steps = settings.steps();
    let snap = 1e-6 * h;

    let mut fields = vec![field];
    let mut x = x0;
    let mut stepper = Stepper::new(x.len());
    let mut out = Trajectory {
        t: Vec::with_capacity(n_steps / decimation + 2),
        x: Vec::with_capacity(n_steps / decimation + 2),
        segment: Vec::new(),
        fields: Vec::new(),
        status: TrajectoryStatus::Completed,
    };
    let mut next_hook = 0;

    let fire = |fields: &mut Vec<F>, x: &mut Vec<f64>, hook: &mut EventHook<'a, F>| -> Result<()> {
        let cur = fields.last().expect("at least one field");
        let (f, nx) = (hook.apply)(cur, x)?;
        if nx.len() != f.dim() {
            return Err(Error::Length {
                expected: f.dim(),
                found: nx.len(),
            });
        }
        fields.push(f);
        *x = nx;
        Ok(())
    };

    for k in 0..=n_steps {
        let t = k as f64 * h;
        while next_hook < hooks.len() && (hooks[next_hook].t - t).abs() <= snap {
            fire(&mut fields, &mut x, &mut hooks[next_hook])?;
            stepper.resize(x.len());
            next_hook += 1;
        }
        if k % decimation == 0 {
            out.t.push(t);
            out.x.push(x.clone());
            out.segment.push(fields.len() - 1);
        }
        if k == n_steps {
            break;
        }
        let t_next = (k + 1) as f64 * h;
        let mut t_cur = t;
        while next_hook < hooks.len() && hooks[next_hook].t < t_next - snap {
            let th = hooks[next_hook].t;
            stepper.step(fields.last().unwrap(), settings.method, &mut x, th - t_cur)?;
            t_cur = th;
            fire(&mut fields, &mut x, &mut hooks[next_hook])?;
            stepper.resize(x.len());
            next_hook += 1;
        }
        stepper.step(fields.last().unwrap(), settings.method, &mut x, t_next - t_cur)?;
        if let Some(index) = diverged(&x) {
            out.status = TrajectoryStatus::Diverged { t: t_next, index };
            break;
        }
    }
    out.fields = fields;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::FnField;

    fn decay() -> FnField<impl Fn(&[f64], &mut [f64])> {
        FnField::new(1, |x: &[f64], dx: &mut [f64]| dx[0] = -x[0] / 0.5)
    }

    #[test]
    fn euler_tracks_exponential() {
        let tau = 0.5;
        let h = 1e-4;
        let s = IntegratorSettings {
            method: Method::ForwardEuler,
            h,
            t_end: 2.0,
        };
        let tr = integrate(decay(), vec![1.0], &s, Vec::new(), 10).unwrap();
        for (t, x) in tr.t.iter().zip(&tr.x) {
            let exact = (-t / tau).exp();
            assert!((x[0] - exact).abs() <= 2.0 * h / tau * exact, "t = {t}");
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let err = |h: f64| {
            let s = IntegratorSettings {
                method: Method::Rk4,
                h,
                t_end: 1.0,
            };
            let tr = integrate(decay(), vec![1.0], &s, Vec::new(), 1).unwrap();
            (tr.x.last().unwrap()[0] - (-2.0f64).exp()).abs()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio.log2() - 4.0).abs() < 0.2, "observed order {}", ratio.log2());
    }

    type Plain = FnField<fn(&[f64], &mut [f64])>;

    fn unit_rate(_: &[f64], dx: &mut [f64]) {
        dx[0] = 1.0;
    }

    #[test]
    fn hooks_act_at_exact_times() {
        let f: Plain = FnField::new(1, unit_rate);
        let s = IntegratorSettings {
            method: Method::ForwardEuler,
            h: 0.1,
            t_end: 1.0,
        };
        // reset x to 0 at t = 0.25, between grid points
        let hook = EventHook::new(0.25, |_: &Plain, _: &[f64]| {
            Ok((FnField::new(1, unit_rate as fn(&[f64], &mut [f64])), vec![0.0]))
        });
        let tr = integrate(f, vec![0.0], &s, vec![hook], 1).unwrap();
        assert!((tr.x.last().unwrap()[0] - 0.75).abs() < 1e-12);
        assert_eq!(tr.segment[2], 0);
        assert_eq!(tr.segment[3], 1);
    }

    #[test]
    fn divergence_keeps_prefix() {
        let f = FnField::new(1, |x: &[f64], dx: &mut [f64]| dx[0] = 50.0 * x[0]);
        let s = IntegratorSettings {
            method: Method::Rk4,
            h: 1e-3,
            t_end: 10.0,
        };
        let tr = integrate(f, vec![1.0], &s, Vec::new(), 1).unwrap();
        assert!(matches!(tr.status, TrajectoryStatus::Diverged { index: 0, .. }));
        assert!(tr.t.len() > 10 && tr.x.iter().all(|x| x[0].abs() <= DIVERGENCE_LIMIT));
    }

    #[test]
    fn deterministic() {
        let s = IntegratorSettings::default();
        let a = integrate(decay(), vec![1.0], &s, Vec::new(), 1000).unwrap();
        let b = integrate(decay(), vec![1.0], &s, Vec::new(), 1000).unwrap();
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn unsorted_hooks_rejected() {
        let mk = |t| EventHook::new(t, |_: &Plain, x: &[f64]| Ok((FnField::new(1, unit_rate as fn(&[f64], &mut [f64])), x.to_vec())));
        let f: Plain = FnField::new(1, unit_rate);
        let r = integrate(f, vec![1.0], &IntegratorSettings::default(), vec![mk(0.5), mk(0.2)], 1);
        assert!(r.is_err());
    }
}
