use std::fmt;
use std::sync::Arc;

use crate::process::AdaptedProcess;
use crate::truncation::truncate_into;

/// Driver `g(ω, t, y, z)` of a BSDE. `y ∈ R^k`, `z ∈ R^{k×d}` flattened
/// row-major. Implementations may read the path history up to `step`.
pub trait Generator: Send + Sync {
    fn k(&self) -> usize;
    fn d(&self) -> usize;
    fn depends_on_z(&self) -> bool;

    fn label(&self) -> String {
        "generator".into()
    }

    /// Writes `g(t_step, y, z)` on `path` into `out`.
    fn eval(&self, path: usize, step: usize, t: f64, y: &[f64], z: &[f64], out: &mut [f64]);
}

type EvalFn = dyn Fn(usize, usize, f64, &[f64], &[f64], &mut [f64]) + Send + Sync;

/// Generator backed by a closure.
#[derive(Clone)]
pub struct FnGenerator {
    label: String,
    k: usize,
    d: usize,
    depends_on_z: bool,
    f: Arc<EvalFn>,
}

impl FnGenerator {
    pub fn new(
        label: impl Into<String>,
        k: usize,
        d: usize,
        depends_on_z: bool,
        f: impl Fn(usize, usize, f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            k,
            d,
            depends_on_z,
            f: Arc::new(f),
        }
    }

    pub fn zero(k: usize, d: usize) -> Self {
        Self::new("zero", k, d, false, |_, _, _, _, _, out| out.fill(0.0))
    }
}

impl fmt::Debug for FnGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnGenerator")
            .field("label", &self.label)
            .field("k", &self.k)
            .field("d", &self.d)
            .field("depends_on_z", &self.depends_on_z)
            .finish()
    }
}

impl Generator for FnGenerator {
    fn k(&self) -> usize {
        self.k
    }

    fn d(&self) -> usize {
        self.d
    }

    fn depends_on_z(&self) -> bool {
        self.depends_on_z
    }

    fn label(&self) -> String {
        self.label.clone()
    }

    fn eval(&self, path: usize, step: usize, t: f64, y: &[f64], z: &[f64], out: &mut [f64]) {
        (self.f)(path, step, t, y, z, out)
    }
}

/// `gⁿ(t,y,z) = g(t,y,z) − g(t,0,z) + q_{n e^{−t}}(g(t,0,z))`.
#[derive(Clone)]
pub struct TruncatedGenerator {
    inner: Arc<dyn Generator>,
    level: f64,
}

impl TruncatedGenerator {
    pub fn new(inner: Arc<dyn Generator>, level: f64) -> Self {
        Self { inner, level }
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    /// The radius `n e^{−t}` of the truncated free term.
    #[inline]
    pub fn radius(&self, t: f64) -> f64 {
        self.level * (-t).exp()
    }
}

impl Generator for TruncatedGenerator {
    fn k(&self) -> usize {
        self.inner.k()
    }

    fn d(&self) -> usize {
        self.inner.d()
    }

    fn depends_on_z(&self) -> bool {
        self.inner.depends_on_z()
    }

    fn label(&self) -> String {
        format!("{} truncated at level {}", self.inner.label(), self.level)
    }

    fn eval(&self, path: usize, step: usize, t: f64, y: &[f64], z: &[f64], out: &mut [f64]) {
        let k = out.len();
        let zero = vec![0.0; k];
        let mut free = vec![0.0; k];
        self.inner.eval(path, step, t, &zero, z, &mut free);
        let mut clipped = vec![0.0; k];
        if truncate_into(&free, self.radius(t), &mut clipped).is_err() {
            clipped.fill(f64::NAN);
        }
        self.inner.eval(path, step, t, y, z, out);
        for i in 0..k {
            out[i] = out[i] - free[i] + clipped[i];
        }
    }
}

/// `g(t, y, z̄_t)` with `z̄` a fixed process: the driver of one Picard stage.
#[derive(Clone)]
pub struct FrozenZGenerator {
    inner: Arc<dyn Generator>,
    z: Arc<AdaptedProcess>,
}

impl FrozenZGenerator {
    pub fn new(inner: Arc<dyn Generator>, z: Arc<AdaptedProcess>) -> Self {
        Self { inner, z }
    }
}

impl Generator for FrozenZGenerator {
    fn k(&self) -> usize {
        self.inner.k()
    }

    fn d(&self) -> usize {
        self.inner.d()
    }

    fn depends_on_z(&self) -> bool {
        false
    }

    fn label(&self) -> String {
        format!("{} with frozen z", self.inner.label())
    }

    fn eval(&self, path: usize, step: usize, t: f64, y: &[f64], _z: &[f64], out: &mut [f64]) {
        self.inner.eval(path, step, t, y, self.z.at(path, step), out)
    }
}

/// `s·g(t, y/s, z/s)`: the driver of `(s·y, s·z)` when `(y, z)` solves `g`.
#[derive(Clone)]
pub struct ScaledGenerator {
    inner: Arc<dyn Generator>,
    scale: f64,
}

impl ScaledGenerator {
    pub fn new(inner: Arc<dyn Generator>, scale: f64) -> Self {
        assert!(scale > 0.0 && scale.is_finite(), "scale must be positive and finite");
        Self { inner, scale }
    }
}

impl Generator for ScaledGenerator {
    fn k(&self) -> usize {
        self.inner.k()
    }

    fn d(&self) -> usize {
        self.inner.d()
    }

    fn depends_on_z(&self) -> bool {
        self.inner.depends_on_z()
    }

    fn label(&self) -> String {
        format!("{} scaled by {}", self.inner.label(), self.scale)
    }

    fn eval(&self, path: usize, step: usize, t: f64, y: &[f64], z: &[f64], out: &mut [f64]) {
        let s = self.scale;
        let ys: Vec<f64> = y.iter().map(|v| v / s).collect();
        let zs: Vec<f64> = z.iter().map(|v| v / s).collect();
        self.inner.eval(path, step, t, &ys, &zs, out);
        for o in out.iter_mut() {
            *o *= s;
        }
    }
}
