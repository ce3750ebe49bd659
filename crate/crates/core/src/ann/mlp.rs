//! Single-hidden-layer regression network: tansig hidden units, purelin output,
//! with per-feature affine normalization on both ends.

use rand::Rng;

use super::AnnError;

/// `2 / (1 + exp(-2z)) - 1`, the hyperbolic tangent in its sigmoid form.
pub fn tansig(z: f64) -> f64 {
    2.0 / (1.0 + (-2.0 * z).exp()) - 1.0
}

/// `normalize(x) = (x - offset) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub offset: f64,
    pub scale: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine { offset: 0.0, scale: 1.0 };

    /// Maps `[min, max]` onto `[-1, 1]`. A degenerate range keeps unit scale.
    pub fn from_range(min: f64, max: f64) -> Self {
        let half = 0.5 * (max - min);
        Self { offset: 0.5 * (max + min), scale: if half > 0.0 { half } else { 1.0 } }
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.offset) / self.scale
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.scale + self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub input: Vec<Affine>,
    pub output: Affine,
}

impl Normalization {
    pub fn identity(inputs: usize) -> Self {
        Self { input: vec![Affine::IDENTITY; inputs], output: Affine::IDENTITY }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    inputs: usize,
    hidden: usize,
    /// `hidden x inputs`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `1 x hidden`.
    pub w2: Vec<f64>,
    pub b2: f64,
    pub norm: Normalization,
}

impl Mlp {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            inputs,
            hidden,
            w1: vec![0.0; hidden * inputs],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
            norm: Normalization::identity(inputs),
        }
    }

    /// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn random<R: Rng>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(inputs, hidden);
        let a1 = 1.0 / (inputs as f64).sqrt();
        let a2 = 1.0 / (hidden as f64).sqrt();
        for w in &mut m.w1 {
            *w = rng.gen_range(-a1..=a1);
        }
        for b in &mut m.b1 {
            *b = rng.gen_range(-a1..=a1);
        }
        for w in &mut m.w2 {
            *w = rng.gen_range(-a2..=a2);
        }
        m.b2 = rng.gen_range(-a2..=a2);
        m
    }

    /// Assembles a network from parts, checking shapes and finiteness.
    pub fn from_parts(
        inputs: usize,
        hidden: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
        norm: Normalization,
    ) -> Result<Self, AnnError> {
        let m = Self { inputs, hidden, w1, b1, w2, b2, norm };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), AnnError> {
        let shape = |what: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(AnnError::Shape(format!("{what} has {got} entries, expected {want}")))
            }
        };
        if self.inputs == 0 || self.hidden == 0 {
            return Err(AnnError::Shape("layer sizes must be positive".into()));
        }
        shape("W1", self.w1.len(), self.hidden * self.inputs)?;
        shape("b1", self.b1.len(), self.hidden)?;
        shape("W2", self.w2.len(), self.hidden)?;
        shape("input normalization", self.norm.input.len(), self.inputs)?;
        let all = self.w1.iter().chain(&self.b1).chain(&self.w2).chain(std::iter::once(&self.b2));
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(AnnError::NonFinite("weights".into()));
        }
        for a in self.norm.input.iter().chain(std::iter::once(&self.norm.output)) {
            if !a.offset.is_finite() || !a.scale.is_finite() || a.scale == 0.0 {
                return Err(AnnError::NonFinite(format!("normalization {a:?}")));
            }
        }
        Ok(())
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn param_count(&self) -> usize {
        self.hidden * self.inputs + 2 * self.hidden + 1
    }

    /// Flat parameters in the order `W1, b1, W2, b2`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count(), "parameter vector length");
        let (w1, rest) = p.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, rest) = rest.split_at(self.hidden);
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2 = rest[0];
    }

    pub fn normalize_input(&self, x: &[f64], out: &mut [f64]) {
        for ((o, &v), a) in out.iter_mut().zip(x).zip(&self.norm.input) {
            *o = a.normalize(v);
        }
    }

    /// Output before denormalization, for an already-normalized input.
    fn raw(&self, xn: &[f64], hidden: &mut [f64]) -> f64 {
        let mut out = self.b2;
        for k in 0..self.hidden {
            let row = &self.w1[k * self.inputs..(k + 1) * self.inputs];
            let z = row.iter().zip(xn).fold(self.b1[k], |acc, (w, x)| acc + w * x);
            let h = tansig(z);
            hidden[k] = h;
            out += self.w2[k] * h;
        }
        out
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64, AnnError> {
        if x.len() != self.inputs {
            return Err(AnnError::Shape(format!("input has {} features, network expects {}", x.len(), self.inputs)));
        }
        let mut xn = vec![0.0; self.inputs];
        self.normalize_input(x, &mut xn);
        let mut h = vec![0.0; self.hidden];
        Ok(self.norm.output.denormalize(self.raw(&xn, &mut h)))
    }

    /// Mean squared error of the *normalized* output against normalized
    /// targets over flat row-major normalized inputs, optionally accumulating
    /// its gradient into `grad` (overwritten).
    pub(crate) fn loss_grad_normalized(&self, xn: &[f64], yn: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let n = yn.len();
        let inv = 1.0 / n as f64;
        let mut h = vec![0.0; self.hidden];
        let (nw1, nh) = (self.w1.len(), self.hidden);
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut loss = 0.0;
        for (r, &y) in yn.iter().enumerate() {
            let x = &xn[r * self.inputs..(r + 1) * self.inputs];
            let out = self.raw(x, &mut h);
            let res = out - y;
            loss += res * res;
            if let Some(g) = grad.as_deref_mut() {
                let d_out = 2.0 * res * inv;
                g[nw1 + 2 * nh] += d_out;
                for k in 0..nh {
                    g[nw1 + nh + k] += d_out * h[k];
                    let dz = d_out * self.w2[k] * (1.0 - h[k] * h[k]);
                    g[nw1 + k] += dz;
                    let gw = &mut g[k * self.inputs..(k + 1) * self.inputs];
                    for (gw, xv) in gw.iter_mut().zip(x) {
                        *gw += dz * xv;
                    }
                }
            }
        }
        loss * inv
    }

    /// Exact gradient of `L = (1/N) sum (forward(x) - y)^2` with respect to
    /// the flat parameters, together with `L`.
    pub fn gradient(&self, batch: &[(Vec<f64>, f64)]) -> Result<(f64, Vec<f64>), AnnError> {
        if batch.is_empty() {
            return Err(AnnError::EmptyBatch);
        }
        let mut xn = vec![0.0; batch.len() * self.inputs];
        let mut yn = Vec::with_capacity(batch.len());
        for (r, (x, y)) in batch.iter().enumerate() {
            if x.len() != self.inputs {
                return Err(AnnError::Shape(format!("row {r} has {} features, expected {}", x.len(), self.inputs)));
            }
            self.normalize_input(x, &mut xn[r * self.inputs..(r + 1) * self.inputs]);
            yn.push(self.norm.output.normalize(*y));
        }
        let mut g = vec![0.0; self.param_count()];
        let ln = self.loss_grad_normalized(&xn, &yn, Some(&mut g));
        // forward = s * raw + o, so the residual in output units is s times the
        // normalized residual.
        let s = self.norm.output.scale;
        g.iter_mut().for_each(|v| *v *= s * s);
        Ok((ln * s * s, g))
    }
}
