use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

/// Shape of a score model. Parameters live in one flat vector:
///
/// * logistic: `[w_0 .. w_{k-1}, b]`
/// * network: `[W1 (hidden × inputs, row-major), b1 (hidden), w2 (hidden), b2]`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Logistic { inputs: usize },
    Network { inputs: usize, hidden: usize },
}

/// Activations kept from a forward pass for backpropagation.
pub struct Forward {
    pub logits: Vec<f64>,
    hidden: Option<Array2<f64>>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl Architecture {
    pub fn inputs(&self) -> usize {
        match *self {
            Architecture::Logistic { inputs } | Architecture::Network { inputs, .. } => inputs,
        }
    }

    pub fn n_params(&self) -> usize {
        match *self {
            Architecture::Logistic { inputs } => inputs + 1,
            Architecture::Network { inputs, hidden } => hidden * inputs + 2 * hidden + 1,
        }
    }

    /// Mask of parameters subject to weight decay (biases are not).
    pub fn decayed(&self) -> Vec<bool> {
        match *self {
            Architecture::Logistic { inputs } => {
                let mut m = vec![true; inputs + 1];
                m[inputs] = false;
                m
            }
            Architecture::Network { inputs, hidden } => {
                let mut m = vec![true; self.n_params()];
                let b1 = hidden * inputs;
                m[b1..b1 + hidden].iter_mut().for_each(|v| *v = false);
                m[b1 + 2 * hidden] = false;
                m
            }
        }
    }

    pub fn forward(&self, theta: &[f64], x: ArrayView2<f64>) -> Forward {
        debug_assert_eq!(theta.len(), self.n_params());
        match *self {
            Architecture::Logistic { inputs } => {
                let w = ArrayView1::from(&theta[..inputs]);
                let b = theta[inputs];
                let z = x.dot(&w);
                Forward {
                    logits: z.iter().map(|v| v + b).collect(),
                    hidden: None,
                }
            }
            Architecture::Network { inputs, hidden } => {
                let (w1, b1, w2, b2) = split_network(theta, inputs, hidden);
                let mut h = x.dot(&w1.t());
                for mut row in h.rows_mut() {
                    row.iter_mut()
                        .zip(b1.iter())
                        .for_each(|(v, b)| *v = sigmoid(*v + b));
                }
                let z = h.dot(&w2);
                Forward {
                    logits: z.iter().map(|v| v + b2).collect(),
                    hidden: Some(h),
                }
            }
        }
    }

    /// Adds `∂/∂θ Σᵢ dlogits[i]·zᵢ` to `grad`.
    pub fn backward(
        &self,
        theta: &[f64],
        x: ArrayView2<f64>,
        fwd: &Forward,
        dlogits: &[f64],
        grad: &mut [f64],
    ) {
        let dz = ArrayView1::from(dlogits);
        match *self {
            Architecture::Logistic { inputs } => {
                let gw = x.t().dot(&dz);
                for (g, v) in grad[..inputs].iter_mut().zip(gw.iter()) {
                    *g += v;
                }
                grad[inputs] += dz.sum();
            }
            Architecture::Network { inputs, hidden } => {
                let (_, _, w2, _) = split_network(theta, inputs, hidden);
                let h = fwd
                    .hidden
                    .as_ref()
                    .expect("network forward keeps activations");
                let gw2 = h.t().dot(&dz);
                // dH = dz ⊗ w2 ∘ H(1 − H)
                let mut dh = Array2::zeros(h.raw_dim());
                for ((mut drow, hrow), &d) in dh.rows_mut().into_iter().zip(h.rows()).zip(dz.iter())
                {
                    for ((dv, &hv), &wv) in drow.iter_mut().zip(hrow.iter()).zip(w2.iter()) {
                        *dv = d * wv * hv * (1.0 - hv);
                    }
                }
                let gw1 = dh.t().dot(&x);
                let gb1 = dh.sum_axis(Axis(0));
                let b1 = hidden * inputs;
                for (g, v) in grad[..b1].iter_mut().zip(gw1.iter()) {
                    *g += v;
                }
                for (g, v) in grad[b1..b1 + hidden].iter_mut().zip(gb1.iter()) {
                    *g += v;
                }
                for (g, v) in grad[b1 + hidden..b1 + 2 * hidden]
                    .iter_mut()
                    .zip(gw2.iter())
                {
                    *g += v;
                }
                grad[b1 + 2 * hidden] += dz.sum();
            }
        }
    }
}

fn split_network(
    theta: &[f64],
    inputs: usize,
    hidden: usize,
) -> (
    ArrayView2<'_, f64>,
    ArrayView1<'_, f64>,
    ArrayView1<'_, f64>,
    f64,
) {
    let b1 = hidden * inputs;
    let w1 = ArrayView2::from_shape((hidden, inputs), &theta[..b1]).expect("shape");
    let bias1 = ArrayView1::from(&theta[b1..b1 + hidden]);
    let w2 = ArrayView1::from(&theta[b1 + hidden..b1 + 2 * hidden]);
    (w1, bias1, w2, theta[b1 + 2 * hidden])
}

/// Per-feature centring and scaling fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(k: usize) -> Self {
        Self {
            mean: vec![0.0; k],
            scale: vec![1.0; k],
        }
    }

    /// Column means and population standard deviations; constant columns
    /// get scale 1.
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let sd = var.sqrt();
            mean.push(m);
            scale.push(if sd > 1e-12 { sd } else { 1.0 });
        }
        Self { mean, scale }
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        out
    }
}
