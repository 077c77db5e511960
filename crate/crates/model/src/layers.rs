//! Affine, ReLU, inverted dropout and LSTM/BLSTM layers with hand-written
//! reverse-mode gradients. Sequences are time-major `T x dim` matrices.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{ModelError, Result};

/// Flat, named view of one parameter tensor.
pub type Tensor<'a> = (String, Vec<usize>, &'a [f64]);
pub type TensorMut<'a> = (String, &'a mut [f64]);

pub(crate) fn uniform<R: Rng>(rng: &mut R, shape: (usize, usize), bound: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.gen_range(-bound..=bound))
}

fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are kept in standard layout")
}

fn slice2_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are kept in standard layout")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `out x in`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Array2::zeros((output, input)),
            b: Array1::zeros(output),
        }
    }

    /// Uniform in `±1/sqrt(fan_in)` for weights and bias.
    pub fn init<R: Rng>(rng: &mut R, input: usize, output: usize) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let w = uniform(rng, (output, input), bound);
        let b = Array1::from_shape_simple_fn(output, || rng.gen_range(-bound..=bound));
        Self { w, b }
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.w.t());
        y += &self.b;
        y
    }

    /// Accumulates into `grads`; returns `dL/dx` when asked.
    pub fn backward(
        &self,
        x: ArrayView2<f64>,
        dy: ArrayView2<f64>,
        grads: &mut Linear,
        need_dx: bool,
    ) -> Option<Array2<f64>> {
        grads.w += &dy.t().dot(&x);
        grads.b += &dy.sum_axis(Axis(0));
        need_dx.then(|| dy.dot(&self.w))
    }

    pub(crate) fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Tensor<'a>>) {
        out.push((format!("{prefix}.weight"), self.w.shape().to_vec(), slice2(&self.w)));
        out.push((format!("{prefix}.bias"), vec![self.b.len()], self.b.as_slice().unwrap()));
    }

    pub(crate) fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a>>) {
        out.push((format!("{prefix}.weight"), slice2_mut(&mut self.w)));
        out.push((format!("{prefix}.bias"), self.b.as_slice_mut().unwrap()));
    }
}

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// `dy` gated by the ReLU derivative at pre-activation `pre` (0 at 0).
pub fn relu_backward(pre: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    Zip::from(&mut dx).and(pre).for_each(|d, &p| {
        if p <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

/// Inverted-dropout mask: each entry is 0 with probability `p`, otherwise
/// `1/(1-p)`, so evaluation needs no rescaling.
pub fn dropout_mask<R: Rng>(rng: &mut R, rows: usize, cols: usize, p: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn((rows, cols), || if rng.gen::<f64>() < p { 0.0 } else { keep })
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM direction. Gate blocks are stacked `i, f, g, o` along the
/// rows of every weight and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    /// `4H x in`
    pub w_ih: Array2<f64>,
    /// `4H x H`
    pub w_hh: Array2<f64>,
    pub b_ih: Array1<f64>,
    pub b_hh: Array1<f64>,
}

/// Activations recorded by [`Lstm::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    pub x: Array2<f64>,
    pub h: Array2<f64>,
    pub c: Array2<f64>,
    /// Post-nonlinearity gates `[i f g o]`, `T x 4H`.
    pub gates: Array2<f64>,
}

impl Lstm {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Array2::zeros((4 * hidden, input)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            b_ih: Array1::zeros(4 * hidden),
            b_hh: Array1::zeros(4 * hidden),
        }
    }

    /// `w_ih` uniform in `±1/sqrt(in)`; recurrent weights and biases in
    /// `±1/sqrt(H)`.
    pub fn init<R: Rng>(rng: &mut R, input: usize, hidden: usize) -> Self {
        let bi = 1.0 / (input as f64).sqrt();
        let bh = 1.0 / (hidden as f64).sqrt();
        let w_ih = uniform(rng, (4 * hidden, input), bi);
        let w_hh = uniform(rng, (4 * hidden, hidden), bh);
        let b_ih = Array1::from_shape_simple_fn(4 * hidden, || rng.gen_range(-bh..=bh));
        let b_hh = Array1::from_shape_simple_fn(4 * hidden, || rng.gen_range(-bh..=bh));
        Self { w_ih, w_hh, b_ih, b_hh }
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hh.ncols()
    }

    fn step(&self, z: &mut [f64], c_prev: &[f64], c: &mut [f64], h: &mut [f64]) {
        let hd = self.hidden_dim();
        for k in 0..hd {
            let i = sigmoid(z[k]);
            let f = sigmoid(z[hd + k]);
            let g = z[2 * hd + k].tanh();
            let o = sigmoid(z[3 * hd + k]);
            c[k] = f * c_prev[k] + i * g;
            h[k] = o * c[k].tanh();
            z[k] = i;
            z[hd + k] = f;
            z[2 * hd + k] = g;
            z[3 * hd + k] = o;
        }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> LstmTrace {
        let (t_len, hd) = (x.nrows(), self.hidden_dim());
        let mut gates = x.dot(&self.w_ih.t()).as_standard_layout().into_owned();
        let bias = &self.b_ih + &self.b_hh;
        gates += &bias;
        let mut h = Array2::<f64>::zeros((t_len, hd));
        let mut c = Array2::<f64>::zeros((t_len, hd));
        let zero = vec![0.0; hd];
        let w_hh = slice2(&self.w_hh);
        for t in 0..t_len {
            let (h_prev, c_prev): (Vec<f64>, Vec<f64>) = if t == 0 {
                (zero.clone(), zero.clone())
            } else {
                (h.row(t - 1).to_vec(), c.row(t - 1).to_vec())
            };
            let mut z_row = gates.row_mut(t);
            let z = z_row.as_slice_mut().unwrap();
            for (r, zr) in z.iter_mut().enumerate() {
                *zr += dot(&w_hh[r * hd..(r + 1) * hd], &h_prev);
            }
            let mut c_row = c.row_mut(t);
            let mut h_row = h.row_mut(t);
            self.step(z, &c_prev, c_row.as_slice_mut().unwrap(), h_row.as_slice_mut().unwrap());
        }
        LstmTrace {
            x: x.to_owned(),
            h,
            c,
            gates,
        }
    }

    /// Backpropagation through time. `dh` is the loss gradient w.r.t. every
    /// output `h_t`; gradients accumulate into `grads`.
    pub fn backward(
        &self,
        trace: &LstmTrace,
        dh: ArrayView2<f64>,
        grads: &mut Lstm,
        need_dx: bool,
    ) -> Option<Array2<f64>> {
        let (t_len, hd) = (trace.h.nrows(), self.hidden_dim());
        let w_hh_t = self.w_hh.t().as_standard_layout().into_owned();
        let w_hh_t = slice2(&w_hh_t);
        let mut dz = Array2::<f64>::zeros((t_len, 4 * hd));
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        for t in (0..t_len).rev() {
            let g = trace.gates.row(t);
            let c = trace.c.row(t);
            let mut dz_row = dz.row_mut(t);
            let dzs = dz_row.as_slice_mut().unwrap();
            for k in 0..hd {
                let (i, f, gg, o) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
                let tc = c[k].tanh();
                let dhk = dh[[t, k]] + dh_next[k];
                let c_prev = if t > 0 { trace.c[[t - 1, k]] } else { 0.0 };
                let dc = dhk * o * (1.0 - tc * tc) + dc_next[k];
                dzs[k] = dc * gg * i * (1.0 - i);
                dzs[hd + k] = dc * c_prev * f * (1.0 - f);
                dzs[2 * hd + k] = dc * i * (1.0 - gg * gg);
                dzs[3 * hd + k] = dhk * tc * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            for (j, d) in dh_next.iter_mut().enumerate() {
                *d = dot(&w_hh_t[j * 4 * hd..(j + 1) * 4 * hd], dzs);
            }
        }
        grads.w_ih += &dz.t().dot(&trace.x);
        if t_len > 1 {
            grads.w_hh += &dz.slice(s![1.., ..]).t().dot(&trace.h.slice(s![..t_len - 1, ..]));
        }
        let db = dz.sum_axis(Axis(0));
        grads.b_ih += &db;
        grads.b_hh += &db;
        need_dx.then(|| dz.dot(&self.w_ih))
    }

    pub(crate) fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Tensor<'a>>) {
        out.push((format!("{prefix}.w_ih"), self.w_ih.shape().to_vec(), slice2(&self.w_ih)));
        out.push((format!("{prefix}.w_hh"), self.w_hh.shape().to_vec(), slice2(&self.w_hh)));
        out.push((
            format!("{prefix}.b_ih"),
            vec![self.b_ih.len()],
            self.b_ih.as_slice().unwrap(),
        ));
        out.push((
            format!("{prefix}.b_hh"),
            vec![self.b_hh.len()],
            self.b_hh.as_slice().unwrap(),
        ));
    }

    pub(crate) fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a>>) {
        out.push((format!("{prefix}.w_ih"), slice2_mut(&mut self.w_ih)));
        out.push((format!("{prefix}.w_hh"), slice2_mut(&mut self.w_hh)));
        out.push((format!("{prefix}.b_ih"), self.b_ih.as_slice_mut().unwrap()));
        out.push((format!("{prefix}.b_hh"), self.b_hh.as_slice_mut().unwrap()));
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize without reassociation
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Single LSTM time step from explicit state.
pub fn lstm_cell_forward(
    params: &Lstm,
    x_t: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let hd = params.hidden_dim();
    if x_t.len() != params.input_dim() || h_prev.len() != hd || c_prev.len() != hd {
        return Err(ModelError::Shape(format!(
            "cell expects x[{}], h[{hd}], c[{hd}]; got x[{}], h[{}], c[{}]",
            params.input_dim(),
            x_t.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let mut z = (params.w_ih.dot(&x_t) + &params.b_ih + params.w_hh.dot(&h_prev) + &params.b_hh).to_vec();
    let mut c = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    params.step(&mut z, c_prev.to_vec().as_slice(), &mut c, &mut h);
    Ok((Array1::from(h), Array1::from(c)))
}

/// Forward and backward LSTM over the same sequence, outputs concatenated
/// `[forward | backward]` per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Bilstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

#[derive(Debug, Clone)]
pub struct BilstmTrace {
    pub fwd: LstmTrace,
    /// Recorded in reversed time.
    pub bwd: LstmTrace,
}

fn reversed(x: ArrayView2<f64>) -> Array2<f64> {
    x.slice(s![..;-1, ..]).to_owned()
}

impl Bilstm {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            fwd: Lstm::zeros(input, hidden),
            bwd: Lstm::zeros(input, hidden),
        }
    }

    pub fn init<R: Rng>(rng: &mut R, input: usize, hidden: usize) -> Self {
        let fwd = Lstm::init(rng, input, hidden);
        let bwd = Lstm::init(rng, input, hidden);
        Self { fwd, bwd }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden_dim()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, BilstmTrace) {
        let f = self.fwd.forward(x);
        let b = self.bwd.forward(reversed(x).view());
        let hd = self.fwd.hidden_dim();
        let mut out = Array2::zeros((x.nrows(), 2 * hd));
        out.slice_mut(s![.., ..hd]).assign(&f.h);
        out.slice_mut(s![.., hd..]).assign(&b.h.slice(s![..;-1, ..]));
        (out, BilstmTrace { fwd: f, bwd: b })
    }

    pub fn backward(
        &self,
        trace: &BilstmTrace,
        d_out: ArrayView2<f64>,
        grads: &mut Bilstm,
        need_dx: bool,
    ) -> Option<Array2<f64>> {
        let hd = self.fwd.hidden_dim();
        let df = d_out.slice(s![.., ..hd]);
        let db = reversed(d_out.slice(s![.., hd..]));
        let dx_f = self.fwd.backward(&trace.fwd, df, &mut grads.fwd, need_dx);
        let dx_b = self.bwd.backward(&trace.bwd, db.view(), &mut grads.bwd, need_dx);
        match (dx_f, dx_b) {
            (Some(mut a), Some(b)) => {
                a += &b.slice(s![..;-1, ..]);
                Some(a)
            }
            _ => None,
        }
    }

    pub(crate) fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Tensor<'a>>) {
        self.fwd.tensors(&format!("{prefix}.fwd"), out);
        self.bwd.tensors(&format!("{prefix}.bwd"), out);
    }

    pub(crate) fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a>>) {
        self.fwd.tensors_mut(&format!("{prefix}.fwd"), out);
        self.bwd.tensors_mut(&format!("{prefix}.bwd"), out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(17)
    }

    #[test]
    fn zero_cell() {
        let p = Lstm::zeros(3, 2);
        let x = Array1::from(vec![0.3, -1.0, 2.0]);
        let z = Array1::zeros(2);
        let (h, c) = lstm_cell_forward(&p, x.view(), z.view(), z.view()).unwrap();
        assert_eq!(c, Array1::from(vec![0.0, 0.0]));
        assert_eq!(h, Array1::from(vec![0.0, 0.0]));

        let c2 = Array1::from(vec![2.0, 2.0]);
        let (h, c) = lstm_cell_forward(&p, x.view(), z.view(), c2.view()).unwrap();
        assert_eq!(c[0], 1.0);
        assert!((h[0] - 0.380_797_077_977_882_4).abs() < 1e-12);
        assert!(lstm_cell_forward(&p, z.view(), z.view(), z.view()).is_err());
    }

    /// Scalar-loop evaluation of the gate equations with per-gate weights.
    fn oracle_cell(p: &Lstm, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hd = h.len();
        let pre = |gate: usize, k: usize| {
            let r = gate * hd + k;
            let mut s = p.b_ih[r] + p.b_hh[r];
            for (j, xv) in x.iter().enumerate() {
                s += p.w_ih[[r, j]] * xv;
            }
            for (j, hv) in h.iter().enumerate() {
                s += p.w_hh[[r, j]] * hv;
            }
            s
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut hn = vec![0.0; hd];
        let mut cn = vec![0.0; hd];
        for k in 0..hd {
            let i = sig(pre(0, k));
            let f = sig(pre(1, k));
            let g = pre(2, k).tanh();
            let o = sig(pre(3, k));
            cn[k] = f * c[k] + i * g;
            hn[k] = o * cn[k].tanh();
        }
        (hn, cn)
    }

    #[test]
    fn cell_matches_scalar_oracle() {
        let mut r = rng();
        let p = Lstm::init(&mut r, 3, 3);
        let x = [0.5, -0.2, 1.1];
        let h = [0.1, -0.4, 0.3];
        let c = [0.7, 0.0, -0.5];
        let (h1, c1) = lstm_cell_forward(&p, ArrayView1::from(&x), ArrayView1::from(&h), ArrayView1::from(&c)).unwrap();
        let (h2, c2) = oracle_cell(&p, &x, &h, &c);
        for k in 0..3 {
            assert!((h1[k] - h2[k]).abs() < 1e-14);
            assert!((c1[k] - c2[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn blstm_matches_cell_composition() {
        let mut r = rng();
        let bl = Bilstm::init(&mut r, 3, 4);
        let x = uniform(&mut r, (4, 3), 1.0);
        let (out, _) = bl.forward(x.view());
        let run = |p: &Lstm, order: Vec<usize>| {
            let mut h = vec![0.0; 4];
            let mut c = vec![0.0; 4];
            let mut res = vec![vec![0.0; 4]; 4];
            for t in order {
                let (hn, cn) = oracle_cell(p, x.row(t).as_slice().unwrap(), &h, &c);
                res[t] = hn.clone();
                h = hn;
                c = cn;
            }
            res
        };
        let f = run(&bl.fwd, (0..4).collect());
        let b = run(&bl.bwd, (0..4).rev().collect());
        for t in 0..4 {
            for k in 0..4 {
                assert!((out[[t, k]] - f[t][k]).abs() < 1e-13);
                assert!((out[[t, 4 + k]] - b[t][k]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn blstm_single_step_and_time_reversal() {
        let mut r = rng();
        let bl = Bilstm::init(&mut r, 2, 3);
        let (one, _) = bl.forward(uniform(&mut r, (1, 2), 1.0).view());
        assert_eq!(one.dim(), (1, 6));

        let x = uniform(&mut r, (5, 2), 1.0);
        let (y, _) = bl.forward(x.view());
        let swapped = Bilstm {
            fwd: bl.bwd.clone(),
            bwd: bl.fwd.clone(),
        };
        let (yr, _) = swapped.forward(reversed(x.view()).view());
        for t in 0..5 {
            for k in 0..3 {
                assert!((yr[[4 - t, k]] - y[[t, 3 + k]]).abs() < 1e-14);
                assert!((yr[[4 - t, 3 + k]] - y[[t, k]]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dropout_mask_values() {
        let m = dropout_mask(&mut rng(), 50, 40, 0.5);
        assert!(m.iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = m.iter().filter(|&&v| v > 0.0).count() as f64 / 2000.0;
        assert!((kept - 0.5).abs() < 0.05);
    }
}
