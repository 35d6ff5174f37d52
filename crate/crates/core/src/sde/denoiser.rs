//! Desk-scale trainable score network: three 3×3 convolutions with periodic
//! padding and ReLU activations. The input planes are divided by σ(t) and
//! augmented with one constant plane holding log σ(t); the raw output is
//! divided by σ(t) again. The input scaling keeps pre-activations at unit
//! order across the whole σ range, which is what makes the network
//! trainable at all: fed raw VE-perturbed data, first-layer activations
//! swing with σ(t) over four orders of magnitude and the units die.
//! Gradients are computed by hand and verified against central finite
//! differences.

use ndarray::{Array1, Array2, Array3, Array4, ArrayD, Axis, Ix1, Ix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::model::ScoreModel;
use super::{sample_batch, NoiseSchedule};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct TinyDenoiser {
    channels: usize,
    hidden: usize,
    schedule: NoiseSchedule,
    w1: Array4<f64>,
    b1: Array1<f64>,
    w2: Array4<f64>,
    b2: Array1<f64>,
    w3: Array4<f64>,
    b3: Array1<f64>,
}

struct ForwardCache {
    aug: Array3<f64>,
    z1: Array3<f64>,
    a1: Array3<f64>,
    z2: Array3<f64>,
    a2: Array3<f64>,
    out: Array3<f64>,
    sigma: f64,
}

/// Gradients in the same order as [`TinyDenoiser::parameters`].
struct Gradients {
    w1: Array4<f64>,
    b1: Array1<f64>,
    w2: Array4<f64>,
    b2: Array1<f64>,
    w3: Array4<f64>,
    b3: Array1<f64>,
}

impl TinyDenoiser {
    /// Gaussian-initialized network for `channels`-plane inputs. The hidden
    /// layers use fan-in scaling; the output layer starts near zero so the
    /// initial score estimate is small.
    pub fn new(channels: usize, hidden: usize, schedule: NoiseSchedule, seed: u64) -> Result<Self> {
        if channels == 0 || hidden == 0 {
            return Err(Error::invalid("channels and hidden width must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gaussian = |shape: (usize, usize, usize, usize), std: f64| -> Array4<f64> {
            Array4::from_shape_fn(shape, |_| {
                let z: f64 = rng.sample(StandardNormal);
                z * std
            })
        };
        let std1 = (2.0 / ((channels + 1) * 9) as f64).sqrt();
        let std2 = (2.0 / (hidden * 9) as f64).sqrt();
        let w1 = gaussian((hidden, channels + 1, 3, 3), std1);
        let w2 = gaussian((hidden, hidden, 3, 3), std2);
        let w3 = gaussian((channels, hidden, 3, 3), std2 * 1e-4);
        Ok(TinyDenoiser {
            channels,
            hidden,
            schedule,
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: Array1::zeros(hidden),
            w3,
            b3: Array1::zeros(channels),
        })
    }

    /// All-zero parameters; maps every input to the zero score.
    pub fn zeroed(channels: usize, hidden: usize, schedule: NoiseSchedule) -> Self {
        TinyDenoiser {
            channels,
            hidden,
            schedule,
            w1: Array4::zeros((hidden, channels + 1, 3, 3)),
            b1: Array1::zeros(hidden),
            w2: Array4::zeros((hidden, hidden, 3, 3)),
            b2: Array1::zeros(hidden),
            w3: Array4::zeros((channels, hidden, 3, 3)),
            b3: Array1::zeros(channels),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    /// Rebuild a network from checkpointed parameter tensors; widths are
    /// inferred from the first convolution's shape.
    pub fn from_parameters(params: &[ArrayD<f64>], schedule: NoiseSchedule) -> Result<Self> {
        if params.len() != 6 {
            return Err(Error::invalid(format!(
                "expected 6 parameter tensors, found {}",
                params.len()
            )));
        }
        let w1 = params[0]
            .clone()
            .into_dimensionality::<Ix4>()
            .map_err(|_| Error::invalid("first weight tensor must be 4-dimensional"))?;
        let (hidden, in_c, kh, kw) = w1.dim();
        if kh != 3 || kw != 3 || in_c < 2 {
            return Err(Error::invalid("first weight tensor must be (hidden, C+1, 3, 3)"));
        }
        let channels = in_c - 1;
        let mut net = TinyDenoiser::zeroed(channels, hidden, schedule);
        net.set_parameters(params)?;
        Ok(net)
    }

    fn forward(&self, x: &Array3<f64>, t: f64) -> Result<ForwardCache> {
        let (c, h, w) = x.dim();
        if c != self.channels {
            return Err(Error::ChannelMismatch {
                expected: self.channels,
                got: c,
            });
        }
        let sigma = self.schedule.sigma(t)?;
        let mut aug = Array3::zeros((c + 1, h, w));
        aug.slice_mut(ndarray::s![..c, .., ..])
            .assign(&x.mapv(|v| v / sigma));
        aug.index_axis_mut(Axis(0), c).fill(sigma.ln());

        let z1 = conv3x3(&aug, &self.w1, &self.b1);
        let a1 = z1.mapv(|v| v.max(0.0));
        let z2 = conv3x3(&a1, &self.w2, &self.b2);
        let a2 = z2.mapv(|v| v.max(0.0));
        let z3 = conv3x3(&a2, &self.w3, &self.b3);
        let out = z3.mapv(|v| v / sigma);
        Ok(ForwardCache {
            aug,
            z1,
            a1,
            z2,
            a2,
            out,
            sigma,
        })
    }

    /// Backpropagate `d_out = ∂L/∂output` through the cached forward pass.
    fn backward(&self, cache: &ForwardCache, d_out: &Array3<f64>) -> Gradients {
        let dz3 = d_out.mapv(|v| v / cache.sigma);
        let (dw3, db3, da2) = conv3x3_backward(&cache.a2, &self.w3, &dz3);
        let dz2 = relu_backward(&cache.z2, &da2);
        let (dw2, db2, da1) = conv3x3_backward(&cache.a1, &self.w2, &dz2);
        let dz1 = relu_backward(&cache.z1, &da1);
        let (dw1, db1, _) = conv3x3_backward(&cache.aug, &self.w1, &dz1);
        Gradients {
            w1: dw1,
            b1: db1,
            w2: dw2,
            b2: db2,
            w3: dw3,
            b3: db3,
        }
    }
}

impl ScoreModel for TinyDenoiser {
    fn evaluate(&self, x: &Array3<f64>, t: f64) -> Result<Array3<f64>> {
        Ok(self.forward(x, t)?.out)
    }

    fn trainable(&self) -> bool {
        true
    }

    fn parameters(&self) -> Vec<ArrayD<f64>> {
        vec![
            self.w1.clone().into_dyn(),
            self.b1.clone().into_dyn(),
            self.w2.clone().into_dyn(),
            self.b2.clone().into_dyn(),
            self.w3.clone().into_dyn(),
            self.b3.clone().into_dyn(),
        ]
    }

    fn set_parameters(&mut self, params: &[ArrayD<f64>]) -> Result<()> {
        if params.len() != 6 {
            return Err(Error::invalid(format!(
                "expected 6 parameter tensors, found {}",
                params.len()
            )));
        }
        let shapes = self.parameters();
        for (given, own) in params.iter().zip(shapes.iter()) {
            if given.shape() != own.shape() {
                return Err(Error::invalid(format!(
                    "parameter shape {:?} does not match model shape {:?}",
                    given.shape(),
                    own.shape()
                )));
            }
        }
        let to4 = |p: &ArrayD<f64>| p.clone().into_dimensionality::<Ix4>().expect("checked");
        let to1 = |p: &ArrayD<f64>| p.clone().into_dimensionality::<Ix1>().expect("checked");
        self.w1 = to4(&params[0]);
        self.b1 = to1(&params[1]);
        self.w2 = to4(&params[2]);
        self.b2 = to1(&params[3]);
        self.w3 = to4(&params[4]);
        self.b3 = to1(&params[5]);
        Ok(())
    }

    fn loss_gradients(
        &self,
        batch: &[Array3<f64>],
        schedule: &NoiseSchedule,
        seed: u64,
    ) -> Result<(f64, Vec<ArrayD<f64>>)> {
        if batch.is_empty() {
            return Err(Error::invalid("loss_gradients requires a non-empty batch"));
        }
        let samples = sample_batch(batch, schedule, seed)?;
        let inv_b = 1.0 / samples.len() as f64;
        let mut loss = 0.0;
        let mut acc: Option<Gradients> = None;
        for s in &samples {
            let cache = self.forward(&s.x_t, s.t)?;
            let lambda = s.sigma * s.sigma;
            let diff = &cache.out - &s.target;
            loss += lambda * diff.iter().map(|v| v * v).sum::<f64>() * inv_b;
            let d_out = diff.mapv(|v| 2.0 * lambda * v * inv_b);
            let g = self.backward(&cache, &d_out);
            acc = Some(match acc {
                None => g,
                Some(mut a) => {
                    a.w1 += &g.w1;
                    a.b1 += &g.b1;
                    a.w2 += &g.w2;
                    a.b2 += &g.b2;
                    a.w3 += &g.w3;
                    a.b3 += &g.b3;
                    a
                }
            });
        }
        let g = acc.expect("non-empty batch");
        Ok((
            loss,
            vec![
                g.w1.into_dyn(),
                g.b1.into_dyn(),
                g.w2.into_dyn(),
                g.b2.into_dyn(),
                g.w3.into_dyn(),
                g.b3.into_dyn(),
            ],
        ))
    }
}

fn relu_backward(pre: &Array3<f64>, upstream: &Array3<f64>) -> Array3<f64> {
    ndarray::Zip::from(pre)
        .and(upstream)
        .map_collect(|&z, &d| if z > 0.0 { d } else { 0.0 })
}

/// Plane shifted periodically so that `shifted[y, x] = plane[(y+dy)%H, (x+dx)%W]`.
fn shift_plane(plane: &ndarray::ArrayView2<f64>, dy: isize, dx: isize) -> Array2<f64> {
    let (h, w) = plane.dim();
    let (h_i, w_i) = (h as isize, w as isize);
    Array2::from_shape_fn((h, w), |(y, x)| {
        let sy = (y as isize + dy).rem_euclid(h_i) as usize;
        let sx = (x as isize + dx).rem_euclid(w_i) as usize;
        plane[[sy, sx]]
    })
}

/// All nine periodic shifts of every channel, indexed `[c][ky][kx]` with the
/// kernel offset `dy = ky−1, dx = kx−1` scaled by `sign`.
fn shifted_copies(planes: &Array3<f64>, sign: isize) -> Vec<Vec<Vec<Array2<f64>>>> {
    let c = planes.dim().0;
    (0..c)
        .map(|ci| {
            let plane = planes.index_axis(Axis(0), ci);
            (0..3)
                .map(|ky| {
                    (0..3)
                        .map(|kx| {
                            shift_plane(&plane, sign * (ky as isize - 1), sign * (kx as isize - 1))
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// 3×3 convolution with periodic padding:
/// `out[o,y,x] = b[o] + Σ_{c,ky,kx} w[o,c,ky,kx]·in[c,(y+ky−1)%H,(x+kx−1)%W]`.
fn conv3x3(input: &Array3<f64>, w: &Array4<f64>, b: &Array1<f64>) -> Array3<f64> {
    let (in_c, h, wd) = input.dim();
    let out_c = w.dim().0;
    debug_assert_eq!(w.dim().1, in_c);
    let shifted = shifted_copies(input, 1);
    let mut out = Array3::zeros((out_c, h, wd));
    for o in 0..out_c {
        let mut plane = out.index_axis_mut(Axis(0), o);
        plane.fill(b[o]);
        for (ci, per_channel) in shifted.iter().enumerate() {
            for (ky, per_row) in per_channel.iter().enumerate() {
                for (kx, sh) in per_row.iter().enumerate() {
                    plane.scaled_add(w[[o, ci, ky, kx]], sh);
                }
            }
        }
    }
    out
}

/// Weight, bias, and input gradients of [`conv3x3`] for an upstream
/// gradient `d_out`.
fn conv3x3_backward(
    input: &Array3<f64>,
    w: &Array4<f64>,
    d_out: &Array3<f64>,
) -> (Array4<f64>, Array1<f64>, Array3<f64>) {
    let (in_c, h, wd) = input.dim();
    let out_c = w.dim().0;
    let shifted_in = shifted_copies(input, 1);
    let shifted_dout = shifted_copies(d_out, -1);

    let mut dw = Array4::zeros(w.raw_dim());
    let mut db = Array1::zeros(out_c);
    for o in 0..out_c {
        let grad_plane = d_out.index_axis(Axis(0), o);
        db[o] = grad_plane.sum();
        for ci in 0..in_c {
            for ky in 0..3 {
                for kx in 0..3 {
                    let dot = grad_plane
                        .iter()
                        .zip(shifted_in[ci][ky][kx].iter())
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                    dw[[o, ci, ky, kx]] = dot;
                }
            }
        }
    }

    let mut d_in = Array3::zeros((in_c, h, wd));
    for ci in 0..in_c {
        let mut plane = d_in.index_axis_mut(Axis(0), ci);
        for o in 0..out_c {
            for ky in 0..3 {
                for kx in 0..3 {
                    plane.scaled_add(w[[o, ci, ky, kx]], &shifted_dout[o][ky][kx]);
                }
            }
        }
    }
    (dw, db, d_in)
}
