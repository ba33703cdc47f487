use crate::scalar::Scalar;
use crate::tensor::rng::Rng;
use crate::tensor::Matrix;

/// Affine layer `x · w + b` with `w: in×out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub w: Matrix<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> Linear<T> {
    /// Weights uniform in `±√(6/(fan_in+fan_out))`, zero bias.
    fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self {
            w: rng.uniform_matrix(fan_in, fan_out, -limit, limit).cast(),
            b: vec![T::zero(); fan_out],
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w: Matrix::zeros(self.w.rows(), self.w.cols()),
            b: vec![T::zero(); self.b.len()],
        }
    }

    fn forward(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut y = x.matmul(&self.w).expect("layer widths chain");
        for i in 0..y.rows() {
            for (v, &b) in y.row_mut(i).iter_mut().zip(&self.b) {
                *v = *v + b;
            }
        }
        y
    }

    /// Gradients of `w` and `b` given the layer input and output gradient,
    /// plus the gradient with respect to the input.
    fn backward(&self, x: &Matrix<T>, dy: &Matrix<T>) -> (Self, Matrix<T>) {
        let dw = x.transposed_matmul(dy).expect("batch sizes agree");
        let mut db = vec![T::zero(); dy.cols()];
        for i in 0..dy.rows() {
            for (acc, &g) in db.iter_mut().zip(dy.row(i)) {
                *acc = *acc + g;
            }
        }
        let dx = dy.matmul_transposed(&self.w).expect("layer widths chain");
        (Self { w: dw, b: db }, dx)
    }
}

/// Three affine layers with `tanh` after the first two:
/// `in → hidden → hidden → out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub layers: [Linear<T>; 3],
}

/// Activations kept from a forward pass for backpropagation.
pub(crate) struct Trace<T> {
    input: Matrix<T>,
    h1: Matrix<T>,
    h2: Matrix<T>,
}

impl<T: Scalar> Mlp<T> {
    pub fn new(input: usize, hidden: usize, output: usize, rng: &mut Rng) -> Self {
        Self {
            layers: [
                Linear::init(input, hidden, rng),
                Linear::init(hidden, hidden, rng),
                Linear::init(hidden, output, rng),
            ],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: [
                self.layers[0].zeros_like(),
                self.layers[1].zeros_like(),
                self.layers[2].zeros_like(),
            ],
        }
    }

    pub fn forward(&self, x: &Matrix<T>) -> Matrix<T> {
        self.forward_traced(x).0
    }

    pub(crate) fn forward_traced(&self, x: &Matrix<T>) -> (Matrix<T>, Trace<T>) {
        let h1 = self.layers[0].forward(x).map(T::tanh);
        let h2 = self.layers[1].forward(&h1).map(T::tanh);
        let y = self.layers[2].forward(&h2);
        (
            y,
            Trace {
                input: x.clone(),
                h1,
                h2,
            },
        )
    }

    /// Parameter gradients for an output gradient `dy`.
    pub(crate) fn backward(&self, trace: &Trace<T>, dy: &Matrix<T>) -> Self {
        let (g3, dh2) = self.layers[2].backward(&trace.h2, dy);
        let dz2 = tanh_backward(&trace.h2, &dh2);
        let (g2, dh1) = self.layers[1].backward(&trace.h1, &dz2);
        let dz1 = tanh_backward(&trace.h1, &dh1);
        let (g1, _) = self.layers[0].backward(&trace.input, &dz1);
        Self {
            layers: [g1, g2, g3],
        }
    }

    pub fn param_slices(&self) -> [&[T]; 6] {
        let [l1, l2, l3] = &self.layers;
        [
            l1.w.as_slice(),
            &l1.b,
            l2.w.as_slice(),
            &l2.b,
            l3.w.as_slice(),
            &l3.b,
        ]
    }

    pub fn param_slices_mut(&mut self) -> [&mut [T]; 6] {
        let [l1, l2, l3] = &mut self.layers;
        [
            l1.w.as_mut_slice(),
            &mut l1.b,
            l2.w.as_mut_slice(),
            &mut l2.b,
            l3.w.as_mut_slice(),
            &mut l3.b,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices()
            .iter()
            .all(|s| s.iter().all(|x| x.is_finite()))
    }
}

/// `dz = dh ⊙ (1 − h²)` where `h = tanh(z)`.
fn tanh_backward<T: Scalar>(h: &Matrix<T>, dh: &Matrix<T>) -> Matrix<T> {
    h.zip_with(dh, |h, g| g * (T::one() - h * h))
        .expect("same activation shape")
}
