//! Dense row-major f64 tensors and the raw matrix kernels shared by forward
//! and backward passes.

use super::AdError;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, rejecting length mismatches and non-finite values —
    /// this is the graph boundary where NaN/Inf are filtered out.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor, AdError> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(AdError::ShapeMismatch {
                op: "from_vec",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(AdError::NonFinite("from_vec"));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], v: f64) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Row count; only meaningful for matrices.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub(crate) fn require_matrix(&self, op: &'static str) -> Result<(usize, usize), AdError> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            _ => Err(AdError::NotMatrix(op)),
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.shape[1] + col]
    }

    /// Elementwise map into a new tensor of the same shape.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// data += other.data (shapes must already agree).
    pub(crate) fn accumulate(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }
}

pub fn transpose(t: &Tensor) -> Result<Tensor, AdError> {
    let (m, n) = t.require_matrix("transpose")?;
    let mut out = Tensor::zeros(&[n, m]);
    for i in 0..m {
        for j in 0..n {
            out.data[j * m + i] = t.data[i * n + j];
        }
    }
    Ok(out)
}

/// c += a·b over raw row-major slices. The k-major loop keeps every c[i][j]
/// accumulating in a fixed order (deterministic) while the innermost j sweep
/// stays contiguous for vectorization.
fn matmul_into(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (av, brow) in arow.iter().zip(b.chunks_exact(n)) {
            if *av == 0.0 {
                continue;
            }
            for (cv, bv) in crow.iter_mut().zip(brow.iter()) {
                *cv += av * bv;
            }
        }
    }
}

/// (m×k)·(k×n) → (m×n).
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, AdError> {
    let (m, ka) = a.require_matrix("matmul")?;
    let (kb, n) = b.require_matrix("matmul")?;
    if ka != kb {
        return Err(AdError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    let mut out = Tensor::zeros(&[m, n]);
    matmul_into(&mut out.data, &a.data, &b.data, m, ka, n);
    Ok(out)
}

/// a·bᵀ for (m×k)·(n×k) → (m×n); b is transposed once so the main kernel
/// keeps its contiguous inner loop.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor, AdError> {
    matmul(a, &transpose(b)?)
}

/// aᵀ·b for (k×m)·(k×n) → (m×n).
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor, AdError> {
    matmul(&transpose(a)?, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;

    fn naive(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k) = (a.rows(), a.cols());
        let n = b.cols();
        let mut c = Tensor::zeros(&[m, n]);
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for kk in 0..k {
                    s += a.at(i, kk) * b.at(kk, j);
                }
                c.data[i * n + j] = s;
            }
        }
        c
    }

    fn random(shape: &[usize], rng: &mut DetRng) -> Tensor {
        let data = (0..shape.iter().product()).map(|_| rng.uniform(-1.0, 1.0)).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn matmul_shape_and_values() {
        let a = Tensor::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::from_vec(&[3, 1], vec![1., 0., -1.]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[-2.0, -2.0]);
        assert!(matmul(&b, &a).is_err());
    }

    #[test]
    fn variants_agree_with_naive() {
        let mut rng = DetRng::new(2024);
        for (m, k, n) in [(1, 1, 1), (3, 5, 2), (8, 7, 9), (16, 33, 5)] {
            let a = random(&[m, k], &mut rng);
            let b = random(&[k, n], &mut rng);
            let want = naive(&a, &b);
            let got = matmul(&a, &b).unwrap();
            for (x, y) in got.data().iter().zip(want.data()) {
                assert!((x - y).abs() < 1e-12);
            }
            let bt = transpose(&b).unwrap();
            let got_nt = matmul_nt(&a, &bt).unwrap();
            assert_eq!(got_nt.data(), got.data());
            let at = transpose(&a).unwrap();
            let got_tn = matmul_tn(&at, &b).unwrap();
            assert_eq!(got_tn.data(), got.data());
        }
    }

    #[test]
    fn boundary_rejects_nan_and_bad_length() {
        assert!(Tensor::from_vec(&[2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::from_vec(&[2], vec![1.0, f64::INFINITY]).is_err());
        assert!(Tensor::from_vec(&[3], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn transpose_round_trip() {
        let mut rng = DetRng::new(7);
        let a = random(&[5, 9], &mut rng);
        let back = transpose(&transpose(&a).unwrap()).unwrap();
        assert_eq!(a, back);
    }

    // Throughput probe for the training-size matmuls; run by hand with
    // `cargo test -p gridtune-core --release bench_matmul -- --ignored --nocapture`.
    #[test]
    #[ignore]
    fn bench_matmul() {
        let mut rng = DetRng::new(1);
        let a = random(&[128, 64], &mut rng);
        let b = random(&[64, 192], &mut rng);
        let flop_per = 2.0 * 128.0 * 64.0 * 192.0;
        let reps = 20_000;
        let t0 = std::time::Instant::now();
        let mut sink = 0.0;
        for _ in 0..reps {
            sink += matmul(&a, &b).unwrap().data()[0];
        }
        let dt = t0.elapsed().as_secs_f64();
        std::println!(
            "matmul 128x64x192: {:.2} GFLOP/s (sink {sink:.3})",
            flop_per * reps as f64 / dt / 1e9
        );
    }
}
