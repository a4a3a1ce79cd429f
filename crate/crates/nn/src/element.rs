use risce_core::Real;

/// Scalar usable by the tensor engine: a [`Real`] with a strided GEMM kernel.
pub trait Element: Real {
    /// `c ← alpha·op(a)·op(b) + beta·c` on row-major storage, where
    /// `op(a)` is `m×k` and `op(b)` is `k×n`. With `ta` set, `a` is stored as
    /// the `k×m` transpose; likewise `tb`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, ta: bool, a: &[Self], tb: bool, b: &[Self], beta: Self, c: &mut [Self]);
}

fn strides(transposed: bool, rows: usize, cols: usize) -> (isize, isize) {
    if transposed {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_element {
    ($t:ty, $kernel:path) => {
        impl Element for $t {
            fn gemm(m: usize, k: usize, n: usize, ta: bool, a: &[Self], tb: bool, b: &[Self], beta: Self, c: &mut [Self]) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm buffer too small");
                let (rsa, csa) = strides(ta, m, k);
                let (rsb, csb) = strides(tb, k, n);
                // SAFETY: the assert above bounds every index reachable through the strides.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_element!(f32, matrixmultiply::sgemm);
impl_element!(f64, matrixmultiply::dgemm);
