//! Separable 3D transform used by collaborative filtering: an orthonormal
//! 2D DCT-II on every block followed by an orthonormal Walsh-Hadamard
//! transform along the stacking axis.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransformError {
    #[error("unsupported block size {0} (expected a power of two in 2..=64)")]
    UnsupportedSize(usize),
    #[error("length {0} is not a power of two in 1..=32")]
    NotPowerOfTwo(usize),
    #[error("buffer of {len} values does not hold {count} blocks of {size}x{size}")]
    BadStack { len: usize, size: usize, count: usize },
}

pub const MAX_DCT_SIZE: usize = 64;
pub const MAX_WHT_LEN: usize = 32;

/// Orthonormal DCT-II basis for one block size, `basis[k * n + i] = c(k) cos(pi (2i+1) k / 2n)`.
#[derive(Debug)]
pub struct Dct2 {
    size: usize,
    basis: Vec<f64>,
}

static DCT_CACHE: [OnceLock<Dct2>; 6] = [const { OnceLock::new() }; 6];

impl Dct2 {
    /// Shared basis for `size`; built once per process.
    pub fn get(size: usize) -> Result<&'static Dct2, TransformError> {
        if !(2..=MAX_DCT_SIZE).contains(&size) || !size.is_power_of_two() {
            return Err(TransformError::UnsupportedSize(size));
        }
        let slot = size.trailing_zeros() as usize - 1;
        Ok(DCT_CACHE[slot].get_or_init(|| Dct2::build(size)))
    }

    fn build(n: usize) -> Dct2 {
        let mut basis = vec![0.0; n * n];
        let c0 = (1.0 / n as f64).sqrt();
        let ck = (2.0 / n as f64).sqrt();
        for k in 0..n {
            let c = if k == 0 { c0 } else { ck };
            for i in 0..n {
                basis[k * n + i] =
                    c * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
            }
        }
        Dct2 { size: n, basis }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// `out = C · block · Cᵀ`. `scratch` must hold `size²` values.
    pub fn forward_into(&self, block: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        let n = self.size;
        // rows: scratch[r][k] = Σ_i block[r][i] C[k][i]
        for r in 0..n {
            let row = &block[r * n..(r + 1) * n];
            for k in 0..n {
                let b = &self.basis[k * n..(k + 1) * n];
                scratch[r * n + k] = row.iter().zip(b).map(|(x, c)| x * c).sum();
            }
        }
        // columns: out[k][c] = Σ_r C[k][r] scratch[r][c]
        for k in 0..n {
            let b = &self.basis[k * n..(k + 1) * n];
            for c in 0..n {
                let mut acc = 0.0;
                for r in 0..n {
                    acc += b[r] * scratch[r * n + c];
                }
                out[k * n + c] = acc;
            }
        }
    }

    /// `out = Cᵀ · coeffs · C`.
    pub fn inverse_into(&self, coeffs: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        let n = self.size;
        // columns: scratch[r][c] = Σ_k C[k][r] coeffs[k][c]
        scratch[..n * n].fill(0.0);
        for k in 0..n {
            let b = &self.basis[k * n..(k + 1) * n];
            let crow = &coeffs[k * n..(k + 1) * n];
            for r in 0..n {
                let w = b[r];
                let dst = &mut scratch[r * n..(r + 1) * n];
                for (d, &v) in dst.iter_mut().zip(crow) {
                    *d += w * v;
                }
            }
        }
        // rows: out[r][i] = Σ_k scratch[r][k] C[k][i]
        out[..n * n].fill(0.0);
        for r in 0..n {
            for k in 0..n {
                let w = scratch[r * n + k];
                let b = &self.basis[k * n..(k + 1) * n];
                let dst = &mut out[r * n..(r + 1) * n];
                for (d, &c) in dst.iter_mut().zip(b) {
                    *d += w * c;
                }
            }
        }
    }
}

fn check_block(len: usize, size: usize) -> Result<&'static Dct2, TransformError> {
    let dct = Dct2::get(size)?;
    if len != size * size {
        return Err(TransformError::BadStack {
            len,
            size,
            count: 1,
        });
    }
    Ok(dct)
}

pub fn dct2_forward(samples: &[f64], size: usize) -> Result<Vec<f64>, TransformError> {
    let dct = check_block(samples.len(), size)?;
    let mut out = vec![0.0; size * size];
    let mut scratch = vec![0.0; size * size];
    dct.forward_into(samples, &mut out, &mut scratch);
    Ok(out)
}

pub fn dct2_inverse(coeffs: &[f64], size: usize) -> Result<Vec<f64>, TransformError> {
    let dct = check_block(coeffs.len(), size)?;
    let mut out = vec![0.0; size * size];
    let mut scratch = vec![0.0; size * size];
    dct.inverse_into(coeffs, &mut out, &mut scratch);
    Ok(out)
}

fn check_wht_len(len: usize) -> Result<(), TransformError> {
    if len == 0 || len > MAX_WHT_LEN || !len.is_power_of_two() {
        return Err(TransformError::NotPowerOfTwo(len));
    }
    Ok(())
}

/// In-place orthonormal Walsh-Hadamard butterfly (natural order). Self-inverse.
pub fn wht1_in_place(v: &mut [f64]) -> Result<(), TransformError> {
    check_wht_len(v.len())?;
    let mut h = 1;
    while h < v.len() {
        for start in (0..v.len()).step_by(2 * h) {
            for i in start..start + h {
                let a = v[i];
                let b = v[i + h];
                v[i] = (a + b) * FRAC_1_SQRT_2;
                v[i + h] = (a - b) * FRAC_1_SQRT_2;
            }
        }
        h *= 2;
    }
    Ok(())
}

pub fn wht1_forward(v: &[f64]) -> Result<Vec<f64>, TransformError> {
    let mut out = v.to_vec();
    wht1_in_place(&mut out)?;
    Ok(out)
}

pub fn wht1_inverse(v: &[f64]) -> Result<Vec<f64>, TransformError> {
    wht1_forward(v)
}

/// Coefficients of a transformed block stack, laid out `[member][u][v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum3D {
    pub size: usize,
    pub group_size: usize,
    pub coeffs: Vec<f64>,
}

impl Spectrum3D {
    pub fn zeros(size: usize, group_size: usize) -> Self {
        Self {
            size,
            group_size,
            coeffs: vec![0.0; size * size * group_size],
        }
    }

    #[inline]
    pub fn at(&self, member: usize, u: usize, v: usize) -> f64 {
        self.coeffs[(member * self.size + u) * self.size + v]
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }
}

fn wht_along_group(data: &mut [f64], plane: usize, count: usize) {
    if count == 1 {
        return;
    }
    let mut column = [0.0f64; MAX_WHT_LEN];
    for p in 0..plane {
        for m in 0..count {
            column[m] = data[m * plane + p];
        }
        wht1_in_place(&mut column[..count]).expect("group length checked by caller");
        for m in 0..count {
            data[m * plane + p] = column[m];
        }
    }
}

/// 2D DCT of every member, then WHT across members at each `(u, v)`.
///
/// `stack` holds `count` row-major `size`×`size` blocks back to back.
pub fn group_forward(stack: &[f64], size: usize, count: usize) -> Result<Spectrum3D, TransformError> {
    let dct = Dct2::get(size)?;
    check_wht_len(count)?;
    let plane = size * size;
    if stack.len() != plane * count {
        return Err(TransformError::BadStack {
            len: stack.len(),
            size,
            count,
        });
    }
    let mut coeffs = vec![0.0; stack.len()];
    let mut scratch = vec![0.0; plane];
    for (src, dst) in stack.chunks_exact(plane).zip(coeffs.chunks_exact_mut(plane)) {
        dct.forward_into(src, dst, &mut scratch);
    }
    wht_along_group(&mut coeffs, plane, count);
    Ok(Spectrum3D {
        size,
        group_size: count,
        coeffs,
    })
}

/// Exact reverse of [`group_forward`]: WHT across members, then inverse 2D DCT.
pub fn group_inverse(spectrum: &Spectrum3D) -> Result<Vec<f64>, TransformError> {
    let dct = Dct2::get(spectrum.size)?;
    check_wht_len(spectrum.group_size)?;
    let plane = spectrum.size * spectrum.size;
    if spectrum.coeffs.len() != plane * spectrum.group_size {
        return Err(TransformError::BadStack {
            len: spectrum.coeffs.len(),
            size: spectrum.size,
            count: spectrum.group_size,
        });
    }
    let mut tmp = spectrum.coeffs.clone();
    wht_along_group(&mut tmp, plane, spectrum.group_size);
    let mut out = vec![0.0; tmp.len()];
    let mut scratch = vec![0.0; plane];
    for (src, dst) in tmp.chunks_exact(plane).zip(out.chunks_exact_mut(plane)) {
        dct.inverse_into(src, dst, &mut scratch);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    /// Textbook DCT-II straight from the definition, no shared basis table.
    fn naive_dct2(x: &[f64], n: usize) -> Vec<f64> {
        let c = |k: usize| {
            if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            }
        };
        let mut out = vec![0.0; n * n];
        for u in 0..n {
            for v in 0..n {
                let mut acc = 0.0;
                for r in 0..n {
                    for s in 0..n {
                        acc += x[r * n + s]
                            * (PI * (2 * r + 1) as f64 * u as f64 / (2 * n) as f64).cos()
                            * (PI * (2 * s + 1) as f64 * v as f64 / (2 * n) as f64).cos();
                    }
                }
                out[u * n + v] = c(u) * c(v) * acc;
            }
        }
        out
    }

    #[test]
    fn constant_block_maps_to_dc() {
        let coeffs = dct2_forward(&[8.0; 16], 4).unwrap();
        assert!((coeffs[0] - 32.0).abs() < 1e-9);
        assert!(coeffs[1..].iter().all(|c| c.abs() < 1e-9));
        let mut dc_only = vec![0.0; 16];
        dc_only[0] = 32.0;
        let back = dct2_inverse(&dc_only, 4).unwrap();
        assert!(close(&back, &[8.0; 16], 1e-9));
    }

    #[test]
    fn zero_in_zero_out() {
        assert!(dct2_forward(&[0.0; 64], 8).unwrap().iter().all(|&c| c == 0.0));
        assert!(dct2_inverse(&[0.0; 64], 8).unwrap().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn unsupported_sizes() {
        assert_eq!(dct2_forward(&[0.0; 9], 3), Err(TransformError::UnsupportedSize(3)));
        assert_eq!(
            dct2_forward(&[0.0; 128 * 128], 128),
            Err(TransformError::UnsupportedSize(128))
        );
        assert_eq!(dct2_inverse(&[0.0; 36], 6), Err(TransformError::UnsupportedSize(6)));
    }

    #[test]
    fn matches_definition() {
        for n in [4usize, 8, 16] {
            let x: Vec<f64> = (0..n * n).map(|i| ((i * 37) % 101) as f64 - 50.0).collect();
            assert!(close(&dct2_forward(&x, n).unwrap(), &naive_dct2(&x, n), 1e-9));
        }
    }

    #[test]
    fn wht_examples() {
        assert_eq!(wht1_forward(&[3.5]).unwrap(), vec![3.5]);
        let s = std::f64::consts::SQRT_2;
        assert!(close(&wht1_forward(&[1.0, 1.0]).unwrap(), &[s, 0.0], 1e-12));
        assert!(close(&wht1_forward(&[1.0, -1.0]).unwrap(), &[0.0, s], 1e-12));
        assert_eq!(wht1_forward(&[1.0; 3]), Err(TransformError::NotPowerOfTwo(3)));
        assert_eq!(wht1_forward(&[]), Err(TransformError::NotPowerOfTwo(0)));
        assert_eq!(wht1_forward(&[0.0; 64]), Err(TransformError::NotPowerOfTwo(64)));
    }

    #[test]
    fn identical_constant_blocks_have_one_coefficient() {
        let stack = vec![5.0; 8 * 64];
        let spectrum = group_forward(&stack, 8, 8).unwrap();
        // DC of each block is 8*5 = 40; WHT over 8 identical values gives 40*sqrt(8).
        assert!((spectrum.coeffs[0] - 40.0 * 8f64.sqrt()).abs() < 1e-9);
        assert!(spectrum.coeffs[1..].iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn single_member_group_is_plain_dct() {
        let x: Vec<f64> = (0..64).map(|i| (i * i % 17) as f64).collect();
        let spectrum = group_forward(&x, 8, 1).unwrap();
        assert_eq!(spectrum.coeffs, dct2_forward(&x, 8).unwrap());
    }

    #[test]
    fn bad_stack_length() {
        assert!(matches!(
            group_forward(&[0.0; 100], 8, 2),
            Err(TransformError::BadStack { .. })
        ));
        assert_eq!(
            group_forward(&[0.0; 64 * 3], 8, 3),
            Err(TransformError::NotPowerOfTwo(3))
        );
    }

    fn stack_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
        (1u32..=3, 0u32..=5).prop_flat_map(|(s, g)| {
            let size = 2usize << s;
            let count = 1usize << g;
            proptest::collection::vec(-255.0f64..255.0, size * size * count)
                .prop_map(move |v| (size, count, v))
        })
    }

    proptest! {
        #[test]
        fn group_roundtrip_and_parseval((size, count, stack) in stack_strategy()) {
            let spectrum = group_forward(&stack, size, count).unwrap();
            let back = group_inverse(&spectrum).unwrap();
            prop_assert!(close(&back, &stack, 1e-9));
            let e_in: f64 = stack.iter().map(|x| x * x).sum();
            prop_assert!((spectrum.energy() - e_in).abs() <= 1e-6 * e_in.max(1e-12));
        }

        #[test]
        fn group_linear(
            (size, count, x) in stack_strategy(),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let y: Vec<f64> = x.iter().rev().map(|v| v * 0.5 + 1.0).collect();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
            let tx = group_forward(&x, size, count).unwrap();
            let ty = group_forward(&y, size, count).unwrap();
            let tm = group_forward(&mix, size, count).unwrap();
            let expect: Vec<f64> = tx.coeffs.iter().zip(&ty.coeffs).map(|(a, b)| alpha * a + beta * b).collect();
            prop_assert!(close(&tm.coeffs, &expect, 1e-9));
        }

        #[test]
        fn wht_self_inverse(v in proptest::collection::vec(-100.0f64..100.0, 16)) {
            let t = wht1_forward(&v).unwrap();
            prop_assert!(close(&wht1_inverse(&t).unwrap(), &v, 1e-12));
        }
    }
}
