//! Iterative radix-2 Cooley–Tukey FFT/IFFT over complex vectors, the
//! computational substrate for block-circulant matrix–vector products.
//!
//! Transforms require power-of-two lengths; callers handle other sizes by
//! zero-padding to [`next_pow2`]. A double-precision path (`Complex<f64>`) and
//! a single-precision path (`Complex<f32>`) share the same generic kernel.

use num_complex::Complex;
use num_traits::{Float, FloatConst};

use crate::error::{Error, Result};

fn check_len<T>(x: &[Complex<T>]) -> Result<()> {
    if x.is_empty() || !x.len().is_power_of_two() {
        return Err(Error::length(format!(
            "transform length must be a power of two and >= 1, got {}",
            x.len()
        )));
    }
    Ok(())
}

/// Smallest power of two greater than or equal to `n`.
pub fn next_pow2(n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::domain("next_pow2 requires n >= 1".to_string()));
    }
    Ok(n.next_power_of_two())
}

fn bit_reverse_permute<T: Copy>(data: &mut [Complex<T>]) {
    let n = data.len();
    if n <= 2 {
        return;
    }
    let shift = (n - 1).leading_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> shift;
        if i < j {
            data.swap(i, j);
        }
    }
}

/// In-place decimation-in-time butterflies over bit-reversed data.
///
/// `sign` is -1 for the forward transform and +1 for the inverse; the inverse
/// does not apply the 1/n normalization.
fn transform<T: Float + FloatConst>(data: &mut [Complex<T>], sign: T) {
    let n = data.len();
    if n <= 1 {
        return;
    }
    bit_reverse_permute(data);

    // Twiddle table for the full size; stage k strides through it.
    let step = sign * (T::one() + T::one()) * T::PI() / T::from(n).unwrap();
    let twiddles: Vec<Complex<T>> = (0..n / 2)
        .map(|k| Complex::from_polar(T::one(), step * T::from(k).unwrap()))
        .collect();

    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for j in 0..half {
                let w = twiddles[j * stride];
                let even = data[start + j];
                let odd = data[start + j + half] * w;
                data[start + j] = even + odd;
                data[start + j + half] = even - odd;
            }
        }
        len <<= 1;
    }
}

pub fn fft_in_place<T: Float + FloatConst>(data: &mut [Complex<T>]) -> Result<()> {
    check_len(data)?;
    transform(data, -T::one());
    Ok(())
}

pub fn ifft_in_place<T: Float + FloatConst>(data: &mut [Complex<T>]) -> Result<()> {
    check_len(data)?;
    transform(data, T::one());
    let scale = T::one() / T::from(data.len()).unwrap();
    for v in data.iter_mut() {
        *v = v.scale(scale);
    }
    Ok(())
}

/// Discrete Fourier transform `X[k] = Σ_j x[j]·e^{-2πi jk/n}`.
pub fn fft<T: Float + FloatConst>(x: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    let mut data = x.to_vec();
    fft_in_place(&mut data)?;
    Ok(data)
}

/// Inverse DFT with 1/n normalization, so `ifft(fft(x)) = x`.
pub fn ifft<T: Float + FloatConst>(x: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    let mut data = x.to_vec();
    ifft_in_place(&mut data)?;
    Ok(data)
}

/// Forward transform of a real-valued slice, zero imaginary parts.
pub fn fft_real<T: Float + FloatConst>(x: &[T]) -> Result<Vec<Complex<T>>> {
    let data: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
    fft(&data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Direct O(n²) summation oracle, independent of the radix-2 path.
    fn naive_dft(x: &[Complex64], sign: f64) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, &v) in x.iter().enumerate() {
                    let angle = sign * 2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64;
                    acc += v * Complex64::from_polar(1.0, angle);
                }
                acc
            })
            .collect()
    }

    fn naive_inverse_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len() as f64;
        naive_dft(x, 1.0).into_iter().map(|v| v / n).collect()
    }

    fn max_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    fn random_vec(rng: &mut StdRng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn impulse_transforms_to_all_ones() {
        let x = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        let out = fft(&x).unwrap();
        for v in out {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_transforms_to_scaled_impulse() {
        let x = vec![Complex64::new(1.0, 0.0); 4];
        let out = fft(&x).unwrap();
        assert!((out[0] - Complex64::new(4.0, 0.0)).norm() < 1e-12);
        for v in &out[1..] {
            assert!(v.norm() < 1e-12);
        }
    }

    #[test]
    fn ifft_of_scaled_impulse_is_constant() {
        let x = vec![
            Complex64::new(4.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        let out = ifft(&x).unwrap();
        for v in out {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_dft_oracle() {
        let mut rng = StdRng::seed_from_u64(7);
        for n in [1usize, 2, 4, 8, 16, 32] {
            for _ in 0..20 {
                let x = random_vec(&mut rng, n);
                assert!(max_err(&fft(&x).unwrap(), &naive_dft(&x, -1.0)) < 1e-9);
                assert!(max_err(&ifft(&x).unwrap(), &naive_inverse_dft(&x)) < 1e-9);
            }
        }
    }

    #[test]
    fn roundtrip_identity_n16() {
        let mut rng = StdRng::seed_from_u64(11);
        let x = random_vec(&mut rng, 16);
        let back = ifft(&fft(&x).unwrap()).unwrap();
        assert!(max_err(&back, &x) < 1e-9);
    }

    #[test]
    fn linearity() {
        let mut rng = StdRng::seed_from_u64(13);
        let x = random_vec(&mut rng, 32);
        let y = random_vec(&mut rng, 32);
        let (a, b) = (Complex64::new(1.7, -0.3), Complex64::new(-0.4, 2.1));
        let lhs_in: Vec<Complex64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let lhs = fft(&lhs_in).unwrap();
        let fx = fft(&x).unwrap();
        let fy = fft(&y).unwrap();
        let rhs: Vec<Complex64> = fx.iter().zip(&fy).map(|(u, v)| a * u + b * v).collect();
        assert!(max_err(&lhs, &rhs) < 1e-9);
    }

    #[test]
    fn parseval() {
        let mut rng = StdRng::seed_from_u64(17);
        for n in [2usize, 8, 64, 256] {
            let x = random_vec(&mut rng, n);
            let fx = fft(&x).unwrap();
            let time: f64 = x.iter().map(|v| v.norm_sqr()).sum();
            let freq: f64 = fx.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
            assert!((time - freq).abs() < 1e-9);
        }
    }

    #[test]
    fn single_precision_path_within_coarser_tolerance() {
        let mut rng = StdRng::seed_from_u64(19);
        let x64 = random_vec(&mut rng, 64);
        let x32: Vec<Complex<f32>> = x64
            .iter()
            .map(|v| Complex::new(v.re as f32, v.im as f32))
            .collect();
        let back = ifft(&fft(&x32).unwrap()).unwrap();
        let err = x32
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f32, f32::max);
        assert!(err < 1e-4);

        let f64_ref = fft(&x64).unwrap();
        let f32_out = fft(&x32).unwrap();
        let cross = f64_ref
            .iter()
            .zip(&f32_out)
            .map(|(a, b)| (a - Complex64::new(b.re as f64, b.im as f64)).norm())
            .fold(0.0, f64::max);
        assert!(cross < 1e-4);
    }

    #[test]
    fn non_power_of_two_length_rejected() {
        let x = vec![Complex64::new(0.0, 0.0); 6];
        assert!(matches!(fft(&x), Err(Error::Length(_))));
        assert!(matches!(ifft(&x), Err(Error::Length(_))));
        assert!(matches!(fft::<f64>(&[]), Err(Error::Length(_))));
    }

    #[test]
    fn next_pow2_cases() {
        assert_eq!(next_pow2(1).unwrap(), 1);
        assert_eq!(next_pow2(8).unwrap(), 8);
        assert_eq!(next_pow2(200).unwrap(), 256);
        assert!(matches!(next_pow2(0), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn roundtrip_up_to_1024(exp in 0u32..=10, seed in any::<u64>()) {
            let n = 1usize << exp;
            let mut rng = StdRng::seed_from_u64(seed);
            let x = random_vec(&mut rng, n);
            let back = ifft(&fft(&x).unwrap()).unwrap();
            prop_assert!(max_err(&back, &x) <= 1e-9);
        }
    }
}
