//! FFT plumbing shared by the torus field calculus, the collocation matrix
//! builders, and the time-stepping loops.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Integer wavenumber of FFT bin `idx` on an `n`-point axis, in the range
/// −n/2 < k ≤ n/2 (the Nyquist bin is reported as +n/2).
pub(crate) fn wavenumber(idx: usize, n: usize) -> i64 {
    debug_assert!(idx < n);
    if idx <= n / 2 {
        idx as i64
    } else {
        idx as i64 - n as i64
    }
}

/// True when `idx` is the Nyquist bin of an even `n`-point axis.
pub(crate) fn is_nyquist(idx: usize, n: usize) -> bool {
    n % 2 == 0 && idx == n / 2
}

/// In-place complex DFT over a flat row-major buffer of shape `n^dim`,
/// unnormalized (forward then inverse scales by `n^dim`).
pub(crate) fn fft_nd(dim: usize, n: usize, buf: &mut [Complex64], forward: bool) {
    assert!(dim == 1 || dim == 2, "dim must be 1 or 2");
    assert_eq!(buf.len(), n.pow(dim as u32));
    let mut planner = FftPlanner::<f64>::new();
    let fft = if forward {
        planner.plan_fft_forward(n)
    } else {
        planner.plan_fft_inverse(n)
    };
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    match dim {
        1 => fft.process_with_scratch(buf, &mut scratch),
        _ => {
            for row in buf.chunks_exact_mut(n) {
                fft.process_with_scratch(row, &mut scratch);
            }
            let mut col = vec![Complex64::default(); n];
            for j in 0..n {
                for i in 0..n {
                    col[i] = buf[i * n + j];
                }
                fft.process_with_scratch(&mut col, &mut scratch);
                for i in 0..n {
                    buf[i * n + j] = col[i];
                }
            }
        }
    }
}

/// Fourier coefficients c_k (FFT bin order) of real samples, normalized so
/// that f(x) = Σ_k c_k e^{2πi k·x}.
pub(crate) fn analyze(dim: usize, n: usize, values: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(dim, n, &mut buf, true);
    let scale = 1.0 / buf.len() as f64;
    for c in &mut buf {
        *c *= scale;
    }
    buf
}

/// Real samples from Fourier coefficients (drops the roundoff-level imaginary
/// part that synthesis of a real field leaves behind).
pub(crate) fn synthesize(dim: usize, n: usize, coeffs: &[Complex64]) -> Vec<f64> {
    let mut buf = coeffs.to_vec();
    fft_nd(dim, n, &mut buf, false);
    buf.iter().map(|c| c.re).collect()
}

/// Multiplies coefficient `idx` of a `dim`-dimensional spectrum by the
/// symbol of ∂/∂x_axis (2πik, with the Nyquist derivative set to zero).
pub(crate) fn apply_derivative_symbol(dim: usize, n: usize, coeffs: &mut [Complex64], axis: usize) {
    assert!(axis < dim);
    for (flat, c) in coeffs.iter_mut().enumerate() {
        let idx = axis_index(dim, n, flat, axis);
        if is_nyquist(idx, n) {
            *c = Complex64::default();
        } else {
            let k = wavenumber(idx, n) as f64;
            *c *= Complex64::new(0.0, 2.0 * std::f64::consts::PI * k);
        }
    }
}

/// Multiplies a spectrum by the symbol of the Laplacian, −|2πk|².
pub(crate) fn apply_laplacian_symbol(dim: usize, n: usize, coeffs: &mut [Complex64]) {
    for (flat, c) in coeffs.iter_mut().enumerate() {
        let mut sym = 0.0;
        for axis in 0..dim {
            let k = wavenumber(axis_index(dim, n, flat, axis), n) as f64;
            sym -= (2.0 * std::f64::consts::PI * k).powi(2);
        }
        *c *= sym;
    }
}

/// FFT bin index along `axis` of the flat row-major position `flat`.
pub(crate) fn axis_index(dim: usize, n: usize, flat: usize, axis: usize) -> usize {
    match (dim, axis) {
        (1, 0) => flat,
        (2, 0) => flat / n,
        (2, 1) => flat % n,
        _ => unreachable!("dim/axis out of range"),
    }
}

/// First column of the one-dimensional spectral differentiation matrix of the
/// given order; the full matrix is circulant in the node index difference.
pub(crate) fn circulant_column(n: usize, order: u32) -> Vec<f64> {
    let mut delta = vec![0.0; n];
    delta[0] = 1.0;
    let mut coeffs = analyze(1, n, &delta);
    match order {
        1 => apply_derivative_symbol(1, n, &mut coeffs, 0),
        2 => apply_laplacian_symbol(1, n, &mut coeffs),
        _ => unreachable!("only first and second derivatives are stencilled"),
    }
    synthesize(1, n, &coeffs)
}
