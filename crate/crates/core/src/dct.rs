//! Orthonormal 2-D DCT-II on square blocks and the JPEG-style quantizer.

/// Standard JPEG luminance quantization table (ITU T.81, Annex K), row-major.
pub const LUMA_QUANT_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Luminance table scaled by the IJG quality rule, entries clamped to [1, 255].
pub fn scaled_quant_table(qf: u8) -> [f64; 64] {
    let qf = qf.clamp(1, 100) as u32;
    let scale = if qf < 50 { 5000 / qf } else { 200 - 2 * qf };
    let mut out = [0.0; 64];
    for (o, &q) in out.iter_mut().zip(LUMA_QUANT_TABLE.iter()) {
        *o = ((q as u32 * scale + 50) / 100).clamp(1, 255) as f64;
    }
    out
}

/// `basis[k * n + i] = c_k cos(pi (2i + 1) k / 2n)` with orthonormal scaling.
pub fn dct_basis(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        let c = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            m[k * n + i] =
                c * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    m
}

/// Forward transform of an `n x n` row-major block: `C X C^T`.
pub fn dct2(block: &[f64], n: usize) -> Vec<f64> {
    let c = dct_basis(n);
    transform(block, &c, n, false)
}

/// Inverse transform: `C^T Y C`.
pub fn idct2(coeffs: &[f64], n: usize) -> Vec<f64> {
    let c = dct_basis(n);
    transform(coeffs, &c, n, true)
}

pub(crate) fn transform(x: &[f64], c: &[f64], n: usize, inverse: bool) -> Vec<f64> {
    assert_eq!(x.len(), n * n);
    // m(a, b) = C[a][b] forward, C[b][a] inverse.
    let m = |a: usize, b: usize| if inverse { c[b * n + a] } else { c[a * n + b] };
    let mut tmp = vec![0.0; n * n];
    for r in 0..n {
        for k in 0..n {
            tmp[r * n + k] = (0..n).map(|i| x[r * n + i] * m(k, i)).sum();
        }
    }
    let mut out = vec![0.0; n * n];
    for k in 0..n {
        for col in 0..n {
            out[k * n + col] = (0..n).map(|r| m(k, r) * tmp[r * n + col]).sum();
        }
    }
    out
}
