//! Linearization of the outer flux (1 - |z|^2) z.

/// Symmetric 2x2 matrix A(z) = (1 - |z|^2) I - 2 z z^T, stored as [a11, a12, a22].
pub fn ellipticity_matrix(z: [f64; 2]) -> [f64; 3] {
    let q = 1.0 - z[0] * z[0] - z[1] * z[1];
    [q - 2.0 * z[0] * z[0], -2.0 * z[0] * z[1], q - 2.0 * z[1] * z[1]]
}

/// Eigenvalues (1 - |z|^2 across z, 1 - 3|z|^2 along z), larger first.
pub fn ellipticity_eigenvalues(z: [f64; 2]) -> (f64, f64) {
    let r2 = z[0] * z[0] + z[1] * z[1];
    (1.0 - r2, 1.0 - 3.0 * r2)
}

/// Flux (1 - |z|^2) z.
pub fn flux(z: [f64; 2]) -> [f64; 2] {
    let q = 1.0 - z[0] * z[0] - z[1] * z[1];
    [q * z[0], q * z[1]]
}

/// Energy density whose gradient is the flux: |z|^2/2 - |z|^4/4.
pub fn energy_density(z: [f64; 2]) -> f64 {
    let r2 = z[0] * z[0] + z[1] * z[1];
    0.5 * r2 - 0.25 * r2 * r2
}
