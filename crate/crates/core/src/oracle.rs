//! Closed-form thin-film results used to cross-check the grating solver.
//! Nothing here touches the RCWA code path.

use num_complex::Complex64;

/// Power transmittance of a homogeneous film of index `n_film` and
/// thickness `thickness_nm` between a medium `n_in` (incidence side) and
/// `n_out`, at normal incidence. Uses the characteristic-matrix method.
pub fn film_transmittance(n_in: f64, n_film: f64, n_out: f64, thickness_nm: f64, wavelength_nm: f64) -> f64 {
    let (_, t) = film_amplitudes(n_in, n_film, n_out, thickness_nm, wavelength_nm);
    n_out / n_in * t.norm_sqr()
}

/// Power reflectance of the same stack.
pub fn film_reflectance(n_in: f64, n_film: f64, n_out: f64, thickness_nm: f64, wavelength_nm: f64) -> f64 {
    film_amplitudes(n_in, n_film, n_out, thickness_nm, wavelength_nm)
        .0
        .norm_sqr()
}

/// Electric-field reflection and transmission amplitudes from the 2x2
/// characteristic matrix `[[cos d, -i sin d / n], [-i n sin d, cos d]]`.
fn film_amplitudes(n_in: f64, n_film: f64, n_out: f64, thickness_nm: f64, wavelength_nm: f64) -> (Complex64, Complex64) {
    let i = Complex64::new(0.0, 1.0);
    let delta = 2.0 * std::f64::consts::PI * n_film * thickness_nm / wavelength_nm;
    let m11 = Complex64::new(delta.cos(), 0.0);
    let m12 = -i * delta.sin() / n_film;
    let m21 = -i * n_film * delta.sin();
    let m22 = m11;
    // [1 + r; n_in (1 - r)] = M [t; n_out t]
    let b = m11 + m12 * n_out;
    let c = m21 + m22 * n_out;
    let denom = n_in * b + c;
    let r = (n_in * b - c) / denom;
    let t = 2.0 * n_in / denom;
    (r, t)
}

/// Fresnel power transmittance of a bare interface at normal incidence.
pub fn interface_transmittance(n1: f64, n2: f64) -> f64 {
    4.0 * n1 * n2 / ((n1 + n2) * (n1 + n2))
}
