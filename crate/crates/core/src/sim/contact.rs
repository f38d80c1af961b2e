//! Smoothed contact force laws.

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function, the derivative of [`softplus`].
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Normal force `k_c * s * ln(1 + exp(-phi / s))`: positive everywhere, C^1 (in fact
/// smooth), decreasing in `phi`, and approaching `k_c * max(0, -phi)` as `s -> 0`.
pub fn smoothed_normal_force(phi: f64, k_c: f64, s: f64) -> f64 {
    debug_assert!(s > 0.0, "smoothing length must be positive");
    k_c * s * softplus(-phi / s)
}

/// `d f / d phi` of [`smoothed_normal_force`].
pub fn smoothed_normal_force_derivative(phi: f64, k_c: f64, s: f64) -> f64 {
    -k_c * sigmoid(-phi / s)
}

/// Regularized Coulomb friction along the tangent: `-mu * f_n * tanh(v_t / eps)`.
pub fn regularized_friction(v_t: f64, f_n: f64, mu: f64, eps: f64) -> f64 {
    -mu * f_n * (v_t / eps).tanh()
}

/// `d f_t / d v_t` of [`regularized_friction`].
pub fn regularized_friction_derivative(v_t: f64, f_n: f64, mu: f64, eps: f64) -> f64 {
    let c = (v_t / eps).cosh();
    -mu * f_n / (eps * c * c)
}
