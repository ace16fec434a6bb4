use super::SsmError;

/// Below this `|a Δ|` the input gain uses its Taylor series.
pub const SERIES_CUTOFF: f64 = 1e-6;

/// Zero-order hold for one diagonal entry: `Ā = exp(Δa)`,
/// `B̄ = (exp(Δa) - 1) / a · b`.
///
/// `Δ = 0` is accepted and gives the limit `(1, 0)`.
pub fn discretize(a: f64, b: f64, delta: f64) -> Result<(f64, f64), SsmError> {
    if !delta.is_finite() || delta < 0.0 {
        return Err(SsmError::NonPositiveDelta(delta));
    }
    let z = a * delta;
    Ok((z.exp(), delta * phi1(z) * b))
}

/// `(exp(z) - 1) / z`, continuous at 0.
fn phi1(z: f64) -> f64 {
    if z.abs() < SERIES_CUTOFF {
        1.0 + z / 2.0 + z * z / 6.0
    } else {
        z.exp_m1() / z
    }
}

/// Partial derivatives of one ZOH entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZohDerivatives {
    pub da_bar_da: f64,
    pub da_bar_ddelta: f64,
    pub db_bar_da: f64,
    pub db_bar_db: f64,
    pub db_bar_ddelta: f64,
}

/// ```text
/// dĀ/da = Δ e^{aΔ}              dĀ/dΔ = a e^{aΔ}
/// dB̄/db = (e^{aΔ} - 1) / a      dB̄/dΔ = e^{aΔ} b
/// dB̄/da = b (aΔ e^{aΔ} - e^{aΔ} + 1) / a²  ->  b (Δ²/2 + aΔ³/3) near a = 0
/// ```
pub fn discretize_derivatives(a: f64, b: f64, delta: f64) -> Result<ZohDerivatives, SsmError> {
    if !delta.is_finite() || delta < 0.0 {
        return Err(SsmError::NonPositiveDelta(delta));
    }
    let z = a * delta;
    let e = z.exp();
    let db_bar_da = if z.abs() < SERIES_CUTOFF {
        b * delta * delta * (0.5 + z / 3.0 + z * z / 8.0)
    } else {
        b * (z * e - z.exp_m1()) / (a * a)
    };
    Ok(ZohDerivatives {
        da_bar_da: delta * e,
        da_bar_ddelta: a * e,
        db_bar_da,
        db_bar_db: delta * phi1(z),
        db_bar_ddelta: e * b,
    })
}
