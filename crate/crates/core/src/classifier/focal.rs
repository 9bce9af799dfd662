//! Binary focal loss, `-alpha_t * (1 - p_t)^gamma * ln(p_t)`.

/// Probabilities are clamped to `[EPS, 1 - EPS]` before the log.
pub const EPS: f64 = 1e-7;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn p_t(p: f64, positive: bool, alpha: f64) -> (f64, f64) {
    let p = p.clamp(EPS, 1.0 - EPS);
    if positive {
        (p, alpha)
    } else {
        (1.0 - p, 1.0 - alpha)
    }
}

pub fn focal_loss(p: f64, positive: bool, alpha: f64, gamma: f64) -> f64 {
    let (pt, at) = p_t(p, positive, alpha);
    -at * (1.0 - pt).powf(gamma) * pt.ln()
}

/// Derivative of the loss with respect to the logit `z`, where `p = sigmoid(z)`.
/// Zero where the probability clamp is active.
pub fn focal_loss_grad_logit(z: f64, positive: bool, alpha: f64, gamma: f64) -> f64 {
    let p = sigmoid(z);
    if !(EPS..=1.0 - EPS).contains(&p) {
        return 0.0;
    }
    let (q, at) = p_t(p, positive, alpha);
    let sign = if positive { 1.0 } else { -1.0 };
    // d/dz of -at (1-q)^g ln q with dq/dz = sign * q (1-q)
    let tail = if gamma == 0.0 { 0.0 } else { gamma * q * q.ln() };
    sign * at * (1.0 - q).powf(gamma) * (tail - (1.0 - q))
}
