//! Single-unit cell updates and their analytic backward passes.
//!
//! Every node receives one scalar pre-activation `x` per timestep (the
//! weighted sum over its incoming edges) and maintains one scalar activation
//! `h`. Memory cells additionally use their own previous activation `h_prev`
//! through trained recurrent parameters; the LSTM keeps a separate internal
//! state `c`. Parameter layouts, with counts:
//!
//! - simple (1): `[b]` — `h = tanh(x + b)`
//! - lstm (12): `[wi, ui, bi, wf, uf, bf, wo, uo, bo, wg, ug, bg]`
//!   gates `i, f, o = sigma(w*x + u*h_prev + b)`, candidate `g = tanh(...)`,
//!   `c = f*c_prev + i*g`, `h = o*tanh(c)`
//! - gru (9): `[wz, uz, bz, wr, ur, br, wh, uh, bh]`
//!   `z, r = sigma(...)`, `g = tanh(wh*x + uh*(r*h_prev) + bh)`,
//!   `h = (1-z)*h_prev + z*g`
//! - mgu (6): `[wf, uf, bf, wh, uh, bh]` — single forget gate doubling as
//!   reset: `f = sigma(...)`, `g = tanh(wh*x + uh*(f*h_prev) + bh)`,
//!   `h = (1-f)*h_prev + f*g`
//! - ugrnn (6): `[wg, ug, bg, wc, uc, bc]` — `g = sigma(...)`,
//!   `c = tanh(...)`, `h = g*h_prev + (1-g)*c`
//! - delta_rnn (6): `[alpha, beta1, beta2, v, bz, br]`
//!   `zc = tanh(alpha*v*h_prev*x + beta1*v*h_prev + beta2*x + bz)`,
//!   `r = sigma(x + br)`, `h = tanh((1-r)*zc + r*h_prev)`

use super::NodeKind;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Result of one cell step: new activation, new internal state (LSTM only)
/// and cached gate values for the backward pass.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CellStep {
    pub h: f64,
    pub c: f64,
    pub gates: [f64; 4],
}

/// Gradients flowing out of one cell step.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CellGrad {
    /// Gradient w.r.t. the pre-activation `x` (distributed over incoming edges).
    pub dx: f64,
    /// Gradient w.r.t. the node's own activation one step earlier.
    pub dh_prev: f64,
    /// Gradient w.r.t. the internal state one step earlier (LSTM only).
    pub dc_prev: f64,
}

pub(crate) fn cell_forward(
    kind: NodeKind,
    p: &[f64],
    x: f64,
    h_prev: f64,
    c_prev: f64,
) -> CellStep {
    match kind {
        NodeKind::Input => CellStep {
            h: x,
            ..Default::default()
        },
        NodeKind::Output => CellStep {
            h: x,
            ..Default::default()
        },
        NodeKind::Simple => CellStep {
            h: (x + p[0]).tanh(),
            ..Default::default()
        },
        NodeKind::Lstm => {
            let i = sigmoid(p[0] * x + p[1] * h_prev + p[2]);
            let f = sigmoid(p[3] * x + p[4] * h_prev + p[5]);
            let o = sigmoid(p[6] * x + p[7] * h_prev + p[8]);
            let g = (p[9] * x + p[10] * h_prev + p[11]).tanh();
            let c = f * c_prev + i * g;
            CellStep {
                h: o * c.tanh(),
                c,
                gates: [i, f, o, g],
            }
        }
        NodeKind::Gru => {
            let z = sigmoid(p[0] * x + p[1] * h_prev + p[2]);
            let r = sigmoid(p[3] * x + p[4] * h_prev + p[5]);
            let g = (p[6] * x + p[7] * (r * h_prev) + p[8]).tanh();
            CellStep {
                h: (1.0 - z) * h_prev + z * g,
                c: 0.0,
                gates: [z, r, g, 0.0],
            }
        }
        NodeKind::Mgu => {
            let f = sigmoid(p[0] * x + p[1] * h_prev + p[2]);
            let g = (p[3] * x + p[4] * (f * h_prev) + p[5]).tanh();
            CellStep {
                h: (1.0 - f) * h_prev + f * g,
                c: 0.0,
                gates: [f, g, 0.0, 0.0],
            }
        }
        NodeKind::Ugrnn => {
            let g = sigmoid(p[0] * x + p[1] * h_prev + p[2]);
            let c = (p[3] * x + p[4] * h_prev + p[5]).tanh();
            CellStep {
                h: g * h_prev + (1.0 - g) * c,
                c: 0.0,
                gates: [g, c, 0.0, 0.0],
            }
        }
        NodeKind::DeltaRnn => {
            let (alpha, beta1, beta2, v, bz, br) = (p[0], p[1], p[2], p[3], p[4], p[5]);
            let zc = (alpha * v * h_prev * x + beta1 * v * h_prev + beta2 * x + bz).tanh();
            let r = sigmoid(x + br);
            CellStep {
                h: ((1.0 - r) * zc + r * h_prev).tanh(),
                c: 0.0,
                gates: [zc, r, 0.0, 0.0],
            }
        }
    }
}

/// Backward pass of one cell step. `dh` is the accumulated loss gradient
/// w.r.t. this step's activation, `dc` w.r.t. this step's internal state
/// (from the t+1 step). Parameter gradients are accumulated into `gp`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn cell_backward(
    kind: NodeKind,
    p: &[f64],
    gp: &mut [f64],
    x: f64,
    h_prev: f64,
    c_prev: f64,
    step: &CellStep,
    dh: f64,
    dc: f64,
) -> CellGrad {
    match kind {
        NodeKind::Input => CellGrad::default(),
        NodeKind::Output => CellGrad {
            dx: dh,
            ..Default::default()
        },
        NodeKind::Simple => {
            let dpre = dh * (1.0 - step.h * step.h);
            gp[0] += dpre;
            CellGrad {
                dx: dpre,
                ..Default::default()
            }
        }
        NodeKind::Lstm => {
            let [i, f, o, g] = step.gates;
            let tc = step.c.tanh();
            let dpre_o = dh * tc * o * (1.0 - o);
            let dc_total = dh * o * (1.0 - tc * tc) + dc;
            let dpre_f = dc_total * c_prev * f * (1.0 - f);
            let dpre_i = dc_total * g * i * (1.0 - i);
            let dpre_g = dc_total * i * (1.0 - g * g);
            gp[0] += dpre_i * x;
            gp[1] += dpre_i * h_prev;
            gp[2] += dpre_i;
            gp[3] += dpre_f * x;
            gp[4] += dpre_f * h_prev;
            gp[5] += dpre_f;
            gp[6] += dpre_o * x;
            gp[7] += dpre_o * h_prev;
            gp[8] += dpre_o;
            gp[9] += dpre_g * x;
            gp[10] += dpre_g * h_prev;
            gp[11] += dpre_g;
            CellGrad {
                dx: dpre_i * p[0] + dpre_f * p[3] + dpre_o * p[6] + dpre_g * p[9],
                dh_prev: dpre_i * p[1] + dpre_f * p[4] + dpre_o * p[7] + dpre_g * p[10],
                dc_prev: dc_total * f,
            }
        }
        NodeKind::Gru => {
            let [z, r, g, _] = step.gates;
            let dpre_z = dh * (g - h_prev) * z * (1.0 - z);
            let dpre_g = dh * z * (1.0 - g * g);
            let dpre_r = dpre_g * p[7] * h_prev * r * (1.0 - r);
            gp[0] += dpre_z * x;
            gp[1] += dpre_z * h_prev;
            gp[2] += dpre_z;
            gp[3] += dpre_r * x;
            gp[4] += dpre_r * h_prev;
            gp[5] += dpre_r;
            gp[6] += dpre_g * x;
            gp[7] += dpre_g * (r * h_prev);
            gp[8] += dpre_g;
            CellGrad {
                dx: dpre_z * p[0] + dpre_r * p[3] + dpre_g * p[6],
                dh_prev: dh * (1.0 - z) + dpre_g * p[7] * r + dpre_r * p[4] + dpre_z * p[1],
                dc_prev: 0.0,
            }
        }
        NodeKind::Mgu => {
            let [f, g, _, _] = step.gates;
            let dpre_g = dh * f * (1.0 - g * g);
            // f both mixes the output and gates the candidate's recurrence
            let df = dh * (g - h_prev) + dpre_g * p[4] * h_prev;
            let dpre_f = df * f * (1.0 - f);
            gp[0] += dpre_f * x;
            gp[1] += dpre_f * h_prev;
            gp[2] += dpre_f;
            gp[3] += dpre_g * x;
            gp[4] += dpre_g * (f * h_prev);
            gp[5] += dpre_g;
            CellGrad {
                dx: dpre_f * p[0] + dpre_g * p[3],
                dh_prev: dh * (1.0 - f) + dpre_g * p[4] * f + dpre_f * p[1],
                dc_prev: 0.0,
            }
        }
        NodeKind::Ugrnn => {
            let [g, c, _, _] = step.gates;
            let dpre_g = dh * (h_prev - c) * g * (1.0 - g);
            let dpre_c = dh * (1.0 - g) * (1.0 - c * c);
            gp[0] += dpre_g * x;
            gp[1] += dpre_g * h_prev;
            gp[2] += dpre_g;
            gp[3] += dpre_c * x;
            gp[4] += dpre_c * h_prev;
            gp[5] += dpre_c;
            CellGrad {
                dx: dpre_g * p[0] + dpre_c * p[3],
                dh_prev: dh * g + dpre_g * p[1] + dpre_c * p[4],
                dc_prev: 0.0,
            }
        }
        NodeKind::DeltaRnn => {
            let (alpha, beta1, beta2, v) = (p[0], p[1], p[2], p[3]);
            let [zc, r, _, _] = step.gates;
            let dinner = dh * (1.0 - step.h * step.h);
            let dpre_zc = dinner * (1.0 - r) * (1.0 - zc * zc);
            let dpre_r = dinner * (h_prev - zc) * r * (1.0 - r);
            gp[0] += dpre_zc * v * h_prev * x; // alpha
            gp[1] += dpre_zc * v * h_prev; // beta1
            gp[2] += dpre_zc * x; // beta2
            gp[3] += dpre_zc * (alpha * h_prev * x + beta1 * h_prev); // v
            gp[4] += dpre_zc; // bz
            gp[5] += dpre_r; // br
            CellGrad {
                dx: dpre_zc * (alpha * v * h_prev + beta2) + dpre_r,
                dh_prev: dinner * r + dpre_zc * (alpha * v * x + beta1 * v),
                dc_prev: 0.0,
            }
        }
    }
}
