use crate::flow::{cumulative_monotone, LeadFlow, Spline, KNOTS, MIN_GAP, RAW_PER_SPLINE, SPLINES_PER_FLOW};
use crate::real::{Dual, Real};

/// Free reals per lead for the free-derivative flow: knots, values and
/// derivatives for each of the four splines.
pub const FREE_RAW_PER_LEAD: usize = SPLINES_PER_FLOW * FREE_RAW_PER_SPLINE;
const FREE_RAW_PER_SPLINE: usize = 3 * KNOTS;

/// Loss `z²/2 − ln dz/dx` for one lead time; adds `∂loss/∂raw` into `grad`.
///
/// Each spline's Jacobian with respect to its ten raw inputs and its input
/// `x` comes from forward-mode duals; the chain across the four splines is
/// then unwound in reverse.
pub fn flow_lead_nll(raw: &[f64], anchor: f64, y: f64, grad: Option<&mut [f64]>) -> f64 {
    const N: usize = RAW_PER_SPLINE + 1;
    chain_nll::<N>(raw, y, grad, |r, l| {
        Spline::from_raw(r, if l == 0 { anchor } else { 0.0 })
    })
}

pub(super) fn free_flow_lead_nll(raw: &[f64], anchor: f64, y: f64, grad: Option<&mut [f64]>) -> f64 {
    const N: usize = FREE_RAW_PER_SPLINE + 1;
    chain_nll::<N>(raw, y, grad, |r, l| free_spline(r, if l == 0 { anchor } else { 0.0 }))
}

fn free_spline<T: Real>(raw: &[T], knot_shift: f64) -> Spline<T> {
    let mut knots = cumulative_monotone(&raw[..KNOTS]);
    for k in &mut knots {
        *k = *k + knot_shift;
    }
    let values = cumulative_monotone(&raw[KNOTS..2 * KNOTS]);
    let derivs = std::array::from_fn(|i| raw[2 * KNOTS + i].softplus() + MIN_GAP);
    Spline {
        knots,
        values,
        derivs,
    }
}

/// Free-derivative flow for one lead time from its 60 raw reals.
pub fn free_flow_lead(raw: &[f64], anchor: f64) -> LeadFlow {
    assert_eq!(raw.len(), FREE_RAW_PER_LEAD);
    LeadFlow {
        splines: std::array::from_fn(|l| {
            free_spline(
                &raw[l * FREE_RAW_PER_SPLINE..(l + 1) * FREE_RAW_PER_SPLINE],
                if l == 0 { anchor } else { 0.0 },
            )
        }),
    }
}

fn chain_nll<const N: usize>(
    raw: &[f64],
    y: f64,
    grad: Option<&mut [f64]>,
    build: impl Fn(&[Dual<N>], usize) -> Spline<Dual<N>>,
) -> f64 {
    let per = N - 1;
    assert_eq!(raw.len(), SPLINES_PER_FLOW * per);
    let Some(grad) = grad else {
        // Value only: evaluate on plain floats.
        let mut z = y;
        let mut log_deriv = 0.0;
        for l in 0..SPLINES_PER_FLOW {
            let s = build_f64::<N>(&raw[l * per..(l + 1) * per], l, &build);
            let (next, ld) = s.forward_log(Dual::constant(z));
            z = next.v;
            log_deriv += ld.v;
        }
        return 0.5 * z * z - log_deriv;
    };

    let mut outputs: [Option<(Dual<N>, Dual<N>)>; SPLINES_PER_FLOW] = [None; SPLINES_PER_FLOW];
    let mut x = y;
    let mut log_deriv = 0.0;
    for (l, out) in outputs.iter_mut().enumerate() {
        let vars: Vec<Dual<N>> = raw[l * per..(l + 1) * per]
            .iter()
            .enumerate()
            .map(|(i, &r)| Dual::var(r, i))
            .collect();
        let spline = build(&vars, l);
        let (next, ld) = spline.forward_log(Dual::var(x, per));
        x = next.v;
        log_deriv += ld.v;
        *out = Some((next, ld));
    }
    let z = x;
    // d loss / d z = z; each ln-derivative term enters with weight -1.
    let mut upstream = z;
    for l in (0..SPLINES_PER_FLOW).rev() {
        let (out, ld) = outputs[l].unwrap();
        let g = &mut grad[l * per..(l + 1) * per];
        for i in 0..per {
            g[i] += upstream * out.g[i] - ld.g[i];
        }
        upstream = upstream * out.g[per] - ld.g[per];
    }
    0.5 * z * z - log_deriv
}

fn build_f64<const N: usize>(
    raw: &[f64],
    l: usize,
    build: &impl Fn(&[Dual<N>], usize) -> Spline<Dual<N>>,
) -> Spline<Dual<N>> {
    let consts: Vec<Dual<N>> = raw.iter().map(|&r| Dual::constant(r)).collect();
    build(&consts, l)
}
