//! Adaptive Gauss-Kronrod quadrature and the incomplete beta integral.

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, (k - g).abs() * h)
}

fn adapt(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (k, err) = kronrod(f, a, b);
    if err <= tol || depth == 0 {
        return k;
    }
    let c = 0.5 * (a + b);
    adapt(f, a, c, 0.5 * tol, depth - 1) + adapt(f, c, b, 0.5 * tol, depth - 1)
}

/// `int_a^b f` to about `tol` absolute error.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    adapt(&f, a, b, tol, 40)
}

/// `int_0^s t^(p-1) (1-t)^(q-1) dt` for `s <= 1/2`, after `t = u^(1/p)`
/// removes the endpoint singularity.
fn lower_piece(p: f64, q: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let inv = 1.0 / p;
    let f = move |u: f64| libm::pow(1.0 - libm::pow(u, inv), q - 1.0);
    integrate(f, 0.0, libm::pow(s, p), 1e-15) / p
}

/// `ln B(p, q)`.
pub fn ln_beta(p: f64, q: f64) -> f64 {
    libm::lgamma(p) + libm::lgamma(q) - libm::lgamma(p + q)
}

/// Regularized incomplete beta `I_x(p, q)` for `p, q > 0`.
pub fn incomplete_beta(p: f64, q: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let raw = if x <= 0.5 {
        lower_piece(p, q, x)
    } else {
        lower_piece(p, q, 0.5) + lower_piece(q, p, 0.5) - lower_piece(q, p, 1.0 - x)
    };
    (raw / libm::exp(ln_beta(p, q))).clamp(0.0, 1.0)
}
