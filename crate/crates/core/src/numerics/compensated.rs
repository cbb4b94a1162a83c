//! Error-free transformations and compensated dot products.

/// `a + b = s + e` exactly.
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `a · b = p + e` exactly (barring underflow).
#[inline]
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// `init + Σ a_i b_i`, evaluated as if in twice the working precision.
pub fn dot2<I>(init: f64, terms: I) -> f64
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let mut s = init;
    let mut c = 0.0;
    for (a, b) in terms {
        let (p, ep) = two_prod(a, b);
        let (t, es) = two_sum(s, p);
        s = t;
        c += ep + es;
    }
    s + c
}
