use ndarray::{ArrayViewD, ArrayViewMutD};
use sha2::{Digest, Sha256};

/// A struct holding named parameter tensors.
///
/// Gradients are stored in a value of the same type, so visiting a model and
/// its gradient struct yields tensors in matching order.
pub trait Parameters {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, f64>)>);

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>);

    fn params(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        self.visit("", &mut out);
        out
    }

    fn params_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = Vec::new();
        self.visit_mut("", &mut out);
        out
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl<T: Parameters> Parameters for Vec<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, f64>)>) {
        for (i, item) in self.iter().enumerate() {
            item.visit(&join(prefix, &i.to_string()), out);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>) {
        for (i, item) in self.iter_mut().enumerate() {
            item.visit_mut(&join(prefix, &i.to_string()), out);
        }
    }
}

/// A copy of `p` with every parameter set to zero.
pub fn zeros_like<P: Parameters + Clone>(p: &P) -> P {
    let mut z = p.clone();
    for (_, mut t) in z.params_mut() {
        t.fill(0.0);
    }
    z
}

/// `dst += scale * src`, tensor by tensor.
pub fn accumulate<P: Parameters>(dst: &mut P, src: &P, scale: f64) {
    let src = src.params();
    let dst = dst.params_mut();
    assert_eq!(src.len(), dst.len(), "parameter structure mismatch");
    for ((_, mut d), (_, s)) in dst.into_iter().zip(src) {
        d.scaled_add(scale, &s);
    }
}

pub fn parameter_count<P: Parameters>(p: &P) -> usize {
    p.params().iter().map(|(_, t)| t.len()).sum()
}

pub fn max_abs<P: Parameters>(p: &P) -> f64 {
    p.params()
        .iter()
        .flat_map(|(_, t)| t.iter().map(|v| v.abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max)
}

/// All parameter values in visiting order.
pub fn flatten<P: Parameters>(p: &P) -> Vec<f64> {
    let mut out = Vec::with_capacity(parameter_count(p));
    for (_, t) in p.params() {
        out.extend(t.iter());
    }
    out
}

/// Overwrite all parameters from a flat vector produced by [`flatten`].
pub fn set_flat<P: Parameters>(p: &mut P, values: &[f64]) {
    let mut offset = 0;
    for (_, mut t) in p.params_mut() {
        for v in t.iter_mut() {
            *v = values[offset];
            offset += 1;
        }
    }
    assert_eq!(offset, values.len(), "flat parameter length mismatch");
}

/// SHA-256 over names, shapes and exact bit patterns, as a hex string.
pub fn fingerprint<P: Parameters>(p: &P) -> String {
    let mut hasher = Sha256::new();
    for (name, t) in p.params() {
        hasher.update(name.as_bytes());
        for &d in t.shape() {
            hasher.update((d as u64).to_le_bytes());
        }
        for v in t.iter() {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    hex_digest(hasher)
}

pub(crate) fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
