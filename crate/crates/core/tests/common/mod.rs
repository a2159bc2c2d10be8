#![allow(dead_code)]

use coagrecon::collision::{q_coag, q_frag, StateField};
use coagrecon::kernels::Kernel;

fn end_weight(j: usize, last: usize, h: f64) -> f64 {
    if last == 0 {
        0.0
    } else if j == 0 || j == last {
        h / 2.0
    } else {
        h
    }
}

/// Direct double sums over node pairs, no precomputed tables.
pub fn coag_oracle(v: &[f64], f: &[f64], k: &Kernel) -> Vec<f64> {
    let h = v[1] - v[0];
    let n = v.len();
    let lookup = |x: f64| -> f64 {
        let idx = (x / h).round() as i64;
        if idx < 0 || idx as usize >= n { 0.0 } else { f[idx as usize] }
    };
    (0..n)
        .map(|i| {
            let mut gain = 0.0;
            for j in 0..=i {
                let s = v[j];
                gain += end_weight(j, i, h) * k.eval(v[i] - s, s) * lookup(v[i] - s) * lookup(s);
            }
            let mut loss = 0.0;
            for j in 0..n {
                loss += end_weight(j, n - 1, h) * k.eval(v[i], v[j]) * f[j];
            }
            0.5 * gain - f[i] * loss
        })
        .collect()
}

pub fn frag_oracle(v: &[f64], f: &[f64], k: &Kernel) -> Vec<f64> {
    let h = v[1] - v[0];
    let n = v.len();
    (0..n)
        .map(|i| {
            let mut loss = 0.0;
            for j in 0..=i {
                loss += end_weight(j, i, h) * k.eval(v[i] - v[j], v[i]);
            }
            let mut gain = 0.0;
            let last = n - 1 - i;
            for j in 0..=last {
                gain += end_weight(j, last, h) * k.eval(v[i], v[j]) * f[i + j];
            }
            2.0 * gain - f[i] * loss
        })
        .collect()
}

/// Largest deviation of `q_coag`/`q_frag` from the direct sums, relative to
/// `1 + max|oracle|`, over every time slice.
pub fn oracle_deviation(field: &StateField, k: &Kernel) -> (f64, f64) {
    let v = field.grid().nodes().to_vec();
    let qc = q_coag(field, k).unwrap();
    let qf = q_frag(field, k).unwrap();
    let (mut dc, mut df) = (0.0f64, 0.0f64);
    for n in 0..field.tgrid().len() {
        let oc = coag_oracle(&v, field.slice(n), k);
        let of = frag_oracle(&v, field.slice(n), k);
        let scale = 1.0 + oc.iter().chain(&of).fold(0.0f64, |a, x| a.max(x.abs()));
        for i in 0..v.len() {
            dc = dc.max((qc.at(i, n) - oc[i]).abs() / scale);
            df = df.max((qf.at(i, n) - of[i]).abs() / scale);
        }
    }
    (dc, df)
}
