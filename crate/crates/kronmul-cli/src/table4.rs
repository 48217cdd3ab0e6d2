//! Desk-scale preset: real-world Kron-Matmul shapes. Rows whose K would
//! exceed 2^16 are truncated to fewer factors; the truncation is visible
//! in the row's problem string itself.

use crate::spec::{parse_spec, ProblemSpec};

pub const K_CAP: usize = 1 << 16;

/// (row id, spec string). Chains wider than K_CAP keep their factor shape
/// but drop factors until K fits.
pub fn desk_rows() -> Vec<(usize, ProblemSpec)> {
    let rows: &[&str] = &[
        // LSTM and RNN
        "-m 20 -f 2^7",
        "-m 20 -f 2^9",
        "-m 50 -f 2^9",
        "-m 20 -f 2^10",
        "-m 1 -f 2^11",
        // ML compression
        "-m 10 -f 52x50,65x20",
        "-m 50 -f 32x8,64x128",
        "-m 10 -f 52x65,50x20",
        // HyPA
        "-m 4 -f 2^9",
        "-m 8 -f 2^9",
        "-m 16 -f 2^9",
        "-m 20 -f 2^9",
        "-m 4 -f 8^3",
        "-m 8 -f 8^3",
        "-m 16 -f 8^3",
        "-m 20 -f 8^3",
        // graphs
        "-m 1024 -f 3^7",
        "-m 1024 -f 4^7",
        "-m 1024 -f 6^7",
        // biology
        "-m 1 -f 5^3,2",
        "-m 1 -f 5^2,2,25",
        // drug targets
        "-m 1526 -f 4^6",
        "-m 156 -f 8^3",
        "-m 2967 -f 4^7",
        // Gaussian process kernels
        "-m 16 -f 8^8",
        "-m 16 -f 16^6",
        "-m 16 -f 32^6",
        "-m 16 -f 64^3",
    ];
    rows.iter()
        .enumerate()
        .map(|(i, text)| {
            let mut spec = parse_spec(text).expect("preset rows parse");
            while spec.k() > K_CAP {
                spec.shapes.pop();
            }
            (i + 1, spec)
        })
        .collect()
}
