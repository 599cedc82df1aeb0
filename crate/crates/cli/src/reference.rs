//! Published step counts and stepsizes for the benchmark quadratic
//! (`d = 20`, `H = diag(i²)`, `S ∝ H^β`, `Tr(S) = d`), used for the
//! comparison columns of `table1` and `table2`.

use infonoise::quadsim::MethodKind;

/// Thresholds, in row-block order.
pub const THRESHOLDS: [f64; 3] = [1.0, 0.1, 0.01];
/// Noise exponents, in column order.
pub const BETAS: [i32; 3] = [1, 0, -1];
/// Methods, in row order within a block.
pub const METHODS: [MethodKind; 3] = [MethodKind::Sg, MethodKind::Newton, MethodKind::Polyak];

/// Fewest updates to reach each threshold: `[threshold][method][beta]`.
pub const STEPS: [[[usize; 3]; 3]; 3] = [
    [[44, 43, 42], [3, 2, 19], [36, 36, 34]],
    [[288, 253, 207], [3, 28, 225], [119, 111, 97]],
    [[2090, 1941, 1731], [29, 315, 2663], [1743, 1727, 1705]],
];

/// Best stepsizes as `(leading digit, decimal exponent)`.
pub const STEPSIZES: [[[(u8, i32); 3]; 3]; 3] = [
    [[(5, -3), (5, -3), (5, -3)], [(1, 0), (1, 0), (2, -1)], [(5, -3), (4, -3), (5, -3)]],
    [[(4, -3), (4, -3), (5, -3)], [(1, 0), (2, 0), (3, -2)], [(2, -3), (2, -3), (3, -3)]],
    [[(1, -3), (1, -3), (2, -3)], [(2, -1), (2, -2), (3, -3)], [(3, -4), (3, -4), (3, -4)]],
];

fn index<T: PartialEq>(all: &[T], v: &T) -> Option<usize> {
    all.iter().position(|a| a == v)
}

fn locate(eps: f64, method: MethodKind, beta: i32) -> Option<(usize, usize, usize)> {
    Some((THRESHOLDS.iter().position(|&t| t == eps)?, index(&METHODS, &method)?, index(&BETAS, &beta)?))
}

pub fn steps(eps: f64, method: MethodKind, beta: i32) -> Option<usize> {
    locate(eps, method, beta).map(|(e, m, b)| STEPS[e][m][b])
}

pub fn stepsize(eps: f64, method: MethodKind, beta: i32) -> Option<(u8, i32)> {
    locate(eps, method, beta).map(|(e, m, b)| STEPSIZES[e][m][b])
}

/// Rounds a positive value to one significant digit, `(digit, exponent)`.
pub fn one_significant(x: f64) -> (u8, i32) {
    let mut e = x.log10().floor() as i32;
    let mut m = (x / 10f64.powi(e)).round();
    if m >= 10.0 {
        m = 1.0;
        e += 1;
    }
    (m as u8, e)
}

pub fn format_one_significant((m, e): (u8, i32)) -> String {
    format!("{m}e{e}")
}
