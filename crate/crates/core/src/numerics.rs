//! Small fixed numerical kernels shared by the field, characteristic and
//! transport code: 5-point Gauss–Legendre rules, cubic Lagrange
//! interpolation on uniform nodes and fourth-order difference stencils.

use std::sync::OnceLock;

/// Number of Gauss–Legendre nodes per cell.
pub const GL_NODES: usize = 5;

const GL_REF_NODES: [f64; GL_NODES] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];

const GL_REF_WEIGHTS: [f64; GL_NODES] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Gauss–Legendre rule mapped to the unit interval.
#[derive(Debug, Clone, Copy)]
pub struct UnitGauss {
    pub nodes: [f64; GL_NODES],
    pub weights: [f64; GL_NODES],
    /// `cumulative[q][p]` integrates the Lagrange basis polynomial through the
    /// nodes with index `p` from 0 to `nodes[q]`.
    pub cumulative: [[f64; GL_NODES]; GL_NODES],
}

pub fn unit_gauss() -> &'static UnitGauss {
    static RULE: OnceLock<UnitGauss> = OnceLock::new();
    RULE.get_or_init(build_unit_gauss)
}

fn build_unit_gauss() -> UnitGauss {
    let mut nodes = [0.0; GL_NODES];
    let mut weights = [0.0; GL_NODES];
    for q in 0..GL_NODES {
        nodes[q] = 0.5 * (GL_REF_NODES[q] + 1.0);
        weights[q] = 0.5 * GL_REF_WEIGHTS[q];
    }
    // Integrate each Lagrange basis polynomial from 0 to the node with the
    // rule itself, rescaled to the subinterval; exact for degree 4.
    let mut cumulative = [[0.0; GL_NODES]; GL_NODES];
    for q in 0..GL_NODES {
        let upper = nodes[q];
        for p in 0..GL_NODES {
            let mut acc = 0.0;
            for r in 0..GL_NODES {
                let s = upper * nodes[r];
                acc += weights[r] * lagrange_basis(&nodes, p, s);
            }
            cumulative[q][p] = acc * upper;
        }
    }
    UnitGauss {
        nodes,
        weights,
        cumulative,
    }
}

/// Integrals from 0 to `s` of the Lagrange basis polynomials through the unit
/// Gauss nodes; exact for polynomials of degree 4.
pub fn partial_integral_weights(s: f64) -> [f64; GL_NODES] {
    let rule = unit_gauss();
    let mut out = [0.0; GL_NODES];
    for (p, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for r in 0..GL_NODES {
            acc += rule.weights[r] * lagrange_basis(&rule.nodes, p, s * rule.nodes[r]);
        }
        *o = acc * s;
    }
    out
}

fn lagrange_basis(nodes: &[f64], p: usize, s: f64) -> f64 {
    nodes
        .iter()
        .enumerate()
        .filter(|&(r, _)| r != p)
        .map(|(_, &xr)| (s - xr) / (nodes[p] - xr))
        .product()
}

/// Composite Gauss–Legendre quadrature of `f` over `[lo, hi]` with `cells`
/// equal cells.
pub fn gauss_integrate(lo: f64, hi: f64, cells: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let rule = unit_gauss();
    let h = (hi - lo) / cells as f64;
    let mut acc = 0.0;
    for c in 0..cells {
        let start = lo + c as f64 * h;
        let mut cell = 0.0;
        for q in 0..GL_NODES {
            cell += rule.weights[q] * f(start + h * rule.nodes[q]);
        }
        acc += cell * h;
    }
    acc
}

/// Cubic Lagrange weights for nodes at 0, 1, 2, 3 evaluated at `s`.
pub fn lagrange4(s: f64) -> [f64; 4] {
    let (a, b, c, d) = (s, s - 1.0, s - 2.0, s - 3.0);
    [
        -b * c * d / 6.0,
        a * c * d / 2.0,
        -a * b * d / 2.0,
        a * b * c / 6.0,
    ]
}

/// Stencil of four consecutive nodes used to interpolate inside cell `cell`
/// of a uniform grid with `cells` cells (`cells >= 3`), together with the
/// weights at local coordinate `xi` in `[0, 1]`.
pub fn cubic_stencil(cell: usize, cells: usize, xi: f64) -> (usize, [f64; 4]) {
    let start = cell.saturating_sub(1).min(cells - 3);
    let s = (cell - start) as f64 + xi;
    (start, lagrange4(s))
}

/// First derivative on a uniform grid, fourth order, one-sided near the ends.
pub fn diff1(values: &[f64], h: f64, out: &mut [f64]) {
    let n = values.len();
    debug_assert!(n >= 5);
    let f = values;
    let c = 1.0 / (12.0 * h);
    out[0] = c * (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]);
    out[1] = c * (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]);
    for k in 2..n - 2 {
        out[k] = c * (f[k - 2] - 8.0 * f[k - 1] + 8.0 * f[k + 1] - f[k + 2]);
    }
    let m = n - 1;
    out[m - 1] = -c * (-3.0 * f[m] - 10.0 * f[m - 1] + 18.0 * f[m - 2] - 6.0 * f[m - 3] + f[m - 4]);
    out[m] = -c * (-25.0 * f[m] + 48.0 * f[m - 1] - 36.0 * f[m - 2] + 16.0 * f[m - 3] - 3.0 * f[m - 4]);
}

/// Second derivative on a uniform grid, fourth order, one-sided near the ends.
pub fn diff2(values: &[f64], h: f64, out: &mut [f64]) {
    let n = values.len();
    debug_assert!(n >= 6);
    let f = values;
    let c = 1.0 / (12.0 * h * h);
    out[0] = c * (45.0 * f[0] - 154.0 * f[1] + 214.0 * f[2] - 156.0 * f[3] + 61.0 * f[4] - 10.0 * f[5]);
    out[1] = c * (10.0 * f[0] - 15.0 * f[1] - 4.0 * f[2] + 14.0 * f[3] - 6.0 * f[4] + f[5]);
    for k in 2..n - 2 {
        out[k] = c * (-f[k - 2] + 16.0 * f[k - 1] - 30.0 * f[k] + 16.0 * f[k + 1] - f[k + 2]);
    }
    let m = n - 1;
    out[m - 1] = c * (10.0 * f[m] - 15.0 * f[m - 1] - 4.0 * f[m - 2] + 14.0 * f[m - 3] - 6.0 * f[m - 4] + f[m - 5]);
    out[m] = c * (45.0 * f[m] - 154.0 * f[m - 1] + 214.0 * f[m - 2] - 156.0 * f[m - 3] + 61.0 * f[m - 4] - 10.0 * f[m - 5]);
}
