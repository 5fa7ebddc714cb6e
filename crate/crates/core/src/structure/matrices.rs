use nalgebra::DMatrix;

use super::regime::ModelSpec;

/// Dense structure matrices for one `(n, rho, v_n)`.
///
/// `n x n`: `nabla` (backward difference), `f = nabla nabla^T`, `r = e1 e1^T`,
/// `s = nabla^T + nabla`, `t = nabla^T - nabla`, `g = E/n + v_n F`.
/// `2n x 2n`: `gbar`, `sbar`, `tbar` and the two signed lag operators.
#[derive(Debug, Clone)]
pub struct StructureSet {
    pub n: usize,
    pub rho: f64,
    pub v_n: f64,
    pub nabla: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub gbar: DMatrix<f64>,
    pub sbar: DMatrix<f64>,
    pub tbar: DMatrix<f64>,
    pub nabla_bar_plus: DMatrix<f64>,
    pub nabla_bar_minus: DMatrix<f64>,
}

fn blocks(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    m.view_mut((0, n), (n, n)).copy_from(b);
    m.view_mut((n, 0), (n, n)).copy_from(c);
    m.view_mut((n, n), (n, n)).copy_from(d);
    m
}

pub fn build_structures(spec: &ModelSpec) -> StructureSet {
    let n = spec.n;
    let nf = n as f64;
    let nabla = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else if i == j + 1 {
            -1.0
        } else {
            0.0
        }
    });
    let f = &nabla * nabla.transpose();
    let mut r = DMatrix::zeros(n, n);
    r[(0, 0)] = 1.0;
    let s = nabla.transpose() + &nabla;
    let t = nabla.transpose() - &nabla;
    let eye = DMatrix::<f64>::identity(n, n);
    let g = &eye / nf + &f * spec.v_n;
    let cross = &eye * (spec.rho / nf);
    let gbar = blocks(&g, &cross, &cross, &g);
    let sbar = blocks(&r, &s, &s, &r) * 0.5;
    let tbar = blocks(&(-&r), &t, &(-&t), &r) * 0.5;
    let zero = DMatrix::zeros(n, n);
    let nabla_bar_plus = blocks(&zero, &nabla.transpose(), &nabla, &r);
    let nabla_bar_minus = -blocks(&r, &nabla, &nabla.transpose(), &zero);
    StructureSet {
        n,
        rho: spec.rho,
        v_n: spec.v_n,
        nabla,
        f,
        r,
        s,
        t,
        g,
        gbar,
        sbar,
        tbar,
        nabla_bar_plus,
        nabla_bar_minus,
    }
}

impl StructureSet {
    /// `nabla (+) nabla`.
    pub fn block_difference(&self) -> DMatrix<f64> {
        let zero = DMatrix::zeros(self.n, self.n);
        blocks(&self.nabla, &zero, &zero, &self.nabla)
    }

    /// `G(a) = (a/n) E + v_n F`.
    pub fn g_of(&self, a: f64) -> DMatrix<f64> {
        DMatrix::<f64>::identity(self.n, self.n) * (a / self.n as f64) + &self.f * self.v_n
    }
}
