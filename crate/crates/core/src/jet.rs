//! First-order forward-mode derivatives of complex 2×2 matrix expressions in
//! two real parameters.

use std::ops::{Add, Mul, Neg, Sub};

use crate::linalg::C64;

pub(crate) const PARAMS: usize = 2;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Complex value with its gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Jet {
    pub v: C64,
    pub d: [C64; PARAMS],
}

impl Jet {
    pub fn constant(v: C64) -> Self {
        Jet { v, d: [ZERO; PARAMS] }
    }

    /// Real variable number `k` at value `x`.
    pub fn variable(x: f64, k: usize) -> Self {
        let mut d = [ZERO; PARAMS];
        d[k] = C64::from(1.0);
        Jet { v: C64::from(x), d }
    }

    pub fn scale(self, s: f64) -> Self {
        Jet { v: self.v * s, d: self.d.map(|x| x * s) }
    }

    /// `e^{i x}` for a real-valued jet.
    pub fn cis(self) -> Self {
        let e = C64::cis(self.v.re);
        let de = C64::i() * e;
        Jet { v: e, d: self.d.map(|x| de * x.re) }
    }

    /// `cos` and `sin` of a real-valued jet.
    pub fn sin_cos(self) -> (Self, Self) {
        let (s, c) = self.v.re.sin_cos();
        (
            Jet { v: C64::from(s), d: self.d.map(|x| C64::from(c * x.re)) },
            Jet { v: C64::from(c), d: self.d.map(|x| C64::from(-s * x.re)) },
        )
    }

    /// `|z|²` with its (real) gradient.
    pub fn norm_sqr(self) -> (f64, [f64; PARAMS]) {
        (self.v.norm_sqr(), self.d.map(|x| 2.0 * (self.v.conj() * x).re))
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet { v: self.v + o.v, d: [self.d[0] + o.d[0], self.d[1] + o.d[1]] }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet { v: self.v - o.v, d: [self.d[0] - o.d[0], self.d[1] - o.d[1]] }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet { v: -self.v, d: self.d.map(|x| -x) }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet { v: self.v * o.v, d: [self.d[0] * o.v + self.v * o.d[0], self.d[1] * o.v + self.v * o.d[1]] }
    }
}

impl Mul<C64> for Jet {
    type Output = Jet;
    fn mul(self, z: C64) -> Jet {
        Jet { v: self.v * z, d: self.d.map(|x| x * z) }
    }
}

/// 2×2 matrix of jets, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct JetMatrix(pub [[Jet; 2]; 2]);

impl JetMatrix {
    pub fn identity() -> Self {
        let one = Jet::constant(C64::from(1.0));
        let zero = Jet::constant(ZERO);
        JetMatrix([[one, zero], [zero, one]])
    }

    pub fn constant(m: &crate::linalg::CMatrix) -> Self {
        JetMatrix([
            [Jet::constant(m.get(0, 0)), Jet::constant(m.get(0, 1))],
            [Jet::constant(m.get(1, 0)), Jet::constant(m.get(1, 1))],
        ])
    }

    /// `e^{i a σ_z}` for a real jet `a`.
    pub fn exp_i_sigma_z(a: Jet) -> Self {
        let zero = Jet::constant(ZERO);
        JetMatrix([[a.cis(), zero], [zero, (-a).cis()]])
    }

    /// `cos θ + i sin θ σ_x`.
    pub fn exp_i_sigma_x(theta: Jet) -> Self {
        let (s, c) = theta.sin_cos();
        let is = s * C64::i();
        JetMatrix([[c, is], [is, c]])
    }

    pub fn get(&self, r: usize, c: usize) -> Jet {
        self.0[r][c]
    }

    pub fn value(&self) -> crate::linalg::CMatrix {
        crate::linalg::CMatrix::from_row_major(&[self.0[0][0].v, self.0[0][1].v, self.0[1][0].v, self.0[1][1].v])
            .expect("2x2")
    }

    pub fn pow(self, mut n: u64) -> Self {
        let mut base = self;
        let mut acc = JetMatrix::identity();
        while n > 0 {
            if n & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            n >>= 1;
        }
        acc
    }
}

impl Mul for JetMatrix {
    type Output = JetMatrix;
    fn mul(self, o: JetMatrix) -> JetMatrix {
        let a = &self.0;
        let b = &o.0;
        JetMatrix([
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ])
    }
}
