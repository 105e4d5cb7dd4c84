//! Arrow-structured Jacobians and their O(N) shifted solves.
//!
//! Every lattice system in the crate has a Jacobian made of a tridiagonal block over
//! the cluster sites, at most one coupled scalar (the monomer pool) bordering that
//! block, and a few passive accumulators that nothing else depends on. Linear solves
//! with `sigma * I - J` reduce to two Thomas sweeps and a scalar Schur complement.

use crate::error::{Error, Result};

/// Row of an accumulator component: `d(acc)/d(y[index]) = value` for each entry.
#[derive(Debug, Clone, Default)]
pub struct PassiveRow {
    pub entries: Vec<(usize, f64)>,
}

/// Jacobian with layout `[sites (m) | coupled scalar (0 or 1) | passive rows]`.
#[derive(Debug, Clone, Default)]
pub struct ArrowJacobian {
    /// `lower[i] = J[i][i-1]`; `lower[0]` unused.
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    /// `upper[i] = J[i][i+1]`; last entry unused.
    pub upper: Vec<f64>,
    pub border: Option<Border>,
    pub passive: Vec<PassiveRow>,
}

/// Coupling between the site block and one scalar component.
#[derive(Debug, Clone, Default)]
pub struct Border {
    /// `col[i] = d(site_i)/d(scalar)`
    pub col: Vec<f64>,
    /// `row[i] = d(scalar)/d(site_i)`
    pub row: Vec<f64>,
    pub corner: f64,
}

impl ArrowJacobian {
    /// Resize for `sites` sites, zeroing every entry.
    pub fn reset(&mut self, sites: usize, coupled: bool, passive: usize) {
        for v in [&mut self.lower, &mut self.diag, &mut self.upper] {
            v.clear();
            v.resize(sites, 0.0);
        }
        if coupled {
            let b = self.border.get_or_insert_with(Border::default);
            b.col.clear();
            b.col.resize(sites, 0.0);
            b.row.clear();
            b.row.resize(sites, 0.0);
            b.corner = 0.0;
        } else {
            self.border = None;
        }
        self.passive.resize_with(passive, PassiveRow::default);
        for p in &mut self.passive {
            p.entries.clear();
        }
    }

    pub fn sites(&self) -> usize {
        self.diag.len()
    }

    pub fn dim(&self) -> usize {
        self.sites() + usize::from(self.border.is_some()) + self.passive.len()
    }

    /// Dense `J * x`; used by tests and by residual checks.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let m = self.sites();
        for i in 0..m {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.lower[i] * x[i - 1];
            }
            if i + 1 < m {
                v += self.upper[i] * x[i + 1];
            }
            if let Some(b) = &self.border {
                v += b.col[i] * x[m];
            }
            out[i] = v;
        }
        let mut next = m;
        if let Some(b) = &self.border {
            let dot: f64 = b.row.iter().zip(&x[..m]).map(|(r, xi)| r * xi).sum();
            out[m] = dot + b.corner * x[m];
            next += 1;
        }
        for (p, row) in self.passive.iter().enumerate() {
            out[next + p] = row.entries.iter().map(|&(j, v)| v * x[j]).sum();
        }
    }
}

/// LU factors of `sigma * I - J` for an [`ArrowJacobian`].
#[derive(Debug, Clone, Default)]
pub struct ShiftedFactor {
    sigma: f64,
    // Thomas factors of the tridiagonal block A = sigma*I - T.
    pivots: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    // z = A^{-1} col and the Schur complement sigma - corner - row.z
    z: Vec<f64>,
    schur: f64,
    coupled: bool,
}

impl ShiftedFactor {
    /// Factor `sigma * I - jac`. Fails when a pivot or the Schur complement vanishes.
    pub fn factor(&mut self, jac: &ArrowJacobian, sigma: f64) -> Result<()> {
        let m = jac.sites();
        self.sigma = sigma;
        self.pivots.clear();
        self.pivots.resize(m, 0.0);
        self.lower.clear();
        self.lower.resize(m, 0.0);
        self.upper.clear();
        self.upper.resize(m, 0.0);
        for i in 0..m {
            let a = if i > 0 { -jac.lower[i] } else { 0.0 };
            let c = if i + 1 < m { -jac.upper[i] } else { 0.0 };
            let mut d = sigma - jac.diag[i];
            if i > 0 {
                let l = a / self.pivots[i - 1];
                self.lower[i] = l;
                d -= l * self.upper[i - 1];
            }
            if d == 0.0 || !d.is_finite() {
                return Err(Error::SingularStage { t: f64::NAN });
            }
            self.pivots[i] = d;
            self.upper[i] = c;
        }
        self.coupled = jac.border.is_some();
        if let Some(b) = &jac.border {
            self.z.clear();
            self.z.extend_from_slice(&b.col);
            self.solve_block(m);
            let dot: f64 = b.row.iter().zip(&self.z).map(|(r, z)| r * z).sum();
            let schur = sigma - b.corner - dot;
            if schur == 0.0 || !schur.is_finite() {
                return Err(Error::SingularStage { t: f64::NAN });
            }
            self.schur = schur;
        }
        Ok(())
    }

    fn solve_block(&mut self, m: usize) {
        let z = &mut self.z;
        Self::thomas(&self.pivots, &self.lower, &self.upper, &mut z[..m]);
    }

    fn thomas(pivots: &[f64], lower: &[f64], upper: &[f64], x: &mut [f64]) {
        let m = x.len();
        for i in 1..m {
            x[i] -= lower[i] * x[i - 1];
        }
        if m == 0 {
            return;
        }
        x[m - 1] /= pivots[m - 1];
        for i in (0..m - 1).rev() {
            x[i] = (x[i] - upper[i] * x[i + 1]) / pivots[i];
        }
    }

    /// Solve `(sigma*I - J) x = rhs` in place. `jac` must be the matrix that was factored.
    pub fn solve(&self, jac: &ArrowJacobian, x: &mut [f64]) {
        let m = jac.sites();
        Self::thomas(&self.pivots, &self.lower, &self.upper, &mut x[..m]);
        let mut next = m;
        if self.coupled {
            let b = jac.border.as_ref().expect("factored with border");
            let dot: f64 = b.row.iter().zip(&x[..m]).map(|(r, xi)| r * xi).sum();
            let y = (x[m] + dot) / self.schur;
            x[m] = y;
            for (xi, zi) in x[..m].iter_mut().zip(&self.z) {
                *xi += zi * y;
            }
            next += 1;
        }
        for (p, row) in jac.passive.iter().enumerate() {
            let coupling: f64 = row.entries.iter().map(|&(j, v)| v * x[j]).sum();
            x[next + p] = (x[next + p] + coupling) / self.sigma;
        }
    }
}
