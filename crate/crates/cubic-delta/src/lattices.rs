//! Pairings of [m], the dual lattice pair attached to each permissible
//! pairing, a unimodular completion, (h, x') coordinates, and enumeration of
//! the finite family of maximal linear subspaces on the cone.

use crate::arith::{self, Rat};
use crate::error::{Error, Result};
use crate::forms::{cube_class_equal, exact_cbrt, DiagonalCubicForm};
use crate::analytic::WeightSpec;
use serde::Serialize;

/// Partition of [m] into unordered pairs; blocks sorted, i < j within each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Pairing {
    blocks: Vec<(usize, usize)>,
}

impl Pairing {
    pub fn from_blocks(mut blocks: Vec<(usize, usize)>) -> Self {
        for b in blocks.iter_mut() {
            if b.0 > b.1 {
                *b = (b.1, b.0);
            }
        }
        blocks.sort_unstable();
        let mut seen: Vec<usize> = blocks.iter().flat_map(|&(i, j)| [i, j]).collect();
        seen.sort_unstable();
        let m = blocks.len() * 2;
        assert_eq!(seen, (0..m).collect::<Vec<_>>(), "blocks must partition [m]");
        Pairing { blocks }
    }

    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    /// All (m-1)!! pairings of {0, .., m-1}, lexicographic by block list.
    pub fn all(m: usize) -> Vec<Pairing> {
        fn rec(unused: &mut Vec<usize>, acc: &mut Vec<(usize, usize)>, out: &mut Vec<Pairing>) {
            if unused.is_empty() {
                out.push(Pairing { blocks: acc.clone() });
                return;
            }
            let i = unused.remove(0);
            for idx in 0..unused.len() {
                let j = unused.remove(idx);
                acc.push((i, j));
                rec(unused, acc, out);
                acc.pop();
                unused.insert(idx, j);
            }
            unused.insert(0, i);
        }
        let mut out = Vec::new();
        rec(&mut (0..m).collect(), &mut Vec::new(), &mut out);
        out.sort_by(|a, b| a.blocks.cmp(&b.blocks));
        out
    }

    /// Coprime (a, b) with (a/b)^3 = F_j / F_i per block, b > 0; None when
    /// some block ratio is not a rational cube (pairing not permissible).
    pub fn ratios(&self, form: &DiagonalCubicForm) -> Option<Vec<(i64, i64)>> {
        self.blocks
            .iter()
            .map(|&(i, j)| {
                let q = Rat::new(form.coeff(j) as i128, form.coeff(i) as i128);
                let a = exact_cbrt(q.num)?;
                let b = exact_cbrt(q.den)?;
                Some((a as i64, b as i64))
            })
            .collect()
    }

    pub fn is_permissible(&self, form: &DiagonalCubicForm) -> bool {
        self.blocks.iter().all(|&(i, j)| {
            cube_class_equal(
                Rat::from_int(form.coeff(j) as i128),
                Rat::from_int(form.coeff(i) as i128),
            )
            .unwrap()
        })
    }

    /// Membership of c in R_J: b c_j = a c_i per block.
    pub fn r_j_contains(&self, ratios: &[(i64, i64)], c: &[i64]) -> bool {
        self.blocks.iter().zip(ratios).all(|(&(i, j), &(a, b))| {
            b as i128 * c[j] as i128 == a as i128 * c[i] as i128
        })
    }
}

fn mat_mul_i128(a: &[Vec<i64>], b: &[Vec<i64>]) -> Vec<Vec<i128>> {
    let rows = a.len();
    let inner = b.len();
    let cols = b[0].len();
    let mut out = vec![vec![0i128; cols]; rows];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0i128;
            for k in 0..inner {
                acc += a[r][k] as i128 * b[k][c] as i128;
            }
            out[r][c] = acc;
        }
    }
    out
}

fn det_i128(m: &[Vec<i128>]) -> i128 {
    let n = m.len();
    if n == 1 {
        return m[0][0];
    }
    let mut det = 0i128;
    for (col, &lead) in m[0].iter().enumerate() {
        if lead == 0 {
            continue;
        }
        let minor: Vec<Vec<i128>> = m[1..]
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|&(c, _)| c != col)
                    .map(|(_, &v)| v)
                    .collect()
            })
            .collect();
        let sign = if col % 2 == 0 { 1 } else { -1 };
        det += sign * lead * det_i128(&minor);
    }
    det
}

/// Inverse of a unimodular integer matrix via the adjugate.
fn inverse_unimodular(m: &[Vec<i64>]) -> Result<Vec<Vec<i64>>> {
    let n = m.len();
    let mi: Vec<Vec<i128>> = m
        .iter()
        .map(|r| r.iter().map(|&v| v as i128).collect())
        .collect();
    let det = det_i128(&mi);
    if det != 1 && det != -1 {
        return Err(Error::InvalidForm(format!(
            "matrix is not unimodular (det {det})"
        )));
    }
    let mut inv = vec![vec![0i64; n]; n];
    for r in 0..n {
        for c in 0..n {
            let minor: Vec<Vec<i128>> = (0..n)
                .filter(|&rr| rr != r)
                .map(|rr| {
                    (0..n)
                        .filter(|&cc| cc != c)
                        .map(|cc| mi[rr][cc])
                        .collect()
                })
                .collect();
            let cof = if (r + c) % 2 == 0 { 1 } else { -1 } * det_i128(&minor);
            // adjugate transpose, divided by det = +-1
            inv[c][r] = (cof * det) as i64;
        }
    }
    Ok(inv)
}

/// Rank of an integer matrix over Q by fraction-free elimination.
pub fn rank_i128(rows: &[Vec<i128>]) -> usize {
    let mut m: Vec<Vec<i128>> = rows.to_vec();
    let nrows = m.len();
    if nrows == 0 {
        return 0;
    }
    let ncols = m[0].len();
    let mut rank = 0;
    let mut row = 0;
    for col in 0..ncols {
        if row >= nrows {
            break;
        }
        let pivot = (row..nrows).find(|&r| m[r][col] != 0);
        let Some(p) = pivot else { continue };
        m.swap(row, p);
        for r in row + 1..nrows {
            if m[r][col] != 0 {
                let (a, b) = (m[row][col], m[r][col]);
                let g = arith::gcd_i128(a, b);
                for c in 0..ncols {
                    m[r][c] = m[r][c] * (a / g) - m[row][c] * (b / g);
                }
            }
        }
        row += 1;
        rank += 1;
    }
    rank
}

/// GCD of all maximal minors; equals 1 iff the row lattice is primitive.
fn minor_gcd(rows: &[Vec<i64>]) -> i128 {
    let r = rows.len();
    let cols = rows[0].len();
    let mut gcd = 0i128;
    let mut choose: Vec<usize> = (0..r).collect();
    loop {
        let sub: Vec<Vec<i128>> = rows
            .iter()
            .map(|row| choose.iter().map(|&c| row[c] as i128).collect())
            .collect();
        gcd = arith::gcd_i128(gcd, det_i128(&sub));
        // next combination
        let mut i = r;
        loop {
            if i == 0 {
                return gcd;
            }
            i -= 1;
            if choose[i] + (r - i) < cols + 0 {
                choose[i] += 1;
                for j in i + 1..r {
                    choose[j] = choose[j - 1] + 1;
                }
                break;
            }
        }
        if *choose.last().unwrap() >= cols {
            return gcd;
        }
    }
}

/// A permissible pairing with its lattice pair, unimodular completion and
/// block ratios.
#[derive(Debug, Clone, Serialize)]
pub struct LineSpace {
    pub pairing: Pairing,
    /// Coprime (a, b) per block with b c_j = a c_i cutting out R_J.
    pub ratios: Vec<(i64, i64)>,
    /// Rows generate the orthogonal complement lattice (= R_J), (m/2) x m.
    pub lamperp_basis: Vec<Vec<i64>>,
    /// Columns generate the kernel lattice on which F vanishes, m x (m/2).
    pub lambda_basis: Vec<Vec<i64>>,
    /// Rows completing lamperp_basis to a unimodular m x m matrix.
    pub gamma: Vec<Vec<i64>>,
    #[serde(skip)]
    m_inv: Vec<Vec<i64>>,
}

impl LineSpace {
    pub fn new(form: &DiagonalCubicForm, pairing: Pairing) -> Result<Self> {
        let Some(ratios) = pairing.ratios(form) else {
            return Err(Error::InvalidForm("pairing is not permissible".into()));
        };
        let m = form.m();
        let half = m / 2;
        let mut lamperp = vec![vec![0i64; m]; half];
        let mut lambda = vec![vec![0i64; half]; m];
        let mut gamma = vec![vec![0i64; m]; half];
        for (k, (&(i, j), &(a, b))) in pairing.blocks().iter().zip(&ratios).enumerate() {
            debug_assert!(b > 0 && arith::gcd_i64(a, b) == 1);
            lamperp[k][i] = b;
            lamperp[k][j] = a;
            lambda[i][k] = a;
            lambda[j][k] = -b;
            // (u, v) with b v - a u = 1, canonicalized to 0 <= u < b
            let (g, s, _t) = arith::ext_gcd(-a, b);
            debug_assert_eq!(g, 1);
            let u = s.rem_euclid(b);
            let v = (1 + a as i128 * u as i128) / b as i128;
            gamma[k][i] = u;
            gamma[k][j] = v as i64;
        }
        Self::assemble(form, pairing, ratios, lamperp, lambda, gamma)
    }

    fn assemble(
        form: &DiagonalCubicForm,
        pairing: Pairing,
        ratios: Vec<(i64, i64)>,
        lamperp: Vec<Vec<i64>>,
        lambda: Vec<Vec<i64>>,
        gamma: Vec<Vec<i64>>,
    ) -> Result<Self> {
        let m = form.m();
        let half = m / 2;
        // orthogonality
        let prod = mat_mul_i128(&lamperp, &lambda);
        if prod.iter().any(|row| row.iter().any(|&v| v != 0)) {
            return Err(Error::InvalidForm("lamperp * lambda != 0".into()));
        }
        // unimodular completion
        let mut full = lamperp.clone();
        full.extend(gamma.iter().cloned());
        let m_inv = inverse_unimodular(&full)?;
        // primitivity of both lattices
        let lambda_t: Vec<Vec<i64>> = (0..half)
            .map(|k| (0..m).map(|i| lambda[i][k]).collect())
            .collect();
        if minor_gcd(&lamperp).abs() != 1 || minor_gcd(&lambda_t).abs() != 1 {
            return Err(Error::InvalidForm("lattice basis is not primitive".into()));
        }
        // F vanishes identically on the kernel lattice: expand symbolically
        let mut coeffs = std::collections::HashMap::<(usize, usize, usize), i128>::new();
        for i in 0..m {
            for k1 in 0..half {
                for k2 in 0..half {
                    for k3 in 0..half {
                        let mut key = [k1, k2, k3];
                        key.sort_unstable();
                        let c = form.coeff(i) as i128
                            * lambda[i][k1] as i128
                            * lambda[i][k2] as i128
                            * lambda[i][k3] as i128;
                        *coeffs.entry((key[0], key[1], key[2])).or_insert(0) += c;
                    }
                }
            }
        }
        if coeffs.values().any(|&v| v != 0) {
            return Err(Error::InvalidForm(
                "form does not vanish on the kernel lattice".into(),
            ));
        }
        Ok(LineSpace {
            pairing,
            ratios,
            lamperp_basis: lamperp,
            lambda_basis: lambda,
            gamma,
            m_inv,
        })
    }

    pub fn half(&self) -> usize {
        self.lamperp_basis.len()
    }

    /// Entry of the integer inverse of [lamperp; gamma].
    pub fn m_inv_entry(&self, row: usize, col: usize) -> i64 {
        self.m_inv[row][col]
    }

    pub fn m(&self) -> usize {
        self.lamperp_basis[0].len()
    }

    /// h = lamperp x, x' = gamma x.
    pub fn h_coords(&self, x: &[i64]) -> (Vec<i64>, Vec<i64>) {
        let dot = |row: &[i64]| -> i64 {
            row.iter()
                .zip(x)
                .map(|(&r, &xi)| (r as i128 * xi as i128) as i64)
                .sum()
        };
        (
            self.lamperp_basis.iter().map(|r| dot(r)).collect(),
            self.gamma.iter().map(|r| dot(r)).collect(),
        )
    }

    pub fn h_coords_f64(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let dot = |row: &[i64]| -> f64 { row.iter().zip(x).map(|(&r, &xi)| r as f64 * xi).sum() };
        (
            self.lamperp_basis.iter().map(|r| dot(r)).collect(),
            self.gamma.iter().map(|r| dot(r)).collect(),
        )
    }

    /// Recover x from (h, x') via the inverse of [lamperp; gamma].
    pub fn x_from_h_coords(&self, h: &[i64], xp: &[i64]) -> Vec<i64> {
        let m = self.m();
        let half = self.half();
        (0..m)
            .map(|i| {
                let mut acc = 0i128;
                for k in 0..half {
                    acc += self.m_inv[i][k] as i128 * h[k] as i128;
                    acc += self.m_inv[i][half + k] as i128 * xp[k] as i128;
                }
                acc as i64
            })
            .collect()
    }

    /// Same map with entries reduced mod n.
    pub fn x_from_h_coords_mod(&self, h: &[u64], xp: &[u64], n: u64) -> Vec<u64> {
        let m = self.m();
        let half = self.half();
        (0..m)
            .map(|i| {
                let mut acc = 0u64;
                for k in 0..half {
                    acc = (acc
                        + arith::mul_mod(arith::i64_mod(self.m_inv[i][k], n), h[k] % n, n))
                        % n;
                    acc = (acc
                        + arith::mul_mod(
                            arith::i64_mod(self.m_inv[i][half + k], n),
                            xp[k] % n,
                            n,
                        ))
                        % n;
                }
                acc
            })
            .collect()
    }

    /// The unique c* with c = c* lamperp over Z; fails off the row span.
    pub fn cstar_int(&self, c: &[i64]) -> Result<Vec<i64>> {
        let m = self.m();
        let half = self.half();
        let mut y = vec![0i128; m];
        for (col, yc) in y.iter_mut().enumerate() {
            for (i, &ci) in c.iter().enumerate() {
                *yc += ci as i128 * self.m_inv[i][col] as i128;
            }
        }
        if y[half..].iter().any(|&v| v != 0) {
            return Err(Error::NotInLattice);
        }
        Ok(y[..half].iter().map(|&v| v as i64).collect())
    }

    /// The unique c* mod n with c = c* lamperp over Z/n.
    pub fn cstar_mod(&self, c: &[i64], n: u64) -> Result<Vec<u64>> {
        let m = self.m();
        let half = self.half();
        let mut y = vec![0u64; m];
        for (col, yc) in y.iter_mut().enumerate() {
            for (i, &ci) in c.iter().enumerate() {
                *yc = (*yc
                    + arith::mul_mod(
                        arith::i64_mod(ci, n),
                        arith::i64_mod(self.m_inv[i][col], n),
                        n,
                    ))
                    % n;
            }
        }
        if y[half..].iter().any(|&v| v != 0) {
            return Err(Error::NotInLattice);
        }
        Ok(y[..half].to_vec())
    }

    pub fn contains(&self, c: &[i64]) -> bool {
        self.cstar_int(c).is_ok()
    }

    /// Integer combination c = cstar * lamperp.
    pub fn c_from_cstar(&self, cstar: &[i64]) -> Vec<i64> {
        let m = self.m();
        (0..m)
            .map(|i| {
                cstar
                    .iter()
                    .zip(&self.lamperp_basis)
                    .map(|(&t, row)| (t as i128 * row[i] as i128) as i64)
                    .sum()
            })
            .collect()
    }

    /// Sum of w(x / X) over the kernel lattice, by direct enumeration of the
    /// support box through the column basis.
    pub fn lattice_point_sum(&self, w: &WeightSpec, x_scale: f64) -> f64 {
        assert_eq!(w.dim(), self.m());
        let half = self.half();
        // per parameter t_k, intersect the constraints from both coordinates
        let mut ranges: Vec<(i64, i64)> = Vec::with_capacity(half);
        for k in 0..half {
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for i in 0..self.m() {
                let coef = self.lambda_basis[i][k];
                if coef == 0 {
                    continue;
                }
                let (a, b) = w.axis_interval(i);
                let (mut l, mut h) = (x_scale * a / coef as f64, x_scale * b / coef as f64);
                if l > h {
                    std::mem::swap(&mut l, &mut h);
                }
                lo = lo.max(l);
                hi = hi.min(h);
            }
            if lo > hi {
                return 0.0;
            }
            ranges.push((lo.ceil() as i64, hi.floor() as i64));
        }
        let mut sum = 0.0;
        let mut t = vec![0i64; half];
        fn rec(
            ls: &LineSpace,
            w: &WeightSpec,
            xs: f64,
            ranges: &[(i64, i64)],
            t: &mut Vec<i64>,
            k: usize,
            sum: &mut f64,
        ) {
            if k == ranges.len() {
                let x: Vec<f64> = (0..ls.m())
                    .map(|i| {
                        t.iter()
                            .zip(ls.lambda_basis[i].iter())
                            .map(|(&tk, &l)| tk as f64 * l as f64)
                            .sum::<f64>()
                            / xs
                    })
                    .collect();
                *sum += w.eval(&x);
                return;
            }
            for v in ranges[k].0..=ranges[k].1 {
                t[k] = v;
                rec(ls, w, xs, ranges, t, k + 1, sum);
            }
        }
        rec(self, w, x_scale, &ranges, &mut t, 0, &mut sum);
        sum
    }

    /// Alternate unimodular completion gamma' = gamma + shift * lamperp, used
    /// by basis-independence tests.
    pub fn with_gamma_shift(
        &self,
        form: &DiagonalCubicForm,
        shift: &[Vec<i64>],
    ) -> Result<LineSpace> {
        let half = self.half();
        let m = self.m();
        let mut gamma = self.gamma.clone();
        for k in 0..half {
            for i in 0..m {
                let mut acc = gamma[k][i] as i128;
                for (s, row) in shift[k].iter().zip(&self.lamperp_basis) {
                    acc += *s as i128 * row[i] as i128;
                }
                gamma[k][i] = acc as i64;
            }
        }
        Self::assemble(
            form,
            self.pairing.clone(),
            self.ratios.clone(),
            self.lamperp_basis.clone(),
            self.lambda_basis.clone(),
            gamma,
        )
    }
}

/// One LineSpace per permissible pairing, in canonical pairing order.
pub fn enumerate_lines(form: &DiagonalCubicForm) -> Vec<LineSpace> {
    Pairing::all(form.m())
        .into_iter()
        .filter(|p| p.ratios(form).is_some())
        .map(|p| LineSpace::new(form, p).expect("permissible pairing must build"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairing_counts() {
        assert_eq!(Pairing::all(4).len(), 3);
        assert_eq!(Pairing::all(6).len(), 15);
    }

    #[test]
    fn enumerate_examples() {
        let fermat4 = DiagonalCubicForm::fermat(4);
        assert_eq!(enumerate_lines(&fermat4).len(), 3);
        let f = DiagonalCubicForm::new(vec![1, 1, 2, 2]).unwrap();
        let lines = enumerate_lines(&f);
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].pairing.blocks(), &[(0, 1), (2, 3)]);
        let fermat6 = DiagonalCubicForm::fermat(6);
        assert_eq!(enumerate_lines(&fermat6).len(), 15);
    }

    #[test]
    fn ratio_construction() {
        // F = (1, 8): ratio a/b with (a/b)^3 = 8 -> (2, 1)
        let f = DiagonalCubicForm::new(vec![1, 8, 2, 16]).unwrap();
        let lines = enumerate_lines(&f);
        // {0,1} and {2,3} pair (1,8) and (2,16); {0,2} etc. fail the cube test
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].ratios, vec![(2, 1), (2, 1)]);
        // c in R_J: c_j = 2 c_i
        assert!(lines[0].contains(&[1, 2, 3, 6]));
        assert!(!lines[0].contains(&[1, 3, 3, 6]));
    }

    #[test]
    fn h_coords_examples() {
        let f = DiagonalCubicForm::fermat(4);
        let lines = enumerate_lines(&f);
        let ls = &lines[0];
        assert_eq!(ls.pairing.blocks(), &[(0, 1), (2, 3)]);
        let (h, _) = ls.h_coords(&[1, -1, 5, -5]);
        assert_eq!(h, vec![0, 0]);
        let (h, _) = ls.h_coords(&[1, 0, 0, 0]);
        assert_eq!(h, vec![1, 0]);
        // unimodular round trip
        for x in [[3i64, -7, 2, 9], [0, 1, -4, 5]] {
            let (h, xp) = ls.h_coords(&x);
            assert_eq!(ls.x_from_h_coords(&h, &xp), x.to_vec());
        }
    }

    #[test]
    fn cstar_examples() {
        let f = DiagonalCubicForm::fermat(4);
        let ls = &enumerate_lines(&f)[0];
        // row k of lamperp -> k-th standard basis vector
        assert_eq!(ls.cstar_int(&ls.lamperp_basis[0]).unwrap(), vec![1, 0]);
        assert_eq!(ls.cstar_int(&ls.lamperp_basis[1]).unwrap(), vec![0, 1]);
        assert_eq!(ls.cstar_int(&[0, 0, 0, 0]).unwrap(), vec![0, 0]);
        assert_eq!(ls.cstar_int(&[3, 3, 5, 5]).unwrap(), vec![3, 5]);
        assert!(ls.cstar_int(&[1, 2, 0, 0]).is_err());
        // c* . h agrees with c . x on random x
        let c = [3i64, 3, 5, 5];
        let cstar = ls.cstar_int(&c).unwrap();
        for x in [[1i64, 2, 3, 4], [-5, 0, 7, 1]] {
            let (h, _) = ls.h_coords(&x);
            let lhs: i64 = c.iter().zip(&x).map(|(&a, &b)| a * b).sum();
            let rhs: i64 = cstar.iter().zip(&h).map(|(&a, &b)| a * b).sum();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn congruence_notions_agree() {
        // {c in lamperp : c = b mod n} = {c = b mod n * lamperp} for n <= 60
        let f = DiagonalCubicForm::fermat(4);
        let ls = &enumerate_lines(&f)[1];
        for n in [2u64, 3, 4, 5, 6, 12, 60] {
            let b = ls.c_from_cstar(&[1, 2]);
            for s in 0..n {
                for t in 0..n {
                    let c = ls.c_from_cstar(&[s as i64, t as i64]);
                    let cong_comp = c
                        .iter()
                        .zip(&b)
                        .all(|(&ci, &bi)| (ci - bi).rem_euclid(n as i64) == 0);
                    // c = b mod n*lamperp <=> cstar = bstar mod n
                    let cong_lat = (s as i64 - 1).rem_euclid(n as i64) == 0
                        && (t as i64 - 2).rem_euclid(n as i64) == 0;
                    assert_eq!(cong_comp, cong_lat, "n={n} s={s} t={t}");
                }
            }
        }
    }

    #[test]
    fn pairwise_intersections_have_lower_rank() {
        for m in [4usize, 6] {
            let f = DiagonalCubicForm::fermat(m);
            let lines = enumerate_lines(&f);
            for (idx1, l1) in lines.iter().enumerate() {
                for l2 in lines.iter().skip(idx1 + 1) {
                    let mut stacked: Vec<Vec<i128>> = l1
                        .lamperp_basis
                        .iter()
                        .map(|r| r.iter().map(|&v| v as i128).collect())
                        .collect();
                    stacked.extend(
                        l2.lamperp_basis
                            .iter()
                            .map(|r| r.iter().map(|&v| v as i128).collect::<Vec<_>>()),
                    );
                    // rank(sum) > m/2 forces rank(intersection) < m/2
                    assert!(rank_i128(&stacked) > m / 2);
                }
            }
        }
    }

    #[test]
    fn gamma_shift_is_still_unimodular() {
        let f = DiagonalCubicForm::fermat(4);
        let ls = &enumerate_lines(&f)[0];
        let shifted = ls
            .with_gamma_shift(&f, &[vec![3, -2], vec![0, 7]])
            .unwrap();
        for x in [[3i64, -7, 2, 9], [0, 1, -4, 5]] {
            let (h, xp) = shifted.h_coords(&x);
            assert_eq!(shifted.x_from_h_coords(&h, &xp), x.to_vec());
            // h coordinates agree with the original (same lamperp)
            assert_eq!(h, ls.h_coords(&x).0);
        }
    }
}
