//! Candidate basis library: spatial derivatives of the field and the
//! ensemble-averaged dictionary of polynomial, derivative and product terms.
//!
//! Every nonlinear term is evaluated per ensemble first and the resulting
//! matrices are averaged, so column k holds E[l_k(u)] at each (time, node)
//! point. Rows are the vectorization time-major over n, then space, shared
//! with the regression targets (see [`row_index`]).

use nalgebra::DMatrix;
use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Boundary, Grid1d};
use crate::sim::EnsembleField;

/// Highest supported spatial-derivative order.
pub const MAX_DERIV_ORDER: u32 = 5;

/// One candidate basis function u^p * d^d u / dx^d.
///
/// (p, d) = (0, 0) is the constant function 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TermDescriptor {
    pub poly_power: u32,
    pub deriv_order: u32,
}

impl TermDescriptor {
    pub fn new(poly_power: u32, deriv_order: u32) -> Self {
        TermDescriptor {
            poly_power,
            deriv_order,
        }
    }

    pub fn is_product(&self) -> bool {
        self.poly_power > 0 && self.deriv_order > 0
    }
}

/// Canonical display name: "1", "u", "u^3", "u_xx", "u^2*u_xxx", ...
pub fn term_name(term: &TermDescriptor) -> String {
    let TermDescriptor {
        poly_power: p,
        deriv_order: d,
    } = *term;
    if p == 0 && d == 0 {
        return "1".to_string();
    }
    let mut parts = Vec::new();
    if p == 1 {
        parts.push("u".to_string());
    } else if p > 1 {
        parts.push(format!("u^{p}"));
    }
    if d > 0 {
        parts.push(format!("u_{}", "x".repeat(d as usize)));
    }
    parts.join("*")
}

/// Inverse of [`term_name`]; used when reading model files back.
pub fn parse_term_name(name: &str) -> Option<TermDescriptor> {
    if name == "1" {
        return Some(TermDescriptor::new(0, 0));
    }
    let mut poly = 0u32;
    let mut deriv = 0u32;
    for part in name.split('*') {
        if let Some(xs) = part.strip_prefix("u_") {
            if xs.is_empty() || !xs.chars().all(|c| c == 'x') || deriv != 0 {
                return None;
            }
            deriv = xs.len() as u32;
        } else if part == "u" {
            if poly != 0 {
                return None;
            }
            poly = 1;
        } else {
            let ps = part.strip_prefix("u^")?;
            if poly != 0 {
                return None;
            }
            poly = ps.parse().ok().filter(|&p| p >= 2)?;
        }
    }
    if poly == 0 && deriv == 0 {
        return None;
    }
    Some(TermDescriptor::new(poly, deriv))
}

/// Ordered candidate list: constant, u^p (p = 1..P), d^d u (d = 1..Dm), and
/// if requested the products u^p * d^d u for p = 1..P, d = 1..Dm.
/// K = 1 + P + Dm + P*Dm with products.
pub fn generate_terms(poly_max: u32, deriv_max: u32, include_products: bool) -> Vec<TermDescriptor> {
    let mut terms = vec![TermDescriptor::new(0, 0)];
    terms.extend((1..=poly_max).map(|p| TermDescriptor::new(p, 0)));
    terms.extend((1..=deriv_max).map(|d| TermDescriptor::new(0, d)));
    if include_products {
        for p in 1..=poly_max {
            for d in 1..=deriv_max {
                terms.push(TermDescriptor::new(p, d));
            }
        }
    }
    terms
}

/// Flattened row of the (time, node) point (n, j); the same layout is used by
/// the dictionary rows and the Kramers-Moyal target vectors.
#[inline]
pub fn row_index(time_index: usize, node_index: usize, n_nodes: usize) -> usize {
    time_index * n_nodes + node_index
}

fn first_difference(src: &[f64], dst: &mut [f64], grid: &Grid1d) {
    let n = src.len();
    let inv = 1.0 / (2.0 * grid.spacing());
    match grid.boundary() {
        Boundary::Periodic => {
            for j in 0..n {
                let right = src[(j + 1) % n];
                let left = src[(j + n - 1) % n];
                dst[j] = (right - left) * inv;
            }
        }
        Boundary::DirichletZero => {
            for j in 0..n {
                let right = if j + 1 < n { src[j + 1] } else { 0.0 };
                let left = if j > 0 { src[j - 1] } else { 0.0 };
                dst[j] = (right - left) * inv;
            }
        }
    }
}

fn second_difference(src: &[f64], dst: &mut [f64], grid: &Grid1d) {
    let n = src.len();
    let inv = 1.0 / (grid.spacing() * grid.spacing());
    match grid.boundary() {
        Boundary::Periodic => {
            for j in 0..n {
                let right = src[(j + 1) % n];
                let left = src[(j + n - 1) % n];
                dst[j] = (right - 2.0 * src[j] + left) * inv;
            }
        }
        Boundary::DirichletZero => {
            for j in 0..n {
                let right = if j + 1 < n { src[j + 1] } else { 0.0 };
                let left = if j > 0 { src[j - 1] } else { 0.0 };
                dst[j] = (right - 2.0 * src[j] + left) * inv;
            }
        }
    }
}

/// Central-difference spatial derivative of one field slice.
///
/// Orders one and two use the classic 3-point stencils. Higher orders chain
/// first-order centrals over the second-order core (order d applies D1
/// (d - 2) times to D2 u); the widened support damps grid-scale noise that
/// repeated 3-point stencils amplify. Boundary closure follows the grid:
/// wrap-around for periodic, zero ghost nodes for Dirichlet.
pub fn spatial_derivative(field_slice: &[f64], grid: &Grid1d, order: u32) -> Result<Vec<f64>> {
    if order == 0 || order > MAX_DERIV_ORDER {
        return Err(Error::UnsupportedOrder {
            order,
            max: MAX_DERIV_ORDER,
        });
    }
    if field_slice.len() != grid.n_nodes() {
        return Err(Error::InvalidInput(format!(
            "slice has {} values for a {}-node grid",
            field_slice.len(),
            grid.n_nodes()
        )));
    }
    let mut table = DerivTable::new(grid.n_nodes(), order);
    table.fill(field_slice, grid);
    Ok(table.order(order).to_vec())
}

/// Scratch space holding the derivative chain d1 = D1 u, d2 = D2 u,
/// d_k = D1 d_{k-1} for k > 2.
struct DerivTable {
    max_order: u32,
    rows: Vec<Vec<f64>>,
}

impl DerivTable {
    fn new(n_nodes: usize, max_order: u32) -> Self {
        DerivTable {
            max_order,
            rows: vec![vec![0.0; n_nodes]; max_order as usize],
        }
    }

    fn fill(&mut self, slice: &[f64], grid: &Grid1d) {
        if self.max_order >= 1 {
            first_difference(slice, &mut self.rows[0], grid);
        }
        if self.max_order >= 2 {
            second_difference(slice, &mut self.rows[1], grid);
        }
        for d in 3..=self.max_order {
            let (done, rest) = self.rows.split_at_mut(d as usize - 1);
            first_difference(&done[d as usize - 2], &mut rest[0], grid);
        }
    }

    fn order(&self, d: u32) -> &[f64] {
        &self.rows[d as usize - 1]
    }
}

/// Design matrix plus per-column term descriptors.
#[derive(Debug, Clone)]
pub struct Dictionary {
    /// N x K, N = N_x * (N_t - 1).
    pub matrix: DMatrix<f64>,
    pub terms: Vec<TermDescriptor>,
    /// Per-column (mean, scale) applied by [`Dictionary::standardize`];
    /// `None` for raw dictionaries.
    pub standardization: Option<Vec<(f64, f64)>>,
}

impl Dictionary {
    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_terms(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn term_names(&self) -> Vec<String> {
        self.terms.iter().map(term_name).collect()
    }

    /// Z-score all non-constant columns in place. The constant column is
    /// untouched so the all-ones invariant survives.
    pub fn standardize(&mut self) {
        if self.standardization.is_some() {
            return;
        }
        let n = self.matrix.nrows() as f64;
        let mut info = Vec::with_capacity(self.matrix.ncols());
        for (k, term) in self.terms.iter().enumerate() {
            if term.poly_power == 0 && term.deriv_order == 0 {
                info.push((0.0, 1.0));
                continue;
            }
            let col = self.matrix.column(k);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let scale = if var.sqrt() > 1e-300 { var.sqrt() } else { 1.0 };
            info.push((mean, scale));
            let mut col = self.matrix.column_mut(k);
            for v in col.iter_mut() {
                *v = (*v - mean) / scale;
            }
        }
        self.standardization = Some(info);
    }

    /// Linear map T with beta_raw = T beta_standardized: non-constant
    /// coefficients divide by their scale, the constant column absorbs the
    /// centering shifts.
    fn destandardize_map(&self) -> Option<nalgebra::DMatrix<f64>> {
        let info = self.standardization.as_ref()?;
        let k = self.terms.len();
        let const_idx = self
            .terms
            .iter()
            .position(|t| t.poly_power == 0 && t.deriv_order == 0);
        let mut t = nalgebra::DMatrix::identity(k, k);
        for (col, &(mean, scale)) in info.iter().enumerate() {
            if Some(col) == const_idx {
                continue;
            }
            t[(col, col)] = 1.0 / scale;
            if let Some(ci) = const_idx {
                t[(ci, col)] = -mean / scale;
            }
        }
        Some(t)
    }

    /// Map coefficients fitted on the standardized dictionary back to the
    /// raw-term parameterization (the constant column absorbs the centering).
    pub fn destandardize_coefficients(&self, beta: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        match self.destandardize_map() {
            Some(t) => t * beta,
            None => beta.clone(),
        }
    }

    /// Map a posterior covariance fitted on the standardized dictionary back
    /// to the raw-term parameterization.
    pub fn destandardize_covariance(&self, cov: &nalgebra::DMatrix<f64>) -> nalgebra::DMatrix<f64> {
        match self.destandardize_map() {
            Some(t) => &t * cov * t.transpose(),
            None => cov.clone(),
        }
    }
}

/// Streaming builder: feed one ensemble trajectory at a time, then finish.
/// Accumulation is parallel over time rows with disjoint output slices, so
/// results are independent of thread count.
pub struct DictionaryAccumulator {
    terms: Vec<TermDescriptor>,
    grid: Grid1d,
    n_time_rows: usize,
    poly_max: u32,
    deriv_max: u32,
    acc: Vec<f64>,
    count: usize,
}

impl DictionaryAccumulator {
    pub fn new(terms: &[TermDescriptor], grid: &Grid1d, n_time_rows: usize) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidInput("term list is empty".into()));
        }
        if n_time_rows == 0 {
            return Err(Error::InvalidInput("need at least one usable time row".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for t in terms {
            if !seen.insert(*t) {
                return Err(Error::InvalidInput(format!(
                    "duplicate dictionary term {}",
                    term_name(t)
                )));
            }
        }
        let deriv_max = terms.iter().map(|t| t.deriv_order).max().unwrap_or(0);
        if deriv_max > MAX_DERIV_ORDER {
            return Err(Error::UnsupportedOrder {
                order: deriv_max,
                max: MAX_DERIV_ORDER,
            });
        }
        let poly_max = terms.iter().map(|t| t.poly_power).max().unwrap_or(0);
        let n = n_time_rows * grid.n_nodes();
        Ok(DictionaryAccumulator {
            terms: terms.to_vec(),
            grid: grid.clone(),
            n_time_rows,
            poly_max,
            deriv_max,
            acc: vec![0.0; n * terms.len()],
            count: 0,
        })
    }

    /// Evaluate all terms on rows 0..n_time_rows of one trajectory
    /// (shape (N_t, N_x) with N_t > n_time_rows is fine) and add them in.
    pub fn add_ensemble(&mut self, trajectory: ArrayView2<'_, f64>) -> Result<()> {
        let nx = self.grid.n_nodes();
        if trajectory.ncols() != nx || trajectory.nrows() < self.n_time_rows {
            return Err(Error::InvalidInput(format!(
                "trajectory shape ({}, {}) incompatible with {} time rows on a {}-node grid",
                trajectory.nrows(),
                trajectory.ncols(),
                self.n_time_rows,
                nx
            )));
        }
        let k = self.terms.len();
        let terms = &self.terms;
        let grid = &self.grid;
        let poly_max = self.poly_max;
        let deriv_max = self.deriv_max;
        self.acc
            .par_chunks_mut(nx * k)
            .take(self.n_time_rows)
            .enumerate()
            .for_each(|(n, chunk)| {
                let row = trajectory.row(n);
                let slice = row.as_slice().expect("row-major trajectory");
                let mut powers: Vec<Vec<f64>> = Vec::new();
                if poly_max >= 1 {
                    powers.push(slice.to_vec());
                    for _ in 2..=poly_max {
                        let prev = powers.last().unwrap();
                        let next: Vec<f64> =
                            prev.iter().zip(slice).map(|(a, b)| a * b).collect();
                        powers.push(next);
                    }
                }
                let mut derivs = DerivTable::new(nx, deriv_max);
                if deriv_max > 0 {
                    derivs.fill(slice, grid);
                }
                #[allow(clippy::needless_range_loop)] // j indexes several parallel tables
                for j in 0..nx {
                    let base = j * k;
                    for (t, term) in terms.iter().enumerate() {
                        let p = term.poly_power;
                        let d = term.deriv_order;
                        let v = match (p, d) {
                            (0, 0) => 1.0,
                            (p, 0) => powers[p as usize - 1][j],
                            (0, d) => derivs.order(d)[j],
                            (p, d) => powers[p as usize - 1][j] * derivs.order(d)[j],
                        };
                        chunk[base + t] += v;
                    }
                }
            });
        self.count += 1;
        Ok(())
    }

    pub fn n_ensembles(&self) -> usize {
        self.count
    }

    pub fn finish(self) -> Result<Dictionary> {
        if self.count == 0 {
            return Err(Error::InvalidInput("no ensembles accumulated".into()));
        }
        let k = self.terms.len();
        let n = self.n_time_rows * self.grid.n_nodes();
        let scale = 1.0 / self.count as f64;
        let mut matrix = DMatrix::zeros(n, k);
        for row in 0..n {
            for col in 0..k {
                let v = self.acc[row * k + col] * scale;
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: "dictionary entry",
                    });
                }
                matrix[(row, col)] = v;
            }
        }
        Ok(Dictionary {
            matrix,
            terms: self.terms,
            standardization: None,
        })
    }
}

/// Ensemble-averaged dictionary over rows n = 0..N_t-2 of every ensemble.
pub fn build_dictionary(data: &EnsembleField, terms: &[TermDescriptor]) -> Result<Dictionary> {
    if data.time.n_steps() < 2 {
        return Err(Error::InvalidInput("need at least two snapshots".into()));
    }
    let mut acc = DictionaryAccumulator::new(terms, &data.grid, data.time.n_increments())?;
    for s in 0..data.n_ensembles() {
        acc.add_ensemble(data.ensemble(s))?;
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeSpec;
    use approx::assert_relative_eq;
    use ndarray::Array3;

    fn pgrid(length: f64, n: usize) -> Grid1d {
        Grid1d::new(length, n, Boundary::Periodic).unwrap()
    }

    #[test]
    fn term_enumeration_counts() {
        let t = generate_terms(1, 1, true);
        assert_eq!(
            t,
            vec![
                TermDescriptor::new(0, 0),
                TermDescriptor::new(1, 0),
                TermDescriptor::new(0, 1),
                TermDescriptor::new(1, 1)
            ]
        );
        assert_eq!(generate_terms(5, 5, true).len(), 36);
        assert_eq!(generate_terms(6, 5, true).len(), 42);
        assert_eq!(generate_terms(5, 6, true).len(), 42);
        assert_eq!(generate_terms(4, 6, true).len(), 35);
        assert_eq!(generate_terms(6, 4, true).len(), 35);
        assert_eq!(generate_terms(3, 2, false).len(), 6);
    }

    #[test]
    fn term_names_are_canonical() {
        assert_eq!(term_name(&TermDescriptor::new(0, 0)), "1");
        assert_eq!(term_name(&TermDescriptor::new(3, 0)), "u^3");
        assert_eq!(term_name(&TermDescriptor::new(1, 0)), "u");
        assert_eq!(term_name(&TermDescriptor::new(0, 2)), "u_xx");
        assert_eq!(term_name(&TermDescriptor::new(1, 2)), "u*u_xx");
        assert_eq!(term_name(&TermDescriptor::new(4, 3)), "u^4*u_xxx");
    }

    #[test]
    fn term_names_round_trip() {
        for t in generate_terms(6, 5, true) {
            assert_eq!(parse_term_name(&term_name(&t)), Some(t));
        }
        assert_eq!(parse_term_name("v"), None);
        assert_eq!(parse_term_name("u^1"), None);
        assert_eq!(parse_term_name("u_y"), None);
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let g = pgrid(10.0, 16);
        let slice = vec![2.5; 16];
        for order in 1..=MAX_DERIV_ORDER {
            let d = spatial_derivative(&slice, &g, order).unwrap();
            for v in d {
                assert_relative_eq!(v, 0.0, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn order_above_max_is_rejected() {
        let g = pgrid(10.0, 16);
        let slice = vec![1.0; 16];
        assert!(matches!(
            spatial_derivative(&slice, &g, MAX_DERIV_ORDER + 1),
            Err(Error::UnsupportedOrder { .. })
        ));
        assert!(spatial_derivative(&slice, &g, 0).is_err());
    }

    #[test]
    fn sine_first_derivative_is_second_order_accurate() {
        let l = 20.0;
        let g = pgrid(l, 64);
        let w = 2.0 * std::f64::consts::PI / l;
        let u: Vec<f64> = g.node_positions().iter().map(|&x| (w * x).sin()).collect();
        let d = spatial_derivative(&u, &g, 1).unwrap();
        let bound = w.powi(3) * g.spacing() * g.spacing();
        for (j, &x) in g.node_positions().iter().enumerate() {
            assert!((d[j] - w * (w * x).cos()).abs() < bound);
        }
    }

    #[test]
    fn dirichlet_closure_uses_zero_ghost_nodes() {
        // sin(pi x / L) vanishes at both walls, so the zero-ghost closure
        // matches the analytic derivative to second order at every node
        let l = 10.0;
        let n = 39;
        let g = Grid1d::new(l, n, Boundary::DirichletZero).unwrap();
        let w = std::f64::consts::PI / l;
        let u: Vec<f64> = g.node_positions().iter().map(|&x| (w * x).sin()).collect();
        let d1 = spatial_derivative(&u, &g, 1).unwrap();
        let bound = w.powi(3) * g.spacing() * g.spacing();
        for (j, &x) in g.node_positions().iter().enumerate() {
            assert!(
                (d1[j] - w * (w * x).cos()).abs() < bound,
                "node {j}: {} vs {}",
                d1[j],
                w * (w * x).cos()
            );
        }
    }

    #[test]
    fn sine_second_derivative_matches_circulant_eigenvalue_exactly() {
        let l = 12.0;
        let g = pgrid(l, 24);
        let dx = g.spacing();
        let w = 2.0 * std::f64::consts::PI / l;
        let lambda = (2.0 - 2.0 * (w * dx).cos()) / (dx * dx);
        let u: Vec<f64> = g.node_positions().iter().map(|&x| (w * x).sin()).collect();
        let d = spatial_derivative(&u, &g, 2).unwrap();
        for j in 0..24 {
            assert_relative_eq!(d[j], -lambda * u[j], epsilon = 1e-12);
        }
    }

    fn tiny_field(values: Vec<f64>, nt: usize, nx: usize) -> EnsembleField {
        let ns = values.len() / (nt * nx);
        EnsembleField {
            data: Array3::from_shape_vec((ns, nt, nx), values).unwrap(),
            grid: pgrid(nx as f64, nx),
            time: TimeSpec::from_counts(0.1, nt).unwrap(),
            seed: 0,
        }
    }

    #[test]
    fn direct_evaluation_on_single_ensemble() {
        // one ensemble, one usable row, u = (1, 2, 3), terms {1, u, u^2}
        let field = tiny_field(vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0], 2, 3);
        let terms = vec![
            TermDescriptor::new(0, 0),
            TermDescriptor::new(1, 0),
            TermDescriptor::new(2, 0),
        ];
        let d = build_dictionary(&field, &terms).unwrap();
        assert_eq!(d.n_rows(), 3);
        let expect = [[1.0, 1.0, 1.0], [1.0, 2.0, 4.0], [1.0, 3.0, 9.0]];
        for r in 0..3 {
            for c in 0..3 {
                assert_relative_eq!(d.matrix[(r, c)], expect[r][c]);
            }
        }
    }

    #[test]
    fn odd_terms_cancel_between_mirrored_ensembles() {
        // ensembles u and -u: E[u] = 0, E[u^2] = u^2
        let base = [1.0, -2.0, 3.0, 0.5, -0.25, 4.0];
        let mut vals: Vec<f64> = base.to_vec();
        vals.extend([0.0; 3]);
        vals.extend(base.iter().map(|v| -v));
        vals.extend([0.0; 3]);
        let field = tiny_field(vals, 3, 3);
        let terms = vec![TermDescriptor::new(1, 0), TermDescriptor::new(2, 0)];
        let d = build_dictionary(&field, &terms).unwrap();
        for r in 0..d.n_rows() {
            assert_relative_eq!(d.matrix[(r, 0)], 0.0);
        }
        for (r, v) in base.iter().enumerate() {
            assert_relative_eq!(d.matrix[(r, 1)], v * v);
        }
    }

    #[test]
    fn averaging_commutes_with_ensemble_concatenation() {
        let g = pgrid(8.0, 8);
        let t = TimeSpec::new(0.05, 0.01).unwrap();
        let model = crate::model::SpdeModel::new("m", 1.0, 1.0, vec![(1, 0.8)]).unwrap();
        let ic = crate::sim::InitialCondition::from_fn(|x| (x * 0.7).cos());
        let full = crate::sim::simulate_ensemble(&model, &g, &t, 6, &ic, 4).unwrap();
        let terms = generate_terms(3, 2, true);
        let d_full = build_dictionary(&full, &terms).unwrap();

        let mut acc_a = DictionaryAccumulator::new(&terms, &g, t.n_increments()).unwrap();
        let mut acc_b = DictionaryAccumulator::new(&terms, &g, t.n_increments()).unwrap();
        for s in 0..3 {
            acc_a.add_ensemble(full.ensemble(s)).unwrap();
        }
        for s in 3..6 {
            acc_b.add_ensemble(full.ensemble(s)).unwrap();
        }
        let da = acc_a.finish().unwrap();
        let db = acc_b.finish().unwrap();
        let merged = (da.matrix.clone() + db.matrix.clone()) * 0.5;
        let diff = (&merged - &d_full.matrix).abs().max();
        assert!(diff < 1e-12, "max diff {diff}");
    }

    #[test]
    fn constant_column_is_exactly_one() {
        let g = pgrid(8.0, 8);
        let t = TimeSpec::new(0.05, 0.01).unwrap();
        let model = crate::model::SpdeModel::new("m", 0.5, 1.0, vec![]).unwrap();
        let field = crate::sim::simulate_ensemble(
            &model,
            &g,
            &t,
            4,
            &crate::sim::InitialCondition::Constant(0.3),
            9,
        )
        .unwrap();
        let d = build_dictionary(&field, &generate_terms(2, 2, true)).unwrap();
        for r in 0..d.n_rows() {
            assert_eq!(d.matrix[(r, 0)], 1.0);
        }
    }

    #[test]
    fn standardize_round_trips_coefficients() {
        let g = pgrid(8.0, 8);
        let t = TimeSpec::new(0.05, 0.01).unwrap();
        let model = crate::model::SpdeModel::new("m", 1.0, 1.0, vec![(1, 1.0)]).unwrap();
        let field = crate::sim::simulate_ensemble(
            &model,
            &g,
            &t,
            4,
            &crate::sim::InitialCondition::from_fn(|x| (x * 0.9).sin()),
            2,
        )
        .unwrap();
        let raw = build_dictionary(&field, &generate_terms(2, 1, true)).unwrap();
        let mut std = raw.clone();
        std.standardize();
        // fit y = raw * beta on both parameterizations and compare predictions
        let beta_raw = nalgebra::DVector::from_vec(vec![0.5, 1.0, -2.0, 0.3, 0.1, -0.7]);
        let y = &raw.matrix * &beta_raw;
        let plain_ls = crate::stlsq::StlsqConfig {
            threshold: 0.0,
            ..Default::default()
        };
        let beta_std = crate::stlsq::stlsq(&std.matrix, &y, &plain_ls).unwrap().coef;
        let back = std.destandardize_coefficients(&beta_std);
        for k in 0..raw.n_terms() {
            assert_relative_eq!(back[k], beta_raw[k], epsilon = 1e-8);
        }
    }
}
