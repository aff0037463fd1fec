//! Convolutional kernels over patch grids.
//!
//! Two families:
//!
//! * `relu-cnngp` — the arc-cosine (ReLU dual activation) kernel
//!   `K_M(x, z) = (1/|S|) sum_u phi((B x[u])^T (B z[u]), ||B x[u]||, ||B z[u]||)`
//!   with `B = M^{1/2}`; deeper compositions window-sum the per-position
//!   values with a `q x q` stride-1 valid window and re-apply the dual
//!   activation, so `M` enters only at the first level.
//! * `conv-laplace` — `k(x, z) = sum_u exp(-L * ||x[u] - z[u]||_M)` with a
//!   fixed bandwidth (default `L = 10`).
//!
//! Both expose exact analytic gradients with respect to the query's patches.

use ndarray::Array2;
use rayon::prelude::*;

use crate::agop::matrix_sqrt;
use crate::error::{Error, Result};
use crate::feature::FeatureMatrix;
use crate::scalar::Scalar;
use crate::tensor::{extract_patches, ImageTensor, PatchGrid, PatchSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    ReluCnngp,
    ConvLaplace,
}

/// Which closed form of the ReLU dual activation to evaluate.
///
/// `SquaredDot` is the standard arc-cosine form with `sqrt(a^2 b^2 - dot^2)`;
/// `PrintedDot` uses `sqrt(a^2 b^2 - dot)` instead, kept selectable for
/// comparison only — it is dimensionally inconsistent and has no stable
/// gradient, so gradient paths require `SquaredDot`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualReluForm {
    #[default]
    SquaredDot,
    PrintedDot,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec<T> {
    pub family: KernelFamily,
    /// Compositional layers for `relu-cnngp`; always 1 for `conv-laplace`.
    pub depth: usize,
    /// Laplace bandwidth `L`.
    pub bandwidth: T,
    pub patch: PatchSpec,
    pub relu_form: DualReluForm,
}

pub const DEFAULT_LAPLACE_BANDWIDTH: f64 = 10.0;

impl<T: Scalar> KernelSpec<T> {
    pub fn relu_cnngp(depth: usize, patch: PatchSpec) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidArgument(
                "kernel depth must be at least 1".into(),
            ));
        }
        Ok(Self {
            family: KernelFamily::ReluCnngp,
            depth,
            bandwidth: T::from_f64(DEFAULT_LAPLACE_BANDWIDTH),
            patch,
            relu_form: DualReluForm::SquaredDot,
        })
    }

    pub fn conv_laplace(patch: PatchSpec) -> Self {
        Self {
            family: KernelFamily::ConvLaplace,
            depth: 1,
            bandwidth: T::from_f64(DEFAULT_LAPLACE_BANDWIDTH),
            patch,
            relu_form: DualReluForm::SquaredDot,
        }
    }

    pub fn with_bandwidth(mut self, bandwidth: T) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > T::zero()) {
            return Err(Error::InvalidArgument(
                "kernel bandwidth must be finite and positive".into(),
            ));
        }
        self.bandwidth = bandwidth;
        Ok(self)
    }

    pub fn with_relu_form(mut self, form: DualReluForm) -> Self {
        self.relu_form = form;
        self
    }

    pub fn with_depth(mut self, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidArgument(
                "kernel depth must be at least 1".into(),
            ));
        }
        if self.family == KernelFamily::ConvLaplace && depth != 1 {
            return Err(Error::InvalidArgument(
                "conv-laplace has no depth composition".into(),
            ));
        }
        self.depth = depth;
        Ok(self)
    }
}

// ---------------------------------------------------------------------------
// Dual activation
// ---------------------------------------------------------------------------

/// Arc-cosine degree-1 dual activation of ReLU:
/// `(1/pi) (dot (pi - arccos(rho)) + sqrt(na^2 nb^2 - dot^2))` with
/// `rho = dot / (na nb)` clamped to `[-1, 1]`. Zero if either norm is zero.
pub fn dual_relu<T: Scalar>(dot: T, norm_a: T, norm_b: T) -> Result<T> {
    dual_relu_with_form(dot, norm_a, norm_b, DualReluForm::SquaredDot)
}

pub fn dual_relu_with_form<T: Scalar>(
    dot: T,
    norm_a: T,
    norm_b: T,
    form: DualReluForm,
) -> Result<T> {
    if norm_a < T::zero() || norm_b < T::zero() {
        return Err(Error::InvalidArgument("norms must be nonnegative".into()));
    }
    if !(dot.is_finite() && norm_a.is_finite() && norm_b.is_finite()) {
        return Err(Error::InvalidArgument(
            "dual activation arguments must be finite".into(),
        ));
    }
    Ok(dual_relu_raw(dot, norm_a, norm_b, form))
}

#[inline]
fn dual_relu_raw<T: Scalar>(dot: T, norm_a: T, norm_b: T, form: DualReluForm) -> T {
    if norm_a == T::zero() || norm_b == T::zero() {
        return T::zero();
    }
    let prod = norm_a * norm_b;
    let rho = (dot / prod).max(-T::one()).min(T::one());
    let sqrt_arg = match form {
        DualReluForm::SquaredDot => (prod * prod - dot * dot).max(T::zero()),
        DualReluForm::PrintedDot => (prod * prod - dot).max(T::zero()),
    };
    let pi = T::pi();
    (dot * (pi - rho.acos()) + sqrt_arg.sqrt()) / pi
}

/// `d phi / d dot` at fixed norms, for the squared form:
/// `1 - arccos(rho)/pi`. Zero when either squared norm is zero.
#[inline]
fn dphi_ddot<T: Scalar>(dot: T, sxx: T, szz: T) -> T {
    if sxx <= T::zero() || szz <= T::zero() {
        return T::zero();
    }
    let rho = (dot / (sxx * szz).sqrt()).max(-T::one()).min(T::one());
    T::one() - rho.acos() / T::pi()
}

/// `d phi / d S_zz` at fixed `dot`, squared form:
/// `sqrt(sxx szz - dot^2) / (2 pi szz)`. Zero when either squared norm is zero.
#[inline]
fn dphi_dzz<T: Scalar>(dot: T, sxx: T, szz: T) -> T {
    if sxx <= T::zero() || szz <= T::zero() {
        return T::zero();
    }
    let arg = (sxx * szz - dot * dot).max(T::zero());
    arg.sqrt() / ((T::one() + T::one()) * T::pi() * szz)
}

// ---------------------------------------------------------------------------
// Prepared images and the kernel context
// ---------------------------------------------------------------------------

/// One image's patch grid after the `M^{1/2}` transform, with cached norms.
#[derive(Debug, Clone)]
pub struct PreparedImage<T> {
    rows: Array2<T>,
    sq_norms: Vec<T>,
    grid_height: usize,
    grid_width: usize,
    channels: usize,
    patch_size: usize,
}

impl<T: Scalar> PreparedImage<T> {
    pub fn n_positions(&self) -> usize {
        self.grid_height * self.grid_width
    }

    pub fn patch_dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.grid_height, self.grid_width)
    }

    pub fn rows(&self) -> &Array2<T> {
        &self.rows
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    fn flat(&self) -> &[T] {
        self.rows.as_slice().expect("prepared rows are contiguous")
    }
}

/// Per-position gradient coefficients for one kernel pair: in transformed
/// coordinates, `grad_{z[u]} K = c_other[u] * a[u] + c_self[u] * z[u]`.
#[derive(Debug, Clone)]
pub struct PairCoeffs<T> {
    pub c_other: Vec<T>,
    pub c_self: Vec<T>,
}

/// A kernel spec bound to one feature matrix: holds `B = M^{1/2}` and turns
/// images into [`PreparedImage`]s evaluable against each other.
#[derive(Debug, Clone)]
pub struct KernelContext<T> {
    spec: KernelSpec<T>,
    transform: Option<Array2<T>>,
    m_dim: usize,
}

impl<T: Scalar> KernelContext<T> {
    pub fn new(spec: &KernelSpec<T>, m: &FeatureMatrix<T>) -> Result<Self> {
        let transform = if m.is_identity() {
            None
        } else {
            Some(matrix_sqrt(m)?.into_entries())
        };
        Ok(Self {
            spec: *spec,
            transform,
            m_dim: m.dim(),
        })
    }

    pub fn spec(&self) -> &KernelSpec<T> {
        &self.spec
    }

    pub fn prepare(&self, x: &ImageTensor<T>) -> Result<PreparedImage<T>> {
        let grid = extract_patches(x, &self.spec.patch)?;
        self.prepare_grid(&grid)
    }

    /// Prepares a raw patch grid directly; callers who already live in patch
    /// space (finite-difference oracles, deep pipelines) enter here.
    pub fn prepare_grid(&self, grid: &PatchGrid<T>) -> Result<PreparedImage<T>> {
        if grid.patch_dim() != self.m_dim {
            return Err(Error::DimensionMismatch {
                context: "feature matrix dim vs patch dim",
                expected: grid.patch_dim(),
                got: self.m_dim,
            });
        }
        self.check_depth_fits(grid.grid_height(), grid.grid_width())?;
        let rows = match &self.transform {
            // grad/value use rows as B p; row layout keeps p^T B^T = (B p)^T.
            Some(b) => grid.rows().dot(&b.t()),
            None => grid.rows().clone(),
        };
        let sq_norms = rows
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| *v * *v).sum())
            .collect();
        Ok(PreparedImage {
            rows,
            sq_norms,
            grid_height: grid.grid_height(),
            grid_width: grid.grid_width(),
            channels: grid.channels(),
            patch_size: grid.patch_size(),
        })
    }

    fn check_depth_fits(&self, gh: usize, gw: usize) -> Result<()> {
        if self.spec.family == KernelFamily::ReluCnngp {
            let q = self.spec.patch.patch_size;
            let shrink = (self.spec.depth - 1) * (q - 1);
            if gh <= shrink || gw <= shrink {
                return Err(Error::ShapeMismatch(format!(
                    "kernel depth {} shrinks a {gh}x{gw} patch grid below 1x1",
                    self.spec.depth
                )));
            }
        }
        Ok(())
    }

    fn check_pair(&self, a: &PreparedImage<T>, b: &PreparedImage<T>) -> Result<()> {
        if a.grid_dims() != b.grid_dims() || a.patch_dim() != b.patch_dim() {
            return Err(Error::ShapeMismatch(format!(
                "kernel operands disagree: {:?}/{} vs {:?}/{}",
                a.grid_dims(),
                a.patch_dim(),
                b.grid_dims(),
                b.patch_dim()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, a: &PreparedImage<T>, b: &PreparedImage<T>) -> Result<T> {
        self.check_pair(a, b)?;
        Ok(match self.spec.family {
            KernelFamily::ConvLaplace => self.eval_laplace(a, b),
            KernelFamily::ReluCnngp => self.forward_relu(a, b).1,
        })
    }

    fn eval_laplace(&self, a: &PreparedImage<T>, b: &PreparedImage<T>) -> T {
        let d = a.patch_dim();
        let (fa, fb) = (a.flat(), b.flat());
        let l = self.spec.bandwidth;
        let mut sum = T::zero();
        for u in 0..a.n_positions() {
            let ra = &fa[u * d..(u + 1) * d];
            let rb = &fb[u * d..(u + 1) * d];
            let mut sq = T::zero();
            for k in 0..d {
                let diff = ra[k] - rb[k];
                sq += diff * diff;
            }
            sum += (-l * sq.sqrt()).exp();
        }
        sum
    }

    /// Per-level covariance maps of the ReLU composition and the kernel value.
    fn forward_relu(&self, a: &PreparedImage<T>, b: &PreparedImage<T>) -> (ReluLevels<T>, T) {
        let d = a.patch_dim();
        let (fa, fb) = (a.flat(), b.flat());
        let n = a.n_positions();
        let mut xz = Vec::with_capacity(n);
        for u in 0..n {
            let ra = &fa[u * d..(u + 1) * d];
            let rb = &fb[u * d..(u + 1) * d];
            let mut dot = T::zero();
            for k in 0..d {
                dot += ra[k] * rb[k];
            }
            xz.push(dot);
        }
        let mut levels = ReluLevels {
            maps: vec![LevelMaps {
                xz,
                xx: a.sq_norms.clone(),
                zz: b.sq_norms.clone(),
                dims: a.grid_dims(),
            }],
        };
        let q = self.spec.patch.patch_size;
        for _ in 1..self.spec.depth {
            let prev = levels.maps.last().expect("at least one level");
            // Lambda_xx = S_xx exactly (phi(t, sqrt t, sqrt t) = t), so the
            // diagonal maps window-sum without re-evaluating phi.
            let lambda = prev.lambda(self.spec.relu_form);
            let (xz, dims) = window_sum(&lambda, prev.dims, q);
            let (xx, _) = window_sum(&prev.xx, prev.dims, q);
            let (zz, _) = window_sum(&prev.zz, prev.dims, q);
            levels.maps.push(LevelMaps { xz, xx, zz, dims });
        }
        let top = levels.maps.last().expect("at least one level");
        let lambda = top.lambda(self.spec.relu_form);
        let mut sum = T::zero();
        for v in &lambda {
            sum += *v;
        }
        let value = sum / T::from_usize(lambda.len());
        (levels, value)
    }

    /// Analytic gradient coefficients of `K(a, b)` with respect to `b`'s
    /// transformed patches. Requires the squared dual-activation form.
    pub fn pair_patch_coeffs(
        &self,
        a: &PreparedImage<T>,
        b: &PreparedImage<T>,
    ) -> Result<PairCoeffs<T>> {
        self.check_pair(a, b)?;
        match self.spec.family {
            KernelFamily::ConvLaplace => Ok(self.laplace_coeffs(a, b)),
            KernelFamily::ReluCnngp => {
                if self.spec.relu_form != DualReluForm::SquaredDot {
                    return Err(Error::InvalidArgument(
                        "patch gradients require the squared dual-activation form".into(),
                    ));
                }
                Ok(self.relu_coeffs(a, b))
            }
        }
    }

    fn laplace_coeffs(&self, a: &PreparedImage<T>, b: &PreparedImage<T>) -> PairCoeffs<T> {
        let d = a.patch_dim();
        let (fa, fb) = (a.flat(), b.flat());
        let l = self.spec.bandwidth;
        let n = a.n_positions();
        let mut c_other = vec![T::zero(); n];
        let mut c_self = vec![T::zero(); n];
        for u in 0..n {
            let ra = &fa[u * d..(u + 1) * d];
            let rb = &fb[u * d..(u + 1) * d];
            let mut sq = T::zero();
            for k in 0..d {
                let diff = ra[k] - rb[k];
                sq += diff * diff;
            }
            let dist = sq.sqrt();
            // grad_b exp(-L d) = (L e^{-L d}/d)(a - b); defined 0 at d = 0.
            if dist > T::zero() {
                let w = l * (-l * dist).exp() / dist;
                c_other[u] = w;
                c_self[u] = -w;
            }
        }
        PairCoeffs { c_other, c_self }
    }

    fn relu_coeffs(&self, a: &PreparedImage<T>, b: &PreparedImage<T>) -> PairCoeffs<T> {
        let (levels, _) = self.forward_relu(a, b);
        let depth = levels.maps.len();
        let q = self.spec.patch.patch_size;
        let top = &levels.maps[depth - 1];
        let n_top = top.xz.len();
        let inv = T::one() / T::from_usize(n_top);
        let mut a_lambda = vec![inv; n_top];
        let mut a_zz_pass = vec![T::zero(); n_top];
        for level in (0..depth).rev() {
            let maps = &levels.maps[level];
            let n = maps.xz.len();
            let mut a_xz = vec![T::zero(); n];
            let mut a_zz = a_zz_pass;
            for u in 0..n {
                let al = a_lambda[u];
                if al != T::zero() {
                    a_xz[u] = al * dphi_ddot(maps.xz[u], maps.xx[u], maps.zz[u]);
                    a_zz[u] += al * dphi_dzz(maps.xz[u], maps.xx[u], maps.zz[u]);
                }
            }
            if level == 0 {
                let two = T::one() + T::one();
                let c_self = a_zz.iter().map(|v| *v * two).collect();
                return PairCoeffs {
                    c_other: a_xz,
                    c_self,
                };
            }
            let below = &levels.maps[level - 1];
            a_lambda = window_transpose(&a_xz, maps.dims, below.dims, q);
            a_zz_pass = window_transpose(&a_zz, maps.dims, below.dims, q);
        }
        unreachable!("loop returns at level 0");
    }

    /// Gradient rows (one per grid position) of `K(a, b)` with respect to
    /// `b`'s patches in the original, untransformed coordinates.
    pub fn gradient_rows(
        &self,
        a: &PreparedImage<T>,
        b: &PreparedImage<T>,
        coeffs: &PairCoeffs<T>,
    ) -> Array2<T> {
        let n = b.n_positions();
        let d = b.patch_dim();
        let mut out = Array2::<T>::zeros((n, d));
        let (fa, fb) = (a.flat(), b.flat());
        for u in 0..n {
            let (co, cs) = (coeffs.c_other[u], coeffs.c_self[u]);
            if co == T::zero() && cs == T::zero() {
                continue;
            }
            let ra = &fa[u * d..(u + 1) * d];
            let rb = &fb[u * d..(u + 1) * d];
            let mut row = out.row_mut(u);
            for k in 0..d {
                row[k] = co * ra[k] + cs * rb[k];
            }
        }
        self.to_original_coords(out)
    }

    /// Maps gradient rows from transformed back to original patch
    /// coordinates. Chain rule through `rows = B p`: `grad_p = B grad_rows`
    /// (`B` is symmetric), applied row-wise.
    pub fn to_original_coords(&self, rows: Array2<T>) -> Array2<T> {
        match &self.transform {
            Some(b_mat) => rows.dot(b_mat),
            None => rows,
        }
    }

    /// Pairwise kernel matrix between two prepared sets.
    pub fn cross_matrix(
        &self,
        rows: &[PreparedImage<T>],
        cols: &[PreparedImage<T>],
    ) -> Result<Array2<T>> {
        if rows.is_empty() || cols.is_empty() {
            return Err(Error::EmptyInput("kernel matrix image list"));
        }
        let data: Vec<Result<Vec<T>>> = rows
            .par_iter()
            .map(|a| cols.iter().map(|b| self.eval(a, b)).collect())
            .collect();
        let mut out = Array2::<T>::zeros((rows.len(), cols.len()));
        for (i, row) in data.into_iter().enumerate() {
            for (j, v) in row?.into_iter().enumerate() {
                out[[i, j]] = v;
            }
        }
        Ok(out)
    }

    /// Symmetric Gram matrix of one prepared set; the lower triangle mirrors
    /// the computed upper triangle exactly.
    pub fn gram(&self, set: &[PreparedImage<T>]) -> Result<Array2<T>> {
        if set.is_empty() {
            return Err(Error::EmptyInput("kernel gram image list"));
        }
        let n = set.len();
        let data: Vec<Result<Vec<T>>> = (0..n)
            .into_par_iter()
            .map(|i| (i..n).map(|j| self.eval(&set[i], &set[j])).collect())
            .collect();
        let mut out = Array2::<T>::zeros((n, n));
        for (i, row) in data.into_iter().enumerate() {
            for (off, v) in row?.into_iter().enumerate() {
                let j = i + off;
                out[[i, j]] = v;
                out[[j, i]] = v;
            }
        }
        Ok(out)
    }
}

struct LevelMaps<T> {
    xz: Vec<T>,
    xx: Vec<T>,
    zz: Vec<T>,
    dims: (usize, usize),
}

impl<T: Scalar> LevelMaps<T> {
    fn lambda(&self, form: DualReluForm) -> Vec<T> {
        let n = self.xz.len();
        let mut out = Vec::with_capacity(n);
        for u in 0..n {
            out.push(dual_relu_raw(
                self.xz[u],
                self.xx[u].max(T::zero()).sqrt(),
                self.zz[u].max(T::zero()).sqrt(),
                form,
            ));
        }
        out
    }
}

struct ReluLevels<T> {
    maps: Vec<LevelMaps<T>>,
}

/// Valid stride-1 `q x q` window sums over a `(gh, gw)` map.
fn window_sum<T: Scalar>(map: &[T], dims: (usize, usize), q: usize) -> (Vec<T>, (usize, usize)) {
    let (gh, gw) = dims;
    let (oh, ow) = (gh - q + 1, gw - q + 1);
    let mut out = vec![T::zero(); oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut s = T::zero();
            for wy in 0..q {
                for wx in 0..q {
                    s += map[(y + wy) * gw + (x + wx)];
                }
            }
            out[y * ow + x] = s;
        }
    }
    (out, (oh, ow))
}

/// Adjoint of [`window_sum`]: scatters each small-grid adjoint back over its
/// window on the large grid.
fn window_transpose<T: Scalar>(
    adj: &[T],
    small: (usize, usize),
    large: (usize, usize),
    q: usize,
) -> Vec<T> {
    let (sh, sw) = small;
    let (lh, lw) = large;
    debug_assert_eq!(sh + q - 1, lh);
    debug_assert_eq!(sw + q - 1, lw);
    let mut out = vec![T::zero(); lh * lw];
    for y in 0..sh {
        for x in 0..sw {
            let a = adj[y * sw + x];
            if a != T::zero() {
                for wy in 0..q {
                    for wx in 0..q {
                        out[(y + wy) * lw + (x + wx)] += a;
                    }
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Public free functions
// ---------------------------------------------------------------------------

pub fn kernel_value<T: Scalar>(
    x: &ImageTensor<T>,
    z: &ImageTensor<T>,
    m: &FeatureMatrix<T>,
    spec: &KernelSpec<T>,
) -> Result<T> {
    let ctx = KernelContext::new(spec, m)?;
    let a = ctx.prepare(x)?;
    let b = ctx.prepare(z)?;
    ctx.eval(&a, &b)
}

/// Kernel value with the operands given directly as raw patch grids.
pub fn kernel_value_grids<T: Scalar>(
    gx: &PatchGrid<T>,
    gz: &PatchGrid<T>,
    m: &FeatureMatrix<T>,
    spec: &KernelSpec<T>,
) -> Result<T> {
    let ctx = KernelContext::new(spec, m)?;
    let a = ctx.prepare_grid(gx)?;
    let b = ctx.prepare_grid(gz)?;
    ctx.eval(&a, &b)
}

pub fn kernel_matrix<T: Scalar>(
    xs: &[ImageTensor<T>],
    zs: &[ImageTensor<T>],
    m: &FeatureMatrix<T>,
    spec: &KernelSpec<T>,
) -> Result<Array2<T>> {
    if xs.is_empty() || zs.is_empty() {
        return Err(Error::EmptyInput("kernel matrix image list"));
    }
    let ctx = KernelContext::new(spec, m)?;
    let rows = prepare_all(&ctx, xs)?;
    let cols = prepare_all(&ctx, zs)?;
    ctx.cross_matrix(&rows, &cols)
}

/// Symmetric Gram matrix `K(X, X)`.
pub fn kernel_gram<T: Scalar>(
    xs: &[ImageTensor<T>],
    m: &FeatureMatrix<T>,
    spec: &KernelSpec<T>,
) -> Result<Array2<T>> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("kernel gram image list"));
    }
    let ctx = KernelContext::new(spec, m)?;
    let set = prepare_all(&ctx, xs)?;
    ctx.gram(&set)
}

pub(crate) fn prepare_all<T: Scalar>(
    ctx: &KernelContext<T>,
    xs: &[ImageTensor<T>],
) -> Result<Vec<PreparedImage<T>>> {
    xs.par_iter().map(|x| ctx.prepare(x)).collect()
}

/// Gradient of `kernel_value(model_point, query)` with respect to the query's
/// patches, one `c q^2` row per grid position, in original patch coordinates.
pub fn kernel_patch_gradient<T: Scalar>(
    model_point: &ImageTensor<T>,
    query: &ImageTensor<T>,
    m: &FeatureMatrix<T>,
    spec: &KernelSpec<T>,
) -> Result<PatchGrid<T>> {
    let gx = extract_patches(model_point, &spec.patch)?;
    let gz = extract_patches(query, &spec.patch)?;
    kernel_patch_gradient_grids(&gx, &gz, m, spec)
}

/// Grid-space variant of [`kernel_patch_gradient`]; the grid entries are
/// treated as independent variables, matching the finite-difference oracle.
pub fn kernel_patch_gradient_grids<T: Scalar>(
    gx: &PatchGrid<T>,
    gz: &PatchGrid<T>,
    m: &FeatureMatrix<T>,
    spec: &KernelSpec<T>,
) -> Result<PatchGrid<T>> {
    let ctx = KernelContext::new(spec, m)?;
    let a = ctx.prepare_grid(gx)?;
    let b = ctx.prepare_grid(gz)?;
    let coeffs = ctx.pair_patch_coeffs(&a, &b)?;
    let rows = ctx.gradient_rows(&a, &b, &coeffs);
    PatchGrid::new(
        gz.channels(),
        gz.patch_size(),
        gz.grid_height(),
        gz.grid_width(),
        rows,
    )
}
